//! L^q best approximation for `1 < q < ∞` by smoothed Newton with
//! continuation in `q` and in the smoothing parameter.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::fespace::{nodal_overshoot, FEFunction, OvershootReport, P1Space, TargetFunction};
use crate::quadrature::integrate;
use crate::signsplit::{assemble, Kernel};
use std::sync::Arc;

/// Knobs of [`solve_lq`].
#[derive(Debug, Clone, PartialEq)]
pub struct SolverOptions {
    pub q_target: f64,
    /// Continuation sequence starting at 2; `None` uses [`default_q_path`].
    pub q_path: Option<Vec<f64>>,
    /// Smoothing parameters, decreasing. An empty schedule skips smoothing.
    pub eps_schedule: Vec<f64>,
    /// Tolerance on `max |F|`.
    pub newton_tol: f64,
    /// Newton iterations per stage.
    pub max_iters: usize,
    /// Backtracking factor.
    pub damping: f64,
    pub max_halvings: usize,
    /// Frozen-Jacobian iterations on the unsmoothed residual.
    pub polish_iters: usize,
}

impl SolverOptions {
    pub fn new(q_target: f64) -> Self {
        SolverOptions {
            q_target,
            q_path: None,
            eps_schedule: vec![1e-2, 1e-3, 1e-4, 1e-6],
            newton_tol: 1e-10,
            max_iters: 50,
            damping: 0.5,
            max_halvings: 30,
            polish_iters: 20,
        }
    }
}

/// Geometric continuation from `from` to `to` in `q − 1`: factor 0.7
/// downward, 1.4 upward, finishing exactly at `to`.
pub fn q_path_between(from: f64, to: f64, factor_down: f64) -> Vec<f64> {
    let mut path = vec![from];
    let mut q = from;
    if to < from {
        loop {
            let next = 1.0 + factor_down * (q - 1.0);
            if next <= to + 1e-3 {
                break;
            }
            path.push(next);
            q = next;
        }
    } else if to > from {
        loop {
            let next = 1.0 + 1.4 * (q - 1.0);
            if next >= to - 1e-3 {
                break;
            }
            path.push(next);
            q = next;
        }
    }
    if to != from {
        path.push(to);
    }
    path
}

/// Default path from 2 to `q_target`.
pub fn default_q_path(q_target: f64) -> Vec<f64> {
    q_path_between(2.0, q_target, 0.7)
}

/// Work done in one continuation stage.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StageReport {
    pub q: f64,
    /// Smoothing parameter, `None` for the unsmoothed polish.
    pub eps: Option<f64>,
    pub iterations: usize,
    pub residual: f64,
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub coeffs: FEFunction,
    /// `max |F|` of the unsmoothed residual at `coeffs`.
    pub residual_norm: f64,
    pub stages: Vec<StageReport>,
    /// `residual_norm ≤ newton_tol`, or the final stage stopped at round-off.
    pub converged: bool,
    /// The last stage ended because the Newton correction fell below the
    /// round-off of the coefficients rather than by meeting the tolerance.
    pub roundoff_limited: bool,
}

/// Consistent P1 mass matrix restricted to the free nodes.
pub fn mass_matrix(space: &P1Space) -> DMatrix<f64> {
    let nf = space.num_free();
    let mut m = DMatrix::zeros(nf, nf);
    for e in 0..space.num_elements() {
        let nodes = space.element_nodes(e);
        let meas = space.mesh().measure(e);
        let (diag, off) = if nodes.len() == 2 { (meas / 3.0, meas / 6.0) } else { (meas / 6.0, meas / 12.0) };
        for (a, &va) in nodes.iter().enumerate() {
            let Some(i) = space.free_index(va) else { continue };
            for (b, &vb) in nodes.iter().enumerate() {
                if let Some(j) = space.free_index(vb) {
                    m[(i, j)] += if a == b { diag } else { off };
                }
            }
        }
    }
    m
}

/// `∫ (u − u_h) φ_i` per free node by exact P1 integration (adaptive
/// quadrature for the target when it is not piecewise affine).
pub fn l2_residual(f: &FEFunction, u: &TargetFunction) -> Result<Vec<f64>> {
    let space = f.space();
    let mut out = vec![0.0; space.num_free()];
    for e in 0..space.num_elements() {
        let nodes = space.element_nodes(e);
        let meas = space.mesh().measure(e);
        let uh: Vec<f64> = nodes.iter().map(|&v| f.coeffs()[v]).collect();
        let n = nodes.len();
        let denom = if n == 2 { 6.0 } else { 12.0 };
        // ∫ g φ_i = meas/denom (Σ g + g_i) for affine g
        let uh_sum: f64 = uh.iter().sum();
        let load: Vec<f64> = if u.is_piecewise_affine() {
            let uv = u.element_affine_values(space, e)?;
            let s: f64 = uv.iter().sum();
            uv.iter().map(|ui| meas / denom * (s + ui)).collect()
        } else {
            if n != 2 {
                return Err(Error::Unsupported("smooth targets are supported in 1D only".into()));
            }
            let pts = space.element_points(e);
            let (a, b) = (pts[0][0], pts[1][0]);
            let tol = 1e-14 * (b - a);
            vec![
                integrate(|x| u.eval(x, 0.0) * (b - x) / (b - a), a, b, tol),
                integrate(|x| u.eval(x, 0.0) * (x - a) / (b - a), a, b, tol),
            ]
        };
        for k in 0..n {
            if let Some(i) = space.free_index(nodes[k]) {
                out[i] += load[k] - meas / denom * (uh_sum + uh[k]);
            }
        }
    }
    Ok(out)
}

/// Constrained L² projection by one linear solve.
pub fn solve_l2(space: &Arc<P1Space>, u: &TargetFunction) -> Result<FEFunction> {
    let lift = FEFunction::lift(space);
    if space.num_free() == 0 {
        return Ok(lift);
    }
    let rhs = DVector::from_vec(l2_residual(&lift, u)?);
    let m = mass_matrix(space);
    let x = m
        .cholesky()
        .ok_or_else(|| Error::Numerical("mass matrix is not positive definite".into()))?
        .solve(&rhs);
    FEFunction::from_free(space, x.as_slice())
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

fn residual(f: &FEFunction, u: &TargetFunction, kernel: &Kernel) -> Result<Vec<f64>> {
    Ok(assemble(f, u, kernel, false)?.residual)
}

fn shifted(f: &FEFunction, base: &[f64], step: &DVector<f64>, lambda: f64) -> Result<FEFunction> {
    let vals: Vec<f64> = base.iter().zip(step.iter()).map(|(c, d)| c + lambda * d).collect();
    FEFunction::from_free(f.space(), &vals)
}

/// Backtracking step along `step`; returns the new function and its
/// residual norm, or `None` when no trial decreases `max |F|`.
fn line_search(
    f: &FEFunction,
    u: &TargetFunction,
    kernel: &Kernel,
    step: &DVector<f64>,
    norm: f64,
    mask: Option<&[bool]>,
    opts: &SolverOptions,
) -> Result<Option<(FEFunction, f64)>> {
    let base = f.free_values();
    let mut lambda = 1.0;
    for _ in 0..=opts.max_halvings {
        let trial = shifted(f, &base, step, lambda)?;
        let n = masked_max(&residual(&trial, u, kernel)?, mask);
        if n < norm {
            return Ok(Some((trial, n)));
        }
        lambda *= opts.damping;
    }
    Ok(None)
}

fn masked_max(v: &[f64], mask: Option<&[bool]>) -> f64 {
    match mask {
        None => max_abs(v),
        Some(m) => v.iter().zip(m).filter(|(_, &a)| a).fold(0.0, |acc, (x, _)| acc.max(x.abs())),
    }
}

fn newton_step(jac: &DMatrix<f64>, res: &[f64]) -> Result<DVector<f64>> {
    if jac.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numerical("non-finite Jacobian entry".into()));
    }
    let rhs = -DVector::from_column_slice(res);
    jac.clone().lu().solve(&rhs).ok_or_else(|| Error::Numerical("singular Jacobian".into()))
}

/// A correction this small that still fails to decrease `max |F|` means the
/// residual is dominated by components that round-off keeps from improving.
const STALL_STEP: f64 = 1e-11;

/// True when `step` cannot move `c` by more than a few units of round-off.
/// Components whose Newton update is still resolvable in floating point.
/// Near q = 1 the residual behaves like |r|^(q-1) around the optimum, so a
/// nodal value can sit within an ulp of its root while its residual stays
/// large; such components are excluded from the line-search merit.
fn resolvable(step: &DVector<f64>, c: &[f64]) -> Vec<bool> {
    step.iter().zip(c).map(|(d, x)| d.abs() > STALL_STEP * (1.0 + x.abs())).collect()
}

/// Outcome of a Newton run.
struct NewtonRun {
    iters: usize,
    norm: f64,
    jacobian: DMatrix<f64>,
    roundoff_limited: bool,
}

/// Newton on one kernel. Stops when `max |F| ≤ tol`, or when the Newton
/// correction drops below the round-off of the coefficients: as `q → 1`
/// the residual can be so steep in a nodal value that no floating-point
/// neighbour of the iterate has a smaller residual.
fn newton(f: &mut FEFunction, u: &TargetFunction, kernel: &Kernel, opts: &SolverOptions) -> Result<NewtonRun> {
    for it in 0..=opts.max_iters {
        let asm = assemble(f, u, kernel, true)?;
        let norm = max_abs(&asm.residual);
        let jacobian = asm.jacobian.unwrap();
        if norm <= opts.newton_tol {
            return Ok(NewtonRun { iters: it, norm, jacobian, roundoff_limited: false });
        }
        if it == opts.max_iters {
            break;
        }
        let step = newton_step(&jacobian, &asm.residual)?;
        let mask = resolvable(&step, &f.free_values());
        let stuck = asm.residual.iter().zip(&mask).all(|(r, &m)| !m || r.abs() <= opts.newton_tol);
        if stuck {
            return Ok(NewtonRun { iters: it, norm, jacobian, roundoff_limited: true });
        }
        let active = masked_max(&asm.residual, Some(&mask));
        match line_search(f, u, kernel, &step, active, Some(&mask), opts)? {
            Some((g, _)) => *f = g,
            None if step.amax() <= STALL_STEP * (1.0 + max_abs(&f.free_values())) => {
                return Ok(NewtonRun { iters: it, norm, jacobian, roundoff_limited: true });
            }
            None => break,
        }
    }
    let norm = max_abs(&residual(f, u, kernel)?);
    let (q, eps) = match *kernel {
        Kernel::SignedPower { q } => (q, None),
        Kernel::Smoothed { q, eps } => (q, Some(eps)),
    };
    Err(Error::NonConvergence { q, eps, iters: opts.max_iters, residual: norm })
}

/// Frozen-Jacobian iterations on the unsmoothed residual, falling back to
/// Newton with the exact Jacobian when they stall.
fn polish(
    f: &mut FEFunction,
    u: &TargetFunction,
    q: f64,
    frozen: Option<&DMatrix<f64>>,
    opts: &SolverOptions,
) -> Result<(usize, f64, bool)> {
    let kernel = Kernel::SignedPower { q };
    let mut norm = max_abs(&residual(f, u, &kernel)?);
    let mut iters = 0;
    if let Some(jac) = frozen {
        let lu = jac.clone().lu();
        while norm > opts.newton_tol && iters < opts.polish_iters {
            let res = residual(f, u, &kernel)?;
            let Some(step) = lu.solve(&-DVector::from_column_slice(&res)) else { break };
            iters += 1;
            match line_search(f, u, &kernel, &step, norm, None, opts)? {
                Some((g, n)) => {
                    *f = g;
                    norm = n;
                }
                None => break,
            }
        }
    }
    if norm <= opts.newton_tol {
        return Ok((iters, norm, false));
    }
    let run = newton(f, u, &kernel, opts)?;
    Ok((iters + run.iters, run.norm, run.roundoff_limited))
}

/// Runs the continuation along `path` (whose first entry is the q at which
/// `start` is already optimal).
pub fn continue_along(
    start: FEFunction,
    u: &TargetFunction,
    path: &[f64],
    opts: &SolverOptions,
) -> Result<SolveReport> {
    let mut f = start;
    let mut stages = Vec::new();
    let mut roundoff_limited = false;
    for &q in path.iter().skip(1) {
        if !(q > 1.0) || !q.is_finite() {
            return Err(Error::Domain(format!("q = {q} must lie in (1, ∞)")));
        }
        let mut frozen = None;
        for &eps in &opts.eps_schedule {
            let kernel = Kernel::Smoothed { q, eps };
            let run = newton(&mut f, u, &kernel, opts)?;
            stages.push(StageReport { q, eps: Some(eps), iterations: run.iters, residual: run.norm });
            frozen = Some(run.jacobian);
        }
        let (iters, norm, limited) = polish(&mut f, u, q, frozen.as_ref(), opts)?;
        stages.push(StageReport { q, eps: None, iterations: iters, residual: norm });
        roundoff_limited = limited;
    }
    let q_end = *path.last().unwrap();
    let residual_norm = max_abs(&residual(&f, u, &Kernel::SignedPower { q: q_end })?);
    Ok(SolveReport {
        coeffs: f,
        residual_norm,
        stages,
        converged: residual_norm <= opts.newton_tol || roundoff_limited,
        roundoff_limited,
    })
}

/// L^q best approximation of `u` in `space`.
pub fn solve_lq(space: &Arc<P1Space>, u: &TargetFunction, opts: &SolverOptions) -> Result<SolveReport> {
    let q = opts.q_target;
    if !(q > 1.0) || !q.is_finite() {
        return Err(Error::Domain(format!("q = {q} must lie in (1, ∞)")));
    }
    let path = match &opts.q_path {
        Some(p) => {
            if p.first() != Some(&2.0) || p.last() != Some(&q) {
                return Err(Error::InvalidProblem("q_path must start at 2 and end at q_target".into()));
            }
            p.clone()
        }
        None => default_q_path(q),
    };
    let start = solve_l2(space, u)?;
    continue_along(start, u, &path, opts)
}

/// One row of a q-sweep.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub q: f64,
    pub coeffs: FEFunction,
    pub overshoot: OvershootReport,
}

impl SweepRow {
    pub fn max_overshoot(&self) -> f64 {
        self.overshoot.max_over
    }

    /// Largest nodal deviation in either direction.
    pub fn max_nodal_error(&self) -> f64 {
        self.overshoot.max_over.max(self.overshoot.max_under)
    }
}

/// A sweep that stopped early.
#[derive(Debug, Clone)]
pub struct PartialSweep {
    pub rows: Vec<SweepRow>,
    pub failed_q: f64,
    pub error: Error,
}

/// Warm-started continuation through `q_list` (descending toward 1).
pub fn sweep_q(
    space: &Arc<P1Space>,
    u: &TargetFunction,
    q_list: &[f64],
) -> std::result::Result<Vec<SweepRow>, PartialSweep> {
    let opts = SolverOptions::new(2.0);
    let mut rows: Vec<SweepRow> = Vec::with_capacity(q_list.len());
    let fail = |rows: Vec<SweepRow>, q: f64, error: Error| Err(PartialSweep { rows, failed_q: q, error });
    let mut current = match solve_l2(space, u) {
        Ok(f) => f,
        Err(e) => return fail(rows, q_list.first().copied().unwrap_or(2.0), e),
    };
    let mut q_prev = 2.0;
    for &q in q_list {
        let attempt = |factor: f64| {
            let path = q_path_between(q_prev, q, factor);
            continue_along(current.clone(), u, &path, &opts)
        };
        // retry once on a denser path
        let report = match attempt(0.7).or_else(|_| attempt(0.9)) {
            Ok(r) => r,
            Err(e) => return fail(rows, q, e),
        };
        current = report.coeffs;
        q_prev = q;
        rows.push(SweepRow { q, overshoot: nodal_overshoot(&current, u), coeffs: current.clone() });
    }
    Ok(rows)
}

/// Rows used by [`extrapolate_to_l1`].
pub const EXTRAPOLATION_Q_MAX: f64 = 1.3;

/// Default descending q list for sweeps feeding [`extrapolate_to_l1`]. The
/// coefficients vary fastest in the last few hundredths above 1, so the
/// list is dense there.
pub const L1_SWEEP_Q: [f64; 20] = [
    2.0, 1.9, 1.8, 1.7, 1.6, 1.5, 1.4, 1.3, 1.2, 1.15, 1.1, 1.07, 1.05, 1.03, 1.02, 1.015, 1.01, 1.007,
    1.005, 1.003,
];

/// Linear extrapolation in `q − 1` of each free coefficient to `q = 1`,
/// from the two sweep rows with the smallest `q` (at least three rows with
/// `q ≤ 1.3` are required). The result is a candidate, not a certified
/// optimum.
pub fn extrapolate_to_l1(rows: &[SweepRow]) -> Result<FEFunction> {
    let mut sel: Vec<&SweepRow> = rows.iter().filter(|r| r.q <= EXTRAPOLATION_Q_MAX && r.q > 1.0).collect();
    if sel.len() < 3 {
        return Err(Error::Precondition(format!(
            "extrapolation needs at least 3 rows with 1 < q <= {EXTRAPOLATION_Q_MAX}, got {}",
            sel.len()
        )));
    }
    sel.sort_by(|a, b| a.q.total_cmp(&b.q));
    let (a, b) = (sel[0], sel[1]);
    let (ta, tb) = (a.q - 1.0, b.q - 1.0);
    let (ca, cb) = (a.coeffs.free_values(), b.coeffs.free_values());
    let vals: Vec<f64> = ca.iter().zip(&cb).map(|(&ya, &yb)| ya - ta * (yb - ya) / (tb - ta)).collect();
    FEFunction::from_free(a.coeffs.space(), &vals)
}
