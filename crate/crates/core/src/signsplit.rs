//! Sign-aware integration of `K(u − u_h)·φ` over P1 elements.
//!
//! When the target is affine on an element the residual `r = u − u_h` is
//! affine too. Each element is cut along `r = 0` into convex pieces of one
//! sign, and each piece is fanned into triangles. A triangle is split
//! further at the level of its middle vertex into two triangles whose bases
//! lie on a level line of `r`. On such a triangle the integral of `K(r)·w`
//! for polynomial `w` collapses to a one-dimensional integral over the
//! level parameter, which for `K(r) = sgn(r)|r|^{q−1}` has a closed form.
//!
//! For smooth one-dimensional targets the roots of `r` are bracketed per
//! element and refined by bisection; each sign piece is then integrated by
//! adaptive Gauss–Kronrod.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::fespace::{FEFunction, P1Space, TargetFunction};
use crate::mesh::{Mesh, Point};
use crate::quadrature::{gl16_unit, integrate_gk};

/// Sign of the residual on the interior of a region.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Sign {
    Pos,
    Neg,
    Zero,
}

impl Sign {
    pub fn value(self) -> f64 {
        match self {
            Sign::Pos => 1.0,
            Sign::Neg => -1.0,
            Sign::Zero => 0.0,
        }
    }
}

/// Sign of `x` with `sgn(0) = 0`.
pub fn sgn(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// A piece of an element on which the residual has one sign.
#[derive(Debug, Clone, PartialEq)]
pub struct SubRegion {
    pub sign: Sign,
    /// Vertices in barycentric coordinates of the parent element
    /// (third entry is 0 in 1D). Counter-clockwise in 2D.
    pub bary: Vec<[f64; 3]>,
    /// The same vertices in physical coordinates.
    pub points: Vec<Point>,
    /// Residual at the vertices.
    pub r: Vec<f64>,
    /// Length or area.
    pub measure: f64,
}

/// Decomposition of one element by the sign of the residual.
#[derive(Debug, Clone, PartialEq)]
pub struct ElementPartition {
    pub element: usize,
    pub measure: f64,
    pub regions: Vec<SubRegion>,
}

impl ElementPartition {
    pub fn is_zero(&self) -> bool {
        self.regions.len() == 1 && self.regions[0].sign == Sign::Zero
    }
}

pub type SignPartition = Vec<ElementPartition>;

/// The function of the residual being integrated against test functions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Kernel {
    /// `sgn(r)|r|^{q−1}`.
    SignedPower { q: f64 },
    /// `r (r² + ε²)^{(q−2)/2}`.
    Smoothed { q: f64, eps: f64 },
}

impl Kernel {
    pub fn q(&self) -> f64 {
        match *self {
            Kernel::SignedPower { q } | Kernel::Smoothed { q, .. } => q,
        }
    }

    pub fn value(&self, r: f64) -> f64 {
        match *self {
            Kernel::SignedPower { q } => {
                if q == 1.0 {
                    sgn(r)
                } else {
                    sgn(r) * r.abs().powf(q - 1.0)
                }
            }
            Kernel::Smoothed { q, eps } => r * (r * r + eps * eps).powf(0.5 * (q - 2.0)),
        }
    }

    /// `dK/dr`.
    pub fn derivative(&self, r: f64) -> f64 {
        match *self {
            Kernel::SignedPower { q } => {
                if q == 1.0 {
                    0.0
                } else {
                    (q - 1.0) * r.abs().powf(q - 2.0)
                }
            }
            Kernel::Smoothed { q, eps } => {
                let m = r * r + eps * eps;
                m.powf(0.5 * (q - 2.0)) + (q - 2.0) * r * r * m.powf(0.5 * (q - 4.0))
            }
        }
    }

    /// `∫₀¹ G(s0 + t(s1 − s0)) t^k dt` for `k = 0..=3`, where `G` is the
    /// kernel (or its derivative) and `sign` is the sign of `r` on the
    /// segment.
    fn moments(&self, derivative: bool, sign: Sign, s0: f64, s1: f64) -> [f64; 4] {
        match *self {
            Kernel::SignedPower { q } => {
                let (a, b) = match sign {
                    Sign::Pos => (s0.max(0.0), s1.max(0.0)),
                    Sign::Neg => ((-s0).max(0.0), (-s1).max(0.0)),
                    Sign::Zero => (0.0, 0.0),
                };
                if derivative {
                    if q == 1.0 {
                        return [0.0; 4];
                    }
                    let m = power_moments(a, b - a, q - 2.0);
                    m.map(|x| (q - 1.0) * x)
                } else {
                    if sign == Sign::Zero {
                        return [0.0; 4];
                    }
                    let m = power_moments(a, b - a, q - 1.0);
                    let sv = sign.value();
                    m.map(|x| sv * x)
                }
            }
            Kernel::Smoothed { .. } => {
                if s0 == s1 {
                    let g = if derivative { self.derivative(s0) } else { self.value(s0) };
                    return [g, g / 2.0, g / 3.0, g / 4.0];
                }
                let d = s1 - s0;
                let f = |t: f64| {
                    let s = s0 + t * d;
                    let g = if derivative { self.derivative(s) } else { self.value(s) };
                    [g, g * t, g * t * t, g * t * t * t]
                };
                let scale = if derivative {
                    self.derivative(0.0).max(self.derivative(s0.abs().max(s1.abs())))
                } else {
                    self.value(s0.abs().max(s1.abs()))
                };
                let tol = 1e-14 * scale.abs().max(1e-300);
                // split where the smoothing is sharpest
                let t0 = -s0 / d;
                if t0 > 0.0 && t0 < 1.0 {
                    let l = integrate_gk(f, 0.0, t0, 0.5 * tol, 2000).value;
                    let r = integrate_gk(f, t0, 1.0, 0.5 * tol, 2000).value;
                    [l[0] + r[0], l[1] + r[1], l[2] + r[2], l[3] + r[3]]
                } else {
                    integrate_gk(f, 0.0, 1.0, tol, 2000).value
                }
            }
        }
    }
}

fn binom(n: usize, k: usize) -> f64 {
    const T: [[f64; 4]; 4] = [[1.0, 0.0, 0.0, 0.0], [1.0, 1.0, 0.0, 0.0], [1.0, 2.0, 1.0, 0.0], [1.0, 3.0, 3.0, 1.0]];
    T[n][k]
}

/// `∫₀¹ (lo + τD)^p τ^k dτ` for `k = 0..=3`, `lo ≥ 0`, `D > 0`, closed form.
fn power_moments_increasing(lo: f64, d: f64, p: f64) -> [f64; 4] {
    let hi = lo + d;
    let mut diff = [0.0; 4];
    for (j, dj) in diff.iter_mut().enumerate() {
        let e = p + j as f64 + 1.0;
        *dj = (hi.powf(e) - if lo > 0.0 { lo.powf(e) } else { 0.0 }) / e;
    }
    let mut out = [0.0; 4];
    for (k, ok) in out.iter_mut().enumerate() {
        let mut s = 0.0;
        for (j, dj) in diff.iter().enumerate().take(k + 1) {
            s += binom(k, j) * (-lo).powi((k - j) as i32) * dj;
        }
        *ok = s / d.powi(k as i32 + 1);
    }
    out
}

/// `∫₀¹ (a + τd)^p τ^k dτ` for `k = 0..=3`, where `a ≥ 0` and `a + d ≥ 0`.
pub fn power_moments(a: f64, d: f64, p: f64) -> [f64; 4] {
    if p == 0.0 {
        return [1.0, 0.5, 1.0 / 3.0, 0.25];
    }
    let b = (a + d).max(0.0);
    let (m, big) = (a.min(b), a.max(b));
    if big == 0.0 {
        return if p > 0.0 { [0.0; 4] } else { [f64::INFINITY; 4] };
    }
    if m >= 0.5 * big {
        let (x, w) = gl16_unit();
        let mut out = [0.0; 4];
        for i in 0..16 {
            let g = w[i] * (a + x[i] * (b - a)).powf(p);
            out[0] += g;
            out[1] += g * x[i];
            out[2] += g * x[i] * x[i];
            out[3] += g * x[i] * x[i] * x[i];
        }
        return out;
    }
    if b > a {
        return power_moments_increasing(a, b - a, p);
    }
    // reversed direction: substitute τ → 1 − τ
    let l = power_moments_increasing(b, a - b, p);
    let mut out = [0.0; 4];
    for (k, ok) in out.iter_mut().enumerate() {
        for (i, li) in l.iter().enumerate().take(k + 1) {
            let s = if i % 2 == 0 { 1.0 } else { -1.0 };
            *ok += s * binom(k, i) * li;
        }
    }
    out
}

fn bary_point(points: &[Point], l: &[f64; 3]) -> Point {
    let mut p = [0.0, 0.0];
    for (k, pk) in points.iter().enumerate() {
        p[0] += l[k] * pk[0];
        p[1] += l[k] * pk[1];
    }
    p
}

fn bary_area(a: &[f64; 3], b: &[f64; 3], c: &[f64; 3]) -> f64 {
    // area fraction relative to the parent element
    (b[1] - a[1]) * (c[2] - a[2]) - (c[1] - a[1]) * (b[2] - a[2])
}

fn polygon_fraction(poly: &[([f64; 3], f64)]) -> f64 {
    (1..poly.len().saturating_sub(1)).map(|k| bary_area(&poly[0].0, &poly[k].0, &poly[k + 1].0)).sum()
}

fn clip(tri: &[([f64; 3], f64)], sign: f64) -> Vec<([f64; 3], f64)> {
    let n = tri.len();
    let mut out: Vec<([f64; 3], f64)> = Vec::with_capacity(n + 2);
    for i in 0..n {
        let (lc, sc) = tri[i];
        let (ln, sn) = tri[(i + 1) % n];
        let (vc, vn) = (sign * sc, sign * sn);
        if vc >= 0.0 {
            out.push((lc, sc));
        }
        if (vc > 0.0 && vn < 0.0) || (vc < 0.0 && vn > 0.0) {
            let t = sc / (sc - sn);
            let mut l = [0.0; 3];
            for k in 0..3 {
                l[k] = lc[k] + t * (ln[k] - lc[k]);
            }
            out.push((l, 0.0));
        }
    }
    out.dedup_by(|a, b| a.0 == b.0);
    if out.len() > 1 && out[0].0 == out[out.len() - 1].0 {
        out.pop();
    }
    out
}

fn region_2d(points: &[Point], area: f64, sign: Sign, poly: Vec<([f64; 3], f64)>) -> SubRegion {
    let frac = polygon_fraction(&poly);
    SubRegion {
        sign,
        points: poly.iter().map(|(l, _)| bary_point(points, l)).collect(),
        r: poly.iter().map(|(_, s)| *s).collect(),
        bary: poly.into_iter().map(|(l, _)| l).collect(),
        measure: frac * area,
    }
}

/// Splits an element by the sign of the affine residual with vertex values
/// `r`. The whole element is `Zero` when `max |r| ≤ tol`.
pub fn partition_element(points: &[Point], r: &[f64], tol: f64) -> ElementPartition {
    assert!(points.len() == r.len() && (points.len() == 2 || points.len() == 3));
    let unit: [[f64; 3]; 3] = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    let zero = r.iter().all(|x| x.abs() <= tol);
    let measure = if points.len() == 2 {
        points[1][0] - points[0][0]
    } else {
        crate::mesh::signed_area(points[0], points[1], points[2])
    };
    let whole = |sign: Sign| SubRegion {
        sign,
        bary: unit[..points.len()].to_vec(),
        points: points.to_vec(),
        r: r.to_vec(),
        measure,
    };
    let regions = if zero {
        vec![whole(Sign::Zero)]
    } else if r.iter().all(|&x| x >= 0.0) {
        vec![whole(Sign::Pos)]
    } else if r.iter().all(|&x| x <= 0.0) {
        vec![whole(Sign::Neg)]
    } else if points.len() == 2 {
        let t = r[0] / (r[0] - r[1]);
        let xm = points[0][0] + t * (points[1][0] - points[0][0]);
        let mid = [1.0 - t, t, 0.0];
        let s0 = if r[0] > 0.0 { Sign::Pos } else { Sign::Neg };
        let s1 = if r[1] > 0.0 { Sign::Pos } else { Sign::Neg };
        vec![
            SubRegion {
                sign: s0,
                bary: vec![unit[0], mid],
                points: vec![points[0], [xm, 0.0]],
                r: vec![r[0], 0.0],
                measure: xm - points[0][0],
            },
            SubRegion {
                sign: s1,
                bary: vec![mid, unit[1]],
                points: vec![[xm, 0.0], points[1]],
                r: vec![0.0, r[1]],
                measure: points[1][0] - xm,
            },
        ]
    } else {
        let tri: Vec<([f64; 3], f64)> = (0..3).map(|k| (unit[k], r[k])).collect();
        let mut out = Vec::with_capacity(2);
        // start with the sign of the first nonzero vertex so that r -> -r
        // yields the mirrored partition in the same order
        let first = r.iter().copied().find(|&x| x != 0.0).unwrap_or(0.0);
        let order = if first > 0.0 {
            [(1.0, Sign::Pos), (-1.0, Sign::Neg)]
        } else {
            [(-1.0, Sign::Neg), (1.0, Sign::Pos)]
        };
        for (sv, sign) in order {
            let poly = clip(&tri, sv);
            if poly.len() >= 3 && polygon_fraction(&poly) > 0.0 {
                out.push(region_2d(points, measure, sign, poly));
            }
        }
        out
    };
    let part = ElementPartition { element: 0, measure, regions };
    debug_assert!(
        {
            let s: f64 = part.regions.iter().map(|g| g.measure).sum();
            (s - measure).abs() <= 1e-13 * measure
        },
        "partition does not conserve measure"
    );
    part
}

/// Element contributions: `∫ K(r) φ_k` and `∫ K'(r) φ_k φ_l` for the
/// element's local basis functions.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ElementIntegrals {
    pub load: [f64; 3],
    pub mass: [[f64; 3]; 3],
}

// Accumulates a triangle with apex P and a base on a level line of r.
fn level_triangle(
    acc: &mut ElementIntegrals,
    kernel: &Kernel,
    sign: Sign,
    area: f64,
    apex: (&[f64; 3], f64),
    base: (&[f64; 3], &[f64; 3], f64),
    with_mass: bool,
) {
    if area <= 0.0 {
        return;
    }
    let (lp, sp) = apex;
    let (l0, l1, se) = base;
    let m = kernel.moments(false, sign, sp, se);
    let mut b0 = [0.0; 3];
    let mut b1 = [0.0; 3];
    let mut bb = [0.0; 3];
    for i in 0..3 {
        b0[i] = l0[i] - lp[i];
        b1[i] = l1[i] - lp[i];
        bb[i] = 0.5 * (b0[i] + b1[i]);
        acc.load[i] += 2.0 * area * (lp[i] * m[1] + bb[i] * m[2]);
    }
    if with_mass {
        let md = kernel.moments(true, sign, sp, se);
        for i in 0..3 {
            for j in 0..3 {
                let c = (2.0 * b0[i] * b0[j] + b0[i] * b1[j] + b1[i] * b0[j] + 2.0 * b1[i] * b1[j]) / 6.0;
                acc.mass[i][j] += 2.0
                    * area
                    * (lp[i] * lp[j] * md[1] + (lp[i] * bb[j] + lp[j] * bb[i]) * md[2] + c * md[3]);
            }
        }
    }
}

fn sub_triangle(
    acc: &mut ElementIntegrals,
    kernel: &Kernel,
    sign: Sign,
    area: f64,
    v: [(&[f64; 3], f64); 3],
    with_mass: bool,
) {
    let mut v = v;
    let sv = if sign == Sign::Neg { -1.0 } else { 1.0 };
    v.sort_by(|x, y| (sv * x.1).total_cmp(&(sv * y.1)));
    let [(la, sa), (lb, sb), (lc, sc)] = v;
    let span = sv * (sc - sa);
    if span <= 0.0 {
        level_triangle(acc, kernel, sign, area, (la, sa), (lb, lc, sb), with_mass);
        return;
    }
    let t = (sv * (sb - sa) / span).clamp(0.0, 1.0);
    let mut lm = [0.0; 3];
    for k in 0..3 {
        lm[k] = la[k] + t * (lc[k] - la[k]);
    }
    level_triangle(acc, kernel, sign, area * t, (la, sa), (lb, &lm, sb), with_mass);
    level_triangle(acc, kernel, sign, area * (1.0 - t), (lc, sc), (lb, &lm, sb), with_mass);
}

/// Integrals of the kernel against the local basis over a partitioned
/// element with affine residual.
pub fn element_integrals(part: &ElementPartition, kernel: &Kernel, with_mass: bool) -> ElementIntegrals {
    let mut acc = ElementIntegrals::default();
    for reg in &part.regions {
        if reg.measure <= 0.0 {
            continue;
        }
        if reg.sign == Sign::Zero {
            // r ≡ 0: the load vanishes, the derivative is K'(0) times the mass
            if with_mass {
                let mut g = kernel.derivative(0.0);
                if !g.is_finite() {
                    // K' blows up at 0 for q < 2; use the smallest resolvable residual
                    g = kernel.derivative(f64::EPSILON);
                }
                let n = if reg.bary.len() == 2 { 2 } else { 3 };
                for i in 0..n {
                    for j in 0..n {
                        let m = if n == 2 {
                            reg.measure * if i == j { 1.0 / 3.0 } else { 1.0 / 6.0 }
                        } else {
                            reg.measure * if i == j { 1.0 / 6.0 } else { 1.0 / 12.0 }
                        };
                        acc.mass[i][j] += g * m;
                    }
                }
            }
            continue;
        }
        if reg.bary.len() == 2 {
            let (la, lb) = (&reg.bary[0], &reg.bary[1]);
            let len = reg.measure;
            let m = kernel.moments(false, reg.sign, reg.r[0], reg.r[1]);
            let mut d = [0.0; 3];
            for i in 0..3 {
                d[i] = lb[i] - la[i];
                acc.load[i] += len * (la[i] * m[0] + d[i] * m[1]);
            }
            if with_mass {
                let md = kernel.moments(true, reg.sign, reg.r[0], reg.r[1]);
                for i in 0..3 {
                    for j in 0..3 {
                        acc.mass[i][j] +=
                            len * (la[i] * la[j] * md[0] + (la[i] * d[j] + la[j] * d[i]) * md[1] + d[i] * d[j] * md[2]);
                    }
                }
            }
        } else {
            let n = reg.bary.len();
            for k in 1..n - 1 {
                let a = bary_area(&reg.bary[0], &reg.bary[k], &reg.bary[k + 1]) * part.measure;
                let v = [
                    (&reg.bary[0], reg.r[0]),
                    (&reg.bary[k], reg.r[k]),
                    (&reg.bary[k + 1], reg.r[k + 1]),
                ];
                sub_triangle(&mut acc, kernel, reg.sign, a, v, with_mass);
            }
        }
    }
    acc
}

/// `∫_element sgn(r)|r|^{q−1} φ` for the local basis function `phi` of an
/// element whose residual is affine with vertex values `r`.
pub fn integrate_signed_power(points: &[Point], r: &[f64], phi: usize, q: f64) -> f64 {
    let part = partition_element(points, r, 0.0);
    element_integrals(&part, &Kernel::SignedPower { q }, false).load[phi]
}

/// Zero tolerance used for an affine target: `1e-10 (1 + max |u|)`.
pub fn zero_tolerance(space: &P1Space, u: &TargetFunction) -> Result<f64> {
    let mut umax = 0.0f64;
    for e in 0..space.num_elements() {
        for v in u.element_affine_values(space, e)? {
            umax = umax.max(v.abs());
        }
    }
    Ok(1e-10 * (1.0 + umax))
}

/// Vertex values of the residual on element `e` for an affine target.
pub fn element_residual(f: &FEFunction, u: &TargetFunction, e: usize) -> Result<Vec<f64>> {
    let space = f.space();
    let uv = u.element_affine_values(space, e)?;
    Ok(space.element_nodes(e).iter().zip(uv).map(|(&v, uk)| uk - f.coeffs()[v]).collect())
}

/// Sign partition of every element (affine targets only).
pub fn sign_partition(f: &FEFunction, u: &TargetFunction) -> Result<SignPartition> {
    let space = f.space();
    if !u.is_piecewise_affine() {
        return Err(Error::Unsupported(format!("sign partition needs an affine target, got {u:?}")));
    }
    let tol = zero_tolerance(space, u)?;
    (0..space.num_elements())
        .map(|e| {
            let r = element_residual(f, u, e)?;
            let mut p = partition_element(&space.element_points(e), &r, tol);
            p.element = e;
            Ok(p)
        })
        .collect()
}

/// Residual of the optimality system and, optionally, its Jacobian with
/// respect to the free coefficients.
#[derive(Debug, Clone)]
pub struct Assembly {
    /// `F_i = ∫ K(u − u_h) φ_i` per free node.
    pub residual: Vec<f64>,
    /// `J_ij = ∂F_i/∂c_j = −∫ K'(u − u_h) φ_i φ_j`.
    pub jacobian: Option<DMatrix<f64>>,
}

/// Assembles residual (and Jacobian) for the given kernel.
pub fn assemble(f: &FEFunction, u: &TargetFunction, kernel: &Kernel, with_jacobian: bool) -> Result<Assembly> {
    let space = f.space();
    let nf = space.num_free();
    let mut residual = vec![0.0; nf];
    let mut jac = if with_jacobian { Some(DMatrix::zeros(nf, nf)) } else { None };
    let smooth = !u.is_piecewise_affine();
    if smooth && !matches!(space.mesh(), Mesh::Interval(_)) {
        return Err(Error::Unsupported("smooth targets are supported in 1D only".into()));
    }
    // exact zeros only: a tolerance here would make the residual jump as
    // nodal values approach the target
    let tol = 0.0;
    for e in 0..space.num_elements() {
        let nodes = space.element_nodes(e);
        let ints = if smooth {
            smooth_element_integrals(f, u, e, kernel, with_jacobian)
        } else {
            let r = element_residual(f, u, e)?;
            let part = partition_element(&space.element_points(e), &r, tol);
            element_integrals(&part, kernel, with_jacobian)
        };
        for (a, &va) in nodes.iter().enumerate() {
            let Some(i) = space.free_index(va) else { continue };
            residual[i] += ints.load[a];
            if let Some(j_mat) = jac.as_mut() {
                for (b, &vb) in nodes.iter().enumerate() {
                    if let Some(j) = space.free_index(vb) {
                        j_mat[(i, j)] -= ints.mass[a][b];
                    }
                }
            }
        }
    }
    Ok(Assembly { residual, jacobian: jac })
}

/// `F_i = ∫ sgn(u − u_h)|u − u_h|^{q−1} φ_i` for every free node `i`.
pub fn residual_vector(f: &FEFunction, u: &TargetFunction, q: f64) -> Result<Vec<f64>> {
    if !(q >= 1.0) {
        return Err(Error::Domain(format!("q = {q} must be at least 1")));
    }
    Ok(assemble(f, u, &Kernel::SignedPower { q }, false)?.residual)
}

/// Jacobian of the residual for the given kernel.
pub fn jacobian(f: &FEFunction, u: &TargetFunction, kernel: &Kernel) -> Result<DMatrix<f64>> {
    Ok(assemble(f, u, kernel, true)?.jacobian.unwrap())
}

const SMOOTH_SAMPLES: usize = 64;
const SMOOTH_TOL: f64 = 1e-11;
const MASS_RTOL: f64 = 1e-9;

fn smooth_element_integrals(
    f: &FEFunction,
    u: &TargetFunction,
    e: usize,
    kernel: &Kernel,
    with_mass: bool,
) -> ElementIntegrals {
    let space = f.space();
    let pts = space.element_points(e);
    let nodes = space.element_nodes(e);
    let (xa, xb) = (pts[0][0], pts[1][0]);
    let (ca, cb) = (f.coeffs()[nodes[0]], f.coeffs()[nodes[1]]);
    let h = xb - xa;
    let r = |x: f64| {
        let t = (x - xa) / h;
        u.eval(x, 0.0) - (ca + t * (cb - ca))
    };
    // bracket sign changes on a uniform sample, then bisect each to 1e-14
    let mut cuts = vec![xa];
    let mut x_prev = xa;
    let mut r_prev = r(xa);
    let mut d_scale = kernel.derivative(r_prev).abs();
    for k in 1..=SMOOTH_SAMPLES {
        let x = if k == SMOOTH_SAMPLES { xb } else { xa + h * k as f64 / SMOOTH_SAMPLES as f64 };
        let rx = r(x);
        d_scale = d_scale.max(kernel.derivative(rx).abs());
        if r_prev * rx < 0.0 {
            let (mut lo, mut hi, mut rlo) = (x_prev, x, r_prev);
            while hi - lo > 1e-14 {
                let mid = 0.5 * (lo + hi);
                let rm = r(mid);
                if rm == 0.0 {
                    lo = mid;
                    hi = mid;
                    break;
                }
                if (rm > 0.0) == (rlo > 0.0) {
                    lo = mid;
                    rlo = rm;
                } else {
                    hi = mid;
                }
            }
            cuts.push(0.5 * (lo + hi));
        }
        x_prev = x;
        r_prev = rx;
    }
    cuts.push(xb);
    let basis = |x: f64| {
        let t = (x - xa) / h;
        (1.0 - t, t)
    };
    let load = |x: f64| {
        let (p0, p1) = basis(x);
        let g = kernel.value(r(x));
        [g * p0, g * p1]
    };
    let mass = |x: f64| {
        let (p0, p1) = basis(x);
        let d = kernel.derivative(r(x));
        [d * p0 * p0, d * p0 * p1, d * p1 * p1]
    };
    let mut v = [0.0; 5];
    for w in cuts.windows(2) {
        if w[1] > w[0] {
            let part = integrate_gk(|x| load(x), w[0], w[1], SMOOTH_TOL * h, 4000).value;
            v[0] += part[0];
            v[1] += part[1];
        }
    }
    if with_mass {
        // K' peaks like |r|^{q−2} near roots; the Jacobian only steers
        // Newton, so it gets a tolerance relative to its own size
        let tol = MASS_RTOL * h * d_scale.max(1.0);
        for w in cuts.windows(2) {
            if w[1] > w[0] {
                let part = integrate_gk(|x| mass(x), w[0], w[1], tol, 4000).value;
                v[2] += part[0];
                v[3] += part[1];
                v[4] += part[2];
            }
        }
    }
    let mut out = ElementIntegrals::default();
    out.load[0] = v[0];
    out.load[1] = v[1];
    out.mass[0][0] = v[2];
    out.mass[0][1] = v[3];
    out.mass[1][0] = v[3];
    out.mass[1][1] = v[4];
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::integrate;
    use proptest::prelude::*;

    const REF: [Point; 3] = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];

    // Iterated integral over a triangle, splitting the inner integral at the
    // root of the affine residual.
    fn oracle_2d(pts: &[Point], r: &[f64], tol: f64, g: &dyn Fn(f64, f64, f64) -> f64) -> f64 {
        let lam = |x: f64, y: f64| crate::fespace::barycentric(pts[0], pts[1], pts[2], [x, y]);
        let rf = |x: f64, y: f64| {
            let l = lam(x, y);
            l[0] * r[0] + l[1] * r[1] + l[2] * r[2]
        };
        let mut xs: Vec<f64> = pts.iter().map(|p| p[0]).collect();
        xs.sort_by(f64::total_cmp);
        let yrange = |x: f64| {
            let mut ys = Vec::new();
            for k in 0..3 {
                let (a, b) = (pts[k], pts[(k + 1) % 3]);
                if (a[0] - x) * (b[0] - x) <= 0.0 && a[0] != b[0] {
                    let t = (x - a[0]) / (b[0] - a[0]);
                    ys.push(a[1] + t * (b[1] - a[1]));
                }
            }
            let lo = ys.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = ys.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            (lo, hi)
        };
        let inner = |x: f64| {
            let (lo, hi) = yrange(x);
            if !(hi > lo) {
                return 0.0;
            }
            let (r0, r1) = (rf(x, lo), rf(x, hi));
            let mut cuts = vec![lo];
            if r0 * r1 < 0.0 {
                cuts.push(lo + (hi - lo) * r0 / (r0 - r1));
            }
            cuts.push(hi);
            cuts.windows(2)
                .map(|w| integrate(|y| g(x, y, rf(x, y)), w[0], w[1], 0.1 * tol))
                .sum()
        };
        let mut total = 0.0;
        for w in xs.windows(2) {
            if w[1] > w[0] {
                total += integrate(inner, w[0], w[1], tol);
            }
        }
        total
    }

    fn phi_of(pts: &[Point], k: usize) -> impl Fn(f64, f64) -> f64 + '_ {
        move |x, y| crate::fespace::barycentric(pts[0], pts[1], pts[2], [x, y])[k]
    }

    #[test]
    fn power_moments_against_quadrature() {
        for &(a, d) in &[(0.0, 1.0), (1.0, -1.0), (0.3, 0.9), (1.2, -0.9), (0.9, 0.1), (2.0, 0.0), (1e-9, 0.5)] {
            for &p in &[0.0, 0.05, 0.3, 1.0, 1.7, 3.5, 7.0, -0.4] {
                let m = power_moments(a, d, p);
                for k in 0..4 {
                    let exact = integrate(|t: f64| (a + t * d).max(0.0).powf(p) * t.powi(k as i32), 0.0, 1.0, 1e-15);
                    let scale = exact.abs().max(1e-12);
                    assert!((m[k] - exact).abs() <= 1e-11 * scale, "a={a} d={d} p={p} k={k}: {} vs {exact}", m[k]);
                }
            }
        }
    }

    #[test]
    fn constant_residual_single_region() {
        let p = partition_element(&REF, &[0.3, 0.3, 0.3], 1e-10);
        assert_eq!(p.regions.len(), 1);
        assert_eq!(p.regions[0].sign, Sign::Pos);
        let p = partition_element(&REF, &[1e-12, -1e-12, 0.0], 1e-10);
        assert!(p.is_zero());
    }

    #[test]
    fn reference_cut_line() {
        // r = −(α−1) + (α−1)x + αy, negative below y = (α−1)/α (1−x)
        let a = 1.32;
        let r = [-(a - 1.0), 0.0, 1.0];
        let p = partition_element(&REF, &r, 1e-10);
        assert_eq!(p.regions.len(), 2);
        let neg = p.regions.iter().find(|g| g.sign == Sign::Neg).unwrap();
        let pos = p.regions.iter().find(|g| g.sign == Sign::Pos).unwrap();
        let c = (a - 1.0) / a;
        assert!((neg.measure - 0.5 * c).abs() < 1e-15);
        assert!((pos.measure - 0.5 * (1.0 - c)).abs() < 1e-15);
        for pt in &neg.points {
            assert!(pt[1] <= c * (1.0 - pt[0]) + 1e-15);
        }
        for pt in &pos.points {
            assert!(pt[1] >= c * (1.0 - pt[0]) - 1e-15);
        }
    }

    #[test]
    fn one_d_crossing_point() {
        let (h, a) = (0.6, 1.2);
        let pts = [[1.0 - h, 0.0], [1.0, 0.0]];
        let p = partition_element(&pts, &[1.0 - a, 1.0], 1e-10);
        assert_eq!(p.regions.len(), 2);
        // crossing at x = 1 − h + h(α−1)/α; the first piece lies in (1 − h, that point)
        let x = p.regions[0].points[1][0];
        assert!((x - (1.0 - h + h * (a - 1.0) / a)).abs() < 1e-15);
        assert_eq!(p.regions[0].sign, Sign::Neg);
    }

    #[test]
    fn two_element_q1_total() {
        for &(h, a) in &[(0.25, 1.1), (0.75, 1.3), (0.5, 1.05), (0.9, 1.7)] {
            let x = 1.0 - h;
            let left = integrate_signed_power(&[[0.0, 0.0], [x, 0.0]], &[0.0, 1.0 - a], 1, 1.0);
            let right = integrate_signed_power(&[[x, 0.0], [1.0, 0.0]], &[1.0 - a, 1.0], 0, 1.0);
            let expected = (2.0 * h - a * a) / (2.0 * a * a);
            assert!((left + right - expected).abs() < 1e-14, "h={h} a={a}");
        }
    }

    #[test]
    fn two_element_lq_total_matches_alpha_equation() {
        // ∫ sgn(r)|r|^{q−1} φ = g(α) / (α² q (q+1)) with the two-element α-equation g
        for &(h, a, q) in &[(0.5, 1.25, 2.0), (0.3, 1.2, 1.5), (0.75, 1.4, 3.0), (0.6, 1.05, 1.1)] {
            let x = 1.0 - h;
            let left = integrate_signed_power(&[[0.0, 0.0], [x, 0.0]], &[0.0, 1.0 - a], 1, q);
            let right = integrate_signed_power(&[[x, 0.0], [1.0, 0.0]], &[1.0 - a, 1.0], 0, q);
            let g = -(1.0 - h) * a * a * q * (a - 1.0f64).powf(q - 1.0) - h * (a * q + 1.0) * (a - 1.0f64).powf(q) + h;
            let expected = g / (a * a * q * (q + 1.0));
            assert!((left + right - expected).abs() < 1e-13, "h={h} a={a} q={q}: {} vs {expected}", left + right);
        }
    }

    #[test]
    fn mesh1_alpha_one_pieces() {
        use crate::mesh::{structured_square_mesh, SquarePattern};
        let m = structured_square_mesh(SquarePattern::Mesh1, 0).unwrap();
        // α = 1 at the centre; u_h = 1 on inflow vertices, 0 on outflow
        let mut sum_first_three = 0.0;
        let mut tau3 = 0.0;
        for t in 0..4 {
            let pts = m.triangle_points(t);
            let tri = m.triangles()[t];
            let r: Vec<f64> = tri
                .iter()
                .map(|&v| {
                    let uh = match v {
                        4 => 1.0,
                        _ if m.vertices()[v][0] == 0.0 => 1.0,
                        _ => 0.0,
                    };
                    1.0 - uh
                })
                .collect();
            let c = tri.iter().position(|&v| v == 4).unwrap();
            let part = partition_element(&pts, &r, 1e-10);
            if part.is_zero() {
                // ∫ v_h over the zero region
                tau3 += m.area(t) / 3.0;
            } else {
                sum_first_three += element_integrals(&part, &Kernel::SignedPower { q: 1.0 }, false).load[c];
            }
        }
        assert!((sum_first_three - 0.25).abs() < 1e-15);
        assert!((tau3 - 1.0 / 12.0).abs() < 1e-15);
    }

    #[test]
    fn q2_element_load_matches_exact_p1_integration() {
        // K(r) = r: ∫ r φ_i = A/12 (Σ r_j + r_i)
        let pts = [[0.1, 0.2], [0.9, 0.35], [0.4, 1.0]];
        let r = [0.7, -0.4, 0.25];
        let part = partition_element(&pts, &r, 0.0);
        let ints = element_integrals(&part, &Kernel::SignedPower { q: 2.0 }, true);
        let area = crate::mesh::signed_area(pts[0], pts[1], pts[2]);
        let s: f64 = r.iter().sum();
        for i in 0..3 {
            assert!((ints.load[i] - area / 12.0 * (s + r[i])).abs() < 1e-15);
            for j in 0..3 {
                let m = area / 12.0 * if i == j { 2.0 } else { 1.0 };
                assert!((ints.mass[i][j] - m).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn signed_power_2d_against_iterated_oracle() {
        let cases: [([Point; 3], [f64; 3]); 4] = [
            (REF, [-0.32, 0.0, 1.0]),
            ([[0.1, 0.2], [0.9, 0.35], [0.4, 1.0]], [0.7, -0.4, 0.25]),
            ([[0.0, 0.0], [0.5, 0.0], [0.5, 0.5]], [0.0, 1.0, -0.3]),
            ([[0.5, 0.5], [1.0, 0.5], [1.0, 1.0]], [-0.2, -0.9, -0.1]),
        ];
        for (pts, r) in cases {
            for &q in &[1.0, 1.05, 1.3, 2.0, 3.7, 8.0] {
                let ints = element_integrals(&partition_element(&pts, &r, 0.0), &Kernel::SignedPower { q }, false);
                for k in 0..3 {
                    let phi = phi_of(&pts, k);
                    let kern = Kernel::SignedPower { q };
                    let exact = oracle_2d(&pts, &r, 1e-13, &|x, y, rv| kern.value(rv) * phi(x, y));
                    assert!((ints.load[k] - exact).abs() < 1e-11, "q={q} k={k}: {} vs {exact}", ints.load[k]);
                }
            }
        }
    }

    #[test]
    fn mass_weighted_2d_against_iterated_oracle() {
        let pts = [[0.1, 0.2], [0.9, 0.35], [0.4, 1.0]];
        let r = [0.7, -0.4, 0.25];
        for kern in [
            Kernel::SignedPower { q: 2.5 },
            Kernel::SignedPower { q: 1.6 },
            Kernel::Smoothed { q: 1.3, eps: 1e-2 },
            Kernel::Smoothed { q: 3.0, eps: 5e-2 },
        ] {
            let ints = element_integrals(&partition_element(&pts, &r, 0.0), &kern, true);
            for i in 0..3 {
                for j in 0..3 {
                    let (pi, pj) = (phi_of(&pts, i), phi_of(&pts, j));
                    let exact = oracle_2d(&pts, &r, 1e-10, &|x, y, rv| {
                        if rv == 0.0 { 0.0 } else { kern.derivative(rv) * pi(x, y) * pj(x, y) }
                    });
                    assert!((ints.mass[i][j] - exact).abs() < 1e-9 * (1.0 + exact.abs()), "{kern:?} {i}{j}: {} vs {exact}", ints.mass[i][j]);
                }
                let pi = phi_of(&pts, i);
                let exact = oracle_2d(&pts, &r, 1e-11, &|x, y, rv| kern.value(rv) * pi(x, y));
                assert!((ints.load[i] - exact).abs() < 1e-10, "{kern:?} load {i}");
            }
        }
    }

    proptest! {
        #[test]
        fn measure_conservation(r0 in -1.0f64..1.0, r1 in -1.0f64..1.0, r2 in -1.0f64..1.0,
                                x2 in -0.5f64..1.5, y2 in 0.1f64..2.0) {
            let pts = [[0.0, 0.0], [1.0, 0.0], [x2, y2]];
            let p = partition_element(&pts, &[r0, r1, r2], 1e-10);
            let s: f64 = p.regions.iter().map(|g| g.measure).sum();
            prop_assert!((s - p.measure).abs() <= 1e-13 * p.measure);
            prop_assert!(p.regions.len() <= 2);
            for g in &p.regions {
                if g.points.len() >= 3 {
                    let a: f64 = (1..g.points.len() - 1)
                        .map(|k| crate::mesh::signed_area(g.points[0], g.points[k], g.points[k + 1]))
                        .sum();
                    prop_assert!(a > 0.0);
                }
            }
        }

        #[test]
        fn sign_symmetry(r0 in -1.0f64..1.0, r1 in -1.0f64..1.0, r2 in -1.0f64..1.0, q in 1.0f64..8.0) {
            let pts = [[0.0, 0.0], [1.0, 0.2], [0.3, 0.9]];
            let k = Kernel::SignedPower { q };
            let a = element_integrals(&partition_element(&pts, &[r0, r1, r2], 0.0), &k, false);
            let b = element_integrals(&partition_element(&pts, &[-r0, -r1, -r2], 0.0), &k, false);
            for i in 0..3 {
                prop_assert_eq!(a.load[i], -b.load[i]);
            }
        }

        #[test]
        fn one_d_matches_antiderivative(r0 in -1.0f64..1.0, r1 in -1.0f64..1.0, q in 1.0f64..8.0) {
            // element (0.2, 0.7); oracle: adaptive quadrature split at the root
            let (xa, xb) = (0.2, 0.7);
            let k = Kernel::SignedPower { q };
            let ints = element_integrals(&partition_element(&[[xa, 0.0], [xb, 0.0]], &[r0, r1], 0.0), &k, false);
            let rf = |x: f64| r0 + (r1 - r0) * (x - xa) / (xb - xa);
            let mut cuts = vec![xa];
            if r0 * r1 < 0.0 { cuts.push(xa + (xb - xa) * r0 / (r0 - r1)); }
            cuts.push(xb);
            for i in 0..2 {
                let phi = |x: f64| if i == 0 { (xb - x) / (xb - xa) } else { (x - xa) / (xb - xa) };
                let exact: f64 = cuts.windows(2).map(|w| integrate(|x| k.value(rf(x)) * phi(x), w[0], w[1], 1e-15)).sum();
                prop_assert!((ints.load[i] - exact).abs() < 1e-12, "{} vs {}", ints.load[i], exact);
            }
        }
    }
}
