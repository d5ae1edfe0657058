//! Closed-form and root-findable results for the model problems: overshoot
//! equations on two-element and square meshes, the ϑ-recursion mesh
//! condition in 1D, and the solution family for the interior jump.

use crate::{Error, Result};

const ROOT_TOL: f64 = 1e-13;
// the equations are finite at α = 1 (where (α − 1)^p is taken as 0), and for
// q near 1 the root can sit closer than 1e-12 to it
const ALPHA_LOW: f64 = 1.0;

/// Bisection on `[a, b]`; requires a sign change over the bracket.
pub fn bisect(mut f: impl FnMut(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> Result<f64> {
    let mut fa = f(a);
    let fb = f(b);
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if !(fa.signum() != fb.signum()) || !fa.is_finite() || !fb.is_finite() {
        return Err(Error::Numerical(format!("no sign change on [{a}, {b}]: f = ({fa}, {fb})")));
    }
    while b - a > tol {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        let fm = f(m);
        if fm == 0.0 {
            return Ok(m);
        }
        if fm.signum() == fa.signum() {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    Ok(0.5 * (a + b))
}

// (α − 1)^p for α ≥ 1, stable when p is tiny
fn pow_above_one(alpha: f64, p: f64) -> f64 {
    let d = alpha - 1.0;
    if d <= 0.0 {
        return if p == 0.0 { 1.0 } else { 0.0 };
    }
    (p * d.ln()).exp()
}

fn root_above_one(f: impl Fn(f64) -> f64) -> Result<f64> {
    bisect(&f, ALPHA_LOW, 2.0, ROOT_TOL).or_else(|_| bisect(&f, ALPHA_LOW, 4.0, ROOT_TOL))
}

fn check_h(h: f64) -> Result<()> {
    if h > 0.0 && h < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("element length h = {h} must lie in (0, 1)")))
    }
}

fn check_q(q: f64) -> Result<()> {
    if q > 1.0 && q.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("q = {q} must lie in (1, ∞)")))
    }
}

/// L¹ overshoot on the two-element mesh of `(0, 1)` whose last element has
/// length `h`: `1` for `h ≤ 1/2` and `√(2h)` otherwise.
pub fn alpha_two_element_l1(h: f64) -> Result<f64> {
    check_h(h)?;
    Ok(if h <= 0.5 { 1.0 } else { (2.0 * h).sqrt() })
}

/// Optimality condition for the interior value α on the two-element mesh.
pub fn two_element_lq_equation(alpha: f64, h: f64, q: f64) -> f64 {
    -(1.0 - h) * alpha * alpha * q * pow_above_one(alpha, q - 1.0)
        - h * (alpha * q + 1.0) * pow_above_one(alpha, q)
        + h
}

/// L^q overshoot on the two-element mesh: the root α > 1 of
/// [`two_element_lq_equation`].
pub fn alpha_two_element_lq(h: f64, q: f64) -> Result<f64> {
    check_h(h)?;
    check_q(q)?;
    root_above_one(|a| two_element_lq_equation(a, h, q))
}

/// Cubic whose root above 1 is the L¹ value at the centre of the
/// criss-cross square.
pub fn mesh1_l1_cubic(alpha: f64) -> f64 {
    2.0 * alpha.powi(3) - 5.0 * alpha + 2.0
}

/// Cubic whose root above 1 is the L¹ value at the overshooting node of
/// the second square pattern.
pub fn mesh2_l1_cubic(alpha: f64) -> f64 {
    -3.0 * alpha.powi(3) + 8.0 * alpha - 4.0
}

pub fn alpha_mesh1_l1() -> f64 {
    bisect(mesh1_l1_cubic, 1.0, 2.0, ROOT_TOL).expect("cubic changes sign on (1, 2)")
}

pub fn alpha_mesh2_l1() -> f64 {
    bisect(mesh2_l1_cubic, 1.0, 2.0, ROOT_TOL).expect("cubic changes sign on (1, 2)")
}

/// Optimality condition for the centre value of the criss-cross square.
pub fn mesh1_lq_equation(alpha: f64, q: f64) -> f64 {
    let poly = 4.0 * alpha.powi(3) * q + 4.0 * (1.0 - q) * alpha * alpha + (q - 6.0) * alpha + 2.0;
    pow_above_one(alpha, q - 1.0) * poly - alpha * (q + 4.0) + 2.0
}

pub fn alpha_mesh1_lq(q: f64) -> Result<f64> {
    check_q(q)?;
    root_above_one(|a| mesh1_lq_equation(a, q))
}

/// Backward ϑ-recursion on a 1D mesh ordered so that the last element
/// touches the discontinuity.
#[derive(Debug, Clone, PartialEq)]
pub struct ThetaSchedule {
    /// `theta[i]` is ϑ_{i+1}; `None` below the index where the recursion
    /// produced a negative square. Values lie in `[0, 1)` from `M` upwards.
    pub theta: Vec<Option<f64>>,
    /// Largest 1-based index `i < N` with ϑ_i ≥ 1 − 1/√2, or 0.
    pub m: usize,
    /// `(i, h_i ≥ (2(1−ϑ_{i+1})² − 1) h_{i+1})` for `i = max(M, 1), …, N−1`.
    pub conditions: Vec<(usize, bool)>,
}

impl ThetaSchedule {
    pub fn feasible(&self) -> bool {
        self.conditions.iter().all(|&(_, ok)| ok)
    }

    /// ϑ_i with 1-based `i`.
    pub fn theta_at(&self, i: usize) -> Option<f64> {
        self.theta.get(i.checked_sub(1)?).copied().flatten()
    }

    pub fn first_violation(&self) -> Option<usize> {
        self.conditions.iter().find(|c| !c.1).map(|c| c.0)
    }
}

pub const THETA_THRESHOLD: f64 = 1.0 - std::f64::consts::FRAC_1_SQRT_2;

pub fn theta_schedule(h: &[f64]) -> Result<ThetaSchedule> {
    let n = h.len();
    if n < 2 {
        return Err(Error::Domain("the ϑ-recursion needs at least two elements".into()));
    }
    if let Some(x) = h.iter().find(|x| !(**x > 0.0) || !x.is_finite()) {
        return Err(Error::Domain(format!("element length {x} is not positive")));
    }
    let mut theta = vec![None; n];
    theta[n - 1] = Some(0.0);
    let mut sq = vec![None; n];
    sq[n - 1] = Some(0.0);
    for i in (0..n - 1).rev() {
        let Some(next) = theta[i + 1] else { break };
        let s = 0.5 * (1.0 - (2.0 * (1.0 - next) * (1.0f64 - next) - 1.0) * h[i + 1] / h[i]);
        sq[i] = Some(s);
        if s < 0.0 {
            break;
        }
        theta[i] = Some(s.sqrt());
    }
    let m = (1..n).rev().find(|&i| theta[i - 1].is_some_and(|t| t >= THETA_THRESHOLD)).unwrap_or(0);
    // h_i ≥ (2(1−ϑ_{i+1})² − 1) h_{i+1} is exactly ϑ_i² ≥ 0
    let conditions = (m.max(1)..n).map(|i| (i, sq[i - 1].is_some_and(|s| s >= 0.0))).collect();
    Ok(ThetaSchedule { theta, m, conditions })
}

/// Outcome of the sufficient conditions for an L¹-best approximation
/// without over- or undershoots.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OvershootVerdict {
    /// The last element is no longer than any other.
    SufficientMinLast,
    /// The ϑ-recursion condition holds.
    SufficientGraded,
    /// Neither condition holds; overshoot may or may not persist.
    Unknown,
}

impl OvershootVerdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            OvershootVerdict::SufficientMinLast => "SUFFICIENT_MINLAST",
            OvershootVerdict::SufficientGraded => "SUFFICIENT_GRADED",
            OvershootVerdict::Unknown => "UNKNOWN",
        }
    }
}

impl std::fmt::Display for OvershootVerdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

pub fn check_no_overshoot_l1(h: &[f64]) -> Result<OvershootVerdict> {
    let sched = theta_schedule(h)?;
    let (last, rest) = h.split_last().unwrap();
    if rest.iter().all(|x| last <= x) {
        Ok(OvershootVerdict::SufficientMinLast)
    } else if sched.feasible() {
        Ok(OvershootVerdict::SufficientGraded)
    } else {
        Ok(OvershootVerdict::Unknown)
    }
}

/// L¹ value at the node before the last one when the last element is the
/// longest: `√(2 h_last / (h_last + h_prev))`.
pub fn interior_overshoot_value(h_prev: f64, h_last: f64) -> Result<f64> {
    if !(h_prev > 0.0 && h_last > h_prev && h_last.is_finite()) {
        return Err(Error::Precondition(format!("need h_last > h_prev > 0, got h_prev = {h_prev}, h_last = {h_last}")));
    }
    Ok((2.0 * h_last / (h_last + h_prev)).sqrt())
}

/// [`interior_overshoot_value`] for a whole mesh, also checking that the
/// second-to-last element is no longer than the ones before it.
pub fn interior_overshoot_for_mesh(h: &[f64]) -> Result<f64> {
    let n = h.len();
    if n < 2 {
        return Err(Error::Precondition("need at least two elements".into()));
    }
    let h_prev = h[n - 2];
    if h[..n - 2].iter().any(|&x| x < h_prev) {
        return Err(Error::Precondition("second-to-last element must be the shortest of the first N−1".into()));
    }
    interior_overshoot_value(h_prev, h[n - 1])
}

/// Nodal values at `−h, 0, h` of an L¹-best approximation of sgn(x) on
/// `(−1, 1)` with nodes `−1, −h, 0, h, 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JumpSolution {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl JumpSolution {
    pub fn nodal_values(&self) -> [f64; 3] {
        [self.alpha, self.beta, self.gamma]
    }
}

pub fn jump_family(h: f64, beta: f64) -> Result<JumpSolution> {
    check_h(h)?;
    if !(-1.0..=1.0).contains(&beta) {
        return Err(Error::Domain(format!("β = {beta} must lie in [−1, 1]")));
    }
    if h <= 0.5 {
        return Ok(JumpSolution { alpha: -1.0, beta, gamma: 1.0 });
    }
    let s = (2.0 * h).sqrt();
    Ok(JumpSolution { alpha: -s - beta * (s - 1.0), beta, gamma: s - beta * (s - 1.0) })
}

/// Node positions of the mesh underlying [`jump_family`].
pub fn jump_mesh_nodes(h: f64) -> Result<[f64; 5]> {
    check_h(h)?;
    Ok([-1.0, -h, 0.0, h, 1.0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    // Direct L^q error of the two-element candidate, integrated piecewise in
    // closed form: on (0, 1−h) the error is (α−1)·x/(1−h), on the last
    // element it runs linearly from 1−α to 1.
    fn two_element_error(alpha: f64, h: f64, q: f64) -> f64 {
        let first = (1.0 - h) * (alpha - 1.0).abs().powf(q) / (q + 1.0);
        // ∫ |1 − α(1−t)|^q h dt, t ∈ (0,1): split at the sign change
        let g = |t: f64| 1.0 - alpha * (1.0 - t);
        let prim = |t: f64| g(t).abs().powf(q + 1.0) * g(t).signum() / (alpha * (q + 1.0));
        let t0 = 1.0 - 1.0 / alpha;
        let last = if alpha > 1.0 {
            h * ((prim(t0) - prim(0.0)).abs() + (prim(1.0) - prim(t0)).abs())
        } else {
            h * (prim(1.0) - prim(0.0)).abs()
        };
        first + last
    }

    #[test]
    fn two_element_l1_branches() {
        assert_eq!(alpha_two_element_l1(0.25).unwrap(), 1.0);
        assert_eq!(alpha_two_element_l1(0.5).unwrap(), 1.0);
        assert!((alpha_two_element_l1(0.75).unwrap() - 1.5f64.sqrt()).abs() < 1e-15);
        assert!(alpha_two_element_l1(0.0).is_err());
        assert!(alpha_two_element_l1(1.0).is_err());
    }

    #[test]
    fn two_element_lq_matches_line_search() {
        assert!((alpha_two_element_lq(0.5, 2.0).unwrap() - 1.25).abs() < 1e-12);
        for &(h, q) in &[(0.5, 2.0), (0.2, 1.5), (0.8, 3.0), (0.3, 1.2)] {
            let a = alpha_two_element_lq(h, q).unwrap();
            let mut best = (f64::INFINITY, 0.0);
            let mut x = 1.0;
            while x <= 2.0 {
                let e = two_element_error(x, h, q);
                if e < best.0 {
                    best = (e, x);
                }
                x += 1e-5;
            }
            assert!((best.1 - a).abs() < 2e-5, "h={h} q={q}: {a} vs {}", best.1);
        }
    }

    #[test]
    fn two_element_lq_limits() {
        assert!((alpha_two_element_lq(0.75, 1.0001).unwrap() - 1.5f64.sqrt()).abs() < 5e-3);
        assert!((alpha_two_element_lq(0.25, 1.0001).unwrap() - 1.0).abs() < 5e-3);
        assert!(alpha_two_element_lq(0.5, 1.0).is_err());
        assert!(alpha_two_element_lq(0.5, 1.0 + 1e-9).is_ok());
    }

    #[test]
    fn square_cubics() {
        let a1 = alpha_mesh1_l1();
        let a2 = alpha_mesh2_l1();
        assert!((a1 - 1.3200).abs() < 5e-5);
        assert!((a2 - 1.2723).abs() < 5e-5);
        assert!(mesh1_l1_cubic(1.0) < 0.0 && mesh1_l1_cubic(1.5) > 0.0);
        assert!(mesh2_l1_cubic(1.0) > 0.0 && mesh2_l1_cubic(1.5) < 0.0);
        assert!(mesh1_l1_cubic(a1).abs() < 1e-12);
    }

    #[test]
    fn mesh1_lq_values() {
        assert!((alpha_mesh1_lq(2.0).unwrap() - 1.5).abs() < 1e-12);
        assert!(mesh1_lq_equation(1.5, 2.0).abs() < 1e-14);
        let a = alpha_mesh1_lq(1.5).unwrap();
        assert!(a > 1.32 && a < 1.5);
        assert!((alpha_mesh1_lq(1.0 + 1e-7).unwrap() - alpha_mesh1_l1()).abs() < 1e-3);
    }

    #[test]
    fn theta_examples() {
        let s = theta_schedule(&[0.1, 0.5, 0.4]).unwrap();
        assert_eq!(s.theta_at(3), Some(0.0));
        assert!((s.theta_at(2).unwrap().powi(2) - 0.1).abs() < 1e-15);
        assert_eq!(s.m, 2);
        assert!(s.feasible());
        assert_eq!(s.conditions, vec![(2, true)]);
        assert_eq!(check_no_overshoot_l1(&[0.1, 0.5, 0.4]).unwrap(), OvershootVerdict::SufficientGraded);

        let s = theta_schedule(&[0.1, 0.45, 0.45]).unwrap();
        assert_eq!(s.theta_at(2), Some(0.0));
        assert_eq!(s.theta_at(1), None);
        assert_eq!(s.m, 0);
        assert_eq!(s.first_violation(), Some(1));
        assert_eq!(check_no_overshoot_l1(&[0.1, 0.45, 0.45]).unwrap(), OvershootVerdict::Unknown);

        assert_eq!(check_no_overshoot_l1(&[0.25; 4]).unwrap(), OvershootVerdict::SufficientMinLast);
        assert!(theta_schedule(&[1.0]).is_err());
        assert!(theta_schedule(&[0.5, -0.5]).is_err());
    }

    #[test]
    fn uniform_theta_chain() {
        let h = [0.2; 5];
        let s = theta_schedule(&h).unwrap();
        let mut t = 0.0f64;
        for i in (1..5).rev() {
            let sq = 0.5 * (1.0 - (2.0 * (1.0 - t).powi(2) - 1.0));
            t = sq.sqrt();
            assert!((s.theta_at(i).unwrap() - t).abs() < 1e-15);
        }
        assert!(s.feasible());
    }

    #[test]
    fn interior_overshoot() {
        let v = interior_overshoot_value(0.1, 0.2).unwrap();
        assert!((v - 2.0 / 3f64.sqrt()).abs() < 1e-15);
        assert!((interior_overshoot_value(0.45, 0.9).unwrap() - v).abs() < 1e-15);
        assert!((interior_overshoot_value(0.3 - 1e-12, 0.3).unwrap() - 1.0).abs() < 1e-11);
        assert!(interior_overshoot_value(0.3, 0.3).is_err());
        assert!(interior_overshoot_for_mesh(&[0.2, 0.1, 0.3]).is_ok());
        assert!(interior_overshoot_for_mesh(&[0.05, 0.1, 0.3]).is_err());
    }

    #[test]
    fn jump_family_cases() {
        assert_eq!(jump_family(0.25, 0.0).unwrap().nodal_values(), [-1.0, 0.0, 1.0]);
        let s = 1.5f64.sqrt();
        let j = jump_family(0.75, 0.0).unwrap();
        assert!((j.alpha + s).abs() < 1e-15 && (j.gamma - s).abs() < 1e-15);
        assert!((jump_family(0.75, 1.0).unwrap().gamma - 1.0).abs() < 1e-15);
        assert!((jump_family(0.75, -1.0).unwrap().alpha + 1.0).abs() < 1e-15);
        assert!(jump_family(0.75, 1.1).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn min_last_meshes_are_graded_feasible(
            rest in proptest::collection::vec(0.01f64..1.0, 1..8),
            frac in 0.01f64..=1.0,
        ) {
            let min = rest.iter().cloned().fold(f64::INFINITY, f64::min);
            let mut h = rest.clone();
            h.push(frac * min);
            let s = theta_schedule(&h).unwrap();
            prop_assert!(s.feasible(), "{:?} -> {:?}", h, s);
            // below M the recursion is unconstrained and ϑ may exceed 1
            for i in s.m.max(1)..=h.len() {
                let t = s.theta_at(i).unwrap();
                prop_assert!((0.0..1.0).contains(&t));
            }
        }
    }
}
