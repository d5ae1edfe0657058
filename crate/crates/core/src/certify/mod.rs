//! L¹ optimality certificates.
//!
//! `u_h` is an L¹-best approximation iff some ψ with |ψ| ≤ 1, equal to
//! sgn(u − u_h) off the agreement set {u = u_h}, annihilates every free
//! basis function. On sign regions ψ is forced; on the agreement set we
//! search for ψ0 among functions affine on each piece of the agreement set
//! by minimizing max|ψ0| with a linear program. When the bound exceeds 1,
//! pieces are split along the zero line of the LP's dual direction (where
//! an optimal ψ0 switches sign) and the LP is solved again.

pub mod simplex;

use std::sync::Arc;

use crate::fespace::{barycentric, build_space, FEFunction, P1Space, Problem, TargetFunction};
use crate::mesh::{interval_mesh, signed_area, Marker, Point, TriMesh};
use crate::signsplit::{element_integrals, partition_element, sign_partition, Kernel, Sign, SignPartition};
use crate::theory::jump_family;
use crate::Result;

use simplex::LpOutcome;

/// Tolerance on ∫ψφ_i and on |ψ| − 1.
pub const CERT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Certified,
    NotOptimal,
    Undecided,
}

impl Verdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            Verdict::Certified => "CERTIFIED",
            Verdict::NotOptimal => "NOT_OPTIMAL",
            Verdict::Undecided => "UNDECIDED",
        }
    }
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// ψ0 on one simplex of the agreement set: affine, given by its values at
/// the simplex vertices.
#[derive(Debug, Clone, PartialEq)]
pub struct WitnessPiece {
    pub element: usize,
    /// Two (1D) or three (2D) vertices.
    pub points: Vec<Point>,
    pub values: Vec<f64>,
}

/// Dual witness: sgn(u − u_h) on the sign regions of `partition`, and the
/// affine pieces of ψ0 on its agreement set.
#[derive(Debug, Clone, PartialEq)]
pub struct PsiWitness {
    pub partition: SignPartition,
    pub pieces: Vec<WitnessPiece>,
}

impl PsiWitness {
    /// `‖ψ‖∞`, which for piecewise-affine ψ0 is attained at vertices.
    pub fn sup_norm(&self) -> f64 {
        let forced = self.partition.iter().any(|p| p.regions.iter().any(|r| r.sign != Sign::Zero && r.measure > 0.0));
        let psi0 = self.pieces.iter().flat_map(|p| p.values.iter()).fold(0.0f64, |m, v| m.max(v.abs()));
        if forced { psi0.max(1.0) } else { psi0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CertificateResult {
    pub verdict: Verdict,
    pub witness: Option<PsiWitness>,
    /// Node whose optimality condition cannot be met (NOT_OPTIMAL only).
    pub violated_node: Option<usize>,
    /// `1 − t*` for the smallest bound t* on |ψ0| found; for NOT_OPTIMAL the
    /// (negative) slack of the violated capacity bound; −∞ when the
    /// restricted ψ0 class is infeasible.
    pub margin: f64,
    /// Forced contribution `∫_{u>u_h} φ_i − ∫_{u<u_h} φ_i` per free node.
    pub forced: Vec<f64>,
    /// `max_i |∫ψφ_i|` recomputed independently for a returned witness.
    pub verification: Option<f64>,
}

fn simplex_measure(points: &[Point]) -> f64 {
    match points.len() {
        2 => (points[1][0] - points[0][0]).abs(),
        3 => signed_area(points[0], points[1], points[2]).abs(),
        _ => unreachable!(),
    }
}

// The agreement set as simplices, each with barycentric coordinates of its
// vertices in the parent element.
struct ZeroPiece {
    element: usize,
    bary: Vec<[f64; 3]>,
    points: Vec<Point>,
    measure: f64,
}

fn zero_pieces(partition: &SignPartition) -> Vec<ZeroPiece> {
    let mut out = Vec::new();
    for part in partition {
        for reg in part.regions.iter().filter(|r| r.sign == Sign::Zero && r.measure > 0.0) {
            if reg.bary.len() == 2 {
                out.push(ZeroPiece {
                    element: part.element,
                    bary: reg.bary.clone(),
                    points: reg.points.clone(),
                    measure: reg.measure,
                });
                continue;
            }
            for k in 1..reg.bary.len() - 1 {
                let idx = [0, k, k + 1];
                let points: Vec<Point> = idx.iter().map(|&i| reg.points[i]).collect();
                let measure = simplex_measure(&points);
                if measure > 0.0 {
                    out.push(ZeroPiece {
                        element: part.element,
                        bary: idx.iter().map(|&i| reg.bary[i]).collect(),
                        points,
                        measure,
                    });
                }
            }
        }
    }
    out
}

/// Decides whether `f` is an L¹-best approximation of `u` in its space.
///
/// NOT_OPTIMAL is reported when, for some free node, the forced
/// contribution exceeds what any |ψ0| ≤ 1 could cancel on the agreement set
/// in the support of its basis function; this covers every candidate whose
/// agreement set has measure zero.
pub fn certify_l1(f: &FEFunction, u: &TargetFunction) -> Result<CertificateResult> {
    let space = f.space().clone();
    let partition = sign_partition(f, u)?;
    let nf = space.num_free();
    let mut forced = vec![0.0; nf];
    let sign_kernel = Kernel::SignedPower { q: 1.0 };
    for part in &partition {
        let ints = element_integrals(part, &sign_kernel, false);
        for (a, &v) in space.element_nodes(part.element).iter().enumerate() {
            if let Some(i) = space.free_index(v) {
                forced[i] += ints.load[a];
            }
        }
    }

    let pieces = zero_pieces(&partition);
    let mut capacity = vec![0.0; nf];
    for p in &pieces {
        for (a, &v) in space.element_nodes(p.element).iter().enumerate() {
            if let Some(i) = space.free_index(v) {
                let mean = p.bary.iter().map(|l| l[a]).sum::<f64>() / p.bary.len() as f64;
                capacity[i] += p.measure * mean;
            }
        }
    }

    let (worst, slack) = (0..nf)
        .map(|i| (i, capacity[i] - forced[i].abs()))
        .fold((None, f64::INFINITY), |acc, (i, s)| if s < acc.1 { (Some(i), s) } else { acc });
    if slack < -CERT_TOL {
        return Ok(CertificateResult {
            verdict: Verdict::NotOptimal,
            witness: None,
            violated_node: worst.map(|i| space.free_nodes()[i]),
            margin: slack,
            forced,
            verification: None,
        });
    }

    let mut pieces = pieces;
    let (values, t) = if pieces.is_empty() {
        (Vec::new(), 0.0)
    } else {
        let mut round = 0;
        loop {
            let Some(sol) = solve_psi0(&space, &pieces, &forced, &capacity) else {
                return Ok(CertificateResult {
                    verdict: Verdict::Undecided,
                    witness: None,
                    violated_node: None,
                    margin: f64::NEG_INFINITY,
                    forced,
                    verification: None,
                });
            };
            round += 1;
            if sol.t <= 1.0 + CERT_TOL || round > REFINE_ROUNDS {
                break (sol.values, sol.t);
            }
            match split_pieces(&space, &pieces, &sol.direction) {
                Some(next) => pieces = next,
                None => break (sol.values, sol.t),
            }
        }
    };

    let mut cursor = 0;
    let witness_pieces = pieces
        .iter()
        .map(|p| {
            let n = p.points.len();
            let w = WitnessPiece { element: p.element, points: p.points.clone(), values: values[cursor..cursor + n].to_vec() };
            cursor += n;
            w
        })
        .collect();
    let witness = PsiWitness { partition, pieces: witness_pieces };
    let check = verify_witness(&space, &witness);
    let ok = t <= 1.0 + CERT_TOL && check <= CERT_TOL && witness.sup_norm() <= 1.0 + CERT_TOL;
    Ok(CertificateResult {
        verdict: if ok { Verdict::Certified } else { Verdict::Undecided },
        witness: Some(witness),
        violated_node: None,
        margin: 1.0 - t,
        forced,
        verification: Some(check),
    })
}

/// Bound on the refinement rounds of the ψ0 class.
const REFINE_ROUNDS: usize = 12;

struct Psi0Solution {
    values: Vec<f64>,
    t: f64,
    /// LP multipliers per free node (zero for rows not in the LP); the
    /// optimal ψ0 is ±t according to the sign of `Σ y_i φ_i`.
    direction: Vec<f64>,
}

// min t s.t. Σ ∫ψ0 φ_i = −forced_i, |ψ0 at piece vertices| ≤ t.
fn solve_psi0(space: &P1Space, pieces: &[ZeroPiece], forced: &[f64], capacity: &[f64]) -> Option<Psi0Solution> {
    let k: usize = pieces.iter().map(|p| p.points.len()).sum();
    let rows: Vec<usize> = (0..forced.len()).filter(|&i| capacity[i] > 0.0).collect();
    let row_of = |i: usize| rows.iter().position(|&r| r == i);
    // columns: ψ⁺ (k), ψ⁻ (k), t, upper slacks (k), lower slacks (k)
    let n = 4 * k + 1;
    let m = rows.len() + 2 * k;
    let mut a = vec![vec![0.0; n]; m];
    let mut b = vec![0.0; m];
    for (r, &i) in rows.iter().enumerate() {
        b[r] = -forced[i];
    }
    let mut col = 0;
    for p in pieces {
        let nv = p.points.len();
        // ∫ λ_k λ_l over a simplex: (1 + δ_kl) |T| / ((d+1)(d+2))
        let denom = if nv == 2 { 6.0 } else { 12.0 };
        for (a_loc, &v) in space.element_nodes(p.element).iter().enumerate() {
            let Some(r) = space.free_index(v).and_then(row_of) else { continue };
            for kk in 0..nv {
                let mut s = 0.0;
                for l in 0..nv {
                    s += p.bary[l][a_loc] * if kk == l { 2.0 } else { 1.0 };
                }
                let coef = p.measure * s / denom;
                a[r][col + kk] += coef;
                a[r][k + col + kk] -= coef;
            }
        }
        col += nv;
    }
    let t = 2 * k;
    for j in 0..k {
        let up = rows.len() + 2 * j;
        let lo = up + 1;
        a[up][j] = 1.0;
        a[up][k + j] = -1.0;
        a[up][t] = -1.0;
        a[up][2 * k + 1 + j] = 1.0;
        a[lo][j] = -1.0;
        a[lo][k + j] = 1.0;
        a[lo][t] = -1.0;
        a[lo][3 * k + 1 + j] = 1.0;
    }
    let mut c = vec![0.0; n];
    c[t] = 1.0;
    match simplex::solve(&a, &b, &c, 1e-11) {
        LpOutcome::Optimal { x, y, value } => {
            let mut direction = vec![0.0; forced.len()];
            for (r, &i) in rows.iter().enumerate() {
                direction[i] = y[r];
            }
            Some(Psi0Solution { values: (0..k).map(|j| x[j] - x[k + j]).collect(), t: value, direction })
        }
        _ => None,
    }
}

// Splits every piece on which `Σ direction_i φ_i` changes sign along its
// zero level, so that a ψ0 switching between ±t there becomes admissible.
fn split_pieces(space: &P1Space, pieces: &[ZeroPiece], direction: &[f64]) -> Option<Vec<ZeroPiece>> {
    let mut out = Vec::new();
    let mut changed = false;
    for p in pieces {
        let nodes = space.element_nodes(p.element);
        let v: Vec<f64> = p
            .bary
            .iter()
            .map(|l| nodes.iter().enumerate().map(|(a, &n)| space.free_index(n).map_or(0.0, |i| direction[i]) * l[a]).sum())
            .collect();
        let scale = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let tol = 1e-12 * scale;
        let split = v.iter().any(|&x| x > tol) && v.iter().any(|&x| x < -tol);
        if !split {
            out.push(ZeroPiece { element: p.element, bary: p.bary.clone(), points: p.points.clone(), measure: p.measure });
            continue;
        }
        let sub = partition_element(&p.points, &v, tol);
        for reg in sub.regions.iter().filter(|r| r.measure > 0.0) {
            // barycentrics relative to the piece, mapped back to the element
            let to_parent = |l: &[f64; 3]| {
                let mut out = [0.0; 3];
                for (k, w) in l.iter().enumerate().take(p.bary.len()) {
                    for a in 0..3 {
                        out[a] += w * p.bary[k][a];
                    }
                }
                out
            };
            let bary: Vec<[f64; 3]> = reg.bary.iter().map(to_parent).collect();
            if bary.len() == 2 {
                out.push(ZeroPiece { element: p.element, bary, points: reg.points.clone(), measure: reg.measure });
                changed = true;
                continue;
            }
            for k in 1..bary.len() - 1 {
                let points = vec![reg.points[0], reg.points[k], reg.points[k + 1]];
                let measure = simplex_measure(&points);
                if measure > 0.0 {
                    out.push(ZeroPiece { element: p.element, bary: vec![bary[0], bary[k], bary[k + 1]], points, measure });
                    changed = true;
                }
            }
        }
    }
    changed.then_some(out)
}

fn basis_value(points: &[Point], a: usize, p: Point) -> f64 {
    if points.len() == 2 {
        let l1 = (p[0] - points[0][0]) / (points[1][0] - points[0][0]);
        if a == 0 { 1.0 - l1 } else { l1 }
    } else {
        barycentric(points[0], points[1], points[2], p)[a]
    }
}

/// `max_i |∫ψφ_i|` by quadrature in physical coordinates: midpoint rule on
/// the sign regions (ψ constant, φ affine) and a degree-2 rule on the ψ0
/// pieces.
pub fn verify_witness(space: &P1Space, w: &PsiWitness) -> f64 {
    let mut acc = vec![0.0; space.num_free()];
    let mut add = |e: usize, pts: &[Point], weights: &[f64], psi: &[f64]| {
        let parent = space.element_points(e);
        for (a, &v) in space.element_nodes(e).iter().enumerate() {
            if let Some(i) = space.free_index(v) {
                for ((p, wt), s) in pts.iter().zip(weights).zip(psi) {
                    acc[i] += wt * s * basis_value(&parent, a, *p);
                }
            }
        }
    };
    for part in &w.partition {
        for reg in part.regions.iter().filter(|r| r.sign != Sign::Zero && r.measure > 0.0) {
            let s = reg.sign.value();
            if reg.points.len() == 2 {
                let m = [0.5 * (reg.points[0][0] + reg.points[1][0]), 0.0];
                add(part.element, &[m], &[simplex_measure(&reg.points)], &[s]);
            } else {
                for k in 1..reg.points.len() - 1 {
                    let tri = [reg.points[0], reg.points[k], reg.points[k + 1]];
                    let c = [(tri[0][0] + tri[1][0] + tri[2][0]) / 3.0, (tri[0][1] + tri[1][1] + tri[2][1]) / 3.0];
                    add(part.element, &[c], &[simplex_measure(&tri)], &[s]);
                }
            }
        }
    }
    for p in &w.pieces {
        let m = simplex_measure(&p.points);
        if p.points.len() == 2 {
            // Simpson
            let mid = [0.5 * (p.points[0][0] + p.points[1][0]), 0.0];
            let vm = 0.5 * (p.values[0] + p.values[1]);
            add(
                p.element,
                &[p.points[0], mid, p.points[1]],
                &[m / 6.0, 4.0 * m / 6.0, m / 6.0],
                &[p.values[0], vm, p.values[1]],
            );
        } else {
            // edge midpoints
            let mut pts = Vec::new();
            let mut vals = Vec::new();
            for (i, j) in [(0, 1), (1, 2), (2, 0)] {
                pts.push([0.5 * (p.points[i][0] + p.points[j][0]), 0.5 * (p.points[i][1] + p.points[j][1])]);
                vals.push(0.5 * (p.values[i] + p.values[j]));
            }
            add(p.element, &pts, &[m / 3.0; 3], &vals);
        }
    }
    acc.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// The four-element space on (−1, 1) with nodes −1, −h, 0, h, 1 for the
/// interior jump.
pub fn jump_space(h: f64) -> Result<Arc<P1Space>> {
    let nodes = crate::theory::jump_mesh_nodes(h)?;
    build_space(interval_mesh(&nodes)?.into(), Problem::Jump1D)
}

/// Certifies the member of the jump family with `u_h(0) = beta`.
pub fn certify_family_jump(h: f64, beta: f64) -> Result<CertificateResult> {
    let j = jump_family(h, beta)?;
    let space = jump_space(h)?;
    let f = FEFunction::from_nodal(&space, vec![-1.0, j.alpha, j.beta, j.gamma, 1.0])?;
    certify_l1(&f, &TargetFunction::SgnX)
}

/// Area comparison at a node adjacent to the outflow boundary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AreaReport {
    pub node: usize,
    /// Total area of the node's triangles that also touch the outflow.
    pub touching: f64,
    /// Total area of its other triangles.
    pub remaining: f64,
    /// `touching ≤ remaining`: overshoot at this node is expected to vanish
    /// as q → 1.
    pub flag: bool,
}

/// For each non-Dirichlet node sharing an edge with an outflow node,
/// compares the areas of its triangles that do and do not touch the
/// outflow boundary.
///
/// Ties count as satisfied: the meshes with two diagonal orientations that
/// have overshoot-free L¹ solutions have equal areas at every such node.
pub fn area_heuristic_2d(mesh: &TriMesh) -> Vec<AreaReport> {
    let markers = mesh.markers();
    let is_out = |v: usize| markers[v] == Marker::Outflow;
    let mut out = Vec::new();
    for v in 0..mesh.num_nodes() {
        if matches!(markers[v], Marker::Inflow | Marker::Outflow) {
            continue;
        }
        if !mesh.neighbours(v).into_iter().any(is_out) {
            continue;
        }
        let (mut touching, mut remaining) = (0.0, 0.0);
        for (t, tri) in mesh.triangles().iter().enumerate() {
            if !tri.contains(&v) {
                continue;
            }
            if tri.iter().any(|&w| is_out(w)) {
                touching += mesh.area(t);
            } else {
                remaining += mesh.area(t);
            }
        }
        let flag = touching <= remaining * (1.0 + 1e-12);
        out.push(AreaReport { node: v, touching, remaining, flag });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{structured_square_mesh, Mesh1D, SquarePattern};
    use crate::theory::alpha_two_element_l1;

    fn two_element(h: f64, alpha: f64) -> FEFunction {
        let s = build_space(Mesh1D::from_lengths(0.0, &[1.0 - h, h]).unwrap().into(), Problem::Boundary1D).unwrap();
        FEFunction::from_free(&s, &[alpha]).unwrap()
    }

    #[test]
    fn two_element_small_h_uses_constant_psi0() {
        let h = 0.25;
        let r = certify_l1(&two_element(h, 1.0), &TargetFunction::ConstantOne).unwrap();
        assert_eq!(r.verdict, Verdict::Certified);
        let w = r.witness.unwrap();
        // the cheapest ψ0 is the constant −h/(1−h)
        let expect = -h / (1.0 - h);
        for p in &w.pieces {
            for v in &p.values {
                assert!((v - expect).abs() < 1e-9, "{v}");
            }
        }
        assert!((r.margin - (1.0 - h / (1.0 - h))).abs() < 1e-9);
    }

    #[test]
    fn two_element_large_h_measure_zero() {
        let h = 0.75;
        let a = alpha_two_element_l1(h).unwrap();
        let r = certify_l1(&two_element(h, a), &TargetFunction::ConstantOne).unwrap();
        assert_eq!(r.verdict, Verdict::Certified);
        assert!(r.witness.unwrap().pieces.is_empty());
        let r = certify_l1(&two_element(h, a + 0.05), &TargetFunction::ConstantOne).unwrap();
        assert_eq!(r.verdict, Verdict::NotOptimal);
        assert_eq!(r.violated_node, Some(1));
    }

    #[test]
    fn mesh1_all_ones_rejected_by_capacity() {
        let m = structured_square_mesh(SquarePattern::Mesh1, 0).unwrap();
        let s = build_space(m.into(), Problem::Boundary2D).unwrap();
        let r = certify_l1(&FEFunction::constant_free(&s, 1.0), &TargetFunction::ConstantOne).unwrap();
        assert_eq!(r.verdict, Verdict::NotOptimal);
        // forced 1/4 against capacity 1/12
        assert!((r.forced[0] - 0.25).abs() < 1e-12);
        assert!((r.margin - (1.0 / 12.0 - 0.25)).abs() < 1e-12);
    }

    #[test]
    fn mesh3_and_mesh4_all_ones_certified() {
        for p in [SquarePattern::Mesh3, SquarePattern::Mesh4] {
            let m = structured_square_mesh(p, 0).unwrap();
            let s = build_space(m.into(), Problem::Boundary2D).unwrap();
            let r = certify_l1(&FEFunction::constant_free(&s, 1.0), &TargetFunction::ConstantOne).unwrap();
            assert_eq!(r.verdict, Verdict::Certified, "{p:?}: {r:?}");
            assert!(r.verification.unwrap() < 1e-12);
        }
    }

    #[test]
    fn mesh2_all_ones_not_certified() {
        let m = structured_square_mesh(SquarePattern::Mesh2, 0).unwrap();
        let s = build_space(m.into(), Problem::Boundary2D).unwrap();
        let r = certify_l1(&FEFunction::constant_free(&s, 1.0), &TargetFunction::ConstantOne).unwrap();
        assert_ne!(r.verdict, Verdict::Certified);
    }

    #[test]
    fn jump_family_members() {
        for &(h, b) in &[(0.25, 0.7), (0.75, 0.0), (0.75, -1.0), (0.5, 1.0)] {
            let r = certify_family_jump(h, b).unwrap();
            assert_eq!(r.verdict, Verdict::Certified, "h={h} β={b}: {r:?}");
        }
        let s = jump_space(0.25).unwrap();
        let f = FEFunction::from_nodal(&s, vec![-1.0, -1.0, 0.7, 1.1, 1.0]).unwrap();
        let r = certify_l1(&f, &TargetFunction::SgnX).unwrap();
        assert_eq!(r.verdict, Verdict::NotOptimal);
    }

    #[test]
    fn area_flags_on_square_meshes() {
        let flags = |p| {
            let m = structured_square_mesh(p, 0).unwrap();
            area_heuristic_2d(&m).into_iter().map(|r| (m.vertices()[r.node], r.flag)).collect::<Vec<_>>()
        };
        let m4 = flags(SquarePattern::Mesh4);
        assert_eq!(m4.len(), 3);
        assert!(m4.iter().all(|x| x.1));
        let m2 = flags(SquarePattern::Mesh2);
        assert!(m2.contains(&([0.5, 0.0], false)));
        assert!(m2.contains(&([0.5, 1.0], true)));
    }
}
