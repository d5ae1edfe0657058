//! Continuous P1 spaces with Dirichlet constraints, targets, and nodal
//! diagnostics.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::mesh::{Marker, Mesh, Point};

const BARY_TOL: f64 = 1e-12;

/// Which constrained approximation problem a space belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Problem {
    /// `(0, 1)` with `u_h(0) = 1`, `u_h(1) = 0`.
    Boundary1D,
    /// `(-1, 1)` with `u_h(-1) = -1`, `u_h(1) = 1`.
    Jump1D,
    /// Unit square, `u_h = 1` on inflow and `0` on outflow vertices.
    Boundary2D,
}

impl Problem {
    pub fn name(self) -> &'static str {
        match self {
            Problem::Boundary1D => "boundary1d",
            Problem::Jump1D => "jump1d",
            Problem::Boundary2D => "boundary2d",
        }
    }

    /// Target used by the model problem.
    pub fn default_target(self) -> TargetFunction {
        match self {
            Problem::Jump1D => TargetFunction::SgnX,
            _ => TargetFunction::ConstantOne,
        }
    }
}

/// P1 space over a mesh with some nodal values fixed.
#[derive(Debug, Clone, PartialEq)]
pub struct P1Space {
    mesh: Mesh,
    problem: Problem,
    constrained: BTreeMap<usize, f64>,
    free: Vec<usize>,
    free_index: Vec<Option<usize>>,
}

fn near(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * (1.0 + b.abs())
}

/// Builds the constrained space for `problem` on `mesh`.
pub fn build_space(mesh: Mesh, problem: Problem) -> Result<Arc<P1Space>> {
    let mut constrained = BTreeMap::new();
    match (&mesh, problem) {
        (Mesh::Interval(m), Problem::Boundary1D | Problem::Jump1D) => {
            let (a, b) = m.domain();
            let (lo, hi, ua, ub) = match problem {
                Problem::Boundary1D => (0.0, 1.0, 1.0, 0.0),
                _ => (-1.0, 1.0, -1.0, 1.0),
            };
            if !near(a, lo) || !near(b, hi) {
                return Err(Error::InvalidProblem(format!(
                    "{} needs nodes at {lo} and {hi}, mesh spans ({a}, {b})",
                    problem.name()
                )));
            }
            constrained.insert(0, ua);
            constrained.insert(m.num_nodes() - 1, ub);
        }
        (Mesh::Triangle(m), Problem::Boundary2D) => {
            for (v, mk) in m.markers().iter().enumerate() {
                match mk {
                    Marker::Inflow => {
                        constrained.insert(v, 1.0);
                    }
                    Marker::Outflow => {
                        constrained.insert(v, 0.0);
                    }
                    _ => {}
                }
            }
            if !m.markers().contains(&Marker::Inflow) || !m.markers().contains(&Marker::Outflow) {
                return Err(Error::InvalidProblem("mesh has no inflow or no outflow vertices".into()));
            }
        }
        _ => {
            return Err(Error::InvalidProblem(format!(
                "{} is not defined on a {}D mesh",
                problem.name(),
                mesh.dim()
            )))
        }
    }
    let n = mesh.num_nodes();
    let free: Vec<usize> = (0..n).filter(|v| !constrained.contains_key(v)).collect();
    let mut free_index = vec![None; n];
    for (k, &v) in free.iter().enumerate() {
        free_index[v] = Some(k);
    }
    Ok(Arc::new(P1Space { mesh, problem, constrained, free, free_index }))
}

impl P1Space {
    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn problem(&self) -> Problem {
        self.problem
    }

    pub fn constrained(&self) -> &BTreeMap<usize, f64> {
        &self.constrained
    }

    /// Unconstrained node indices, ascending.
    pub fn free_nodes(&self) -> &[usize] {
        &self.free
    }

    pub fn num_free(&self) -> usize {
        self.free.len()
    }

    pub fn num_nodes(&self) -> usize {
        self.mesh.num_nodes()
    }

    pub fn num_elements(&self) -> usize {
        self.mesh.num_elements()
    }

    /// Position of `node` among the free nodes.
    pub fn free_index(&self, node: usize) -> Option<usize> {
        self.free_index[node]
    }

    /// Global node indices of element `e` (2 in 1D, 3 in 2D).
    pub fn element_nodes(&self, e: usize) -> Vec<usize> {
        match &self.mesh {
            Mesh::Interval(_) => vec![e, e + 1],
            Mesh::Triangle(m) => m.triangles()[e].to_vec(),
        }
    }

    pub fn element_points(&self, e: usize) -> Vec<Point> {
        self.element_nodes(e).into_iter().map(|v| self.mesh.node(v)).collect()
    }

    /// Nonzero hat-function values at `p` as `(node, value)` pairs.
    pub fn basis_at(&self, p: Point) -> Result<Vec<(usize, f64)>> {
        let (e, bary) = self.locate(p)?;
        Ok(self.element_nodes(e).into_iter().zip(bary).collect())
    }

    /// Element containing `p` and the barycentric coordinates of `p` in it.
    pub fn locate(&self, p: Point) -> Result<(usize, Vec<f64>)> {
        match &self.mesh {
            Mesh::Interval(m) => {
                let x = p[0];
                let xs = m.breakpoints();
                let (a, b) = m.domain();
                let tol = BARY_TOL * (b - a);
                if x < a - tol || x > b + tol {
                    return Err(Error::OutOfDomain(p[0], p[1]));
                }
                let e = xs[1..].partition_point(|&xi| xi < x).min(m.num_elements() - 1);
                let t = ((x - xs[e]) / m.h(e)).clamp(0.0, 1.0);
                Ok((e, vec![1.0 - t, t]))
            }
            Mesh::Triangle(m) => {
                for t in 0..m.num_elements() {
                    let [a, b, c] = m.triangle_points(t);
                    let l = barycentric(a, b, c, p);
                    if l.iter().all(|&li| li >= -BARY_TOL) {
                        return Ok((t, l.to_vec()));
                    }
                }
                Err(Error::OutOfDomain(p[0], p[1]))
            }
        }
    }
}

/// Barycentric coordinates of `p` with respect to triangle `(a, b, c)`.
pub fn barycentric(a: Point, b: Point, c: Point, p: Point) -> [f64; 3] {
    let det = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
    let l1 = ((p[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (p[1] - a[1])) / det;
    let l2 = ((b[0] - a[0]) * (p[1] - a[1]) - (p[0] - a[0]) * (b[1] - a[1])) / det;
    [1.0 - l1 - l2, l1, l2]
}

/// A P1 function given by its value at every node.
#[derive(Debug, Clone, PartialEq)]
pub struct FEFunction {
    space: Arc<P1Space>,
    coeffs: Vec<f64>,
}

impl FEFunction {
    /// The Dirichlet lift: constrained values in place, zero elsewhere.
    pub fn lift(space: &Arc<P1Space>) -> Self {
        let mut coeffs = vec![0.0; space.num_nodes()];
        for (&v, &val) in &space.constrained {
            coeffs[v] = val;
        }
        FEFunction { space: space.clone(), coeffs }
    }

    /// Lift plus the given values on the free nodes (in free-node order).
    pub fn from_free(space: &Arc<P1Space>, free_values: &[f64]) -> Result<Self> {
        let mut f = Self::lift(space);
        f.set_free(free_values)?;
        Ok(f)
    }

    /// Every free node set to `value`.
    pub fn constant_free(space: &Arc<P1Space>, value: f64) -> Self {
        let mut f = Self::lift(space);
        for &v in &space.free {
            f.coeffs[v] = value;
        }
        f
    }

    /// Full nodal vector; constrained entries must match the constraints.
    pub fn from_nodal(space: &Arc<P1Space>, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.len() != space.num_nodes() {
            return Err(Error::InvalidProblem(format!(
                "{} coefficients for {} nodes",
                coeffs.len(),
                space.num_nodes()
            )));
        }
        for (&v, &val) in &space.constrained {
            if coeffs[v] != val {
                return Err(Error::InvalidProblem(format!(
                    "node {v} is constrained to {val} but coefficient is {}",
                    coeffs[v]
                )));
            }
        }
        Ok(FEFunction { space: space.clone(), coeffs })
    }

    pub fn space(&self) -> &Arc<P1Space> {
        &self.space
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn free_values(&self) -> Vec<f64> {
        self.space.free.iter().map(|&v| self.coeffs[v]).collect()
    }

    pub fn set_free(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.space.num_free() {
            return Err(Error::InvalidProblem(format!(
                "{} values for {} free nodes",
                values.len(),
                self.space.num_free()
            )));
        }
        for (&v, &x) in self.space.free.iter().zip(values) {
            self.coeffs[v] = x;
        }
        Ok(())
    }

    /// Value at node `v`.
    pub fn at_node(&self, v: usize) -> f64 {
        self.coeffs[v]
    }
}

/// Evaluates `f` at `p` by barycentric interpolation.
pub fn eval(f: &FEFunction, p: Point) -> Result<f64> {
    let (e, bary) = f.space.locate(p)?;
    Ok(f.space.element_nodes(e).iter().zip(bary).map(|(&v, l)| l * f.coeffs[v]).sum())
}

/// How a custom target may be integrated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Smoothness {
    /// Affine on every element of the meshes it is used with.
    PiecewiseAffine,
    /// Smooth; only supported in 1D.
    Smooth,
}

/// The function being approximated.
#[derive(Clone)]
pub enum TargetFunction {
    ConstantOne,
    /// `sgn(x)`, with `sgn(0) = 0`.
    SgnX,
    /// `1 + a sin(2πkx)`.
    SinePerturbed { amplitude: f64, frequency: f64 },
    /// `(1 − e^{−(1−x)/ε}) / (1 − e^{−1/ε})`.
    BoundaryLayer { epsilon: f64 },
    Custom { f: Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>, smoothness: Smoothness },
}

impl fmt::Debug for TargetFunction {
    fn fmt(&self, fm: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TargetFunction::ConstantOne => write!(fm, "ConstantOne"),
            TargetFunction::SgnX => write!(fm, "SgnX"),
            TargetFunction::SinePerturbed { amplitude, frequency } => {
                write!(fm, "SinePerturbed({amplitude}, {frequency})")
            }
            TargetFunction::BoundaryLayer { epsilon } => write!(fm, "BoundaryLayer({epsilon})"),
            TargetFunction::Custom { smoothness, .. } => write!(fm, "Custom({smoothness:?})"),
        }
    }
}

impl TargetFunction {
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        match self {
            TargetFunction::ConstantOne => 1.0,
            TargetFunction::SgnX => {
                if x > 0.0 {
                    1.0
                } else if x < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }
            TargetFunction::SinePerturbed { amplitude, frequency } => {
                1.0 + amplitude * (2.0 * std::f64::consts::PI * frequency * x).sin()
            }
            TargetFunction::BoundaryLayer { epsilon } => {
                // expm1 keeps full precision when (1 − x)/ε is small
                let num = -(-(1.0 - x) / epsilon).exp_m1();
                let den = -(-1.0 / epsilon).exp_m1();
                num / den
            }
            TargetFunction::Custom { f, .. } => f(x, y),
        }
    }

    /// Whether the residual is affine on each element (exact geometry path).
    pub fn is_piecewise_affine(&self) -> bool {
        match self {
            TargetFunction::ConstantOne | TargetFunction::SgnX => true,
            TargetFunction::Custom { smoothness, .. } => *smoothness == Smoothness::PiecewiseAffine,
            _ => false,
        }
    }

    /// Vertex values of the affine function agreeing with the target inside
    /// element `e`. Sampling happens at interior points, so jumps located
    /// on element boundaries are harmless.
    pub fn element_affine_values(&self, space: &P1Space, e: usize) -> Result<Vec<f64>> {
        let pts = space.element_points(e);
        let not_affine =
            || Error::InvalidProblem(format!("target {self:?} is not affine on element {e}"));
        if pts.len() == 2 {
            let (a, b) = (pts[0][0], pts[1][0]);
            let at = |t: f64| self.eval(a + t * (b - a), 0.0);
            let (p1, p3) = (at(0.25), at(0.75));
            let va = 1.5 * p1 - 0.5 * p3;
            let vb = 1.5 * p3 - 0.5 * p1;
            let scale = 1.0 + va.abs().max(vb.abs());
            if (at(0.5) - 0.5 * (va + vb)).abs() > 1e-10 * scale {
                return Err(not_affine());
            }
            Ok(vec![va, vb])
        } else {
            let at = |l: [f64; 3]| {
                let x = l[0] * pts[0][0] + l[1] * pts[1][0] + l[2] * pts[2][0];
                let y = l[0] * pts[0][1] + l[1] * pts[1][1] + l[2] * pts[2][1];
                self.eval(x, y)
            };
            let (s, t) = (2.0 / 3.0, 1.0 / 6.0);
            let p = [at([s, t, t]), at([t, s, t]), at([t, t, s])];
            let sum: f64 = p.iter().sum();
            let v: Vec<f64> = p.iter().map(|pk| 2.0 * (pk - sum / 6.0)).collect();
            let centroid = at([1.0 / 3.0; 3]);
            let scale = 1.0 + v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            if (centroid - sum / 3.0).abs() > 1e-10 * scale {
                return Err(not_affine());
            }
            Ok(v)
        }
    }
}

/// Extreme nodal deviations of an approximation from the target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OvershootReport {
    /// `max (f − u)` over free nodes, at least 0.
    pub max_over: f64,
    /// `max (u − f)` over free nodes, at least 0.
    pub max_under: f64,
    /// Free node with the largest `|f − u|`.
    pub worst_node: Option<usize>,
}

/// Largest over- and undershoot of `f` relative to `u` at the free nodes.
/// Constrained nodes are excluded: their values are prescribed rather than
/// approximated.
pub fn nodal_overshoot(f: &FEFunction, u: &TargetFunction) -> OvershootReport {
    let mesh = f.space.mesh();
    let mut rep = OvershootReport { max_over: 0.0, max_under: 0.0, worst_node: None };
    let mut worst = -1.0;
    for &v in f.space.free_nodes() {
        let p = mesh.node(v);
        let d = f.coeffs[v] - u.eval(p[0], p[1]);
        rep.max_over = rep.max_over.max(d);
        rep.max_under = rep.max_under.max(-d);
        if d.abs() > worst {
            worst = d.abs();
            rep.worst_node = Some(v);
        }
    }
    rep
}
