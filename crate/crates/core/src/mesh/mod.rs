//! Interval and triangle meshes.
//!
//! Meshes are immutable once built. A [`TriMesh`] always stores its
//! triangles counter-clockwise with the lowest vertex index first, so two
//! meshes built from the same data compare equal regardless of how the
//! input listed each triangle.

mod io;
mod structured;
mod unstructured;

use std::collections::HashMap;

use crate::error::{Error, Result};

pub use io::{load_mesh, read_mesh, save_mesh, write_mesh};
pub use structured::{criss_cross, structured_square_mesh, SquarePattern};
pub use unstructured::UnstructuredMesh;

pub type Point = [f64; 2];

/// Partition `x_0 < x_1 < ... < x_N` of an interval.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh1D {
    breakpoints: Vec<f64>,
}

/// Builds a [`Mesh1D`] from strictly increasing breakpoints.
pub fn interval_mesh(breakpoints: &[f64]) -> Result<Mesh1D> {
    Mesh1D::new(breakpoints.to_vec())
}

impl Mesh1D {
    pub fn new(breakpoints: Vec<f64>) -> Result<Self> {
        if breakpoints.len() < 2 {
            return Err(Error::InvalidMesh(format!(
                "need at least 2 breakpoints, got {}",
                breakpoints.len()
            )));
        }
        if breakpoints.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidMesh("non-finite breakpoint".into()));
        }
        if let Some(i) = breakpoints.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::InvalidMesh(format!(
                "breakpoints not strictly increasing at index {} ({} >= {})",
                i + 1,
                breakpoints[i],
                breakpoints[i + 1]
            )));
        }
        Ok(Mesh1D { breakpoints })
    }

    /// Mesh starting at `start` with the given element lengths.
    pub fn from_lengths(start: f64, lengths: &[f64]) -> Result<Self> {
        let mut pts = Vec::with_capacity(lengths.len() + 1);
        let mut x = start;
        pts.push(x);
        for &h in lengths {
            x += h;
            pts.push(x);
        }
        Self::new(pts)
    }

    /// `n` equal elements on `(a, b)`.
    pub fn uniform(a: f64, b: f64, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidMesh("zero elements".into()));
        }
        let pts = (0..=n)
            .map(|i| if i == n { b } else { a + (b - a) * i as f64 / n as f64 })
            .collect();
        Self::new(pts)
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn num_nodes(&self) -> usize {
        self.breakpoints.len()
    }

    pub fn num_elements(&self) -> usize {
        self.breakpoints.len() - 1
    }

    /// Length of element `i` (0-based).
    pub fn h(&self, i: usize) -> f64 {
        self.breakpoints[i + 1] - self.breakpoints[i]
    }

    pub fn element_lengths(&self) -> Vec<f64> {
        self.breakpoints.windows(2).map(|w| w[1] - w[0]).collect()
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.breakpoints[0], *self.breakpoints.last().unwrap())
    }
}

/// Boundary tag of a 2D vertex.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Marker {
    Inflow,
    Outflow,
    Lateral,
    Interior,
}

impl Marker {
    pub fn as_char(self) -> char {
        match self {
            Marker::Inflow => 'I',
            Marker::Outflow => 'O',
            Marker::Lateral => 'L',
            Marker::Interior => '.',
        }
    }

    pub fn from_char(c: char) -> Option<Self> {
        match c {
            'I' => Some(Marker::Inflow),
            'O' => Some(Marker::Outflow),
            'L' => Some(Marker::Lateral),
            '.' => Some(Marker::Interior),
            _ => None,
        }
    }
}

const GEOM_TOL: f64 = 1e-12;

/// Signed area of the triangle `(a, b, c)`; positive when counter-clockwise.
pub fn signed_area(a: Point, b: Point, c: Point) -> f64 {
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
}

/// Conforming triangulation of an axis-aligned rectangle.
#[derive(Debug, Clone, PartialEq)]
pub struct TriMesh {
    vertices: Vec<Point>,
    triangles: Vec<[usize; 3]>,
    markers: Vec<Marker>,
}

fn canonical(tri: [usize; 3]) -> [usize; 3] {
    let k = (0..3).min_by_key(|&k| tri[k]).unwrap();
    [tri[k], tri[(k + 1) % 3], tri[(k + 2) % 3]]
}

impl TriMesh {
    /// Builds and validates a mesh. Triangles must be counter-clockwise.
    pub fn new(vertices: Vec<Point>, triangles: Vec<[usize; 3]>, markers: Vec<Marker>) -> Result<Self> {
        if markers.len() != vertices.len() {
            return Err(Error::InvalidMesh(format!(
                "{} markers for {} vertices",
                markers.len(),
                vertices.len()
            )));
        }
        for (t, tri) in triangles.iter().enumerate() {
            if tri.iter().any(|&v| v >= vertices.len()) {
                return Err(Error::InvalidMesh(format!("triangle {t} references a missing vertex")));
            }
            if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
                return Err(Error::DegenerateElement(t));
            }
        }
        let mesh = TriMesh {
            vertices,
            triangles: triangles.into_iter().map(canonical).collect(),
            markers,
        };
        mesh.validate()?;
        Ok(mesh)
    }

    /// Builds a mesh whose markers are inferred from the bounding box.
    pub fn with_inferred_markers(vertices: Vec<Point>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        let markers = infer_markers(&vertices);
        Self::new(vertices, triangles, markers)
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn markers(&self) -> &[Marker] {
        &self.markers
    }

    pub fn num_nodes(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_elements(&self) -> usize {
        self.triangles.len()
    }

    pub fn triangle_points(&self, t: usize) -> [Point; 3] {
        let [a, b, c] = self.triangles[t];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    pub fn area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangle_points(t);
        signed_area(a, b, c)
    }

    /// `(xmin, xmax, ymin, ymax)`.
    pub fn bounding_box(&self) -> (f64, f64, f64, f64) {
        bbox(&self.vertices)
    }

    /// Edge (sorted vertex pair) → indices of triangles containing it.
    pub fn edge_map(&self) -> HashMap<(usize, usize), Vec<usize>> {
        let mut map: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
        for (t, tri) in self.triangles.iter().enumerate() {
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                map.entry((a.min(b), a.max(b))).or_default().push(t);
            }
        }
        map
    }

    /// Checks orientation, conformity, coverage and marker consistency.
    pub fn validate(&self) -> Result<()> {
        if self.vertices.len() < 3 || self.triangles.is_empty() {
            return Err(Error::InvalidMesh("empty mesh".into()));
        }
        let (x0, x1, y0, y1) = self.bounding_box();
        let box_area = (x1 - x0) * (y1 - y0);
        if !(box_area > 0.0) {
            return Err(Error::InvalidMesh("degenerate bounding box".into()));
        }
        let scale = GEOM_TOL * (x1 - x0).max(y1 - y0);
        let mut total = 0.0;
        for t in 0..self.triangles.len() {
            let a = self.area(t);
            if a <= GEOM_TOL * box_area {
                return Err(if a.abs() <= GEOM_TOL * box_area {
                    Error::DegenerateElement(t)
                } else {
                    Error::InvalidMesh(format!("triangle {t} has clockwise orientation"))
                });
            }
            total += a;
        }
        if ((total - box_area) / box_area).abs() > 1e-12 {
            return Err(Error::InvalidMesh(format!(
                "triangle areas sum to {total}, bounding box area is {box_area}"
            )));
        }
        let on_side = |p: Point| {
            [
                (p[0] - x0).abs() <= scale,
                (p[0] - x1).abs() <= scale,
                (p[1] - y0).abs() <= scale,
                (p[1] - y1).abs() <= scale,
            ]
        };
        for ((a, b), tris) in self.edge_map() {
            match tris.len() {
                1 => {
                    let (sa, sb) = (on_side(self.vertices[a]), on_side(self.vertices[b]));
                    if !(0..4).any(|k| sa[k] && sb[k]) {
                        return Err(Error::InvalidMesh(format!(
                            "edge ({a}, {b}) has one neighbour but is not on the boundary"
                        )));
                    }
                }
                2 => {}
                n => {
                    return Err(Error::InvalidMesh(format!("edge ({a}, {b}) shared by {n} triangles")));
                }
            }
        }
        let expected = infer_markers(&self.vertices);
        for (v, (&m, &e)) in self.markers.iter().zip(expected.iter()).enumerate() {
            let ok = match e {
                Marker::Inflow | Marker::Outflow | Marker::Interior => m == e,
                // corners of the lateral sides may be tagged either way
                Marker::Lateral => m == Marker::Lateral,
            };
            if !ok {
                return Err(Error::InvalidMesh(format!(
                    "vertex {v} marked {:?} but geometry implies {:?}",
                    m, e
                )));
            }
        }
        Ok(())
    }

    /// Vertices sharing an edge with `v`, ascending.
    pub fn neighbours(&self, v: usize) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .triangles
            .iter()
            .filter(|t| t.contains(&v))
            .flat_map(|t| t.iter().copied())
            .filter(|&w| w != v)
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }
}

fn bbox(vertices: &[Point]) -> (f64, f64, f64, f64) {
    vertices.iter().fold(
        (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY),
        |(a, b, c, d), p| (a.min(p[0]), b.max(p[0]), c.min(p[1]), d.max(p[1])),
    )
}

fn infer_markers(vertices: &[Point]) -> Vec<Marker> {
    let (x0, x1, y0, y1) = bbox(vertices);
    let scale = GEOM_TOL * (x1 - x0).max(y1 - y0).max(1.0);
    vertices
        .iter()
        .map(|p| {
            if (p[0] - x0).abs() <= scale {
                Marker::Inflow
            } else if (p[0] - x1).abs() <= scale {
                Marker::Outflow
            } else if (p[1] - y0).abs() <= scale || (p[1] - y1).abs() <= scale {
                Marker::Lateral
            } else {
                Marker::Interior
            }
        })
        .collect()
}

/// Either kind of mesh.
#[derive(Debug, Clone, PartialEq)]
pub enum Mesh {
    Interval(Mesh1D),
    Triangle(TriMesh),
}

impl Mesh {
    pub fn dim(&self) -> usize {
        match self {
            Mesh::Interval(_) => 1,
            Mesh::Triangle(_) => 2,
        }
    }

    pub fn num_nodes(&self) -> usize {
        match self {
            Mesh::Interval(m) => m.num_nodes(),
            Mesh::Triangle(m) => m.num_nodes(),
        }
    }

    pub fn num_elements(&self) -> usize {
        match self {
            Mesh::Interval(m) => m.num_elements(),
            Mesh::Triangle(m) => m.num_elements(),
        }
    }

    /// Coordinates of node `i` (`y = 0` in 1D).
    pub fn node(&self, i: usize) -> Point {
        match self {
            Mesh::Interval(m) => [m.breakpoints()[i], 0.0],
            Mesh::Triangle(m) => m.vertices()[i],
        }
    }

    /// Length or area of element `e`.
    pub fn measure(&self, e: usize) -> f64 {
        match self {
            Mesh::Interval(m) => m.h(e),
            Mesh::Triangle(m) => m.area(e),
        }
    }

    pub fn as_1d(&self) -> Option<&Mesh1D> {
        match self {
            Mesh::Interval(m) => Some(m),
            Mesh::Triangle(_) => None,
        }
    }

    pub fn as_2d(&self) -> Option<&TriMesh> {
        match self {
            Mesh::Triangle(m) => Some(m),
            Mesh::Interval(_) => None,
        }
    }
}

impl From<Mesh1D> for Mesh {
    fn from(m: Mesh1D) -> Self {
        Mesh::Interval(m)
    }
}

impl From<TriMesh> for Mesh {
    fn from(m: TriMesh) -> Self {
        Mesh::Triangle(m)
    }
}

/// Affine map sending a physical triangle onto the reference triangle
/// `(0,0), (1,0), (0,1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineMap {
    pub linear: [[f64; 2]; 2],
    pub translation: [f64; 2],
    /// `|det|` of the reference-to-physical map, i.e. twice the physical area.
    pub jacobian_abs: f64,
}

impl AffineMap {
    pub fn apply(&self, p: Point) -> Point {
        let l = &self.linear;
        [
            l[0][0] * p[0] + l[0][1] * p[1] + self.translation[0],
            l[1][0] * p[0] + l[1][1] * p[1] + self.translation[1],
        ]
    }
}

/// Map taking `tri[0], tri[1], tri[2]` to `(0,0), (1,0), (0,1)`.
pub fn affine_to_reference(tri: [Point; 3]) -> Result<AffineMap> {
    let [p0, p1, p2] = tri;
    let (a, b) = (p1[0] - p0[0], p2[0] - p0[0]);
    let (c, d) = (p1[1] - p0[1], p2[1] - p0[1]);
    let det = a * d - b * c;
    let scale = (a.abs() + b.abs() + c.abs() + d.abs()).powi(2);
    if det.abs() <= 1e-14 * scale || scale == 0.0 {
        return Err(Error::DegenerateElement(0));
    }
    let linear = [[d / det, -b / det], [-c / det, a / det]];
    let translation = [
        -(linear[0][0] * p0[0] + linear[0][1] * p0[1]),
        -(linear[1][0] * p0[0] + linear[1][1] * p0[1]),
    ];
    Ok(AffineMap { linear, translation, jacobian_abs: det.abs() })
}
