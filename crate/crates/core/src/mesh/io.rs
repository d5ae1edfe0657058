//! Plain-text mesh format.
//!
//! ```text
//! lqmesh 1 <dim>
//! <nv> <ne>
//! <nv coordinate lines, 1 or 2 reals>
//! <ne element lines, 2 or 3 one-based vertex indices>
//! <nv marker lines: I, O, L or .>
//! ```
//! Blank lines and lines starting with `#` are ignored.

use std::fmt::Write as _;
use std::path::Path;

use super::{signed_area, Marker, Mesh, Mesh1D, TriMesh};
use crate::error::{Error, Result};

fn fmt_real(x: f64) -> String {
    // 17 significant digits round-trips every f64
    format!("{x:.16e}")
}

/// Serializes a mesh to the text format.
pub fn write_mesh(mesh: &Mesh) -> String {
    let mut s = String::new();
    match mesh {
        Mesh::Interval(m) => {
            let n = m.num_nodes();
            writeln!(s, "lqmesh 1 1").unwrap();
            writeln!(s, "{} {}", n, m.num_elements()).unwrap();
            for &x in m.breakpoints() {
                writeln!(s, "{}", fmt_real(x)).unwrap();
            }
            for e in 0..m.num_elements() {
                writeln!(s, "{} {}", e + 1, e + 2).unwrap();
            }
            for v in 0..n {
                let c = if v == 0 { 'I' } else if v + 1 == n { 'O' } else { '.' };
                writeln!(s, "{c}").unwrap();
            }
        }
        Mesh::Triangle(m) => {
            writeln!(s, "lqmesh 1 2").unwrap();
            writeln!(s, "{} {}", m.num_nodes(), m.num_elements()).unwrap();
            for p in m.vertices() {
                writeln!(s, "{} {}", fmt_real(p[0]), fmt_real(p[1])).unwrap();
            }
            for t in m.triangles() {
                writeln!(s, "{} {} {}", t[0] + 1, t[1] + 1, t[2] + 1).unwrap();
            }
            for mk in m.markers() {
                writeln!(s, "{}", mk.as_char()).unwrap();
            }
        }
    }
    s
}

pub fn save_mesh(mesh: &Mesh, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, write_mesh(mesh))?;
    Ok(())
}

pub fn load_mesh(path: impl AsRef<Path>) -> Result<Mesh> {
    read_mesh(&std::fs::read_to_string(path)?)
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    last: usize,
}

impl<'a> Lines<'a> {
    fn next(&mut self, what: &str) -> Result<(usize, Vec<&'a str>)> {
        for (i, line) in self.inner.by_ref() {
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            self.last = i + 1;
            return Ok((i + 1, t.split_whitespace().collect()));
        }
        Err(Error::Parse { line: self.last + 1, msg: format!("unexpected end of file, expected {what}") })
    }
}

fn perr(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { line, msg: msg.into() }
}

fn parse_f(line: usize, tok: &str) -> Result<f64> {
    let x: f64 = tok.parse().map_err(|_| perr(line, format!("invalid real '{tok}'")))?;
    if !x.is_finite() {
        return Err(perr(line, format!("non-finite coordinate '{tok}'")));
    }
    Ok(x)
}

fn parse_index(line: usize, tok: &str, nv: usize) -> Result<usize> {
    let k: usize = tok.parse().map_err(|_| perr(line, format!("invalid vertex index '{tok}'")))?;
    if k == 0 || k > nv {
        return Err(perr(line, format!("vertex index {k} out of range 1..={nv}")));
    }
    Ok(k - 1)
}

/// Parses the text format.
pub fn read_mesh(text: &str) -> Result<Mesh> {
    let mut lines = Lines { inner: text.lines().enumerate(), last: 0 };
    let (ln, head) = lines.next("header")?;
    if head.len() != 3 || head[0] != "lqmesh" || head[1] != "1" {
        return Err(perr(ln, "expected header 'lqmesh 1 <dim>'"));
    }
    let dim = match head[2] {
        "1" => 1,
        "2" => 2,
        d => return Err(perr(ln, format!("unsupported dimension '{d}'"))),
    };
    let (ln, counts) = lines.next("counts")?;
    if counts.len() != 2 {
        return Err(perr(ln, "expected '<nv> <ne>'"));
    }
    let nv: usize = counts[0].parse().map_err(|_| perr(ln, "invalid vertex count"))?;
    let ne: usize = counts[1].parse().map_err(|_| perr(ln, "invalid element count"))?;

    let mut coords = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (ln, toks) = lines.next("vertex coordinates")?;
        if toks.len() != dim {
            return Err(perr(ln, format!("expected {dim} coordinate(s), got {}", toks.len())));
        }
        let x = parse_f(ln, toks[0])?;
        let y = if dim == 2 { parse_f(ln, toks[1])? } else { 0.0 };
        coords.push([x, y]);
    }
    let mut elems = Vec::with_capacity(ne);
    for _ in 0..ne {
        let (ln, toks) = lines.next("element")?;
        if toks.len() != dim + 1 {
            return Err(perr(ln, format!("expected {} vertex indices, got {}", dim + 1, toks.len())));
        }
        let idx = toks.iter().map(|t| parse_index(ln, t, nv)).collect::<Result<Vec<_>>>()?;
        elems.push((ln, idx));
    }
    let mut markers = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (ln, toks) = lines.next("boundary marker")?;
        let mut chars = toks[0].chars();
        let m = match (chars.next(), chars.next(), toks.len()) {
            (Some(c), None, 1) => Marker::from_char(c),
            _ => None,
        };
        markers.push(m.ok_or_else(|| perr(ln, format!("invalid marker '{}'", toks.join(" "))))?);
    }
    if let Ok((ln, _)) = lines.next("") {
        return Err(perr(ln, "trailing content after markers"));
    }

    if dim == 1 {
        for (k, (ln, e)) in elems.iter().enumerate() {
            if e[0] != k || e[1] != k + 1 {
                return Err(perr(*ln, "1D elements must join consecutive vertices in order"));
            }
        }
        if ne + 1 != nv {
            return Err(perr(2, format!("1D mesh with {nv} vertices must have {} elements", nv.saturating_sub(1))));
        }
        let xs = coords.iter().map(|p| p[0]).collect();
        return Ok(Mesh::Interval(Mesh1D::new(xs)?));
    }

    let mut tris = Vec::with_capacity(ne);
    for (ln, e) in &elems {
        let t = [e[0], e[1], e[2]];
        if signed_area(coords[t[0]], coords[t[1]], coords[t[2]]) <= 0.0 {
            return Err(perr(*ln, "orientation: triangle is not counter-clockwise"));
        }
        tris.push(t);
    }
    Ok(Mesh::Triangle(TriMesh::new(coords, tris, markers)?))
}
