//! Resolving mesh, problem, target and candidate arguments.

use std::sync::Arc;

use lqgibbs_core::fespace::{build_space, FEFunction, P1Space, Problem, TargetFunction};
use lqgibbs_core::mesh::{
    interval_mesh, load_mesh, structured_square_mesh, Mesh, Mesh1D, SquarePattern, UnstructuredMesh,
};
use lqgibbs_core::theory;

use crate::table::parse_list;
use crate::CliError;

pub const MESH_SOURCES: &str = "mesh1|mesh2|mesh3|mesh4|mesh-a|mesh-b|mesh-c|mesh-oversized|uniform:N|h:H1,H2,..|nodes:X0,X1,..|jump:H|FILE";

/// Mesh from a built-in name, an inline 1D description or a file. Also
/// returns the problem implied by the source.
pub fn resolve_mesh(src: &str, refine: u32) -> Result<(Mesh, Problem), CliError> {
    let with_default = |m: Mesh| {
        let p = if m.dim() == 1 { Problem::Boundary1D } else { Problem::Boundary2D };
        (m, p)
    };
    if let Some(p) = SquarePattern::parse(src) {
        return Ok(with_default(structured_square_mesh(p, refine)?.into()));
    }
    if refine > 0 {
        return Err(CliError::Usage("--refine only applies to mesh1".into()));
    }
    if let Some(m) = UnstructuredMesh::parse(src) {
        return Ok(with_default(m.load()?.into()));
    }
    if let Some((kind, arg)) = src.split_once(':') {
        let mesh: Mesh = match kind {
            "uniform" => {
                let n: usize = arg.parse().map_err(|_| CliError::Usage(format!("bad element count '{arg}'")))?;
                Mesh1D::uniform(0.0, 1.0, n)?.into()
            }
            "h" => Mesh1D::from_lengths(0.0, &parse_list(arg)?)?.into(),
            "nodes" => interval_mesh(&parse_list(arg)?)?.into(),
            "jump" => {
                let h: f64 = arg.parse().map_err(|_| CliError::Usage(format!("bad jump width '{arg}'")))?;
                let m: Mesh = interval_mesh(&theory::jump_mesh_nodes(h)?)?.into();
                return Ok((m, Problem::Jump1D));
            }
            _ => return Ok(with_default(load_mesh(src)?)),
        };
        return Ok(with_default(mesh));
    }
    Ok(with_default(load_mesh(src)?))
}

pub fn parse_problem(s: &str) -> Result<Problem, CliError> {
    match s {
        "boundary1d" => Ok(Problem::Boundary1D),
        "jump1d" => Ok(Problem::Jump1D),
        "boundary2d" => Ok(Problem::Boundary2D),
        _ => Err(CliError::Usage(format!("unknown problem '{s}' (boundary1d|jump1d|boundary2d)"))),
    }
}

pub fn parse_target(s: &str) -> Result<TargetFunction, CliError> {
    let bad = || CliError::Usage(format!("unknown target '{s}' (const1|sgnx|sine:A:K|layer:EPS)"));
    let num = |x: &str| x.parse::<f64>().map_err(|_| bad());
    let parts: Vec<&str> = s.split(':').collect();
    match parts.as_slice() {
        ["const1"] => Ok(TargetFunction::ConstantOne),
        ["sgnx"] => Ok(TargetFunction::SgnX),
        ["sine", a, k] => Ok(TargetFunction::SinePerturbed { amplitude: num(a)?, frequency: num(k)? }),
        ["layer", e] => {
            let epsilon = num(e)?;
            if !(epsilon > 0.0) {
                return Err(bad());
            }
            Ok(TargetFunction::BoundaryLayer { epsilon })
        }
        _ => Err(bad()),
    }
}

/// Space and target for a command.
pub struct Setup {
    pub space: Arc<P1Space>,
    pub target: TargetFunction,
}

pub fn setup(mesh: &str, refine: u32, problem: Option<&str>, target: Option<&str>) -> Result<Setup, CliError> {
    let (mesh, implied) = resolve_mesh(mesh, refine)?;
    let problem = problem.map(parse_problem).transpose()?.unwrap_or(implied);
    let target = target.map(parse_target).transpose()?.unwrap_or_else(|| problem.default_target());
    Ok(Setup { space: build_space(mesh, problem)?, target })
}

/// Candidate coefficients read from text: one value per free node or per
/// node, separated by commas or whitespace, `#` starting a comment.
pub fn coeffs_from_text(space: &Arc<P1Space>, text: &str) -> Result<FEFunction, CliError> {
    let mut vals = Vec::new();
    for line in text.lines() {
        let line = line.split('#').next().unwrap_or("");
        for tok in line.split(|c: char| c == ',' || c.is_whitespace()).filter(|t| !t.is_empty()) {
            vals.push(tok.parse::<f64>().map_err(|_| CliError::Usage(format!("'{tok}' is not a number")))?);
        }
    }
    if vals.len() == space.num_free() {
        Ok(FEFunction::from_free(space, &vals)?)
    } else if vals.len() == space.num_nodes() {
        Ok(FEFunction::from_nodal(space, vals)?)
    } else {
        Err(CliError::Usage(format!(
            "expected {} free or {} nodal values, got {}",
            space.num_free(),
            space.num_nodes(),
            vals.len()
        )))
    }
}

pub const THEORY_CANDIDATES: &str = "ones|two-element|remark|mesh1|jump:BETA";

/// Candidates given by the closed-form results.
pub fn coeffs_from_theory(space: &Arc<P1Space>, name: &str) -> Result<FEFunction, CliError> {
    let lengths = || -> Result<Vec<f64>, CliError> {
        match space.mesh() {
            Mesh::Interval(m) if space.problem() == Problem::Boundary1D => Ok(m.element_lengths()),
            _ => Err(CliError::Usage(format!("'{name}' needs a 1D boundary problem"))),
        }
    };
    let ones = FEFunction::constant_free(space, 1.0);
    match name {
        "ones" => Ok(ones),
        "two-element" => {
            let h = lengths()?;
            if h.len() != 2 {
                return Err(CliError::Usage("'two-element' needs a two-element mesh".into()));
            }
            Ok(FEFunction::from_free(space, &[theory::alpha_two_element_l1(h[1])?])?)
        }
        "remark" => {
            let h = lengths()?;
            let mut vals = vec![1.0; space.num_free()];
            *vals.last_mut().ok_or(CliError::Usage("mesh has no free node".into()))? =
                theory::interior_overshoot_for_mesh(&h)?;
            Ok(FEFunction::from_free(space, &vals)?)
        }
        "mesh1" => {
            if space.num_free() != 1 || space.mesh().dim() != 2 {
                return Err(CliError::Usage("'mesh1' needs a 2D mesh with one free node".into()));
            }
            Ok(FEFunction::constant_free(space, theory::alpha_mesh1_l1()))
        }
        _ => {
            if let Some(b) = name.strip_prefix("jump:") {
                let beta: f64 = b.parse().map_err(|_| CliError::Usage(format!("bad beta '{b}'")))?;
                let nodes = match space.mesh() {
                    Mesh::Interval(m) if space.problem() == Problem::Jump1D && m.num_nodes() == 5 => m.breakpoints().to_vec(),
                    _ => return Err(CliError::Usage("'jump:BETA' needs the mesh jump:H".into())),
                };
                let j = theory::jump_family(nodes[3], beta)?;
                let [a, b, c] = j.nodal_values();
                return Ok(FEFunction::from_nodal(space, vec![-1.0, a, b, c, 1.0])?);
            }
            Err(CliError::Usage(format!("unknown theory candidate '{name}' ({THEORY_CANDIDATES})")))
        }
    }
}
