//! Command-line front end: mesh generation and checks, solves, q-sweeps,
//! L¹ certification and figure tables, all written as CSV.

use std::ffi::OsString;
use std::fs::File;
use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use lqgibbs_core::certify::{area_heuristic_2d, certify_l1};
use lqgibbs_core::fespace::nodal_overshoot;
use lqgibbs_core::mesh::{save_mesh, structured_square_mesh, Mesh, SquarePattern, UnstructuredMesh};
use lqgibbs_core::solver::{extrapolate_to_l1, solve_lq, sweep_q, SolverOptions};
use lqgibbs_core::{theory, Error};
use rayon::prelude::*;

pub mod reproduce;
pub mod source;
pub mod table;

use table::{parse_list, parse_range, Cell, Table};

/// Environment variable capping the worker pool.
pub const THREADS_ENV: &str = "LQGIBBS_THREADS";

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_NONCONVERGENCE: i32 = 2;
pub const EXIT_USAGE: i32 = 3;

#[derive(Debug)]
pub enum CliError {
    /// Bad arguments or input data.
    Usage(String),
    Core(Error),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Core(Error::NonConvergence { .. }) => EXIT_NONCONVERGENCE,
            CliError::Core(Error::Io(_)) | CliError::Io(_) => EXIT_IO,
            CliError::Core(_) => EXIT_USAGE,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Io(m) => f.write_str(m),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

#[derive(Parser, Debug)]
#[command(name = "lqgibbs", version, about = "L^q best approximation by P1 finite elements")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Debug)]
struct MeshArgs {
    /// Mesh: mesh1..mesh4, mesh-a, mesh-b, mesh-c, mesh-oversized,
    /// uniform:N, h:H1,H2,.., nodes:X0,X1,.., jump:H, or a mesh file
    #[arg(long)]
    mesh: String,
    /// Refinement level (mesh1 only)
    #[arg(long, default_value_t = 0)]
    refine: u32,
    /// boundary1d, jump1d or boundary2d; implied by the mesh when omitted
    #[arg(long)]
    problem: Option<String>,
    /// const1, sgnx, sine:A:K or layer:EPS; the problem's target by default
    #[arg(long)]
    target: Option<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a named mesh to a file
    GenMesh {
        /// mesh1..mesh4 or one of the shipped unstructured meshes
        #[arg(long)]
        pattern: String,
        #[arg(long, default_value_t = 0)]
        refine: u32,
        #[arg(short = 'o', long)]
        output: PathBuf,
    },
    /// Check the no-overshoot conditions of a 1D mesh, or the outflow area
    /// condition of a 2D mesh
    MeshCheck {
        /// Element lengths h1,..,hN
        #[arg(long, conflicts_with = "mesh", required_unless_present = "mesh")]
        h: Option<String>,
        #[arg(long)]
        mesh: Option<String>,
    },
    /// Solve for one q and print the nodal values
    Solve {
        #[command(flatten)]
        mesh: MeshArgs,
        #[arg(long)]
        q: f64,
        #[arg(short = 'o', long)]
        output: Option<PathBuf>,
    },
    /// Warm-started solves over a list of q values
    Sweep {
        #[command(flatten)]
        mesh: MeshArgs,
        /// a:b:step or a comma-separated list, descending toward 1
        #[arg(long)]
        q: String,
        /// Append a q = 1 row extrapolated from the sweep
        #[arg(long)]
        extrapolate: bool,
        #[arg(short = 'o', long)]
        output: Option<PathBuf>,
    },
    /// Decide L¹ optimality of a candidate
    Certify {
        #[command(flatten)]
        mesh: MeshArgs,
        /// File with one value per free node or per node
        #[arg(long, conflicts_with = "from_theory", required_unless_present = "from_theory")]
        coeffs: Option<PathBuf>,
        /// ones, two-element, remark, mesh1 or jump:BETA
        #[arg(long)]
        from_theory: Option<String>,
        #[arg(short = 'o', long)]
        output: Option<PathBuf>,
    },
    /// Print the table behind a figure
    Reproduce {
        /// fig1, fig2, fig5, fig7, fig9, fig10, fig3el or fig12
        id: String,
        #[arg(short = 'o', long)]
        output: Option<PathBuf>,
    },
}

/// Maps `f` over `items` on the worker pool, keeping input order.
pub fn par_map<T: Send, R: Send>(items: Vec<T>, f: impl Fn(T) -> R + Sync + Send) -> Vec<R> {
    let threads = std::env::var(THREADS_ENV).ok().and_then(|v| v.trim().parse::<usize>().ok()).filter(|&n| n > 0);
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n);
    }
    match builder.build() {
        Ok(pool) => pool.install(|| items.into_par_iter().map(&f).collect()),
        Err(_) => items.into_iter().map(f).collect(),
    }
}

/// Runs the command line; returns the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() { err.write_all(text.as_bytes()) } else { out.write_all(text.as_bytes()) };
            return code;
        }
    };
    match dispatch(cli.command, out) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

fn emit(table: &Table, output: Option<&PathBuf>, out: &mut dyn Write) -> Result<(), CliError> {
    match output {
        Some(p) => table.write(&mut File::create(p)?),
        None => table.write(out),
    }
}

fn dispatch(cmd: Command, out: &mut dyn Write) -> Result<i32, CliError> {
    match cmd {
        Command::GenMesh { pattern, refine, output } => {
            let mesh: Mesh = if let Some(p) = SquarePattern::parse(&pattern) {
                structured_square_mesh(p, refine)?.into()
            } else if let Some(m) = UnstructuredMesh::parse(&pattern) {
                if refine > 0 {
                    return Err(CliError::Usage("--refine only applies to mesh1".into()));
                }
                m.load()?.into()
            } else {
                return Err(CliError::Usage(format!(
                    "unknown pattern '{pattern}' (mesh1|mesh2|mesh3|mesh4|mesh-a|mesh-b|mesh-c|mesh-oversized)"
                )));
            };
            save_mesh(&mesh, &output)?;
            Ok(EXIT_OK)
        }
        Command::MeshCheck { h, mesh } => {
            let lengths = match (h, mesh) {
                (Some(h), _) => parse_list(&h)?,
                (None, Some(src)) => match source::resolve_mesh(&src, 0)?.0 {
                    Mesh::Interval(m) => m.element_lengths(),
                    Mesh::Triangle(m) => {
                        let mut t = Table::new(["node", "x", "y", "touching", "remaining", "flag"]);
                        for r in area_heuristic_2d(&m) {
                            let [x, y] = m.vertices()[r.node];
                            t.push(vec![
                                Cell::Text(r.node.to_string()),
                                x.into(),
                                y.into(),
                                r.touching.into(),
                                r.remaining.into(),
                                Cell::Text(r.flag.to_string()),
                            ]);
                        }
                        t.write(out)?;
                        return Ok(EXIT_OK);
                    }
                },
                (None, None) => return Err(CliError::Usage("give --h or --mesh".into())),
            };
            let verdict = theory::check_no_overshoot_l1(&lengths)?;
            let sched = theory::theta_schedule(&lengths)?;
            writeln!(out, "{}, M={}", verdict.as_str(), sched.m)?;
            Ok(EXIT_OK)
        }
        Command::Solve { mesh, q, output } => {
            let s = source::setup(&mesh.mesh, mesh.refine, mesh.problem.as_deref(), mesh.target.as_deref())?;
            if !(q > 1.0) {
                return Err(CliError::Usage(format!("q = {q} must exceed 1")));
            }
            let rep = solve_lq(&s.space, &s.target, &SolverOptions::new(q))?;
            let m = s.space.mesh();
            let mut t = Table::new(["node", "x", "y", "value", "free"]);
            for v in 0..s.space.num_nodes() {
                let [x, y] = m.node(v);
                let free = s.space.free_index(v).is_some();
                t.push(vec![Cell::Text(v.to_string()), x.into(), y.into(), rep.coeffs.at_node(v).into(), Cell::Text(free.to_string())]);
            }
            emit(&t, output.as_ref(), out)?;
            Ok(EXIT_OK)
        }
        Command::Sweep { mesh, q, extrapolate, output } => {
            let s = source::setup(&mesh.mesh, mesh.refine, mesh.problem.as_deref(), mesh.target.as_deref())?;
            let qs = parse_range(&q)?;
            if qs.iter().any(|&x| !(x > 1.0)) {
                return Err(CliError::Usage("every q must exceed 1".into()));
            }
            if qs.windows(2).any(|w| w[1] >= w[0]) {
                return Err(CliError::Usage("q values must be strictly decreasing".into()));
            }
            let (rows, failure) = match sweep_q(&s.space, &s.target, &qs) {
                Ok(rows) => (rows, None),
                Err(p) => (p.rows, Some(p.error)),
            };
            let mut t = Table::new(["q", "alpha", "max_overshoot", "max_nodal_error"]);
            for r in &rows {
                t.push(vec![r.q.into(), r.coeffs.free_values().into_iter().fold(f64::MIN, f64::max).into(), r.max_overshoot().into(), r.max_nodal_error().into()]);
            }
            for &q in &qs[rows.len()..] {
                t.push(vec![q.into(), Cell::Na, Cell::Na, Cell::Na]);
            }
            if extrapolate {
                let limit = if failure.is_none() { Some(extrapolate_to_l1(&rows)?) } else { None };
                let cells = match &limit {
                    Some(f) => {
                        let rep = nodal_overshoot(f, &s.target);
                        let alpha = f.free_values().into_iter().fold(f64::MIN, f64::max);
                        vec![alpha.into(), rep.max_over.into(), rep.max_over.max(rep.max_under).into()]
                    }
                    None => vec![Cell::Na; 3],
                };
                t.push(std::iter::once(Cell::Num(1.0)).chain(cells).collect());
            }
            emit(&t, output.as_ref(), out)?;
            match failure {
                Some(e) => Err(e.into()),
                None => Ok(EXIT_OK),
            }
        }
        Command::Certify { mesh, coeffs, from_theory, output } => {
            let s = source::setup(&mesh.mesh, mesh.refine, mesh.problem.as_deref(), mesh.target.as_deref())?;
            let f = match (coeffs, from_theory) {
                (Some(path), _) => source::coeffs_from_text(&s.space, &std::fs::read_to_string(path)?)?,
                (None, Some(name)) => source::coeffs_from_theory(&s.space, &name)?,
                (None, None) => return Err(CliError::Usage("give --coeffs or --from-theory".into())),
            };
            let r = certify_l1(&f, &s.target)?;
            let mut t = Table::new(["verdict", "margin", "violated_node", "witness_residual"]);
            t.push(vec![
                r.verdict.as_str().into(),
                r.margin.into(),
                r.violated_node.map_or(Cell::Text(String::new()), |v| Cell::Text(v.to_string())),
                r.verification.map_or(Cell::Text(String::new()), Cell::Num),
            ]);
            emit(&t, output.as_ref(), out)?;
            Ok(EXIT_OK)
        }
        Command::Reproduce { id, output } => {
            let t = reproduce::reproduce(&id)?;
            emit(&t, output.as_ref(), out)?;
            Ok(EXIT_OK)
        }
    }
}
