//! Tables behind the figures of the experiments.

use std::sync::Arc;

use lqgibbs_core::fespace::{build_space, nodal_overshoot, FEFunction, P1Space, Problem, TargetFunction};
use lqgibbs_core::mesh::{criss_cross, structured_square_mesh, Mesh1D, SquarePattern, UnstructuredMesh};
use lqgibbs_core::solver::{extrapolate_to_l1, solve_l2, solve_lq, sweep_q, SolverOptions, SweepRow, L1_SWEEP_Q};
use lqgibbs_core::theory;

use crate::table::{parse_range, Cell, Table};
use crate::{par_map, CliError};

pub const FIGURES: [&str; 8] = ["fig1", "fig2", "fig5", "fig7", "fig9", "fig10", "fig3el", "fig12"];

pub fn reproduce(id: &str) -> Result<Table, CliError> {
    match id {
        "fig1" => fig1(),
        "fig2" => fig2(),
        "fig5" => fig5(),
        "fig7" => fig7(),
        "fig9" => fig9(),
        "fig10" => fig10(),
        "fig3el" => fig3el(),
        "fig12" => fig12(),
        _ => Err(CliError::Usage(format!("unknown figure id '{id}'; known ids: {}", FIGURES.join(", ")))),
    }
}

fn range(s: &str) -> Vec<f64> {
    parse_range(s).expect("static range")
}

fn max_value(f: &FEFunction) -> f64 {
    f.free_values().into_iter().fold(f64::MIN, f64::max)
}

fn space_1d(lengths: &[f64]) -> Result<Arc<P1Space>, CliError> {
    Ok(build_space(Mesh1D::from_lengths(0.0, lengths)?.into(), Problem::Boundary1D)?)
}

fn square(p: SquarePattern) -> Result<Arc<P1Space>, CliError> {
    Ok(build_space(structured_square_mesh(p, 0)?.into(), Problem::Boundary2D)?)
}

/// Sweep rows aligned with `q_list`; entries after a failed step are `None`.
fn sweep_aligned(space: &Arc<P1Space>, u: &TargetFunction, q_list: &[f64]) -> Vec<Option<SweepRow>> {
    let mut rows: Vec<Option<SweepRow>> = match sweep_q(space, u, q_list) {
        Ok(rows) => rows.into_iter().map(Some).collect(),
        Err(partial) => partial.rows.into_iter().map(Some).collect(),
    };
    rows.resize(q_list.len(), None);
    rows
}

fn pick<'a>(rows: &'a [Option<SweepRow>], grid: &[f64], q: f64) -> Option<&'a SweepRow> {
    grid.iter().position(|g| (g - q).abs() < 1e-12).and_then(|k| rows[k].as_ref())
}

// Sweep down the default L1 list plus `extra` points, and extrapolate when
// the sweep reached its end.
fn sweep_with_limit(space: &Arc<P1Space>, u: &TargetFunction, extra: &[f64]) -> (Vec<f64>, Vec<Option<SweepRow>>, Option<FEFunction>) {
    let mut grid: Vec<f64> = L1_SWEEP_Q.iter().chain(extra).copied().collect();
    grid.sort_by(|a, b| b.total_cmp(a));
    grid.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    let rows = sweep_aligned(space, u, &grid);
    let done: Vec<SweepRow> = rows.iter().flatten().cloned().collect();
    let limit = if done.len() == grid.len() { extrapolate_to_l1(&done).ok() } else { None };
    (grid, rows, limit)
}

fn fig1() -> Result<Table, CliError> {
    let space = space_1d(&[0.25; 4])?;
    let u = TargetFunction::ConstantOne;
    let sols = par_map(vec![2.0, 1.2], |q| solve_lq(&space, &u, &SolverOptions::new(q)).ok().map(|r| r.coeffs));
    let mut t = Table::new(["x", "q=2", "q=1.2"]);
    for v in 0..space.num_nodes() {
        let x = space.mesh().node(v)[0];
        t.push(vec![x.into(), sols[0].as_ref().map(|f| f.at_node(v)).into(), sols[1].as_ref().map(|f| f.at_node(v)).into()]);
    }
    Ok(t)
}

fn fig2() -> Result<Table, CliError> {
    let mut qs = range("1.01:2:0.01");
    qs.extend(range("2.5:20:0.5"));
    let hs = [0.25, 0.5, 0.75];
    let mut t = Table::new(["q", "h=0.25", "h=0.5", "h=0.75"]);
    t.push(std::iter::once(Cell::Num(1.0)).chain(hs.iter().map(|&h| theory::alpha_two_element_l1(h).ok().into())).collect());
    for q in qs {
        t.push(std::iter::once(Cell::Num(q)).chain(hs.iter().map(|&h| theory::alpha_two_element_lq(h, q).ok().into())).collect());
    }
    Ok(t)
}

fn fig5() -> Result<Table, CliError> {
    let space = square(SquarePattern::Mesh1)?;
    let u = TargetFunction::ConstantOne;
    let mut qs = vec![1.05];
    qs.extend(range("1.1:2:0.1"));
    qs.extend(range("2.5:5:0.5"));
    // q = 1 comes from extrapolating a sweep toward 1
    let mut jobs: Vec<Option<f64>> = vec![None];
    jobs.extend(qs.iter().copied().map(Some));
    let solver = par_map(jobs, |q| match q {
        Some(q) => solve_lq(&space, &u, &SolverOptions::new(q)).ok().map(|r| max_value(&r.coeffs)),
        None => sweep_with_limit(&space, &u, &[]).2.as_ref().map(max_value),
    });
    let mut t = Table::new(["q", "alpha_theory", "alpha_solver"]);
    t.push(vec![1.0.into(), theory::alpha_mesh1_l1().into(), solver[0].into()]);
    for (q, s) in qs.into_iter().zip(solver.into_iter().skip(1)) {
        t.push(vec![q.into(), theory::alpha_mesh1_lq(q).ok().into(), s.into()]);
    }
    Ok(t)
}

fn fig7() -> Result<Table, CliError> {
    let u = TargetFunction::ConstantOne;
    let vals = par_map((1..=10).collect(), |n: usize| {
        let space = build_space(criss_cross(n).ok()?.into(), Problem::Boundary2D).ok()?;
        solve_l2(&space, &u).ok().map(|f| max_value(&f))
    });
    let mut t = Table::new(["elements", "max_uh"]);
    for (n, v) in (1..=10usize).zip(vals) {
        t.push(vec![((4 * n * n) as f64).into(), v.into()]);
    }
    Ok(t)
}

fn fig9() -> Result<Table, CliError> {
    let u = TargetFunction::SinePerturbed { amplitude: 0.1, frequency: 1.0 };
    let qs = range("2:1.2:0.1");
    let meshes = |n: usize, last_doubled: bool| -> Vec<f64> {
        if last_doubled {
            let h = 1.0 / (n + 1) as f64;
            let mut l = vec![h; n - 1];
            l.push(2.0 * h);
            l
        } else {
            vec![1.0 / n as f64; n]
        }
    };
    let cases = vec![meshes(5, false), meshes(100, false), meshes(5, true), meshes(100, true)];
    let cols = par_map(cases, |lengths| match space_1d(&lengths) {
        Ok(space) => sweep_aligned(&space, &u, &qs).into_iter().map(|r| r.map(|r| r.max_nodal_error())).collect(),
        Err(_) => vec![None; qs.len()],
    });
    let mut t = Table::new(["q", "uniform(5)", "uniform(100)", "nonuniform(5)", "nonuniform(100)"]);
    for (k, &q) in qs.iter().enumerate() {
        t.push(std::iter::once(Cell::Num(q)).chain(cols.iter().map(|c| c[k].into())).collect());
    }
    Ok(t)
}

fn fig10() -> Result<Table, CliError> {
    let u = TargetFunction::ConstantOne;
    let grid = range("1.1:2:0.1");
    let cols = par_map(vec![SquarePattern::Mesh2, SquarePattern::Mesh3, SquarePattern::Mesh4], |p| {
        let Ok(space) = square(p) else { return vec![None; grid.len() + 1] };
        let (sweep_grid, rows, limit) = sweep_with_limit(&space, &u, &grid);
        std::iter::once(limit.as_ref().map(max_value))
            .chain(grid.iter().map(|&q| pick(&rows, &sweep_grid, q).map(|r| max_value(&r.coeffs))))
            .collect::<Vec<_>>()
    });
    let mut t = Table::new(["q", "mesh2", "mesh3", "mesh4"]);
    for (k, q) in std::iter::once(1.0).chain(grid.iter().copied()).enumerate() {
        t.push(std::iter::once(Cell::Num(q)).chain(cols.iter().map(|c| c[k].into())).collect());
    }
    Ok(t)
}

fn fig3el() -> Result<Table, CliError> {
    let u = TargetFunction::ConstantOne;
    let h2s = vec![0.45, 0.5];
    let results = par_map(h2s.clone(), |h2| {
        let space = space_1d(&[0.1, h2, 0.9 - h2]).ok()?;
        let (_, rows, limit) = sweep_with_limit(&space, &u, &[]);
        Some((rows[0].clone().map(|r| r.coeffs), limit))
    });
    let mut t = Table::new(["h2", "q", "x1", "u_h(x1)", "x2", "u_h(x2)", "max_nodal_error"]);
    for (h2, res) in h2s.into_iter().zip(results) {
        let (at2, at1) = res.unwrap_or((None, None));
        for (q, f) in [(2.0, at2), (1.0, at1)] {
            let vals = f.as_ref().map(|f| f.free_values());
            let err = f.as_ref().map(|f| {
                let r = nodal_overshoot(f, &u);
                r.max_over.max(r.max_under)
            });
            t.push(vec![
                h2.into(),
                q.into(),
                0.1.into(),
                vals.as_ref().map(|v| v[0]).into(),
                (0.1 + h2).into(),
                vals.as_ref().map(|v| v[1]).into(),
                err.into(),
            ]);
        }
    }
    Ok(t)
}

fn fig12() -> Result<Table, CliError> {
    let u = TargetFunction::ConstantOne;
    let qs = range("2:1.3:0.1");
    let cols = par_map(vec![UnstructuredMesh::A, UnstructuredMesh::B, UnstructuredMesh::C], |m| {
        let Ok(space) = m.load().map_err(CliError::from).and_then(|mesh| Ok(build_space(mesh.into(), Problem::Boundary2D)?)) else {
            return vec![None; qs.len()];
        };
        sweep_aligned(&space, &u, &qs).into_iter().map(|r| r.map(|r| max_value(&r.coeffs))).collect::<Vec<_>>()
    });
    let mut t = Table::new(["q", "mesh-a", "mesh-b", "mesh-c"]);
    for (k, &q) in qs.iter().enumerate() {
        t.push(std::iter::once(Cell::Num(q)).chain(cols.iter().map(|c| c[k].into())).collect());
    }
    Ok(t)
}
