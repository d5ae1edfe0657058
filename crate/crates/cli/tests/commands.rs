use std::io::Write;

use lqgibbs_cli::{run, EXIT_NONCONVERGENCE, EXIT_OK, EXIT_USAGE};

fn call(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("lqgibbs").chain(args.iter().copied());
    let code = run(argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn rows(csv: &str) -> Vec<Vec<String>> {
    csv.lines().skip(1).map(|l| l.split(',').map(str::to_string).collect()).collect()
}

fn num(s: &str) -> f64 {
    s.parse().unwrap_or_else(|_| panic!("not a number: {s}"))
}

#[test]
fn sweep_mesh2_starts_at_l2_value() {
    let (code, out, _) = call(&["sweep", "--mesh", "mesh2", "--q", "2:1.1:0.1"]);
    assert_eq!(code, EXIT_OK);
    let r = rows(&out);
    assert_eq!(r.len(), 10);
    assert_eq!(r[0][0], "2");
    assert!((num(&r[0][1]) - 17.0 / 12.0).abs() < 1e-9);
    // overshoot shrinks as q decreases
    for w in r.windows(2) {
        assert!(num(&w[1][1]) < num(&w[0][1]));
    }
}

#[test]
fn fig1_values() {
    let (code, out, _) = call(&["reproduce", "fig1"]);
    assert_eq!(code, EXIT_OK);
    let r = rows(&out);
    assert_eq!(r.len(), 5);
    let q2: Vec<f64> = r.iter().map(|row| num(&row[1])).collect();
    let expect = [1.0, 57.0 / 56.0, 13.0 / 14.0, 71.0 / 56.0, 0.0];
    for (a, b) in q2.iter().zip(expect) {
        assert!((a - b).abs() < 1e-10, "{a} vs {b}");
    }
    assert!((num(&r[3][2]) - 1.0922174526).abs() < 1e-8);
}

#[test]
fn mesh_check_graded() {
    let (code, out, _) = call(&["mesh-check", "--h", "0.1,0.5,0.4"]);
    assert_eq!(code, EXIT_OK);
    assert_eq!(out.trim(), "SUFFICIENT_GRADED, M=2");
}

#[test]
fn unknown_figure_lists_ids() {
    let (code, _, err) = call(&["reproduce", "fig99"]);
    assert_eq!(code, EXIT_USAGE);
    for id in ["fig1", "fig2", "fig5", "fig7", "fig9", "fig10", "fig3el", "fig12"] {
        assert!(err.contains(id), "{err}");
    }
}

#[test]
fn bad_arguments_exit_usage() {
    assert_eq!(call(&["sweep", "--mesh", "mesh2", "--q", "2:x:0.1"]).0, EXIT_USAGE);
    assert_eq!(call(&["solve", "--mesh", "uniform:x", "--q", "2"]).0, EXIT_USAGE);
    assert_eq!(call(&["solve", "--mesh", "uniform:4", "--q", "2", "--target", "cosine"]).0, EXIT_USAGE);
    assert_eq!(call(&["frobnicate"]).0, EXIT_USAGE);
    assert_eq!(call(&["certify", "--mesh", "mesh2"]).0, EXIT_USAGE);
    assert_eq!(call(&["--help"]).0, EXIT_OK);
}

#[test]
fn extrapolation_without_small_q_is_rejected() {
    let (code, _, err) = call(&["sweep", "--mesh", "uniform:3", "--q", "2:1.5:0.25", "--extrapolate"]);
    assert_ne!(code, EXIT_OK);
    assert_ne!(code, EXIT_NONCONVERGENCE);
    assert!(err.contains("extrapolation"));
}

#[test]
fn gen_mesh_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m3.lqm");
    let p = path.to_str().unwrap();
    assert_eq!(call(&["gen-mesh", "--pattern", "mesh3", "-o", p]).0, EXIT_OK);
    let (code, from_file, _) = call(&["solve", "--mesh", p, "--q", "2"]);
    assert_eq!(code, EXIT_OK);
    let (_, named, _) = call(&["solve", "--mesh", "mesh3", "--q", "2"]);
    assert_eq!(from_file, named);
}

#[test]
fn missing_mesh_file_is_io_error() {
    let (code, _, _) = call(&["solve", "--mesh", "/nonexistent/dir/m.lqm", "--q", "2"]);
    assert_eq!(code, lqgibbs_cli::EXIT_IO);
}

#[test]
fn certify_theory_candidates() {
    for (mesh, cand) in [("h:0.25,0.75", "two-element"), ("mesh1", "mesh1"), ("jump:0.5", "jump:0.5")] {
        let (code, out, err) = call(&["certify", "--mesh", mesh, "--from-theory", cand]);
        assert_eq!(code, EXIT_OK, "{err}");
        let r = rows(&out);
        assert_eq!(r[0][0], "CERTIFIED", "{mesh} {cand}");
        assert!(num(&r[0][3]).abs() < 1e-9);
    }
    let (_, out, _) = call(&["certify", "--mesh", "h:0.25,0.75", "--from-theory", "ones"]);
    let r = rows(&out);
    assert_eq!(r[0][0], "NOT_OPTIMAL");
    assert!(num(&r[0][1]) < 0.0);
    assert_eq!(r[0][2], "1");
}

#[test]
fn certify_coeffs_file() {
    let mut f = tempfile::NamedTempFile::new().unwrap();
    // nodal values; the free one is the L1 optimum sqrt(3/2)
    writeln!(f, "# two-element candidate").unwrap();
    writeln!(f, "1, {}, 0", 1.5f64.sqrt()).unwrap();
    let p = f.path().to_str().unwrap().to_string();
    let p = p.as_str();
    let (code, out, _) = call(&["certify", "--mesh", "h:0.25,0.75", "--coeffs", p]);
    assert_eq!(code, EXIT_OK);
    assert_eq!(rows(&out)[0][0], "CERTIFIED");

    writeln!(f.as_file_mut(), "7").unwrap();
    assert_eq!(call(&["certify", "--mesh", "h:0.25,0.75", "--coeffs", p]).0, EXIT_USAGE);
}

#[test]
fn output_does_not_depend_on_thread_count() {
    let args = ["reproduce", "fig10"];
    std::env::set_var(lqgibbs_cli::THREADS_ENV, "1");
    let one = call(&args);
    std::env::set_var(lqgibbs_cli::THREADS_ENV, "4");
    let four = call(&args);
    std::env::remove_var(lqgibbs_cli::THREADS_ENV);
    assert_eq!(one.0, EXIT_OK);
    assert_eq!(one.1, four.1);
}

#[test]
fn fig7_is_constant() {
    let (code, out, _) = call(&["reproduce", "fig7"]);
    assert_eq!(code, EXIT_OK);
    let r = rows(&out);
    assert_eq!(r.len(), 10);
    for row in r {
        assert!((num(&row[1]) - 1.5).abs() < 1e-9);
    }
}

#[test]
fn fig3el_table() {
    let (code, out, _) = call(&["reproduce", "fig3el"]);
    assert_eq!(code, EXIT_OK);
    let r = rows(&out);
    assert_eq!(r.len(), 4);
    assert!((num(&r[0][6]) - 0.278481012658).abs() < 1e-9);
    assert!((num(&r[2][6]) - 0.251308900524).abs() < 1e-9);
    // h2 = 0.5 is graded, so its L1 limit has no overshoot
    assert!(num(&r[3][6]) < 1e-8);
    assert!(num(&r[1][6]) > 0.01);
}

#[test]
fn fig9_first_row() {
    let (code, out, _) = call(&["reproduce", "fig9"]);
    assert_eq!(code, EXIT_OK);
    let r = rows(&out);
    let expect = [0.2549, 0.2679, 0.3159, 0.3489];
    for (k, e) in expect.iter().enumerate() {
        assert!((num(&r[0][k + 1]) - e).abs() < 1e-3);
    }
    assert!(!out.contains("NA"));
}
