mod common;

use common::{dense_rows, instance};
use ddopt::harness::*;
use ddopt::LossKind;

#[test]
fn reference_matches_closed_form_in_the_linear_regime() {
    // w* = v / (2 lambda) with v = (1/n) sum y_i x_i while every |x_i'w*| < 1
    let lambda = 50.0;
    let (data, spec) = instance(6, 80, 10, 2, 2, 1.0, lambda, LossKind::Hinge);
    let (x, y) = dense_rows(&data);
    let v: Vec<f64> = (0..10).map(|k| x.iter().zip(&y).map(|(r, yi)| yi * r[k]).sum::<f64>() / 80.0).collect();
    let w: Vec<f64> = v.iter().map(|a| a / (2.0 * lambda)).collect();
    assert!(x.iter().all(|r| r.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>().abs() < 1.0));
    let want = 1.0 - v.iter().map(|a| a * a).sum::<f64>() / (4.0 * lambda);
    let sol = reference_solve(&data, &spec, &ReferenceOptions::default()).unwrap();
    assert!((sol.f_star - want).abs() < 1e-8, "{} vs {want}", sol.f_star);
    assert!(sol.gap <= 1e-8 * sol.f_star.max(1.0));
    assert!(sol.w.iter().zip(&w).all(|(a, b)| (a - b).abs() < 1e-6));
}

#[test]
fn loose_tolerance_stops_early() {
    let (data, spec) = instance(2, 200, 20, 1, 1, 1.0, 1e-3, LossKind::Hinge);
    let loose = reference_solve(&data, &spec, &ReferenceOptions { gap_tol: 1e-2, ..Default::default() }).unwrap();
    let tight = reference_solve(&data, &spec, &ReferenceOptions::default()).unwrap();
    assert!(loose.epochs < tight.epochs);
    assert!(loose.gap <= 1e-2 * loose.f_star.max(1.0));
    assert!(loose.f_star >= tight.f_star - 1e-12);
    assert!(tight.f_star - tight.dual_value <= 1e-8 * tight.f_star.max(1.0));
}

#[test]
fn epoch_cap_is_reported() {
    let (data, spec) = instance(2, 100, 20, 1, 1, 1.0, 1e-4, LossKind::Hinge);
    let opts = ReferenceOptions { max_epochs: 2, ..Default::default() };
    assert!(matches!(reference_solve(&data, &spec, &opts), Err(ddopt::Error::MaxIterationsExceeded { epochs: 2, .. })));
}

#[test]
fn logistic_reference_agrees_with_long_d3ca_run() {
    let (data, spec) = instance(13, 60, 8, 1, 1, 1.0, 0.05, LossKind::Logistic);
    let sol = reference_solve(&data, &spec, &ReferenceOptions::default()).unwrap();
    let sim = ddopt::engine::ClusterSim::new(1).unwrap();
    let config = ddopt::d3ca::D3caConfig { outer_iters: 60, local_passes: 5, ..Default::default() };
    let out = ddopt::d3ca::run_d3ca(&data, &spec, &config, &sim, None).unwrap();
    let f = out.history.last().unwrap().primal_value;
    assert!((f - sol.f_star).abs() < 1e-7 * sol.f_star);
}

const EXPERIMENTS: &str = r#"
    [[experiment]]
    name = "conv"
    kind = "convergence"
    solvers = ["d3ca", "radisa", "radisa-avg"]
    lambdas = [0.05]
    cells = [[2, 2]]
    iters = 7
    [experiment.data]
    rows = 40
    cols = 12
    [experiment.radisa]
    batch = 10

    [[experiment]]
    name = "weak"
    kind = "weak"
    solvers = ["d3ca"]
    lambdas = [0.1]
    cells = [[1, 2], [2, 2]]
    iters = 200
    target = 0.05
    [experiment.data]
    rows_per_block = 20
    cols_per_block = 5
    densities = [1.0, 0.5]

    [[experiment]]
    name = "strong"
    kind = "strong"
    solvers = ["radisa"]
    lambdas = [0.1]
    cells = [[1, 1], [2, 1], [4, 1]]
    iters = 100
    [experiment.data]
    rows = 64
    cols = 8
    [experiment.radisa]
    inner_total = 64
    gamma_grid = [0.05, 0.2]
"#;

#[test]
fn experiments_write_consistent_csv() {
    let file = ExperimentFile::parse(EXPERIMENTS).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let mut scripted = |id: &CellId, _: f64| 10.0 + id.p as f64;
    let reports = run_experiment(&file, dir.path(), Some(&mut scripted)).unwrap();

    let conv = read_rows(dir.path().join("conv.csv")).unwrap();
    assert_eq!(conv, reports[0].rows);
    for solver in ["d3ca", "radisa", "radisa-avg"] {
        let rows: Vec<_> = conv.iter().filter(|r| r.solver == solver).collect();
        assert_eq!(rows.iter().map(|r| r.iter).collect::<Vec<_>>(), (1..=7).collect::<Vec<_>>());
        for r in rows {
            assert!(((r.primal - r.f_star) / r.f_star - r.rel_opt).abs() <= 1e-12 * r.rel_opt.abs().max(1.0));
            assert_eq!(r.reduce_ops, 2 * r.iter as u64);
            assert_eq!((r.p, r.q, r.lambda), (2, 2, 0.05));
        }
    }

    let weak = &reports[1];
    assert!(dir.path().join("weak_efficiency.csv").exists());
    assert_eq!(weak.efficiency.len(), 4);
    for density in [1.0, 0.5] {
        let cells: Vec<_> = weak.efficiency.iter().filter(|e| e.density == density).collect();
        assert_eq!(cells.len(), 2);
        assert_eq!(cells[0].efficiency, 100.0);
        assert!((cells[1].efficiency - 100.0 * 11.0 / 12.0).abs() < 1e-12);
    }

    let strong = &reports[2];
    assert_eq!(strong.chosen_gamma.len(), 3);
    for e in &file.experiments[2].cells {
        assert_eq!(file.experiments[2].inner_steps(e.0) * e.0, 64);
    }
    // strong runs stop at the target when they reach it
    for (_, p, _, _, _) in &strong.chosen_gamma {
        let rows: Vec<_> = strong.rows.iter().filter(|r| r.p == *p).collect();
        let hit = rows.iter().position(|r| r.rel_opt <= 0.05);
        if let Some(i) = hit {
            assert_eq!(i + 1, rows.len());
        }
    }
    assert!(!dir.path().join("strong_efficiency.csv").exists());
}

#[test]
fn weak_cells_scale_the_data_with_the_grid() {
    let file = ExperimentFile::parse(EXPERIMENTS).unwrap();
    let mut e = file.experiments[1].clone();
    e.data.densities = None;
    e.iters = 1;
    let report = run_one(&e, &mut |_, t| t.max(1e-9)).unwrap();
    let f: Vec<f64> = report.rows.iter().map(|r| r.f_star).collect();
    // two distinct datasets, hence two distinct references
    assert_eq!(f.len(), 2);
    assert_ne!(f[0], f[1]);
}

#[test]
fn invalid_experiments_are_rejected() {
    let base = ExperimentFile::parse(EXPERIMENTS).unwrap();
    let mut weak_q = base.experiments[1].clone();
    weak_q.cells = vec![(1, 1), (2, 2)];
    assert!(weak_q.validate().is_err());
    let mut strong = base.experiments[2].clone();
    strong.cells.push((3, 1));
    assert!(strong.validate().is_err());
    let mut both = base.experiments[0].clone();
    both.data.libsvm = Some("x.svm".into());
    assert!(both.validate().is_err());
}

#[test]
fn report_reads_baselines_from_disk() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("base.csv");
    std::fs::write(&path, "solver,iter,rel_opt,P\nadmm,1,0.5,4\nadmm,2,0.04,4\n").unwrap();
    let base = read_baseline(&path).unwrap();
    assert_eq!(base.len(), 2);
    assert_eq!(base[1].p, Some(4));
    let file = ExperimentFile::parse(EXPERIMENTS).unwrap();
    let report = run_one(&file.experiments[0], &mut |_, t| t).unwrap();
    let text = summarize(&report.rows, &base);
    assert_eq!(text.lines().count(), 1 + 3 + 1);
}
