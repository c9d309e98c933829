mod common;

use common::{dense_rows, instance, random_instance};
use ddopt::d3ca::*;
use ddopt::engine::ClusterSim;
use ddopt::losses::{dual_objective, duality_gap, primal_from_dual, primal_objective};
use ddopt::{DualVector, LossKind};

fn run(data: &ddopt::PartitionedData, spec: &ddopt::ProblemSpec, config: &D3caConfig) -> D3caOutput {
    let sim = ClusterSim::new(data.grid().workers()).unwrap();
    run_d3ca(data, spec, config, &sim, None).unwrap()
}

#[test]
fn single_block_with_many_passes_closes_the_gap() {
    for loss in [LossKind::Hinge, LossKind::Logistic] {
        let (data, spec) = instance(11, 120, 15, 1, 1, 1.0, 0.1, loss);
        let out = run(&data, &spec, &D3caConfig { outer_iters: 40, local_passes: 10, ..Default::default() });
        let gap = out.history.last().unwrap().duality_gap().unwrap();
        assert!((0.0..1e-6).contains(&gap), "{loss:?} gap {gap}");
    }
}

#[test]
fn history_matches_recomputed_objectives() {
    let (data, spec) = instance(4, 60, 12, 3, 2, 0.6, 0.05, LossKind::Hinge);
    let out = run(&data, &spec, &D3caConfig { outer_iters: 5, ..Default::default() });
    let last = out.history.last().unwrap();
    assert_eq!(last.primal_value, primal_objective(&out.w, &data, &spec).unwrap());
    assert_eq!(last.dual_value.unwrap(), dual_objective(&out.alpha, &data, &spec).unwrap());
    let rebuilt = primal_from_dual(&out.alpha, &data, &spec).unwrap();
    assert_eq!(rebuilt, out.w);
}

#[test]
fn duals_stay_in_the_box() {
    for seed in 0..30 {
        let (data, spec) = random_instance(seed, 60, 12, LossKind::Hinge);
        for averaging in [DualAveraging::AllBlocks, DualAveraging::RowShare] {
            for use_beta_stepsize in [false, true] {
                let config = D3caConfig { outer_iters: 6, local_passes: 2, averaging, use_beta_stepsize, seed };
                let sim = ClusterSim::new(data.grid().workers()).unwrap();
                run_d3ca_observed(&data, &spec, &config, &sim, None, |_, _, alpha| {
                    for (p, block) in alpha.blocks.iter().enumerate() {
                        for (a, y) in block.iter().zip(data.labels(p)) {
                            let s = a * y;
                            assert!((-1e-12..=1.0 + 1e-12).contains(&s), "seed {seed}: alpha*y = {s}");
                        }
                    }
                })
                .unwrap();
            }
        }
    }
}

#[test]
fn weak_duality_holds_along_every_run() {
    for seed in 0..20 {
        for loss in [LossKind::Hinge, LossKind::Logistic] {
            let (data, spec) = random_instance(100 + seed, 50, 10, loss);
            let out = run(&data, &spec, &D3caConfig { outer_iters: 8, seed, ..Default::default() });
            for r in &out.history.records {
                assert!(r.duality_gap().unwrap() >= -1e-9, "seed {seed} {loss:?} t={}", r.t);
            }
        }
    }
}

#[test]
fn dual_objective_rises_for_one_block() {
    // plain SDCA steps never decrease the dual
    let (data, spec) = instance(8, 80, 10, 1, 1, 1.0, 0.05, LossKind::Hinge);
    let out = run(&data, &spec, &D3caConfig { outer_iters: 15, ..Default::default() });
    let duals: Vec<f64> = out.history.records.iter().map(|r| r.dual_value.unwrap()).collect();
    assert!(duals.windows(2).all(|w| w[1] >= w[0] - 1e-12), "{duals:?}");
}

#[test]
fn row_blocks_only_is_cocoa() {
    for seed in 0..10 {
        let (data, spec) = instance(seed, 90, 8, 1 + seed as usize % 4, 1, 1.0, 0.02, LossKind::Hinge);
        let config = D3caConfig { outer_iters: 10, local_passes: 2, seed, ..Default::default() };
        let oracle = common::cocoa_reference(&data, &spec, 2, 10, seed);
        let sim = ClusterSim::new(data.grid().workers()).unwrap();
        let mut t_seen = 0;
        run_d3ca_observed(&data, &spec, &config, &sim, None, |t, w, alpha| {
            let (a_ref, w_ref) = &oracle[t - 1];
            let scale = w_ref.iter().fold(1.0f64, |s, v| s.max(v.abs()));
            for (x, y) in w.to_flat().iter().zip(w_ref) {
                assert!((x - y).abs() <= 1e-12 * scale, "seed {seed} t={t}");
            }
            for (x, y) in alpha.to_flat().iter().zip(a_ref) {
                assert!((x - y).abs() <= 1e-12, "seed {seed} t={t}");
            }
            t_seen = t;
        })
        .unwrap();
        assert_eq!(t_seen, 10);
    }
}

#[test]
fn same_seed_same_run_other_seed_other_run() {
    let (data, spec) = instance(21, 70, 14, 2, 2, 0.5, 0.01, LossKind::Logistic);
    let a = run(&data, &spec, &D3caConfig { outer_iters: 4, seed: 5, ..Default::default() });
    let b = run(&data, &spec, &D3caConfig { outer_iters: 4, seed: 5, ..Default::default() });
    let c = run(&data, &spec, &D3caConfig { outer_iters: 4, seed: 6, ..Default::default() });
    assert_eq!(a.w, b.w);
    assert_eq!(a.alpha, b.alpha);
    assert_ne!(a.alpha, c.alpha);
}

#[test]
fn each_iteration_costs_two_phases() {
    let (data, spec) = instance(1, 40, 9, 2, 3, 1.0, 0.1, LossKind::Hinge);
    let out = run(&data, &spec, &D3caConfig { outer_iters: 7, ..Default::default() });
    for r in &out.history.records {
        assert_eq!(r.reduce_ops, 2 * r.t as u64);
    }
    // alpha sums carry n_p scalars per combine, w sums carry m_q
    let per_iter = out.history.records[0].elements_communicated;
    assert_eq!(out.history.last().unwrap().elements_communicated, 7 * per_iter);
    assert_eq!(per_iter, (2 * 40 + 9) as u64);
}

#[test]
fn first_step_from_zero_is_closed_form() {
    // one pass over a single observation: delta = y clamp(sigma n / (Q ||x||^2))
    let (data, spec) = instance(9, 1, 6, 1, 2, 1.0, 0.3, LossKind::Hinge);
    let (x, y) = dense_rows(&data);
    let out = run(&data, &spec, &D3caConfig { outer_iters: 1, ..Default::default() });
    let mut want = 0.0;
    for q in 0..2 {
        let cols = data.grid().cols(q);
        let nrm: f64 = x[0][cols].iter().map(|v| v * v).sum();
        want += y[0] * (spec.sigma_n() / (2.0 * nrm)).clamp(0.0, 1.0);
    }
    assert!((out.alpha.blocks[0][0] - want / 2.0).abs() < 1e-15);
}

#[test]
fn rejects_mismatched_cluster() {
    let (data, spec) = instance(1, 20, 4, 2, 2, 1.0, 0.1, LossKind::Hinge);
    let sim = ClusterSim::new(3).unwrap();
    assert!(run_d3ca(&data, &spec, &D3caConfig::default(), &sim, None).is_err());
}

#[test]
fn dual_objective_rejects_infeasible_point() {
    let (data, spec) = instance(1, 10, 3, 1, 1, 1.0, 0.1, LossKind::Hinge);
    let mut alpha = DualVector::zeros(data.grid());
    alpha.blocks[0][3] = -2.0 * data.labels(0)[3];
    assert!(matches!(dual_objective(&alpha, &data, &spec), Err(ddopt::Error::InfeasibleDual { index: 3 })));
    let w = primal_from_dual(&DualVector::zeros(data.grid()), &data, &spec).unwrap();
    assert!(duality_gap(&w, &DualVector::zeros(data.grid()), &data, &spec).unwrap() >= 0.0);
}
