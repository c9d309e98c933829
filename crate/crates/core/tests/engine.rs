mod common;

use common::instance;
use ddopt::d3ca::{run_d3ca, D3caConfig};
use ddopt::engine::*;
use ddopt::radisa::{run_radisa, RadisaConfig, RadisaVariant};
use ddopt::LossKind;

#[test]
fn solvers_are_thread_count_invariant() {
    let (data, spec) = instance(31, 96, 24, 4, 3, 0.5, 0.01, LossKind::Hinge);
    let mut d3ca = Vec::new();
    let mut radisa = Vec::new();
    let mut avg = Vec::new();
    for threads in [1, 4, 16] {
        let sim = ClusterSim::with_threads(12, threads).unwrap();
        d3ca.push(run_d3ca(&data, &spec, &D3caConfig { outer_iters: 5, seed: 1, ..Default::default() }, &sim, None).unwrap().w);
        let config = RadisaConfig { batch_size: 10, gamma: 0.05, outer_iters: 5, seed: 1, ..Default::default() };
        radisa.push(run_radisa(&data, &spec, &config, &sim, None).unwrap().w);
        let config = RadisaConfig { variant: RadisaVariant::Avg, ..config };
        avg.push(run_radisa(&data, &spec, &config, &sim, None).unwrap().w);
    }
    for runs in [&d3ca, &radisa, &avg] {
        assert!(runs.windows(2).all(|w| w[0] == w[1]));
    }
}

#[test]
fn tree_sum_is_a_fixed_left_fold() {
    let a = vec![0.1, 1e16, -3.0];
    let b = vec![0.2, 1.0, 1e-17];
    let c = vec![0.3, -1e16, 2.0];
    let (got, cost) = tree_reduce(vec![a.clone(), b.clone(), c.clone()], 2, add_vectors).unwrap();
    let want: Vec<f64> = (0..3).map(|k| (a[k] + b[k]) + c[k]).collect();
    assert_eq!(got.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), want.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    assert_eq!(cost, ReduceCost { combines: 2, scalars: 6 });
}

#[test]
fn wider_trees_use_fewer_levels_but_the_same_edges() {
    let group: Vec<f64> = (0..9).map(f64::from).collect();
    for arity in 2..6 {
        let (sum, cost) = tree_reduce(group.clone(), arity, |a, b| a + b).unwrap();
        assert_eq!(sum, 36.0);
        assert_eq!(cost.combines, 8);
    }
}

#[test]
fn thread_count_comes_from_the_environment() {
    std::env::set_var(THREADS_ENV, "3");
    assert_eq!(default_threads(), 3);
    assert_eq!(ClusterSim::new(2).unwrap().threads(), 3);
    std::env::set_var(THREADS_ENV, "zero");
    assert!(default_threads() >= 1);
    std::env::remove_var(THREADS_ENV);
}

#[test]
fn phases_count_once_however_many_reductions() {
    let sim = ClusterSim::with_threads(4, 2).unwrap();
    sim.phase(|ph| {
        for _ in 0..3 {
            ph.tree_aggregate(vec![1.0, 2.0, 3.0, 4.0], |a, b| a + b)?;
        }
        Ok(())
    })
    .unwrap();
    let s = sim.stats();
    assert_eq!((s.phases, s.reductions, s.combines, s.scalars), (1, 3, 9, 9));
    sim.reset_stats();
    assert_eq!(sim.stats(), CommStats::default());
}
