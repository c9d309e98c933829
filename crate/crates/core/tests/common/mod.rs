#![allow(dead_code, clippy::too_many_arguments, clippy::needless_range_loop)]

use ddopt::data::{generate_dataset, partition_dataset, SyntheticConfig};
use ddopt::engine::{rng_stream, sample_index};
use ddopt::{LossKind, PartitionedData, ProblemSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Synthetic instance partitioned on a `P x Q` grid.
pub fn instance(seed: u64, n: usize, m: usize, p: usize, q: usize, density: f64, lambda: f64, loss: LossKind) -> (PartitionedData, ProblemSpec) {
    let ds = generate_dataset(&SyntheticConfig::new(1, 1, n, m, density, seed)).unwrap();
    let data = partition_dataset(&ds, p, q, None).unwrap().data;
    (data, ProblemSpec::new(n, m, lambda, loss).unwrap())
}

/// Random small instance with random shape, grid, density and lambda.
pub fn random_instance(seed: u64, max_n: usize, max_m: usize, loss: LossKind) -> (PartitionedData, ProblemSpec) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(4..=max_n);
    let m = rng.gen_range(2..=max_m);
    let p = rng.gen_range(1..=n.min(4));
    let q = rng.gen_range(1..=m.min(3));
    let density = if rng.gen_bool(0.5) { 1.0 } else { rng.gen_range(0.2..0.9) };
    let lambda = 10f64.powf(rng.gen_range(-3.0..0.0));
    instance(seed, n, m, p, q, density, lambda, loss)
}

pub fn dense_rows(data: &PartitionedData) -> (Vec<Vec<f64>>, Vec<f64>) {
    let ds = ddopt::data::assemble(data).unwrap();
    (ds.matrix.to_dense_rows(), ds.labels)
}

pub fn max_rel_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(1e-300))
        .filter(|d| !d.is_nan())
        .fold(0.0, f64::max)
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Plain single-machine SVRG with the step schedule and sampling streams of
/// the distributed solver. Returns the iterate after every outer iteration.
pub fn serial_svrg(x: &[Vec<f64>], y: &[f64], spec: &ProblemSpec, gamma: f64, steps: usize, iters: usize, seed: u64) -> Vec<Vec<f64>> {
    let (n, m) = (x.len(), x[0].len());
    let dot = |r: &[f64], w: &[f64]| -> f64 { r.iter().zip(w).map(|(a, b)| a * b).sum() };
    let grad = |d: f64, w: &[f64], r: &[f64], k: usize| {
        let g = 2.0 * spec.lambda * w[k];
        if d != 0.0 {
            g + d * r[k]
        } else {
            g
        }
    };
    let mut w = vec![0.0; m];
    let mut trace = Vec::with_capacity(iters);
    for t in 1..=iters {
        let anchor = w.clone();
        let anchor_margins: Vec<f64> = x.iter().map(|r| dot(r, &anchor)).collect();
        let mut acc = vec![0.0; m];
        for i in 0..n {
            let d = spec.loss.derivative(y[i], anchor_margins[i]);
            if d != 0.0 {
                for k in 0..m {
                    acc[k] += d * x[i][k];
                }
            }
        }
        let mu: Vec<f64> = (0..m).map(|k| acc[k] / n as f64 + 2.0 * spec.lambda * anchor[k]).collect();
        let eta = gamma / (1.0 + ((t - 1) as f64).sqrt());
        let mut rng = rng_stream(seed, "radisa", &[t as u64, 0, 0]);
        for _ in 0..steps {
            let j = sample_index(&mut rng, n);
            let d = spec.loss.derivative(y[j], dot(&x[j], &w));
            let da = spec.loss.derivative(y[j], anchor_margins[j]);
            let dir: Vec<f64> = (0..m).map(|k| (grad(d, &w, &x[j], k) - grad(da, &anchor, &x[j], k)) + mu[k]).collect();
            for k in 0..m {
                w[k] -= eta * dir[k];
            }
        }
        trace.push(w.clone());
    }
    trace
}

/// CoCoA over row blocks only: each block runs the shared local SDCA on
/// copies of its duals and the full `w`, duals move by `delta / P`, and `w`
/// is rebuilt serially from the duals. Returns `(alpha, w)` after every
/// outer iteration. Requires a `P x 1` grid.
pub fn cocoa_reference(data: &PartitionedData, spec: &ProblemSpec, passes: usize, iters: usize, seed: u64) -> Vec<(Vec<f64>, Vec<f64>)> {
    use ddopt::d3ca::{sdca_stream, LocalSdca};
    let grid = data.grid();
    assert_eq!(grid.q(), 1);
    let np = grid.p();
    let mut alpha: Vec<Vec<f64>> = (0..np).map(|p| vec![0.0; grid.n_p(p)]).collect();
    let mut w = vec![0.0; spec.m];
    let mut trace = Vec::with_capacity(iters);
    for t in 1..=iters {
        let local = LocalSdca { passes, t, use_beta: false, conjugate_scale: 1.0 };
        let deltas: Vec<Vec<f64>> = (0..np)
            .map(|p| local.run(alpha[p].clone(), w.clone(), data.block(p, 0), spec, &mut sdca_stream(seed, t, p, 0)))
            .collect();
        for p in 0..np {
            for (a, d) in alpha[p].iter_mut().zip(&deltas[p]) {
                *a += d / np as f64;
            }
        }
        w = vec![0.0; spec.m];
        for p in 0..np {
            let block = data.block(p, 0);
            for (i, a) in alpha[p].iter().enumerate() {
                for (k, v) in block.matrix.row(i).iter() {
                    w[k] += a * v;
                }
            }
        }
        w.iter_mut().for_each(|v| *v /= spec.sigma_n());
        trace.push((alpha.concat(), w.clone()));
    }
    trace
}
