//! Doubly distributed dual coordinate ascent.
//!
//! Each outer iteration runs SDCA independently on all `P * Q` blocks,
//! starting from copies of the shared `alpha[p,.]` and `w[.,q]`. The local
//! dual objective is scaled by `1/Q` so that the `Q` local problems of a row
//! partition add up to the global one. Afterwards the dual increments of
//! every row partition are averaged into `alpha[p,.]` (first reduction) and
//! the primal iterate is rebuilt from the updated duals through
//! `w(alpha) = (1/(sigma n)) X' alpha` (second reduction).
//!
//! With `Q = 1` this is CoCoA with averaging.

use crate::engine::{add_vectors, rng_stream, sample_index, ClusterSim, RngStream};
use crate::error::{Error, Result};
use crate::losses::{block_dual_contribution, dual_objective, primal_objective, DUAL_DOMAIN_TOL};
use crate::model::{DataBlock, DualVector, IterationRecord, LossKind, PartitionedData, PrimalVector, ProblemSpec, RunHistory};

/// How the `Q` dual increments of a row partition are folded into `alpha[p,.]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DualAveraging {
    /// `alpha[p,.] += 1/(P Q) sum_q delta[p,q]`.
    #[default]
    AllBlocks,
    /// `alpha[p,.] += 1/Q sum_q delta[p,q]`, averaging only over the blocks
    /// that actually share `alpha[p,.]`.
    RowShare,
}

impl DualAveraging {
    fn factor(self, p: usize, q: usize) -> f64 {
        match self {
            DualAveraging::AllBlocks => 1.0 / (p * q) as f64,
            DualAveraging::RowShare => 1.0 / q as f64,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct D3caConfig {
    /// Outer iterations `T`.
    pub outer_iters: usize,
    /// Local SDCA passes `H`; each pass takes `n_p` coordinate steps.
    pub local_passes: usize,
    /// Replace `||x_i||^2` by `beta = lambda / t` in the coordinate step.
    pub use_beta_stepsize: bool,
    pub averaging: DualAveraging,
    pub seed: u64,
}

impl Default for D3caConfig {
    fn default() -> Self {
        Self { outer_iters: 50, local_passes: 1, use_beta_stepsize: false, averaging: DualAveraging::AllBlocks, seed: 0 }
    }
}

impl D3caConfig {
    pub fn validate(&self) -> Result<()> {
        if self.outer_iters == 0 || self.local_passes == 0 {
            return Err(Error::InvalidConfig("D3CA needs T >= 1 and H >= 1".into()));
        }
        Ok(())
    }
}

/// Closed-form hinge coordinate step.
///
/// Returns `y max(0, min(1, sigma_n (c - y margin) / denom + alpha y)) - alpha`
/// where `c` is `conjugate_scale` (1 for plain SDCA, `1/Q` inside D3CA) and
/// `margin = x_i' w`. The result keeps `(alpha + delta) y` in `[0, 1]`.
pub fn sdca_hinge_step(alpha: f64, margin: f64, y: f64, sigma_n: f64, denom: f64, conjugate_scale: f64) -> Result<f64> {
    if !(denom > 0.0) {
        return Err(Error::ZeroDenominator);
    }
    let s = alpha * y;
    let target = sigma_n * (conjugate_scale - y * margin) / denom + s;
    Ok(y * target.clamp(0.0, 1.0) - alpha)
}

/// Logistic coordinate step: maximizes
/// `c H(s') - (s' - s) y margin - (s' - s)^2 denom / (2 sigma_n)` over
/// `s' = (alpha + delta) y` in `(0, 1)` with a bracketed Newton iteration.
pub fn sdca_logistic_step(alpha: f64, margin: f64, y: f64, sigma_n: f64, denom: f64, conjugate_scale: f64) -> Result<f64> {
    if !(denom > 0.0) {
        return Err(Error::ZeroDenominator);
    }
    let s = (alpha * y).clamp(0.0, 1.0);
    let curvature = denom / sigma_n;
    let slope = |v: f64| conjugate_scale * ((1.0 - v) / v).ln() - y * margin - (v - s) * curvature;
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    let mut v = if s > 0.0 && s < 1.0 { s } else { 0.5 };
    for _ in 0..200 {
        let g = slope(v);
        if g > 0.0 {
            lo = v;
        } else {
            hi = v;
        }
        let h = -conjugate_scale / (v * (1.0 - v)) - curvature;
        let mut next = v - g / h;
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        let done = (next - v).abs() <= 1e-12 * v.max(1e-300) || hi - lo <= 1e-15;
        v = next;
        if done {
            break;
        }
    }
    Ok(y * v - alpha)
}

pub fn sdca_step(loss: LossKind, alpha: f64, margin: f64, y: f64, sigma_n: f64, denom: f64, conjugate_scale: f64) -> Result<f64> {
    match loss {
        LossKind::Hinge => sdca_hinge_step(alpha, margin, y, sigma_n, denom, conjugate_scale),
        LossKind::Logistic => sdca_logistic_step(alpha, margin, y, sigma_n, denom, conjugate_scale),
    }
}

/// Parameters of one local SDCA solve.
#[derive(Debug, Clone, Copy)]
pub struct LocalSdca {
    /// Passes `H`; the solve takes `H * n_p` coordinate steps.
    pub passes: usize,
    /// Global iteration, used by the `beta = lambda / t` step size.
    pub t: usize,
    pub use_beta: bool,
    /// Scale on the conjugate term, `1/Q` inside D3CA.
    pub conjugate_scale: f64,
}

impl LocalSdca {
    /// Runs SDCA on `block` starting from the given copies of `alpha[p,.]`
    /// and `w[.,q]`, returning the accumulated increment `delta[p,q]`.
    ///
    /// Rows with `||x_i||^2 = 0` are skipped unless the `beta` step is on.
    pub fn run(&self, mut alpha: Vec<f64>, mut w: Vec<f64>, block: &DataBlock, spec: &ProblemSpec, rng: &mut RngStream) -> Vec<f64> {
        let n_p = block.rows();
        let mut delta = vec![0.0; n_p];
        if n_p == 0 {
            return delta;
        }
        let sigma_n = spec.sigma_n();
        let beta = spec.lambda / self.t as f64;
        let norms: Vec<f64> = if self.use_beta {
            Vec::new()
        } else {
            (0..n_p).map(|i| block.matrix.row(i).norm_sq()).collect()
        };
        for _ in 0..self.passes * n_p {
            let i = sample_index(rng, n_p);
            let row = block.matrix.row(i);
            let denom = if self.use_beta { beta } else { norms[i] };
            let margin = row.dot(&w);
            let Ok(step) = sdca_step(spec.loss, alpha[i], margin, block.labels[i], sigma_n, denom, self.conjugate_scale) else {
                continue;
            };
            if step != 0.0 {
                alpha[i] += step;
                delta[i] += step;
                row.axpy(step / sigma_n, &mut w);
            }
        }
        delta
    }
}

/// Stream used by the local solve of block `(p, q)` at iteration `t`.
pub fn sdca_stream(seed: u64, t: usize, p: usize, q: usize) -> RngStream {
    rng_stream(seed, "sdca", &[t as u64, p as u64, q as u64])
}

#[derive(Debug, Clone)]
pub struct D3caOutput {
    pub w: PrimalVector,
    pub alpha: DualVector,
    pub history: RunHistory,
}

/// Runs D3CA from `alpha = 0, w = 0`.
///
/// `f_star`, when given, fills in the relative optimality of every record.
/// `observer` sees the iterate after each outer iteration.
pub fn run_d3ca(
    data: &PartitionedData,
    spec: &ProblemSpec,
    config: &D3caConfig,
    sim: &ClusterSim,
    f_star: Option<f64>,
) -> Result<D3caOutput> {
    run_d3ca_observed(data, spec, config, sim, f_star, |_, _, _| {})
}

pub fn run_d3ca_observed(
    data: &PartitionedData,
    spec: &ProblemSpec,
    config: &D3caConfig,
    sim: &ClusterSim,
    f_star: Option<f64>,
    mut observer: impl FnMut(usize, &PrimalVector, &DualVector),
) -> Result<D3caOutput> {
    config.validate()?;
    let grid = data.grid();
    if sim.workers() != grid.workers() {
        return Err(Error::InvalidConfig(format!("cluster has {} workers for {} blocks", sim.workers(), grid.workers())));
    }
    if spec.n != data.n() || spec.m != data.m() {
        return Err(Error::DimensionMismatch("problem and data disagree".into()));
    }
    let (np, nq) = (grid.p(), grid.q());
    let factor = config.averaging.factor(np, nq);
    let scale = 1.0 / spec.sigma_n();
    let mut alpha = DualVector::zeros(grid);
    let mut w = PrimalVector::zeros(grid);
    let mut history = RunHistory::default();
    let start = sim.stats();

    for t in 1..=config.outer_iters {
        let local = LocalSdca {
            passes: config.local_passes,
            t,
            use_beta: config.use_beta_stepsize,
            conjugate_scale: 1.0 / nq as f64,
        };
        let (alpha_ref, w_ref) = (&alpha, &w);
        let deltas = sim.map_workers(|id| {
            let (p, q) = (id / nq, id % nq);
            let mut rng = sdca_stream(config.seed, t, p, q);
            local.run(alpha_ref.blocks[p].clone(), w_ref.blocks[q].clone(), data.block(p, q), spec, &mut rng)
        })?;

        let mut deltas: Vec<Option<Vec<f64>>> = deltas.into_iter().map(Some).collect();
        sim.phase(|ph| {
            for p in 0..np {
                let group = (0..nq).map(|q| deltas[grid.worker(p, q)].take().unwrap()).collect();
                let sum = ph.tree_aggregate(group, add_vectors)?;
                for (a, d) in alpha.blocks[p].iter_mut().zip(&sum) {
                    *a += factor * d;
                }
            }
            Ok(())
        })?;
        alpha.check_dual_domain(data, DUAL_DOMAIN_TOL)?;

        let alpha_ref = &alpha;
        let mut parts: Vec<Option<Vec<f64>>> = sim
            .map_workers(|id| {
                let (p, q) = (id / nq, id % nq);
                block_dual_contribution(data.block(p, q), &alpha_ref.blocks[p])
            })?
            .into_iter()
            .map(Some)
            .collect();
        sim.phase(|ph| {
            for q in 0..nq {
                let group = (0..np).map(|p| parts[grid.worker(p, q)].take().unwrap()).collect();
                let mut sum = ph.tree_aggregate(group, add_vectors)?;
                sum.iter_mut().for_each(|v| *v *= scale);
                w.blocks[q] = sum;
            }
            Ok(())
        })?;

        let primal_value = primal_objective(&w, data, spec)?;
        let dual_value = dual_objective(&alpha, data, spec)?;
        let stats = sim.stats();
        history.push(IterationRecord {
            t,
            primal_value,
            dual_value: Some(dual_value),
            rel_opt: f_star.map(|f| (primal_value - f) / f),
            reduce_ops: stats.phases - start.phases,
            elements_communicated: stats.scalars - start.scalars,
        });
        observer(t, &w, &alpha);
    }
    Ok(D3caOutput { w, alpha, history })
}
