//! RADiSA: doubly distributed SVRG with exchanged feature sub-blocks.
//!
//! Every outer iteration computes the full gradient `mu` at the snapshot
//! `w~` (one communication phase), then every block `(p, q)` runs `L` SVRG
//! steps on the sub-block of `w[.,q]` it was handed for this iteration, and
//! the disjoint local solutions are concatenated into the next `w~` (second
//! phase). The averaging variant lets every block update all of `w[.,q]` and
//! averages the `P` copies instead.
//!
//! Inside a block the margin `w'x_j` only covers the block's own features
//! `[., q]`; the rest of `w` is not visible to the worker.

use std::ops::Range;

use crate::engine::{add_vectors, rng_stream, sample_index, tree_reduce, ClusterSim, Phase, RngStream};
use crate::error::{Error, Result};
use crate::losses::{block_partial_margins, primal_objective, stochastic_gradient_into};
use crate::matrix::RowView;
use crate::model::{DataBlock, IterationRecord, PartitionGrid, PartitionedData, PrimalVector, ProblemSpec, RunHistory};
use crate::partition::{assign_subblocks, SubblockAssignment};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RadisaVariant {
    /// Non-overlapping sub-blocks, concatenated.
    #[default]
    Disjoint,
    /// Every block updates its whole column block; results averaged over `p`.
    Avg,
}

/// Margin used by the inner stochastic gradients of a block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MarginMode {
    /// `x[p,q] w[.,q]`: the block's own features only.
    #[default]
    Partial,
    /// The block's partial margin plus the contribution of the other column
    /// blocks frozen at the anchor, `x w~ - x[p,q] w~[.,q]`. Uses margins
    /// already reduced for the full gradient, so it costs no communication.
    Anchored,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RadisaConfig {
    /// Inner SVRG steps `L` per block and outer iteration.
    pub batch_size: usize,
    /// Step-size constant in `eta_t = gamma / (1 + sqrt(t - 1))`.
    pub gamma: f64,
    pub outer_iters: usize,
    pub variant: RadisaVariant,
    pub seed: u64,
    /// Recompute the full gradient every `gradient_lag` outer iterations.
    pub gradient_lag: usize,
    /// Multiply `gamma` by `P` (strong-scaling adjustment).
    pub scale_step_with_p: bool,
    pub margins: MarginMode,
}

impl Default for RadisaConfig {
    fn default() -> Self {
        Self {
            batch_size: 100,
            gamma: 0.1,
            outer_iters: 50,
            variant: RadisaVariant::Disjoint,
            seed: 0,
            gradient_lag: 1,
            scale_step_with_p: false,
            margins: MarginMode::Partial,
        }
    }
}

impl RadisaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.outer_iters == 0 || self.gradient_lag == 0 {
            return Err(Error::InvalidConfig("RADiSA needs L >= 1, T >= 1 and a gradient lag >= 1".into()));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::InvalidConfig(format!("gamma must be positive, got {}", self.gamma)));
        }
        Ok(())
    }

    pub fn effective_gamma(&self, p: usize) -> f64 {
        if self.scale_step_with_p {
            self.gamma * p as f64
        } else {
            self.gamma
        }
    }
}

/// `eta_t = gamma / (1 + sqrt(t - 1))` for `t >= 1`.
pub fn step_size(gamma: f64, t: usize) -> f64 {
    gamma / (1.0 + ((t - 1) as f64).sqrt())
}

/// Full gradient together with the per-block partial margins `x[p,q] w~[.,q]`
/// that were computed on the way.
#[derive(Debug, Clone)]
pub struct GradientSnapshot {
    pub w: PrimalVector,
    pub mu: PrimalVector,
    /// Indexed by worker id.
    pub partial_margins: Vec<Vec<f64>>,
    /// Full margins `x_i w~`, indexed by row block.
    pub margins: Vec<Vec<f64>>,
}

impl GradientSnapshot {
    /// `x w~ - x[p,q] w~[.,q]` for the rows of block `(p, q)`.
    pub fn margin_offsets(&self, grid: &PartitionGrid, p: usize, q: usize) -> Vec<f64> {
        let partial = &self.partial_margins[grid.worker(p, q)];
        self.margins[p].iter().zip(partial).map(|(full, part)| full - part).collect()
    }
}

fn gradient_from_parts(
    w: &PrimalVector,
    data: &PartitionedData,
    spec: &ProblemSpec,
    partial_margins: &[Vec<f64>],
    mut reduce: impl FnMut(Vec<Vec<f64>>) -> Result<Vec<f64>>,
) -> Result<(PrimalVector, Vec<Vec<f64>>)> {
    let grid = data.grid();
    let (np, nq) = (grid.p(), grid.q());
    let margins: Vec<Vec<f64>> = (0..np)
        .map(|p| reduce((0..nq).map(|q| partial_margins[grid.worker(p, q)].clone()).collect()))
        .collect::<Result<_>>()?;
    let n = spec.n as f64;
    let two_lambda = 2.0 * spec.lambda;
    let blocks = (0..nq)
        .map(|q| {
            let parts = (0..np)
                .map(|p| {
                    let block = data.block(p, q);
                    let mut acc = vec![0.0; block.cols()];
                    for (i, (&z, &y)) in margins[p].iter().zip(block.labels.iter()).enumerate() {
                        let d = spec.loss.derivative(y, z);
                        if d != 0.0 {
                            block.matrix.row(i).axpy(d, &mut acc);
                        }
                    }
                    acc
                })
                .collect();
            let sum = reduce(parts)?;
            Ok(sum.iter().zip(&w.blocks[q]).map(|(s, wk)| s / n + two_lambda * wk).collect())
        })
        .collect::<Result<_>>()?;
    Ok((PrimalVector { blocks }, margins))
}

/// `mu = (1/n) sum_i grad f_i(w~) + 2 lambda w~`, assembled along the
/// distributed path (row reduction of margins, column reduction of the
/// per-block gradient sums) without communication accounting.
pub fn full_gradient(w: &PrimalVector, data: &PartitionedData, spec: &ProblemSpec) -> Result<PrimalVector> {
    w.check(data.grid())?;
    let grid = data.grid();
    let partial: Vec<Vec<f64>> = (0..grid.workers())
        .map(|id| block_partial_margins(&data.blocks()[id], &w.blocks[id % grid.q()]))
        .collect();
    Ok(gradient_from_parts(w, data, spec, &partial, |g| Ok(tree_reduce(g, 2, add_vectors)?.0))?.0)
}

/// Counted full-gradient phase: partial margins are computed in a worker
/// round, both reductions are charged to one phase.
pub fn full_gradient_on(sim: &ClusterSim, w: &PrimalVector, data: &PartitionedData, spec: &ProblemSpec) -> Result<GradientSnapshot> {
    let grid = data.grid();
    let nq = grid.q();
    let partial_margins = sim.map_workers(|id| block_partial_margins(&data.blocks()[id], &w.blocks[id % nq]))?;
    let (mu, margins) = sim.phase(|ph| gradient_from_parts(w, data, spec, &partial_margins, |g| ph.tree_aggregate(g, add_vectors)))?;
    Ok(GradientSnapshot { w: w.clone(), mu, partial_margins, margins })
}

/// SVRG direction on a feature slice:
/// `(grad f_j(w) - grad f_j(w~)) + mu`, each gradient including `2 lambda w`.
#[allow(clippy::too_many_arguments)]
pub fn svrg_direction(
    margin: f64,
    anchor_margin: f64,
    w: &[f64],
    anchor: &[f64],
    mu: &[f64],
    row: RowView<'_>,
    y: f64,
    spec: &ProblemSpec,
    scratch: &mut [f64],
    out: &mut [f64],
) {
    stochastic_gradient_into(margin, w, row, y, spec, out);
    stochastic_gradient_into(anchor_margin, anchor, row, y, spec, scratch);
    for ((o, g), m) in out.iter_mut().zip(scratch.iter()).zip(mu) {
        *o = (*o - g) + m;
    }
}

/// One block's inner loop.
#[derive(Debug, Clone)]
pub struct SvrgInner<'a> {
    pub block: &'a DataBlock,
    pub spec: &'a ProblemSpec,
    /// Columns being updated, relative to the block.
    pub cols: Range<usize>,
    pub steps: usize,
    pub eta: f64,
    /// Added to both the current and the anchor margin of each row.
    pub margin_offsets: Option<&'a [f64]>,
}

impl SvrgInner<'_> {
    /// Runs `L` SVRG steps on `w[cols]`, starting from `start` (the whole
    /// column block), anchored at `anchor` with precomputed anchor margins.
    /// Returns the updated slice; coordinates outside `cols` are never written.
    pub fn run(&self, start: &[f64], anchor: &[f64], anchor_margins: &[f64], mu: &[f64], rng: &mut RngStream) -> Vec<f64> {
        let mut w = start.to_vec();
        let n_p = self.block.rows();
        let width = self.cols.len();
        if n_p == 0 || width == 0 {
            return w[self.cols.clone()].to_vec();
        }
        let mu = &mu[self.cols.clone()];
        let anchor_slice = &anchor[self.cols.clone()];
        let mut dir = vec![0.0; width];
        let mut scratch = vec![0.0; width];
        for _ in 0..self.steps {
            let j = sample_index(rng, n_p);
            let row = self.block.matrix.row(j);
            let (margin, anchor_margin) = match self.margin_offsets {
                Some(off) => (row.dot(&w) + off[j], anchor_margins[j] + off[j]),
                None => (row.dot(&w), anchor_margins[j]),
            };
            let slice = &mut w[self.cols.clone()];
            svrg_direction(
                margin,
                anchor_margin,
                slice,
                anchor_slice,
                mu,
                row.slice(self.cols.start, self.cols.end),
                self.block.labels[j],
                self.spec,
                &mut scratch,
                &mut dir,
            );
            for (wk, d) in slice.iter_mut().zip(&dir) {
                *wk -= self.eta * d;
            }
        }
        w[self.cols.clone()].to_vec()
    }
}

pub fn radisa_stream(seed: u64, t: usize, p: usize, q: usize) -> RngStream {
    rng_stream(seed, "radisa", &[t as u64, p as u64, q as u64])
}

/// Output of one block's inner loop.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalSolution {
    pub p: usize,
    pub q: usize,
    pub values: Vec<f64>,
}

/// Builds the next global iterate from the local solutions.
///
/// Disjoint: `w[.,q]` is the concatenation of the sub-block slices in
/// sub-block order, the owner of each sub-block given by `assignment`.
/// Avg: `w[.,q] = (1/P) sum_p w_{p,q}`. With a phase handle the reductions
/// are counted.
pub fn merge_solutions(
    grid: &PartitionGrid,
    variant: RadisaVariant,
    assignment: &SubblockAssignment,
    solutions: Vec<LocalSolution>,
    phase: Option<&Phase<'_>>,
) -> Result<PrimalVector> {
    let (np, nq) = (grid.p(), grid.q());
    let mut slots: Vec<Option<Vec<f64>>> = vec![None; grid.workers()];
    for s in solutions {
        if s.p < np && s.q < nq {
            slots[grid.worker(s.p, s.q)] = Some(s.values);
        }
    }
    let reduce = |group: Vec<Vec<f64>>, concat: bool| -> Result<Vec<f64>> {
        let combine = move |mut a: Vec<f64>, b: Vec<f64>| {
            if concat {
                a.extend(b);
                a
            } else {
                add_vectors(a, b)
            }
        };
        match phase {
            Some(ph) => ph.tree_aggregate(group, combine),
            None => Ok(tree_reduce(group, 2, combine)?.0),
        }
    };
    let mut blocks = Vec::with_capacity(nq);
    for q in 0..nq {
        match variant {
            RadisaVariant::Disjoint => {
                let mut group = Vec::with_capacity(np);
                for sub in 0..np {
                    let owner = assignment.owner(q, sub).ok_or(Error::MissingSlice { q, sub })?;
                    let slice = slots[grid.worker(owner, q)].take().ok_or(Error::MissingSlice { q, sub })?;
                    if slice.len() != grid.sub_range(q, sub).len() {
                        return Err(Error::DimensionMismatch(format!("slice for sub-block {sub} of column block {q}")));
                    }
                    group.push(slice);
                }
                blocks.push(reduce(group, true)?);
            }
            RadisaVariant::Avg => {
                let mut group = Vec::with_capacity(np);
                for p in 0..np {
                    let v = slots[grid.worker(p, q)].take().ok_or(Error::MissingSlice { q, sub: p })?;
                    if v.len() != grid.m_q(q) {
                        return Err(Error::DimensionMismatch(format!("local solution ({p}, {q})")));
                    }
                    group.push(v);
                }
                let mut sum = reduce(group, false)?;
                let inv_p = 1.0 / np as f64;
                sum.iter_mut().for_each(|v| *v *= inv_p);
                blocks.push(sum);
            }
        }
    }
    Ok(PrimalVector { blocks })
}

#[derive(Debug, Clone)]
pub struct RadisaOutput {
    pub w: PrimalVector,
    pub history: RunHistory,
}

pub fn run_radisa(
    data: &PartitionedData,
    spec: &ProblemSpec,
    config: &RadisaConfig,
    sim: &ClusterSim,
    f_star: Option<f64>,
) -> Result<RadisaOutput> {
    run_radisa_observed(data, spec, config, sim, f_star, |_, _| {})
}

pub fn run_radisa_observed(
    data: &PartitionedData,
    spec: &ProblemSpec,
    config: &RadisaConfig,
    sim: &ClusterSim,
    f_star: Option<f64>,
    mut observer: impl FnMut(usize, &PrimalVector),
) -> Result<RadisaOutput> {
    config.validate()?;
    let grid = data.grid();
    if sim.workers() != grid.workers() {
        return Err(Error::InvalidConfig(format!("cluster has {} workers for {} blocks", sim.workers(), grid.workers())));
    }
    if spec.n != data.n() || spec.m != data.m() {
        return Err(Error::DimensionMismatch("problem and data disagree".into()));
    }
    let nq = grid.q();
    let gamma = config.effective_gamma(grid.p());
    let mut w = PrimalVector::zeros(grid);
    let mut snapshot: Option<GradientSnapshot> = None;
    let mut history = RunHistory::default();
    let start = sim.stats();

    for t in 1..=config.outer_iters {
        if (t - 1) % config.gradient_lag == 0 {
            snapshot = Some(full_gradient_on(sim, &w, data, spec)?);
        }
        let snap = snapshot.as_ref().unwrap();
        let eta = step_size(gamma, t);
        let assignment = match config.variant {
            RadisaVariant::Disjoint => assign_subblocks(grid, config.seed, t),
            RadisaVariant::Avg => SubblockAssignment::identity(grid),
        };
        let (w_ref, assignment_ref) = (&w, &assignment);
        let solutions = sim.map_workers(|id| {
            let (p, q) = (id / nq, id % nq);
            let cols = match config.variant {
                RadisaVariant::Disjoint => grid.sub_range(q, assignment_ref.sub_block(p, q)),
                RadisaVariant::Avg => 0..grid.m_q(q),
            };
            let offsets = match config.margins {
                MarginMode::Partial => None,
                MarginMode::Anchored => Some(snap.margin_offsets(grid, p, q)),
            };
            let inner = SvrgInner { block: data.block(p, q), spec, cols, steps: config.batch_size, eta, margin_offsets: offsets.as_deref() };
            let mut rng = radisa_stream(config.seed, t, p, q);
            let values = inner.run(&w_ref.blocks[q], &snap.w.blocks[q], &snap.partial_margins[id], &snap.mu.blocks[q], &mut rng);
            LocalSolution { p, q, values }
        })?;
        w = sim.phase(|ph| merge_solutions(grid, config.variant, &assignment, solutions, Some(ph)))?;

        let primal_value = primal_objective(&w, data, spec)?;
        let stats = sim.stats();
        history.push(IterationRecord {
            t,
            primal_value,
            dual_value: None,
            rel_opt: f_star.map(|f| (primal_value - f) / f),
            reduce_ops: stats.phases - start.phases,
            elements_communicated: stats.scalars - start.scalars,
        });
        observer(t, &w);
    }
    Ok(RadisaOutput { w, history })
}
