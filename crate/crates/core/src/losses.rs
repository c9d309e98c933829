//! Losses, conjugates, and the primal/dual objectives.
//!
//! Primal: `F(w) = (1/n) sum_i f_i(w'x_i) + lambda ||w||^2`.
//!
//! Dual, with `sigma = 2 lambda` (see [`ProblemSpec::sigma`]):
//! `D(alpha) = (1/n) sum_i -phi_i*(-alpha_i) - (sigma/2) ||w(alpha)||^2`,
//! `w(alpha) = (1/(sigma n)) sum_i alpha_i x_i`.
//!
//! The objectives are evaluated along the distributed path: every block
//! produces partial inner products over its own columns, a row-wise tree
//! reduction assembles the margins, and a second reduction sums the losses.
//! These evaluations are for monitoring and are not counted as
//! communication.

use crate::engine::{add_vectors, tree_reduce};
use crate::error::{Error, Result};
use crate::matrix::RowView;
use crate::model::{DataBlock, DualVector, LossKind, PartitionedData, PrimalVector, ProblemSpec};

/// Domain tolerance for dual feasibility checks.
pub const DUAL_DOMAIN_TOL: f64 = 1e-12;

/// Tree fan-in used by the monitoring reductions.
const MONITOR_ARITY: usize = 2;

/// Loss value and derivative at margin `z = w'x_i`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossEval {
    pub value: f64,
    pub derivative: f64,
}

impl LossKind {
    pub fn value(self, y: f64, z: f64) -> f64 {
        match self {
            LossKind::Hinge => (1.0 - y * z).max(0.0),
            LossKind::Logistic => softplus(-y * z),
        }
    }

    /// `d f / d z`. At the hinge kink (`y z = 1`) the subgradient 0 is used.
    pub fn derivative(self, y: f64, z: f64) -> f64 {
        match self {
            LossKind::Hinge => {
                if y * z < 1.0 {
                    -y
                } else {
                    0.0
                }
            }
            LossKind::Logistic => -y * sigmoid(-y * z),
        }
    }

    pub fn eval(self, y: f64, z: f64) -> LossEval {
        LossEval { value: self.value(y, z), derivative: self.derivative(y, z) }
    }

    /// `-phi*(-alpha)`, the per-observation dual term, or `None` when
    /// `s = alpha y` leaves `[0, 1]` by more than [`DUAL_DOMAIN_TOL`].
    ///
    /// Hinge: `s`. Logistic: the binary entropy of `s`.
    pub fn neg_conjugate(self, y: f64, alpha: f64) -> Option<f64> {
        let s = alpha * y;
        if !(-DUAL_DOMAIN_TOL..=1.0 + DUAL_DOMAIN_TOL).contains(&s) {
            return None;
        }
        let s = s.clamp(0.0, 1.0);
        Some(match self {
            LossKind::Hinge => s,
            LossKind::Logistic => entropy(s),
        })
    }
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `-s ln s - (1 - s) ln(1 - s)` with `0 ln 0 = 0`.
pub(crate) fn entropy(s: f64) -> f64 {
    let xlogx = |x: f64| if x > 0.0 { x * x.ln() } else { 0.0 };
    -xlogx(s) - xlogx(1.0 - s)
}

fn check_primal(w: &PrimalVector, data: &PartitionedData, spec: &ProblemSpec) -> Result<()> {
    w.check(data.grid())?;
    check_spec(data, spec)
}

fn check_spec(data: &PartitionedData, spec: &ProblemSpec) -> Result<()> {
    if spec.n != data.n() || spec.m != data.m() {
        return Err(Error::DimensionMismatch(format!(
            "problem is {}x{} but data is {}x{}",
            spec.n,
            spec.m,
            data.n(),
            data.m()
        )));
    }
    Ok(())
}

/// `x[p,q] w[.,q]` for every local row of the block.
pub fn block_partial_margins(block: &DataBlock, w_q: &[f64]) -> Vec<f64> {
    (0..block.rows()).map(|i| block.matrix.row(i).dot(w_q)).collect()
}

/// `alpha[p,.]' x[p,q]`, the block's contribution to `X' alpha`.
pub fn block_dual_contribution(block: &DataBlock, alpha_p: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; block.cols()];
    for (i, &a) in alpha_p.iter().enumerate() {
        if a != 0.0 {
            block.matrix.row(i).axpy(a, &mut out);
        }
    }
    out
}

/// Full margins `w'x_i`, one vector per row partition, assembled by a tree
/// reduction over the column blocks.
pub fn margins(w: &PrimalVector, data: &PartitionedData) -> Result<Vec<Vec<f64>>> {
    let grid = data.grid();
    (0..grid.p())
        .map(|p| {
            let parts = (0..grid.q()).map(|q| block_partial_margins(data.block(p, q), &w.blocks[q])).collect();
            Ok(tree_reduce(parts, MONITOR_ARITY, add_vectors)?.0)
        })
        .collect()
}

pub fn primal_objective(w: &PrimalVector, data: &PartitionedData, spec: &ProblemSpec) -> Result<f64> {
    check_primal(w, data, spec)?;
    let margins = margins(w, data)?;
    let loss_sums: Vec<f64> = margins
        .iter()
        .enumerate()
        .map(|(p, z)| z.iter().zip(data.labels(p)).map(|(&z, &y)| spec.loss.value(y, z)).sum())
        .collect();
    let (loss, _) = tree_reduce(loss_sums, MONITOR_ARITY, |a, b| a + b)?;
    Ok(loss / spec.n as f64 + spec.lambda * w.norm_sq())
}

/// `w(alpha) = (1/(sigma n)) sum_p alpha[p,.]' x[p,q]` for each column block,
/// summed over `p` in a fixed tree order.
pub fn primal_from_dual(alpha: &DualVector, data: &PartitionedData, spec: &ProblemSpec) -> Result<PrimalVector> {
    alpha.check(data.grid())?;
    check_spec(data, spec)?;
    let grid = data.grid();
    let scale = 1.0 / spec.sigma_n();
    let blocks = (0..grid.q())
        .map(|q| {
            let parts = (0..grid.p()).map(|p| block_dual_contribution(data.block(p, q), &alpha.blocks[p])).collect();
            let (mut sum, _) = tree_reduce(parts, MONITOR_ARITY, add_vectors)?;
            sum.iter_mut().for_each(|v| *v *= scale);
            Ok(sum)
        })
        .collect::<Result<_>>()?;
    Ok(PrimalVector { blocks })
}

/// Sum of `-phi*(-alpha_i)` over all observations; errors on the first
/// infeasible coordinate.
fn conjugate_sum(alpha: &DualVector, data: &PartitionedData, loss: LossKind) -> Result<f64> {
    let mut offset = 0;
    let mut sums = Vec::with_capacity(alpha.blocks.len());
    for (p, block) in alpha.blocks.iter().enumerate() {
        let mut s = 0.0;
        for (i, (&a, &y)) in block.iter().zip(data.labels(p)).enumerate() {
            s += loss.neg_conjugate(y, a).ok_or(Error::InfeasibleDual { index: offset + i })?;
        }
        sums.push(s);
        offset += block.len();
    }
    Ok(tree_reduce(sums, MONITOR_ARITY, |a, b| a + b)?.0)
}

pub fn dual_objective(alpha: &DualVector, data: &PartitionedData, spec: &ProblemSpec) -> Result<f64> {
    alpha.check(data.grid())?;
    check_spec(data, spec)?;
    let conj = conjugate_sum(alpha, data, spec.loss)?;
    let w = primal_from_dual(alpha, data, spec)?;
    Ok(conj / spec.n as f64 - 0.5 * spec.sigma() * w.norm_sq())
}

/// `F(w) - D(alpha)`; non-negative up to rounding for feasible pairs.
pub fn duality_gap(w: &PrimalVector, alpha: &DualVector, data: &PartitionedData, spec: &ProblemSpec) -> Result<f64> {
    Ok(primal_objective(w, data, spec)? - dual_objective(alpha, data, spec)?)
}

/// Gradient of `f_j(w'x_j) + lambda ||w||^2` restricted to the coordinates
/// of `row` (a feature slice), with the margin taken over that slice.
pub fn stochastic_gradient(w: &[f64], row: RowView<'_>, y: f64, spec: &ProblemSpec) -> Vec<f64> {
    let margin = row.dot(w);
    let mut out = vec![0.0; w.len()];
    stochastic_gradient_into(margin, w, row, y, spec, &mut out);
    out
}

/// Like [`stochastic_gradient`] for a margin computed elsewhere; writes into `out`.
pub fn stochastic_gradient_into(margin: f64, w: &[f64], row: RowView<'_>, y: f64, spec: &ProblemSpec, out: &mut [f64]) {
    let d = spec.loss.derivative(y, margin);
    let two_lambda = 2.0 * spec.lambda;
    for (o, &wk) in out.iter_mut().zip(w) {
        *o = two_lambda * wk;
    }
    if d != 0.0 {
        row.axpy(d, out);
    }
}

/// Checked variant of [`stochastic_gradient`] addressing row `j` of a block
/// and the local column range `cols`.
pub fn block_stochastic_gradient(
    block: &DataBlock,
    j: usize,
    cols: std::ops::Range<usize>,
    w_slice: &[f64],
    spec: &ProblemSpec,
) -> Result<Vec<f64>> {
    if j >= block.rows() {
        return Err(Error::IndexOutOfRange { index: j, len: block.rows() });
    }
    if cols.end > block.cols() || cols.len() != w_slice.len() {
        return Err(Error::IndexOutOfRange { index: cols.end, len: block.cols() });
    }
    let row = block.matrix.row(j).slice(cols.start, cols.end);
    Ok(stochastic_gradient(w_slice, row, block.labels[j], spec))
}
