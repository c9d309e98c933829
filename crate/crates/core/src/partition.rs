//! Grid construction and the per-iteration sub-block exchange used by RADiSA.
//!
//! Every column block `[., q]` is cut once into `P` contiguous sub-blocks.
//! At each outer iteration a fresh permutation `pi_q` hands sub-block
//! `pi_q(p)` to row partition `p`, so within one iteration no two workers
//! touch the same coordinates.

use crate::engine::{rng_stream, sample_index};
use crate::error::{Error, Result};
use crate::model::PartitionGrid;

/// Contiguous near-equal split of `len` items into `parts` pieces: the first
/// `len % parts` pieces get one extra item.
pub fn split_bounds(len: usize, parts: usize) -> Vec<usize> {
    let base = len / parts;
    let extra = len % parts;
    let mut bounds = Vec::with_capacity(parts + 1);
    bounds.push(0);
    for k in 0..parts {
        let size = base + usize::from(k < extra);
        bounds.push(bounds[k] + size);
    }
    bounds
}

pub fn make_grid(n: usize, m: usize, p: usize, q: usize) -> Result<PartitionGrid> {
    if p == 0 || q == 0 || p > n || q > m {
        return Err(Error::InvalidPartitionCount { n, m, p, q });
    }
    let row_bounds = split_bounds(n, p);
    let col_bounds = split_bounds(m, q);
    let sub_bounds = (0..q).map(|k| split_bounds(col_bounds[k + 1] - col_bounds[k], p)).collect();
    PartitionGrid::from_bounds(row_bounds, col_bounds, sub_bounds)
}

/// Sub-block assignment for one outer iteration.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubblockAssignment {
    /// `perms[q][p]` is the sub-block of column block `q` given to row partition `p`.
    pub perms: Vec<Vec<usize>>,
}

impl SubblockAssignment {
    pub fn identity(grid: &PartitionGrid) -> Self {
        Self { perms: vec![(0..grid.p()).collect(); grid.q()] }
    }

    pub fn sub_block(&self, p: usize, q: usize) -> usize {
        self.perms[q][p]
    }

    /// Row partition holding sub-block `sub` of column block `q`.
    pub fn owner(&self, q: usize, sub: usize) -> Option<usize> {
        self.perms[q].iter().position(|&s| s == sub)
    }
}

/// Draws the assignment for iteration `t`: one uniformly random permutation
/// per column block, by Fisher-Yates on the stream `(seed, t, q)`.
pub fn assign_subblocks(grid: &PartitionGrid, seed: u64, t: usize) -> SubblockAssignment {
    let perms = (0..grid.q())
        .map(|q| {
            let mut rng = rng_stream(seed, "subblocks", &[t as u64, q as u64]);
            let mut perm: Vec<usize> = (0..grid.p()).collect();
            for i in (1..perm.len()).rev() {
                let j = sample_index(&mut rng, i + 1);
                perm.swap(i, j);
            }
            perm
        })
        .collect();
    SubblockAssignment { perms }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn even_split() {
        let g = make_grid(10, 9, 2, 3).unwrap();
        assert_eq!(g.row_bounds(), &[0, 5, 10]);
        assert_eq!(g.col_bounds(), &[0, 3, 6, 9]);
        assert_eq!(g.sub_bounds(0), &[0, 2, 3]);
    }

    #[test]
    fn remainder_goes_to_leading_blocks() {
        let g = make_grid(7, 5, 3, 2).unwrap();
        assert_eq!((0..3).map(|p| g.n_p(p)).collect::<Vec<_>>(), vec![3, 2, 2]);
        assert_eq!((0..2).map(|q| g.m_q(q)).collect::<Vec<_>>(), vec![3, 2]);
        // two columns shared by three row partitions: one sub-block is empty
        assert_eq!(g.sub_bounds(1), &[0, 1, 2, 2]);
    }

    #[test]
    fn too_many_partitions() {
        assert!(matches!(make_grid(4, 4, 5, 1), Err(Error::InvalidPartitionCount { .. })));
        assert!(make_grid(4, 4, 0, 1).is_err());
        assert!(make_grid(4, 4, 1, 5).is_err());
    }

    #[test]
    fn single_row_partition_gets_identity() {
        let g = make_grid(5, 6, 1, 3).unwrap();
        for t in 1..20 {
            assert_eq!(assign_subblocks(&g, 9, t), SubblockAssignment::identity(&g));
        }
    }

    #[test]
    fn two_row_partitions_reproducible() {
        let g = make_grid(10, 9, 2, 3).unwrap();
        let mut seen_swap = false;
        for t in 1..50 {
            let a = assign_subblocks(&g, 77, t);
            assert_eq!(a, assign_subblocks(&g, 77, t));
            for perm in &a.perms {
                assert!(perm == &[0, 1] || perm == &[1, 0]);
                seen_swap |= perm == &[1, 0];
            }
        }
        assert!(seen_swap);
    }

    proptest! {
        #[test]
        fn grid_covers_everything(n in 1usize..200, m in 1usize..200, p in 1usize..12, q in 1usize..12) {
            prop_assume!(p <= n && q <= m);
            let g = make_grid(n, m, p, q).unwrap();
            prop_assert_eq!((0..p).map(|k| g.n_p(k)).sum::<usize>(), n);
            prop_assert_eq!((0..q).map(|k| g.m_q(k)).sum::<usize>(), m);
            for k in 0..q {
                prop_assert_eq!(*g.sub_bounds(k).last().unwrap(), g.m_q(k));
            }
        }

        #[test]
        fn assignments_are_bijections(p in 1usize..9, q in 1usize..5, seed in any::<u64>(), t in 1usize..1000) {
            let g = make_grid(50, 60, p, q).unwrap();
            let a = assign_subblocks(&g, seed, t);
            for perm in &a.perms {
                let mut sorted = perm.clone();
                sorted.sort_unstable();
                prop_assert_eq!(sorted, (0..p).collect::<Vec<_>>());
            }
        }
    }
}
