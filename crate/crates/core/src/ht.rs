//! Hierarchical Tucker dimension trees and fixed-rank HSVD truncation.
//!
//! A [`DimensionTree`] is a binary tree whose leaves are the tensor modes.
//! Every non-root node `t` defines the matricization `X^(t)` (rows over the
//! modes in `t`, columns over the rest); a state has hierarchical rank
//! `≤ r` when every such matricization has rank `≤ r_t`.
//!
//! [`hsvd_truncate`] projects a dense state into that class by visiting the
//! non-root nodes breadth-first from the root and replacing the current
//! tensor by its projection onto the top `r_t` left singular vectors of
//! `X^(t)`. Parents are visited before children and any two nodes are either
//! nested or disjoint, so each later projection acts on one side of every
//! earlier matricization and cannot raise its rank. The squared residual is
//! bounded by the sum over nodes of the discarded spectral tails of the
//! input.

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{eigh, gram_cols, gram_rows, singular_values};
use crate::tensor::{distance, gather, scatter, Bipartition, CMatrix, ModeShape, StateVector, C64};

pub type NodeId = usize;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeNode {
    pub id: NodeId,
    /// Ascending mode list covered by this node.
    pub modes: Vec<usize>,
    pub parent: Option<NodeId>,
    pub children: Vec<NodeId>,
}

impl TreeNode {
    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }
}

/// Binary dimension tree. Node ids are assigned breadth-first, so the root
/// is `0` and ids `1..` enumerate the non-root nodes in visiting order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DimensionTree {
    nodes: Vec<TreeNode>,
    leaves: usize,
}

impl DimensionTree {
    /// Canonical balanced tree over `n` modes. A contiguous range of length
    /// `m` splits into a left block of `⌈m/2⌉` modes and a right block of
    /// `⌊m/2⌋`.
    pub fn balanced(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::contract("a dimension tree needs at least 2 modes"));
        }
        let mut nodes = vec![TreeNode {
            id: 0,
            modes: (0..n).collect(),
            parent: None,
            children: Vec::new(),
        }];
        let mut queue = VecDeque::from([(0usize, 0usize, n)]);
        while let Some((id, lo, hi)) = queue.pop_front() {
            if hi - lo < 2 {
                continue;
            }
            let mid = lo + (hi - lo).div_ceil(2);
            for (a, b) in [(lo, mid), (mid, hi)] {
                let child = nodes.len();
                nodes.push(TreeNode {
                    id: child,
                    modes: (a..b).collect(),
                    parent: Some(id),
                    children: Vec::new(),
                });
                nodes[id].children.push(child);
                queue.push_back((child, a, b));
            }
        }
        Ok(Self { nodes, leaves: n })
    }

    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> Option<&TreeNode> {
        self.nodes.get(id)
    }

    pub fn root(&self) -> &TreeNode {
        &self.nodes[0]
    }

    /// Non-root nodes in breadth-first order.
    pub fn non_root(&self) -> impl Iterator<Item = &TreeNode> {
        self.nodes[1..].iter()
    }

    pub fn leaf_count(&self) -> usize {
        self.leaves
    }

    /// Edges on the longest root-to-leaf path.
    pub fn depth(&self) -> usize {
        let mut depth = vec![0usize; self.nodes.len()];
        for node in &self.nodes[1..] {
            depth[node.id] = depth[node.parent.unwrap()] + 1;
        }
        depth.into_iter().max().unwrap_or(0)
    }

    fn check_shape(&self, shape: ModeShape) -> Result<()> {
        if shape.n() != self.leaves {
            Err(Error::contract(format!(
                "tree has {} leaves but the state has {} modes",
                self.leaves,
                shape.n()
            )))
        } else {
            Ok(())
        }
    }
}

/// Largest rank a matricization over `modes` can have.
pub fn max_node_rank(shape: ModeShape, modes: usize) -> usize {
    let rows = shape.d().pow(modes as u32);
    let cols = shape.d().pow((shape.n() - modes) as u32);
    rows.min(cols)
}

/// Rank limits per non-root node.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RankBudget {
    Uniform(usize),
    PerNode(BTreeMap<NodeId, usize>),
}

impl RankBudget {
    pub fn rank_for(&self, node: NodeId) -> Result<usize> {
        let r = match self {
            RankBudget::Uniform(r) => *r,
            RankBudget::PerNode(map) => *map
                .get(&node)
                .ok_or_else(|| Error::contract(format!("rank budget has no entry for node {node}")))?,
        };
        if r < 1 {
            return Err(Error::contract(format!("rank budget for node {node} is below 1")));
        }
        Ok(r)
    }
}

/// Outcome of one truncation. Spectra and tails refer to the input state,
/// before any projection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruncationReport {
    pub residual: f64,
    pub per_node_spectra: BTreeMap<NodeId, Vec<f64>>,
    pub per_node_tail: BTreeMap<NodeId, f64>,
    pub achieved_ranks: BTreeMap<NodeId, usize>,
}

impl TruncationReport {
    /// `Σ_t Σ_{α > r_t} σ_α²`.
    pub fn total_tail(&self) -> f64 {
        self.per_node_tail.values().sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TruncationOptions {
    /// Rescale the output to the input's norm.
    pub renormalize: bool,
    /// Compute input spectra and tails. When off, the report carries only
    /// the residual and achieved ranks.
    pub spectra: bool,
}

impl Default for TruncationOptions {
    fn default() -> Self {
        Self {
            renormalize: false,
            spectra: true,
        }
    }
}

/// Singular spectrum of `X^(t)` at every non-root node.
pub fn node_spectra(state: &StateVector, tree: &DimensionTree) -> Result<BTreeMap<NodeId, Vec<f64>>> {
    tree.check_shape(state.shape())?;
    tree.non_root()
        .map(|node| {
            let split = Bipartition::new(state.shape(), &node.modes)?;
            let x = gather(state.amplitudes(), &split);
            Ok((node.id, singular_values(&x)?))
        })
        .collect()
}

/// Fixed-rank HSVD truncation with default options.
pub fn hsvd_truncate(
    state: &StateVector,
    tree: &DimensionTree,
    budget: &RankBudget,
) -> Result<(StateVector, TruncationReport)> {
    hsvd_truncate_with(state, tree, budget, TruncationOptions::default())
}

pub fn hsvd_truncate_with(
    state: &StateVector,
    tree: &DimensionTree,
    budget: &RankBudget,
    options: TruncationOptions,
) -> Result<(StateVector, TruncationReport)> {
    let shape = state.shape();
    tree.check_shape(shape)?;
    let ranks = tree
        .non_root()
        .map(|node| {
            let cap = max_node_rank(shape, node.modes.len());
            Ok((node.id, budget.rank_for(node.id)?.min(cap)))
        })
        .collect::<Result<BTreeMap<_, _>>>()?;

    let per_node_spectra = if options.spectra {
        node_spectra(state, tree)?
    } else {
        BTreeMap::new()
    };
    let per_node_tail = per_node_spectra
        .iter()
        .map(|(&id, sigma)| (id, sigma.iter().skip(ranks[&id]).map(|s| s * s).sum()))
        .collect();

    let mut current = state.clone();
    let mut achieved_ranks = BTreeMap::new();
    for node in tree.non_root() {
        // The root's children are complementary: X^(t̄) = X^(t)ᵀ. Once one
        // side is projected to rank k, projecting the other onto at least k
        // directions is the identity.
        if node.parent == Some(0) {
            let sibling = tree.root().children.iter().find(|&&c| c != node.id).copied();
            if let Some(kept) = sibling.and_then(|s| achieved_ranks.get(&s).copied()) {
                if ranks[&sibling.unwrap()] <= ranks[&node.id] {
                    achieved_ranks.insert(node.id, kept);
                    continue;
                }
            }
        }
        let split = Bipartition::new(shape, &node.modes)?;
        let x = gather(current.amplitudes(), &split);
        let (projected, kept) = project_top(&x, ranks[&node.id])?;
        scatter(&projected, &split, current.amplitudes_mut());
        achieved_ranks.insert(node.id, kept);
    }

    if options.renormalize {
        let out_norm = current.norm();
        if out_norm > 0.0 {
            current = current.scaled(C64::new(state.norm() / out_norm, 0.0));
        }
    }
    let residual = distance(state, &current)?;
    Ok((
        current,
        TruncationReport {
            residual,
            per_node_spectra,
            per_node_tail,
            achieved_ranks,
        },
    ))
}

/// Projects `x` onto its dominant rank-`rank` left singular subspace,
/// working on whichever Gram matrix is smaller. Returns the projection and
/// the number of kept directions carrying nonzero weight.
fn project_top(x: &CMatrix, rank: usize) -> Result<(CMatrix, usize)> {
    let (rows, cols) = x.shape();
    let rank = rank.min(rows).min(cols);
    let (values, projected) = if rows <= cols {
        let (values, u) = eigh(&gram_rows(x))?;
        if rank == rows {
            return Ok((x.clone(), count_nonzero(&values, rank)));
        }
        let uk = u.subcols(0, rank);
        let coeffs = uk.adjoint() * x;
        (values, uk * coeffs)
    } else {
        let (values, v) = eigh(&gram_cols(x))?;
        if rank == cols {
            return Ok((x.clone(), count_nonzero(&values, rank)));
        }
        let vk = v.subcols(0, rank);
        let coeffs = x * vk;
        (values, coeffs * vk.adjoint())
    };
    Ok((projected, count_nonzero(&values, rank)))
}

fn count_nonzero(gram_values: &[f64], rank: usize) -> usize {
    let top = gram_values.first().copied().unwrap_or(0.0).max(0.0);
    gram_values
        .iter()
        .take(rank)
        .filter(|&&v| v > 1e-24 * top && v > 0.0)
        .count()
}

/// `‖original − truncated‖`.
pub fn truncation_residual(original: &StateVector, truncated: &StateVector) -> Result<f64> {
    distance(original, truncated)
}
