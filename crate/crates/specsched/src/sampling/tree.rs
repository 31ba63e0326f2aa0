//! Candidate trees and their attention masks.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::lm::TokenId;

/// One drafted candidate token.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CandidateNode {
    /// The drafted token.
    pub token: TokenId,
    /// Index of the parent candidate within the tree, or `None` for a
    /// first-depth candidate (child of the committed context).
    pub parent: Option<usize>,
    /// Depth within the draft, starting at 1 for first-depth candidates.
    pub depth: usize,
    /// The draft model's probability of this token under its parent context
    /// (before any sibling was struck out).
    pub draft_prob: f64,
    /// Index of the conditioning distribution this node was sampled from,
    /// shared by all its siblings.
    pub dist_index: usize,
}

/// A tree of drafted candidate tokens in breadth-first order, together with
/// the boolean attention mask that flattens it into a single batch.
///
/// Row `r` of the mask has `true` exactly at `r` itself and at `r`'s
/// ancestors, so a masked batched pass over the flattened nodes scores every
/// root-to-node path at once. Paths handed to the target model during
/// verification are reconstructed *from the mask rows*, which keeps the mask
/// itself under test everywhere verification is tested.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CandidateTree {
    nodes: Vec<CandidateNode>,
    mask: Vec<Vec<bool>>,
}

impl CandidateTree {
    /// Builds a tree from breadth-first nodes, deriving the attention mask.
    /// Each node's parent must precede it; depths must be consistent.
    pub fn from_nodes(nodes: Vec<CandidateNode>) -> Result<Self> {
        let n = nodes.len();
        if n == 0 {
            return Err(Error::InvalidConfig("candidate tree has no nodes".into()));
        }
        let mut mask: Vec<Vec<bool>> = Vec::with_capacity(n);
        for (i, node) in nodes.iter().enumerate() {
            let mut row = match node.parent {
                Some(p) => {
                    if p >= i {
                        return Err(Error::InvalidConfig(format!(
                            "node {i} lists parent {p}, which does not precede it"
                        )));
                    }
                    if nodes[p].depth + 1 != node.depth {
                        return Err(Error::InvalidConfig(format!(
                            "node {i} at depth {} under parent at depth {}",
                            node.depth, nodes[p].depth
                        )));
                    }
                    mask[p].clone()
                }
                None => {
                    if node.depth != 1 {
                        return Err(Error::InvalidConfig(format!(
                            "parentless node {i} must have depth 1, got {}",
                            node.depth
                        )));
                    }
                    vec![false; n]
                }
            };
            row[i] = true;
            mask.push(row);
        }
        Ok(CandidateTree { nodes, mask })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[CandidateNode] {
        &self.nodes
    }

    pub fn node(&self, index: usize) -> &CandidateNode {
        &self.nodes[index]
    }

    /// The full attention mask; `mask()[r][c]` is `true` iff `c` is `r` or an
    /// ancestor of `r`.
    pub fn mask(&self) -> &[Vec<bool>] {
        &self.mask
    }

    /// Maximum depth present in the tree.
    pub fn depth(&self) -> usize {
        self.nodes.iter().map(|n| n.depth).max().unwrap_or(0)
    }

    /// Tokens along the path from the first depth down to `index`,
    /// inclusive, reconstructed from the mask row. Breadth-first node order
    /// puts ancestors at increasing indices in increasing depth order, so the
    /// row can be read left to right.
    pub fn path_tokens(&self, index: usize) -> Vec<TokenId> {
        self.mask[index]
            .iter()
            .enumerate()
            .filter(|&(_, &m)| m)
            .map(|(c, _)| self.nodes[c].token)
            .collect()
    }

    /// Children of `parent` (or the first-depth candidates for `None`), in
    /// the order they were drafted.
    pub fn children(&self, parent: Option<usize>) -> Vec<usize> {
        self.nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| n.parent == parent)
            .map(|(i, _)| i)
            .collect()
    }
}
