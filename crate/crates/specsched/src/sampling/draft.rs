//! Candidate drafting from the draft model.

use crate::error::{Error, Result};
use crate::lm::{sample_index_from_masses, Distribution, Model, RngStream, TokenId};
use crate::sampling::kconfig::KConfig;
use crate::sampling::tree::{CandidateNode, CandidateTree};

/// A drafted candidate tree plus the conditioning distributions the verifier
/// needs to re-judge it.
#[derive(Debug, Clone)]
pub struct DraftResult {
    tree: CandidateTree,
    /// One draft distribution per expanded position; `CandidateNode::dist_index`
    /// points into this list.
    dists: Vec<Distribution>,
    /// Number of sibling groups whose fan-out was clamped to the draft
    /// distribution's support size.
    shrunk_groups: u32,
}

impl DraftResult {
    pub fn tree(&self) -> &CandidateTree {
        &self.tree
    }

    /// The draft distribution node `index` was sampled from.
    pub fn dist_for(&self, index: usize) -> &Distribution {
        &self.dists[self.tree.node(index).dist_index]
    }

    /// All conditioning distributions, in expansion order.
    pub fn dists(&self) -> &[Distribution] {
        &self.dists
    }

    /// Number of draft-model forward passes the draft consumed.
    pub fn expansions(&self) -> usize {
        self.dists.len()
    }

    /// Whether the draft is a plain chain (one candidate per depth).
    pub fn is_chain(&self) -> bool {
        self.tree.len() == self.tree.depth()
    }

    /// How many sibling groups had their fan-out clamped because the draft
    /// distribution's support was smaller than requested.
    pub fn shrunk_groups(&self) -> u32 {
        self.shrunk_groups
    }
}

/// Drafts a candidate tree below `prefix` with per-depth fan-outs from
/// `kconfig`, sampling siblings without replacement.
///
/// Consumes exactly one uniform draw per drafted node. When a draft
/// distribution's support is smaller than the requested fan-out, the sibling
/// group shrinks to the support size (never to zero: a distribution always
/// has at least one positive entry).
pub fn draft(
    model: &Model,
    prefix: &[TokenId],
    kconfig: &KConfig,
    rng: &mut RngStream,
) -> Result<DraftResult> {
    let counts = kconfig.counts();
    let mut nodes: Vec<CandidateNode> = Vec::with_capacity(kconfig.node_budget());
    let mut dists: Vec<Distribution> = Vec::new();
    let mut shrunk_groups = 0u32;
    // Parents to expand at the current depth: `None` is the committed prefix.
    let mut frontier: Vec<Option<usize>> = vec![None];
    for (depth_idx, &want) in counts.iter().enumerate() {
        let depth = depth_idx + 1;
        let mut next_frontier = Vec::with_capacity(frontier.len() * want);
        for &parent in &frontier {
            let mut context = prefix.to_vec();
            if let Some(p) = parent {
                context.extend(path_so_far(&nodes, p));
            }
            let dist = model.next_distribution(&context)?;
            let dist_index = dists.len();
            let take = want.min(dist.support_size());
            if take < want {
                shrunk_groups += 1;
            }
            // Sample `take` distinct tokens: strike each drawn token's mass
            // and redraw from what remains.
            let mut remaining = dist.probs().to_vec();
            for _ in 0..take {
                let u = rng.next_f64();
                let pick = sample_index_from_masses(&remaining, u)
                    .ok_or(Error::DegenerateDistribution)?;
                remaining[pick] = 0.0;
                let token = TokenId(pick as u32);
                nodes.push(CandidateNode {
                    token,
                    parent,
                    depth,
                    draft_prob: dist.prob(token),
                    dist_index,
                });
                next_frontier.push(Some(nodes.len() - 1));
            }
            dists.push(dist);
        }
        frontier = next_frontier;
    }
    Ok(DraftResult {
        tree: CandidateTree::from_nodes(nodes)?,
        dists,
        shrunk_groups,
    })
}

/// Root-to-node tokens by walking parents; used during construction, before
/// the finished tree (and its mask) exists.
fn path_so_far(nodes: &[CandidateNode], index: usize) -> Vec<TokenId> {
    let mut rev = Vec::new();
    let mut cur = Some(index);
    while let Some(i) = cur {
        rev.push(nodes[i].token);
        cur = nodes[i].parent;
    }
    rev.reverse();
    rev
}
