//! Lossless verification of drafted candidates against the target model.
//!
//! Both verifiers implement rejection rules with the same guarantee: the
//! emitted tokens (accepted prefix, plus one correction token when a depth
//! rejects every candidate) are distributed exactly as if the target model
//! had been sampled token by token. Chain verification is the classic
//! single-candidate rule:
//!
//! 1. accept candidate `x` with probability `min(1, p(x) / q(x))`;
//! 2. on rejection, resample from the normalized residual
//!    `max(p - q, 0)` and stop the round.
//!
//! Tree verification generalizes it to sibling groups drawn without
//! replacement: after each rejection the target distribution is replaced by
//! its normalized residual and the rejected candidate's mass is struck from
//! the draft distribution before judging the next sibling; if a whole group
//! is rejected, the correction token is drawn from the final residual. For a
//! chain-shaped draft the two code paths perform identical floating-point
//! operations, so their outcomes agree bit for bit.

use crate::error::{Error, Result};
use crate::lm::{sample_index_from_masses, Distribution, Model, RngStream, TokenId};
use crate::sampling::draft::DraftResult;

/// Result of verifying one drafted round.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VerifyOutcome {
    /// Accepted candidate tokens, outermost depth first.
    pub accepted: Vec<TokenId>,
    /// Correction token resampled at the first fully-rejected depth.
    /// Present exactly when the round stopped short of the full draft depth.
    pub correction: Option<TokenId>,
}

impl VerifyOutcome {
    pub fn accepted_count(&self) -> usize {
        self.accepted.len()
    }

    /// Whether the round stopped at a rejection.
    pub fn was_rejected(&self) -> bool {
        self.correction.is_some()
    }

    /// Number of tokens the round emits (accepted plus correction).
    pub fn emitted_count(&self) -> usize {
        self.accepted.len() + usize::from(self.correction.is_some())
    }

    /// All tokens the round emits, in order.
    pub fn emitted(&self) -> Vec<TokenId> {
        let mut out = self.accepted.clone();
        out.extend(self.correction);
        out
    }

    /// Checks the structural contract against the draft depth `k`: a
    /// correction is present iff fewer than `k` tokens were accepted, and at
    /// least one token is always emitted.
    pub fn check_contract(&self, k: usize) -> Result<()> {
        if self.accepted.len() > k {
            return Err(Error::InvalidConfig(format!(
                "verify outcome accepted {} tokens from a depth-{k} draft",
                self.accepted.len()
            )));
        }
        let short = self.accepted.len() < k;
        if short != self.correction.is_some() {
            return Err(Error::InvalidConfig(format!(
                "verify outcome with {} of {k} accepted must carry a correction iff short, \
                 correction present: {}",
                self.accepted.len(),
                self.correction.is_some()
            )));
        }
        if self.emitted_count() == 0 {
            return Err(Error::InvalidConfig(
                "verify outcome emitted no tokens".into(),
            ));
        }
        Ok(())
    }
}

/// `max(p - q, 0)` renormalized, or `None` when the residual has no mass
/// (which mathematically only happens when `p == q`, where rejection is
/// impossible; callers treat `None` as a defensive fallback to `p`).
fn normalized_residual(p: &[f64], q: &[f64]) -> Option<Vec<f64>> {
    let mut residual: Vec<f64> = p
        .iter()
        .zip(q)
        .map(|(&pi, &qi)| (pi - qi).max(0.0))
        .collect();
    let total: f64 = residual.iter().sum();
    if total <= 0.0 {
        return None;
    }
    for r in &mut residual {
        *r /= total;
    }
    Some(residual)
}

/// Draws the correction token for a fully-rejected depth from the residual
/// target mass (falling back to the target itself if the residual vanished).
fn sample_correction(residual: Option<Vec<f64>>, target: &[f64], u: f64) -> Result<TokenId> {
    let masses = residual.unwrap_or_else(|| target.to_vec());
    sample_index_from_masses(&masses, u)
        .map(|i| TokenId(i as u32))
        .ok_or(Error::DegenerateDistribution)
}

/// Verifies a chain draft (one candidate per depth) against the target.
///
/// Accepts a prefix of the drafted tokens; on the first rejection, emits a
/// correction token resampled from the residual and stops. Consumes one
/// uniform per candidate judged plus one for the correction, if any.
pub fn verify_chain(
    target: &Model,
    prefix: &[TokenId],
    draft: &DraftResult,
    rng: &mut RngStream,
) -> Result<VerifyOutcome> {
    if !draft.is_chain() {
        return Err(Error::InvalidConfig(
            "verify_chain requires a chain draft; use verify_tree for branching drafts".into(),
        ));
    }
    let tree = draft.tree();
    let mut context = prefix.to_vec();
    let mut accepted = Vec::with_capacity(tree.len());
    for index in 0..tree.len() {
        let node = tree.node(index);
        if node.draft_prob <= 0.0 {
            return Err(Error::ZeroDraftProbability {
                token: node.token.0,
            });
        }
        let p = target.next_distribution(&context)?;
        let q = draft.dist_for(index);
        let ratio = p.prob(node.token) / node.draft_prob;
        let u = rng.next_f64();
        if u < ratio.min(1.0) {
            accepted.push(node.token);
            context.push(node.token);
        } else {
            let residual = normalized_residual(p.probs(), q.probs());
            let correction = sample_correction(residual, p.probs(), rng.next_f64())?;
            return Ok(VerifyOutcome {
                accepted,
                correction: Some(correction),
            });
        }
    }
    Ok(VerifyOutcome {
        accepted,
        correction: None,
    })
}

/// Verifies a branching draft against the target in one batched pass.
///
/// Every node's target distribution is computed up front from its mask row
/// (the batched, masked forward pass). The walk then judges one sibling
/// group per depth in drafted order: accept a sibling with probability
/// `min(1, p_cur(x) / q_cur(x))`; on rejection, update `p_cur` to its
/// normalized residual and strike `x` from `q_cur` before the next sibling.
/// A fully-rejected group emits a correction from the final residual.
pub fn verify_tree(
    target: &Model,
    prefix: &[TokenId],
    draft: &DraftResult,
    rng: &mut RngStream,
) -> Result<VerifyOutcome> {
    let tree = draft.tree();
    // Batched masked pass: one target distribution per flattened node, each
    // conditioned on the path its mask row selects.
    let mut node_dists: Vec<Distribution> = Vec::with_capacity(tree.len());
    for index in 0..tree.len() {
        let mut context = prefix.to_vec();
        context.extend(tree.path_tokens(index));
        // The node's own token is part of its path: drop it, the
        // distribution conditions on everything *before* the node.
        context.pop();
        node_dists.push(target.next_distribution(&context)?);
    }

    let mut accepted = Vec::with_capacity(tree.depth());
    let mut parent: Option<usize> = None;
    loop {
        let group = tree.children(parent);
        if group.is_empty() {
            // Walked past the deepest drafted depth: the full path held up.
            return Ok(VerifyOutcome {
                accepted,
                correction: None,
            });
        }
        // Siblings share their conditioning context, so any group member's
        // batched distribution is the group's target distribution.
        let p_dist = &node_dists[group[0]];
        let mut p_cur = p_dist.probs().to_vec();
        let mut q_cur = draft.dist_for(group[0]).probs().to_vec();
        let mut advanced = None;
        for &child in &group {
            let node = tree.node(child);
            if node.draft_prob <= 0.0 {
                return Err(Error::ZeroDraftProbability {
                    token: node.token.0,
                });
            }
            let x = node.token.index();
            let (px, qx) = (p_cur[x], q_cur[x]);
            let ratio = if qx > 0.0 {
                px / qx
            } else if px > 0.0 {
                f64::INFINITY
            } else {
                0.0
            };
            let u = rng.next_f64();
            if u < ratio.min(1.0) {
                advanced = Some(child);
                break;
            }
            // Rejected: fold the residual into the running target, then
            // strike this candidate's mass from the running draft.
            if let Some(residual) = normalized_residual(&p_cur, &q_cur) {
                p_cur = residual;
            }
            q_cur[x] = 0.0;
            let q_total: f64 = q_cur.iter().sum();
            if q_total > 0.0 {
                for w in &mut q_cur {
                    *w /= q_total;
                }
            }
        }
        match advanced {
            Some(child) => {
                accepted.push(tree.node(child).token);
                parent = Some(child);
            }
            None => {
                let correction = sample_correction(Some(p_cur), p_dist.probs(), rng.next_f64())?;
                return Ok(VerifyOutcome {
                    accepted,
                    correction: Some(correction),
                });
            }
        }
    }
}

/// The per-token expected acceptance rate of speculative verification:
/// `sum over tokens of min(p(x), q(x))`.
pub fn expected_alpha(target: &Distribution, draft: &Distribution) -> Result<f64> {
    if target.len() != draft.len() {
        return Err(Error::VocabMismatch {
            left: target.len(),
            right: draft.len(),
        });
    }
    Ok(target
        .probs()
        .iter()
        .zip(draft.probs())
        .map(|(&p, &q)| p.min(q))
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lm::{Phase, StreamId};
    use crate::sampling::draft::draft;
    use crate::sampling::kconfig::KConfig;

    fn draft_stream(seed: u64) -> RngStream {
        RngStream::new(seed, StreamId::new(0, Phase::Draft))
    }

    fn verify_stream(seed: u64) -> RngStream {
        RngStream::new(seed, StreamId::new(0, Phase::Verify))
    }

    #[test]
    fn identical_models_accept_everything() {
        let m = Model::lookup_random(6, 4, 1.0).unwrap();
        for seed in 0..100 {
            let d = draft(&m, &[], &KConfig::chain(4).unwrap(), &mut draft_stream(seed)).unwrap();
            let out = verify_chain(&m, &[], &d, &mut verify_stream(seed)).unwrap();
            assert_eq!(out.accepted_count(), 4);
            assert!(out.correction.is_none());
            out.check_contract(4).unwrap();
            let drafted: Vec<TokenId> = d.tree().nodes().iter().map(|n| n.token).collect();
            assert_eq!(out.accepted, drafted);
        }
    }

    #[test]
    fn disjoint_point_masses_always_reject_with_target_correction() {
        let target = Model::lookup_shared(vec![1.0, 0.0], 1.0).unwrap();
        let drafter = Model::lookup_shared(vec![0.0, 1.0], 1.0).unwrap();
        for seed in 0..50 {
            let d = draft(
                &drafter,
                &[],
                &KConfig::chain(3).unwrap(),
                &mut draft_stream(seed),
            )
            .unwrap();
            let out = verify_chain(&target, &[], &d, &mut verify_stream(seed)).unwrap();
            assert_eq!(out.accepted_count(), 0);
            assert_eq!(out.correction, Some(TokenId(0)));
            out.check_contract(3).unwrap();
        }
    }

    #[test]
    fn outcome_contract_holds_over_random_rounds() {
        let target = Model::lookup_random(6, 21, 1.0).unwrap();
        let drafter = Model::lookup_random(6, 22, 1.0).unwrap();
        let k = KConfig::chain(4).unwrap();
        for seed in 0..300 {
            let d = draft(&drafter, &[], &k, &mut draft_stream(seed)).unwrap();
            let out = verify_chain(&target, &[], &d, &mut verify_stream(seed)).unwrap();
            out.check_contract(4).unwrap();
            // Emitted length is always in [1, k].
            assert!((1..=4).contains(&out.emitted_count()));
        }
    }

    #[test]
    fn tree_outcome_contract_holds_over_random_rounds() {
        let target = Model::lookup_random(6, 31, 1.0).unwrap();
        let drafter = Model::lookup_random(6, 32, 1.0).unwrap();
        let k = KConfig::new(vec![2, 2, 1]).unwrap();
        for seed in 0..300 {
            let d = draft(&drafter, &[], &k, &mut draft_stream(seed)).unwrap();
            let out = verify_tree(&target, &[], &d, &mut verify_stream(seed)).unwrap();
            out.check_contract(3).unwrap();
            assert!((1..=3).contains(&out.emitted_count()));
        }
    }

    #[test]
    fn chain_shaped_tree_verifies_bit_for_bit_like_chain() {
        let target = Model::lookup_random(8, 41, 1.0).unwrap();
        let drafter = Model::lookup_random(8, 42, 1.0).unwrap();
        let k = KConfig::chain(4).unwrap();
        for seed in 0..500 {
            let d = draft(&drafter, &[TokenId(3)], &k, &mut draft_stream(seed)).unwrap();
            let chain = verify_chain(&target, &[TokenId(3)], &d, &mut verify_stream(seed)).unwrap();
            let tree = verify_tree(&target, &[TokenId(3)], &d, &mut verify_stream(seed)).unwrap();
            assert_eq!(chain, tree, "seed {seed}");
        }
    }

    #[test]
    fn verify_chain_rejects_branching_drafts() {
        let m = Model::lookup_random(6, 4, 1.0).unwrap();
        let d = draft(
            &m,
            &[],
            &KConfig::new(vec![2, 1]).unwrap(),
            &mut draft_stream(0),
        )
        .unwrap();
        assert!(verify_chain(&m, &[], &d, &mut verify_stream(0)).is_err());
    }

    #[test]
    fn expected_alpha_basics() {
        let p = Distribution::new(vec![0.6, 0.4]).unwrap();
        let q = Distribution::new(vec![0.3, 0.7]).unwrap();
        assert!((expected_alpha(&p, &q).unwrap() - 0.7).abs() < 1e-12);
        assert_eq!(expected_alpha(&p, &p).unwrap(), 1.0);
        let r = Distribution::new(vec![1.0, 0.0, 0.0]).unwrap();
        assert!(expected_alpha(&p, &r).is_err());
        // Disjoint supports: nothing can be accepted.
        let a = Distribution::new(vec![1.0, 0.0]).unwrap();
        let b = Distribution::new(vec![0.0, 1.0]).unwrap();
        assert_eq!(expected_alpha(&a, &b).unwrap(), 0.0);
    }

    #[test]
    fn verify_draw_budget_is_candidates_judged_plus_correction() {
        let target = Model::lookup_random(6, 51, 1.0).unwrap();
        let drafter = Model::lookup_random(6, 52, 1.0).unwrap();
        let k = KConfig::chain(4).unwrap();
        for seed in 0..100 {
            let d = draft(&drafter, &[], &k, &mut draft_stream(seed)).unwrap();
            let mut rng = verify_stream(seed);
            let out = verify_chain(&target, &[], &d, &mut rng).unwrap();
            let judged = if out.was_rejected() {
                out.accepted_count() as u64 + 1
            } else {
                out.accepted_count() as u64
            };
            let correction_draws = u64::from(out.was_rejected());
            assert_eq!(rng.draws(), judged + correction_draws);
        }
    }
}
