//! Shared oracle machinery for integration tests.
//!
//! The oracles here re-derive expected behavior from first principles —
//! exhaustive enumeration of draft/verify outcomes, direct autoregressive
//! products, brute-force subset search — and never call into the sampling
//! code paths they are used to judge.

#![allow(dead_code)]

use std::collections::HashMap;

use specsched::lm::{Model, TokenId};
use specsched::sampling::KConfig;

/// Exact distribution over length-`len` token sequences sampled directly
/// from the target model, token by token: the reference every lossless
/// sampler must match.
pub fn ar_sequence_distribution(
    target: &Model,
    prefix: &[TokenId],
    len: usize,
) -> HashMap<Vec<u32>, f64> {
    let mut out = HashMap::new();
    let mut stack: Vec<(Vec<u32>, f64)> = vec![(Vec::new(), 1.0)];
    while let Some((seq, weight)) = stack.pop() {
        if seq.len() == len {
            *out.entry(seq).or_insert(0.0) += weight;
            continue;
        }
        let mut context = prefix.to_vec();
        context.extend(seq.iter().map(|&t| TokenId(t)));
        let dist = target.next_distribution(&context).unwrap();
        for (token, &p) in dist.probs().iter().enumerate() {
            if p > 0.0 {
                let mut next = seq.clone();
                next.push(token as u32);
                stack.push((next, weight * p));
            }
        }
    }
    out
}

/// Exact distribution over the token sequences a single chain
/// draft-and-verify round emits below `prefix`, derived by enumerating every
/// draft path and every accept/reject/correct outcome of the rejection rule:
/// accept candidate `x` with probability `min(1, p(x)/q(x))`; on rejection
/// emit a token from the normalized residual `max(p - q, 0)` and stop.
pub fn exact_chain_round_kernel(
    target: &Model,
    drafter: &Model,
    prefix: &[TokenId],
    k: usize,
) -> HashMap<Vec<u32>, f64> {
    let mut out = HashMap::new();
    chain_kernel_rec(target, drafter, prefix.to_vec(), k, Vec::new(), 1.0, &mut out);
    out
}

fn chain_kernel_rec(
    target: &Model,
    drafter: &Model,
    context: Vec<TokenId>,
    depth_left: usize,
    emitted: Vec<u32>,
    weight: f64,
    out: &mut HashMap<Vec<u32>, f64>,
) {
    if depth_left == 0 {
        *out.entry(emitted).or_insert(0.0) += weight;
        return;
    }
    let p = target.next_distribution(&context).unwrap();
    let q = drafter.next_distribution(&context).unwrap();
    let residual = residual_distribution(p.probs(), q.probs());
    for (x, &qx) in q.probs().iter().enumerate() {
        if qx <= 0.0 {
            continue;
        }
        let px = p.probs()[x];
        let accept = (px / qx).min(1.0);
        if accept > 0.0 {
            let mut next_ctx = context.clone();
            next_ctx.push(TokenId(x as u32));
            let mut next_emitted = emitted.clone();
            next_emitted.push(x as u32);
            chain_kernel_rec(
                target,
                drafter,
                next_ctx,
                depth_left - 1,
                next_emitted,
                weight * qx * accept,
                out,
            );
        }
        let reject = qx * (1.0 - accept);
        if reject > 0.0 {
            for (c, &rc) in residual.iter().enumerate() {
                if rc > 0.0 {
                    let mut seq = emitted.clone();
                    seq.push(c as u32);
                    *out.entry(seq).or_insert(0.0) += weight * reject * rc;
                }
            }
        }
    }
}

fn residual_distribution(p: &[f64], q: &[f64]) -> Vec<f64> {
    let mut r: Vec<f64> = p
        .iter()
        .zip(q)
        .map(|(&pi, &qi)| (pi - qi).max(0.0))
        .collect();
    let total: f64 = r.iter().sum();
    if total <= 0.0 {
        // Residual vanishes only when p == q, where rejection has
        // probability zero; the value returned here is never weighted in.
        return p.to_vec();
    }
    for v in &mut r {
        *v /= total;
    }
    r
}

/// Exact emission distribution of a single *tree* draft-and-verify round.
///
/// Enumerates every ordered without-replacement draft tree the fan-out
/// config can produce, then walks the sibling-group rejection rule over each
/// tree exactly: judge siblings in drafted order, accepting with probability
/// `min(1, p_cur(x)/q_cur(x))`; on rejection replace `p_cur` by its
/// normalized residual against `q_cur` and strike `x` from `q_cur`; a fully
/// rejected group emits a correction from the final `p_cur`.
pub fn exact_tree_round_kernel(
    target: &Model,
    drafter: &Model,
    prefix: &[TokenId],
    kconfig: &KConfig,
) -> HashMap<Vec<u32>, f64> {
    let mut out = HashMap::new();
    tree_kernel_rec(
        target,
        drafter,
        prefix.to_vec(),
        kconfig.counts(),
        Vec::new(),
        1.0,
        &mut out,
    );
    out
}

/// Recursion over depths: at each depth enumerate the ordered sibling draws
/// for the *current* group, fold in the verify walk, and recurse below the
/// accepted sibling. Sibling groups in pruned branches are never walked, so
/// their draws marginalize out and can be skipped entirely.
fn tree_kernel_rec(
    target: &Model,
    drafter: &Model,
    context: Vec<TokenId>,
    counts: &[usize],
    emitted: Vec<u32>,
    weight: f64,
    out: &mut HashMap<Vec<u32>, f64>,
) {
    let Some((&fanout, rest)) = counts.split_first() else {
        *out.entry(emitted).or_insert(0.0) += weight;
        return;
    };
    let p = target.next_distribution(&context).unwrap();
    let q = drafter.next_distribution(&context).unwrap();
    let group_size = fanout.min(q.support_size());
    // Enumerate ordered sibling tuples drawn without replacement from q.
    let mut tuples: Vec<(Vec<usize>, f64)> = Vec::new();
    ordered_draws(q.probs(), group_size, &mut Vec::new(), 1.0, &mut tuples);
    for (group, draw_prob) in tuples {
        // Walk the recursive rejection rule over this ordered group.
        let mut p_cur = p.probs().to_vec();
        let mut q_cur = q.probs().to_vec();
        let mut survive = 1.0;
        for &x in &group {
            let (px, qx) = (p_cur[x], q_cur[x]);
            let accept = if qx > 0.0 {
                (px / qx).min(1.0)
            } else if px > 0.0 {
                1.0
            } else {
                0.0
            };
            if accept > 0.0 {
                let mut next_ctx = context.clone();
                next_ctx.push(TokenId(x as u32));
                let mut next_emitted = emitted.clone();
                next_emitted.push(x as u32);
                tree_kernel_rec(
                    target,
                    drafter,
                    next_ctx,
                    rest,
                    next_emitted,
                    weight * draw_prob * survive * accept,
                    out,
                );
            }
            survive *= 1.0 - accept;
            if survive <= 0.0 {
                break;
            }
            p_cur = residual_distribution(&p_cur, &q_cur);
            q_cur[x] = 0.0;
            let q_total: f64 = q_cur.iter().sum();
            if q_total > 0.0 {
                for w in &mut q_cur {
                    *w /= q_total;
                }
            }
        }
        if survive > 0.0 {
            // Whole group rejected: correction from the final residual.
            for (c, &rc) in p_cur.iter().enumerate() {
                if rc > 0.0 {
                    let mut seq = emitted.clone();
                    seq.push(c as u32);
                    *out.entry(seq).or_insert(0.0) += weight * draw_prob * survive * rc;
                }
            }
        }
    }
}

/// All ordered `size`-tuples of distinct indices drawn without replacement
/// from `masses`, with their draw probabilities.
fn ordered_draws(
    masses: &[f64],
    size: usize,
    chosen: &mut Vec<usize>,
    prob: f64,
    out: &mut Vec<(Vec<usize>, f64)>,
) {
    if size == 0 {
        out.push((chosen.clone(), prob));
        return;
    }
    let total: f64 = masses
        .iter()
        .enumerate()
        .filter(|(i, _)| !chosen.contains(i))
        .map(|(_, &m)| m)
        .sum();
    for (i, &m) in masses.iter().enumerate() {
        if m > 0.0 && !chosen.contains(&i) {
            chosen.push(i);
            ordered_draws(masses, size - 1, chosen, prob * m / total, out);
            chosen.pop();
        }
    }
}

/// Composes a per-round emission kernel into the exact distribution over the
/// first `len` committed tokens, mirroring how a sequence accumulates rounds
/// until its target length and truncates any overshoot.
pub fn compose_rounds_to_length(
    kernel: impl Fn(&[u32]) -> HashMap<Vec<u32>, f64>,
    len: usize,
) -> HashMap<Vec<u32>, f64> {
    let mut done: HashMap<Vec<u32>, f64> = HashMap::new();
    let mut active: HashMap<Vec<u32>, f64> = HashMap::from([(Vec::new(), 1.0)]);
    while !active.is_empty() {
        let mut next: HashMap<Vec<u32>, f64> = HashMap::new();
        for (prefix, weight) in active {
            for (emit, kernel_prob) in kernel(&prefix) {
                let mut seq = prefix.clone();
                seq.extend(emit);
                seq.truncate(len);
                let bucket = if seq.len() >= len { &mut done } else { &mut next };
                *bucket.entry(seq).or_insert(0.0) += weight * kernel_prob;
            }
        }
        active = next;
    }
    done
}

/// Largest absolute probability difference across the union of outcomes.
pub fn max_abs_difference(
    left: &HashMap<Vec<u32>, f64>,
    right: &HashMap<Vec<u32>, f64>,
) -> f64 {
    let mut worst = 0.0f64;
    for (key, &l) in left {
        worst = worst.max((l - right.get(key).copied().unwrap_or(0.0)).abs());
    }
    for (key, &r) in right {
        if !left.contains_key(key) {
            worst = worst.max(r.abs());
        }
    }
    worst
}

/// Total-variation distance between an empirical histogram and exact
/// probabilities over token ids.
pub fn tv_from_counts(counts: &[u64], probs: &[f64]) -> f64 {
    let n: u64 = counts.iter().sum();
    0.5 * counts
        .iter()
        .zip(probs)
        .map(|(&c, &p)| (c as f64 / n as f64 - p).abs())
        .sum::<f64>()
}

/// Deterministic pseudo-random model pairs for randomized suites: a
/// conditional lookup target and a draft of the same vocabulary whose
/// closeness to the target varies with the salt.
pub fn random_model_pair(vocab: usize, salt: u64) -> specsched::lm::ModelPair {
    use std::sync::Arc;
    let target = Arc::new(Model::lookup_random(vocab, salt.wrapping_mul(2654435761).wrapping_add(1), 1.0).unwrap());
    let mix = 0.05 + 0.9 * ((salt % 19) as f64 / 19.0);
    let draft = if salt % 3 == 0 {
        // An unrelated random table: low acceptance.
        Arc::new(Model::lookup_random(vocab, salt.wrapping_mul(40503).wrapping_add(7), 1.0).unwrap())
    } else {
        // Smoothed around the target: acceptance controlled by `mix`.
        Arc::new(Model::smoothed_uniform(Arc::clone(&target), mix, 1.0).unwrap())
    };
    specsched::lm::ModelPair::new(target, draft).unwrap()
}
