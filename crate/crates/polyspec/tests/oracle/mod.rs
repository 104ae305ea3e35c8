//! Independent enumeration oracle for losslessness checks.
//!
//! Everything here is recomputed from first principles: acceptance
//! ratios, leftover distributions, event branching, queue composition,
//! and renewal structure. Nothing calls into the crate's verify or
//! engine code, so agreement between these laws and the engine's
//! design is a real cross-check rather than a tautology.
//!
//! The construction is deliberately brute force: the full joint law
//! over emitted token sequences is enumerated path by path (drafted
//! prefix, rejection point, correction or bonus draw), then positional
//! marginals fall out of the sequence law. Fixture sizes keep the path
//! count tiny.

use std::collections::BTreeMap;

/// `min(1, v/q)` per token. `q` must have full support.
fn accept_probs(v: &[f64], q: &[f64]) -> Vec<f64> {
    v.iter().zip(q).map(|(&v, &q)| (v / q).min(1.0)).collect()
}

/// Normalized `max(0, v-q)`, or `None` when rejection is impossible.
fn leftover(v: &[f64], q: &[f64]) -> Option<Vec<f64>> {
    let raw: Vec<f64> = v.iter().zip(q).map(|(&v, &q)| (v - q).max(0.0)).collect();
    let total: f64 = raw.iter().sum();
    if total <= 0.0 {
        return None;
    }
    Some(raw.iter().map(|&r| r / total).collect())
}

fn add(law: &mut BTreeMap<Vec<usize>, f64>, seq: Vec<usize>, prob: f64) {
    if prob > 0.0 {
        *law.entry(seq).or_insert(0.0) += prob;
    }
}

/// Joint law of the output of one two-model verification event:
/// `k` tokens drafted from `q`, each accepted with probability
/// `min(1, v/q)`; the first rejection is replaced by a leftover draw
/// and ends the event; full acceptance appends a bonus draw from `v`.
pub fn pair_event_law(v: &[f64], q: &[f64], k: usize) -> Vec<(Vec<usize>, f64)> {
    let vocab = v.len();
    assert_eq!(q.len(), vocab);
    let accept = accept_probs(v, q);
    let res = leftover(v, q);
    let mut law: BTreeMap<Vec<usize>, f64> = BTreeMap::new();
    let mut frontier: Vec<(Vec<usize>, f64)> = vec![(Vec::new(), 1.0)];
    for _ in 0..k {
        let mut next = Vec::new();
        for (prefix, prob) in frontier {
            for t in 0..vocab {
                let drafted = prob * q[t];
                let accepted = drafted * accept[t];
                if accepted > 0.0 {
                    let mut longer = prefix.clone();
                    longer.push(t);
                    next.push((longer, accepted));
                }
                let rejected = drafted * (1.0 - accept[t]);
                if rejected > 0.0 {
                    let res = res.as_ref().expect("rejection implies leftover mass");
                    for (r, &rp) in res.iter().enumerate() {
                        let mut seq = prefix.clone();
                        seq.push(r);
                        add(&mut law, seq, rejected * rp);
                    }
                }
            }
        }
        frontier = next;
    }
    for (prefix, prob) in frontier {
        for (b, &bp) in v.iter().enumerate() {
            let mut seq = prefix.clone();
            seq.push(b);
            add(&mut law, seq, prob * bp);
        }
    }
    law.into_iter().collect()
}

/// Joint law of the output of one three-model top event: two-model
/// events between the middle and bottom models feed a queue until it
/// holds at least `mu` tokens, then the top model verifies the whole
/// queue. Every queued token was produced by the middle model, so the
/// top-stage acceptance ratio and leftover law are built against the
/// middle model's (memoryless) distribution.
pub fn triple_event_law(
    v_top: &[f64],
    v_mid: &[f64],
    v_low: &[f64],
    k: usize,
    mu: usize,
) -> Vec<(Vec<usize>, f64)> {
    assert_eq!(v_mid.len(), v_top.len());
    assert_eq!(v_low.len(), v_top.len());
    let cycle = pair_event_law(v_mid, v_low, k);

    let mut queues: BTreeMap<Vec<usize>, f64> = BTreeMap::new();
    let mut frontier: Vec<(Vec<usize>, f64)> = vec![(Vec::new(), 1.0)];
    while let Some((queue, prob)) = frontier.pop() {
        for (output, op) in &cycle {
            let mut grown = queue.clone();
            grown.extend_from_slice(output);
            let gp = prob * op;
            if grown.len() >= mu {
                add(&mut queues, grown, gp);
            } else {
                frontier.push((grown, gp));
            }
        }
    }

    let accept = accept_probs(v_top, v_mid);
    let res = leftover(v_top, v_mid);
    let mut law: BTreeMap<Vec<usize>, f64> = BTreeMap::new();
    for (queue, qp) in queues {
        let mut prefix_prob = qp;
        for (i, &t) in queue.iter().enumerate() {
            let rejected = prefix_prob * (1.0 - accept[t]);
            if rejected > 0.0 {
                let res = res.as_ref().expect("rejection implies leftover mass");
                for (r, &rp) in res.iter().enumerate() {
                    let mut seq = queue[..i].to_vec();
                    seq.push(r);
                    add(&mut law, seq, rejected * rp);
                }
            }
            prefix_prob *= accept[t];
            if prefix_prob == 0.0 {
                break;
            }
        }
        if prefix_prob > 0.0 {
            for (b, &bp) in v_top.iter().enumerate() {
                let mut seq = queue.clone();
                seq.push(b);
                add(&mut law, seq, prefix_prob * bp);
            }
        }
    }
    law.into_iter().collect()
}

/// Per-position marginals of the emitted stream when events with the
/// given output law renew back to back (state fully resets between
/// events). Position `j` of the result is the distribution of the
/// `j`-th emitted token.
pub fn positional_marginals(
    law: &[(Vec<usize>, f64)],
    vocab: usize,
    positions: usize,
) -> Vec<Vec<f64>> {
    let max_len = law.iter().map(|(s, _)| s.len()).max().expect("nonempty law");
    let mut len_pmf = vec![0.0; max_len];
    let mut slots = vec![vec![0.0; vocab]; max_len];
    for (seq, p) in law {
        len_pmf[seq.len() - 1] += p;
        for (i, &t) in seq.iter().enumerate() {
            slots[i][t] += p;
        }
    }
    let total: f64 = len_pmf.iter().sum();
    assert!(
        (total - 1.0).abs() < 1e-9,
        "event law mass {total} is not 1"
    );

    let mut reach = vec![0.0; positions.max(1)];
    reach[0] = 1.0;
    for s in 1..positions {
        for (idx, &p) in len_pmf.iter().enumerate() {
            let l = idx + 1;
            if l <= s {
                reach[s] += p * reach[s - l];
            }
        }
    }
    (0..positions)
        .map(|j| {
            let mut marginal = vec![0.0; vocab];
            for (s, &r) in reach.iter().enumerate().take(j + 1) {
                let i = j - s;
                if i < slots.len() {
                    for (acc, &mass) in marginal.iter_mut().zip(&slots[i]) {
                        *acc += r * mass;
                    }
                }
            }
            marginal
        })
        .collect()
}

/// Total variation distance between two probability vectors.
pub fn tv(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(&a, &b)| (a - b).abs()).sum::<f64>() / 2.0
}

/// Worst per-position total variation against `target` over the first
/// `positions` emitted tokens.
pub fn worst_tv(law: &[(Vec<usize>, f64)], target: &[f64], positions: usize) -> f64 {
    positional_marginals(law, target.len(), positions)
        .iter()
        .map(|m| tv(m, target))
        .fold(0.0, f64::max)
}
