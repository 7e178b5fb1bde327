//! Recovery of the `k` source payloads from a subset of storage nodes.
//!
//! Every node contributes one equation over GF(2): the XOR of the sources it
//! lists equals its buffer. A subset decodes when those equations have full
//! rank `k`; the peeling decoder is the cheaper, weaker alternative used by
//! LT codes in practice.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::protocol::xor_into;
use crate::rng;
use crate::sim::{StorageSnapshot, StoredNode};

/// Decodability test applied to a node subset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    /// Full GF(2) rank.
    Rank,
    /// Peeling recovers every source.
    Peel,
}

impl std::str::FromStr for Criterion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rank" => Ok(Criterion::Rank),
            "peel" => Ok(Criterion::Peel),
            other => Err(Error::invalid(format!("unknown criterion {other:?} (expected rank or peel)"))),
        }
    }
}

fn words_for(k: usize) -> usize {
    k.div_ceil(64).max(1)
}

fn pack(ids: &[usize], k: usize) -> Vec<u64> {
    let mut row = vec![0u64; words_for(k)];
    for &i in ids {
        debug_assert!(i < k);
        row[i / 64] ^= 1 << (i % 64);
    }
    row
}

fn leading_bit(row: &[u64]) -> Option<usize> {
    row.iter().enumerate().rev().find(|(_, w)| **w != 0).map(|(i, w)| i * 64 + 63 - w.leading_zeros() as usize)
}

/// Incremental XOR basis over `k` unknowns, optionally carrying payloads.
#[derive(Debug, Clone)]
pub struct Gf2Basis {
    k: usize,
    /// Row indexed by its leading column.
    pivots: Vec<Option<(Vec<u64>, Vec<u8>)>>,
    rank: usize,
}

impl Gf2Basis {
    pub fn new(k: usize) -> Self {
        Gf2Basis { k, pivots: vec![None; k], rank: 0 }
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    /// Adds an equation; returns whether the rank grew.
    pub fn insert(&mut self, ids: &[usize], payload: &[u8]) -> bool {
        let mut row = pack(ids, self.k);
        let mut rhs = payload.to_vec();
        while let Some(col) = leading_bit(&row) {
            match &self.pivots[col] {
                Some((prow, prhs)) => {
                    row.iter_mut().zip(prow).for_each(|(a, b)| *a ^= b);
                    xor_into(&mut rhs, prhs);
                }
                None => {
                    self.pivots[col] = Some((row, rhs));
                    self.rank += 1;
                    return true;
                }
            }
        }
        false
    }

    /// Source payloads, once the basis has full rank.
    pub fn solve(&self) -> Option<Vec<Vec<u8>>> {
        if self.rank < self.k {
            return None;
        }
        let mut out: Vec<Vec<u8>> = vec![Vec::new(); self.k];
        // Each pivot row only involves columns at or below its pivot.
        for col in 0..self.k {
            let (row, rhs) = self.pivots[col].as_ref()?;
            let mut value = rhs.clone();
            for lower in 0..col {
                if row[lower / 64] >> (lower % 64) & 1 == 1 {
                    xor_into(&mut value, &out[lower]);
                }
            }
            out[col] = value;
        }
        Some(out)
    }
}

/// Rank over GF(2) of the equations listed by `rows`.
pub fn gf2_rank(rows: &[&[usize]], k: usize) -> usize {
    let mut basis = Gf2Basis::new(k);
    for ids in rows {
        basis.insert(ids, &[]);
    }
    basis.rank()
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodeResult {
    /// Recovered payload for each source, if any.
    pub recovered: Vec<Option<Vec<u8>>>,
    /// Sources released in the order the ripple produced them.
    pub order: Vec<usize>,
}

impl DecodeResult {
    pub fn complete(&self) -> bool {
        self.recovered.iter().all(Option::is_some)
    }

    pub fn recovered_count(&self) -> usize {
        self.recovered.iter().filter(|r| r.is_some()).count()
    }
}

/// Belief-propagation (peeling) decoder over the given nodes.
pub fn peel_decode(nodes: &[&StoredNode], k: usize, payload_len: usize) -> Result<DecodeResult> {
    let mut eqs: Vec<(Vec<usize>, Vec<u8>)> = Vec::with_capacity(nodes.len());
    for node in nodes {
        if node.xor_ids.iter().any(|&i| i >= k) {
            return Err(Error::invalid(format!("node {} lists a source outside 0..{k}", node.id)));
        }
        if node.buffer.len() != payload_len {
            return Err(Error::invalid(format!("node {} buffer has the wrong length", node.id)));
        }
        if !node.xor_ids.is_empty() {
            eqs.push((node.xor_ids.clone(), node.buffer.clone()));
        }
    }
    let mut recovered: Vec<Option<Vec<u8>>> = vec![None; k];
    let mut order = Vec::new();
    // Equations that mention each source.
    let mut touching: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (e, (ids, _)) in eqs.iter().enumerate() {
        for &i in ids {
            touching[i].push(e);
        }
    }
    let mut ripple: Vec<usize> = (0..eqs.len()).filter(|&e| eqs[e].0.len() == 1).collect();
    while let Some(e) = ripple.pop() {
        if eqs[e].0.len() != 1 {
            continue;
        }
        let src = eqs[e].0[0];
        if recovered[src].is_some() {
            continue;
        }
        let value = eqs[e].1.clone();
        for &other in &touching[src] {
            let (ids, rhs) = &mut eqs[other];
            if let Some(pos) = ids.iter().position(|&i| i == src) {
                ids.swap_remove(pos);
                xor_into(rhs, &value);
                if ids.len() == 1 {
                    ripple.push(other);
                }
            }
        }
        recovered[src] = Some(value);
        order.push(src);
    }
    Ok(DecodeResult { recovered, order })
}

/// Full-rank decoding by Gaussian elimination.
pub fn gaussian_decode(nodes: &[&StoredNode], k: usize) -> Option<Vec<Vec<u8>>> {
    let mut basis = Gf2Basis::new(k);
    for node in nodes {
        basis.insert(&node.xor_ids, &node.buffer);
    }
    basis.solve()
}

/// Whether the node subset decodes under `criterion`.
pub fn decodes(nodes: &[&StoredNode], k: usize, payload_len: usize, criterion: Criterion) -> Result<bool> {
    Ok(match criterion {
        Criterion::Rank => {
            let rows: Vec<&[usize]> = nodes.iter().map(|n| n.xor_ids.as_slice()).collect();
            gf2_rank(&rows, k) == k
        }
        Criterion::Peel => peel_decode(nodes, k, payload_len)?.complete(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecodePoint {
    pub eta: f64,
    /// Number of queried nodes, `round(eta k)`.
    pub h: usize,
    pub successes: usize,
    pub trials: usize,
}

impl DecodePoint {
    pub fn probability(&self) -> f64 {
        self.successes as f64 / self.trials as f64
    }
}

/// Queried-node count for a decoding ratio.
pub fn nodes_for_eta(eta: f64, k: usize) -> usize {
    (eta * k as f64).round() as usize
}

/// Empirical decoding probability for each `eta`.
///
/// Every trial draws one random ordering of the nodes and queries its first
/// `round(eta k)` entries, so the subsets are nested across `eta` within a
/// trial.
pub fn decode_curve(
    snapshot: &StorageSnapshot,
    etas: &[f64],
    trials: usize,
    criterion: Criterion,
    seed: u64,
) -> Result<Vec<DecodePoint>> {
    if trials == 0 {
        return Err(Error::invalid("need at least one trial"));
    }
    let n = snapshot.n();
    let k = snapshot.k;
    let hs: Vec<usize> = etas
        .iter()
        .map(|&eta| {
            if !(eta > 0.0) {
                return Err(Error::invalid(format!("eta must be positive, got {eta}")));
            }
            let h = nodes_for_eta(eta, k);
            if h > n {
                return Err(Error::invalid(format!("eta={eta} asks for {h} nodes but only {n} exist")));
            }
            Ok(h)
        })
        .collect::<Result<_>>()?;
    let mut successes = vec![0usize; etas.len()];
    let mut order: Vec<usize> = (0..n).collect();
    for trial in 0..trials {
        let mut r = rng::stream(rng::derive(seed, trial as u64), rng::STREAM_DECODE);
        order.iter_mut().enumerate().for_each(|(i, o)| *o = i);
        order.shuffle(&mut r);
        match criterion {
            Criterion::Rank => {
                // Rank after each prefix length, built incrementally.
                let max_h = hs.iter().copied().max().unwrap_or(0);
                let mut basis = Gf2Basis::new(k);
                let mut rank_at = Vec::with_capacity(max_h + 1);
                rank_at.push(0);
                for &u in &order[..max_h] {
                    basis.insert(&snapshot.nodes[u].xor_ids, &[]);
                    rank_at.push(basis.rank());
                }
                for (j, &h) in hs.iter().enumerate() {
                    if rank_at[h] == k {
                        successes[j] += 1;
                    }
                }
            }
            Criterion::Peel => {
                for (j, &h) in hs.iter().enumerate() {
                    let subset: Vec<&StoredNode> = order[..h].iter().map(|&u| &snapshot.nodes[u]).collect();
                    if peel_decode(&subset, k, snapshot.payload_len)?.complete() {
                        successes[j] += 1;
                    }
                }
            }
        }
    }
    Ok(etas
        .iter()
        .zip(&hs)
        .zip(successes)
        .map(|((&eta, &h), s)| DecodePoint { eta, h, successes: s, trials })
        .collect())
}
