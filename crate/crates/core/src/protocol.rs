//! Per-node state machines.
//!
//! [`Policy::Ddslt`] nodes learn `k` from the walks themselves: every packet
//! carries a source counter holding the largest estimate seen along its path,
//! and a node's code degree is re-read from the Soliton CDF each time its
//! estimate grows. Packets are offered to the Bernoulli acceptance test on
//! every visit until the node's degree is filled.
//!
//! [`Policy::Ltcds1`] is the comparison baseline: `n` and `k` are known up
//! front, the degree is fixed at start-up and only a packet's first visit is
//! offered to the acceptance test.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::soliton::{degree_from_alpha, DegreeDistribution, DegreeRule};

pub type NodeId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Source,
    Storage,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Policy {
    Ddslt,
    Ltcds1,
}

impl std::str::FromStr for Policy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ddslt" => Ok(Policy::Ddslt),
            "ltcds1" => Ok(Policy::Ltcds1),
            other => Err(Error::invalid(format!("unknown policy {other:?}"))),
        }
    }
}

impl std::fmt::Display for Policy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Policy::Ddslt => "ddslt",
            Policy::Ltcds1 => "ltcds1",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Packet {
    pub source_id: NodeId,
    /// Transmissions left before the walk ends.
    pub hop_counter: u64,
    /// Running maximum of the `k` estimates seen along the walk.
    pub source_counter: usize,
    pub update_flag: bool,
    /// Sequence number of an update packet, so a node revisited by the same
    /// update walk applies it only once. Zero for data packets.
    pub update_seq: u32,
    pub payload: Vec<u8>,
}

/// What a node did with a received data packet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Action {
    /// First packet ever, kept until a second source shows up.
    Hold,
    Accept,
    Reject,
    /// No acceptance test ran.
    Skip,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Receipt {
    pub action: Action,
    /// Outcome of the deferred test on the held first packet, if it ran now.
    pub deferred: Option<bool>,
    pub degree_changed: bool,
    /// The packet was queued for forwarding (`false` once its walk is over).
    pub forwarded: bool,
}

/// Source of Bernoulli outcomes.
pub trait Coin {
    fn flip(&mut self, p: f64) -> bool;
}

impl<R: rand::RngCore> Coin for R {
    fn flip(&mut self, p: f64) -> bool {
        self.gen::<f64>() < p
    }
}

/// Replays a fixed outcome sequence, then fails every further flip.
#[derive(Debug, Clone, Default)]
pub struct ScriptedCoin {
    outcomes: VecDeque<bool>,
    pub requested: Vec<f64>,
}

impl ScriptedCoin {
    pub fn new(outcomes: impl IntoIterator<Item = bool>) -> Self {
        ScriptedCoin { outcomes: outcomes.into_iter().collect(), requested: Vec::new() }
    }
}

impl Coin for ScriptedCoin {
    fn flip(&mut self, p: f64) -> bool {
        self.requested.push(p);
        self.outcomes.pop_front().unwrap_or(false)
    }
}

pub fn xor_into(dst: &mut [u8], src: &[u8]) {
    debug_assert_eq!(dst.len(), src.len());
    for (d, s) in dst.iter_mut().zip(src) {
        *d ^= s;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeState {
    pub id: NodeId,
    pub role: Role,
    pub policy: Policy,
    pub alpha: f64,
    pub k_est: usize,
    pub code_degree: usize,
    pub xored_count: usize,
    pub sources_seen: usize,
    pub seen_ids: BTreeSet<NodeId>,
    pub xor_ids: BTreeSet<NodeId>,
    pub buffer: Vec<u8>,
    pub provisional_first: Option<NodeId>,
    pub forward_queue: VecDeque<Packet>,
    /// A source keeps its original reading next to the encoded buffer so it
    /// can later issue updates.
    pub own_payload: Option<Vec<u8>>,
    applied_updates: BTreeMap<NodeId, u32>,
    /// Probability denominator for the baseline policy.
    k_known: usize,
}

impl NodeState {
    /// Start-up state. A storage node begins empty; a source node has
    /// already seen and stored its own packet. `k_known` is required for the
    /// baseline policy and ignored otherwise.
    pub fn init(
        id: NodeId,
        role: Role,
        alpha: f64,
        payload_len: usize,
        own_payload: Option<&[u8]>,
        k_known: Option<(usize, &DegreeDistribution)>,
    ) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::invalid(format!("alpha must lie in [0,1], got {alpha}")));
        }
        let own = match (role, own_payload) {
            (Role::Source, Some(p)) if p.len() == payload_len => Some(p.to_vec()),
            (Role::Source, Some(p)) => {
                return Err(Error::invalid(format!("payload has {} bytes, expected {payload_len}", p.len())))
            }
            (Role::Source, None) => return Err(Error::invalid("source node needs its payload")),
            (Role::Storage, _) => None,
        };
        let mut node = NodeState {
            id,
            role,
            policy: Policy::Ddslt,
            alpha,
            k_est: 0,
            code_degree: 1,
            xored_count: 0,
            sources_seen: 0,
            seen_ids: BTreeSet::new(),
            xor_ids: BTreeSet::new(),
            buffer: vec![0; payload_len],
            provisional_first: None,
            forward_queue: VecDeque::new(),
            own_payload: own,
            applied_updates: BTreeMap::new(),
            k_known: 0,
        };
        match k_known {
            None => {
                if let Some(p) = node.own_payload.clone() {
                    node.k_est = 1;
                    node.xored_count = 1;
                    node.sources_seen = 1;
                    node.seen_ids.insert(id);
                    node.xor_ids.insert(id);
                    node.buffer = p;
                }
            }
            Some((k, dist)) => {
                if k == 0 || dist.k() != k {
                    return Err(Error::invalid("baseline needs the degree distribution for the known k"));
                }
                node.policy = Policy::Ltcds1;
                node.k_known = k;
                node.k_est = k;
                node.code_degree = degree_from_alpha(dist, alpha);
            }
        }
        Ok(node)
    }

    pub fn is_fulfilled(&self) -> bool {
        self.xored_count == self.code_degree
    }

    /// Re-reads the code degree for the current `k` estimate.
    pub fn update_code_degree(&mut self, rule: &mut DegreeRule) -> Result<bool> {
        if self.k_est == 0 {
            return Err(Error::invalid(format!("node {} has no estimate of k yet", self.id)));
        }
        let d = rule.degree(self.k_est, self.alpha);
        let changed = d != self.code_degree;
        self.code_degree = d;
        Ok(changed)
    }

    fn accept(&mut self, pkt: &Packet) {
        xor_into(&mut self.buffer, &pkt.payload);
        self.xor_ids.insert(pkt.source_id);
        self.xored_count += 1;
    }

    fn acceptance_probability(&self) -> f64 {
        self.code_degree as f64 / self.k_est as f64
    }

    fn hop(&mut self, mut pkt: Packet) -> bool {
        pkt.hop_counter = pkt.hop_counter.saturating_sub(1);
        if pkt.hop_counter > 0 {
            self.forward_queue.push_back(pkt);
            true
        } else {
            false
        }
    }

    /// Full receive step for the degree-aware policy: counters, code degree,
    /// XOR decision, then hop accounting.
    pub fn receive_ddslt(&mut self, mut pkt: Packet, rule: &mut DegreeRule, coin: &mut impl Coin) -> Result<Receipt> {
        debug_assert!(!pkt.update_flag);
        let first_ever = self.seen_ids.is_empty();
        if self.seen_ids.insert(pkt.source_id) {
            self.sources_seen += 1;
        }
        let estimate = self.k_est.max(self.sources_seen).max(pkt.source_counter);
        self.k_est = estimate;
        pkt.source_counter = estimate;

        let degree_changed = self.update_code_degree(rule)?;

        let mut deferred = None;
        let action = if first_ever {
            self.provisional_first = Some(pkt.source_id);
            self.buffer.copy_from_slice(&pkt.payload);
            Action::Hold
        } else if let Some(first) = self.provisional_first {
            if first == pkt.source_id {
                Action::Skip
            } else {
                // First packet from a second distinct source: settle the held one.
                let p = self.acceptance_probability();
                let kept = coin.flip(p);
                if kept {
                    self.xor_ids.insert(first);
                    self.xored_count = 1;
                } else {
                    self.buffer.iter_mut().for_each(|b| *b = 0);
                }
                self.provisional_first = None;
                deferred = Some(kept);
                self.offer(&pkt, coin)
            }
        } else {
            self.offer(&pkt, coin)
        };

        let forwarded = self.hop(pkt);
        Ok(Receipt { action, deferred, degree_changed, forwarded })
    }

    fn offer(&mut self, pkt: &Packet, coin: &mut impl Coin) -> Action {
        if self.xored_count >= self.code_degree || self.xor_ids.contains(&pkt.source_id) {
            return Action::Skip;
        }
        if coin.flip(self.acceptance_probability()) {
            self.accept(pkt);
            Action::Accept
        } else {
            Action::Reject
        }
    }

    /// Baseline receive step: only a packet's first visit is offered, with
    /// probability `d / k`, and there is no cap on the number of XORed packets.
    pub fn receive_ltcds(&mut self, pkt: Packet, coin: &mut impl Coin) -> Receipt {
        let action = self.first_visit_ltcds(&pkt, coin);
        let forwarded = self.hop(pkt);
        Receipt { action, deferred: None, degree_changed: false, forwarded }
    }

    /// The baseline treats a source creating its own packet as that packet's
    /// first visit.
    pub fn originate_ltcds(&mut self, pkt: &Packet, coin: &mut impl Coin) -> Action {
        self.first_visit_ltcds(pkt, coin)
    }

    fn first_visit_ltcds(&mut self, pkt: &Packet, coin: &mut impl Coin) -> Action {
        if !self.seen_ids.insert(pkt.source_id) {
            return Action::Skip;
        }
        self.sources_seen += 1;
        if coin.flip(self.code_degree as f64 / self.k_known as f64) {
            self.accept(pkt);
            Action::Accept
        } else {
            Action::Reject
        }
    }

    /// Keeps a still-held first packet once dissemination is over.
    pub fn finalize(&mut self) {
        if let Some(first) = self.provisional_first.take() {
            self.xor_ids.insert(first);
            self.xored_count = 1;
        }
    }

    /// XORs an update delta into the buffer if this node stores the source
    /// and has not applied this update yet.
    pub fn apply_update(&mut self, pkt: &Packet) -> bool {
        if !pkt.update_flag || !self.xor_ids.contains(&pkt.source_id) {
            return false;
        }
        let last = self.applied_updates.entry(pkt.source_id).or_insert(0);
        if *last >= pkt.update_seq {
            return false;
        }
        *last = pkt.update_seq;
        xor_into(&mut self.buffer, &pkt.payload);
        true
    }

    /// Receive step for update packets: apply, then hop. Counters and the
    /// code degree are left alone.
    pub fn receive_update(&mut self, pkt: Packet) -> Receipt {
        let applied = self.apply_update(&pkt);
        let forwarded = self.hop(pkt);
        Receipt {
            action: if applied { Action::Accept } else { Action::Skip },
            deferred: None,
            degree_changed: false,
            forwarded,
        }
    }

    /// XOR of the given payloads over `xor_ids` plus the held first packet.
    pub fn expected_buffer<'a>(&self, payload_of: impl Fn(NodeId) -> &'a [u8]) -> Vec<u8> {
        let mut out = vec![0; self.buffer.len()];
        for &id in self.xor_ids.iter().chain(self.provisional_first.iter()) {
            xor_into(&mut out, payload_of(id));
        }
        out
    }
}

pub fn make_source_packet(node: &NodeState, walk_len: u64, payload: &[u8]) -> Result<Packet> {
    if node.role != Role::Source {
        return Err(Error::invalid(format!("node {} is not a source", node.id)));
    }
    Ok(Packet {
        source_id: node.id,
        hop_counter: walk_len,
        source_counter: 1,
        update_flag: false,
        update_seq: 0,
        payload: payload.to_vec(),
    })
}

/// Update packet carrying `old ^ new`.
pub fn make_update_packet(node: &NodeState, old: &[u8], new: &[u8], walk_len: u64, seq: u32) -> Result<Packet> {
    if node.role != Role::Source {
        return Err(Error::invalid(format!("node {} is not a source", node.id)));
    }
    if old.len() != new.len() {
        return Err(Error::invalid("old and new payloads differ in length"));
    }
    if seq == 0 {
        return Err(Error::invalid("update sequence numbers start at 1"));
    }
    let mut payload = old.to_vec();
    xor_into(&mut payload, new);
    Ok(Packet {
        source_id: node.id,
        hop_counter: walk_len,
        source_counter: node.k_est.max(1),
        update_flag: true,
        update_seq: seq,
        payload,
    })
}
