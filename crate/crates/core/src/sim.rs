//! Synchronous-round dissemination engine.
//!
//! Each round has two phases. First every node with a non-empty forward queue
//! pops its head packet and picks the next hop from its current transition
//! row. Then all packets are delivered in sender order. Code-degree changes
//! seen during the round are folded into the forwarding table at the round
//! boundary, so the outcome never depends on the order in which nodes act
//! within a round.

use std::collections::BTreeMap;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{generate_connected_rgg, radius_for, Graph};
use crate::protocol::{make_source_packet, make_update_packet, Action, NodeId, NodeState, Policy, Role};
use crate::rng::{self, SimRng};
use crate::soliton::{DegreeRule, SolitonKind};
use crate::transition::{build_ddslt, build_uniform, TransitionMatrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n: usize,
    pub k: usize,
    /// Walk length coefficient: every walk lasts `ceil(c1 n ln n)` hops.
    pub c1: f64,
    /// Transmission radius is `radius_coeff / sqrt(n)`.
    pub radius_coeff: f64,
    pub policy: Policy,
    pub dist: SolitonKind,
    pub payload_len: usize,
    pub seed: u64,
    /// Rounds between trace samples.
    pub snapshot_every: u64,
    pub max_graph_retries: u32,
    /// Keep one record per receive event.
    pub record_events: bool,
    /// Check protocol invariants against ground truth after every receive.
    pub check_invariants: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            n: 100,
            k: 10,
            c1: 5.0,
            radius_coeff: 2.0,
            policy: Policy::Ddslt,
            dist: SolitonKind::Ideal,
            payload_len: 16,
            seed: 0,
            snapshot_every: 1,
            max_graph_retries: 1000,
            record_events: false,
            check_invariants: true,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::invalid("n must be at least 2"));
        }
        if self.k == 0 || self.k > self.n {
            return Err(Error::invalid(format!("need 1 <= k <= n, got k={} n={}", self.k, self.n)));
        }
        if !(self.c1 > 0.0) || !(self.radius_coeff > 0.0) {
            return Err(Error::invalid("c1 and radius_coeff must be positive"));
        }
        if self.payload_len == 0 || self.snapshot_every == 0 || self.max_graph_retries == 0 {
            return Err(Error::invalid("payload_len, snapshot_every and max_graph_retries must be positive"));
        }
        Ok(())
    }

    pub fn radius(&self) -> f64 {
        radius_for(self.n, self.radius_coeff)
    }

    pub fn walk_length(&self) -> Result<u64> {
        walk_length(self.n, self.c1)
    }

    pub fn graph(&self) -> Result<Graph> {
        generate_connected_rgg(self.n, self.radius(), self.seed, self.max_graph_retries)
            .map_err(|e| Error::GraphGeneration(Box::new(e)))
    }
}

/// `ceil(c1 n ln n)`.
pub fn walk_length(n: usize, c1: f64) -> Result<u64> {
    if n < 2 {
        return Err(Error::invalid("walk length needs n >= 2"));
    }
    if !(c1 > 0.0) {
        return Err(Error::invalid(format!("c1 must be positive, got {c1}")));
    }
    Ok((c1 * n as f64 * (n as f64).ln()).ceil() as u64)
}

/// Round at which `c` times `n ln n` steps have elapsed.
pub fn step_for(n: usize, c: f64) -> u64 {
    (c * n as f64 * (n as f64).ln()).ceil() as u64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceSample {
    pub step: u64,
    pub fraction_k_reached: f64,
    pub fraction_degree_fulfilled: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub samples: Vec<TraceSample>,
    pub total_transmissions: u64,
    pub walk_length: u64,
    pub rounds: u64,
}

impl Trace {
    /// Latest sample taken at or before `step`.
    pub fn at(&self, step: u64) -> &TraceSample {
        let idx = self.samples.partition_point(|s| s.step <= step);
        &self.samples[idx.saturating_sub(1)]
    }
}

/// One receive, for debugging and replay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReceiveEvent {
    pub step: u64,
    pub node: NodeId,
    pub source_id: NodeId,
    /// Source counter carried by the packet on arrival.
    pub source_counter: usize,
    pub action: Action,
    pub k_est: usize,
    pub d: usize,
    #[serde(rename = "Sd")]
    pub sd: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StoredNode {
    pub id: NodeId,
    /// Source indices `0..k` whose payloads are XORed into `buffer`.
    pub xor_ids: Vec<usize>,
    pub buffer: Vec<u8>,
    pub code_degree: usize,
}

/// Network memory after dissemination, with source ids remapped to `0..k`.
#[derive(Debug, Clone, PartialEq)]
pub struct StorageSnapshot {
    pub k: usize,
    pub payload_len: usize,
    /// `source_nodes[i]` is the node that produced source `i`.
    pub source_nodes: Vec<NodeId>,
    pub nodes: Vec<StoredNode>,
    /// Ground-truth payload of each source.
    pub sources: Vec<Vec<u8>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct StoredNodeFile {
    id: NodeId,
    xor_ids: Vec<usize>,
    buffer_hex: String,
    code_degree: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct SnapshotFile {
    k: usize,
    source_nodes: Vec<NodeId>,
    nodes: Vec<StoredNodeFile>,
    sources: BTreeMap<String, String>,
}

impl StorageSnapshot {
    pub fn n(&self) -> usize {
        self.nodes.len()
    }

    /// Histogram of XORed packet counts over `0..=k`, normalised.
    pub fn degree_pmf(&self) -> Vec<f64> {
        let mut counts = vec![0usize; self.k + 1];
        for node in &self.nodes {
            counts[node.xor_ids.len().min(self.k)] += 1;
        }
        counts.iter().map(|&c| c as f64 / self.n() as f64).collect()
    }

    /// Every buffer equals the XOR of the ground-truth payloads it lists.
    pub fn check_ledger(&self) -> Result<()> {
        for node in &self.nodes {
            let mut want = vec![0u8; self.payload_len];
            for &i in &node.xor_ids {
                let src = self
                    .sources
                    .get(i)
                    .ok_or_else(|| Error::Invariant(format!("node {} lists unknown source {i}", node.id)))?;
                crate::protocol::xor_into(&mut want, src);
            }
            if want != node.buffer {
                return Err(Error::Invariant(format!("node {} buffer disagrees with its source list", node.id)));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let file = SnapshotFile {
            k: self.k,
            source_nodes: self.source_nodes.clone(),
            nodes: self
                .nodes
                .iter()
                .map(|s| StoredNodeFile {
                    id: s.id,
                    xor_ids: s.xor_ids.clone(),
                    buffer_hex: hex::encode(&s.buffer),
                    code_degree: s.code_degree,
                })
                .collect(),
            sources: self.sources.iter().enumerate().map(|(i, p)| (i.to_string(), hex::encode(p))).collect(),
        };
        serde_json::to_string(&file).expect("snapshot serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: SnapshotFile = serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
        let bad = |e: hex::FromHexError| Error::Format(e.to_string());
        let mut sources = vec![Vec::new(); file.k];
        for (key, value) in &file.sources {
            let i: usize = key.parse().map_err(|_| Error::Format(format!("source key {key:?} is not an index")))?;
            if i >= file.k {
                return Err(Error::Format(format!("source index {i} out of range for k={}", file.k)));
            }
            sources[i] = hex::decode(value).map_err(bad)?;
        }
        let payload_len = sources.first().map(Vec::len).unwrap_or(0);
        if sources.iter().any(|p| p.len() != payload_len) || file.source_nodes.len() != file.k {
            return Err(Error::Format("inconsistent source table".into()));
        }
        let mut nodes = Vec::with_capacity(file.nodes.len());
        for s in file.nodes {
            let buffer = hex::decode(&s.buffer_hex).map_err(bad)?;
            if buffer.len() != payload_len || s.xor_ids.iter().any(|&i| i >= file.k) {
                return Err(Error::Format(format!("node {} does not match the source table", s.id)));
            }
            nodes.push(StoredNode { id: s.id, xor_ids: s.xor_ids, buffer, code_degree: s.code_degree });
        }
        Ok(StorageSnapshot { k: file.k, payload_len, source_nodes: file.source_nodes, nodes, sources })
    }
}

#[derive(Debug, Clone)]
pub struct Dissemination {
    pub graph: Graph,
    pub snapshot: StorageSnapshot,
    pub trace: Trace,
    pub events: Vec<ReceiveEvent>,
    /// Final protocol state of every node.
    pub nodes: Vec<NodeState>,
}

pub fn run_dissemination(cfg: &SimConfig) -> Result<Dissemination> {
    cfg.validate()?;
    let graph = cfg.graph()?;
    run_dissemination_on(graph, cfg)
}

/// Dissemination over a given graph; `cfg.n` must match it.
pub fn run_dissemination_on(graph: Graph, cfg: &SimConfig) -> Result<Dissemination> {
    cfg.validate()?;
    if graph.n() != cfg.n {
        return Err(Error::invalid(format!("graph has {} nodes, config says {}", graph.n(), cfg.n)));
    }
    Engine::new(graph, cfg)?.run()
}

struct Engine<'a> {
    cfg: &'a SimConfig,
    graph: Graph,
    nodes: Vec<NodeState>,
    rngs: Vec<SimRng>,
    rule: DegreeRule,
    tp: TransitionMatrix,
    degrees: Vec<usize>,
    max_degree_seen: Vec<usize>,
    source_nodes: Vec<NodeId>,
    /// Source index of each source node.
    source_index: BTreeMap<NodeId, usize>,
    payloads: Vec<Vec<u8>>,
    walk_length: u64,
    events: Vec<ReceiveEvent>,
}

impl<'a> Engine<'a> {
    fn new(graph: Graph, cfg: &'a SimConfig) -> Result<Self> {
        let n = cfg.n;
        let walk_length = cfg.walk_length()?;
        let mut src_rng = rng::stream(cfg.seed, rng::STREAM_SOURCES);
        let mut source_nodes = index::sample(&mut src_rng, n, cfg.k).into_vec();
        source_nodes.sort_unstable();
        let source_index: BTreeMap<NodeId, usize> = source_nodes.iter().enumerate().map(|(i, &u)| (u, i)).collect();

        let mut pay_rng = rng::stream(cfg.seed, rng::STREAM_PAYLOADS);
        let payloads: Vec<Vec<u8>> =
            (0..cfg.k).map(|_| (0..cfg.payload_len).map(|_| pay_rng.gen::<u8>()).collect()).collect();

        let mut rule = DegreeRule::new(cfg.dist);
        let known = match cfg.policy {
            Policy::Ddslt => None,
            Policy::Ltcds1 => Some(rule.distribution(cfg.k).clone()),
        };
        let mut rngs: Vec<SimRng> = (0..n).map(|u| rng::node_stream(cfg.seed, u)).collect();
        let mut nodes = Vec::with_capacity(n);
        for u in 0..n {
            let alpha: f64 = rngs[u].gen();
            let (role, own) = match source_index.get(&u) {
                Some(&i) => (Role::Source, Some(payloads[i].as_slice())),
                None => (Role::Storage, None),
            };
            nodes.push(NodeState::init(u, role, alpha, cfg.payload_len, own, known.as_ref().map(|d| (cfg.k, d)))?);
        }
        let degrees: Vec<usize> = nodes.iter().map(|s| s.code_degree).collect();
        let tp = match cfg.policy {
            Policy::Ddslt => build_ddslt(&graph, &degrees)?,
            Policy::Ltcds1 => build_uniform(&graph)?,
        };
        Ok(Engine {
            cfg,
            max_degree_seen: degrees.clone(),
            graph,
            nodes,
            rngs,
            rule,
            tp,
            degrees,
            source_nodes,
            source_index,
            payloads,
            walk_length,
            events: Vec::new(),
        })
    }

    fn sample(&self, step: u64) -> TraceSample {
        let n = self.nodes.len() as f64;
        let reached = self.nodes.iter().filter(|s| s.k_est == self.cfg.k).count();
        let fulfilled = self.nodes.iter().filter(|s| s.is_fulfilled()).count();
        TraceSample {
            step,
            fraction_k_reached: reached as f64 / n,
            fraction_degree_fulfilled: fulfilled as f64 / n,
        }
    }

    fn payload_of(&self, node: NodeId) -> &[u8] {
        &self.payloads[self.source_index[&node]]
    }

    fn check_node(&self, u: NodeId) -> Result<()> {
        let s = &self.nodes[u];
        let fail = |what: String| Err(Error::Invariant(format!("node {u}: {what}")));
        if s.xored_count != s.xor_ids.len() {
            return fail(format!("Sd={} but {} ids stored", s.xored_count, s.xor_ids.len()));
        }
        if s.sources_seen != s.seen_ids.len() {
            return fail(format!("SN={} but {} ids seen", s.sources_seen, s.seen_ids.len()));
        }
        if s.k_est > self.cfg.k {
            return fail(format!("k estimate {} exceeds k={}", s.k_est, self.cfg.k));
        }
        if self.cfg.policy == Policy::Ddslt {
            if s.sources_seen > s.k_est {
                return fail(format!("SN={} exceeds k estimate {}", s.sources_seen, s.k_est));
            }
            if s.xored_count > self.max_degree_seen[u] {
                return fail(format!("Sd={} exceeds code degree {}", s.xored_count, s.code_degree));
            }
            if self.cfg.dist == SolitonKind::Ideal && s.code_degree < self.degrees[u] {
                return fail(format!("code degree fell from {} to {}", self.degrees[u], s.code_degree));
            }
        }
        if s.expected_buffer(|id| self.payload_of(id)) != s.buffer {
            return fail("buffer disagrees with its source list".into());
        }
        Ok(())
    }

    fn run(mut self) -> Result<Dissemination> {
        let cfg = self.cfg;
        let n = cfg.n;
        for i in 0..cfg.k {
            let u = self.source_nodes[i];
            let pkt = make_source_packet(&self.nodes[u], self.walk_length, &self.payloads[i])?;
            if cfg.policy == Policy::Ltcds1 {
                let action = self.nodes[u].originate_ltcds(&pkt, &mut self.rngs[u]);
                self.record(0, u, &pkt, action);
            }
            self.nodes[u].forward_queue.push_back(pkt);
        }

        let mut samples = vec![self.sample(0)];
        let mut transmissions = 0u64;
        let mut step = 0u64;
        let mut sends = Vec::new();
        let mut dirty = Vec::new();
        while self.nodes.iter().any(|s| !s.forward_queue.is_empty()) {
            step += 1;
            sends.clear();
            for u in 0..n {
                if let Some(pkt) = self.nodes[u].forward_queue.pop_front() {
                    let r: f64 = self.rngs[u].gen();
                    sends.push((self.tp.sample_next(&self.graph, u, r), pkt));
                }
            }
            transmissions += sends.len() as u64;

            dirty.clear();
            for (v, pkt) in sends.drain(..) {
                let arrival_sc = pkt.source_counter;
                let source = pkt.source_id;
                let receipt = match cfg.policy {
                    Policy::Ddslt => self.nodes[v].receive_ddslt(pkt, &mut self.rule, &mut self.rngs[v])?,
                    Policy::Ltcds1 => self.nodes[v].receive_ltcds(pkt, &mut self.rngs[v]),
                };
                if let Some(front) = self.nodes[v].forward_queue.back() {
                    if receipt.forwarded && front.source_counter > cfg.k {
                        return Err(Error::Invariant(format!("source counter {} exceeds k", front.source_counter)));
                    }
                }
                if cfg.record_events {
                    let s = &self.nodes[v];
                    self.events.push(ReceiveEvent {
                        step,
                        node: v,
                        source_id: source,
                        source_counter: arrival_sc,
                        action: receipt.action,
                        k_est: s.k_est,
                        d: s.code_degree,
                        sd: s.xored_count,
                    });
                }
                self.max_degree_seen[v] = self.max_degree_seen[v].max(self.nodes[v].code_degree);
                if cfg.check_invariants {
                    self.check_node(v)?;
                }
                if self.nodes[v].code_degree != self.degrees[v] {
                    dirty.push(v);
                }
            }

            dirty.sort_unstable();
            dirty.dedup();
            for &c in &dirty {
                self.degrees[c] = self.nodes[c].code_degree;
                if cfg.policy == Policy::Ddslt {
                    self.tp.apply_local_update(&self.graph, &self.degrees, c)?;
                }
            }

            if step % cfg.snapshot_every == 0 {
                samples.push(self.sample(step));
            }
        }
        if samples.last().map(|s| s.step) != Some(step) {
            samples.push(self.sample(step));
        }

        for node in &mut self.nodes {
            node.finalize();
        }
        let trace = Trace { samples, total_transmissions: transmissions, walk_length: self.walk_length, rounds: step };
        if trace.total_transmissions != cfg.k as u64 * self.walk_length {
            return Err(Error::Invariant(format!(
                "{} transmissions for {} walks of length {}",
                trace.total_transmissions, cfg.k, self.walk_length
            )));
        }
        let snapshot = self.snapshot();
        if cfg.check_invariants {
            snapshot.check_ledger()?;
        }
        Ok(Dissemination { graph: self.graph, snapshot, trace, events: self.events, nodes: self.nodes })
    }

    fn record(&mut self, step: u64, u: NodeId, pkt: &crate::protocol::Packet, action: Action) {
        if self.cfg.record_events {
            let s = &self.nodes[u];
            self.events.push(ReceiveEvent {
                step,
                node: u,
                source_id: pkt.source_id,
                source_counter: pkt.source_counter,
                action,
                k_est: s.k_est,
                d: s.code_degree,
                sd: s.xored_count,
            });
        }
    }

    fn snapshot(&self) -> StorageSnapshot {
        let nodes = self
            .nodes
            .iter()
            .map(|s| StoredNode {
                id: s.id,
                xor_ids: s.xor_ids.iter().map(|id| self.source_index[id]).collect(),
                buffer: s.buffer.clone(),
                code_degree: s.code_degree,
            })
            .collect();
        StorageSnapshot {
            k: self.cfg.k,
            payload_len: self.cfg.payload_len,
            source_nodes: self.source_nodes.clone(),
            nodes,
            sources: self.payloads.clone(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct UpdateOutcome {
    pub snapshot: StorageSnapshot,
    /// Nodes whose buffer the update changed (or would have, for a zero delta).
    pub applied: Vec<NodeId>,
    /// Nodes storing the source that the update walk never reached.
    pub missed: Vec<NodeId>,
}

/// Sends one update walk of the configured length from source `source`
/// (an index into `snapshot.source_nodes`) carrying `old ^ new`.
pub fn run_update_phase(
    snapshot: &StorageSnapshot,
    graph: &Graph,
    source: usize,
    new_payload: &[u8],
    cfg: &SimConfig,
) -> Result<UpdateOutcome> {
    if source >= snapshot.k {
        return Err(Error::invalid(format!("unknown source {source} (k={})", snapshot.k)));
    }
    if new_payload.len() != snapshot.payload_len {
        return Err(Error::invalid(format!(
            "new payload has {} bytes, expected {}",
            new_payload.len(),
            snapshot.payload_len
        )));
    }
    if graph.n() != snapshot.n() {
        return Err(Error::invalid("graph and snapshot disagree on n"));
    }
    let walk = walk_length(graph.n(), cfg.c1)?;
    let origin = snapshot.source_nodes[source];
    let old = &snapshot.sources[source];

    let mut states = Vec::with_capacity(snapshot.n());
    for stored in &snapshot.nodes {
        let mut s = if stored.id == origin {
            NodeState::init(stored.id, Role::Source, 0.0, snapshot.payload_len, Some(old), None)?
        } else {
            NodeState::init(stored.id, Role::Storage, 0.0, snapshot.payload_len, None, None)?
        };
        // Source indices stand in for node ids inside this walk.
        s.xor_ids = stored.xor_ids.iter().copied().collect();
        s.xored_count = s.xor_ids.len();
        s.buffer = stored.buffer.clone();
        s.code_degree = stored.code_degree.max(1);
        states.push(s);
    }
    // Node states are rebuilt for every walk, so one sequence number suffices.
    let mut pkt = make_update_packet(&states[origin], old, new_payload, walk, 1)?;
    pkt.source_id = source;

    let degrees: Vec<usize> = snapshot.nodes.iter().map(|s| s.code_degree.max(1)).collect();
    let tp = match cfg.policy {
        Policy::Ddslt => build_ddslt(graph, &degrees)?,
        Policy::Ltcds1 => build_uniform(graph)?,
    };
    let walk_key = pkt.payload.iter().fold(source as u64, |h, &b| rng::splitmix64(h ^ b as u64));
    let mut walk_rng = rng::stream(rng::derive(cfg.seed, walk_key), rng::STREAM_UPDATE);

    let mut visited = vec![false; graph.n()];
    let mut applied = Vec::new();
    visited[origin] = true;
    if states[origin].apply_update(&pkt) {
        applied.push(origin);
    }
    states[origin].forward_queue.push_back(pkt);
    let mut at = origin;
    while let Some(pkt) = states[at].forward_queue.pop_front() {
        let next = tp.sample_next(graph, at, walk_rng.gen());
        visited[next] = true;
        let receipt = states[next].receive_update(pkt);
        if receipt.action == Action::Accept {
            applied.push(next);
        }
        at = next;
    }

    let mut out = snapshot.clone();
    for (stored, state) in out.nodes.iter_mut().zip(&states) {
        stored.buffer = state.buffer.clone();
    }
    out.sources[source] = new_payload.to_vec();
    let missed = snapshot
        .nodes
        .iter()
        .filter(|s| s.xor_ids.contains(&source) && !visited[s.id])
        .map(|s| s.id)
        .collect();
    applied.sort_unstable();
    Ok(UpdateOutcome { snapshot: out, applied, missed })
}
