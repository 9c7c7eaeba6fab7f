//! Deterministic message-passing simulator with a Dolev-Yao intruder.
//!
//! Every envelope carries a symbolic [`Term`] for the intruder model and a
//! numeric payload for the real protocol code. All traffic is recorded in a
//! [`Transcript`] and added to the intruder's knowledge.

mod intruder;
mod scenarios;
mod term;

use std::collections::{BTreeMap, BTreeSet};

use num_bigint::BigUint;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::attest::{
    self, AttestError, AuthBody, AuthEnv, AuthInput, AuthNode, AuthPacket, ConfigSet, NodeId, Role, SessionState, TrustMark,
};
use crate::hexint;
use crate::threshold_dss::AttestationService;

pub use intruder::{
    can_derive, deduction_closure, rank_report, ClosureBudget, IntruderState, Policy, RankAssignment, RankReport, DEFAULT_DEPTH,
    DEFAULT_MAX_TERMS,
};
pub use scenarios::{expected_verdict, run_scenario, signing_params, ScenarioConfig, SCENARIOS};
pub use term::{AtomKind, Term};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum NetError {
    #[error("unknown scenario {0:?}")]
    UnknownScenario(String),
    #[error("deduction closure exceeded its budget at {partial} terms")]
    BudgetExceeded { partial: usize },
    #[error("scenario setup failed: {0}")]
    Setup(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Verdict {
    Pass,
    AttackFailed,
    AttackSucceeded,
    CheatBlocked,
    ReconstructionImpossible,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Pass => "PASS",
            Verdict::AttackFailed => "ATTACK_FAILED",
            Verdict::AttackSucceeded => "ATTACK_SUCCEEDED",
            Verdict::CheatBlocked => "CHEAT_BLOCKED",
            Verdict::ReconstructionImpossible => "RECONSTRUCTION_IMPOSSIBLE",
        }
    }
}

/// Numeric side of an envelope.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Payload {
    Auth(AuthPacket),
    Data(Value),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Envelope {
    pub from: NodeId,
    pub to: NodeId,
    pub term: Term,
    pub payload: Payload,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventKind {
    /// An envelope put on the network (and seen by the intruder).
    Message,
    /// A delivered envelope that the recipient rejected or ignored.
    Drop,
    State,
    Note,
    /// Knowledge handed to the intruder by fault injection.
    Leak,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub step: usize,
    pub kind: EventKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub from: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub to: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub term: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub term_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub numeric_view: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

impl Event {
    fn new(step: usize, kind: EventKind) -> Self {
        Event { step, kind, from: None, to: None, term: None, term_id: None, numeric_view: None, state: None, detail: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictEntry {
    pub check: String,
    pub verdict: Verdict,
    pub detail: String,
}

/// Scenario record. The entry whose check is `"scenario"` is the outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub scenario: String,
    pub seed: u64,
    pub events: Vec<Event>,
    pub verdicts: Vec<VerdictEntry>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub outputs: BTreeMap<String, Value>,
}

impl Transcript {
    pub fn verdict(&self) -> Option<Verdict> {
        self.verdicts.iter().rev().find(|v| v.check == "scenario").map(|v| v.verdict)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("transcript serializes")
    }

    /// Terms the intruder saw or was handed.
    pub fn observations(&self) -> BTreeSet<Term> {
        self.events
            .iter()
            .filter(|e| matches!(e.kind, EventKind::Message | EventKind::Leak))
            .filter_map(|e| e.term.as_deref().and_then(Term::parse))
            .collect()
    }

    pub fn messages(&self) -> impl Iterator<Item = &Event> {
        self.events.iter().filter(|e| e.kind == EventKind::Message)
    }
}

/// True iff closing the transcript's observations yields no rank-0 secret.
pub fn rank_check(transcript: &Transcript, rank: &RankAssignment) -> bool {
    rank_report(&transcript.observations(), rank).map(|r| r.holds).unwrap_or(false)
}

/// Configuration values every honest node runs with.
pub const TRUSTED_CONFIGS: [&str; 2] = ["trusted-os-1.0", "trusted-os-1.1"];

pub struct World {
    pub scenario: String,
    pub seed: u64,
    pub env: AuthEnv,
    pub nodes: BTreeMap<NodeId, AuthNode>,
    pub intruder: IntruderState,
    key_terms: BTreeMap<(NodeId, NodeId), Term>,
    last_state: BTreeMap<(NodeId, NodeId, Role), SessionState>,
    events: Vec<Event>,
    verdicts: Vec<VerdictEntry>,
    outputs: BTreeMap<String, Value>,
    rng: ChaCha20Rng,
}

fn ordered(a: &NodeId, b: &NodeId) -> (NodeId, NodeId) {
    if a <= b {
        (a.clone(), b.clone())
    } else {
        (b.clone(), a.clone())
    }
}

pub fn dh_term(public: &BigUint) -> Term {
    Term::dh_secret(format!("x:{}", hexint::encode(public)))
}

pub fn nonce_term(prefix: &str, n: &attest::Nonce) -> Term {
    Term::nonce(format!("{prefix}:{}", hex::encode(n.0)))
}

pub fn aik_key(id: &NodeId) -> Term {
    Term::privkey(format!("aik:{id}"))
}

impl World {
    pub fn new(scenario: &str, seed: u64) -> Self {
        let initial = ["INIT", "AUTH", "AGREE", "PUBLIC", "SIGN", "g", "p"].map(Term::label);
        World {
            scenario: scenario.to_string(),
            seed,
            env: AuthEnv::default(),
            nodes: BTreeMap::new(),
            intruder: IntruderState::new(initial.into_iter().chain([Term::id("I")])),
            key_terms: BTreeMap::new(),
            last_state: BTreeMap::new(),
            events: Vec::new(),
            verdicts: Vec::new(),
            outputs: BTreeMap::new(),
            rng: ChaCha20Rng::seed_from_u64(seed),
        }
    }

    pub fn rng(&mut self) -> &mut ChaCha20Rng {
        &mut self.rng
    }

    pub fn add_node(&mut self, name: &str) -> NodeId {
        let id = NodeId::new(name);
        let seed = self.rng.next_u64();
        let node = AuthNode::enrolled(id.clone(), TRUSTED_CONFIGS[0], ConfigSet::new(TRUSTED_CONFIGS), &mut self.env, seed);
        self.intruder.observe(Term::id(name));
        self.intruder.observe(Term::pubkey(format!("aik:{name}")));
        self.nodes.insert(id.clone(), node);
        id
    }

    pub fn node(&self, id: &NodeId) -> &AuthNode {
        &self.nodes[id]
    }

    pub fn node_mut(&mut self, id: &NodeId) -> &mut AuthNode {
        self.nodes.get_mut(id).expect("known node")
    }

    pub fn connect(&mut self, a: &NodeId, b: &NodeId) {
        self.node_mut(a).lists.add_neighbor(b.clone());
        self.node_mut(b).lists.add_neighbor(a.clone());
    }

    pub fn connect_all(&mut self, ids: &[NodeId]) {
        for (i, a) in ids.iter().enumerate() {
            for b in &ids[i + 1..] {
                self.connect(a, b);
            }
        }
    }

    /// Sets the compromise flag, which also revokes the DAA credential.
    pub fn compromise(&mut self, id: &NodeId) {
        let node = self.nodes.get_mut(id).expect("known node");
        node.tpm.compromise(&mut self.env.daa);
        self.note(format!("{id} TPM compromised"));
    }

    pub fn note(&mut self, text: impl Into<String>) {
        let mut e = Event::new(self.events.len(), EventKind::Note);
        e.detail = Some(text.into());
        self.events.push(e);
    }

    /// Hands `term` to the intruder outside the network.
    pub fn leak(&mut self, term: Term, detail: impl Into<String>) {
        let mut e = Event::new(self.events.len(), EventKind::Leak);
        e.term_id = Some(term.id_hash());
        e.term = Some(term.encode());
        e.detail = Some(detail.into());
        self.events.push(e);
        self.intruder.observe(term);
    }

    pub fn verdict(&mut self, check: &str, verdict: Verdict, detail: impl Into<String>) {
        self.verdicts.push(VerdictEntry { check: check.to_string(), verdict, detail: detail.into() });
    }

    pub fn output(&mut self, key: &str, value: Value) {
        self.outputs.insert(key.to_string(), value);
    }

    /// Puts an envelope on the network: it is recorded and observed.
    pub fn transmit(&mut self, env: &Envelope) {
        let mut e = Event::new(self.events.len(), EventKind::Message);
        e.from = Some(env.from.to_string());
        e.to = Some(env.to.to_string());
        e.term_id = Some(env.term.id_hash());
        e.term = Some(env.term.encode());
        e.numeric_view = Some(serde_json::to_value(&env.payload).expect("payload serializes"));
        self.events.push(e);
        self.intruder.observe(env.term.clone());
    }

    fn drop_event(&mut self, env: &Envelope, reason: String) {
        let mut e = Event::new(self.events.len(), EventKind::Drop);
        e.from = Some(env.from.to_string());
        e.to = Some(env.to.to_string());
        e.term_id = Some(env.term.id_hash());
        e.detail = Some(reason);
        self.events.push(e);
    }

    fn record_states(&mut self, node: &NodeId, peer: &NodeId) {
        for role in [Role::Initiator, Role::Responder] {
            let state = match self.nodes[node].session(peer, role) {
                Some(s) => s.state,
                None => continue,
            };
            let key = (node.clone(), peer.clone(), role);
            if self.last_state.get(&key) != Some(&state) {
                self.last_state.insert(key, state);
                let mut e = Event::new(self.events.len(), EventKind::State);
                e.from = Some(node.to_string());
                e.to = Some(peer.to_string());
                e.state = Some(serde_json::to_value(state).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default());
                e.detail = Some(format!("{role:?}").to_lowercase());
                self.events.push(e);
                if state == SessionState::Done && role == Role::Responder {
                    self.remember_key_term(node, peer);
                }
            }
        }
    }

    fn remember_key_term(&mut self, responder: &NodeId, initiator: &NodeId) {
        let session = self.nodes[responder].session(initiator, Role::Responder).expect("session exists");
        if let (Some(own), Some(peer)) = (&session.own_public, &session.peer_public) {
            let t = Term::dh_key(dh_term(own), dh_term(peer));
            self.key_terms.insert(ordered(responder, initiator), t);
        }
    }

    /// Symbolic name of the session key between `a` and `b`.
    pub fn key_term(&self, a: &NodeId, b: &NodeId) -> Term {
        self.key_terms.get(&ordered(a, b)).cloned().unwrap_or_else(|| {
            let (x, y) = ordered(a, b);
            Term::key(format!("K:{x}:{y}"))
        })
    }

    fn session_key_term(&self, sender: &NodeId, peer: &NodeId, role: Role) -> Term {
        let session = self.nodes[sender].session(peer, role);
        match session.and_then(|s| Some((s.own_public.as_ref()?, s.peer_public.as_ref()?))) {
            Some((own, other)) => Term::dh_key(dh_term(own), dh_term(other)),
            None => self.key_term(sender, peer),
        }
    }

    /// Symbolic view of an authentication packet built from the sender's session.
    pub fn auth_term(&self, packet: &AuthPacket) -> Term {
        let (i, j) = (Term::id(packet.from.as_str()), Term::id(packet.to.as_str()));
        match &packet.body {
            AuthBody::Init => Term::tuple(vec![i, j, Term::label("INIT")]),
            AuthBody::Challenge { n1 } => Term::tuple(vec![i, j, nonce_term("n1", n1)]),
            AuthBody::Attest { bundle, .. } => {
                let sender = &self.nodes[&packet.from];
                let session = sender.session(&packet.to, Role::Initiator);
                let n1 = session.and_then(|s| s.n1).map(|n| nonce_term("n1", &n)).unwrap_or_else(|| Term::nonce("n1:?"));
                let pcr = Term::int(format!("pcr:{}", hex::encode(sender.tpm.pcr_composite())));
                let im = Term::hash(Term::tuple(vec![i.clone(), n1, pcr]));
                let ds = Term::sig(im.clone(), Term::privkey(format!("daa:{}", packet.from)));
                let cs = Term::int(format!("cs:{}", hex::encode(sender.cs.digest())));
                let ps = Term::sig(Term::pair(im.clone(), cs), aik_key(&packet.from));
                let kinfo = bundle
                    .key_info
                    .as_ref()
                    .map(|k| Term::tuple(vec![Term::label("g"), Term::label("p"), Term::exp(dh_term(&k.public))]));
                let mut covered = vec![i.clone()];
                covered.extend(kinfo.clone());
                covered.extend([im.clone(), ds.clone(), ps.clone()]);
                let digest = Term::hash(Term::tuple(covered));
                let mut parts = vec![i, j, im, ds, ps, digest];
                parts.extend(kinfo);
                Term::tuple(parts)
            }
            AuthBody::Confirm { key_info, .. } => {
                let kinfo = key_info
                    .as_ref()
                    .map(|k| Term::tuple(vec![Term::label("g"), Term::label("p"), Term::exp(dh_term(&k.public))]));
                let signed = match kinfo {
                    Some(k) => Term::pair(k, j.clone()),
                    None => j.clone(),
                };
                let session = self.nodes[&packet.from].session(&packet.to, Role::Responder);
                let n2 = session.and_then(|s| s.n2).map(|n| nonce_term("n2", &n)).unwrap_or_else(|| Term::nonce("n2:?"));
                let key = self.session_key_term(&packet.from, &packet.to, Role::Responder);
                Term::tuple(vec![i.clone(), j, Term::sig(signed, aik_key(&packet.from)), Term::enc(Term::pair(i, n2), key)])
            }
            AuthBody::Finish { .. } => {
                let session = self.nodes[&packet.from].session(&packet.to, Role::Initiator);
                let n2 = session.and_then(|s| s.n2).map(|n| nonce_term("n2", &n)).unwrap_or_else(|| Term::nonce("n2:?"));
                let key = self.session_key_term(&packet.from, &packet.to, Role::Initiator);
                Term::tuple(vec![i.clone(), j, Term::enc(Term::pair(i, n2), key)])
            }
        }
    }

    fn wrap(&self, packet: AuthPacket) -> Envelope {
        Envelope {
            from: packet.from.clone(),
            to: packet.to.clone(),
            term: self.auth_term(&packet),
            payload: Payload::Auth(packet),
        }
    }

    /// Starts an authentication at `initiator`; returns the INIT envelope.
    pub fn start_auth(&mut self, initiator: &NodeId, responder: &NodeId) -> Vec<Envelope> {
        let env = &self.env;
        let node = self.nodes.get_mut(initiator).expect("known node");
        let out = attest::auth_step(node, env, AuthInput::Start(responder.clone()));
        self.record_states(initiator, responder);
        match out {
            Ok(packets) => packets.into_iter().map(|p| self.wrap(p)).collect(),
            Err(e) => {
                self.note(format!("{initiator} cannot start: {e}"));
                Vec::new()
            }
        }
    }

    /// Delivers an authentication envelope and returns the replies. Envelopes
    /// addressed to nodes outside the world stay with the intruder.
    pub fn deliver_auth(&mut self, envelope: &Envelope) -> Result<Vec<Envelope>, AttestError> {
        let Payload::Auth(packet) = &envelope.payload else {
            return Err(AttestError::Unexpected);
        };
        let to = envelope.to.clone();
        let Some(node) = self.nodes.get_mut(&to) else {
            return Ok(Vec::new());
        };
        let out = attest::auth_step(node, &self.env, AuthInput::Receive(packet.clone()));
        self.record_states(&to, &envelope.from);
        match out {
            Ok(packets) => Ok(packets.into_iter().map(|p| self.wrap(p)).collect()),
            Err(e) => {
                self.drop_event(envelope, e.to_string());
                Err(e)
            }
        }
    }

    /// Runs `auth(initiator, responder)` with a passive intruder relaying
    /// everything. Returns every envelope sent.
    pub fn run_auth(&mut self, initiator: &NodeId, responder: &NodeId) -> Vec<Envelope> {
        let mut queue: std::collections::VecDeque<Envelope> = self.start_auth(initiator, responder).into();
        let mut sent = Vec::new();
        while let Some(env) = queue.pop_front() {
            self.transmit(&env);
            if let Ok(replies) = self.deliver_auth(&env) {
                queue.extend(replies);
            }
            sent.push(env);
        }
        sent
    }

    pub fn session_state(&self, node: &NodeId, peer: &NodeId, role: Role) -> Option<SessionState> {
        self.nodes[node].session(peer, role).map(|s| s.state)
    }

    /// Sends `plaintext` under the session key of `from` and `to`. The
    /// symbolic view is `{label}_k`.
    pub fn send_sealed(&mut self, from: &NodeId, to: &NodeId, label: Term, plaintext: &[u8], kind: &str) -> Option<Envelope> {
        let key = self.nodes[from].lists.key(to)?.clone();
        let ct = attest::seal(&key, plaintext);
        let env = Envelope {
            from: from.clone(),
            to: to.clone(),
            term: Term::tuple(vec![Term::id(from.as_str()), Term::id(to.as_str()), Term::enc(label, self.key_term(from, to))]),
            payload: Payload::Data(serde_json::json!({ "type": kind, "ciphertext": ct })),
        };
        self.transmit(&env);
        Some(env)
    }

    /// Opens an envelope made by [`World::send_sealed`] at its recipient.
    pub fn open_sealed(&self, env: &Envelope) -> Option<Vec<u8>> {
        let Payload::Data(v) = &env.payload else { return None };
        let ct: attest::Ciphertext = serde_json::from_value(v.get("ciphertext")?.clone()).ok()?;
        let key = self.nodes.get(&env.to)?.lists.key(&env.from)?;
        attest::open(key, &ct)
    }

    /// Sends a cleartext envelope.
    pub fn send_clear(&mut self, from: &NodeId, to: &NodeId, term: Term, payload: Value) -> Envelope {
        let env = Envelope { from: from.clone(), to: to.clone(), term, payload: Payload::Data(payload) };
        self.transmit(&env);
        env
    }

    pub fn rank_check_now(&mut self) -> bool {
        let report = rank_report(self.intruder.knowledge(), &RankAssignment::default());
        match report {
            Ok(r) if r.holds => {
                self.verdict("rank_check", Verdict::Pass, format!("closure of {} terms has no rank-0 secret", r.closure_size));
                true
            }
            Ok(r) => {
                let names: Vec<String> = r.leaked.iter().take(4).map(Term::encode).collect();
                self.verdict("rank_check", Verdict::AttackSucceeded, format!("derivable secrets: {}", names.join(" ")));
                false
            }
            Err(e) => {
                self.verdict("rank_check", Verdict::AttackSucceeded, e.to_string());
                false
            }
        }
    }

    pub fn finish(self) -> Transcript {
        Transcript {
            scenario: self.scenario,
            seed: self.seed,
            events: self.events,
            verdicts: self.verdicts,
            outputs: self.outputs,
        }
    }
}

/// Trust decisions backed by the world's nodes: `authenticate` runs
/// `auth(candidate, requestor)` over the simulated network.
pub struct WorldAttestation<'a>(pub &'a mut World);

impl AttestationService for WorldAttestation<'_> {
    fn trust_mark(&self, requestor: &NodeId, candidate: &NodeId) -> TrustMark {
        if requestor == candidate {
            return TrustMark::Trusted;
        }
        let lists = &self.0.nodes[requestor].lists;
        match lists.trust(candidate) {
            TrustMark::Trusted if lists.key(candidate).is_none() => TrustMark::Unknown,
            mark => mark,
        }
    }

    fn authenticate(&mut self, requestor: &NodeId, candidate: &NodeId) -> TrustMark {
        self.0.run_auth(candidate, requestor);
        let lists = &self.0.nodes[requestor].lists;
        match lists.trust(candidate) {
            TrustMark::Trusted if lists.key(candidate).is_some() => TrustMark::Trusted,
            TrustMark::Failed => TrustMark::Failed,
            _ => TrustMark::Unknown,
        }
    }
}
