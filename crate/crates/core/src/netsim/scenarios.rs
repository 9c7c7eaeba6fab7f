//! Scripted scenarios. Each returns a transcript whose `"scenario"` verdict
//! is computed from the final node states, never assumed.

use std::collections::BTreeMap;

use num_bigint::{BigUint, RandBigInt};
use num_traits::One;
use serde_json::json;

use super::{nonce_term, Envelope, NetError, Payload, Term, Transcript, Verdict, World, WorldAttestation};
use crate::attest::{self, AuthBody, AuthPacket, NodeId, Role, SessionState, TrustMark};
use crate::crt_vss::{self, Bulletin, Share};
use crate::curve::{self, CurveParams};
use crate::hexint;
use crate::modmath::{self, ABParams};
use crate::threshold_dss::{self, DssError, MemberState, MessageDigest, SignatureOutput, SigningKeyMaterial};

/// Registered scenarios with the verdict an uncompromised run must produce.
pub const SCENARIOS: &[(&str, Verdict)] = &[
    ("auth-honest", Verdict::Pass),
    ("auth-compromised", Verdict::CheatBlocked),
    ("auth-unknown-neighbor", Verdict::Pass),
    ("replay-alpha-beta", Verdict::AttackFailed),
    ("replay-alpha-only", Verdict::AttackFailed),
    ("replay-alpha-beta-leaky", Verdict::AttackSucceeded),
    ("leak-session-key", Verdict::AttackSucceeded),
    ("honest-distribution", Verdict::Pass),
    ("cheating-distributor-unattested", Verdict::CheatBlocked),
    ("cheating-distributor-bad-share", Verdict::CheatBlocked),
    ("cheating-distributor-oversized", Verdict::CheatBlocked),
    ("reconstruct-honest", Verdict::Pass),
    ("cheating-participant", Verdict::CheatBlocked),
    ("cheating-participant-majority", Verdict::ReconstructionImpossible),
    ("sign-honest", Verdict::Pass),
    ("sign-tamper", Verdict::CheatBlocked),
];

pub fn expected_verdict(name: &str) -> Option<Verdict> {
    SCENARIOS.iter().find(|(n, _)| *n == name).map(|(_, v)| *v)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScenarioConfig {
    pub name: String,
    pub seed: u64,
    /// Curve for signing scenarios, `toy` or `secp256k1`.
    pub curve: String,
    pub message: String,
    /// Threshold and node count for signing scenarios.
    pub t: usize,
    pub n: usize,
}

impl ScenarioConfig {
    pub fn new(name: &str, seed: u64) -> Self {
        ScenarioConfig {
            name: name.to_string(),
            seed,
            curve: "secp256k1".to_string(),
            message: "threshold signing demo".to_string(),
            t: 3,
            n: 4,
        }
    }
}

pub fn run_scenario(cfg: &ScenarioConfig) -> Result<Transcript, NetError> {
    let w = World::new(&cfg.name, cfg.seed);
    let w = match cfg.name.as_str() {
        "auth-honest" => auth_honest(w),
        "auth-compromised" => auth_compromised(w),
        "auth-unknown-neighbor" => auth_unknown_neighbor(w),
        "replay-alpha-beta" => replay(w, true, false),
        "replay-alpha-only" => replay(w, false, false),
        "replay-alpha-beta-leaky" => replay(w, true, true),
        "leak-session-key" => leak_session_key(w),
        "honest-distribution" => distribution_scenario(w, DealerBehavior::Honest),
        "cheating-distributor-unattested" => distribution_scenario(w, DealerBehavior::Unattested),
        "cheating-distributor-bad-share" => distribution_scenario(w, DealerBehavior::BadShare),
        "cheating-distributor-oversized" => distribution_scenario(w, DealerBehavior::Oversized),
        "reconstruct-honest" => participant_scenario(w, 0),
        "cheating-participant" => participant_scenario(w, 1),
        "cheating-participant-majority" => participant_scenario(w, 2),
        "sign-honest" => signing_scenario(w, cfg, false),
        "sign-tamper" => signing_scenario(w, cfg, true),
        other => return Err(NetError::UnknownScenario(other.to_string())),
    }?;
    Ok(w.finish())
}

fn pair_of(w: &mut World) -> (NodeId, NodeId) {
    let a = w.add_node("A");
    let b = w.add_node("B");
    (a, b)
}

fn numbers(sent: &[Envelope]) -> Vec<u8> {
    sent.iter()
        .filter_map(|e| match &e.payload {
            Payload::Auth(p) => Some(p.number()),
            Payload::Data(_) => None,
        })
        .collect()
}

fn auth_honest(mut w: World) -> Result<World, NetError> {
    let (a, b) = pair_of(&mut w);
    w.connect(&a, &b);
    let sent = w.run_auth(&a, &b);
    let done = w.session_state(&a, &b, Role::Initiator) == Some(SessionState::Done)
        && w.session_state(&b, &a, Role::Responder) == Some(SessionState::Done);
    let (ka, kb) = (w.node(&a).lists.key(&b).cloned(), w.node(&b).lists.key(&a).cloned());
    let keys_agree = ka.is_some() && ka == kb;
    let trusted = w.node(&a).lists.trust(&b) == TrustMark::Trusted && w.node(&b).lists.trust(&a) == TrustMark::Trusted;
    let rank_ok = w.rank_check_now();
    let detail = format!("messages {:?}, both DONE {done}, keys agree {keys_agree}, T = 1 {trusted}", numbers(&sent));
    let verdict = if done && keys_agree && trusted && rank_ok { Verdict::Pass } else { Verdict::AttackSucceeded };
    w.verdict("scenario", verdict, detail);
    Ok(w)
}

fn auth_compromised(mut w: World) -> Result<World, NetError> {
    let (a, b) = pair_of(&mut w);
    w.connect(&a, &b);
    w.compromise(&a);
    let sent = w.run_auth(&a, &b);
    let msgs = numbers(&sent);
    let marked = w.node(&b).lists.trust(&a) == TrustMark::Failed;
    let no_m4 = !msgs.contains(&4);
    let detail = format!("messages {msgs:?}, responder T[A] = {}", i8::from(w.node(&b).lists.trust(&a)));
    let verdict = if marked && no_m4 { Verdict::CheatBlocked } else { Verdict::AttackSucceeded };
    w.verdict("scenario", verdict, detail);
    Ok(w)
}

fn auth_unknown_neighbor(mut w: World) -> Result<World, NetError> {
    let (a, b) = pair_of(&mut w);
    w.node_mut(&a).lists.add_neighbor(b.clone());
    let sent = w.run_auth(&a, &b);
    let msgs = numbers(&sent);
    let silent = msgs == [1] && w.node(&b).session(&a, Role::Responder).is_none();
    let waiting = w.session_state(&a, &b, Role::Initiator) == Some(SessionState::InitSent);
    let detail = format!("messages {msgs:?}, initiator still waiting {waiting}");
    let verdict = if silent && waiting { Verdict::Pass } else { Verdict::AttackSucceeded };
    w.verdict("scenario", verdict, detail);
    Ok(w)
}

/// The intruder impersonates A towards B in run alpha, reusing what
/// it saw in an earlier run beta between A and B.
fn replay(mut w: World, with_beta: bool, leaky: bool) -> Result<World, NetError> {
    let (a, b) = pair_of(&mut w);
    w.connect(&a, &b);
    w.intruder.policy = super::Policy::ReplayScript;
    let beta = if with_beta {
        w.note("run beta: A authenticates to B; the intruder records every message");
        w.run_auth(&a, &b)
    } else {
        Vec::new()
    };
    w.note("run alpha: the intruder I(A) opens a session with B");

    let alpha1 = Envelope {
        from: a.clone(),
        to: b.clone(),
        term: Term::tuple(vec![Term::id("A"), Term::id("B"), Term::label("INIT")]),
        payload: Payload::Auth(AuthPacket { from: a.clone(), to: b.clone(), body: AuthBody::Init }),
    };
    if !w.intruder.can_send(&alpha1.term)? {
        return Err(NetError::Setup("intruder cannot form alpha.1".into()));
    }
    w.transmit(&alpha1);
    let alpha2 = w.deliver_auth(&alpha1).map_err(|e| NetError::Setup(e.to_string()))?;
    for env in &alpha2 {
        w.transmit(env);
    }
    w.note("alpha.2 is intercepted and never reaches A");

    let Some(beta3) = beta.iter().find(|e| matches!(&e.payload, Payload::Auth(p) if p.number() == 3)).cloned() else {
        let n1 = match alpha2.first().map(|e| &e.payload) {
            Some(Payload::Auth(AuthPacket { body: AuthBody::Challenge { n1 }, .. })) => *n1,
            _ => return Err(NetError::Setup("no challenge in alpha.2".into())),
        };
        let im = Term::hash(Term::tuple(vec![Term::id("A"), nonce_term("n1", &n1), Term::int("pcr:A")]));
        let ds = Term::sig(im, Term::privkey("daa:A"));
        let forgeable = w.intruder.can_send(&ds)?;
        w.note(format!("alpha.3 needs DS_A, derivable by the intruder: {forgeable}"));
        let state = w.session_state(&b, &a, Role::Responder);
        let rank_ok = w.rank_check_now();
        let verdict = if !forgeable && rank_ok { Verdict::AttackFailed } else { Verdict::AttackSucceeded };
        w.verdict("scenario", verdict, format!("no run beta to replay; B stays {state:?}"));
        return Ok(w);
    };

    w.note("alpha.3 replays beta.3 (im_A, DS_A, PS_A, K_INFO_A)");
    w.transmit(&beta3);
    let alpha4 = match w.deliver_auth(&beta3) {
        Ok(out) => out,
        Err(e) => {
            w.verdict("scenario", Verdict::AttackFailed, format!("B rejected the replayed message 3: {e}"));
            return Ok(w);
        }
    };
    for env in &alpha4 {
        w.transmit(env);
    }
    let alpha4 = alpha4.into_iter().next().ok_or_else(|| NetError::Setup("B sent no alpha.4".into()))?;
    w.note("the intruder forwards alpha.4 to A");
    let forwarded = w.deliver_auth(&alpha4);
    if forwarded.is_ok_and(|out| !out.is_empty()) {
        w.note("A answered the forwarded alpha.4");
    }

    let n2 = w.node(&b).session(&a, Role::Responder).and_then(|s| s.n2).ok_or_else(|| NetError::Setup("B has no n2".into()))?;
    let key_term = {
        let s = w.node(&b).session(&a, Role::Responder).expect("responder session");
        Term::dh_key(
            super::dh_term(s.own_public.as_ref().expect("fresh key")),
            super::dh_term(s.peer_public.as_ref().expect("peer key")),
        )
    };
    let alpha5_term = Term::tuple(vec![
        Term::id("A"),
        Term::id("B"),
        Term::enc(Term::pair(Term::id("A"), nonce_term("n2", &n2)), key_term.clone()),
    ]);

    if leaky {
        let session = w.node(&b).session(&a, Role::Responder).expect("responder session");
        let y = session.dh_secret().cloned().expect("fresh exponent");
        let own = session.own_public.clone().expect("fresh key");
        let peer = session.peer_public.clone().expect("peer key");
        w.leak(super::dh_term(&own), "fault injection: the intruder learns B's alpha DH exponent");
        let key = w.env.dh.shared(&peer, &y);
        let AuthBody::Confirm { enc, .. } = &payload_packet(&alpha4)?.body else {
            return Err(NetError::Setup("alpha.4 is not message 4".into()));
        };
        let (_, n2_seen) = attest::open(&key, enc)
            .as_deref()
            .and_then(attest::decode_id_nonce)
            .ok_or_else(|| NetError::Setup("leaked key does not open alpha.4".into()))?;
        let forged = Envelope {
            from: a.clone(),
            to: b.clone(),
            term: alpha5_term.clone(),
            payload: Payload::Auth(AuthPacket {
                from: a.clone(),
                to: b.clone(),
                body: AuthBody::Finish { enc: attest::seal(&key, &attest::encode_id_nonce(&a, &n2_seen)) },
            }),
        };
        let derivable = w.intruder.can_send(&forged.term)?;
        w.note(format!("alpha.5 derivable by the intruder: {derivable}"));
        w.transmit(&forged);
        let _ = w.deliver_auth(&forged);
    } else {
        let derivable = w.intruder.can_send(&alpha5_term)?;
        w.note(format!("alpha.5 derivable by the intruder: {derivable}"));
        if let Some(beta5) = beta.iter().find(|e| matches!(&e.payload, Payload::Auth(p) if p.number() == 5)).cloned() {
            w.note("alpha.5 attempt: replay of beta.5");
            w.transmit(&beta5);
            let _ = w.deliver_auth(&beta5);
        }
    }

    let state = w.session_state(&b, &a, Role::Responder);
    let rank_ok = w.rank_check_now();
    let b_done = state == Some(SessionState::Done);
    let verdict = if b_done || !rank_ok { Verdict::AttackSucceeded } else { Verdict::AttackFailed };
    w.verdict("scenario", verdict, format!("responder B ends in {state:?}"));
    Ok(w)
}

fn payload_packet(env: &Envelope) -> Result<&AuthPacket, NetError> {
    match &env.payload {
        Payload::Auth(p) => Ok(p),
        Payload::Data(_) => Err(NetError::Setup("expected an authentication packet".into())),
    }
}

fn leak_session_key(mut w: World) -> Result<World, NetError> {
    let (a, b) = pair_of(&mut w);
    w.connect(&a, &b);
    w.run_auth(&a, &b);
    let key = w.node(&a).lists.key(&b).cloned().ok_or_else(|| NetError::Setup("no key after auth".into()))?;
    w.note("fault injection: A sends k_AB in clear");
    let term = Term::tuple(vec![Term::id("A"), Term::id("B"), w.key_term(&a, &b)]);
    w.send_clear(&a, &b, term, json!({ "type": "leak", "key": hexint::encode(&key) }));
    let rank_ok = w.rank_check_now();
    let verdict = if rank_ok { Verdict::AttackFailed } else { Verdict::AttackSucceeded };
    w.verdict("scenario", verdict, format!("rank_check holds: {rank_ok}"));
    Ok(w)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum DealerBehavior {
    Honest,
    /// TPM compromised before the election: attestation fails.
    Unattested,
    /// Compromised after attestation; flips share 2.
    BadShare,
    /// Tries to deal a lifted value `y >= M`.
    Oversized,
}

const FIXTURE_SECRET: u32 = 5;

struct DistributionOutcome {
    params: ABParams,
    participants: Vec<NodeId>,
    agreed: Vec<NodeId>,
    accepted: BTreeMap<NodeId, Share>,
    rejected: Vec<(NodeId, usize)>,
    bulletin: Option<Bulletin>,
    refused: Option<String>,
}

fn commitment_bytes(c: &crt_vss::Commitment) -> Vec<u8> {
    serde_json::to_vec(c).expect("commitment serializes")
}

/// Distribution with the fixture parameters: election, mutual
/// authentication, AGREE, encrypted shares and the PUBLIC bulletin.
fn distribute(w: &mut World, behavior: DealerBehavior) -> Result<DistributionOutcome, NetError> {
    let params = ABParams::fixture();
    let d = w.add_node("D");
    let participants: Vec<NodeId> = (1..=params.n()).map(|i| w.add_node(&format!("P{i}"))).collect();
    let mut all = vec![d.clone()];
    all.extend(participants.iter().cloned());
    w.connect_all(&all);
    if behavior == DealerBehavior::Unattested {
        w.compromise(&d);
    }

    let auth_msg = [b"AUTH".as_slice(), d.as_str().as_bytes()].concat();
    let auth_sig = w.node(&d).tpm.aik_sign(&auth_msg);
    for p in &participants {
        let term = Term::tuple(vec![Term::id("D"), Term::label("AUTH"), Term::sig(Term::id("D"), super::aik_key(&d))]);
        w.send_clear(&d, p, term, json!({ "type": "auth_request", "sig": auth_sig }));
        if attest::signature_valid(&w.env.directory[&d], &auth_msg, &auth_sig) {
            w.run_auth(p, &d);
        }
    }
    let elected: Vec<NodeId> = participants.iter().filter(|p| w.node(&d).lists.trust(p) == TrustMark::Trusted).cloned().collect();

    let mut agreed = Vec::new();
    for p in &elected {
        w.run_auth(&d, p);
        if w.node(p).lists.trust(&d) == TrustMark::Trusted && w.node(p).lists.key(&d).is_some() {
            let term = Term::tuple(vec![Term::id(p.as_str()), Term::id("D"), Term::label("AGREE")]);
            w.send_clear(p, &d, term, json!({ "type": "agree" }));
            agreed.push(p.clone());
        } else {
            w.note(format!("{p} refuses: distributor failed attestation"));
        }
    }
    let mut outcome = DistributionOutcome {
        params: params.clone(),
        participants: participants.clone(),
        agreed: agreed.clone(),
        accepted: BTreeMap::new(),
        rejected: Vec::new(),
        bulletin: None,
        refused: None,
    };
    if agreed.len() < params.n() {
        w.note(format!("only {} of {} AGREE messages; distribution cannot proceed", agreed.len(), params.n()));
        return Ok(outcome);
    }

    let secret = BigUint::from(FIXTURE_SECRET);
    let dealing = if behavior == DealerBehavior::Oversized {
        let mask = (params.capacity() - &secret) / params.m0() + 1u32;
        match crt_vss::split_masked_with_mask(&secret, &mask, &params, w.rng()) {
            Ok((dealing, _)) => dealing,
            Err(e) => {
                w.note(format!("dealing constructor refuses y = S + A m0 >= M: {e}"));
                outcome.refused = Some(e.to_string());
                return Ok(outcome);
            }
        }
    } else {
        crt_vss::split_masked(&secret, &params, w.rng()).map_err(|e| NetError::Setup(e.to_string()))?.0
    };
    if behavior == DealerBehavior::BadShare {
        w.compromise(&d);
    }

    let bulletin = dealing.bulletin();
    for (pos, p) in participants.iter().enumerate() {
        let index = pos + 1;
        let share = dealing.share(index).expect("share per participant");
        let mut value = share.value.clone();
        if behavior == DealerBehavior::BadShare && index == 2 {
            value = (value + 1u32) % &share.modulus;
        }
        let env = w
            .send_sealed(&d, p, Term::int(format!("share:{index}")), &value.to_bytes_be(), "share")
            .ok_or_else(|| NetError::Setup(format!("no key between D and {p}")))?;
        let commitment = bulletin.commitment(index).expect("commitment per share").clone();
        let sig = w.node(&d).tpm.aik_sign(&commitment_bytes(&commitment));
        let term = Term::tuple(vec![
            Term::id("D"),
            Term::label("PUBLIC"),
            Term::sig(
                Term::tuple(vec![
                    Term::int(format!("p:{}", hexint::encode(&commitment.p))),
                    Term::int(format!("g:{}", hexint::encode(&commitment.g))),
                    Term::int(format!("z:{}", hexint::encode(&commitment.z))),
                ]),
                super::aik_key(&d),
            ),
        ]);
        w.send_clear(&d, p, term, json!({ "type": "public", "commitment": commitment, "sig": sig }));

        let origin_ok = attest::signature_valid(&w.env.directory[&d], &commitment_bytes(&commitment), &sig);
        let received = w.open_sealed(&env).map(|b| Share::new(index, BigUint::from_bytes_be(&b), share.modulus.clone()));
        let valid = match &received {
            Some(s) => origin_ok && crt_vss::verify_share(s, &commitment).unwrap_or(false),
            None => false,
        };
        if valid {
            outcome.accepted.insert(p.clone(), received.expect("checked above"));
        } else {
            w.note(format!("{p} reports commitment mismatch for share index {index} and rejects it"));
            outcome.rejected.push((p.clone(), index));
        }
    }
    outcome.bulletin = Some(bulletin);
    Ok(outcome)
}

fn reconstruct_all(outcome: &DistributionOutcome) -> Vec<(Vec<usize>, Option<BigUint>)> {
    let shares: Vec<&Share> = outcome.accepted.values().collect();
    let t = outcome.params.t();
    let mut results = Vec::new();
    for i in 0..shares.len() {
        for j in i + 1..shares.len() {
            if t != 2 {
                continue;
            }
            let pair = vec![shares[i].clone(), shares[j].clone()];
            let secret = crt_vss::reconstruct_with(&pair, &outcome.params, crt_vss::SplitMode::Masked).ok().map(|(_, s)| s);
            results.push((vec![shares[i].index, shares[j].index], secret));
        }
    }
    results
}

fn distribution_scenario(mut w: World, behavior: DealerBehavior) -> Result<World, NetError> {
    let outcome = distribute(&mut w, behavior)?;
    let secret = BigUint::from(FIXTURE_SECRET);
    let recon = reconstruct_all(&outcome);
    let all_recover = !recon.is_empty() && recon.iter().all(|(_, s)| s.as_ref() == Some(&secret));
    let rank_ok = w.rank_check_now();
    let (verdict, detail) = match behavior {
        DealerBehavior::Honest => {
            let ok = outcome.accepted.len() == outcome.participants.len() && all_recover && rank_ok;
            (
                if ok { Verdict::Pass } else { Verdict::AttackSucceeded },
                format!(
                    "{} AGREE, {} shares accepted, every coalition recovers S: {all_recover}",
                    outcome.agreed.len(),
                    outcome.accepted.len()
                ),
            )
        }
        DealerBehavior::Unattested => {
            let ok = outcome.agreed.is_empty() && outcome.accepted.is_empty();
            (
                if ok { Verdict::CheatBlocked } else { Verdict::AttackSucceeded },
                format!("{} AGREE messages; no shares distributed: {}", outcome.agreed.len(), outcome.accepted.is_empty()),
            )
        }
        DealerBehavior::BadShare => {
            let caught = outcome.rejected.iter().any(|(_, i)| *i == 2);
            let ok = caught && outcome.rejected.len() == 1 && all_recover;
            (
                if ok { Verdict::CheatBlocked } else { Verdict::AttackSucceeded },
                format!(
                    "rejected {:?}; remaining coalitions recover S: {all_recover}",
                    outcome.rejected.iter().map(|(_, i)| i).collect::<Vec<_>>()
                ),
            )
        }
        DealerBehavior::Oversized => {
            let ok = outcome.refused.is_some() && outcome.accepted.is_empty();
            (
                if ok { Verdict::CheatBlocked } else { Verdict::AttackSucceeded },
                format!("dealing refused: {}", outcome.refused.clone().unwrap_or_else(|| "no".into())),
            )
        }
    };
    for (coalition, s) in &recon {
        w.note(format!(
            "coalition {coalition:?} reconstructs {}",
            s.as_ref().map(ToString::to_string).unwrap_or_else(|| "nothing".into())
        ));
    }
    let table: serde_json::Map<String, serde_json::Value> = recon
        .iter()
        .map(|(c, s)| (format!("{c:?}"), s.as_ref().map_or(serde_json::Value::Null, |v| json!(v.to_string()))))
        .collect();
    w.output("reconstructions", serde_json::Value::Object(table));
    w.output("rejected", json!(outcome.rejected.iter().map(|(_, i)| i).collect::<Vec<_>>()));
    w.verdict("scenario", verdict, detail);
    Ok(w)
}

/// Reconstruction with `cheaters` participants (P2, P3, ...) sending
/// `share + 1`. The requestor P1 rebuilds the coalition after each detection.
fn participant_scenario(mut w: World, cheaters: usize) -> Result<World, NetError> {
    let outcome = distribute(&mut w, DealerBehavior::Honest)?;
    let bulletin = outcome.bulletin.clone().ok_or_else(|| NetError::Setup("honest distribution failed".into()))?;
    let params = outcome.params.clone();
    let holdings = outcome.accepted.clone();
    let participants = outcome.participants.clone();
    let cheating: Vec<NodeId> = participants.iter().skip(1).take(cheaters).cloned().collect();
    let requestor = participants[0].clone();
    let candidates: Vec<(NodeId, usize)> = participants.iter().enumerate().map(|(i, p)| (p.clone(), i + 1)).collect();
    w.note(format!("{requestor} starts reconstruction; cheaters: {cheating:?}"));

    let mut detections = 0usize;
    let mut recovered = None;
    for _round in 0..participants.len() {
        let coalition = match threshold_dss::trusted_choice(&requestor, &candidates, &params, &mut WorldAttestation(&mut w)) {
            Ok(c) => c,
            Err(e) => {
                w.note(format!("coalition cannot be built: {e}"));
                break;
            }
        };
        let members: Vec<(NodeId, usize)> = coalition.members.clone();
        w.note(format!("coalition {:?}", members.iter().map(|(n, _)| n.as_str()).collect::<Vec<_>>()));
        for (i, (x, _)) in members.iter().enumerate() {
            for (y, _) in &members[i + 1..] {
                if w.node(x).lists.key(y).is_none() {
                    w.run_auth(y, x);
                }
            }
        }
        let mut received: BTreeMap<NodeId, Vec<Share>> = BTreeMap::new();
        let mut caught = false;
        for (sender, index) in &members {
            let own = holdings[sender].clone();
            let is_cheater = cheating.contains(sender);
            if is_cheater && !w.node(sender).tpm.is_compromised() {
                w.compromise(sender);
            }
            let value = if is_cheater { (&own.value + 1u32) % &own.modulus } else { own.value.clone() };
            for (receiver, _) in members.iter().filter(|(r, _)| r != sender) {
                let env = w
                    .send_sealed(sender, receiver, Term::int(format!("share:{index}")), &value.to_bytes_be(), "share")
                    .ok_or_else(|| NetError::Setup(format!("no key between {sender} and {receiver}")))?;
                let opened = w.open_sealed(&env).map(|b| Share::new(*index, BigUint::from_bytes_be(&b), own.modulus.clone()));
                let commitment = bulletin.commitment(*index).expect("commitment per index");
                match opened {
                    Some(s) if crt_vss::verify_share(&s, commitment).unwrap_or(false) => {
                        received.entry(receiver.clone()).or_default().push(s);
                    }
                    _ => {
                        caught = true;
                        w.node_mut(receiver).lists.set_trust(sender, TrustMark::Failed);
                        w.note(format!("{receiver} detects a false share from {sender} (index {index})"));
                    }
                }
            }
        }
        if caught {
            detections += 1;
            w.note("coalition rebuilt without the cheater");
            continue;
        }
        let mut shares = vec![holdings[&requestor].clone()];
        shares.extend(received.remove(&requestor).unwrap_or_default());
        let ctx = coalition.ctx.clone();
        let (_, s) = crt_vss::reconstruct(&shares, &ctx, params.m0(), crt_vss::SplitMode::Masked)
            .map_err(|e| NetError::Setup(e.to_string()))?;
        w.note(format!("{requestor} reconstructs S = {s}"));
        recovered = Some(s);
        break;
    }
    w.output("secret", recovered.as_ref().map_or(serde_json::Value::Null, |v| json!(v.to_string())));
    w.output("detections", json!(detections));
    let rank_ok = w.rank_check_now();
    let correct = recovered.as_ref() == Some(&BigUint::from(FIXTURE_SECRET));
    let (verdict, detail) = match (correct, detections) {
        (true, 0) if rank_ok => (Verdict::Pass, "no cheaters; secret recovered".to_string()),
        (true, d) if d > 0 && rank_ok => {
            (Verdict::CheatBlocked, format!("{d} false share(s) detected; secret recovered after rebuild"))
        }
        (false, _) if recovered.is_none() => {
            (Verdict::ReconstructionImpossible, format!("{detections} cheater(s) excluded; too few honest shares remain"))
        }
        _ => (Verdict::AttackSucceeded, format!("recovered {recovered:?}")),
    };
    w.verdict("scenario", verdict, detail);
    Ok(w)
}

/// Generates Asmuth-Bloom parameters and a nonce bound satisfying the signing
/// sizing contract for `curve`.
pub fn signing_params<R: rand::Rng + ?Sized>(
    curve: &CurveParams,
    t: usize,
    n: usize,
    rng: &mut R,
) -> Result<(ABParams, BigUint), NetError> {
    let q_bits = curve.q.bits();
    let (bound, mask_bits) = if q_bits < 32 { (BigUint::from(8u32), 16) } else { (curve.q.clone(), 64) };
    let m0 = BigUint::from(65537u32);
    let t_bits = u64::from(usize::BITS - t.leading_zeros());
    let need = (t_bits + 1 + bound.bits() + q_bits + m0.bits() + mask_bits + 1).max(2 * (t_bits + bound.bits()) + 1);
    let params = modmath::gen_ab_params(t, n, &m0, need, rng).map_err(|e| NetError::Setup(e.to_string()))?;
    Ok((params, bound))
}

const SIGN_ATTEMPTS: usize = 16;

fn signing_scenario(mut w: World, cfg: &ScenarioConfig, tamper: bool) -> Result<World, NetError> {
    let curve = CurveParams::by_name(&cfg.curve).ok_or_else(|| NetError::Setup(format!("unknown curve {:?}", cfg.curve)))?;
    if cfg.t < 1 || cfg.t > cfg.n {
        return Err(NetError::Setup(format!("need 1 <= t <= n, got t={} n={}", cfg.t, cfg.n)));
    }
    let (params, bound) = signing_params(&curve, cfg.t, cfg.n, w.rng())?;
    let secret = w.rng().gen_biguint_below(params.m0());
    let mut key_rng =
        <rand_chacha::ChaCha20Rng as rand::SeedableRng>::from_rng(&mut *w.rng()).map_err(|e| NetError::Setup(e.to_string()))?;
    let key = SigningKeyMaterial::generate(&secret, &params, &curve, &bound, &mut key_rng)
        .map_err(|e| NetError::Setup(e.to_string()))?;
    let m = threshold_dss::digest_scalar(MessageDigest::Sha1, cfg.message.as_bytes(), &curve.q);

    let requestor = w.add_node("R");
    let holders: Vec<NodeId> = (1..=cfg.n).map(|i| w.add_node(&format!("P{i}"))).collect();
    let mut all = vec![requestor.clone()];
    all.extend(holders.iter().cloned());
    w.connect_all(&all);
    let candidates: Vec<(NodeId, usize)> = holders.iter().enumerate().map(|(i, p)| (p.clone(), i + 1)).collect();
    let coalition = threshold_dss::trusted_choice(&requestor, &candidates, &params, &mut WorldAttestation(&mut w))
        .map_err(|e| NetError::Setup(e.to_string()))?;
    let members = coalition.members.clone();
    let ctx = coalition.ctx.clone();
    w.note(format!("coalition {:?}, curve {}", members.iter().map(|(n, _)| n.as_str()).collect::<Vec<_>>(), cfg.curve));

    for (p, _) in &members {
        let term = Term::tuple(vec![
            Term::id("R"),
            Term::id(p.as_str()),
            Term::label("SIGN"),
            Term::int(format!("m:{}", hexint::encode(&m))),
        ]);
        w.send_clear(&requestor, p, term, json!({ "type": "sign_request", "m": hexint::encode(&m) }));
    }
    for (i, (x, _)) in members.iter().enumerate() {
        for (y, _) in &members[i + 1..] {
            if w.node(x).lists.key(y).is_none() {
                w.run_auth(y, x);
            }
        }
    }
    threshold_dss::check_sizing(ctx.m_c(), ctx.len(), &bound, &curve.q, &key.d).map_err(|e| NetError::Setup(e.to_string()))?;

    let mut result = Err(DssError::NoValidCandidate);
    let mut k_total = BigUint::default();
    let one = BigUint::one();
    for attempt in 0..SIGN_ATTEMPTS {
        let rho: Vec<BigUint> = members.iter().map(|_| w.rng().gen_biguint_range(&one, &bound)).collect();
        let sigma: Vec<BigUint> = members.iter().map(|_| w.rng().gen_biguint_range(&one, &bound)).collect();
        let mut states: Vec<MemberState> = members
            .iter()
            .enumerate()
            .map(|(pos, (_, index))| {
                let mut s = MemberState::new(key.key_share(*index).expect("key share"));
                s.k_share = Some(&rho[pos] % &s.modulus);
                s.a_share = Some(&sigma[pos] % &s.modulus);
                s
            })
            .collect();
        for (j, (sender, sj)) in members.iter().enumerate() {
            for (i, (receiver, si)) in members.iter().enumerate().filter(|(i, _)| *i != j) {
                let modulus = &states[i].modulus;
                let body = serde_json::to_vec(&json!({
                    "rho": hexint::encode(&(&rho[j] % modulus)),
                    "sigma": hexint::encode(&(&sigma[j] % modulus)),
                }))
                .expect("json");
                let label = Term::pair(
                    Term::int(format!("contrib:rho:{sj}:{si}:{attempt}")),
                    Term::int(format!("contrib:sigma:{sj}:{si}:{attempt}")),
                );
                let env = w
                    .send_sealed(sender, receiver, label, &body, "nonce_contribution")
                    .ok_or_else(|| NetError::Setup("no pairwise key".into()))?;
                let opened = w.open_sealed(&env).ok_or_else(|| NetError::Setup("contribution does not decrypt".into()))?;
                let v: serde_json::Value = serde_json::from_slice(&opened).map_err(|e| NetError::Setup(e.to_string()))?;
                let field = |name: &str| {
                    v[name].as_str().and_then(hexint::decode).ok_or_else(|| NetError::Setup("bad contribution".into()))
                };
                let (r, s) = (field("rho")?, field("sigma")?);
                let st = &mut states[i];
                st.k_share = st.k_share.take().map(|k| (k + r) % &st.modulus);
                st.a_share = st.a_share.take().map(|a| (a + s) % &st.modulus);
            }
        }
        let harness = threshold_dss::joint_nonce_from(&ctx, &rho, &sigma).map_err(|e| NetError::Setup(e.to_string()))?;
        if states.iter().zip(&harness.k_shares).any(|(s, h)| s.k_share.as_ref() != Some(&h.value)) {
            return Err(NetError::Setup("member nonce shares disagree with the pointwise sum".into()));
        }
        k_total = harness.k();

        let mut round1 = Vec::new();
        for ((p, index), st) in members.iter().zip(&states) {
            let msg = threshold_dss::round1(st, &ctx, &curve).map_err(|e| NetError::Setup(e.to_string()))?;
            let w_x = msg.w.x().map(hexint::encode).unwrap_or_else(|| "O".into());
            let term = Term::tuple(vec![
                Term::id(p.as_str()),
                Term::id("R"),
                Term::label("R1"),
                Term::int(format!("v:{index}:{}", hexint::encode(&msg.v))),
                Term::int(format!("w:{index}:{w_x}")),
            ]);
            w.send_clear(p, &requestor, term, json!({ "type": "round1", "msg": msg }));
            round1.push(msg);
        }
        let candidates_r = match threshold_dss::combine_round1(&round1, &ctx, &curve) {
            Ok(c) => c,
            Err(DssError::NonInvertibleKA) => {
                w.note("ka = 0 mod q; nonces resampled");
                continue;
            }
            Err(e) => return Err(NetError::Setup(e.to_string())),
        };
        let listed: Vec<String> = candidates_r.iter().map(hexint::encode).collect();
        let mut round2 = Vec::new();
        for (pos, ((p, index), st)) in members.iter().zip(&states).enumerate() {
            let term = Term::tuple(vec![
                Term::id("R"),
                Term::id(p.as_str()),
                Term::label("CANDIDATES"),
                Term::int(format!("r:{}", listed.join(","))),
            ]);
            w.send_clear(&requestor, p, term, json!({ "type": "candidates", "r": listed }));
            let mut msg = threshold_dss::round2(st, &candidates_r, &m).map_err(|e| NetError::Setup(e.to_string()))?;
            if tamper && pos == 0 {
                if !w.node(p).tpm.is_compromised() {
                    w.compromise(p);
                }
                w.note(format!("{p} adds 1 to each signature share"));
                for s in &mut msg.sig_candidates {
                    *s = (&*s + 1u32) % &st.modulus;
                }
            }
            let shares: Vec<String> = msg.sig_candidates.iter().map(hexint::encode).collect();
            let term = Term::tuple(vec![
                Term::id(p.as_str()),
                Term::id("R"),
                Term::label("R2"),
                Term::int(format!("sig:{index}:{}", shares.join(","))),
            ]);
            w.send_clear(p, &requestor, term, json!({ "type": "round2", "msg": msg }));
            round2.push(msg);
        }
        result = threshold_dss::assemble_and_select(&round2, &candidates_r, &key.public, &m, &ctx, &curve);
        if result == Err(DssError::DegenerateNonce) {
            w.note("candidate with r = 0 or s = 0; nonces resampled");
            continue;
        }
        break;
    }

    let rank_ok = w.rank_check_now();
    let (verdict, detail) = match &result {
        Ok((sig, kappa)) => {
            let verified = curve::dss_verify(&key.public, &m, sig, &curve);
            let central = curve::dss_sign_central(&key.d, &k_total, &m, &curve).ok();
            let matches = central.as_ref() == Some(sig);
            w.output("signature", serde_json::to_value(SignatureOutput::new(sig, *kappa, &curve)).expect("json"));
            w.output("public_key", serde_json::to_value(&key.public).expect("json"));
            w.output("m", json!(hexint::encode(&m)));
            w.output("verified", json!(verified));
            let ok = verified && (matches || tamper) && rank_ok;
            let verdict = match (ok, tamper) {
                (true, false) => Verdict::Pass,
                (true, true) => Verdict::CheatBlocked,
                (false, _) => Verdict::AttackSucceeded,
            };
            (verdict, format!("kappa = {kappa}, verifies {verified}, matches central signer {matches}"))
        }
        Err(e) => {
            w.output("error", json!(e.to_string()));
            let blocked = tamper && *e == DssError::NoValidCandidate;
            (if blocked { Verdict::CheatBlocked } else { Verdict::AttackSucceeded }, e.to_string())
        }
    };
    w.verdict("scenario", verdict, detail);
    Ok(w)
}
