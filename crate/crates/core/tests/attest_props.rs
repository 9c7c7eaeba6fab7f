use std::collections::BTreeMap;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use trustshare::attest::{
    auth_step, neighbor_update, run_direct, AuthBody, AuthEnv, AuthInput, AuthNode, AuthPacket, ConfigSet, NeighborUpdate,
    NodeId, Role, SessionState, TrustLists, TrustMark,
};
use trustshare::hexint;

fn id(s: &str) -> NodeId {
    NodeId::new(s)
}

fn pair(seed: u64) -> (AuthEnv, BTreeMap<NodeId, AuthNode>) {
    let mut env = AuthEnv::default();
    let cs = ConfigSet::new(["os-a", "os-b"]);
    let mut a = AuthNode::enrolled(id("A"), "os-a", cs.clone(), &mut env, seed);
    let mut b = AuthNode::enrolled(id("B"), "os-b", cs, &mut env, seed ^ 0x5555);
    a.lists.add_neighbor(id("B"));
    b.lists.add_neighbor(id("A"));
    (env, [(id("A"), a), (id("B"), b)].into_iter().collect())
}

#[test]
fn list_random_walk_stays_consistent() {
    let mut rng = ChaCha20Rng::seed_from_u64(10_000);
    let names: Vec<NodeId> = (0..12).map(|i| id(&format!("n{i}"))).collect();
    let mut lists = TrustLists::new(names[..3].iter().cloned());
    for step in 0..10_000 {
        let who = names[rng.gen_range(0..names.len())].clone();
        match rng.gen_range(0..6) {
            0 => neighbor_update(&mut lists, NeighborUpdate::Add(who)),
            1 => neighbor_update(&mut lists, NeighborUpdate::Remove(who)),
            2 if rng.gen_bool(0.05) => neighbor_update(&mut lists, NeighborUpdate::ResetEpoch),
            3 => {
                let mark = [TrustMark::Failed, TrustMark::Unknown, TrustMark::Trusted][rng.gen_range(0..3)];
                let accepted = lists.set_trust(&who, mark);
                assert_eq!(accepted, lists.is_neighbor(&who));
            }
            4 => {
                let accepted = lists.set_key(&who, rng.gen::<u64>().into());
                assert_eq!(accepted, lists.is_neighbor(&who));
            }
            _ => {
                if !lists.is_neighbor(&who) {
                    assert_eq!(lists.trust(&who), TrustMark::Unknown);
                    assert!(lists.key(&who).is_none());
                }
            }
        }
        assert!(lists.is_consistent(), "step {step}");
        assert!(lists.keys().all(|(k, _)| lists.is_neighbor(k)));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn honest_runs_agree_on_unseen_keys(seed in any::<u64>()) {
        let (env, mut nodes) = pair(seed);
        let log = run_direct(&mut nodes, &env, &id("A"), &id("B"));
        let (a, b) = (&nodes[&id("A")], &nodes[&id("B")]);
        prop_assert_eq!(a.session(&id("B"), Role::Initiator).unwrap().state, SessionState::Done);
        prop_assert_eq!(b.session(&id("A"), Role::Responder).unwrap().state, SessionState::Done);
        let key = a.lists.key(&id("B")).cloned().unwrap();
        prop_assert_eq!(Some(&key), b.lists.key(&id("A")));
        let key_hex = hexint::encode(&key);
        let key_dec = key.to_string();
        for p in &log {
            let text = serde_json::to_string(p).unwrap();
            prop_assert!(!text.contains(&key_hex) && !text.contains(&key_dec));
        }
    }

    /// Delivers the packets of an interleaved run in a random order, with
    /// duplicates, and checks the state-machine safety rules.
    #[test]
    fn scrambled_delivery_is_safe(seed in any::<u64>()) {
        let (env, mut nodes) = pair(seed);
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut pool: Vec<AuthPacket> = auth_step(nodes.get_mut(&id("A")).unwrap(), &env, AuthInput::Start(id("B"))).unwrap();
        let mut delivered_m3 = false;
        let mut finish_sent = false;
        for _ in 0..40 {
            if pool.is_empty() {
                break;
            }
            let pick = rng.gen_range(0..pool.len());
            let packet = if rng.gen_bool(0.3) { pool[pick].clone() } else { pool.remove(pick) };
            let number = packet.number();
            let target = packet.to.clone();
            let out = auth_step(nodes.get_mut(&target).unwrap(), &env, AuthInput::Receive(packet)).unwrap_or_default();
            if number == 3 {
                delivered_m3 = true;
            }
            for p in &out {
                if p.number() == 4 {
                    prop_assert!(delivered_m3, "message 4 before any message 3");
                }
                if matches!(p.body, AuthBody::Finish { .. }) {
                    finish_sent = true;
                }
            }
            pool.extend(out);
        }
        let b_state = nodes[&id("B")].session(&id("A"), Role::Responder).map(|s| s.state);
        if b_state == Some(SessionState::Done) {
            prop_assert!(finish_sent);
            prop_assert_eq!(nodes[&id("A")].session(&id("B"), Role::Initiator).unwrap().state, SessionState::Done);
        }
    }
}
