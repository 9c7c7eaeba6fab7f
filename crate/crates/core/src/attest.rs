//! Simulated trusted platform and the five-message authentication framework.
//!
//! Each node owns a [`TpmState`] (PCRs, an AIK, a DAA credential and a
//! configuration value) and [`TrustLists`] (`N`, `T`, `K`). DAA and PBA are
//! signature mocks: DAA verification fails once the issuing TPM is revoked,
//! PBA verification fails unless the configuration was in the agreed set.
//! AIK signatures are real DSS signatures on secp256k1 with deterministic
//! nonces. Symmetric encryption is a SHA-256 keystream with a tag.
//!
//! Messages:
//! 1. `i -> j: INIT`
//! 2. `j -> i: n1`
//! 3. `i -> j: im, DS, PS, digest, K_INFO_I`
//! 4. `j -> i: Sig_AIK_j(K_INFO_J || id_j), {id_j || n2}_k`
//! 5. `i -> j: {id_i || n2}_k`

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::OnceLock;

use num_bigint::{BigUint, RandBigInt};
use num_traits::One;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use sha1::Sha1;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::curve::{self, CurveParams, CurvePoint, DssSignature};
use crate::hexint;
use crate::threshold_dss::{digest_scalar, MessageDigest};

pub const PCR_SLOTS: usize = 16;

pub type Digest20 = [u8; 20];

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AttestError {
    #[error("PCR slot {0} out of range")]
    BadSlot(usize),
    #[error("TPM holds no DAA credential")]
    NoCredential,
    #[error("configuration set is empty")]
    EmptyConfigSet,
    #[error("message dropped: {0}")]
    DropSilently(&'static str),
    #[error("authentication failed: {0}")]
    AuthFailed(&'static str),
    #[error("message does not fit any session state")]
    Unexpected,
}

pub type Result<T> = std::result::Result<T, AttestError>;

#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(String);

impl NodeId {
    pub fn new(id: impl Into<String>) -> Self {
        NodeId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Debug for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.0)
    }
}

/// Entry of the trust list: `1` trusted, `0` not authenticated, `-1` failed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(into = "i8", try_from = "i8")]
pub enum TrustMark {
    Failed,
    #[default]
    Unknown,
    Trusted,
}

impl From<TrustMark> for i8 {
    fn from(mark: TrustMark) -> i8 {
        match mark {
            TrustMark::Failed => -1,
            TrustMark::Unknown => 0,
            TrustMark::Trusted => 1,
        }
    }
}

impl TryFrom<i8> for TrustMark {
    type Error = String;

    fn try_from(v: i8) -> std::result::Result<Self, String> {
        match v {
            -1 => Ok(TrustMark::Failed),
            0 => Ok(TrustMark::Unknown),
            1 => Ok(TrustMark::Trusted),
            other => Err(format!("invalid trust mark {other}")),
        }
    }
}

/// 128-bit protocol nonce.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Nonce(#[serde(with = "hex::serde")] pub [u8; 16]);

impl Nonce {
    pub fn random<R: RngCore + ?Sized>(rng: &mut R) -> Self {
        let mut bytes = [0u8; 16];
        rng.fill_bytes(&mut bytes);
        Nonce(bytes)
    }
}

impl fmt::Debug for Nonce {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&hex::encode(self.0))
    }
}

fn sha1_of(parts: &[&[u8]]) -> Digest20 {
    let mut h = Sha1::new();
    for p in parts {
        h.update(p);
    }
    h.finalize().into()
}

fn put(buf: &mut Vec<u8>, bytes: &[u8]) {
    buf.extend_from_slice(&(bytes.len() as u32).to_be_bytes());
    buf.extend_from_slice(bytes);
}

/// Curve used for AIK and credential signatures.
pub fn aik_curve() -> &'static CurveParams {
    static CURVE: OnceLock<CurveParams> = OnceLock::new();
    CURVE.get_or_init(CurveParams::secp256k1)
}

/// DSS key pair with deterministic nonces, hashing messages with SHA-256.
#[derive(Clone)]
pub struct SigningKey {
    secret: BigUint,
    public: CurvePoint,
}

impl SigningKey {
    pub fn generate<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let curve = aik_curve();
        let secret = rng.gen_biguint_range(&BigUint::one(), &curve.q);
        SigningKey { public: curve.mul_base(&secret), secret }
    }

    pub fn public(&self) -> &CurvePoint {
        &self.public
    }

    pub fn sign(&self, msg: &[u8]) -> DssSignature {
        let curve = aik_curve();
        let m = digest_scalar(MessageDigest::Sha256, msg, &curve.q);
        let secret = self.secret.to_bytes_be();
        for counter in 0u32.. {
            let seed = Sha256::new().chain_update(&secret).chain_update(msg).chain_update(counter.to_be_bytes()).finalize();
            let k = BigUint::from_bytes_be(&seed) % &curve.q;
            if let Ok(sig) = curve::dss_sign_central(&self.secret, &k, &m, curve) {
                return sig;
            }
        }
        unreachable!("nonce counter exhausted")
    }
}

impl fmt::Debug for SigningKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SigningKey").field("public", &self.public).finish_non_exhaustive()
    }
}

pub fn signature_valid(public: &CurvePoint, msg: &[u8], sig: &DssSignature) -> bool {
    let curve = aik_curve();
    curve::dss_verify(public, &digest_scalar(MessageDigest::Sha256, msg, &curve.q), sig, curve)
}

#[derive(Debug, Clone)]
pub struct DaaCredential {
    handle: u64,
    key: SigningKey,
}

impl DaaCredential {
    pub fn handle(&self) -> u64 {
        self.handle
    }
}

/// Credential issuer and revocation oracle consulted by DAA verifiers.
#[derive(Debug, Clone, Default)]
pub struct DaaGroup {
    members: BTreeMap<u64, CurvePoint>,
    revoked: BTreeSet<u64>,
}

impl DaaGroup {
    pub fn issue<R: Rng + ?Sized>(&mut self, rng: &mut R) -> DaaCredential {
        let handle = self.members.len() as u64 + 1;
        let key = SigningKey::generate(rng);
        self.members.insert(handle, key.public().clone());
        DaaCredential { handle, key }
    }

    pub fn revoke(&mut self, handle: u64) {
        self.revoked.insert(handle);
    }

    pub fn is_revoked(&self, handle: u64) -> bool {
        self.revoked.contains(&handle)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DaaSignature {
    pub handle: u64,
    pub sig: DssSignature,
}

fn daa_message(im: &Digest20) -> Vec<u8> {
    [b"DAA".as_slice(), im].concat()
}

/// Agreed configuration set `CS`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfigSet(BTreeSet<String>);

impl ConfigSet {
    pub fn new<I: IntoIterator<Item = S>, S: Into<String>>(values: I) -> Self {
        ConfigSet(values.into_iter().map(Into::into).collect())
    }

    pub fn contains(&self, value: &str) -> bool {
        self.0.contains(value)
    }

    pub fn insert(&mut self, value: impl Into<String>) {
        self.0.insert(value.into());
    }

    pub fn remove(&mut self, value: &str) {
        self.0.remove(value);
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn digest(&self) -> Digest20 {
        let mut buf = Vec::new();
        for v in &self.0 {
            put(&mut buf, v.as_bytes());
        }
        sha1_of(&[&buf])
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PbaSignature {
    pub member: bool,
    pub sig: DssSignature,
}

fn pba_message(im: &Digest20, cs: &ConfigSet, member: bool) -> Vec<u8> {
    [b"PBA".as_slice(), im, &cs.digest(), &[member as u8]].concat()
}

pub struct TpmState {
    pcrs: [Digest20; PCR_SLOTS],
    aik: SigningKey,
    daa: Option<DaaCredential>,
    config_value: String,
    compromised: bool,
}

impl TpmState {
    pub fn new<R: Rng + ?Sized>(config_value: impl Into<String>, rng: &mut R) -> Self {
        TpmState {
            pcrs: [[0; 20]; PCR_SLOTS],
            aik: SigningKey::generate(rng),
            daa: None,
            config_value: config_value.into(),
            compromised: false,
        }
    }

    pub fn enroll<R: Rng + ?Sized>(&mut self, group: &mut DaaGroup, rng: &mut R) {
        self.daa = Some(group.issue(rng));
    }

    pub fn pcr(&self, slot: usize) -> Option<&Digest20> {
        self.pcrs.get(slot)
    }

    /// `PCR[slot] = SHA-1(PCR[slot] || measurement)`.
    pub fn pcr_extend(&mut self, slot: usize, measurement: &[u8]) -> Result<Digest20> {
        let pcr = self.pcrs.get_mut(slot).ok_or(AttestError::BadSlot(slot))?;
        *pcr = sha1_of(&[pcr.as_slice(), measurement]);
        Ok(*pcr)
    }

    /// Digest of all PCRs, the quoted value that enters `im`.
    pub fn pcr_composite(&self) -> Digest20 {
        sha1_of(&[self.pcrs.concat().as_slice()])
    }

    pub fn aik_public(&self) -> &CurvePoint {
        self.aik.public()
    }

    pub fn aik_sign(&self, msg: &[u8]) -> DssSignature {
        self.aik.sign(msg)
    }

    pub fn config_value(&self) -> &str {
        &self.config_value
    }

    pub fn set_config_value(&mut self, value: impl Into<String>) {
        self.config_value = value.into();
    }

    pub fn is_compromised(&self) -> bool {
        self.compromised
    }

    /// Sets the compromise flag and revokes the DAA credential.
    pub fn compromise(&mut self, group: &mut DaaGroup) {
        self.compromised = true;
        if let Some(cred) = &self.daa {
            group.revoke(cred.handle);
        }
    }

    pub fn daa_sign(&self, im: &Digest20) -> Result<DaaSignature> {
        let cred = self.daa.as_ref().ok_or(AttestError::NoCredential)?;
        Ok(DaaSignature { handle: cred.handle, sig: cred.key.sign(&daa_message(im)) })
    }

    pub fn pba_sign(&self, im: &Digest20, cs: &ConfigSet) -> Result<PbaSignature> {
        if cs.is_empty() {
            return Err(AttestError::EmptyConfigSet);
        }
        let member = cs.contains(&self.config_value);
        Ok(PbaSignature { member, sig: self.aik.sign(&pba_message(im, cs, member)) })
    }
}

impl fmt::Debug for TpmState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TpmState").field("aik", &self.aik).field("compromised", &self.compromised).finish_non_exhaustive()
    }
}

pub fn daa_verify(ds: &DaaSignature, im: &Digest20, group: &DaaGroup) -> bool {
    if group.is_revoked(ds.handle) {
        return false;
    }
    group.members.get(&ds.handle).is_some_and(|public| signature_valid(public, &daa_message(im), &ds.sig))
}

pub fn pba_verify(ps: &PbaSignature, im: &Digest20, cs: &ConfigSet, aik_public: &CurvePoint) -> bool {
    ps.member && signature_valid(aik_public, &pba_message(im, cs, true), &ps.sig)
}

/// Neighbor list `N`, trust list `T` and key list `K` with `dom(T), dom(K)` inside `N`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct TrustLists {
    neighbors: BTreeSet<NodeId>,
    trust: BTreeMap<NodeId, TrustMark>,
    #[serde(skip)]
    keys: BTreeMap<NodeId, BigUint>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NeighborUpdate {
    Add(NodeId),
    Remove(NodeId),
    ResetEpoch,
}

impl TrustLists {
    pub fn new<I: IntoIterator<Item = NodeId>>(neighbors: I) -> Self {
        let mut lists = TrustLists::default();
        for n in neighbors {
            lists.add_neighbor(n);
        }
        lists
    }

    pub fn add_neighbor(&mut self, id: NodeId) {
        self.trust.entry(id.clone()).or_default();
        self.neighbors.insert(id);
    }

    pub fn remove_neighbor(&mut self, id: &NodeId) {
        self.neighbors.remove(id);
        self.trust.remove(id);
        self.keys.remove(id);
    }

    /// Forgets all authentication results, keeping `N`.
    pub fn reset_epoch(&mut self) {
        self.trust.values_mut().for_each(|t| *t = TrustMark::Unknown);
        self.keys.clear();
    }

    pub fn is_neighbor(&self, id: &NodeId) -> bool {
        self.neighbors.contains(id)
    }

    pub fn neighbors(&self) -> impl Iterator<Item = &NodeId> {
        self.neighbors.iter()
    }

    pub fn trust(&self, id: &NodeId) -> TrustMark {
        self.trust.get(id).copied().unwrap_or_default()
    }

    /// Returns false (and changes nothing) for non-neighbors.
    pub fn set_trust(&mut self, id: &NodeId, mark: TrustMark) -> bool {
        match self.trust.get_mut(id) {
            Some(t) => {
                *t = mark;
                true
            }
            None => false,
        }
    }

    pub fn key(&self, id: &NodeId) -> Option<&BigUint> {
        self.keys.get(id)
    }

    pub fn set_key(&mut self, id: &NodeId, key: BigUint) -> bool {
        if !self.neighbors.contains(id) {
            return false;
        }
        self.keys.insert(id.clone(), key);
        true
    }

    pub fn keys(&self) -> impl Iterator<Item = (&NodeId, &BigUint)> {
        self.keys.iter()
    }

    pub fn is_consistent(&self) -> bool {
        self.trust.keys().all(|id| self.neighbors.contains(id)) && self.keys.keys().all(|id| self.neighbors.contains(id))
    }
}

pub fn neighbor_update(lists: &mut TrustLists, update: NeighborUpdate) {
    match update {
        NeighborUpdate::Add(id) => lists.add_neighbor(id),
        NeighborUpdate::Remove(id) => lists.remove_neighbor(&id),
        NeighborUpdate::ResetEpoch => lists.reset_epoch(),
    }
}

/// Diffie-Hellman group `(g, p)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DhGroup {
    #[serde(with = "hexint")]
    pub p: BigUint,
    #[serde(with = "hexint")]
    pub g: BigUint,
}

impl DhGroup {
    /// 64-bit safe prime `p = 2^64 - 445` with `g = 4` generating the order-`(p-1)/2` subgroup.
    pub fn test_group() -> Self {
        DhGroup { p: BigUint::from(0xffff_ffff_ffff_fa43u64), g: BigUint::from(4u32) }
    }

    pub fn secret<R: Rng + ?Sized>(&self, rng: &mut R) -> BigUint {
        rng.gen_biguint_range(&BigUint::from(2u32), &(&self.p - 1u32))
    }

    pub fn public(&self, secret: &BigUint) -> BigUint {
        self.g.modpow(secret, &self.p)
    }

    pub fn shared(&self, peer_public: &BigUint, secret: &BigUint) -> BigUint {
        peer_public.modpow(secret, &self.p)
    }

    pub fn key_info(&self, secret: &BigUint) -> KeyInfo {
        KeyInfo { g: self.g.clone(), p: self.p.clone(), public: self.public(secret) }
    }
}

impl Default for DhGroup {
    fn default() -> Self {
        DhGroup::test_group()
    }
}

/// `K_INFO = (g, p, g^x mod p)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyInfo {
    #[serde(with = "hexint")]
    pub g: BigUint,
    #[serde(with = "hexint")]
    pub p: BigUint,
    #[serde(with = "hexint")]
    pub public: BigUint,
}

impl KeyInfo {
    fn encode(&self, buf: &mut Vec<u8>) {
        put(buf, &self.g.to_bytes_be());
        put(buf, &self.p.to_bytes_be());
        put(buf, &self.public.to_bytes_be());
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ciphertext {
    #[serde(with = "hex::serde")]
    pub body: Vec<u8>,
    #[serde(with = "hex::serde")]
    pub tag: [u8; 8],
}

fn cipher_key(key: &BigUint) -> [u8; 32] {
    Sha256::new().chain_update(b"session").chain_update(key.to_bytes_be()).finalize().into()
}

fn keystream(k: &[u8; 32], len: usize) -> Vec<u8> {
    (0u32..).flat_map(|block| Sha256::new().chain_update(k).chain_update(block.to_be_bytes()).finalize()).take(len).collect()
}

fn cipher_tag(k: &[u8; 32], body: &[u8]) -> [u8; 8] {
    let full = Sha256::new().chain_update(b"tag").chain_update(k).chain_update(body).finalize();
    full[..8].try_into().expect("8-byte prefix")
}

pub fn seal(key: &BigUint, plaintext: &[u8]) -> Ciphertext {
    let k = cipher_key(key);
    let body: Vec<u8> = plaintext.iter().zip(keystream(&k, plaintext.len())).map(|(p, s)| p ^ s).collect();
    Ciphertext { tag: cipher_tag(&k, &body), body }
}

pub fn open(key: &BigUint, ct: &Ciphertext) -> Option<Vec<u8>> {
    let k = cipher_key(key);
    if cipher_tag(&k, &ct.body) != ct.tag {
        return None;
    }
    Some(ct.body.iter().zip(keystream(&k, ct.body.len())).map(|(c, s)| c ^ s).collect())
}

/// Plaintext `id || n2` of messages 4 and 5.
pub fn encode_id_nonce(id: &NodeId, n: &Nonce) -> Vec<u8> {
    let mut buf = Vec::new();
    put(&mut buf, id.as_str().as_bytes());
    buf.extend_from_slice(&n.0);
    buf
}

pub fn decode_id_nonce(bytes: &[u8]) -> Option<(NodeId, Nonce)> {
    let len = u32::from_be_bytes(bytes.get(..4)?.try_into().ok()?) as usize;
    let id = std::str::from_utf8(bytes.get(4..4 + len)?).ok()?;
    let nonce: [u8; 16] = bytes.get(4 + len..)?.try_into().ok()?;
    Some((NodeId::new(id), Nonce(nonce)))
}

/// `im = SHA-1(id || n1 || PCR)`.
pub fn measure(id: &NodeId, n1: &Nonce, pcr: &Digest20) -> Digest20 {
    sha1_of(&[id.as_str().as_bytes(), &n1.0, pcr])
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttestationBundle {
    #[serde(with = "hex::serde")]
    pub im: Digest20,
    pub ds: DaaSignature,
    pub ps: PbaSignature,
    pub key_info: Option<KeyInfo>,
}

fn put_sig(buf: &mut Vec<u8>, sig: &DssSignature) {
    put(buf, &sig.r.to_bytes_be());
    put(buf, &sig.s.to_bytes_be());
}

/// `SHA-1(id || K_INFO || im || DS || PS)`, with `K_INFO` left out when absent.
pub fn bundle_digest(id: &NodeId, bundle: &AttestationBundle) -> Digest20 {
    let mut buf = Vec::new();
    put(&mut buf, id.as_str().as_bytes());
    if let Some(info) = &bundle.key_info {
        info.encode(&mut buf);
    }
    buf.extend_from_slice(&bundle.im);
    buf.extend_from_slice(&bundle.ds.handle.to_be_bytes());
    put_sig(&mut buf, &bundle.ds.sig);
    buf.push(bundle.ps.member as u8);
    put_sig(&mut buf, &bundle.ps.sig);
    sha1_of(&[&buf])
}

/// Bytes signed by the responder's AIK in message 4: `K_INFO_J || id_j`.
pub fn key_info_message(info: Option<&KeyInfo>, id: &NodeId) -> Vec<u8> {
    let mut buf = b"KINFO".to_vec();
    if let Some(info) = info {
        info.encode(&mut buf);
    }
    put(&mut buf, id.as_str().as_bytes());
    buf
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum AuthBody {
    Init,
    Challenge {
        n1: Nonce,
    },
    Attest {
        bundle: AttestationBundle,
        #[serde(with = "hex::serde")]
        digest: Digest20,
    },
    Confirm {
        key_info: Option<KeyInfo>,
        key_sig: DssSignature,
        enc: Ciphertext,
    },
    Finish {
        enc: Ciphertext,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuthPacket {
    pub from: NodeId,
    pub to: NodeId,
    pub body: AuthBody,
}

impl AuthPacket {
    pub fn number(&self) -> u8 {
        match self.body {
            AuthBody::Init => 1,
            AuthBody::Challenge { .. } => 2,
            AuthBody::Attest { .. } => 3,
            AuthBody::Confirm { .. } => 4,
            AuthBody::Finish { .. } => 5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Initiator,
    Responder,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SessionState {
    InitSent,
    Challenged,
    Attested,
    Keyed,
    Done,
    Failed,
}

#[derive(Debug, Clone)]
pub struct AuthSession {
    pub role: Role,
    pub peer: NodeId,
    pub n1: Option<Nonce>,
    pub n2: Option<Nonce>,
    pub state: SessionState,
    pub key: Option<BigUint>,
    pub own_public: Option<BigUint>,
    pub peer_public: Option<BigUint>,
    dh_secret: Option<BigUint>,
}

impl AuthSession {
    fn new(role: Role, peer: NodeId, state: SessionState) -> Self {
        AuthSession { role, peer, n1: None, n2: None, state, key: None, own_public: None, peer_public: None, dh_secret: None }
    }

    /// The session's DH exponent. Only fault-injection scenarios read this.
    pub fn dh_secret(&self) -> Option<&BigUint> {
        self.dh_secret.as_ref()
    }
}

/// Public infrastructure shared by all nodes: DH group, DAA issuer and the
/// AIK directory.
#[derive(Debug, Clone, Default)]
pub struct AuthEnv {
    pub dh: DhGroup,
    pub daa: DaaGroup,
    pub directory: BTreeMap<NodeId, CurvePoint>,
}

pub struct AuthNode {
    pub id: NodeId,
    pub tpm: TpmState,
    pub lists: TrustLists,
    pub cs: ConfigSet,
    sessions: BTreeMap<(NodeId, Role), AuthSession>,
    rng: ChaCha20Rng,
}

impl AuthNode {
    pub fn new(id: NodeId, tpm: TpmState, cs: ConfigSet, seed: u64) -> Self {
        AuthNode { id, tpm, lists: TrustLists::default(), cs, sessions: BTreeMap::new(), rng: ChaCha20Rng::seed_from_u64(seed) }
    }

    /// Creates a node with a fresh TPM, enrolls it with the DAA issuer and
    /// publishes its AIK.
    pub fn enrolled(id: NodeId, config_value: &str, cs: ConfigSet, env: &mut AuthEnv, seed: u64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut tpm = TpmState::new(config_value, &mut rng);
        tpm.enroll(&mut env.daa, &mut rng);
        env.directory.insert(id.clone(), tpm.aik_public().clone());
        AuthNode::new(id, tpm, cs, rng.next_u64())
    }

    pub fn session(&self, peer: &NodeId, role: Role) -> Option<&AuthSession> {
        self.sessions.get(&(peer.clone(), role))
    }

    pub fn sessions(&self) -> impl Iterator<Item = &AuthSession> {
        self.sessions.values()
    }

    pub fn rng(&mut self) -> &mut ChaCha20Rng {
        &mut self.rng
    }
}

impl fmt::Debug for AuthNode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AuthNode").field("id", &self.id).field("lists", &self.lists).finish_non_exhaustive()
    }
}

#[derive(Debug, Clone)]
pub enum AuthInput {
    Start(NodeId),
    Receive(AuthPacket),
}

/// Advances `node` by one input. Errors mean no reply is sent.
pub fn auth_step(node: &mut AuthNode, env: &AuthEnv, input: AuthInput) -> Result<Vec<AuthPacket>> {
    match input {
        AuthInput::Start(peer) => start(node, peer),
        AuthInput::Receive(packet) => {
            if packet.to != node.id {
                return Err(AttestError::DropSilently("addressed to another node"));
            }
            let from = packet.from.clone();
            match packet.body {
                AuthBody::Init => on_init(node, from),
                AuthBody::Challenge { n1 } => on_challenge(node, env, from, n1),
                AuthBody::Attest { bundle, digest } => on_attest(node, env, from, bundle, digest),
                AuthBody::Confirm { key_info, key_sig, enc } => on_confirm(node, env, from, key_info, key_sig, enc),
                AuthBody::Finish { enc } => on_finish(node, from, enc),
            }
        }
    }
}

fn reply(node: &AuthNode, to: &NodeId, body: AuthBody) -> Vec<AuthPacket> {
    vec![AuthPacket { from: node.id.clone(), to: to.clone(), body }]
}

fn session_in<'a>(node: &'a mut AuthNode, peer: &NodeId, role: Role, state: SessionState) -> Result<&'a mut AuthSession> {
    match node.sessions.get_mut(&(peer.clone(), role)) {
        Some(s) if s.state == state => Ok(s),
        _ => Err(AttestError::Unexpected),
    }
}

fn start(node: &mut AuthNode, peer: NodeId) -> Result<Vec<AuthPacket>> {
    if !node.lists.is_neighbor(&peer) {
        return Err(AttestError::DropSilently("peer is not a neighbor"));
    }
    node.sessions
        .insert((peer.clone(), Role::Initiator), AuthSession::new(Role::Initiator, peer.clone(), SessionState::InitSent));
    Ok(reply(node, &peer, AuthBody::Init))
}

fn on_init(node: &mut AuthNode, from: NodeId) -> Result<Vec<AuthPacket>> {
    if !node.lists.is_neighbor(&from) {
        return Err(AttestError::DropSilently("sender not in neighbor list"));
    }
    let n1 = Nonce::random(&mut node.rng);
    let mut session = AuthSession::new(Role::Responder, from.clone(), SessionState::Challenged);
    session.n1 = Some(n1);
    node.sessions.insert((from.clone(), Role::Responder), session);
    Ok(reply(node, &from, AuthBody::Challenge { n1 }))
}

fn on_challenge(node: &mut AuthNode, env: &AuthEnv, from: NodeId, n1: Nonce) -> Result<Vec<AuthPacket>> {
    session_in(node, &from, Role::Initiator, SessionState::InitSent)?;
    let im = measure(&node.id, &n1, &node.tpm.pcr_composite());
    let ds = node.tpm.daa_sign(&im)?;
    let ps = node.tpm.pba_sign(&im, &node.cs)?;
    let fresh = node.lists.key(&from).is_none();
    let secret = fresh.then(|| env.dh.secret(&mut node.rng));
    let key_info = secret.as_ref().map(|x| env.dh.key_info(x));
    let bundle = AttestationBundle { im, ds, ps, key_info };
    let digest = bundle_digest(&node.id, &bundle);
    let session = session_in(node, &from, Role::Initiator, SessionState::InitSent)?;
    session.n1 = Some(n1);
    session.own_public = bundle.key_info.as_ref().map(|k| k.public.clone());
    session.dh_secret = secret;
    session.state = SessionState::Attested;
    Ok(reply(node, &from, AuthBody::Attest { bundle, digest }))
}

fn on_attest(
    node: &mut AuthNode,
    env: &AuthEnv,
    from: NodeId,
    bundle: AttestationBundle,
    digest: Digest20,
) -> Result<Vec<AuthPacket>> {
    session_in(node, &from, Role::Responder, SessionState::Challenged)?;
    if bundle_digest(&from, &bundle) != digest {
        session_in(node, &from, Role::Responder, SessionState::Challenged)?.state = SessionState::Failed;
        return Err(AttestError::DropSilently("message 3 digest mismatch"));
    }
    let daa_ok = daa_verify(&bundle.ds, &bundle.im, &env.daa);
    let pba_ok = env.directory.get(&from).is_some_and(|aik| pba_verify(&bundle.ps, &bundle.im, &node.cs, aik));
    if !(daa_ok && pba_ok) {
        node.lists.set_trust(&from, TrustMark::Failed);
        session_in(node, &from, Role::Responder, SessionState::Challenged)?.state = SessionState::Failed;
        return Err(AttestError::AuthFailed(if daa_ok { "PBA verification" } else { "DAA verification" }));
    }
    node.lists.set_trust(&from, TrustMark::Trusted);
    let (key, secret, key_info) = match &bundle.key_info {
        Some(info) => {
            let y = env.dh.secret(&mut node.rng);
            let key = env.dh.shared(&info.public, &y);
            let own = env.dh.key_info(&y);
            (key, Some(y), Some(own))
        }
        None => match node.lists.key(&from) {
            Some(k) => (k.clone(), None, None),
            None => {
                session_in(node, &from, Role::Responder, SessionState::Challenged)?.state = SessionState::Failed;
                return Err(AttestError::AuthFailed("no key info and no stored key"));
            }
        },
    };
    node.lists.set_key(&from, key.clone());
    let n2 = Nonce::random(&mut node.rng);
    let key_sig = node.tpm.aik_sign(&key_info_message(key_info.as_ref(), &node.id));
    let enc = seal(&key, &encode_id_nonce(&node.id, &n2));
    let session = session_in(node, &from, Role::Responder, SessionState::Challenged)?;
    session.n2 = Some(n2);
    session.peer_public = bundle.key_info.as_ref().map(|k| k.public.clone());
    session.own_public = key_info.as_ref().map(|k| k.public.clone());
    session.dh_secret = secret;
    session.key = Some(key);
    session.state = SessionState::Keyed;
    Ok(reply(node, &from, AuthBody::Confirm { key_info, key_sig, enc }))
}

fn on_confirm(
    node: &mut AuthNode,
    env: &AuthEnv,
    from: NodeId,
    key_info: Option<KeyInfo>,
    key_sig: DssSignature,
    enc: Ciphertext,
) -> Result<Vec<AuthPacket>> {
    let stored = node.lists.key(&from).cloned();
    let session = session_in(node, &from, Role::Initiator, SessionState::Attested)?;
    let aik_ok =
        env.directory.get(&from).is_some_and(|aik| signature_valid(aik, &key_info_message(key_info.as_ref(), &from), &key_sig));
    if !aik_ok {
        session.state = SessionState::Failed;
        return Err(AttestError::AuthFailed("AIK signature on K_INFO"));
    }
    let key = match (&key_info, &session.dh_secret, stored) {
        (Some(info), Some(x), _) => env.dh.shared(&info.public, x),
        (None, None, Some(k)) => k,
        _ => {
            session.state = SessionState::Failed;
            return Err(AttestError::AuthFailed("key material mismatch"));
        }
    };
    let n2 = match open(&key, &enc).as_deref().and_then(decode_id_nonce) {
        Some((id, n2)) if id == from => n2,
        _ => {
            session.state = SessionState::Failed;
            return Err(AttestError::AuthFailed("message 4 does not decrypt to the peer id"));
        }
    };
    session.peer_public = key_info.map(|k| k.public);
    session.n2 = Some(n2);
    session.key = Some(key.clone());
    session.state = SessionState::Done;
    node.lists.set_key(&from, key.clone());
    node.lists.set_trust(&from, TrustMark::Trusted);
    let enc = seal(&key, &encode_id_nonce(&node.id, &n2));
    Ok(reply(node, &from, AuthBody::Finish { enc }))
}

fn on_finish(node: &mut AuthNode, from: NodeId, enc: Ciphertext) -> Result<Vec<AuthPacket>> {
    let session = session_in(node, &from, Role::Responder, SessionState::Keyed)?;
    let key = session.key.as_ref().ok_or(AttestError::Unexpected)?;
    match open(key, &enc).as_deref().and_then(decode_id_nonce) {
        Some((id, n2)) if id == from && Some(n2) == session.n2 => {
            session.state = SessionState::Done;
            Ok(Vec::new())
        }
        _ => Err(AttestError::AuthFailed("message 5 does not carry the expected n2")),
    }
}

/// Delivers packets between `nodes` until no more are produced. Returns the
/// delivered packets in order.
pub fn run_direct(
    nodes: &mut BTreeMap<NodeId, AuthNode>,
    env: &AuthEnv,
    initiator: &NodeId,
    responder: &NodeId,
) -> Vec<AuthPacket> {
    let mut log = Vec::new();
    let first = nodes.get_mut(initiator).map(|n| auth_step(n, env, AuthInput::Start(responder.clone())));
    let mut queue: Vec<AuthPacket> = match first {
        Some(Ok(out)) => out,
        _ => return log,
    };
    while let Some(packet) = (!queue.is_empty()).then(|| queue.remove(0)) {
        log.push(packet.clone());
        if let Some(node) = nodes.get_mut(&packet.to) {
            if let Ok(out) = auth_step(node, env, AuthInput::Receive(packet)) {
                queue.extend(out);
            }
        }
    }
    log
}
