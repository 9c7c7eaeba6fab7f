//! Threshold cryptography toolkit: CRT (Asmuth-Bloom) verifiable secret
//! sharing with homomorphic share arithmetic, a Shamir baseline, a threshold
//! DSS signing protocol over elliptic curves, a simulated trusted-platform
//! attestation layer and a Dolev-Yao network simulator that replays the
//! cheating and replay attacks against all of it.

pub mod attest;
pub mod bench;
pub mod crt_vss;
pub mod curve;
pub mod hexint;
pub mod modmath;
pub mod netsim;
pub mod shamir_ref;
pub mod threshold_dss;
