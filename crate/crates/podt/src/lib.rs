//! PoDT: a deterministic multi-chain consensus simulator built around
//! distinctive per-chain trust evaluation (DiscTrust), SVM-based dynamic
//! behavior prediction (DBP), and trusted miner selection.
//!
//! The library models a blockchain network of `n` users and `h` chains in
//! which miners may behave differently per chain. Diverse-miner-behavior
//! (DMB) attackers sabotage a set of *kill-chains* while farming trust on
//! *mask-chains*; the PoDT scheme counters them with two defense layers:
//!
//! 1. **DiscTrust** ([`trust`]) splits every user's reputation into one
//!    local trust value per chain plus a global value, so honest behavior
//!    on one chain cannot whitewash sabotage on another.
//! 2. **DBP** ([`dbp`]) trains a linear hard-margin SVM on historical
//!    experience records stored in an auxiliary hash-linked side chain
//!    ([`sidechain`]) and predicts which seemingly-trustworthy users are
//!    intensive attackers that alternate true/false blocks.
//!
//! [`selection`] implements trusted network-miner / chain-miner / leader
//! election on top of both layers, [`behaviors`] provides the attacker
//! agent models, and [`engine`] runs the cycle-based simulation and
//! computes the metrics (malicious responses, attack success ratio,
//! accuracy, overload, storage). [`scenario`] packages the built-in
//! experiment suites behind the `podt` command-line binary.
//!
//! Everything is deterministic: one seed and one config produce
//! bit-identical metrics and side-chain hashes.

pub mod behaviors;
pub mod dbp;
pub mod engine;
pub mod plot;
pub mod scenario;
pub mod selection;
pub mod sidechain;
pub mod trust;

/// Index of a user in the network. Users are dense `0..n`.
pub type UserId = u32;
/// Index of a main chain. Chains are dense `0..h`.
pub type ChainId = u32;
