//! Trusted miner selection: network miners, per-chain chain miners with
//! the DBP gate, and chain-miner-leader election.
//!
//! Selection keeps three nested levels alive:
//!
//! * **Network miners** Θ_net hold every user whose scheme trust value
//!   clears θ, padded with uniformly random extra users until the set is
//!   strictly larger than half the network.
//! * **Chain miners** Θ_chain[j] hold, per chain, the active users that
//!   are network miners, predicted trustworthy by DBP, and locally
//!   trusted on that chain, padded from the active set until strictly
//!   larger than half the chain's peak population.
//! * The **leader** of a chain is the chain miner with a spotless false
//!   count and the highest local trust; ties break toward the lowest id.
//!
//! All randomness flows through the caller's RNG, so identical seeds give
//! identical miner sets.

use std::collections::BTreeSet;

use rand::Rng;
use thiserror::Error;

use crate::{ChainId, UserId};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SelectionError {
    #[error("cannot elect a leader from an empty chain-miner set (chain {0})")]
    EmptyChainMinerSet(ChainId),
}

/// Smallest integer strictly greater than `total / 2`.
pub fn majority_quota(total: usize) -> usize {
    total / 2 + 1
}

/// Network-miner selection: everyone whose trust clears θ, padded with
/// random additional users until `|Θ_net| > n/2`.
///
/// `trusts[i]` is the scheme's network-level trust of user `i`.
pub fn select_network_miners<R: Rng>(
    trusts: &[f64],
    theta: f64,
    rng: &mut R,
) -> BTreeSet<UserId> {
    let n = trusts.len();
    let mut selected: BTreeSet<UserId> = trusts
        .iter()
        .enumerate()
        .filter(|&(_, &gt)| gt >= theta)
        .map(|(i, _)| i as UserId)
        .collect();
    pad_random(&mut selected, n, majority_quota(n), rng, |_| true);
    selected
}

/// Drop members whose trust fell below θ; if the survivors no longer
/// exceed half the network, rerun the full selection. Returns true when
/// a reselection happened.
pub fn refresh_network_miners<R: Rng>(
    miners: &mut BTreeSet<UserId>,
    trusts: &[f64],
    theta: f64,
    rng: &mut R,
) -> bool {
    miners.retain(|&u| trusts[u as usize] >= theta);
    if miners.len() < majority_quota(trusts.len()) {
        *miners = select_network_miners(trusts, theta, rng);
        true
    } else {
        false
    }
}

/// Chain-miner selection on one chain.
///
/// The qualified pass keeps every active user who is a network miner,
/// is predicted trustworthy by DBP (`flagged` holds the +1 predictions),
/// and whose local trust on the chain clears θ. If the qualified set
/// does not exceed `m/2` (with `m` the chain's peak active population),
/// random active users pad it. When `strict_pad` is set the pad draws
/// only from network miners, enforcing the network-miner prerequisite
/// even for padded seats.
pub fn select_chain_miners<R: Rng>(
    active: &[UserId],
    network: &BTreeSet<UserId>,
    flagged: &BTreeSet<UserId>,
    local_trust: impl Fn(UserId) -> f64,
    theta: f64,
    m: usize,
    strict_pad: bool,
    rng: &mut R,
) -> BTreeSet<UserId> {
    let mut selected: BTreeSet<UserId> = active
        .iter()
        .copied()
        .filter(|u| network.contains(u) && !flagged.contains(u) && local_trust(*u) >= theta)
        .collect();
    let quota = majority_quota(m);
    pad_from_pool(&mut selected, active, quota, rng, |u| {
        !strict_pad || network.contains(&u)
    });
    selected
}

/// Result of a leader election.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LeaderElection {
    pub leader: UserId,
    /// Set when no candidate had a zero false count and the filter was
    /// dropped to keep the chain live.
    pub degenerate: bool,
}

/// Leader election: among the chain miners with a zero false count on
/// this chain, pick the one with the highest local trust; ties go to the
/// lowest user id. When every member has created a false block, the
/// zero-false filter is dropped and the degenerate flag is set.
pub fn elect_leader(
    chain_miners: &BTreeSet<UserId>,
    chain: ChainId,
    false_count: impl Fn(UserId) -> u64,
    local_trust: impl Fn(UserId) -> f64,
) -> Result<LeaderElection, SelectionError> {
    if chain_miners.is_empty() {
        return Err(SelectionError::EmptyChainMinerSet(chain));
    }
    let argmax = |candidates: &mut dyn Iterator<Item = UserId>| -> Option<UserId> {
        let mut best: Option<(f64, UserId)> = None;
        for u in candidates {
            let lt = local_trust(u);
            // strict > keeps the lowest id on ties because ids ascend
            match best {
                Some((b, _)) if lt <= b => {}
                _ => best = Some((lt, u)),
            }
        }
        best.map(|(_, u)| u)
    };
    let spotless = argmax(&mut chain_miners.iter().copied().filter(|&u| false_count(u) == 0));
    match spotless {
        Some(leader) => Ok(LeaderElection {
            leader,
            degenerate: false,
        }),
        None => {
            let leader = argmax(&mut chain_miners.iter().copied()).unwrap();
            log::warn!(
                "chain {chain}: every chain miner has a false block on record; \
                 electing highest local trust without the zero-false filter"
            );
            Ok(LeaderElection {
                leader,
                degenerate: true,
            })
        }
    }
}

/// Whether the current leader must be replaced: either they created a
/// false block on the chain or their term ran out.
pub fn leader_needs_refresh(leader_false_count: u64, remaining_term: u32) -> bool {
    leader_false_count >= 1 || remaining_term == 0
}

/// Pad `selected` with uniformly random users drawn from `0..n` until it
/// exceeds `quota`, skipping duplicates and users rejected by `eligible`.
fn pad_random<R: Rng>(
    selected: &mut BTreeSet<UserId>,
    n: usize,
    quota: usize,
    rng: &mut R,
    eligible: impl Fn(UserId) -> bool,
) {
    if selected.len() >= quota {
        return;
    }
    let pool: Vec<UserId> = (0..n as UserId)
        .filter(|&u| eligible(u) && !selected.contains(&u))
        .collect();
    sample_into(selected, &pool, quota, rng);
}

fn pad_from_pool<R: Rng>(
    selected: &mut BTreeSet<UserId>,
    active: &[UserId],
    quota: usize,
    rng: &mut R,
    eligible: impl Fn(UserId) -> bool,
) {
    if selected.len() >= quota {
        return;
    }
    let pool: Vec<UserId> = active
        .iter()
        .copied()
        .filter(|&u| eligible(u) && !selected.contains(&u))
        .collect();
    sample_into(selected, &pool, quota, rng);
}

/// Move a uniform random sample from `pool` into `selected` until the
/// quota is met or the pool runs dry (partial Fisher-Yates).
fn sample_into<R: Rng>(
    selected: &mut BTreeSet<UserId>,
    pool: &[UserId],
    quota: usize,
    rng: &mut R,
) {
    let need = quota.saturating_sub(selected.len()).min(pool.len());
    let mut pool = pool.to_vec();
    for i in 0..need {
        let j = rng.gen_range(i..pool.len());
        pool.swap(i, j);
        selected.insert(pool[i]);
    }
}
