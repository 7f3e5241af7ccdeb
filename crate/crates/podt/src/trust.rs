//! Distinctive trust evaluation (DiscTrust).
//!
//! Every user carries one pair of block counters per chain. Local trust on
//! a chain and global trust across all chains are derived on demand from
//! those counters, so there is no cached float to go stale:
//!
//! ```text
//! lt_ij = (tru_ij + θ) / (tru_ij + fal_ij + 1)          local, per chain
//! gt_i  = (Σ_j tru_ij + θ) / (Σ_j tru_ij + Σ_j fal_ij + 1)   global
//! ```
//!
//! A newcomer (all counters zero) sits exactly at the threshold θ. The
//! single-valued `Baseline` comparator keeps its own printed form with θ in
//! the denominator, which makes a newcomer start at 1.0 instead:
//!
//! ```text
//! t_i = (tru_i + θ) / (tru_i + fal_i + θ)
//! ```
//!
//! Users are classified into four trust states from `(gt_i, λ_i)`, where
//! λ_i counts the chains whose local trust sits strictly below θ. The
//! high-risk check (λ_i = h) runs before the medium-risk check (λ_i ≥ 1);
//! the other order would leave the high-risk branch unreachable.

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::{ChainId, UserId};

#[derive(Debug, Error, PartialEq)]
pub enum TrustError {
    #[error("user id {id} out of range (n = {n})")]
    UserOutOfRange { id: UserId, n: u32 },
    #[error("chain id {id} out of range (h = {h})")]
    ChainOutOfRange { id: ChainId, h: u32 },
    #[error("trust threshold must lie in (0, 1), got {0}")]
    BadThreshold(f64),
}

/// Per-(user, chain) counters of true and false blocks created.
///
/// Counters only move through [`TrustLedger::record_block`] and never
/// decrease over a run.
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockCounters {
    pub tru: u64,
    pub fal: u64,
}

/// The four trust states a user can occupy given `(gt_i, λ_i)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TrustState {
    /// gt ≥ θ and λ = 0: true blocks everywhere, blocks accepted.
    Trustworthy,
    /// gt ≥ θ and λ ≥ 1: false blocks on a few chains.
    LowRisk,
    /// gt < θ and 1 ≤ λ < h (plus the uncovered gt < θ, λ = 0 corner,
    /// which is treated conservatively as medium risk).
    MediumRisk,
    /// gt < θ and λ = h: false blocks on every chain.
    HighRisk,
}

/// Pure classification from a `(gt, λ)` pair.
///
/// The λ = h test comes first so the high-risk branch is reachable.
pub fn classify_state(gt: f64, lambda: u32, h: u32, theta: f64) -> TrustState {
    if gt >= theta {
        if lambda == 0 {
            TrustState::Trustworthy
        } else {
            TrustState::LowRisk
        }
    } else if lambda == h && h > 0 {
        TrustState::HighRisk
    } else {
        // Covers 1 ≤ λ < h and the uncovered λ = 0 corner.
        TrustState::MediumRisk
    }
}

/// The four-way user partition Φ1..Φ4 produced by [`TrustLedger::partition`].
///
/// The sets are disjoint and cover the input population. Φ2 and Φ3
/// together hold the normal DMB attackers; Φ4 holds ordinary attackers.
#[derive(Debug, Default, Clone, PartialEq, Eq)]
pub struct UserPartition {
    pub trustworthy: Vec<UserId>,
    pub low_risk: Vec<UserId>,
    pub medium_risk: Vec<UserId>,
    pub high_risk: Vec<UserId>,
}

/// Dense ledger of block counters for `n` users across `h` chains.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrustLedger {
    n: u32,
    h: u32,
    theta: f64,
    counters: Vec<BlockCounters>,
}

impl TrustLedger {
    pub fn new(n: u32, h: u32, theta: f64) -> Result<Self, TrustError> {
        if !(theta > 0.0 && theta < 1.0) {
            return Err(TrustError::BadThreshold(theta));
        }
        Ok(Self {
            n,
            h,
            theta,
            counters: vec![BlockCounters::default(); n as usize * h as usize],
        })
    }

    pub fn n_users(&self) -> u32 {
        self.n
    }

    pub fn n_chains(&self) -> u32 {
        self.h
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    fn index(&self, user: UserId, chain: ChainId) -> Result<usize, TrustError> {
        if user >= self.n {
            return Err(TrustError::UserOutOfRange { id: user, n: self.n });
        }
        if chain >= self.h {
            return Err(TrustError::ChainOutOfRange { id: chain, h: self.h });
        }
        Ok(user as usize * self.h as usize + chain as usize)
    }

    /// Record one block created by `user` on `chain`.
    ///
    /// Increments `tru` when the block was true, `fal` otherwise, and
    /// returns the updated counters. All other counters are untouched.
    pub fn record_block(
        &mut self,
        user: UserId,
        chain: ChainId,
        was_true: bool,
    ) -> Result<BlockCounters, TrustError> {
        let idx = self.index(user, chain)?;
        let c = &mut self.counters[idx];
        if was_true {
            c.tru += 1;
        } else {
            c.fal += 1;
        }
        Ok(*c)
    }

    pub fn counters(&self, user: UserId, chain: ChainId) -> Result<BlockCounters, TrustError> {
        Ok(self.counters[self.index(user, chain)?])
    }

    /// Local trust of `user` on `chain`: `(tru + θ) / (tru + fal + 1)`.
    pub fn local_trust(&self, user: UserId, chain: ChainId) -> Result<f64, TrustError> {
        let c = self.counters(user, chain)?;
        Ok(local_trust_value(c.tru, c.fal, self.theta))
    }

    /// The local trust values of `user` on every chain, in chain order.
    pub fn trust_vector(&self, user: UserId) -> Result<Vec<f64>, TrustError> {
        (0..self.h).map(|j| self.local_trust(user, j)).collect()
    }

    /// Network-wide (tru, fal) totals for `user`.
    pub fn totals(&self, user: UserId) -> Result<BlockCounters, TrustError> {
        if user >= self.n {
            return Err(TrustError::UserOutOfRange { id: user, n: self.n });
        }
        let base = user as usize * self.h as usize;
        let mut t = BlockCounters::default();
        for c in &self.counters[base..base + self.h as usize] {
            t.tru += c.tru;
            t.fal += c.fal;
        }
        Ok(t)
    }

    /// Global trust of `user`: `(Σ tru + θ) / (Σ tru + Σ fal + 1)`.
    pub fn global_trust(&self, user: UserId) -> Result<f64, TrustError> {
        let t = self.totals(user)?;
        Ok(global_trust_value(t.tru, t.fal, self.theta))
    }

    /// Single universal trust value used by Baseline comparison runs:
    /// `(tru + θ) / (tru + fal + θ)` on network-wide sums. Note the θ in
    /// the denominator; a newcomer starts at exactly 1.0 here.
    pub fn baseline_trust(&self, user: UserId) -> Result<f64, TrustError> {
        let t = self.totals(user)?;
        Ok(baseline_trust_value(t.tru, t.fal, self.theta))
    }

    /// λ_i: how many chains hold `user`'s local trust strictly below θ.
    ///
    /// A value exactly at θ does not count as low.
    pub fn count_low_local(&self, user: UserId) -> Result<u32, TrustError> {
        let mut lambda = 0u32;
        for j in 0..self.h {
            if self.local_trust(user, j)? < self.theta {
                lambda += 1;
            }
        }
        Ok(lambda)
    }

    /// Trust state of `user` from their current `(gt, λ)` pair.
    pub fn classify(&self, user: UserId) -> Result<TrustState, TrustError> {
        let gt = self.global_trust(user)?;
        let lambda = self.count_low_local(user)?;
        Ok(classify_state(gt, lambda, self.h, self.theta))
    }

    /// Split `users` into the four trust-state clusters Φ1..Φ4.
    pub fn partition(&self, users: &[UserId]) -> Result<UserPartition, TrustError> {
        let mut p = UserPartition::default();
        for &u in users {
            match self.classify(u)? {
                TrustState::Trustworthy => p.trustworthy.push(u),
                TrustState::LowRisk => p.low_risk.push(u),
                TrustState::MediumRisk => p.medium_risk.push(u),
                TrustState::HighRisk => p.high_risk.push(u),
            }
        }
        Ok(p)
    }

    /// Write the ledger as CSV with one row per (user, chain) pair:
    /// `user_id,chain_id,tru,fal`, user-major order.
    pub fn write_snapshot_csv<W: Write>(&self, w: W) -> csv::Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["user_id", "chain_id", "tru", "fal"])?;
        for u in 0..self.n {
            for j in 0..self.h {
                let c = self.counters[u as usize * self.h as usize + j as usize];
                wtr.write_record([
                    u.to_string(),
                    j.to_string(),
                    c.tru.to_string(),
                    c.fal.to_string(),
                ])?;
            }
        }
        wtr.flush()?;
        Ok(())
    }
}

/// `(tru + θ) / (tru + fal + 1)`.
pub fn local_trust_value(tru: u64, fal: u64, theta: f64) -> f64 {
    (tru as f64 + theta) / ((tru + fal) as f64 + 1.0)
}

/// Same form as local trust, applied to network-wide sums.
pub fn global_trust_value(tru: u64, fal: u64, theta: f64) -> f64 {
    (tru as f64 + theta) / ((tru + fal) as f64 + 1.0)
}

/// Baseline form with θ in the denominator: `(tru + θ) / (tru + fal + θ)`.
pub fn baseline_trust_value(tru: u64, fal: u64, theta: f64) -> f64 {
    (tru as f64 + theta) / ((tru + fal) as f64 + theta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const THETA: f64 = 0.5;

    fn ledger(n: u32, h: u32) -> TrustLedger {
        TrustLedger::new(n, h, THETA).unwrap()
    }

    #[test]
    fn record_block_increments_one_counter() {
        let mut l = ledger(2, 2);
        let c = l.record_block(0, 0, true).unwrap();
        assert_eq!(c, BlockCounters { tru: 1, fal: 0 });
        // pre-set (2, 1), then a false block
        l.record_block(1, 1, true).unwrap();
        l.record_block(1, 1, true).unwrap();
        l.record_block(1, 1, false).unwrap();
        let c = l.record_block(1, 1, false).unwrap();
        assert_eq!(c, BlockCounters { tru: 2, fal: 2 });
        // the other cells are untouched
        assert_eq!(l.counters(0, 1).unwrap(), BlockCounters::default());
        assert_eq!(l.counters(1, 0).unwrap(), BlockCounters::default());
    }

    #[test]
    fn five_true_blocks_from_zero() {
        let mut l = ledger(1, 1);
        for _ in 0..5 {
            l.record_block(0, 0, true).unwrap();
        }
        assert_eq!(l.counters(0, 0).unwrap(), BlockCounters { tru: 5, fal: 0 });
    }

    #[test]
    fn record_block_rejects_out_of_range_ids() {
        let mut l = ledger(3, 2);
        assert_eq!(
            l.record_block(3, 0, true),
            Err(TrustError::UserOutOfRange { id: 3, n: 3 })
        );
        assert_eq!(
            l.record_block(0, 2, true),
            Err(TrustError::ChainOutOfRange { id: 2, h: 2 })
        );
    }

    #[test]
    fn local_trust_matches_closed_form() {
        let mut l = ledger(1, 3);
        // newcomer sits exactly at θ
        assert_eq!(l.local_trust(0, 0).unwrap(), THETA);
        // (3, 1) -> 3.5 / 5 = 0.7
        for _ in 0..3 {
            l.record_block(0, 0, true).unwrap();
        }
        l.record_block(0, 0, false).unwrap();
        assert!((l.local_trust(0, 0).unwrap() - 0.7).abs() < 1e-15);
        // (0, 4) -> 0.5 / 5 = 0.1
        for _ in 0..4 {
            l.record_block(0, 1, false).unwrap();
        }
        assert!((l.local_trust(0, 1).unwrap() - 0.1).abs() < 1e-15);
    }

    #[test]
    fn trust_vector_is_per_chain_local_trust() {
        let mut l = ledger(1, 3);
        assert_eq!(l.trust_vector(0).unwrap(), vec![0.5, 0.5, 0.5]);
        for _ in 0..3 {
            l.record_block(0, 0, true).unwrap();
        }
        l.record_block(0, 0, false).unwrap();
        for _ in 0..4 {
            l.record_block(0, 1, false).unwrap();
        }
        let v = l.trust_vector(0).unwrap();
        assert_eq!(v.len(), 3);
        assert!((v[0] - 0.7).abs() < 1e-15);
        assert!((v[1] - 0.1).abs() < 1e-15);
        assert_eq!(v[2], 0.5);
    }

    #[test]
    fn global_trust_sums_counters() {
        let mut l = ledger(1, 2);
        assert_eq!(l.global_trust(0).unwrap(), THETA);
        // tru [2, 3], fal [0, 1] -> 5.5 / 7
        for _ in 0..2 {
            l.record_block(0, 0, true).unwrap();
        }
        for _ in 0..3 {
            l.record_block(0, 1, true).unwrap();
        }
        l.record_block(0, 1, false).unwrap();
        assert!((l.global_trust(0).unwrap() - 5.5 / 7.0).abs() < 1e-15);
    }

    #[test]
    fn global_trust_all_false() {
        let mut l = ledger(1, 3);
        for _ in 0..9 {
            l.record_block(0, 0, false).unwrap();
        }
        assert!((l.global_trust(0).unwrap() - 0.05).abs() < 1e-15);
    }

    #[test]
    fn baseline_trust_uses_theta_denominator() {
        let mut l = ledger(1, 1);
        // newcomer: θ/θ = 1.0 under the baseline form
        assert_eq!(l.baseline_trust(0).unwrap(), 1.0);
        // (4, 4) -> 4.5 / 8.5
        for _ in 0..4 {
            l.record_block(0, 0, true).unwrap();
            l.record_block(0, 0, false).unwrap();
        }
        assert!((l.baseline_trust(0).unwrap() - 4.5 / 8.5).abs() < 1e-15);
        // all-honest limit stays exactly 1.0
        let mut l = ledger(1, 1);
        for _ in 0..100 {
            l.record_block(0, 0, true).unwrap();
        }
        assert_eq!(l.baseline_trust(0).unwrap(), 1.0);
    }

    #[test]
    fn count_low_local_is_strict() {
        let mut l = ledger(1, 3);
        // LT = [0.7, 0.25, 0.5]: only the 0.25 entry is low
        for _ in 0..3 {
            l.record_block(0, 0, true).unwrap();
        }
        l.record_block(0, 0, false).unwrap();
        l.record_block(0, 1, true).unwrap();
        for _ in 0..4 {
            l.record_block(0, 1, false).unwrap();
        }
        assert!((l.local_trust(0, 1).unwrap() - 0.25).abs() < 1e-12);
        assert_eq!(l.count_low_local(0).unwrap(), 1);
        // newcomer: equality at θ is not low
        let l2 = ledger(1, 4);
        assert_eq!(l2.count_low_local(0).unwrap(), 0);
        // all entries below
        let mut l3 = ledger(1, 4);
        for j in 0..4 {
            for _ in 0..4 {
                l3.record_block(0, j, false).unwrap();
            }
        }
        assert_eq!(l3.count_low_local(0).unwrap(), 4);
    }

    #[test]
    fn classify_state_covers_the_four_regions() {
        let h = 4;
        assert_eq!(classify_state(0.8, 0, h, THETA), TrustState::Trustworthy);
        assert_eq!(classify_state(0.8, 2, h, THETA), TrustState::LowRisk);
        assert_eq!(classify_state(0.3, h, h, THETA), TrustState::HighRisk);
        assert_eq!(classify_state(0.3, 2, h, THETA), TrustState::MediumRisk);
        // uncovered corner gt < θ, λ = 0 falls back to medium risk
        assert_eq!(classify_state(0.3, 0, h, THETA), TrustState::MediumRisk);
        // boundary: gt exactly θ counts as qualified
        assert_eq!(classify_state(THETA, 0, h, THETA), TrustState::Trustworthy);
    }

    #[test]
    fn partition_newcomers_all_trustworthy() {
        let l = ledger(5, 3);
        let users: Vec<UserId> = (0..5).collect();
        let p = l.partition(&users).unwrap();
        assert_eq!(p.trustworthy, users);
        assert!(p.low_risk.is_empty() && p.medium_risk.is_empty() && p.high_risk.is_empty());
    }

    #[test]
    fn partition_mixed_archetypes() {
        let h = 3;
        let mut l = ledger(4, h);
        // user 0: trustworthy (true blocks everywhere)
        for j in 0..h {
            l.record_block(0, j, true).unwrap();
        }
        // user 1: low risk (gt ≥ θ, one low chain)
        for _ in 0..8 {
            l.record_block(1, 0, true).unwrap();
        }
        l.record_block(1, 1, false).unwrap();
        // user 2: medium risk (gt < θ, some but not all chains low)
        for _ in 0..3 {
            l.record_block(2, 0, false).unwrap();
            l.record_block(2, 1, false).unwrap();
        }
        // user 3: high risk (false blocks on every chain)
        for j in 0..h {
            l.record_block(3, j, false).unwrap();
        }
        let p = l.partition(&[0, 1, 2, 3]).unwrap();
        assert_eq!(p.trustworthy, vec![0]);
        assert_eq!(p.low_risk, vec![1]);
        assert_eq!(p.medium_risk, vec![2]);
        assert_eq!(p.high_risk, vec![3]);
    }

    #[test]
    fn high_risk_user_lands_in_phi4_only() {
        // The literal else-if order of the four-state split would classify
        // an all-chains-low user as medium risk; the corrected order must
        // put them in Φ4.
        let h = 3;
        let mut l = ledger(1, h);
        for j in 0..h {
            for _ in 0..2 {
                l.record_block(0, j, false).unwrap();
            }
        }
        let p = l.partition(&[0]).unwrap();
        assert_eq!(p.high_risk, vec![0]);
        assert!(p.medium_risk.is_empty());
    }

    #[test]
    fn snapshot_csv_layout() {
        let mut l = ledger(2, 2);
        l.record_block(1, 0, true).unwrap();
        l.record_block(1, 0, false).unwrap();
        let mut buf = Vec::new();
        l.write_snapshot_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "user_id,chain_id,tru,fal");
        assert_eq!(lines.len(), 5);
        assert_eq!(lines[3], "1,0,1,1");
    }

    #[test]
    fn balanced_counters_pin_trust_to_half_exactly() {
        for k in [1u64, 2, 3, 10, 1000, 123_456] {
            assert_eq!(local_trust_value(k, k, 0.5), 0.5);
        }
    }

    proptest! {
        #[test]
        fn trust_values_stay_in_open_unit_interval(
            tru in 0u64..1_000_000,
            fal in 0u64..1_000_000,
            theta in 0.01f64..0.99,
        ) {
            let lt = local_trust_value(tru, fal, theta);
            prop_assert!(lt > 0.0 && lt < 1.0);
            let gt = global_trust_value(tru, fal, theta);
            prop_assert!(gt > 0.0 && gt < 1.0);
        }

        #[test]
        fn local_trust_monotone_in_counters(tru in 0u64..10_000, fal in 0u64..10_000) {
            let base = local_trust_value(tru, fal, 0.5);
            prop_assert!(local_trust_value(tru + 1, fal, 0.5) > base);
            prop_assert!(local_trust_value(tru, fal + 1, 0.5) < base);
        }

        #[test]
        fn lambda_matches_brute_force(
            counts in proptest::collection::vec((0u64..20, 0u64..20), 1..12),
        ) {
            let h = counts.len() as u32;
            let mut l = TrustLedger::new(1, h, 0.5).unwrap();
            for (j, &(t, f)) in counts.iter().enumerate() {
                for _ in 0..t {
                    l.record_block(0, j as ChainId, true).unwrap();
                }
                for _ in 0..f {
                    l.record_block(0, j as ChainId, false).unwrap();
                }
            }
            let brute = l
                .trust_vector(0)
                .unwrap()
                .iter()
                .filter(|&&v| v < 0.5)
                .count() as u32;
            prop_assert_eq!(l.count_low_local(0).unwrap(), brute);
        }

        #[test]
        fn partition_is_disjoint_and_covers(
            seed_counts in proptest::collection::vec((0u64..6, 0u64..6), 24),
        ) {
            // 8 users x 3 chains driven by arbitrary counters
            let (n, h) = (8u32, 3u32);
            let mut l = TrustLedger::new(n, h, 0.5).unwrap();
            for (i, &(t, f)) in seed_counts.iter().enumerate() {
                let (u, j) = ((i as u32) / h, (i as u32) % h);
                for _ in 0..t {
                    l.record_block(u, j, true).unwrap();
                }
                for _ in 0..f {
                    l.record_block(u, j, false).unwrap();
                }
            }
            let users: Vec<UserId> = (0..n).collect();
            let p = l.partition(&users).unwrap();
            let mut all: Vec<UserId> = p
                .trustworthy
                .iter()
                .chain(&p.low_risk)
                .chain(&p.medium_risk)
                .chain(&p.high_risk)
                .copied()
                .collect();
            all.sort_unstable();
            prop_assert_eq!(all, users);
        }

        #[test]
        fn single_chain_global_equals_local(tru in 0u64..10_000, fal in 0u64..10_000) {
            let mut l = TrustLedger::new(1, 1, 0.5).unwrap();
            for _ in 0..tru {
                l.record_block(0, 0, true).unwrap();
            }
            for _ in 0..fal {
                l.record_block(0, 0, false).unwrap();
            }
            prop_assert_eq!(l.global_trust(0).unwrap(), l.local_trust(0, 0).unwrap());
        }
    }
}
