//! Agent behavior models: honest users, ordinary attackers, and the two
//! DMB attacker kinds.
//!
//! DMB attackers split the network's chains into kill-chains (sabotage
//! targets) and mask-chains (where they farm trust). Both kinds watch
//! their own trust standing against two lines above the threshold θ: the
//! warning line θ+ξ1 and the high-trust line θ+ξ2. Dropping to the
//! warning line suspends attacks until trust recovers past the high line,
//! which gives the phase machine a hysteresis band of width ξ2−ξ1.
//!
//! * A normal DMB attacker keys the phase off their **global** trust and,
//!   while attacking, always creates false blocks on kill-chains.
//! * An intensive DMB attacker keeps one phase **per kill-chain**, keyed
//!   off the local trust there, and alternates true/false blocks while
//!   attacking so the local trust never collapses.
//!
//! Behavior is evaluated only at block-creation opportunities; an agent
//! that is not selected in a round keeps its phase state unchanged.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use thiserror::Error;

use crate::ChainId;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum BehaviorError {
    #[error("kill-chain count {k} exceeds the number of chains {h}")]
    TooManyKillChains { k: u32, h: u32 },
}

/// What an agent does with a block-creation opportunity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Action {
    CreateTrue,
    CreateFalse,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BehaviorKind {
    /// True blocks on every chain.
    Honest,
    /// False blocks on every chain.
    Ordinary,
    /// False blocks on kill-chains while global trust allows it.
    NormalDmb,
    /// Alternating true/false blocks on kill-chains, per-chain phase.
    IntensiveDmb,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    /// Behave honestly to push trust up toward θ+ξ2.
    Boosting,
    /// Undermine kill-chains while trust is comfortable.
    Attacking,
}

#[derive(Debug, Clone, Copy)]
struct KillChainState {
    phase: Phase,
    /// Alternation toggle; the first attacking action is a true block.
    next_true: bool,
}

impl Default for KillChainState {
    fn default() -> Self {
        Self {
            // newcomers sit at θ, below the warning line
            phase: Phase::Boosting,
            next_true: true,
        }
    }
}

/// Mutable behavior state of one agent.
#[derive(Debug, Clone)]
pub struct BehaviorProfile {
    kind: BehaviorKind,
    kill_chains: BTreeSet<ChainId>,
    /// Global phase, used by the normal DMB kind only.
    normal_phase: Phase,
    /// Per-kill-chain state, used by the intensive DMB kind only.
    kill_state: BTreeMap<ChainId, KillChainState>,
}

impl BehaviorProfile {
    pub fn honest() -> Self {
        Self::new(BehaviorKind::Honest, BTreeSet::new())
    }

    pub fn ordinary() -> Self {
        Self::new(BehaviorKind::Ordinary, BTreeSet::new())
    }

    pub fn normal_dmb(kill_chains: BTreeSet<ChainId>) -> Self {
        Self::new(BehaviorKind::NormalDmb, kill_chains)
    }

    pub fn intensive_dmb(kill_chains: BTreeSet<ChainId>) -> Self {
        Self::new(BehaviorKind::IntensiveDmb, kill_chains)
    }

    fn new(kind: BehaviorKind, kill_chains: BTreeSet<ChainId>) -> Self {
        Self {
            kind,
            kill_chains,
            normal_phase: Phase::Boosting,
            kill_state: BTreeMap::new(),
        }
    }

    pub fn kind(&self) -> BehaviorKind {
        self.kind
    }

    pub fn is_attacker(&self) -> bool {
        self.kind != BehaviorKind::Honest
    }

    pub fn kill_chains(&self) -> &BTreeSet<ChainId> {
        &self.kill_chains
    }

    pub fn is_kill_chain(&self, chain: ChainId) -> bool {
        self.kill_chains.contains(&chain)
    }

    /// Decide the block content for a creation opportunity on `chain`.
    ///
    /// `gt` and `lt` are the agent's current global trust and local trust
    /// on that chain; phase transitions are evaluated here and nowhere
    /// else. Ties at the two lines satisfy the bounds: trust exactly at
    /// θ+ξ1 triggers boosting, exactly at θ+ξ2 resumes attacking.
    pub fn decide_action(
        &mut self,
        chain: ChainId,
        gt: f64,
        lt: f64,
        theta: f64,
        xi1: f64,
        xi2: f64,
    ) -> Action {
        let warning = theta + xi1;
        let high = theta + xi2;
        match self.kind {
            BehaviorKind::Honest => Action::CreateTrue,
            BehaviorKind::Ordinary => Action::CreateFalse,
            BehaviorKind::NormalDmb => {
                if gt <= warning {
                    self.normal_phase = Phase::Boosting;
                } else if gt >= high {
                    self.normal_phase = Phase::Attacking;
                }
                if self.is_kill_chain(chain) && self.normal_phase == Phase::Attacking {
                    Action::CreateFalse
                } else {
                    Action::CreateTrue
                }
            }
            BehaviorKind::IntensiveDmb => {
                if !self.is_kill_chain(chain) {
                    return Action::CreateTrue;
                }
                let state = self.kill_state.entry(chain).or_default();
                if lt <= warning {
                    state.phase = Phase::Boosting;
                } else if lt >= high {
                    state.phase = Phase::Attacking;
                }
                match state.phase {
                    Phase::Boosting => Action::CreateTrue,
                    Phase::Attacking => {
                        let act = if state.next_true {
                            Action::CreateTrue
                        } else {
                            Action::CreateFalse
                        };
                        state.next_true = !state.next_true;
                        act
                    }
                }
            }
        }
    }

    /// Whether this agent, asked to validate or confirm a block on
    /// `chain`, reports the opposite of what it observed.
    ///
    /// Reads the current phase without advancing it: validation is not a
    /// creation opportunity. A boosting attacker plays honest everywhere,
    /// including in its votes.
    pub fn votes_falsely(&self, chain: ChainId) -> bool {
        match self.kind {
            BehaviorKind::Honest => false,
            BehaviorKind::Ordinary => true,
            BehaviorKind::NormalDmb => {
                self.is_kill_chain(chain) && self.normal_phase == Phase::Attacking
            }
            BehaviorKind::IntensiveDmb => {
                self.is_kill_chain(chain)
                    && self
                        .kill_state
                        .get(&chain)
                        .is_some_and(|s| s.phase == Phase::Attacking)
            }
        }
    }
}

/// Draw a uniformly random `k`-subset of the `h` chains as kill-chains.
pub fn assign_kill_chains<R: Rng>(
    rng: &mut R,
    h: u32,
    k: u32,
) -> Result<BTreeSet<ChainId>, BehaviorError> {
    if k > h {
        return Err(BehaviorError::TooManyKillChains { k, h });
    }
    // partial Fisher-Yates over the chain ids
    let mut ids: Vec<ChainId> = (0..h).collect();
    for i in 0..k as usize {
        let j = rng.gen_range(i..h as usize);
        ids.swap(i, j);
    }
    Ok(ids[..k as usize].iter().copied().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const THETA: f64 = 0.5;
    const XI1: f64 = 0.1;
    const XI2: f64 = 0.4;

    fn kills(ids: &[ChainId]) -> BTreeSet<ChainId> {
        ids.iter().copied().collect()
    }

    #[test]
    fn honest_always_creates_true() {
        let mut p = BehaviorProfile::honest();
        for chain in 0..5 {
            assert_eq!(
                p.decide_action(chain, 0.1, 0.1, THETA, XI1, XI2),
                Action::CreateTrue
            );
        }
        assert!(!p.votes_falsely(0));
    }

    #[test]
    fn ordinary_always_creates_false() {
        let mut p = BehaviorProfile::ordinary();
        assert_eq!(
            p.decide_action(3, 0.9, 0.9, THETA, XI1, XI2),
            Action::CreateFalse
        );
        assert!(p.votes_falsely(3));
        assert!(p.kill_chains().is_empty());
    }

    #[test]
    fn normal_dmb_attacks_kill_chain_at_high_trust() {
        let mut p = BehaviorProfile::normal_dmb(kills(&[1]));
        // gt = 0.95 ≥ θ+ξ2 = 0.9: attacking
        assert_eq!(
            p.decide_action(1, 0.95, 0.9, THETA, XI1, XI2),
            Action::CreateFalse
        );
        // mask-chain stays honest
        assert_eq!(
            p.decide_action(0, 0.95, 0.9, THETA, XI1, XI2),
            Action::CreateTrue
        );
    }

    #[test]
    fn normal_dmb_boosts_below_warning_line() {
        let mut p = BehaviorProfile::normal_dmb(kills(&[1]));
        p.decide_action(1, 0.95, 0.9, THETA, XI1, XI2); // enter attacking
        // drop to the warning line: suspend attacks everywhere
        assert_eq!(
            p.decide_action(1, 0.6, 0.2, THETA, XI1, XI2),
            Action::CreateTrue
        );
        // in the hysteresis band the phase holds (boosting)
        assert_eq!(
            p.decide_action(1, 0.75, 0.2, THETA, XI1, XI2),
            Action::CreateTrue
        );
        // back above the high line: attack again
        assert_eq!(
            p.decide_action(1, 0.9, 0.2, THETA, XI1, XI2),
            Action::CreateFalse
        );
    }

    #[test]
    fn intensive_dmb_alternates_on_kill_chain() {
        let mut p = BehaviorProfile::intensive_dmb(kills(&[2]));
        // lt = 0.75 inside the band, but the per-chain phase starts
        // boosting; push it to the high line first
        assert_eq!(
            p.decide_action(2, 0.8, 0.9, THETA, XI1, XI2),
            Action::CreateTrue
        );
        // now alternation runs: true, false, true, false...
        assert_eq!(
            p.decide_action(2, 0.8, 0.91, THETA, XI1, XI2),
            Action::CreateFalse
        );
        assert_eq!(
            p.decide_action(2, 0.8, 0.8, THETA, XI1, XI2),
            Action::CreateTrue
        );
        assert_eq!(
            p.decide_action(2, 0.8, 0.75, THETA, XI1, XI2),
            Action::CreateFalse
        );
        // mask-chains are always honest regardless of state
        assert_eq!(
            p.decide_action(0, 0.8, 0.1, THETA, XI1, XI2),
            Action::CreateTrue
        );
    }

    #[test]
    fn intensive_dmb_boosts_per_chain() {
        let mut p = BehaviorProfile::intensive_dmb(kills(&[0, 1]));
        // chain 0 reaches the high line and attacks
        p.decide_action(0, 0.8, 0.9, THETA, XI1, XI2);
        assert!(p.votes_falsely(0));
        // chain 1 is still boosting independently
        assert_eq!(
            p.decide_action(1, 0.8, 0.55, THETA, XI1, XI2),
            Action::CreateTrue
        );
        assert!(!p.votes_falsely(1));
    }

    #[test]
    fn kill_chain_assignment_sizes() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let set = assign_kill_chains(&mut rng, 10, 4).unwrap();
        assert_eq!(set.len(), 4);
        assert!(set.iter().all(|&c| c < 10));
        assert!(assign_kill_chains(&mut rng, 10, 0).unwrap().is_empty());
        assert_eq!(assign_kill_chains(&mut rng, 3, 3).unwrap().len(), 3);
        assert_eq!(
            assign_kill_chains(&mut rng, 3, 4).unwrap_err(),
            BehaviorError::TooManyKillChains { k: 4, h: 3 }
        );
    }

    #[test]
    fn kill_chain_assignment_is_roughly_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut hits = [0u32; 10];
        let draws = 4000;
        for _ in 0..draws {
            for c in assign_kill_chains(&mut rng, 10, 4).unwrap() {
                hits[c as usize] += 1;
            }
        }
        let expect = draws as f64 * 0.4;
        for &h in &hits {
            assert!(
                (h as f64 - expect).abs() < expect * 0.15,
                "kill-chain frequency skew: {hits:?}"
            );
        }
    }

    /// Replay a per-chain sequence of intensive-attacker decisions through
    /// a counter pair, tracking the trust the engine would feed back.
    #[test]
    fn intensive_never_lets_false_lead() {
        let mut p = BehaviorProfile::intensive_dmb(kills(&[0]));
        let (mut tru, mut fal) = (0u64, 0u64);
        for _ in 0..500 {
            let lt = crate::trust::local_trust_value(tru, fal, THETA);
            let gt = lt;
            match p.decide_action(0, gt, lt, THETA, XI1, XI2) {
                Action::CreateTrue => tru += 1,
                Action::CreateFalse => fal += 1,
            }
            assert!(
                tru + 1 >= fal,
                "false blocks pulled ahead: tru={tru} fal={fal}"
            );
        }
        // alternation plus boosting keeps local trust at or above θ
        assert!(crate::trust::local_trust_value(tru, fal, THETA) >= THETA);
        assert!(fal > 0, "attacker never attacked in 500 opportunities");
    }

    proptest! {
        /// The phase machine must not chatter: leaving the boosting phase
        /// requires actually crossing the high line.
        #[test]
        fn hysteresis_requires_crossing(band in 0.61f64..0.89) {
            let mut p = BehaviorProfile::normal_dmb(kills(&[0]));
            // force boosting at the warning line
            p.decide_action(0, 0.6, 0.5, THETA, XI1, XI2);
            // wander anywhere inside the open band: still boosting
            prop_assert_eq!(
                p.decide_action(0, band, 0.5, THETA, XI1, XI2),
                Action::CreateTrue
            );
        }

        /// Same inputs and state always give the same action.
        #[test]
        fn decide_action_is_deterministic(gt in 0.0f64..1.0, lt in 0.0f64..1.0) {
            let mut a = BehaviorProfile::intensive_dmb(kills(&[0, 2]));
            let mut b = a.clone();
            for chain in [0u32, 1, 2] {
                prop_assert_eq!(
                    a.decide_action(chain, gt, lt, THETA, XI1, XI2),
                    b.decide_action(chain, gt, lt, THETA, XI1, XI2)
                );
            }
        }
    }
}
