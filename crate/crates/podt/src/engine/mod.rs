//! Cycle-based simulation engine.
//!
//! Every cycle runs one round of block creation on every chain: sampled
//! generators produce a block (ground truth is the majority of their
//! intents), sampled validators vote on its authenticity, and the chain
//! leader confirms the validation outcome. Counters, the side chain,
//! miner sets, and metrics all update per round.
//!
//! Miner-set maintenance is event-driven, mirroring the dynamic-update
//! rules: a user is dropped from the network set the moment their trust
//! falls below θ, per-chain qualification is re-evaluated only for users
//! whose state changed, and a full reselection runs when a set shrinks to
//! half the population. Per-round work is therefore proportional to the
//! handful of touched users, not to n, while the all-miners baseline
//! honestly pays for every user validating every block.
//!
//! Determinism: one ChaCha stream drives every random choice in a fixed
//! order, so a seed plus a config reproduces metrics and side-chain
//! hashes bit for bit.

mod config;
mod metrics;

pub use config::{AttackerFractions, ConfigError, Scheme, SimConfig};
pub use metrics::{compute_metrics, CycleMetrics, MetricsSeries, RoundOutcome, RunSummary};

use std::collections::BTreeSet;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use thiserror::Error;

use crate::behaviors::{assign_kill_chains, Action, BehaviorKind, BehaviorProfile};
use crate::dbp::{self, ChainContext, Label, LabeledSample, SvmModel, TrainOptions};
use crate::selection::{self, majority_quota, LeaderElection};
use crate::sidechain::{ExperienceRecord, SideChain, SideChainError};
use crate::trust::{TrustError, TrustLedger, TrustState};
use crate::{ChainId, UserId};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Trust(#[from] TrustError),
    #[error(transparent)]
    SideChain(#[from] SideChainError),
    #[error(transparent)]
    Dbp(#[from] dbp::DbpError),
}

/// Per-user creation activity over a run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CreationStats {
    pub first_cycle: Option<u32>,
    pub events: u32,
    pub false_events: u32,
}

/// Per-cycle trust trajectories of every user: global trust always, plus
/// local trust on each kill-chain.
#[derive(Debug, Clone)]
pub struct TrustTraces {
    n_users: u32,
    pub kill_chains: Vec<ChainId>,
    gt: Vec<f64>,
    kill_lt: Vec<f64>,
}

impl TrustTraces {
    fn new(n_users: u32, kill_chains: Vec<ChainId>) -> Self {
        Self {
            n_users,
            kill_chains,
            gt: Vec::new(),
            kill_lt: Vec::new(),
        }
    }

    fn record(&mut self, ledger: &TrustLedger) {
        for u in 0..self.n_users {
            self.gt.push(ledger.global_trust(u).unwrap());
        }
        for &j in &self.kill_chains {
            for u in 0..self.n_users {
                self.kill_lt.push(ledger.local_trust(u, j).unwrap());
            }
        }
    }

    pub fn cycles(&self) -> usize {
        self.gt.len() / self.n_users as usize
    }

    pub fn global_trust(&self, cycle: usize, user: UserId) -> f64 {
        self.gt[cycle * self.n_users as usize + user as usize]
    }

    /// Local trust on the `k`-th kill-chain (index into `kill_chains`).
    pub fn kill_local_trust(&self, cycle: usize, k: usize, user: UserId) -> f64 {
        let per_cycle = self.kill_chains.len() * self.n_users as usize;
        self.kill_lt[cycle * per_cycle + k * self.n_users as usize + user as usize]
    }
}

/// Structural observations collected while the run executes.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SelectionAudit {
    pub network_reselections: u32,
    /// Smallest network-miner set ever observed at a round start.
    pub min_network_size: usize,
    pub network_quota: usize,
    /// Smallest chain-miner set ever used by a round.
    pub min_chain_size: usize,
    /// Network set stayed strictly above half the population at every
    /// round of the run.
    pub network_sizes_ok: bool,
    /// Every round's chain-miner set stayed strictly above half the
    /// chain's peak active population.
    pub chain_sizes_ok: bool,
    pub skipped_rounds: u64,
    pub degenerate_elections: u32,
    /// Set when hard-margin training failed and the model fell back to a
    /// soft margin.
    pub soft_margin_fallback: bool,
}

/// Everything a finished run exposes for analysis and tests.
#[derive(Debug)]
pub struct RunResult {
    pub metrics: MetricsSeries,
    pub final_side_hash: [u8; 32],
    /// Users ever flagged by DBP while sitting in the trustworthy cluster.
    pub detected: BTreeSet<UserId>,
    /// Ground-truth behavior kind per user.
    pub kinds: Vec<BehaviorKind>,
    pub kill_chains: BTreeSet<ChainId>,
    pub creation_stats: Vec<CreationStats>,
    pub traces: Option<TrustTraces>,
    pub outcomes: Option<Vec<RoundOutcome>>,
    pub audit: SelectionAudit,
    pub ledger: TrustLedger,
    pub side: SideChain,
    pub model: Option<SvmModel>,
}

impl RunResult {
    pub fn ground_truth_of(&self, kind: BehaviorKind) -> Vec<UserId> {
        self.kinds
            .iter()
            .enumerate()
            .filter(|&(_, &k)| k == kind)
            .map(|(u, _)| u as UserId)
            .collect()
    }
}

/// Constant-time membership set over the dense user range with stable
/// swap-remove storage for index-based sampling.
#[derive(Debug, Clone)]
struct IndexedSet {
    items: Vec<UserId>,
    /// pos[u] = index + 1 in `items`, 0 when absent.
    pos: Vec<u32>,
}

impl IndexedSet {
    fn empty(n: usize) -> Self {
        Self {
            items: Vec::new(),
            pos: vec![0; n],
        }
    }

    fn full(n: usize) -> Self {
        Self {
            items: (0..n as UserId).collect(),
            pos: (1..=n as u32).collect(),
        }
    }

    fn len(&self) -> usize {
        self.items.len()
    }

    fn contains(&self, u: UserId) -> bool {
        self.pos[u as usize] != 0
    }

    fn insert(&mut self, u: UserId) {
        if !self.contains(u) {
            self.items.push(u);
            self.pos[u as usize] = self.items.len() as u32;
        }
    }

    fn remove(&mut self, u: UserId) {
        let p = self.pos[u as usize];
        if p == 0 {
            return;
        }
        let idx = (p - 1) as usize;
        let last = *self.items.last().unwrap();
        self.items.swap_remove(idx);
        self.pos[u as usize] = 0;
        if last != u {
            self.pos[last as usize] = p;
        }
    }

    fn set(&mut self, u: UserId, member: bool) {
        if member {
            self.insert(u);
        } else {
            self.remove(u);
        }
    }

    fn clear(&mut self) {
        for &u in &self.items {
            self.pos[u as usize] = 0;
        }
        self.items.clear();
    }
}

/// The chain-miner pool of one round: the maintained qualified set plus
/// this round's random pad.
#[derive(Clone, Copy)]
struct RoundPool<'a> {
    qualified: &'a [UserId],
    pad: &'a [UserId],
    all_users: bool,
    n: u32,
}

impl RoundPool<'_> {
    fn len(&self) -> usize {
        if self.all_users {
            self.n as usize
        } else {
            self.qualified.len() + self.pad.len()
        }
    }

    fn get(&self, idx: usize) -> UserId {
        if self.all_users {
            idx as UserId
        } else if idx < self.qualified.len() {
            self.qualified[idx]
        } else {
            self.pad[idx - self.qualified.len()]
        }
    }
}

/// Uniform `k`-subset of `pool` as an indexed membership set over `n`.
fn sample_pool_set<R: Rng>(rng: &mut R, pool: &[UserId], k: usize, n: usize) -> IndexedSet {
    let take = k.min(pool.len());
    let mut ids = pool.to_vec();
    let mut set = IndexedSet::empty(n);
    for i in 0..take {
        let j = rng.gen_range(i..ids.len());
        ids.swap(i, j);
        set.insert(ids[i]);
    }
    set
}

/// Draw `count` distinct pool indices not present in `exclude`.
fn sample_indices<R: Rng>(
    rng: &mut R,
    pool_len: usize,
    count: usize,
    exclude: &[usize],
) -> Vec<usize> {
    let avail = pool_len.saturating_sub(exclude.len());
    let want = count.min(avail);
    let mut out = Vec::with_capacity(want);
    if want == 0 {
        return out;
    }
    if want * 3 >= pool_len {
        // dense draw: shuffle the explicit candidate list
        let mut candidates: Vec<usize> =
            (0..pool_len).filter(|i| !exclude.contains(i)).collect();
        for i in 0..want {
            let j = rng.gen_range(i..candidates.len());
            candidates.swap(i, j);
            out.push(candidates[i]);
        }
    } else {
        while out.len() < want {
            let i = rng.gen_range(0..pool_len);
            if !exclude.contains(&i) && !out.contains(&i) {
                out.push(i);
            }
        }
    }
    out
}

pub struct Simulation {
    cfg: SimConfig,
    rng: ChaCha12Rng,
    ledger: TrustLedger,
    side: SideChain,
    profiles: Vec<BehaviorProfile>,
    kinds: Vec<BehaviorKind>,
    kill_chains: BTreeSet<ChainId>,

    /// Active users per chain (everyone, unless chain affinity is on).
    active: Vec<Vec<UserId>>,
    active_mask: Vec<Vec<bool>>,
    chain_quota: Vec<usize>,

    network: IndexedSet,
    qualified: Vec<IndexedSet>,
    leaders: Vec<Option<UserId>>,
    leader_terms: Vec<u32>,
    leader_fal_at_election: Vec<u64>,

    model: Option<SvmModel>,
    /// per chain, per user: latest-record prediction is +1
    personal_flag: Vec<Vec<bool>>,
    has_record: Vec<Vec<bool>>,
    newcomer_flag: Vec<bool>,
    detected: BTreeSet<UserId>,
    next_train_attempt: u32,
    next_retrain: Option<u32>,
    /// Users whose detection inputs changed since the last sweep.
    dirty: Vec<UserId>,
    dirty_mask: Vec<bool>,

    chain_len: Vec<u64>,
    creation_stats: Vec<CreationStats>,
    traces: Option<TrustTraces>,
    outcomes: Option<Vec<RoundOutcome>>,
    audit: SelectionAudit,
    storage_replicas: u64,

    scratch_pad: Vec<UserId>,
}

impl Simulation {
    pub fn new(cfg: SimConfig) -> Result<Self, EngineError> {
        cfg.validate()?;
        let n = cfg.n_users;
        let h = cfg.n_chains;
        let mut rng = ChaCha12Rng::seed_from_u64(cfg.rng_seed);

        let kill_chains = assign_kill_chains(&mut rng, h, cfg.kill_chain_count)
            .expect("validated kill-chain count");

        // population mix: shuffle ids, slice off each attacker kind
        let mut ids: Vec<UserId> = (0..n).collect();
        for i in 0..n as usize {
            let j = rng.gen_range(i..n as usize);
            ids.swap(i, j);
        }
        let count = |f: f64| ((n as f64 * f).round() as usize).min(n as usize);
        let n_ord = count(cfg.fractions.ordinary);
        let n_norm = count(cfg.fractions.normal_dmb).min(n as usize - n_ord);
        let n_int = count(cfg.fractions.intensive_dmb).min(n as usize - n_ord - n_norm);
        let mut kinds = vec![BehaviorKind::Honest; n as usize];
        let mut profiles: Vec<BehaviorProfile> =
            (0..n).map(|_| BehaviorProfile::honest()).collect();
        for (slot, &u) in ids.iter().enumerate() {
            let (kind, profile) = if slot < n_ord {
                (BehaviorKind::Ordinary, BehaviorProfile::ordinary())
            } else if slot < n_ord + n_norm {
                (
                    BehaviorKind::NormalDmb,
                    BehaviorProfile::normal_dmb(kill_chains.clone()),
                )
            } else if slot < n_ord + n_norm + n_int {
                (
                    BehaviorKind::IntensiveDmb,
                    BehaviorProfile::intensive_dmb(kill_chains.clone()),
                )
            } else {
                (BehaviorKind::Honest, BehaviorProfile::honest())
            };
            kinds[u as usize] = kind;
            profiles[u as usize] = profile;
        }

        let ledger = TrustLedger::new(n, h, cfg.theta)?;
        let side = SideChain::new(h, cfg.theta);
        let model = match &cfg.model_path {
            Some(p) => Some(SvmModel::load(p)?),
            None => None,
        };

        // active-user sets: everyone everywhere, or home chains for the
        // honest population with attackers present on every chain
        let mut active: Vec<Vec<UserId>> = vec![Vec::new(); h as usize];
        if cfg.chain_affinity {
            for u in 0..n {
                if kinds[u as usize] == BehaviorKind::Honest {
                    let home = rng.gen_range(0..h);
                    active[home as usize].push(u);
                } else {
                    for j in 0..h {
                        active[j as usize].push(u);
                    }
                }
            }
        } else {
            for j in 0..h {
                active[j as usize] = (0..n).collect();
            }
        }
        let mut active_mask = vec![vec![false; n as usize]; h as usize];
        for (j, users) in active.iter().enumerate() {
            for &u in users {
                active_mask[j][u as usize] = true;
            }
        }
        let chain_quota: Vec<usize> = active.iter().map(|a| majority_quota(a.len())).collect();

        let traces = cfg.trace_trust.then(|| {
            TrustTraces::new(n, kill_chains.iter().copied().collect())
        });
        let outcomes = cfg.keep_outcomes.then(Vec::new);
        let calibration = cfg.calibration_cycles;

        let mut sim = Self {
            rng,
            ledger,
            side,
            profiles,
            kinds,
            kill_chains,
            active,
            active_mask,
            chain_quota,
            network: IndexedSet::empty(n as usize),
            qualified: (0..h).map(|_| IndexedSet::empty(n as usize)).collect(),
            leaders: vec![None; h as usize],
            leader_terms: vec![0; h as usize],
            leader_fal_at_election: vec![0; h as usize],
            model,
            personal_flag: vec![vec![false; n as usize]; h as usize],
            has_record: vec![vec![false; n as usize]; h as usize],
            newcomer_flag: vec![false; h as usize],
            detected: BTreeSet::new(),
            next_train_attempt: calibration,
            next_retrain: None,
            dirty: Vec::new(),
            dirty_mask: vec![false; n as usize],
            chain_len: vec![0; h as usize],
            creation_stats: vec![CreationStats::default(); n as usize],
            traces,
            outcomes,
            audit: SelectionAudit {
                min_network_size: usize::MAX,
                network_quota: majority_quota(n as usize),
                min_chain_size: usize::MAX,
                network_sizes_ok: true,
                chain_sizes_ok: true,
                ..SelectionAudit::default()
            },
            storage_replicas: 0,
            scratch_pad: Vec::new(),
            cfg,
        };
        sim.initial_selection();
        Ok(sim)
    }

    fn mark_dirty(&mut self, u: UserId) {
        if !self.dirty_mask[u as usize] {
            self.dirty_mask[u as usize] = true;
            self.dirty.push(u);
        }
    }

    /// Validate, build, and run a configuration to completion.
    pub fn run(cfg: SimConfig) -> Result<RunResult, EngineError> {
        let mut sim = Self::new(cfg)?;
        Ok(sim.run_to_completion())
    }

    pub fn run_to_completion(&mut self) -> RunResult {
        let started = Instant::now();
        let mut per_cycle = Vec::with_capacity(self.cfg.cycles as usize);
        for cycle in 0..self.cfg.cycles {
            per_cycle.push(self.run_cycle(cycle));
        }
        let wall = started.elapsed().as_secs_f64();
        self.finish(per_cycle, wall)
    }

    fn network_trust(&self, u: UserId) -> f64 {
        match self.cfg.scheme {
            Scheme::Baseline => self.ledger.baseline_trust(u).unwrap(),
            _ => self.ledger.global_trust(u).unwrap(),
        }
    }

    /// Leader-election false count under the scheme's trust notion.
    fn scheme_false_count(&self, u: UserId, chain: ChainId) -> u64 {
        match self.cfg.scheme {
            Scheme::Baseline => self.ledger.totals(u).unwrap().fal,
            _ => self.ledger.counters(u, chain).unwrap().fal,
        }
    }

    fn scheme_local_trust(&self, u: UserId, chain: ChainId) -> f64 {
        match self.cfg.scheme {
            Scheme::Baseline => self.ledger.baseline_trust(u).unwrap(),
            _ => self.ledger.local_trust(u, chain).unwrap(),
        }
    }

    fn is_flagged(&self, u: UserId, chain: ChainId) -> bool {
        if self.model.is_none() || self.cfg.scheme != Scheme::PoDT {
            return false;
        }
        if self.has_record[chain as usize][u as usize] {
            self.personal_flag[chain as usize][u as usize]
        } else {
            self.newcomer_flag[chain as usize]
        }
    }

    fn is_qualified(&self, u: UserId, chain: ChainId) -> bool {
        if !self.active_mask[chain as usize][u as usize]
            && self.cfg.scheme != Scheme::AllMiners
        {
            return false;
        }
        match self.cfg.scheme {
            Scheme::PoDT => {
                self.network.contains(u)
                    && !self.is_flagged(u, chain)
                    && self.ledger.local_trust(u, chain).unwrap() >= self.cfg.theta
            }
            Scheme::DiscTrustOnly => {
                self.network.contains(u)
                    && self.ledger.local_trust(u, chain).unwrap() >= self.cfg.theta
            }
            Scheme::Baseline => self.network.contains(u),
            Scheme::AllMiners => true,
            // random sets are assigned directly, never recomputed per user
            Scheme::RandomMiners => self.qualified[chain as usize].contains(u),
        }
    }

    fn chain_context(&self, chain: ChainId) -> ChainContext {
        ChainContext {
            theta: self.cfg.theta,
            chain_len: self.chain_len[chain as usize],
            active_users: self.cfg.n_users as u64,
            feedback: self.cfg.feedback_mode,
        }
    }

    fn initial_selection(&mut self) {
        let n = self.cfg.n_users as usize;
        match self.cfg.scheme {
            Scheme::AllMiners => {
                self.network = IndexedSet::full(n);
                for q in &mut self.qualified {
                    *q = IndexedSet::full(n);
                }
            }
            Scheme::RandomMiners => self.resample_random_sets(),
            _ => {
                let trusts: Vec<f64> = (0..self.cfg.n_users)
                    .map(|u| self.network_trust(u))
                    .collect();
                let selected =
                    selection::select_network_miners(&trusts, self.cfg.theta, &mut self.rng);
                self.network = IndexedSet::empty(n);
                for u in selected {
                    self.network.insert(u);
                }
                self.rebuild_all_qualifications();
            }
        }
        self.sync_authorized();
    }

    fn rebuild_all_qualifications(&mut self) {
        if matches!(self.cfg.scheme, Scheme::AllMiners | Scheme::RandomMiners) {
            return;
        }
        for j in 0..self.cfg.n_chains {
            let mut set = std::mem::replace(
                &mut self.qualified[j as usize],
                IndexedSet::empty(0),
            );
            set.clear();
            let users = std::mem::take(&mut self.active[j as usize]);
            for &u in &users {
                if self.is_qualified(u, j) {
                    set.insert(u);
                }
            }
            self.active[j as usize] = users;
            self.qualified[j as usize] = set;
        }
    }

    fn resample_random_sets(&mut self) {
        let n = self.cfg.n_users as usize;
        let all: Vec<UserId> = (0..n as UserId).collect();
        self.network = sample_pool_set(&mut self.rng, &all, majority_quota(n), n);
        for j in 0..self.cfg.n_chains as usize {
            let pool = std::mem::take(&mut self.active[j]);
            self.qualified[j] = sample_pool_set(&mut self.rng, &pool, self.chain_quota[j], n);
            self.active[j] = pool;
        }
    }

    fn sync_authorized(&mut self) {
        let mut auth: BTreeSet<UserId> = self.network.items.iter().copied().collect();
        auth.extend(self.leaders.iter().flatten().copied());
        self.side.set_authorized(auth);
    }

    /// Re-evaluate one user's standing after their counters changed.
    fn on_user_touched(&mut self, u: UserId, chain: ChainId) {
        self.mark_dirty(u);
        match self.cfg.scheme {
            Scheme::AllMiners | Scheme::RandomMiners => return,
            _ => {}
        }
        // network eviction the moment trust drops below θ
        if self.network.contains(u) && self.network_trust(u) < self.cfg.theta {
            self.network.remove(u);
            if self.network.len() < majority_quota(self.cfg.n_users as usize) {
                self.reselect_network();
                return;
            }
        }
        // the new record changes this user's features on this chain only
        if self.model.is_some() && self.cfg.scheme == Scheme::PoDT {
            let ctx = self.chain_context(chain);
            let f = dbp::feature_for_user(&self.side, u, chain, &ctx);
            let flagged = self.model.as_ref().unwrap().predict(&f) == Label::Intensive;
            self.personal_flag[chain as usize][u as usize] = flagged;
        }
        for j in 0..self.cfg.n_chains {
            let q = self.is_qualified(u, j);
            self.qualified[j as usize].set(u, q);
        }
    }

    fn reselect_network(&mut self) {
        let trusts: Vec<f64> = (0..self.cfg.n_users)
            .map(|u| self.network_trust(u))
            .collect();
        let selected = selection::select_network_miners(&trusts, self.cfg.theta, &mut self.rng);
        self.network.clear();
        for u in selected {
            self.network.insert(u);
        }
        self.audit.network_reselections += 1;
        self.rebuild_all_qualifications();
        self.sync_authorized();
    }

    /// Refresh the shared newcomer prediction for a chain; a flip in the
    /// shared flag re-gates every user without a record there.
    fn refresh_newcomer_flag(&mut self, chain: ChainId) {
        if self.cfg.scheme != Scheme::PoDT {
            return;
        }
        let flagged = {
            let Some(model) = &self.model else { return };
            let ctx = self.chain_context(chain);
            let f = dbp::newcomer_features(ctx.theta, ctx.chain_len, ctx.active_users);
            model.predict(&f) == Label::Intensive
        };
        if flagged != self.newcomer_flag[chain as usize] {
            self.newcomer_flag[chain as usize] = flagged;
            let users = std::mem::take(&mut self.active[chain as usize]);
            for &u in &users {
                if !self.has_record[chain as usize][u as usize] {
                    let q = self.is_qualified(u, chain);
                    self.qualified[chain as usize].set(u, q);
                    self.mark_dirty(u);
                }
            }
            self.active[chain as usize] = users;
        }
    }

    fn run_round(&mut self, cycle: u32, chain: ChainId) -> RoundOutcome {
        let cfg_n = self.cfg.n_users;
        let j = chain as usize;
        let quota = majority_quota(cfg_n as usize);
        self.refresh_newcomer_flag(chain);

        // round pool: qualified members plus a fresh random pad
        let all_users = self.cfg.scheme == Scheme::AllMiners;
        let mut pad: Vec<UserId> = Vec::new();
        if !all_users && self.qualified[j].len() < quota {
            let need = quota - self.qualified[j].len();
            let strict = self.cfg.strict_rule4_pad;
            self.scratch_pad.clear();
            for u in 0..cfg_n {
                if !self.qualified[j].contains(u) && (!strict || self.network.contains(u)) {
                    self.scratch_pad.push(u);
                }
            }
            let take = need.min(self.scratch_pad.len());
            for i in 0..take {
                let r = self.rng.gen_range(i..self.scratch_pad.len());
                self.scratch_pad.swap(i, r);
                pad.push(self.scratch_pad[i]);
            }
        }
        let pool = RoundPool {
            qualified: &self.qualified[j].items,
            pad: &pad,
            all_users,
            n: cfg_n,
        };
        let total = pool.len();
        self.audit.min_network_size = self.audit.min_network_size.min(self.network.len());
        if total == 0 {
            log::warn!("chain {chain}: empty miner set, skipping round");
            self.audit.skipped_rounds += 1;
            return RoundOutcome {
                chain_id: chain,
                generator_ids: Vec::new(),
                validator_ids: Vec::new(),
                leader_id: 0,
                block_is_true: false,
                accepted: false,
                feedback: 0.0,
                messages_sent: 0,
                false_intents: 0,
                replicas: 0,
                skipped: true,
            };
        }
        self.audit.min_chain_size = self.audit.min_chain_size.min(total);

        // leader upkeep: missing, expired, fell out of the pool, or
        // created a false block since election
        let member = |u: UserId| all_users || self.qualified[j].contains(u) || pad.contains(&u);
        let needs_election = match self.leaders[j] {
            None => true,
            Some(l) => {
                !member(l)
                    || self.leader_terms[j] == 0
                    || self.scheme_false_count(l, chain) > self.leader_fal_at_election[j]
            }
        };
        let mut new_leader = None;
        if needs_election {
            let leader = match self.cfg.scheme {
                Scheme::AllMiners | Scheme::RandomMiners => {
                    pool.get(self.rng.gen_range(0..total))
                }
                _ => {
                    let members: BTreeSet<UserId> = self.qualified[j]
                        .items
                        .iter()
                        .chain(pad.iter())
                        .copied()
                        .collect();
                    let LeaderElection { leader, degenerate } = selection::elect_leader(
                        &members,
                        chain,
                        |u| self.scheme_false_count(u, chain),
                        |u| self.scheme_local_trust(u, chain),
                    )
                    .expect("pool is nonempty");
                    if degenerate {
                        self.audit.degenerate_elections += 1;
                    }
                    leader
                }
            };
            new_leader = Some(leader);
        }

        // block generation: sampled generators act by their own profiles
        let gen_idx = sample_indices(&mut self.rng, total, self.cfg.k_gen as usize, &[]);
        let generators: Vec<UserId> = gen_idx.iter().map(|&i| pool.get(i)).collect();

        // validation: disjoint sample votes, every miner under all-miners
        let validators: Vec<UserId> = if all_users {
            (0..cfg_n).filter(|u| !generators.contains(u)).collect()
        } else {
            sample_indices(&mut self.rng, total, self.cfg.k_val as usize, &gen_idx)
                .iter()
                .map(|&i| pool.get(i))
                .collect()
        };
        drop(pad);

        if let Some(leader) = new_leader {
            self.leaders[j] = Some(leader);
            self.leader_terms[j] = self.cfg.leader_term;
            self.leader_fal_at_election[j] = self.scheme_false_count(leader, chain);
            self.side.authorize(leader);
        }
        let leader = self.leaders[j].unwrap();
        self.leader_terms[j] = self.leader_terms[j].saturating_sub(1);

        let mut true_intents = 0u32;
        let mut false_intents = 0u32;
        for &g in &generators {
            let gt = self.ledger.global_trust(g).unwrap();
            let lt = self.ledger.local_trust(g, chain).unwrap();
            let action = self.profiles[g as usize].decide_action(
                chain,
                gt,
                lt,
                self.cfg.theta,
                self.cfg.xi1,
                self.cfg.xi2,
            );
            match action {
                Action::CreateTrue => true_intents += 1,
                Action::CreateFalse => false_intents += 1,
            }
        }
        let block_is_true = 2 * true_intents > generators.len() as u32;

        let mut votes_true = 0usize;
        for &v in &validators {
            let vote = if self.profiles[v as usize].votes_falsely(chain) {
                !block_is_true
            } else {
                block_is_true
            };
            if vote {
                votes_true += 1;
            }
        }
        let outcome_valid = 2 * votes_true > validators.len();
        // the leader confirms the validation outcome; an attacking leader
        // subverts the confirmation it broadcasts
        let leader_confirms = if self.profiles[leader as usize].votes_falsely(chain) {
            !outcome_valid
        } else {
            outcome_valid
        };
        let accepted = outcome_valid && leader_confirms;
        let feedback = if validators.is_empty() {
            0.0
        } else {
            votes_true as f64 / validators.len() as f64
        };

        if accepted {
            self.chain_len[j] += 1;
            self.storage_replicas += total as u64;
        }

        // counters update with the block's ground truth, then the round's
        // experience records go to the side chain in one block
        for &g in &generators {
            self.ledger.record_block(g, chain, block_is_true).unwrap();
            let stats = &mut self.creation_stats[g as usize];
            stats.events += 1;
            if stats.first_cycle.is_none() {
                stats.first_cycle = Some(cycle);
            }
            if !block_is_true {
                stats.false_events += 1;
            }
        }
        let mut records = Vec::with_capacity(generators.len());
        for &g in &generators {
            let totals = self.ledger.totals(g).unwrap();
            records.push(ExperienceRecord {
                user_id: g,
                chain_id: chain,
                lt_ij: self.ledger.local_trust(g, chain).unwrap(),
                gt_i: self.ledger.global_trust(g).unwrap(),
                t_i: totals.tru,
                f_i: totals.fal,
                chain_len: self.chain_len[j],
                active_users: cfg_n as u64,
                feedback,
            });
            self.has_record[j][g as usize] = true;
        }
        self.side
            .append_block(records, leader, chain)
            .expect("leader is authorized");
        for &g in &generators {
            self.on_user_touched(g, chain);
        }

        // analytic message model: generation broadcast to the miner set,
        // one vote per validator, leader broadcast to all active users;
        // all-miners validation is all-to-all
        let messages = if all_users {
            self.cfg.k_gen as u64 * cfg_n as u64 + (cfg_n as u64).pow(2) + cfg_n as u64
        } else {
            self.cfg.k_gen as u64 * total as u64 + validators.len() as u64 + cfg_n as u64
        };

        RoundOutcome {
            chain_id: chain,
            generator_ids: generators,
            validator_ids: if self.cfg.keep_outcomes {
                validators
            } else {
                Vec::new()
            },
            leader_id: leader,
            block_is_true,
            accepted,
            feedback,
            messages_sent: messages,
            false_intents,
            replicas: total as u32,
            skipped: false,
        }
    }

    fn run_cycle(&mut self, cycle: u32) -> CycleMetrics {
        let started = Instant::now();
        if self.cfg.scheme == Scheme::RandomMiners {
            self.resample_random_sets();
            self.sync_authorized();
        }
        let mut cm = CycleMetrics::new(cycle);
        let mut accepted_false = 0u64;
        for chain in 0..self.cfg.n_chains {
            let outcome = self.run_round(cycle, chain);
            cm.absorb(&outcome, &mut accepted_false);
            if let Some(all) = &mut self.outcomes {
                all.push(outcome);
            }
        }
        cm.finish(accepted_false);

        self.dbp_lifecycle(cycle);
        if self.model.is_some() && self.cfg.scheme == Scheme::PoDT {
            self.update_detected();
        }
        if let Some(t) = &mut self.traces {
            t.record(&self.ledger);
        }
        cm.wall_ms = started.elapsed().as_secs_f64() * 1e3;
        cm
    }

    fn dbp_lifecycle(&mut self, cycle: u32) {
        if self.cfg.scheme != Scheme::PoDT {
            return;
        }
        let done = cycle + 1;
        if self.model.is_none() && self.cfg.model_path.is_none() && done >= self.next_train_attempt
        {
            match self.train_from_ground_truth() {
                Ok(model) => {
                    self.install_model(model);
                    self.next_retrain = self.cfg.retrain_interval.map(|r| done + r);
                }
                Err(e) => {
                    log::warn!("cycle {cycle}: DBP training unavailable ({e}); retrying later");
                    self.next_train_attempt = done + 50;
                }
            }
        } else if let (Some(at), Some(interval)) = (self.next_retrain, self.cfg.retrain_interval) {
            if done >= at {
                match self.train_from_feedback() {
                    Ok(model) => self.install_model(model),
                    Err(e) => log::warn!("cycle {cycle}: DBP retraining skipped ({e})"),
                }
                self.next_retrain = Some(done + interval);
            }
        }
    }

    fn install_model(&mut self, model: SvmModel) {
        self.model = Some(model);
        // full re-gate: personal flags for recorded pairs, shared flags
        // for newcomers, then every qualification
        for j in 0..self.cfg.n_chains {
            let ctx = self.chain_context(j);
            let model = self.model.as_ref().unwrap();
            let f = dbp::newcomer_features(ctx.theta, ctx.chain_len, ctx.active_users);
            self.newcomer_flag[j as usize] = model.predict(&f) == Label::Intensive;
            for u in 0..self.cfg.n_users {
                if self.has_record[j as usize][u as usize] {
                    let f = dbp::feature_for_user(&self.side, u, j, &ctx);
                    self.personal_flag[j as usize][u as usize] =
                        model.predict(&f) == Label::Intensive;
                }
            }
        }
        self.rebuild_all_qualifications();
    }

    /// Calibration training: ground-truth labels from the behavior
    /// profiles, honest vs intensive records only.
    fn train_from_ground_truth(&mut self) -> Result<SvmModel, dbp::DbpError> {
        let mut samples = Vec::new();
        for block in self.side.blocks() {
            for rec in &block.body {
                let label = match self.kinds[rec.user_id as usize] {
                    BehaviorKind::Honest => Label::Trusted,
                    BehaviorKind::IntensiveDmb => Label::Intensive,
                    _ => continue,
                };
                samples.push(LabeledSample {
                    features: dbp::extract_features(rec),
                    label,
                });
            }
        }
        self.train_samples(samples)
    }

    /// Feedback-derived retraining: a user's samples relabel +1 when any
    /// of their recent blocks on the chain drew majority-false feedback.
    fn train_from_feedback(&mut self) -> Result<SvmModel, dbp::DbpError> {
        let window = 5;
        let mut samples = Vec::new();
        for u in 0..self.cfg.n_users {
            for j in 0..self.cfg.n_chains {
                let hist = self.side.query_history(u, j, window);
                let Some(last) = hist.last() else { continue };
                let label = if hist.iter().any(|r| r.feedback < 0.5) {
                    Label::Intensive
                } else {
                    Label::Trusted
                };
                samples.push(LabeledSample {
                    features: dbp::extract_features(last),
                    label,
                });
            }
        }
        self.train_samples(samples)
    }

    fn train_samples(
        &mut self,
        mut samples: Vec<LabeledSample>,
    ) -> Result<SvmModel, dbp::DbpError> {
        if samples.len() > self.cfg.max_train_samples {
            // deterministic even thinning keeps the time spread
            let stride = samples.len() as f64 / self.cfg.max_train_samples as f64;
            let mut kept = Vec::with_capacity(self.cfg.max_train_samples);
            let mut at = 0.0f64;
            while (at as usize) < samples.len() && kept.len() < self.cfg.max_train_samples {
                kept.push(samples[at as usize]);
                at += stride;
            }
            samples = kept;
        }
        match dbp::train(&samples) {
            Ok(m) => Ok(m),
            Err(dbp::DbpError::NonSeparable { .. }) => {
                log::warn!(
                    "hard-margin training infeasible on {} samples; falling back to soft margin",
                    samples.len()
                );
                self.audit.soft_margin_fallback = true;
                dbp::train_with(
                    &samples,
                    TrainOptions {
                        standardize: true,
                        soft_margin_c: Some(1.0),
                    },
                )
            }
            Err(e) => Err(e),
        }
    }

    /// Union in every trustworthy-cluster user currently flagged on some
    /// chain (the per-cycle intensive-attacker detection sweep).
    fn update_detected(&mut self) {
        for u in 0..self.cfg.n_users {
            if self.detected.contains(&u) {
                continue;
            }
            let gt = self.ledger.global_trust(u).unwrap();
            let lambda = self.ledger.count_low_local(u).unwrap();
            let state = crate::trust::classify_state(gt, lambda, self.cfg.n_chains, self.cfg.theta);
            if state != TrustState::Trustworthy {
                continue;
            }
            if (0..self.cfg.n_chains).any(|j| self.is_flagged(u, j)) {
                self.detected.insert(u);
            }
        }
    }

    fn finish(&mut self, per_cycle: Vec<CycleMetrics>, wall_secs: f64) -> RunResult {
        let blocks_created: u64 = per_cycle.iter().map(|c| c.blocks_created).sum();
        let blocks_accepted: u64 = per_cycle.iter().map(|c| c.blocks_accepted).sum();
        let accepted_true: u64 = per_cycle.iter().map(|c| c.blocks_accepted_true).sum();
        let truth: Vec<UserId> = self
            .kinds
            .iter()
            .enumerate()
            .filter(|&(_, &k)| k == BehaviorKind::IntensiveDmb)
            .map(|(u, _)| u as UserId)
            .collect();
        let caught = truth.iter().filter(|u| self.detected.contains(u)).count();
        let detection_rate = if truth.is_empty() {
            1.0
        } else {
            caught as f64 / truth.len() as f64
        };
        let mean_cycle_wall_ms = if per_cycle.is_empty() {
            0.0
        } else {
            per_cycle.iter().map(|c| c.wall_ms).sum::<f64>() / per_cycle.len() as f64
        };
        let summary = RunSummary {
            scheme: self.cfg.scheme.name().to_string(),
            seed: self.cfg.rng_seed,
            cycles: self.cfg.cycles,
            n_users: self.cfg.n_users,
            n_chains: self.cfg.n_chains,
            accuracy: if blocks_accepted > 0 {
                accepted_true as f64 / blocks_accepted as f64
            } else {
                1.0
            },
            detection_rate,
            network_overload: per_cycle.iter().map(|c| c.messages).sum(),
            storage_volume_mb: self.storage_replicas as f64,
            wall_time_secs: wall_secs,
            mean_cycle_wall_ms,
            blocks_created,
            blocks_accepted,
            malicious_responses: per_cycle.iter().map(|c| c.malicious_responses).sum(),
            skipped_rounds: self.audit.skipped_rounds,
            detected_intensive: self.detected.len(),
            ground_truth_intensive: truth.len(),
        };
        if self.audit.min_network_size == usize::MAX {
            self.audit.min_network_size = self.network.len();
        }
        if self.audit.min_chain_size == usize::MAX {
            self.audit.min_chain_size = 0;
        }
        RunResult {
            metrics: MetricsSeries { per_cycle, summary },
            final_side_hash: self.side.last_hash(),
            detected: std::mem::take(&mut self.detected),
            kinds: std::mem::take(&mut self.kinds),
            kill_chains: std::mem::take(&mut self.kill_chains),
            creation_stats: std::mem::take(&mut self.creation_stats),
            traces: self.traces.take(),
            outcomes: self.outcomes.take(),
            audit: self.audit,
            ledger: self.ledger.clone(),
            side: self.side.clone(),
            model: self.model.take(),
        }
    }
}
