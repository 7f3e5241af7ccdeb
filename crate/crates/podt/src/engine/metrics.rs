//! Per-cycle and per-run metrics.
//!
//! The per-cycle CSV contract is fixed: `cycle, malicious_responses,
//! attack_success_ratio, blocks_created, blocks_accepted`, full-precision
//! floats, byte-identical across same-seed runs. Message counts and wall
//! times ride along in the structs but stay out of that file.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::{ChainId, UserId};

/// Everything that happened in one round of block creation on one chain.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundOutcome {
    pub chain_id: ChainId,
    pub generator_ids: Vec<UserId>,
    pub validator_ids: Vec<UserId>,
    pub leader_id: UserId,
    /// Ground truth of the produced block (majority of generator intents).
    pub block_is_true: bool,
    pub accepted: bool,
    /// Fraction of validators that voted the block authentic.
    pub feedback: f64,
    pub messages_sent: u64,
    /// How many selected generators chose to create a false block.
    pub false_intents: u32,
    /// Chain-miner count at this round, the replica count for storage.
    pub replicas: u32,
    pub skipped: bool,
}

/// Aggregated counters for one cycle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CycleMetrics {
    pub cycle: u32,
    /// False-block creation actions by selected generators.
    pub malicious_responses: u64,
    /// Accepted false blocks over created blocks this cycle.
    pub attack_success_ratio: f64,
    pub blocks_created: u64,
    pub blocks_accepted: u64,
    pub blocks_accepted_true: u64,
    /// Analytic message count for the cycle (not part of the CSV contract).
    pub messages: u64,
    /// Wall-clock time of this cycle in milliseconds (not in the CSV).
    pub wall_ms: f64,
}

impl CycleMetrics {
    pub fn new(cycle: u32) -> Self {
        Self {
            cycle,
            malicious_responses: 0,
            attack_success_ratio: 0.0,
            blocks_created: 0,
            blocks_accepted: 0,
            blocks_accepted_true: 0,
            messages: 0,
            wall_ms: 0.0,
        }
    }

    /// Fold one round into the cycle counters.
    pub fn absorb(&mut self, outcome: &RoundOutcome, accepted_false: &mut u64) {
        self.messages += outcome.messages_sent;
        if outcome.skipped {
            return;
        }
        self.blocks_created += 1;
        self.malicious_responses += u64::from(outcome.false_intents);
        if outcome.accepted {
            self.blocks_accepted += 1;
            if outcome.block_is_true {
                self.blocks_accepted_true += 1;
            } else {
                *accepted_false += 1;
            }
        }
    }

    pub fn finish(&mut self, accepted_false: u64) {
        self.attack_success_ratio = if self.blocks_created > 0 {
            accepted_false as f64 / self.blocks_created as f64
        } else {
            0.0
        };
    }
}

/// Run-level summary written as JSON next to the per-cycle CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub scheme: String,
    pub seed: u64,
    pub cycles: u32,
    pub n_users: u32,
    pub n_chains: u32,
    /// Accepted true blocks over all accepted blocks (1.0 when nothing
    /// was accepted).
    pub accuracy: f64,
    /// Share of ground-truth intensive attackers ever flagged by DBP
    /// (1.0 when the run has none).
    pub detection_rate: f64,
    /// Total analytic message count.
    pub network_overload: u64,
    /// Replica-weighted accepted block storage, one block = 1 MB.
    pub storage_volume_mb: f64,
    pub wall_time_secs: f64,
    pub mean_cycle_wall_ms: f64,
    pub blocks_created: u64,
    pub blocks_accepted: u64,
    pub malicious_responses: u64,
    pub skipped_rounds: u64,
    pub detected_intensive: usize,
    pub ground_truth_intensive: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsSeries {
    pub per_cycle: Vec<CycleMetrics>,
    pub summary: RunSummary,
}

impl MetricsSeries {
    /// Write the per-cycle contract CSV. Floats use the shortest exact
    /// decimal representation, so equal runs produce equal bytes.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(
            w,
            "cycle,malicious_responses,attack_success_ratio,blocks_created,blocks_accepted"
        )?;
        for c in &self.per_cycle {
            writeln!(
                w,
                "{},{},{},{},{}",
                c.cycle,
                c.malicious_responses,
                c.attack_success_ratio,
                c.blocks_created,
                c.blocks_accepted
            )?;
        }
        Ok(())
    }

    pub fn write_summary_json<W: Write>(&self, w: W) -> serde_json::Result<()> {
        serde_json::to_writer_pretty(w, &self.summary)
    }

    /// Cumulative malicious responses up to and including `cycle`.
    pub fn cumulative_malicious(&self, cycle: u32) -> u64 {
        self.per_cycle
            .iter()
            .filter(|c| c.cycle <= cycle)
            .map(|c| c.malicious_responses)
            .sum()
    }

    /// Mean attack success ratio over the last `window` cycles.
    pub fn mean_tail_attack_ratio(&self, window: usize) -> f64 {
        let tail = self
            .per_cycle
            .iter()
            .rev()
            .take(window)
            .map(|c| c.attack_success_ratio)
            .collect::<Vec<_>>();
        if tail.is_empty() {
            0.0
        } else {
            tail.iter().sum::<f64>() / tail.len() as f64
        }
    }
}

/// Rebuild a metrics series from raw round outcomes (cycle-major order,
/// `n_chains` rounds per cycle). The run-level fields that depend on
/// engine state (detection, wall time) stay at their defaults.
pub fn compute_metrics(outcomes: &[RoundOutcome], n_chains: u32) -> MetricsSeries {
    let h = n_chains.max(1) as usize;
    let mut per_cycle = Vec::new();
    let mut skipped = 0u64;
    let mut storage_replicas = 0u64;
    for (cycle, chunk) in outcomes.chunks(h).enumerate() {
        let mut cm = CycleMetrics::new(cycle as u32);
        let mut accepted_false = 0u64;
        for o in chunk {
            cm.absorb(o, &mut accepted_false);
            if o.skipped {
                skipped += 1;
            } else if o.accepted {
                storage_replicas += u64::from(o.replicas);
            }
        }
        cm.finish(accepted_false);
        per_cycle.push(cm);
    }
    let blocks_created: u64 = per_cycle.iter().map(|c| c.blocks_created).sum();
    let blocks_accepted: u64 = per_cycle.iter().map(|c| c.blocks_accepted).sum();
    let accepted_true: u64 = per_cycle.iter().map(|c| c.blocks_accepted_true).sum();
    let summary = RunSummary {
        scheme: String::new(),
        seed: 0,
        cycles: per_cycle.len() as u32,
        n_users: 0,
        n_chains,
        accuracy: if blocks_accepted > 0 {
            accepted_true as f64 / blocks_accepted as f64
        } else {
            1.0
        },
        detection_rate: 1.0,
        network_overload: per_cycle.iter().map(|c| c.messages).sum(),
        storage_volume_mb: storage_replicas as f64,
        wall_time_secs: 0.0,
        mean_cycle_wall_ms: 0.0,
        blocks_created,
        blocks_accepted,
        malicious_responses: per_cycle.iter().map(|c| c.malicious_responses).sum(),
        skipped_rounds: skipped,
        detected_intensive: 0,
        ground_truth_intensive: 0,
    };
    MetricsSeries { per_cycle, summary }
}
