//! Simulation configuration and validation.

use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dbp::FeedbackMode;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("attacker fractions sum to {0}, must be at most 1")]
    FractionsExceedOne(f64),
    #[error("attacker fractions must be nonnegative")]
    NegativeFraction,
    #[error("trust threshold theta must lie in (0, 1), got {0}")]
    BadTheta(f64),
    #[error("theta + xi2 must not exceed 1 (got {0})")]
    HighLineAboveOne(f64),
    #[error("xi1 must be strictly below xi2 (got xi1 = {xi1}, xi2 = {xi2})")]
    BadHysteresis { xi1: f64, xi2: f64 },
    #[error("k_gen must be at least 1")]
    ZeroGenerators,
    #[error("k_val must be at least 1")]
    ZeroValidators,
    #[error("kill-chain count {k} exceeds the number of chains {h}")]
    TooManyKillChains { k: u32, h: u32 },
    #[error("the network needs at least one user")]
    NoUsers,
    #[error("the network needs at least one chain")]
    NoChains,
    #[error("unknown scheme '{0}' (expected podt, baseline, disctrust, allminers or randomminers)")]
    UnknownScheme(String),
}

/// Which consensus variant the run uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    /// Full two-level defense: DiscTrust gates plus DBP prediction.
    PoDT,
    /// Single universal trust value, no per-chain gate, no DBP.
    Baseline,
    /// DiscTrust gates without the DBP prediction layer.
    DiscTrustOnly,
    /// Every user is a miner and validates every block.
    AllMiners,
    /// Miner sets sampled uniformly with no trust gating.
    RandomMiners,
}

impl Scheme {
    pub fn name(&self) -> &'static str {
        match self {
            Scheme::PoDT => "podt",
            Scheme::Baseline => "baseline",
            Scheme::DiscTrustOnly => "disctrust",
            Scheme::AllMiners => "allminers",
            Scheme::RandomMiners => "randomminers",
        }
    }
}

impl FromStr for Scheme {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "podt" => Ok(Scheme::PoDT),
            "baseline" => Ok(Scheme::Baseline),
            "disctrust" | "disctrustonly" => Ok(Scheme::DiscTrustOnly),
            "allminers" | "tendermint" => Ok(Scheme::AllMiners),
            "randomminers" | "por" => Ok(Scheme::RandomMiners),
            other => Err(ConfigError::UnknownScheme(other.to_string())),
        }
    }
}

/// Population mix; whatever the fractions leave over is honest.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AttackerFractions {
    pub ordinary: f64,
    pub normal_dmb: f64,
    pub intensive_dmb: f64,
}

impl Default for AttackerFractions {
    fn default() -> Self {
        Self {
            ordinary: 0.0,
            normal_dmb: 0.0,
            intensive_dmb: 0.0,
        }
    }
}

impl AttackerFractions {
    pub fn sum(&self) -> f64 {
        self.ordinary + self.normal_dmb + self.intensive_dmb
    }
}

/// Full configuration of one simulation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub n_users: u32,
    pub n_chains: u32,
    pub theta: f64,
    pub xi1: f64,
    pub xi2: f64,
    pub cycles: u32,
    pub kill_chain_count: u32,
    pub fractions: AttackerFractions,
    /// Generators sampled per round.
    pub k_gen: u32,
    /// Validators sampled per round (every non-generator validates under
    /// the all-miners scheme).
    pub k_val: u32,
    /// Leader term length in rounds.
    pub leader_term: u32,
    pub rng_seed: u64,
    pub scheme: Scheme,
    /// Cycles of ground-truth calibration before the DBP model trains.
    pub calibration_cycles: u32,
    /// Retrain the model from feedback every this many cycles after
    /// calibration; `None` keeps the calibrated model frozen.
    pub retrain_interval: Option<u32>,
    pub feedback_mode: FeedbackMode,
    /// Restrict random chain-miner padding to network miners.
    pub strict_rule4_pad: bool,
    /// Cap on the DBP training-set size; records are thinned evenly.
    pub max_train_samples: usize,
    /// Load a pre-trained DBP model instead of calibrating.
    pub model_path: Option<PathBuf>,
    /// Record per-user trust trajectories every cycle.
    pub trace_trust: bool,
    /// Keep every round outcome in the run result (memory-heavy).
    pub keep_outcomes: bool,
    /// Give each honest user one home chain they are active on, while
    /// attackers stay active everywhere. Off means everyone is active on
    /// every chain.
    pub chain_affinity: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n_users: 1000,
            n_chains: 10,
            theta: 0.5,
            xi1: 0.1,
            xi2: 0.4,
            cycles: 200,
            kill_chain_count: 4,
            fractions: AttackerFractions::default(),
            k_gen: 3,
            k_val: 5,
            leader_term: 10,
            rng_seed: 1,
            scheme: Scheme::PoDT,
            calibration_cycles: 20,
            retrain_interval: None,
            feedback_mode: FeedbackMode::Latest,
            strict_rule4_pad: false,
            max_train_samples: 4000,
            model_path: None,
            trace_trust: false,
            keep_outcomes: false,
            chain_affinity: false,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.n_users == 0 {
            return Err(ConfigError::NoUsers);
        }
        if self.n_chains == 0 {
            return Err(ConfigError::NoChains);
        }
        if !(self.theta > 0.0 && self.theta < 1.0) {
            return Err(ConfigError::BadTheta(self.theta));
        }
        if self.theta + self.xi2 > 1.0 {
            return Err(ConfigError::HighLineAboveOne(self.theta + self.xi2));
        }
        if self.xi1 >= self.xi2 {
            return Err(ConfigError::BadHysteresis {
                xi1: self.xi1,
                xi2: self.xi2,
            });
        }
        let f = &self.fractions;
        if f.ordinary < 0.0 || f.normal_dmb < 0.0 || f.intensive_dmb < 0.0 {
            return Err(ConfigError::NegativeFraction);
        }
        if f.sum() > 1.0 + 1e-12 {
            return Err(ConfigError::FractionsExceedOne(f.sum()));
        }
        if self.k_gen == 0 {
            return Err(ConfigError::ZeroGenerators);
        }
        if self.k_val == 0 {
            return Err(ConfigError::ZeroValidators);
        }
        if self.kill_chain_count > self.n_chains {
            return Err(ConfigError::TooManyKillChains {
                k: self.kill_chain_count,
                h: self.n_chains,
            });
        }
        Ok(())
    }

    /// Scale the population, chains, and cycle count down by `factor`
    /// (CI-friendly shrink; 1.0 is the identity).
    pub fn scaled(mut self, factor: f64) -> Self {
        if (factor - 1.0).abs() < 1e-12 {
            return self;
        }
        let scale = |v: u32| ((v as f64 * factor).round() as u32).max(1);
        self.n_users = scale(self.n_users);
        self.n_chains = scale(self.n_chains);
        self.cycles = scale(self.cycles);
        self.kill_chain_count = self.kill_chain_count.min(self.n_chains);
        self.calibration_cycles = ((self.calibration_cycles as f64 * factor).round() as u32)
            .min(self.cycles);
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_valid() {
        SimConfig::default().validate().unwrap();
    }

    #[test]
    fn validation_catches_each_violation() {
        let base = SimConfig::default();
        let mut c = base.clone();
        c.theta = 1.5;
        assert_eq!(c.validate(), Err(ConfigError::BadTheta(1.5)));
        let mut c = base.clone();
        c.xi2 = 0.6;
        assert!(matches!(c.validate(), Err(ConfigError::HighLineAboveOne(_))));
        let mut c = base.clone();
        c.xi1 = 0.4;
        assert!(matches!(c.validate(), Err(ConfigError::BadHysteresis { .. })));
        let mut c = base.clone();
        c.fractions.ordinary = 0.6;
        c.fractions.normal_dmb = 0.6;
        assert!(matches!(c.validate(), Err(ConfigError::FractionsExceedOne(_))));
        let mut c = base.clone();
        c.k_gen = 0;
        assert_eq!(c.validate(), Err(ConfigError::ZeroGenerators));
        let mut c = base.clone();
        c.kill_chain_count = 11;
        assert!(matches!(c.validate(), Err(ConfigError::TooManyKillChains { .. })));
    }

    #[test]
    fn scheme_parsing_accepts_aliases() {
        assert_eq!("PoDT".parse::<Scheme>().unwrap(), Scheme::PoDT);
        assert_eq!("disctrust".parse::<Scheme>().unwrap(), Scheme::DiscTrustOnly);
        assert_eq!("tendermint".parse::<Scheme>().unwrap(), Scheme::AllMiners);
        assert_eq!("por".parse::<Scheme>().unwrap(), Scheme::RandomMiners);
        assert!("pow".parse::<Scheme>().is_err());
    }

    #[test]
    fn scaling_shrinks_proportionally() {
        let c = SimConfig::default().scaled(0.1);
        assert_eq!(c.n_users, 100);
        assert_eq!(c.n_chains, 1);
        assert_eq!(c.cycles, 20);
        assert!(c.kill_chain_count <= c.n_chains);
    }
}
