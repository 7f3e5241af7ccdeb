//! Dynamic behaviors prediction (DBP).
//!
//! A linear SVM is trained on labeled historical-experience feature
//! vectors and then predicts, per user and chain, whether a seemingly
//! trustworthy user is an intensive DMB attacker. The feature space is
//! the 7-tuple stored in the side chain:
//!
//! ```text
//! x = (lt_ij, gt_i, t_i, f_i, L_j, N_j, F_k)
//! ```
//!
//! Training is hard-margin by default: the margin 2/‖ψ‖ between the two
//! support planes is maximized subject to p(ψ·x + γ) ≥ 1 for every
//! sample. Callers that cannot guarantee separable data fall back to a
//! soft margin with a single box penalty.

mod svm;

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sidechain::{ExperienceRecord, SideChain};
use crate::{ChainId, UserId};

use svm::{SmoParams, SmoSolver, HARD_MARGIN_C};

/// Dimension of the historical-experience feature space.
pub const FEATURE_DIM: usize = 7;

#[derive(Debug, Error)]
pub enum DbpError {
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("training set contains only one class")]
    SingleClass,
    #[error(
        "training set is not linearly separable (worst violators: \
         sample {positive} labeled +1 vs sample {negative} labeled -1)"
    )]
    NonSeparable { positive: usize, negative: usize },
    #[error("solver failed to converge (KKT violation {0:.3e})")]
    NotConverged(f64),
    #[error("degenerate model: zero weight vector")]
    DegenerateModel,
    #[error("model file error: {0}")]
    ModelFile(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One point of the 7-dimensional feature space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector(pub [f64; FEATURE_DIM]);

/// Binary class of a labeled sample: +1 intensive attacker, −1 trusted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Label {
    Intensive,
    Trusted,
}

impl Label {
    pub fn sign(self) -> f64 {
        match self {
            Label::Intensive => 1.0,
            Label::Trusted => -1.0,
        }
    }

    pub fn from_sign(v: f64) -> Self {
        if v > 0.0 {
            Label::Intensive
        } else {
            Label::Trusted
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabeledSample {
    pub features: FeatureVector,
    pub label: Label,
}

/// Per-feature affine normalization fitted on the training data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub mean: [f64; FEATURE_DIM],
    pub scale: [f64; FEATURE_DIM],
}

impl Scaler {
    pub fn identity() -> Self {
        Self {
            mean: [0.0; FEATURE_DIM],
            scale: [1.0; FEATURE_DIM],
        }
    }

    /// Standardize to zero mean and unit population deviation. Constant
    /// features keep scale 1 so they pass through unchanged.
    pub fn fit(samples: &[LabeledSample]) -> Self {
        let n = samples.len().max(1) as f64;
        let mut mean = [0.0; FEATURE_DIM];
        for s in samples {
            for k in 0..FEATURE_DIM {
                mean[k] += s.features.0[k];
            }
        }
        for m in &mut mean {
            *m /= n;
        }
        let mut var = [0.0; FEATURE_DIM];
        for s in samples {
            for k in 0..FEATURE_DIM {
                let d = s.features.0[k] - mean[k];
                var[k] += d * d;
            }
        }
        let mut scale = [1.0; FEATURE_DIM];
        for k in 0..FEATURE_DIM {
            let sd = (var[k] / n).sqrt();
            if sd > 1e-12 {
                scale[k] = sd;
            }
        }
        Self { mean, scale }
    }

    pub fn apply(&self, f: &FeatureVector) -> [f64; FEATURE_DIM] {
        let mut out = [0.0; FEATURE_DIM];
        for k in 0..FEATURE_DIM {
            out[k] = (f.0[k] - self.mean[k]) / self.scale[k];
        }
        out
    }
}

/// Training metadata kept with the model and written to model files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub samples: usize,
    /// Worst KKT violation at convergence.
    pub kkt_residual: f64,
    /// Box penalty when the model was trained soft-margin; `None` for
    /// hard-margin models.
    pub soft_margin_c: Option<f64>,
}

/// A trained maximum-margin classifier over the feature space.
///
/// `psi` and `gamma` live in the scaler's normalized space; predictions
/// scale their input first. A trained model is immutable.
#[derive(Debug, Clone, PartialEq)]
pub struct SvmModel {
    psi: [f64; FEATURE_DIM],
    gamma: f64,
    mu: Vec<f64>,
    scaler: Scaler,
    meta: TrainingMeta,
}

/// Knobs for [`train_with`]. The defaults match [`train`]: standardized
/// features and a hard margin.
#[derive(Debug, Clone, Copy)]
pub struct TrainOptions {
    pub standardize: bool,
    /// `Some(c)` trains a soft margin with box penalty `c` instead of
    /// erroring on non-separable data.
    pub soft_margin_c: Option<f64>,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            standardize: true,
            soft_margin_c: None,
        }
    }
}

/// Hard-margin training on standardized features.
///
/// Errors on single-class input and on non-separable data; the latter
/// names the worst violating pair, one sample from each class.
pub fn train(samples: &[LabeledSample]) -> Result<SvmModel, DbpError> {
    train_with(samples, TrainOptions::default())
}

pub fn train_with(samples: &[LabeledSample], opts: TrainOptions) -> Result<SvmModel, DbpError> {
    if samples.is_empty() {
        return Err(DbpError::EmptyTrainingSet);
    }
    let has_pos = samples.iter().any(|s| s.label == Label::Intensive);
    let has_neg = samples.iter().any(|s| s.label == Label::Trusted);
    if !has_pos || !has_neg {
        return Err(DbpError::SingleClass);
    }
    let scaler = if opts.standardize {
        Scaler::fit(samples)
    } else {
        Scaler::identity()
    };
    let x: Vec<[f64; FEATURE_DIM]> = samples.iter().map(|s| scaler.apply(&s.features)).collect();
    let y: Vec<f64> = samples.iter().map(|s| s.label.sign()).collect();

    let hard = opts.soft_margin_c.is_none();
    if hard {
        // identical points with opposite labels settle infeasibility
        // without running the solver
        if let Some((p, q)) = conflicting_duplicate(&x, &y) {
            return Err(DbpError::NonSeparable {
                positive: if y[p] > 0.0 { p } else { q },
                negative: if y[p] > 0.0 { q } else { p },
            });
        }
    }
    let params = SmoParams {
        c: opts.soft_margin_c.unwrap_or(HARD_MARGIN_C),
        bail_at_bound: hard,
        ..SmoParams::default()
    };
    let sol = SmoSolver::new(&x, &y, params).solve();

    if hard {
        let at_bound = sol.alpha.iter().any(|&a| a >= params.c * (1.0 - 1e-9));
        if at_bound || !sol.converged {
            return Err(worst_violators(&x, &y, &sol.alpha, sol.bias));
        }
    } else if !sol.converged {
        return Err(DbpError::NotConverged(sol.kkt_violation));
    }

    let mut psi = [0.0; FEATURE_DIM];
    for (i, &a) in sol.alpha.iter().enumerate() {
        if a > 0.0 {
            for k in 0..FEATURE_DIM {
                psi[k] += a * y[i] * x[i][k];
            }
        }
    }
    if hard {
        // every training point must clear the margin
        for i in 0..x.len() {
            let f = svm::dot(&psi, &x[i]) + sol.bias;
            if y[i] * f < 1.0 - 1e-6 {
                return Err(worst_violators(&x, &y, &sol.alpha, sol.bias));
            }
        }
    }
    Ok(SvmModel {
        psi,
        gamma: sol.bias,
        mu: sol.alpha,
        scaler,
        meta: TrainingMeta {
            samples: samples.len(),
            kkt_residual: sol.kkt_violation,
            soft_margin_c: opts.soft_margin_c,
        },
    })
}

/// Find a pair of bitwise-identical feature vectors carrying opposite
/// labels, if any.
fn conflicting_duplicate(x: &[[f64; FEATURE_DIM]], y: &[f64]) -> Option<(usize, usize)> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    let key = |i: usize| x[i].map(f64::to_bits);
    order.sort_by_key(|&i| key(i));
    for w in order.windows(2) {
        let (a, b) = (w[0], w[1]);
        if key(a) == key(b) && y[a] * y[b] < 0.0 {
            return Some((a, b));
        }
    }
    None
}

fn worst_violators(x: &[[f64; FEATURE_DIM]], y: &[f64], alpha: &[f64], bias: f64) -> DbpError {
    let mut psi = [0.0; FEATURE_DIM];
    for (i, &a) in alpha.iter().enumerate() {
        for k in 0..FEATURE_DIM {
            psi[k] += a * y[i] * x[i][k];
        }
    }
    let mut worst_pos = (0usize, f64::INFINITY);
    let mut worst_neg = (0usize, f64::NEG_INFINITY);
    for i in 0..x.len() {
        let f = svm::dot(&psi, &x[i]) + bias;
        if y[i] > 0.0 && f < worst_pos.1 {
            worst_pos = (i, f);
        }
        if y[i] < 0.0 && f > worst_neg.1 {
            worst_neg = (i, f);
        }
    }
    DbpError::NonSeparable {
        positive: worst_pos.0,
        negative: worst_neg.0,
    }
}

impl SvmModel {
    /// Assemble a model directly from a weight vector and bias with no
    /// scaling, mainly for driving predictions from known hyperplanes.
    pub fn from_parts(psi: [f64; FEATURE_DIM], gamma: f64) -> Self {
        Self {
            psi,
            gamma,
            mu: Vec::new(),
            scaler: Scaler::identity(),
            meta: TrainingMeta {
                samples: 0,
                kkt_residual: 0.0,
                soft_margin_c: None,
            },
        }
    }

    pub fn psi(&self) -> &[f64; FEATURE_DIM] {
        &self.psi
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Lagrange multipliers per training sample, in training order.
    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn scaler(&self) -> &Scaler {
        &self.scaler
    }

    pub fn meta(&self) -> &TrainingMeta {
        &self.meta
    }

    /// ψ·x + γ in the scaled space.
    pub fn decision_value(&self, features: &FeatureVector) -> f64 {
        svm::dot(&self.psi, &self.scaler.apply(features)) + self.gamma
    }

    /// Sign classification; a point exactly on the hyperplane counts as
    /// trusted so a tie never costs an honest miner their seat.
    pub fn predict(&self, features: &FeatureVector) -> Label {
        if self.decision_value(features) > 0.0 {
            Label::Intensive
        } else {
            Label::Trusted
        }
    }

    pub fn norm(&self) -> f64 {
        svm::dot(&self.psi, &self.psi).sqrt()
    }

    /// Gap 2/‖ψ‖ between the two support planes.
    pub fn margin_width(&self) -> f64 {
        2.0 / self.norm()
    }

    /// Distance |ψ·x + γ|/‖ψ‖ from a point to the hyperplane.
    pub fn margin_distance(&self, features: &FeatureVector) -> Result<f64, DbpError> {
        let norm = self.norm();
        if norm <= 0.0 {
            return Err(DbpError::DegenerateModel);
        }
        Ok(self.decision_value(features).abs() / norm)
    }

    /// The hyperplane mapped back to raw feature space: returns
    /// `(psi_raw, gamma_raw)` with `psi_raw·x + gamma_raw` equal to the
    /// scaled-space decision value for every x.
    pub fn weights_raw(&self) -> ([f64; FEATURE_DIM], f64) {
        let mut w = [0.0; FEATURE_DIM];
        let mut g = self.gamma;
        for k in 0..FEATURE_DIM {
            w[k] = self.psi[k] / self.scaler.scale[k];
            g -= self.psi[k] * self.scaler.mean[k] / self.scaler.scale[k];
        }
        (w, g)
    }

    pub fn save<P: AsRef<Path>>(&self, path: P) -> Result<(), DbpError> {
        let file = ModelFile {
            psi: self.psi,
            gamma: self.gamma,
            scaler: self.scaler.clone(),
            meta: self.meta.clone(),
        };
        let w = BufWriter::new(File::create(path)?);
        serde_json::to_writer_pretty(w, &file).map_err(|e| DbpError::ModelFile(e.to_string()))
    }

    /// Load a model previously written with [`SvmModel::save`]. The
    /// multipliers are not persisted; the loaded model predicts but does
    /// not expose its training-time `mu`.
    pub fn load<P: AsRef<Path>>(path: P) -> Result<Self, DbpError> {
        let r = BufReader::new(File::open(path)?);
        let file: ModelFile =
            serde_json::from_reader(r).map_err(|e| DbpError::ModelFile(e.to_string()))?;
        Ok(Self {
            psi: file.psi,
            gamma: file.gamma,
            mu: Vec::new(),
            scaler: file.scaler,
            meta: file.meta,
        })
    }
}

/// Wire format of a model file: hyperplane, scaler, and metadata.
#[derive(Debug, Serialize, Deserialize)]
struct ModelFile {
    psi: [f64; FEATURE_DIM],
    gamma: f64,
    scaler: Scaler,
    meta: TrainingMeta,
}

/// Project an experience record onto the feature space, in the fixed
/// tuple order.
pub fn extract_features(record: &ExperienceRecord) -> FeatureVector {
    FeatureVector([
        record.lt_ij,
        record.gt_i,
        record.t_i as f64,
        record.f_i as f64,
        record.chain_len as f64,
        record.active_users as f64,
        record.feedback,
    ])
}

/// Feature vector of a user with no side-chain history: trust at the
/// threshold, zero counters, the chain's current length and population,
/// and perfect feedback.
pub fn newcomer_features(theta: f64, chain_len: u64, active_users: u64) -> FeatureVector {
    FeatureVector([
        theta,
        theta,
        0.0,
        0.0,
        chain_len as f64,
        active_users as f64,
        1.0,
    ])
}

/// Which feedback value represents a user's history on a chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FeedbackMode {
    /// Feedback of the most recent block.
    Latest,
    /// Mean feedback over the last `window` blocks.
    WindowMean(usize),
}

impl Default for FeedbackMode {
    fn default() -> Self {
        FeedbackMode::Latest
    }
}

/// Chain-level context needed to build feature vectors at predict time.
#[derive(Debug, Clone, Copy)]
pub struct ChainContext {
    pub theta: f64,
    pub chain_len: u64,
    pub active_users: u64,
    pub feedback: FeedbackMode,
}

/// Latest feature vector of `user` on `chain`, falling back to the
/// newcomer vector when the side chain holds no record for the pair.
pub fn feature_for_user(
    side: &SideChain,
    user: UserId,
    chain: ChainId,
    ctx: &ChainContext,
) -> FeatureVector {
    match side.latest_record(user, chain) {
        None => newcomer_features(ctx.theta, ctx.chain_len, ctx.active_users),
        Some(rec) => {
            let mut f = extract_features(rec);
            if let FeedbackMode::WindowMean(w) = ctx.feedback {
                let hist = side.query_history(user, chain, w.max(1));
                if !hist.is_empty() {
                    f.0[6] = hist.iter().map(|r| r.feedback).sum::<f64>() / hist.len() as f64;
                }
            }
            f
        }
    }
}

/// Intensive-attacker detection over the trustworthy cluster Φ1: every
/// user whose latest feature vector on `chain` is classified +1 lands in
/// the returned set Φ5 ⊆ Φ1.
pub fn detect_intensive(
    phi1: &[UserId],
    chain: ChainId,
    model: &SvmModel,
    side: &SideChain,
    ctx: &ChainContext,
) -> BTreeSet<UserId> {
    let mut flagged = BTreeSet::new();
    for &u in phi1 {
        let f = feature_for_user(side, u, chain, ctx);
        if model.predict(&f) == Label::Intensive {
            flagged.insert(u);
        }
    }
    flagged
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(v: &[f64], label: Label) -> LabeledSample {
        let mut f = [0.0; FEATURE_DIM];
        f[..v.len()].copy_from_slice(v);
        LabeledSample {
            features: FeatureVector(f),
            label,
        }
    }

    #[test]
    fn extract_features_projects_in_order() {
        let rec = ExperienceRecord {
            user_id: 1,
            chain_id: 2,
            lt_ij: 0.7,
            gt_i: 0.8,
            t_i: 10,
            f_i: 2,
            chain_len: 50,
            active_users: 30,
            feedback: 0.9,
        };
        assert_eq!(
            extract_features(&rec),
            FeatureVector([0.7, 0.8, 10.0, 2.0, 50.0, 30.0, 0.9])
        );
    }

    #[test]
    fn newcomer_features_pin_trust_to_theta() {
        let f = newcomer_features(0.5, 42, 17);
        assert_eq!(f, FeatureVector([0.5, 0.5, 0.0, 0.0, 42.0, 17.0, 1.0]));
    }

    #[test]
    fn two_point_analytic_solution() {
        let samples = [
            sample(&[0.0], Label::Trusted),
            sample(&[2.0], Label::Intensive),
        ];
        // raw space: hyperplane at x = 1
        let m = train_with(
            &samples,
            TrainOptions {
                standardize: false,
                soft_margin_c: None,
            },
        )
        .unwrap();
        assert!((m.psi()[0] - 1.0).abs() < 1e-7, "psi = {:?}", m.psi());
        for k in 1..FEATURE_DIM {
            assert!(m.psi()[k].abs() < 1e-9);
        }
        assert!((m.gamma() + 1.0).abs() < 1e-7);
        assert!((m.margin_width() - 2.0).abs() < 1e-7);
        // standardized training recovers the same raw hyperplane
        let m2 = train(&samples).unwrap();
        let (w, g) = m2.weights_raw();
        assert!((w[0] - 1.0).abs() < 1e-7, "w = {w:?}");
        assert!((g + 1.0).abs() < 1e-7, "g = {g}");
    }

    #[test]
    fn single_class_is_rejected() {
        let samples = [
            sample(&[0.0], Label::Trusted),
            sample(&[1.0], Label::Trusted),
        ];
        assert!(matches!(train(&samples), Err(DbpError::SingleClass)));
        assert!(matches!(train(&[]), Err(DbpError::EmptyTrainingSet)));
    }

    #[test]
    fn xor_pattern_is_not_separable() {
        let samples = [
            sample(&[0.0, 0.0], Label::Trusted),
            sample(&[1.0, 1.0], Label::Trusted),
            sample(&[0.0, 1.0], Label::Intensive),
            sample(&[1.0, 0.0], Label::Intensive),
        ];
        match train(&samples) {
            Err(DbpError::NonSeparable { positive, negative }) => {
                assert_eq!(samples[positive].label, Label::Intensive);
                assert_eq!(samples[negative].label, Label::Trusted);
            }
            other => panic!("expected NonSeparable, got {other:?}"),
        }
    }

    #[test]
    fn soft_margin_handles_overlap() {
        let samples = [
            sample(&[0.0], Label::Trusted),
            sample(&[1.0], Label::Intensive),
            sample(&[0.9], Label::Trusted),
            sample(&[0.1], Label::Intensive),
        ];
        let m = train_with(
            &samples,
            TrainOptions {
                standardize: true,
                soft_margin_c: Some(1.0),
            },
        )
        .unwrap();
        assert_eq!(m.meta().soft_margin_c, Some(1.0));
        assert!(m.norm() > 0.0);
    }

    #[test]
    fn feature_scaling_leaves_predictions_invariant() {
        let base = [
            sample(&[0.0, 1.0], Label::Trusted),
            sample(&[0.5, -1.0], Label::Trusted),
            sample(&[4.0, 0.0], Label::Intensive),
            sample(&[5.0, 2.0], Label::Intensive),
        ];
        let m1 = train_with(
            &base,
            TrainOptions {
                standardize: false,
                soft_margin_c: None,
            },
        )
        .unwrap();
        // same geometry scaled by 3: psi shrinks by 1/3, labels unchanged
        let scaled: Vec<LabeledSample> = base
            .iter()
            .map(|s| {
                let mut f = s.features.0;
                for v in &mut f {
                    *v *= 3.0;
                }
                LabeledSample {
                    features: FeatureVector(f),
                    label: s.label,
                }
            })
            .collect();
        let m2 = train_with(
            &scaled,
            TrainOptions {
                standardize: false,
                soft_margin_c: None,
            },
        )
        .unwrap();
        assert!((m2.norm() - m1.norm() / 3.0).abs() < 1e-6);
        for (orig, big) in base.iter().zip(&scaled) {
            assert_eq!(m1.predict(&orig.features), m2.predict(&big.features));
        }
    }

    #[test]
    fn predict_matches_sign_rule() {
        let mut psi = [0.0; FEATURE_DIM];
        psi[3] = 1.0; // weight on the false-block count
        let m = SvmModel::from_parts(psi, -2.5);
        let mut f = [0.0; FEATURE_DIM];
        f[3] = 4.0;
        assert_eq!(m.predict(&FeatureVector(f)), Label::Intensive);
        f[3] = 1.0;
        assert_eq!(m.predict(&FeatureVector(f)), Label::Trusted);
        // exactly on the hyperplane: trusted
        f[3] = 2.5;
        assert!((m.decision_value(&FeatureVector(f))).abs() < 1e-12);
        assert_eq!(m.predict(&FeatureVector(f)), Label::Trusted);
    }

    #[test]
    fn margin_distance_examples() {
        let mut psi = [0.0; FEATURE_DIM];
        psi[0] = 1.0;
        let m = SvmModel::from_parts(psi, 0.0);
        let mut f = [0.0; FEATURE_DIM];
        f[0] = 3.0;
        assert!((m.margin_distance(&FeatureVector(f)).unwrap() - 3.0).abs() < 1e-12);
        f[0] = 0.0;
        assert_eq!(m.margin_distance(&FeatureVector(f)).unwrap(), 0.0);
        let degenerate = SvmModel::from_parts([0.0; FEATURE_DIM], 1.0);
        assert!(matches!(
            degenerate.margin_distance(&FeatureVector(f)),
            Err(DbpError::DegenerateModel)
        ));
    }

    #[test]
    fn support_vectors_sit_on_the_margin() {
        let samples = [
            sample(&[0.0, 0.0], Label::Trusted),
            sample(&[0.0, 1.0], Label::Trusted),
            sample(&[3.0, 0.0], Label::Intensive),
            sample(&[3.0, 2.0], Label::Intensive),
        ];
        let m = train_with(
            &samples,
            TrainOptions {
                standardize: false,
                soft_margin_c: None,
            },
        )
        .unwrap();
        for (i, &mu) in m.mu().iter().enumerate() {
            if mu > 1e-8 {
                let d = m.margin_distance(&samples[i].features).unwrap();
                assert!(
                    (d - 1.0 / m.norm()).abs() < 1e-6,
                    "support vector {i} off the margin: d = {d}"
                );
            }
        }
    }

    #[test]
    fn interior_point_does_not_change_predictions() {
        let base = vec![
            sample(&[0.0, 0.0], Label::Trusted),
            sample(&[0.0, 2.0], Label::Trusted),
            sample(&[4.0, 0.0], Label::Intensive),
            sample(&[4.0, 2.0], Label::Intensive),
        ];
        let m1 = train(&base).unwrap();
        let mut extended = base.clone();
        // far on the correct side, outside the margin band
        extended.push(sample(&[8.0, 1.0], Label::Intensive));
        let m2 = train(&extended).unwrap();
        let probes = [
            FeatureVector({
                let mut f = [0.0; FEATURE_DIM];
                f[0] = 1.0;
                f
            }),
            FeatureVector({
                let mut f = [0.0; FEATURE_DIM];
                f[0] = 3.0;
                f[1] = 1.0;
                f
            }),
        ];
        for p in &probes {
            assert_eq!(m1.predict(p), m2.predict(p));
        }
    }

    #[test]
    fn model_round_trips_through_json() {
        let samples = [
            sample(&[0.0], Label::Trusted),
            sample(&[2.0], Label::Intensive),
        ];
        let m = train(&samples).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        m.save(&path).unwrap();
        let loaded = SvmModel::load(&path).unwrap();
        assert_eq!(loaded.psi(), m.psi());
        assert_eq!(loaded.gamma(), m.gamma());
        assert_eq!(loaded.meta().samples, 2);
        let probe = FeatureVector([1.5, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(loaded.predict(&probe), m.predict(&probe));
    }

    #[test]
    fn detect_intensive_flags_only_positive_predictions() {
        use crate::sidechain::SideChain;
        let mut side = SideChain::new(1, 0.5);
        side.set_authorized([0]);
        // user 1 has a history with many false blocks; user 2 is clean
        side.append_block(
            vec![
                ExperienceRecord {
                    user_id: 1,
                    chain_id: 0,
                    lt_ij: 0.7,
                    gt_i: 0.7,
                    t_i: 5,
                    f_i: 5,
                    chain_len: 10,
                    active_users: 3,
                    feedback: 0.4,
                },
                ExperienceRecord {
                    user_id: 2,
                    chain_id: 0,
                    lt_ij: 0.9,
                    gt_i: 0.9,
                    t_i: 9,
                    f_i: 0,
                    chain_len: 10,
                    active_users: 3,
                    feedback: 1.0,
                },
            ],
            0,
            0,
        )
        .unwrap();
        // hyperplane keyed on the false-block count: f_i ≥ 1 flags
        let mut psi = [0.0; FEATURE_DIM];
        psi[3] = 2.0;
        let model = SvmModel::from_parts(psi, -1.0);
        let ctx = ChainContext {
            theta: 0.5,
            chain_len: 10,
            active_users: 3,
            feedback: FeedbackMode::Latest,
        };
        let phi1 = vec![1, 2, 3]; // user 3 has no history: newcomer, f = 0
        let flagged = detect_intensive(&phi1, 0, &model, &side, &ctx);
        assert_eq!(flagged.into_iter().collect::<Vec<_>>(), vec![1]);
        // empty input gives an empty set
        assert!(detect_intensive(&[], 0, &model, &side, &ctx).is_empty());
    }

    #[test]
    fn window_mean_feedback_mode() {
        use crate::sidechain::SideChain;
        let mut side = SideChain::new(1, 0.5);
        side.set_authorized([0]);
        for fb in [1.0, 0.5, 0.0] {
            side.append_block(
                vec![ExperienceRecord {
                    user_id: 1,
                    chain_id: 0,
                    lt_ij: 0.6,
                    gt_i: 0.6,
                    t_i: 1,
                    f_i: 0,
                    chain_len: 1,
                    active_users: 1,
                    feedback: fb,
                }],
                0,
                0,
            )
            .unwrap();
        }
        let ctx_latest = ChainContext {
            theta: 0.5,
            chain_len: 1,
            active_users: 1,
            feedback: FeedbackMode::Latest,
        };
        let ctx_mean = ChainContext {
            feedback: FeedbackMode::WindowMean(3),
            ..ctx_latest
        };
        assert_eq!(feature_for_user(&side, 1, 0, &ctx_latest).0[6], 0.0);
        assert!((feature_for_user(&side, 1, 0, &ctx_mean).0[6] - 0.5).abs() < 1e-12);
    }
}
