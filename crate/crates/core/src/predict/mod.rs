//! Severe-sadness prediction from daily phenotypes.
//!
//! Rows are grouped into one fold per participant. Each fold standardizes and
//! fits on the other participants only, scores the held-out days and records a
//! per-participant AUC.

pub mod auc;
pub mod forest;
pub mod logistic;

use std::collections::BTreeMap;
use std::hash::{DefaultHasher, Hash, Hasher};
use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::ingest::Group;
use crate::phenotypes::DailyPhenotypes;
use crate::stats::{mean, sample_variance, welch_t, WelchResult};

pub use auc::auc;
pub use forest::{fit_forest, ForestConfig, RandomForest};
pub use logistic::{fit_logistic, LogisticConfig, LogisticModel};

pub const N_FEATURES: usize = 7;

/// Participants need this many severe days to enter the evaluation.
pub const MIN_SEVERE_DAYS: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelRow {
    pub participant_id: String,
    pub group: Group,
    pub features: [f64; N_FEATURES],
    pub severe_sad: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ModelInput {
    pub rows: Vec<ModelRow>,
    /// Rows dropped because a feature or the label was missing.
    pub dropped: usize,
}

impl ModelInput {
    pub fn from_phenotypes(days: &[DailyPhenotypes]) -> Self {
        let mut input = ModelInput::default();
        for day in days {
            let feats = day.features();
            match (feats.iter().all(Option::is_some), day.severe_sad) {
                (true, Some(label)) => input.rows.push(ModelRow {
                    participant_id: day.participant_id.clone(),
                    group: day.group,
                    features: feats.map(|f| f.unwrap_or_default()),
                    severe_sad: label,
                }),
                _ => input.dropped += 1,
            }
        }
        input
    }

    pub fn for_group(&self, group: Group) -> ModelInput {
        ModelInput {
            rows: self.rows.iter().filter(|r| r.group == group).cloned().collect(),
            dropped: 0,
        }
    }

    /// Sorted, distinct participant ids.
    pub fn participants(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.rows.iter().map(|r| r.participant_id.clone()).collect();
        ids.sort();
        ids.dedup();
        ids
    }
}

/// Per-feature mean and sample standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Standardizer {
    pub mean: [f64; N_FEATURES],
    pub sd: [f64; N_FEATURES],
}

impl Standardizer {
    pub fn fit<'a>(rows: impl IntoIterator<Item = &'a ModelRow>) -> Self {
        let mut cols: Vec<Vec<f64>> = vec![Vec::new(); N_FEATURES];
        for row in rows {
            for (c, v) in cols.iter_mut().zip(row.features) {
                c.push(v);
            }
        }
        let mut s = Standardizer {
            mean: [0.0; N_FEATURES],
            sd: [1.0; N_FEATURES],
        };
        for (j, c) in cols.iter().enumerate() {
            if c.is_empty() {
                continue;
            }
            s.mean[j] = mean(c);
            let sd = if c.len() > 1 { sample_variance(c).sqrt() } else { 0.0 };
            // constant columns pass through centred but unscaled
            s.sd[j] = if sd > 0.0 { sd } else { 1.0 };
        }
        s
    }

    pub fn apply(&self, features: &[f64; N_FEATURES]) -> Vec<f64> {
        (0..N_FEATURES).map(|j| (features[j] - self.mean[j]) / self.sd[j]).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParticipantCounts {
    pub participant_id: String,
    pub group: Group,
    pub n_days: usize,
    pub n_severe: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CohortFilter {
    /// Every participant seen, eligible or not, sorted by id.
    pub counts: Vec<ParticipantCounts>,
    pub eligible: Vec<String>,
    pub input: ModelInput,
}

impl CohortFilter {
    /// (eligible, total) participants for a group.
    pub fn retained(&self, group: Group) -> (usize, usize) {
        let total = self.counts.iter().filter(|c| c.group == group).count();
        let kept = self
            .counts
            .iter()
            .filter(|c| c.group == group && c.n_severe >= MIN_SEVERE_DAYS)
            .count();
        (kept, total)
    }
}

/// Keeps participants with at least [`MIN_SEVERE_DAYS`] severe days.
pub fn filter_cohort(input: &ModelInput) -> CohortFilter {
    let mut by_pid: BTreeMap<&str, ParticipantCounts> = BTreeMap::new();
    for r in &input.rows {
        let c = by_pid.entry(&r.participant_id).or_insert_with(|| ParticipantCounts {
            participant_id: r.participant_id.clone(),
            group: r.group,
            n_days: 0,
            n_severe: 0,
        });
        c.n_days += 1;
        c.n_severe += r.severe_sad as usize;
    }
    let eligible: Vec<String> = by_pid
        .values()
        .filter(|c| c.n_severe >= MIN_SEVERE_DAYS)
        .map(|c| c.participant_id.clone())
        .collect();
    let rows = input
        .rows
        .iter()
        .filter(|r| eligible.binary_search(&r.participant_id).is_ok())
        .cloned()
        .collect();
    CohortFilter {
        counts: by_pid.into_values().collect(),
        eligible,
        input: ModelInput {
            rows,
            dropped: input.dropped,
        },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Method {
    Logistic(LogisticConfig),
    Forest(ForestConfig),
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Logistic(_) => "logistic",
            Method::Forest(_) => "forest",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FoldModel {
    Logistic(LogisticModel),
    Forest(RandomForest),
}

/// Everything learned from one fold's training rows.
#[derive(Debug, Clone, PartialEq)]
pub struct FittedFold {
    pub held_out: String,
    pub standardizer: Standardizer,
    pub model: FoldModel,
    /// Hash of the exact training rows, for leakage checks.
    pub train_fingerprint: u64,
}

impl FittedFold {
    pub fn score(&self, features: &[f64; N_FEATURES]) -> f64 {
        let z = self.standardizer.apply(features);
        match &self.model {
            FoldModel::Logistic(m) => m.predict(&z),
            FoldModel::Forest(f) => f.predict(&z),
        }
    }
}

fn fingerprint<'a>(rows: impl Iterator<Item = &'a ModelRow>) -> u64 {
    let mut h = DefaultHasher::new();
    for r in rows {
        r.participant_id.hash(&mut h);
        r.severe_sad.hash(&mut h);
        for f in r.features {
            f.to_bits().hash(&mut h);
        }
    }
    h.finish()
}

/// Fits the fold that holds out `held_out`. `fold_index` only seeds the forest.
pub fn fit_fold(input: &ModelInput, held_out: &str, fold_index: usize, method: &Method) -> Result<FittedFold> {
    let train: Vec<&ModelRow> = input.rows.iter().filter(|r| r.participant_id != held_out).collect();
    if train.is_empty() {
        return Err(Error::TooFewParticipants(1));
    }
    let standardizer = Standardizer::fit(train.iter().copied());
    let x: Vec<Vec<f64>> = train.iter().map(|r| standardizer.apply(&r.features)).collect();
    let y: Vec<bool> = train.iter().map(|r| r.severe_sad).collect();
    let model = match method {
        Method::Logistic(cfg) => {
            let mut index: BTreeMap<&str, usize> = BTreeMap::new();
            let participant: Vec<usize> = train
                .iter()
                .map(|r| {
                    let next = index.len();
                    *index.entry(&r.participant_id).or_insert(next)
                })
                .collect();
            FoldModel::Logistic(fit_logistic(&x, &y, &participant, index.len(), cfg)?)
        }
        Method::Forest(cfg) => {
            let cfg = ForestConfig {
                seed: crate::seed::split_seed(cfg.seed, fold_index as u64),
                ..*cfg
            };
            FoldModel::Forest(fit_forest(&x, &y, &cfg)?)
        }
    };
    Ok(FittedFold {
        held_out: held_out.to_string(),
        standardizer,
        train_fingerprint: fingerprint(train.into_iter()),
        model,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParticipantAuc {
    pub participant_id: String,
    pub n_days: usize,
    pub n_severe: usize,
    /// `None` when the held-out days are all one class.
    pub auc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PredictionResult {
    pub group: Option<Group>,
    pub method: &'static str,
    pub per_participant: Vec<ParticipantAuc>,
    pub mean_auc: f64,
    pub sd_auc: f64,
    pub n_participants: usize,
    pub skipped: Vec<String>,
}

impl PredictionResult {
    pub fn aucs(&self) -> Vec<f64> {
        self.per_participant.iter().filter_map(|p| p.auc).collect()
    }
}

/// Leave-one-participant-out evaluation. Folds run in parallel; each fold's
/// randomness depends only on its position in the sorted participant list.
pub fn loocv_auc(input: &ModelInput, method: &Method) -> Result<PredictionResult> {
    let participants = input.participants();
    if participants.len() < 2 {
        return Err(Error::TooFewParticipants(participants.len()));
    }
    let per_participant: Vec<ParticipantAuc> = participants
        .par_iter()
        .enumerate()
        .map(|(k, pid)| {
            let test: Vec<&ModelRow> = input.rows.iter().filter(|r| &r.participant_id == pid).collect();
            let labels: Vec<bool> = test.iter().map(|r| r.severe_sad).collect();
            let n_severe = labels.iter().filter(|&&l| l).count();
            let auc = if n_severe == 0 || n_severe == labels.len() {
                None
            } else {
                let fold = fit_fold(input, pid, k, method).map_err(|e| e.context(format!("fold {pid}")))?;
                let scores: Vec<f64> = test.iter().map(|r| fold.score(&r.features)).collect();
                auc(&scores, &labels)
            };
            Ok(ParticipantAuc {
                participant_id: pid.clone(),
                n_days: labels.len(),
                n_severe,
                auc,
            })
        })
        .collect::<Result<_>>()?;

    let values: Vec<f64> = per_participant.iter().filter_map(|p| p.auc).collect();
    if values.is_empty() {
        return Err(Error::AllSkipped);
    }
    let skipped = per_participant
        .iter()
        .filter(|p| p.auc.is_none())
        .map(|p| p.participant_id.clone())
        .collect();
    let groups: Vec<Group> = input.rows.iter().map(|r| r.group).collect();
    let group = groups.first().copied().filter(|g| groups.iter().all(|x| x == g));
    Ok(PredictionResult {
        group,
        method: method.name(),
        mean_auc: mean(&values),
        sd_auc: if values.len() > 1 { sample_variance(&values).sqrt() } else { 0.0 },
        n_participants: values.len(),
        per_participant,
        skipped,
    })
}

/// Welch test of per-participant AUCs, post against pre.
pub fn compare_group_auc(pre: &PredictionResult, post: &PredictionResult) -> Result<WelchResult> {
    welch_t(&post.aucs(), &pre.aucs())
}

pub const LOGISTIC_NOTE: &str =
    "# logistic model: participant random effects approximated by ridge-penalized per-participant intercepts";

/// Per-participant AUC table with `mean` and `sd` summary rows per group.
pub fn write_prediction_csv<W: Write>(results: &[PredictionResult], mut out: W) -> Result<()> {
    if results.iter().any(|r| r.method == "logistic") {
        writeln!(out, "{LOGISTIC_NOTE}")?;
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["participant_id", "group", "n_days", "n_severe", "auc"])?;
    for r in results {
        let group = r.group.map(|g| g.to_string()).unwrap_or_default();
        for p in &r.per_participant {
            let auc = p.auc.map(|a| format!("{a:.6}")).unwrap_or_default();
            w.write_record([
                p.participant_id.as_str(),
                &group,
                &p.n_days.to_string(),
                &p.n_severe.to_string(),
                &auc,
            ])?;
        }
        let days: usize = r.per_participant.iter().map(|p| p.n_days).sum();
        let severe: usize = r.per_participant.iter().map(|p| p.n_severe).sum();
        w.write_record(["mean", &group, &days.to_string(), &severe.to_string(), &format!("{:.6}", r.mean_auc)])?;
        w.write_record(["sd", &group, &days.to_string(), &severe.to_string(), &format!("{:.6}", r.sd_auc)])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AucComparison {
    pub method: &'static str,
    pub auc_mean_pre: f64,
    pub auc_sd_pre: f64,
    pub auc_mean_post: f64,
    pub auc_sd_post: f64,
    pub p: f64,
}

impl AucComparison {
    pub fn new(pre: &PredictionResult, post: &PredictionResult) -> Result<Self> {
        let welch = compare_group_auc(pre, post)?;
        Ok(AucComparison {
            method: pre.method,
            auc_mean_pre: pre.mean_auc,
            auc_sd_pre: pre.sd_auc,
            auc_mean_post: post.mean_auc,
            auc_sd_post: post.sd_auc,
            p: welch.p_value,
        })
    }
}

pub fn write_auc_comparison_csv<W: Write>(rows: &[AucComparison], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["method", "auc_mean_pre", "auc_sd_pre", "auc_mean_post", "auc_sd_post", "p"])?;
    for r in rows {
        w.write_record([
            r.method.to_string(),
            format!("{:.6}", r.auc_mean_pre),
            format!("{:.6}", r.auc_sd_pre),
            format!("{:.6}", r.auc_mean_post),
            format!("{:.6}", r.auc_sd_post),
            format!("{:.6}", r.p),
        ])?;
    }
    w.flush()?;
    Ok(())
}
