//! Stage runners shared by the command line and the end-to-end tests.
//!
//! Every stage reads its inputs from the output directory (or, for `ingest`,
//! from the configured trace directory and roster), writes its artifacts there
//! and records a summary in `run_metadata.json`. Rows are always written in
//! participant then date order, so output bytes do not depend on thread count.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::analysis::{
    group_compare, morning_evening_contrast, pca_fit_profiles, read_scores_csv, write_comparison_csv,
    write_loadings_csv, write_scores_csv, Granularity, MetricValues, PcaConfig,
};
use crate::circadian::{
    participant_metrics, read_daily_iv_csv, read_metrics_csv, write_daily_iv_csv, write_metrics_csv,
    CircadianConfig, CircadianMetrics, DailyIv,
};
use crate::ddp::{build_ddp, ddp_heatmap_table, read_ddp_csv, write_ddp_csv, write_heatmap_csv, DdpConfig, DisplacementProfile};
use crate::error::{Error, Result};
use crate::ingest::{parse_trace, segment_days, Group, RejectionReport, Trace};
use crate::phenotypes::{
    compute_daily_phenotypes, read_phenotypes_csv, read_survey_csv, write_phenotypes_csv, DailyPhenotypes,
    PhenotypeConfig, SurveyTable, FEATURE_NAMES,
};
use crate::predict::{
    filter_cohort, loocv_auc, write_auc_comparison_csv, write_prediction_csv, AucComparison, ForestConfig,
    LogisticConfig, Method, ModelInput, PredictionResult,
};

/// Version of the artifact formats written by this crate.
pub const FORMAT_VERSION: &str = "1";
pub const METADATA_FILE: &str = "run_metadata.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Directory holding one `<participant_id>.csv` per roster entry.
    pub trace_dir: Option<PathBuf>,
    /// `participant_id,group[,timezone_offset_minutes]`.
    pub roster: Option<PathBuf>,
    /// `participant_id,local_date,sadness_level`.
    pub survey: Option<PathBuf>,
    pub output_dir: PathBuf,
    /// Used for roster entries without their own offset.
    pub timezone_offset_minutes: i32,
    pub ddp: DdpConfig,
    pub circadian: CircadianConfig,
    pub pca: PcaConfig,
    pub phenotypes: PhenotypeConfig,
    pub logistic: LogisticConfig,
    pub forest: ForestConfig,
    /// Skip random-forest evaluation in `predict`.
    pub skip_forest: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            trace_dir: None,
            roster: None,
            survey: None,
            output_dir: PathBuf::from("out"),
            timezone_offset_minutes: 0,
            ddp: DdpConfig::default(),
            circadian: CircadianConfig::default(),
            pca: PcaConfig::default(),
            phenotypes: PhenotypeConfig::default(),
            logistic: LogisticConfig::default(),
            forest: ForestConfig::default(),
            skip_forest: false,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::ConfigInvalid(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::ConfigInvalid(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::ConfigInvalid(m));
        let fractions = [("ddp.min_coverage", self.ddp.min_coverage), ("phenotypes.min_coverage", self.phenotypes.min_coverage)];
        for (name, v) in fractions {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} must be in [0, 1], got {v}"));
            }
        }
        let p = &self.phenotypes.places;
        let positive = [
            ("places.d_thresh_m", p.d_thresh_m),
            ("places.t_thresh_s", p.t_thresh_s),
            ("places.merge_distance_m", p.merge_distance_m),
            ("places.max_gap_s", p.max_gap_s),
            ("logistic.lambda", self.logistic.lambda),
            ("logistic.grad_tol", self.logistic.grad_tol),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        if self.pca.n_components == 0 || self.pca.n_components > crate::ddp::DDP_LEN {
            return bad(format!("pca.n_components must be in 1..=47, got {}", self.pca.n_components));
        }
        if self.logistic.max_iter == 0 || self.forest.n_trees == 0 || self.forest.min_leaf == 0 {
            return bad("logistic.max_iter, forest.n_trees and forest.min_leaf must be at least 1".into());
        }
        if self.forest.max_features == Some(0) {
            return bad("forest.max_features must be at least 1".into());
        }
        if !(-1440..=1440).contains(&self.timezone_offset_minutes) {
            return bad("timezone_offset_minutes must be within one day".into());
        }
        Ok(())
    }

    fn out(&self, name: &str) -> PathBuf {
        self.output_dir.join(name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RosterEntry {
    pub participant_id: String,
    pub group: Group,
    pub timezone_offset_minutes: Option<i32>,
}

pub fn read_roster_csv<R: std::io::Read>(input: R) -> Result<Vec<RosterEntry>> {
    let mut r = csv::ReaderBuilder::new().flexible(true).from_reader(input);
    let headers: Vec<String> = r.headers()?.iter().map(|h| h.trim().to_string()).collect();
    if headers.len() < 2 || headers[0] != "participant_id" || headers[1] != "group" || (headers.len() == 3 && headers[2] != "timezone_offset_minutes") || headers.len() > 3 {
        return Err(Error::ConfigInvalid(format!(
            "roster header must be `participant_id,group[,timezone_offset_minutes]`, got `{}`",
            headers.join(",")
        )));
    }
    let mut out: Vec<RosterEntry> = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let bad = |m: &str| Error::ConfigInvalid(format!("roster line {}: {m}", i + 2));
        let pid = rec.get(0).unwrap_or("").trim();
        if pid.is_empty() || pid.contains(['/', '\\']) || pid.starts_with('.') {
            return Err(bad("invalid participant id"));
        }
        let group = rec.get(1).unwrap_or("").trim().parse().map_err(|_| bad("group must be PRE or POST"))?;
        let tz = match rec.get(2).map(str::trim) {
            None | Some("") => None,
            Some(s) => Some(s.parse().map_err(|_| bad("bad timezone offset"))?),
        };
        out.push(RosterEntry {
            participant_id: pid.to_string(),
            group,
            timezone_offset_minutes: tz,
        });
    }
    out.sort_by(|a, b| a.participant_id.cmp(&b.participant_id));
    if out.windows(2).any(|w| w[0].participant_id == w[1].participant_id) {
        return Err(Error::ConfigInvalid("roster lists a participant twice".into()));
    }
    Ok(out)
}

fn write_roster_csv<W: Write>(rows: &[RosterEntry], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["participant_id", "group", "timezone_offset_minutes"])?;
    for r in rows {
        let tz = r.timezone_offset_minutes.map(|t| t.to_string()).unwrap_or_default();
        w.write_record([r.participant_id.as_str(), &r.group.to_string(), &tz])?;
    }
    w.flush()?;
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?))
}

fn open_artifact(path: &Path) -> Result<BufReader<File>> {
    match File::open(path) {
        Ok(f) => Ok(BufReader::new(f)),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            Err(Error::MissingUpstreamArtifact(path.display().to_string()))
        }
        Err(e) => Err(Error::Io(format!("{}: {e}", path.display()))),
    }
}

fn open_config_file(path: &Option<PathBuf>, what: &str) -> Result<BufReader<File>> {
    let path = path
        .as_ref()
        .ok_or_else(|| Error::ConfigInvalid(format!("no {what} configured")))?;
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::ConfigInvalid(format!("cannot open {what} {}: {e}", path.display())))
}

/// Merges one stage's summary into the shared metadata file.
fn record_stage(cfg: &RunConfig, stage: &str, summary: Value) -> Result<()> {
    let path = cfg.out(METADATA_FILE);
    let mut root: Map<String, Value> = match fs::read_to_string(&path) {
        Ok(text) => serde_json::from_str(&text).unwrap_or_default(),
        Err(_) => Map::new(),
    };
    root.insert("toolkit_version".into(), json!(env!("CARGO_PKG_VERSION")));
    root.insert("format_version".into(), json!(FORMAT_VERSION));
    root.insert("config".into(), serde_json::to_value(cfg).expect("config serializes"));
    let stages = root.entry("stages").or_insert_with(|| json!({}));
    if let Value::Object(m) = stages {
        m.insert(stage.into(), summary);
    }
    let text = serde_json::to_string_pretty(&Value::Object(root)).expect("metadata serializes");
    fs::write(&path, text + "\n")?;
    Ok(())
}

fn ensure_output_dir(cfg: &RunConfig) -> Result<()> {
    fs::create_dir_all(&cfg.output_dir)
        .map_err(|e| Error::ConfigInvalid(format!("cannot create output directory {}: {e}", cfg.output_dir.display())))
}

const CANONICAL_DIR: &str = "canonical";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IngestSummary {
    pub participants: usize,
    pub points: usize,
    pub rejected_rows: usize,
}

/// Parses every roster participant's raw trace and writes canonical copies.
pub fn run_ingest(cfg: &RunConfig) -> Result<IngestSummary> {
    cfg.validate()?;
    let roster = read_roster_csv(open_config_file(&cfg.roster, "roster")?)?;
    let trace_dir = cfg
        .trace_dir
        .as_ref()
        .ok_or_else(|| Error::ConfigInvalid("no trace directory configured".into()))?;
    if !trace_dir.is_dir() {
        return Err(Error::ConfigInvalid(format!("trace directory {} does not exist", trace_dir.display())));
    }
    ensure_output_dir(cfg)?;
    let canon = cfg.out(CANONICAL_DIR);
    fs::create_dir_all(&canon)?;

    let roster: Vec<RosterEntry> = roster
        .into_iter()
        .map(|r| RosterEntry {
            timezone_offset_minutes: Some(r.timezone_offset_minutes.unwrap_or(cfg.timezone_offset_minutes)),
            ..r
        })
        .collect();
    let reports: Vec<(usize, RejectionReport)> = roster
        .par_iter()
        .map(|entry| {
            let pid = &entry.participant_id;
            let path = trace_dir.join(format!("{pid}.csv"));
            let f = File::open(&path)
                .map_err(|e| Error::Io(format!("{}: {e}", path.display())).context(format!("participant {pid}")))?;
            let tz = entry.timezone_offset_minutes.unwrap_or(0);
            let (trace, report) = parse_trace(BufReader::new(f), pid, entry.group, tz)
                .map_err(|e| e.context(format!("participant {pid}")))?;
            trace.write_canonical_csv(create(&canon.join(format!("{pid}.csv")))?)?;
            Ok((trace.points.len(), report))
        })
        .collect::<Result<_>>()?;

    write_roster_csv(&roster, create(&cfg.out("roster.csv"))?)?;
    let mut w = csv::Writer::from_writer(create(&cfg.out("ingest_report.csv"))?);
    w.write_record(["participant_id", "group", "points", "total_rows", "out_of_range", "unparseable", "duplicates_collapsed"])?;
    for (entry, (n, r)) in roster.iter().zip(&reports) {
        w.write_record([
            entry.participant_id.clone(),
            entry.group.to_string(),
            n.to_string(),
            r.total_rows.to_string(),
            r.out_of_range.to_string(),
            r.unparseable.to_string(),
            r.duplicates_collapsed.to_string(),
        ])?;
    }
    w.flush()?;

    let summary = IngestSummary {
        participants: roster.len(),
        points: reports.iter().map(|(n, _)| n).sum(),
        rejected_rows: reports.iter().map(|(_, r)| r.rejected()).sum(),
    };
    record_stage(cfg, "ingest", serde_json::to_value(&summary).expect("summary serializes"))?;
    Ok(summary)
}

/// Canonical traces written by `ingest`, in participant order.
pub fn load_canonical(cfg: &RunConfig) -> Result<Vec<Trace>> {
    let roster = read_roster_csv(open_artifact(&cfg.out("roster.csv"))?)?;
    roster
        .par_iter()
        .map(|entry| {
            let pid = &entry.participant_id;
            let f = open_artifact(&cfg.out(CANONICAL_DIR).join(format!("{pid}.csv")))?;
            let tz = entry.timezone_offset_minutes.unwrap_or(cfg.timezone_offset_minutes);
            parse_trace(f, pid, entry.group, tz)
                .map(|(t, _)| t)
                .map_err(|e| e.context(format!("participant {pid}")))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DdpSummary {
    pub days_seen: usize,
    pub days_retained: usize,
}

pub fn run_ddp(cfg: &RunConfig) -> Result<DdpSummary> {
    cfg.validate()?;
    let traces = load_canonical(cfg)?;
    let per: Vec<(Vec<DisplacementProfile>, Vec<(String, String, Group, f64, bool)>)> = traces
        .par_iter()
        .map(|t| {
            let mut profiles = Vec::new();
            let mut coverage = Vec::new();
            for day in segment_days(t) {
                let retained = match build_ddp(&day, &cfg.ddp) {
                    Ok(p) => {
                        profiles.push(p);
                        true
                    }
                    Err(Error::InsufficientCoverage { .. }) | Err(Error::AllBinsAbsent) => false,
                    Err(e) => return Err(e.context(format!("participant {} day {}", t.participant_id, day.local_date))),
                };
                coverage.push((t.participant_id.clone(), day.local_date.to_string(), day.group, day.coverage_fraction, retained));
            }
            Ok((profiles, coverage))
        })
        .collect::<Result<_>>()?;

    let profiles: Vec<DisplacementProfile> = per.iter().flat_map(|(p, _)| p.iter().cloned()).collect();
    write_ddp_csv(&profiles, create(&cfg.out("ddp.csv"))?)?;
    write_heatmap_csv(&ddp_heatmap_table(&profiles), create(&cfg.out("ddp_heatmap.csv"))?)?;
    let mut w = csv::Writer::from_writer(create(&cfg.out("day_coverage.csv"))?);
    w.write_record(["participant_id", "local_date", "group", "coverage", "retained"])?;
    let mut seen = 0;
    for (pid, date, group, cov, kept) in per.iter().flat_map(|(_, c)| c) {
        seen += 1;
        w.write_record([pid.clone(), date.clone(), group.to_string(), format!("{cov:.4}"), u8::from(*kept).to_string()])?;
    }
    w.flush()?;
    let summary = DdpSummary {
        days_seen: seen,
        days_retained: profiles.len(),
    };
    record_stage(cfg, "ddp", serde_json::to_value(&summary).expect("summary serializes"))?;
    Ok(summary)
}

fn load_ddp(cfg: &RunConfig) -> Result<Vec<DisplacementProfile>> {
    read_ddp_csv(open_artifact(&cfg.out("ddp.csv"))?).map_err(|e| e.context("ddp.csv"))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PcaSummary {
    pub n_days: usize,
    pub explained_variance_ratio: Vec<f64>,
    pub morning_evening_contrast: Vec<f64>,
}

pub fn run_pca(cfg: &RunConfig) -> Result<PcaSummary> {
    cfg.validate()?;
    let profiles = load_ddp(cfg)?;
    let model = pca_fit_profiles(&profiles, &cfg.pca)?;
    write_loadings_csv(&model, create(&cfg.out("pca_loadings.csv"))?)?;
    write_scores_csv(&model, &profiles, create(&cfg.out("pca_scores.csv"))?)?;
    let contrast: Vec<f64> = model.loadings.iter().map(|l| morning_evening_contrast(l)).collect();
    let mut w = csv::Writer::from_writer(create(&cfg.out("pca_variance.csv"))?);
    w.write_record(["pc", "eigenvalue", "explained_variance_ratio", "cumulative_ratio", "morning_evening_contrast"])?;
    for k in 0..model.n_components() {
        w.write_record([
            format!("PC{}", k + 1),
            format!("{:.6}", model.eigenvalues[k]),
            format!("{:.9}", model.explained_variance_ratio[k]),
            format!("{:.9}", model.cumulative_ratio(k + 1)),
            format!("{:.9}", contrast[k]),
        ])?;
    }
    w.flush()?;
    let summary = PcaSummary {
        n_days: profiles.len(),
        explained_variance_ratio: model.explained_variance_ratio.clone(),
        morning_evening_contrast: contrast,
    };
    record_stage(cfg, "pca", serde_json::to_value(&summary).expect("summary serializes"))?;
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CircadianSummary {
    pub participants: usize,
    pub participants_with_ra: usize,
}

pub fn run_circadian(cfg: &RunConfig) -> Result<CircadianSummary> {
    cfg.validate()?;
    let profiles = load_ddp(cfg)?;
    let mut by_pid: Vec<&[DisplacementProfile]> = Vec::new();
    let mut start = 0;
    for i in 1..=profiles.len() {
        if i == profiles.len() || profiles[i].participant_id != profiles[start].participant_id {
            by_pid.push(&profiles[start..i]);
            start = i;
        }
    }
    let results: Vec<(CircadianMetrics, Vec<DailyIv>)> = by_pid
        .par_iter()
        .filter_map(|p| participant_metrics(p, &cfg.circadian))
        .collect();
    let metrics: Vec<CircadianMetrics> = results.iter().map(|(m, _)| m.clone()).collect();
    let daily: Vec<DailyIv> = results.into_iter().flat_map(|(_, d)| d).collect();
    write_metrics_csv(&metrics, create(&cfg.out("circadian.csv"))?)?;
    write_daily_iv_csv(&daily, create(&cfg.out("daily_iv.csv"))?)?;
    let summary = CircadianSummary {
        participants: metrics.len(),
        participants_with_ra: metrics.iter().filter(|m| m.ra.is_some()).count(),
    };
    record_stage(cfg, "circadian", serde_json::to_value(&summary).expect("summary serializes"))?;
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhenotypeSummary {
    pub participant_days: usize,
    pub labeled_days: usize,
    pub severe_days: usize,
}

pub fn run_phenotypes(cfg: &RunConfig) -> Result<PhenotypeSummary> {
    cfg.validate()?;
    let survey: Option<SurveyTable> = match &cfg.survey {
        Some(_) => Some(read_survey_csv(open_config_file(&cfg.survey, "survey")?).map_err(|e| e.context("survey"))?),
        None => None,
    };
    let traces = load_canonical(cfg)?;
    let rows: Vec<DailyPhenotypes> = traces
        .par_iter()
        .map(|t| compute_daily_phenotypes(t, survey.as_ref(), &cfg.phenotypes))
        .flatten_iter()
        .collect();
    write_phenotypes_csv(&rows, create(&cfg.out("phenotypes.csv"))?)?;
    let summary = PhenotypeSummary {
        participant_days: rows.len(),
        labeled_days: rows.iter().filter(|r| r.severe_sad.is_some()).count(),
        severe_days: rows.iter().filter(|r| r.severe_sad == Some(true)).count(),
    };
    record_stage(cfg, "phenotypes", serde_json::to_value(&summary).expect("summary serializes"))?;
    Ok(summary)
}

fn load_phenotypes(cfg: &RunConfig) -> Result<Vec<DailyPhenotypes>> {
    read_phenotypes_csv(open_artifact(&cfg.out("phenotypes.csv"))?).map_err(|e| e.context("phenotypes.csv"))
}

/// Participant mean of each phenotype over its retained days.
fn participant_means(rows: &[DailyPhenotypes]) -> Vec<(Group, [Option<f64>; 7])> {
    let mut out = Vec::new();
    let mut start = 0;
    for i in 1..=rows.len() {
        if i == rows.len() || rows[i].participant_id != rows[start].participant_id {
            let chunk = &rows[start..i];
            let mut means = [None; 7];
            for (j, m) in means.iter_mut().enumerate() {
                let vals: Vec<f64> = chunk.iter().filter_map(|r| r.features()[j]).collect();
                if !vals.is_empty() {
                    *m = Some(vals.iter().sum::<f64>() / vals.len() as f64);
                }
            }
            out.push((chunk[0].group, means));
            start = i;
        }
    }
    out
}

/// Welch comparisons of PCA scores, circadian metrics and phenotypes.
pub fn run_compare(cfg: &RunConfig) -> Result<Vec<crate::analysis::ComparisonRow>> {
    cfg.validate()?;
    let scores = read_scores_csv(open_artifact(&cfg.out("pca_scores.csv"))?).map_err(|e| e.context("pca_scores.csv"))?;
    let circ = read_metrics_csv(open_artifact(&cfg.out("circadian.csv"))?).map_err(|e| e.context("circadian.csv"))?;
    let daily_iv = read_daily_iv_csv(open_artifact(&cfg.out("daily_iv.csv"))?).map_err(|e| e.context("daily_iv.csv"))?;
    let pheno = load_phenotypes(cfg)?;

    let mut metrics: Vec<MetricValues> = Vec::new();
    let n_pc = scores.first().map_or(0, |s| s.scores.len());
    for k in 0..n_pc {
        let mut m = MetricValues::new(format!("PC{}", k + 1), Granularity::Day);
        for s in &scores {
            m.push(s.group, Some(s.scores[k]));
        }
        metrics.push(m);
    }
    type Getter = fn(&CircadianMetrics) -> Option<f64>;
    let circ_fields: [(&str, Getter); 5] = [
        ("IS", |m| m.is),
        ("IV", |m| m.iv),
        ("M10", |m| m.m10),
        ("L5", |m| m.l5),
        ("RA", |m| m.ra),
    ];
    for (name, get) in circ_fields {
        let mut m = MetricValues::new(name, Granularity::Participant);
        for c in &circ {
            m.push(c.group, get(c));
        }
        metrics.push(m);
    }
    let mut m = MetricValues::new("IV", Granularity::Day);
    for d in &daily_iv {
        m.push(d.group, d.iv);
    }
    metrics.push(m);
    let means = participant_means(&pheno);
    for (j, name) in FEATURE_NAMES.iter().enumerate() {
        let mut day = MetricValues::new(*name, Granularity::Day);
        for r in &pheno {
            day.push(r.group, r.features()[j]);
        }
        let mut part = MetricValues::new(*name, Granularity::Participant);
        for (g, f) in &means {
            part.push(*g, f[j]);
        }
        metrics.push(day);
        metrics.push(part);
    }

    let rows: Vec<_> = metrics.iter().map(group_compare).collect::<Result<_>>()?;
    write_comparison_csv(&rows, create(&cfg.out("comparison.csv"))?)?;
    let sig = rows.iter().filter(|r| r.welch.p_value < 0.05).count();
    record_stage(cfg, "compare", json!({ "tests": rows.len(), "p_below_0_05": sig }))?;
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PredictSummary {
    pub dropped_rows: usize,
    /// (eligible, total) participants per group.
    pub retained_pre: (usize, usize),
    pub retained_post: (usize, usize),
    pub results: Vec<PredictionResult>,
    pub comparisons: Vec<AucComparison>,
}

pub fn run_predict(cfg: &RunConfig) -> Result<PredictSummary> {
    cfg.validate()?;
    let pheno = load_phenotypes(cfg)?;
    let input = ModelInput::from_phenotypes(&pheno);
    let cohort = filter_cohort(&input);

    let mut w = csv::Writer::from_writer(create(&cfg.out("predict_cohort.csv"))?);
    w.write_record(["participant_id", "group", "n_days", "n_severe", "eligible"])?;
    for c in &cohort.counts {
        let eligible = cohort.eligible.binary_search(&c.participant_id).is_ok();
        w.write_record([
            c.participant_id.clone(),
            c.group.to_string(),
            c.n_days.to_string(),
            c.n_severe.to_string(),
            u8::from(eligible).to_string(),
        ])?;
    }
    w.flush()?;

    let mut methods = vec![Method::Logistic(cfg.logistic)];
    if !cfg.skip_forest {
        methods.push(Method::Forest(cfg.forest));
    }
    let mut results = Vec::new();
    let mut comparisons = Vec::new();
    for method in &methods {
        let mut per_group = Vec::new();
        for group in [Group::Pre, Group::Post] {
            let data = cohort.input.for_group(group);
            let r = loocv_auc(&data, method).map_err(|e| e.context(format!("{} {group}", method.name())))?;
            per_group.push(r);
        }
        write_prediction_csv(&per_group, create(&cfg.out(&format!("predict_{}.csv", method.name())))?)?;
        comparisons.push(AucComparison::new(&per_group[0], &per_group[1])?);
        results.extend(per_group);
    }
    write_auc_comparison_csv(&comparisons, create(&cfg.out("predict_auc_comparison.csv"))?)?;

    let summary = PredictSummary {
        dropped_rows: input.dropped,
        retained_pre: cohort.retained(Group::Pre),
        retained_post: cohort.retained(Group::Post),
        results,
        comparisons,
    };
    let brief: Vec<Value> = summary
        .results
        .iter()
        .map(|r| {
            json!({
                "method": r.method,
                "group": r.group.map(|g| g.to_string()),
                "mean_auc": r.mean_auc,
                "sd_auc": r.sd_auc,
                "n_participants": r.n_participants,
                "skipped": r.skipped,
            })
        })
        .collect();
    record_stage(
        cfg,
        "predict",
        json!({
            "dropped_rows": summary.dropped_rows,
            "eligible_pre": summary.retained_pre,
            "eligible_post": summary.retained_post,
            "standardized_features": true,
            "random_effects": "ridge-penalized per-participant intercepts",
            "results": brief,
        }),
    )?;
    Ok(summary)
}

/// Every stage in order.
pub fn run_pipeline(cfg: &RunConfig) -> Result<()> {
    run_ingest(cfg)?;
    run_ddp(cfg)?;
    run_pca(cfg)?;
    run_circadian(cfg)?;
    run_phenotypes(cfg)?;
    run_compare(cfg)?;
    if cfg.survey.is_some() {
        run_predict(cfg)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roster_parsing() {
        let text = "participant_id,group,timezone_offset_minutes\nb,POST,-300\na,PRE,\n";
        let r = read_roster_csv(text.as_bytes()).unwrap();
        assert_eq!(r[0].participant_id, "a");
        assert_eq!(r[0].timezone_offset_minutes, None);
        assert_eq!(r[1].timezone_offset_minutes, Some(-300));
        let r = read_roster_csv("participant_id,group\nx,PRE\n".as_bytes()).unwrap();
        assert_eq!(r.len(), 1);
        for bad in [
            "id,group\nx,PRE\n",
            "participant_id,group\nx,LATER\n",
            "participant_id,group\nx,PRE\nx,POST\n",
            "participant_id,group\n../x,PRE\n",
        ] {
            assert!(matches!(read_roster_csv(bad.as_bytes()), Err(Error::ConfigInvalid(_))), "{bad}");
        }
    }

    #[test]
    fn config_json_overrides_defaults() {
        let cfg = RunConfig::from_json(r#"{"output_dir": "x", "places": 1}"#);
        assert!(matches!(cfg, Err(Error::ConfigInvalid(_))));
        let cfg = RunConfig::from_json(r#"{"output_dir": "x", "logistic": {"lambda": 2.5}}"#).unwrap();
        assert_eq!(cfg.logistic.lambda, 2.5);
        assert_eq!(cfg.logistic.max_iter, 500);
        assert_eq!(cfg.phenotypes.places.d_thresh_m, 200.0);
        let bad = RunConfig { logistic: LogisticConfig { lambda: -1.0, ..Default::default() }, ..Default::default() };
        assert!(matches!(bad.validate(), Err(Error::ConfigInvalid(_))));
    }

    #[test]
    fn missing_artifact_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = RunConfig { output_dir: dir.path().to_path_buf(), ..Default::default() };
        let err = run_pca(&cfg).unwrap_err();
        assert!(matches!(err, Error::MissingUpstreamArtifact(_)));
        assert_eq!(err.exit_code(), 2);
        let err = run_ingest(&cfg).unwrap_err();
        assert!(matches!(err, Error::ConfigInvalid(_)));
    }
}
