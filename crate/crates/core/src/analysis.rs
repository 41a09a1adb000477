//! PCA over pooled displacement profiles and PRE/POST group comparisons.

use std::io::{Read, Write};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::ddp::{displacement_label, DisplacementProfile};
use crate::error::{Error, Result};
use crate::ingest::Group;
use crate::linalg::symmetric_eigen;
use crate::stats::{welch_t, WelchResult};

/// Relative off-diagonal tolerance for the Jacobi solver.
pub const EIGEN_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PcaConfig {
    pub n_components: usize,
    /// Fit on `ln(1 + d)` instead of raw meters.
    pub log_transform: bool,
    /// Standardize columns (correlation PCA).
    pub correlation: bool,
}

impl Default for PcaConfig {
    fn default() -> Self {
        PcaConfig {
            n_components: 10,
            log_transform: false,
            correlation: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    pub n_features: usize,
    pub mean_vector: Vec<f64>,
    /// Per-column divisor; all ones for covariance PCA.
    pub scale: Vec<f64>,
    /// `loadings[k]` is the unit-norm loading vector of component `k`.
    pub loadings: Vec<Vec<f64>>,
    pub eigenvalues: Vec<f64>,
    /// Explained variance ratio of the retained components.
    pub explained_variance_ratio: Vec<f64>,
    /// Ratios for every component; sums to one.
    pub full_explained_variance_ratio: Vec<f64>,
    /// One row per input row, `n_components` columns.
    pub scores: Vec<Vec<f64>>,
}

impl PcaModel {
    pub fn n_components(&self) -> usize {
        self.loadings.len()
    }

    pub fn cumulative_ratio(&self, k: usize) -> f64 {
        self.full_explained_variance_ratio.iter().take(k).sum()
    }

    pub fn transform(&self, row: &[f64]) -> Vec<f64> {
        self.loadings
            .iter()
            .map(|l| {
                row.iter()
                    .zip(&self.mean_vector)
                    .zip(&self.scale)
                    .zip(l)
                    .map(|(((x, m), s), w)| (x - m) / s * w)
                    .sum()
            })
            .collect()
    }

    /// Maps scores back into the input space.
    pub fn reconstruct(&self, scores: &[f64]) -> Vec<f64> {
        (0..self.n_features)
            .map(|j| {
                let centred: f64 = scores.iter().zip(&self.loadings).map(|(s, l)| s * l[j]).sum();
                self.mean_vector[j] + centred * self.scale[j]
            })
            .collect()
    }
}

/// Fits PCA on the rows of `data` (all of equal length).
pub fn pca_fit<R: AsRef<[f64]>>(data: &[R], n_components: usize, correlation: bool) -> Result<PcaModel> {
    let n = data.len();
    if n < 2 {
        return Err(Error::InvalidShape(format!("PCA needs at least 2 rows, got {n}")));
    }
    let p = data[0].as_ref().len();
    if p == 0 || data.iter().any(|r| r.as_ref().len() != p) {
        return Err(Error::InvalidShape("rows must share one non-zero length".into()));
    }
    let k = n_components.clamp(1, p);

    let mut mean = vec![0.0; p];
    for r in data {
        for (m, x) in mean.iter_mut().zip(r.as_ref()) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);

    let mut cov = vec![0.0; p * p];
    let mut centred = vec![0.0; p];
    for r in data {
        for (c, (x, m)) in centred.iter_mut().zip(r.as_ref().iter().zip(&mean)) {
            *c = x - m;
        }
        for i in 0..p {
            let ci = centred[i];
            let row = &mut cov[i * p..(i + 1) * p];
            for j in i..p {
                row[j] += ci * centred[j];
            }
        }
    }
    for i in 0..p {
        for j in i..p {
            cov[i * p + j] /= (n - 1) as f64;
            cov[j * p + i] = cov[i * p + j];
        }
    }

    let mut scale = vec![1.0; p];
    if correlation {
        for i in 0..p {
            let sd = cov[i * p + i].sqrt();
            scale[i] = if sd > 0.0 { sd } else { 1.0 };
        }
        for i in 0..p {
            for j in 0..p {
                cov[i * p + j] /= scale[i] * scale[j];
            }
        }
    }

    let eig = symmetric_eigen(&cov, p, EIGEN_TOL)?;
    // tiny negative eigenvalues are rounding noise on rank-deficient data
    let values: Vec<f64> = eig.values.iter().map(|&v| v.max(0.0)).collect();
    let trace: f64 = values.iter().sum();
    let full_ratio: Vec<f64> = if trace > 0.0 {
        values.iter().map(|v| v / trace).collect()
    } else {
        vec![0.0; p]
    };
    let loadings: Vec<Vec<f64>> = (0..k).map(|c| eig.vector(c)).collect();

    let mut model = PcaModel {
        n_features: p,
        mean_vector: mean,
        scale,
        loadings,
        eigenvalues: values[..k].to_vec(),
        explained_variance_ratio: full_ratio[..k].to_vec(),
        full_explained_variance_ratio: full_ratio,
        scores: Vec::new(),
    };
    model.scores = data.iter().map(|r| model.transform(r.as_ref())).collect();
    Ok(model)
}

/// PCA over displacement profiles, optionally on log displacements.
pub fn pca_fit_profiles(profiles: &[DisplacementProfile], config: &PcaConfig) -> Result<PcaModel> {
    let rows: Vec<Vec<f64>> = profiles
        .iter()
        .map(|p| {
            if config.log_transform {
                p.d.iter().map(|x| x.ln_1p()).collect()
            } else {
                p.d.to_vec()
            }
        })
        .collect();
    pca_fit(&rows, config.n_components, config.correlation)
}

/// Morning (08-10h) plus evening (19-21h) mean loading minus midday (11-17h)
/// mean loading, for a 47-value displacement loading vector.
pub fn morning_evening_contrast(loading: &[f64]) -> f64 {
    // displacement i lands in bin i + 1
    let avg = |bins: std::ops::Range<usize>| {
        let len = bins.len() as f64;
        bins.map(|b| loading[b - 1]).sum::<f64>() / len
    };
    let peaks = (avg(16..20) + avg(38..42)) / 2.0;
    peaks - avg(22..34)
}

pub fn write_loadings_csv<W: Write>(model: &PcaModel, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["pc".to_string(), "explained_variance_ratio".into()];
    header.extend((0..model.n_features).map(displacement_label));
    w.write_record(&header)?;
    for (k, l) in model.loadings.iter().enumerate() {
        let mut row = vec![format!("PC{}", k + 1), format!("{:.9}", model.explained_variance_ratio[k])];
        row.extend(l.iter().map(|x| format!("{x:.9}")));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_scores_csv<W: Write>(model: &PcaModel, profiles: &[DisplacementProfile], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["participant_id".to_string(), "local_date".into(), "group".into()];
    header.extend((1..=model.n_components()).map(|k| format!("PC{k}")));
    w.write_record(&header)?;
    for (p, s) in profiles.iter().zip(&model.scores) {
        let mut row = vec![p.participant_id.clone(), p.local_date.to_string(), p.group.to_string()];
        row.extend(s.iter().map(|x| format!("{x:.6}")));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// One row of the PCA score table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DayScores {
    pub participant_id: String,
    pub local_date: NaiveDate,
    pub group: Group,
    pub scores: Vec<f64>,
}

pub fn read_scores_csv<R: Read>(input: R) -> Result<Vec<DayScores>> {
    let mut r = csv::Reader::from_reader(input);
    let mut out = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let bad = |reason: &str| Error::MalformedRow {
            line: line + 2,
            reason: reason.to_string(),
        };
        if rec.len() < 4 {
            return Err(bad("expected at least one component column"));
        }
        out.push(DayScores {
            participant_id: rec[0].to_string(),
            local_date: rec[1].parse().map_err(|_| bad("bad date"))?,
            group: rec[2].parse().map_err(|_| bad("bad group"))?,
            scores: rec
                .iter()
                .skip(3)
                .map(|f| f.parse().map_err(|_| bad("bad score")))
                .collect::<Result<_>>()?,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Granularity {
    Day,
    Participant,
}

impl Granularity {
    pub fn as_str(&self) -> &'static str {
        match self {
            Granularity::Day => "day",
            Granularity::Participant => "participant",
        }
    }
}

/// Values of one named metric, each tagged with its group.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricValues {
    pub name: String,
    pub granularity: Granularity,
    pub values: Vec<(Group, f64)>,
}

impl MetricValues {
    pub fn new(name: impl Into<String>, granularity: Granularity) -> Self {
        MetricValues {
            name: name.into(),
            granularity,
            values: Vec::new(),
        }
    }

    pub fn push(&mut self, group: Group, value: Option<f64>) {
        if let Some(v) = value.filter(|v| v.is_finite()) {
            self.values.push((group, v));
        }
    }

    pub fn for_group(&self, group: Group) -> Vec<f64> {
        self.values.iter().filter(|(g, _)| *g == group).map(|(_, v)| *v).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub metric: String,
    pub granularity: Granularity,
    pub mean_post: f64,
    pub mean_pre: f64,
    /// Welch test of POST against PRE: negative `t` means POST is lower.
    pub welch: WelchResult,
}

pub fn group_compare(metric: &MetricValues) -> Result<ComparisonRow> {
    let pre = metric.for_group(Group::Pre);
    let post = metric.for_group(Group::Post);
    for (vals, g) in [(&pre, Group::Pre), (&post, Group::Post)] {
        if vals.is_empty() {
            return Err(Error::MetricMissingForGroup {
                metric: metric.name.clone(),
                group: g.to_string(),
            });
        }
    }
    let welch = welch_t(&post, &pre).map_err(|e| e.context(format!("metric {}", metric.name)))?;
    Ok(ComparisonRow {
        metric: metric.name.clone(),
        granularity: metric.granularity,
        mean_post: welch.mean_a,
        mean_pre: welch.mean_b,
        welch,
    })
}

pub const COMPARISON_FOOTER: &str = "# day-granularity tests pool participant-days and ignore within-participant dependence";

pub fn write_comparison_csv<W: Write>(rows: &[ComparisonRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["metric", "granularity", "mean_post", "mean_pre", "t", "df", "p"])?;
    for r in rows {
        w.write_record([
            r.metric.clone(),
            r.granularity.as_str().to_string(),
            format!("{:.6}", r.mean_post),
            format!("{:.6}", r.mean_pre),
            format!("{:.6}", r.welch.t_statistic),
            format!("{:.4}", r.welch.degrees_freedom),
            format!("{:.6e}", r.welch.p_value),
        ])?;
    }
    let mut inner = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
    writeln!(inner, "{COMPARISON_FOOTER}")?;
    inner.flush()?;
    Ok(())
}
