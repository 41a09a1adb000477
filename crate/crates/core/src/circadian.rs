//! Nonparametric rest-activity rhythm metrics over displacement profiles.
//!
//! IS and IV follow the usual actigraphy definitions:
//!
//! ```text
//! IS = [sum_h (mean_h - mean)^2 / p] / [sum_i (x_i - mean)^2 / n]
//! IV = [n sum_i (x_i - x_{i-1})^2] / [(n - 1) sum_i (x_i - mean)^2]
//! ```
//!
//! IS is pooled over all of a participant's days. IV is evaluated per day and
//! averaged. M10/L5 scan non-wrapping windows of the mean daily profile.

use std::io::{Read, Write};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::ddp::DisplacementProfile;
use crate::error::{Error, Result};
use crate::ingest::Group;

/// Bins per hour on the half-hour grid.
const BINS_PER_HOUR: usize = 2;
const M10_BINS: usize = 10 * BINS_PER_HOUR;
const L5_BINS: usize = 5 * BINS_PER_HOUR;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CircadianConfig {
    /// Prepend a zero so the 47 displacements become a 48-bin day.
    pub pad_leading_zero: bool,
}

impl Default for CircadianConfig {
    fn default() -> Self {
        CircadianConfig {
            pad_leading_zero: true,
        }
    }
}

pub fn activity_series(profile: &DisplacementProfile, config: &CircadianConfig) -> Vec<f64> {
    let mut v = Vec::with_capacity(profile.d.len() + 1);
    if config.pad_leading_zero {
        v.push(0.0);
    }
    v.extend_from_slice(&profile.d);
    v
}

fn check_days(days: &[Vec<f64>], required: usize) -> Result<usize> {
    if days.len() < required {
        return Err(Error::InsufficientDays {
            required,
            got: days.len(),
        });
    }
    let p = days[0].len();
    if p == 0 || days.iter().any(|d| d.len() != p) {
        return Err(Error::InvalidShape("days must share one non-zero length".into()));
    }
    Ok(p)
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Mean over days at each bin.
pub fn mean_profile(days: &[Vec<f64>]) -> Result<Vec<f64>> {
    let p = check_days(days, 1)?;
    let nd = days.len() as f64;
    Ok((0..p).map(|h| days.iter().map(|d| d[h]).sum::<f64>() / nd).collect())
}

pub fn interdaily_stability(days: &[Vec<f64>]) -> Result<f64> {
    let p = check_days(days, 2)?;
    let n = (days.len() * p) as f64;
    let grand = days.iter().flatten().sum::<f64>() / n;
    let total: f64 = days.iter().flatten().map(|x| (x - grand).powi(2)).sum();
    if total <= 0.0 {
        return Err(Error::DegenerateVariance);
    }
    let between: f64 = mean_profile(days)?.iter().map(|m| (m - grand).powi(2)).sum();
    Ok((between / p as f64) / (total / n))
}

/// IV of a single day's series.
pub fn intradaily_variability_day(day: &[f64]) -> Result<f64> {
    let n = day.len();
    if n < 2 {
        return Err(Error::InvalidShape("IV needs at least two bins".into()));
    }
    let m = mean(day);
    let ss: f64 = day.iter().map(|x| (x - m).powi(2)).sum();
    if ss <= 0.0 {
        return Err(Error::DegenerateVariance);
    }
    let sd: f64 = day.windows(2).map(|w| (w[1] - w[0]).powi(2)).sum();
    Ok((n as f64 * sd) / ((n - 1) as f64 * ss))
}

/// Mean of the per-day IV over the days where it is defined.
pub fn intradaily_variability(days: &[Vec<f64>]) -> Result<f64> {
    check_days(days, 1)?;
    let vals: Vec<f64> = days
        .iter()
        .filter_map(|d| intradaily_variability_day(d).ok())
        .collect();
    if vals.is_empty() {
        return Err(Error::DegenerateVariance);
    }
    Ok(mean(&vals))
}

fn window_means(profile: &[f64], width: usize) -> impl Iterator<Item = f64> + '_ {
    profile.windows(width).map(move |w| w.iter().sum::<f64>() / width as f64)
}

/// Returns `(M10, L5)` from the participant's mean daily profile.
pub fn m10_l5(days: &[Vec<f64>]) -> Result<(f64, f64)> {
    let profile = mean_profile(days)?;
    if profile.len() < M10_BINS {
        return Err(Error::InvalidShape(format!(
            "profile of {} bins is shorter than a 10 hour window",
            profile.len()
        )));
    }
    let m10 = window_means(&profile, M10_BINS).fold(f64::NEG_INFINITY, f64::max);
    let l5 = window_means(&profile, L5_BINS).fold(f64::INFINITY, f64::min);
    Ok((m10, l5))
}

pub fn relative_amplitude(m10: f64, l5: f64) -> Result<f64> {
    let denom = m10 + l5;
    if denom == 0.0 {
        return Err(Error::ZeroDenominator);
    }
    Ok((m10 - l5) / denom)
}

/// Per-participant rhythm metrics; `None` marks a metric that is undefined
/// for this participant.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CircadianMetrics {
    pub participant_id: String,
    pub group: Group,
    pub is: Option<f64>,
    pub iv: Option<f64>,
    pub m10: Option<f64>,
    pub l5: Option<f64>,
    pub ra: Option<f64>,
    pub n_days: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DailyIv {
    pub participant_id: String,
    pub group: Group,
    pub local_date: NaiveDate,
    pub iv: Option<f64>,
}

/// Metrics for one participant's profiles (all assumed to share participant and group).
pub fn participant_metrics(
    profiles: &[DisplacementProfile],
    config: &CircadianConfig,
) -> Option<(CircadianMetrics, Vec<DailyIv>)> {
    let first = profiles.first()?;
    let days: Vec<Vec<f64>> = profiles.iter().map(|p| activity_series(p, config)).collect();
    let daily: Vec<DailyIv> = profiles
        .iter()
        .zip(&days)
        .map(|(p, d)| DailyIv {
            participant_id: p.participant_id.clone(),
            group: p.group,
            local_date: p.local_date,
            iv: intradaily_variability_day(d).ok(),
        })
        .collect();
    let (m10, l5) = match m10_l5(&days) {
        Ok((a, b)) => (Some(a), Some(b)),
        Err(_) => (None, None),
    };
    let ra = match (m10, l5) {
        (Some(a), Some(b)) => relative_amplitude(a, b).ok(),
        _ => None,
    };
    let metrics = CircadianMetrics {
        participant_id: first.participant_id.clone(),
        group: first.group,
        is: interdaily_stability(&days).ok(),
        iv: intradaily_variability(&days).ok(),
        m10,
        l5,
        ra,
        n_days: days.len(),
    };
    Some((metrics, daily))
}

pub(crate) fn fmt_opt(v: Option<f64>, decimals: usize) -> String {
    v.map(|x| format!("{x:.decimals$}")).unwrap_or_default()
}

pub fn write_metrics_csv<W: Write>(rows: &[CircadianMetrics], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["participant_id", "group", "IS", "IV", "M10", "L5", "RA", "n_days"])?;
    for r in rows {
        w.write_record([
            r.participant_id.clone(),
            r.group.to_string(),
            fmt_opt(r.is, 9),
            fmt_opt(r.iv, 9),
            fmt_opt(r.m10, 6),
            fmt_opt(r.l5, 6),
            fmt_opt(r.ra, 9),
            r.n_days.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_daily_iv_csv<W: Write>(rows: &[DailyIv], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["participant_id", "local_date", "group", "IV"])?;
    for r in rows {
        w.write_record([
            r.participant_id.clone(),
            r.local_date.to_string(),
            r.group.to_string(),
            fmt_opt(r.iv, 9),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn parse_opt(field: &str) -> std::result::Result<Option<f64>, std::num::ParseFloatError> {
    if field.is_empty() {
        Ok(None)
    } else {
        field.parse().map(Some)
    }
}

pub fn read_metrics_csv<R: Read>(input: R) -> Result<Vec<CircadianMetrics>> {
    let mut r = csv::Reader::from_reader(input);
    let mut out = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let bad = |reason: &str| Error::MalformedRow {
            line: line + 2,
            reason: reason.to_string(),
        };
        if rec.len() != 8 {
            return Err(bad("expected 8 columns"));
        }
        let num = |i: usize| parse_opt(&rec[i]).map_err(|_| bad("bad number"));
        out.push(CircadianMetrics {
            participant_id: rec[0].to_string(),
            group: rec[1].parse().map_err(|_| bad("bad group"))?,
            is: num(2)?,
            iv: num(3)?,
            m10: num(4)?,
            l5: num(5)?,
            ra: num(6)?,
            n_days: rec[7].parse().map_err(|_| bad("bad day count"))?,
        });
    }
    Ok(out)
}

pub fn read_daily_iv_csv<R: Read>(input: R) -> Result<Vec<DailyIv>> {
    let mut r = csv::Reader::from_reader(input);
    let mut out = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let bad = |reason: &str| Error::MalformedRow {
            line: line + 2,
            reason: reason.to_string(),
        };
        if rec.len() != 4 {
            return Err(bad("expected 4 columns"));
        }
        out.push(DailyIv {
            participant_id: rec[0].to_string(),
            local_date: rec[1].parse::<NaiveDate>().map_err(|_| bad("bad date"))?,
            group: rec[2].parse().map_err(|_| bad("bad group"))?,
            iv: parse_opt(&rec[3]).map_err(|_| bad("bad IV"))?,
        });
    }
    Ok(out)
}
