//! Seven daily mobility phenotypes and the severe-sadness label join.

use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::circadian::fmt_opt;
use crate::ddp::{bin_day, displacements, impute_bins};
use crate::error::{Error, Result};
use crate::geo::{chord_to_meters, haversine, Coordinate, LocalProjection};
use crate::ingest::{segment_days, DayTrace, GpsPoint, Group, Trace, BINS_PER_DAY, MS_PER_DAY};
use crate::places::{cluster_places, detect_home, PlaceConfig, Places};

/// Feature names in export order.
pub const FEATURE_NAMES: [&str; 7] = [
    "loc.var",
    "num.pls",
    "ent.pls",
    "perc.home",
    "total.dist",
    "max.dist",
    "routine.idx",
];

/// Exact pairwise max distance is used below this many points.
const EXACT_MAX_DIST_LIMIT: usize = 5000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum LocVarMode {
    /// Projected planar meters.
    #[default]
    Meters,
    /// Raw degrees, for replication against degree-based tooling.
    Degrees,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PhenotypeConfig {
    pub places: PlaceConfig,
    pub min_coverage: f64,
    pub loc_var_mode: LocVarMode,
}

impl Default for PhenotypeConfig {
    fn default() -> Self {
        PhenotypeConfig {
            places: PlaceConfig::default(),
            min_coverage: 0.5,
            loc_var_mode: LocVarMode::Meters,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DailyPhenotypes {
    pub participant_id: String,
    pub local_date: NaiveDate,
    pub group: Group,
    pub loc_var: Option<f64>,
    pub num_pls: usize,
    pub ent_pls: f64,
    pub perc_home: Option<f64>,
    pub total_dist: f64,
    pub max_dist: f64,
    pub routine_idx: Option<f64>,
    pub severe_sad: Option<bool>,
}

impl DailyPhenotypes {
    /// Features in [`FEATURE_NAMES`] order, `None` where missing.
    pub fn features(&self) -> [Option<f64>; 7] {
        [
            self.loc_var,
            Some(self.num_pls as f64),
            Some(self.ent_pls),
            self.perc_home,
            Some(self.total_dist),
            Some(self.max_dist),
            self.routine_idx,
        ]
    }
}

/// `sqrt(var(x) + var(y))` with unbiased (n - 1) variances.
pub fn location_variance(points: &[GpsPoint], mode: LocVarMode) -> Result<f64> {
    if points.len() < 2 {
        return Err(Error::TooFewPoints);
    }
    let n = points.len() as f64;
    let xy: Vec<(f64, f64)> = match mode {
        LocVarMode::Meters => {
            // variance is translation invariant; anchoring at a sample point keeps identical fixes exactly zero
            let proj = LocalProjection::new(points[0].coord());
            points.iter().map(|p| proj.project(p.coord())).collect()
        }
        LocVarMode::Degrees => points.iter().map(|p| (p.longitude, p.latitude)).collect(),
    };
    let (mx, my) = xy.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x / n, b + y / n));
    let var = xy.iter().map(|(x, y)| (x - mx).powi(2) + (y - my).powi(2)).sum::<f64>() / (n - 1.0);
    Ok(var.sqrt())
}

/// Normalized entropy of dwell shares; zero for fewer than two places.
pub fn place_entropy(dwell_s: &[f64]) -> f64 {
    let visited: Vec<f64> = dwell_s.iter().copied().filter(|&d| d > 0.0).collect();
    let k = visited.len();
    if k <= 1 {
        return 0.0;
    }
    let total: f64 = visited.iter().sum();
    let h: f64 = visited
        .iter()
        .map(|d| {
            let p = d / total;
            -p * p.ln()
        })
        .sum();
    (h / (k as f64).ln()).clamp(0.0, 1.0)
}

/// Fraction of bins within `radius_m` of home.
pub fn percent_home(bins: &[Coordinate], home: Coordinate, radius_m: f64) -> f64 {
    let at_home = bins.iter().filter(|&&c| haversine(c, home) <= radius_m).count();
    at_home as f64 / bins.len() as f64
}

/// Path length over consecutive registered points.
pub fn total_distance(points: &[GpsPoint]) -> f64 {
    points.windows(2).map(|w| haversine(w[0].coord(), w[1].coord())).sum()
}

fn max_chord(units: &[[f64; 3]]) -> f64 {
    let mut best = 0.0f64;
    for (i, a) in units.iter().enumerate() {
        for b in &units[i + 1..] {
            let d = (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2);
            best = best.max(d);
        }
    }
    best.sqrt()
}

fn cross(o: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

/// Indices of the convex hull of planar points (monotone chain).
fn convex_hull(pts: &[(f64, f64)]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..pts.len()).collect();
    idx.sort_by(|&a, &b| pts[a].0.total_cmp(&pts[b].0).then(pts[a].1.total_cmp(&pts[b].1)));
    idx.dedup_by(|a, b| pts[*a] == pts[*b]);
    if idx.len() < 3 {
        return idx;
    }
    let mut hull: Vec<usize> = Vec::with_capacity(2 * idx.len());
    for pass in 0..2 {
        let start = hull.len();
        let order: Box<dyn Iterator<Item = &usize>> = if pass == 0 {
            Box::new(idx.iter())
        } else {
            Box::new(idx.iter().rev())
        };
        for &i in order {
            while hull.len() >= start + 2
                && cross(pts[hull[hull.len() - 2]], pts[hull[hull.len() - 1]], pts[i]) <= 0.0
            {
                hull.pop();
            }
            hull.push(i);
        }
        hull.pop();
    }
    hull
}

/// Greatest great-circle distance between any two registered points.
pub fn max_distance(points: &[GpsPoint]) -> f64 {
    if points.len() < 2 {
        return 0.0;
    }
    let coords: Vec<Coordinate> = if points.len() < EXACT_MAX_DIST_LIMIT {
        points.iter().map(GpsPoint::coord).collect()
    } else {
        let centroid = crate::geo::mean_coordinate(points.iter().map(GpsPoint::coord)).expect("non-empty");
        let proj = LocalProjection::new(centroid);
        let planar: Vec<(f64, f64)> = points.iter().map(|p| proj.project(p.coord())).collect();
        convex_hull(&planar).into_iter().map(|i| points[i].coord()).collect()
    };
    let units: Vec<[f64; 3]> = coords.iter().map(Coordinate::unit_vector).collect();
    chord_to_meters(max_chord(&units))
}

/// Label of one half-hour bin for routine comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinLabel {
    Place(usize),
    Moving,
    /// Stationary but not near any significant place.
    Elsewhere,
}

pub fn label_bins(filled: &[Coordinate; BINS_PER_DAY], places: &Places, config: &PlaceConfig) -> [BinLabel; BINS_PER_DAY] {
    let d = displacements(filled);
    std::array::from_fn(|b| {
        if b > 0 && d[b - 1] > config.d_thresh_m {
            BinLabel::Moving
        } else {
            places
                .nearest_within(filled[b], config.d_thresh_m)
                .map_or(BinLabel::Elsewhere, BinLabel::Place)
        }
    })
}

/// Mean over bins of the share of other days with the same label.
pub fn routine_index(day: usize, all_days: &[[BinLabel; BINS_PER_DAY]]) -> Result<f64> {
    let d = all_days.len();
    if d < 2 {
        return Err(Error::SingleDay);
    }
    let target = &all_days[day];
    let agree: usize = (0..BINS_PER_DAY)
        .map(|b| {
            all_days
                .iter()
                .enumerate()
                .filter(|&(j, other)| j != day && other[b] == target[b])
                .count()
        })
        .sum();
    Ok(agree as f64 / ((d - 1) * BINS_PER_DAY) as f64)
}

/// Per-cluster dwell seconds falling within `[from_ms, to_ms)`.
pub fn dwell_in_window(places: &Places, from_ms: i64, to_ms: i64) -> BTreeMap<usize, f64> {
    let mut out = BTreeMap::new();
    for s in &places.stays {
        if s.end_ms < from_ms || s.start_ms >= to_ms {
            continue;
        }
        let o = s.overlap_s(from_ms, to_ms);
        if o > 0.0 {
            *out.entry(s.cluster_id).or_insert(0.0) += o;
        }
    }
    out
}

/// Sadness levels keyed by (participant, date). Level 4 is severe.
pub type SurveyTable = HashMap<(String, NaiveDate), u8>;

/// Sadness strictly above "quite a bit" (level 3).
pub const SEVERE_ABOVE: u8 = 3;

pub fn read_survey_csv<R: Read>(input: R) -> Result<SurveyTable> {
    let mut r = csv::Reader::from_reader(input);
    let headers = r.headers()?.clone();
    let expected = ["participant_id", "local_date", "sadness_level"];
    if headers.iter().map(str::trim).ne(expected.iter().copied()) {
        return Err(Error::MalformedHeader(headers.iter().collect::<Vec<_>>().join(",")));
    }
    let mut out = SurveyTable::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let bad = |reason: &str| Error::MalformedRow {
            line: i + 2,
            reason: reason.into(),
        };
        let date = rec[1].trim().parse::<NaiveDate>().map_err(|_| bad("bad date"))?;
        let level = rec[2].trim().parse::<u8>().map_err(|_| bad("bad sadness level"))?;
        if level > 4 {
            return Err(bad("sadness level outside 0-4"));
        }
        out.insert((rec[0].trim().to_string(), date), level);
    }
    Ok(out)
}

/// Significant places and home for one participant's full trace.
#[derive(Debug, Clone)]
pub struct ParticipantPlaces {
    pub places: Places,
    pub home: Option<Coordinate>,
}

pub fn participant_places(trace: &Trace, config: &PlaceConfig) -> ParticipantPlaces {
    let places = cluster_places(&trace.points, trace.timezone_offset_minutes, config);
    let home = detect_home(&places.clusters).map(|c| c.centroid);
    ParticipantPlaces { places, home }
}

/// All retained days' phenotypes for one participant.
pub fn compute_daily_phenotypes(
    trace: &Trace,
    survey: Option<&SurveyTable>,
    config: &PhenotypeConfig,
) -> Vec<DailyPhenotypes> {
    let pp = participant_places(trace, &config.places);
    let days: Vec<DayTrace> = segment_days(trace)
        .into_iter()
        .filter(|d| d.coverage_fraction >= config.min_coverage)
        .collect();

    let filled: Vec<[Coordinate; BINS_PER_DAY]> = days
        .iter()
        .map(|d| impute_bins(&bin_day(d)).expect("retained days have points").filled())
        .collect();
    let labels: Vec<[BinLabel; BINS_PER_DAY]> =
        filled.iter().map(|f| label_bins(f, &pp.places, &config.places)).collect();

    days.iter()
        .enumerate()
        .map(|(i, day)| {
            let start = day.start_utc_ms();
            let dwell = dwell_in_window(&pp.places, start, start + MS_PER_DAY);
            let shares: Vec<f64> = dwell.values().copied().collect();
            DailyPhenotypes {
                participant_id: day.participant_id.clone(),
                local_date: day.local_date,
                group: day.group,
                loc_var: location_variance(&day.points, config.loc_var_mode).ok(),
                num_pls: dwell.len(),
                ent_pls: place_entropy(&shares),
                perc_home: pp
                    .home
                    .map(|h| percent_home(&filled[i], h, config.places.d_thresh_m)),
                total_dist: total_distance(&day.points),
                max_dist: max_distance(&day.points),
                routine_idx: routine_index(i, &labels).ok(),
                severe_sad: survey.and_then(|s| {
                    s.get(&(day.participant_id.clone(), day.local_date))
                        .map(|&lvl| lvl > SEVERE_ABOVE)
                }),
            }
        })
        .collect()
}

pub fn write_phenotypes_csv<W: Write>(rows: &[DailyPhenotypes], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["participant_id", "local_date", "group"];
    header.extend(FEATURE_NAMES);
    header.push("severe_sad");
    w.write_record(&header)?;
    for r in rows {
        w.write_record([
            r.participant_id.clone(),
            r.local_date.to_string(),
            r.group.to_string(),
            fmt_opt(r.loc_var, 3),
            r.num_pls.to_string(),
            format!("{:.6}", r.ent_pls),
            fmt_opt(r.perc_home, 6),
            format!("{:.3}", r.total_dist),
            format!("{:.3}", r.max_dist),
            fmt_opt(r.routine_idx, 6),
            r.severe_sad.map(|b| u8::from(b).to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_phenotypes_csv<R: Read>(input: R) -> Result<Vec<DailyPhenotypes>> {
    let mut r = csv::Reader::from_reader(input);
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let bad = |reason: &str| Error::MalformedRow {
            line: i + 2,
            reason: reason.into(),
        };
        if rec.len() != 11 {
            return Err(bad("expected 11 columns"));
        }
        let opt = |s: &str| -> Result<Option<f64>> {
            if s.is_empty() {
                Ok(None)
            } else {
                s.parse().map(Some).map_err(|_| bad("bad number"))
            }
        };
        let req = |s: &str| -> Result<f64> { s.parse().map_err(|_| bad("bad number")) };
        out.push(DailyPhenotypes {
            participant_id: rec[0].to_string(),
            local_date: rec[1].parse().map_err(|_| bad("bad date"))?,
            group: rec[2].parse().map_err(|_| bad("bad group"))?,
            loc_var: opt(&rec[3])?,
            num_pls: rec[4].parse().map_err(|_| bad("bad count"))?,
            ent_pls: req(&rec[5])?,
            perc_home: opt(&rec[6])?,
            total_dist: req(&rec[7])?,
            max_dist: req(&rec[8])?,
            routine_idx: opt(&rec[9])?,
            severe_sad: match &rec[10] {
                "" => None,
                "1" => Some(true),
                "0" => Some(false),
                _ => return Err(bad("bad label")),
            },
        });
    }
    Ok(out)
}
