//! Synthetic cohorts with known ground truth.
//!
//! Each participant gets a home on a campus grid near 30°N and lives one of two
//! scenarios. `PreLike` days leave home in the morning, visit one to three campus
//! places with fast transits and return in the evening. `PostLike` days stay home
//! except for a slow midday walk, sometimes with a stop at a nearby errand place.
//! Positions are sampled under a GPS duty cycle with Gaussian noise and dropped
//! windows, and every day carries a sadness label drawn from a known logistic
//! model over the true daily place count and home fraction.

use std::fs;
use std::io::Write;
use std::path::Path;

use chrono::{Days, NaiveDate};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::Coordinate;
use crate::ingest::{date_to_epoch_day, GpsPoint, Group, Trace};
use crate::seed::split_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scenario {
    #[serde(rename = "PRE_LIKE")]
    PreLike,
    #[serde(rename = "POST_LIKE")]
    PostLike,
}

impl Scenario {
    pub fn group(self) -> Group {
        match self {
            Scenario::PreLike => Group::Pre,
            Scenario::PostLike => Group::Post,
        }
    }
}

/// A campus location, in meters east and north of the grid origin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedPlace {
    pub name: String,
    pub east_m: f64,
    pub north_m: f64,
}

/// Minutes after local midnight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub start_min: f64,
    pub end_min: f64,
}

impl Window {
    fn contains(&self, m: f64) -> bool {
        (self.start_min..=self.end_min).contains(&m)
    }
}

/// Known logistic model generating the severe-sadness label.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SadnessModel {
    pub intercept: f64,
    pub coef_num_places: f64,
    pub coef_home_fraction: f64,
    /// Standard deviation of the per-participant random intercept.
    pub participant_sd: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DutyCycle {
    pub on_s: f64,
    pub period_s: f64,
    pub fix_interval_s: f64,
    /// Probability that a whole on-window records nothing.
    pub dropout: f64,
    /// Ignore the cycle and record a fix every `fix_interval_s`.
    pub always_on: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleSpec {
    pub scenario: Scenario,
    pub id_prefix: String,
    pub start_date: NaiveDate,
    pub timezone_offset_minutes: i32,
    pub origin: Coordinate,
    pub campus: Vec<NamedPlace>,
    /// Homes are drawn uniformly within this distance of the origin.
    pub home_radius_m: f64,
    /// Distance range from home to each of the two errand places.
    pub errand_distance_m: [f64; 2],
    /// Places per day including home, inclusive range.
    pub places_per_day: [usize; 2],
    /// `PreLike`: leaving home. `PostLike`: start of the midday walk.
    pub departure: Window,
    /// `PreLike` only: arriving back home.
    pub return_home: Window,
    /// Day-to-day spread around the participant's habitual times.
    pub jitter_sd_min: f64,
    pub transit_speed_mps: f64,
    pub walk_speed_mps: f64,
    /// Side length range of the square walking loop.
    pub walk_loop_side_m: [f64; 2],
    /// Stay length range at an errand place, minutes.
    pub errand_stay_min: [f64; 2],
    /// Places must be at least this far apart (twice the clustering radius).
    pub min_separation_m: f64,
    pub noise_sd_m: f64,
    pub duty_cycle: DutyCycle,
    pub sadness: SadnessModel,
}

fn campus_grid() -> Vec<NamedPlace> {
    [
        ("library", -1500.0, 1800.0),
        ("lab", 1800.0, 1500.0),
        ("lecture_hall", 0.0, 2600.0),
        ("gym", -2400.0, -900.0),
        ("cafe", 2500.0, -600.0),
        ("office", 600.0, -2600.0),
    ]
    .into_iter()
    .map(|(name, east_m, north_m)| NamedPlace {
        name: name.into(),
        east_m,
        north_m,
    })
    .collect()
}

impl ScheduleSpec {
    pub fn pre_like() -> Self {
        ScheduleSpec {
            scenario: Scenario::PreLike,
            id_prefix: "pre".into(),
            start_date: NaiveDate::from_ymd_opt(2019, 9, 2).expect("valid date"),
            timezone_offset_minutes: -300,
            origin: Coordinate::new(30.2849, -97.7341),
            campus: campus_grid(),
            home_radius_m: 1200.0,
            errand_distance_m: [500.0, 1000.0],
            places_per_day: [2, 4],
            departure: Window { start_min: 480.0, end_min: 600.0 },
            return_home: Window { start_min: 1140.0, end_min: 1260.0 },
            jitter_sd_min: 20.0,
            transit_speed_mps: 8.0,
            walk_speed_mps: 1.2,
            walk_loop_side_m: [600.0, 1000.0],
            errand_stay_min: [30.0, 120.0],
            min_separation_m: 400.0,
            noise_sd_m: 5.0,
            duty_cycle: DutyCycle {
                on_s: 60.0,
                period_s: 600.0,
                fix_interval_s: 15.0,
                dropout: 0.1,
                always_on: false,
            },
            sadness: SadnessModel {
                intercept: -3.0,
                coef_num_places: -1.0,
                coef_home_fraction: 8.0,
                participant_sd: 1.0,
            },
        }
    }

    pub fn post_like() -> Self {
        ScheduleSpec {
            scenario: Scenario::PostLike,
            id_prefix: "post".into(),
            start_date: NaiveDate::from_ymd_opt(2020, 4, 6).expect("valid date"),
            places_per_day: [1, 2],
            departure: Window { start_min: 600.0, end_min: 960.0 },
            sadness: SadnessModel {
                intercept: -7.5,
                ..ScheduleSpec::pre_like().sadness
            },
            ..ScheduleSpec::pre_like()
        }
    }

    pub fn for_scenario(scenario: Scenario) -> Self {
        match scenario {
            Scenario::PreLike => Self::pre_like(),
            Scenario::PostLike => Self::post_like(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidSpec(msg.to_string()));
        let [lo, hi] = self.places_per_day;
        if lo < 1 || lo > hi {
            return bad("places_per_day must satisfy 1 <= min <= max");
        }
        if self.scenario == Scenario::PreLike && (lo < 2 || hi - 1 > self.campus.len()) {
            return bad("PRE_LIKE needs 2 <= places_per_day and enough campus places");
        }
        if self.scenario == Scenario::PostLike && hi > 2 {
            return bad("POST_LIKE visits at most one errand place per day");
        }
        for w in [self.departure, self.return_home] {
            if !(0.0..=1440.0).contains(&w.start_min) || !(w.start_min..=1440.0).contains(&w.end_min) {
                return bad("windows must lie within the day");
            }
        }
        if self.scenario == Scenario::PreLike && self.departure.end_min + 60.0 > self.return_home.start_min {
            return bad("departure window must end at least an hour before the return window");
        }
        let positive = [
            self.transit_speed_mps,
            self.walk_speed_mps,
            self.duty_cycle.on_s,
            self.duty_cycle.period_s,
            self.duty_cycle.fix_interval_s,
            self.home_radius_m,
        ];
        if positive.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return bad("speeds, radii and duty-cycle lengths must be positive");
        }
        if self.duty_cycle.on_s > self.duty_cycle.period_s {
            return bad("duty-cycle on time exceeds its period");
        }
        if !(0.0..1.0).contains(&self.duty_cycle.dropout) || !(self.noise_sd_m >= 0.0) || !(self.jitter_sd_min >= 0.0) {
            return bad("dropout must be in [0, 1) and noise and jitter non-negative");
        }
        let ranges = [self.errand_distance_m, self.walk_loop_side_m, self.errand_stay_min];
        if ranges.iter().any(|[a, b]| !(a.is_finite() && *a > 0.0 && a <= b)) {
            return bad("ranges must be positive and ordered");
        }
        if self.errand_distance_m[0] < self.min_separation_m {
            return bad("errand places must be at least min_separation_m from home");
        }
        for (i, a) in self.campus.iter().enumerate() {
            for b in &self.campus[i + 1..] {
                if (a.east_m - b.east_m).hypot(a.north_m - b.north_m) < self.min_separation_m {
                    return bad(&format!("campus places `{}` and `{}` are too close", a.name, b.name));
                }
            }
        }
        Ok(())
    }
}

/// Per-day truth for one participant.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroundTruthDay {
    pub participant_id: String,
    pub group: Group,
    pub local_date: NaiveDate,
    pub home_lat: f64,
    pub home_lon: f64,
    /// Distinct places (home included) with a stay that day.
    pub num_places: usize,
    /// Fraction of the local day spent at home.
    pub home_fraction: f64,
    /// Visit order, `;`-separated.
    pub places_visited: String,
    pub participant_effect: f64,
    /// True linear predictor of the sadness model.
    pub eta: f64,
    pub severe_sad: bool,
    pub sadness_level: u8,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticParticipant {
    pub trace: Trace,
    pub home: Coordinate,
    pub days: Vec<GroundTruthDay>,
    pub sadness: SadnessModel,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Xy {
    e: f64,
    n: f64,
}

impl Xy {
    fn dist(self, o: Xy) -> f64 {
        (self.e - o.e).hypot(self.n - o.n)
    }
}

#[derive(Debug, Clone)]
enum Segment {
    Stay { place: usize, until: f64 },
    Move { path: Vec<Xy>, cumulative: Vec<f64>, speed: f64, start: f64, until: f64 },
}

impl Segment {
    fn until(&self) -> f64 {
        match self {
            Segment::Stay { until, .. } | Segment::Move { until, .. } => *until,
        }
    }
}

/// Continuous timeline of one participant, in local seconds since the first midnight.
struct Timeline {
    places: Vec<Xy>,
    names: Vec<String>,
    segments: Vec<Segment>,
    now: f64,
    at: usize,
}

impl Timeline {
    fn stay_until(&mut self, t: f64) {
        let t = t.max(self.now);
        if let Some(Segment::Stay { place, until }) = self.segments.last_mut() {
            if *place == self.at {
                *until = t;
                self.now = t;
                return;
            }
        }
        self.segments.push(Segment::Stay { place: self.at, until: t });
        self.now = t;
    }

    fn travel(&mut self, waypoints: &[Xy], to: usize, speed: f64) {
        let mut path = vec![self.places[self.at]];
        path.extend_from_slice(waypoints);
        path.push(self.places[to]);
        let mut cumulative = vec![0.0];
        for w in path.windows(2) {
            cumulative.push(cumulative.last().copied().unwrap_or(0.0) + w[0].dist(w[1]));
        }
        let length = cumulative.last().copied().unwrap_or(0.0);
        let start = self.now;
        self.now += length / speed;
        self.segments.push(Segment::Move { path, cumulative, speed, start, until: self.now });
        self.at = to;
    }

    fn position(&self, t: f64, hint: &mut usize) -> Xy {
        while *hint + 1 < self.segments.len() && self.segments[*hint].until() <= t {
            *hint += 1;
        }
        match &self.segments[*hint] {
            Segment::Stay { place, .. } => self.places[*place],
            Segment::Move { path, cumulative, speed, start, .. } => {
                let s = (t - start) * speed;
                let k = cumulative.partition_point(|&c| c <= s).clamp(1, path.len() - 1);
                let (a, b) = (path[k - 1], path[k]);
                let len = cumulative[k] - cumulative[k - 1];
                let f = if len > 0.0 { ((s - cumulative[k - 1]) / len).clamp(0.0, 1.0) } else { 1.0 };
                Xy { e: a.e + f * (b.e - a.e), n: a.n + f * (b.n - a.n) }
            }
        }
    }

    /// Seconds at each place within `[from, to)`, as (place, seconds) in order of arrival.
    fn dwell(&self, from: f64, to: f64) -> Vec<(usize, f64)> {
        let mut out: Vec<(usize, f64)> = Vec::new();
        let mut begin: f64 = 0.0;
        for seg in &self.segments {
            let end = seg.until();
            if let Segment::Stay { place, .. } = seg {
                let overlap = end.min(to) - begin.max(from);
                if overlap > 0.0 {
                    match out.iter_mut().find(|(p, _)| p == place) {
                        Some((_, s)) => *s += overlap,
                        None => out.push((*place, overlap)),
                    }
                }
            }
            begin = end;
        }
        out
    }
}

const DAY_S: f64 = 86_400.0;
/// Stays shorter than this are not counted as visits in the ground truth.
const MIN_VISIT_S: f64 = 600.0;

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

fn uniform(rng: &mut ChaCha8Rng, [a, b]: [f64; 2]) -> f64 {
    if a == b {
        a
    } else {
        rng.random_range(a..b)
    }
}

/// Habitual minute plus daily jitter, kept inside the window.
fn jittered(rng: &mut ChaCha8Rng, habit: f64, sd: f64, w: Window) -> f64 {
    let t = if sd > 0.0 {
        habit + Normal::new(0.0, sd).expect("finite sd").sample(rng)
    } else {
        habit
    };
    if w.contains(t) {
        t
    } else {
        t.clamp(w.start_min, w.end_min)
    }
}

fn random_point_at(rng: &mut ChaCha8Rng, center: Xy, [lo, hi]: [f64; 2]) -> Xy {
    let r = uniform(rng, [lo, hi]);
    let theta = rng.random_range(0.0..std::f64::consts::TAU);
    Xy { e: center.e + r * theta.cos(), n: center.n + r * theta.sin() }
}

fn far_enough(p: Xy, others: &[Xy], min: f64) -> bool {
    others.iter().all(|o| p.dist(*o) >= min)
}

/// Generates one participant. Deterministic in `(spec, pid, n_days, seed)`.
pub fn generate_participant(spec: &ScheduleSpec, pid: &str, n_days: usize, seed: u64) -> Result<SyntheticParticipant> {
    spec.validate()?;
    if n_days == 0 {
        return Err(Error::InvalidSpec("n_days must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let campus: Vec<Xy> = spec.campus.iter().map(|p| Xy { e: p.east_m, n: p.north_m }).collect();

    // home, then two errand places, all clear of each other and the campus
    let origin = Xy { e: 0.0, n: 0.0 };
    let mut home = None;
    for _ in 0..10_000 {
        let r = spec.home_radius_m * rng.random::<f64>().sqrt();
        let c = random_point_at(&mut rng, origin, [r, r]);
        if far_enough(c, &campus, spec.min_separation_m) {
            home = Some(c);
            break;
        }
    }
    let home = home.ok_or_else(|| Error::InvalidSpec("no home location clears the campus places".into()))?;
    let mut taken = campus.clone();
    taken.push(home);
    let mut errands = Vec::new();
    for _ in 0..10_000 {
        if errands.len() == 2 {
            break;
        }
        let c = random_point_at(&mut rng, home, spec.errand_distance_m);
        if far_enough(c, &taken, spec.min_separation_m) {
            errands.push(c);
            taken.push(c);
        }
    }
    if errands.len() < 2 {
        return Err(Error::InvalidSpec("no errand locations clear the other places".into()));
    }

    let mut places = vec![home];
    let mut names = vec!["home".to_string()];
    places.extend(&campus);
    names.extend(spec.campus.iter().map(|p| p.name.clone()));
    places.extend(&errands);
    names.extend(["errand_1".to_string(), "errand_2".to_string()]);
    let errand_idx = [places.len() - 2, places.len() - 1];
    let campus_idx: Vec<usize> = (1..=campus.len()).collect();

    let habit_depart = uniform(&mut rng, [spec.departure.start_min, spec.departure.end_min]);
    let habit_return = uniform(&mut rng, [spec.return_home.start_min, spec.return_home.end_min]);
    let participant_effect = if spec.sadness.participant_sd > 0.0 {
        Normal::new(0.0, spec.sadness.participant_sd).expect("finite sd").sample(&mut rng)
    } else {
        0.0
    };

    let mut tl = Timeline { places, names, segments: Vec::new(), now: 0.0, at: 0 };
    for day in 0..n_days {
        let base = day as f64 * DAY_S;
        let k = rng.random_range(spec.places_per_day[0]..=spec.places_per_day[1]);
        match spec.scenario {
            Scenario::PreLike => {
                let depart = base + 60.0 * jittered(&mut rng, habit_depart, spec.jitter_sd_min, spec.departure);
                let back = base + 60.0 * jittered(&mut rng, habit_return, spec.jitter_sd_min, spec.return_home);
                let visits: Vec<usize> = campus_idx.choose_multiple(&mut rng, k - 1).copied().collect();
                tl.stay_until(depart);
                // random hand-over times between campus places, each block at least 30 minutes
                let mut leave: Vec<f64> = (0..k - 2).map(|_| rng.random_range(depart..back)).collect();
                leave.sort_by(f64::total_cmp);
                leave.push(back);
                for (&v, &t) in visits.iter().zip(&leave) {
                    tl.travel(&[], v, spec.transit_speed_mps);
                    tl.stay_until(t.max(tl.now + 1800.0));
                }
                tl.travel(&[], 0, spec.transit_speed_mps);
            }
            Scenario::PostLike => {
                let start = base + 60.0 * uniform(&mut rng, [spec.departure.start_min, spec.departure.end_min]);
                tl.stay_until(start);
                let side = uniform(&mut rng, spec.walk_loop_side_m);
                let theta = rng.random_range(0.0..std::f64::consts::TAU);
                let (c, s) = (theta.cos(), theta.sin());
                let h = tl.places[0];
                let corners: Vec<Xy> = [(1.0, 0.0), (1.0, 1.0), (0.0, 1.0)]
                    .iter()
                    .map(|(a, b)| Xy { e: h.e + side * (a * c - b * s), n: h.n + side * (a * s + b * c) })
                    .collect();
                tl.travel(&corners, 0, spec.walk_speed_mps);
                if k == 2 {
                    let e = *errand_idx.choose(&mut rng).expect("two errands");
                    tl.travel(&[], e, spec.walk_speed_mps);
                    let stay = 60.0 * uniform(&mut rng, spec.errand_stay_min);
                    tl.stay_until(tl.now + stay);
                    tl.travel(&[], 0, spec.walk_speed_mps);
                }
            }
        }
    }
    tl.stay_until(n_days as f64 * DAY_S);

    // sample fixes
    let dc = spec.duty_cycle;
    let noise = Normal::new(0.0, spec.noise_sd_m.max(f64::MIN_POSITIVE)).expect("finite sd");
    let origin_coord = spec.origin;
    let epoch_s = date_to_epoch_day(spec.start_date) * 86_400 - i64::from(spec.timezone_offset_minutes) * 60;
    let mut points = Vec::with_capacity((n_days as f64 * DAY_S / dc.period_s * dc.on_s / dc.fix_interval_s) as usize + 1);
    let mut hint = 0;
    let mut push = |t: f64, rng: &mut ChaCha8Rng, points: &mut Vec<GpsPoint>| {
        let p = tl.position(t, &mut hint);
        let (de, dn) = if spec.noise_sd_m > 0.0 { (noise.sample(rng), noise.sample(rng)) } else { (0.0, 0.0) };
        let c = origin_coord.offset_m(p.e + de, p.n + dn);
        let acc: f64 = (spec.noise_sd_m * rng.random_range(1.0..2.0)).max(3.0);
        points.push(GpsPoint {
            timestamp_ms: (epoch_s as f64 * 1000.0 + (t * 1000.0).round()) as i64,
            latitude: c.lat,
            longitude: c.lon,
            accuracy_m: Some((acc * 10.0).round() / 10.0),
        });
    };
    let end = n_days as f64 * DAY_S;
    if dc.always_on {
        let mut t = 0.0;
        while t < end {
            push(t, &mut rng, &mut points);
            t += dc.fix_interval_s;
        }
    } else {
        let mut w = rng.random_range(0.0..dc.period_s);
        while w < end {
            if rng.random::<f64>() >= dc.dropout {
                let mut t = w;
                while t < w + dc.on_s && t < end {
                    push(t, &mut rng, &mut points);
                    t += dc.fix_interval_s;
                }
            }
            w += dc.period_s;
        }
    }

    let group = spec.scenario.group();
    let home_coord = origin_coord.offset_m(home.e, home.n);
    let days = (0..n_days)
        .map(|day| {
            let base = day as f64 * DAY_S;
            let dwell = tl.dwell(base, base + DAY_S);
            let visited: Vec<&(usize, f64)> = dwell.iter().filter(|(_, s)| *s >= MIN_VISIT_S).collect();
            let home_fraction = dwell.iter().find(|(p, _)| *p == 0).map_or(0.0, |(_, s)| s / DAY_S);
            let num_places = visited.len();
            let m = spec.sadness;
            let eta = m.intercept
                + participant_effect
                + m.coef_num_places * num_places as f64
                + m.coef_home_fraction * home_fraction;
            let severe = rng.random::<f64>() < sigmoid(eta);
            let level = if severe { 4 } else { rng.random_range(0..=3) };
            GroundTruthDay {
                participant_id: pid.to_string(),
                group,
                local_date: spec.start_date + Days::new(day as u64),
                home_lat: home_coord.lat,
                home_lon: home_coord.lon,
                num_places,
                home_fraction,
                places_visited: visited.iter().map(|(p, _)| tl.names[*p].as_str()).collect::<Vec<_>>().join(";"),
                participant_effect,
                eta,
                severe_sad: severe,
                sadness_level: level,
            }
        })
        .collect();

    Ok(SyntheticParticipant {
        trace: Trace::new(pid, group, points, spec.timezone_offset_minutes),
        home: home_coord,
        days,
        sadness: spec.sadness,
    })
}

/// Participant `i` is generated from `split_seed(seed, i)` and named
/// `{id_prefix}{i+1:03}`.
pub fn generate_cohort(spec: &ScheduleSpec, n_participants: usize, n_days: usize, seed: u64) -> Result<Vec<SyntheticParticipant>> {
    spec.validate()?;
    (0..n_participants)
        .into_par_iter()
        .map(|i| {
            let pid = format!("{}{:03}", spec.id_prefix, i + 1);
            generate_participant(spec, &pid, n_days, split_seed(seed, i as u64))
        })
        .collect()
}

/// One scenario arm of a study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Arm {
    pub spec: ScheduleSpec,
    pub n_participants: usize,
    pub n_days: usize,
}

/// The JSON document describing a whole synthetic study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudySpec {
    pub seed: u64,
    pub arms: Vec<Arm>,
}

impl StudySpec {
    /// PRE_LIKE and POST_LIKE arms of equal size.
    pub fn two_arm(n_per_arm: usize, n_days: usize, seed: u64) -> Self {
        StudySpec {
            seed,
            arms: [ScheduleSpec::pre_like(), ScheduleSpec::post_like()]
                .into_iter()
                .map(|spec| Arm { spec, n_participants: n_per_arm, n_days })
                .collect(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let s: StudySpec = serde_json::from_str(text).map_err(|e| Error::InvalidSpec(e.to_string()))?;
        let mut prefixes: Vec<&str> = s.arms.iter().map(|a| a.spec.id_prefix.as_str()).collect();
        prefixes.sort();
        prefixes.dedup();
        if prefixes.len() != s.arms.len() {
            return Err(Error::InvalidSpec("arms need distinct id prefixes".into()));
        }
        Ok(s)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("spec serializes")
    }

    /// Arm `a` uses seed `split_seed(seed, a)`.
    pub fn generate(&self) -> Result<Vec<SyntheticParticipant>> {
        let mut out = Vec::new();
        for (a, arm) in self.arms.iter().enumerate() {
            out.extend(generate_cohort(&arm.spec, arm.n_participants, arm.n_days, split_seed(self.seed, a as u64))?);
        }
        Ok(out)
    }
}

pub fn write_ground_truth_csv<W: Write>(participants: &[SyntheticParticipant], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "participant_id",
        "group",
        "local_date",
        "home_lat",
        "home_lon",
        "num_places",
        "home_fraction",
        "places_visited",
        "beta0",
        "beta_num_places",
        "beta_home_fraction",
        "participant_effect",
        "eta",
        "severe_sad",
        "sadness_level",
    ])?;
    for p in participants {
        for d in &p.days {
            w.write_record([
                d.participant_id.clone(),
                d.group.to_string(),
                d.local_date.to_string(),
                format!("{:.7}", d.home_lat),
                format!("{:.7}", d.home_lon),
                d.num_places.to_string(),
                format!("{:.6}", d.home_fraction),
                d.places_visited.clone(),
                format!("{}", p.sadness.intercept),
                format!("{}", p.sadness.coef_num_places),
                format!("{}", p.sadness.coef_home_fraction),
                format!("{:.6}", d.participant_effect),
                format!("{:.6}", d.eta),
                u8::from(d.severe_sad).to_string(),
                d.sadness_level.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_survey_csv<W: Write>(participants: &[SyntheticParticipant], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["participant_id", "local_date", "sadness_level"])?;
    for p in participants {
        for d in &p.days {
            w.write_record([d.participant_id.clone(), d.local_date.to_string(), d.sadness_level.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_roster_csv<W: Write>(participants: &[SyntheticParticipant], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["participant_id", "group", "timezone_offset_minutes"])?;
    for p in participants {
        w.write_record([
            p.trace.participant_id.clone(),
            p.trace.group().to_string(),
            p.trace.timezone_offset_minutes.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `traces/<pid>.csv`, `roster.csv`, `survey.csv`, `ground_truth.csv`
/// and `schedule_spec.json` under `dir`.
pub fn write_study(dir: &Path, spec: &StudySpec, participants: &[SyntheticParticipant]) -> Result<()> {
    let traces = dir.join("traces");
    fs::create_dir_all(&traces)?;
    for p in participants {
        let f = fs::File::create(traces.join(format!("{}.csv", p.trace.participant_id)))?;
        p.trace.write_canonical_csv(std::io::BufWriter::new(f))?;
    }
    write_roster_csv(participants, fs::File::create(dir.join("roster.csv"))?)?;
    write_survey_csv(participants, fs::File::create(dir.join("survey.csv"))?)?;
    write_ground_truth_csv(participants, fs::File::create(dir.join("ground_truth.csv"))?)?;
    fs::write(dir.join("schedule_spec.json"), spec.to_json() + "\n")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::haversine;
    use crate::phenotypes::{compute_daily_phenotypes, participant_places, PhenotypeConfig};

    #[test]
    fn deterministic_for_seed() {
        let spec = ScheduleSpec::pre_like();
        let a = generate_cohort(&spec, 3, 4, 11).unwrap();
        let b = generate_cohort(&spec, 3, 4, 11).unwrap();
        assert_eq!(a, b);
        let c = generate_cohort(&spec, 3, 4, 12).unwrap();
        assert_ne!(a[0].trace.points, c[0].trace.points);
    }

    #[test]
    fn duty_cycle_point_count() {
        let p = generate_participant(&ScheduleSpec::post_like(), "x", 10, 3).unwrap();
        let per_day = p.trace.points.len() as f64 / 10.0;
        // 144 windows of 4 fixes, 10% dropped
        assert!((per_day - 518.4).abs() < 30.0, "{per_day}");
    }

    #[test]
    fn places_per_day_match_spec() {
        let pre = generate_participant(&ScheduleSpec::pre_like(), "p", 200, 5).unwrap();
        let mean = pre.days.iter().map(|d| d.num_places as f64).sum::<f64>() / 200.0;
        assert!((mean - 3.0).abs() < 0.2, "{mean}");
        assert!(pre.days.iter().all(|d| (2..=4).contains(&d.num_places)));
        let post = generate_participant(&ScheduleSpec::post_like(), "q", 200, 5).unwrap();
        assert!(post.days.iter().all(|d| (1..=2).contains(&d.num_places)));
        let home_pre: f64 = pre.days.iter().map(|d| d.home_fraction).sum::<f64>() / 200.0;
        let home_post: f64 = post.days.iter().map(|d| d.home_fraction).sum::<f64>() / 200.0;
        assert!(home_post > home_pre + 0.2);
    }

    #[test]
    fn exact_recovery_without_noise() {
        for spec in [ScheduleSpec::pre_like(), ScheduleSpec::post_like()] {
            let spec = ScheduleSpec {
                noise_sd_m: 0.0,
                duty_cycle: DutyCycle { always_on: true, dropout: 0.0, ..spec.duty_cycle },
                ..spec
            };
            let p = generate_participant(&spec, "z", 20, 9).unwrap();
            let rows = compute_daily_phenotypes(&p.trace, None, &PhenotypeConfig::default());
            assert_eq!(rows.len(), 20);
            for (r, d) in rows.iter().zip(&p.days) {
                assert_eq!(r.local_date, d.local_date);
                assert_eq!(r.num_pls, d.num_places, "{} {}", d.local_date, d.places_visited);
            }
        }
    }

    #[test]
    fn home_recovered_with_noise() {
        let mut hits = 0;
        let mut total = 0;
        for spec in [ScheduleSpec::pre_like(), ScheduleSpec::post_like()] {
            let spec = ScheduleSpec { noise_sd_m: 10.0, ..spec };
            for p in generate_cohort(&spec, 10, 14, 21).unwrap() {
                let pp = participant_places(&p.trace, &PhenotypeConfig::default().places);
                total += 1;
                if pp.home.is_some_and(|h| haversine(h, p.home) < 50.0) {
                    hits += 1;
                }
            }
        }
        assert!(hits as f64 >= 0.95 * total as f64, "{hits}/{total}");
    }

    #[test]
    fn spec_json_round_trip() {
        let s = StudySpec::two_arm(2, 3, 1);
        assert_eq!(StudySpec::from_json(&s.to_json()).unwrap(), s);
        assert!(matches!(StudySpec::from_json("{}"), Err(Error::InvalidSpec(_))));
    }

    #[test]
    fn invalid_specs_rejected() {
        let mut s = ScheduleSpec::pre_like();
        s.campus[1].east_m = s.campus[0].east_m + 10.0;
        s.campus[1].north_m = s.campus[0].north_m;
        assert!(matches!(s.validate(), Err(Error::InvalidSpec(_))));
        let s = ScheduleSpec { places_per_day: [3, 2], ..ScheduleSpec::pre_like() };
        assert!(s.validate().is_err());
        let s = ScheduleSpec {
            duty_cycle: DutyCycle { on_s: 700.0, ..ScheduleSpec::pre_like().duty_cycle },
            ..ScheduleSpec::pre_like()
        };
        assert!(generate_cohort(&s, 1, 1, 0).is_err());
    }

    #[test]
    fn timestamps_start_at_local_midnight() {
        let p = generate_participant(&ScheduleSpec::pre_like(), "t", 2, 1).unwrap();
        let first = p.trace.points[0].timestamp_ms;
        let local = first + i64::from(p.trace.timezone_offset_minutes) * 60_000;
        assert_eq!(local.div_euclid(86_400_000), date_to_epoch_day(ScheduleSpec::pre_like().start_date));
    }
}
