//! Time-ordered stay detection and significant-place clustering.
//!
//! Points are scanned in time order while a running centroid is maintained. A
//! point farther than `d_thresh` from the centroid closes the candidate, which
//! becomes a stay when it spans at least `t_thresh`. A silence longer than
//! `max_gap` also closes the candidate, so dwell is never inferred across
//! long stretches without fixes. Stays within
//! `merge_distance` of an existing place are merged into it.

use serde::{Deserialize, Serialize};

use crate::geo::{haversine, Coordinate};
use crate::ingest::{GpsPoint, MS_PER_DAY};

const OVERNIGHT_END_MS: i64 = 6 * 3_600_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlaceConfig {
    pub d_thresh_m: f64,
    pub t_thresh_s: f64,
    pub merge_distance_m: f64,
    pub max_gap_s: f64,
}

impl Default for PlaceConfig {
    fn default() -> Self {
        PlaceConfig {
            d_thresh_m: 200.0,
            t_thresh_s: 600.0,
            merge_distance_m: 200.0,
            max_gap_s: 3600.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlaceCluster {
    pub cluster_id: usize,
    pub centroid: Coordinate,
    pub total_dwell_s: f64,
    /// Dwell with local time of day in [00:00, 06:00).
    pub overnight_dwell_s: f64,
}

/// A contiguous dwell at one place.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Stay {
    pub cluster_id: usize,
    pub start_ms: i64,
    pub end_ms: i64,
    pub centroid: Coordinate,
}

impl Stay {
    pub fn duration_s(&self) -> f64 {
        (self.end_ms - self.start_ms) as f64 / 1000.0
    }

    /// Seconds of this stay inside `[from_ms, to_ms)`.
    pub fn overlap_s(&self, from_ms: i64, to_ms: i64) -> f64 {
        let lo = self.start_ms.max(from_ms);
        let hi = self.end_ms.min(to_ms);
        (hi - lo).max(0) as f64 / 1000.0
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Places {
    pub clusters: Vec<PlaceCluster>,
    pub stays: Vec<Stay>,
}

impl Places {
    /// Index of the cluster nearest to `c` within `radius_m`.
    pub fn nearest_within(&self, c: Coordinate, radius_m: f64) -> Option<usize> {
        self.clusters
            .iter()
            .map(|k| (k.cluster_id, haversine(k.centroid, c)))
            .filter(|&(_, d)| d <= radius_m)
            .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
            .map(|(id, _)| id)
    }
}

struct Candidate {
    first_ms: i64,
    last_ms: i64,
    lat_sum: f64,
    lon_sum: f64,
    n: usize,
}

impl Candidate {
    fn start(p: &GpsPoint) -> Self {
        Candidate {
            first_ms: p.timestamp_ms,
            last_ms: p.timestamp_ms,
            lat_sum: p.latitude,
            lon_sum: p.longitude,
            n: 1,
        }
    }

    fn centroid(&self) -> Coordinate {
        Coordinate::new(self.lat_sum / self.n as f64, self.lon_sum / self.n as f64)
    }

    fn push(&mut self, p: &GpsPoint) {
        self.last_ms = p.timestamp_ms;
        self.lat_sum += p.latitude;
        self.lon_sum += p.longitude;
        self.n += 1;
    }
}

/// Raw stays in time order, before merging into places.
pub fn detect_stays(points: &[GpsPoint], config: &PlaceConfig) -> Vec<(i64, i64, Coordinate)> {
    let mut out = Vec::new();
    let mut iter = points.iter();
    let Some(first) = iter.next() else {
        return out;
    };
    let t_ms = (config.t_thresh_s * 1000.0).round() as i64;
    let gap_ms = (config.max_gap_s * 1000.0).round() as i64;
    let mut cand = Candidate::start(first);
    let close = |c: &Candidate, out: &mut Vec<_>| {
        if c.last_ms - c.first_ms >= t_ms {
            out.push((c.first_ms, c.last_ms, c.centroid()));
        }
    };
    for p in iter {
        if p.timestamp_ms - cand.last_ms <= gap_ms
            && haversine(cand.centroid(), p.coord()) <= config.d_thresh_m
        {
            cand.push(p);
        } else {
            close(&cand, &mut out);
            cand = Candidate::start(p);
        }
    }
    close(&cand, &mut out);
    out
}

fn overnight_seconds(start_ms: i64, end_ms: i64, tz_offset_minutes: i32) -> f64 {
    let off = i64::from(tz_offset_minutes) * 60_000;
    let (ls, le) = (start_ms + off, end_ms + off);
    let mut total = 0;
    let mut day = ls.div_euclid(MS_PER_DAY);
    while day * MS_PER_DAY < le {
        let lo = (day * MS_PER_DAY).max(ls);
        let hi = (day * MS_PER_DAY + OVERNIGHT_END_MS).min(le);
        total += (hi - lo).max(0);
        day += 1;
    }
    total as f64 / 1000.0
}

struct Acc {
    lat_w: f64,
    lon_w: f64,
    weight: f64,
    alive: bool,
}

impl Acc {
    fn centroid(&self) -> Coordinate {
        Coordinate::new(self.lat_w / self.weight, self.lon_w / self.weight)
    }
}

/// Detects stays over a whole trace and merges them into significant places.
pub fn cluster_places(points: &[GpsPoint], tz_offset_minutes: i32, config: &PlaceConfig) -> Places {
    let raw = detect_stays(points, config);
    let mut accs: Vec<Acc> = Vec::new();
    let mut assign: Vec<usize> = Vec::with_capacity(raw.len());

    for &(s, e, c) in &raw {
        // weight by dwell, with a floor so zero-length stays still count
        let w = ((e - s) as f64 / 1000.0).max(1.0);
        let nearest = accs
            .iter()
            .enumerate()
            .filter(|(_, a)| a.alive)
            .map(|(i, a)| (i, haversine(a.centroid(), c)))
            .filter(|&(_, d)| d < config.merge_distance_m)
            .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        let idx = match nearest {
            Some((i, _)) => i,
            None => {
                accs.push(Acc {
                    lat_w: 0.0,
                    lon_w: 0.0,
                    weight: 0.0,
                    alive: true,
                });
                accs.len() - 1
            }
        };
        let a = &mut accs[idx];
        a.lat_w += c.lat * w;
        a.lon_w += c.lon * w;
        a.weight += w;
        assign.push(idx);
    }

    // centroids drift as stays accumulate; merge pairs that end up too close
    let mut parent: Vec<usize> = (0..accs.len()).collect();
    loop {
        let mut merged = false;
        'outer: for i in 0..accs.len() {
            if !accs[i].alive {
                continue;
            }
            for j in (i + 1)..accs.len() {
                if accs[j].alive
                    && haversine(accs[i].centroid(), accs[j].centroid()) < config.merge_distance_m
                {
                    let (lw, low, w) = (accs[j].lat_w, accs[j].lon_w, accs[j].weight);
                    accs[i].lat_w += lw;
                    accs[i].lon_w += low;
                    accs[i].weight += w;
                    accs[j].alive = false;
                    parent[j] = i;
                    merged = true;
                    break 'outer;
                }
            }
        }
        if !merged {
            break;
        }
    }
    let root = |mut i: usize| {
        while parent[i] != i {
            i = parent[i];
        }
        i
    };

    // renumber by first appearance
    let mut new_id = vec![usize::MAX; accs.len()];
    let mut clusters: Vec<PlaceCluster> = Vec::new();
    let mut stays = Vec::with_capacity(raw.len());
    for (&(s, e, c), &a) in raw.iter().zip(&assign) {
        let r = root(a);
        if new_id[r] == usize::MAX {
            new_id[r] = clusters.len();
            clusters.push(PlaceCluster {
                cluster_id: clusters.len(),
                centroid: accs[r].centroid(),
                total_dwell_s: 0.0,
                overnight_dwell_s: 0.0,
            });
        }
        let k = &mut clusters[new_id[r]];
        k.total_dwell_s += (e - s) as f64 / 1000.0;
        k.overnight_dwell_s += overnight_seconds(s, e, tz_offset_minutes);
        stays.push(Stay {
            cluster_id: new_id[r],
            start_ms: s,
            end_ms: e,
            centroid: c,
        });
    }
    Places { clusters, stays }
}

/// The place with the most overnight dwell; ties go to larger total dwell,
/// then the smaller id.
pub fn detect_home(clusters: &[PlaceCluster]) -> Option<&PlaceCluster> {
    clusters
        .iter()
        .filter(|c| c.overnight_dwell_s > 0.0)
        .max_by(|a, b| {
            a.overnight_dwell_s
                .total_cmp(&b.overnight_dwell_s)
                .then(a.total_dwell_s.total_cmp(&b.total_dwell_s))
                .then(b.cluster_id.cmp(&a.cluster_id))
        })
}

#[cfg(test)]
mod tests {
    use super::*;

    const DAY0: i64 = 1_580_000_000_000 - 1_580_000_000_000 % MS_PER_DAY;
    const MIN: i64 = 60_000;
    const A: Coordinate = Coordinate::new(30.28, -97.73);

    fn dwell(at: Coordinate, from_ms: i64, minutes: i64, step_s: i64) -> Vec<GpsPoint> {
        (0..=minutes * 60 / step_s)
            .map(|k| GpsPoint::new(from_ms + k * step_s * 1000, at.lat, at.lon))
            .collect()
    }

    #[test]
    fn stationary_eight_hours() {
        let pts = dwell(A, DAY0 + 9 * 60 * MIN, 8 * 60, 60);
        let p = cluster_places(&pts, 0, &PlaceConfig::default());
        assert_eq!(p.clusters.len(), 1);
        assert_eq!(p.clusters[0].total_dwell_s, 8.0 * 3600.0);
        assert_eq!(p.clusters[0].overnight_dwell_s, 0.0);
    }

    #[test]
    fn two_dwells_with_transit() {
        let b = A.offset_m(5000.0, 0.0);
        let mut pts = dwell(A, DAY0 + 8 * 60 * MIN, 120, 30);
        let leave = pts.last().unwrap().timestamp_ms;
        // 10 minute transit, one fix per minute
        for k in 1..10 {
            let c = A.offset_m(500.0 * k as f64, 0.0);
            pts.push(GpsPoint::new(leave + k * MIN, c.lat, c.lon));
        }
        pts.extend(dwell(b, leave + 10 * MIN, 120, 30));
        let p = cluster_places(&pts, 0, &PlaceConfig::default());
        assert_eq!(p.clusters.len(), 2);
        assert_eq!(p.stays.len(), 2);
        assert!(haversine(p.clusters[1].centroid, b) < 1.0);
    }

    #[test]
    fn drive_through_has_no_places() {
        let pts: Vec<GpsPoint> = (0..120)
            .map(|k| {
                let c = A.offset_m(150.0 * k as f64, 0.0);
                GpsPoint::new(DAY0 + k * MIN, c.lat, c.lon)
            })
            .collect();
        assert!(cluster_places(&pts, 0, &PlaceConfig::default()).clusters.is_empty());
        assert!(cluster_places(&[], 0, &PlaceConfig::default()).clusters.is_empty());
    }

    #[test]
    fn repeated_visits_merge() {
        let b = A.offset_m(0.0, 3000.0);
        let mut pts = Vec::new();
        for day in 0..3 {
            let base = DAY0 + day * MS_PER_DAY;
            pts.extend(dwell(A.offset_m(day as f64 * 20.0, 0.0), base, 7 * 60, 120));
            pts.extend(dwell(b.offset_m(0.0, day as f64 * 15.0), base + 9 * 60 * MIN, 6 * 60, 120));
            pts.extend(dwell(A, base + 17 * 60 * MIN, 6 * 60, 120));
        }
        let p = cluster_places(&pts, 0, &PlaceConfig::default());
        assert_eq!(p.clusters.len(), 2);
        for i in 0..p.clusters.len() {
            for j in (i + 1)..p.clusters.len() {
                assert!(haversine(p.clusters[i].centroid, p.clusters[j].centroid) >= 200.0);
            }
        }
        for c in &p.clusters {
            assert!(c.total_dwell_s >= c.overnight_dwell_s && c.overnight_dwell_s >= 0.0);
        }
        let home = detect_home(&p.clusters).unwrap();
        assert_eq!(home.cluster_id, 0);
        assert!(home.overnight_dwell_s >= 3.0 * 6.0 * 3600.0 - 1.0);
    }

    #[test]
    fn overnight_accounting_respects_timezone() {
        // 06:00-08:00 UTC is 00:00-02:00 at UTC-6
        assert_eq!(overnight_seconds(DAY0 + 6 * 60 * MIN, DAY0 + 8 * 60 * MIN, -360), 7200.0);
        assert_eq!(overnight_seconds(DAY0 + 6 * 60 * MIN, DAY0 + 8 * 60 * MIN, 0), 0.0);
        // spanning two nights
        assert_eq!(
            overnight_seconds(DAY0 - 60 * MIN, DAY0 + MS_PER_DAY + 60 * MIN, 0),
            6.0 * 3600.0 + 3600.0
        );
    }

    fn cluster(id: usize, overnight: f64, total: f64) -> PlaceCluster {
        PlaceCluster {
            cluster_id: id,
            centroid: A,
            total_dwell_s: total,
            overnight_dwell_s: overnight,
        }
    }

    #[test]
    fn home_selection() {
        assert_eq!(detect_home(&[cluster(0, 10.0, 10.0)]).unwrap().cluster_id, 0);
        let cs = [cluster(0, 3600.0, 9e4), cluster(1, 6.0 * 3600.0, 7e4)];
        assert_eq!(detect_home(&cs).unwrap().cluster_id, 1);
        assert!(detect_home(&[cluster(0, 0.0, 100.0)]).is_none());
        let tie = [cluster(0, 5.0, 10.0), cluster(1, 5.0, 20.0), cluster(2, 5.0, 20.0)];
        assert_eq!(detect_home(&tie).unwrap().cluster_id, 1);
    }

    #[test]
    fn day_only_trace_has_no_home() {
        let mut pts = Vec::new();
        for day in 0..4 {
            pts.extend(dwell(A, DAY0 + day * MS_PER_DAY + 9 * 60 * MIN, 600, 60));
        }
        let p = cluster_places(&pts, 0, &PlaceConfig::default());
        assert_eq!(p.clusters.len(), 1);
        assert!(detect_home(&p.clusters).is_none());
    }
}
