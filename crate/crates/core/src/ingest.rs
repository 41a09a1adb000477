//! Raw GPS trace ingestion and local-day segmentation.
//!
//! Input files carry one fix per row: `timestamp_ms,latitude,longitude,accuracy_m`
//! with the accuracy column optional per row. Rows outside coordinate bounds
//! are dropped and counted; duplicate timestamps collapse to their mean.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::Coordinate;

pub const MS_PER_DAY: i64 = 86_400_000;
pub const MS_PER_BIN: i64 = 1_800_000;
pub const BINS_PER_DAY: usize = 48;

const HEADER: [&str; 4] = ["timestamp_ms", "latitude", "longitude", "accuracy_m"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpsPoint {
    pub timestamp_ms: i64,
    pub latitude: f64,
    pub longitude: f64,
    pub accuracy_m: Option<f64>,
}

impl GpsPoint {
    pub fn new(timestamp_ms: i64, latitude: f64, longitude: f64) -> Self {
        GpsPoint {
            timestamp_ms,
            latitude,
            longitude,
            accuracy_m: None,
        }
    }

    pub fn coord(&self) -> Coordinate {
        Coordinate::new(self.latitude, self.longitude)
    }

    fn is_valid(&self) -> bool {
        self.timestamp_ms > 0
            && self.coord().is_valid()
            && self.accuracy_m.is_none_or(|a| a.is_finite() && a >= 0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Group {
    #[serde(rename = "PRE")]
    Pre,
    #[serde(rename = "POST")]
    Post,
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Group::Pre => "PRE",
            Group::Post => "POST",
        })
    }
}

impl FromStr for Group {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "PRE" => Ok(Group::Pre),
            "POST" => Ok(Group::Post),
            other => Err(Error::ConfigInvalid(format!("unknown group `{other}`"))),
        }
    }
}

/// One participant's full GPS trace.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub participant_id: String,
    group: Group,
    pub points: Vec<GpsPoint>,
    pub timezone_offset_minutes: i32,
}

impl Trace {
    /// Builds a trace, sorting points and collapsing duplicate timestamps.
    pub fn new(
        participant_id: impl Into<String>,
        group: Group,
        points: Vec<GpsPoint>,
        timezone_offset_minutes: i32,
    ) -> Self {
        Trace {
            participant_id: participant_id.into(),
            group,
            points: collapse_duplicates(points),
            timezone_offset_minutes,
        }
    }

    pub fn group(&self) -> Group {
        self.group
    }

    fn local_ms(&self, timestamp_ms: i64) -> i64 {
        timestamp_ms + i64::from(self.timezone_offset_minutes) * 60_000
    }

    /// Writes the canonical CSV form: integer timestamps and 7-decimal coordinates.
    pub fn write_canonical_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(HEADER)?;
        for p in &self.points {
            w.write_record([
                p.timestamp_ms.to_string(),
                format!("{:.7}", p.latitude),
                format!("{:.7}", p.longitude),
                p.accuracy_m.map(|a| format!("{a:.1}")).unwrap_or_default(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Counts of rows dropped while parsing.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct RejectionReport {
    pub total_rows: usize,
    pub out_of_range: usize,
    pub unparseable: usize,
    pub duplicates_collapsed: usize,
}

impl RejectionReport {
    pub fn rejected(&self) -> usize {
        self.out_of_range + self.unparseable
    }
}

fn collapse_duplicates(mut points: Vec<GpsPoint>) -> Vec<GpsPoint> {
    points.sort_by_key(|p| p.timestamp_ms);
    let mut out: Vec<GpsPoint> = Vec::with_capacity(points.len());
    let mut i = 0;
    while i < points.len() {
        let ts = points[i].timestamp_ms;
        let mut j = i;
        while j < points.len() && points[j].timestamp_ms == ts {
            j += 1;
        }
        if j - i == 1 {
            out.push(points[i]);
        } else {
            let run = &points[i..j];
            let n = run.len() as f64;
            let accs: Vec<f64> = run.iter().filter_map(|p| p.accuracy_m).collect();
            out.push(GpsPoint {
                timestamp_ms: ts,
                latitude: run.iter().map(|p| p.latitude).sum::<f64>() / n,
                longitude: run.iter().map(|p| p.longitude).sum::<f64>() / n,
                accuracy_m: (!accs.is_empty()).then(|| accs.iter().sum::<f64>() / accs.len() as f64),
            });
        }
        i = j;
    }
    out
}

fn parse_row(record: &csv::StringRecord) -> Option<GpsPoint> {
    let field = |i: usize| record.get(i).map(str::trim);
    let timestamp_ms = field(0)?.parse::<i64>().ok()?;
    let latitude = field(1)?.parse::<f64>().ok()?;
    let longitude = field(2)?.parse::<f64>().ok()?;
    let accuracy_m = match field(3) {
        None | Some("") => None,
        Some(s) => Some(s.parse::<f64>().ok()?),
    };
    Some(GpsPoint {
        timestamp_ms,
        latitude,
        longitude,
        accuracy_m,
    })
}

/// Parses a raw trace CSV.
pub fn parse_trace<R: Read>(
    raw_csv: R,
    participant_id: &str,
    group: Group,
    timezone_offset_minutes: i32,
) -> Result<(Trace, RejectionReport)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(raw_csv);
    let mut records = reader.records();

    let header = match records.next() {
        Some(r) => r?,
        None => return Err(Error::MalformedHeader(String::new())),
    };
    let names: Vec<&str> = header.iter().map(|h| h.trim().trim_start_matches('\u{feff}')).collect();
    let ok_header = names.len() >= 3
        && names.len() <= 4
        && names.iter().zip(HEADER.iter()).all(|(a, b)| a == b);
    if !ok_header {
        return Err(Error::MalformedHeader(names.join(",")));
    }

    let mut report = RejectionReport::default();
    let mut points = Vec::new();
    for record in records {
        let record = record?;
        if record.len() == 1 && record.get(0).is_some_and(|f| f.trim().is_empty()) {
            continue;
        }
        report.total_rows += 1;
        match parse_row(&record) {
            None => report.unparseable += 1,
            Some(p) if !p.is_valid() => report.out_of_range += 1,
            Some(p) => points.push(p),
        }
    }
    if points.is_empty() {
        return Err(Error::EmptyTrace(participant_id.to_string()));
    }
    let n_valid = points.len();
    let trace = Trace::new(participant_id, group, points, timezone_offset_minutes);
    report.duplicates_collapsed = n_valid - trace.points.len();
    Ok((trace, report))
}

/// The points of one participant falling on one local calendar day.
#[derive(Debug, Clone, PartialEq)]
pub struct DayTrace {
    pub participant_id: String,
    pub group: Group,
    pub local_date: NaiveDate,
    pub points: Vec<GpsPoint>,
    pub coverage_fraction: f64,
    pub timezone_offset_minutes: i32,
}

impl DayTrace {
    /// Milliseconds since local midnight for a point of this day.
    pub fn local_ms_of_day(&self, p: &GpsPoint) -> i64 {
        (p.timestamp_ms + i64::from(self.timezone_offset_minutes) * 60_000).rem_euclid(MS_PER_DAY)
    }

    /// Half-hour bin index of a point of this day.
    pub fn bin_of(&self, p: &GpsPoint) -> usize {
        (self.local_ms_of_day(p) / MS_PER_BIN) as usize
    }

    /// UTC timestamp of local midnight starting this day.
    pub fn start_utc_ms(&self) -> i64 {
        date_to_epoch_day(self.local_date) * MS_PER_DAY
            - i64::from(self.timezone_offset_minutes) * 60_000
    }
}

pub fn epoch_day_to_date(day: i64) -> NaiveDate {
    NaiveDate::from_num_days_from_ce_opt(719_163 + day as i32).expect("date in range")
}

pub fn date_to_epoch_day(date: NaiveDate) -> i64 {
    i64::from(date.num_days_from_ce()) - 719_163
}

/// Splits a trace into local calendar days, half-open at local midnight.
pub fn segment_days(trace: &Trace) -> Vec<DayTrace> {
    let mut by_day: BTreeMap<i64, Vec<GpsPoint>> = BTreeMap::new();
    for p in &trace.points {
        let day = trace.local_ms(p.timestamp_ms).div_euclid(MS_PER_DAY);
        by_day.entry(day).or_default().push(*p);
    }
    by_day
        .into_iter()
        .map(|(day, points)| {
            let mut d = DayTrace {
                participant_id: trace.participant_id.clone(),
                group: trace.group,
                local_date: epoch_day_to_date(day),
                points,
                coverage_fraction: 0.0,
                timezone_offset_minutes: trace.timezone_offset_minutes,
            };
            let mut hit = [false; BINS_PER_DAY];
            for p in &d.points {
                hit[d.bin_of(p)] = true;
            }
            d.coverage_fraction = hit.iter().filter(|&&h| h).count() as f64 / BINS_PER_DAY as f64;
            d
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const DAY0: i64 = 1_580_000_000_000 - 1_580_000_000_000 % MS_PER_DAY; // a UTC midnight

    fn parse(s: &str) -> Result<(Trace, RejectionReport)> {
        parse_trace(s.as_bytes(), "p1", Group::Pre, 0)
    }

    #[test]
    fn three_sorted_rows() {
        let (t, r) = parse(
            "timestamp_ms,latitude,longitude,accuracy_m\n1000,30.0,-97.0,5\n2000,30.1,-97.1,\n3000,30.2,-97.2,4.5\n",
        )
        .unwrap();
        assert_eq!(t.points.len(), 3);
        assert_eq!(r.rejected(), 0);
        assert_eq!(t.points[1].accuracy_m, None);
    }

    #[test]
    fn out_of_range_row_is_dropped() {
        let (t, r) = parse("timestamp_ms,latitude,longitude,accuracy_m\n1000,91.0,0,\n2000,10,10,\n").unwrap();
        assert_eq!(t.points.len(), 1);
        assert_eq!(r.out_of_range, 1);
        assert_eq!(r.rejected(), 1);
    }

    #[test]
    fn duplicate_timestamps_average() {
        let (t, r) = parse("timestamp_ms,latitude,longitude,accuracy_m\r\n5,10.0,1.0,\r\n5,20.0,3.0,\r\n").unwrap();
        assert_eq!(t.points.len(), 1);
        assert_eq!(t.points[0].latitude, 15.0);
        assert_eq!(t.points[0].longitude, 2.0);
        assert_eq!(r.duplicates_collapsed, 1);
    }

    #[test]
    fn unsorted_input_is_sorted() {
        let (t, _) = parse("timestamp_ms,latitude,longitude,accuracy_m\n3,1,1,\n1,2,2,\n2,3,3,\n").unwrap();
        let ts: Vec<i64> = t.points.iter().map(|p| p.timestamp_ms).collect();
        assert_eq!(ts, vec![1, 2, 3]);
    }

    #[test]
    fn header_errors() {
        assert!(matches!(parse("time,lat,lon\n1,2,3\n"), Err(Error::MalformedHeader(_))));
        assert!(matches!(parse(""), Err(Error::MalformedHeader(_))));
        assert!(matches!(
            parse("timestamp_ms,latitude,longitude,accuracy_m\n1,95,0,\n"),
            Err(Error::EmptyTrace(_))
        ));
        // accuracy column may be absent entirely
        assert!(parse("timestamp_ms,latitude,longitude\n1,5,0\n").is_ok());
    }

    #[test]
    fn non_positive_timestamp_rejected() {
        let (_, r) = parse("timestamp_ms,latitude,longitude,accuracy_m\n0,1,1,\n-5,1,1,\n7,1,1,\n").unwrap();
        assert_eq!(r.out_of_range, 2);
    }

    fn at(ms: i64) -> GpsPoint {
        GpsPoint::new(ms, 30.0, -97.0)
    }

    #[test]
    fn single_day_segmentation() {
        let h = 3_600_000;
        let t = Trace::new("p", Group::Pre, (9..17).map(|k| at(DAY0 + k * h)).collect(), 0);
        let days = segment_days(&t);
        assert_eq!(days.len(), 1);
        assert_eq!(days[0].points.len(), 8);
    }

    #[test]
    fn midnight_split_and_boundary() {
        let t = Trace::new(
            "p",
            Group::Post,
            vec![at(DAY0 + MS_PER_DAY - 1), at(DAY0 + MS_PER_DAY), at(DAY0 + MS_PER_DAY + 5)],
            0,
        );
        let days = segment_days(&t);
        assert_eq!(days.len(), 2);
        assert_eq!(days[0].points.len(), 1);
        // exactly 00:00:00.000 belongs to the new day
        assert_eq!(days[1].points[0].timestamp_ms, DAY0 + MS_PER_DAY);
        assert_eq!(days[1].local_date, days[0].local_date.succ_opt().unwrap());
    }

    #[test]
    fn timezone_offset_shifts_day_boundary() {
        // 03:00 UTC is 21:00 the previous day at UTC-6.
        let t = Trace::new("p", Group::Pre, vec![at(DAY0 + 3 * 3_600_000)], -360);
        let days = segment_days(&t);
        assert_eq!(date_to_epoch_day(days[0].local_date), DAY0 / MS_PER_DAY - 1);
        assert_eq!(days[0].bin_of(&days[0].points[0]), 42);
        assert_eq!(days[0].start_utc_ms(), DAY0 - MS_PER_DAY + 6 * 3_600_000);
    }

    #[test]
    fn full_coverage_is_exactly_one() {
        let pts = (0..48).map(|b| at(DAY0 + b * MS_PER_BIN + 1000)).collect();
        let days = segment_days(&Trace::new("p", Group::Pre, pts, 0));
        assert_eq!(days[0].coverage_fraction, 1.0);
    }

    proptest! {
        #[test]
        fn partition_and_canonical_round_trip(
            raw in prop::collection::vec((1i64..5 * MS_PER_DAY, -60.0f64..60.0, -170.0f64..170.0), 1..200),
            tz in -720i32..720,
        ) {
            let pts: Vec<GpsPoint> = raw.iter().map(|&(t, la, lo)| GpsPoint::new(DAY0 + t, la, lo)).collect();
            let trace = Trace::new("p", Group::Pre, pts, tz);

            let days = segment_days(&trace);
            let mut union: Vec<GpsPoint> = days.iter().flat_map(|d| d.points.clone()).collect();
            union.sort_by_key(|p| p.timestamp_ms);
            prop_assert_eq!(&union, &trace.points);
            for d in &days {
                prop_assert!((0.0..=1.0).contains(&d.coverage_fraction));
                for p in &d.points {
                    let local_day = (p.timestamp_ms + i64::from(tz) * 60_000).div_euclid(MS_PER_DAY);
                    prop_assert_eq!(epoch_day_to_date(local_day), d.local_date);
                }
            }

            let mut buf = Vec::new();
            trace.write_canonical_csv(&mut buf).unwrap();
            let (once, _) = parse_trace(buf.as_slice(), "p", Group::Pre, tz).unwrap();
            let mut buf2 = Vec::new();
            once.write_canonical_csv(&mut buf2).unwrap();
            let (twice, _) = parse_trace(buf2.as_slice(), "p", Group::Pre, tz).unwrap();
            prop_assert_eq!(&buf, &buf2);
            prop_assert_eq!(once, twice);
        }
    }
}
