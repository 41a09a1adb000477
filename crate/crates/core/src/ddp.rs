//! Daily Displacement Profiles.
//!
//! A day is cut into 48 half-hour bins, each bin reduced to the mean
//! coordinate of its fixes, empty bins carried forward from the last
//! observation, and adjacent bins differenced by great-circle distance,
//! giving 47 displacement values per day.

use serde::{Deserialize, Serialize};
use std::io::{Read, Write};

use chrono::NaiveDate;

use crate::error::{Error, Result};
use crate::geo::{haversine, Coordinate};
use crate::ingest::{DayTrace, Group, BINS_PER_DAY};

pub const DDP_LEN: usize = BINS_PER_DAY - 1;

#[derive(Debug, Clone, PartialEq)]
pub struct BinnedDay {
    pub participant_id: String,
    pub local_date: NaiveDate,
    pub bin_coords: [Option<Coordinate>; BINS_PER_DAY],
    pub observed_mask: [bool; BINS_PER_DAY],
}

impl BinnedDay {
    /// Coordinates of a fully imputed day. Panics if any bin is still absent.
    pub fn filled(&self) -> [Coordinate; BINS_PER_DAY] {
        std::array::from_fn(|i| self.bin_coords[i].expect("bin imputed"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DisplacementProfile {
    pub participant_id: String,
    pub local_date: NaiveDate,
    pub group: Group,
    /// `d[i]` is the distance in meters between bin `i` and bin `i + 1`.
    pub d: [f64; DDP_LEN],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DdpConfig {
    pub min_coverage: f64,
}

impl Default for DdpConfig {
    fn default() -> Self {
        DdpConfig { min_coverage: 0.5 }
    }
}

pub fn bin_day(day: &DayTrace) -> BinnedDay {
    let mut sums = [(0.0f64, 0.0f64, 0usize); BINS_PER_DAY];
    for p in &day.points {
        let s = &mut sums[day.bin_of(p)];
        s.0 += p.latitude;
        s.1 += p.longitude;
        s.2 += 1;
    }
    BinnedDay {
        participant_id: day.participant_id.clone(),
        local_date: day.local_date,
        bin_coords: std::array::from_fn(|i| {
            let (la, lo, n) = sums[i];
            (n > 0).then(|| Coordinate::new(la / n as f64, lo / n as f64))
        }),
        observed_mask: std::array::from_fn(|i| sums[i].2 > 0),
    }
}

/// Carries the last observed coordinate forward into empty bins; bins before
/// the first observation take the first observation.
pub fn impute_bins(binned: &BinnedDay) -> Result<BinnedDay> {
    let first = binned
        .bin_coords
        .iter()
        .flatten()
        .next()
        .copied()
        .ok_or(Error::AllBinsAbsent)?;
    let mut out = binned.clone();
    let mut last = first;
    for slot in out.bin_coords.iter_mut() {
        match slot {
            Some(c) => last = *c,
            None => *slot = Some(last),
        }
    }
    Ok(out)
}

/// Adjacent-bin displacements of an imputed day.
pub fn displacements(filled: &[Coordinate; BINS_PER_DAY]) -> [f64; DDP_LEN] {
    std::array::from_fn(|i| haversine(filled[i], filled[i + 1]))
}

pub fn build_ddp(day: &DayTrace, config: &DdpConfig) -> Result<DisplacementProfile> {
    if day.coverage_fraction < config.min_coverage {
        return Err(Error::InsufficientCoverage {
            coverage: day.coverage_fraction,
            min_coverage: config.min_coverage,
        });
    }
    let imputed = impute_bins(&bin_day(day))?;
    Ok(DisplacementProfile {
        participant_id: day.participant_id.clone(),
        local_date: day.local_date,
        group: day.group,
        d: displacements(&imputed.filled()),
    })
}

/// Label of a half-hour bin: `H06a` is 06:00-06:30, `H20b` is 20:30-21:00.
pub fn bin_label(bin: usize) -> String {
    assert!(bin < BINS_PER_DAY, "bin index {bin} out of range");
    format!("H{:02}{}", bin / 2, if bin % 2 == 0 { 'a' } else { 'b' })
}

/// Label for displacement `d[i]`, which lands in bin `i + 1`.
pub fn displacement_label(i: usize) -> String {
    bin_label(i + 1)
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeatmapCell {
    pub participant_id: String,
    pub local_date: NaiveDate,
    pub bin_label: String,
    pub value: f64,
}

/// Plot-ready rows with `ln(1 + meters)` per displacement.
pub fn ddp_heatmap_table(profiles: &[DisplacementProfile]) -> Vec<HeatmapCell> {
    profiles
        .iter()
        .flat_map(|p| {
            p.d.iter().enumerate().map(move |(i, &m)| HeatmapCell {
                participant_id: p.participant_id.clone(),
                local_date: p.local_date,
                bin_label: displacement_label(i),
                value: m.ln_1p(),
            })
        })
        .collect()
}

pub fn write_heatmap_csv<W: Write>(cells: &[HeatmapCell], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["participant_id", "local_date", "bin", "ln_displacement"])?;
    for c in cells {
        w.write_record([
            c.participant_id.clone(),
            c.local_date.to_string(),
            c.bin_label.clone(),
            format!("{:.6}", c.value),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_ddp_csv<W: Write>(profiles: &[DisplacementProfile], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["participant_id".to_string(), "local_date".into(), "group".into()];
    header.extend((0..DDP_LEN).map(|i| format!("d{i:02}")));
    w.write_record(&header)?;
    for p in profiles {
        let mut row = vec![p.participant_id.clone(), p.local_date.to_string(), p.group.to_string()];
        row.extend(p.d.iter().map(|v| format!("{v:.3}")));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_ddp_csv<R: Read>(input: R) -> Result<Vec<DisplacementProfile>> {
    let mut r = csv::Reader::from_reader(input);
    let mut out = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let bad = |reason: &str| Error::MalformedRow {
            line: line + 2,
            reason: reason.to_string(),
        };
        if rec.len() != 3 + DDP_LEN {
            return Err(bad("expected 50 columns"));
        }
        let local_date = rec[1].parse::<NaiveDate>().map_err(|_| bad("bad date"))?;
        let group = rec[2].parse::<Group>().map_err(|_| bad("bad group"))?;
        let mut d = [0.0; DDP_LEN];
        for (i, slot) in d.iter_mut().enumerate() {
            *slot = rec[3 + i].parse().map_err(|_| bad("bad displacement"))?;
        }
        out.push(DisplacementProfile {
            participant_id: rec[0].to_string(),
            local_date,
            group,
            d,
        });
    }
    Ok(out)
}
