//! Synthetic observations from simulated trajectories, and reconstruction
//! of normalized compartments from cumulative case counts.

use std::io::{Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fracops::Vec5;
use crate::fracsolver::{fmt17, Trajectory};
use crate::loss::ObservationSet;
use crate::model::{SimplexState, COMPARTMENTS};

/// Additive Gaussian noise on normalized fractions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSpec {
    pub sigma: f64,
    /// Overrides `sigma` compartment by compartment.
    pub per_compartment: Option<[f64; 5]>,
    pub seed: u64,
    /// Clamp noisy values to [0, 1] (no renormalization).
    pub clip_to_simplex: bool,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        NoiseSpec { sigma: 0.0, per_compartment: None, seed: 0, clip_to_simplex: false }
    }
}

impl NoiseSpec {
    pub fn noise_free() -> Self {
        NoiseSpec::default()
    }

    pub fn gaussian(sigma: f64, seed: u64) -> Self {
        NoiseSpec { sigma, seed, ..Default::default() }
    }

    pub fn sigmas(&self) -> [f64; 5] {
        self.per_compartment.unwrap_or([self.sigma; 5])
    }

    pub fn validated(self) -> Result<Self> {
        if self.sigmas().iter().any(|s| !(*s >= 0.0 && s.is_finite())) {
            return Err(Error::Config(format!("noise sigmas must be finite and >= 0, got {:?}", self.sigmas())));
        }
        Ok(self)
    }
}

/// Every `every`-th node of `traj` plus i.i.d. Gaussian noise; all five
/// compartments observed.
pub fn make_synthetic(traj: &Trajectory, every: usize, noise: &NoiseSpec) -> Result<ObservationSet> {
    if every == 0 {
        return Err(Error::Domain("subsampling stride must be at least 1".into()));
    }
    let noise = noise.validated()?;
    let sigmas = noise.sigmas();
    let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
    let mut times = Vec::new();
    let mut values = Vec::new();
    for j in (0..traj.len()).step_by(every) {
        let mut row = traj.states()[j].to_array();
        for (v, s) in row.iter_mut().zip(sigmas) {
            let z: f64 = StandardNormal.sample(&mut rng);
            *v += s * z;
            if noise.clip_to_simplex {
                *v = v.clamp(0.0, 1.0);
            }
        }
        times.push(traj.time(j));
        values.push(row);
    }
    ObservationSet::new(times, values, [true; 5])
}

/// One row of cumulative case counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawCaseRecord {
    pub day: u32,
    pub confirmed: u64,
    pub recovered: Option<u64>,
    pub deaths: u64,
}

/// Checks ordering and monotonicity; row indices are zero-based data rows.
pub fn validate_records(records: &[RawCaseRecord]) -> Result<()> {
    for (row, w) in records.windows(2).enumerate() {
        let (a, b) = (&w[0], &w[1]);
        let row = row + 1;
        let bad = |msg: String| Err(Error::InvalidRecord { row, msg });
        if b.day <= a.day {
            return bad(format!("day {} does not follow day {}", b.day, a.day));
        }
        if b.confirmed < a.confirmed {
            return bad(format!("cumulative confirmed decreases from {} to {}", a.confirmed, b.confirmed));
        }
        if b.deaths < a.deaths {
            return bad(format!("cumulative deaths decrease from {} to {}", a.deaths, b.deaths));
        }
        match (a.recovered, b.recovered) {
            (Some(x), Some(y)) if y < x => {
                return bad(format!("cumulative recovered decreases from {x} to {y}"));
            }
            (Some(_), Some(_)) | (None, None) => {}
            _ => return bad("recovered column is present on some rows only".into()),
        }
    }
    Ok(())
}

/// Settings for turning counts into fractions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Reconstruction {
    pub population: u64,
    /// e(0) = exposed_multiplier · i(0)
    pub exposed_multiplier: f64,
}

impl Default for Reconstruction {
    fn default() -> Self {
        Reconstruction { population: 1_000_000, exposed_multiplier: 2.0 }
    }
}

/// Normalized observations and an initial state built from the first day.
/// Times are days since the first record.
pub fn reconstruct_observations(
    records: &[RawCaseRecord],
    settings: &Reconstruction,
) -> Result<(ObservationSet, SimplexState)> {
    let first = records.first().ok_or(Error::EmptyObservations)?;
    validate_records(records)?;
    let n_pop = settings.population;
    let max_confirmed = records.iter().map(|r| r.confirmed).max().unwrap_or(0);
    if n_pop <= max_confirmed {
        return Err(Error::Population { population: n_pop, max_confirmed });
    }
    if !(settings.exposed_multiplier >= 0.0 && settings.exposed_multiplier.is_finite()) {
        return Err(Error::Config("exposed_multiplier must be finite and >= 0".into()));
    }
    let has_recovered = first.recovered.is_some();
    let n = n_pop as f64;
    let mut times = Vec::with_capacity(records.len());
    let mut values = Vec::with_capacity(records.len());
    for (row, rec) in records.iter().enumerate() {
        if rec.deaths > rec.confirmed {
            return Err(Error::InvalidRecord {
                row,
                msg: format!("deaths {} exceed confirmed {}", rec.deaths, rec.confirmed),
            });
        }
        let mut recovered = rec.recovered.unwrap_or(0);
        let active = if recovered + rec.deaths > rec.confirmed {
            log::warn!(
                "row {row}: recovered + deaths ({}) exceed confirmed ({}); active count clamped to 0",
                recovered + rec.deaths,
                rec.confirmed
            );
            recovered = rec.confirmed - rec.deaths;
            0
        } else {
            rec.confirmed - recovered - rec.deaths
        };
        let r = if has_recovered { recovered as f64 / n } else { f64::NAN };
        times.push(f64::from(rec.day - first.day));
        values.push([(n_pop - rec.confirmed) as f64 / n, f64::NAN, active as f64 / n, r, rec.deaths as f64 / n]);
    }
    let mask = [true, false, true, has_recovered, true];
    let v0 = values[0];
    let i0 = v0[2];
    let r0 = if has_recovered { v0[3] } else { 0.0 };
    let d0 = v0[4];
    let e0 = settings.exposed_multiplier * i0;
    let s0 = 1.0 - e0 - i0 - r0 - d0;
    let ic = SimplexState::new(s0, e0, i0, r0, d0)
        .map_err(|e| Error::Config(format!("initial state from first record: {e}")))?;
    Ok((ObservationSet::new(times, values, mask)?, ic))
}

fn parse_field<T: std::str::FromStr>(field: &str, name: &str, line: usize) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    field.trim().parse().map_err(|e| Error::Parse { line, msg: format!("{name} = {field:?}: {e}") })
}

/// Reads `day,confirmed,recovered,deaths`; an empty `recovered` means absent.
pub fn read_case_csv<R: Read>(input: R) -> Result<Vec<RawCaseRecord>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let header = rdr.headers()?.clone();
    let expected = ["day", "confirmed", "recovered", "deaths"];
    if header.iter().map(str::trim).ne(expected) {
        return Err(Error::Parse { line: 1, msg: format!("expected header {}", expected.join(",")) });
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            Error::Parse { line, msg: e.to_string() }
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let recovered = match rec[2].trim() {
            "" => None,
            f => Some(parse_field(f, "recovered", line)?),
        };
        out.push(RawCaseRecord {
            day: parse_field(&rec[0], "day", line)?,
            confirmed: parse_field(&rec[1], "confirmed", line)?,
            recovered,
            deaths: parse_field(&rec[3], "deaths", line)?,
        });
    }
    validate_records(&out)?;
    Ok(out)
}

pub fn load_csv(path: &Path) -> Result<Vec<RawCaseRecord>> {
    read_case_csv(std::fs::File::open(path)?)
}

pub fn write_case_csv<W: Write>(records: &[RawCaseRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["day", "confirmed", "recovered", "deaths"])?;
    for r in records {
        w.write_record([
            r.day.to_string(),
            r.confirmed.to_string(),
            r.recovered.map(|v| v.to_string()).unwrap_or_default(),
            r.deaths.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn mask_letters(mask: [bool; 5]) -> String {
    COMPARTMENTS.iter().zip(mask).filter(|(_, m)| *m).map(|(c, _)| *c).collect()
}

/// Writes `t,s,e,i,r,d,mask`; masked entries are empty and `mask` lists the
/// observed compartments, e.g. `sird`.
pub fn write_observations_csv<W: Write>(obs: &ObservationSet, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "s", "e", "i", "r", "d", "mask"])?;
    let mask = obs.mask();
    let letters = mask_letters(mask);
    for (t, row) in obs.times().iter().zip(obs.values()) {
        let mut fields = vec![fmt17(*t)];
        fields.extend((0..5).map(|x| if mask[x] { fmt17(row[x]) } else { String::new() }));
        fields.push(letters.clone());
        w.write_record(&fields)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_observations_csv(obs: &ObservationSet, path: &Path) -> Result<()> {
    write_observations_csv(obs, std::fs::File::create(path)?)
}

pub fn read_observations_csv<R: Read>(input: R) -> Result<ObservationSet> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let header = rdr.headers()?.clone();
    let expected = ["t", "s", "e", "i", "r", "d", "mask"];
    if header.iter().map(str::trim).ne(expected) {
        return Err(Error::Parse { line: 1, msg: format!("expected header {}", expected.join(",")) });
    }
    let mut times = Vec::new();
    let mut values: Vec<Vec5> = Vec::new();
    let mut mask: Option<[bool; 5]> = None;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            Error::Parse { line, msg: e.to_string() }
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let letters = rec[6].trim();
        if let Some(c) = letters.chars().find(|c| !COMPARTMENTS.iter().any(|n| n.starts_with(*c))) {
            return Err(Error::Parse { line, msg: format!("unknown compartment {c:?} in mask") });
        }
        let row_mask: [bool; 5] = std::array::from_fn(|x| letters.contains(COMPARTMENTS[x]));
        if mask.is_some_and(|m| m != row_mask) {
            return Err(Error::Parse { line, msg: "mask differs from earlier rows".into() });
        }
        mask = Some(row_mask);
        times.push(parse_field(&rec[0], "t", line)?);
        let mut row = [f64::NAN; 5];
        for x in 0..5 {
            let field = rec[x + 1].trim();
            if row_mask[x] {
                row[x] = parse_field(field, COMPARTMENTS[x], line)?;
            } else if !field.is_empty() {
                return Err(Error::Parse { line, msg: format!("{} is masked but has a value", COMPARTMENTS[x]) });
            }
        }
        values.push(row);
    }
    let Some(mask) = mask else {
        return Err(Error::EmptyObservations);
    };
    ObservationSet::new(times, values, mask)
}

pub fn load_observations_csv(path: &Path) -> Result<ObservationSet> {
    read_observations_csv(std::fs::File::open(path)?)
}
