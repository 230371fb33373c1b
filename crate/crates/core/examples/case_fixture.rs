//! Writes a synthetic cumulative-count CSV shaped like a national surveillance
//! feed: `cargo run --example case_fixture > cases.csv`.

use std::io;

use fracpinn::data::{write_case_csv, RawCaseRecord};
use fracpinn::{simulate, EpidemicParams, SimplexState, SolverConfig};

const POPULATION: f64 = 1_000_000.0;
const DAYS: usize = 120;

fn main() -> fracpinn::Result<()> {
    let i0 = 200.0 / POPULATION;
    let ic = SimplexState::new(1.0 - 3.0 * i0, 2.0 * i0, i0, 0.0, 0.0)?;
    let params = EpidemicParams::new(0.3058, 0.2747, 0.0592, 0.00229, 0.915)?;
    let traj = simulate(&ic, &params, 1.0, DAYS, &SolverConfig::default())?;

    let mut records = Vec::with_capacity(traj.len());
    let (mut confirmed, mut recovered, mut deaths) = (0u64, 0u64, 0u64);
    for (day, x) in traj.states().iter().enumerate() {
        let count = |v: f64| (v * POPULATION).round() as u64;
        // reported cumulative totals never go down
        deaths = deaths.max(count(x.d));
        recovered = recovered.max(count(x.r));
        confirmed = confirmed.max(count(x.i) + recovered + deaths);
        records.push(RawCaseRecord { day: day as u32, confirmed, recovered: Some(recovered), deaths });
    }
    write_case_csv(&records, io::stdout().lock())
}
