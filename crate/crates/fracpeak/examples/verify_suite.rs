//! Runs every verification scenario at its desk defaults and prints the
//! verdict table. Ground states are cached under `FRACPEAK_CACHE` when set.

use fracpeak::groundstate::GsCache;
use fracpeak::verify::{render_table, run_suite, write_report, ExperimentPlan, Runner};
use std::path::PathBuf;

fn main() -> fracpeak::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "target/verify-suite".into()));
    let runner = Runner {
        cache: GsCache::from_env(),
        out: Some(out.clone()),
    };
    let report = run_suite(&ExperimentPlan::suite(), &runner, 1)?;
    let manifest = write_report(&out, &report)?;
    print!("{}", render_table(&report));
    println!("manifest {}", manifest.hash);
    Ok(())
}
