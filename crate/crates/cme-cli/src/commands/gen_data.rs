//! `cme gen-data`: deterministic toy dataset generation to a CSV file.

use cme_core::data::{generate_toy, ToyFamily, ToySpec};

use crate::config::{overrides, ConfigMap};
use crate::csvio::write_dataset_csv;
use crate::{CliError, CliResult, GenDataArgs};

pub fn execute(args: &GenDataArgs) -> CliResult<()> {
    let mut cfg = ConfigMap::from_sources(
        "gen-data",
        args.config.as_deref(),
        &overrides([
            ("family", args.family.clone()),
            ("n", args.n.map(|v| v.to_string())),
            ("seed", args.seed.map(|v| v.to_string())),
            ("out", args.out.clone()),
        ]),
    )?;
    cfg.apply_set_pairs(&args.set)?;

    let family_name = cfg.require_str("family")?;
    let family = ToyFamily::parse(&family_name).map_err(CliError::from_core)?;
    let n = cfg.usize_or("n", 2000)?;
    let seed = cfg.u64_or("seed", 0)?;
    let out = cfg.str_or(
        "out",
        &format!("{}_n{}_s{}.csv", family.name(), n, seed),
    )?;
    cfg.finish()?;

    let data = generate_toy(&ToySpec { family, n, seed }).map_err(CliError::from_core)?;
    write_dataset_csv(std::path::Path::new(&out), &data)?;
    println!(
        "wrote {} rows ({} -> {})",
        data.len(),
        family.name(),
        out
    );
    Ok(())
}
