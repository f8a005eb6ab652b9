//! One module per subcommand. Each `execute` builds a `ConfigMap` from the
//! TOML file, named flags, and `--set` pairs, resolves every key it knows,
//! rejects the rest, then materializes a run directory per seed.

pub mod eval_density;
pub mod gen_data;
pub mod train_density;
pub mod train_rl;

use crate::config::ConfigMap;
use crate::CliResult;

/// Seed list: `--seed N` beats `--seeds`, which beats the config key.
pub fn resolve_seeds(
    cfg: &mut ConfigMap,
    seed_flag: Option<u64>,
    seeds_flag: &Option<String>,
) -> CliResult<Vec<u64>> {
    if let Some(seed) = seed_flag {
        let _ = cfg.u64_list_or("seeds", &[0])?;
        return Ok(vec![seed]);
    }
    if let Some(seeds) = seeds_flag {
        let _ = cfg.u64_list_or("seeds", &[0])?;
        let mut scratch = ConfigMap::from_sources("seeds", None, &[])?;
        scratch.apply_set_pairs(&[format!("seeds={seeds}")])?;
        return scratch.u64_list_or("seeds", &[0]);
    }
    cfg.u64_list_or("seeds", &[0])
}

/// splitmix64; mixes nested seeds without coupling nearby values.
pub fn mix_seed(a: u64, b: u64, c: u64) -> u64 {
    fn split(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    split(split(split(a) ^ b) ^ c)
}

/// Evenly spaced grid including both endpoints.
pub fn linspace(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![0.5 * (lo + hi)];
    }
    let step = (hi - lo) / (count - 1) as f64;
    (0..count).map(|i| lo + step * i as f64).collect()
}

pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}
