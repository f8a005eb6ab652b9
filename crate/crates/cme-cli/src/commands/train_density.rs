//! `cme train-density`: fit a conditional density model per seed and write
//! run directories with config.json, curve.csv, model.bin, summary.json, and
//! (when a split is requested) the held-out test.csv.

use std::path::Path;
use std::time::Instant;

use cme_core::baselines::{
    train_deep_feature, ClassicalCMEModel, DeepFeatureConfig, DfBandwidth,
};
use cme_core::data::LabeledDataset;
use cme_core::estimator::{train, EpochRecord, Strategy, TrainingConfig};
use cme_core::kernels::median_heuristic;
use cme_core::Mat;

use crate::checkpoint::{DensityArtifact, DensityBundle};
use crate::config::{overrides, ConfigMap};
use crate::csvio::{fmt_f64, load_dataset_csv, write_dataset_csv, CsvTable};
use crate::runs::{prepare_run_dir, write_summary};
use crate::{CliError, CliResult, TrainDensityArgs};

use super::resolve_seeds;

const METHODS: &[&str] = &[
    "proposal_iterative",
    "proposal_joint",
    "proposal_fixed",
    "df_med",
    "df_fixed",
    "classical",
];

struct DensityKeys {
    data: String,
    method: String,
    out: String,
    test_fraction: f64,
    fold_seed: u64,
    epochs: usize,
    batch_size: usize,
    learning_rate: f64,
    weight_decay: f64,
    grid_size: usize,
    hidden: Vec<usize>,
    sigma_init: f64,
    sigma_update_period: usize,
    spectral_norm: bool,
    lambda: f64,
    feature_dim: usize,
    df_hidden: Vec<usize>,
    df_sigma: Option<f64>,
}

fn read_keys(cfg: &mut ConfigMap) -> CliResult<DensityKeys> {
    Ok(DensityKeys {
        data: cfg.require_str("data")?,
        method: cfg.str_or("method", "proposal_joint")?,
        out: cfg.str_or("out", "runs")?,
        test_fraction: cfg.f64_or("test_fraction", 0.0)?,
        fold_seed: cfg.u64_or("fold_seed", 0)?,
        epochs: cfg.usize_or("epochs", 1000)?,
        batch_size: cfg.usize_or("batch_size", 50)?,
        learning_rate: cfg.f64_or("learning_rate", 1e-4)?,
        weight_decay: cfg.f64_or("weight_decay", 0.01)?,
        grid_size: cfg.usize_or("grid_size", 100)?,
        hidden: cfg.usize_list_or("hidden", &[50, 50])?,
        sigma_init: cfg.f64_or("sigma_init", 1.0)?,
        sigma_update_period: cfg.usize_or("sigma_update_period", 1)?,
        spectral_norm: cfg.bool_or("spectral_norm", false)?,
        lambda: cfg.f64_or("lambda", 0.1)?,
        feature_dim: cfg.usize_or("feature_dim", 50)?,
        df_hidden: cfg.usize_list_or("df_hidden", &[50])?,
        df_sigma: cfg.get_f64("df_sigma")?,
    })
}

enum FitResult {
    Curve(Vec<EpochRecord>),
    NoCurve,
}

pub fn execute(args: &TrainDensityArgs) -> CliResult<()> {
    let mut cfg = ConfigMap::from_sources(
        "train-density",
        args.config.as_deref(),
        &overrides([
            ("data", args.data.clone()),
            ("method", args.method.clone()),
            ("out", args.out.clone()),
        ]),
    )?;
    cfg.apply_set_pairs(&args.set)?;
    let seeds = resolve_seeds(&mut cfg, args.seed, &args.seeds)?;
    let keys = read_keys(&mut cfg)?;
    cfg.finish()?;

    if !METHODS.contains(&keys.method.as_str()) {
        return Err(CliError::config(format!(
            "unknown method {:?}; expected one of {}",
            keys.method,
            METHODS.join(", ")
        )));
    }
    if keys.method == "df_fixed" && keys.df_sigma.is_none() {
        return Err(CliError::config(
            "method df_fixed needs the df_sigma key".to_string(),
        ));
    }

    let raw = load_dataset_csv(Path::new(&keys.data))?;
    let (train_raw, test_raw) = if keys.test_fraction > 0.0 {
        let (tr, te) = raw
            .split(keys.test_fraction, keys.fold_seed)
            .map_err(CliError::from_core)?;
        (tr, Some(te))
    } else {
        (raw, None)
    };
    let (train_std, standardizer) = train_raw.standardized().map_err(CliError::from_core)?;

    for &seed in &seeds {
        let started = Instant::now();
        let run = prepare_run_dir(&keys.out, &cfg, seed)?;
        if let Some(test) = &test_raw {
            write_dataset_csv(&run.path.join("test.csv"), test)?;
        }

        let (artifact, fit) = fit_method(&keys, &train_std, seed)?;
        let bundle = DensityBundle {
            method: keys.method.clone(),
            artifact,
            standardizer: standardizer.clone(),
        };
        bundle.save(&run.path.join("model.bin"))?;

        let mut curve = CsvTable::new(&["epoch", "seed", "loss", "sigma"]);
        let (final_loss, final_sigma) = match &fit {
            FitResult::Curve(history) => {
                for rec in history {
                    curve.push_row(&[
                        rec.epoch.to_string(),
                        seed.to_string(),
                        fmt_f64(rec.loss),
                        fmt_f64(rec.sigma),
                    ]);
                }
                match history.last() {
                    Some(rec) => (
                        serde_json::Value::from(rec.loss),
                        serde_json::Value::from(rec.sigma),
                    ),
                    None => (serde_json::Value::Null, serde_json::Value::Null),
                }
            }
            FitResult::NoCurve => (serde_json::Value::Null, serde_json::Value::Null),
        };
        curve.write(&run.path.join("curve.csv"))?;

        write_summary(
            &run,
            &serde_json::json!({
                "command": "train-density",
                "run_id": run.id,
                "config_hash": run.config_hash,
                "seed": seed,
                "method": keys.method,
                "n_train": train_std.len(),
                "n_test": test_raw.as_ref().map_or(0, LabeledDataset::len),
                "final_loss": final_loss,
                "final_sigma": final_sigma,
                "wall_time_seconds": started.elapsed().as_secs_f64(),
            }),
        )?;
        println!("run {}: method {} trained (seed {seed})", run.id, keys.method);
    }
    Ok(())
}

fn fit_method(
    keys: &DensityKeys,
    train_std: &LabeledDataset,
    seed: u64,
) -> CliResult<(DensityArtifact, FitResult)> {
    match keys.method.as_str() {
        "proposal_iterative" | "proposal_joint" | "proposal_fixed" => {
            let strategy = match keys.method.as_str() {
                "proposal_iterative" => Strategy::Iterative,
                "proposal_joint" => Strategy::Joint,
                _ => Strategy::FixedSigma,
            };
            let config = TrainingConfig {
                strategy,
                sigma_init: keys.sigma_init,
                sigma_update_period: keys.sigma_update_period,
                epochs: keys.epochs,
                batch_size: keys.batch_size,
                learning_rate: keys.learning_rate,
                weight_decay: keys.weight_decay,
                grid_size: keys.grid_size,
                hidden_sizes: keys.hidden.clone(),
                spectral_norm: keys.spectral_norm,
                seed,
            };
            let out = train(train_std, &config).map_err(CliError::from_core)?;
            Ok((
                DensityArtifact::Proposal(out.model),
                FitResult::Curve(out.history),
            ))
        }
        "df_med" | "df_fixed" => {
            let bandwidth = match keys.method.as_str() {
                "df_med" => DfBandwidth::Median,
                _ => DfBandwidth::Fixed(keys.df_sigma.expect("checked above")),
            };
            let config = DeepFeatureConfig {
                bandwidth,
                lambda: keys.lambda,
                epochs: keys.epochs,
                batch_size: keys.batch_size,
                learning_rate: keys.learning_rate,
                weight_decay: keys.weight_decay,
                hidden_sizes: keys.df_hidden.clone(),
                feature_dim: keys.feature_dim,
                seed,
            };
            let out = train_deep_feature(train_std, &config).map_err(CliError::from_core)?;
            Ok((
                DensityArtifact::DeepFeature {
                    model: out.model,
                    train_x: train_std.inputs().clone(),
                },
                FitResult::Curve(out.history),
            ))
        }
        "classical" => {
            let model =
                ClassicalCMEModel::fit(train_std, keys.lambda).map_err(CliError::from_core)?;
            let y_col = Mat::from_vec(train_std.len(), 1, train_std.outputs().to_vec());
            let output_sigma = median_heuristic(&y_col).map_err(CliError::from_core)?;
            Ok((
                DensityArtifact::Classical {
                    model,
                    output_sigma,
                },
                FitResult::NoCurve,
            ))
        }
        other => Err(CliError::config(format!("unknown method {other:?}"))),
    }
}
