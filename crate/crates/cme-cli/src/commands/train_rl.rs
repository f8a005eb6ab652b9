//! `cme train-rl`: train distributional (FUSE or single-kernel) or DQN agents
//! on the deterministic classic-control environments, one run dir per seed.

use std::time::Instant;

use cme_core::agent::{train_agent, AgentConfig, LossMode};

use crate::checkpoint::save_policy;
use crate::config::{overrides, ConfigMap};
use crate::csvio::{fmt_f64, CsvTable};
use crate::runs::{prepare_run_dir, write_summary};
use crate::{CliError, CliResult, TrainRlArgs};

use super::{mean_std, resolve_seeds};

fn apply_agent_overrides(cfg: &mut ConfigMap, config: &mut AgentConfig) -> CliResult<()> {
    if let Some(v) = cfg.get_f64("gamma")? {
        config.gamma = v;
    }
    if let Some(v) = cfg.get_usize("batch_size")? {
        config.batch_size = v;
    }
    if let Some(v) = cfg.get_usize("update_period")? {
        config.update_period = v;
    }
    if let Some(v) = cfg.get_usize("target_sync_period")? {
        config.target_sync_period = v;
    }
    if let Some(v) = cfg.get_f64("epsilon_start")? {
        config.epsilon_start = v;
    }
    if let Some(v) = cfg.get_f64("epsilon_final")? {
        config.epsilon_final = v;
    }
    if let Some(v) = cfg.get_usize("epsilon_decay_steps")? {
        config.epsilon_decay_steps = v;
    }
    if let Some(v) = cfg.get_f64("eval_epsilon")? {
        config.eval_epsilon = v;
    }
    if let Some(v) = cfg.get_usize("eval_period")? {
        config.eval_period = v;
    }
    if let Some(v) = cfg.get_f64("learning_rate")? {
        config.learning_rate = v;
    }
    if let Some(v) = cfg.get_usize("buffer_capacity")? {
        config.buffer_capacity = v;
    }
    if let Some(v) = cfg.get_usize("num_atoms")? {
        config.num_atoms = v;
    }
    if let Some(v) = cfg.get_f64("atom_min")? {
        config.atom_min = v;
    }
    if let Some(v) = cfg.get_f64("atom_max")? {
        config.atom_max = v;
    }
    if let Some(v) = cfg.get_usize("fuse_bandwidth_count")? {
        config.fuse_bandwidth_count = v;
    }
    config.hidden_sizes = cfg.usize_list_or("hidden", &config.hidden_sizes.clone())?;
    Ok(())
}

pub fn execute(args: &TrainRlArgs) -> CliResult<()> {
    let mut cfg = ConfigMap::from_sources(
        "train-rl",
        args.config.as_deref(),
        &overrides([
            ("env", args.env.clone()),
            ("loss", args.loss.clone()),
            ("sigma", args.sigma.map(|v| v.to_string())),
            ("steps", args.steps.map(|v| v.to_string())),
            ("out", args.out.clone()),
        ]),
    )?;
    cfg.apply_set_pairs(&args.set)?;
    let seeds = resolve_seeds(&mut cfg, args.seed, &args.seeds)?;

    let env = cfg.require_str("env")?;
    let loss = cfg.str_or("loss", "fuse")?;
    let sigma = cfg.f64_or("sigma", 10.0)?;
    let steps = cfg.usize_or("steps", 100_000)?;
    let out = cfg.str_or("out", "runs")?;

    let mut base = AgentConfig::defaults_for(&env).map_err(CliError::from_core)?;
    base.total_steps = steps;
    base.loss_mode = match loss.as_str() {
        "fuse" => LossMode::Fuse,
        "single" => LossMode::Single(sigma),
        "dqn" => LossMode::Dqn,
        other => {
            return Err(CliError::config(format!(
                "unknown loss {other:?}; expected fuse, single, dqn"
            )))
        }
    };
    apply_agent_overrides(&mut cfg, &mut base)?;
    cfg.finish()?;

    for &seed in &seeds {
        let started = Instant::now();
        let run = prepare_run_dir(&out, &cfg, seed)?;
        let mut config = base.clone();
        config.seed = seed;

        let trained = train_agent(&env, &config).map_err(CliError::from_core)?;

        let mut curve = CsvTable::new(&["step", "seed", "eval_return", "loss_mode", "env"]);
        for point in &trained.curve {
            curve.push_row(&[
                point.step.to_string(),
                seed.to_string(),
                fmt_f64(point.eval_return),
                loss.clone(),
                env.clone(),
            ]);
        }
        curve.write(&run.path.join("curve.csv"))?;
        save_policy(&run.path.join("model.bin"), &trained.policy, &env, &loss)?;

        let returns: Vec<f64> = trained.curve.iter().map(|p| p.eval_return).collect();
        let window = &returns[returns.len().saturating_sub(10)..];
        let (window_mean, _) = mean_std(window);
        write_summary(
            &run,
            &serde_json::json!({
                "command": "train-rl",
                "run_id": run.id,
                "config_hash": run.config_hash,
                "seed": seed,
                "env": env,
                "loss_mode": loss,
                "eval_points": returns.len(),
                "final_eval_return": returns.last().copied(),
                "final_window_mean": if window.is_empty() {
                    serde_json::Value::Null
                } else {
                    serde_json::Value::from(window_mean)
                },
                "wall_time_seconds": started.elapsed().as_secs_f64(),
            }),
        )?;
        println!(
            "run {}: env {env} loss {loss} seed {seed} final window mean {:.2}",
            run.id,
            if window.is_empty() { f64::NAN } else { window_mean }
        );
    }
    Ok(())
}
