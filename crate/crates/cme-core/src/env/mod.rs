//! Deterministic-seedable control environments.
//!
//! Dynamics follow the canonical published definitions; all constants live
//! in [`params`]. Randomness enters only at `reset`, so a (seed, action
//! sequence) pair reproduces a trajectory bit for bit.

mod acrobot;
mod cartpole;
mod mountain_car;
pub mod params;

pub use acrobot::Acrobot;
pub use cartpole::CartPole;
pub use mountain_car::MountainCar;

use alloc::boxed::Box;
use alloc::format;
use alloc::vec::Vec;

use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct EnvState {
    pub observation: Vec<f64>,
    pub step_count: usize,
    pub terminated: bool,
    pub truncated: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepResult {
    pub next_observation: Vec<f64>,
    pub reward: f64,
    pub terminated: bool,
    pub truncated: bool,
}

impl StepResult {
    pub fn done(&self) -> bool {
        self.terminated || self.truncated
    }
}

pub trait Environment {
    fn id(&self) -> &'static str;
    fn num_actions(&self) -> usize;
    fn obs_dim(&self) -> usize;
    fn max_steps(&self) -> usize;
    fn reset(&mut self, seed: u64) -> EnvState;
    /// Errors with a usage error if called after the episode has ended or
    /// with an out-of-range action.
    fn step(&mut self, action: usize) -> Result<StepResult>;
}

pub fn make_env(id: &str) -> Result<Box<dyn Environment>> {
    match id {
        "cartpole" => Ok(Box::new(CartPole::new())),
        "acrobot" => Ok(Box::new(Acrobot::new())),
        "mountaincar" => Ok(Box::new(MountainCar::new())),
        other => Err(Error::InvalidArgument(format!(
            "unknown environment {other:?}; expected one of cartpole, acrobot, mountaincar"
        ))),
    }
}

/// Plays one episode under the policy, returning the undiscounted return.
pub fn episode_return<E, P>(env: &mut E, policy: &mut P, seed: u64) -> Result<f64>
where
    E: Environment + ?Sized,
    P: FnMut(&[f64]) -> usize,
{
    let mut state = env.reset(seed);
    let mut total = 0.0;
    loop {
        let action = policy(&state.observation);
        let result = env.step(action)?;
        total += result.reward;
        if result.done() {
            return Ok(total);
        }
        state.observation = result.next_observation;
    }
}

/// Shared guard: episodes cannot continue after termination or truncation.
fn check_active(finished: bool, id: &str) -> Result<()> {
    if finished {
        return Err(Error::Usage(format!(
            "step on a finished {id} episode; call reset first"
        )));
    }
    Ok(())
}

/// Shared guard for discrete action ranges.
fn check_action(action: usize, num_actions: usize, id: &str) -> Result<()> {
    if action >= num_actions {
        return Err(Error::Usage(format!(
            "action {action} out of range for {id} with {num_actions} actions"
        )));
    }
    Ok(())
}
