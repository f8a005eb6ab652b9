//! Underpowered car in a valley; reaching the right hilltop ends the episode.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[cfg(not(feature = "std"))]
use crate::math::FloatExt;
use crate::Result;

use super::params::mountain_car as p;
use super::{check_action, check_active, EnvState, Environment, StepResult};

#[derive(Clone, Debug)]
pub struct MountainCar {
    position: f64,
    velocity: f64,
    step_count: usize,
    finished: bool,
}

impl MountainCar {
    pub fn new() -> Self {
        Self {
            position: 0.0,
            velocity: 0.0,
            step_count: 0,
            finished: true,
        }
    }

    fn observation(&self) -> Vec<f64> {
        vec![self.position, self.velocity]
    }

    fn at_goal(&self) -> bool {
        self.position >= p::GOAL_POSITION && self.velocity >= p::GOAL_VELOCITY
    }
}

impl Default for MountainCar {
    fn default() -> Self {
        Self::new()
    }
}

impl Environment for MountainCar {
    fn id(&self) -> &'static str {
        "mountaincar"
    }

    fn num_actions(&self) -> usize {
        3
    }

    fn obs_dim(&self) -> usize {
        2
    }

    fn max_steps(&self) -> usize {
        p::MAX_STEPS
    }

    fn reset(&mut self, seed: u64) -> EnvState {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.position = rng.random_range(p::INIT_POSITION_LOW..p::INIT_POSITION_HIGH);
        self.velocity = 0.0;
        self.step_count = 0;
        self.finished = false;
        EnvState {
            observation: self.observation(),
            step_count: 0,
            terminated: false,
            truncated: false,
        }
    }

    fn step(&mut self, action: usize) -> Result<StepResult> {
        check_active(self.finished, self.id())?;
        check_action(action, self.num_actions(), self.id())?;

        self.velocity += (action as f64 - 1.0) * p::FORCE
            + (3.0 * self.position).cos() * (-p::GRAVITY);
        self.velocity = self.velocity.clamp(-p::MAX_SPEED, p::MAX_SPEED);
        self.position += self.velocity;
        self.position = self.position.clamp(p::MIN_POSITION, p::MAX_POSITION);
        // The left wall is inelastic.
        if self.position == p::MIN_POSITION && self.velocity < 0.0 {
            self.velocity = 0.0;
        }
        self.step_count += 1;

        let terminated = self.at_goal();
        let truncated = self.step_count >= p::MAX_STEPS;
        self.finished = terminated || truncated;
        Ok(StepResult {
            next_observation: self.observation(),
            reward: -1.0,
            terminated,
            truncated,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::episode_return;

    #[test]
    fn initial_position_is_in_the_valley() {
        let mut env = MountainCar::new();
        for seed in 0..20 {
            let state = env.reset(seed);
            assert!((-0.6..-0.4).contains(&state.observation[0]));
            assert_eq!(state.observation[1], 0.0);
        }
    }

    /// Full throttle right from rest cannot climb the hill directly.
    #[test]
    fn pushing_right_forever_fails_without_momentum() {
        let mut env = MountainCar::new();
        let mut policy = |_: &[f64]| 2usize;
        let ret = episode_return(&mut env, &mut policy, 0).unwrap();
        assert_eq!(ret, -200.0);
    }

    /// Pushing along the velocity pumps energy and reaches the goal.
    #[test]
    fn energy_pumping_reaches_the_goal() {
        let mut env = MountainCar::new();
        for seed in 0..5 {
            let mut policy =
                |obs: &[f64]| if obs[1] >= 0.0 { 2usize } else { 0usize };
            let ret = episode_return(&mut env, &mut policy, seed).unwrap();
            assert!(ret > -200.0, "seed {seed} never reached the goal: {ret}");
        }
    }

    #[test]
    fn left_wall_pins_the_car_inside_bounds() {
        let mut env = MountainCar::new();
        env.reset(0);
        for _ in 0..200 {
            let r = env.step(0).unwrap();
            assert!(r.next_observation[0] >= p::MIN_POSITION);
            assert!(r.next_observation[1].abs() <= p::MAX_SPEED);
            if r.next_observation[0] == p::MIN_POSITION {
                assert!(r.next_observation[1] >= 0.0, "wall failed to stop the car");
            }
            if r.done() {
                assert!(r.truncated);
                break;
            }
        }
    }

    /// One hand-checked tick from a known state.
    #[test]
    fn single_step_matches_hand_computation() {
        let mut env = MountainCar::new();
        env.reset(0);
        env.position = -0.5;
        env.velocity = 0.0;
        let r = env.step(2).unwrap();
        let v = 0.001 + (-1.5_f64).cos() * (-0.0025);
        assert_eq!(r.next_observation[1], v);
        assert_eq!(r.next_observation[0], -0.5 + v);
    }
}
