//! Two-link underactuated pendulum; torque on the elbow joint only.
//!
//! Equations of motion follow the standard textbook formulation; one control
//! tick integrates them with a single RK4 step of `DT` seconds, after which
//! angles wrap to [-pi, pi) and velocities clip to their bounds.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[cfg(not(feature = "std"))]
use crate::math::FloatExt;
use crate::Result;

use super::params::acrobot as p;
use super::{check_action, check_active, EnvState, Environment, StepResult};

#[derive(Clone, Debug)]
pub struct Acrobot {
    /// (theta1, theta2, dtheta1, dtheta2); angles measured from hanging down.
    state: [f64; 4],
    step_count: usize,
    finished: bool,
}

impl Acrobot {
    pub fn new() -> Self {
        Self {
            state: [0.0; 4],
            step_count: 0,
            finished: true,
        }
    }

    fn observation(&self) -> Vec<f64> {
        let [t1, t2, d1, d2] = self.state;
        vec![t1.cos(), t1.sin(), t2.cos(), t2.sin(), d1, d2]
    }

    /// Free-end height above the pivot exceeds one link length.
    fn at_goal(&self) -> bool {
        let [t1, t2, _, _] = self.state;
        -t1.cos() - (t1 + t2).cos() > 1.0
    }
}

impl Default for Acrobot {
    fn default() -> Self {
        Self::new()
    }
}

/// Angular accelerations for the state under the given elbow torque.
pub(super) fn dynamics(state: &[f64; 4], torque: f64) -> [f64; 4] {
    let (m1, m2) = (p::LINK_MASS_1, p::LINK_MASS_2);
    let l1 = p::LINK_LENGTH_1;
    let (lc1, lc2) = (p::LINK_COM_1, p::LINK_COM_2);
    let (i1, i2) = (p::LINK_MOI, p::LINK_MOI);
    let g = p::GRAVITY;
    let [t1, t2, dt1, dt2] = *state;

    let d1 = m1 * lc1 * lc1 + m2 * (l1 * l1 + lc2 * lc2 + 2.0 * l1 * lc2 * t2.cos()) + i1 + i2;
    let d2 = m2 * (lc2 * lc2 + l1 * lc2 * t2.cos()) + i2;
    let phi2 = m2 * lc2 * g * (t1 + t2 - core::f64::consts::FRAC_PI_2).cos();
    let phi1 = -m2 * l1 * lc2 * dt2 * dt2 * t2.sin()
        - 2.0 * m2 * l1 * lc2 * dt2 * dt1 * t2.sin()
        + (m1 * lc1 + m2 * l1) * g * (t1 - core::f64::consts::FRAC_PI_2).cos()
        + phi2;
    let ddt2 = (torque + (d2 / d1) * phi1 - m2 * l1 * lc2 * dt1 * dt1 * t2.sin() - phi2)
        / (m2 * lc2 * lc2 + i2 - d2 * d2 / d1);
    let ddt1 = -(d2 * ddt2 + phi1) / d1;
    [dt1, dt2, ddt1, ddt2]
}

/// One RK4 step of length `dt`.
fn rk4_step(state: &[f64; 4], torque: f64, dt: f64) -> [f64; 4] {
    let k1 = dynamics(state, torque);
    let k2 = dynamics(&advance(state, &k1, dt / 2.0), torque);
    let k3 = dynamics(&advance(state, &k2, dt / 2.0), torque);
    let k4 = dynamics(&advance(state, &k3, dt), torque);
    let mut out = *state;
    for i in 0..4 {
        out[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    out
}

fn advance(state: &[f64; 4], deriv: &[f64; 4], h: f64) -> [f64; 4] {
    let mut out = *state;
    for i in 0..4 {
        out[i] += h * deriv[i];
    }
    out
}

fn wrap_angle(mut x: f64) -> f64 {
    let span = 2.0 * core::f64::consts::PI;
    while x > core::f64::consts::PI {
        x -= span;
    }
    while x < -core::f64::consts::PI {
        x += span;
    }
    x
}

impl Environment for Acrobot {
    fn id(&self) -> &'static str {
        "acrobot"
    }

    fn num_actions(&self) -> usize {
        3
    }

    fn obs_dim(&self) -> usize {
        6
    }

    fn max_steps(&self) -> usize {
        p::MAX_STEPS
    }

    fn reset(&mut self, seed: u64) -> EnvState {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for v in &mut self.state {
            *v = rng.random_range(-p::INIT_BOUND..p::INIT_BOUND);
        }
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

        let torque = p::TORQUES[action];
        let mut next = rk4_step(&self.state, torque, p::DT);
        next[0] = wrap_angle(next[0]);
        next[1] = wrap_angle(next[1]);
        next[2] = next[2].clamp(-p::MAX_VEL_1, p::MAX_VEL_1);
        next[3] = next[3].clamp(-p::MAX_VEL_2, p::MAX_VEL_2);
        self.state = next;
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
    fn zero_torque_never_reaches_the_goal() {
        let mut env = Acrobot::new();
        let mut policy = |_: &[f64]| 1usize;
        let ret = episode_return(&mut env, &mut policy, 0).unwrap();
        assert_eq!(ret, -500.0);
    }

    #[test]
    fn observation_encodes_angles_consistently() {
        let mut env = Acrobot::new();
        env.reset(5);
        for i in 0..100 {
            let r = env.step(i % 3).unwrap();
            let o = &r.next_observation;
            assert!((o[0] * o[0] + o[1] * o[1] - 1.0).abs() < 1e-12);
            assert!((o[2] * o[2] + o[3] * o[3] - 1.0).abs() < 1e-12);
            assert!(o[4].abs() <= p::MAX_VEL_1);
            assert!(o[5].abs() <= p::MAX_VEL_2);
            // Goal condition restated from the observation alone.
            let height = -o[0] - (o[0] * o[2] - o[1] * o[3]);
            assert_eq!(r.terminated, height > 1.0);
            if r.done() {
                break;
            }
        }
    }

    /// Independent transcription of the equations of motion, integrated with
    /// many small Euler steps; one RK4 tick must land nearby.
    #[test]
    fn rk4_tick_matches_fine_euler_integration() {
        fn reference_dynamics(s: &[f64; 4], a: f64) -> [f64; 4] {
            let (t1, t2, v1, v2) = (s[0], s[1], s[2], s[3]);
            let g = 9.8;
            let d1 = 0.25 + (1.0 + 0.25 + cos_t2(t2)) + 2.0;
            let d2 = 0.25 + 0.5 * t2.cos() + 1.0;
            let phi2 = 0.5 * g * (t1 + t2 - core::f64::consts::FRAC_PI_2).cos();
            let phi1 = -0.5 * v2 * v2 * t2.sin() - v2 * v1 * t2.sin()
                + 1.5 * g * (t1 - core::f64::consts::FRAC_PI_2).cos()
                + phi2;
            let dd2 = (a + (d2 / d1) * phi1 - 0.5 * v1 * v1 * t2.sin() - phi2)
                / (0.25 + 1.0 - d2 * d2 / d1);
            let dd1 = -(d2 * dd2 + phi1) / d1;
            return [v1, v2, dd1, dd2];

            fn cos_t2(t2: f64) -> f64 {
                t2.cos()
            }
        }

        let start = [0.05, -0.08, 0.3, -0.2];
        let torque = 1.0;

        let substeps = 200_000;
        let h = p::DT / substeps as f64;
        let mut fine = start;
        for _ in 0..substeps {
            let d = reference_dynamics(&fine, torque);
            for i in 0..4 {
                fine[i] += h * d[i];
            }
        }

        let coarse = rk4_step(&start, torque, p::DT);
        for i in 0..4 {
            assert!(
                (coarse[i] - fine[i]).abs() < 2e-3,
                "component {i}: rk4 {} vs reference {}",
                coarse[i],
                fine[i]
            );
        }
    }

    #[test]
    fn terminal_step_still_pays_minus_one() {
        // Drive with a crude pumping policy until a goal is reached on some
        // seed, then check the final reward.
        for seed in 0..30 {
            let mut env = Acrobot::new();
            env.reset(seed);
            let mut obs = env.observation();
            for _ in 0..500 {
                let action = if obs[5] >= 0.0 { 2 } else { 0 };
                let r = env.step(action).unwrap();
                obs = r.next_observation;
                if r.terminated {
                    assert_eq!(r.reward, -1.0);
                    return;
                }
                if r.truncated {
                    break;
                }
            }
        }
        panic!("pumping policy never reached the goal on any seed");
    }
}
