//! Physical constants for every environment, collected for auditability.

pub mod cartpole {
    pub const GRAVITY: f64 = 9.8;
    pub const MASS_CART: f64 = 1.0;
    pub const MASS_POLE: f64 = 0.1;
    pub const TOTAL_MASS: f64 = MASS_CART + MASS_POLE;
    /// Half the pole length.
    pub const LENGTH: f64 = 0.5;
    pub const POLE_MASS_LENGTH: f64 = MASS_POLE * LENGTH;
    pub const FORCE_MAG: f64 = 10.0;
    /// Euler integration step, seconds.
    pub const TAU: f64 = 0.02;
    pub const X_THRESHOLD: f64 = 2.4;
    /// 12 degrees.
    pub const THETA_THRESHOLD: f64 = 12.0 * core::f64::consts::PI / 180.0;
    pub const MAX_STEPS: usize = 500;
    pub const INIT_BOUND: f64 = 0.05;
}

pub mod mountain_car {
    pub const MIN_POSITION: f64 = -1.2;
    pub const MAX_POSITION: f64 = 0.6;
    pub const MAX_SPEED: f64 = 0.07;
    pub const GOAL_POSITION: f64 = 0.5;
    pub const GOAL_VELOCITY: f64 = 0.0;
    pub const FORCE: f64 = 0.001;
    pub const GRAVITY: f64 = 0.0025;
    pub const MAX_STEPS: usize = 200;
    pub const INIT_POSITION_LOW: f64 = -0.6;
    pub const INIT_POSITION_HIGH: f64 = -0.4;
}

pub mod acrobot {
    /// RK4 integration step, seconds.
    pub const DT: f64 = 0.2;
    pub const LINK_LENGTH_1: f64 = 1.0;
    pub const LINK_MASS_1: f64 = 1.0;
    pub const LINK_MASS_2: f64 = 1.0;
    /// Center-of-mass positions along each link.
    pub const LINK_COM_1: f64 = 0.5;
    pub const LINK_COM_2: f64 = 0.5;
    pub const LINK_MOI: f64 = 1.0;
    pub const GRAVITY: f64 = 9.8;
    pub const MAX_VEL_1: f64 = 4.0 * core::f64::consts::PI;
    pub const MAX_VEL_2: f64 = 9.0 * core::f64::consts::PI;
    /// Torques indexed by action.
    pub const TORQUES: [f64; 3] = [-1.0, 0.0, 1.0];
    pub const MAX_STEPS: usize = 500;
    pub const INIT_BOUND: f64 = 0.1;
}
