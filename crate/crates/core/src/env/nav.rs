use std::f64::consts::PI;

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use super::{Env, StepResult};
use crate::action::{ActionSpec, ContinuousSubaction, DiscreteSubaction, MixedAction};
use crate::error::{Error, Result};

/// Number of range readings in a nav observation.
pub const NAV_RAYS: usize = 24;

/// Point-to-point navigation in a square arena with rectangular obstacles.
///
/// Observation: `NAV_RAYS` ray lengths divided by the arena diagonal,
/// followed by the goal offset expressed in the robot frame. Action: linear
/// and angular velocity plus a two-way terminate flag.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NavConfig {
    /// The arena spans `[-h, h]²`.
    pub half_extent: f64,
    pub min_obstacles: usize,
    pub max_obstacles: usize,
    pub success_radius: f64,
    pub horizon: usize,
    pub dt: f64,
    pub max_linear: f64,
    pub max_angular: f64,
    pub min_goal_distance: f64,
    /// Imitation-loss weights for (linear, angular, terminate).
    pub loss_weights: [f64; 3],
}

impl Default for NavConfig {
    fn default() -> Self {
        Self {
            half_extent: 2.0,
            min_obstacles: 0,
            max_obstacles: 3,
            success_radius: 0.2,
            horizon: 50,
            dt: 0.2,
            max_linear: 1.0,
            max_angular: 2.0,
            min_goal_distance: 0.5,
            loss_weights: [1.0, 0.25, 1.0],
        }
    }
}

impl NavConfig {
    pub fn action_spec(&self) -> ActionSpec {
        ActionSpec {
            continuous: vec![
                ContinuousSubaction {
                    name: "linear_velocity".into(),
                    low: -self.max_linear,
                    high: self.max_linear,
                    weight: self.loss_weights[0],
                },
                ContinuousSubaction {
                    name: "angular_velocity".into(),
                    low: -self.max_angular,
                    high: self.max_angular,
                    weight: self.loss_weights[1],
                },
            ],
            discrete: vec![DiscreteSubaction {
                name: "terminate".into(),
                cardinality: 2,
                weight: self.loss_weights[2],
            }],
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = self.half_extent > 0.0
            && self.min_obstacles <= self.max_obstacles
            && self.success_radius > 0.0
            && self.horizon >= 1
            && self.dt > 0.0
            && self.max_linear > 0.0
            && self.max_angular > 0.0
            && self.min_goal_distance >= 0.0
            && self.min_goal_distance < self.half_extent * 2.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid nav config {self:?}")))
        }
    }
}

/// Axis-aligned rectangle `[x0, x1] × [y0, y1]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rect {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl Rect {
    fn contains(&self, x: f64, y: f64, margin: f64) -> bool {
        x >= self.x0 - margin && x <= self.x1 + margin && y >= self.y0 - margin && y <= self.y1 + margin
    }

    /// Distance along a unit ray to the first boundary hit, if any.
    fn ray_hit(&self, x: f64, y: f64, dx: f64, dy: f64) -> Option<f64> {
        let (mut t_enter, mut t_exit) = (f64::NEG_INFINITY, f64::INFINITY);
        for (p, d, lo, hi) in [(x, dx, self.x0, self.x1), (y, dy, self.y0, self.y1)] {
            if d.abs() < 1e-15 {
                if p < lo || p > hi {
                    return None;
                }
            } else {
                let (a, b) = ((lo - p) / d, (hi - p) / d);
                t_enter = t_enter.max(a.min(b));
                t_exit = t_exit.min(a.max(b));
            }
        }
        (t_exit >= t_enter.max(0.0)).then_some(t_enter.max(0.0))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NavState {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub goal: (f64, f64),
    pub obstacles: Vec<Rect>,
    pub steps: usize,
    pub done: bool,
}

pub struct NavEnv {
    config: NavConfig,
    spec: ActionSpec,
    state: NavState,
    total_steps: u64,
}

impl NavEnv {
    pub fn new(config: NavConfig) -> Result<Self> {
        config.validate()?;
        let spec = config.action_spec();
        Ok(Self {
            spec,
            state: NavState {
                x: 0.0,
                y: 0.0,
                heading: 0.0,
                goal: (config.half_extent / 2.0, 0.0),
                obstacles: Vec::new(),
                steps: 0,
                done: false,
            },
            config,
            total_steps: 0,
        })
    }

    pub fn config(&self) -> &NavConfig {
        &self.config
    }

    pub fn state(&self) -> &NavState {
        &self.state
    }

    /// Places the robot explicitly and returns the matching observation.
    pub fn set_state(&mut self, state: NavState) -> Vec<f64> {
        self.state = state;
        self.observe()
    }

    pub fn goal_distance(&self) -> f64 {
        (self.state.goal.0 - self.state.x).hypot(self.state.goal.1 - self.state.y)
    }

    fn diagonal(&self) -> f64 {
        2.0 * self.config.half_extent * 2f64.sqrt()
    }

    /// Unnormalized distance to the nearest wall or obstacle along `angle`.
    pub fn ray_length(&self, angle: f64) -> f64 {
        let (dx, dy) = (angle.cos(), angle.sin());
        let h = self.config.half_extent;
        let s = &self.state;
        let mut best = self.diagonal();
        for (p, d) in [(s.x, dx), (s.y, dy)] {
            if d > 1e-15 {
                best = best.min((h - p) / d);
            } else if d < -1e-15 {
                best = best.min((-h - p) / d);
            }
        }
        for r in &s.obstacles {
            if let Some(t) = r.ray_hit(s.x, s.y, dx, dy) {
                best = best.min(t);
            }
        }
        best.max(0.0)
    }

    pub fn observe(&self) -> Vec<f64> {
        let s = &self.state;
        let diag = self.diagonal();
        let mut obs = Vec::with_capacity(NAV_RAYS + 2);
        for i in 0..NAV_RAYS {
            let angle = s.heading + 2.0 * PI * i as f64 / NAV_RAYS as f64;
            obs.push(self.ray_length(angle) / diag);
        }
        let (gx, gy) = (s.goal.0 - s.x, s.goal.1 - s.y);
        let (c, sn) = (s.heading.cos(), s.heading.sin());
        obs.push(c * gx + sn * gy);
        obs.push(-sn * gx + c * gy);
        obs
    }

    fn blocked(&self, x: f64, y: f64, margin: f64) -> bool {
        self.state.obstacles.iter().any(|r| r.contains(x, y, margin))
    }

    fn free_point(&self, rng: &mut dyn RngCore) -> (f64, f64) {
        let lim = self.config.half_extent - 0.2;
        loop {
            let p = (rng.random_range(-lim..=lim), rng.random_range(-lim..=lim));
            if !self.blocked(p.0, p.1, 0.15) {
                return p;
            }
        }
    }
}

fn wrap_angle(a: f64) -> f64 {
    let mut a = (a + PI).rem_euclid(2.0 * PI) - PI;
    if a <= -PI {
        a += 2.0 * PI;
    }
    a
}

impl Env for NavEnv {
    fn observation_dim(&self) -> usize {
        NAV_RAYS + 2
    }

    fn action_spec(&self) -> &ActionSpec {
        &self.spec
    }

    fn horizon(&self) -> usize {
        self.config.horizon
    }

    fn reset(&mut self, rng: &mut dyn RngCore) -> Vec<f64> {
        let h = self.config.half_extent;
        let count = rng.random_range(self.config.min_obstacles..=self.config.max_obstacles);
        let obstacles = (0..count)
            .map(|_| {
                let (w, ht) = (rng.random_range(0.3..=0.8), rng.random_range(0.3..=0.8));
                let cx = rng.random_range(-h + w / 2.0..=h - w / 2.0);
                let cy = rng.random_range(-h + ht / 2.0..=h - ht / 2.0);
                Rect {
                    x0: cx - w / 2.0,
                    y0: cy - ht / 2.0,
                    x1: cx + w / 2.0,
                    y1: cy + ht / 2.0,
                }
            })
            .collect();
        self.state.obstacles = obstacles;
        let (x, y) = self.free_point(rng);
        let heading = rng.random_range(-PI..PI);
        let goal = loop {
            let g = self.free_point(rng);
            if (g.0 - x).hypot(g.1 - y) >= self.config.min_goal_distance {
                break g;
            }
        };
        self.state = NavState {
            x,
            y,
            heading,
            goal,
            obstacles: std::mem::take(&mut self.state.obstacles),
            steps: 0,
            done: false,
        };
        self.observe()
    }

    fn step(&mut self, action: &MixedAction) -> Result<StepResult> {
        if self.state.done {
            return Err(Error::Usage("step called on a finished nav episode".into()));
        }
        self.spec.conforms(action)?;
        self.total_steps += 1;
        self.state.steps += 1;
        let terminate = action.discrete[0] == 1;
        if !terminate {
            let c = &self.config;
            let v = action.continuous[0].clamp(-c.max_linear, c.max_linear);
            let w = action.continuous[1].clamp(-c.max_angular, c.max_angular);
            let h = c.half_extent;
            let s = &self.state;
            let nx = (s.x + v * s.heading.cos() * c.dt).clamp(-h, h);
            let ny = (s.y + v * s.heading.sin() * c.dt).clamp(-h, h);
            let heading = wrap_angle(s.heading + w * c.dt);
            if !self.blocked(nx, ny, 0.0) {
                self.state.x = nx;
                self.state.y = ny;
            }
            self.state.heading = heading;
        }
        let done = terminate || self.state.steps >= self.config.horizon;
        let reward = if done && self.goal_distance() <= self.config.success_radius {
            1.0
        } else {
            0.0
        };
        self.state.done = done;
        Ok(StepResult {
            observation: self.observe(),
            reward,
            done,
        })
    }

    fn total_steps(&self) -> u64 {
        self.total_steps
    }
}
