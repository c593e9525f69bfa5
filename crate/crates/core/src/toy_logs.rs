//! Kinematic driving logs used when no recorded split is at hand: demos,
//! tests, and smoke runs of the full pipeline.
//!
//! Each log follows a bicycle-like model with a smoothly varying speed and
//! piecewise curvature episodes (straight, gentle curve, sharp turn), with
//! a little position jitter and the occasional stopped vehicle.

use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use crate::chain::{estimate, ChainConfig, MarkovChain};
use crate::error::Result;
use crate::geometry::{Trajectory, Vec2, DEFAULT_RATE_HZ};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToyLogConfig {
    pub count: usize,
    /// Points per log.
    pub length: usize,
    pub min_speed: f64,
    pub max_speed: f64,
    /// Largest curvature magnitude in 1/m.
    pub max_curvature: f64,
    /// Fraction of logs that belong to a stopped vehicle.
    pub stopped_fraction: f64,
    /// Standard deviation of the position jitter in meters.
    pub jitter: f64,
}

impl Default for ToyLogConfig {
    fn default() -> Self {
        Self {
            count: 300,
            length: 60,
            min_speed: 3.0,
            max_speed: 14.0,
            max_curvature: 1.0 / 12.0,
            stopped_fraction: 0.05,
            jitter: 0.01,
        }
    }
}

pub fn generate(cfg: &ToyLogConfig, seed: u64) -> Vec<Trajectory> {
    let mut rng = rng::stream(seed, "toy-logs");
    let jitter = Normal::new(0.0, cfg.jitter.max(1e-12)).expect("finite jitter");
    let dt = 1.0 / DEFAULT_RATE_HZ;
    (0..cfg.count)
        .map(|_| {
            let stopped = rng.random::<f64>() < cfg.stopped_fraction;
            let mut pos = Vec2::new(rng.random_range(-100.0..100.0), rng.random_range(-100.0..100.0));
            let mut heading = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
            let mut speed = if stopped {
                0.0
            } else {
                rng.random_range(cfg.min_speed..cfg.max_speed)
            };
            let mut accel = 0.0;
            let mut curvature = 0.0;
            let mut target_curvature = 0.0;
            let mut pts = Vec::with_capacity(cfg.length);
            for _ in 0..cfg.length {
                pts.push(pos + Vec2::new(jitter.sample(&mut rng), jitter.sample(&mut rng)));
                if rng.random::<f64>() < 0.04 {
                    target_curvature = match rng.random_range(0..4) {
                        0 | 1 => 0.0,
                        2 => rng.random_range(-0.3..0.3) * cfg.max_curvature,
                        _ => {
                            let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                            sign * rng.random_range(0.6..1.0) * cfg.max_curvature
                        }
                    };
                }
                curvature += 0.2 * (target_curvature - curvature);
                if !stopped {
                    accel = 0.9 * accel + rng.random_range(-0.3..0.3);
                    speed = (speed + accel * dt).clamp(cfg.min_speed * 0.5, cfg.max_speed);
                    // Slow down in sharp turns.
                    let cap = (3.0 / curvature.abs().max(1e-6)).sqrt();
                    speed = speed.min(cap.max(cfg.min_speed * 0.5));
                }
                heading += speed * dt * curvature;
                pos = pos + Vec2::from_heading(heading) * (speed * dt);
            }
            Trajectory::from_points(pts).expect("finite toy log")
        })
        .collect()
}

/// Chain estimated from default toy logs; handy for demos and tests.
pub fn toy_chain(cfg: &ChainConfig, seed: u64) -> Result<MarkovChain> {
    estimate(&generate(&ToyLogConfig::default(), seed), cfg)
}
