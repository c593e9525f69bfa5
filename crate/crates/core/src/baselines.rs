//! Classical single-output predictors.

use nalgebra::{Matrix2x4, Matrix4, Matrix4x2, Vector2, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Predictor {
    ConstantVelocity,
    /// Ordinary least squares line in time over the whole past.
    Linear,
    /// Constant-velocity Kalman filter.
    Kalman {
        /// Process noise, m/s^2.
        sigma_a: f64,
        /// Measurement noise, m.
        sigma_z: f64,
        /// Sampling period, s.
        dt: f64,
    },
}

impl Predictor {
    pub fn kalman_default() -> Self {
        Predictor::Kalman {
            sigma_a: 1.0,
            sigma_z: 0.1,
            dt: 0.1,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Predictor::ConstantVelocity => "constant_velocity",
            Predictor::Linear => "linear",
            Predictor::Kalman { .. } => "kalman",
        }
    }

    /// Predicts `horizon` points following the last past point.
    pub fn predict(&self, past: &[Vec2], horizon: usize) -> Result<Vec<Vec2>> {
        if past.len() < 2 {
            return Err(Error::Precondition(format!("past needs at least 2 points, got {}", past.len())));
        }
        match *self {
            Predictor::ConstantVelocity => Ok(constant_velocity(past, horizon)),
            Predictor::Linear => Ok(linear(past, horizon)),
            Predictor::Kalman { sigma_a, sigma_z, dt } => {
                if !(sigma_a > 0.0 && sigma_z > 0.0 && dt > 0.0) {
                    return Err(Error::Config("Kalman noise and period must be positive".into()));
                }
                Ok(kalman(past, horizon, sigma_a, sigma_z, dt))
            }
        }
    }
}

fn constant_velocity(past: &[Vec2], horizon: usize) -> Vec<Vec2> {
    let last = past[past.len() - 1];
    let v = last - past[past.len() - 2];
    (1..=horizon).map(|k| last + v * k as f64).collect()
}

fn linear(past: &[Vec2], horizon: usize) -> Vec<Vec2> {
    let n = past.len() as f64;
    let t_mean = (n - 1.0) / 2.0;
    let mean = past.iter().fold(Vec2::ZERO, |a, &p| a + p) * (1.0 / n);
    let mut s_tt = 0.0;
    let mut s_tp = Vec2::ZERO;
    for (i, &p) in past.iter().enumerate() {
        let dt = i as f64 - t_mean;
        s_tt += dt * dt;
        s_tp = s_tp + (p - mean) * dt;
    }
    let slope = s_tp * (1.0 / s_tt);
    (1..=horizon)
        .map(|k| {
            let t = (past.len() - 1 + k) as f64;
            mean + slope * (t - t_mean)
        })
        .collect()
}

fn kalman(past: &[Vec2], horizon: usize, sigma_a: f64, sigma_z: f64, dt: f64) -> Vec<Vec2> {
    #[rustfmt::skip]
    let f = Matrix4::new(
        1.0, 0.0, dt, 0.0,
        0.0, 1.0, 0.0, dt,
        0.0, 0.0, 1.0, 0.0,
        0.0, 0.0, 0.0, 1.0,
    );
    // Discrete white-noise acceleration.
    let (q11, q13, q33) = (dt.powi(4) / 4.0, dt.powi(3) / 2.0, dt * dt);
    let qa = sigma_a * sigma_a;
    #[rustfmt::skip]
    let q = Matrix4::new(
        q11, 0.0, q13, 0.0,
        0.0, q11, 0.0, q13,
        q13, 0.0, q33, 0.0,
        0.0, q13, 0.0, q33,
    ) * qa;
    #[rustfmt::skip]
    let h = Matrix2x4::new(
        1.0, 0.0, 0.0, 0.0,
        0.0, 1.0, 0.0, 0.0,
    );
    let r = nalgebra::Matrix2::identity() * (sigma_z * sigma_z);

    let v0 = (past[1] - past[0]) * (1.0 / dt);
    let mut x = Vector4::new(past[1].x, past[1].y, v0.x, v0.y);
    let pv = 2.0 * sigma_z * sigma_z / (dt * dt);
    let mut p = Matrix4::from_diagonal(&Vector4::new(sigma_z * sigma_z, sigma_z * sigma_z, pv, pv));

    for z in &past[2..] {
        x = f * x;
        p = f * p * f.transpose() + q;
        let y = Vector2::new(z.x, z.y) - h * x;
        let s = h * p * h.transpose() + r;
        let Some(s_inv) = s.try_inverse() else { break };
        let k: Matrix4x2<f64> = p * h.transpose() * s_inv;
        x += k * y;
        p = (Matrix4::identity() - k * h) * p;
    }
    (0..horizon)
        .map(|_| {
            x = f * x;
            Vec2::new(x[0], x[1])
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn all() -> [Predictor; 3] {
        [Predictor::ConstantVelocity, Predictor::Linear, Predictor::kalman_default()]
    }

    #[test]
    fn straight_line_continues_exactly() {
        let past: Vec<Vec2> = (0..20).map(|i| Vec2::new(3.0 + 0.6 * i as f64, -1.0 + 0.8 * i as f64)).collect();
        for p in all() {
            let pred = p.predict(&past, 40).unwrap();
            assert_eq!(pred.len(), 40);
            let truth = Vec2::new(3.0 + 0.6 * 59.0, -1.0 + 0.8 * 59.0);
            assert!(pred[39].distance(truth) <= 1e-6, "{}: {:?}", p.name(), pred[39]);
        }
    }

    #[test]
    fn stationary_stays_put() {
        let past = vec![Vec2::new(4.0, 2.0); 20];
        for p in all() {
            for q in p.predict(&past, 40).unwrap() {
                assert!(q.distance(Vec2::new(4.0, 2.0)) < 1e-9, "{}", p.name());
            }
        }
    }

    #[test]
    fn needs_two_points() {
        for p in all() {
            assert!(p.predict(&[Vec2::ZERO], 5).is_err());
        }
        let bad = Predictor::Kalman {
            sigma_a: 0.0,
            sigma_z: 0.1,
            dt: 0.1,
        };
        assert!(bad.predict(&[Vec2::ZERO, Vec2::ZERO], 5).is_err());
    }

    #[test]
    fn tiny_measurement_noise_tracks_measurements() {
        let past: Vec<Vec2> = (0..20).map(|i| Vec2::new(i as f64, 0.0)).collect();
        let p = Predictor::Kalman {
            sigma_a: 1.0,
            sigma_z: 1e-6,
            dt: 0.1,
        };
        let cv = Predictor::ConstantVelocity.predict(&past, 40).unwrap();
        let k = p.predict(&past, 40).unwrap();
        for (a, b) in cv.iter().zip(&k) {
            assert!(a.distance(*b) < 1e-6);
        }
    }

    proptest! {
        #[test]
        fn rotation_equivariant(
            pts in proptest::collection::vec((-20.0f64..20.0, -20.0f64..20.0), 20),
            angle in -3.1f64..3.1,
            shift in (-50.0f64..50.0, -50.0f64..50.0),
        ) {
            let past: Vec<Vec2> = pts.iter().map(|&p| p.into()).collect();
            let moved: Vec<Vec2> = past.iter().map(|p| p.rotate(angle) + shift.into()).collect();
            for p in all() {
                let a = p.predict(&past, 40).unwrap();
                let b = p.predict(&moved, 40).unwrap();
                for (x, y) in a.iter().zip(&b) {
                    let tx = x.rotate(angle) + shift.into();
                    prop_assert!(tx.distance(*y) < 1e-6 * (1.0 + x.norm()), "{} {:?} {:?}", p.name(), tx, y);
                }
            }
        }
    }
}
