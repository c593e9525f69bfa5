//! Trajectories, polar offsets and rigid frames.
//!
//! Angles are radians everywhere. Headings use the math convention
//! (counter-clockwise from +x); a positive turn `theta` is a left turn.
//! The vehicle frame has the vehicle facing +y.

use std::f64::consts::{FRAC_PI_2, PI};
use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default sampling rate of every trajectory in the toolkit.
pub const DEFAULT_RATE_HZ: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    /// Unit vector pointing along `heading`.
    pub fn from_heading(heading: f64) -> Self {
        let (s, c) = heading.sin_cos();
        Self { x: c, y: s }
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn norm_sq(self) -> f64 {
        self.x * self.x + self.y * self.y
    }

    pub fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    pub fn distance(self, o: Vec2) -> f64 {
        (self - o).norm()
    }

    pub fn heading(self) -> f64 {
        self.y.atan2(self.x)
    }

    /// Rotates counter-clockwise by `angle`.
    pub fn rotate(self, angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self {
            x: c * self.x - s * self.y,
            y: s * self.x + c * self.y,
        }
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, s: f64) -> Vec2 {
        Vec2::new(self.x * s, self.y * s)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

impl From<(f64, f64)> for Vec2 {
    fn from((x, y): (f64, f64)) -> Self {
        Vec2::new(x, y)
    }
}

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    let mut w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w -= 2.0 * PI;
    }
    // rem_euclid maps -pi to pi already; guard the float edge at exactly -pi.
    if w <= -PI {
        w += 2.0 * PI;
    }
    w
}

/// Timestamped 2-D point sequence at a fixed rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    points: Vec<Vec2>,
    rate_hz: f64,
}

impl Trajectory {
    pub fn new(points: Vec<Vec2>, rate_hz: f64) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::InvalidTrajectory(format!(
                "need at least 2 points, got {}",
                points.len()
            )));
        }
        if let Some(i) = points.iter().position(|p| !p.is_finite()) {
            return Err(Error::InvalidTrajectory(format!("non-finite point at index {i}")));
        }
        if !(rate_hz.is_finite() && rate_hz > 0.0) {
            return Err(Error::InvalidTrajectory(format!("rate must be positive, got {rate_hz}")));
        }
        Ok(Self { points, rate_hz })
    }

    /// Trajectory at the default 10 Hz rate.
    pub fn from_points(points: Vec<Vec2>) -> Result<Self> {
        Self::new(points, DEFAULT_RATE_HZ)
    }

    pub fn points(&self) -> &[Vec2] {
        &self.points
    }

    pub fn into_points(self) -> Vec<Vec2> {
        self.points
    }

    pub fn rate_hz(&self) -> f64 {
        self.rate_hz
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Pose at point 0, heading along the first non-degenerate segment.
    pub fn start_pose(&self) -> Pose {
        Pose::new(self.points[0], segment_headings(&self.points)[0])
    }

    pub fn arc_length(&self) -> f64 {
        self.points.windows(2).map(|w| w[0].distance(w[1])).sum()
    }

    /// Applies `f` to every point; the result keeps the same rate.
    pub fn map_points(&self, f: impl Fn(Vec2) -> Vec2) -> Trajectory {
        Trajectory {
            points: self.points.iter().map(|&p| f(p)).collect(),
            rate_hz: self.rate_hz,
        }
    }
}

/// Per-step motion increment in the vehicle frame.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PolarOffset {
    pub rho: f64,
    pub theta: f64,
}

impl PolarOffset {
    pub const fn new(rho: f64, theta: f64) -> Self {
        Self { rho, theta }
    }
}

/// World position plus heading. Also serves as a rigid frame whose local
/// +y axis points along `heading`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub position: Vec2,
    pub heading: f64,
}

impl Pose {
    pub fn new(position: Vec2, heading: f64) -> Self {
        Self {
            position,
            heading: wrap_angle(heading),
        }
    }

    /// World frame itself: origin at (0, 0), local +y equal to world +y.
    pub fn identity() -> Self {
        Self::new(Vec2::ZERO, FRAC_PI_2)
    }

    /// World point expressed in this frame (vehicle facing +y).
    pub fn to_local(&self, p: Vec2) -> Vec2 {
        (p - self.position).rotate(FRAC_PI_2 - self.heading)
    }

    /// Inverse of [`Pose::to_local`].
    pub fn to_world(&self, p: Vec2) -> Vec2 {
        p.rotate(self.heading - FRAC_PI_2) + self.position
    }

    /// Heading in this frame of a world heading.
    pub fn heading_to_local(&self, h: f64) -> f64 {
        wrap_angle(h + FRAC_PI_2 - self.heading)
    }

    pub fn heading_to_world(&self, h: f64) -> f64 {
        wrap_angle(h - FRAC_PI_2 + self.heading)
    }
}

/// Heading of each segment `k -> k+1`. Zero-length segments inherit the
/// previous heading; leading zero-length segments take the first
/// non-degenerate heading (or 0 for a fully stationary path).
pub fn segment_headings(points: &[Vec2]) -> Vec<f64> {
    let raw: Vec<Option<f64>> = points
        .windows(2)
        .map(|w| {
            let d = w[1] - w[0];
            (d.norm_sq() > 0.0).then(|| d.heading())
        })
        .collect();
    let first = raw.iter().flatten().next().copied().unwrap_or(0.0);
    let mut last = first;
    raw.into_iter()
        .map(|h| {
            if let Some(h) = h {
                last = h;
            }
            last
        })
        .collect()
}

/// Heading at every point: index k uses segment `k-1 -> k`, index 0 copies
/// segment `0 -> 1`.
pub fn point_headings(points: &[Vec2]) -> Vec<f64> {
    let seg = segment_headings(points);
    if seg.is_empty() {
        return vec![0.0; points.len()];
    }
    std::iter::once(seg[0]).chain(seg.iter().copied()).collect()
}

/// Polar offsets of `t` taking the first segment as heading reference:
/// `n` points give `n - 2` offsets.
pub fn to_offsets(t: &Trajectory) -> Result<Vec<PolarOffset>> {
    if t.len() < 3 {
        return Err(Error::Precondition(format!(
            "deriving the initial heading needs at least 3 points, got {}",
            t.len()
        )));
    }
    let all = offsets_with_headings(t.points(), None);
    Ok(all[1..].to_vec())
}

/// Polar offsets of every segment relative to a known initial heading:
/// `n` points give `n - 1` offsets, and
/// `from_offsets(Pose::new(t[0], initial_heading), ..)` reproduces `t`.
pub fn to_offsets_from(t: &Trajectory, initial_heading: f64) -> Vec<PolarOffset> {
    offsets_with_headings(t.points(), Some(initial_heading))
}

fn offsets_with_headings(points: &[Vec2], initial: Option<f64>) -> Vec<PolarOffset> {
    let headings = segment_headings(points);
    let mut prev = initial.unwrap_or(headings[0]);
    points
        .windows(2)
        .zip(headings)
        .map(|(w, h)| {
            let rho = w[0].distance(w[1]);
            // A zero-length segment keeps the running heading, so theta = 0.
            let h = if rho > 0.0 { h } else { prev };
            let off = PolarOffset::new(rho, wrap_angle(h - prev));
            prev = h;
            off
        })
        .collect()
}

/// Integrates offsets from `start`; returns `offs.len() + 1` points.
pub fn from_offsets(start: Pose, offs: &[PolarOffset]) -> Result<Trajectory> {
    if offs.is_empty() {
        return Err(Error::Precondition("no offsets to integrate".into()));
    }
    Trajectory::from_points(integrate_offsets(start, offs))
}

pub(crate) fn integrate_offsets(start: Pose, offs: &[PolarOffset]) -> Vec<Vec2> {
    let mut pts = Vec::with_capacity(offs.len() + 1);
    let mut pos = start.position;
    let mut heading = start.heading;
    pts.push(pos);
    for o in offs {
        heading += o.theta;
        pos = pos + Vec2::from_heading(heading) * o.rho;
        pts.push(pos);
    }
    pts
}

/// Rigidly moves `t` so that point `present_index` sits at the origin with
/// the vehicle heading +y. The returned pose maps the normalized frame back
/// to the input frame via [`Pose::to_world`].
pub fn normalize_heading_up(t: &Trajectory, present_index: usize) -> Result<(Trajectory, Pose)> {
    if present_index == 0 || present_index >= t.len() {
        return Err(Error::Precondition(format!(
            "present index {present_index} outside 1..{}",
            t.len()
        )));
    }
    let heading = segment_headings(&t.points()[..=present_index])[present_index - 1];
    let frame = Pose::new(t.points()[present_index], heading);
    Ok((t.map_points(|p| frame.to_local(p)), frame))
}

/// Drops offsets of near-still vehicles reporting sharp turns.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseFilter {
    pub rho_min: f64,
    /// Radians.
    pub theta_max: f64,
}

impl Default for NoiseFilter {
    fn default() -> Self {
        Self {
            rho_min: 0.005,
            theta_max: 0.5,
        }
    }
}

impl NoiseFilter {
    /// Same thresholds with `theta_max` read as degrees.
    pub fn with_theta_degrees(rho_min: f64, theta_max_deg: f64) -> Self {
        Self {
            rho_min,
            theta_max: theta_max_deg.to_radians(),
        }
    }

    /// Filter that keeps everything.
    pub fn disabled() -> Self {
        Self {
            rho_min: 0.0,
            theta_max: f64::INFINITY,
        }
    }

    pub fn rejects(&self, o: &PolarOffset) -> bool {
        o.rho < self.rho_min && o.theta.abs() > self.theta_max
    }
}

pub fn filter_noise(offs: &[PolarOffset], filter: &NoiseFilter) -> Vec<PolarOffset> {
    offs.iter().filter(|o| !filter.rejects(o)).copied().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn traj(pts: &[(f64, f64)]) -> Trajectory {
        Trajectory::from_points(pts.iter().map(|&p| p.into()).collect()).unwrap()
    }

    #[test]
    fn straight_line_has_zero_turn() {
        let offs = to_offsets(&traj(&[(0.0, 0.0), (0.0, 1.0), (0.0, 2.0)])).unwrap();
        assert_eq!(offs, vec![PolarOffset::new(1.0, 0.0)]);
    }

    #[test]
    fn right_turn_is_negative() {
        let offs = to_offsets(&traj(&[(0.0, 0.0), (0.0, 1.0), (1.0, 1.0)])).unwrap();
        assert_eq!(offs.len(), 1);
        assert_abs_diff_eq!(offs[0].rho, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(offs[0].theta, -FRAC_PI_2, epsilon = 1e-12);
    }

    #[test]
    fn too_short_for_derived_heading() {
        assert!(matches!(
            to_offsets(&traj(&[(0.0, 0.0), (0.0, 1.0)])),
            Err(Error::Precondition(_))
        ));
        // With a supplied heading two points are enough.
        assert_eq!(to_offsets_from(&traj(&[(0.0, 0.0), (0.0, 1.0)]), FRAC_PI_2).len(), 1);
    }

    #[test]
    fn duplicate_points_carry_heading() {
        let offs = to_offsets(&traj(&[(0.0, 0.0), (0.0, 1.0), (0.0, 1.0), (0.0, 2.0)])).unwrap();
        assert_eq!(offs, vec![PolarOffset::new(0.0, 0.0), PolarOffset::new(1.0, 0.0)]);
    }

    #[test]
    fn integrate_examples() {
        let up = Pose::new(Vec2::ZERO, FRAC_PI_2);
        let t = from_offsets(up, &[PolarOffset::new(1.0, 0.0); 2]).unwrap();
        for (p, e) in t.points().iter().zip([(0.0, 0.0), (0.0, 1.0), (0.0, 2.0)]) {
            assert_abs_diff_eq!(p.x, e.0, epsilon = 1e-12);
            assert_abs_diff_eq!(p.y, e.1, epsilon = 1e-12);
        }
        let t = from_offsets(up, &[PolarOffset::new(1.0, -FRAC_PI_2)]).unwrap();
        assert_abs_diff_eq!(t.points()[1].x, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(t.points()[1].y, 0.0, epsilon = 1e-12);
        assert!(from_offsets(up, &[]).is_err());
    }

    #[test]
    fn wrap_angle_range() {
        assert_eq!(wrap_angle(PI), PI);
        assert_eq!(wrap_angle(-PI), PI);
        assert_abs_diff_eq!(wrap_angle(3.0 * PI / 2.0), -FRAC_PI_2, epsilon = 1e-12);
        assert_abs_diff_eq!(wrap_angle(-5.0 * PI), PI, epsilon = 1e-12);
    }

    #[test]
    fn trajectory_validation() {
        assert!(Trajectory::from_points(vec![Vec2::ZERO]).is_err());
        assert!(Trajectory::from_points(vec![Vec2::ZERO, Vec2::new(f64::NAN, 0.0)]).is_err());
        assert!(Trajectory::new(vec![Vec2::ZERO, Vec2::ZERO], 0.0).is_err());
    }

    #[test]
    fn heading_up_identity_and_rotation() {
        let t = traj(&[(0.0, -2.0), (0.0, -1.0), (0.0, 0.0), (0.0, 1.0)]);
        let (n, pose) = normalize_heading_up(&t, 2).unwrap();
        for (a, b) in n.points().iter().zip(t.points()) {
            assert_abs_diff_eq!(a.x, b.x, epsilon = 1e-12);
            assert_abs_diff_eq!(a.y, b.y, epsilon = 1e-12);
        }
        assert_abs_diff_eq!(pose.heading, FRAC_PI_2, epsilon = 1e-12);

        // Heading +x becomes +y; inverse recovers the input.
        let t = traj(&[(3.0, 5.0), (4.0, 5.0), (5.0, 5.0)]);
        let (n, pose) = normalize_heading_up(&t, 1).unwrap();
        assert_abs_diff_eq!(n.points()[1].norm(), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(n.points()[2].x, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(n.points()[2].y, 1.0, epsilon = 1e-12);
        for (a, b) in n.points().iter().zip(t.points()) {
            let back = pose.to_world(*a);
            assert_abs_diff_eq!(back.x, b.x, epsilon = 1e-9);
            assert_abs_diff_eq!(back.y, b.y, epsilon = 1e-9);
        }

        // Driving along -y: rotated by 180 degrees, the past lies below.
        let t = traj(&[(0.0, 2.0), (0.0, 1.0), (0.0, 0.0)]);
        let (n, _) = normalize_heading_up(&t, 2).unwrap();
        assert_abs_diff_eq!(n.points()[0].y, -2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(n.points()[0].x, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn heading_up_degenerate_present_segment() {
        let t = traj(&[(0.0, 0.0), (1.0, 0.0), (1.0, 0.0)]);
        let (n, pose) = normalize_heading_up(&t, 2).unwrap();
        assert_abs_diff_eq!(pose.heading, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(n.points()[0].y, -1.0, epsilon = 1e-12);
        assert!(normalize_heading_up(&t, 0).is_err());
        assert!(normalize_heading_up(&t, 3).is_err());
    }

    #[test]
    fn noise_filter_needs_both_conditions() {
        let f = NoiseFilter::default();
        let offs = [
            PolarOffset::new(0.004, 0.6),
            PolarOffset::new(1.0, 0.6),
            PolarOffset::new(0.004, 0.1),
            PolarOffset::new(0.001, -0.7),
        ];
        assert_eq!(
            filter_noise(&offs, &f),
            vec![PolarOffset::new(1.0, 0.6), PolarOffset::new(0.004, 0.1)]
        );
        assert!(filter_noise(&[], &f).is_empty());
        let deg = NoiseFilter::with_theta_degrees(0.005, 0.5);
        assert!(deg.rejects(&PolarOffset::new(0.001, 0.01)));
        assert!(!NoiseFilter::disabled().rejects(&PolarOffset::new(0.0, PI)));
    }

    fn arb_traj() -> impl Strategy<Value = Trajectory> {
        proptest::collection::vec((-50.0f64..50.0, -50.0f64..50.0), 3..40)
            .prop_map(|pts| traj(&pts))
    }

    proptest! {
        #[test]
        fn round_trip(t in arb_traj()) {
            let start = t.start_pose();
            let back = from_offsets(start, &to_offsets_from(&t, start.heading)).unwrap();
            for (a, b) in back.points().iter().zip(t.points()) {
                prop_assert!((a.x - b.x).abs() < 1e-9 && (a.y - b.y).abs() < 1e-9);
            }
        }

        #[test]
        fn rotation_invariant(t in arb_traj(), angle in -PI..PI, dx in -10.0f64..10.0) {
            let moved = t.map_points(|p| p.rotate(angle) + Vec2::new(dx, -dx));
            let a = to_offsets(&t).unwrap();
            let b = to_offsets(&moved).unwrap();
            for (o, r) in a.iter().zip(&b) {
                prop_assert!((o.rho - r.rho).abs() < 1e-9);
                prop_assert!(wrap_angle(o.theta - r.theta).abs() < 1e-9);
                prop_assert!(o.theta > -PI && o.theta <= PI && o.rho >= 0.0);
            }
        }

        #[test]
        fn heading_up_places_present_at_origin(t in arb_traj(), idx in 1usize..3) {
            let (n, _) = normalize_heading_up(&t, idx).unwrap();
            let p = n.points()[idx];
            prop_assert!(p.norm() < 1e-9);
            let h = segment_headings(&n.points()[..=idx])[idx - 1];
            prop_assert!(wrap_angle(h - FRAC_PI_2).abs() < 1e-9);
        }
    }
}
