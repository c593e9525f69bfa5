//! Semantic context maps grown around chain walks.
//!
//! A scene is a square working canvas centered on the vehicle's present
//! position. Roads are thick strokes along sampled paths; sidewalks are
//! bands along the road edges. Pixel centers sit at integer pixel
//! coordinates, and the map center `(W/2, H/2)` is the world position of
//! the map's origin pose.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_6, PI};

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::chain::{ChainWalker, MarkovChain};
use crate::error::{Error, Result};
use crate::geometry::{integrate_offsets, point_headings, to_offsets_from, Pose, Trajectory, Vec2};
use crate::rng::{self, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum Class {
    Background = 0,
    Road = 1,
    Sidewalk = 2,
}

impl Class {
    pub const COUNT: usize = 3;

    pub fn from_u8(v: u8) -> Option<Class> {
        match v {
            0 => Some(Class::Background),
            1 => Some(Class::Road),
            2 => Some(Class::Sidewalk),
            _ => None,
        }
    }

    fn rank(self) -> u8 {
        match self {
            Class::Background => 0,
            Class::Sidewalk => 1,
            Class::Road => 2,
        }
    }
}

/// H x W grid of class ids.
#[derive(Debug, Clone, PartialEq)]
pub struct SemanticMap {
    pub width: usize,
    pub height: usize,
    /// Meters per pixel.
    pub resolution: f64,
    pub classes: Vec<u8>,
    /// World pose of the map center; image "up" is the pose heading.
    pub origin: Pose,
}

impl SemanticMap {
    pub fn new(width: usize, height: usize, resolution: f64, origin: Pose) -> Result<Self> {
        if !(resolution.is_finite() && resolution > 0.0) {
            return Err(Error::Config(format!("resolution must be positive, got {resolution}")));
        }
        Ok(Self {
            width,
            height,
            resolution,
            classes: vec![Class::Background as u8; width * height],
            origin,
        })
    }

    /// Zero-sized placeholder for samples without context.
    pub fn empty() -> Self {
        Self {
            width: 0,
            height: 0,
            resolution: 0.5,
            classes: Vec::new(),
            origin: Pose::identity(),
        }
    }

    pub fn get(&self, col: usize, row: usize) -> Class {
        Class::from_u8(self.classes[row * self.width + col]).unwrap_or(Class::Background)
    }

    pub fn set(&mut self, col: usize, row: usize, c: Class) {
        self.classes[row * self.width + col] = c as u8;
    }

    /// Labels a pixel respecting road > sidewalk > background.
    pub fn paint(&mut self, col: usize, row: usize, c: Class) {
        let i = row * self.width + col;
        let cur = Class::from_u8(self.classes[i]).unwrap_or(Class::Background);
        if c.rank() > cur.rank() {
            self.classes[i] = c as u8;
        }
    }

    pub fn center_pixel(&self) -> (usize, usize) {
        (self.width / 2, self.height / 2)
    }

    /// Continuous pixel coordinates of a world point (pixel centers are at
    /// integer coordinates).
    pub fn to_pixel(&self, world: Vec2) -> Vec2 {
        let l = self.origin.to_local(world);
        Vec2::new(
            l.x / self.resolution + (self.width / 2) as f64,
            (self.height / 2) as f64 - l.y / self.resolution,
        )
    }

    pub fn pixel_to_world(&self, px: Vec2) -> Vec2 {
        let l = Vec2::new(
            (px.x - (self.width / 2) as f64) * self.resolution,
            ((self.height / 2) as f64 - px.y) * self.resolution,
        );
        self.origin.to_world(l)
    }

    /// Pixel containing a world point, if inside the map.
    pub fn pixel_of(&self, world: Vec2) -> Option<(usize, usize)> {
        let p = self.to_pixel(world);
        let (c, r) = (p.x.round(), p.y.round());
        (c >= 0.0 && r >= 0.0 && (c as usize) < self.width && (r as usize) < self.height)
            .then_some((c as usize, r as usize))
    }

    pub fn class_at(&self, world: Vec2) -> Option<Class> {
        self.pixel_of(world).map(|(c, r)| self.get(c, r))
    }

    pub fn count(&self, c: Class) -> usize {
        self.classes.iter().filter(|&&v| v == c as u8).count()
    }

    /// Per-pixel one-hot encoding in `H x W x 3` order.
    pub fn one_hot(&self) -> Vec<u8> {
        let mut out = vec![0u8; self.classes.len() * Class::COUNT];
        for (i, &c) in self.classes.iter().enumerate() {
            out[i * Class::COUNT + (c as usize).min(Class::COUNT - 1)] = 1;
        }
        out
    }

    fn pixel_path(&self, path: &[Vec2]) -> Vec<Vec2> {
        path.iter().map(|&p| self.to_pixel(p)).collect()
    }

    fn contains_world(&self, p: Vec2) -> bool {
        self.pixel_of(p).is_some()
    }
}

// Inline replacements for f64::floor/ceil, which compile to libm calls on
// baseline x86-64. Saturating for out-of-range input.
fn floor_i(x: f64) -> i64 {
    let i = x as i64;
    i - ((i as f64) > x) as i64
}

fn ceil_i(x: f64) -> i64 {
    let i = x as i64;
    i + ((i as f64) < x) as i64
}

/// Visits, as inclusive column spans per row, every pixel whose center lies
/// within `radius` pixels of segment `a -> b` (all in pixel coordinates),
/// clipped to `width x height`.
fn for_each_capsule_span(
    a: Vec2,
    b: Vec2,
    radius: f64,
    width: usize,
    height: usize,
    mut f: impl FnMut(usize, usize, usize),
) {
    if width == 0 || height == 0 {
        return;
    }
    let r = radius + 1e-9;
    let d = b - a;
    let len_sq = d.norm_sq();
    let len = len_sq.sqrt();
    let along = (d.x != 0.0).then(|| (d.y / d.x, len_sq / d.x));
    let across = (d.y != 0.0).then(|| (d.x / d.y, r * len / d.y));
    let row_lo = ceil_i(a.y.min(b.y) - r).max(0);
    let row_hi = floor_i(a.y.max(b.y) + r).min(height as i64 - 1);
    if row_lo > row_hi {
        return;
    }
    for row in row_lo as usize..=row_hi as usize {
        let y = row as f64;
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for c in [a, b] {
            let dy = y - c.y;
            if dy * dy <= r * r {
                let s = (r * r - dy * dy).sqrt();
                lo = lo.min(c.x - s);
                hi = hi.max(c.x + s);
            }
        }
        if len_sq > 0.0 {
            // t = x - a.x; constraints: 0 <= t*dx + dy*d.y <= len^2 and
            // |d.x*dy - d.y*t| <= r*len. Both bounds are affine in dy.
            let dy = y - a.y;
            let (mut l, mut h) = (f64::NEG_INFINITY, f64::INFINITY);
            if let Some((k, w)) = along {
                let (p, q) = (-dy * k, -dy * k + w);
                l = l.max(p.min(q));
                h = h.min(p.max(q));
            } else if dy * d.y < 0.0 || dy * d.y > len_sq {
                l = f64::INFINITY;
            }
            if let Some((k, w)) = across {
                let (p, q) = (dy * k - w, dy * k + w);
                l = l.max(p.min(q));
                h = h.min(p.max(q));
            } else if (d.x * dy).abs() > r * len {
                l = f64::INFINITY;
            }
            if l <= h {
                lo = lo.min(a.x + l);
                hi = hi.max(a.x + h);
            }
        }
        if lo > hi {
            continue;
        }
        let c_lo = ceil_i(lo).max(0);
        let c_hi = floor_i(hi).min(width as i64 - 1);
        if c_lo > c_hi {
            continue;
        }
        f(row, c_lo as usize, c_hi as usize);
    }
}

/// Rasterized strokes follow the input polyline to within this many pixels.
const STROKE_TOLERANCE_PX: f64 = 0.02;
const MAX_MERGED_POINTS: usize = 256;

fn point_segment_distance(p: Vec2, a: Vec2, b: Vec2) -> f64 {
    let d = b - a;
    let len_sq = d.norm_sq();
    let t = if len_sq == 0.0 {
        0.0
    } else {
        ((p - a).dot(d) / len_sq).clamp(0.0, 1.0)
    };
    p.distance(a + d * t)
}

/// Drops points lying within `eps` of the segment that replaces them, so
/// densely sampled slow walks do not redraw the same pixels many times.
fn simplify_polyline(px: &[Vec2], eps: f64) -> Vec<Vec2> {
    if px.len() <= 2 {
        return px.to_vec();
    }
    let mut out = vec![px[0]];
    let mut i = 0;
    while i + 1 < px.len() {
        let mut j = i + 1;
        while j + 1 < px.len()
            && j + 1 - i <= MAX_MERGED_POINTS
            && px[i + 1..=j].iter().all(|&q| point_segment_distance(q, px[i], px[j + 1]) <= eps)
        {
            j += 1;
        }
        out.push(px[j]);
        i = j;
    }
    out
}

const JITTER_SEGMENT_M: f64 = 2.0;

fn subdivide(px: &[Vec2], max_len: f64) -> Vec<Vec2> {
    let mut out = px[..px.len().min(1)].to_vec();
    for w in px.windows(2) {
        let n = (w[0].distance(w[1]) / max_len).ceil().max(1.0) as usize;
        out.extend((1..=n).map(|k| w[0] + (w[1] - w[0]) * (k as f64 / n as f64)));
    }
    out
}

fn for_each_stroke_span(px: &[Vec2], radius: f64, width: usize, height: usize, mut f: impl FnMut(usize, usize, usize)) {
    if px.len() == 1 {
        for_each_capsule_span(px[0], px[0], radius, width, height, &mut f);
    }
    for w in px.windows(2) {
        for_each_capsule_span(w[0], w[1], radius, width, height, &mut f);
    }
}

/// Labels as road every pixel whose center lies within `width / 2` meters
/// of the polyline.
pub fn rasterize_road(map: &mut SemanticMap, path: &Trajectory, width: f64) -> Result<()> {
    if width.is_nan() || width <= 0.0 {
        return Err(Error::Precondition(format!("road width must be positive, got {width}")));
    }
    let px = simplify_polyline(&map.pixel_path(path.points()), STROKE_TOLERANCE_PX);
    let radius = width / 2.0 / map.resolution;
    let (w, h) = (map.width, map.height);
    let mut touched = 0usize;
    // Road outranks every other class, so painting is a plain fill.
    for_each_stroke_span(&px, radius, w, h, |r, c0, c1| {
        map.classes[r * w + c0..=r * w + c1].fill(Class::Road as u8);
        touched += 1;
    });
    if touched == 0 {
        log::debug!("road stroke lies entirely outside the canvas");
    }
    Ok(())
}

/// Smoothly varying sidewalk width along the arc length of a path.
struct SidewalkProfile {
    step: f64,
    knots: Vec<f64>,
}

impl SidewalkProfile {
    const KNOT_SPACING_M: f64 = 4.0;

    fn new(length: f64, sidewalk_width: f64, rng: &mut Rng) -> Self {
        let n = (length / Self::KNOT_SPACING_M).ceil() as usize + 2;
        Self {
            step: Self::KNOT_SPACING_M,
            knots: (0..n).map(|_| sidewalk_width * rng.random_range(0.3..=1.0)).collect(),
        }
    }

    fn at(&self, s: f64) -> f64 {
        let u = (s / self.step).max(0.0);
        let i = (u.floor() as usize).min(self.knots.len() - 2);
        let f = (u - i as f64).clamp(0.0, 1.0);
        let w = 0.5 - 0.5 * (PI * f).cos();
        self.knots[i] * (1.0 - w) + self.knots[i + 1] * w
    }
}

/// Labels as sidewalk (unless already road) the pixels whose distance to
/// the polyline falls in `(road_width/2, road_width/2 + w_s]`. With jitter
/// `w_s` varies smoothly along the path within `[0.3, 1] * sidewalk_width`.
pub fn add_sidewalks(
    map: &mut SemanticMap,
    path: &Trajectory,
    road_width: f64,
    sidewalk_width: f64,
    jitter: bool,
    seed: u64,
) -> Result<()> {
    sidewalk_band(map, path, road_width, sidewalk_width, jitter, seed, true)
}

/// Like [`add_sidewalks`] for a road that is already rasterized: the road
/// core is road-labeled, so the band needs no separate core pass.
fn add_sidewalks_painted(
    map: &mut SemanticMap,
    path: &Trajectory,
    road_width: f64,
    sidewalk_width: f64,
    jitter: bool,
    seed: u64,
) -> Result<()> {
    sidewalk_band(map, path, road_width, sidewalk_width, jitter, seed, false)
}

fn sidewalk_band(
    map: &mut SemanticMap,
    path: &Trajectory,
    road_width: f64,
    sidewalk_width: f64,
    jitter: bool,
    seed: u64,
    exclude_core: bool,
) -> Result<()> {
    if !(road_width > 0.0 && sidewalk_width > 0.0) {
        return Err(Error::Precondition("road and sidewalk widths must be positive".into()));
    }
    let res = map.resolution;
    let mut px = simplify_polyline(&map.pixel_path(path.points()), STROKE_TOLERANCE_PX);
    if jitter {
        // The width profile is sampled per segment; keep segments short.
        px = subdivide(&px, JITTER_SEGMENT_M / res);
    }
    let inner = road_width / 2.0 / res;
    let profile = jitter.then(|| SidewalkProfile::new(path.arc_length(), sidewalk_width, &mut rng::stream(seed, "sidewalk")));

    // Bounding box of the outer band, clipped to the map.
    let pad = inner + sidewalk_width / res + 1.0;
    let (mut x0, mut y0, mut x1, mut y1) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for p in &px {
        x0 = x0.min(p.x);
        y0 = y0.min(p.y);
        x1 = x1.max(p.x);
        y1 = y1.max(p.y);
    }
    let bx0 = (x0 - pad).floor().max(0.0) as usize;
    let by0 = (y0 - pad).floor().max(0.0) as usize;
    let bx1 = ((x1 + pad).ceil().max(0.0) as usize).min(map.width);
    let by1 = ((y1 + pad).ceil().max(0.0) as usize).min(map.height);
    if bx0 >= bx1 || by0 >= by1 {
        return Ok(());
    }
    let (bw, bh) = (bx1 - bx0, by1 - by0);
    let shift = Vec2::new(bx0 as f64, by0 as f64);
    let local: Vec<Vec2> = px.iter().map(|&p| p - shift).collect();

    let segs: Vec<(Vec2, Vec2)> = if local.len() == 1 {
        vec![(local[0], local[0])]
    } else {
        local.windows(2).map(|w| (w[0], w[1])).collect()
    };
    let mut s = 0.0;
    let outer: Vec<f64> = segs
        .iter()
        .map(|&(a, b)| {
            let seg_m = a.distance(b) * res;
            let ws = profile.as_ref().map_or(sidewalk_width, |p| p.at(s + seg_m / 2.0));
            s += seg_m;
            inner + ws / res
        })
        .collect();

    if !exclude_core {
        let w = map.width;
        for (&(a, b), &r) in segs.iter().zip(&outer) {
            for_each_capsule_span(a, b, r, bw, bh, |row, c0, c1| {
                let start = (row + by0) * w + bx0;
                // Background (0) becomes sidewalk (2); road and sidewalk stay.
                for cls in &mut map.classes[start + c0..=start + c1] {
                    *cls |= ((*cls == Class::Background as u8) as u8) << 1;
                }
            });
        }
        return Ok(());
    }

    // 1 = inside the outer band, 2 = inside the road core.
    let mut mask = vec![0u8; bw * bh];
    for (&(a, b), &r) in segs.iter().zip(&outer) {
        for_each_capsule_span(a, b, r, bw, bh, |r, c0, c1| {
            for m in &mut mask[r * bw + c0..=r * bw + c1] {
                *m = (*m).max(1);
            }
        });
    }
    for &(a, b) in &segs {
        for_each_capsule_span(a, b, inner, bw, bh, |r, c0, c1| mask[r * bw + c0..=r * bw + c1].fill(2));
    }
    for r in 0..bh {
        let row = &mut map.classes[(r + by0) * map.width + bx0..(r + by0) * map.width + bx1];
        for (cls, &m) in row.iter_mut().zip(&mask[r * bw..(r + 1) * bw]) {
            if m == 1 && *cls == Class::Background as u8 {
                *cls = Class::Sidewalk as u8;
            }
        }
    }
    Ok(())
}

/// Flips non-background pixels to background with a probability ramping
/// from 0 at 60% of the half-diagonal to `intensity` at the corners.
pub fn apply_lidar_noise(map: &mut SemanticMap, seed: u64, intensity: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&intensity) {
        return Err(Error::Precondition(format!("noise intensity {intensity} outside [0, 1]")));
    }
    if intensity == 0.0 {
        return Ok(());
    }
    let mut rng = rng::stream(seed, "lidar");
    let (cx, cy) = map.center_pixel();
    let big_r = ((map.width as f64 / 2.0).powi(2) + (map.height as f64 / 2.0).powi(2)).sqrt();
    let calm_sq = (0.6 * big_r).powi(2);
    for row in 0..map.height {
        for col in 0..map.width {
            let (dx, dy) = (col as f64 - cx as f64, row as f64 - cy as f64);
            let r_sq = dx * dx + dy * dy;
            if r_sq <= calm_sq {
                continue;
            }
            // One draw per pixel that can flip, whatever its class, keeps the
            // stream aligned across maps with different content.
            let u = rng.random::<u32>() as f64 / 4_294_967_296.0;
            if u < flip_probability(r_sq.sqrt(), big_r, intensity) {
                map.classes[row * map.width + col] = Class::Background as u8;
            }
        }
    }
    Ok(())
}

/// Radial flip probability used by [`apply_lidar_noise`].
pub fn flip_probability(r: f64, half_diagonal: f64, intensity: f64) -> f64 {
    intensity * ((r - 0.6 * half_diagonal) / (0.4 * half_diagonal)).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MapGenConfig {
    pub lane_width: f64,
    pub sidewalk_width: f64,
    /// Roads per scene, backbone included, are drawn from `1..=max`.
    pub branching_factor_max: usize,
    pub double_width_prob: f64,
    pub unreachable_roads: bool,
    pub unreachable_max: usize,
    pub lidar_noise: bool,
    pub lidar_intensity: f64,
    pub sidewalk_jitter: bool,
    /// Working canvas side in pixels.
    pub canvas: usize,
    pub resolution: f64,
    /// Branch headings deviate from the road by a turn in +-[min, max].
    pub branch_turn_min: f64,
    pub branch_turn_max: f64,
}

impl Default for MapGenConfig {
    fn default() -> Self {
        Self {
            lane_width: 6.0,
            sidewalk_width: 1.5,
            branching_factor_max: 5,
            double_width_prob: 0.5,
            unreachable_roads: true,
            unreachable_max: 3,
            lidar_noise: true,
            lidar_intensity: 0.5,
            sidewalk_jitter: true,
            canvas: 720,
            resolution: 0.5,
            branch_turn_min: FRAC_PI_6,
            branch_turn_max: FRAC_PI_2,
        }
    }
}

impl MapGenConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.lane_width > 0.0 && self.sidewalk_width > 0.0) {
            return bad("lane and sidewalk widths must be positive");
        }
        if self.branching_factor_max < 1 {
            return bad("branching factor max must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.double_width_prob) || !(0.0..=1.0).contains(&self.lidar_intensity) {
            return bad("probabilities must lie in [0, 1]");
        }
        if self.canvas < 4 || self.resolution.is_nan() || self.resolution <= 0.0 {
            return bad("canvas too small or resolution not positive");
        }
        if !(0.0 <= self.branch_turn_min && self.branch_turn_min <= self.branch_turn_max) {
            return bad("branch turn range is empty");
        }
        if self.unreachable_roads && self.unreachable_max < 1 {
            return bad("unreachable road count must be at least 1");
        }
        Ok(())
    }

    /// Half-diagonal of the canvas in meters.
    fn reach(&self) -> f64 {
        self.canvas as f64 * self.resolution * std::f64::consts::SQRT_2 / 2.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RoadKind {
    Backbone,
    /// Grown from the backbone point with this index.
    Branch { anchor: usize },
    /// Road of an alternative ground-truth future.
    Future,
    Unreachable,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Road {
    pub path: Trajectory,
    pub width: f64,
    pub kind: RoadKind,
}

/// Canvas plus the vector geometry that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub map: SemanticMap,
    pub backbone: Trajectory,
    /// Backbone index sitting at the canvas center.
    pub present_index: usize,
    pub branches: Vec<(usize, Trajectory)>,
    pub unreachable: Vec<Trajectory>,
    pub roads: Vec<Road>,
    sidewalks_done: bool,
}

const MAX_WALK_STEPS: usize = 2000;
const MIN_PAST_STEPS: usize = 19;
const MIN_FUTURE_STEPS: usize = 40;
const MIN_BRANCH_POINTS: usize = 10;
const MIN_UNREACHABLE_POINTS: usize = 15;
const BRANCH_ATTEMPTS: usize = 10;
const UNREACHABLE_ATTEMPTS: usize = 40;

impl Scene {
    /// Backbone, branches and (optionally) unreachable roads with
    /// sidewalks, ready to use.
    pub fn build(chain: &MarkovChain, cfg: &MapGenConfig, seed: u64) -> Result<Scene> {
        let mut scene = Scene::build_connected(chain, cfg, seed)?;
        if cfg.unreachable_roads {
            scene.add_unreachable_roads(chain, cfg, seed);
        }
        scene.finish_sidewalks(cfg, seed)?;
        Ok(scene)
    }

    /// Backbone plus branches, roads only.
    pub fn build_connected(chain: &MarkovChain, cfg: &MapGenConfig, seed: u64) -> Result<Scene> {
        cfg.validate()?;
        let map = SemanticMap::new(cfg.canvas, cfg.canvas, cfg.resolution, Pose::identity())?;
        let reach = cfg.reach();

        // Backbone: walk until the path spans the canvas on both sides of the
        // point that becomes the present.
        let mut walker = ChainWalker::new(chain, rng::stream(seed, "backbone"));
        let heading0 = rng::stream(seed, "backbone-heading").random_range(-PI..PI);
        let pre = walk_until(&mut walker, reach, MIN_PAST_STEPS);
        let post = walk_until(&mut walker, reach, MIN_FUTURE_STEPS);
        let present = pre.len();
        let offs: Vec<_> = pre.into_iter().chain(post).collect();
        let raw = integrate_offsets(Pose::new(Vec2::ZERO, heading0), &offs);
        let anchor = raw[present];
        let pts: Vec<Vec2> = raw.into_iter().map(|p| p - anchor).collect();
        let (lo, hi) = inside_run(&map, &pts, present);
        let present_index = present - lo;
        let backbone = Trajectory::from_points(pts[lo..hi].to_vec())?;

        let mut scene = Scene {
            map,
            backbone: backbone.clone(),
            present_index,
            branches: Vec::new(),
            unreachable: Vec::new(),
            roads: Vec::new(),
            sidewalks_done: false,
        };
        let mut width_rng = rng::stream(seed, "road-width");
        let w = road_width(cfg, &mut width_rng);
        scene.add_road(backbone.clone(), w, RoadKind::Backbone)?;

        let mut rng = rng::stream(seed, "branches");
        let roads = rng.random_range(1..=cfg.branching_factor_max);
        let headings = point_headings(backbone.points());
        let history = to_offsets_from(&backbone, headings[0]);
        for _ in 1..roads {
            for attempt in 0..BRANCH_ATTEMPTS {
                let anchor = rng.random_range(0..backbone.len());
                let turn = rng.random_range(cfg.branch_turn_min..=cfg.branch_turn_max)
                    * if rng.random::<bool>() { 1.0 } else { -1.0 };
                let start = Pose::new(backbone.points()[anchor], headings[anchor] + turn);
                let mut walker = ChainWalker::from_history(chain, &history[..anchor], rng::stream(rng.random(), "walk"));
                let path = grow_path(&scene.map, &mut walker, start, reach);
                if path.len() >= MIN_BRANCH_POINTS {
                    let path = Trajectory::from_points(path)?;
                    let w = road_width(cfg, &mut width_rng);
                    scene.branches.push((anchor, path.clone()));
                    scene.add_road(path, w, RoadKind::Branch { anchor })?;
                    break;
                }
                log::debug!("branch attempt {attempt} left the canvas immediately");
            }
        }
        Ok(scene)
    }

    /// Rasterizes a road and records it.
    pub fn add_road(&mut self, path: Trajectory, width: f64, kind: RoadKind) -> Result<()> {
        if self.sidewalks_done {
            return Err(Error::Precondition("roads must be added before sidewalks".into()));
        }
        rasterize_road(&mut self.map, &path, width)?;
        self.roads.push(Road { path, width, kind });
        Ok(())
    }

    /// Adds 1..=max roads that keep a clear gap from every road already on
    /// the canvas, so no road pixel of theirs connects to the rest.
    pub fn add_unreachable_roads(&mut self, chain: &MarkovChain, cfg: &MapGenConfig, seed: u64) {
        let mut rng = rng::stream(seed, "unreachable");
        let mut width_rng = rng::stream(seed, "unreachable-width");
        let wanted = rng.random_range(1..=cfg.unreachable_max.max(1));
        let side = cfg.canvas as f64 * cfg.resolution / 2.0;
        let mut added = 0;
        for _ in 0..UNREACHABLE_ATTEMPTS {
            if added == wanted {
                break;
            }
            let width = road_width(cfg, &mut width_rng);
            let start = Pose::new(
                Vec2::new(rng.random_range(-side..side), rng.random_range(-side..side)),
                rng.random_range(-PI..PI),
            );
            let mut walker = ChainWalker::new(chain, rng::stream(rng.random(), "walk"));
            let path = grow_path(&self.map, &mut walker, start, cfg.reach());
            let keep = clear_prefix(&self.map, &path, width);
            if keep < MIN_UNREACHABLE_POINTS {
                continue;
            }
            let path = Trajectory::from_points(path[..keep].to_vec()).expect("finite path");
            self.unreachable.push(path.clone());
            self.add_road(path, width, RoadKind::Unreachable).expect("valid width");
            added += 1;
        }
        if added == 0 {
            log::warn!("could not place an unreachable road");
        }
    }

    /// Paints sidewalks along every road. Further roads cannot be added.
    pub fn finish_sidewalks(&mut self, cfg: &MapGenConfig, seed: u64) -> Result<()> {
        for (i, road) in self.roads.iter().enumerate() {
            let s = rng::child_seed(seed, "sidewalk", i as u64);
            add_sidewalks_painted(&mut self.map, &road.path, road.width, cfg.sidewalk_width, cfg.sidewalk_jitter, s)?;
        }
        self.sidewalks_done = true;
        Ok(())
    }

    pub fn present_pose(&self) -> Pose {
        let h = point_headings(self.backbone.points())[self.present_index];
        Pose::new(self.backbone.points()[self.present_index], h)
    }

    /// Road width used for the backbone.
    pub fn backbone_width(&self) -> f64 {
        self.roads[0].width
    }
}

/// Convenience wrapper: a finished scene.
pub fn build_scene(chain: &MarkovChain, cfg: &MapGenConfig, seed: u64) -> Result<Scene> {
    Scene::build(chain, cfg, seed)
}

fn road_width(cfg: &MapGenConfig, rng: &mut Rng) -> f64 {
    if rng.random::<f64>() < cfg.double_width_prob {
        2.0 * cfg.lane_width
    } else {
        cfg.lane_width
    }
}

fn walk_until(walker: &mut ChainWalker, reach: f64, min_steps: usize) -> Vec<crate::geometry::PolarOffset> {
    let mut out = Vec::new();
    let mut arc = 0.0;
    while out.len() < MAX_WALK_STEPS && (out.len() < min_steps || arc < reach) {
        let o = walker.step();
        arc += o.rho;
        out.push(o);
    }
    out
}

/// Walks from `start` until the path leaves the canvas or covers `reach`
/// meters; returns only the in-canvas prefix.
fn grow_path(map: &SemanticMap, walker: &mut ChainWalker, start: Pose, reach: f64) -> Vec<Vec2> {
    if !map.contains_world(start.position) {
        return Vec::new();
    }
    let mut pts = vec![start.position];
    let mut pos = start.position;
    let mut heading = start.heading;
    let mut arc = 0.0;
    while pts.len() < MAX_WALK_STEPS && arc < reach {
        let o = walker.step();
        heading += o.theta;
        pos = pos + Vec2::from_heading(heading) * o.rho;
        arc += o.rho;
        if !map.contains_world(pos) {
            break;
        }
        pts.push(pos);
    }
    pts
}

/// Largest index range around `keep` whose points all lie on the canvas.
fn inside_run(map: &SemanticMap, pts: &[Vec2], keep: usize) -> (usize, usize) {
    let mut lo = keep;
    while lo > 0 && map.contains_world(pts[lo - 1]) {
        lo -= 1;
    }
    let mut hi = keep + 1;
    while hi < pts.len() && map.contains_world(pts[hi]) {
        hi += 1;
    }
    (lo, hi)
}

/// Length of the prefix of `path` whose stroke keeps at least two clear
/// pixels from every existing road pixel.
fn clear_prefix(map: &SemanticMap, path: &[Vec2], width: f64) -> usize {
    let px = map.pixel_path(path);
    let r = width / 2.0 / map.resolution;
    for (i, p) in px.iter().enumerate() {
        let seg = |j: usize| px.get(j).map_or(0.0, |q: &Vec2| q.distance(*p));
        let half_seg = seg(i + 1).max(if i > 0 { seg(i - 1) } else { 0.0 }) / 2.0;
        let check = r + half_seg + 2.0;
        let mut hit = false;
        for_each_capsule_span(*p, *p, check, map.width, map.height, |row, c0, c1| {
            hit |= map.classes[row * map.width + c0..=row * map.width + c1].contains(&(Class::Road as u8));
        });
        if hit {
            return i;
        }
    }
    px.len()
}
