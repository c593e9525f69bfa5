//! Multimodal training samples: one past, several futures, one heading-up
//! context crop.

use rand::seq::index;
use rand::Rng as _;
use rand_distr::{Distribution, Triangular};
use serde::{Deserialize, Serialize};

use crate::chain::{ChainWalker, MarkovChain};
use crate::error::{Error, Result};
use crate::geometry::{integrate_offsets, normalize_heading_up, point_headings, to_offsets_from, Pose, Trajectory, Vec2};
use crate::mapgen::{apply_lidar_noise, MapGenConfig, RoadKind, Scene, SemanticMap};
use crate::rng::{self, Rng};

/// Past points (2 s at 10 Hz).
pub const PAST_LEN: usize = 20;
/// Future points (4 s at 10 Hz).
pub const FUTURE_LEN: usize = 40;
pub const MAX_FUTURES: usize = 5;
/// Alternative futures diverge at a future index in this range.
pub const BRANCH_INDEX_MIN: usize = 5;
pub const BRANCH_INDEX_MAX: usize = FUTURE_LEN - 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleConfig {
    pub n_gt_min: usize,
    pub n_gt_max: usize,
    pub shift_enabled: bool,
    /// When set, the mode of the lateral shift distribution is chosen so
    /// that `P(shift > 0)` equals this value; otherwise the mode is
    /// `0.25 * lane_width`.
    pub shift_right_bias: Option<f64>,
    pub crop_size: usize,
    pub horizon_seconds: f64,
}

impl Default for SampleConfig {
    fn default() -> Self {
        Self {
            n_gt_min: 1,
            n_gt_max: MAX_FUTURES,
            shift_enabled: true,
            shift_right_bias: None,
            crop_size: 360,
            horizon_seconds: 6.0,
        }
    }
}

impl SampleConfig {
    pub fn validate(&self) -> Result<()> {
        if !(1 <= self.n_gt_min && self.n_gt_min <= self.n_gt_max && self.n_gt_max <= MAX_FUTURES) {
            return Err(Error::Config(format!(
                "future count range {}..={} outside 1..={MAX_FUTURES}",
                self.n_gt_min, self.n_gt_max
            )));
        }
        if self.crop_size == 0 || !self.crop_size.is_multiple_of(2) {
            return Err(Error::Config(format!("crop size must be even, got {}", self.crop_size)));
        }
        if let Some(b) = self.shift_right_bias {
            if !(0.0 < b && b < 1.0) {
                return Err(Error::Config(format!("right bias {b} outside (0, 1)")));
            }
        }
        if ((self.horizon_seconds * 10.0).round() as usize) != PAST_LEN + FUTURE_LEN {
            return Err(Error::Config("horizon must cover the 20 + 40 point window".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Source {
    Synthetic,
    Real,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleMeta {
    pub seed: u64,
    pub scene_id: u64,
    pub source: Source,
    /// Per future: `None` for the backbone continuation, otherwise the
    /// future index after which the alternative diverges.
    pub branch_indices: Vec<Option<u32>>,
    /// Lateral shift in meters, positive to the driver's right.
    pub shift: f64,
    /// World pose of the present in the scene canvas.
    pub world_present: Pose,
    /// Set when fewer futures than requested could be produced.
    pub fewer_futures: bool,
    /// Crop pixels that fell outside the working canvas.
    pub out_of_canvas: u32,
}

/// One dataset record. Trajectories are in meters in the heading-up frame
/// (present at the origin, vehicle facing +y); the map is centered on the
/// present with the same orientation.
#[derive(Debug, Clone, PartialEq)]
pub struct MultimodalSample {
    pub past: Vec<Vec2>,
    pub futures: Vec<Vec<Vec2>>,
    pub map: SemanticMap,
    pub meta: SampleMeta,
}

impl MultimodalSample {
    pub fn new(past: Vec<Vec2>, futures: Vec<Vec<Vec2>>, map: SemanticMap, meta: SampleMeta) -> Result<Self> {
        if past.len() != PAST_LEN {
            return Err(Error::Format(format!("past has {} points, expected {PAST_LEN}", past.len())));
        }
        if futures.is_empty() || futures.len() > MAX_FUTURES {
            return Err(Error::Format(format!("{} futures outside 1..={MAX_FUTURES}", futures.len())));
        }
        if let Some(f) = futures.iter().find(|f| f.len() != FUTURE_LEN) {
            return Err(Error::Format(format!("future has {} points, expected {FUTURE_LEN}", f.len())));
        }
        if !past.iter().chain(futures.iter().flatten()).all(|p| p.is_finite()) {
            return Err(Error::Format("non-finite coordinate".into()));
        }
        if meta.branch_indices.len() != futures.len() {
            return Err(Error::Format("branch provenance does not match future count".into()));
        }
        Ok(Self { past, futures, map, meta })
    }

    pub fn present(&self) -> Vec2 {
        self.past[PAST_LEN - 1]
    }

    /// Continuous pixel coordinates of the past in the context map.
    pub fn past_pixels(&self) -> Vec<Vec2> {
        self.past.iter().map(|&p| self.map.to_pixel(p)).collect()
    }

    pub fn future_pixels(&self, i: usize) -> Vec<Vec2> {
        self.futures[i].iter().map(|&p| self.map.to_pixel(p)).collect()
    }
}

/// Lateral shift distribution: triangular over `[-0.25 w, 0.4 w]`.
pub fn shift_distribution(lane_width: f64, right_bias: Option<f64>) -> Result<Triangular<f64>> {
    let (lo, hi) = (-0.25 * lane_width, 0.4 * lane_width);
    let mode = match right_bias {
        None => 0.25 * lane_width,
        // P(d <= 0) = lo^2 / ((hi - lo)(mode - lo)) for mode >= 0.
        Some(b) => (lo + lo * lo / ((hi - lo) * (1.0 - b))).clamp(lo, hi),
    };
    Triangular::new(lo, hi, mode).map_err(|e| Error::Config(format!("shift distribution: {e}")))
}

/// Moves every point by `d` meters along its local right-hand normal.
pub fn shift_points(points: &[Vec2], d: f64) -> Vec<Vec2> {
    if d == 0.0 {
        return points.to_vec();
    }
    point_headings(points)
        .into_iter()
        .zip(points)
        .map(|(h, &p)| {
            let right = Vec2::new(h.sin(), -h.cos());
            p + right * d
        })
        .collect()
}

/// Shifts a whole trajectory by one offset drawn from
/// [`shift_distribution`].
pub fn lateral_shift(t: &Trajectory, lane_width: f64, right_bias: Option<f64>, seed: u64) -> Result<(Trajectory, f64)> {
    let d = shift_distribution(lane_width, right_bias)?.sample(&mut rng::stream(seed, "shift"));
    Ok((Trajectory::new(shift_points(t.points(), d), t.rate_hz())?, d))
}

/// Alternative futures grown from points of the future segment.
#[derive(Debug, Clone, PartialEq)]
pub struct BranchedFutures {
    pub futures: Vec<Vec<Vec2>>,
    pub branch_indices: Vec<Option<u32>>,
    pub fewer_than_requested: bool,
}

/// Builds `n_gt` futures for `segment` (past then future points). Future 0
/// is the segment's own continuation; the others share its prefix up to a
/// distinct branch index and then follow fresh chain transitions. Each
/// alternative's road is rasterized into the scene.
pub fn branch_futures(
    chain: &MarkovChain,
    scene: &mut Scene,
    cfg: &MapGenConfig,
    segment: &[Vec2],
    n_gt: usize,
    seed: u64,
) -> Result<BranchedFutures> {
    if segment.len() < PAST_LEN + FUTURE_LEN {
        return Err(Error::Precondition(format!(
            "segment has {} points, need {}",
            segment.len(),
            PAST_LEN + FUTURE_LEN
        )));
    }
    if n_gt == 0 {
        return Err(Error::Precondition("need at least one future".into()));
    }
    let segment = &segment[..PAST_LEN + FUTURE_LEN];
    let future = &segment[PAST_LEN..];
    let mut out = BranchedFutures {
        futures: vec![future.to_vec()],
        branch_indices: vec![None],
        fewer_than_requested: false,
    };
    let wanted = n_gt - 1;
    let available = BRANCH_INDEX_MAX - BRANCH_INDEX_MIN + 1;
    let take = if wanted > available {
        log::warn!("only {available} branch points for {wanted} alternative futures");
        out.fewer_than_requested = true;
        available
    } else {
        wanted
    };
    if take == 0 {
        return Ok(out);
    }

    let mut rng = rng::stream(seed, "branch-futures");
    let mut width_rng = rng::stream(seed, "future-width");
    let headings = point_headings(segment);
    let seg_traj = Trajectory::from_points(segment.to_vec())?;
    let history = to_offsets_from(&seg_traj, headings[0]);
    let reach = cfg.canvas as f64 * cfg.resolution;
    for j in index::sample(&mut rng, available, take).into_iter().map(|k| k + BRANCH_INDEX_MIN) {
        let at = PAST_LEN + j;
        let start = Pose::new(segment[at], headings[at]);
        let mut walker = ChainWalker::from_history(chain, &history[..at], rng::stream(rng.random(), "walk"));
        let offs = walker.take(FUTURE_LEN - 1 - j);
        let tail = integrate_offsets(start, &offs);
        let mut alt = future[..=j].to_vec();
        alt.extend_from_slice(&tail[1..]);

        // The road keeps going past the 4 s horizon.
        let mut road = tail;
        let mut heading = start.heading + offs.iter().map(|o| o.theta).sum::<f64>();
        let mut arc = 0.0;
        let mut pos = *road.last().unwrap();
        while arc < reach && scene.map.pixel_of(pos).is_some() {
            let o = walker.step();
            heading += o.theta;
            pos = pos + Vec2::from_heading(heading) * o.rho;
            arc += o.rho;
            road.push(pos);
        }
        let width = if width_rng.random::<f64>() < cfg.double_width_prob {
            2.0 * cfg.lane_width
        } else {
            cfg.lane_width
        };
        scene.add_road(Trajectory::from_points(road)?, width, RoadKind::Future)?;
        out.futures.push(alt);
        out.branch_indices.push(Some(j as u32));
    }
    Ok(out)
}

/// Rotates the scene about `present` so the heading points up and cuts a
/// `crop_size` square with the present at the center pixel. Returns the
/// crop (origin = `present`) and the number of pixels sampled off-canvas.
pub fn crop_context(scene: &SemanticMap, present: Pose, crop_size: usize) -> Result<(SemanticMap, usize)> {
    let mut out = SemanticMap::new(crop_size, crop_size, scene.resolution, present)?;
    let mut outside = 0;
    // The crop-to-scene pixel map is affine: evaluate it once per axis.
    let at = |c: f64, r: f64| scene.to_pixel(out.pixel_to_world(Vec2::new(c, r)));
    let p0 = at(0.0, 0.0);
    let du = at(1.0, 0.0) - p0;
    let dv = at(0.0, 1.0) - p0;
    let (sw, sh) = (scene.width as f64, scene.height as f64);
    // Tiles keep the rotated reads local in the scene raster.
    const TILE: usize = 32;
    for tr in (0..crop_size).step_by(TILE) {
        for tc in (0..crop_size).step_by(TILE) {
            for row in tr..(tr + TILE).min(crop_size) {
                for col in tc..(tc + TILE).min(crop_size) {
                    let q = p0 + du * col as f64 + dv * row as f64;
                    // For q > -0.5, truncating q + 0.5 equals rounding q.
                    if q.x > -0.5 && q.y > -0.5 && q.x + 0.5 < sw && q.y + 0.5 < sh {
                        let (c, r) = ((q.x + 0.5) as i32 as usize, (q.y + 0.5) as i32 as usize);
                        out.classes[row * crop_size + col] = scene.classes[r * scene.width + c];
                    } else {
                        outside += 1;
                    }
                }
            }
        }
    }
    Ok((out, outside))
}

/// A sample plus the intermediate products used to build it.
#[derive(Debug, Clone)]
pub struct GeneratedSample {
    pub sample: MultimodalSample,
    /// Context crop before simulated LiDAR noise.
    pub clean_map: SemanticMap,
    pub scene: Scene,
}

const SCENE_ATTEMPTS: u64 = 8;

/// Full pipeline, deterministic in `seed`.
pub fn generate_sample(
    chain: &MarkovChain,
    map_cfg: &MapGenConfig,
    sample_cfg: &SampleConfig,
    seed: u64,
) -> Result<MultimodalSample> {
    generate_sample_detailed(chain, map_cfg, sample_cfg, seed).map(|g| g.sample)
}

pub fn generate_sample_detailed(
    chain: &MarkovChain,
    map_cfg: &MapGenConfig,
    sample_cfg: &SampleConfig,
    seed: u64,
) -> Result<GeneratedSample> {
    map_cfg.validate()?;
    sample_cfg.validate()?;
    if sample_cfg.crop_size > map_cfg.canvas {
        return Err(Error::Config("crop larger than the working canvas".into()));
    }
    // A scene whose backbone leaves the canvas before the 6 s window is
    // complete is redrawn from a derived seed.
    let mut last_err = None;
    for attempt in 0..SCENE_ATTEMPTS {
        let scene_seed = if attempt == 0 {
            seed
        } else {
            rng::child_seed(seed, "scene-retry", attempt)
        };
        match generate_from_scene_seed(chain, map_cfg, sample_cfg, seed, scene_seed) {
            Ok(g) => return Ok(g),
            Err(e @ Error::Precondition(_)) => {
                log::debug!("scene {scene_seed} rejected: {e}");
                last_err = Some(e);
            }
            Err(e) => return Err(e),
        }
    }
    Err(last_err.unwrap())
}

fn generate_from_scene_seed(
    chain: &MarkovChain,
    map_cfg: &MapGenConfig,
    sample_cfg: &SampleConfig,
    seed: u64,
    scene_seed: u64,
) -> Result<GeneratedSample> {
    let mut scene = Scene::build_connected(chain, map_cfg, scene_seed)?;
    let p = scene.present_index;
    if p + 1 < PAST_LEN || p + FUTURE_LEN >= scene.backbone.len() {
        return Err(Error::Precondition("backbone too short around the present".into()));
    }
    let segment = scene.backbone.points()[p + 1 - PAST_LEN..=p + FUTURE_LEN].to_vec();

    let n_gt = rng::stream(seed, "n-gt").random_range(sample_cfg.n_gt_min..=sample_cfg.n_gt_max);
    let branched = branch_futures(chain, &mut scene, map_cfg, &segment, n_gt, rng::child_seed(seed, "futures", 0))?;
    if map_cfg.unreachable_roads {
        scene.add_unreachable_roads(chain, map_cfg, scene_seed);
    }
    scene.finish_sidewalks(map_cfg, scene_seed)?;

    let shift = if sample_cfg.shift_enabled {
        shift_distribution(map_cfg.lane_width, sample_cfg.shift_right_bias)?.sample(&mut rng::stream(seed, "shift"))
    } else {
        0.0
    };
    let past_and: Vec<Vec<Vec2>> = branched
        .futures
        .iter()
        .map(|f| {
            let mut full = segment[..PAST_LEN].to_vec();
            full.extend_from_slice(f);
            shift_points(&full, shift)
        })
        .collect();

    let (_, frame) = normalize_heading_up(&Trajectory::from_points(past_and[0].clone())?, PAST_LEN - 1)?;
    let (mut crop, outside) = crop_context(&scene.map, frame, sample_cfg.crop_size)?;
    crop.origin = Pose::identity();
    let clean_map = crop.clone();
    if map_cfg.lidar_noise {
        apply_lidar_noise(&mut crop, rng::child_seed(seed, "noise", 0), map_cfg.lidar_intensity)?;
    }

    let local = |pts: &[Vec2]| pts.iter().map(|&q| frame.to_local(q)).collect::<Vec<_>>();
    let past = local(&past_and[0][..PAST_LEN]);
    let futures = past_and.iter().map(|f| local(&f[PAST_LEN..])).collect();
    let meta = SampleMeta {
        seed,
        scene_id: scene_seed,
        source: Source::Synthetic,
        branch_indices: branched.branch_indices,
        shift,
        world_present: frame,
        fewer_futures: branched.fewer_than_requested,
        out_of_canvas: outside as u32,
    };
    Ok(GeneratedSample {
        sample: MultimodalSample::new(past, futures, crop, meta)?,
        clean_map,
        scene,
    })
}

/// Draws a shift for callers that need the raw value.
pub fn draw_shift(lane_width: f64, right_bias: Option<f64>, rng: &mut Rng) -> Result<f64> {
    Ok(shift_distribution(lane_width, right_bias)?.sample(rng))
}
