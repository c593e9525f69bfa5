//! Browser demo. [`DemoCore`] holds the logic and runs natively; the
//! `wasm_bindgen` wrapper [`Demo`] only converts errors and types.
//!
//! Operations exposed to the page:
//! - generate a sample under the chosen ablations and render it,
//! - walk the chain and return the trajectory,
//! - run the baselines on the current sample and match them to its futures.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use trajsynth::baselines::Predictor;
use trajsynth::chain::{sample_trajectory, ChainConfig, MarkovChain};
use trajsynth::eval::{ade, fde};
use trajsynth::mapgen::MapGenConfig;
use trajsynth::matching::{greedy_assign, multimodality_loss, TrajDistance};
use trajsynth::render::{render_sample, RgbaImage};
use trajsynth::samples::{generate_sample, MultimodalSample, SampleConfig, FUTURE_LEN};
use trajsynth::toy_logs::toy_chain;
use trajsynth::{Pose, Result, Vec2};

#[derive(Debug, Clone, Serialize)]
pub struct SampleSummary {
    pub seed: u64,
    pub futures: usize,
    pub branch_indices: Vec<Option<u32>>,
    pub shift: f64,
    pub fewer_futures: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct BaselineScore {
    pub name: &'static str,
    /// Future this prediction was matched to.
    pub matched_future: usize,
    pub ade: f64,
    pub fde: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct PredictionSummary {
    pub baselines: Vec<BaselineScore>,
    pub multimodality_loss: f64,
}

pub struct DemoCore {
    chain: MarkovChain,
    pub map: MapGenConfig,
    pub sample: SampleConfig,
    current: Option<MultimodalSample>,
    predictions: Vec<Vec<Vec2>>,
}

impl DemoCore {
    pub fn new(clusters: usize, order: usize, seed: u64) -> Result<Self> {
        let cfg = ChainConfig {
            clusters,
            order,
            ..Default::default()
        };
        Ok(Self {
            chain: toy_chain(&cfg, seed)?,
            map: MapGenConfig::default(),
            sample: SampleConfig::default(),
            current: None,
            predictions: Vec::new(),
        })
    }

    pub fn generate(&mut self, seed: u64) -> Result<SampleSummary> {
        let s = generate_sample(&self.chain, &self.map, &self.sample, seed)?;
        let summary = SampleSummary {
            seed,
            futures: s.futures.len(),
            branch_indices: s.meta.branch_indices.clone(),
            shift: s.meta.shift,
            fewer_futures: s.meta.fewer_futures,
        };
        self.current = Some(s);
        self.predictions.clear();
        Ok(summary)
    }

    pub fn image(&self, scale: usize) -> Option<RgbaImage> {
        self.current.as_ref().map(|s| render_sample(s, &self.predictions, scale))
    }

    /// Chain walk of `steps` offsets from the origin heading +y, as
    /// interleaved x, y.
    pub fn walk(&self, seed: u64, steps: usize) -> Result<Vec<f64>> {
        let start = Pose::new(Vec2::ZERO, std::f64::consts::FRAC_PI_2);
        let t = sample_trajectory(&self.chain, steps, start, seed)?;
        Ok(t.points().iter().flat_map(|p| [p.x, p.y]).collect())
    }

    /// Runs every baseline on the current sample, keeps the predictions for
    /// the next render and scores each against the future it is matched to.
    pub fn predict(&mut self) -> Result<Option<PredictionSummary>> {
        let Some(s) = &self.current else { return Ok(None) };
        let predictors = [Predictor::ConstantVelocity, Predictor::Linear, Predictor::kalman_default()];
        let preds = predictors
            .iter()
            .map(|p| p.predict(&s.past, FUTURE_LEN))
            .collect::<Result<Vec<_>>>()?;
        let assignment = greedy_assign(&preds, &s.futures, TrajDistance::MeanL2)?;
        let mut baselines = Vec::new();
        for &(i, j) in assignment.all_pairs() {
            baselines.push(BaselineScore {
                name: predictors[i].name(),
                matched_future: j,
                ade: ade(&preds[i], &s.futures[j], FUTURE_LEN)?,
                fde: fde(&preds[i], &s.futures[j], FUTURE_LEN)?,
            });
        }
        baselines.sort_by_key(|b| predictors.iter().position(|p| p.name() == b.name));
        let summary = PredictionSummary {
            multimodality_loss: multimodality_loss(&preds, &s.futures, TrajDistance::MeanL2)?,
            baselines,
        };
        self.predictions = preds;
        Ok(Some(summary))
    }
}

fn js(e: impl std::fmt::Display) -> JsError {
    JsError::new(&e.to_string())
}

#[wasm_bindgen]
pub struct Demo {
    core: DemoCore,
    image: Option<RgbaImage>,
}

#[wasm_bindgen]
impl Demo {
    #[wasm_bindgen(constructor)]
    pub fn new(clusters: usize, order: usize, seed: u32) -> std::result::Result<Demo, JsError> {
        Ok(Demo {
            core: DemoCore::new(clusters, order, seed as u64).map_err(js)?,
            image: None,
        })
    }

    pub fn set_ablations(&mut self, lidar_noise: bool, shift: bool, unreachable: bool, branching_max: usize) {
        self.core.map.lidar_noise = lidar_noise;
        self.core.map.unreachable_roads = unreachable;
        self.core.map.branching_factor_max = branching_max.max(1);
        self.core.sample.shift_enabled = shift;
    }

    /// Generates and renders a sample; returns a JSON summary.
    pub fn generate(&mut self, seed: u32, scale: usize) -> std::result::Result<String, JsError> {
        let summary = self.core.generate(seed as u64).map_err(js)?;
        self.image = self.core.image(scale);
        serde_json::to_string(&summary).map_err(js)
    }

    /// Baselines on the current sample; re-renders with predictions.
    pub fn predict(&mut self, scale: usize) -> std::result::Result<String, JsError> {
        let summary = self.core.predict().map_err(js)?;
        self.image = self.core.image(scale);
        serde_json::to_string(&summary).map_err(js)
    }

    pub fn walk(&self, seed: u32, steps: usize) -> std::result::Result<Vec<f64>, JsError> {
        self.core.walk(seed as u64, steps).map_err(js)
    }

    pub fn width(&self) -> usize {
        self.image.as_ref().map_or(0, |i| i.width)
    }

    pub fn height(&self) -> usize {
        self.image.as_ref().map_or(0, |i| i.height)
    }

    /// RGBA bytes of the last render.
    pub fn pixels(&self) -> Vec<u8> {
        self.image.as_ref().map(|i| i.data.clone()).unwrap_or_default()
    }
}
