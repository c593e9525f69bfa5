//! Greedy prediction-to-future assignment and the training losses built on
//! it.
//!
//! Squared error between two trajectories is the mean over points of
//! `dx^2 + dy^2`. Losses average over matched pairs so their scale does not
//! depend on the number of predictions or futures.

use serde::{Deserialize, Serialize};

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::geometry::Vec2;
use crate::rng::{self, Rng};

/// Pairwise trajectory distance used to rank candidate matches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrajDistance {
    /// Mean pointwise L2 (ADE-like).
    #[default]
    MeanL2,
    SumL2,
    /// L2 at the last point (FDE-like).
    FinalL2,
}

impl TrajDistance {
    pub fn eval(self, a: &[Vec2], b: &[Vec2]) -> f64 {
        match self {
            TrajDistance::MeanL2 => l2_sum(a, b) / a.len() as f64,
            TrajDistance::SumL2 => l2_sum(a, b),
            TrajDistance::FinalL2 => a[a.len() - 1].distance(b[b.len() - 1]),
        }
    }
}

fn l2_sum(a: &[Vec2], b: &[Vec2]) -> f64 {
    a.iter().zip(b).map(|(p, q)| p.distance(*q)).sum()
}

/// Mean over points of the squared L2 error.
pub fn mse(a: &[Vec2], b: &[Vec2]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (*p - *q).norm_sq()).sum::<f64>() / a.len() as f64
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Assignment {
    /// `(prediction, future)` pairs in the order they were picked.
    pub pairs: Vec<(usize, usize)>,
    /// Surplus predictions attached to their closest future.
    pub leftover_pairs: Vec<(usize, usize)>,
}

impl Assignment {
    pub fn all_pairs(&self) -> impl Iterator<Item = &(usize, usize)> {
        self.pairs.iter().chain(&self.leftover_pairs)
    }
}

fn check_shapes<T: AsRef<[Vec2]>>(preds: &[T], gts: &[T]) -> Result<usize> {
    if preds.is_empty() || gts.is_empty() {
        return Err(Error::Precondition("need at least one prediction and one future".into()));
    }
    let n = gts[0].as_ref().len();
    if n == 0 {
        return Err(Error::Precondition("empty trajectory".into()));
    }
    for t in preds.iter().chain(gts) {
        if t.as_ref().len() != n {
            return Err(Error::LengthMismatch(t.as_ref().len(), n));
        }
    }
    Ok(n)
}

/// Repeatedly takes the globally closest remaining `(prediction, future)`
/// pair until every future is matched (or predictions run out), then
/// attaches each remaining prediction to its closest future. Ties go to the
/// lexicographically smallest `(prediction, future)`.
pub fn greedy_assign<T: AsRef<[Vec2]>>(preds: &[T], gts: &[T], d: TrajDistance) -> Result<Assignment> {
    check_shapes(preds, gts)?;
    let dist: Vec<f64> = preds
        .iter()
        .flat_map(|p| gts.iter().map(move |t| d.eval(p.as_ref(), t.as_ref())))
        .collect();
    Ok(greedy_assign_matrix(&dist, preds.len(), gts.len()))
}

/// Greedy rule on a row-major `k x g` distance matrix (rows = predictions).
pub fn greedy_assign_matrix(dist: &[f64], k: usize, g: usize) -> Assignment {
    assert_eq!(dist.len(), k * g, "distance matrix shape");
    let mut pred_used = vec![false; k];
    let mut gt_used = vec![false; g];
    let mut out = Assignment::default();
    for _ in 0..k.min(g) {
        let mut best: Option<(usize, usize)> = None;
        for i in (0..k).filter(|&i| !pred_used[i]) {
            for j in (0..g).filter(|&j| !gt_used[j]) {
                if best.is_none_or(|(bi, bj)| dist[i * g + j] < dist[bi * g + bj]) {
                    best = Some((i, j));
                }
            }
        }
        let (i, j) = best.expect("unmatched pair remains");
        pred_used[i] = true;
        gt_used[j] = true;
        out.pairs.push((i, j));
    }
    for i in (0..k).filter(|&i| !pred_used[i]) {
        let j = (0..g)
            .min_by(|&a, &b| dist[i * g + a].total_cmp(&dist[i * g + b]))
            .unwrap();
        out.leftover_pairs.push((i, j));
    }
    out
}

/// Mean squared error over every assigned pair, leftovers included.
pub fn multimodality_loss<T: AsRef<[Vec2]>>(preds: &[T], gts: &[T], d: TrajDistance) -> Result<f64> {
    let a = greedy_assign(preds, gts, d)?;
    Ok(loss_for_assignment(preds, gts, &a))
}

pub fn loss_for_assignment<T: AsRef<[Vec2]>>(preds: &[T], gts: &[T], a: &Assignment) -> f64 {
    let n = a.pairs.len() + a.leftover_pairs.len();
    a.all_pairs()
        .map(|&(i, j)| mse(preds[i].as_ref(), gts[j].as_ref()))
        .sum::<f64>()
        / n as f64
}

/// Gradient of [`multimodality_loss`] with respect to each predicted point,
/// holding the assignment fixed.
pub fn multimodality_loss_grad<T: AsRef<[Vec2]>>(preds: &[T], gts: &[T], d: TrajDistance) -> Result<Vec<Vec<Vec2>>> {
    let a = greedy_assign(preds, gts, d)?;
    let n_pairs = (a.pairs.len() + a.leftover_pairs.len()) as f64;
    let len = gts[0].as_ref().len() as f64;
    let mut grad: Vec<Vec<Vec2>> = preds.iter().map(|p| vec![Vec2::ZERO; p.as_ref().len()]).collect();
    for &(i, j) in a.all_pairs() {
        for (g, (p, t)) in grad[i].iter_mut().zip(preds[i].as_ref().iter().zip(gts[j].as_ref())) {
            *g = *g + (*p - *t) * (2.0 / (len * n_pairs));
        }
    }
    Ok(grad)
}

/// Squared error of the best of the predictions against a single future.
pub fn variety_loss<T: AsRef<[Vec2]>>(preds: &[T], gt: &[Vec2]) -> Result<f64> {
    per_prediction_mse(preds, gt).map(|v| v.into_iter().fold(f64::INFINITY, f64::min))
}

/// Squared error averaged over all predictions against a single future.
pub fn mse_loss<T: AsRef<[Vec2]>>(preds: &[T], gt: &[Vec2]) -> Result<f64> {
    per_prediction_mse(preds, gt).map(|v| v.iter().sum::<f64>() / v.len() as f64)
}

fn per_prediction_mse<T: AsRef<[Vec2]>>(preds: &[T], gt: &[Vec2]) -> Result<Vec<f64>> {
    if preds.is_empty() || gt.is_empty() {
        return Err(Error::Precondition("need at least one prediction and a non-empty future".into()));
    }
    preds
        .iter()
        .map(|p| {
            let p = p.as_ref();
            if p.len() != gt.len() {
                Err(Error::LengthMismatch(p.len(), gt.len()))
            } else {
                Ok(mse(p, gt))
            }
        })
        .collect()
}

pub const MATCH_VECTOR_FORMAT: &str = "trajsynth-match-vectors";
pub const MATCH_VECTOR_VERSION: u32 = 1;

/// One fixed assignment problem with every quantity a reimplementation of
/// the losses must reproduce. `variety_loss` and `mse_loss` use future 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchVectorCase {
    pub predictions: Vec<Vec<Vec2>>,
    pub futures: Vec<Vec<Vec2>>,
    pub assignment: Assignment,
    pub multimodality_loss: f64,
    pub variety_loss: f64,
    pub mse_loss: f64,
    pub gradient: Vec<Vec<Vec2>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchVectorFile {
    pub format: String,
    pub version: u32,
    pub seed: u64,
    pub distance: TrajDistance,
    pub cases: Vec<MatchVectorCase>,
}

impl MatchVectorCase {
    pub fn compute(predictions: Vec<Vec<Vec2>>, futures: Vec<Vec<Vec2>>, d: TrajDistance) -> Result<Self> {
        Ok(Self {
            assignment: greedy_assign(&predictions, &futures, d)?,
            multimodality_loss: multimodality_loss(&predictions, &futures, d)?,
            variety_loss: variety_loss(&predictions, &futures[0])?,
            mse_loss: mse_loss(&predictions, &futures[0])?,
            gradient: multimodality_loss_grad(&predictions, &futures, d)?,
            predictions,
            futures,
        })
    }
}

fn random_walk(rng: &mut Rng, len: usize) -> Vec<Vec2> {
    let mut p = Vec2::ZERO;
    let mut v = Vec2::new(rng.random_range(-1.5..1.5), rng.random_range(0.0..2.0));
    (0..len)
        .map(|_| {
            v = v + Vec2::new(rng.random_range(-0.2..0.2), rng.random_range(-0.2..0.2));
            p = p + v;
            p
        })
        .collect()
}

/// Seeded random instances (K <= 8 predictions, N_GT <= 5 futures, `steps`
/// points each). Every fourth case has the predictions equal to the
/// futures, which pins the zero-loss and tie-breaking behavior.
pub fn match_vectors(seed: u64, count: usize, steps: usize, d: TrajDistance) -> Result<MatchVectorFile> {
    if steps == 0 {
        return Err(Error::Precondition("match vectors need at least one step".into()));
    }
    let mut rng = rng::stream(seed, "match-vectors");
    let cases = (0..count)
        .map(|i| {
            let g = rng.random_range(1..=5);
            let futures: Vec<Vec<Vec2>> = (0..g).map(|_| random_walk(&mut rng, steps)).collect();
            let predictions = if i % 4 == 0 {
                futures.clone()
            } else {
                let k = rng.random_range(1..=8);
                (0..k).map(|_| random_walk(&mut rng, steps)).collect()
            };
            MatchVectorCase::compute(predictions, futures, d)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MatchVectorFile {
        format: MATCH_VECTOR_FORMAT.into(),
        version: MATCH_VECTOR_VERSION,
        seed,
        distance: d,
        cases,
    })
}

pub fn write_match_vectors<W: std::io::Write>(w: W, file: &MatchVectorFile) -> Result<()> {
    serde_json::to_writer_pretty(w, file).map_err(|e| Error::Format(e.to_string()))
}

pub fn read_match_vectors<R: std::io::Read>(r: R) -> Result<MatchVectorFile> {
    let f: MatchVectorFile = serde_json::from_reader(r).map_err(|e| Error::Format(e.to_string()))?;
    if f.format != MATCH_VECTOR_FORMAT || f.version != MATCH_VECTOR_VERSION {
        return Err(Error::Format(format!("unsupported match vector file {} v{}", f.format, f.version)));
    }
    Ok(f)
}
