//! Displacement metrics, best-of-K evaluation and the prediction file.
//!
//! Prediction files are JSON Lines. The first line is a header
//! `{"format":"trajsynth-predictions","version":1}`; every following line is
//! `{"sample":<id>,"predictions":[[[x,y],...],...]}` with K trajectories in
//! meters in the sample's heading-up frame.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec2;

/// Steps of the 1, 2, 3 and 4 s horizons at 10 Hz.
pub const HORIZON_STEPS: [usize; 4] = [10, 20, 30, 40];
pub const WORST_CASES: usize = 20;

pub const PREDICTION_FORMAT: &str = "trajsynth-predictions";
pub const PREDICTION_VERSION: u32 = 1;

fn check(pred: &[Vec2], gt: &[Vec2], steps: usize) -> Result<()> {
    if steps == 0 {
        return Err(Error::Precondition("horizon must be at least one step".into()));
    }
    if pred.len() < steps || gt.len() < steps {
        return Err(Error::LengthMismatch(pred.len().min(gt.len()), steps));
    }
    Ok(())
}

/// Mean L2 over steps `1..=steps` (the first `steps` future points).
pub fn ade(pred: &[Vec2], gt: &[Vec2], steps: usize) -> Result<f64> {
    check(pred, gt, steps)?;
    Ok(pred[..steps].iter().zip(gt).map(|(a, b)| a.distance(*b)).sum::<f64>() / steps as f64)
}

/// L2 at step `steps`.
pub fn fde(pred: &[Vec2], gt: &[Vec2], steps: usize) -> Result<f64> {
    check(pred, gt, steps)?;
    Ok(pred[steps - 1].distance(gt[steps - 1]))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    /// Prediction 0 only.
    Top1,
    /// Minimum over predictions, chosen separately for every metric and
    /// horizon.
    BestOfK,
}

impl EvalMode {
    pub fn name(self) -> &'static str {
        match self {
            EvalMode::Top1 => "top1",
            EvalMode::BestOfK => "best_of_k",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorizonMetrics {
    pub steps: usize,
    pub seconds: f64,
    pub ade: f64,
    pub fde: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorstCase {
    pub sample: u64,
    /// FDE at the longest horizon.
    pub fde: f64,
    pub ade: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleError {
    pub sample: u64,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mode: EvalMode,
    /// Samples submitted.
    pub sample_count: usize,
    /// Samples that contributed to the aggregates.
    pub evaluated: usize,
    pub horizons: Vec<HorizonMetrics>,
    /// Largest final errors, worst first.
    pub worst: Vec<WorstCase>,
    pub errors: Vec<SampleError>,
    pub note: String,
}

/// One sample to score: its predictions against its reference future.
#[derive(Debug, Clone, Copy)]
pub struct EvalItem<'a> {
    pub sample: u64,
    pub predictions: &'a [Vec<Vec2>],
    pub gt: &'a [Vec2],
}

struct SampleScore {
    sample: u64,
    ade: [f64; 4],
    fde: [f64; 4],
}

fn score(item: &EvalItem<'_>, mode: EvalMode) -> Result<SampleScore> {
    let preds = match mode {
        EvalMode::Top1 => item.predictions.get(..1),
        EvalMode::BestOfK => Some(item.predictions),
    }
    .filter(|p| !p.is_empty())
    .ok_or_else(|| Error::Precondition("no predictions".into()))?;
    let mut out = SampleScore {
        sample: item.sample,
        ade: [f64::INFINITY; 4],
        fde: [f64::INFINITY; 4],
    };
    for p in preds {
        for (h, &steps) in HORIZON_STEPS.iter().enumerate() {
            out.ade[h] = out.ade[h].min(ade(p, item.gt, steps)?);
            out.fde[h] = out.fde[h].min(fde(p, item.gt, steps)?);
        }
    }
    Ok(out)
}

/// Sum in sorted order so the aggregate does not depend on sample order.
fn mean(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.sort_by(f64::total_cmp);
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn evaluate(items: &[EvalItem<'_>], mode: EvalMode) -> EvalReport {
    let mut scores = Vec::new();
    let mut errors = Vec::new();
    for item in items {
        match score(item, mode) {
            Ok(s) => scores.push(s),
            Err(e) => errors.push(SampleError {
                sample: item.sample,
                message: e.to_string(),
            }),
        }
    }
    errors.sort_by_key(|e| e.sample);
    let horizons = HORIZON_STEPS
        .iter()
        .enumerate()
        .map(|(h, &steps)| HorizonMetrics {
            steps,
            seconds: steps as f64 / 10.0,
            ade: mean(scores.iter().map(|s| s.ade[h]).collect()),
            fde: mean(scores.iter().map(|s| s.fde[h]).collect()),
        })
        .collect();
    let mut worst: Vec<WorstCase> = scores
        .iter()
        .map(|s| WorstCase {
            sample: s.sample,
            fde: s.fde[3],
            ade: s.ade[3],
        })
        .collect();
    worst.sort_by(|a, b| b.fde.total_cmp(&a.fde).then(a.sample.cmp(&b.sample)));
    worst.truncate(WORST_CASES);
    EvalReport {
        mode,
        sample_count: items.len(),
        evaluated: scores.len(),
        horizons,
        worst,
        errors,
        note: "best_of_k takes the minimum over predictions per metric and horizon; \
               whether published tables use top-1 or best-of-K is not stated, so both are reported"
            .into(),
    }
}

impl EvalReport {
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "mode: {}  samples: {}  evaluated: {}", self.mode.name(), self.sample_count, self.evaluated);
        let _ = writeln!(s, "{:>8} {:>10} {:>10}", "horizon", "ADE (m)", "FDE (m)");
        for h in &self.horizons {
            let _ = writeln!(s, "{:>7}s {:>10.4} {:>10.4}", h.seconds, h.ade, h.fde);
        }
        if !self.worst.is_empty() {
            let _ = writeln!(s, "worst samples by FDE@{}s:", HORIZON_STEPS[3] / 10);
            for w in &self.worst {
                let _ = writeln!(s, "  #{:<8} FDE {:>9.4}  ADE {:>9.4}", w.sample, w.fde, w.ade);
            }
        }
        for e in &self.errors {
            let _ = writeln!(s, "error in sample {}: {}", e.sample, e.message);
        }
        s
    }
}

/// One prediction-file record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub sample: u64,
    pub predictions: Vec<Vec<Vec2>>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
}

pub fn write_predictions<W: Write>(mut w: W, records: &[PredictionRecord]) -> Result<()> {
    serde_json::to_writer(
        &mut w,
        &Header {
            format: PREDICTION_FORMAT.into(),
            version: PREDICTION_VERSION,
        },
    )?;
    w.write_all(b"\n")?;
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_predictions<R: BufRead>(r: R) -> Result<Vec<PredictionRecord>> {
    let mut lines = r.lines();
    let header: Header = match lines.next() {
        Some(l) => serde_json::from_str(&l?)?,
        None => return Err(Error::Format("empty prediction file".into())),
    };
    if header.format != PREDICTION_FORMAT {
        return Err(Error::Format(format!("not a prediction file: {}", header.format)));
    }
    if header.version != PREDICTION_VERSION {
        return Err(Error::Version {
            found: header.version,
            expected: PREDICTION_VERSION,
        });
    }
    let mut out = Vec::new();
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn line(offset: f64, n: usize) -> Vec<Vec2> {
        (1..=n).map(|i| Vec2::new(offset, i as f64)).collect()
    }

    #[test]
    fn metric_examples() {
        let gt = line(0.0, 40);
        assert_eq!(ade(&gt, &gt, 40).unwrap(), 0.0);
        assert_eq!(fde(&gt, &gt, 40).unwrap(), 0.0);
        assert_eq!(ade(&line(1.0, 40), &gt, 40).unwrap(), 1.0);
        let mut end = gt.clone();
        end[39].x += 2.0;
        assert_eq!(fde(&end, &gt, 40).unwrap(), 2.0);
        assert_eq!(fde(&end, &gt, 30).unwrap(), 0.0);
        assert!((ade(&end, &gt, 40).unwrap() - 0.05).abs() < 1e-15);
        assert!(ade(&gt[..5], &gt, 10).is_err());
    }

    #[test]
    fn report_modes() {
        let gt = line(0.0, 40);
        let preds = vec![line(2.0, 40), line(0.5, 40), line(-1.0, 40)];
        let items = [EvalItem {
            sample: 0,
            predictions: &preds,
            gt: &gt,
        }];
        let top = evaluate(&items, EvalMode::Top1);
        let best = evaluate(&items, EvalMode::BestOfK);
        for (t, b) in top.horizons.iter().zip(&best.horizons) {
            assert_eq!(t.ade, 2.0);
            assert_eq!(b.ade, 0.5);
            assert_eq!(b.fde, 0.5);
        }
        let one = vec![line(2.0, 40)];
        let items = [EvalItem {
            sample: 0,
            predictions: &one,
            gt: &gt,
        }];
        assert_eq!(
            evaluate(&items, EvalMode::Top1).horizons,
            evaluate(&items, EvalMode::BestOfK).horizons
        );
    }

    #[test]
    fn best_of_k_is_per_horizon() {
        let gt = line(0.0, 40);
        // Good early, bad late; and the reverse.
        let mut a = gt.clone();
        let mut b = gt.clone();
        for p in &mut a[20..40] {
            p.x += 3.0;
        }
        for p in &mut b[..20] {
            p.x += 3.0;
        }
        let preds = vec![a, b];
        let r = evaluate(
            &[EvalItem {
                sample: 1,
                predictions: &preds,
                gt: &gt,
            }],
            EvalMode::BestOfK,
        );
        assert_eq!(r.horizons[0].fde, 0.0);
        assert_eq!(r.horizons[3].fde, 0.0);
        assert_eq!(r.horizons[1].ade, 0.0);
        assert!(r.horizons[3].ade > 0.0);
    }

    #[test]
    fn errors_are_per_sample() {
        let gt = line(0.0, 40);
        let good = vec![gt.clone()];
        let short = vec![line(0.0, 12)];
        let none: Vec<Vec<Vec2>> = Vec::new();
        let items = [
            EvalItem {
                sample: 0,
                predictions: &good,
                gt: &gt,
            },
            EvalItem {
                sample: 1,
                predictions: &short,
                gt: &gt,
            },
            EvalItem {
                sample: 2,
                predictions: &none,
                gt: &gt,
            },
        ];
        let r = evaluate(&items, EvalMode::BestOfK);
        assert_eq!(r.sample_count, 3);
        assert_eq!(r.evaluated, 1);
        assert_eq!(r.errors.iter().map(|e| e.sample).collect::<Vec<_>>(), vec![1, 2]);
        assert!(r.horizons.iter().all(|h| h.ade == 0.0 && h.fde == 0.0));
        assert!(r.to_table().contains("error in sample 1"));
    }

    #[test]
    fn worst_list_is_sorted_and_capped() {
        let gt = line(0.0, 40);
        let preds: Vec<Vec<Vec<Vec2>>> = (0..30).map(|i| vec![line(i as f64 * 0.1, 40)]).collect();
        let items: Vec<_> = preds
            .iter()
            .enumerate()
            .map(|(i, p)| EvalItem {
                sample: i as u64,
                predictions: p,
                gt: &gt,
            })
            .collect();
        let r = evaluate(&items, EvalMode::Top1);
        assert_eq!(r.worst.len(), WORST_CASES);
        assert_eq!(r.worst[0].sample, 29);
        assert!(r.worst.windows(2).all(|w| w[0].fde >= w[1].fde));
    }

    #[test]
    fn prediction_file_round_trip() {
        let recs = vec![
            PredictionRecord {
                sample: 3,
                predictions: vec![line(0.25, 40), line(-1.5, 40)],
            },
            PredictionRecord {
                sample: 9,
                predictions: vec![line(1e-17, 40)],
            },
        ];
        let mut buf = Vec::new();
        write_predictions(&mut buf, &recs).unwrap();
        let back = read_predictions(buf.as_slice()).unwrap();
        assert_eq!(back, recs);
        let bad = b"{\"format\":\"trajsynth-predictions\",\"version\":9}\n";
        assert!(matches!(read_predictions(&bad[..]), Err(Error::Version { found: 9, .. })));
        assert!(read_predictions(&b""[..]).is_err());
    }

    proptest! {
        #[test]
        fn symmetric_and_rigid_invariant(
            a in proptest::collection::vec((-30.0f64..30.0, -30.0f64..30.0), 40),
            b in proptest::collection::vec((-30.0f64..30.0, -30.0f64..30.0), 40),
            angle in -3.1f64..3.1,
            t in (-100.0f64..100.0, -100.0f64..100.0),
        ) {
            let a: Vec<Vec2> = a.into_iter().map(Vec2::from).collect();
            let b: Vec<Vec2> = b.into_iter().map(Vec2::from).collect();
            let ma: Vec<Vec2> = a.iter().map(|p| p.rotate(angle) + t.into()).collect();
            let mb: Vec<Vec2> = b.iter().map(|p| p.rotate(angle) + t.into()).collect();
            for steps in HORIZON_STEPS {
                prop_assert_eq!(ade(&a, &b, steps).unwrap(), ade(&b, &a, steps).unwrap());
                prop_assert_eq!(fde(&a, &b, steps).unwrap(), fde(&b, &a, steps).unwrap());
                prop_assert!((ade(&a, &b, steps).unwrap() - ade(&ma, &mb, steps).unwrap()).abs() < 1e-9);
                prop_assert!((fde(&a, &b, steps).unwrap() - fde(&ma, &mb, steps).unwrap()).abs() < 1e-9);
            }
        }

        #[test]
        fn aggregation_ignores_order_and_best_le_top(
            offs in proptest::collection::vec(proptest::collection::vec(-5.0f64..5.0, 1..4), 1..12),
            rot in 0usize..12,
        ) {
            let gt = line(0.0, 40);
            let preds: Vec<Vec<Vec<Vec2>>> = offs
                .iter()
                .map(|o| o.iter().map(|&x| line(x, 40)).collect())
                .collect();
            let mut items: Vec<_> = preds
                .iter()
                .enumerate()
                .map(|(i, p)| EvalItem { sample: i as u64, predictions: p, gt: &gt })
                .collect();
            let a = evaluate(&items, EvalMode::BestOfK);
            let top = evaluate(&items, EvalMode::Top1);
            let n = items.len();
            items.rotate_left(rot % n);
            let b = evaluate(&items, EvalMode::BestOfK);
            prop_assert_eq!(&a.horizons, &b.horizons);
            for (x, y) in a.horizons.iter().zip(&top.horizons) {
                prop_assert!(x.ade <= y.ade && x.fde <= y.fde);
            }
        }
    }
}
