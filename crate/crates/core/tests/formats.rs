//! Files exchanged with other tools: chain files, dataset archives,
//! prediction files and match vectors.

use trajsynth::baselines::Predictor;
use trajsynth::chain::ChainConfig;
use trajsynth::dataset_io::{chain_digest, read_chain, read_dataset, write_chain, write_dataset, GeneratorSnapshot};
use trajsynth::eval::{evaluate, read_predictions, write_predictions, EvalItem, EvalMode, PredictionRecord};
use trajsynth::mapgen::MapGenConfig;
use trajsynth::matching::{match_vectors, read_match_vectors, write_match_vectors, MatchVectorCase, TrajDistance};
use trajsynth::samples::{generate_sample, MultimodalSample, SampleConfig, FUTURE_LEN};
use trajsynth::toy_logs::toy_chain;
use trajsynth::Vec2;

#[test]
fn generated_dataset_survives_disk() {
    let chain = toy_chain(&ChainConfig::default(), 0).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let chain_path = dir.path().join("toy.tjch");
    write_chain(&chain_path, &chain).unwrap();
    let chain = read_chain(&chain_path).unwrap();

    let (mc, sc) = (MapGenConfig::default(), SampleConfig::default());
    let samples: Vec<_> = (0..4).map(|s| generate_sample(&chain, &mc, &sc, s).unwrap()).collect();
    let snapshot = GeneratorSnapshot {
        chain_sha256: chain_digest(&chain).unwrap(),
        map: mc,
        sample: sc,
        base_seed: 0,
    };
    let path = dir.path().join("set.tjds");
    let manifest = write_dataset(&path, &samples, Some(snapshot.clone())).unwrap();
    let (read_manifest, back) = read_dataset(&path).unwrap();
    assert_eq!(back, samples);
    assert_eq!(read_manifest, manifest);
    assert_eq!(manifest.generator, Some(snapshot));
    assert_eq!(manifest.seeds, vec![0, 1, 2, 3]);
}

#[test]
fn prediction_file_layout() {
    let rec = PredictionRecord {
        sample: 7,
        predictions: vec![vec![Vec2::new(0.5, -1.0), Vec2::new(1.0, 2.25)]],
    };
    let mut buf = Vec::new();
    write_predictions(&mut buf, std::slice::from_ref(&rec)).unwrap();
    assert_eq!(
        String::from_utf8(buf.clone()).unwrap(),
        "{\"format\":\"trajsynth-predictions\",\"version\":1}\n\
         {\"sample\":7,\"predictions\":[[{\"x\":0.5,\"y\":-1.0},{\"x\":1.0,\"y\":2.25}]]}\n"
    );
    assert_eq!(read_predictions(buf.as_slice()).unwrap(), vec![rec]);
}

#[test]
fn baseline_predictions_evaluate_through_the_file() {
    let chain = toy_chain(&ChainConfig::default(), 0).unwrap();
    let samples: Vec<_> = (0..3)
        .map(|s| generate_sample(&chain, &MapGenConfig::default(), &SampleConfig::default(), s).unwrap())
        .collect();
    let records: Vec<PredictionRecord> = samples
        .iter()
        .map(|s| PredictionRecord {
            sample: s.meta.seed,
            predictions: vec![Predictor::Linear.predict(&s.past, FUTURE_LEN).unwrap()],
        })
        .collect();
    let mut buf = Vec::new();
    write_predictions(&mut buf, &records).unwrap();
    let back = read_predictions(buf.as_slice()).unwrap();
    fn items<'a>(samples: &'a [MultimodalSample], recs: &'a [PredictionRecord]) -> Vec<EvalItem<'a>> {
        samples
            .iter()
            .zip(recs)
            .map(|(s, r)| EvalItem {
                sample: s.meta.seed,
                predictions: &r.predictions,
                gt: &s.futures[0],
            })
            .collect()
    }
    let direct = evaluate(&items(&samples, &records), EvalMode::Top1);
    assert_eq!(evaluate(&items(&samples, &back), EvalMode::Top1), direct);
    assert_eq!(direct.evaluated, 3);
}

#[test]
fn match_vectors_recompute_exactly() {
    let file = match_vectors(21, 40, FUTURE_LEN, TrajDistance::MeanL2).unwrap();
    let mut buf = Vec::new();
    write_match_vectors(&mut buf, &file).unwrap();
    let back = read_match_vectors(buf.as_slice()).unwrap();
    for c in back.cases {
        let again = MatchVectorCase::compute(c.predictions.clone(), c.futures.clone(), back.distance).unwrap();
        assert_eq!(again, c);
    }
}
