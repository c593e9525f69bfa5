use std::io::{BufRead, BufReader};
use std::path::Path;
use std::process::{Command, Output, Stdio};

use trajsynth::dataset_io::{read_chain, read_dataset};
use trajsynth::matching::read_match_vectors;
use trajsynth::server::{Client, Frame, StreamRequest};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_trajsynth"))
}

fn run(args: &[&str], dir: &Path) -> Output {
    bin().args(args).current_dir(dir).output().unwrap()
}

fn ok(args: &[&str], dir: &Path) -> String {
    let out = run(args, dir);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn gen_dataset_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&["gen-dataset", "--toy-logs", "--seed", "7", "--count", "10", "-o", "a.tjds"], d);
    ok(&["gen-dataset", "--toy-logs", "--seed", "7", "--count", "10", "--jobs", "1", "-o", "b.tjds"], d);
    let a = std::fs::read(d.join("a.tjds")).unwrap();
    assert_eq!(a, std::fs::read(d.join("b.tjds")).unwrap());
    let (manifest, samples) = read_dataset(&d.join("a.tjds")).unwrap();
    assert_eq!(samples.len(), 10);
    assert_eq!(manifest.generator.unwrap().base_seed, 7);
    ok(&["gen-dataset", "--toy-logs", "--seed", "8", "--count", "10", "-o", "c.tjds"], d);
    assert_ne!(a, std::fs::read(d.join("c.tjds")).unwrap());
}

#[test]
fn ablation_flags_reach_the_generator() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&["estimate-chain", "--toy-logs", "--state-order", "1", "--clusters", "20", "-o", "c.tjch"], d);
    let chain = read_chain(&d.join("c.tjch")).unwrap();
    assert_eq!((chain.order, chain.clusters.len()), (1, 20));
    ok(
        &[
            "gen-dataset", "--chain", "c.tjch", "--count", "3", "--no-lidar-noise", "--no-shift", "--no-unreachable",
            "--branching-max", "2", "-o", "abl.tjds",
        ],
        d,
    );
    let (m, samples) = read_dataset(&d.join("abl.tjds")).unwrap();
    let g = m.generator.unwrap();
    assert!(!g.map.lidar_noise && !g.map.unreachable_roads && !g.sample.shift_enabled);
    assert_eq!(g.map.branching_factor_max, 2);
    assert!(samples.iter().all(|s| s.meta.shift == 0.0));
}

#[test]
fn eval_render_and_vectors() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&["gen-dataset", "--toy-logs", "--count", "4", "-o", "s.tjds"], d);
    let table = ok(
        &["eval", "--dataset", "s.tjds", "--baseline", "linear", "--json", "r.json", "--write-predictions", "p.jsonl"],
        d,
    );
    assert!(table.contains("4s"), "{table}");
    let from_file = ok(&["eval", "--dataset", "s.tjds", "--predictions", "p.jsonl", "--json", "r2.json"], d);
    assert_eq!(from_file, table);
    assert_eq!(std::fs::read(d.join("r.json")).unwrap(), std::fs::read(d.join("r2.json")).unwrap());
    ok(&["eval", "--dataset", "s.tjds", "--baseline", "kalman", "--mode", "best-of-k", "--kalman-sigma-z", "0.3"], d);

    ok(&["render", "--dataset", "s.tjds", "--index", "1", "--predictions", "p.jsonl", "-o", "s.png"], d);
    ok(&["render", "--toy-logs", "--seed", "3", "--scale", "1", "-o", "g.png"], d);
    let png = std::fs::read(d.join("s.png")).unwrap();
    assert_eq!(&png[1..4], b"PNG");

    ok(&["export-match-vectors", "--seed", "5", "--count", "9", "-o", "mv.json"], d);
    let mv = read_match_vectors(std::fs::File::open(d.join("mv.json")).unwrap()).unwrap();
    assert_eq!((mv.seed, mv.cases.len()), (5, 9));
}

#[test]
fn real_split_ingestion() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let split = d.join("split");
    std::fs::create_dir(&split).unwrap();
    for k in 0..3 {
        let rows: String = (0..80).map(|i| format!("{i} {} {}\n", i as f64 * 0.9, k as f64 + 0.01 * (i * i) as f64)).collect();
        std::fs::write(split.join(format!("drive{k}.txt")), rows).unwrap();
    }
    std::fs::write(split.join("broken.txt"), "0 1 nan\n").unwrap();
    let out = ok(&["ingest-real", "--split", "split", "-o", "real.tjds"], d);
    assert!(out.contains("3 samples (1 files rejected)"), "{out}");
    ok(&["eval", "--dataset", "real.tjds", "--baseline", "constant-velocity"], d);
    ok(&["estimate-chain", "--split", "split", "--clusters", "4", "-o", "real.tjch"], d);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(run(&["gen-dataset", "--bogus"], d).status.code(), Some(2));
    assert_eq!(run(&["eval", "--dataset", "x.tjds"], d).status.code(), Some(2));
    assert_eq!(run(&["estimate-chain", "--toy-logs", "--state-order", "3", "-o", "c"], d).status.code(), Some(2));
    assert_eq!(run(&["gen-dataset", "--count", "1", "-o", "x.tjds"], d).status.code(), Some(2));
    assert_eq!(
        run(&["gen-dataset", "--toy-logs", "--count", "1", "--lane-width", "-1", "-o", "x"], d).status.code(),
        Some(2)
    );
    assert_eq!(run(&["eval", "--dataset", "missing.tjds", "--baseline", "linear"], d).status.code(), Some(3));
    std::fs::write(d.join("junk.tjds"), b"TJDS garbage").unwrap();
    let out = run(&["eval", "--dataset", "junk.tjds", "--baseline", "linear"], d);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("junk.tjds"));
}

#[test]
fn serve_streams_samples() {
    let mut child = bin()
        .args(["serve", "--toy-logs", "--bind", "127.0.0.1:0"])
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).unwrap();
    let addr = line.split_whitespace().nth(2).unwrap().to_string();
    let result = std::panic::catch_unwind(|| {
        let mut c = Client::connect(addr.as_str()).unwrap();
        let frames = c.request(&StreamRequest::new(2, 1, 0)).unwrap();
        assert_eq!(frames.len(), 2);
        assert!(frames.iter().all(|f| matches!(f, Frame::Sample(_))));
    });
    child.kill().unwrap();
    child.wait().unwrap();
    result.unwrap();
}
