//! Binary chain files, dataset archives and ingestion of recorded splits.
//!
//! Layouts are documented in `docs/formats.md`. All numbers are
//! little-endian; every file ends with the SHA-256 of the bytes before it.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::chain::{ChainState, ClusterModel, InitialMode, MarkovChain, TransitionRow};
use crate::codec::{hex, ByteReader, ByteWriter};
use crate::error::{Error, Result};
use crate::geometry::{normalize_heading_up, PolarOffset, Pose, Trajectory, Vec2};
use crate::mapgen::{Class, MapGenConfig, SemanticMap};
use crate::samples::{MultimodalSample, SampleConfig, SampleMeta, Source, FUTURE_LEN, MAX_FUTURES, PAST_LEN};

pub const CHAIN_MAGIC: &[u8; 4] = b"TJCH";
pub const CHAIN_VERSION: u32 = 1;
pub const DATASET_MAGIC: &[u8; 4] = b"TJDS";
pub const DATASET_VERSION: u32 = 1;

const DIGEST_LEN: usize = 32;
const MAX_COUNT: usize = 1 << 28;

fn seal(mut w: ByteWriter) -> Vec<u8> {
    let digest = Sha256::digest(&w.buf);
    w.bytes(&digest);
    w.buf
}

/// Checks the trailing digest and returns the body.
fn unseal<'a>(data: &'a [u8], what: &str) -> Result<&'a [u8]> {
    if data.len() < DIGEST_LEN {
        return Err(Error::Format(format!("{what} shorter than its checksum")));
    }
    let (body, digest) = data.split_at(data.len() - DIGEST_LEN);
    if Sha256::digest(body).as_slice() != digest {
        return Err(Error::Checksum(what.to_string()));
    }
    Ok(body)
}

fn check_header(r: &mut ByteReader<'_>, magic: &[u8; 4], version: u32) -> Result<()> {
    if r.take(4)? != magic {
        return Err(Error::Format(format!("bad magic, expected {}", String::from_utf8_lossy(magic))));
    }
    let found = r.u32()?;
    if found != version {
        return Err(Error::Version { found, expected: version });
    }
    Ok(())
}

fn initial_mode_code(m: InitialMode) -> u8 {
    match m {
        InitialMode::Frequency => 0,
        InitialMode::Uniform => 1,
    }
}

pub fn encode_chain(chain: &MarkovChain) -> Result<Vec<u8>> {
    let mut w = ByteWriter::new();
    w.bytes(CHAIN_MAGIC);
    w.u32(CHAIN_VERSION);
    w.len_u32(chain.order)?;
    w.len_u32(chain.clusters.len())?;
    w.f64(chain.clusters.theta_scale);
    w.u8(initial_mode_code(chain.initial_mode));
    for c in &chain.clusters.centroids {
        w.f64(c.rho);
        w.f64(c.theta);
    }
    for i in 0..chain.clusters.len() {
        let members = chain.clusters.members.get(i).map_or(&[][..], Vec::as_slice);
        w.len_u32(members.len())?;
        for m in members {
            w.f64(m.rho);
            w.f64(m.theta);
        }
    }
    w.len_u32(chain.states.len())?;
    for s in &chain.states {
        for &c in &s.0 {
            w.u32(c);
        }
    }
    for row in &chain.transitions {
        w.len_u32(row.targets.len())?;
        for (&t, &p) in row.targets.iter().zip(&row.probs) {
            w.u32(t);
            w.f64(p);
        }
    }
    for &p in &chain.initial {
        w.f64(p);
    }
    Ok(seal(w))
}

pub fn decode_chain(data: &[u8]) -> Result<MarkovChain> {
    let body = unseal(data, "chain file")?;
    let mut r = ByteReader::new(body, "chain file");
    check_header(&mut r, CHAIN_MAGIC, CHAIN_VERSION)?;
    let order = r.count(64)?;
    let c = r.count(MAX_COUNT)?;
    let theta_scale = r.f64()?;
    let initial_mode = match r.u8()? {
        0 => InitialMode::Frequency,
        1 => InitialMode::Uniform,
        v => return Err(Error::Format(format!("unknown initial mode {v}"))),
    };
    let offset = |r: &mut ByteReader<'_>| -> Result<PolarOffset> { Ok(PolarOffset::new(r.f64()?, r.f64()?)) };
    let centroids = (0..c).map(|_| offset(&mut r)).collect::<Result<Vec<_>>>()?;
    let mut members = Vec::with_capacity(c);
    for _ in 0..c {
        let n = r.count(MAX_COUNT)?;
        members.push((0..n).map(|_| offset(&mut r)).collect::<Result<Vec<_>>>()?);
    }
    let s = r.count(MAX_COUNT)?;
    let states = (0..s)
        .map(|_| (0..order).map(|_| r.u32()).collect::<Result<Vec<_>>>().map(ChainState))
        .collect::<Result<Vec<_>>>()?;
    let mut transitions = Vec::with_capacity(s);
    for _ in 0..s {
        let n = r.count(MAX_COUNT)?;
        let mut row = TransitionRow::default();
        for _ in 0..n {
            row.targets.push(r.u32()?);
            row.probs.push(r.f64()?);
        }
        transitions.push(row);
    }
    let initial = (0..s).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
    r.finish()?;
    let clusters = ClusterModel {
        centroids,
        members,
        theta_scale,
    };
    MarkovChain::from_parts(clusters, order, states, transitions, initial, initial_mode)
}

pub fn write_chain(path: &Path, chain: &MarkovChain) -> Result<()> {
    fs::write(path, encode_chain(chain)?)?;
    Ok(())
}

pub fn read_chain(path: &Path) -> Result<MarkovChain> {
    decode_chain(&fs::read(path)?)
}

/// SHA-256 of the encoded chain, hex.
pub fn chain_digest(chain: &MarkovChain) -> Result<String> {
    Ok(hex(&Sha256::digest(encode_chain(chain)?)))
}

/// Settings a synthetic dataset was generated with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSnapshot {
    pub chain_sha256: String,
    pub map: MapGenConfig,
    pub sample: SampleConfig,
    pub base_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub sample_count: u64,
    /// Per-sample seeds in archive order.
    pub seeds: Vec<u64>,
    pub generator: Option<GeneratorSnapshot>,
    /// SHA-256 (hex) of the sample section.
    pub content_sha256: String,
}

fn encode_pose(w: &mut ByteWriter, p: &Pose) {
    w.f64(p.position.x);
    w.f64(p.position.y);
    w.f64(p.heading);
}

fn decode_pose(r: &mut ByteReader<'_>) -> Result<Pose> {
    // Field-wise so the stored heading comes back bit-exact.
    Ok(Pose {
        position: Vec2::new(r.f64()?, r.f64()?),
        heading: r.f64()?,
    })
}

fn source_code(s: Source) -> u8 {
    match s {
        Source::Synthetic => 0,
        Source::Real => 1,
    }
}

fn decode_source(v: u8) -> Result<Source> {
    match v {
        0 => Ok(Source::Synthetic),
        1 => Ok(Source::Real),
        _ => Err(Error::Format(format!("unknown sample source {v}"))),
    }
}

const NO_BRANCH: u32 = u32::MAX;

fn encode_sample(w: &mut ByteWriter, s: &MultimodalSample) -> Result<()> {
    let m = &s.meta;
    w.u8(source_code(m.source));
    w.u64(m.seed);
    w.u64(m.scene_id);
    w.f64(m.shift);
    encode_pose(w, &m.world_present);
    w.u8(m.fewer_futures as u8);
    w.u32(m.out_of_canvas);
    let map = &s.map;
    let dim = |n: usize| u16::try_from(n).map_err(|_| Error::Format(format!("map side {n} exceeds u16")));
    w.u16(dim(map.height)?);
    w.u16(dim(map.width)?);
    w.f64(map.resolution);
    encode_pose(w, &map.origin);
    w.bytes(&map.classes);
    for p in &s.past {
        w.f64(p.x);
        w.f64(p.y);
    }
    w.u8(s.futures.len() as u8);
    for (f, b) in s.futures.iter().zip(&m.branch_indices) {
        w.u32(b.unwrap_or(NO_BRANCH));
        for p in f {
            w.f64(p.x);
            w.f64(p.y);
        }
    }
    Ok(())
}

fn decode_points(r: &mut ByteReader<'_>, n: usize) -> Result<Vec<Vec2>> {
    (0..n).map(|_| Ok(Vec2::new(r.f64()?, r.f64()?))).collect()
}

fn decode_sample(r: &mut ByteReader<'_>) -> Result<MultimodalSample> {
    let source = decode_source(r.u8()?)?;
    let seed = r.u64()?;
    let scene_id = r.u64()?;
    let shift = r.f64()?;
    let world_present = decode_pose(r)?;
    let fewer_futures = match r.u8()? {
        0 => false,
        1 => true,
        v => return Err(Error::Format(format!("bad flag byte {v}"))),
    };
    let out_of_canvas = r.u32()?;
    let height = r.u16()? as usize;
    let width = r.u16()? as usize;
    let resolution = r.f64()?;
    let origin = decode_pose(r)?;
    let classes = r.take(width * height)?.to_vec();
    if let Some(bad) = classes.iter().find(|&&c| Class::from_u8(c).is_none()) {
        return Err(Error::Format(format!("unknown class id {bad}")));
    }
    let mut map = SemanticMap::new(width, height, resolution, origin)?;
    map.classes = classes;
    let past = decode_points(r, PAST_LEN)?;
    let n_gt = r.u8()? as usize;
    if !(1..=MAX_FUTURES).contains(&n_gt) {
        return Err(Error::Format(format!("{n_gt} futures outside 1..={MAX_FUTURES}")));
    }
    let mut futures = Vec::with_capacity(n_gt);
    let mut branch_indices = Vec::with_capacity(n_gt);
    for _ in 0..n_gt {
        let b = r.u32()?;
        branch_indices.push((b != NO_BRANCH).then_some(b));
        futures.push(decode_points(r, FUTURE_LEN)?);
    }
    let meta = SampleMeta {
        seed,
        scene_id,
        source,
        branch_indices,
        shift,
        world_present,
        fewer_futures,
        out_of_canvas,
    };
    MultimodalSample::new(past, futures, map, meta)
}

/// Encodes an archive. Identical inputs give identical bytes.
pub fn encode_dataset(samples: &[MultimodalSample], generator: Option<GeneratorSnapshot>) -> Result<Vec<u8>> {
    let mut content = ByteWriter::new();
    for s in samples {
        encode_sample(&mut content, s)?;
    }
    let manifest = DatasetManifest {
        format_version: DATASET_VERSION,
        sample_count: samples.len() as u64,
        seeds: samples.iter().map(|s| s.meta.seed).collect(),
        generator,
        content_sha256: hex(&Sha256::digest(&content.buf)),
    };
    let json = serde_json::to_vec(&manifest)?;
    let mut w = ByteWriter::new();
    w.bytes(DATASET_MAGIC);
    w.u32(DATASET_VERSION);
    w.len_u32(json.len())?;
    w.bytes(&json);
    w.u64(samples.len() as u64);
    w.bytes(&content.buf);
    Ok(seal(w))
}

fn decode_manifest<'a>(data: &'a [u8]) -> Result<(DatasetManifest, ByteReader<'a>)> {
    let body = unseal(data, "dataset archive")?;
    let mut r = ByteReader::new(body, "dataset archive");
    check_header(&mut r, DATASET_MAGIC, DATASET_VERSION)?;
    let len = r.count(MAX_COUNT)?;
    let manifest: DatasetManifest = serde_json::from_slice(r.take(len)?)?;
    if manifest.format_version != DATASET_VERSION {
        return Err(Error::Version {
            found: manifest.format_version,
            expected: DATASET_VERSION,
        });
    }
    let count = r.u64()?;
    if count != manifest.sample_count || manifest.seeds.len() as u64 != count {
        return Err(Error::Format("sample count disagrees with the manifest".into()));
    }
    let start = r.position();
    if hex(&Sha256::digest(&body[start..])) != manifest.content_sha256 {
        return Err(Error::Checksum("dataset sample section".into()));
    }
    Ok((manifest, r))
}

pub fn decode_dataset(data: &[u8]) -> Result<(DatasetManifest, Vec<MultimodalSample>)> {
    let (manifest, mut r) = decode_manifest(data)?;
    let samples = (0..manifest.sample_count)
        .map(|_| decode_sample(&mut r))
        .collect::<Result<Vec<_>>>()?;
    r.finish()?;
    Ok((manifest, samples))
}

pub fn write_dataset(path: &Path, samples: &[MultimodalSample], generator: Option<GeneratorSnapshot>) -> Result<DatasetManifest> {
    let bytes = encode_dataset(samples, generator)?;
    let (manifest, _) = decode_manifest(&bytes)?;
    fs::write(path, bytes)?;
    Ok(manifest)
}

pub fn read_dataset(path: &Path) -> Result<(DatasetManifest, Vec<MultimodalSample>)> {
    decode_dataset(&fs::read(path)?)
}

/// One recorded trajectory with its optional map.
#[derive(Debug, Clone, PartialEq)]
pub struct RealItem {
    pub name: String,
    pub trajectory: Trajectory,
    pub map: Option<SemanticMap>,
}

impl RealItem {
    /// Cuts the first 20 + 40 points into a single-future sample in the
    /// heading-up frame of point 19.
    pub fn to_sample(&self, seed: u64) -> Result<MultimodalSample> {
        let pts = self.trajectory.points();
        if pts.len() < PAST_LEN + FUTURE_LEN {
            return Err(Error::Precondition(format!(
                "{}: {} points, need {}",
                self.name,
                pts.len(),
                PAST_LEN + FUTURE_LEN
            )));
        }
        let window = Trajectory::from_points(pts[..PAST_LEN + FUTURE_LEN].to_vec())?;
        let (local, frame) = normalize_heading_up(&window, PAST_LEN - 1)?;
        let local = local.into_points();
        let meta = SampleMeta {
            seed,
            scene_id: seed,
            source: Source::Real,
            branch_indices: vec![None],
            shift: 0.0,
            world_present: frame,
            fewer_futures: false,
            out_of_canvas: 0,
        };
        let map = self.map.clone().unwrap_or_else(SemanticMap::empty);
        MultimodalSample::new(local[..PAST_LEN].to_vec(), vec![local[PAST_LEN..].to_vec()], map, meta)
    }
}

#[derive(Debug, Clone, Default)]
pub struct IngestReport {
    pub items: Vec<RealItem>,
    pub rejected: Vec<(PathBuf, String)>,
}

/// Parses `index x y` rows separated by whitespace or commas. Blank lines,
/// `#` comments and a non-numeric header line are skipped.
pub fn parse_trajectory_text(text: &str) -> Result<Trajectory> {
    let mut points = Vec::new();
    let mut last_index: Option<i64> = None;
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|f| !f.is_empty())
            .collect();
        if n == 0 && fields.first().is_some_and(|f| f.parse::<f64>().is_err()) {
            continue;
        }
        if fields.len() != 3 {
            return Err(Error::InvalidTrajectory(format!("line {}: expected 3 fields, got {}", n + 1, fields.len())));
        }
        let bad = |what: &str| Error::InvalidTrajectory(format!("line {}: bad {what}", n + 1));
        let index: i64 = fields[0].parse::<f64>().ok().filter(|v| v.fract() == 0.0).ok_or_else(|| bad("index"))? as i64;
        let x: f64 = fields[1].parse().map_err(|_| bad("x"))?;
        let y: f64 = fields[2].parse().map_err(|_| bad("y"))?;
        if !(x.is_finite() && y.is_finite()) {
            return Err(Error::InvalidTrajectory(format!("line {}: non-finite coordinate", n + 1)));
        }
        if last_index.is_some_and(|l| index <= l) {
            return Err(Error::InvalidTrajectory(format!("line {}: index not increasing", n + 1)));
        }
        last_index = Some(index);
        points.push(Vec2::new(x, y));
    }
    Trajectory::from_points(points)
}

/// Class-id image (pixel value = class id) at `resolution` m/px, centered
/// on the present.
#[cfg(feature = "png")]
pub fn load_class_image(path: &Path, resolution: f64) -> Result<SemanticMap> {
    let img = image::open(path)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?
        .to_luma8();
    let (w, h) = img.dimensions();
    let mut map = SemanticMap::new(w as usize, h as usize, resolution, Pose::identity())?;
    for (i, p) in img.pixels().enumerate() {
        if Class::from_u8(p.0[0]).is_none() {
            return Err(Error::Format(format!("{}: pixel value {} is not a class id", path.display(), p.0[0])));
        }
        map.classes[i] = p.0[0];
    }
    Ok(map)
}

/// Loads every `*.txt` / `*.csv` trajectory in `dir` (sorted by name). A
/// `<stem>.png` next to a trajectory is read as its class-id map when the
/// `png` feature is enabled. Bad files are reported, not fatal.
pub fn ingest_real(dir: &Path) -> Result<IngestReport> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && matches!(p.extension().and_then(|e| e.to_str()), Some("txt" | "csv")))
        .collect();
    paths.sort();
    let mut report = IngestReport::default();
    for path in paths {
        let loaded = fs::read_to_string(&path)
            .map_err(Error::from)
            .and_then(|t| parse_trajectory_text(&t))
            .and_then(|trajectory| {
                let map = load_side_map(&path.with_extension("png"))?;
                Ok(RealItem {
                    name: path.file_stem().unwrap_or_default().to_string_lossy().into_owned(),
                    trajectory,
                    map,
                })
            });
        match loaded {
            Ok(item) => report.items.push(item),
            Err(e) => {
                log::warn!("rejected {}: {e}", path.display());
                report.rejected.push((path, e.to_string()));
            }
        }
    }
    log::info!("ingested {} trajectories, rejected {}", report.items.len(), report.rejected.len());
    Ok(report)
}

#[cfg(feature = "png")]
fn load_side_map(path: &Path) -> Result<Option<SemanticMap>> {
    if path.is_file() {
        load_class_image(path, 0.5).map(Some)
    } else {
        Ok(None)
    }
}

#[cfg(not(feature = "png"))]
fn load_side_map(_path: &Path) -> Result<Option<SemanticMap>> {
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::{estimate, ChainConfig};
    use crate::toy_logs::{self, ToyLogConfig};

    fn toy_chain() -> MarkovChain {
        let logs = toy_logs::generate(
            &ToyLogConfig {
                count: 40,
                ..Default::default()
            },
            1,
        );
        estimate(
            &logs,
            &ChainConfig {
                clusters: 12,
                ..Default::default()
            },
        )
        .unwrap()
    }

    #[test]
    fn chain_round_trip_and_corruption() {
        let chain = toy_chain();
        let bytes = encode_chain(&chain).unwrap();
        assert_eq!(&bytes[..4], CHAIN_MAGIC);
        let back = decode_chain(&bytes).unwrap();
        assert_eq!(back, chain);
        assert_eq!(encode_chain(&back).unwrap(), bytes);

        let mut bad = bytes.clone();
        bad[20] ^= 1;
        assert!(matches!(decode_chain(&bad), Err(Error::Checksum(_))));
        assert!(decode_chain(&bytes[..10]).is_err());
    }

    #[test]
    fn chain_version_is_checked() {
        let mut w = ByteWriter::new();
        w.bytes(CHAIN_MAGIC);
        w.u32(99);
        assert!(matches!(decode_chain(&seal(w)), Err(Error::Version { found: 99, .. })));
    }

    fn tiny_sample(seed: u64) -> MultimodalSample {
        let mut map = SemanticMap::new(4, 2, 0.5, Pose::identity()).unwrap();
        map.classes = vec![0, 1, 2, 1, 0, 0, 2, 1];
        let past = (0..PAST_LEN).map(|i| Vec2::new(0.1 * i as f64, -(i as f64) / 3.0)).collect();
        let fut = |k: f64| (0..FUTURE_LEN).map(|i| Vec2::new(k, i as f64 * 0.7)).collect();
        let meta = SampleMeta {
            seed,
            scene_id: seed ^ 5,
            source: Source::Synthetic,
            branch_indices: vec![None, Some(7)],
            shift: -0.3,
            world_present: Pose::new(Vec2::new(1.0, 2.0), 0.3),
            fewer_futures: true,
            out_of_canvas: 12,
        };
        MultimodalSample::new(past, vec![fut(0.0), fut(1.0 / 3.0)], map, meta).unwrap()
    }

    #[test]
    fn dataset_round_trip() {
        let samples = vec![tiny_sample(1), tiny_sample(2)];
        let bytes = encode_dataset(&samples, None).unwrap();
        let (manifest, back) = decode_dataset(&bytes).unwrap();
        assert_eq!(back, samples);
        assert_eq!(manifest.sample_count, 2);
        assert_eq!(manifest.seeds, vec![1, 2]);
        assert_eq!(encode_dataset(&back, None).unwrap(), bytes);
    }

    #[test]
    fn empty_dataset() {
        let bytes = encode_dataset(&[], None).unwrap();
        let (m, s) = decode_dataset(&bytes).unwrap();
        assert_eq!(m.sample_count, 0);
        assert!(s.is_empty());
    }

    #[test]
    fn corrupt_dataset_is_rejected() {
        let bytes = encode_dataset(&[tiny_sample(1)], None).unwrap();
        let mut bad = bytes.clone();
        let n = bad.len();
        bad[n - 40] ^= 0x10;
        assert!(matches!(decode_dataset(&bad), Err(Error::Checksum(_))));
        let mut bad = bytes;
        bad[0] = b'X';
        assert!(decode_dataset(&bad).is_err());
    }

    #[test]
    fn parse_rows() {
        let t = parse_trajectory_text("frame,x,y\n0,1.5,2\n1, 2.5 ,3\n\n# note\n2\t3.5\t4\n").unwrap();
        assert_eq!(t.points(), &[Vec2::new(1.5, 2.0), Vec2::new(2.5, 3.0), Vec2::new(3.5, 4.0)]);
        assert!(parse_trajectory_text("0 1 2\n1 NaN 3\n").is_err());
        assert!(parse_trajectory_text("0 1 2\n1 2\n").is_err());
        assert!(parse_trajectory_text("0 1 2\n0 2 3\n").is_err());
        assert!(parse_trajectory_text("0 1 2\n").is_err());
    }

    #[test]
    fn ingest_directory() {
        let dir = tempfile::tempdir().unwrap();
        let good: String = (0..60).map(|i| format!("{i} {} {}\n", i as f64 * 0.5, 0.0)).collect();
        fs::write(dir.path().join("a.txt"), &good).unwrap();
        fs::write(dir.path().join("b.txt"), "0 0 0\n1 NaN 1\n").unwrap();
        fs::write(dir.path().join("c.csv"), good.replace(' ', ",")).unwrap();
        fs::write(dir.path().join("ignored.md"), "x").unwrap();
        let r = ingest_real(dir.path()).unwrap();
        assert_eq!(r.items.len(), 2);
        assert_eq!(r.items[0].name, "a");
        assert_eq!(r.items[0].trajectory.len(), 60);
        assert_eq!(r.rejected.len(), 1);
        assert!(r.rejected[0].0.ends_with("b.txt"));

        let s = r.items[0].to_sample(0).unwrap();
        assert_eq!(s.meta.source, Source::Real);
        assert!(s.present().norm() < 1e-12);
        assert!((s.futures[0][39].y - 20.0).abs() < 1e-9);
        assert!(s.futures[0][39].x.abs() < 1e-9);
    }

    #[cfg(feature = "png")]
    #[test]
    fn ingest_class_image() {
        let dir = tempfile::tempdir().unwrap();
        let good: String = (0..60).map(|i| format!("{i} {} 1\n", i as f64)).collect();
        fs::write(dir.path().join("s.txt"), &good).unwrap();
        let img = image::GrayImage::from_raw(3, 2, vec![0, 1, 2, 2, 1, 0]).unwrap();
        img.save(dir.path().join("s.png")).unwrap();
        fs::write(dir.path().join("t.txt"), &good).unwrap();
        image::GrayImage::from_raw(1, 1, vec![200]).unwrap().save(dir.path().join("t.png")).unwrap();
        let r = ingest_real(dir.path()).unwrap();
        assert_eq!(r.items.len(), 1);
        let map = r.items[0].map.as_ref().unwrap();
        assert_eq!((map.width, map.height), (3, 2));
        assert_eq!(map.classes, vec![0, 1, 2, 2, 1, 0]);
        assert_eq!(r.rejected.len(), 1);
    }
}
