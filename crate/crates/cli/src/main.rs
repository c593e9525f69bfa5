//! `trajsynth` command line.
//!
//! Exit codes: 0 ok, 2 usage, 3 data error, 4 internal error.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use trajsynth::baselines::Predictor;
use trajsynth::chain::{estimate, ChainConfig, MarkovChain};
use trajsynth::dataset_io::{chain_digest, ingest_real, read_chain, read_dataset, write_chain, write_dataset, GeneratorSnapshot};
use trajsynth::eval::{evaluate, read_predictions, write_predictions, EvalItem, EvalMode, PredictionRecord};
use trajsynth::geometry::NoiseFilter;
use trajsynth::mapgen::MapGenConfig;
use trajsynth::matching::{match_vectors, write_match_vectors, TrajDistance};
use trajsynth::render::render_sample;
use trajsynth::rng::child_seed;
use trajsynth::samples::{generate_sample, MultimodalSample, SampleConfig, FUTURE_LEN};
use trajsynth::server::{serve, ServerConfig};
use trajsynth::toy_logs::{self, ToyLogConfig};
use trajsynth::Error;

#[derive(Parser)]
#[command(name = "trajsynth", version, about = "Synthetic multimodal trajectory samples and classical baselines")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the offset clusters and the Markov chain to recorded trajectories.
    EstimateChain(EstimateArgs),
    /// Generate a fixed dataset archive.
    GenDataset(GenDatasetArgs),
    /// Draw one sample in false colors to a PNG.
    Render(RenderArgs),
    /// Stream freshly generated samples over TCP.
    Serve(ServeArgs),
    /// ADE/FDE of a prediction file or a baseline against a dataset.
    Eval(EvalArgs),
    /// Write seeded assignment and loss test vectors.
    ExportMatchVectors(MatchArgs),
    /// Turn a directory of recorded trajectories into a dataset archive.
    IngestReal(IngestArgs),
}

#[derive(Args)]
struct ChainArgs {
    /// Markov state order (1 = single-timestep states).
    #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u32).range(1..=2))]
    state_order: u32,
    /// Number of k-means clusters over polar offsets.
    #[arg(long, default_value_t = 40)]
    clusters: usize,
    /// Weight of the angle axis in the k-means distance.
    #[arg(long, default_value_t = 1.0)]
    theta_scale: f64,
    /// Offsets shorter than this (m) with a sharper turn than --theta-max are dropped.
    #[arg(long, default_value_t = NoiseFilter::default().rho_min)]
    rho_min: f64,
    /// Radians.
    #[arg(long, default_value_t = NoiseFilter::default().theta_max)]
    theta_max: f64,
}

impl ChainArgs {
    fn config(&self, seed: u64) -> ChainConfig {
        ChainConfig {
            clusters: self.clusters,
            order: self.state_order as usize,
            filter: NoiseFilter {
                rho_min: self.rho_min,
                theta_max: self.theta_max,
            },
            theta_scale: self.theta_scale,
            seed: child_seed(seed, "chain", 0),
            ..Default::default()
        }
    }
}

/// Where the chain comes from: a chain file, or toy driving logs.
#[derive(Args)]
struct ChainSource {
    /// Chain file written by estimate-chain.
    #[arg(long, conflicts_with = "toy_logs")]
    chain: Option<PathBuf>,
    /// Estimate a chain from built-in kinematic logs instead.
    #[arg(long)]
    toy_logs: bool,
    #[command(flatten)]
    chain_args: ChainArgs,
}

impl ChainSource {
    fn load(&self, seed: u64) -> Result<MarkovChain, Failure> {
        match (&self.chain, self.toy_logs) {
            (Some(p), _) => Ok(in_file(p, read_chain(p))?),
            (None, true) => Ok(toy_chain(&self.chain_args, seed)?),
            (None, false) => Err(Failure::usage("give --chain FILE or --toy-logs")),
        }
    }
}

fn toy_chain(args: &ChainArgs, seed: u64) -> trajsynth::Result<MarkovChain> {
    estimate(&toy_logs::generate(&ToyLogConfig::default(), child_seed(seed, "toy-logs", 0)), &args.config(seed))
}

#[derive(Args)]
struct GenArgs {
    /// Base seed; every random draw derives from it through named streams.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    no_lidar_noise: bool,
    #[arg(long)]
    no_shift: bool,
    #[arg(long)]
    no_unreachable: bool,
    /// Largest number of roads per scene, backbone included.
    #[arg(long, default_value_t = 5)]
    branching_max: usize,
    #[arg(long, default_value_t = 0.5)]
    lidar_intensity: f64,
    #[arg(long, default_value_t = 6.0)]
    lane_width: f64,
    #[arg(long, default_value_t = 1.5)]
    sidewalk_width: f64,
    #[arg(long)]
    no_sidewalk_jitter: bool,
    #[arg(long, default_value_t = 1)]
    n_gt_min: usize,
    #[arg(long, default_value_t = 5)]
    n_gt_max: usize,
    /// Context crop side in pixels.
    #[arg(long, default_value_t = 360)]
    crop_size: usize,
}

impl GenArgs {
    fn configs(&self) -> Result<(MapGenConfig, SampleConfig), Failure> {
        let map = MapGenConfig {
            lane_width: self.lane_width,
            sidewalk_width: self.sidewalk_width,
            branching_factor_max: self.branching_max,
            unreachable_roads: !self.no_unreachable,
            lidar_noise: !self.no_lidar_noise,
            lidar_intensity: self.lidar_intensity,
            sidewalk_jitter: !self.no_sidewalk_jitter,
            ..Default::default()
        };
        let sample = SampleConfig {
            n_gt_min: self.n_gt_min,
            n_gt_max: self.n_gt_max,
            shift_enabled: !self.no_shift,
            crop_size: self.crop_size,
            ..Default::default()
        };
        map.validate().map_err(|e| Failure::usage(e.to_string()))?;
        sample.validate().map_err(|e| Failure::usage(e.to_string()))?;
        Ok((map, sample))
    }
}

#[derive(Args)]
struct EstimateArgs {
    /// Directory of recorded trajectories (`index x y` rows, .txt or .csv).
    #[arg(long, conflicts_with = "toy_logs", required_unless_present = "toy_logs")]
    split: Option<PathBuf>,
    #[arg(long)]
    toy_logs: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    chain: ChainArgs,
    #[arg(short, long)]
    out: PathBuf,
}

#[derive(Args)]
struct GenDatasetArgs {
    #[command(flatten)]
    source: ChainSource,
    #[command(flatten)]
    gen: GenArgs,
    #[arg(long)]
    count: usize,
    /// Worker threads (default: all cores). Output order never depends on it.
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(short, long)]
    out: PathBuf,
}

#[derive(Args)]
struct RenderArgs {
    /// Render a sample from this archive...
    #[arg(long, conflicts_with_all = ["chain", "toy_logs"])]
    dataset: Option<PathBuf>,
    /// ...at this position.
    #[arg(long, default_value_t = 0)]
    index: usize,
    /// Or generate one from a chain with --seed and the generation flags.
    #[command(flatten)]
    source: ChainSource,
    #[command(flatten)]
    gen: GenArgs,
    /// Prediction file whose record for this sample is overlaid in blue.
    #[arg(long)]
    predictions: Option<PathBuf>,
    /// Pixel magnification.
    #[arg(long, default_value_t = 2)]
    scale: usize,
    #[arg(short, long)]
    out: PathBuf,
}

#[derive(Args)]
struct ServeArgs {
    #[command(flatten)]
    source: ChainSource,
    #[command(flatten)]
    gen: GenArgs,
    #[arg(long, default_value = "127.0.0.1:7878")]
    bind: String,
    /// Recorded trajectories mixed into the stream per the request's ratio.
    #[arg(long)]
    real_split: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Baseline {
    ConstantVelocity,
    Linear,
    Kalman,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Top1,
    BestOfK,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, required_unless_present = "baseline", conflicts_with = "baseline")]
    predictions: Option<PathBuf>,
    #[arg(long, value_enum)]
    baseline: Option<Baseline>,
    #[arg(long, value_enum, default_value = "top1")]
    mode: Mode,
    /// Kalman process noise, m/s^2.
    #[arg(long, default_value_t = 1.0)]
    kalman_sigma_a: f64,
    /// Kalman measurement noise, m.
    #[arg(long, default_value_t = 0.1)]
    kalman_sigma_z: f64,
    /// Also write the report as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
    /// Save baseline outputs as a prediction file.
    #[arg(long, requires = "baseline")]
    write_predictions: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Distance {
    MeanL2,
    SumL2,
    FinalL2,
}

#[derive(Args)]
struct MatchArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 64)]
    count: usize,
    #[arg(long, default_value_t = FUTURE_LEN)]
    steps: usize,
    #[arg(long, value_enum, default_value = "mean-l2")]
    distance: Distance,
    #[arg(short, long)]
    out: PathBuf,
}

#[derive(Args)]
struct IngestArgs {
    #[arg(long)]
    split: PathBuf,
    #[arg(short, long)]
    out: PathBuf,
}

#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(m: impl Into<String>) -> Self {
        Self { code: 2, message: m.into() }
    }

    fn data(m: impl Into<String>) -> Self {
        Self { code: 3, message: m.into() }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Config(_) => 2,
            _ => 3,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::data(e.to_string())
    }
}

fn in_file<T>(path: &Path, r: trajsynth::Result<T>) -> Result<T, Failure> {
    r.map_err(|e| {
        let mut f = Failure::from(e);
        f.message = format!("{}: {}", path.display(), f.message);
        f
    })
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Failure::data(format!("{}: {e}", path.display())))
}

fn open(path: &Path) -> Result<BufReader<File>, Failure> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Failure::data(format!("{}: {e}", path.display())))
}

fn estimate_chain(a: EstimateArgs) -> Result<(), Failure> {
    let chain = match &a.split {
        Some(dir) => {
            let report = in_file(dir, ingest_real(dir))?;
            if report.items.is_empty() {
                return Err(Failure::data(format!("no usable trajectories in {}", dir.display())));
            }
            let trajs: Vec<_> = report.items.into_iter().map(|i| i.trajectory).collect();
            estimate(&trajs, &a.chain.config(a.seed))?
        }
        None => toy_chain(&a.chain, a.seed)?,
    };
    write_chain(&a.out, &chain)?;
    println!(
        "{} clusters, order {}, {} states -> {}",
        chain.clusters.len(),
        chain.order,
        chain.state_count(),
        a.out.display()
    );
    Ok(())
}

/// Seed of dataset record `i`.
fn sample_seed(base: u64, i: u64) -> u64 {
    child_seed(base, "sample", i)
}

fn gen_dataset(a: GenDatasetArgs) -> Result<(), Failure> {
    let chain = a.source.load(a.gen.seed)?;
    let (mc, sc) = a.gen.configs()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(a.jobs.unwrap_or(0))
        .build()
        .map_err(|e| Failure { code: 4, message: e.to_string() })?;
    let samples: Vec<MultimodalSample> = pool.install(|| {
        (0..a.count as u64)
            .into_par_iter()
            .map(|i| generate_sample(&chain, &mc, &sc, sample_seed(a.gen.seed, i)))
            .collect::<trajsynth::Result<_>>()
    })?;
    let snapshot = GeneratorSnapshot {
        chain_sha256: chain_digest(&chain)?,
        map: mc,
        sample: sc,
        base_seed: a.gen.seed,
    };
    let manifest = write_dataset(&a.out, &samples, Some(snapshot))?;
    println!("{} samples -> {} (sha256 {})", manifest.sample_count, a.out.display(), manifest.content_sha256);
    Ok(())
}

fn render(a: RenderArgs) -> Result<(), Failure> {
    let sample = match &a.dataset {
        Some(p) => {
            let (_, mut samples) = in_file(p, read_dataset(p))?;
            if a.index >= samples.len() {
                return Err(Failure::data(format!("index {} outside a {}-sample archive", a.index, samples.len())));
            }
            samples.swap_remove(a.index)
        }
        None => {
            let chain = a.source.load(a.gen.seed)?;
            let (mc, sc) = a.gen.configs()?;
            generate_sample(&chain, &mc, &sc, a.gen.seed)?
        }
    };
    let preds = match &a.predictions {
        Some(p) => read_predictions(open(p)?)?
            .into_iter()
            .find(|r| r.sample == sample.meta.seed)
            .map(|r| r.predictions)
            .unwrap_or_default(),
        None => Vec::new(),
    };
    let img = render_sample(&sample, &preds, a.scale);
    image::RgbaImage::from_raw(img.width as u32, img.height as u32, img.data)
        .ok_or_else(|| Failure { code: 4, message: "raster size mismatch".into() })?
        .save(&a.out)
        .map_err(|e| Failure::data(format!("{}: {e}", a.out.display())))?;
    println!("sample {} -> {}", sample.meta.seed, a.out.display());
    Ok(())
}

fn serve_cmd(a: ServeArgs) -> Result<(), Failure> {
    let chain = a.source.load(a.gen.seed)?;
    let (mc, sc) = a.gen.configs()?;
    let mut cfg = ServerConfig::new(Arc::new(chain), mc, sc)?;
    if let Some(dir) = &a.real_split {
        let real: Vec<MultimodalSample> = in_file(dir, ingest_real(dir))?
            .items
            .iter()
            .enumerate()
            .filter_map(|(i, it)| it.to_sample(i as u64).ok())
            .collect();
        if real.is_empty() {
            return Err(Failure::data(format!("no usable trajectories in {}", dir.display())));
        }
        cfg = cfg.with_real(real);
    }
    let hash = cfg.config_hash();
    let handle = serve(a.bind.as_str(), cfg)?;
    println!("listening on {} (config hash {hash:016x})", handle.local_addr());
    handle.join();
    Ok(())
}

fn eval_cmd(a: EvalArgs) -> Result<(), Failure> {
    let (_, samples) = in_file(&a.dataset, read_dataset(&a.dataset))?;
    let records: Vec<PredictionRecord> = match (&a.predictions, a.baseline) {
        (Some(p), _) => read_predictions(open(p)?)?,
        (None, Some(b)) => {
            let predictor = match b {
                Baseline::ConstantVelocity => Predictor::ConstantVelocity,
                Baseline::Linear => Predictor::Linear,
                Baseline::Kalman => Predictor::Kalman {
                    sigma_a: a.kalman_sigma_a,
                    sigma_z: a.kalman_sigma_z,
                    dt: 0.1,
                },
            };
            samples
                .iter()
                .map(|s| {
                    Ok(PredictionRecord {
                        sample: s.meta.seed,
                        predictions: vec![predictor.predict(&s.past, FUTURE_LEN)?],
                    })
                })
                .collect::<trajsynth::Result<_>>()?
        }
        (None, None) => return Err(Failure::usage("give --predictions FILE or --baseline")),
    };
    if let Some(p) = &a.write_predictions {
        write_predictions(create(p)?, &records)?;
    }
    let by_seed: std::collections::HashMap<u64, &PredictionRecord> = records.iter().map(|r| (r.sample, r)).collect();
    let mut missing = 0;
    let items: Vec<EvalItem> = samples
        .iter()
        .filter_map(|s| {
            let r = by_seed.get(&s.meta.seed);
            missing += r.is_none() as usize;
            r.map(|r| EvalItem {
                sample: s.meta.seed,
                predictions: &r.predictions,
                gt: &s.futures[0],
            })
        })
        .collect();
    let mode = match a.mode {
        Mode::Top1 => EvalMode::Top1,
        Mode::BestOfK => EvalMode::BestOfK,
    };
    let report = evaluate(&items, mode);
    print!("{}", report.to_table());
    if missing > 0 {
        println!("{missing} samples had no predictions");
    }
    if let Some(p) = &a.json {
        let mut w = create(p)?;
        serde_json::to_writer_pretty(&mut w, &report).map_err(|e| Failure::data(e.to_string()))?;
        w.flush()?;
    }
    Ok(())
}

fn export_match_vectors(a: MatchArgs) -> Result<(), Failure> {
    let d = match a.distance {
        Distance::MeanL2 => TrajDistance::MeanL2,
        Distance::SumL2 => TrajDistance::SumL2,
        Distance::FinalL2 => TrajDistance::FinalL2,
    };
    let file = match_vectors(a.seed, a.count, a.steps, d)?;
    let mut w = create(&a.out)?;
    write_match_vectors(&mut w, &file)?;
    w.flush()?;
    println!("{} cases -> {}", file.cases.len(), a.out.display());
    Ok(())
}

fn ingest(a: IngestArgs) -> Result<(), Failure> {
    let report = in_file(&a.split, ingest_real(&a.split))?;
    let samples: Vec<MultimodalSample> = report
        .items
        .iter()
        .enumerate()
        .filter_map(|(i, it)| match it.to_sample(i as u64) {
            Ok(s) => Some(s),
            Err(e) => {
                log::warn!("{e}");
                None
            }
        })
        .collect();
    let manifest = write_dataset(&a.out, &samples, None)?;
    println!(
        "{} samples ({} files rejected) -> {}",
        manifest.sample_count,
        report.rejected.len(),
        a.out.display()
    );
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::EstimateChain(a) => estimate_chain(a),
        Command::GenDataset(a) => gen_dataset(a),
        Command::Render(a) => render(a),
        Command::Serve(a) => serve_cmd(a),
        Command::Eval(a) => eval_cmd(a),
        Command::ExportMatchVectors(a) => export_match_vectors(a),
        Command::IngestReal(a) => ingest(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match std::panic::catch_unwind(|| run(cli)) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(f)) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
        Err(_) => ExitCode::from(4),
    }
}
