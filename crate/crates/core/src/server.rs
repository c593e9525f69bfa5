//! Pull-based TCP sample stream (`TJF1`).
//!
//! A client sends a fixed 38-byte request; the server answers with exactly
//! `batch` frames. Each frame is a `u32` length followed by a kind byte and a
//! payload. Records depend only on `(base_seed, request_index, position)`,
//! never on the connection. See `docs/formats.md` for the byte layout.

use std::io::{BufReader, BufWriter, ErrorKind, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;

use sha2::{Digest, Sha256};

use crate::chain::MarkovChain;
use crate::codec::{ByteReader, ByteWriter};
use crate::dataset_io::encode_chain;
use crate::error::{Error, Result};
use crate::mapgen::MapGenConfig;
use crate::rng;
use crate::samples::{generate_sample, MultimodalSample, SampleConfig, Source};

pub const MAGIC: &[u8; 4] = b"TJF1";
pub const PROTOCOL_VERSION: u16 = 1;
pub const REQUEST_LEN: usize = 38;
pub const MAX_BATCH: u32 = 4096;
/// Largest frame a client accepts (a 4096 x 4096 map plus trajectories).
pub const MAX_FRAME: usize = 1 << 25;

pub const FRAME_SAMPLE: u8 = 0;
pub const FRAME_ERROR: u8 = 1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StreamRequest {
    pub version: u16,
    pub batch: u32,
    /// Expected [`ServerConfig::config_hash`]; 0 accepts any.
    pub config_hash: u64,
    pub base_seed: u64,
    pub request_index: u64,
    /// Synthetic fraction of each batch when real data is attached.
    pub mix_ratio: f32,
}

impl StreamRequest {
    pub fn new(batch: u32, base_seed: u64, request_index: u64) -> Self {
        Self {
            version: PROTOCOL_VERSION,
            batch,
            config_hash: 0,
            base_seed,
            request_index,
            mix_ratio: 0.5,
        }
    }

    pub fn encode(&self) -> [u8; REQUEST_LEN] {
        let mut w = ByteWriter::new();
        w.bytes(MAGIC);
        w.u16(self.version);
        w.u32(self.batch);
        w.u64(self.config_hash);
        w.u64(self.base_seed);
        w.u64(self.request_index);
        w.f32(self.mix_ratio);
        w.buf.try_into().expect("request length")
    }

    pub fn decode(b: &[u8; REQUEST_LEN]) -> Result<Self> {
        let mut r = ByteReader::new(b, "request");
        if r.take(4)? != MAGIC {
            return Err(Error::Protocol("bad magic".into()));
        }
        Ok(Self {
            version: r.u16()?,
            batch: r.u32()?,
            config_hash: r.u64()?,
            base_seed: r.u64()?,
            request_index: r.u64()?,
            mix_ratio: r.f32()?,
        })
    }

    fn validate(&self) -> Result<()> {
        if self.batch == 0 || self.batch > MAX_BATCH {
            return Err(Error::Protocol(format!("batch {} outside 1..={MAX_BATCH}", self.batch)));
        }
        if !(0.0..=1.0).contains(&self.mix_ratio) {
            return Err(Error::Protocol(format!("mix ratio {} outside [0, 1]", self.mix_ratio)));
        }
        Ok(())
    }
}

/// Everything a server generates from. Cheap to clone.
#[derive(Debug, Clone)]
pub struct ServerConfig {
    pub chain: Arc<MarkovChain>,
    pub map: MapGenConfig,
    pub sample: SampleConfig,
    pub real: Option<Arc<Vec<MultimodalSample>>>,
    config_hash: u64,
}

impl ServerConfig {
    pub fn new(chain: Arc<MarkovChain>, map: MapGenConfig, sample: SampleConfig) -> Result<Self> {
        map.validate()?;
        sample.validate()?;
        let mut h = Sha256::new();
        h.update(encode_chain(&chain)?);
        h.update(serde_json::to_vec(&map)?);
        h.update(serde_json::to_vec(&sample)?);
        let config_hash = u64::from_le_bytes(h.finalize()[..8].try_into().unwrap());
        Ok(Self {
            chain,
            map,
            sample,
            real: None,
            config_hash,
        })
    }

    pub fn with_real(mut self, real: Vec<MultimodalSample>) -> Self {
        self.real = (!real.is_empty()).then(|| Arc::new(real));
        self
    }

    pub fn config_hash(&self) -> u64 {
        self.config_hash
    }
}

/// Whether record `i` of a batch is synthetic under ratio `r`. Spreads the
/// synthetic records evenly so any prefix is balanced within one record.
pub fn is_synthetic(i: u64, r: f64) -> bool {
    ((i + 1) as f64 * r).floor() - (i as f64 * r).floor() >= 1.0
}

/// Seed of record `position` in request `(base_seed, request_index)`.
pub fn record_seed(base_seed: u64, request_index: u64, position: u64) -> u64 {
    rng::child_seed(rng::child_seed(base_seed, "request", request_index), "record", position)
}

fn frame(kind: u8, payload: &[u8]) -> Vec<u8> {
    let mut w = ByteWriter::new();
    w.u32((payload.len() + 1) as u32);
    w.u8(kind);
    w.bytes(payload);
    w.buf
}

pub fn error_frame(seed: u64, message: &str) -> Vec<u8> {
    let mut w = ByteWriter::new();
    w.u64(seed);
    w.bytes(message.as_bytes());
    frame(FRAME_ERROR, &w.buf)
}

/// Sample frame with float32 trajectories.
pub fn sample_frame(s: &MultimodalSample) -> Result<Vec<u8>> {
    let mut w = ByteWriter::new();
    w.u8(match s.meta.source {
        Source::Synthetic => 0,
        Source::Real => 1,
    });
    w.u64(s.meta.seed);
    let dim = |n: usize| u16::try_from(n).map_err(|_| Error::Protocol(format!("map side {n} exceeds u16")));
    w.u16(dim(s.map.height)?);
    w.u16(dim(s.map.width)?);
    w.bytes(&s.map.classes);
    for p in &s.past {
        w.f32(p.x as f32);
        w.f32(p.y as f32);
    }
    w.u8(s.futures.len() as u8);
    for p in s.futures.iter().flatten() {
        w.f32(p.x as f32);
        w.f32(p.y as f32);
    }
    Ok(frame(FRAME_SAMPLE, &w.buf))
}

/// Frames answering one request, in order.
pub fn respond(cfg: &ServerConfig, req: &StreamRequest) -> Vec<Vec<u8>> {
    if let Err(e) = req.validate() {
        return vec![error_frame(0, &e.to_string())];
    }
    if req.config_hash != 0 && req.config_hash != cfg.config_hash {
        return vec![error_frame(
            0,
            &format!("config hash {:016x} does not match server {:016x}", req.config_hash, cfg.config_hash),
        )];
    }
    (0..req.batch as u64)
        .map(|j| {
            let seed = record_seed(req.base_seed, req.request_index, j);
            let record = match &cfg.real {
                Some(real) if !is_synthetic(j, req.mix_ratio as f64) => {
                    let mut s = real[(seed % real.len() as u64) as usize].clone();
                    s.meta.seed = seed;
                    Ok(s)
                }
                _ => generate_sample(&cfg.chain, &cfg.map, &cfg.sample, seed),
            };
            record
                .and_then(|s| sample_frame(&s))
                .unwrap_or_else(|e| error_frame(seed, &e.to_string()))
        })
        .collect()
}

fn handle(stream: TcpStream, cfg: &ServerConfig) -> Result<()> {
    stream.set_nodelay(true)?;
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut writer = BufWriter::new(stream);
    loop {
        let mut buf = [0u8; REQUEST_LEN];
        match reader.read_exact(&mut buf) {
            Ok(()) => {}
            Err(e) if e.kind() == ErrorKind::UnexpectedEof => return Ok(()),
            Err(e) => return Err(e.into()),
        }
        let req = match StreamRequest::decode(&buf) {
            Ok(r) => r,
            Err(e) => {
                writer.write_all(&error_frame(0, &e.to_string()))?;
                writer.flush()?;
                return Ok(());
            }
        };
        if req.version != PROTOCOL_VERSION {
            let msg = format!("protocol version {} not supported (server speaks {PROTOCOL_VERSION})", req.version);
            writer.write_all(&error_frame(0, &msg))?;
            writer.flush()?;
            return Ok(());
        }
        for f in respond(cfg, &req) {
            writer.write_all(&f)?;
        }
        writer.flush()?;
    }
}

pub struct ServerHandle {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    thread: Option<JoinHandle<()>>,
}

impl ServerHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// Stops accepting connections. Open connections finish on their own.
    pub fn shutdown(mut self) {
        self.stop_now();
    }

    /// Blocks until the accept loop ends.
    pub fn join(mut self) {
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }

    fn stop_now(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        // Wake the blocking accept.
        let _ = TcpStream::connect(self.addr);
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        if self.thread.is_some() {
            self.stop_now();
        }
    }
}

/// Binds and serves on a background thread, one thread per connection.
pub fn serve(bind: impl ToSocketAddrs, cfg: ServerConfig) -> Result<ServerHandle> {
    let listener = TcpListener::bind(bind)?;
    let addr = listener.local_addr()?;
    let stop = Arc::new(AtomicBool::new(false));
    let stop_flag = Arc::clone(&stop);
    let cfg = Arc::new(cfg);
    let thread = std::thread::spawn(move || {
        for conn in listener.incoming() {
            if stop_flag.load(Ordering::SeqCst) {
                break;
            }
            match conn {
                Ok(stream) => {
                    let cfg = Arc::clone(&cfg);
                    std::thread::spawn(move || {
                        let peer = stream.peer_addr().ok();
                        if let Err(e) = handle(stream, &cfg) {
                            log::debug!("connection {peer:?} ended: {e}");
                        }
                    });
                }
                Err(e) => log::warn!("accept failed: {e}"),
            }
        }
    });
    log::info!("serving on {addr}");
    Ok(ServerHandle {
        addr,
        stop,
        thread: Some(thread),
    })
}

/// Decoded sample frame.
#[derive(Debug, Clone, PartialEq)]
pub struct WireSample {
    pub source: Source,
    pub seed: u64,
    pub height: usize,
    pub width: usize,
    pub map: Vec<u8>,
    pub past: Vec<[f32; 2]>,
    pub futures: Vec<Vec<[f32; 2]>>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Frame {
    Sample(WireSample),
    Error { seed: u64, message: String },
}

/// Parses a frame body (kind byte plus payload, without the length).
pub fn decode_frame(body: &[u8]) -> Result<Frame> {
    let mut r = ByteReader::new(body, "frame");
    match r.u8()? {
        FRAME_SAMPLE => {
            let source = match r.u8()? {
                0 => Source::Synthetic,
                1 => Source::Real,
                v => return Err(Error::Protocol(format!("unknown source {v}"))),
            };
            let seed = r.u64()?;
            let height = r.u16()? as usize;
            let width = r.u16()? as usize;
            let map = r.take(height * width)?.to_vec();
            let pts = |r: &mut ByteReader<'_>, n: usize| -> Result<Vec<[f32; 2]>> {
                (0..n).map(|_| Ok([r.f32()?, r.f32()?])).collect()
            };
            let past = pts(&mut r, crate::samples::PAST_LEN)?;
            let n_gt = r.u8()? as usize;
            let futures = (0..n_gt)
                .map(|_| pts(&mut r, crate::samples::FUTURE_LEN))
                .collect::<Result<Vec<_>>>()?;
            r.finish()?;
            Ok(Frame::Sample(WireSample {
                source,
                seed,
                height,
                width,
                map,
                past,
                futures,
            }))
        }
        FRAME_ERROR => {
            let seed = r.u64()?;
            let message = String::from_utf8_lossy(r.take(r.remaining())?).into_owned();
            Ok(Frame::Error { seed, message })
        }
        k => Err(Error::Protocol(format!("unknown frame kind {k}"))),
    }
}

pub struct Client {
    reader: BufReader<TcpStream>,
    writer: TcpStream,
}

impl Client {
    pub fn connect(addr: impl ToSocketAddrs) -> Result<Self> {
        let stream = TcpStream::connect(addr)?;
        stream.set_nodelay(true)?;
        Ok(Self {
            reader: BufReader::new(stream.try_clone()?),
            writer: stream,
        })
    }

    /// Sends a request and returns the raw frames (length prefix included).
    /// A single error frame answering a rejected request ends the batch early.
    pub fn request_raw(&mut self, req: &StreamRequest) -> Result<Vec<Vec<u8>>> {
        self.writer.write_all(&req.encode())?;
        self.writer.flush()?;
        let mut out = Vec::with_capacity(req.batch as usize);
        for i in 0..req.batch.max(1) {
            let mut len = [0u8; 4];
            self.reader.read_exact(&mut len)?;
            let n = u32::from_le_bytes(len) as usize;
            if n == 0 || n > MAX_FRAME {
                return Err(Error::Protocol(format!("frame length {n}")));
            }
            let mut f = len.to_vec();
            f.resize(4 + n, 0);
            self.reader.read_exact(&mut f[4..])?;
            let rejected = i == 0 && f[4] == FRAME_ERROR && u64::from_le_bytes(f[5..13].try_into().unwrap()) == 0;
            out.push(f);
            if rejected {
                break;
            }
        }
        Ok(out)
    }

    pub fn request(&mut self, req: &StreamRequest) -> Result<Vec<Frame>> {
        self.request_raw(req)?.iter().map(|f| decode_frame(&f[4..])).collect()
    }
}
