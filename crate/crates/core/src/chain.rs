//! Offset quantization and the N-gram Markov chain over cluster ids.

use std::collections::HashMap;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{filter_noise, from_offsets, to_offsets, NoiseFilter, PolarOffset, Pose, Trajectory};
use crate::rng::{self, Rng};

pub const MAX_KMEANS_ITERATIONS: usize = 200;

/// K-means model over `(rho, theta)` offsets.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterModel {
    pub centroids: Vec<PolarOffset>,
    /// Training offsets assigned to each cluster. May be empty for models
    /// loaded without members; sampling then emits centroids.
    pub members: Vec<Vec<PolarOffset>>,
    /// Multiplier on theta inside the distance (1.0 = raw meters/radians).
    pub theta_scale: f64,
}

impl ClusterModel {
    pub fn len(&self) -> usize {
        self.centroids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centroids.is_empty()
    }

    fn dist_sq(&self, a: &PolarOffset, b: &PolarOffset) -> f64 {
        let dr = a.rho - b.rho;
        let dt = (a.theta - b.theta) * self.theta_scale;
        dr * dr + dt * dt
    }

    /// Nearest centroid; ties go to the lowest id.
    pub fn assign(&self, o: &PolarOffset) -> usize {
        nearest(&self.centroids, o, self.theta_scale).0
    }
}

fn nearest(centroids: &[PolarOffset], o: &PolarOffset, theta_scale: f64) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, c) in centroids.iter().enumerate() {
        let dr = o.rho - c.rho;
        let dt = (o.theta - c.theta) * theta_scale;
        let d = dr * dr + dt * dt;
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

fn count_distinct(offsets: &[PolarOffset]) -> usize {
    let mut keys: Vec<(u64, u64)> = offsets
        .iter()
        .map(|o| (o.rho.to_bits(), o.theta.to_bits()))
        .collect();
    keys.sort_unstable();
    keys.dedup();
    keys.len()
}

/// Lloyd's algorithm with k-means++ seeding.
pub fn fit_clusters(offsets: &[PolarOffset], c: usize, seed: u64) -> Result<ClusterModel> {
    fit_clusters_scaled(offsets, c, 1.0, seed)
}

pub fn fit_clusters_scaled(
    offsets: &[PolarOffset],
    c: usize,
    theta_scale: f64,
    seed: u64,
) -> Result<ClusterModel> {
    if c == 0 {
        return Err(Error::Precondition("cluster count must be at least 1".into()));
    }
    if !(theta_scale.is_finite() && theta_scale > 0.0) {
        return Err(Error::Config(format!("theta scale must be positive, got {theta_scale}")));
    }
    let distinct = count_distinct(offsets);
    if c > distinct {
        return Err(Error::TooFewOffsets { requested: c, distinct });
    }
    let model = ClusterModel {
        centroids: Vec::new(),
        members: Vec::new(),
        theta_scale,
    };
    let mut rng = rng::stream(seed, "kmeans");

    // k-means++ seeding.
    let mut centroids = Vec::with_capacity(c);
    centroids.push(offsets[rng.random_range(0..offsets.len())]);
    let mut d2: Vec<f64> = offsets.iter().map(|o| model.dist_sq(o, &centroids[0])).collect();
    while centroids.len() < c {
        let next = match WeightedIndex::new(&d2) {
            Ok(w) => offsets[w.sample(&mut rng)],
            // All remaining mass is zero only if every point sits on a
            // centroid, which the distinct-count check rules out.
            Err(_) => unreachable!("k-means++ weights degenerate"),
        };
        for (d, o) in d2.iter_mut().zip(offsets) {
            *d = d.min(model.dist_sq(o, &next));
        }
        centroids.push(next);
    }

    let mut labels = vec![usize::MAX; offsets.len()];
    for _ in 0..MAX_KMEANS_ITERATIONS {
        let changed = assign_all(offsets, &centroids, theta_scale, &mut labels);
        let reseeded = reseed_empty(offsets, &mut centroids, theta_scale, &mut labels);
        if !changed && !reseeded {
            break;
        }
        update_means(offsets, &labels, &mut centroids);
    }
    // Final pass so members match nearest centroids even at the cap.
    assign_all(offsets, &centroids, theta_scale, &mut labels);
    while reseed_empty(offsets, &mut centroids, theta_scale, &mut labels) {
        assign_all(offsets, &centroids, theta_scale, &mut labels);
    }

    let mut members = vec![Vec::new(); c];
    for (o, &l) in offsets.iter().zip(&labels) {
        members[l].push(*o);
    }
    Ok(ClusterModel {
        centroids,
        members,
        theta_scale,
    })
}

fn assign_all(offsets: &[PolarOffset], centroids: &[PolarOffset], theta_scale: f64, labels: &mut [usize]) -> bool {
    let mut changed = false;
    for (o, l) in offsets.iter().zip(labels.iter_mut()) {
        let (best, _) = nearest(centroids, o, theta_scale);
        if *l != best {
            *l = best;
            changed = true;
        }
    }
    changed
}

/// Moves each empty cluster onto the point farthest from its centroid.
fn reseed_empty(offsets: &[PolarOffset], centroids: &mut [PolarOffset], theta_scale: f64, labels: &mut [usize]) -> bool {
    let mut counts = vec![0usize; centroids.len()];
    for &l in labels.iter() {
        counts[l] += 1;
    }
    let mut any = false;
    for k in 0..centroids.len() {
        if counts[k] > 0 {
            continue;
        }
        let (far, _) = offsets
            .iter()
            .enumerate()
            .filter(|(i, _)| counts[labels[*i]] > 1)
            .map(|(i, o)| {
                let c = centroids[labels[i]];
                let dr = o.rho - c.rho;
                let dt = (o.theta - c.theta) * theta_scale;
                (i, dr * dr + dt * dt)
            })
            .fold((usize::MAX, -1.0), |a, b| if b.1 > a.1 { b } else { a });
        if far == usize::MAX {
            continue;
        }
        counts[labels[far]] -= 1;
        labels[far] = k;
        counts[k] = 1;
        centroids[k] = offsets[far];
        any = true;
    }
    any
}

fn update_means(offsets: &[PolarOffset], labels: &[usize], centroids: &mut [PolarOffset]) {
    let mut acc = vec![(0.0, 0.0, 0usize); centroids.len()];
    for (o, &l) in offsets.iter().zip(labels) {
        acc[l].0 += o.rho;
        acc[l].1 += o.theta;
        acc[l].2 += 1;
    }
    for (c, (r, t, n)) in centroids.iter_mut().zip(acc) {
        if n > 0 {
            *c = PolarOffset::new(r / n as f64, t / n as f64);
        }
    }
}

/// Node of the chain: `order` consecutive cluster ids, oldest first.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ChainState(pub Vec<u32>);

impl ChainState {
    pub fn newest(&self) -> u32 {
        *self.0.last().expect("empty chain state")
    }
}

/// How the first state of a walk is drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum InitialMode {
    /// Empirical frequency of each state as a transition source.
    #[default]
    Frequency,
    /// Uniform over states that have outgoing transitions.
    Uniform,
}

/// Sparse outgoing distribution of one state.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TransitionRow {
    pub targets: Vec<u32>,
    pub probs: Vec<f64>,
}

impl TransitionRow {
    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn sum(&self) -> f64 {
        self.probs.iter().sum()
    }

    pub fn prob(&self, target: u32) -> f64 {
        self.targets
            .iter()
            .position(|&t| t == target)
            .map_or(0.0, |i| self.probs[i])
    }
}

#[derive(Debug, Clone)]
pub struct MarkovChain {
    pub clusters: ClusterModel,
    pub order: usize,
    /// States sorted by gram; the position is the state index.
    pub states: Vec<ChainState>,
    /// One row per state. States seen only at the end of a recording have
    /// an empty row; walks that reach them restart.
    pub transitions: Vec<TransitionRow>,
    pub initial: Vec<f64>,
    pub initial_mode: InitialMode,
    index: HashMap<ChainState, u32>,
    samplers: Vec<Option<WeightedIndex<f64>>>,
    initial_sampler: WeightedIndex<f64>,
}

impl PartialEq for MarkovChain {
    fn eq(&self, o: &Self) -> bool {
        self.clusters == o.clusters
            && self.order == o.order
            && self.states == o.states
            && self.transitions == o.transitions
            && self.initial == o.initial
            && self.initial_mode == o.initial_mode
    }
}

/// Parameters of [`estimate`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub clusters: usize,
    pub order: usize,
    pub filter: NoiseFilter,
    pub theta_scale: f64,
    pub initial_mode: InitialMode,
    pub seed: u64,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self {
            clusters: 40,
            order: 2,
            filter: NoiseFilter::default(),
            theta_scale: 1.0,
            initial_mode: InitialMode::Frequency,
            seed: 0,
        }
    }
}

/// Estimates the chain from recorded trajectories.
pub fn estimate(trajectories: &[Trajectory], cfg: &ChainConfig) -> Result<MarkovChain> {
    if cfg.order == 0 {
        return Err(Error::Precondition("state order must be at least 1".into()));
    }
    let per_traj: Vec<Vec<PolarOffset>> = trajectories
        .iter()
        .filter(|t| t.len() >= 3)
        .map(|t| to_offsets(t).map(|o| filter_noise(&o, &cfg.filter)))
        .collect::<Result<_>>()?;
    let pooled: Vec<PolarOffset> = per_traj.iter().flatten().copied().collect();
    let clusters = fit_clusters_scaled(&pooled, cfg.clusters, cfg.theta_scale, cfg.seed)?;
    let labels: Vec<Vec<u32>> = per_traj
        .iter()
        .map(|offs| offs.iter().map(|o| clusters.assign(o) as u32).collect())
        .collect();
    MarkovChain::from_label_sequences(clusters, &labels, cfg.order, cfg.initial_mode)
}

impl MarkovChain {
    /// Counts N-gram transitions inside each sequence (never across
    /// sequences) and normalizes per source state.
    pub fn from_label_sequences(
        clusters: ClusterModel,
        sequences: &[Vec<u32>],
        order: usize,
        initial_mode: InitialMode,
    ) -> Result<Self> {
        if order == 0 {
            return Err(Error::Precondition("state order must be at least 1".into()));
        }
        if let Some(bad) = sequences.iter().flatten().find(|&&l| l as usize >= clusters.len()) {
            return Err(Error::Precondition(format!("cluster id {bad} out of range")));
        }
        // BTreeMap-like determinism: collect, sort, index.
        let mut counts: HashMap<(ChainState, ChainState), u64> = HashMap::new();
        let mut seen: Vec<ChainState> = Vec::new();
        for seq in sequences {
            if seq.len() < order {
                continue;
            }
            let grams: Vec<ChainState> = seq.windows(order).map(|w| ChainState(w.to_vec())).collect();
            seen.extend(grams.iter().cloned());
            for w in grams.windows(2) {
                *counts.entry((w[0].clone(), w[1].clone())).or_default() += 1;
            }
        }
        if counts.is_empty() {
            return Err(Error::NoTransitions);
        }
        seen.sort();
        seen.dedup();
        let index: HashMap<ChainState, u32> = seen
            .iter()
            .enumerate()
            .map(|(i, s)| (s.clone(), i as u32))
            .collect();

        let mut rows: Vec<Vec<(u32, u64)>> = vec![Vec::new(); seen.len()];
        for ((from, to), n) in counts {
            rows[index[&from] as usize].push((index[&to], n));
        }
        let mut source_counts = vec![0u64; seen.len()];
        let transitions = rows
            .into_iter()
            .enumerate()
            .map(|(i, mut r)| {
                r.sort_unstable();
                let total: u64 = r.iter().map(|(_, n)| n).sum();
                source_counts[i] = total;
                TransitionRow {
                    targets: r.iter().map(|(t, _)| *t).collect(),
                    probs: r.iter().map(|(_, n)| *n as f64 / total as f64).collect(),
                }
            })
            .collect::<Vec<_>>();

        let initial = match initial_mode {
            InitialMode::Frequency => {
                let total: u64 = source_counts.iter().sum();
                source_counts.iter().map(|&n| n as f64 / total as f64).collect()
            }
            InitialMode::Uniform => {
                let live = source_counts.iter().filter(|&&n| n > 0).count() as f64;
                source_counts
                    .iter()
                    .map(|&n| if n > 0 { 1.0 / live } else { 0.0 })
                    .collect()
            }
        };
        Self::from_parts(clusters, order, seen, transitions, initial, initial_mode)
    }

    /// Assembles a chain from raw tables (used by deserialization), checking
    /// every structural invariant.
    pub fn from_parts(
        clusters: ClusterModel,
        order: usize,
        states: Vec<ChainState>,
        transitions: Vec<TransitionRow>,
        initial: Vec<f64>,
        initial_mode: InitialMode,
    ) -> Result<Self> {
        let n = states.len();
        if order == 0 || clusters.is_empty() {
            return Err(Error::Format("empty cluster model or zero order".into()));
        }
        if transitions.len() != n || initial.len() != n {
            return Err(Error::Format("state table sizes disagree".into()));
        }
        let max_states = (clusters.len() as f64).powi(order as i32);
        if n as f64 > max_states {
            return Err(Error::Format(format!("{n} states exceed C^N = {max_states}")));
        }
        for s in &states {
            if s.0.len() != order || s.0.iter().any(|&c| c as usize >= clusters.len()) {
                return Err(Error::Format(format!("malformed state {:?}", s.0)));
            }
        }
        for (i, row) in transitions.iter().enumerate() {
            if row.targets.len() != row.probs.len()
                || row.targets.iter().any(|&t| t as usize >= n)
                || row.probs.iter().any(|&p| !(p >= 0.0 && p.is_finite()))
            {
                return Err(Error::Format(format!("malformed transition row {i}")));
            }
            if !row.is_empty() && (row.sum() - 1.0).abs() > 1e-9 {
                return Err(Error::Format(format!("row {i} sums to {}", row.sum())));
            }
        }
        if initial.iter().enumerate().any(|(i, &p)| p > 0.0 && transitions[i].is_empty()) {
            return Err(Error::Format("initial mass on a dead-end state".into()));
        }
        let samplers = transitions
            .iter()
            .map(|r| (!r.is_empty()).then(|| WeightedIndex::new(&r.probs)).transpose())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Format(format!("transition weights: {e}")))?;
        let initial_sampler =
            WeightedIndex::new(&initial).map_err(|e| Error::Format(format!("initial distribution: {e}")))?;
        let index = states
            .iter()
            .enumerate()
            .map(|(i, s)| (s.clone(), i as u32))
            .collect();
        Ok(Self {
            clusters,
            order,
            states,
            transitions,
            initial,
            initial_mode,
            index,
            samplers,
            initial_sampler,
        })
    }

    pub fn state_count(&self) -> usize {
        self.states.len()
    }

    pub fn state_index(&self, s: &ChainState) -> Option<u32> {
        self.index.get(s).copied()
    }

    /// Transition probability between two grams (0 if unobserved).
    pub fn probability(&self, from: &ChainState, to: &ChainState) -> f64 {
        match (self.state_index(from), self.state_index(to)) {
            (Some(f), Some(t)) => self.transitions[f as usize].prob(t),
            _ => 0.0,
        }
    }

    fn draw_initial(&self, rng: &mut Rng) -> u32 {
        self.initial_sampler.sample(rng) as u32
    }

    fn emit(&self, cluster: u32, rng: &mut Rng) -> PolarOffset {
        let members = &self.clusters.members[cluster as usize];
        if members.is_empty() {
            self.clusters.centroids[cluster as usize]
        } else {
            members[rng.random_range(0..members.len())]
        }
    }
}

/// Stateful random walk over a chain.
pub struct ChainWalker<'a> {
    chain: &'a MarkovChain,
    state: u32,
    rng: Rng,
    restarts: usize,
}

impl<'a> ChainWalker<'a> {
    /// Starts from a state drawn from the initial distribution.
    pub fn new(chain: &'a MarkovChain, mut rng: Rng) -> Self {
        let state = chain.draw_initial(&mut rng);
        Self {
            chain,
            state,
            rng,
            restarts: 0,
        }
    }

    /// Starts from the state formed by quantizing the last `order` offsets
    /// of `history`. Falls back to an initial draw if that gram was never
    /// observed or the history is too short.
    pub fn from_history(chain: &'a MarkovChain, history: &[PolarOffset], rng: Rng) -> Self {
        let mut w = Self::new(chain, rng);
        if history.len() >= chain.order {
            let gram = ChainState(
                history[history.len() - chain.order..]
                    .iter()
                    .map(|o| chain.clusters.assign(o) as u32)
                    .collect(),
            );
            if let Some(i) = chain.state_index(&gram) {
                w.state = i;
            }
        }
        w
    }

    pub fn state(&self) -> &ChainState {
        &self.chain.states[self.state as usize]
    }

    /// Number of dead-end restarts so far.
    pub fn restarts(&self) -> usize {
        self.restarts
    }

    /// Takes one transition and emits an offset from the newest cluster of
    /// the new state.
    pub fn step(&mut self) -> PolarOffset {
        let mut guard = 0;
        while self.chain.samplers[self.state as usize].is_none() {
            log::debug!("dead-end state {:?}; restarting walk", self.state().0);
            self.restarts += 1;
            self.state = self.chain.draw_initial(&mut self.rng);
            guard += 1;
            assert!(guard < 1_000_000, "initial distribution only reaches dead ends");
        }
        let row = &self.chain.transitions[self.state as usize];
        let k = self.chain.samplers[self.state as usize]
            .as_ref()
            .unwrap()
            .sample(&mut self.rng);
        self.state = row.targets[k];
        let cluster = self.state().newest();
        self.chain.emit(cluster, &mut self.rng)
    }

    pub fn take(&mut self, steps: usize) -> Vec<PolarOffset> {
        (0..steps).map(|_| self.step()).collect()
    }

    pub fn rng_mut(&mut self) -> &mut Rng {
        &mut self.rng
    }
}

/// Samples a `steps + 1` point trajectory starting at `start`.
pub fn sample_trajectory(chain: &MarkovChain, steps: usize, start: Pose, seed: u64) -> Result<Trajectory> {
    if steps == 0 {
        return Err(Error::Precondition("steps must be at least 1".into()));
    }
    let mut walker = ChainWalker::new(chain, rng::stream(seed, "walk"));
    from_offsets(start, &walker.take(steps))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Vec2;
    use approx::assert_abs_diff_eq;

    fn model(centroids: &[(f64, f64)]) -> ClusterModel {
        ClusterModel {
            centroids: centroids.iter().map(|&(r, t)| PolarOffset::new(r, t)).collect(),
            members: centroids.iter().map(|&(r, t)| vec![PolarOffset::new(r, t)]).collect(),
            theta_scale: 1.0,
        }
    }

    #[test]
    fn hand_counted_transitions() {
        // A,A,B,A,A,B
        let chain = MarkovChain::from_label_sequences(
            model(&[(1.0, 0.0), (2.0, 0.0)]),
            &[vec![0, 0, 1, 0, 0, 1]],
            1,
            InitialMode::Frequency,
        )
        .unwrap();
        let a = ChainState(vec![0]);
        let b = ChainState(vec![1]);
        assert_eq!(chain.probability(&a, &a), 0.5);
        assert_eq!(chain.probability(&a, &b), 0.5);
        assert_eq!(chain.probability(&b, &a), 1.0);
        assert_eq!(chain.probability(&b, &b), 0.0);
        // A is the source of 4 of the 5 transitions.
        assert_eq!(chain.initial, vec![0.8, 0.2]);
    }

    #[test]
    fn self_loop_only() {
        let chain =
            MarkovChain::from_label_sequences(model(&[(1.0, 0.0)]), &[vec![0; 5]], 1, InitialMode::Frequency)
                .unwrap();
        assert_eq!(chain.state_count(), 1);
        assert_eq!(chain.transitions[0].probs, vec![1.0]);
    }

    #[test]
    fn no_crossing_between_sequences() {
        let chain = MarkovChain::from_label_sequences(
            model(&[(1.0, 0.0), (2.0, 0.0)]),
            &[vec![0, 0], vec![1, 1]],
            1,
            InitialMode::Frequency,
        )
        .unwrap();
        let a = ChainState(vec![0]);
        let b = ChainState(vec![1]);
        assert_eq!(chain.probability(&a, &b), 0.0);
        assert_eq!(chain.probability(&a, &a), 1.0);
        assert_eq!(chain.probability(&b, &b), 1.0);
    }

    #[test]
    fn no_transitions_is_an_error() {
        let r = MarkovChain::from_label_sequences(model(&[(1.0, 0.0)]), &[vec![0]], 1, InitialMode::Frequency);
        assert!(matches!(r, Err(Error::NoTransitions)));
        let r = MarkovChain::from_label_sequences(model(&[(1.0, 0.0)]), &[vec![0, 0]], 2, InitialMode::Frequency);
        assert!(matches!(r, Err(Error::NoTransitions)));
    }

    #[test]
    fn order_two_states() {
        let chain = MarkovChain::from_label_sequences(
            model(&[(1.0, 0.0), (2.0, 0.0)]),
            &[vec![0, 0, 1, 0, 0, 1]],
            2,
            InitialMode::Uniform,
        )
        .unwrap();
        // grams: 00, 01, 10, 00, 01
        let s = |a, b| ChainState(vec![a, b]);
        assert_eq!(chain.state_count(), 3);
        assert_eq!(chain.probability(&s(0, 0), &s(0, 1)), 1.0);
        assert_eq!(chain.probability(&s(0, 1), &s(1, 0)), 1.0);
        assert_eq!(chain.probability(&s(1, 0), &s(0, 0)), 1.0);
        for p in &chain.initial {
            assert_abs_diff_eq!(*p, 1.0 / 3.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn single_cluster_is_the_mean() {
        let offs: Vec<_> = (0..10).map(|i| PolarOffset::new(i as f64, 0.1 * i as f64)).collect();
        let m = fit_clusters(&offs, 1, 3).unwrap();
        assert_abs_diff_eq!(m.centroids[0].rho, 4.5, epsilon = 1e-12);
        assert_abs_diff_eq!(m.centroids[0].theta, 0.45, epsilon = 1e-12);
        assert_eq!(m.members[0].len(), 10);
    }

    #[test]
    fn too_many_clusters() {
        let offs = vec![PolarOffset::new(1.0, 0.0); 10];
        assert!(matches!(
            fit_clusters(&offs, 2, 0),
            Err(Error::TooFewOffsets { requested: 2, distinct: 1 })
        ));
        assert!(fit_clusters(&offs, 0, 0).is_err());
    }

    #[test]
    fn members_sit_in_their_nearest_cluster() {
        let offs: Vec<_> = (0..500)
            .map(|i| {
                let x = (i as f64 * 0.618_033_988_7).fract();
                let y = (i as f64 * 0.414_213_562_3).fract();
                PolarOffset::new(3.0 * x, y - 0.5)
            })
            .collect();
        let m = fit_clusters(&offs, 12, 9).unwrap();
        for (k, ms) in m.members.iter().enumerate() {
            assert!(!ms.is_empty());
            for o in ms {
                assert_eq!(m.assign(o), k);
            }
        }
    }

    #[test]
    fn one_state_walk_is_straight() {
        let chain =
            MarkovChain::from_label_sequences(model(&[(1.0, 0.0)]), &[vec![0; 3]], 1, InitialMode::Frequency)
                .unwrap();
        let t = sample_trajectory(&chain, 10, Pose::new(Vec2::ZERO, std::f64::consts::FRAC_PI_2), 1).unwrap();
        assert_eq!(t.len(), 11);
        for (i, p) in t.points().iter().enumerate() {
            assert_abs_diff_eq!(p.x, 0.0, epsilon = 1e-12);
            assert_abs_diff_eq!(p.y, i as f64, epsilon = 1e-12);
        }
        assert!(sample_trajectory(&chain, 0, Pose::identity(), 1).is_err());
    }

    #[test]
    fn dead_end_restarts() {
        // 0 -> 1, and 1 is never a source.
        let chain = MarkovChain::from_label_sequences(
            model(&[(1.0, 0.0), (2.0, 0.0)]),
            &[vec![0, 1]],
            1,
            InitialMode::Frequency,
        )
        .unwrap();
        assert!(chain.transitions[1].is_empty());
        let mut w = ChainWalker::new(&chain, rng::stream(0, "t"));
        let offs = w.take(5);
        assert!(offs.iter().all(|o| o.rho == 2.0));
        assert_eq!(w.restarts(), 4);
    }
}
