//! Readout-noise calibration from random computational-basis states.
//!
//! A calibration campaign prepares random bitstrings, records the readout
//! of each, and reduces the records to streaming sufficient statistics:
//! per-state clean/one-flip tables plus global per-pair two-flip and
//! joint-flip counts. Those tables support every estimator here without a
//! second pass over the data:
//!
//! * per-qubit TP flip probabilities (count-weighted frequencies),
//! * the strict two-qubit response `Lambda(j,k)` — transition frequencies
//!   conditioned on every *other* qubit reading back clean, so only
//!   records with flip weight <= 2 contribute,
//! * pair generators `G(j,k) = clip(log Lambda(j,k))` and the averaged
//!   single/pair CTMP rates they imply,
//! * per-pair flip covariance/correlation for screening which pairs carry
//!   genuinely correlated noise.
//!
//! Pattern convention for a pair `(j, k)`: index `2*b_j + b_k`.

use std::collections::HashMap;
use std::io::{BufRead, Write};
use std::path::Path;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bits::BitString;
use crate::error::{Error, Result};
use crate::graph::GraphSpec;
use crate::noise::{GeneratorTerm, NoiseChannel, ReadoutNoiseModel, TpRates};
use crate::numeric;
use crate::rng;

/// One calibration shot: what was loaded into the register and what the
/// readout returned.
#[derive(Clone, Debug, PartialEq)]
pub struct CalRecord {
    pub prepared: BitString,
    pub observed: BitString,
}

#[derive(Serialize, Deserialize)]
struct JsonRecord {
    prepared: String,
    observed: String,
}

/// In-memory record list with JSONL persistence (one record per line).
#[derive(Clone, Debug, Default)]
pub struct CalibrationDataset {
    pub records: Vec<CalRecord>,
}

impl CalibrationDataset {
    pub fn save_jsonl(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        for r in &self.records {
            let line = serde_json::to_string(&JsonRecord {
                prepared: r.prepared.to_01_string(),
                observed: r.observed.to_01_string(),
            })?;
            writeln!(out, "{line}")?;
        }
        Ok(())
    }

    pub fn load_jsonl(path: &Path) -> Result<Self> {
        let mut records = Vec::new();
        stream_jsonl(path, |r| {
            records.push(r);
            Ok(())
        })?;
        Ok(Self { records })
    }

    /// Reduce to sufficient statistics, merging identical prepared patterns.
    pub fn accumulate(&self, n: usize) -> Result<SufficientStats> {
        let mut stats = SufficientStats::new(n);
        let mut index: HashMap<Vec<u64>, usize> = HashMap::new();
        for r in &self.records {
            if r.prepared.len() != n || r.observed.len() != n {
                return Err(Error::DimensionMismatch("calibration record width".into()));
            }
            let key = r.prepared.words().to_vec();
            let s = *index
                .entry(key)
                .or_insert_with(|| stats.add_state(r.prepared.clone()));
            stats.record(s, &r.observed);
        }
        Ok(stats)
    }
}

/// Stream a JSONL record file without holding it in memory.
pub fn stream_jsonl(path: &Path, mut f: impl FnMut(CalRecord) -> Result<()>) -> Result<()> {
    let reader = std::io::BufReader::new(std::fs::File::open(path)?);
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: JsonRecord = serde_json::from_str(&line)?;
        f(CalRecord {
            prepared: BitString::parse_01(&raw.prepared)?,
            observed: BitString::parse_01(&raw.observed)?,
        })?;
    }
    Ok(())
}

#[inline]
fn pair_index(n: usize, j: usize, k: usize) -> usize {
    debug_assert!(j < k && k < n);
    j * (2 * n - j - 1) / 2 + (k - j - 1)
}

#[inline]
fn pair_total(n: usize) -> usize {
    n * (n - 1) / 2
}

/// Streaming reduction of calibration records.
#[derive(Clone, Debug)]
pub struct SufficientStats {
    n: usize,
    states: Vec<BitString>,
    /// Records per state.
    shots: Vec<u64>,
    /// Records with no flips, per state.
    clean: Vec<u64>,
    /// Records whose only flip is at qubit q: `single[state * n + q]`.
    single: Vec<u64>,
    /// Records where qubit q flipped (any weight): `flips[state * n + q]`.
    flips: Vec<u64>,
    /// Exactly {j,k} flipped, keyed by the pair's prepared pattern.
    twoflip: Vec<[u64; 4]>,
    /// Both j and k flipped (any weight), keyed by prepared pattern.
    joint: Vec<[u64; 4]>,
}

impl SufficientStats {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            states: Vec::new(),
            shots: Vec::new(),
            clean: Vec::new(),
            single: Vec::new(),
            flips: Vec::new(),
            twoflip: vec![[0; 4]; pair_total(n)],
            joint: vec![[0; 4]; pair_total(n)],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn states(&self) -> &[BitString] {
        &self.states
    }

    pub fn total_records(&self) -> u64 {
        self.shots.iter().sum()
    }

    pub fn add_state(&mut self, prepared: BitString) -> usize {
        debug_assert_eq!(prepared.len(), self.n);
        self.states.push(prepared);
        self.shots.push(0);
        self.clean.push(0);
        self.single.extend(std::iter::repeat(0).take(self.n));
        self.flips.extend(std::iter::repeat(0).take(self.n));
        self.states.len() - 1
    }

    pub fn record(&mut self, state: usize, observed: &BitString) {
        let prep = &self.states[state];
        let mut diff = observed.clone();
        diff.xor_assign(prep);
        self.shots[state] += 1;
        let weight = diff.count_ones();
        match weight {
            0 => self.clean[state] += 1,
            1 => {
                let q = diff.first_one().unwrap();
                self.single[state * self.n + q] += 1;
                self.flips[state * self.n + q] += 1;
            }
            _ => {
                let flipped: Vec<usize> = diff.iter_ones().collect();
                for &q in &flipped {
                    self.flips[state * self.n + q] += 1;
                }
                for a in 0..flipped.len() {
                    for b in a + 1..flipped.len() {
                        let (j, k) = (flipped[a], flipped[b]);
                        let v = pair_pattern(prep, j, k);
                        let idx = pair_index(self.n, j, k);
                        self.joint[idx][v] += 1;
                        if weight == 2 {
                            self.twoflip[idx][v] += 1;
                        }
                    }
                }
            }
        }
    }

    pub fn merge(&mut self, other: SufficientStats) {
        assert_eq!(self.n, other.n);
        self.states.extend(other.states);
        self.shots.extend(other.shots);
        self.clean.extend(other.clean);
        self.single.extend(other.single);
        self.flips.extend(other.flips);
        for (a, b) in self.twoflip.iter_mut().zip(other.twoflip) {
            for v in 0..4 {
                a[v] += b[v];
            }
        }
        for (a, b) in self.joint.iter_mut().zip(other.joint) {
            for v in 0..4 {
                a[v] += b[v];
            }
        }
    }

    /// Count-weighted per-qubit flip frequencies.
    pub fn tp_estimates(&self) -> Result<Vec<TpRates>> {
        let mut out = Vec::with_capacity(self.n);
        for q in 0..self.n {
            let mut n0 = 0u64;
            let mut n1 = 0u64;
            let mut f0 = 0u64;
            let mut f1 = 0u64;
            for (s, prep) in self.states.iter().enumerate() {
                if prep.get(q) {
                    n1 += self.shots[s];
                    f1 += self.flips[s * self.n + q];
                } else {
                    n0 += self.shots[s];
                    f0 += self.flips[s * self.n + q];
                }
            }
            if n0 == 0 || n1 == 0 {
                return Err(Error::UndefinedRate { qubit: q, value: u8::from(n1 == 0) });
            }
            out.push(TpRates { eps: f0 as f64 / n0 as f64, eta: f1 as f64 / n1 as f64 });
        }
        Ok(out)
    }

    /// One pair's tables gathered in a single pass over the states.
    fn pair_scan(&self, j: usize, k: usize) -> PairScan {
        debug_assert!(j < k);
        let idx = pair_index(self.n, j, k);
        let mut scan = PairScan {
            counts: [[0; 4]; 4],
            marg_j: [0; 4],
            marg_k: [0; 4],
            joint: [0; 4],
            shots: [0; 4],
        };
        for (s, prep) in self.states.iter().enumerate() {
            let v = pair_pattern(prep, j, k);
            scan.shots[v] += self.shots[s];
            scan.marg_j[v] += self.flips[s * self.n + j];
            scan.marg_k[v] += self.flips[s * self.n + k];
            scan.counts[v][v] += self.clean[s];
            scan.counts[v ^ 2][v] += self.single[s * self.n + j];
            scan.counts[v ^ 1][v] += self.single[s * self.n + k];
        }
        for v in 0..4 {
            scan.counts[v ^ 3][v] += self.twoflip[idx][v];
        }
        scan.joint = self.joint[idx];
        scan
    }

    /// Strict transition counts: `counts[u][v]` = records prepared with pair
    /// pattern `v` that read back `u` while every other qubit was clean.
    pub fn strict_pair_counts(&self, j: usize, k: usize) -> [[u64; 4]; 4] {
        let (a, b) = (j.min(k), j.max(k));
        let counts = self.pair_scan(a, b).counts;
        if j < k {
            counts
        } else {
            permute_pair_matrix_u64(&counts)
        }
    }

    /// Column-normalized strict response. Fails with
    /// [`Error::EmptyColumn`] when some pattern never occurred cleanly.
    pub fn pair_lambda(&self, j: usize, k: usize) -> Result<DMatrix<f64>> {
        let counts = self.strict_pair_counts(j, k);
        normalize_columns(&counts, j, k)
    }

    /// Response estimated from marginal flip frequencies only (no
    /// conditioning on the rest of the register).
    pub fn unconditioned_pair_lambda(&self, j: usize, k: usize) -> Result<DMatrix<f64>> {
        let (a, b) = (j.min(k), j.max(k));
        let scan = self.pair_scan(a, b);
        let mut lambda = DMatrix::zeros(4, 4);
        for v in 0..4 {
            let n = scan.shots[v] as f64;
            if scan.shots[v] == 0 {
                return Err(Error::EmptyColumn { j, k, pattern: v as u8 });
            }
            let p_j = scan.marg_j[v] as f64 / n;
            let p_k = scan.marg_k[v] as f64 / n;
            let p_both = scan.joint[v] as f64 / n;
            // Flip-pattern probabilities (f_j, f_k) reconstructed from the
            // two marginals and the joint.
            let probs = [
                1.0 - p_j - p_k + p_both, // 00
                p_k - p_both,             // 01
                p_j - p_both,             // 10
                p_both,                   // 11
            ];
            for (f, p) in probs.iter().enumerate() {
                lambda[(v ^ f, v)] = p.max(0.0);
            }
        }
        Ok(if j < k { lambda } else { permute_pair_matrix(&lambda) })
    }

    /// Flip covariance/correlation of a pair, per prepared pattern.
    pub fn pair_flip_stats(&self, j: usize, k: usize) -> PairFlipStats {
        let (a, b) = (j.min(k), j.max(k));
        let scan = self.pair_scan(a, b);
        let mut out = PairFlipStats::default();
        for v in 0..4 {
            let idx = if j < k { v } else { (v >> 1) | ((v & 1) << 1) };
            out.shots[idx] = scan.shots[v];
            if scan.shots[v] == 0 {
                continue;
            }
            let n = scan.shots[v] as f64;
            let (pj, pk) = if j < k {
                (scan.marg_j[v] as f64 / n, scan.marg_k[v] as f64 / n)
            } else {
                (scan.marg_k[v] as f64 / n, scan.marg_j[v] as f64 / n)
            };
            let p_both = scan.joint[v] as f64 / n;
            let cov = p_both - pj * pk;
            let var = pj * (1.0 - pj) * pk * (1.0 - pk);
            out.p_first[idx] = pj;
            out.p_second[idx] = pk;
            out.p_joint[idx] = p_both;
            out.covariance[idx] = cov;
            out.correlation[idx] = if var > 0.0 { cov / var.sqrt() } else { 0.0 };
        }
        out
    }

    /// Largest `|correlation|` over the prepared patterns of a pair.
    pub fn max_abs_correlation(&self, j: usize, k: usize) -> f64 {
        self.pair_flip_stats(j, k)
            .correlation
            .iter()
            .fold(0.0f64, |m, r| m.max(r.abs()))
    }

    /// Strict counts for every pair, in `pair_index` order (parallel pass).
    pub fn all_strict_pair_counts(&self) -> Vec<[[u64; 4]; 4]> {
        let pairs: Vec<(usize, usize)> = all_pairs(self.n);
        pairs.par_iter().map(|&(j, k)| self.pair_scan(j, k).counts).collect()
    }
}

fn all_pairs(n: usize) -> Vec<(usize, usize)> {
    let mut v = Vec::with_capacity(pair_total(n));
    for j in 0..n {
        for k in j + 1..n {
            v.push((j, k));
        }
    }
    v
}

#[inline]
fn pair_pattern(bits: &BitString, j: usize, k: usize) -> usize {
    (bits.get(j) as usize) * 2 + bits.get(k) as usize
}

/// Reindex a 4x4 pair matrix under swapping the two qubits' roles.
fn permute_pair_matrix(m: &DMatrix<f64>) -> DMatrix<f64> {
    let perm = [0usize, 2, 1, 3];
    DMatrix::from_fn(4, 4, |u, v| m[(perm[u], perm[v])])
}

fn permute_pair_matrix_u64(m: &[[u64; 4]; 4]) -> [[u64; 4]; 4] {
    let perm = [0usize, 2, 1, 3];
    let mut out = [[0; 4]; 4];
    for u in 0..4 {
        for v in 0..4 {
            out[u][v] = m[perm[u]][perm[v]];
        }
    }
    out
}

fn normalize_columns(counts: &[[u64; 4]; 4], j: usize, k: usize) -> Result<DMatrix<f64>> {
    let mut lambda = DMatrix::zeros(4, 4);
    for v in 0..4 {
        let total: u64 = (0..4).map(|u| counts[u][v]).sum();
        if total == 0 {
            return Err(Error::EmptyColumn { j, k, pattern: v as u8 });
        }
        for u in 0..4 {
            lambda[(u, v)] = counts[u][v] as f64 / total as f64;
        }
    }
    Ok(lambda)
}

struct PairScan {
    counts: [[u64; 4]; 4],
    marg_j: [u64; 4],
    marg_k: [u64; 4],
    joint: [u64; 4],
    shots: [u64; 4],
}

/// Per-pattern flip statistics of one pair (indexed `2*b_j + b_k` in the
/// caller's qubit order).
#[derive(Clone, Copy, Debug, Default)]
pub struct PairFlipStats {
    pub shots: [u64; 4],
    pub p_first: [f64; 4],
    pub p_second: [f64; 4],
    pub p_joint: [f64; 4],
    pub covariance: [f64; 4],
    pub correlation: [f64; 4],
}

/// `G(j,k) = clip(log Lambda)`: principal log with negative off-diagonal
/// entries clipped to zero and the diagonal reset so columns sum to zero.
/// Returns the generator and how many entries were clipped.
pub fn pair_generator_from_lambda(lambda: &DMatrix<f64>) -> Result<(DMatrix<f64>, usize)> {
    let mut g = numeric::logm(lambda)?;
    let mut clipped = 0;
    for v in 0..4 {
        for u in 0..4 {
            if u != v && g[(u, v)] < 0.0 {
                g[(u, v)] = 0.0;
                clipped += 1;
            }
        }
    }
    for v in 0..4 {
        let off: f64 = (0..4).filter(|&u| u != v).map(|u| g[(u, v)]).sum();
        g[(v, v)] = -off;
    }
    Ok((g, clipped))
}

/// CTMP rates distilled from every pair generator.
#[derive(Clone, Debug)]
pub struct RateExtraction {
    /// Per-qubit `(r_{0->1}, r_{1->0})`, averaged over all pair generators
    /// the qubit appears in.
    pub singles: Vec<(f64, f64)>,
    /// Correlated terms from the anti-diagonal corners of each generator.
    pub pair_terms: Vec<GeneratorTerm>,
    /// Off-diagonal entries clipped across all generators.
    pub clip_count: usize,
    /// Pairs whose strict response was empty or not loggable.
    pub skipped_pairs: Vec<(usize, usize)>,
}

/// Run `G(j,k)` over all pairs and average the implied rates. Single-qubit
/// rates for `j` read the `j`-flips-while-`k`-holds entries; pair rates
/// read the both-flip corners.
pub fn extract_rates(stats: &SufficientStats) -> Result<RateExtraction> {
    let n = stats.n();
    let pairs = all_pairs(n);
    let generators: Vec<(usize, usize, Result<(DMatrix<f64>, usize)>)> = pairs
        .par_iter()
        .map(|&(j, k)| {
            let g = stats.pair_lambda(j, k).and_then(|l| pair_generator_from_lambda(&l));
            (j, k, g)
        })
        .collect();

    let mut sums = vec![(0.0f64, 0.0f64); n];
    let mut contributions = vec![0usize; n];
    let mut pair_terms = Vec::new();
    let mut clip_count = 0;
    let mut skipped = Vec::new();
    for (j, k, res) in generators {
        let (g, clipped) = match res {
            Ok(v) => v,
            Err(_) => {
                skipped.push((j, k));
                continue;
            }
        };
        clip_count += clipped;
        // Pattern index 2*b_j + b_k: entries (2,0) and (3,1) flip j up while
        // k holds; (0,2) and (1,3) flip j down.
        sums[j].0 += g[(2, 0)] + g[(3, 1)];
        sums[j].1 += g[(0, 2)] + g[(1, 3)];
        contributions[j] += 1;
        sums[k].0 += g[(1, 0)] + g[(3, 2)];
        sums[k].1 += g[(0, 1)] + g[(2, 3)];
        contributions[k] += 1;
        for (from, u, v) in [((0u8, 0u8), 3, 0), ((1, 1), 0, 3), ((0, 1), 2, 1), ((1, 0), 1, 2)] {
            let rate = g[(u, v)];
            if rate > 0.0 {
                pair_terms.push(GeneratorTerm::Pair { j, k, from, rate });
            }
        }
    }
    let mut singles = Vec::with_capacity(n);
    for q in 0..n {
        if contributions[q] == 0 {
            return Err(Error::InvalidInput(format!("qubit {q} appears in no pair generator")));
        }
        let scale = 1.0 / (2 * contributions[q]) as f64;
        singles.push((sums[q].0 * scale, sums[q].1 * scale));
    }
    Ok(RateExtraction { singles, pair_terms, clip_count, skipped_pairs: skipped })
}

/// Which correlated terms a mitigation model keeps.
#[derive(Clone, Debug, PartialEq)]
pub enum GeneratorSelection {
    /// Single-qubit rates only.
    TpSingles,
    /// Singles plus pairs on the edges of a layout graph.
    NearestNeighbor,
    /// Singles plus every extracted pair term.
    Full,
    /// Singles plus pairs whose flip correlation exceeds the threshold for
    /// some prepared pattern.
    MostCorrelated { threshold: f64 },
}

impl GeneratorSelection {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "tp" => Ok(Self::TpSingles),
            "nearest-neighbor" | "nn" => Ok(Self::NearestNeighbor),
            "full" => Ok(Self::Full),
            "most-correlated" => Ok(Self::MostCorrelated { threshold: 0.3 }),
            other => Err(Error::Config(format!("unknown generator selection {other:?}"))),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Self::TpSingles => "tp",
            Self::NearestNeighbor => "nearest-neighbor",
            Self::Full => "full",
            Self::MostCorrelated { .. } => "most-correlated",
        }
    }
}

/// Assemble the generator set for one selection mode from an extraction.
pub fn select_generator_set(
    stats: &SufficientStats,
    extraction: &RateExtraction,
    mode: &GeneratorSelection,
    graph: Option<&GraphSpec>,
) -> Result<Vec<GeneratorTerm>> {
    let mut terms = Vec::new();
    for (q, &(r0, r1)) in extraction.singles.iter().enumerate() {
        if r0 > 0.0 {
            terms.push(GeneratorTerm::Single { qubit: q, from: 0, rate: r0 });
        }
        if r1 > 0.0 {
            terms.push(GeneratorTerm::Single { qubit: q, from: 1, rate: r1 });
        }
    }
    let keep: Box<dyn Fn(usize, usize) -> bool> = match mode {
        GeneratorSelection::TpSingles => Box::new(|_, _| false),
        GeneratorSelection::Full => Box::new(|_, _| true),
        GeneratorSelection::NearestNeighbor => {
            let g = graph.ok_or_else(|| {
                Error::InvalidInput("nearest-neighbor selection needs a layout graph".into())
            })?;
            let edges: std::collections::BTreeSet<(usize, usize)> = g
                .edges()
                .iter()
                .map(|&(a, b)| (a.min(b), a.max(b)))
                .collect();
            Box::new(move |j, k| edges.contains(&(j, k)))
        }
        GeneratorSelection::MostCorrelated { threshold } => {
            let t = *threshold;
            let mut selected = std::collections::BTreeSet::new();
            for (j, k) in all_pairs(stats.n()) {
                if stats.max_abs_correlation(j, k) > t {
                    selected.insert((j, k));
                }
            }
            Box::new(move |j, k| selected.contains(&(j, k)))
        }
    };
    for term in &extraction.pair_terms {
        if let GeneratorTerm::Pair { j, k, .. } = *term {
            if keep(j, k) {
                terms.push(*term);
            }
        }
    }
    Ok(terms)
}

/// Random preparation patterns for a calibration campaign.
pub fn design_random_states(n: usize, count: usize, seed: u64) -> Vec<BitString> {
    let mut rng = rng::master(seed);
    (0..count).map(|_| BitString::random(n, &mut rng)).collect()
}

/// Simulate a calibration campaign under the given channel, reducing
/// records on the fly. Deterministic in `seed` regardless of worker count:
/// state `i` draws from stream `i`.
pub fn run_calibration_campaign(
    model: &ReadoutNoiseModel,
    channel: NoiseChannel,
    states: &[BitString],
    shots_per_state: u64,
    seed: u64,
) -> Result<SufficientStats> {
    let n = model.n();
    let chunk = (states.len() / (8 * rayon::current_num_threads().max(1))).max(1);
    let partials: Vec<Result<SufficientStats>> = states
        .par_chunks(chunk)
        .enumerate()
        .map(|(ci, chunk_states)| {
            let rates = model.build_rate_set()?;
            let mut stats = SufficientStats::new(n);
            for (off, prep) in chunk_states.iter().enumerate() {
                let global = ci * chunk + off;
                let mut rng = rng::stream(seed, global as u64);
                let s = stats.add_state(prep.clone());
                let mut obs = prep.clone();
                for _ in 0..shots_per_state {
                    obs.words_mut().copy_from_slice(prep.words());
                    match channel {
                        NoiseChannel::Tp => model.apply_tp_noise(&mut obs, &mut rng),
                        NoiseChannel::Ctmp => rates.gillespie(&mut obs, &mut rng),
                    }
                    stats.record(s, &obs);
                }
            }
            Ok(stats)
        })
        .collect();
    let mut merged = SufficientStats::new(n);
    for p in partials {
        merged.merge(p?);
    }
    Ok(merged)
}

/// CSV rows of per-pair correlation screening: `j,k,pattern,shots,
/// p_first,p_second,p_joint,covariance,correlation`.
pub fn correlation_csv(stats: &SufficientStats) -> String {
    let mut out = String::from("j,k,pattern,shots,p_first,p_second,p_joint,covariance,correlation\n");
    for (j, k) in all_pairs(stats.n()) {
        let s = stats.pair_flip_stats(j, k);
        for v in 0..4 {
            out.push_str(&format!(
                "{j},{k},{v},{},{},{},{},{},{}\n",
                s.shots[v], s.p_first[v], s.p_second[v], s.p_joint[v], s.covariance[v],
                s.correlation[v]
            ));
        }
    }
    out
}
