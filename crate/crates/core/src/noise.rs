//! Classical readout-noise models.
//!
//! Two forward channels share one model type:
//!
//! * **TP** — independent per-qubit bit flips: prepared 0 reads 1 with
//!   probability `eps`, prepared 1 reads 0 with probability `eta`
//!   (column-stochastic response `[[1-eps, eta], [eps, 1-eta]]`).
//! * **CTMP** — a continuous-time Markov jump process `Lambda = exp(G)`
//!   over bitstrings, with `G` assembled from single-qubit excitation and
//!   relaxation generators plus two-qubit correlated-flip generators.
//!   The channel is sampled exactly over unit evolution time with the
//!   Gillespie algorithm (draw exponential waiting times from the total
//!   exit rate, then pick a jump proportional to its rate).
//!
//! When a model carries only TP parameters, the CTMP channel uses the
//! exactly equivalent single-qubit rates, so the two channels coincide.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Exp1};

use crate::bits::BitString;
use crate::error::{Error, Result};
use crate::numeric;
use crate::rng::SeededRng;

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum NoiseChannel {
    Tp,
    Ctmp,
}

impl NoiseChannel {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "tp" => Ok(Self::Tp),
            "ctmp" => Ok(Self::Ctmp),
            other => Err(Error::Config(format!("unknown channel {other:?}"))),
        }
    }
}

/// Per-qubit TP flip probabilities.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TpRates {
    pub eps: f64,
    pub eta: f64,
}

impl TpRates {
    pub const ZERO: TpRates = TpRates { eps: 0.0, eta: 0.0 };

    /// 2x2 column-stochastic response matrix (columns = prepared bit).
    pub fn lambda(&self) -> [[f64; 2]; 2] {
        [[1.0 - self.eps, self.eta], [self.eps, 1.0 - self.eta]]
    }

    /// Exact CTMP rates `(r_{0->1}, r_{1->0})` whose unit-time exponential
    /// reproduces this flip matrix.
    pub fn to_single_rates(&self) -> Result<(f64, f64)> {
        let s = self.eps + self.eta;
        if s >= 1.0 {
            return Err(Error::SingularChannel(s));
        }
        if s <= 0.0 {
            return Ok((0.0, 0.0));
        }
        // exp of [[-r0, r1], [r0, -r1]] is I + (1 - e^-R)/R * G with R = r0 + r1.
        let big_r = -(1.0 - s).ln();
        Ok((self.eps * big_r / s, self.eta * big_r / s))
    }

    /// Inverse of [`TpRates::to_single_rates`].
    pub fn from_single_rates(r0: f64, r1: f64) -> TpRates {
        let big_r = r0 + r1;
        if big_r <= 0.0 {
            return TpRates::ZERO;
        }
        let mix = (1.0 - (-big_r).exp()) / big_r;
        TpRates { eps: r0 * mix, eta: r1 * mix }
    }
}

/// One weighted generator of the CTMP process. Pair terms flip both bits;
/// `from` is the source pattern they act on.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum GeneratorTerm {
    Single { qubit: usize, from: u8, rate: f64 },
    Pair { j: usize, k: usize, from: (u8, u8), rate: f64 },
}

impl GeneratorTerm {
    pub fn rate(&self) -> f64 {
        match *self {
            GeneratorTerm::Single { rate, .. } | GeneratorTerm::Pair { rate, .. } => rate,
        }
    }

    pub fn kind_label(&self) -> String {
        match *self {
            GeneratorTerm::Single { from, .. } => {
                format!("{}to{}", from, 1 - from)
            }
            GeneratorTerm::Pair { from, .. } => {
                format!("{}{}to{}{}", from.0, from.1, 1 - from.0, 1 - from.1)
            }
        }
    }

    fn validate(&self, n: usize) -> Result<()> {
        let ok_bit = |b: u8| b <= 1;
        match *self {
            GeneratorTerm::Single { qubit, from, rate } => {
                if qubit >= n {
                    return Err(Error::VertexOutOfRange { vertex: qubit, n });
                }
                if !ok_bit(from) || !rate.is_finite() || rate < 0.0 {
                    return Err(Error::InvalidInput(format!("bad single term {self:?}")));
                }
            }
            GeneratorTerm::Pair { j, k, from, rate } => {
                if j >= n || k >= n {
                    return Err(Error::VertexOutOfRange { vertex: j.max(k), n });
                }
                if j >= k {
                    return Err(Error::InvalidInput(format!("pair term needs j < k, got ({j},{k})")));
                }
                if !ok_bit(from.0) || !ok_bit(from.1) || !rate.is_finite() || rate < 0.0 {
                    return Err(Error::InvalidInput(format!("bad pair term {self:?}")));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct ReadoutNoiseModel {
    n: usize,
    tp: Vec<TpRates>,
    generators: Vec<GeneratorTerm>,
    depolarizing_p: Option<f64>,
}

impl ReadoutNoiseModel {
    pub fn noiseless(n: usize) -> Self {
        Self { n, tp: vec![TpRates::ZERO; n], generators: Vec::new(), depolarizing_p: None }
    }

    pub fn from_parts(
        n: usize,
        tp: Vec<TpRates>,
        generators: Vec<GeneratorTerm>,
        depolarizing_p: Option<f64>,
    ) -> Result<Self> {
        let m = Self { n, tp, generators, depolarizing_p };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if self.tp.len() != self.n {
            return Err(Error::DimensionMismatch(format!(
                "{} TP entries for {} qubits",
                self.tp.len(),
                self.n
            )));
        }
        for (q, t) in self.tp.iter().enumerate() {
            if !(t.eps.is_finite() && t.eta.is_finite()) || t.eps < 0.0 || t.eta < 0.0 {
                return Err(Error::InvalidInput(format!("bad TP rates on qubit {q}")));
            }
            if t.eps + t.eta >= 1.0 {
                return Err(Error::SingularChannel(t.eps + t.eta));
            }
        }
        for g in &self.generators {
            g.validate(self.n)?;
        }
        if let Some(p) = self.depolarizing_p {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidInput(format!("depolarizing p = {p}")));
            }
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn tp_rates(&self) -> &[TpRates] {
        &self.tp
    }

    pub fn generator_terms(&self) -> &[GeneratorTerm] {
        &self.generators
    }

    pub fn depolarizing_p(&self) -> Option<f64> {
        self.depolarizing_p
    }

    pub fn is_noiseless_readout(&self) -> bool {
        self.tp.iter().all(|t| t.eps == 0.0 && t.eta == 0.0) && self.generators.is_empty()
    }

    /// Full CTMP rate set: exact single-qubit rates derived from the TP
    /// parameters, augmented by the explicit generator terms.
    pub fn ctmp_rate_set(&self) -> Result<Vec<GeneratorTerm>> {
        let mut terms = Vec::new();
        for (q, t) in self.tp.iter().enumerate() {
            let (r0, r1) = t.to_single_rates()?;
            if r0 > 0.0 {
                terms.push(GeneratorTerm::Single { qubit: q, from: 0, rate: r0 });
            }
            if r1 > 0.0 {
                terms.push(GeneratorTerm::Single { qubit: q, from: 1, rate: r1 });
            }
        }
        terms.extend(self.generators.iter().copied());
        Ok(terms)
    }

    /// Independent flips on every bit (TP channel).
    pub fn apply_tp_noise<R: Rng>(&self, bits: &mut BitString, rng: &mut R) {
        debug_assert_eq!(bits.len(), self.n);
        for (q, t) in self.tp.iter().enumerate() {
            let p = if bits.get(q) { t.eta } else { t.eps };
            if p > 0.0 && rng.gen_bool(p) {
                bits.flip(q);
            }
        }
    }

    /// Indexed rate table for the full CTMP rate set. Build once and reuse
    /// inside shot loops.
    pub fn build_rate_set(&self) -> Result<RateSet> {
        RateSet::from_terms(self.n, &self.ctmp_rate_set()?)
    }

    /// Exact unit-time Gillespie simulation of the CTMP channel.
    pub fn apply_ctmp_noise<R: Rng>(&self, bits: &mut BitString, rng: &mut R) -> Result<()> {
        self.build_rate_set()?.gillespie(bits, rng);
        Ok(())
    }

    /// Dense `Lambda = exp(G)` of the CTMP rate set; guarded to `n <= 12`.
    pub fn exact_lambda(&self) -> Result<DMatrix<f64>> {
        let rates = RateSet::from_terms(self.n, &self.ctmp_rate_set()?)?;
        rates.exact_lambda()
    }

    /// Dense TP response as the Kronecker product of per-qubit 2x2 blocks;
    /// guarded to `n <= 12`.
    pub fn tp_lambda_dense(&self) -> Result<DMatrix<f64>> {
        if self.n > 12 {
            return Err(Error::SizeOverflow(format!("dense response for n = {}", self.n)));
        }
        let blocks: Vec<DMatrix<f64>> = self
            .tp
            .iter()
            .map(|t| {
                let l = t.lambda();
                DMatrix::from_row_slice(2, 2, &[l[0][0], l[0][1], l[1][0], l[1][1]])
            })
            .collect();
        Ok(numeric::kron_qubitwise(&blocks))
    }

    /// Random device: TP rates and correlated pair rates drawn uniformly
    /// from the given ranges.
    pub fn synth_device(n: usize, seed: u64, ranges: &SynthRanges) -> Result<Self> {
        let mut rng = crate::rng::master(seed);
        let draw = |rng: &mut SeededRng, (lo, hi): (f64, f64)| {
            if hi <= lo {
                lo
            } else {
                rng.gen_range(lo..hi)
            }
        };
        let tp: Vec<TpRates> = (0..n)
            .map(|_| TpRates { eps: draw(&mut rng, ranges.eps), eta: draw(&mut rng, ranges.eta) })
            .collect();
        let mut generators = Vec::new();
        for &(a, b) in &ranges.pairs {
            let (j, k) = (a.min(b), a.max(b));
            for from in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                let rate = draw(&mut rng, ranges.pair_rate);
                if rate > 0.0 {
                    generators.push(GeneratorTerm::Pair { j, k, from, rate });
                }
            }
        }
        Self::from_parts(n, tp, generators, ranges.depolarizing_p)
    }

    /// Plain-text serialization; rates print in shortest round-trip form,
    /// so load(save(m)) is bit-exact.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "n={}", self.n);
        if let Some(p) = self.depolarizing_p {
            let _ = writeln!(out, "depolarizing {p}");
        }
        for (q, t) in self.tp.iter().enumerate() {
            let _ = writeln!(out, "tp {q} {} {}", t.eps, t.eta);
        }
        for g in &self.generators {
            match *g {
                GeneratorTerm::Single { qubit, rate, .. } => {
                    let _ = writeln!(out, "gen {} {qubit} {rate}", g.kind_label());
                }
                GeneratorTerm::Pair { j, k, rate, .. } => {
                    let _ = writeln!(out, "gen {} {j} {k} {rate}", g.kind_label());
                }
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut n = None;
        let mut tp_lines: Vec<(usize, TpRates)> = Vec::new();
        let mut generators = Vec::new();
        let mut depolarizing_p = None;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let bad = |msg: &str| Error::Config(format!("model line {}: {msg}", lineno + 1));
            if let Some(v) = line.strip_prefix("n=") {
                n = Some(v.trim().parse::<usize>().map_err(|_| bad("bad qubit count"))?);
            } else if let Some(rest) = line.strip_prefix("depolarizing ") {
                depolarizing_p =
                    Some(rest.trim().parse::<f64>().map_err(|_| bad("bad depolarizing p"))?);
            } else if let Some(rest) = line.strip_prefix("tp ") {
                let toks: Vec<&str> = rest.split_whitespace().collect();
                if toks.len() != 3 {
                    return Err(bad("expected: tp <qubit> <eps> <eta>"));
                }
                let q = toks[0].parse().map_err(|_| bad("bad qubit"))?;
                let eps = toks[1].parse().map_err(|_| bad("bad eps"))?;
                let eta = toks[2].parse().map_err(|_| bad("bad eta"))?;
                tp_lines.push((q, TpRates { eps, eta }));
            } else if let Some(rest) = line.strip_prefix("gen ") {
                let toks: Vec<&str> = rest.split_whitespace().collect();
                let term = match toks.as_slice() {
                    [kind, q, rate] => {
                        let from = match *kind {
                            "0to1" => 0,
                            "1to0" => 1,
                            _ => return Err(bad("unknown single-qubit generator kind")),
                        };
                        GeneratorTerm::Single {
                            qubit: q.parse().map_err(|_| bad("bad qubit"))?,
                            from,
                            rate: rate.parse().map_err(|_| bad("bad rate"))?,
                        }
                    }
                    [kind, j, k, rate] => {
                        let from = match *kind {
                            "00to11" => (0, 0),
                            "01to10" => (0, 1),
                            "10to01" => (1, 0),
                            "11to00" => (1, 1),
                            _ => return Err(bad("unknown pair generator kind")),
                        };
                        GeneratorTerm::Pair {
                            j: j.parse().map_err(|_| bad("bad qubit"))?,
                            k: k.parse().map_err(|_| bad("bad qubit"))?,
                            from,
                            rate: rate.parse().map_err(|_| bad("bad rate"))?,
                        }
                    }
                    _ => return Err(bad("expected: gen <kind> <j> [<k>] <rate>")),
                };
                generators.push(term);
            } else {
                return Err(bad("unrecognized directive"));
            }
        }
        let n = n.ok_or_else(|| Error::Config("model file missing n= header".into()))?;
        let mut tp = vec![TpRates::ZERO; n];
        for (q, t) in tp_lines {
            if q >= n {
                return Err(Error::VertexOutOfRange { vertex: q, n });
            }
            tp[q] = t;
        }
        Self::from_parts(n, tp, generators, depolarizing_p)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}

/// Ranges for [`ReadoutNoiseModel::synth_device`].
#[derive(Clone, Debug)]
pub struct SynthRanges {
    pub eps: (f64, f64),
    pub eta: (f64, f64),
    pub pair_rate: (f64, f64),
    /// Pairs that receive correlated terms (all four source patterns each).
    pub pairs: Vec<(usize, usize)>,
    pub depolarizing_p: Option<f64>,
}

impl Default for SynthRanges {
    fn default() -> Self {
        Self {
            eps: (0.002, 0.02),
            eta: (0.005, 0.04),
            pair_rate: (0.0, 0.0),
            pairs: Vec::new(),
            depolarizing_p: None,
        }
    }
}

/// Indexed CTMP rate table: O(n + #pairs) exit-rate evaluation and jump
/// sampling. Shared by the forward Gillespie channel and the mitigation
/// random walk.
#[derive(Clone, Debug)]
pub struct RateSet {
    n: usize,
    /// `singles[q][b]`: rate of the flip acting on qubit `q` when its bit is `b`.
    singles: Vec<[f64; 2]>,
    /// Pair terms with `rates[pattern]` indexed by `2*b_j + b_k`.
    pairs: Vec<PairRates>,
    total_rate_sum: f64,
}

#[derive(Clone, Copy, Debug)]
pub struct PairRates {
    pub j: usize,
    pub k: usize,
    pub rates: [f64; 4],
}

impl RateSet {
    pub fn from_terms(n: usize, terms: &[GeneratorTerm]) -> Result<Self> {
        let mut singles = vec![[0.0; 2]; n];
        let mut pair_index: std::collections::BTreeMap<(usize, usize), usize> =
            std::collections::BTreeMap::new();
        let mut pairs: Vec<PairRates> = Vec::new();
        for term in terms {
            term.validate(n)?;
            match *term {
                GeneratorTerm::Single { qubit, from, rate } => {
                    singles[qubit][from as usize] += rate;
                }
                GeneratorTerm::Pair { j, k, from, rate } => {
                    let idx = *pair_index.entry((j, k)).or_insert_with(|| {
                        pairs.push(PairRates { j, k, rates: [0.0; 4] });
                        pairs.len() - 1
                    });
                    pairs[idx].rates[(from.0 * 2 + from.1) as usize] += rate;
                }
            }
        }
        let total_rate_sum = singles.iter().map(|s| s[0] + s[1]).sum::<f64>()
            + pairs.iter().map(|p| p.rates.iter().sum::<f64>()).sum::<f64>();
        Ok(Self { n, singles, pairs, total_rate_sum })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn singles(&self) -> &[[f64; 2]] {
        &self.singles
    }

    pub fn pairs(&self) -> &[PairRates] {
        &self.pairs
    }

    /// Sum of all rates, an upper bound on any exit rate.
    pub fn rate_sum(&self) -> f64 {
        self.total_rate_sum
    }

    /// Total exit rate `R(x) = -<x|G|x>` of the current string.
    pub fn exit_rate(&self, bits: &BitString) -> f64 {
        let mut r = 0.0;
        for (q, s) in self.singles.iter().enumerate() {
            r += s[bits.get(q) as usize];
        }
        for p in &self.pairs {
            r += p.rates[pattern_of(bits, p.j, p.k)];
        }
        r
    }

    /// Pick a matching generator proportional to rate and apply its flip.
    /// `total` must be the current exit rate.
    pub fn sample_jump<R: Rng>(&self, bits: &mut BitString, total: f64, rng: &mut R) {
        debug_assert!(total > 0.0);
        let mut u = rng.gen_range(0.0..total);
        for (q, s) in self.singles.iter().enumerate() {
            let r = s[bits.get(q) as usize];
            if u < r {
                bits.flip(q);
                return;
            }
            u -= r;
        }
        for p in &self.pairs {
            let r = p.rates[pattern_of(bits, p.j, p.k)];
            if u < r {
                bits.flip(p.j);
                bits.flip(p.k);
                return;
            }
            u -= r;
        }
        // Floating-point slack: re-apply the last positive rate.
        for q in (0..self.n).rev() {
            if self.singles[q][bits.get(q) as usize] > 0.0 {
                bits.flip(q);
                return;
            }
        }
    }

    /// Unit-time Gillespie trajectory, mutating `bits` in place.
    pub fn gillespie<R: Rng>(&self, bits: &mut BitString, rng: &mut R) {
        let mut t = 0.0;
        loop {
            let r = self.exit_rate(bits);
            if r <= 0.0 {
                return;
            }
            let wait: f64 = Exp1.sample(rng);
            t += wait / r;
            if t >= 1.0 {
                return;
            }
            self.sample_jump(bits, r, rng);
        }
    }

    /// Assemble the dense generator `G` (columns sum to zero).
    pub fn dense_generator(&self) -> Result<DMatrix<f64>> {
        if self.n > 12 {
            return Err(Error::SizeOverflow(format!("dense generator for n = {}", self.n)));
        }
        let dim = 1usize << self.n;
        let mut g = DMatrix::zeros(dim, dim);
        let mut bits = BitString::zeros(self.n);
        for v in 0..dim {
            bits.words_mut()[0] = v as u64;
            let mut exit = 0.0;
            for (q, s) in self.singles.iter().enumerate() {
                let r = s[bits.get(q) as usize];
                if r > 0.0 {
                    g[(v ^ (1 << q), v)] += r;
                    exit += r;
                }
            }
            for p in &self.pairs {
                let r = p.rates[pattern_of(&bits, p.j, p.k)];
                if r > 0.0 {
                    g[(v ^ (1 << p.j) ^ (1 << p.k), v)] += r;
                    exit += r;
                }
            }
            g[(v, v)] -= exit;
        }
        Ok(g)
    }

    /// Dense `exp(G)` by scaling and squaring.
    pub fn exact_lambda(&self) -> Result<DMatrix<f64>> {
        Ok(numeric::expm(&self.dense_generator()?))
    }
}

#[inline]
pub fn pattern_of(bits: &BitString, j: usize, k: usize) -> usize {
    (bits.get(j) as usize) * 2 + bits.get(k) as usize
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use approx::assert_relative_eq;

    #[test]
    fn tp_noise_flip_frequencies() {
        let mut m = ReadoutNoiseModel::noiseless(2);
        m.tp = vec![TpRates { eps: 0.1, eta: 0.3 }, TpRates::ZERO];
        m.validate().unwrap();
        let mut rng = rng::master(4);
        let shots = 200_000;
        let mut flips0 = 0;
        let mut flips1 = 0;
        for _ in 0..shots {
            let mut b = BitString::zeros(2);
            m.apply_tp_noise(&mut b, &mut rng);
            if b.get(0) {
                flips0 += 1;
            }
            let mut b = BitString::from_bools(&[true, true]);
            m.apply_tp_noise(&mut b, &mut rng);
            if !b.get(0) {
                flips1 += 1;
            }
        }
        assert_relative_eq!(flips0 as f64 / shots as f64, 0.1, epsilon = 5e-3);
        assert_relative_eq!(flips1 as f64 / shots as f64, 0.3, epsilon = 5e-3);
    }

    #[test]
    fn pair_generator_transition_probability() {
        // Single 00->11 term at rate r: P(11 | 00) = 1 - e^-r after unit time.
        let r = 0.35;
        let m = ReadoutNoiseModel::from_parts(
            2,
            vec![TpRates::ZERO; 2],
            vec![GeneratorTerm::Pair { j: 0, k: 1, from: (0, 0), rate: r }],
            None,
        )
        .unwrap();
        let mut rng = rng::master(8);
        let shots = 400_000;
        let mut hits = 0;
        for _ in 0..shots {
            let mut b = BitString::zeros(2);
            m.apply_ctmp_noise(&mut b, &mut rng).unwrap();
            if b.get(0) && b.get(1) {
                hits += 1;
            }
        }
        assert_relative_eq!(hits as f64 / shots as f64, 1.0 - (-r).exp(), epsilon = 5e-3);
    }

    #[test]
    fn tp_and_single_rate_conversions_invert() {
        let t = TpRates { eps: 0.07, eta: 0.02 };
        let (r0, r1) = t.to_single_rates().unwrap();
        let back = TpRates::from_single_rates(r0, r1);
        assert_relative_eq!(back.eps, t.eps, epsilon = 1e-14);
        assert_relative_eq!(back.eta, t.eta, epsilon = 1e-14);
    }

    #[test]
    fn tp_only_exact_lambda_factorizes() {
        // CTMP exponential of the derived single rates == Kronecker of the
        // per-qubit TP blocks, for n <= 4.
        let mut rng = rng::master(12);
        for n in 1..=4 {
            let tp: Vec<TpRates> = (0..n)
                .map(|_| TpRates { eps: rng.gen_range(0.0..0.2), eta: rng.gen_range(0.0..0.2) })
                .collect();
            let m = ReadoutNoiseModel::from_parts(n, tp, vec![], None).unwrap();
            let a = m.exact_lambda().unwrap();
            let b = m.tp_lambda_dense().unwrap();
            assert!((a - b).abs().max() < 1e-12);
        }
    }

    #[test]
    fn exact_lambda_of_empty_generator_is_identity() {
        let m = ReadoutNoiseModel::noiseless(3);
        let l = m.exact_lambda().unwrap();
        assert!((l - DMatrix::<f64>::identity(8, 8)).abs().max() < 1e-14);
    }

    #[test]
    fn model_text_roundtrip_is_bit_exact() {
        let ranges = SynthRanges {
            pair_rate: (0.0001, 0.003),
            pairs: vec![(0, 1), (2, 4)],
            depolarizing_p: Some(0.0125),
            ..SynthRanges::default()
        };
        let m = ReadoutNoiseModel::synth_device(5, 99, &ranges).unwrap();
        let back = ReadoutNoiseModel::from_text(&m.to_text()).unwrap();
        assert_eq!(back.n(), m.n());
        assert_eq!(back.depolarizing_p(), m.depolarizing_p());
        for (a, b) in back.tp_rates().iter().zip(m.tp_rates()) {
            assert!(a.eps.to_bits() == b.eps.to_bits() && a.eta.to_bits() == b.eta.to_bits());
        }
        assert_eq!(back.generator_terms(), m.generator_terms());
    }

    #[test]
    fn validation_rejects_singular_and_malformed() {
        assert!(ReadoutNoiseModel::from_parts(
            1,
            vec![TpRates { eps: 0.6, eta: 0.5 }],
            vec![],
            None
        )
        .is_err());
        assert!(ReadoutNoiseModel::from_parts(
            2,
            vec![TpRates::ZERO; 2],
            vec![GeneratorTerm::Pair { j: 1, k: 1, from: (0, 0), rate: 0.1 }],
            None
        )
        .is_err());
        assert!(ReadoutNoiseModel::from_parts(
            2,
            vec![TpRates::ZERO; 2],
            vec![GeneratorTerm::Single { qubit: 5, from: 0, rate: 0.1 }],
            None
        )
        .is_err());
    }

    #[test]
    fn gillespie_on_zero_rates_is_identity() {
        let m = ReadoutNoiseModel::noiseless(4);
        let mut rng = rng::master(1);
        let mut b = BitString::from_bools(&[true, false, true, true]);
        let before = b.clone();
        m.apply_ctmp_noise(&mut b, &mut rng).unwrap();
        assert_eq!(b, before);
    }
}
