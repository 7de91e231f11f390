//! Readout-error mitigation.
//!
//! TP mitigation inverts each qubit's 2x2 response in closed form: a
//! measured bit contributes `(1+eps-eta)/(1-eps-eta)` when it reads 0 and
//! `-(1+eta-eps)/(1-eps-eta)` when it reads 1, in place of `+1`/`-1`.
//!
//! CTMP mitigation expands `Lambda^{-1} = exp(-G)` around the
//! column-stochastic matrix `B = I + G/gamma`, where
//! `gamma = max_x R(x)` is the largest total exit rate:
//!
//! ```text
//! Lambda^{-1} = e^{2 gamma} * sum_alpha  Pois(alpha; gamma) (-1)^alpha B^alpha
//! ```
//!
//! which is sampled by drawing `alpha` from the Poisson distribution and
//! taking `alpha` steps of the `B` random walk from the measured string.
//! Both schemes multiply the shot variance by the square of a sampling
//! overhead `Gamma` (`e^{2 gamma}` for CTMP), which is what sample-size
//! planning must absorb.

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::bits::BitString;
use crate::error::{Error, Result};
use crate::noise::{RateSet, TpRates};
use crate::rng;

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Raw,
    Tp,
    Ctmp,
}

impl Method {
    pub fn label(&self) -> &'static str {
        match self {
            Method::Raw => "raw",
            Method::Tp => "tp",
            Method::Ctmp => "ctmp",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "raw" => Ok(Method::Raw),
            "tp" => Ok(Method::Tp),
            "ctmp" => Ok(Method::Ctmp),
            other => Err(Error::Config(format!("unknown method {other:?}"))),
        }
    }
}

/// An estimate together with the error-bar bookkeeping campaigns report.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MitigatedEstimate {
    pub method: Method,
    pub value: f64,
    /// Hoeffding half-width the run was planned for, when planned.
    pub planned_epsilon: Option<f64>,
    pub delta: Option<f64>,
    /// Standard error of the mean over per-setting (or per-group) means.
    pub empirical_std_error: f64,
    pub gamma: f64,
    /// Sampling overhead `Gamma`; shot values live in `[-Gamma, +Gamma]`.
    pub overhead: f64,
    pub settings: usize,
    pub shots_per_setting: usize,
    pub samples_per_shot: usize,
}

/// Per-bit TP inversion factor replacing the raw `(-1)^bit`.
pub fn tp_inverse_factor(t: &TpRates, bit: bool) -> Result<f64> {
    let det = 1.0 - t.eps - t.eta;
    if det <= 0.0 {
        return Err(Error::SingularChannel(t.eps + t.eta));
    }
    Ok(if bit { -(1.0 + t.eta - t.eps) / det } else { (1.0 + t.eps - t.eta) / det })
}

/// Worst-case magnitude of the inversion factor on one qubit.
pub fn tp_qubit_overhead(t: &TpRates) -> Result<f64> {
    let det = 1.0 - t.eps - t.eta;
    if det <= 0.0 {
        return Err(Error::SingularChannel(t.eps + t.eta));
    }
    Ok((1.0 + (t.eps - t.eta).abs()) / det)
}

/// Product of per-qubit overheads across an observable's support.
pub fn tp_support_overhead<I: IntoIterator<Item = usize>>(
    tp: &[TpRates],
    support: I,
) -> Result<f64> {
    let mut acc = 1.0;
    for q in support {
        acc *= tp_qubit_overhead(&tp[q])?;
    }
    Ok(acc)
}

/// Mitigated parity over a support set: the product of inversion factors.
pub fn tp_mitigated_parity<I: IntoIterator<Item = usize>>(
    tp: &[TpRates],
    bits: &BitString,
    support: I,
) -> Result<f64> {
    let mut acc = 1.0;
    for q in support {
        acc *= tp_inverse_factor(&tp[q], bits.get(q))?;
    }
    Ok(acc)
}

/// Largest exit rate of a model's full CTMP rate set (its mitigation
/// `gamma`), with `exact = false` when annealing replaced enumeration.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct GammaEstimate {
    pub gamma: f64,
    pub exact: bool,
}

/// `gamma = max_x R(x)`. Qubits couple only through pair terms, so the
/// maximization splits over connected components of the pair graph; each
/// component is enumerated exactly when it has at most 22 qubits and
/// handed to seeded simulated annealing (plus greedy polish) otherwise.
pub fn ctmp_gamma(rates: &RateSet, anneal_seed: u64) -> GammaEstimate {
    let n = rates.n();
    // Union-find over pair links.
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut Vec<usize>, mut v: usize) -> usize {
        while parent[v] != v {
            parent[v] = parent[parent[v]];
            v = parent[v];
        }
        v
    }
    for p in rates.pairs() {
        let (a, b) = (find(&mut parent, p.j), find(&mut parent, p.k));
        if a != b {
            parent[a] = b;
        }
    }
    let mut members: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for q in 0..n {
        members.entry(find(&mut parent, q)).or_default().push(q);
    }
    let mut pair_adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (idx, p) in rates.pairs().iter().enumerate() {
        pair_adj[p.j].push(idx);
        pair_adj[p.k].push(idx);
    }

    let mut gamma = 0.0;
    let mut exact = true;
    let mut assign = vec![false; n];
    for comp in members.values() {
        if comp.len() == 1 && pair_adj[comp[0]].is_empty() {
            let s = rates.singles()[comp[0]];
            gamma += s[0].max(s[1]);
            continue;
        }
        if comp.len() <= 22 {
            gamma += maximize_exhaustive(rates, &pair_adj, comp, &mut assign);
        } else {
            gamma += maximize_annealed(rates, &pair_adj, comp, &mut assign, anneal_seed);
            exact = false;
        }
    }
    GammaEstimate { gamma, exact }
}

fn component_rate(rates: &RateSet, comp: &[usize], assign: &[bool]) -> f64 {
    let mut r = 0.0;
    let mut seen_pairs = std::collections::BTreeSet::new();
    for &q in comp {
        r += rates.singles()[q][assign[q] as usize];
    }
    for p in rates.pairs() {
        if comp.contains(&p.j) && seen_pairs.insert((p.j, p.k)) {
            let pat = (assign[p.j] as usize) * 2 + assign[p.k] as usize;
            r += p.rates[pat];
        }
    }
    r
}

fn flip_delta(rates: &RateSet, pair_adj: &[Vec<usize>], assign: &[bool], q: usize) -> f64 {
    let b = assign[q] as usize;
    let mut d = rates.singles()[q][1 - b] - rates.singles()[q][b];
    for &pi in &pair_adj[q] {
        let p = &rates.pairs()[pi];
        let old = (assign[p.j] as usize) * 2 + assign[p.k] as usize;
        let new = if q == p.j { old ^ 2 } else { old ^ 1 };
        d += p.rates[new] - p.rates[old];
    }
    d
}

fn maximize_exhaustive(
    rates: &RateSet,
    pair_adj: &[Vec<usize>],
    comp: &[usize],
    assign: &mut [bool],
) -> f64 {
    for &q in comp {
        assign[q] = false;
    }
    let mut current = component_rate(rates, comp, assign);
    let mut best = current;
    // Gray-code sweep: step i flips the qubit at the lowest set bit of i.
    for step in 1u64..(1u64 << comp.len()) {
        let q = comp[step.trailing_zeros() as usize];
        current += flip_delta(rates, pair_adj, assign, q);
        assign[q] = !assign[q];
        if current > best {
            best = current;
        }
    }
    best
}

fn maximize_annealed(
    rates: &RateSet,
    pair_adj: &[Vec<usize>],
    comp: &[usize],
    assign: &mut [bool],
    seed: u64,
) -> f64 {
    let mut rng = rng::master(seed ^ 0x5eed_ca11);
    let scale = rates
        .pairs()
        .iter()
        .flat_map(|p| p.rates.iter())
        .chain(rates.singles().iter().flatten())
        .fold(1e-12f64, |a, &b| a.max(b));
    let mut best = f64::NEG_INFINITY;
    for restart in 0..12 {
        for &q in comp {
            assign[q] = match restart {
                0 => false,
                1 => true,
                // Greedy on single rates, then random restarts.
                2 => rates.singles()[q][1] > rates.singles()[q][0],
                _ => rng.gen(),
            };
        }
        let mut current = component_rate(rates, comp, assign);
        let steps = 20_000 + 400 * comp.len();
        let mut temp = scale;
        let cooling = (1e-5f64).powf(1.0 / steps as f64);
        for _ in 0..steps {
            let q = comp[rng.gen_range(0..comp.len())];
            let d = flip_delta(rates, pair_adj, assign, q);
            if d >= 0.0 || rng.gen::<f64>() < (d / temp).exp() {
                assign[q] = !assign[q];
                current += d;
                if current > best {
                    best = current;
                }
            }
            temp *= cooling;
        }
        // Greedy polish until no single flip improves.
        loop {
            let mut improved = false;
            for &q in comp {
                let d = flip_delta(rates, pair_adj, assign, q);
                if d > 1e-15 {
                    assign[q] = !assign[q];
                    current += d;
                    improved = true;
                }
            }
            if !improved {
                break;
            }
        }
        best = best.max(current);
    }
    best
}

/// Poisson-series sampler for `Lambda^{-1}`.
#[derive(Clone, Debug)]
pub struct CtmpMitigator {
    rates: RateSet,
    gamma: f64,
    gamma_exact: bool,
    alpha_cap: u64,
    poisson: Option<Poisson<f64>>,
}

impl CtmpMitigator {
    pub fn new(rates: RateSet, anneal_seed: u64) -> Self {
        let est = ctmp_gamma(&rates, anneal_seed);
        Self::with_gamma(rates, est.gamma, est.exact)
    }

    /// Build with a caller-supplied `gamma` (e.g. estimated from calibration
    /// of a different model). Walks fail with [`Error::GammaUnderestimated`]
    /// if a visited string's exit rate exceeds it.
    pub fn with_gamma(rates: RateSet, gamma: f64, gamma_exact: bool) -> Self {
        // Series terms beyond the far Poisson tail are numerically irrelevant;
        // draws past the cap are clamped and counted.
        let alpha_cap = (gamma + 40.0 * gamma.sqrt() + 50.0).ceil() as u64;
        let poisson = if gamma > 0.0 { Some(Poisson::new(gamma).expect("gamma > 0")) } else { None };
        Self { rates, gamma, gamma_exact, alpha_cap, poisson }
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn gamma_exact(&self) -> bool {
        self.gamma_exact
    }

    pub fn overhead(&self) -> f64 {
        (2.0 * self.gamma).exp()
    }

    pub fn alpha_cap(&self) -> u64 {
        self.alpha_cap
    }

    pub fn rates(&self) -> &RateSet {
        &self.rates
    }

    /// One mitigated shot value: the average of `t_samples` independent
    /// walk evaluations of `observable`, scaled by the overhead. Returns the
    /// value and the number of clamped Poisson draws.
    pub fn shot_value<R: Rng, O: Fn(&BitString) -> f64>(
        &self,
        measured: &BitString,
        t_samples: usize,
        observable: O,
        rng: &mut R,
    ) -> Result<(f64, u64)> {
        let Some(poisson) = &self.poisson else {
            return Ok((observable(measured), 0));
        };
        let mut acc = 0.0;
        let mut overflows = 0u64;
        let mut walker = measured.clone();
        for _ in 0..t_samples {
            walker.words_mut().copy_from_slice(measured.words());
            let drawn = poisson.sample(rng);
            let mut alpha = drawn as u64;
            if alpha > self.alpha_cap {
                alpha = self.alpha_cap;
                overflows += 1;
            }
            for _ in 0..alpha {
                let r = self.rates.exit_rate(&walker);
                if r > self.gamma * (1.0 + 1e-9) {
                    return Err(Error::GammaUnderestimated { rate: r, gamma: self.gamma });
                }
                if rng.gen::<f64>() * self.gamma < r {
                    self.rates.sample_jump(&mut walker, r, rng);
                }
            }
            let sign = if alpha % 2 == 1 { -1.0 } else { 1.0 };
            acc += sign * observable(&walker);
        }
        Ok((self.overhead() * acc / t_samples as f64, overflows))
    }
}

/// Coefficient table of the series `Lambda^{-1} = sum_alpha c_alpha B^alpha`
/// (diagnostics; the sampler never materializes it).
#[derive(Clone, Debug)]
pub struct CtmpExpansion {
    pub gamma: f64,
    /// Signed series coefficients `c_alpha = Gamma * (-1)^alpha * Pois(alpha; gamma)`.
    pub coefficients: Vec<f64>,
    /// Poisson sampling weights `q_alpha`.
    pub weights: Vec<f64>,
    /// Partial sum of `|c_alpha|`; approaches the overhead `Gamma`.
    pub abs_sum: f64,
}

impl CtmpExpansion {
    pub fn new(gamma: f64, max_alpha: usize) -> Self {
        let overhead = (2.0 * gamma).exp();
        let mut weights = Vec::with_capacity(max_alpha + 1);
        let mut q = (-gamma).exp();
        for alpha in 0..=max_alpha {
            if alpha > 0 {
                q *= gamma / alpha as f64;
            }
            weights.push(q);
        }
        let coefficients: Vec<f64> = weights
            .iter()
            .enumerate()
            .map(|(a, &w)| overhead * w * if a % 2 == 1 { -1.0 } else { 1.0 })
            .collect();
        let abs_sum = coefficients.iter().map(|c| c.abs()).sum();
        Self { gamma, coefficients, weights, abs_sum }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::{GeneratorTerm, ReadoutNoiseModel};
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;
    use rand::Rng;

    #[test]
    fn tp_factor_matches_dense_inverse() {
        let t = TpRates { eps: 0.04, eta: 0.09 };
        let l = t.lambda();
        let inv = DMatrix::from_row_slice(2, 2, &[l[0][0], l[0][1], l[1][0], l[1][1]])
            .try_inverse()
            .unwrap();
        // Row vector [1, -1] * Lambda^{-1} gives the per-outcome factors.
        let f0 = inv[(0, 0)] - inv[(1, 0)];
        let f1 = inv[(0, 1)] - inv[(1, 1)];
        assert_relative_eq!(tp_inverse_factor(&t, false).unwrap(), f0, epsilon = 1e-14);
        assert_relative_eq!(tp_inverse_factor(&t, true).unwrap(), f1, epsilon = 1e-14);
    }

    #[test]
    fn tp_factor_is_unbiased_by_construction() {
        let mut r = crate::rng::master(3);
        for _ in 0..50 {
            let t = TpRates { eps: r.gen_range(0.0..0.4), eta: r.gen_range(0.0..0.4) };
            let f0 = tp_inverse_factor(&t, false).unwrap();
            let f1 = tp_inverse_factor(&t, true).unwrap();
            // Prepared 0: reads 0 w.p. 1-eps. Expected factor must be +1.
            assert_relative_eq!((1.0 - t.eps) * f0 + t.eps * f1, 1.0, epsilon = 1e-12);
            // Prepared 1: expected factor must be -1.
            assert_relative_eq!(t.eta * f0 + (1.0 - t.eta) * f1, -1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn singular_tp_rejected() {
        let t = TpRates { eps: 0.5, eta: 0.5 };
        assert!(tp_inverse_factor(&t, false).is_err());
        assert!(tp_qubit_overhead(&t).is_err());
    }

    fn random_rate_set(n: usize, pair_count: usize, seed: u64) -> RateSet {
        let mut r = crate::rng::master(seed);
        let mut terms = Vec::new();
        for q in 0..n {
            terms.push(GeneratorTerm::Single { qubit: q, from: 0, rate: r.gen_range(0.0..0.1) });
            terms.push(GeneratorTerm::Single { qubit: q, from: 1, rate: r.gen_range(0.0..0.1) });
        }
        for _ in 0..pair_count {
            let j = r.gen_range(0..n - 1);
            let k = r.gen_range(j + 1..n);
            terms.push(GeneratorTerm::Pair {
                j,
                k,
                from: (r.gen_range(0..2u8), r.gen_range(0..2u8)),
                rate: r.gen_range(0.0..0.2),
            });
        }
        RateSet::from_terms(n, &terms).unwrap()
    }

    #[test]
    fn gamma_matches_bruteforce_max() {
        for seed in 0..5 {
            let rates = random_rate_set(8, 6, seed);
            let est = ctmp_gamma(&rates, 0);
            assert!(est.exact);
            let mut best = 0.0f64;
            let mut bits = BitString::zeros(8);
            for v in 0..(1u64 << 8) {
                bits.words_mut()[0] = v;
                best = best.max(rates.exit_rate(&bits));
            }
            assert_relative_eq!(est.gamma, best, epsilon = 1e-12);
        }
    }

    #[test]
    fn gamma_on_singles_is_sum_of_maxima() {
        let rates = RateSet::from_terms(
            3,
            &[
                GeneratorTerm::Single { qubit: 0, from: 0, rate: 0.3 },
                GeneratorTerm::Single { qubit: 0, from: 1, rate: 0.1 },
                GeneratorTerm::Single { qubit: 1, from: 1, rate: 0.25 },
                GeneratorTerm::Single { qubit: 2, from: 0, rate: 0.05 },
            ],
        )
        .unwrap();
        let est = ctmp_gamma(&rates, 0);
        assert!(est.exact);
        assert_relative_eq!(est.gamma, 0.3 + 0.25 + 0.05, epsilon = 1e-14);
    }

    #[test]
    fn annealed_gamma_close_to_exact_on_chain() {
        // Chain of pairs is one big component; compare annealing (forced by
        // treating the chain as oversized) against exact enumeration.
        let n = 16;
        let rates = random_rate_set_chain(n, 77);
        let exact = ctmp_gamma(&rates, 0);
        assert!(exact.exact);
        let mut assign = vec![false; n];
        let comp: Vec<usize> = (0..n).collect();
        let mut pair_adj: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (idx, p) in rates.pairs().iter().enumerate() {
            pair_adj[p.j].push(idx);
            pair_adj[p.k].push(idx);
        }
        let annealed = maximize_annealed(&rates, &pair_adj, &comp, &mut assign, 5);
        assert_relative_eq!(annealed, exact.gamma, epsilon = 1e-9);
    }

    fn random_rate_set_chain(n: usize, seed: u64) -> RateSet {
        let mut r = crate::rng::master(seed);
        let mut terms = Vec::new();
        for q in 0..n {
            terms.push(GeneratorTerm::Single { qubit: q, from: 0, rate: r.gen_range(0.0..0.05) });
            terms.push(GeneratorTerm::Single { qubit: q, from: 1, rate: r.gen_range(0.0..0.05) });
        }
        for j in 0..n - 1 {
            for from in [(0, 0), (1, 1)] {
                terms.push(GeneratorTerm::Pair { j, k: j + 1, from, rate: r.gen_range(0.0..0.1) });
            }
        }
        RateSet::from_terms(n, &terms).unwrap()
    }

    #[test]
    fn expansion_abs_sum_converges_to_overhead() {
        let gamma = 1.3;
        let exp = CtmpExpansion::new(gamma, 80);
        assert_relative_eq!(exp.abs_sum, (2.0 * gamma).exp(), epsilon = 1e-10);
        assert_relative_eq!(exp.weights.iter().sum::<f64>(), 1.0, epsilon = 1e-10);
        assert!(exp.coefficients[1] < 0.0 && exp.coefficients[2] > 0.0);
    }

    #[test]
    fn walk_recovers_true_parity_on_two_qubits() {
        // Prepared |00>, observable = global parity. The mitigated mean must
        // return +1 despite strong correlated noise.
        let model = ReadoutNoiseModel::from_parts(
            2,
            vec![TpRates { eps: 0.03, eta: 0.05 }, TpRates { eps: 0.02, eta: 0.04 }],
            vec![GeneratorTerm::Pair { j: 0, k: 1, from: (0, 0), rate: 0.15 }],
            None,
        )
        .unwrap();
        let rates = RateSet::from_terms(2, &model.ctmp_rate_set().unwrap()).unwrap();
        let mitigator = CtmpMitigator::new(rates, 0);
        assert!(mitigator.gamma_exact());
        let mut rng = crate::rng::master(10);
        let shots = 200_000;
        let mut acc = 0.0;
        let mut measured = BitString::zeros(2);
        for _ in 0..shots {
            measured.clear();
            model.apply_ctmp_noise(&mut measured, &mut rng).unwrap();
            let (v, _) = mitigator
                .shot_value(
                    &measured,
                    1,
                    |b| if b.count_ones() % 2 == 0 { 1.0 } else { -1.0 },
                    &mut rng,
                )
                .unwrap();
            acc += v;
        }
        let mean = acc / shots as f64;
        let se = mitigator.overhead() / (shots as f64).sqrt();
        assert!((mean - 1.0).abs() < 5.0 * se, "mean {mean} se {se}");
    }

    #[test]
    fn zero_gamma_walk_is_raw() {
        let rates = RateSet::from_terms(3, &[]).unwrap();
        let mitigator = CtmpMitigator::new(rates, 0);
        assert_eq!(mitigator.gamma(), 0.0);
        assert_eq!(mitigator.overhead(), 1.0);
        let mut rng = crate::rng::master(1);
        let bits = BitString::from_bools(&[true, false, true]);
        let (v, o) = mitigator
            .shot_value(&bits, 4, |b| if b.get(0) { -1.0 } else { 1.0 }, &mut rng)
            .unwrap();
        assert_eq!(v, -1.0);
        assert_eq!(o, 0);
    }

    #[test]
    fn underestimated_gamma_is_detected() {
        let rates = RateSet::from_terms(
            1,
            &[GeneratorTerm::Single { qubit: 0, from: 0, rate: 0.4 }],
        )
        .unwrap();
        let mitigator = CtmpMitigator::with_gamma(rates, 0.1, false);
        let mut rng = crate::rng::master(2);
        let bits = BitString::zeros(1);
        let mut saw_error = false;
        for _ in 0..200 {
            match mitigator.shot_value(&bits, 1, |_| 1.0, &mut rng) {
                Err(Error::GammaUnderestimated { rate, gamma }) => {
                    assert!(rate > gamma);
                    saw_error = true;
                    break;
                }
                Ok(_) => {}
                Err(e) => panic!("unexpected error {e}"),
            }
        }
        assert!(saw_error);
    }
}
