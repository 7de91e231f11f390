//! Entanglement-witness campaigns on cluster states.
//!
//! Each campaign draws `M` measurement settings — uniformly random subsets
//! of the state's stabilizer generators, multiplied into a single Pauli —
//! and takes `K` shots per setting. The averaged signed parities estimate
//! the state fidelity `F`; `F > 1/2` witnesses genuine multipartite
//! entanglement across every cut.
//!
//! Sample planning inverts the Hoeffding bound. Mitigated shot values live
//! in `[-Gamma, +Gamma]`, so a half-width `epsilon` at confidence
//! `1 - delta` needs
//!
//! ```text
//! N >= 2 Gamma^2 ln(2/delta) / epsilon^2
//! ```
//!
//! total shots, split into settings and shots per setting around a
//! per-setting cap. The guarantee holds at the shot level: extra walk
//! samples per shot (`T > 1`) only reduce within-shot variance.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bits::BitString;
use crate::error::{Error, Result};
use crate::graph::GraphSpec;
use crate::mitigate::{tp_mitigated_parity, CtmpMitigator, Method, MitigatedEstimate};
use crate::noise::{NoiseChannel, ReadoutNoiseModel, TpRates};
use crate::numeric;
use crate::rng;
use crate::tableau::{sample_witness_setting, ErrorFrame, SettingSampler, StabilizerTableau};

/// Shot budget for one campaign.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct WitnessPlan {
    /// Number of random settings `M`.
    pub settings: usize,
    /// Shots per setting `K`.
    pub shots_per_setting: usize,
    /// Mitigation walk samples per shot `T` (CTMP only; 1 otherwise).
    pub samples_per_shot: usize,
    /// Hoeffding half-width the budget guarantees.
    pub epsilon: f64,
    /// Confidence parameter: the bound fails with probability at most delta.
    pub delta: f64,
    /// Shot-value overhead `Gamma` the budget was planned for.
    pub overhead: f64,
}

/// Minimum shots for half-width `epsilon` at confidence `1 - delta` when
/// shot values span `[-overhead, +overhead]`.
pub fn hoeffding_shots(epsilon: f64, delta: f64, overhead: f64) -> u64 {
    (2.0 * overhead * overhead * (2.0 / delta).ln() / (epsilon * epsilon)).ceil() as u64
}

/// Half-width guaranteed by `n_total` shots at confidence `1 - delta`.
pub fn hoeffding_epsilon(n_total: u64, delta: f64, overhead: f64) -> f64 {
    (2.0 * overhead * overhead * (2.0 / delta).ln() / n_total as f64).sqrt()
}

impl WitnessPlan {
    /// Split the Hoeffding shot requirement into settings and shots per
    /// setting: `K` targets one thousandth of the total, capped at `k_cap`.
    pub fn from_error_budget(epsilon: f64, delta: f64, overhead: f64, k_cap: usize) -> Self {
        let n = hoeffding_shots(epsilon, delta, overhead);
        let k = ((n / 1000).max(1) as usize).min(k_cap.max(1));
        let m = n.div_ceil(k as u64) as usize;
        Self {
            settings: m,
            shots_per_setting: k,
            samples_per_shot: 1,
            epsilon,
            delta,
            overhead,
        }
    }

    /// Fixed `(M, K, T)` with the implied half-width back-filled.
    pub fn explicit(
        settings: usize,
        shots_per_setting: usize,
        samples_per_shot: usize,
        delta: f64,
        overhead: f64,
    ) -> Self {
        let n = (settings * shots_per_setting) as u64;
        Self {
            settings,
            shots_per_setting,
            samples_per_shot,
            epsilon: hoeffding_epsilon(n, delta, overhead),
            delta,
            overhead,
        }
    }

    pub fn n_total(&self) -> u64 {
        (self.settings * self.shots_per_setting) as u64
    }
}

/// How measured bitstrings are turned into shot values.
pub enum MitigationSpec<'a> {
    Raw,
    /// Closed-form per-qubit inversion with the given (estimated) rates.
    Tp { rates: &'a [TpRates] },
    /// Poisson-series walk sampler.
    Ctmp { mitigator: &'a CtmpMitigator },
}

impl MitigationSpec<'_> {
    pub fn method(&self) -> Method {
        match self {
            MitigationSpec::Raw => Method::Raw,
            MitigationSpec::Tp { .. } => Method::Tp,
            MitigationSpec::Ctmp { .. } => Method::Ctmp,
        }
    }

    /// Shot-value overhead of this mitigation over the given support size.
    pub fn overhead<I: IntoIterator<Item = usize>>(&self, support: I) -> Result<f64> {
        match self {
            MitigationSpec::Raw => Ok(1.0),
            MitigationSpec::Tp { rates } => crate::mitigate::tp_support_overhead(rates, support),
            MitigationSpec::Ctmp { mitigator } => Ok(mitigator.overhead()),
        }
    }
}

/// One setting's contribution to a campaign.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SettingEstimate {
    /// Stabilizer subset as a 0/1 string over generator indices.
    pub subset: String,
    /// Signed Pauli label of the multiplied setting.
    pub pauli: String,
    pub mean: f64,
    pub shots: usize,
    /// Clamped Poisson draws in the mitigation walks of this setting.
    pub overflows: u64,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct GenuineVerdict {
    pub witness_value: f64,
    pub halfwidth: f64,
    pub threshold: f64,
    /// Margin above the certification threshold after subtracting the error
    /// bar; positive means genuine multipartite entanglement is certified.
    pub margin: f64,
    pub genuine: bool,
}

/// Certify `value - halfwidth > 1/2`.
pub fn genuine_entanglement_verdict(witness_value: f64, halfwidth: f64) -> GenuineVerdict {
    let threshold = 0.5;
    let margin = witness_value - halfwidth - threshold;
    GenuineVerdict { witness_value, halfwidth, threshold, margin, genuine: margin > 0.0 }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WitnessOutcome {
    pub estimate: MitigatedEstimate,
    pub verdict: GenuineVerdict,
    pub setting_estimates: Vec<SettingEstimate>,
    /// Wall-clock duration; not serialized, so data files stay byte-identical
    /// across reruns of the same seed.
    #[serde(skip)]
    pub wall_seconds: f64,
}

/// Run a witness campaign: simulate `plan.settings` random settings against
/// the truth model, then apply the requested mitigation. Setting `m` draws
/// all of its randomness from stream `m` of `seed`, so results are
/// independent of the worker count.
pub fn run_witness(
    graph: &GraphSpec,
    truth: &ReadoutNoiseModel,
    truth_channel: NoiseChannel,
    mitigation: &MitigationSpec,
    plan: &WitnessPlan,
    seed: u64,
) -> Result<WitnessOutcome> {
    graph.validate()?;
    if truth.n() != graph.n() {
        return Err(Error::DimensionMismatch(format!(
            "noise model on {} qubits, graph on {}",
            truth.n(),
            graph.n()
        )));
    }
    if plan.settings == 0 || plan.shots_per_setting == 0 || plan.samples_per_shot == 0 {
        return Err(Error::InvalidInput("plan with empty shot budget".into()));
    }
    let started = Instant::now();
    let tableau = StabilizerTableau::cluster(graph)?;
    let truth_rates = match truth_channel {
        NoiseChannel::Ctmp => Some(truth.build_rate_set()?),
        NoiseChannel::Tp => None,
    };
    let depol = truth.depolarizing_p().unwrap_or(0.0);

    let per_setting: Result<Vec<SettingEstimate>> = (0..plan.settings)
        .into_par_iter()
        .map(|m| {
            let mut rng = rng::stream(seed, m as u64);
            let setting = sample_witness_setting(&tableau, &mut rng)?;
            let sampler = SettingSampler::compile(&tableau, &setting.per_qubit_basis)?;
            let frame = if depol > 0.0 {
                Some(ErrorFrame::new(graph, depol, &setting.per_qubit_basis))
            } else {
                None
            };
            let support: Vec<usize> = setting.pauli.support().iter_ones().collect();
            let sign = f64::from(setting.pauli.sign());
            let mut outcome = BitString::zeros(graph.n());
            let mut acc = 0.0;
            let mut overflows = 0u64;
            for _ in 0..plan.shots_per_setting {
                sampler.sample_into(&mut outcome, &mut rng);
                if let Some(f) = &frame {
                    outcome.xor_assign(&f.sample_mask(&mut rng));
                }
                match truth_channel {
                    NoiseChannel::Tp => truth.apply_tp_noise(&mut outcome, &mut rng),
                    NoiseChannel::Ctmp => {
                        truth_rates.as_ref().unwrap().gillespie(&mut outcome, &mut rng)
                    }
                }
                acc += match mitigation {
                    MitigationSpec::Raw => setting.shot_value(&outcome),
                    MitigationSpec::Tp { rates } => {
                        sign * tp_mitigated_parity(rates, &outcome, support.iter().copied())?
                    }
                    MitigationSpec::Ctmp { mitigator } => {
                        let (v, o) = mitigator.shot_value(
                            &outcome,
                            plan.samples_per_shot,
                            |b| setting.shot_value(b),
                            &mut rng,
                        )?;
                        overflows += o;
                        v
                    }
                };
            }
            Ok(SettingEstimate {
                subset: setting.subset.to_01_string(),
                pauli: setting.pauli.label(),
                mean: acc / plan.shots_per_setting as f64,
                shots: plan.shots_per_setting,
                overflows,
            })
        })
        .collect();
    let setting_estimates = per_setting?;

    let means: Vec<f64> = setting_estimates.iter().map(|s| s.mean).collect();
    let (value, std) = numeric::mean_std(&means);
    let std_error = if means.len() > 1 { std / (means.len() as f64).sqrt() } else { 0.0 };
    let (gamma, overhead) = match mitigation {
        MitigationSpec::Raw => (0.0, 1.0),
        MitigationSpec::Tp { rates } => {
            // Conservative support-independent bound: every qubit measured.
            (0.0, crate::mitigate::tp_support_overhead(rates, 0..graph.n())?)
        }
        MitigationSpec::Ctmp { mitigator } => (mitigator.gamma(), mitigator.overhead()),
    };
    let estimate = MitigatedEstimate {
        method: mitigation.method(),
        value,
        planned_epsilon: Some(plan.epsilon),
        delta: Some(plan.delta),
        empirical_std_error: std_error,
        gamma,
        overhead,
        settings: plan.settings,
        shots_per_setting: plan.shots_per_setting,
        samples_per_shot: plan.samples_per_shot,
    };
    let verdict = genuine_entanglement_verdict(value, plan.epsilon);
    Ok(WitnessOutcome {
        estimate,
        verdict,
        setting_estimates,
        wall_seconds: started.elapsed().as_secs_f64(),
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HistogramBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

/// Spread of the per-setting means: the campaign's "circuit fidelity"
/// fluctuation and the standard errors it implies for the overall mean.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FidelityDistribution {
    pub mean: f64,
    pub std: f64,
    pub se_1sigma: f64,
    pub se_3sigma: f64,
    pub histogram: Vec<HistogramBin>,
}

pub fn circuit_fidelity_distribution(setting_means: &[f64], bins: usize) -> FidelityDistribution {
    let (mean, std) = numeric::mean_std(setting_means);
    let m = setting_means.len().max(1) as f64;
    let se_1sigma = std / m.sqrt();
    let mut histogram = Vec::new();
    if !setting_means.is_empty() && bins > 0 {
        let lo = setting_means.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = setting_means.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let width = ((hi - lo) / bins as f64).max(f64::MIN_POSITIVE);
        let mut counts = vec![0usize; bins];
        for &v in setting_means {
            let idx = (((v - lo) / width) as usize).min(bins - 1);
            counts[idx] += 1;
        }
        histogram = counts
            .into_iter()
            .enumerate()
            .map(|(i, count)| HistogramBin {
                lo: lo + width * i as f64,
                hi: lo + width * (i + 1) as f64,
                count,
            })
            .collect();
    }
    FidelityDistribution { mean, std, se_1sigma, se_3sigma: 3.0 * se_1sigma, histogram }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mitigate::CtmpMitigator;
    use crate::noise::{GeneratorTerm, SynthRanges};
    use approx::assert_relative_eq;

    #[test]
    fn hoeffding_budget_reference_point() {
        assert_eq!(hoeffding_shots(0.01, 0.003, 1.0), 130_046);
        // Doubling the overhead quadruples the requirement (up to ceil).
        let n1 = hoeffding_shots(0.02, 0.01, 3.0);
        let n2 = hoeffding_shots(0.02, 0.01, 6.0);
        assert!(n2 >= 4 * (n1 - 1) && n2 <= 4 * n1);
        let plan = WitnessPlan::from_error_budget(0.01, 0.003, 1.0, 3000);
        assert_eq!(plan.shots_per_setting, 130);
        assert!(plan.n_total() >= 130_046);
        let eps = hoeffding_epsilon(130_046, 0.003, 1.0);
        assert!(eps <= 0.01 && eps > 0.0099);
    }

    #[test]
    fn explicit_plan_carries_shot_totals() {
        let plan = WitnessPlan::explicit(3490, 3000, 1, 0.003, 1.0);
        assert_eq!(plan.n_total(), 10_470_000);
        assert!(plan.epsilon < 0.01);
    }

    #[test]
    fn noiseless_campaign_is_exact() {
        let graph = GraphSpec::chain(6);
        let truth = ReadoutNoiseModel::noiseless(6);
        let plan = WitnessPlan::explicit(40, 64, 1, 0.003, 1.0);
        let out = run_witness(
            &graph,
            &truth,
            NoiseChannel::Tp,
            &MitigationSpec::Raw,
            &plan,
            7,
        )
        .unwrap();
        assert_eq!(out.estimate.value, 1.0);
        assert_eq!(out.estimate.empirical_std_error, 0.0);
        assert!(out.verdict.genuine);
        for s in &out.setting_estimates {
            assert_eq!(s.mean, 1.0);
        }
    }

    #[test]
    fn tp_mitigation_restores_unit_fidelity() {
        let graph = GraphSpec::chain(5);
        let truth = ReadoutNoiseModel::synth_device(
            5,
            3,
            &SynthRanges { eps: (0.02, 0.06), eta: (0.03, 0.08), ..SynthRanges::default() },
        )
        .unwrap();
        let plan = WitnessPlan::explicit(60, 2000, 1, 0.003, 1.3);
        let raw = run_witness(
            &graph,
            &truth,
            NoiseChannel::Tp,
            &MitigationSpec::Raw,
            &plan,
            11,
        )
        .unwrap();
        assert!(raw.estimate.value < 0.9, "raw value {}", raw.estimate.value);

        let mitigated = run_witness(
            &graph,
            &truth,
            NoiseChannel::Tp,
            &MitigationSpec::Tp { rates: truth.tp_rates() },
            &plan,
            11,
        )
        .unwrap();
        let tol = 5.0 * mitigated.estimate.empirical_std_error.max(1e-4);
        assert!(
            (mitigated.estimate.value - 1.0).abs() < tol,
            "value {} tol {}",
            mitigated.estimate.value,
            tol
        );
    }

    #[test]
    fn ctmp_mitigation_restores_unit_fidelity_under_correlated_noise() {
        let graph = GraphSpec::chain(4);
        let truth = ReadoutNoiseModel::from_parts(
            4,
            vec![TpRates { eps: 0.02, eta: 0.04 }; 4],
            vec![
                GeneratorTerm::Pair { j: 1, k: 2, from: (0, 0), rate: 0.09 },
                GeneratorTerm::Pair { j: 1, k: 2, from: (1, 1), rate: 0.05 },
            ],
            None,
        )
        .unwrap();
        let mitigator = CtmpMitigator::new(truth.build_rate_set().unwrap(), 0);
        assert!(mitigator.gamma_exact());
        let plan = WitnessPlan::explicit(50, 2000, 2, 0.003, mitigator.overhead());
        let out = run_witness(
            &graph,
            &truth,
            NoiseChannel::Ctmp,
            &MitigationSpec::Ctmp { mitigator: &mitigator },
            &plan,
            13,
        )
        .unwrap();
        let tol = 5.0 * out.estimate.empirical_std_error.max(1e-4);
        assert!((out.estimate.value - 1.0).abs() < tol, "value {}", out.estimate.value);
    }

    #[test]
    fn campaign_is_deterministic_in_seed() {
        let graph = GraphSpec::grid_sparse(2, 3);
        let truth = ReadoutNoiseModel::synth_device(6, 5, &SynthRanges::default()).unwrap();
        let plan = WitnessPlan::explicit(12, 40, 1, 0.01, 1.2);
        let run = || {
            run_witness(
                &graph,
                &truth,
                NoiseChannel::Tp,
                &MitigationSpec::Tp { rates: truth.tp_rates() },
                &plan,
                99,
            )
            .unwrap()
        };
        let a = run();
        let b = run();
        assert_eq!(a.estimate.value.to_bits(), b.estimate.value.to_bits());
        for (x, y) in a.setting_estimates.iter().zip(&b.setting_estimates) {
            assert_eq!(x.subset, y.subset);
            assert_eq!(x.mean.to_bits(), y.mean.to_bits());
        }
    }

    #[test]
    fn fidelity_distribution_standard_errors() {
        let means = vec![0.9, 1.0, 0.95, 0.85, 1.0, 0.92];
        let d = circuit_fidelity_distribution(&means, 4);
        let (m, s) = crate::numeric::mean_std(&means);
        assert_relative_eq!(d.mean, m);
        assert_relative_eq!(d.se_1sigma, s / 6f64.sqrt());
        assert_relative_eq!(d.se_3sigma, 3.0 * d.se_1sigma);
        assert_eq!(d.histogram.iter().map(|b| b.count).sum::<usize>(), 6);
    }

    #[test]
    fn verdict_margins() {
        let v = genuine_entanglement_verdict(0.87, 0.01);
        assert!(v.genuine);
        assert_relative_eq!(v.margin, 0.36);
        let v = genuine_entanglement_verdict(0.505, 0.01);
        assert!(!v.genuine);
    }
}
