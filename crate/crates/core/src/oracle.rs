//! Dense statevector oracles.
//!
//! Everything here recomputes, by brute force on full `2^n` amplitude
//! vectors, quantities the production paths obtain structurally (tableau
//! sampling, sliding-window simulation, closed-form mitigation). The
//! oracles exist to be compared against: cluster-setting distributions,
//! wire outcome distributions, feedforward-corrected teleportation
//! fidelity, textbook one-way patterns, and channel inverses applied as
//! explicit matrices.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::bits::BitString;
use crate::error::{Error, Result};
use crate::graph::GraphSpec;
use crate::pauli::{Basis, PauliString};
use crate::rng;
use crate::teleport::{
    build_wire_program, correction_parity, Gate1, TeleportConfig, WireOp, WireProgram,
};

const MAX_DENSE_QUBITS: usize = 14;

/// Full statevector on `n` qubits, amplitudes indexed little-endian
/// (qubit `q` is bit `q` of the index).
#[derive(Clone, Debug)]
pub struct DenseState {
    n: usize,
    amps: Vec<Complex64>,
}

impl DenseState {
    pub fn zero_state(n: usize) -> Result<Self> {
        if n > MAX_DENSE_QUBITS {
            return Err(Error::SizeOverflow(format!("dense statevector on {n} qubits")));
        }
        let mut amps = vec![Complex64::new(0.0, 0.0); 1 << n];
        amps[0] = Complex64::new(1.0, 0.0);
        Ok(Self { n, amps })
    }

    pub fn all_plus(n: usize) -> Result<Self> {
        if n > MAX_DENSE_QUBITS {
            return Err(Error::SizeOverflow(format!("dense statevector on {n} qubits")));
        }
        let a = Complex64::new(0.5f64.powf(n as f64 / 2.0), 0.0);
        Ok(Self { n, amps: vec![a; 1 << n] })
    }

    /// Product state from per-qubit amplitude pairs (factor `q` = qubit `q`).
    pub fn product(factors: &[[Complex64; 2]]) -> Result<Self> {
        let n = factors.len();
        if n > MAX_DENSE_QUBITS {
            return Err(Error::SizeOverflow(format!("dense statevector on {n} qubits")));
        }
        let mut amps = vec![Complex64::new(1.0, 0.0); 1 << n];
        for (idx, amp) in amps.iter_mut().enumerate() {
            for (q, f) in factors.iter().enumerate() {
                *amp *= f[(idx >> q) & 1];
            }
        }
        Ok(Self { n, amps })
    }

    pub fn from_amplitudes(amps: Vec<Complex64>) -> Result<Self> {
        if !amps.len().is_power_of_two() {
            return Err(Error::DimensionMismatch("amplitude count not a power of two".into()));
        }
        let n = amps.len().trailing_zeros() as usize;
        let norm: f64 = amps.iter().map(|a| a.norm_sqr()).sum();
        if (norm - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidInput(format!("state norm^2 = {norm}")));
        }
        Ok(Self { n, amps })
    }

    /// Cluster state of `graph`: all-plus, then one CZ per edge.
    pub fn cluster(graph: &GraphSpec) -> Result<Self> {
        graph.validate()?;
        let mut st = Self::all_plus(graph.n())?;
        for &(a, b) in graph.edges() {
            st.cz(a, b);
        }
        Ok(st)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn h(&mut self, q: usize) {
        let bit = 1usize << q;
        let s = std::f64::consts::FRAC_1_SQRT_2;
        for idx in 0..self.amps.len() {
            if idx & bit == 0 {
                let a0 = self.amps[idx];
                let a1 = self.amps[idx | bit];
                self.amps[idx] = (a0 + a1) * s;
                self.amps[idx | bit] = (a0 - a1) * s;
            }
        }
    }

    pub fn x(&mut self, q: usize) {
        let bit = 1usize << q;
        for idx in 0..self.amps.len() {
            if idx & bit == 0 {
                self.amps.swap(idx, idx | bit);
            }
        }
    }

    pub fn z(&mut self, q: usize) {
        let bit = 1usize << q;
        for (idx, amp) in self.amps.iter_mut().enumerate() {
            if idx & bit != 0 {
                *amp = -*amp;
            }
        }
    }

    pub fn s(&mut self, q: usize) {
        let bit = 1usize << q;
        let i = Complex64::new(0.0, 1.0);
        for (idx, amp) in self.amps.iter_mut().enumerate() {
            if idx & bit != 0 {
                *amp *= i;
            }
        }
    }

    pub fn sdg(&mut self, q: usize) {
        let bit = 1usize << q;
        let mi = Complex64::new(0.0, -1.0);
        for (idx, amp) in self.amps.iter_mut().enumerate() {
            if idx & bit != 0 {
                *amp *= mi;
            }
        }
    }

    pub fn cz(&mut self, a: usize, b: usize) {
        let mask = (1usize << a) | (1usize << b);
        for (idx, amp) in self.amps.iter_mut().enumerate() {
            if idx & mask == mask {
                *amp = -*amp;
            }
        }
    }

    pub fn gate1(&mut self, q: usize, gate: Gate1) {
        match gate {
            Gate1::H => self.h(q),
            Gate1::X => self.x(q),
            Gate1::Sdg => self.sdg(q),
        }
    }

    /// `e^{i theta P}` for a product Pauli on explicit qubits.
    pub fn pauli_exp(&mut self, theta: f64, paulis: &[(usize, Basis)]) {
        let mut xmask = 0usize;
        let mut zmask = 0usize;
        let mut ymask = 0usize;
        for &(q, basis) in paulis {
            let bit = 1usize << q;
            match basis {
                Basis::X => xmask |= bit,
                Basis::Z => zmask |= bit,
                Basis::Y => {
                    xmask |= bit;
                    ymask |= bit;
                }
                Basis::I => {}
            }
        }
        let i_pow = match ymask.count_ones() % 4 {
            0 => Complex64::new(1.0, 0.0),
            1 => Complex64::new(0.0, 1.0),
            2 => Complex64::new(-1.0, 0.0),
            _ => Complex64::new(0.0, -1.0),
        };
        let (c, s) = (theta.cos(), theta.sin());
        let is = Complex64::new(0.0, s);
        let mut out = vec![Complex64::new(0.0, 0.0); self.amps.len()];
        for (idx, &amp) in self.amps.iter().enumerate() {
            let sign = if (idx & (zmask | ymask)).count_ones() % 2 == 1 { -1.0 } else { 1.0 };
            out[idx ^ xmask] += i_pow * sign * amp;
        }
        for (idx, amp) in self.amps.iter_mut().enumerate() {
            *amp = c * *amp + is * out[idx];
        }
    }

    /// Apply a signed Pauli string as an operator.
    pub fn apply_pauli(&mut self, p: &PauliString) {
        let terms: Vec<(usize, Basis)> = (0..p.n())
            .map(|q| (q, p.basis_at(q)))
            .filter(|&(_, b)| b != Basis::I)
            .collect();
        // e^{i pi/2 P} = i P; undo the i and apply the string's own sign.
        self.pauli_exp(std::f64::consts::FRAC_PI_2, &terms);
        let phase = Complex64::new(0.0, -1.0) * f64::from(p.sign());
        for amp in self.amps.iter_mut() {
            *amp *= phase;
        }
    }

    pub fn inner(&self, other: &DenseState) -> Complex64 {
        self.amps.iter().zip(&other.amps).map(|(a, b)| a.conj() * b).sum()
    }

    pub fn expectation(&self, p: &PauliString) -> f64 {
        let mut applied = self.clone();
        applied.apply_pauli(p);
        self.inner(&applied).re
    }

    /// Rotate every qubit so its measurement basis becomes plain Z
    /// (X: H; Y: S-dagger then H).
    pub fn rotate_to_measurement(&mut self, bases: &[Basis]) {
        for (q, &b) in bases.iter().enumerate() {
            match b {
                Basis::I | Basis::Z => {}
                Basis::X => self.h(q),
                Basis::Y => {
                    self.sdg(q);
                    self.h(q);
                }
            }
        }
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.amps.iter().map(|a| a.norm_sqr()).collect()
    }

    /// X-measure `q` with fixed `outcome`; contract the qubit out (higher
    /// qubits shift down). Returns the branch probability; the surviving
    /// amplitudes are renormalized.
    pub fn contract_x(&mut self, q: usize, outcome: bool) -> f64 {
        self.h(q);
        self.contract_z(q, outcome)
    }

    /// Z-measure-and-remove version of [`Self::contract_x`].
    pub fn contract_z(&mut self, q: usize, outcome: bool) -> f64 {
        let bit = 1usize << q;
        let keep = if outcome { bit } else { 0 };
        let low_mask = bit - 1;
        let mut out = vec![Complex64::new(0.0, 0.0); self.amps.len() / 2];
        let mut p = 0.0;
        for (idx, &amp) in self.amps.iter().enumerate() {
            if idx & bit == keep {
                p += amp.norm_sqr();
                out[(idx & low_mask) | ((idx >> 1) & !low_mask)] = amp;
            }
        }
        if p > 0.0 {
            let norm = 1.0 / p.sqrt();
            for a in out.iter_mut() {
                *a *= norm;
            }
        }
        self.amps = out;
        self.n -= 1;
        p
    }
}

/// Total variation distance between two distributions on the same index set.
pub fn tvd(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()
}

/// Histogram of samples as a dense probability vector over `2^n` outcomes.
pub fn empirical_distribution<'a, I>(samples: I, n: usize) -> Vec<f64>
where
    I: IntoIterator<Item = &'a BitString>,
{
    let mut counts = vec![0u64; 1 << n];
    let mut total = 0u64;
    for s in samples {
        counts[s.as_index()] += 1;
        total += 1;
    }
    counts.iter().map(|&c| c as f64 / total.max(1) as f64).collect()
}

/// Exact Born distribution of measuring the cluster state of `graph` in the
/// given per-qubit bases, as a dense vector over little-endian outcomes.
pub fn cluster_setting_distribution(graph: &GraphSpec, bases: &[Basis]) -> Result<Vec<f64>> {
    if bases.len() != graph.n() {
        return Err(Error::DimensionMismatch("basis list width != graph width".into()));
    }
    let mut st = DenseState::cluster(graph)?;
    st.rotate_to_measurement(bases);
    Ok(st.probabilities())
}

/// Dense distribution vector from a tableau sampler's exact support.
pub fn sampler_distribution_dense(dist: &[(BitString, f64)], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; 1 << n];
    for (s, p) in dist {
        out[s.as_index()] += p;
    }
    out
}

/// Run the wire program on a full statevector, measurements deferred
/// (retired qubits are never touched again, so this is exact), and return
/// the distribution over `n+1`-bit records.
pub fn dense_wire_distribution(program: &WireProgram) -> Result<Vec<f64>> {
    let mut factors = vec![
        [
            Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0),
            Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0),
        ];
        program.record_len()
    ];
    factors[0] = program.input.amplitudes();
    let mut st = DenseState::product(&factors)?;
    for op in &program.ops {
        match op {
            WireOp::Activate(_) => {}
            WireOp::Cz(a, b) => st.cz(*a, *b),
            WireOp::PauliExp { theta, paulis } => st.pauli_exp(*theta, paulis),
            WireOp::MeasureX(_) | WireOp::MeasureFinal(_) => {}
        }
    }
    for q in 0..program.n {
        st.h(q);
    }
    for &g in &program.final_gates {
        st.gate1(program.n, g);
    }
    Ok(st.probabilities())
}

/// Teleportation fidelity scored the explicit way: for every X-outcome
/// branch, physically undo the byproduct and the wire rotation on the
/// output qubit, then take the input-stabilizer expectation. Must agree
/// with the postselection-free in-place scoring for any perturbation.
pub fn feedforward_fidelity(cfg: &TeleportConfig) -> Result<f64> {
    let program = build_wire_program(cfg)?;
    let n = program.n;
    let mut factors = vec![
        [
            Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0),
            Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0),
        ];
        n + 1
    ];
    factors[0] = cfg.input.amplitudes();
    let mut base = DenseState::product(&factors)?;
    for op in &program.ops {
        match op {
            WireOp::Cz(a, b) => base.cz(*a, *b),
            WireOp::PauliExp { theta, paulis } => base.pauli_exp(*theta, paulis),
            _ => {}
        }
    }
    let psi_in = cfg.input.amplitudes();
    let psi_perp = [-psi_in[1].conj(), psi_in[0].conj()];

    let mut fidelity = 0.0;
    for m in 0usize..(1 << n) {
        let mut st = base.clone();
        let mut weight = 1.0;
        for q in (0..n).rev() {
            weight *= st.contract_x(q, (m >> q) & 1 == 1);
            if weight < 1e-18 {
                break;
            }
        }
        if weight < 1e-18 {
            continue;
        }
        let mut record = BitString::zeros(n + 1);
        for q in 0..n {
            if (m >> q) & 1 == 1 {
                record.set(q, true);
            }
        }
        let (x_pow, z_pow) = correction_parity(&record, n);
        // Byproduct on the output qubit: Z^z X^x for even chains; the
        // trailing odd Hadamard swaps the roles.
        let (bx, bz) = if n % 2 == 0 { (x_pow, z_pow) } else { (z_pow, x_pow) };
        // st now holds the single output qubit: undo byproduct then rotation.
        if bz {
            st.z(0);
        }
        if bx {
            st.x(0);
        }
        if n % 2 == 1 {
            st.h(0);
        }
        let amps = st.amplitudes();
        let overlap = psi_in[0].conj() * amps[0] + psi_in[1].conj() * amps[1];
        let overlap_perp = psi_perp[0].conj() * amps[0] + psi_perp[1].conj() * amps[1];
        fidelity += weight * (overlap.norm_sqr() - overlap_perp.norm_sqr());
    }
    Ok(fidelity)
}

/// Apply an exact channel inverse as a dense linear solve: the mitigated
/// expectation `o^T Lambda^{-1} d` for observable values `o` and an
/// empirical distribution `d`.
pub fn mitigate_via_dense_inverse(
    lambda: &DMatrix<f64>,
    distribution: &[f64],
    observable: &[f64],
) -> Result<f64> {
    if lambda.nrows() != distribution.len() || lambda.nrows() != observable.len() {
        return Err(Error::DimensionMismatch("channel/distribution/observable sizes".into()));
    }
    let d = DVector::from_column_slice(distribution);
    let solved = lambda
        .clone()
        .lu()
        .solve(&d)
        .ok_or_else(|| Error::SingularChannel(0.0))?;
    Ok(observable.iter().zip(solved.iter()).map(|(o, p)| o * p).sum())
}

fn random_qubit_state<R: Rng>(rng: &mut R) -> [Complex64; 2] {
    let mut v = [Complex64::new(0.0, 0.0); 2];
    loop {
        let mut norm = 0.0;
        for a in v.iter_mut() {
            *a = Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal));
            norm += a.norm_sqr();
        }
        if norm > 1e-6 {
            let s = 1.0 / norm.sqrt();
            for a in v.iter_mut() {
                *a *= s;
            }
            return v;
        }
    }
}

fn random_two_qubit_state<R: Rng>(rng: &mut R) -> Vec<Complex64> {
    loop {
        let mut v: Vec<Complex64> = (0..4)
            .map(|_| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
            .collect();
        let norm: f64 = v.iter().map(|a| a.norm_sqr()).sum();
        if norm > 1e-6 {
            let s = 1.0 / norm.sqrt();
            for a in v.iter_mut() {
                *a *= s;
            }
            return v;
        }
    }
}

/// Deviation of the elementary one-way step from `X^m H` on random inputs:
/// input + one `|+>` qubit, CZ, X-measure the input. Returns the largest
/// `|1 - |<target|out>||` over branches and trials.
pub fn verify_hadamard_step(trials: usize, seed: u64) -> Result<f64> {
    let mut rng = rng::master(seed);
    let mut worst: f64 = 0.0;
    let plus = [
        Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0),
        Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0),
    ];
    for _ in 0..trials {
        let psi = random_qubit_state(&mut rng);
        for outcome in [false, true] {
            let mut st = DenseState::product(&[psi, plus])?;
            st.cz(0, 1);
            let p = st.contract_x(0, outcome);
            if p < 1e-12 {
                continue;
            }
            let mut target = DenseState::product(&[psi])?;
            target.h(0);
            if outcome {
                target.x(0);
            }
            worst = worst.max((1.0 - st.inner(&target).norm()).abs());
        }
    }
    Ok(worst)
}

/// Deviation of the length-2 wire from `X^{m1} Z^{m0}` over all branches.
pub fn verify_identity_wire(trials: usize, seed: u64) -> Result<f64> {
    let mut rng = rng::master(seed);
    let plus = [
        Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0),
        Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0),
    ];
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let psi = random_qubit_state(&mut rng);
        for m in 0usize..4 {
            let (m0, m1) = (m & 1 == 1, m & 2 == 2);
            let mut st = DenseState::product(&[psi, plus, plus])?;
            st.cz(0, 1);
            st.cz(1, 2);
            let p0 = st.contract_x(1, m1); // qubit 1 first: labels 0, 2->1 remain
            let p1 = st.contract_x(0, m0);
            if p0 * p1 < 1e-12 {
                continue;
            }
            let mut target = DenseState::product(&[psi])?;
            if m0 {
                target.z(0);
            }
            if m1 {
                target.x(0);
            }
            worst = worst.max((1.0 - st.inner(&target).norm()).abs());
        }
    }
    Ok(worst)
}

/// Deviation of the four-qubit one-way CNOT pattern (edges 2-3, 1-3, 3-4 in
/// 1-indexed labels; qubits 2 and 3 X-measured) from
/// `Z_c^{s2} X_t^{s3} Z_t^{s2} CNOT` on random two-qubit inputs.
pub fn verify_cnot_pattern(trials: usize, seed: u64) -> Result<f64> {
    let mut rng = rng::master(seed);
    let s = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let psi = random_two_qubit_state(&mut rng); // control = bit 0, target = bit 1
        // Wire qubits (0-indexed): 0 = control in/out, 1 = target in,
        // 2 = ancilla, 3 = target out.
        let mut amps = vec![Complex64::new(0.0, 0.0); 16];
        for idx in 0..16usize {
            let which = (idx & 1) | ((idx >> 1) & 1) << 1;
            amps[idx] = psi[which] * s * s;
        }
        let mut st = DenseState::from_amplitudes(amps)?;
        st.cz(1, 2);
        st.cz(0, 2);
        st.cz(2, 3);
        for m in 0usize..4 {
            let (m1, m2) = (m & 1 == 1, m & 2 == 2);
            let mut branch = st.clone();
            let pa = branch.contract_x(2, m2);
            let pb = branch.contract_x(1, m1);
            if pa * pb < 1e-12 {
                continue;
            }
            // branch now holds (control, target out) as qubits (0, 1).
            let mut target_amps = vec![Complex64::new(0.0, 0.0); 4];
            for c in 0..2usize {
                for t in 0..2usize {
                    // CNOT with control bit 0: t -> t ^ c.
                    target_amps[c | ((t ^ c) << 1)] += psi[c | (t << 1)];
                }
            }
            let mut target = DenseState::from_amplitudes(target_amps)?;
            if m1 {
                target.z(0); // Z on control per s2
                target.z(1); // Z on target out per s2
            }
            if m2 {
                target.x(1); // X on target out per s3
            }
            worst = worst.max((1.0 - branch.inner(&target).norm()).abs());
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::{GeneratorTerm, ReadoutNoiseModel, SynthRanges, TpRates};
    use crate::tableau::{sample_witness_setting, SettingSampler, StabilizerTableau};
    use crate::teleport::{
        enumerate_wire, exact_postfree_fidelity, parallel_groups, InputState, Perturbation,
        PerturbationKind,
    };
    use approx::assert_relative_eq;
    use rand::Rng;

    #[test]
    fn cluster_state_satisfies_stabilizers() {
        for graph in [GraphSpec::chain(5), GraphSpec::grid_sparse(2, 3)] {
            let st = DenseState::cluster(&graph).unwrap();
            for v in 0..graph.n() {
                let s = graph.stabilizer_of_vertex(v).unwrap();
                assert_relative_eq!(st.expectation(&s), 1.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn setting_distribution_matches_tableau_sampler() {
        let mut rng = rng::master(21);
        for graph in [GraphSpec::chain(6), GraphSpec::grid_full(2, 3), GraphSpec::grid_sparse(3, 3)]
        {
            let tableau = StabilizerTableau::cluster(&graph).unwrap();
            for _ in 0..12 {
                let setting = sample_witness_setting(&tableau, &mut rng).unwrap();
                let sampler = SettingSampler::compile(&tableau, &setting.per_qubit_basis).unwrap();
                let exact = sampler.exact_distribution().unwrap();
                let a = sampler_distribution_dense(&exact, graph.n());
                let b = cluster_setting_distribution(&graph, &setting.per_qubit_basis).unwrap();
                assert!(tvd(&a, &b) < 1e-10, "setting {}", setting.pauli.label());
            }
        }
    }

    #[test]
    fn wire_distribution_matches_window_enumeration() {
        let mut rng = rng::master(31);
        for n in [2usize, 5, 8] {
            for input in [InputState::Zero, InputState::Minus, InputState::PlusI] {
                let mut cfg = TeleportConfig::new(n, input);
                if n == 8 {
                    // A random perturbation exercises the deferral path.
                    cfg = cfg.with_perturbations(vec![Perturbation {
                        kind: PerturbationKind::BreakEven,
                        alpha: rng.gen_range(0.0..std::f64::consts::PI),
                        beta: rng.gen_range(0.0..std::f64::consts::PI),
                        anchor: 1 + rng.gen_range(0..2) * 4,
                    }]);
                }
                let program = build_wire_program(&cfg).unwrap();
                let windowed = enumerate_wire(&program);
                let a = sampler_distribution_dense(&windowed, program.record_len());
                let b = dense_wire_distribution(&program).unwrap();
                assert!(tvd(&a, &b) < 1e-10, "n={n} input={}", input.label());
            }
        }
    }

    #[test]
    fn postfree_equals_feedforward_on_enumeration() {
        for n in [2usize, 3, 5, 6] {
            for input in InputState::ALL {
                let mut cfg = TeleportConfig::new(n, input);
                if n >= 3 {
                    cfg = cfg.with_perturbations(parallel_groups(
                        1,
                        PerturbationKind::BreakOdd,
                        0.83,
                        0.37,
                    ));
                }
                let post = exact_postfree_fidelity(&cfg).unwrap();
                let ff = feedforward_fidelity(&cfg).unwrap();
                assert!(
                    (post - ff).abs() < 1e-12,
                    "n={n} input={} post={post} ff={ff}",
                    input.label()
                );
            }
        }
    }

    #[test]
    fn one_way_patterns_reproduce_textbook_forms() {
        assert!(verify_hadamard_step(20, 5).unwrap() < 1e-10);
        assert!(verify_identity_wire(20, 6).unwrap() < 1e-10);
        assert!(verify_cnot_pattern(20, 7).unwrap() < 1e-10);
    }

    #[test]
    fn dense_inverse_recovers_tp_noisy_parity() {
        let n = 3;
        let model = ReadoutNoiseModel::synth_device(
            n,
            9,
            &SynthRanges { eps: (0.05, 0.1), eta: (0.02, 0.08), ..Default::default() },
        )
        .unwrap();
        let lambda = model.tp_lambda_dense().unwrap();
        // Noiseless distribution: even-parity strings of a GHZ-like parity
        // observable; simplest: point mass on 000.
        let mut noiseless = vec![0.0; 1 << n];
        noiseless[0] = 1.0;
        let noisy_vec = &lambda * DVector::from_column_slice(&noiseless);
        let noisy: Vec<f64> = noisy_vec.iter().cloned().collect();
        let obs: Vec<f64> =
            (0..1 << n).map(|i: usize| if i.count_ones() % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let raw: f64 = obs.iter().zip(&noisy).map(|(o, p)| o * p).sum();
        assert!(raw < 0.95);
        let fixed = mitigate_via_dense_inverse(&lambda, &noisy, &obs).unwrap();
        assert_relative_eq!(fixed, 1.0, epsilon = 1e-10);
    }

    #[test]
    fn gillespie_matches_generator_exponential() {
        let n = 3;
        let model = ReadoutNoiseModel::from_parts(
            n,
            vec![TpRates { eps: 0.06, eta: 0.03 }; n],
            vec![
                GeneratorTerm::Pair { j: 0, k: 2, from: (0, 0), rate: 0.15 },
                GeneratorTerm::Pair { j: 0, k: 2, from: (1, 1), rate: 0.08 },
            ],
            None,
        )
        .unwrap();
        let rates = model.build_rate_set().unwrap();
        let lambda = model.exact_lambda().unwrap();
        let mut rng = rng::master(40);
        let shots = 200_000;
        let mut counts = vec![0u64; 1 << n];
        let start = BitString::from_index(n, 0b101);
        for _ in 0..shots {
            let mut b = start.clone();
            rates.gillespie(&mut b, &mut rng);
            counts[b.as_index()] += 1;
        }
        let empirical: Vec<f64> = counts.iter().map(|&c| c as f64 / shots as f64).collect();
        let exact: Vec<f64> = (0..1 << n).map(|r| lambda[(r, 0b101)]).collect();
        assert!(tvd(&empirical, &exact) < 5e-3);
    }

    #[test]
    fn ctmp_walk_agrees_with_dense_inverse() {
        use crate::mitigate::CtmpMitigator;
        let n = 3;
        let model = ReadoutNoiseModel::from_parts(
            n,
            vec![TpRates { eps: 0.04, eta: 0.02 }; n],
            vec![GeneratorTerm::Pair { j: 0, k: 1, from: (0, 0), rate: 0.1 }],
            None,
        )
        .unwrap();
        let rates = model.build_rate_set().unwrap();
        let lambda = model.exact_lambda().unwrap();
        let mitigator = CtmpMitigator::new(rates.clone(), 0);
        let obs = |b: &BitString| if b.count_ones() % 2 == 0 { 1.0 } else { -1.0 };

        // Noisy ensemble: Gillespie samples out of a fixed ideal outcome.
        let ideal = BitString::from_index(n, 0b110);
        let mut rng = rng::master(55);
        let shots = 120_000;
        let mut walk_acc = 0.0;
        let mut counts = vec![0u64; 1 << n];
        for _ in 0..shots {
            let mut b = ideal.clone();
            rates.gillespie(&mut b, &mut rng);
            counts[b.as_index()] += 1;
            let (v, _) = mitigator.shot_value(&b, 2, obs, &mut rng).unwrap();
            walk_acc += v;
        }
        let walk = walk_acc / shots as f64;
        let empirical: Vec<f64> = counts.iter().map(|&c| c as f64 / shots as f64).collect();
        let obs_vec: Vec<f64> = (0..1usize << n)
            .map(|i| if (i.count_ones() as usize) % 2 == 0 { 1.0 } else { -1.0 })
            .collect();
        let dense = mitigate_via_dense_inverse(&lambda, &empirical, &obs_vec).unwrap();
        assert!(
            (walk - dense).abs() < 1.5e-2,
            "walk {walk} dense {dense} (ideal parity {})",
            obs(&ideal)
        );
    }

    #[test]
    fn contract_is_a_proper_projection() {
        let mut rng = rng::master(70);
        let psi = random_qubit_state(&mut rng);
        let phi = random_qubit_state(&mut rng);
        let mut st = DenseState::product(&[psi, phi]).unwrap();
        // Z-measuring qubit 0 of a product state leaves qubit 1 intact.
        let p = st.contract_z(0, false);
        assert_relative_eq!(p, psi[0].norm_sqr(), epsilon = 1e-12);
        let target = DenseState::product(&[phi]).unwrap();
        assert_relative_eq!(st.inner(&target).norm(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn pauli_application_matches_expectation_conventions() {
        let g = GraphSpec::chain(3);
        let st = DenseState::cluster(&g).unwrap();
        // -YXY is the product of all three chain stabilizers.
        let t = StabilizerTableau::cluster(&g).unwrap();
        let all = BitString::from_bools(&[true, true, true]);
        let setting = crate::tableau::WitnessSetting::from_subset(&t, all).unwrap();
        assert_relative_eq!(st.expectation(&setting.pauli), 1.0, epsilon = 1e-12);
    }
}
