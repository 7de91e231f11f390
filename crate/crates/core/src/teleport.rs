//! Measurement-based teleportation along a 1D cluster-state wire, with
//! symmetry-checking perturbations and a postselection-free fidelity
//! estimator.
//!
//! The wire holds the input state on qubit 0 and chain qubits `1..=n`
//! prepared in `|+>` and entangled by CZ along the chain. Qubits
//! `0..n-1` are measured in the X basis; the last qubit is measured in
//! the input-rotated basis (`C_in` for even `n`, `H C_in` for odd `n`).
//! Instead of feeding the byproduct correction forward, each shot is
//! scored in place:
//!
//! ```text
//! F_shot = (-1)^(a + i),   a = [P_in vs Z]*z_pow XOR [P_in vs X]*x_pow
//! z_pow  = m_0 + sum of even-chain outcomes,   x_pow = sum of odd-chain outcomes
//! ```
//!
//! which factorizes into a parity over a fixed support set, so TP readout
//! mitigation applies factor-by-factor.
//!
//! Perturbations insert `U = e^{i beta Z X Z} e^{i alpha P}` on a 3-qubit
//! window once the window and its right neighbor are entangled (the alpha
//! factor acts first). Simulation is exact Born-rule sampling on a sliding
//! statevector window: qubits activate just before their CZ and retire at
//! measurement, so cost is `O(n * 2^w)` per shot.

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bits::BitString;
use crate::error::{Error, Result};
use crate::mitigate::{
    tp_inverse_factor, tp_support_overhead, Method, MitigatedEstimate,
};
use crate::noise::{NoiseChannel, RateSet, ReadoutNoiseModel, TpRates};
use crate::numeric;
use crate::pauli::Basis;
use crate::rng;

/// The six single-qubit stabilizer states usable as teleportation inputs.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub enum InputState {
    Zero,
    One,
    Plus,
    Minus,
    PlusI,
    MinusI,
}

impl InputState {
    pub const ALL: [InputState; 6] = [
        InputState::Zero,
        InputState::One,
        InputState::Plus,
        InputState::Minus,
        InputState::PlusI,
        InputState::MinusI,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            InputState::Zero => "0",
            InputState::One => "1",
            InputState::Plus => "+",
            InputState::Minus => "-",
            InputState::PlusI => "+i",
            InputState::MinusI => "-i",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "0" | "zero" => Ok(InputState::Zero),
            "1" | "one" => Ok(InputState::One),
            "+" | "plus" => Ok(InputState::Plus),
            "-" | "minus" => Ok(InputState::Minus),
            "+i" | "plus_i" => Ok(InputState::PlusI),
            "-i" | "minus_i" => Ok(InputState::MinusI),
            other => Err(Error::InvalidInput(format!("unknown input state {other:?}"))),
        }
    }

    pub fn amplitudes(&self) -> [Complex64; 2] {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let r = |x: f64| Complex64::new(x, 0.0);
        let i = |x: f64| Complex64::new(0.0, x);
        match self {
            InputState::Zero => [r(1.0), r(0.0)],
            InputState::One => [r(0.0), r(1.0)],
            InputState::Plus => [r(s), r(s)],
            InputState::Minus => [r(s), r(-s)],
            InputState::PlusI => [r(s), i(s)],
            InputState::MinusI => [r(s), i(-s)],
        }
    }

    /// Whether the input's stabilizer Pauli anticommutes with Z — i.e. the
    /// byproduct's `z_pow` flips the shot sign.
    pub fn sensitive_to_z(&self) -> bool {
        matches!(self, InputState::Plus | InputState::Minus | InputState::PlusI | InputState::MinusI)
    }

    /// Whether the input's stabilizer Pauli anticommutes with X — i.e. the
    /// byproduct's `x_pow` flips the shot sign.
    pub fn sensitive_to_x(&self) -> bool {
        matches!(self, InputState::Zero | InputState::One | InputState::PlusI | InputState::MinusI)
    }

    /// `C_in^dagger` as elementary gates in application order.
    fn basis_undo_gates(&self) -> &'static [Gate1] {
        match self {
            InputState::Zero => &[],
            InputState::One => &[Gate1::X],
            InputState::Plus => &[Gate1::H],
            InputState::Minus => &[Gate1::H, Gate1::X],
            InputState::PlusI => &[Gate1::Sdg, Gate1::H],
            InputState::MinusI => &[Gate1::Sdg, Gate1::H, Gate1::X],
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Gate1 {
    H,
    X,
    Sdg,
}

/// Which Pauli the tunable phase factor applies, relative to the window.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub enum PerturbationKind {
    /// `e^{i alpha X}` on the window's third qubit: commutes with the
    /// protecting symmetry, fidelity stays flat.
    Preserving,
    /// `e^{i alpha Y}` on the third qubit: breaks the odd-sublattice
    /// symmetry.
    BreakOdd,
    /// `e^{i alpha Y}` on the second qubit: breaks the even-sublattice
    /// symmetry.
    BreakEven,
}

impl PerturbationKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "s" | "preserving" => Ok(Self::Preserving),
            "sb_odd" | "break-odd" => Ok(Self::BreakOdd),
            "sb_even" | "break-even" => Ok(Self::BreakEven),
            other => Err(Error::InvalidInput(format!("unknown perturbation kind {other:?}"))),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Self::Preserving => "s",
            Self::BreakOdd => "sb_odd",
            Self::BreakEven => "sb_even",
        }
    }

    /// `(window offset, Pauli)` of the alpha factor.
    fn alpha_pauli(&self) -> (usize, Basis) {
        match self {
            Self::Preserving => (2, Basis::X),
            Self::BreakOdd => (2, Basis::Y),
            Self::BreakEven => (1, Basis::Y),
        }
    }
}

/// One inserted unitary `e^{i beta Z X Z} e^{i alpha P}` on the 3-qubit
/// window starting at `anchor`.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct Perturbation {
    pub kind: PerturbationKind,
    pub alpha: f64,
    pub beta: f64,
    /// First chain qubit of the window (window = anchor..anchor+2).
    pub anchor: usize,
}

/// The parallel layout: `k` identical windows anchored at `1 + 4g`, one
/// spare qubit between consecutive windows.
pub fn parallel_groups(k: usize, kind: PerturbationKind, alpha: f64, beta: f64) -> Vec<Perturbation> {
    (0..k).map(|g| Perturbation { kind, alpha, beta, anchor: 1 + 4 * g }).collect()
}

#[derive(Clone, Debug)]
pub struct TeleportConfig {
    /// Chain length (resource qubits, excluding the input qubit).
    pub n: usize,
    pub input: InputState,
    pub perturbations: Vec<Perturbation>,
    /// Sliding-window capacity in qubits (`2^cap` amplitudes held).
    pub window_cap: usize,
}

impl TeleportConfig {
    pub fn new(n: usize, input: InputState) -> Self {
        Self { n, input, perturbations: Vec::new(), window_cap: 6 }
    }

    pub fn with_perturbations(mut self, perturbations: Vec<Perturbation>) -> Self {
        self.perturbations = perturbations;
        self
    }
}

/// One scheduled operation of the wire program. Qubit ids are wire
/// positions: 0 = input, `1..=n` = chain.
#[derive(Clone, Debug)]
pub enum WireOp {
    /// Bring a fresh qubit into the window (`|+>`, or the input state for
    /// qubit 0).
    Activate(usize),
    Cz(usize, usize),
    /// `e^{i theta P}` over window-resident qubits.
    PauliExp { theta: f64, paulis: Vec<(usize, Basis)> },
    MeasureX(usize),
    /// Rotate by the final-basis inverse and measure Z.
    MeasureFinal(usize),
}

#[derive(Clone, Debug)]
pub struct WireProgram {
    pub n: usize,
    pub input: InputState,
    pub ops: Vec<WireOp>,
    /// Gates undoing the final measurement basis, in application order.
    pub final_gates: Vec<Gate1>,
    pub final_basis_label: String,
    /// Peak number of simultaneously active qubits.
    pub window_needed: usize,
}

impl WireProgram {
    /// Total recorded bits per shot.
    pub fn record_len(&self) -> usize {
        self.n + 1
    }
}

/// Schedule the wire: activations and CZs left to right, X measurements as
/// early as possible, perturbation windows held open until their unitary
/// has been applied (which happens once the window plus its right
/// neighbor are entangled).
pub fn build_wire_program(cfg: &TeleportConfig) -> Result<WireProgram> {
    let n = cfg.n;
    if n < 1 {
        return Err(Error::InvalidInput("chain length must be at least 1".into()));
    }
    let mut perts: Vec<Perturbation> = cfg.perturbations.clone();
    perts.sort_by_key(|p| p.anchor);
    for p in &perts {
        if !(p.alpha.is_finite() && p.beta.is_finite()) {
            return Err(Error::InvalidInput("perturbation angles must be finite".into()));
        }
        if p.anchor < 1 || p.anchor + 2 > n {
            return Err(Error::InvalidInput(format!(
                "perturbation window {}..{} outside chain 1..{n}",
                p.anchor,
                p.anchor + 2
            )));
        }
    }
    for w in perts.windows(2) {
        if w[1].anchor < w[0].anchor + 4 {
            return Err(Error::InvalidInput(format!(
                "perturbation windows at {} and {} overlap (one spare qubit required between windows)",
                w[0].anchor, w[1].anchor
            )));
        }
    }
    // Window q..q+2 stays unmeasured until the edge into qubit
    // min(q+3, n) exists; map that trigger qubit to the perturbation.
    let mut trigger: std::collections::BTreeMap<usize, usize> = Default::default();
    for (i, p) in perts.iter().enumerate() {
        trigger.insert((p.anchor + 3).min(n), i);
    }
    let blocked_until = |q: usize| -> Option<usize> {
        perts
            .iter()
            .position(|p| q >= p.anchor && q <= p.anchor + 2)
            .map(|i| (perts[i].anchor + 3).min(n))
    };

    let mut ops = Vec::new();
    let mut active = 0usize;
    let mut peak = 0usize;
    let mut next_measure = 0usize;
    let activate = |ops: &mut Vec<WireOp>, active: &mut usize, peak: &mut usize, q: usize| {
        ops.push(WireOp::Activate(q));
        *active += 1;
        *peak = (*peak).max(*active);
    };

    activate(&mut ops, &mut active, &mut peak, 0);
    activate(&mut ops, &mut active, &mut peak, 1);
    ops.push(WireOp::Cz(0, 1));
    for q in 1..=n {
        if q >= 2 {
            activate(&mut ops, &mut active, &mut peak, q);
            ops.push(WireOp::Cz(q - 1, q));
        }
        if let Some(&pi) = trigger.get(&q) {
            let p = &perts[pi];
            let (off, basis) = p.kind.alpha_pauli();
            ops.push(WireOp::PauliExp { theta: p.alpha, paulis: vec![(p.anchor + off, basis)] });
            ops.push(WireOp::PauliExp {
                theta: p.beta,
                paulis: vec![
                    (p.anchor, Basis::Z),
                    (p.anchor + 1, Basis::X),
                    (p.anchor + 2, Basis::Z),
                ],
            });
        }
        // Retire every qubit whose edge exists and whose window (if any)
        // has been resolved.
        while next_measure < q && next_measure < n {
            if let Some(t) = blocked_until(next_measure) {
                if q < t {
                    break;
                }
            }
            ops.push(WireOp::MeasureX(next_measure));
            active -= 1;
            next_measure += 1;
        }
    }
    while next_measure < n {
        ops.push(WireOp::MeasureX(next_measure));
        next_measure += 1;
    }
    ops.push(WireOp::MeasureFinal(n));

    let mut final_gates = Vec::new();
    if n % 2 == 1 {
        final_gates.push(Gate1::H);
    }
    final_gates.extend_from_slice(cfg.input.basis_undo_gates());
    let final_basis_label = if n % 2 == 0 {
        format!("C[{}]", cfg.input.label())
    } else {
        format!("H*C[{}]", cfg.input.label())
    };
    if peak > cfg.window_cap {
        return Err(Error::WindowOverflow { needed: peak, cap: cfg.window_cap });
    }
    Ok(WireProgram {
        n,
        input: cfg.input,
        ops,
        final_gates,
        final_basis_label,
        window_needed: peak,
    })
}

/// Sliding-window statevector over the currently active wire qubits.
#[derive(Clone, Debug)]
pub struct WindowState {
    amps: Vec<Complex64>,
    scratch: Vec<Complex64>,
    /// `slots[s]` = wire qubit held in window bit `s`.
    slots: Vec<usize>,
    input: InputState,
}

impl WindowState {
    pub fn new(input: InputState) -> Self {
        Self {
            amps: vec![Complex64::new(1.0, 0.0)],
            scratch: Vec::new(),
            slots: Vec::new(),
            input,
        }
    }

    fn slot_of(&self, qubit: usize) -> usize {
        self.slots
            .iter()
            .position(|&q| q == qubit)
            .unwrap_or_else(|| panic!("qubit {qubit} not in window"))
    }

    fn activate(&mut self, qubit: usize) {
        let w = self.slots.len();
        let dim = self.amps.len();
        let pair: [Complex64; 2] = if qubit == 0 {
            self.input.amplitudes()
        } else {
            let s = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
            [s, s]
        };
        self.amps.resize(dim * 2, Complex64::new(0.0, 0.0));
        for idx in (0..dim).rev() {
            let a = self.amps[idx];
            self.amps[idx] = a * pair[0];
            self.amps[idx | (1 << w)] = a * pair[1];
        }
        self.slots.push(qubit);
    }

    fn apply_cz(&mut self, a: usize, b: usize) {
        let (sa, sb) = (self.slot_of(a), self.slot_of(b));
        let mask = (1usize << sa) | (1 << sb);
        for (idx, amp) in self.amps.iter_mut().enumerate() {
            if idx & mask == mask {
                *amp = -*amp;
            }
        }
    }

    fn apply_gate1(&mut self, slot: usize, gate: Gate1) {
        let bit = 1usize << slot;
        match gate {
            Gate1::X => {
                for idx in 0..self.amps.len() {
                    if idx & bit == 0 {
                        self.amps.swap(idx, idx | bit);
                    }
                }
            }
            Gate1::H => {
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
            Gate1::Sdg => {
                let phase = Complex64::new(0.0, -1.0);
                for idx in 0..self.amps.len() {
                    if idx & bit != 0 {
                        self.amps[idx] *= phase;
                    }
                }
            }
        }
    }

    /// `e^{i theta P} = cos(theta) I + i sin(theta) P`.
    fn apply_pauli_exp(&mut self, theta: f64, paulis: &[(usize, Basis)]) {
        let mut xmask = 0usize;
        let mut zmask = 0usize;
        let mut ymask = 0usize;
        for &(q, basis) in paulis {
            let bit = 1usize << self.slot_of(q);
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
        let (c, s) = (theta.cos(), theta.sin());
        let is = Complex64::new(0.0, s);
        self.scratch.clear();
        self.scratch.resize(self.amps.len(), Complex64::new(0.0, 0.0));
        // P|b>: each Y contributes i*(-1)^b, each Z contributes (-1)^b,
        // X bits flip; so the phase is i^(#Y) * (-1)^(set bits under Y|Z).
        let i_pow = match ymask.count_ones() % 4 {
            0 => Complex64::new(1.0, 0.0),
            1 => Complex64::new(0.0, 1.0),
            2 => Complex64::new(-1.0, 0.0),
            _ => Complex64::new(0.0, -1.0),
        };
        for (idx, &amp) in self.amps.iter().enumerate() {
            let sign = if (idx & (zmask | ymask)).count_ones() % 2 == 1 { -1.0 } else { 1.0 };
            self.scratch[idx ^ xmask] += i_pow * sign * amp;
        }
        for (idx, amp) in self.amps.iter_mut().enumerate() {
            *amp = c * *amp + is * self.scratch[idx];
        }
    }

    fn prob_one(&self, slot: usize) -> f64 {
        let bit = 1usize << slot;
        self.amps
            .iter()
            .enumerate()
            .filter(|(idx, _)| idx & bit != 0)
            .map(|(_, a)| a.norm_sqr())
            .sum()
    }

    /// Project `slot` onto `outcome`, renormalize, and retire the qubit.
    /// Returns the branch probability.
    fn project_and_drop(&mut self, qubit: usize, outcome: bool) -> f64 {
        let slot = self.slot_of(qubit);
        let bit = 1usize << slot;
        let keep = if outcome { bit } else { 0 };
        let p: f64 = self
            .amps
            .iter()
            .enumerate()
            .filter(|(idx, _)| idx & bit == keep)
            .map(|(_, a)| a.norm_sqr())
            .sum();
        let dim = self.amps.len() / 2;
        let norm = if p > 0.0 { 1.0 / p.sqrt() } else { 0.0 };
        let low_mask = bit - 1;
        self.scratch.clear();
        self.scratch.resize(dim, Complex64::new(0.0, 0.0));
        for idx in 0..self.amps.len() {
            if idx & bit == keep {
                let packed = (idx & low_mask) | ((idx >> 1) & !low_mask);
                self.scratch[packed] = self.amps[idx] * norm;
            }
        }
        std::mem::swap(&mut self.amps, &mut self.scratch);
        self.amps.truncate(dim);
        self.slots.remove(slot);
        p
    }

    fn measure_z<R: Rng>(&mut self, qubit: usize, rng: &mut R) -> bool {
        let slot = self.slot_of(qubit);
        let p1 = self.prob_one(slot);
        let outcome = rng.gen::<f64>() < p1;
        self.project_and_drop(qubit, outcome);
        outcome
    }
}

/// Run one shot of the program, returning the `n+1` recorded bits
/// (bit `q` = outcome of wire qubit `q`). Readout noise is NOT applied
/// here.
pub fn simulate_wire_shot<R: Rng>(program: &WireProgram, rng: &mut R) -> BitString {
    let mut state = WindowState::new(program.input);
    let mut record = BitString::zeros(program.record_len());
    for op in &program.ops {
        match op {
            WireOp::Activate(q) => state.activate(*q),
            WireOp::Cz(a, b) => state.apply_cz(*a, *b),
            WireOp::PauliExp { theta, paulis } => state.apply_pauli_exp(*theta, paulis),
            WireOp::MeasureX(q) => {
                let slot = state.slot_of(*q);
                state.apply_gate1(slot, Gate1::H);
                if state.measure_z(*q, rng) {
                    record.set(*q, true);
                }
            }
            WireOp::MeasureFinal(q) => {
                let slot = state.slot_of(*q);
                for &g in &program.final_gates {
                    state.apply_gate1(slot, g);
                }
                if state.measure_z(*q, rng) {
                    record.set(*q, true);
                }
            }
        }
    }
    record
}

/// Exact outcome-record distribution by branching every measurement.
/// Branches below `1e-15` probability are pruned.
pub fn enumerate_wire(program: &WireProgram) -> Vec<(BitString, f64)> {
    let mut results = Vec::new();
    let mut stack: Vec<(usize, WindowState, BitString, f64)> = vec![(
        0,
        WindowState::new(program.input),
        BitString::zeros(program.record_len()),
        1.0,
    )];
    while let Some((mut op_idx, mut state, record, mut weight)) = stack.pop() {
        loop {
            if op_idx == program.ops.len() {
                results.push((record, weight));
                break;
            }
            match &program.ops[op_idx] {
                WireOp::Activate(q) => state.activate(*q),
                WireOp::Cz(a, b) => state.apply_cz(*a, *b),
                WireOp::PauliExp { theta, paulis } => state.apply_pauli_exp(*theta, paulis),
                WireOp::MeasureX(q) | WireOp::MeasureFinal(q) => {
                    let slot = state.slot_of(*q);
                    match &program.ops[op_idx] {
                        WireOp::MeasureX(_) => state.apply_gate1(slot, Gate1::H),
                        _ => {
                            for &g in &program.final_gates {
                                state.apply_gate1(slot, g);
                            }
                        }
                    }
                    let p1 = state.prob_one(state.slot_of(*q));
                    // Push the outcome-1 branch; continue on outcome 0.
                    if p1 > 1e-15 {
                        let mut s1 = state.clone();
                        s1.project_and_drop(*q, true);
                        let mut r1 = record.clone();
                        r1.set(*q, true);
                        stack.push((op_idx + 1, s1, r1, weight * p1));
                    }
                    let p0 = 1.0 - p1;
                    if p0 <= 1e-15 {
                        break;
                    }
                    state.project_and_drop(*q, false);
                    weight *= p0;
                }
            }
            op_idx += 1;
        }
    }
    results
}

/// Byproduct powers implied by a shot record: `z_pow` from the input qubit
/// plus the even chain, `x_pow` from the odd chain.
pub fn correction_parity(record: &BitString, n: usize) -> (bool, bool) {
    let mut z_pow = record.get(0);
    let mut x_pow = false;
    for q in 1..n {
        if record.get(q) {
            if q % 2 == 0 {
                z_pow ^= true;
            } else {
                x_pow ^= true;
            }
        }
    }
    (x_pow, z_pow)
}

/// Recorded bits whose parity gives the one-shot fidelity: the final qubit,
/// plus the `z_pow` bits if the input is Z-sensitive and the `x_pow` bits
/// if X-sensitive.
pub fn fidelity_support(input: InputState, n: usize) -> Vec<usize> {
    let mut support = Vec::new();
    if input.sensitive_to_z() {
        support.push(0);
        support.extend((2..n).step_by(2));
    }
    if input.sensitive_to_x() {
        support.extend((1..n).step_by(2));
    }
    support.push(n);
    support.sort_unstable();
    support
}

/// One-shot fidelity `(-1)^(a+i)` as a parity over the support set.
pub fn shot_fidelity(record: &BitString, input: InputState, n: usize) -> f64 {
    let (x_pow, z_pow) = correction_parity(record, n);
    let a = (input.sensitive_to_z() && z_pow) ^ (input.sensitive_to_x() && x_pow);
    if a ^ record.get(n) {
        -1.0
    } else {
        1.0
    }
}

/// TP-mitigated one-shot fidelity: each support bit's `(-1)^b` replaced by
/// its inversion factor.
pub fn shot_fidelity_tp(
    record: &BitString,
    support: &[usize],
    rates: &[TpRates],
) -> Result<f64> {
    let mut acc = 1.0;
    for &q in support {
        acc *= tp_inverse_factor(&rates[q], record.get(q))?;
    }
    Ok(acc)
}

/// Exact noiseless postselection-free fidelity by full enumeration.
pub fn exact_postfree_fidelity(cfg: &TeleportConfig) -> Result<f64> {
    let program = build_wire_program(cfg)?;
    let branches = enumerate_wire(&program);
    Ok(branches
        .iter()
        .map(|(record, p)| p * shot_fidelity(record, cfg.input, cfg.n))
        .sum())
}

/// Sampled teleportation campaign. Shot `i` draws from stream `i` of
/// `seed`; `readout` (if any) is applied to the full record before scoring;
/// TP mitigation uses the supplied rates.
pub fn run_teleport(
    cfg: &TeleportConfig,
    readout: Option<(&ReadoutNoiseModel, NoiseChannel)>,
    mitigation: Option<&[TpRates]>,
    shots: usize,
    seed: u64,
) -> Result<MitigatedEstimate> {
    if shots == 0 {
        return Err(Error::InvalidInput("teleport campaign needs at least one shot".into()));
    }
    let program = build_wire_program(cfg)?;
    if let Some((model, _)) = readout {
        if model.n() != program.record_len() {
            return Err(Error::DimensionMismatch(format!(
                "readout model on {} bits, record has {}",
                model.n(),
                program.record_len()
            )));
        }
    }
    if let Some(rates) = mitigation {
        if rates.len() != program.record_len() {
            return Err(Error::DimensionMismatch("mitigation rate count".into()));
        }
    }
    let support = fidelity_support(cfg.input, cfg.n);
    let rate_set: Option<RateSet> = match readout {
        Some((model, NoiseChannel::Ctmp)) => Some(model.build_rate_set()?),
        _ => None,
    };

    let chunk = (shots / (8 * rayon::current_num_threads().max(1))).max(1);
    let ranges: Vec<(usize, usize)> =
        (0..shots).step_by(chunk).map(|s| (s, (s + chunk).min(shots))).collect();
    let partials: Result<Vec<(f64, f64)>> = ranges
        .par_iter()
        .map(|&(lo, hi)| {
            let mut sum = 0.0;
            let mut sumsq = 0.0;
            for shot in lo..hi {
                let mut rng = rng::stream(seed, shot as u64);
                let mut record = simulate_wire_shot(&program, &mut rng);
                match readout {
                    Some((model, NoiseChannel::Tp)) => model.apply_tp_noise(&mut record, &mut rng),
                    Some((_, NoiseChannel::Ctmp)) => {
                        rate_set.as_ref().unwrap().gillespie(&mut record, &mut rng)
                    }
                    None => {}
                }
                let v = match mitigation {
                    None => shot_fidelity(&record, cfg.input, cfg.n),
                    Some(rates) => shot_fidelity_tp(&record, &support, rates)?,
                };
                sum += v;
                sumsq += v * v;
            }
            Ok((sum, sumsq))
        })
        .collect();
    let (sum, sumsq) = partials?
        .into_iter()
        .fold((0.0, 0.0), |(a, b), (c, d)| (a + c, b + d));
    let mean = sum / shots as f64;
    let var = if shots > 1 {
        ((sumsq - shots as f64 * mean * mean) / (shots as f64 - 1.0)).max(0.0)
    } else {
        0.0
    };
    let (method, overhead) = match mitigation {
        None => (Method::Raw, 1.0),
        Some(rates) => (Method::Tp, tp_support_overhead(rates, support.iter().copied())?),
    };
    Ok(MitigatedEstimate {
        method,
        value: mean,
        planned_epsilon: None,
        delta: None,
        empirical_std_error: (var / shots as f64).sqrt(),
        gamma: 0.0,
        overhead,
        settings: 1,
        shots_per_setting: shots,
        samples_per_shot: 1,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AlphaScanPoint {
    pub alpha: f64,
    pub value: f64,
    pub std_error: f64,
}

fn with_alpha(cfg: &TeleportConfig, alpha: f64) -> TeleportConfig {
    let mut out = cfg.clone();
    for p in &mut out.perturbations {
        p.alpha = alpha;
    }
    out
}

/// Sampled fidelity at each grid point. With `common_random` all points
/// reuse the same shot streams (variance reduction across the curve);
/// otherwise each point gets an independent stream family.
#[allow(clippy::too_many_arguments)]
pub fn scan_alpha(
    cfg: &TeleportConfig,
    alphas: &[f64],
    readout: Option<(&ReadoutNoiseModel, NoiseChannel)>,
    mitigation: Option<&[TpRates]>,
    shots: usize,
    seed: u64,
    common_random: bool,
) -> Result<Vec<AlphaScanPoint>> {
    if alphas.is_empty() {
        return Err(Error::InvalidInput("empty alpha grid".into()));
    }
    alphas
        .iter()
        .enumerate()
        .map(|(i, &alpha)| {
            let point_seed = if common_random {
                seed
            } else {
                seed.wrapping_add(0x9e37_79b9_7f4a_7c15u64.wrapping_mul(i as u64 + 1))
            };
            let est =
                run_teleport(&with_alpha(cfg, alpha), readout, mitigation, shots, point_seed)?;
            Ok(AlphaScanPoint { alpha, value: est.value, std_error: est.empirical_std_error })
        })
        .collect()
}

/// Exact noiseless fidelity at each grid point (full enumeration).
pub fn scan_alpha_exact(cfg: &TeleportConfig, alphas: &[f64]) -> Result<Vec<(f64, f64)>> {
    alphas
        .iter()
        .map(|&alpha| Ok((alpha, exact_postfree_fidelity(&with_alpha(cfg, alpha))?)))
        .collect()
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct Harmonic {
    pub amplitude: f64,
    pub phase: f64,
}

/// Least-squares fit of `f(x) = B + sum_h A_h sin(h x / T + theta_h)`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OscillationFit {
    /// Fundamental amplitude `A >= 0`.
    pub amplitude: f64,
    /// Fundamental period parameter `T` (`f = A sin(x/T + theta) + B`).
    pub period: f64,
    /// Fundamental phase, normalized to `(-pi, pi]`.
    pub phase: f64,
    pub offset: f64,
    pub harmonics: Vec<Harmonic>,
    /// Peak-to-trough scale: twice the largest harmonic amplitude.
    pub fluctuation: f64,
    pub residual_rms: f64,
}

/// Fit an oscillation with `harmonics` components sharing one fundamental.
/// The fundamental is found by scanning a frequency grid (each candidate
/// solved by linear least squares) and refining the best cell by
/// golden-section search.
pub fn fit_oscillation(xs: &[f64], ys: &[f64], harmonics: usize) -> Result<OscillationFit> {
    if harmonics == 0 {
        return Err(Error::InvalidInput("need at least one harmonic".into()));
    }
    if xs.len() != ys.len() {
        return Err(Error::DimensionMismatch("fit grids differ in length".into()));
    }
    if xs.len() < 4 * harmonics + 2 {
        return Err(Error::FitDiverged(format!(
            "{} points cannot constrain {} harmonics",
            xs.len(),
            harmonics
        )));
    }
    let lo = xs.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    if !(span.is_finite() && span > 0.0) {
        return Err(Error::FitDiverged("degenerate x grid".into()));
    }
    let omega_min = std::f64::consts::TAU / (4.0 * span);
    let omega_max = std::f64::consts::PI * (xs.len() as f64 - 1.0) / span / harmonics as f64;
    let steps = 600;
    let ratio = (omega_max / omega_min).powf(1.0 / (steps as f64 - 1.0));
    let mut best: Option<(f64, f64)> = None;
    let mut omega = omega_min;
    for _ in 0..steps {
        if let Some(sse) = solve_at_omega(xs, ys, harmonics, omega).map(|(_, sse)| sse) {
            if best.map_or(true, |(_, b)| sse < b) {
                best = Some((omega, sse));
            }
        }
        omega *= ratio;
    }
    let (omega_best, _) = best.ok_or_else(|| {
        Error::FitDiverged("no frequency candidate admitted a least-squares solution".into())
    })?;
    let (omega_lo, omega_hi) = (omega_best / ratio.powi(2), omega_best * ratio.powi(2));
    let (omega_ref, _) = numeric::golden_section_min(
        |w| {
            solve_at_omega(xs, ys, harmonics, w)
                .map(|(_, sse)| sse)
                .unwrap_or(f64::INFINITY)
        },
        omega_lo,
        omega_hi,
        1e-12 * omega_best,
    );
    let (coeffs, sse) = solve_at_omega(xs, ys, harmonics, omega_ref)
        .ok_or_else(|| Error::FitDiverged("least-squares solve failed at refined frequency".into()))?;

    let offset = coeffs[0];
    let mut comps = Vec::with_capacity(harmonics);
    for h in 0..harmonics {
        let a = coeffs[1 + 2 * h];
        let b = coeffs[2 + 2 * h];
        let amplitude = a.hypot(b);
        let mut phase = b.atan2(a);
        if phase <= -std::f64::consts::PI {
            phase += std::f64::consts::TAU;
        }
        comps.push(Harmonic { amplitude, phase });
    }
    let fluctuation = 2.0 * comps.iter().map(|h| h.amplitude).fold(0.0f64, f64::max);
    Ok(OscillationFit {
        amplitude: comps[0].amplitude,
        period: 1.0 / omega_ref,
        phase: comps[0].phase,
        offset,
        harmonics: comps,
        fluctuation,
        residual_rms: (sse / xs.len() as f64).sqrt(),
    })
}

/// Linear LS at fixed fundamental frequency: columns `1`, `sin(h w x)`,
/// `cos(h w x)`. Returns `(coefficients, SSE)`.
fn solve_at_omega(xs: &[f64], ys: &[f64], harmonics: usize, omega: f64) -> Option<(Vec<f64>, f64)> {
    use nalgebra::{DMatrix, DVector};
    let cols = 1 + 2 * harmonics;
    let design = DMatrix::from_fn(xs.len(), cols, |r, c| {
        if c == 0 {
            1.0
        } else {
            let h = (c + 1) / 2;
            let arg = h as f64 * omega * xs[r];
            if c % 2 == 1 {
                arg.sin()
            } else {
                arg.cos()
            }
        }
    });
    let rhs = DVector::from_column_slice(ys);
    let svd = design.clone().svd(true, true);
    let sol = svd.solve(&rhs, 1e-12).ok()?;
    let residual = &design * &sol - &rhs;
    Some((sol.iter().cloned().collect(), residual.norm_squared()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn noiseless_shots_score_exactly_one() {
        let mut rng = rng::master(3);
        for n in [1usize, 2, 3, 4, 7, 10] {
            for input in InputState::ALL {
                let cfg = TeleportConfig::new(n, input);
                let program = build_wire_program(&cfg).unwrap();
                for _ in 0..40 {
                    let record = simulate_wire_shot(&program, &mut rng);
                    assert_eq!(
                        shot_fidelity(&record, input, n),
                        1.0,
                        "n={n} input={}",
                        input.label()
                    );
                }
            }
        }
    }

    #[test]
    fn x_outcomes_are_marginally_unbiased() {
        let cfg = TeleportConfig::new(6, InputState::PlusI);
        let program = build_wire_program(&cfg).unwrap();
        let mut rng = rng::master(8);
        let shots = 20_000;
        let mut ones = vec![0u32; 6];
        for _ in 0..shots {
            let record = simulate_wire_shot(&program, &mut rng);
            for (q, count) in ones.iter_mut().enumerate() {
                *count += record.get(q) as u32;
            }
        }
        for (q, count) in ones.iter().enumerate() {
            let f = *count as f64 / shots as f64;
            assert!((f - 0.5).abs() < 0.012, "qubit {q} marginal {f}");
        }
    }

    #[test]
    fn enumeration_weights_sum_to_one_and_score_one() {
        for n in [3usize, 5, 6] {
            let cfg = TeleportConfig::new(n, InputState::Minus);
            let program = build_wire_program(&cfg).unwrap();
            let branches = enumerate_wire(&program);
            let total: f64 = branches.iter().map(|(_, p)| p).sum();
            assert_relative_eq!(total, 1.0, epsilon = 1e-12);
            let fid: f64 = branches
                .iter()
                .map(|(r, p)| p * shot_fidelity(r, InputState::Minus, n))
                .sum();
            assert_relative_eq!(fid, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn correction_parity_formula() {
        let n = 6;
        let mut record = BitString::zeros(n + 1);
        assert_eq!(correction_parity(&record, n), (false, false));
        record.set(0, true);
        assert_eq!(correction_parity(&record, n), (false, true));
        record.set(3, true); // odd chain -> x_pow
        assert_eq!(correction_parity(&record, n), (true, true));
        record.set(4, true); // even chain -> z_pow
        assert_eq!(correction_parity(&record, n), (true, false));
    }

    #[test]
    fn perturbation_layout_and_window_accounting() {
        let perts = parallel_groups(2, PerturbationKind::Preserving, 0.3, 0.1);
        assert_eq!(perts[0].anchor, 1);
        assert_eq!(perts[1].anchor, 5);
        let cfg = TeleportConfig::new(8, InputState::Zero).with_perturbations(perts);
        let program = build_wire_program(&cfg).unwrap();
        assert!(program.window_needed <= 4, "window {}", program.window_needed);

        // Overlapping windows (no spare qubit) are rejected.
        let bad = TeleportConfig::new(8, InputState::Zero).with_perturbations(vec![
            Perturbation { kind: PerturbationKind::Preserving, alpha: 0.1, beta: 0.0, anchor: 1 },
            Perturbation { kind: PerturbationKind::Preserving, alpha: 0.1, beta: 0.0, anchor: 4 },
        ]);
        assert!(build_wire_program(&bad).is_err());

        // Window past the chain end is rejected.
        let bad = TeleportConfig::new(4, InputState::Zero).with_perturbations(vec![
            Perturbation { kind: PerturbationKind::BreakOdd, alpha: 0.1, beta: 0.0, anchor: 3 },
        ]);
        assert!(build_wire_program(&bad).is_err());

        // Tiny window cap trips the overflow guard.
        let mut cfg = TeleportConfig::new(8, InputState::Zero).with_perturbations(
            parallel_groups(1, PerturbationKind::BreakOdd, 0.2, 0.0),
        );
        cfg.window_cap = 3;
        match build_wire_program(&cfg) {
            Err(Error::WindowOverflow { needed, cap }) => {
                assert!(needed > cap);
            }
            other => panic!("expected overflow, got {other:?}"),
        }
    }

    #[test]
    fn preserving_kind_leaves_fidelity_flat() {
        let cfg = TeleportConfig::new(5, InputState::PlusI).with_perturbations(
            parallel_groups(1, PerturbationKind::Preserving, 0.0, 0.2),
        );
        let alphas: Vec<f64> = (0..9).map(|i| i as f64 * std::f64::consts::PI / 8.0).collect();
        let curve = scan_alpha_exact(&cfg, &alphas).unwrap();
        for (alpha, v) in curve {
            assert!((v - 1.0).abs() < 1e-12, "alpha {alpha} value {v}");
        }
    }

    #[test]
    fn break_odd_oscillates_zero_but_not_plus() {
        let alphas: Vec<f64> = (0..13).map(|i| i as f64 * std::f64::consts::PI / 12.0).collect();
        let base = |input| {
            TeleportConfig::new(5, input)
                .with_perturbations(parallel_groups(1, PerturbationKind::BreakOdd, 0.0, 0.0))
        };
        let zero_curve = scan_alpha_exact(&base(InputState::Zero), &alphas).unwrap();
        let spread = zero_curve.iter().map(|&(_, v)| v).fold(f64::NEG_INFINITY, f64::max)
            - zero_curve.iter().map(|&(_, v)| v).fold(f64::INFINITY, f64::min);
        assert!(spread > 0.5, "expected oscillation, spread {spread}");

        let plus_curve = scan_alpha_exact(&base(InputState::Plus), &alphas).unwrap();
        for (alpha, v) in plus_curve {
            assert!((v - 1.0).abs() < 1e-10, "alpha {alpha} value {v}");
        }
    }

    #[test]
    fn beta_invariance_and_alpha_periodicity() {
        let alphas = [0.0, 0.4, 1.1, 2.0];
        for kind in [
            PerturbationKind::Preserving,
            PerturbationKind::BreakOdd,
            PerturbationKind::BreakEven,
        ] {
            let curve_at_beta = |beta: f64| {
                let cfg = TeleportConfig::new(5, InputState::MinusI)
                    .with_perturbations(vec![Perturbation { kind, alpha: 0.0, beta, anchor: 1 }]);
                scan_alpha_exact(&cfg, &alphas).unwrap()
            };
            let a = curve_at_beta(0.0);
            let b = curve_at_beta(0.77);
            for ((_, va), (_, vb)) in a.iter().zip(&b) {
                assert!((va - vb).abs() < 1e-10, "kind {kind:?}: {va} vs {vb}");
            }
            // alpha -> alpha + pi returns the same state up to global sign.
            let cfg = TeleportConfig::new(5, InputState::One)
                .with_perturbations(vec![Perturbation { kind, alpha: 0.0, beta: 0.3, anchor: 1 }]);
            let base = scan_alpha_exact(&cfg, &alphas).unwrap();
            let shifted: Vec<f64> = alphas.iter().map(|a| a + std::f64::consts::PI).collect();
            let wrapped = scan_alpha_exact(&cfg, &shifted).unwrap();
            for ((_, va), (_, vb)) in base.iter().zip(&wrapped) {
                assert!((va - vb).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn tp_mitigated_teleport_recovers_fidelity() {
        let n = 6;
        let model = ReadoutNoiseModel::synth_device(
            n + 1,
            17,
            &crate::noise::SynthRanges {
                eps: (0.02, 0.05),
                eta: (0.03, 0.07),
                ..Default::default()
            },
        )
        .unwrap();
        let cfg = TeleportConfig::new(n, InputState::PlusI);
        let raw = run_teleport(&cfg, Some((&model, NoiseChannel::Tp)), None, 40_000, 5).unwrap();
        assert!(raw.value < 0.92, "raw {}", raw.value);
        let fixed = run_teleport(
            &cfg,
            Some((&model, NoiseChannel::Tp)),
            Some(model.tp_rates()),
            40_000,
            5,
        )
        .unwrap();
        let tol = 5.0 * fixed.empirical_std_error.max(1e-4);
        assert!((fixed.value - 1.0).abs() < tol, "value {} tol {tol}", fixed.value);
        assert!(fixed.overhead > 1.0);
    }

    #[test]
    fn oscillation_fit_recovers_reference_parameters() {
        let (a_true, t_true, theta_true, b_true) = (0.3, 0.5, 0.1, 0.6);
        let xs: Vec<f64> = (0..50).map(|i| i as f64 * std::f64::consts::TAU / 49.0).collect();
        let ys: Vec<f64> =
            xs.iter().map(|x| a_true * (x / t_true + theta_true).sin() + b_true).collect();
        let fit = fit_oscillation(&xs, &ys, 1).unwrap();
        assert_relative_eq!(fit.amplitude, a_true, epsilon = 1e-6);
        assert_relative_eq!(fit.period, t_true, epsilon = 1e-6);
        assert_relative_eq!(fit.phase, theta_true, epsilon = 1e-6);
        assert_relative_eq!(fit.offset, b_true, epsilon = 1e-6);
        assert_relative_eq!(fit.fluctuation, 2.0 * a_true, epsilon = 1e-6);
        assert!(fit.residual_rms < 1e-8);
    }

    #[test]
    fn oscillation_fit_flat_curve_and_input_validation() {
        let xs: Vec<f64> = (0..20).map(|i| i as f64 * 0.3).collect();
        let ys = vec![0.75; 20];
        let fit = fit_oscillation(&xs, &ys, 1).unwrap();
        assert!(fit.amplitude < 1e-8);
        assert!(fit.fluctuation < 1e-8);
        assert_relative_eq!(fit.offset, 0.75, epsilon = 1e-9);
        assert!(fit_oscillation(&xs[..4], &ys[..4], 1).is_err());
    }

    #[test]
    fn two_harmonic_fit_resolves_both_components() {
        let xs: Vec<f64> = (0..80).map(|i| i as f64 * std::f64::consts::TAU / 79.0).collect();
        let ys: Vec<f64> = xs
            .iter()
            .map(|x| 0.4 * (2.0 * x + 0.3).sin() + 0.15 * (4.0 * x - 0.5).sin() + 0.2)
            .collect();
        let fit = fit_oscillation(&xs, &ys, 2).unwrap();
        assert_relative_eq!(fit.harmonics[0].amplitude, 0.4, epsilon = 1e-5);
        assert_relative_eq!(fit.harmonics[1].amplitude, 0.15, epsilon = 1e-5);
        assert_relative_eq!(fit.period, 0.5, epsilon = 1e-5);
        assert_relative_eq!(fit.fluctuation, 0.8, epsilon = 1e-5);
    }

    #[test]
    fn campaign_deterministic_in_seed() {
        let cfg = TeleportConfig::new(4, InputState::Minus).with_perturbations(
            parallel_groups(1, PerturbationKind::BreakEven, 0.6, 0.2),
        );
        let a = run_teleport(&cfg, None, None, 5000, 77).unwrap();
        let b = run_teleport(&cfg, None, None, 5000, 77).unwrap();
        assert_eq!(a.value.to_bits(), b.value.to_bits());
    }
}
