//! Hermitian Pauli strings with exact sign bookkeeping.
//!
//! A string is stored as two bit masks (X part, Z part) plus a global
//! power of `i` kept modulo 4. Products accumulate the per-qubit phase
//! contributions word-parallel, so multiplying two 95-qubit strings is a
//! handful of word operations.

use crate::bits::BitString;
use crate::error::{Error, Result};

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Basis {
    I,
    X,
    Y,
    Z,
}

impl Basis {
    pub fn label(self) -> char {
        match self {
            Basis::I => 'I',
            Basis::X => 'X',
            Basis::Y => 'Y',
            Basis::Z => 'Z',
        }
    }
}

#[derive(Clone, PartialEq, Eq)]
pub struct PauliString {
    x: BitString,
    z: BitString,
    /// Power of `i` in the prefactor, modulo 4. Hermitian strings carry an
    /// even power (0 => +1, 2 => -1).
    phase: u8,
}

impl PauliString {
    pub fn identity(n: usize) -> Self {
        Self { x: BitString::zeros(n), z: BitString::zeros(n), phase: 0 }
    }

    pub fn from_single(n: usize, qubit: usize, basis: Basis) -> Self {
        let mut p = Self::identity(n);
        match basis {
            Basis::I => {}
            Basis::X => p.x.set(qubit, true),
            Basis::Y => {
                p.x.set(qubit, true);
                p.z.set(qubit, true);
            }
            Basis::Z => p.z.set(qubit, true),
        }
        p
    }

    pub fn n(&self) -> usize {
        self.x.len()
    }

    pub fn x_mask(&self) -> &BitString {
        &self.x
    }

    pub fn z_mask(&self) -> &BitString {
        &self.z
    }

    pub fn basis_at(&self, qubit: usize) -> Basis {
        match (self.x.get(qubit), self.z.get(qubit)) {
            (false, false) => Basis::I,
            (true, false) => Basis::X,
            (true, true) => Basis::Y,
            (false, true) => Basis::Z,
        }
    }

    /// Qubits acted on non-trivially.
    pub fn support(&self) -> BitString {
        let mut s = self.x.clone();
        s.or_assign(&self.z);
        s
    }

    pub fn is_hermitian(&self) -> bool {
        self.phase % 2 == 0
    }

    /// +1 or -1. Panics on a non-Hermitian string; those never escape
    /// [`pauli_product`].
    pub fn sign(&self) -> i8 {
        assert!(self.is_hermitian(), "sign of non-Hermitian Pauli string");
        if self.phase == 0 {
            1
        } else {
            -1
        }
    }

    /// Phase exponent `p` in the `i^p` prefactor, mod 4.
    pub fn phase_i_power(&self) -> u8 {
        self.phase
    }

    pub(crate) fn negate(&mut self) {
        self.phase = (self.phase + 2) % 4;
    }

    /// In-place product `self <- self * rhs`, with exact phase tracking.
    pub fn mul_assign(&mut self, rhs: &PauliString) {
        debug_assert_eq!(self.n(), rhs.n());
        let mut acc: u32 = 0; // i-power contribution mod 4, tracked as wrapping counter
        for w in 0..self.x.words().len() {
            let xa = self.x.words()[w];
            let za = self.z.words()[w];
            let xb = rhs.x.words()[w];
            let zb = rhs.z.words()[w];
            let ya = xa & za;
            let xa_only = xa & !za;
            let za_only = za & !xa;
            let yb = xb & zb;
            let xb_only = xb & !zb;
            let zb_only = zb & !xb;
            // Cyclic products pick up +i, anti-cyclic -i.
            let plus = (xa_only & yb) | (ya & zb_only) | (za_only & xb_only);
            let minus = (ya & xb_only) | (za_only & yb) | (xa_only & zb_only);
            acc = acc.wrapping_add(plus.count_ones()).wrapping_sub(minus.count_ones());
        }
        self.phase = ((self.phase as u32).wrapping_add(rhs.phase as u32).wrapping_add(acc) % 4) as u8;
        self.x.xor_assign(&rhs.x);
        self.z.xor_assign(&rhs.z);
    }

    pub fn commutes_with(&self, rhs: &PauliString) -> bool {
        // Symplectic product: parity of (x_a.z_b) + (z_a.x_b).
        self.x.and_parity(&rhs.z) == self.z.and_parity(&rhs.x)
    }

    /// Conjugate by a Hadamard on `qubit`: X <-> Z, Y -> -Y.
    pub fn conj_h(&mut self, qubit: usize) {
        let xb = self.x.get(qubit);
        let zb = self.z.get(qubit);
        if xb && zb {
            self.negate();
        }
        self.x.set(qubit, zb);
        self.z.set(qubit, xb);
    }

    /// Conjugate by S-dagger on `qubit`: X -> -Y, Y -> X, Z -> Z.
    pub fn conj_sdg(&mut self, qubit: usize) {
        let xb = self.x.get(qubit);
        let zb = self.z.get(qubit);
        if xb && !zb {
            self.negate();
        }
        self.z.set(qubit, xb ^ zb);
    }

    /// Conjugate by the rotation that maps measurement basis `basis` onto Z
    /// (identity bases are read out in Z directly).
    pub fn conj_basis_rotation(&mut self, qubit: usize, basis: Basis) {
        match basis {
            Basis::I | Basis::Z => {}
            Basis::X => self.conj_h(qubit),
            Basis::Y => {
                self.conj_sdg(qubit);
                self.conj_h(qubit);
            }
        }
    }

    pub fn label(&self) -> String {
        let sign = if self.phase == 0 { "+" } else { "-" };
        let body: String = (0..self.n()).map(|q| self.basis_at(q).label()).collect();
        format!("{sign}{body}")
    }
}

impl std::fmt::Debug for PauliString {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "PauliString({})", self.label())
    }
}

/// Ordered product of Hermitian terms. Fails if the result carries an odd
/// power of `i` (a pair of anticommuting factors), since such a product is
/// not an observable.
pub fn pauli_product(terms: &[PauliString]) -> Result<PauliString> {
    let n = terms.first().map(|t| t.n()).unwrap_or(0);
    let mut acc = PauliString::identity(n);
    for t in terms {
        if t.n() != n {
            return Err(Error::DimensionMismatch(format!(
                "pauli factors on {n} vs {} qubits",
                t.n()
            )));
        }
        acc.mul_assign(t);
    }
    if !acc.is_hermitian() {
        return Err(Error::NonHermitianProduct);
    }
    Ok(acc)
}
