//! Stabilizer tableaux for cluster states and exact measurement sampling.
//!
//! A cluster state on graph `G` is the joint +1 eigenstate of the vertex
//! stabilizers `S_v = X_v prod_{w~v} Z_w`; its tableau is simply that row
//! list. Measuring every qubit in a product-basis setting sends the state
//! to a distribution that is uniform over an affine subspace of GF(2)^n:
//! rotating the rows into the measurement frame and Gauss-eliminating the
//! X block leaves pure-Z rows, whose signs are parity constraints on the
//! outcome; the constraint solution set is exactly the support of the Born
//! distribution. [`SettingSampler`] does that elimination once per setting
//! and then draws shots with a few word-XORs each.

use rand::Rng;

use crate::bits::BitString;
use crate::error::{Error, Result};
use crate::graph::GraphSpec;
use crate::pauli::{pauli_product, Basis, PauliString};

#[derive(Clone, Debug)]
pub struct StabilizerTableau {
    n: usize,
    rows: Vec<PauliString>,
}

impl StabilizerTableau {
    /// Tableau of the cluster state on `graph`: one stabilizer row per
    /// vertex, all signs +1. Equivalent to conjugating X_v through the CZ
    /// layers applied to the all-plus state.
    pub fn cluster(graph: &GraphSpec) -> Result<Self> {
        let n = graph.n();
        let rows = (0..n)
            .map(|v| graph.stabilizer_of_vertex(v))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { n, rows })
    }

    pub fn from_rows(rows: Vec<PauliString>) -> Result<Self> {
        let n = rows.first().map(|r| r.n()).unwrap_or(0);
        let t = Self { n, rows };
        t.check_symplectic()?;
        Ok(t)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn rows(&self) -> &[PauliString] {
        &self.rows
    }

    /// All rows Hermitian, mutually commuting, and GF(2)-independent.
    pub fn check_symplectic(&self) -> Result<()> {
        for (i, r) in self.rows.iter().enumerate() {
            if r.n() != self.n {
                return Err(Error::DimensionMismatch(format!("row {i} has wrong width")));
            }
            if !r.is_hermitian() {
                return Err(Error::NonHermitianProduct);
            }
            for s in &self.rows[i + 1..] {
                if !r.commutes_with(s) {
                    return Err(Error::InvalidInput(format!("row {i} anticommutes with a later row")));
                }
            }
        }
        // Independence: rank of the stacked (x|z) matrix must equal the row count.
        let mut vecs: Vec<BitString> = self
            .rows
            .iter()
            .map(|r| {
                let mut v = BitString::zeros(2 * self.n);
                for q in 0..self.n {
                    if r.x_mask().get(q) {
                        v.set(q, true);
                    }
                    if r.z_mask().get(q) {
                        v.set(self.n + q, true);
                    }
                }
                v
            })
            .collect();
        let rank = gf2_rank(&mut vecs);
        if rank != self.rows.len() {
            return Err(Error::InvalidInput("tableau rows are GF(2)-dependent".into()));
        }
        Ok(())
    }
}

fn gf2_rank(vecs: &mut [BitString]) -> usize {
    let mut rank = 0;
    let mut col = 0;
    let width = vecs.first().map(|v| v.len()).unwrap_or(0);
    while col < width && rank < vecs.len() {
        if let Some(pivot) = (rank..vecs.len()).find(|&i| vecs[i].get(col)) {
            vecs.swap(rank, pivot);
            let pivot_row = vecs[rank].clone();
            for (i, v) in vecs.iter_mut().enumerate() {
                if i != rank && v.get(col) {
                    v.xor_assign(&pivot_row);
                }
            }
            rank += 1;
        }
        col += 1;
    }
    rank
}

/// One randomized witness setting: a uniformly chosen subset of vertex
/// stabilizers, their Hermitian product, and the per-qubit measurement
/// bases that realize it.
#[derive(Clone, Debug)]
pub struct WitnessSetting {
    pub subset: BitString,
    pub pauli: PauliString,
    pub per_qubit_basis: Vec<Basis>,
}

impl WitnessSetting {
    pub fn from_subset(tableau: &StabilizerTableau, subset: BitString) -> Result<Self> {
        if subset.len() != tableau.n() {
            return Err(Error::DimensionMismatch("subset width != tableau width".into()));
        }
        let terms: Vec<PauliString> =
            subset.iter_ones().map(|v| tableau.rows()[v].clone()).collect();
        // The empty subset is kept: its product is the n-qubit identity and
        // every shot scores +1.
        let pauli = if terms.is_empty() {
            PauliString::identity(tableau.n())
        } else {
            pauli_product(&terms)?
        };
        let per_qubit_basis = (0..tableau.n()).map(|q| pauli.basis_at(q)).collect();
        Ok(Self { subset, pauli, per_qubit_basis })
    }

    /// Signed parity of an outcome over the setting support: the one-shot
    /// estimate of the setting observable.
    pub fn shot_value(&self, outcome: &BitString) -> f64 {
        let parity = self.pauli.support().and_parity(outcome);
        let v = if parity { -1.0 } else { 1.0 };
        v * f64::from(self.pauli.sign())
    }
}

/// Draw a setting: each stabilizer enters the product independently with
/// probability 1/2 (the identity setting is kept).
pub fn sample_witness_setting<R: Rng>(
    tableau: &StabilizerTableau,
    rng: &mut R,
) -> Result<WitnessSetting> {
    let subset = BitString::random(tableau.n(), rng);
    WitnessSetting::from_subset(tableau, subset)
}

/// Compiled sampler for one measurement setting: outcomes are
/// `offset XOR (random combination of basis vectors)`, uniform over the
/// affine solution set of the pure-Z parity constraints.
#[derive(Clone, Debug)]
pub struct SettingSampler {
    n: usize,
    offset: BitString,
    basis: Vec<BitString>,
}

impl SettingSampler {
    pub fn compile(tableau: &StabilizerTableau, bases: &[Basis]) -> Result<Self> {
        let n = tableau.n();
        if bases.len() != n {
            return Err(Error::DimensionMismatch("basis list width != tableau width".into()));
        }
        // Rotate rows into the measurement frame.
        let mut rows: Vec<PauliString> = tableau.rows().to_vec();
        for row in rows.iter_mut() {
            for (q, &b) in bases.iter().enumerate() {
                row.conj_basis_rotation(q, b);
            }
        }
        // Eliminate the X block; whatever is left X-free is a parity constraint.
        let mut r = 0;
        for col in 0..n {
            if let Some(p) = (r..rows.len()).find(|&i| rows[i].x_mask().get(col)) {
                rows.swap(r, p);
                let pivot = rows[r].clone();
                for (i, row) in rows.iter_mut().enumerate() {
                    if i != r && row.x_mask().get(col) {
                        row.mul_assign(&pivot);
                    }
                }
                r += 1;
            }
        }
        let constraints: Vec<(BitString, bool)> = rows[r..]
            .iter()
            .map(|row| {
                debug_assert!(row.x_mask().is_zero());
                (row.z_mask().clone(), row.sign() < 0)
            })
            .collect();
        let (offset, basis) = solve_affine(n, &constraints)?;
        Ok(Self { n, offset, basis })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Dimension of the outcome space (outcomes take 2^rank values).
    pub fn rank(&self) -> usize {
        self.basis.len()
    }

    pub fn sample_into<R: Rng>(&self, out: &mut BitString, rng: &mut R) {
        out.clear();
        out.xor_assign(&self.offset);
        let mut chunk = 0u64;
        for (i, v) in self.basis.iter().enumerate() {
            if i % 64 == 0 {
                chunk = rng.gen();
            }
            if chunk >> (i % 64) & 1 == 1 {
                out.xor_assign(v);
            }
        }
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> BitString {
        let mut out = BitString::zeros(self.n);
        self.sample_into(&mut out, rng);
        out
    }

    /// Exact Born distribution (small `rank` only): every outcome in the
    /// affine set with probability 2^-rank.
    pub fn exact_distribution(&self) -> Result<Vec<(BitString, f64)>> {
        let r = self.basis.len();
        if r > 20 {
            return Err(Error::SizeOverflow(format!("2^{r} outcomes")));
        }
        let p = 0.5f64.powi(r as i32);
        let mut out = Vec::with_capacity(1 << r);
        for mask in 0u64..(1 << r) {
            let mut s = self.offset.clone();
            for (i, v) in self.basis.iter().enumerate() {
                if mask >> i & 1 == 1 {
                    s.xor_assign(v);
                }
            }
            out.push((s, p));
        }
        Ok(out)
    }
}

/// Solve `{z . x = b}` over GF(2); return a particular solution and a basis
/// of the homogeneous solution space.
fn solve_affine(n: usize, constraints: &[(BitString, bool)]) -> Result<(BitString, Vec<BitString>)> {
    let mut rows: Vec<(BitString, bool)> = constraints.to_vec();
    let mut pivots: Vec<(usize, usize)> = Vec::new(); // (row, col)
    let mut rank = 0;
    for col in 0..n {
        if let Some(p) = (rank..rows.len()).find(|&i| rows[i].0.get(col)) {
            rows.swap(rank, p);
            let (pz, pb) = rows[rank].clone();
            for (i, (z, b)) in rows.iter_mut().enumerate() {
                if i != rank && z.get(col) {
                    z.xor_assign(&pz);
                    *b ^= pb;
                }
            }
            pivots.push((rank, col));
            rank += 1;
        }
    }
    // A stabilizer state always has consistent constraints; anything else
    // means the caller fed us a non-state.
    if rows[rank..].iter().any(|(z, b)| z.is_zero() && *b) {
        return Err(Error::InvalidInput("inconsistent parity constraints".into()));
    }
    let mut offset = BitString::zeros(n);
    for &(r, c) in &pivots {
        if rows[r].1 {
            offset.set(c, true);
        }
    }
    let pivot_cols: Vec<usize> = pivots.iter().map(|&(_, c)| c).collect();
    let mut basis = Vec::with_capacity(n - rank);
    for free in 0..n {
        if pivot_cols.contains(&free) {
            continue;
        }
        let mut v = BitString::zeros(n);
        v.set(free, true);
        for &(r, c) in &pivots {
            if rows[r].0.get(free) {
                v.set(c, true);
            }
        }
        basis.push(v);
    }
    Ok((offset, basis))
}

/// Sample `shots` outcomes of the setting on the (noiseless) cluster state.
pub fn measure_setting<R: Rng>(
    tableau: &StabilizerTableau,
    setting: &WitnessSetting,
    shots: usize,
    rng: &mut R,
) -> Result<Vec<BitString>> {
    let sampler = SettingSampler::compile(tableau, &setting.per_qubit_basis)?;
    Ok((0..shots).map(|_| sampler.sample(rng)).collect())
}

/// Per-shot preparation-error frame for the depolarizing knob: after each
/// CZ pattern, every qubit the pattern touches suffers a uniformly random
/// Pauli (I/X/Y/Z) with probability `p`. Errors are conjugated through the
/// remaining CZ patterns and the measurement-basis rotation; only the
/// final X part matters, and it XORs onto the ideal outcome sample.
#[derive(Clone, Debug)]
pub struct ErrorFrame {
    n: usize,
    p: f64,
    touched: Vec<Vec<usize>>,
    pattern_edges: Vec<Vec<(usize, usize)>>,
    bases: Vec<Basis>,
}

impl ErrorFrame {
    pub fn new(graph: &GraphSpec, p: f64, bases: &[Basis]) -> Self {
        let pats = graph.cz_patterns();
        let touched: Vec<Vec<usize>> =
            (0..pats.len()).map(|k| graph.pattern_touch_mask(k).iter_ones().collect()).collect();
        let pattern_edges: Vec<Vec<(usize, usize)>> = pats
            .iter()
            .map(|pat| pat.iter().map(|&e| graph.edges()[e]).collect())
            .collect();
        Self { n: graph.n(), p, touched, pattern_edges, bases: bases.to_vec() }
    }

    /// Draw one preparation-error pattern; returns the X mask to XOR onto
    /// an ideal outcome sample.
    pub fn sample_mask<R: Rng>(&self, rng: &mut R) -> BitString {
        let mut ex = BitString::zeros(self.n);
        let mut ez = BitString::zeros(self.n);
        for k in 0..self.touched.len() {
            // Errors accumulated before this pattern commute through it:
            // X_a picks up Z_b across each pattern edge (a, b).
            if !ex.is_zero() {
                for &(a, b) in &self.pattern_edges[k] {
                    if ex.get(a) {
                        ez.flip(b);
                    }
                    if ex.get(b) {
                        ez.flip(a);
                    }
                }
            }
            for &q in &self.touched[k] {
                if rng.gen_bool(self.p) {
                    match rng.gen_range(0..4u8) {
                        0 => {}
                        1 => ex.flip(q),
                        2 => {
                            ex.flip(q);
                            ez.flip(q);
                        }
                        _ => ez.flip(q),
                    }
                }
            }
        }
        // Rotate into the measurement frame; the Z component then drops out.
        for (q, &b) in self.bases.iter().enumerate() {
            match b {
                Basis::I | Basis::Z => {}
                Basis::X => {
                    let (x, z) = (ex.get(q), ez.get(q));
                    ex.set(q, z);
                    ez.set(q, x);
                }
                Basis::Y => {
                    // S-dagger then H: (x, z) -> (x ^ z, x).
                    let (x, z) = (ex.get(q), ez.get(q));
                    ex.set(q, x ^ z);
                    ez.set(q, x);
                }
            }
        }
        ex
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use std::collections::HashMap;

    #[test]
    fn cluster_rows_are_vertex_stabilizers() {
        let g = GraphSpec::chain(5);
        let t = StabilizerTableau::cluster(&g).unwrap();
        t.check_symplectic().unwrap();
        for v in 0..5 {
            assert_eq!(t.rows()[v], g.stabilizer_of_vertex(v).unwrap());
        }
    }

    #[test]
    fn setting_product_signs() {
        let g = GraphSpec::chain(3);
        let t = StabilizerTableau::cluster(&g).unwrap();
        let all = BitString::from_bools(&[true, true, true]);
        let s = WitnessSetting::from_subset(&t, all).unwrap();
        // S0 S1 S2 = -(Y X Y) on a 3-chain.
        assert_eq!(s.pauli.label(), "-YXY");
        assert_eq!(
            s.per_qubit_basis,
            vec![Basis::Y, Basis::X, Basis::Y]
        );
    }

    #[test]
    fn identity_setting_value_is_plus_one() {
        let g = GraphSpec::chain(4);
        let t = StabilizerTableau::cluster(&g).unwrap();
        let s = WitnessSetting::from_subset(&t, BitString::zeros(4)).unwrap();
        let mut rng = rng::master(1);
        for shot in measure_setting(&t, &s, 20, &mut rng).unwrap() {
            assert_eq!(s.shot_value(&shot), 1.0);
        }
    }

    #[test]
    fn every_setting_shot_hits_plus_one_noiselessly() {
        let mut rng = rng::master(42);
        for g in [GraphSpec::chain(8), GraphSpec::grid_sparse(2, 4), GraphSpec::grid_full(3, 3)] {
            let t = StabilizerTableau::cluster(&g).unwrap();
            for _ in 0..25 {
                let s = sample_witness_setting(&t, &mut rng).unwrap();
                for shot in measure_setting(&t, &s, 8, &mut rng).unwrap() {
                    assert_eq!(s.shot_value(&shot), 1.0, "setting {:?}", s.pauli);
                }
            }
        }
    }

    #[test]
    fn chain3_single_stabilizer_setting_outcomes() {
        // Setting {S_1} on a 3-chain: bases (Z, X, Z); outcomes must satisfy
        // the Z0 X1 Z2 = +1 parity on the support.
        let g = GraphSpec::chain(3);
        let t = StabilizerTableau::cluster(&g).unwrap();
        let s =
            WitnessSetting::from_subset(&t, BitString::from_bools(&[false, true, false])).unwrap();
        assert_eq!(s.per_qubit_basis, vec![Basis::Z, Basis::X, Basis::Z]);
        let mut rng = rng::master(9);
        let mut seen = HashMap::new();
        for shot in measure_setting(&t, &s, 400, &mut rng).unwrap() {
            let parity = shot.get(0) as u8 ^ shot.get(1) as u8 ^ shot.get(2) as u8;
            assert_eq!(parity, 0);
            *seen.entry(shot.to_01_string()).or_insert(0usize) += 1;
        }
        // Support of the distribution: all four even-parity strings.
        assert_eq!(seen.len(), 4);
    }

    #[test]
    fn identity_setting_marginals_are_uniform() {
        let g = GraphSpec::chain(5);
        let t = StabilizerTableau::cluster(&g).unwrap();
        let s = WitnessSetting::from_subset(&t, BitString::zeros(5)).unwrap();
        let sampler = SettingSampler::compile(&t, &s.per_qubit_basis).unwrap();
        let mut rng = rng::master(17);
        let shots = 20_000;
        let mut ones = vec![0usize; 5];
        let mut out = BitString::zeros(5);
        for _ in 0..shots {
            sampler.sample_into(&mut out, &mut rng);
            for q in 0..5 {
                if out.get(q) {
                    ones[q] += 1;
                }
            }
        }
        for q in 0..5 {
            let f = ones[q] as f64 / shots as f64;
            assert!((f - 0.5).abs() < 0.02, "qubit {q}: {f}");
        }
    }

    #[test]
    fn sampler_rank_counts_constraints() {
        let g = GraphSpec::chain(3);
        let t = StabilizerTableau::cluster(&g).unwrap();
        let s =
            WitnessSetting::from_subset(&t, BitString::from_bools(&[false, true, false])).unwrap();
        let sampler = SettingSampler::compile(&t, &s.per_qubit_basis).unwrap();
        assert_eq!(sampler.rank(), 2);
        let dist = sampler.exact_distribution().unwrap();
        assert_eq!(dist.len(), 4);
    }
}
