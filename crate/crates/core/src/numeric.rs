//! Dense matrix functions and small numeric helpers shared across the
//! workbench: scaling-and-squaring exponential, principal logarithm by
//! inverse scaling and squaring (Denman–Beavers square roots plus a series
//! tail), Kronecker assembly in qubit order, complementary error function,
//! and a golden-section line minimizer.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Maximum-absolute-column-sum norm.
pub fn one_norm(a: &DMatrix<f64>) -> f64 {
    let mut best = 0.0f64;
    for j in 0..a.ncols() {
        let s: f64 = a.column(j).iter().map(|v| v.abs()).sum();
        best = best.max(s);
    }
    best
}

/// Dense `exp(A)` by scaling and squaring with a Taylor core.
pub fn expm(a: &DMatrix<f64>) -> DMatrix<f64> {
    let dim = a.nrows();
    assert_eq!(dim, a.ncols(), "expm needs a square matrix");
    let norm = one_norm(a);
    let s = if norm > 0.5 { (norm / 0.5).log2().ceil() as u32 } else { 0 };
    let scaled = a / 2f64.powi(s as i32);
    let eye = DMatrix::<f64>::identity(dim, dim);
    let mut term = eye.clone();
    let mut sum = eye;
    for k in 1..=64u32 {
        term = (&term * &scaled) / f64::from(k);
        sum += &term;
        if one_norm(&term) < 1e-18 * one_norm(&sum).max(1.0) {
            break;
        }
    }
    let mut out = sum;
    for _ in 0..s {
        out = &out * &out;
    }
    out
}

/// Principal real logarithm of `A` by inverse scaling and squaring:
/// Denman–Beavers square roots pull `A` toward the identity, a truncated
/// alternating series handles the remainder, and the result is scaled back
/// by `2^k`. Fails with [`Error::MatrixLog`] when a square-root iterate is
/// singular or the iteration stalls (e.g. an estimated response with a
/// non-positive eigenvalue has no real logarithm).
pub fn logm(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let dim = a.nrows();
    if dim != a.ncols() {
        return Err(Error::DimensionMismatch("logm needs a square matrix".into()));
    }
    let eye = DMatrix::<f64>::identity(dim, dim);
    let mut x = a.clone();
    let mut k = 0u32;
    while one_norm(&(&x - &eye)) > 0.25 {
        x = sqrtm_denman_beavers(&x)?;
        k += 1;
        if k > 60 {
            return Err(Error::MatrixLog("square-root staircase did not converge".into()));
        }
    }
    let e = &x - &eye;
    // log(I + E) = E - E^2/2 + E^3/3 - ...
    let mut power = e.clone();
    let mut sum = e.clone();
    let mut sign = -1.0;
    for m in 2..=200u32 {
        power = &power * &e;
        sum += &power * (sign / f64::from(m));
        sign = -sign;
        if one_norm(&power) / f64::from(m) < 1e-16 {
            break;
        }
    }
    Ok(sum * 2f64.powi(k as i32))
}

/// Denman–Beavers iteration for the principal square root.
fn sqrtm_denman_beavers(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let dim = a.nrows();
    let mut y = a.clone();
    let mut z = DMatrix::<f64>::identity(dim, dim);
    for _ in 0..100 {
        let y_inv = y
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::MatrixLog("singular iterate in matrix square root".into()))?;
        let z_inv = z
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::MatrixLog("singular iterate in matrix square root".into()))?;
        let y_next = (&y + &z_inv) * 0.5;
        let z_next = (&z + &y_inv) * 0.5;
        let delta = one_norm(&(&y_next - &y));
        y = y_next;
        z = z_next;
        if delta < 1e-14 * one_norm(&y).max(1.0) {
            return Ok(y);
        }
    }
    // Accept the final iterate if its square reproduces the input tightly.
    if one_norm(&(&y * &y - a)) < 1e-10 * one_norm(a).max(1.0) {
        Ok(y)
    } else {
        Err(Error::MatrixLog("square-root iteration did not converge".into()))
    }
}

/// Kronecker product over per-qubit blocks with qubit 0 as the least
/// significant index bit (matches `BitString::as_index`).
pub fn kron_qubitwise(blocks: &[DMatrix<f64>]) -> DMatrix<f64> {
    let mut acc = DMatrix::<f64>::identity(1, 1);
    for block in blocks.iter().rev() {
        acc = acc.kronecker(block);
    }
    acc
}

/// Complementary error function (Abramowitz–Stegun 7.1.26 fit, absolute
/// error below 1.5e-7 — ample for reporting p-values).
pub fn erfc(x: f64) -> f64 {
    let ax = x.abs();
    let t = 1.0 / (1.0 + 0.3275911 * ax);
    let poly = t
        * (0.254829592
            + t * (-0.284496736 + t * (1.421413741 + t * (-1.453152027 + t * 1.061405429))));
    let erfc_ax = poly * (-ax * ax).exp();
    if x >= 0.0 {
        erfc_ax
    } else {
        2.0 - erfc_ax
    }
}

/// Two-sided normal tail probability for a standardized statistic.
pub fn normal_two_sided_p(z: f64) -> f64 {
    erfc(z.abs() / std::f64::consts::SQRT_2)
}

/// Golden-section minimization of a unimodal function on `[lo, hi]`.
pub fn golden_section_min<F: FnMut(f64) -> f64>(
    mut f: F,
    mut lo: f64,
    mut hi: f64,
    tol: f64,
) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while hi - lo > tol {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = f(x2);
        }
    }
    let xm = 0.5 * (lo + hi);
    (xm, f(xm))
}

/// Sample mean and unbiased standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand::Rng;

    #[test]
    fn expm_matches_scalar_and_nilpotent() {
        let a = DMatrix::from_row_slice(1, 1, &[1.75]);
        assert!((expm(&a)[(0, 0)] - 1.75f64.exp()).abs() < 1e-14);
        // Nilpotent: exp([[0,1],[0,0]]) = [[1,1],[0,1]].
        let n = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let e = expm(&n);
        assert!((e - DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0])).abs().max() < 1e-15);
    }

    #[test]
    fn expm_of_flip_generator() {
        // G = [[-r0, r1],[r0, -r1]]: closed-form exponential.
        let (r0, r1) = (0.31, 0.07);
        let g = DMatrix::from_row_slice(2, 2, &[-r0, r1, r0, -r1]);
        let e = expm(&g);
        let big_r = r0 + r1;
        let mix = (1.0 - (-big_r).exp()) / big_r;
        assert!((e[(1, 0)] - r0 * mix).abs() < 1e-14);
        assert!((e[(0, 1)] - r1 * mix).abs() < 1e-14);
    }

    #[test]
    fn logm_inverts_expm_on_random_small_generators() {
        let mut r = rng::master(21);
        for dim in [2usize, 4, 8] {
            let g = DMatrix::from_fn(dim, dim, |_, _| r.gen_range(-0.3..0.3));
            let l = expm(&g);
            let back = logm(&l).unwrap();
            assert!(
                one_norm(&(&expm(&back) - &l)) < 1e-10,
                "round-trip drifted at dim {dim}"
            );
        }
    }

    #[test]
    fn logm_rejects_negative_eigenvalue() {
        let a = DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, 1.0]);
        assert!(logm(&a).is_err());
    }

    #[test]
    fn kron_order_puts_qubit_zero_least_significant() {
        // Block on qubit 0 = X, qubit 1 = I: matrix must flip index bit 0.
        let x = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let i = DMatrix::<f64>::identity(2, 2);
        let m = kron_qubitwise(&[x, i]);
        assert_eq!(m[(1, 0)], 1.0);
        assert_eq!(m[(3, 2)], 1.0);
        assert_eq!(m[(2, 0)], 0.0);
    }

    #[test]
    fn erfc_reference_points() {
        assert!((erfc(0.0) - 1.0).abs() < 1e-7);
        assert!((erfc(1.0) - 0.157_299_207_050_285).abs() < 2e-7);
        assert!((erfc(-1.0) - 1.842_700_792_949_715).abs() < 2e-7);
        assert!(erfc(5.0) < 2e-11);
    }

    #[test]
    fn golden_section_finds_parabola_min() {
        let (x, fx) = golden_section_min(|x| (x - 0.37).powi(2), -1.0, 2.0, 1e-10);
        assert!((x - 0.37).abs() < 1e-9);
        assert!(fx < 1e-18);
        // With a large constant offset, resolution near the minimum is
        // limited by cancellation in f, not by the bracket width.
        let (x, fx) = golden_section_min(|x| (x - 0.37).powi(2) + 2.0, -1.0, 2.0, 1e-10);
        assert!((x - 0.37).abs() < 1e-6);
        assert!((fx - 2.0).abs() < 1e-12);
    }
}
