//! Dense factorizations for the small Hermitian systems solved once per
//! frequency.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Pivots below this (relative to the largest diagonal entry) make Cholesky
/// fall back to LDLᴴ, and make LDLᴴ report a singular system.
pub const PIVOT_THRESHOLD: f64 = 1e-12;

/// Factorization of an `n × n` Hermitian matrix stored row-major.
#[derive(Debug, Clone)]
pub enum HermitianFactor {
    /// `A = L Lᴴ`, `L` lower triangular with a real positive diagonal.
    Cholesky { n: usize, l: Vec<Complex64> },
    /// `A = L D Lᴴ`, `L` unit lower triangular, `D` real diagonal.
    Ldl {
        n: usize,
        l: Vec<Complex64>,
        d: Vec<f64>,
    },
}

/// Largest deviation from Hermitian symmetry, relative to `1 + max|a_ij|`.
pub fn hermitian_defect(a: &[Complex64], n: usize) -> f64 {
    let scale = 1.0 + a.iter().fold(0.0f64, |m, v| m.max(v.norm()));
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((a[i * n + j] - a[j * n + i].conj()).norm());
        }
    }
    worst / scale
}

fn diag_scale(a: &[Complex64], n: usize) -> f64 {
    (0..n).map(|i| a[i * n + i].re.abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE)
}

/// Factor a Hermitian matrix, trying Cholesky first.
pub fn factor_hermitian(a: &[Complex64], n: usize) -> Result<HermitianFactor> {
    debug_assert_eq!(a.len(), n * n);
    match cholesky(a, n) {
        Some(l) => Ok(HermitianFactor::Cholesky { n, l }),
        None => ldl(a, n),
    }
}

fn cholesky(a: &[Complex64], n: usize) -> Option<Vec<Complex64>> {
    let threshold = PIVOT_THRESHOLD * diag_scale(a, n);
    let mut l = vec![Complex64::new(0.0, 0.0); n * n];
    for j in 0..n {
        let mut d = a[j * n + j].re;
        for k in 0..j {
            d -= l[j * n + k].norm_sqr();
        }
        if !(d > threshold) {
            return None;
        }
        let djj = d.sqrt();
        l[j * n + j] = Complex64::new(djj, 0.0);
        for i in j + 1..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k].conj();
            }
            l[i * n + j] = s / djj;
        }
    }
    Some(l)
}

fn ldl(a: &[Complex64], n: usize) -> Result<HermitianFactor> {
    let threshold = PIVOT_THRESHOLD * diag_scale(a, n);
    let mut l = vec![Complex64::new(0.0, 0.0); n * n];
    let mut d = vec![0.0; n];
    for j in 0..n {
        let mut dj = a[j * n + j].re;
        for k in 0..j {
            dj -= l[j * n + k].norm_sqr() * d[k];
        }
        if dj.abs() <= threshold {
            return Err(Error::numerical(format!(
                "singular {n}x{n} system: pivot {dj:.3e} at column {j}"
            )));
        }
        d[j] = dj;
        l[j * n + j] = Complex64::new(1.0, 0.0);
        for i in j + 1..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k].conj() * d[k];
            }
            l[i * n + j] = s / dj;
        }
    }
    Ok(HermitianFactor::Ldl { n, l, d })
}

impl HermitianFactor {
    /// Overwrite `b` with `A⁻¹ b`.
    pub fn solve_in_place(&self, b: &mut [Complex64]) {
        match self {
            HermitianFactor::Cholesky { n, l } => {
                forward(l, *n, b, false);
                backward(l, *n, b, false);
            }
            HermitianFactor::Ldl { n, l, d } => {
                forward(l, *n, b, true);
                for (bi, di) in b.iter_mut().zip(d) {
                    *bi /= di;
                }
                backward(l, *n, b, true);
            }
        }
    }

    pub fn is_cholesky(&self) -> bool {
        matches!(self, HermitianFactor::Cholesky { .. })
    }
}

/// Solve `L y = b` in place.
fn forward(l: &[Complex64], n: usize, b: &mut [Complex64], unit_diagonal: bool) {
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * n + k] * b[k];
        }
        b[i] = if unit_diagonal { s } else { s / l[i * n + i].re };
    }
}

/// Solve `Lᴴ x = y` in place.
fn backward(l: &[Complex64], n: usize, b: &mut [Complex64], unit_diagonal: bool) {
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in i + 1..n {
            s -= l[k * n + i].conj() * b[k];
        }
        b[i] = if unit_diagonal { s } else { s / l[i * n + i].re };
    }
}

/// True when `A + tol·I` admits a Cholesky factorization, i.e. the smallest
/// eigenvalue of `A` is at least `-tol`.
pub fn is_positive_semidefinite(a: &[Complex64], n: usize, tol: f64) -> bool {
    let mut shifted = a.to_vec();
    for i in 0..n {
        shifted[i * n + i] += tol;
    }
    let mut l = vec![Complex64::new(0.0, 0.0); n * n];
    for j in 0..n {
        let mut d = shifted[j * n + j].re;
        for k in 0..j {
            d -= l[j * n + k].norm_sqr();
        }
        if d < 0.0 {
            return false;
        }
        if d == 0.0 {
            // semidefinite boundary: remaining column must vanish
            for i in j + 1..n {
                let mut s = shifted[i * n + j];
                for k in 0..j {
                    s -= l[i * n + k] * l[j * n + k].conj();
                }
                if s.norm() > 0.0 {
                    return false;
                }
            }
            continue;
        }
        let djj = d.sqrt();
        l[j * n + j] = Complex64::new(djj, 0.0);
        for i in j + 1..n {
            let mut s = shifted[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k].conj();
            }
            l[i * n + j] = s / djj;
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn matvec(a: &[Complex64], n: usize, x: &[Complex64]) -> Vec<Complex64> {
        (0..n)
            .map(|i| (0..n).map(|j| a[i * n + j] * x[j]).sum())
            .collect()
    }

    fn random_hpd(n: usize, shift: f64, seed: u64) -> Vec<Complex64> {
        let mut rng = crate::util::seeded_rng(seed);
        let g: Vec<Complex64> = (0..n * n)
            .map(|_| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        let mut a = vec![c(0.0, 0.0); n * n];
        for i in 0..n {
            for j in 0..n {
                a[i * n + j] = (0..n).map(|k| g[i * n + k] * g[j * n + k].conj()).sum();
            }
            a[i * n + i] += shift;
        }
        a
    }

    #[test]
    fn cholesky_solves_random_systems() {
        for n in 1..7 {
            let a = random_hpd(n, 0.5, n as u64);
            let f = factor_hermitian(&a, n).unwrap();
            assert!(f.is_cholesky());
            let x: Vec<Complex64> = (0..n).map(|i| c(i as f64 + 1.0, -0.5 * i as f64)).collect();
            let mut b = matvec(&a, n, &x);
            f.solve_in_place(&mut b);
            for (got, want) in b.iter().zip(&x) {
                assert!((got - want).norm() < 1e-10, "n={n}: {got} vs {want}");
            }
        }
    }

    #[test]
    fn ldl_handles_indefinite_systems() {
        // Hermitian, invertible, indefinite
        let a = vec![c(1.0, 0.0), c(2.0, 1.0), c(2.0, -1.0), c(1.0, 0.0)];
        assert!(hermitian_defect(&a, 2) < 1e-15);
        let f = factor_hermitian(&a, 2).unwrap();
        assert!(!f.is_cholesky());
        let x = vec![c(1.0, 1.0), c(-2.0, 0.5)];
        let mut b = matvec(&a, 2, &x);
        f.solve_in_place(&mut b);
        for (got, want) in b.iter().zip(&x) {
            assert!((got - want).norm() < 1e-12);
        }
    }

    #[test]
    fn singular_system_is_an_error() {
        let a = vec![c(1.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(1.0, 0.0)];
        assert!(matches!(factor_hermitian(&a, 2), Err(Error::Numerical(_))));
    }

    #[test]
    fn psd_detection() {
        let rank_one = vec![c(1.0, 0.0), c(0.0, 1.0), c(0.0, -1.0), c(1.0, 0.0)];
        assert!(is_positive_semidefinite(&rank_one, 2, 1e-10));
        let indefinite = vec![c(1.0, 0.0), c(2.0, 0.0), c(2.0, 0.0), c(1.0, 0.0)];
        assert!(!is_positive_semidefinite(&indefinite, 2, 1e-10));
    }
}
