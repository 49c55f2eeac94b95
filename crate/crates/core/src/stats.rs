//! Per-frequency history statistics for the online dictionary updates.
//!
//! After `t` samples, for every frequency `p`:
//!
//! ```text
//! H_t(:,:,p) = (1/t) Σᵢ ỹᵢ(p) ỹᵢ(p)ᴴ      (n × n, Hermitian PSD)
//! G_t(:,p)   = (1/t) Σᵢ conj(x̃ᵢ(p)) ỹᵢ(p)  (length n)
//! ```
//!
//! where `ỹᵢ(p)` collects the `n` aggregated code spectra of sample `i` at
//! `p`. Both are maintained as running means. The same structure serves the
//! base-filter learner (`n = R`) and the shared-dictionary baseline
//! (`n = K`).

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{hermitian_defect, is_positive_semidefinite};
use crate::tensor::SpectralArray;

#[derive(Debug, Clone, PartialEq)]
pub struct HistoryStats {
    dim: usize,
    shape: Vec<usize>,
    h: Vec<Complex64>,
    g: Vec<Complex64>,
    /// Running mean of `‖x̃ᵢ‖²`; turns the quadratic model into the actual
    /// mean data-fit value.
    energy: f64,
    t: u64,
}

/// Byte counts of the statistics buffers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StatsBytes {
    /// The `n × n × P` second-moment array.
    pub second_moment: usize,
    /// The `n × P` cross-term array.
    pub cross_term: usize,
}

impl StatsBytes {
    pub fn total(&self) -> usize {
        self.second_moment + self.cross_term
    }
}

impl HistoryStats {
    /// Zeroed statistics for `dim` filters over spectra of the given shape.
    pub fn new(dim: usize, shape: &[usize]) -> Self {
        let p: usize = shape.iter().product();
        Self {
            dim,
            shape: shape.to_vec(),
            h: vec![Complex64::new(0.0, 0.0); dim * dim * p],
            g: vec![Complex64::new(0.0, 0.0); dim * p],
            energy: 0.0,
            t: 0,
        }
    }

    /// Rebuild statistics from raw buffers (frequency-major, row-major
    /// `n × n` blocks for the second moments).
    pub fn from_moments(
        dim: usize,
        shape: Vec<usize>,
        h: Vec<Complex64>,
        g: Vec<Complex64>,
        energy: f64,
        t: u64,
    ) -> Result<Self> {
        let p: usize = shape.iter().product();
        if h.len() != dim * dim * p || g.len() != dim * p {
            return Err(Error::invalid(format!(
                "statistics payload has {} + {} entries, expected {} + {}",
                h.len(),
                g.len(),
                dim * dim * p,
                dim * p
            )));
        }
        Ok(Self {
            dim,
            shape,
            h,
            g,
            energy,
            t,
        })
    }

    /// Number of filters `n` the statistics are kept for.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    /// Number of frequencies `P`.
    pub fn frequencies(&self) -> usize {
        self.shape.iter().product()
    }

    /// Samples seen so far.
    pub fn count(&self) -> u64 {
        self.t
    }

    pub fn energy(&self) -> f64 {
        self.energy
    }

    /// `H(:,:,p)`, row-major `n × n`.
    pub fn second_moment(&self, p: usize) -> &[Complex64] {
        let n2 = self.dim * self.dim;
        &self.h[p * n2..(p + 1) * n2]
    }

    /// `G(:,p)`.
    pub fn cross_term(&self, p: usize) -> &[Complex64] {
        &self.g[p * self.dim..(p + 1) * self.dim]
    }

    /// Entire second-moment buffer, frequency-major.
    pub fn second_moments(&self) -> &[Complex64] {
        &self.h
    }

    /// Entire cross-term buffer, frequency-major.
    pub fn cross_terms(&self) -> &[Complex64] {
        &self.g
    }

    /// Fold one sample into the running means.
    pub fn update(&mut self, y: &[SpectralArray], x_tilde: &SpectralArray) -> Result<()> {
        if y.len() != self.dim {
            return Err(Error::invalid(format!(
                "expected {} aggregated spectra, got {}",
                self.dim,
                y.len()
            )));
        }
        for s in y.iter().chain(std::iter::once(x_tilde)) {
            if s.shape() != self.shape.as_slice() {
                return Err(Error::ShapeMismatch {
                    expected: self.shape.clone(),
                    actual: s.shape().to_vec(),
                });
            }
        }
        self.t += 1;
        let t = self.t as f64;
        let keep = (t - 1.0) / t;
        let add = 1.0 / t;
        let n = self.dim;
        let mut col = vec![Complex64::new(0.0, 0.0); n];
        for p in 0..self.frequencies() {
            for (c, yr) in col.iter_mut().zip(y) {
                *c = yr.data()[p];
            }
            let h = &mut self.h[p * n * n..(p + 1) * n * n];
            for i in 0..n {
                for j in 0..n {
                    h[i * n + j] = h[i * n + j] * keep + col[i] * col[j].conj() * add;
                }
            }
            let xc = x_tilde.data()[p].conj();
            let g = &mut self.g[p * n..(p + 1) * n];
            for i in 0..n {
                g[i] = g[i] * keep + xc * col[i] * add;
            }
        }
        self.energy = self.energy * keep + x_tilde.norm_sq() * add;
        Ok(())
    }

    pub fn bytes(&self) -> StatsBytes {
        let entry = std::mem::size_of::<Complex64>();
        StatsBytes {
            second_moment: self.h.len() * entry,
            cross_term: self.g.len() * entry,
        }
    }

    /// Largest Hermitian defect over all frequencies.
    pub fn max_hermitian_defect(&self) -> f64 {
        (0..self.frequencies())
            .map(|p| hermitian_defect(self.second_moment(p), self.dim))
            .fold(0.0, f64::max)
    }

    /// Every `H(:,:,p)` has smallest eigenvalue at least `-tol`.
    pub fn is_positive_semidefinite(&self, tol: f64) -> bool {
        (0..self.frequencies()).all(|p| is_positive_semidefinite(self.second_moment(p), self.dim, tol))
    }
}
