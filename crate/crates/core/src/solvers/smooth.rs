//! The smooth data-fit term of the per-sample `(W, Z)` problem and its
//! gradients.
//!
//! With `Y = Z Wᵀ` (spatial, `R` columns) and residual `e = Σᵣ bᵣ * yᵣ − x`,
//! the unmasked term is `½‖e‖² = (1/2P)‖Σᵣ B̃ᵣ ⊙ Ỹᵣ − x̃‖²`. Back-propagating
//! through the circular convolutions gives
//!
//! ```text
//! gᵣ       = F⁻¹(conj(B̃ᵣ) ⊙ ẽ)          (spatial, real)
//! ∇Z(:,k)  = Σᵣ W(r,k) gᵣ
//! ∇W(r,k)  = ⟨gᵣ, Z(:,k)⟩
//! ```
//!
//! With a mask `m` the term is `½‖m ⊙ (x − Σᵣ bᵣ * yᵣ)‖²`, evaluated in the
//! spatial domain, and `ẽ` becomes the transform of `m² ⊙ e`. See
//! `docs/gradient.md` for the derivation.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::model::mix_codes;
use crate::tensor::{fft_unchecked, inverse_fft_real_part, SpatialArray, SpectralArray};

/// A differentiable function of `(W, Z)`, with `W` row-major `R × K` and `Z`
/// stored column by column (`K` maps of length `P`).
pub trait SmoothPart {
    /// `(R, K, P)`.
    fn dims(&self) -> (usize, usize, usize);

    fn value(&self, w: &[f64], z: &[f64]) -> Result<f64>;

    /// Value, writing gradients into `grad_w` and `grad_z`.
    fn value_and_gradient(
        &self,
        w: &[f64],
        z: &[f64],
        grad_w: &mut [f64],
        grad_z: &mut [f64],
    ) -> Result<f64>;
}

/// Data fit of one sample against fixed base-filter spectra, optionally
/// weighted by a spatial mask.
#[derive(Debug, Clone, Copy)]
pub struct SampleFit<'a> {
    spectra: &'a [SpectralArray],
    x: &'a SpatialArray,
    x_tilde: &'a SpectralArray,
    mask: Option<&'a [f64]>,
    k: usize,
}

impl<'a> SampleFit<'a> {
    pub fn new(
        spectra: &'a [SpectralArray],
        x: &'a SpatialArray,
        x_tilde: &'a SpectralArray,
        k: usize,
    ) -> Result<Self> {
        if spectra.is_empty() {
            return Err(Error::invalid("at least one base filter is required"));
        }
        for s in spectra.iter().chain(std::iter::once(x_tilde)) {
            if s.shape() != x.shape() {
                return Err(Error::ShapeMismatch {
                    expected: x.shape().to_vec(),
                    actual: s.shape().to_vec(),
                });
            }
        }
        if k == 0 {
            return Err(Error::invalid("K must be at least 1"));
        }
        Ok(Self {
            spectra,
            x,
            x_tilde,
            mask: None,
            k,
        })
    }

    /// Weight the fidelity term elementwise by `mask` in the spatial domain.
    pub fn with_mask(mut self, mask: &'a [f64]) -> Result<Self> {
        if mask.len() != self.x.len() {
            return Err(Error::ShapeMismatch {
                expected: self.x.shape().to_vec(),
                actual: vec![mask.len()],
            });
        }
        self.mask = Some(mask);
        Ok(self)
    }

    pub fn spectra(&self) -> &'a [SpectralArray] {
        self.spectra
    }

    pub fn signal(&self) -> &'a SpatialArray {
        self.x
    }

    pub fn signal_spectrum(&self) -> &'a SpectralArray {
        self.x_tilde
    }

    fn shape(&self) -> &[usize] {
        self.x.shape()
    }

    /// `Σᵣ B̃ᵣ ⊙ F(yᵣ)` for spatial `Y = Z Wᵀ`.
    fn synthesize(&self, w: &[f64], z: &[f64]) -> Vec<Complex64> {
        let (r, k, p) = self.dims();
        let y = mix_codes(z, p, w, r, k);
        let mut out = vec![Complex64::new(0.0, 0.0); p];
        for (yr, b) in y.chunks(p).zip(self.spectra) {
            let yt = fft_unchecked(&SpatialArray::from_parts_unchecked(
                self.shape().to_vec(),
                yr.to_vec(),
            ));
            for ((o, bi), yi) in out.iter_mut().zip(b.data()).zip(yt.data()) {
                *o += bi * yi;
            }
        }
        out
    }

    /// Value and the residual spectrum `ẽ` that drives the gradient.
    fn value_and_residual(&self, w: &[f64], z: &[f64]) -> (f64, Vec<Complex64>) {
        let p = self.x.len();
        let recon = self.synthesize(w, z);
        match self.mask {
            None => {
                let e: Vec<Complex64> = recon
                    .iter()
                    .zip(self.x_tilde.data())
                    .map(|(r, x)| r - x)
                    .collect();
                let value = e.iter().map(|v| v.norm_sqr()).sum::<f64>() / (2.0 * p as f64);
                (value, e)
            }
            Some(mask) => {
                let spatial = inverse_fft_real_part(&SpectralArray::from_parts_unchecked(
                    self.shape().to_vec(),
                    recon,
                ));
                let mut value = 0.0;
                let weighted: Vec<f64> = spatial
                    .data()
                    .iter()
                    .zip(self.x.data())
                    .zip(mask)
                    .map(|((r, x), m)| {
                        let d = m * (r - x);
                        value += d * d;
                        m * d
                    })
                    .collect();
                let e = fft_unchecked(&SpatialArray::from_parts_unchecked(
                    self.shape().to_vec(),
                    weighted,
                ));
                (0.5 * value, e.into_data())
            }
        }
    }
}

impl SmoothPart for SampleFit<'_> {
    fn dims(&self) -> (usize, usize, usize) {
        (self.spectra.len(), self.k, self.x.len())
    }

    fn value(&self, w: &[f64], z: &[f64]) -> Result<f64> {
        let p = self.x.len();
        let recon = self.synthesize(w, z);
        let value = match self.mask {
            None => {
                recon
                    .iter()
                    .zip(self.x_tilde.data())
                    .map(|(r, x)| (r - x).norm_sqr())
                    .sum::<f64>()
                    / (2.0 * p as f64)
            }
            Some(mask) => {
                let spatial = inverse_fft_real_part(&SpectralArray::from_parts_unchecked(
                    self.shape().to_vec(),
                    recon,
                ));
                0.5 * spatial
                    .data()
                    .iter()
                    .zip(self.x.data())
                    .zip(mask)
                    .map(|((r, x), m)| (m * (r - x)).powi(2))
                    .sum::<f64>()
            }
        };
        if !value.is_finite() {
            return Err(Error::numerical("non-finite data-fit value"));
        }
        Ok(value)
    }

    fn value_and_gradient(
        &self,
        w: &[f64],
        z: &[f64],
        grad_w: &mut [f64],
        grad_z: &mut [f64],
    ) -> Result<f64> {
        let (r_count, k_count, p) = self.dims();
        let (value, e) = self.value_and_residual(w, z);
        grad_w.iter_mut().for_each(|g| *g = 0.0);
        grad_z.iter_mut().for_each(|g| *g = 0.0);
        let mut back = vec![Complex64::new(0.0, 0.0); p];
        for (r, b) in self.spectra.iter().enumerate() {
            for ((o, bi), ei) in back.iter_mut().zip(b.data()).zip(&e) {
                *o = bi.conj() * ei;
            }
            let g = inverse_fft_real_part(&SpectralArray::from_parts_unchecked(
                self.shape().to_vec(),
                back.clone(),
            ));
            let g = g.data();
            for k in 0..k_count {
                let zk = &z[k * p..(k + 1) * p];
                grad_w[r * k_count + k] = g.iter().zip(zk).map(|(a, b)| a * b).sum();
                let c = w[r * k_count + k];
                if c != 0.0 {
                    for (gz, gi) in grad_z[k * p..(k + 1) * p].iter_mut().zip(g) {
                        *gz += c * gi;
                    }
                }
            }
        }
        debug_assert_eq!(grad_w.len(), r_count * k_count);
        if !value.is_finite()
            || grad_w.iter().chain(grad_z.iter()).any(|g| !g.is_finite())
        {
            return Err(Error::numerical("non-finite data-fit value or gradient"));
        }
        Ok(value)
    }
}
