//! Plain ADMM on the per-sample `(W, Z)` problem, splitting `Ỹ = F(Z Wᵀ)`.
//!
//! Kept only as a comparison baseline: the bilinear constraint is nonconvex
//! and the constraint violation `‖Ỹ − F(Z Wᵀ)‖²` need not vanish. Each
//! iteration
//!
//! ```text
//! Ỹ      ← argmin (1/2P)‖x̃ − Σᵣ B̃ᵣ ⊙ Ỹᵣ‖² + (ρ/2P)‖Ỹ − F(Z Wᵀ) + Λ‖²
//! Z      ← soft(Z − η_Z ρ (Z Wᵀ − T) W, η_Z β),       T = F⁻¹(Ỹ + Λ)
//! W      ← Π_W(W − η_W ρ (Z Wᵀ − T)ᵀ Z)
//! Λ      ← Λ + Ỹ − F(Z Wᵀ)
//! ```
//!
//! with `η_Z = 1/(ρ‖W‖²_F)` and `η_W = 1/(ρ‖Z‖²_F)`. The `Ỹ` step is a
//! Sherman–Morrison solve per frequency.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{aggregate_codes, mix_codes, CodeTensor, WeightMatrix, FEASIBILITY_TOLERANCE};
use crate::prox::{project_weight_columns_in_place, shrink, ConstraintSetTag};
use crate::solvers::smooth::{SampleFit, SmoothPart};
use crate::tensor::{fft_unchecked, inverse_fft_real_part, SpatialArray, SpectralArray};
use crate::util::l1_norm;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdmmWzConfig {
    pub rho: f64,
    pub max_iterations: usize,
}

impl Default for AdmmWzConfig {
    fn default() -> Self {
        Self {
            rho: 1.0,
            max_iterations: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdmmWzResult {
    pub weights: WeightMatrix,
    pub codes: CodeTensor,
    /// `f(W, Z) + β‖Z‖₁` after each iteration.
    pub objectives: Vec<f64>,
    /// `‖Ỹ − F(Z Wᵀ)‖²_F` after each iteration.
    pub violations: Vec<f64>,
}

impl AdmmWzResult {
    pub fn final_violation(&self) -> f64 {
        self.violations.last().copied().unwrap_or(0.0)
    }

    /// CSV rows `iteration,objective,violation`.
    pub fn trace_csv(&self) -> String {
        let mut out = String::from("iteration,objective,violation\n");
        for (i, (f, v)) in self.objectives.iter().zip(&self.violations).enumerate() {
            out.push_str(&format!("{},{:e},{:e}\n", i + 1, f, v));
        }
        out
    }
}

/// `‖Ỹ − F(Z Wᵀ)‖²_F` between `Ỹ` computed through [`aggregate_codes`] and the
/// direct transform of each spatial column of `Z Wᵀ`. For a pair produced by a
/// method that keeps `Ỹ` implicit (niAPG) this sits at rounding level.
pub fn consistency_residual(y_tilde: &[SpectralArray], w: &WeightMatrix, z: &CodeTensor) -> Result<f64> {
    if y_tilde.len() != w.rows() {
        return Err(Error::invalid(format!(
            "{} spectra for {} base filters",
            y_tilde.len(),
            w.rows()
        )));
    }
    let p = z.signal_len();
    let y = mix_codes(z.data(), p, w.entries(), w.rows(), w.cols());
    let mut total = 0.0;
    for (yt, col) in y_tilde.iter().zip(y.chunks(p)) {
        if yt.shape() != z.shape() {
            return Err(Error::ShapeMismatch {
                expected: z.shape().to_vec(),
                actual: yt.shape().to_vec(),
            });
        }
        let direct = fft_unchecked(&SpatialArray::from_parts_unchecked(z.shape().to_vec(), col.to_vec()));
        total += yt
            .data()
            .iter()
            .zip(direct.data())
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>();
    }
    Ok(total)
}

/// Run the baseline ADMM from a feasible start.
pub fn admm_wz_solve(
    fit: &SampleFit<'_>,
    tag: &ConstraintSetTag,
    beta: f64,
    init_w: &WeightMatrix,
    init_z: &CodeTensor,
    config: &AdmmWzConfig,
) -> Result<AdmmWzResult> {
    if !(config.rho > 0.0) || config.max_iterations == 0 {
        return Err(Error::invalid("ADMM needs rho > 0 and at least one iteration"));
    }
    if !(beta > 0.0) {
        return Err(Error::invalid(format!("beta must be positive, got {beta}")));
    }
    let (r_count, k_count, p) = fit.dims();
    let spectra = fit.spectra();
    let x_tilde = fit.signal_spectrum();
    if init_w.rows() != r_count || init_w.cols() != k_count {
        return Err(Error::ShapeMismatch {
            expected: vec![r_count, k_count],
            actual: vec![init_w.rows(), init_w.cols()],
        });
    }
    if init_z.count() != k_count || init_z.signal_len() != p {
        return Err(Error::ShapeMismatch {
            expected: vec![k_count, p],
            actual: vec![init_z.count(), init_z.signal_len()],
        });
    }
    let mut w = init_w.clone();
    w.set_tag(*tag);
    if w.max_violation() > FEASIBILITY_TOLERANCE {
        return Err(Error::invalid("initial weights lie outside the constraint set"));
    }
    let shape = init_z.shape().to_vec();
    let rho = config.rho;
    let mut z = init_z.data().to_vec();
    let mut y_tilde = aggregate_codes(init_z, &w)?;
    let mut lambda = vec![SpectralArray::zeros(&shape); r_count];
    let mut objectives = Vec::with_capacity(config.max_iterations);
    let mut violations = Vec::with_capacity(config.max_iterations);

    let norm_b: Vec<f64> = (0..p)
        .map(|i| spectra.iter().map(|b| b.data()[i].norm_sqr()).sum())
        .collect();

    for _ in 0..config.max_iterations {
        // Ỹ step against the current F(Z Wᵀ)
        let zw = aggregate_codes(&CodeTensor::from_raw(shape.clone(), k_count, z.clone()), &w)?;
        let mut c = vec![Complex64::new(0.0, 0.0); r_count];
        for i in 0..p {
            for r in 0..r_count {
                let target = zw[r].data()[i] - lambda[r].data()[i];
                c[r] = spectra[r].data()[i].conj() * x_tilde.data()[i] + target * rho;
            }
            let btc: Complex64 = (0..r_count).map(|r| spectra[r].data()[i] * c[r]).sum();
            let coef = btc / (rho + norm_b[i]);
            for r in 0..r_count {
                y_tilde[r].data_mut()[i] = (c[r] - spectra[r].data()[i].conj() * coef) / rho;
            }
        }

        // linearized (Z, W) step towards T = F⁻¹(Ỹ + Λ)
        let t: Vec<f64> = y_tilde
            .iter()
            .zip(&lambda)
            .flat_map(|(y, l)| {
                let sum: Vec<Complex64> = y.data().iter().zip(l.data()).map(|(a, b)| a + b).collect();
                inverse_fft_real_part(&SpectralArray::from_parts_unchecked(shape.clone(), sum)).into_data()
            })
            .collect();
        let residual = |z: &[f64], w: &WeightMatrix| -> Vec<f64> {
            let mut y = mix_codes(z, p, w.entries(), r_count, k_count);
            for (a, b) in y.iter_mut().zip(&t) {
                *a -= b;
            }
            y
        };

        let w_norm_sq: f64 = w.entries().iter().map(|v| v * v).sum();
        if w_norm_sq > 0.0 {
            let e = residual(&z, &w);
            let eta = 1.0 / (rho * w_norm_sq);
            for k in 0..k_count {
                for r in 0..r_count {
                    let c = w.get(r, k);
                    if c == 0.0 {
                        continue;
                    }
                    let er = &e[r * p..(r + 1) * p];
                    for (zi, ei) in z[k * p..(k + 1) * p].iter_mut().zip(er) {
                        *zi -= eta * rho * c * ei;
                    }
                }
            }
            for zi in &mut z {
                *zi = shrink(*zi, eta * beta);
            }
        }

        let z_norm_sq: f64 = z.iter().map(|v| v * v).sum();
        if z_norm_sq > 0.0 {
            let e = residual(&z, &w);
            let eta = 1.0 / (rho * z_norm_sq);
            let entries = w.entries_mut();
            for r in 0..r_count {
                let er = &e[r * p..(r + 1) * p];
                for k in 0..k_count {
                    let g: f64 = er.iter().zip(&z[k * p..(k + 1) * p]).map(|(a, b)| a * b).sum();
                    entries[r * k_count + k] -= eta * rho * g;
                }
            }
            project_weight_columns_in_place(&mut w, tag)?;
        }

        // dual step and diagnostics
        let codes = CodeTensor::from_raw(shape.clone(), k_count, z.clone());
        let zw = aggregate_codes(&codes, &w)?;
        let mut violation = 0.0;
        for r in 0..r_count {
            for ((l, y), d) in lambda[r].data_mut().iter_mut().zip(y_tilde[r].data()).zip(zw[r].data()) {
                let gap = y - d;
                *l += gap;
                violation += gap.norm_sqr();
            }
        }
        let objective = fit.value(w.entries(), &z)? + beta * l1_norm(&z);
        if !objective.is_finite() || !violation.is_finite() {
            return Err(Error::numerical("non-finite value in ADMM on (W, Z)"));
        }
        objectives.push(objective);
        violations.push(violation);
    }

    Ok(AdmmWzResult {
        weights: w,
        codes: CodeTensor::from_raw(shape, k_count, z),
        objectives,
        violations,
    })
}
