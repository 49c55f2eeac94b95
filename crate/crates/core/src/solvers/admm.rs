//! ADMM engines working one frequency at a time.
//!
//! [`admm_quadratic_ball_solve`] minimizes the per-frequency quadratic model
//! built from history statistics, subject to every filter being a real,
//! support-limited, unit-norm spatial filter. It serves the base-filter update
//! and the shared-dictionary update alike.
//!
//! [`admm_code_solve`] solves the convex code problem for a fixed dictionary.
//! Its per-frequency operator is rank one, so each primal step is a
//! Sherman–Morrison update.
//!
//! Penalties act on spectra. By Parseval, a spectral penalty `ρ/(2P)‖·‖²`
//! equals the spatial penalty `ρ/2‖·‖²`, which is how the code solver mixes a
//! spectral primal with a spatial auxiliary. Residuals are reported in
//! spatial units (spectral norms divided by `√P`).

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{factor_hermitian, HermitianFactor};
use crate::model::{CodeTensor, FilterBank};
use crate::prox::{project_filter_to_unit_ball_with_support, shrink};
use crate::stats::HistoryStats;
use crate::tensor::{fft_unchecked, inverse_fft_real_part, FilterSupport, SpatialArray, SpectralArray};
use crate::util::compensated_sum;

/// Largest relative Hermitian defect accepted in the statistics.
const HERMITIAN_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdmmConfig {
    pub rho: f64,
    pub max_iterations: usize,
    /// Relative primal tolerance: stop once `‖primal − aux‖ ≤ tol·(1 + max(‖primal‖, ‖aux‖))`.
    pub primal_tolerance: f64,
    /// Relative dual tolerance: stop once `ρ‖Δaux‖ ≤ tol·(1 + ρ‖dual‖)`.
    pub dual_tolerance: f64,
    /// Residual balancing: scale ρ by 2 when one residual exceeds the other
    /// tenfold.
    pub adaptive_rho: bool,
}

impl AdmmConfig {
    /// Warm-started dictionary update inside the online loop.
    pub fn dictionary() -> Self {
        Self {
            rho: 1.0,
            max_iterations: 10,
            primal_tolerance: 1e-6,
            dual_tolerance: 1e-6,
            adaptive_rho: false,
        }
    }

    /// Convex code update.
    pub fn code() -> Self {
        Self {
            rho: 1.0,
            max_iterations: 10_000,
            primal_tolerance: 1e-7,
            dual_tolerance: 1e-7,
            adaptive_rho: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0) || !self.rho.is_finite() {
            return Err(Error::invalid(format!("rho must be positive, got {}", self.rho)));
        }
        if !(self.primal_tolerance > 0.0) || !(self.dual_tolerance > 0.0) {
            return Err(Error::invalid("ADMM tolerances must be positive"));
        }
        if self.max_iterations == 0 {
            return Err(Error::invalid("ADMM needs at least one iteration"));
        }
        Ok(())
    }
}

impl Default for AdmmConfig {
    fn default() -> Self {
        Self::dictionary()
    }
}

/// Primal, auxiliary and scaled dual variables, one spectrum per filter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmmState {
    pub primal: Vec<SpectralArray>,
    pub auxiliary: Vec<SpectralArray>,
    pub dual: Vec<SpectralArray>,
    pub rho: f64,
}

impl AdmmState {
    /// Start at a feasible bank with zero multipliers.
    pub fn from_bank(bank: &FilterBank, rho: f64) -> Self {
        let shape = bank.support().padded_extents();
        Self {
            primal: bank.spectra().to_vec(),
            auxiliary: bank.spectra().to_vec(),
            dual: vec![SpectralArray::zeros(shape); bank.count()],
            rho,
        }
    }

    pub fn filter_count(&self) -> usize {
        self.auxiliary.len()
    }

    fn check(&self, n: usize, shape: &[usize]) -> Result<()> {
        let ok = self.primal.len() == n
            && self.auxiliary.len() == n
            && self.dual.len() == n
            && self
                .primal
                .iter()
                .chain(&self.auxiliary)
                .chain(&self.dual)
                .all(|s| s.shape() == shape);
        if !ok {
            return Err(Error::invalid(format!(
                "ADMM state does not hold {n} spectra of shape {shape:?}"
            )));
        }
        if !(self.rho > 0.0) {
            return Err(Error::invalid("ADMM state has a non-positive rho"));
        }
        Ok(())
    }
}

/// Per-iteration record of an ADMM run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AdmmReport {
    pub iterations: usize,
    pub converged: bool,
    pub primal_residuals: Vec<f64>,
    pub dual_residuals: Vec<f64>,
    /// Objective after each iteration, evaluated at the feasible auxiliary.
    pub objectives: Vec<f64>,
    pub rho: f64,
}

impl AdmmReport {
    pub fn final_objective(&self) -> f64 {
        self.objectives.last().copied().unwrap_or(f64::NAN)
    }

    pub fn final_primal_residual(&self) -> f64 {
        self.primal_residuals.last().copied().unwrap_or(0.0)
    }

    pub fn final_dual_residual(&self) -> f64 {
        self.dual_residuals.last().copied().unwrap_or(0.0)
    }

    /// CSV rows `iteration,objective,primal_residual,dual_residual`.
    pub fn trace_csv(&self) -> String {
        let mut out = String::from("iteration,objective,primal_residual,dual_residual\n");
        for i in 0..self.objectives.len() {
            out.push_str(&format!(
                "{},{:e},{:e},{:e}\n",
                i + 1,
                self.objectives[i],
                self.primal_residuals[i],
                self.dual_residuals[i]
            ));
        }
        out
    }
}

/// Mean data-fit `(1/2P)[Σₚ b H bᴴ − 2 Re(b G) + mean‖x̃‖²]` of the spectra
/// `b(p) = (B̃(p,1), …, B̃(p,n))` under the statistics.
pub fn dictionary_objective(stats: &HistoryStats, spectra: &[SpectralArray]) -> f64 {
    let n = stats.dim();
    let p_len = stats.frequencies();
    let mut b = vec![Complex64::new(0.0, 0.0); n];
    let terms = (0..p_len).map(|p| {
        for (bi, s) in b.iter_mut().zip(spectra) {
            *bi = s.data()[p];
        }
        let h = stats.second_moment(p);
        let g = stats.cross_term(p);
        let mut quad = 0.0;
        for i in 0..n {
            let mut row = Complex64::new(0.0, 0.0);
            for j in 0..n {
                row += h[i * n + j] * b[j].conj();
            }
            quad += (b[i] * row).re;
        }
        let lin: f64 = (0..n).map(|i| (b[i] * g[i]).re).sum();
        quad - 2.0 * lin
    });
    (compensated_sum(terms) + stats.energy()) / (2.0 * p_len as f64)
}

fn frobenius(spectra: &[SpectralArray]) -> f64 {
    spectra.iter().map(SpectralArray::norm_sq).sum::<f64>().sqrt()
}

fn frobenius_diff(a: &[SpectralArray], b: &[SpectralArray]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            x.data()
                .iter()
                .zip(y.data())
                .map(|(u, v)| (u - v).norm_sqr())
                .sum::<f64>()
        })
        .sum::<f64>()
        .sqrt()
}

/// Factor `conj(H(:,:,p)) + ρI` for every frequency.
fn factor_all(stats: &HistoryStats, rho: f64) -> Result<Vec<HermitianFactor>> {
    let n = stats.dim();
    let mut a = vec![Complex64::new(0.0, 0.0); n * n];
    (0..stats.frequencies())
        .map(|p| {
            for (dst, src) in a.iter_mut().zip(stats.second_moment(p)) {
                *dst = src.conj();
            }
            for i in 0..n {
                a[i * n + i] += rho;
            }
            factor_hermitian(&a, n)
        })
        .collect()
}

/// Minimize the quadratic dictionary model subject to the filter constraint.
///
/// Iterates from `warm`; returns the feasible auxiliary variable as the filter
/// bank, the final state (to warm-start the next call) and the residual
/// history. Reaching `max_iterations` is not an error here: the online
/// learner deliberately runs a few iterations per sample.
pub fn admm_quadratic_ball_solve(
    stats: &HistoryStats,
    support: &FilterSupport,
    warm: AdmmState,
    config: &AdmmConfig,
) -> Result<(FilterBank, AdmmState, AdmmReport)> {
    config.validate()?;
    let n = stats.dim();
    let shape = support.padded_extents();
    if stats.shape() != shape {
        return Err(Error::ShapeMismatch {
            expected: shape.to_vec(),
            actual: stats.shape().to_vec(),
        });
    }
    warm.check(n, shape)?;
    let defect = stats.max_hermitian_defect();
    if defect > HERMITIAN_TOLERANCE {
        return Err(Error::invalid(format!(
            "second-moment statistics are not Hermitian (defect {defect:.3e})"
        )));
    }

    let p_len = stats.frequencies();
    let sqrt_p = (p_len as f64).sqrt();
    let AdmmState {
        mut primal,
        mut auxiliary,
        mut dual,
        mut rho,
    } = warm;
    let mut factors = factor_all(stats, rho)?;
    let mut report = AdmmReport::default();
    let mut rhs = vec![Complex64::new(0.0, 0.0); n];

    for iter in 0..config.max_iterations {
        // primal: (conj(H) + ρI) b = conj(G) + ρ(v − u), per frequency
        for p in 0..p_len {
            let g = stats.cross_term(p);
            for r in 0..n {
                rhs[r] = g[r].conj() + rho * (auxiliary[r].data()[p] - dual[r].data()[p]);
            }
            factors[p].solve_in_place(&mut rhs);
            for r in 0..n {
                primal[r].data_mut()[p] = rhs[r];
            }
        }

        // auxiliary: projection of b + u onto the constraint set
        let previous = std::mem::take(&mut auxiliary);
        auxiliary = primal
            .iter()
            .zip(&dual)
            .map(|(b, u)| {
                let mut shifted = b.clone();
                for (s, ui) in shifted.data_mut().iter_mut().zip(u.data()) {
                    *s += ui;
                }
                project_filter_to_unit_ball_with_support(&shifted, support)
            })
            .collect::<Result<_>>()?;

        // scaled dual ascent
        for r in 0..n {
            let (b, v) = (primal[r].data(), auxiliary[r].data());
            for (p, u) in dual[r].data_mut().iter_mut().enumerate() {
                *u += b[p] - v[p];
            }
        }

        let primal_res = frobenius_diff(&primal, &auxiliary) / sqrt_p;
        let dual_res = rho * frobenius_diff(&auxiliary, &previous) / sqrt_p;
        report.primal_residuals.push(primal_res);
        report.dual_residuals.push(dual_res);
        report.objectives.push(dictionary_objective(stats, &auxiliary));
        report.iterations = iter + 1;

        let primal_scale = 1.0 + frobenius(&primal).max(frobenius(&auxiliary)) / sqrt_p;
        let dual_scale = 1.0 + rho * frobenius(&dual) / sqrt_p;
        if primal_res <= config.primal_tolerance * primal_scale
            && dual_res <= config.dual_tolerance * dual_scale
        {
            report.converged = true;
            break;
        }

        if config.adaptive_rho {
            let factor = if primal_res > 10.0 * dual_res {
                2.0
            } else if dual_res > 10.0 * primal_res {
                0.5
            } else {
                1.0
            };
            if factor != 1.0 {
                rho *= factor;
                for u in dual.iter_mut() {
                    u.data_mut().iter_mut().for_each(|v| *v /= factor);
                }
                factors = factor_all(stats, rho)?;
            }
        }
    }
    report.rho = rho;

    let bank = FilterBank::from_spectra_unchecked(auxiliary.clone(), support.clone());
    Ok((
        bank,
        AdmmState {
            primal,
            auxiliary,
            dual,
            rho,
        },
        report,
    ))
}

/// `(1/2P)‖x̃ − Σₖ D̃(:,k) ⊙ F(Z(:,k))‖² + β‖Z‖₁`.
pub fn code_objective(
    x_tilde: &SpectralArray,
    dict: &[SpectralArray],
    z: &CodeTensor,
    beta: f64,
) -> Result<f64> {
    check_code_shapes(x_tilde, dict, z.count(), z.shape())?;
    let p = x_tilde.len();
    let mut recon = vec![Complex64::new(0.0, 0.0); p];
    for (k, d) in dict.iter().enumerate() {
        let zk = fft_unchecked(&z.column_array(k));
        for ((o, di), zi) in recon.iter_mut().zip(d.data()).zip(zk.data()) {
            *o += di * zi;
        }
    }
    let fit = compensated_sum(
        x_tilde
            .data()
            .iter()
            .zip(&recon)
            .map(|(x, r)| (x - r).norm_sqr()),
    ) / (2.0 * p as f64);
    Ok(fit + beta * z.l1_norm())
}

fn check_code_shapes(
    x_tilde: &SpectralArray,
    dict: &[SpectralArray],
    count: usize,
    shape: &[usize],
) -> Result<()> {
    if dict.is_empty() || dict.len() != count {
        return Err(Error::invalid(format!(
            "dictionary has {} filters but the codes have {count} maps",
            dict.len()
        )));
    }
    for s in dict.iter().chain(std::iter::once(x_tilde)) {
        if s.shape() != shape {
            return Err(Error::ShapeMismatch {
                expected: shape.to_vec(),
                actual: s.shape().to_vec(),
            });
        }
    }
    Ok(())
}

/// Result of [`admm_code_solve`].
#[derive(Debug, Clone, PartialEq)]
pub struct CodeSolveReport {
    pub admm: AdmmReport,
}

/// Solve the convex code problem for a fixed dictionary.
///
/// Splits `Z̃ = F(U)`: a Sherman–Morrison solve per frequency for `Z̃`,
/// soft-thresholding for the spatial `U`, then a dual step. Returns the
/// sparse `U`. Failing to meet both tolerances within `max_iterations` is a
/// [`Error::Convergence`].
pub fn admm_code_solve(
    x_tilde: &SpectralArray,
    dict: &[SpectralArray],
    beta: f64,
    config: &AdmmConfig,
    init: Option<&CodeTensor>,
) -> Result<(CodeTensor, CodeSolveReport)> {
    config.validate()?;
    if !(beta > 0.0) {
        return Err(Error::invalid(format!("beta must be positive, got {beta}")));
    }
    let shape = x_tilde.shape().to_vec();
    let k_count = dict.len();
    check_code_shapes(x_tilde, dict, k_count, &shape)?;
    let p_len = x_tilde.len();
    let mut u = match init {
        Some(z) => {
            if z.count() != k_count || z.shape() != shape.as_slice() {
                return Err(Error::ShapeMismatch {
                    expected: vec![p_len, k_count],
                    actual: vec![z.signal_len(), z.count()],
                });
            }
            z.data().to_vec()
        }
        None => vec![0.0; p_len * k_count],
    };
    let mut lambda = vec![0.0; p_len * k_count];
    let mut z_spatial = vec![0.0; p_len * k_count];
    let mut rho = config.rho;

    // ‖d(p)‖² and conj(d(p)) x̃(p) do not change across iterations
    let d_norm_sq: Vec<f64> = (0..p_len)
        .map(|p| dict.iter().map(|d| d.data()[p].norm_sqr()).sum())
        .collect();

    let mut report = AdmmReport::default();
    let mut target = vec![SpectralArray::zeros(&shape); k_count];
    let mut z_tilde = vec![SpectralArray::zeros(&shape); k_count];
    let mut c = vec![Complex64::new(0.0, 0.0); k_count];

    for iter in 0..config.max_iterations {
        // spectra of U − Λ
        for k in 0..k_count {
            let col: Vec<f64> = (0..p_len)
                .map(|i| u[k * p_len + i] - lambda[k * p_len + i])
                .collect();
            target[k] = fft_unchecked(&SpatialArray::from_parts_unchecked(shape.clone(), col));
        }
        // (conj(d) dᵀ + ρI) z = conj(d) x̃ + ρ w, by Sherman–Morrison
        for p in 0..p_len {
            let x = x_tilde.data()[p];
            let mut dtc = Complex64::new(0.0, 0.0);
            for k in 0..k_count {
                let d = dict[k].data()[p];
                c[k] = d.conj() * x + rho * target[k].data()[p];
                dtc += d * c[k];
            }
            let coef = dtc / (rho + d_norm_sq[p]);
            for k in 0..k_count {
                let d = dict[k].data()[p];
                z_tilde[k].data_mut()[p] = (c[k] - d.conj() * coef) / rho;
            }
        }
        for k in 0..k_count {
            let zk = inverse_fft_real_part(&z_tilde[k]);
            z_spatial[k * p_len..(k + 1) * p_len].copy_from_slice(zk.data());
        }

        let previous = u.clone();
        let tau = beta / rho;
        for i in 0..u.len() {
            u[i] = shrink(z_spatial[i] + lambda[i], tau);
        }
        for i in 0..u.len() {
            lambda[i] += z_spatial[i] - u[i];
        }

        let primal_res = norm_diff(&z_spatial, &u);
        let dual_res = rho * norm_diff(&u, &previous);
        report.primal_residuals.push(primal_res);
        report.dual_residuals.push(dual_res);
        report.iterations = iter + 1;

        let primal_scale = 1.0 + norm(&z_spatial).max(norm(&u));
        let dual_scale = 1.0 + rho * norm(&lambda);
        if primal_res <= config.primal_tolerance * primal_scale
            && dual_res <= config.dual_tolerance * dual_scale
        {
            report.converged = true;
            break;
        }

        if config.adaptive_rho {
            let factor = if primal_res > 10.0 * dual_res {
                2.0
            } else if dual_res > 10.0 * primal_res {
                0.5
            } else {
                1.0
            };
            if factor != 1.0 {
                rho *= factor;
                lambda.iter_mut().for_each(|v| *v /= factor);
            }
        }
    }
    report.rho = rho;

    let codes = CodeTensor::from_raw(shape, k_count, u);
    report.objectives.push(code_objective(x_tilde, dict, &codes, beta)?);
    if !report.converged {
        return Err(Error::Convergence {
            iterations: report.iterations,
            primal: report.final_primal_residual(),
            dual: report.final_dual_residual(),
        });
    }
    Ok((codes, CodeSolveReport { admm: report }))
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn norm_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}
