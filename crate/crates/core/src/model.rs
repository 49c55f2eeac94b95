//! Model types shared by both learners, and the objective evaluators.
//!
//! A sample is represented as `x ≈ Σₖ (Σᵣ W(r,k) B(:,r)) * Z(:,k)`. Regrouping
//! the sums gives `Σᵣ B(:,r) * Y(:,r)` with `Y = Z Wᵀ`, so only `R`
//! convolutions are needed. The solvers work on the spectral form; the
//! spatial form is kept as an independent check.

use log::warn;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prox::ConstraintSetTag;
use crate::tensor::{
    circular_convolve_direct, crop, fft, fft_unchecked, inverse_fft, zero_pad, FilterSupport,
    SpatialArray, SpectralArray,
};
use crate::util::{compensated_sum, l1_norm};

/// Slack allowed when checking ball membership of stored filters and weights.
pub const FEASIBILITY_TOLERANCE: f64 = 1e-8;

/// PSNR reported for an exact reconstruction when averaging.
pub const PSNR_CAP_DB: f64 = 300.0;

/// A data sample and its spectrum.
#[derive(Debug, Clone, PartialEq)]
pub struct Signal {
    spatial: SpatialArray,
    spectral: SpectralArray,
}

impl Signal {
    pub fn new(x: SpatialArray) -> Result<Self> {
        let spectral = fft(&x)?;
        Ok(Self {
            spatial: x,
            spectral,
        })
    }

    pub fn spatial(&self) -> &SpatialArray {
        &self.spatial
    }

    pub fn spectral(&self) -> &SpectralArray {
        &self.spectral
    }

    pub fn shape(&self) -> &[usize] {
        self.spatial.shape()
    }

    pub fn len(&self) -> usize {
        self.spatial.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spatial.is_empty()
    }
}

/// Per-sample combination weights, `R × K`, stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<f64>,
    tag: ConstraintSetTag,
}

impl WeightMatrix {
    /// Build a weight matrix whose columns must already lie in the tag's ball.
    pub fn new(rows: usize, cols: usize, entries: Vec<f64>, tag: ConstraintSetTag) -> Result<Self> {
        let w = Self::from_raw(rows, cols, entries, tag)?;
        if !tag.is_weight_ball() {
            return Err(Error::invalid(format!("{:?} is not a weight constraint", tag.kind)));
        }
        if let Some(k) = (0..cols).find(|&k| tag.column_norm(&w.column(k)) > tag.radius + FEASIBILITY_TOLERANCE)
        {
            return Err(Error::invalid(format!(
                "weight column {k} lies outside the {:?} of radius {}",
                tag.kind, tag.radius
            )));
        }
        Ok(w)
    }

    /// Build a weight matrix without checking the ball constraint. The result
    /// is meant to be passed through [`crate::prox::project_weight_columns`].
    pub fn from_raw(
        rows: usize,
        cols: usize,
        entries: Vec<f64>,
        tag: ConstraintSetTag,
    ) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::invalid("weight matrix must be non-empty"));
        }
        if entries.len() != rows * cols {
            return Err(Error::ShapeMismatch {
                expected: vec![rows, cols],
                actual: vec![entries.len()],
            });
        }
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite weight"));
        }
        Ok(Self {
            rows,
            cols,
            entries,
            tag,
        })
    }

    pub fn zeros(rows: usize, cols: usize, tag: ConstraintSetTag) -> Self {
        Self {
            rows,
            cols,
            entries: vec![0.0; rows * cols],
            tag,
        }
    }

    /// Number of base filters `R`.
    pub fn rows(&self) -> usize {
        self.rows
    }

    /// Number of combined filters `K`.
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn tag(&self) -> &ConstraintSetTag {
        &self.tag
    }

    pub(crate) fn set_tag(&mut self, tag: ConstraintSetTag) {
        self.tag = tag;
    }

    #[inline]
    pub fn get(&self, r: usize, k: usize) -> f64 {
        self.entries[r * self.cols + k]
    }

    #[inline]
    pub fn set(&mut self, r: usize, k: usize, v: f64) {
        self.entries[r * self.cols + k] = v;
    }

    /// Row-major entries.
    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub(crate) fn entries_mut(&mut self) -> &mut [f64] {
        &mut self.entries
    }

    pub fn column(&self, k: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self.get(r, k)).collect()
    }

    /// Largest amount by which any column exceeds the ball radius (0 when
    /// feasible).
    pub fn max_violation(&self) -> f64 {
        (0..self.cols)
            .map(|k| (self.tag.column_norm(&self.column(k)) - self.tag.radius).max(0.0))
            .fold(0.0, f64::max)
    }
}

/// Spatial codes, one length-`P` map per combined filter, stored column by
/// column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodeTensor {
    shape: Vec<usize>,
    count: usize,
    data: Vec<f64>,
}

impl CodeTensor {
    pub fn zeros(shape: &[usize], count: usize) -> Self {
        let p: usize = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            count,
            data: vec![0.0; p * count],
        }
    }

    pub fn from_columns(columns: &[SpatialArray]) -> Result<Self> {
        let first = columns
            .first()
            .ok_or_else(|| Error::invalid("code tensor needs at least one column"))?;
        let shape = first.shape().to_vec();
        let mut data = Vec::with_capacity(first.len() * columns.len());
        for c in columns {
            if c.shape() != shape.as_slice() {
                return Err(Error::ShapeMismatch {
                    expected: shape,
                    actual: c.shape().to_vec(),
                });
            }
            data.extend_from_slice(c.data());
        }
        Ok(Self {
            shape,
            count: columns.len(),
            data,
        })
    }

    pub(crate) fn from_raw(shape: Vec<usize>, count: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>() * count, data.len());
        Self { shape, count, data }
    }

    /// Spatial shape of each code map.
    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    /// Number of code maps `K`.
    pub fn count(&self) -> usize {
        self.count
    }

    /// Length `P` of each code map.
    pub fn signal_len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn column(&self, k: usize) -> &[f64] {
        let p = self.signal_len();
        &self.data[k * p..(k + 1) * p]
    }

    pub fn column_array(&self, k: usize) -> SpatialArray {
        SpatialArray::from_parts_unchecked(self.shape.clone(), self.column(k).to_vec())
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn l1_norm(&self) -> f64 {
        l1_norm(&self.data)
    }

    /// Fraction of exactly-zero entries.
    pub fn sparsity(&self) -> f64 {
        self.data.iter().filter(|v| **v == 0.0).count() as f64 / self.data.len() as f64
    }
}

/// A bank of filters, stored as spectra of the zero-padded spatial filters.
///
/// Serves both as the `R` base filters of the sample-dependent model and as
/// the `K` shared filters of the baseline.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterBank {
    support: FilterSupport,
    spectra: Vec<SpectralArray>,
}

pub type BaseFilterBank = FilterBank;
pub type SharedDictionary = FilterBank;

impl FilterBank {
    /// Build from spatial filters with the support's filter extents. Every
    /// filter must have ℓ₂ norm at most one.
    pub fn from_spatial(filters: &[SpatialArray], support: &FilterSupport) -> Result<Self> {
        if filters.is_empty() {
            return Err(Error::invalid("filter bank needs at least one filter"));
        }
        let mut spectra = Vec::with_capacity(filters.len());
        for (r, f) in filters.iter().enumerate() {
            let norm = f.norm();
            if norm > 1.0 + FEASIBILITY_TOLERANCE {
                return Err(Error::invalid(format!(
                    "filter {r} has norm {norm}, outside the unit ball"
                )));
            }
            spectra.push(fft(&zero_pad(f, support)?)?);
        }
        Ok(Self {
            support: support.clone(),
            spectra,
        })
    }

    /// Build from spectra; each must be the transform of a real filter that
    /// lives on the support and has norm at most one.
    pub fn from_spectra(spectra: Vec<SpectralArray>, support: &FilterSupport) -> Result<Self> {
        if spectra.is_empty() {
            return Err(Error::invalid("filter bank needs at least one filter"));
        }
        for (r, s) in spectra.iter().enumerate() {
            if s.shape() != support.padded_extents() {
                return Err(Error::ShapeMismatch {
                    expected: support.padded_extents().to_vec(),
                    actual: s.shape().to_vec(),
                });
            }
            let spatial = inverse_fft(s)?;
            let on_support = crop(&spatial, support)?.norm();
            if on_support > 1.0 + FEASIBILITY_TOLERANCE {
                return Err(Error::invalid(format!(
                    "filter {r} has cropped norm {on_support}, outside the unit ball"
                )));
            }
            let off_support = (spatial.norm_sq() - on_support * on_support).max(0.0).sqrt();
            if off_support > 1e-8 * (1.0 + on_support) {
                return Err(Error::invalid(format!(
                    "filter {r} has energy {off_support:.3e} outside its support"
                )));
            }
        }
        Ok(Self {
            support: support.clone(),
            spectra,
        })
    }

    pub(crate) fn from_spectra_unchecked(spectra: Vec<SpectralArray>, support: FilterSupport) -> Self {
        Self { support, spectra }
    }

    pub fn support(&self) -> &FilterSupport {
        &self.support
    }

    pub fn count(&self) -> usize {
        self.spectra.len()
    }

    pub fn spectra(&self) -> &[SpectralArray] {
        &self.spectra
    }

    /// Spatial filters `C(F⁻¹(B̃(:,r)))`.
    pub fn spatial_filters(&self) -> Result<Vec<SpatialArray>> {
        self.spectra
            .iter()
            .map(|s| crop(&inverse_fft(s)?, &self.support))
            .collect()
    }

    /// Largest cropped spatial norm over the bank.
    pub fn max_filter_norm(&self) -> Result<f64> {
        Ok(self
            .spatial_filters()?
            .iter()
            .map(SpatialArray::norm)
            .fold(0.0, f64::max))
    }
}

/// The per-sample dictionary `Dᵢ = B Wᵢ` in the spatial domain.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleDependentDictionary {
    filters: Vec<SpatialArray>,
}

impl SampleDependentDictionary {
    pub fn new(bank: &BaseFilterBank, w: &WeightMatrix) -> Result<Self> {
        if w.rows() != bank.count() {
            return Err(Error::ShapeMismatch {
                expected: vec![bank.count(), w.cols()],
                actual: vec![w.rows(), w.cols()],
            });
        }
        let base = bank.spatial_filters()?;
        Ok(Self {
            filters: combine_filters(&base, w),
        })
    }

    pub fn filters(&self) -> &[SpatialArray] {
        &self.filters
    }

    pub fn max_filter_norm(&self) -> f64 {
        self.filters.iter().map(SpatialArray::norm).fold(0.0, f64::max)
    }
}

/// Columns of `B W` for spatial base filters `B`.
pub fn combine_filters(base: &[SpatialArray], w: &WeightMatrix) -> Vec<SpatialArray> {
    let shape = base[0].shape().to_vec();
    (0..w.cols())
        .map(|k| {
            let mut d = vec![0.0; base[0].len()];
            for (r, b) in base.iter().enumerate() {
                let c = w.get(r, k);
                for (di, bi) in d.iter_mut().zip(b.data()) {
                    *di += c * bi;
                }
            }
            SpatialArray::from_parts_unchecked(shape.clone(), d)
        })
        .collect()
}

fn check_model_shapes(bank: &FilterBank, w: &WeightMatrix, z: &CodeTensor) -> Result<()> {
    if w.rows() != bank.count() || w.cols() != z.count() {
        return Err(Error::ShapeMismatch {
            expected: vec![bank.count(), z.count()],
            actual: vec![w.rows(), w.cols()],
        });
    }
    if z.shape() != bank.support().padded_extents() {
        return Err(Error::ShapeMismatch {
            expected: bank.support().padded_extents().to_vec(),
            actual: z.shape().to_vec(),
        });
    }
    Ok(())
}

/// `Y = Z Wᵀ` in the spatial domain, as `R` columns of length `P`.
pub(crate) fn mix_codes(z: &[f64], p: usize, w: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut y = vec![0.0; rows * p];
    for r in 0..rows {
        let yr = &mut y[r * p..(r + 1) * p];
        for k in 0..cols {
            let c = w[r * cols + k];
            if c == 0.0 {
                continue;
            }
            for (yi, zi) in yr.iter_mut().zip(&z[k * p..(k + 1) * p]) {
                *yi += c * zi;
            }
        }
    }
    y
}

/// `Ỹ(:,r) = F(Z Wᵀ(:,r))` for every base filter `r`.
pub fn aggregate_codes(z: &CodeTensor, w: &WeightMatrix) -> Result<Vec<SpectralArray>> {
    if w.cols() != z.count() {
        return Err(Error::ShapeMismatch {
            expected: vec![w.rows(), z.count()],
            actual: vec![w.rows(), w.cols()],
        });
    }
    let p = z.signal_len();
    let y = mix_codes(z.data(), p, w.entries(), w.rows(), w.cols());
    Ok(y.chunks(p)
        .map(|col| fft_unchecked(&SpatialArray::from_parts_unchecked(z.shape().to_vec(), col.to_vec())))
        .collect())
}

/// `Σᵣ B̃(:,r) ⊙ Ỹ(:,r)`.
pub(crate) fn synthesize_spectrum(spectra: &[SpectralArray], y: &[SpectralArray]) -> Vec<Complex64> {
    let p = spectra[0].len();
    let mut out = vec![Complex64::new(0.0, 0.0); p];
    for (b, yr) in spectra.iter().zip(y) {
        for ((o, bi), yi) in out.iter_mut().zip(b.data()).zip(yr.data()) {
            *o += bi * yi;
        }
    }
    out
}

/// `½‖x − Σₖ (B Wᵀ)(:,k) * Z(:,k)‖²`, convolving directly in the spatial
/// domain with the combined filters.
pub fn spatial_objective(
    x: &SpatialArray,
    bank: &BaseFilterBank,
    w: &WeightMatrix,
    z: &CodeTensor,
) -> Result<f64> {
    check_model_shapes(bank, w, z)?;
    if x.shape() != z.shape() {
        return Err(Error::ShapeMismatch {
            expected: z.shape().to_vec(),
            actual: x.shape().to_vec(),
        });
    }
    let support = bank.support();
    let dict = combine_filters(&bank.spatial_filters()?, w);
    let mut residual = x.data().to_vec();
    for (k, d) in dict.iter().enumerate() {
        let conv = circular_convolve_direct(d, &z.column_array(k), support)?;
        for (r, c) in residual.iter_mut().zip(conv.data()) {
            *r -= c;
        }
    }
    Ok(0.5 * compensated_sum(residual.iter().map(|v| v * v)))
}

/// `(1/2P)‖x̃ − Σᵣ B̃(:,r) ⊙ Ỹ(:,r)‖²`.
pub fn spectral_objective(
    x_tilde: &SpectralArray,
    bank: &BaseFilterBank,
    w: &WeightMatrix,
    z: &CodeTensor,
) -> Result<f64> {
    check_model_shapes(bank, w, z)?;
    if x_tilde.shape() != z.shape() {
        return Err(Error::ShapeMismatch {
            expected: z.shape().to_vec(),
            actual: x_tilde.shape().to_vec(),
        });
    }
    let y = aggregate_codes(z, w)?;
    let recon = synthesize_spectrum(bank.spectra(), &y);
    let p = x_tilde.len() as f64;
    let err = compensated_sum(
        x_tilde
            .data()
            .iter()
            .zip(&recon)
            .map(|(x, r)| (x - r).norm_sqr()),
    );
    Ok(err / (2.0 * p))
}

/// Mean over samples of the spectral objective plus `β‖Zᵢ‖₁`.
pub fn full_objective(
    samples: &[Signal],
    bank: &BaseFilterBank,
    weights: &[WeightMatrix],
    codes: &[CodeTensor],
    beta: f64,
) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::invalid("objective over an empty sample set"));
    }
    if !(beta > 0.0) {
        return Err(Error::invalid(format!("beta must be positive, got {beta}")));
    }
    if weights.len() != samples.len() || codes.len() != samples.len() {
        return Err(Error::invalid(format!(
            "{} samples but {} weight matrices and {} code tensors",
            samples.len(),
            weights.len(),
            codes.len()
        )));
    }
    let terms = samples
        .iter()
        .zip(weights)
        .zip(codes)
        .map(|((x, w), z)| Ok(spectral_objective(x.spectral(), bank, w, z)? + beta * z.l1_norm()))
        .collect::<Result<Vec<f64>>>()?;
    Ok(compensated_sum(terms) / samples.len() as f64)
}

/// `Σₖ (B Wᵀ)(:,k) * Z(:,k)`, computed with `R` spectral products.
pub fn reconstruct(bank: &BaseFilterBank, w: &WeightMatrix, z: &CodeTensor) -> Result<SpatialArray> {
    check_model_shapes(bank, w, z)?;
    let y = aggregate_codes(z, w)?;
    let spectrum = synthesize_spectrum(bank.spectra(), &y);
    inverse_fft(&SpectralArray::from_parts_unchecked(z.shape().to_vec(), spectrum))
}

/// `20·log₁₀(√P / ‖x̂ − x‖₂)` for each pair; `+∞` for exact matches.
pub fn psnr_per_sample(
    reconstructions: &[SpatialArray],
    references: &[SpatialArray],
) -> Result<Vec<f64>> {
    if reconstructions.len() != references.len() {
        return Err(Error::invalid(format!(
            "{} reconstructions for {} references",
            reconstructions.len(),
            references.len()
        )));
    }
    if reconstructions.is_empty() {
        return Err(Error::invalid("PSNR over an empty set"));
    }
    reconstructions
        .iter()
        .zip(references)
        .map(|(xh, x)| {
            let err = xh.sub(x)?.norm();
            Ok(20.0 * ((x.len() as f64).sqrt() / err).log10())
        })
        .collect()
}

/// Mean PSNR in dB, with peak value 1.
///
/// Exact reconstructions are counted at [`PSNR_CAP_DB`] so the mean stays
/// finite; a warning is logged for each.
pub fn psnr(reconstructions: &[SpatialArray], references: &[SpatialArray]) -> Result<f64> {
    let per = psnr_per_sample(reconstructions, references)?;
    let capped: Vec<f64> = per
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            if v.is_infinite() {
                warn!("sample {i} is reconstructed exactly; counting it as {PSNR_CAP_DB} dB");
                PSNR_CAP_DB
            } else {
                v
            }
        })
        .collect();
    Ok(compensated_sum(capped.iter().copied()) / capped.len() as f64)
}

/// Memory ratio `(K/R)²` of the shared-dictionary statistics to the
/// base-filter statistics.
pub fn compression_ratio(k: usize, r: usize) -> Result<f64> {
    if r == 0 {
        return Err(Error::invalid("R must be at least 1"));
    }
    if r > k {
        return Err(Error::invalid(format!("R = {r} exceeds K = {k}")));
    }
    let ratio = k as f64 / r as f64;
    Ok(ratio * ratio)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prox::ConstraintSetTag;

    fn support_1d(m: usize, p: usize) -> FilterSupport {
        FilterSupport::new(vec![m], vec![p]).unwrap()
    }

    #[test]
    fn compression_ratio_values() {
        assert_eq!(compression_ratio(100, 10).unwrap(), 100.0);
        assert_eq!(compression_ratio(100, 5).unwrap(), 400.0);
        assert_eq!(compression_ratio(7, 7).unwrap(), 1.0);
        assert!(compression_ratio(3, 4).is_err());
        assert!(compression_ratio(3, 0).is_err());
    }

    #[test]
    fn psnr_values() {
        let x = SpatialArray::from_vec(vec![0.0; 4]).unwrap();
        // ‖e‖ = √P = 2 → 0 dB
        let e0 = SpatialArray::from_vec(vec![1.0, 1.0, 1.0, 1.0]).unwrap();
        // ‖e‖ = √P / 10 → 20 dB
        let e20 = SpatialArray::from_vec(vec![0.2, 0.0, 0.0, 0.0]).unwrap();
        let p = psnr_per_sample(&[e0.clone(), e20.clone()], &[x.clone(), x.clone()]).unwrap();
        assert!(p[0].abs() < 1e-12);
        assert!((p[1] - 20.0).abs() < 1e-12);
        assert!((psnr(&[e0, e20], &[x.clone(), x.clone()]).unwrap() - 10.0).abs() < 1e-12);
    }

    #[test]
    fn psnr_exact_match_is_capped() {
        let x = SpatialArray::from_vec(vec![1.0, 2.0]).unwrap();
        let per = psnr_per_sample(&[x.clone()], &[x.clone()]).unwrap();
        assert!(per[0].is_infinite());
        assert_eq!(psnr(&[x.clone()], &[x]).unwrap(), PSNR_CAP_DB);
    }

    #[test]
    fn psnr_errors() {
        let x = SpatialArray::from_vec(vec![1.0, 2.0]).unwrap();
        assert!(psnr(&[x.clone()], &[]).is_err());
        assert!(psnr(&[], &[]).is_err());
    }

    #[test]
    fn aggregate_zero_weights() {
        let z = CodeTensor::from_columns(&[
            SpatialArray::from_vec(vec![1.0, 2.0, 3.0, 4.0]).unwrap(),
            SpatialArray::from_vec(vec![-1.0, 0.5, 0.0, 2.0]).unwrap(),
        ])
        .unwrap();
        let w = WeightMatrix::zeros(2, 2, ConstraintSetTag::weight_l1());
        let y = aggregate_codes(&z, &w).unwrap();
        assert_eq!(y.len(), 2);
        assert!(y.iter().all(|s| s.norm() == 0.0));
    }

    #[test]
    fn aggregate_single_row_of_ones_sums_codes() {
        let a = SpatialArray::from_vec(vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let b = SpatialArray::from_vec(vec![-1.0, 0.5, 0.0, 2.0]).unwrap();
        let z = CodeTensor::from_columns(&[a.clone(), b.clone()]).unwrap();
        let w = WeightMatrix::from_raw(1, 2, vec![1.0, 1.0], ConstraintSetTag::weight_l2(1).unwrap())
            .unwrap();
        let y = aggregate_codes(&z, &w).unwrap();
        let expected = fft(&a.add(&b).unwrap()).unwrap();
        for (g, e) in y[0].data().iter().zip(expected.data()) {
            assert!((g - e).norm() < 1e-12);
        }
    }

    #[test]
    fn objective_with_zero_codes_is_half_energy() {
        let support = support_1d(2, 4);
        let bank = FilterBank::from_spatial(
            &[SpatialArray::from_vec(vec![0.6, 0.8]).unwrap()],
            &support,
        )
        .unwrap();
        let x = Signal::new(SpatialArray::from_vec(vec![1.0, -2.0, 0.5, 0.0]).unwrap()).unwrap();
        let w = WeightMatrix::zeros(1, 2, ConstraintSetTag::weight_l2(1).unwrap());
        let z = CodeTensor::zeros(&[4], 2);
        let half = 0.5 * x.spatial().norm_sq();
        assert!((spatial_objective(x.spatial(), &bank, &w, &z).unwrap() - half).abs() < 1e-12);
        assert!((spectral_objective(x.spectral(), &bank, &w, &z).unwrap() - half).abs() < 1e-12);
        assert!(
            (full_objective(&[x.clone()], &bank, &[w.clone()], &[z.clone()], 1.0).unwrap() - half)
                .abs()
                < 1e-12
        );
        assert!(full_objective(&[], &bank, &[], &[], 1.0).is_err());
        assert!(full_objective(&[x], &bank, &[w], &[z], 0.0).is_err());
    }

    #[test]
    fn impulse_filter_reproduces_codes() {
        let support = support_1d(1, 4);
        let bank = FilterBank::from_spatial(&[SpatialArray::from_vec(vec![1.0]).unwrap()], &support)
            .unwrap();
        let x = SpatialArray::from_vec(vec![0.3, -1.0, 2.0, 0.25]).unwrap();
        let w = WeightMatrix::new(1, 1, vec![1.0], ConstraintSetTag::weight_l2(1).unwrap()).unwrap();
        let z = CodeTensor::from_columns(&[x.clone()]).unwrap();
        assert!(spatial_objective(&x, &bank, &w, &z).unwrap() < 1e-24);
        let recon = reconstruct(&bank, &w, &z).unwrap();
        for (a, b) in recon.data().iter().zip(x.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn reconstruct_shifts_filter_copy() {
        let support = support_1d(2, 5);
        let f = SpatialArray::from_vec(vec![0.6, 0.8]).unwrap();
        let bank = FilterBank::from_spatial(&[f], &support).unwrap();
        let w = WeightMatrix::new(1, 1, vec![1.0], ConstraintSetTag::weight_l1()).unwrap();
        let mut code = vec![0.0; 5];
        code[2] = 1.0;
        let z = CodeTensor::from_columns(&[SpatialArray::from_vec(code).unwrap()]).unwrap();
        let recon = reconstruct(&bank, &w, &z).unwrap();
        let expected = [0.0, 0.0, 0.6, 0.8, 0.0];
        for (a, b) in recon.data().iter().zip(expected) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(reconstruct(&bank, &w, &CodeTensor::zeros(&[5], 1))
            .unwrap()
            .data()
            .iter()
            .all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn infeasible_inputs_rejected() {
        let support = support_1d(2, 4);
        let big = SpatialArray::from_vec(vec![1.0, 1.0]).unwrap();
        assert!(FilterBank::from_spatial(&[big], &support).is_err());
        let tag = ConstraintSetTag::weight_l2(2).unwrap();
        assert!(WeightMatrix::new(2, 1, vec![1.0, 0.0], tag).is_err());
        assert!(WeightMatrix::new(2, 1, vec![0.5, 0.5], tag).is_ok());
        assert!(WeightMatrix::from_raw(2, 2, vec![0.0; 3], tag).is_err());
    }

    #[test]
    fn from_spectra_rejects_off_support_energy() {
        let support = support_1d(2, 4);
        let spread = SpatialArray::from_vec(vec![0.1, 0.1, 0.1, 0.1]).unwrap();
        assert!(FilterBank::from_spectra(vec![fft(&spread).unwrap()], &support).is_err());
        let ok = SpatialArray::from_vec(vec![0.1, 0.1, 0.0, 0.0]).unwrap();
        assert!(FilterBank::from_spectra(vec![fft(&ok).unwrap()], &support).is_ok());
    }

    #[test]
    fn shape_errors() {
        let support = support_1d(2, 4);
        let bank = FilterBank::from_spatial(
            &[SpatialArray::from_vec(vec![0.6, 0.8]).unwrap()],
            &support,
        )
        .unwrap();
        let w = WeightMatrix::zeros(2, 2, ConstraintSetTag::weight_l1());
        let z = CodeTensor::zeros(&[4], 2);
        assert!(reconstruct(&bank, &w, &z).is_err());
        let w = WeightMatrix::zeros(1, 3, ConstraintSetTag::weight_l1());
        assert!(aggregate_codes(&z, &w).is_err());
    }
}
