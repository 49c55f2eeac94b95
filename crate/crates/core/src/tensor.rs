//! n-D arrays, discrete Fourier transforms, zero-padding and cropping.
//!
//! All arrays are stored row-major with the first axis slowest. That flat
//! index is also the canonical "frequency index" used by the history
//! statistics. Transforms are unnormalized in the forward direction and
//! carry the `1/P` factor in the inverse, so that `‖fft(x)‖² / P == ‖x‖²`.
//! Convolution is circular.

use std::cell::RefCell;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative bound on the imaginary residue accepted by [`inverse_fft`].
pub const IMAGINARY_RESIDUE_TOLERANCE: f64 = 1e-8;

/// A real-valued n-D array.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpatialArray {
    shape: Vec<usize>,
    data: Vec<f64>,
}

/// A complex-valued n-D array holding a full (not half) spectrum.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralArray {
    shape: Vec<usize>,
    data: Vec<Complex64>,
}

/// Filter extents `M` together with the padded signal extents `P`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FilterSupport {
    extents: Vec<usize>,
    padded: Vec<usize>,
}

fn check_shape(shape: &[usize], len: usize) -> Result<()> {
    if shape.is_empty() {
        return Err(Error::invalid("array must have at least one axis"));
    }
    if shape.contains(&0) {
        return Err(Error::invalid(format!("zero-length axis in shape {shape:?}")));
    }
    let total: usize = shape.iter().product();
    if total != len {
        return Err(Error::invalid(format!(
            "shape {shape:?} holds {total} entries but {len} were given"
        )));
    }
    Ok(())
}

impl SpatialArray {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        check_shape(&shape, data.len())?;
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite entry at index {i}")));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let len = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![0.0; len],
        }
    }

    /// 1-D convenience constructor.
    pub fn from_vec(data: Vec<f64>) -> Result<Self> {
        Self::new(vec![data.len()], data)
    }

    /// Unit impulse at the origin.
    pub fn impulse(shape: &[usize]) -> Self {
        let mut a = Self::zeros(shape);
        a.data[0] = 1.0;
        a
    }

    pub(crate) fn from_parts_unchecked(shape: Vec<usize>, data: Vec<f64>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Self { shape, data }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn norm_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn scale(&self, alpha: f64) -> Self {
        self.map(|v| alpha * v)
    }

    /// `self - other`, elementwise.
    pub fn sub(&self, other: &Self) -> Result<Self> {
        same_shape(&self.shape, &other.shape)?;
        Ok(Self {
            shape: self.shape.clone(),
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        })
    }

    /// `self + other`, elementwise.
    pub fn add(&self, other: &Self) -> Result<Self> {
        same_shape(&self.shape, &other.shape)?;
        Ok(Self {
            shape: self.shape.clone(),
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        })
    }

    /// Elementwise product.
    pub fn mul(&self, other: &Self) -> Result<Self> {
        same_shape(&self.shape, &other.shape)?;
        Ok(Self {
            shape: self.shape.clone(),
            data: self.data.iter().zip(&other.data).map(|(a, b)| a * b).collect(),
        })
    }
}

impl SpectralArray {
    pub fn new(shape: Vec<usize>, data: Vec<Complex64>) -> Result<Self> {
        check_shape(&shape, data.len())?;
        if let Some(i) = data.iter().position(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::invalid(format!("non-finite spectral entry at index {i}")));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let len = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![Complex64::new(0.0, 0.0); len],
        }
    }

    pub fn ones(shape: &[usize]) -> Self {
        let len = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![Complex64::new(1.0, 0.0); len],
        }
    }

    pub(crate) fn from_parts_unchecked(shape: Vec<usize>, data: Vec<Complex64>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Self { shape, data }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<Complex64> {
        self.data
    }

    pub fn norm_sq(&self) -> f64 {
        self.data.iter().map(|v| v.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn conj(&self) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| v.conj()).collect(),
        }
    }
}

impl FilterSupport {
    pub fn new(extents: Vec<usize>, padded: Vec<usize>) -> Result<Self> {
        if extents.is_empty() || extents.len() != padded.len() {
            return Err(Error::invalid(format!(
                "filter extents {extents:?} and padded extents {padded:?} must have the same, non-zero rank"
            )));
        }
        if extents.contains(&0) {
            return Err(Error::invalid("filter extents must be positive"));
        }
        if let Some(axis) = extents.iter().zip(&padded).position(|(m, p)| m > p) {
            return Err(Error::invalid(format!(
                "filter extent {} exceeds padded extent {} on axis {axis}",
                extents[axis], padded[axis]
            )));
        }
        Ok(Self { extents, padded })
    }

    /// Filter extents per axis.
    pub fn extents(&self) -> &[usize] {
        &self.extents
    }

    /// Padded signal extents per axis.
    pub fn padded_extents(&self) -> &[usize] {
        &self.padded
    }

    /// Number of filter taps `M`.
    pub fn filter_len(&self) -> usize {
        self.extents.iter().product()
    }

    /// Number of padded entries `P`.
    pub fn padded_len(&self) -> usize {
        self.padded.iter().product()
    }

    /// Flat (padded, row-major) indices of the filter support, in the
    /// row-major order of the filter itself.
    pub fn support_indices(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.filter_len());
        let mut idx = vec![0usize; self.extents.len()];
        loop {
            let mut flat = 0;
            for (axis, &i) in idx.iter().enumerate() {
                flat = flat * self.padded[axis] + i;
            }
            out.push(flat);
            // odometer increment, last axis fastest
            let mut axis = self.extents.len();
            loop {
                if axis == 0 {
                    return out;
                }
                axis -= 1;
                idx[axis] += 1;
                if idx[axis] < self.extents[axis] {
                    break;
                }
                idx[axis] = 0;
            }
        }
    }
}

fn same_shape(a: &[usize], b: &[usize]) -> Result<()> {
    if a != b {
        return Err(Error::ShapeMismatch {
            expected: a.to_vec(),
            actual: b.to_vec(),
        });
    }
    Ok(())
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn plan(len: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        if inverse {
            p.plan_fft_inverse(len)
        } else {
            p.plan_fft_forward(len)
        }
    })
}

/// In-place unnormalized n-D transform over row-major data.
fn transform_in_place(shape: &[usize], data: &mut [Complex64], inverse: bool) {
    let ndim = shape.len();
    for axis in 0..ndim {
        let n = shape[axis];
        if n == 1 {
            continue;
        }
        let fft = plan(n, inverse);
        let stride: usize = shape[axis + 1..].iter().product();
        if stride == 1 {
            // contiguous lines
            fft.process(data);
            continue;
        }
        let block = n * stride;
        let mut line = vec![Complex64::new(0.0, 0.0); n];
        let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
        for outer in (0..data.len()).step_by(block) {
            for inner in 0..stride {
                let base = outer + inner;
                for (i, v) in line.iter_mut().enumerate() {
                    *v = data[base + i * stride];
                }
                fft.process_with_scratch(&mut line, &mut scratch);
                for (i, v) in line.iter().enumerate() {
                    data[base + i * stride] = *v;
                }
            }
        }
    }
}

/// Forward n-D DFT, unnormalized.
pub fn fft(a: &SpatialArray) -> Result<SpectralArray> {
    if let Some(i) = a.data.iter().position(|v| !v.is_finite()) {
        return Err(Error::invalid(format!("non-finite entry at index {i}")));
    }
    Ok(fft_unchecked(a))
}

pub(crate) fn fft_unchecked(a: &SpatialArray) -> SpectralArray {
    let mut data: Vec<Complex64> = a.data.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    transform_in_place(&a.shape, &mut data, false);
    SpectralArray::from_parts_unchecked(a.shape.clone(), data)
}

/// Forward n-D DFT of a complex array.
pub fn fft_complex(s: &SpectralArray) -> SpectralArray {
    let mut data = s.data.clone();
    transform_in_place(&s.shape, &mut data, false);
    SpectralArray::from_parts_unchecked(s.shape.clone(), data)
}

/// Inverse n-D DFT (with the `1/P` factor), keeping the complex result.
pub fn inverse_fft_complex(s: &SpectralArray) -> SpectralArray {
    let mut data = s.data.clone();
    transform_in_place(&s.shape, &mut data, true);
    let scale = 1.0 / data.len() as f64;
    for v in &mut data {
        *v *= scale;
    }
    SpectralArray::from_parts_unchecked(s.shape.clone(), data)
}

/// Inverse n-D DFT of the spectrum of a real array.
///
/// The imaginary part of the result must be rounding noise: if its norm
/// exceeds `1e-8 · ‖s‖` the spectrum was not Hermitian-symmetric and a
/// numerical error is returned.
pub fn inverse_fft(s: &SpectralArray) -> Result<SpatialArray> {
    if s.data.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
        return Err(Error::invalid("non-finite spectral entry"));
    }
    let z = inverse_fft_complex(s);
    let imag: f64 = z.data.iter().map(|v| v.im * v.im).sum::<f64>().sqrt();
    let bound = IMAGINARY_RESIDUE_TOLERANCE * s.norm();
    if imag > bound {
        return Err(Error::numerical(format!(
            "inverse transform left an imaginary residue of {imag:.3e} (bound {bound:.3e})"
        )));
    }
    Ok(SpatialArray::from_parts_unchecked(
        z.shape,
        z.data.into_iter().map(|v| v.re).collect(),
    ))
}

/// Real part of the inverse transform, without the residue check.
pub(crate) fn inverse_fft_real_part(s: &SpectralArray) -> SpatialArray {
    let z = inverse_fft_complex(s);
    SpatialArray::from_parts_unchecked(z.shape, z.data.into_iter().map(|v| v.re).collect())
}

/// Embed a filter-shaped array in the leading corner of a zero array with the
/// padded extents.
pub fn zero_pad(a: &SpatialArray, support: &FilterSupport) -> Result<SpatialArray> {
    same_shape(&support.extents, &a.shape)?;
    let mut out = vec![0.0; support.padded_len()];
    for (src, dst) in support.support_indices().into_iter().enumerate() {
        out[dst] = a.data[src];
    }
    Ok(SpatialArray::from_parts_unchecked(support.padded.clone(), out))
}

/// The crop operator: the leading-corner sub-array with the filter extents.
pub fn crop(a: &SpatialArray, support: &FilterSupport) -> Result<SpatialArray> {
    same_shape(&support.padded, &a.shape)?;
    let data = support
        .support_indices()
        .into_iter()
        .map(|i| a.data[i])
        .collect();
    Ok(SpatialArray::from_parts_unchecked(support.extents.clone(), data))
}

/// Elementwise complex product.
pub fn hadamard(s1: &SpectralArray, s2: &SpectralArray) -> Result<SpectralArray> {
    same_shape(&s1.shape, &s2.shape)?;
    Ok(SpectralArray::from_parts_unchecked(
        s1.shape.clone(),
        s1.data.iter().zip(&s2.data).map(|(a, b)| a * b).collect(),
    ))
}

/// Circular convolution via the convolution theorem.
pub fn circular_convolve(a: &SpatialArray, b: &SpatialArray) -> Result<SpatialArray> {
    same_shape(&a.shape, &b.shape)?;
    let prod = hadamard(&fft(a)?, &fft(b)?)?;
    Ok(inverse_fft_real_part(&prod))
}

/// Circular convolution of a filter (leading-corner support) with a padded
/// signal, summed directly in the spatial domain: `O(M·P)` work, no
/// transforms.
pub fn circular_convolve_direct(
    filter: &SpatialArray,
    signal: &SpatialArray,
    support: &FilterSupport,
) -> Result<SpatialArray> {
    same_shape(&support.extents, &filter.shape)?;
    same_shape(&support.padded, &signal.shape)?;
    let dims = &support.padded;
    let ndim = dims.len();
    let taps: Vec<(Vec<usize>, f64)> = multi_indices(&support.extents)
        .zip(filter.data.iter().copied())
        .filter(|(_, w)| *w != 0.0)
        .collect();
    let mut out = vec![0.0; signal.len()];
    for (flat, n) in multi_indices(dims).enumerate() {
        let mut acc = 0.0;
        for (m, w) in &taps {
            let mut src = 0;
            for axis in 0..ndim {
                let i = (n[axis] + dims[axis] - m[axis]) % dims[axis];
                src = src * dims[axis] + i;
            }
            acc += w * signal.data[src];
        }
        out[flat] = acc;
    }
    Ok(SpatialArray::from_parts_unchecked(dims.clone(), out))
}

/// Row-major multi-indices over `extents`.
fn multi_indices(extents: &[usize]) -> impl Iterator<Item = Vec<usize>> + '_ {
    let total: usize = extents.iter().product();
    let mut idx = vec![0usize; extents.len()];
    (0..total).map(move |step| {
        if step > 0 {
            let mut axis = extents.len();
            while axis > 0 {
                axis -= 1;
                idx[axis] += 1;
                if idx[axis] < extents[axis] {
                    break;
                }
                idx[axis] = 0;
            }
        }
        idx.clone()
    })
}
