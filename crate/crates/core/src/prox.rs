//! Projections onto the filter and weight constraint sets, and the
//! soft-thresholding prox of the ℓ₁ penalty on codes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::WeightMatrix;
use crate::tensor::{
    crop, fft_unchecked, inverse_fft_real_part, zero_pad, FilterSupport, SpatialArray,
    SpectralArray,
};

/// Which ball a set of columns is constrained to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintKind {
    /// Unit ℓ₂ ball on spatial filters.
    FilterUnitBall,
    /// ℓ₁ ball of radius 1 on each weight column.
    WeightL1Ball,
    /// ℓ₂ ball of radius `1/√R` on each weight column.
    WeightL2Ball,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstraintSetTag {
    pub kind: ConstraintKind,
    pub radius: f64,
}

impl ConstraintSetTag {
    pub fn filter_unit_ball() -> Self {
        Self {
            kind: ConstraintKind::FilterUnitBall,
            radius: 1.0,
        }
    }

    pub fn weight_l1() -> Self {
        Self {
            kind: ConstraintKind::WeightL1Ball,
            radius: 1.0,
        }
    }

    /// The ℓ₂ weight ball for `r` base filters.
    pub fn weight_l2(r: usize) -> Result<Self> {
        if r == 0 {
            return Err(Error::invalid("R must be at least 1"));
        }
        Ok(Self {
            kind: ConstraintKind::WeightL2Ball,
            radius: 1.0 / (r as f64).sqrt(),
        })
    }

    /// Build the weight tag for a short name (`l1` or `l2`).
    pub fn weight_from_name(name: &str, r: usize) -> Result<Self> {
        match name {
            "l1" | "L1" => Ok(Self::weight_l1()),
            "l2" | "L2" => Self::weight_l2(r),
            other => Err(Error::invalid(format!("unknown weight constraint `{other}`"))),
        }
    }

    pub fn is_weight_ball(&self) -> bool {
        matches!(
            self.kind,
            ConstraintKind::WeightL1Ball | ConstraintKind::WeightL2Ball
        )
    }

    /// Check the tag against the configured number of base filters.
    pub fn validate(&self, r: usize) -> Result<()> {
        if !(self.radius > 0.0) || !self.radius.is_finite() {
            return Err(Error::invalid(format!("radius must be positive, got {}", self.radius)));
        }
        if self.kind == ConstraintKind::WeightL2Ball {
            let expected = 1.0 / (r as f64).sqrt();
            if (self.radius - expected).abs() > 1e-12 {
                return Err(Error::invalid(format!(
                    "l2 weight ball radius {} does not equal 1/sqrt(R) = {expected}",
                    self.radius
                )));
            }
        }
        Ok(())
    }

    /// Norm of a column under this tag's ball (ℓ₁ or ℓ₂).
    pub fn column_norm(&self, v: &[f64]) -> f64 {
        match self.kind {
            ConstraintKind::WeightL1Ball => v.iter().map(|x| x.abs()).sum(),
            _ => v.iter().map(|x| x * x).sum::<f64>().sqrt(),
        }
    }
}

/// Elementwise `sign(z)·max(|z|−τ, 0)`.
pub fn soft_threshold(z: &SpatialArray, tau: f64) -> Result<SpatialArray> {
    if !(tau >= 0.0) {
        return Err(Error::invalid(format!("threshold must be nonnegative, got {tau}")));
    }
    Ok(z.map(|v| shrink(v, tau)))
}

#[inline]
pub(crate) fn shrink(v: f64, tau: f64) -> f64 {
    if v > tau {
        v - tau
    } else if v < -tau {
        v + tau
    } else {
        0.0
    }
}

fn check_finite(v: &[f64]) -> Result<()> {
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::invalid("non-finite entry in projected vector"));
    }
    Ok(())
}

fn check_radius(radius: f64) -> Result<()> {
    if !(radius > 0.0) || !radius.is_finite() {
        return Err(Error::invalid(format!("radius must be positive, got {radius}")));
    }
    Ok(())
}

/// Euclidean projection onto `{u : ‖u‖₂ ≤ radius}`. Points on or inside the
/// ball are returned unchanged.
pub fn project_l2_ball(v: &[f64], radius: f64) -> Result<Vec<f64>> {
    check_radius(radius)?;
    check_finite(v)?;
    let mut out = v.to_vec();
    project_l2_in_place(&mut out, radius);
    Ok(out)
}

pub(crate) fn project_l2_in_place(v: &mut [f64], radius: f64) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > radius {
        let s = radius / norm;
        v.iter_mut().for_each(|x| *x *= s);
    }
}

/// Euclidean projection onto `{u : ‖u‖₁ ≤ radius}` by sorting magnitudes and
/// scanning for the soft-threshold level θ.
pub fn project_l1_ball(v: &[f64], radius: f64) -> Result<Vec<f64>> {
    check_radius(radius)?;
    check_finite(v)?;
    let mut out = v.to_vec();
    project_l1_in_place(&mut out, radius);
    Ok(out)
}

pub(crate) fn project_l1_in_place(v: &mut [f64], radius: f64) {
    let l1: f64 = v.iter().map(|x| x.abs()).sum();
    if l1 <= radius {
        return;
    }
    let mut mags: Vec<f64> = v.iter().map(|x| x.abs()).collect();
    mags.sort_unstable_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (j, &m) in mags.iter().enumerate() {
        cumsum += m;
        let candidate = (cumsum - radius) / (j + 1) as f64;
        if m > candidate {
            theta = candidate;
        } else {
            break;
        }
    }
    v.iter_mut().for_each(|x| *x = shrink(*x, theta));
}

/// Project a filter spectrum onto `{F(pad(v)) : v real, supported on the
/// filter extents, ‖v‖₂ ≤ 1}`.
///
/// The transform is unitary up to `√P`, so this is the real part of the
/// inverse transform, cropped, projected onto the unit ball, then padded and
/// transformed back.
pub fn project_filter_to_unit_ball_with_support(
    s: &SpectralArray,
    support: &FilterSupport,
) -> Result<SpectralArray> {
    if s.shape() != support.padded_extents() {
        return Err(Error::ShapeMismatch {
            expected: support.padded_extents().to_vec(),
            actual: s.shape().to_vec(),
        });
    }
    let spatial = project_filter_spatial(s, support)?;
    Ok(fft_unchecked(&zero_pad(&spatial, support)?))
}

/// The cropped spatial filter of the projection above.
pub(crate) fn project_filter_spatial(
    s: &SpectralArray,
    support: &FilterSupport,
) -> Result<SpatialArray> {
    let mut v = crop(&inverse_fft_real_part(s), support)?;
    project_l2_in_place(v.data_mut(), 1.0);
    Ok(v)
}

/// Project every column of `w` onto the ball named by `tag`.
pub fn project_weight_columns(w: &WeightMatrix, tag: &ConstraintSetTag) -> Result<WeightMatrix> {
    let mut out = w.clone();
    project_weight_columns_in_place(&mut out, tag)?;
    out.set_tag(*tag);
    Ok(out)
}

pub(crate) fn project_weight_columns_in_place(
    w: &mut WeightMatrix,
    tag: &ConstraintSetTag,
) -> Result<()> {
    if !tag.is_weight_ball() {
        return Err(Error::invalid(format!(
            "{:?} is not a weight constraint",
            tag.kind
        )));
    }
    check_radius(tag.radius)?;
    check_finite(w.entries())?;
    let (rows, cols) = (w.rows(), w.cols());
    let mut column = vec![0.0; rows];
    for k in 0..cols {
        for (r, c) in column.iter_mut().enumerate() {
            *c = w.get(r, k);
        }
        match tag.kind {
            ConstraintKind::WeightL1Ball => project_l1_in_place(&mut column, tag.radius),
            _ => project_l2_in_place(&mut column, tag.radius),
        }
        for (r, c) in column.iter().enumerate() {
            w.set(r, k, *c);
        }
    }
    Ok(())
}
