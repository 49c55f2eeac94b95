//! Nonmonotone accelerated proximal gradient for the per-sample `(W, Z)`
//! problem
//!
//! ```text
//! min  f(W, Z) + I_W(W) + β‖Z‖₁
//! ```
//!
//! Each iteration extrapolates with momentum, keeps the extrapolated point only
//! if its objective does not exceed the largest of the last `q` accepted
//! objectives (otherwise it restarts from the current iterate), then takes one
//! gradient step on `f` followed by the block-separable prox: column
//! projection for `W`, soft-thresholding for `Z`. The step size is found by
//! halving until the quadratic upper bound at the base point holds.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{CodeTensor, WeightMatrix, FEASIBILITY_TOLERANCE};
use crate::prox::{project_weight_columns_in_place, shrink, ConstraintSetTag};
use crate::solvers::smooth::SmoothPart;
use crate::util::l1_norm;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NiApgConfig {
    /// Initial step size; refined by backtracking when `adaptive_step` is set.
    pub step_size: f64,
    pub adaptive_step: bool,
    pub max_iterations: usize,
    /// Window `q` of the nonmonotone acceptance test.
    pub history_window: usize,
    /// Stop once the relative change of the objective falls below this.
    pub objective_tolerance: f64,
    /// Keep `W` at its initial value and optimize `Z` only.
    #[serde(default)]
    pub fix_weights: bool,
}

impl Default for NiApgConfig {
    fn default() -> Self {
        Self {
            step_size: 1.0,
            adaptive_step: true,
            max_iterations: 200,
            history_window: 5,
            objective_tolerance: 1e-6,
            fix_weights: false,
        }
    }
}

impl NiApgConfig {
    pub fn validate(&self) -> Result<()> {
        if self.history_window == 0 {
            return Err(Error::invalid("niAPG history window must be at least 1"));
        }
        if !(self.step_size > 0.0) || !self.step_size.is_finite() {
            return Err(Error::invalid(format!("step size must be positive, got {}", self.step_size)));
        }
        if !(self.objective_tolerance >= 0.0) {
            return Err(Error::invalid("objective tolerance must be nonnegative"));
        }
        Ok(())
    }
}

/// Outcome of a niAPG run.
#[derive(Debug, Clone, PartialEq)]
pub struct NiApgResult {
    pub weights: WeightMatrix,
    pub codes: CodeTensor,
    pub objective: f64,
    pub initial_objective: f64,
    /// Accepted objective after each iteration.
    pub objectives: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Iterations where the extrapolated point was rejected.
    pub restarts: usize,
    pub final_step: f64,
}

impl NiApgResult {
    /// CSV rows `iteration,objective`.
    pub fn trace_csv(&self) -> String {
        let mut out = String::from("iteration,objective\n");
        out.push_str(&format!("0,{:e}\n", self.initial_objective));
        for (i, f) in self.objectives.iter().enumerate() {
            out.push_str(&format!("{},{:e}\n", i + 1, f));
        }
        out
    }
}

struct Problem<'a, S: SmoothPart> {
    smooth: &'a S,
    tag: ConstraintSetTag,
    beta: f64,
    rows: usize,
    cols: usize,
    w_len: usize,
}

impl<S: SmoothPart> Problem<'_, S> {
    fn objective(&self, x: &[f64]) -> Result<f64> {
        let (w, z) = x.split_at(self.w_len);
        Ok(self.smooth.value(w, z)? + self.beta * l1_norm(z))
    }

    fn smooth_with_gradient(&self, x: &[f64], grad: &mut [f64]) -> Result<f64> {
        let (w, z) = x.split_at(self.w_len);
        let (gw, gz) = grad.split_at_mut(self.w_len);
        self.smooth.value_and_gradient(w, z, gw, gz)
    }

    fn project_weights(&self, x: &mut [f64]) -> Result<()> {
        let mut w = WeightMatrix::from_raw(self.rows, self.cols, x[..self.w_len].to_vec(), self.tag)?;
        project_weight_columns_in_place(&mut w, &self.tag)?;
        x[..self.w_len].copy_from_slice(w.entries());
        Ok(())
    }

    /// `prox(v − η∇f(v))` for both blocks.
    fn prox_step(&self, v: &[f64], grad: &[f64], step: f64, out: &mut [f64]) -> Result<()> {
        for ((o, vi), gi) in out.iter_mut().zip(v).zip(grad) {
            *o = vi - step * gi;
        }
        self.project_weights(out)?;
        let tau = step * self.beta;
        for o in &mut out[self.w_len..] {
            *o = shrink(*o, tau);
        }
        Ok(())
    }
}

/// Minimize `f(W, Z) + I_W(W) + β‖Z‖₁` from a feasible start.
pub fn niapg_solve<S: SmoothPart>(
    smooth: &S,
    tag: &ConstraintSetTag,
    beta: f64,
    init_w: &WeightMatrix,
    init_z: &CodeTensor,
    config: &NiApgConfig,
) -> Result<NiApgResult> {
    config.validate()?;
    if !(beta > 0.0) {
        return Err(Error::invalid(format!("beta must be positive, got {beta}")));
    }
    let (r, k, p) = smooth.dims();
    if init_w.rows() != r || init_w.cols() != k || init_z.count() != k || init_z.signal_len() != p {
        return Err(Error::ShapeMismatch {
            expected: vec![r, k, p],
            actual: vec![init_w.rows(), init_w.cols(), init_z.signal_len()],
        });
    }
    if !tag.is_weight_ball() {
        return Err(Error::invalid(format!("{:?} is not a weight constraint", tag.kind)));
    }
    let mut tagged = init_w.clone();
    tagged.set_tag(*tag);
    let violation = tagged.max_violation();
    if violation > FEASIBILITY_TOLERANCE {
        return Err(Error::invalid(format!(
            "initial weights lie outside the constraint set (violation {violation:.3e})"
        )));
    }

    let problem = Problem {
        smooth,
        tag: *tag,
        beta,
        rows: r,
        cols: k,
        w_len: r * k,
    };
    let n = r * k + k * p;
    let mut x: Vec<f64> = init_w.entries().iter().chain(init_z.data()).copied().collect();
    let mut x_prev = x.clone();
    let mut f_x = problem.objective(&x)?;
    if !f_x.is_finite() {
        return Err(Error::numerical("non-finite initial objective"));
    }
    let initial_objective = f_x;

    let mut history: VecDeque<f64> = VecDeque::with_capacity(config.history_window);
    history.push_back(f_x);
    let mut t_prev = 1.0f64;
    let mut t_cur = 1.0f64;
    let mut step = config.step_size;
    let mut objectives = Vec::new();
    let mut restarts = 0;
    let mut converged = false;

    let mut y = vec![0.0; n];
    let mut grad = vec![0.0; n];
    let mut cand = vec![0.0; n];

    for _ in 0..config.max_iterations {
        // extrapolation; the weight block is pulled back into the ball so the
        // acceptance test compares finite objectives
        let momentum = (t_prev - 1.0) / t_cur;
        for i in 0..n {
            y[i] = x[i] + momentum * (x[i] - x_prev[i]);
        }
        problem.project_weights(&mut y)?;
        let f_y = if momentum == 0.0 { f_x } else { problem.objective(&y)? };
        let reference = history.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let base: &[f64] = if f_y <= reference {
            &y
        } else {
            restarts += 1;
            &x
        };

        let f_smooth = problem.smooth_with_gradient(base, &mut grad)?;
        if config.fix_weights {
            grad[..problem.w_len].iter_mut().for_each(|g| *g = 0.0);
        }

        // backtracking on the quadratic upper bound of f around the base point
        if config.adaptive_step {
            step *= 1.5;
        }
        let mut f_cand;
        loop {
            problem.prox_step(base, &grad, step, &mut cand)?;
            let (cw, cz) = cand.split_at(problem.w_len);
            let f_smooth_cand = smooth.value(cw, cz)?;
            let mut lin = 0.0;
            let mut dist = 0.0;
            for i in 0..n {
                let d = cand[i] - base[i];
                lin += grad[i] * d;
                dist += d * d;
            }
            f_cand = f_smooth_cand + beta * l1_norm(cz);
            if !config.adaptive_step || f_smooth_cand <= f_smooth + lin + dist / (2.0 * step) + 1e-12 * f_smooth.abs() {
                break;
            }
            step *= 0.5;
            if step < 1e-300 {
                return Err(Error::numerical("niAPG step size underflow"));
            }
        }
        if !f_cand.is_finite() {
            return Err(Error::numerical("non-finite objective in niAPG"));
        }

        std::mem::swap(&mut x_prev, &mut x);
        x.copy_from_slice(&cand);
        let f_old = f_x;
        f_x = f_cand;
        objectives.push(f_x);
        if history.len() == config.history_window {
            history.pop_front();
        }
        history.push_back(f_x);
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t_cur * t_cur).sqrt());
        t_prev = t_cur;
        t_cur = t_next;

        let scale = f_x.abs().max(f_old.abs());
        if scale == 0.0 || (f_old - f_x).abs() <= config.objective_tolerance * scale {
            converged = true;
            break;
        }
    }

    let weights = WeightMatrix::from_raw(r, k, x[..r * k].to_vec(), *tag)?;
    let codes = CodeTensor::from_raw(init_z.shape().to_vec(), k, x[r * k..].to_vec());
    Ok(NiApgResult {
        weights,
        codes,
        objective: f_x,
        initial_objective,
        iterations: objectives.len(),
        objectives,
        converged,
        restarts,
        final_step: step,
    })
}
