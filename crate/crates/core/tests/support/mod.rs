//! Reference implementations used as test oracles. Everything here works in
//! the spatial domain with plain loops and shares no code with the library's
//! transforms or solvers.

#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(n: usize, rng: &mut impl Rng) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn unravel(mut i: usize, ext: &[usize]) -> Vec<usize> {
    let mut idx = vec![0; ext.len()];
    for d in (0..ext.len()).rev() {
        idx[d] = i % ext[d];
        i /= ext[d];
    }
    idx
}

fn ravel(idx: &[usize], ext: &[usize]) -> usize {
    idx.iter().zip(ext).fold(0, |acc, (i, e)| acc * e + i)
}

/// Circular convolution of a filter living on `fext` (anchored at the origin)
/// with a signal on `pext`.
pub fn conv(filter: &[f64], fext: &[usize], signal: &[f64], pext: &[usize]) -> Vec<f64> {
    let p: usize = pext.iter().product();
    let mut out = vec![0.0; p];
    for (fi, &fv) in filter.iter().enumerate() {
        if fv == 0.0 {
            continue;
        }
        let m = unravel(fi, fext);
        for (n, o) in out.iter_mut().enumerate() {
            let nn = unravel(n, pext);
            let src: Vec<usize> = nn
                .iter()
                .zip(&m)
                .zip(pext)
                .map(|((a, b), e)| (a + e - b % e) % e)
                .collect();
            *o += fv * signal[ravel(&src, pext)];
        }
    }
    out
}

/// Euclidean projection onto the ℓ₁ ball by enumerating every sign pattern
/// and solving the equality-constrained QP on its support.
pub fn project_l1_bruteforce(v: &[f64], radius: f64) -> Vec<f64> {
    if v.iter().map(|x| x.abs()).sum::<f64>() <= radius {
        return v.to_vec();
    }
    let n = v.len();
    let mut best: Option<(f64, Vec<f64>)> = None;
    for code in 0..3usize.pow(n as u32) {
        let mut c = code;
        let signs: Vec<f64> = (0..n)
            .map(|_| {
                let s = [0.0, 1.0, -1.0][c % 3];
                c /= 3;
                s
            })
            .collect();
        let support = signs.iter().filter(|s| **s != 0.0).count();
        if support == 0 {
            continue;
        }
        // minimize ½‖x − v‖² subject to Σ sᵢxᵢ = radius on the support
        let lambda = (dot(&signs, v) - radius) / support as f64;
        let x: Vec<f64> = (0..n)
            .map(|i| if signs[i] == 0.0 { 0.0 } else { v[i] - lambda * signs[i] })
            .collect();
        if (0..n).any(|i| x[i] * signs[i] < -1e-15) {
            continue;
        }
        let d: f64 = x.iter().zip(v).map(|(a, b)| (a - b).powi(2)).sum();
        if best.as_ref().is_none_or(|(bd, _)| d < *bd) {
            best = Some((d, x));
        }
    }
    best.expect("some sign pattern is feasible").1
}

/// The dictionary problem `min_B mean_i ½‖xᵢ − Σᵣ bᵣ * yᵢᵣ‖²` written as an
/// explicit quadratic `½ bᵀAb − cᵀb + e` in the stacked spatial filters.
pub struct DictionaryQuadratic {
    pub n: usize,
    pub a: Vec<f64>,
    pub c: Vec<f64>,
    pub e: f64,
    pub filters: usize,
    pub filter_len: usize,
}

impl DictionaryQuadratic {
    /// `xs[i]` are signals, `ys[i][r]` the spatial maps multiplying filter `r`.
    pub fn build(xs: &[Vec<f64>], ys: &[Vec<Vec<f64>>], fext: &[usize], pext: &[usize]) -> Self {
        let filters = ys[0].len();
        let m: usize = fext.iter().product();
        let n = filters * m;
        let t = xs.len() as f64;
        let mut a = vec![0.0; n * n];
        let mut c = vec![0.0; n];
        let mut e = 0.0;
        for (x, y) in xs.iter().zip(ys) {
            // column j of the linear map: the response to a unit filter tap
            let cols: Vec<Vec<f64>> = (0..n)
                .map(|j| {
                    let mut unit = vec![0.0; m];
                    unit[j % m] = 1.0;
                    conv(&unit, fext, &y[j / m], pext)
                })
                .collect();
            for i in 0..n {
                for j in 0..n {
                    a[i * n + j] += dot(&cols[i], &cols[j]) / t;
                }
                c[i] += dot(&cols[i], x) / t;
            }
            e += dot(x, x) / t;
        }
        Self {
            n,
            a,
            c,
            e,
            filters,
            filter_len: m,
        }
    }

    pub fn value(&self, b: &[f64]) -> f64 {
        let mut q = 0.0;
        for i in 0..self.n {
            q += b[i] * dot(&self.a[i * self.n..(i + 1) * self.n], b);
        }
        0.5 * q - dot(&self.c, b) + 0.5 * self.e
    }

    fn gradient(&self, b: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| dot(&self.a[i * self.n..(i + 1) * self.n], b) - self.c[i])
            .collect()
    }

    /// Projected gradient with step `1/λ_max(A)` over a product of unit
    /// balls, one per filter.
    pub fn projected_gradient(&self, iterations: usize) -> Vec<f64> {
        let lmax = power_iteration(&self.a, self.n);
        let step = 1.0 / lmax;
        let mut b = vec![0.0; self.n];
        for _ in 0..iterations {
            let g = self.gradient(&b);
            for (bi, gi) in b.iter_mut().zip(&g) {
                *bi -= step * gi;
            }
            for f in b.chunks_mut(self.filter_len) {
                let nf = norm(f);
                if nf > 1.0 {
                    f.iter_mut().for_each(|v| *v /= nf);
                }
            }
        }
        b
    }
}

/// Largest eigenvalue of a symmetric positive semidefinite matrix.
pub fn power_iteration(a: &[f64], n: usize) -> f64 {
    let mut v = vec![1.0; n];
    let mut lambda = 0.0;
    for _ in 0..500 {
        let w: Vec<f64> = (0..n).map(|i| dot(&a[i * n..(i + 1) * n], &v)).collect();
        let nw = norm(&w);
        if nw == 0.0 {
            return 1.0;
        }
        lambda = nw / norm(&v);
        v = w.iter().map(|x| x / nw).collect();
    }
    lambda * 1.000001
}

/// Code problem `½‖x − Σₖ dₖ * zₖ‖² + β‖z‖₁` with an explicit operator.
pub struct CodeProblem {
    pub p: usize,
    pub k: usize,
    /// Column-major `P × KP` operator.
    pub columns: Vec<Vec<f64>>,
    pub x: Vec<f64>,
    pub beta: f64,
}

impl CodeProblem {
    pub fn new(filters: &[Vec<f64>], fext: &[usize], x: &[f64], pext: &[usize], beta: f64) -> Self {
        let p: usize = pext.iter().product();
        let mut columns = Vec::with_capacity(filters.len() * p);
        for f in filters {
            for j in 0..p {
                let mut unit = vec![0.0; p];
                unit[j] = 1.0;
                columns.push(conv(f, fext, &unit, pext));
            }
        }
        Self {
            p,
            k: filters.len(),
            columns,
            x: x.to_vec(),
            beta,
        }
    }

    fn apply(&self, z: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.p];
        for (col, zi) in self.columns.iter().zip(z) {
            if *zi != 0.0 {
                for (o, c) in out.iter_mut().zip(col) {
                    *o += zi * c;
                }
            }
        }
        out
    }

    pub fn value(&self, z: &[f64]) -> f64 {
        let r = self.apply(z);
        let fit: f64 = r.iter().zip(&self.x).map(|(a, b)| (a - b).powi(2)).sum();
        0.5 * fit + self.beta * z.iter().map(|v| v.abs()).sum::<f64>()
    }

    /// Long-run FISTA.
    pub fn solve(&self, iterations: usize) -> Vec<f64> {
        let n = self.columns.len();
        let mut gram = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                gram[i * n + j] = dot(&self.columns[i], &self.columns[j]);
            }
        }
        let step = 1.0 / power_iteration(&gram, n);
        let mut z = vec![0.0; n];
        let mut y = z.clone();
        let mut t: f64 = 1.0;
        for _ in 0..iterations {
            let r = self.apply(&y);
            let resid: Vec<f64> = r.iter().zip(&self.x).map(|(a, b)| a - b).collect();
            let next: Vec<f64> = (0..n)
                .map(|i| {
                    let v = y[i] - step * dot(&self.columns[i], &resid);
                    v.signum() * (v.abs() - step * self.beta).max(0.0)
                })
                .collect();
            let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            y = (0..n)
                .map(|i| next[i] + (t - 1.0) / t_next * (next[i] - z[i]))
                .collect();
            z = next;
            t = t_next;
        }
        z
    }
}

/// Central finite-difference gradient of `f` at `x`.
pub fn finite_difference(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + h;
            let up = f(&probe);
            probe[i] = orig - h;
            let down = f(&probe);
            probe[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// `‖a − b‖ / max(‖a‖, ‖b‖, floor)`.
pub fn relative_error(a: &[f64], b: &[f64], floor: f64) -> f64 {
    let d: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    d / norm(a).max(norm(b)).max(floor)
}
