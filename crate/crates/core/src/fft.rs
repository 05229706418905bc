//! Two-dimensional FFTs on row-major `n1 × n2` grids (index `i·n2 + j`).
//!
//! Transforms are unnormalized in both directions.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

/// Cached plans for one grid shape.
#[derive(Clone)]
pub struct Fft2 {
    n1: usize,
    n2: usize,
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Fft2 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Fft2({}x{})", self.n1, self.n2)
    }
}

impl Fft2 {
    pub fn new(n1: usize, n2: usize) -> Self {
        assert!(n1 > 0 && n2 > 0, "empty FFT grid");
        let mut planner = FftPlanner::new();
        Fft2 {
            n1,
            n2,
            row_fwd: planner.plan_fft_forward(n2),
            row_inv: planner.plan_fft_inverse(n2),
            col_fwd: planner.plan_fft_forward(n1),
            col_inv: planner.plan_fft_inverse(n1),
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.n1, self.n2)
    }

    pub fn len(&self) -> usize {
        self.n1 * self.n2
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn forward(&self, data: &mut [Complex64]) {
        self.run(data, &self.row_fwd, &self.col_fwd);
    }

    pub fn inverse(&self, data: &mut [Complex64]) {
        self.run(data, &self.row_inv, &self.col_inv);
    }

    fn run(&self, data: &mut [Complex64], row: &Arc<dyn Fft<f64>>, col: &Arc<dyn Fft<f64>>) {
        assert_eq!(data.len(), self.len(), "FFT buffer has wrong length");
        let (n1, n2) = (self.n1, self.n2);
        if n2 > 1 {
            row.process(data);
        }
        if n1 > 1 {
            if n2 == 1 {
                col.process(data);
                return;
            }
            let mut t = vec![Complex64::new(0.0, 0.0); data.len()];
            transpose(data, &mut t, n1, n2);
            col.process(&mut t);
            transpose(&t, data, n2, n1);
        }
    }
}

/// `dst[j·rows + i] = src[i·cols + j]`.
fn transpose(src: &[Complex64], dst: &mut [Complex64], rows: usize, cols: usize) {
    const B: usize = 32;
    for ib in (0..rows).step_by(B) {
        for jb in (0..cols).step_by(B) {
            for i in ib..(ib + B).min(rows) {
                for j in jb..(jb + B).min(cols) {
                    dst[j * rows + i] = src[i * cols + j];
                }
            }
        }
    }
}

/// Signed wavenumber of DFT index `k` on `n` points, in `(−n/2, n/2]`.
pub fn signed_wavenumber(k: usize, n: usize) -> i64 {
    if 2 * k > n {
        k as i64 - n as i64
    } else {
        k as i64
    }
}

/// Whether `k` is the Nyquist index of an even-length axis.
pub fn is_nyquist(k: usize, n: usize) -> bool {
    n % 2 == 0 && n > 1 && 2 * k == n
}

/// Index of `−k` on an axis of length `n`.
pub fn negate_index(k: usize, n: usize) -> usize {
    (n - k) % n
}

/// Split the transform `Z` of `x + i·y` (both real) into the transforms `X`, `Y`.
pub fn unpack_real_pair(z: &[Complex64], n1: usize, n2: usize) -> (Vec<Complex64>, Vec<Complex64>) {
    let mut x = vec![Complex64::new(0.0, 0.0); z.len()];
    let mut y = vec![Complex64::new(0.0, 0.0); z.len()];
    for i in 0..n1 {
        let mi = negate_index(i, n1);
        for j in 0..n2 {
            let mj = negate_index(j, n2);
            let a = z[i * n2 + j];
            let b = z[mi * n2 + mj].conj();
            x[i * n2 + j] = (a + b) * 0.5;
            // (a − b)/(2i)
            let d = (a - b) * 0.5;
            y[i * n2 + j] = Complex64::new(d.im, -d.re);
        }
    }
    (x, y)
}

/// Per-axis interpolation weights `w_k(ξ)` of the symmetric trigonometric
/// interpolant; the Nyquist mode uses `cos(π n ξ)`.
pub fn interpolation_weights(xi: f64, n: usize) -> Vec<Complex64> {
    (0..n)
        .map(|k| {
            if is_nyquist(k, n) {
                Complex64::new((PI * n as f64 * xi).cos(), 0.0)
            } else {
                let kk = signed_wavenumber(k, n) as f64;
                Complex64::from_polar(1.0, 2.0 * PI * kk * xi)
            }
        })
        .collect()
}

/// Evaluate a trigonometric interpolant with normalized coefficients `coef`
/// (`coef = FFT(values)/(n1 n2)`) at fractional point `ξ`.
pub fn evaluate_interpolant(coef: &[Complex64], n1: usize, n2: usize, xi: [f64; 2]) -> f64 {
    let w1 = interpolation_weights(xi[0], n1);
    let w2 = interpolation_weights(xi[1], n2);
    let mut acc = Complex64::new(0.0, 0.0);
    for (i, a) in w1.iter().enumerate() {
        let row = &coef[i * n2..(i + 1) * n2];
        let mut s = Complex64::new(0.0, 0.0);
        for (c, b) in row.iter().zip(&w2) {
            s += c * b;
        }
        acc += a * s;
    }
    acc.re
}

/// Evaluate the interpolant on the tensor grid `xs1 × xs2` (row-major output).
pub fn evaluate_on_tensor_grid(
    coef: &[Complex64],
    n1: usize,
    n2: usize,
    xs1: &[f64],
    xs2: &[f64],
) -> Vec<f64> {
    let w2: Vec<Vec<Complex64>> = xs2.iter().map(|&x| interpolation_weights(x, n2)).collect();
    // partial sums over k2: p[b][k1]
    let partial: Vec<Vec<Complex64>> = w2
        .iter()
        .map(|w| {
            (0..n1)
                .map(|i| {
                    coef[i * n2..(i + 1) * n2]
                        .iter()
                        .zip(w)
                        .fold(Complex64::new(0.0, 0.0), |s, (c, b)| s + c * b)
                })
                .collect()
        })
        .collect();
    let mut out = Vec::with_capacity(xs1.len() * xs2.len());
    for &x1 in xs1 {
        let w1 = interpolation_weights(x1, n1);
        for p in &partial {
            let v = w1
                .iter()
                .zip(p)
                .fold(Complex64::new(0.0, 0.0), |s, (a, b)| s + a * b);
            out.push(v.re);
        }
    }
    out
}

/// Trigonometric resampling of real nodal values from `n1 × n2` onto `m1 × m2`.
pub fn resample(values: &[f64], n: (usize, usize), m: (usize, usize)) -> Vec<f64> {
    let (n1, n2) = n;
    let (m1, m2) = m;
    assert_eq!(values.len(), n1 * n2);
    if n == m {
        return values.to_vec();
    }
    let mut c: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    Fft2::new(n1, n2).forward(&mut c);
    let scale = 1.0 / (n1 * n2) as f64;
    let xs1: Vec<f64> = (0..m1).map(|i| i as f64 / m1 as f64).collect();
    let xs2: Vec<f64> = (0..m2).map(|j| j as f64 / m2 as f64).collect();
    c.iter_mut().for_each(|z| *z *= scale);
    evaluate_on_tensor_grid(&c, n1, n2, &xs1, &xs2)
}
