//! Generalized stacking-fault energy.
//!
//! The GSFE is a trigonometric polynomial `φ(v, w)` on the torus `[0, 2π)²` made of
//! three harmonic shells. Layer GSFEs evaluate `φ` at `2π A⁻¹γ` with `A` the
//! lattice of the opposite layer. Restricting the layer GSFE to the straight
//! path through an AB/BA wall gives the normalized double well `U(ψ)` used by the
//! domain-wall theory.
//!
//! Energies are in meV per unit-cell area, lengths in Å.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{burgers_triplet, rotation, Basis2, LayerPair, Mat2, Vec2};

/// Integer wavevectors of the three harmonic shells.
const SHELLS: [[[f64; 2]; 3]; 3] = [
    [[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]],
    [[1.0, 2.0], [1.0, -1.0], [2.0, 1.0]],
    [[2.0, 0.0], [0.0, 2.0], [2.0, 2.0]],
];

/// Coefficients of `φ(v,w) = c₀ + c₁ Σ cos + c₂ Σ cos + c₃ Σ cos`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GsfeModel {
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
}

impl Default for GsfeModel {
    fn default() -> Self {
        GsfeModel::graphene()
    }
}

impl GsfeModel {
    /// vdW-DFT coefficients for bilayer graphene (meV per unit-cell area).
    pub fn graphene() -> Self {
        GsfeModel {
            c0: 7.076,
            c1: 4.064,
            c2: -0.374,
            c3: -0.095,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if [self.c0, self.c1, self.c2, self.c3].iter().all(|c| c.is_finite()) {
            Ok(())
        } else {
            Err(Error::InvalidArgument("GSFE coefficients must be finite".into()))
        }
    }

    /// Value at AA stacking, `c₀ + 3(c₁ + c₂ + c₃)`.
    pub fn aa_value(&self) -> f64 {
        self.c0 + 3.0 * (self.c1 + self.c2 + self.c3)
    }

    /// `φ(v, w)`.
    pub fn phi(&self, v: f64, w: f64) -> f64 {
        self.eval(v, w).0
    }

    /// `∇φ(v, w)`.
    pub fn grad_phi(&self, v: f64, w: f64) -> [f64; 2] {
        let (_, g) = self.eval(v, w);
        g
    }

    /// Value and gradient from two `sin_cos` calls and angle addition.
    #[inline]
    pub fn eval(&self, v: f64, w: f64) -> (f64, [f64; 2]) {
        let (sv, cv) = v.sin_cos();
        let (sw, cw) = w.sin_cos();
        // v + w
        let cs = cv * cw - sv * sw;
        let ss = sv * cw + cv * sw;
        // v − w
        let cd = cv * cw + sv * sw;
        let sd = sv * cw - cv * sw;
        // v + 2w, 2v + w
        let c12 = cs * cw - ss * sw;
        let s12 = ss * cw + cs * sw;
        let c21 = cs * cv - ss * sv;
        let s21 = ss * cv + cs * sv;
        // 2v, 2w, 2v + 2w
        let c2v = cv * cv - sv * sv;
        let s2v = 2.0 * sv * cv;
        let c2w = cw * cw - sw * sw;
        let s2w = 2.0 * sw * cw;
        let c2s = cs * cs - ss * ss;
        let s2s = 2.0 * ss * cs;

        let value = self.c0
            + self.c1 * (cv + cw + cs)
            + self.c2 * (c12 + cd + c21)
            + self.c3 * (c2v + c2w + c2s);
        let dv = -self.c1 * (sv + ss)
            - self.c2 * (s12 + sd + 2.0 * s21)
            - self.c3 * (2.0 * s2v + 2.0 * s2s);
        let dw = -self.c1 * (sw + ss)
            - self.c2 * (2.0 * s12 - sd + s21)
            - self.c3 * (2.0 * s2w + 2.0 * s2s);
        (value, [dv, dw])
    }

    /// Hessian of `φ` as `[[vv, vw], [vw, ww]]`.
    pub fn hessian_phi(&self, v: f64, w: f64) -> [[f64; 2]; 2] {
        let mut h = [[0.0; 2]; 2];
        for (shell, c) in SHELLS.iter().zip([self.c1, self.c2, self.c3]) {
            for k in shell {
                let cosk = (k[0] * v + k[1] * w).cos();
                for i in 0..2 {
                    for j in 0..2 {
                        h[i][j] -= c * cosk * k[i] * k[j];
                    }
                }
            }
        }
        h
    }

    /// `φ(z + dz) − φ(z)` without cancellation for small `dz`.
    pub fn phi_difference(&self, z: [f64; 2], dz: [f64; 2]) -> f64 {
        let mut acc = 0.0;
        for (shell, c) in SHELLS.iter().zip([self.c1, self.c2, self.c3]) {
            for k in shell {
                let a = k[0] * z[0] + k[1] * z[1];
                let d = k[0] * dz[0] + k[1] * dz[1];
                acc -= 2.0 * c * (a + 0.5 * d).sin() * (0.5 * d).sin();
            }
        }
        acc
    }

    /// `φ(z + dz) − φ(z)` at a critical point `z`, with the first-order term
    /// dropped so the result keeps full relative accuracy as `dz → 0`.
    pub fn phi_difference_at_critical(&self, z: [f64; 2], dz: [f64; 2]) -> f64 {
        let mut acc = 0.0;
        for (shell, c) in SHELLS.iter().zip([self.c1, self.c2, self.c3]) {
            for k in shell {
                let a = k[0] * z[0] + k[1] * z[1];
                let d = k[0] * dz[0] + k[1] * dz[1];
                let h = (0.5 * d).sin();
                // cos(a + d) − cos a + d·sin a
                acc -= c * (2.0 * a.cos() * h * h + a.sin() * sin_minus_identity(d));
            }
        }
        acc
    }

    /// Global minimum of `φ` over the torus: `(value, location)`. Dense scan
    /// followed by Newton refinement.
    pub fn minimum(&self) -> (f64, [f64; 2]) {
        let n = 192;
        let mut best = (f64::INFINITY, [0.0, 0.0]);
        for i in 0..n {
            for j in 0..n {
                let z = [2.0 * PI * i as f64 / n as f64, 2.0 * PI * j as f64 / n as f64];
                let val = self.phi(z[0], z[1]);
                if val < best.0 {
                    best = (val, z);
                }
            }
        }
        let mut z = best.1;
        for _ in 0..50 {
            let g = self.grad_phi(z[0], z[1]);
            let h = self.hessian_phi(z[0], z[1]);
            let det = h[0][0] * h[1][1] - h[0][1] * h[1][0];
            if det.abs() < 1e-300 {
                break;
            }
            let dv = (h[1][1] * g[0] - h[0][1] * g[1]) / det;
            let dw = (h[0][0] * g[1] - h[1][0] * g[0]) / det;
            z = [z[0] - dv, z[1] - dw];
            if dv.abs().max(dw.abs()) < 1e-15 {
                break;
            }
        }
        let z = [z[0].rem_euclid(2.0 * PI), z[1].rem_euclid(2.0 * PI)];
        (self.phi(z[0], z[1]), z)
    }
}

/// `sin d − d` without cancellation.
fn sin_minus_identity(d: f64) -> f64 {
    if d.abs() < 0.1 {
        let d2 = d * d;
        // −d³/3! + d⁵/5! − d⁷/7! + d⁹/9! − d¹¹/11!
        -d * d2 / 6.0
            * (1.0 - d2 / 20.0 * (1.0 - d2 / 42.0 * (1.0 - d2 / 72.0 * (1.0 - d2 / 110.0))))
    } else {
        d.sin() - d
    }
}

/// Isotropic Lamé moduli (meV per unit-cell area).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ElasticModuli {
    pub lambda: f64,
    pub mu: f64,
}

impl Default for ElasticModuli {
    fn default() -> Self {
        ElasticModuli::graphene()
    }
}

impl ElasticModuli {
    pub fn graphene() -> Self {
        ElasticModuli {
            lambda: 37_950.0,
            mu: 47_352.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mu > 0.0 && self.lambda + self.mu > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "elastic moduli need mu > 0 and lambda + mu > 0 (lambda = {}, mu = {})",
                self.lambda, self.mu
            )));
        }
        Ok(())
    }

    /// Scale both moduli.
    pub fn scaled(&self, factor: f64) -> Self {
        ElasticModuli {
            lambda: self.lambda * factor,
            mu: self.mu * factor,
        }
    }
}

/// Layer GSFE `Φ₁(γ) = φ(2π A₂⁻¹γ)` (`which = 1`) or `Φ₂(γ) = φ(2π A₁⁻¹γ)` (`which = 2`).
pub fn gsfe_layer(gamma: Vec2, which: usize, pair: &LayerPair, model: &GsfeModel) -> Result<f64> {
    let z = layer_phase(gamma, which, pair)?;
    Ok(model.phi(z[0], z[1]))
}

/// Gradient of [`gsfe_layer`] with respect to `γ` (meV/Å per unit-cell area).
pub fn grad_gsfe_layer(
    gamma: Vec2,
    which: usize,
    pair: &LayerPair,
    model: &GsfeModel,
) -> Result<Vec2> {
    let inv = opposite_inverse(which, pair)?;
    let z = inv * gamma * (2.0 * PI);
    let g = model.grad_phi(z[0], z[1]);
    Ok(inv.transpose() * Vec2::new(g[0], g[1]) * (2.0 * PI))
}

fn opposite_inverse(which: usize, pair: &LayerPair) -> Result<Mat2> {
    match which {
        1 => pair.a2.inverse(),
        2 => pair.a1.inverse(),
        _ => Err(Error::InvalidArgument(format!("layer must be 1 or 2, got {which}"))),
    }
}

fn layer_phase(gamma: Vec2, which: usize, pair: &LayerPair) -> Result<Vec2> {
    Ok(opposite_inverse(which, pair)? * gamma * (2.0 * PI))
}

/// Shape of a normalized double well.
#[derive(Clone, Copy, Debug, PartialEq)]
enum WellShape {
    /// GSFE restricted to the line `z(u) = 2π(saddle + u·step)` in φ-coordinates.
    Gsfe {
        model: GsfeModel,
        saddle: [f64; 2],
        step: [f64; 2],
    },
    /// `(1 − ψ²)²/8`.
    Quartic,
    /// `(1 + cos πψ)/π²`.
    SineGordon,
}

/// Normalized double-well potential `U(ψ) = (Φ[ψ] − Φ_min)/k_min` with wells at ±1,
/// `U(±1) = 0` and `U''(±1) = 1`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WallPotential {
    shape: WellShape,
    /// Curvature `Φ''(±1)` of the unnormalized profile (meV per unit-cell area).
    pub k_min: f64,
    /// Well depth `Φ(±1)` (meV per unit-cell area).
    pub phi_min: f64,
    /// Half-width `c > 1` of the double-well segment.
    pub half_width: f64,
}

impl WallPotential {
    /// Allen–Cahn well; kink `tanh(t/2)`.
    pub fn quartic() -> Self {
        let mut p = WallPotential {
            shape: WellShape::Quartic,
            k_min: 1.0,
            phi_min: 0.0,
            half_width: f64::INFINITY,
        };
        p.half_width = p.detect_half_width();
        p
    }

    /// Sine-Gordon well; kink `(4 arctan eᵗ − π)/π`.
    pub fn sine_gordon() -> Self {
        let mut p = WallPotential {
            shape: WellShape::SineGordon,
            k_min: 1.0,
            phi_min: 0.0,
            half_width: f64::INFINITY,
        };
        p.half_width = p.detect_half_width();
        p
    }

    pub fn is_gsfe(&self) -> bool {
        matches!(self.shape, WellShape::Gsfe { .. })
    }

    /// Unnormalized profile difference `Φ(u) − Φ(u₀)` for the GSFE shape.
    fn profile_difference(model: &GsfeModel, saddle: [f64; 2], step: [f64; 2], u0: f64, du: f64) -> f64 {
        let z = [
            2.0 * PI * (saddle[0] + u0 * step[0]),
            2.0 * PI * (saddle[1] + u0 * step[1]),
        ];
        let dz = [2.0 * PI * du * step[0], 2.0 * PI * du * step[1]];
        model.phi_difference(z, dz)
    }

    /// `U(ψ)`.
    pub fn value(&self, psi: f64) -> f64 {
        let sign = if psi >= 0.0 { 1.0 } else { -1.0 };
        self.value_near_well(1.0 - psi.abs(), sign)
    }

    /// `U(sign·(1 − s))`, evaluated relative to the well so that the tail
    /// `s → 0` keeps full relative accuracy.
    pub fn value_near_well(&self, s: f64, sign: f64) -> f64 {
        match self.shape {
            WellShape::Quartic => {
                let q = s * (2.0 - s);
                q * q / 8.0
            }
            WellShape::SineGordon => {
                let h = (0.5 * PI * s).sin();
                2.0 * h * h / (PI * PI)
            }
            WellShape::Gsfe { model, saddle, step } => {
                let z = [
                    2.0 * PI * (saddle[0] + sign * step[0]),
                    2.0 * PI * (saddle[1] + sign * step[1]),
                ];
                let dz = [-2.0 * PI * sign * s * step[0], -2.0 * PI * sign * s * step[1]];
                model.phi_difference_at_critical(z, dz) / self.k_min
            }
        }
    }

    /// `U'(ψ)`.
    pub fn derivative(&self, psi: f64) -> f64 {
        match self.shape {
            WellShape::Quartic => -0.5 * psi * (1.0 - psi * psi),
            WellShape::SineGordon => -(PI * psi).sin() / PI,
            WellShape::Gsfe { model, saddle, step } => {
                let z = [
                    2.0 * PI * (saddle[0] + psi * step[0]),
                    2.0 * PI * (saddle[1] + psi * step[1]),
                ];
                let g = model.grad_phi(z[0], z[1]);
                2.0 * PI * (g[0] * step[0] + g[1] * step[1]) / self.k_min
            }
        }
    }

    /// `U''(ψ)` (analytic).
    pub fn second_derivative(&self, psi: f64) -> f64 {
        match self.shape {
            WellShape::Quartic => -0.5 + 1.5 * psi * psi,
            WellShape::SineGordon => -(PI * psi).cos(),
            WellShape::Gsfe { model, saddle, step } => {
                let z = [
                    2.0 * PI * (saddle[0] + psi * step[0]),
                    2.0 * PI * (saddle[1] + psi * step[1]),
                ];
                let h = model.hessian_phi(z[0], z[1]);
                let q = h[0][0] * step[0] * step[0]
                    + 2.0 * h[0][1] * step[0] * step[1]
                    + h[1][1] * step[1] * step[1];
                4.0 * PI * PI * q / self.k_min
            }
        }
    }

    /// Unnormalized profile `Φ[ψ] = k_min U(ψ) + Φ_min`.
    pub fn profile(&self, psi: f64) -> f64 {
        self.k_min * self.value(psi) + self.phi_min
    }

    fn detect_half_width(&self) -> f64 {
        let step = 1e-3;
        let mut psi = 1.0 + step;
        while psi < 10.0 {
            if self.derivative(psi) <= 0.0 {
                return psi;
            }
            psi += step;
        }
        f64::INFINITY
    }

    /// Check `U > 0` on `samples` interior points of `(−1, 1)`.
    pub fn check_double_well(&self, samples: usize) -> Result<()> {
        let n = samples.max(3);
        for i in 1..n {
            let psi = -1.0 + 2.0 * i as f64 / n as f64;
            let u = self.value(psi);
            if !(u > 0.0) {
                return Err(Error::ModelInconsistency(format!(
                    "wall potential not positive inside the wells: U({psi:.6}) = {u:e}"
                )));
            }
        }
        Ok(())
    }
}

/// Second derivative by central differences (evaluated as stable differences)
/// with Richardson extrapolation.
fn richardson_curvature(diff: impl Fn(f64) -> f64) -> f64 {
    let d = |h: f64| (diff(h) + diff(-h)) / (h * h);
    let mut table: Vec<Vec<f64>> = Vec::new();
    let mut h = 0.05;
    for level in 0..5 {
        let mut row = vec![d(h)];
        for j in 1..=level {
            let f = 4f64.powi(j as i32);
            let prev = &table[level - 1];
            row.push((f * row[j - 1] - prev[j - 1]) / (f - 1.0));
        }
        table.push(row);
        h *= 0.5;
    }
    *table.last().and_then(|r| r.last()).expect("nonempty")
}

/// Wall potential along triplet `i` for a bilayer rotated by `phi_rot`
/// (`A₁ = A₂ = R_φ A`). `samples` interior points validate the double well.
pub fn wall_potential(
    i: usize,
    phi_rot: f64,
    reference: &Basis2,
    model: &GsfeModel,
    samples: usize,
) -> Result<WallPotential> {
    model.validate()?;
    let triplet = burgers_triplet(i, reference.lattice_constant())?;
    let rot = rotation(phi_rot);
    let layer = reference.deformed(&rot);
    let inv = layer.inverse()?;
    let saddle = inv * (rot * triplet.saddle);
    let step = inv * (rot * triplet.half_burgers);
    let saddle = [saddle[0], saddle[1]];
    let step = [step[0], step[1]];

    let k_min = richardson_curvature(|h| WallPotential::profile_difference(model, saddle, step, 1.0, h));
    if !(k_min > 0.0) {
        return Err(Error::ModelInconsistency(format!(
            "profile curvature at the well is not positive (k_min = {k_min:e})"
        )));
    }
    let z1 = [2.0 * PI * (saddle[0] + step[0]), 2.0 * PI * (saddle[1] + step[1])];
    let phi_min = model.phi(z1[0], z1[1]);
    let mut pot = WallPotential {
        shape: WellShape::Gsfe {
            model: *model,
            saddle,
            step,
        },
        k_min,
        phi_min,
        half_width: f64::INFINITY,
    };
    pot.check_double_well(samples)?;
    // the two wells must be degenerate for U(±1) = 0
    let asym = WallPotential::profile_difference(model, saddle, step, 1.0, -2.0);
    if asym.abs() > 1e-9 * model.aa_value().abs().max(1.0) {
        return Err(Error::ModelInconsistency(format!(
            "wall profile wells differ by {asym:e} meV"
        )));
    }
    pot.half_width = pot.detect_half_width();
    Ok(pot)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::StrainFamily;
    use approx::assert_relative_eq;

    // independent evaluation straight from the shell definition
    fn phi_reference(m: &GsfeModel, v: f64, w: f64) -> f64 {
        let mut s = m.c0;
        for (shell, c) in SHELLS.iter().zip([m.c1, m.c2, m.c3]) {
            for k in shell {
                s += c * (k[0] * v + k[1] * w).cos();
            }
        }
        s
    }

    #[test]
    fn aa_value_from_table_coefficients() {
        let m = GsfeModel::graphene();
        // 7.076 + 3(4.064 − 0.374 − 0.095)
        assert_relative_eq!(m.phi(0.0, 0.0), 17.861, epsilon = 1e-12);
        assert_relative_eq!(m.aa_value(), 17.861, epsilon = 1e-12);
    }

    #[test]
    fn ab_minimum_is_near_zero() {
        let m = GsfeModel::graphene();
        let t = 2.0 * PI / 3.0;
        assert!(m.phi(t, t).abs() < 1e-3);
        assert!(m.phi(2.0 * t, 2.0 * t).abs() < 1e-3);
        let (min, z) = m.minimum();
        assert!(min.abs() < 1e-3);
        let at_ab = (z[0] - t).abs() < 1e-6 && (z[1] - t).abs() < 1e-6;
        let at_ba = (z[0] - 2.0 * t).abs() < 1e-6 && (z[1] - 2.0 * t).abs() < 1e-6;
        assert!(at_ab || at_ba, "minimum at {z:?}");
        assert_relative_eq!(min, m.phi(t, t), epsilon = 1e-12);
    }

    #[test]
    fn fast_evaluation_matches_reference() {
        let m = GsfeModel::graphene();
        for i in 0..50 {
            let v = 0.37 * i as f64 - 3.0;
            let w = 1.3 - 0.29 * i as f64;
            assert_relative_eq!(m.phi(v, w), phi_reference(&m, v, w), epsilon = 1e-12);
        }
    }

    #[test]
    fn symmetries() {
        let m = GsfeModel::graphene();
        for (v, w) in [(0.3, 1.1), (-2.0, 0.4), (5.5, 3.3)] {
            let p = m.phi(v, w);
            assert_relative_eq!(p, m.phi(w, v), epsilon = 1e-12);
            assert_relative_eq!(p, m.phi(-v, -w), epsilon = 1e-12);
            assert_relative_eq!(p, m.phi(v + 2.0 * PI, w), epsilon = 1e-12);
            assert_relative_eq!(p, m.phi(v, w + 2.0 * PI), epsilon = 1e-12);
            assert_relative_eq!(p, m.phi(w, -v - w), epsilon = 1e-12);
        }
    }

    #[test]
    fn gradient_and_hessian_match_finite_differences() {
        let m = GsfeModel::graphene();
        let h = 1e-5;
        for (v, w) in [(0.3, 1.1), (-2.0, 0.4), (5.5, 3.3), (2.0, 2.0)] {
            let g = m.grad_phi(v, w);
            let fd = [
                (m.phi(v + h, w) - m.phi(v - h, w)) / (2.0 * h),
                (m.phi(v, w + h) - m.phi(v, w - h)) / (2.0 * h),
            ];
            assert_relative_eq!(g[0], fd[0], epsilon = 1e-8);
            assert_relative_eq!(g[1], fd[1], epsilon = 1e-8);
            let hs = m.hessian_phi(v, w);
            let gp = m.grad_phi(v + h, w);
            let gm = m.grad_phi(v - h, w);
            assert_relative_eq!(hs[0][0], (gp[0] - gm[0]) / (2.0 * h), epsilon = 1e-7);
            assert_relative_eq!(hs[0][1], (gp[1] - gm[1]) / (2.0 * h), epsilon = 1e-7);
        }
    }

    #[test]
    fn stable_difference_agrees_with_direct() {
        let m = GsfeModel::graphene();
        let z = [0.7, -1.9];
        let dz = [0.3, 0.2];
        let direct = m.phi(z[0] + dz[0], z[1] + dz[1]) - m.phi(z[0], z[1]);
        assert_relative_eq!(m.phi_difference(z, dz), direct, epsilon = 1e-12);
    }

    #[test]
    fn critical_difference_keeps_relative_accuracy() {
        let m = GsfeModel::graphene();
        let t = 2.0 * PI / 3.0;
        let z = [t, t];
        let dir = [0.3, -0.7];
        // moderate steps: agrees with the plain difference
        let dz = [0.2 * dir[0], 0.2 * dir[1]];
        assert_relative_eq!(m.phi_difference_at_critical(z, dz), m.phi_difference(z, dz), epsilon = 1e-13);
        // tiny steps: matches the quadratic form
        let h = m.hessian_phi(t, t);
        let q = 0.5 * (h[0][0] * dir[0] * dir[0] + 2.0 * h[0][1] * dir[0] * dir[1] + h[1][1] * dir[1] * dir[1]);
        for s in [1e-8, 1e-12, 1e-20] {
            let d = m.phi_difference_at_critical(z, [s * dir[0], s * dir[1]]);
            assert_relative_eq!(d / (s * s), q, max_relative = 1e-6);
        }
    }

    #[test]
    fn layer_gsfe_at_origin_is_aa() {
        let a = Basis2::hexagonal(1.42);
        let pair = LayerPair::from_family(&StrainFamily::Twist { theta: 0.01 }, &a).unwrap();
        let m = GsfeModel::graphene();
        for which in [1, 2] {
            assert_relative_eq!(
                gsfe_layer(Vec2::zeros(), which, &pair, &m).unwrap(),
                17.861,
                epsilon = 1e-12
            );
            let g = grad_gsfe_layer(Vec2::zeros(), which, &pair, &m).unwrap();
            assert!(g.norm() < 1e-12);
        }
        assert!(gsfe_layer(Vec2::zeros(), 3, &pair, &m).is_err());
    }

    #[test]
    fn layer_gradient_matches_finite_differences() {
        let a = Basis2::hexagonal(1.42);
        let pair = LayerPair::from_family(&StrainFamily::PureShear { eps: 0.01 }, &a).unwrap();
        let m = GsfeModel::graphene();
        // deterministic pseudo-random points
        let mut seed = 12345u64;
        let mut rnd = || {
            seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (seed >> 11) as f64 / (1u64 << 53) as f64
        };
        let h = 1e-6;
        for _ in 0..100 {
            let g = Vec2::new(5.0 * rnd() - 2.5, 5.0 * rnd() - 2.5);
            for which in [1, 2] {
                let grad = grad_gsfe_layer(g, which, &pair, &m).unwrap();
                for d in 0..2 {
                    let mut e = Vec2::zeros();
                    e[d] = h;
                    let fd = (gsfe_layer(g + e, which, &pair, &m).unwrap()
                        - gsfe_layer(g - e, which, &pair, &m).unwrap())
                        / (2.0 * h);
                    let scale = grad.norm().max(1.0);
                    assert!((grad[d] - fd).abs() < 1e-6 * scale, "{} vs {}", grad[d], fd);
                }
            }
        }
    }

    #[test]
    fn graphene_wall_potential_is_normalized_double_well() {
        let a = Basis2::hexagonal(1.42);
        let m = GsfeModel::graphene();
        for i in 1..=3 {
            let u = wall_potential(i, 0.0, &a, &m, 400).unwrap();
            assert!(u.k_min > 0.0);
            assert!(u.value(1.0).abs() < 1e-14);
            assert!(u.value(-1.0).abs() < 1e-14);
            assert!(u.value(0.0) > 0.0);
            assert_relative_eq!(u.second_derivative(1.0), 1.0, epsilon = 1e-8);
            assert_relative_eq!(u.second_derivative(-1.0), 1.0, epsilon = 1e-8);
            for j in 0..=100 {
                let psi = 1.2 * j as f64 / 100.0;
                assert!((u.value(psi) - u.value(-psi)).abs() < 1e-10);
            }
            // AA lies at u = ±3 on this path
            assert_relative_eq!(u.half_width, 3.0, epsilon = 2e-3);
        }
    }

    #[test]
    fn k_min_matches_closed_form_curvature() {
        // along triplet 1 the profile is c₀ + c₁(−2cos x + cos 2x) + c₂(1 − 2cos 3x)
        // + c₃(2cos 2x + cos 4x) with x = πu/3, so Φ''(1) = (π/3)²(3c₁ − 18c₂ + 12c₃)
        let m = GsfeModel::graphene();
        let u = wall_potential(1, 0.0, &Basis2::hexagonal(1.42), &m, 100).unwrap();
        let expected = (PI / 3.0).powi(2) * (3.0 * m.c1 - 18.0 * m.c2 + 12.0 * m.c3);
        assert_relative_eq!(u.k_min, expected, max_relative = 1e-8);
    }

    #[test]
    fn wall_potential_is_rotation_independent() {
        let a = Basis2::hexagonal(1.42);
        let m = GsfeModel::graphene();
        let base = wall_potential(2, 0.0, &a, &m, 100).unwrap();
        for deg in [10.0f64, 33.0] {
            let rotated = wall_potential(2, deg.to_radians(), &a, &m, 100).unwrap();
            for j in 0..=200 {
                let psi = -1.5 + 3.0 * j as f64 / 200.0;
                assert!((base.value(psi) - rotated.value(psi)).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn flat_model_is_rejected() {
        let flat = GsfeModel {
            c0: 1.0,
            c1: 0.0,
            c2: 0.0,
            c3: 0.0,
        };
        let res = wall_potential(1, 0.0, &Basis2::hexagonal(1.42), &flat, 50);
        assert!(matches!(res, Err(Error::ModelInconsistency(_))));
    }

    #[test]
    fn analytic_wells_are_normalized() {
        for u in [WallPotential::quartic(), WallPotential::sine_gordon()] {
            assert!(u.value(1.0).abs() < 1e-15);
            assert!(u.value(0.0) > 0.0);
            assert_relative_eq!(u.second_derivative(1.0), 1.0, epsilon = 1e-12);
            let h = 1e-6;
            let fd = (u.value(0.3 + h) - u.value(0.3 - h)) / (2.0 * h);
            assert_relative_eq!(u.derivative(0.3), fd, epsilon = 1e-8);
        }
        assert_relative_eq!(WallPotential::sine_gordon().half_width, 2.0, epsilon = 2e-3);
    }

    #[test]
    fn moduli_validation() {
        assert!(ElasticModuli::graphene().validate().is_ok());
        assert!(ElasticModuli { lambda: 1.0, mu: 0.0 }.validate().is_err());
        assert!(ElasticModuli { lambda: -2.0, mu: 1.0 }.validate().is_err());
    }
}
