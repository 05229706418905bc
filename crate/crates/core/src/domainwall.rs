//! One-dimensional domain-wall theory.
//!
//! A straight wall between two Bernal stackings is described by a scalar order
//! parameter `ψ(t)`, `t = y/l_φ`, solving `ψ'' = U'(ψ)` with `ψ(±∞) = ±1`. The
//! first integral `½ψ'² = U(ψ)` reduces the problem to the quadrature
//! `t(ψ) = ∫₀^ψ dσ/√(2U(σ))`, evaluated in the variable `τ = −ln(1 − |σ|)` in
//! which the integrand is smooth and tends to one at the wells. Tails `1 − |ψ|`
//! are kept as `e^{−τ}` so they stay accurate far beyond `ε_mach`.

use crate::error::{Error, Result};
use crate::gsfe::{wall_potential, ElasticModuli, GsfeModel, WallPotential};
use crate::lattice::{burgers_triplet, rotation, Basis2, Vec2};

/// A straight wall of triplet `i` in a bilayer rotated by `φ`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WallSpec {
    pub triplet: usize,
    pub phi_rot: f64,
    /// Direction angle of `Δb_i`.
    pub theta0: f64,
    pub half_burgers: Vec2,
    pub moduli: ElasticModuli,
    pub potential: WallPotential,
    /// Reference unit-cell area (Å²) converting GSFE units to meV/Å².
    pub cell_area: f64,
}

impl WallSpec {
    pub fn new(
        triplet: usize,
        phi_rot: f64,
        reference: &Basis2,
        moduli: ElasticModuli,
        model: &GsfeModel,
    ) -> Result<Self> {
        moduli.validate()?;
        let t = burgers_triplet(triplet, reference.lattice_constant())?;
        let potential = wall_potential(triplet, phi_rot, reference, model, 2000)?;
        Ok(WallSpec {
            triplet,
            phi_rot,
            theta0: t.theta0,
            half_burgers: t.half_burgers,
            moduli,
            potential,
            cell_area: reference.cell_area(),
        })
    }

    /// Wall of triplet `i` whose translation makes angle `angle` with the wall normal.
    pub fn with_normal_angle(
        triplet: usize,
        angle: f64,
        reference: &Basis2,
        moduli: ElasticModuli,
        model: &GsfeModel,
    ) -> Result<Self> {
        let theta0 = burgers_triplet(triplet, reference.lattice_constant())?.theta0;
        WallSpec::new(triplet, angle - theta0, reference, moduli, model)
    }

    /// `θ₀ + φ`, the angle between `R_φΔb` and the wall normal.
    pub fn normal_angle(&self) -> f64 {
        self.theta0 + self.phi_rot
    }

    /// Rotated translation `R_φ Δb`.
    pub fn translation(&self) -> Vec2 {
        rotation(self.phi_rot) * self.half_burgers
    }
}

/// Characteristic widths (Å).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CharacteristicWidth {
    /// `l_φ` at the wall's own angle.
    pub l_phi: f64,
    /// Shear wall (`cos = 0`).
    pub l_perp: f64,
    /// Tensile wall (`cos = 1`).
    pub l_par: f64,
}

impl CharacteristicWidth {
    /// `l_φ / l_⊥ = √(1 + (λ+μ)/μ · cos²(θ₀+φ))`.
    pub fn ratio(&self) -> f64 {
        self.l_phi / self.l_perp
    }
}

/// `l_φ = √(((λ+μ)cos²(θ₀+φ) + μ)/(2k_min)) ‖Δb‖`.
pub fn characteristic_width(spec: &WallSpec) -> CharacteristicWidth {
    let width = |c: f64| {
        let m = &spec.moduli;
        (((m.lambda + m.mu) * c * c + m.mu) / (2.0 * spec.potential.k_min)).sqrt() * spec.half_burgers.norm()
    };
    CharacteristicWidth {
        l_phi: width(spec.normal_angle().cos()),
        l_perp: width(0.0),
        l_par: width(1.0),
    }
}

/// Sampled kink profile on a uniform grid of `[−T, T]`.
#[derive(Clone, Debug, PartialEq)]
pub struct KinkSolution {
    pub t: Vec<f64>,
    pub psi: Vec<f64>,
    /// `1 − |ψ|` at each node, without cancellation.
    pub tail: Vec<f64>,
    /// Asymptotic amplitude from [`asymptotic_check`] on the default window.
    pub kappa: f64,
    /// Characteristic width in Å; 1 for a dimensionless profile.
    pub l: f64,
    pub half_domain: f64,
    /// Largest `|ψ'' − U'(ψ)|` on interior nodes.
    pub residual: f64,
}

impl KinkSolution {
    pub fn spacing(&self) -> f64 {
        self.t[1] - self.t[0]
    }

    /// Physical coordinate `y = l·t` (Å).
    pub fn y(&self) -> Vec<f64> {
        self.t.iter().map(|t| t * self.l).collect()
    }

    pub fn with_width(mut self, l: f64) -> Self {
        self.l = l;
        self
    }
}

// Gauss–Kronrod 7/15 abscissae and weights on [−1, 1].
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = WGK[7] * fc;
    let mut g = WG[3] * fc;
    for j in 0..7 {
        let x = h * XGK[j];
        let s = f(c - x) + f(c + x);
        k += WGK[j] * s;
        if j % 2 == 1 {
            g += WG[j / 2] * s;
        }
    }
    (k * h, (k - g).abs() * h)
}

/// Adaptive Gauss–Kronrod quadrature to absolute tolerance `tol`.
pub fn integrate(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> Result<f64> {
    const MAX_PANELS: usize = 20_000;
    if a == b {
        return Ok(0.0);
    }
    let (v0, _) = gk15(f, a, b);
    // rounding floor relative to the whole integral
    let floor = 50.0 * f64::EPSILON * v0.abs();
    let mut stack = vec![(a, b, tol.max(floor))];
    let mut total = 0.0;
    let mut panels = 0;
    while let Some((lo, hi, t)) = stack.pop() {
        panels += 1;
        if panels > MAX_PANELS {
            return Err(Error::Quadrature(format!("no convergence on [{a}, {b}]")));
        }
        let (v, err) = gk15(f, lo, hi);
        if !v.is_finite() {
            return Err(Error::Quadrature(format!("non-finite integrand on [{lo}, {hi}]")));
        }
        if err <= t.max(floor * (hi - lo) / (b - a)) {
            total += v;
        } else {
            let m = 0.5 * (lo + hi);
            stack.push((m, hi, 0.5 * t));
            stack.push((lo, m, 0.5 * t));
        }
    }
    Ok(total)
}

/// Integrand `dt/dτ` on one side of the kink (`sign = ±1`).
fn dt_dtau(potential: &WallPotential, tau: f64, sign: f64) -> f64 {
    let s = (-tau).exp();
    let u = potential.value_near_well(s, sign);
    s / (2.0 * u).sqrt()
}

const PANEL: f64 = 0.25;
const QUAD_TOL: f64 = 1e-14;

/// Monotone map `τ ↦ t` on one side, tabulated on panels of width `PANEL`.
struct HalfKink<'a> {
    potential: &'a WallPotential,
    sign: f64,
    /// `t` at `τ = k·PANEL`.
    table: Vec<f64>,
}

impl<'a> HalfKink<'a> {
    fn new(potential: &'a WallPotential, sign: f64, t_max: f64) -> Result<Self> {
        let mut table = vec![0.0];
        let f = |tau: f64| dt_dtau(potential, tau, sign);
        while *table.last().expect("nonempty") < t_max {
            let k = table.len() - 1;
            let a = k as f64 * PANEL;
            let piece = integrate(&f, a, a + PANEL, QUAD_TOL)?;
            if !(piece > 0.0) {
                return Err(Error::Quadrature("kink integrand is not positive".into()));
            }
            table.push(table[k] + piece);
            if table.len() > 100_000 {
                return Err(Error::Quadrature("kink table does not reach the requested half-domain".into()));
            }
        }
        Ok(HalfKink { potential, sign, table })
    }

    /// `τ` with `t(τ) = target` by Newton's method inside the bracketing panel.
    fn invert(&self, target: f64) -> Result<f64> {
        if target <= 0.0 {
            return Ok(0.0);
        }
        let k = match self.table.iter().position(|&t| t > target) {
            Some(p) => p - 1,
            None => return Err(Error::Quadrature("target beyond tabulated range".into())),
        };
        let a = k as f64 * PANEL;
        let (t_a, t_b) = (self.table[k], self.table[k + 1]);
        let f = |tau: f64| dt_dtau(self.potential, tau, self.sign);
        let mut tau = a + PANEL * (target - t_a) / (t_b - t_a);
        for _ in 0..50 {
            let t = t_a + integrate(&f, a, tau, QUAD_TOL)?;
            let step = (t - target) / f(tau);
            tau = (tau - step).clamp(a, a + PANEL);
            if step.abs() < 1e-15 * tau.max(1.0) {
                return Ok(tau);
            }
        }
        Ok(tau)
    }
}

/// Default half-domain `T`.
pub const DEFAULT_HALF_DOMAIN: f64 = 12.0;

/// Solve `ψ'' = U'(ψ)` on `[−T, T]` with `n` uniform samples (`n` odd keeps `t = 0`).
///
/// The residual is checked with finite differences, so the spacing must be
/// fine enough for them to resolve it (about `h ≤ 0.05`).
pub fn solve_kink(potential: &WallPotential, half_domain: f64, n: usize) -> Result<KinkSolution> {
    if !(half_domain > 0.0) || n < 9 {
        return Err(Error::InvalidArgument("need T > 0 and at least 9 samples".into()));
    }
    potential.check_double_well(400)?;
    let plus = HalfKink::new(potential, 1.0, half_domain)?;
    let minus = HalfKink::new(potential, -1.0, half_domain)?;
    let h = 2.0 * half_domain / (n - 1) as f64;
    let mut t = Vec::with_capacity(n);
    let mut psi = Vec::with_capacity(n);
    let mut tail = Vec::with_capacity(n);
    for i in 0..n {
        let ti = -half_domain + i as f64 * h;
        let (sign, side) = if ti >= 0.0 { (1.0, &plus) } else { (-1.0, &minus) };
        let tau = side.invert(ti.abs())?;
        // 1 − e^{−τ} without cancellation
        let p = -(-tau).exp_m1();
        t.push(ti);
        psi.push(sign * p);
        tail.push((-tau).exp());
    }
    let mut sol = KinkSolution {
        t,
        psi,
        tail,
        kappa: f64::NAN,
        l: 1.0,
        half_domain,
        residual: 0.0,
    };
    sol.residual = residual(&sol, potential);
    if sol.residual > 1e-6 {
        return Err(Error::Quadrature(format!(
            "kink residual {:e} exceeds 1e-6 at spacing {h:.3}; increase the sample count",
            sol.residual
        )));
    }
    if half_domain >= 4.0 {
        sol.kappa = asymptotic_check(&sol)?.kappa;
    }
    Ok(sol)
}

const D1: [f64; 3] = [3.0 / 4.0, -3.0 / 20.0, 1.0 / 60.0];
const D2: [f64; 4] = [-49.0 / 18.0, 3.0 / 2.0, -3.0 / 20.0, 1.0 / 90.0];

/// Sixth-order central first derivative at interior nodes (zero within 3 of the ends).
pub fn derivative(values: &[f64], h: f64) -> Vec<f64> {
    let n = values.len();
    let mut d = vec![0.0; n];
    for i in 3..n.saturating_sub(3) {
        let mut s = 0.0;
        for (k, c) in D1.iter().enumerate() {
            s += c * (values[i + k + 1] - values[i - k - 1]);
        }
        d[i] = s / h;
    }
    d
}

fn residual(sol: &KinkSolution, potential: &WallPotential) -> f64 {
    let h = sol.spacing();
    let n = sol.psi.len();
    let mut worst: f64 = 0.0;
    for i in 3..n - 3 {
        let mut s = D2[0] * sol.psi[i];
        for k in 1..4 {
            s += D2[k] * (sol.psi[i + k] + sol.psi[i - k]);
        }
        let r = s / (h * h) - potential.derivative(sol.psi[i]);
        worst = worst.max(r.abs());
    }
    worst
}

/// Dimensionless FWHM `t(½) − t(−½)` of the kink of `U`.
pub fn kink_fwhm(potential: &WallPotential) -> Result<f64> {
    let tau_half = std::f64::consts::LN_2;
    let mut total = 0.0;
    for sign in [1.0, -1.0] {
        let f = |tau: f64| dt_dtau(potential, tau, sign);
        total += integrate(&f, 0.0, tau_half, QUAD_TOL)?;
    }
    Ok(total)
}

/// Fit of the tail `1 − ψ(t) = κe^{−t} + c₁e^{−2t} + c₂e^{−3t}` on `t > 0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AsymptoticFit {
    pub kappa: f64,
    /// `max |ψ(t) − 1 + κe^{−t}|·e^{2t}` over the window.
    pub max_defect: f64,
    pub window: (f64, f64),
}

/// Fit on the default window `[T/2, T − 1]`.
pub fn asymptotic_check(sol: &KinkSolution) -> Result<AsymptoticFit> {
    let t = sol.half_domain;
    asymptotic_check_window(sol, 0.5 * t, t - 1.0)
}

/// Least-squares fit of `(1 − ψ)eᵗ = κ + c₁e^{−t} + c₂e^{−2t}` on `[a, b]`.
pub fn asymptotic_check_window(sol: &KinkSolution, a: f64, b: f64) -> Result<AsymptoticFit> {
    let rows: Vec<(f64, f64)> = sol
        .t
        .iter()
        .zip(&sol.tail)
        .filter(|(&t, &s)| t >= a - 1e-12 && t <= b + 1e-12 && s > 0.0)
        .map(|(&t, &s)| (t, s))
        .collect();
    if rows.len() < 3 || !(b > a) {
        return Err(Error::InvalidArgument(format!(
            "asymptotic window [{a}, {b}] holds too few positive tail samples"
        )));
    }
    let mut ata = nalgebra::Matrix3::<f64>::zeros();
    let mut atb = nalgebra::Vector3::<f64>::zeros();
    for &(t, s) in &rows {
        let e = (-t).exp();
        let basis = nalgebra::Vector3::new(1.0, e, e * e);
        ata += basis * basis.transpose();
        atb += basis * (s * t.exp());
    }
    let coef = ata
        .try_inverse()
        .ok_or_else(|| Error::InvalidArgument("degenerate asymptotic fit".into()))?
        * atb;
    let kappa = coef[0];
    let max_defect = rows
        .iter()
        .map(|&(t, s)| (kappa * (-t).exp() - s).abs() * (2.0 * t).exp())
        .fold(0.0, f64::max);
    Ok(AsymptoticFit {
        kappa,
        max_defect,
        window: (a, b),
    })
}

/// Gradient and potential parts of the wall energy (meV/Å).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WallEnergy {
    pub gradient: f64,
    pub potential: f64,
    pub total: f64,
}

/// `(k_min l_φ / A_cell) ∫ ½ψ'² + U(ψ) dt`, the Φ_min background removed.
pub fn wall_energy_per_length(spec: &WallSpec, sol: &KinkSolution) -> WallEnergy {
    let l = characteristic_width(spec).l_phi;
    let h = sol.spacing();
    let dpsi = derivative(&sol.psi, h);
    let n = sol.psi.len();
    let mut grad = 0.0;
    let mut pot = 0.0;
    for i in 3..n - 3 {
        grad += 0.5 * dpsi[i] * dpsi[i];
        let sign = if sol.psi[i] >= 0.0 { 1.0 } else { -1.0 };
        pot += spec.potential.value_near_well(sol.tail[i], sign);
    }
    let scale = spec.potential.k_min * l / spec.cell_area * h;
    WallEnergy {
        gradient: grad * scale,
        potential: pot * scale,
        total: (grad + pot) * scale,
    }
}
