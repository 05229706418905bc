//! Post-processing of relaxed fields: misfit maps, order-parameter cuts across
//! domain walls and their full width at half maximum.

use crate::domainwall::{characteristic_width, kink_fwhm, WallSpec};
use crate::error::{Error, Result};
use crate::gsfe::{ElasticModuli, GsfeModel};
use crate::lattice::{burgers_triplet, Vec2};
use crate::relax::{DisplacementField, EnergyFunctional};

/// Misfit energy density sampled on a raster of the fractional moiré cell.
#[derive(Clone, Debug, PartialEq)]
pub struct GsfeMap {
    /// Raster shape; entry `(a, b)` is at `ξ = (a/rows, b/cols)`.
    pub rows: usize,
    pub cols: usize,
    /// meV per unit-cell area, row-major.
    pub values: Vec<f64>,
}

impl GsfeMap {
    pub fn min(&self) -> f64 {
        self.values.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn at(&self, a: usize, b: usize) -> f64 {
        self.values[a * self.cols + b]
    }

    /// Number of periodic connected regions where the value exceeds
    /// `min + fraction·(max − min)`.
    pub fn count_high_regions(&self, fraction: f64) -> usize {
        let (lo, hi) = (self.min(), self.max());
        let cut = lo + fraction * (hi - lo);
        let high: Vec<bool> = self.values.iter().map(|&v| v > cut).collect();
        let mut seen = vec![false; high.len()];
        let mut regions = 0;
        for start in 0..high.len() {
            if !high[start] || seen[start] {
                continue;
            }
            regions += 1;
            let mut stack = vec![start];
            seen[start] = true;
            while let Some(k) = stack.pop() {
                let (a, b) = (k / self.cols, k % self.cols);
                let nbrs = [
                    ((a + 1) % self.rows, b),
                    ((a + self.rows - 1) % self.rows, b),
                    (a, (b + 1) % self.cols),
                    (a, (b + self.cols - 1) % self.cols),
                ];
                for (p, q) in nbrs {
                    let m = p * self.cols + q;
                    if high[m] && !seen[m] {
                        seen[m] = true;
                        stack.push(m);
                    }
                }
            }
        }
        regions
    }
}

/// Pointwise misfit density `½[Φ₁(b₁→₂ + v) + Φ₂(b₂→₁ − v)]` on a
/// `resolution × resolution` raster, with `v` interpolated spectrally.
pub fn gsfe_map(functional: &EnergyFunctional, field: &DisplacementField, resolution: usize) -> Result<GsfeMap> {
    if resolution == 0 {
        return Err(Error::InvalidArgument("map resolution must be positive".into()));
    }
    if field.shape() != functional.shape() {
        return Err(Error::GridMismatch("field and energy grids differ".into()));
    }
    let xs: Vec<f64> = (0..resolution).map(|a| a as f64 / resolution as f64).collect();
    let v = field.relative_interpolator().on_grid(&xs, &xs);
    let mut values = Vec::with_capacity(resolution * resolution);
    for (a, &x1) in xs.iter().enumerate() {
        for (b, &x2) in xs.iter().enumerate() {
            values.push(functional.misfit_density([x1, x2], v[a * resolution + b]));
        }
    }
    Ok(GsfeMap {
        rows: resolution,
        cols: resolution,
        values,
    })
}

/// Straight segment from `p0` to `p1` (Å, Cartesian) sampled uniformly.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LineCut {
    pub p0: Vec2,
    pub p1: Vec2,
    pub n_samples: usize,
}

impl LineCut {
    pub fn new(p0: Vec2, p1: Vec2, n_samples: usize) -> Result<Self> {
        if (p1 - p0).norm() == 0.0 || n_samples < 8 {
            return Err(Error::InvalidArgument(
                "line cut needs distinct endpoints and at least 8 samples".into(),
            ));
        }
        Ok(LineCut { p0, p1, n_samples })
    }

    pub fn length(&self) -> f64 {
        (self.p1 - self.p0).norm()
    }

    pub fn direction(&self) -> Vec2 {
        (self.p1 - self.p0) / self.length()
    }

    pub fn point(&self, k: usize) -> Vec2 {
        self.p0 + (self.p1 - self.p0) * (k as f64 / (self.n_samples - 1) as f64)
    }
}

/// How the modulated disregistry is projected to a scalar.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Projection {
    /// Onto the translation `TΔb` of the wall's Burgers triplet.
    #[default]
    Burgers,
    /// Onto the principal direction of the disregistry samples along the cut.
    Fitted,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OrderParameterProfile {
    /// Signed distance to the wall center (Å), increasing.
    pub y: Vec<f64>,
    /// Order parameter, increasing from about −1 to about +1.
    pub u: Vec<f64>,
    pub triplet: usize,
    /// Angle between the translation and the cut direction (radians).
    pub normal_angle: f64,
}

/// Fractional moiré coordinate of a Cartesian point.
fn to_xi(functional: &EnergyFunctional, x: Vec2) -> Result<[f64; 2]> {
    let cell = functional.cell();
    Ok(match cell.stripe {
        Some(s) => [x.dot(&s.period) / s.period.norm_squared(), 0.0],
        None => {
            let f = cell.basis.inverse()? * x;
            [f[0], f[1]]
        }
    })
}

/// Angle in `[0, π/2]` between two directions.
fn acute_angle(a: Vec2, b: Vec2) -> f64 {
    let c = (a.dot(&b) / (a.norm() * b.norm())).abs().min(1.0);
    c.acos()
}

/// Order parameter along `cut` for the walls of triplet `triplet`:
/// `u = ⟨b̃₁→₂ − T b_SP, TΔb⟩/‖TΔb‖²` with `T = A₂A⁻¹`, unwrapped by
/// nearest-image continuity from the cut midpoint.
pub fn order_parameter(
    functional: &EnergyFunctional,
    field: &DisplacementField,
    triplet: usize,
    cut: &LineCut,
    projection: Projection,
) -> Result<OrderParameterProfile> {
    if field.shape() != functional.shape() {
        return Err(Error::GridMismatch("field and energy grids differ".into()));
    }
    let pair = functional.pair();
    let reference = pair.reference;
    let bt = burgers_triplet(triplet, reference.lattice_constant())?;
    let ref_inv = reference.inverse()?;
    let a2 = *pair.a2.matrix();
    let inv2 = pair.a2.inverse()?;
    let saddle_f = ref_inv * bt.saddle;
    let translation = a2 * (ref_inv * bt.half_burgers);

    let interp = field.relative_interpolator();
    let n = cut.n_samples;
    // fractional disregistry relative to the saddle, before unwrapping
    let mut frac = Vec::with_capacity(n);
    for k in 0..n {
        let xi = to_xi(functional, cut.point(k))?;
        let d = functional.disregistry_phase(xi);
        let v = interp.at(xi);
        let f = inv2 * v - Vec2::new(d[0], d[1]) - saddle_f;
        frac.push(f);
    }
    let mid = n / 2;
    let round = |f: Vec2| Vec2::new(f[0].round(), f[1].round());
    let shift = round(frac[mid]);
    frac[mid] -= shift;
    for k in mid + 1..n {
        let shift = round(frac[k] - frac[k - 1]);
        frac[k] -= shift;
    }
    for k in (0..mid).rev() {
        let shift = round(frac[k] - frac[k + 1]);
        frac[k] -= shift;
    }
    let cart: Vec<Vec2> = frac.iter().map(|f| a2 * f).collect();
    let direction = match projection {
        Projection::Burgers => translation / translation.norm(),
        Projection::Fitted => {
            let mean = cart.iter().fold(Vec2::zeros(), |s, c| s + c) / n as f64;
            let cov = cart
                .iter()
                .fold(nalgebra::Matrix2::zeros(), |s, c| s + (c - mean) * (c - mean).transpose());
            let eig = cov.symmetric_eigen();
            let i = if eig.eigenvalues[0] >= eig.eigenvalues[1] { 0 } else { 1 };
            let e: Vec2 = eig.eigenvectors.column(i).into_owned();
            if e.dot(&translation) < 0.0 {
                -e
            } else {
                e
            }
        }
    };
    let norm = translation.dot(&direction);
    let mut u: Vec<f64> = cart.iter().map(|c| c.dot(&direction) / norm).collect();
    let mut s: Vec<f64> = (0..n).map(|k| k as f64 * cut.length() / (n - 1) as f64).collect();
    if u[n - 1] < u[0] {
        u.reverse();
        let len = cut.length();
        s = s.iter().rev().map(|v| len - v).collect();
    }
    // one wall only: no significant decrease and a single zero crossing
    let drop = u.windows(2).map(|w| w[0] - w[1]).fold(0.0, f64::max);
    let crossings = u.windows(2).filter(|w| (w[0] < 0.0) != (w[1] < 0.0)).count();
    // passing a second wall moves the unwrapped value towards ±3
    let excess = u.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if drop > 1e-3 || crossings != 1 || excess > 1.5 {
        return Err(Error::AmbiguousCut(format!(
            "cut does not cross exactly one wall (drop {drop:.3e}, {crossings} zero crossings, max |u| {excess:.3})"
        )));
    }
    let s0 = crossing(&s, &u, 0.0).ok_or_else(|| Error::AmbiguousCut("no zero crossing".into()))?;
    let y = s.iter().map(|v| v - s0).collect();
    Ok(OrderParameterProfile {
        y,
        u,
        triplet,
        normal_angle: acute_angle(translation, cut.direction()),
    })
}

/// Abscissa where the increasing samples `u` cross `level`, by cubic
/// interpolation through the four samples around the bracketing interval.
fn crossing(y: &[f64], u: &[f64], level: f64) -> Option<f64> {
    let n = u.len();
    let i = (0..n - 1).find(|&i| u[i] <= level && u[i + 1] > level)?;
    let lo = i.saturating_sub(1).min(n.saturating_sub(4));
    let idx: Vec<usize> = (lo..lo + 4.min(n)).collect();
    let lagrange = |x: f64| -> f64 {
        let mut s = 0.0;
        for &a in &idx {
            let mut w = 1.0;
            for &b in &idx {
                if a != b {
                    w *= (x - y[b]) / (y[a] - y[b]);
                }
            }
            s += w * u[a];
        }
        s
    };
    let (mut a, mut b) = (y[i], y[i + 1]);
    let (mut fa, fb) = (lagrange(a) - level, lagrange(b) - level);
    if fa == 0.0 {
        return Some(a);
    }
    if fa * fb > 0.0 {
        // cubic left the bracket: fall back to linear
        return Some(y[i] + (level - u[i]) * (y[i + 1] - y[i]) / (u[i + 1] - u[i]));
    }
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        let fm = lagrange(m) - level;
        if (fm < 0.0) == (fa < 0.0) {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
        if b - a < 1e-13 * y[i + 1].abs().max(1.0) {
            break;
        }
    }
    Some(0.5 * (a + b))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FwhmResult {
    /// `|y₊ − y₋|` (Å).
    pub l: f64,
    pub y_plus: f64,
    pub y_minus: f64,
    /// Polynomial order of the interpolation.
    pub order: usize,
}

/// Full width at half maximum `|y₊ − y₋|` with `u(y±) = ±½`.
pub fn fwhm(profile: &OrderParameterProfile) -> Result<FwhmResult> {
    let y_plus = crossing(&profile.y, &profile.u, 0.5);
    let y_minus = crossing(&profile.y, &profile.u, -0.5);
    match (y_plus, y_minus) {
        (Some(p), Some(m)) => Ok(FwhmResult {
            l: (p - m).abs(),
            y_plus: p,
            y_minus: m,
            order: 3,
        }),
        _ => Err(Error::UnresolvedWall(
            "order parameter does not reach ±1/2 inside the cut".into(),
        )),
    }
}

/// Cut from the AB domain centroid to the BA domain centroid across a wall of
/// triplet `triplet` (full-rank cells only).
pub fn wall_cut(functional: &EnergyFunctional, triplet: usize, n_samples: usize) -> Result<LineCut> {
    let cell = functional.cell();
    if cell.stripe.is_some() {
        return Err(Error::InvalidArgument("wall cuts need a full-rank moiré cell".into()));
    }
    let end = match triplet {
        1 => [2.0 / 3.0, 2.0 / 3.0],
        2 => [-1.0 / 3.0, 2.0 / 3.0],
        3 => [2.0 / 3.0, -1.0 / 3.0],
        _ => return Err(Error::TripletIndex(triplet)),
    };
    let m = cell.basis.matrix();
    LineCut::new(m * Vec2::new(1.0 / 3.0, 1.0 / 3.0), m * Vec2::new(end[0], end[1]), n_samples)
}

/// Angle between the translation of `triplet` and the normal of its walls.
pub fn wall_normal_angle(functional: &EnergyFunctional, triplet: usize) -> Result<f64> {
    let cut = wall_cut(functional, triplet, 8)?;
    let pair = functional.pair();
    let bt = burgers_triplet(triplet, pair.reference.lattice_constant())?;
    let translation = pair.a2.matrix() * (pair.reference.inverse()? * bt.half_burgers);
    Ok(acute_angle(translation, cut.direction()))
}

/// Wall classification by the angle between translation and wall normal.
pub fn wall_kind(angle: f64) -> &'static str {
    let deg = angle.to_degrees();
    if deg > 80.0 {
        "shear"
    } else if deg < 10.0 {
        "tensile"
    } else {
        "mixed"
    }
}

/// One relaxed configuration entering the width table.
pub struct SweepRun<'a> {
    pub family: &'a str,
    pub parameter: f64,
    pub functional: &'a EnergyFunctional,
    pub field: &'a DisplacementField,
    pub triplets: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReportRow {
    pub family: String,
    pub parameter: f64,
    pub triplet: usize,
    pub wall: String,
    pub normal_angle: f64,
    pub fwhm: f64,
    /// `L / L⁰_⊥`.
    pub ratio: f64,
    /// `l_φ / l_⊥` from the configured moduli.
    pub theory_ratio: f64,
    pub profile: OrderParameterProfile,
}

/// Shear-wall FWHM predicted by the kink theory (Å).
pub fn predicted_shear_fwhm(reference: &crate::lattice::Basis2, moduli: ElasticModuli, model: &GsfeModel) -> Result<f64> {
    let spec = WallSpec::with_normal_angle(1, std::f64::consts::FRAC_PI_2, reference, moduli, model)?;
    Ok(kink_fwhm(&spec.potential)? * characteristic_width(&spec).l_perp)
}

/// Width table: one row per run and triplet. `l0_perp` is the reference shear
/// width; when absent the shear wall of the last twist run is used, and the kink
/// prediction if there is none.
pub fn width_table(
    runs: &[SweepRun<'_>],
    moduli: ElasticModuli,
    model: &GsfeModel,
    samples_per_angstrom: f64,
    l0_perp: Option<f64>,
) -> Result<Vec<ReportRow>> {
    let mut rows = Vec::new();
    for run in runs {
        for &i in &run.triplets {
            let probe = wall_cut(run.functional, i, 8)?;
            let n = ((probe.length() * samples_per_angstrom).ceil() as usize).max(64) | 1;
            let cut = wall_cut(run.functional, i, n)?;
            let profile = order_parameter(run.functional, run.field, i, &cut, Projection::Burgers)?;
            let w = fwhm(&profile)?;
            let spec = WallSpec::with_normal_angle(
                i,
                profile.normal_angle,
                &run.functional.pair().reference,
                moduli,
                model,
            )?;
            rows.push(ReportRow {
                family: run.family.to_string(),
                parameter: run.parameter,
                triplet: i,
                wall: wall_kind(profile.normal_angle).to_string(),
                normal_angle: profile.normal_angle,
                fwhm: w.l,
                ratio: f64::NAN,
                theory_ratio: characteristic_width(&spec).ratio(),
                profile,
            });
        }
    }
    let l0 = match l0_perp {
        Some(l) => l,
        None => {
            let last_twist = runs.iter().rev().find(|r| r.family == "twist").map(|r| r.parameter);
            let twist_row = rows
                .iter()
                .filter(|r| Some(r.parameter) == last_twist && r.family == "twist" && r.wall == "shear")
                .map(|r| r.fwhm)
                .next();
            match twist_row {
                Some(l) => l,
                None => {
                    let reference = runs
                        .first()
                        .map(|r| r.functional.pair().reference)
                        .ok_or_else(|| Error::InvalidArgument("empty sweep".into()))?;
                    predicted_shear_fwhm(&reference, moduli, model)?
                }
            }
        }
    };
    for r in rows.iter_mut() {
        r.ratio = r.fwhm / l0;
    }
    Ok(rows)
}
