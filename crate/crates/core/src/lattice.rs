//! Bravais-lattice and moiré geometry.
//!
//! Layer lattices are described by fundamental matrices whose columns generate
//! the lattice. Two nearly identical layers `A1`, `A2` produce the moiré lattice
//! `A_M = (A1⁻¹ − A2⁻¹)⁻¹`; when the difference matrix has rank one (simple
//! shear) the Moore–Penrose inverse is used instead and the moiré is a set of
//! parallel stripes.
//!
//! Disregistries are reduced in fractional coordinates of the target lattice and
//! wrapped into `[0, 1)²`. The unwrapped linear maps are exposed separately for
//! curl and homomorphism checks.

use std::f64::consts::PI;

use nalgebra::{Matrix2, Vector2};

use crate::error::{Error, Result};

pub type Vec2 = Vector2<f64>;
pub type Mat2 = Matrix2<f64>;

/// Relative singular-value threshold below which the moiré difference matrix
/// is treated as rank one.
pub const RANK_TOLERANCE: f64 = 1e-10;

/// Relative determinant threshold used to decide invertibility of a basis.
pub const SINGULAR_TOLERANCE: f64 = 1e-12;

/// Rotation matrix `R_φ`.
pub fn rotation(angle: f64) -> Mat2 {
    let (s, c) = angle.sin_cos();
    Mat2::new(c, -s, s, c)
}

/// `J = R_{−π/2}`.
pub fn quarter_turn() -> Mat2 {
    Mat2::new(0.0, 1.0, -1.0, 0.0)
}

/// A 2×2 fundamental matrix whose columns are lattice generators (Å).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Basis2(Mat2);

impl Basis2 {
    pub fn new(matrix: Mat2) -> Self {
        Basis2(matrix)
    }

    pub fn from_columns(a1: Vec2, a2: Vec2) -> Self {
        Basis2(Mat2::from_columns(&[a1, a2]))
    }

    /// Triangular graphene basis `√3 a₀ (√3/2 √3/2; −1/2 1/2)` with `a₀` the
    /// carbon–carbon bond length. This is the basis used for all numerics.
    pub fn hexagonal(bond_length: f64) -> Self {
        let a = 3f64.sqrt() * bond_length;
        let h = 3f64.sqrt() / 2.0;
        Basis2(Mat2::new(a * h, a * h, -0.5 * a, 0.5 * a))
    }

    /// Alternate graphene basis `a (√3/2 0; −1/2 1)` with `a` the lattice constant.
    /// Generates the same lattice as [`Basis2::hexagonal`] with `a = √3 a₀`.
    pub fn conventional(lattice_constant: f64) -> Self {
        let a = lattice_constant;
        Basis2(Mat2::new(a * 3f64.sqrt() / 2.0, 0.0, -0.5 * a, a))
    }

    pub fn matrix(&self) -> &Mat2 {
        &self.0
    }

    pub fn column(&self, j: usize) -> Vec2 {
        self.0.column(j).into_owned()
    }

    pub fn det(&self) -> f64 {
        self.0.determinant()
    }

    /// Unit-cell area `|det A|` in Å².
    pub fn cell_area(&self) -> f64 {
        self.det().abs()
    }

    /// Length of the first generator; the lattice constant for the graphene bases.
    pub fn lattice_constant(&self) -> f64 {
        self.column(0).norm()
    }

    pub fn is_invertible(&self) -> bool {
        let scale = self.0.norm_squared();
        scale > 0.0 && self.det().abs() > SINGULAR_TOLERANCE * scale
    }

    pub fn inverse(&self) -> Result<Mat2> {
        if !self.is_invertible() {
            return Err(Error::SingularBasis { det: self.det() });
        }
        self.0
            .try_inverse()
            .ok_or(Error::SingularBasis { det: self.det() })
    }

    /// Fractional coordinates `A⁻¹x`.
    pub fn to_fractional(&self, x: Vec2) -> Result<Vec2> {
        Ok(self.inverse()? * x)
    }

    /// Reduce `x` modulo the lattice into the unit cell `A [0,1)²`.
    pub fn wrap(&self, x: Vec2) -> Result<Vec2> {
        let f = self.to_fractional(x)?;
        Ok(self.0 * wrap_unit(f))
    }

    /// Apply a linear deformation `F A`.
    pub fn deformed(&self, deformation: &Mat2) -> Basis2 {
        Basis2(deformation * self.0)
    }
}

fn wrap_unit(f: Vec2) -> Vec2 {
    f.map(|c| {
        let w = c - c.floor();
        // c - floor(c) can round up to exactly 1 for tiny negative c
        if w >= 1.0 {
            0.0
        } else {
            w
        }
    })
}

/// The four pure strain families applied symmetrically to the two layers.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StrainFamily {
    /// Opposite rotations `A₁ = R_{−θ/2}A`, `A₂ = R_{θ/2}A` (θ in radians).
    Twist { theta: f64 },
    /// Isotropic contraction/dilation `A₁ = (1−ε/2)A`, `A₂ = (1+ε/2)A`.
    Dilation { eps: f64 },
    /// Trace-free tensile strain along the coordinate axes.
    PureShear { eps: f64 },
    /// Horizontal simple shear; the moiré is one-dimensional.
    SimpleShear { eps: f64 },
}

impl StrainFamily {
    pub fn name(&self) -> &'static str {
        match self {
            StrainFamily::Twist { .. } => "twist",
            StrainFamily::Dilation { .. } => "dilation",
            StrainFamily::PureShear { .. } => "pure_shear",
            StrainFamily::SimpleShear { .. } => "simple_shear",
        }
    }

    /// Angle in radians for twists, strain amplitude otherwise.
    pub fn parameter(&self) -> f64 {
        match *self {
            StrainFamily::Twist { theta } => theta,
            StrainFamily::Dilation { eps }
            | StrainFamily::PureShear { eps }
            | StrainFamily::SimpleShear { eps } => eps,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            StrainFamily::Twist { theta } => {
                if !theta.is_finite() {
                    return Err(Error::InvalidArgument(format!("twist angle {theta}")));
                }
                if theta.sin().abs() < 1e-14 {
                    return Err(Error::Degenerate(format!(
                        "twist angle {theta} rad is a multiple of pi"
                    )));
                }
            }
            StrainFamily::Dilation { eps }
            | StrainFamily::PureShear { eps }
            | StrainFamily::SimpleShear { eps } => {
                if !eps.is_finite() || eps.abs() >= 2.0 {
                    return Err(Error::InvalidArgument(format!(
                        "strain {eps} must satisfy |eps| < 2"
                    )));
                }
                if eps == 0.0 {
                    return Err(Error::Degenerate(format!(
                        "{} strain must be nonzero",
                        self.name()
                    )));
                }
            }
        }
        Ok(())
    }

    /// Left deformations `(F₁, F₂)` with `A_j = F_j A`.
    pub fn deformations(&self) -> (Mat2, Mat2) {
        match *self {
            StrainFamily::Twist { theta } => (rotation(-theta / 2.0), rotation(theta / 2.0)),
            StrainFamily::Dilation { eps } => (
                Mat2::identity() * (1.0 - eps / 2.0),
                Mat2::identity() * (1.0 + eps / 2.0),
            ),
            StrainFamily::PureShear { eps } => (
                Mat2::new(1.0 - eps / 2.0, 0.0, 0.0, 1.0 + eps / 2.0),
                Mat2::new(1.0 + eps / 2.0, 0.0, 0.0, 1.0 - eps / 2.0),
            ),
            StrainFamily::SimpleShear { eps } => (
                Mat2::new(1.0, -eps / 2.0, 0.0, 1.0),
                Mat2::new(1.0, eps / 2.0, 0.0, 1.0),
            ),
        }
    }
}

/// Deformed layer lattices `(A₁, A₂)` for a strain family applied to `base`.
pub fn layer_pair(family: &StrainFamily, base: &Basis2) -> Result<(Basis2, Basis2)> {
    family.validate()?;
    let (f1, f2) = family.deformations();
    Ok((base.deformed(&f1), base.deformed(&f2)))
}

/// Reference lattice and the two deformed layer lattices.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LayerPair {
    pub reference: Basis2,
    pub a1: Basis2,
    pub a2: Basis2,
}

impl LayerPair {
    pub fn new(reference: Basis2, a1: Basis2, a2: Basis2) -> Result<Self> {
        reference.inverse()?;
        a1.inverse()?;
        a2.inverse()?;
        Ok(LayerPair { reference, a1, a2 })
    }

    pub fn from_family(family: &StrainFamily, reference: &Basis2) -> Result<Self> {
        let (a1, a2) = layer_pair(family, reference)?;
        LayerPair::new(*reference, a1, a2)
    }

    pub fn layer(&self, j: usize) -> &Basis2 {
        match j {
            1 => &self.a1,
            2 => &self.a2,
            _ => panic!("layer index must be 1 or 2, got {j}"),
        }
    }

    /// `A₁⁻¹ − A₂⁻¹`.
    pub fn difference(&self) -> Mat2 {
        self.a1.inverse().expect("validated") - self.a2.inverse().expect("validated")
    }

    /// Deformation `A_j A⁻¹` carrying reference-lattice vectors onto layer `j`.
    pub fn transfer(&self, j: usize) -> Mat2 {
        self.layer(j).matrix() * self.reference.inverse().expect("validated")
    }
}

/// Geometry of a rank-one (striped) moiré.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Stripe {
    /// Shortest vector `P` along which the disregistry is periodic (Å).
    pub period: Vec2,
    /// Integer vector `(A₁⁻¹ − A₂⁻¹) P`: fractional disregistry advance over one period.
    pub winding: [i64; 2],
}

/// The moiré fundamental matrix and discretization metadata.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MoireCell {
    pub basis: Basis2,
    pub rank: usize,
    pub grid_n: usize,
    pub stripe: Option<Stripe>,
}

impl MoireCell {
    /// Grid shape `(n₁, n₂)`: `N×N` for full rank, `N×1` along the stripe period otherwise.
    pub fn grid_shape(&self) -> (usize, usize) {
        match self.rank {
            2 => (self.grid_n, self.grid_n),
            _ => (self.grid_n, 1),
        }
    }

    /// Basis with one zero column for rank one (`[P, 0]`); `A_M` otherwise.
    pub fn canonical_basis(&self) -> Basis2 {
        match self.stripe {
            Some(s) => Basis2::from_columns(s.period, Vec2::zeros()),
            None => self.basis,
        }
    }

    /// Cell measure: area (Å²) for full rank, period length (Å) for stripes.
    pub fn measure(&self) -> f64 {
        match self.stripe {
            Some(s) => s.period.norm(),
            None => self.basis.cell_area(),
        }
    }

    /// Moiré length scale: Frobenius norm of `A_M` (or `|P|` for stripes).
    pub fn scale(&self) -> f64 {
        match self.stripe {
            Some(s) => s.period.norm(),
            None => self.basis.matrix().norm(),
        }
    }
}

/// Moore–Penrose pseudo-inverse of a 2×2 matrix together with its singular values
/// `(σ₁, σ₂)`, `σ₁ ≥ σ₂`. Singular values below `RANK_TOLERANCE·σ₁` are dropped.
pub fn pseudo_inverse(m: &Mat2) -> (Mat2, [f64; 2]) {
    let mtm = m.transpose() * m;
    let (p, q, r) = (mtm[(0, 0)], mtm[(0, 1)], mtm[(1, 1)]);
    let half_trace = 0.5 * (p + r);
    let disc = (0.25 * (p - r) * (p - r) + q * q).sqrt();
    let s1 = (half_trace + disc).max(0.0).sqrt();
    if s1 == 0.0 {
        return (Mat2::zeros(), [0.0, 0.0]);
    }
    // the small singular value from the determinant keeps full relative accuracy
    let s2 = m.determinant().abs() / s1;
    // right singular vector for σ₁²
    let v1 = if q.abs() > 0.0 || p != r {
        let (a, b) = if p >= r {
            (half_trace + disc - r, q)
        } else {
            (q, half_trace + disc - p)
        };
        Vec2::new(a, b).normalize()
    } else {
        Vec2::new(1.0, 0.0)
    };
    let v2 = Vec2::new(-v1[1], v1[0]);
    let u1 = m * v1 / s1;
    let mut pinv = v1 * u1.transpose() / s1;
    if s2 > RANK_TOLERANCE * s1 {
        let u2 = m * v2 / s2;
        pinv += v2 * u2.transpose() / s2;
    }
    (pinv, [s1, s2])
}

/// Moiré cell of a layer pair.
pub fn moire_cell(a1: &Basis2, a2: &Basis2, grid_n: usize) -> Result<MoireCell> {
    if grid_n == 0 {
        return Err(Error::InvalidArgument("grid size must be positive".into()));
    }
    let diff = a1.inverse()? - a2.inverse()?;
    let (pinv, [s1, s2]) = pseudo_inverse(&diff);
    let scale = a1.inverse()?.norm();
    if s1 <= 1e-14 * scale {
        return Err(Error::NoMoire);
    }
    if s2 > RANK_TOLERANCE * s1 {
        let inv = diff.try_inverse().ok_or(Error::NoMoire)?;
        return Ok(MoireCell {
            basis: Basis2::new(inv),
            rank: 2,
            grid_n,
            stripe: None,
        });
    }
    // rank one: range(diff) is spanned by a single direction; the stripe period is
    // the preimage of the primitive integer vector along it
    let dir = diff * pinv * Vec2::new(1.0, 0.0);
    let dir = if dir.norm() > 1e-300 {
        dir
    } else {
        diff * pinv * Vec2::new(0.0, 1.0)
    };
    let winding = primitive_integer_direction(dir).ok_or_else(|| {
        Error::Degenerate("rank-one moire with irrational stripe direction".into())
    })?;
    let m = Vec2::new(winding[0] as f64, winding[1] as f64);
    let period = pinv * m;
    Ok(MoireCell {
        basis: Basis2::new(pinv),
        rank: 1,
        grid_n,
        stripe: Some(Stripe { period, winding }),
    })
}

/// Smallest nonzero integer vector parallel to `d`, if `d` has a rational slope
/// with small denominator.
fn primitive_integer_direction(d: Vec2) -> Option<[i64; 2]> {
    let d = d.normalize();
    let (x, y) = (d[0], d[1]);
    let (swap, a, b) = if x.abs() >= y.abs() {
        (false, x, y)
    } else {
        (true, y, x)
    };
    // ratio b/a in [-1, 1]; continued fraction expansion
    let r = b / a;
    let (mut h0, mut h1) = (0i64, 1i64);
    let (mut k0, mut k1) = (1i64, 0i64);
    let mut rem = r;
    for _ in 0..40 {
        let ai = rem.floor();
        let ai_i = ai as i64;
        let h2 = ai_i * h1 + h0;
        let k2 = ai_i * k1 + k0;
        h0 = h1;
        h1 = h2;
        k0 = k1;
        k1 = k2;
        if ((h1 as f64) / (k1 as f64) - r).abs() < 1e-9 {
            break;
        }
        let frac = rem - ai;
        if frac.abs() < 1e-12 || k1 > 100_000 {
            break;
        }
        rem = 1.0 / frac;
    }
    if k1 == 0 || ((h1 as f64) / (k1 as f64) - r).abs() > 1e-9 {
        return None;
    }
    // (a, b) ∝ (k1, h1), sign follows a
    let sign = if a >= 0.0 { 1 } else { -1 };
    let (ia, ib) = (sign * k1, sign * h1);
    Some(if swap { [ib, ia] } else { [ia, ib] })
}

/// Unwrapped disregistry map `x ↦ (I − A₂A₁⁻¹) x`.
pub fn disregistry_12_linear(a1: &Basis2, a2: &Basis2) -> Result<Mat2> {
    Ok(Mat2::identity() - a2.matrix() * a1.inverse()?)
}

/// Unwrapped disregistry map `x ↦ (I − A₁A₂⁻¹) x`.
pub fn disregistry_21_linear(a1: &Basis2, a2: &Basis2) -> Result<Mat2> {
    Ok(Mat2::identity() - a1.matrix() * a2.inverse()?)
}

/// Disregistry of layer 1 relative to layer 2 at `x`, reduced into `Γ₂`.
pub fn disregistry_12(x: Vec2, a1: &Basis2, a2: &Basis2) -> Result<Vec2> {
    // fractional coordinates in A₂: A₂⁻¹(I − A₂A₁⁻¹)x = (A₂⁻¹ − A₁⁻¹)x
    let f = (a2.inverse()? - a1.inverse()?) * x;
    Ok(a2.matrix() * wrap_unit(f))
}

/// Disregistry of layer 2 relative to layer 1 at `x`, reduced into `Γ₁`.
pub fn disregistry_21(x: Vec2, a1: &Basis2, a2: &Basis2) -> Result<Vec2> {
    let f = (a1.inverse()? - a2.inverse()?) * x;
    Ok(a1.matrix() * wrap_unit(f))
}

/// Which convention is used for the unwrapped `b₁→₂` map.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum DisregistryPhase {
    /// `(I − A₂A₁⁻¹)x`, zero at the origin.
    #[default]
    Origin,
    /// `(I − A₂A₁⁻¹)x + A₂(e₁ + e₂)`, mapping the moiré cell onto `Γ₂` instead of `−Γ₂`.
    AaCentered,
}

/// Unwrapped `b₁→₂(x)` in either phase convention. Both conventions differ by a
/// layer-2 lattice vector, so the wrapped disregistry and every energy agree.
pub fn disregistry_12_unwrapped(
    x: Vec2,
    a1: &Basis2,
    a2: &Basis2,
    phase: DisregistryPhase,
) -> Result<Vec2> {
    let b = disregistry_12_linear(a1, a2)? * x;
    Ok(match phase {
        DisregistryPhase::Origin => b,
        DisregistryPhase::AaCentered => b + a2.matrix() * Vec2::new(1.0, 1.0),
    })
}

/// Saddle point, half Burgers vector and translation angle of one domain-wall type.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BurgersTriplet {
    pub index: usize,
    pub saddle: Vec2,
    pub half_burgers: Vec2,
    pub theta0: f64,
}

impl BurgersTriplet {
    /// AB stacking `b_SP + Δb`.
    pub fn ab(&self) -> Vec2 {
        self.saddle + self.half_burgers
    }

    /// BA stacking `b_SP − Δb`.
    pub fn ba(&self) -> Vec2 {
        self.saddle - self.half_burgers
    }
}

/// The three non-equivalent AB/BA wall paths of a triangular lattice with lattice
/// constant `a0` (Å). `theta0` is the direction angle of `Δb_i`.
pub fn burgers_triplet(i: usize, a0: f64) -> Result<BurgersTriplet> {
    let h = 3f64.sqrt() / 2.0;
    let db = 3f64.sqrt() / 6.0 * a0;
    let (saddle, dir, theta0) = match i {
        1 => (Vec2::new(0.0, 1.0), Vec2::new(1.0, 0.0), 0.0),
        2 => (Vec2::new(h, 0.5), Vec2::new(-0.5, h), 2.0 * PI / 3.0),
        3 => (Vec2::new(h, -0.5), Vec2::new(-0.5, -h), 4.0 * PI / 3.0),
        _ => return Err(Error::TripletIndex(i)),
    };
    Ok(BurgersTriplet {
        index: i,
        saddle: saddle * (0.5 * a0),
        half_burgers: dir * db,
        theta0,
    })
}
