use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fft::{self, Fft2};
use crate::lattice::Vec2;

/// Nodal displacements of both layers on an `n1 × n2` grid over the moiré torus.
///
/// Storage is four contiguous blocks `[u1x, u1y, u2x, u2y]`, each row-major with
/// node index `i·n2 + j` for `ξ = (i/n1, j/n2)`.
#[derive(Clone, Debug, PartialEq)]
pub struct DisplacementField {
    n1: usize,
    n2: usize,
    data: Vec<f64>,
}

/// Normalized Fourier coefficients `û_k = DFT(u)/(n1 n2)` of one layer.
#[derive(Clone, Debug)]
pub struct LayerSpectrum {
    pub x: Vec<Complex64>,
    pub y: Vec<Complex64>,
}

impl DisplacementField {
    pub fn zeros(n1: usize, n2: usize) -> Self {
        DisplacementField {
            n1,
            n2,
            data: vec![0.0; 4 * n1 * n2],
        }
    }

    pub fn from_data(n1: usize, n2: usize, data: Vec<f64>) -> Result<Self> {
        if n1 == 0 || n2 == 0 || data.len() != 4 * n1 * n2 {
            return Err(Error::GridMismatch(format!(
                "expected 4·{n1}·{n2} values, got {}",
                data.len()
            )));
        }
        Ok(DisplacementField { n1, n2, data })
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.n1, self.n2)
    }

    pub fn nodes(&self) -> usize {
        self.n1 * self.n2
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

    fn block(layer: usize, comp: usize) -> usize {
        assert!((1..=2).contains(&layer) && comp < 2, "layer 1|2, component 0|1");
        2 * (layer - 1) + comp
    }

    /// Nodal values of one component (`comp` 0 = x, 1 = y) of layer 1 or 2.
    pub fn component(&self, layer: usize, comp: usize) -> &[f64] {
        let n = self.nodes();
        let b = Self::block(layer, comp);
        &self.data[b * n..(b + 1) * n]
    }

    pub fn component_mut(&mut self, layer: usize, comp: usize) -> &mut [f64] {
        let n = self.nodes();
        let b = Self::block(layer, comp);
        &mut self.data[b * n..(b + 1) * n]
    }

    pub fn node(&self, layer: usize, idx: usize) -> Vec2 {
        Vec2::new(self.component(layer, 0)[idx], self.component(layer, 1)[idx])
    }

    /// Relative displacement `v = u₁ − u₂` at a node.
    pub fn relative(&self, idx: usize) -> Vec2 {
        self.node(1, idx) - self.node(2, idx)
    }

    /// Normalized spectrum of one layer.
    pub fn spectrum(&self, layer: usize) -> LayerSpectrum {
        let f = Fft2::new(self.n1, self.n2);
        self.spectrum_with(layer, &f)
    }

    pub(crate) fn spectrum_with(&self, layer: usize, f: &Fft2) -> LayerSpectrum {
        let mut z: Vec<Complex64> = self
            .component(layer, 0)
            .iter()
            .zip(self.component(layer, 1))
            .map(|(&a, &b)| Complex64::new(a, b))
            .collect();
        f.forward(&mut z);
        let (mut x, mut y) = fft::unpack_real_pair(&z, self.n1, self.n2);
        let s = 1.0 / self.nodes() as f64;
        x.iter_mut().chain(y.iter_mut()).for_each(|c| *c *= s);
        LayerSpectrum { x, y }
    }

    /// Replace one layer by the real part of the inverse transform of `spec`.
    pub fn set_from_spectrum(&mut self, layer: usize, spec: &LayerSpectrum) -> Result<()> {
        let n = self.nodes();
        if spec.x.len() != n || spec.y.len() != n {
            return Err(Error::GridMismatch("spectrum length differs from grid".into()));
        }
        let f = Fft2::new(self.n1, self.n2);
        let mut z: Vec<Complex64> = spec.x.iter().zip(&spec.y).map(|(a, b)| a + Complex64::i() * b).collect();
        f.inverse(&mut z);
        for (k, c) in z.iter().enumerate() {
            self.component_mut(layer, 0)[k] = c.re;
            self.component_mut(layer, 1)[k] = c.im;
        }
        Ok(())
    }

    /// Subtract the mean of every component.
    pub fn project_mean_zero(&mut self) {
        let n = self.nodes();
        project_mean_zero(&mut self.data, n);
    }

    /// `max_node |u₁ + u₂|`.
    pub fn antisymmetry_defect(&self) -> f64 {
        (0..self.nodes())
            .map(|k| (self.node(1, k) + self.node(2, k)).norm())
            .fold(0.0, f64::max)
    }

    /// `max_node max(|u₁|, |u₂|)`.
    pub fn max_norm(&self) -> f64 {
        (0..self.nodes())
            .map(|k| self.node(1, k).norm().max(self.node(2, k).norm()))
            .fold(0.0, f64::max)
    }

    /// Trigonometric resampling onto another grid over the same torus.
    pub fn resampled(&self, n1: usize, n2: usize) -> Self {
        let mut data = Vec::with_capacity(4 * n1 * n2);
        for layer in 1..=2 {
            for comp in 0..2 {
                data.extend(fft::resample(self.component(layer, comp), (self.n1, self.n2), (n1, n2)));
            }
        }
        DisplacementField { n1, n2, data }
    }

    /// Interpolated relative displacement `v(ξ)` at fractional moiré coordinates.
    pub fn relative_interpolator(&self) -> RelativeInterpolator {
        let s1 = self.spectrum(1);
        let s2 = self.spectrum(2);
        let sub = |a: &[Complex64], b: &[Complex64]| a.iter().zip(b).map(|(p, q)| p - q).collect::<Vec<_>>();
        RelativeInterpolator {
            n1: self.n1,
            n2: self.n2,
            x: sub(&s1.x, &s2.x),
            y: sub(&s1.y, &s2.y),
        }
    }
}

/// Subtract the per-block mean of a 4-block state vector.
pub(crate) fn project_mean_zero(data: &mut [f64], nodes: usize) {
    for block in data.chunks_mut(nodes) {
        let mean = block.iter().sum::<f64>() / nodes as f64;
        block.iter_mut().for_each(|v| *v -= mean);
    }
}

/// Spectral interpolant of `v = u₁ − u₂`.
#[derive(Clone, Debug)]
pub struct RelativeInterpolator {
    n1: usize,
    n2: usize,
    x: Vec<Complex64>,
    y: Vec<Complex64>,
}

impl RelativeInterpolator {
    pub fn at(&self, xi: [f64; 2]) -> Vec2 {
        Vec2::new(
            fft::evaluate_interpolant(&self.x, self.n1, self.n2, xi),
            fft::evaluate_interpolant(&self.y, self.n1, self.n2, xi),
        )
    }

    /// Values on the tensor grid `xs1 × xs2`, row-major.
    pub fn on_grid(&self, xs1: &[f64], xs2: &[f64]) -> Vec<Vec2> {
        let vx = fft::evaluate_on_tensor_grid(&self.x, self.n1, self.n2, xs1, xs2);
        let vy = fft::evaluate_on_tensor_grid(&self.y, self.n1, self.n2, xs1, xs2);
        vx.into_iter().zip(vy).map(|(a, b)| Vec2::new(a, b)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pseudo_random(n: usize, seed: u64) -> Vec<f64> {
        let mut s = seed;
        (0..n)
            .map(|_| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                (s >> 11) as f64 / (1u64 << 53) as f64 - 0.5
            })
            .collect()
    }

    #[test]
    fn spectral_round_trip_is_identity() {
        let (n1, n2) = (16, 8);
        let field = DisplacementField::from_data(n1, n2, pseudo_random(4 * n1 * n2, 7)).unwrap();
        let mut copy = DisplacementField::zeros(n1, n2);
        for layer in 1..=2 {
            copy.set_from_spectrum(layer, &field.spectrum(layer)).unwrap();
        }
        for (a, b) in copy.data().iter().zip(field.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn spectrum_is_conjugate_symmetric() {
        let (n1, n2) = (8, 8);
        let field = DisplacementField::from_data(n1, n2, pseudo_random(4 * n1 * n2, 3)).unwrap();
        let s = field.spectrum(2);
        for i in 0..n1 {
            for j in 0..n2 {
                let k = i * n2 + j;
                let mk = fft::negate_index(i, n1) * n2 + fft::negate_index(j, n2);
                assert!((s.x[k] - s.x[mk].conj()).norm() < 1e-14);
                assert!((s.y[k] - s.y[mk].conj()).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn mean_zero_projection_kills_zero_mode() {
        let (n1, n2) = (8, 4);
        let mut field = DisplacementField::from_data(n1, n2, pseudo_random(4 * n1 * n2, 11)).unwrap();
        field.project_mean_zero();
        for layer in 1..=2 {
            let s = field.spectrum(layer);
            assert!(s.x[0].norm() < 1e-15 && s.y[0].norm() < 1e-15);
        }
    }

    #[test]
    fn rejects_wrong_length() {
        assert!(DisplacementField::from_data(4, 4, vec![0.0; 10]).is_err());
    }

    #[test]
    fn interpolator_hits_nodes() {
        let (n1, n2) = (8, 8);
        let field = DisplacementField::from_data(n1, n2, pseudo_random(4 * n1 * n2, 5)).unwrap();
        let interp = field.relative_interpolator();
        let v = interp.at([3.0 / 8.0, 5.0 / 8.0]);
        let exact = field.relative(3 * 8 + 5);
        assert!((v - exact).norm() < 1e-13);
    }
}
