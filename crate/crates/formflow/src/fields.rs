//! Trigonometric-polynomial fields on flat tori.
//!
//! A `TrigPoly` is a finite sum  Σ_n c_n e^{i n·x}  with wavevectors
//! n ∈ Z^D stored sparsely.  Real fields satisfy c_{-n} = conj(c_n).
//! Products are exact (support grows); non-polynomial functions (1/e,
//! √g, …) are sampled on a uniform grid and re-expanded by a direct
//! discrete Fourier transform.

use std::collections::BTreeMap;

use num_complex::Complex64;

use crate::error::{FlowError, Result};

pub const MAX_DIM: usize = 3;
pub type Wave = [i32; MAX_DIM];

/// Sparse trigonometric polynomial Σ c_n e^{i n·x} on T^dim.
#[derive(Debug, Clone, PartialEq)]
pub struct TrigPoly {
    dim: usize,
    terms: BTreeMap<Wave, Complex64>,
}

fn chop(c: Complex64) -> Complex64 {
    // drop denormal dust produced by exact cancellations
    let re = if c.re.abs() < 1e-300 { 0.0 } else { c.re };
    let im = if c.im.abs() < 1e-300 { 0.0 } else { c.im };
    Complex64::new(re, im)
}

impl TrigPoly {
    pub fn zero(dim: usize) -> Self {
        assert!(dim >= 1 && dim <= MAX_DIM);
        Self {
            dim,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(dim: usize, value: f64) -> Self {
        let mut p = Self::zero(dim);
        if value != 0.0 {
            p.terms.insert([0; MAX_DIM], Complex64::new(value, 0.0));
        }
        p
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Wave, &Complex64)> {
        self.terms.iter()
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn coeff(&self, n: &Wave) -> Complex64 {
        self.terms.get(n).copied().unwrap_or(Complex64::ZERO)
    }

    pub fn set(&mut self, n: Wave, c: Complex64) {
        if c.norm() == 0.0 {
            self.terms.remove(&n);
        } else {
            self.terms.insert(n, c);
        }
    }

    pub fn add_term(&mut self, n: Wave, c: Complex64) {
        let v = chop(self.coeff(&n) + c);
        self.set(n, v);
    }

    /// amp · cos(k x_axis)
    pub fn real_cos(dim: usize, axis: usize, k: i32, amp: f64) -> Self {
        let mut p = Self::zero(dim);
        let mut n = [0; MAX_DIM];
        n[axis] = k;
        p.add_term(n, Complex64::new(amp / 2.0, 0.0));
        n[axis] = -k;
        p.add_term(n, Complex64::new(amp / 2.0, 0.0));
        p
    }

    /// amp · sin(k x_axis)
    pub fn real_sin(dim: usize, axis: usize, k: i32, amp: f64) -> Self {
        let mut p = Self::zero(dim);
        let mut n = [0; MAX_DIM];
        n[axis] = k;
        p.add_term(n, Complex64::new(0.0, -amp / 2.0));
        n[axis] = -k;
        p.add_term(n, Complex64::new(0.0, amp / 2.0));
        p
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim);
        let mut out = self.clone();
        for (n, c) in other.terms.iter() {
            out.add_term(*n, *c);
        }
        out
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.scale(-1.0))
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut out = Self::zero(self.dim);
        for (n, c) in self.terms.iter() {
            out.set(*n, c * s);
        }
        out
    }

    /// Exact product; support is the Minkowski sum of the supports.
    pub fn mul(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim);
        let mut out = Self::zero(self.dim);
        for (n, a) in self.terms.iter() {
            for (m, b) in other.terms.iter() {
                let mut k = [0; MAX_DIM];
                for i in 0..MAX_DIM {
                    k[i] = n[i] + m[i];
                }
                out.add_term(k, a * b);
            }
        }
        out
    }

    /// Analytic partial derivative ∂/∂x_axis (multiplies by i n_axis).
    pub fn partial(&self, axis: usize) -> Self {
        assert!(axis < self.dim);
        let mut out = Self::zero(self.dim);
        for (n, c) in self.terms.iter() {
            let f = Complex64::new(0.0, n[axis] as f64);
            if n[axis] != 0 {
                out.set(*n, c * f);
            }
        }
        out
    }

    pub fn eval(&self, x: &[f64]) -> Complex64 {
        let mut v = Complex64::ZERO;
        for (n, c) in self.terms.iter() {
            let mut phase = 0.0;
            for i in 0..self.dim {
                phase += n[i] as f64 * x[i];
            }
            v += c * Complex64::new(0.0, phase).exp();
        }
        v
    }

    pub fn eval_real(&self, x: &[f64]) -> f64 {
        self.eval(x).re
    }

    /// Largest |n_i| over the support.
    pub fn max_harmonic(&self) -> usize {
        self.terms
            .keys()
            .flat_map(|n| n.iter().map(|v| v.unsigned_abs() as usize))
            .max()
            .unwrap_or(0)
    }

    pub fn max_coeff(&self) -> f64 {
        self.terms
            .values()
            .map(|c| c.norm())
            .fold(0.0, f64::max)
    }

    /// c_{-n} = conj(c_n) residual, relative to the largest coefficient.
    pub fn reality_residual(&self) -> f64 {
        let scale = self.max_coeff().max(1e-300);
        let mut worst: f64 = 0.0;
        for (n, c) in self.terms.iter() {
            let mut m = [0; MAX_DIM];
            for i in 0..MAX_DIM {
                m[i] = -n[i];
            }
            worst = worst.max((self.coeff(&m) - c.conj()).norm() / scale);
        }
        worst
    }

    /// Drop coefficients below `rel_tol` times the largest one.
    pub fn prune(&self, rel_tol: f64) -> Self {
        let cut = self.max_coeff() * rel_tol;
        let mut out = Self::zero(self.dim);
        for (n, c) in self.terms.iter() {
            if c.norm() > cut {
                out.set(*n, *c);
            }
        }
        out
    }

    /// Re-expand a pointwise-defined function on a uniform grid,
    /// keeping harmonics |n_i| ≤ keep.  Uses 4·keep+1 samples per
    /// dimension (at least), which is exact for trig polys of degree
    /// ≤ keep and pushes aliasing of smooth tails below 1e-12.
    pub fn from_samples<F>(dim: usize, f: F, keep: usize) -> Self
    where
        F: Fn(&[f64]) -> f64,
    {
        assert!(dim >= 1 && dim <= MAX_DIM);
        let s = 4 * keep + 1;
        let step = std::f64::consts::TAU / s as f64;
        let total = s.pow(dim as u32);
        // sample
        let mut samples = vec![0.0; total];
        for (flat, value) in samples.iter_mut().enumerate() {
            let mut idx = flat;
            let mut x = [0.0; MAX_DIM];
            for xi in x.iter_mut().take(dim) {
                *xi = (idx % s) as f64 * step;
                idx /= s;
            }
            *value = f(&x[..dim]);
        }
        // direct DFT for the kept harmonics
        let mut out = Self::zero(dim);
        let k = keep as i32;
        let mut n = [0i32; MAX_DIM];
        for ni in n.iter_mut().take(dim) {
            *ni = -k;
        }
        loop {
            let mut c = Complex64::ZERO;
            for (flat, value) in samples.iter().enumerate() {
                let mut idx = flat;
                let mut phase = 0.0;
                for ni in n.iter().take(dim) {
                    phase -= *ni as f64 * (idx % s) as f64 * step;
                    idx /= s;
                }
                c += value * Complex64::new(0.0, phase).exp();
            }
            c /= total as f64;
            if c.norm() > 1e-14 {
                out.set(n, chop(c));
            }
            // advance the multi-index
            let mut axis = 0;
            loop {
                if axis == dim {
                    return out;
                }
                if n[axis] < k {
                    n[axis] += 1;
                    break;
                }
                n[axis] = -k;
                axis += 1;
            }
        }
    }
}

/// A vector field F^i(x) on T^dim with trig-poly components.
#[derive(Debug, Clone)]
pub struct VectorField {
    dim: usize,
    comps: Vec<TrigPoly>,
}

impl VectorField {
    pub fn new(comps: Vec<TrigPoly>) -> Self {
        let dim = comps.len();
        assert!(dim >= 1 && dim <= MAX_DIM);
        for c in &comps {
            assert_eq!(c.dim(), dim);
        }
        Self { dim, comps }
    }

    pub fn zero(dim: usize) -> Self {
        Self::new(vec![TrigPoly::zero(dim); dim])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn comp(&self, i: usize) -> &TrigPoly {
        &self.comps[i]
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        self.comps.iter().map(|c| c.eval_real(x)).collect()
    }

    /// F̂^i_j = ∂F^i/∂x^j, evaluated analytically.
    pub fn jacobian(&self, x: &[f64]) -> Vec<Vec<f64>> {
        (0..self.dim)
            .map(|i| {
                (0..self.dim)
                    .map(|j| self.comps[i].partial(j).eval_real(x))
                    .collect()
            })
            .collect()
    }

    pub fn sup_norm(&self, samples_per_dim: usize) -> f64 {
        let step = std::f64::consts::TAU / samples_per_dim as f64;
        let total = samples_per_dim.pow(self.dim as u32);
        let mut worst: f64 = 0.0;
        for flat in 0..total {
            let mut idx = flat;
            let mut x = [0.0; MAX_DIM];
            for xi in x.iter_mut().take(self.dim) {
                *xi = (idx % samples_per_dim) as f64 * step;
                idx /= samples_per_dim;
            }
            let v = self.eval(&x[..self.dim]);
            let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
            worst = worst.max(norm);
        }
        worst
    }

    pub fn max_harmonic(&self) -> usize {
        self.comps.iter().map(|c| c.max_harmonic()).max().unwrap_or(0)
    }
}

/// Vielbein e^i_a(x): one trig-poly per (component i, noise channel a).
#[derive(Debug, Clone)]
pub struct Vielbein {
    dim: usize,
    // e[i][a]
    e: Vec<Vec<TrigPoly>>,
}

impl Vielbein {
    pub fn new(e: Vec<Vec<TrigPoly>>) -> Self {
        let dim = e.len();
        assert!(dim >= 1 && dim <= MAX_DIM);
        for row in &e {
            assert_eq!(row.len(), dim);
        }
        Self { dim, e }
    }

    pub fn identity(dim: usize) -> Self {
        let e = (0..dim)
            .map(|i| {
                (0..dim)
                    .map(|a| TrigPoly::constant(dim, if i == a { 1.0 } else { 0.0 }))
                    .collect()
            })
            .collect();
        Self::new(e)
    }

    pub fn diagonal(entries: Vec<TrigPoly>) -> Self {
        let dim = entries.len();
        let e = (0..dim)
            .map(|i| {
                (0..dim)
                    .map(|a| {
                        if i == a {
                            entries[i].clone()
                        } else {
                            TrigPoly::zero(dim)
                        }
                    })
                    .collect()
            })
            .collect();
        Self::new(e)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entry(&self, i: usize, a: usize) -> &TrigPoly {
        &self.e[i][a]
    }

    pub fn is_constant(&self) -> bool {
        self.e
            .iter()
            .flatten()
            .all(|p| p.max_harmonic() == 0)
    }

    /// Column a as a vector field (the a-th noise direction).
    pub fn column(&self, a: usize) -> VectorField {
        VectorField::new((0..self.dim).map(|i| self.e[i][a].clone()).collect())
    }

    pub fn max_harmonic(&self) -> usize {
        self.e
            .iter()
            .flatten()
            .map(|p| p.max_harmonic())
            .max()
            .unwrap_or(0)
    }

    pub fn eval(&self, x: &[f64]) -> Vec<Vec<f64>> {
        (0..self.dim)
            .map(|i| (0..self.dim).map(|a| self.e[i][a].eval_real(x)).collect())
            .collect()
    }

    /// min |det e| over a uniform sample grid.
    pub fn min_abs_det(&self, samples_per_dim: usize) -> f64 {
        let step = std::f64::consts::TAU / samples_per_dim as f64;
        let total = samples_per_dim.pow(self.dim as u32);
        let mut min_det = f64::INFINITY;
        for flat in 0..total {
            let mut idx = flat;
            let mut x = [0.0; MAX_DIM];
            for xi in x.iter_mut().take(self.dim) {
                *xi = (idx % samples_per_dim) as f64 * step;
                idx /= samples_per_dim;
            }
            let m = self.eval(&x[..self.dim]);
            min_det = min_det.min(det_small(&m).abs());
        }
        min_det
    }

    pub fn check_invertible(&self) -> Result<()> {
        let samples = 4 * self.max_harmonic().max(1) + 1;
        let min_det = self.min_abs_det(samples.max(16));
        if min_det < 1e-6 {
            return Err(FlowError::SingularVielbein { min_det });
        }
        Ok(())
    }

    /// Inverse vielbein e^a_i, sampled pointwise and re-expanded with
    /// harmonics up to `keep`.
    pub fn inverse_expanded(&self, keep: usize) -> Result<Vec<Vec<TrigPoly>>> {
        self.check_invertible()?;
        let dim = self.dim;
        let mut out = vec![vec![TrigPoly::zero(dim); dim]; dim];
        for (a, row) in out.iter_mut().enumerate() {
            for (i, slot) in row.iter_mut().enumerate() {
                *slot = TrigPoly::from_samples(
                    dim,
                    |x| {
                        let m = self.eval(x);
                        let inv = inv_small(&m);
                        inv[a][i]
                    },
                    keep,
                )
                .prune(1e-14);
            }
        }
        Ok(out)
    }

    /// Ito-to-Stratonovich drift correction  v^i = T Σ_a e^j_a ∂_j e^i_a,
    /// computed exactly from the trig-poly entries.
    pub fn drift_correction(&self, temperature: f64) -> VectorField {
        let dim = self.dim;
        let comps = (0..dim)
            .map(|i| {
                let mut v = TrigPoly::zero(dim);
                for a in 0..dim {
                    for j in 0..dim {
                        v = v.add(&self.e[j][a].mul(&self.e[i][a].partial(j)));
                    }
                }
                v.scale(temperature)
            })
            .collect();
        VectorField::new(comps)
    }
}

pub fn det_small(m: &[Vec<f64>]) -> f64 {
    match m.len() {
        1 => m[0][0],
        2 => m[0][0] * m[1][1] - m[0][1] * m[1][0],
        3 => {
            m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
                - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
                + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
        }
        d => panic!("det_small: dimension {d}"),
    }
}

pub fn inv_small(m: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let d = m.len();
    let det = det_small(m);
    match d {
        1 => vec![vec![1.0 / det]],
        2 => vec![
            vec![m[1][1] / det, -m[0][1] / det],
            vec![-m[1][0] / det, m[0][0] / det],
        ],
        3 => {
            let mut inv = vec![vec![0.0; 3]; 3];
            for i in 0..3 {
                for j in 0..3 {
                    let r = [(i + 1) % 3, (i + 2) % 3];
                    let c = [(j + 1) % 3, (j + 2) % 3];
                    // cofactor transpose
                    inv[j][i] =
                        (m[r[0]][c[0]] * m[r[1]][c[1]] - m[r[0]][c[1]] * m[r[1]][c[0]]) / det;
                }
            }
            inv
        }
        _ => panic!("inv_small: dimension {d}"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn product_matches_pointwise() {
        let p = TrigPoly::constant(1, 1.0).add(&TrigPoly::real_sin(1, 0, 1, 0.5));
        let sq = p.mul(&p);
        for k in 0..7 {
            let x = [k as f64];
            let want = (1.0 + 0.5 * x[0].sin()).powi(2);
            assert_abs_diff_eq!(sq.eval_real(&x), want, epsilon = 1e-13);
        }
    }

    #[test]
    fn derivative_is_analytic() {
        let p = TrigPoly::real_cos(2, 1, 3, 2.0);
        let dp = p.partial(1);
        let x = [0.3, 1.1];
        assert_abs_diff_eq!(dp.eval_real(&x), -6.0 * (3.0 * x[1]).sin(), epsilon = 1e-13);
        assert!(p.partial(0).num_terms() == 0);
    }

    #[test]
    fn resampling_recovers_trig_poly_exactly() {
        let p = TrigPoly::real_cos(1, 0, 2, 0.7).add(&TrigPoly::real_sin(1, 0, 1, -0.3));
        let q = TrigPoly::from_samples(1, |x| p.eval_real(x), 4);
        for (n, c) in p.terms() {
            assert!((q.coeff(n) - c).norm() < 1e-14);
        }
    }

    #[test]
    fn resampling_inverse_field_converges() {
        // 1/(1+0.5 sin x): coefficients decay geometrically
        let keep = 24;
        let inv = TrigPoly::from_samples(1, |x| 1.0 / (1.0 + 0.5 * x[0].sin()), keep);
        for k in 0..9 {
            let x = [0.7 * k as f64];
            assert_abs_diff_eq!(
                inv.eval_real(&x),
                1.0 / (1.0 + 0.5 * x[0].sin()),
                epsilon = 1e-10
            );
        }
        assert!(inv.reality_residual() < 1e-12);
    }

    #[test]
    fn vielbein_inverse_and_drift() {
        // D=1, e = 1 + 0.5 sin x: v = T e e'
        let e = Vielbein::diagonal(vec![
            TrigPoly::constant(1, 1.0).add(&TrigPoly::real_sin(1, 0, 1, 0.5)),
        ]);
        e.check_invertible().unwrap();
        let v = e.drift_correction(0.3);
        for k in 0..5 {
            let x = [1.3 * k as f64];
            let ee = 1.0 + 0.5 * x[0].sin();
            let want = 0.3 * ee * 0.5 * x[0].cos();
            assert_abs_diff_eq!(v.comp(0).eval_real(&x), want, epsilon = 1e-13);
        }
        let inv = e.inverse_expanded(24).unwrap();
        let x = [2.1];
        assert_abs_diff_eq!(
            inv[0][0].eval_real(&x),
            1.0 / (1.0 + 0.5 * x[0].sin()),
            epsilon = 1e-10
        );
    }

    #[test]
    fn constant_vielbein_has_zero_drift() {
        let e = Vielbein::identity(3);
        let v = e.drift_correction(1.0);
        for i in 0..3 {
            assert_eq!(v.comp(i).num_terms(), 0);
        }
    }
}
