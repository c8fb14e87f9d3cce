//! Truncated bases for the exterior algebra Ω(X).
//!
//! Torus T^D: Fourier–Galerkin with sharp cutoff |n_i| ≤ N_cut.  A basis
//! element of degree k is a pair (ghost mask, wavevector): the monomial
//! e^{i n·x} dx^{i_1}∧…∧dx^{i_k} with i_1 < … < i_k the set bits of the
//! mask.  Line [-L, L]: uniform grid, degrees 0 and 1 only, decay
//! boundary treatment through one shared one-sided difference matrix.
//!
//! Enumeration is fixed: degree-major, masks of equal degree in
//! increasing bit-pattern order, wavevectors in lexicographic order
//! (n_1 most significant), grid nodes left to right.  Serialized
//! operators and eigenvectors are therefore reproducible across runs.

use std::f64::consts::TAU;

use ndarray::Array1;
use num_complex::Complex64;

use crate::error::{FlowError, Result};
use crate::fields::{Wave, MAX_DIM};

#[derive(Debug, Clone, PartialEq)]
pub enum Manifold {
    Torus { dim: usize, n_cut: usize },
    Line { half_width: f64, grid_count: usize },
}

/// Sign relating dx^mask ∧ dx^index to the canonically sorted wedge:
/// the appended factor anticommutes past every set bit above `index`,
/// so dx² ∧ dx¹ = −dx¹ ∧ dx² gives wedge_sign({1}, 0) = −1.
pub fn wedge_sign(mask: u8, index: usize) -> Result<f64> {
    if mask & (1 << index) != 0 {
        return Err(FlowError::UndefinedWedge { mask, index });
    }
    let above = (mask >> (index + 1)).count_ones();
    Ok(if above % 2 == 0 { 1.0 } else { -1.0 })
}

/// Parity of the set bits of `mask` strictly below `index`: the sign a
/// left-acting ghost operator (χ^index or ∂/∂χ^index) picks up reaching
/// its slot.  Used by every operator assembly.
pub fn parity_below(mask: u8, index: usize) -> f64 {
    let below = (mask & ((1u8 << index) - 1)).count_ones();
    if below % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

#[derive(Debug, Clone)]
pub struct FormBasis {
    manifold: Manifold,
    dim: usize,
    /// masks grouped by degree, increasing bit order within a degree
    masks: Vec<Vec<u8>>,
    /// scalar-function dimension: (2N+1)^D on the torus, n_g on the line
    fn_dim: usize,
    /// line only: log of the basis weight at each node.  Coefficient j
    /// represents e^{g_j}·ψ(x_j); stiff Langevin wells are assembled in
    /// the Gibbs-weighted gauge g = W/2T, which keeps the operator
    /// blocks numerically normal (the raw-frame matrices have
    /// eigenvalue condition numbers ~e^{ΔW/2T} and are unusable).
    line_weight_log: Option<Vec<f64>>,
}

impl FormBasis {
    pub fn make(manifold: Manifold) -> Result<Self> {
        Self::make_weighted(manifold, None)
    }

    /// Line basis in a weighted gauge; `weight_log[j]` = g(x_j).
    pub fn make_line_weighted(
        half_width: f64,
        grid_count: usize,
        weight_log: Vec<f64>,
    ) -> Result<Self> {
        if weight_log.len() != grid_count {
            return Err(FlowError::InvalidParameter {
                name: "weight_log".into(),
                reason: "length must equal grid_count".into(),
            });
        }
        Self::make_weighted(
            Manifold::Line {
                half_width,
                grid_count,
            },
            Some(weight_log),
        )
    }

    fn make_weighted(manifold: Manifold, line_weight_log: Option<Vec<f64>>) -> Result<Self> {
        match manifold {
            Manifold::Torus { dim, n_cut } => {
                if dim < 1 || dim > MAX_DIM {
                    return Err(FlowError::UnsupportedDimension(dim));
                }
                if n_cut == 0 {
                    return Err(FlowError::InvalidParameter {
                        name: "n_cut".into(),
                        reason: "must be positive".into(),
                    });
                }
                let fn_dim = (2 * n_cut + 1).pow(dim as u32);
                Ok(Self {
                    manifold,
                    dim,
                    masks: mask_table(dim),
                    fn_dim,
                    line_weight_log: None,
                })
            }
            Manifold::Line {
                half_width,
                grid_count,
            } => {
                if half_width <= 0.0 {
                    return Err(FlowError::InvalidParameter {
                        name: "half_width".into(),
                        reason: "must be positive".into(),
                    });
                }
                if grid_count < 16 {
                    return Err(FlowError::InvalidParameter {
                        name: "grid_count".into(),
                        reason: "needs at least 16 nodes".into(),
                    });
                }
                Ok(Self {
                    manifold,
                    dim: 1,
                    masks: mask_table(1),
                    fn_dim: grid_count,
                    line_weight_log,
                })
            }
        }
    }

    pub fn manifold(&self) -> &Manifold {
        &self.manifold
    }

    pub fn is_torus(&self) -> bool {
        matches!(self.manifold, Manifold::Torus { .. })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_cut(&self) -> usize {
        match self.manifold {
            Manifold::Torus { n_cut, .. } => n_cut,
            Manifold::Line { .. } => 0,
        }
    }

    /// Grid spacing on the line.
    pub fn grid_step(&self) -> f64 {
        match self.manifold {
            Manifold::Line {
                half_width,
                grid_count,
            } => 2.0 * half_width / (grid_count - 1) as f64,
            Manifold::Torus { .. } => panic!("grid_step on torus basis"),
        }
    }

    pub fn grid_node(&self, j: usize) -> f64 {
        match self.manifold {
            Manifold::Line { half_width, .. } => -half_width + self.grid_step() * j as f64,
            Manifold::Torus { .. } => panic!("grid_node on torus basis"),
        }
    }

    /// e^{−g_j}: factor converting a stored coefficient to ψ(x_j).
    pub fn line_weight(&self, j: usize) -> f64 {
        match &self.line_weight_log {
            Some(g) => (-g[j]).exp(),
            None => 1.0,
        }
    }

    pub fn line_weight_log(&self, j: usize) -> f64 {
        match &self.line_weight_log {
            Some(g) => g[j],
            None => 0.0,
        }
    }

    pub fn fn_dim(&self) -> usize {
        self.fn_dim
    }

    pub fn masks(&self, degree: usize) -> &[u8] {
        &self.masks[degree]
    }

    pub fn degree_dim(&self, degree: usize) -> usize {
        if degree > self.dim {
            0
        } else {
            self.masks[degree].len() * self.fn_dim
        }
    }

    pub fn total_dim(&self) -> usize {
        (0..=self.dim).map(|k| self.degree_dim(k)).sum()
    }

    /// Lexicographic rank of a wavevector (n_1 most significant).
    pub fn wave_rank(&self, n: &Wave) -> usize {
        let nc = self.n_cut() as i32;
        let width = (2 * nc + 1) as usize;
        let mut r = 0;
        for i in 0..self.dim {
            debug_assert!(n[i].abs() <= nc);
            r = r * width + (n[i] + nc) as usize;
        }
        r
    }

    pub fn rank_wave(&self, mut rank: usize) -> Wave {
        let nc = self.n_cut() as i32;
        let width = (2 * nc + 1) as usize;
        let mut n = [0i32; MAX_DIM];
        for i in (0..self.dim).rev() {
            n[i] = (rank % width) as i32 - nc;
            rank /= width;
        }
        n
    }

    /// Position of a mask within its degree group.
    pub fn mask_pos(&self, mask: u8) -> usize {
        let k = mask.count_ones() as usize;
        self.masks[k].iter().position(|&m| m == mask).unwrap()
    }

    /// Within-degree linear index of (mask, wave-or-node).
    pub fn index_in_degree(&self, mask: u8, fn_rank: usize) -> usize {
        self.mask_pos(mask) * self.fn_dim + fn_rank
    }

    /// Inverse of `index_in_degree`.
    pub fn locate_in_degree(&self, degree: usize, idx: usize) -> (u8, usize) {
        let mask = self.masks[degree][idx / self.fn_dim];
        (mask, idx % self.fn_dim)
    }

    /// Global linear index (degree-major).
    pub fn global_index(&self, degree: usize, idx_in_degree: usize) -> usize {
        (0..degree).map(|k| self.degree_dim(k)).sum::<usize>() + idx_in_degree
    }
}

fn mask_table(dim: usize) -> Vec<Vec<u8>> {
    let mut masks = vec![Vec::new(); dim + 1];
    for m in 0u8..(1 << dim) {
        masks[m.count_ones() as usize].push(m);
    }
    masks
}

/// Coefficients of a degree-k form in a `FormBasis`.
#[derive(Debug, Clone)]
pub struct KFormVector {
    pub degree: usize,
    pub coeffs: Array1<Complex64>,
}

impl KFormVector {
    pub fn zero(basis: &FormBasis, degree: usize) -> Self {
        Self {
            degree,
            coeffs: Array1::zeros(basis.degree_dim(degree)),
        }
    }

    pub fn max_coeff(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    /// Reality residual: coefficient(−n) = conj(coefficient(n)) per mask
    /// (torus only; line forms are real when imaginary parts vanish).
    pub fn reality_residual(&self, basis: &FormBasis) -> f64 {
        let scale = self.max_coeff().max(1e-300);
        if !basis.is_torus() {
            return self
                .coeffs
                .iter()
                .map(|c| c.im.abs())
                .fold(0.0f64, f64::max)
                / scale;
        }
        let mut worst: f64 = 0.0;
        for idx in 0..self.coeffs.len() {
            let (mask, rank) = basis.locate_in_degree(self.degree, idx);
            let n = basis.rank_wave(rank);
            let mut neg = [0i32; MAX_DIM];
            for i in 0..MAX_DIM {
                neg[i] = -n[i];
            }
            let j = basis.index_in_degree(mask, basis.wave_rank(&neg));
            worst = worst.max((self.coeffs[j] - self.coeffs[idx].conj()).norm() / scale);
        }
        worst
    }
}

/// Evaluate the density function of a top-degree form at a point.
pub fn eval_density(basis: &FormBasis, form: &KFormVector, point: &[f64]) -> Result<f64> {
    if form.degree != basis.dim() {
        return Err(FlowError::DegreeMismatch {
            expected: basis.dim(),
            got: form.degree,
        });
    }
    let scale = form.max_coeff();
    match basis.manifold() {
        Manifold::Torus { .. } => {
            let mut v = Complex64::ZERO;
            for (rank, c) in form.coeffs.iter().enumerate() {
                let n = basis.rank_wave(rank);
                let mut phase = 0.0;
                for i in 0..basis.dim() {
                    phase += n[i] as f64 * point[i];
                }
                v += c * Complex64::new(0.0, phase).exp();
            }
            let tol = 1e-8 * scale.max(1e-300);
            if v.im.abs() > tol {
                return Err(FlowError::ImaginaryResidual {
                    residual: v.im.abs(),
                    tol,
                });
            }
            Ok(v.re)
        }
        Manifold::Line {
            half_width,
            grid_count,
        } => {
            let h = basis.grid_step();
            let x = point[0].clamp(-half_width, *half_width);
            let t = (x + half_width) / h;
            let j = (t.floor() as usize).min(grid_count - 2);
            let frac = t - j as f64;
            let v = form.coeffs[j] * (basis.line_weight(j) * (1.0 - frac))
                + form.coeffs[j + 1] * (basis.line_weight(j + 1) * frac);
            let tol = 1e-8 * scale.max(1e-300);
            if v.im.abs() > tol {
                return Err(FlowError::ImaginaryResidual {
                    residual: v.im.abs(),
                    tol,
                });
            }
            Ok(v.re)
        }
    }
}

/// ∫_X ψ for a top-degree form: (2π)^D · c_{n=0} on the torus, Riemann
/// sum h·Σ on the line (tails decay, endpoint weights immaterial).
pub fn integral(basis: &FormBasis, form: &KFormVector) -> Result<Complex64> {
    if form.degree != basis.dim() {
        return Err(FlowError::DegreeMismatch {
            expected: basis.dim(),
            got: form.degree,
        });
    }
    match basis.manifold() {
        Manifold::Torus { dim, .. } => {
            let zero_rank = basis.wave_rank(&[0; MAX_DIM]);
            Ok(form.coeffs[zero_rank] * TAU.powi(*dim as i32))
        }
        Manifold::Line { .. } => {
            let h = basis.grid_step();
            let mut s = Complex64::ZERO;
            for (j, c) in form.coeffs.iter().enumerate() {
                s += c * basis.line_weight(j);
            }
            Ok(s * h)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn torus_dimensions() {
        let b = FormBasis::make(Manifold::Torus { dim: 1, n_cut: 2 }).unwrap();
        assert_eq!(b.degree_dim(0), 5);
        assert_eq!(b.degree_dim(1), 5);

        let b = FormBasis::make(Manifold::Torus { dim: 2, n_cut: 8 }).unwrap();
        assert_eq!(b.degree_dim(1), 578);

        let b = FormBasis::make(Manifold::Line {
            half_width: 6.0,
            grid_count: 200,
        })
        .unwrap();
        assert_eq!(b.degree_dim(0), 200);
        assert_eq!(b.degree_dim(1), 200);
    }

    #[test]
    fn rejects_bad_manifolds() {
        assert!(FormBasis::make(Manifold::Torus { dim: 4, n_cut: 2 }).is_err());
        assert!(FormBasis::make(Manifold::Torus { dim: 2, n_cut: 0 }).is_err());
        assert!(FormBasis::make(Manifold::Line {
            half_width: -1.0,
            grid_count: 200
        })
        .is_err());
        assert!(FormBasis::make(Manifold::Line {
            half_width: 6.0,
            grid_count: 8
        })
        .is_err());
    }

    #[test]
    fn wedge_signs() {
        assert_eq!(wedge_sign(0b000, 0).unwrap(), 1.0);
        // dx¹∧dx² stays sorted; dx²∧dx¹ flips
        assert_eq!(wedge_sign(0b001, 1).unwrap(), 1.0);
        assert_eq!(wedge_sign(0b010, 0).unwrap(), -1.0);
        // append at the end of dx¹∧dx²
        assert_eq!(wedge_sign(0b011, 2).unwrap(), 1.0);
        assert_eq!(wedge_sign(0b110, 0).unwrap(), 1.0);
        assert_eq!(wedge_sign(0b101, 1).unwrap(), -1.0);
        assert!(wedge_sign(0b001, 0).is_err());
    }

    #[test]
    fn density_and_integral() {
        // constant top form with coefficient 1 → density 1 everywhere
        let b = FormBasis::make(Manifold::Torus { dim: 2, n_cut: 3 }).unwrap();
        let mut f = KFormVector::zero(&b, 2);
        f.coeffs[b.wave_rank(&[0, 0, 0])] = Complex64::new(1.0, 0.0);
        assert_abs_diff_eq!(eval_density(&b, &f, &[0.3, 5.1]).unwrap(), 1.0);
        assert_abs_diff_eq!(
            integral(&b, &f).unwrap().re,
            TAU * TAU,
            epsilon = 1e-12
        );

        // e^{ix} + e^{-ix} stored spectrally → 2 cos x
        let b = FormBasis::make(Manifold::Torus { dim: 1, n_cut: 2 }).unwrap();
        let mut f = KFormVector::zero(&b, 1);
        f.coeffs[b.wave_rank(&[1, 0, 0])] = Complex64::new(1.0, 0.0);
        f.coeffs[b.wave_rank(&[-1, 0, 0])] = Complex64::new(1.0, 0.0);
        for k in 0..7 {
            let x = 0.9 * k as f64;
            assert_abs_diff_eq!(
                eval_density(&b, &f, &[x]).unwrap(),
                2.0 * x.cos(),
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn degree_mismatch_is_an_error() {
        let b = FormBasis::make(Manifold::Torus { dim: 2, n_cut: 3 }).unwrap();
        let f = KFormVector::zero(&b, 1);
        assert!(eval_density(&b, &f, &[0.0, 0.0]).is_err());
    }

    proptest! {
        #[test]
        fn enumeration_round_trip(dim in 1usize..=3, n_cut in 1usize..=4, seed in 0usize..10_000) {
            let b = FormBasis::make(Manifold::Torus { dim, n_cut }).unwrap();
            for k in 0..=dim {
                let d = b.degree_dim(k);
                let idx = seed % d;
                let (mask, rank) = b.locate_in_degree(k, idx);
                prop_assert_eq!(mask.count_ones() as usize, k);
                let n = b.rank_wave(rank);
                for i in 0..dim {
                    prop_assert!(n[i].unsigned_abs() as usize <= n_cut);
                }
                prop_assert_eq!(b.index_in_degree(mask, b.wave_rank(&n)), idx);
            }
        }
    }
}
