//! Degree-graded evolution operators as dense per-degree matrices.
//!
//! The evolution operator is assembled as H = L_F − T Σ_a L_{e_a}²
//! from truncated Lie-derivative factors.  Because the exterior
//! derivative is diagonal in the wavevector index, it commutes with the
//! Galerkin projection, so every factor L = dι + ιd commutes with d
//! exactly and [d, H] = 0 survives truncation.  The Ito variant is
//! H_ito = H − L_v with the drift correction v^i = T e^j_a ∂_j e^i_a.

use std::io::Write;
use std::sync::Arc;

use ndarray::{Array1, Array2};
use num_complex::Complex64;

use crate::basis::{parity_below, FormBasis, KFormVector, Manifold};
use crate::error::{FlowError, Result};
use crate::fields::{TrigPoly, VectorField, Vielbein, MAX_DIM};
use crate::geometry::{fill_convolution, hodge_star, GeometryBundle};

/// Dense-block cap; full non-Hermitian spectra above this are not a
/// desk-scale computation.
pub const MAX_BLOCK_ORDER: usize = 8192;

/// A graded operator: one dense block per source degree, mapping degree
/// k to degree k + shift.
#[derive(Debug, Clone)]
pub struct GradedOperator {
    pub shift: i8,
    blocks: Vec<Option<Array2<Complex64>>>,
    basis: Arc<FormBasis>,
}

impl GradedOperator {
    pub fn zeros(basis: Arc<FormBasis>, shift: i8) -> Result<Self> {
        let dim = basis.dim() as i8;
        let mut blocks = Vec::new();
        for k in 0..=basis.dim() {
            let target = k as i8 + shift;
            if target < 0 || target > dim {
                blocks.push(None);
                continue;
            }
            let rows = basis.degree_dim(target as usize);
            let cols = basis.degree_dim(k);
            if rows.max(cols) > MAX_BLOCK_ORDER {
                return Err(FlowError::BlockTooLarge {
                    degree: k,
                    order: rows.max(cols),
                    cap: MAX_BLOCK_ORDER,
                });
            }
            blocks.push(Some(Array2::zeros((rows, cols))));
        }
        Ok(Self {
            shift,
            blocks,
            basis,
        })
    }

    pub fn basis(&self) -> &Arc<FormBasis> {
        &self.basis
    }

    pub fn block(&self, source_degree: usize) -> Option<&Array2<Complex64>> {
        self.blocks.get(source_degree).and_then(|b| b.as_ref())
    }

    pub fn block_mut(&mut self, source_degree: usize) -> Option<&mut Array2<Complex64>> {
        self.blocks.get_mut(source_degree).and_then(|b| b.as_mut())
    }

    /// self ∘ other (apply `other` first).
    pub fn compose(&self, other: &Self) -> Result<Self> {
        let mut out = Self::zeros(self.basis.clone(), self.shift + other.shift)?;
        for k in 0..=self.basis.dim() {
            let mid = k as i8 + other.shift;
            if mid < 0 {
                continue;
            }
            if let (Some(b), Some(a)) = (other.block(k), self.block(mid as usize)) {
                if let Some(target) = out.block_mut(k) {
                    *target = a.dot(b);
                }
            }
        }
        Ok(out)
    }

    pub fn add_scaled(&self, other: &Self, factor: f64) -> Self {
        assert_eq!(self.shift, other.shift);
        let mut out = self.clone();
        for k in 0..=self.basis.dim() {
            if let (Some(t), Some(o)) = (out.block_mut(k), other.block(k)) {
                t.zip_mut_with(o, |a, b| *a += b * factor);
            }
        }
        out
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add_scaled(other, -1.0)
    }

    pub fn scale(&self, factor: f64) -> Self {
        let mut out = self.clone();
        for b in out.blocks.iter_mut().flatten() {
            b.mapv_inplace(|c| c * factor);
        }
        out
    }

    pub fn apply(&self, form: &KFormVector) -> Result<KFormVector> {
        let target = form.degree as i8 + self.shift;
        let block = self.block(form.degree).ok_or(FlowError::DegreeMismatch {
            expected: form.degree,
            got: form.degree,
        })?;
        Ok(KFormVector {
            degree: target as usize,
            coeffs: block.dot(&form.coeffs),
        })
    }

    /// Largest block 1-norm (max absolute column sum); the scalar ‖H‖
    /// used by every threshold policy downstream.
    pub fn op_norm(&self) -> f64 {
        self.blocks
            .iter()
            .flatten()
            .map(|b| {
                let mut worst: f64 = 0.0;
                for col in b.columns() {
                    worst = worst.max(col.iter().map(|c| c.norm()).sum());
                }
                worst
            })
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.blocks
            .iter()
            .flatten()
            .flat_map(|b| b.iter())
            .map(|c| c.norm())
            .fold(0.0, f64::max)
    }

    /// Binary dump: per block a header (degree u32, rows u64, cols u64,
    /// little-endian) followed by row-major (re, im) f64 pairs.
    pub fn dump_blocks<W: Write>(&self, w: &mut W) -> Result<()> {
        for k in 0..=self.basis.dim() {
            if let Some(b) = self.block(k) {
                w.write_all(&(k as u32).to_le_bytes())?;
                w.write_all(&(b.nrows() as u64).to_le_bytes())?;
                w.write_all(&(b.ncols() as u64).to_le_bytes())?;
                for c in b.iter() {
                    w.write_all(&c.re.to_le_bytes())?;
                    w.write_all(&c.im.to_le_bytes())?;
                }
            }
        }
        Ok(())
    }
}

/// d ∘ h − h ∘ d for a degree-preserving h (the supersymmetry check).
pub fn commutator_with_d(d: &GradedOperator, h: &GradedOperator) -> Result<GradedOperator> {
    assert_eq!(h.shift, 0);
    Ok(d.compose(h)?.sub(&h.compose(d)?))
}

/// d ∘ a + a ∘ d for a degree-lowering a (both operators fermionic).
pub fn anticommutator_with_d(d: &GradedOperator, a: &GradedOperator) -> Result<GradedOperator> {
    assert_eq!(a.shift, -1);
    let mut out = d.compose(a)?;
    let other = a.compose(d)?;
    for k in 0..=out.basis.dim() {
        if let (Some(t), Some(o)) = (out.block_mut(k), other.block(k)) {
            *t += o;
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------
// torus assembly
// ---------------------------------------------------------------------

/// Exterior derivative: (mask, n) → (mask ∪ {j}, n) with i·n_j and the
/// left-insertion parity.  Exact: no truncation loss.
pub fn exterior_derivative(basis: &Arc<FormBasis>) -> Result<GradedOperator> {
    let mut op = GradedOperator::zeros(basis.clone(), 1)?;
    match basis.manifold() {
        Manifold::Torus { .. } => {
            let fd = basis.fn_dim();
            for k in 0..basis.dim() {
                let masks: Vec<u8> = basis.masks(k).to_vec();
                let block = op.block_mut(k).unwrap();
                for (mp, &mask) in masks.iter().enumerate() {
                    for j in 0..basis.dim() {
                        if mask & (1 << j) != 0 {
                            continue;
                        }
                        let tmask = mask | (1 << j);
                        let sign = parity_below(mask, j);
                        let tp = basis.mask_pos(tmask);
                        for r in 0..fd {
                            let n = basis.rank_wave(r);
                            if n[j] == 0 {
                                continue;
                            }
                            block[(tp * fd + r, mp * fd + r)] +=
                                Complex64::new(0.0, sign * n[j] as f64);
                        }
                    }
                }
            }
        }
        Manifold::Line { .. } => {
            let dmat = line_difference(basis);
            *op.block_mut(0).unwrap() = dmat;
        }
    }
    Ok(op)
}

/// Shared one-sided first-difference matrix on the line grid: the
/// weighted supercharge S⁻¹∂S (S = diagonal node weights) with the
/// zero-value (decay) boundary treatment — the last row reads a zero
/// beyond the right end, and the first column is pinned so functions
/// vanish at the left end too.  One bidiagonal matrix shared by every
/// operator keeps the discrete supersymmetry algebra exact.
pub fn line_difference(basis: &FormBasis) -> Array2<Complex64> {
    let n = basis.fn_dim();
    let h = basis.grid_step();
    let mut m = Array2::zeros((n, n));
    for j in 0..n {
        if j > 0 {
            m[(j, j)] = Complex64::new(-1.0 / h, 0.0);
        }
        if j + 1 < n {
            let w = (basis.line_weight_log(j) - basis.line_weight_log(j + 1)).exp();
            m[(j, j + 1)] = Complex64::new(w / h, 0.0);
        }
    }
    m
}

/// Interior product ι_F: (mask, n) → (mask ∖ {j}, n + m) with the field
/// convolution, sharply projected back onto |n_i| ≤ N_cut.
pub fn interior_product(basis: &Arc<FormBasis>, field: &VectorField) -> Result<GradedOperator> {
    let mut op = GradedOperator::zeros(basis.clone(), -1)?;
    let fd = basis.fn_dim();
    let nc = basis.n_cut() as i32;
    for k in 1..=basis.dim() {
        let masks: Vec<u8> = basis.masks(k).to_vec();
        let block = op.block_mut(k).unwrap();
        for (mp, &mask) in masks.iter().enumerate() {
            for j in 0..basis.dim() {
                if mask & (1 << j) == 0 {
                    continue;
                }
                let tp = basis.mask_pos(mask & !(1 << j));
                let sign = parity_below(mask, j);
                for (w, c) in field.comp(j).terms() {
                    let contrib = c * sign;
                    for r in 0..fd {
                        let n = basis.rank_wave(r);
                        let mut t = [0i32; MAX_DIM];
                        let mut ok = true;
                        for i in 0..basis.dim() {
                            t[i] = n[i] + w[i];
                            if t[i].abs() > nc {
                                ok = false;
                                break;
                            }
                        }
                        if ok {
                            block[(tp * fd + basis.wave_rank(&t), mp * fd + r)] += contrib;
                        }
                    }
                }
            }
        }
    }
    Ok(op)
}

/// Interior product on the line (D = 1): multiplication by the sampled
/// field, degree 1 → 0.
pub fn line_interior_product(
    basis: &Arc<FormBasis>,
    f_samples: &[f64],
) -> Result<GradedOperator> {
    let mut op = GradedOperator::zeros(basis.clone(), -1)?;
    let block = op.block_mut(1).unwrap();
    for (j, &f) in f_samples.iter().enumerate() {
        block[(j, j)] = Complex64::new(f, 0.0);
    }
    Ok(op)
}

/// L = d ∘ ι + ι ∘ d from already-truncated factors; commutes with d
/// exactly for any ι.
pub fn lie_from_parts(d: &GradedOperator, iota: &GradedOperator) -> Result<GradedOperator> {
    let mut out = d.compose(iota)?;
    let other = iota.compose(d)?;
    for k in 0..=out.basis.dim() {
        if let (Some(t), Some(o)) = (out.block_mut(k), other.block(k)) {
            *t += o;
        }
    }
    out.shift = 0;
    Ok(out)
}

pub fn lie_derivative(basis: &Arc<FormBasis>, field: &VectorField) -> Result<GradedOperator> {
    let d = exterior_derivative(basis)?;
    let iota = interior_product(basis, field)?;
    lie_from_parts(&d, &iota)
}

/// The assembled operator family for one scenario.
pub struct OperatorSet {
    pub basis: Arc<FormBasis>,
    pub temperature: f64,
    pub d: GradedOperator,
    pub lie_flow: GradedOperator,
    pub lie_noise: Vec<GradedOperator>,
    pub h_strat: GradedOperator,
    pub h_ito: GradedOperator,
    pub bar_d: Option<GradedOperator>,
    pub laplace_diff: Option<GradedOperator>,
    pub laplace_hodge: Option<GradedOperator>,
}

impl OperatorSet {
    /// Torus assembly.  `with_geometry` additionally builds bar_d, the
    /// diffusion Laplacian [d, bar_d] and the Hodge Laplacian.
    pub fn assemble_torus(
        basis: Arc<FormBasis>,
        flow: &VectorField,
        vielbein: &Vielbein,
        temperature: f64,
        with_geometry: bool,
    ) -> Result<Self> {
        if temperature < 0.0 {
            return Err(FlowError::InvalidParameter {
                name: "temperature".into(),
                reason: "must be non-negative".into(),
            });
        }
        vielbein.check_invertible()?;
        let d = exterior_derivative(&basis)?;
        let lie_flow = lie_derivative(&basis, flow)?;
        let lie_noise: Vec<GradedOperator> = (0..basis.dim())
            .map(|a| lie_derivative(&basis, &vielbein.column(a)))
            .collect::<Result<_>>()?;
        let mut h_strat = lie_flow.clone();
        for lie in &lie_noise {
            let sq = lie.compose(lie)?;
            h_strat = h_strat.add_scaled(&sq, -temperature);
        }
        let v = vielbein.drift_correction(temperature);
        let lie_v = lie_derivative(&basis, &v)?;
        let h_ito = h_strat.sub(&lie_v);

        let (bar_d, laplace_diff, laplace_hodge) = if with_geometry {
            let keep = (2 * basis.n_cut()).max(4 * vielbein.max_harmonic()).max(8);
            let geom = GeometryBundle::build(vielbein, keep)?;
            let bar = assemble_bar_d(&basis, &geom)?;
            let diff = anticommutator_with_d(&d, &bar)?;
            let hodge = assemble_hodge_laplacian(&basis, &geom)?;
            (Some(bar), Some(diff), Some(hodge))
        } else {
            (None, None, None)
        };

        Ok(Self {
            basis,
            temperature,
            d,
            lie_flow,
            lie_noise,
            h_strat,
            h_ito,
            bar_d,
            laplace_diff,
            laplace_hodge,
        })
    }

    /// Line assembly: Langevin flow with additive noise, expressed in
    /// the Gibbs-weighted gauge carried by the basis (g = W/2T).  The
    /// evolution operator is the supercharge pair
    ///     H|₀ = T d̃ᵀ d̃,   H|₁ = T d̃ d̃ᵀ,
    /// the gauge transform of F∂ − T∂² with the drift folded into the
    /// shared difference matrix.  H = T[d, d̃ᵀ]₊ is manifestly d-exact,
    /// the blocks are symmetric (so the spectra are well conditioned),
    /// and the supersymmetry algebra holds to rounding.
    ///
    /// `f_samples` (the drift at the nodes) only enters the auxiliary
    /// advection operator reported as `lie_flow`.
    pub fn assemble_line(
        basis: Arc<FormBasis>,
        f_samples: &[f64],
        temperature: f64,
    ) -> Result<Self> {
        if temperature <= 0.0 {
            return Err(FlowError::InvalidParameter {
                name: "temperature".into(),
                reason: "must be positive on the line".into(),
            });
        }
        let d = exterior_derivative(&basis)?;
        let iota_f = line_interior_product(&basis, f_samples)?;
        let lie_flow = lie_from_parts(&d, &iota_f)?;
        // co-supercharge: the transpose of the shared difference matrix
        let mut cod = GradedOperator::zeros(basis.clone(), -1)?;
        *cod.block_mut(1).unwrap() = d.block(0).unwrap().t().to_owned();
        let h = anticommutator_with_d(&d, &cod)?.scale(temperature);
        Ok(Self {
            basis,
            temperature,
            d,
            lie_flow,
            lie_noise: Vec::new(),
            h_strat: h.clone(),
            h_ito: h,
            bar_d: None,
            laplace_diff: None,
            laplace_hodge: None,
        })
    }

    /// max |[d, H]| entry over both operator variants.
    pub fn susy_residual(&self) -> Result<f64> {
        let a = commutator_with_d(&self.d, &self.h_strat)?.max_abs();
        let b = commutator_with_d(&self.d, &self.h_ito)?.max_abs();
        Ok(a.max(b))
    }
}

/// ∇̃'_j = ∂_j − Γ̃^l_{kj} χ^k ∂/∂χ^l as a degree-preserving operator.
fn covariant_prime(
    basis: &Arc<FormBasis>,
    geom: &GeometryBundle,
    j: usize,
) -> Result<GradedOperator> {
    let mut op = GradedOperator::zeros(basis.clone(), 0)?;
    let fd = basis.fn_dim();
    let dim = basis.dim();
    for deg in 0..=dim {
        let masks: Vec<u8> = basis.masks(deg).to_vec();
        // ∂_j: diagonal i n_j on every mask
        {
            let block = op.block_mut(deg).unwrap();
            for (mp, _) in masks.iter().enumerate() {
                for r in 0..fd {
                    let n = basis.rank_wave(r);
                    block[(mp * fd + r, mp * fd + r)] += Complex64::new(0.0, n[j] as f64);
                }
            }
        }
        // − Γ̃^l_{kj} χ^k ∂/∂χ^l
        for (mp, &mask) in masks.iter().enumerate() {
            for l in 0..dim {
                if mask & (1 << l) == 0 {
                    continue;
                }
                let m1 = mask & !(1 << l);
                let s1 = parity_below(mask, l);
                for k in 0..dim {
                    if m1 & (1 << k) != 0 {
                        continue;
                    }
                    let m2 = m1 | (1 << k);
                    let s2 = parity_below(m1, k);
                    let coeff = &geom.weitzenbock[l][k][j];
                    if coeff.num_terms() == 0 {
                        continue;
                    }
                    let tp = basis.mask_pos(m2);
                    fill_convolution(
                        basis,
                        op.block_mut(deg).unwrap(),
                        tp,
                        mp,
                        coeff,
                        -s1 * s2,
                    );
                }
            }
        }
    }
    Ok(op)
}

/// Multiplication by a scalar trig polynomial (identity on masks).
fn mul_operator(basis: &Arc<FormBasis>, poly: &TrigPoly) -> Result<GradedOperator> {
    let mut op = GradedOperator::zeros(basis.clone(), 0)?;
    for deg in 0..=basis.dim() {
        let nmasks = basis.masks(deg).len();
        for mp in 0..nmasks {
            fill_convolution(basis, op.block_mut(deg).unwrap(), mp, mp, poly, 1.0);
        }
    }
    Ok(op)
}

/// Ghost annihilation ∂/∂χ^i.
fn ghost_lower(basis: &Arc<FormBasis>, i: usize) -> Result<GradedOperator> {
    let mut op = GradedOperator::zeros(basis.clone(), -1)?;
    let fd = basis.fn_dim();
    for deg in 1..=basis.dim() {
        let masks: Vec<u8> = basis.masks(deg).to_vec();
        let block = op.block_mut(deg).unwrap();
        for (mp, &mask) in masks.iter().enumerate() {
            if mask & (1 << i) == 0 {
                continue;
            }
            let sign = parity_below(mask, i);
            let tp = basis.mask_pos(mask & !(1 << i));
            for r in 0..fd {
                block[(tp * fd + r, mp * fd + r)] += Complex64::new(sign, 0.0);
            }
        }
    }
    Ok(op)
}

/// d̄ = −Σ_{ij} ∂/∂χ^i ∘ g^{ij} ∘ ∇̃'_j (the probability-current piece
/// of the appendix operator; only used for the consistency check
/// [d, d̄] ≈ −Σ_a L_{e_a}²).
pub fn assemble_bar_d(basis: &Arc<FormBasis>, geom: &GeometryBundle) -> Result<GradedOperator> {
    let dim = basis.dim();
    let mut acc = GradedOperator::zeros(basis.clone(), -1)?;
    for j in 0..dim {
        let nabla = covariant_prime(basis, geom, j)?;
        for i in 0..dim {
            if geom.g_inv[i][j].num_terms() == 0 {
                continue;
            }
            let g_mul = mul_operator(basis, &geom.g_inv[i][j])?;
            let lower = ghost_lower(basis, i)?;
            let term = lower.compose(&g_mul)?.compose(&nabla)?;
            acc = acc.add_scaled(&term, -1.0);
        }
    }
    Ok(acc)
}

/// Δ_H = d d† + d† d with d† = ±⋆d⋆ built from the Hodge star blocks.
pub fn assemble_hodge_laplacian(
    basis: &Arc<FormBasis>,
    geom: &GeometryBundle,
) -> Result<GradedOperator> {
    let dim = basis.dim();
    let stars = hodge_star(basis, geom)?;
    let d = exterior_derivative(basis)?;
    // codifferential blocks: delta[k]: degree k → k−1, k = 1..=D
    let mut delta: Vec<Option<Array2<Complex64>>> = vec![None; dim + 1];
    for (k, slot) in delta.iter_mut().enumerate().take(dim + 1).skip(1) {
        let sign = if (dim * (k + 1) + 1) % 2 == 0 { 1.0 } else { -1.0 };
        let inner = d.block(dim - k).expect("d block");
        let m = stars[dim - k + 1].dot(&inner.dot(&stars[k]));
        *slot = Some(m.mapv(|c| c * sign));
    }
    let mut out = GradedOperator::zeros(basis.clone(), 0)?;
    for k in 0..=dim {
        let mut block = Array2::<Complex64>::zeros((basis.degree_dim(k), basis.degree_dim(k)));
        if k >= 1 {
            if let (Some(dl), Some(dk)) = (d.block(k - 1), delta[k].as_ref()) {
                block += &dl.dot(dk);
            }
        }
        if k < dim {
            if let (Some(dk1), Some(dk)) = (delta[k + 1].as_ref(), d.block(k)) {
                block += &dk1.dot(dk);
            }
        }
        *out.block_mut(k).unwrap() = block;
    }
    Ok(out)
}

/// Random real k-form (conjugate-symmetric coefficients) for invariant
/// checks.
pub fn random_real_form(basis: &FormBasis, degree: usize, seed: u64) -> KFormVector {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut v = KFormVector::zero(basis, degree);
    if !basis.is_torus() {
        for c in v.coeffs.iter_mut() {
            *c = Complex64::new(rng.gen_range(-1.0..1.0), 0.0);
        }
        return v;
    }
    let fd = basis.fn_dim();
    let nmasks = basis.masks(degree).len();
    for mp in 0..nmasks {
        for r in 0..fd {
            let n = basis.rank_wave(r);
            let mut neg = [0i32; MAX_DIM];
            for i in 0..MAX_DIM {
                neg[i] = -n[i];
            }
            let rneg = basis.wave_rank(&neg);
            if rneg < r {
                continue;
            }
            let c = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            if rneg == r {
                v.coeffs[mp * fd + r] = Complex64::new(c.re, 0.0);
            } else {
                v.coeffs[mp * fd + r] = c;
                v.coeffs[mp * fd + rneg] = c.conj();
            }
        }
    }
    v
}

/// Apply a vector to each degree of a degree-preserving operator and
/// report the worst reality violation (real operators must map real
/// forms to real forms).
pub fn reality_check(op: &GradedOperator, seed: u64) -> f64 {
    let basis = op.basis();
    let mut worst: f64 = 0.0;
    for k in 0..=basis.dim() {
        if op.block(k).is_none() {
            continue;
        }
        let form = random_real_form(basis, k, seed + k as u64);
        if let Ok(out) = op.apply(&form) {
            worst = worst.max(out.reality_residual(basis));
        }
    }
    worst
}

pub fn identity_like(basis: &Arc<FormBasis>) -> Result<GradedOperator> {
    let mut op = GradedOperator::zeros(basis.clone(), 0)?;
    for k in 0..=basis.dim() {
        if let Some(b) = op.block_mut(k) {
            *b = Array2::eye(basis.degree_dim(k));
        }
    }
    Ok(op)
}

/// Matrix-free spot check: H v for a basis form, used in tests.
pub fn unit_form(basis: &FormBasis, degree: usize, idx: usize) -> KFormVector {
    let mut v = KFormVector::zero(basis, degree);
    v.coeffs[idx] = Complex64::new(1.0, 0.0);
    v
}

pub fn coeffs_max_diff(a: &Array1<Complex64>, b: &Array1<Complex64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::Manifold;
    use approx::assert_abs_diff_eq;

    fn torus(dim: usize, n_cut: usize) -> Arc<FormBasis> {
        Arc::new(FormBasis::make(Manifold::Torus { dim, n_cut }).unwrap())
    }

    #[test]
    fn d_on_circle_is_i_n() {
        let b = torus(1, 3);
        let d = exterior_derivative(&b).unwrap();
        let block = d.block(0).unwrap();
        for r in 0..b.fn_dim() {
            let n = b.rank_wave(r);
            assert_eq!(block[(r, r)], Complex64::new(0.0, n[0] as f64));
        }
    }

    #[test]
    fn d_squared_identically_zero() {
        for (dim, n_cut) in [(2usize, 4usize), (3, 2)] {
            let b = torus(dim, n_cut);
            let d = exterior_derivative(&b).unwrap();
            let dd = d.compose(&d).unwrap();
            assert_eq!(dd.max_abs(), 0.0);
        }
    }

    #[test]
    fn d_kills_closed_monomial() {
        // d(e^{ix¹} dx¹) = 0 on T²
        let b = torus(2, 3);
        let d = exterior_derivative(&b).unwrap();
        let idx = b.index_in_degree(0b01, b.wave_rank(&[1, 0, 0]));
        let out = d.apply(&unit_form(&b, 1, idx)).unwrap();
        assert_eq!(out.max_coeff(), 0.0);
    }

    #[test]
    fn interior_product_contracts() {
        // constant F = (1,0): ι_F(dx¹∧dx²) = dx²
        let b = torus(2, 2);
        let f = VectorField::new(vec![TrigPoly::constant(2, 1.0), TrigPoly::zero(2)]);
        let iota = interior_product(&b, &f).unwrap();
        let top = unit_form(&b, 2, b.index_in_degree(0b11, b.wave_rank(&[0; 3])));
        let out = iota.apply(&top).unwrap();
        assert_eq!(out.degree, 1);
        let want = b.index_in_degree(0b10, b.wave_rank(&[0; 3]));
        assert_eq!(out.coeffs[want], Complex64::new(1.0, 0.0));
        assert_abs_diff_eq!(out.coeffs.iter().map(|c| c.norm()).sum::<f64>(), 1.0);
        // nothing to contract on 0-forms
        assert!(iota.block(0).is_none());
    }

    #[test]
    fn interior_product_squares_to_zero() {
        // every T² preset: gradient, rotation, zero.  Per-component
        // multiplications act on disjoint axes (or are constant), so the
        // truncated matrices commute and antisymmetry cancels exactly.
        let b = torus(2, 2);
        let gradient = VectorField::new(vec![
            TrigPoly::real_sin(2, 0, 1, 1.0),
            TrigPoly::real_sin(2, 1, 1, 1.0),
        ]);
        let rotation = VectorField::new(vec![
            TrigPoly::constant(2, 1.0),
            TrigPoly::constant(2, 0.618),
        ]);
        for f in [gradient, rotation, VectorField::zero(2)] {
            let iota = interior_product(&b, &f).unwrap();
            assert_eq!(iota.compose(&iota).unwrap().max_abs(), 0.0);
        }
    }

    #[test]
    fn lie_constant_rotation_diagonal() {
        let b = torus(2, 3);
        let omega = [0.7, 1.3];
        let f = VectorField::new(vec![
            TrigPoly::constant(2, omega[0]),
            TrigPoly::constant(2, omega[1]),
        ]);
        let lie = lie_derivative(&b, &f).unwrap();
        let block = lie.block(0).unwrap();
        for r in 0..b.fn_dim() {
            let n = b.rank_wave(r);
            let want = Complex64::new(0.0, omega[0] * n[0] as f64 + omega[1] * n[1] as f64);
            assert!((block[(r, r)] - want).norm() < 1e-14);
        }
        // zero field → zero operator
        let z = lie_derivative(&b, &VectorField::zero(2)).unwrap();
        assert_eq!(z.max_abs(), 0.0);
    }

    #[test]
    fn lie_matches_direct_construction_oracle() {
        // D=1, F = sin x on 0-forms: L = C_F · diag(i n) entrywise
        let b = torus(1, 4);
        let f = VectorField::new(vec![TrigPoly::real_sin(1, 0, 1, 1.0)]);
        let lie = lie_derivative(&b, &f).unwrap();
        let block = lie.block(0).unwrap();
        let nc = b.n_cut() as i32;
        for rr in 0..b.fn_dim() {
            let nr = b.rank_wave(rr)[0];
            for cc in 0..b.fn_dim() {
                let ncn = b.rank_wave(cc)[0];
                let diff = nr - ncn;
                let conv = if diff == 1 {
                    Complex64::new(0.0, -0.5)
                } else if diff == -1 {
                    Complex64::new(0.0, 0.5)
                } else {
                    Complex64::ZERO
                };
                let want = conv * Complex64::new(0.0, ncn as f64);
                assert!(
                    (block[(rr, cc)] - want).norm() < 1e-14,
                    "mismatch at ({nr},{ncn})"
                );
                let _ = nc;
            }
        }
        // constants are annihilated: the n = 0 column vanishes
        let zero_col = b.wave_rank(&[0; 3]);
        for rr in 0..b.fn_dim() {
            assert_eq!(block[(rr, zero_col)], Complex64::ZERO);
        }
        // mass is conserved on the top degree: the n = 0 row vanishes
        let top = lie.block(1).unwrap();
        for cc in 0..b.fn_dim() {
            assert_eq!(top[(zero_col, cc)], Complex64::ZERO);
        }
    }

    #[test]
    fn flat_h_on_functions_is_tn2() {
        let b = torus(1, 4);
        let set = OperatorSet::assemble_torus(
            b.clone(),
            &VectorField::zero(1),
            &Vielbein::identity(1),
            0.7,
            false,
        )
        .unwrap();
        let block = set.h_strat.block(0).unwrap();
        for r in 0..b.fn_dim() {
            let n = b.rank_wave(r)[0] as f64;
            assert_abs_diff_eq!(block[(r, r)].re, 0.7 * n * n, epsilon = 1e-13);
            assert_abs_diff_eq!(block[(r, r)].im, 0.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn susy_commutator_vanishes() {
        // multiplicative noise on T¹ and a curved T² preset
        let b = torus(1, 8);
        let f = VectorField::new(vec![TrigPoly::real_sin(1, 0, 1, 1.0)]);
        let e = Vielbein::diagonal(vec![
            TrigPoly::constant(1, 1.0).add(&TrigPoly::real_sin(1, 0, 1, 0.5)),
        ]);
        let set = OperatorSet::assemble_torus(b, &f, &e, 0.3, false).unwrap();
        assert!(set.susy_residual().unwrap() < 1e-12 * set.h_strat.op_norm());

        let b2 = torus(2, 4);
        let f2 = VectorField::new(vec![
            TrigPoly::real_sin(2, 0, 1, 1.0),
            TrigPoly::real_sin(2, 1, 1, 1.0),
        ]);
        let e2 = Vielbein::diagonal(vec![
            TrigPoly::constant(2, 1.0),
            TrigPoly::constant(2, 1.0).add(&TrigPoly::real_cos(2, 0, 1, 0.3)),
        ]);
        let set2 = OperatorSet::assemble_torus(b2, &f2, &e2, 0.5, false).unwrap();
        assert!(set2.susy_residual().unwrap() < 1e-12 * set2.h_strat.op_norm());
    }

    #[test]
    fn additive_noise_ito_equals_strat() {
        let b = torus(2, 3);
        let f = VectorField::new(vec![
            TrigPoly::real_sin(2, 0, 1, 1.0),
            TrigPoly::real_cos(2, 1, 1, 1.0),
        ]);
        let set = OperatorSet::assemble_torus(b, &f, &Vielbein::identity(2), 0.4, false).unwrap();
        assert_eq!(set.h_strat.sub(&set.h_ito).max_abs(), 0.0);
    }

    #[test]
    fn ito_correction_matches_connection_route() {
        // v^i = T e^j_a ∂_j e^i_a must equal −T Γ̃^i_{kj} g^{jk} built
        // from the sampled geometry
        let e = Vielbein::diagonal(vec![
            TrigPoly::constant(1, 1.0).add(&TrigPoly::real_sin(1, 0, 1, 0.5)),
        ]);
        let t = 0.3;
        let v = e.drift_correction(t);
        let geom = GeometryBundle::build(&e, 24).unwrap();
        for k in 0..9 {
            let x = [0.7 * k as f64];
            let mut via_conn = 0.0;
            for kk in 0..1 {
                for j in 0..1 {
                    via_conn -= t
                        * geom.weitzenbock[0][kk][j].eval_real(&x)
                        * geom.g_inv[j][kk].eval_real(&x);
                }
            }
            assert_abs_diff_eq!(v.comp(0).eval_real(&x), via_conn, epsilon = 1e-8);
        }
        // and H_strat − H_ito is exactly the Lie derivative along v
        let b = torus(1, 8);
        let f = VectorField::new(vec![TrigPoly::real_sin(1, 0, 1, 1.0)]);
        let set = OperatorSet::assemble_torus(b.clone(), &f, &e, t, false).unwrap();
        let lie_v = lie_derivative(&b, &v).unwrap();
        let resid = set.h_strat.sub(&set.h_ito).sub(&lie_v).max_abs();
        assert!(resid < 1e-12 * set.h_strat.op_norm());
    }

    #[test]
    fn flat_bar_d_gives_flat_laplacian() {
        let b = torus(2, 3);
        let geom = GeometryBundle::build(&Vielbein::identity(2), 8).unwrap();
        let bar = assemble_bar_d(&b, &geom).unwrap();
        // bar_d lowers degree by exactly one
        assert_eq!(bar.shift, -1);
        assert!(bar.block(0).is_none());
        let d = exterior_derivative(&b).unwrap();
        let lap = anticommutator_with_d(&d, &bar).unwrap();
        for deg in 0..=2 {
            let block = lap.block(deg).unwrap();
            let fd = b.fn_dim();
            for mp in 0..b.masks(deg).len() {
                for r in 0..fd {
                    let n = b.rank_wave(r);
                    let want = (n[0] * n[0] + n[1] * n[1]) as f64;
                    let got = block[(mp * fd + r, mp * fd + r)];
                    assert_abs_diff_eq!(got.re, want, epsilon = 1e-10);
                }
            }
            let mut off = 0.0f64;
            for ((i, j), c) in block.indexed_iter() {
                if i != j {
                    off = off.max(c.norm());
                }
            }
            assert!(off < 1e-10);
        }
    }

    #[test]
    fn hodge_star_flat_t2() {
        let b = torus(2, 2);
        let geom = GeometryBundle::build(&Vielbein::identity(2), 8).unwrap();
        let stars = hodge_star(&b, &geom).unwrap();
        let zero = b.wave_rank(&[0; 3]);
        // ⋆1 = dx¹∧dx², ⋆(dx¹∧dx²) = 1
        assert_eq!(stars[0][(zero, zero)], Complex64::new(1.0, 0.0));
        assert_eq!(stars[2][(zero, zero)], Complex64::new(1.0, 0.0));
        // ⋆dx¹ = dx², ⋆dx² = −dx¹: degree-1 masks ordered (0b01, 0b10)
        let fd = b.fn_dim();
        assert_eq!(stars[1][(fd + zero, zero)], Complex64::new(1.0, 0.0));
        assert_eq!(stars[1][(zero, fd + zero)], Complex64::new(-1.0, 0.0));
        assert_eq!(stars[1][(zero, zero)], Complex64::ZERO);
    }

    #[test]
    fn hodge_star_double_application_sign() {
        // curved T² metric: ⋆⋆ = (−1)^{k(D−k)} within 1e−8 away from the
        // cutoff boundary.  1/√g has a geometric tail (ratio ≈ 0.15 at
        // α = 0.3), so a margin of 10 pushes its influence below 1e−8;
        // rows at the sharp cutoff itself cannot represent the product.
        let b = torus(2, 14);
        let e = Vielbein::diagonal(vec![
            TrigPoly::constant(2, 1.0),
            TrigPoly::constant(2, 1.0).add(&TrigPoly::real_cos(2, 0, 1, 0.3)),
        ]);
        let geom = GeometryBundle::build(&e, 30).unwrap();
        let stars = hodge_star(&b, &geom).unwrap();
        let worst = crate::geometry::star_involution_residual(&b, &stars, 10);
        assert!(worst < 1e-8, "interior ⋆⋆ residual {worst}");
    }

    #[test]
    fn hodge_laplacian_flat_t2_spectrum() {
        let b = torus(2, 3);
        let geom = GeometryBundle::build(&Vielbein::identity(2), 8).unwrap();
        let lap = assemble_hodge_laplacian(&b, &geom).unwrap();
        let block = lap.block(0).unwrap();
        let fd = b.fn_dim();
        for r in 0..fd {
            let n = b.rank_wave(r);
            let want = (n[0] * n[0] + n[1] * n[1]) as f64;
            assert_abs_diff_eq!(block[(r, r)].re, want, epsilon = 1e-10);
        }
        // flat: diffusion and Hodge Laplacians coincide
        let d = exterior_derivative(&b).unwrap();
        let bar = assemble_bar_d(&b, &geom).unwrap();
        let diff = anticommutator_with_d(&d, &bar).unwrap();
        let delta = diff.sub(&lap);
        assert!(delta.max_abs() < 1e-10);
    }

    #[test]
    fn reality_is_preserved() {
        let b = torus(2, 3);
        let f = VectorField::new(vec![
            TrigPoly::real_sin(2, 0, 1, 0.8),
            TrigPoly::real_cos(2, 1, 2, 0.4),
        ]);
        let e = Vielbein::diagonal(vec![
            TrigPoly::constant(2, 1.0),
            TrigPoly::constant(2, 1.0).add(&TrigPoly::real_cos(2, 0, 1, 0.3)),
        ]);
        let set = OperatorSet::assemble_torus(b, &f, &e, 0.5, false).unwrap();
        for op in [&set.d, &set.h_strat, &set.h_ito, &set.lie_flow] {
            assert!(reality_check(op, 17) < 1e-12);
        }
    }

    #[test]
    fn line_operators_and_susy() {
        let b = Arc::new(
            FormBasis::make(Manifold::Line {
                half_width: 6.0,
                grid_count: 64,
            })
            .unwrap(),
        );
        let f: Vec<f64> = (0..64)
            .map(|j| {
                let x = b.grid_node(j);
                -4.0 * x * (x * x - 1.0)
            })
            .collect();
        let set = OperatorSet::assemble_line(b.clone(), &f, 0.3).unwrap();
        let dd = set.d.compose(&set.d).unwrap();
        assert_eq!(dd.max_abs(), 0.0);
        // shared ∂ makes [d, H] vanish to rounding
        assert!(set.susy_residual().unwrap() < 1e-12 * set.h_strat.op_norm());
    }

    #[test]
    fn block_cap_is_enforced() {
        let b = torus(3, 14); // 3·29³ = 73167 ≫ cap
        assert!(matches!(
            GradedOperator::zeros(b, 0),
            Err(FlowError::BlockTooLarge { .. })
        ));
    }

    #[test]
    fn binary_dump_layout() {
        let b = torus(1, 1);
        let d = exterior_derivative(&b).unwrap();
        let mut buf = Vec::new();
        d.dump_blocks(&mut buf).unwrap();
        // one block: degree 0, 3×3
        assert_eq!(buf.len(), 4 + 8 + 8 + 9 * 16);
        assert_eq!(u32::from_le_bytes(buf[0..4].try_into().unwrap()), 0);
        assert_eq!(u64::from_le_bytes(buf[4..12].try_into().unwrap()), 3);
        assert_eq!(u64::from_le_bytes(buf[12..20].try_into().unwrap()), 3);
    }
}
