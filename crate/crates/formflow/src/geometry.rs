//! Noise-induced geometry of a vielbein: metric, Weitzenböck and
//! Levi-Civita connections, torsion, and the Hodge star.
//!
//! Conventions (fixed once, validated by the metric-compatibility
//! residual): the Weitzenböck coefficient Γ̃^k_{ji} = e^k_a ∂_j e^a_i
//! carries the derivative on the first lower index j and the inverse
//! vielbein leg on the second lower index i, so that
//!     ∂_i g^{jk} + Γ̃^j_{ip} g^{pk} + Γ̃^k_{ip} g^{pj} = 0.

use ndarray::Array2;
use num_complex::Complex64;

use crate::basis::{FormBasis, Manifold};
use crate::error::{FlowError, Result};
use crate::fields::{det_small, inv_small, TrigPoly, Vielbein, MAX_DIM};

/// Rank-3 coefficient table c[upper][lower1][lower2].
pub type Conn3 = Vec<Vec<Vec<TrigPoly>>>;

#[derive(Debug, Clone)]
pub struct GeometryBundle {
    pub dim: usize,
    /// g^{ij} = Σ_a e^i_a e^j_a (exact product)
    pub g_inv: Vec<Vec<TrigPoly>>,
    /// g_{ij}, sampled pointwise and re-expanded
    pub g_lower: Vec<Vec<TrigPoly>>,
    /// √det(g_{ij}) = 1/|det e|
    pub sqrt_det_g: TrigPoly,
    /// det g_{ij}
    pub metric_det: TrigPoly,
    /// Γ̃^k_{ji}, stored [k][j][i]
    pub weitzenbock: Conn3,
    /// Γ^l_{jk} (Levi-Civita), stored [l][j][k]
    pub levi_civita: Conn3,
    /// T^l_{jk} = Γ̃^l_{kj} − Γ̃^l_{jk}, stored [l][j][k]
    pub torsion: Conn3,
    /// harmonics kept by sampled re-expansions
    pub keep: usize,
}

fn conn_zero(dim: usize) -> Conn3 {
    vec![vec![vec![TrigPoly::zero(dim); dim]; dim]; dim]
}

/// g^{ij} = Σ_a e^i_a e^j_a as an exact trig polynomial.
pub fn metric_from_vielbein(e: &Vielbein) -> Result<Vec<Vec<TrigPoly>>> {
    e.check_invertible()?;
    let dim = e.dim();
    let mut g = vec![vec![TrigPoly::zero(dim); dim]; dim];
    for i in 0..dim {
        for j in 0..dim {
            let mut s = TrigPoly::zero(dim);
            for a in 0..dim {
                s = s.add(&e.entry(i, a).mul(e.entry(j, a)));
            }
            g[i][j] = s.prune(1e-15);
        }
    }
    Ok(g)
}

/// Γ̃^k_{ji} = e^k_a ∂_j e^a_i with the inverse vielbein sampled and
/// re-expanded at `keep` harmonics.
pub fn weitzenbock_connection(e: &Vielbein, keep: usize) -> Result<Conn3> {
    let dim = e.dim();
    let e_inv = e.inverse_expanded(keep)?;
    let mut conn = conn_zero(dim);
    for k in 0..dim {
        for j in 0..dim {
            for i in 0..dim {
                let mut s = TrigPoly::zero(dim);
                for a in 0..dim {
                    s = s.add(&e.entry(k, a).mul(&e_inv[a][i].partial(j)));
                }
                conn[k][j][i] = s.prune(1e-13);
            }
        }
    }
    Ok(conn)
}

/// Γ^l_{jk} = ½ g^{lp}(∂_j g_{pk} + ∂_k g_{pj} − ∂_p g_{jk}).
pub fn levi_civita(
    g_inv: &[Vec<TrigPoly>],
    g_lower: &[Vec<TrigPoly>],
) -> Conn3 {
    let dim = g_inv.len();
    let mut conn = conn_zero(dim);
    for l in 0..dim {
        for j in 0..dim {
            for k in 0..dim {
                let mut s = TrigPoly::zero(dim);
                for p in 0..dim {
                    let inner = g_lower[p][k]
                        .partial(j)
                        .add(&g_lower[p][j].partial(k))
                        .sub(&g_lower[j][k].partial(p));
                    s = s.add(&g_inv[l][p].mul(&inner));
                }
                conn[l][j][k] = s.scale(0.5).prune(1e-13);
            }
        }
    }
    conn
}

/// T^l_{jk} = Γ̃^l_{kj} − Γ̃^l_{jk}; identically zero in one dimension.
pub fn torsion(weitzenbock: &Conn3) -> Conn3 {
    let dim = weitzenbock.len();
    let mut t = conn_zero(dim);
    for l in 0..dim {
        for j in 0..dim {
            for k in 0..dim {
                t[l][j][k] = weitzenbock[l][k][j].sub(&weitzenbock[l][j][k]);
            }
        }
    }
    t
}

impl GeometryBundle {
    pub fn build(e: &Vielbein, keep: usize) -> Result<Self> {
        let dim = e.dim();
        let g_inv = metric_from_vielbein(e)?;
        // pointwise inverse metric and volume factor, re-expanded
        let eval_g = |x: &[f64]| -> Vec<Vec<f64>> {
            (0..dim)
                .map(|i| (0..dim).map(|j| g_inv[i][j].eval_real(x)).collect())
                .collect()
        };
        let mut g_lower = vec![vec![TrigPoly::zero(dim); dim]; dim];
        for i in 0..dim {
            for j in 0..dim {
                g_lower[i][j] =
                    TrigPoly::from_samples(dim, |x| inv_small(&eval_g(x))[i][j], keep)
                        .prune(1e-14);
            }
        }
        let metric_det =
            TrigPoly::from_samples(dim, |x| 1.0 / det_small(&eval_g(x)), keep).prune(1e-14);
        let sqrt_det_g =
            TrigPoly::from_samples(dim, |x| (1.0 / det_small(&eval_g(x))).sqrt(), keep)
                .prune(1e-14);
        let weitzenbock = weitzenbock_connection(e, keep)?;
        let levi_civita = levi_civita(&g_inv, &g_lower);
        let torsion = torsion(&weitzenbock);
        let bundle = Self {
            dim,
            g_inv,
            g_lower,
            sqrt_det_g,
            metric_det,
            weitzenbock,
            levi_civita,
            torsion,
            keep,
        };
        bundle.check_positive(32)?;
        Ok(bundle)
    }

    /// Sylvester criterion for g^{ij}(x) on a uniform grid.
    pub fn check_positive(&self, samples_per_dim: usize) -> Result<()> {
        let step = std::f64::consts::TAU / samples_per_dim as f64;
        let total = samples_per_dim.pow(self.dim as u32);
        let mut min_minor = f64::INFINITY;
        for flat in 0..total {
            let mut idx = flat;
            let mut x = [0.0; MAX_DIM];
            for xi in x.iter_mut().take(self.dim) {
                *xi = (idx % samples_per_dim) as f64 * step;
                idx /= samples_per_dim;
            }
            let g: Vec<Vec<f64>> = (0..self.dim)
                .map(|i| {
                    (0..self.dim)
                        .map(|j| self.g_inv[i][j].eval_real(&x[..self.dim]))
                        .collect()
                })
                .collect();
            for lead in 1..=self.dim {
                let sub: Vec<Vec<f64>> =
                    (0..lead).map(|i| g[i][..lead].to_vec()).collect();
                min_minor = min_minor.min(det_small(&sub));
            }
        }
        if min_minor <= 0.0 {
            return Err(FlowError::NonPositiveMetric { min_eig: min_minor });
        }
        Ok(())
    }

    /// Max pointwise residual of ∂_i g^{jk} + Γ̃^j_{ip} g^{pk} + Γ̃^k_{ip} g^{pj},
    /// relative to max |g^{jk}|, on a uniform grid.
    pub fn metric_compat_residual(&self, samples_per_dim: usize) -> f64 {
        let dim = self.dim;
        let step = std::f64::consts::TAU / samples_per_dim as f64;
        let total = samples_per_dim.pow(dim as u32);
        let mut scale: f64 = 0.0;
        let mut worst: f64 = 0.0;
        for flat in 0..total {
            let mut idx = flat;
            let mut xv = [0.0; MAX_DIM];
            for xi in xv.iter_mut().take(dim) {
                *xi = (idx % samples_per_dim) as f64 * step;
                idx /= samples_per_dim;
            }
            let x = &xv[..dim];
            for j in 0..dim {
                for k in 0..dim {
                    scale = scale.max(self.g_inv[j][k].eval_real(x).abs());
                    for i in 0..dim {
                        let mut r = self.g_inv[j][k].partial(i).eval_real(x);
                        for p in 0..dim {
                            r += self.weitzenbock[j][i][p].eval_real(x)
                                * self.g_inv[p][k].eval_real(x);
                            r += self.weitzenbock[k][i][p].eval_real(x)
                                * self.g_inv[p][j].eval_real(x);
                        }
                        worst = worst.max(r.abs());
                    }
                }
            }
        }
        worst / scale.max(1e-300)
    }

    /// Max residual of T^l_{jk} − (K^l_{kj} − K^l_{jk}) with K = Γ̃ − Γ.
    pub fn cotorsion_residual(&self, samples_per_dim: usize) -> f64 {
        let dim = self.dim;
        let step = std::f64::consts::TAU / samples_per_dim as f64;
        let total = samples_per_dim.pow(dim as u32);
        let mut worst: f64 = 0.0;
        let mut scale: f64 = 1e-300;
        for flat in 0..total {
            let mut idx = flat;
            let mut xv = [0.0; MAX_DIM];
            for xi in xv.iter_mut().take(dim) {
                *xi = (idx % samples_per_dim) as f64 * step;
                idx /= samples_per_dim;
            }
            let x = &xv[..dim];
            for l in 0..dim {
                for j in 0..dim {
                    for k in 0..dim {
                        let kc = |a: usize, b: usize| {
                            self.weitzenbock[l][a][b].eval_real(x)
                                - self.levi_civita[l][a][b].eval_real(x)
                        };
                        let t = self.torsion[l][j][k].eval_real(x);
                        scale = scale.max(t.abs()).max(kc(j, k).abs());
                        worst = worst.max((t - (kc(k, j) - kc(j, k))).abs());
                    }
                }
            }
        }
        worst / scale
    }
}

/// Hodge star matrices, one per source degree r, mapping degree r to
/// degree D−r:  ⋆dx^A = √g Σ_{A'} det[g^{a a'}] ε(A'∪B') dx^{B'}.
pub fn hodge_star(basis: &FormBasis, g: &GeometryBundle) -> Result<Vec<Array2<Complex64>>> {
    if !matches!(basis.manifold(), Manifold::Torus { .. }) {
        return Err(FlowError::DomainMismatch(
            "hodge star needs the torus basis".into(),
        ));
    }
    let dim = basis.dim();
    let mut stars = Vec::with_capacity(dim + 1);
    for r in 0..=dim {
        let rows = basis.degree_dim(dim - r);
        let cols = basis.degree_dim(r);
        let mut m = Array2::<Complex64>::zeros((rows, cols));
        for (a_pos, &a_mask) in basis.masks(r).iter().enumerate() {
            let a_set = mask_bits(a_mask, dim);
            for &ap_mask in basis.masks(r).iter() {
                let ap_set = mask_bits(ap_mask, dim);
                // det of the r×r block [g^{a_i, a'_j}]
                let det = minor_det(&g.g_inv, &a_set, &ap_set);
                let coeff = g.sqrt_det_g.mul(&det).prune(1e-14);
                if coeff.num_terms() == 0 {
                    continue;
                }
                let bp_mask = (!ap_mask) & ((1u8 << dim) - 1);
                let bp_set = mask_bits(bp_mask, dim);
                let sign = perm_sign(&ap_set, &bp_set);
                let bp_pos = basis.mask_pos(bp_mask);
                fill_convolution(
                    basis,
                    &mut m,
                    bp_pos,
                    a_pos,
                    &coeff,
                    sign,
                );
            }
        }
        stars.push(m);
    }
    Ok(stars)
}

/// Residual of ⋆⋆ = (−1)^{k(D−k)} measured away from the spectral
/// cutoff: rows and columns whose wavevectors sit within `margin` of
/// |n_i| = N_cut are excluded, since a sharp Galerkin product cannot
/// represent the identity there (the defect is O(metric tail), not a
/// convergence failure).
pub fn star_involution_residual(
    basis: &FormBasis,
    stars: &[Array2<Complex64>],
    margin: usize,
) -> f64 {
    let dim = basis.dim();
    let nc = basis.n_cut();
    let interior = |rank: usize| -> bool {
        let n = basis.rank_wave(rank);
        (0..dim).all(|i| n[i].unsigned_abs() as usize + margin <= nc)
    };
    let fd = basis.fn_dim();
    let mut worst: f64 = 0.0;
    for k in 0..=dim {
        let prod = stars[dim - k].dot(&stars[k]);
        let sign = if (k * (dim - k)) % 2 == 0 { 1.0 } else { -1.0 };
        for ((r, c), v) in prod.indexed_iter() {
            if !interior(r % fd) || !interior(c % fd) {
                continue;
            }
            let want = if r == c {
                Complex64::new(sign, 0.0)
            } else {
                Complex64::ZERO
            };
            worst = worst.max((v - want).norm());
        }
    }
    worst
}

fn mask_bits(mask: u8, dim: usize) -> Vec<usize> {
    (0..dim).filter(|i| mask & (1 << i) != 0).collect()
}

/// Determinant of the sub-block g^{rows, cols} as a trig polynomial.
fn minor_det(g: &[Vec<TrigPoly>], rows: &[usize], cols: &[usize]) -> TrigPoly {
    let dim = g.len();
    match rows.len() {
        0 => TrigPoly::constant(dim, 1.0),
        1 => g[rows[0]][cols[0]].clone(),
        r => {
            let mut acc = TrigPoly::zero(dim);
            for (j, &c) in cols.iter().enumerate() {
                let sub_cols: Vec<usize> = cols
                    .iter()
                    .enumerate()
                    .filter(|(jj, _)| *jj != j)
                    .map(|(_, &cc)| cc)
                    .collect();
                let minor = minor_det(g, &rows[1..], &sub_cols);
                let term = g[rows[0]][c].mul(&minor);
                acc = if j % 2 == 0 {
                    acc.add(&term)
                } else {
                    acc.sub(&term)
                };
            }
            let _ = r;
            acc
        }
    }
}

/// Sign of the permutation (list_a ++ list_b) of 0..D.
fn perm_sign(a: &[usize], b: &[usize]) -> f64 {
    let seq: Vec<usize> = a.iter().chain(b.iter()).copied().collect();
    let mut inversions = 0;
    for i in 0..seq.len() {
        for j in (i + 1)..seq.len() {
            if seq[i] > seq[j] {
                inversions += 1;
            }
        }
    }
    if inversions % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Add sign·ĉ(n_row − n_col) into the (row_mask_pos, col_mask_pos)
/// block of a degree-to-degree matrix.
pub(crate) fn fill_convolution(
    basis: &FormBasis,
    m: &mut Array2<Complex64>,
    row_mask_pos: usize,
    col_mask_pos: usize,
    coeff: &TrigPoly,
    sign: f64,
) {
    let fd = basis.fn_dim();
    let nc = basis.n_cut() as i32;
    for col_rank in 0..fd {
        let n = basis.rank_wave(col_rank);
        for (w, c) in coeff.terms() {
            let mut target = [0i32; MAX_DIM];
            let mut ok = true;
            for i in 0..basis.dim() {
                target[i] = n[i] + w[i];
                if target[i].abs() > nc {
                    ok = false;
                    break;
                }
            }
            if !ok {
                continue;
            }
            let row_rank = basis.wave_rank(&target);
            m[(row_mask_pos * fd + row_rank, col_mask_pos * fd + col_rank)] += c * sign;
        }
    }
}
