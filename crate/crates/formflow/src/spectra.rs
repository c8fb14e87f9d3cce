//! Full eigendecomposition of degree-preserving operators.
//!
//! Each degree block is decomposed densely (LAPACK zgeev through
//! ndarray-linalg); right eigenvectors come from the solver, left
//! eigenvectors are the rows of V⁻¹, which makes the left/right system
//! bi-orthonormal by construction.  Interior complex eigenvalues are
//! the whole point here, so no iterative extremal solver is used.

use std::sync::Arc;

use ndarray::{Array1, Array2};
use ndarray_linalg::{Eig, EigVals, Inverse, OperationNorm};
use num_complex::Complex64;

use crate::basis::FormBasis;
use crate::error::{FlowError, Result};
use crate::operators::GradedOperator;

/// Condition-number threshold above which a block is flagged defective
/// (Jordan-like structure; bi-orthogonal analyses exclude it).
pub const DEFECTIVE_COND: f64 = 1e10;

#[derive(Debug, Clone)]
pub struct EigenPair {
    pub degree: usize,
    pub eigenvalue: Complex64,
    /// right eigenvector (column), unit norm
    pub right: Option<Array1<Complex64>>,
    /// left row vector w with w·H = λ·w and w·right = 1
    pub left: Option<Array1<Complex64>>,
    pub backward_error: f64,
    /// set by `mark_convergence`
    pub converged: Option<bool>,
}

impl EigenPair {
    pub fn gamma(&self) -> f64 {
        self.eigenvalue.re
    }
    pub fn energy(&self) -> f64 {
        self.eigenvalue.im
    }
}

#[derive(Debug, Clone)]
pub struct Spectrum {
    pub pairs: Vec<EigenPair>,
    pub op_norm: f64,
    /// (degree, cond estimate) for blocks flagged defective
    pub defective: Vec<(usize, f64)>,
    pub basis: Arc<FormBasis>,
}

impl Spectrum {
    pub fn degree_pairs(&self, degree: usize) -> impl Iterator<Item = &EigenPair> {
        self.pairs.iter().filter(move |p| p.degree == degree)
    }

    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    /// Pair count per degree must match block dimensions.
    pub fn complete(&self) -> bool {
        (0..=self.dim()).all(|k| self.degree_pairs(k).count() == self.basis.degree_dim(k))
    }
}

/// Decompose every degree block of a degree-preserving operator.
pub fn eigendecompose(op: &GradedOperator, want_vectors: bool) -> Result<Spectrum> {
    assert_eq!(op.shift, 0);
    let basis = op.basis().clone();
    let op_norm = op.op_norm();
    // blocks decompose one after another: LAPACK threads its own BLAS,
    // and the lax inversion path wants caller stack proportional to the
    // block, so each block runs on a dedicated wide-stack thread
    let per_degree: Vec<Result<(Vec<EigenPair>, Option<(usize, f64)>)>> = (0..=basis.dim())
        .filter(|&k| op.block(k).is_some())
        .map(|k| {
            std::thread::scope(|s| {
                std::thread::Builder::new()
                    .stack_size(1 << 30)
                    .spawn_scoped(s, || {
                        decompose_block(op.block(k).unwrap(), k, op_norm, want_vectors)
                    })
                    .expect("spawn eigensolver thread")
                    .join()
                    .expect("eigensolver thread panicked")
            })
        })
        .collect();

    let mut pairs = Vec::new();
    let mut defective = Vec::new();
    for r in per_degree {
        let (mut p, d) = r?;
        pairs.append(&mut p);
        if let Some(d) = d {
            defective.push(d);
        }
    }
    // deterministic order: degree, then attenuation rate, then frequency
    pairs.sort_by(|a, b| {
        (a.degree, a.eigenvalue.re, a.eigenvalue.im)
            .partial_cmp(&(b.degree, b.eigenvalue.re, b.eigenvalue.im))
            .unwrap()
    });
    Ok(Spectrum {
        pairs,
        op_norm,
        defective,
        basis,
    })
}

fn decompose_block(
    block: &Array2<Complex64>,
    degree: usize,
    op_norm: f64,
    want_vectors: bool,
) -> Result<(Vec<EigenPair>, Option<(usize, f64)>)> {
    let n = block.nrows();
    if n == 0 {
        return Ok((Vec::new(), None));
    }
    let mut out = Vec::with_capacity(n);
    let mut defect = None;
    if want_vectors {
        let (vals, vecs) = block.eig().map_err(|e| FlowError::EigenFailure {
            degree,
            reason: e.to_string(),
        })?;
        match vecs.inv() {
            Ok(inv) => {
                let nv = vecs.opnorm_fro().unwrap_or(f64::INFINITY);
                let ni = inv.opnorm_fro().unwrap_or(f64::INFINITY);
                let cond = nv * ni / n as f64;
                if cond > DEFECTIVE_COND {
                    defect = Some((degree, cond));
                }
                for (i, &lambda) in vals.iter().enumerate() {
                    let v = vecs.column(i).to_owned();
                    let w = inv.row(i).to_owned();
                    let resid = (block.dot(&v) - v.mapv(|c| c * lambda))
                        .iter()
                        .map(|c| c.norm_sqr())
                        .sum::<f64>()
                        .sqrt();
                    let backward_error = resid / op_norm.max(1e-300);
                    if backward_error > 1e-8 {
                        return Err(FlowError::BackwardError {
                            degree,
                            index: i,
                            err: backward_error,
                        });
                    }
                    out.push(EigenPair {
                        degree,
                        eigenvalue: lambda,
                        right: Some(v),
                        left: Some(w),
                        backward_error,
                        converged: None,
                    });
                }
            }
            Err(_) => {
                // eigenvector matrix numerically singular: defective block
                defect = Some((degree, f64::INFINITY));
                for (i, &lambda) in vals.iter().enumerate() {
                    out.push(EigenPair {
                        degree,
                        eigenvalue: lambda,
                        right: Some(vecs.column(i).to_owned()),
                        left: None,
                        backward_error: f64::NAN,
                        converged: None,
                    });
                }
            }
        }
    } else {
        let vals = block.eigvals().map_err(|e| FlowError::EigenFailure {
            degree,
            reason: e.to_string(),
        })?;
        for lambda in vals.iter() {
            out.push(EigenPair {
                degree,
                eigenvalue: *lambda,
                right: None,
                left: None,
                backward_error: 0.0,
                converged: None,
            });
        }
    }
    Ok((out, defect))
}

/// Zero-mode extraction and Q-symmetry verification.
#[derive(Debug, Clone)]
pub struct ZeroMode {
    pub degree: usize,
    pub eigenvalue: Complex64,
    /// index into Spectrum.pairs
    pub pair_index: usize,
    pub d_residual_right: f64,
    pub d_residual_left: f64,
    /// line basis only: the mode's density lives on a boundary node —
    /// a gauge/boundary coordinate, not a state of the decaying
    /// wavefunction class that defines the index on non-compact spaces
    pub boundary_artifact: bool,
    pub q_symmetric: bool,
}

#[derive(Debug, Clone)]
pub struct ZeroModeReport {
    /// N_k: Q-symmetric zero modes per degree (the counts entering the
    /// Witten index)
    pub counts: Vec<usize>,
    /// all eigenvalues below threshold, including non-Q-symmetric
    /// accidental pairs
    pub candidates: Vec<ZeroMode>,
    pub threshold: f64,
    /// no factor-10 separation between the zero cluster and the rest
    pub ambiguous: bool,
    pub gap_ratio: f64,
}

impl ZeroModeReport {
    pub fn total_q_symmetric(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn q_symmetric(&self) -> impl Iterator<Item = &ZeroMode> {
        self.candidates.iter().filter(|m| m.q_symmetric)
    }
}

/// Relative d-closedness tolerance for calling a zero mode Q-symmetric.
pub const Q_CLOSED_TOL: f64 = 1e-6;

/// Extract zero modes under the single threshold policy
/// θ = max(1e−8·‖H‖, 1e−3·|smallest nonzero λ|) and verify d-closedness.
///
/// A candidate counts toward N_k when its right eigenvector is d-closed;
/// the left residual is recorded as a diagnostic (on the line basis the
/// one-sided boundary stencil pollutes left zero modes at O(1) while the
/// right-closedness test cleanly separates the Q-symmetric states).
pub fn zero_modes(spectrum: &Spectrum, d: &GradedOperator) -> Result<ZeroModeReport> {
    let theta0 = 1e-8 * spectrum.op_norm;
    let mut mags: Vec<f64> = spectrum.pairs.iter().map(|p| p.eigenvalue.norm()).collect();
    mags.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let smallest_nonzero = mags.iter().copied().find(|&m| m >= theta0).unwrap_or(0.0);
    let threshold = theta0.max(1e-3 * smallest_nonzero);

    let candidate_max = mags
        .iter()
        .copied()
        .filter(|&m| m < threshold)
        .fold(0.0f64, f64::max);
    let rest_min = mags
        .iter()
        .copied()
        .find(|&m| m >= threshold)
        .unwrap_or(f64::INFINITY);
    let gap_ratio = if candidate_max > 0.0 {
        rest_min / candidate_max
    } else {
        f64::INFINITY
    };
    let ambiguous = candidate_max > 0.0 && gap_ratio < 10.0;

    let basis = &spectrum.basis;
    let mut counts = vec![0usize; basis.dim() + 1];
    let mut candidates = Vec::new();
    let d_norm = d.op_norm().max(1e-300);
    for (idx, pair) in spectrum.pairs.iter().enumerate() {
        if pair.eigenvalue.norm() >= threshold {
            continue;
        }
        let right = pair.right.as_ref().ok_or_else(|| FlowError::EigenFailure {
            degree: pair.degree,
            reason: "zero-mode extraction needs eigenvectors".into(),
        })?;
        let d_residual_right = match d.block(pair.degree) {
            Some(db) => {
                let dv = db.dot(right);
                dv.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
                    / (d_norm * right.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt())
            }
            None => 0.0,
        };
        let d_residual_left = match (pair.left.as_ref(), pair.degree.checked_sub(1)) {
            (Some(w), Some(km1)) => match d.block(km1) {
                Some(db) => {
                    let wd = w.dot(db);
                    wd.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
                        / (d_norm * w.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt())
                }
                None => 0.0,
            },
            _ => 0.0,
        };
        let boundary_artifact = if basis.is_torus() {
            false
        } else {
            let n = basis.fn_dim();
            let psi = |j: usize| (right[j] * basis.line_weight(j)).norm();
            let mx = (0..n).map(psi).fold(0.0f64, f64::max).max(1e-300);
            psi(0) > 1e-6 * mx || psi(n - 1) > 1e-6 * mx
        };
        let q_symmetric = d_residual_right < Q_CLOSED_TOL && !boundary_artifact;
        if q_symmetric {
            counts[pair.degree] += 1;
        }
        candidates.push(ZeroMode {
            degree: pair.degree,
            eigenvalue: pair.eigenvalue,
            pair_index: idx,
            d_residual_right,
            d_residual_left,
            boundary_artifact,
            q_symmetric,
        });
    }
    Ok(ZeroModeReport {
        counts,
        candidates,
        threshold,
        ambiguous,
        gap_ratio,
    })
}

/// Greedy conjugation-closure residual: every eigenvalue must match
/// conj(λ) of some eigenvalue in the same degree.
pub fn conjugation_pairing(spectrum: &Spectrum) -> f64 {
    let mut worst: f64 = 0.0;
    for k in 0..=spectrum.dim() {
        let vals: Vec<Complex64> = spectrum.degree_pairs(k).map(|p| p.eigenvalue).collect();
        for v in &vals {
            let target = v.conj();
            let best = vals
                .iter()
                .map(|w| (w - target).norm())
                .fold(f64::INFINITY, f64::min);
            worst = worst.max(best);
        }
    }
    worst
}

/// Compare against a refined-resolution spectrum: an eigenvalue is
/// converged when its nearest partner in the refined spectrum (same
/// degree) is within `tol`.
pub fn mark_convergence(spectrum: &mut Spectrum, refined: &Spectrum, tol: f64) {
    for k in 0..=spectrum.dim() {
        let fine: Vec<Complex64> = refined.degree_pairs(k).map(|p| p.eigenvalue).collect();
        let indices: Vec<usize> = spectrum
            .pairs
            .iter()
            .enumerate()
            .filter(|(_, p)| p.degree == k)
            .map(|(i, _)| i)
            .collect();
        for i in indices {
            let v = spectrum.pairs[i].eigenvalue;
            let best = fine
                .iter()
                .map(|w| (w - v).norm())
                .fold(f64::INFINITY, f64::min);
            spectrum.pairs[i].converged = Some(best < tol);
        }
    }
}

/// Max nearest-neighbor eigenvalue motion between two resolutions,
/// restricted to the `take` smallest-|λ| eigenvalues per degree.
pub fn refinement_delta(coarse: &Spectrum, fine: &Spectrum, take: usize) -> f64 {
    let mut worst: f64 = 0.0;
    for k in 0..=coarse.dim() {
        let mut vals: Vec<Complex64> = coarse.degree_pairs(k).map(|p| p.eigenvalue).collect();
        vals.sort_by(|a, b| a.norm().partial_cmp(&b.norm()).unwrap());
        let fine_vals: Vec<Complex64> = fine.degree_pairs(k).map(|p| p.eigenvalue).collect();
        for v in vals.iter().take(take) {
            let best = fine_vals
                .iter()
                .map(|w| (w - v).norm())
                .fold(f64::INFINITY, f64::min);
            worst = worst.max(best);
        }
    }
    worst
}
