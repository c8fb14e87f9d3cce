//! Supersymmetry and topology diagnostics built on a spectrum: Witten
//! index, supertrace and partition traces, boson–fermion pairing, sharp
//! and counting determinants, ground-state selection and spectrum
//! classification, thermodynamic-equilibrium state extraction, and
//! temperature sweeps.
//!
//! Every notion of "zero" inherits from the zero-mode threshold policy
//! in `spectra`; no diagnostic defines its own.

use std::fmt;

use num_complex::Complex64;

use crate::basis::{integral, FormBasis, KFormVector};
use crate::error::{FlowError, Result};
use crate::spectra::{Spectrum, ZeroModeReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Classification {
    UnbrokenTe,
    BrokenZeroRateComplex,
    BrokenNegativeReal,
    BrokenNegativeComplex,
    Ambiguous,
}

impl fmt::Display for Classification {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Classification::UnbrokenTe => "UNBROKEN_TE",
            Classification::BrokenZeroRateComplex => "BROKEN_ZERO_RATE_COMPLEX",
            Classification::BrokenNegativeReal => "BROKEN_NEGATIVE_REAL",
            Classification::BrokenNegativeComplex => "BROKEN_NEGATIVE_COMPLEX",
            Classification::Ambiguous => "AMBIGUOUS",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone)]
pub struct SusyReport {
    pub witten_index: i64,
    pub zero_mode_counts: Vec<usize>,
    pub gamma_g: f64,
    pub e_g: f64,
    pub ground_degree: usize,
    pub classification: Classification,
    pub eta_t_broken: bool,
    pub bf_pairing_residual: f64,
    pub bf_unmatched: usize,
    pub supertrace_drift: f64,
    pub supertrace_values: Vec<Complex64>,
    pub threshold: f64,
    pub ambiguous_gap: bool,
}

/// W = Σ_k (−1)^k N_k.  Errors when the zero-mode gap was ambiguous.
pub fn witten_index(zm: &ZeroModeReport) -> Result<i64> {
    if zm.ambiguous {
        let c = zm
            .candidates
            .iter()
            .map(|m| m.eigenvalue.norm())
            .fold(0.0f64, f64::max);
        return Err(FlowError::AmbiguousGap {
            candidate: c,
            rest: c * zm.gap_ratio,
        });
    }
    Ok(zm
        .counts
        .iter()
        .enumerate()
        .map(|(k, &n)| if k % 2 == 0 { n as i64 } else { -(n as i64) })
        .sum())
}

/// Tr (−1)^F e^{−tH} from the eigenvalues.
pub fn supertrace(spectrum: &Spectrum, t: f64) -> Complex64 {
    assert!(t > 0.0);
    let mut s = Complex64::ZERO;
    for p in &spectrum.pairs {
        let sign = if p.degree % 2 == 0 { 1.0 } else { -1.0 };
        s += (p.eigenvalue * (-t)).exp() * sign;
    }
    s
}

/// Supertrace over a t-grid; drift is the largest deviation from the
/// first value.
pub fn supertrace_series(spectrum: &Spectrum, ts: &[f64]) -> (Vec<Complex64>, f64) {
    let values: Vec<Complex64> = ts.iter().map(|&t| supertrace(spectrum, t)).collect();
    let drift = values
        .iter()
        .map(|v| (v - values[0]).norm())
        .fold(0.0, f64::max);
    (values, drift)
}

/// Z(t) = Tr e^{−tH} (all degrees), evaluated with exponent scaling so
/// growing modes (Γ < 0) cannot overflow.  Returns (mantissa, exponent):
/// Z = mantissa · e^{exponent}.
pub fn partition_trace_scaled(spectrum: &Spectrum, t: f64) -> (Complex64, f64) {
    assert!(t > 0.0);
    let m = spectrum
        .pairs
        .iter()
        .map(|p| -t * p.gamma())
        .fold(f64::NEG_INFINITY, f64::max);
    let mut s = Complex64::ZERO;
    for p in &spectrum.pairs {
        let w = -t * p.gamma() - m;
        let phase = Complex64::new(0.0, -t * p.energy()).exp();
        s += phase * w.exp();
    }
    (s, m)
}

pub fn partition_trace(spectrum: &Spectrum, t: f64) -> Complex64 {
    let (s, m) = partition_trace_scaled(spectrum, t);
    s * m.exp()
}

/// ln |Z(t)|, stable for growing partition functions.
pub fn ln_partition(spectrum: &Spectrum, t: f64) -> f64 {
    let (s, m) = partition_trace_scaled(spectrum, t);
    m + s.norm().ln()
}

/// Per-degree flat traces Tr^♭_k e^{−tH}.
pub fn flat_traces(spectrum: &Spectrum, t: f64) -> Vec<Complex64> {
    let mut out = vec![Complex64::ZERO; spectrum.dim() + 1];
    for p in &spectrum.pairs {
        out[p.degree] += (p.eigenvalue * (-t)).exp();
    }
    out
}

#[derive(Debug, Clone)]
pub struct PairingReport {
    /// worst distance among matched pairs
    pub max_matched_distance: f64,
    /// eigenvalues (degree, λ) with no partner within tolerance
    pub unmatched: Vec<(usize, Complex64)>,
    pub tolerance: f64,
    pub matched_pairs: usize,
}

/// Match every above-threshold eigenvalue of degree k with an equal one
/// in degree k+1 (greedy nearest-neighbor, ascending degrees, each
/// eigenvalue used once).  With H = [d, j] every non-Q-symmetric state
/// belongs to exactly one adjacent-degree pair, so a clean spectrum
/// leaves nothing unmatched.
pub fn bf_pairing(spectrum: &Spectrum, zm: &ZeroModeReport) -> PairingReport {
    let tolerance = 1e-6 * spectrum.op_norm;
    let dim = spectrum.dim();
    let mut table: Vec<Vec<(Complex64, bool)>> = (0..=dim)
        .map(|k| {
            let mut v: Vec<(Complex64, bool)> = spectrum
                .degree_pairs(k)
                .filter(|p| p.eigenvalue.norm() >= zm.threshold)
                .map(|p| (p.eigenvalue, false))
                .collect();
            v.sort_by(|a, b| (a.0.re, a.0.im).partial_cmp(&(b.0.re, b.0.im)).unwrap());
            v
        })
        .collect();

    let mut max_matched: f64 = 0.0;
    let mut matched_pairs = 0;
    for k in 0..dim {
        let (lo, hi) = table.split_at_mut(k + 1);
        let this = &mut lo[k];
        let next = &mut hi[0];
        for (lam, used) in this.iter_mut() {
            if *used {
                continue;
            }
            let mut best: Option<(usize, f64)> = None;
            for (j, (mu, mu_used)) in next.iter().enumerate() {
                if *mu_used {
                    continue;
                }
                let dist = (*lam - *mu).norm();
                if best.map_or(true, |(_, b)| dist < b) {
                    best = Some((j, dist));
                }
            }
            if let Some((j, dist)) = best {
                if dist <= tolerance {
                    *used = true;
                    next[j].1 = true;
                    max_matched = max_matched.max(dist);
                    matched_pairs += 1;
                }
            }
        }
    }
    let mut unmatched = Vec::new();
    for (k, row) in table.iter().enumerate() {
        for (lam, used) in row {
            if !used {
                unmatched.push((k, *lam));
            }
        }
    }
    PairingReport {
        max_matched_distance: max_matched,
        unmatched,
        tolerance,
        matched_pairs,
    }
}

#[derive(Debug, Clone)]
pub struct DeterminantReport {
    pub sharp: Complex64,
    pub counting: Complex64,
    /// factors that survived neither BF cancellation nor zero-mode
    /// bookkeeping (zero for clean spectra)
    pub sharp_leftovers: usize,
}

/// Sharp and counting determinants of the finite-time evolution
/// operator at spectral parameter z and time t.
///
/// Counting: Π (1 − z e^{−tλ})^{−1} over every eigenvalue.  Sharp:
/// Π (1 − z e^{−tλ})^{(−1)^{F+1}}, evaluated by cancelling BF-paired
/// factors analytically first, so only Q-symmetric zero modes (and any
/// reported leftovers) contribute.  Boundary-artifact coordinates of
/// the line basis enter neither product.
pub fn sharp_counting_determinants(
    spectrum: &Spectrum,
    zm: &ZeroModeReport,
    z: Complex64,
    t: f64,
) -> Result<DeterminantReport> {
    assert!(t > 0.0);
    let artifact_idx: Vec<usize> = zm
        .candidates
        .iter()
        .filter(|c| c.boundary_artifact)
        .map(|c| c.pair_index)
        .collect();
    let q_idx: Vec<usize> = zm
        .candidates
        .iter()
        .filter(|c| c.q_symmetric)
        .map(|c| c.pair_index)
        .collect();

    // counting determinant over all physical eigenvalues
    let mut log_counting = Complex64::ZERO;
    for (i, p) in spectrum.pairs.iter().enumerate() {
        if artifact_idx.contains(&i) {
            continue;
        }
        let factor = Complex64::new(1.0, 0.0) - z * (p.eigenvalue * (-t)).exp();
        if factor.norm() < 1e-6 {
            return Err(FlowError::PoleProximity {
                dist: factor.norm(),
                re: p.eigenvalue.re,
                im: p.eigenvalue.im,
            });
        }
        log_counting -= factor.ln();
    }

    // sharp determinant: cancel BF pairs, keep Q-symmetric zero modes
    let dim = spectrum.dim();
    let mut remaining: Vec<Vec<(usize, Complex64, bool)>> = vec![Vec::new(); dim + 1];
    for (i, p) in spectrum.pairs.iter().enumerate() {
        if artifact_idx.contains(&i) || q_idx.contains(&i) {
            continue;
        }
        remaining[p.degree].push((i, p.eigenvalue, false));
    }
    for row in remaining.iter_mut() {
        row.sort_by(|a, b| (a.1.re, a.1.im).partial_cmp(&(b.1.re, b.1.im)).unwrap());
    }
    let pair_tol = (1e-6 * spectrum.op_norm).max(10.0 * zm.threshold);
    for k in 0..dim {
        let (lo, hi) = remaining.split_at_mut(k + 1);
        let this = &mut lo[k];
        let next = &mut hi[0];
        for (_, lam, used) in this.iter_mut() {
            if *used {
                continue;
            }
            let mut best: Option<(usize, f64)> = None;
            for (j, (_, mu, mu_used)) in next.iter().enumerate() {
                if *mu_used {
                    continue;
                }
                let dist = (*lam - *mu).norm();
                if best.map_or(true, |(_, b)| dist < b) {
                    best = Some((j, dist));
                }
            }
            if let Some((j, dist)) = best {
                if dist <= pair_tol {
                    *used = true;
                    next[j].2 = true;
                }
            }
        }
    }
    let mut log_sharp = Complex64::ZERO;
    let mut leftovers = 0;
    for &i in &q_idx {
        let p = &spectrum.pairs[i];
        let factor = Complex64::new(1.0, 0.0) - z * (p.eigenvalue * (-t)).exp();
        let sign = if (p.degree + 1) % 2 == 0 { 1.0 } else { -1.0 };
        log_sharp += factor.ln() * sign;
    }
    for row in &remaining {
        for &(i, _, used) in row {
            if used {
                continue;
            }
            leftovers += 1;
            let p = &spectrum.pairs[i];
            let factor = Complex64::new(1.0, 0.0) - z * (p.eigenvalue * (-t)).exp();
            if factor.norm() < 1e-6 {
                return Err(FlowError::PoleProximity {
                    dist: factor.norm(),
                    re: p.eigenvalue.re,
                    im: p.eigenvalue.im,
                });
            }
            let sign = if (p.degree + 1) % 2 == 0 { 1.0 } else { -1.0 };
            log_sharp += factor.ln() * sign;
        }
    }
    Ok(DeterminantReport {
        sharp: log_sharp.exp(),
        counting: log_counting.exp(),
        sharp_leftovers: leftovers,
    })
}

/// Minimal attenuation rate; ties within 1e−8·‖H‖ resolved toward the
/// lowest (signed) frequency.  Returns (index into pairs, conjugate
/// partner index when the ground state is one of an RP pair).
pub fn select_ground_state(spectrum: &Spectrum) -> (usize, Option<usize>) {
    let tol = 1e-8 * spectrum.op_norm;
    let mut best = 0usize;
    for (i, p) in spectrum.pairs.iter().enumerate() {
        let b = &spectrum.pairs[best];
        if p.gamma() < b.gamma() - tol
            || ((p.gamma() - b.gamma()).abs() <= tol && p.energy() < b.energy())
        {
            best = i;
        }
    }
    let g = &spectrum.pairs[best];
    let partner = if g.energy().abs() > tol {
        let target = g.eigenvalue.conj();
        spectrum
            .pairs
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != best)
            .min_by(|(_, a), (_, b)| {
                (a.eigenvalue - target)
                    .norm()
                    .partial_cmp(&(b.eigenvalue - target).norm())
                    .unwrap()
            })
            .map(|(i, _)| i)
    } else {
        None
    };
    (best, partner)
}

/// Thermodynamic-equilibrium state: the degree-D Q-symmetric zero mode
/// with nonzero phase-space integral, normalized to ∫ψ = 1.
#[derive(Debug, Clone)]
pub struct TeState {
    pub form: KFormVector,
    pub min_density: f64,
    pub max_density: f64,
    pub eigenvalue: Complex64,
}

pub fn te_state_density(
    spectrum: &Spectrum,
    zm: &ZeroModeReport,
    basis: &FormBasis,
) -> Result<TeState> {
    let dim = basis.dim();
    for c in zm.q_symmetric() {
        if c.degree != dim {
            continue;
        }
        let v = spectrum.pairs[c.pair_index]
            .right
            .as_ref()
            .ok_or_else(|| FlowError::NoTeState("spectrum lacks eigenvectors".into()))?;
        let form = KFormVector {
            degree: dim,
            coeffs: v.clone(),
        };
        let total = integral(basis, &form)?;
        let scale = v.iter().map(|c| c.norm()).fold(0.0f64, f64::max);
        if total.norm() < 1e-8 * scale {
            continue;
        }
        let normalized = KFormVector {
            degree: dim,
            coeffs: form.coeffs.mapv(|c| c / total),
        };
        // sample the density for the nonnegativity check
        let samples_per_dim: usize = if dim == 3 { 24 } else { 64 };
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        if basis.is_torus() {
            let total_pts = samples_per_dim.pow(dim as u32);
            for flat in 0..total_pts {
                let mut idx = flat;
                let mut x = [0.0; 3];
                for xi in x.iter_mut().take(dim) {
                    *xi = std::f64::consts::TAU * (idx % samples_per_dim) as f64
                        / samples_per_dim as f64;
                    idx /= samples_per_dim;
                }
                let v = crate::basis::eval_density(basis, &normalized, &x[..dim])?;
                lo = lo.min(v);
                hi = hi.max(v);
            }
        } else {
            for j in 0..basis.fn_dim() {
                let v = crate::basis::eval_density(basis, &normalized, &[basis.grid_node(j)])?;
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
        return Ok(TeState {
            form: normalized,
            min_density: lo,
            max_density: hi,
            eigenvalue: c.eigenvalue,
        });
    }
    Err(FlowError::NoTeState(
        "no degree-D zero mode with nonzero integral (truncation failure or non-physical scenario)"
            .into(),
    ))
}

/// Pure function of (Γ_g, E_g, zero-mode data) per the spectrum
/// taxonomy; AMBIGUOUS when a magnitude straddles its zero threshold
/// within a factor of 10, or when the zero-mode gap itself was flagged.
pub fn classify(
    spectrum: &Spectrum,
    zm: &ZeroModeReport,
    te_exists: bool,
) -> (Classification, bool) {
    let (gi, _) = select_ground_state(spectrum);
    let g = &spectrum.pairs[gi];
    let theta = zm.threshold;
    let gamma = g.gamma();
    let energy = g.energy();
    let straddle = |v: f64| v.abs() >= theta && v.abs() < 10.0 * theta;
    let eta_t_broken = energy.abs() >= theta;
    if zm.ambiguous || straddle(gamma) || straddle(energy) {
        return (Classification::Ambiguous, eta_t_broken);
    }
    let gamma_zero = gamma.abs() < theta;
    let energy_zero = energy.abs() < theta;
    let class = match (gamma_zero, energy_zero) {
        (true, true) => {
            if te_exists {
                Classification::UnbrokenTe
            } else {
                Classification::Ambiguous
            }
        }
        (true, false) => Classification::BrokenZeroRateComplex,
        (false, true) => Classification::BrokenNegativeReal,
        (false, false) => Classification::BrokenNegativeComplex,
    };
    (class, eta_t_broken)
}

/// Distance from Γ_g to the next distinct attenuation rate.
pub fn gamma_gap(spectrum: &Spectrum) -> f64 {
    let (gi, _) = select_ground_state(spectrum);
    let gamma_g = spectrum.pairs[gi].gamma();
    let tol = (1e-8 * spectrum.op_norm).max(1e-300);
    spectrum
        .pairs
        .iter()
        .map(|p| (p.gamma() - gamma_g).abs())
        .filter(|&d| d > tol)
        .fold(f64::INFINITY, f64::min)
}

/// Least-squares slope of ln |Z(t)| over `n` points in [t_lo, t_hi].
pub fn lnz_slope(spectrum: &Spectrum, t_lo: f64, t_hi: f64, n: usize) -> f64 {
    let ts: Vec<f64> = (0..n)
        .map(|i| t_lo + (t_hi - t_lo) * i as f64 / (n - 1) as f64)
        .collect();
    let ys: Vec<f64> = ts.iter().map(|&t| ln_partition(spectrum, t)).collect();
    let tm = ts.iter().sum::<f64>() / n as f64;
    let ym = ys.iter().sum::<f64>() / n as f64;
    let num: f64 = ts
        .iter()
        .zip(ys.iter())
        .map(|(&t, &y)| (t - tm) * (y - ym))
        .sum();
    let den: f64 = ts.iter().map(|&t| (t - tm) * (t - tm)).sum();
    num / den
}

/// Assemble the full report for one spectrum.
pub fn analyze(
    spectrum: &Spectrum,
    zm: &ZeroModeReport,
    basis: &FormBasis,
    t_grid: &[f64],
) -> Result<SusyReport> {
    let witten = witten_index(zm).unwrap_or_else(|_| {
        // ambiguous gap: report the raw alternating sum anyway
        zm.counts
            .iter()
            .enumerate()
            .map(|(k, &n)| if k % 2 == 0 { n as i64 } else { -(n as i64) })
            .sum()
    });
    let (values, drift) = supertrace_series(spectrum, t_grid);
    let pairing = bf_pairing(spectrum, zm);
    let te = te_state_density(spectrum, zm, basis).ok();
    let (class, eta_t_broken) = classify(spectrum, zm, te.is_some());
    let (gi, _) = select_ground_state(spectrum);
    let g = &spectrum.pairs[gi];
    Ok(SusyReport {
        witten_index: witten,
        zero_mode_counts: zm.counts.clone(),
        gamma_g: g.gamma(),
        e_g: g.energy(),
        ground_degree: g.degree,
        classification: class,
        eta_t_broken,
        bf_pairing_residual: pairing.max_matched_distance,
        bf_unmatched: pairing.unmatched.len(),
        supertrace_drift: drift,
        supertrace_values: values,
        threshold: zm.threshold,
        ambiguous_gap: zm.ambiguous,
    })
}

/// One row of a temperature sweep.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub temperature: f64,
    pub report: SusyReport,
    pub converged: bool,
}

#[derive(Debug, Clone)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
    /// smallest sampled T above which every converged entry is
    /// UNBROKEN_TE (None when the trend never settles)
    pub restoration_t: Option<f64>,
}

/// Evaluate a report per temperature (monotone list) and verify the
/// restoration trend.  Non-converged entries are excluded from the
/// trend test.
pub fn temperature_sweep<F>(temperatures: &[f64], mut eval: F) -> Result<SweepTable>
where
    F: FnMut(f64) -> Result<(SusyReport, bool)>,
{
    if temperatures.windows(2).any(|w| w[0] >= w[1]) {
        return Err(FlowError::InvalidParameter {
            name: "t_list".into(),
            reason: "temperatures must be strictly increasing".into(),
        });
    }
    if temperatures.iter().any(|&t| t <= 0.0) {
        return Err(FlowError::InvalidParameter {
            name: "t_list".into(),
            reason: "temperatures must be positive".into(),
        });
    }
    let mut rows = Vec::new();
    for &t in temperatures {
        let (report, converged) = eval(t)?;
        rows.push(SweepRow {
            temperature: t,
            report,
            converged,
        });
    }
    let mut restoration_t = None;
    for row in rows.iter().rev() {
        if !row.converged {
            continue;
        }
        if row.report.classification == Classification::UnbrokenTe {
            restoration_t = Some(row.temperature);
        } else {
            break;
        }
    }
    Ok(SweepTable {
        rows,
        restoration_t,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::Manifold;
    use crate::fields::{TrigPoly, VectorField, Vielbein};
    use crate::operators::OperatorSet;
    use crate::spectra::{eigendecompose, zero_modes, EigenPair};
    use approx::assert_abs_diff_eq;
    use std::sync::Arc;

    fn torus(dim: usize, n_cut: usize) -> Arc<FormBasis> {
        Arc::new(FormBasis::make(Manifold::Torus { dim, n_cut }).unwrap())
    }

    /// Synthetic spectrum without eigenvectors.
    fn synthetic(basis: &Arc<FormBasis>, per_degree: Vec<Vec<Complex64>>) -> Spectrum {
        let mut pairs = Vec::new();
        for (k, vals) in per_degree.iter().enumerate() {
            for &v in vals {
                pairs.push(EigenPair {
                    degree: k,
                    eigenvalue: v,
                    right: None,
                    left: None,
                    backward_error: 0.0,
                    converged: None,
                });
            }
        }
        Spectrum {
            pairs,
            op_norm: 10.0,
            defective: Vec::new(),
            basis: basis.clone(),
        }
    }

    fn empty_zm(dim: usize, threshold: f64) -> ZeroModeReport {
        ZeroModeReport {
            counts: vec![0; dim + 1],
            candidates: Vec::new(),
            threshold,
            ambiguous: false,
            gap_ratio: f64::INFINITY,
        }
    }

    #[test]
    fn supertrace_of_exact_bf_pairs_is_constant() {
        // λ duplicated in adjacent degrees cancels pairwise; the
        // supertrace counts the unpaired zero modes, t-independently
        let b = torus(1, 2);
        let vals = vec![
            vec![
                Complex64::new(0.0, 0.0),
                Complex64::new(1.3, 0.0),
                Complex64::new(2.0, 0.7),
                Complex64::new(2.0, -0.7),
            ],
            vec![
                Complex64::new(1.3, 0.0),
                Complex64::new(2.0, 0.7),
                Complex64::new(2.0, -0.7),
            ],
        ];
        let spec = synthetic(&b, vals);
        for t in [0.5, 1.0, 2.0, 4.0] {
            let s = supertrace(&spec, t);
            assert_abs_diff_eq!(s.re, 1.0, epsilon = 1e-14);
            assert_abs_diff_eq!(s.im, 0.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn flat_t2_supertrace_vanishes() {
        let b = torus(2, 3);
        let set = OperatorSet::assemble_torus(
            b.clone(),
            &VectorField::zero(2),
            &Vielbein::identity(2),
            1.0,
            false,
        )
        .unwrap();
        let spec = eigendecompose(&set.h_strat, true).unwrap();
        let zm = zero_modes(&spec, &set.d).unwrap();
        assert_eq!(witten_index(&zm).unwrap(), 0);
        let (_, drift) = supertrace_series(&spec, &[0.5, 1.0, 2.0, 4.0]);
        assert!(drift < 1e-6);
        for t in [0.5, 1.0, 2.0, 4.0] {
            assert!(supertrace(&spec, t).norm() < 1e-6);
        }
    }

    #[test]
    fn langevin_supertrace_drift_small() {
        let b = torus(1, 8);
        let f = VectorField::new(vec![TrigPoly::real_sin(1, 0, 1, 1.0)]);
        let set = OperatorSet::assemble_torus(b.clone(), &f, &Vielbein::identity(1), 0.4, false)
            .unwrap();
        let spec = eigendecompose(&set.h_strat, true).unwrap();
        let (_, drift) = supertrace_series(&spec, &[0.5, 1.0, 2.0, 4.0]);
        assert!(drift < 1e-4, "drift {drift}");
    }

    #[test]
    fn partition_trace_flat_t1() {
        // degrees 0 and 1 are identical blocks: Z = 2 Σ_n e^{−t n²}
        let b = torus(1, 4);
        let set = OperatorSet::assemble_torus(
            b.clone(),
            &VectorField::zero(1),
            &Vielbein::identity(1),
            1.0,
            false,
        )
        .unwrap();
        let spec = eigendecompose(&set.h_strat, false).unwrap();
        let z = partition_trace(&spec, 1.0);
        let want: f64 = (-4i32..=4).map(|n| (-((n * n) as f64)).exp()).sum::<f64>() * 2.0;
        assert_abs_diff_eq!(z.re, want, epsilon = 1e-10);
        // large t: zero modes dominate, Z → total zero-mode count
        let z_inf = partition_trace(&spec, 40.0);
        assert_abs_diff_eq!(z_inf.re, 2.0, epsilon = 1e-12);
        // per-degree flat traces sum to Z
        let ft = flat_traces(&spec, 1.0);
        assert_abs_diff_eq!((ft[0] + ft[1]).re, want, epsilon = 1e-10);
    }

    #[test]
    fn bf_pairing_flat_and_negative_control() {
        let b = torus(2, 3);
        let set = OperatorSet::assemble_torus(
            b.clone(),
            &VectorField::zero(2),
            &Vielbein::identity(2),
            1.0,
            false,
        )
        .unwrap();
        let spec = eigendecompose(&set.h_strat, true).unwrap();
        let zm = zero_modes(&spec, &set.d).unwrap();
        let rep = bf_pairing(&spec, &zm);
        assert_eq!(rep.unmatched.len(), 0);
        assert!(rep.max_matched_distance < 1e-6 * spec.op_norm);

        // inject an unpaired nonzero eigenvalue: detected as 1 unmatched
        let mut spoiled = spec.clone();
        spoiled.pairs.push(EigenPair {
            degree: 1,
            eigenvalue: Complex64::new(0.7777, 0.0),
            right: None,
            left: None,
            backward_error: 0.0,
            converged: None,
        });
        let rep = bf_pairing(&spoiled, &zm);
        assert_eq!(rep.unmatched.len(), 1);
        assert_eq!(rep.unmatched[0].0, 1);
    }

    #[test]
    fn counting_determinant_two_eigenvalues_by_hand() {
        let b = torus(1, 1);
        let spec = synthetic(
            &b,
            vec![
                vec![Complex64::new(0.4, 0.0)],
                vec![Complex64::new(1.1, 0.0)],
            ],
        );
        let zm = empty_zm(1, 1e-7);
        let z = Complex64::new(0.5, 0.0);
        let rep = sharp_counting_determinants(&spec, &zm, z, 1.0).unwrap();
        let want = ((1.0 - 0.5 * (-0.4f64).exp()) * (1.0 - 0.5 * (-1.1f64).exp())).recip();
        assert_abs_diff_eq!(rep.counting.re, want, epsilon = 1e-12);
        assert_abs_diff_eq!(rep.counting.im, 0.0, epsilon = 1e-14);
    }

    #[test]
    fn sharp_determinant_trivializes_on_torus() {
        // W = 0: sharp det = (1−z)^0 = 1
        let b = torus(1, 8);
        let f = VectorField::new(vec![TrigPoly::real_sin(1, 0, 1, 1.0)]);
        let set = OperatorSet::assemble_torus(b.clone(), &f, &Vielbein::identity(1), 0.4, false)
            .unwrap();
        let spec = eigendecompose(&set.h_strat, true).unwrap();
        let zm = zero_modes(&spec, &set.d).unwrap();
        for zv in [0.25, 0.5, 0.75] {
            let rep =
                sharp_counting_determinants(&spec, &zm, Complex64::new(zv, 0.0), 1.0).unwrap();
            assert!(
                (rep.sharp - Complex64::new(1.0, 0.0)).norm() < 1e-6,
                "z = {zv}: sharp = {}",
                rep.sharp
            );
            assert_eq!(rep.sharp_leftovers, 0);
        }
    }

    #[test]
    fn pole_proximity_is_an_error() {
        let b = torus(1, 1);
        let spec = synthetic(&b, vec![vec![Complex64::new(0.0, 0.0)], vec![]]);
        let zm = empty_zm(1, 1e-12);
        // z = 1 and λ = 0: the factor 1 − z e^{0} vanishes
        let r = sharp_counting_determinants(&spec, &zm, Complex64::new(1.0, 0.0), 1.0);
        assert!(matches!(r, Err(FlowError::PoleProximity { .. })));
    }

    #[test]
    fn ground_state_selection_rules() {
        let b = torus(1, 1);
        // conjugate pair at minimal Γ: E < 0 member wins, partner found
        let spec = synthetic(
            &b,
            vec![
                vec![
                    Complex64::new(-0.5, 0.8),
                    Complex64::new(-0.5, -0.8),
                    Complex64::new(0.0, 0.0),
                ],
                vec![Complex64::new(0.3, 0.0)],
            ],
        );
        let (gi, partner) = select_ground_state(&spec);
        assert_eq!(spec.pairs[gi].eigenvalue, Complex64::new(-0.5, -0.8));
        let p = partner.unwrap();
        assert_eq!(spec.pairs[p].eigenvalue, Complex64::new(-0.5, 0.8));

        // negative real eigenvalue selected over zero
        let spec = synthetic(
            &b,
            vec![
                vec![Complex64::new(-0.2, 0.0), Complex64::new(0.0, 0.0)],
                vec![],
            ],
        );
        let (gi, partner) = select_ground_state(&spec);
        assert_eq!(spec.pairs[gi].eigenvalue, Complex64::new(-0.2, 0.0));
        assert!(partner.is_none());
    }

    #[test]
    fn classify_langevin_and_flat() {
        for (f, temp) in [
            (VectorField::new(vec![TrigPoly::real_sin(1, 0, 1, 1.0)]), 0.4),
            (VectorField::zero(1), 1.0),
        ] {
            let b = torus(1, 10);
            let set =
                OperatorSet::assemble_torus(b.clone(), &f, &Vielbein::identity(1), temp, false)
                    .unwrap();
            let spec = eigendecompose(&set.h_strat, true).unwrap();
            let zm = zero_modes(&spec, &set.d).unwrap();
            let te = te_state_density(&spec, &zm, &b).unwrap();
            assert!(te.min_density > -1e-8 * te.max_density);
            let (class, eta) = classify(&spec, &zm, true);
            assert_eq!(class, Classification::UnbrokenTe);
            assert!(!eta);
        }
    }

    #[test]
    fn classify_synthetic_broken_spectra() {
        let b = torus(1, 1);
        let zm = empty_zm(1, 1e-7);
        let zero = Complex64::new(0.0, 0.0);
        // Γ_g < 0 real
        let spec = synthetic(&b, vec![vec![zero, Complex64::new(-0.4, 0.0)], vec![zero]]);
        let (class, eta) = classify(&spec, &zm, true);
        assert_eq!(class, Classification::BrokenNegativeReal);
        assert!(!eta);
        // Γ_g < 0 complex pair
        let spec = synthetic(
            &b,
            vec![
                vec![zero, Complex64::new(-0.4, 0.9), Complex64::new(-0.4, -0.9)],
                vec![zero],
            ],
        );
        let (class, eta) = classify(&spec, &zm, true);
        assert_eq!(class, Classification::BrokenNegativeComplex);
        assert!(eta);
        // Γ_g = 0, E_g ≠ 0
        let spec = synthetic(
            &b,
            vec![
                vec![zero, Complex64::new(0.0, 0.9), Complex64::new(0.0, -0.9)],
                vec![zero],
            ],
        );
        let (class, eta) = classify(&spec, &zm, true);
        assert_eq!(class, Classification::BrokenZeroRateComplex);
        assert!(eta);
    }

    #[test]
    fn te_density_uniform_for_pure_diffusion() {
        let b = torus(2, 3);
        let set = OperatorSet::assemble_torus(
            b.clone(),
            &VectorField::zero(2),
            &Vielbein::identity(2),
            1.0,
            false,
        )
        .unwrap();
        let spec = eigendecompose(&set.h_strat, true).unwrap();
        let zm = zero_modes(&spec, &set.d).unwrap();
        let te = te_state_density(&spec, &zm, &b).unwrap();
        let want = 1.0 / (std::f64::consts::TAU * std::f64::consts::TAU);
        for p in [[0.0, 0.0], [1.0, 2.0], [4.4, 5.5]] {
            let v = crate::basis::eval_density(&b, &te.form, &p).unwrap();
            assert_abs_diff_eq!(v, want, epsilon = 1e-12);
        }
    }

    #[test]
    fn lnz_slope_matches_growth_rate() {
        let b = torus(1, 1);
        // ground pair at Γ = −0.3 (two-fold), everything else decays
        let spec = synthetic(
            &b,
            vec![
                vec![Complex64::new(-0.3, 0.0), Complex64::new(1.0, 0.0)],
                vec![Complex64::new(-0.3, 0.0), Complex64::new(2.0, 0.0)],
            ],
        );
        let gap = gamma_gap(&spec);
        assert_abs_diff_eq!(gap, 1.3, epsilon = 1e-12);
        let slope = lnz_slope(&spec, 5.0 / gap, 20.0 / gap, 9);
        assert_abs_diff_eq!(slope, 0.3, epsilon = 1e-3);
    }

    #[test]
    fn sweep_trend_detection() {
        let b = torus(1, 1);
        let zero = Complex64::new(0.0, 0.0);
        let table = temperature_sweep(&[0.2, 0.5, 1.0, 2.0], |t| {
            let broken = t < 0.4;
            let spec = if broken {
                synthetic(&b, vec![vec![zero, Complex64::new(-0.2, 0.0)], vec![zero]])
            } else {
                synthetic(&b, vec![vec![zero, Complex64::new(0.5, 0.0)], vec![zero]])
            };
            let zm = empty_zm(1, 1e-7);
            let (class, eta) = classify(&spec, &zm, true);
            let (gi, _) = select_ground_state(&spec);
            Ok((
                SusyReport {
                    witten_index: 0,
                    zero_mode_counts: vec![1, 1],
                    gamma_g: spec.pairs[gi].gamma(),
                    e_g: spec.pairs[gi].energy(),
                    ground_degree: spec.pairs[gi].degree,
                    classification: class,
                    eta_t_broken: eta,
                    bf_pairing_residual: 0.0,
                    bf_unmatched: 0,
                    supertrace_drift: 0.0,
                    supertrace_values: vec![],
                    threshold: 1e-7,
                    ambiguous_gap: false,
                },
                true,
            ))
        })
        .unwrap();
        assert_eq!(table.restoration_t, Some(0.5));
        // non-monotone temperature list is rejected
        assert!(temperature_sweep(&[1.0, 0.5], |_| unreachable!()).is_err());
    }
}
