//! Deterministic transfer-operator toolkit: flow and tangent maps,
//! fixed-point location, and the weighted fixed-point traces (Lefschetz
//! sums, partition-counting traces, degree minors).

use ndarray::Array2;
use ndarray_linalg::EigVals;
use num_complex::Complex64;

use crate::error::{FlowError, Result};
use crate::fields::{det_small, inv_small, VectorField};

/// How trajectories and fixed-point distances treat the coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    /// wrap into [0, 2π)^D
    Torus,
    /// plain chart coordinates
    Plane,
}

/// A smooth flow field with an analytic Jacobian.
pub trait FlowMap: Sync {
    fn dim(&self) -> usize;
    fn domain(&self) -> Domain;
    fn eval(&self, x: &[f64]) -> Vec<f64>;
    fn jacobian(&self, x: &[f64]) -> Vec<Vec<f64>>;
    /// ‖F‖∞ estimate for the step-size policy.
    fn sup_norm(&self) -> f64;
}

impl FlowMap for VectorField {
    fn dim(&self) -> usize {
        VectorField::dim(self)
    }
    fn domain(&self) -> Domain {
        Domain::Torus
    }
    fn eval(&self, x: &[f64]) -> Vec<f64> {
        VectorField::eval(self, x)
    }
    fn jacobian(&self, x: &[f64]) -> Vec<Vec<f64>> {
        VectorField::jacobian(self, x)
    }
    fn sup_norm(&self) -> f64 {
        VectorField::sup_norm(self, 32)
    }
}

/// Stereographic chart of the height-gradient flow on the sphere:
/// u̇ = +u around the bottom pole (source), v̇ = −v around the top
/// pole (sink); the transition v = u/|u|² intertwines the two.
#[derive(Debug, Clone, Copy)]
pub struct SphereChartFlow {
    pub expanding: bool,
}

impl FlowMap for SphereChartFlow {
    fn dim(&self) -> usize {
        2
    }
    fn domain(&self) -> Domain {
        Domain::Plane
    }
    fn eval(&self, x: &[f64]) -> Vec<f64> {
        let s = if self.expanding { 1.0 } else { -1.0 };
        vec![s * x[0], s * x[1]]
    }
    fn jacobian(&self, _x: &[f64]) -> Vec<Vec<f64>> {
        let s = if self.expanding { 1.0 } else { -1.0 };
        vec![vec![s, 0.0], vec![0.0, s]]
    }
    fn sup_norm(&self) -> f64 {
        2.0
    }
}

/// Both charts of the sphere height-gradient preset.
pub fn sphere_height_charts() -> [SphereChartFlow; 2] {
    [
        SphereChartFlow { expanding: true },
        SphereChartFlow { expanding: false },
    ]
}

/// Chart-overlap consistency: push u̇ = +u through v = u/|u|² and
/// compare with v̇ = −v on a ring of sample points.  Exact algebra up
/// to rounding; returns the worst mismatch.
pub fn sphere_chart_overlap_residual() -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..16 {
        let phi = std::f64::consts::TAU * i as f64 / 16.0;
        for r in [0.7, 1.0, 1.4] {
            let u = [r * phi.cos(), r * phi.sin()];
            let r2 = u[0] * u[0] + u[1] * u[1];
            // dv = (I r2 − 2 u uᵀ)/r2² · u̇ with u̇ = u
            let du = [u[0], u[1]];
            let mut dv = [0.0f64; 2];
            for i2 in 0..2 {
                for j in 0..2 {
                    let jac = (if i2 == j { r2 } else { 0.0 }) - 2.0 * u[i2] * u[j];
                    dv[i2] += jac / (r2 * r2) * du[j];
                }
            }
            let v = [u[0] / r2, u[1] / r2];
            worst = worst.max((dv[0] + v[0]).abs()).max((dv[1] + v[1]).abs());
        }
    }
    worst
}

fn wrap(domain: Domain, x: &mut [f64]) {
    if domain == Domain::Torus {
        for xi in x.iter_mut() {
            *xi = xi.rem_euclid(std::f64::consts::TAU);
        }
    }
}

/// Displacement respecting the wrap.
fn displacement(domain: Domain, a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter()
        .zip(b.iter())
        .map(|(&x, &y)| {
            let mut d = x - y;
            if domain == Domain::Torus {
                d = d.rem_euclid(std::f64::consts::TAU);
                if d > std::f64::consts::PI {
                    d -= std::f64::consts::TAU;
                }
            }
            d
        })
        .collect()
}

fn step_count(flow: &dyn FlowMap, t: f64) -> usize {
    let h_max = 1e-3 / flow.sup_norm().max(1.0);
    ((t.abs() / h_max).ceil() as usize).max(1)
}

/// Integrate ẋ = F(x) with fixed-step fourth-order Runge–Kutta.
pub fn flow_map(flow: &dyn FlowMap, x0: &[f64], t: f64) -> Result<Vec<f64>> {
    let n = step_count(flow, t);
    let h = t / n as f64;
    let dim = flow.dim();
    let mut x = x0.to_vec();
    for _ in 0..n {
        let k1 = flow.eval(&x);
        let x2: Vec<f64> = (0..dim).map(|i| x[i] + 0.5 * h * k1[i]).collect();
        let k2 = flow.eval(&x2);
        let x3: Vec<f64> = (0..dim).map(|i| x[i] + 0.5 * h * k2[i]).collect();
        let k3 = flow.eval(&x3);
        let x4: Vec<f64> = (0..dim).map(|i| x[i] + h * k3[i]).collect();
        let k4 = flow.eval(&x4);
        for i in 0..dim {
            x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            if !x[i].is_finite() {
                return Err(FlowError::NonFiniteState {
                    trajectory: 0,
                    step: 0,
                });
            }
        }
    }
    wrap(flow.domain(), &mut x);
    Ok(x)
}

/// Joint integration of the state, the tangent map M (∂M/∂t = F̂(x)·M)
/// and ∫ tr F̂ dt along the trajectory.  det M = exp(∫ tr F̂) checks
/// orientation preservation.
pub fn tangent_map(flow: &dyn FlowMap, x0: &[f64], t: f64) -> Result<(Vec<f64>, Vec<Vec<f64>>, f64)> {
    let n = step_count(flow, t);
    let h = t / n as f64;
    let dim = flow.dim();
    let mut x = x0.to_vec();
    let mut m: Vec<Vec<f64>> = (0..dim)
        .map(|i| (0..dim).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    let mut logdet = 0.0;

    // one RK4 stage of the combined system (x, M, s)
    let deriv = |x: &[f64], m: &[Vec<f64>]| {
        let f = flow.eval(x);
        let j = flow.jacobian(x);
        let dm: Vec<Vec<f64>> = (0..dim)
            .map(|a| {
                (0..dim)
                    .map(|b| (0..dim).map(|c| j[a][c] * m[c][b]).sum())
                    .collect()
            })
            .collect();
        let tr: f64 = (0..dim).map(|a| j[a][a]).sum();
        (f, dm, tr)
    };
    let advance = |x: &[f64], m: &[Vec<f64>], f: &[f64], dm: &[Vec<f64>], w: f64| {
        let xn: Vec<f64> = (0..dim).map(|i| x[i] + w * f[i]).collect();
        let mn: Vec<Vec<f64>> = (0..dim)
            .map(|a| (0..dim).map(|b| m[a][b] + w * dm[a][b]).collect())
            .collect();
        (xn, mn)
    };

    for _ in 0..n {
        let (f1, dm1, tr1) = deriv(&x, &m);
        let (x2, m2) = advance(&x, &m, &f1, &dm1, 0.5 * h);
        let (f2, dm2, tr2) = deriv(&x2, &m2);
        let (x3, m3) = advance(&x, &m, &f2, &dm2, 0.5 * h);
        let (f3, dm3, tr3) = deriv(&x3, &m3);
        let (x4, m4) = advance(&x, &m, &f3, &dm3, h);
        let (f4, dm4, tr4) = deriv(&x4, &m4);
        for i in 0..dim {
            x[i] += h / 6.0 * (f1[i] + 2.0 * f2[i] + 2.0 * f3[i] + f4[i]);
            if !x[i].is_finite() {
                return Err(FlowError::NonFiniteState {
                    trajectory: 0,
                    step: 0,
                });
            }
            for j in 0..dim {
                m[i][j] += h / 6.0 * (dm1[i][j] + 2.0 * dm2[i][j] + 2.0 * dm3[i][j] + dm4[i][j]);
            }
        }
        logdet += h / 6.0 * (tr1 + 2.0 * tr2 + 2.0 * tr3 + tr4);
    }
    wrap(flow.domain(), &mut x);
    Ok((x, m, logdet))
}

#[derive(Debug, Clone)]
pub struct FlowFixedPoint {
    pub location: Vec<f64>,
    /// tangent map M̂_t at the fixed point
    pub jacobian_mt: Vec<Vec<f64>>,
    pub newton_residual: f64,
    pub stability_eigenvalues: Vec<Complex64>,
    /// no unit-modulus tangent eigenvalue within 1e−6
    pub isolated: bool,
}

/// Locate the fixed points of M_t from a uniform seed grid and attach
/// the tangent map at each.  Every counted fixed point of M_t is a zero
/// of the flow field (period-return points are non-isolated and out of
/// scope), so Newton runs on F(x) = 0 with the analytic Jacobian —
/// robust for expanding points whose M_t − x basins shrink like e^{−t}.
/// Roots are deduplicated, `‖M_t(x) − x‖` is verified and stored, the
/// orientation det M̂_t > 0 is checked, and non-isolated points (a
/// unit-modulus tangent eigenvalue) are flagged for exclusion.
pub fn find_fixed_points(
    flow: &dyn FlowMap,
    t: f64,
    seeds_per_dim: usize,
    seed_box: f64,
) -> Result<Vec<FlowFixedPoint>> {
    assert!(t > 0.0);
    let dim = flow.dim();
    let domain = flow.domain();
    let total = seeds_per_dim.pow(dim as u32);
    let mut roots: Vec<Vec<f64>> = Vec::new();
    for flat in 0..total {
        let mut idx = flat;
        let mut x: Vec<f64> = Vec::with_capacity(dim);
        for _ in 0..dim {
            let k = idx % seeds_per_dim;
            idx /= seeds_per_dim;
            let frac = (k as f64 + 0.5) / seeds_per_dim as f64;
            x.push(match domain {
                Domain::Torus => std::f64::consts::TAU * frac,
                Domain::Plane => seed_box * (2.0 * frac - 1.0),
            });
        }
        let mut converged = false;
        for _ in 0..80 {
            let f = flow.eval(&x);
            let fnorm = f.iter().map(|v| v * v).sum::<f64>().sqrt();
            if fnorm < 1e-12 {
                converged = true;
                break;
            }
            let j = flow.jacobian(&x);
            if det_small(&j).abs() < 1e-14 {
                break;
            }
            let jinv = inv_small(&j);
            for i in 0..dim {
                let step: f64 = (0..dim).map(|c| jinv[i][c] * f[c]).sum();
                x[i] -= step;
            }
            if x.iter().any(|v| !v.is_finite()) {
                break;
            }
            wrap(domain, &mut x);
            if domain == Domain::Plane && x.iter().any(|v| v.abs() > 4.0 * seed_box.max(1.0)) {
                break;
            }
        }
        if !converged {
            continue;
        }
        if roots.iter().any(|r| {
            displacement(domain, r, &x)
                .iter()
                .map(|v| v * v)
                .sum::<f64>()
                .sqrt()
                < 1e-6
        }) {
            continue;
        }
        roots.push(x);
    }
    // deterministic order
    roots.sort_by(|a, b| a.partial_cmp(b).unwrap());

    let mut out = Vec::with_capacity(roots.len());
    for x in roots {
        let (xt, m, _) = tangent_map(flow, &x, t)?;
        let g = displacement(domain, &xt, &x);
        let newton_residual = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if newton_residual > 1e-8 {
            return Err(FlowError::InvariantFailed {
                name: "fixed-point".into(),
                detail: format!("‖M_t(x) − x‖ = {newton_residual:.3e} at {x:?}"),
            });
        }
        let det = det_small(&m);
        if det <= 0.0 {
            return Err(FlowError::InvariantFailed {
                name: "orientation".into(),
                detail: format!("det M_t = {det:.3e} at {x:?}"),
            });
        }
        let eigs = small_eigenvalues(&m)?;
        let isolated = eigs.iter().all(|e| (e.norm() - 1.0).abs() > 1e-6);
        out.push(FlowFixedPoint {
            location: x,
            jacobian_mt: m,
            newton_residual,
            stability_eigenvalues: eigs,
            isolated,
        });
    }
    Ok(out)
}

fn small_eigenvalues(m: &[Vec<f64>]) -> Result<Vec<Complex64>> {
    let d = m.len();
    if d == 1 {
        return Ok(vec![Complex64::new(m[0][0], 0.0)]);
    }
    let a = Array2::from_shape_fn((d, d), |(i, j)| Complex64::new(m[i][j], 0.0));
    let vals = a.eigvals().map_err(|e| FlowError::EigenFailure {
        degree: 0,
        reason: e.to_string(),
    })?;
    Ok(vals.to_vec())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Weight {
    /// det(1 − M̂_{−t}): the Lefschetz sum (sign per fixed point)
    W,
    /// det(1 + M̂_{−t}): the partition-counting trace
    Z,
    /// sum of k×k principal minors of M̂_{−t}: the degree-k flat trace
    MK(usize),
}

#[derive(Debug, Clone)]
pub struct WeightedTraceResult {
    pub value: f64,
    pub contributions: Vec<(Vec<f64>, f64)>,
    pub weight: Weight,
    pub skipped_non_isolated: usize,
}

/// Σ φ(x)/|det(1 − M̂_{−t})| over isolated fixed points, with
/// M̂_{−t} = (M̂_t)⁻¹ at each fixed point.
pub fn weighted_trace(fps: &[FlowFixedPoint], weight: Weight) -> Result<WeightedTraceResult> {
    let mut value = 0.0;
    let mut contributions = Vec::new();
    let mut skipped = 0;
    for fp in fps {
        if !fp.isolated {
            skipped += 1;
            continue;
        }
        let minv = inv_small(&fp.jacobian_mt);
        let d = minv.len();
        let mut one_minus = minv.clone();
        for i in 0..d {
            for j in 0..d {
                one_minus[i][j] = (if i == j { 1.0 } else { 0.0 }) - minv[i][j];
            }
        }
        let denom = det_small(&one_minus);
        if denom.abs() < 1e-9 {
            return Err(FlowError::NonHyperbolic {
                location: fp.location.clone(),
                det: denom.abs(),
            });
        }
        let phi = match weight {
            Weight::W => denom,
            Weight::Z => {
                let mut one_plus = minv.clone();
                for i in 0..d {
                    for j in 0..d {
                        one_plus[i][j] = (if i == j { 1.0 } else { 0.0 }) + minv[i][j];
                    }
                }
                det_small(&one_plus)
            }
            Weight::MK(k) => principal_minor_sum(&minv, k),
        };
        let contribution = phi / denom.abs();
        contributions.push((fp.location.clone(), contribution));
        value += contribution;
    }
    Ok(WeightedTraceResult {
        value,
        contributions,
        weight,
        skipped_non_isolated: skipped,
    })
}

/// Σ over k-element index subsets of the determinant of the principal
/// sub-block.
fn principal_minor_sum(m: &[Vec<f64>], k: usize) -> f64 {
    let d = m.len();
    if k == 0 {
        return 1.0;
    }
    if k > d {
        return 0.0;
    }
    let mut total = 0.0;
    // iterate over subsets of size k
    let mut subset: Vec<usize> = (0..k).collect();
    loop {
        let sub: Vec<Vec<f64>> = subset
            .iter()
            .map(|&i| subset.iter().map(|&j| m[i][j]).collect())
            .collect();
        total += det_small(&sub);
        // next subset
        let mut i = k;
        loop {
            if i == 0 {
                return total;
            }
            i -= 1;
            if subset[i] < d - (k - i) {
                subset[i] += 1;
                for j in i + 1..k {
                    subset[j] = subset[j - 1] + 1;
                }
                break;
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct LefschetzReport {
    pub per_time: Vec<(f64, f64)>,
    pub integer_value: i64,
}

/// The Lefschetz sum across a list of times must be one and the same
/// integer (hyperbolicity permitting).
pub fn lefschetz_time_independence(
    flow: &dyn FlowMap,
    t_list: &[f64],
    seeds_per_dim: usize,
    seed_box: f64,
) -> Result<LefschetzReport> {
    let mut per_time = Vec::new();
    let mut integer_value: Option<i64> = None;
    for &t in t_list {
        let fps = find_fixed_points(flow, t, seeds_per_dim, seed_box)?;
        let trace = weighted_trace(&fps, Weight::W)?;
        let rounded = trace.value.round();
        if (trace.value - rounded).abs() > 1e-6 {
            return Err(FlowError::InvariantFailed {
                name: "lefschetz-integer".into(),
                detail: format!("sum {} at t = {t}", trace.value),
            });
        }
        match integer_value {
            None => integer_value = Some(rounded as i64),
            Some(v) if v != rounded as i64 => {
                return Err(FlowError::InvariantFailed {
                    name: "lefschetz-time-independence".into(),
                    detail: format!("{v} vs {rounded} at t = {t}"),
                });
            }
            _ => {}
        }
        per_time.push((t, trace.value));
    }
    Ok(LefschetzReport {
        per_time,
        integer_value: integer_value.unwrap_or(0),
    })
}

/// The sphere preset: Lefschetz sum over both charts (each pole lives
/// in exactly one chart's unit disk).
pub fn sphere_lefschetz(t_list: &[f64], seeds_per_dim: usize) -> Result<LefschetzReport> {
    let charts = sphere_height_charts();
    let mut per_time = Vec::new();
    let mut integer_value: Option<i64> = None;
    for &t in t_list {
        let mut total = 0.0;
        for chart in &charts {
            let fps: Vec<FlowFixedPoint> = find_fixed_points(chart, t, seeds_per_dim, 1.3)?
                .into_iter()
                .filter(|fp| fp.location.iter().map(|v| v * v).sum::<f64>().sqrt() < 1.0)
                .collect();
            total += weighted_trace(&fps, Weight::W)?.value;
        }
        let rounded = total.round();
        if (total - rounded).abs() > 1e-6 {
            return Err(FlowError::InvariantFailed {
                name: "lefschetz-integer".into(),
                detail: format!("sphere sum {total} at t = {t}"),
            });
        }
        match integer_value {
            None => integer_value = Some(rounded as i64),
            Some(v) if v != rounded as i64 => {
                return Err(FlowError::InvariantFailed {
                    name: "lefschetz-time-independence".into(),
                    detail: format!("{v} vs {rounded} at t = {t}"),
                });
            }
            _ => {}
        }
        per_time.push((t, total));
    }
    Ok(LefschetzReport {
        per_time,
        integer_value: integer_value.unwrap_or(0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::TrigPoly;
    use approx::assert_abs_diff_eq;

    fn circle_sin() -> VectorField {
        VectorField::new(vec![TrigPoly::real_sin(1, 0, 1, 1.0)])
    }

    fn t2_gradient() -> VectorField {
        // F = −∇(cos x¹ + cos x²): 4 hyperbolic fixed points
        VectorField::new(vec![
            TrigPoly::real_sin(2, 0, 1, 1.0),
            TrigPoly::real_sin(2, 1, 1, 1.0),
        ])
    }

    #[test]
    fn zero_flow_is_identity() {
        let f = VectorField::zero(2);
        let x = flow_map(&f, &[1.0, 2.0], 1.0).unwrap();
        assert_abs_diff_eq!(x[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(x[1], 2.0, epsilon = 1e-12);
        let (_, m, _) = tangent_map(&f, &[1.0, 2.0], 1.0).unwrap();
        assert_abs_diff_eq!(m[0][0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(m[0][1], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn circle_sin_closed_form() {
        // ẋ = sin x: M_t(x0) = 2 atan(e^t tan(x0/2))
        let f = circle_sin();
        let x0 = std::f64::consts::FRAC_PI_2;
        let t = 1.0;
        let got = flow_map(&f, &[x0], t).unwrap()[0];
        let want = 2.0 * (t.exp() * (x0 / 2.0).tan()).atan();
        assert_abs_diff_eq!(got, want, epsilon = 1e-9);
    }

    #[test]
    fn constant_rotation_translates() {
        let f = VectorField::new(vec![
            TrigPoly::constant(2, 0.3),
            TrigPoly::constant(2, 1.7),
        ]);
        let x = flow_map(&f, &[0.1, 6.0], 2.0).unwrap();
        assert_abs_diff_eq!(x[0], (0.1f64 + 0.6).rem_euclid(std::f64::consts::TAU), epsilon = 1e-10);
        assert_abs_diff_eq!(x[1], (6.0f64 + 3.4).rem_euclid(std::f64::consts::TAU), epsilon = 1e-10);
    }

    #[test]
    fn group_law_on_random_points() {
        let f = t2_gradient();
        let pts = [[0.3, 1.1], [2.0, 4.4], [5.9, 0.2]];
        for p in pts {
            let a = flow_map(&f, &flow_map(&f, &p, 0.7).unwrap(), 1.3).unwrap();
            let b = flow_map(&f, &p, 2.0).unwrap();
            let d = displacement(Domain::Torus, &a, &b);
            assert!(d.iter().map(|v| v * v).sum::<f64>().sqrt() < 1e-8);
            // tangent composition (10c)
            let (x1, m1, _) = tangent_map(&f, &p, 0.7).unwrap();
            let (_, m2, _) = tangent_map(&f, &x1, 1.3).unwrap();
            let (_, m12, _) = tangent_map(&f, &p, 2.0).unwrap();
            for i in 0..2 {
                for j in 0..2 {
                    let comp: f64 = (0..2).map(|c| m2[i][c] * m1[c][j]).sum();
                    assert!((comp - m12[i][j]).abs() < 1e-7);
                }
            }
        }
    }

    #[test]
    fn tangent_linearization_at_fixed_points() {
        // ẋ = sin x: M̂_t = e^t at x = 0, e^{−t} at x = π
        let f = circle_sin();
        let (_, m, logdet) = tangent_map(&f, &[0.0], 1.0).unwrap();
        assert_abs_diff_eq!(m[0][0], 1.0f64.exp(), epsilon = 1e-7);
        assert_abs_diff_eq!(logdet, 1.0, epsilon = 1e-9);
        let (_, m, _) = tangent_map(&f, &[std::f64::consts::PI], 1.0).unwrap();
        assert_abs_diff_eq!(m[0][0], (-1.0f64).exp(), epsilon = 1e-9);
    }

    #[test]
    fn det_matches_trace_integral_along_trajectory() {
        let f = t2_gradient();
        let (_, m, logdet) = tangent_map(&f, &[0.7, 1.9], 1.5).unwrap();
        let det = det_small(&m);
        assert!(det > 0.0);
        assert_abs_diff_eq!(det.ln(), logdet, epsilon = 1e-7);
    }

    #[test]
    fn circle_fixed_points_and_lefschetz() {
        let f = circle_sin();
        let fps = find_fixed_points(&f, 1.0, 16, 0.0).unwrap();
        assert_eq!(fps.len(), 2);
        assert_abs_diff_eq!(fps[0].location[0], 0.0, epsilon = 1e-8);
        assert_abs_diff_eq!(fps[1].location[0], std::f64::consts::PI, epsilon = 1e-8);
        let sum = weighted_trace(&fps, Weight::W).unwrap();
        assert_abs_diff_eq!(sum.value, 0.0, epsilon = 1e-9);

        let rep = lefschetz_time_independence(&f, &[0.5, 1.0, 2.0, 4.0], 16, 0.0).unwrap();
        assert_eq!(rep.integer_value, 0);
    }

    #[test]
    fn rotation_has_no_fixed_points() {
        let f = VectorField::new(vec![
            TrigPoly::constant(2, 1.0),
            TrigPoly::constant(2, std::f64::consts::SQRT_2),
        ]);
        let fps = find_fixed_points(&f, 1.0, 8, 0.0).unwrap();
        assert!(fps.is_empty());
    }

    #[test]
    fn sphere_poles_found_in_both_charts() {
        for chart in sphere_height_charts() {
            let fps = find_fixed_points(&chart, 1.0, 8, 1.3).unwrap();
            assert_eq!(fps.len(), 1);
            assert!(fps[0].location.iter().all(|v| v.abs() < 1e-9));
        }
        assert!(sphere_chart_overlap_residual() < 1e-12);
        let rep = sphere_lefschetz(&[0.5, 1.0, 2.0, 4.0], 8).unwrap();
        assert_eq!(rep.integer_value, 2);
    }

    #[test]
    fn t2_gradient_lefschetz_morse_counting() {
        let f = t2_gradient();
        let fps = find_fixed_points(&f, 1.0, 12, 0.0).unwrap();
        assert_eq!(fps.len(), 4);
        let rep = lefschetz_time_independence(&f, &[0.5, 1.0, 2.0, 4.0], 12, 0.0).unwrap();
        assert_eq!(rep.integer_value, 0);
        // signs: source +1, sink +1, two saddles −1
        let w = weighted_trace(&fps, Weight::W).unwrap();
        let signs: Vec<f64> = w.contributions.iter().map(|c| c.1).collect();
        assert_eq!(signs.iter().filter(|&&s| s > 0.0).count(), 2);
        assert_eq!(signs.iter().filter(|&&s| s < 0.0).count(), 2);
    }

    #[test]
    fn z_trace_counts_fixed_points_at_large_t() {
        let f = circle_sin();
        let fps = find_fixed_points(&f, 8.0, 16, 0.0).unwrap();
        let z = weighted_trace(&fps, Weight::Z).unwrap();
        // analytic deviation 2 e^{−8}/(1 − e^{−8}) per point
        assert!((z.value - 2.0).abs() / 2.0 < 1e-3, "z = {}", z.value);
        // weight z at t = 5 is already close to the count
        let fps5 = find_fixed_points(&f, 5.0, 16, 0.0).unwrap();
        let z5 = weighted_trace(&fps5, Weight::Z).unwrap();
        assert!((z5.value - 2.0).abs() < 0.03);
    }

    #[test]
    fn mk_weights_recover_w_and_z() {
        // w = Σ (−1)^k m_k and z = Σ m_k (characteristic polynomial)
        let f = t2_gradient();
        let fps = find_fixed_points(&f, 1.0, 12, 0.0).unwrap();
        let w = weighted_trace(&fps, Weight::W).unwrap().value;
        let z = weighted_trace(&fps, Weight::Z).unwrap().value;
        let m: Vec<f64> = (0..=2)
            .map(|k| weighted_trace(&fps, Weight::MK(k)).unwrap().value)
            .collect();
        assert_abs_diff_eq!(w, m[0] - m[1] + m[2], epsilon = 1e-9);
        assert_abs_diff_eq!(z, m[0] + m[1] + m[2], epsilon = 1e-9);
    }
}
