//! Scenario definition and pipeline orchestration: a flat TOML config
//! selects the manifold, flow and vielbein presets and the run
//! parameters; the runner assembles operators, verifies the invariant
//! suite, computes spectra and diagnostics, and emits the report and
//! CSV artifacts.

use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use num_complex::Complex64;
use serde::Deserialize;

use crate::basis::{FormBasis, Manifold};
use crate::error::{FlowError, Result};
use crate::fields::{TrigPoly, VectorField, Vielbein};
use crate::mc::{self, DensityHistogram, Integrator, McRun};
use crate::operators::{reality_check, OperatorSet};
use crate::spectra::{
    conjugation_pairing, eigendecompose, mark_convergence, refinement_delta, zero_modes, Spectrum,
    ZeroModeReport,
};
use crate::susy::{self, SusyReport, TeState};
use crate::transfer::{
    find_fixed_points, lefschetz_time_independence, sphere_lefschetz, weighted_trace,
    FlowFixedPoint, Weight,
};

// ---------------------------------------------------------------------
// config schema (unknown keys are errors)
// ---------------------------------------------------------------------

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub manifold: ManifoldConfig,
    pub flow: FlowConfig,
    #[serde(default)]
    pub vielbein: VielbeinConfig,
    #[serde(default)]
    pub run: RunConfig,
    #[serde(default)]
    pub mc: McConfig,
    #[serde(default)]
    pub det: DetConfig,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifoldConfig {
    pub kind: String,
    pub dim: Option<usize>,
    pub n_cut: Option<usize>,
    pub half_width: Option<f64>,
    pub grid_count: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowConfig {
    pub preset: String,
    pub amplitude: Option<f64>,
    pub harmonic: Option<i32>,
    pub omega: Option<Vec<f64>>,
    pub a: Option<f64>,
    pub b: Option<f64>,
    pub c: Option<f64>,
    pub well: Option<f64>,
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct VielbeinConfig {
    pub preset: Option<String>,
    pub alpha: Option<f64>,
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub temperature: Option<f64>,
    pub t_list: Option<Vec<f64>>,
    pub t_grid: Option<Vec<f64>>,
    pub seed: Option<u64>,
    pub refine_step: Option<usize>,
    pub converge: Option<bool>,
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct McConfig {
    pub integrator: Option<String>,
    pub step: Option<f64>,
    pub trajectories: Option<usize>,
    pub samples: Option<usize>,
    pub burn_in: Option<usize>,
    pub stride: Option<usize>,
    pub bins: Option<usize>,
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct DetConfig {
    pub t_list: Option<Vec<f64>>,
    pub z_time: Option<f64>,
    pub seeds_per_dim: Option<usize>,
}

// ---------------------------------------------------------------------
// validated scenario
// ---------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub enum FlowPreset {
    Zero,
    CircleSin { amplitude: f64 },
    Gradient { amplitude: f64, harmonic: i32 },
    Rotation { omega: Vec<f64> },
    Abc { a: f64, b: f64, c: f64 },
    SphereHeight,
    DoubleWell { well: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub enum VielbeinPreset {
    Identity,
    DiagonalSin { alpha: f64 },
    Curved2d { alpha: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub enum ManifoldSpec {
    Torus { dim: usize, n_cut: usize },
    Line { half_width: f64, grid_count: usize },
    Sphere,
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub manifold: ManifoldSpec,
    pub flow: FlowPreset,
    pub vielbein: VielbeinPreset,
    pub temperature: f64,
    pub t_list: Vec<f64>,
    pub t_grid: Vec<f64>,
    pub seed: u64,
    pub refine_step: usize,
    pub converge: bool,
    pub mc_integrator: String,
    pub mc_step: f64,
    pub mc_trajectories: usize,
    pub mc_samples: usize,
    pub mc_burn_in: usize,
    pub mc_stride: usize,
    pub mc_bins: usize,
    pub det_t_list: Vec<f64>,
    pub det_z_time: f64,
    pub det_seeds_per_dim: usize,
}

fn cfg_err(msg: impl Into<String>) -> FlowError {
    FlowError::Config(msg.into())
}

/// Parse and validate a scenario document; defaults are filled in and
/// echoed back in reports.
pub fn parse_scenario(text: &str) -> Result<Scenario> {
    let cfg: Config = toml::from_str(text).map_err(|e| cfg_err(e.to_string()))?;
    let manifold = match cfg.manifold.kind.as_str() {
        "torus" => {
            let dim = cfg.manifold.dim.unwrap_or(2);
            if !(1..=3).contains(&dim) {
                return Err(cfg_err(format!("manifold.dim = {dim} outside 1..=3")));
            }
            ManifoldSpec::Torus {
                dim,
                n_cut: cfg.manifold.n_cut.unwrap_or(8),
            }
        }
        "line" => ManifoldSpec::Line {
            half_width: cfg.manifold.half_width.unwrap_or(2.5),
            grid_count: cfg.manifold.grid_count.unwrap_or(200),
        },
        "sphere" => ManifoldSpec::Sphere,
        other => return Err(cfg_err(format!("manifold.kind `{other}` unknown"))),
    };
    let dim = match &manifold {
        ManifoldSpec::Torus { dim, .. } => *dim,
        ManifoldSpec::Line { .. } => 1,
        ManifoldSpec::Sphere => 2,
    };
    let flow = match cfg.flow.preset.as_str() {
        "zero" => FlowPreset::Zero,
        "circle-sin" => {
            if dim != 1 {
                return Err(cfg_err("flow.preset circle-sin needs a 1-torus"));
            }
            FlowPreset::CircleSin {
                amplitude: cfg.flow.amplitude.unwrap_or(1.0),
            }
        }
        "gradient" => FlowPreset::Gradient {
            amplitude: cfg.flow.amplitude.unwrap_or(1.0),
            harmonic: cfg.flow.harmonic.unwrap_or(1),
        },
        "rotation" => {
            let omega = cfg
                .flow
                .omega
                .clone()
                .unwrap_or_else(|| vec![1.0; dim]);
            if omega.len() != dim {
                return Err(cfg_err("flow.omega length must equal the dimension"));
            }
            FlowPreset::Rotation { omega }
        }
        "abc" => {
            if dim != 3 {
                return Err(cfg_err("flow.preset abc needs a 3-torus"));
            }
            let amp = cfg.flow.amplitude.unwrap_or(1.0);
            FlowPreset::Abc {
                a: cfg.flow.a.unwrap_or(amp),
                b: cfg.flow.b.unwrap_or(amp),
                c: cfg.flow.c.unwrap_or(amp),
            }
        }
        "sphere-height" => {
            if manifold != ManifoldSpec::Sphere {
                return Err(cfg_err("flow.preset sphere-height needs manifold.kind = sphere"));
            }
            FlowPreset::SphereHeight
        }
        "double-well" => {
            if !matches!(manifold, ManifoldSpec::Line { .. }) {
                return Err(cfg_err("flow.preset double-well needs manifold.kind = line"));
            }
            FlowPreset::DoubleWell {
                well: cfg.flow.well.unwrap_or(1.0),
            }
        }
        other => return Err(cfg_err(format!("flow.preset `{other}` unknown"))),
    };
    if matches!(manifold, ManifoldSpec::Sphere) && flow != FlowPreset::SphereHeight {
        return Err(cfg_err("the sphere supports only the sphere-height preset"));
    }
    let alpha = cfg.vielbein.alpha.unwrap_or(0.3);
    if !(0.0..=0.5).contains(&alpha) {
        return Err(cfg_err(format!(
            "vielbein.alpha = {alpha} outside the validity range (0, 0.5]"
        )));
    }
    let vielbein = match cfg.vielbein.preset.as_deref().unwrap_or("identity") {
        "identity" => VielbeinPreset::Identity,
        "diagonal-sin" => VielbeinPreset::DiagonalSin { alpha },
        "curved-2d" => {
            if dim != 2 {
                return Err(cfg_err("vielbein.preset curved-2d needs a 2-torus"));
            }
            VielbeinPreset::Curved2d { alpha }
        }
        other => return Err(cfg_err(format!("vielbein.preset `{other}` unknown"))),
    };
    if matches!(manifold, ManifoldSpec::Line { .. }) && vielbein != VielbeinPreset::Identity {
        return Err(cfg_err("line scenarios support additive noise only"));
    }
    let temperature = cfg.run.temperature.unwrap_or(1.0);
    if temperature < 0.0 {
        return Err(cfg_err("run.temperature must be non-negative"));
    }
    let t_grid = cfg
        .run
        .t_grid
        .clone()
        .unwrap_or_else(|| vec![0.5, 1.0, 2.0, 4.0]);
    if t_grid.iter().any(|&t| t <= 0.0) {
        return Err(cfg_err("run.t_grid entries must be positive"));
    }
    Ok(Scenario {
        manifold,
        flow,
        vielbein,
        temperature,
        t_list: cfg.run.t_list.clone().unwrap_or_default(),
        t_grid,
        seed: cfg.run.seed.unwrap_or(42),
        refine_step: cfg.run.refine_step.unwrap_or(2),
        converge: cfg.run.converge.unwrap_or(false),
        mc_integrator: cfg.mc.integrator.clone().unwrap_or_else(|| "both".into()),
        mc_step: cfg.mc.step.unwrap_or(1e-3),
        mc_trajectories: cfg.mc.trajectories.unwrap_or(40),
        mc_samples: cfg.mc.samples.unwrap_or(1_000_000),
        mc_burn_in: cfg.mc.burn_in.unwrap_or(0),
        mc_stride: cfg.mc.stride.unwrap_or(20),
        mc_bins: cfg.mc.bins.unwrap_or(64),
        det_t_list: cfg
            .det
            .t_list
            .clone()
            .unwrap_or_else(|| vec![0.5, 1.0, 2.0, 4.0]),
        det_z_time: cfg.det.z_time.unwrap_or(8.0),
        det_seeds_per_dim: cfg.det.seeds_per_dim.unwrap_or(16),
    })
}

impl Scenario {
    pub fn dim(&self) -> usize {
        match &self.manifold {
            ManifoldSpec::Torus { dim, .. } => *dim,
            ManifoldSpec::Line { .. } => 1,
            ManifoldSpec::Sphere => 2,
        }
    }

    /// The flow as a trig-poly field (torus scenarios).
    pub fn build_flow(&self) -> Result<VectorField> {
        let dim = self.dim();
        Ok(match &self.flow {
            FlowPreset::Zero => VectorField::zero(dim),
            FlowPreset::CircleSin { amplitude } => {
                VectorField::new(vec![TrigPoly::real_sin(1, 0, 1, *amplitude)])
            }
            FlowPreset::Gradient { amplitude, harmonic } => {
                // F = −∇W, W = amplitude Σ_i cos(harmonic x_i)
                let comps = (0..dim)
                    .map(|i| TrigPoly::real_sin(dim, i, *harmonic, amplitude * *harmonic as f64))
                    .collect();
                VectorField::new(comps)
            }
            FlowPreset::Rotation { omega } => VectorField::new(
                omega
                    .iter()
                    .map(|&w| TrigPoly::constant(dim, w))
                    .collect(),
            ),
            FlowPreset::Abc { a, b, c } => VectorField::new(vec![
                TrigPoly::real_sin(3, 2, 1, *a).add(&TrigPoly::real_cos(3, 1, 1, *c)),
                TrigPoly::real_sin(3, 0, 1, *b).add(&TrigPoly::real_cos(3, 2, 1, *a)),
                TrigPoly::real_sin(3, 1, 1, *c).add(&TrigPoly::real_cos(3, 0, 1, *b)),
            ]),
            FlowPreset::SphereHeight | FlowPreset::DoubleWell { .. } => {
                return Err(cfg_err("spectral pipeline needs a torus or line flow"))
            }
        })
    }

    pub fn build_vielbein(&self) -> Vielbein {
        let dim = self.dim();
        match &self.vielbein {
            VielbeinPreset::Identity => Vielbein::identity(dim),
            VielbeinPreset::DiagonalSin { alpha } => Vielbein::diagonal(
                (0..dim)
                    .map(|i| {
                        TrigPoly::constant(dim, 1.0).add(&TrigPoly::real_sin(dim, i, 1, *alpha))
                    })
                    .collect(),
            ),
            VielbeinPreset::Curved2d { alpha } => Vielbein::diagonal(vec![
                TrigPoly::constant(2, 1.0),
                TrigPoly::constant(2, 1.0).add(&TrigPoly::real_cos(2, 0, 1, *alpha)),
            ]),
        }
    }

    /// Potential of the line double-well, W = (x² − a²)².
    pub fn line_potential(&self, x: f64) -> f64 {
        match &self.flow {
            FlowPreset::DoubleWell { well } => {
                let u = x * x - well * well;
                u * u
            }
            _ => 0.0,
        }
    }

    /// Basis at a given torus cutoff or line grid count.
    pub fn build_basis(&self, resolution: usize) -> Result<Arc<FormBasis>> {
        match &self.manifold {
            ManifoldSpec::Torus { dim, .. } => Ok(Arc::new(FormBasis::make(Manifold::Torus {
                dim: *dim,
                n_cut: resolution,
            })?)),
            ManifoldSpec::Line { half_width, .. } => {
                let h = 2.0 * half_width / (resolution - 1) as f64;
                let g: Vec<f64> = (0..resolution)
                    .map(|j| self.line_potential(-half_width + h * j as f64)
                        / (2.0 * self.temperature))
                    .collect();
                Ok(Arc::new(FormBasis::make_line_weighted(
                    *half_width,
                    resolution,
                    g,
                )?))
            }
            ManifoldSpec::Sphere => Err(cfg_err("the sphere has no spectral basis")),
        }
    }

    pub fn resolution(&self) -> usize {
        match &self.manifold {
            ManifoldSpec::Torus { n_cut, .. } => *n_cut,
            ManifoldSpec::Line { grid_count, .. } => *grid_count,
            ManifoldSpec::Sphere => 0,
        }
    }

    /// Assemble the operator set at a resolution (torus cutoff or line
    /// grid count).
    pub fn assemble(&self, resolution: usize, with_geometry: bool) -> Result<OperatorSet> {
        match &self.manifold {
            ManifoldSpec::Torus { .. } => {
                let basis = self.build_basis(resolution)?;
                OperatorSet::assemble_torus(
                    basis,
                    &self.build_flow()?,
                    &self.build_vielbein(),
                    self.temperature,
                    with_geometry,
                )
            }
            ManifoldSpec::Line { half_width, .. } => {
                let basis = self.build_basis(resolution)?;
                let f: Vec<f64> = (0..resolution)
                    .map(|j| {
                        let h = 2.0 * half_width / (resolution - 1) as f64;
                        let x = -half_width + h * j as f64;
                        match &self.flow {
                            FlowPreset::DoubleWell { well } => {
                                -4.0 * x * (x * x - well * well)
                            }
                            _ => 0.0,
                        }
                    })
                    .collect();
                OperatorSet::assemble_line(basis, &f, self.temperature)
            }
            ManifoldSpec::Sphere => Err(cfg_err("the sphere has no spectral operator set")),
        }
    }

    /// One-line echo of the resolved scenario, reproducible byte for
    /// byte.
    pub fn echo(&self) -> String {
        format!(
            "manifold = {:?}; flow = {:?}; vielbein = {:?}; temperature = {}; seed = {}",
            self.manifold, self.flow, self.vielbein, self.temperature, self.seed
        )
    }
}

// ---------------------------------------------------------------------
// invariant suite
// ---------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct InvariantSummary {
    pub d_squared_max: f64,
    pub susy_residual_rel: f64,
    pub reality_residual: f64,
    pub pass: bool,
}

/// The cheap invariant suite every run re-executes; analysis numbers
/// are refused when it fails.
pub fn invariant_suite(set: &OperatorSet) -> Result<InvariantSummary> {
    let dd = set.d.compose(&set.d)?.max_abs();
    let norm = set.h_strat.op_norm().max(1e-300);
    let susy = set.susy_residual()? / norm;
    let reality = if set.basis.is_torus() {
        reality_check(&set.h_strat, set.basis.n_cut() as u64 + 11)
    } else {
        0.0
    };
    let pass = dd == 0.0 && susy < 1e-12 && reality < 1e-10;
    Ok(InvariantSummary {
        d_squared_max: dd,
        susy_residual_rel: susy,
        reality_residual: reality,
        pass,
    })
}

// ---------------------------------------------------------------------
// pipeline
// ---------------------------------------------------------------------

pub struct SpectralRun {
    pub set: OperatorSet,
    pub spectrum: Spectrum,
    pub zero_modes: ZeroModeReport,
    pub invariants: InvariantSummary,
    pub conjugation_residual: f64,
    /// (coarse resolution, fine resolution, low-lying delta) when the
    /// convergence pair ran
    pub convergence: Option<(usize, usize, f64)>,
    pub assemble_seconds: f64,
    pub eig_seconds: f64,
}

/// Assemble, verify invariants, decompose, and extract zero modes for
/// the scenario's Stratonovich operator (or the Ito variant).
pub fn spectral_run(scenario: &Scenario, ito: bool) -> Result<SpectralRun> {
    let t0 = Instant::now();
    let set = scenario.assemble(scenario.resolution(), false)?;
    let assemble_seconds = t0.elapsed().as_secs_f64();
    let invariants = invariant_suite(&set)?;
    if !invariants.pass {
        return Err(FlowError::InvariantFailed {
            name: "suite".into(),
            detail: format!("{invariants:?}"),
        });
    }
    let t1 = Instant::now();
    let h = if ito { &set.h_ito } else { &set.h_strat };
    let mut spectrum = eigendecompose(h, true)?;
    let eig_seconds = t1.elapsed().as_secs_f64();
    let conjugation_residual = conjugation_pairing(&spectrum);
    if conjugation_residual >= 1e-8 * spectrum.op_norm {
        return Err(FlowError::InvariantFailed {
            name: "conjugation-closure".into(),
            detail: format!("residual {conjugation_residual:.3e}"),
        });
    }
    let convergence = if scenario.converge {
        let fine_res = scenario.resolution() + scenario.refine_step;
        let fine_set = scenario.assemble(fine_res, false)?;
        let fine_h = if ito { &fine_set.h_ito } else { &fine_set.h_strat };
        let fine = eigendecompose(fine_h, false)?;
        mark_convergence(&mut spectrum, &fine, 1e-6);
        let delta = refinement_delta(&spectrum, &fine, 20);
        Some((scenario.resolution(), fine_res, delta))
    } else {
        None
    };
    let zm = zero_modes(&spectrum, &set.d)?;
    Ok(SpectralRun {
        set,
        spectrum,
        zero_modes: zm,
        invariants,
        conjugation_residual,
        convergence,
        assemble_seconds,
        eig_seconds,
    })
}

pub struct FullReport {
    pub run: SpectralRun,
    pub susy: SusyReport,
    pub te: Option<TeState>,
    pub determinants: Vec<(f64, Complex64, Complex64)>,
}

pub fn full_report(scenario: &Scenario) -> Result<FullReport> {
    let run = spectral_run(scenario, false)?;
    let susy = susy::analyze(&run.spectrum, &run.zero_modes, &run.set.basis, &scenario.t_grid)?;
    let te = susy::te_state_density(&run.spectrum, &run.zero_modes, &run.set.basis).ok();
    let mut determinants = Vec::new();
    for &zv in &[0.25, 0.5, 0.75] {
        let rep = susy::sharp_counting_determinants(
            &run.spectrum,
            &run.zero_modes,
            Complex64::new(zv, 0.0),
            1.0,
        )?;
        determinants.push((zv, rep.sharp, rep.counting));
    }
    Ok(FullReport {
        run,
        susy,
        te,
        determinants,
    })
}

/// Temperature sweep: per-T full spectral analysis at the scenario's
/// resolution; convergence pairs per point when requested.
pub fn sweep(scenario: &Scenario) -> Result<susy::SweepTable> {
    if scenario.t_list.len() < 2 {
        return Err(cfg_err("sweep needs run.t_list with at least two temperatures"));
    }
    susy::temperature_sweep(&scenario.t_list, |t| {
        let mut s = scenario.clone();
        s.temperature = t;
        let run = spectral_run(&s, false)?;
        let report = susy::analyze(&run.spectrum, &run.zero_modes, &run.set.basis, &s.t_grid)?;
        let converged = run
            .convergence
            .map(|(_, _, delta)| delta < 1e-6)
            .unwrap_or(true);
        Ok((report, converged))
    })
}

pub struct McComparison {
    pub integrator: Integrator,
    pub histogram: DensityHistogram,
    pub l1_strat: f64,
    pub l1_ito: f64,
}

/// Run the configured integrators and compare against both spectral TE
/// densities (pairing contract: Heun ↔ H_strat, Euler–Maruyama ↔ H_ito).
pub fn mc_compare(scenario: &Scenario) -> Result<Vec<McComparison>> {
    let flow = scenario.build_flow()?;
    let vielbein = scenario.build_vielbein();
    let basis = scenario.build_basis(scenario.resolution())?;
    let set = OperatorSet::assemble_torus(
        basis.clone(),
        &flow,
        &vielbein,
        scenario.temperature,
        false,
    )?;
    let spec_s = eigendecompose(&set.h_strat, true)?;
    let zm_s = zero_modes(&spec_s, &set.d)?;
    let te_s = susy::te_state_density(&spec_s, &zm_s, &basis)?;
    let spec_i = eigendecompose(&set.h_ito, true)?;
    let zm_i = zero_modes(&spec_i, &set.d)?;
    let te_i = susy::te_state_density(&spec_i, &zm_i, &basis)?;

    let integrators: Vec<Integrator> = match scenario.mc_integrator.as_str() {
        "heun" => vec![Integrator::Heun],
        "euler-maruyama" => vec![Integrator::EulerMaruyama],
        "both" => vec![Integrator::Heun, Integrator::EulerMaruyama],
        other => return Err(cfg_err(format!("mc.integrator `{other}` unknown"))),
    };
    let burn_in = if scenario.mc_burn_in == 0 {
        ((10.0 / (scenario.temperature * scenario.mc_step)).ceil() as usize).max(200_000)
    } else {
        scenario.mc_burn_in
    };
    let mut out = Vec::new();
    for integrator in integrators {
        let run = McRun {
            integrator,
            step: scenario.mc_step,
            burn_in_steps: burn_in,
            sample_stride: scenario.mc_stride,
            samples: scenario.mc_samples,
            trajectories: scenario.mc_trajectories,
            seed: scenario.seed,
            bins_per_dim: scenario.mc_bins,
        };
        let histogram = mc::integrate(&run, &flow, &vielbein, scenario.temperature)?;
        let l1_strat = mc::compare_density(&histogram, &basis, &te_s.form)?;
        let l1_ito = mc::compare_density(&histogram, &basis, &te_i.form)?;
        out.push(McComparison {
            integrator,
            histogram,
            l1_strat,
            l1_ito,
        });
    }
    Ok(out)
}

pub struct DetTraceReport {
    pub fixed_points: Vec<FlowFixedPoint>,
    pub lefschetz: i64,
    pub lefschetz_per_time: Vec<(f64, f64)>,
    pub z_trace: f64,
    pub z_time: f64,
}

/// Fixed points, the Lefschetz suite over det.t_list, and the
/// counting-weight trace at det.z_time.
pub fn det_trace(scenario: &Scenario) -> Result<DetTraceReport> {
    match &scenario.manifold {
        ManifoldSpec::Sphere => {
            let rep = sphere_lefschetz(&scenario.det_t_list, scenario.det_seeds_per_dim)?;
            // z-trace over both charts
            let mut z = 0.0;
            let mut fps_all = Vec::new();
            for chart in crate::transfer::sphere_height_charts() {
                let fps: Vec<FlowFixedPoint> =
                    find_fixed_points(&chart, scenario.det_z_time, scenario.det_seeds_per_dim, 1.3)?
                        .into_iter()
                        .filter(|fp| {
                            fp.location.iter().map(|v| v * v).sum::<f64>().sqrt() < 1.0
                        })
                        .collect();
                z += weighted_trace(&fps, Weight::Z)?.value;
                fps_all.extend(fps);
            }
            Ok(DetTraceReport {
                fixed_points: fps_all,
                lefschetz: rep.integer_value,
                lefschetz_per_time: rep.per_time,
                z_trace: z,
                z_time: scenario.det_z_time,
            })
        }
        ManifoldSpec::Torus { .. } => {
            let flow = scenario.build_flow()?;
            let rep = lefschetz_time_independence(
                &flow,
                &scenario.det_t_list,
                scenario.det_seeds_per_dim,
                0.0,
            )?;
            let fps = find_fixed_points(
                &flow,
                scenario.det_z_time,
                scenario.det_seeds_per_dim,
                0.0,
            )?;
            let z = weighted_trace(&fps, Weight::Z)?.value;
            Ok(DetTraceReport {
                fixed_points: fps,
                lefschetz: rep.integer_value,
                lefschetz_per_time: rep.per_time,
                z_trace: z,
                z_time: scenario.det_z_time,
            })
        }
        ManifoldSpec::Line { .. } => Err(cfg_err("det-trace supports torus and sphere presets")),
    }
}

// ---------------------------------------------------------------------
// artifact emission
// ---------------------------------------------------------------------

pub fn write_eigenvalue_csv(path: &Path, run: &SpectralRun) -> Result<()> {
    let mut s = String::from("degree,re,im,is_zero_mode,converged\n");
    let q_idx: Vec<usize> = run
        .zero_modes
        .candidates
        .iter()
        .filter(|c| c.q_symmetric)
        .map(|c| c.pair_index)
        .collect();
    for (i, p) in run.spectrum.pairs.iter().enumerate() {
        let zero = q_idx.contains(&i);
        let converged = p.converged.unwrap_or(false);
        let _ = writeln!(
            s,
            "{},{:.16e},{:.16e},{},{}",
            p.degree,
            p.eigenvalue.re,
            p.eigenvalue.im,
            u8::from(zero),
            u8::from(converged)
        );
    }
    std::fs::write(path, s)?;
    Ok(())
}

pub fn write_sweep_csv(path: &Path, table: &susy::SweepTable) -> Result<()> {
    let mut s = String::from("T,witten_index,gamma_g,e_g,classification\n");
    for row in &table.rows {
        let _ = writeln!(
            s,
            "{},{},{:.16e},{:.16e},{}",
            row.temperature,
            row.report.witten_index,
            row.report.gamma_g,
            row.report.e_g,
            row.report.classification
        );
    }
    std::fs::write(path, s)?;
    Ok(())
}

pub fn write_histogram_csv(path: &Path, hist: &DensityHistogram) -> Result<()> {
    let mut header: Vec<String> = (1..=hist.dim).map(|i| format!("bin_center_{i}")).collect();
    header.push("density".into());
    let mut s = header.join(",");
    s.push('\n');
    for b in 0..hist.num_bins() {
        let x = hist.bin_center(b);
        for xi in &x {
            let _ = write!(s, "{xi:.12e},");
        }
        let _ = writeln!(s, "{:.12e}", hist.density[b]);
    }
    std::fs::write(path, s)?;
    Ok(())
}

pub fn write_fixed_points_csv(path: &Path, report: &DetTraceReport, dim: usize) -> Result<()> {
    let mut header: Vec<String> = (1..=dim).map(|i| format!("x{i}")).collect();
    header.extend(["sign".into(), "abs_det".into(), "weight_contribution".into()]);
    let mut s = header.join(",");
    s.push('\n');
    for fp in &report.fixed_points {
        let minv = crate::fields::inv_small(&fp.jacobian_mt);
        let d = minv.len();
        let mut one_minus = minv.clone();
        for i in 0..d {
            for j in 0..d {
                one_minus[i][j] = (if i == j { 1.0 } else { 0.0 }) - minv[i][j];
            }
        }
        let det = crate::fields::det_small(&one_minus);
        for xi in &fp.location {
            let _ = write!(s, "{xi:.12e},");
        }
        let _ = writeln!(
            s,
            "{},{:.12e},{:.12e}",
            if det >= 0.0 { 1 } else { -1 },
            det.abs(),
            det.signum()
        );
    }
    std::fs::write(path, s)?;
    Ok(())
}

pub fn render_report(scenario: &Scenario, report: &FullReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# formflow run report");
    let _ = writeln!(
        s,
        "timestamp = {:?}",
        std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0)
    );
    let _ = writeln!(s, "\n[scenario]");
    let _ = writeln!(s, "{}", scenario.echo());
    let _ = writeln!(s, "t_grid = {:?}", scenario.t_grid);
    let inv = &report.run.invariants;
    let _ = writeln!(s, "\n[invariants]");
    let _ = writeln!(s, "d_squared_max = {:.3e}", inv.d_squared_max);
    let _ = writeln!(s, "susy_residual_rel = {:.3e}", inv.susy_residual_rel);
    let _ = writeln!(s, "reality_residual = {:.3e}", inv.reality_residual);
    let _ = writeln!(
        s,
        "conjugation_residual_rel = {:.3e}",
        report.run.conjugation_residual / report.run.spectrum.op_norm
    );
    let _ = writeln!(s, "pass = {}", inv.pass);
    let r = &report.susy;
    let _ = writeln!(s, "\n[susy]");
    let _ = writeln!(s, "witten_index = {}", r.witten_index);
    let counts: Vec<String> = r.zero_mode_counts.iter().map(|c| c.to_string()).collect();
    let _ = writeln!(s, "zero_mode_counts = {}", counts.join(","));
    let _ = writeln!(s, "gamma_g = {:.12e}", r.gamma_g);
    let _ = writeln!(s, "e_g = {:.12e}", r.e_g);
    let _ = writeln!(s, "ground_degree = {}", r.ground_degree);
    let _ = writeln!(s, "classification = {}", r.classification);
    let _ = writeln!(s, "eta_t_broken = {}", r.eta_t_broken);
    let _ = writeln!(s, "bf_pairing_residual = {:.3e}", r.bf_pairing_residual);
    let _ = writeln!(s, "bf_unmatched = {}", r.bf_unmatched);
    let _ = writeln!(s, "supertrace_drift = {:.3e}", r.supertrace_drift);
    let _ = writeln!(s, "threshold = {:.3e}", r.threshold);
    let _ = writeln!(s, "ambiguous_gap = {}", r.ambiguous_gap);
    let _ = writeln!(s, "\n[convergence]");
    match report.run.convergence {
        Some((lo, hi, delta)) => {
            let _ = writeln!(s, "resolution_pair = {lo},{hi}");
            let _ = writeln!(s, "low_lying_delta = {delta:.3e}");
            let _ = writeln!(s, "converged = {}", delta < 1e-6);
        }
        None => {
            let _ = writeln!(s, "resolution_pair = none");
            let _ = writeln!(s, "converged = unconverged (single-resolution run)");
        }
    }
    let _ = writeln!(s, "\n[determinants] (t = 1)");
    for (z, sharp, counting) in &report.determinants {
        let _ = writeln!(
            s,
            "z = {z}: sharp = {:.9e}{:+.3e}i, counting = {:.9e}{:+.3e}i",
            sharp.re, sharp.im, counting.re, counting.im
        );
    }
    if let Some(te) = &report.te {
        let _ = writeln!(s, "\n[te_state]");
        let _ = writeln!(s, "min_density = {:.6e}", te.min_density);
        let _ = writeln!(s, "max_density = {:.6e}", te.max_density);
    }
    let _ = writeln!(s, "\n[timing]");
    let _ = writeln!(s, "assemble_s = {:.3}", report.run.assemble_seconds);
    let _ = writeln!(s, "eig_s = {:.3}", report.run.eig_seconds);
    s
}
