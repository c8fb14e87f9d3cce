//! Trajectory-level Monte Carlo for ẋ = F + (2T)^{1/2} e·ξ on the
//! torus, with the Euler–Maruyama (Ito) and Heun midpoint
//! (Stratonovich) integrators.  The stationary histograms arbitrate the
//! Ito–Stratonovich operator pair: Heun must reproduce the H_strat
//! equilibrium density and Euler–Maruyama the H_ito one.
//!
//! Reproducibility: one counter-based ChaCha stream per trajectory
//! (stream id = trajectory index), Gaussian increments by the Marsaglia
//! polar method, u64 bin counts merged by commutative addition — the
//! result is bitwise independent of the parallel schedule.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::basis::{eval_density, FormBasis, KFormVector};
use crate::error::{FlowError, Result};
use crate::fields::{VectorField, Vielbein};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Integrator {
    EulerMaruyama,
    Heun,
}

impl std::fmt::Display for Integrator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Integrator::EulerMaruyama => f.write_str("euler-maruyama"),
            Integrator::Heun => f.write_str("heun"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct McRun {
    pub integrator: Integrator,
    pub step: f64,
    pub burn_in_steps: usize,
    /// record every `sample_stride`-th step after burn-in
    pub sample_stride: usize,
    /// total recorded samples across all trajectories
    pub samples: usize,
    pub trajectories: usize,
    pub seed: u64,
    pub bins_per_dim: usize,
}

impl McRun {
    pub fn defaults(integrator: Integrator, seed: u64) -> Self {
        Self {
            integrator,
            step: 1e-3,
            burn_in_steps: 200_000,
            sample_stride: 20,
            samples: 1_000_000,
            trajectories: 40,
            seed,
            bins_per_dim: 64,
        }
    }

    /// step·Lip(F) < 0.1 and the burn-in floor burn_in ≥ 10/(T·step).
    pub fn validate(&self, flow: &VectorField, temperature: f64) -> Result<()> {
        if self.step <= 0.0 || temperature <= 0.0 {
            return Err(FlowError::InvalidParameter {
                name: "step/temperature".into(),
                reason: "must be positive".into(),
            });
        }
        let mut lip: f64 = 0.0;
        let samples = 32;
        for k in 0..samples {
            let x: Vec<f64> = (0..flow.dim())
                .map(|i| std::f64::consts::TAU * ((k * (i + 3)) % samples) as f64 / samples as f64)
                .collect();
            let j = flow.jacobian(&x);
            for row in &j {
                for v in row {
                    lip = lip.max(v.abs());
                }
            }
        }
        if self.step * lip >= 0.1 {
            return Err(FlowError::InvalidParameter {
                name: "step".into(),
                reason: format!("step·Lip(F) = {:.3} ≥ 0.1", self.step * lip),
            });
        }
        let floor = (10.0 / (temperature * self.step)).ceil() as usize;
        if self.burn_in_steps < floor {
            return Err(FlowError::InvalidParameter {
                name: "burn_in_steps".into(),
                reason: format!("below the 10/(T·step) floor = {floor}"),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct DensityHistogram {
    pub dim: usize,
    pub bins_per_dim: usize,
    pub counts: Vec<u64>,
    pub total: u64,
    /// counts / (total · bin volume): integrates to one
    pub density: Vec<f64>,
    pub bin_volume: f64,
}

impl DensityHistogram {
    fn from_counts(dim: usize, bins_per_dim: usize, counts: Vec<u64>) -> Self {
        let total: u64 = counts.iter().sum();
        let bin_volume = (std::f64::consts::TAU / bins_per_dim as f64).powi(dim as i32);
        let density = counts
            .iter()
            .map(|&c| c as f64 / (total as f64 * bin_volume))
            .collect();
        Self {
            dim,
            bins_per_dim,
            counts,
            total,
            density,
            bin_volume,
        }
    }

    pub fn bin_center(&self, flat: usize) -> Vec<f64> {
        let mut idx = flat;
        let mut x = Vec::with_capacity(self.dim);
        for _ in 0..self.dim {
            let k = idx % self.bins_per_dim;
            idx /= self.bins_per_dim;
            x.push(std::f64::consts::TAU * (k as f64 + 0.5) / self.bins_per_dim as f64);
        }
        x
    }

    pub fn num_bins(&self) -> usize {
        self.counts.len()
    }

    /// Σ_bins |p_mc − p|·binvolume against a density function.
    pub fn l1_against<F: Fn(&[f64]) -> f64>(&self, density: F) -> f64 {
        (0..self.num_bins())
            .map(|b| {
                let x = self.bin_center(b);
                (self.density[b] - density(&x)).abs() * self.bin_volume
            })
            .sum()
    }
}

/// Marsaglia polar method; one buffered deviate per stream.
struct PolarGauss {
    rng: ChaCha8Rng,
    spare: Option<f64>,
}

impl PolarGauss {
    fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { rng, spare: None }
    }

    fn next(&mut self) -> f64 {
        if let Some(v) = self.spare.take() {
            return v;
        }
        loop {
            let u: f64 = self.rng.gen_range(-1.0..1.0);
            let v: f64 = self.rng.gen_range(-1.0..1.0);
            let s = u * u + v * v;
            if s > 0.0 && s < 1.0 {
                let f = (-2.0 * s.ln() / s).sqrt();
                self.spare = Some(v * f);
                return u * f;
            }
        }
    }
}

/// Integrate the SDE and histogram the post-burn-in samples.
pub fn integrate(
    run: &McRun,
    flow: &VectorField,
    vielbein: &Vielbein,
    temperature: f64,
) -> Result<DensityHistogram> {
    run.validate(flow, temperature)?;
    vielbein.check_invertible()?;
    let dim = flow.dim();
    let bins = run.bins_per_dim.pow(dim as u32);
    let samples_per_traj = run.samples / run.trajectories;
    let noise_amp = (2.0 * temperature * run.step).sqrt();
    let bin_w = run.bins_per_dim as f64 / std::f64::consts::TAU;

    let per_traj: Vec<Result<Vec<u64>>> = (0..run.trajectories)
        .into_par_iter()
        .map(|traj| {
            let mut gauss = PolarGauss::new(run.seed, 1 + traj as u64);
            let mut counts = vec![0u64; bins];
            // deterministic spread of initial conditions
            let mut x: Vec<f64> = (0..dim)
                .map(|i| {
                    std::f64::consts::TAU
                        * (((traj as f64 + 0.5) / run.trajectories as f64) + 0.31 * i as f64)
                            .fract()
                })
                .collect();
            let mut xi = vec![0.0f64; dim];
            let total_steps = run.burn_in_steps + samples_per_traj * run.sample_stride;
            for step_idx in 0..total_steps {
                for s in xi.iter_mut() {
                    *s = gauss.next();
                }
                let f0 = flow.eval(&x);
                let e0 = vielbein.eval(&x);
                match run.integrator {
                    Integrator::EulerMaruyama => {
                        for i in 0..dim {
                            let mut dx = run.step * f0[i];
                            for a in 0..dim {
                                dx += noise_amp * e0[i][a] * xi[a];
                            }
                            x[i] = (x[i] + dx).rem_euclid(std::f64::consts::TAU);
                        }
                    }
                    Integrator::Heun => {
                        // predictor, then midpoint average of F and e
                        let mut xp = vec![0.0f64; dim];
                        for i in 0..dim {
                            let mut dx = run.step * f0[i];
                            for a in 0..dim {
                                dx += noise_amp * e0[i][a] * xi[a];
                            }
                            xp[i] = x[i] + dx;
                        }
                        let f1 = flow.eval(&xp);
                        let e1 = vielbein.eval(&xp);
                        for i in 0..dim {
                            let mut dx = 0.5 * run.step * (f0[i] + f1[i]);
                            for a in 0..dim {
                                dx += 0.5 * noise_amp * (e0[i][a] + e1[i][a]) * xi[a];
                            }
                            x[i] = (x[i] + dx).rem_euclid(std::f64::consts::TAU);
                        }
                    }
                }
                if x.iter().any(|v| !v.is_finite()) {
                    return Err(FlowError::NonFiniteState {
                        trajectory: traj,
                        step: step_idx,
                    });
                }
                if step_idx >= run.burn_in_steps
                    && (step_idx - run.burn_in_steps) % run.sample_stride == 0
                {
                    let mut flat = 0usize;
                    for i in (0..dim).rev() {
                        let b = ((x[i] * bin_w) as usize).min(run.bins_per_dim - 1);
                        flat = flat * run.bins_per_dim + b;
                    }
                    counts[flat] += 1;
                }
            }
            Ok(counts)
        })
        .collect();

    let mut counts = vec![0u64; bins];
    for c in per_traj {
        let c = c?;
        for (acc, v) in counts.iter_mut().zip(c.iter()) {
            *acc += v;
        }
    }
    Ok(DensityHistogram::from_counts(dim, run.bins_per_dim, counts))
}

/// L1 distance between a histogram and a normalized top-form density.
pub fn compare_density(
    hist: &DensityHistogram,
    basis: &FormBasis,
    form: &KFormVector,
) -> Result<f64> {
    if !basis.is_torus() || basis.dim() != hist.dim {
        return Err(FlowError::DomainMismatch(
            "histogram and spectral density live on different domains".into(),
        ));
    }
    let mut l1 = 0.0;
    for b in 0..hist.num_bins() {
        let x = hist.bin_center(b);
        let p = eval_density(basis, form, &x)?;
        l1 += (hist.density[b] - p).abs() * hist.bin_volume;
    }
    Ok(l1)
}
