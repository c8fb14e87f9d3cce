use formflow::basis::{FormBasis, Manifold, KFormVector, integral};
use formflow::fields::{TrigPoly, VectorField, Vielbein};
use formflow::mc::{compare_density, integrate, Integrator, McRun};
use formflow::operators::OperatorSet;
use formflow::spectra::{eigendecompose, zero_modes};
use formflow::susy::te_state_density;
use std::sync::Arc;
use std::time::Instant;

fn main() {
    let temp = 0.3;
    // F = sin x cos x, e = 1 + 0.5 sin x
    let f = VectorField::new(vec![TrigPoly::real_sin(1, 0, 2, 0.5)]);
    let e = Vielbein::diagonal(vec![
        TrigPoly::constant(1, 1.0).add(&TrigPoly::real_sin(1, 0, 1, 0.5)),
    ]);
    let b = Arc::new(FormBasis::make(Manifold::Torus { dim: 1, n_cut: 24 }).unwrap());
    let set = OperatorSet::assemble_torus(b.clone(), &f, &e, temp, false).unwrap();

    // closed forms: G(u) = 4 ln(1+u/2) + 4/(1+u/2), p ∝ e^{G/T}/e^k
    let g = |x: f64| {
        let s = 1.0 + 0.5 * x.sin();
        4.0 * s.ln() + 4.0 / s
    };
    let closed = |k: i32| {
        let z: f64 = (0..40000).map(|i| {
            let x = std::f64::consts::TAU * i as f64 / 40000.0;
            (g(x) / temp).exp() / (1.0 + 0.5 * x.sin()).powi(k)
        }).sum::<f64>() * std::f64::consts::TAU / 40000.0;
        move |x: f64| (g(x) / temp).exp() / (1.0 + 0.5 * x.sin()).powi(k) / z
    };
    let p_strat = closed(1);
    let p_ito = closed(2);

    for (name, h) in [("strat", &set.h_strat), ("ito", &set.h_ito)] {
        let spec = eigendecompose(h, true).unwrap();
        let zm = zero_modes(&spec, &set.d).unwrap();
        let te = te_state_density(&spec, &zm, &b).unwrap();
        let mut worst = 0.0f64;
        for i in 0..17 {
            let x = std::f64::consts::TAU * i as f64 / 17.0;
            let got = formflow::basis::eval_density(&b, &te.form, &[x]).unwrap();
            let want = if name == "strat" { p_strat(x) } else { p_ito(x) };
            worst = worst.max((got - want).abs());
        }
        println!("{name}: counts={:?} te_min={:.2e} closed-form max err = {:.3e}", zm.counts, te.min_density, worst);
    }

    // MC both integrators
    let t0 = Instant::now();
    let spec_s = eigendecompose(&set.h_strat, true).unwrap();
    let zm_s = zero_modes(&spec_s, &set.d).unwrap();
    let te_s = te_state_density(&spec_s, &zm_s, &b).unwrap();
    let spec_i = eigendecompose(&set.h_ito, true).unwrap();
    let zm_i = zero_modes(&spec_i, &set.d).unwrap();
    let te_i = te_state_density(&spec_i, &zm_i, &b).unwrap();

    for integ in [Integrator::Heun, Integrator::EulerMaruyama] {
        let run = McRun::defaults(integ, 4242);
        let hist = integrate(&run, &f, &e, temp).unwrap();
        let l1_s = compare_density(&hist, &b, &te_s.form).unwrap();
        let l1_i = compare_density(&hist, &b, &te_i.form).unwrap();
        println!("{integ}: L1 vs strat = {:.4}, L1 vs ito = {:.4}  ({} samples, {:?})", l1_s, l1_i, hist.total, t0.elapsed());
    }
}
