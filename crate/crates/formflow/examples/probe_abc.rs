use formflow::scenario::{full_report, parse_scenario};
use formflow::spectra::eigendecompose;
use formflow::susy::{gamma_gap, lnz_slope, select_ground_state};
use std::time::Instant;

fn main() {
    for n_cut in [3usize, 4] {
        let t0 = Instant::now();
        let s = parse_scenario(&format!(
            "[manifold]\nkind = \"torus\"\ndim = 3\nn_cut = {n_cut}\n[flow]\npreset = \"abc\"\n[run]\ntemperature = 0.2\n"
        ))
        .unwrap();
        let rep = full_report(&s).unwrap();
        println!(
            "N={} : W={} counts={:?} Γ_g={:.6} E_g={:.6} class={} drift={:.2e} bf_unmatched={} ({:?})",
            n_cut,
            rep.susy.witten_index,
            rep.susy.zero_mode_counts,
            rep.susy.gamma_g,
            rep.susy.e_g,
            rep.susy.classification,
            rep.susy.supertrace_drift,
            rep.susy.bf_unmatched,
            t0.elapsed()
        );
        // lnZ slope over the asymptotic window
        let set = s.assemble(n_cut, false).unwrap();
        let spec = eigendecompose(&set.h_strat, false).unwrap();
        let gap = gamma_gap(&spec);
        let (gi, _) = select_ground_state(&spec);
        let gamma_g = spec.pairs[gi].gamma();
        if gamma_g < -1e-6 {
            let slope = lnz_slope(&spec, 5.0 / gap, 20.0 / gap, 9);
            println!("   Γ_gap={:.4}: lnZ slope={:.6} vs |Γ_g|={:.6} (rel err {:.4})",
                gap, slope, gamma_g.abs(), (slope - gamma_g.abs()).abs() / gamma_g.abs());
        }
    }
}
