//! Scratch measurement harness (not part of the test suite).

use pbsmc_core::bench_arm::{paper_scenarios, ArmParams};
use pbsmc_core::sim::{component_entry_times, detect_sliding, metrics, simulate};

fn main() {
    for scn in paper_scenarios(ArmParams::default()).unwrap() {
        let t0 = std::time::Instant::now();
        let trace = simulate(&scn).unwrap();
        let dt = t0.elapsed();
        let m = metrics(&trace, 0.05, 0.5);
        println!("=== {} ({:.2?})", scn.name, dt);
        println!("  samples: {}", trace.samples.len());
        println!("  sliding entry: {:?}", detect_sliding(&trace, 0.05, 0.5));
        println!("  component entries: {:?}", component_entry_times(&trace, 0.05, 0.5));
        println!("  max dH/step: {:e}  rel: {:e}", m.max_step_energy_increase, m.max_step_energy_increase_rel);
        println!("  input TV: {:.3}  peak |u|: {:.3}", m.input_total_variation, m.peak_input);
        println!("  terminal: |q_err| {:?}  |sigma| {:.3e}", m.terminal_tracking_error, m.terminal_sliding_norm);
        let s0 = &trace.samples[0];
        println!("  sigma(0) = {:?}  H(0) = {:.4}", s0.sigma.as_slice(), s0.energy);
        let last = trace.samples.last().unwrap();
        println!("  H(end) = {:.4e}  eta(end) = {:?}", last.energy, last.eta.as_slice());
        // where do per-step increases happen?
        let mut worst_t = 0.0;
        let mut worst = f64::NEG_INFINITY;
        for w in trace.samples.windows(2) {
            let inc = w[1].energy - w[0].energy;
            if inc > worst {
                worst = inc;
                worst_t = w[0].t;
            }
        }
        println!("  worst recorded-sample dH {:.3e} at t = {:.3}", worst, worst_t);
    }
}
