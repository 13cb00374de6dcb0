//! Second scratch probe: TV norm variants, smoothing, equivalence, robustness.

use nalgebra::{DMatrix, DVector};
use pbsmc_core::bench_arm::*;
use pbsmc_core::controllers::*;
use pbsmc_core::potentials::Potential;
use pbsmc_core::robustness::*;
use pbsmc_core::sim::*;
use pbsmc_core::sliding::SlidingMap;
use std::sync::Arc;

fn tv_norms(trace: &Trace) -> (f64, f64, f64) {
    let (mut l1, mut l2, mut linf) = (0.0, 0.0, 0.0);
    for w in trace.samples.windows(2) {
        let du = &w[1].u - &w[0].u;
        l1 += du.abs().sum();
        l2 += du.norm();
        linf += du.amax();
    }
    (l1, l2, linf)
}

fn main() {
    let params = ArmParams::default();
    let scenarios = paper_scenarios(params).unwrap();

    // TV norm variants computed on recorded samples (stride 10)
    for scn in &scenarios[..2] {
        let trace = simulate(scn).unwrap();
        let (l1, l2, linf) = tv_norms(&trace);
        println!("{}: recorded TV l1 {l1:.2} l2 {l2:.2} linf {linf:.2}; full-res l1 {:.2}", scn.name, trace.input_total_variation);
    }

    // smoothed r = 1
    {
        let mut scn = scenarios[1].clone();
        let map = SlidingMap::linear(paper_sliding_matrix(), DMatrix::identity(2, 2));
        let pot = Potential::norm_power(2.0, 1.0, 1.0)
            .unwrap()
            .with_smoothing(0.05)
            .unwrap();
        let model = Arc::clone(scn.controller.model());
        scn.controller =
            Controller::pbsmc_track(model, map, pot, circle_trajectory(params).unwrap());
        scn.name = "track_r1_smoothed".into();
        let trace = simulate(&scn).unwrap();
        println!(
            "smoothed r1: TV {:.3} max dH rel {:e} entry {:?}",
            trace.input_total_variation,
            trace.max_step_energy_increase_rel,
            trace.sliding_entry
        );
    }

    // closed-loop equivalence for the three modes over 1 s at h = 1e-4
    let model = Arc::new(arm_model(params));
    let h = 1e-4;
    let n = 10_000;

    // - stabilize, smooth potential
    {
        let map = SlidingMap::linear(paper_sliding_matrix(), DMatrix::identity(2, 2));
        let pot = Potential::norm_power(2.0, 1.9, 2.0).unwrap();
        let ctl = Controller::pbsmc_stabilize(Arc::clone(&model), map.clone(), pot.clone());
        let mut scn = Scenario::new("eq", ctl, DVector::from_vec(vec![0.6, -0.4]), DVector::from_vec(vec![0.2, 0.1]), 1.0);
        scn.record_stride = 1;
        let trace = simulate(&scn).unwrap();

        let mut q = DVector::from_vec(vec![0.6, -0.4]);
        let mut eta = model
            .eta_from_momentum(&q, &DVector::from_vec(vec![0.2, 0.1]))
            .unwrap();
        let mut sup: f64 = 0.0;
        for k in 0..=n {
            let s = &trace.samples[k];
            let eta_plant = model.eta_from_momentum(&s.q, &s.p).unwrap();
            sup = sup.max((&s.q - &q).amax().max((eta_plant - &eta).amax()));
            if k == n {
                break;
            }
            let f = |q: &DVector<f64>, e: &DVector<f64>| {
                stabilize_closed_loop(&model, &map, &pot, q, e).unwrap()
            };
            let (k1q, k1e) = f(&q, &eta);
            let (k2q, k2e) = f(&(&q + &k1q * (h / 2.0)), &(&eta + &k1e * (h / 2.0)));
            let (k3q, k3e) = f(&(&q + &k2q * (h / 2.0)), &(&eta + &k2e * (h / 2.0)));
            let (k4q, k4e) = f(&(&q + &k3q * h), &(&eta + &k3e * h));
            q += (k1q + k2q * 2.0 + k3q * 2.0 + k4q) * (h / 6.0);
            eta += (k1e + k2e * 2.0 + k3e * 2.0 + k4e) * (h / 6.0);
        }
        println!("equivalence stabilize sup = {sup:e}");
    }

    // - kpes, quadratic potential
    {
        let map = SlidingMap::linear(paper_sliding_matrix(), DMatrix::identity(2, 2));
        let pot = Potential::custom(
            Arc::new(|s: &DVector<f64>| 0.5 * s.norm_squared()),
            Arc::new(|s: &DVector<f64>| s.clone()),
        );
        let dd = DampingInjection::ScaledIdentity(1.5);
        let ctl = Controller::kpes(Arc::clone(&model), map.clone(), pot.clone(), dd.clone());
        let mut scn = Scenario::new("eq", ctl, DVector::from_vec(vec![0.6, -0.4]), DVector::from_vec(vec![0.2, 0.1]), 1.0);
        scn.record_stride = 1;
        let trace = simulate(&scn).unwrap();

        let mut q = DVector::from_vec(vec![0.6, -0.4]);
        let mut eta = model
            .eta_from_momentum(&q, &DVector::from_vec(vec![0.2, 0.1]))
            .unwrap();
        let mut sup: f64 = 0.0;
        for k in 0..=n {
            let s = &trace.samples[k];
            let eta_plant = model.eta_from_momentum(&s.q, &s.p).unwrap();
            sup = sup.max((&s.q - &q).amax().max((eta_plant - &eta).amax()));
            if k == n {
                break;
            }
            let f = |q: &DVector<f64>, e: &DVector<f64>| {
                kpes_closed_loop(&model, &map, &pot, &dd, q, e).unwrap()
            };
            let (k1q, k1e) = f(&q, &eta);
            let (k2q, k2e) = f(&(&q + &k1q * (h / 2.0)), &(&eta + &k1e * (h / 2.0)));
            let (k3q, k3e) = f(&(&q + &k2q * (h / 2.0)), &(&eta + &k2e * (h / 2.0)));
            let (k4q, k4e) = f(&(&q + &k3q * h), &(&eta + &k3e * h));
            q += (k1q + k2q * 2.0 + k3q * 2.0 + k4q) * (h / 6.0);
            eta += (k1e + k2e * 2.0 + k3e * 2.0 + k4e) * (h / 6.0);
        }
        println!("equivalence kpes sup = {sup:e}");
    }

    // - tracking, smooth potential, error coordinates
    {
        let map = SlidingMap::linear(paper_sliding_matrix(), DMatrix::identity(2, 2));
        let pot = Potential::norm_power(2.0, 1.9, 2.0).unwrap();
        let traj = circle_trajectory(params).unwrap();
        let ctl = Controller::pbsmc_track(
            Arc::clone(&model),
            map.clone(),
            pot.clone(),
            traj.clone(),
        );
        let mut scn = Scenario::new("eq", ctl, DVector::zeros(2), DVector::zeros(2), 1.0);
        scn.record_stride = 1;
        let trace = simulate(&scn).unwrap();

        // initial error coordinates
        let q0 = DVector::zeros(2);
        let (eta_d0, _) = desired_momentum(&model, &traj, &q0, 0.0).unwrap();
        let mut qe = &q0 - traj.position(0.0);
        let mut ee = -eta_d0;
        let mut sup: f64 = 0.0;
        for k in 0..=n {
            let t = k as f64 * h;
            let s = &trace.samples[k];
            let eta_plant = model.eta_from_momentum(&s.q, &s.p).unwrap();
            let (eta_d, _) = desired_momentum(&model, &traj, &s.q, t).unwrap();
            let qe_plant = &s.q - traj.position(t);
            let ee_plant = eta_plant - eta_d;
            sup = sup.max((&qe_plant - &qe).amax().max((&ee_plant - &ee).amax()));
            if k == n {
                break;
            }
            let f = |qe: &DVector<f64>, ee: &DVector<f64>, t: f64| {
                tracking_closed_loop(&model, &map, &pot, &traj, qe, ee, t).unwrap()
            };
            let (k1q, k1e) = f(&qe, &ee, t);
            let (k2q, k2e) = f(&(&qe + &k1q * (h / 2.0)), &(&ee + &k1e * (h / 2.0)), t + h / 2.0);
            let (k3q, k3e) = f(&(&qe + &k2q * (h / 2.0)), &(&ee + &k2e * (h / 2.0)), t + h / 2.0);
            let (k4q, k4e) = f(&(&qe + &k3q * h), &(&ee + &k3e * h), t + h);
            qe += (k1q + k2q * 2.0 + k3q * 2.0 + k4q) * (h / 6.0);
            ee += (k1e + k2e * 2.0 + k3e * 2.0 + k4e) * (h / 6.0);
        }
        println!("equivalence tracking sup = {sup:e}");
    }

    // robustness membership over time
    {
        let matched = &scenarios[2];
        let trace = simulate(matched).unwrap();
        let map = SlidingMap::affine_linear(paper_sliding_matrix());
        let pot = Potential::norm_power(2.0, 1.0, 1.0).unwrap();
        let entry = trace.sliding_entry.unwrap();
        let mut min_margin = f64::INFINITY;
        let mut max_b2_post = f64::NEG_INFINITY;
        let mut b2_at = vec![];
        for s in &trace.samples {
            let d_um = s.d_um.clone().unwrap();
            let d_m = s.d_m.clone().unwrap();
            if s.sigma.amax() > 0.05 {
                let m =
                    condition36_margin(&model, &map, &pot, &s.q, &s.eta, &d_um, &d_m).unwrap();
                min_margin = min_margin.min(m);
            }
            if s.t >= entry {
                let r = b2_residual(&model, &map, &s.q, &s.eta, &d_um, 0.05).unwrap();
                if r.is_finite() {
                    max_b2_post = max_b2_post.max(r);
                }
                if (s.t - entry) < 0.2 || s.t > 9.0 {
                    if b2_at.len() < 12 {
                        b2_at.push((s.t, r));
                    }
                }
            }
        }
        println!("matched: entry {entry} min margin(off-surface) {min_margin:.4} max b2 post {max_b2_post:.4e}");
        println!("  b2 samples {:?}", &b2_at[..b2_at.len().min(8)]);
    }
    {
        let mixed = &scenarios[3];
        let trace = simulate(mixed).unwrap();
        let map = SlidingMap::affine_linear(paper_sliding_matrix());
        let pot = Potential::norm_power(2.0, 1.3, 2.0).unwrap();
        for window in [2.0, 3.0, 4.0, 5.0] {
            let mut max_b1 = f64::NEG_INFINITY;
            for s in trace.samples.iter().filter(|s| s.t >= window) {
                let d_um = s.d_um.clone().unwrap();
                let d_m = s.d_m.clone().unwrap();
                let r = b1_residual(&model, &map, &pot, &s.q, &s.eta, &d_um, &d_m).unwrap();
                max_b1 = max_b1.max(r);
            }
            println!("mixed: max b1 residual beyond t = {window}: {max_b1:.4}");
        }
    }
}
