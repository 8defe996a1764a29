use num_complex::Complex64 as C64;
use proptest::prelude::*;

use photon_readout::dynamics::simulate;
use photon_readout::efficiency::{efficiency_report, retrieval_efficiency};
use photon_readout::homodyne::{homodyne_signal, matched_filter, optimize_lo_frequency, phase_profile};
use photon_readout::{mhz_to_rad_per_ns, PhysicalParams, Pulse, TimeGrid, Trajectory};

fn point(delta_big: f64, delta: f64, omega: f64) -> (PhysicalParams, Pulse, TimeGrid) {
    let params = PhysicalParams::from_cooperativity_mhz(9.0, 3.0, 100.0, delta_big, delta).unwrap();
    let pulse = Pulse::gaussian_mhz(omega, 150.0, 0.0).unwrap();
    let grid = TimeGrid::for_pulse(&params, &pulse);
    (params, pulse, grid)
}

fn run(delta_big: f64, delta: f64, omega: f64) -> Trajectory {
    let (p, q, g) = point(delta_big, delta, omega);
    simulate(&p, &q, &g).unwrap().0
}

fn with_field(traj: &Trajectory, e: Vec<C64>, times: Vec<f64>) -> Trajectory {
    Trajectory::new(times, e, traj.p.clone(), traj.s.clone(), traj.params, traj.pulse).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn mirrored_detunings_conjugate_the_solution(
        delta_big in -300.0f64..300.0,
        delta in -40.0f64..40.0,
        omega in 5.0f64..100.0,
    ) {
        let (p, q, g) = point(delta_big, delta, omega);
        let a = simulate(&p, &q, &g).unwrap().0;
        let b = simulate(&p.mirrored(), &q, &g).unwrap().0;
        prop_assert_eq!(a.len(), b.len());
        for j in 0..a.len() {
            prop_assert!((a.e[j] - b.e[j].conj()).norm() < 1e-8);
            prop_assert!((a.p[j] + b.p[j].conj()).norm() < 1e-8);
            prop_assert!((a.s[j] - b.s[j].conj()).norm() < 1e-8);
        }
    }

    #[test]
    fn balance_bound_and_polarization_inequality(
        delta_big in -300.0f64..300.0,
        delta in -40.0f64..40.0,
        omega in 1.0f64..100.0,
    ) {
        let traj = run(delta_big, delta, omega);
        let rep = efficiency_report(&traj).unwrap();
        prop_assert!(rep.balance_residual < 1e-6, "balance {:e}", rep.balance_residual);
        prop_assert!(rep.eta <= rep.bound + 1e-6);
        let c = traj.params.cooperativity();
        prop_assert!(rep.polarization_loss >= rep.eta / c - 1e-8);
        let norm = traj.norm();
        prop_assert!(norm.iter().all(|&n| n <= 1.0 + 1e-9));
        prop_assert!(norm.windows(2).all(|w| w[1] <= w[0] + 1e-12));
    }

    #[test]
    fn homodyne_signal_never_exceeds_eta(
        delta_big in -300.0f64..300.0,
        delta in -40.0f64..40.0,
        omega in 5.0f64..100.0,
        phi in 0.0f64..std::f64::consts::TAU,
    ) {
        let traj = run(delta_big, delta, omega);
        let filter = matched_filter(&traj).unwrap();
        for k in -100..=100 {
            let i0 = homodyne_signal(&traj, &filter, mhz_to_rad_per_ns(k as f64 * 0.5)).unwrap();
            prop_assert!(i0 <= filter.eta + 1e-9);
        }
        let h = optimize_lo_frequency(&traj).unwrap();
        prop_assert!(h.chi >= 0.0 && h.chi <= 1.0 + 1e-12);

        let rotated = with_field(&traj, traj.e.iter().map(|e| e * C64::from_polar(1.0, phi)).collect(), traj.times.clone());
        let r = optimize_lo_frequency(&rotated).unwrap();
        prop_assert!((r.chi - h.chi).abs() < 1e-10);
        prop_assert!((r.i0_max - h.i0_max).abs() < 1e-10);
    }

    #[test]
    fn time_shift_keeps_chi(shift in -500.0f64..500.0, delta_big in 50.0f64..300.0) {
        let traj = run(delta_big, 0.0, 40.0);
        let h = optimize_lo_frequency(&traj).unwrap();
        let moved = with_field(&traj, traj.e.clone(), traj.times.iter().map(|t| t + shift).collect());
        let m = optimize_lo_frequency(&moved).unwrap();
        prop_assert!((m.chi - h.chi).abs() < 1e-9);
        prop_assert!((m.omega_opt - h.omega_opt).abs() < mhz_to_rad_per_ns(1e-3));
        let a = phase_profile(&traj, h.omega_opt).unwrap();
        let b = phase_profile(&moved, h.omega_opt).unwrap();
        let expected = h.omega_opt * shift;
        let diff = (b.phi0 - a.phi0 + expected).rem_euclid(std::f64::consts::TAU);
        prop_assert!(diff.min(std::f64::consts::TAU - diff) < 1e-6, "{}", diff);
    }
}

#[test]
fn efficiency_converged_in_sampling() {
    for (d, om) in [(0.0, 80.0), (120.0, 13.0), (300.0, 80.0)] {
        let (p, q, g) = point(d, 0.0, om);
        let coarse = retrieval_efficiency(&simulate(&p, &q, &g).unwrap().0).unwrap();
        let fine = retrieval_efficiency(&simulate(&p, &q, &g.with_dt_out(g.dt_out / 2.0)).unwrap().0).unwrap();
        assert!((coarse - fine).abs() < 1e-8, "{d} {om}: {:e}", coarse - fine);
    }
}

#[test]
fn initial_phase_multiplies_every_amplitude() {
    let (p, q, g) = point(120.0, 15.0, 40.0);
    let phase = C64::from_polar(1.0, 0.7);
    let zero = C64::new(0.0, 0.0);
    let a = simulate(&p, &q, &g).unwrap().0;
    let b = photon_readout::dynamics::simulate_from(&p, &q, &g, [zero, zero, phase]).unwrap().0;
    for j in 0..a.len().min(b.len()) {
        assert!((a.e[j] * phase - b.e[j]).norm() < 1e-8);
        assert!((a.p[j] * phase - b.p[j]).norm() < 1e-8);
        assert!((a.s[j] * phase - b.s[j]).norm() < 1e-8);
    }
}
