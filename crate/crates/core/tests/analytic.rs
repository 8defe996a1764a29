use photon_readout::analytic::{
    analytic_at_times, beta_squared, delay_fit, magnitude_l2_distance, magnitude_relation_misfit, BetaVariant,
};
use photon_readout::{simulate, PhysicalParams, Pulse, TimeGrid, Trajectory};

fn run(c: f64, delta_big: f64, omega: f64, fwhm: f64) -> Trajectory {
    let params = PhysicalParams::from_cooperativity_mhz(9.0, 3.0, c, delta_big, 0.0).unwrap();
    let pulse = Pulse::gaussian_mhz(omega, fwhm, 0.0).unwrap();
    simulate(&params, &pulse, &TimeGrid::for_pulse(&params, &pulse)).unwrap().0
}

fn l2_to_closed_form(delta_big: f64) -> f64 {
    let num = run(200.0, delta_big, 80.0, 200.0);
    let conv = beta_squared(&num.params, BetaVariant::default_for(&num.pulse)).unwrap();
    let an = analytic_at_times(&num.params, &num.pulse, num.times.clone(), &conv).unwrap();
    magnitude_l2_distance(&num.e, &an.e)
}

#[test]
fn closed_form_tracks_numerics_on_resonance() {
    let d = l2_to_closed_form(0.0);
    assert!(d < 0.01, "{d}");
}

#[test]
fn closed_form_degrades_with_detuning() {
    let l2: Vec<f64> = [0.0, 100.0, 200.0, 300.0].iter().map(|&d| l2_to_closed_form(d)).collect();
    assert!(l2.windows(2).all(|w| w[1] > w[0]), "{l2:?}");
}

#[test]
fn long_pulse_delay_is_near_cavity_lifetime() {
    let traj = run(100.0, 0.0, 80.0, 1000.0);
    let fit = delay_fit(&traj).unwrap();
    let lifetime = 1.0 / traj.params.kappa;
    assert!((fit.delay - lifetime).abs() < 0.2 * lifetime, "{} vs {lifetime}", fit.delay);
    assert!(fit.residual < 0.1, "{}", fit.residual);
    assert!(magnitude_relation_misfit(&traj, fit.delay).unwrap() < 0.1);
}

#[test]
fn delay_law_is_worse_for_short_pulses() {
    let long = delay_fit(&run(100.0, 0.0, 80.0, 1000.0)).unwrap();
    let short = delay_fit(&run(100.0, 0.0, 80.0, 150.0)).unwrap();
    assert!(short.residual >= 3.0 * long.residual, "{} vs {}", short.residual, long.residual);
}
