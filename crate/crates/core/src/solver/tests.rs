use super::*;
use crate::potential::{Envelope, Mode, Phase, Profile};
use crate::profiles::{Barenblatt, InitialData};

fn medium(gamma: f64, nu: f64) -> MediumParams {
    MediumParams::new(gamma, nu).unwrap()
}

fn sine_potential(amplitude: f64) -> PotentialSpec {
    PotentialSpec::single(Mode {
        amplitude,
        profile: Profile::Fourier { wavevector: vec![1], phases: vec![Phase::Sin] },
        envelope: Envelope::Constant,
    })
}

#[test]
fn constant_density_is_a_fixed_point() {
    let g = Grid::new_2d(16, 1.0).unwrap();
    let state = SimState::new(ScalarField::constant(g, 0.7), medium(4.0, 0.5), 0.0).unwrap();
    let (next, stats) = step(&state, &PotentialSpec::zero(), &SolverConfig::default(), 1e-2).unwrap();
    for &v in next.density().values() {
        assert!((v - 0.7).abs() < 1e-13);
    }
    assert!(stats.residual <= 1e-10);
    assert_eq!(next.step(), 1);
}

#[test]
fn mass_is_conserved_with_drift() {
    let g = Grid::new_1d(64, 1.0).unwrap();
    let params = medium(5.0, 0.0);
    let n0 = InitialData::CompactBump { center: vec![0.4], radius: 0.15, amplitude: 0.9 }.sample(&g, &params).unwrap();
    let times: Vec<f64> = (1..=10).map(|i| i as f64 * 0.01).collect();
    let out = run(n0, params, &sine_potential(0.3), &SolverConfig::default(), 0.1, &times, |s, _| {
        assert!(s.relative_mass_change() < 1e-12, "{}", s.relative_mass_change());
    })
    .unwrap();
    assert_eq!(out.samples.len(), 10);
    assert!(out.stats.relative_mass_drift() < 1e-11);
    assert!(out.stats.min_before_clamp >= -1e-12);
    for (s, &t) in out.samples.iter().zip(&times) {
        assert_eq!(s.t(), t);
    }
}

#[test]
fn stiff_exponent_converges() {
    let g = Grid::new_2d(32, 1.0).unwrap();
    let params = medium(80.0, 0.0);
    let n0 = InitialData::CompactBump { center: vec![0.5, 0.5], radius: 0.25, amplitude: 1.05 }
        .sample(&g, &params)
        .unwrap();
    let out = run(n0, params, &PotentialSpec::zero(), &SolverConfig::default(), 0.05, &[0.05], |_, _| {}).unwrap();
    let n = out.samples[0].density();
    assert!(n.max() < 1.02, "max density {}", n.max());
    assert!(out.stats.relative_mass_drift() < 1e-11);
}

#[test]
fn tracks_barenblatt_profile() {
    let gamma = 2.0;
    let g = Grid::new_1d(256, 2.0).unwrap();
    let params = medium(gamma, 0.0);
    let b = Barenblatt::new(1, gamma, 0.1).unwrap();
    let (t0, t1) = (0.05, 0.15);
    let exact = |t: f64| ScalarField::from_fn(g, |x| b.density(x[0] - 1.0, t));
    let cfg = SolverConfig { dt_initial: 1e-4, dt_max: 1e-4, ..SolverConfig::default() };
    let state = SimState::new(exact(t0), params, t0).unwrap();
    let out = run_from(state, &PotentialSpec::zero(), &cfg, t1, &[t1], |_, _| {}).unwrap();
    let num = out.samples[0].density();
    let err = num.zip_map(&exact(t1), |a, e| (a - e).abs()).unwrap();
    let rel = integrate(&err) / integrate(&exact(t1));
    assert!(rel < 2e-2, "relative L1 error {rel}");
}

#[test]
fn cfl_step_scales_with_gradient() {
    let g = Grid::new_1d(64, 1.0).unwrap();
    let cfg = SolverConfig::default();
    let state = SimState::new(ScalarField::constant(g, 0.5), medium(2.0, 0.0), 0.0).unwrap();
    assert_eq!(drift_cfl_dt(&state, &PotentialSpec::zero(), &cfg).unwrap(), cfg.dt_max);
    let big = drift_cfl_dt(&state, &sine_potential(100.0), &cfg).unwrap();
    // the largest |cos| on cell centres is cos(pi / 64)
    let max_grad = 200.0 * std::f64::consts::PI * (std::f64::consts::PI / 64.0).cos();
    let expected = 0.5 / 64.0 / (2.0 * max_grad);
    assert!((big - expected).abs() < 1e-3 * expected);
}

#[test]
fn seam_contact_is_reported() {
    let g = Grid::new_1d(32, 1.0).unwrap();
    let n0 = ScalarField::from_fn(g, |x| if x[0] < 0.1 { 0.5 } else { 0.0 });
    let err = run(n0, medium(2.0, 0.0), &PotentialSpec::zero(), &SolverConfig::default(), 0.1, &[0.1], |_, _| {});
    assert!(matches!(err, Err(SolverError::SeamViolation { .. })));
}

#[test]
fn resume_is_bitwise_identical() {
    let g = Grid::new_1d(64, 1.0).unwrap();
    let params = medium(3.0, 0.2);
    let n0 = InitialData::RandomSmooth { seed: 3, mean: 0.5, amplitude: 0.3, max_wavenumber: 3 }
        .sample(&g, &params)
        .unwrap();
    let pot = sine_potential(0.5);
    let cfg = SolverConfig::default();
    let times = [0.05, 0.1, 0.15, 0.2];
    let full = run(n0.clone(), params, &pot, &cfg, 0.2, &times, |_, _| {}).unwrap();
    let half = run(n0, params, &pot, &cfg, 0.2, &times[..2], |_, _| {}).unwrap();
    let mid = half.samples.last().unwrap().clone();
    let meta = CheckpointMeta::of(&mid, "h");
    let restored = meta.restore(mid.density().clone()).unwrap();
    let rest = run_from(restored, &pot, &cfg, 0.2, &times, |_, _| {}).unwrap();
    assert_eq!(rest.samples.len(), 3);
    assert_eq!(rest.samples.last().unwrap().density(), full.samples.last().unwrap().density());
}

#[test]
fn rejects_bad_samples_and_config() {
    let g = Grid::new_1d(16, 1.0).unwrap();
    let n0 = ScalarField::constant(g, 0.5);
    let cfg = SolverConfig::default();
    let pot = PotentialSpec::zero();
    assert!(run(n0.clone(), medium(2.0, 1.0), &pot, &cfg, 1.0, &[0.5, 0.2], |_, _| {}).is_err());
    assert!(run(n0.clone(), medium(2.0, 1.0), &pot, &cfg, 1.0, &[2.0], |_, _| {}).is_err());
    let bad = SolverConfig { cfl_safety: 1.5, ..cfg };
    assert!(matches!(run(n0, medium(2.0, 1.0), &pot, &bad, 1.0, &[1.0], |_, _| {}), Err(SolverError::InvalidConfig(_))));
}
