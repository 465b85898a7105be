use std::sync::Arc;

use super::*;
use crate::blockspace::BlockSpace;
use crate::operators::{Axis, CollectiveOperator};

fn space(n: usize) -> Arc<BlockSpace> {
    Arc::new(BlockSpace::new(n).unwrap())
}

fn expect(state: &CollectiveState, op: &CollectiveOperator) -> f64 {
    (0..state.space().num_blocks())
        .map(|k| (state.block(k) * op.block(k)).trace())
        .sum::<C64>()
        .re
}

fn linspace(end: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| end * i as f64 / (n - 1) as f64).collect()
}

#[test]
fn zero_generator_leaves_state_unchanged() {
    let s = space(6);
    let rho = CollectiveState::coherent(&s, 0.7, 0.2);
    let spec = LiouvillianSpec::symmetric_depolarizing(0.0)
        .with_hamiltonian(CollectiveOperator::zeros(&s));
    let states = evolve(&spec, &rho, &linspace(3.0, 7), &IntegratorConfig::default()).unwrap();
    for st in states {
        assert!(st.max_abs_diff(&rho).unwrap() < 1e-15);
    }
}

#[test]
fn pumping_raises_polarization_monotonically() {
    let s = space(50);
    let jz = CollectiveOperator::generator(&s, Axis::Z);
    let states = evolve(
        &LiouvillianSpec::symmetric_polarizing(1.0),
        &CollectiveState::mixed_collective(&s),
        &linspace(6.0, 25),
        &IntegratorConfig::default(),
    )
    .unwrap();
    let means: Vec<f64> = states.iter().map(|st| expect(st, &jz)).collect();
    assert!(means.windows(2).all(|w| w[1] > w[0]));
    // product state with per-spin polarization 1 - e^{-t}
    for (st, t) in states.iter().zip(linspace(6.0, 25)) {
        let want = 25.0 * (1.0 - (-t).exp());
        assert!((expect(st, &jz) - want).abs() < 1e-7, "t={t}");
    }
}

#[test]
fn depolarizing_keeps_transverse_width() {
    let s = space(50);
    let jx = CollectiveOperator::generator(&s, Axis::X);
    let jx2 = jx.matmul(&jx).unwrap();
    let states = evolve(
        &LiouvillianSpec::symmetric_depolarizing(1.0),
        &CollectiveState::coherent(&s, 0.0, 0.0),
        &linspace(2.0, 11),
        &IntegratorConfig::default(),
    )
    .unwrap();
    for st in &states {
        let var = expect(st, &jx2) - expect(st, &jx).powi(2);
        assert!((var.sqrt() - 50f64.sqrt() / 2.0).abs() < 1e-6);
        assert!((st.trace().re - 1.0).abs() < 1e-12);
        assert!(st.min_eigenvalue() > -1e-7);
    }
}

#[test]
fn crossing_times_match_single_spin_rates() {
    let s = space(7);
    let cfg = IntegratorConfig::default();
    let (_, t) = evolve_until_fraction(
        &LiouvillianSpec::symmetric_polarizing(1.0),
        &CollectiveState::mixed_collective(&s),
        0.95,
        Direction::Rising,
        &cfg,
    )
    .unwrap();
    assert!((t - 20f64.ln()).abs() < 1e-7 * t, "{t}");

    let hits = evolve_until_fractions(
        &LiouvillianSpec::symmetric_depolarizing(1.0),
        &CollectiveState::coherent(&s, 0.0, 0.0),
        &[0.95, 0.9, 0.5],
        Direction::Falling,
        &cfg,
    )
    .unwrap();
    for hit in hits {
        let want = -hit.target.ln();
        assert!(
            (hit.time - want).abs() < 1e-7 * want,
            "{} vs {want}",
            hit.time
        );
        let f = expect(&hit.state, &CollectiveOperator::generator(&s, Axis::Z)) / 3.5;
        assert!((f - hit.target).abs() < 1e-7);
    }
}

#[test]
fn unreachable_targets() {
    let s = space(5);
    let rho = CollectiveState::mixed_collective(&s);
    let pump = LiouvillianSpec::symmetric_polarizing(1.0);
    let cfg = IntegratorConfig::default();
    let err = evolve_until_fraction(&pump, &rho, 1.0, Direction::Rising, &cfg).unwrap_err();
    assert!(matches!(err, Error::NoCrossing { .. }));
    // depolarizing cannot push f below zero
    let err = evolve_until_fraction(
        &LiouvillianSpec::symmetric_depolarizing(1.0),
        &CollectiveState::coherent(&s, 0.0, 0.0),
        -0.1,
        Direction::Falling,
        &IntegratorConfig {
            horizon: 50.0,
            ..cfg
        },
    )
    .unwrap_err();
    assert!(matches!(err, Error::NoCrossing { .. }), "{err}");
    assert!(evolve_until_fraction(&pump, &rho, -0.5, Direction::Rising, &cfg).is_err());
}

#[test]
fn rejects_bad_inputs() {
    let s = space(3);
    let rho = CollectiveState::mixed_collective(&s);
    let spec = LiouvillianSpec::symmetric_polarizing(1.0);
    let cfg = IntegratorConfig::default();
    assert!(evolve(&spec, &rho, &[1.0, 0.5], &cfg).is_err());
    assert!(evolve(&spec, &rho, &[-1.0], &cfg).is_err());
    let bad = IntegratorConfig { rtol: 0.0, ..cfg };
    assert!(evolve(&spec, &rho, &[1.0], &bad).is_err());
    let mut unnormalized = rho.clone();
    unnormalized.scale(C64::new(2.0, 0.0));
    assert!(evolve(&spec, &unnormalized, &[1.0], &cfg).is_err());
    let tiny = IntegratorConfig {
        max_steps: 2,
        ..cfg
    };
    assert!(matches!(
        evolve(&spec, &rho, &[50.0], &tiny),
        Err(Error::Integration { .. })
    ));
}

#[test]
fn twisting_with_collective_loss_stays_physical() {
    let s = space(20);
    let spec = LiouvillianSpec::new()
        .with_hamiltonian(CollectiveOperator::counter_twisting(&s, 1.0 / 20.0))
        .with_collective(CollectiveOperator::generator(&s, Axis::Minus), 0.05);
    let states = evolve(
        &spec,
        &CollectiveState::coherent(&s, 0.0, 0.0),
        &linspace(2.0, 5),
        &IntegratorConfig::default(),
    )
    .unwrap();
    for st in states {
        st.validate().unwrap();
    }
}

#[test]
fn tighter_tolerances_agree() {
    let s = space(16);
    let spec = LiouvillianSpec::symmetric_depolarizing(0.5)
        .with_hamiltonian(CollectiveOperator::counter_twisting(&s, 0.3));
    let rho = CollectiveState::coherent(&s, 0.4, 0.0);
    let base = IntegratorConfig::default();
    let a = evolve(&spec, &rho, &[1.5], &base).unwrap();
    let b = evolve(&spec, &rho, &[1.5], &base.with_scaled_tolerances(0.01)).unwrap();
    assert!(a[0].max_abs_diff(&b[0]).unwrap() < 1e-7);
}
