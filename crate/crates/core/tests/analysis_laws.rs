use std::f64::consts::FRAC_PI_2;

use proptest::prelude::*;

use cstirap::analysis::{
    adiabaticity_metrics, dark_decay_rate, dark_survival_prediction, metric_times, theta_dot,
};
use cstirap::chain::{validate_chain, PulseEnvelope};
use cstirap::scenarios::{preset_five_level, simulate, FiveLevelParams};

proptest! {
    #[test]
    fn decay_rate_is_bounded(
        theta in 0.0f64..FRAC_PI_2,
        xi in 0.0f64..0.5,
        g1 in 0.0f64..1e5,
        g2 in 0.0f64..1e5,
    ) {
        let omega0 = 3e8;
        let r = dark_decay_rate(theta, xi * omega0, omega0, g1, g2);
        let mixing = (xi / 2.0 * (2.0 * theta).sin()).powi(2);
        prop_assert!(r >= 0.0);
        prop_assert!(r <= g1 + (g1 + g2) * mixing + 1e-9);
        prop_assert!(r >= g1 * theta.cos().powi(2) - 1e-9);
    }

    #[test]
    fn decay_rate_grows_with_both_losses(theta in 0.01f64..1.5, g in 1.0f64..1e5) {
        let base = dark_decay_rate(theta, 3e7, 3e8, g, g);
        prop_assert!(dark_decay_rate(theta, 3e7, 3e8, 2.0 * g, g) > base);
        prop_assert!(dark_decay_rate(theta, 3e7, 3e8, g, 2.0 * g) > base);
    }
}

#[test]
fn decay_rate_limits() {
    assert_eq!(dark_decay_rate(0.0, 3e7, 3e8, 1e4, 6e4), 1e4);
    assert!(dark_decay_rate(FRAC_PI_2, 3e7, 3e8, 1e4, 6e4).abs() < 1e-20);
    assert_eq!(dark_decay_rate(0.7, 3e7, 3e8, 0.0, 0.0), 0.0);
}

#[test]
fn survival_prediction_is_one_without_loss() {
    let p = preset_five_level(FiveLevelParams::default()).unwrap();
    let times = metric_times(&p.grid.times());
    assert_eq!(
        dark_survival_prediction(&p.system, &times, 0.0, 0.0).unwrap(),
        1.0
    );
    let lossy = dark_survival_prediction(&p.system, &times, 1e4, 6e4).unwrap();
    let worse = dark_survival_prediction(&p.system, &times, 2e4, 6e4).unwrap();
    assert!(worse < lossy && lossy < 1.0);
}

#[test]
fn reference_schedule_is_adiabatic() {
    let p = preset_five_level(FiveLevelParams::default()).unwrap();
    let m = adiabaticity_metrics(&p.system, &metric_times(&p.grid.times())).unwrap();
    assert!(m.adiabatic);
    assert!(m.max_theta_dot_over_omega < 0.1);
    assert!(m.omega_eff_t_tr > 100.0);
}

#[test]
fn thousandfold_faster_switching_is_not_adiabatic() {
    let width = 1e-9;
    let p = preset_five_level(FiveLevelParams {
        width,
        delay: -2.0 * width,
        ..Default::default()
    })
    .unwrap();
    let m = adiabaticity_metrics(&p.system, &metric_times(&p.grid.times())).unwrap();
    assert!(
        !m.adiabatic,
        "max theta dot / omega {}",
        m.max_theta_dot_over_omega
    );
}

#[test]
fn identical_envelopes_freeze_mixing_angle() {
    let p = preset_five_level(FiveLevelParams::default()).unwrap();
    let mut spec = p.system.to_spec();
    let shared = PulseEnvelope::gaussian(2e7, 1e-6, 0.0);
    spec.couplings[0].drive = shared;
    spec.couplings[3].drive = shared;
    let system = validate_chain(spec).unwrap();
    for t in [-2e-6, -0.3e-6, 0.0, 1.1e-6] {
        assert!(theta_dot(&system, t).unwrap().abs() < 1e-6, "t {t}");
    }
}

#[test]
fn intuitive_order_without_overlap_is_rejected() {
    let width = 1e-6;
    let p = preset_five_level(FiveLevelParams {
        width,
        delay: 20.0 * width,
        ..Default::default()
    })
    .unwrap();
    assert!(adiabaticity_metrics(&p.system, &metric_times(&p.grid.times())).is_err());
}

#[test]
fn transfer_time_tracks_pulse_width() {
    let times = |w: f64| {
        let p = preset_five_level(FiveLevelParams {
            width: w,
            delay: -2.0 * w,
            ..Default::default()
        })
        .unwrap();
        adiabaticity_metrics(&p.system, &metric_times(&p.grid.times()))
            .unwrap()
            .transfer_time
    };
    let (a, b) = (times(1e-6), times(2e-6));
    assert!((b / a - 2.0).abs() < 1e-2, "{a} {b}");
}

#[test]
fn excited_state_loss_fades_with_adiabaticity() {
    let mut previous = f64::INFINITY;
    for (xi, t_us) in [(0.1, 1.0), (0.1, 2.0), (0.1, 4.0), (0.2, 4.0), (0.2, 8.0)] {
        let width = t_us * 1e-6;
        let lossless = FiveLevelParams {
            xi,
            width,
            delay: -2.0 * width,
            ..Default::default()
        }
        .lossless();
        let reference = simulate_efficiency(lossless);
        let preset = preset_five_level(FiveLevelParams {
            gamma: 8e7,
            ..lossless
        })
        .unwrap();
        let report = simulate(&preset.system, &preset.grid).unwrap().report;
        let degradation = (reference - report.efficiency) / reference;
        let omega_t = report.adiabaticity.unwrap().omega_eff_t_tr;
        assert!(
            degradation < previous,
            "xi {xi}, T {t_us} us: {degradation} after {previous}"
        );
        if omega_t >= 500.0 {
            assert!(
                degradation < 0.05,
                "xi {xi}, T {t_us} us, Omega_eff*T_tr {omega_t}: {degradation}"
            );
        }
        previous = degradation;
    }
}

fn simulate_efficiency(p: FiveLevelParams) -> f64 {
    let preset = preset_five_level(p).unwrap();
    simulate(&preset.system, &preset.grid)
        .unwrap()
        .report
        .efficiency
}

#[test]
fn suppression_follows_xi_squared() {
    let peak = |xi: f64| {
        let p = preset_five_level(
            FiveLevelParams {
                xi,
                ..Default::default()
            }
            .lossless(),
        )
        .unwrap();
        simulate(&p.system, &p.grid)
            .unwrap()
            .report
            .peak_intermediate_ground
            .unwrap()
    };
    let (a, b) = (peak(0.1), peak(0.2));
    let exponent = (b / a).ln() / 2f64.ln();
    assert!((1.7..=2.3).contains(&exponent), "exponent {exponent}");
    let overlap = (1.0 + 1f64.tanh()) / 2.0;
    let expected = (0.1 * overlap).powi(2) / 4.0;
    assert!(
        (a - expected).abs() < 0.02 * expected,
        "peak {a}, expected {expected}"
    );
}
