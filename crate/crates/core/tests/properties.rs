use approx::assert_relative_eq;
use proptest::prelude::*;

use constel::earth::{default_epoch, ecef_to_teme, elevation, GroundTarget, EARTH_RADIUS_KM};
use constel::grad::{seed_params, Dual};
use constel::harness;
use constel::metrics::{leaky_gaps, lse_softmax, noisy_or};
use constel::objective::{apply_interval, apply_perigee_excess, PerigeeBounds};
use constel::optim::{AdamWConfig, AdamWState};
use constel::orbit::{propagate, propagate_with_velocity, ElementSet, MU_EARTH};
use constel::Real;

fn elements() -> impl Strategy<Value = ElementSet> {
    (6700.0..30000.0f64, 0.0..0.7f64, 0.0..std::f64::consts::PI, -7.0..7.0f64, -7.0..7.0f64, -7.0..7.0f64)
        .prop_filter("perigee above the surface", |(a, e, ..)| a * (1.0 - e) > EARTH_RADIUS_KM + 100.0)
        .prop_map(|(a, e, inc, raan, argp, mean_anomaly)| ElementSet {
            a,
            e,
            inc,
            raan,
            argp,
            mean_anomaly,
            epoch: default_epoch(),
        })
}

fn norm(v: &[f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

proptest! {
    #[test]
    fn two_body_energy_and_radius_bounds(el in elements(), dt in -2.0e5..2.0e5f64) {
        let (r, v) = propagate_with_velocity(&el, dt).unwrap();
        let rn = norm(&r);
        let energy = 0.5 * norm(&v).powi(2) - MU_EARTH / rn;
        assert_relative_eq!(energy, -MU_EARTH / (2.0 * el.a), max_relative = 1e-9);
        prop_assert!(rn >= el.a * (1.0 - el.e) * (1.0 - 1e-12));
        prop_assert!(rn <= el.a * (1.0 + el.e) * (1.0 + 1e-12));
    }

    #[test]
    fn two_body_is_periodic(el in elements(), dt in 0.0..1.0e5f64) {
        let p0 = propagate(&el, dt).unwrap().position;
        let p1 = propagate(&el, dt + el.period()).unwrap().position;
        for c in 0..3 {
            assert_relative_eq!(p0[c], p1[c], epsilon = 1e-6 * el.a);
        }
    }

    #[test]
    fn dual_value_channel_matches_plain(el in elements(), dt in 0.0..86400.0f64) {
        let x = seed_params::<6>(&[el.a, el.e, el.inc, el.raan, el.argp, el.mean_anomaly]).unwrap();
        let dual = ElementSet { a: x[0], e: x[1], inc: x[2], raan: x[3], argp: x[4], mean_anomaly: x[5], epoch: el.epoch };
        let pd = propagate(&dual, dt).unwrap().position;
        let pf = propagate(&el, dt).unwrap().position;
        for c in 0..3 {
            prop_assert_eq!(pd[c].value(), pf[c]);
        }
    }

    #[test]
    fn rotation_preserves_norm_and_elevation(
        el in elements(),
        lat in -1.4..1.4f64,
        lon in -3.1..3.1f64,
        phi in -7.0..7.0f64,
    ) {
        let sat = propagate(&el, 0.0).unwrap().position;
        let turned = ecef_to_teme(&sat, phi);
        assert_relative_eq!(norm(&turned), norm(&sat), max_relative = 1e-14);
        let a = elevation(&sat, &GroundTarget::new(lat, lon, 1.0)).unwrap();
        let b = elevation(&turned, &GroundTarget::new(lat, lon + phi, 1.0)).unwrap();
        assert_relative_eq!(a, b, epsilon = 1e-9);
    }

    #[test]
    fn noisy_or_is_monotone_and_dominates_max(
        c in prop::collection::vec(0.0..=1.0f64, 1..8),
        i in any::<prop::sample::Index>(),
        bump in 0.0..=1.0f64,
    ) {
        let base = noisy_or(&c);
        let max = c.iter().cloned().fold(0.0, f64::max);
        prop_assert!(base >= max - 1e-15 && base <= 1.0);
        let mut raised = c.clone();
        let k = i.index(c.len());
        raised[k] = raised[k] + (1.0 - raised[k]) * bump;
        prop_assert!(noisy_or(&raised) >= base - 1e-15);
    }

    #[test]
    fn more_coverage_never_lengthens_gaps(
        pairs in prop::collection::vec((0.0..=1.0f64, 0.0..=1.0f64), 1..60),
        dt in 0.5..10.0f64,
    ) {
        let lo: Vec<f64> = pairs.iter().map(|&(a, b)| a.min(b)).collect();
        let hi: Vec<f64> = pairs.iter().map(|&(a, b)| a.max(b)).collect();
        let g_lo = leaky_gaps(&lo, dt);
        let g_hi = leaky_gaps(&hi, dt);
        for (k, (l, h)) in g_lo.iter().zip(&g_hi).enumerate() {
            prop_assert!(*h <= *l + 1e-12);
            prop_assert!(*h >= 0.0 && *l <= dt * (k + 1) as f64 + 1e-9);
        }
    }

    #[test]
    fn lse_brackets_the_maximum(x in prop::collection::vec(0.0..500.0f64, 1..50), beta in 0.5..50.0f64) {
        let max = x.iter().cloned().fold(f64::MIN, f64::max);
        let s = lse_softmax(&x, beta);
        prop_assert!(s >= max - 1e-9);
        prop_assert!(s <= max + beta * (x.len() as f64).ln() + 1e-9);
    }

    #[test]
    fn reparameterized_elements_stay_in_bounds(
        t in -30.0..30.0f64,
        u in -30.0..30.0f64,
        lower in -10.0..10.0f64,
        width in 0.1..100.0f64,
    ) {
        let x = apply_interval(t, lower, lower + width);
        prop_assert!(x > lower && x < lower + width);
        let b = PerigeeBounds { rp_min_km: 400.0, rp_max_km: 600.0, dr_max_km: 15000.0 };
        let (a, e) = apply_perigee_excess(t, u, &b);
        let perigee = a * (1.0 - e) - EARTH_RADIUS_KM;
        prop_assert!((0.0..1.0).contains(&e));
        prop_assert!(perigee > 400.0 - 1e-6 && perigee < 600.0 + 1e-6);
        prop_assert!(a * (1.0 + e) - a * (1.0 - e) <= 15000.0 + 1e-6);
    }

    #[test]
    fn shared_slots_give_identical_plane_elements(theta in prop::collection::vec(-10.0..10.0f64, 30)) {
        let spec = harness::exp2().spec().unwrap();
        let els = spec.unpack(&theta, default_epoch()).unwrap();
        for plane in els.chunks(4) {
            for el in plane {
                prop_assert_eq!(el.raan.to_bits(), plane[0].raan.to_bits());
                prop_assert_eq!(el.inc.to_bits(), plane[0].inc.to_bits());
                prop_assert_eq!(el.a.to_bits(), plane[0].a.to_bits());
            }
        }
    }

    #[test]
    fn adamw_first_step_follows_the_gradient_sign(
        g in prop::collection::vec(prop_oneof![-1e3..-1e-3f64, 1e-3..1e3f64], 1..10),
        lr in 1e-4..1e-1f64,
    ) {
        let cfg = AdamWConfig { lr, ..Default::default() };
        let mut theta = vec![0.0; g.len()];
        AdamWState::new(g.len()).step(&mut theta, &g, &cfg).unwrap();
        for (t, gi) in theta.iter().zip(&g) {
            assert_relative_eq!(*t, -lr * gi.signum(), max_relative = 1e-4);
        }
    }

    #[test]
    fn dual_gradient_is_linear(x in -3.0..3.0f64, y in -3.0..3.0f64, a in -5.0..5.0f64, b in -5.0..5.0f64) {
        let v = [Dual::<2>::variable(x, 0), Dual::<2>::variable(y, 1)];
        let f = v[0].sin() * v[1];
        let g = v[0] * v[0] + v[1].exp();
        let h = f * a + g * b;
        for s in 0..2 {
            assert_relative_eq!(h.d[s], a * f.d[s] + b * g.d[s], epsilon = 1e-12);
        }
    }
}

#[test]
fn presets_carry_the_published_settings() {
    // (preset, satellites, free slots, targets, lambda)
    let table = [("exp1", 2, 2, 36 * 72, 2.0), ("exp2", 24, 30, 36 * 72, 0.1), ("exp3", 4, 12, 500, 1.0)];
    for (name, n_sat, dof, n_targets, lambda) in table {
        let cfg = harness::preset(name).unwrap();
        let spec = cfg.spec().unwrap();
        assert_eq!(spec.n_satellites(), n_sat, "{name}");
        assert_eq!(spec.n_slots(), dof, "{name}");
        assert_eq!(cfg.targets.load().unwrap().len(), n_targets, "{name}");
        assert_eq!(cfg.relax.tau_cov_deg, 2.0, "{name}");
        assert_eq!(cfg.relax.tau_rev_deg, 2.0, "{name}");
        assert_eq!(cfg.relax.beta_min, 10.0, "{name}");
        assert_eq!(cfg.relax.lambda, lambda, "{name}");
        assert_eq!(cfg.relax.min_elevation_deg, 10.0, "{name}");
    }
}
