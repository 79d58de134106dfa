//! Property tests over randomly drawn signals, parameters and states.

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sslab::certificates::{
    compose_bidirectional, compose_lyapunov_bidirectional, compose_lyapunov_one_sided, compose_one_directional,
    compose_one_sided, theta, ComponentGain, LyapunovCertificate,
};
use sslab::linear_string::{
    linear_bounds, linear_component, linear_lyapunov_certificate, lyapunov_conditions, optimal_trajectory_gains,
    trajectory_conditions, LinearMode, LinearParams, LyapunovMode,
};
use sslab::lyapunov_check::{
    decomposition_residual, dissipation_budget, falsify_inequality, Constants, InequalityId, InequalitySpec, SampleBox,
};
use sslab::maps::{PairFn, StateFn};
use sslab::platoon::{
    inverse_transform, platoon_certificate, sinusoidal_leader, transform_state, verify_certified_bound,
    PlatoonComponent, PlatoonParams, TransformedState, VerifyOptions,
};
use sslab::signals::{generate_input, lp_norm, running_lp_norm, Grid, InputSpec, NormOrder, TimeSeries};
use sslab::string_sim::{check_estimate, integrate, BoxRegion, FnComponent, StringConfig};

fn orders() -> impl Strategy<Value = NormOrder> {
    prop_oneof![
        Just(NormOrder::Finite(1.0)),
        Just(NormOrder::Finite(1.5)),
        Just(NormOrder::Finite(2.0)),
        Just(NormOrder::Finite(3.0)),
        Just(NormOrder::Inf),
    ]
}

fn series(values: Vec<f64>, dt: f64) -> TimeSeries {
    TimeSeries::scalar(0.0, dt, values).unwrap()
}

fn end(s: &TimeSeries) -> f64 {
    s.end_time()
}

fn abs_q() -> StateFn {
    StateFn::new("|x|", |x| x[0].abs())
}

fn gain(gamma: f64, delta: f64) -> ComponentGain {
    ComponentGain::new(NormOrder::Finite(2.0), gamma, delta, abs_q()).unwrap()
}

fn lyap(gamma1: f64, gamma2: f64, sigma: f64) -> LyapunovCertificate {
    LyapunovCertificate {
        p: 2.0,
        c: 1.5,
        sigma,
        omega: sigma,
        gamma1,
        gamma2,
        l: 1.0,
        v: StateFn::new("x^2/2", |x| 0.5 * x[0] * x[0]),
        g: PairFn::zero(),
        r: PairFn::zero(),
        grad_v: None,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn norm_triangle_inequality(
        pairs in prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 2..60),
        dt in 0.01f64..1.0,
        order in orders(),
    ) {
        let (f, g): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let sum: Vec<f64> = f.iter().zip(&g).map(|(a, b)| a + b).collect();
        let (f, g, sum) = (series(f, dt), series(g, dt), series(sum, dt));
        let t = end(&f);
        let lhs = lp_norm(&sum, t, order).unwrap();
        let rhs = lp_norm(&f, t, order).unwrap() + lp_norm(&g, t, order).unwrap();
        prop_assert!(lhs <= rhs * (1.0 + 1e-12) + 1e-300);
    }

    #[test]
    fn norm_scaling(
        values in prop::collection::vec(-10.0f64..10.0, 2..60),
        c in -20.0f64..20.0,
        order in orders(),
    ) {
        let f = series(values.clone(), 0.1);
        let cf = series(values.iter().map(|v| c * v).collect(), 0.1);
        let t = end(&f);
        let a = lp_norm(&cf, t, order).unwrap();
        let b = c.abs() * lp_norm(&f, t, order).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(b.abs()) + 1e-300);
    }

    #[test]
    fn running_norm_is_monotone(values in prop::collection::vec(-5.0f64..5.0, 2..80), order in orders()) {
        let r = running_lp_norm(&series(values, 0.05), order).unwrap();
        prop_assert!(r.data().windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn refinement_is_second_order(alpha in 0.5f64..2.0) {
        let two = NormOrder::Finite(2.0);
        let norm = |dt: f64| {
            let g = Grid::span(1.0, dt).unwrap();
            lp_norm(&TimeSeries::from_fn(g, 1, |t, o| o[0] = (alpha * t).exp()).unwrap(), 1.0, two).unwrap()
        };
        let (a, b, c) = (norm(0.02), norm(0.01), norm(0.005));
        let ratio = (a - b) / (b - c);
        prop_assert!((3.5..4.5).contains(&ratio), "ratio {ratio}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn stored_states_stay_in_domain(drift in 0.2f64..3.0, floor in -1.0f64..-0.1, n in 1usize..4) {
        let comp = FnComponent::scalar(move |u, _x, _w| -drift + 0.1 * u)
            .with_domain(move |x| x[0] > floor, BoxRegion::cube(1, floor, 1.0).unwrap())
            .into_arc();
        let grid = Grid::span(2.0, 0.05).unwrap();
        let z = TimeSeries::zeros(grid, 1).unwrap();
        let cfg = StringConfig::new(comp.clone(), n, z.clone(), z).unwrap();
        let traj = integrate(&cfg, &vec![vec![0.0]; n], 2.0, 0.05).unwrap();
        for s in traj.states() {
            prop_assert!(s.samples().all(|x| comp.in_domain(x)));
        }
    }

    #[test]
    fn outputs_are_recomputed_exactly(a in -1.0f64..1.0, b in -1.0f64..1.0, n in 1usize..5) {
        let comp = FnComponent::new(
            2,
            1,
            move |u, x, w, dx| {
                dx[0] = x[1];
                dx[1] = -x[0] - 0.5 * x[1] + a * u[0] + b * w[1];
            },
            |x, y| y[0] = x[0].sin() * x[1] + x[0] * x[0],
        )
        .into_arc();
        let grid = Grid::span(1.0, 0.01).unwrap();
        let u = generate_input(&InputSpec::sinusoid(1.0, 1.0), grid, 2).unwrap();
        let w = generate_input(&InputSpec::constant(0.3), grid, 2).unwrap();
        let cfg = StringConfig::new(comp.clone(), n, u, w).unwrap();
        let traj = integrate(&cfg, &vec![vec![0.2, -0.1]; n], 1.0, 0.01).unwrap();
        for i in 0..n {
            for (x, y) in traj.state(i).samples().zip(traj.output(i).samples()) {
                prop_assert_eq!(comp.output_vec(x)[0].to_bits(), y[0].to_bits());
            }
        }
    }

    #[test]
    fn uncoupled_components_permute(xi in prop::collection::vec(-3.0f64..3.0, 2..6), k in 0.1f64..3.0, shift in 1usize..5) {
        let p = LinearParams::new(0.0, 0.0, k).unwrap();
        let n = xi.len();
        let grid = Grid::span(1.0, 0.01).unwrap();
        let u = generate_input(&InputSpec::constant(2.0), grid, 1).unwrap();
        let w = generate_input(&InputSpec::constant(-1.0), grid, 1).unwrap();
        let cfg = StringConfig::new(linear_component(p), n, u, w).unwrap();
        let init: Vec<Vec<f64>> = xi.iter().map(|x| vec![*x]).collect();
        let perm: Vec<usize> = (0..n).map(|i| (i + shift) % n).collect();
        let permuted: Vec<Vec<f64>> = perm.iter().map(|&j| init[j].clone()).collect();
        let t1 = integrate(&cfg, &init, 1.0, 0.01).unwrap();
        let t2 = integrate(&cfg, &permuted, 1.0, 0.01).unwrap();
        for (i, &j) in perm.iter().enumerate() {
            prop_assert_eq!(t2.state(i).data(), t1.state(j).data());
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn theta_is_continuous_across_the_diagonal(gamma in 0.01f64..0.99, frac in 1e-9f64..1e-3) {
        let eps = frac * gamma;
        let jump = (theta(gamma, gamma - eps).unwrap() - theta(gamma, gamma + eps).unwrap()).abs();
        prop_assert!(jump <= 3.0 * eps);
    }

    #[test]
    fn composed_slopes_are_monotone(g in 0.0f64..0.5, d in 0.0f64..0.45, dg in 0.0f64..0.04, dd in 0.0f64..0.04) {
        let lo = compose_bidirectional(&gain(g, d)).unwrap();
        let hi = compose_bidirectional(&gain(g + dg, d + dd)).unwrap();
        prop_assert!(hi.a1_slope >= lo.a1_slope && hi.a2_slope >= lo.a2_slope);
        if g > 0.0 {
            let (th_lo, th_hi) = (theta(g, d).unwrap(), theta(g + dg, d + dd).unwrap());
            prop_assert!(th_hi >= th_lo * (1.0 - 1e-15));
            if th_hi < 1.0 {
                let lo = compose_one_sided(&gain(g, d), 3).unwrap();
                let hi = compose_one_sided(&gain(g + dg, d + dd), 3).unwrap();
                prop_assert!(hi.a1_slope >= lo.a1_slope * (1.0 - 1e-15));
            }
        }
    }

    #[test]
    fn lyapunov_slopes_are_monotone(g1 in 0.0f64..10.0, g2 in 0.0f64..10.0, s in 0.0f64..0.45, d1 in 0.0f64..1.0, d2 in 0.0f64..1.0) {
        let lo = compose_lyapunov_bidirectional(&lyap(g1, g2, s)).unwrap();
        let hi = compose_lyapunov_bidirectional(&lyap(g1 + d1, g2 + d2, s)).unwrap();
        prop_assert!(hi.a1_slope >= lo.a1_slope && hi.a2_slope >= lo.a2_slope);
        let lo = compose_lyapunov_one_sided(&lyap(g1, 0.0, s)).unwrap();
        let hi = compose_lyapunov_one_sided(&lyap(g1 + d1, 0.0, s)).unwrap();
        prop_assert!(hi.a1_slope >= lo.a1_slope);
    }

    #[test]
    fn bidirectional_slope_dominates_one_directional(g in 0.0f64..0.999) {
        let bi = compose_bidirectional(&gain(g, 0.0)).unwrap();
        let one = compose_one_directional(&gain(g, 0.0)).unwrap();
        prop_assert!(bi.a1_slope >= one.a1_slope);
    }

    #[test]
    fn one_sided_certifies_beyond_the_bidirectional_range(g in 0.01f64..0.45, t in 0.0f64..0.999) {
        // δ ≥ γ, γ + δ ≥ 1 and 2√(γδ) < 1
        let lo = g.max(1.0 - g);
        let d = lo + t * (0.25 / g - lo);
        prop_assert!(theta(g, d).unwrap() < 1.0 && g + d >= 1.0);
        prop_assert!(compose_one_sided(&gain(g, d), 7).is_ok());
        prop_assert!(compose_bidirectional(&gain(g, d)).is_err());
    }

    #[test]
    fn closed_forms_match_composition(a in -3.0f64..3.0, b in -3.0f64..3.0, k in 0.1f64..8.0, n in 1usize..30) {
        prop_assume!(a != 0.0);
        let p = LinearParams::new(a, b, k).unwrap();
        let xi: Vec<Vec<f64>> = (0..n).map(|i| vec![(i as f64 * 0.37).sin()]).collect();
        for mode in [LinearMode::Bidirectional, LinearMode::OneSided] {
            let Ok(lb) = linear_bounds(&p, mode, n) else { continue };
            let g = optimal_trajectory_gains(&p, mode).unwrap().gain();
            let c = match mode {
                LinearMode::Bidirectional => compose_bidirectional(&g).unwrap(),
                _ => compose_one_sided(&g, n).unwrap(),
            };
            let close = |x: f64, y: f64| (x - y).abs() <= 1e-12 * x.abs().max(y.abs()) + 1e-300;
            prop_assert!(close(lb.a1_slope, c.a1_slope));
            prop_assert!(close(lb.a2_slope, c.a2_slope));
            prop_assert!(close(lb.qn(&xi).unwrap(), c.qn(&xi).unwrap()));
        }
    }

    #[test]
    fn trajectory_region_lies_inside_dissipation_region(a in -3.0f64..3.0, b in -3.0f64..3.0, k in 0.01f64..8.0) {
        let p = LinearParams::new(a, b, k).unwrap();
        if trajectory_conditions(&p).bidirectional.holds {
            prop_assert!(lyapunov_conditions(&p).bidirectional.holds);
        }
    }

    #[test]
    fn grid_never_beats_closed_form(a in 0.1f64..3.0, b in 0.1f64..3.0, k in 0.5f64..6.0) {
        let p = LinearParams::new(a, b, k).unwrap();
        let tuned = optimal_trajectory_gains(&p, LinearMode::Bidirectional).unwrap();
        let best = tuned.gamma + tuned.delta;
        let (rmax, smax) = (2.0 * k / (a * a), 2.0 * k / (b * b));
        for i in 1..40 {
            for j in 1..40 {
                let (r, s) = (rmax * i as f64 / 40.0, smax * j as f64 / 40.0);
                let d = 2.0 * k - r * a * a - s * b * b;
                if d > 0.0 {
                    let v = 1.0 / (r * d).sqrt() + 1.0 / (s * d).sqrt();
                    prop_assert!(v >= best * (1.0 - 1e-12));
                }
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn certified_linear_strings_respect_their_bound(
        a in 0.1f64..1.5,
        b in -1.5f64..1.5,
        k in 0.5f64..6.0,
        seed in 0u64..1000,
    ) {
        let p = LinearParams::new(a, b, k).unwrap();
        let Ok(_) = linear_bounds(&p, LinearMode::Bidirectional, 1) else { return Ok(()) };
        let grid = Grid::span(5.0, 1e-3).unwrap();
        let u = generate_input(&InputSpec::sinusoid(1.0, 0.3), grid, 1).unwrap();
        let w = generate_input(&InputSpec::noise(0.5, seed), grid, 1).unwrap();
        for n in [1usize, 5, 20] {
            let bound = linear_bounds(&p, LinearMode::Bidirectional, n).unwrap();
            let xi: Vec<Vec<f64>> = (0..n).map(|i| vec![((i as u64 + seed) as f64).cos()]).collect();
            let cfg = StringConfig::new(linear_component(p), n, u.clone(), w.clone()).unwrap();
            let traj = integrate(&cfg, &xi, 5.0, 1e-3).unwrap();
            prop_assert!(check_estimate(&traj, &bound, &xi).unwrap().min_slack >= -1e-6);
        }
    }

    #[test]
    fn budget_slack_implies_estimate(a in 0.1f64..1.5, b in -1.5f64..1.5, k in 0.5f64..6.0, n in 1usize..10) {
        let p = LinearParams::new(a, b, k).unwrap();
        let Ok(cert) = linear_lyapunov_certificate(&p, LyapunovMode::Bidirectional) else { return Ok(()) };
        let Ok(bound) = compose_lyapunov_bidirectional(&cert) else { return Ok(()) };
        let grid = Grid::span(5.0, 1e-3).unwrap();
        let u = generate_input(&InputSpec::sinusoid(1.0, 0.3), grid, 1).unwrap();
        let w = generate_input(&InputSpec::step(-0.7, 2.0), grid, 1).unwrap();
        let xi: Vec<Vec<f64>> = (0..n).map(|i| vec![(i as f64).sin()]).collect();
        let cfg = StringConfig::new(linear_component(p), n, u, w).unwrap();
        let traj = integrate(&cfg, &xi, 5.0, 1e-3).unwrap();
        let budget = dissipation_budget(&traj, &cert, LyapunovMode::Bidirectional).unwrap();
        if budget.data().iter().all(|s| *s >= 0.0) {
            prop_assert!(check_estimate(&traj, &bound, &xi).unwrap().min_slack >= -1e-9);
        }
    }

    #[test]
    fn falsifier_is_deterministic_and_sound(scale in 0.3f64..0.9, seed in 0u64..1000) {
        let p = LinearParams::new(1.0, 0.5, 3.0).unwrap();
        let mut d = optimal_trajectory_gains(&p, LinearMode::Bidirectional).unwrap().dissipation();
        d.gamma *= scale;
        let spec = InequalitySpec::new(InequalityId::GainDissipation, linear_component(p), Constants::Gain(d.clone())).unwrap();
        let sb = SampleBox::uniform(1, -5.0, 5.0, 5_000, seed).unwrap();
        let r1 = falsify_inequality(&spec, &sb).unwrap();
        let r2 = falsify_inequality(&spec, &sb).unwrap();
        prop_assert_eq!(&r1, &r2);
        if r1.worst_gap > 0.0 {
            let pt = &r1.worst_point;
            let (x, u, w) = (pt.x[0], pt.u.as_ref().unwrap()[0], pt.w.as_ref().unwrap()[0]);
            let direct = x * (p.a * u - p.k * x + p.b * w)
                + d.c * x * x - d.c * d.gamma * d.gamma * u * u - d.c * d.delta * d.delta * w * w;
            prop_assert!(direct > 0.0);
        }
    }
}

fn platoon_state(n: usize, seed: u64) -> TransformedState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    TransformedState {
        z: (0..n).map(|_| rng.gen_range(-8.0..8.0)).collect(),
        y: (0..n).map(|_| rng.gen_range(-0.1..0.1)).collect(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn transform_round_trip(
        zs in prop::collection::vec(-19.9f64..30.0, 1..8),
        ys in prop::collection::vec(-3.0f64..3.0, 8),
    ) {
        let p = PlatoonParams::default().with_n(zs.len());
        let ts = TransformedState { z: zs.clone(), y: ys[..zs.len()].to_vec() };
        let st = inverse_transform(&ts, &p).unwrap();
        prop_assert!(st.check(&p).is_ok());
        let back = transform_state(&st, &p).unwrap();
        for (a, b) in back.z.iter().zip(&ts.z).chain(back.y.iter().zip(&ts.y)) {
            prop_assert!((a - b).abs() <= 1e-10 * a.abs().max(b.abs()).max(1.0));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn platoon_runs_agree_and_stay_safe(n in 2usize..6, seed in 0u64..10_000, frac in 0.1f64..1.0) {
        let p = PlatoonParams::default().with_n(n);
        let lam = sslab::platoon::platoon_constants(&p).lambda_bound;
        let initial = inverse_transform(&platoon_state(n, seed), &p).unwrap();
        let mut mismatch = Vec::new();
        for step in [5e-4, 2.5e-4] {
            let y0 = sinusoidal_leader(frac * lam, 0.1, 10.0, step).unwrap();
            let opts = VerifyOptions { t_end: 10.0, base_step: step, allow_uncertified: false, compare_original: true };
            let run = verify_certified_bound(&p, &initial, &y0, &opts).unwrap();
            let r = &run.report;
            prop_assert!(run.transformed.completed());
            prop_assert!(r.collision_free && r.speed_bounds_ok);
            prop_assert!(r.min_slack >= -1e-6);
            let comp = PlatoonComponent::new(p);
            let residual = decomposition_residual(&run.transformed, &comp, &platoon_certificate(&p)).unwrap();
            prop_assert!(residual <= 1e-7, "residual {residual}");
            mismatch.push(r.transform_mismatch.unwrap());
        }
        // the two coordinate systems differ by RK4 truncation error only
        prop_assert!(mismatch[1] <= (mismatch[0] / 8.0).max(1e-9), "mismatch {mismatch:?}");
        prop_assert!(mismatch[1] <= 1e-6, "mismatch {mismatch:?}");
    }
}
