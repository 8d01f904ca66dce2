use approx::assert_abs_diff_eq;
use coepi_core::analysis::{
    dissensus_healthy_equilibria, finite_difference_jacobian, jacobian_at, r_max, r_min,
    EnumerationOptions, Verdict,
};
use coepi_core::control::{select_stubborn_extreme, verify_plan, SearchMode, VerifyOptions};
use coepi_core::dynamics::rate_matrices;
use coepi_core::spectral::{dense_spectrum, max_real_part, spectral_radius};
use coepi_core::{
    dynamics::rhs, reproduction_number, simulate, step, DMatrix, DVector, Integrator, State,
    SystemParams,
};
use proptest::prelude::*;

/// Ring plus random chords, so the graph is always strongly connected.
fn params_strategy(n: usize) -> impl Strategy<Value = SystemParams> {
    (
        prop::collection::vec(0.0..1.0f64, n * n),
        prop::collection::vec(0.05..3.0f64, n * n),
        prop::collection::vec(0.0..2.0f64, n),
        0.1..1.0f64,
        0.05..0.5f64,
        prop::collection::vec(0.1..2.0f64, n * n),
    )
        .prop_map(move |(mask, beta, extra_heal, dmin, bmin, mags)| {
            let edge = |i: usize, j: usize| i != j && ((j + 1) % n == i || mask[i * n + j] < 0.3);
            let b = DMatrix::from_fn(n, n, |i, j| {
                if edge(i, j) {
                    bmin + beta[i * n + j]
                } else {
                    0.0
                }
            });
            let a = DMatrix::from_fn(n, n, |i, j| if edge(i, j) { mags[i * n + j] } else { 0.0 });
            let heal = DVector::from_fn(n, |i, _| dmin + extra_heal[i]);
            SystemParams::new(b, heal, dmin, bmin, a).unwrap()
        })
}

fn state_strategy(n: usize) -> impl Strategy<Value = State> {
    (
        prop::collection::vec(0.0..=1.0f64, n),
        prop::collection::vec(-0.5..=0.5f64, n),
    )
        .prop_map(|(x, o)| State::from_slices(&x, &o).unwrap())
}

/// Componentwise field, written out independently of the crate.
fn component_field(p: &SystemParams, s: &State) -> (Vec<f64>, Vec<f64>) {
    let n = p.n();
    let a = p.opinion_graph().magnitudes();
    let b = p.infection();
    let sg = |v: f64| if v >= 0.0 { 1.0 } else { -1.0 };
    let mut dx = vec![0.0; n];
    let mut d_o = vec![0.0; n];
    for i in 0..n {
        let op = s.o[i] + 0.5;
        let delta = p.delta_min() + (p.healing()[i] - p.delta_min()) * op;
        let mut inf = 0.0;
        let mut ex = 0.0;
        for j in 0..n {
            let bmin = if b[(i, j)] > 0.0 { p.beta_min() } else { 0.0 };
            inf += (b[(i, j)] - op * (b[(i, j)] - bmin)) * s.x[j];
            ex += a[(i, j)] * (sg(s.o[i]) * sg(s.o[j]) * s.o[j] - s.o[i]);
        }
        dx[i] = -delta * s.x[i] + (1.0 - s.x[i]) * inf;
        d_o[i] = s.x[i] - s.o[i] + ex - 0.5;
    }
    (dx, d_o)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn compact_and_component_forms_agree((p, s) in (2usize..7).prop_flat_map(|n| (params_strategy(n), state_strategy(n)))) {
        let (dx, d_o) = rhs(&p, &s);
        let (cx, co) = component_field(&p, &s);
        for i in 0..p.n() {
            prop_assert!((dx[i] - cx[i]).abs() <= 1e-12);
            prop_assert!((d_o[i] - co[i]).abs() <= 1e-12);
        }
    }

    #[test]
    fn reproduction_number_is_monotone_and_bounded(
        (p, lo, bump) in (2usize..7).prop_flat_map(|n| (
            params_strategy(n),
            prop::collection::vec(-0.5..=0.5f64, n),
            prop::collection::vec(0.0..=1.0f64, n),
        ))
    ) {
        let o = DVector::from_vec(lo.clone());
        let o_up = DVector::from_fn(lo.len(), |i, _| (lo[i] + bump[i]).min(0.5));
        let r = reproduction_number(&p, &o).unwrap();
        let r_up = reproduction_number(&p, &o_up).unwrap();
        prop_assert!(r >= r_up - 1e-10);
        prop_assert!(r >= r_min(&p).unwrap() - 1e-9);
        prop_assert!(r <= r_max(&p).unwrap() + 1e-9);
    }

    #[test]
    fn analytic_jacobian_matches_differences((p, s) in params_strategy(5).prop_flat_map(|p| (Just(p), state_strategy(5)))) {
        prop_assume!(s.o.iter().all(|v| v.abs() > 1e-3));
        let j = jacobian_at(&p, &s).unwrap();
        let fd = finite_difference_jacobian(&p, &s, 1e-6);
        prop_assert!((j - fd).amax() <= 1e-5);
    }

    #[test]
    fn healthy_set_is_invariant((p, o) in params_strategy(4).prop_flat_map(|p| (Just(p), prop::collection::vec(-0.5..=0.5f64, 4)))) {
        let s = State::from_slices(&[0.0; 4], &o).unwrap();
        let traj = simulate(&p, &s, &Integrator::new(0.01, 5.0, 50), None).unwrap();
        prop_assert!(traj.states.iter().all(|st| st.x.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn rk4_steps_stay_in_the_box((p, s) in params_strategy(5).prop_flat_map(|p| (Just(p), state_strategy(5)))) {
        let mut s = s;
        for _ in 0..200 {
            let out = step(&p, &s, 0.01, None).unwrap();
            prop_assert!(out.box_violation < 1e-9);
            s = out.state;
        }
    }

    #[test]
    fn gauge_matches_opinions_at_every_record((p, s) in params_strategy(4).prop_flat_map(|p| (Just(p), state_strategy(4)))) {
        let traj = simulate(&p, &s, &Integrator::new(0.01, 3.0, 7), None).unwrap();
        for st in &traj.states {
            let manual: Vec<i8> = st.o.iter().map(|&v| if v >= 0.0 { 1 } else { -1 }).collect();
            let gauge = st.gauge();
            prop_assert_eq!(gauge.signs(), manual.as_slice());
        }
    }
}

#[test]
fn extremes_of_rate_matrices() {
    let p = SystemParams::new(
        DMatrix::from_row_slice(2, 2, &[0., 2., 2., 0.]),
        DVector::from_vec(vec![2.0, 2.0]),
        1.0,
        0.5,
        DMatrix::from_row_slice(2, 2, &[0., 1., 1., 0.]),
    )
    .unwrap();
    let (d, b) = rate_matrices(&p, &DVector::from_element(2, 0.0));
    assert_eq!(d.as_slice(), &[1.5, 1.5]);
    assert_eq!(b, DMatrix::from_row_slice(2, 2, &[0., 1.25, 1.25, 0.]));
    let (d, b) = rate_matrices(&p, &DVector::from_element(2, 0.5));
    assert_eq!(d.as_slice(), &[2.0, 2.0]);
    assert_eq!(&b, p.infection_min());
    let (d, b) = rate_matrices(&p, &DVector::from_element(2, -0.5));
    assert_eq!(d.as_slice(), &[1.0, 1.0]);
    assert_eq!(&b, p.infection());
}

#[test]
fn perron_root_against_dense_spectrum() {
    let m = DMatrix::from_row_slice(3, 3, &[0., 0., 1., 2., 0., 1., 0., 3., 0.]);
    let dense = dense_spectrum(&m).unwrap();
    let by_modulus = dense.iter().map(|z| z.re.hypot(z.im)).fold(0.0, f64::max);
    assert_abs_diff_eq!(spectral_radius(&m).unwrap().value, by_modulus, epsilon = 1e-10);
}

#[test]
fn healthy_verdicts_agree_with_the_spectrum() {
    let a = DMatrix::from_row_slice(3, 3, &[0., 0., 1., 2., 0., 1., 0., 3., 0.]);
    for scale in [0.3, 0.8, 1.5, 3.0] {
        let p = SystemParams::new(&a * scale, DVector::from_vec(vec![1.5, 1.2, 1.0]), 0.8, 0.1, a.clone())
            .unwrap();
        for eq in dissensus_healthy_equilibria(&p, &EnumerationOptions::default()).unwrap() {
            let margin = max_real_part(&jacobian_at(&p, &eq.point).unwrap()).unwrap();
            match eq.verdict {
                Verdict::Stable => assert!(margin < 0.0),
                Verdict::Unstable => assert!(margin > 0.0),
                Verdict::Marginal => {}
            }
        }
    }
}

#[test]
fn extreme_plan_eradicates_from_random_starts() {
    let p = SystemParams::new(
        DMatrix::from_row_slice(2, 2, &[0., 2., 2., 0.]),
        DVector::from_vec(vec![2.0, 2.0]),
        1.0,
        0.5,
        DMatrix::from_row_slice(2, 2, &[0., 1., 1., 0.]),
    )
    .unwrap();
    let plan = select_stubborn_extreme(&p, SearchMode::Exhaustive).unwrap();
    assert!(plan.predicted_r < 1.0);
    let opts = VerifyOptions {
        horizon: 300.0,
        ..VerifyOptions::default()
    };
    for k in 0..20 {
        let t = k as f64 / 19.0;
        let s0 = State::from_slices(&[t, 1.0 - t], &[0.5 - t, t - 0.5]).unwrap();
        let (checked, _) = verify_plan(&p, &plan, &s0, &opts).unwrap();
        assert!(checked.verified, "start {k}");
    }
}
