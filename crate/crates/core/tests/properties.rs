use std::f64::consts::PI;

use inout::bodies::{BBox, Body};
use inout::diagnostics::{
    enlarged_volume_ratio_mc, expected_trials_check, expected_trials_closed_form, stationary_escape_check,
    stationary_failure_check, GridOracle,
};
use inout::planner::{check_plan_consistency, plan, renyi_error_bound, PlanInputs};
use inout::rng::chain_rng;
use inout::specfun::chi_tail;
use proptest::prelude::*;
use rand::Rng;

fn disk() -> Body {
    Body::ball(vec![0.0, 0.0], 1.0).unwrap()
}

fn annulus() -> Body {
    Body::exclusion(disk(), Body::ball(vec![0.0, 0.0], 0.5).unwrap(), 0.75 * PI).unwrap()
}

fn l_shape() -> Body {
    Body::union(vec![Body::cuboid(vec![0.0, 0.0], vec![2.0, 1.0]).unwrap(), Body::cuboid(vec![0.0, 0.0], vec![1.0, 2.0]).unwrap()], 3.0).unwrap()
}

fn cross() -> Body {
    Body::star_shaped(
        vec![Body::cuboid(vec![-2.0, -0.5], vec![2.0, 0.5]).unwrap(), Body::cuboid(vec![-0.5, -2.0], vec![0.5, 2.0]).unwrap()],
        0.5,
    )
    .unwrap()
    .with_exact_volume(7.0)
    .unwrap()
}

fn test_bodies() -> Vec<(&'static str, Body)> {
    vec![
        ("disk", disk()),
        ("square", Body::cuboid(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap()),
        ("annulus", annulus()),
        ("L-shape", l_shape()),
        ("cross", cross()),
        ("disjoint disks", Body::union(vec![Body::ball(vec![-3.0, 0.0], 1.0).unwrap(), Body::ball(vec![3.0, 0.0], 1.0).unwrap()], 2.0 * PI).unwrap()),
    ]
}

proptest! {
    #[test]
    fn chi_tail_is_monotone(m in 1u32..200, r in 0.0f64..40.0, dr in 0.0f64..5.0) {
        let q = chi_tail(m, r).unwrap();
        prop_assert!((0.0..=1.0).contains(&q));
        prop_assert!(chi_tail(m, r + dr).unwrap() <= q);
        prop_assert!(chi_tail(m + 1, r).unwrap() >= q);
    }

    #[test]
    fn schedule_is_monotone(
        q in 2.0f64..6.0, eps in 0.02f64..0.45, m in 1.0f64..50.0, c in 1.0f64..8.0,
        alpha in 1.0f64..4.0, beta in 0.1f64..2.0, n in 2u32..5, bump in 1.0f64..2.0,
    ) {
        let base = PlanInputs::new(q, eps, m, c, alpha, beta, n).unwrap();
        let t = plan(&base).unwrap().steps;
        for bigger in [
            PlanInputs { q: q * bump, ..base },
            PlanInputs { c_pi: c * bump, ..base },
            PlanInputs { warmness: m * bump, ..base },
            PlanInputs { eps: eps / bump, ..base },
        ] {
            prop_assert!(plan(&bigger).unwrap().steps >= t);
        }
    }

    #[test]
    fn plans_are_consistent_and_meet_target(
        q in 2.0f64..6.0, eps in 0.02f64..0.45, m in 1.0f64..50.0, c in 1.0f64..8.0,
        alpha in 1.0f64..4.0, beta in 0.1f64..2.0, n in 2u32..6,
    ) {
        let inputs = PlanInputs::new(q, eps, m, c, alpha, beta, n).unwrap();
        let p = plan(&inputs).unwrap();
        prop_assert!(check_plan_consistency(&p, &inputs).is_consistent());
        prop_assert!(renyi_error_bound(&p, &inputs, p.eta).unwrap() <= eps);
        prop_assert_eq!(p, plan(&inputs).unwrap());
    }

    #[test]
    fn union_beta_never_exceeds_max(r1 in 0.1f64..3.0, r2 in 0.1f64..3.0) {
        let parts = vec![Body::ball(vec![0.0, 0.0], r1).unwrap(), Body::ball(vec![10.0, 0.0], r2).unwrap()];
        let vol = parts.iter().map(|b| b.exact_volume().unwrap()).sum();
        let u = Body::union(parts, vol).unwrap();
        let g = u.growth().unwrap();
        prop_assert!(g.beta <= (1.0 / r1).max(1.0 / r2) * (1.0 + 1e-12));
        prop_assert!(g.alpha >= 1.0);
    }
}

#[test]
fn beta_clamping_is_exact() {
    let lo = plan(&PlanInputs::new(2.0, 0.2, 1.0, 1.0, 1.0, 1e-6, 4).unwrap()).unwrap();
    let hi = plan(&PlanInputs::new(2.0, 0.2, 1.0, 1.0, 1.0, 0.25, 4).unwrap()).unwrap();
    assert_eq!(lo, hi);
}

#[test]
fn membership_is_deterministic() {
    let mut rng = chain_rng(17);
    for (name, body) in test_bodies() {
        let bb = body.bbox();
        let mut x = vec![0.0; 2];
        for _ in 0..1000 {
            bb.sample_uniform(&mut rng, &mut x);
            let first = body.contains(&x);
            assert!((0..3).all(|_| body.contains(&x) == first), "{name}");
        }
    }
}

#[test]
fn combinators_match_brute_force_on_grid() {
    let a = Body::cuboid(vec![0.0, 0.0], vec![2.0, 1.0]).unwrap();
    let b = Body::cuboid(vec![0.0, 0.0], vec![1.0, 2.0]).unwrap();
    let union = l_shape();
    let outer = disk();
    let hole = Body::ball(vec![0.0, 0.0], 0.5).unwrap();
    let ring = annulus();
    for (body, truth) in [
        (&union, Box::new(|x: &[f64]| a.contains(x) || b.contains(x)) as Box<dyn Fn(&[f64]) -> bool>),
        (&ring, Box::new(|x: &[f64]| outer.contains(x) && x[0].hypot(x[1]) >= 0.5)),
    ] {
        let bb = body.bbox().inflate(0.1);
        for i in 0..200 {
            for j in 0..200 {
                let x = [
                    bb.lo[0] + (i as f64 + 0.5) / 200.0 * (bb.hi[0] - bb.lo[0]),
                    bb.lo[1] + (j as f64 + 0.5) / 200.0 * (bb.hi[1] - bb.lo[1]),
                ];
                assert_eq!(body.contains(&x), truth(&x), "{x:?}");
            }
        }
    }
    // Hole boundary points stay in the body.
    assert!(ring.contains(&[0.5, 0.0]) && !ring.contains(&[0.4999, 0.0]));
    assert!(hole.contains(&[0.5, 0.0]));
}

#[test]
fn polytope_square_matches_box() {
    let a = vec![vec![1.0, 0.0], vec![-1.0, 0.0], vec![0.0, 1.0], vec![0.0, -1.0]];
    let poly = Body::halfspace_polytope(a, vec![1.0, 0.0, 1.0, 0.0], vec![0.5, 0.5], 0.5).unwrap();
    let square = Body::cuboid(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
    let mut rng = chain_rng(4);
    for _ in 0..1000 {
        let x = [rng.random_range(-0.5..1.5), rng.random_range(-0.5..1.5)];
        assert_eq!(poly.contains(&x), square.contains(&x));
    }
}

#[test]
fn closed_form_trials_match_simulation() {
    let mut rng = chain_rng(8);
    for p in [0.1, 0.5, 0.9] {
        for n in [1u64, 5, 50] {
            let draws = 100_000;
            let (mut s, mut s2) = (0.0, 0.0);
            for _ in 0..draws {
                let mut k = 1;
                while k < n && rng.random::<f64>() >= p {
                    k += 1;
                }
                s += k as f64;
                s2 += (k * k) as f64;
            }
            let mean = s / draws as f64;
            let se = ((s2 / draws as f64 - mean * mean) / draws as f64).sqrt();
            let exact = expected_trials_closed_form(p, n);
            assert!((mean - exact).abs() <= 3.0 * se.max(1e-12), "p={p} N={n}: {mean} vs {exact}");
        }
    }
}

#[test]
fn grid_volume_within_one_percent() {
    for (name, body) in test_bodies() {
        let g = GridOracle::new(&body, 400).unwrap();
        let v = body.exact_volume().unwrap();
        assert!((g.volume() / v - 1.0).abs() < 0.01, "{name}: {} vs {v}", g.volume());
    }
    // Convergence with resolution.
    let body = annulus();
    let e100 = (GridOracle::new(&body, 100).unwrap().volume() / body.exact_volume().unwrap() - 1.0).abs();
    let e800 = (GridOracle::new(&body, 800).unwrap().volume() / body.exact_volume().unwrap() - 1.0).abs();
    assert!(e800 <= e100);
}

#[test]
fn enlarged_ratio_at_zero_is_one() {
    for (k, (name, body)) in test_bodies().into_iter().enumerate() {
        let (r, se) = enlarged_volume_ratio_mc(&body, 0.0, 50_000, k as u64).unwrap();
        assert!((r - 1.0).abs() <= 3.0 * se, "{name}: {r} ± {se}");
    }
}

#[test]
fn bound_checks_hold_on_certified_bodies() {
    for (k, (name, body)) in test_bodies().into_iter().take(5).enumerate() {
        let g = body.growth().unwrap();
        let inputs = PlanInputs::new(2.0, 0.2, 1.0, 4.0, g.alpha, g.beta, 2).unwrap();
        let p = plan(&inputs).unwrap();
        let seed = 1000 + k as u64;
        for r in [0.05, 0.1, 0.2] {
            let c = stationary_escape_check(&body, p.h, r, 20_000, seed).unwrap();
            assert!(c.is_satisfied(), "{name}: {c:?}");
        }
        let f = stationary_failure_check(&body, &p, 1000, 1000, seed).unwrap();
        assert!(f.is_satisfied(), "{name}: {f:?}");
        let t = expected_trials_check(&body, &p, 1000, 1000, seed).unwrap();
        assert!(t.is_satisfied(), "{name}: {t:?}");
    }
}

#[test]
fn thin_box_naive_certificate_has_large_but_valid_bound() {
    let thin = Body::cuboid(vec![0.0, 0.0], vec![1.0, 1e-3]).unwrap();
    let naive = inout::bodies::naive_sandwich_certificate(5e-4, 1.0, 2).unwrap();
    let thin = thin.with_growth(naive);
    let inputs = PlanInputs::new(2.0, 0.2, 1.0, 1.0, naive.alpha, naive.beta, 2).unwrap();
    let p = plan(&inputs).unwrap();
    let t = expected_trials_check(&thin, &p, 200, 200, 9).unwrap();
    assert!(t.theoretical_bound > 1e6);
    assert!(t.is_satisfied(), "{t:?}");
}

#[test]
fn predicate_bodies_are_clipped_to_their_box() {
    let b = Body::from_predicate(BBox::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap(), |_| true);
    assert!(b.contains(&[0.5, 0.5]));
    assert!(!b.contains(&[1.5, 0.5]));
}
