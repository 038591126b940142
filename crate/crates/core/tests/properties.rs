use std::sync::Arc;

use proptest::prelude::*;

use opendyn::conditions::ConditionParams;
use opendyn::inducing::{induce, InducingOptions};
use opendyn::maps::IntervalMap;
use opendyn::open_system::{Hole, OpenSystem};
use opendyn::spectral::{escape_spectral, EigenOptions, Grid};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn logistic_derivative_matches_finite_difference(x in 0.01f64..0.99, lambda in 3.5f64..4.0) {
        prop_assume!((x - 0.5).abs() > 1e-3);
        let f = IntervalMap::logistic(lambda).unwrap();
        let h = 1e-6;
        let fd = (f.eval(x + h).unwrap() - f.eval(x - h).unwrap()) / (2.0 * h);
        let d = f.deriv(x).unwrap();
        prop_assert!((fd - d).abs() <= 1e-6 * d.abs().max(1.0));
    }

    #[test]
    fn tripling_survival_matches_digit_rule(x in 0.0f64..1.0, n in 0usize..8) {
        let sys = OpenSystem::new(IntervalMap::tripling(), Hole::parse("(1/3,2/3)").unwrap()).unwrap();
        let mut y = x;
        let mut alive = true;
        for _ in 0..=n {
            let digit = (3.0 * y).floor();
            if digit == 1.0 && y != 1.0 / 3.0 {
                alive = false;
                break;
            }
            y = 3.0 * y - digit.min(2.0);
        }
        prop_assert_eq!(sys.survives(x, n).unwrap(), alive);
    }
}

#[test]
fn survivor_mass_matches_monte_carlo() {
    for (map, hole) in [
        (IntervalMap::tripling(), "(1/3,2/3)"),
        (IntervalMap::doubling(), "(0,1/4)"),
        (IntervalMap::logistic(4.0).unwrap(), "(0.7,0.8)"),
    ] {
        let sys = OpenSystem::new(map, Hole::parse(hole).unwrap()).unwrap();
        let n = 6;
        let r = sys.refine_survivor(n, 10_000_000);
        let samples = 1_000_000;
        let alive = (0..samples)
            .filter(|&k| sys.survives((k as f64 + 0.5) / samples as f64, n).unwrap())
            .count() as f64
            / samples as f64;
        let se = (alive * (1.0 - alive) / samples as f64).sqrt();
        assert!((r.lebesgue_mass - alive).abs() <= 4.0 * se + 1e-6, "{hole}: {} vs {alive}", r.lebesgue_mass);
    }
}

#[test]
fn survivor_refinements_are_nested() {
    let sys = OpenSystem::new(IntervalMap::logistic(4.0).unwrap(), Hole::parse("(0.4,0.45)").unwrap()).unwrap();
    let mut prev = sys.refine_survivor(0, 10_000_000);
    for n in 1..6 {
        let next = sys.refine_survivor(n, 10_000_000);
        assert!(next.lebesgue_mass <= prev.lebesgue_mass + 1e-12);
        for &(a, b) in &next.intervals {
            assert!(prev.intervals.iter().any(|&(c, d)| c <= a + 1e-12 && b <= d + 1e-12));
        }
        prev = next;
    }
}

#[test]
fn doubling_periodic_point_counts() {
    let f = IntervalMap::doubling();
    for p in 1..=6usize {
        let total: usize = (1..=p)
            .filter(|q| p % q == 0)
            .map(|q| f.periodic_points(q, 1e-12).unwrap().len())
            .sum();
        assert_eq!(total, (1 << p) - 1, "period dividing {p}");
    }
}

#[test]
fn collet_eckmann_failure_persists() {
    let f = IntervalMap::logistic(3.9).unwrap();
    let mut failed_at = None;
    for horizon in 1..=40 {
        let params = ConditionParams {
            horizon,
            big_lambda: 0.4,
            ..ConditionParams::default()
        };
        let pass = f.check_collet_eckmann(&params).unwrap().pass;
        if let Some(h) = failed_at {
            assert!(!pass, "failure at {h} not persistent at {horizon}");
        } else if !pass {
            failed_at = Some(horizon);
        }
    }
}

#[test]
fn escape_rate_shrinks_with_hole() {
    let f = IntervalMap::logistic(4.0).unwrap();
    let mut last = f64::INFINITY;
    for k in 3..8 {
        let eps = 2f64.powi(-k);
        let hole = Hole::from_intervals(&[(0.3 - eps, 0.3 + eps)]).unwrap();
        let grid = Arc::new(Grid::for_system(&f, Some(&hole), 4096, &[]).unwrap());
        let (_, p) = escape_spectral(&f, &hole, 1.0, grid, &EigenOptions::default()).unwrap();
        assert!(p.escape_rate >= 0.0 && p.escape_rate <= last + 1e-12, "k = {k}: {}", p.escape_rate);
        last = p.escape_rate;
    }
}

#[test]
fn induced_branches_respect_the_hole() {
    let sys = OpenSystem::new(IntervalMap::doubling(), Hole::parse("(3/4,7/8)").unwrap()).unwrap();
    let opts = InducingOptions {
        depth: 16,
        ..InducingOptions::default()
    };
    let scheme = induce(&sys, (0.0, 0.5), &opts).unwrap();
    assert!(!scheme.branches.is_empty());
    for b in &scheme.branches {
        let x = 0.5 * (b.domain.0 + b.domain.1);
        let orbit = sys.map().orbit(x, b.tau).unwrap();
        let visits = orbit[..b.tau].iter().any(|&y| sys.hole().contains(y));
        assert_eq!(visits, b.hole_visit, "branch {:?}", b.domain);
        let y = orbit[b.tau];
        assert!((0.0..=0.5).contains(&y), "branch {:?} lands at {y}", b.domain);
    }
}
