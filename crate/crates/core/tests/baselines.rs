mod common;

use common::{fixture, grid_max_2d, pg_max_potential, uniform_values, Subgame};
use jaspa::baselines::{closest_ap, exhaustive_sep, k_connectivity, max_throughput, DEFAULT_ENUMERATION_CAP};
use jaspa::equilibria::{ne_residual, solve_all, InnerSolver};
use jaspa::netmodel::{generate_snapshot, NetworkParams, NetworkSnapshot};
use jaspa::radio::{sum_rate, AssociationProfile};
use jaspa::selection::{jaspa_run, se_jaspa_run, si_jaspa_run, JaspaConfig};
use proptest::prelude::*;

const TOL: f64 = 1e-7;

/// SEP of `a` with every per-AP maximum taken by the projected-gradient oracle.
fn oracle_sep(s: &NetworkSnapshot, a: &AssociationProfile) -> f64 {
    (0..s.n_aps())
        .map(|w| {
            let members = a.members(w);
            if members.is_empty() {
                s.channels(w).iter().map(|&k| s.noise(k).ln()).sum()
            } else {
                pg_max_potential(&Subgame::from_snapshot(s, &members, w), 1e-7).0
            }
        })
        .sum()
}

#[test]
fn exhaustive_sep_matches_projected_gradient_oracle() {
    for seed in 0..5 {
        let s = generate_snapshot(&NetworkParams::new(3, 2, 6, 70 + seed)).unwrap();
        let ex = exhaustive_sep(&s, TOL, DEFAULT_ENUMERATION_CAP, true).unwrap();
        let mut best = f64::MIN;
        for code in 0..8usize {
            let a = AssociationProfile((0..3).map(|i| (code >> i) & 1).collect());
            let oracle = oracle_sep(&s, &a);
            let row = ex.per_profile.as_ref().unwrap().iter().find(|r| r.assoc == a).unwrap();
            assert!(
                (row.sep - oracle).abs() < 1e-5,
                "seed {seed} {}: {} vs {oracle}",
                a.label(),
                row.sep
            );
            best = best.max(oracle);
        }
        assert!((ex.best_sep - best).abs() < 1e-5);
    }
}

#[test]
fn max_throughput_matches_grid_on_two_cus() {
    for seed in 0..4 {
        let g = uniform_values(seed, 6, 0.1, 2.0);
        let noise = [0.05 + 0.2 * g[4], 0.05 + 0.2 * g[5]];
        let s = fixture(
            vec![vec![0, 1]],
            vec![vec![g[0], g[1]], vec![g[2], g[3]]],
            noise.to_vec(),
        );
        let bound = max_throughput(&s, TOL, DEFAULT_ENUMERATION_CAP).unwrap();
        // Network throughput: sum over channels of ln(1 + received power / noise).
        let throughput = |x: f64, y: f64| {
            (1.0 + (g[0] * x + g[2] * y) / noise[0]).ln()
                + (1.0 + (g[1] * (1.0 - x) + g[3] * (1.0 - y)) / noise[1]).ln()
        };
        let (_, _, oracle) = grid_max_2d(throughput, 1.0, 1.0);
        assert!(
            (bound.t_star - oracle).abs() < 1e-4,
            "seed {seed}: {} vs {oracle}",
            bound.t_star
        );
    }
}

#[test]
fn k_connectivity_two_cus_is_an_equilibrium() {
    let s = fixture(
        vec![vec![0, 1], vec![2]],
        vec![vec![1.0, 0.3, 0.8], vec![0.2, 1.4, 0.6]],
        vec![0.1, 0.2, 0.15],
    );
    let kc = k_connectivity(&s, 1e-7).unwrap();
    assert!(kc.report.converged);
    let merged = s.merged();
    let a = AssociationProfile::uniform(2, 0);
    assert!(ne_residual(&merged, &a, &kc.power, 0).unwrap() < 1e-7);
}

fn small_snapshot() -> impl Strategy<Value = NetworkSnapshot> {
    (1usize..5, 1usize..4, 0usize..4, any::<u64>())
        .prop_map(|(n, w, extra, seed)| generate_snapshot(&NetworkParams::new(n, w, 2 * w + extra, seed)).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn exhaustive_dominates_closest_ap(s in small_snapshot()) {
        let ex = exhaustive_sep(&s, 1e-8, DEFAULT_ENUMERATION_CAP, false).unwrap();
        let a = closest_ap(&s);
        let sep = jaspa::equilibria::system_equilibrium_potential(&s, &a, 1e-8).unwrap();
        prop_assert!(ex.best_sep >= sep - 1e-9);
    }

    #[test]
    fn no_single_association_algorithm_beats_the_capacity_bound(s in small_snapshot(), seed: u64) {
        let t_star = max_throughput(&s, 1e-8, DEFAULT_ENUMERATION_CAP).unwrap().t_star;
        let cfg = JaspaConfig::new(s.n_cus(), seed);
        let mut realized = vec![
            jaspa_run(&s, &cfg).unwrap().sum_rate(&s),
            si_jaspa_run(&s, &cfg).unwrap().sum_rate(&s),
        ];
        let mut se_cfg = cfg.clone();
        se_cfg.max_outer = 500 * s.n_cus();
        realized.push(se_jaspa_run(&s, &se_cfg).unwrap().sum_rate(&s));
        let a = closest_ap(&s);
        let (p, _) = solve_all(&s, &a, InnerSolver::SIwf, 1e-8).unwrap();
        realized.push(sum_rate(&s, &a, &p));
        for r in realized {
            prop_assert!(r <= t_star + 1e-6, "{} > {}", r, t_star);
        }
    }
}
