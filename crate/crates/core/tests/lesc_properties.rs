//! Randomized properties of edge selection, clustering and re-clustering.

use fello_core::lesc::{cluster, select_edge, should_recluster, ClusterThreshold, Environment, LescConfig, ReclusterPeriod};
use fello_core::optical::LinkBudget;
use fello_core::orbits::{elevation_angle, ground_station_position};
use fello_core::WalkerConfig;
use proptest::prelude::*;

fn env(seed: u64) -> Environment {
    Environment {
        walker: WalkerConfig::default(),
        isl: LinkBudget::default(),
        gsl: LinkBudget::default(),
        seed,
    }
}

fn reference_predicate(k_a: usize, k_prime: usize, eps: f64, round: u32, period: Option<u32>) -> bool {
    let due = match period {
        Some(p) => round % p == 0,
        None => false,
    };
    due && (k_a as f64) < eps * (k_prime as f64)
}

fn period_strategy() -> impl Strategy<Value = Option<u32>> {
    prop_oneof![Just(None), (1u32..6).prop_map(Some)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn recluster_fires_exactly_when_reference_does(
        k0 in 1usize..40,
        eps in 0.05f64..=1.0,
        period in period_strategy(),
        drops in proptest::collection::vec(0usize..4, 1..40),
    ) {
        let p = period.map_or(ReclusterPeriod::Never, ReclusterPeriod::Every);
        let (mut k, mut baseline) = (k0, k0);
        for (i, d) in drops.into_iter().enumerate() {
            let round = i as u32 + 2;
            k = k.saturating_sub(d);
            let fired = should_recluster(k, baseline, eps, round, p);
            prop_assert_eq!(fired, reference_predicate(k, baseline, eps, round, period));
            if fired {
                // A rebuilt cluster returns to full size.
                k = k0;
                baseline = k0;
            }
        }
    }

    #[test]
    fn larger_distance_threshold_never_shrinks_cluster(
        t in 0.0f64..6000.0,
        d1 in 500.0f64..4000.0,
        extra in 0.0f64..2000.0,
    ) {
        let e = env(1);
        let small = LescConfig { threshold: ClusterThreshold::Distance { delta_d_km: d1 }, ..LescConfig::default() };
        let large = LescConfig { threshold: ClusterThreshold::Distance { delta_d_km: d1 + extra }, ..LescConfig::default() };
        let edge = select_edge(&e, &small, t).unwrap();
        let a = cluster(&e, &small, edge, t, 3).unwrap();
        let b = cluster(&e, &large, edge, t, 3).unwrap();
        prop_assert!(a.is_subset(&b));
        prop_assert!(!b.contains(&edge));
    }

    #[test]
    fn lower_snr_threshold_never_shrinks_cluster(
        t in 0.0f64..6000.0,
        g_db in 40.0f64..70.0,
        less in 0.0f64..10.0,
        seed in 0u64..1000,
    ) {
        let e = env(seed);
        let linear = |db: f64| 10f64.powf(db / 10.0);
        let strict = LescConfig { threshold: ClusterThreshold::Snr { delta_gamma: linear(g_db) }, ..LescConfig::default() };
        let loose = LescConfig { threshold: ClusterThreshold::Snr { delta_gamma: linear(g_db - less) }, ..LescConfig::default() };
        let edge = select_edge(&e, &strict, t).unwrap();
        let a = cluster(&e, &strict, edge, t, 7).unwrap();
        let b = cluster(&e, &loose, edge, t, 7).unwrap();
        prop_assert!(a.is_subset(&b));
    }

    #[test]
    fn edge_is_nearest_visible_satellite(
        t in 0.0f64..20_000.0,
        lat in -60.0f64..60.0,
        lon in -180.0f64..180.0,
    ) {
        let e = env(1);
        let cfg = LescConfig { gs_lat: lat.to_radians(), gs_lon: lon.to_radians(), ..LescConfig::default() };
        let gs = ground_station_position(cfg.gs_lat, cfg.gs_lon, e.walker.earth_radius_km);
        let mut best: Option<(f64, _)> = None;
        for (sat, pos) in e.walker.snapshot(t).unwrap() {
            if elevation_angle(&gs, &pos) >= cfg.min_elevation {
                let d = gs.distance_to(&pos);
                if best.as_ref().is_none_or(|(bd, _)| d < *bd) {
                    best = Some((d, sat));
                }
            }
        }
        match best {
            Some((_, sat)) => prop_assert_eq!(select_edge(&e, &cfg, t).unwrap(), sat),
            None => prop_assert!(select_edge(&e, &cfg, t).is_err()),
        }
    }
}
