mod common;

use common::{absorption_violations, window_crossings};
use howard_core::{materialize_window, site_variates, LatticeSite, ModelConfig, PerturbationLaw, WindowSpec};
use proptest::prelude::*;

fn model() -> impl Strategy<Value = ModelConfig> {
    (any::<u64>(), 0.2f64..0.95, 0.3f64..0.9, 0.3f64..0.9)
        .prop_map(|(seed, p, tx, ty)| ModelConfig::new(seed, p, PerturbationLaw::geometric(tx, ty)).unwrap())
}

fn window() -> impl Strategy<Value = WindowSpec> {
    (-500i64..500, -500i64..500, 4i64..30, 4i64..30)
        .prop_map(|(x, y, w, h)| WindowSpec::new(x, x + w, y, y + h).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn enlarging_a_window_keeps_its_rows(cfg in model(), spec in window(), grow in 1i64..20) {
        let small = materialize_window(&cfg, &spec).unwrap();
        let big_spec = WindowSpec::new(spec.x_lo - grow, spec.x_hi + grow, spec.y_lo - grow, spec.y_hi + grow).unwrap();
        let big = materialize_window(&cfg, &big_spec).unwrap();
        for row in &small.rows {
            let outer = big.row(row.y).unwrap();
            let xs: Vec<i64> = outer.xs.iter().copied().filter(|&x| x >= spec.x_lo && x <= spec.x_hi).collect();
            prop_assert_eq!(&row.xs, &xs);
        }
    }

    #[test]
    fn special_sites_are_their_own_points(cfg in model(), spec in window()) {
        let w = materialize_window(&cfg, &spec).unwrap();
        for y in spec.y_lo..=spec.y_hi {
            let row = w.row(y).unwrap();
            for x in spec.x_lo..=spec.x_hi {
                if site_variates(&cfg, LatticeSite::new(x, y)).is_special() {
                    let i = row.xs.binary_search(&x);
                    prop_assert!(i.is_ok());
                    prop_assert!(row.special[i.unwrap()]);
                }
            }
        }
    }

    #[test]
    fn landings_never_move_down(cfg in model(), spec in window()) {
        let w = materialize_window(&cfg, &spec).unwrap();
        for row in &w.rows {
            for sources in &row.provenance {
                prop_assert!(!sources.is_empty());
                prop_assert!(sources.iter().all(|s| s.y <= row.y));
            }
        }
    }

    #[test]
    fn primal_and_dual_paths_do_not_cross(cfg in model(), x in -500i64..500, y in -500i64..500) {
        let spec = WindowSpec::new(x, x + 40, y, y + 25).unwrap();
        prop_assert_eq!(window_crossings(&cfg, &spec), 0);
    }

    #[test]
    fn merged_paths_stay_merged(cfg in model(), gaps in prop::collection::vec(1i64..6, 1..5)) {
        let mut starts = vec![LatticeSite::new(0, 0)];
        for g in gaps {
            let last = starts.last().unwrap().x;
            starts.push(LatticeSite::new(last + g, 0));
        }
        prop_assert_eq!(absorption_violations(&cfg, &starts, 300), 0);
    }
}
