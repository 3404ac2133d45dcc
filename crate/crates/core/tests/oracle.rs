mod common;

use common::{brute_path, fixtures, window_mismatches};
use howard_core::network::{ph_step, trace_path};
use howard_core::{materialize_window, LatticeSite, LazyField, LazyOptions, WindowSpec};

#[test]
fn windows_match_a_four_times_deeper_scan() {
    for (i, (cfg, spec)) in fixtures(50, 11).into_iter().enumerate() {
        assert_eq!(window_mismatches(&cfg, &spec), 0, "fixture {i}: {spec:?}");
    }
}

#[test]
fn lazy_trace_matches_brute_force_steps() {
    for (i, (cfg, spec)) in fixtures(20, 12).into_iter().enumerate() {
        let start = LatticeSite::new(spec.x_lo, spec.y_lo);
        let mut lazy = LazyField::new(cfg, LazyOptions::default()).unwrap();
        let trace = trace_path(&mut lazy, start, 60);
        assert!(!trace.truncated);
        assert_eq!(trace.vertices, brute_path(&cfg, start, 60), "fixture {i}");
    }
}

#[test]
fn trace_is_the_composition_of_single_steps() {
    for (cfg, _) in fixtures(20, 13) {
        let start = LatticeSite::new(0, 0);
        let spec = WindowSpec::new(-120, 120, 0, 80).unwrap();
        let mut window = materialize_window(&cfg, &spec).unwrap();
        let trace = trace_path(&mut window, start, 80);
        let mut lazy = LazyField::new(cfg, LazyOptions::default()).unwrap();
        let mut u = start;
        let mut steps = vec![u];
        for _ in 0..80 {
            u = ph_step(&mut lazy, 0, u).unwrap();
            steps.push(u);
        }
        assert!(!trace.truncated);
        assert_eq!(trace.vertices, steps);
    }
}
