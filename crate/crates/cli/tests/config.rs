use std::path::PathBuf;

use proptest::prelude::*;
use slip_cli::config::EnergySweep;
use slip_cli::RunConfig;
use slip_core::regions::{GridSpec, Snap, ViabilityTarget};

fn config() -> impl Strategy<Value = RunConfig> {
    (
        (60.0f64..100.0, 10_000.0f64..30_000.0, 0.8f64..1.2, 9.0f64..10.0),
        (700.0f64..900.0, 0.0f64..200.0, 1.0f64..50.0),
        prop::collection::vec(0.01f64..10.0, 1..5),
        (2usize..400, 2usize..400, 0.01f64..5.0),
        (any::<bool>(), any::<bool>(), "[a-z0-9_./-]{1,20}", any::<u64>(), 0usize..64),
    )
        .prop_map(|((mass, stiffness, rest_length, gravity), (start, span, step), da, (n_r, n_vy, res), (cons, any_valid, dir, seed, threads))| {
            let mut c = RunConfig::default();
            c.params.mass = mass;
            c.params.stiffness = stiffness;
            c.params.rest_length = rest_length;
            c.params.gravity = gravity;
            c.sweep = EnergySweep { start, stop: start + span, step };
            c.delta_alpha_deg = da;
            c.grid = GridSpec { n_r, n_vy };
            c.angle_resolution_deg = res;
            c.snap = if cons { Snap::Conservative } else { Snap::Nearest };
            c.viability_target = if any_valid { ViabilityTarget::AnyValid } else { ViabilityTarget::SameGait };
            c.out_dir = PathBuf::from(dir);
            c.seed = seed;
            c.threads = threads;
            c
        })
}

proptest! {
    #[test]
    fn rendered_config_parses_back(c in config()) {
        let text = c.to_text();
        let back = RunConfig::parse(&text).unwrap();
        prop_assert_eq!(&back, &c);
        prop_assert_eq!(back.to_text(), text);
    }

    #[test]
    fn parser_never_panics(text in "(\\[[a-z]{0,8}\\]|[a-z_]{0,12} ?= ?[0-9a-z.,x -]{0,12}|#.*|)(\n(\\[[a-z]{0,8}\\]|[a-z_]{0,12} ?= ?[0-9a-z.,x -]{0,12}|#.*|)){0,8}") {
        let _ = RunConfig::parse(&text);
    }
}
