use std::f64::consts::FRAC_PI_2;

use proptest::prelude::*;
use slip_core::dynamics::{EventKind, HybridState, ModelParams};
use slip_core::section::*;

fn p() -> ModelParams {
    ModelParams::default()
}

#[test]
fn embedding_examples() {
    let p = p();
    let rest = SectionState::new(1.0, 0.0, p.weight());
    let st = embed(&rest, &p).unwrap();
    assert_eq!((st.r, st.theta, st.rdot), (1.0, FRAC_PI_2, 0.0));
    assert_eq!(st.thetadot, 0.0);

    let moving = SectionState::new(1.0, 0.0, p.weight() + 0.5 * p.mass);
    assert!((moving.vx(&p).unwrap() - 1.0).abs() < 1e-12);
    let st = embed(&moving, &p).unwrap();
    // forward motion: the mass moves in +x over the foot
    let (vx, vy) = st.velocity();
    assert!((vx - 1.0).abs() < 1e-12 && vy.abs() < 1e-12);
    assert!(st.thetadot > 0.0);

    assert!(embed(&SectionState::new(1.0, 0.0, p.weight() - 1.0), &p).is_err());
}

#[test]
fn embed_then_observe_is_identity() {
    let p = p();
    for (r, vy, e) in [(0.97, 0.1, 840.0), (0.95, -0.2, 820.0), (1.0, 0.0, 900.0)] {
        let s = SectionState::new(r, vy, e);
        let back = SectionState::observe(&embed(&s, &p).unwrap(), &p);
        assert_eq!((back.r, back.vy), (r, vy));
        assert!((back.energy - e).abs() < 1e-10 * e);
    }
}

/// Bisection on the vertical landing velocity of running steps from `vy = 0`.
fn running_fixed_point(e: f64, p: &ModelParams) -> Option<(SectionState, f64)> {
    let (r_min, r_max) = r_bounds(e, p).unwrap();
    for i in 1..40 {
        let r = r_min + (r_max - r_min) * i as f64 / 40.0;
        let s = SectionState::new(r, 0.0, e);
        let vy = |a: f64| step(&s, GaitKind::Running, a, p).ok().and_then(|o| o.landing(GaitKind::Running)).map(|n| n.vy);
        let mut prev: Option<(f64, f64)> = None;
        for k in 30..90 {
            let a = (k as f64).to_radians();
            let cur = vy(a);
            if let (Some((a0, v0)), Some(v1)) = (prev, cur) {
                if v0 * v1 < 0.0 {
                    let (mut lo, mut hi, mut vlo) = (a0, a, v0);
                    for _ in 0..60 {
                        let mid = 0.5 * (lo + hi);
                        let Some(vm) = vy(mid) else { break };
                        if vm * vlo > 0.0 {
                            lo = mid;
                            vlo = vm;
                        } else {
                            hi = mid;
                        }
                    }
                    let alpha = 0.5 * (lo + hi);
                    if let Some(n) = step(&s, GaitKind::Running, alpha, p).unwrap().landing(GaitKind::Running) {
                        if (n.r - r).abs() < 1e-6 {
                            return Some((s, alpha));
                        }
                    }
                }
            }
            prev = cur.map(|v| (a, v));
        }
    }
    None
}

#[test]
fn symmetric_running_step_returns_to_itself_and_mirrors() {
    let p = p();
    let (s, alpha) = running_fixed_point(840.0, &p).expect("a symmetric running gait at 840 J");
    let out = step(&s, GaitKind::Running, alpha, &p).unwrap();
    let next = out.landing(GaitKind::Running).unwrap();
    assert!((next.r - s.r).abs() <= 1e-6 && next.vy.abs() <= 1e-6, "{next:?} vs {s:?}");

    // hip height is even about mid-step
    let mut opts = StepOptions::default();
    opts.integrator = opts.integrator.with_samples(1e-4);
    let out = step_with(&s, GaitKind::Running, alpha, &p, &opts).unwrap();
    let ok = out.success().unwrap();
    let mut ys: Vec<(f64, f64)> = ok.segments.iter().flat_map(|seg| seg.samples.iter().map(|(t, h)| (*t, h.position().1))).collect();
    ys.sort_by(|a, b| a.0.total_cmp(&b.0));
    let y_at = |t: f64| {
        let k = ys.partition_point(|(ti, _)| *ti <= t).clamp(1, ys.len() - 1);
        let ((t0, y0), (t1, y1)) = (ys[k - 1], ys[k]);
        y0 + (y1 - y0) * (t - t0) / (t1 - t0)
    };
    let dur = ok.duration;
    let mut worst: f64 = 0.0;
    for &(t, y) in ys.iter().filter(|(t, _)| *t >= 1e-4 && *t <= dur - 1e-4) {
        worst = worst.max((y - y_at(dur - t)).abs());
    }
    assert!(worst <= 1e-6, "asymmetry {worst:e}");
}

#[test]
fn walking_request_reports_grounded_running() {
    let p = p();
    let e = 840.0;
    let (r_min, r_max) = r_bounds(e, &p).unwrap();
    let v = vy_max(e, &p).unwrap();
    let mut grounded = 0;
    let mut walking = 0;
    for i in 1..12 {
        for j in 1..12 {
            let s = SectionState::new(r_min + (r_max - r_min) * i as f64 / 12.0, v * (j as f64 / 6.0 - 1.0), e);
            if !s.is_valid(&p) {
                continue;
            }
            for k in (40..90).step_by(2) {
                let out = step(&s, GaitKind::Walking, (k as f64).to_radians(), &p).unwrap();
                let Some(ok) = out.success() else { continue };
                let ev = ok.events.iter().find(|e| e.kind == EventKind::StanceToDouble).unwrap();
                let vy_ev = ev.state.velocity().1;
                assert_eq!(ok.realized, classify_double_touchdown(vy_ev));
                match ok.realized {
                    GaitKind::GroundedRunning => grounded += 1,
                    GaitKind::Walking => walking += 1,
                    GaitKind::Running => panic!("walking sequence realized running"),
                }
            }
        }
    }
    assert!(grounded > 0 && walking > 0, "grounded {grounded}, walking {walking}");
}

#[test]
fn hopping_is_the_composition_of_its_sub_steps() {
    let p = p();
    let e = 840.0;
    let mut found = 0;
    'outer: for r in [0.96, 0.97, 0.98] {
        for vy in [-0.1, 0.0, 0.1] {
            let s = SectionState::new(r, vy, e);
            for a in (55..80).map(|k| (k as f64).to_radians()) {
                for b in (55..80).step_by(3).map(|k| (k as f64).to_radians()) {
                    let h = step_hopping(&s, a, b, &p).unwrap();
                    let Some(end) = h.next() else { continue };
                    let mid = step(&s, GaitKind::Walking, a, &p).unwrap().success().unwrap().next;
                    let direct = step(&mid, GaitKind::Running, b, &p).unwrap().success().unwrap().next;
                    assert_eq!(end, direct);
                    assert_eq!(h.walk.success().unwrap().next, mid);
                    let end_state = h.run.as_ref().unwrap().success().unwrap().end_state;
                    let e_end = HybridState::Stance(end_state).energy(&p);
                    assert!((e_end - e).abs() <= 1e-6 * e);
                    found += 1;
                    if found >= 5 {
                        break 'outer;
                    }
                }
            }
        }
    }
    assert!(found > 0, "no successful walk-run pair found");
}

#[test]
fn states_outside_the_ellipse_have_no_angles() {
    let p = p();
    let s = SectionState::new(0.9, 5.0, 800.0);
    assert!(!s.is_valid(&p));
    assert!(valid_angle_set(&s, GaitKind::Walking, &p, None, 0.01).unwrap().is_empty());
    assert!(valid_angle_set(&SectionState::new(0.97, 0.0, 840.0), GaitKind::Walking, &p, None, 0.0).is_err());
}

#[test]
fn refining_the_sweep_never_shrinks_an_interval_by_more_than_the_resolution() {
    let p = p();
    let coarse = 0.5f64.to_radians();
    let e = 840.0;
    let (r_min, r_max) = r_bounds(e, &p).unwrap();
    let mut checked = 0;
    for gait in [GaitKind::Walking, GaitKind::Running] {
        for i in 1..8 {
            let s = SectionState::new(r_min + (r_max - r_min) * i as f64 / 8.0, 0.05, e);
            let a = valid_angle_set(&s, gait, &p, None, coarse).unwrap();
            let b = valid_angle_set(&s, gait, &p, None, coarse / 2.0).unwrap();
            for iv in &a {
                assert!(
                    b.iter().any(|f| f.lo <= iv.lo + coarse && f.hi >= iv.hi - coarse),
                    "{iv:?} lost under refinement: {b:?}"
                );
                checked += 1;
            }
        }
    }
    assert!(checked >= 4, "{checked}");
}

#[test]
fn largest_valid_interval_is_tens_of_degrees() {
    let p = p();
    let res = 0.5f64.to_radians();
    let mut widest: f64 = 0.0;
    for e in [800.0, 840.0, 880.0] {
        let (r_min, r_max) = r_bounds(e, &p).unwrap();
        let v = vy_max(e, &p).unwrap();
        for i in 0..=8 {
            for j in 0..=8 {
                let s = SectionState::new(r_min + (r_max - r_min) * i as f64 / 8.0, v * (j as f64 / 4.0 - 1.0), e);
                for gait in [GaitKind::Walking, GaitKind::Running] {
                    for iv in valid_angle_set(&s, gait, &p, None, res).unwrap() {
                        widest = widest.max(iv.width());
                    }
                }
            }
        }
    }
    let deg = widest.to_degrees();
    eprintln!("largest valid interval: {deg:.2} deg");
    assert!(deg > 5.0 && deg < 70.0, "{deg}");
}

fn gait_strategy() -> impl Strategy<Value = GaitKind> {
    prop_oneof![Just(GaitKind::Walking), Just(GaitKind::Running)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn successful_steps_stay_on_the_energy_ellipsoid(
        e in 790.0f64..900.0,
        u in 0.05f64..1.0,
        w in -0.9f64..0.9,
        a in 50.0f64..85.0,
        gait in gait_strategy(),
    ) {
        let p = p();
        let (r_min, r_max) = r_bounds(e, &p).unwrap();
        let r = r_min + u * (r_max - r_min);
        let s = SectionState::new(r, 0.0, e);
        let s = SectionState::new(r, w * s.vx_squared(&p).max(0.0).sqrt(), e);
        prop_assume!(s.is_valid(&p));
        let out = step(&s, gait, a.to_radians(), &p).unwrap();
        if let Some(ok) = out.success() {
            prop_assert!(ok.next.is_valid(&p));
            prop_assert_eq!(ok.next.energy, e);
            let e_end = HybridState::Stance(ok.end_state).energy(&p);
            prop_assert!((e_end - e).abs() <= 1e-6 * e);
            prop_assert!((ok.end_state.theta - FRAC_PI_2).abs() < 1e-9);
            prop_assert!(ok.duration > 0.0);
        } else {
            prop_assert!(out.failure().is_some());
        }
    }
}
