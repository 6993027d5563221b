//! Prints the symmetric walking and running states over the energy sweep.
//!
//! Usage: `cargo run --release --example symmetric_locus [nodes] [resolution_deg]`

use slip_core::dynamics::ModelParams;
use slip_core::regions::*;
use slip_core::section::GaitKind;

fn main() {
    let mut args = std::env::args().skip(1);
    let n: usize = args.next().map_or(101, |s| s.parse().expect("node count"));
    let res: f64 = args.next().map_or(0.05, |s| s.parse().expect("resolution in degrees"));
    let p = ModelParams::default();
    let opts = RegionOptions::default().with_resolution_deg(res);
    for e in (780..=900).step_by(10).map(f64::from) {
        let ax = GridAxes::for_energy(e, GridSpec { n_r: n, n_vy: 3 }, &p).expect("energy above the minimum");
        for gait in [GaitKind::Walking, GaitKind::Running] {
            let locus = symmetric_locus(e, gait, &ax, &p, &opts);
            let segs: Vec<String> =
                locus_segments(&locus).iter().map(|(a, b)| format!("[{:.4}, {:.4}]", ax.r(*a), ax.r(*b))).collect();
            let fr = froude_range(locus.iter().map(|s| s.state), &p)
                .map_or("-".to_string(), |(lo, hi)| format!("{lo:.3}..{hi:.3}"));
            println!("{e:>5} J {gait:<8} {:>3} states, Froude {fr}, r segments {}", locus.len(), segs.join(" "));
        }
    }
}
