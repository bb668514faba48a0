//! Generate a small batch of scenes and summarize what each contains.
//!
//! cargo run --example synth_scenes [count]

use shadowphys::synth::{generate, illuminants, SceneParams};

fn main() -> shadowphys::Result<()> {
    let n: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(6);
    println!("seed  strength  soft  gt_angle  shadow%  surfaces");
    for i in 0..n {
        let p = SceneParams {
            seed: 100 + i,
            shadow_strength: (0.4 + 0.1 * i as f64).min(1.0),
            penumbra_sigma: if i % 2 == 1 { 3.0 } else { 0.0 },
            ..SceneParams::default()
        };
        let s = generate(&p)?;
        let covered = s.gt_mask.as_slice().iter().filter(|m| **m > 0.5).count();
        let frac = 100.0 * covered as f64 / s.gt_mask.as_slice().len() as f64;
        let mut labels = s.surface_labels.clone();
        labels.sort_unstable();
        labels.dedup();
        println!(
            "{:4}  {:8.2}  {:>4}  {:8.2}  {:6.1}  {:8}",
            p.seed,
            p.shadow_strength,
            p.penumbra_sigma > 0.0,
            s.gt_angle.degrees(),
            frac,
            labels.len()
        );
    }

    // warmer shadow light moves the invariant direction
    for t in [6500.0, 8000.0, 10000.0] {
        let p = SceneParams {
            shadow_temperature: t,
            ..SceneParams::default()
        };
        let (lit, shadow) = illuminants(&p)?;
        let s = generate(&p)?;
        println!(
            "shadow {t:5} K  lit {lit:.3?}  shadow {shadow:.3?}  angle {:.2}  degenerate {}",
            s.gt_angle.degrees(),
            s.degenerate
        );
    }
    Ok(())
}
