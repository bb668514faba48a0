//! Recover the invariant angle of a synthetic scene and compare the
//! shadow-free chromaticity with the one of the true shadow-free image.
//!
//! cargo run --release --example chroma_recovery [seed]

use shadowphys::chroma::{chromaticity_map, shadow_free_chromaticity};
use shadowphys::synth::{generate, SceneParams};

fn main() -> shadowphys::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(42);
    let scene = generate(&SceneParams {
        seed,
        ..SceneParams::default()
    })?;
    let sf = shadow_free_chromaticity(&scene.shadow_image);

    println!("ground truth angle  {:7.2}", scene.gt_angle.degrees());
    println!("recovered angle     {:7.2}", sf.angle.degrees());
    println!("error               {:7.2}", sf.angle.distance(scene.gt_angle));
    println!("entropy range       {:7.3} bits (flat: {})", sf.profile.range(), sf.profile.is_flat());
    println!("lighting offset     {:7.4}", sf.lighting_offset);

    let truth = chromaticity_map(&scene.shadowfree_image);
    println!("L1 to truth, physics  {:.4}", sf.physics.mean_l1_distance(&truth)?);
    println!("L1 to truth, entropy  {:.4}", sf.entropy.mean_l1_distance(&truth)?);

    // coarse look at the profile around the minimum
    let best = sf.angle.degrees().round() as usize;
    for d in [-20i64, -10, -5, 0, 5, 10, 20] {
        let k = (best as i64 + d).rem_euclid(180) as usize;
        println!("  H({k:3}) = {:.3}", sf.profile.entropies[k]);
    }
    Ok(())
}
