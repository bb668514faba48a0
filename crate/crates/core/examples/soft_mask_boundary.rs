//! Soft mask from a shadow / shadow-free pair, its boundary map and the
//! smoothness loss of a candidate output.
//!
//! cargo run --example soft_mask_boundary

use shadowphys::io::{write_mask, write_plane};
use shadowphys::mask::{boundary, loss_smooth, shadow_mask, DEFAULT_TAU};
use shadowphys::synth::{generate, SceneParams};

fn main() -> shadowphys::Result<()> {
    let scene = generate(&SceneParams {
        seed: 7,
        penumbra_sigma: 3.0,
        ..SceneParams::default()
    })?;
    let m = shadow_mask(&scene.shadow_image, &scene.shadowfree_image)?;
    let b = boundary(&m, DEFAULT_TAU)?;
    let (h, w) = (m.height(), m.width());

    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    println!("mask mean {:.3}, truth mean {:.3}", mean(m.as_slice()), mean(scene.gt_mask.as_slice()));
    let peak = b.as_slice().iter().copied().fold(0.0, f64::max);
    println!("boundary peak {peak:.4}");

    // B-weighted gradients of two candidate outputs
    let (clean, _) = loss_smooth(&scene.shadowfree_image, &b)?;
    let (shaded, _) = loss_smooth(&scene.shadow_image, &b)?;
    println!("smoothness loss: shadow-free {clean:.5}, shadowed {shaded:.5}");

    let dir = std::env::temp_dir().join("shadowphys_mask_example");
    std::fs::create_dir_all(&dir).map_err(|e| shadowphys::Error::io(&dir, e))?;
    write_mask(&m, dir.join("mask.png"))?;
    let scaled: Vec<f64> = b.as_slice().iter().map(|v| v / peak.max(1e-12)).collect();
    write_plane(&scaled, h, w, dir.join("boundary.png"))?;
    println!("wrote {}", dir.display());
    Ok(())
}
