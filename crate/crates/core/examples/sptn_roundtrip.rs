//! Write externally computed features as SPTN tensors, read them back and
//! feed them to the feature loss, as an exporter would.
//!
//! cargo run --example sptn_roundtrip

use shadowphys::image::FeatureMap;
use shadowphys::losses::loss_feature;
use shadowphys::tensor::{read_tensor, read_tensor_file, write_tensor};

fn main() -> shadowphys::Result<()> {
    let dir = std::env::temp_dir().join("shadowphys_sptn_example");
    std::fs::create_dir_all(&dir).map_err(|e| shadowphys::Error::io(&dir, e))?;

    let (c, h, w) = (4, 6, 5);
    let a = FeatureMap::new(c, h, w, (0..c * h * w).map(|i| (i as f64 * 0.1).sin()).collect())?;
    let b = FeatureMap::new(c, h, w, (0..c * h * w).map(|i| (i as f64 * 0.1).cos()).collect())?;
    write_tensor(&a, dir.join("input.sptn"))?;
    write_tensor(&b, dir.join("output.sptn"))?;

    let raw = read_tensor_file(dir.join("input.sptn"))?;
    println!("dims {:?}, {} values", raw.dims, raw.data.len());

    let a2 = read_tensor(dir.join("input.sptn"))?;
    let b2 = read_tensor(dir.join("output.sptn"))?;
    // stored as f32, so expect single-precision agreement
    let drift = a.as_slice().iter().zip(a2.as_slice()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    println!("max round-trip drift {drift:.2e}");

    let (v, _) = loss_feature(&b2, &a2)?;
    let (v64, _) = loss_feature(&b, &a)?;
    println!("feature loss from files {v:.6}, in memory {v64:.6}");
    Ok(())
}
