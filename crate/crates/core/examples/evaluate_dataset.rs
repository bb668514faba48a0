//! Lay out a tiny dataset on disk and evaluate it under every protocol.
//!
//! cargo run --release --example evaluate_dataset

use shadowphys::eval::{run_dataset, DatasetLayout, Protocol};
use shadowphys::image::Image;
use shadowphys::io::{write_image, write_mask};
use shadowphys::synth::{generate, SceneParams};

fn main() -> shadowphys::Result<()> {
    let root = std::env::temp_dir().join("shadowphys_eval_example");
    let dirs = ["results", "gt", "masks", "inputs"].map(|d| root.join(d));
    for d in &dirs {
        std::fs::create_dir_all(d).map_err(|e| shadowphys::Error::io(d, e))?;
    }
    for k in 0..4u64 {
        let s = generate(&SceneParams {
            seed: k,
            width: 96,
            height: 80,
            ..SceneParams::default()
        })?;
        // a "result" that removes only half of the shadow
        let half: Vec<f64> = s
            .shadow_image
            .as_slice()
            .iter()
            .zip(s.shadowfree_image.as_slice())
            .map(|(a, b)| 0.5 * (a + b))
            .collect();
        let name = format!("img{k}.png");
        write_image(&Image::new(80, 96, half)?, dirs[0].join(&name))?;
        write_image(&s.shadowfree_image, dirs[1].join(&name))?;
        write_image(&s.shadow_image, dirs[3].join(&name))?;
        // leave one mask out so its pair falls back to Otsu
        if k != 3 {
            write_mask(&s.gt_mask, dirs[2].join(&name))?;
        }
    }
    let layout = DatasetLayout {
        results: dirs[0].clone(),
        gt: dirs[1].clone(),
        masks: Some(dirs[2].clone()),
        shadow_inputs: Some(dirs[3].clone()),
    };
    for protocol in Protocol::grid() {
        let report = run_dataset(&layout, protocol)?;
        let a = &report.aggregate;
        println!(
            "{:>3}/{:<6}  all {:6.3}  shadow {:6.3}  non-shadow {:6.3}  psnr {:5.2}",
            protocol.space.to_string(),
            protocol.resize.to_string(),
            a.mae_all,
            a.mae_shadow.unwrap_or(f64::NAN),
            a.mae_nonshadow.unwrap_or(f64::NAN),
            a.psnr
        );
    }
    let report = run_dataset(&layout, Protocol::default())?;
    print!("{}", report.to_csv()?);
    Ok(())
}
