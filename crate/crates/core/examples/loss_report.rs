//! Assemble a full loss report for one training step from images, stand-in
//! features and discriminator scores, plus an attention map.
//!
//! cargo run --example loss_report

use shadowphys::chroma::{loss_chroma, shadow_free_chromaticity};
use shadowphys::features::standin_features;
use shadowphys::losses::{
    adv_loss_removal, attention_map, domcls_loss_generator, loss_consistency, loss_feature, loss_identity,
    loss_report, DomainScore, LossTerms, LossWeights,
};
use shadowphys::mask::{boundary, loss_smooth, shadow_mask, DEFAULT_TAU};
use shadowphys::synth::{generate, SceneParams};

fn main() -> shadowphys::Result<()> {
    let scene = generate(&SceneParams {
        seed: 3,
        width: 64,
        height: 64,
        penumbra_sigma: 2.0,
        ..SceneParams::default()
    })?;
    let input = &scene.shadow_image;
    // pretend the generator produced the true shadow-free image
    let output = &scene.shadowfree_image;

    let sigma = shadow_free_chromaticity(input);
    let (chroma, _) = loss_chroma(output, &sigma.physics)?;
    let (feature, _) = loss_feature(&standin_features(output), &standin_features(input))?;
    let b = boundary(&shadow_mask(input, output)?, DEFAULT_TAU)?;
    let (smooth, _) = loss_smooth(output, &b)?;
    let (cons, _) = loss_consistency(input, input)?;
    let (iden, _) = loss_identity(output, output)?;

    let scores = |ps: &[f64]| ps.iter().map(|&p| DomainScore::new(p)).collect::<shadowphys::Result<Vec<_>>>();
    let domcls = domcls_loss_generator(&scores(&[0.9, 0.8])?, &scores(&[0.2, 0.1])?)?;
    let adv = adv_loss_removal(&[0.7, 0.6], &[0.4, 0.3])?;

    let terms = LossTerms {
        chroma: Some(chroma),
        feature: Some(feature),
        smooth: Some(smooth),
        domcls_g: Some(domcls),
        adv_s_to_sf: Some(adv),
        cons_s: Some(cons),
        iden_s: Some(iden),
        ..LossTerms::default()
    };
    let report = loss_report(terms, LossWeights::default())?;
    println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));

    // attention from the stand-in features, weighting the contrast planes
    let f = standin_features(input);
    let w: Vec<f64> = (0..f.channels()).map(|c| if c < f.channels() / 2 { 0.0 } else { 1.0 }).collect();
    let a = attention_map(&f, &w)?.normalized();
    let inside: Vec<f64> = a
        .as_slice()
        .iter()
        .zip(scene.gt_mask.as_slice())
        .filter(|(_, m)| **m > 0.5)
        .map(|(v, _)| *v)
        .collect();
    if !inside.is_empty() {
        println!("mean attention inside shadow {:.3}", inside.iter().sum::<f64>() / inside.len() as f64);
    }
    Ok(())
}
