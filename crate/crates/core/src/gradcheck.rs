//! Central finite-difference checks of the analytic loss gradients.
//!
//! Each trial draws a small random problem whose L1 arguments all stay at
//! least [`KINK_MARGIN`] away from zero, so a step of [`FD_STEP`] never crosses
//! a kink.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::chroma::{chromaticity_map, loss_chroma, ChromaticityImage};
use crate::image::{FeatureMap, Image};
use crate::losses::{loss_consistency, loss_feature, loss_identity};
use crate::mask::{loss_smooth, BoundaryMap};

pub const FD_STEP: f64 = 1e-4;
pub const TOLERANCE: f64 = 1e-3;
pub const DEFAULT_TRIALS: usize = 100;
const KINK_MARGIN: f64 = 1e-3;
const H: usize = 4;
const W: usize = 5;

#[derive(Debug, Clone, Serialize)]
pub struct GradCheck {
    pub loss: &'static str,
    pub trials: usize,
    pub max_rel_error: f64,
}

impl GradCheck {
    pub fn passed(&self) -> bool {
        self.max_rel_error < TOLERANCE
    }
}

/// `max_k |a_k - n_k| / max(|a|_inf, |n|_inf, 1e-8)` where `n` is the central
/// difference of `f` at `x`.
pub fn relative_error(analytic: &[f64], x: &[f64], f: impl Fn(&[f64]) -> f64) -> f64 {
    let mut probe = x.to_vec();
    let mut worst = 0.0f64;
    let mut scale = 1e-8f64;
    for (k, &a) in analytic.iter().enumerate() {
        probe[k] = x[k] + FD_STEP;
        let up = f(&probe);
        probe[k] = x[k] - FD_STEP;
        let down = f(&probe);
        probe[k] = x[k];
        let n = (up - down) / (2.0 * FD_STEP);
        worst = worst.max((a - n).abs());
        scale = scale.max(a.abs()).max(n.abs());
    }
    worst / scale
}

fn uniform(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

fn clear_of_kinks(diffs: impl IntoIterator<Item = f64>) -> bool {
    diffs.into_iter().all(|d| d.abs() > KINK_MARGIN)
}

/// Draws pairs until every elementwise difference clears the kink margin.
fn separated_pair(rng: &mut ChaCha8Rng, n: usize) -> (Vec<f64>, Vec<f64>) {
    loop {
        let a = uniform(rng, n, 0.05, 0.95);
        let b = uniform(rng, n, 0.05, 0.95);
        if clear_of_kinks(a.iter().zip(&b).map(|(x, y)| x - y)) {
            return (a, b);
        }
    }
}

fn image(data: &[f64]) -> Image {
    Image::new(H, W, data.to_vec()).expect("trial values lie in [0, 1]")
}

fn trial_chroma(rng: &mut ChaCha8Rng) -> f64 {
    loop {
        let z = uniform(rng, H * W * 3, 0.2, 0.9);
        let target: ChromaticityImage = chromaticity_map(&image(&uniform(rng, H * W * 3, 0.1, 1.0)));
        let sigma = chromaticity_map(&image(&z));
        if !clear_of_kinks(sigma.as_slice().iter().zip(target.as_slice()).map(|(a, b)| a - b)) {
            continue;
        }
        let (_, grad) = loss_chroma(&image(&z), &target).expect("shapes agree");
        return relative_error(&grad, &z, |x| loss_chroma(&image(x), &target).expect("shapes agree").0);
    }
}

fn trial_smooth(rng: &mut ChaCha8Rng) -> f64 {
    let b = BoundaryMap::new(H, W, uniform(rng, H * W, 0.0, 2.0)).expect("nonnegative");
    loop {
        let z = uniform(rng, H * W * 3, 0.05, 0.95);
        let at = |r: usize, c: usize, k: usize| z[(r * W + c) * 3 + k];
        let mut diffs = Vec::new();
        for r in 0..H {
            for c in 0..W {
                for k in 0..3 {
                    if c + 1 < W {
                        diffs.push(at(r, c + 1, k) - at(r, c, k));
                    }
                    if r + 1 < H {
                        diffs.push(at(r + 1, c, k) - at(r, c, k));
                    }
                }
            }
        }
        if !clear_of_kinks(diffs) {
            continue;
        }
        let (_, grad) = loss_smooth(&image(&z), &b).expect("shapes agree");
        return relative_error(&grad, &z, |x| loss_smooth(&image(x), &b).expect("shapes agree").0);
    }
}

fn trial_feature(rng: &mut ChaCha8Rng) -> f64 {
    let (c, h, w) = (3, 4, 4);
    let (z, i) = separated_pair(rng, c * h * w);
    let fm = |v: &[f64]| FeatureMap::new(c, h, w, v.to_vec()).expect("finite");
    let target = fm(&i);
    let (_, grad) = loss_feature(&fm(&z), &target).expect("shapes agree");
    relative_error(grad.as_slice(), &z, |x| loss_feature(&fm(x), &target).expect("shapes agree").0)
}

fn trial_image_l1(rng: &mut ChaCha8Rng, loss: fn(&Image, &Image) -> crate::Result<(f64, Vec<f64>)>) -> f64 {
    let (z, i) = separated_pair(rng, H * W * 3);
    let target = image(&i);
    let (_, grad) = loss(&image(&z), &target).expect("shapes agree");
    relative_error(&grad, &z, |x| loss(&image(x), &target).expect("shapes agree").0)
}

/// Runs `trials` checks per loss. Every loss draws from its own stream derived
/// from `seed`.
pub fn check_all(trials: usize, seed: u64) -> Vec<GradCheck> {
    let checks: [(&'static str, fn(&mut ChaCha8Rng) -> f64); 5] = [
        ("chroma", trial_chroma),
        ("smooth", trial_smooth),
        ("feature", trial_feature),
        ("consistency", |r| trial_image_l1(r, loss_consistency)),
        ("identity", |r| trial_image_l1(r, loss_identity)),
    ];
    checks
        .iter()
        .enumerate()
        .map(|(stream, &(loss, run))| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(stream as u64);
            let max_rel_error = (0..trials).map(|_| run(&mut rng)).fold(0.0, f64::max);
            GradCheck {
                loss,
                trials,
                max_rel_error,
            }
        })
        .collect()
}
