//! Built-in stand-in for pretrained perceptual features.
//!
//! Eight structure-only planes computed from luminance: gradient magnitude
//! after box smoothing at four radii, and local contrast against box means at
//! four radii. Used by the feature loss when no exported tensors are supplied.

use crate::image::{FeatureMap, Image};

pub const STANDIN_CHANNELS: usize = 8;

const GRADIENT_RADII: [usize; 4] = [0, 1, 2, 4];
const CONTRAST_RADII: [usize; 4] = [1, 2, 4, 8];

fn luminance(img: &Image) -> Vec<f64> {
    img.pixels().map(|p| (p[0] + p[1] + p[2]) / 3.0).collect()
}

/// Box mean with replicated borders.
fn box_blur(plane: &[f64], h: usize, w: usize, radius: usize) -> Vec<f64> {
    if radius == 0 {
        return plane.to_vec();
    }
    let r = radius as isize;
    let pass = |src: &[f64], horizontal: bool| -> Vec<f64> {
        let mut out = vec![0.0; h * w];
        for y in 0..h as isize {
            for x in 0..w as isize {
                let mut s = 0.0;
                for k in -r..=r {
                    let (yy, xx) = if horizontal {
                        (y, (x + k).clamp(0, w as isize - 1))
                    } else {
                        ((y + k).clamp(0, h as isize - 1), x)
                    };
                    s += src[yy as usize * w + xx as usize];
                }
                out[y as usize * w + x as usize] = s / (2 * r + 1) as f64;
            }
        }
        out
    };
    pass(&pass(plane, true), false)
}

fn gradient_magnitude(plane: &[f64], h: usize, w: usize) -> Vec<f64> {
    let at = |y: isize, x: isize| {
        plane[y.clamp(0, h as isize - 1) as usize * w + x.clamp(0, w as isize - 1) as usize]
    };
    let mut out = Vec::with_capacity(h * w);
    for y in 0..h as isize {
        for x in 0..w as isize {
            let gx = 0.5 * (at(y, x + 1) - at(y, x - 1));
            let gy = 0.5 * (at(y + 1, x) - at(y - 1, x));
            out.push((gx * gx + gy * gy).sqrt());
        }
    }
    out
}

pub fn standin_features(img: &Image) -> FeatureMap {
    let (h, w) = (img.height(), img.width());
    let y = luminance(img);
    let mut data = Vec::with_capacity(STANDIN_CHANNELS * h * w);
    for r in GRADIENT_RADII {
        data.extend(gradient_magnitude(&box_blur(&y, h, w, r), h, w));
    }
    for r in CONTRAST_RADII {
        let mean = box_blur(&y, h, w, r);
        data.extend(y.iter().zip(&mean).map(|(a, b)| (a - b).abs()));
    }
    FeatureMap::new(STANDIN_CHANNELS, h, w, data).expect("stand-in features are finite")
}
