//! Shadow-free chromaticity from a single image.
//!
//! Pixels are mapped to geometric-mean log-chromaticity, a 2-D plane in which
//! a change of Planckian illuminant moves every surface along one shared
//! direction. Projecting onto the orthogonal (invariant) direction removes the
//! shadow; the direction is found by minimizing the entropy of the projected
//! 1-D histogram. The lighting component discarded by the projection is then
//! reinstated from the brightest pixels so the recovered chromaticity keeps the
//! color of the lit regions.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::image::Image;

/// Channels are floored at this value before taking logs.
pub const CHANNEL_FLOOR: f64 = 1.0 / 255.0;

/// Fraction of brightest pixels used to estimate the lit illumination.
pub const BRIGHT_FRACTION: f64 = 0.3;

/// Entropy range (bits) below which a profile is reported as flat.
pub const FLAT_PROFILE_BITS: f64 = 0.05;

/// Projected samples kept for the histogram (percentile bounds).
const TRIM_LOW: f64 = 0.05;
const TRIM_HIGH: f64 = 0.95;

/// Spreads narrower than this are treated as a single histogram bin.
const COLLAPSED_SPREAD: f64 = 1e-9;

const FRAC_1_SQRT_6: f64 = 0.408_248_290_463_863;

/// Orthonormal basis of the plane orthogonal to `(1, 1, 1)`.
pub const BASIS: [[f64; 3]; 2] = [
    [
        std::f64::consts::FRAC_1_SQRT_2,
        -std::f64::consts::FRAC_1_SQRT_2,
        0.0,
    ],
    [FRAC_1_SQRT_6, FRAC_1_SQRT_6, -2.0 * FRAC_1_SQRT_6],
];

/// Log-chromaticity coordinates of one pixel.
pub fn chi(rgb: [f64; 3]) -> [f64; 2] {
    let logs = rgb.map(|c| c.max(CHANNEL_FLOOR).ln());
    let mean = (logs[0] + logs[1] + logs[2]) / 3.0;
    let rho = logs.map(|l| l - mean);
    [dot3(&BASIS[0], &rho), dot3(&BASIS[1], &rho)]
}

/// Chromaticity (summing to one) of a log-chromaticity point.
pub fn backmap(chi: [f64; 2]) -> [f64; 3] {
    let log_rho: [f64; 3] = std::array::from_fn(|k| chi[0] * BASIS[0][k] + chi[1] * BASIS[1][k]);
    let e = log_rho.map(f64::exp);
    let s = e[0] + e[1] + e[2];
    e.map(|v| v / s)
}

fn dot3(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Per-pixel 2-D log-chromaticity of an image.
#[derive(Debug, Clone, PartialEq)]
pub struct LogChroma {
    height: usize,
    width: usize,
    data: Vec<[f64; 2]>,
}

impl LogChroma {
    /// Builds a log-chromaticity field directly, e.g. for synthetic point sets.
    pub fn from_points(height: usize, width: usize, data: Vec<[f64; 2]>) -> Result<Self> {
        if height * width != data.len() || data.is_empty() {
            return Err(Error::shape(height * width, data.len()));
        }
        if data.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("log-chromaticity must be finite".into()));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn points(&self) -> &[[f64; 2]] {
        &self.data
    }
}

pub fn log_chroma(img: &Image) -> LogChroma {
    LogChroma {
        height: img.height(),
        width: img.width(),
        data: img.pixels().map(chi).collect(),
    }
}

/// Projection direction in degrees, `0 <= theta < 180`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct InvariantAngle(f64);

impl InvariantAngle {
    pub fn new(degrees: f64) -> Result<Self> {
        if degrees.is_finite() && (0.0..180.0).contains(&degrees) {
            Ok(Self(degrees))
        } else {
            Err(Error::InvalidParameter(format!(
                "invariant angle {degrees} outside [0, 180)"
            )))
        }
    }

    /// Reduces any finite angle modulo 180 degrees.
    pub fn wrapped(degrees: f64) -> Self {
        let mut d = degrees.rem_euclid(180.0);
        if d >= 180.0 {
            d = 0.0;
        }
        Self(d)
    }

    pub fn degrees(self) -> f64 {
        self.0
    }

    /// Unit vector along the invariant (shadow-free) axis.
    pub fn direction(self) -> [f64; 2] {
        let t = self.0.to_radians();
        [t.cos(), t.sin()]
    }

    /// Unit vector along the discarded (lighting) axis.
    pub fn normal(self) -> [f64; 2] {
        let t = self.0.to_radians();
        [-t.sin(), t.cos()]
    }

    /// Smallest separation between two axes, in degrees (`0..=90`).
    pub fn distance(self, other: InvariantAngle) -> f64 {
        let d = (self.0 - other.0).rem_euclid(180.0);
        d.min(180.0 - d)
    }
}

/// Entropy of the projected histogram at every whole degree in `[0, 180)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EntropyProfile {
    pub angles: Vec<f64>,
    pub entropies: Vec<f64>,
}

impl EntropyProfile {
    pub fn range(&self) -> f64 {
        let (lo, hi) = self
            .entropies
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &e| (lo.min(e), hi.max(e)));
        hi - lo
    }

    /// Near-achromatic scenes give almost no angular preference; the recovered
    /// angle is then unreliable.
    pub fn is_flat(&self) -> bool {
        self.range() < FLAT_PROFILE_BITS
    }
}

/// Shannon entropy (bits) of a Scott's-rule histogram over the middle 90% of
/// `samples`. The slice is reordered.
pub fn histogram_entropy(samples: &mut [f64]) -> f64 {
    let n = samples.len();
    if n < 2 {
        return 0.0;
    }
    let lo = quantile(samples, TRIM_LOW);
    let hi = quantile(samples, TRIM_HIGH);
    let kept: Vec<f64> = samples.iter().copied().filter(|&v| v >= lo && v <= hi).collect();
    let m = kept.len();
    if m < 2 {
        return 0.0;
    }
    let (min, max) = kept
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if max - min <= COLLAPSED_SPREAD {
        return 0.0;
    }
    let mean = kept.iter().sum::<f64>() / m as f64;
    let var = kept.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1) as f64;
    let sigma = var.sqrt();
    if sigma <= 0.0 {
        return 0.0;
    }
    let width = 3.5 * sigma * (m as f64).powf(-1.0 / 3.0);
    let bins = ((max - min) / width).ceil().max(1.0) as usize;
    let mut counts = vec![0usize; bins];
    for v in &kept {
        let b = (((v - min) / width).floor() as usize).min(bins - 1);
        counts[b] += 1;
    }
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / m as f64;
            -p * p.log2()
        })
        .sum()
}

/// Linearly interpolated quantile; reorders `v`.
fn quantile(v: &mut [f64], q: f64) -> f64 {
    let pos = q * (v.len() - 1) as f64;
    let k = pos.floor() as usize;
    let frac = pos - k as f64;
    let (_, &mut at_k, upper) = v.select_nth_unstable_by(k, f64::total_cmp);
    if frac == 0.0 || upper.is_empty() {
        return at_k;
    }
    let next = upper.iter().copied().fold(f64::INFINITY, f64::min);
    at_k + frac * (next - at_k)
}

fn project_into(chroma: &LogChroma, theta: InvariantAngle, out: &mut Vec<f64>) {
    let [c, s] = theta.direction();
    out.clear();
    out.extend(chroma.data.iter().map(|p| p[0] * c + p[1] * s));
}

/// Entropy (bits) of the log-chromaticity projected onto `theta`'s direction.
pub fn entropy_at(chroma: &LogChroma, theta: InvariantAngle) -> f64 {
    let mut buf = Vec::with_capacity(chroma.data.len());
    project_into(chroma, theta, &mut buf);
    histogram_entropy(&mut buf)
}

/// Whole-degree search for the minimum-entropy projection. Ties resolve to the
/// smallest angle.
pub fn find_invariant_angle(chroma: &LogChroma) -> (InvariantAngle, EntropyProfile) {
    let angles: Vec<f64> = (0..180).map(f64::from).collect();
    let entropies: Vec<f64> = angles
        .par_iter()
        .map_init(
            || Vec::with_capacity(chroma.data.len()),
            |buf, &deg| {
                project_into(chroma, InvariantAngle(deg), buf);
                histogram_entropy(buf)
            },
        )
        .collect();
    let mut best = 0;
    for (i, &e) in entropies.iter().enumerate() {
        if e < entropies[best] {
            best = i;
        }
    }
    (InvariantAngle(angles[best]), EntropyProfile { angles, entropies })
}

/// Per-pixel chromaticity with channels summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct ChromaticityImage {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl ChromaticityImage {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != height * width * 3 || data.is_empty() {
            return Err(Error::shape(height * width * 3, data.len()));
        }
        for p in data.chunks_exact(3) {
            if p.iter().any(|v| !v.is_finite() || *v < 0.0) || (p.iter().sum::<f64>() - 1.0).abs() > 1e-6 {
                return Err(Error::InvalidInput(format!(
                    "chromaticity pixel {p:?} does not sum to one"
                )));
            }
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn pixels(&self) -> impl Iterator<Item = [f64; 3]> + '_ {
        self.data.chunks_exact(3).map(|p| [p[0], p[1], p[2]])
    }

    /// The map as a displayable image (channels are already in `[0, 1]`).
    pub fn to_image(&self) -> Image {
        Image::from_clamped(self.height, self.width, self.data.clone())
            .expect("chromaticity dimensions are valid")
    }

    /// Mean over pixels of the per-pixel L1 distance (summed over channels).
    pub fn mean_l1_distance(&self, other: &ChromaticityImage) -> Result<f64> {
        if self.height != other.height || self.width != other.width {
            return Err(Error::shape(
                format!("{}x{}", self.height, self.width),
                format!("{}x{}", other.height, other.width),
            ));
        }
        let total: f64 = self.data.iter().zip(&other.data).map(|(a, b)| (a - b).abs()).sum();
        Ok(total / (self.height * self.width) as f64)
    }
}

fn pixel_chromaticity(p: [f64; 3]) -> [f64; 3] {
    let s = p[0] + p[1] + p[2];
    if s > 0.0 {
        p.map(|v| v / s)
    } else {
        [1.0 / 3.0; 3]
    }
}

/// `sigma_c = Z_c / (Z_r + Z_g + Z_b)`; black pixels map to neutral.
pub fn chromaticity_map(img: &Image) -> ChromaticityImage {
    ChromaticityImage {
        height: img.height(),
        width: img.width(),
        data: img.pixels().flat_map(pixel_chromaticity).collect(),
    }
}

/// Everything produced by [`shadow_free_chromaticity`].
#[derive(Debug, Clone)]
pub struct ShadowFree {
    /// Projection result with the lit illumination reinstated.
    pub physics: ChromaticityImage,
    /// Projection result alone.
    pub entropy: ChromaticityImage,
    pub angle: InvariantAngle,
    pub profile: EntropyProfile,
    /// Lighting-axis offset estimated from the brightest pixels.
    pub lighting_offset: f64,
}

/// Chromaticity with the shadow projected out and the lit illumination added
/// back.
pub fn shadow_free_chromaticity(img: &Image) -> ShadowFree {
    let chroma = log_chroma(img);
    let (angle, profile) = find_invariant_angle(&chroma);
    let e = angle.direction();
    let n = angle.normal();

    let along: Vec<f64> = chroma.data.iter().map(|p| p[0] * e[0] + p[1] * e[1]).collect();
    let across: Vec<f64> = chroma.data.iter().map(|p| p[0] * n[0] + p[1] * n[1]).collect();

    let brightness: Vec<f64> = img.pixels().map(|p| p[0] + p[1] + p[2]).collect();
    let mut order: Vec<usize> = (0..brightness.len()).collect();
    order.sort_by(|&a, &b| brightness[b].total_cmp(&brightness[a]).then(a.cmp(&b)));
    let take = ((BRIGHT_FRACTION * order.len() as f64).ceil() as usize).clamp(1, order.len());
    let lighting_offset = order[..take].iter().map(|&i| across[i]).sum::<f64>() / take as f64;

    let project = |offset: f64| -> Vec<f64> {
        along
            .iter()
            .flat_map(|&a| backmap([a * e[0] + offset * n[0], a * e[1] + offset * n[1]]))
            .collect()
    };
    let (h, w) = (img.height(), img.width());
    ShadowFree {
        physics: ChromaticityImage {
            height: h,
            width: w,
            data: project(lighting_offset),
        },
        entropy: ChromaticityImage {
            height: h,
            width: w,
            data: project(0.0),
        },
        angle,
        profile,
        lighting_offset,
    }
}

/// Mean absolute difference between the chromaticity of `z` and `sigma_phy`,
/// with its gradient with respect to `z` (interleaved like the image).
pub fn loss_chroma(z: &Image, sigma_phy: &ChromaticityImage) -> Result<(f64, Vec<f64>)> {
    if z.height() != sigma_phy.height || z.width() != sigma_phy.width {
        return Err(Error::shape(
            format!("{}x{}", sigma_phy.height, sigma_phy.width),
            format!("{}x{}", z.height(), z.width()),
        ));
    }
    let count = (z.pixel_count() * 3) as f64;
    let mut value = 0.0;
    let mut grad = vec![0.0; z.as_slice().len()];
    for (i, (p, target)) in z.pixels().zip(sigma_phy.pixels()).enumerate() {
        let s = p[0] + p[1] + p[2];
        let sigma = pixel_chromaticity(p);
        let signs: [f64; 3] = std::array::from_fn(|c| sign(sigma[c] - target[c]));
        value += (0..3).map(|c| (sigma[c] - target[c]).abs()).sum::<f64>();
        if s > 0.0 {
            // d sigma_c / d z_k = (delta_ck - sigma_c) / s
            let weighted: f64 = (0..3).map(|c| signs[c] * sigma[c]).sum();
            for k in 0..3 {
                grad[3 * i + k] = (signs[k] - weighted) / (s * count);
            }
        }
    }
    Ok((value / count, grad))
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gray_maps_to_origin() {
        for v in [0.1, 0.5, 1.0] {
            let c = chi([v, v, v]);
            assert!(c[0].abs() < 1e-15 && c[1].abs() < 1e-15);
        }
    }

    #[test]
    fn dark_red_pixel_coordinates() {
        // Only ln 4 survives the projection: (ln4/sqrt2, ln4/sqrt6).
        let c = chi([4.0 / 255.0, 1.0 / 255.0, 1.0 / 255.0]);
        assert!((c[0] - 0.980_258_143).abs() < 1e-8, "{c:?}");
        assert!((c[1] - 0.565_952_303).abs() < 1e-8, "{c:?}");
    }

    #[test]
    fn chi_is_exposure_invariant() {
        let (a, b) = (chi([0.2, 0.1, 0.1]), chi([0.4, 0.2, 0.2]));
        assert!((a[0] - b[0]).abs() < 1e-12 && (a[1] - b[1]).abs() < 1e-12);
        let a = chi([0.3, 0.2, 0.7]);
        let b = chi([0.3 * 1.3, 0.2 * 1.3, 0.7 * 1.3]);
        assert!((a[0] - b[0]).abs() < 1e-12 && (a[1] - b[1]).abs() < 1e-12);
    }

    #[test]
    fn backmap_inverts_chi_for_chromaticities() {
        for p in [[0.2, 0.3, 0.5], [0.6, 0.3, 0.1], [1.0 / 3.0; 3]] {
            let back = backmap(chi(p));
            for k in 0..3 {
                assert!((back[k] - p[k]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn identical_points_have_zero_entropy() {
        let lc = LogChroma::from_points(1, 50, vec![[0.3, -0.2]; 50]).unwrap();
        assert_eq!(entropy_at(&lc, InvariantAngle(17.0)), 0.0);
        assert_eq!(histogram_entropy(&mut [1.0]), 0.0);
    }

    #[test]
    fn line_collapses_under_orthogonal_projection() {
        let phi = 35.0f64;
        let d = [phi.to_radians().cos(), phi.to_radians().sin()];
        let pts: Vec<[f64; 2]> = (0..200)
            .map(|i| {
                let t = i as f64 / 199.0 - 0.5;
                [t * d[0], t * d[1]]
            })
            .collect();
        let lc = LogChroma::from_points(1, 200, pts).unwrap();
        assert_eq!(entropy_at(&lc, InvariantAngle::wrapped(phi + 90.0)), 0.0);
        assert!(entropy_at(&lc, InvariantAngle(phi)) > 2.0);
    }

    #[test]
    fn two_clusters_give_one_bit() {
        let pts: Vec<[f64; 2]> = (0..400)
            .map(|i| if i % 2 == 0 { [0.0, 0.0] } else { [1.0, 0.0] })
            .collect();
        let lc = LogChroma::from_points(20, 20, pts).unwrap();
        assert!((entropy_at(&lc, InvariantAngle(0.0)) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn quantile_interpolates() {
        let mut v = vec![4.0, 1.0, 3.0, 2.0, 0.0];
        assert_eq!(quantile(&mut v, 0.5), 2.0);
        assert!((quantile(&mut v, 0.05) - 0.2).abs() < 1e-12);
        assert!((quantile(&mut v, 0.95) - 3.8).abs() < 1e-12);
    }

    #[test]
    fn angle_distance_wraps() {
        let a = InvariantAngle(1.0);
        let b = InvariantAngle(179.0);
        assert!((a.distance(b) - 2.0).abs() < 1e-12);
        assert!(InvariantAngle::new(180.0).is_err());
        assert_eq!(InvariantAngle::wrapped(-10.0).degrees(), 170.0);
    }

    #[test]
    fn chromaticity_examples() {
        let img = Image::new(1, 3, vec![0.2, 0.3, 0.5, 2.0 / 3.0 * 0.9, 0.3, 0.3, 0.0, 0.0, 0.0]).unwrap();
        let c = chromaticity_map(&img);
        let px: Vec<[f64; 3]> = c.pixels().collect();
        for k in 0..3 {
            assert!((px[0][k] - [0.2, 0.3, 0.5][k]).abs() < 1e-15);
            assert!((px[1][k] - [0.5, 0.25, 0.25][k]).abs() < 1e-15);
            assert_eq!(px[2][k], 1.0 / 3.0);
        }
    }

    #[test]
    fn gray_image_has_neutral_shadow_free_chromaticity() {
        let img = Image::filled(6, 6, [0.4, 0.4, 0.4]).unwrap();
        let sf = shadow_free_chromaticity(&img);
        for p in sf.physics.pixels() {
            for v in p {
                assert!((v - 1.0 / 3.0).abs() < 1e-12);
            }
        }
        assert!(sf.profile.is_flat());
        assert_eq!(sf.angle.degrees(), 0.0);
    }

    #[test]
    fn chroma_loss_single_pixel() {
        let z = Image::new(1, 1, vec![0.5, 0.25, 0.25]).unwrap();
        let neutral = ChromaticityImage::new(1, 1, vec![1.0 / 3.0; 3]).unwrap();
        let (v, _) = loss_chroma(&z, &neutral).unwrap();
        assert!((v - 1.0 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn chroma_loss_is_zero_at_target() {
        let z = Image::new(1, 2, vec![0.1, 0.2, 0.3, 0.6, 0.2, 0.2]).unwrap();
        let target = chromaticity_map(&z);
        let (v, g) = loss_chroma(&z, &target).unwrap();
        assert_eq!(v, 0.0);
        assert!(g.iter().all(|&x| x == 0.0));
        let other = Image::filled(2, 2, [0.5; 3]).unwrap();
        assert!(loss_chroma(&other, &target).is_err());
    }
}
