//! Synthetic Mondrian scenes with a known invariant angle.
//!
//! Surfaces are flat reflectance rectangles lit by a Planckian illuminant and
//! imaged through delta-function sensitivities, the case in which every
//! surface's lit and shadowed log-chromaticities differ by one shared vector.
//! The shadow region is a random polygon; blurring its indicator yields a
//! soft penumbra that mixes the lit and shadow illuminants linearly.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::chroma::{chi, InvariantAngle};
use crate::error::{Error, Result};
use crate::image::{Image, SoftMask};

/// Delta sensitivities of the simulated camera, in nanometres (R, G, B).
pub const SENSOR_WAVELENGTHS_NM: [f64; 3] = [610.0, 540.0, 465.0];

pub const MIN_TEMPERATURE: f64 = 2500.0;
pub const MAX_TEMPERATURE: f64 = 10000.0;

/// Shadow illuminant intensity relative to the largest value that keeps it
/// componentwise below the lit illuminant.
pub const SHADOW_ATTENUATION: f64 = 1.0;

const REFLECTANCE_RANGE: (f64, f64) = (0.2, 0.9);
const MIN_REFLECTANCE_SPREAD: f64 = 0.2;
// Each surface is painted as several rectangles scattered over the scene.
const PATCHES_PER_SURFACE: usize = 4;
// Vertex distance from the polygon centre, as a fraction of the short side.
const POLYGON_RADIUS: (f64, f64) = (0.3, 0.5);

// Second radiation constant hc/k, metre kelvin.
const C2: f64 = 1.438_776_877e-2;

/// Relative RGB of a blackbody at `temperature` kelvin, scaled so the largest
/// component is 1.
pub fn planck_rgb(temperature: f64) -> Result<[f64; 3]> {
    if !(MIN_TEMPERATURE..=MAX_TEMPERATURE).contains(&temperature) {
        return Err(Error::InvalidParameter(format!(
            "temperature {temperature} K outside [{MIN_TEMPERATURE}, {MAX_TEMPERATURE}]"
        )));
    }
    let spectral = SENSOR_WAVELENGTHS_NM.map(|nm| {
        let l = nm * 1e-9;
        // constant 2hc^2 factor drops out in the normalization
        1.0 / (l.powi(5) * ((C2 / (l * temperature)).exp() - 1.0))
    });
    let max = spectral.iter().copied().fold(0.0, f64::max);
    Ok(spectral.map(|v| v / max))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneParams {
    pub width: usize,
    pub height: usize,
    pub n_surfaces: usize,
    pub lit_temperature: f64,
    pub shadow_temperature: f64,
    pub shadow_strength: f64,
    pub penumbra_sigma: f64,
    /// Standard deviation of additive Gaussian noise; the same realization is
    /// added to both images.
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for SceneParams {
    fn default() -> Self {
        Self {
            width: 128,
            height: 128,
            n_surfaces: 12,
            lit_temperature: 6500.0,
            shadow_temperature: 3500.0,
            shadow_strength: 0.8,
            penumbra_sigma: 0.0,
            noise_sigma: 0.0,
            seed: 0,
        }
    }
}

impl SceneParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if self.width < 2 || self.height < 2 {
            return bad(format!("scene must be at least 2x2, got {}x{}", self.height, self.width));
        }
        if self.n_surfaces == 0 {
            return bad("n_surfaces must be at least 1".into());
        }
        for t in [self.lit_temperature, self.shadow_temperature] {
            if !(MIN_TEMPERATURE..=MAX_TEMPERATURE).contains(&t) {
                return bad(format!("temperature {t} K outside [2500, 10000]"));
            }
        }
        if !(0.0..=1.0).contains(&self.shadow_strength) {
            return bad(format!("shadow_strength {} outside [0, 1]", self.shadow_strength));
        }
        if !(self.penumbra_sigma.is_finite() && self.penumbra_sigma >= 0.0) {
            return bad(format!("penumbra_sigma {} must be >= 0", self.penumbra_sigma));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return bad(format!("noise_sigma {} must be >= 0", self.noise_sigma));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticScene {
    pub params: SceneParams,
    pub shadow_image: Image,
    pub shadowfree_image: Image,
    pub gt_mask: SoftMask,
    pub gt_angle: InvariantAngle,
    pub surface_labels: Vec<u32>,
    pub reflectances: Vec<[f64; 3]>,
    /// Lit and shadow illuminants coincide in chromaticity.
    pub degenerate: bool,
    pub seed: u64,
}

impl SyntheticScene {
    pub fn label(&self, row: usize, col: usize) -> u32 {
        self.surface_labels[row * self.params.width + col]
    }
}

/// Lit illuminant and the (attenuated) shadow illuminant.
pub fn illuminants(params: &SceneParams) -> Result<([f64; 3], [f64; 3])> {
    let lit = planck_rgb(params.lit_temperature)?;
    let shadow = planck_rgb(params.shadow_temperature)?;
    let scale = (0..3).map(|k| lit[k] / shadow[k]).fold(f64::INFINITY, f64::min);
    // min() absorbs the last-ulp rounding in the channel that sets `scale`
    let shadow = std::array::from_fn(|k| (shadow[k] * scale * SHADOW_ATTENUATION).min(lit[k]));
    Ok((lit, shadow))
}

fn mix(lit: [f64; 3], shadow: [f64; 3], s: f64) -> [f64; 3] {
    std::array::from_fn(|k| lit[k] - s * (lit[k] - shadow[k]))
}

/// The invariant axis is orthogonal to the log-chromaticity shift between
/// fully lit and fully shadowed pixels. Returns `None` when there is no shift.
pub fn invariant_angle_for(lit: [f64; 3], shadow: [f64; 3], strength: f64) -> Option<InvariantAngle> {
    let shift = |s: f64| {
        let a = chi(lit);
        let b = chi(mix(lit, shadow, s));
        [b[0] - a[0], b[1] - a[1]]
    };
    [strength, 1.0].into_iter().map(shift).find_map(|d| {
        (d[0].hypot(d[1]) > 1e-12)
            .then(|| InvariantAngle::wrapped(d[1].atan2(d[0]).to_degrees() + 90.0))
    })
}

fn random_reflectance(rng: &mut ChaCha8Rng) -> [f64; 3] {
    loop {
        let r: [f64; 3] = std::array::from_fn(|_| rng.random_range(REFLECTANCE_RANGE.0..=REFLECTANCE_RANGE.1));
        let (lo, hi) = r.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        if hi - lo >= MIN_REFLECTANCE_SPREAD {
            return r;
        }
    }
}

fn paint_surfaces(rng: &mut ChaCha8Rng, params: &SceneParams) -> (Vec<u32>, Vec<[f64; 3]>) {
    let (w, h) = (params.width, params.height);
    let n = params.n_surfaces;
    let mut labels = vec![0u32; w * h];
    let reflectances: Vec<[f64; 3]> = (0..n).map(|_| random_reflectance(rng)).collect();
    if n > 1 {
        for patch in 0..PATCHES_PER_SURFACE * n {
            let label = (1 + patch % (n - 1)) as u32;
            let rw = rng.random_range((w / 8).max(1)..=(w / 3).max(1));
            let rh = rng.random_range((h / 8).max(1)..=(h / 3).max(1));
            let x0 = rng.random_range(0..=w - rw);
            let y0 = rng.random_range(0..=h - rh);
            for y in y0..y0 + rh {
                labels[y * w + x0..y * w + x0 + rw].fill(label);
            }
        }
    }
    (labels, reflectances)
}

fn shadow_polygon(rng: &mut ChaCha8Rng, params: &SceneParams) -> Vec<[f64; 2]> {
    let (w, h) = (params.width as f64, params.height as f64);
    let cx = rng.random_range(0.4..0.6) * w;
    let cy = rng.random_range(0.4..0.6) * h;
    let k = rng.random_range(5..=8);
    let step = std::f64::consts::TAU / k as f64;
    let phase = rng.random_range(0.0..step);
    (0..k)
        .map(|i| {
            let a = phase + step * (i as f64 + rng.random_range(-0.3..0.3));
            let r = rng.random_range(POLYGON_RADIUS.0..POLYGON_RADIUS.1) * w.min(h);
            [cx + r * a.cos(), cy + r * a.sin()]
        })
        .collect()
}

fn inside(poly: &[[f64; 2]], x: f64, y: f64) -> bool {
    let mut hit = false;
    let mut j = poly.len() - 1;
    for i in 0..poly.len() {
        let (a, b) = (poly[i], poly[j]);
        if (a[1] > y) != (b[1] > y) && x < (b[0] - a[0]) * (y - a[1]) / (b[1] - a[1]) + a[0] {
            hit = !hit;
        }
        j = i;
    }
    hit
}

fn gaussian_blur(plane: &[f64], h: usize, w: usize, sigma: f64) -> Vec<f64> {
    if sigma <= 0.0 {
        return plane.to_vec();
    }
    let radius = (3.0 * sigma).ceil() as isize;
    let mut kernel: Vec<f64> = (-radius..=radius)
        .map(|k| (-(k * k) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let norm: f64 = kernel.iter().sum();
    kernel.iter_mut().for_each(|k| *k /= norm);

    let pass = |src: &[f64], horizontal: bool| -> Vec<f64> {
        let mut out = vec![0.0; h * w];
        for y in 0..h as isize {
            for x in 0..w as isize {
                let mut s = 0.0;
                for (i, g) in kernel.iter().enumerate() {
                    let k = i as isize - radius;
                    let (yy, xx) = if horizontal {
                        (y, (x + k).clamp(0, w as isize - 1))
                    } else {
                        ((y + k).clamp(0, h as isize - 1), x)
                    };
                    s += g * src[yy as usize * w + xx as usize];
                }
                out[y as usize * w + x as usize] = s.clamp(0.0, 1.0);
            }
        }
        out
    };
    pass(&pass(plane, true), false)
}

/// Generates a scene. Output is a pure function of `params` (including the
/// seed).
pub fn generate(params: &SceneParams) -> Result<SyntheticScene> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let (w, h) = (params.width, params.height);

    let (labels, reflectances) = paint_surfaces(&mut rng, params);
    let poly = shadow_polygon(&mut rng, params);
    let hard: Vec<f64> = (0..h * w)
        .map(|i| {
            let (y, x) = ((i / w) as f64 + 0.5, (i % w) as f64 + 0.5);
            if inside(&poly, x, y) {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    let mask = gaussian_blur(&hard, h, w, params.penumbra_sigma);

    let (lit, shadow) = illuminants(params)?;
    let mut free = Vec::with_capacity(h * w * 3);
    let mut shaded = Vec::with_capacity(h * w * 3);
    for (i, &label) in labels.iter().enumerate() {
        let r = reflectances[label as usize];
        let s = params.shadow_strength * mask[i];
        let e = if s > 0.0 { mix(lit, shadow, s) } else { lit };
        for k in 0..3 {
            free.push(r[k] * lit[k]);
            shaded.push(r[k] * e[k]);
        }
    }
    if params.noise_sigma > 0.0 {
        let normal = Normal::new(0.0, params.noise_sigma)
            .map_err(|e| Error::InvalidParameter(e.to_string()))?;
        for (a, b) in free.iter_mut().zip(shaded.iter_mut()) {
            let n = normal.sample(&mut rng);
            *a = (*a + n).clamp(0.0, 1.0);
            *b = (*b + n).clamp(0.0, 1.0);
        }
    }

    let angle = invariant_angle_for(lit, shadow, params.shadow_strength);
    Ok(SyntheticScene {
        params: params.clone(),
        shadow_image: Image::new(h, w, shaded)?,
        shadowfree_image: Image::new(h, w, free)?,
        gt_mask: SoftMask::new(h, w, mask)?,
        gt_angle: angle.unwrap_or(InvariantAngle::wrapped(0.0)),
        surface_labels: labels,
        reflectances,
        degenerate: angle.is_none(),
        seed: params.seed,
    })
}
