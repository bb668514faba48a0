//! Soft shadow masks, affinity-weighted boundary detection and the
//! boundary-smoothness loss.

use crate::error::{Error, Result};
use crate::image::{normalize_minmax, Image, SoftMask};

pub const DEFAULT_TAU: f64 = 0.01;

/// Soft shadow mask `M = sum_c |N(I_c - Z_c)| / 3`, where `N` is min-max
/// normalization over the whole image, per channel.
pub fn shadow_mask(i_s: &Image, z_sf: &Image) -> Result<SoftMask> {
    i_s.same_shape(z_sf)?;
    let n = i_s.pixel_count();
    let mut mask = vec![0.0; n];
    for c in 0..3 {
        let diff: Vec<f64> = i_s
            .channel(c)
            .iter()
            .zip(z_sf.channel(c))
            .map(|(a, b)| a - b)
            .collect();
        for (m, v) in mask.iter_mut().zip(normalize_minmax(&diff)?) {
            *m += v.abs() / 3.0;
        }
    }
    for m in &mut mask {
        *m = m.clamp(0.0, 1.0);
    }
    SoftMask::new(i_s.height(), i_s.width(), mask)
}

/// Spatial-affinity weights `g = exp(-|p - q|^2 / (2 tau^2))` over a 3x3
/// window. Offsets are measured in normalized image coordinates
/// (`dx / width`, `dy / height`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffinityKernel {
    pub tau: f64,
    /// `weights[dy + 1][dx + 1]`
    pub weights: [[f64; 3]; 3],
}

impl AffinityKernel {
    pub fn new(tau: f64, height: usize, width: usize) -> Result<Self> {
        if !(tau.is_finite() && tau > 0.0) {
            return Err(Error::InvalidParameter(format!("tau must be positive, got {tau}")));
        }
        let mut weights = [[0.0; 3]; 3];
        for (r, row) in weights.iter_mut().enumerate() {
            for (c, w) in row.iter_mut().enumerate() {
                let dy = (r as f64 - 1.0) / height as f64;
                let dx = (c as f64 - 1.0) / width as f64;
                *w = (-(dx * dx + dy * dy) / (2.0 * tau * tau)).exp();
            }
        }
        Ok(Self { tau, weights })
    }
}

/// Nonnegative boundary strength `B = B_x + B_y`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryMap {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl BoundaryMap {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != height * width || data.is_empty() {
            return Err(Error::shape(height * width, data.len()));
        }
        if data.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidInput(
                "boundary values must be finite and nonnegative".into(),
            ));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            data: vec![0.0; height * width],
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

/// Affinity-weighted sum of central differences over each pixel's 3x3
/// neighbourhood. Borders replicate.
pub fn boundary(mask: &SoftMask, tau: f64) -> Result<BoundaryMap> {
    let (h, w) = (mask.height(), mask.width());
    let kernel = AffinityKernel::new(tau, h, w)?;
    let at = |r: isize, c: isize| {
        let r = r.clamp(0, h as isize - 1) as usize;
        let c = c.clamp(0, w as isize - 1) as usize;
        r * w + c
    };
    let m = mask.as_slice();
    let mut dx = vec![0.0; h * w];
    let mut dy = vec![0.0; h * w];
    for r in 0..h as isize {
        for c in 0..w as isize {
            let i = at(r, c);
            dx[i] = 0.5 * (m[at(r, c + 1)] - m[at(r, c - 1)]);
            dy[i] = 0.5 * (m[at(r + 1, c)] - m[at(r - 1, c)]);
        }
    }
    let mut out = vec![0.0; h * w];
    for r in 0..h as isize {
        for c in 0..w as isize {
            let (mut sx, mut sy) = (0.0, 0.0);
            for (a, row) in kernel.weights.iter().enumerate() {
                for (b, g) in row.iter().enumerate() {
                    let q = at(r + a as isize - 1, c + b as isize - 1);
                    sx += g * dx[q];
                    sy += g * dy[q];
                }
            }
            out[at(r, c)] = sx.abs() + sy.abs();
        }
    }
    Ok(BoundaryMap {
        height: h,
        width: w,
        data: out,
    })
}

/// `mean(B * (|dZ/dx| + |dZ/dy|))` with forward differences (zero on the
/// last column / row). The boundary map is a constant weight: the returned
/// gradient is with respect to `z_sf` only.
pub fn loss_smooth(z_sf: &Image, boundary: &BoundaryMap) -> Result<(f64, Vec<f64>)> {
    let (h, w) = (z_sf.height(), z_sf.width());
    if boundary.height != h || boundary.width != w {
        return Err(Error::shape(
            format!("{h}x{w}"),
            format!("{}x{}", boundary.height, boundary.width),
        ));
    }
    let z = z_sf.as_slice();
    let count = (h * w * 3) as f64;
    let mut value = 0.0;
    let mut grad = vec![0.0; z.len()];
    for r in 0..h {
        for c in 0..w {
            let b = boundary.data[r * w + c];
            if b == 0.0 {
                continue;
            }
            for k in 0..3 {
                let i = (r * w + c) * 3 + k;
                if c + 1 < w {
                    let j = i + 3;
                    let d = z[j] - z[i];
                    value += b * d.abs();
                    let s = b * signum(d) / count;
                    grad[j] += s;
                    grad[i] -= s;
                }
                if r + 1 < h {
                    let j = i + 3 * w;
                    let d = z[j] - z[i];
                    value += b * d.abs();
                    let s = b * signum(d) / count;
                    grad[j] += s;
                    grad[i] -= s;
                }
            }
        }
    }
    Ok((value / count, grad))
}

fn signum(v: f64) -> f64 {
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

    fn gray(h: usize, w: usize, f: impl Fn(usize, usize) -> f64) -> Image {
        Image::from_fn(h, w, |r, c| [f(r, c); 3]).unwrap()
    }

    #[test]
    fn identical_images_give_zero_mask() {
        let img = gray(4, 4, |r, c| (r * 4 + c) as f64 / 16.0);
        let m = shadow_mask(&img, &img).unwrap();
        assert!(m.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_channel_difference() {
        let i = Image::new(1, 2, vec![0.5, 0.5, 0.5, 0.9, 0.5, 0.5]).unwrap();
        let z = Image::new(1, 2, vec![0.5, 0.5, 0.5, 0.5, 0.5, 0.5]).unwrap();
        let m = shadow_mask(&i, &z).unwrap();
        assert_eq!(m.as_slice()[0], 0.0);
        assert!((m.as_slice()[1] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn kernel_center_is_one() {
        let k = AffinityKernel::new(0.01, 256, 256).unwrap();
        assert_eq!(k.weights[1][1], 1.0);
        assert!(k.weights[0][1] > 0.9 && k.weights[0][1] < 1.0);
        assert_eq!(k.weights[0][0], k.weights[2][2]);
        assert_eq!(k.weights[0][2], k.weights[2][0]);
        assert!(AffinityKernel::new(0.0, 4, 4).is_err());
        assert!(AffinityKernel::new(-1.0, 4, 4).is_err());
    }

    #[test]
    fn constant_mask_has_no_boundary() {
        let m = SoftMask::from_fn(5, 7, |_, _| 0.4).unwrap();
        let b = boundary(&m, DEFAULT_TAU).unwrap();
        assert!(b.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn vertical_step_on_six_by_six() {
        let m = SoftMask::from_fn(6, 6, |_, c| if c >= 3 { 1.0 } else { 0.0 }).unwrap();
        let b = boundary(&m, DEFAULT_TAU).unwrap();

        // Direct evaluation: only columns 2 and 3 carry a central difference
        // (0.5). Neighbours reach in with weight exp(-(1/6)^2 / (2 tau^2)).
        let g = |dr: f64, dc: f64| (-((dc / 6.0).powi(2) + (dr / 6.0).powi(2)) / 2e-4).exp();
        let deriv = |c: i32| if c == 2 || c == 3 { 0.5 } else { 0.0 };
        for r in 0..6i32 {
            for c in 0..6i32 {
                let mut s = 0.0;
                for dr in -1..=1 {
                    for dc in -1..=1 {
                        let cc = (c + dc).clamp(0, 5);
                        s += g(dr as f64, dc as f64) * deriv(cc);
                    }
                }
                let got = b.get(r as usize, c as usize);
                assert!((got - s).abs() < 1e-12, "({r},{c}) {got} vs {s}");
                if c == 2 || c == 3 {
                    assert!(got >= 0.5);
                } else {
                    assert!(got < 1e-12);
                }
            }
        }
    }

    #[test]
    fn smooth_loss_zero_cases() {
        let z = Image::filled(4, 5, [0.3, 0.6, 0.1]).unwrap();
        let b = BoundaryMap::new(4, 5, (0..20).map(|i| i as f64 * 0.1).collect()).unwrap();
        let (v, g) = loss_smooth(&z, &b).unwrap();
        assert_eq!(v, 0.0);
        assert!(g.iter().all(|&x| x == 0.0));

        let ramp = gray(4, 5, |r, c| (r + c) as f64 / 10.0);
        let (v, g) = loss_smooth(&ramp, &BoundaryMap::zeros(4, 5)).unwrap();
        assert_eq!(v, 0.0);
        assert!(g.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn smooth_loss_hand_value() {
        // 1x2 image, step of 0.5 in every channel, B = [2, 0].
        let z = Image::new(1, 2, vec![0.0, 0.0, 0.0, 0.5, 0.5, 0.5]).unwrap();
        let b = BoundaryMap::new(1, 2, vec![2.0, 0.0]).unwrap();
        let (v, _) = loss_smooth(&z, &b).unwrap();
        assert!((v - 3.0 * 2.0 * 0.5 / 6.0).abs() < 1e-15);
        assert!(loss_smooth(&z, &BoundaryMap::zeros(2, 1)).is_err());
    }
}
