//! Region-wise error metrics and a dataset runner.
//!
//! Errors are mean absolute differences over All / Shadow / Non-shadow
//! regions, in CIE Lab by default or on the 0-255 RGB scale. Both images (and
//! the mask, nearest-neighbour) are resized to 256x256 before comparison
//! unless the native protocol is selected.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{rgb_to_lab, Image, SoftMask};
use crate::io::{read_image, read_mask};

pub const PSNR_CAP: f64 = 99.0;
const PSNR_MSE_FLOOR: f64 = 1e-10;
pub const PROTOCOL_SIZE: usize = 256;
const SHADOW_THRESHOLD: f64 = 0.5;
const IMAGE_EXTENSIONS: [&str; 4] = ["png", "ppm", "pnm", "pgm"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColorSpace {
    Lab,
    Rgb,
}

impl FromStr for ColorSpace {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lab" => Ok(Self::Lab),
            "rgb" => Ok(Self::Rgb),
            other => Err(Error::InvalidParameter(format!("unknown color space {other:?}"))),
        }
    }
}

impl fmt::Display for ColorSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Lab => "lab",
            Self::Rgb => "rgb",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Resize {
    #[serde(rename = "256")]
    Fixed256,
    #[serde(rename = "native")]
    Native,
}

impl FromStr for Resize {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "256" => Ok(Self::Fixed256),
            "native" => Ok(Self::Native),
            other => Err(Error::InvalidParameter(format!("unknown resize mode {other:?}"))),
        }
    }
}

impl fmt::Display for Resize {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Fixed256 => "256",
            Self::Native => "native",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Protocol {
    pub space: ColorSpace,
    pub resize: Resize,
}

impl Default for Protocol {
    fn default() -> Self {
        Self {
            space: ColorSpace::Lab,
            resize: Resize::Fixed256,
        }
    }
}

impl Protocol {
    /// All four combinations, default first.
    pub fn grid() -> [Protocol; 4] {
        [
            Protocol { space: ColorSpace::Lab, resize: Resize::Fixed256 },
            Protocol { space: ColorSpace::Lab, resize: Resize::Native },
            Protocol { space: ColorSpace::Rgb, resize: Resize::Fixed256 },
            Protocol { space: ColorSpace::Rgb, resize: Resize::Native },
        ]
    }
}

/// MAE over the three regions. Regions that contain no pixels (or that
/// cannot be formed without a mask) are `None`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegionMae {
    pub all: f64,
    pub shadow: Option<f64>,
    pub nonshadow: Option<f64>,
    pub pixels_all: usize,
    pub pixels_shadow: usize,
}

fn channel_values(img: &Image, space: ColorSpace) -> Vec<f64> {
    match space {
        ColorSpace::Lab => rgb_to_lab(img),
        ColorSpace::Rgb => img.as_slice().iter().map(|v| v * 255.0).collect(),
    }
}

pub fn region_mae(pred: &Image, gt: &Image, mask: Option<&SoftMask>, space: ColorSpace) -> Result<RegionMae> {
    pred.same_shape(gt)?;
    if let Some(m) = mask {
        if m.height() != gt.height() || m.width() != gt.width() {
            return Err(Error::shape(
                format!("{}x{}", gt.height(), gt.width()),
                format!("{}x{}", m.height(), m.width()),
            ));
        }
    }
    let a = channel_values(pred, space);
    let b = channel_values(gt, space);
    let (mut sum_all, mut sum_s, mut sum_ns) = (Sum::default(), Sum::default(), Sum::default());
    let mut pixels_shadow = 0;
    for (i, (pa, pb)) in a.chunks_exact(3).zip(b.chunks_exact(3)).enumerate() {
        let err: f64 = (0..3).map(|c| (pa[c] - pb[c]).abs()).sum();
        sum_all.add(err);
        if let Some(m) = mask {
            if m.as_slice()[i] > SHADOW_THRESHOLD {
                pixels_shadow += 1;
                sum_s.add(err);
            } else {
                sum_ns.add(err);
            }
        }
    }
    let n = gt.pixel_count();
    let mean = |s: Sum, count: usize| (count > 0).then(|| s.value() / (3 * count) as f64);
    Ok(RegionMae {
        all: sum_all.value() / (3 * n) as f64,
        shadow: mask.and_then(|_| mean(sum_s, pixels_shadow)),
        nonshadow: mask.and_then(|_| mean(sum_ns, n - pixels_shadow)),
        pixels_all: n,
        pixels_shadow,
    })
}

/// `10 log10(1 / MSE)` over RGB in `[0, 1]`, capped at [`PSNR_CAP`].
pub fn psnr(pred: &Image, gt: &Image) -> Result<f64> {
    pred.same_shape(gt)?;
    let mut sum = Sum::default();
    for (a, b) in pred.as_slice().iter().zip(gt.as_slice()) {
        sum.add((a - b).powi(2));
    }
    let mse = sum.value() / pred.as_slice().len() as f64;
    if mse < PSNR_MSE_FLOOR {
        return Ok(PSNR_CAP);
    }
    Ok((10.0 * (1.0 / mse).log10()).min(PSNR_CAP))
}

/// Compensated (Neumaier) summation.
#[derive(Debug, Clone, Copy, Default)]
struct Sum {
    total: f64,
    carry: f64,
}

impl Sum {
    fn add(&mut self, v: f64) {
        let t = self.total + v;
        if self.total.abs() >= v.abs() {
            self.carry += (self.total - t) + v;
        } else {
            self.carry += (v - t) + self.total;
        }
        self.total = t;
    }

    fn value(self) -> f64 {
        self.total + self.carry
    }
}

/// Where a record's shadow region came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaskSource {
    File,
    Otsu,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub name: String,
    pub mae_all: f64,
    pub mae_shadow: Option<f64>,
    pub mae_nonshadow: Option<f64>,
    pub psnr: f64,
    pub pixels_all: usize,
    pub pixels_shadow: usize,
    pub mask_source: MaskSource,
}

/// Directories paired by identical file stem.
#[derive(Debug, Clone, Default)]
pub struct DatasetLayout {
    pub results: PathBuf,
    pub gt: PathBuf,
    pub masks: Option<PathBuf>,
    /// Shadow inputs, used to derive an Otsu mask for stems without a mask
    /// file.
    pub shadow_inputs: Option<PathBuf>,
}

fn list_images(dir: &Path) -> Result<BTreeMap<String, PathBuf>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut out = BTreeMap::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| e.to_ascii_lowercase());
        if !path.is_file() || !ext.is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.as_str())) {
            continue;
        }
        if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
            if out.insert(stem.to_string(), path.clone()).is_some() {
                return Err(Error::InvalidInput(format!(
                    "two images share the stem {stem:?} in {}",
                    dir.display()
                )));
            }
        }
    }
    Ok(out)
}

/// One result / ground-truth pair.
#[derive(Debug, Clone, PartialEq)]
pub struct Pair {
    pub stem: String,
    pub result: PathBuf,
    pub gt: PathBuf,
    pub mask: Option<PathBuf>,
    pub shadow_input: Option<PathBuf>,
}

/// Pairs sorted by stem, plus the result stems that had no ground truth and
/// the ground-truth stems with no result.
pub fn pair_files(layout: &DatasetLayout) -> Result<(Vec<Pair>, Vec<String>)> {
    let results = list_images(&layout.results)?;
    let gts = list_images(&layout.gt)?;
    let masks = layout.masks.as_deref().map(list_images).transpose()?.unwrap_or_default();
    let inputs = layout.shadow_inputs.as_deref().map(list_images).transpose()?.unwrap_or_default();
    let mut pairs = Vec::new();
    let mut unpaired = Vec::new();
    for (stem, result) in &results {
        match gts.get(stem) {
            Some(gt) => pairs.push(Pair {
                stem: stem.clone(),
                result: result.clone(),
                gt: gt.clone(),
                mask: masks.get(stem).cloned(),
                shadow_input: inputs.get(stem).cloned(),
            }),
            None => unpaired.push(stem.clone()),
        }
    }
    unpaired.extend(gts.keys().filter(|s| !results.contains_key(*s)).cloned());
    unpaired.sort();
    Ok((pairs, unpaired))
}

/// Binary mask from Otsu's threshold on the per-pixel Lab-L1 difference
/// between a shadow image and its shadow-free counterpart.
pub fn otsu_mask(shadow: &Image, shadow_free: &Image) -> Result<SoftMask> {
    shadow.same_shape(shadow_free)?;
    let a = rgb_to_lab(shadow);
    let b = rgb_to_lab(shadow_free);
    let diff: Vec<f64> = a
        .chunks_exact(3)
        .zip(b.chunks_exact(3))
        .map(|(p, q)| (0..3).map(|c| (p[c] - q[c]).abs()).sum())
        .collect();
    let t = otsu_threshold(&diff);
    let data = diff.iter().map(|&d| if d > t { 1.0 } else { 0.0 }).collect();
    SoftMask::new(shadow.height(), shadow.width(), data)
}

const OTSU_BINS: usize = 256;

/// Threshold maximizing between-class variance over a 256-bin histogram.
/// Values strictly above the returned threshold form the upper class.
pub fn otsu_threshold(values: &[f64]) -> f64 {
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if values.is_empty() || hi <= lo {
        return hi;
    }
    let width = (hi - lo) / OTSU_BINS as f64;
    let mut hist = [0usize; OTSU_BINS];
    for &v in values {
        hist[(((v - lo) / width) as usize).min(OTSU_BINS - 1)] += 1;
    }
    let n = values.len() as f64;
    let total_mean: f64 = hist.iter().enumerate().map(|(i, &c)| i as f64 * c as f64).sum::<f64>() / n;
    let (mut w0, mut sum0) = (0.0, 0.0);
    let (mut best, mut best_k) = (-1.0, 0);
    for (k, &c) in hist.iter().enumerate().take(OTSU_BINS - 1) {
        w0 += c as f64 / n;
        sum0 += k as f64 * c as f64 / n;
        let w1 = 1.0 - w0;
        if w0 <= 0.0 || w1 <= 0.0 {
            continue;
        }
        let m0 = sum0 / w0;
        let m1 = (total_mean - sum0) / w1;
        let between = w0 * w1 * (m0 - m1).powi(2);
        if between > best {
            best = between;
            best_k = k;
        }
    }
    lo + (best_k + 1) as f64 * width
}

fn prepare(img: Image, resize: Resize) -> Result<Image> {
    match resize {
        Resize::Fixed256 if img.height() != PROTOCOL_SIZE || img.width() != PROTOCOL_SIZE => {
            img.resize(PROTOCOL_SIZE, PROTOCOL_SIZE)
        }
        _ => Ok(img),
    }
}

fn prepare_mask(mask: SoftMask, resize: Resize) -> Result<SoftMask> {
    match resize {
        Resize::Fixed256 if mask.height() != PROTOCOL_SIZE || mask.width() != PROTOCOL_SIZE => {
            mask.resize_nearest(PROTOCOL_SIZE, PROTOCOL_SIZE)
        }
        _ => Ok(mask),
    }
}

/// Evaluates one pair under `protocol`.
pub fn evaluate_pair(pair: &Pair, protocol: Protocol) -> Result<EvalRecord> {
    let pred = prepare(read_image(&pair.result)?, protocol.resize)?;
    let gt = prepare(read_image(&pair.gt)?, protocol.resize)?;
    let (mask, mask_source) = match (&pair.mask, &pair.shadow_input) {
        (Some(path), _) => (Some(prepare_mask(read_mask(path)?, protocol.resize)?), MaskSource::File),
        (None, Some(path)) => {
            let shadow = prepare(read_image(path)?, protocol.resize)?;
            (Some(otsu_mask(&shadow, &gt)?), MaskSource::Otsu)
        }
        (None, None) => (None, MaskSource::None),
    };
    let mae = region_mae(&pred, &gt, mask.as_ref(), protocol.space)?;
    Ok(EvalRecord {
        name: pair.stem.clone(),
        mae_all: mae.all,
        mae_shadow: mae.shadow,
        mae_nonshadow: mae.nonshadow,
        psnr: psnr(&pred, &gt)?,
        pixels_all: mae.pixels_all,
        pixels_shadow: mae.pixels_shadow,
        mask_source,
    })
}

/// Pixel-weighted means over the records. Shadow and non-shadow means weigh
/// only records that report the region.
pub fn aggregate(records: &[EvalRecord]) -> EvalRecord {
    let (mut all, mut s, mut ns, mut p) = (Sum::default(), Sum::default(), Sum::default(), Sum::default());
    let (mut n_all, mut n_s, mut n_ns) = (0usize, 0usize, 0usize);
    for r in records {
        all.add(r.mae_all * r.pixels_all as f64);
        p.add(r.psnr * r.pixels_all as f64);
        n_all += r.pixels_all;
        if let Some(v) = r.mae_shadow {
            s.add(v * r.pixels_shadow as f64);
            n_s += r.pixels_shadow;
        }
        if let Some(v) = r.mae_nonshadow {
            let k = r.pixels_all - r.pixels_shadow;
            ns.add(v * k as f64);
            n_ns += k;
        }
    }
    let mean = |sum: Sum, n: usize| (n > 0).then(|| sum.value() / n as f64);
    let sources: Vec<MaskSource> = records.iter().map(|r| r.mask_source).collect();
    let mask_source = if sources.contains(&MaskSource::Otsu) {
        MaskSource::Otsu
    } else if sources.contains(&MaskSource::File) {
        MaskSource::File
    } else {
        MaskSource::None
    };
    EvalRecord {
        name: "aggregate".into(),
        mae_all: mean(all, n_all).unwrap_or(0.0),
        mae_shadow: mean(s, n_s),
        mae_nonshadow: mean(ns, n_ns),
        psnr: mean(p, n_all).unwrap_or(PSNR_CAP),
        pixels_all: n_all,
        pixels_shadow: n_s,
        mask_source,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub protocol: Protocol,
    pub records: Vec<EvalRecord>,
    pub aggregate: EvalRecord,
    /// Stems present on only one side.
    pub unpaired: Vec<String>,
}

/// Evaluates every pair concurrently; records come back sorted by stem.
pub fn run_dataset(layout: &DatasetLayout, protocol: Protocol) -> Result<EvalReport> {
    let (pairs, unpaired) = pair_files(layout)?;
    let records = pairs
        .par_iter()
        .map(|p| evaluate_pair(p, protocol))
        .collect::<Result<Vec<_>>>()?;
    let aggregate = aggregate(&records);
    Ok(EvalReport {
        protocol,
        records,
        aggregate,
        unpaired,
    })
}

impl EvalReport {
    /// One row per record followed by the aggregate row.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in self.records.iter().chain(std::iter::once(&self.aggregate)) {
            w.serialize(r).map_err(|e| Error::InvalidInput(e.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| Error::InvalidInput(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::lab_to_srgb;

    fn ramp(h: usize, w: usize) -> Image {
        Image::from_fn(h, w, |r, c| {
            let t = (r * w + c) as f64 / (h * w) as f64;
            [0.2 + 0.5 * t, 0.3 + 0.2 * t, 0.6 - 0.3 * t]
        })
        .unwrap()
    }

    #[test]
    fn identical_images() {
        let img = ramp(4, 5);
        let mask = SoftMask::from_fn(4, 5, |r, _| if r < 2 { 1.0 } else { 0.0 }).unwrap();
        let m = region_mae(&img, &img, Some(&mask), ColorSpace::Lab).unwrap();
        assert_eq!((m.all, m.shadow, m.nonshadow), (0.0, Some(0.0), Some(0.0)));
        assert_eq!(psnr(&img, &img).unwrap(), PSNR_CAP);
    }

    #[test]
    fn regions_without_mask_are_absent() {
        let img = ramp(3, 3);
        let m = region_mae(&img, &img, None, ColorSpace::Lab).unwrap();
        assert_eq!(m.shadow, None);
        assert_eq!(m.nonshadow, None);
    }

    #[test]
    fn full_mask_matches_all() {
        let a = ramp(4, 4);
        let b = Image::from_fn(4, 4, |r, c| a.pixel(r, c).map(|v| v * 0.5)).unwrap();
        let full = SoftMask::from_fn(4, 4, |_, _| 1.0).unwrap();
        let m = region_mae(&a, &b, Some(&full), ColorSpace::Lab).unwrap();
        assert_eq!(m.shadow, Some(m.all));
        assert_eq!(m.nonshadow, None);
    }

    #[test]
    fn lightness_shift_of_five() {
        let gt = Image::from_fn(3, 4, |r, c| [0.3 + 0.05 * r as f64, 0.4, 0.2 + 0.1 * c as f64]).unwrap();
        let pred = Image::from_fn(3, 4, |r, c| {
            let lab = crate::image::srgb_to_lab(gt.pixel(r, c));
            lab_to_srgb([lab[0] + 5.0, lab[1], lab[2]])
        })
        .unwrap();
        let mask = SoftMask::from_fn(3, 4, |_, c| if c < 2 { 1.0 } else { 0.0 }).unwrap();
        let m = region_mae(&pred, &gt, Some(&mask), ColorSpace::Lab).unwrap();
        for v in [m.all, m.shadow.unwrap(), m.nonshadow.unwrap()] {
            assert!((v - 5.0 / 3.0).abs() < 1e-9, "{v}");
        }
    }

    #[test]
    fn psnr_of_uniform_errors() {
        let gt = Image::filled(2, 2, [0.5; 3]).unwrap();
        let p1 = Image::filled(2, 2, [0.6; 3]).unwrap();
        assert!((psnr(&p1, &gt).unwrap() - 20.0).abs() < 1e-6);
        let p2 = Image::filled(2, 2, [0.75; 3]).unwrap();
        assert!((psnr(&p2, &gt).unwrap() - 10.0 * 16f64.log10()).abs() < 1e-9);
    }

    #[test]
    fn rgb_space_scales_to_bytes() {
        let gt = Image::filled(2, 2, [0.5; 3]).unwrap();
        let p = Image::filled(2, 2, [0.6; 3]).unwrap();
        let m = region_mae(&p, &gt, None, ColorSpace::Rgb).unwrap();
        assert!((m.all - 25.5).abs() < 1e-9);
    }

    #[test]
    fn otsu_splits_two_levels() {
        let mut v = vec![1.0; 30];
        v.extend(vec![9.0; 10]);
        let t = otsu_threshold(&v);
        assert!(t > 1.0 && t < 9.0, "{t}");
    }

    #[test]
    fn aggregate_weights_by_pixels() {
        let rec = |mae: f64, n: usize, ns: usize| EvalRecord {
            name: String::new(),
            mae_all: mae,
            mae_shadow: Some(mae),
            mae_nonshadow: Some(mae),
            psnr: 30.0,
            pixels_all: n,
            pixels_shadow: ns,
            mask_source: MaskSource::File,
        };
        let a = aggregate(&[rec(1.0, 100, 10), rec(4.0, 300, 30)]);
        assert!((a.mae_all - 3.25).abs() < 1e-12);
        assert!((a.mae_shadow.unwrap() - 3.25).abs() < 1e-12);
        assert_eq!(a.pixels_all, 400);
        assert_eq!(a.pixels_shadow, 40);
    }

    #[test]
    fn parse_protocol_flags() {
        assert_eq!("lab".parse::<ColorSpace>().unwrap(), ColorSpace::Lab);
        assert_eq!("native".parse::<Resize>().unwrap(), Resize::Native);
        assert!("xyz".parse::<ColorSpace>().is_err());
        assert!("512".parse::<Resize>().is_err());
    }

    #[test]
    fn csv_mirror_has_header_and_rows() {
        let rec = EvalRecord {
            name: "a,b".into(),
            mae_all: 1.5,
            mae_shadow: None,
            mae_nonshadow: None,
            psnr: 20.0,
            pixels_all: 4,
            pixels_shadow: 0,
            mask_source: MaskSource::None,
        };
        let report = EvalReport {
            protocol: Protocol::default(),
            records: vec![rec.clone()],
            aggregate: aggregate(&[rec]),
            unpaired: vec![],
        };
        let csv = report.to_csv().unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "name,mae_all,mae_shadow,mae_nonshadow,psnr,pixels_all,pixels_shadow,mask_source");
        assert_eq!(lines[1], "\"a,b\",1.5,,,20.0,4,0,none");
        assert_eq!(lines.len(), 3);
    }
}
