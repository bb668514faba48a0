//! Unsupervised loss terms evaluated over caller-supplied images, features and
//! classifier / discriminator scores, plus the weighted total.
//!
//! Expectations are arithmetic means over the supplied batch; every L1 term is
//! mean-reduced per element. Probabilities are clamped to
//! `[PROB_EPS, 1 - PROB_EPS]` before taking logs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{normalize_minmax, FeatureMap, Image, SoftMask};

pub const PROB_EPS: f64 = 1e-7;

/// A classifier output: the probability that its input is a shadow image.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct DomainScore(f64);

impl DomainScore {
    /// Clamps into `[PROB_EPS, 1 - PROB_EPS]`. NaN is rejected.
    pub fn new(p: f64) -> Result<Self> {
        if p.is_nan() {
            return Err(Error::InvalidInput("domain score is NaN".into()));
        }
        Ok(Self(clamp_prob(p)))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_EPS, 1.0 - PROB_EPS)
}

/// Mean-L1 between two equally sized slices, and its gradient with respect to
/// the first.
fn mean_l1(a: &[f64], b: &[f64]) -> (f64, Vec<f64>) {
    let n = a.len() as f64;
    let mut value = 0.0;
    let grad = a
        .iter()
        .zip(b)
        .map(|(x, y)| {
            let d = x - y;
            value += d.abs();
            if d > 0.0 {
                1.0 / n
            } else if d < 0.0 {
                -1.0 / n
            } else {
                0.0
            }
        })
        .collect();
    (value / n, grad)
}

/// `mean |V(Z) - V(I)|` with the gradient with respect to `v_z`.
pub fn loss_feature(v_z: &FeatureMap, v_i: &FeatureMap) -> Result<(f64, FeatureMap)> {
    if v_z.shape() != v_i.shape() {
        return Err(Error::shape(format!("{:?}", v_i.shape()), format!("{:?}", v_z.shape())));
    }
    let (value, grad) = mean_l1(v_z.as_slice(), v_i.as_slice());
    let [c, h, w] = v_z.shape();
    Ok((value, FeatureMap::new(c, h, w, grad)?))
}

/// Cycle-reconstruction term: mean-L1 between a reconstruction and the image
/// it came from. Serves both cycle directions.
pub fn loss_consistency(reconstructed: &Image, original: &Image) -> Result<(f64, Vec<f64>)> {
    reconstructed.same_shape(original)?;
    Ok(mean_l1(reconstructed.as_slice(), original.as_slice()))
}

/// Identity term: mean-L1 between a generator's output on an image already
/// in its target domain and that image.
pub fn loss_identity(output: &Image, input: &Image) -> Result<(f64, Vec<f64>)> {
    output.same_shape(input)?;
    Ok(mean_l1(output.as_slice(), input.as_slice()))
}

/// The all-zero mask handed to the shadow generator in its identity pass.
pub fn zero_mask(height: usize, width: usize) -> SoftMask {
    SoftMask::zeros(height, width)
}

/// Class-activation-style attention `A = (1/n) sum_i w_i * Pi_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionMap {
    pub height: usize,
    pub width: usize,
    pub values: Vec<f64>,
}

impl AttentionMap {
    /// Min-max normalized view for display.
    pub fn normalized(&self) -> SoftMask {
        let v = normalize_minmax(&self.values).expect("attention values are finite");
        SoftMask::new(self.height, self.width, v).expect("normalized values lie in [0, 1]")
    }
}

pub fn attention_map(features: &FeatureMap, weights: &[f64]) -> Result<AttentionMap> {
    let [c, h, w] = features.shape();
    if weights.len() != c {
        return Err(Error::shape(format!("{c} weights"), format!("{} weights", weights.len())));
    }
    if weights.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("attention weights must be finite".into()));
    }
    let mut values = vec![0.0; h * w];
    for (i, &wi) in weights.iter().enumerate() {
        for (a, &f) in values.iter_mut().zip(features.plane(i)) {
            *a += wi * f;
        }
    }
    for a in &mut values {
        *a /= c as f64;
    }
    Ok(AttentionMap {
        height: h,
        width: w,
        values,
    })
}

fn mean_neg_log(scores: &[DomainScore], positive: bool) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::InvalidInput("score list is empty".into()));
    }
    let total: f64 = scores
        .iter()
        .map(|s| if positive { -s.0.ln() } else { -(1.0 - s.0).ln() })
        .sum();
    Ok(total / scores.len() as f64)
}

/// Domain-classification loss of the discriminator's classifier:
/// `E_shadow[-log p] + E_shadowfree[-log(1 - p)]`.
pub fn domcls_loss_discriminator(
    scores_on_shadow: &[DomainScore],
    scores_on_shadowfree: &[DomainScore],
) -> Result<f64> {
    Ok(mean_neg_log(scores_on_shadow, true)? + mean_neg_log(scores_on_shadowfree, false)?)
}

/// Same form as [`domcls_loss_discriminator`], for the generator's classifier.
pub fn domcls_loss_generator(
    scores_on_shadow: &[DomainScore],
    scores_on_shadowfree: &[DomainScore],
) -> Result<f64> {
    domcls_loss_discriminator(scores_on_shadow, scores_on_shadowfree)
}

fn adversarial(real: &[f64], generated: &[f64]) -> Result<f64> {
    if real.is_empty() || generated.is_empty() {
        return Err(Error::InvalidInput("score list is empty".into()));
    }
    if real.iter().chain(generated).any(|v| v.is_nan()) {
        return Err(Error::InvalidInput("discriminator score is NaN".into()));
    }
    let mean = |xs: &[f64], f: &dyn Fn(f64) -> f64| xs.iter().map(|&x| f(clamp_prob(x))).sum::<f64>() / xs.len() as f64;
    Ok(mean(real, &|p| p.ln()) + mean(generated, &|p| (1.0 - p).ln()))
}

/// `E[log D_sf(I_sf)] + E[log(1 - D_sf(G_s(I_s)))]`, as written (no min/max).
pub fn adv_loss_removal(d_on_real_shadowfree: &[f64], d_on_generated: &[f64]) -> Result<f64> {
    adversarial(d_on_real_shadowfree, d_on_generated)
}

/// `E[log D_s(I_s)] + E[log(1 - D_s(G_sf(I_sf, M_s)))]`.
pub fn adv_loss_synthesis(d_on_real_shadow: &[f64], d_on_generated_shadow: &[f64]) -> Result<f64> {
    adversarial(d_on_real_shadow, d_on_generated_shadow)
}

/// Loss weights. The default matches the published setting: 10 on identity
/// and consistency, 1 elsewhere.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossWeights {
    pub chroma: f64,
    pub feat: f64,
    pub sm: f64,
    pub dom: f64,
    pub adv: f64,
    pub cons: f64,
    pub iden: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            chroma: 1.0,
            feat: 1.0,
            sm: 1.0,
            iden: 10.0,
            adv: 1.0,
            cons: 10.0,
            dom: 1.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [self.chroma, self.feat, self.sm, self.dom, self.adv, self.cons, self.iden];
        if all.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidParameter(format!(
                "loss weights must be finite and nonnegative: {self:?}"
            )));
        }
        Ok(())
    }

    pub fn zero() -> Self {
        Self {
            chroma: 0.0,
            feat: 0.0,
            sm: 0.0,
            dom: 0.0,
            adv: 0.0,
            cons: 0.0,
            iden: 0.0,
        }
    }
}

/// The seven weighted slots of the overall objective. `None` marks a term that
/// was not evaluated; it contributes nothing to the total.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossComponents {
    pub chroma: Option<f64>,
    pub feature: Option<f64>,
    pub smooth: Option<f64>,
    pub domcls: Option<f64>,
    pub adv: Option<f64>,
    pub cons: Option<f64>,
    pub iden: Option<f64>,
}

impl LossComponents {
    pub fn all(value: f64) -> Self {
        Self {
            chroma: Some(value),
            feature: Some(value),
            smooth: Some(value),
            domcls: Some(value),
            adv: Some(value),
            cons: Some(value),
            iden: Some(value),
        }
    }
}

/// Per-term values, direction by direction.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossTerms {
    pub chroma: Option<f64>,
    pub feature: Option<f64>,
    pub smooth: Option<f64>,
    pub domcls_g: Option<f64>,
    pub domcls_d: Option<f64>,
    #[serde(rename = "adv_s2sf")]
    pub adv_s_to_sf: Option<f64>,
    #[serde(rename = "adv_sf2s")]
    pub adv_sf_to_s: Option<f64>,
    pub cons_s: Option<f64>,
    pub cons_sf: Option<f64>,
    pub iden_s: Option<f64>,
    pub iden_sf: Option<f64>,
}

fn sum_present(a: Option<f64>, b: Option<f64>) -> Option<f64> {
    match (a, b) {
        (None, None) => None,
        (a, b) => Some(a.unwrap_or(0.0) + b.unwrap_or(0.0)),
    }
}

impl LossTerms {
    /// Folds paired directions into the seven weighted slots by summing the
    /// directions that were evaluated.
    pub fn components(&self) -> LossComponents {
        LossComponents {
            chroma: self.chroma,
            feature: self.feature,
            smooth: self.smooth,
            domcls: sum_present(self.domcls_g, self.domcls_d),
            adv: sum_present(self.adv_s_to_sf, self.adv_sf_to_s),
            cons: sum_present(self.cons_s, self.cons_sf),
            iden: sum_present(self.iden_s, self.iden_sf),
        }
    }
}

/// Term values plus the weighted total.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub terms: LossTerms,
    pub components: LossComponents,
    pub weights: LossWeights,
    pub total: f64,
}

/// Weighted sum of the evaluated components.
pub fn total_loss(components: &LossComponents, weights: &LossWeights) -> Result<f64> {
    weights.validate()?;
    let pairs = [
        (components.chroma, weights.chroma, "chroma"),
        (components.feature, weights.feat, "feature"),
        (components.smooth, weights.sm, "smooth"),
        (components.domcls, weights.dom, "domcls"),
        (components.adv, weights.adv, "adv"),
        (components.cons, weights.cons, "cons"),
        (components.iden, weights.iden, "iden"),
    ];
    let mut total = 0.0;
    for (value, weight, name) in pairs {
        if let Some(v) = value {
            if !v.is_finite() {
                return Err(Error::InvalidInput(format!("loss component {name} is not finite")));
            }
            total += weight * v;
        }
    }
    Ok(total)
}

pub fn loss_report(terms: LossTerms, weights: LossWeights) -> Result<LossReport> {
    let components = terms.components();
    let total = total_loss(&components, &weights)?;
    Ok(LossReport {
        terms,
        components,
        weights,
        total,
    })
}
