use serde::{Deserialize, Serialize};

use super::ops::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub adversarial: f64,
    pub l1: f64,
    pub total: f64,
    pub lambda_l1: f64,
}

/// Generator loss together with its gradients.
#[derive(Debug, Clone)]
pub struct GeneratorLoss {
    pub breakdown: LossBreakdown,
    pub d_logits: Tensor,
    pub d_generated: Tensor,
}

#[derive(Debug, Clone)]
pub struct DiscriminatorLoss {
    pub loss: f64,
    pub d_real: Tensor,
    pub d_fake: Tensor,
}

fn ensure_finite(t: &Tensor, what: &str) -> Result<()> {
    if t.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what.to_string()))
    }
}

/// log(1 + e^x) without overflow.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Patch-averaged binary cross-entropy on logits and its gradient.
pub fn bce_with_logits(logits: &Tensor, target_real: bool) -> (f64, Tensor) {
    let n = logits.len() as f64;
    let (loss, grad) = if target_real {
        (
            logits.iter().map(|&z| softplus(-z)).sum::<f64>(),
            logits.mapv(|z| (sigmoid(z) - 1.0) / n),
        )
    } else {
        (
            logits.iter().map(|&z| softplus(z)).sum::<f64>(),
            logits.mapv(|z| sigmoid(z) / n),
        )
    };
    (loss / n, grad)
}

/// Adversarial BCE against the "real" label plus `lambda_l1` times the mean
/// absolute error to the target.
pub fn generator_loss(
    logits_fake: &Tensor,
    generated: &Tensor,
    target: &Tensor,
    lambda_l1: f64,
) -> Result<GeneratorLoss> {
    if generated.shape() != target.shape() {
        return Err(Error::ShapeMismatch {
            expected: format!("{:?}", target.shape()),
            got: format!("{:?}", generated.shape()),
        });
    }
    ensure_finite(logits_fake, "generator adversarial logits")?;
    ensure_finite(generated, "generated image")?;
    ensure_finite(target, "target image")?;
    let (adversarial, d_logits) = bce_with_logits(logits_fake, true);
    let n = generated.len() as f64;
    let l1 = generated
        .iter()
        .zip(target.iter())
        .map(|(g, t)| (g - t).abs())
        .sum::<f64>()
        / n;
    let mut d_generated = generated - target;
    d_generated.mapv_inplace(|d| {
        if d > 0.0 {
            lambda_l1 / n
        } else if d < 0.0 {
            -lambda_l1 / n
        } else {
            0.0
        }
    });
    let total = adversarial + lambda_l1 * l1;
    Ok(GeneratorLoss {
        breakdown: LossBreakdown {
            adversarial,
            l1,
            total,
            lambda_l1,
        },
        d_logits,
        d_generated,
    })
}

/// `0.5 · [BCE(real, 1) + BCE(fake, 0)]`, each term patch-averaged.
pub fn discriminator_loss(logits_real: &Tensor, logits_fake: &Tensor) -> Result<DiscriminatorLoss> {
    ensure_finite(logits_real, "discriminator real logits")?;
    ensure_finite(logits_fake, "discriminator fake logits")?;
    let (lr, gr) = bce_with_logits(logits_real, true);
    let (lf, gf) = bce_with_logits(logits_fake, false);
    Ok(DiscriminatorLoss {
        loss: 0.5 * (lr + lf),
        d_real: gr * 0.5,
        d_fake: gf * 0.5,
    })
}
