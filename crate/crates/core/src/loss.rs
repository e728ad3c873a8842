//! Hybrid soft-Dice + cross-entropy loss on probability maps.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which cross-entropy term accompanies the Dice term.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CrossEntropy {
    /// `-(1/N) Σ g log p`: foreground pixels only.
    #[default]
    Foreground,
    /// `-(1/N) Σ [g log p + (1 - g) log(1 - p)]`.
    Symmetric,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossConfig {
    /// Dice smoothing constant.
    pub eps: f64,
    /// Lower bound applied to probabilities inside the logarithm.
    pub clamp: f64,
    pub cross_entropy: CrossEntropy,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            eps: 1.0,
            clamp: 1e-7,
            cross_entropy: CrossEntropy::Foreground,
        }
    }
}

fn validate(p: &[f64], g: &[f64]) -> Result<()> {
    if p.len() != g.len() {
        return Err(Error::shape(format!(
            "{} predictions for {} targets",
            p.len(),
            g.len()
        )));
    }
    if p.is_empty() {
        return Err(Error::invalid("loss needs at least one pixel"));
    }
    if let Some(v) = g.iter().find(|&&v| v != 0.0 && v != 1.0) {
        return Err(Error::invalid(format!("target must be binary, found {v}")));
    }
    if let Some(v) = p.iter().find(|&&v| !(0.0..=1.0).contains(&v)) {
        return Err(Error::invalid(format!(
            "prediction must lie in [0, 1], found {v}"
        )));
    }
    Ok(())
}

struct Sums {
    pg: f64,
    pp: f64,
    gg: f64,
}

fn sums(p: &[f64], g: &[f64]) -> Sums {
    let mut s = Sums {
        pg: 0.0,
        pp: 0.0,
        gg: 0.0,
    };
    for (&p, &g) in p.iter().zip(g) {
        s.pg += p * g;
        s.pp += p * p;
        s.gg += g * g;
    }
    s
}

pub fn hybrid_loss(p: &[f64], g: &[f64]) -> Result<f64> {
    hybrid_loss_with(p, g, &LossConfig::default())
}

/// `1 - (2Σpg + ε)/(Σp² + Σg² + ε)` plus the configured cross-entropy term.
pub fn hybrid_loss_with(p: &[f64], g: &[f64], cfg: &LossConfig) -> Result<f64> {
    validate(p, g)?;
    let s = sums(p, g);
    let dice = 1.0 - (2.0 * s.pg + cfg.eps) / (s.pp + s.gg + cfg.eps);
    let mut ce = 0.0;
    for (&p, &g) in p.iter().zip(g) {
        ce -= g * p.max(cfg.clamp).ln();
        if cfg.cross_entropy == CrossEntropy::Symmetric {
            ce -= (1.0 - g) * (1.0 - p).max(cfg.clamp).ln();
        }
    }
    Ok(dice + ce / p.len() as f64)
}

pub fn hybrid_loss_grad(p: &[f64], g: &[f64]) -> Result<Vec<f64>> {
    hybrid_loss_grad_with(p, g, &LossConfig::default())
}

/// `∂L/∂p`, elementwise. The clamp has zero slope where it is active.
pub fn hybrid_loss_grad_with(p: &[f64], g: &[f64], cfg: &LossConfig) -> Result<Vec<f64>> {
    validate(p, g)?;
    let s = sums(p, g);
    let num = 2.0 * s.pg + cfg.eps;
    let den = s.pp + s.gg + cfg.eps;
    let n = p.len() as f64;
    Ok(p.iter()
        .zip(g)
        .map(|(&p, &g)| {
            let mut d = -(2.0 * g * den - 2.0 * p * num) / (den * den);
            if p > cfg.clamp {
                d -= g / (n * p);
            }
            if cfg.cross_entropy == CrossEntropy::Symmetric && 1.0 - p > cfg.clamp {
                d += (1.0 - g) / (n * (1.0 - p));
            }
            d
        })
        .collect())
}
