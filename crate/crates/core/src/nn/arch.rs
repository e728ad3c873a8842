use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SQUEEZE_RATIO: f64 = 0.25;
pub const EXPAND_RATIO: usize = 6;
pub const IN_CHANNELS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageKind {
    Stem,
    Mirse,
    Upscale,
    Rms,
    Head,
}

/// One row of the architecture table, after scaling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageSpec {
    pub kind: StageKind,
    /// One kernel size, or four for the parallel RMS branches.
    pub kernels: Vec<usize>,
    /// RMS branch dilations; `[1]` elsewhere.
    pub dilations: Vec<usize>,
    pub filters: usize,
    pub repeats: usize,
    pub stride2: bool,
    pub squeeze: f64,
    pub expand_ratio: usize,
}

impl StageSpec {
    pub fn stem(kernel: usize, filters: usize) -> Self {
        StageSpec {
            kind: StageKind::Stem,
            kernels: vec![kernel],
            dilations: vec![1],
            filters,
            repeats: 1,
            stride2: true,
            squeeze: 0.0,
            expand_ratio: 1,
        }
    }

    pub fn mirse(kernel: usize, filters: usize, repeats: usize, stride2: bool) -> Self {
        StageSpec {
            kind: StageKind::Mirse,
            kernels: vec![kernel],
            dilations: vec![1],
            filters,
            repeats,
            stride2,
            squeeze: SQUEEZE_RATIO,
            expand_ratio: EXPAND_RATIO,
        }
    }

    pub fn upscale(filters: usize) -> Self {
        StageSpec {
            kind: StageKind::Upscale,
            kernels: vec![3],
            dilations: vec![1],
            filters,
            repeats: 1,
            stride2: false,
            squeeze: 0.0,
            expand_ratio: 1,
        }
    }

    pub fn rms(kernels: [usize; 4], dilations: [usize; 4], filters: usize) -> Self {
        StageSpec {
            kind: StageKind::Rms,
            kernels: kernels.to_vec(),
            dilations: dilations.to_vec(),
            filters,
            repeats: 1,
            stride2: false,
            squeeze: 0.0,
            expand_ratio: 1,
        }
    }

    pub fn head(filters: usize) -> Self {
        StageSpec {
            kind: StageKind::Head,
            kernels: vec![1],
            dilations: vec![1],
            filters,
            repeats: 1,
            stride2: false,
            squeeze: 0.0,
            expand_ratio: 1,
        }
    }

    fn with_expand_ratio(mut self, ratio: usize) -> Self {
        self.expand_ratio = ratio;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let branches = if self.kind == StageKind::Rms { 4 } else { 1 };
        if self.kernels.len() != branches || self.dilations.len() != branches {
            return Err(Error::invalid(format!(
                "{:?} stage needs {branches} kernel/dilation pairs",
                self.kind
            )));
        }
        if self.kernels.iter().any(|k| k % 2 == 0) {
            return Err(Error::invalid("kernel sizes must be odd"));
        }
        if self.dilations.contains(&0) || self.filters == 0 || self.repeats == 0 {
            return Err(Error::invalid("dilation, filters and repeats must be >= 1"));
        }
        if self.kind == StageKind::Mirse && self.expand_ratio == 0 {
            return Err(Error::invalid("expansion ratio must be >= 1"));
        }
        Ok(())
    }
}

/// Decoder upscale stage `decoder_stage` concatenates the output of encoder
/// stage `encoder_stage`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Skip {
    pub encoder_stage: usize,
    pub decoder_stage: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    B0,
    B1,
    B2,
    B3,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::B0, Variant::B1, Variant::B2, Variant::B3];

    /// `(width, depth)` multipliers.
    pub fn factors(self) -> (f64, f64) {
        match self {
            Variant::B0 => (1.0, 1.0),
            Variant::B1 => (1.0, 1.1),
            Variant::B2 => (1.1, 1.2),
            Variant::B3 => (1.2, 1.4),
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "B0" => Ok(Variant::B0),
            "B1" => Ok(Variant::B1),
            "B2" => Ok(Variant::B2),
            "B3" => Ok(Variant::B3),
            _ => Err(Error::invalid(format!(
                "unknown variant {s:?}, expected one of B0, B1, B2, B3"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub variant: Option<Variant>,
    pub width_mult: f64,
    pub depth_mult: f64,
    pub in_channels: usize,
    pub out_channels: usize,
    pub encoder: Vec<StageSpec>,
    pub decoder: Vec<StageSpec>,
    pub skips: Vec<Skip>,
}

/// Nearest multiple of 8 to `filters * width`, at least 8.
pub fn scale_filters(filters: usize, width: f64) -> usize {
    let scaled = filters as f64 * width;
    (((scaled / 8.0).round() as usize) * 8).max(8)
}

pub fn scale_repeats(repeats: usize, depth: f64) -> usize {
    // The tolerance absorbs products like 5 * 1.2 landing a hair above 6.
    ((repeats as f64 * depth - 1e-9).ceil() as usize).max(1)
}

fn baseline_encoder() -> Vec<StageSpec> {
    vec![
        StageSpec::stem(3, 32),
        StageSpec::mirse(3, 16, 1, false).with_expand_ratio(1),
        StageSpec::mirse(3, 24, 2, true),
        StageSpec::mirse(5, 40, 2, true),
        StageSpec::mirse(3, 80, 3, true),
        StageSpec::mirse(5, 112, 3, false),
        StageSpec::mirse(5, 192, 5, true),
        StageSpec::mirse(3, 320, 1, false),
    ]
}

fn baseline_decoder() -> Vec<StageSpec> {
    vec![
        StageSpec::upscale(320),
        StageSpec::mirse(5, 192, 3, false),
        StageSpec::rms([3, 5, 5, 7], [3, 3, 5, 7], 192),
        StageSpec::mirse(5, 112, 3, false),
        StageSpec::upscale(112),
        StageSpec::mirse(3, 80, 3, false),
        StageSpec::rms([3, 3, 5, 5], [1, 3, 3, 5], 80),
        StageSpec::upscale(80),
        StageSpec::mirse(5, 40, 2, false),
        StageSpec::upscale(40),
        StageSpec::mirse(3, 24, 2, false),
        StageSpec::upscale(24),
        StageSpec::mirse(3, 16, 1, false),
        StageSpec::head(1),
    ]
}

/// Resolution-matched skips: the last encoder stage at 1/16, 1/8, 1/4 and
/// 1/2 feeds the upscale that arrives at that resolution.
fn baseline_skips() -> Vec<Skip> {
    [(5, 0), (3, 4), (2, 7), (1, 9)]
        .into_iter()
        .map(|(encoder_stage, decoder_stage)| Skip {
            encoder_stage,
            decoder_stage,
        })
        .collect()
}

impl NetworkSpec {
    pub fn variant(v: Variant) -> Self {
        let (w, d) = v.factors();
        let mut spec = Self::scaled(w, d).expect("variant factors are positive");
        spec.variant = Some(v);
        spec
    }

    /// Baseline scaled by width `w` (channels) and depth `d` (MIRSE
    /// repetitions). Kernels, dilations and the block layout never change.
    pub fn scaled(w: f64, d: f64) -> Result<Self> {
        if !(w > 0.0 && w.is_finite() && d > 0.0 && d.is_finite()) {
            return Err(Error::invalid(format!(
                "scaling factors must be positive, got w={w}, d={d}"
            )));
        }
        let scale = |stages: Vec<StageSpec>| -> Vec<StageSpec> {
            stages
                .into_iter()
                .map(|mut s| {
                    if s.kind != StageKind::Head {
                        s.filters = scale_filters(s.filters, w);
                    }
                    if s.kind == StageKind::Mirse {
                        s.repeats = scale_repeats(s.repeats, d);
                    }
                    s
                })
                .collect()
        };
        Ok(NetworkSpec {
            variant: None,
            width_mult: w,
            depth_mult: d,
            in_channels: IN_CHANNELS,
            out_channels: 1,
            encoder: scale(baseline_encoder()),
            decoder: scale(baseline_decoder()),
            skips: baseline_skips(),
        })
    }

    pub fn label(&self) -> String {
        match self.variant {
            Some(v) => v.to_string(),
            None => format!("w={},d={}", self.width_mult, self.depth_mult),
        }
    }

    /// Number of stride-2 reductions in the encoder; inputs must be
    /// divisible by `2^n`.
    pub fn downsampling_steps(&self) -> usize {
        self.encoder.iter().filter(|s| s.stride2).count()
    }

    pub fn validate(&self) -> Result<()> {
        for s in self.encoder.iter().chain(&self.decoder) {
            s.validate()?;
        }
        let ups = self
            .decoder
            .iter()
            .filter(|s| s.kind == StageKind::Upscale)
            .count();
        if ups != self.downsampling_steps() {
            return Err(Error::invalid(format!(
                "{} encoder reductions but {ups} decoder upscales",
                self.downsampling_steps()
            )));
        }
        if self.encoder.first().map(|s| s.kind) != Some(StageKind::Stem) {
            return Err(Error::invalid("encoder must start with a stem"));
        }
        if self.decoder.last().map(|s| s.kind) != Some(StageKind::Head) {
            return Err(Error::invalid("decoder must end with a head"));
        }
        for skip in &self.skips {
            if skip.encoder_stage >= self.encoder.len()
                || self.decoder.get(skip.decoder_stage).map(|s| s.kind) != Some(StageKind::Upscale)
            {
                return Err(Error::invalid(format!("dangling skip {skip:?}")));
            }
        }
        Ok(())
    }
}

/// Build the network for a named variant.
pub fn build_efficient_unet(variant: Variant) -> NetworkSpec {
    NetworkSpec::variant(variant)
}
