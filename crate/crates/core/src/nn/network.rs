use super::arch::{NetworkSpec, StageKind};
use super::ops::{
    add_in_place, batchnorm_in_place, conv2d_raw, global_average_pool, sigmoid_scalar,
    swish_in_place, swish_scalar, transposed_conv2d_raw, Conv2dParams, BN_EPS,
};
use super::weights::{ParamKind, ParamSpec, Weights};
use super::Tensor;
use crate::error::{Error, Result};

/// One executable block with concrete channel counts.
#[derive(Debug, Clone, PartialEq)]
pub enum Block {
    Stem {
        name: String,
        in_c: usize,
        out_c: usize,
        kernel: usize,
    },
    Mirse {
        name: String,
        in_c: usize,
        out_c: usize,
        kernel: usize,
        stride: usize,
        expand_ratio: usize,
        se_c: usize,
    },
    Upscale {
        name: String,
        in_c: usize,
        out_c: usize,
        /// Encoder stage concatenated after upsampling, and its channels.
        skip: Option<(usize, usize)>,
    },
    Rms {
        name: String,
        channels: usize,
        kernels: [usize; 4],
        dilations: [usize; 4],
    },
    Head {
        name: String,
        in_c: usize,
        out_c: usize,
    },
}

fn conv_param(name: String, shape: [usize; 4], fan_in: usize) -> ParamSpec {
    ParamSpec {
        name,
        shape: shape.to_vec(),
        kind: ParamKind::Conv { fan_in },
    }
}

fn bn_params(prefix: &str, c: usize, out: &mut Vec<ParamSpec>) {
    for (suffix, kind) in [
        ("gamma", ParamKind::BnGamma),
        ("beta", ParamKind::BnBeta),
        ("running_mean", ParamKind::BnMean),
        ("running_var", ParamKind::BnVar),
    ] {
        out.push(ParamSpec {
            name: format!("{prefix}.bn.{suffix}"),
            shape: vec![c],
            kind,
        });
    }
}

fn conv_bn_params(prefix: &str, shape: [usize; 4], out: &mut Vec<ParamSpec>) {
    let fan_in = shape[1] * shape[2] * shape[3];
    out.push(conv_param(format!("{prefix}.conv.weight"), shape, fan_in));
    bn_params(prefix, shape[0], out);
}

fn bias_param(name: String, c: usize) -> ParamSpec {
    ParamSpec {
        name,
        shape: vec![c],
        kind: ParamKind::Bias,
    }
}

/// Conv (no bias) → batch norm → optional swish.
fn conv_bn(
    x: &Tensor,
    w: &Weights,
    prefix: &str,
    params: Conv2dParams,
    act: bool,
) -> Result<Tensor> {
    let kernel = w.entry(&format!("{prefix}.conv.weight"))?;
    let mut y = conv2d_raw(x, &kernel.shape, &kernel.data, None, params)?;
    apply_bn(&mut y, w, prefix)?;
    if act {
        swish_in_place(&mut y);
    }
    Ok(y)
}

fn apply_bn(y: &mut Tensor, w: &Weights, prefix: &str) -> Result<()> {
    let get = |s: &str| w.get(&format!("{prefix}.bn.{s}"));
    batchnorm_in_place(
        y,
        get("gamma")?,
        get("beta")?,
        get("running_mean")?,
        get("running_var")?,
        BN_EPS,
    )
}

/// Global pool → 1×1 reduce → swish → 1×1 expand → sigmoid → channel gate.
fn squeeze_excite_named(x: &mut Tensor, w: &Weights, prefix: &str) -> Result<()> {
    let pooled = global_average_pool(x)?;
    let c = pooled.len();
    let rw = w.get(&format!("{prefix}.reduce.weight"))?;
    let rb = w.get(&format!("{prefix}.reduce.bias"))?;
    let ew = w.get(&format!("{prefix}.expand.weight"))?;
    let eb = w.get(&format!("{prefix}.expand.bias"))?;
    let r = rb.len();
    if rw.len() != r * c || ew.len() != c * r || eb.len() != c {
        return Err(Error::shape(format!(
            "squeeze-excite `{prefix}` does not fit {c} channels"
        )));
    }
    let hidden: Vec<f32> = (0..r)
        .map(|j| {
            let s = rw[j * c..][..c]
                .iter()
                .zip(&pooled)
                .fold(rb[j], |acc, (a, b)| acc + a * b);
            swish_scalar(s)
        })
        .collect();
    let gate: Vec<f32> = (0..c)
        .map(|i| {
            let s = ew[i * r..][..r]
                .iter()
                .zip(&hidden)
                .fold(eb[i], |acc, (a, b)| acc + a * b);
            sigmoid_scalar(s)
        })
        .collect();
    let (_, h, wd) = x.chw()?;
    for (plane, g) in x.data_mut().chunks_mut(h * wd).zip(gate) {
        plane.iter_mut().for_each(|v| *v *= g);
    }
    Ok(())
}

/// Standalone squeeze-and-excitation with explicit weights: `reduce_w` is
/// `(r, c)`, `expand_w` is `(c, r)`.
pub fn squeeze_excite(
    input: &Tensor,
    reduce_w: &[f32],
    reduce_b: &[f32],
    expand_w: &[f32],
    expand_b: &[f32],
) -> Result<Tensor> {
    let (c, _, _) = input.chw()?;
    let r = reduce_b.len();
    if r == 0 {
        return Err(Error::invalid(
            "squeeze-excite needs at least one reduced channel",
        ));
    }
    let w = Weights::from_entries(
        None,
        [
            ("se.reduce.weight", vec![r, c, 1, 1], reduce_w),
            ("se.reduce.bias", vec![r], reduce_b),
            ("se.expand.weight", vec![c, r, 1, 1], expand_w),
            ("se.expand.bias", vec![c], expand_b),
        ]
        .into_iter()
        .map(|(name, shape, data)| super::WeightEntry {
            name: name.into(),
            shape,
            data: data.to_vec(),
        })
        .collect(),
    )?;
    let mut out = input.clone();
    squeeze_excite_named(&mut out, &w, "se")?;
    Ok(out)
}

impl Block {
    pub fn mirse(
        name: impl Into<String>,
        in_c: usize,
        out_c: usize,
        kernel: usize,
        stride: usize,
        expand_ratio: usize,
        squeeze: f64,
    ) -> Self {
        Block::Mirse {
            name: name.into(),
            in_c,
            out_c,
            kernel,
            stride,
            expand_ratio,
            se_c: ((squeeze * in_c as f64).round() as usize).max(1),
        }
    }

    pub fn rms(
        name: impl Into<String>,
        channels: usize,
        kernels: [usize; 4],
        dilations: [usize; 4],
    ) -> Self {
        Block::Rms {
            name: name.into(),
            channels,
            kernels,
            dilations,
        }
    }

    pub fn name(&self) -> &str {
        match self {
            Block::Stem { name, .. }
            | Block::Mirse { name, .. }
            | Block::Upscale { name, .. }
            | Block::Rms { name, .. }
            | Block::Head { name, .. } => name,
        }
    }

    pub fn kind(&self) -> StageKind {
        match self {
            Block::Stem { .. } => StageKind::Stem,
            Block::Mirse { .. } => StageKind::Mirse,
            Block::Upscale { .. } => StageKind::Upscale,
            Block::Rms { .. } => StageKind::Rms,
            Block::Head { .. } => StageKind::Head,
        }
    }

    pub fn out_channels(&self) -> usize {
        match *self {
            Block::Stem { out_c, .. } | Block::Mirse { out_c, .. } | Block::Head { out_c, .. } => {
                out_c
            }
            Block::Upscale { out_c, skip, .. } => out_c + skip.map_or(0, |(_, c)| c),
            Block::Rms { channels, .. } => channels,
        }
    }

    /// Parameter tensors in a fixed order.
    pub fn params(&self) -> Vec<ParamSpec> {
        let mut out = Vec::new();
        match *self {
            Block::Stem {
                ref name,
                in_c,
                out_c,
                kernel,
            } => conv_bn_params(name, [out_c, in_c, kernel, kernel], &mut out),
            Block::Mirse {
                ref name,
                in_c,
                out_c,
                kernel,
                expand_ratio,
                se_c,
                ..
            } => {
                let e = in_c * expand_ratio;
                if expand_ratio != 1 {
                    conv_bn_params(&format!("{name}.expand"), [e, in_c, 1, 1], &mut out);
                }
                conv_bn_params(&format!("{name}.dw"), [e, 1, kernel, kernel], &mut out);
                out.push(conv_param(
                    format!("{name}.se.reduce.weight"),
                    [se_c, e, 1, 1],
                    e,
                ));
                out.push(bias_param(format!("{name}.se.reduce.bias"), se_c));
                out.push(conv_param(
                    format!("{name}.se.expand.weight"),
                    [e, se_c, 1, 1],
                    se_c,
                ));
                out.push(bias_param(format!("{name}.se.expand.bias"), e));
                conv_bn_params(&format!("{name}.project"), [out_c, e, 1, 1], &mut out);
            }
            Block::Upscale {
                ref name,
                in_c,
                out_c,
                ..
            } => {
                out.push(conv_param(
                    format!("{name}.conv.weight"),
                    [in_c, out_c, 3, 3],
                    in_c * 9,
                ));
                bn_params(name, out_c, &mut out);
            }
            Block::Rms {
                ref name,
                channels: c,
                kernels,
                ..
            } => {
                for (j, k) in kernels.into_iter().enumerate() {
                    conv_bn_params(&format!("{name}.branch{j}"), [c, c, k, k], &mut out);
                }
                conv_bn_params(&format!("{name}.fuse"), [c, 4 * c, 1, 1], &mut out);
            }
            Block::Head {
                ref name,
                in_c,
                out_c,
            } => {
                out.push(conv_param(
                    format!("{name}.conv.weight"),
                    [out_c, in_c, 1, 1],
                    in_c,
                ));
                out.push(bias_param(format!("{name}.conv.bias"), out_c));
            }
        }
        out
    }

    /// Runs the block. `skip` is the encoder feature map an upscale block
    /// concatenates; other blocks ignore it.
    pub fn forward(&self, x: &Tensor, w: &Weights, skip: Option<&Tensor>) -> Result<Tensor> {
        match *self {
            Block::Stem { ref name, .. } => conv_bn(x, w, name, Conv2dParams::stride(2), true),
            Block::Mirse {
                ref name,
                in_c,
                out_c,
                stride,
                expand_ratio,
                ..
            } => {
                let e = in_c * expand_ratio;
                let dw = |t: &Tensor| {
                    conv_bn(
                        t,
                        w,
                        &format!("{name}.dw"),
                        Conv2dParams::depthwise(e, stride),
                        true,
                    )
                };
                let mut y = if expand_ratio != 1 {
                    // The expanded map is the largest tensor in the network;
                    // it is dropped as soon as the depthwise conv is done.
                    dw(&conv_bn(
                        x,
                        w,
                        &format!("{name}.expand"),
                        Conv2dParams::default(),
                        true,
                    )?)?
                } else {
                    dw(x)?
                };
                squeeze_excite_named(&mut y, w, &format!("{name}.se"))?;
                let mut out = conv_bn(
                    &y,
                    w,
                    &format!("{name}.project"),
                    Conv2dParams::default(),
                    false,
                )?;
                if stride == 1 && in_c == out_c {
                    add_in_place(&mut out, x)?;
                }
                Ok(out)
            }
            Block::Upscale { ref name, .. } => {
                let kernel = w.entry(&format!("{name}.conv.weight"))?;
                let mut y = transposed_conv2d_raw(x, &kernel.shape, &kernel.data, None, 2)?;
                apply_bn(&mut y, w, name)?;
                swish_in_place(&mut y);
                match skip {
                    Some(s) => y.concat_channels(s),
                    None => Ok(y),
                }
            }
            Block::Rms {
                ref name,
                dilations,
                ..
            } => {
                let mut cat: Option<Tensor> = None;
                for j in 0..4 {
                    let b = conv_bn(
                        x,
                        w,
                        &format!("{name}.branch{j}"),
                        Conv2dParams::dilated(dilations[j]),
                        true,
                    )?;
                    cat = Some(match cat {
                        Some(c) => c.concat_channels(&b)?,
                        None => b,
                    });
                }
                let cat = cat.expect("four branches");
                let mut out = conv_bn(
                    &cat,
                    w,
                    &format!("{name}.fuse"),
                    Conv2dParams::default(),
                    true,
                )?;
                add_in_place(&mut out, x)?;
                Ok(out)
            }
            Block::Head { ref name, .. } => {
                let kernel = w.entry(&format!("{name}.conv.weight"))?;
                let bias = w.get(&format!("{name}.conv.bias"))?;
                let mut y = conv2d_raw(
                    x,
                    &kernel.shape,
                    &kernel.data,
                    Some(bias),
                    Conv2dParams::default(),
                )?;
                y.data_mut()
                    .iter_mut()
                    .for_each(|v| *v = sigmoid_scalar(*v));
                Ok(y)
            }
        }
    }
}

/// A [`NetworkSpec`] compiled into concrete blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    spec: NetworkSpec,
    /// `(encoder stage, block)`.
    encoder: Vec<(usize, Block)>,
    decoder: Vec<Block>,
}

impl Network {
    pub fn new(spec: &NetworkSpec) -> Result<Self> {
        spec.validate()?;
        let mut c = spec.in_channels;
        let mut encoder = Vec::new();
        let mut stage_channels = Vec::with_capacity(spec.encoder.len());
        for (si, s) in spec.encoder.iter().enumerate() {
            match s.kind {
                StageKind::Stem => {
                    encoder.push((
                        si,
                        Block::Stem {
                            name: format!("encoder.{si}.0"),
                            in_c: c,
                            out_c: s.filters,
                            kernel: s.kernels[0],
                        },
                    ));
                    c = s.filters;
                }
                StageKind::Mirse => {
                    for r in 0..s.repeats {
                        let stride = if r == 0 && s.stride2 { 2 } else { 1 };
                        encoder.push((
                            si,
                            Block::mirse(
                                format!("encoder.{si}.{r}"),
                                c,
                                s.filters,
                                s.kernels[0],
                                stride,
                                s.expand_ratio,
                                s.squeeze,
                            ),
                        ));
                        c = s.filters;
                    }
                }
                kind => {
                    return Err(Error::invalid(format!("{kind:?} stage in the encoder")));
                }
            }
            stage_channels.push(c);
        }

        let mut decoder = Vec::new();
        for (di, s) in spec.decoder.iter().enumerate() {
            match s.kind {
                StageKind::Upscale => {
                    let skip = spec
                        .skips
                        .iter()
                        .find(|k| k.decoder_stage == di)
                        .map(|k| (k.encoder_stage, stage_channels[k.encoder_stage]));
                    let block = Block::Upscale {
                        name: format!("decoder.{di}.0"),
                        in_c: c,
                        out_c: s.filters,
                        skip,
                    };
                    c = block.out_channels();
                    decoder.push(block);
                }
                StageKind::Mirse => {
                    for r in 0..s.repeats {
                        decoder.push(Block::mirse(
                            format!("decoder.{di}.{r}"),
                            c,
                            s.filters,
                            s.kernels[0],
                            1,
                            s.expand_ratio,
                            s.squeeze,
                        ));
                        c = s.filters;
                    }
                }
                StageKind::Rms => {
                    if c != s.filters {
                        return Err(Error::invalid(format!(
                            "RMS stage {di} expects {} input channels, got {c}",
                            s.filters
                        )));
                    }
                    let arr = |v: &[usize]| [v[0], v[1], v[2], v[3]];
                    decoder.push(Block::rms(
                        format!("decoder.{di}.0"),
                        c,
                        arr(&s.kernels),
                        arr(&s.dilations),
                    ));
                }
                StageKind::Head => {
                    decoder.push(Block::Head {
                        name: format!("decoder.{di}.0"),
                        in_c: c,
                        out_c: s.filters,
                    });
                    c = s.filters;
                }
                StageKind::Stem => return Err(Error::invalid("stem stage in the decoder")),
            }
        }
        if c != spec.out_channels {
            return Err(Error::invalid(format!(
                "network ends with {c} channels, expected {}",
                spec.out_channels
            )));
        }
        Ok(Network {
            spec: spec.clone(),
            encoder,
            decoder,
        })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn blocks(&self) -> impl Iterator<Item = &Block> {
        self.encoder.iter().map(|(_, b)| b).chain(&self.decoder)
    }

    pub fn params(&self) -> Vec<ParamSpec> {
        self.blocks().flat_map(Block::params).collect()
    }

    /// Spatial dimensions must be multiples of this.
    pub fn size_multiple(&self) -> usize {
        1 << self.spec.downsampling_steps()
    }

    /// `(5, H, W)` or `(1, 5, H, W)` in, `(1, H, W)` probabilities out.
    pub fn forward(&self, weights: &Weights, input: &Tensor) -> Result<Tensor> {
        let input = match *input.shape() {
            [1, c, h, w] => input.clone().reshape(&[c, h, w])?,
            [_, _, _] => input.clone(),
            _ => {
                return Err(Error::shape(format!(
                    "expected (channels, height, width) or (1, channels, height, width), got {:?}",
                    input.shape()
                )))
            }
        };
        let (c, h, w) = input.chw()?;
        if c != self.spec.in_channels {
            return Err(Error::shape(format!(
                "network takes {} input channels, got {c}",
                self.spec.in_channels
            )));
        }
        let m = self.size_multiple();
        if h == 0 || w == 0 || h % m != 0 || w % m != 0 {
            return Err(Error::invalid(format!(
                "height and width must be positive multiples of {m}, got {h}x{w}"
            )));
        }
        if !input.is_finite() {
            return Err(Error::NonFinite("input".into()));
        }
        weights.check_against(&self.params())?;

        let mut saved: Vec<Option<Tensor>> = vec![None; self.spec.encoder.len()];
        let keep: Vec<bool> = (0..self.spec.encoder.len())
            .map(|s| self.spec.skips.iter().any(|k| k.encoder_stage == s))
            .collect();
        let mut x = input;
        for (i, (stage, block)) in self.encoder.iter().enumerate() {
            x = checked(block, block.forward(&x, weights, None)?)?;
            let last_of_stage = self.encoder.get(i + 1).is_none_or(|(s, _)| s != stage);
            if last_of_stage && keep[*stage] {
                saved[*stage] = Some(x.clone());
            }
        }
        for block in &self.decoder {
            let skip = match block {
                Block::Upscale {
                    skip: Some((s, _)), ..
                } => saved[*s].take(),
                _ => None,
            };
            x = checked(block, block.forward(&x, weights, skip.as_ref())?)?;
        }
        Ok(x)
    }
}

fn checked(block: &Block, t: Tensor) -> Result<Tensor> {
    if t.is_finite() {
        Ok(t)
    } else {
        Err(Error::NonFinite(block.name().to_string()))
    }
}

pub fn network_forward(spec: &NetworkSpec, weights: &Weights, input: &Tensor) -> Result<Tensor> {
    Network::new(spec)?.forward(weights, input)
}
