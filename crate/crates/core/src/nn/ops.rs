use rayon::prelude::*;

use super::Tensor;
use crate::error::{Error, Result};

pub const BN_EPS: f32 = 1e-3;

/// Output rows are processed in blocks of roughly this many values so the
/// accumulator stays in cache while input channels stream past.
const BLOCK_VALUES: usize = 8192;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Conv2dParams {
    pub stride: usize,
    pub dilation: usize,
    pub groups: usize,
}

impl Default for Conv2dParams {
    fn default() -> Self {
        Conv2dParams {
            stride: 1,
            dilation: 1,
            groups: 1,
        }
    }
}

impl Conv2dParams {
    pub fn stride(stride: usize) -> Self {
        Conv2dParams {
            stride,
            ..Default::default()
        }
    }

    pub fn dilated(dilation: usize) -> Self {
        Conv2dParams {
            dilation,
            ..Default::default()
        }
    }

    pub fn depthwise(channels: usize, stride: usize) -> Self {
        Conv2dParams {
            stride,
            dilation: 1,
            groups: channels,
        }
    }
}

/// Zero padding that keeps `ceil(n / stride)` outputs for an odd kernel.
pub fn same_padding(kernel: usize, dilation: usize) -> usize {
    dilation * (kernel - 1) / 2
}

fn kernel_dims(shape: &[usize]) -> Result<(usize, usize, usize)> {
    match *shape {
        [o, i, kh, kw] if kh == kw && kh % 2 == 1 => Ok((o, i, kh)),
        _ => Err(Error::shape(format!(
            "kernel must be (out, in, k, k) with odd k, got {shape:?}"
        ))),
    }
}

fn check_bias(bias: Option<&[f32]>, channels: usize) -> Result<()> {
    match bias {
        Some(b) if b.len() != channels => Err(Error::shape(format!(
            "bias has {} values for {channels} output channels",
            b.len()
        ))),
        _ => Ok(()),
    }
}

/// Range of output indices `o` whose input index `o * stride + offset` lies
/// in `0..n`.
fn valid_range(offset: isize, stride: usize, n: usize, out: usize) -> (usize, usize) {
    let s = stride as isize;
    let lo = if offset >= 0 {
        0
    } else {
        (-offset + s - 1) / s
    };
    let hi = (n as isize - 1 - offset).div_euclid(s) + 1;
    let lo = lo.clamp(0, out as isize) as usize;
    let hi = hi.clamp(0, out as isize) as usize;
    (lo, hi.max(lo))
}

/// Cross-correlation with "same" zero padding: output spatial size is
/// `ceil(input / stride)`. Kernel shape is `(out, in / groups, k, k)`.
pub fn conv2d(
    input: &Tensor,
    kernel: &Tensor,
    bias: Option<&[f32]>,
    params: Conv2dParams,
) -> Result<Tensor> {
    conv2d_raw(input, kernel.shape(), kernel.data(), bias, params)
}

pub(crate) fn conv2d_raw(
    input: &Tensor,
    kshape: &[usize],
    wts: &[f32],
    bias: Option<&[f32]>,
    params: Conv2dParams,
) -> Result<Tensor> {
    let (c, h, w) = input.chw()?;
    let (oc, cpg, k) = kernel_dims(kshape)?;
    let Conv2dParams {
        stride,
        dilation,
        groups,
    } = params;
    if stride == 0 || dilation == 0 || groups == 0 {
        return Err(Error::invalid("stride, dilation and groups must be >= 1"));
    }
    if c % groups != 0 || oc % groups != 0 || c / groups != cpg {
        return Err(Error::shape(format!(
            "kernel {kshape:?} with {groups} groups does not fit {c} input channels"
        )));
    }
    check_bias(bias, oc)?;

    let pad = same_padding(k, dilation) as isize;
    let (oh, ow) = (h.div_ceil(stride), w.div_ceil(stride));
    let opg = oc / groups;
    let rows_per_block = (BLOCK_VALUES / ow).max(1);
    let src = input.data();
    let mut out = vec![0.0f32; oc * oh * ow];

    out.par_chunks_mut(oh * ow)
        .enumerate()
        .for_each(|(o, plane)| {
            let g = o / opg;
            plane.fill(bias.map_or(0.0, |b| b[o]));
            for (block_idx, block) in plane.chunks_mut(rows_per_block * ow).enumerate() {
                let y0 = block_idx * rows_per_block;
                let rows = block.len() / ow;
                for il in 0..cpg {
                    let inp = &src[(g * cpg + il) * h * w..][..h * w];
                    let kw = &wts[(o * cpg + il) * k * k..][..k * k];
                    for ky in 0..k {
                        let yoff = (ky * dilation) as isize - pad;
                        for r in 0..rows {
                            let iy = ((y0 + r) * stride) as isize + yoff;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            let in_row = &inp[iy as usize * w..][..w];
                            let out_row = &mut block[r * ow..][..ow];
                            for kx in 0..k {
                                let wv = kw[ky * k + kx];
                                let xoff = (kx * dilation) as isize - pad;
                                let (lo, hi) = valid_range(xoff, stride, w, ow);
                                if lo == hi {
                                    continue;
                                }
                                if stride == 1 {
                                    let start = (lo as isize + xoff) as usize;
                                    let ins = &in_row[start..start + (hi - lo)];
                                    for (acc, &v) in out_row[lo..hi].iter_mut().zip(ins) {
                                        *acc += wv * v;
                                    }
                                } else {
                                    for (ox, acc) in out_row[lo..hi].iter_mut().enumerate() {
                                        let ix = ((lo + ox) * stride) as isize + xoff;
                                        *acc += wv * in_row[ix as usize];
                                    }
                                }
                            }
                        }
                    }
                }
            }
        });
    Tensor::from_vec(&[oc, oh, ow], out)
}

/// Transposed convolution (scatter-add) with padding `(k - 1) / 2` and output
/// padding `stride - 1`, so output spatial size is exactly `stride * input`.
/// Kernel shape is `(in, out, k, k)`; this is the adjoint of [`conv2d`] with
/// the same kernel and stride.
pub fn transposed_conv2d(
    input: &Tensor,
    kernel: &Tensor,
    bias: Option<&[f32]>,
    stride: usize,
) -> Result<Tensor> {
    transposed_conv2d_raw(input, kernel.shape(), kernel.data(), bias, stride)
}

pub(crate) fn transposed_conv2d_raw(
    input: &Tensor,
    kshape: &[usize],
    wts: &[f32],
    bias: Option<&[f32]>,
    stride: usize,
) -> Result<Tensor> {
    let (c, h, w) = input.chw()?;
    let (ic, oc, k) = kernel_dims(kshape)?;
    if stride == 0 {
        return Err(Error::invalid("stride must be >= 1"));
    }
    if ic != c {
        return Err(Error::shape(format!(
            "kernel {kshape:?} does not fit {c} input channels"
        )));
    }
    check_bias(bias, oc)?;

    let pad = same_padding(k, 1) as isize;
    let (oh, ow) = (h * stride, w * stride);
    let src = input.data();
    let mut out = vec![0.0f32; oc * oh * ow];

    out.par_chunks_mut(oh * ow)
        .enumerate()
        .for_each(|(o, plane)| {
            plane.fill(bias.map_or(0.0, |b| b[o]));
            for i in 0..c {
                let inp = &src[i * h * w..][..h * w];
                let kw = &wts[(i * oc + o) * k * k..][..k * k];
                for ky in 0..k {
                    for iy in 0..h {
                        let oy = (iy * stride + ky) as isize - pad;
                        if oy < 0 || oy >= oh as isize {
                            continue;
                        }
                        let in_row = &inp[iy * w..][..w];
                        let out_row = &mut plane[oy as usize * ow..][..ow];
                        for kx in 0..k {
                            let wv = kw[ky * k + kx];
                            for (ix, &v) in in_row.iter().enumerate() {
                                let ox = (ix * stride + kx) as isize - pad;
                                if ox >= 0 && ox < ow as isize {
                                    out_row[ox as usize] += wv * v;
                                }
                            }
                        }
                    }
                }
            }
        });
    Tensor::from_vec(&[oc, oh, ow], out)
}

/// Per-channel affine normalization from stored statistics.
pub fn batchnorm_infer(
    input: &Tensor,
    gamma: &[f32],
    beta: &[f32],
    mean: &[f32],
    var: &[f32],
    eps: f32,
) -> Result<Tensor> {
    let mut out = input.clone();
    batchnorm_in_place(&mut out, gamma, beta, mean, var, eps)?;
    Ok(out)
}

pub(crate) fn batchnorm_in_place(
    x: &mut Tensor,
    gamma: &[f32],
    beta: &[f32],
    mean: &[f32],
    var: &[f32],
    eps: f32,
) -> Result<()> {
    let (c, h, w) = x.chw()?;
    if [gamma.len(), beta.len(), mean.len(), var.len()] != [c; 4] {
        return Err(Error::shape(format!(
            "batch norm parameters do not match {c} channels"
        )));
    }
    if let Some(v) = var.iter().find(|v| !(**v >= 0.0)) {
        return Err(Error::invalid(format!("negative running variance {v}")));
    }
    x.data_mut()
        .par_chunks_mut(h * w)
        .enumerate()
        .for_each(|(i, plane)| {
            let scale = gamma[i] / (var[i] + eps).sqrt();
            let shift = beta[i] - mean[i] * scale;
            for v in plane {
                *v = *v * scale + shift;
            }
        });
    Ok(())
}

#[inline]
pub fn sigmoid_scalar(x: f32) -> f32 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub fn swish_scalar(x: f32) -> f32 {
    x * sigmoid_scalar(x)
}

pub fn sigmoid(x: &Tensor) -> Tensor {
    x.map(sigmoid_scalar)
}

pub fn swish(x: &Tensor) -> Tensor {
    x.map(swish_scalar)
}

pub(crate) fn swish_in_place(x: &mut Tensor) {
    x.data_mut()
        .par_chunks_mut(1 << 14)
        .for_each(|chunk| chunk.iter_mut().for_each(|v| *v = swish_scalar(*v)));
}

pub(crate) fn add_in_place(x: &mut Tensor, other: &Tensor) -> Result<()> {
    if x.shape() != other.shape() {
        return Err(Error::shape(format!(
            "cannot add {:?} to {:?}",
            other.shape(),
            x.shape()
        )));
    }
    x.data_mut()
        .par_chunks_mut(1 << 14)
        .zip(other.data().par_chunks(1 << 14))
        .for_each(|(a, b)| a.iter_mut().zip(b).for_each(|(a, b)| *a += b));
    Ok(())
}

/// Mean of each channel plane, summed sequentially in `f64`.
pub fn global_average_pool(x: &Tensor) -> Result<Vec<f32>> {
    let (c, h, w) = x.chw()?;
    Ok((0..c)
        .map(|i| {
            let sum: f64 = x.plane(i).iter().map(|&v| v as f64).sum();
            (sum / (h * w) as f64) as f32
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
        Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0))
    }

    /// Direct definition: every output, every tap, bounds-checked.
    fn naive_conv(x: &Tensor, k: &Tensor, stride: usize, dil: usize, groups: usize) -> Tensor {
        let (c, h, w) = x.chw().unwrap();
        let (o, cpg, kk) = (k.shape()[0], k.shape()[1], k.shape()[2]);
        let pad = (dil * (kk - 1) / 2) as isize;
        let (oh, ow) = (h.div_ceil(stride), w.div_ceil(stride));
        let mut out = Tensor::zeros(&[o, oh, ow]);
        for oc in 0..o {
            let g = oc / (o / groups);
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = 0.0f64;
                    for il in 0..cpg {
                        let ic = g * (c / groups) + il;
                        for ky in 0..kk {
                            for kx in 0..kk {
                                let iy = (oy * stride + ky * dil) as isize - pad;
                                let ix = (ox * stride + kx * dil) as isize - pad;
                                if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                    continue;
                                }
                                let xv = x.data()[(ic * h + iy as usize) * w + ix as usize];
                                let kv = k.data()[((oc * cpg + il) * kk + ky) * kk + kx];
                                acc += xv as f64 * kv as f64;
                            }
                        }
                    }
                    out.data_mut()[(oc * oh + oy) * ow + ox] = acc as f32;
                }
            }
        }
        out
    }

    #[test]
    fn ones_neighbourhood_sums() {
        let x = Tensor::full(&[1, 3, 3], 1.0);
        let k = Tensor::full(&[1, 1, 3, 3], 1.0);
        let y = conv2d(&x, &k, None, Conv2dParams::default()).unwrap();
        assert_eq!(y.data(), &[4.0, 6.0, 4.0, 6.0, 9.0, 6.0, 4.0, 6.0, 4.0]);
    }

    #[test]
    fn dilated_taps() {
        let x = Tensor::full(&[1, 5, 5], 1.0);
        let k = Tensor::full(&[1, 1, 3, 3], 1.0);
        let y = conv2d(&x, &k, None, Conv2dParams::dilated(2)).unwrap();
        assert_eq!(y.shape(), &[1, 5, 5]);
        assert_eq!(y.data()[12], 9.0);
        assert_eq!(y.data()[0], 4.0);
    }

    #[test]
    fn matches_naive_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let cases = [
            (4, 8, 8, 6, 3, 1, 1, 1),
            (4, 8, 8, 6, 3, 2, 1, 1),
            (4, 9, 7, 4, 5, 1, 2, 2),
            (6, 11, 10, 6, 3, 2, 1, 6),
            (3, 16, 5, 2, 7, 1, 3, 1),
            (5, 7, 13, 3, 1, 2, 1, 1),
        ];
        for (c, h, w, o, k, s, d, g) in cases {
            let x = random(&[c, h, w], &mut rng);
            let kern = random(&[o, c / g, k, k], &mut rng);
            let got = conv2d(
                &x,
                &kern,
                None,
                Conv2dParams {
                    stride: s,
                    dilation: d,
                    groups: g,
                },
            )
            .unwrap();
            let want = naive_conv(&x, &kern, s, d, g);
            assert_eq!(got.shape(), want.shape());
            assert!(
                got.max_abs_diff(&want) < 1e-5,
                "case {:?}",
                (c, h, w, o, k, s, d, g)
            );
        }
    }

    #[test]
    fn bias_is_added() {
        let x = Tensor::zeros(&[2, 4, 4]);
        let k = Tensor::zeros(&[3, 2, 1, 1]);
        let y = conv2d(&x, &k, Some(&[1.0, 2.0, 3.0]), Conv2dParams::default()).unwrap();
        assert_eq!(y.plane(2), &[3.0; 16]);
    }

    #[test]
    fn shape_errors() {
        let x = Tensor::zeros(&[3, 4, 4]);
        let k = Tensor::zeros(&[2, 2, 3, 3]);
        assert!(conv2d(&x, &k, None, Conv2dParams::default()).is_err());
        let even = Tensor::zeros(&[2, 3, 2, 2]);
        assert!(conv2d(&x, &even, None, Conv2dParams::default()).is_err());
        let k = Tensor::zeros(&[2, 3, 3, 3]);
        assert!(conv2d(&x, &k, Some(&[0.0]), Conv2dParams::default()).is_err());
    }

    #[test]
    fn transposed_size_and_zero_kernel() {
        let x = Tensor::full(&[3, 1, 1], 2.0);
        let k = Tensor::zeros(&[3, 4, 3, 3]);
        let y = transposed_conv2d(&x, &k, None, 2).unwrap();
        assert_eq!(y.shape(), &[4, 2, 2]);
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn transposed_is_adjoint_of_strided_conv() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for (c, o, h, w) in [(3, 5, 8, 8), (2, 4, 7, 9), (4, 4, 16, 6)] {
            let kern = random(&[o, c, 3, 3], &mut rng);
            let x = random(&[c, h, w], &mut rng);
            let y = random(&[o, h.div_ceil(2), w.div_ceil(2)], &mut rng);
            let ax = conv2d(&x, &kern, None, Conv2dParams::stride(2)).unwrap();
            let aty = transposed_conv2d(&y, &kern, None, 2).unwrap();
            // Odd sizes: the transposed output is one row/column larger.
            let (_, th, tw) = aty.chw().unwrap();
            let mut lhs = 0.0;
            let mut rhs = 0.0;
            for (a, b) in ax.data().iter().zip(y.data()) {
                lhs += *a as f64 * *b as f64;
            }
            for i in 0..c {
                for yy in 0..h {
                    for xx in 0..w {
                        rhs += x.data()[(i * h + yy) * w + xx] as f64
                            * aty.data()[(i * th + yy) * tw + xx] as f64;
                    }
                }
            }
            assert!((lhs - rhs).abs() < 1e-4, "{lhs} vs {rhs}");
        }
    }

    #[test]
    fn batchnorm_formula() {
        let x = Tensor::from_vec(&[2, 1, 2], vec![1.0, -2.0, 3.0, 0.5]).unwrap();
        let y = batchnorm_infer(
            &x,
            &[1.0, 1.0],
            &[0.0, 0.0],
            &[0.0, 0.0],
            &[1.0, 1.0],
            BN_EPS,
        )
        .unwrap();
        let s = 1.0 / 1.001f64.sqrt();
        for (a, b) in y.data().iter().zip(x.data()) {
            assert!((*a as f64 - *b as f64 * s).abs() < 1e-6);
        }
        let z = batchnorm_infer(
            &x,
            &[0.0, 0.0],
            &[0.3, -1.0],
            &[5.0, 2.0],
            &[4.0, 9.0],
            BN_EPS,
        )
        .unwrap();
        assert_eq!(z.data(), &[0.3, 0.3, -1.0, -1.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = random(&[3, 4, 4], &mut rng);
        let p: Vec<[f32; 4]> = (0..3)
            .map(|_| {
                [
                    rng.random_range(-2.0..2.0),
                    rng.random_range(-2.0..2.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(0.1..3.0),
                ]
            })
            .collect();
        let col = |j: usize| p.iter().map(|r| r[j]).collect::<Vec<_>>();
        let y = batchnorm_infer(&x, &col(0), &col(1), &col(2), &col(3), BN_EPS).unwrap();
        for (i, (&got, &xv)) in y.data().iter().zip(x.data()).enumerate() {
            let [g, b, m, v] = p[i / 16].map(f64::from);
            let want = g * (xv as f64 - m) / (v + 1e-3).sqrt() + b;
            assert!((got as f64 - want).abs() < 1e-5);
        }
        assert!(batchnorm_infer(&x, &col(0), &col(1), &col(2), &[1.0, -1.0, 1.0], BN_EPS).is_err());
    }

    #[test]
    fn activations() {
        assert_eq!(swish_scalar(0.0), 0.0);
        assert_eq!(sigmoid_scalar(0.0), 0.5);
        assert!((swish_scalar(1.0) - 0.731_059).abs() < 1e-6);
        for x in [-80.0f32, -30.0, 30.0, 80.0] {
            assert!(sigmoid_scalar(x).is_finite() && swish_scalar(x).is_finite());
        }
        assert_eq!(sigmoid_scalar(80.0), 1.0);
        assert!(sigmoid_scalar(-80.0) > 0.0);
    }
}
