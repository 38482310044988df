//! Grouped 2-D cross-correlation.
//!
//! Input channels are split into `groups` contiguous blocks; output channel `o`
//! belongs to group `o / (c_out / groups)` and only sees that group's inputs.
//! `groups == 1` is a regular convolution, `groups == c_in` is depthwise.

use rayon::prelude::*;

use super::GradientRecord;
use crate::error::{config, invalid, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d<T> {
    /// `[c_out, c_in / groups, k, k]`
    pub weight: Tensor<T>,
    /// `[c_out]`
    pub bias: Tensor<T>,
    pub groups: usize,
    pub stride: usize,
    pub padding: usize,
}

/// Sizes of a convolution applied to a particular input.
#[derive(Debug, Clone, Copy)]
struct Geometry {
    n: usize,
    c_in: usize,
    h: usize,
    w: usize,
    c_out: usize,
    k: usize,
    oh: usize,
    ow: usize,
    cin_g: usize,
    cout_g: usize,
    stride: usize,
    pad: usize,
}

impl<T: Scalar> Conv2d<T> {
    pub fn new(weight: Tensor<T>, bias: Tensor<T>, groups: usize, stride: usize, padding: usize) -> Result<Self> {
        let conv = Self {
            weight,
            bias,
            groups,
            stride,
            padding,
        };
        conv.validate()?;
        Ok(conv)
    }

    pub fn zeros(c_in: usize, c_out: usize, kernel: usize, groups: usize, stride: usize, padding: usize) -> Result<Self> {
        if groups == 0 || c_in % groups != 0 || c_out % groups != 0 {
            return Err(config(format!(
                "groups {groups} must divide c_in {c_in} and c_out {c_out}"
            )));
        }
        Self::new(
            Tensor::zeros(&[c_out, c_in / groups, kernel, kernel]),
            Tensor::zeros(&[c_out]),
            groups,
            stride,
            padding,
        )
    }

    pub fn c_out(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn c_in(&self) -> usize {
        self.weight.shape()[1] * self.groups
    }

    pub fn kernel(&self) -> usize {
        self.weight.shape()[2]
    }

    pub fn validate(&self) -> Result<()> {
        let ws = self.weight.shape();
        if ws.len() != 4 || ws[2] != ws[3] {
            return Err(config(format!("conv weight must be [c_out, c_in/g, k, k], got {ws:?}")));
        }
        if self.groups == 0 || self.stride == 0 {
            return Err(config("groups and stride must be positive"));
        }
        if ws[0] % self.groups != 0 {
            return Err(config(format!(
                "c_out {} is not divisible by groups {}",
                ws[0], self.groups
            )));
        }
        if self.bias.shape() != [ws[0]] {
            return Err(config(format!(
                "conv bias must be [{}], got {:?}",
                ws[0],
                self.bias.shape()
            )));
        }
        Ok(())
    }

    /// Output spatial size for an `h x w` input.
    pub fn output_hw(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        let k = self.kernel();
        let (hp, wp) = (h + 2 * self.padding, w + 2 * self.padding);
        if hp < k || wp < k {
            return Err(invalid(format!(
                "kernel {k} does not fit padded input {hp}x{wp}"
            )));
        }
        Ok(((hp - k) / self.stride + 1, (wp - k) / self.stride + 1))
    }

    fn geometry(&self, x: &Tensor<T>) -> Result<Geometry> {
        self.validate()?;
        let &[n, c_in, h, w] = x.shape() else {
            return Err(invalid(format!("conv input must be [N, C, H, W], got {:?}", x.shape())));
        };
        if c_in % self.groups != 0 {
            return Err(config(format!(
                "input channels {c_in} are not divisible by groups {}",
                self.groups
            )));
        }
        if c_in != self.c_in() {
            return Err(invalid(format!(
                "conv expects {} input channels, got {c_in}",
                self.c_in()
            )));
        }
        let (oh, ow) = self.output_hw(h, w)?;
        let c_out = self.c_out();
        Ok(Geometry {
            n,
            c_in,
            h,
            w,
            c_out,
            k: self.kernel(),
            oh,
            ow,
            cin_g: c_in / self.groups,
            cout_g: c_out / self.groups,
            stride: self.stride,
            pad: self.padding,
        })
    }
}

impl Geometry {
    /// Output rows `oy` for which input row `oy * stride + ky - pad` exists.
    fn valid_out(&self, kk: usize, in_len: usize, out_len: usize) -> (usize, usize) {
        // ix = ox * s + kk - p must satisfy 0 <= ix < in_len
        let lo = if kk >= self.pad {
            0
        } else {
            (self.pad - kk).div_ceil(self.stride)
        };
        let hi = if in_len + self.pad <= kk {
            0
        } else {
            ((in_len - 1 + self.pad - kk) / self.stride + 1).min(out_len)
        };
        (lo, hi.max(lo))
    }
}

/// Forward pass. Returns `[N, c_out, H', W']`.
pub fn conv2d_forward<T: Scalar>(x: &Tensor<T>, p: &Conv2d<T>) -> Result<Tensor<T>> {
    forward_impl(x, p).map(|(y, _)| y)
}

/// Forward pass that also reports the number of multiply-accumulates the loop
/// nest performs, counting taps that land in zero padding.
pub fn conv2d_forward_counting<T: Scalar>(x: &Tensor<T>, p: &Conv2d<T>) -> Result<(Tensor<T>, u64)> {
    forward_impl(x, p)
}

fn forward_impl<T: Scalar>(x: &Tensor<T>, p: &Conv2d<T>) -> Result<(Tensor<T>, u64)> {
    let g = p.geometry(x)?;
    let mut out = Tensor::zeros(&[g.n, g.c_out, g.oh, g.ow]);
    let plane = g.oh * g.ow;
    let xd = x.data();
    let wd = p.weight.data();
    let bd = p.bias.data();
    let xcol: Vec<(usize, usize)> = (0..g.k).map(|kx| g.valid_out(kx, g.w, g.ow)).collect();
    let xrow: Vec<(usize, usize)> = (0..g.k).map(|ky| g.valid_out(ky, g.h, g.oh)).collect();

    let macs: u64 = out
        .data_mut()
        .par_chunks_mut(plane)
        .enumerate()
        .map(|(idx, dst)| {
            let (n, o) = (idx / g.c_out, idx % g.c_out);
            let grp = o / g.cout_g;
            dst.fill(bd[o]);
            let mut executed = 0u64;
            let mut padded = 0u64;
            for ci in 0..g.cin_g {
                let c = grp * g.cin_g + ci;
                let src = &xd[(n * g.c_in + c) * g.h * g.w..][..g.h * g.w];
                for ky in 0..g.k {
                    let (oy_lo, oy_hi) = xrow[ky];
                    for kx in 0..g.k {
                        let wv = wd[((o * g.cin_g + ci) * g.k + ky) * g.k + kx];
                        let (ox_lo, ox_hi) = xcol[kx];
                        padded += ((g.oh - (oy_hi - oy_lo)) * g.ow) as u64;
                        for oy in oy_lo..oy_hi {
                            let iy = oy * g.stride + ky - g.pad;
                            let srow = &src[iy * g.w..][..g.w];
                            let drow = &mut dst[oy * g.ow..][..g.ow];
                            if g.stride == 1 {
                                let off = ox_lo + kx - g.pad;
                                let len = ox_hi - ox_lo;
                                for (d, &s) in drow[ox_lo..ox_hi].iter_mut().zip(&srow[off..off + len]) {
                                    *d += wv * s;
                                }
                            } else {
                                for ox in ox_lo..ox_hi {
                                    drow[ox] += wv * srow[ox * g.stride + kx - g.pad];
                                }
                            }
                            executed += (ox_hi - ox_lo) as u64;
                            padded += (g.ow - (ox_hi - ox_lo)) as u64;
                        }
                    }
                }
            }
            // taps landing in zero padding are skipped but still count as MACs
            executed + padded
        })
        .sum();
    Ok((out, macs))
}

/// Backward pass: gradients for `[weight, bias]` and the input.
pub fn conv2d_backward<T: Scalar>(x: &Tensor<T>, p: &Conv2d<T>, upstream: &Tensor<T>) -> Result<GradientRecord<T>> {
    let g = p.geometry(x)?;
    upstream.expect_shape(&[g.n, g.c_out, g.oh, g.ow])?;
    let plane = g.oh * g.ow;
    let in_plane = g.h * g.w;
    let xd = x.data();
    let dyd = upstream.data();
    let wd = p.weight.data();
    let xcol: Vec<(usize, usize)> = (0..g.k).map(|kx| g.valid_out(kx, g.w, g.ow)).collect();
    let xrow: Vec<(usize, usize)> = (0..g.k).map(|ky| g.valid_out(ky, g.h, g.oh)).collect();

    // weight gradient: one task per output channel, fixed summation order
    let mut dw = Tensor::zeros(p.weight.shape());
    let per_o = g.cin_g * g.k * g.k;
    dw.data_mut()
        .par_chunks_mut(per_o)
        .enumerate()
        .for_each(|(o, dst)| {
            let grp = o / g.cout_g;
            for n in 0..g.n {
                let dy = &dyd[(n * g.c_out + o) * plane..][..plane];
                for ci in 0..g.cin_g {
                    let c = grp * g.cin_g + ci;
                    let src = &xd[(n * g.c_in + c) * in_plane..][..in_plane];
                    for ky in 0..g.k {
                        let (oy_lo, oy_hi) = xrow[ky];
                        for kx in 0..g.k {
                            let (ox_lo, ox_hi) = xcol[kx];
                            let mut acc = T::zero();
                            for oy in oy_lo..oy_hi {
                                let iy = oy * g.stride + ky - g.pad;
                                let drow = &dy[oy * g.ow..][..g.ow];
                                let srow = &src[iy * g.w..][..g.w];
                                for ox in ox_lo..ox_hi {
                                    acc += drow[ox] * srow[ox * g.stride + kx - g.pad];
                                }
                            }
                            dst[(ci * g.k + ky) * g.k + kx] += acc;
                        }
                    }
                }
            }
        });

    let mut db = Tensor::zeros(&[g.c_out]);
    db.data_mut().par_iter_mut().enumerate().for_each(|(o, d)| {
        let mut acc = T::zero();
        for n in 0..g.n {
            acc += dyd[(n * g.c_out + o) * plane..][..plane].iter().copied().sum::<T>();
        }
        *d = acc;
    });

    // input gradient: one task per (n, c) input plane
    let mut dx = Tensor::zeros(x.shape());
    dx.data_mut()
        .par_chunks_mut(in_plane)
        .enumerate()
        .for_each(|(idx, dst)| {
            let (n, c) = (idx / g.c_in, idx % g.c_in);
            let grp = c / g.cin_g;
            let ci = c % g.cin_g;
            for o in grp * g.cout_g..(grp + 1) * g.cout_g {
                let dy = &dyd[(n * g.c_out + o) * plane..][..plane];
                for ky in 0..g.k {
                    let (oy_lo, oy_hi) = xrow[ky];
                    for kx in 0..g.k {
                        let wv = wd[((o * g.cin_g + ci) * g.k + ky) * g.k + kx];
                        let (ox_lo, ox_hi) = xcol[kx];
                        for oy in oy_lo..oy_hi {
                            let iy = oy * g.stride + ky - g.pad;
                            let drow = &dy[oy * g.ow..][..g.ow];
                            let xrow_dst = &mut dst[iy * g.w..][..g.w];
                            for ox in ox_lo..ox_hi {
                                xrow_dst[ox * g.stride + kx - g.pad] += wv * drow[ox];
                            }
                        }
                    }
                }
            }
        });

    Ok(GradientRecord {
        params: vec![dw, db],
        input: dx,
    })
}
