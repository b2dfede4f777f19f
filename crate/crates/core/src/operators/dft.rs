//! Unitary 2-D DFT on real images, direct evaluation.
//!
//! Sizes here stay small enough that the O(hw(h+w)) row-column transform is
//! plenty; twiddles are tabulated per call. Forward and inverse share the
//! tables, which keeps the adjoint identity tight.

use std::f64::consts::TAU;

struct Twiddles {
    cos: Vec<f64>,
    sin: Vec<f64>,
    n: usize,
}

impl Twiddles {
    fn new(n: usize) -> Self {
        let mut cos = Vec::with_capacity(n);
        let mut sin = Vec::with_capacity(n);
        for k in 0..n {
            let angle = TAU * k as f64 / n as f64;
            cos.push(angle.cos());
            sin.push(angle.sin());
        }
        Twiddles { cos, sin, n }
    }

    #[inline]
    fn at(&self, idx: usize) -> (f64, f64) {
        let i = idx % self.n;
        (self.cos[i], self.sin[i])
    }
}

/// 1-D transform of each length-`n` row in `(re, im)`, laid out as `rows`
/// consecutive segments. `sign` is -1 for the forward kernel, +1 for the
/// inverse kernel. Unitary scaling 1/sqrt(n).
fn transform_rows(re: &mut [f64], im: &mut [f64], rows: usize, n: usize, sign: f64) {
    let tw = Twiddles::new(n);
    let scale = 1.0 / (n as f64).sqrt();
    let mut out_re = vec![0.0; n];
    let mut out_im = vec![0.0; n];
    for r in 0..rows {
        let off = r * n;
        for k in 0..n {
            let mut acc_re = 0.0;
            let mut acc_im = 0.0;
            for j in 0..n {
                let (c, s) = tw.at(k * j);
                let s = sign * s;
                let (xr, xi) = (re[off + j], im[off + j]);
                acc_re += xr * c - xi * s;
                acc_im += xr * s + xi * c;
            }
            out_re[k] = acc_re * scale;
            out_im[k] = acc_im * scale;
        }
        re[off..off + n].copy_from_slice(&out_re);
        im[off..off + n].copy_from_slice(&out_im);
    }
}

fn transpose(buf: &mut Vec<f64>, h: usize, w: usize) {
    let mut out = vec![0.0; buf.len()];
    for i in 0..h {
        for j in 0..w {
            out[j * h + i] = buf[i * w + j];
        }
    }
    *buf = std::mem::take(&mut out);
}

fn dft2_complex(re: &mut Vec<f64>, im: &mut Vec<f64>, h: usize, w: usize, sign: f64) {
    transform_rows(re, im, h, w, sign);
    transpose(re, h, w);
    transpose(im, h, w);
    transform_rows(re, im, w, h, sign);
    transpose(re, w, h);
    transpose(im, w, h);
}

/// Unitary forward 2-D DFT of a real image; returns (re, im) row-major.
pub(crate) fn dft2(x: &[f64], h: usize, w: usize) -> (Vec<f64>, Vec<f64>) {
    debug_assert_eq!(x.len(), h * w);
    let mut re = x.to_vec();
    let mut im = vec![0.0; h * w];
    dft2_complex(&mut re, &mut im, h, w, -1.0);
    (re, im)
}

/// Unitary inverse 2-D DFT; returns the real part of the result.
pub(crate) fn idft2_real(re: &[f64], im: &[f64], h: usize, w: usize) -> Vec<f64> {
    debug_assert_eq!(re.len(), h * w);
    debug_assert_eq!(im.len(), h * w);
    let mut wre = re.to_vec();
    let mut wim = im.to_vec();
    dft2_complex(&mut wre, &mut wim, h, w, 1.0);
    wre
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;

    #[test]
    fn forward_inverse_round_trip() {
        let mut rng = RngStream::new(50);
        let (h, w) = (6, 10);
        let x: Vec<f64> = (0..h * w).map(|_| rng.next_gaussian()).collect();
        let (re, im) = dft2(&x, h, w);
        let back = idft2_real(&re, &im, h, w);
        for (a, b) in x.iter().zip(&back) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn parseval_holds_for_unitary_normalization() {
        let mut rng = RngStream::new(51);
        let (h, w) = (8, 8);
        let x: Vec<f64> = (0..h * w).map(|_| rng.next_gaussian()).collect();
        let (re, im) = dft2(&x, h, w);
        let spatial: f64 = x.iter().map(|v| v * v).sum();
        let spectral: f64 = re.iter().zip(&im).map(|(r, i)| r * r + i * i).sum();
        assert!((spatial - spectral).abs() <= 1e-12 * spatial);
    }

    #[test]
    fn dc_coefficient_of_constant_image() {
        let (h, w) = (4, 9);
        let c = 0.37;
        let x = vec![c; h * w];
        let (re, im) = dft2(&x, h, w);
        assert!((re[0] - c * ((h * w) as f64).sqrt()).abs() < 1e-12);
        for (k, (&r, &i)) in re.iter().zip(&im).enumerate() {
            if k != 0 {
                assert!(r.abs() < 1e-12 && i.abs() < 1e-12);
            }
        }
    }
}
