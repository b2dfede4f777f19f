//! Matrix-free linear measurement operators with exact adjoints, plus
//! pseudoinverse application and row-/null-space projections via conjugate
//! gradients on the normal system `A Aᵀ s = r`.

mod conv;
mod dft;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::tensor::{dot, norm2, Tensor};

/// Guard against accidentally materializing a huge dense matrix.
pub const MAX_DENSE_ENTRIES: usize = 1 << 24;

/// Conjugate-gradient stopping rule: relative residual below `tol`, at most
/// `max_iter` iterations.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CgConfig {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for CgConfig {
    fn default() -> Self {
        CgConfig {
            tol: 1e-10,
            max_iter: 2000,
        }
    }
}

impl CgConfig {
    fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "cg tolerance must be positive, got {}",
                self.tol
            )));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidArgument("cg max_iter must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
enum OperatorKind {
    DenseGaussian {
        matrix: Vec<f64>,
    },
    SubsampledFourier {
        h: usize,
        w: usize,
        /// Row-major flat indices of sampled frequencies.
        kept: Vec<usize>,
    },
    BlurDecimate {
        h: usize,
        w: usize,
        scale: usize,
        kernel: Tensor,
    },
    UniformBlur {
        h: usize,
        w: usize,
        k: usize,
    },
    Sampling {
        indices: Vec<usize>,
    },
    Identity,
}

/// A linear map `R^n -> R^m` with an exact adjoint.
#[derive(Debug, Clone)]
pub struct LinearOperator {
    m: usize,
    n: usize,
    kind: OperatorKind,
}

impl LinearOperator {
    pub fn identity(n: usize) -> Self {
        LinearOperator {
            m: n,
            n,
            kind: OperatorKind::Identity,
        }
    }

    /// Dense matrix with i.i.d. N(0, 1/m) entries, stored explicitly.
    pub fn gaussian(rng: &mut RngStream, m: usize, n: usize) -> Result<Self> {
        if m == 0 || n == 0 {
            return Err(Error::InvalidArgument("gaussian operator needs m, n >= 1".into()));
        }
        if m.saturating_mul(n) > MAX_DENSE_ENTRIES {
            return Err(Error::InvalidArgument(format!(
                "dense {m}x{n} gaussian operator exceeds the {MAX_DENSE_ENTRIES}-entry budget"
            )));
        }
        let std = (1.0 / m as f64).sqrt();
        let matrix = rng.sample_gaussian(&[m, n], 0.0, std)?.into_data();
        Ok(LinearOperator {
            m,
            n,
            kind: OperatorKind::DenseGaussian { matrix },
        })
    }

    /// Subsampled unitary 2-D DFT of a real h x w image. Measurements stack
    /// the real parts of the kept coefficients, then the imaginary parts, so
    /// m = 2p for p kept frequencies.
    pub fn subsampled_fourier(mask: &[bool], h: usize, w: usize) -> Result<Self> {
        if mask.len() != h * w {
            return Err(Error::ShapeMismatch {
                context: "subsampled_fourier mask",
                expected: vec![h * w],
                got: vec![mask.len()],
            });
        }
        let kept: Vec<usize> = mask
            .iter()
            .enumerate()
            .filter_map(|(i, &b)| b.then_some(i))
            .collect();
        if kept.is_empty() {
            return Err(Error::InvalidArgument("fourier mask keeps no frequencies".into()));
        }
        Ok(LinearOperator {
            m: 2 * kept.len(),
            n: h * w,
            kind: OperatorKind::SubsampledFourier { h, w, kept },
        })
    }

    /// Correlation with a normalized anti-aliasing kernel followed by keeping
    /// every `scale`-th row and column.
    pub fn blur_decimate(kernel: &Tensor, scale: usize, h: usize, w: usize) -> Result<Self> {
        if kernel.shape().len() != 2 || kernel.shape()[0] % 2 == 0 || kernel.shape()[1] % 2 == 0 {
            return Err(Error::InvalidArgument(format!(
                "blur kernel must be 2-D with odd dims, got {:?}",
                kernel.shape()
            )));
        }
        let sum: f64 = kernel.data().iter().sum();
        if (sum - 1.0).abs() > 1e-8 {
            return Err(Error::InvalidArgument(format!(
                "blur kernel entries must sum to 1, got {sum}"
            )));
        }
        if scale == 0 || h % scale != 0 || w % scale != 0 {
            return Err(Error::InvalidArgument(format!(
                "scale {scale} must divide image dims {h}x{w}"
            )));
        }
        Ok(LinearOperator {
            m: (h / scale) * (w / scale),
            n: h * w,
            kind: OperatorKind::BlurDecimate {
                h,
                w,
                scale,
                kernel: kernel.clone(),
            },
        })
    }

    /// k x k uniform blur, reflective boundary, m = n.
    pub fn uniform_blur(k: usize, h: usize, w: usize) -> Result<Self> {
        if k % 2 == 0 || k == 0 {
            return Err(Error::InvalidArgument(format!(
                "uniform blur size must be odd, got {k}"
            )));
        }
        Ok(LinearOperator {
            m: h * w,
            n: h * w,
            kind: OperatorKind::UniformBlur { h, w, k },
        })
    }

    /// Row selection; the adjoint scatters back with zeros elsewhere.
    pub fn sampling(indices: Vec<usize>, n: usize) -> Result<Self> {
        let mut seen = vec![false; n];
        for &i in &indices {
            if i >= n {
                return Err(Error::InvalidArgument(format!(
                    "sampling index {i} out of range for n = {n}"
                )));
            }
            if seen[i] {
                return Err(Error::InvalidArgument(format!("duplicate sampling index {i}")));
            }
            seen[i] = true;
        }
        if indices.is_empty() {
            return Err(Error::InvalidArgument("sampling needs at least one index".into()));
        }
        Ok(LinearOperator {
            m: indices.len(),
            n,
            kind: OperatorKind::Sampling { indices },
        })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn kind_name(&self) -> &'static str {
        match &self.kind {
            OperatorKind::DenseGaussian { .. } => "dense_gaussian",
            OperatorKind::SubsampledFourier { .. } => "subsampled_fourier",
            OperatorKind::BlurDecimate { .. } => "blur_decimate",
            OperatorKind::UniformBlur { .. } => "uniform_blur",
            OperatorKind::Sampling { .. } => "sampling_mask",
            OperatorKind::Identity => "identity",
        }
    }

    fn check_input(&self, x: &Tensor, expected: usize, context: &'static str) -> Result<()> {
        if x.len() != expected {
            return Err(Error::ShapeMismatch {
                context,
                expected: vec![expected],
                got: x.shape().to_vec(),
            });
        }
        Ok(())
    }

    /// Forward map `R^n -> R^m`. Accepts any tensor with n entries.
    pub fn apply(&self, x: &Tensor) -> Result<Tensor> {
        self.check_input(x, self.n, "operator apply")?;
        let x = x.data();
        let out = match &self.kind {
            OperatorKind::Identity => x.to_vec(),
            OperatorKind::DenseGaussian { matrix } => {
                let mut y = vec![0.0; self.m];
                for (r, yr) in y.iter_mut().enumerate() {
                    let row = &matrix[r * self.n..(r + 1) * self.n];
                    let mut acc = 0.0;
                    for (a, b) in row.iter().zip(x) {
                        acc += a * b;
                    }
                    *yr = acc;
                }
                y
            }
            OperatorKind::SubsampledFourier { h, w, kept } => {
                let (re, im) = dft::dft2(x, *h, *w);
                let p = kept.len();
                let mut y = vec![0.0; 2 * p];
                for (i, &idx) in kept.iter().enumerate() {
                    y[i] = re[idx];
                    y[p + i] = im[idx];
                }
                y
            }
            OperatorKind::BlurDecimate { h, w, scale, kernel } => {
                let kh = kernel.shape()[0];
                let kw = kernel.shape()[1];
                let blurred = conv::correlate2_reflect(x, *h, *w, kernel.data(), kh, kw);
                let (oh, ow) = (h / scale, w / scale);
                let mut y = vec![0.0; oh * ow];
                for i in 0..oh {
                    for j in 0..ow {
                        y[i * ow + j] = blurred[(i * scale) * w + j * scale];
                    }
                }
                y
            }
            OperatorKind::UniformBlur { h, w, k } => {
                let kernel = vec![1.0 / ((k * k) as f64); k * k];
                conv::correlate2_reflect(x, *h, *w, &kernel, *k, *k)
            }
            OperatorKind::Sampling { indices } => indices.iter().map(|&i| x[i]).collect(),
        };
        Tensor::new(vec![self.m], out)
    }

    /// Adjoint map `R^m -> R^n`.
    pub fn apply_adjoint(&self, u: &Tensor) -> Result<Tensor> {
        self.check_input(u, self.m, "operator apply_adjoint")?;
        let u = u.data();
        let out = match &self.kind {
            OperatorKind::Identity => u.to_vec(),
            OperatorKind::DenseGaussian { matrix } => {
                let mut y = vec![0.0; self.n];
                for r in 0..self.m {
                    let row = &matrix[r * self.n..(r + 1) * self.n];
                    let ur = u[r];
                    for (o, a) in y.iter_mut().zip(row) {
                        *o += ur * a;
                    }
                }
                y
            }
            OperatorKind::SubsampledFourier { h, w, kept } => {
                let p = kept.len();
                let mut re = vec![0.0; h * w];
                let mut im = vec![0.0; h * w];
                for (i, &idx) in kept.iter().enumerate() {
                    re[idx] = u[i];
                    im[idx] = u[p + i];
                }
                dft::idft2_real(&re, &im, *h, *w)
            }
            OperatorKind::BlurDecimate { h, w, scale, kernel } => {
                let (oh, ow) = (h / scale, w / scale);
                let mut upsampled = vec![0.0; h * w];
                for i in 0..oh {
                    for j in 0..ow {
                        upsampled[(i * scale) * w + j * scale] = u[i * ow + j];
                    }
                }
                let kh = kernel.shape()[0];
                let kw = kernel.shape()[1];
                conv::correlate2_reflect_adjoint(&upsampled, *h, *w, kernel.data(), kh, kw)
            }
            OperatorKind::UniformBlur { h, w, k } => {
                let kernel = vec![1.0 / ((k * k) as f64); k * k];
                conv::correlate2_reflect_adjoint(u, *h, *w, &kernel, *k, *k)
            }
            OperatorKind::Sampling { indices } => {
                let mut y = vec![0.0; self.n];
                for (row, &i) in indices.iter().enumerate() {
                    y[i] = u[row];
                }
                y
            }
        };
        Tensor::new(vec![self.n], out)
    }

    /// Solve `(A Aᵀ) s = r` by conjugate gradients.
    fn solve_normal(&self, r: &Tensor, cfg: &CgConfig) -> Result<Tensor> {
        cfg.validate()?;
        self.check_input(r, self.m, "pseudoinverse rhs")?;
        let b_norm = norm2(r);
        if b_norm == 0.0 {
            return Ok(Tensor::zeros(&[self.m]));
        }
        let mut s = Tensor::zeros(&[self.m]);
        let mut resid = r.clone();
        let mut p = resid.clone();
        let mut rr = dot(&resid, &resid)?;
        for _ in 0..cfg.max_iter {
            let ap = self.apply(&self.apply_adjoint(&p)?)?;
            let denom = dot(&p, &ap)?;
            if denom <= 0.0 || !denom.is_finite() {
                // Stagnation: the system is numerically rank-deficient.
                return Err(Error::CgDidNotConverge {
                    achieved: rr.sqrt() / b_norm,
                    tol: cfg.tol,
                    iterations: cfg.max_iter,
                });
            }
            let alpha = rr / denom;
            s = crate::tensor::axpy(alpha, &p, &s)?;
            resid = crate::tensor::axpy(-alpha, &ap, &resid)?;
            let rr_new = dot(&resid, &resid)?;
            if rr_new.sqrt() <= cfg.tol * b_norm {
                return Ok(s);
            }
            let beta = rr_new / rr;
            p = crate::tensor::axpy(beta, &p, &resid)?;
            rr = rr_new;
        }
        Err(Error::CgDidNotConverge {
            achieved: rr.sqrt() / b_norm,
            tol: cfg.tol,
            iterations: cfg.max_iter,
        })
    }

    /// `A† r = Aᵀ (A Aᵀ)⁻¹ r`, matrix-free.
    pub fn pseudoinverse_apply(&self, r: &Tensor, cfg: &CgConfig) -> Result<Tensor> {
        let s = self.solve_normal(r, cfg)?;
        self.apply_adjoint(&s)
    }

    /// Orthogonal projection onto the row space: `P_A v = A† A v`.
    pub fn project_row_space(&self, v: &Tensor, cfg: &CgConfig) -> Result<Tensor> {
        self.check_input(v, self.n, "project_row_space")?;
        let av = self.apply(v)?;
        self.pseudoinverse_apply(&av, cfg)
    }

    /// Orthogonal projection onto the null space: `Q_A v = v - P_A v`.
    pub fn project_null_space(&self, v: &Tensor, cfg: &CgConfig) -> Result<Tensor> {
        let p = self.project_row_space(v, cfg)?;
        v.flattened().sub(&p)
    }
}

/// `y = A x + e` with `e ~ N(0, noise_std² I_m)`. A noise level quoted as
/// "10/255" on [0,1]-scaled images maps directly to `noise_std = 10/255`.
pub fn synthesize_observation(
    op: &LinearOperator,
    x: &Tensor,
    noise_std: f64,
    rng: &mut RngStream,
) -> Result<Tensor> {
    if !(noise_std >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "noise_std must be >= 0, got {noise_std}"
        )));
    }
    let y = op.apply(x)?;
    if noise_std == 0.0 {
        return Ok(y);
    }
    let e = rng.sample_gaussian(&[op.m()], 0.0, noise_std)?;
    y.add(&e)
}

/// Separable bicubic anti-aliasing kernel (Catmull-Rom, a = -0.5) for integer
/// downscale factor `scale`, normalized to sum 1. Size (4*scale-1)².
pub fn bicubic_kernel(scale: usize) -> Tensor {
    assert!(scale >= 1);
    let cubic = |d: f64| -> f64 {
        let d = d.abs();
        if d <= 1.0 {
            1.5 * d * d * d - 2.5 * d * d + 1.0
        } else if d < 2.0 {
            -0.5 * d * d * d + 2.5 * d * d - 4.0 * d + 2.0
        } else {
            0.0
        }
    };
    let half = 2 * scale as isize - 1;
    let taps: Vec<f64> = (-half..=half)
        .map(|t| cubic(t as f64 / scale as f64))
        .collect();
    let sum: f64 = taps.iter().sum();
    let taps: Vec<f64> = taps.iter().map(|t| t / sum).collect();
    let k = taps.len();
    let mut data = Vec::with_capacity(k * k);
    for a in &taps {
        for b in &taps {
            data.push(a * b);
        }
    }
    Tensor::new(vec![k, k], data).expect("kernel shape")
}

/// Variable-density frequency mask: the lowest frequencies (by wraparound
/// distance from DC) fill half the budget, the rest is uniform random. A
/// stand-in where no measured mask file is available.
pub fn radial_random_mask(rng: &mut RngStream, h: usize, w: usize, fraction: f64) -> Vec<bool> {
    assert!(h > 0 && w > 0);
    let total = h * w;
    let target = ((fraction * total as f64).round() as usize).clamp(1, total);
    let wrap = |i: usize, n: usize| -> usize { i.min(n - i) };
    let mut order: Vec<usize> = (0..total).collect();
    order.sort_by_key(|&idx| {
        let (i, j) = (idx / w, idx % w);
        let (di, dj) = (wrap(i, h), wrap(j, w));
        (di * di + dj * dj, idx)
    });
    let mut mask = vec![false; total];
    let low = target / 2;
    for &idx in order.iter().take(low) {
        mask[idx] = true;
    }
    let mut remaining: Vec<usize> = order[low..].to_vec();
    let mut picked = low;
    while picked < target && !remaining.is_empty() {
        let at = (rng.next_u64() % remaining.len() as u64) as usize;
        mask[remaining.swap_remove(at)] = true;
        picked += 1;
    }
    mask
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;
    use crate::tensor::{dot, norm2};
    use proptest::prelude::*;

    fn adjoint_gap(op: &LinearOperator, x: &Tensor, u: &Tensor) -> (f64, f64) {
        let ax = op.apply(x).unwrap();
        let atu = op.apply_adjoint(u).unwrap();
        let lhs = dot(&ax, u).unwrap();
        let rhs = dot(&x.flattened(), &atu).unwrap();
        let bound = norm2(&ax) * norm2(u) + norm2(&x.flattened()) * norm2(&atu);
        ((lhs - rhs).abs(), bound)
    }

    fn assert_adjoint_consistent(op: &LinearOperator, rng: &mut RngStream, trials: usize) {
        for _ in 0..trials {
            let x = rng.sample_gaussian(&[op.n()], 0.0, 1.0).unwrap();
            let u = rng.sample_gaussian(&[op.m()], 0.0, 1.0).unwrap();
            let (gap, bound) = adjoint_gap(op, &x, &u);
            assert!(gap <= 1e-10 * bound, "gap {gap} bound {bound}");
        }
    }

    #[test]
    fn gaussian_budget_and_dims_checked() {
        let mut rng = RngStream::new(70);
        assert!(LinearOperator::gaussian(&mut rng, 0, 5).is_err());
        assert!(LinearOperator::gaussian(&mut rng, 1 << 13, 1 << 13).is_err());
    }

    #[test]
    fn gaussian_adjoint_is_dense_transpose() {
        let mut rng = RngStream::new(71);
        let op = LinearOperator::gaussian(&mut rng, 20, 35).unwrap();
        assert_adjoint_consistent(&op, &mut rng, 25);
    }

    #[test]
    fn fourier_full_mask_is_isometric() {
        let (h, w) = (8, 8);
        let mask = vec![true; h * w];
        let op = LinearOperator::subsampled_fourier(&mask, h, w).unwrap();
        let mut rng = RngStream::new(72);
        let x = rng.sample_gaussian(&[h * w], 0.0, 1.0).unwrap();
        let y = op.apply(&x).unwrap();
        let (nx, ny) = (norm2(&x), norm2(&y));
        assert!((nx - ny).abs() <= 1e-10 * nx);
    }

    #[test]
    fn fourier_dc_only_on_constant_image() {
        let (h, w) = (8, 4);
        let mut mask = vec![false; h * w];
        mask[0] = true;
        let op = LinearOperator::subsampled_fourier(&mask, h, w).unwrap();
        let c = 0.73;
        let x = Tensor::full(&[h * w], c);
        let y = op.apply(&x).unwrap();
        assert_eq!(y.len(), 2);
        assert!((y.data()[0] - c * ((h * w) as f64).sqrt()).abs() < 1e-12);
        assert!(y.data()[1].abs() < 1e-12);
    }

    #[test]
    fn fourier_rejects_empty_mask() {
        let mask = vec![false; 16];
        assert!(LinearOperator::subsampled_fourier(&mask, 4, 4).is_err());
    }

    #[test]
    fn fourier_adjoint_consistency() {
        let mut rng = RngStream::new(73);
        let (h, w) = (8, 8);
        let mask: Vec<bool> = (0..h * w).map(|_| rng.next_f64() < 0.4).collect();
        let mask = if mask.iter().any(|&b| b) {
            mask
        } else {
            let mut m = mask;
            m[3] = true;
            m
        };
        let op = LinearOperator::subsampled_fourier(&mask, h, w).unwrap();
        assert_adjoint_consistent(&op, &mut rng, 100);
    }

    #[test]
    fn blur_decimate_preserves_constants() {
        let kernel = bicubic_kernel(2);
        let op = LinearOperator::blur_decimate(&kernel, 2, 8, 8).unwrap();
        let c = 0.41;
        let y = op.apply(&Tensor::full(&[64], c)).unwrap();
        assert_eq!(y.len(), 16);
        for v in y.data() {
            assert!((v - c).abs() < 1e-12);
        }
    }

    #[test]
    fn blur_decimate_with_dirac_kernel_is_subsampling() {
        let mut data = vec![0.0; 9];
        data[4] = 1.0;
        let dirac = Tensor::new(vec![3, 3], data).unwrap();
        let op = LinearOperator::blur_decimate(&dirac, 2, 6, 6).unwrap();
        let mut rng = RngStream::new(74);
        let x = rng.sample_gaussian(&[36], 0.0, 1.0).unwrap();
        let y = op.apply(&x).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(y.data()[i * 3 + j], x.data()[(2 * i) * 6 + 2 * j]);
            }
        }
    }

    #[test]
    fn blur_decimate_validates_scale_and_kernel() {
        let kernel = bicubic_kernel(2);
        assert!(LinearOperator::blur_decimate(&kernel, 3, 8, 8).is_err());
        let unnormalized = Tensor::full(&[3, 3], 1.0);
        assert!(LinearOperator::blur_decimate(&unnormalized, 2, 8, 8).is_err());
    }

    #[test]
    fn blur_decimate_adjoint_consistency() {
        let kernel = bicubic_kernel(2);
        let op = LinearOperator::blur_decimate(&kernel, 2, 8, 8).unwrap();
        let mut rng = RngStream::new(75);
        assert_adjoint_consistent(&op, &mut rng, 100);
    }

    #[test]
    fn uniform_blur_preserves_constants_exactly() {
        let op = LinearOperator::uniform_blur(3, 6, 6).unwrap();
        let x = Tensor::full(&[36], 0.2);
        let y = op.apply(&x).unwrap();
        for v in y.data() {
            assert!((v - 0.2).abs() < 1e-14);
        }
    }

    #[test]
    fn uniform_blur_k1_is_identity_and_even_k_rejected() {
        let op = LinearOperator::uniform_blur(1, 4, 5).unwrap();
        let mut rng = RngStream::new(76);
        let x = rng.sample_gaussian(&[20], 0.0, 1.0).unwrap();
        assert_eq!(op.apply(&x).unwrap().data(), x.data());
        assert!(LinearOperator::uniform_blur(4, 4, 5).is_err());
    }

    #[test]
    fn uniform_blur_9x9_spreads_delta() {
        let (h, w) = (32, 32);
        let op = LinearOperator::uniform_blur(9, h, w).unwrap();
        let mut x = Tensor::zeros(&[h * w]);
        x.data_mut()[16 * w + 16] = 1.0;
        let y = op.apply(&x).unwrap();
        let nonzero: Vec<f64> = y.data().iter().copied().filter(|v| *v != 0.0).collect();
        assert_eq!(nonzero.len(), 81);
        for v in nonzero {
            assert!((v - 1.0 / 81.0).abs() < 1e-15);
        }
    }

    #[test]
    fn sampling_selects_and_scatters() {
        let op = LinearOperator::sampling(vec![0, 2], 3).unwrap();
        let x = Tensor::from_vec(vec![1.0, 2.0, 3.0]);
        let y = op.apply(&x).unwrap();
        assert_eq!(y.data(), &[1.0, 3.0]);
        let back = op.apply_adjoint(&y).unwrap();
        assert_eq!(back.data(), &[1.0, 0.0, 3.0]);
    }

    #[test]
    fn sampling_full_range_is_identity() {
        let op = LinearOperator::sampling((0..5).collect(), 5).unwrap();
        let mut rng = RngStream::new(77);
        let x = rng.sample_gaussian(&[5], 0.0, 1.0).unwrap();
        assert_eq!(op.apply(&x).unwrap().data(), x.data());
    }

    #[test]
    fn sampling_rejects_duplicates_and_out_of_range() {
        assert!(LinearOperator::sampling(vec![0, 0], 3).is_err());
        assert!(LinearOperator::sampling(vec![3], 3).is_err());
        assert!(LinearOperator::sampling(vec![], 3).is_err());
    }

    #[test]
    fn sampling_row_projection_is_diagonal_01() {
        // Brute-force P_A on every basis vector for a small n.
        let n = 12;
        let indices = vec![1, 4, 5, 9];
        let op = LinearOperator::sampling(indices.clone(), n).unwrap();
        let cfg = CgConfig::default();
        for j in 0..n {
            let mut e = Tensor::zeros(&[n]);
            e.data_mut()[j] = 1.0;
            let p = op.project_row_space(&e, &cfg).unwrap();
            for i in 0..n {
                let want = if i == j && indices.contains(&j) { 1.0 } else { 0.0 };
                assert!((p.data()[i] - want).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn observation_noiseless_is_exact_and_seeded() {
        let mut rng = RngStream::new(78);
        let op = LinearOperator::gaussian(&mut rng, 10, 20).unwrap();
        let x = rng.sample_gaussian(&[20], 0.0, 1.0).unwrap();
        let y0 = synthesize_observation(&op, &x, 0.0, &mut rng.fork("noise")).unwrap();
        assert_eq!(y0.data(), op.apply(&x).unwrap().data());

        let y1 = synthesize_observation(&op, &x, 0.1, &mut rng.fork("e")).unwrap();
        let y2 = synthesize_observation(&op, &x, 0.1, &mut rng.fork("e")).unwrap();
        assert_eq!(y1.data(), y2.data());
        assert_ne!(y1.data(), y0.data());
    }

    #[test]
    fn observation_noise_variance_matches() {
        // Identity operator: ||y - x||^2 / m concentrates around sigma^2.
        let m = 10_000;
        let op = LinearOperator::identity(m);
        let x = Tensor::zeros(&[m]);
        let sigma = 0.3;
        let mut rng = RngStream::new(79);
        let y = synthesize_observation(&op, &x, sigma, &mut rng).unwrap();
        let mse: f64 = y.data().iter().map(|v| v * v).sum::<f64>() / m as f64;
        assert!((mse - sigma * sigma).abs() <= 0.15 * sigma * sigma);
    }

    #[test]
    fn pseudoinverse_orthonormal_rows_is_adjoint() {
        let op = LinearOperator::sampling(vec![0, 3], 5).unwrap();
        let r = Tensor::from_vec(vec![2.0, -1.0]);
        let got = op.pseudoinverse_apply(&r, &CgConfig::default()).unwrap();
        assert_eq!(got.data(), op.apply_adjoint(&r).unwrap().data());
    }

    #[test]
    fn pseudoinverse_of_scaled_identity() {
        // 2*I via a gaussian-free construction: dense matrix path.
        let matrix = vec![2.0, 0.0, 0.0, 2.0];
        let op = LinearOperator {
            m: 2,
            n: 2,
            kind: OperatorKind::DenseGaussian { matrix },
        };
        let r = Tensor::from_vec(vec![3.0, -4.0]);
        let got = op.pseudoinverse_apply(&r, &CgConfig::default()).unwrap();
        assert!((got.data()[0] - 1.5).abs() < 1e-12);
        assert!((got.data()[1] + 2.0).abs() < 1e-12);
    }

    #[test]
    fn projections_sum_to_identity_and_are_orthogonal() {
        let mut rng = RngStream::new(80);
        let op = LinearOperator::gaussian(&mut rng, 6, 16).unwrap();
        let cfg = CgConfig::default();
        for _ in 0..20 {
            let v = rng.sample_gaussian(&[16], 0.0, 1.0).unwrap();
            let p = op.project_row_space(&v, &cfg).unwrap();
            let q = op.project_null_space(&v, &cfg).unwrap();
            // q is defined as v - p, so the sum reconstructs v up to one
            // rounding of the subtraction.
            let sum = p.add(&q).unwrap();
            for (a, b) in sum.data().iter().zip(v.data()) {
                assert!((a - b).abs() <= 4.0 * f64::EPSILON * b.abs().max(1.0));
            }
            let ip = dot(&p, &q).unwrap();
            let nv = norm2(&v);
            assert!(ip.abs() <= 1e-8 * nv * nv, "ip {ip}");
            // Idempotence.
            let pp = op.project_row_space(&p, &cfg).unwrap();
            let diff = norm2(&pp.sub(&p).unwrap());
            assert!(diff <= 1e-8 * norm2(&p).max(1e-12));
            // Pythagoras.
            let lhs = nv * nv;
            let rhs = norm2(&p) * norm2(&p) + norm2(&q) * norm2(&q);
            assert!((lhs - rhs).abs() <= 1e-8 * lhs);
        }
    }

    #[test]
    fn cg_reports_non_convergence() {
        let mut rng = RngStream::new(81);
        let op = LinearOperator::gaussian(&mut rng, 10, 30).unwrap();
        let r = rng.sample_gaussian(&[10], 0.0, 1.0).unwrap();
        let cfg = CgConfig {
            tol: 1e-14,
            max_iter: 1,
        };
        match op.pseudoinverse_apply(&r, &cfg) {
            Err(Error::CgDidNotConverge { achieved, .. }) => assert!(achieved > 0.0),
            other => panic!("expected CG failure, got {other:?}"),
        }
    }

    #[test]
    fn bicubic_kernel_sums_to_one_and_is_odd_sized() {
        for scale in 1..=4 {
            let k = bicubic_kernel(scale);
            assert_eq!(k.shape()[0] % 2, 1);
            assert_eq!(k.shape()[0], 4 * scale - 1);
            let sum: f64 = k.data().iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn radial_random_mask_hits_target_and_keeps_dc() {
        let mut rng = RngStream::new(82);
        let mask = radial_random_mask(&mut rng, 16, 16, 0.3);
        let kept = mask.iter().filter(|&&b| b).count();
        assert_eq!(kept, (0.3f64 * 256.0).round() as usize);
        assert!(mask[0], "DC must be kept");
        // Deterministic under the same stream.
        let mut rng2 = RngStream::new(82);
        assert_eq!(mask, radial_random_mask(&mut rng2, 16, 16, 0.3));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn prop_operators_are_linear(seed in 0u64..500, alpha in -3.0f64..3.0, beta in -3.0f64..3.0) {
            let mut rng = RngStream::new(seed);
            let kernel = bicubic_kernel(2);
            let ops = vec![
                LinearOperator::identity(16),
                LinearOperator::gaussian(&mut rng, 7, 16).unwrap(),
                LinearOperator::sampling(vec![0, 5, 9], 16).unwrap(),
                LinearOperator::uniform_blur(3, 4, 4).unwrap(),
                LinearOperator::blur_decimate(&kernel, 2, 4, 4).unwrap(),
                LinearOperator::subsampled_fourier(&[true, false, true, false].repeat(4), 4, 4).unwrap(),
            ];
            for op in &ops {
                let x1 = rng.sample_gaussian(&[op.n()], 0.0, 1.0).unwrap();
                let x2 = rng.sample_gaussian(&[op.n()], 0.0, 1.0).unwrap();
                let lhs = op.apply(&x1.scale(alpha).add(&x2.scale(beta)).unwrap()).unwrap();
                let rhs = op.apply(&x1).unwrap().scale(alpha).add(&op.apply(&x2).unwrap().scale(beta)).unwrap();
                let scale = norm2(&rhs).max(1e-9);
                prop_assert!(norm2(&lhs.sub(&rhs).unwrap()) <= 1e-12 * scale.max(1.0) * 10.0);
            }
        }
    }
}
