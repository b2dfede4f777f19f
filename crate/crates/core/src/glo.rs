//! Offline generator pre-training by generative latent optimization: jointly
//! fit per-sample latents and weights with a plain reconstruction loss, no
//! discriminator.
//!
//! The toy dataset renders a handful of latent factors through a fixed random
//! smooth map (superposed Gaussian bumps whose centers and amplitudes the
//! factors control). Choosing more factors than the generator's latent width
//! guarantees a nonzero representation error, which downstream experiments
//! depend on.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generator::{project_to_ball, GeneratorParams};
use crate::optim::AdamState;
use crate::rng::RngStream;
use crate::tensor::Tensor;

/// Synthetic grayscale dataset with a known intrinsic dimension.
#[derive(Debug, Clone)]
pub struct ToyDataset {
    /// Flat `[h*w]` images with values in [0,1].
    pub images: Vec<Tensor>,
    pub h: usize,
    pub w: usize,
    pub d_true: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct GloConfig {
    pub epochs: usize,
    pub lr_weights: f64,
    pub lr_latents: f64,
    /// Latent ball radius; latents are re-projected after every step.
    pub radius: f64,
}

impl Default for GloConfig {
    fn default() -> Self {
        GloConfig {
            epochs: 1500,
            lr_weights: 2e-3,
            lr_latents: 2e-2,
            radius: 0.0, // 0 means sqrt(k0), resolved at train time
        }
    }
}

impl GloConfig {
    fn resolved_radius(&self, k0: usize) -> f64 {
        if self.radius > 0.0 {
            self.radius
        } else {
            (k0 as f64).sqrt()
        }
    }
}

struct Bump {
    base_cx: f64,
    base_cy: f64,
    dir_x: f64,
    dir_y: f64,
    width: f64,
    base_amp: f64,
    amp_sens: f64,
}

struct BumpMap {
    bumps: Vec<Bump>,
}

fn draw_map(rng: &mut RngStream, d_true: usize, h: usize, w: usize) -> BumpMap {
    let (hf, wf) = (h as f64, w as f64);
    let bumps = (0..d_true)
        .map(|_| Bump {
            base_cx: (0.2 + 0.6 * rng.next_f64()) * wf,
            base_cy: (0.2 + 0.6 * rng.next_f64()) * hf,
            dir_x: rng.next_gaussian() * wf / 10.0,
            dir_y: rng.next_gaussian() * hf / 10.0,
            width: (0.10 + 0.10 * rng.next_f64()) * hf.min(wf),
            base_amp: 0.5 + 0.5 * rng.next_f64(),
            amp_sens: 0.2 + 0.3 * rng.next_f64(),
        })
        .collect();
    BumpMap { bumps }
}

/// Deterministic rendering of one factor vector through the map, min-max
/// rescaled to [0,1].
fn render_factors(map: &BumpMap, factors: &[f64], h: usize, w: usize) -> Tensor {
    let mut img = vec![0.0f64; h * w];
    for (bump, &t) in map.bumps.iter().zip(factors) {
        let cx = bump.base_cx + t * bump.dir_x;
        let cy = bump.base_cy + t * bump.dir_y;
        let amp = bump.base_amp + t * bump.amp_sens;
        let inv_two_sq = 1.0 / (2.0 * bump.width * bump.width);
        for i in 0..h {
            let dy = i as f64 - cy;
            for j in 0..w {
                let dx = j as f64 - cx;
                img[i * w + j] += amp * (-(dx * dx + dy * dy) * inv_two_sq).exp();
            }
        }
    }
    let lo = img.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = img.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi > lo {
        for v in &mut img {
            *v = (*v - lo) / (hi - lo);
        }
    } else {
        for v in &mut img {
            *v = 0.5;
        }
    }
    Tensor::new(vec![h * w], img).expect("rendered image shape")
}

/// Build `count` images from `d_true` factors. The map depends only on the
/// seed, and sample `i` depends only on (seed, i), so a prefix of a larger
/// dataset equals the smaller dataset with the same seed.
pub fn make_toy_dataset(
    seed: u64,
    count: usize,
    h: usize,
    w: usize,
    d_true: usize,
) -> Result<ToyDataset> {
    if d_true == 0 {
        return Err(Error::InvalidArgument("d_true must be >= 1".into()));
    }
    if h < 8 || w < 8 {
        return Err(Error::InvalidArgument(format!(
            "image {h}x{w} too small for bump rendering (need 8x8)"
        )));
    }
    if count == 0 {
        return Err(Error::InvalidArgument("dataset count must be >= 1".into()));
    }
    let root = RngStream::new(seed);
    let map = draw_map(&mut root.fork("map"), d_true, h, w);
    let images = (0..count)
        .map(|i| {
            let mut srng = root.fork(&format!("factors/{i}"));
            let factors: Vec<f64> = (0..d_true).map(|_| srng.next_gaussian()).collect();
            render_factors(&map, &factors, h, w)
        })
        .collect();
    Ok(ToyDataset {
        images,
        h,
        w,
        d_true,
        seed,
    })
}

/// Result of GLO training.
#[derive(Debug, Clone)]
pub struct GloReport {
    pub params: GeneratorParams,
    pub latents: Vec<Tensor>,
    /// Loss after each epoch, preceded by the initial loss.
    pub loss_trace: Vec<f64>,
}

fn total_loss(params: &GeneratorParams, latents: &[Tensor], images: &[Tensor]) -> Result<f64> {
    let mut loss = 0.0;
    for (z, x) in latents.iter().zip(images) {
        let (xh, _) = params.forward(z)?;
        let r = xh.sub(x)?;
        loss += crate::tensor::dot(&r, &r)?;
    }
    Ok(loss)
}

/// Alternating full-batch ADAM on weights and latents, minimizing
/// `sum_i ||G(z_i) - x_i||^2` with latents re-projected onto the radius ball
/// after every step. An epoch that increases the loss is rolled back and
/// retried with both learning rates halved, so the recorded trace never
/// increases.
pub fn train_glo(
    dataset: &ToyDataset,
    dims: &[usize],
    cfg: &GloConfig,
    rng: &RngStream,
) -> Result<GloReport> {
    if dims.last() != Some(&(dataset.h * dataset.w)) {
        return Err(Error::InvalidArgument(format!(
            "generator output dim {:?} must equal image size {}",
            dims.last(),
            dataset.h * dataset.w
        )));
    }
    if !(cfg.lr_weights > 0.0) || !(cfg.lr_latents > 0.0) {
        return Err(Error::InvalidArgument("GLO learning rates must be positive".into()));
    }
    let k0 = dims[0];
    let radius = cfg.resolved_radius(k0);
    if !(radius > 0.0) {
        return Err(Error::InvalidArgument("latent radius must be positive".into()));
    }

    let mut params = GeneratorParams::init(&mut rng.fork("weights"), dims, false)?;
    let mut latents: Vec<Tensor> = (0..dataset.images.len())
        .map(|i| {
            let mut zrng = rng.fork(&format!("latent/{i}"));
            crate::generator::sample_latent_with_radius(&mut zrng, k0, radius)
        })
        .collect();
    let mut adam_w: Vec<AdamState> = params
        .weights()
        .iter()
        .map(|w| AdamState::new(w.shape()))
        .collect();
    let mut adam_z: Vec<AdamState> = latents.iter().map(|z| AdamState::new(z.shape())).collect();

    let mut loss = total_loss(&params, &latents, &dataset.images)?;
    if !loss.is_finite() {
        return Err(Error::TrainingDiverged {
            epoch: 0,
            trace: vec![loss],
        });
    }
    let mut trace = vec![loss];
    let mut lr_w = cfg.lr_weights;
    let mut lr_z = cfg.lr_latents;

    for epoch in 0..cfg.epochs {
        let snapshot = (params.clone(), latents.clone(), adam_w.clone(), adam_z.clone());
        loop {
            // Full-batch step on the weights.
            let mut grad_w: Vec<Tensor> = params
                .weights()
                .iter()
                .map(|w| Tensor::zeros(w.shape()))
                .collect();
            for (z, x) in latents.iter().zip(&dataset.images) {
                let (xh, tape) = params.forward(z)?;
                let seed = xh.sub(x)?.scale(2.0);
                let (_, gw) = params.backward(&tape, &seed)?;
                for (acc, g) in grad_w.iter_mut().zip(&gw) {
                    *acc = acc.add(g)?;
                }
            }
            for (l, g) in grad_w.iter().enumerate() {
                adam_w[l].step(params.weight_mut(l), g, lr_w)?;
            }

            // Per-sample steps on the latents against the updated weights.
            for (i, x) in dataset.images.iter().enumerate() {
                let (xh, tape) = params.forward(&latents[i])?;
                let seed = xh.sub(x)?.scale(2.0);
                let (gz, _) = params.backward(&tape, &seed)?;
                adam_z[i].step(&mut latents[i], &gz, lr_z)?;
                latents[i] = project_to_ball(&latents[i], radius);
            }

            let new_loss = total_loss(&params, &latents, &dataset.images)?;
            if !new_loss.is_finite() {
                trace.push(new_loss);
                return Err(Error::TrainingDiverged {
                    epoch,
                    trace,
                });
            }
            if new_loss <= loss {
                loss = new_loss;
                break;
            }
            // Roll back and retry gentler. Once steps underflow the epoch
            // becomes a no-op and the loop exits with an unchanged loss.
            let (p, l, aw, az) = snapshot.clone();
            params = p;
            latents = l;
            adam_w = aw;
            adam_z = az;
            lr_w *= 0.5;
            lr_z *= 0.5;
            if lr_w < 1e-18 && lr_z < 1e-18 {
                break;
            }
        }
        trace.push(loss);
    }

    Ok(GloReport {
        params,
        latents,
        loss_trace: trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::norm2;

    #[test]
    fn dataset_is_deterministic_and_prefix_stable() {
        let a = make_toy_dataset(7, 5, 8, 8, 3).unwrap();
        let b = make_toy_dataset(7, 5, 8, 8, 3).unwrap();
        for (x, y) in a.images.iter().zip(&b.images) {
            assert_eq!(x.data(), y.data());
        }
        let longer = make_toy_dataset(7, 9, 8, 8, 3).unwrap();
        for (x, y) in a.images.iter().zip(&longer.images) {
            assert_eq!(x.data(), y.data());
        }
    }

    #[test]
    fn identical_factors_render_identically() {
        let mut rng = RngStream::new(8);
        let map = draw_map(&mut rng, 1, 10, 10);
        let a = render_factors(&map, &[0.37], 10, 10);
        let b = render_factors(&map, &[0.37], 10, 10);
        assert_eq!(a.data(), b.data());
        let c = render_factors(&map, &[-0.4], 10, 10);
        assert_ne!(a.data(), c.data());
    }

    #[test]
    fn pixels_stay_in_unit_range() {
        let ds = make_toy_dataset(9, 1000, 8, 8, 4).unwrap();
        for img in &ds.images {
            assert!(img.min_value() >= 0.0);
            assert!(img.max_value() <= 1.0);
        }
    }

    #[test]
    fn dataset_validates_arguments() {
        assert!(make_toy_dataset(1, 4, 8, 8, 0).is_err());
        assert!(make_toy_dataset(1, 4, 4, 8, 2).is_err());
        assert!(make_toy_dataset(1, 0, 8, 8, 2).is_err());
    }

    #[test]
    fn zero_epochs_returns_init_unchanged() {
        let ds = make_toy_dataset(10, 3, 8, 8, 2).unwrap();
        let rng = RngStream::new(10);
        let cfg = GloConfig {
            epochs: 0,
            ..GloConfig::default()
        };
        let report = train_glo(&ds, &[2, 8, 64], &cfg, &rng).unwrap();
        let init = GeneratorParams::init(&mut rng.fork("weights"), &[2, 8, 64], false).unwrap();
        assert_eq!(report.params, init);
        assert_eq!(report.loss_trace.len(), 1);
    }

    #[test]
    fn single_image_overfits() {
        let ds = make_toy_dataset(11, 1, 8, 8, 2).unwrap();
        let rng = RngStream::new(11);
        let cfg = GloConfig {
            epochs: 1200,
            lr_weights: 5e-3,
            lr_latents: 2e-2,
            radius: 0.0,
        };
        let report = train_glo(&ds, &[2, 16, 64], &cfg, &rng).unwrap();
        let (xh, _) = report.params.forward(&report.latents[0]).unwrap();
        let rel = norm2(&xh.sub(&ds.images[0]).unwrap()) / norm2(&ds.images[0]);
        assert!(rel <= 0.05, "relative reconstruction error {rel}");
    }

    #[test]
    fn loss_trace_is_monotone_and_recomputable() {
        let ds = make_toy_dataset(12, 6, 8, 8, 8).unwrap();
        let rng = RngStream::new(12);
        let cfg = GloConfig {
            epochs: 60,
            lr_weights: 1e-2,
            lr_latents: 3e-2,
            radius: 0.0,
        };
        let report = train_glo(&ds, &[2, 8, 64], &cfg, &rng).unwrap();
        for pair in report.loss_trace.windows(2) {
            assert!(pair[1] <= pair[0], "loss increased: {} -> {}", pair[0], pair[1]);
        }
        let recomputed = total_loss(&report.params, &report.latents, &ds.images).unwrap();
        let last = *report.loss_trace.last().unwrap();
        assert!((recomputed - last).abs() <= 1e-10 * last.max(1e-30));
        let radius = (2.0f64).sqrt();
        for z in &report.latents {
            assert!(norm2(z) <= radius + 1e-12);
        }
    }

    #[test]
    fn non_finite_data_aborts_with_trace() {
        let mut ds = make_toy_dataset(13, 2, 8, 8, 2).unwrap();
        ds.images[0].data_mut()[0] = f64::NAN;
        let rng = RngStream::new(13);
        let cfg = GloConfig::default();
        match train_glo(&ds, &[2, 8, 64], &cfg, &rng) {
            Err(Error::TrainingDiverged { trace, .. }) => assert!(!trace.is_empty()),
            other => panic!("expected divergence, got {other:?}"),
        }
    }
}
