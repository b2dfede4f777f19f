//! Measurable probes for how well a generator can represent a given image.
//!
//! `representation_error` estimates `min_z ||G(z) - x||` by stochastic
//! optimization; the estimate is an upper bound on the true minimum and is
//! reported as such. `representation_error_first_layer` additionally adapts
//! the first weight matrix, warm-started from the plain estimate, so its
//! value never exceeds the plain one. `error_decomposition` splits a
//! reconstruction error into operator row-space and null-space components.

use crate::error::{Error, Result};
use crate::generator::{sample_latent, GeneratorParams};
use crate::operators::{CgConfig, LinearOperator};
use crate::optim::AdamState;
use crate::rng::RngStream;
use crate::tensor::{matvec, norm2, Tensor};

#[derive(Debug, Clone, Copy)]
pub struct ProbeConfig {
    pub lr_z: f64,
    pub lr_w1: f64,
    pub iterations: usize,
    pub restarts: usize,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            lr_z: 3e-2,
            lr_w1: 1e-3,
            iterations: 1500,
            restarts: 2,
        }
    }
}

/// How the first-layer probe parameterizes the enlarged search.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FirstLayerMode {
    /// Optimize `(z, W_1)` jointly from the pre-trained warm start.
    JointZW1,
    /// Optimize an enlarged latent `z~ = W_1 z` directly under a generator
    /// whose first layer is the identity.
    DirectLatent,
}

#[derive(Debug, Clone)]
pub struct ProbeReport {
    /// Upper-bound estimate of `min_z ||G(z) - x||`.
    pub e_rep: f64,
    /// First-layer-adapted estimate; present only for the first-layer probe.
    pub e_rep_tilde: Option<f64>,
    pub z_star: Tensor,
    pub w1_star: Option<Tensor>,
    /// Residual norms of every retained candidate, in evaluation order.
    pub trace: Vec<f64>,
}

fn residual_norm_and_seed(
    gen: &GeneratorParams,
    z: &Tensor,
    x: &Tensor,
) -> Result<(f64, Tensor, crate::generator::ForwardTape)> {
    let (xh, tape) = gen.forward(z)?;
    let r = xh.sub(x)?;
    Ok((norm2(&r), r.scale(2.0), tape))
}

/// Estimate `min_z ||G(z) - x||` by ADAM with random restarts. A warm start
/// replaces the first restart's initialization and is always a candidate, so
/// supplying the true minimizer yields (up to evaluation rounding) its value.
pub fn representation_error(
    gen: &GeneratorParams,
    x: &Tensor,
    cfg: &ProbeConfig,
    rng: &RngStream,
    warm_start: Option<&Tensor>,
) -> Result<ProbeReport> {
    if x.len() != gen.output_dim() {
        return Err(Error::ShapeMismatch {
            context: "representation_error",
            expected: vec![gen.output_dim()],
            got: x.shape().to_vec(),
        });
    }
    if cfg.restarts == 0 {
        return Err(Error::InvalidArgument("probe restarts must be >= 1".into()));
    }
    let x = x.flattened();
    let k0 = gen.latent_dim();
    let mut best: Option<(f64, Tensor)> = None;
    let mut trace = Vec::new();

    for restart in 0..cfg.restarts {
        let mut restart_rng = rng.fork(&format!("restart/{restart}"));
        let mut z = match (restart, warm_start) {
            (0, Some(w)) => w.flattened(),
            _ => sample_latent(&mut restart_rng, k0),
        };
        let mut adam = AdamState::new(&[k0]);
        let mut local_trace = Vec::with_capacity(cfg.iterations + 1);
        let mut local_best: Option<(f64, Tensor)> = None;
        let mut ok = true;

        for step in 0..=cfg.iterations {
            let (value, seed, tape) = residual_norm_and_seed(gen, &z, &x)?;
            if !value.is_finite() {
                ok = false;
                break;
            }
            local_trace.push(value);
            if local_best.as_ref().map_or(true, |(b, _)| value < *b) {
                local_best = Some((value, z.clone()));
            }
            if step == cfg.iterations {
                break;
            }
            let (g_z, _) = gen.backward(&tape, &seed)?;
            adam.step(&mut z, &g_z, cfg.lr_z)?;
        }

        if ok {
            trace.extend(local_trace);
            if let Some((v, z)) = local_best {
                if best.as_ref().map_or(true, |(b, _)| v < *b) {
                    best = Some((v, z));
                }
            }
        }
    }
    let (e_rep, z_star) = best.ok_or(Error::AllRestartsDiverged {
        restarts: cfg.restarts,
    })?;
    Ok(ProbeReport {
        e_rep,
        e_rep_tilde: None,
        z_star,
        w1_star: None,
        trace,
    })
}

fn identity_weight(k: usize) -> Tensor {
    let mut data = vec![0.0; k * k];
    for i in 0..k {
        data[i * k + i] = 1.0;
    }
    Tensor::new(vec![k, k], data).expect("identity shape")
}

/// Generator with layers `from..L` of `gen` and an identity first layer of
/// width `k_from`.
fn absorbed_generator(gen: &GeneratorParams, from: usize) -> Result<GeneratorParams> {
    let k = gen.dims()[from];
    let mut weights = vec![identity_weight(k)];
    weights.extend(gen.weights()[from..].iter().cloned());
    GeneratorParams::from_weights(weights)
}

/// First-layer-adapted representation error (requires `k0 < k1`). Runs the
/// plain probe first and warm-starts the enlarged search from its result, so
/// the adapted estimate can only improve on the plain one.
pub fn representation_error_first_layer(
    gen: &GeneratorParams,
    x: &Tensor,
    cfg: &ProbeConfig,
    rng: &RngStream,
    mode: FirstLayerMode,
) -> Result<ProbeReport> {
    let dims = gen.dims();
    if dims[0] >= dims[1] {
        return Err(Error::InvalidArgument(format!(
            "first-layer probe requires k0 < k1, got {} >= {}",
            dims[0], dims[1]
        )));
    }
    let x = x.flattened();
    let stage1 = representation_error(gen, &x, cfg, &rng.fork("stage1"), None)?;

    match mode {
        FirstLayerMode::DirectLatent => {
            let reduced = absorbed_generator(gen, 1)?;
            let z_tilde = matvec(gen.weight(0), &stage1.z_star)?;
            let stage2 =
                representation_error(&reduced, &x, cfg, &rng.fork("stage2"), Some(&z_tilde))?;
            let e_rep_tilde = stage2.e_rep.min(stage1.e_rep);
            let mut trace = stage1.trace;
            trace.extend(stage2.trace);
            Ok(ProbeReport {
                e_rep: stage1.e_rep,
                e_rep_tilde: Some(e_rep_tilde),
                z_star: stage2.z_star,
                w1_star: None,
                trace,
            })
        }
        FirstLayerMode::JointZW1 => {
            let mut work = gen.clone();
            let mut z = stage1.z_star.clone();
            let mut adam_z = AdamState::new(&[gen.latent_dim()]);
            let mut adam_w = AdamState::new(gen.weight(0).shape());
            let mut best = (stage1.e_rep, z.clone(), work.weight(0).clone());
            let mut trace = stage1.trace.clone();

            for step in 0..=cfg.iterations {
                let (value, seed, tape) = residual_norm_and_seed(&work, &z, &x)?;
                if !value.is_finite() {
                    break;
                }
                trace.push(value);
                if value < best.0 {
                    best = (value, z.clone(), work.weight(0).clone());
                }
                if step == cfg.iterations {
                    break;
                }
                let (g_z, g_w) = work.backward(&tape, &seed)?;
                adam_z.step(&mut z, &g_z, cfg.lr_z)?;
                adam_w.step(work.weight_mut(0), &g_w[0], cfg.lr_w1)?;
            }

            let (e_rep_tilde, z_star, w1_star) = best;
            Ok(ProbeReport {
                e_rep: stage1.e_rep,
                e_rep_tilde: Some(e_rep_tilde),
                z_star,
                w1_star: Some(w1_star),
                trace,
            })
        }
    }
}

/// Sequential layer absorption: stage `l` searches over an enlarged latent of
/// width `k_l`, warm-started from the previous stage. Returns the
/// non-increasing error estimates, one per stage, starting with the plain
/// representation error.
pub fn representation_error_layers(
    gen: &GeneratorParams,
    x: &Tensor,
    cfg: &ProbeConfig,
    rng: &RngStream,
    layers: usize,
) -> Result<Vec<f64>> {
    let max_layers = gen.num_layers() - 1;
    if layers > max_layers {
        return Err(Error::InvalidArgument(format!(
            "cannot absorb {layers} layers of a {}-layer generator",
            gen.num_layers()
        )));
    }
    let x = x.flattened();
    let stage0 = representation_error(gen, &x, cfg, &rng.fork("stage/0"), None)?;
    let mut errors = vec![stage0.e_rep];
    let mut carry = stage0.z_star; // latent of the previous stage's generator
    let mut best = stage0.e_rep;

    for l in 1..=layers {
        // Warm start: push the previous latent through the absorbed layer,
        // applying ReLU except when it came straight from the original input.
        let prev_gen = if l == 1 {
            gen.clone()
        } else {
            absorbed_generator(gen, l - 1)?
        };
        let warm = if l == 1 {
            matvec(gen.weight(0), &carry)?
        } else {
            let mut activated = carry.clone();
            for v in activated.data_mut() {
                if *v < 0.0 {
                    *v = 0.0;
                }
            }
            matvec(prev_gen.weight(1), &activated)?
        };
        let stage_gen = absorbed_generator(gen, l)?;
        let report =
            representation_error(&stage_gen, &x, cfg, &rng.fork(&format!("stage/{l}")), Some(&warm))?;
        best = best.min(report.e_rep);
        errors.push(best);
        carry = report.z_star;
    }
    Ok(errors)
}

/// Row-space and null-space components of `x_hat - x`:
/// `(||P_A (x_hat - x)||, ||Q_A (x_hat - x)||)`.
pub fn error_decomposition(
    op: &LinearOperator,
    x: &Tensor,
    x_hat: &Tensor,
    cg: &CgConfig,
) -> Result<(f64, f64)> {
    let d = x_hat.flattened().sub(&x.flattened())?;
    let row = op.project_row_space(&d, cg)?;
    let null = d.sub(&row)?;
    Ok((norm2(&row), norm2(&null)))
}
