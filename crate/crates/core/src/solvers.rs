//! Reconstruction methods: latent-space recovery (CSGM), image-adaptive
//! joint optimization of latent and generator weights (IAGAN), and
//! back-projection onto the affine set `{x : Ax = y}`.
//!
//! All solvers select the iterate with the minimal data-fit objective
//! `||y - A G(z)||^2` over everything they evaluated, inits included, and
//! report the full objective trace.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generator::{sample_latent, GeneratorParams};
use crate::operators::{CgConfig, LinearOperator};
use crate::optim::AdamState;
use crate::rng::RngStream;
use crate::tensor::{dot, norm2, Tensor};

/// Relative objective improvement below which an IAGAN iterate does not
/// reset the early-stopping patience window.
pub const EARLY_STOP_REL_IMPROVEMENT: f64 = 1e-6;
/// IAGAN stops after this many iterations without significant improvement.
pub const EARLY_STOP_PATIENCE: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Csgm,
    CsgmBp,
    Iagan,
    IaganBp,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Csgm, Method::CsgmBp, Method::Iagan, Method::IaganBp];

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Csgm => "csgm",
            Method::CsgmBp => "csgm_bp",
            Method::Iagan => "iagan",
            Method::IaganBp => "iagan_bp",
        }
    }

    pub fn is_back_projected(&self) -> bool {
        matches!(self, Method::CsgmBp | Method::IaganBp)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csgm" => Ok(Method::Csgm),
            "csgm_bp" => Ok(Method::CsgmBp),
            "iagan" => Ok(Method::Iagan),
            "iagan_bp" => Ok(Method::IaganBp),
            other => Err(Error::Parse(format!("unknown method {other:?}"))),
        }
    }
}

/// Hyperparameters for one solver run.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct SolveConfig {
    pub lr_z: f64,
    /// Learning rate for generator weights (IAGAN only).
    pub lr_theta: f64,
    pub iterations: usize,
    /// Independent random initializations (CSGM only).
    pub restarts: usize,
    /// Noisy-observation mode: iteration budget is halved (rounded up).
    pub noise_mode: bool,
    pub seed: u64,
}

impl Default for SolveConfig {
    fn default() -> Self {
        SolveConfig {
            lr_z: 0.1,
            lr_theta: 1e-3,
            iterations: 800,
            restarts: 2,
            noise_mode: false,
            seed: 0,
        }
    }
}

impl SolveConfig {
    /// Desk-scale IAGAN defaults: gentle weight adaptation, shorter run.
    pub fn iagan_default() -> Self {
        SolveConfig {
            lr_z: 1e-2,
            lr_theta: 1e-4,
            iterations: 400,
            restarts: 1,
            noise_mode: false,
            seed: 0,
        }
    }

    /// The iteration budget actually spent: halved (rounded up) under noise.
    pub fn effective_iterations(&self) -> usize {
        if self.noise_mode {
            self.iterations.div_ceil(2)
        } else {
            self.iterations
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.lr_z > 0.0) || !(self.lr_theta > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "learning rates must be positive, got lr_z={} lr_theta={}",
                self.lr_z, self.lr_theta
            )));
        }
        if self.restarts == 0 {
            return Err(Error::InvalidArgument("restarts must be >= 1".into()));
        }
        Ok(())
    }
}

/// Outcome of one solver run.
#[derive(Debug, Clone)]
pub struct SolveReport {
    pub x_hat: Tensor,
    pub z_hat: Tensor,
    pub theta_hat: Option<GeneratorParams>,
    pub best_objective: f64,
    /// Objectives of every retained candidate, in evaluation order.
    pub objective_trace: Vec<f64>,
    /// ADAM steps executed per restart (after the noise rule and any early
    /// stopping).
    pub iterations_run: usize,
    /// Restarts discarded because their objective became non-finite.
    pub diverged_restarts: usize,
}

/// `||y - A G(z)||^2` and its gradient seed `2 Aᵀ(A G(z) - y)`.
fn objective_and_seed(
    op: &LinearOperator,
    y: &Tensor,
    x: &Tensor,
) -> Result<(f64, Tensor)> {
    let ax = op.apply(x)?;
    let resid = ax.sub(y)?;
    let obj = dot(&resid, &resid)?;
    let seed = op.apply_adjoint(&resid.scale(2.0))?;
    Ok((obj, seed))
}

/// Latent-only recovery: ADAM descent of `||y - A G(z)||^2` over `z` from
/// `restarts` random truncated-normal inits; the best iterate across all
/// restarts (inits included) wins.
pub fn csgm_solve(
    gen: &GeneratorParams,
    op: &LinearOperator,
    y: &Tensor,
    cfg: &SolveConfig,
    rng: &RngStream,
) -> Result<SolveReport> {
    cfg.validate()?;
    if gen.output_dim() != op.n() {
        return Err(Error::ShapeMismatch {
            context: "csgm_solve",
            expected: vec![op.n()],
            got: vec![gen.output_dim()],
        });
    }
    if y.len() != op.m() {
        return Err(Error::ShapeMismatch {
            context: "csgm_solve observation",
            expected: vec![op.m()],
            got: y.shape().to_vec(),
        });
    }
    let iterations = cfg.effective_iterations();
    let k0 = gen.latent_dim();

    let mut best: Option<(f64, Tensor, Tensor)> = None; // (obj, z, x)
    let mut trace = Vec::new();
    let mut diverged = 0usize;

    for restart in 0..cfg.restarts {
        let mut restart_rng = rng.fork(&format!("restart/{restart}"));
        let mut z = sample_latent(&mut restart_rng, k0);
        let mut adam = AdamState::new(&[k0]);
        let mut local_trace = Vec::with_capacity(iterations + 1);
        let mut local_best: Option<(f64, Tensor, Tensor)> = None;
        let mut ok = true;

        for step in 0..=iterations {
            let (x, tape) = gen.forward(&z)?;
            let (obj, seed) = objective_and_seed(op, y, &x)?;
            if !obj.is_finite() {
                ok = false;
                break;
            }
            local_trace.push(obj);
            if local_best.as_ref().map_or(true, |(b, _, _)| obj < *b) {
                local_best = Some((obj, z.clone(), x));
            }
            if step == iterations {
                break;
            }
            let (g_z, _) = gen.backward(&tape, &seed)?;
            adam.step(&mut z, &g_z, cfg.lr_z)?;
        }

        if ok {
            trace.extend(local_trace);
            if let Some((obj, z, x)) = local_best {
                if best.as_ref().map_or(true, |(b, _, _)| obj < *b) {
                    best = Some((obj, z, x));
                }
            }
        } else {
            diverged += 1;
        }
    }

    let (best_objective, z_hat, x_hat) = best.ok_or(Error::AllRestartsDiverged {
        restarts: cfg.restarts,
    })?;
    Ok(SolveReport {
        x_hat,
        z_hat,
        theta_hat: None,
        best_objective,
        objective_trace: trace,
        iterations_run: iterations,
        diverged_restarts: diverged,
    })
}

/// Image-adaptive recovery: joint ADAM on `(z, theta)` warm-started from the
/// pre-trained weights and a given latent (normally the CSGM solution), with
/// early stopping on a stalled objective. The warm start itself is always a
/// candidate, so the result never scores worse than its initialization.
pub fn iagan_solve(
    gen: &GeneratorParams,
    op: &LinearOperator,
    y: &Tensor,
    z_init: &Tensor,
    cfg: &SolveConfig,
) -> Result<SolveReport> {
    cfg.validate()?;
    if z_init.len() != gen.latent_dim() {
        return Err(Error::ShapeMismatch {
            context: "iagan_solve z_init",
            expected: vec![gen.latent_dim()],
            got: z_init.shape().to_vec(),
        });
    }
    let iterations = cfg.effective_iterations();

    let mut theta = gen.clone();
    let mut z = z_init.flattened();
    let mut adam_z = AdamState::new(&[gen.latent_dim()]);
    let mut adam_w: Vec<AdamState> = gen
        .weights()
        .iter()
        .map(|w| AdamState::new(w.shape()))
        .collect();

    let mut trace = Vec::with_capacity(iterations + 1);
    let mut best: Option<(f64, Tensor, GeneratorParams, Tensor)> = None;
    let mut diverged = 0usize;
    let mut patience_best = f64::INFINITY;
    let mut last_improvement = 0usize;
    let mut steps_run = 0usize;

    for step in 0..=iterations {
        let (x, tape) = theta.forward(&z)?;
        let (obj, seed) = objective_and_seed(op, y, &x)?;
        if !obj.is_finite() {
            // Keep the finite prefix; the init is always in it.
            diverged = 1;
            break;
        }
        trace.push(obj);
        if best.as_ref().map_or(true, |(b, ..)| obj < *b) {
            best = Some((obj, z.clone(), theta.clone(), x));
        }
        if obj < patience_best * (1.0 - EARLY_STOP_REL_IMPROVEMENT) {
            patience_best = obj;
            last_improvement = step;
        }
        if step == iterations || step - last_improvement >= EARLY_STOP_PATIENCE {
            break;
        }
        let (g_z, g_w) = theta.backward(&tape, &seed)?;
        adam_z.step(&mut z, &g_z, cfg.lr_z)?;
        for (l, g) in g_w.iter().enumerate() {
            adam_w[l].step(theta.weight_mut(l), g, cfg.lr_theta)?;
        }
        steps_run = step + 1;
    }

    let (best_objective, z_hat, theta_hat, x_hat) =
        best.ok_or(Error::AllRestartsDiverged { restarts: 1 })?;
    Ok(SolveReport {
        x_hat,
        z_hat,
        theta_hat: Some(theta_hat),
        best_objective,
        objective_trace: trace,
        iterations_run: steps_run,
        diverged_restarts: diverged,
    })
}

/// Projection of `x_hat` onto `{x : Ax = y}`: `x_hat + A†(y - A x_hat)`.
pub fn back_project(
    op: &LinearOperator,
    x_hat: &Tensor,
    y: &Tensor,
    cg: &CgConfig,
) -> Result<Tensor> {
    let resid = y.flattened().sub(&op.apply(x_hat)?)?;
    let correction = op.pseudoinverse_apply(&resid, cg)?;
    x_hat.flattened().add(&correction)
}

/// Configuration for a full method suite over one observation.
#[derive(Debug, Clone)]
pub struct SuiteConfig {
    pub csgm: SolveConfig,
    pub iagan: SolveConfig,
    pub cg: CgConfig,
    pub methods: BTreeSet<Method>,
}

impl SuiteConfig {
    pub fn all_methods(csgm: SolveConfig, iagan: SolveConfig, cg: CgConfig) -> Self {
        SuiteConfig {
            csgm,
            iagan,
            cg,
            methods: Method::ALL.into_iter().collect(),
        }
    }
}

/// Run CSGM, warm-start IAGAN from its latent, and (noiseless only)
/// back-project both estimates. Back-projected variants are silently absent
/// from the result when the configs are in noise mode.
pub fn run_method_suite(
    gen: &GeneratorParams,
    op: &LinearOperator,
    y: &Tensor,
    cfg: &SuiteConfig,
    rng: &RngStream,
) -> Result<BTreeMap<Method, SolveReport>> {
    if cfg.methods.is_empty() {
        return Err(Error::InvalidArgument("method suite needs at least one method".into()));
    }
    if cfg.csgm.noise_mode != cfg.iagan.noise_mode {
        return Err(Error::InvalidArgument(
            "csgm and iagan configs disagree on noise_mode".into(),
        ));
    }
    let noise_mode = cfg.csgm.noise_mode;

    let mut out = BTreeMap::new();
    let csgm = csgm_solve(gen, op, y, &cfg.csgm, &rng.fork("csgm"))?;

    let wants = |m: Method| cfg.methods.contains(&m) && !(noise_mode && m.is_back_projected());

    if wants(Method::CsgmBp) {
        out.insert(
            Method::CsgmBp,
            bp_report(op, y, &csgm.x_hat, &csgm.z_hat, &cfg.cg)?,
        );
    }
    if wants(Method::Iagan) || wants(Method::IaganBp) {
        let iagan = iagan_solve(gen, op, y, &csgm.z_hat, &cfg.iagan)?;
        if wants(Method::IaganBp) {
            out.insert(
                Method::IaganBp,
                bp_report(op, y, &iagan.x_hat, &iagan.z_hat, &cfg.cg)?,
            );
        }
        if wants(Method::Iagan) {
            out.insert(Method::Iagan, iagan);
        }
    }
    if wants(Method::Csgm) {
        out.insert(Method::Csgm, csgm);
    }
    Ok(out)
}

fn bp_report(
    op: &LinearOperator,
    y: &Tensor,
    x_hat: &Tensor,
    z_hat: &Tensor,
    cg: &CgConfig,
) -> Result<SolveReport> {
    let x_bp = back_project(op, x_hat, y, cg)?;
    let resid = op.apply(&x_bp)?.sub(&y.flattened())?;
    let obj = dot(&resid, &resid)?;
    Ok(SolveReport {
        x_hat: x_bp,
        z_hat: z_hat.clone(),
        theta_hat: None,
        best_objective: obj,
        objective_trace: vec![obj],
        iterations_run: 0,
        diverged_restarts: 0,
    })
}

/// Residual norm of a report's reconstruction against the observation,
/// relative to `||y||`. Used by compliance checks.
pub fn observation_residual(op: &LinearOperator, y: &Tensor, x: &Tensor) -> Result<f64> {
    let r = op.apply(x)?.sub(&y.flattened())?;
    Ok(norm2(&r) / norm2(&y.flattened()).max(f64::MIN_POSITIVE))
}
