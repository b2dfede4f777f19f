//! Config-driven experiment runner: JSON specs in, CSV/PGM artifacts out.
//!
//! A spec file fully determines every output byte (single-threaded): each
//! (compression ratio, image) cell forks its own random substream keyed by
//! the ratio value and image index, so rerunning a spec, or running a
//! narrower spec that shares a ratio, reproduces identical cells.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generator::GeneratorParams;
use crate::glo::{make_toy_dataset, train_glo, GloConfig, ToyDataset};
use crate::image::{circular_shift_rows, read_pgm, read_pgm_mask, write_pgm};
use crate::metrics::{mse, summarize, write_metrics_csv, write_summary_csv, MetricRow, SummaryRow};
use crate::operators::{
    bicubic_kernel, radial_random_mask, synthesize_observation, CgConfig, LinearOperator,
};
use crate::rep_probe::{
    error_decomposition, representation_error, representation_error_first_layer, FirstLayerMode,
    ProbeConfig,
};
use crate::rng::RngStream;
use crate::solvers::{
    back_project, csgm_solve, iagan_solve, run_method_suite, Method, SolveConfig, SolveReport,
    SuiteConfig,
};
use crate::tensor::Tensor;

/// Environment variable prepended to relative output directories.
pub const OUTPUT_ROOT_ENV: &str = "GENPRIOR_OUTPUT_ROOT";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    CsGaussian,
    CsFourier,
    SuperResolution,
    Deblur,
    Inpaint,
}

impl Task {
    pub fn as_str(&self) -> &'static str {
        match self {
            Task::CsGaussian => "cs_gaussian",
            Task::CsFourier => "cs_fourier",
            Task::SuperResolution => "super_resolution",
            Task::Deblur => "deblur",
            Task::Inpaint => "inpaint",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetSpec {
    pub seed: u64,
    pub count: usize,
    pub height: usize,
    pub width: usize,
    pub d_true: usize,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        DatasetSpec {
            seed: 0,
            count: 20,
            height: 16,
            width: 16,
            d_true: 32,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct OperatorSpec {
    /// Compression ratios for `cs_gaussian`.
    pub m_over_n: Option<Vec<f64>>,
    /// PGM mask path: frequency mask for `cs_fourier`, pixel mask for `inpaint`.
    pub mask: Option<PathBuf>,
    /// Instead of a mask file, generate one from the spec seed keeping this
    /// fraction: low-frequency-plus-random for `cs_fourier`, uniform random
    /// pixels for `inpaint`.
    pub keep_fraction: Option<f64>,
    /// Downscale factor for `super_resolution`.
    pub scale: Option<usize>,
    /// Kernel size for `deblur`.
    pub kernel: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverSpec {
    pub csgm: SolveConfig,
    pub iagan: SolveConfig,
    pub cg: CgConfig,
}

impl Default for SolverSpec {
    fn default() -> Self {
        SolverSpec {
            csgm: SolveConfig::default(),
            iagan: SolveConfig::iagan_default(),
            cg: CgConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct GloSpec {
    pub dims: Vec<usize>,
    pub epochs: usize,
    pub lr_weights: f64,
    pub lr_latents: f64,
    /// 0 means sqrt(latent dim).
    pub radius: f64,
}

impl Default for GloSpec {
    fn default() -> Self {
        let cfg = GloConfig::default();
        GloSpec {
            dims: vec![8, 32, 128, 256],
            epochs: cfg.epochs,
            lr_weights: cfg.lr_weights,
            lr_latents: cfg.lr_latents,
            radius: cfg.radius,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct ProbeSpec {
    pub lr_z: f64,
    pub lr_w1: f64,
    pub iterations: usize,
    pub restarts: usize,
}

impl Default for ProbeSpec {
    fn default() -> Self {
        let cfg = ProbeConfig::default();
        ProbeSpec {
            lr_z: cfg.lr_z,
            lr_w1: cfg.lr_w1,
            iterations: cfg.iterations,
            restarts: cfg.restarts,
        }
    }
}

impl ProbeSpec {
    fn to_config(self) -> ProbeConfig {
        ProbeConfig {
            lr_z: self.lr_z,
            lr_w1: self.lr_w1,
            iterations: self.iterations,
            restarts: self.restarts,
        }
    }
}

/// Declarative description of one experiment.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentSpec {
    pub task: Task,
    pub seed: u64,
    pub output_dir: PathBuf,
    /// Directory holding a trained generator (manifest + weights).
    pub generator: PathBuf,
    pub dataset: DatasetSpec,
    pub operator: OperatorSpec,
    pub noise_std: f64,
    pub methods: Vec<Method>,
    pub solver: SolverSpec,
    pub glo: GloSpec,
    pub probe: ProbeSpec,
    /// Vertical circular shift in pixels applied by `misalign`.
    pub misalignment_shift: i64,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        ExperimentSpec {
            task: Task::CsGaussian,
            seed: 0,
            output_dir: PathBuf::from("out"),
            generator: PathBuf::from("out/generator"),
            dataset: DatasetSpec::default(),
            operator: OperatorSpec::default(),
            noise_std: 0.0,
            methods: Method::ALL.to_vec(),
            solver: SolverSpec::default(),
            glo: GloSpec::default(),
            probe: ProbeSpec::default(),
            misalignment_shift: 0,
        }
    }
}

impl ExperimentSpec {
    pub fn load(path: &Path) -> Result<Self> {
        let raw = fs::read_to_string(path)
            .map_err(|e| Error::InvalidSpec(format!("cannot read {}: {e}", path.display())))?;
        let spec: ExperimentSpec = serde_json::from_str(&raw)
            .map_err(|e| Error::InvalidSpec(format!("{}: {e}", path.display())))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(Error::InvalidSpec("methods list is empty".into()));
        }
        if !(self.noise_std >= 0.0) {
            return Err(Error::InvalidSpec(format!(
                "noise_std must be >= 0, got {}",
                self.noise_std
            )));
        }
        if self.noise_std > 0.0 {
            if let Some(bp) = self.methods.iter().find(|m| m.is_back_projected()) {
                return Err(Error::InvalidSpec(format!(
                    "method {bp} requires noiseless observations (noise_std = {})",
                    self.noise_std
                )));
            }
        }
        let d = &self.dataset;
        if d.count == 0 || d.height < 8 || d.width < 8 || d.d_true == 0 {
            return Err(Error::InvalidSpec(format!(
                "bad dataset spec: count {} size {}x{} d_true {}",
                d.count, d.height, d.width, d.d_true
            )));
        }
        match self.task {
            Task::CsGaussian => {
                let ratios = self
                    .operator
                    .m_over_n
                    .as_ref()
                    .ok_or_else(|| Error::InvalidSpec("cs_gaussian needs operator.m_over_n".into()))?;
                if ratios.is_empty() {
                    return Err(Error::InvalidSpec("operator.m_over_n is empty".into()));
                }
                for &r in ratios {
                    if !(r > 0.0 && r <= 1.0) {
                        return Err(Error::InvalidSpec(format!(
                            "m_over_n values must lie in (0, 1], got {r}"
                        )));
                    }
                }
            }
            Task::CsFourier | Task::Inpaint => {
                if self.operator.mask.is_none() && self.operator.keep_fraction.is_none() {
                    return Err(Error::InvalidSpec(format!(
                        "{} needs operator.mask or operator.keep_fraction",
                        self.task.as_str()
                    )));
                }
                if let Some(f) = self.operator.keep_fraction {
                    if !(f > 0.0 && f <= 1.0) {
                        return Err(Error::InvalidSpec(format!(
                            "keep_fraction must lie in (0, 1], got {f}"
                        )));
                    }
                }
            }
            Task::SuperResolution => {
                let s = self
                    .operator
                    .scale
                    .ok_or_else(|| Error::InvalidSpec("super_resolution needs operator.scale".into()))?;
                if s == 0 || d.height % s != 0 || d.width % s != 0 {
                    return Err(Error::InvalidSpec(format!(
                        "scale {s} must divide the image dims {}x{}",
                        d.height, d.width
                    )));
                }
            }
            Task::Deblur => {
                let k = self
                    .operator
                    .kernel
                    .ok_or_else(|| Error::InvalidSpec("deblur needs operator.kernel".into()))?;
                if k % 2 == 0 {
                    return Err(Error::InvalidSpec(format!("blur kernel size {k} must be odd")));
                }
            }
        }
        Ok(())
    }

    /// Resolve the output directory against `GENPRIOR_OUTPUT_ROOT` when it is
    /// relative.
    pub fn resolved_output_dir(&self) -> PathBuf {
        resolve_against_root(&self.output_dir)
    }

    fn suite_config(&self) -> SuiteConfig {
        let noise_mode = self.noise_std > 0.0;
        let mut csgm = self.solver.csgm;
        let mut iagan = self.solver.iagan;
        csgm.noise_mode = noise_mode;
        iagan.noise_mode = noise_mode;
        SuiteConfig {
            csgm,
            iagan,
            cg: self.solver.cg,
            methods: self.methods.iter().copied().collect(),
        }
    }

    fn make_dataset(&self) -> Result<ToyDataset> {
        make_toy_dataset(
            self.dataset.seed,
            self.dataset.count,
            self.dataset.height,
            self.dataset.width,
            self.dataset.d_true,
        )
    }
}

pub fn resolve_against_root(path: &Path) -> PathBuf {
    if path.is_absolute() {
        return path.to_path_buf();
    }
    match std::env::var_os(OUTPUT_ROOT_ENV) {
        Some(root) => PathBuf::from(root).join(path),
        None => path.to_path_buf(),
    }
}

/// The operators a spec describes, one per compression ratio.
fn build_operators(
    spec: &ExperimentSpec,
    n: usize,
    h: usize,
    w: usize,
) -> Result<Vec<(f64, OperatorFactory)>> {
    match spec.task {
        Task::CsGaussian => {
            let ratios = spec.operator.m_over_n.clone().unwrap_or_default();
            Ok(ratios
                .into_iter()
                .map(|ratio| {
                    let m = ((ratio * n as f64).round() as usize).clamp(1, n);
                    (
                        m as f64 / n as f64,
                        OperatorFactory::GaussianRedraw { m, n },
                    )
                })
                .collect())
        }
        Task::CsFourier => {
            let mask = match &spec.operator.mask {
                Some(path) => {
                    let path = resolve_against_root(path);
                    let (mask, mh, mw) = read_pgm_mask(&path)?;
                    if (mh, mw) != (h, w) {
                        return Err(Error::InvalidSpec(format!(
                            "frequency mask is {mh}x{mw}, images are {h}x{w}"
                        )));
                    }
                    mask
                }
                None => {
                    let fraction = spec.operator.keep_fraction.unwrap();
                    radial_random_mask(
                        &mut RngStream::new(spec.seed).fork("mask"),
                        h,
                        w,
                        fraction,
                    )
                }
            };
            let op = LinearOperator::subsampled_fourier(&mask, h, w)?;
            let ratio = op.m() as f64 / n as f64;
            Ok(vec![(ratio, OperatorFactory::Fixed(op))])
        }
        Task::SuperResolution => {
            let scale = spec.operator.scale.unwrap();
            let op = LinearOperator::blur_decimate(&bicubic_kernel(scale), scale, h, w)?;
            let ratio = op.m() as f64 / n as f64;
            Ok(vec![(ratio, OperatorFactory::Fixed(op))])
        }
        Task::Deblur => {
            let k = spec.operator.kernel.unwrap();
            let op = LinearOperator::uniform_blur(k, h, w)?;
            Ok(vec![(1.0, OperatorFactory::Fixed(op))])
        }
        Task::Inpaint => {
            let indices: Vec<usize> = match &spec.operator.mask {
                Some(path) => {
                    let path = resolve_against_root(path);
                    let (mask, mh, mw) = read_pgm_mask(&path)?;
                    if (mh, mw) != (h, w) {
                        return Err(Error::InvalidSpec(format!(
                            "pixel mask is {mh}x{mw}, images are {h}x{w}"
                        )));
                    }
                    mask.iter()
                        .enumerate()
                        .filter_map(|(i, &b)| b.then_some(i))
                        .collect()
                }
                None => {
                    let fraction = spec.operator.keep_fraction.unwrap();
                    let keep = ((fraction * n as f64).round() as usize).clamp(1, n);
                    let mut pool: Vec<usize> = (0..n).collect();
                    let mut rng = RngStream::new(spec.seed).fork("mask");
                    let mut indices = Vec::with_capacity(keep);
                    for _ in 0..keep {
                        let at = (rng.next_u64() % pool.len() as u64) as usize;
                        indices.push(pool.swap_remove(at));
                    }
                    indices.sort_unstable();
                    indices
                }
            };
            let op = LinearOperator::sampling(indices, n)?;
            let ratio = op.m() as f64 / n as f64;
            Ok(vec![(ratio, OperatorFactory::Fixed(op))])
        }
    }
}

enum OperatorFactory {
    /// Fresh random matrix per cell, drawn from the cell's substream.
    GaussianRedraw { m: usize, n: usize },
    Fixed(LinearOperator),
}

impl OperatorFactory {
    fn build(&self, cell_rng: &RngStream) -> Result<LinearOperator> {
        match self {
            OperatorFactory::GaussianRedraw { m, n } => {
                LinearOperator::gaussian(&mut cell_rng.fork("op"), *m, *n)
            }
            OperatorFactory::Fixed(op) => Ok(op.clone()),
        }
    }
}

/// One solved (ratio, image) cell kept in memory for downstream analysis.
pub struct CellResult {
    pub image_id: usize,
    pub m_over_n: f64,
    pub op: LinearOperator,
    pub x_true: Tensor,
    pub y: Tensor,
    pub reports: BTreeMap<Method, SolveReport>,
}

#[derive(Debug, Clone)]
pub struct CellFailure {
    pub image_id: usize,
    pub m_over_n: f64,
    pub message: String,
}

pub struct SweepOutcome {
    pub rows: Vec<MetricRow>,
    pub summary: Vec<SummaryRow>,
    pub cells: Vec<CellResult>,
    pub failures: Vec<CellFailure>,
    pub metrics_csv: PathBuf,
    pub summary_csv: PathBuf,
}

fn ratio_label(ratio: f64) -> String {
    format!("{ratio}")
}

fn ratio_file_tag(ratio: f64) -> String {
    ratio_label(ratio).replace('.', "p").replace('-', "m")
}

/// Run the full sweep described by `spec`: per ratio and image, synthesize an
/// observation, run the method suite, and record metrics and artifacts.
pub fn run_sweep(spec: &ExperimentSpec) -> Result<SweepOutcome> {
    run_sweep_shifted(spec, 0)
}

/// Sweep over vertically shifted images (the generator is left untouched).
/// With shift 0 this is exactly `run_sweep`.
pub fn run_misalignment(spec: &ExperimentSpec) -> Result<SweepOutcome> {
    if spec.task != Task::SuperResolution {
        return Err(Error::InvalidSpec(format!(
            "misalignment runs on super_resolution, got {}",
            spec.task.as_str()
        )));
    }
    if spec.misalignment_shift.unsigned_abs() >= spec.dataset.height as u64 {
        return Err(Error::InvalidSpec(format!(
            "misalignment shift {} must be smaller than the image height {}",
            spec.misalignment_shift, spec.dataset.height
        )));
    }
    run_sweep_shifted(spec, spec.misalignment_shift)
}

fn run_sweep_shifted(spec: &ExperimentSpec, shift: i64) -> Result<SweepOutcome> {
    spec.validate()?;
    let gen = GeneratorParams::load(&resolve_against_root(&spec.generator))?;
    let dataset = spec.make_dataset()?;
    let n = dataset.h * dataset.w;
    if gen.output_dim() != n {
        return Err(Error::InvalidSpec(format!(
            "generator output dim {} does not match image size {n}",
            gen.output_dim()
        )));
    }
    let operators = build_operators(spec, n, dataset.h, dataset.w)?;
    let suite = spec.suite_config();
    let root = RngStream::new(spec.seed);

    let out_dir = spec.resolved_output_dir();
    let images_dir = out_dir.join("images");
    fs::create_dir_all(&images_dir)?;

    let mut rows = Vec::new();
    let mut cells = Vec::new();
    let mut failures = Vec::new();

    for (img_idx, raw_image) in dataset.images.iter().enumerate() {
        let x_true = if shift != 0 {
            circular_shift_rows(raw_image, dataset.h, dataset.w, shift)?
        } else {
            raw_image.clone()
        };
        write_pgm(
            &images_dir.join(format!("img{img_idx:03}_original.pgm")),
            &x_true,
            dataset.h,
            dataset.w,
        )?;

        for (ratio, factory) in &operators {
            let cell_rng = root.fork(&format!("cell/{}/{img_idx}", ratio_label(*ratio)));
            let cell = solve_cell(
                &gen,
                factory,
                &cell_rng,
                &x_true,
                spec.noise_std,
                &suite,
                *ratio,
                img_idx,
            );
            match cell {
                Ok(cell) => {
                    for (method, report) in &cell.reports {
                        rows.push(MetricRow {
                            image_id: img_idx,
                            method: *method,
                            m_over_n: *ratio,
                            noise_std: spec.noise_std,
                            mse: mse(&x_true, &report.x_hat)?,
                        });
                        write_pgm(
                            &images_dir.join(format!(
                                "img{img_idx:03}_r{}_{method}.pgm",
                                ratio_file_tag(*ratio)
                            )),
                            &report.x_hat,
                            dataset.h,
                            dataset.w,
                        )?;
                    }
                    cells.push(cell);
                }
                Err(e) => failures.push(CellFailure {
                    image_id: img_idx,
                    m_over_n: *ratio,
                    message: e.to_string(),
                }),
            }
        }
    }

    rows.sort_by(|a, b| {
        a.method
            .cmp(&b.method)
            .then(a.m_over_n.partial_cmp(&b.m_over_n).unwrap())
            .then(a.image_id.cmp(&b.image_id))
    });
    let summary = summarize(&rows)?;

    let metrics_csv = out_dir.join("metrics.csv");
    let mut buf = Vec::new();
    write_metrics_csv(&mut buf, &rows)?;
    fs::write(&metrics_csv, buf)?;

    let summary_csv = out_dir.join("summary.csv");
    let mut buf = Vec::new();
    write_summary_csv(&mut buf, &summary)?;
    fs::write(&summary_csv, buf)?;

    Ok(SweepOutcome {
        rows,
        summary,
        cells,
        failures,
        metrics_csv,
        summary_csv,
    })
}

#[allow(clippy::too_many_arguments)]
fn solve_cell(
    gen: &GeneratorParams,
    factory: &OperatorFactory,
    cell_rng: &RngStream,
    x_true: &Tensor,
    noise_std: f64,
    suite: &SuiteConfig,
    ratio: f64,
    image_id: usize,
) -> Result<CellResult> {
    let op = factory.build(cell_rng)?;
    let y = synthesize_observation(&op, x_true, noise_std, &mut cell_rng.fork("noise"))?;
    let reports = run_method_suite(gen, &op, &y, suite, &cell_rng.fork("solve"))?;
    Ok(CellResult {
        image_id,
        m_over_n: ratio,
        op,
        x_true: x_true.clone(),
        y,
        reports,
    })
}

pub struct TrainOutcome {
    pub generator_dir: PathBuf,
    pub loss_csv: PathBuf,
    pub final_loss: f64,
    pub epochs_run: usize,
}

/// Train the generator prior described by `spec.glo` on the spec's toy
/// dataset; writes the generator directory and a loss-trace CSV.
pub fn run_train(spec: &ExperimentSpec) -> Result<TrainOutcome> {
    spec.validate()?;
    let dataset = spec.make_dataset()?;
    let cfg = GloConfig {
        epochs: spec.glo.epochs,
        lr_weights: spec.glo.lr_weights,
        lr_latents: spec.glo.lr_latents,
        radius: spec.glo.radius,
    };
    if spec.glo.dims.last() != Some(&(dataset.h * dataset.w)) {
        return Err(Error::InvalidSpec(format!(
            "glo.dims {:?} must end at the image size {}",
            spec.glo.dims,
            dataset.h * dataset.w
        )));
    }
    let rng = RngStream::new(spec.seed).fork("train");
    let report = train_glo(&dataset, &spec.glo.dims, &cfg, &rng)?;

    let generator_dir = resolve_against_root(&spec.generator);
    report.params.save(&generator_dir, Some(spec.seed))?;

    let out_dir = spec.resolved_output_dir();
    fs::create_dir_all(&out_dir)?;
    let loss_csv = out_dir.join("loss_trace.csv");
    let mut buf = String::from("epoch,loss\n");
    for (epoch, loss) in report.loss_trace.iter().enumerate() {
        buf.push_str(&format!("{epoch},{loss}\n"));
    }
    fs::write(&loss_csv, buf)?;

    Ok(TrainOutcome {
        generator_dir,
        loss_csv,
        final_loss: *report.loss_trace.last().unwrap(),
        epochs_run: report.loss_trace.len() - 1,
    })
}

pub struct ProbeRow {
    pub image_id: usize,
    pub e_rep: f64,
    pub e_rep_tilde: Option<f64>,
    /// (method, row-space error, null-space error).
    pub per_method: Vec<(Method, f64, f64)>,
}

pub struct ProbeOutcome {
    pub rows: Vec<ProbeRow>,
    pub csv: PathBuf,
    pub failures: Vec<CellFailure>,
}

/// Per-image representation errors plus the row/null error split of every
/// requested method, under the spec's (single) operator configuration.
pub fn run_probe(spec: &ExperimentSpec) -> Result<ProbeOutcome> {
    spec.validate()?;
    let gen = GeneratorParams::load(&resolve_against_root(&spec.generator))?;
    let dataset = spec.make_dataset()?;
    let n = dataset.h * dataset.w;
    let operators = build_operators(spec, n, dataset.h, dataset.w)?;
    if operators.len() != 1 {
        return Err(Error::InvalidSpec(format!(
            "probe needs exactly one operator configuration, got {} ratios",
            operators.len()
        )));
    }
    let (ratio, factory) = &operators[0];
    let suite = spec.suite_config();
    let probe_cfg = spec.probe.to_config();
    let can_adapt_first_layer = gen.dims()[0] < gen.dims()[1];
    let root = RngStream::new(spec.seed);

    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for (img_idx, x_true) in dataset.images.iter().enumerate() {
        let cell_rng = root.fork(&format!("cell/{}/{img_idx}", ratio_label(*ratio)));
        let outcome = probe_image(
            &gen,
            factory,
            &cell_rng,
            &root.fork(&format!("probe/{img_idx}")),
            x_true,
            spec,
            &suite,
            &probe_cfg,
            can_adapt_first_layer,
            img_idx,
        );
        match outcome {
            Ok(row) => rows.push(row),
            Err(e) => failures.push(CellFailure {
                image_id: img_idx,
                m_over_n: *ratio,
                message: e.to_string(),
            }),
        }
    }

    let out_dir = spec.resolved_output_dir();
    fs::create_dir_all(&out_dir)?;
    let csv = out_dir.join("probe.csv");
    let mut buf = String::from("image_id,e_rep,e_rep_tilde");
    for m in &spec.methods {
        buf.push_str(&format!(",row_err_{m},null_err_{m}"));
    }
    buf.push('\n');
    for row in &rows {
        buf.push_str(&format!("{},{}", row.image_id, row.e_rep));
        match row.e_rep_tilde {
            Some(t) => buf.push_str(&format!(",{t}")),
            None => buf.push(','),
        }
        for (_, row_err, null_err) in &row.per_method {
            buf.push_str(&format!(",{row_err},{null_err}"));
        }
        buf.push('\n');
    }
    fs::write(&csv, buf)?;

    Ok(ProbeOutcome {
        rows,
        csv,
        failures,
    })
}

#[allow(clippy::too_many_arguments)]
fn probe_image(
    gen: &GeneratorParams,
    factory: &OperatorFactory,
    cell_rng: &RngStream,
    probe_rng: &RngStream,
    x_true: &Tensor,
    spec: &ExperimentSpec,
    suite: &SuiteConfig,
    probe_cfg: &ProbeConfig,
    can_adapt_first_layer: bool,
    image_id: usize,
) -> Result<ProbeRow> {
    let op = factory.build(cell_rng)?;
    let y = synthesize_observation(&op, x_true, spec.noise_std, &mut cell_rng.fork("noise"))?;
    let reports = run_method_suite(gen, &op, &y, suite, &cell_rng.fork("solve"))?;

    let (e_rep, e_rep_tilde) = if can_adapt_first_layer {
        let report = representation_error_first_layer(
            gen,
            x_true,
            probe_cfg,
            &probe_rng.fork("rep"),
            FirstLayerMode::JointZW1,
        )?;
        (report.e_rep, report.e_rep_tilde)
    } else {
        let report = representation_error(gen, x_true, probe_cfg, &probe_rng.fork("rep"), None)?;
        (report.e_rep, None)
    };

    let mut per_method = Vec::new();
    for method in &spec.methods {
        match reports.get(method) {
            Some(report) => {
                let (row_err, null_err) =
                    error_decomposition(&op, x_true, &report.x_hat, &suite.cg)?;
                per_method.push((*method, row_err, null_err));
            }
            None => per_method.push((*method, f64::NAN, f64::NAN)),
        }
    }
    Ok(ProbeRow {
        image_id,
        e_rep,
        e_rep_tilde,
        per_method,
    })
}

/// Operator selection for a one-off solve.
#[derive(Debug, Clone)]
pub enum SolveOperator {
    Gaussian { m_over_n: f64 },
    Fourier { mask: PathBuf },
    SuperResolution { scale: usize },
    Blur { kernel: usize },
    Inpaint { mask: PathBuf },
}

#[derive(Debug, Clone)]
pub struct SolveArgs {
    pub generator: PathBuf,
    pub image: PathBuf,
    pub operator: SolveOperator,
    pub noise_std: f64,
    pub methods: Vec<Method>,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub csgm: SolveConfig,
    pub iagan: SolveConfig,
    pub cg: CgConfig,
}

#[derive(Debug, Serialize)]
pub struct SolveMethodReport {
    pub best_objective: f64,
    pub iterations_run: usize,
    pub trace_len: usize,
    pub seconds: f64,
    pub mse_vs_input: f64,
}

#[derive(Debug, Serialize)]
pub struct SolveReportJson {
    pub image: String,
    pub operator: String,
    pub m: usize,
    pub n: usize,
    pub noise_std: f64,
    pub seed: u64,
    pub methods: BTreeMap<String, SolveMethodReport>,
}

pub struct SolveOutcome {
    pub report_json: PathBuf,
    pub reports: BTreeMap<Method, SolveReport>,
}

/// Solve a single observed image end to end and write per-method
/// reconstructions, objective traces, and a JSON report.
pub fn run_single_solve(args: &SolveArgs) -> Result<SolveOutcome> {
    if args.methods.is_empty() {
        return Err(Error::InvalidSpec("methods list is empty".into()));
    }
    if args.noise_std > 0.0 {
        if let Some(bp) = args.methods.iter().find(|m| m.is_back_projected()) {
            return Err(Error::InvalidSpec(format!(
                "method {bp} requires noiseless observations"
            )));
        }
    }
    let gen = GeneratorParams::load(&resolve_against_root(&args.generator))?;
    let (image, h, w) = read_pgm(&args.image)?;
    let n = h * w;
    if gen.output_dim() != n {
        return Err(Error::InvalidSpec(format!(
            "generator output dim {} does not match image size {n}",
            gen.output_dim()
        )));
    }
    let op = match &args.operator {
        SolveOperator::Gaussian { m_over_n } => {
            if !(*m_over_n > 0.0 && *m_over_n <= 1.0) {
                return Err(Error::InvalidSpec(format!(
                    "m_over_n must lie in (0, 1], got {m_over_n}"
                )));
            }
            let m = ((m_over_n * n as f64).round() as usize).clamp(1, n);
            LinearOperator::gaussian(&mut RngStream::new(args.seed).fork("op"), m, n)?
        }
        SolveOperator::Fourier { mask } => {
            let (mask, mh, mw) = read_pgm_mask(mask)?;
            if (mh, mw) != (h, w) {
                return Err(Error::InvalidSpec(format!(
                    "frequency mask is {mh}x{mw}, image is {h}x{w}"
                )));
            }
            LinearOperator::subsampled_fourier(&mask, h, w)?
        }
        SolveOperator::SuperResolution { scale } => {
            LinearOperator::blur_decimate(&bicubic_kernel(*scale), *scale, h, w)?
        }
        SolveOperator::Blur { kernel } => LinearOperator::uniform_blur(*kernel, h, w)?,
        SolveOperator::Inpaint { mask } => {
            let (mask, mh, mw) = read_pgm_mask(mask)?;
            if (mh, mw) != (h, w) {
                return Err(Error::InvalidSpec(format!(
                    "pixel mask is {mh}x{mw}, image is {h}x{w}"
                )));
            }
            let indices: Vec<usize> = mask
                .iter()
                .enumerate()
                .filter_map(|(i, &b)| b.then_some(i))
                .collect();
            LinearOperator::sampling(indices, n)?
        }
    };

    let noise_mode = args.noise_std > 0.0;
    let mut csgm_cfg = args.csgm;
    let mut iagan_cfg = args.iagan;
    csgm_cfg.noise_mode = noise_mode;
    iagan_cfg.noise_mode = noise_mode;

    let root = RngStream::new(args.seed);
    let y = synthesize_observation(&op, &image, args.noise_std, &mut root.fork("noise"))?;

    let out_dir = resolve_against_root(&args.output_dir);
    fs::create_dir_all(&out_dir)?;

    let mut reports: BTreeMap<Method, SolveReport> = BTreeMap::new();
    let mut timings: BTreeMap<Method, f64> = BTreeMap::new();

    let t0 = Instant::now();
    let csgm = csgm_solve(&gen, &op, &y, &csgm_cfg, &root.fork("csgm"))?;
    let csgm_seconds = t0.elapsed().as_secs_f64();

    let wants = |m: Method| args.methods.contains(&m);
    if wants(Method::CsgmBp) {
        let t = Instant::now();
        let x_bp = back_project(&op, &csgm.x_hat, &y, &args.cg)?;
        timings.insert(Method::CsgmBp, t.elapsed().as_secs_f64());
        reports.insert(
            Method::CsgmBp,
            bp_as_report(&op, &y, x_bp, &csgm.z_hat)?,
        );
    }
    if wants(Method::Iagan) || wants(Method::IaganBp) {
        let t = Instant::now();
        let iagan = iagan_solve(&gen, &op, &y, &csgm.z_hat, &iagan_cfg)?;
        let iagan_seconds = t.elapsed().as_secs_f64();
        if wants(Method::IaganBp) {
            let t = Instant::now();
            let x_bp = back_project(&op, &iagan.x_hat, &y, &args.cg)?;
            timings.insert(Method::IaganBp, t.elapsed().as_secs_f64());
            reports.insert(
                Method::IaganBp,
                bp_as_report(&op, &y, x_bp, &iagan.z_hat)?,
            );
        }
        if wants(Method::Iagan) {
            timings.insert(Method::Iagan, iagan_seconds);
            reports.insert(Method::Iagan, iagan);
        }
    }
    if wants(Method::Csgm) {
        timings.insert(Method::Csgm, csgm_seconds);
        reports.insert(Method::Csgm, csgm);
    }

    let mut json_methods = BTreeMap::new();
    for (method, report) in &reports {
        write_pgm(
            &out_dir.join(format!("{method}.pgm")),
            &report.x_hat,
            h,
            w,
        )?;
        let mut trace = String::from("iter,objective\n");
        for (i, obj) in report.objective_trace.iter().enumerate() {
            trace.push_str(&format!("{i},{obj}\n"));
        }
        fs::write(out_dir.join(format!("trace_{method}.csv")), trace)?;
        json_methods.insert(
            method.as_str().to_string(),
            SolveMethodReport {
                best_objective: report.best_objective,
                iterations_run: report.iterations_run,
                trace_len: report.objective_trace.len(),
                seconds: timings.get(method).copied().unwrap_or(0.0),
                mse_vs_input: mse(&image, &report.x_hat)?,
            },
        );
    }
    let report_json = out_dir.join("report.json");
    let payload = SolveReportJson {
        image: args.image.display().to_string(),
        operator: op.kind_name().to_string(),
        m: op.m(),
        n: op.n(),
        noise_std: args.noise_std,
        seed: args.seed,
        methods: json_methods,
    };
    let json = serde_json::to_string_pretty(&payload)
        .map_err(|e| Error::Parse(format!("report serialization: {e}")))?;
    fs::write(&report_json, json)?;

    Ok(SolveOutcome {
        report_json,
        reports,
    })
}

fn bp_as_report(
    op: &LinearOperator,
    y: &Tensor,
    x_bp: Tensor,
    z_hat: &Tensor,
) -> Result<SolveReport> {
    let resid = op.apply(&x_bp)?.sub(&y.flattened())?;
    let obj = crate::tensor::dot(&resid, &resid)?;
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

/// Compare two images (or directories of images, paired by sorted filename);
/// returns per-pair MSEs and the aggregate PSNR.
pub fn run_metrics(truth: &Path, estimate: &Path) -> Result<(Vec<(String, f64)>, f64)> {
    let pairs: Vec<(String, PathBuf, PathBuf)> = if truth.is_dir() {
        if !estimate.is_dir() {
            return Err(Error::InvalidArgument(
                "either compare two files or two directories".into(),
            ));
        }
        let mut names: Vec<String> = fs::read_dir(truth)?
            .filter_map(|e| e.ok())
            .map(|e| e.file_name().to_string_lossy().into_owned())
            .filter(|n| n.ends_with(".pgm"))
            .collect();
        names.sort();
        names
            .into_iter()
            .filter(|n| estimate.join(n).exists())
            .map(|n| (n.clone(), truth.join(&n), estimate.join(&n)))
            .collect()
    } else {
        vec![(
            truth.file_name().unwrap_or_default().to_string_lossy().into_owned(),
            truth.to_path_buf(),
            estimate.to_path_buf(),
        )]
    };
    if pairs.is_empty() {
        return Err(Error::InvalidArgument("no image pairs to compare".into()));
    }
    let mut rows = Vec::with_capacity(pairs.len());
    let mut mses = Vec::with_capacity(pairs.len());
    for (name, a, b) in pairs {
        let (ia, ha, wa) = read_pgm(&a)?;
        let (ib, hb, wb) = read_pgm(&b)?;
        if (ha, wa) != (hb, wb) {
            return Err(Error::ShapeMismatch {
                context: "metrics pair",
                expected: vec![ha, wa],
                got: vec![hb, wb],
            });
        }
        let m = mse(&ia, &ib)?;
        mses.push(m);
        rows.push((name, m));
    }
    let psnr = crate::metrics::psnr_avg(&mses)?;
    Ok((rows, psnr))
}

/// Write `rows` (as produced by `run_metrics`) plus a summary line as CSV.
pub fn write_pair_metrics_csv<W: Write>(
    w: &mut W,
    rows: &[(String, f64)],
    psnr: f64,
) -> Result<()> {
    writeln!(w, "image_id,mse")?;
    for (name, m) in rows {
        writeln!(w, "{name},{m}")?;
    }
    let mean = rows.iter().map(|(_, m)| *m).sum::<f64>() / rows.len() as f64;
    writeln!(w, "mse_mean,{mean}")?;
    writeln!(w, "psnr_avg_db,{psnr}")?;
    Ok(())
}
