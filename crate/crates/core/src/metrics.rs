//! Reconstruction quality metrics and their CSV schemas.
//!
//! MSE is reported on the 0..255 scale after clamping images to [0,1], and
//! aggregate PSNR is computed from the *averaged* MSE, never by averaging
//! per-image PSNRs.

use std::io::Write;

use crate::error::{Error, Result};
use crate::solvers::Method;
use crate::tensor::Tensor;

/// Aggregate PSNR is capped here; it applies when the mean MSE is zero.
pub const PSNR_CAP_DB: f64 = 100.0;

/// Mean squared error between two [0,1] images on the 0..255 scale.
pub fn mse(a: &Tensor, b: &Tensor) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch {
            context: "mse",
            expected: a.shape().to_vec(),
            got: b.shape().to_vec(),
        });
    }
    let mut acc = 0.0;
    for (x, y) in a.data().iter().zip(b.data()) {
        let d = 255.0 * (x.clamp(0.0, 1.0) - y.clamp(0.0, 1.0));
        acc += d * d;
    }
    Ok(acc / a.len() as f64)
}

/// Aggregate PSNR in dB: `10 log10(255² / mean(mses))`, capped at
/// [`PSNR_CAP_DB`].
pub fn psnr_avg(mses: &[f64]) -> Result<f64> {
    if mses.is_empty() {
        return Err(Error::InvalidArgument("psnr_avg of an empty list".into()));
    }
    if mses.iter().any(|&m| !(m >= 0.0)) {
        return Err(Error::InvalidArgument("psnr_avg needs non-negative MSEs".into()));
    }
    let mean = mses.iter().sum::<f64>() / mses.len() as f64;
    if mean == 0.0 {
        return Ok(PSNR_CAP_DB);
    }
    Ok((10.0 * (255.0f64 * 255.0 / mean).log10()).min(PSNR_CAP_DB))
}

/// One (image, method) measurement.
#[derive(Debug, Clone)]
pub struct MetricRow {
    pub image_id: usize,
    pub method: Method,
    pub m_over_n: f64,
    pub noise_std: f64,
    pub mse: f64,
}

/// One (method, compression ratio) aggregate.
#[derive(Debug, Clone)]
pub struct SummaryRow {
    pub method: Method,
    pub m_over_n: f64,
    pub noise_std: f64,
    pub mse_mean: f64,
    pub psnr_avg_db: f64,
}

pub fn write_metrics_csv<W: Write>(w: &mut W, rows: &[MetricRow]) -> Result<()> {
    writeln!(w, "image_id,method,m_over_n,noise_std,mse")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{}",
            r.image_id, r.method, r.m_over_n, r.noise_std, r.mse
        )?;
    }
    Ok(())
}

pub fn write_summary_csv<W: Write>(w: &mut W, rows: &[SummaryRow]) -> Result<()> {
    writeln!(w, "method,m_over_n,noise_std,mse_mean,psnr_avg_db")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{}",
            r.method, r.m_over_n, r.noise_std, r.mse_mean, r.psnr_avg_db
        )?;
    }
    Ok(())
}

/// Aggregate per-image rows into summary rows, sorted by (method, m_over_n).
pub fn summarize(rows: &[MetricRow]) -> Result<Vec<SummaryRow>> {
    use std::collections::BTreeMap;
    let mut groups: BTreeMap<(Method, u64), (f64, Vec<f64>)> = BTreeMap::new();
    for r in rows {
        let key = (r.method, r.m_over_n.to_bits());
        let entry = groups.entry(key).or_insert((r.noise_std, Vec::new()));
        entry.1.push(r.mse);
    }
    let mut out = Vec::with_capacity(groups.len());
    for ((method, ratio_bits), (noise_std, mses)) in groups {
        let mse_mean = mses.iter().sum::<f64>() / mses.len() as f64;
        out.push(SummaryRow {
            method,
            m_over_n: f64::from_bits(ratio_bits),
            noise_std,
            mse_mean,
            psnr_avg_db: psnr_avg(&mses)?,
        });
    }
    out.sort_by(|a, b| {
        a.method
            .cmp(&b.method)
            .then(a.m_over_n.partial_cmp(&b.m_over_n).unwrap())
    });
    Ok(out)
}
