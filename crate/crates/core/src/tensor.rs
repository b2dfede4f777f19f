//! Dense row-major tensors of f64 and the vector/matrix primitives built on
//! them. Shapes must match exactly everywhere; there is no broadcasting.
//! Summations run left-to-right so results are reproducible bit for bit.
//!
//! Tensors also serialize to the "IATF1" container: the magic bytes
//! `IATF1\n`, one ASCII line with the rank followed by the dims
//! (space-separated), then the raw little-endian f64 payload.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

fn check_same_shape(context: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape != b.shape {
        return Err(Error::ShapeMismatch {
            context,
            expected: a.shape.clone(),
            got: b.shape.clone(),
        });
    }
    Ok(())
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.iter().any(|&d| d == 0) {
            return Err(Error::InvalidArgument(format!(
                "tensor shape {shape:?} has a zero dimension"
            )));
        }
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::ShapeMismatch {
                context: "Tensor::new",
                expected: vec![expected],
                got: vec![data.len()],
            });
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Tensor::full(shape, 0.0)
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        assert!(
            shape.iter().all(|&d| d > 0),
            "tensor shape {shape:?} has a zero dimension"
        );
        let len = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; len],
        }
    }

    /// 1-D tensor owning `data`.
    pub fn from_vec(data: Vec<f64>) -> Self {
        let len = data.len();
        assert!(len > 0, "empty tensor");
        Tensor {
            shape: vec![len],
            data,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn reshape(&self, shape: Vec<usize>) -> Result<Tensor> {
        Tensor::new(shape, self.data.clone())
    }

    /// Same data viewed as a vector.
    pub fn flattened(&self) -> Tensor {
        Tensor {
            shape: vec![self.data.len()],
            data: self.data.clone(),
        }
    }

    pub fn add(&self, rhs: &Tensor) -> Result<Tensor> {
        check_same_shape("add", self, rhs)?;
        let data = self
            .data
            .iter()
            .zip(&rhs.data)
            .map(|(a, b)| a + b)
            .collect();
        Ok(Tensor {
            shape: self.shape.clone(),
            data,
        })
    }

    pub fn sub(&self, rhs: &Tensor) -> Result<Tensor> {
        check_same_shape("sub", self, rhs)?;
        let data = self
            .data
            .iter()
            .zip(&rhs.data)
            .map(|(a, b)| a - b)
            .collect();
        Ok(Tensor {
            shape: self.shape.clone(),
            data,
        })
    }

    pub fn scale(&self, alpha: f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|a| alpha * a).collect(),
        }
    }

    pub fn clamp(&self, lo: f64, hi: f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|a| a.clamp(lo, hi)).collect(),
        }
    }

    pub fn min_value(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_value(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|a| a.is_finite())
    }

    pub fn write_iatf<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(b"IATF1\n")?;
        let mut header = format!("{}", self.shape.len());
        for d in &self.shape {
            header.push(' ');
            header.push_str(&d.to_string());
        }
        header.push('\n');
        w.write_all(header.as_bytes())?;
        for v in &self.data {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_iatf<R: Read>(r: &mut R) -> Result<Tensor> {
        let mut magic = [0u8; 6];
        r.read_exact(&mut magic)?;
        if &magic != b"IATF1\n" {
            return Err(Error::Parse("bad IATF1 magic".into()));
        }
        let mut header = Vec::new();
        loop {
            let mut byte = [0u8; 1];
            r.read_exact(&mut byte)?;
            if byte[0] == b'\n' {
                break;
            }
            if header.len() > 4096 {
                return Err(Error::Parse("IATF1 header too long".into()));
            }
            header.push(byte[0]);
        }
        let header = String::from_utf8(header).map_err(|_| Error::Parse("IATF1 header not ASCII".into()))?;
        let mut fields = header.split_whitespace();
        let rank: usize = fields
            .next()
            .ok_or_else(|| Error::Parse("IATF1 header missing rank".into()))?
            .parse()
            .map_err(|_| Error::Parse("IATF1 rank not an integer".into()))?;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            let d: usize = fields
                .next()
                .ok_or_else(|| Error::Parse("IATF1 header missing dims".into()))?
                .parse()
                .map_err(|_| Error::Parse("IATF1 dim not an integer".into()))?;
            shape.push(d);
        }
        if fields.next().is_some() {
            return Err(Error::Parse("IATF1 header has trailing fields".into()));
        }
        let len: usize = shape.iter().product();
        let mut data = Vec::with_capacity(len);
        let mut buf = [0u8; 8];
        for _ in 0..len {
            r.read_exact(&mut buf)?;
            data.push(f64::from_le_bytes(buf));
        }
        Tensor::new(shape, data)
    }

    pub fn save_iatf(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_iatf(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load_iatf(path: &Path) -> Result<Tensor> {
        let mut r = BufReader::new(File::open(path)?);
        Tensor::read_iatf(&mut r)
    }
}

/// Inner product, summed left-to-right.
pub fn dot(a: &Tensor, b: &Tensor) -> Result<f64> {
    check_same_shape("dot", a, b)?;
    let mut acc = 0.0;
    for (x, y) in a.data.iter().zip(&b.data) {
        acc += x * y;
    }
    Ok(acc)
}

/// `alpha * x + y`.
pub fn axpy(alpha: f64, x: &Tensor, y: &Tensor) -> Result<Tensor> {
    check_same_shape("axpy", x, y)?;
    let data = x
        .data
        .iter()
        .zip(&y.data)
        .map(|(xi, yi)| alpha * xi + yi)
        .collect();
    Ok(Tensor {
        shape: x.shape.clone(),
        data,
    })
}

/// Euclidean norm.
pub fn norm2(a: &Tensor) -> f64 {
    let mut acc = 0.0;
    for x in &a.data {
        acc += x * x;
    }
    acc.sqrt()
}

/// `w` is `[rows, cols]`, `x` is `[cols]`; returns `[rows]`.
pub fn matvec(w: &Tensor, x: &Tensor) -> Result<Tensor> {
    let (rows, cols) = matrix_dims("matvec", w)?;
    if x.shape != [cols] {
        return Err(Error::ShapeMismatch {
            context: "matvec",
            expected: vec![cols],
            got: x.shape.clone(),
        });
    }
    let mut out = vec![0.0; rows];
    for (r, out_r) in out.iter_mut().enumerate() {
        let row = &w.data[r * cols..(r + 1) * cols];
        let mut acc = 0.0;
        for (wv, xv) in row.iter().zip(&x.data) {
            acc += wv * xv;
        }
        *out_r = acc;
    }
    Ok(Tensor {
        shape: vec![rows],
        data: out,
    })
}

/// `w` is `[rows, cols]`, `y` is `[rows]`; returns `wᵀ y` of shape `[cols]`.
pub fn matvec_transpose(w: &Tensor, y: &Tensor) -> Result<Tensor> {
    let (rows, cols) = matrix_dims("matvec_transpose", w)?;
    if y.shape != [rows] {
        return Err(Error::ShapeMismatch {
            context: "matvec_transpose",
            expected: vec![rows],
            got: y.shape.clone(),
        });
    }
    let mut out = vec![0.0; cols];
    for r in 0..rows {
        let row = &w.data[r * cols..(r + 1) * cols];
        let yr = y.data[r];
        for (o, wv) in out.iter_mut().zip(row) {
            *o += yr * wv;
        }
    }
    Ok(Tensor {
        shape: vec![cols],
        data: out,
    })
}

/// Outer product `u vᵀ` with shape `[u.len(), v.len()]`.
pub fn outer(u: &Tensor, v: &Tensor) -> Tensor {
    let rows = u.len();
    let cols = v.len();
    let mut data = Vec::with_capacity(rows * cols);
    for uv in &u.data {
        for vv in &v.data {
            data.push(uv * vv);
        }
    }
    Tensor {
        shape: vec![rows, cols],
        data,
    }
}

fn matrix_dims(context: &'static str, w: &Tensor) -> Result<(usize, usize)> {
    if w.shape.len() != 2 {
        return Err(Error::InvalidArgument(format!(
            "{context}: expected a rank-2 tensor, got shape {:?}",
            w.shape
        )));
    }
    Ok((w.shape[0], w.shape[1]))
}
