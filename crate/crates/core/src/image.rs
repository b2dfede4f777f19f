//! 8-bit binary PGM (P5) import/export and small image utilities.
//!
//! Images travel through the crate as flat tensors with values in [0,1];
//! quantization to 8 bits happens only at export time.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Write a [0,1]-valued image as binary PGM, clamping then rounding to 8 bits.
pub fn write_pgm(path: &Path, img: &Tensor, h: usize, w: usize) -> Result<()> {
    if img.len() != h * w {
        return Err(Error::ShapeMismatch {
            context: "write_pgm",
            expected: vec![h * w],
            got: img.shape().to_vec(),
        });
    }
    let mut out = BufWriter::new(File::create(path)?);
    write!(out, "P5\n{w} {h}\n255\n")?;
    let bytes: Vec<u8> = img
        .data()
        .iter()
        .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    out.write_all(&bytes)?;
    out.flush()?;
    Ok(())
}

/// Read a binary PGM into a [0,1]-valued flat tensor plus its dimensions.
pub fn read_pgm(path: &Path) -> Result<(Tensor, usize, usize)> {
    let mut reader = BufReader::new(File::open(path)?);
    let mut raw = Vec::new();
    reader.read_to_end(&mut raw)?;
    parse_pgm(&raw)
}

fn parse_pgm(raw: &[u8]) -> Result<(Tensor, usize, usize)> {
    if raw.len() < 2 || &raw[0..2] != b"P5" {
        return Err(Error::Parse("not a binary PGM (P5) file".into()));
    }
    let mut pos = 2;
    let mut fields = Vec::with_capacity(3);
    while fields.len() < 3 {
        while pos < raw.len() && raw[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < raw.len() && raw[pos] == b'#' {
            while pos < raw.len() && raw[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < raw.len() && !raw[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Parse("truncated PGM header".into()));
        }
        let field = std::str::from_utf8(&raw[start..pos])
            .map_err(|_| Error::Parse("PGM header not ASCII".into()))?;
        fields.push(
            field
                .parse::<usize>()
                .map_err(|_| Error::Parse(format!("bad PGM header field {field:?}")))?,
        );
    }
    // Exactly one whitespace byte separates the header from the payload.
    pos += 1;
    let (w, h, maxval) = (fields[0], fields[1], fields[2]);
    if maxval == 0 || maxval > 255 {
        return Err(Error::Parse(format!("unsupported PGM maxval {maxval}")));
    }
    if w == 0 || h == 0 {
        return Err(Error::Parse("PGM with zero dimension".into()));
    }
    if raw.len() < pos + w * h {
        return Err(Error::Parse("PGM payload truncated".into()));
    }
    let data: Vec<f64> = raw[pos..pos + w * h]
        .iter()
        .map(|&b| f64::from(b) / maxval as f64)
        .collect();
    Ok((Tensor::new(vec![h * w], data)?, h, w))
}

/// Read a PGM as a boolean mask: nonzero pixels are sampled.
pub fn read_pgm_mask(path: &Path) -> Result<(Vec<bool>, usize, usize)> {
    let (img, h, w) = read_pgm(path)?;
    Ok((img.data().iter().map(|&v| v > 0.0).collect(), h, w))
}

/// Write a boolean mask as a 0/255 PGM.
pub fn write_pgm_mask(path: &Path, mask: &[bool], h: usize, w: usize) -> Result<()> {
    let img = Tensor::new(
        vec![h * w],
        mask.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
    )?;
    write_pgm(path, &img, h, w)
}

/// Circular vertical shift: row `i` of the output is row `i - shift` of the
/// input, wrapped. A shift of `h` (or any multiple) is the identity.
pub fn circular_shift_rows(img: &Tensor, h: usize, w: usize, shift: i64) -> Result<Tensor> {
    if img.len() != h * w {
        return Err(Error::ShapeMismatch {
            context: "circular_shift_rows",
            expected: vec![h * w],
            got: img.shape().to_vec(),
        });
    }
    let mut out = vec![0.0; h * w];
    for i in 0..h {
        let src = (i as i64 - shift).rem_euclid(h as i64) as usize;
        out[i * w..(i + 1) * w].copy_from_slice(&img.data()[src * w..(src + 1) * w]);
    }
    Tensor::new(vec![h * w], out)
}
