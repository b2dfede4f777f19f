//! 2-D correlation with reflective (mirrored, edge not repeated... see
//! `reflect`) boundary handling, plus its exact adjoint.
//!
//! The adjoint is implemented as a scatter over the identical index mapping
//! used by the forward gather, so `<Kx, u> == <x, K'u>` holds to rounding
//! error for any kernel and any boundary overshoot.

/// Half-sample symmetric reflection: ... 2 1 0 | 0 1 2 ... n-1 | n-1 n-2 ...
fn reflect(mut i: isize, n: usize) -> usize {
    let n = n as isize;
    loop {
        if i < 0 {
            i = -i - 1;
        } else if i >= n {
            i = 2 * n - i - 1;
        } else {
            return i as usize;
        }
    }
}

/// Centered correlation of `x` (h x w) with `kernel` (kh x kw, both odd).
pub(crate) fn correlate2_reflect(
    x: &[f64],
    h: usize,
    w: usize,
    kernel: &[f64],
    kh: usize,
    kw: usize,
) -> Vec<f64> {
    debug_assert!(kh % 2 == 1 && kw % 2 == 1);
    let (ch, cw) = ((kh / 2) as isize, (kw / 2) as isize);
    let mut out = vec![0.0; h * w];
    for i in 0..h {
        for j in 0..w {
            let mut acc = 0.0;
            for u in 0..kh {
                let si = reflect(i as isize + u as isize - ch, h);
                for v in 0..kw {
                    let sj = reflect(j as isize + v as isize - cw, w);
                    acc += kernel[u * kw + v] * x[si * w + sj];
                }
            }
            out[i * w + j] = acc;
        }
    }
    out
}

/// Exact transpose of `correlate2_reflect`: scatter `y` back through the
/// same index map.
pub(crate) fn correlate2_reflect_adjoint(
    y: &[f64],
    h: usize,
    w: usize,
    kernel: &[f64],
    kh: usize,
    kw: usize,
) -> Vec<f64> {
    debug_assert!(kh % 2 == 1 && kw % 2 == 1);
    let (ch, cw) = ((kh / 2) as isize, (kw / 2) as isize);
    let mut out = vec![0.0; h * w];
    for i in 0..h {
        for j in 0..w {
            let yv = y[i * w + j];
            if yv == 0.0 {
                continue;
            }
            for u in 0..kh {
                let si = reflect(i as isize + u as isize - ch, h);
                for v in 0..kw {
                    let sj = reflect(j as isize + v as isize - cw, w);
                    out[si * w + sj] += kernel[u * kw + v] * yv;
                }
            }
        }
    }
    out
}
