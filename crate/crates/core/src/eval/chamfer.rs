//! Bidirectional chamfer distance between binary masks.
//!
//! `CD = 1/(2|B|) Σ_{b∈B} min_a |b-a|² + 1/(2|A|) Σ_{a∈A} min_b |a-b|²`
//! over foreground pixel coordinates. Nearest distances come from an exact
//! squared Euclidean distance transform (lower envelope of parabolas, one
//! pass per axis), so the result matches the pairwise definition.

use thiserror::Error;

use crate::par::Exec;
use crate::render::RasterImage;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricError {
    #[error("mask has no foreground pixels")]
    EmptyMask,
    #[error("image sizes differ: {0}x{1} vs {2}x{3}")]
    SizeMismatch(u32, u32, u32, u32),
}

const FAR: f64 = 1e20;

/// Squared distance from every pixel to the nearest foreground pixel,
/// row-major. All values are exact integers when any foreground exists.
pub fn squared_distance_transform(img: &RasterImage, exec: Exec) -> Vec<f64> {
    let (w, h) = (img.width as usize, img.height as usize);
    if w == 0 || h == 0 {
        return Vec::new();
    }
    // columns, stored transposed so each column is contiguous
    let mut cols = vec![0.0; w * h];
    exec.for_chunks_mut(&mut cols, h, |x, col| {
        for (y, v) in col.iter_mut().enumerate() {
            *v = if img.pixels[y * w + x] { 0.0 } else { FAR };
        }
        transform_1d(col);
    });
    let mut out = vec![0.0; w * h];
    exec.for_chunks_mut(&mut out, w, |y, row| {
        for (x, v) in row.iter_mut().enumerate() {
            *v = cols[x * h + y];
        }
        transform_1d(row);
    });
    out
}

/// In-place 1D squared distance transform of sampled function `f`.
fn transform_1d(f: &mut [f64]) {
    let n = f.len();
    let src = f.to_vec();
    let mut v = vec![0usize; n];
    let mut z = vec![0.0f64; n + 1];
    let mut k = 0;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    let sq = |q: usize| (q * q) as f64;
    let meet = |q: usize, p: usize| ((src[q] + sq(q)) - (src[p] + sq(p))) / (2.0 * (q as f64 - p as f64));
    for q in 1..n {
        // z[0] is -inf, so this stops at k = 0 at the latest
        let mut s = meet(q, v[k]);
        while s <= z[k] {
            k -= 1;
            s = meet(q, v[k]);
        }
        k += 1;
        v[k] = q;
        z[k] = s;
        z[k + 1] = f64::INFINITY;
    }
    k = 0;
    for (q, out) in f.iter_mut().enumerate() {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let d = q as f64 - v[k] as f64;
        *out = d * d + src[v[k]];
    }
}

pub fn chamfer(a: &RasterImage, b: &RasterImage) -> Result<f64, MetricError> {
    chamfer_with(a, b, Exec::default())
}

pub fn chamfer_with(a: &RasterImage, b: &RasterImage, exec: Exec) -> Result<f64, MetricError> {
    if (a.width, a.height) != (b.width, b.height) {
        return Err(MetricError::SizeMismatch(a.width, a.height, b.width, b.height));
    }
    if a.count() == 0 || b.count() == 0 {
        return Err(MetricError::EmptyMask);
    }
    Ok(0.5 * directed_mean(b, a, exec) + 0.5 * directed_mean(a, b, exec))
}

/// Mean squared distance from foreground of `from` to foreground of `to`.
fn directed_mean(from: &RasterImage, to: &RasterImage, exec: Exec) -> f64 {
    let dt = squared_distance_transform(to, exec);
    let mut sum = 0.0;
    let mut n = 0usize;
    for (i, &on) in from.pixels.iter().enumerate() {
        if on {
            sum += dt[i];
            n += 1;
        }
    }
    sum / n as f64
}
