//! Separable Gaussian blur with reflect padding, and its exact adjoint.

use crate::error::{Error, Result};
use crate::image::Image;

#[derive(Debug, Clone, PartialEq)]
pub struct BlurKernel {
    size: usize,
    sigma: f64,
    weights: Vec<f64>,
}

impl BlurKernel {
    pub fn new(size: usize, sigma: f64) -> Result<Self> {
        if size == 0 || size % 2 == 0 {
            return Err(Error::InvalidKernel(format!("size must be odd and positive, got {size}")));
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidKernel(format!("sigma must be positive, got {sigma}")));
        }
        let r = size / 2;
        // Build one half and mirror it so the weights are exactly symmetric.
        let half: Vec<f64> = (0..=r)
            .map(|k| {
                let d = k as f64;
                (-d * d / (2.0 * sigma * sigma)).exp()
            })
            .collect();
        let total: f64 = half[0] + 2.0 * half[1..].iter().sum::<f64>();
        let mut weights = vec![0.0; size];
        for k in 0..=r {
            weights[r + k] = half[k] / total;
            weights[r - k] = half[k] / total;
        }
        Ok(Self { size, sigma, weights })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn radius(&self) -> usize {
        self.size / 2
    }
}

/// Mirror an out-of-range index back into `0..n` without repeating the edge
/// sample (`-1 -> 1`, `n -> n-2`).
#[inline]
pub fn reflect_index(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let m = i.rem_euclid(period);
    if m >= n as isize {
        (period - m) as usize
    } else {
        m as usize
    }
}

#[derive(Clone, Copy)]
enum Axis {
    Horizontal,
    Vertical,
}

fn taps(n: usize, k: &BlurKernel) -> Vec<usize> {
    let r = k.radius() as isize;
    let mut out = Vec::with_capacity(n * k.size);
    for x in 0..n as isize {
        for t in 0..k.size as isize {
            out.push(reflect_index(x + t - r, n));
        }
    }
    out
}

fn pass(img: &Image, k: &BlurKernel, axis: Axis, transpose: bool) -> Image {
    let (w, h) = (img.width, img.height);
    let n = match axis {
        Axis::Horizontal => w,
        Axis::Vertical => h,
    };
    let table = taps(n, k);
    let mut out = Image::zeros(w, h);
    let at = |line: usize, pos: usize| match axis {
        Axis::Horizontal => (line * w + pos) * 3,
        Axis::Vertical => (pos * w + line) * 3,
    };
    let lines = match axis {
        Axis::Horizontal => h,
        Axis::Vertical => w,
    };
    for line in 0..lines {
        for pos in 0..n {
            let src = &table[pos * k.size..(pos + 1) * k.size];
            if transpose {
                let i = at(line, pos);
                let v = [img.data[i], img.data[i + 1], img.data[i + 2]];
                for (&j, &wt) in src.iter().zip(&k.weights) {
                    let o = at(line, j);
                    out.data[o] += wt * v[0];
                    out.data[o + 1] += wt * v[1];
                    out.data[o + 2] += wt * v[2];
                }
            } else {
                let mut acc = [0.0; 3];
                for (&j, &wt) in src.iter().zip(&k.weights) {
                    let i = at(line, j);
                    acc[0] += wt * img.data[i];
                    acc[1] += wt * img.data[i + 1];
                    acc[2] += wt * img.data[i + 2];
                }
                let o = at(line, pos);
                out.data[o..o + 3].copy_from_slice(&acc);
            }
        }
    }
    out
}

/// Per-channel separable blur: horizontal pass, then vertical.
pub fn gaussian_blur(img: &Image, k: &BlurKernel) -> Image {
    let tmp = pass(img, k, Axis::Horizontal, false);
    pass(&tmp, k, Axis::Vertical, false)
}

/// Transpose of [`gaussian_blur`] including the reflect padding.
pub fn blur_adjoint(upstream: &Image, k: &BlurKernel) -> Image {
    let tmp = pass(upstream, k, Axis::Vertical, true);
    pass(&tmp, k, Axis::Horizontal, true)
}
