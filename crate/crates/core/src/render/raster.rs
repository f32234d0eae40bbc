use rayon::prelude::*;

use super::project::{backprop_primitive, project_indexed, Projected2D, ScreenGrad};
use crate::dropout::DropoutMask;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::scene::{Camera, GaussianField, GaussianPrimitive};

/// Per-pixel opacity ceiling.
pub const ALPHA_MAX: f64 = 0.99;
/// Traversal stops once transmittance falls below this value.
pub const TRANSMITTANCE_EPS: f64 = 1e-4;
/// A Gaussian is skipped at a pixel when `exp(power)` is below `1e-12`.
/// The contribution dropped there is far below any finite-difference step,
/// so the image stays smooth in every parameter.
pub const MIN_POWER: f64 = -27.631021115928547;

const TILE: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ExecMode {
    /// Bit-reproducible single-threaded traversal.
    #[default]
    Serial,
    Parallel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderOptions {
    pub background: [f64; 3],
    /// Rescale surviving opacities by `1/(1-rate)` of the mask.
    pub compensate: bool,
    pub early_stop: bool,
    pub mode: ExecMode,
}

impl Default for RenderOptions {
    fn default() -> Self {
        Self {
            background: [0.0; 3],
            compensate: false,
            early_stop: true,
            mode: ExecMode::Serial,
        }
    }
}

impl RenderOptions {
    pub fn with_background(background: [f64; 3]) -> Self {
        Self {
            background,
            ..Self::default()
        }
    }

    fn opacity_scale(&self, mask: &DropoutMask) -> f64 {
        if self.compensate && mask.rate < 1.0 {
            1.0 / (1.0 - mask.rate)
        } else {
            1.0
        }
    }
}

/// Alpha of `p` at pixel center `(px, py)`: `(alpha, gaussian, clipped)`.
#[inline]
fn alpha_at(p: &Projected2D, px: f64, py: f64, opacity_scale: f64) -> Option<(f64, f64, bool)> {
    let dx = px - p.mean2d[0];
    let dy = py - p.mean2d[1];
    let [a, b, c] = p.conic;
    let power = -0.5 * (a * dx * dx + 2.0 * b * dx * dy + c * dy * dy);
    if power < MIN_POWER {
        return None;
    }
    let g = power.exp();
    let raw = p.opacity * opacity_scale * g;
    if raw > ALPHA_MAX {
        Some((ALPHA_MAX, g, true))
    } else {
        Some((raw, g, false))
    }
}

/// Front-to-back compositing of depth-sorted Gaussians at one pixel center.
pub fn composite(pixel: [f64; 2], sorted: &[Projected2D], background: [f64; 3]) -> [f64; 3] {
    let (weights, t_final) = composite_weights(pixel, sorted, 1.0, true);
    let mut out = [0.0; 3];
    for (p, w) in sorted.iter().zip(&weights) {
        for c in 0..3 {
            out[c] += p.color[c] * w;
        }
    }
    for c in 0..3 {
        out[c] += t_final * background[c];
    }
    out
}

/// Blending weights `α_i Π_{j<i}(1-α_j)` for each entry of `sorted` (zero
/// for entries skipped or past the early stop) and the final transmittance.
pub fn composite_weights(pixel: [f64; 2], sorted: &[Projected2D], opacity_scale: f64, early_stop: bool) -> (Vec<f64>, f64) {
    let mut weights = vec![0.0; sorted.len()];
    let mut t = 1.0;
    for (i, p) in sorted.iter().enumerate() {
        if let Some((alpha, _, _)) = alpha_at(p, pixel[0], pixel[1], opacity_scale) {
            weights[i] = alpha * t;
            t *= 1.0 - alpha;
            if early_stop && t < TRANSMITTANCE_EPS {
                break;
            }
        }
    }
    (weights, t)
}

/// Projected, depth-sorted kept primitives plus per-tile candidate lists.
struct Frame {
    projected: Vec<Projected2D>,
    tiles_x: usize,
    tiles: Vec<Vec<u32>>,
    opacity_scale: f64,
}

fn check_mask(field: &GaussianField, mask: &DropoutMask) -> Result<()> {
    if mask.len() != field.len() {
        return Err(Error::Shape(format!(
            "mask length {} does not match field size {}",
            mask.len(),
            field.len()
        )));
    }
    Ok(())
}

fn build_frame(field: &GaussianField, mask: &DropoutMask, cam: &Camera, opts: &RenderOptions) -> Frame {
    let mut projected: Vec<Projected2D> = field
        .primitives
        .iter()
        .enumerate()
        .filter(|(i, _)| mask.is_kept(*i))
        .filter_map(|(i, g)| project_indexed(g, i, cam))
        .collect();
    projected.sort_by(|a, b| a.depth.total_cmp(&b.depth).then(a.source_index.cmp(&b.source_index)));

    let tiles_x = cam.width.div_ceil(TILE);
    let tiles_y = cam.height.div_ceil(TILE);
    let mut tiles = vec![Vec::new(); tiles_x * tiles_y];
    let r2 = -2.0 * MIN_POWER;
    for (k, p) in projected.iter().enumerate() {
        // Exact bounding box of the ellipse where power >= MIN_POWER.
        let ex = (r2 * p.cov2d[(0, 0)]).sqrt();
        let ey = (r2 * p.cov2d[(1, 1)]).sqrt();
        let x0 = ((p.mean2d[0] - ex - 0.5).floor().max(0.0) as usize) / TILE;
        let x1 = ((p.mean2d[0] + ex - 0.5).ceil().min(cam.width as f64 - 1.0).max(0.0) as usize) / TILE;
        let y0 = ((p.mean2d[1] - ey - 0.5).floor().max(0.0) as usize) / TILE;
        let y1 = ((p.mean2d[1] + ey - 0.5).ceil().min(cam.height as f64 - 1.0).max(0.0) as usize) / TILE;
        for ty in y0..=y1.min(tiles_y - 1) {
            for tx in x0..=x1.min(tiles_x - 1) {
                tiles[ty * tiles_x + tx].push(k as u32);
            }
        }
    }
    Frame {
        projected,
        tiles_x,
        tiles,
        opacity_scale: opts.opacity_scale(mask),
    }
}

fn tile_pixels(cam: &Camera, tiles_x: usize, tile: usize) -> impl Iterator<Item = (usize, usize)> {
    let (tx, ty) = (tile % tiles_x, tile / tiles_x);
    let (x0, y0) = (tx * TILE, ty * TILE);
    let (x1, y1) = ((x0 + TILE).min(cam.width), (y0 + TILE).min(cam.height));
    (y0..y1).flat_map(move |y| (x0..x1).map(move |x| (x, y)))
}

fn shade_tile(frame: &Frame, cam: &Camera, opts: &RenderOptions, tile: usize) -> Vec<(usize, [f64; 3])> {
    let list = &frame.tiles[tile];
    tile_pixels(cam, frame.tiles_x, tile)
        .map(|(x, y)| {
            let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
            let mut t = 1.0;
            let mut out = [0.0; 3];
            for &k in list {
                let p = &frame.projected[k as usize];
                if let Some((alpha, _, _)) = alpha_at(p, px, py, frame.opacity_scale) {
                    let w = alpha * t;
                    for c in 0..3 {
                        out[c] += p.color[c] * w;
                    }
                    t *= 1.0 - alpha;
                    if opts.early_stop && t < TRANSMITTANCE_EPS {
                        break;
                    }
                }
            }
            for c in 0..3 {
                out[c] += t * opts.background[c];
            }
            (y * cam.width + x, out)
        })
        .collect()
}

/// Renders the kept primitives of `field` from `cam`.
pub fn render(field: &GaussianField, mask: &DropoutMask, cam: &Camera, opts: &RenderOptions) -> Result<Image> {
    check_mask(field, mask)?;
    let frame = build_frame(field, mask, cam, opts);
    let mut img = Image::zeros(cam.width, cam.height);
    let n_tiles = frame.tiles.len();
    let shaded: Vec<Vec<(usize, [f64; 3])>> = match opts.mode {
        ExecMode::Serial => (0..n_tiles).map(|t| shade_tile(&frame, cam, opts, t)).collect(),
        ExecMode::Parallel => (0..n_tiles).into_par_iter().map(|t| shade_tile(&frame, cam, opts, t)).collect(),
    };
    for (pix, rgb) in shaded.into_iter().flatten() {
        img.data[pix * 3..pix * 3 + 3].copy_from_slice(&rgb);
    }
    Ok(img)
}

struct Contribution {
    k: usize,
    alpha: f64,
    gauss: f64,
    clipped: bool,
    transmittance: f64,
}

fn backward_tile(frame: &Frame, cam: &Camera, opts: &RenderOptions, upstream: &Image, tile: usize, acc: &mut [ScreenGrad]) {
    let list = &frame.tiles[tile];
    let mut stack: Vec<Contribution> = Vec::with_capacity(list.len());
    for (x, y) in tile_pixels(cam, frame.tiles_x, tile) {
        let gi = upstream.index(x, y, 0);
        let up = [upstream.data[gi], upstream.data[gi + 1], upstream.data[gi + 2]];
        if up == [0.0; 3] {
            continue;
        }
        let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
        stack.clear();
        let mut t = 1.0;
        for &k in list {
            let p = &frame.projected[k as usize];
            if let Some((alpha, gauss, clipped)) = alpha_at(p, px, py, frame.opacity_scale) {
                stack.push(Contribution {
                    k: k as usize,
                    alpha,
                    gauss,
                    clipped,
                    transmittance: t,
                });
                t *= 1.0 - alpha;
                if opts.early_stop && t < TRANSMITTANCE_EPS {
                    break;
                }
            }
        }
        // Color of everything behind the current entry, including background.
        let mut behind = [0.0; 3];
        for c in 0..3 {
            behind[c] = t * opts.background[c];
        }
        for e in stack.iter().rev() {
            let p = &frame.projected[e.k];
            let w = e.alpha * e.transmittance;
            let g = &mut acc[e.k];
            let mut d_alpha = 0.0;
            for c in 0..3 {
                g.color[c] += up[c] * w;
                d_alpha += up[c] * (p.color[c] * e.transmittance - behind[c] / (1.0 - e.alpha));
                behind[c] += p.color[c] * w;
            }
            if e.clipped {
                continue;
            }
            g.opacity += d_alpha * e.gauss * frame.opacity_scale;
            let d_power = d_alpha * e.alpha;
            let dx = px - p.mean2d[0];
            let dy = py - p.mean2d[1];
            let [a, b, c] = p.conic;
            g.mean[0] += d_power * (a * dx + b * dy);
            g.mean[1] += d_power * (b * dx + c * dy);
            g.conic[0] += d_power * (-0.5 * dx * dx);
            g.conic[1] += d_power * (-dx * dy);
            g.conic[2] += d_power * (-0.5 * dy * dy);
        }
    }
}

/// Adds `∂(Σ upstream ⊙ render)/∂θ` to `field.grads` for every kept primitive.
pub fn render_backward(
    field: &mut GaussianField,
    mask: &DropoutMask,
    cam: &Camera,
    opts: &RenderOptions,
    upstream: &Image,
) -> Result<()> {
    check_mask(field, mask)?;
    if upstream.width != cam.width || upstream.height != cam.height || upstream.len() != cam.width * cam.height * 3 {
        return Err(Error::Shape(format!(
            "upstream {}x{} does not match camera {}x{}",
            upstream.width, upstream.height, cam.width, cam.height
        )));
    }
    if field.grads.len() != field.len() {
        return Err(Error::Shape("gradient buffer does not match field".into()));
    }
    let frame = build_frame(field, mask, cam, opts);
    let n = frame.projected.len();
    let n_tiles = frame.tiles.len();
    let screen = match opts.mode {
        ExecMode::Serial => {
            let mut acc = vec![ScreenGrad::default(); n];
            for tile in 0..n_tiles {
                backward_tile(&frame, cam, opts, upstream, tile, &mut acc);
            }
            acc
        }
        ExecMode::Parallel => {
            let partial: Vec<Vec<ScreenGrad>> = (0..n_tiles)
                .into_par_iter()
                .map(|tile| {
                    let mut acc = vec![ScreenGrad::default(); n];
                    backward_tile(&frame, cam, opts, upstream, tile, &mut acc);
                    acc
                })
                .collect();
            // Reduce in tile order so repeated parallel runs agree exactly.
            let mut acc = vec![ScreenGrad::default(); n];
            for part in &partial {
                for (a, p) in acc.iter_mut().zip(part) {
                    a.add(p);
                }
            }
            acc
        }
    };
    for (p, sg) in frame.projected.iter().zip(&screen) {
        let i = p.source_index;
        let d = backprop_primitive(&field.primitives[i], p, sg, cam);
        accumulate(&mut field.grads[i], &d);
    }
    Ok(())
}

fn accumulate(into: &mut GaussianPrimitive, d: &GaussianPrimitive) {
    for k in 0..3 {
        into.position[k] += d.position[k];
        into.log_scale[k] += d.log_scale[k];
        into.color_logit[k] += d.color_logit[k];
    }
    for k in 0..4 {
        into.rotation[k] += d.rotation[k];
    }
    into.opacity_logit += d.opacity_logit;
}
