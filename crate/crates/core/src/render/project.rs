use nalgebra::{Matrix2, Matrix2x3, Matrix3, Vector3};

use crate::scene::{Camera, GaussianPrimitive};

/// Added to both diagonal entries of every screen-space covariance (pixels²).
pub const COV2D_REGULARIZATION: f64 = 0.3;

/// A Gaussian in screen space, ready for compositing.
#[derive(Debug, Clone, PartialEq)]
pub struct Projected2D {
    pub mean2d: [f64; 2],
    /// Regularized screen covariance `[[a, b], [b, c]]`.
    pub cov2d: Matrix2<f64>,
    pub depth: f64,
    pub source_index: usize,
    /// Activated opacity, before any dropout compensation.
    pub opacity: f64,
    pub color: [f64; 3],
    /// Inverse covariance entries `(a, b, c)`.
    pub conic: [f64; 3],
    pub(crate) cam_point: Vector3<f64>,
}

/// Perspective Jacobian of `(fx x/z + cx, fy y/z + cy)` at camera point `t`.
pub(crate) fn projection_jacobian(cam: &Camera, t: &Vector3<f64>) -> Matrix2x3<f64> {
    let [fx, fy] = cam.focal;
    let iz = 1.0 / t.z;
    Matrix2x3::new(
        fx * iz,
        0.0,
        -fx * t.x * iz * iz,
        0.0,
        fy * iz,
        -fy * t.y * iz * iz,
    )
}

/// `J W Σ Wᵀ Jᵀ` without regularization.
pub fn raw_screen_covariance(g: &GaussianPrimitive, cam: &Camera) -> Option<Matrix2<f64>> {
    let t = cam.to_camera(&Vector3::from(g.position));
    if t.z <= cam.near {
        return None;
    }
    let tm = projection_jacobian(cam, &t) * cam.rotation;
    Some(tm * g.covariance() * tm.transpose())
}

pub(crate) fn conic_of(cov: &Matrix2<f64>) -> [f64; 3] {
    let det = cov[(0, 0)] * cov[(1, 1)] - cov[(0, 1)] * cov[(0, 1)];
    [cov[(1, 1)] / det, -cov[(0, 1)] / det, cov[(0, 0)] / det]
}

fn max_eigenvalue(cov: &Matrix2<f64>) -> f64 {
    let (a, b, c) = (cov[(0, 0)], cov[(0, 1)], cov[(1, 1)]);
    let mid = 0.5 * (a + c);
    mid + (0.25 * (a - c) * (a - c) + b * b).sqrt()
}

/// Projects one primitive; `None` when it lies at or in front of the near
/// plane or its 3σ footprint misses the image.
pub fn project_gaussian(g: &GaussianPrimitive, cam: &Camera) -> Option<Projected2D> {
    project_indexed(g, 0, cam)
}

pub(crate) fn project_indexed(g: &GaussianPrimitive, index: usize, cam: &Camera) -> Option<Projected2D> {
    let t = cam.to_camera(&Vector3::from(g.position));
    if !(t.z > cam.near) {
        return None;
    }
    let tm = projection_jacobian(cam, &t) * cam.rotation;
    let mut cov2d = tm * g.covariance() * tm.transpose();
    // Exact symmetry so the conic is well-defined.
    let off = 0.5 * (cov2d[(0, 1)] + cov2d[(1, 0)]);
    cov2d[(0, 1)] = off;
    cov2d[(1, 0)] = off;
    cov2d[(0, 0)] += COV2D_REGULARIZATION;
    cov2d[(1, 1)] += COV2D_REGULARIZATION;
    let mean2d = [
        cam.focal[0] * t.x / t.z + cam.principal[0],
        cam.focal[1] * t.y / t.z + cam.principal[1],
    ];
    let r = 3.0 * max_eigenvalue(&cov2d).sqrt();
    let (w, h) = (cam.width as f64, cam.height as f64);
    if mean2d[0] + r < 0.0 || mean2d[0] - r > w || mean2d[1] + r < 0.0 || mean2d[1] - r > h {
        return None;
    }
    if !mean2d.iter().all(|v| v.is_finite()) {
        return None;
    }
    Some(Projected2D {
        mean2d,
        conic: conic_of(&cov2d),
        cov2d,
        depth: t.z,
        source_index: index,
        opacity: g.opacity(),
        color: g.color(),
        cam_point: t,
    })
}

/// Screen-space gradients of one projected Gaussian.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct ScreenGrad {
    pub mean: [f64; 2],
    pub conic: [f64; 3],
    pub opacity: f64,
    pub color: [f64; 3],
}

impl ScreenGrad {
    pub fn add(&mut self, o: &ScreenGrad) {
        self.mean[0] += o.mean[0];
        self.mean[1] += o.mean[1];
        for k in 0..3 {
            self.conic[k] += o.conic[k];
            self.color[k] += o.color[k];
        }
        self.opacity += o.opacity;
    }
}

/// Partial derivatives of the rotation matrix of unit quaternion `[w,x,y,z]`.
fn quat_matrix_partials(q: [f64; 4]) -> [Matrix3<f64>; 4] {
    let [w, x, y, z] = q;
    [
        Matrix3::new(0.0, -z, y, z, 0.0, -x, -y, x, 0.0) * 2.0,
        Matrix3::new(0.0, y, z, y, -2.0 * x, -w, z, w, -2.0 * x) * 2.0,
        Matrix3::new(-2.0 * y, x, w, x, 0.0, z, -w, z, -2.0 * y) * 2.0,
        Matrix3::new(-2.0 * z, -w, x, w, -2.0 * z, y, x, y, 0.0) * 2.0,
    ]
}

/// Chains screen-space gradients back to the raw parameters of `g`.
/// `sg.opacity` is taken with respect to the activated opacity before compensation.
pub(crate) fn backprop_primitive(g: &GaussianPrimitive, p: &Projected2D, sg: &ScreenGrad, cam: &Camera) -> GaussianPrimitive {
    let t = p.cam_point;
    let [fx, fy] = cam.focal;
    let iz = 1.0 / t.z;

    // conic -> regularized covariance entries (A, B, C)
    let (ca, cb, cc) = (p.cov2d[(0, 0)], p.cov2d[(0, 1)], p.cov2d[(1, 1)]);
    let det = ca * cc - cb * cb;
    let id2 = 1.0 / (det * det);
    let [ga, gb, gc] = sg.conic;
    let g_a = ga * (-cc * cc * id2) + gb * (cb * cc * id2) + gc * (1.0 / det - ca * cc * id2);
    let g_b = ga * (2.0 * cb * cc * id2) + gb * (-1.0 / det - 2.0 * cb * cb * id2) + gc * (2.0 * ca * cb * id2);
    let g_c = ga * (1.0 / det - ca * cc * id2) + gb * (cb * ca * id2) + gc * (-ca * ca * id2);
    // Symmetric gradient matrix: off-diagonal B appears twice.
    let g2 = Matrix2::new(g_a, 0.5 * g_b, 0.5 * g_b, g_c);

    let j = projection_jacobian(cam, &t);
    let w = cam.rotation;
    let tm = j * w;
    let sigma = g.covariance();
    let d_tm = 2.0 * g2 * tm * sigma;
    let d_sigma = tm.transpose() * g2 * tm;
    let d_j = d_tm * w.transpose();

    let mut d_t = Vector3::zeros();
    // Through the Jacobian entries.
    d_t.x += d_j[(0, 2)] * (-fx * iz * iz);
    d_t.y += d_j[(1, 2)] * (-fy * iz * iz);
    d_t.z += d_j[(0, 0)] * (-fx * iz * iz)
        + d_j[(0, 2)] * (2.0 * fx * t.x * iz * iz * iz)
        + d_j[(1, 1)] * (-fy * iz * iz)
        + d_j[(1, 2)] * (2.0 * fy * t.y * iz * iz * iz);
    // Through the projected mean.
    let [gmx, gmy] = sg.mean;
    d_t.x += gmx * fx * iz;
    d_t.y += gmy * fy * iz;
    d_t.z += -gmx * fx * t.x * iz * iz - gmy * fy * t.y * iz * iz;
    let d_pos = w.transpose() * d_t;

    // Σ = M Mᵀ, M = R S
    let qn = g.rotation.iter().map(|v| v * v).sum::<f64>().sqrt();
    let q = g.rotation.map(|v| v / qn);
    let r = crate::scene::quat_to_matrix(q);
    let s = g.scale();
    let m = r * Matrix3::from_diagonal(&s);
    let d_m = 2.0 * d_sigma * m;
    let mut d_log_scale = [0.0; 3];
    for (jx, d) in d_log_scale.iter_mut().enumerate() {
        let ds: f64 = (0..3).map(|i| r[(i, jx)] * d_m[(i, jx)]).sum();
        *d = ds * s[jx];
    }
    let d_r = d_m * Matrix3::from_diagonal(&s);
    let partials = quat_matrix_partials(q);
    let d_n: [f64; 4] = [0, 1, 2, 3].map(|k| d_r.component_mul(&partials[k]).sum());
    let dot: f64 = (0..4).map(|k| q[k] * d_n[k]).sum();
    let d_q = [0, 1, 2, 3].map(|k| (d_n[k] - q[k] * dot) / qn);

    let o = p.opacity;
    let d_opacity_logit = sg.opacity * o * (1.0 - o);
    let d_color_logit = [0, 1, 2].map(|k| sg.color[k] * p.color[k] * (1.0 - p.color[k]));

    GaussianPrimitive {
        position: [d_pos.x, d_pos.y, d_pos.z],
        log_scale: d_log_scale,
        rotation: d_q,
        opacity_logit: d_opacity_logit,
        color_logit: d_color_logit,
    }
}
