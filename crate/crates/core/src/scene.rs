//! Gaussian primitives, cameras, synthetic scenes and sparse-view splits.

use nalgebra::{Matrix3, Vector3};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::image::Image;

/// Number of raw scalars stored per primitive.
pub const PARAMS_PER_PRIMITIVE: usize = 14;

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[inline]
pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Raw learnable parameters of one anisotropic Gaussian.
///
/// Scales live in log space and opacity/color in logit space so that every
/// parameter is unconstrained. The quaternion `[w, x, y, z]` is stored
/// unnormalized and normalized where it is used.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GaussianPrimitive {
    pub position: [f64; 3],
    pub log_scale: [f64; 3],
    pub rotation: [f64; 4],
    pub opacity_logit: f64,
    pub color_logit: [f64; 3],
}

impl GaussianPrimitive {
    pub fn to_array(&self) -> [f64; PARAMS_PER_PRIMITIVE] {
        let p = self;
        [
            p.position[0],
            p.position[1],
            p.position[2],
            p.log_scale[0],
            p.log_scale[1],
            p.log_scale[2],
            p.rotation[0],
            p.rotation[1],
            p.rotation[2],
            p.rotation[3],
            p.opacity_logit,
            p.color_logit[0],
            p.color_logit[1],
            p.color_logit[2],
        ]
    }

    pub fn from_array(a: &[f64; PARAMS_PER_PRIMITIVE]) -> Self {
        Self {
            position: [a[0], a[1], a[2]],
            log_scale: [a[3], a[4], a[5]],
            rotation: [a[6], a[7], a[8], a[9]],
            opacity_logit: a[10],
            color_logit: [a[11], a[12], a[13]],
        }
    }

    pub fn get(&self, k: usize) -> f64 {
        self.to_array()[k]
    }

    pub fn set(&mut self, k: usize, value: f64) {
        let mut a = self.to_array();
        a[k] = value;
        *self = Self::from_array(&a);
    }

    pub fn scale(&self) -> Vector3<f64> {
        Vector3::new(self.log_scale[0].exp(), self.log_scale[1].exp(), self.log_scale[2].exp())
    }

    pub fn opacity(&self) -> f64 {
        sigmoid(self.opacity_logit)
    }

    pub fn color(&self) -> [f64; 3] {
        self.color_logit.map(sigmoid)
    }

    /// Rotation matrix of the normalized quaternion.
    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        quat_to_matrix(normalize_quat(self.rotation))
    }

    /// Σ = R S Sᵀ Rᵀ
    pub fn covariance(&self) -> Matrix3<f64> {
        let m = self.rotation_matrix() * Matrix3::from_diagonal(&self.scale());
        m * m.transpose()
    }

    /// Checks the type invariants by direct evaluation of the activations.
    pub fn is_valid(&self) -> bool {
        let scale_ok = self.scale().iter().all(|s| s.is_finite() && *s > 0.0);
        let quat_norm = self.rotation.iter().map(|v| v * v).sum::<f64>().sqrt();
        let o = self.opacity();
        let colors_ok = self.color().iter().all(|c| *c > 0.0 && *c < 1.0);
        scale_ok && quat_norm > 0.0 && quat_norm.is_finite() && o > 0.0 && o < 1.0 && colors_ok
    }
}

impl Serialize for GaussianPrimitive {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_array().serialize(s)
    }
}

impl<'de> Deserialize<'de> for GaussianPrimitive {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let a = <[f64; PARAMS_PER_PRIMITIVE]>::deserialize(d)?;
        Ok(Self::from_array(&a))
    }
}

pub fn normalize_quat(q: [f64; 4]) -> [f64; 4] {
    let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
    q.map(|v| v / n)
}

/// Rotation matrix of a unit quaternion `[w, x, y, z]`.
pub fn quat_to_matrix(q: [f64; 4]) -> Matrix3<f64> {
    let [w, x, y, z] = q;
    Matrix3::new(
        1.0 - 2.0 * (y * y + z * z),
        2.0 * (x * y - w * z),
        2.0 * (x * z + w * y),
        2.0 * (x * y + w * z),
        1.0 - 2.0 * (x * x + z * z),
        2.0 * (y * z - w * x),
        2.0 * (x * z - w * y),
        2.0 * (y * z + w * x),
        1.0 - 2.0 * (x * x + y * y),
    )
}

/// The shared parameter set plus a co-shaped gradient accumulator.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GaussianField {
    pub primitives: Vec<GaussianPrimitive>,
    pub grads: Vec<GaussianPrimitive>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FieldDoc {
    primitives: Vec<GaussianPrimitive>,
}

impl Serialize for GaussianField {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        FieldDoc {
            primitives: self.primitives.clone(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for GaussianField {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let doc = FieldDoc::deserialize(d)?;
        Ok(GaussianField::new(doc.primitives))
    }
}

impl GaussianField {
    pub fn new(primitives: Vec<GaussianPrimitive>) -> Self {
        let grads = vec![GaussianPrimitive::default(); primitives.len()];
        Self { primitives, grads }
    }

    pub fn len(&self) -> usize {
        self.primitives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.primitives.is_empty()
    }

    pub fn zero_grads(&mut self) {
        self.grads.iter_mut().for_each(|g| *g = GaussianPrimitive::default());
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("field serialization cannot fail")
    }

    pub fn from_json(src: &str) -> Result<Self> {
        serde_json::from_str(src).map_err(|e| Error::from_json(e, src))
    }

    /// Flat view of all raw parameters, primitive-major.
    pub fn flat_params(&self) -> Vec<f64> {
        self.primitives.iter().flat_map(|p| p.to_array()).collect()
    }

    pub fn flat_grads(&self) -> Vec<f64> {
        self.grads.iter().flat_map(|p| p.to_array()).collect()
    }
}

/// Pinhole camera with a world-to-camera pose (x right, y down, z forward).
#[derive(Debug, Clone, PartialEq)]
pub struct Camera {
    pub focal: [f64; 2],
    pub principal: [f64; 2],
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
    pub width: usize,
    pub height: usize,
    pub near: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CameraDoc {
    focal: [f64; 2],
    principal: [f64; 2],
    rotation: [f64; 9],
    translation: [f64; 3],
    width: usize,
    height: usize,
    near: f64,
}

impl Serialize for Camera {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let r = &self.rotation;
        CameraDoc {
            focal: self.focal,
            principal: self.principal,
            rotation: [
                r[(0, 0)],
                r[(0, 1)],
                r[(0, 2)],
                r[(1, 0)],
                r[(1, 1)],
                r[(1, 2)],
                r[(2, 0)],
                r[(2, 1)],
                r[(2, 2)],
            ],
            translation: [self.translation.x, self.translation.y, self.translation.z],
            width: self.width,
            height: self.height,
            near: self.near,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Camera {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let doc = CameraDoc::deserialize(d)?;
        Ok(Camera {
            focal: doc.focal,
            principal: doc.principal,
            rotation: Matrix3::from_row_slice(&doc.rotation),
            translation: Vector3::from_column_slice(&doc.translation),
            width: doc.width,
            height: doc.height,
            near: doc.near,
        })
    }
}

impl Camera {
    /// Camera-space coordinates of a world point.
    pub fn to_camera(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    /// World-space camera center.
    pub fn center(&self) -> Vector3<f64> {
        -(self.rotation.transpose() * self.translation)
    }

    pub fn is_valid(&self) -> bool {
        let r = &self.rotation;
        let orth = (r.transpose() * r - Matrix3::identity()).abs().max() <= 1e-6;
        let det = (r.determinant() - 1.0).abs() <= 1e-6;
        orth && det
            && self.focal.iter().all(|f| *f > 0.0)
            && self.near > 0.0
            && self.width > 0
            && self.height > 0
            && (0.0..self.width as f64).contains(&self.principal[0])
            && (0.0..self.height as f64).contains(&self.principal[1])
    }
}

/// Builds a camera at `center` looking at `target`, with world +y as up.
pub fn look_at_camera(center: Vector3<f64>, target: Vector3<f64>, width: usize, height: usize, fov_deg: f64) -> Camera {
    let forward = (target - center).normalize();
    let mut up = Vector3::new(0.0, 1.0, 0.0);
    if forward.cross(&up).norm() < 1e-9 {
        up = Vector3::new(0.0, 0.0, 1.0);
    }
    let right = forward.cross(&up).normalize();
    let down = forward.cross(&right);
    let rotation = Matrix3::from_rows(&[right.transpose(), down.transpose(), forward.transpose()]);
    let translation = -(rotation * center);
    let f = (width as f64 / 2.0) / (fov_deg.to_radians() / 2.0).tan();
    Camera {
        focal: [f, f],
        principal: [width as f64 / 2.0, height as f64 / 2.0],
        rotation,
        translation,
        width,
        height,
        near: 0.05,
    }
}

/// `n` cameras evenly spaced on a horizontal circle around `look_at`.
pub fn make_orbit_cameras(
    n: usize,
    radius: f64,
    look_at: [f64; 3],
    width: usize,
    height: usize,
    fov_deg: f64,
) -> Vec<Camera> {
    let target = Vector3::from(look_at);
    (0..n)
        .map(|k| {
            let theta = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
            let center = target + Vector3::new(radius * theta.cos(), 0.0, radius * theta.sin());
            look_at_camera(center, target, width, height, fov_deg)
        })
        .collect()
}

/// Ground-truth field: positions uniform in `[-extent, extent]³`, per-axis
/// scales in `[extent/50, extent/10]`, uniform random rotations, opacities
/// in `[0.5, 0.95]` and colors in `[0.1, 0.9]`.
pub fn generate_synthetic_scene(seed: u64, count: usize, extent: f64) -> GaussianField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let primitives = (0..count)
        .map(|_| {
            let position = [(); 3].map(|_| rng.gen_range(-extent..=extent));
            let log_scale = [(); 3].map(|_| rng.gen_range(extent / 50.0..=extent / 10.0).ln());
            let rotation = random_unit_quat(&mut rng);
            let opacity_logit = logit(rng.gen_range(0.5..=0.95));
            let color_logit = [(); 3].map(|_| logit(rng.gen_range(0.1..=0.9)));
            GaussianPrimitive {
                position,
                log_scale,
                rotation,
                opacity_logit,
                color_logit,
            }
        })
        .collect();
    GaussianField::new(primitives)
}

fn random_unit_quat(rng: &mut impl Rng) -> [f64; 4] {
    loop {
        let q: [f64; 4] = [(); 4].map(|_| rng.sample(StandardNormal));
        let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
        if n > 1e-6 {
            return q.map(|v| v / n);
        }
    }
}

/// Seeded partition of `0..n_views` into sorted (train, held-out) index lists.
pub fn split_views(n_views: usize, n_train: usize, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if n_train == 0 || n_train >= n_views {
        return Err(Error::InvalidSplit { n_views, n_train });
    }
    let mut idx: Vec<usize> = (0..n_views).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut train = idx[..n_train].to_vec();
    let mut heldout = idx[n_train..].to_vec();
    train.sort_unstable();
    heldout.sort_unstable();
    Ok((train, heldout))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitMode {
    NoisyTruth,
    Random,
}

/// Starting field for optimization (stand-in for an SfM point cloud).
pub fn init_field(truth: &GaussianField, mode: InitMode, noise_scale: f64, seed: u64) -> GaussianField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let primitives = match mode {
        InitMode::NoisyTruth => truth
            .primitives
            .iter()
            .map(|p| {
                let mut a = p.to_array();
                if noise_scale > 0.0 {
                    for v in a.iter_mut() {
                        let z: f64 = rng.sample(StandardNormal);
                        *v += noise_scale * z;
                    }
                }
                GaussianPrimitive::from_array(&a)
            })
            .collect(),
        InitMode::Random => (0..truth.len())
            .map(|_| GaussianPrimitive {
                position: [(); 3].map(|_| rng.gen_range(-1.0..=1.0)),
                log_scale: [0.05f64.ln(); 3],
                rotation: random_unit_quat(&mut rng),
                opacity_logit: 0.0,
                color_logit: [(); 3].map(|_| rng.gen_range(-1.0..=1.0)),
            })
            .collect(),
    };
    GaussianField::new(primitives)
}

/// Cameras with ground-truth images and a train/held-out split.
#[derive(Debug, Clone)]
pub struct ViewSet {
    pub views: Vec<(Camera, Image)>,
    pub train: Vec<usize>,
    pub heldout: Vec<usize>,
}

impl ViewSet {
    pub fn new(views: Vec<(Camera, Image)>, train: Vec<usize>, heldout: Vec<usize>) -> Result<Self> {
        let mut all: Vec<usize> = train.iter().chain(&heldout).copied().collect();
        all.sort_unstable();
        if all != (0..views.len()).collect::<Vec<_>>() {
            return Err(Error::InvalidProtocol(
                "train and held-out indices must partition the views".into(),
            ));
        }
        Ok(Self { views, train, heldout })
    }

    pub fn train_views(&self) -> impl Iterator<Item = &(Camera, Image)> {
        self.train.iter().map(|&i| &self.views[i])
    }

    pub fn heldout_views(&self) -> impl Iterator<Item = (usize, &(Camera, Image))> {
        self.heldout.iter().map(|&i| (i, &self.views[i]))
    }
}
