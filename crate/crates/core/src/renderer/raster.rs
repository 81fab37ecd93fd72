use super::mesh::{MeshShape, Vec3};
use crate::error::{param_err, Result};
use crate::tensor::Tensor;

/// Albedo used when a mesh carries no face colors.
pub const DEFAULT_ALBEDO: Vec3 = [0.9, 0.8, 0.7];
pub const AMBIENT: f64 = 0.2;
pub const DIFFUSE: f64 = 0.8;
/// Direction towards the light, in camera coordinates (+z towards viewer).
pub const LIGHT_DIR: Vec3 = [-0.4, 0.5, 0.8];
const NEAR: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Camera {
    pub eye: Vec3,
    pub target: Vec3,
    pub up: Vec3,
    pub fov_deg: f64,
}

/// `V` cameras on a circle around the origin, equally spaced in azimuth.
///
/// Azimuth `θ_k = k·360/V` is measured clockwise seen from above, so
/// rotating a mesh by `+360/V` degrees about the up axis shifts the view
/// sequence by one position.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraRig {
    pub azimuths_deg: Vec<f64>,
    pub elevation_deg: f64,
    pub distance: f64,
    pub fov_deg: f64,
}

impl CameraRig {
    pub const DEFAULT_ELEVATION: f64 = 30.0;
    pub const DEFAULT_DISTANCE: f64 = 2.5;
    pub const DEFAULT_FOV: f64 = 40.0;

    pub fn new(views: usize) -> Result<Self> {
        Self::with_params(views, Self::DEFAULT_ELEVATION, Self::DEFAULT_DISTANCE, Self::DEFAULT_FOV)
    }

    pub fn with_params(views: usize, elevation_deg: f64, distance: f64, fov_deg: f64) -> Result<Self> {
        if views == 0 {
            return Err(param_err!("camera rig needs at least one view"));
        }
        let azimuths_deg = (0..views).map(|k| 360.0 * k as f64 / views as f64).collect();
        Ok(Self { azimuths_deg, elevation_deg, distance, fov_deg })
    }

    pub fn len(&self) -> usize {
        self.azimuths_deg.len()
    }

    pub fn is_empty(&self) -> bool {
        self.azimuths_deg.is_empty()
    }

    pub fn camera(&self, k: usize) -> Camera {
        let az = -self.azimuths_deg[k].to_radians();
        let el = self.elevation_deg.to_radians();
        let (d, ce) = (self.distance, el.cos());
        Camera {
            eye: [d * ce * az.sin(), d * el.sin(), d * ce * az.cos()],
            target: [0.0; 3],
            up: [0.0, 1.0, 0.0],
            fov_deg: self.fov_deg,
        }
    }
}

fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn normalize(a: Vec3) -> Option<Vec3> {
    let n = dot(a, a).sqrt();
    (n > 1e-12).then(|| [a[0] / n, a[1] / n, a[2] / n])
}

struct View {
    eye: Vec3,
    right: Vec3,
    up: Vec3,
    back: Vec3,
    focal: f64,
}

impl View {
    fn new(cam: &Camera) -> Result<Self> {
        let forward = normalize(sub(cam.target, cam.eye)).ok_or_else(|| param_err!("camera eye coincides with its target"))?;
        let right = normalize(cross(forward, cam.up)).ok_or_else(|| param_err!("camera up vector is parallel to the view direction"))?;
        if !(cam.fov_deg > 0.0 && cam.fov_deg < 180.0) {
            return Err(param_err!("field of view {} outside (0, 180)", cam.fov_deg));
        }
        Ok(Self {
            eye: cam.eye,
            right,
            up: cross(right, forward),
            back: [-forward[0], -forward[1], -forward[2]],
            focal: 1.0 / (cam.fov_deg.to_radians() / 2.0).tan(),
        })
    }

    fn to_camera(&self, p: Vec3) -> Vec3 {
        let d = sub(p, self.eye);
        [dot(d, self.right), dot(d, self.up), dot(d, self.back)]
    }
}

/// Renders `mesh` into a `3×res×res` image with values in [−1, 1].
///
/// Perspective projection, no back-face culling, z-buffered, flat
/// Lambertian shading from a light fixed relative to the camera plus an
/// ambient term. Background pixels are −1.
pub fn rasterize(mesh: &MeshShape, camera: &Camera, res: usize) -> Result<Tensor<f32>> {
    if res == 0 {
        return Err(param_err!("resolution must be positive"));
    }
    let view = View::new(camera)?;
    let light = normalize(LIGHT_DIR).expect("non-zero light");
    let mut depth = vec![f64::INFINITY; res * res];
    let mut color = vec![[0.0f64; 3]; res * res];
    let cam_pts: Vec<Vec3> = mesh.vertices.iter().map(|&v| view.to_camera(v)).collect();
    let half = res as f64 / 2.0;

    for (ti, tri) in mesh.triangles.iter().enumerate() {
        let c = [cam_pts[tri[0]], cam_pts[tri[1]], cam_pts[tri[2]]];
        let d = [-c[0][2], -c[1][2], -c[2][2]];
        if d.iter().any(|&z| z < NEAR) {
            continue;
        }
        let Some(mut n) = normalize(cross(sub(c[1], c[0]), sub(c[2], c[0]))) else { continue };
        if dot(n, c[0]) > 0.0 {
            n = [-n[0], -n[1], -n[2]];
        }
        let shade = AMBIENT + DIFFUSE * dot(n, light).max(0.0);
        let albedo = mesh.face_colors.get(ti).copied().unwrap_or(DEFAULT_ALBEDO);
        let rgb = [albedo[0] * shade, albedo[1] * shade, albedo[2] * shade];

        let s: Vec<[f64; 2]> = (0..3)
            .map(|k| [half * (1.0 + view.focal * c[k][0] / d[k]), half * (1.0 - view.focal * c[k][1] / d[k])])
            .collect();
        let edge = |a: [f64; 2], b: [f64; 2], p: [f64; 2]| (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]);
        let area = edge(s[0], s[1], s[2]);
        if area.abs() < 1e-12 {
            continue;
        }
        let xmin = s.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min).floor().max(0.0) as usize;
        let ymin = s.iter().map(|p| p[1]).fold(f64::INFINITY, f64::min).floor().max(0.0) as usize;
        let xmax = s.iter().map(|p| p[0]).fold(f64::NEG_INFINITY, f64::max).ceil().min(res as f64) as usize;
        let ymax = s.iter().map(|p| p[1]).fold(f64::NEG_INFINITY, f64::max).ceil().min(res as f64) as usize;
        for y in ymin..ymax {
            for x in xmin..xmax {
                let p = [x as f64 + 0.5, y as f64 + 0.5];
                let b = [edge(s[1], s[2], p) / area, edge(s[2], s[0], p) / area, edge(s[0], s[1], p) / area];
                if b.iter().any(|&v| v < 0.0) {
                    continue;
                }
                let z = 1.0 / (b[0] / d[0] + b[1] / d[1] + b[2] / d[2]);
                let idx = y * res + x;
                if z < depth[idx] {
                    depth[idx] = z;
                    color[idx] = rgb;
                }
            }
        }
    }

    let mut out = vec![-1.0f32; 3 * res * res];
    for (idx, (rgb, z)) in color.iter().zip(&depth).enumerate() {
        if z.is_finite() {
            for ch in 0..3 {
                out[ch * res * res + idx] = (2.0 * rgb[ch].clamp(0.0, 1.0) - 1.0) as f32;
            }
        }
    }
    Tensor::from_vec(&[3, res, res], out)
}

/// One rendered view of a shape.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderedView {
    pub image: Tensor<f32>,
    pub view_index: usize,
    pub shape_id: String,
}

/// Renders one view per rig azimuth, in rig order.
pub fn render_sequence(mesh: &MeshShape, rig: &CameraRig, res: usize) -> Result<Vec<RenderedView>> {
    (0..rig.len())
        .map(|k| {
            Ok(RenderedView { image: rasterize(mesh, &rig.camera(k), res)?, view_index: k, shape_id: String::new() })
        })
        .collect()
}
