use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{param_err, Error, Result};

pub type Vec3 = [f64; 3];

/// Procedural shape classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ShapeClass {
    Cube,
    Sphere,
    Cylinder,
    Cone,
    Torus,
    Pyramid,
}

impl ShapeClass {
    pub const ALL: [ShapeClass; 6] = [
        ShapeClass::Cube,
        ShapeClass::Sphere,
        ShapeClass::Cylinder,
        ShapeClass::Cone,
        ShapeClass::Torus,
        ShapeClass::Pyramid,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ShapeClass::Cube => "cube",
            ShapeClass::Sphere => "sphere",
            ShapeClass::Cylinder => "cylinder",
            ShapeClass::Cone => "cone",
            ShapeClass::Torus => "torus",
            ShapeClass::Pyramid => "pyramid",
        }
    }
}

impl fmt::Display for ShapeClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ShapeClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ShapeClass::ALL
            .iter()
            .copied()
            .find(|c| c.name() == s)
            .ok_or_else(|| param_err!("unknown shape class '{s}'"))
    }
}

/// Triangle mesh with optional per-face colors (RGB in [0, 1]).
#[derive(Debug, Clone, PartialEq)]
pub struct MeshShape {
    pub vertices: Vec<Vec3>,
    pub triangles: Vec<[usize; 3]>,
    pub face_colors: Vec<Vec3>,
    pub class: Option<ShapeClass>,
    pub seed: u64,
}

pub const SPHERE_RINGS: usize = 16;
pub const SPHERE_SEGMENTS: usize = 32;
const ROUND_SEGMENTS: usize = 32;
const TORUS_MAJOR: usize = 24;
const TORUS_MINOR: usize = 12;

impl MeshShape {
    pub fn empty() -> Self {
        Self { vertices: Vec::new(), triangles: Vec::new(), face_colors: Vec::new(), class: None, seed: 0 }
    }

    pub fn from_parts(vertices: Vec<Vec3>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        let n = vertices.len();
        if let Some(t) = triangles.iter().find(|t| t.iter().any(|&i| i >= n)) {
            return Err(param_err!("triangle {t:?} indexes past {n} vertices"));
        }
        Ok(Self { vertices, triangles, face_colors: Vec::new(), class: None, seed: 0 })
    }

    /// Base mesh of a class, before any jitter.
    pub fn base(class: ShapeClass) -> Self {
        let (vertices, triangles) = match class {
            ShapeClass::Cube => cube(),
            ShapeClass::Sphere => sphere(SPHERE_RINGS, SPHERE_SEGMENTS),
            ShapeClass::Cylinder => frustum(0.5, 0.5, ROUND_SEGMENTS),
            ShapeClass::Cone => cone(ROUND_SEGMENTS),
            ShapeClass::Torus => torus(TORUS_MAJOR, TORUS_MINOR),
            ShapeClass::Pyramid => pyramid(),
        };
        Self { vertices, triangles, face_colors: Vec::new(), class: Some(class), seed: 0 }
    }

    /// Rotation about the vertical (y) axis by `angle` radians.
    pub fn rotated_y(&self, angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        let mut out = self.clone();
        for v in &mut out.vertices {
            let (x, z) = (v[0], v[2]);
            v[0] = x * c + z * s;
            v[2] = -x * s + z * c;
        }
        out
    }

    /// Translates to the bounding-box center and scales the largest box
    /// side to 1.
    pub fn normalized(mut self) -> Self {
        if self.vertices.is_empty() {
            return self;
        }
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for v in &self.vertices {
            for a in 0..3 {
                lo[a] = lo[a].min(v[a]);
                hi[a] = hi[a].max(v[a]);
            }
        }
        let center = [(lo[0] + hi[0]) / 2.0, (lo[1] + hi[1]) / 2.0, (lo[2] + hi[2]) / 2.0];
        let extent = (0..3).map(|a| hi[a] - lo[a]).fold(0.0, f64::max);
        let s = if extent > 0.0 { 1.0 / extent } else { 1.0 };
        for v in &mut self.vertices {
            for a in 0..3 {
                v[a] = (v[a] - center[a]) * s;
            }
        }
        self
    }

    /// Number of triangles sharing each undirected edge.
    pub fn edge_valence(&self) -> HashMap<(usize, usize), usize> {
        let mut m = HashMap::new();
        for t in &self.triangles {
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                *m.entry((a.min(b), a.max(b))).or_insert(0) += 1;
            }
        }
        m
    }
}

/// Seeded instance of a class: non-uniform axis scales in [0.6, 1.4], small
/// per-vertex noise and a random yaw, then normalized.
pub fn make_primitive(class: ShapeClass, seed: u64) -> MeshShape {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mesh = MeshShape::base(class);
    let scale: Vec3 = [rng.gen_range(0.6..1.4), rng.gen_range(0.6..1.4), rng.gen_range(0.6..1.4)];
    let noise = Normal::new(0.0, 0.01).expect("valid normal");
    for v in &mut mesh.vertices {
        for a in 0..3 {
            v[a] = v[a] * scale[a] + noise.sample(&mut rng);
        }
    }
    let yaw = rng.gen_range(0.0..2.0 * PI);
    let mut mesh = mesh.rotated_y(yaw).normalized();
    mesh.seed = seed;
    mesh
}

fn cube() -> (Vec<Vec3>, Vec<[usize; 3]>) {
    let mut v = Vec::new();
    for i in 0..8 {
        v.push([
            if i & 1 == 0 { -0.5 } else { 0.5 },
            if i & 2 == 0 { -0.5 } else { 0.5 },
            if i & 4 == 0 { -0.5 } else { 0.5 },
        ]);
    }
    let quads = [[0, 1, 3, 2], [4, 6, 7, 5], [0, 4, 5, 1], [2, 3, 7, 6], [0, 2, 6, 4], [1, 5, 7, 3]];
    let t = quads.iter().flat_map(|q| [[q[0], q[1], q[2]], [q[0], q[2], q[3]]]).collect();
    (v, t)
}

fn ring(y: f64, r: f64, n: usize) -> impl Iterator<Item = Vec3> {
    (0..n).map(move |i| {
        let a = 2.0 * PI * i as f64 / n as f64;
        [r * a.cos(), y, r * a.sin()]
    })
}

fn sphere(rings: usize, segs: usize) -> (Vec<Vec3>, Vec<[usize; 3]>) {
    let mut v = vec![[0.0, 0.5, 0.0]];
    for r in 1..rings {
        let phi = PI * r as f64 / rings as f64;
        v.extend(ring(0.5 * phi.cos(), 0.5 * phi.sin(), segs));
    }
    v.push([0.0, -0.5, 0.0]);
    let bottom = v.len() - 1;
    let at = |r: usize, s: usize| 1 + (r - 1) * segs + s % segs;
    let mut t = Vec::new();
    for s in 0..segs {
        t.push([0, at(1, s + 1), at(1, s)]);
    }
    for r in 1..rings - 1 {
        for s in 0..segs {
            t.push([at(r, s), at(r, s + 1), at(r + 1, s + 1)]);
            t.push([at(r, s), at(r + 1, s + 1), at(r + 1, s)]);
        }
    }
    for s in 0..segs {
        t.push([bottom, at(rings - 1, s), at(rings - 1, s + 1)]);
    }
    (v, t)
}

/// Closed frustum (cylinder when both radii agree) with capped ends.
fn frustum(r_top: f64, r_bottom: f64, n: usize) -> (Vec<Vec3>, Vec<[usize; 3]>) {
    let mut v: Vec<Vec3> = ring(0.5, r_top, n).chain(ring(-0.5, r_bottom, n)).collect();
    v.push([0.0, 0.5, 0.0]);
    v.push([0.0, -0.5, 0.0]);
    let (top_c, bot_c) = (2 * n, 2 * n + 1);
    let mut t = Vec::new();
    for i in 0..n {
        let j = (i + 1) % n;
        t.push([i, j, n + j]);
        t.push([i, n + j, n + i]);
        t.push([top_c, j, i]);
        t.push([bot_c, n + i, n + j]);
    }
    (v, t)
}

fn cone(n: usize) -> (Vec<Vec3>, Vec<[usize; 3]>) {
    let mut v: Vec<Vec3> = ring(-0.5, 0.5, n).collect();
    v.push([0.0, 0.5, 0.0]);
    v.push([0.0, -0.5, 0.0]);
    let (apex, base) = (n, n + 1);
    let mut t = Vec::new();
    for i in 0..n {
        let j = (i + 1) % n;
        t.push([apex, j, i]);
        t.push([base, i, j]);
    }
    (v, t)
}

fn torus(major: usize, minor: usize) -> (Vec<Vec3>, Vec<[usize; 3]>) {
    let (big, small) = (0.35, 0.15);
    let mut v = Vec::new();
    for i in 0..major {
        let a = 2.0 * PI * i as f64 / major as f64;
        for j in 0..minor {
            let b = 2.0 * PI * j as f64 / minor as f64;
            let r = big + small * b.cos();
            v.push([r * a.cos(), small * b.sin(), r * a.sin()]);
        }
    }
    let at = |i: usize, j: usize| (i % major) * minor + j % minor;
    let mut t = Vec::new();
    for i in 0..major {
        for j in 0..minor {
            t.push([at(i, j), at(i + 1, j), at(i + 1, j + 1)]);
            t.push([at(i, j), at(i + 1, j + 1), at(i, j + 1)]);
        }
    }
    (v, t)
}

fn pyramid() -> (Vec<Vec3>, Vec<[usize; 3]>) {
    let v = vec![[-0.5, -0.5, -0.5], [0.5, -0.5, -0.5], [0.5, -0.5, 0.5], [-0.5, -0.5, 0.5], [0.0, 0.5, 0.0]];
    let t = vec![[0, 1, 4], [1, 2, 4], [2, 3, 4], [3, 0, 4], [0, 2, 1], [0, 3, 2]];
    (v, t)
}
