use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::mesh::{make_primitive, ShapeClass};
use super::ppm::{read_ppm, write_ppm};
use super::raster::{render_sequence, CameraRig};
use crate::error::{param_err, Error, Result};
use crate::layers::derive_seed;
use crate::tensor::Tensor;

pub const MANIFEST_NAME: &str = "manifest.tsv";
const MANIFEST_HEADER: &str = "# vipgan dataset manifest";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            _ => Err(Error::Format(format!("unknown split {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetConfig {
    pub classes: Vec<ShapeClass>,
    pub instances_per_class: usize,
    pub split_fraction: f64,
    pub views: usize,
    pub resolution: usize,
    pub seed: u64,
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.classes.is_empty() {
            return Err(param_err!("classes: at least one class required"));
        }
        if self.classes.iter().collect::<HashSet<_>>().len() != self.classes.len() {
            return Err(param_err!("classes: duplicate class"));
        }
        if self.instances_per_class < 2 {
            return Err(param_err!("instances_per_class must be at least 2, got {}", self.instances_per_class));
        }
        if !(self.split_fraction > 0.0 && self.split_fraction < 1.0) {
            return Err(param_err!("split_fraction must lie in (0, 1), got {}", self.split_fraction));
        }
        if self.views == 0 || self.views > 100 {
            return Err(param_err!("views must lie in 1..=100, got {}", self.views));
        }
        if self.resolution == 0 {
            return Err(param_err!("resolution must be positive"));
        }
        Ok(())
    }

    /// Train instances per class: rounded share, keeping both splits non-empty.
    pub fn train_per_class(&self) -> usize {
        let n = self.instances_per_class;
        ((n as f64 * self.split_fraction).round() as usize).clamp(1, n - 1)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestRecord {
    pub split: Split,
    pub class: String,
    pub shape_id: String,
    /// View paths relative to the dataset root, in view order.
    pub views: Vec<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetManifest {
    pub views: usize,
    pub resolution: usize,
    pub records: Vec<ManifestRecord>,
}

impl DatasetManifest {
    pub fn to_text(&self) -> String {
        let mut out = format!("{MANIFEST_HEADER}\nviews\t{}\nresolution\t{}\n", self.views, self.resolution);
        for r in &self.records {
            out.push_str(&format!("{}\t{}\t{}", r.split, r.class, r.shape_id));
            for p in &r.views {
                out.push('\t');
                out.push_str(&p.to_string_lossy());
            }
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut views = None;
        let mut resolution = None;
        let mut records = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            let bad = |msg: String| Error::Format(format!("manifest line {}: {msg}", lineno + 1));
            match fields[0] {
                "views" | "resolution" => {
                    let v: usize = fields
                        .get(1)
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| bad(format!("{} needs a positive integer", fields[0])))?;
                    if fields[0] == "views" {
                        views = Some(v);
                    } else {
                        resolution = Some(v);
                    }
                }
                _ => {
                    if fields.len() < 4 {
                        return Err(bad("record needs split, class, shape id and view paths".into()));
                    }
                    records.push(ManifestRecord {
                        split: fields[0].parse().map_err(|e: Error| bad(e.to_string()))?,
                        class: fields[1].to_string(),
                        shape_id: fields[2].to_string(),
                        views: fields[3..].iter().map(PathBuf::from).collect(),
                    });
                }
            }
        }
        let manifest = Self {
            views: views.ok_or_else(|| Error::Format("manifest lacks a views line".into()))?,
            resolution: resolution.ok_or_else(|| Error::Format("manifest lacks a resolution line".into()))?,
            records,
        };
        manifest.check()?;
        Ok(manifest)
    }

    fn check(&self) -> Result<()> {
        let mut ids = HashSet::new();
        for r in &self.records {
            if r.views.len() != self.views {
                return Err(Error::Data(format!(
                    "record {}: {} view paths, manifest declares {}",
                    r.shape_id,
                    r.views.len(),
                    self.views
                )));
            }
            if !ids.insert(&r.shape_id) {
                return Err(Error::Data(format!("record {}: duplicate shape id", r.shape_id)));
            }
        }
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}

pub fn view_file_name(k: usize) -> String {
    format!("view_{k:02}.ppm")
}

/// Renders every instance and writes `<root>/<shape_id>/view_XX.ppm` plus
/// `<root>/manifest.tsv`.
pub fn export_dataset(config: &DatasetConfig, root: &Path) -> Result<DatasetManifest> {
    config.validate()?;
    let rig = CameraRig::new(config.views)?;
    let n_train = config.train_per_class();
    fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
    let mut records = Vec::new();
    for (ci, &class) in config.classes.iter().enumerate() {
        let mut order: Vec<usize> = (0..config.instances_per_class).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(config.seed, 0x5_0000 + ci as u64)));
        let mut is_train = vec![false; order.len()];
        for &i in &order[..n_train] {
            is_train[i] = true;
        }
        for i in 0..config.instances_per_class {
            let shape_id = format!("{}_{:04}", class.name(), i);
            let seed = derive_seed(config.seed, ((ci as u64) << 32) | i as u64);
            let mesh = make_primitive(class, seed);
            let dir = root.join(&shape_id);
            fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
            let mut views = Vec::with_capacity(config.views);
            for view in render_sequence(&mesh, &rig, config.resolution)? {
                let rel = PathBuf::from(&shape_id).join(view_file_name(view.view_index));
                write_ppm(&root.join(&rel), &view.image)?;
                views.push(rel);
            }
            records.push(ManifestRecord {
                split: if is_train[i] { Split::Train } else { Split::Test },
                class: class.name().to_string(),
                shape_id,
                views,
            });
        }
    }
    let manifest = DatasetManifest { views: config.views, resolution: config.resolution, records };
    manifest.write(&root.join(MANIFEST_NAME))?;
    Ok(manifest)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadedShape {
    pub split: Split,
    pub class: String,
    pub label: usize,
    pub shape_id: String,
    pub views: Vec<Tensor<f32>>,
}

/// Dataset loaded into memory. Labels index `class_names`, which lists
/// classes in order of first appearance in the manifest.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub class_names: Vec<String>,
    pub shapes: Vec<LoadedShape>,
}

impl Dataset {
    pub fn split_indices(&self, split: Split) -> Vec<usize> {
        (0..self.shapes.len()).filter(|&i| self.shapes[i].split == split).collect()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.shapes.iter().map(|s| s.label).collect()
    }
}

/// Loads a manifest and every referenced view. `path` may name the
/// manifest file or the dataset root directory.
pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let manifest_path = if path.is_dir() { path.join(MANIFEST_NAME) } else { path.to_path_buf() };
    let root = manifest_path.parent().unwrap_or(Path::new(".")).to_path_buf();
    let manifest = DatasetManifest::read(&manifest_path)?;
    let mut class_names: Vec<String> = Vec::new();
    let mut shapes = Vec::with_capacity(manifest.records.len());
    for r in &manifest.records {
        let label = match class_names.iter().position(|c| c == &r.class) {
            Some(l) => l,
            None => {
                class_names.push(r.class.clone());
                class_names.len() - 1
            }
        };
        let mut views = Vec::with_capacity(r.views.len());
        for rel in &r.views {
            let full = root.join(rel);
            if !full.is_file() {
                return Err(Error::Data(format!("record {}: missing view file {}", r.shape_id, full.display())));
            }
            let img = read_ppm(&full).map_err(|e| Error::Data(format!("record {}: {e}", r.shape_id)))?;
            let res = manifest.resolution;
            if img.shape() != [3, res, res] {
                return Err(Error::Data(format!(
                    "record {}: view {} is {}×{}, manifest declares {res}×{res}",
                    r.shape_id,
                    full.display(),
                    img.shape()[2],
                    img.shape()[1]
                )));
            }
            views.push(img);
        }
        shapes.push(LoadedShape {
            split: r.split,
            class: r.class.clone(),
            label,
            shape_id: r.shape_id.clone(),
            views,
        });
    }
    Ok(Dataset { manifest, class_names, shapes })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_text_round_trip() {
        let m = DatasetManifest {
            views: 2,
            resolution: 8,
            records: vec![ManifestRecord {
                split: Split::Test,
                class: "cone".into(),
                shape_id: "cone_0001".into(),
                views: vec!["cone_0001/view_00.ppm".into(), "cone_0001/view_01.ppm".into()],
            }],
        };
        assert_eq!(DatasetManifest::parse(&m.to_text()).unwrap(), m);
    }

    #[test]
    fn manifest_rejects_wrong_view_count() {
        let text = "views\t3\nresolution\t8\ntrain\tcube\tcube_0000\ta.ppm\tb.ppm\n";
        let err = DatasetManifest::parse(text).unwrap_err();
        assert!(err.to_string().contains("cube_0000"), "{err}");
    }

    #[test]
    fn split_counts() {
        let cfg = DatasetConfig {
            classes: vec![ShapeClass::Cube],
            instances_per_class: 10,
            split_fraction: 0.8,
            views: 1,
            resolution: 8,
            seed: 0,
        };
        assert_eq!(cfg.train_per_class(), 8);
        let tiny = DatasetConfig { instances_per_class: 2, split_fraction: 0.99, ..cfg.clone() };
        assert_eq!(tiny.train_per_class(), 1);
        assert!(DatasetConfig { instances_per_class: 1, ..cfg }.validate().is_err());
    }
}
