//! Procedural shapes, a small software rasterizer and the on-disk dataset format.

pub mod dataset;
pub mod mesh;
pub mod ppm;
pub mod raster;

pub use dataset::{
    export_dataset, load_dataset, view_file_name, Dataset, DatasetConfig, DatasetManifest, LoadedShape, ManifestRecord,
    Split, MANIFEST_NAME,
};
pub use mesh::{make_primitive, MeshShape, ShapeClass, Vec3};
pub use ppm::{decode_ppm, encode_ppm, read_ppm, write_ppm};
pub use raster::{
    rasterize, render_sequence, Camera, CameraRig, RenderedView, AMBIENT, DEFAULT_ALBEDO, DIFFUSE, LIGHT_DIR,
};
