//! Target geometry: meshes, cameras, rasterized G-buffers and the
//! normal / depth condition images.

mod camera;
mod condition;
mod mesh;
pub mod primitives;
mod raster;

pub use camera::{azimuth_degrees, sample_camera, CameraPose, ViewConfig};
pub use condition::{
    decode_normal, encode_normal, render_condition, ConditionImage, ConditionKind,
    NORMAL_BACKGROUND,
};
pub use mesh::{is_degenerate, load_mesh, parse_obj, Face, LoadReport, TriangleMesh};
pub use raster::{rasterize, GBuffer, NEAR_PLANE};
