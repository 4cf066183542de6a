//! Software rendering of labeled meshes: silhouettes, depth, region maps and the
//! projected articular margin.

mod mesh;
mod render;

pub use mesh::{LabeledMesh, MeshLabels};
pub use render::{project_margin, render, visible_region_histogram, RenderOutput};
