//! Criterion benchmarks for the segmentation stages. See `benches/`.

use vesselseg_core::phantom::{generate_scene, PhantomScene};
use vesselseg_core::SceneSpec;

/// Acceptance scene scaled to `n`³ voxels.
pub fn scene(n: usize) -> PhantomScene {
    generate_scene(&SceneSpec::acceptance_scaled([n; 3]), 1).expect("benchmark scene")
}
