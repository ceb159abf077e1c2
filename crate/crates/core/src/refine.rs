//! Removal of connected components with low mean anisotropy.

use serde::{Deserialize, Serialize};

use crate::components::{connected_components, Connectivity};
use crate::error::{Error, Result};
use crate::volume::{BinaryMask3, Volume3};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RefineConfig {
    pub aniso_thresh: f64,
    pub connectivity: Connectivity,
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self {
            aniso_thresh: 1.2e-3,
            connectivity: Connectivity::TwentySix,
        }
    }
}

impl RefineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.aniso_thresh.is_finite() && self.aniso_thresh >= 0.0 {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!(
                "aniso_thresh must be non-negative, got {}",
                self.aniso_thresh
            )))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ComponentStats {
    pub size: usize,
    pub min_index: usize,
    pub mean_anisotropy: f64,
}

/// Mean of `ani` over each connected component of `mask`, in label order
/// (ascending smallest member index).
pub fn cc_mean_anisotropy(
    mask: &BinaryMask3,
    ani: &Volume3,
    connectivity: Connectivity,
) -> Result<Vec<ComponentStats>> {
    Ok(labeled_stats(mask, ani, connectivity)?.1)
}

fn labeled_stats(
    mask: &BinaryMask3,
    ani: &Volume3,
    connectivity: Connectivity,
) -> Result<(Vec<u32>, Vec<ComponentStats>)> {
    mask.grid()
        .ensure_matches(ani.grid(), "mask vs anisotropy")?;
    let cc = connected_components(mask, connectivity);
    let mut sums = vec![0.0f64; cc.count()];
    for (idx, &l) in cc.labels.iter().enumerate() {
        if l != 0 {
            sums[l as usize - 1] += ani.data()[idx];
        }
    }
    let stats = (0..cc.count())
        .map(|c| ComponentStats {
            size: cc.sizes[c],
            min_index: cc.min_index[c],
            mean_anisotropy: sums[c] / cc.sizes[c] as f64,
        })
        .collect();
    Ok((cc.labels, stats))
}

/// Keeps the components whose mean anisotropy is at least `aniso_thresh`.
pub fn remove_low_anisotropy(
    mask: &BinaryMask3,
    ani: &Volume3,
    cfg: &RefineConfig,
) -> Result<BinaryMask3> {
    cfg.validate()?;
    let (labels, stats) = labeled_stats(mask, ani, cfg.connectivity)?;
    let keep: Vec<bool> = stats
        .iter()
        .map(|s| s.mean_anisotropy >= cfg.aniso_thresh || s.mean_anisotropy.is_nan())
        .collect();
    let out = BinaryMask3::from_bools(
        *mask.grid(),
        labels.iter().map(|&l| l != 0 && keep[l as usize - 1]),
    )?;
    log::info!(
        "refinement: kept {} of {} components ({} -> {} voxels)",
        keep.iter().filter(|&&k| k).count(),
        stats.len(),
        mask.count(),
        out.count()
    );
    Ok(out)
}
