//! Vessel-geometry-guided region growing.
//!
//! Candidates above the upper intensity limit are always added and those
//! below the lower limit never are. In between, a candidate joins when its
//! vesselness beats a threshold built from direction similarity with the
//! voxel it was reached from, intensity similarity and local anisotropy.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::components::{connected_components, Connectivity, Neighborhood};
use crate::error::{Error, Result};
use crate::stats::mean_std_where;
use crate::vesselness::VesselnessResult;
use crate::volume::{BinaryMask3, Volume3};

/// Intensity floor used before forming intensity ratios.
pub const INTENSITY_EPS: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrowConfig {
    /// Upper limit is `mean + gamma1 * std`.
    pub gamma1: f64,
    /// Lower limit is `mean - gamma2 * std`.
    pub gamma2: f64,
    pub connectivity: Connectivity,
    pub restrict_to_brain: bool,
}

impl Default for GrowConfig {
    fn default() -> Self {
        Self {
            gamma1: 0.5,
            gamma2: 0.5,
            connectivity: Connectivity::TwentySix,
            restrict_to_brain: true,
        }
    }
}

impl GrowConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma1.is_finite() && self.gamma2.is_finite()) {
            return Err(Error::InvalidConfig(
                "gamma1 and gamma2 must be finite".into(),
            ));
        }
        if self.gamma1 + self.gamma2 < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "gamma1 + gamma2 must be non-negative so that upper >= lower, got {} + {}",
                self.gamma1, self.gamma2
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrowLimits {
    pub upper: f64,
    pub lower: f64,
}

pub fn intensity_limits(
    chi: &Volume3,
    seeds: &BinaryMask3,
    cfg: &GrowConfig,
) -> Result<GrowLimits> {
    cfg.validate()?;
    chi.grid()
        .ensure_matches(seeds.grid(), "susceptibility vs seeds")?;
    let (mean, std) =
        mean_std_where(chi.data(), |i| seeds.contains(i)).ok_or(Error::EmptyRegion("seed map"))?;
    Ok(GrowLimits {
        upper: mean + cfg.gamma1 * std,
        lower: mean - cfg.gamma2 * std,
    })
}

/// Borrowed per-voxel inputs of the growth predicate.
#[derive(Clone, Copy)]
pub struct GrowFields<'a> {
    pub chi: &'a [f64],
    pub v_mfat: &'a [f64],
    pub v1: &'a [[f32; 3]],
    pub ani: &'a [f64],
}

impl<'a> GrowFields<'a> {
    pub fn new(chi: &'a Volume3, ves: &'a VesselnessResult) -> Result<Self> {
        chi.grid()
            .ensure_matches(ves.v_mfat.grid(), "susceptibility vs vesselness")?;
        Ok(Self {
            chi: chi.data(),
            v_mfat: ves.v_mfat.data(),
            v1: &ves.v1_field,
            ani: ves.ani.data(),
        })
    }
}

/// Whether candidate `q` joins the mask when reached from `p`.
#[inline]
pub fn grow_condition(p: usize, q: usize, f: &GrowFields, limits: &GrowLimits) -> bool {
    let iq = f.chi[q];
    if iq > limits.upper {
        return true;
    }
    if iq < limits.lower {
        return false;
    }
    let (a, b) = (f.v1[p], f.v1[q]);
    let omega =
        (a[0] as f64 * b[0] as f64 + a[1] as f64 * b[1] as f64 + a[2] as f64 * b[2] as f64).abs();
    let ip = f.chi[p].max(INTENSITY_EPS);
    let iq = iq.max(INTENSITY_EPS);
    let ratio = ip.min(iq) / ip.max(iq);
    let threshold = 0.5 * (1.0 - omega) / ratio * (1.0 - (-10.0 * f.ani[q]).exp());
    f.v_mfat[q] >= threshold
}

/// Seed voxels in processing order: clusters by descending size (ties by
/// smallest member index), ascending linear index within a cluster.
pub fn seed_queue(seeds: &BinaryMask3, connectivity: Connectivity) -> Vec<usize> {
    let cc = connected_components(seeds, connectivity);
    let mut order: Vec<usize> = (0..cc.count()).collect();
    order.sort_by_key(|&c| (std::cmp::Reverse(cc.sizes[c]), cc.min_index[c]));
    let mut rank = vec![0usize; cc.count()];
    for (r, &c) in order.iter().enumerate() {
        rank[c] = r;
    }
    let mut start = vec![0usize; cc.count() + 1];
    for &c in &order {
        start[rank[c] + 1] = cc.sizes[c];
    }
    for r in 0..cc.count() {
        start[r + 1] += start[r];
    }
    let mut queue = vec![0usize; seeds.count()];
    let mut fill = start;
    for idx in seeds.indices() {
        let r = rank[cc.labels[idx] as usize - 1];
        queue[fill[r]] = idx;
        fill[r] += 1;
    }
    queue
}

pub fn region_grow(
    chi: &Volume3,
    seeds: &BinaryMask3,
    ves: &VesselnessResult,
    brain: &BinaryMask3,
    cfg: &GrowConfig,
) -> Result<BinaryMask3> {
    let queue = seed_queue(seeds, cfg.connectivity);
    grow_from_queue(chi, seeds, ves, brain, cfg, queue)
}

/// Region growing with an explicit initial queue, which must list every
/// seed voxel exactly once.
pub fn grow_from_queue(
    chi: &Volume3,
    seeds: &BinaryMask3,
    ves: &VesselnessResult,
    brain: &BinaryMask3,
    cfg: &GrowConfig,
    initial: Vec<usize>,
) -> Result<BinaryMask3> {
    cfg.validate()?;
    let grid = *chi.grid();
    grid.ensure_matches(seeds.grid(), "susceptibility vs seeds")?;
    grid.ensure_matches(brain.grid(), "susceptibility vs brain mask")?;
    if seeds.is_empty() {
        log::warn!("region growing called with an empty seed map");
        return Ok(BinaryMask3::empty(grid));
    }
    let fields = GrowFields::new(chi, ves)?;
    let limits = intensity_limits(chi, seeds, cfg)?;
    let hood = Neighborhood::new(grid, cfg.connectivity);

    let mut mask = seeds.data().to_vec();
    let mut queue = VecDeque::from(initial);
    while let Some(p) = queue.pop_front() {
        hood.for_each(p, |q| {
            if mask[q] == 0
                && (!cfg.restrict_to_brain || brain.contains(q))
                && grow_condition(p, q, &fields, &limits)
            {
                mask[q] = 1;
                queue.push_back(q);
            }
        });
    }
    let out = BinaryMask3::new(grid, mask)?;
    log::info!(
        "region growing: {} seeds -> {} voxels (limits {:.4e}..{:.4e})",
        seeds.count(),
        out.count(),
        limits.lower,
        limits.upper
    );
    Ok(out)
}
