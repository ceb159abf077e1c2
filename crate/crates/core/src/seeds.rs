//! Seed generation: large vessels from R2*, small vessels from the
//! susceptibility product projected through overlapping MIP slabs.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mip::{backproject, mip_slabs, Axis, Image2};
use crate::spectral::{
    highpass_inverse_hamming, inpaint_outside_mask, InpaintConfig, InverseHammingSpec,
};
use crate::stats::mean_std_where;
use crate::vesselness::{mfat, mfat_2d, MfatConfig};
use crate::volume::{BinaryMask3, Volume3};

/// Voxels (or slab pixels) whose vesselness enters the threshold statistics.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StatsDomain {
    #[default]
    Brain,
    Volume,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedConfig {
    pub k_large: f64,
    pub k_small: f64,
    pub slab_mm: f64,
    pub axis: Axis,
    pub hamming: InverseHammingSpec,
    pub mfat: MfatConfig,
    pub inpaint: InpaintConfig,
    pub stats_domain: StatsDomain,
}

impl Default for SeedConfig {
    fn default() -> Self {
        Self {
            k_large: 2.0,
            k_small: 1.0,
            slab_mm: 16.0,
            axis: Axis::Z,
            hamming: InverseHammingSpec::default(),
            mfat: MfatConfig::default(),
            inpaint: InpaintConfig::default(),
            stats_domain: StatsDomain::Brain,
        }
    }
}

impl SeedConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.k_small > 0.0 && self.k_large > self.k_small && self.k_large.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "need k_large > k_small > 0, got k_large = {}, k_small = {}",
                self.k_large, self.k_small
            )));
        }
        if !(self.slab_mm.is_finite() && self.slab_mm > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "slab_mm must be positive, got {}",
                self.slab_mm
            )));
        }
        self.hamming.validate()?;
        self.mfat.validate()
    }
}

#[derive(Clone, Debug)]
pub struct LargeSeeds {
    pub seeds: BinaryMask3,
    pub highpassed: Volume3,
    pub v_mfat: Volume3,
}

pub fn large_vessel_seeds(
    r2star: &Volume3,
    brain: &BinaryMask3,
    cfg: &SeedConfig,
) -> Result<BinaryMask3> {
    Ok(large_vessel_seeds_detailed(r2star, brain, cfg)?.seeds)
}

/// Large-vessel seeds together with the high-passed R2* and its vesselness.
pub fn large_vessel_seeds_detailed(
    r2star: &Volume3,
    brain: &BinaryMask3,
    cfg: &SeedConfig,
) -> Result<LargeSeeds> {
    cfg.validate()?;
    r2star
        .grid()
        .ensure_matches(brain.grid(), "R2* vs brain mask")?;
    let inpainted = inpaint_outside_mask(r2star, brain, &cfg.inpaint)?;
    let highpassed = highpass_inverse_hamming(&inpainted, &cfg.hamming)?;
    drop(inpainted);
    let v_mfat = mfat(&highpassed, &cfg.mfat)?.v_mfat;

    let data = v_mfat.data();
    let stats = match cfg.stats_domain {
        StatsDomain::Brain => mean_std_where(data, |i| brain.contains(i)),
        StatsDomain::Volume => mean_std_where(data, |_| true),
    };
    let (mean, std) = stats.ok_or(Error::EmptyRegion("brain mask"))?;
    let cut = mean + cfg.k_large * std;
    let seeds = BinaryMask3::from_bools(
        *brain.grid(),
        data.iter()
            .enumerate()
            .map(|(i, &v)| v > cut && brain.contains(i)),
    )?;
    log::info!(
        "large-vessel seeds: {} voxels above {cut:.4e}",
        seeds.count()
    );
    Ok(LargeSeeds {
        seeds,
        highpassed,
        v_mfat,
    })
}

#[derive(Clone, Debug)]
pub struct SmallSeeds {
    pub seeds: BinaryMask3,
    /// Per slab, the product MIP after suppression by the large seeds.
    pub product_mip: Vec<Image2<f64>>,
}

pub fn small_vessel_seeds(
    chi_para: &Volume3,
    chi_dia: &Volume3,
    large_seeds: &BinaryMask3,
    brain: &BinaryMask3,
    cfg: &SeedConfig,
) -> Result<BinaryMask3> {
    Ok(small_vessel_seeds_detailed(chi_para, chi_dia, large_seeds, brain, cfg)?.seeds)
}

pub fn small_vessel_seeds_detailed(
    chi_para: &Volume3,
    chi_dia: &Volume3,
    large_seeds: &BinaryMask3,
    brain: &BinaryMask3,
    cfg: &SeedConfig,
) -> Result<SmallSeeds> {
    cfg.validate()?;
    let grid = chi_para.grid();
    grid.ensure_matches(chi_dia.grid(), "chi_para vs chi_dia")?;
    grid.ensure_matches(large_seeds.grid(), "chi_para vs large seeds")?;
    grid.ensure_matches(brain.grid(), "chi_para vs brain mask")?;

    let product: Vec<f64> = chi_para
        .data()
        .iter()
        .zip(chi_dia.data())
        .map(|(a, b)| a * b)
        .collect();
    let mut stack = mip_slabs(&chi_para.with_data(product)?, cfg.slab_mm, cfg.axis)?;
    let covered = stack.sample_at_argmax(large_seeds)?;
    let footprint = stack.footprint(brain)?;
    for (slab, cov) in stack.slabs.iter_mut().zip(&covered) {
        for (x, &c) in slab.data.iter_mut().zip(&cov.data) {
            *x *= 1.0 - c as f64;
        }
    }

    let seeds2d = stack
        .slabs
        .par_iter()
        .zip(footprint.par_iter())
        .map(|(slab, fp)| -> Result<Image2<u8>> {
            let v = mfat_2d(slab, &cfg.mfat)?.v_mfat;
            let stats = match cfg.stats_domain {
                StatsDomain::Brain => mean_std_where(&v.data, |p| fp.data[p] != 0),
                StatsDomain::Volume => mean_std_where(&v.data, |_| true),
            };
            let mut out = Image2::filled(v.width, v.height, 0u8);
            if let Some((mean, std)) = stats {
                let cut = mean + cfg.k_small * std;
                for (o, &x) in out.data.iter_mut().zip(&v.data) {
                    *o = (x > cut) as u8;
                }
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;

    let seeds = backproject(&seeds2d, &stack)?.intersect(brain)?;
    log::info!(
        "small-vessel seeds: {} voxels from {} slabs",
        seeds.count(),
        stack.slabs.len()
    );
    Ok(SmallSeeds {
        seeds,
        product_mip: stack.slabs,
    })
}

pub fn combine_seeds(large: &BinaryMask3, small: &BinaryMask3) -> Result<BinaryMask3> {
    large.union(small)
}
