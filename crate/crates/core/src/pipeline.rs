//! Flat run configuration and the three-step segmentation driver.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::components::Connectivity;
use crate::error::{Error, Result};
use crate::grow::{region_grow, GrowConfig};
use crate::mip::{Axis, Image2};
use crate::refine::{cc_mean_anisotropy, remove_low_anisotropy, ComponentStats, RefineConfig};
use crate::seeds::{
    combine_seeds, large_vessel_seeds_detailed, small_vessel_seeds_detailed, SeedConfig,
    StatsDomain,
};
use crate::spectral::{InpaintConfig, InverseHammingSpec};
use crate::vesselness::{mfat, mfat_masked, MfatConfig, VesselnessResult};
use crate::volume::{BinaryMask3, Grid, Volume3};

/// Reduction domain for the per-scale vesselness extremes on the
/// susceptibility maps.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VesselnessDomain {
    #[default]
    Volume,
    Brain,
}

/// Every key of the run configuration file, with defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub r2star: Option<PathBuf>,
    pub chi_para: Option<PathBuf>,
    pub chi_dia: Option<PathBuf>,
    pub brain_mask: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,

    /// Worker threads; 0 uses every available core.
    pub threads: usize,
    pub dump_intermediates: bool,
    pub emit_overlays: bool,
    pub write_union: bool,

    pub k_large: f64,
    pub k_small: f64,
    pub slab_mm: f64,
    pub mip_axis: Axis,
    pub seed_stats_domain: StatsDomain,
    pub hamming_h: [f64; 3],
    pub inpaint_max_iters: usize,
    pub inpaint_tol: f64,

    pub sigmas: Vec<f64>,
    pub tau_rho: f64,
    pub tau_nu: f64,
    pub delta: f64,
    pub vesselness_domain: VesselnessDomain,

    pub gamma1: f64,
    pub gamma2: f64,
    pub connectivity: Connectivity,
    pub restrict_to_brain: bool,

    pub aniso_thresh_para: f64,
    pub aniso_thresh_dia: f64,
    pub refine_connectivity: Connectivity,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let seed = SeedConfig::default();
        let mfat = MfatConfig::default();
        let grow = GrowConfig::default();
        let refine = RefineConfig::default();
        Self {
            r2star: None,
            chi_para: None,
            chi_dia: None,
            brain_mask: None,
            out_dir: None,
            threads: 0,
            dump_intermediates: false,
            emit_overlays: false,
            write_union: true,
            k_large: seed.k_large,
            k_small: seed.k_small,
            slab_mm: seed.slab_mm,
            mip_axis: seed.axis,
            seed_stats_domain: seed.stats_domain,
            hamming_h: seed.hamming.h,
            inpaint_max_iters: seed.inpaint.max_iters,
            inpaint_tol: seed.inpaint.tol,
            sigmas: mfat.sigmas,
            tau_rho: mfat.tau_rho,
            tau_nu: mfat.tau_nu,
            delta: mfat.delta,
            vesselness_domain: VesselnessDomain::Volume,
            gamma1: grow.gamma1,
            gamma2: grow.gamma2,
            connectivity: grow.connectivity,
            restrict_to_brain: grow.restrict_to_brain,
            aniso_thresh_para: refine.aniso_thresh,
            aniso_thresh_dia: refine.aniso_thresh,
            refine_connectivity: refine.connectivity,
        }
    }
}

impl PipelineConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: PipelineConfig = toml::from_str(s).map_err(|e| Error::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Canonical TOML echo of the configuration.
    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("pipeline config serializes")
    }

    pub fn mfat_config(&self) -> MfatConfig {
        MfatConfig {
            sigmas: self.sigmas.clone(),
            tau_rho: self.tau_rho,
            tau_nu: self.tau_nu,
            delta: self.delta,
        }
    }

    pub fn seed_config(&self) -> SeedConfig {
        SeedConfig {
            k_large: self.k_large,
            k_small: self.k_small,
            slab_mm: self.slab_mm,
            axis: self.mip_axis,
            hamming: InverseHammingSpec { h: self.hamming_h },
            mfat: self.mfat_config(),
            inpaint: InpaintConfig {
                max_iters: self.inpaint_max_iters,
                tol: self.inpaint_tol,
            },
            stats_domain: self.seed_stats_domain,
        }
    }

    pub fn grow_config(&self) -> GrowConfig {
        GrowConfig {
            gamma1: self.gamma1,
            gamma2: self.gamma2,
            connectivity: self.connectivity,
            restrict_to_brain: self.restrict_to_brain,
        }
    }

    pub fn refine_config(&self, map: ChiMap) -> RefineConfig {
        RefineConfig {
            aniso_thresh: match map {
                ChiMap::Para => self.aniso_thresh_para,
                ChiMap::Dia => self.aniso_thresh_dia,
            },
            connectivity: self.refine_connectivity,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.seed_config().validate()?;
        self.grow_config().validate()?;
        self.refine_config(ChiMap::Para).validate()?;
        self.refine_config(ChiMap::Dia).validate()?;
        if !(self.inpaint_tol.is_finite() && self.inpaint_tol >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "inpaint_tol must be non-negative, got {}",
                self.inpaint_tol
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ChiMap {
    Para,
    Dia,
}

impl ChiMap {
    pub fn name(self) -> &'static str {
        match self {
            ChiMap::Para => "chi_para",
            ChiMap::Dia => "chi_dia",
        }
    }
}

#[derive(Clone, Debug)]
pub struct Inputs {
    pub r2star: Volume3,
    pub chi_para: Volume3,
    /// Magnitude of the diamagnetic component.
    pub chi_dia: Volume3,
    pub brain: BinaryMask3,
}

impl Inputs {
    pub fn check_geometry(&self) -> Result<()> {
        let g = self.r2star.grid();
        g.ensure_matches(self.chi_para.grid(), "r2star vs chi_para")?;
        g.ensure_matches(self.chi_dia.grid(), "r2star vs chi_dia")?;
        g.ensure_matches(self.brain.grid(), "r2star vs brain mask")
    }
}

/// Per-map outputs of growing and refinement.
#[derive(Clone, Debug)]
pub struct MapResult {
    pub initial: BinaryMask3,
    pub refined: BinaryMask3,
    /// Components of the initial mask with their mean anisotropy.
    pub components: Vec<ComponentStats>,
    pub v_mfat: Option<Volume3>,
}

#[derive(Clone, Debug)]
pub struct Intermediates {
    pub highpassed_r2star: Volume3,
    pub v_mfat_r2star: Volume3,
    /// Suppressed product MIP slabs stacked along the third axis.
    pub product_mip: Volume3,
}

#[derive(Clone, Debug)]
pub struct Segmentation {
    pub large_seeds: BinaryMask3,
    pub small_seeds: BinaryMask3,
    pub seeds: BinaryMask3,
    pub para: MapResult,
    pub dia: MapResult,
    pub intermediates: Option<Intermediates>,
}

impl Segmentation {
    pub fn union(&self) -> Result<BinaryMask3> {
        self.para.refined.union(&self.dia.refined)
    }
}

fn stack_slabs(slabs: &[Image2<f64>], grid: &Grid, axis: Axis, slab_mm: f64) -> Result<Volume3> {
    let [pu, pv] = axis.plane();
    let (w, h) = slabs.first().map_or((1, 1), |s| (s.width, s.height));
    let g = Grid::new(
        [w, h, slabs.len().max(1)],
        [
            grid.spacing[pu],
            grid.spacing[pv],
            (slab_mm / 2.0).max(grid.spacing[axis.index()]),
        ],
    )?;
    let mut data = Vec::with_capacity(g.len());
    for s in slabs {
        data.extend_from_slice(&s.data);
    }
    data.resize(g.len(), 0.0);
    Volume3::new(g, data)
}

/// Vesselness of one susceptibility map with the configured reduction domain.
pub fn map_vesselness(
    chi: &Volume3,
    brain: &BinaryMask3,
    cfg: &PipelineConfig,
) -> Result<VesselnessResult> {
    match cfg.vesselness_domain {
        VesselnessDomain::Volume => mfat(chi, &cfg.mfat_config()),
        VesselnessDomain::Brain => mfat_masked(chi, &cfg.mfat_config(), brain),
    }
}

fn grow_and_refine(
    chi: &Volume3,
    seeds: &BinaryMask3,
    brain: &BinaryMask3,
    cfg: &PipelineConfig,
    map: ChiMap,
    keep_vesselness: bool,
) -> Result<MapResult> {
    let ves = map_vesselness(chi, brain, cfg)?;
    let initial = region_grow(chi, seeds, &ves, brain, &cfg.grow_config())?;
    let refine = cfg.refine_config(map);
    let components = cc_mean_anisotropy(&initial, &ves.ani, refine.connectivity)?;
    let refined = remove_low_anisotropy(&initial, &ves.ani, &refine)?;
    log::info!(
        "{}: {} -> {} voxels after refinement",
        map.name(),
        initial.count(),
        refined.count()
    );
    Ok(MapResult {
        initial,
        refined,
        components,
        v_mfat: keep_vesselness.then_some(ves.v_mfat),
    })
}

/// Seeds, growing and refinement for both susceptibility maps. The maps
/// are processed one after the other to bound peak memory.
pub fn segment(
    inputs: &Inputs,
    cfg: &PipelineConfig,
    keep_intermediates: bool,
) -> Result<Segmentation> {
    cfg.validate()?;
    inputs.check_geometry()?;
    if inputs.brain.is_empty() {
        return Err(Error::EmptyRegion("brain mask"));
    }
    let seed_cfg = cfg.seed_config();
    let large = large_vessel_seeds_detailed(&inputs.r2star, &inputs.brain, &seed_cfg)?;
    let small = small_vessel_seeds_detailed(
        &inputs.chi_para,
        &inputs.chi_dia,
        &large.seeds,
        &inputs.brain,
        &seed_cfg,
    )?;
    let seeds = combine_seeds(&large.seeds, &small.seeds)?;
    log::info!("final seed map: {} voxels", seeds.count());

    let intermediates = if keep_intermediates {
        Some(Intermediates {
            product_mip: stack_slabs(
                &small.product_mip,
                inputs.r2star.grid(),
                seed_cfg.axis,
                seed_cfg.slab_mm,
            )?,
            highpassed_r2star: large.highpassed,
            v_mfat_r2star: large.v_mfat,
        })
    } else {
        None
    };

    let para = grow_and_refine(
        &inputs.chi_para,
        &seeds,
        &inputs.brain,
        cfg,
        ChiMap::Para,
        keep_intermediates,
    )?;
    let dia = grow_and_refine(
        &inputs.chi_dia,
        &seeds,
        &inputs.brain,
        cfg,
        ChiMap::Dia,
        keep_intermediates,
    )?;
    Ok(Segmentation {
        large_seeds: large.seeds,
        small_seeds: small.seeds,
        seeds,
        para,
        dia,
        intermediates,
    })
}
