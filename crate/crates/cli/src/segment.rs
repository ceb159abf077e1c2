//! The `segment` subcommand.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::Args;
use vesselseg_core::metrics::{
    masked_mean_susceptibility, vessel_proportion, MaskCondition, Provenance,
};
use vesselseg_core::nifti_io::{load_mask, load_volume, save_mask, save_volume};
use vesselseg_core::pipeline::{segment, ChiMap, Inputs, MapResult};
use vesselseg_core::refine::ComponentStats;
use vesselseg_core::{BinaryMask3, Grid, MetricsReport, PipelineConfig, Volume3};

use crate::error::{input, output, CliError, CliResult, Kind};
use crate::output::{sha256_file, sha256_hex, Staging};
use crate::overlay::{encode_png, render, Plane};
use crate::{init_threads, load_config};

#[derive(Args)]
pub struct SegmentArgs {
    /// Run configuration (TOML). Relative paths inside it resolve against
    /// the file's directory.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory. Overrides `out_dir` from the config.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    r2star: Option<PathBuf>,
    #[arg(long)]
    chi_para: Option<PathBuf>,
    /// Diamagnetic component; its magnitude is used.
    #[arg(long)]
    chi_dia: Option<PathBuf>,
    #[arg(long)]
    brain_mask: Option<PathBuf>,
    /// Also write seeds, vesselness and MIP volumes.
    #[arg(long)]
    dump_intermediates: bool,
    /// Also write PNG overlays of the central slices.
    #[arg(long)]
    overlays: bool,
    #[arg(long)]
    aniso_thresh_para: Option<f64>,
    #[arg(long)]
    aniso_thresh_dia: Option<f64>,
}

fn required<'a>(p: &'a Option<PathBuf>, key: &str) -> CliResult<&'a Path> {
    p.as_deref().ok_or_else(|| {
        CliError::new(
            Kind::Config,
            format!(
                "no `{key}` given (config key or --{})",
                key.replace('_', "-")
            ),
        )
    })
}

/// Configuration with run-local settings cleared, as echoed in the
/// manifest and hashed for provenance.
fn canonical(cfg: &PipelineConfig) -> String {
    let mut c = cfg.clone();
    c.out_dir = None;
    c.threads = 0;
    c.to_toml_string()
}

fn load_inputs(cfg: &PipelineConfig) -> CliResult<(Inputs, BTreeMap<String, String>)> {
    let paths = [
        ("r2star", required(&cfg.r2star, "r2star")?),
        ("chi_para", required(&cfg.chi_para, "chi_para")?),
        ("chi_dia", required(&cfg.chi_dia, "chi_dia")?),
        ("brain_mask", required(&cfg.brain_mask, "brain_mask")?),
    ];
    let mut hashes = BTreeMap::new();
    for (name, p) in paths {
        let h = sha256_file(p)
            .map_err(|e| CliError::new(Kind::Input, format!("{}: {e}", p.display())))?;
        hashes.insert(name.to_string(), h);
    }
    let r2star = load_volume(paths[0].1).map_err(input(paths[0].1.display()))?;
    let chi_para = load_volume(paths[1].1).map_err(input(paths[1].1.display()))?;
    let dia = load_volume(paths[2].1).map_err(input(paths[2].1.display()))?;
    let chi_dia = dia
        .with_data(dia.data().iter().map(|v| v.abs()).collect())
        .map_err(input(paths[2].1.display()))?;
    let brain = load_mask(paths[3].1).map_err(input(paths[3].1.display()))?;
    let inputs = Inputs {
        r2star,
        chi_para,
        chi_dia,
        brain,
    };
    inputs.check_geometry().map_err(input("input geometry"))?;
    Ok((inputs, hashes))
}

fn map_reports(
    chi: &Volume3,
    brain: &BinaryMask3,
    result: &MapResult,
    seeds: usize,
    provenance: &Provenance,
) -> CliResult<Vec<MetricsReport>> {
    let vessel = &result.refined;
    MaskCondition::ALL
        .iter()
        .map(|&condition| {
            let region = condition.region(brain, vessel).map_err(output("report"))?;
            let mut extra = BTreeMap::new();
            extra.insert("region_voxels".into(), region.count() as f64);
            extra.insert("initial_voxels".into(), result.initial.count() as f64);
            extra.insert("refined_voxels".into(), vessel.count() as f64);
            extra.insert("seed_voxels".into(), seeds as f64);
            extra.insert("components_initial".into(), result.components.len() as f64);
            Ok(MetricsReport {
                condition,
                vessel_proportion_pct: vessel_proportion(brain, vessel).ok(),
                mean_susceptibility: masked_mean_susceptibility(chi, &region, vessel, false).ok(),
                extra,
                provenance: provenance.clone(),
                ..MetricsReport::default()
            })
        })
        .collect()
}

fn components_tsv(grid: &Grid, components: &[ComponentStats], thresh: f64) -> String {
    let mut s = String::from("min_index\ti\tj\tk\tsize\tmean_anisotropy\tkept\n");
    for c in components {
        let [i, j, k] = grid.coords(c.min_index);
        let kept = c.mean_anisotropy >= thresh;
        let _ = writeln!(
            s,
            "{}\t{i}\t{j}\t{k}\t{}\t{:.6e}\t{}",
            c.min_index, c.size, c.mean_anisotropy, kept as u8
        );
    }
    s
}

/// Component counts and voxel totals in quarter-decade bins of mean
/// anisotropy from 1e-7 to 1.
fn anisotropy_histogram_tsv(components: &[ComponentStats]) -> String {
    const LO: i32 = -28;
    const HI: i32 = 0;
    let mut counts = vec![(0usize, 0usize); (HI - LO) as usize + 2];
    for c in components {
        let bin = if c.mean_anisotropy > 0.0 {
            ((c.mean_anisotropy.log10() * 4.0).floor() as i32).clamp(LO - 1, HI) - (LO - 1)
        } else {
            0
        };
        counts[bin as usize].0 += 1;
        counts[bin as usize].1 += c.size;
    }
    let mut s = String::from("bin_lo\tbin_hi\tcomponents\tvoxels\n");
    for (b, (n, v)) in counts.iter().enumerate() {
        let e = LO - 1 + b as i32;
        let lo = if b == 0 {
            0.0
        } else {
            10f64.powf(e as f64 / 4.0)
        };
        let hi = if e >= HI {
            f64::INFINITY
        } else {
            10f64.powf((e + 1) as f64 / 4.0)
        };
        let _ = writeln!(s, "{lo:.4e}\t{hi:.4e}\t{n}\t{v}");
    }
    s
}

pub fn run(args: SegmentArgs, threads: Option<usize>) -> CliResult<()> {
    let mut cfg = load_config(args.config.as_deref())?;
    for (slot, v) in [
        (&mut cfg.r2star, args.r2star),
        (&mut cfg.chi_para, args.chi_para),
        (&mut cfg.chi_dia, args.chi_dia),
        (&mut cfg.brain_mask, args.brain_mask),
        (&mut cfg.out_dir, args.out),
    ] {
        if v.is_some() {
            *slot = v;
        }
    }
    if let Some(t) = threads {
        cfg.threads = t;
    }
    if let Some(t) = args.aniso_thresh_para {
        cfg.aniso_thresh_para = t;
    }
    if let Some(t) = args.aniso_thresh_dia {
        cfg.aniso_thresh_dia = t;
    }
    cfg.dump_intermediates |= args.dump_intermediates;
    cfg.emit_overlays |= args.overlays;
    cfg.validate()
        .map_err(|e| CliError::new(Kind::Config, e.to_string()))?;
    let out_dir = required(&cfg.out_dir, "out_dir")?.to_path_buf();
    init_threads(cfg.threads);

    let (inputs, input_hashes) = load_inputs(&cfg)?;
    let config_text = canonical(&cfg);
    let config_hash = sha256_hex(config_text.as_bytes());
    let seg = segment(&inputs, &cfg, cfg.dump_intermediates).map_err(input("segmentation"))?;

    let header = inputs.r2star.header().cloned();
    let mut staging = Staging::new(&out_dir)?;
    let save = |staging: &mut Staging, name: &str, mask: &BinaryMask3| -> CliResult<()> {
        let path = staging.file(name)?;
        save_mask(&mask.clone().with_header(header.clone()), &path).map_err(output(name))
    };
    save(&mut staging, "vessel_mask_chi_para.nii", &seg.para.refined)?;
    save(&mut staging, "vessel_mask_chi_dia.nii", &seg.dia.refined)?;
    if cfg.write_union {
        save(
            &mut staging,
            "vessel_mask_union.nii",
            &seg.union().map_err(output("union"))?,
        )?;
    }
    save(&mut staging, "seeds.nii", &seg.seeds)?;

    let provenance = Provenance {
        inputs: input_hashes.clone(),
        config_hash: Some(config_hash.clone()),
    };
    let mut report = BTreeMap::new();
    for (map, chi, result) in [
        (ChiMap::Para, &inputs.chi_para, &seg.para),
        (ChiMap::Dia, &inputs.chi_dia, &seg.dia),
    ] {
        report.insert(
            map.name(),
            map_reports(chi, &inputs.brain, result, seg.seeds.count(), &provenance)?,
        );
        let thresh = cfg.refine_config(map).aniso_thresh;
        staging.write(
            &format!("components_{}.tsv", map.name()),
            components_tsv(inputs.r2star.grid(), &result.components, thresh).as_bytes(),
        )?;
        staging.write(
            &format!("anisotropy_histogram_{}.tsv", map.name()),
            anisotropy_histogram_tsv(&result.components).as_bytes(),
        )?;
    }
    let json = serde_json::to_string_pretty(&report)
        .map_err(|e| CliError::new(Kind::Output, e.to_string()))?;
    staging.write("report.json", json.as_bytes())?;

    if cfg.dump_intermediates {
        save(
            &mut staging,
            "intermediates/seeds_large.nii",
            &seg.large_seeds,
        )?;
        save(
            &mut staging,
            "intermediates/seeds_small.nii",
            &seg.small_seeds,
        )?;
        save(
            &mut staging,
            "intermediates/initial_chi_para.nii",
            &seg.para.initial,
        )?;
        save(
            &mut staging,
            "intermediates/initial_chi_dia.nii",
            &seg.dia.initial,
        )?;
        let mut vols: Vec<(&str, &Volume3)> = Vec::new();
        if let Some(im) = &seg.intermediates {
            vols.push(("intermediates/r2star_highpass.nii", &im.highpassed_r2star));
            vols.push(("intermediates/vesselness_r2star.nii", &im.v_mfat_r2star));
            vols.push(("intermediates/product_mip.nii", &im.product_mip));
        }
        if let Some(v) = &seg.para.v_mfat {
            vols.push(("intermediates/vesselness_chi_para.nii", v));
        }
        if let Some(v) = &seg.dia.v_mfat {
            vols.push(("intermediates/vesselness_chi_dia.nii", v));
        }
        for (name, vol) in vols {
            let path = staging.file(name)?;
            let vol = if vol.grid().matches(inputs.r2star.grid()) {
                vol.clone().with_header(header.clone())
            } else {
                vol.clone()
            };
            save_volume(&vol, &path).map_err(output(name))?;
        }
    }

    if cfg.emit_overlays {
        for (map, chi, result) in [
            (ChiMap::Para, &inputs.chi_para, &seg.para),
            (ChiMap::Dia, &inputs.chi_dia, &seg.dia),
        ] {
            for plane in Plane::ALL {
                let png = encode_png(&render(chi, &result.refined, plane))
                    .map_err(|e| CliError::new(Kind::Output, e.to_string()))?;
                staging.write(
                    &format!("overlays/{}_{}.png", map.name(), plane.name()),
                    &png,
                )?;
            }
        }
    }

    let mut manifest = String::new();
    let _ = writeln!(manifest, "# vesselseg {}", env!("CARGO_PKG_VERSION"));
    let _ = writeln!(manifest, "config_sha256 = \"{config_hash}\"\n\n[inputs]");
    for (k, h) in &input_hashes {
        let _ = writeln!(manifest, "{k} = \"{h}\"");
    }
    manifest.push_str("\n[outputs]\n");
    for (name, h) in staging.hashes()? {
        let _ = writeln!(manifest, "\"{name}\" = \"{h}\"");
    }
    let _ = write!(manifest, "\n[config]\n{config_text}");
    staging.write("manifest.toml", manifest.as_bytes())?;

    let out = staging.commit()?;
    log::info!(
        "wrote {} (chi_para {} voxels, chi_dia {} voxels)",
        out.display(),
        seg.para.refined.count(),
        seg.dia.refined.count()
    );
    Ok(())
}
