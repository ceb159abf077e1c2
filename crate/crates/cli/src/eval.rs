//! The `eval` subcommand.

use std::collections::BTreeMap;
use std::path::PathBuf;

use clap::Args;
use vesselseg_core::metrics::{
    central_slices, dice, dice_restricted, masked_mean_susceptibility, rmse_psnr,
    vessel_proportion, MaskCondition, Provenance,
};
use vesselseg_core::nifti_io::{load_mask, load_volume};
use vesselseg_core::{BinaryMask3, MetricsReport};

use crate::error::{input, output_io, CliError, CliResult, Kind};
use crate::init_threads;
use crate::output::{sha256_file, write_atomically};

#[derive(Args)]
pub struct EvalArgs {
    /// Predicted vessel mask.
    #[arg(long)]
    pred: PathBuf,
    /// Reference mask for overlap scoring.
    #[arg(long)]
    gt: Option<PathBuf>,
    /// Restrict overlap to these planes, given as `axis:slice` pairs.
    #[arg(long, value_delimiter = ',', conflicts_with = "central_slices")]
    slices: Option<Vec<String>>,
    /// Restrict overlap to this many central slices per axis.
    #[arg(long)]
    central_slices: Option<usize>,
    /// Region of interest for the regional statistics. Defaults to the
    /// whole volume.
    #[arg(long)]
    roi: Option<PathBuf>,
    /// Susceptibility map for regional means.
    #[arg(long)]
    chi: Option<PathBuf>,
    /// Volume compared against `--reference` for RMSE and PSNR.
    #[arg(long, requires = "reference")]
    volume: Option<PathBuf>,
    #[arg(long, requires = "volume")]
    reference: Option<PathBuf>,
    /// JSON output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_slices(items: &[String]) -> CliResult<Vec<(usize, usize)>> {
    items
        .iter()
        .map(|s| {
            let parsed = s
                .split_once(':')
                .and_then(|(a, b)| Some((a.trim().parse().ok()?, b.trim().parse().ok()?)));
            parsed.ok_or_else(|| {
                CliError::new(
                    Kind::Config,
                    format!("bad slice `{s}`, expected axis:index"),
                )
            })
        })
        .collect()
}

fn hash_into(
    map: &mut BTreeMap<String, String>,
    name: &str,
    path: &std::path::Path,
) -> CliResult<()> {
    let h = sha256_file(path)
        .map_err(|e| CliError::new(Kind::Input, format!("{}: {e}", path.display())))?;
    map.insert(name.to_string(), h);
    Ok(())
}

pub fn run(args: EvalArgs, threads: Option<usize>) -> CliResult<()> {
    init_threads(threads.unwrap_or(0));
    let slices = match (&args.slices, args.central_slices) {
        (Some(items), _) => Some(parse_slices(items)?),
        (None, Some(0)) => {
            return Err(CliError::new(
                Kind::Config,
                "--central-slices must be positive",
            ))
        }
        _ => None,
    };

    let mut hashes = BTreeMap::new();
    hash_into(&mut hashes, "pred", &args.pred)?;
    let pred = load_mask(&args.pred).map_err(input(args.pred.display()))?;
    let grid = *pred.grid();
    let check =
        |g: &vesselseg_core::Grid, what: &str| grid.ensure_matches(g, what).map_err(input("eval"));

    let dsc = match &args.gt {
        Some(p) => {
            hash_into(&mut hashes, "gt", p)?;
            let gt = load_mask(p).map_err(input(p.display()))?;
            check(gt.grid(), "pred vs gt")?;
            let planes = match (slices, args.central_slices) {
                (Some(s), _) => Some(s),
                (None, Some(n)) => Some(central_slices(grid.dims, n)),
                _ => None,
            };
            Some(match planes {
                Some(s) => dice_restricted(&pred, &gt, &s).map_err(input("slices"))?,
                None => dice(&pred, &gt).map_err(input("dice"))?,
            })
        }
        None => None,
    };

    let roi = match &args.roi {
        Some(p) => {
            hash_into(&mut hashes, "roi", p)?;
            let m = load_mask(p).map_err(input(p.display()))?;
            check(m.grid(), "pred vs roi")?;
            m
        }
        None => BinaryMask3::full(grid),
    };
    let chi = match &args.chi {
        Some(p) => {
            hash_into(&mut hashes, "chi", p)?;
            let v = load_volume(p).map_err(input(p.display()))?;
            check(v.grid(), "pred vs chi")?;
            Some(v)
        }
        None => None,
    };
    let pair = match (&args.volume, &args.reference) {
        (Some(a), Some(b)) => {
            hash_into(&mut hashes, "volume", a)?;
            hash_into(&mut hashes, "reference", b)?;
            let va = load_volume(a).map_err(input(a.display()))?;
            let vb = load_volume(b).map_err(input(b.display()))?;
            check(va.grid(), "pred vs volume")?;
            check(vb.grid(), "pred vs reference")?;
            Some((va, vb))
        }
        _ => None,
    };

    let provenance = Provenance {
        inputs: hashes,
        config_hash: None,
    };
    let proportion = vessel_proportion(&roi, &pred).ok();
    let mut reports = Vec::new();
    for condition in MaskCondition::ALL {
        let region = condition.region(&roi, &pred).map_err(input("region"))?;
        let (rmse, psnr) = match &pair {
            Some((a, b)) => match rmse_psnr(a, b, &region) {
                Ok((r, p)) => (Some(r), Some(p)),
                Err(_) => (None, None),
            },
            None => (None, None),
        };
        let mut extra = BTreeMap::new();
        extra.insert("region_voxels".into(), region.count() as f64);
        extra.insert("pred_voxels".into(), pred.count() as f64);
        reports.push(MetricsReport {
            condition,
            dsc,
            rmse,
            psnr,
            vessel_proportion_pct: proportion,
            mean_susceptibility: chi
                .as_ref()
                .and_then(|c| masked_mean_susceptibility(c, &region, &pred, false).ok()),
            extra,
            provenance: provenance.clone(),
        });
    }

    let json = serde_json::to_string_pretty(&reports)
        .map_err(|e| CliError::new(Kind::Output, e.to_string()))?
        + "\n";
    match &args.out {
        Some(path) => write_atomically(path, |tmp| {
            std::fs::write(tmp, json.as_bytes()).map_err(output_io(path.display()))
        }),
        None => {
            print!("{json}");
            Ok(())
        }
    }
}
