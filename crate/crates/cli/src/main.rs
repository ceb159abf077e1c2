//! `vesselseg`: vessel segmentation of susceptibility source-separated MRI.

mod error;
mod eval;
mod output;
mod overlay;
mod segment;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use vesselseg_core::nifti_io::{load_mask, load_volume, save_volume};
use vesselseg_core::phantom::{generate_scene, SCENE_FILES};
use vesselseg_core::pipeline::map_vesselness;
use vesselseg_core::{BinaryMask3, PipelineConfig, SceneSpec};

use crate::error::{input, output, CliError, CliResult, Kind};
use crate::output::{write_atomically, Staging};

#[derive(Parser)]
#[command(
    name = "vesselseg",
    version,
    about = "Vessel segmentation for susceptibility source-separated MRI"
)]
struct Cli {
    /// Worker threads (0 = all cores). Overrides the config file.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run seed generation, region growing and refinement.
    Segment(segment::SegmentArgs),
    /// Compare a mask against a reference and report metrics as JSON.
    Eval(eval::EvalArgs),
    /// Write a synthetic scene with ground truth.
    Phantom(PhantomArgs),
    /// Write the multi-scale vesselness map of one volume.
    Vesselness(VesselnessArgs),
}

#[derive(Args)]
struct PhantomArgs {
    /// Scene description (TOML). Defaults to the built-in acceptance scene.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Use the acceptance layout scaled to these dimensions, e.g. 256,224,176.
    #[arg(long, value_delimiter = ',', conflicts_with = "spec")]
    dims: Option<Vec<usize>>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct VesselnessArgs {
    #[arg(long)]
    input: PathBuf,
    /// Restrict the per-scale reductions to this mask.
    #[arg(long)]
    mask: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output NIfTI file.
    #[arg(long)]
    out: PathBuf,
}

/// Reads a run configuration, resolving relative paths against the file's
/// directory.
pub fn load_config(path: Option<&Path>) -> CliResult<PipelineConfig> {
    let Some(path) = path else {
        return Ok(PipelineConfig::default());
    };
    let text = fs::read_to_string(path).map_err(|e| {
        CliError::new(
            Kind::Config,
            format!("cannot read config {}: {e}", path.display()),
        )
    })?;
    let mut cfg = PipelineConfig::from_toml_str(&text)
        .map_err(|e| CliError::new(Kind::Config, format!("{}: {e}", path.display())))?;
    let base = path.parent().unwrap_or(Path::new(""));
    for p in [
        &mut cfg.r2star,
        &mut cfg.chi_para,
        &mut cfg.chi_dia,
        &mut cfg.brain_mask,
        &mut cfg.out_dir,
    ]
    .into_iter()
    .flatten()
    {
        if p.is_relative() {
            *p = base.join(&*p);
        }
    }
    Ok(cfg)
}

pub fn init_threads(n: usize) {
    if n > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            log::warn!("thread pool already initialised: {e}");
        }
    }
}

fn run_phantom(args: PhantomArgs) -> CliResult<()> {
    let spec = match (&args.spec, &args.dims) {
        (Some(path), _) => {
            let text = fs::read_to_string(path).map_err(|e| {
                CliError::new(
                    Kind::Config,
                    format!("cannot read scene {}: {e}", path.display()),
                )
            })?;
            SceneSpec::from_toml_str(&text)
                .map_err(|e| CliError::new(Kind::Config, format!("{}: {e}", path.display())))?
        }
        (None, Some(d)) => {
            if d.len() != 3 {
                return Err(CliError::new(
                    Kind::Config,
                    "--dims needs three comma-separated sizes",
                ));
            }
            let spec = SceneSpec::acceptance_scaled([d[0], d[1], d[2]]);
            spec.validate()
                .map_err(|e| CliError::new(Kind::Config, e.to_string()))?;
            spec
        }
        (None, None) => SceneSpec::acceptance(),
    };
    let scene =
        generate_scene(&spec, args.seed).map_err(|e| CliError::new(Kind::Config, e.to_string()))?;

    let mut staging = Staging::new(&args.out)?;
    for name in SCENE_FILES {
        staging.file(name)?;
    }
    let dir = staging.file("scene.toml")?.parent().unwrap().to_path_buf();
    scene.save(&dir).map_err(output("writing scene"))?;
    staging.write(
        "scene.toml",
        format!("# rng seed {}\n{}", args.seed, spec.to_toml_string()).as_bytes(),
    )?;
    let cfg = PipelineConfig {
        r2star: Some(SCENE_FILES[0].into()),
        chi_para: Some(SCENE_FILES[1].into()),
        chi_dia: Some(SCENE_FILES[2].into()),
        brain_mask: Some(SCENE_FILES[3].into()),
        ..PipelineConfig::default()
    };
    staging.write("pipeline.toml", cfg.to_toml_string().as_bytes())?;
    let out = staging.commit()?;
    log::info!("scene written to {}", out.display());
    Ok(())
}

fn run_vesselness(args: VesselnessArgs, threads: Option<usize>) -> CliResult<()> {
    let cfg = load_config(args.config.as_deref())?;
    init_threads(threads.unwrap_or(cfg.threads));
    let vol = load_volume(&args.input).map_err(input(args.input.display()))?;
    let mask = match &args.mask {
        Some(p) => load_mask(p).map_err(input(p.display()))?,
        None => BinaryMask3::full(*vol.grid()),
    };
    vol.grid()
        .ensure_matches(mask.grid(), "input vs mask")
        .map_err(input("vesselness"))?;
    let mut cfg = cfg;
    if args.mask.is_some() {
        cfg.vesselness_domain = vesselseg_core::pipeline::VesselnessDomain::Brain;
    }
    let ves = map_vesselness(&vol, &mask, &cfg).map_err(input("vesselness"))?;
    write_atomically(&args.out, |tmp| {
        save_volume(&ves.v_mfat, tmp).map_err(output(args.out.display()))
    })?;
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Segment(a) => segment::run(a, cli.threads),
        Command::Eval(a) => eval::run(a, cli.threads),
        Command::Phantom(a) => {
            init_threads(cli.threads.unwrap_or(0));
            run_phantom(a)
        }
        Command::Vesselness(a) => run_vesselness(a, cli.threads),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
