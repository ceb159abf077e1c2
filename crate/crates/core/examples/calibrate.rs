//! Runs the default acceptance scene through the pipeline and prints the
//! overlap figures tracked by the acceptance suite.

use vesselseg_core::metrics::dice;
use vesselseg_core::phantom::generate_scene;
use vesselseg_core::pipeline::{segment, Inputs};
use vesselseg_core::{PipelineConfig, SceneSpec};

fn main() -> vesselseg_core::Result<()> {
    env_logger::init();
    let seed: u64 = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(1);
    let scene = generate_scene(&SceneSpec::acceptance(), seed)?;
    let inputs = Inputs {
        r2star: scene.r2star.clone(),
        chi_para: scene.chi_para.clone(),
        chi_dia: scene.chi_dia.clone(),
        brain: scene.brain.clone(),
    };
    let cfg = PipelineConfig::default();
    let t = std::time::Instant::now();
    let seg = segment(&inputs, &cfg, false)?;
    let blobs = scene.gt_blobs.count();
    let in_blobs =
        |m: &vesselseg_core::BinaryMask3| m.intersect(&scene.gt_blobs).map(|x| x.count());
    println!(
        "seed {seed}, {:.1} s, gt vessels {}, gt blobs {blobs}",
        t.elapsed().as_secs_f64(),
        scene.gt_vessels.count()
    );
    println!(
        "seeds: large {} small {} total {} (on tubes {}, on blobs {})",
        seg.large_seeds.count(),
        seg.small_seeds.count(),
        seg.seeds.count(),
        seg.seeds.intersect(&scene.gt_vessels)?.count(),
        in_blobs(&seg.seeds)?
    );
    for (name, r) in [("chi_para", &seg.para), ("chi_dia", &seg.dia)] {
        println!(
            "{name}: initial {} (dsc {:.4}, blob voxels {}), refined {} (dsc {:.4}, blob voxels {} of {blobs}), components {}",
            r.initial.count(),
            dice(&r.initial, &scene.gt_vessels)?,
            in_blobs(&r.initial)?,
            r.refined.count(),
            dice(&r.refined, &scene.gt_vessels)?,
            in_blobs(&r.refined)?,
            r.components.len()
        );
        println!(
            "  tube voxels found: initial {}, refined {}",
            r.initial.intersect(&scene.gt_vessels)?.count(),
            r.refined.intersect(&scene.gt_vessels)?.count()
        );
        let mut comps = r.components.clone();
        comps.sort_by_key(|c| std::cmp::Reverse(c.size));
        for c in comps.iter().take(8) {
            println!("  size {:6} mean ani {:.3e}", c.size, c.mean_anisotropy);
        }
    }
    Ok(())
}
