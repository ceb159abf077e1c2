//! Prints the phantom oracle values used by the seed and vesselness tests.

use vesselseg_core::components::connected_components;
use vesselseg_core::phantom::{generate_scene, BlobIntensity, BlobSpec, Intensity, TubeSpec};
use vesselseg_core::seeds::{large_vessel_seeds, small_vessel_seeds};
use vesselseg_core::vesselness::mfat;
use vesselseg_core::{BinaryMask3, Connectivity, MfatConfig, SceneSpec, SeedConfig};

fn base() -> SceneSpec {
    let mut s = SceneSpec::acceptance_scaled([64; 3]);
    s.tubes.clear();
    s.blobs.clear();
    s.noise_fraction = std::env::var("NOISE")
        .map(|v| v.parse().unwrap())
        .unwrap_or(0.02);
    s
}

fn tube(r: f64, i: Intensity) -> TubeSpec {
    TubeSpec {
        path: vec![[12.0, 32.0, 32.0], [52.0, 32.0, 32.0]],
        radius: r,
        intensity: i,
    }
}

fn main() {
    let bright = Intensity {
        r2star: 30.0,
        chi_para: 0.6,
        chi_dia: 0.6,
    };
    for seed in 1..=5 {
        let mut s = base();
        s.tubes.push(tube(3.0, bright));
        let sc = generate_scene(&s, seed).unwrap();
        let seeds = large_vessel_seeds(&sc.r2star, &sc.brain, &SeedConfig::default()).unwrap();
        let cc = connected_components(&seeds, Connectivity::TwentySix);
        let center: Vec<usize> = (12..=52)
            .map(|i| sc.brain.grid().index(i, 32, 32))
            .collect();
        let hit = center.iter().filter(|&&c| seeds.contains(c)).count();
        let on_tube = seeds
            .indices()
            .filter(|&i| sc.gt_vessels.contains(i))
            .count();
        let cols = (12..=52)
            .filter(|&i| (29..=35).any(|j| (29..=35).any(|k| seeds.get(i, j, k))))
            .count();
        println!("  columns with tube seeds {cols}/41");
        let lab: std::collections::BTreeSet<u32> = center
            .iter()
            .filter(|&&c| seeds.contains(c))
            .map(|&c| cc.labels[c])
            .collect();
        println!("seed {seed} tube3: seeds {} on_tube {on_tube} comps {} center hit {hit}/{} labels on axis {}", seeds.count(), cc.count(), center.len(), lab.len());

        let mut s = base();
        s.blobs.push(BlobSpec {
            center: [32.0; 3],
            radius: 10.0,
            intensity: BlobIntensity {
                r2star: 30.0,
                chi_para: 0.6,
            },
        });
        let sc = generate_scene(&s, seed).unwrap();
        let seeds = large_vessel_seeds(&sc.r2star, &sc.brain, &SeedConfig::default()).unwrap();
        let inb = seeds.indices().filter(|&i| sc.gt_blobs.contains(i)).count();
        let g = *sc.brain.grid();
        for shrink in [1.0, 2.0, 3.0] {
            let n = seeds
                .indices()
                .filter(|&i| {
                    let c = g.coords(i);
                    (0..3)
                        .map(|a| (c[a] as f64 - 32.0).powi(2))
                        .sum::<f64>()
                        .sqrt()
                        <= 10.0 - shrink
                })
                .count();
            println!("  sphere interior r-{shrink}: {n}");
        }
        println!(
            "  sphere: seeds {} in sphere {inb} sphere vol {}",
            seeds.count(),
            sc.gt_blobs.count()
        );

        let mut s = base();
        s.tubes.push(tube(1.0, bright));
        let sc = generate_scene(&s, seed).unwrap();
        let empty = BinaryMask3::empty(*sc.brain.grid());
        let small = small_vessel_seeds(
            &sc.chi_para,
            &sc.chi_dia,
            &empty,
            &sc.brain,
            &SeedConfig::default(),
        )
        .unwrap();
        let hit = center.iter().filter(|&&c| small.contains(c)).count();
        let near = small
            .indices()
            .filter(|&i| sc.gt_vessels.contains(i))
            .count();
        println!(
            "  thin: small seeds {} on tube {near} center hit {hit}/{}",
            small.count(),
            center.len()
        );

        let mut s = base();
        s.tubes.push(tube(2.0, bright));
        let sc = generate_scene(&s, seed).unwrap();
        let v = mfat(&sc.chi_para, &MfatConfig::default()).unwrap().v_mfat;
        let cm = center.iter().map(|&c| v.data()[c]).sum::<f64>() / center.len() as f64;
        let g = *sc.brain.grid();
        let (mut bs, mut bn) = (0.0, 0usize);
        for idx in sc.brain.indices() {
            let [_, j, k] = g.coords(idx);
            let d = ((j as f64 - 32.0).powi(2) + (k as f64 - 32.0).powi(2)).sqrt();
            if d > 8.0 {
                bs += v.data()[idx];
                bn += 1;
            }
        }
        println!(
            "  ves r2: centre {cm:.4} bg {:.4} ratio {:.2}",
            bs / bn as f64,
            cm / (bs / bn as f64)
        );
    }
}
