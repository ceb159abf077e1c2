//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.
//!
//! Pass criterion numbers as arguments to run a subset, e.g.
//! `cargo test -p vesselseg-cli --test acceptance -- 6 7`.

#![allow(clippy::needless_range_loop)]

use std::f64::consts::PI;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use vesselseg_core::eigen::eig_sym3_full;
use vesselseg_core::grow::{grow_condition, intensity_limits, region_grow, GrowFields};
use vesselseg_core::hessian::hessian_at_scale;
use vesselseg_core::metrics::{dice, masked_mean_susceptibility, rmse_psnr, vessel_proportion};
use vesselseg_core::phantom::generate_scene;
use vesselseg_core::pipeline::{segment, Inputs};
use vesselseg_core::spectral::{
    centered_frequency, highpass_inverse_hamming, inverse_hamming_weight, InverseHammingSpec,
};
use vesselseg_core::vesselness::{mfat_observed, ScaleStep};
use vesselseg_core::{
    BinaryMask3, Connectivity, Grid, GrowConfig, MfatConfig, PipelineConfig, SceneSpec,
    VesselnessResult, Volume3,
};

// Tolerances and bars.
const FIXED_POINT_INSTANCES: usize = 200;
const FIXED_POINT_BUDGET: Duration = Duration::from_secs(60);
const FFT_REL_TOL: f64 = 1e-5;
const FFT_CONSTANT_TOL: f64 = 1e-6;
const EIGEN_MATRICES: usize = 10_000;
const EIGEN_RECON_TOL: f64 = 1e-6;
const EIGEN_ROOT_TOL: f64 = 1e-8;
const HESSIAN_REL_TOL: f64 = 0.02;
const MFAT_RANDOM_VOLUMES: usize = 50;
const MFAT_PHANTOM_VOLUMES: u64 = 5;
const MFAT_OVERSHOOT_TOL: f64 = 1e-9;
const DSC_BAR: f64 = 0.80;
const BLOB_SURVIVAL_BAR: f64 = 0.02;
const ABLATION_FACTOR: f64 = 10.0;
const METRIC_INSTANCES: usize = 100;
const METRIC_REL_TOL: f64 = 1e-10;
const PERF_3T: ([usize; 3], Duration, u64) =
    ([256, 224, 176], Duration::from_secs(10 * 60), 8 << 30);
const PERF_7T: ([usize; 3], Duration, u64) =
    ([350, 284, 224], Duration::from_secs(40 * 60), 16 << 30);

// Values measured on the acceptance scene with rng seed 1, frozen as
// regression bars.
const CALIBRATED_DSC_PARA: f64 = 0.8899;
const CALIBRATED_DSC_TOL: f64 = 0.005;
const CALIBRATED_BLOB_VOXELS: usize = 0;
const CALIBRATED_INITIAL_BLOB_VOXELS: usize = 4764;

type Criterion = (u32, &'static str, fn() -> Outcome);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * b.abs().max(1.0)
}

// ---------------------------------------------------------------- 1

fn offsets(conn: Connectivity) -> Vec<[isize; 3]> {
    let mut out = Vec::new();
    for dz in -1isize..=1 {
        for dy in -1isize..=1 {
            for dx in -1isize..=1 {
                let manhattan = dx.abs() + dy.abs() + dz.abs();
                let keep = match conn {
                    Connectivity::Six => manhattan == 1,
                    Connectivity::Eighteen => (1..=2).contains(&manhattan),
                    Connectivity::TwentySix => manhattan >= 1,
                };
                if keep {
                    out.push([dx, dy, dz]);
                }
            }
        }
    }
    out
}

fn random_unit(rng: &mut ChaCha8Rng) -> [f32; 3] {
    loop {
        let v: [f64; 3] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-3 {
            return v.map(|x| (x / n) as f32);
        }
    }
}

fn random_vesselness(rng: &mut ChaCha8Rng, g: Grid) -> VesselnessResult {
    let mut vol =
        |lo: f64, hi: f64| Volume3::from_fn(g, |_, _, _| rng.random_range(lo..hi)).unwrap();
    let v_mfat = vol(0.0, 1.6);
    let lambda2_field = vol(-0.4, 0.05);
    let lambda3_field = vol(-1.0, 0.0);
    let ani = lambda2_field
        .with_data(
            lambda2_field
                .data()
                .iter()
                .zip(lambda3_field.data())
                .map(|(a, b)| (a * b).abs())
                .collect(),
        )
        .unwrap();
    VesselnessResult {
        v_mfat,
        v1_field: (0..g.len()).map(|_| random_unit(rng)).collect(),
        lambda2_field,
        lambda3_field,
        ani,
        winning_scale: vec![0; g.len()],
    }
}

/// Least fixed point by repeated sweeps until nothing changes.
fn grow_oracle(
    chi: &Volume3,
    seeds: &BinaryMask3,
    ves: &VesselnessResult,
    brain: &BinaryMask3,
    cfg: &GrowConfig,
) -> Vec<u8> {
    let g = *chi.grid();
    let fields = GrowFields::new(chi, ves).unwrap();
    let limits = intensity_limits(chi, seeds, cfg).unwrap();
    let offs = offsets(cfg.connectivity);
    let mut mask = seeds.data().to_vec();
    loop {
        let mut changed = false;
        for p in 0..g.len() {
            if mask[p] == 0 {
                continue;
            }
            let [i, j, k] = g.coords(p);
            for o in &offs {
                let c = [i as isize + o[0], j as isize + o[1], k as isize + o[2]];
                if (0..3).any(|a| c[a] < 0 || c[a] >= g.dims[a] as isize) {
                    continue;
                }
                let q = g.index(c[0] as usize, c[1] as usize, c[2] as usize);
                if mask[q] != 0 || (cfg.restrict_to_brain && !brain.contains(q)) {
                    continue;
                }
                if grow_condition(p, q, &fields, &limits) {
                    mask[q] = 1;
                    changed = true;
                }
            }
        }
        if !changed {
            return mask;
        }
    }
}

fn criterion_1() -> Outcome {
    let g = Grid::isotropic([12; 3]).unwrap();
    let start = Instant::now();
    let mut matched = 0;
    let mut grown = 0usize;
    for n in 0..FIXED_POINT_INSTANCES {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + n as u64);
        let brain = BinaryMask3::from_fn(g, |_, _, _| rng.random_bool(0.9));
        let seeds = BinaryMask3::from_fn(g, |_, _, _| rng.random_bool(0.04))
            .intersect(&brain)
            .unwrap();
        if seeds.is_empty() {
            matched += 1;
            continue;
        }
        let chi = Volume3::from_fn(g, |_, _, _| rng.random_range(0.0..1.0)).unwrap();
        let ves = random_vesselness(&mut rng, g);
        let cfg = GrowConfig {
            connectivity: [
                Connectivity::Six,
                Connectivity::Eighteen,
                Connectivity::TwentySix,
            ][n % 3],
            restrict_to_brain: n % 4 != 0,
            gamma1: rng.random_range(0.0..1.5),
            gamma2: rng.random_range(0.0..1.5),
        };
        let fast = region_grow(&chi, &seeds, &ves, &brain, &cfg).unwrap();
        let oracle = grow_oracle(&chi, &seeds, &ves, &brain, &cfg);
        if fast.data() == oracle.as_slice() {
            matched += 1;
        }
        grown += fast.count() - seeds.count();
    }
    let elapsed = start.elapsed();
    outcome(
        matched == FIXED_POINT_INSTANCES && elapsed < FIXED_POINT_BUDGET,
        format!(
            "{matched}/{FIXED_POINT_INSTANCES} random 12^3 instances equal the fixed-point oracle \
             ({grown} voxels grown in total), {:.1} s (limit {} s)",
            elapsed.as_secs_f64(),
            FIXED_POINT_BUDGET.as_secs()
        ),
    )
}

// ---------------------------------------------------------------- 2

#[derive(Clone, Copy)]
struct C64(f64, f64);

impl C64 {
    fn mul(self, o: C64) -> C64 {
        C64(self.0 * o.0 - self.1 * o.1, self.0 * o.1 + self.1 * o.0)
    }
}

/// Direct 3D DFT, `sign` = -1 forward, +1 inverse (unnormalized).
fn dft3(data: &[C64], dims: [usize; 3], sign: f64) -> Vec<C64> {
    let tw = |n: usize| -> Vec<C64> {
        (0..n)
            .map(|m| {
                let a = sign * 2.0 * PI * m as f64 / n as f64;
                C64(a.cos(), a.sin())
            })
            .collect()
    };
    let [nx, ny, nz] = dims;
    let (tx, ty, tz) = (tw(nx), tw(ny), tw(nz));
    let mut out = vec![C64(0.0, 0.0); data.len()];
    for kz in 0..nz {
        for ky in 0..ny {
            for kx in 0..nx {
                let mut acc = C64(0.0, 0.0);
                for z in 0..nz {
                    let wz = tz[(kz * z) % nz];
                    for y in 0..ny {
                        let wyz = ty[(ky * y) % ny].mul(wz);
                        for x in 0..nx {
                            let w = tx[(kx * x) % nx].mul(wyz);
                            let f = data[x + nx * (y + ny * z)];
                            let p = f.mul(w);
                            acc.0 += p.0;
                            acc.1 += p.1;
                        }
                    }
                }
                out[kx + nx * (ky + ny * kz)] = acc;
            }
        }
    }
    out
}

fn highpass_oracle(v: &Volume3, spec: &InverseHammingSpec) -> Vec<f64> {
    let dims = v.dims();
    let n = v.len() as f64;
    let input: Vec<C64> = v.data().iter().map(|&x| C64(x, 0.0)).collect();
    let mut k = dft3(&input, dims, -1.0);
    for kz in 0..dims[2] {
        for ky in 0..dims[1] {
            for kx in 0..dims[0] {
                let w = inverse_hamming_weight(
                    [
                        centered_frequency(kx, dims[0]),
                        centered_frequency(ky, dims[1]),
                        centered_frequency(kz, dims[2]),
                    ],
                    spec,
                );
                let c = &mut k[kx + dims[0] * (ky + dims[1] * kz)];
                c.0 *= w;
                c.1 *= w;
            }
        }
    }
    dft3(&k, dims, 1.0).iter().map(|c| c.0 / n).collect()
}

fn criterion_2() -> Outcome {
    let g = Grid::isotropic([16; 3]).unwrap();
    let specs = [
        InverseHammingSpec::default(),
        InverseHammingSpec::new([6.0, 5.0, 7.0]).unwrap(),
        InverseHammingSpec::new([3.0, 9.0, 4.5]).unwrap(),
    ];
    let mut worst = 0.0f64;
    for (n, spec) in specs.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(20 + n as u64);
        let v = Volume3::from_fn(g, |i, _, _| rng.random_range(0.0..1.0) + 0.3 * i as f64).unwrap();
        let fast = highpass_inverse_hamming(&v, spec).unwrap();
        let oracle = highpass_oracle(&v, spec);
        let scale = oracle.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let err = fast
            .data()
            .iter()
            .zip(&oracle)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        worst = worst.max(err / scale);
    }
    let c = 7.5;
    let constant =
        highpass_inverse_hamming(&Volume3::constant(g, c), &InverseHammingSpec::default()).unwrap();
    let residual = constant.data().iter().fold(0.0f64, |m, x| m.max(x.abs())) / c;
    outcome(
        worst <= FFT_REL_TOL && residual < FFT_CONSTANT_TOL,
        format!(
            "16^3 high-pass vs direct DFT: max relative error {worst:.2e} (tol {FFT_REL_TOL:.0e}); \
             constant input residual {residual:.2e} (tol {FFT_CONSTANT_TOL:.0e})"
        ),
    )
}

// ---------------------------------------------------------------- 3

/// Roots of the characteristic polynomial of a symmetric matrix by the
/// trigonometric cubic formula, polished with Newton steps on the cubic.
fn char_poly_roots(a: [[f64; 3]; 3]) -> [f64; 3] {
    let tr = a[0][0] + a[1][1] + a[2][2];
    let minors = a[0][0] * a[1][1] - a[0][1] * a[0][1] + a[0][0] * a[2][2] - a[0][2] * a[0][2]
        + a[1][1] * a[2][2]
        - a[1][2] * a[1][2];
    let det = a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[1][2])
        - a[0][1] * (a[0][1] * a[2][2] - a[1][2] * a[0][2])
        + a[0][2] * (a[0][1] * a[1][2] - a[1][1] * a[0][2]);
    // p(x) = x^3 - tr x^2 + minors x - det
    let q = tr / 3.0;
    let p2 = (tr * tr - 3.0 * minors) / 9.0;
    let p = p2.max(0.0).sqrt();
    let mut roots = if p == 0.0 {
        [q; 3]
    } else {
        // Depressed cubic t^3 - 3 p^2 t - r = 0 with x = q + t.
        let r = ((q - tr) * q + minors) * q - det;
        let c = (-r / (2.0 * p * p * p)).clamp(-1.0, 1.0);
        let phi = c.acos() / 3.0;
        [0.0, 1.0, 2.0].map(|m| q + 2.0 * p * (phi - 2.0 * PI * m / 3.0).cos())
    };
    for x in roots.iter_mut() {
        for _ in 0..3 {
            let f = ((*x - tr) * *x + minors) * *x - det;
            let df = (3.0 * *x - 2.0 * tr) * *x + minors;
            if df.abs() > 1e-12 {
                *x -= f / df;
            }
        }
    }
    roots
}

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut worst_recon, mut worst_root, mut worst_orth) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..EIGEN_MATRICES {
        let mut h = [[0.0; 3]; 3];
        for r in 0..3 {
            for c in r..3 {
                h[r][c] = rng.random_range(-1.0..1.0);
                h[c][r] = h[r][c];
            }
        }
        let norm = h.iter().flatten().map(|x| x * x).sum::<f64>().sqrt();
        let d = eig_sym3_full(h);
        let mut recon = 0.0f64;
        for r in 0..3 {
            for c in 0..3 {
                let v: f64 = (0..3)
                    .map(|e| d.values[e] * d.vectors[e][r] * d.vectors[e][c])
                    .sum();
                recon = recon.max((v - h[r][c]).abs());
            }
        }
        worst_recon = worst_recon.max(recon / norm);
        for a in 0..3 {
            for b in 0..3 {
                let dot: f64 = (0..3).map(|t| d.vectors[a][t] * d.vectors[b][t]).sum();
                worst_orth = worst_orth.max((dot - if a == b { 1.0 } else { 0.0 }).abs());
            }
        }
        let mut mine = d.values;
        let mut roots = char_poly_roots(h);
        mine.sort_by(f64::total_cmp);
        roots.sort_by(f64::total_cmp);
        let err = (0..3)
            .map(|e| (mine[e] - roots[e]).abs())
            .fold(0.0, f64::max);
        worst_root = worst_root.max(err);
        let ordered =
            d.values[0].abs() <= d.values[1].abs() && d.values[1].abs() <= d.values[2].abs();
        if !ordered {
            return outcome(
                false,
                format!("eigenvalues not ordered by magnitude: {:?}", d.values),
            );
        }
    }
    outcome(
        worst_recon < EIGEN_RECON_TOL && worst_root < EIGEN_ROOT_TOL && worst_orth < 1e-9,
        format!(
            "{EIGEN_MATRICES} random symmetric matrices: reconstruction {worst_recon:.1e}·||H|| (tol {EIGEN_RECON_TOL:.0e}), \
             root error {worst_root:.1e} (tol {EIGEN_ROOT_TOL:.0e}), orthonormality {worst_orth:.1e}"
        ),
    )
}

// ---------------------------------------------------------------- 4

fn criterion_4() -> Outcome {
    let n = 64;
    let c = 32.0;
    let s = 6.0;
    let g = Grid::isotropic([n; 3]).unwrap();
    let blob = Volume3::from_fn(g, |i, j, k| {
        let r2 = (i as f64 - c).powi(2) + (j as f64 - c).powi(2) + (k as f64 - c).powi(2);
        (-r2 / (2.0 * s * s)).exp()
    })
    .unwrap();
    let points = [[32usize, 32, 32], [35, 30, 33], [28, 36, 31], [38, 32, 26]];
    let mut worst = 0.0f64;
    let mut worst_at = (0.0, [0usize; 3]);
    for sigma in [1.0, 1.5, 2.0, 3.0] {
        let h = hessian_at_scale(&blob, sigma).unwrap();
        let s2 = s * s + sigma * sigma;
        let amp = (s * s / s2).powf(1.5);
        for p in points {
            let d = p.map(|x| x as f64 - c);
            let e = amp * (-(d[0] * d[0] + d[1] * d[1] + d[2] * d[2]) / (2.0 * s2)).exp();
            let exact = |a: usize, b: usize| {
                sigma * sigma * e * (d[a] * d[b] / (s2 * s2) - if a == b { 1.0 / s2 } else { 0.0 })
            };
            let m = h.matrix(g.index(p[0], p[1], p[2]));
            let mut scale = 0.0f64;
            let mut err = 0.0f64;
            for a in 0..3 {
                for b in 0..3 {
                    scale = scale.max(exact(a, b).abs());
                    err = err.max((m[a][b] - exact(a, b)).abs());
                }
            }
            if p == [32, 32, 32] {
                for a in 0..3 {
                    err = err.max(rel_err(m[a][a], exact(a, a)) * scale);
                }
            }
            if err / scale > worst {
                worst = err / scale;
                worst_at = (sigma, p);
            }
        }
    }
    outcome(
        worst <= HESSIAN_REL_TOL,
        format!(
            "Gaussian blob (width {s}) Hessian at sigma 1..3: max relative error {:.2}% at sigma {} voxel {:?} (tol {:.0}%)",
            worst * 100.0,
            worst_at.0,
            worst_at.1,
            HESSIAN_REL_TOL * 100.0
        ),
    )
}

// ---------------------------------------------------------------- 5

fn criterion_5() -> Outcome {
    let cfg = MfatConfig::default();
    let bound = cfg.response_bound();
    let mut violations = Vec::new();
    let mut max_raw = f64::NEG_INFINITY;
    let mut min_raw = f64::INFINITY;
    let mut max_v = 0.0f64;
    let mut check = |name: String, v: &Volume3| {
        let mut prev: Option<Vec<f64>> = None;
        let res = mfat_observed(v, &cfg, None, &mut |step: &ScaleStep| {
            max_raw = max_raw.max(step.raw_max);
            min_raw = min_raw.min(step.raw_min);
            if step.raw_max > 1.0 + MFAT_OVERSHOOT_TOL {
                violations.push(format!(
                    "{name} scale {}: raw R {}",
                    step.index, step.raw_max
                ));
            }
            let bad = step
                .v_mfat
                .iter()
                .zip(step.r_lambda)
                .filter(|(&vm, &r)| !(vm >= r && (0.0..=1.0).contains(&r)))
                .count();
            if bad > 0 {
                violations.push(format!(
                    "{name} scale {}: {bad} voxels with v < R or R outside [0, 1]",
                    step.index
                ));
            }
            if step.index == 0 && step.v_mfat != step.r_lambda {
                violations.push(format!("{name}: first scale differs from R"));
            }
            prev = Some(step.v_mfat.to_vec());
        })
        .unwrap();
        let vmax = res.v_mfat.data().iter().fold(0.0f64, |m, &x| m.max(x));
        max_v = max_v.max(vmax);
        if vmax > bound {
            violations.push(format!("{name}: final max {vmax} above bound {bound}"));
        }
    };
    let g = Grid::isotropic([16; 3]).unwrap();
    for n in 0..MFAT_RANDOM_VOLUMES {
        let mut rng = ChaCha8Rng::seed_from_u64(500 + n as u64);
        let v = Volume3::from_fn(g, |_, _, _| rng.random_range(-1.0..1.0)).unwrap();
        check(format!("random {n}"), &v);
    }
    let spec = SceneSpec::acceptance_scaled([64; 3]);
    for seed in 1..=MFAT_PHANTOM_VOLUMES {
        let sc = generate_scene(&spec, seed).unwrap();
        let v = if seed % 2 == 1 {
            sc.r2star
        } else {
            sc.chi_para
        };
        check(format!("phantom {seed}"), &v);
    }
    let pass = violations.is_empty();
    let detail = format!(
        "{MFAT_RANDOM_VOLUMES} random + {MFAT_PHANTOM_VOLUMES} phantom volumes, every scale: v >= R >= 0, \
         raw R max {max_raw:.6} (<= 1 + {MFAT_OVERSHOOT_TOL:.0e}), raw R min {min_raw:.3} (clamped to 0), \
         final max v {max_v:.4} <= {bound:.4}{}",
        if pass { String::new() } else { format!("; {}", violations.join("; ")) }
    );
    outcome(pass, detail)
}

// ---------------------------------------------------------------- 6, 7

struct SceneRun {
    dsc_para: f64,
    dsc_dia: f64,
    tube_gt: usize,
    blob_gt: usize,
    blob_refined: usize,
    blob_initial: usize,
}

fn scene_run() -> &'static SceneRun {
    static RUN: std::sync::OnceLock<SceneRun> = std::sync::OnceLock::new();
    RUN.get_or_init(|| {
        let sc = generate_scene(&SceneSpec::acceptance(), 1).unwrap();
        let inputs = Inputs {
            r2star: sc.r2star.clone(),
            chi_para: sc.chi_para.clone(),
            chi_dia: sc.chi_dia.clone(),
            brain: sc.brain.clone(),
        };
        let seg = segment(&inputs, &PipelineConfig::default(), false).unwrap();
        let blob_hits = |m: &BinaryMask3| m.indices().filter(|&i| sc.gt_blobs.contains(i)).count();
        SceneRun {
            dsc_para: dice(&seg.para.refined, &sc.gt_vessels).unwrap(),
            dsc_dia: dice(&seg.dia.refined, &sc.gt_vessels).unwrap(),
            tube_gt: sc.gt_vessels.count(),
            blob_gt: sc.gt_blobs.count(),
            blob_refined: blob_hits(&seg.para.refined),
            blob_initial: blob_hits(&seg.para.initial),
        }
    })
}

fn criterion_6() -> Outcome {
    let r = scene_run();
    let survival = r.blob_refined as f64 / r.blob_gt as f64;
    let regression = (r.dsc_para - CALIBRATED_DSC_PARA).abs() <= CALIBRATED_DSC_TOL
        && r.blob_refined.saturating_sub(CALIBRATED_BLOB_VOXELS) == 0;
    outcome(
        r.dsc_para >= DSC_BAR && survival <= BLOB_SURVIVAL_BAR && regression,
        format!(
            "128^3 acceptance scene, rng seed 1: chi_para DSC {:.4} vs {} tube voxels (bar {DSC_BAR}, calibrated \
             {CALIBRATED_DSC_PARA} ± {CALIBRATED_DSC_TOL}); blob survival {}/{} = {:.2}% (bar {:.0}%, calibrated {}); \
             chi_dia DSC {:.4}",
            r.dsc_para,
            r.tube_gt,
            r.blob_refined,
            r.blob_gt,
            survival * 100.0,
            BLOB_SURVIVAL_BAR * 100.0,
            CALIBRATED_BLOB_VOXELS,
            r.dsc_dia
        ),
    )
}

fn criterion_7() -> Outcome {
    let r = scene_run();
    let ratio = r.blob_initial as f64 / r.blob_refined.max(1) as f64;
    outcome(
        ratio >= ABLATION_FACTOR,
        format!(
            "without anisotropy refinement {} blob voxels remain (calibrated {CALIBRATED_INITIAL_BLOB_VOXELS}), with it {}; \
             ratio {:.0} against max(full, 1) (bar {ABLATION_FACTOR})",
            r.blob_initial, r.blob_refined, ratio
        ),
    )
}

// ---------------------------------------------------------------- 8

fn criterion_8() -> Outcome {
    let mut failures = Vec::new();
    for n in 0..METRIC_INSTANCES {
        let mut rng = ChaCha8Rng::seed_from_u64(800 + n as u64);
        let dims = [
            rng.random_range(3..10),
            rng.random_range(3..10),
            rng.random_range(3..10),
        ];
        let g = Grid::new(dims, [1.0; 3]).unwrap();
        let p = rng.random_range(0.05..0.7);
        let a = BinaryMask3::from_fn(g, |_, _, _| rng.random_bool(p));
        let b = BinaryMask3::from_fn(g, |_, _, _| rng.random_bool(p));
        let mut roi = BinaryMask3::from_fn(g, |_, _, _| rng.random_bool(0.6));
        if roi.is_empty() {
            roi = BinaryMask3::full(g);
        }
        let pred = Volume3::from_fn(g, |_, _, _| rng.random_range(-2.0..2.0)).unwrap();
        let reference = Volume3::from_fn(g, |_, _, _| rng.random_range(-2.0..2.0)).unwrap();

        // Naive loops over (i, j, k).
        let (
            mut na,
            mut nb,
            mut both,
            mut nroi,
            mut hit,
            mut ss,
            mut peak,
            mut sum_all,
            mut sum_out,
            mut n_out,
        ) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0f64, 0.0, 0.0, 0.0);
        for k in 0..dims[2] {
            for j in 0..dims[1] {
                for i in 0..dims[0] {
                    let (x, y, r) = (a.get(i, j, k), b.get(i, j, k), roi.get(i, j, k));
                    na += x as u8 as f64;
                    nb += y as u8 as f64;
                    both += (x && y) as u8 as f64;
                    if r {
                        nroi += 1.0;
                        hit += x as u8 as f64;
                        let d = pred.get(i, j, k) - reference.get(i, j, k);
                        ss += d * d;
                        peak = peak.max(reference.get(i, j, k).abs());
                        sum_all += pred.get(i, j, k);
                        if !x {
                            sum_out += pred.get(i, j, k);
                            n_out += 1.0;
                        }
                    }
                }
            }
        }
        let dice_o = if na + nb == 0.0 {
            1.0
        } else {
            2.0 * both / (na + nb)
        };
        let rmse_o = (ss / nroi).sqrt();
        let psnr_o = 20.0 * (peak / rmse_o).log10();
        let prop_o = 100.0 * hit / nroi;

        let d = dice(&a, &b).unwrap();
        let (rmse, psnr) = rmse_psnr(&pred, &reference, &roi).unwrap();
        let checks = [
            ("dice", d, dice_o),
            ("rmse", rmse, rmse_o),
            ("psnr", psnr, psnr_o),
            ("proportion", vessel_proportion(&roi, &a).unwrap(), prop_o),
            (
                "mean",
                masked_mean_susceptibility(&pred, &roi, &a, false).unwrap(),
                sum_all / nroi,
            ),
        ];
        for (name, got, want) in checks {
            if !close(got, want, METRIC_REL_TOL) {
                failures.push(format!("instance {n} {name}: {got} vs {want}"));
            }
        }
        if n_out > 0.0 {
            let got = masked_mean_susceptibility(&pred, &roi, &a, true).unwrap();
            if !close(got, sum_out / n_out, METRIC_REL_TOL) {
                failures.push(format!("instance {n} masked mean: {got}"));
            }
        }
        if d != dice(&b, &a).unwrap() {
            failures.push(format!("instance {n}: dice not symmetric"));
        }
        if !a.is_empty() && dice(&a, &a).unwrap() != 1.0 {
            failures.push(format!("instance {n}: dice(a, a) != 1"));
        }
    }
    let pass = failures.is_empty();
    outcome(
        pass,
        format!(
            "{METRIC_INSTANCES} random instances: dice, rmse, psnr, proportion and masked means match naive loops to \
             {METRIC_REL_TOL:.0e}; dice symmetric with dice(a, a) = 1{}",
            if pass { String::new() } else { format!("; {}", failures.join("; ")) }
        ),
    )
}

// ---------------------------------------------------------------- 9, 10

const BIN: &str = env!("CARGO_BIN_EXE_vesselseg");

fn run_cli(args: &[&str]) -> Result<(), String> {
    let out = Command::new(BIN)
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!(
            "`vesselseg {}` exited with {:?}: {}",
            args.join(" "),
            out.status.code(),
            String::from_utf8_lossy(&out.stderr)
        ))
    }
}

/// Runs the CLI and returns wall time and the child's peak resident set.
fn run_cli_measured(args: &[&str]) -> Result<(Duration, u64), String> {
    let start = Instant::now();
    let child = Command::new(BIN)
        .args(args)
        .env("RUST_LOG", "warn")
        .spawn()
        .map_err(|e| e.to_string())?;
    let mut status = 0;
    let mut usage: libc::rusage = unsafe { std::mem::zeroed() };
    let pid = unsafe { libc::wait4(child.id() as libc::pid_t, &mut status, 0, &mut usage) };
    let wall = start.elapsed();
    if pid < 0 {
        return Err(std::io::Error::last_os_error().to_string());
    }
    if !libc::WIFEXITED(status) || libc::WEXITSTATUS(status) != 0 {
        return Err(format!(
            "`vesselseg {}` failed with status {status}",
            args.join(" ")
        ));
    }
    // ru_maxrss is in KiB on Linux.
    Ok((wall, usage.ru_maxrss as u64 * 1024))
}

fn perf_case(
    root: &Path,
    (dims, time_limit, mem_limit): ([usize; 3], Duration, u64),
) -> Result<(bool, String), String> {
    let tag = format!("{}x{}x{}", dims[0], dims[1], dims[2]);
    let scene = root.join(format!("scene-{tag}"));
    let out = root.join(format!("out-{tag}"));
    run_cli(&[
        "phantom",
        "--dims",
        &format!("{},{},{}", dims[0], dims[1], dims[2]),
        "--out",
        scene.to_str().unwrap(),
    ])?;
    let (wall, rss) = run_cli_measured(&[
        "segment",
        "--config",
        scene.join("pipeline.toml").to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ])?;
    let _ = fs::remove_dir_all(&scene);
    let _ = fs::remove_dir_all(&out);
    let pass = wall <= time_limit && rss <= mem_limit;
    Ok((
        pass,
        format!(
            "{tag}: {:.0} s (limit {} min), peak RSS {:.2} GiB (limit {} GiB)",
            wall.as_secs_f64(),
            time_limit.as_secs() / 60,
            rss as f64 / (1u64 << 30) as f64,
            mem_limit >> 30
        ),
    ))
}

fn criterion_9() -> Outcome {
    let root = tempfile::tempdir().unwrap();
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get());
    let mut pass = true;
    let mut parts = Vec::new();
    for case in [PERF_3T, PERF_7T] {
        match perf_case(root.path(), case) {
            Ok((ok, d)) => {
                pass &= ok;
                parts.push(d);
            }
            Err(e) => {
                pass = false;
                parts.push(e);
            }
        }
    }
    outcome(
        pass,
        format!(
            "full pipeline via the CLI on {threads} core(s): {}",
            parts.join("; ")
        ),
    )
}

fn criterion_10() -> Outcome {
    let root = tempfile::tempdir().unwrap();
    let scene = root.path().join("scene");
    let config = scene.join("pipeline.toml");
    let setup = run_cli(&["phantom", "--out", scene.to_str().unwrap()]);
    if let Err(e) = setup {
        return outcome(false, e);
    }
    let runs = [("1", "a"), ("4", "b"), ("2", "c")];
    for (threads, name) in runs {
        let out = root.path().join(name);
        if let Err(e) = run_cli(&[
            "--threads",
            threads,
            "segment",
            "--config",
            config.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ]) {
            return outcome(false, e);
        }
    }
    let files = [
        "vessel_mask_chi_para.nii",
        "vessel_mask_chi_dia.nii",
        "vessel_mask_union.nii",
        "seeds.nii",
        "report.json",
        "components_chi_para.tsv",
        "components_chi_dia.tsv",
        "manifest.toml",
    ];
    let mut differing = Vec::new();
    for f in files {
        let a = fs::read(root.path().join("a").join(f)).unwrap_or_default();
        for other in ["b", "c"] {
            let b = fs::read(root.path().join(other).join(f)).unwrap_or_default();
            if a.is_empty() || a != b {
                differing.push(format!("{f} ({other})"));
            }
        }
    }
    outcome(
        differing.is_empty(),
        format!(
            "three segment runs with 1, 4 and 2 threads: {} of {} outputs byte-identical{}",
            files.len()
                - differing
                    .iter()
                    .map(|d| d.split(' ').next().unwrap())
                    .collect::<std::collections::BTreeSet<_>>()
                    .len(),
            files.len(),
            if differing.is_empty() {
                String::new()
            } else {
                format!("; differ: {}", differing.join(", "))
            }
        ),
    )
}

// ----------------------------------------------------------------

fn main() {
    let criteria: [Criterion; 10] = [
        (1, "region growing equals fixed-point oracle", criterion_1),
        (2, "high-pass matches direct DFT", criterion_2),
        (3, "symmetric eigen-decomposition", criterion_3),
        (4, "Hessian of an analytic Gaussian", criterion_4),
        (5, "multi-scale vesselness invariants", criterion_5),
        (6, "phantom end-to-end segmentation", criterion_6),
        (7, "anisotropy refinement ablation", criterion_7),
        (8, "metric oracles", criterion_8),
        (9, "performance envelope", criterion_9),
        (10, "determinism across thread counts", criterion_10),
    ];
    let selected: Vec<u32> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let mut failed = 0;
    let mut ran = 0;
    println!();
    for (id, name, run) in criteria {
        if !selected.is_empty() && !selected.contains(&id) {
            continue;
        }
        ran += 1;
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        });
        if !result.pass {
            failed += 1;
        }
        println!(
            "{} criterion {id:>2} ({name}): {} [{:.1} s]",
            if result.pass { "PASS" } else { "FAIL" },
            result.detail,
            start.elapsed().as_secs_f64()
        );
    }
    println!("\nacceptance: {} passed, {failed} failed", ran - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
