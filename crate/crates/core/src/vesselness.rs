//! Multi-scale fractional-anisotropy-tensor vesselness (MFAT).
//!
//! At each Gaussian scale the Hessian eigenvalues are regularized against
//! the most negative `lambda3` found at that scale, turned into a
//! fractional-anisotropy score and mapped to a per-scale response
//! `R_lambda`. Responses are accumulated across scales with a bounded
//! `tanh` step and a running max.
//!
//! Besides the vesselness map, the eigen geometry (`v1`, `lambda2`,
//! `lambda3`) is kept at each voxel's winning scale, the scale where
//! `R_lambda` was largest (ties go to the smaller scale). Region growing
//! and component pruning read those fields.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::eigen::{eig_sym2, eig_sym3_full, eigvec_sym2, sym3};
use crate::error::{Error, Result};
use crate::hessian::{hessian2_from_smoothed, hessian_from_smoothed, smooth3};
use crate::mip::Image2;
use crate::volume::{BinaryMask3, Volume3};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MfatConfig {
    /// Gaussian scales in voxels, strictly increasing.
    pub sigmas: Vec<f64>,
    pub tau_rho: f64,
    pub tau_nu: f64,
    /// Step size of the cross-scale accumulation.
    pub delta: f64,
}

impl Default for MfatConfig {
    fn default() -> Self {
        Self {
            sigmas: vec![0.25, 0.5, 0.75, 1.0],
            tau_rho: 0.02,
            tau_nu: 0.35,
            delta: 0.3,
        }
    }
}

impl MfatConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sigmas.is_empty() || self.sigmas.len() > 255 {
            return Err(Error::InvalidConfig(format!(
                "need between 1 and 255 scales, got {}",
                self.sigmas.len()
            )));
        }
        if self.sigmas.iter().any(|&s| !(s.is_finite() && s > 0.0)) {
            return Err(Error::InvalidConfig(format!(
                "scales must be positive: {:?}",
                self.sigmas
            )));
        }
        if self.sigmas.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidConfig(format!(
                "scales must be strictly increasing: {:?}",
                self.sigmas
            )));
        }
        for (name, tau) in [("tau_rho", self.tau_rho), ("tau_nu", self.tau_nu)] {
            if !(tau > 0.0 && tau <= 1.0) {
                return Err(Error::InvalidConfig(format!(
                    "{name} must lie in (0, 1], got {tau}"
                )));
            }
        }
        if !(self.delta.is_finite() && self.delta > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "delta must be positive, got {}",
                self.delta
            )));
        }
        Ok(())
    }

    /// Upper bound on the accumulated response: `1 + (m - 1) delta tanh(1 - delta)`.
    pub fn response_bound(&self) -> f64 {
        1.0 + (self.sigmas.len() as f64 - 1.0) * self.delta * (1.0 - self.delta).tanh()
    }
}

/// `lambda3` regularized against `tau * min_lambda3`, the scaled minimum over
/// the image at the current scale.
#[inline]
pub fn regularize_eigen(lambda3: f64, min_lambda3: f64, tau: f64) -> f64 {
    let floor = tau * min_lambda3;
    if lambda3 < floor {
        lambda3
    } else if lambda3 < 0.0 {
        floor
    } else {
        0.0
    }
}

/// Fractional anisotropy of `(lambda2, lambda_rho, lambda_nu)` about the
/// mean of the raw eigenvalues. Zero when the denominator vanishes.
///
/// Because the centre is the raw mean rather than the mean of the
/// regularized triple, the value can exceed 1 once clamping is active.
#[inline]
pub fn fat_vesselness(
    lambda1: f64,
    lambda2: f64,
    lambda3: f64,
    lambda_rho: f64,
    lambda_nu: f64,
) -> f64 {
    let mean = (lambda1 + lambda2 + lambda3) / 3.0;
    let den = lambda2 * lambda2 + lambda_rho * lambda_rho + lambda_nu * lambda_nu;
    if den == 0.0 {
        return 0.0;
    }
    let num = (lambda2 - mean).powi(2) + (lambda_rho - mean).powi(2) + (lambda_nu - mean).powi(2);
    (1.5 * num / den).sqrt()
}

/// Relative tolerance for the "gap equals the per-scale maximum" branch.
const MAX_GAP_RTOL: f64 = 1e-12;

/// Per-scale response before clamping. Branches are tested in order:
/// non-tubular sign pattern gives 0, the largest eigen-gap gives 1,
/// otherwise `1 - v_fat`.
#[inline]
pub fn r_lambda_raw(lambda2: f64, lambda_rho: f64, v_fat: f64, max_gap: f64) -> f64 {
    let gap = lambda_rho - lambda2;
    if lambda_rho > gap || lambda_rho >= 0.0 || lambda2 >= 0.0 {
        0.0
    } else if (gap - max_gap).abs() <= MAX_GAP_RTOL * max_gap.abs() {
        1.0
    } else {
        1.0 - v_fat
    }
}

/// [`r_lambda_raw`] clamped to `[0, 1]`.
#[inline]
pub fn r_lambda(lambda2: f64, lambda_rho: f64, v_fat: f64, max_gap: f64) -> f64 {
    r_lambda_raw(lambda2, lambda_rho, v_fat, max_gap).clamp(0.0, 1.0)
}

#[derive(Clone, Debug)]
pub struct VesselnessResult {
    pub v_mfat: Volume3,
    /// Unit eigenvector of the smallest-magnitude eigenvalue, at the winning
    /// scale. Stored in single precision.
    pub v1_field: Vec<[f32; 3]>,
    pub lambda2_field: Volume3,
    pub lambda3_field: Volume3,
    /// `|lambda2 * lambda3|` at the winning scale.
    pub ani: Volume3,
    /// Index into the configured scales.
    pub winning_scale: Vec<u8>,
}

/// What an observer sees after each scale has been folded in.
pub struct ScaleStep<'a> {
    pub index: usize,
    pub sigma: f64,
    /// Clamped per-scale responses.
    pub r_lambda: &'a [f64],
    /// Extremes of the response before clamping.
    pub raw_min: f64,
    pub raw_max: f64,
    /// Accumulated vesselness after this scale.
    pub v_mfat: &'a [f64],
}

#[derive(Clone, Copy, Default)]
struct Eig {
    values: [f64; 3],
    v1: [f32; 3],
}

struct Accumulated {
    v_mfat: Vec<f64>,
    v1: Vec<[f32; 3]>,
    lambda2: Vec<f64>,
    lambda3: Vec<f64>,
    scale: Vec<u8>,
}

const CHUNK: usize = 1 << 14;

/// Shared multi-scale loop. `eig_at` produces the per-voxel eigen data for
/// one scale; `domain` restricts the per-scale min/max reductions.
fn accumulate(
    n: usize,
    cfg: &MfatConfig,
    domain: Option<&[u8]>,
    eig_at: impl Fn(f64) -> Vec<Eig>,
    observer: &mut dyn FnMut(&ScaleStep),
) -> Accumulated {
    let mut acc = Accumulated {
        v_mfat: vec![0.0; n],
        v1: vec![[0.0; 3]; n],
        lambda2: vec![0.0; n],
        lambda3: vec![0.0; n],
        scale: vec![0; n],
    };
    let mut best_r = vec![0.0f64; n];
    let mut r = vec![0.0f64; n];
    let in_domain = |i: usize| domain.is_none_or(|d| d[i] != 0);

    for (s, &sigma) in cfg.sigmas.iter().enumerate() {
        let eigs = eig_at(sigma);

        let min_l3 = (0..n)
            .into_par_iter()
            .filter(|&i| in_domain(i))
            .map(|i| eigs[i].values[2])
            .reduce(|| f64::INFINITY, f64::min);
        let min_l3 = if min_l3.is_finite() { min_l3 } else { 0.0 };
        let max_gap = (0..n)
            .into_par_iter()
            .filter(|&i| in_domain(i))
            .map(|i| {
                let [_, l2, l3] = eigs[i].values;
                regularize_eigen(l3, min_l3, cfg.tau_rho) - l2
            })
            .reduce(|| f64::NEG_INFINITY, f64::max);

        let (raw_min, raw_max) = r
            .par_chunks_mut(CHUNK)
            .zip(eigs.par_chunks(CHUNK))
            .map(|(r_out, e_in)| {
                let mut lo = f64::INFINITY;
                let mut hi = f64::NEG_INFINITY;
                for (ro, e) in r_out.iter_mut().zip(e_in) {
                    let [l1, l2, l3] = e.values;
                    let l_rho = regularize_eigen(l3, min_l3, cfg.tau_rho);
                    let l_nu = regularize_eigen(l3, min_l3, cfg.tau_nu);
                    let fat = fat_vesselness(l1, l2, l3, l_rho, l_nu);
                    let raw = r_lambda_raw(l2, l_rho, fat, max_gap);
                    lo = lo.min(raw);
                    hi = hi.max(raw);
                    *ro = raw.clamp(0.0, 1.0);
                }
                (lo, hi)
            })
            .reduce(
                || (f64::INFINITY, f64::NEG_INFINITY),
                |a, b| (a.0.min(b.0), a.1.max(b.1)),
            );

        let delta = cfg.delta;
        acc.v_mfat
            .par_chunks_mut(CHUNK)
            .zip(best_r.par_chunks_mut(CHUNK))
            .zip(acc.v1.par_chunks_mut(CHUNK))
            .zip(acc.lambda2.par_chunks_mut(CHUNK))
            .zip(acc.lambda3.par_chunks_mut(CHUNK))
            .zip(acc.scale.par_chunks_mut(CHUNK))
            .zip(r.par_chunks(CHUNK).zip(eigs.par_chunks(CHUNK)))
            .for_each(|((((((v, best), v1), l2), l3), sc), (rs, es))| {
                for t in 0..v.len() {
                    let rv = rs[t];
                    v[t] = if s == 0 {
                        rv
                    } else {
                        (v[t] + delta * (rv - delta).tanh()).max(rv)
                    };
                    if s == 0 || rv > best[t] {
                        best[t] = rv;
                        v1[t] = es[t].v1;
                        l2[t] = es[t].values[1];
                        l3[t] = es[t].values[2];
                        sc[t] = s as u8;
                    }
                }
            });

        observer(&ScaleStep {
            index: s,
            sigma,
            r_lambda: &r,
            raw_min,
            raw_max,
            v_mfat: &acc.v_mfat,
        });
    }
    acc
}

fn eigs_3d(data: &[f64], dims: [usize; 3], sigma: f64) -> Vec<Eig> {
    let smoothed = smooth3(data, dims, sigma);
    let s2 = sigma * sigma;
    let [nx, ny, _] = dims;
    let mut out = vec![Eig::default(); data.len()];
    out.par_chunks_mut(nx * ny)
        .enumerate()
        .for_each(|(k, plane)| {
            for j in 0..ny {
                for i in 0..nx {
                    let h = hessian_from_smoothed(&smoothed, dims, i, j, k, s2);
                    let d = eig_sym3_full(sym3(h));
                    let v = d.vectors[0];
                    plane[i + nx * j] = Eig {
                        values: d.values,
                        v1: [v[0] as f32, v[1] as f32, v[2] as f32],
                    };
                }
            }
        });
    out
}

pub fn mfat(volume: &Volume3, cfg: &MfatConfig) -> Result<VesselnessResult> {
    mfat_observed(volume, cfg, None, &mut |_| {})
}

/// [`mfat`] with the per-scale reductions (minimum `lambda3`, maximum gap)
/// taken over `domain` only.
pub fn mfat_masked(
    volume: &Volume3,
    cfg: &MfatConfig,
    domain: &BinaryMask3,
) -> Result<VesselnessResult> {
    mfat_observed(volume, cfg, Some(domain), &mut |_| {})
}

/// Full form of [`mfat`]: optional reduction domain and a callback invoked
/// after every scale.
pub fn mfat_observed(
    volume: &Volume3,
    cfg: &MfatConfig,
    domain: Option<&BinaryMask3>,
    observer: &mut dyn FnMut(&ScaleStep),
) -> Result<VesselnessResult> {
    cfg.validate()?;
    if let Some(d) = domain {
        volume
            .grid()
            .ensure_matches(d.grid(), "vesselness volume vs domain")?;
    }
    let dims = volume.dims();
    let acc = accumulate(
        volume.len(),
        cfg,
        domain.map(|d| d.data()),
        |sigma| eigs_3d(volume.data(), dims, sigma),
        observer,
    );
    let ani: Vec<f64> = acc
        .lambda2
        .iter()
        .zip(&acc.lambda3)
        .map(|(a, b)| (a * b).abs())
        .collect();
    Ok(VesselnessResult {
        v_mfat: volume.with_data(acc.v_mfat)?,
        v1_field: acc.v1,
        lambda2_field: volume.with_data(acc.lambda2)?,
        lambda3_field: volume.with_data(acc.lambda3)?,
        ani: volume.with_data(ani)?,
        winning_scale: acc.scale,
    })
}

#[derive(Clone, Debug)]
pub struct Vesselness2d {
    pub v_mfat: Image2<f64>,
    /// Smaller-magnitude Hessian eigenvalue at the winning scale.
    pub mu1: Image2<f64>,
    /// Larger-magnitude Hessian eigenvalue at the winning scale.
    pub mu2: Image2<f64>,
    pub v1_field: Vec<[f32; 2]>,
    pub winning_scale: Vec<u8>,
}

/// MFAT on a 2D image. The 2D eigenpair `(mu1, mu2)` enters the 3D formulas
/// as `(lambda1, lambda2, lambda3) = (mu1, mu2, mu2)`.
pub fn mfat_2d(image: &Image2<f64>, cfg: &MfatConfig) -> Result<Vesselness2d> {
    cfg.validate()?;
    if let Some(idx) = image.data.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(idx));
    }
    let (w, h) = (image.width, image.height);
    let acc = accumulate(
        w * h,
        cfg,
        None,
        |sigma| {
            let smoothed = smooth3(&image.data, [w, h, 1], sigma);
            let s2 = sigma * sigma;
            (0..w * h)
                .map(|p| {
                    let [xx, yy, xy] = hessian2_from_smoothed(&smoothed, w, h, p % w, p / w, s2);
                    let (m1, m2) = eig_sym2(xx, yy, xy);
                    let v = eigvec_sym2(xx, yy, xy, m1);
                    Eig {
                        values: [m1, m2, m2],
                        v1: [v[0] as f32, v[1] as f32, 0.0],
                    }
                })
                .collect()
        },
        &mut |_| {},
    );
    let img = |data: Vec<f64>| Image2 {
        width: w,
        height: h,
        data,
    };
    Ok(Vesselness2d {
        v_mfat: img(acc.v_mfat),
        mu1: img(acc.lambda2.clone()),
        mu2: img(acc.lambda3),
        v1_field: acc.v1.iter().map(|v| [v[0], v[1]]).collect(),
        winning_scale: acc.scale,
    })
}
