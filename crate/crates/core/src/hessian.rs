//! Gaussian scale space and scale-normalized Hessians.
//!
//! Smoothing is separable with a sampled, unit-sum kernel of radius
//! `ceil(3 sigma)` and replicate boundaries. Second derivatives are central
//! differences on the smoothed grid, multiplied by `sigma^2` so responses at
//! different scales are comparable.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mip::Image2;
use crate::volume::Volume3;

pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as isize;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|x| (-((x * x) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|w| *w /= sum);
    k
}

fn check_sigma(sigma: f64) -> Result<()> {
    if sigma.is_finite() && sigma > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!(
            "sigma must be positive, got {sigma}"
        )))
    }
}

#[inline]
fn clamp_offset(x: usize, d: isize, n: usize) -> usize {
    (x as isize + d).clamp(0, n as isize - 1) as usize
}

/// Separable smoothing of a column-major `nx * ny * nz` grid.
pub(crate) fn smooth3(data: &[f64], [nx, ny, nz]: [usize; 3], sigma: f64) -> Vec<f64> {
    let kernel = gaussian_kernel(sigma);
    let r = (kernel.len() / 2) as isize;
    let plane = nx * ny;

    // x: within each line.
    let mut a = vec![0.0; data.len()];
    a.par_chunks_mut(nx)
        .zip(data.par_chunks(nx))
        .for_each(|(out, line)| {
            for (i, o) in out.iter_mut().enumerate() {
                let mut s = 0.0;
                for (t, w) in kernel.iter().enumerate() {
                    s += w * line[clamp_offset(i, t as isize - r, nx)];
                }
                *o = s;
            }
        });

    // y: rows within each plane.
    let mut b = vec![0.0; data.len()];
    b.par_chunks_mut(plane)
        .zip(a.par_chunks(plane))
        .for_each(|(out, src)| {
            for j in 0..ny {
                let row = &mut out[j * nx..(j + 1) * nx];
                for (t, w) in kernel.iter().enumerate() {
                    let sj = clamp_offset(j, t as isize - r, ny);
                    let srow = &src[sj * nx..(sj + 1) * nx];
                    for (o, s) in row.iter_mut().zip(srow) {
                        *o += w * s;
                    }
                }
            }
        });

    // z: each output plane is a weighted sum of input planes.
    a.par_chunks_mut(plane).enumerate().for_each(|(k, out)| {
        out.iter_mut().for_each(|x| *x = 0.0);
        for (t, w) in kernel.iter().enumerate() {
            let sk = clamp_offset(k, t as isize - r, nz);
            let src = &b[sk * plane..(sk + 1) * plane];
            for (o, s) in out.iter_mut().zip(src) {
                *o += w * s;
            }
        }
    });
    a
}

pub fn gaussian_smooth(volume: &Volume3, sigma: f64) -> Result<Volume3> {
    check_sigma(sigma)?;
    volume.with_data(smooth3(volume.data(), volume.dims(), sigma))
}

/// Hessian entries `[xx, yy, zz, xy, xz, yz]` at voxel `(i, j, k)` of an
/// already smoothed grid, multiplied by `scale2`.
#[inline]
pub fn hessian_from_smoothed(
    f: &[f64],
    [nx, ny, nz]: [usize; 3],
    i: usize,
    j: usize,
    k: usize,
    scale2: f64,
) -> [f64; 6] {
    let (im, ip) = (i.saturating_sub(1), (i + 1).min(nx - 1));
    let (jm, jp) = (j.saturating_sub(1), (j + 1).min(ny - 1));
    let (km, kp) = (k.saturating_sub(1), (k + 1).min(nz - 1));
    let at = |a: usize, b: usize, c: usize| f[a + nx * (b + ny * c)];
    let c = at(i, j, k);
    let xx = at(ip, j, k) - 2.0 * c + at(im, j, k);
    let yy = at(i, jp, k) - 2.0 * c + at(i, jm, k);
    let zz = at(i, j, kp) - 2.0 * c + at(i, j, km);
    let xy = (at(ip, jp, k) - at(ip, jm, k) - at(im, jp, k) + at(im, jm, k)) * 0.25;
    let xz = (at(ip, j, kp) - at(ip, j, km) - at(im, j, kp) + at(im, j, km)) * 0.25;
    let yz = (at(i, jp, kp) - at(i, jp, km) - at(i, jm, kp) + at(i, jm, km)) * 0.25;
    [
        xx * scale2,
        yy * scale2,
        zz * scale2,
        xy * scale2,
        xz * scale2,
        yz * scale2,
    ]
}

/// Six scale-normalized second-derivative volumes.
#[derive(Clone, Debug)]
pub struct Hessian6 {
    pub xx: Volume3,
    pub yy: Volume3,
    pub zz: Volume3,
    pub xy: Volume3,
    pub xz: Volume3,
    pub yz: Volume3,
}

impl Hessian6 {
    /// Symmetric matrix at linear index `idx`.
    pub fn matrix(&self, idx: usize) -> [[f64; 3]; 3] {
        let g = |v: &Volume3| v.data()[idx];
        let (xy, xz, yz) = (g(&self.xy), g(&self.xz), g(&self.yz));
        [
            [g(&self.xx), xy, xz],
            [xy, g(&self.yy), yz],
            [xz, yz, g(&self.zz)],
        ]
    }
}

pub fn hessian_at_scale(volume: &Volume3, sigma: f64) -> Result<Hessian6> {
    check_sigma(sigma)?;
    let dims = volume.dims();
    let smoothed = smooth3(volume.data(), dims, sigma);
    let s2 = sigma * sigma;
    let grid = *volume.grid();
    let entries: Vec<[f64; 6]> = (0..grid.len())
        .into_par_iter()
        .map(|idx| {
            let [i, j, k] = grid.coords(idx);
            hessian_from_smoothed(&smoothed, dims, i, j, k, s2)
        })
        .collect();
    let comp = |c: usize| volume.with_data(entries.iter().map(|h| h[c]).collect());
    Ok(Hessian6 {
        xx: comp(0)?,
        yy: comp(1)?,
        zz: comp(2)?,
        xy: comp(3)?,
        xz: comp(4)?,
        yz: comp(5)?,
    })
}

pub fn gaussian_smooth_2d(img: &Image2<f64>, sigma: f64) -> Result<Image2<f64>> {
    check_sigma(sigma)?;
    Ok(Image2 {
        width: img.width,
        height: img.height,
        data: smooth3(&img.data, [img.width, img.height, 1], sigma),
    })
}

/// `[xx, yy, xy]` at pixel `(u, v)` of a smoothed image, times `scale2`.
#[inline]
pub fn hessian2_from_smoothed(
    f: &[f64],
    w: usize,
    h: usize,
    u: usize,
    v: usize,
    scale2: f64,
) -> [f64; 3] {
    let (um, up) = (u.saturating_sub(1), (u + 1).min(w - 1));
    let (vm, vp) = (v.saturating_sub(1), (v + 1).min(h - 1));
    let at = |a: usize, b: usize| f[a + w * b];
    let c = at(u, v);
    let xx = at(up, v) - 2.0 * c + at(um, v);
    let yy = at(u, vp) - 2.0 * c + at(u, vm);
    let xy = (at(up, vp) - at(up, vm) - at(um, vp) + at(um, vm)) * 0.25;
    [xx * scale2, yy * scale2, xy * scale2]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::Grid;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn kernel_is_normalized_and_sized() {
        for sigma in [0.25, 0.5, 1.0, 2.3] {
            let k = gaussian_kernel(sigma);
            assert_eq!(k.len(), 2 * (3.0 * sigma).ceil() as usize + 1);
            assert!((k.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn constant_volume_unchanged() {
        let v = Volume3::constant(Grid::isotropic([7, 6, 5]).unwrap(), 4.2);
        let s = gaussian_smooth(&v, 1.3).unwrap();
        assert!(s.data().iter().all(|x| (x - 4.2).abs() < 1e-9));
        let h = hessian_at_scale(&v, 1.0).unwrap();
        for c in [&h.xx, &h.yy, &h.zz, &h.xy, &h.xz, &h.yz] {
            assert!(c.data().iter().all(|&x| x.abs() < 1e-12));
        }
    }

    #[test]
    fn impulse_gives_symmetric_gaussian() {
        let g = Grid::isotropic([11, 11, 11]).unwrap();
        let v =
            Volume3::from_fn(g, |i, j, k| if (i, j, k) == (5, 5, 5) { 1.0 } else { 0.0 }).unwrap();
        let s = gaussian_smooth(&v, 1.0).unwrap();
        let k = gaussian_kernel(1.0);
        let peak = s.get(5, 5, 5);
        assert!((peak - k[3].powi(3)).abs() < 1e-15);
        assert!(s.data().iter().all(|&x| x <= peak));
        for d in 1..=3 {
            let a = s.get(5 + d, 5, 5);
            assert!((a - s.get(5 - d, 5, 5)).abs() < 1e-15);
            assert!((a - s.get(5, 5 + d, 5)).abs() < 1e-15);
            assert!((a - s.get(5, 5, 5 - d)).abs() < 1e-15);
        }
    }

    #[test]
    fn semigroup_property() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let v = Volume3::from_fn(Grid::isotropic([24, 24, 24]).unwrap(), |_, _, _| {
            rng.random::<f64>()
        })
        .unwrap();
        for sigma in [1.0, 1.5] {
            let twice = gaussian_smooth(&gaussian_smooth(&v, sigma).unwrap(), sigma).unwrap();
            let once = gaussian_smooth(&v, sigma * 2f64.sqrt()).unwrap();
            let n = v.len() as f64;
            let diff = (twice
                .data()
                .iter()
                .zip(once.data())
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                / n)
                .sqrt();
            let rms = (once.data().iter().map(|a| a * a).sum::<f64>() / n).sqrt();
            assert!(diff < 0.02 * rms, "sigma {sigma}: {diff} vs {rms}");
        }
    }

    #[test]
    fn linear_ramp_has_zero_hessian_inside() {
        let g = Grid::isotropic([14, 14, 14]).unwrap();
        let v = Volume3::from_fn(g, |i, j, k| {
            0.7 * i as f64 - 0.2 * j as f64 + 1.1 * k as f64
        })
        .unwrap();
        let h = hessian_at_scale(&v, 1.0).unwrap();
        for k in 4..10 {
            for j in 4..10 {
                for i in 4..10 {
                    let m = h.matrix(g.index(i, j, k));
                    for row in m {
                        for x in row {
                            assert!(x.abs() < 1e-6 * 0.7, "{x}");
                        }
                    }
                }
            }
        }
    }
}
