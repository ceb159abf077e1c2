//! Synthetic scenes with analytic ground truth.
//!
//! Tubes follow polylines and are bright in all three contrasts. Blobs are
//! spheres that are bright in R2* and the paramagnetic map only. Both use
//! the same radial profile: a plateau whose edge at the radius is blurred by
//! a Gaussian with a full width at half maximum of half the radius.
//! Primitives compose additively, seeded Gaussian noise is added, and all
//! volumes are zeroed outside an ellipsoidal brain mask.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nifti_io::{save_mask, save_volume};
use crate::volume::{BinaryMask3, Grid, Volume3};

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Intensity {
    pub r2star: f64,
    pub chi_para: f64,
    pub chi_dia: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TubeSpec {
    /// Polyline vertices in mm.
    pub path: Vec<[f64; 3]>,
    /// Radius in mm.
    pub radius: f64,
    pub intensity: Intensity,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlobIntensity {
    pub r2star: f64,
    pub chi_para: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlobSpec {
    /// Centre in mm.
    pub center: [f64; 3],
    /// Radius in mm.
    pub radius: f64,
    pub intensity: BlobIntensity,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    pub dims: [usize; 3],
    #[serde(default = "unit_spacing")]
    pub spacing: [f64; 3],
    /// Noise standard deviation as a fraction of the brightest tube in each
    /// map (of the background level when there are no tubes).
    #[serde(default = "default_noise")]
    pub noise_fraction: f64,
    /// Brain ellipsoid semi-axes as a fraction of the field of view.
    #[serde(default = "default_brain_fraction")]
    pub brain_fraction: f64,
    #[serde(default)]
    pub background: Intensity,
    #[serde(default, rename = "tube")]
    pub tubes: Vec<TubeSpec>,
    #[serde(default, rename = "blob")]
    pub blobs: Vec<BlobSpec>,
}

fn unit_spacing() -> [f64; 3] {
    [1.0; 3]
}

fn default_noise() -> f64 {
    0.02
}

fn default_brain_fraction() -> f64 {
    0.45
}

/// FWHM of the Gaussian that blurs the rim, relative to the radius.
const RIM_FWHM_FRACTION: f64 = 0.5;
/// Profile support beyond the radius, in rim standard deviations.
const RIM_SUPPORT: f64 = 4.0;

fn rim_sigma(radius: f64) -> f64 {
    RIM_FWHM_FRACTION * radius / (2.0 * (2.0 * std::f64::consts::LN_2).sqrt())
}

/// Radial profile at distance `d` from the axis or centre: a unit step at
/// `radius` blurred by a Gaussian, so the half-maximum sits on the rim.
#[inline]
pub fn radial_profile(d: f64, radius: f64) -> f64 {
    let s = rim_sigma(radius);
    let t = (d - radius) / s;
    if t > RIM_SUPPORT {
        0.0
    } else {
        0.5 * libm::erfc(t / std::f64::consts::SQRT_2)
    }
}

fn point_segment_distance(p: [f64; 3], a: [f64; 3], b: [f64; 3]) -> f64 {
    let ab = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
    let ap = [p[0] - a[0], p[1] - a[1], p[2] - a[2]];
    let len2 = ab[0] * ab[0] + ab[1] * ab[1] + ab[2] * ab[2];
    let t = if len2 > 0.0 {
        ((ap[0] * ab[0] + ap[1] * ab[1] + ap[2] * ab[2]) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let d = [ap[0] - t * ab[0], ap[1] - t * ab[1], ap[2] - t * ab[2]];
    (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()
}

fn path_length(path: &[[f64; 3]]) -> f64 {
    path.windows(2)
        .map(|w| {
            (0..3)
                .map(|a| (w[1][a] - w[0][a]).powi(2))
                .sum::<f64>()
                .sqrt()
        })
        .sum()
}

fn world(grid: &Grid, i: usize, j: usize, k: usize) -> [f64; 3] {
    [
        i as f64 * grid.spacing[0],
        j as f64 * grid.spacing[1],
        k as f64 * grid.spacing[2],
    ]
}

fn check_inside(grid: &Grid, p: [f64; 3], what: &str) -> Result<()> {
    for a in 0..3 {
        let hi = (grid.dims[a] - 1) as f64 * grid.spacing[a];
        if !(p[a] >= 0.0 && p[a] <= hi) {
            return Err(Error::InvalidConfig(format!(
                "{what} point {p:?} mm lies outside the field of view"
            )));
        }
    }
    Ok(())
}

/// Sparse footprint of a primitive: `(index, profile weight, inside radius)`
/// over the bounding box of its support.
fn rasterize(
    grid: &Grid,
    lo: [f64; 3],
    hi: [f64; 3],
    radius: f64,
    dist: impl Fn([f64; 3]) -> f64,
) -> Vec<(usize, f64, bool)> {
    let reach = radius + RIM_SUPPORT * rim_sigma(radius);
    let range = |a: usize| {
        let s = grid.spacing[a];
        let first = ((lo[a] - reach) / s).floor().max(0.0) as usize;
        let last = (((hi[a] + reach) / s).ceil() as usize).min(grid.dims[a] - 1);
        first..=last
    };
    let (ri, rj, rk) = (range(0), range(1), range(2));
    let mut out = Vec::new();
    for k in rk {
        for j in rj.clone() {
            for i in ri.clone() {
                let d = dist(world(grid, i, j, k));
                let w = radial_profile(d, radius);
                if w > 0.0 {
                    out.push((grid.index(i, j, k), w, d <= radius));
                }
            }
        }
    }
    out
}

fn tube_footprint(grid: &Grid, path: &[[f64; 3]], radius: f64) -> Result<Vec<(usize, f64, bool)>> {
    if !(radius.is_finite() && radius > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "tube radius must be positive, got {radius}"
        )));
    }
    for &p in path {
        check_inside(grid, p, "tube")?;
    }
    if path.is_empty() || path_length(path) == 0.0 {
        return Ok(Vec::new());
    }
    let lo = [0, 1, 2].map(|a| path.iter().map(|p| p[a]).fold(f64::INFINITY, f64::min));
    let hi = [0, 1, 2].map(|a| path.iter().map(|p| p[a]).fold(f64::NEG_INFINITY, f64::max));
    Ok(rasterize(grid, lo, hi, radius, |x| {
        path.windows(2)
            .map(|w| point_segment_distance(x, w[0], w[1]))
            .fold(f64::INFINITY, f64::min)
    }))
}

fn blob_footprint(grid: &Grid, center: [f64; 3], radius: f64) -> Result<Vec<(usize, f64, bool)>> {
    if !(radius.is_finite() && radius > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "blob radius must be positive, got {radius}"
        )));
    }
    check_inside(grid, center, "blob")?;
    Ok(rasterize(grid, center, center, radius, |x| {
        (0..3)
            .map(|a| (x[a] - center[a]).powi(2))
            .sum::<f64>()
            .sqrt()
    }))
}

fn apply(
    into: &Volume3,
    footprint: &[(usize, f64, bool)],
    intensity: f64,
) -> Result<(Volume3, BinaryMask3)> {
    let mut data = into.data().to_vec();
    let mut mask = vec![0u8; data.len()];
    for &(idx, w, inside) in footprint {
        data[idx] += intensity * w;
        mask[idx] = inside as u8;
    }
    Ok((into.with_data(data)?, BinaryMask3::new(*into.grid(), mask)?))
}

/// Adds a tube along `path` (mm). Returns the updated volume and the voxels
/// within `radius` of the path.
pub fn generate_tube(
    into: &Volume3,
    path: &[[f64; 3]],
    radius: f64,
    intensity: f64,
) -> Result<(Volume3, BinaryMask3)> {
    let fp = tube_footprint(into.grid(), path, radius)?;
    apply(into, &fp, intensity)
}

/// Adds a sphere centred at `center` (mm). Returns the updated volume and
/// the voxels within `radius` of the centre.
pub fn generate_blob(
    into: &Volume3,
    center: [f64; 3],
    radius: f64,
    intensity: f64,
) -> Result<(Volume3, BinaryMask3)> {
    let fp = blob_footprint(into.grid(), center, radius)?;
    apply(into, &fp, intensity)
}

#[derive(Clone, Debug)]
pub struct PhantomScene {
    pub r2star: Volume3,
    pub chi_para: Volume3,
    pub chi_dia: Volume3,
    pub brain: BinaryMask3,
    pub gt_vessels: BinaryMask3,
    pub gt_blobs: BinaryMask3,
    pub rng_seed: u64,
    pub spec: SceneSpec,
}

/// File names written by [`PhantomScene::save`].
pub const SCENE_FILES: [&str; 6] = [
    "r2star.nii",
    "chi_para.nii",
    "chi_dia.nii",
    "brain_mask.nii",
    "gt_vessels.nii",
    "gt_blobs.nii",
];

impl PhantomScene {
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        save_volume(&self.r2star, dir.join(SCENE_FILES[0]))?;
        save_volume(&self.chi_para, dir.join(SCENE_FILES[1]))?;
        save_volume(&self.chi_dia, dir.join(SCENE_FILES[2]))?;
        save_mask(&self.brain, dir.join(SCENE_FILES[3]))?;
        save_mask(&self.gt_vessels, dir.join(SCENE_FILES[4]))?;
        save_mask(&self.gt_blobs, dir.join(SCENE_FILES[5]))?;
        Ok(())
    }
}

impl SceneSpec {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let spec: SceneSpec = toml::from_str(s).map_err(|e| Error::Parse(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scene spec serializes")
    }

    pub fn grid(&self) -> Result<Grid> {
        Grid::new(self.dims, self.spacing)
    }

    fn brain_axes(&self) -> ([f64; 3], [f64; 3]) {
        let c = [0, 1, 2].map(|a| (self.dims[a] - 1) as f64 * self.spacing[a] / 2.0);
        let r = [0, 1, 2].map(|a| self.brain_fraction * self.dims[a] as f64 * self.spacing[a]);
        (c, r)
    }

    /// Whether a ball of `radius` around `p` fits in the brain ellipsoid,
    /// tested by shrinking the semi-axes by `radius`.
    fn ball_in_brain(&self, p: [f64; 3], radius: f64) -> bool {
        let (c, r) = self.brain_axes();
        let mut s = 0.0;
        for a in 0..3 {
            let semi = r[a] - radius;
            if semi <= 0.0 {
                return false;
            }
            s += ((p[a] - c[a]) / semi).powi(2);
        }
        s <= 1.0
    }

    pub fn validate(&self) -> Result<()> {
        let grid = self.grid()?;
        if !(self.noise_fraction.is_finite() && self.noise_fraction >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "noise_fraction must be non-negative, got {}",
                self.noise_fraction
            )));
        }
        if !(self.brain_fraction > 0.0 && self.brain_fraction <= 0.5) {
            return Err(Error::InvalidConfig(format!(
                "brain_fraction must lie in (0, 0.5], got {}",
                self.brain_fraction
            )));
        }
        for (n, t) in self.tubes.iter().enumerate() {
            tube_footprint(&grid, &[], t.radius)?;
            for &p in &t.path {
                check_inside(&grid, p, "tube")?;
                if !self.ball_in_brain(p, t.radius) {
                    return Err(Error::InvalidConfig(format!(
                        "tube {n}: point {p:?} mm with radius {} is not inside the brain ellipsoid",
                        t.radius
                    )));
                }
            }
        }
        for (n, b) in self.blobs.iter().enumerate() {
            check_inside(&grid, b.center, "blob")?;
            if !(b.radius.is_finite() && b.radius > 0.0) || !self.ball_in_brain(b.center, b.radius)
            {
                return Err(Error::InvalidConfig(format!(
                    "blob {n}: centre {:?} mm with radius {} is not inside the brain ellipsoid",
                    b.center, b.radius
                )));
            }
        }
        Ok(())
    }

    /// Three tubes (radii 1, 2 and 3 voxels) and two blobs (radii 6 and 10
    /// voxels) in a 128^3 isotropic 1 mm field of view.
    pub fn acceptance() -> Self {
        Self::acceptance_scaled([128, 128, 128])
    }

    /// The acceptance layout with positions scaled to `dims` (1 mm voxels).
    /// Radii are kept in voxels.
    pub fn acceptance_scaled(dims: [usize; 3]) -> Self {
        let f = [0, 1, 2].map(|a| dims[a] as f64 / 128.0);
        let at = |p: [f64; 3]| [p[0] * f[0], p[1] * f[1], p[2] * f[2]];
        let tube = |path: &[[f64; 3]], radius: f64| TubeSpec {
            path: path.iter().map(|&p| at(p)).collect(),
            radius,
            intensity: Intensity {
                r2star: 30.0,
                chi_para: 0.6,
                chi_dia: 0.6,
            },
        };
        let blob = |center: [f64; 3], radius: f64| BlobSpec {
            center: at(center),
            radius,
            intensity: BlobIntensity {
                r2star: 30.0,
                chi_para: 0.6,
            },
        };
        Self {
            dims,
            spacing: [1.0; 3],
            noise_fraction: 0.02,
            brain_fraction: 0.45,
            background: Intensity {
                r2star: 20.0,
                chi_para: 0.02,
                chi_dia: 0.02,
            },
            tubes: vec![
                tube(
                    &[[24.0, 64.0, 40.0], [64.0, 56.0, 64.0], [104.0, 64.0, 88.0]],
                    3.0,
                ),
                tube(
                    &[[40.0, 30.0, 30.0], [60.0, 36.0, 64.0], [88.0, 40.0, 100.0]],
                    2.0,
                ),
                tube(
                    &[[30.0, 80.0, 96.0], [64.0, 96.0, 100.0], [96.0, 84.0, 90.0]],
                    1.0,
                ),
            ],
            blobs: vec![
                blob([64.0, 90.0, 60.0], 10.0),
                blob([86.0, 40.0, 38.0], 6.0),
            ],
        }
    }
}

pub fn generate_scene(spec: &SceneSpec, rng_seed: u64) -> Result<PhantomScene> {
    spec.validate()?;
    let grid = spec.grid()?;
    let n = grid.len();
    let bg = spec.background;
    let mut r2 = vec![bg.r2star; n];
    let mut para = vec![bg.chi_para; n];
    let mut dia = vec![bg.chi_dia; n];
    let mut gt_vessels = vec![0u8; n];
    let mut gt_blobs = vec![0u8; n];

    for t in &spec.tubes {
        for (idx, w, inside) in tube_footprint(&grid, &t.path, t.radius)? {
            r2[idx] += w * t.intensity.r2star;
            para[idx] += w * t.intensity.chi_para;
            dia[idx] += w * t.intensity.chi_dia;
            gt_vessels[idx] |= inside as u8;
        }
    }
    for b in &spec.blobs {
        for (idx, w, inside) in blob_footprint(&grid, b.center, b.radius)? {
            r2[idx] += w * b.intensity.r2star;
            para[idx] += w * b.intensity.chi_para;
            gt_blobs[idx] |= inside as u8;
        }
    }
    if let Some(idx) = (0..n).find(|&i| gt_vessels[i] & gt_blobs[i] != 0) {
        return Err(Error::InvalidConfig(format!(
            "tube and blob ground truth overlap at voxel {:?}",
            grid.coords(idx)
        )));
    }

    let (c, r) = spec.brain_axes();
    let brain = BinaryMask3::from_fn(grid, |i, j, k| {
        let p = world(&grid, i, j, k);
        (0..3).map(|a| ((p[a] - c[a]) / r[a]).powi(2)).sum::<f64>() <= 1.0
    });

    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let reference = |pick: fn(&Intensity) -> f64, background: f64| {
        let peak = spec
            .tubes
            .iter()
            .map(|t| pick(&t.intensity))
            .fold(0.0, f64::max);
        if peak > 0.0 {
            peak
        } else if background > 0.0 {
            background
        } else {
            1.0
        }
    };
    let sigmas = [
        spec.noise_fraction * reference(|i| i.r2star, bg.r2star),
        spec.noise_fraction * reference(|i| i.chi_para, bg.chi_para),
        spec.noise_fraction * reference(|i| i.chi_dia, bg.chi_dia),
    ];
    for (data, sigma) in [&mut r2, &mut para, &mut dia].into_iter().zip(sigmas) {
        let normal = Normal::new(0.0, sigma).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        for x in data.iter_mut() {
            *x += normal.sample(&mut rng);
        }
    }
    for i in 0..n {
        if !brain.contains(i) {
            r2[i] = 0.0;
            para[i] = 0.0;
            dia[i] = 0.0;
        }
    }
    for x in para.iter_mut().chain(dia.iter_mut()).chain(r2.iter_mut()) {
        *x = x.max(0.0);
    }

    Ok(PhantomScene {
        r2star: Volume3::new(grid, r2)?,
        chi_para: Volume3::new(grid, para)?,
        chi_dia: Volume3::new(grid, dia)?,
        brain,
        gt_vessels: BinaryMask3::new(grid, gt_vessels)?,
        gt_blobs: BinaryMask3::new(grid, gt_blobs)?,
        rng_seed,
        spec: spec.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::components::{connected_components, Connectivity};
    use std::f64::consts::PI;

    fn grid(n: usize) -> Grid {
        Grid::isotropic([n, n, n]).unwrap()
    }

    #[test]
    fn profile_shape() {
        // The blurred rim leaves the centre a hair below 1.
        let centre = radial_profile(0.0, 2.0);
        assert!(centre < 1.0 && 1.0 - centre < 1e-5);
        assert!((radial_profile(2.0, 2.0) - 0.5).abs() < 1e-15);
        let s = rim_sigma(2.0);
        let inner = radial_profile(2.0 - s, 2.0);
        let outer = radial_profile(2.0 + s, 2.0);
        assert!((inner + outer - 1.0).abs() < 1e-12);
        assert!((outer - 0.158_655_253_931_457).abs() < 1e-9);
        assert_eq!(radial_profile(10.0, 2.0), 0.0);
    }

    #[test]
    fn straight_tube_volume() {
        // The tube spans every slice, so each of the 40 slices holds one
        // 1 mm length of it. Below r = 2 the lattice count of a disc is
        // off by more than 15% (5 voxels for r = 1).
        let v = Volume3::zeros(grid(40));
        for r in [2.0, 2.5, 3.0, 4.0, 6.0] {
            let (_, m) =
                generate_tube(&v, &[[20.0, 20.0, 0.0], [20.0, 20.0, 39.0]], r, 1.0).unwrap();
            let expected = PI * r * r * 40.0;
            let got = m.count() as f64;
            assert!(
                (got - expected).abs() <= 0.15 * expected,
                "r {r}: {got} vs {expected}"
            );
        }
    }

    #[test]
    fn blob_volume_and_additivity() {
        let v = Volume3::zeros(grid(32));
        let (out, m) = generate_blob(&v, [16.0, 16.0, 16.0], 5.0, 2.0).unwrap();
        let expected = 4.0 / 3.0 * PI * 125.0;
        assert!((m.count() as f64 - expected).abs() <= 0.15 * expected);
        let peak = out.get(16, 16, 16);
        assert!((peak - 2.0).abs() < 1e-5);
        let (twice, _) = generate_blob(&out, [16.0, 16.0, 16.0], 5.0, 2.0).unwrap();
        assert_eq!(twice.get(16, 16, 16), 2.0 * peak);
        let (same, m0) = generate_blob(&v, [16.0, 16.0, 16.0], 5.0, 0.0).unwrap();
        assert!(same.data().iter().all(|&x| x == 0.0));
        assert_eq!(m0, m);
    }

    #[test]
    fn degenerate_and_invalid_tubes() {
        let v = Volume3::zeros(grid(16));
        let (out, m) = generate_tube(&v, &[[8.0, 8.0, 8.0], [8.0, 8.0, 8.0]], 2.0, 1.0).unwrap();
        assert!(m.is_empty());
        assert!(out.data().iter().all(|&x| x == 0.0));
        assert!(generate_tube(&v, &[[8.0, 8.0, 8.0], [8.0, 8.0, 20.0]], 2.0, 1.0).is_err());
        assert!(generate_tube(&v, &[[8.0, 8.0, 8.0], [8.0, 8.0, 9.0]], 0.0, 1.0).is_err());
        assert!(generate_blob(&v, [-1.0, 8.0, 8.0], 2.0, 1.0).is_err());
    }

    #[test]
    fn two_disjoint_tubes_are_two_components() {
        let v = Volume3::zeros(grid(30));
        let (v, a) = generate_tube(&v, &[[5.0, 5.0, 5.0], [5.0, 5.0, 25.0]], 2.0, 1.0).unwrap();
        let (_, b) = generate_tube(&v, &[[20.0, 20.0, 5.0], [20.0, 20.0, 25.0]], 2.0, 1.0).unwrap();
        let cc = connected_components(&a.union(&b).unwrap(), Connectivity::TwentySix);
        assert_eq!(cc.count(), 2);
    }

    #[test]
    fn empty_spec_is_noise_only() {
        let spec = SceneSpec::from_toml_str("dims = [16, 16, 16]").unwrap();
        let s = generate_scene(&spec, 1).unwrap();
        assert!(s.gt_vessels.is_empty() && s.gt_blobs.is_empty());
        assert!(s.r2star.data().iter().any(|&x| x != 0.0));
    }

    #[test]
    fn acceptance_scene_is_valid_and_deterministic() {
        let spec = SceneSpec::acceptance();
        let a = generate_scene(&spec, 7).unwrap();
        let b = generate_scene(&spec, 7).unwrap();
        let c = generate_scene(&spec, 8).unwrap();
        assert_eq!(a.chi_para.data(), b.chi_para.data());
        assert_ne!(a.chi_para.data(), c.chi_para.data());
        assert_eq!(a.gt_vessels, c.gt_vessels);
        assert!(a.gt_vessels.intersect(&a.gt_blobs).unwrap().is_empty());
        assert!(a.gt_vessels.is_subset_of(&a.brain) && a.gt_blobs.is_subset_of(&a.brain));
        assert_eq!(
            connected_components(&a.gt_vessels, Connectivity::TwentySix).count(),
            3
        );
        assert_eq!(
            connected_components(&a.gt_blobs, Connectivity::TwentySix).count(),
            2
        );
    }

    #[test]
    fn spec_toml_round_trip_and_errors() {
        let spec = SceneSpec::acceptance();
        let back = SceneSpec::from_toml_str(&spec.to_toml_string()).unwrap();
        assert_eq!(back, spec);
        let err = SceneSpec::from_toml_str("dims = [16, 16, 16]\nnoise = 3").unwrap_err();
        assert!(matches!(err, Error::Parse(_)));
        let outside = "dims = [16, 16, 16]\n[[blob]]\ncenter = [1.0, 1.0, 1.0]\nradius = 2.0\nintensity = { r2star = 1.0, chi_para = 1.0 }\n";
        assert!(matches!(
            SceneSpec::from_toml_str(outside),
            Err(Error::InvalidConfig(_))
        ));
    }
}
