//! Slab-wise maximum intensity projection and back-projection.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::{BinaryMask3, Grid, Volume3};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Axis {
    X,
    Y,
    #[default]
    Z,
}

impl Axis {
    pub fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        }
    }

    /// The two in-plane axes, ascending.
    pub fn plane(self) -> [usize; 2] {
        match self {
            Axis::X => [1, 2],
            Axis::Y => [0, 2],
            Axis::Z => [0, 1],
        }
    }
}

impl TryFrom<u8> for Axis {
    type Error = Error;

    fn try_from(v: u8) -> Result<Self> {
        match v {
            0 => Ok(Axis::X),
            1 => Ok(Axis::Y),
            2 => Ok(Axis::Z),
            _ => Err(Error::InvalidConfig(format!(
                "axis must be 0, 1 or 2, got {v}"
            ))),
        }
    }
}

impl From<Axis> for u8 {
    fn from(a: Axis) -> u8 {
        a.index() as u8
    }
}

/// Column-major 2D grid: `data[u + width * v]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Image2<T> {
    pub width: usize,
    pub height: usize,
    pub data: Vec<T>,
}

impl<T: Copy> Image2<T> {
    pub fn filled(width: usize, height: usize, value: T) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> T {
        self.data[u + self.width * v]
    }
}

#[derive(Clone, Debug)]
pub struct MipStack {
    pub axis: Axis,
    pub grid: Grid,
    pub slabs: Vec<Image2<f64>>,
    /// Per slab, the slice index (along `axis`) of each pixel's maximum.
    pub argmax: Vec<Image2<usize>>,
    /// Inclusive `(first, last)` slice of each slab.
    pub slab_extents: Vec<(usize, usize)>,
}

#[inline]
fn voxel(axis: Axis, u: usize, v: usize, s: usize) -> [usize; 3] {
    match axis {
        Axis::X => [s, u, v],
        Axis::Y => [u, s, v],
        Axis::Z => [u, v, s],
    }
}

/// Slab extents for `n` slices of thickness `thickness` advancing by half a
/// slab. The last slab is truncated at the volume edge.
pub fn slab_extents(n: usize, thickness: usize) -> Vec<(usize, usize)> {
    let thickness = thickness.clamp(1, n);
    let stride = (thickness / 2).max(1);
    let mut out = Vec::new();
    let mut start = 0;
    loop {
        out.push((start, (start + thickness - 1).min(n - 1)));
        if start + thickness >= n {
            break;
        }
        start += stride;
    }
    out
}

/// Slab thickness in slices for a slab of `slab_mm` along `axis`.
pub fn slab_thickness(grid: &Grid, slab_mm: f64, axis: Axis) -> Result<usize> {
    if !(slab_mm.is_finite() && slab_mm > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "slab thickness must be positive, got {slab_mm}"
        )));
    }
    let slices = (slab_mm / grid.spacing[axis.index()]).round();
    if slices < 1.0 {
        return Err(Error::InvalidConfig(format!(
            "a {slab_mm} mm slab is thinner than one slice ({} mm)",
            grid.spacing[axis.index()]
        )));
    }
    Ok(slices as usize)
}

pub fn mip_slabs(volume: &Volume3, slab_mm: f64, axis: Axis) -> Result<MipStack> {
    let grid = *volume.grid();
    let thickness = slab_thickness(&grid, slab_mm, axis)?;
    let n = grid.dims[axis.index()];
    let [pu, pv] = axis.plane();
    let (width, height) = (grid.dims[pu], grid.dims[pv]);
    let extents = slab_extents(n, thickness);
    let data = volume.data();

    let (slabs, argmax): (Vec<_>, Vec<_>) = extents
        .par_iter()
        .map(|&(first, last)| {
            let mut img = Image2::filled(width, height, f64::NEG_INFINITY);
            let mut arg = Image2::filled(width, height, first);
            for s in first..=last {
                for v in 0..height {
                    for u in 0..width {
                        let [i, j, k] = voxel(axis, u, v, s);
                        let x = data[grid.index(i, j, k)];
                        let p = u + width * v;
                        // Strict comparison keeps the smallest slice on ties.
                        if x > img.data[p] {
                            img.data[p] = x;
                            arg.data[p] = s;
                        }
                    }
                }
            }
            (img, arg)
        })
        .unzip();

    Ok(MipStack {
        axis,
        grid,
        slabs,
        argmax,
        slab_extents: extents,
    })
}

impl MipStack {
    pub fn width(&self) -> usize {
        self.grid.dims[self.axis.plane()[0]]
    }

    pub fn height(&self) -> usize {
        self.grid.dims[self.axis.plane()[1]]
    }

    #[inline]
    pub fn source_index(&self, slab: usize, u: usize, v: usize) -> usize {
        let s = self.argmax[slab].get(u, v);
        let [i, j, k] = voxel(self.axis, u, v, s);
        self.grid.index(i, j, k)
    }

    /// Per slab, the value of `mask` at each pixel's stored argmax voxel.
    pub fn sample_at_argmax(&self, mask: &BinaryMask3) -> Result<Vec<Image2<u8>>> {
        self.grid
            .ensure_matches(mask.grid(), "mask vs projection")?;
        let (w, h) = (self.width(), self.height());
        Ok((0..self.slabs.len())
            .map(|s| {
                let mut img = Image2::filled(w, h, 0u8);
                for v in 0..h {
                    for u in 0..w {
                        img.data[u + w * v] = mask.data()[self.source_index(s, u, v)];
                    }
                }
                img
            })
            .collect())
    }

    /// Per slab, whether any voxel of `mask` lies under each pixel.
    pub fn footprint(&self, mask: &BinaryMask3) -> Result<Vec<Image2<u8>>> {
        self.grid
            .ensure_matches(mask.grid(), "mask vs projection")?;
        let (w, h) = (self.width(), self.height());
        Ok(self
            .slab_extents
            .iter()
            .map(|&(first, last)| {
                let mut img = Image2::filled(w, h, 0u8);
                for s in first..=last {
                    for v in 0..h {
                        for u in 0..w {
                            let [i, j, k] = voxel(self.axis, u, v, s);
                            img.data[u + w * v] |= mask.data()[self.grid.index(i, j, k)];
                        }
                    }
                }
                img
            })
            .collect())
    }
}

/// Lifts per-slab 2D seeds back to the voxels that produced each projected
/// maximum. Overlapping slabs that hit the same voxel set it once.
pub fn backproject(seeds2d: &[Image2<u8>], stack: &MipStack) -> Result<BinaryMask3> {
    if seeds2d.len() != stack.slabs.len() {
        return Err(Error::GeometryMismatch(format!(
            "{} seed images for {} slabs",
            seeds2d.len(),
            stack.slabs.len()
        )));
    }
    let (w, h) = (stack.width(), stack.height());
    let mut data = vec![0u8; stack.grid.len()];
    for (s, seeds) in seeds2d.iter().enumerate() {
        if seeds.width != w || seeds.height != h {
            return Err(Error::GeometryMismatch(format!(
                "slab {s}: seed image {}x{} vs projection {w}x{h}",
                seeds.width, seeds.height
            )));
        }
        for v in 0..h {
            for u in 0..w {
                if seeds.get(u, v) != 0 {
                    data[stack.source_index(s, u, v)] = 1;
                }
            }
        }
    }
    BinaryMask3::new(stack.grid, data)
}
