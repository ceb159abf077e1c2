//! Geometry-aware scalar volumes and binary masks.
//!
//! Voxels are stored column-major: the first axis varies fastest, so the
//! linear index of `(i, j, k)` is `i + nx * (j + ny * k)`.

use crate::error::{Error, Result};
use crate::nifti_io::VolumeHeader;

/// Relative tolerance used when comparing voxel spacings. NIfTI stores
/// spacing as `f32`, so volumes that round-trip through disk differ in the
/// low bits.
const SPACING_RTOL: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid {
    pub dims: [usize; 3],
    /// Millimetres per voxel along each axis.
    pub spacing: [f64; 3],
}

impl Grid {
    pub fn new(dims: [usize; 3], spacing: [f64; 3]) -> Result<Self> {
        if dims.contains(&0) {
            return Err(Error::InvalidGeometry(format!(
                "dimensions must be positive, got {dims:?}"
            )));
        }
        if spacing.iter().any(|&d| !(d.is_finite() && d > 0.0)) {
            return Err(Error::InvalidGeometry(format!(
                "spacing must be positive and finite, got {spacing:?}"
            )));
        }
        Ok(Self { dims, spacing })
    }

    /// Unit spacing.
    pub fn isotropic(dims: [usize; 3]) -> Result<Self> {
        Self::new(dims, [1.0; 3])
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Unchecked linearization; callers guarantee the coordinate is in range.
    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    pub fn linear_index(&self, i: usize, j: usize, k: usize) -> Result<usize> {
        linear_index([i, j, k], self.dims)
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> [usize; 3] {
        let nx = self.dims[0];
        let ny = self.dims[1];
        [idx % nx, (idx / nx) % ny, idx / (nx * ny)]
    }

    /// Same dimensions and (within `f32` precision) the same spacing.
    pub fn matches(&self, other: &Grid) -> bool {
        self.dims == other.dims
            && self
                .spacing
                .iter()
                .zip(other.spacing.iter())
                .all(|(a, b)| (a - b).abs() <= SPACING_RTOL * a.abs().max(b.abs()))
    }

    pub fn ensure_matches(&self, other: &Grid, what: &str) -> Result<()> {
        if self.matches(other) {
            Ok(())
        } else {
            Err(Error::GeometryMismatch(format!(
                "{what}: {:?} @ {:?} vs {:?} @ {:?}",
                self.dims, self.spacing, other.dims, other.spacing
            )))
        }
    }
}

/// Column-major linearization `i + nx * (j + ny * k)`.
pub fn linear_index(ijk: [usize; 3], dims: [usize; 3]) -> Result<usize> {
    let [i, j, k] = ijk;
    let [nx, ny, nz] = dims;
    if i >= nx || j >= ny || k >= nz {
        return Err(Error::OutOfBounds {
            i,
            j,
            k,
            nx,
            ny,
            nz,
        });
    }
    Ok(i + nx * (j + ny * k))
}

#[derive(Clone, Debug)]
pub struct Volume3 {
    grid: Grid,
    data: Vec<f64>,
    header: Option<VolumeHeader>,
}

impl Volume3 {
    /// Builds a volume, rejecting wrong lengths and non-finite samples.
    pub fn new(grid: Grid, data: Vec<f64>) -> Result<Self> {
        if data.len() != grid.len() {
            return Err(Error::InvalidGeometry(format!(
                "data length {} does not match {:?} ({} voxels)",
                data.len(),
                grid.dims,
                grid.len()
            )));
        }
        if let Some(idx) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(idx));
        }
        Ok(Self {
            grid,
            data,
            header: None,
        })
    }

    pub fn zeros(grid: Grid) -> Self {
        Self {
            grid,
            data: vec![0.0; grid.len()],
            header: None,
        }
    }

    pub fn constant(grid: Grid, value: f64) -> Self {
        Self {
            grid,
            data: vec![value; grid.len()],
            header: None,
        }
    }

    pub fn from_fn(grid: Grid, mut f: impl FnMut(usize, usize, usize) -> f64) -> Result<Self> {
        let [nx, ny, nz] = grid.dims;
        let mut data = Vec::with_capacity(grid.len());
        for k in 0..nz {
            for j in 0..ny {
                for i in 0..nx {
                    data.push(f(i, j, k));
                }
            }
        }
        Self::new(grid, data)
    }

    /// A new volume on the same grid (and header) as `self`.
    pub fn with_data(&self, data: Vec<f64>) -> Result<Self> {
        let mut out = Self::new(self.grid, data)?;
        out.header = self.header.clone();
        Ok(out)
    }

    pub fn with_header(mut self, header: Option<VolumeHeader>) -> Self {
        self.header = header;
        self
    }

    #[inline]
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    #[inline]
    pub fn dims(&self) -> [usize; 3] {
        self.grid.dims
    }

    #[inline]
    pub fn spacing(&self) -> [f64; 3] {
        self.grid.spacing
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn header(&self) -> Option<&VolumeHeader> {
        self.header.as_ref()
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[self.grid.index(i, j, k)]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

#[derive(Clone, Debug)]
pub struct BinaryMask3 {
    grid: Grid,
    data: Vec<u8>,
    header: Option<VolumeHeader>,
}

impl BinaryMask3 {
    /// Builds a mask; every value must be exactly 0 or 1.
    pub fn new(grid: Grid, data: Vec<u8>) -> Result<Self> {
        if data.len() != grid.len() {
            return Err(Error::InvalidGeometry(format!(
                "mask length {} does not match {:?}",
                data.len(),
                grid.dims
            )));
        }
        if let Some(idx) = data.iter().position(|&v| v > 1) {
            return Err(Error::InvalidGeometry(format!(
                "mask value {} at index {idx} is not binary",
                data[idx]
            )));
        }
        Ok(Self {
            grid,
            data,
            header: None,
        })
    }

    pub fn empty(grid: Grid) -> Self {
        Self {
            grid,
            data: vec![0; grid.len()],
            header: None,
        }
    }

    pub fn full(grid: Grid) -> Self {
        Self {
            grid,
            data: vec![1; grid.len()],
            header: None,
        }
    }

    pub fn from_bools(grid: Grid, bits: impl IntoIterator<Item = bool>) -> Result<Self> {
        Self::new(grid, bits.into_iter().map(u8::from).collect())
    }

    pub fn from_fn(grid: Grid, mut f: impl FnMut(usize, usize, usize) -> bool) -> Self {
        let [nx, ny, nz] = grid.dims;
        let mut data = Vec::with_capacity(grid.len());
        for k in 0..nz {
            for j in 0..ny {
                for i in 0..nx {
                    data.push(u8::from(f(i, j, k)));
                }
            }
        }
        Self {
            grid,
            data,
            header: None,
        }
    }

    /// Foreground wherever `pred(value)` holds.
    pub fn threshold(volume: &Volume3, pred: impl Fn(f64) -> bool) -> Self {
        Self {
            grid: *volume.grid(),
            data: volume.data().iter().map(|&v| u8::from(pred(v))).collect(),
            header: volume.header().cloned(),
        }
    }

    /// Nonzero voxels of a volume (used when loading masks stored as floats).
    pub fn from_nonzero(volume: &Volume3) -> Self {
        Self::threshold(volume, |v| v != 0.0)
    }

    pub fn with_header(mut self, header: Option<VolumeHeader>) -> Self {
        self.header = header;
        self
    }

    #[inline]
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    #[inline]
    pub fn dims(&self) -> [usize; 3] {
        self.grid.dims
    }

    #[inline]
    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    pub fn header(&self) -> Option<&VolumeHeader> {
        self.header.as_ref()
    }

    #[inline]
    pub fn contains(&self, idx: usize) -> bool {
        self.data[idx] != 0
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> bool {
        self.data[self.grid.index(i, j, k)] != 0
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&v| v != 0).count()
    }

    pub fn is_empty(&self) -> bool {
        self.data.iter().all(|&v| v == 0)
    }

    /// Linear indices of foreground voxels in ascending order.
    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.data
            .iter()
            .enumerate()
            .filter_map(|(idx, &v)| (v != 0).then_some(idx))
    }

    pub fn union(&self, other: &BinaryMask3) -> Result<Self> {
        self.zip_with(other, "mask union", |a, b| a | b)
    }

    pub fn intersect(&self, other: &BinaryMask3) -> Result<Self> {
        self.zip_with(other, "mask intersection", |a, b| a & b)
    }

    /// `self` with the voxels of `other` removed.
    pub fn difference(&self, other: &BinaryMask3) -> Result<Self> {
        self.zip_with(other, "mask difference", |a, b| a & (1 - b))
    }

    /// Whether every foreground voxel of `self` is also set in `other`.
    pub fn is_subset_of(&self, other: &BinaryMask3) -> bool {
        self.grid.dims == other.grid.dims
            && self
                .data
                .iter()
                .zip(other.data.iter())
                .all(|(&a, &b)| a <= b)
    }

    fn zip_with(&self, other: &BinaryMask3, what: &str, op: impl Fn(u8, u8) -> u8) -> Result<Self> {
        self.grid.ensure_matches(&other.grid, what)?;
        Ok(Self {
            grid: self.grid,
            data: self
                .data
                .iter()
                .zip(other.data.iter())
                .map(|(&a, &b)| op(a, b))
                .collect(),
            header: self.header.clone().or_else(|| other.header.clone()),
        })
    }

    /// 0.0 / 1.0 copy of the mask.
    pub fn to_volume(&self) -> Volume3 {
        Volume3 {
            grid: self.grid,
            data: self.data.iter().map(|&v| f64::from(v)).collect(),
            header: self.header.clone(),
        }
    }
}

impl PartialEq for BinaryMask3 {
    fn eq(&self, other: &Self) -> bool {
        self.grid.dims == other.grid.dims && self.data == other.data
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_index_examples() {
        assert_eq!(linear_index([0, 0, 0], [4, 4, 4]).unwrap(), 0);
        assert_eq!(linear_index([1, 0, 0], [4, 4, 4]).unwrap(), 1);
        assert_eq!(linear_index([0, 1, 2], [4, 4, 4]).unwrap(), 36);
    }

    #[test]
    fn linear_index_rejects_out_of_bounds() {
        assert!(matches!(
            linear_index([4, 0, 0], [4, 4, 4]),
            Err(Error::OutOfBounds { i: 4, .. })
        ));
        assert!(linear_index([0, 0, 4], [4, 4, 4]).is_err());
    }

    #[test]
    fn linear_index_is_a_bijection() {
        let grid = Grid::isotropic([5, 7, 3]).unwrap();
        for idx in 0..grid.len() {
            let [i, j, k] = grid.coords(idx);
            assert_eq!(grid.linear_index(i, j, k).unwrap(), idx);
        }
    }

    #[test]
    fn rejects_bad_geometry() {
        assert!(Grid::new([0, 1, 1], [1.0; 3]).is_err());
        assert!(Grid::new([1, 1, 1], [1.0, 0.0, 1.0]).is_err());
        let grid = Grid::isotropic([2, 2, 2]).unwrap();
        assert!(Volume3::new(grid, vec![0.0; 7]).is_err());
        let mut data = vec![0.0; 8];
        data[3] = f64::NAN;
        assert!(matches!(Volume3::new(grid, data), Err(Error::NonFinite(3))));
        assert!(BinaryMask3::new(grid, vec![2; 8]).is_err());
    }

    #[test]
    fn set_operations() {
        let grid = Grid::isotropic([2, 2, 1]).unwrap();
        let a = BinaryMask3::new(grid, vec![1, 1, 0, 0]).unwrap();
        let b = BinaryMask3::new(grid, vec![0, 1, 1, 0]).unwrap();
        assert_eq!(a.union(&b).unwrap().data(), &[1, 1, 1, 0]);
        assert_eq!(a.intersect(&b).unwrap().data(), &[0, 1, 0, 0]);
        assert_eq!(a.difference(&b).unwrap().data(), &[1, 0, 0, 0]);
        let other = BinaryMask3::empty(Grid::isotropic([4, 1, 1]).unwrap());
        assert!(matches!(a.union(&other), Err(Error::GeometryMismatch(_))));
    }
}
