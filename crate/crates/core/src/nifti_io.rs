//! NIfTI-1 load/save for volumes and masks.
//!
//! Source headers are carried through unchanged (affine, units, description)
//! so outputs land in the same space as their inputs.

use std::path::Path;
use std::sync::Arc;

use ndarray::ShapeBuilder;
use nifti::writer::WriterOptions;
use nifti::{IntoNdArray, NiftiHeader, NiftiObject, ReaderOptions};

use crate::error::{Error, Result};
use crate::volume::{BinaryMask3, Grid, Volume3};

/// Opaque copy of a source file's NIfTI header.
#[derive(Clone, Debug)]
pub struct VolumeHeader(Arc<NiftiHeader>);

impl VolumeHeader {
    pub fn nifti(&self) -> &NiftiHeader {
        &self.0
    }
}

fn read(path: &Path) -> Result<(Grid, Vec<f64>, NiftiHeader)> {
    let obj = ReaderOptions::new().read_file(path)?;
    let header = obj.header().clone();
    let dim = header.dim;
    let rank = dim[0] as usize;
    if !(1..=7).contains(&rank) {
        return Err(Error::InvalidGeometry(format!(
            "{}: unsupported rank {rank}",
            path.display()
        )));
    }
    if rank > 3 && dim[4..=rank].iter().any(|&d| d > 1) {
        return Err(Error::InvalidGeometry(format!(
            "{}: 4D and higher volumes are not supported (dim = {:?})",
            path.display(),
            &dim[..=rank]
        )));
    }
    let dims = [1, 2, 3].map(|a| if a <= rank { dim[a].max(1) as usize } else { 1 });
    let spacing = [1, 2, 3].map(|a| f64::from(header.pixdim[a]).abs());
    let grid = Grid::new(dims, spacing)
        .map_err(|e| Error::InvalidGeometry(format!("{}: {e}", path.display())))?;

    let arr = obj.into_volume().into_ndarray::<f64>()?;
    // The array is Fortran-ordered; iterating its transpose walks memory
    // with the first axis fastest.
    let mut data: Vec<f64> = arr.t().iter().copied().collect();
    if data.len() != grid.len() {
        return Err(Error::InvalidGeometry(format!(
            "{}: {} samples for a {:?} grid",
            path.display(),
            data.len(),
            dims
        )));
    }
    let mut replaced = 0usize;
    for v in data.iter_mut().filter(|v| !v.is_finite()) {
        *v = 0.0;
        replaced += 1;
    }
    if replaced > 0 {
        log::warn!(
            "{}: replaced {replaced} non-finite samples with 0",
            path.display()
        );
    }
    Ok((grid, data, header))
}

pub fn load_volume(path: impl AsRef<Path>) -> Result<Volume3> {
    let (grid, data, header) = read(path.as_ref())?;
    Ok(Volume3::new(grid, data)?.with_header(Some(VolumeHeader(Arc::new(header)))))
}

/// Loads a mask; any nonzero sample is foreground.
pub fn load_mask(path: impl AsRef<Path>) -> Result<BinaryMask3> {
    let (grid, data, header) = read(path.as_ref())?;
    BinaryMask3::from_bools(grid, data.iter().map(|&v| v != 0.0))
        .map(|m| m.with_header(Some(VolumeHeader(Arc::new(header)))))
}

fn reference_header(grid: &Grid, header: Option<&VolumeHeader>) -> NiftiHeader {
    match header {
        Some(h) => h.nifti().clone(),
        None => {
            let mut h = NiftiHeader {
                pixdim: [1.0; 8],
                ..NiftiHeader::default()
            };
            for a in 0..3 {
                h.pixdim[a + 1] = grid.spacing[a] as f32;
            }
            h.xyzt_units = 2; // millimetres
            h.sform_code = 1;
            h.srow_x = [grid.spacing[0] as f32, 0.0, 0.0, 0.0];
            h.srow_y = [0.0, grid.spacing[1] as f32, 0.0, 0.0];
            h.srow_z = [0.0, 0.0, grid.spacing[2] as f32, 0.0];
            h
        }
    }
}

fn write<T>(path: &Path, grid: &Grid, header: Option<&VolumeHeader>, data: Vec<T>) -> Result<()>
where
    T: nifti::DataElement + bytemuck::Pod,
{
    let mut h = reference_header(grid, header);
    for a in 0..3 {
        h.pixdim[a + 1] = grid.spacing[a] as f32;
    }
    let [nx, ny, nz] = grid.dims;
    let arr = ndarray::Array3::from_shape_vec((nx, ny, nz).f(), data)
        .map_err(|e| Error::InvalidGeometry(e.to_string()))?;
    WriterOptions::new(path)
        .reference_header(&h)
        .write_nifti(&arr)?;
    Ok(())
}

/// Writes a volume as 32-bit float samples.
pub fn save_volume(volume: &Volume3, path: impl AsRef<Path>) -> Result<()> {
    let data: Vec<f32> = volume.data().iter().map(|&v| v as f32).collect();
    write(path.as_ref(), volume.grid(), volume.header(), data)
}

/// Writes a mask as 8-bit integers with values {0, 1}.
pub fn save_mask(mask: &BinaryMask3, path: impl AsRef<Path>) -> Result<()> {
    write(
        path.as_ref(),
        mask.grid(),
        mask.header(),
        mask.data().to_vec(),
    )
}
