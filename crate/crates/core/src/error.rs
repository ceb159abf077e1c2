use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("geometry mismatch: {0}")]
    GeometryMismatch(String),

    #[error("voxel ({i}, {j}, {k}) is outside a {nx}x{ny}x{nz} grid")]
    OutOfBounds {
        i: usize,
        j: usize,
        k: usize,
        nx: usize,
        ny: usize,
        nz: usize,
    },

    #[error("empty {0}")]
    EmptyRegion(&'static str),

    #[error("non-finite value at linear index {0}")]
    NonFinite(usize),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("nifti: {0}")]
    Nifti(#[from] nifti::NiftiError),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
