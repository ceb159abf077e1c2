use crate::error::{Error, Result};
use crate::volume::{BinaryMask3, Volume3};

/// Population mean and standard deviation (divide by N) of `values` where
/// `keep` is set. Accumulates in index order so results do not depend on
/// thread count.
pub fn mean_std_where(values: &[f64], keep: impl Fn(usize) -> bool) -> Option<(f64, f64)> {
    let mut n = 0usize;
    let mut sum = 0.0;
    for (i, &v) in values.iter().enumerate() {
        if keep(i) {
            n += 1;
            sum += v;
        }
    }
    if n == 0 {
        return None;
    }
    let mean = sum / n as f64;
    let mut ss = 0.0;
    for (i, &v) in values.iter().enumerate() {
        if keep(i) {
            let d = v - mean;
            ss += d * d;
        }
    }
    Some((mean, (ss / n as f64).sqrt()))
}

pub fn masked_mean_std(volume: &Volume3, mask: &BinaryMask3) -> Result<(f64, f64)> {
    volume
        .grid()
        .ensure_matches(mask.grid(), "volume vs mask")?;
    mean_std_where(volume.data(), |i| mask.contains(i)).ok_or(Error::EmptyRegion("mask"))
}
