//! Overlap, error and regional statistics for evaluating vessel masks.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::volume::{BinaryMask3, Volume3};

pub fn dice(a: &BinaryMask3, b: &BinaryMask3) -> Result<f64> {
    a.grid().ensure_matches(b.grid(), "dice operands")?;
    Ok(dice_counts(
        a.data().iter().zip(b.data()).map(|(&x, &y)| (x, y)),
    ))
}

fn dice_counts(pairs: impl Iterator<Item = (u8, u8)>) -> f64 {
    let (mut na, mut nb, mut both) = (0usize, 0usize, 0usize);
    for (x, y) in pairs {
        na += x as usize;
        nb += y as usize;
        both += (x & y) as usize;
    }
    if na + nb == 0 {
        1.0
    } else {
        2.0 * both as f64 / (na + nb) as f64
    }
}

/// Dice over the union of the listed `(axis, slice)` planes.
pub fn dice_restricted(a: &BinaryMask3, b: &BinaryMask3, slices: &[(usize, usize)]) -> Result<f64> {
    a.grid().ensure_matches(b.grid(), "dice operands")?;
    if slices.is_empty() {
        return Err(Error::InvalidConfig(
            "slice set for restricted dice is empty".into(),
        ));
    }
    let grid = *a.grid();
    let mut planes: [Vec<bool>; 3] = grid.dims.map(|n| vec![false; n]);
    for &(axis, s) in slices {
        if axis > 2 || s >= grid.dims[axis] {
            return Err(Error::InvalidConfig(format!(
                "slice ({axis}, {s}) outside volume {:?}",
                grid.dims
            )));
        }
        planes[axis][s] = true;
    }
    let pairs = (0..grid.len()).filter_map(|idx| {
        let [i, j, k] = grid.coords(idx);
        (planes[0][i] || planes[1][j] || planes[2][k]).then(|| (a.data()[idx], b.data()[idx]))
    });
    Ok(dice_counts(pairs))
}

/// `n` consecutive slices centred in the volume along each axis, the
/// layout used for restricted overlap scoring.
pub fn central_slices(dims: [usize; 3], n: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for (axis, &d) in dims.iter().enumerate() {
        let n = n.min(d);
        let start = (d - n) / 2;
        out.extend((start..start + n).map(|s| (axis, s)));
    }
    out
}

/// Root mean squared error and PSNR over `region`. PSNR uses the peak
/// `max |ref|` over the region and is `+inf` when the error is zero.
pub fn rmse_psnr(pred: &Volume3, reference: &Volume3, region: &BinaryMask3) -> Result<(f64, f64)> {
    pred.grid()
        .ensure_matches(reference.grid(), "prediction vs reference")?;
    pred.grid()
        .ensure_matches(region.grid(), "prediction vs region")?;
    let (mut ss, mut peak, mut n) = (0.0f64, 0.0f64, 0usize);
    for idx in region.indices() {
        let (p, r) = (pred.data()[idx], reference.data()[idx]);
        ss += (p - r) * (p - r);
        peak = peak.max(r.abs());
        n += 1;
    }
    if n == 0 {
        return Err(Error::EmptyRegion("evaluation region"));
    }
    let rmse = (ss / n as f64).sqrt();
    let psnr = if rmse == 0.0 {
        f64::INFINITY
    } else {
        20.0 * (peak / rmse).log10()
    };
    Ok((rmse, psnr))
}

/// Percentage of `roi` voxels inside `vessel`.
pub fn vessel_proportion(roi: &BinaryMask3, vessel: &BinaryMask3) -> Result<f64> {
    roi.grid()
        .ensure_matches(vessel.grid(), "roi vs vessel mask")?;
    let n = roi.count();
    if n == 0 {
        return Err(Error::EmptyRegion("roi"));
    }
    let hit = roi.indices().filter(|&i| vessel.contains(i)).count();
    Ok(100.0 * hit as f64 / n as f64)
}

pub fn masked_mean_susceptibility(
    chi: &Volume3,
    roi: &BinaryMask3,
    vessel: &BinaryMask3,
    exclude_vessels: bool,
) -> Result<f64> {
    chi.grid()
        .ensure_matches(roi.grid(), "susceptibility vs roi")?;
    roi.grid()
        .ensure_matches(vessel.grid(), "roi vs vessel mask")?;
    let (mut sum, mut n) = (0.0, 0usize);
    for idx in roi.indices() {
        if exclude_vessels && vessel.contains(idx) {
            continue;
        }
        sum += chi.data()[idx];
        n += 1;
    }
    if n == 0 {
        return Err(Error::EmptyRegion("roi after vessel exclusion"));
    }
    Ok(sum / n as f64)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskCondition {
    /// Whole region, vessels included.
    #[default]
    WithoutMask,
    /// Region with vessel voxels excluded.
    WithMask,
    /// Vessel voxels of the region only.
    WithinMask,
}

impl MaskCondition {
    pub const ALL: [MaskCondition; 3] = [
        MaskCondition::WithoutMask,
        MaskCondition::WithMask,
        MaskCondition::WithinMask,
    ];

    /// The evaluation region for this condition.
    pub fn region(self, roi: &BinaryMask3, vessel: &BinaryMask3) -> Result<BinaryMask3> {
        match self {
            MaskCondition::WithoutMask => Ok(roi.clone()),
            MaskCondition::WithMask => roi.difference(vessel),
            MaskCondition::WithinMask => roi.intersect(vessel),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub inputs: BTreeMap<String, String>,
    pub config_hash: Option<String>,
}

/// Named scalar results for one mask condition. Non-finite values are
/// written as the strings `"inf"`, `"-inf"` or `"nan"`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub condition: MaskCondition,
    #[serde(
        skip_serializing_if = "Option::is_none",
        serialize_with = "ser_opt",
        deserialize_with = "de_opt",
        default
    )]
    pub dsc: Option<f64>,
    #[serde(
        skip_serializing_if = "Option::is_none",
        serialize_with = "ser_opt",
        deserialize_with = "de_opt",
        default
    )]
    pub rmse: Option<f64>,
    #[serde(
        skip_serializing_if = "Option::is_none",
        serialize_with = "ser_opt",
        deserialize_with = "de_opt",
        default
    )]
    pub psnr: Option<f64>,
    #[serde(
        skip_serializing_if = "Option::is_none",
        serialize_with = "ser_opt",
        deserialize_with = "de_opt",
        default
    )]
    pub vessel_proportion_pct: Option<f64>,
    #[serde(
        skip_serializing_if = "Option::is_none",
        serialize_with = "ser_opt",
        deserialize_with = "de_opt",
        default
    )]
    pub mean_susceptibility: Option<f64>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty", default)]
    pub extra: BTreeMap<String, f64>,
    pub provenance: Provenance,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum JsonNumber {
    Finite(f64),
    Special(String),
}

fn ser_opt<S: Serializer>(v: &Option<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    match v {
        Some(x) if x.is_finite() => s.serialize_f64(*x),
        Some(x) if x.is_nan() => s.serialize_str("nan"),
        Some(x) if *x > 0.0 => s.serialize_str("inf"),
        Some(_) => s.serialize_str("-inf"),
        None => s.serialize_none(),
    }
}

fn de_opt<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Option<f64>, D::Error> {
    let v: Option<JsonNumber> = Option::deserialize(d)?;
    Ok(match v {
        None => None,
        Some(JsonNumber::Finite(x)) => Some(x),
        Some(JsonNumber::Special(s)) => Some(match s.as_str() {
            "inf" => f64::INFINITY,
            "-inf" => f64::NEG_INFINITY,
            "nan" => f64::NAN,
            other => {
                return Err(serde::de::Error::custom(format!(
                    "unexpected number string {other:?}"
                )))
            }
        }),
    })
}
