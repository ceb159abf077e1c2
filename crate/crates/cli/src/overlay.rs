//! Mid-volume slices with mask contours for visual QC.

use image::{Rgb, RgbImage};
use vesselseg_core::{BinaryMask3, Volume3};

#[derive(Clone, Copy, Debug)]
pub enum Plane {
    Axial,
    Coronal,
    Sagittal,
}

impl Plane {
    pub const ALL: [Plane; 3] = [Plane::Axial, Plane::Coronal, Plane::Sagittal];

    pub fn name(self) -> &'static str {
        match self {
            Plane::Axial => "axial",
            Plane::Coronal => "coronal",
            Plane::Sagittal => "sagittal",
        }
    }

    /// In-plane axes and the fixed axis.
    fn axes(self) -> (usize, usize, usize) {
        match self {
            Plane::Axial => (0, 1, 2),
            Plane::Coronal => (0, 2, 1),
            Plane::Sagittal => (1, 2, 0),
        }
    }
}

const CONTOUR: Rgb<u8> = Rgb([255, 40, 40]);

/// Grey-scale slice through the middle of the volume, windowed to the
/// slice's own range, with the boundary of `mask` drawn in red.
pub fn render(chi: &Volume3, mask: &BinaryMask3, plane: Plane) -> RgbImage {
    let dims = chi.dims();
    let (a, b, fixed) = plane.axes();
    let (w, h) = (dims[a], dims[b]);
    let s = dims[fixed] / 2;
    let index = |u: usize, v: usize| {
        let mut ijk = [0usize; 3];
        ijk[a] = u;
        ijk[b] = v;
        ijk[fixed] = s;
        chi.grid().index(ijk[0], ijk[1], ijk[2])
    };

    let values: Vec<f64> = (0..h)
        .flat_map(|v| (0..w).map(move |u| (u, v)))
        .map(|(u, v)| chi.data()[index(u, v)])
        .collect();
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };

    let inside = |u: isize, v: isize| {
        u >= 0
            && v >= 0
            && (u as usize) < w
            && (v as usize) < h
            && mask.contains(index(u as usize, v as usize))
    };
    // Rows are flipped so the last in-plane index is at the top.
    RgbImage::from_fn(w as u32, h as u32, |x, y| {
        let (u, v) = (x as usize, h - 1 - y as usize);
        let (ui, vi) = (u as isize, v as isize);
        if inside(ui, vi)
            && !(inside(ui - 1, vi)
                && inside(ui + 1, vi)
                && inside(ui, vi - 1)
                && inside(ui, vi + 1))
        {
            return CONTOUR;
        }
        let g = ((values[u + w * v] - lo) / span * 255.0)
            .round()
            .clamp(0.0, 255.0) as u8;
        Rgb([g, g, g])
    })
}

pub fn encode_png(img: &RgbImage) -> Result<Vec<u8>, image::ImageError> {
    let mut buf = std::io::Cursor::new(Vec::new());
    img.write_to(&mut buf, image::ImageFormat::Png)?;
    Ok(buf.into_inner())
}

#[cfg(test)]
mod tests {
    use super::*;
    use vesselseg_core::Grid;

    #[test]
    fn contour_marks_mask_boundary_only() {
        let g = Grid::isotropic([9, 9, 9]).unwrap();
        let chi = Volume3::from_fn(g, |i, _, _| i as f64).unwrap();
        let mask = BinaryMask3::from_fn(g, |i, j, _| (2..7).contains(&i) && (2..7).contains(&j));
        let img = render(&chi, &mask, Plane::Axial);
        assert_eq!(img.dimensions(), (9, 9));
        assert_eq!(*img.get_pixel(2, 8 - 4), CONTOUR);
        assert_ne!(*img.get_pixel(4, 8 - 4), CONTOUR);
        assert_eq!(*img.get_pixel(0, 0), Rgb([0, 0, 0]));
        assert_eq!(*img.get_pixel(8, 0), Rgb([255, 255, 255]));
        assert!(!encode_png(&img).unwrap().is_empty());
    }
}
