//! Voxel adjacency and connected-component labeling.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::{BinaryMask3, Grid};

/// 3D voxel adjacency: faces (6), faces + edges (18) or faces + edges +
/// corners (26).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Connectivity {
    Six,
    Eighteen,
    #[default]
    TwentySix,
}

impl Connectivity {
    /// Neighbor offsets `(di, dj, dk)`, excluding the centre.
    pub fn offsets(self) -> Vec<[isize; 3]> {
        let mut out = Vec::with_capacity(26);
        for dk in -1isize..=1 {
            for dj in -1isize..=1 {
                for di in -1isize..=1 {
                    let manhattan = di.abs() + dj.abs() + dk.abs();
                    let keep = match self {
                        Connectivity::Six => manhattan == 1,
                        Connectivity::Eighteen => manhattan == 1 || manhattan == 2,
                        Connectivity::TwentySix => manhattan > 0,
                    };
                    if keep {
                        out.push([di, dj, dk]);
                    }
                }
            }
        }
        out
    }
}

impl TryFrom<u8> for Connectivity {
    type Error = Error;

    fn try_from(value: u8) -> Result<Self> {
        match value {
            6 => Ok(Connectivity::Six),
            18 => Ok(Connectivity::Eighteen),
            26 => Ok(Connectivity::TwentySix),
            other => Err(Error::InvalidConfig(format!(
                "connectivity must be 6, 18 or 26, got {other}"
            ))),
        }
    }
}

impl From<Connectivity> for u8 {
    fn from(c: Connectivity) -> u8 {
        match c {
            Connectivity::Six => 6,
            Connectivity::Eighteen => 18,
            Connectivity::TwentySix => 26,
        }
    }
}

impl std::fmt::Display for Connectivity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", u8::from(*self))
    }
}

/// Precomputed in-bounds neighbor enumeration for one grid.
pub struct Neighborhood {
    grid: Grid,
    offsets: Vec<[isize; 3]>,
}

impl Neighborhood {
    pub fn new(grid: Grid, connectivity: Connectivity) -> Self {
        Self {
            grid,
            offsets: connectivity.offsets(),
        }
    }

    /// Calls `f` with the linear index of every in-bounds neighbor of `idx`,
    /// in a fixed order.
    #[inline]
    pub fn for_each(&self, idx: usize, mut f: impl FnMut(usize)) {
        let [i, j, k] = self.grid.coords(idx);
        let [nx, ny, nz] = self.grid.dims;
        for &[di, dj, dk] in &self.offsets {
            let ni = i as isize + di;
            let nj = j as isize + dj;
            let nk = k as isize + dk;
            if ni < 0 || nj < 0 || nk < 0 {
                continue;
            }
            let (ni, nj, nk) = (ni as usize, nj as usize, nk as usize);
            if ni >= nx || nj >= ny || nk >= nz {
                continue;
            }
            f(self.grid.index(ni, nj, nk));
        }
    }
}

/// Result of labeling: labels are `1..=C`, 0 is background.
#[derive(Clone, Debug)]
pub struct Components {
    pub labels: Vec<u32>,
    /// `sizes[c - 1]` is the voxel count of label `c`.
    pub sizes: Vec<usize>,
    /// `min_index[c - 1]` is the smallest linear index carrying label `c`.
    pub min_index: Vec<usize>,
}

impl Components {
    pub fn count(&self) -> usize {
        self.sizes.len()
    }
}

/// Labels the foreground of `mask`. Components are numbered in order of
/// their smallest linear index.
pub fn connected_components(mask: &BinaryMask3, connectivity: Connectivity) -> Components {
    let grid = *mask.grid();
    let hood = Neighborhood::new(grid, connectivity);
    let mut labels = vec![0u32; grid.len()];
    let mut sizes = Vec::new();
    let mut min_index = Vec::new();
    let mut queue = VecDeque::new();

    for start in 0..grid.len() {
        if !mask.contains(start) || labels[start] != 0 {
            continue;
        }
        let label = sizes.len() as u32 + 1;
        labels[start] = label;
        queue.push_back(start);
        let mut size = 0usize;
        while let Some(idx) = queue.pop_front() {
            size += 1;
            hood.for_each(idx, |n| {
                if mask.contains(n) && labels[n] == 0 {
                    labels[n] = label;
                    queue.push_back(n);
                }
            });
        }
        sizes.push(size);
        min_index.push(start);
    }

    Components {
        labels,
        sizes,
        min_index,
    }
}
