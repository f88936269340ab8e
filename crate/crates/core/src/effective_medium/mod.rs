//! Effective-medium description of a dense cluster: the volume integral
//! equation with constant absorption `c_bar` on the host domain, and the
//! effective conductivity from `-lap sigma + c_bar sigma = 0`.

mod fft;
mod sigma;
mod volume;

pub use sigma::{solve_sigma, EffectiveCoefficients};
pub use volume::{apply_volume_operator, compare_alpha_v, eval_w, self_cell_weight, solve_v, VolumeDensityHistory};

use crate::error::{Error, Result};
use crate::geometry::AxisBox;
use crate::Vec3;

/// Bisection steps used to locate the boundary between a cell center inside
/// the domain and its outside neighbour.
const WALL_BISECTIONS: usize = 50;

/// Uniform cell-centered grid on a box, with an inside mask.
///
/// `walls[c][d]` is the distance from the center of cell `c` to the domain
/// boundary in direction `d` (`-x, +x, -y, +y, -z, +z`) in units of the
/// spacing, when that boundary lies before the next cell center; otherwise 1.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelGrid {
    omega: AxisBox,
    counts: [usize; 3],
    spacing: Vec3,
    mask: Vec<bool>,
    walls: Vec<[f64; 6]>,
}

impl VoxelGrid {
    /// The whole box is the domain.
    pub fn new(omega: AxisBox, counts: [usize; 3]) -> Result<Self> {
        Self::from_indicator(omega, counts, |_| true)
    }

    /// Cells whose centers satisfy `inside` form the domain; the boundary
    /// position between cells is refined by bisection on `inside`.
    pub fn from_indicator(omega: AxisBox, counts: [usize; 3], inside: impl Fn(&Vec3) -> bool) -> Result<Self> {
        if counts.iter().any(|&n| n == 0) {
            return Err(Error::InvalidArgument(format!("voxel counts must be positive, got {counts:?}")));
        }
        let ext = omega.extent();
        let spacing = Vec3::new(ext.x / counts[0] as f64, ext.y / counts[1] as f64, ext.z / counts[2] as f64);
        let mut grid = Self { omega, counts, spacing, mask: Vec::new(), walls: Vec::new() };
        let total = grid.cell_count();
        grid.mask = (0..total).map(|c| inside(&grid.center(c))).collect();
        if !grid.mask.iter().any(|&m| m) {
            return Err(Error::InvalidArgument("domain contains no cell centers".into()));
        }
        grid.walls = (0..total)
            .map(|c| {
                let mut w = [1.0; 6];
                if !grid.mask[c] {
                    return w;
                }
                let x = grid.center(c);
                for (d, wd) in w.iter_mut().enumerate() {
                    let axis = d / 2;
                    let step = if d % 2 == 0 { -1.0 } else { 1.0 };
                    let mut e = Vec3::zeros();
                    e[axis] = step * grid.spacing[axis];
                    let neighbour_inside = grid.neighbour(c, d).map(|n| grid.mask[n]).unwrap_or(false);
                    if neighbour_inside {
                        continue;
                    }
                    // Boundary of the box itself sits half a cell away.
                    let limit = if grid.neighbour(c, d).is_none() { 0.5 } else { 1.0 };
                    let (mut lo, mut hi) = (0.0, limit);
                    if inside(&(x + e * limit)) {
                        *wd = limit;
                        continue;
                    }
                    for _ in 0..WALL_BISECTIONS {
                        let mid = 0.5 * (lo + hi);
                        if inside(&(x + e * mid)) {
                            lo = mid;
                        } else {
                            hi = mid;
                        }
                    }
                    *wd = (0.5 * (lo + hi)).max(1e-3);
                }
                w
            })
            .collect();
        Ok(grid)
    }

    /// Ball of the given radius inside its bounding cube.
    pub fn ball(center: Vec3, radius: f64, per_axis: usize) -> Result<Self> {
        let r = Vec3::new(radius, radius, radius);
        let omega = AxisBox::new(center - r, center + r)?;
        Self::from_indicator(omega, [per_axis; 3], |x| (x - center).norm() < radius)
    }

    pub fn omega(&self) -> &AxisBox {
        &self.omega
    }

    pub fn counts(&self) -> [usize; 3] {
        self.counts
    }

    pub fn spacing(&self) -> Vec3 {
        self.spacing
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing.product()
    }

    pub fn cell_count(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn active_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn is_active(&self, c: usize) -> bool {
        self.mask[c]
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub(crate) fn walls(&self, c: usize) -> &[f64; 6] {
        &self.walls[c]
    }

    /// Linear index, `z` fastest.
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.counts[1] + j) * self.counts[2] + k
    }

    pub fn ijk(&self, c: usize) -> [usize; 3] {
        let k = c % self.counts[2];
        let j = (c / self.counts[2]) % self.counts[1];
        let i = c / (self.counts[1] * self.counts[2]);
        [i, j, k]
    }

    pub fn center(&self, c: usize) -> Vec3 {
        let [i, j, k] = self.ijk(c);
        self.omega.min
            + Vec3::new(
                (i as f64 + 0.5) * self.spacing.x,
                (j as f64 + 0.5) * self.spacing.y,
                (k as f64 + 0.5) * self.spacing.z,
            )
    }

    /// Cell whose closed extent contains `x`, if any.
    pub fn locate(&self, x: &Vec3) -> Option<usize> {
        let rel = x - self.omega.min;
        let mut idx = [0usize; 3];
        for a in 0..3 {
            let s = rel[a] / self.spacing[a];
            if !(s >= -1e-9 && s <= self.counts[a] as f64 + 1e-9) {
                return None;
            }
            idx[a] = (s.floor().max(0.0) as usize).min(self.counts[a] - 1);
        }
        Some(self.index(idx[0], idx[1], idx[2]))
    }

    /// Neighbour in direction `d` (`-x, +x, -y, +y, -z, +z`).
    pub fn neighbour(&self, c: usize, d: usize) -> Option<usize> {
        let mut ijk = self.ijk(c);
        let axis = d / 2;
        if d % 2 == 0 {
            if ijk[axis] == 0 {
                return None;
            }
            ijk[axis] -= 1;
        } else {
            if ijk[axis] + 1 == self.counts[axis] {
                return None;
            }
            ijk[axis] += 1;
        }
        Some(self.index(ijk[0], ijk[1], ijk[2]))
    }
}
