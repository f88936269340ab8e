use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{ReferenceShape, TriMesh};
use crate::error::{Error, Result};
use crate::Vec3;

/// Axis-aligned box `[min, max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisBox {
    pub min: Vec3,
    pub max: Vec3,
}

impl AxisBox {
    pub fn new(min: Vec3, max: Vec3) -> Result<Self> {
        if (0..3).any(|k| !(max[k] > min[k])) {
            return Err(Error::InvalidArgument(format!("empty box {min:?} .. {max:?}")));
        }
        Ok(Self { min, max })
    }

    pub fn unit() -> Self {
        Self { min: Vec3::zeros(), max: Vec3::new(1.0, 1.0, 1.0) }
    }

    pub fn extent(&self) -> Vec3 {
        self.max - self.min
    }

    pub fn volume(&self) -> f64 {
        self.extent().product()
    }

    pub fn center(&self) -> Vec3 {
        (self.min + self.max) * 0.5
    }

    pub fn diameter(&self) -> f64 {
        self.extent().norm()
    }

    /// Closed-box membership.
    pub fn contains_closed(&self, x: &Vec3) -> bool {
        (0..3).all(|k| x[k] >= self.min[k] && x[k] <= self.max[k])
    }
}

/// `M` cavities `D_j = eps B + z_j` sharing one reference shape.
#[derive(Debug, Clone)]
pub struct Cluster {
    eps: f64,
    centers: Vec<Vec3>,
    shape: ReferenceShape,
    a: f64,
    d: f64,
    gaps: Vec<f64>,
}

impl Cluster {
    /// Validates scale, distinct centers and disjoint cavities.
    ///
    /// Pairwise gaps use center distance minus the two bounding radii, which is
    /// exact for spheres and a lower bound otherwise.
    pub fn new(eps: f64, centers: Vec<Vec3>, shape: ReferenceShape) -> Result<Self> {
        if !(eps > 0.0) || !eps.is_finite() {
            return Err(Error::InvalidCluster(format!("scale must be positive, got {eps}")));
        }
        if centers.is_empty() {
            return Err(Error::InvalidCluster("no cavities".into()));
        }
        if centers.iter().any(|z| !z.iter().all(|c| c.is_finite())) {
            return Err(Error::InvalidCluster("non-finite center".into()));
        }
        let m = centers.len();
        let radius = eps * shape.bounding_radius();
        let mut gaps = vec![f64::INFINITY; m * m];
        let mut d = f64::INFINITY;
        for i in 0..m {
            for j in (i + 1)..m {
                let dist = (centers[i] - centers[j]).norm();
                if dist == 0.0 {
                    return Err(Error::InvalidCluster(format!("cavities {i} and {j} share a center")));
                }
                let gap = dist - 2.0 * radius;
                if !(gap > 0.0) {
                    return Err(Error::InvalidCluster(format!("cavities {i} and {j} overlap")));
                }
                gaps[i * m + j] = gap;
                gaps[j * m + i] = gap;
                d = d.min(gap);
            }
        }
        let a = eps * shape.diameter();
        Ok(Self { eps, centers, shape, a, d, gaps })
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn centers(&self) -> &[Vec3] {
        &self.centers
    }

    pub fn shape(&self) -> &ReferenceShape {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    /// Largest cavity diameter.
    pub fn a(&self) -> f64 {
        self.a
    }

    /// Smallest pairwise gap (infinite for a single cavity).
    pub fn d(&self) -> f64 {
        self.d
    }

    /// Gap `d_ij`; infinite on the diagonal.
    pub fn gap(&self, i: usize, j: usize) -> f64 {
        self.gaps[i * self.len() + j]
    }

    /// The cavity containing `x` in its interior, if any.
    pub fn cavity_containing(&self, x: &Vec3) -> Option<usize> {
        self.centers.iter().position(|z| self.shape.contains(&((x - z) / self.eps)))
    }

    /// Boundary mesh of cavity `j` given a triangulation of the reference shape.
    pub fn cavity_mesh(&self, reference: &TriMesh, j: usize) -> TriMesh {
        reference.transformed(self.eps, &self.centers[j])
    }

    /// Same cluster rigidly moved by `rotation` about the origin then `shift`.
    pub fn rigidly_moved(&self, rotation: &nalgebra::Rotation3<f64>, shift: &Vec3) -> Result<Self> {
        let centers = self.centers.iter().map(|z| rotation * z + shift).collect();
        Cluster::new(self.eps, centers, self.shape.clone())
    }

    /// CSV with columns `j,z_x,z_y,z_z,eps`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
        out.write_record(["j", "z_x", "z_y", "z_z", "eps"])?;
        for (j, z) in self.centers.iter().enumerate() {
            out.write_record(&[j.to_string(), z.x.to_string(), z.y.to_string(), z.z.to_string(), self.eps.to_string()])?;
        }
        out.flush().map_err(|e| Error::io("<cluster csv>", e))?;
        Ok(())
    }
}

/// Partition of an axis-aligned domain into `M = [vol / a]` cells of volume `a`.
#[derive(Debug, Clone)]
pub struct OmegaPartition {
    pub omega: AxisBox,
    /// Sub-box of `omega` covered by whole cells.
    pub covered: AxisBox,
    pub counts: [usize; 3],
    pub cell_size: Vec3,
    pub cell_volume: f64,
    pub cell_centers: Vec<Vec3>,
}

impl OmegaPartition {
    pub fn cell_count(&self) -> usize {
        self.cell_centers.len()
    }
}

/// `[x]`: the integer `n` with `n <= x < n + 1`, forgiving rounding noise in
/// quotients such as `1 / (1 / 27)`.
fn floor_count(x: f64) -> usize {
    let n = x.round();
    if (x - n).abs() <= 1e-9 * x.abs().max(1.0) {
        n as usize
    } else {
        x.floor() as usize
    }
}

/// Factorization `nx * ny * nz = m` whose cells `L_k / n_k` are closest to cubes.
fn best_factorization(m: usize, extent: &Vec3) -> [usize; 3] {
    let mut best = [m, 1, 1];
    let mut best_score = f64::INFINITY;
    for nx in (1..=m).filter(|n| m % n == 0) {
        let rest = m / nx;
        for ny in (1..=rest).filter(|n| rest % n == 0) {
            let nz = rest / ny;
            let logs = [extent.x / nx as f64, extent.y / ny as f64, extent.z / nz as f64].map(f64::ln);
            let mean = logs.iter().sum::<f64>() / 3.0;
            let score: f64 = logs.iter().map(|l| (l - mean).powi(2)).sum();
            if score < best_score - 1e-12 {
                best_score = score;
                best = [nx, ny, nz];
            }
        }
    }
    best
}

/// Periodic cluster in a box: one cavity of diameter `a` at the center of each
/// of `[vol(omega) / a]` cells of volume `a`.
///
/// The nominal separation `d0 * a^{1/3}` must satisfy `d0 > 1`; the realized
/// gap is the cell pitch minus the cavity diameter.
pub fn build_cluster(omega: &AxisBox, a: f64, d0: f64, shape: &ReferenceShape) -> Result<(Cluster, OmegaPartition)> {
    if !(d0 > 1.0) {
        return Err(Error::SeparationCondition(format!("d0 = {d0} must exceed 1")));
    }
    if !(a > 0.0) || !a.is_finite() {
        return Err(Error::InvalidArgument(format!("cavity size a = {a} must be positive")));
    }
    let vol = omega.volume();
    let m = floor_count(vol / a);
    if m < 1 {
        return Err(Error::InvalidArgument(format!("a = {a} exceeds the domain volume {vol}")));
    }
    let extent = omega.extent();
    let counts = best_factorization(m, &extent);
    // Shrink uniformly so each cell has volume exactly a.
    let shrink = (a * m as f64 / vol).cbrt();
    let cell_size = Vec3::new(
        shrink * extent.x / counts[0] as f64,
        shrink * extent.y / counts[1] as f64,
        shrink * extent.z / counts[2] as f64,
    );
    let covered_extent = extent * shrink;
    let lo = omega.center() - covered_extent * 0.5;
    let covered = AxisBox { min: lo, max: lo + covered_extent };

    let eps = a / shape.diameter();
    if 2.0 * eps * shape.bounding_radius() >= cell_size.min() {
        return Err(Error::CavityTooLarge);
    }
    let mut cell_centers = Vec::with_capacity(m);
    for i in 0..counts[0] {
        for j in 0..counts[1] {
            for k in 0..counts[2] {
                cell_centers.push(Vec3::new(
                    lo.x + (i as f64 + 0.5) * cell_size.x,
                    lo.y + (j as f64 + 0.5) * cell_size.y,
                    lo.z + (k as f64 + 0.5) * cell_size.z,
                ));
            }
        }
    }
    let cluster = Cluster::new(eps, cell_centers.clone(), shape.clone())?;
    let partition = OmegaPartition { omega: *omega, covered, counts, cell_size, cell_volume: cell_size.product(), cell_centers };
    Ok((cluster, partition))
}

/// `a * max_i sum_{j != i} d_ij^{-2}`; the condition holds when it is below one.
pub fn check_condition(cluster: &Cluster) -> (bool, f64) {
    let m = cluster.len();
    let worst = (0..m)
        .map(|i| (0..m).filter(|&j| j != i).map(|j| cluster.gap(i, j).powi(-2)).sum::<f64>())
        .fold(0.0, f64::max);
    let value = cluster.a() * worst;
    (value < 1.0, value)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floor_counts() {
        let unit = AxisBox::unit();
        let (c, p) = build_cluster(&unit, 0.3, 2.0, &ReferenceShape::UnitSphere).unwrap();
        assert_eq!(c.len(), 3);
        assert!((p.cell_volume - 0.3).abs() < 1e-14);
        let (c, p) = build_cluster(&unit, 1.0 / 64.0, 2.0, &ReferenceShape::UnitSphere).unwrap();
        assert_eq!(c.len(), 64);
        assert_eq!(p.counts, [4, 4, 4]);
        assert!((p.cell_size - Vec3::new(0.25, 0.25, 0.25)).norm() < 1e-14);
        assert!((c.a() - 1.0 / 64.0).abs() < 1e-12 / 64.0);
        assert_eq!(floor_count(2.999), 2);
        assert_eq!(floor_count(1.0 / (1.0 / 27.0)), 27);
    }

    #[test]
    fn separation_parameter_is_validated() {
        let r = build_cluster(&AxisBox::unit(), 0.01, 1.0, &ReferenceShape::UnitSphere);
        assert!(matches!(r, Err(Error::SeparationCondition(_))));
    }

    #[test]
    fn oversized_cavities_are_rejected() {
        // Cells are 0.5 x 1 x 1 but the cavity diameter is 0.5.
        let r = build_cluster(&AxisBox::unit(), 0.5, 2.0, &ReferenceShape::UnitSphere);
        assert!(matches!(r, Err(Error::CavityTooLarge)));
    }

    #[test]
    fn condition_examples() {
        let single = Cluster::new(0.01, vec![Vec3::zeros()], ReferenceShape::UnitSphere).unwrap();
        assert_eq!(check_condition(&single), (true, 0.0));
        // a = 0.01 and gap 0.2: value a / d^2 = 0.25
        let eps = 0.005;
        let pair = Cluster::new(eps, vec![Vec3::zeros(), Vec3::new(0.2 + 2.0 * eps, 0.0, 0.0)], ReferenceShape::UnitSphere).unwrap();
        let (holds, value) = check_condition(&pair);
        assert!(holds);
        assert!((value - 0.25).abs() < 1e-12);
    }

    #[test]
    fn overlapping_and_coincident_cavities_are_rejected() {
        let s = ReferenceShape::UnitSphere;
        assert!(Cluster::new(0.1, vec![Vec3::zeros(), Vec3::zeros()], s.clone()).is_err());
        assert!(Cluster::new(0.1, vec![Vec3::zeros(), Vec3::new(0.15, 0.0, 0.0)], s).is_err());
    }

    #[test]
    fn csv_export() {
        let c = Cluster::new(0.5, vec![Vec3::new(1.0, 2.0, 3.0)], ReferenceShape::UnitSphere).unwrap();
        let mut buf = Vec::new();
        c.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "j,z_x,z_y,z_z,eps\n0,1,2,3,0.5\n");
    }
}
