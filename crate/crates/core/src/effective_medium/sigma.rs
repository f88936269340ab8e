use std::io::Write;

use rayon::prelude::*;

use super::VoxelGrid;
use crate::error::{Error, Result};

const MAX_ITER: usize = 100_000;
const REL_TOL: f64 = 1e-10;

/// Effective conductivity on the voxel grid.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveCoefficients {
    pub c_bar: f64,
    pub voxels: VoxelGrid,
    /// Per cell; 1 outside the domain.
    pub sigma: Vec<f64>,
    /// `sigma^2` per cell.
    pub gamma: Vec<f64>,
    pub iterations: usize,
}

impl EffectiveCoefficients {
    /// Writes `i,j,k,x,y,z,sigma,gamma` rows, one per cell.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
        out.write_record(["i", "j", "k", "x", "y", "z", "sigma", "gamma"])?;
        for c in 0..self.voxels.cell_count() {
            let [i, j, k] = self.voxels.ijk(c);
            let x = self.voxels.center(c);
            out.write_record(&[
                i.to_string(),
                j.to_string(),
                k.to_string(),
                x.x.to_string(),
                x.y.to_string(),
                x.z.to_string(),
                self.sigma[c].to_string(),
                self.gamma[c].to_string(),
            ])?;
        }
        out.flush().map_err(|e| Error::io("<sigma csv>", e))?;
        Ok(())
    }
}

/// Seven-point operator `-lap_h + c_bar` on the active cells. A neighbour
/// outside the domain is replaced by the Dirichlet value at the boundary
/// crossing, which only changes the diagonal and keeps the matrix symmetric.
struct Stencil<'a> {
    voxels: &'a VoxelGrid,
    inv_h2: [f64; 3],
    diag: Vec<f64>,
}

impl<'a> Stencil<'a> {
    fn new(voxels: &'a VoxelGrid, c_bar: f64) -> Self {
        let h = voxels.spacing();
        let inv_h2 = [1.0 / (h.x * h.x), 1.0 / (h.y * h.y), 1.0 / (h.z * h.z)];
        let diag = (0..voxels.cell_count())
            .map(|c| {
                if !voxels.is_active(c) {
                    return 1.0;
                }
                let walls = voxels.walls(c);
                c_bar + (0..6).map(|d| inv_h2[d / 2] / walls[d]).sum::<f64>()
            })
            .collect();
        Self { voxels, inv_h2, diag }
    }

    fn coupled(&self, c: usize, d: usize) -> Option<usize> {
        self.voxels.neighbour(c, d).filter(|&n| self.voxels.is_active(n) && self.voxels.walls(c)[d] == 1.0)
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        out.par_iter_mut().enumerate().for_each(|(c, o)| {
            if !self.voxels.is_active(c) {
                *o = 0.0;
                return;
            }
            let mut s = self.diag[c] * x[c];
            for d in 0..6 {
                if let Some(n) = self.coupled(c, d) {
                    s -= self.inv_h2[d / 2] * x[n];
                }
            }
            *o = s;
        });
    }

    /// Right-hand side from the boundary value 1.
    fn boundary_rhs(&self) -> Vec<f64> {
        (0..self.voxels.cell_count())
            .map(|c| {
                if !self.voxels.is_active(c) {
                    return 0.0;
                }
                (0..6).filter(|&d| self.coupled(c, d).is_none()).map(|d| self.inv_h2[d / 2] / self.voxels.walls(c)[d]).sum()
            })
            .collect()
    }
}

/// Solves `-lap sigma + c_bar sigma = 0` in the domain with `sigma = 1` on
/// its boundary, by Jacobi-preconditioned conjugate gradients, and returns
/// `sigma` and `gamma = sigma^2`.
pub fn solve_sigma(voxels: &VoxelGrid, c_bar: f64) -> Result<EffectiveCoefficients> {
    if !(c_bar >= 0.0) || !c_bar.is_finite() {
        return Err(Error::InvalidArgument(format!("c_bar must be non-negative, got {c_bar}")));
    }
    let stencil = Stencil::new(voxels, c_bar);
    let n = voxels.cell_count();
    let b = stencil.boundary_rhs();
    // Fixed-size chunks keep the reduction order independent of scheduling.
    let dot = |a: &[f64], b: &[f64]| -> f64 {
        let parts: Vec<f64> = a.par_chunks(4096).zip(b.par_chunks(4096)).map(|(x, y)| x.iter().zip(y).map(|(p, q)| p * q).sum()).collect();
        parts.iter().sum()
    };
    let bnorm = dot(&b, &b).sqrt();

    // Start from sigma = 1, the exact solution for c_bar = 0.
    let mut x: Vec<f64> = (0..n).map(|c| if voxels.is_active(c) { 1.0 } else { 0.0 }).collect();
    let mut ax = vec![0.0; n];
    stencil.apply(&x, &mut ax);
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(b, a)| b - a).collect();
    let precond = |r: &[f64]| -> Vec<f64> { r.iter().zip(&stencil.diag).map(|(r, d)| r / d).collect() };
    let mut z = precond(&r);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut iterations = 0;
    let mut ap = vec![0.0; n];
    while dot(&r, &r).sqrt() > REL_TOL * bnorm {
        if iterations == MAX_ITER {
            return Err(Error::EllipticSolveFailed(MAX_ITER));
        }
        iterations += 1;
        stencil.apply(&p, &mut ap);
        let alpha = rz / dot(&p, &ap);
        x.par_iter_mut().zip(&p).for_each(|(x, p)| *x += alpha * p);
        r.par_iter_mut().zip(&ap).for_each(|(r, a)| *r -= alpha * a);
        z = precond(&r);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        p.par_iter_mut().zip(&z).for_each(|(p, z)| *p = z + beta * *p);
    }
    let sigma: Vec<f64> = x.iter().enumerate().map(|(c, &s)| if voxels.is_active(c) { s } else { 1.0 }).collect();
    let gamma = sigma.iter().map(|s| s * s).collect();
    Ok(EffectiveCoefficients { c_bar, voxels: voxels.clone(), sigma, gamma, iterations })
}
