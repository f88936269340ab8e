use std::f64::consts::PI;

use rayon::prelude::*;
use rustfft::num_complex::Complex64;

use super::fft::Convolver;
use super::VoxelGrid;
use crate::error::{Error, Result};
use crate::foldy_lax::{DensityHistory, SourceSpec, TimeGrid};
use crate::geometry::OmegaPartition;
use crate::heat_kernel::{erfc, lag_weight};
use crate::quadrature::integrate_adaptive;
use crate::Vec3;

/// Byte budget for stored kernel and density spectra.
const SPECTRA_BUDGET: usize = 2_000_000_000;
const CG_MAX_ITER: usize = 500;
const CG_TOL: f64 = 1e-15;

/// `v(z_c, t)` piecewise constant on the steps `(t_{k-1}, t_k]`.
#[derive(Debug, Clone)]
pub struct VolumeDensityHistory {
    pub voxels: VoxelGrid,
    pub grid: TimeGrid,
    pub c_bar: f64,
    /// `values[k][c]`; zero outside the mask.
    pub values: Vec<Vec<f64>>,
}

impl VolumeDensityHistory {
    pub fn value(&self, c: usize, k: usize) -> f64 {
        self.values[k][c]
    }
}

/// `int_{ball} int_{u_lo}^{u_hi} Phi(|y|, s) ds dy` over the ball of the
/// given volume centered at the origin.
pub fn self_cell_weight(volume: f64, u_lo: f64, u_hi: f64) -> f64 {
    if u_hi <= u_lo || u_hi <= 0.0 {
        return 0.0;
    }
    let rho = (3.0 * volume / (4.0 * PI)).cbrt();
    // 4 pi r^2 * [erfc(r / 2 sqrt(u_hi)) - erfc(r / 2 sqrt(u_lo))] / (4 pi r)
    let f = |r: f64| {
        let hi = erfc(r / (2.0 * u_hi.sqrt()));
        let lo = if u_lo > 0.0 { erfc(r / (2.0 * u_lo.sqrt())) } else { 0.0 };
        r * (hi - lo)
    };
    integrate_adaptive(f, 0.0, rho, 1e-14 * rho * rho, 1e-12)
}

fn cell_kernel(voxels: &VoxelGrid, u_lo: f64, u_hi: f64) -> impl Fn([i64; 3]) -> f64 + '_ {
    let h = voxels.spacing();
    let vol = voxels.cell_volume();
    let self_w = self_cell_weight(vol, u_lo, u_hi);
    move |d: [i64; 3]| {
        if d == [0, 0, 0] {
            self_w
        } else {
            let r = Vec3::new(d[0] as f64 * h.x, d[1] as f64 * h.y, d[2] as f64 * h.z).norm();
            vol * lag_weight(r, u_lo, u_hi)
        }
    }
}

/// Spectra of the per-lag cell kernels `K^l`, `l = 0..n_steps`.
struct LagKernels {
    conv: Convolver,
    spectra: Vec<Vec<f64>>,
}

impl LagKernels {
    fn new(voxels: &VoxelGrid, grid: &TimeGrid) -> Result<Self> {
        let conv = Convolver::new(voxels.counts());
        let n = grid.n_steps();
        let bytes = n * conv.padded_len() * 24;
        if bytes > SPECTRA_BUDGET {
            return Err(Error::InvalidArgument(format!("volume solve needs {bytes} bytes of spectra")));
        }
        let dt = grid.dt();
        let spectra = (0..n)
            .into_par_iter()
            .map(|l| conv.kernel_spectrum(cell_kernel(voxels, l as f64 * dt, (l + 1) as f64 * dt)))
            .collect();
        Ok(Self { conv, spectra })
    }

    fn apply(&self, lag: usize, field: &[f64], mask: &[bool]) -> Vec<f64> {
        let mut out = self.conv.convolve(&self.spectra[lag], field);
        for (o, &m) in out.iter_mut().zip(mask) {
            if !m {
                *o = 0.0;
            }
        }
        out
    }
}

fn check_inputs(voxels: &VoxelGrid, c_bar: f64, source: &SourceSpec) -> Result<()> {
    if !(c_bar >= 0.0) || !c_bar.is_finite() {
        return Err(Error::InvalidArgument(format!("c_bar must be non-negative, got {c_bar}")));
    }
    if let Some(z) = source.point() {
        if voxels.locate(&z).is_some_and(|c| voxels.is_active(c)) {
            return Err(Error::SourceInsideDomain);
        }
    }
    Ok(())
}

/// Solves `(I + c_bar A0) x = b` on the masked cells by conjugate gradients.
fn solve_current_step(kernels: &LagKernels, mask: &[bool], c_bar: f64, rhs: Vec<f64>) -> Result<Vec<f64>> {
    if c_bar == 0.0 {
        return Ok(rhs);
    }
    let apply = |x: &[f64]| -> Vec<f64> {
        let kx = kernels.apply(0, x, mask);
        x.iter().zip(&kx).map(|(a, b)| a + c_bar * b).collect()
    };
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let bnorm = dot(&rhs, &rhs).sqrt();
    if bnorm == 0.0 {
        return Ok(rhs);
    }
    let mut x = vec![0.0; rhs.len()];
    let mut r = rhs.clone();
    let mut p = r.clone();
    let mut rr = dot(&r, &r);
    for _ in 0..CG_MAX_ITER {
        if rr.sqrt() <= CG_TOL * bnorm {
            return Ok(x);
        }
        let ap = apply(&p);
        let alpha = rr / dot(&p, &ap);
        for i in 0..x.len() {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rr_new = dot(&r, &r);
        let beta = rr_new / rr;
        rr = rr_new;
        for i in 0..p.len() {
            p[i] = r[i] + beta * p[i];
        }
    }
    // Rounding floor reached; accept if the true residual is small.
    let res = apply(&x).iter().zip(&rhs).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    if res <= 1e-13 * bnorm.max(1.0) {
        Ok(x)
    } else {
        Err(Error::EllipticSolveFailed(CG_MAX_ITER))
    }
}

/// Marches `v + c_bar int_0^t int_Omega Phi v = f` on the voxel grid.
///
/// The density is piecewise constant on each step; lag weights are exact in
/// time and use cell-center distances in space, with a volume-equivalent
/// ball for the self cell. The current-step coupling is solved implicitly.
pub fn solve_v(voxels: &VoxelGrid, c_bar: f64, source: &SourceSpec, grid: &TimeGrid) -> Result<VolumeDensityHistory> {
    check_inputs(voxels, c_bar, source)?;
    let mask = voxels.mask();
    let cells = voxels.cell_count();
    let centers: Vec<Vec3> = (0..cells).map(|c| voxels.center(c)).collect();
    let forcing = |t: f64| -> Result<Vec<f64>> {
        centers
            .par_iter()
            .zip(mask)
            .map(|(x, &m)| if m { source.eval_checked(x, t) } else { Ok(0.0) })
            .collect()
    };
    let n = grid.n_steps();
    let mut values = vec![forcing(0.0)?];
    if c_bar == 0.0 {
        for k in 1..=n {
            values.push(forcing(grid.node(k))?);
        }
        return Ok(VolumeDensityHistory { voxels: voxels.clone(), grid: *grid, c_bar, values });
    }

    let kernels = LagKernels::new(voxels, grid)?;
    let padded = kernels.conv.padded_len();
    let mut spectra: Vec<Vec<Complex64>> = vec![Vec::new()];
    for k in 1..=n {
        let mut hist_hat = vec![Complex64::default(); padded];
        hist_hat.par_chunks_mut(4096).enumerate().for_each(|(chunk, out)| {
            let base = chunk * 4096;
            for l in 1..k {
                let kern = &kernels.spectra[l][base..base + out.len()];
                let past = &spectra[k - l][base..base + out.len()];
                for ((o, a), b) in out.iter_mut().zip(kern).zip(past) {
                    *o += *b * *a;
                }
            }
        });
        let history = kernels.conv.to_field(hist_hat);
        let f = forcing(grid.node(k))?;
        let rhs: Vec<f64> = f.iter().zip(&history).zip(mask).map(|((a, b), &m)| if m { a - c_bar * b } else { 0.0 }).collect();
        let v = solve_current_step(&kernels, mask, c_bar, rhs)?;
        spectra.push(kernels.conv.field_spectrum(&v));
        values.push(v);
    }
    Ok(VolumeDensityHistory { voxels: voxels.clone(), grid: *grid, c_bar, values })
}

/// The discrete volume operator without the `c_bar` factor:
/// `(A w)(z_c, t_k) = sum_{k' <= k} sum_{c'} K^{k - k'}_{c c'} w(z_{c'}, t_{k'})`.
pub fn apply_volume_operator(voxels: &VoxelGrid, grid: &TimeGrid, w: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let n = grid.n_steps();
    let cells = voxels.cell_count();
    if w.len() != n + 1 || w.iter().any(|row| row.len() != cells) {
        return Err(Error::IncompatibleDiscretizations("operand shape".into()));
    }
    let kernels = LagKernels::new(voxels, grid)?;
    let mask = voxels.mask();
    let spectra: Vec<Vec<Complex64>> = w.iter().map(|row| kernels.conv.field_spectrum(row)).collect();
    let padded = kernels.conv.padded_len();
    let mut out = vec![vec![0.0; cells]];
    for k in 1..=n {
        let mut acc = vec![Complex64::default(); padded];
        for l in 0..k {
            for ((o, a), b) in acc.iter_mut().zip(&kernels.spectra[l]).zip(&spectra[k - l]) {
                *o += *b * *a;
            }
        }
        let mut row = kernels.conv.to_field(acc);
        for (v, &m) in row.iter_mut().zip(mask) {
            if !m {
                *v = 0.0;
            }
        }
        out.push(row);
    }
    Ok(out)
}

/// `W(x, t) = c_bar int_0^t int_Omega Phi(x, t; z, tau) v(z, tau) dz dtau`
/// with the solver's cell and time weights.
///
/// `x` must lie outside the domain or at an active cell center.
pub fn eval_w(history: &VolumeDensityHistory, x: &Vec3, t: f64) -> Result<f64> {
    let voxels = &history.voxels;
    let grid = &history.grid;
    grid.check_time(t)?;
    let own = match voxels.locate(x) {
        Some(c) if voxels.is_active(c) => {
            let h = voxels.spacing();
            let off = x - voxels.center(c);
            if (0..3).any(|a| off[a].abs() > 1e-9 * h[a]) {
                return Err(Error::InvalidArgument("W is evaluated outside the domain or at cell centers".into()));
            }
            Some(c)
        }
        _ => None,
    };
    let t = t.min(grid.horizon());
    if t <= 0.0 || history.c_bar == 0.0 {
        return Ok(0.0);
    }
    let vol = voxels.cell_volume();
    let dt = grid.dt();
    let cells = voxels.cell_count();
    let mut total = 0.0;
    for k in 1..=grid.n_steps() {
        let start = (k - 1) as f64 * dt;
        if start >= t {
            break;
        }
        let (u_lo, u_hi) = ((t - grid.node(k)).max(0.0), t - start);
        let row = &history.values[k];
        let sum: f64 = (0..cells)
            .into_par_iter()
            .map(|c| {
                let v = row[c];
                if v == 0.0 {
                    0.0
                } else if Some(c) == own {
                    v * self_cell_weight(vol, u_lo, u_hi)
                } else {
                    v * vol * lag_weight((x - voxels.center(c)).norm(), u_lo, u_hi)
                }
            })
            .collect::<Vec<f64>>()
            .iter()
            .sum();
        total += sum;
    }
    Ok(history.c_bar * total)
}

/// `sum_j ||alpha_j - v(z_j, .)||^2_{L^2(0, T)}` by the trapezoidal rule,
/// `z_j` the partition cell centers.
pub fn compare_alpha_v(history: &DensityHistory, v: &VolumeDensityHistory, partition: &OmegaPartition) -> Result<f64> {
    if history.grid != v.grid {
        return Err(Error::IncompatibleDiscretizations("time grids differ".into()));
    }
    if history.cavity_count() != partition.cell_count() {
        return Err(Error::IncompatibleDiscretizations(format!(
            "{} densities for {} partition cells",
            history.cavity_count(),
            partition.cell_count()
        )));
    }
    let h = v.voxels.spacing();
    let dt = v.grid.dt();
    let n = v.grid.n_steps();
    let mut total = 0.0;
    for (j, z) in partition.cell_centers.iter().enumerate() {
        let c = v
            .voxels
            .locate(z)
            .filter(|&c| {
                let off = v.voxels.center(c) - z;
                (0..3).all(|a| off[a].abs() <= 1e-9 * h[a])
            })
            .ok_or_else(|| Error::IncompatibleDiscretizations(format!("center {j} is not a voxel center")))?;
        let sq: Vec<f64> = (0..=n).map(|k| (history.alphas[j][k] - v.values[k][c]).powi(2)).collect();
        total += dt * (sq[1..n].iter().sum::<f64>() + 0.5 * (sq[0] + sq[n]));
    }
    Ok(total)
}

impl VoxelGrid {
    /// Grid on the covered box of `partition` with `per_cell` (odd) voxels per
    /// partition cell and axis, so that every cavity center is a voxel center.
    pub fn aligned_with(partition: &OmegaPartition, per_cell: usize) -> Result<Self> {
        if per_cell % 2 == 0 {
            return Err(Error::InvalidArgument("voxels per cell must be odd".into()));
        }
        let c = partition.counts;
        VoxelGrid::new(partition.covered, [c[0] * per_cell, c[1] * per_cell, c[2] * per_cell])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::AxisBox;

    #[test]
    fn self_weight_matches_closed_form() {
        // int_0^rho r erfc(r / (2 sqrt u)) dr as rho -> inf is u
        let w = self_cell_weight(1e3, 0.0, 0.01);
        assert!((w - 0.01).abs() < 1e-12);
        let split = self_cell_weight(0.001, 0.0, 0.002) + self_cell_weight(0.001, 0.002, 0.005);
        assert!((split - self_cell_weight(0.001, 0.0, 0.005)).abs() < 1e-13);
    }

    #[test]
    fn zero_coupling_reproduces_source() {
        let vox = VoxelGrid::new(AxisBox::unit(), [4, 4, 4]).unwrap();
        let zs = Vec3::new(2.0, 0.5, 0.5);
        let grid = TimeGrid::new(0.5, 10).unwrap();
        let h = solve_v(&vox, 0.0, &SourceSpec::PointSource(zs), &grid).unwrap();
        for k in 0..=10 {
            for c in 0..64 {
                assert_eq!(h.value(c, k), crate::heat_kernel::eval_phi(&vox.center(c), grid.node(k), &zs, 0.0));
            }
        }
        assert_eq!(eval_w(&h, &Vec3::new(0.5, 4.0, 0.5), 0.5).unwrap(), 0.0);
    }

    #[test]
    fn source_inside_domain_is_rejected() {
        let vox = VoxelGrid::new(AxisBox::unit(), [4, 4, 4]).unwrap();
        let grid = TimeGrid::new(0.5, 10).unwrap();
        let r = solve_v(&vox, 1.0, &SourceSpec::PointSource(Vec3::new(0.5, 0.5, 1.0)), &grid);
        assert!(matches!(r, Err(Error::SourceInsideDomain)));
    }

    #[test]
    fn march_satisfies_discrete_equation() {
        let vox = VoxelGrid::new(AxisBox::unit(), [5, 4, 3]).unwrap();
        let zs = Vec3::new(1.8, 0.5, 0.5);
        let grid = TimeGrid::new(0.5, 12).unwrap();
        let c_bar = 3.0;
        let h = solve_v(&vox, c_bar, &SourceSpec::PointSource(zs), &grid).unwrap();
        let av = apply_volume_operator(&vox, &grid, &h.values).unwrap();
        for k in 0..=12 {
            for c in 0..vox.cell_count() {
                let f = crate::heat_kernel::eval_phi(&vox.center(c), grid.node(k), &zs, 0.0);
                assert!((h.value(c, k) + c_bar * av[k][c] - f).abs() < 1e-12);
            }
        }
        // internal W = f - v on the grid
        let c = vox.index(2, 1, 1);
        let w = eval_w(&h, &vox.center(c), 0.5).unwrap();
        let f = crate::heat_kernel::eval_phi(&vox.center(c), 0.5, &zs, 0.0);
        assert!((w - (f - h.value(c, 12))).abs() < 1e-12);
    }
}
