//! Space-time boundary-integral solution of the exterior Dirichlet heat
//! problem by marching on in time.
//!
//! The density is piecewise constant on the panels and on the time steps
//! `(t_{k-1}, t_k]`, collocated at panel centroids and at `t_k`. Time
//! integrals of the kernel are exact; the spatial integral of the
//! current-step kernel splits into the analytic `1/r` part minus a smooth
//! remainder.

use faer::linalg::solvers::PartialPivLu;
use faer::prelude::*;
use faer::Mat;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::foldy_lax::{SourceSpec, TimeGrid};
use crate::geometry::TriMesh;
use crate::heat_kernel::{cumulative_kernel, erfc, lag_weight, smooth_remainder};
use crate::laplace_bem::triangle_potential;
use crate::quadrature::TRIANGLE_7;
use crate::Vec3;

/// Largest panel count per cavity accepted by the solver.
pub const MAX_PANELS_PER_CAVITY: usize = 2000;
/// Largest number of time steps accepted by the solver.
pub const MAX_STEPS: usize = 400;
/// Storage budget for the lag matrices, in bytes.
pub const MEMORY_BUDGET: usize = 2_500_000_000;

/// Squared-distance-over-lag beyond which panel weights are dropped.
const NEGLIGIBLE_EXPONENT: f64 = 36.0;
/// Panel pairs closer than this many panel diameters use the singular split.
const NEAR_FACTOR: f64 = 3.0;
const MAX_LEVEL: u32 = 4;

#[derive(Debug, Clone, Copy)]
struct Panel {
    tri: [Vec3; 3],
    centroid: Vec3,
    area: f64,
    diam: f64,
}

fn panels_of(meshes: &[TriMesh]) -> Vec<Panel> {
    meshes
        .iter()
        .flat_map(|m| {
            (0..m.panel_count()).map(move |p| Panel {
                tri: m.panel_vertices(p),
                centroid: m.centroids()[p],
                area: m.areas()[p],
                diam: m.panel_diameter(p),
            })
        })
        .collect()
}

/// Integrates `f(|x - y|)` over the panel, on `4^level` congruent
/// sub-triangles with the degree-5 seven-point rule.
fn panel_quadrature(x: &Vec3, panel: &Panel, level: u32, f: impl Fn(f64) -> f64) -> f64 {
    let n = 1usize << level;
    let [v0, v1, v2] = panel.tri;
    let e1 = (v1 - v0) / n as f64;
    let e2 = (v2 - v0) / n as f64;
    let point = |i: usize, j: usize| v0 + e1 * i as f64 + e2 * j as f64;
    let sub_area = panel.area / (n * n) as f64;
    let rule = |a: Vec3, b: Vec3, c: Vec3| -> f64 {
        TRIANGLE_7.iter().map(|(l, w)| w * f((a * l[0] + b * l[1] + c * l[2] - x).norm())).sum::<f64>()
    };
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..(n - i) {
            total += rule(point(i, j), point(i + 1, j), point(i, j + 1));
            if i + j + 1 < n {
                total += rule(point(i + 1, j), point(i + 1, j + 1), point(i, j + 1));
            }
        }
    }
    total * sub_area
}

/// Subdivision level resolving a function whose logarithmic derivative is
/// about `rate` across a panel of diameter `diam`; `None` means a single
/// centroid evaluation is enough.
fn level_for(diam: f64, rate: f64) -> Option<u32> {
    let q = diam * rate;
    if q < 0.05 {
        None
    } else if q <= 0.4 {
        Some(0)
    } else {
        Some(((q / 0.4).log2().ceil() as u32).min(MAX_LEVEL))
    }
}

/// `int_panel int_{t - u_hi}^{t - u_lo} Phi(x, t; y, tau) dtau ds(y)`.
fn panel_weight(x: &Vec3, panel: &Panel, u_lo: f64, u_hi: f64) -> f64 {
    if u_hi <= 0.0 || u_hi <= u_lo {
        return 0.0;
    }
    let rc = (x - panel.centroid).norm();
    let gap = (rc - panel.diam).max(0.0);
    if gap * gap > NEGLIGIBLE_EXPONENT * 4.0 * u_hi {
        return 0.0;
    }
    if u_lo <= 0.0 {
        if rc < NEAR_FACTOR * panel.diam {
            let laplace = triangle_potential(x, &panel.tri) / (4.0 * std::f64::consts::PI);
            let level = level_for(panel.diam, 1.0 / u_hi.sqrt()).unwrap_or(0);
            return laplace - panel_quadrature(x, panel, level, |r| smooth_remainder(r, u_hi));
        }
        let rate = 1.0 / gap.max(0.5 * rc) + rc / (2.0 * u_hi);
        return match level_for(panel.diam, rate) {
            None => panel.area * cumulative_kernel(rc, u_hi),
            Some(level) => panel_quadrature(x, panel, level, |r| cumulative_kernel(r, u_hi)),
        };
    }
    let rate = 1.0 / u_lo.sqrt() + rc / (2.0 * u_lo);
    match level_for(panel.diam, rate) {
        None => panel.area * lag_weight(rc, u_lo, u_hi),
        Some(level) => panel_quadrature(x, panel, level, |r| lag_weight(r, u_lo, u_hi)),
    }
}

/// Piecewise-constant space-time density on the cavity boundaries.
#[derive(Debug, Clone)]
pub struct SpaceTimeDensity {
    meshes: Vec<TriMesh>,
    grid: TimeGrid,
    /// `values[k][p]`, global panel index `p`; row 0 is identically zero.
    values: Vec<Vec<f64>>,
    offsets: Vec<usize>,
}

impl SpaceTimeDensity {
    /// Wraps given values `values[k][p]` for `k = 0..=n_steps`.
    pub fn new(meshes: Vec<TriMesh>, grid: TimeGrid, values: Vec<Vec<f64>>) -> Result<Self> {
        let offsets = offsets_of(&meshes);
        let total = *offsets.last().unwrap_or(&0);
        if values.len() != grid.n_steps() + 1 || values.iter().any(|row| row.len() != total) {
            return Err(Error::IncompatibleDiscretizations(format!(
                "expected {} x {} density values",
                grid.n_steps() + 1,
                total
            )));
        }
        if values.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite density value".into()));
        }
        Ok(Self { meshes, grid, values, offsets })
    }

    pub fn meshes(&self) -> &[TriMesh] {
        &self.meshes
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn panel_count(&self) -> usize {
        *self.offsets.last().unwrap_or(&0)
    }

    /// `sigma(y_p, t)` on step `k`, global panel index.
    pub fn value(&self, p: usize, k: usize) -> f64 {
        self.values[k][p]
    }

    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }

    /// Total charge `int_{dD_j} sigma(y, t_k) ds(y)`.
    pub fn charge(&self, j: usize, k: usize) -> f64 {
        let start = self.offsets[j];
        self.meshes[j].areas().iter().enumerate().map(|(p, a)| a * self.values[k][start + p]).sum()
    }

    /// Global index range of the panels of cavity `j`.
    pub fn panel_range(&self, j: usize) -> std::ops::Range<usize> {
        self.offsets[j]..self.offsets[j + 1]
    }
}

fn offsets_of(meshes: &[TriMesh]) -> Vec<usize> {
    let mut offsets = vec![0];
    for m in meshes {
        offsets.push(offsets.last().unwrap() + m.panel_count());
    }
    offsets
}

/// Solves `sum_j S_{dD_j}[sigma_j](x, t) = f(x, t)` on all boundaries.
pub fn solve_boundary_density(meshes: &[TriMesh], source: &SourceSpec, grid: &TimeGrid) -> Result<SpaceTimeDensity> {
    if meshes.is_empty() {
        return Err(Error::InvalidArgument("no cavity meshes".into()));
    }
    if let Some(big) = meshes.iter().find(|m| m.panel_count() > MAX_PANELS_PER_CAVITY) {
        return Err(Error::OracleTooLarge(format!("{} panels per cavity (limit {MAX_PANELS_PER_CAVITY})", big.panel_count())));
    }
    if grid.n_steps() > MAX_STEPS {
        return Err(Error::OracleTooLarge(format!("{} steps (limit {MAX_STEPS})", grid.n_steps())));
    }
    for m in meshes {
        m.check_closed()?;
    }
    let panels = panels_of(meshes);
    let np = panels.len();
    let n = grid.n_steps();
    let bytes = np * np * n * std::mem::size_of::<f64>();
    if bytes > MEMORY_BUDGET {
        return Err(Error::OracleTooLarge(format!("lag matrices need {bytes} bytes")));
    }
    let dt = grid.dt();

    // lags[l][p * np + q]
    let lags: Vec<Vec<f64>> = (0..n)
        .map(|l| {
            let (u_lo, u_hi) = (l as f64 * dt, (l + 1) as f64 * dt);
            let mut block = vec![0.0; np * np];
            block.par_chunks_mut(np).enumerate().for_each(|(p, row)| {
                let x = panels[p].centroid;
                for (q, w) in row.iter_mut().enumerate() {
                    *w = panel_weight(&x, &panels[q], u_lo, u_hi);
                }
            });
            block
        })
        .collect();

    let current = Mat::from_fn(np, np, |p, q| lags[0][p * np + q]);
    let lu = factor_current_block(&current)?;

    let mut values = vec![vec![0.0; np]];
    for k in 1..=n {
        let t = grid.node(k);
        let mut rhs = Mat::<f64>::zeros(np, 1);
        let rhs_vals: Vec<f64> = (0..np)
            .into_par_iter()
            .map(|p| -> Result<f64> {
                let mut v = source.eval_checked(&panels[p].centroid, t)?;
                for l in 1..k {
                    let row = &lags[l][p * np..(p + 1) * np];
                    let past = &values[k - l];
                    v -= row.iter().zip(past).map(|(a, b)| a * b).sum::<f64>();
                }
                Ok(v)
            })
            .collect::<Result<_>>()?;
        for (p, v) in rhs_vals.iter().enumerate() {
            rhs[(p, 0)] = *v;
        }
        let sol = lu.solve(&rhs);
        let step: Vec<f64> = (0..np).map(|p| sol[(p, 0)]).collect();
        if step.iter().any(|v| !v.is_finite()) {
            return Err(Error::TimeStepTooLarge);
        }
        values.push(step);
    }
    SpaceTimeDensity::new(meshes.to_vec(), *grid, values)
}

fn factor_current_block(block: &Mat<f64>) -> Result<PartialPivLu<f64>> {
    let n = block.nrows();
    let lu = block.partial_piv_lu();
    let ones = Mat::<f64>::from_fn(n, 1, |_, _| 1.0);
    let x = lu.solve(&ones);
    let residual = (block * &x - &ones).norm_max();
    let growth = x.norm_max() * block.norm_max();
    if !residual.is_finite() || residual > 1e-8 || !(growth < 1e12) {
        return Err(Error::TimeStepTooLarge);
    }
    Ok(lu)
}

/// `sum_j int_0^t int_{dD_j} Phi(x, t; y, tau) sigma_j(y, tau) ds dtau`, with
/// the same exact time weights and panel rules as the solver.
///
/// Points on the discrete boundary are accepted; points strictly inside a
/// cavity are rejected.
pub fn eval_reference_field(density: &SpaceTimeDensity, x: &Vec3, t: f64) -> Result<f64> {
    for (j, m) in density.meshes.iter().enumerate() {
        if m.winding_number(x) > 0.75 {
            return Err(Error::InsideCavity(j));
        }
    }
    let grid = &density.grid;
    grid.check_time(t)?;
    let t = t.min(grid.horizon());
    if t <= 0.0 {
        return Ok(0.0);
    }
    let panels = panels_of(&density.meshes);
    let dt = grid.dt();
    let total = (1..=grid.n_steps())
        .into_par_iter()
        .map(|k| {
            let start = (k - 1) as f64 * dt;
            if start >= t {
                return 0.0;
            }
            let u_hi = t - start;
            let u_lo = (t - grid.node(k)).max(0.0);
            let row = &density.values[k];
            panels.iter().zip(row).map(|(panel, s)| if *s == 0.0 { 0.0 } else { s * panel_weight(x, panel, u_lo, u_hi) }).sum::<f64>()
        })
        .collect::<Vec<f64>>()
        .iter()
        .sum();
    Ok(total)
}

/// The harmonic-potential density
/// `phi(x, y_p, t) = int_0^t |x - y| / (2 sqrt(pi) (t - tau)^{3/2}) exp(-|x - y|^2 / (4 (t - tau))) sigma(y_p, tau) dtau`
/// at distance `r = |x - y_p|`; tends to `sigma(y_p, t)` as `r -> 0`.
pub fn harmonic_density(density: &SpaceTimeDensity, p: usize, r: f64, t: f64) -> Result<f64> {
    if !(r > 0.0) {
        return Err(Error::DegenerateDistance);
    }
    let grid = &density.grid;
    grid.check_time(t)?;
    let dt = grid.dt();
    let mut total = 0.0;
    for k in 1..=grid.n_steps() {
        let start = (k - 1) as f64 * dt;
        if start >= t {
            break;
        }
        let u_hi = t - start;
        let u_lo = (t - grid.node(k)).max(0.0);
        let e_lo = if u_lo > 0.0 { erfc(r / (2.0 * u_lo.sqrt())) } else { 0.0 };
        total += density.values[k][p] * (erfc(r / (2.0 * u_hi.sqrt())) - e_lo);
    }
    Ok(total)
}

/// Field of point charges `q_k` held at `z` on the steps `(t_{k-1}, t_k]`:
/// `sum_k q_k int_{step k} Phi(x, t; z, tau) dtau`.
pub fn point_charge_field(z: &Vec3, charges: &[f64], grid: &TimeGrid, x: &Vec3, t: f64) -> Result<f64> {
    if charges.len() != grid.n_steps() + 1 {
        return Err(Error::IncompatibleDiscretizations("charge history length".into()));
    }
    grid.check_time(t)?;
    let r = (x - z).norm();
    if !(r > 0.0) {
        return Err(Error::DegenerateDistance);
    }
    let dt = grid.dt();
    let mut total = 0.0;
    for k in 1..=grid.n_steps() {
        let start = (k - 1) as f64 * dt;
        if start >= t {
            break;
        }
        total += charges[k] * lag_weight(r, (t - grid.node(k)).max(0.0), t - start);
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{triangulate, ReferenceShape};
    use crate::quadrature::integrate_adaptive;

    fn unit_panel() -> Panel {
        let tri = [Vec3::new(0.0, 0.0, 0.0), Vec3::new(0.1, 0.0, 0.0), Vec3::new(0.03, 0.09, 0.0)];
        let area = 0.5 * (tri[1] - tri[0]).cross(&(tri[2] - tri[0])).norm();
        let diam = (tri[1] - tri[0]).norm().max((tri[2] - tri[0]).norm()).max((tri[2] - tri[1]).norm());
        Panel { tri, centroid: (tri[0] + tri[1] + tri[2]) / 3.0, area, diam }
    }

    /// Polar quadrature about the in-plane projection of `x`, which handles
    /// the `1/r` singularity exactly.
    fn panel_oracle(x: &Vec3, panel: &Panel, f: impl Fn(f64) -> f64) -> f64 {
        let [v0, v1, v2] = panel.tri;
        let n = (v1 - v0).cross(&(v2 - v0)).normalize();
        let h = (x - v0).dot(&n);
        let x0 = x - n * h;
        let mut total = 0.0;
        for (a, b) in [(v0, v1), (v1, v2), (v2, v0)] {
            let jac = (a - x0).cross(&(b - a)).dot(&n);
            if jac == 0.0 {
                continue;
            }
            // y = x0 + s (a - x0 + v (b - a)), ds = s |jac| dv ds
            let inner = |v: f64| {
                let dir = (a - x0) + (b - a) * v;
                integrate_adaptive(|s| s * f((dir * s).norm_squared().sqrt().hypot(h)), 0.0, 1.0, 1e-16, 1e-12) * jac
            };
            total += integrate_adaptive(inner, 0.0, 1.0, 1e-15, 1e-11);
        }
        total
    }

    #[test]
    fn current_step_self_weight() {
        let panel = unit_panel();
        for u in [1e-4, 1e-3, 1e-2] {
            let w = panel_weight(&panel.centroid, &panel, 0.0, u);
            let oracle = panel_oracle(&panel.centroid, &panel, |r| cumulative_kernel(r, u));
            assert!((w - oracle).abs() < 1e-6 * oracle, "u={u}: {w} vs {oracle}");
        }
    }

    #[test]
    fn neighbour_and_lagged_weights() {
        let panel = unit_panel();
        let x = panel.centroid + Vec3::new(0.12, 0.05, 0.02);
        for (lo, hi) in [(0.0, 1e-3), (1e-3, 2e-3), (5e-4, 1e-3), (0.01, 0.011)] {
            let w = panel_weight(&x, &panel, lo, hi);
            let oracle = panel_oracle(&x, &panel, |r| lag_weight(r, lo, hi));
            assert!((w - oracle).abs() < 1e-5 * oracle.abs() + 1e-14, "[{lo},{hi}]: {w} vs {oracle}");
        }
    }

    #[test]
    fn zero_source_gives_zero_density() {
        let m = triangulate(&ReferenceShape::UnitSphere, 1).unwrap().transformed(0.1, &Vec3::zeros());
        let grid = TimeGrid::new(0.5, 10).unwrap();
        let d = solve_boundary_density(&[m], &SourceSpec::smooth(|_, _| 0.0), &grid).unwrap();
        assert!(d.values().iter().flatten().all(|&v| v == 0.0));
        assert_eq!(eval_reference_field(&d, &Vec3::new(1.0, 0.0, 0.0), 0.5).unwrap(), 0.0);
    }

    #[test]
    fn size_guards() {
        let m = triangulate(&ReferenceShape::UnitSphere, 1).unwrap();
        let grid = TimeGrid::new(1.0, MAX_STEPS + 1).unwrap();
        assert!(matches!(
            solve_boundary_density(&[m], &SourceSpec::PointSource(Vec3::new(3.0, 0.0, 0.0)), &grid),
            Err(Error::OracleTooLarge(_))
        ));
    }

    #[test]
    fn point_charge_field_matches_time_integral() {
        let grid = TimeGrid::new(1.0, 4).unwrap();
        let charges = vec![0.0, 1.0, 1.0, 1.0, 1.0];
        let z = Vec3::zeros();
        let x = Vec3::new(0.5, 0.0, 0.0);
        let v = point_charge_field(&z, &charges, &grid, &x, 1.0).unwrap();
        assert!((v - cumulative_kernel(0.5, 1.0)).abs() < 1e-15);
    }
}
