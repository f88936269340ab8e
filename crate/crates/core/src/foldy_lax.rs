//! Point-interaction approximation: the coupled Volterra system for the
//! interaction densities `alpha_i(t)` and the field they generate.

use std::fmt;
use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Cluster;
use crate::heat_kernel::{eval_phi, phi_r2};
use crate::laplace_bem::Capacitance;
use crate::Vec3;

/// Uniform nodes `t_k = k * T / n_steps`, `k = 0..=n_steps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    horizon: f64,
    n_steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, n_steps: usize) -> Result<Self> {
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(Error::InvalidArgument(format!("horizon must be positive, got {horizon}")));
        }
        if n_steps == 0 {
            return Err(Error::InvalidArgument("n_steps must be at least 1".into()));
        }
        Ok(Self { horizon, n_steps })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.n_steps as f64
    }

    pub fn node(&self, k: usize) -> f64 {
        if k == self.n_steps {
            self.horizon
        } else {
            k as f64 * self.dt()
        }
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.n_steps).map(|k| self.node(k))
    }

    /// Same horizon, `factor` times as many steps.
    pub fn refined(&self, factor: usize) -> Result<Self> {
        Self::new(self.horizon, self.n_steps * factor)
    }

    /// Checks `0 <= t <= T` up to rounding.
    pub(crate) fn check_time(&self, t: f64) -> Result<()> {
        if t > self.horizon * (1.0 + 1e-12) || t.is_nan() {
            return Err(Error::BeyondHorizon { t, horizon: self.horizon });
        }
        if t < 0.0 {
            return Err(Error::InvalidArgument(format!("negative time {t}")));
        }
        Ok(())
    }
}

/// The driving field `f(x, t)`.
#[derive(Clone)]
pub enum SourceSpec {
    /// `f(x, t) = Phi(x, t; z*, 0)`.
    PointSource(Vec3),
    Smooth(Arc<dyn Fn(&Vec3, f64) -> f64 + Send + Sync>),
}

impl fmt::Debug for SourceSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SourceSpec::PointSource(z) => f.debug_tuple("PointSource").field(z).finish(),
            SourceSpec::Smooth(_) => f.write_str("Smooth(..)"),
        }
    }
}

impl SourceSpec {
    pub fn smooth(f: impl Fn(&Vec3, f64) -> f64 + Send + Sync + 'static) -> Self {
        SourceSpec::Smooth(Arc::new(f))
    }

    pub fn eval(&self, x: &Vec3, t: f64) -> f64 {
        match self {
            SourceSpec::PointSource(z) => eval_phi(x, t, z, 0.0),
            SourceSpec::Smooth(f) => f(x, t),
        }
    }

    pub(crate) fn eval_checked(&self, x: &Vec3, t: f64) -> Result<f64> {
        let v = self.eval(x, t);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::SourceEvaluation(format!("f({:?}, {t}) = {v}", x.as_slice())))
        }
    }

    pub fn point(&self) -> Option<Vec3> {
        match self {
            SourceSpec::PointSource(z) => Some(*z),
            SourceSpec::Smooth(_) => None,
        }
    }
}

/// `alpha_i(t_k)` for every cavity and node.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityHistory {
    pub grid: TimeGrid,
    /// `alphas[i][k]`.
    pub alphas: Vec<Vec<f64>>,
}

impl DensityHistory {
    pub fn cavity_count(&self) -> usize {
        self.alphas.len()
    }

    /// Piecewise-linear interpolant of `alpha_i` at `t`.
    pub fn alpha_at(&self, i: usize, t: f64) -> f64 {
        let dt = self.grid.dt();
        let n = self.grid.n_steps();
        let s = (t / dt).clamp(0.0, n as f64);
        let k = (s.floor() as usize).min(n.saturating_sub(1));
        let theta = s - k as f64;
        let row = &self.alphas[i];
        if theta == 0.0 {
            row[k]
        } else {
            (1.0 - theta) * row[k] + theta * row[k + 1]
        }
    }

    /// Writes `i,t_k,alpha` rows.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
        out.write_record(["i", "t_k", "alpha"])?;
        for (i, row) in self.alphas.iter().enumerate() {
            for (k, a) in row.iter().enumerate() {
                out.write_record(&[i.to_string(), self.grid.node(k).to_string(), a.to_string()])?;
            }
        }
        out.flush().map_err(|e| Error::io("<alphas csv>", e))?;
        Ok(())
    }
}

/// Outcome of the invertibility test for the point-interaction system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Solvability {
    pub holds: bool,
    /// `max_j C_j * max_i sum_{j != i} |z_i - z_j|^{-2}`.
    pub value: f64,
    /// `1 / (1 - value)`, infinite when the test fails.
    pub stability_factor: f64,
}

pub fn check_solvability(cluster: &Cluster, caps: &[Capacitance]) -> Solvability {
    let c_max = caps.iter().map(|c| c.value()).fold(0.0, f64::max);
    let z = cluster.centers();
    let worst = (0..z.len())
        .map(|i| (0..z.len()).filter(|&j| j != i).map(|j| (z[i] - z[j]).norm_squared().recip()).sum::<f64>())
        .fold(0.0, f64::max);
    let value = c_max * worst;
    let holds = value < 1.0;
    Solvability { holds, value, stability_factor: if holds { 1.0 / (1.0 - value) } else { f64::INFINITY } }
}

/// `C_j * Phi(|z_i - z_j|, l * dt)` for every ordered pair and lag `l = 0..=n`.
struct KernelTable {
    m: usize,
    n: usize,
    values: Vec<f64>,
}

impl KernelTable {
    fn new(cluster: &Cluster, caps: &[f64], grid: &TimeGrid) -> Result<Self> {
        let z = cluster.centers();
        let m = z.len();
        let n = grid.n_steps();
        let dt = grid.dt();
        let mut values = vec![0.0; m * m * (n + 1)];
        values.par_chunks_mut(m * (n + 1)).enumerate().try_for_each(|(i, block)| {
            for j in 0..m {
                if j == i {
                    continue;
                }
                let r2 = (z[i] - z[j]).norm_squared();
                if r2 == 0.0 {
                    return Err(Error::SingularInteraction(i, j));
                }
                let row = &mut block[j * (n + 1)..(j + 1) * (n + 1)];
                for (l, v) in row.iter_mut().enumerate().skip(1) {
                    *v = caps[j] * phi_r2(r2, l as f64 * dt);
                }
            }
            Ok(())
        })?;
        Ok(Self { m, n, values })
    }

    fn row(&self, i: usize, j: usize) -> &[f64] {
        let start = (i * self.m + j) * (self.n + 1);
        &self.values[start..start + self.n + 1]
    }
}

fn validate_caps(cluster: &Cluster, caps: &[Capacitance]) -> Result<Vec<f64>> {
    if caps.len() != cluster.len() {
        return Err(Error::InvalidArgument(format!("{} capacitances for {} cavities", caps.len(), cluster.len())));
    }
    caps.iter()
        .map(|c| {
            if c.value() >= 0.0 && c.value().is_finite() {
                Ok(c.value())
            } else {
                Err(Error::InvalidArgument(format!("capacitance must be non-negative, got {}", c.value())))
            }
        })
        .collect()
}

/// Marches the trapezoid-discretized system
/// `alpha_i(t_k) = f_i(t_k) - sum_{j != i} C_j sum_{m < k} w_m Phi(z_i, t_k; z_j, t_m) alpha_j(t_m)`.
///
/// The kernel vanishes at `m = k`, so every step is explicit.
pub fn solve_alphas(cluster: &Cluster, caps: &[Capacitance], source: &SourceSpec, grid: &TimeGrid) -> Result<DensityHistory> {
    let c = validate_caps(cluster, caps)?;
    if let Some(zs) = source.point() {
        if let Some(j) = cluster.cavity_containing(&zs) {
            return Err(Error::SourceEvaluation(format!("point source lies in cavity {j}")));
        }
    }
    let solv = check_solvability(cluster, caps);
    if !solv.holds {
        log::warn!("solvability condition fails (value {:.3}); marching anyway", solv.value);
    }
    let z = cluster.centers();
    let m = z.len();
    let n = grid.n_steps();
    let dt = grid.dt();
    let table = KernelTable::new(cluster, &c, grid)?;

    let mut alphas = vec![vec![0.0; n + 1]; m];
    for (i, row) in alphas.iter_mut().enumerate() {
        row[0] = source.eval_checked(&z[i], 0.0)?;
    }
    let mut next = vec![0.0; m];
    for k in 1..=n {
        let t = grid.node(k);
        let prefix = &alphas;
        next.par_iter_mut().enumerate().try_for_each(|(i, out)| -> Result<()> {
            let mut memory = 0.0;
            for j in 0..m {
                if j == i {
                    continue;
                }
                let kern = table.row(i, j);
                let hist = &prefix[j];
                let mut s = 0.5 * kern[k] * hist[0];
                for mm in 1..k {
                    s += kern[k - mm] * hist[mm];
                }
                memory += s;
            }
            *out = source.eval_checked(&z[i], t)? - dt * memory;
            Ok(())
        })?;
        for (row, v) in alphas.iter_mut().zip(&next) {
            row[k] = *v;
        }
    }
    Ok(DensityHistory { grid: *grid, alphas })
}

/// `sum_i C_i int_0^t Phi(x, t; z_i, tau) alpha_i(tau) d tau` by the
/// trapezoidal rule on nodes `t, t - dt, t - 2 dt, ...`, with `alpha`
/// interpolated linearly between grid nodes.
pub fn eval_field(cluster: &Cluster, caps: &[Capacitance], history: &DensityHistory, x: &Vec3, t: f64) -> Result<f64> {
    let c = validate_caps(cluster, caps)?;
    if history.cavity_count() != cluster.len() {
        return Err(Error::IncompatibleDiscretizations("history and cluster sizes differ".into()));
    }
    if let Some(j) = cluster.cavity_containing(x) {
        return Err(Error::InsideCavity(j));
    }
    history.grid.check_time(t)?;
    let t = t.min(history.grid.horizon());
    if t <= 0.0 {
        return Ok(0.0);
    }
    let dt = history.grid.dt();
    let whole = ((t / dt) * (1.0 + 1e-12)).floor() as usize;
    let rest = (t - whole as f64 * dt).max(0.0);

    let mut total = 0.0;
    for (i, zi) in cluster.centers().iter().enumerate() {
        if c[i] == 0.0 {
            continue;
        }
        let r2 = (x - zi).norm_squared();
        let g = |tau: f64| phi_r2(r2, t - tau) * history.alpha_at(i, tau);
        // g(t) = 0; the node at t - whole*dt also borders the partial interval
        let mut s = 0.0;
        for m in 1..whole {
            s += dt * g(t - m as f64 * dt);
        }
        if whole >= 1 {
            s += 0.5 * (dt + rest) * g((t - whole as f64 * dt).max(0.0));
        }
        if rest > 0.0 {
            s += 0.5 * rest * g(0.0);
        }
        total += c[i] * s;
    }
    Ok(total)
}
