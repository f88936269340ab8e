use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::effective_medium::{eval_w, solve_v, VoxelGrid};
use crate::error::{Error, Result};
use crate::foldy_lax::{eval_field, solve_alphas, DensityHistory, SourceSpec, TimeGrid};
use crate::geometry::{build_cluster, triangulate, AxisBox, Cluster, ReferenceShape};
use crate::heat_bem_reference::{eval_reference_field, point_charge_field, solve_boundary_density};
use crate::laplace_bem::{capacitance, Capacitance};
use crate::Vec3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StudyKind {
    /// Boundary-element reference vs. the one-term expansion for one sphere; levels are `eps`.
    SingleCavityEps2,
    /// Reference vs. Foldy-Lax for two spheres; levels are `eps`.
    MultiVsOracle,
    /// Foldy-Lax on a lattice vs. the effective medium; levels are `a`.
    HomogenizationA13,
    /// Foldy-Lax self-convergence; levels are time steps.
    TimestepOrder2,
}

impl StudyKind {
    pub const ALL: [StudyKind; 4] =
        [StudyKind::SingleCavityEps2, StudyKind::MultiVsOracle, StudyKind::HomogenizationA13, StudyKind::TimestepOrder2];

    pub fn name(self) -> &'static str {
        match self {
            StudyKind::SingleCavityEps2 => "single_cavity_eps2",
            StudyKind::MultiVsOracle => "multi_vs_oracle",
            StudyKind::HomogenizationA13 => "homogenization_a13",
            StudyKind::TimestepOrder2 => "timestep_order2",
        }
    }

    /// Levels used when none are given.
    pub fn default_levels(self) -> Vec<f64> {
        match self {
            StudyKind::SingleCavityEps2 | StudyKind::MultiVsOracle => vec![0.2, 0.1, 0.05],
            StudyKind::HomogenizationA13 => vec![1.0 / 27.0, 1.0 / 64.0, 1.0 / 125.0],
            StudyKind::TimestepOrder2 => vec![1.0 / 50.0, 1.0 / 100.0, 1.0 / 200.0],
        }
    }
}

impl fmt::Display for StudyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StudyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        StudyKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown study '{s}'")))
    }
}

/// Errors per level and the fitted log-log slope.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub kind: StudyKind,
    pub parameters: Vec<f64>,
    pub errors: Vec<f64>,
    pub slope: f64,
    /// 95% confidence half-width of the slope.
    pub half_width: f64,
}

impl RateReport {
    pub fn from_errors(kind: StudyKind, parameters: Vec<f64>, errors: Vec<f64>) -> Result<Self> {
        let (slope, half_width) = fit_loglog(&parameters, &errors)?;
        Ok(Self { kind, parameters, errors, slope, half_width })
    }

    /// Errors strictly decrease in level order.
    pub fn strictly_decreasing(&self) -> bool {
        self.errors.windows(2).all(|w| w[1] < w[0])
    }

    /// Rows `study,parameter,error,slope,half_width`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
        out.write_record(["study", "parameter", "error", "slope", "half_width"])?;
        for (p, e) in self.parameters.iter().zip(&self.errors) {
            out.write_record(&[
                self.kind.name().to_string(),
                p.to_string(),
                e.to_string(),
                self.slope.to_string(),
                self.half_width.to_string(),
            ])?;
        }
        out.flush().map_err(|e| Error::io("<rate csv>", e))?;
        Ok(())
    }
}

/// Unweighted least-squares slope of `ln y` against `ln x`, with the 95%
/// Student-t half-width.
pub fn fit_loglog(x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    if x.len() != y.len() {
        return Err(Error::InvalidArgument("parameter and error counts differ".into()));
    }
    if x.len() < 3 {
        return Err(Error::InvalidArgument(format!("need at least 3 levels, got {}", x.len())));
    }
    if x.iter().chain(y).any(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(Error::InvalidArgument("log-log fit needs positive finite values".into()));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    if !(sxx > 0.0) {
        return Err(Error::InvalidArgument("levels must not all coincide".into()));
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = lx.iter().zip(&ly).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let dof = n - 2.0;
    let se = (sse / dof / sxx).sqrt();
    let t = StudentsT::new(0.0, 1.0, dof).expect("positive dof").inverse_cdf(0.975);
    Ok((slope, t * se))
}

const HORIZON: f64 = 1.0;
const PROBE_TIMES: [f64; 2] = [0.5 * HORIZON, HORIZON];
const ORACLE_REFINEMENT: u32 = 2;
const ORACLE_STEPS: usize = 200;
const LATTICE_STEPS: usize = 100;
const LATTICE_VOXELS: usize = 32;
const LATTICE_D0: f64 = 2.0;
const PAIR_CAPACITANCE_RADIUS: f64 = 0.01;
const ORDER_REFERENCE_STEPS: usize = 3200;

/// Probe at twice the diameter of the unit box around `center`, along +y.
fn far_probe(center: &Vec3) -> Vec3 {
    center + Vec3::new(0.0, 2.0 * 3f64.sqrt(), 0.0)
}

/// The reference solver against point charges `C_i alpha_i(t_k)` held over
/// each step, so both sides share the time rule.
fn oracle_error(centers: &[Vec3], eps: f64) -> Result<f64> {
    let shape = ReferenceShape::UnitSphere;
    let base = triangulate(&shape, ORACLE_REFINEMENT)?;
    let (c_ref, _) = capacitance(&base)?;
    let grid = TimeGrid::new(HORIZON, ORACLE_STEPS)?;
    let centroid = centers.iter().sum::<Vec3>() / centers.len() as f64;
    let source = SourceSpec::PointSource(centroid + Vec3::new(1.0, 0.0, 0.0));
    let probe = far_probe(&centroid);

    let cluster = Cluster::new(eps, centers.to_vec(), shape)?;
    let caps = vec![c_ref.scaled(eps); centers.len()];
    let history = solve_alphas(&cluster, &caps, &source, &grid)?;
    let meshes: Vec<_> = (0..cluster.len()).map(|j| cluster.cavity_mesh(&base, j)).collect();
    let density = solve_boundary_density(&meshes, &source, &grid)?;

    let mut err: f64 = 0.0;
    for t in PROBE_TIMES {
        let u_ref = eval_reference_field(&density, &probe, t)?;
        let mut u_pts = 0.0;
        for (i, z) in centers.iter().enumerate() {
            let charges: Vec<f64> = history.alphas[i].iter().map(|a| caps[i].value() * a).collect();
            u_pts += point_charge_field(z, &charges, &grid, &probe, t)?;
        }
        err = err.max((u_ref - u_pts).abs());
    }
    Ok(err)
}

struct Homogenization {
    omega: AxisBox,
    c_ref: Capacitance,
    source: SourceSpec,
    probe: Vec3,
    grid: TimeGrid,
    w: [f64; 2],
}

impl Homogenization {
    fn new() -> Result<Self> {
        let shape = ReferenceShape::UnitSphere;
        let (c_ref, _) = capacitance(&triangulate(&shape, 3)?)?;
        let omega = AxisBox::unit();
        let center = omega.center();
        let source = SourceSpec::PointSource(center + Vec3::new(1.5, 0.0, 0.0));
        let probe = far_probe(&center);
        let grid = TimeGrid::new(HORIZON, LATTICE_STEPS)?;
        // cavity diameter a and unit density per cell volume a
        let c_bar = c_ref.value() / shape.diameter();
        let voxels = VoxelGrid::new(omega, [LATTICE_VOXELS; 3])?;
        let v = solve_v(&voxels, c_bar, &source, &grid)?;
        let w = [eval_w(&v, &probe, PROBE_TIMES[0])?, eval_w(&v, &probe, PROBE_TIMES[1])?];
        Ok(Self { omega, c_ref, source, probe, grid, w })
    }

    fn error(&self, a: f64) -> Result<f64> {
        let (cluster, _) = build_cluster(&self.omega, a, LATTICE_D0, &ReferenceShape::UnitSphere)?;
        let caps = vec![self.c_ref.scaled(cluster.eps()); cluster.len()];
        let history = solve_alphas(&cluster, &caps, &self.source, &self.grid)?;
        let mut err: f64 = 0.0;
        for (t, w) in PROBE_TIMES.iter().zip(self.w) {
            err = err.max((eval_field(&cluster, &caps, &history, &self.probe, *t)? - w).abs());
        }
        Ok(err)
    }
}

/// Two cavities of capacitance `4 pi 0.01` half a unit apart, each at unit
/// distance from the source.
fn timestep_pair() -> Result<(Cluster, Vec<Capacitance>, SourceSpec)> {
    let cluster = Cluster::new(
        PAIR_CAPACITANCE_RADIUS,
        vec![Vec3::new(0.25, 0.0, 0.0), Vec3::new(-0.25, 0.0, 0.0)],
        ReferenceShape::UnitSphere,
    )?;
    let caps = vec![Capacitance(4.0 * std::f64::consts::PI * PAIR_CAPACITANCE_RADIUS); 2];
    let source = SourceSpec::PointSource(Vec3::new(0.0, (1.0f64 - 0.0625).sqrt(), 0.0));
    Ok((cluster, caps, source))
}

fn steps_for(dt: f64) -> Result<usize> {
    let n = (HORIZON / dt).round();
    if !(n >= 1.0) || ((n * dt - HORIZON) / HORIZON).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!("time step {dt} does not divide the horizon {HORIZON}")));
    }
    let n = n as usize;
    if ORDER_REFERENCE_STEPS % n != 0 {
        return Err(Error::InvalidArgument(format!("{n} steps do not nest in the {ORDER_REFERENCE_STEPS}-step reference")));
    }
    Ok(n)
}

/// Max nodal deviation of `alpha` from the Richardson extrapolation of the
/// two finest runs.
fn timestep_error(coarse: &DensityHistory, fine: &DensityHistory, finer: &DensityHistory) -> f64 {
    let n = coarse.grid.n_steps();
    let r1 = fine.grid.n_steps() / n;
    let r2 = finer.grid.n_steps() / n;
    let mut err: f64 = 0.0;
    for (i, row) in coarse.alphas.iter().enumerate() {
        for (k, a) in row.iter().enumerate() {
            let rich = (4.0 * finer.alphas[i][k * r2] - fine.alphas[i][k * r1]) / 3.0;
            err = err.max((a - rich).abs());
        }
    }
    err
}

fn at_level<T>(level: f64, r: Result<T>) -> Result<T> {
    r.map_err(|e| Error::StudyLevel { level, source: Box::new(e) })
}

/// Runs the matched solver pair at every level and fits the rate.
///
/// Levels run one after another: each oracle level already uses most of the
/// memory budget.
pub fn rate_study(kind: StudyKind, levels: &[f64]) -> Result<RateReport> {
    if levels.len() < 3 {
        return Err(Error::InvalidArgument(format!("need at least 3 levels, got {}", levels.len())));
    }
    if let Some(bad) = levels.iter().find(|l| !(**l > 0.0) || !l.is_finite()) {
        return Err(Error::InvalidArgument(format!("levels must be positive, got {bad}")));
    }
    let errors = match kind {
        StudyKind::SingleCavityEps2 => {
            levels.iter().map(|&eps| at_level(eps, oracle_error(&[Vec3::zeros()], eps))).collect::<Result<Vec<_>>>()?
        }
        StudyKind::MultiVsOracle => {
            let centers = [Vec3::new(0.0, 0.0, 0.25), Vec3::new(0.0, 0.0, -0.25)];
            levels.iter().map(|&eps| at_level(eps, oracle_error(&centers, eps))).collect::<Result<Vec<_>>>()?
        }
        StudyKind::HomogenizationA13 => {
            let h = Homogenization::new()?;
            levels.iter().map(|&a| at_level(a, h.error(a))).collect::<Result<Vec<_>>>()?
        }
        StudyKind::TimestepOrder2 => {
            let steps = levels.iter().map(|&dt| at_level(dt, steps_for(dt))).collect::<Result<Vec<_>>>()?;
            let (cluster, caps, source) = timestep_pair()?;
            let run = |n: usize| solve_alphas(&cluster, &caps, &source, &TimeGrid::new(HORIZON, n)?);
            let fine = run(ORDER_REFERENCE_STEPS)?;
            let finer = run(2 * ORDER_REFERENCE_STEPS)?;
            levels
                .iter()
                .zip(steps)
                .map(|(&dt, n)| at_level(dt, run(n).map(|h| timestep_error(&h, &fine, &finer))))
                .collect::<Result<Vec<_>>>()?
        }
    };
    RateReport::from_errors(kind, levels.to_vec(), errors)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_power_law_fit() {
        let x = [0.2, 0.1, 0.05, 0.025];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powi(2)).collect();
        let (s, hw) = fit_loglog(&x, &y).unwrap();
        assert!((s - 2.0).abs() < 1e-12);
        assert!(hw < 1e-10);
    }

    #[test]
    fn half_width_uses_student_t() {
        // residuals +d, -2d, +d around slope 1 in ln x = 0, 1, 2
        let d: f64 = 0.01;
        let x = [1.0f64, 1f64.exp(), 2f64.exp()];
        let y = [d.exp(), (1.0 - 2.0 * d).exp(), (2.0 + d).exp()];
        let (s, hw) = fit_loglog(&x, &y).unwrap();
        assert!((s - 1.0).abs() < 1e-12);
        let se = (6.0 * d * d / 1.0 / 2.0f64).sqrt();
        assert!((hw - 12.706204736 * se).abs() < 1e-6 * hw, "{hw}");
    }

    #[test]
    fn too_few_levels_rejected() {
        assert!(fit_loglog(&[0.1, 0.2], &[1.0, 2.0]).is_err());
        assert!(rate_study(StudyKind::SingleCavityEps2, &[0.1, 0.2]).is_err());
    }

    #[test]
    fn kind_names_round_trip() {
        for k in StudyKind::ALL {
            assert_eq!(k.name().parse::<StudyKind>().unwrap(), k);
            assert_eq!(serde_json::to_string(&k).unwrap(), format!("\"{}\"", k.name()));
        }
        assert!("other".parse::<StudyKind>().is_err());
    }

    #[test]
    fn bad_time_step_identifies_level() {
        match rate_study(StudyKind::TimestepOrder2, &[0.02, 0.03, 0.01]) {
            Err(Error::StudyLevel { level, .. }) => assert_eq!(level, 0.03),
            other => panic!("{other:?}"),
        }
    }
}
