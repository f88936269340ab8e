use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, ResolvedConfig, SolverConfig, VoxelSolver};
use crate::effective_medium::{eval_w, solve_sigma, solve_v, VoxelGrid};
use crate::error::{Error, Result};
use crate::foldy_lax::{eval_field, solve_alphas};
use crate::heat_bem_reference::{eval_reference_field, solve_boundary_density};
use crate::laplace_bem::{capacitance, Capacitance};
use crate::Vec3;

/// One field value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldSample {
    pub x: Vec3,
    pub t: f64,
    pub u: f64,
}

/// Writes `x,y,z,t,u` rows.
pub fn write_field_csv<W: Write>(samples: &[FieldSample], w: W) -> Result<()> {
    let mut out = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
    out.write_record(["x", "y", "z", "t", "u"])?;
    for s in samples {
        out.write_record(&[s.x.x.to_string(), s.x.y.to_string(), s.x.z.to_string(), s.t.to_string(), s.u.to_string()])?;
    }
    out.flush().map_err(|e| Error::io("<field csv>", e))?;
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    Ok(BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?))
}

fn sample_grid(points: &[Vec3], times: &[f64], mut f: impl FnMut(&Vec3, f64) -> Result<f64>) -> Result<Vec<FieldSample>> {
    let mut out = Vec::with_capacity(points.len() * times.len());
    for x in points {
        for &t in times {
            out.push(FieldSample { x: *x, t, u: f(x, t)? });
        }
    }
    Ok(out)
}

/// Capacitances of all cavities from one solve on the reference shape.
pub fn cluster_capacitances(resolved: &ResolvedConfig) -> Result<(Capacitance, Vec<Capacitance>)> {
    let (c_ref, _) = capacitance(&resolved.reference_mesh)?;
    let caps = vec![c_ref.scaled(resolved.cluster.eps()); resolved.cluster.len()];
    Ok((c_ref, caps))
}

/// Files written by [`run_config`].
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutputs {
    pub files: Vec<PathBuf>,
}

/// Executes the configured pipeline. Relative paths resolve against `base`.
pub fn run_config(config: &ExperimentConfig, base: &Path) -> Result<RunOutputs> {
    let r = config.resolve(base)?;
    let out = &config.output;
    let mut files = Vec::new();
    match &config.solver {
        SolverConfig::Flsim => {
            let (_, caps) = cluster_capacitances(&r)?;
            let history = solve_alphas(&r.cluster, &caps, &r.source, &r.grid)?;
            let samples = sample_grid(&r.points, &r.times, |x, t| eval_field(&r.cluster, &caps, &history, x, t))?;
            let path = base.join(out.field.as_ref().expect("validated"));
            write_field_csv(&samples, create(&path)?)?;
            files.push(path);
            if let Some(a) = &out.alphas {
                let path = base.join(a);
                history.write_csv(create(&path)?)?;
                files.push(path);
            }
        }
        SolverConfig::Refbem => {
            let meshes: Vec<_> = (0..r.cluster.len()).map(|j| r.cluster.cavity_mesh(&r.reference_mesh, j)).collect();
            let density = solve_boundary_density(&meshes, &r.source, &r.grid)?;
            let samples = sample_grid(&r.points, &r.times, |x, t| eval_reference_field(&density, x, t))?;
            let path = base.join(out.field.as_ref().expect("validated"));
            write_field_csv(&samples, create(&path)?)?;
            files.push(path);
        }
        SolverConfig::Effmed(VoxelSolver { voxels, c_bar, omega }) => {
            let (c_ref, _) = capacitance(&r.reference_mesh)?;
            let c_bar = c_bar.unwrap_or(c_ref.value() / r.shape.diameter());
            let domain = omega.or(r.partition.as_ref().map(|p| p.omega)).expect("validated");
            let grid = VoxelGrid::new(domain, *voxels)?;
            let v = solve_v(&grid, c_bar, &r.source, &r.grid)?;
            let samples = sample_grid(&r.points, &r.times, |x, t| eval_w(&v, x, t))?;
            let path = base.join(out.field.as_ref().expect("validated"));
            write_field_csv(&samples, create(&path)?)?;
            files.push(path);
        }
        SolverConfig::Sigma(VoxelSolver { voxels, c_bar, omega }) => {
            let c_bar = match c_bar {
                Some(c) => *c,
                None => capacitance(&r.reference_mesh)?.0.value() / r.shape.diameter(),
            };
            let domain = omega.or(r.partition.as_ref().map(|p| p.omega)).expect("validated");
            let coeffs = solve_sigma(&VoxelGrid::new(domain, *voxels)?, c_bar)?;
            let path = base.join(out.sigma.as_ref().expect("validated"));
            coeffs.write_csv(create(&path)?)?;
            files.push(path);
        }
    }
    Ok(RunOutputs { files })
}
