//! JSON run description.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::foldy_lax::{SourceSpec, TimeGrid};
use crate::geometry::{build_cluster, AxisBox, Cluster, OmegaPartition, ReferenceShape, TriMesh, MAX_REFINEMENT};
use crate::Vec3;

fn default_refinement() -> u32 {
    3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub geometry: GeometryConfig,
    pub source: SourceConfig,
    pub time: TimeConfig,
    pub solver: SolverConfig,
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryConfig {
    pub shape: ShapeConfig,
    #[serde(default = "default_refinement")]
    pub refinement: u32,
    pub cluster: ClusterConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ShapeConfig {
    Sphere,
    Ellipsoid(EllipsoidShape),
    Mesh(MeshShape),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EllipsoidShape {
    pub semi_axes: [f64; 3],
}

/// OFF file, relative to the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshShape {
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ClusterConfig {
    Explicit(ExplicitCluster),
    Lattice(LatticeCluster),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplicitCluster {
    pub eps: f64,
    pub centers: Vec<[f64; 3]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeCluster {
    pub a: f64,
    pub d0: f64,
    pub omega: AxisBox,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SourceConfig {
    Point(PointSourceConfig),
    Smooth(SmoothSourceConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointSourceConfig {
    pub z_star: [f64; 3],
}

/// `f(x, t) = sum amplitude (1 - exp(-rate t)) exp(-|x - center|^2 / width^2)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SmoothSourceConfig {
    pub terms: Vec<SmoothTerm>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SmoothTerm {
    pub amplitude: f64,
    pub center: [f64; 3],
    pub width: f64,
    pub rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    pub horizon: f64,
    pub n_steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SolverConfig {
    Flsim,
    Refbem,
    Effmed(VoxelSolver),
    Sigma(VoxelSolver),
}

/// Voxel grid on the effective domain; `omega` defaults to the lattice box and
/// `c_bar` to the reference capacitance over the reference diameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VoxelSolver {
    pub voxels: [usize; 3],
    #[serde(default)]
    pub c_bar: Option<f64>,
    #[serde(default)]
    pub omega: Option<AxisBox>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default)]
    pub points: Vec<[f64; 3]>,
    #[serde(default)]
    pub times: Vec<f64>,
    #[serde(default)]
    pub field: Option<PathBuf>,
    #[serde(default)]
    pub alphas: Option<PathBuf>,
    #[serde(default)]
    pub sigma: Option<PathBuf>,
}

fn pointer(path: &serde_path_to_error::Path) -> String {
    use serde_path_to_error::Segment;
    let mut out = String::new();
    for seg in path.iter() {
        out.push('/');
        match seg {
            Segment::Seq { index } => out.push_str(&index.to_string()),
            Segment::Map { key } => out.push_str(key),
            Segment::Enum { variant } => out.push_str(variant),
            Segment::Unknown => out.push('?'),
        }
    }
    if out.is_empty() {
        out.push('/');
    }
    out
}

fn located<T: DeserializeOwned>(value: serde_json::Value) -> std::result::Result<T, (String, String)> {
    serde_path_to_error::deserialize(value).map_err(|e| (pointer(e.path()), e.inner().to_string()))
}

/// Tagged unions are buffered before dispatch, which hides the position of
/// errors inside them; decode the variant body again to recover it.
fn refine(root: &serde_json::Value, at: &str) -> Option<(String, String)> {
    let mut body = root.pointer(at)?.as_object()?.clone();
    let kind = body.remove("kind")?;
    let body = serde_json::Value::Object(body);
    let inner = match (at, kind.as_str()?) {
        ("/geometry/shape", "ellipsoid") => located::<EllipsoidShape>(body).err(),
        ("/geometry/shape", "mesh") => located::<MeshShape>(body).err(),
        ("/geometry/cluster", "explicit") => located::<ExplicitCluster>(body).err(),
        ("/geometry/cluster", "lattice") => located::<LatticeCluster>(body).err(),
        ("/source", "point") => located::<PointSourceConfig>(body).err(),
        ("/source", "smooth") => located::<SmoothSourceConfig>(body).err(),
        ("/solver", "effmed" | "sigma") => located::<VoxelSolver>(body).err(),
        _ => return None,
    };
    let (path, message) = inner?;
    let path = if path == "/" { at.to_string() } else { format!("{at}{path}") };
    Some((path, message))
}

fn vec3(v: &[f64; 3]) -> Vec3 {
    Vec3::new(v[0], v[1], v[2])
}

/// Everything a run needs, resolved and validated.
#[derive(Debug, Clone)]
pub struct ResolvedConfig {
    pub shape: ReferenceShape,
    pub reference_mesh: TriMesh,
    pub cluster: Cluster,
    pub partition: Option<OmegaPartition>,
    pub source: SourceSpec,
    pub grid: TimeGrid,
    pub points: Vec<Vec3>,
    pub times: Vec<f64>,
}

impl ExperimentConfig {
    /// Parses JSON, reporting schema violations with JSON-pointer paths.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let at = pointer(e.path());
            let refined = serde_json::from_str(text).ok().and_then(|root| refine(&root, &at));
            match refined {
                Some((path, message)) => Error::config(path, message),
                None => Error::config(at, e.inner().to_string()),
            }
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text)
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Builds the geometry, source and grid and checks every cross-field
    /// constraint, before any solve. Relative paths resolve against `base`.
    pub fn resolve(&self, base: &Path) -> Result<ResolvedConfig> {
        let t = &self.time;
        if !(t.horizon > 0.0) || !t.horizon.is_finite() {
            return Err(Error::config("/time/horizon", format!("must be positive, got {}", t.horizon)));
        }
        if t.n_steps == 0 {
            return Err(Error::config("/time/n_steps", "must be at least 1"));
        }
        let grid = TimeGrid::new(t.horizon, t.n_steps)?;

        let g = &self.geometry;
        if g.refinement > MAX_REFINEMENT {
            return Err(Error::config("/geometry/refinement", format!("at most {MAX_REFINEMENT}")));
        }
        let shape = match &g.shape {
            ShapeConfig::Sphere => ReferenceShape::UnitSphere,
            ShapeConfig::Ellipsoid(EllipsoidShape { semi_axes }) => {
                ReferenceShape::ellipsoid(*semi_axes).map_err(|e| Error::config("/geometry/shape/semi_axes", e.to_string()))?
            }
            ShapeConfig::Mesh(MeshShape { path }) => {
                let full = base.join(path);
                if !full.exists() {
                    return Err(Error::config("/geometry/shape/path", format!("{} does not exist", full.display())));
                }
                let mesh = TriMesh::read_off(&full)?;
                ReferenceShape::imported(mesh).map_err(|e| Error::config("/geometry/shape/path", e.to_string()))?
            }
        };
        let reference_mesh = crate::geometry::triangulate(&shape, g.refinement)?;
        let (cluster, partition) = match &g.cluster {
            ClusterConfig::Explicit(ExplicitCluster { eps, centers }) => {
                let centers = centers.iter().map(vec3).collect();
                let cl = Cluster::new(*eps, centers, shape.clone()).map_err(|e| Error::config("/geometry/cluster", e.to_string()))?;
                (cl, None)
            }
            ClusterConfig::Lattice(LatticeCluster { a, d0, omega }) => {
                let (cl, part) = build_cluster(omega, *a, *d0, &shape).map_err(|e| Error::config("/geometry/cluster", e.to_string()))?;
                (cl, Some(part))
            }
        };

        let source = match &self.source {
            SourceConfig::Point(PointSourceConfig { z_star }) => {
                let z = vec3(z_star);
                if let Some(j) = cluster.cavity_containing(&z) {
                    return Err(Error::config("/source/z_star", format!("point source inside cavity {j}")));
                }
                SourceSpec::PointSource(z)
            }
            SourceConfig::Smooth(SmoothSourceConfig { terms }) => {
                if let Some(i) = terms.iter().position(|s| !(s.width > 0.0)) {
                    return Err(Error::config(format!("/source/terms/{i}/width"), "must be positive"));
                }
                let terms = terms.clone();
                SourceSpec::smooth(move |x, t| {
                    terms
                        .iter()
                        .map(|s| {
                            let r2 = (x - vec3(&s.center)).norm_squared();
                            s.amplitude * (1.0 - (-s.rate * t).exp()) * (-r2 / (s.width * s.width)).exp()
                        })
                        .sum()
                })
            }
        };

        let points: Vec<Vec3> = self.output.points.iter().map(vec3).collect();
        for (i, x) in points.iter().enumerate() {
            if let Some(j) = cluster.cavity_containing(x) {
                return Err(Error::config(format!("/output/points/{i}"), format!("inside cavity {j}")));
            }
        }
        for (i, &s) in self.output.times.iter().enumerate() {
            if !(s >= 0.0 && s <= t.horizon) {
                return Err(Error::config(format!("/output/times/{i}"), format!("{s} outside [0, {}]", t.horizon)));
            }
        }
        match &self.solver {
            SolverConfig::Flsim | SolverConfig::Refbem | SolverConfig::Effmed(_) => {
                if self.output.field.is_none() {
                    return Err(Error::config("/output/field", "required by this solver"));
                }
            }
            SolverConfig::Sigma(_) => {
                if self.output.sigma.is_none() {
                    return Err(Error::config("/output/sigma", "required by this solver"));
                }
            }
        }
        if let SolverConfig::Effmed(VoxelSolver { voxels, c_bar, omega }) | SolverConfig::Sigma(VoxelSolver { voxels, c_bar, omega }) = &self.solver {
            if voxels.iter().any(|&n| n == 0) {
                return Err(Error::config("/solver/voxels", "counts must be positive"));
            }
            if c_bar.is_some_and(|c| !(c >= 0.0)) {
                return Err(Error::config("/solver/c_bar", "must be non-negative"));
            }
            let domain = omega.or(partition.as_ref().map(|p| p.omega));
            let Some(domain) = domain else {
                return Err(Error::config("/solver/omega", "required unless the cluster is a lattice"));
            };
            if let (SolverConfig::Effmed(_), SourceSpec::PointSource(z)) = (&self.solver, &source) {
                if domain.contains_closed(z) {
                    return Err(Error::config("/source/z_star", "source inside effective domain"));
                }
            }
        }
        Ok(ResolvedConfig { shape, reference_mesh, cluster, partition, source, grid, points, times: self.output.times.clone() })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "geometry": {"shape": {"kind": "sphere"}, "refinement": 1,
                     "cluster": {"kind": "explicit", "eps": 0.05, "centers": [[0, 0, 0]]}},
        "source": {"kind": "point", "z_star": [1, 0, 0]},
        "time": {"horizon": 1.0, "n_steps": 20},
        "solver": {"kind": "flsim"},
        "output": {"points": [[0, 2, 0]], "times": [0.5, 1.0], "field": "field.csv"}
    }"#;

    #[test]
    fn minimal_config_parses_and_resolves() {
        let cfg = ExperimentConfig::from_json_str(MINIMAL).unwrap();
        let r = cfg.resolve(Path::new(".")).unwrap();
        assert_eq!(r.cluster.len(), 1);
        assert_eq!(r.grid.n_steps(), 20);
        let again = ExperimentConfig::from_json_str(&cfg.to_json_string().unwrap()).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn schema_errors_carry_pointer_paths() {
        let bad = MINIMAL.replace("\"n_steps\": 20", "\"n_steps\": \"many\"");
        match ExperimentConfig::from_json_str(&bad) {
            Err(Error::Config { path, .. }) => assert_eq!(path, "/time/n_steps"),
            other => panic!("{other:?}"),
        }
        let bad = MINIMAL.replace("[[0, 0, 0]]", "[[0, 0]]");
        match ExperimentConfig::from_json_str(&bad) {
            Err(Error::Config { path, .. }) => assert!(path.starts_with("/geometry/cluster/centers/0"), "{path}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn source_inside_cavity_is_rejected() {
        let cfg = ExperimentConfig::from_json_str(&MINIMAL.replace("[1, 0, 0]", "[0.01, 0, 0]")).unwrap();
        match cfg.resolve(Path::new(".")) {
            Err(Error::Config { path, .. }) => assert_eq!(path, "/source/z_star"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn sample_times_are_checked() {
        let cfg = ExperimentConfig::from_json_str(&MINIMAL.replace("[0.5, 1.0]", "[0.5, 1.5]")).unwrap();
        match cfg.resolve(Path::new(".")) {
            Err(Error::Config { path, .. }) => assert_eq!(path, "/output/times/1"),
            other => panic!("{other:?}"),
        }
    }
}
