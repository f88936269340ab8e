//! Run configuration, pipelines and convergence studies.

mod config;
mod run;
mod study;

pub use config::{
    ClusterConfig, EllipsoidShape, ExperimentConfig, ExplicitCluster, GeometryConfig, LatticeCluster, MeshShape, OutputConfig,
    PointSourceConfig, ResolvedConfig, ShapeConfig, SmoothSourceConfig, SmoothTerm, SolverConfig, SourceConfig, TimeConfig,
    VoxelSolver,
};
pub use run::{cluster_capacitances, run_config, write_field_csv, FieldSample, RunOutputs};
pub use study::{fit_loglog, rate_study, RateReport, StudyKind};
