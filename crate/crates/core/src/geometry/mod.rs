//! Cavity shapes, surface meshes, cluster construction and admissibility.

mod cluster;
mod mesh;

pub use cluster::{build_cluster, check_condition, AxisBox, Cluster, OmegaPartition};
pub use mesh::{icosahedron, TriMesh};

use crate::error::{Error, Result};
use crate::Vec3;

/// Largest accepted subdivision level.
pub const MAX_REFINEMENT: u32 = 7;

/// Reference domain `B` of a cavity `D = eps B + z`; contains the origin.
#[derive(Debug, Clone, PartialEq)]
pub enum ReferenceShape {
    UnitSphere,
    Ellipsoid { semi_axes: [f64; 3] },
    ImportedMesh(TriMesh),
}

impl ReferenceShape {
    pub fn ellipsoid(semi_axes: [f64; 3]) -> Result<Self> {
        if semi_axes.iter().any(|a| !(*a > 0.0) || !a.is_finite()) {
            return Err(Error::InvalidArgument(format!("ellipsoid semi-axes must be positive, got {semi_axes:?}")));
        }
        Ok(ReferenceShape::Ellipsoid { semi_axes })
    }

    /// Accepts a closed mesh enclosing the origin, re-oriented outward.
    pub fn imported(mesh: TriMesh) -> Result<Self> {
        let mesh = mesh.orient_outward()?;
        if mesh.winding_number(&Vec3::zeros()) < 0.5 {
            return Err(Error::InvalidMesh("reference shape must contain the origin".into()));
        }
        Ok(ReferenceShape::ImportedMesh(mesh))
    }

    pub fn diameter(&self) -> f64 {
        match self {
            ReferenceShape::UnitSphere => 2.0,
            ReferenceShape::Ellipsoid { semi_axes } => 2.0 * semi_axes.iter().cloned().fold(0.0, f64::max),
            ReferenceShape::ImportedMesh(m) => m.diameter(),
        }
    }

    /// Radius of the smallest origin-centred ball containing the shape.
    pub fn bounding_radius(&self) -> f64 {
        match self {
            ReferenceShape::UnitSphere => 1.0,
            ReferenceShape::Ellipsoid { semi_axes } => semi_axes.iter().cloned().fold(0.0, f64::max),
            ReferenceShape::ImportedMesh(m) => m.bounding_radius(&Vec3::zeros()),
        }
    }

    /// Strict interior test in reference coordinates.
    pub fn contains(&self, xi: &Vec3) -> bool {
        const TOL: f64 = 1e-9;
        match self {
            ReferenceShape::UnitSphere => xi.norm_squared() < 1.0 - TOL,
            ReferenceShape::Ellipsoid { semi_axes } => {
                (0..3).map(|k| (xi[k] / semi_axes[k]).powi(2)).sum::<f64>() < 1.0 - TOL
            }
            ReferenceShape::ImportedMesh(m) => m.winding_number(xi) > 0.5,
        }
    }
}

/// Surface triangulation of a reference shape.
///
/// Spheres and ellipsoids start from the icosahedron and are subdivided with
/// new vertices projected onto the exact surface, giving `20 * 4^refinement`
/// panels. Imported meshes are split flat.
pub fn triangulate(shape: &ReferenceShape, refinement: u32) -> Result<TriMesh> {
    if refinement > MAX_REFINEMENT {
        return Err(Error::InvalidArgument(format!("refinement {refinement} exceeds {MAX_REFINEMENT}")));
    }
    match shape {
        ReferenceShape::UnitSphere => {
            let mut m = icosahedron();
            for _ in 0..refinement {
                m = m.subdivide(true)?;
            }
            Ok(m)
        }
        ReferenceShape::Ellipsoid { semi_axes } => {
            let s = triangulate(&ReferenceShape::UnitSphere, refinement)?;
            s.mapped(|v| Vec3::new(v.x * semi_axes[0], v.y * semi_axes[1], v.z * semi_axes[2]))
        }
        ReferenceShape::ImportedMesh(mesh) => {
            let mut m = mesh.clone();
            for _ in 0..refinement {
                m = m.subdivide(false)?;
            }
            m.check_closed()?;
            Ok(m)
        }
    }
}
