//! Newtonian capacitance of a closed surface by centroid collocation.

use std::f64::consts::PI;
use std::io::Write;

use faer::prelude::*;
use faer::Mat;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::TriMesh;
use crate::Vec3;

/// Piecewise-constant surface density, one value per panel.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelDensity {
    pub values: Vec<f64>,
}

impl PanelDensity {
    /// `sum_q values_q * area_q`.
    pub fn total_charge(&self, mesh: &TriMesh) -> f64 {
        self.values.iter().zip(mesh.areas()).map(|(v, a)| v * a).sum()
    }

    /// Rows `panel_id,value,area`.
    pub fn write_csv<W: Write>(&self, mesh: &TriMesh, w: W) -> Result<()> {
        if self.values.len() != mesh.panel_count() {
            return Err(Error::IncompatibleDiscretizations("density and mesh panel counts differ".into()));
        }
        let mut out = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
        out.write_record(["panel_id", "value", "area"])?;
        for (p, (v, a)) in self.values.iter().zip(mesh.areas()).enumerate() {
            out.write_record(&[p.to_string(), v.to_string(), a.to_string()])?;
        }
        out.flush().map_err(|e| Error::io("<density csv>", e))?;
        Ok(())
    }
}

/// Capacitance `C = int sigma ds` of the equilibrium density.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Capacitance(pub f64);

impl Capacitance {
    pub fn value(self) -> f64 {
        self.0
    }

    /// Capacitance of the dilated surface `scale * D`.
    pub fn scaled(self, scale: f64) -> Capacitance {
        Capacitance(self.0 * scale)
    }
}

/// `int_T 1 / |x - y| ds(y)` over the planar triangle `[a, b, c]`, in closed
/// form by decomposition into edge contributions.
///
/// Finite for every `x`, including points on the triangle itself.
pub fn triangle_potential(x: &Vec3, tri: &[Vec3; 3]) -> f64 {
    let [v0, v1, v2] = *tri;
    let cross = (v1 - v0).cross(&(v2 - v0));
    let n = cross.normalize();
    let h = (x - v0).dot(&n);
    let habs = h.abs();
    let rho = x - n * h;
    let scale = (v1 - v0).norm().max((v2 - v0).norm()).max((x - v0).norm());
    let tiny = 1e-14 * scale;

    let mut total = 0.0;
    for (a, b) in [(v0, v1), (v1, v2), (v2, v0)] {
        let edge = b - a;
        let len = edge.norm();
        let l = edge / len;
        let m = l.cross(&n);
        let t0 = (a - rho).dot(&m);
        if t0.abs() <= tiny {
            continue;
        }
        let s_minus = (a - rho).dot(&l);
        let s_plus = (b - rho).dot(&l);
        let r_minus = (x - a).norm();
        let r_plus = (x - b).norm();
        let log_term = if s_minus + s_plus >= 0.0 {
            ((r_plus + s_plus) / (r_minus + s_minus)).ln()
        } else {
            ((r_minus - s_minus) / (r_plus - s_plus)).ln()
        };
        let r0_sq = t0 * t0 + h * h;
        let angle = (t0 * s_plus / (r0_sq + habs * r_plus)).atan() - (t0 * s_minus / (r0_sq + habs * r_minus)).atan();
        total += t0 * log_term - habs * angle;
    }
    total
}

fn assemble_rows(mesh: &TriMesh) -> Vec<f64> {
    let n = mesh.panel_count();
    let tris: Vec<[Vec3; 3]> = (0..n).map(|q| mesh.panel_vertices(q)).collect();
    let mut rows = vec![0.0; n * n];
    rows.par_chunks_mut(n).enumerate().for_each(|(p, row)| {
        let x = mesh.centroids()[p];
        for (q, entry) in row.iter_mut().enumerate() {
            *entry = triangle_potential(&x, &tris[q]) / (4.0 * PI);
        }
    });
    rows
}

/// Collocation matrix of the Laplace single layer:
/// entry `(p, q) = int_{panel q} 1 / (4 pi |x_p - y|) ds(y)` with `x_p` the
/// centroid of panel `p`.
pub fn assemble_single_layer(mesh: &TriMesh) -> Mat<f64> {
    let n = mesh.panel_count();
    let rows = assemble_rows(mesh);
    Mat::from_fn(n, n, |p, q| rows[p * n + q])
}

/// Solves `S[sigma] = 1` on `mesh` and integrates the density.
pub fn capacitance(mesh: &TriMesh) -> Result<(Capacitance, PanelDensity)> {
    mesh.check_closed()?;
    let n = mesh.panel_count();
    let a = assemble_single_layer(mesh);
    let rhs = Mat::<f64>::from_fn(n, 1, |_, _| 1.0);
    let lu = a.partial_piv_lu();
    let sol = lu.solve(&rhs);
    let values: Vec<f64> = (0..n).map(|p| sol[(p, 0)]).collect();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::IllConditioned);
    }
    // Residual check against the assembled system.
    let residual = (&a * &sol - &rhs).norm_max();
    if !(residual < 1e-6) {
        return Err(Error::IllConditioned);
    }
    let density = PanelDensity { values };
    let c = density.total_charge(mesh);
    if !(c > 0.0) {
        return Err(Error::IllConditioned);
    }
    Ok((Capacitance(c), density))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{triangulate, ReferenceShape};
    use crate::quadrature::integrate_adaptive;

    /// Duffy-transformed adaptive quadrature of `int_T 1/|x - y|` for `x` in
    /// the plane of `T`: split at `x` into three sub-triangles whose radial
    /// singularity cancels against the Jacobian.
    fn duffy_oracle(x: &Vec3, tri: &[Vec3; 3]) -> f64 {
        let n = (tri[1] - tri[0]).cross(&(tri[2] - tri[0])).normalize();
        let mut total = 0.0;
        for k in 0..3 {
            let a = tri[k];
            let b = tri[(k + 1) % 3];
            // signed, so that points outside the triangle work too
            let jac = (a - x).cross(&(b - a)).dot(&n);
            if jac == 0.0 {
                continue;
            }
            let inner = |v: f64| jac / ((a - x) + (b - a) * v).norm();
            total += integrate_adaptive(inner, 0.0, 1.0, 1e-15, 1e-13);
        }
        total
    }

    fn equilateral(side: f64) -> [Vec3; 3] {
        [
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(side, 0.0, 0.0),
            Vec3::new(0.5 * side, 0.5 * 3f64.sqrt() * side, 0.0),
        ]
    }

    #[test]
    fn self_entry_matches_duffy_oracle() {
        let tri = equilateral(0.7);
        let c = (tri[0] + tri[1] + tri[2]) / 3.0;
        let analytic = triangle_potential(&c, &tri);
        let oracle = duffy_oracle(&c, &tri);
        assert!((analytic - oracle).abs() < 1e-8 * oracle);
        // sqrt(3) L ln(2 + sqrt 3) at the centroid
        assert!((analytic - 3f64.sqrt() * 0.7 * (2.0 + 3f64.sqrt()).ln()).abs() < 1e-13);
    }

    #[test]
    fn in_plane_points_match_duffy_oracle() {
        let tri = [Vec3::new(0.1, 0.0, 0.2), Vec3::new(1.0, 0.3, 0.0), Vec3::new(0.2, 0.9, 0.4)];
        let n = (tri[1] - tri[0]).cross(&(tri[2] - tri[0])).normalize();
        let u = (tri[1] - tri[0]).normalize();
        let w = n.cross(&u);
        for (s, t) in [(0.3, 0.2), (1.5, 0.1), (-0.4, -0.3), (0.5, 0.0)] {
            let x = tri[0] + u * s + w * t;
            let analytic = triangle_potential(&x, &tri);
            let oracle = duffy_oracle(&x, &tri);
            assert!((analytic - oracle).abs() < 1e-8 * oracle, "({s},{t}) {analytic} vs {oracle}");
        }
        // at a vertex
        let analytic = triangle_potential(&tri[1], &tri);
        assert!((analytic - duffy_oracle(&tri[1], &tri)).abs() < 1e-8 * analytic);
    }

    #[test]
    fn off_plane_points_match_nested_quadrature() {
        let tri = equilateral(1.0);
        for x in [Vec3::new(0.3, 0.2, 0.05), Vec3::new(-0.5, 0.4, 0.3), Vec3::new(0.5, 0.3, -1.2)] {
            let analytic = triangle_potential(&x, &tri);
            let (e1, e2) = (tri[1] - tri[0], tri[2] - tri[0]);
            let area2 = e1.cross(&e2).norm();
            let outer = |u: f64| {
                integrate_adaptive(|v| area2 * (1.0 - u) / (x - (tri[0] + e1 * u + e2 * v * (1.0 - u))).norm(), 0.0, 1.0, 1e-14, 1e-12)
            };
            let oracle = integrate_adaptive(outer, 0.0, 1.0, 1e-13, 1e-11);
            assert!((analytic - oracle).abs() < 1e-8 * oracle, "{x:?}");
        }
    }

    #[test]
    fn far_field_is_monopole() {
        let tri = equilateral(0.01);
        let area = 0.25 * 3f64.sqrt() * 1e-4;
        let c = (tri[0] + tri[1] + tri[2]) / 3.0;
        let x = c + Vec3::new(0.3, 2.0, -1.0);
        let v = triangle_potential(&x, &tri) / (4.0 * PI);
        let mono = area / (4.0 * PI * (x - c).norm());
        assert!((v - mono).abs() < 1e-3 * mono);
    }

    #[test]
    fn matrix_is_positive() {
        let m = triangulate(&ReferenceShape::UnitSphere, 1).unwrap();
        let a = assemble_single_layer(&m);
        for p in 0..m.panel_count() {
            for q in 0..m.panel_count() {
                assert!(a[(p, q)] > 0.0);
            }
        }
    }

    #[test]
    fn sphere_capacitance_and_scaling() {
        let m = triangulate(&ReferenceShape::UnitSphere, 3).unwrap();
        let (c, sigma) = capacitance(&m).unwrap();
        assert!((c.value() / (4.0 * PI) - 1.0).abs() < 0.01, "C = {}", c.value());
        assert!(sigma.values.iter().all(|&v| v > 0.0));
        let half = m.transformed(0.5, &Vec3::new(1.0, -2.0, 0.5));
        let (ch, _) = capacitance(&half).unwrap();
        assert!((ch.value() - 0.5 * c.value()).abs() < 1e-12 * c.value());
    }

    #[test]
    fn sphere_error_decreases_with_refinement() {
        let mut last = f64::INFINITY;
        for r in 0..=3 {
            let m = triangulate(&ReferenceShape::UnitSphere, r).unwrap();
            let err = (capacitance(&m).unwrap().0.value() - 4.0 * PI).abs();
            assert!(err < last, "refinement {r}");
            last = err;
        }
    }

    #[test]
    fn ellipsoid_density_is_positive() {
        let shape = ReferenceShape::ellipsoid([1.0, 0.6, 0.4]).unwrap();
        let m = triangulate(&shape, 2).unwrap();
        let (c, sigma) = capacitance(&m).unwrap();
        assert!(sigma.values.iter().all(|&v| v > 0.0));
        // Between the capacitances of the inscribed and circumscribed spheres.
        assert!(c.value() > 4.0 * PI * 0.4 && c.value() < 4.0 * PI);
    }
}
