use std::f64::consts::PI;

use cavity_heat::geometry::{triangulate, ReferenceShape};
use cavity_heat::laplace_bem::{assemble_single_layer, capacitance};
use cavity_heat::Vec3;
use nalgebra::{Rotation3, Unit};

#[test]
fn half_radius_sphere() {
    let m = triangulate(&ReferenceShape::UnitSphere, 3).unwrap().transformed(0.5, &Vec3::zeros());
    let (c, density) = capacitance(&m).unwrap();
    assert!((c.value() / (2.0 * PI) - 1.0).abs() < 5e-3, "{}", c.value());
    assert!((density.total_charge(&m) - c.value()).abs() < 1e-12);
    // constant density 1/R on the exact sphere
    let mean = density.values.iter().sum::<f64>() / density.values.len() as f64;
    assert!((mean - 2.0).abs() < 0.02, "{mean}");
}

#[test]
fn rigid_motions_leave_capacitance_unchanged() {
    let base = triangulate(&ReferenceShape::ellipsoid([1.0, 0.7, 0.4]).unwrap(), 2).unwrap();
    let (c0, _) = capacitance(&base).unwrap();
    let rot = Rotation3::from_axis_angle(&Unit::new_normalize(Vec3::new(0.3, -1.0, 0.5)), 1.1);
    let shift = Vec3::new(3.0, -2.0, 7.5);
    let moved = base.mapped(|x| rot * x + shift).unwrap();
    let (c1, _) = capacitance(&moved).unwrap();
    assert!((c1.value() - c0.value()).abs() <= 1e-12 * c0.value(), "{} {}", c0.value(), c1.value());
}

#[test]
fn single_layer_matrix_scales_with_dilation() {
    let m = triangulate(&ReferenceShape::UnitSphere, 1).unwrap();
    let a = assemble_single_layer(&m);
    let b = assemble_single_layer(&m.transformed(0.25, &Vec3::zeros()));
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            assert!((b[(i, j)] - 0.25 * a[(i, j)]).abs() <= 1e-14 * a[(i, j)]);
        }
    }
}

#[test]
fn collocation_residual_is_small() {
    let m = triangulate(&ReferenceShape::ellipsoid([1.0, 0.5, 0.5]).unwrap(), 2).unwrap();
    let (_, density) = capacitance(&m).unwrap();
    let a = assemble_single_layer(&m);
    for p in 0..m.panel_count() {
        let s: f64 = (0..m.panel_count()).map(|q| a[(p, q)] * density.values[q]).sum();
        assert!((s - 1.0).abs() < 1e-10);
    }
}

#[test]
fn density_csv() {
    let m = triangulate(&ReferenceShape::UnitSphere, 0).unwrap();
    let (_, density) = capacitance(&m).unwrap();
    let mut buf = Vec::new();
    density.write_csv(&m, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "panel_id,value,area");
    assert_eq!(lines.len(), 21);
    assert!(text.ends_with('\n') && !text.contains('\r'));
    let first: Vec<f64> = lines[1].split(',').map(|s| s.parse().unwrap()).collect();
    assert_eq!(first[0], 0.0);
    assert_eq!(first[1], density.values[0]);
    assert_eq!(first[2], m.areas()[0]);
}
