use cavity_heat::heat_kernel::{eval_grad_phi, eval_phi, time_integral_phi};
use cavity_heat::quadrature::integrate_adaptive;
use cavity_heat::{Error, Vec3};
use proptest::prelude::*;

fn vec3() -> impl Strategy<Value = Vec3> {
    (-3.0..3.0f64, -3.0..3.0f64, -3.0..3.0f64).prop_map(|(x, y, z)| Vec3::new(x, y, z))
}

proptest! {
    #[test]
    fn phi_is_symmetric_and_nonnegative(x in vec3(), y in vec3(), t in -1.0..4.0f64, tau in -1.0..4.0f64) {
        let a = eval_phi(&x, t, &y, tau);
        prop_assert_eq!(a.to_bits(), eval_phi(&y, t, &x, tau).to_bits());
        prop_assert!(a >= 0.0);
        if t <= tau {
            prop_assert_eq!(a, 0.0);
        }
    }

    #[test]
    fn gradient_is_antisymmetric(x in vec3(), y in vec3(), lag in 0.01..3.0f64) {
        let g1 = eval_grad_phi(&x, lag, &y, 0.0);
        let g2 = eval_grad_phi(&y, lag, &x, 0.0);
        prop_assert!((g1 + g2).norm() <= 1e-15 * g1.norm().max(1e-300));
    }

    #[test]
    fn time_integral_is_additive(r in 1e-3..10.0f64, t in 1e-3..10.0f64, s1 in 0.0..1.0f64, s2 in 0.0..1.0f64) {
        let (a, b) = if s1 <= s2 { (s1 * t, s2 * t) } else { (s2 * t, s1 * t) };
        let whole = time_integral_phi(r, 0.0, b, t).unwrap();
        let parts = time_integral_phi(r, 0.0, a, t).unwrap() + time_integral_phi(r, a, b, t).unwrap();
        prop_assert!((whole - parts).abs() <= 1e-14 * whole.max(1e-300) + 1e-300, "{} vs {}", whole, parts);
    }

    #[test]
    fn time_integral_monotonicity(r in 1e-2..5.0f64, t in 1e-2..5.0f64, s1 in 0.0..1.0f64, s2 in 0.0..1.0f64, dr in 0.0..2.0f64) {
        let (a, b) = if s1 <= s2 { (s1 * t, s2 * t) } else { (s2 * t, s1 * t) };
        prop_assert!(time_integral_phi(r, 0.0, a, t).unwrap() <= time_integral_phi(r, 0.0, b, t).unwrap());
        prop_assert!(time_integral_phi(r + dr, 0.0, b, t).unwrap() <= time_integral_phi(r, 0.0, b, t).unwrap());
    }
}

#[test]
fn argument_errors() {
    assert!(matches!(time_integral_phi(0.0, 0.0, 1.0, 1.0), Err(Error::DegenerateDistance)));
    assert!(matches!(time_integral_phi(-1.0, 0.0, 1.0, 1.0), Err(Error::DegenerateDistance)));
    assert!(matches!(time_integral_phi(1.0, 0.6, 0.5, 1.0), Err(Error::InvertedInterval)));
    assert_eq!(time_integral_phi(1.0, 0.3, 0.3, 1.0).unwrap(), 0.0);
}

#[test]
fn steady_state_limit() {
    let v = time_integral_phi(1.0, 0.0, 1e12, 1e12).unwrap();
    assert!((v - 1.0 / (4.0 * std::f64::consts::PI)).abs() < 1e-6);
}

#[test]
fn gradient_vanishes_on_diagonal() {
    let x = Vec3::new(0.3, -0.2, 1.0);
    assert_eq!(eval_grad_phi(&x, 0.7, &x, 0.1), Vec3::zeros());
    assert_eq!(eval_grad_phi(&x, 0.1, &Vec3::zeros(), 0.7), Vec3::zeros());
}

/// `(int_0^T int_0^t Phi(r, t - tau)^2 dtau dt)^{1/2} r^2` stays bounded as
/// `r -> 0`.
#[test]
fn squared_kernel_norm_scales_like_r_minus_two() {
    let t_max = 1.0;
    let norm = |r: f64| {
        let inner = |t: f64| {
            let f = |s: f64| eval_phi(&Vec3::new(r, 0.0, 0.0), s, &Vec3::zeros(), 0.0).powi(2);
            integrate_adaptive(f, 0.0, t, 0.0, 1e-10)
        };
        integrate_adaptive(inner, 0.0, t_max, 0.0, 1e-8).sqrt() * r * r
    };
    let values: Vec<f64> = [0.2, 0.1, 0.05, 0.025].iter().map(|&r| norm(r)).collect();
    let max = values.iter().cloned().fold(0.0, f64::max);
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    assert!(max / min < 1.5, "{values:?}");
}
