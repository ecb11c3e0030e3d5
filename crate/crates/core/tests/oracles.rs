//! Closed-form values the numerical routines must reproduce.

use bubblelab::bubbles::{bubble_eval, fd_order_study};
use bubblelab::interaction::q_pair;
use bubblelab::norms::bubble_energy;
use bubblelab::quadrature::{pair_integral, sphere_area, QuadratureSpec};
use bubblelab::{Bubble, Kernel, ProblemParams};
use statrs::function::gamma::gamma;

/// `S_n^{n/2}` with the sharp Sobolev constant `S_n = π n(n−2) (Γ(n/2)/Γ(n))^{2/n}`.
fn sobolev_energy(n: usize) -> f64 {
    let nf = n as f64;
    let s = std::f64::consts::PI * nf * (nf - 2.0) * (gamma(nf / 2.0) / gamma(nf)).powf(2.0 / nf);
    s.powf(nf / 2.0)
}

#[test]
fn bubble_energy_is_the_sobolev_level() {
    let spec = QuadratureSpec::default().with_rel(1e-12);
    for n in [3, 4, 5, 6, 7, 8, 10] {
        let pp = ProblemParams::new(n).unwrap();
        let e = bubble_energy(&pp, &spec).unwrap();
        assert!((e / sobolev_energy(n) - 1.0).abs() < 1e-9, "n={n}: {e} vs {}", sobolev_energy(n));
    }
}

#[test]
fn sphere_areas() {
    assert!((sphere_area(2) - 2.0 * std::f64::consts::PI).abs() < 1e-14);
    assert!((sphere_area(3) - 4.0 * std::f64::consts::PI).abs() < 1e-13);
    let pi2 = std::f64::consts::PI.powi(2);
    assert!((sphere_area(4) - 2.0 * pi2).abs() < 1e-12);
}

#[test]
fn bubble_value_at_center() {
    for n in [6, 7] {
        let pp = ProblemParams::new(n).unwrap();
        let nf = n as f64;
        let b = Bubble::on_axis(n, 0.0, 2.0).unwrap();
        let v = bubble_eval(&pp, &b, &vec![0.0; n]).unwrap();
        let expect = (nf * (nf - 2.0)).powf((nf - 2.0) / 4.0) * 2f64.powf((nf - 2.0) / 2.0);
        assert!((v / expect - 1.0).abs() < 1e-14);
    }
}

#[test]
fn q_of_concentric_pair() {
    let pp = ProblemParams::new(6).unwrap();
    let a = Bubble::on_axis(6, 0.0, 1.0).unwrap();
    let b = Bubble::on_axis(6, 0.0, 4.0).unwrap();
    let expect = (4.0f64 + 0.25).powf(-2.0);
    assert!((q_pair(&pp, &a, &b) - expect).abs() < 1e-15);
}

#[test]
fn self_pair_integral_is_the_energy() {
    let spec = QuadratureSpec::default();
    let pp = ProblemParams::new(7).unwrap();
    let b = Bubble::on_axis(7, 0.0, 1.0).unwrap();
    let c = Bubble::on_axis(7, 1e-9, 1.0).unwrap();
    let v = pair_integral(&pp, &b, &c, pp.p(), 1.0, &spec).unwrap().value;
    assert!((v / sobolev_energy(7) - 1.0).abs() < 1e-6, "{v}");
}

#[test]
fn finite_difference_orders() {
    let pp = ProblemParams::new(6).unwrap();
    let b = Bubble::new(vec![0.1, -0.2, 0.0, 0.3, 0.0, 0.05], 1.3).unwrap();
    for k in [None, Some(Kernel::Dilation), Some(Kernel::Translation(2))] {
        let st = fd_order_study(&pp, &b, k, &[0.04, 0.02, 0.01], 50, 3).unwrap();
        assert!(st.orders.iter().all(|o| (o - 2.0).abs() < 0.2), "{k:?}: {:?}", st.orders);
    }
}
