use std::f64::consts::LN_2;

use approx::assert_relative_eq;
use proptest::prelude::*;

use needrop::loss::{
    composite_bernoulli, log_add_exp, needle_bce_backward, needle_bce_forward, needle_bce_forward_with,
    reconstruction_loss, reconstruction_loss_grad, softplus, LogitPair, Target, CLAMP,
};

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn naive(x: f64, y: f64, t: Target) -> f64 {
    let b = composite_bernoulli(sigmoid(x), sigmoid(y)).unwrap();
    match t {
        Target::Same => -b.ln(),
        Target::Opposite => -(1.0 - b).ln(),
    }
}

fn target() -> impl Strategy<Value = Target> {
    prop_oneof![Just(Target::Same), Just(Target::Opposite)]
}

#[test]
fn stable_helpers_match_direct_forms() {
    for a in [-5.0, -0.3, 0.0, 1.7, 8.0] {
        assert_relative_eq!(softplus(a), (1.0f64 + a.exp()).ln(), max_relative = 1e-14);
        for b in [-2.0, 0.5, 3.0] {
            assert_relative_eq!(log_add_exp(a, b), (a.exp() + b.exp()).ln(), max_relative = 1e-14);
        }
    }
    assert_eq!(softplus(1000.0), 1000.0);
    assert_eq!(log_add_exp(800.0, 800.0), 800.0 + LN_2);
}

#[test]
fn clamped_forward_saturates() {
    let at = needle_bce_forward(LogitPair::new(CLAMP, -CLAMP), Target::Same);
    let beyond = needle_bce_forward(LogitPair::new(40.0, -1e3), Target::Same);
    assert_eq!(at, beyond);
    assert_ne!(needle_bce_forward_with(LogitPair::new(40.0, -1e3), Target::Same, 1e6), at);
}

#[test]
fn opposite_needle_prefers_disagreeing_logits() {
    let agree = needle_bce_forward(LogitPair::new(3.0, 3.0), Target::Opposite);
    let disagree = needle_bce_forward(LogitPair::new(3.0, -3.0), Target::Opposite);
    assert!(disagree < LN_2 && LN_2 < agree);
    let agree = needle_bce_forward(LogitPair::new(3.0, 3.0), Target::Same);
    let disagree = needle_bce_forward(LogitPair::new(3.0, -3.0), Target::Same);
    assert!(agree < LN_2 && LN_2 < disagree);
}

#[test]
fn set_gradient_carries_mean_weights() {
    let opp = [LogitPair::new(0.3, -1.2), LogitPair::new(2.0, 0.5)];
    let same = [LogitPair::new(-0.7, -0.1), LogitPair::new(1.0, 1.1), LogitPair::new(0.0, 2.0)];
    let g = reconstruction_loss_grad(&opp, &same).unwrap();
    for (p, gp) in opp.iter().zip(&g.opp) {
        let (x, y) = needle_bce_backward(*p, Target::Opposite);
        assert_eq!(*gp, (x / 2.0, y / 2.0));
    }
    // finite differences of the set loss through one logit
    let h = 1e-6;
    let mut up = same;
    up[1].phi_y += h;
    let mut down = same;
    down[1].phi_y -= h;
    let fd = (reconstruction_loss(&opp, &up).unwrap().l_total - reconstruction_loss(&opp, &down).unwrap().l_total)
        / (2.0 * h);
    assert_relative_eq!(fd, g.same[1].1, max_relative = 1e-7);
}

#[test]
fn doubling_needles_keeps_gradients() {
    let opp = [LogitPair::new(0.3, -1.2), LogitPair::new(2.0, 0.5)];
    let same = [LogitPair::new(-0.7, -0.1)];
    let g1 = reconstruction_loss_grad(&opp, &same).unwrap();
    let opp2: Vec<_> = opp.iter().chain(&opp).copied().collect();
    let same2: Vec<_> = same.iter().chain(&same).copied().collect();
    let g2 = reconstruction_loss_grad(&opp2, &same2).unwrap();
    // each copy carries half the weight; summed per logit they match
    for i in 0..opp.len() {
        assert_relative_eq!(g2.opp[i].0 + g2.opp[i + 2].0, g1.opp[i].0, max_relative = 1e-15);
    }
    assert_relative_eq!(g2.same[0].1 * 2.0, g1.same[0].1, max_relative = 1e-15);
}

proptest! {
    #[test]
    fn forward_matches_naive(x in -10.0..10.0f64, y in -10.0..10.0f64, t in target()) {
        prop_assert!((needle_bce_forward(LogitPair::new(x, y), t) - naive(x, y, t)).abs() < 1e-9);
    }

    #[test]
    fn loss_is_nonnegative_and_finite(x in -1e4..1e4f64, y in -1e4..1e4f64, t in target()) {
        let l = needle_bce_forward(LogitPair::new(x, y), t);
        prop_assert!(l.is_finite() && l >= 0.0);
        let (gx, gy) = needle_bce_backward(LogitPair::new(x, y), t);
        prop_assert!(gx.abs() <= 1.0 && gy.abs() <= 1.0);
    }

    #[test]
    fn invariant_under_global_negation(x in -12.0..12.0f64, y in -12.0..12.0f64, t in target()) {
        let a = needle_bce_forward(LogitPair::new(x, y), t);
        let b = needle_bce_forward(LogitPair::new(-x, -y), t);
        prop_assert!((a - b).abs() < 1e-12);
        let (gx, gy) = needle_bce_backward(LogitPair::new(x, y), t);
        let (nx, ny) = needle_bce_backward(LogitPair::new(-x, -y), t);
        prop_assert!((gx + nx).abs() < 1e-12 && (gy + ny).abs() < 1e-12);
    }

    #[test]
    fn symmetric_in_endpoints(x in -10.0..10.0f64, y in -10.0..10.0f64, t in target()) {
        prop_assert_eq!(needle_bce_forward(LogitPair::new(x, y), t), needle_bce_forward(LogitPair::new(y, x), t));
        let (gx, gy) = needle_bce_backward(LogitPair::new(x, y), t);
        let (hx, hy) = needle_bce_backward(LogitPair::new(y, x), t);
        prop_assert_eq!((gx, gy), (hy, hx));
    }

    #[test]
    fn gradient_matches_central_difference(x in -9.0..9.0f64, y in -9.0..9.0f64, t in target()) {
        let h = 1e-5;
        let (gx, gy) = needle_bce_backward(LogitPair::new(x, y), t);
        let fx = (needle_bce_forward(LogitPair::new(x + h, y), t) - needle_bce_forward(LogitPair::new(x - h, y), t)) / (2.0 * h);
        let fy = (needle_bce_forward(LogitPair::new(x, y + h), t) - needle_bce_forward(LogitPair::new(x, y - h), t)) / (2.0 * h);
        prop_assert!((gx - fx).abs() < 1e-8 && (gy - fy).abs() < 1e-8);
    }

    #[test]
    fn composite_bernoulli_in_unit_interval(a in 0.0..=1.0f64, b in 0.0..=1.0f64) {
        let c = composite_bernoulli(a, b).unwrap();
        prop_assert!((0.0..=1.0).contains(&c));
        prop_assert_eq!(c, composite_bernoulli(b, a).unwrap());
    }
}
