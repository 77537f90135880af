//! Minimal differentiable kernel for the projection heads.
//!
//! Everything is plain `f64` slices: a dense layer is a row-major
//! `out × in` weight matrix plus a bias. Reverse mode is written out by hand
//! for the one architecture in use, and [`grad_check`] verifies it against
//! central finite differences.

mod gradcheck;
mod head;
mod optim;

pub use gradcheck::{grad_check, GradCheckReport};
pub use head::{ForwardCache, HeadGrads, Mode, ProjectionHead, DEFAULT_DROPOUT, OUT_DIM};
pub use optim::{Adam, AdamConfig, ParamBlock};

use std::f64::consts::{FRAC_1_SQRT_2, PI};

/// Layer-norm variance floor.
pub const LN_EPS: f64 = 1e-5;

/// Exact GELU, `x·Φ(x)`.
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x * FRAC_1_SQRT_2))
}

/// d/dx GELU = Φ(x) + x·φ(x).
pub fn gelu_grad(x: f64) -> f64 {
    let cdf = 0.5 * (1.0 + libm::erf(x * FRAC_1_SQRT_2));
    let pdf = (-0.5 * x * x).exp() / (2.0 * PI).sqrt();
    cdf + x * pdf
}

/// Mean and population variance.
pub fn moments(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var)
}

pub fn layer_norm(x: &[f64], gain: &[f64], bias: &[f64], eps: f64) -> Vec<f64> {
    assert_eq!(x.len(), gain.len(), "layer_norm: gain length");
    assert_eq!(x.len(), bias.len(), "layer_norm: bias length");
    let (mean, var) = moments(x);
    let inv_std = 1.0 / (var + eps).sqrt();
    x.iter()
        .zip(gain.iter().zip(bias))
        .map(|(v, (g, b))| g * (v - mean) * inv_std + b)
        .collect()
}

/// Inner product summed in four fixed lanes, then lane 0..3 in order; the
/// order never depends on anything but the length.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    let mut acc = [0.0f64; 4];
    for (x, y) in ca.zip(cb) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

pub fn l2_norm(x: &[f64]) -> f64 {
    dot(x, x).sqrt()
}

/// Unit-length copy of `x`; zero vectors are returned unchanged.
pub fn l2_normalize(x: &[f64]) -> Vec<f64> {
    let norm = l2_norm(x);
    if norm == 0.0 {
        return x.to_vec();
    }
    x.iter().map(|v| v / norm).collect()
}

/// Backward pass of `u = x/‖x‖`: given `x` and `∂/∂u`, returns `∂/∂x`.
pub fn l2_normalize_backward(x: &[f64], upstream: &[f64]) -> Vec<f64> {
    let norm = l2_norm(x);
    if norm == 0.0 {
        return vec![0.0; x.len()];
    }
    let u: Vec<f64> = x.iter().map(|v| v / norm).collect();
    let proj = dot(&u, upstream);
    upstream
        .iter()
        .zip(&u)
        .map(|(g, ui)| (g - ui * proj) / norm)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn gelu_reference_values() {
        assert_eq!(gelu(0.0), 0.0);
        // 0.5·(1 + erf(1/√2)) with erf(1/√2) = 0.682689492137086
        assert!((gelu(1.0) - 0.841_344_746_068_543).abs() < 1e-6);
        let tail = gelu(-10.0);
        assert!(tail <= 0.0 && tail > -1e-20, "gelu(-10) = {tail:e}");
    }

    #[test]
    fn gelu_grad_matches_central_differences() {
        for &x in &[-4.0, -1.3, -0.2, 0.0, 0.4, 1.0, 2.7] {
            let h = 1e-5;
            let fd = (gelu(x + h) - gelu(x - h)) / (2.0 * h);
            assert!((gelu_grad(x) - fd).abs() < 1e-8, "x={x}");
        }
    }

    #[test]
    fn layer_norm_constant_vector_maps_to_bias() {
        let out = layer_norm(&[3.5; 8], &[1.0; 8], &[0.0; 8], LN_EPS);
        assert!(out.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn layer_norm_two_element_case() {
        let out = layer_norm(&[1.0, -1.0], &[1.0; 2], &[0.0; 2], LN_EPS);
        let expect = 1.0 / (1.0f64 + 1e-5).sqrt();
        assert!((out[0] - expect).abs() < 1e-15);
        assert!((out[1] + expect).abs() < 1e-15);
    }

    #[test]
    fn l2_normalize_backward_matches_finite_differences() {
        let x = [0.3, -1.2, 0.7, 2.0];
        let g = [0.5, 0.1, -0.4, 0.9];
        let analytic = l2_normalize_backward(&x, &g);
        for i in 0..x.len() {
            let h = 1e-6;
            let f = |d: f64| {
                let mut y = x;
                y[i] += d;
                dot(&l2_normalize(&y), &g)
            };
            let fd = (f(h) - f(-h)) / (2.0 * h);
            assert!((analytic[i] - fd).abs() < 1e-8);
        }
    }

    proptest! {
        #[test]
        fn layer_norm_is_permutation_equivariant(
            x in prop::collection::vec(-50.0f64..50.0, 2..32),
            rot in 0usize..32,
        ) {
            let n = x.len();
            let ones = vec![1.0; n];
            let zeros = vec![0.0; n];
            let base = layer_norm(&x, &ones, &zeros, LN_EPS);
            let mut shifted = x.clone();
            shifted.rotate_left(rot % n);
            let out = layer_norm(&shifted, &ones, &zeros, LN_EPS);
            let mut expect = base.clone();
            expect.rotate_left(rot % n);
            for (a, b) in out.iter().zip(&expect) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn layer_norm_output_is_standardized(x in prop::collection::vec(-10.0f64..10.0, 4..64)) {
            let (_, var_in) = moments(&x);
            prop_assume!(var_in > 1e-3);
            let n = x.len();
            let out = layer_norm(&x, &vec![1.0; n], &vec![0.0; n], LN_EPS);
            let (mean, var) = moments(&out);
            prop_assert!(mean.abs() < 1e-9);
            prop_assert!((1.0 - 1e-3..=1.0).contains(&var), "variance {}", var);
        }
    }
}
