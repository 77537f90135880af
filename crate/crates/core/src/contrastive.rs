//! Batch contrastive objective with softened targets.
//!
//! For a batch of `B` positive pairs `(text_i, spectrum_i)`:
//!
//! ```text
//! L = Zt·Zsᵀ / τ                             logits
//! S = (Zt·Ztᵀ + Zs·Zsᵀ) / (2τ)               mean self-similarity
//! T = row_softmax(S)                         targets (held constant)
//! text     = mean_i CE(T[i],  softmax(L[i]))
//! spectrum = mean_i CE(Tᵀ[i], softmax(Lᵀ[i]))
//! total    = (text + spectrum) / 2
//! ```
//!
//! Identical annotations inside a batch get near-identical text projections,
//! so their target rows share mass instead of insisting that only the
//! diagonal is correct. All losses are in nats.

use crate::error::{Error, Result};

pub type Rows = Vec<Vec<f64>>;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossBreakdown {
    pub text_loss: f64,
    pub spectrum_loss: f64,
    pub total: f64,
}

fn check_batch(zt: &[Vec<f64>], zs: &[Vec<f64>], tau: f64) -> Result<()> {
    if !(tau.is_finite() && tau > 0.0) {
        return Err(Error::Parameter(format!("temperature {tau} must be positive")));
    }
    if zt.is_empty() {
        return Err(Error::Parameter("empty batch".into()));
    }
    if zt.len() != zs.len() {
        return Err(Error::Shape {
            expected: zt.len(),
            actual: zs.len(),
            context: "spectrum batch rows",
        });
    }
    let dim = zt[0].len();
    for (side, rows) in [("text", zt), ("spectrum", zs)] {
        for (i, row) in rows.iter().enumerate() {
            if row.len() != dim {
                return Err(Error::Shape {
                    expected: dim,
                    actual: row.len(),
                    context: "projection row width",
                });
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numeric(format!("{side} projection row {i} is not finite")));
            }
        }
    }
    Ok(())
}

fn gram(a: &[Vec<f64>], b: &[Vec<f64>], scale: f64) -> Rows {
    a.iter()
        .map(|ra| b.iter().map(|rb| crate::nn::dot(ra, rb) * scale).collect())
        .collect()
}

fn transpose(m: &[Vec<f64>]) -> Rows {
    let cols = m.first().map_or(0, Vec::len);
    (0..cols).map(|j| m.iter().map(|row| row[j]).collect()).collect()
}

fn log_softmax(row: &[f64]) -> Vec<f64> {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    row.iter().map(|v| v - lse).collect()
}

fn softmax(row: &[f64]) -> Vec<f64> {
    log_softmax(row).into_iter().map(f64::exp).collect()
}

/// `logits[i][j] = Zt[i]·Zs[j] / τ`.
pub fn batch_similarities(zt: &[Vec<f64>], zs: &[Vec<f64>], tau: f64) -> Result<Rows> {
    check_batch(zt, zs, tau)?;
    Ok(gram(zt, zs, 1.0 / tau))
}

/// Row-wise softmax of the averaged self-similarities.
pub fn soft_targets(zt: &[Vec<f64>], zs: &[Vec<f64>], tau: f64) -> Result<Rows> {
    check_batch(zt, zs, tau)?;
    let text = gram(zt, zt, 1.0);
    let spec = gram(zs, zs, 1.0);
    Ok(text
        .iter()
        .zip(&spec)
        .map(|(rt, rs)| {
            let avg: Vec<f64> = rt.iter().zip(rs).map(|(a, b)| (a + b) / (2.0 * tau)).collect();
            softmax(&avg)
        })
        .collect())
}

/// Mean over rows of `−Σ_j p[i][j]·log_softmax(logits[i])[j]`.
fn mean_cross_entropy(targets: &[Vec<f64>], logits: &[Vec<f64>]) -> f64 {
    let total: f64 = targets
        .iter()
        .zip(logits)
        .map(|(p, l)| {
            -p.iter()
                .zip(log_softmax(l))
                .map(|(pi, lq)| pi * lq)
                .sum::<f64>()
        })
        .sum();
    total / targets.len() as f64 + 0.0
}

pub fn contrastive_loss(zt: &[Vec<f64>], zs: &[Vec<f64>], tau: f64) -> Result<LossBreakdown> {
    let targets = soft_targets(zt, zs, tau)?;
    loss_with_targets(zt, zs, tau, &targets)
}

/// The loss against externally supplied (frozen) targets.
pub fn loss_with_targets(
    zt: &[Vec<f64>],
    zs: &[Vec<f64>],
    tau: f64,
    targets: &[Vec<f64>],
) -> Result<LossBreakdown> {
    let logits = batch_similarities(zt, zs, tau)?;
    check_targets(targets, zt.len())?;
    let text_loss = mean_cross_entropy(targets, &logits);
    let spectrum_loss = mean_cross_entropy(&transpose(targets), &transpose(&logits));
    let breakdown = LossBreakdown {
        text_loss,
        spectrum_loss,
        total: (text_loss + spectrum_loss) / 2.0,
    };
    if !breakdown.total.is_finite() {
        return Err(Error::Numeric(format!("non-finite loss {breakdown:?}")));
    }
    Ok(breakdown)
}

fn check_targets(targets: &[Vec<f64>], b: usize) -> Result<()> {
    if targets.len() != b || targets.iter().any(|r| r.len() != b) {
        return Err(Error::Shape {
            expected: b,
            actual: targets.len(),
            context: "target matrix",
        });
    }
    Ok(())
}

/// Gradients of `total` with respect to `Zt` and `Zs`, targets held constant.
pub fn loss_backward(zt: &[Vec<f64>], zs: &[Vec<f64>], tau: f64) -> Result<(Rows, Rows)> {
    let targets = soft_targets(zt, zs, tau)?;
    let (_, dzt, dzs) = loss_and_grad_with_targets(zt, zs, tau, &targets)?;
    Ok((dzt, dzs))
}

/// Loss and gradients in one pass, computing the targets from the batch.
pub fn loss_and_grad(zt: &[Vec<f64>], zs: &[Vec<f64>], tau: f64) -> Result<(LossBreakdown, Rows, Rows)> {
    let targets = soft_targets(zt, zs, tau)?;
    loss_and_grad_with_targets(zt, zs, tau, &targets)
}

pub fn loss_and_grad_with_targets(
    zt: &[Vec<f64>],
    zs: &[Vec<f64>],
    tau: f64,
    targets: &[Vec<f64>],
) -> Result<(LossBreakdown, Rows, Rows)> {
    let loss = loss_with_targets(zt, zs, tau, targets)?;
    let b = zt.len();
    let logits = gram(zt, zs, 1.0 / tau);

    let row_probs: Rows = logits.iter().map(|r| softmax(r)).collect();
    let col_probs = transpose(&transpose(&logits).iter().map(|c| softmax(c)).collect::<Rows>());
    let row_mass: Vec<f64> = targets.iter().map(|r| r.iter().sum()).collect();
    let col_mass: Vec<f64> = (0..b).map(|j| targets.iter().map(|r| r[j]).sum()).collect();

    // ∂total/∂L[i][j]
    let scale = 1.0 / (2.0 * b as f64);
    let d_logits: Rows = (0..b)
        .map(|i| {
            (0..b)
                .map(|j| {
                    let text = row_probs[i][j] * row_mass[i] - targets[i][j];
                    let spec = col_probs[i][j] * col_mass[j] - targets[i][j];
                    (text + spec) * scale
                })
                .collect()
        })
        .collect();

    let dim = zt[0].len();
    let mut dzt = vec![vec![0.0; dim]; b];
    let mut dzs = vec![vec![0.0; dim]; b];
    for i in 0..b {
        for j in 0..b {
            let g = d_logits[i][j] / tau;
            for k in 0..dim {
                dzt[i][k] += g * zs[j][k];
                dzs[j][k] += g * zt[i][k];
            }
        }
    }
    Ok((loss, dzt, dzs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;
    use proptest::prelude::*;
    use rand::Rng;

    fn basis(b: usize, dim: usize) -> Rows {
        (0..b)
            .map(|i| (0..dim).map(|k| if k == i { 1.0 } else { 0.0 }).collect())
            .collect()
    }

    fn random_rows(b: usize, dim: usize, s: u64, unit: bool) -> Rows {
        let mut rng = seed::rng(s, &[]);
        (0..b)
            .map(|_| {
                let row: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
                if unit {
                    crate::nn::l2_normalize(&row)
                } else {
                    row
                }
            })
            .collect()
    }

    /// Cross-entropy straight from the definition: explicit exp/sum/ln, no
    /// log-sum-exp shift, explicit loops for the transposed side.
    fn oracle_total(zt: &Rows, zs: &Rows, tau: f64) -> f64 {
        let b = zt.len();
        let d = |x: &Vec<f64>, y: &Vec<f64>| -> f64 { x.iter().zip(y).map(|(p, q)| p * q).sum() };
        let mut logits = vec![vec![0.0; b]; b];
        let mut targets = vec![vec![0.0; b]; b];
        for i in 0..b {
            for j in 0..b {
                logits[i][j] = d(&zt[i], &zs[j]) / tau;
            }
            let s: Vec<f64> = (0..b)
                .map(|j| (d(&zt[i], &zt[j]) + d(&zs[i], &zs[j])) / (2.0 * tau))
                .collect();
            let z: f64 = s.iter().map(|v| v.exp()).sum();
            for j in 0..b {
                targets[i][j] = s[j].exp() / z;
            }
        }
        let mut text = 0.0;
        let mut spec = 0.0;
        for i in 0..b {
            let zr: f64 = (0..b).map(|j| logits[i][j].exp()).sum();
            let zc: f64 = (0..b).map(|j| logits[j][i].exp()).sum();
            for j in 0..b {
                text -= targets[i][j] * (logits[i][j].exp() / zr).ln();
                spec -= targets[j][i] * (logits[j][i].exp() / zc).ln();
            }
        }
        (text / b as f64 + spec / b as f64) / 2.0
    }

    #[test]
    fn basis_batches_give_identity_logits() {
        let z = basis(3, 64);
        let l = batch_similarities(&z, &z, 1.0).unwrap();
        assert_eq!(l, vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]]);
        let half = batch_similarities(&z, &z, 0.5).unwrap();
        for (r1, r2) in l.iter().zip(&half) {
            for (a, b) in r1.iter().zip(r2) {
                assert_eq!(2.0 * a, *b);
            }
        }
    }

    #[test]
    fn similarities_match_double_loop() {
        let zt = random_rows(3, 64, 1, false);
        let zs = random_rows(3, 64, 2, false);
        let l = batch_similarities(&zt, &zs, 0.7).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let mut acc = 0.0;
                for k in 0..64 {
                    acc += zt[i][k] * zs[j][k];
                }
                assert!((l[i][j] - acc / 0.7).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn non_positive_temperature_is_rejected() {
        let z = basis(2, 4);
        assert!(matches!(batch_similarities(&z, &z, 0.0), Err(Error::Parameter(_))));
        assert!(matches!(soft_targets(&z, &z, -1.0), Err(Error::Parameter(_))));
    }

    #[test]
    fn non_finite_row_is_named() {
        let mut zs = basis(3, 4);
        zs[2][1] = f64::NAN;
        let err = contrastive_loss(&basis(3, 4), &zs, 1.0).unwrap_err();
        assert!(err.to_string().contains("spectrum projection row 2"), "{err}");
    }

    #[test]
    fn identical_rows_give_uniform_targets_and_ln_b() {
        let row = crate::nn::l2_normalize(&random_rows(1, 64, 5, false)[0]);
        for b in [2usize, 5, 64] {
            let z = vec![row.clone(); b];
            let t = soft_targets(&z, &z, 1.0).unwrap();
            assert!(t.iter().flatten().all(|v| (v - 1.0 / b as f64).abs() < 1e-15));
            let loss = contrastive_loss(&z, &z, 1.0).unwrap();
            assert!((loss.total - (b as f64).ln()).abs() < 1e-9);
        }
    }

    #[test]
    fn single_pair_has_zero_loss_and_gradient() {
        let zt = random_rows(1, 64, 1, true);
        let zs = random_rows(1, 64, 2, true);
        let loss = contrastive_loss(&zt, &zs, 1.0).unwrap();
        assert_eq!(loss.total, 0.0);
        assert_eq!(loss.text_loss, 0.0);
        assert_eq!(loss.spectrum_loss, 0.0);
        let (dzt, dzs) = loss_backward(&zt, &zs, 1.0).unwrap();
        assert!(dzt[0].iter().chain(&dzs[0]).all(|g| *g == 0.0));
    }

    #[test]
    fn orthonormal_pair_case() {
        let z = basis(2, 64);
        let t = soft_targets(&z, &z, 1.0).unwrap();
        let e = std::f64::consts::E;
        assert!((t[0][0] - e / (e + 1.0)).abs() < 1e-12);
        assert!((t[0][1] - 1.0 / (e + 1.0)).abs() < 1e-12);
        assert!((t[1][0] - 1.0 / (e + 1.0)).abs() < 1e-12);
        let loss = contrastive_loss(&z, &z, 1.0).unwrap();
        let oracle = oracle_total(&z, &z, 1.0);
        assert!((oracle - 0.58220).abs() < 1e-4, "oracle {oracle}");
        assert!((loss.total - oracle).abs() < 1e-12);
    }

    #[test]
    fn matches_oracle_on_random_batches() {
        for s in 0..10 {
            let zt = random_rows(6, 64, s, true);
            let zs = random_rows(6, 64, s + 100, true);
            let tau = 0.3 + 0.1 * s as f64;
            let loss = contrastive_loss(&zt, &zs, tau).unwrap();
            assert!((loss.total - oracle_total(&zt, &zs, tau)).abs() < 1e-12);
            assert!((loss.total - (loss.text_loss + loss.spectrum_loss) / 2.0).abs() < 1e-15);
        }
    }

    fn fd_check(b: usize, tau: f64, s: u64) {
        let zt = random_rows(b, 64, s, false);
        let zs = random_rows(b, 64, s + 50, false);
        let targets = soft_targets(&zt, &zs, tau).unwrap();
        let (_, dzt, dzs) = loss_and_grad_with_targets(&zt, &zs, tau, &targets).unwrap();
        let f = |zt: &Rows, zs: &Rows| loss_with_targets(zt, zs, tau, &targets).unwrap().total;
        let h = 1e-4;
        for i in 0..b {
            for k in 0..64 {
                for (side, grad) in [(0, &dzt), (1, &dzs)] {
                    let (mut a, mut c) = (zt.clone(), zs.clone());
                    let target = if side == 0 { &mut a } else { &mut c };
                    target[i][k] += h;
                    let up = f(&a, &c);
                    let target = if side == 0 { &mut a } else { &mut c };
                    target[i][k] -= 2.0 * h;
                    let down = f(&a, &c);
                    let fd = (up - down) / (2.0 * h);
                    let g = grad[i][k];
                    let rel = (g - fd).abs() / (g.abs() + fd.abs()).max(1e-8);
                    assert!(rel < 1e-4, "tau {tau} side {side} [{i}][{k}]: {g} vs {fd}");
                }
            }
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        for s in 0..4 {
            fd_check(4, 1.0, s);
        }
    }

    #[test]
    fn gradients_match_finite_differences_at_two_temperatures() {
        fd_check(4, 1.0, 11);
        fd_check(4, 2.0, 11);
        fd_check(4, 0.5, 12);
    }

    proptest! {
        #[test]
        fn target_rows_sum_to_one(s in 0u64..1000, b in 1usize..10) {
            let zt = random_rows(b, 16, s, false);
            let zs = random_rows(b, 16, s + 1, false);
            for row in soft_targets(&zt, &zs, 0.8).unwrap() {
                prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }

        #[test]
        fn loss_is_at_least_target_entropy(s in 0u64..1000, b in 1usize..10) {
            let zt = random_rows(b, 16, s, true);
            let zs = random_rows(b, 16, s + 1, true);
            let t = soft_targets(&zt, &zs, 1.0).unwrap();
            let loss = contrastive_loss(&zt, &zs, 1.0).unwrap();
            let entropy: f64 = t.iter().map(|r| -r.iter().map(|p| p * p.ln()).sum::<f64>()).sum::<f64>() / b as f64;
            prop_assert!(loss.total >= 0.0);
            prop_assert!(loss.text_loss >= entropy - 1e-12);
        }

        #[test]
        fn joint_row_permutation_leaves_loss(s in 0u64..1000, b in 2usize..9, rot in 1usize..9) {
            let zt = random_rows(b, 16, s, true);
            let zs = random_rows(b, 16, s + 7, true);
            let base = contrastive_loss(&zt, &zs, 1.0).unwrap().total;
            let (mut pt, mut ps) = (zt.clone(), zs.clone());
            pt.rotate_left(rot % b);
            ps.rotate_left(rot % b);
            let permuted = contrastive_loss(&pt, &ps, 1.0).unwrap().total;
            prop_assert!((base - permuted).abs() < 1e-12);
        }

        #[test]
        fn unit_rows_keep_logits_in_range(s in 0u64..1000, b in 1usize..9) {
            let zt = random_rows(b, 64, s, true);
            let zs = random_rows(b, 64, s + 3, true);
            for v in batch_similarities(&zt, &zs, 1.0).unwrap().into_iter().flatten() {
                prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&v));
            }
        }
    }
}
