use rand::seq::index;

use crate::seed;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub coords_checked: usize,
    /// Coordinate with the largest error.
    pub worst_index: usize,
}

/// Compares `analytic` against central differences of `loss` on a seeded
/// subsample of coordinates: 1% of the parameters, at least 100 (or all of
/// them when fewer exist).
///
/// Relative error per coordinate is `|a − d| / max(1e-8, |a| + |d|)`.
pub fn grad_check<F>(mut loss: F, params: &[f64], analytic: &[f64], h: f64, seed: u64) -> GradCheckReport
where
    F: FnMut(&[f64]) -> f64,
{
    assert_eq!(params.len(), analytic.len(), "gradient length");
    let n = params.len();
    let k = n.div_ceil(100).max(100).min(n);
    let mut coords = index::sample(&mut seed::rng(seed, &[seed::stream::GRAD_CHECK]), n, k).into_vec();
    coords.sort_unstable();

    let mut probe = params.to_vec();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        coords_checked: coords.len(),
        worst_index: coords.first().copied().unwrap_or(0),
    };
    for i in coords {
        let original = probe[i];
        probe[i] = original + h;
        let up = loss(&probe);
        probe[i] = original - h;
        let down = loss(&probe);
        probe[i] = original;
        let fd = (up - down) / (2.0 * h);
        let rel = (analytic[i] - fd).abs() / (analytic[i].abs() + fd.abs()).max(1e-8);
        if rel > report.max_rel_error {
            report.max_rel_error = rel;
            report.worst_index = i;
        }
    }
    report
}
