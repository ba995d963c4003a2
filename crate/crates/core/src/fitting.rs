//! Sums of complex exponentials: matrix-pencil fitting of sampled correlation
//! functions and their realization as damped pseudomodes.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::bath::CorrelationSeries;
use crate::error::{Error, Result};
use crate::gkls::{PseudoMode, PseudomodeParams};

/// Relative singular-value floor below which the pencil is declared rank deficient.
pub const RANK_TOL: f64 = 1e-10;
/// Exponents closer than this are merged before mode synthesis.
pub const MERGE_TOL: f64 = 1e-9;
/// Relative non-uniformity tolerated in the sampling grid.
pub const GRID_TOL: f64 = 1e-9;
/// `|Im d| ≤ WEIGHT_TOL·|d|` is treated as a real weight.
pub const WEIGHT_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpTerm {
    pub amplitude: C64,
    pub exponent: C64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ExponentialSum {
    pub terms: Vec<ExpTerm>,
}

impl ExponentialSum {
    pub fn new(terms: Vec<ExpTerm>) -> Result<Self> {
        for (k, t) in terms.iter().enumerate() {
            if t.exponent.re > 0.0 {
                return Err(Error::UnstableExponent {
                    re: t.exponent.re,
                    im: t.exponent.im,
                });
            }
            if !(t.amplitude.re.is_finite() && t.amplitude.im.is_finite() && t.exponent.im.is_finite()) {
                return Err(Error::InvalidArgument(format!("term {k} is not finite")));
            }
        }
        Ok(Self { terms })
    }

    pub fn evaluate(&self, t: f64) -> C64 {
        self.terms.iter().map(|x| x.amplitude * (x.exponent * t).exp()).sum()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Terms with exponents closer than `tol` are merged, amplitudes summed.
    pub fn merged(&self, tol: f64) -> Self {
        let mut out: Vec<ExpTerm> = Vec::new();
        for t in &self.terms {
            match out.iter_mut().find(|o| (o.exponent - t.exponent).norm() < tol) {
                Some(o) => o.amplitude += t.amplitude,
                None => out.push(*t),
            }
        }
        Self { terms: out }
    }
}

pub fn evaluate(es: &ExponentialSum, t: f64) -> C64 {
    es.evaluate(t)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub model_order: usize,
    pub max_residual: f64,
    pub rms_residual: f64,
    pub grid_span: f64,
    /// Singular values of the Hankel matrix, descending, for diagnosing the order.
    pub singular_values: Vec<f64>,
}

pub(crate) fn uniform_step(grid: &[f64]) -> Result<f64> {
    let n = grid.len();
    let dt = (grid[n - 1] - grid[0]) / (n - 1) as f64;
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument("grid must span a positive interval".into()));
    }
    for (k, w) in grid.windows(2).enumerate() {
        let deviation = ((w[1] - w[0]) - dt).abs() / dt;
        if deviation > GRID_TOL {
            return Err(Error::NonUniformGrid { index: k + 1, deviation });
        }
    }
    Ok(dt)
}

/// Matrix-pencil fit of `order` complex exponentials to a uniformly sampled series.
pub fn matrix_pencil_fit(series: &CorrelationSeries, order: usize) -> Result<(ExponentialSum, FitReport)> {
    let y = &series.values;
    let grid = &series.grid;
    let n = y.len();
    if order == 0 {
        return Err(Error::InvalidArgument("model order must be at least 1".into()));
    }
    if n < 2 * order + 1 {
        return Err(Error::InvalidArgument(format!(
            "{n} samples cannot determine {order} exponentials (need {})",
            2 * order + 1
        )));
    }
    let dt = uniform_step(grid)?;

    // Hankel matrix of shape (n − L) × (L + 1) with pencil parameter L = n/2
    let l = n / 2;
    let rows = n - l;
    let hankel = DMatrix::from_fn(rows, l + 1, |i, j| y[i + j]);
    let svd = hankel.svd(false, true);
    let mut order_idx: Vec<usize> = (0..svd.singular_values.len()).collect();
    order_idx.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let sigma: Vec<f64> = order_idx.iter().map(|&k| svd.singular_values[k]).collect();
    if sigma[0] == 0.0 {
        return Err(Error::RankDeficient { order, ratio: 0.0 });
    }
    let ratio = sigma[order - 1] / sigma[0];
    if ratio < RANK_TOL {
        return Err(Error::RankDeficient { order, ratio });
    }
    let v_t = svd.v_t.as_ref().expect("right singular vectors requested");
    // rows of Vᴴ span the sampled exponentials (λ_k^j)_j; take the leading p as columns
    let vp = DMatrix::from_fn(l + 1, order, |i, k| v_t[(order_idx[k], i)]);
    let v1 = vp.rows(0, l).into_owned();
    let v2 = vp.rows(1, l).into_owned();
    let pencil = v1
        .svd(true, true)
        .solve(&v2, 0.0)
        .map_err(|e| Error::Numerical(e.to_string()))?;
    let lambdas = crate::algebra::OperatorMatrix::from_nalgebra(&pencil).eigenvalues()?;

    let noise = RANK_TOL / dt;
    let mut exponents = Vec::with_capacity(order);
    for lam in lambdas {
        if lam.norm() == 0.0 {
            return Err(Error::Numerical("zero pencil eigenvalue".into()));
        }
        let mut z = lam.ln() / dt;
        if z.re > 0.0 {
            if z.re < noise {
                z.re = -z.re;
            } else {
                return Err(Error::UnstableExponent { re: z.re, im: z.im });
            }
        }
        exponents.push(z);
    }
    exponents.sort_by(|a, b| b.re.total_cmp(&a.re).then(a.im.total_cmp(&b.im)));

    // amplitudes by least squares on the Vandermonde system, times measured from grid[0]
    let t0 = grid[0];
    let vander = DMatrix::from_fn(n, order, |i, k| (exponents[k] * (grid[i] - t0)).exp());
    let rhs = DMatrix::from_fn(n, 1, |i, _| y[i]);
    let coeffs = vander
        .svd(true, true)
        .solve(&rhs, 0.0)
        .map_err(|e| Error::Numerical(e.to_string()))?;
    let terms: Vec<ExpTerm> = exponents
        .iter()
        .enumerate()
        .map(|(k, &z)| ExpTerm {
            amplitude: coeffs[(k, 0)] * (-z * t0).exp(),
            exponent: z,
        })
        .collect();
    let es = ExponentialSum::new(terms)?;

    let residuals: Vec<f64> = grid.iter().zip(y).map(|(&t, v)| (es.evaluate(t) - v).norm()).collect();
    let max_residual = residuals.iter().copied().fold(0.0, f64::max);
    let rms_residual = (residuals.iter().map(|r| r * r).sum::<f64>() / n as f64).sqrt();
    let report = FitReport {
        model_order: order,
        max_residual,
        rms_residual,
        grid_span: grid[n - 1] - grid[0],
        singular_values: sigma,
    };
    Ok((es, report))
}

/// One damped mode per (merged) term: `Ω = −Im z`, `γ = −2 Re z`, `g = √(Re d)`,
/// coupled through channel `channel` of a system with `num_channels` coupling operators.
pub fn to_pseudomodes(
    es: &ExponentialSum,
    channel: usize,
    num_channels: usize,
    n_max: usize,
) -> Result<PseudomodeParams> {
    if channel >= num_channels {
        return Err(Error::InvalidArgument(format!(
            "channel {channel} out of range for {num_channels} channels"
        )));
    }
    let merged = es.merged(MERGE_TOL);
    let mut modes = Vec::with_capacity(merged.len());
    let mut g = Vec::with_capacity(merged.len());
    for (index, t) in merged.terms.iter().enumerate() {
        let d = t.amplitude;
        if d.im.abs() > WEIGHT_TOL * d.norm() || !(d.re > 0.0) {
            return Err(Error::UnsupportedWeight { index, re: d.re, im: d.im });
        }
        if !(t.exponent.re < 0.0) {
            return Err(Error::UnstableExponent {
                re: t.exponent.re,
                im: t.exponent.im,
            });
        }
        // 0.0 − x keeps Ω = +0.0 for real exponents
        let omega = 0.0 - t.exponent.im;
        modes.push(PseudoMode {
            omega: if omega == 0.0 { 0.0 } else { omega },
            gamma: -2.0 * t.exponent.re,
            n_max,
        });
        g.push(C64::new(d.re.sqrt(), 0.0));
    }
    let mut couplings = vec![vec![C64::new(0.0, 0.0); modes.len()]; num_channels];
    couplings[channel] = g;
    PseudomodeParams::new(modes, couplings, None)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series_of(f: impl Fn(f64) -> C64, t_max: f64, points: usize) -> CorrelationSeries {
        let grid = crate::bath::uniform_grid(t_max, points).unwrap();
        let values = grid.iter().map(|&t| f(t)).collect();
        CorrelationSeries::new(grid, values, (0, 0)).unwrap()
    }

    #[test]
    fn single_damped_oscillation() {
        let z = C64::new(-1.0, 2.0);
        let s = series_of(|t| 2.0 * (z * t).exp(), 6.0, 64);
        let (es, rep) = matrix_pencil_fit(&s, 1).unwrap();
        assert_eq!(es.len(), 1);
        assert!((es.terms[0].amplitude - 2.0).norm() < 1e-8);
        assert!((es.terms[0].exponent - z).norm() < 1e-8);
        assert!(rep.max_residual < 1e-10);
    }

    #[test]
    fn two_real_exponents() {
        let s = series_of(|t| C64::new((-t).exp() + (-2.0 * t).exp(), 0.0), 6.0, 64);
        let (es, _) = matrix_pencil_fit(&s, 2).unwrap();
        let mut re: Vec<f64> = es.terms.iter().map(|t| t.exponent.re).collect();
        re.sort_by(f64::total_cmp);
        assert!((re[0] + 2.0).abs() < 1e-8 && (re[1] + 1.0).abs() < 1e-8);
        assert!(es.terms.iter().all(|t| t.exponent.im.abs() < 1e-8));
    }

    #[test]
    fn constant_series() {
        let s = series_of(|_| C64::new(0.3, 0.1), 4.0, 21);
        let (es, _) = matrix_pencil_fit(&s, 1).unwrap();
        assert!((es.terms[0].amplitude - C64::new(0.3, 0.1)).norm() < 1e-12);
        assert!(es.terms[0].exponent.norm() < 1e-12);
        assert!(es.terms[0].exponent.re <= 0.0);
    }

    #[test]
    fn fit_errors() {
        let s = series_of(|t| (C64::new(-1.0, 0.0) * t).exp(), 4.0, 21);
        assert!(matches!(matrix_pencil_fit(&s, 2), Err(Error::RankDeficient { .. })));
        assert!(matrix_pencil_fit(&s, 11).is_err());
        assert!(matrix_pencil_fit(&s, 0).is_err());
        let growing = series_of(|t| (C64::new(0.5, 1.0) * t).exp(), 4.0, 21);
        assert!(matches!(matrix_pencil_fit(&growing, 1), Err(Error::UnstableExponent { .. })));
        let mut grid = crate::bath::uniform_grid(2.0, 9).unwrap();
        grid[4] += 1e-3;
        let values = grid.iter().map(|&t| C64::new((-t).exp(), 0.0)).collect();
        let s = CorrelationSeries::new(grid, values, (0, 0)).unwrap();
        assert!(matches!(matrix_pencil_fit(&s, 1), Err(Error::NonUniformGrid { index: 4, .. })));
    }

    #[test]
    fn evaluation_basics() {
        assert_eq!(ExponentialSum::default().evaluate(1.0), C64::new(0.0, 0.0));
        let one = ExponentialSum::new(vec![ExpTerm { amplitude: C64::new(0.4, 0.2), exponent: C64::new(-1.0, 3.0) }]).unwrap();
        assert_eq!(one.evaluate(0.0), C64::new(0.4, 0.2));
        let d = C64::new(0.3, 0.7);
        let z = C64::new(-0.2, 1.1);
        let pair = ExponentialSum::new(vec![
            ExpTerm { amplitude: d, exponent: z },
            ExpTerm { amplitude: d.conj(), exponent: z.conj() },
        ])
        .unwrap();
        for t in [0.0, 0.7, 3.3] {
            assert!(pair.evaluate(t).im.abs() < 1e-14);
        }
        assert!(ExponentialSum::new(vec![ExpTerm { amplitude: d, exponent: C64::new(0.1, 0.0) }]).is_err());
    }

    #[test]
    fn pseudomode_parameters() {
        let es = ExponentialSum::new(vec![ExpTerm { amplitude: C64::new(0.25, 0.0), exponent: C64::new(-0.1, -3.0) }]).unwrap();
        let p = to_pseudomodes(&es, 0, 1, 4).unwrap();
        assert!((p.modes[0].omega - 3.0).abs() < 1e-15);
        assert!((p.modes[0].gamma - 0.2).abs() < 1e-15);
        assert!((p.couplings[0][0].re - 0.5).abs() < 1e-15);

        let es = ExponentialSum::new(vec![ExpTerm { amplitude: C64::new(1.0, 0.0), exponent: C64::new(-2.0, 0.0) }]).unwrap();
        let p = to_pseudomodes(&es, 0, 1, 4).unwrap();
        assert_eq!(p.modes[0].omega.to_bits(), 0.0f64.to_bits());
        assert_eq!(p.modes[0].gamma, 4.0);
        assert_eq!(p.couplings[0][0].re, 1.0);

        let empty = to_pseudomodes(&ExponentialSum::default(), 0, 1, 4).unwrap();
        assert!(empty.modes.is_empty());
    }

    #[test]
    fn pseudomode_refusals() {
        let complex = ExponentialSum::new(vec![ExpTerm { amplitude: C64::new(0.2, 0.1), exponent: C64::new(-1.0, 0.0) }]).unwrap();
        assert!(matches!(to_pseudomodes(&complex, 0, 1, 4), Err(Error::UnsupportedWeight { index: 0, .. })));
        let negative = ExponentialSum::new(vec![ExpTerm { amplitude: C64::new(-0.2, 0.0), exponent: C64::new(-1.0, 0.0) }]).unwrap();
        assert!(matches!(to_pseudomodes(&negative, 0, 1, 4), Err(Error::UnsupportedWeight { .. })));
        let undamped = ExponentialSum::new(vec![ExpTerm { amplitude: C64::new(0.2, 0.0), exponent: C64::new(0.0, 1.0) }]).unwrap();
        assert!(matches!(to_pseudomodes(&undamped, 0, 1, 4), Err(Error::UnstableExponent { .. })));
    }

    #[test]
    fn degenerate_exponents_merge() {
        let z = C64::new(-1.0, 0.5);
        let es = ExponentialSum {
            terms: vec![
                ExpTerm { amplitude: C64::new(0.1, 0.0), exponent: z },
                ExpTerm { amplitude: C64::new(0.2, 0.0), exponent: z + 1e-11 },
            ],
        };
        let p = to_pseudomodes(&es, 0, 1, 3).unwrap();
        assert_eq!(p.modes.len(), 1);
        assert!((p.couplings[0][0].re - 0.3f64.sqrt()).abs() < 1e-15);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(32))]

            #[test]
            fn residual_non_increasing_with_order(
                d1 in 0.2f64..2.0, d2 in 0.2f64..2.0,
                r1 in 0.2f64..0.8, r2 in 1.2f64..2.0,
                w1 in -2.0f64..2.0, w2 in -2.0f64..2.0,
            ) {
                let s = series_of(|t| d1 * C64::new(-r1, w1 * 1.0).scale(t).exp() + d2 * C64::new(-r2, w2).scale(t).exp(), 6.0, 61);
                let r_one = matrix_pencil_fit(&s, 1).unwrap().1.max_residual;
                let r_two = matrix_pencil_fit(&s, 2).unwrap().1.max_residual;
                prop_assert!(r_two <= r_one + 1e-12);
                prop_assert!(r_two < 1e-8);
            }

            #[test]
            fn conjugate_symmetric_inputs_give_conjugate_pairs(
                d in 0.2f64..2.0, phase in -1.0f64..1.0, r in 0.1f64..1.0, w in 0.5f64..3.0,
            ) {
                let amp = C64::from_polar(d, phase);
                let z = C64::new(-r, w);
                let s = series_of(|t| amp * (z * t).exp() + amp.conj() * (z.conj() * t).exp(), 8.0, 81);
                let (es, _) = matrix_pencil_fit(&s, 2).unwrap();
                let (a, b) = (es.terms[0], es.terms[1]);
                prop_assert!((a.exponent - b.exponent.conj()).norm() < 1e-7);
                prop_assert!((a.amplitude - b.amplitude.conj()).norm() < 1e-7);
            }
        }
    }
}
