//! Adaptive Gauss–Kronrod quadrature for complex integrands, with a cycle-summing
//! extrapolated rule for oscillatory semi-infinite tails.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

// 21-point Kronrod nodes (positive half) with the embedded 10-point Gauss rule.
const XGK: [f64; 11] = [
    0.995657163025808080735527280689003,
    0.973906528517171720077964012084452,
    0.930157491355708226001207180059508,
    0.865063366688984510732096688423493,
    0.780817726586416897063717578345042,
    0.679409568299024406234327365114874,
    0.562757134668604683339000099272694,
    0.433395394129247190799265943165784,
    0.294392862701460198131126603103866,
    0.148874338981631210884826001129720,
    0.000000000000000000000000000000000,
];
const WGK: [f64; 11] = [
    0.011694638867371874278064396062192,
    0.032558162307964727478818972459390,
    0.054755896574351996031381300244580,
    0.075039674810919952767043140916190,
    0.093125454583697605535065465083366,
    0.109387158802297641899210590325805,
    0.123491976262065851077600364891953,
    0.134709217311473325928054001771707,
    0.142775938577060080797094273138717,
    0.147739104901338491374841515972068,
    0.149445554002916905664936468389821,
];
// Gauss weights for the odd-indexed Kronrod nodes (1, 3, 5, 7, 9).
const WG: [f64; 5] = [
    0.066671344308688137593568809893332,
    0.149451349150580593145776339657697,
    0.219086362515982043995534934228163,
    0.269266719309996355091226921569469,
    0.295524224714752870173892994651338,
];

#[derive(Clone, Copy, Debug)]
pub struct QuadOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_subdivisions: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-10,
            abs_tol: 1e-14,
            max_subdivisions: 2000,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadResult {
    pub value: C64,
    pub error: f64,
    /// Estimate of `∫|f|`, the natural scale for relative accuracy.
    pub magnitude: f64,
}

fn gk21<F: Fn(f64) -> C64>(f: &F, a: f64, b: f64) -> (C64, f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = fc * WGK[10];
    let mut abs = fc.norm() * WGK[10];
    let mut gauss = C64::new(0.0, 0.0);
    for k in 0..10 {
        let dx = half * XGK[k];
        let (lo, hi) = (f(center - dx), f(center + dx));
        let pair = lo + hi;
        kronrod += pair * WGK[k];
        abs += (lo.norm() + hi.norm()) * WGK[k];
        if k % 2 == 1 {
            gauss += pair * WG[k / 2];
        }
    }
    let value = kronrod * half;
    let error = ((kronrod - gauss) * half).norm();
    (value, error, abs * half.abs())
}

struct Interval {
    a: f64,
    b: f64,
    value: C64,
    error: f64,
    abs: f64,
}

impl PartialEq for Interval {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Interval {}
impl PartialOrd for Interval {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Interval {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

/// Globally adaptive integration over a finite interval.
pub fn integrate<F: Fn(f64) -> C64>(f: F, a: f64, b: f64, opts: QuadOptions) -> Result<QuadResult> {
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::InvalidArgument("finite interval required".into()));
    }
    if a == b {
        return Ok(QuadResult {
            value: C64::new(0.0, 0.0),
            error: 0.0,
            magnitude: 0.0,
        });
    }
    let (v, e, m) = gk21(&f, a, b);
    let mut heap = BinaryHeap::new();
    heap.push(Interval { a, b, value: v, error: e, abs: m });
    let mut total = v;
    let mut total_err = e;
    let mut splits = 0;
    loop {
        if !(total.re.is_finite() && total.im.is_finite()) {
            return Err(Error::NonFinite);
        }
        let target = opts.abs_tol.max(opts.rel_tol * total.norm());
        if total_err <= target {
            break;
        }
        if splits >= opts.max_subdivisions {
            return Err(Error::Quadrature {
                estimate: total_err,
                requested: target,
            });
        }
        let worst = heap.pop().expect("heap never empty");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // interval can no longer be bisected in floating point
            return Err(Error::Quadrature {
                estimate: total_err,
                requested: target,
            });
        }
        let (v1, e1, m1) = gk21(&f, worst.a, mid);
        let (v2, e2, m2) = gk21(&f, mid, worst.b);
        total += v1 + v2 - worst.value;
        total_err += e1 + e2 - worst.error;
        heap.push(Interval { a: worst.a, b: mid, value: v1, error: e1, abs: m1 });
        heap.push(Interval { a: mid, b: worst.b, value: v2, error: e2, abs: m2 });
        splits += 1;
        if splits % 64 == 0 {
            // refresh accumulated sums to limit cancellation drift
            total = heap.iter().map(|i| i.value).sum();
            total_err = heap.iter().map(|i| i.error).sum();
        }
    }
    let value = heap.iter().map(|i| i.value).sum();
    let error = heap.iter().map(|i| i.error).sum();
    let magnitude = heap.iter().map(|i| i.abs).sum();
    Ok(QuadResult { value, error, magnitude })
}

/// `∫_a^∞ f` for a non-oscillatory integrand, mapped onto `[0, 1)` by `ω = a + u/(1−u)`.
pub fn integrate_to_infinity<F: Fn(f64) -> C64>(f: F, a: f64, opts: QuadOptions) -> Result<QuadResult> {
    let g = |u: f64| {
        let one_minus = 1.0 - u;
        let x = a + u / one_minus;
        let jac = 1.0 / (one_minus * one_minus);
        let y = f(x) * jac;
        if y.re.is_finite() && y.im.is_finite() {
            y
        } else {
            C64::new(0.0, 0.0)
        }
    };
    integrate(g, 0.0, 1.0, opts)
}

/// `∫_a^∞ f(ω) dω` where `f` oscillates with angular period `2π/t`; the tail is summed
/// over half-period cycles and the partial sums are accelerated with Wynn's epsilon algorithm.
pub fn integrate_oscillatory_tail<F: Fn(f64) -> C64>(
    f: F,
    a: f64,
    t: f64,
    opts: QuadOptions,
) -> Result<QuadResult> {
    if t <= 0.0 {
        return integrate_to_infinity(f, a, opts);
    }
    let cycle = std::f64::consts::PI / t;
    let cycle_opts = QuadOptions {
        rel_tol: opts.rel_tol * 0.1,
        ..opts
    };
    let mut partial = C64::new(0.0, 0.0);
    let mut err_sum = 0.0;
    let mut magnitude = 0.0;
    let mut wynn = Wynn::default();
    let mut last_estimate: Option<C64> = None;
    let mut settled = 0;
    for k in 0..2000 {
        let lo = a + k as f64 * cycle;
        let piece = integrate(&f, lo, lo + cycle, cycle_opts)?;
        partial += piece.value;
        err_sum += piece.error;
        magnitude += piece.magnitude;
        let extrapolated = wynn.push(partial);
        if let Some(prev) = last_estimate {
            let change = (extrapolated - prev).norm();
            let target = opts.abs_tol.max(opts.rel_tol * extrapolated.norm());
            if k >= 6 && change <= target {
                settled += 1;
                if settled >= 3 {
                    return Ok(QuadResult {
                        value: extrapolated,
                        error: change + err_sum,
                        magnitude,
                    });
                }
            } else {
                settled = 0;
            }
        }
        last_estimate = Some(extrapolated);
    }
    let value = last_estimate.unwrap_or(partial);
    Err(Error::Quadrature {
        estimate: (value - partial).norm() + err_sum,
        requested: opts.abs_tol.max(opts.rel_tol * value.norm()),
    })
}

/// Wynn epsilon table over a growing sequence of partial sums.
#[derive(Default)]
struct Wynn {
    // last diagonal of the table, eps_{-1} column omitted
    row: Vec<C64>,
}

impl Wynn {
    fn push(&mut self, s: C64) -> C64 {
        let mut new_row = Vec::with_capacity(self.row.len() + 1);
        new_row.push(s);
        let mut prev_minus = C64::new(0.0, 0.0); // eps_{k-1} of the previous row
        for (k, &old) in self.row.iter().enumerate() {
            let diff = new_row[k] - old;
            let next = if diff.norm() < 1e-300 {
                // stagnation; keep the converged value
                if k % 2 == 0 { new_row[k] } else { C64::new(1e300, 0.0) }
            } else {
                prev_minus + C64::new(1.0, 0.0) / diff
            };
            prev_minus = old;
            new_row.push(next);
        }
        self.row = new_row;
        // best estimate: deepest even column
        let n = self.row.len();
        let deepest_even = if (n - 1) % 2 == 0 { n - 1 } else { n - 2 };
        let v = self.row[deepest_even];
        if v.re.is_finite() && v.im.is_finite() && v.norm() < 1e200 {
            v
        } else {
            s
        }
    }
}
