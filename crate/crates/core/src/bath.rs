//! Spectral densities of linearly coupled Gaussian baths and their correlation functions.
//!
//! `C(t) = ∫ dω J(ω) [coth(ω/2T) cos ωt − i sin ωt]` for `T > 0` and
//! `C(t) = ∫ dω J(ω) e^{−iωt}` in the vacuum. Only zero-mean stationary initial states
//! are modelled, so the single-time mean field vanishes and `C(t+s, s) = C(t)`.

use std::path::Path;

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{self, QuadOptions};

/// Relative accuracy requested from correlation quadratures.
pub const CORRELATION_REL_TOL: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SpectralKind {
    /// `J(ω) = (λ²/π)(γ/2)/((ω−Ω)² + (γ/2)²)` on the whole real line.
    Lorentzian { amplitude: f64, center: f64, width: f64 },
    /// `J(ω) = α ω_c^{1−s} ω^s e^{−ω/ω_c}` for `ω > 0`.
    OhmicExpCutoff { coupling: f64, cutoff: f64, exponent: f64 },
    /// `J(ω) = 2 λ_R ω_D ω / (ω² + ω_D²)` for `ω > 0`.
    Debye { reorganization: f64, cutoff: f64 },
    /// Linear interpolation of `(omega, values)`, zero outside the grid.
    Tabulated { omega: Vec<f64>, values: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralDensity {
    #[serde(flatten)]
    pub kind: SpectralKind,
    #[serde(default)]
    pub temperature: f64,
}

impl SpectralDensity {
    pub fn new(kind: SpectralKind, temperature: f64) -> Result<Self> {
        let sd = Self { kind, temperature };
        sd.validate()?;
        Ok(sd)
    }

    pub fn lorentzian(amplitude: f64, center: f64, width: f64) -> Result<Self> {
        Self::new(SpectralKind::Lorentzian { amplitude, center, width }, 0.0)
    }

    pub fn with_temperature(mut self, temperature: f64) -> Result<Self> {
        self.temperature = temperature;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return bad(format!("temperature must be finite and non-negative, got {}", self.temperature));
        }
        match &self.kind {
            SpectralKind::Lorentzian { amplitude, center, width } => {
                if !(*amplitude >= 0.0) || !center.is_finite() || !(*width > 0.0) {
                    return bad("lorentzian needs amplitude ≥ 0, finite center, width > 0".into());
                }
            }
            SpectralKind::OhmicExpCutoff { coupling, cutoff, exponent } => {
                if !(*coupling >= 0.0) || !(*cutoff > 0.0) || !(*exponent > 0.0) {
                    return bad("ohmic_exp_cutoff needs coupling ≥ 0, cutoff > 0, exponent > 0".into());
                }
            }
            SpectralKind::Debye { reorganization, cutoff } => {
                if !(*reorganization >= 0.0) || !(*cutoff > 0.0) {
                    return bad("debye needs reorganization ≥ 0, cutoff > 0".into());
                }
            }
            SpectralKind::Tabulated { omega, values } => {
                if omega.len() < 2 || omega.len() != values.len() {
                    return bad("tabulated density needs at least two (omega, value) rows".into());
                }
                if omega.windows(2).any(|w| !(w[1] > w[0])) {
                    return bad("tabulated frequencies must be strictly increasing".into());
                }
                if !(omega[0] >= 0.0) {
                    return bad("tabulated frequencies must be non-negative".into());
                }
                if values.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
                    return bad("tabulated values must be finite and non-negative".into());
                }
            }
        }
        Ok(())
    }

    /// Reads a two-column CSV `(frequency, J)`; a non-numeric first row is treated as a header.
    pub fn tabulated_from_csv(path: &Path, temperature: f64) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_path(path)?;
        let mut omega = Vec::new();
        let mut values = Vec::new();
        for (row, record) in reader.records().enumerate() {
            let record = record?;
            if record.len() < 2 {
                return Err(Error::Config(format!("row {row} of {} has fewer than two columns", path.display())));
            }
            let parsed = (record[0].parse::<f64>(), record[1].parse::<f64>());
            match parsed {
                (Ok(w), Ok(j)) => {
                    omega.push(w);
                    values.push(j);
                }
                _ if row == 0 => continue,
                _ => return Err(Error::Config(format!("row {row} of {} is not numeric", path.display()))),
            }
        }
        Self::new(SpectralKind::Tabulated { omega, values }, temperature)
    }

    pub fn j(&self, w: f64) -> f64 {
        match &self.kind {
            SpectralKind::Lorentzian { amplitude, center, width } => {
                let hw = 0.5 * width;
                amplitude * amplitude / std::f64::consts::PI * hw / ((w - center).powi(2) + hw * hw)
            }
            SpectralKind::OhmicExpCutoff { coupling, cutoff, exponent } => {
                if w <= 0.0 {
                    0.0
                } else {
                    coupling * cutoff.powf(1.0 - exponent) * w.powf(*exponent) * (-w / cutoff).exp()
                }
            }
            SpectralKind::Debye { reorganization, cutoff } => {
                if w <= 0.0 {
                    0.0
                } else {
                    2.0 * reorganization * cutoff * w / (w * w + cutoff * cutoff)
                }
            }
            SpectralKind::Tabulated { omega, values } => interpolate(omega, values, w),
        }
    }

    /// Frequency support `(lo, hi)`, possibly infinite.
    pub fn support(&self) -> (f64, f64) {
        match &self.kind {
            SpectralKind::Lorentzian { .. } => (f64::NEG_INFINITY, f64::INFINITY),
            SpectralKind::OhmicExpCutoff { .. } | SpectralKind::Debye { .. } => (0.0, f64::INFINITY),
            SpectralKind::Tabulated { omega, .. } => (omega[0], *omega.last().unwrap()),
        }
    }

    /// Frequency scale used to split quadratures.
    fn scale(&self) -> f64 {
        match &self.kind {
            SpectralKind::Lorentzian { center, width, .. } => center.abs().max(*width),
            SpectralKind::OhmicExpCutoff { cutoff, .. } => *cutoff,
            SpectralKind::Debye { cutoff, .. } => *cutoff,
            SpectralKind::Tabulated { omega, .. } => *omega.last().unwrap(),
        }
    }

    /// The complex integrand of `C(t)` at frequency `w`.
    fn integrand(&self, w: f64, t: f64) -> C64 {
        let j = self.j(w);
        if j == 0.0 {
            return C64::new(0.0, 0.0);
        }
        let phase = C64::new(0.0, -w * t).exp();
        if self.temperature > 0.0 && w > 0.0 {
            let x = w / (2.0 * self.temperature);
            let coth = if x > 20.0 { 1.0 } else { 1.0 / x.tanh() };
            C64::new(j * coth * (w * t).cos(), -j * (w * t).sin())
        } else {
            // vacuum, or the unoccupied negative-frequency side of a Lorentzian
            phase * j
        }
    }

    /// `∫ J(ω) dω` over the support.
    pub fn total_weight(&self) -> Result<f64> {
        match &self.kind {
            SpectralKind::Lorentzian { amplitude, .. } => Ok(amplitude * amplitude),
            SpectralKind::OhmicExpCutoff { coupling, cutoff, exponent } => {
                Ok(coupling * cutoff * cutoff * gamma_fn(exponent + 1.0))
            }
            SpectralKind::Debye { .. } => Err(Error::Quadrature {
                estimate: f64::INFINITY,
                requested: CORRELATION_REL_TOL,
            }),
            SpectralKind::Tabulated { .. } => Ok(self.weight_between(self.support().0, self.support().1)?),
        }
    }

    /// `∫_lo^hi J(ω) dω` by quadrature (finite bounds).
    pub fn weight_between(&self, lo: f64, hi: f64) -> Result<f64> {
        let lo = lo.max(self.support().0);
        let hi = hi.min(self.support().1);
        if hi <= lo {
            return Ok(0.0);
        }
        let breaks = self.breakpoints(lo, hi);
        let mut total = 0.0;
        for w in breaks.windows(2) {
            total += quadrature::integrate(|x| C64::new(self.j(x), 0.0), w[0], w[1], quad_opts())?.value.re;
        }
        Ok(total)
    }

    fn breakpoints(&self, lo: f64, hi: f64) -> Vec<f64> {
        let mut pts = vec![lo];
        match &self.kind {
            SpectralKind::Tabulated { omega, .. } => pts.extend(omega.iter().copied().filter(|&w| w > lo && w < hi)),
            SpectralKind::Lorentzian { center, .. } if *center > lo && *center < hi => pts.push(*center),
            _ => {}
        }
        pts.push(hi);
        pts
    }
}

fn quad_opts() -> QuadOptions {
    QuadOptions {
        rel_tol: CORRELATION_REL_TOL * 0.01,
        abs_tol: 1e-15,
        max_subdivisions: 4000,
    }
}

fn interpolate(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    if x < xs[0] || x > *xs.last().unwrap() {
        return 0.0;
    }
    let k = match xs.binary_search_by(|v| v.total_cmp(&x)) {
        Ok(k) => return ys[k],
        Err(k) => k,
    };
    let (x0, x1) = (xs[k - 1], xs[k]);
    let f = (x - x0) / (x1 - x0);
    ys[k - 1] * (1.0 - f) + ys[k] * f
}

/// Lanczos approximation of Γ(x) for x > 0.
fn gamma_fn(x: f64) -> f64 {
    const G: f64 = 7.0;
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        return std::f64::consts::PI / ((std::f64::consts::PI * x).sin() * gamma_fn(1.0 - x));
    }
    let x = x - 1.0;
    let mut a = COEF[0];
    let t = x + G + 0.5;
    for (i, c) in COEF.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    (2.0 * std::f64::consts::PI).sqrt() * t.powf(x + 0.5) * (-t).exp() * a
}

/// `C(t)`; negative arguments are defined by `C(−t) = C(t)*`.
/// The Lorentzian vacuum case uses the closed form `λ² e^{−iΩt − γ|t|/2}`.
pub fn correlation_analytic(sd: &SpectralDensity, t: f64) -> Result<C64> {
    if !t.is_finite() {
        return Err(Error::NonFinite);
    }
    if t < 0.0 {
        return Ok(correlation_analytic(sd, -t)?.conj());
    }
    if let SpectralKind::Lorentzian { amplitude, center, width } = sd.kind {
        if sd.temperature == 0.0 {
            return Ok(amplitude * amplitude * C64::new(-0.5 * width * t, -center * t).exp());
        }
    }
    correlation_quadrature(sd, t)
}

/// `C(t)` by adaptive quadrature for any kind, `t ≥ 0`.
pub fn correlation_quadrature(sd: &SpectralDensity, t: f64) -> Result<C64> {
    sd.validate()?;
    let (lo, hi) = sd.support();
    let f = |w: f64| sd.integrand(w, t);
    let opts = quad_opts();
    let scale = sd.scale();
    let mut total = C64::new(0.0, 0.0);
    let mut err = 0.0;
    let mut magnitude = 0.0;

    let mut add = |r: quadrature::QuadResult| {
        total += r.value;
        err += r.error;
        magnitude += r.magnitude;
    };

    if hi.is_finite() && lo.is_finite() {
        for w in sd.breakpoints(lo, hi).windows(2) {
            add(quadrature::integrate(f, w[0], w[1], opts)?);
        }
    } else {
        // finite core plus one or two tails
        let (core_lo, core_hi) = match sd.kind {
            SpectralKind::Lorentzian { center, width, .. } => (center - 40.0 * width, center + 40.0 * width),
            _ => (lo, lo + 40.0 * scale),
        };
        let mut pts = vec![core_lo];
        if let SpectralKind::Lorentzian { center, .. } = sd.kind {
            pts.push(center);
        }
        if matches!(sd.kind, SpectralKind::Lorentzian { .. }) && sd.temperature > 0.0 && core_lo < 0.0 && core_hi > 0.0 {
            pts.push(0.0);
        }
        pts.push(core_hi);
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        for w in pts.windows(2) {
            add(quadrature::integrate(f, w[0], w[1], opts)?);
        }
        add(quadrature::integrate_oscillatory_tail(f, core_hi, t, opts)?);
        if lo == f64::NEG_INFINITY {
            let mirrored = |x: f64| f(-x);
            add(quadrature::integrate_oscillatory_tail(mirrored, -core_lo, t, opts)?);
        }
    }
    if !(total.re.is_finite() && total.im.is_finite()) {
        return Err(Error::NonFinite);
    }
    // accuracy relative to ∫|integrand|, which stays meaningful where C(t) itself has decayed
    let requested = CORRELATION_REL_TOL * magnitude.max(total.norm());
    if err > requested.max(1e-15) {
        return Err(Error::Quadrature { estimate: err, requested });
    }
    Ok(total)
}

/// Two-time correlation `C(t+s, s)`; equal to `C(t)` for the stationary models supported here.
pub fn correlation_two_time(sd: &SpectralDensity, t: f64, s: f64) -> Result<C64> {
    if s < 0.0 {
        return Err(Error::InvalidArgument("s must be non-negative".into()));
    }
    correlation_analytic(sd, t)
}

/// `G_E(t)`; zero for zero-mean Gaussian initial states.
pub fn mean_field(_sd: &SpectralDensity, _t: f64) -> C64 {
    C64::new(0.0, 0.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationSeries {
    pub grid: Vec<f64>,
    pub values: Vec<C64>,
    pub channel: (usize, usize),
}

impl CorrelationSeries {
    pub fn new(grid: Vec<f64>, values: Vec<C64>, channel: (usize, usize)) -> Result<Self> {
        validate_grid(&grid)?;
        if grid.len() != values.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} grid points but {} values",
                grid.len(),
                values.len()
            )));
        }
        if values.iter().any(|v| !(v.re.is_finite() && v.im.is_finite())) {
            return Err(Error::NonFinite);
        }
        if channel.0 == channel.1 && values[0].re < -1e-12 * values[0].norm().max(1.0) {
            return Err(Error::InvalidArgument("diagonal correlation has negative real part at t = 0".into()));
        }
        Ok(Self { grid, values, channel })
    }

    /// Reads `(t, Re C, Im C)` rows; a non-numeric first row is treated as a header.
    pub fn from_csv(path: &Path, channel: (usize, usize)) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_path(path)?;
        let mut grid = Vec::new();
        let mut values = Vec::new();
        for (row, record) in reader.records().enumerate() {
            let record = record?;
            let nums: Vec<std::result::Result<f64, _>> = record.iter().map(str::parse::<f64>).collect();
            if nums.len() < 3 || nums.iter().take(3).any(|n| n.is_err()) {
                if row == 0 {
                    continue;
                }
                return Err(Error::Config(format!("row {row} of {} is not `t, re, im`", path.display())));
            }
            grid.push(*nums[0].as_ref().unwrap());
            values.push(C64::new(*nums[1].as_ref().unwrap(), *nums[2].as_ref().unwrap()));
        }
        Self::new(grid, values, channel)
    }
}

pub(crate) fn validate_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("time grid is empty".into()));
    }
    if grid[0] != 0.0 {
        return Err(Error::InvalidArgument(format!("time grid must start at 0, starts at {}", grid[0])));
    }
    if let Some(k) = grid.windows(2).position(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidArgument(format!("time grid not strictly increasing at index {}", k + 1)));
    }
    Ok(())
}

pub fn uniform_grid(t_max: f64, points: usize) -> Result<Vec<f64>> {
    if points < 2 || !(t_max > 0.0) {
        return Err(Error::InvalidArgument("uniform grid needs t_max > 0 and at least two points".into()));
    }
    let dt = t_max / (points - 1) as f64;
    Ok((0..points).map(|k| k as f64 * dt).collect())
}

/// Pointwise [`correlation_analytic`] on `grid` for the diagonal channel `(0, 0)`.
pub fn sample_correlation(sd: &SpectralDensity, grid: &[f64]) -> Result<CorrelationSeries> {
    validate_grid(grid)?;
    let values: Result<Vec<C64>> = grid.par_iter().map(|&t| correlation_analytic(sd, t)).collect();
    CorrelationSeries::new(grid.to_vec(), values?, (0, 0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lorentzian_closed_form() {
        let sd = SpectralDensity::lorentzian(0.7, 1.0, 0.5).unwrap();
        assert!((correlation_analytic(&sd, 0.0).unwrap() - C64::new(0.49, 0.0)).norm() < 1e-15);
        let sd = SpectralDensity::lorentzian(1.0, 2.0, 0.5).unwrap();
        let t = 3.1;
        let expected = C64::new(-0.25 * t, -2.0 * t).exp();
        assert!((correlation_analytic(&sd, t).unwrap() - expected).norm() < 1e-15);
    }

    #[test]
    fn lorentzian_quadrature_matches_closed_form() {
        let sd = SpectralDensity::lorentzian(1.0, 2.0, 0.5).unwrap();
        let gamma = 0.5;
        for k in 0..=20 {
            let t = k as f64 * (20.0 / gamma) / 20.0;
            let q = correlation_quadrature(&sd, t).unwrap();
            let c = correlation_analytic(&sd, t).unwrap();
            assert!((q - c).norm() < 1e-8, "t={t} diff {}", (q - c).norm());
        }
    }

    #[test]
    fn negative_times_conjugate() {
        let sd = SpectralDensity::lorentzian(0.4, 1.0, 0.3).unwrap();
        let a = correlation_analytic(&sd, -1.7).unwrap();
        let b = correlation_analytic(&sd, 1.7).unwrap();
        assert_eq!(a, b.conj());
    }

    #[test]
    fn ohmic_total_weight() {
        let (alpha, wc) = (0.05, 2.0);
        let sd = SpectralDensity::new(
            SpectralKind::OhmicExpCutoff { coupling: alpha, cutoff: wc, exponent: 1.0 },
            0.0,
        )
        .unwrap();
        let c0 = correlation_analytic(&sd, 0.0).unwrap();
        assert!((c0.re - alpha * wc * wc).abs() < 1e-8 * alpha * wc * wc);
        assert!(c0.im.abs() < 1e-12);
        // J = α ω e^{−ω/ωc}: C(t) = α ωc² / (1 + i ωc t)²
        let t = 0.8;
        let exact = alpha * wc * wc / (C64::new(1.0, wc * t) * C64::new(1.0, wc * t));
        let got = correlation_analytic(&sd, t).unwrap();
        assert!((got - exact).norm() < 1e-8 * exact.norm());
    }

    #[test]
    fn debye_equal_time_diverges() {
        let sd = SpectralDensity::new(SpectralKind::Debye { reorganization: 0.1, cutoff: 1.0 }, 0.0).unwrap();
        assert!(matches!(correlation_analytic(&sd, 0.0), Err(Error::Quadrature { .. })));
        assert!(correlation_analytic(&sd, 1.0).is_ok());
    }

    #[test]
    fn small_temperature_limit() {
        let vac = SpectralDensity::new(SpectralKind::OhmicExpCutoff { coupling: 0.1, cutoff: 1.0, exponent: 1.0 }, 0.0).unwrap();
        let cold = vac.clone().with_temperature(1e-8).unwrap();
        for t in [0.0, 0.5, 2.0, 5.0] {
            let a = correlation_analytic(&vac, t).unwrap();
            let b = correlation_analytic(&cold, t).unwrap();
            assert!((a - b).norm() < 1e-5);
        }
        let lor = SpectralDensity::lorentzian(0.3, 1.0, 0.5).unwrap();
        let lor_cold = lor.clone().with_temperature(1e-8).unwrap();
        for t in [0.0, 1.0, 3.0] {
            let a = correlation_analytic(&lor, t).unwrap();
            let b = correlation_analytic(&lor_cold, t).unwrap();
            assert!((a - b).norm() < 1e-5);
        }
    }

    #[test]
    fn thermal_correlation_has_larger_real_part() {
        let sd = SpectralDensity::new(SpectralKind::OhmicExpCutoff { coupling: 0.1, cutoff: 1.0, exponent: 1.0 }, 0.0).unwrap();
        let hot = sd.clone().with_temperature(1.0).unwrap();
        let c0 = correlation_analytic(&sd, 0.0).unwrap().re;
        let h0 = correlation_analytic(&hot, 0.0).unwrap().re;
        assert!(h0 > c0);
    }

    #[test]
    fn sampling_and_mean_field() {
        let sd = SpectralDensity::lorentzian(0.5, 1.0, 0.2).unwrap();
        let s = sample_correlation(&sd, &[0.0, 1.0]).unwrap();
        assert!((s.values[0] - C64::new(0.25, 0.0)).norm() < 1e-15);
        assert!((s.values[1] - 0.25 * C64::new(-0.1, -1.0).exp()).norm() < 1e-15);
        assert!(sample_correlation(&sd, &[]).is_err());
        assert_eq!(mean_field(&sd, 1.3), C64::new(0.0, 0.0));
        assert_eq!(mean_field(&sd, 0.0), C64::new(0.0, 0.0));
    }

    #[test]
    fn tabulated_lorentzian_matches() {
        let (lam, om, gam) = (0.5, 3.0, 0.5);
        let lor = SpectralDensity::lorentzian(lam, om, gam).unwrap();
        // dense table over a wide window; weight outside it is corrected for analytically
        let lo = 0.0;
        let hi = 60.0;
        let n = 60001;
        let omega: Vec<f64> = (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect();
        let values: Vec<f64> = omega.iter().map(|&w| lor.j(w)).collect();
        let tab = SpectralDensity::new(SpectralKind::Tabulated { omega, values }, 0.0).unwrap();
        for t in [0.0, 0.5, 2.0] {
            // closed form minus the analytic-J weight outside the table
            let outside = correlation_analytic(&lor, t).unwrap() - window_part(&lor, t, lo, hi);
            let expected = correlation_analytic(&lor, t).unwrap() - outside;
            let got = correlation_analytic(&tab, t).unwrap();
            assert!((got - expected).norm() < 1e-6, "t={t}: {}", (got - expected).norm());
        }
    }

    fn window_part(sd: &SpectralDensity, t: f64, lo: f64, hi: f64) -> C64 {
        quadrature::integrate(|w| sd.integrand(w, t), lo, hi, QuadOptions::default()).unwrap().value
    }

    #[test]
    fn tabulated_csv_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("j.csv");
        std::fs::write(&path, "omega,J\n0.0,0.0\n1.0,2.0\n2.0,0.0\n").unwrap();
        let sd = SpectralDensity::tabulated_from_csv(&path, 0.0).unwrap();
        assert!((sd.j(0.5) - 1.0).abs() < 1e-15);
        assert_eq!(sd.j(2.5), 0.0);
        assert!((sd.total_weight().unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn parameter_validation() {
        assert!(SpectralDensity::lorentzian(0.1, 1.0, 0.0).is_err());
        assert!(SpectralDensity::lorentzian(-0.1, 1.0, 0.5).is_err());
        assert!(SpectralDensity::new(SpectralKind::Debye { reorganization: 0.1, cutoff: 0.0 }, 0.0).is_err());
        assert!(SpectralDensity::lorentzian(0.1, 1.0, 0.5).unwrap().with_temperature(-1.0).is_err());
    }

    #[test]
    fn gamma_function_values() {
        assert!((gamma_fn(1.0) - 1.0).abs() < 1e-13);
        assert!((gamma_fn(5.0) - 24.0).abs() < 1e-11);
        assert!((gamma_fn(0.5) - std::f64::consts::PI.sqrt()).abs() < 1e-13);
    }
}
