//! Brute-force references: a discretized bosonic continuum evolved unitarily together with
//! the system, and the flat-coupling dilation of the pseudomode configuration.
//!
//! Continuum modes live in an excitation-capped Fock sector: all occupation patterns with at
//! most `K` quanta in total. The dilated state is a vector on `core ⊗ sector`, where the core
//! is S (physical bath), S ⊗ B (dilation) or B alone (free dilation).

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::Serialize;

use crate::algebra::{kron, trace_distance, OperatorMatrix, SpaceLayout};
use crate::bath::{correlation_analytic, uniform_grid, CorrelationSeries, SpectralDensity};
use crate::error::{Error, Result};
use crate::fitting::{matrix_pencil_fit, to_pseudomodes, ExponentialSum};
use crate::gkls::{free_bath_two_time, BathState, GklsModel, HamiltonianSegment, PseudoMode, SystemModel};
use crate::multitime::{multitime_gkls, MultiTimeRequest, Propagator};
use crate::sparse::{self, CsrMatrix};

pub const DEFAULT_DIMENSION_CAP: usize = 1 << 14;
/// Fraction of spectral weight a discretization window may miss.
pub const DEFAULT_MASS_TOL: f64 = 1e-3;
pub const DEFAULT_EXCITATION_CAP: usize = 2;
/// Bound on the population of the highest excitation level of the sector.
pub const DEFAULT_SECTOR_TRUNCATION_TOL: f64 = 1e-2;
pub const SAFETY_FACTOR: f64 = 10.0;
const MAX_THERMAL_COMPONENTS: usize = 4096;
const COMPONENT_CUTOFF: f64 = 1e-14;

// ---------------------------------------------------------------------------
// Fock sector

/// Occupation patterns of `num_modes` bosonic modes with at most `cap` quanta in total,
/// ordered by excitation number. Index 0 is the vacuum.
#[derive(Clone, Debug)]
pub struct FockSector {
    num_modes: usize,
    cap: usize,
    // sorted multisets of excited mode indices
    states: Vec<Vec<u32>>,
    index: HashMap<Vec<u32>, u32>,
    level_start: Vec<usize>,
}

fn multiset_count(n: usize, k: usize) -> f64 {
    // C(n + k − 1, k)
    if k == 0 {
        return 1.0;
    }
    if n == 0 {
        return 0.0;
    }
    (0..k).fold(1.0, |acc, i| acc * (n + i) as f64 / (i + 1) as f64)
}

impl FockSector {
    pub fn new(num_modes: usize, cap: usize, max_states: usize) -> Result<Self> {
        let count: f64 = (0..=cap).map(|k| multiset_count(num_modes, k)).sum();
        if count > max_states as f64 {
            return Err(Error::ResourceCap {
                what: "Fock sector states",
                value: count.min(usize::MAX as f64) as usize,
                cap: max_states,
            });
        }
        if count > u32::MAX as f64 {
            return Err(Error::ResourceCap {
                what: "Fock sector states",
                value: count as usize,
                cap: u32::MAX as usize,
            });
        }
        let mut states: Vec<Vec<u32>> = vec![Vec::new()];
        let mut level_start = vec![0, 1];
        for _ in 1..=cap {
            let (lo, hi) = (level_start[level_start.len() - 2], level_start[level_start.len() - 1]);
            for i in lo..hi {
                let first = states[i].last().copied().unwrap_or(0);
                for m in first..num_modes as u32 {
                    let mut s = states[i].clone();
                    s.push(m);
                    states.push(s);
                }
            }
            level_start.push(states.len());
        }
        let index = states.iter().enumerate().map(|(i, s)| (s.clone(), i as u32)).collect();
        Ok(Self { num_modes, cap, states, index, level_start })
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }
    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
    pub fn cap(&self) -> usize {
        self.cap
    }
    pub fn num_modes(&self) -> usize {
        self.num_modes
    }
    pub fn state(&self, i: usize) -> &[u32] {
        &self.states[i]
    }
    pub fn excitations(&self, i: usize) -> usize {
        self.states[i].len()
    }
    pub fn index_of(&self, occupied: &[u32]) -> Option<usize> {
        let mut key = occupied.to_vec();
        key.sort_unstable();
        self.index.get(&key).map(|&i| i as usize)
    }

    /// States holding exactly `k` quanta.
    pub fn level(&self, k: usize) -> std::ops::Range<usize> {
        if k > self.cap {
            return 0..0;
        }
        self.level_start[k]..self.level_start[k + 1]
    }

    /// `b_m†|s⟩ = √(n_m + 1)|s′⟩`, `None` at the cap.
    pub fn raised(&self, i: usize, m: u32) -> Option<(usize, f64)> {
        let s = &self.states[i];
        if s.len() >= self.cap {
            return None;
        }
        let count = s.iter().filter(|&&x| x == m).count();
        let pos = s.partition_point(|&x| x <= m);
        let mut up = Vec::with_capacity(s.len() + 1);
        up.extend_from_slice(&s[..pos]);
        up.push(m);
        up.extend_from_slice(&s[pos..]);
        self.index.get(&up).map(|&j| (j as usize, ((count + 1) as f64).sqrt()))
    }

    /// Non-zero lowerings `b_m|s⟩ = √n_m |s′⟩` as `(m, s′, √n_m)`.
    pub fn lowered(&self, i: usize) -> Vec<(u32, usize, f64)> {
        let s = &self.states[i];
        let mut out = Vec::new();
        let mut k = 0;
        while k < s.len() {
            let m = s[k];
            let count = s[k..].iter().take_while(|&&x| x == m).count();
            let mut down = s.clone();
            down.remove(k);
            out.push((m, self.index[&down] as usize, (count as f64).sqrt()));
            k += count;
        }
        out
    }
}

// ---------------------------------------------------------------------------
// Discretized baths

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DiscreteMode {
    pub omega: f64,
    pub g: f64,
    pub channel: usize,
}

#[derive(Clone, Debug)]
pub enum BathSource {
    /// Midpoint sampling of a spectral density over a window.
    SpectralDensity { density: SpectralDensity, window: (f64, f64) },
    /// Flat coupling over `[−halfwidth, halfwidth]`, one band per Lindblad channel.
    FlatWindow { halfwidth: f64, rates: Vec<f64> },
}

#[derive(Clone, Debug)]
pub struct DiscretizedBath {
    modes: Vec<DiscreteMode>,
    excitation_cap: usize,
    source: BathSource,
}

impl DiscretizedBath {
    pub fn new(modes: Vec<DiscreteMode>, excitation_cap: usize, source: BathSource) -> Result<Self> {
        for (k, m) in modes.iter().enumerate() {
            if !(m.g >= 0.0) || !m.g.is_finite() || !m.omega.is_finite() {
                return Err(Error::InvalidArgument(format!("mode {k}: couplings must be finite and ≥ 0")));
            }
        }
        let channels = modes.iter().map(|m| m.channel).max().map_or(0, |c| c + 1);
        for c in 0..channels {
            let w: Vec<f64> = modes.iter().filter(|m| m.channel == c).map(|m| m.omega).collect();
            if w.windows(2).any(|p| !(p[1] > p[0])) {
                return Err(Error::InvalidArgument(format!("channel {c}: frequencies must increase strictly")));
            }
        }
        Ok(Self { modes, excitation_cap, source })
    }

    pub fn modes(&self) -> &[DiscreteMode] {
        &self.modes
    }
    pub fn excitation_cap(&self) -> usize {
        self.excitation_cap
    }
    pub fn source(&self) -> &BathSource {
        &self.source
    }

    pub fn with_excitation_cap(&self, cap: usize) -> Self {
        Self { excitation_cap: cap, ..self.clone() }
    }

    /// Smallest frequency spacing within a channel.
    pub fn spacing(&self) -> Option<f64> {
        let channels = self.modes.iter().map(|m| m.channel).max().map_or(0, |c| c + 1);
        (0..channels)
            .flat_map(|c| {
                let w: Vec<f64> = self.modes.iter().filter(|m| m.channel == c).map(|m| m.omega).collect();
                w.windows(2).map(|p| p[1] - p[0]).collect::<Vec<_>>()
            })
            .min_by(f64::total_cmp)
    }

    /// `2π/Δω`; discretized dynamics is faithful only well before this time.
    pub fn recurrence_time(&self) -> f64 {
        self.spacing().map_or(f64::INFINITY, |d| 2.0 * PI / d)
    }

    /// `Σ_m g_m² [(n_m+1) e^{−iω_m t} + n_m e^{iω_m t}]` over the modes of `channel`.
    pub fn correlation(&self, channel: usize, t: f64, temperature: f64) -> C64 {
        self.modes
            .iter()
            .filter(|m| m.channel == channel)
            .map(|m| {
                let n = occupation(m.omega, temperature);
                let g2 = m.g * m.g;
                C64::new(0.0, -m.omega * t).exp() * (g2 * (n + 1.0)) + C64::new(0.0, m.omega * t).exp() * (g2 * n)
            })
            .sum()
    }
}

fn occupation(omega: f64, temperature: f64) -> f64 {
    if temperature > 0.0 && omega > 0.0 {
        1.0 / (omega / temperature).exp_m1()
    } else {
        0.0
    }
}

/// Midpoint nodes `ω_m` on `window` with `g_m = √(J(ω_m)Δω)`, all on channel 0.
pub fn discretize_spectral_density(
    sd: &SpectralDensity,
    window: (f64, f64),
    modes: usize,
    excitation_cap: usize,
    mass_tol: f64,
) -> Result<DiscretizedBath> {
    if modes < 2 {
        return Err(Error::InvalidArgument(format!("need at least two modes, got {modes}")));
    }
    let (lo, hi) = window;
    if !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::InvalidArgument("discretization window must be finite and non-empty".into()));
    }
    match sd.total_weight() {
        Ok(total) if total > 0.0 => {
            let inside = sd.weight_between(lo, hi)?;
            let fraction = inside / total;
            if fraction < 1.0 - mass_tol {
                return Err(Error::WindowTooNarrow { fraction, required: 1.0 - mass_tol });
            }
        }
        Ok(_) => {}
        Err(_) => log::warn!("spectral weight is not finite; window mass check skipped"),
    }
    let dw = (hi - lo) / modes as f64;
    let list = (0..modes)
        .map(|m| {
            let omega = lo + (m as f64 + 0.5) * dw;
            DiscreteMode { omega, g: (sd.j(omega).max(0.0) * dw).sqrt(), channel: 0 }
        })
        .collect();
    DiscretizedBath::new(
        list,
        excitation_cap,
        BathSource::SpectralDensity { density: sd.clone(), window },
    )
}

/// Sup-norm of `C_disc − C` on `points` uniform times in `[0, t_max]`.
pub fn correlation_sup_error(bath: &DiscretizedBath, sd: &SpectralDensity, t_max: f64, points: usize) -> Result<f64> {
    let grid = uniform_grid(t_max, points)?;
    let errs: Result<Vec<f64>> = grid
        .par_iter()
        .map(|&t| Ok((bath.correlation(0, t, sd.temperature) - correlation_analytic(sd, t)?).norm()))
        .collect();
    Ok(errs?.into_iter().fold(0.0, f64::max))
}

/// `∫₀^T (T−u) f(u) du` on a grid fine enough for oscillations up to `max_frequency`.
fn kernel_integral<F: Fn(f64) -> Result<f64> + Sync>(f: F, t_max: f64, max_frequency: f64) -> Result<f64> {
    if t_max <= 0.0 {
        return Ok(0.0);
    }
    let per_period = 24.0;
    let n = ((t_max * max_frequency / (2.0 * PI) * per_period).ceil() as usize).clamp(2000, 400_000);
    let h = t_max / n as f64;
    let values: Result<Vec<f64>> = (0..=n).into_par_iter().map(|k| f(k as f64 * h)).collect();
    let values = values?;
    let mut acc = 0.0;
    for (k, v) in values.iter().enumerate() {
        let w = if k == 0 || k == n { 0.5 } else { 1.0 };
        acc += w * (t_max - k as f64 * h) * v;
    }
    Ok(acc * h)
}

fn operator_norm(a: &OperatorMatrix) -> f64 {
    let (vals, _) = a.dagger().matmul(a).hermitian_eigen();
    vals.last().copied().unwrap_or(0.0).max(0.0).sqrt()
}

/// Second-order estimate `4 Σ_j ‖A_j‖² ∫₀^T (T−u)|δC(u)| du` of how a correlation error
/// `δC` propagates into multi-time quantities up to time `T`.
pub fn second_order_error_estimate<F: Fn(f64) -> Result<f64> + Sync>(
    coupling_norm_sq: f64,
    delta_c: F,
    t_max: f64,
    max_frequency: f64,
) -> Result<f64> {
    Ok(4.0 * coupling_norm_sq * kernel_integral(delta_c, t_max, max_frequency)?)
}

// ---------------------------------------------------------------------------
// Unitary configurations

/// Core Hamiltonian schedule, channel operators `Q_j` with coupling
/// `Σ_m g_m (Q_j ⊗ b_m† + Q_j† ⊗ b_m)`, a discretized bath and the initial state.
#[derive(Clone, Debug)]
pub struct UnitaryConfig {
    core_layout: SpaceLayout,
    system_dim: usize,
    core: SystemModel,
    channel_ops: Vec<OperatorMatrix>,
    bath: DiscretizedBath,
    initial_core: OperatorMatrix,
    initial_bath: BathState,
    dimension_cap: usize,
    truncation_tol: f64,
}

impl UnitaryConfig {
    /// Physical configuration: `H_S(t) + Σ_m ω_m b_m†b_m + Σ_m g_m A_{j(m)} ⊗ (b_m + b_m†)`.
    pub fn physical(
        system: &SystemModel,
        bath: DiscretizedBath,
        initial_system: OperatorMatrix,
        initial_bath: BathState,
    ) -> Result<Self> {
        let layout = SpaceLayout::from_pairs([("S", system.dim())])?;
        Self::general(
            layout,
            system.dim(),
            system.schedule().to_vec(),
            system.couplings().to_vec(),
            bath,
            initial_system,
            initial_bath,
        )
    }

    pub(crate) fn general(
        core_layout: SpaceLayout,
        system_dim: usize,
        schedule: Vec<HamiltonianSegment>,
        channel_ops: Vec<OperatorMatrix>,
        bath: DiscretizedBath,
        initial_core: OperatorMatrix,
        initial_bath: BathState,
    ) -> Result<Self> {
        let d = core_layout.total_dim();
        if d % system_dim != 0 {
            return Err(Error::DimensionMismatch("system factor does not divide the core".into()));
        }
        let core = SystemModel::new(d, schedule, vec![])?;
        if channel_ops.iter().any(|q| q.dim() != d) {
            return Err(Error::DimensionMismatch("channel operator dimension".into()));
        }
        if let Some(m) = bath.modes.iter().find(|m| m.channel >= channel_ops.len()) {
            return Err(Error::InvalidArgument(format!(
                "mode at ω = {} refers to channel {} of {}",
                m.omega,
                m.channel,
                channel_ops.len()
            )));
        }
        if initial_core.dim() != d {
            return Err(Error::DimensionMismatch("initial core state dimension".into()));
        }
        let cfg = Self {
            core_layout,
            system_dim,
            core,
            channel_ops,
            bath,
            initial_core,
            initial_bath,
            dimension_cap: DEFAULT_DIMENSION_CAP,
            truncation_tol: DEFAULT_SECTOR_TRUNCATION_TOL,
        };
        cfg.check_initial_core(&cfg.initial_core)?;
        Ok(cfg)
    }

    fn check_initial_core(&self, rho: &OperatorMatrix) -> Result<()> {
        crate::algebra::DensityMatrix::new(self.core_layout.clone(), rho.clone()).map(|_| ())
    }

    pub fn with_dimension_cap(mut self, cap: usize) -> Self {
        self.dimension_cap = cap;
        self
    }

    pub fn with_truncation_tol(mut self, tol: f64) -> Self {
        self.truncation_tol = tol;
        self
    }

    pub fn with_initial_core(mut self, rho: OperatorMatrix) -> Result<Self> {
        self.check_initial_core(&rho)?;
        self.initial_core = rho;
        Ok(self)
    }

    pub fn with_excitation_cap(&self, cap: usize) -> Self {
        Self { bath: self.bath.with_excitation_cap(cap), ..self.clone() }
    }

    pub fn core_layout(&self) -> &SpaceLayout {
        &self.core_layout
    }
    pub fn bath(&self) -> &DiscretizedBath {
        &self.bath
    }
    pub fn dimension_cap(&self) -> usize {
        self.dimension_cap
    }
    pub fn core_dim(&self) -> usize {
        self.core_layout.total_dim()
    }

    /// Total Hilbert-space dimension, without building anything.
    pub fn dimension(&self) -> f64 {
        let sector: f64 = (0..=self.bath.excitation_cap)
            .map(|k| multiset_count(self.bath.modes.len(), k))
            .sum();
        sector * self.core_dim() as f64
    }

    /// System operator embedded in the core as `O ⊗ 𝟙`.
    fn embed_system(&self, op: &OperatorMatrix) -> Result<OperatorMatrix> {
        if op.dim() != self.system_dim {
            return Err(Error::DimensionMismatch(format!(
                "operator of dimension {} for a system of dimension {}",
                op.dim(),
                self.system_dim
            )));
        }
        Ok(kron(op, &OperatorMatrix::identity(self.core_dim() / self.system_dim)))
    }
}

/// Vector-based evolution on `core ⊗ sector`.
struct UnitaryEngine<'a> {
    cfg: &'a UnitaryConfig,
    sector: FockSector,
    hamiltonians: Vec<Arc<CsrMatrix>>,
}

impl<'a> UnitaryEngine<'a> {
    fn new(cfg: &'a UnitaryConfig) -> Result<Self> {
        let d = cfg.core_dim();
        let dimension = cfg.dimension();
        if dimension > cfg.dimension_cap as f64 {
            return Err(Error::ResourceCap {
                what: "oracle dimension",
                value: dimension.min(usize::MAX as f64) as usize,
                cap: cfg.dimension_cap,
            });
        }
        let sector = FockSector::new(cfg.bath.modes.len(), cfg.bath.excitation_cap, cfg.dimension_cap / d)?;
        let mut engine = Self { cfg, sector, hamiltonians: Vec::new() };
        for seg in 0..cfg.core.schedule().len() {
            let h = engine.build_hamiltonian(seg)?;
            engine.hamiltonians.push(Arc::new(h));
        }
        Ok(engine)
    }

    fn dim(&self) -> usize {
        self.cfg.core_dim() * self.sector.len()
    }

    fn build_hamiltonian(&self, segment: usize) -> Result<CsrMatrix> {
        let cfg = self.cfg;
        let d = cfg.core_dim();
        let n = self.sector.len();
        let h_core = &cfg.core.schedule()[segment].hamiltonian;
        let modes = &cfg.bath.modes;
        let nz = |op: &OperatorMatrix, i: usize| -> Vec<(usize, C64)> {
            (0..d).filter_map(|k| (op[(i, k)] != C64::new(0.0, 0.0)).then(|| (k, op[(i, k)]))).collect()
        };
        let energies: Vec<f64> = (0..n)
            .into_par_iter()
            .map(|s| self.sector.state(s).iter().map(|&m| modes[m as usize].omega).sum())
            .collect();
        let raise: Vec<Vec<(u32, usize, f64)>> = (0..n)
            .into_par_iter()
            .map(|s| {
                if self.sector.excitations(s) >= self.sector.cap() {
                    return Vec::new();
                }
                (0..modes.len() as u32)
                    .filter_map(|m| self.sector.raised(s, m).map(|(j, f)| (m, j, f)))
                    .collect()
            })
            .collect();
        let lower: Vec<Vec<(u32, usize, f64)>> = (0..n).into_par_iter().map(|s| self.sector.lowered(s)).collect();

        let blocks: Vec<(Vec<usize>, Vec<u32>, Vec<C64>)> = (0..d)
            .into_par_iter()
            .map(|i| {
                let h_row = nz(h_core, i);
                let q_rows: Vec<Vec<(usize, C64)>> = cfg.channel_ops.iter().map(|q| nz(q, i)).collect();
                let qd_rows: Vec<Vec<(usize, C64)>> = cfg.channel_ops.iter().map(|q| nz(&q.dagger(), i)).collect();
                let mut lengths = Vec::with_capacity(n);
                let mut indices = Vec::new();
                let mut data = Vec::new();
                let mut row: Vec<(usize, C64)> = Vec::new();
                for s in 0..n {
                    row.clear();
                    for &(k, v) in &h_row {
                        row.push((k * n + s, v));
                    }
                    row.push((i * n + s, C64::new(energies[s], 0.0)));
                    // Q ⊗ b†: row (i, s) reads (k, s − m)
                    for &(m, s_low, f) in &lower[s] {
                        let mode = &modes[m as usize];
                        for &(k, q) in &q_rows[mode.channel] {
                            row.push((k * n + s_low, q * (mode.g * f)));
                        }
                    }
                    // Q† ⊗ b: row (i, s) reads (k, s + m)
                    for &(m, s_up, f) in &raise[s] {
                        let mode = &modes[m as usize];
                        for &(k, q) in &qd_rows[mode.channel] {
                            row.push((k * n + s_up, q * (mode.g * f)));
                        }
                    }
                    row.sort_unstable_by_key(|e| e.0);
                    let start = indices.len();
                    for &(col, v) in row.iter() {
                        if indices.len() > start && *indices.last().unwrap() as usize == col {
                            *data.last_mut().unwrap() += v;
                        } else {
                            indices.push(col as u32);
                            data.push(v);
                        }
                    }
                    lengths.push(indices.len() - start);
                }
                (lengths, indices, data)
            })
            .collect();
        let dim = d * n;
        if dim > u32::MAX as usize {
            return Err(Error::ResourceCap { what: "sparse dimension", value: dim, cap: u32::MAX as usize });
        }
        let nnz: usize = blocks.iter().map(|b| b.1.len()).sum();
        let mut indptr = Vec::with_capacity(dim + 1);
        indptr.push(0);
        let mut indices = Vec::with_capacity(nnz);
        let mut data = Vec::with_capacity(nnz);
        for (lengths, idx, val) in blocks {
            for l in lengths {
                indptr.push(indptr.last().unwrap() + l);
            }
            indices.extend(idx);
            data.extend(val);
        }
        Ok(CsrMatrix::from_raw_parts(dim, indptr, indices, data))
    }

    fn evolve(&self, v: &[C64], t_from: f64, t_to: f64) -> Result<Vec<C64>> {
        let mut out = v.to_vec();
        for (seg, a, b) in self.cfg.core.pieces(t_from, t_to) {
            out = sparse::expmv_hermitian(&self.hamiltonians[seg], b - a, &out)?;
        }
        Ok(out)
    }

    /// `(O ⊗ 𝟙_sector) v` for an operator on the core.
    fn apply_core(&self, op: &OperatorMatrix, v: &[C64]) -> Vec<C64> {
        let d = self.cfg.core_dim();
        let n = self.sector.len();
        let mut out = vec![C64::new(0.0, 0.0); d * n];
        out.par_chunks_mut(n).enumerate().for_each(|(i, block)| {
            for k in 0..d {
                let o = op[(i, k)];
                if o == C64::new(0.0, 0.0) {
                    continue;
                }
                let src = &v[k * n..(k + 1) * n];
                for (x, y) in block.iter_mut().zip(src) {
                    *x += o * y;
                }
            }
        });
        out
    }

    /// `Tr_sector |v⟩⟨v|` on the core.
    fn reduced_core(&self, v: &[C64]) -> OperatorMatrix {
        let d = self.cfg.core_dim();
        let n = self.sector.len();
        OperatorMatrix::from_fn(d, |i, j| {
            v[i * n..(i + 1) * n].iter().zip(&v[j * n..(j + 1) * n]).map(|(a, b)| a * b.conj()).sum()
        })
    }

    /// Weight of `v` on the highest excitation level.
    fn top_population(&self, v: &[C64]) -> f64 {
        if self.sector.num_modes() == 0 || self.sector.cap() == 0 {
            return 0.0;
        }
        let n = self.sector.len();
        let top = self.sector.level(self.sector.cap());
        (0..self.cfg.core_dim())
            .map(|i| v[i * n + top.start..i * n + top.end].iter().map(|z| z.norm_sqr()).sum::<f64>())
            .sum()
    }

    fn check_truncation(&self, v: &[C64], weight: f64) -> Result<f64> {
        let pop = self.top_population(v) / weight.max(f64::MIN_POSITIVE);
        if pop > self.cfg.truncation_tol {
            return Err(Error::TruncationBreach {
                label: "E".into(),
                population: pop,
                tolerance: self.cfg.truncation_tol,
            });
        }
        Ok(pop)
    }

    /// Pure components `(p, ψ)` of the initial state.
    fn initial_components(&self) -> Result<Vec<(f64, Vec<C64>)>> {
        let n = self.sector.len();
        let d = self.cfg.core_dim();
        let (vals, vecs) = self.cfg.initial_core.hermitian_eigen();
        let core: Vec<(f64, Vec<C64>)> = vals
            .iter()
            .enumerate()
            .filter(|(_, &p)| p > COMPONENT_CUTOFF)
            .map(|(a, &p)| (p, (0..d).map(|i| vecs[(i, a)]).collect()))
            .collect();
        let bath: Vec<(f64, usize)> = match self.cfg.initial_bath {
            BathState::Vacuum => vec![(1.0, 0)],
            BathState::Thermal { temperature } => {
                let modes = &self.cfg.bath.modes;
                let mut w: Vec<(f64, usize)> = (0..n)
                    .map(|s| {
                        let p = self.sector.state(s).iter().fold(1.0, |acc, &m| {
                            let om = modes[m as usize].omega;
                            acc * if temperature > 0.0 && om > 0.0 { (-om / temperature).exp() } else { 0.0 }
                        });
                        (p, s)
                    })
                    .filter(|(p, _)| *p > COMPONENT_CUTOFF)
                    .collect();
                let z: f64 = w.iter().map(|x| x.0).sum();
                w.iter_mut().for_each(|x| x.0 /= z);
                w
            }
        };
        if core.len() * bath.len() > MAX_THERMAL_COMPONENTS {
            return Err(Error::ResourceCap {
                what: "initial-state components",
                value: core.len() * bath.len(),
                cap: MAX_THERMAL_COMPONENTS,
            });
        }
        let mut out = Vec::with_capacity(core.len() * bath.len());
        for (p, psi) in &core {
            for &(q, s) in &bath {
                let mut v = vec![C64::new(0.0, 0.0); d * n];
                for i in 0..d {
                    v[i * n + s] = psi[i];
                }
                out.push((p * q, v));
            }
        }
        Ok(out)
    }

    /// `Σ_a p_a ⟨φ_R|φ_L⟩` with `φ_L = O_n U_n ⋯ O_1 U_1 ψ_a` and `φ_R = O′_n† U_n ⋯ O′_1† U_1 ψ_a`.
    /// Operators act on the core. Returns the value and the largest top-level population met.
    fn multitime(&self, times: &[f64], left: &[OperatorMatrix], right: &[OperatorMatrix]) -> Result<(C64, f64)> {
        let right_dag: Vec<OperatorMatrix> = right.iter().map(|o| o.dagger()).collect();
        let mut total = C64::new(0.0, 0.0);
        let mut worst = 0.0f64;
        for (p, psi) in self.initial_components()? {
            let mut a = psi.clone();
            let mut b = psi;
            let mut t_prev = 0.0;
            for k in 0..times.len() {
                a = self.evolve(&a, t_prev, times[k])?;
                b = self.evolve(&b, t_prev, times[k])?;
                if k == 0 {
                    worst = worst.max(self.check_truncation(&a, 1.0)?);
                }
                t_prev = times[k];
                a = self.apply_core(&left[k], &a);
                b = self.apply_core(&right_dag[k], &b);
            }
            total += b.iter().zip(&a).map(|(x, y)| x.conj() * y).sum::<C64>() * p;
        }
        Ok((total, worst))
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct UnitaryOutcome {
    pub value: C64,
    /// Extrapolated effect of the excitation cap, from runs at lower caps.
    pub truncation_estimate: f64,
    /// Second-order effect of the correlation-function mismatch (spectral-density baths).
    pub discretization_estimate: Option<f64>,
    pub dimension: usize,
    pub top_population: f64,
}

/// Geometric-tail estimate from values at caps `K−2, K−1, K` (oldest first).
fn truncation_tail(values: &[C64]) -> f64 {
    match values {
        [.., v1, v2] if values.len() >= 3 => {
            let v0 = values[values.len() - 3];
            let (d1, d2) = ((v1 - v0).norm(), (v2 - v1).norm());
            if d2 == 0.0 {
                0.0
            } else if d2 < d1 {
                let r = d2 / d1;
                d2 * r / (1.0 - r)
            } else {
                log::warn!("excitation-cap sequence is not contracting ({d1:.2e} → {d2:.2e})");
                d2
            }
        }
        [v1, v2] => (v2 - v1).norm(),
        _ => 0.0,
    }
}

fn core_multitime(cfg: &UnitaryConfig, times: &[f64], left: &[OperatorMatrix], right: &[OperatorMatrix]) -> Result<UnitaryOutcome> {
    let engine = UnitaryEngine::new(cfg)?;
    let (value, top) = engine.multitime(times, left, right)?;
    let cap = cfg.bath.excitation_cap;
    let truncation_estimate = if cfg.bath.modes.is_empty() || cap == 0 {
        0.0
    } else {
        let mut seq = Vec::new();
        for k in cap.saturating_sub(2)..cap {
            let lower = cfg.with_excitation_cap(k).with_truncation_tol(f64::INFINITY);
            seq.push(UnitaryEngine::new(&lower)?.multitime(times, left, right)?.0);
        }
        seq.push(value);
        truncation_tail(&seq)
    };
    let discretization_estimate = match &cfg.bath.source {
        BathSource::SpectralDensity { density, window } => {
            let t_max = times.last().copied().unwrap_or(0.0);
            let norm_sq: f64 = cfg.channel_ops.iter().map(|a| operator_norm(a).powi(2)).sum();
            let temp = match cfg.initial_bath {
                BathState::Vacuum => 0.0,
                BathState::Thermal { temperature } => temperature,
            };
            let max_freq = window.0.abs().max(window.1.abs());
            Some(second_order_error_estimate(
                norm_sq,
                |u| Ok((cfg.bath.correlation(0, u, temp) - correlation_analytic(density, u)?).norm()),
                t_max,
                max_freq,
            )?)
        }
        BathSource::FlatWindow { .. } => None,
    };
    Ok(UnitaryOutcome {
        value,
        truncation_estimate,
        discretization_estimate,
        dimension: engine.dim(),
        top_population: top,
    })
}

/// Nested unitary evaluation of a system request on the discretized configuration.
pub fn multitime_unitary(cfg: &UnitaryConfig, req: &MultiTimeRequest) -> Result<UnitaryOutcome> {
    let left: Result<Vec<_>> = req.left_ops().iter().map(|o| cfg.embed_system(o)).collect();
    let right: Result<Vec<_>> = req.right_ops().iter().map(|o| cfg.embed_system(o)).collect();
    core_multitime(cfg, req.times(), &left?, &right?)
}

// ---------------------------------------------------------------------------
// Dilation

#[derive(Clone, Copy, Debug, PartialEq, Serialize, serde::Deserialize)]
pub struct DilationParams {
    pub halfwidth: f64,
    pub modes_per_channel: usize,
    #[serde(default = "default_cap")]
    pub excitation_cap: usize,
    #[serde(default = "default_dimension_cap")]
    pub dimension_cap: usize,
}

fn default_cap() -> usize {
    DEFAULT_EXCITATION_CAP
}
fn default_dimension_cap() -> usize {
    DEFAULT_DIMENSION_CAP
}

impl DilationParams {
    pub fn new(halfwidth: f64, modes_per_channel: usize) -> Self {
        Self {
            halfwidth,
            modes_per_channel,
            excitation_cap: DEFAULT_EXCITATION_CAP,
            dimension_cap: DEFAULT_DIMENSION_CAP,
        }
    }

    fn validate(&self, rates: &[f64]) -> Result<()> {
        if !(self.halfwidth > 0.0) || self.modes_per_channel == 0 {
            return Err(Error::InvalidArgument("dilation needs W > 0 and at least one mode".into()));
        }
        let max_rate = rates.iter().copied().fold(0.0, f64::max);
        if self.halfwidth < 10.0 * max_rate {
            log::warn!("dilation window W = {} is below 10·γ_max = {}", self.halfwidth, 10.0 * max_rate);
        }
        Ok(())
    }
}

/// Flat band `ω_m = −W + (m + ½)Δω`, `g_m = √(γ_j Δω / 2π)` for each Lindblad channel.
fn flat_bath(rates: &[f64], p: &DilationParams) -> Result<DiscretizedBath> {
    p.validate(rates)?;
    let dw = 2.0 * p.halfwidth / p.modes_per_channel as f64;
    let mut modes = Vec::with_capacity(rates.len() * p.modes_per_channel);
    for (j, &rate) in rates.iter().enumerate() {
        let g = (rate * dw / (2.0 * PI)).sqrt();
        for m in 0..p.modes_per_channel {
            modes.push(DiscreteMode { omega: -p.halfwidth + (m as f64 + 0.5) * dw, g, channel: j });
        }
    }
    DiscretizedBath::new(
        modes,
        p.excitation_cap,
        BathSource::FlatWindow { halfwidth: p.halfwidth, rates: rates.to_vec() },
    )
}

/// Unitary dilation on S ⊗ B ⊗ Ẽ with `V = Σ_{j,m} i g_m (L_j b̃_{jm}† − L_j† b̃_{jm})`.
pub fn build_dilation(m: &GklsModel, p: &DilationParams) -> Result<UnitaryConfig> {
    let channels: Vec<(f64, OperatorMatrix)> = m.dissipators().into_iter().filter(|(r, _)| *r > 0.0).collect();
    let rates: Vec<f64> = channels.iter().map(|c| c.0).collect();
    let bath = flat_bath(&rates, p)?;
    let schedule = (0..m.system().schedule().len())
        .map(|k| HamiltonianSegment {
            t_start: m.system().schedule()[k].t_start,
            hamiltonian: m.hamiltonian_on_segment(k),
        })
        .collect();
    let ops = channels.iter().map(|(_, l)| l.scale(C64::new(0.0, 1.0))).collect();
    Ok(UnitaryConfig::general(
        m.layout().clone(),
        m.system().dim(),
        schedule,
        ops,
        bath,
        m.initial_state().into_matrix(),
        BathState::Vacuum,
    )?
    .with_dimension_cap(p.dimension_cap))
}

/// Dilation of the free bath alone, B ⊗ Ẽ, with request operators acting on B.
pub fn build_free_dilation(m: &GklsModel, p: &DilationParams) -> Result<UnitaryConfig> {
    let channels: Vec<(f64, OperatorMatrix)> =
        m.bath_dissipators().iter().filter(|(r, _)| *r > 0.0).cloned().collect();
    let rates: Vec<f64> = channels.iter().map(|c| c.0).collect();
    let bath = flat_bath(&rates, p)?;
    let layout = if m.bath().modes.is_empty() {
        SpaceLayout::from_pairs([("B", 1)])?
    } else {
        m.layout().restrict(&m.layout().factors()[1..].iter().map(|f| f.label.as_str()).collect::<Vec<_>>())?
    };
    let dim = layout.total_dim();
    let schedule = vec![HamiltonianSegment { t_start: 0.0, hamiltonian: m.bath_hamiltonian().clone() }];
    let ops = channels.iter().map(|(_, l)| l.scale(C64::new(0.0, 1.0))).collect();
    Ok(UnitaryConfig::general(
        layout,
        dim,
        schedule,
        ops,
        bath,
        m.initial_bath_matrix().clone(),
        BathState::Vacuum,
    )?
    .with_dimension_cap(p.dimension_cap))
}

#[derive(Clone, Debug, Serialize)]
pub struct Lemma1Report {
    pub params: DilationParams,
    pub dimension: usize,
    pub recurrence_time: f64,
    pub times: Vec<f64>,
    pub distances: Vec<f64>,
    pub max_distance: f64,
    pub top_population: f64,
}

/// Largest trace distance between the Ẽ-reduced dilated state and the GKLS state on `grid`.
pub fn verify_lemma1(m: &GklsModel, p: &DilationParams, grid: &[f64]) -> Result<Lemma1Report> {
    check_grid(grid)?;
    let cfg = build_dilation(m, p)?;
    let engine = UnitaryEngine::new(&cfg)?;
    let recurrence_time = cfg.bath.recurrence_time();
    if let Some(&t_end) = grid.last() {
        if t_end >= recurrence_time {
            log::warn!("grid reaches t = {t_end}, beyond the recurrence time {recurrence_time:.3}");
        }
    }
    let d = cfg.core_dim();
    let mut dilated = vec![OperatorMatrix::zeros(d); grid.len()];
    let mut top = 0.0f64;
    for (p_a, psi) in engine.initial_components()? {
        let mut v = psi;
        let mut t_prev = 0.0;
        for (k, &t) in grid.iter().enumerate() {
            v = engine.evolve(&v, t_prev, t)?;
            t_prev = t;
            top = top.max(engine.top_population(&v));
            dilated[k] += &engine.reduced_core(&v).scale_real(p_a);
        }
    }
    let prop = Propagator::new(m);
    let mut rho = m.initial_state();
    let mut t_prev = 0.0;
    let mut distances = Vec::with_capacity(grid.len());
    for (k, &t) in grid.iter().enumerate() {
        rho = prop.propagate(&rho, t_prev, t)?;
        t_prev = t;
        distances.push(trace_distance(&dilated[k], rho.matrix()));
    }
    let max_distance = distances.iter().copied().fold(0.0, f64::max);
    Ok(Lemma1Report {
        params: *p,
        dimension: engine.dim(),
        recurrence_time,
        times: grid.to_vec(),
        distances,
        max_distance,
        top_population: top,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct Lemma2Report {
    pub params: DilationParams,
    pub channels: (usize, usize),
    pub s: f64,
    pub dimension: usize,
    pub recurrence_time: f64,
    pub times: Vec<f64>,
    pub dilated: Vec<C64>,
    pub pseudomode: Vec<C64>,
    pub sup_norm: f64,
}

/// `C^X_{jj′}(t+s, s)` on the free dilation against `C^L_{jj′}(t+s, s)` for `t` on `grid`.
pub fn verify_lemma2(
    m: &GklsModel,
    p: &DilationParams,
    channels: (usize, usize),
    s: f64,
    grid: &[f64],
) -> Result<Lemma2Report> {
    check_grid(grid)?;
    if !(s >= 0.0) {
        return Err(Error::InvalidArgument("s must be non-negative".into()));
    }
    let (j, jp) = channels;
    let f = m.bath_coupling(j)?.clone();
    let fp = m.bath_coupling(jp)?.clone();
    let cfg = build_free_dilation(m, p)?;
    let engine = UnitaryEngine::new(&cfg)?;
    let mut dilated = vec![C64::new(0.0, 0.0); grid.len()];
    for (p_a, psi) in engine.initial_components()? {
        let at_s = engine.evolve(&psi, 0.0, s)?;
        let mut a = engine.apply_core(&fp, &at_s);
        let mut b = at_s;
        let mut t_prev = 0.0;
        for (k, &t) in grid.iter().enumerate() {
            a = engine.evolve(&a, s + t_prev, s + t)?;
            b = engine.evolve(&b, s + t_prev, s + t)?;
            t_prev = t;
            let fa = engine.apply_core(&f, &a);
            dilated[k] += b.iter().zip(&fa).map(|(x, y)| x.conj() * y).sum::<C64>() * p_a;
        }
    }
    let pseudomode: Result<Vec<C64>> = grid.par_iter().map(|&t| free_bath_two_time(m, j, jp, t, s)).collect();
    let pseudomode = pseudomode?;
    let sup_norm = dilated.iter().zip(&pseudomode).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
    Ok(Lemma2Report {
        params: *p,
        channels,
        s,
        dimension: engine.dim(),
        recurrence_time: cfg.bath.recurrence_time(),
        times: grid.to_vec(),
        dilated,
        pseudomode,
        sup_norm,
    })
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.iter().any(|t| !(*t >= 0.0)) || grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidArgument("time grid must be non-negative and non-decreasing".into()));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Theorem

/// Everything the end-to-end comparison needs.
#[derive(Clone, Debug)]
pub struct TheoremSetup {
    pub density: SpectralDensity,
    pub fit_order: usize,
    pub fit_t_max: f64,
    pub fit_points: usize,
    pub system: SystemModel,
    pub initial_system: OperatorMatrix,
    pub request: MultiTimeRequest,
    pub pseudomode_n_max: usize,
    pub window: (f64, f64),
    pub modes: usize,
    pub excitation_cap: usize,
    pub mass_tol: f64,
    pub dimension_cap: usize,
    /// Multiplies every fitted decay rate; 1 leaves the hypothesis intact.
    pub gamma_scale: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct TheoremReport {
    pub fit: ExponentialSum,
    pub fit_residual: f64,
    pub pseudomodes: Vec<PseudoMode>,
    pub gamma_scale: f64,
    /// Sup-norm of `C^L − C^U` for the pseudomodes actually simulated.
    pub hypothesis_residual: f64,
    pub value_pseudomode: C64,
    pub value_unitary: C64,
    pub delta: f64,
    pub fit_contribution: f64,
    pub discretization_estimate: f64,
    pub truncation_estimate: f64,
    pub error_bound: f64,
    pub safety_factor: f64,
    pub consistent: bool,
    pub unitary_dimension: usize,
    pub recurrence_time: f64,
}

/// Sample `C^U`, fit, build pseudomodes, evaluate the request both ways and compare.
pub fn verify_theorem(setup: &TheoremSetup) -> Result<TheoremReport> {
    if setup.system.couplings().len() != 1 {
        return Err(Error::InvalidArgument("the end-to-end check uses a single coupling channel".into()));
    }
    if !(setup.gamma_scale > 0.0) {
        return Err(Error::InvalidArgument("gamma_scale must be positive".into()));
    }
    let sd = &setup.density;
    let grid = uniform_grid(setup.fit_t_max, setup.fit_points)?;
    let values: Result<Vec<C64>> = grid.par_iter().map(|&t| correlation_analytic(sd, t)).collect();
    let series = CorrelationSeries::new(grid, values?, (0, 0))?;
    let (fit, fit_report) = matrix_pencil_fit(&series, setup.fit_order)?;
    let mut params = to_pseudomodes(&fit, 0, 1, setup.pseudomode_n_max)?;
    for mode in params.modes.iter_mut() {
        mode.gamma *= setup.gamma_scale;
    }
    let model = GklsModel::new(setup.system.clone(), params.clone(), BathState::Vacuum, setup.initial_system.clone())?;
    let value_pseudomode = multitime_gkls(&model, &setup.request)?;

    let bath = discretize_spectral_density(sd, setup.window, setup.modes, setup.excitation_cap, setup.mass_tol)?;
    let recurrence_time = bath.recurrence_time();
    let t_max = setup.request.times().last().copied().unwrap_or(0.0);
    if t_max >= recurrence_time {
        log::warn!("request reaches t = {t_max}, beyond the recurrence time {recurrence_time:.3}");
    }
    let initial_bath = if sd.temperature > 0.0 {
        BathState::Thermal { temperature: sd.temperature }
    } else {
        BathState::Vacuum
    };
    let cfg = UnitaryConfig::physical(&setup.system, bath, setup.initial_system.clone(), initial_bath)?
        .with_dimension_cap(setup.dimension_cap);
    let unitary = multitime_unitary(&cfg, &setup.request)?;

    let norm_sq = operator_norm(&setup.system.couplings()[0]).powi(2);
    let max_freq = setup.window.0.abs().max(setup.window.1.abs());
    let fit_contribution = second_order_error_estimate(
        norm_sq,
        |u| Ok((fit.evaluate(u) - correlation_analytic(sd, u)?).norm()),
        t_max,
        max_freq,
    )?;
    let pseudo_c = |u: f64| -> C64 {
        params
            .modes
            .iter()
            .zip(&params.couplings[0])
            .map(|(m, g)| C64::new(-m.gamma * u / 2.0, -m.omega * u).exp() * g.norm_sqr())
            .sum()
    };
    let check_grid = uniform_grid(t_max.max(setup.fit_t_max), 2001)?;
    let residuals: Result<Vec<f64>> = check_grid
        .par_iter()
        .map(|&u| Ok((pseudo_c(u) - correlation_analytic(sd, u)?).norm()))
        .collect();
    let hypothesis_residual = residuals?.into_iter().fold(0.0, f64::max);

    let discretization_estimate = unitary.discretization_estimate.unwrap_or(0.0);
    let error_bound = fit_contribution + discretization_estimate + unitary.truncation_estimate;
    let delta = (value_pseudomode - unitary.value).norm();
    Ok(TheoremReport {
        fit,
        fit_residual: fit_report.max_residual,
        pseudomodes: params.modes.clone(),
        gamma_scale: setup.gamma_scale,
        hypothesis_residual,
        value_pseudomode,
        value_unitary: unitary.value,
        delta,
        fit_contribution,
        discretization_estimate,
        truncation_estimate: unitary.truncation_estimate,
        error_bound,
        safety_factor: SAFETY_FACTOR,
        consistent: delta <= SAFETY_FACTOR * error_bound,
        unitary_dimension: unitary.dimension,
        recurrence_time,
    })
}
