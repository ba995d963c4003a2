//! The pseudomode configuration: an open system S coupled through `A_{S,j} ⊗ F_{B,j}`
//! to a few damped bosonic modes B, evolving under a GKLS generator whose
//! dissipators act on B only.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::algebra::{
    self, annihilation, embed, kron, number, vectorize, DensityMatrix, Factor, OperatorMatrix, SpaceLayout,
    HERMITICITY_TOL,
};
use crate::error::{Error, Result};
use crate::sparse::{self, CsrMatrix};

/// Default bound on the population of the highest retained Fock state.
pub const TRUNCATION_TOL: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct HamiltonianSegment {
    pub t_start: f64,
    pub hamiltonian: OperatorMatrix,
}

/// System Hamiltonian schedule (piecewise constant) and coupling operators `A_{S,j}`.
#[derive(Clone, Debug, PartialEq)]
pub struct SystemModel {
    dim: usize,
    schedule: Vec<HamiltonianSegment>,
    couplings: Vec<OperatorMatrix>,
}

impl SystemModel {
    pub fn new(dim: usize, schedule: Vec<HamiltonianSegment>, couplings: Vec<OperatorMatrix>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("system dimension must be positive".into()));
        }
        if schedule.is_empty() {
            return Err(Error::InvalidArgument("Hamiltonian schedule is empty".into()));
        }
        if schedule[0].t_start != 0.0 {
            return Err(Error::InvalidArgument("first Hamiltonian segment must start at t = 0".into()));
        }
        if schedule.windows(2).any(|w| !(w[1].t_start > w[0].t_start)) {
            return Err(Error::InvalidArgument("segment start times must increase".into()));
        }
        for (k, seg) in schedule.iter().enumerate() {
            check_system_operator(&seg.hamiltonian, dim, &format!("hamiltonian segment {k}"))?;
        }
        for (j, a) in couplings.iter().enumerate() {
            check_system_operator(a, dim, &format!("coupling operator {j}"))?;
        }
        if couplings.len() > dim * dim {
            return Err(Error::InvalidArgument(format!(
                "{} coupling operators exceed d_S² = {}",
                couplings.len(),
                dim * dim
            )));
        }
        Ok(Self { dim, schedule, couplings })
    }

    pub fn constant(hamiltonian: OperatorMatrix, couplings: Vec<OperatorMatrix>) -> Result<Self> {
        let dim = hamiltonian.dim();
        Self::new(dim, vec![HamiltonianSegment { t_start: 0.0, hamiltonian }], couplings)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn schedule(&self) -> &[HamiltonianSegment] {
        &self.schedule
    }

    pub fn couplings(&self) -> &[OperatorMatrix] {
        &self.couplings
    }

    /// Index of the segment in force at time `t` (the last one starting at or before `t`).
    pub fn segment_at(&self, t: f64) -> usize {
        self.schedule.iter().rposition(|s| s.t_start <= t).unwrap_or(0)
    }

    pub fn hamiltonian_at(&self, t: f64) -> &OperatorMatrix {
        &self.schedule[self.segment_at(t)].hamiltonian
    }

    /// Splits `[t_from, t_to]` at segment boundaries into `(segment, start, end)` pieces.
    pub fn pieces(&self, t_from: f64, t_to: f64) -> Vec<(usize, f64, f64)> {
        let mut out = Vec::new();
        let mut t = t_from;
        while t < t_to {
            let seg = self.segment_at(t);
            let end = self
                .schedule
                .get(seg + 1)
                .map(|s| s.t_start.min(t_to))
                .unwrap_or(t_to);
            out.push((seg, t, end));
            t = end;
        }
        out
    }
}

fn check_system_operator(op: &OperatorMatrix, dim: usize, what: &str) -> Result<()> {
    if op.dim() != dim {
        return Err(Error::DimensionMismatch(format!("{what} has dimension {}, expected {dim}", op.dim())));
    }
    if !op.is_finite() {
        return Err(Error::NonFinite);
    }
    let defect = op.hermiticity_defect();
    if defect > HERMITICITY_TOL {
        return Err(Error::InvalidArgument(format!("{what} is not Hermitian (defect {defect:.2e})")));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PseudoMode {
    pub omega: f64,
    pub gamma: f64,
    pub n_max: usize,
}

/// Mode frequencies, rates and truncations, couplings `g_{jk}` per channel, and an
/// optional Hermitian matrix `M` adding `Σ M_kl b_k† b_l` to the bath Hamiltonian.
#[derive(Clone, Debug, PartialEq)]
pub struct PseudomodeParams {
    pub modes: Vec<PseudoMode>,
    pub couplings: Vec<Vec<C64>>,
    pub mode_mode: Option<OperatorMatrix>,
}

impl PseudomodeParams {
    pub fn new(modes: Vec<PseudoMode>, couplings: Vec<Vec<C64>>, mode_mode: Option<OperatorMatrix>) -> Result<Self> {
        for (k, m) in modes.iter().enumerate() {
            if !(m.gamma >= 0.0) || !m.gamma.is_finite() {
                return Err(Error::InvalidArgument(format!("mode {k}: decay rate must be ≥ 0, got {}", m.gamma)));
            }
            if !m.omega.is_finite() {
                return Err(Error::NonFinite);
            }
            if m.n_max < 2 {
                return Err(Error::InvalidArgument(format!("mode {k}: n_max must be ≥ 2, got {}", m.n_max)));
            }
        }
        for (j, row) in couplings.iter().enumerate() {
            if row.len() != modes.len() {
                return Err(Error::DimensionMismatch(format!(
                    "channel {j} lists {} couplings for {} modes",
                    row.len(),
                    modes.len()
                )));
            }
        }
        if let Some(mm) = &mode_mode {
            if mm.dim() != modes.len() {
                return Err(Error::DimensionMismatch("mode_mode matrix must be modes × modes".into()));
            }
            if mm.hermiticity_defect() > HERMITICITY_TOL {
                return Err(Error::InvalidArgument("mode_mode matrix is not Hermitian".into()));
            }
        }
        Ok(Self { modes, couplings, mode_mode })
    }

    /// One mode with real coupling `g` on a single channel.
    pub fn single(omega: f64, gamma: f64, g: f64, n_max: usize) -> Result<Self> {
        Self::new(vec![PseudoMode { omega, gamma, n_max }], vec![vec![C64::new(g, 0.0)]], None)
    }

    /// Concatenates the modes of two parameter sets; channel counts must agree.
    pub fn concat(&self, other: &Self) -> Result<Self> {
        if self.couplings.len() != other.couplings.len() {
            return Err(Error::DimensionMismatch("channel counts differ".into()));
        }
        let mut modes = self.modes.clone();
        modes.extend(other.modes.iter().copied());
        let couplings = self
            .couplings
            .iter()
            .zip(&other.couplings)
            .map(|(a, b)| a.iter().chain(b).copied().collect())
            .collect();
        if self.mode_mode.is_some() || other.mode_mode.is_some() {
            return Err(Error::InvalidArgument("cannot concatenate parameters with mode_mode couplings".into()));
        }
        Self::new(modes, couplings, None)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BathState {
    Vacuum,
    Thermal { temperature: f64 },
}

/// Full GKLS configuration together with its factorized initial state.
#[derive(Clone, Debug)]
pub struct GklsModel {
    system: SystemModel,
    bath: PseudomodeParams,
    layout: SpaceLayout,
    initial_bath: BathState,
    initial_system: OperatorMatrix,
    bath_dim: usize,
    h_b: OperatorMatrix,
    f_b: Vec<OperatorMatrix>,
    dissipators_b: Vec<(f64, OperatorMatrix)>,
    rho_b: OperatorMatrix,
    truncation_tol: f64,
}

pub fn mode_label(k: usize) -> String {
    format!("B{}", k + 1)
}

impl GklsModel {
    pub fn new(
        system: SystemModel,
        bath: PseudomodeParams,
        initial_bath: BathState,
        initial_system: OperatorMatrix,
    ) -> Result<Self> {
        if bath.couplings.len() != system.couplings.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} bath coupling channels for {} system coupling operators",
                bath.couplings.len(),
                system.couplings.len()
            )));
        }
        let ds = system.dim();
        let s_layout = SpaceLayout::from_pairs([("S", ds)])?;
        DensityMatrix::new(s_layout, initial_system.clone())?;

        let mut factors = vec![Factor { label: "S".into(), dim: ds }];
        factors.extend(bath.modes.iter().enumerate().map(|(k, m)| Factor { label: mode_label(k), dim: m.n_max }));
        let layout = SpaceLayout::new(factors)?;
        let bath_dim: usize = bath.modes.iter().map(|m| m.n_max).product();

        let (b_ops, n_ops) = if bath.modes.is_empty() {
            (Vec::new(), Vec::new())
        } else {
            let b_layout = SpaceLayout::new(
                bath.modes.iter().enumerate().map(|(k, m)| Factor { label: mode_label(k), dim: m.n_max }).collect(),
            )?;
            let mut b_ops = Vec::new();
            let mut n_ops = Vec::new();
            for (k, m) in bath.modes.iter().enumerate() {
                b_ops.push(embed(&annihilation(m.n_max)?, &mode_label(k), &b_layout)?);
                n_ops.push(embed(&number(m.n_max)?, &mode_label(k), &b_layout)?);
            }
            (b_ops, n_ops)
        };

        let mut h_b = OperatorMatrix::zeros(bath_dim);
        for (k, m) in bath.modes.iter().enumerate() {
            h_b += &n_ops[k].scale_real(m.omega);
        }
        if let Some(mm) = &bath.mode_mode {
            for k in 0..bath.modes.len() {
                for l in 0..bath.modes.len() {
                    if mm[(k, l)] != C64::new(0.0, 0.0) {
                        h_b += &b_ops[k].dagger().matmul(&b_ops[l]).scale(mm[(k, l)]);
                    }
                }
            }
        }

        let mut f_b = Vec::with_capacity(bath.couplings.len());
        for row in &bath.couplings {
            let mut f = OperatorMatrix::zeros(bath_dim);
            for (k, &g) in row.iter().enumerate() {
                if g != C64::new(0.0, 0.0) {
                    f += &b_ops[k].scale(g);
                    f += &b_ops[k].dagger().scale(g.conj());
                }
            }
            f_b.push(f);
        }

        let mut dissipators_b = Vec::new();
        let mut rho_b = OperatorMatrix::identity(1);
        for (k, m) in bath.modes.iter().enumerate() {
            let (n_bar, local) = match initial_bath {
                BathState::Vacuum => (0.0, algebra::projector(m.n_max, 0)),
                BathState::Thermal { temperature } => thermal_mode(m, temperature, k)?,
            };
            if m.gamma > 0.0 {
                dissipators_b.push((m.gamma * (n_bar + 1.0), b_ops[k].clone()));
                if n_bar > 0.0 {
                    dissipators_b.push((m.gamma * n_bar, b_ops[k].dagger()));
                }
            }
            rho_b = kron(&rho_b, &local);
        }

        Ok(Self {
            system,
            bath,
            layout,
            initial_bath,
            initial_system,
            bath_dim,
            h_b,
            f_b,
            dissipators_b,
            rho_b,
            truncation_tol: TRUNCATION_TOL,
        })
    }

    pub fn with_truncation_tol(mut self, tol: f64) -> Self {
        self.truncation_tol = tol;
        self
    }

    /// Same system and initial state with different pseudomode parameters.
    pub fn with_bath(&self, bath: PseudomodeParams) -> Result<Self> {
        Ok(Self::new(self.system.clone(), bath, self.initial_bath, self.initial_system.clone())?
            .with_truncation_tol(self.truncation_tol))
    }

    pub fn system(&self) -> &SystemModel {
        &self.system
    }
    pub fn bath(&self) -> &PseudomodeParams {
        &self.bath
    }
    pub fn layout(&self) -> &SpaceLayout {
        &self.layout
    }
    pub fn initial_bath(&self) -> BathState {
        self.initial_bath
    }
    pub fn initial_system(&self) -> &OperatorMatrix {
        &self.initial_system
    }
    pub fn truncation_tol(&self) -> f64 {
        self.truncation_tol
    }
    pub fn bath_dim(&self) -> usize {
        self.bath_dim
    }
    pub fn total_dim(&self) -> usize {
        self.layout.total_dim()
    }
    pub fn num_channels(&self) -> usize {
        self.f_b.len()
    }
    pub fn bath_hamiltonian(&self) -> &OperatorMatrix {
        &self.h_b
    }
    pub fn bath_coupling(&self, j: usize) -> Result<&OperatorMatrix> {
        self.f_b
            .get(j)
            .ok_or_else(|| Error::InvalidArgument(format!("channel {j} out of range ({} channels)", self.f_b.len())))
    }
    pub fn bath_dissipators(&self) -> &[(f64, OperatorMatrix)] {
        &self.dissipators_b
    }
    pub fn initial_bath_matrix(&self) -> &OperatorMatrix {
        &self.rho_b
    }

    /// `ρ_S(0) ⊗ ρ_B(0)`
    pub fn initial_state(&self) -> DensityMatrix {
        DensityMatrix::unchecked(self.layout.clone(), kron(&self.initial_system, &self.rho_b))
            .expect("layout matches by construction")
    }

    /// System operator embedded as `O ⊗ 𝟙_B`.
    pub fn embed_system(&self, op: &OperatorMatrix) -> Result<OperatorMatrix> {
        if op.dim() != self.system.dim() {
            return Err(Error::DimensionMismatch(format!(
                "system operator of dimension {} for d_S = {}",
                op.dim(),
                self.system.dim()
            )));
        }
        Ok(kron(op, &OperatorMatrix::identity(self.bath_dim)))
    }

    /// Hamiltonian on the bath factors only (plus `𝟙_S`), used by the dilation.
    pub fn hamiltonian_on_segment(&self, segment: usize) -> OperatorMatrix {
        let id_b = OperatorMatrix::identity(self.bath_dim);
        let id_s = OperatorMatrix::identity(self.system.dim());
        let mut h = kron(&self.system.schedule[segment].hamiltonian, &id_b);
        h += &kron(&id_s, &self.h_b);
        for (a, f) in self.system.couplings.iter().zip(&self.f_b) {
            h += &kron(a, f);
        }
        h
    }

    /// Lindblad operators embedded on S ⊗ B with their rates.
    pub fn dissipators(&self) -> Vec<(f64, OperatorMatrix)> {
        let id_s = OperatorMatrix::identity(self.system.dim());
        self.dissipators_b.iter().map(|(r, l)| (*r, kron(&id_s, l))).collect()
    }

    pub fn liouvillian_sparse_on_segment(&self, segment: usize) -> Result<CsrMatrix> {
        let h = CsrMatrix::from_dense(&self.hamiltonian_on_segment(segment));
        let d: Vec<(f64, CsrMatrix)> = self
            .dissipators()
            .iter()
            .map(|(r, l)| (*r, CsrMatrix::from_dense(l)))
            .collect();
        sparse::liouvillian(&h, &d)
    }

    pub fn free_bath_generator_sparse(&self) -> Result<CsrMatrix> {
        let h = CsrMatrix::from_dense(&self.h_b);
        let d: Vec<(f64, CsrMatrix)> = self
            .dissipators_b
            .iter()
            .map(|(r, l)| (*r, CsrMatrix::from_dense(l)))
            .collect();
        sparse::liouvillian(&h, &d)
    }

    /// For each mode, `|Σ diag|` over basis states whose occupation of that mode is maximal.
    /// `matrix` lives on S ⊗ B (`include_system`) or on B alone.
    pub fn top_fock_populations(&self, matrix: &OperatorMatrix, include_system: bool) -> Vec<(String, f64)> {
        let sys = if include_system { self.system.dim() } else { 1 };
        assert_eq!(matrix.dim(), sys * self.bath_dim);
        let mut out = Vec::with_capacity(self.bath.modes.len());
        let mut stride = self.bath_dim;
        for (k, m) in self.bath.modes.iter().enumerate() {
            stride /= m.n_max;
            let mut pop = C64::new(0.0, 0.0);
            for i in 0..matrix.dim() {
                let b_index = i % self.bath_dim;
                if (b_index / stride) % m.n_max == m.n_max - 1 {
                    pop += matrix[(i, i)];
                }
            }
            out.push((mode_label(k), pop.norm()));
        }
        out
    }

    /// Error when any mode's top-state population exceeds the model tolerance.
    pub fn check_truncation(&self, matrix: &OperatorMatrix, include_system: bool) -> Result<()> {
        for (label, population) in self.top_fock_populations(matrix, include_system) {
            if population > self.truncation_tol {
                return Err(Error::TruncationBreach {
                    label,
                    population,
                    tolerance: self.truncation_tol,
                });
            }
        }
        Ok(())
    }

    fn warn_truncation(&self, matrix: &OperatorMatrix, context: &str) -> f64 {
        let worst = self
            .top_fock_populations(matrix, false)
            .into_iter()
            .fold(("".to_string(), 0.0), |acc, x| if x.1 > acc.1 { x } else { acc });
        if worst.1 > self.truncation_tol {
            log::warn!(
                "{context}: top Fock population {:.3e} of mode {} exceeds {:.1e}",
                worst.1,
                worst.0,
                self.truncation_tol
            );
        }
        worst.1
    }
}

fn thermal_mode(m: &PseudoMode, temperature: f64, k: usize) -> Result<(f64, OperatorMatrix)> {
    if !(temperature >= 0.0) {
        return Err(Error::InvalidArgument("temperature must be non-negative".into()));
    }
    if temperature == 0.0 {
        return Ok((0.0, algebra::projector(m.n_max, 0)));
    }
    if !(m.omega > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "mode {k}: a thermal state needs a positive frequency, got {}",
            m.omega
        )));
    }
    let x = m.omega / temperature;
    let n_bar = 1.0 / x.exp_m1();
    let weights: Vec<f64> = (0..m.n_max).map(|n| (-(n as f64) * x).exp()).collect();
    let z: f64 = weights.iter().sum();
    let diag: Vec<C64> = weights.iter().map(|w| C64::new(w / z, 0.0)).collect();
    Ok((n_bar, OperatorMatrix::from_diag(&diag)))
}

/// `H(t) = H_S(t)⊗𝟙 + 𝟙⊗H_B + Σ_j A_{S,j}⊗F_{B,j}`.
pub fn build_hamiltonian(m: &GklsModel, t: f64) -> Result<OperatorMatrix> {
    if !(t >= 0.0) {
        return Err(Error::InvalidArgument(format!("time must be non-negative, got {t}")));
    }
    Ok(m.hamiltonian_on_segment(m.system.segment_at(t)))
}

/// Column-stacked Liouvillian on S ⊗ B at time `t`.
pub fn build_liouvillian(m: &GklsModel, t: f64) -> Result<OperatorMatrix> {
    if !(t >= 0.0) {
        return Err(Error::InvalidArgument(format!("time must be non-negative, got {t}")));
    }
    Ok(m.liouvillian_sparse_on_segment(m.system.segment_at(t))?.to_dense())
}

/// Column-stacked `ℒ_B = −i[H_B, ·] + 𝒟_B` on the bath factors.
pub fn build_free_bath_generator(m: &GklsModel) -> Result<OperatorMatrix> {
    Ok(m.free_bath_generator_sparse()?.to_dense())
}

fn propagate_bath(generator: &CsrMatrix, x: &OperatorMatrix, t: f64) -> Result<OperatorMatrix> {
    if t == 0.0 {
        return Ok(x.clone());
    }
    let v = sparse::expmv(generator, C64::new(t, 0.0), &vectorize(x))?;
    algebra::devectorize(&v)
}

/// `F_j^L(t) = Tr_B{F_j e^{ℒ_B t}[ρ_B(0)]}`.
pub fn free_bath_one_time(m: &GklsModel, j: usize, t: f64) -> Result<C64> {
    free_bath_one_time_from(m, j, m.initial_bath_matrix(), t)
}

/// As [`free_bath_one_time`] from an arbitrary bath state.
pub fn free_bath_one_time_from(m: &GklsModel, j: usize, rho_b: &OperatorMatrix, t: f64) -> Result<C64> {
    if !(t >= 0.0) {
        return Err(Error::InvalidArgument("t must be non-negative".into()));
    }
    let f = m.bath_coupling(j)?;
    if rho_b.dim() != m.bath_dim() {
        return Err(Error::DimensionMismatch("bath state dimension".into()));
    }
    let generator = m.free_bath_generator_sparse()?;
    let rho_t = propagate_bath(&generator, rho_b, t)?;
    Ok(f.matmul(&rho_t).trace())
}

/// `C^L_{jj′}(t+s, s) = Tr_B{F_j e^{ℒ_B t}[F_{j′} e^{ℒ_B s}[ρ_B(0)]]}`.
pub fn free_bath_two_time(m: &GklsModel, j: usize, jp: usize, t: f64, s: f64) -> Result<C64> {
    let generator = m.free_bath_generator_sparse()?;
    free_bath_two_time_with(m, &generator, j, jp, t, s)
}

fn free_bath_two_time_with(m: &GklsModel, generator: &CsrMatrix, j: usize, jp: usize, t: f64, s: f64) -> Result<C64> {
    if !(t >= 0.0 && s >= 0.0) {
        return Err(Error::InvalidArgument("t and s must be non-negative".into()));
    }
    let f = m.bath_coupling(j)?;
    let fp = m.bath_coupling(jp)?;
    let rho_s = propagate_bath(generator, m.initial_bath_matrix(), s)?;
    let x = fp.matmul(&rho_s);
    let y = propagate_bath(generator, &x, t)?;
    m.warn_truncation(&y, "free_bath_two_time");
    Ok(f.matmul(&y).trace())
}

/// Samples `C^L_{jj′}(t, 0)` on a grid.
pub fn free_bath_correlation_series(m: &GklsModel, j: usize, jp: usize, grid: &[f64]) -> Result<Vec<C64>> {
    let generator = m.free_bath_generator_sparse()?;
    let f = m.bath_coupling(j)?;
    let fp = m.bath_coupling(jp)?;
    let mut x = fp.matmul(m.initial_bath_matrix());
    let mut out = Vec::with_capacity(grid.len());
    let mut t_prev = 0.0;
    for &t in grid {
        if t < t_prev {
            return Err(Error::InvalidArgument("grid must be non-decreasing and non-negative".into()));
        }
        x = propagate_bath(&generator, &x, t - t_prev)?;
        t_prev = t;
        out.push(f.matmul(&x).trace());
    }
    m.warn_truncation(&x, "free_bath_correlation_series");
    Ok(out)
}

/// Four-point free-bath correlator against its Wick pairing sum, times ascending.
pub fn wick_four_point_check(m: &GklsModel, j: usize, times: [f64; 4]) -> Result<(C64, C64)> {
    if times[0] < 0.0 || times.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidArgument("times must satisfy 0 ≤ t₁ ≤ t₂ ≤ t₃ ≤ t₄".into()));
    }
    let f = m.bath_coupling(j)?;
    let generator = m.free_bath_generator_sparse()?;
    let [t1, t2, t3, t4] = times;
    let mut x = propagate_bath(&generator, m.initial_bath_matrix(), t1)?;
    x = f.matmul(&x);
    for (from, to) in [(t1, t2), (t2, t3), (t3, t4)] {
        x = propagate_bath(&generator, &x, to - from)?;
        x = f.matmul(&x);
    }
    m.warn_truncation(&x, "wick_four_point_check");
    let lhs = x.trace();
    let c = |a: f64, b: f64| free_bath_two_time_with(m, &generator, j, j, a - b, b);
    let rhs = c(t4, t3)? * c(t2, t1)? + c(t4, t2)? * c(t3, t1)? + c(t4, t1)? * c(t3, t2)?;
    Ok((lhs, rhs))
}

/// Trace-preservation defect `max |vec(𝟙)† ℒ|`.
pub fn trace_preservation_defect(liouvillian: &OperatorMatrix) -> f64 {
    let n = (liouvillian.dim() as f64).sqrt().round() as usize;
    let mut worst = 0.0f64;
    for col in 0..liouvillian.dim() {
        let s: C64 = (0..n).map(|i| liouvillian[(i * n + i, col)]).sum();
        worst = worst.max(s.norm());
    }
    worst
}
