//! Interval propagators of the GKLS configuration and nested multi-time expectation values.

use std::collections::{HashMap, HashSet};
use std::sync::{Arc, Mutex, RwLock};

use num_complex::Complex64 as C64;
use rayon::prelude::*;

use crate::algebra::{self, devectorize, expm, kron, vectorize, DensityMatrix, OperatorMatrix};
use crate::error::{Error, Result};
use crate::fitting::uniform_step;
use crate::gkls::GklsModel;
use crate::sparse::{self, CsrMatrix};

/// Superoperators up to this dimension are exponentiated densely and cached.
pub const DENSE_SUPEROPERATOR_LIMIT: usize = 1600;
/// Trace and Hermiticity drift tolerated by [`propagate`].
pub const PRESERVATION_TOL: f64 = 1e-9;
/// Measurement probabilities below `-NEGATIVITY_TOL` are reported as faults.
pub const NEGATIVITY_TOL: f64 = 1e-10;

/// Time-ordered request `Tr{O_n Λ(t_n,t_{n−1})[… O₁ Λ(t₁,0)[ρ(0)] O′₁ …] O′_n}`.
#[derive(Clone, Debug, PartialEq)]
pub struct MultiTimeRequest {
    times: Vec<f64>,
    left_ops: Vec<OperatorMatrix>,
    right_ops: Vec<OperatorMatrix>,
}

impl MultiTimeRequest {
    pub fn new(times: Vec<f64>, left_ops: Vec<OperatorMatrix>, right_ops: Vec<OperatorMatrix>) -> Result<Self> {
        if times.is_empty() {
            return Err(Error::InvalidArgument("request needs at least one time".into()));
        }
        if left_ops.len() != times.len() || right_ops.len() != times.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} times, {} left and {} right operators",
                times.len(),
                left_ops.len(),
                right_ops.len()
            )));
        }
        if times[0] < 0.0 || times.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidArgument("times must be finite and non-negative".into()));
        }
        if let Some(k) = times.windows(2).position(|w| w[1] < w[0]) {
            return Err(Error::InvalidArgument(format!("times decrease at index {}", k + 1)));
        }
        let dim = left_ops[0].dim();
        if left_ops.iter().chain(&right_ops).any(|o| o.dim() != dim) {
            return Err(Error::DimensionMismatch("request operators differ in dimension".into()));
        }
        Ok(Self { times, left_ops, right_ops })
    }

    /// All insertions equal to the identity.
    pub fn identity(times: Vec<f64>, dim: usize) -> Result<Self> {
        let n = times.len();
        let id = OperatorMatrix::identity(dim);
        Self::new(times, vec![id.clone(); n], vec![id; n])
    }

    /// `O′_k = O_k†`, the form of a measurement sequence.
    pub fn measurement(times: Vec<f64>, kraus: Vec<OperatorMatrix>) -> Result<Self> {
        let right = kraus.iter().map(|k| k.dagger()).collect();
        Self::new(times, kraus, right)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }
    pub fn left_ops(&self) -> &[OperatorMatrix] {
        &self.left_ops
    }
    pub fn right_ops(&self) -> &[OperatorMatrix] {
        &self.right_ops
    }
    pub fn len(&self) -> usize {
        self.times.len()
    }
    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
    pub fn system_dim(&self) -> usize {
        self.left_ops[0].dim()
    }

    /// Request whose value is the complex conjugate of this one.
    pub fn conjugate(&self) -> Self {
        Self {
            times: self.times.clone(),
            left_ops: self.right_ops.iter().map(|o| o.dagger()).collect(),
            right_ops: self.left_ops.iter().map(|o| o.dagger()).collect(),
        }
    }
}

/// Cache of interval propagators keyed by (segment, duration).
#[derive(Debug, Default)]
pub struct PropagatorCache {
    map: RwLock<HashMap<(usize, u64), Arc<OperatorMatrix>>>,
}

impl PropagatorCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.map.read().expect("cache lock poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, segment: usize, duration: f64) -> Option<Arc<OperatorMatrix>> {
        self.map.read().expect("cache lock poisoned").get(&(segment, duration.to_bits())).cloned()
    }

    /// Returns the cached entry, computing and inserting it if absent. When two callers
    /// race, the first insertion wins and both receive it.
    pub fn get_or_insert_with<F>(&self, segment: usize, duration: f64, compute: F) -> Result<Arc<OperatorMatrix>>
    where
        F: FnOnce() -> Result<OperatorMatrix>,
    {
        if let Some(hit) = self.get(segment, duration) {
            return Ok(hit);
        }
        let fresh = Arc::new(compute()?);
        let mut map = self.map.write().expect("cache lock poisoned");
        Ok(map.entry((segment, duration.to_bits())).or_insert(fresh).clone())
    }
}

/// Evolution machinery bound to one model: per-segment generators and cached propagators.
pub struct Propagator<'a> {
    model: &'a GklsModel,
    generators: RwLock<HashMap<usize, Arc<CsrMatrix>>>,
    adjoint_generators: RwLock<HashMap<usize, Arc<CsrMatrix>>>,
    cache: PropagatorCache,
    // intervals applied once so far; a second use promotes them to a dense cached propagator
    seen: Mutex<HashSet<(usize, u64)>>,
}

impl<'a> Propagator<'a> {
    pub fn new(model: &'a GklsModel) -> Self {
        Self {
            model,
            generators: RwLock::new(HashMap::new()),
            adjoint_generators: RwLock::new(HashMap::new()),
            cache: PropagatorCache::new(),
            seen: Mutex::new(HashSet::new()),
        }
    }

    pub fn model(&self) -> &GklsModel {
        self.model
    }

    pub fn cache(&self) -> &PropagatorCache {
        &self.cache
    }

    fn generator(&self, segment: usize) -> Result<Arc<CsrMatrix>> {
        if let Some(g) = self.generators.read().expect("lock poisoned").get(&segment) {
            return Ok(g.clone());
        }
        let fresh = Arc::new(self.model.liouvillian_sparse_on_segment(segment)?);
        let mut map = self.generators.write().expect("lock poisoned");
        Ok(map.entry(segment).or_insert(fresh).clone())
    }

    /// `ℒᵀ`, which propagates row vectors `w ↦ w Λ` (the Heisenberg picture).
    fn adjoint_generator(&self, segment: usize) -> Result<Arc<CsrMatrix>> {
        if let Some(g) = self.adjoint_generators.read().expect("lock poisoned").get(&segment) {
            return Ok(g.clone());
        }
        let fresh = Arc::new(self.generator(segment)?.transpose());
        let mut map = self.adjoint_generators.write().expect("lock poisoned");
        Ok(map.entry(segment).or_insert(fresh).clone())
    }

    fn dense(&self) -> bool {
        let d = self.model.total_dim();
        d * d <= DENSE_SUPEROPERATOR_LIMIT
    }

    /// `e^{ℒ_seg Δt}` as a dense superoperator, from the cache when available.
    pub fn interval_propagator(&self, segment: usize, duration: f64) -> Result<Arc<OperatorMatrix>> {
        self.cache.get_or_insert_with(segment, duration, || {
            let l = self.generator(segment)?.to_dense();
            expm(&l.scale_real(duration))
        })
    }

    /// Applies `Λ(t_to, t_from)` to an operator on S ⊗ B, any Hermiticity or trace.
    pub fn apply(&self, x: &OperatorMatrix, t_from: f64, t_to: f64) -> Result<OperatorMatrix> {
        if !(t_from >= 0.0 && t_to >= t_from) {
            return Err(Error::InvalidArgument(format!("need 0 ≤ t_from ≤ t_to, got {t_from}, {t_to}")));
        }
        if x.dim() != self.model.total_dim() {
            return Err(Error::DimensionMismatch(format!(
                "operator of dimension {} on a space of dimension {}",
                x.dim(),
                self.model.total_dim()
            )));
        }
        let mut v = vectorize(x);
        for (seg, a, b) in self.model.system().pieces(t_from, t_to) {
            let dt = b - a;
            if let Some(p) = self.cache.get(seg, dt) {
                v = p.matvec(&v);
                continue;
            }
            let repeated = self.dense() && !self.seen.lock().expect("lock poisoned").insert((seg, dt.to_bits()));
            if repeated {
                v = self.interval_propagator(seg, dt)?.matvec(&v);
            } else {
                v = sparse::expmv(&*self.generator(seg)?, C64::new(dt, 0.0), &v)?;
            }
        }
        devectorize(&v)
    }

    /// Dense `Λ(t_to, t_from)`, composed across segments.
    pub fn superoperator(&self, t_from: f64, t_to: f64) -> Result<OperatorMatrix> {
        if !(t_from >= 0.0 && t_to >= t_from) {
            return Err(Error::InvalidArgument(format!("need 0 ≤ t_from ≤ t_to, got {t_from}, {t_to}")));
        }
        let d = self.model.total_dim();
        let mut s = OperatorMatrix::identity(d * d);
        for (seg, a, b) in self.model.system().pieces(t_from, t_to) {
            s = self.interval_propagator(seg, b - a)?.matmul(&s);
        }
        Ok(s)
    }

    pub fn propagate(&self, rho: &DensityMatrix, t_from: f64, t_to: f64) -> Result<DensityMatrix> {
        if rho.layout() != self.model.layout() {
            return Err(Error::DimensionMismatch("state layout differs from the model layout".into()));
        }
        let out = self.apply(rho.matrix(), t_from, t_to)?;
        let drift = (out.trace() - rho.trace()).norm();
        if drift > PRESERVATION_TOL {
            return Err(Error::Numerical(format!("propagation changed the trace by {drift:.3e}")));
        }
        let defect = out.hermiticity_defect() - rho.matrix().hermiticity_defect();
        if defect > PRESERVATION_TOL {
            return Err(Error::Numerical(format!("propagation broke Hermiticity by {defect:.3e}")));
        }
        self.model.check_truncation(&out, true)?;
        DensityMatrix::unchecked(self.model.layout().clone(), out)
    }

    /// `Tr{Ô_n Λ(t_n,t_{n−1})[… Ô₁ Λ(t₁)[ρ(0)] Ô′₁ …] Ô′_n}` by nested sandwiches.
    pub fn multitime(&self, req: &MultiTimeRequest) -> Result<C64> {
        let ds = self.model.system().dim();
        if req.system_dim() != ds {
            return Err(Error::DimensionMismatch(format!(
                "request operators are {}×{}, system is {ds}×{ds}",
                req.system_dim(),
                req.system_dim()
            )));
        }
        let state = self.model.initial_state();
        let mut x = state.matrix().clone();
        let mut t_prev = 0.0;
        for (k, &t) in req.times.iter().enumerate() {
            x = self.apply(&x, t_prev, t)?;
            if k == 0 {
                // still a physical state here
                self.model.check_truncation(&x, true)?;
            }
            t_prev = t;
            let left = self.model.embed_system(&req.left_ops[k])?;
            let right = self.model.embed_system(&req.right_ops[k])?;
            x = left.matmul(&x).matmul(&right);
        }
        let scale: f64 = x.entries().iter().map(|z| z.norm()).sum();
        if scale > 0.0 {
            let top = self.model.top_fock_populations(&x, true);
            if let Some((label, pop)) = top.iter().find(|(_, p)| p / scale > self.model.truncation_tol()) {
                log::warn!("multitime: final object has relative top-Fock weight {:.2e} on {label}", pop / scale);
            }
        }
        Ok(x.trace())
    }

    /// Same quantity as [`Propagator::multitime`] from the vec-trace form
    /// `vec(𝟙)† 𝒮_n Λ_n ⋯ 𝒮_1 Λ_1 vec(ρ(0))` with `𝒮_k = Ô′_kᵀ⊗Ô_k`, contracted right to left
    /// starting from the row vector `vec(𝟙)†`, so every propagator acts in the Heisenberg picture.
    pub fn multitime_chain(&self, req: &MultiTimeRequest) -> Result<C64> {
        let ds = self.model.system().dim();
        if req.system_dim() != ds {
            return Err(Error::DimensionMismatch("request operators do not match the system".into()));
        }
        let d = self.model.total_dim();
        // row vector stored as a column: w ↦ wᵀ
        let mut w = vec![C64::new(0.0, 0.0); d * d];
        for i in 0..d {
            w[i * d + i] = C64::new(1.0, 0.0);
        }
        let n = req.len();
        for k in (0..n).rev() {
            let left = self.model.embed_system(&req.left_ops[k])?;
            let right = self.model.embed_system(&req.right_ops[k])?;
            let insert = CsrMatrix::from_dense(&algebra::sandwich(&left, &right));
            w = insert.transpose().matvec(&w);
            let t_prev = if k == 0 { 0.0 } else { req.times[k - 1] };
            for (seg, a, b) in self.model.system().pieces(t_prev, req.times[k]).into_iter().rev() {
                w = sparse::expmv(&*self.adjoint_generator(seg)?, C64::new(b - a, 0.0), &w)?;
            }
        }
        let rho0 = vectorize(self.model.initial_state().matrix());
        Ok(w.iter().zip(&rho0).map(|(a, b)| a * b).sum())
    }
}

/// Single-shot [`Propagator::propagate`].
pub fn propagate(m: &GklsModel, rho: &DensityMatrix, t_from: f64, t_to: f64) -> Result<DensityMatrix> {
    Propagator::new(m).propagate(rho, t_from, t_to)
}

pub fn multitime_gkls(m: &GklsModel, req: &MultiTimeRequest) -> Result<C64> {
    Propagator::new(m).multitime(req)
}

pub fn multitime_chain(m: &GklsModel, req: &MultiTimeRequest) -> Result<C64> {
    Propagator::new(m).multitime_chain(req)
}

/// Evaluates independent requests in parallel over one shared propagator cache.
pub fn multitime_batch(m: &GklsModel, reqs: &[MultiTimeRequest]) -> Vec<Result<C64>> {
    let prop = Propagator::new(m);
    reqs.par_iter().map(|r| prop.multitime(r)).collect()
}

/// `⟨X(t+τ) Y(t)⟩`
pub fn two_time_correlator(m: &GklsModel, x: &OperatorMatrix, y: &OperatorMatrix, t: f64, tau: f64) -> Result<C64> {
    if !(t >= 0.0 && tau >= 0.0) {
        return Err(Error::InvalidArgument("t and τ must be non-negative".into()));
    }
    let id = OperatorMatrix::identity(m.system().dim());
    let req = MultiTimeRequest::new(vec![t, t + tau], vec![y.clone(), x.clone()], vec![id.clone(), id])?;
    multitime_gkls(m, &req)
}

/// Probability of a sequence of measurement outcomes with Kraus operators `O_k` at `t_k`.
pub fn measurement_sequence_probability(m: &GklsModel, times: &[f64], kraus: &[OperatorMatrix]) -> Result<f64> {
    let req = MultiTimeRequest::measurement(times.to_vec(), kraus.to_vec())?;
    let p = multitime_gkls(m, &req)?;
    if p.re < -NEGATIVITY_TOL || p.im.abs() > NEGATIVITY_TOL.max(1e-9 * p.re.abs()) {
        return Err(Error::Numerical(format!("measurement probability {p} is not a non-negative real")));
    }
    Ok(p.re.max(0.0))
}

/// `g(τ) = ⟨d†(t_ss+τ) d(t_ss)⟩` on a grid starting at 0.
pub fn dipole_correlation(m: &GklsModel, dipole_down: &OperatorMatrix, t_ss: f64, tau_grid: &[f64]) -> Result<Vec<C64>> {
    if !(t_ss >= 0.0) {
        return Err(Error::InvalidArgument("t_ss must be non-negative".into()));
    }
    let prop = Propagator::new(m);
    let d = m.embed_system(dipole_down)?;
    let d_dag = d.dagger();
    let rho = prop.apply(m.initial_state().matrix(), 0.0, t_ss)?;
    let mut x = d.matmul(&rho);
    let mut out = Vec::with_capacity(tau_grid.len());
    let mut tau_prev = 0.0;
    for &tau in tau_grid {
        x = prop.apply(&x, t_ss + tau_prev, t_ss + tau)?;
        tau_prev = tau;
        out.push(d_dag.matmul(&x).trace());
    }
    Ok(out)
}

/// `S(ω) = 2 Re Σ_k w_k e^{−iωτ_k} g(τ_k)` with trapezoidal weights on a uniform τ grid
/// starting at 0; no window is applied.
pub fn emission_spectrum(
    m: &GklsModel,
    dipole_down: &OperatorMatrix,
    t_ss: f64,
    tau_grid: &[f64],
    freq_grid: &[f64],
) -> Result<Vec<f64>> {
    if tau_grid.len() < 2 || tau_grid[0] != 0.0 {
        return Err(Error::InvalidArgument("τ grid must start at 0 and hold at least two points".into()));
    }
    let dtau = uniform_step(tau_grid)?;
    let g = dipole_correlation(m, dipole_down, t_ss, tau_grid)?;
    Ok(spectrum_from_correlation(&g, dtau, tau_grid, freq_grid))
}

pub(crate) fn spectrum_from_correlation(g: &[C64], dtau: f64, tau_grid: &[f64], freq_grid: &[f64]) -> Vec<f64> {
    let n = g.len();
    freq_grid
        .par_iter()
        .map(|&w| {
            let mut acc = C64::new(0.0, 0.0);
            for (k, (&tau, &gk)) in tau_grid.iter().zip(g).enumerate() {
                let weight = if k == 0 || k == n - 1 { 0.5 * dtau } else { dtau };
                acc += gk * C64::new(0.0, -w * tau).exp() * weight;
            }
            2.0 * acc.re
        })
        .collect()
}

/// `ρ_S(t) = Tr_B ρ(t)` on a grid of times.
pub fn reduced_system_trajectory(m: &GklsModel, grid: &[f64]) -> Result<Vec<OperatorMatrix>> {
    let prop = Propagator::new(m);
    let mut rho = m.initial_state();
    let mut t_prev = 0.0;
    let mut out = Vec::with_capacity(grid.len());
    for &t in grid {
        rho = prop.propagate(&rho, t_prev, t)?;
        t_prev = t;
        out.push(algebra::partial_trace(&rho, &["S"])?.into_matrix());
    }
    Ok(out)
}

/// Tensor product `ρ_S ⊗ ρ_B` laid out as the model's state.
pub fn product_state(m: &GklsModel, rho_s: &OperatorMatrix, rho_b: &OperatorMatrix) -> Result<DensityMatrix> {
    if rho_s.dim() != m.system().dim() || rho_b.dim() != m.bath_dim() {
        return Err(Error::DimensionMismatch("factor dimensions differ from the model".into()));
    }
    DensityMatrix::new(m.layout().clone(), kron(rho_s, rho_b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::{pauli_x, pauli_y, pauli_z, projector, sigma_minus, sigma_plus};
    use crate::gkls::{BathState, HamiltonianSegment, PseudoMode, PseudomodeParams, SystemModel};
    use proptest::prelude::*;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    fn plus_state() -> OperatorMatrix {
        OperatorMatrix::from_real_rows(&[&[0.5, 0.5], &[0.5, 0.5]]).unwrap()
    }

    fn dephasing_model(omega: f64, gamma: f64, g: f64, n_max: usize) -> GklsModel {
        let system = SystemModel::constant(pauli_z().scale_real(0.5), vec![pauli_z()]).unwrap();
        GklsModel::new(
            system,
            PseudomodeParams::single(omega, gamma, g, n_max).unwrap(),
            BathState::Vacuum,
            plus_state(),
        )
        .unwrap()
    }

    /// Resonant Jaynes–Cummings `g(σ₊b + σ₋b†)` written as two Hermitian channels.
    fn jaynes_cummings(w0: f64, g: f64, gamma: f64, n_max: usize) -> GklsModel {
        let system = SystemModel::constant(pauli_z().scale_real(0.5 * w0), vec![pauli_x(), pauli_y()]).unwrap();
        let bath = PseudomodeParams::new(
            vec![PseudoMode { omega: w0, gamma, n_max }],
            vec![vec![c(g / 2.0)], vec![C64::new(0.0, g / 2.0)]],
            None,
        )
        .unwrap();
        GklsModel::new(system, bath, BathState::Vacuum, projector(2, 0)).unwrap()
    }

    fn two_mode_model() -> GklsModel {
        let segments = vec![
            HamiltonianSegment { t_start: 0.0, hamiltonian: pauli_z().scale_real(0.5) },
            HamiltonianSegment { t_start: 1.2, hamiltonian: &pauli_z().scale_real(0.5) + &pauli_x().scale_real(0.3) },
        ];
        let system = SystemModel::new(2, segments, vec![pauli_x()]).unwrap();
        let bath = PseudomodeParams::new(
            vec![PseudoMode { omega: 1.0, gamma: 0.6, n_max: 3 }, PseudoMode { omega: 0.7, gamma: 0.3, n_max: 2 }],
            vec![vec![c(0.25), C64::new(0.1, 0.05)]],
            None,
        )
        .unwrap();
        // a coarse truncation is enough for the algebraic identities checked here
        GklsModel::new(system, bath, BathState::Vacuum, projector(2, 0)).unwrap().with_truncation_tol(0.1)
    }

    #[test]
    fn zero_interval_is_identity() {
        let m = two_mode_model();
        let rho = m.initial_state();
        let out = propagate(&m, &rho, 0.7, 0.7).unwrap();
        assert_eq!(out.matrix(), rho.matrix());
    }

    #[test]
    fn unitary_limit_matches_conjugation() {
        let m = dephasing_model(1.0, 0.0, 0.1, 8);
        let t = 1.7;
        let out = propagate(&m, &m.initial_state(), 0.0, t).unwrap();
        let u = expm(&m.hamiltonian_on_segment(0).scale(C64::new(0.0, -t))).unwrap();
        let rho0 = m.initial_state().into_matrix();
        assert!(out.matrix().max_abs_diff(&u.matmul(&rho0).matmul(&u.dagger())) < 1e-10);
    }

    #[test]
    fn damped_mode_population() {
        let gamma = 0.5;
        let m = dephasing_model(1.0, gamma, 0.0, 3);
        let rho = product_state(&m, &projector(2, 1), &projector(3, 1)).unwrap();
        let n_op = kron(&OperatorMatrix::identity(2), &algebra::number(3).unwrap());
        for t in [0.5, 2.0, 6.0] {
            let out = propagate(&m, &rho, 0.0, t).unwrap();
            let n = out.expectation(&n_op);
            assert!((n.re - (-gamma * t).exp()).abs() < 1e-10);
        }
    }

    #[test]
    fn truncation_breach_names_mode() {
        let m = jaynes_cummings(1.0, 2.0, 0.0, 2);
        let err = propagate(&m, &m.initial_state(), 0.0, 1.0).unwrap_err();
        match err {
            Error::TruncationBreach { label, .. } => assert_eq!(label, "B1"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn identity_requests_give_one() {
        let m = two_mode_model();
        let req = MultiTimeRequest::identity(vec![0.3, 1.0, 1.0, 2.5], 2).unwrap();
        assert!((multitime_gkls(&m, &req).unwrap() - c(1.0)).norm() < 1e-12);
    }

    #[test]
    fn single_time_mean() {
        let m = two_mode_model();
        let t = 1.9;
        let req = MultiTimeRequest::new(vec![t], vec![pauli_z()], vec![OperatorMatrix::identity(2)]).unwrap();
        let rho = propagate(&m, &m.initial_state(), 0.0, t).unwrap();
        let direct = rho.expectation(&m.embed_system(&pauli_z()).unwrap());
        assert!((multitime_gkls(&m, &req).unwrap() - direct).norm() < 1e-12);
    }

    #[test]
    fn jaynes_cummings_rabi_correlator() {
        let (w0, g) = (1.0, 0.4);
        let m = jaynes_cummings(w0, g, 0.0, 3);
        for tau in [0.0, 0.6, 2.1, 5.0] {
            let got = two_time_correlator(&m, &sigma_plus(), &sigma_minus(), 0.0, tau).unwrap();
            let exact = C64::new(0.0, w0 * tau).exp() * (g * tau).cos();
            assert!((got - exact).norm() < 1e-10, "τ={tau}: {got} vs {exact}");
        }
    }

    #[test]
    fn correlator_edge_cases() {
        let m = two_mode_model();
        let id = OperatorMatrix::identity(2);
        assert!((two_time_correlator(&m, &id, &id, 0.4, 1.3).unwrap() - c(1.0)).norm() < 1e-12);
        let (x, y) = (pauli_x(), sigma_minus());
        let at_zero = two_time_correlator(&m, &x, &y, 0.8, 0.0).unwrap();
        let rho = propagate(&m, &m.initial_state(), 0.0, 0.8).unwrap();
        let direct = rho.expectation(&m.embed_system(&x.matmul(&y)).unwrap());
        assert!((at_zero - direct).norm() < 1e-12);
    }

    #[test]
    fn projective_measurements_complete() {
        let m = two_mode_model();
        let p0 = measurement_sequence_probability(&m, &[0.9], &[projector(2, 0)]).unwrap();
        let p1 = measurement_sequence_probability(&m, &[0.9], &[projector(2, 1)]).unwrap();
        assert!((p0 + p1 - 1.0).abs() < 1e-9);
        let twice = measurement_sequence_probability(&m, &[0.9, 0.9], &[projector(2, 0), projector(2, 0)]).unwrap();
        assert!((twice - p0).abs() < 1e-12);
    }

    #[test]
    fn cache_matches_fresh_computation() {
        let m = two_mode_model();
        let prop = Propagator::new(&m);
        let a = prop.interval_propagator(1, 0.37).unwrap();
        let b = prop.interval_propagator(1, 0.37).unwrap();
        assert!(Arc::ptr_eq(&a, &b));
        assert_eq!(prop.cache().len(), 1);
        let fresh = expm(&m.liouvillian_sparse_on_segment(1).unwrap().to_dense().scale_real(0.37)).unwrap();
        assert!(a.max_abs_diff(&fresh) < 1e-12);
    }

    #[test]
    fn concurrent_batch_agrees_with_serial() {
        let m = two_mode_model();
        let reqs: Vec<_> = (0..12)
            .map(|k| {
                let t = 0.2 * k as f64;
                MultiTimeRequest::new(
                    vec![t, t + 0.5, 2.0 + t],
                    vec![sigma_minus(), pauli_z(), sigma_plus()],
                    vec![OperatorMatrix::identity(2), pauli_x(), OperatorMatrix::identity(2)],
                )
                .unwrap()
            })
            .collect();
        let batch = multitime_batch(&m, &reqs);
        for (r, b) in reqs.iter().zip(batch) {
            assert!((multitime_gkls(&m, r).unwrap() - b.unwrap()).norm() < 1e-12);
        }
    }

    #[test]
    fn request_validation() {
        let id = OperatorMatrix::identity(2);
        assert!(MultiTimeRequest::new(vec![1.0, 0.5], vec![id.clone(); 2], vec![id.clone(); 2]).is_err());
        assert!(MultiTimeRequest::new(vec![1.0], vec![id.clone(); 2], vec![id.clone()]).is_err());
        assert!(MultiTimeRequest::new(vec![], vec![], vec![]).is_err());
        let m = two_mode_model();
        let wrong = MultiTimeRequest::identity(vec![1.0], 3).unwrap();
        assert!(multitime_gkls(&m, &wrong).is_err());
    }

    #[test]
    fn zero_dipole_has_zero_spectrum() {
        let m = dephasing_model(1.0, 0.5, 0.2, 3);
        let taus: Vec<f64> = (0..50).map(|k| 0.1 * k as f64).collect();
        let s = emission_spectrum(&m, &OperatorMatrix::zeros(2), 0.0, &taus, &[0.0, 1.0]).unwrap();
        assert!(s.iter().all(|&v| v == 0.0));
    }

    fn peak(s: &[f64]) -> (usize, f64) {
        s.iter().enumerate().fold((0, f64::MIN), |acc, (k, &v)| if v > acc.1 { (k, v) } else { acc })
    }

    #[test]
    fn undamped_emitter_line_position() {
        let w0 = 1.3;
        let system = SystemModel::constant(pauli_z().scale_real(0.5 * w0), vec![]).unwrap();
        let bath = PseudomodeParams::new(vec![], vec![], None).unwrap();
        let m = GklsModel::new(system, bath, BathState::Vacuum, projector(2, 0)).unwrap();
        let taus: Vec<f64> = (0..2001).map(|k| 0.05 * k as f64).collect();
        let freqs: Vec<f64> = (0..301).map(|k| 0.01 * k as f64).collect();
        let s = emission_spectrum(&m, &sigma_minus(), 0.0, &taus, &freqs).unwrap();
        let (k, _) = peak(&s);
        assert!((freqs[k] - w0).abs() <= 0.01 + 1e-12);
    }

    #[test]
    fn damped_emitter_linewidth() {
        // one-excitation amplitude decays at the slow root of λ² + γλ/2 + g² = 0,
        // close to the bad-cavity rate 2g²/γ
        let (w0, g, gamma) = (1.0, 0.6, 12.0);
        let m = jaynes_cummings(w0, g, gamma, 2);
        let half_width = gamma / 4.0 - (gamma * gamma / 16.0 - g * g).sqrt();
        assert!((half_width - 2.0 * g * g / gamma).abs() < 0.02 * half_width);
        let taus: Vec<f64> = (0..4001).map(|k| 0.05 * k as f64).collect();
        let dw = 0.002;
        let freqs: Vec<f64> = (0..501).map(|k| 0.5 + dw * k as f64).collect();
        let s = emission_spectrum(&m, &sigma_minus(), 0.0, &taus, &freqs).unwrap();
        let (k, top) = peak(&s);
        assert!((freqs[k] - w0).abs() <= dw + 1e-12);
        let right = (k..freqs.len()).find(|&i| s[i] < top / 2.0).unwrap();
        let left = (0..=k).rev().find(|&i| s[i] < top / 2.0).unwrap();
        assert!((freqs[right] - freqs[k] - half_width).abs() <= dw, "right {}", freqs[right] - freqs[k]);
        assert!((freqs[k] - freqs[left] - half_width).abs() <= dw, "left {}", freqs[k] - freqs[left]);
    }

    fn arb_system_op() -> impl Strategy<Value = OperatorMatrix> {
        prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 4).prop_map(|v| {
            OperatorMatrix::new(2, v.into_iter().map(|(a, b)| C64::new(a, b)).collect()).unwrap()
        })
    }

    fn arb_request() -> impl Strategy<Value = MultiTimeRequest> {
        (
            prop::collection::vec(0.0f64..2.5, 3),
            prop::collection::vec(arb_system_op(), 3),
            prop::collection::vec(arb_system_op(), 3),
        )
            .prop_map(|(mut times, l, r)| {
                times.sort_by(f64::total_cmp);
                MultiTimeRequest::new(times, l, r).unwrap()
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn propagator_composition(t1 in 0.0f64..2.0, d1 in 0.0f64..1.5, d2 in 0.0f64..1.5) {
            let m = two_mode_model();
            let prop = Propagator::new(&m);
            let (t2, t3) = (t1 + d1, t1 + d1 + d2);
            let composed = prop.superoperator(t2, t3).unwrap().matmul(&prop.superoperator(t1, t2).unwrap());
            let direct = prop.superoperator(t1, t3).unwrap();
            prop_assert!(composed.max_abs_diff(&direct) < 1e-10);
        }

        #[test]
        fn identity_insertion_is_free(req in arb_request()) {
            let m = two_mode_model();
            let id = OperatorMatrix::identity(2);
            let mut left = req.left_ops().to_vec();
            let mut right = req.right_ops().to_vec();
            left[1] = id.clone();
            right[1] = id;
            let with_identity = MultiTimeRequest::new(req.times().to_vec(), left.clone(), right.clone()).unwrap();
            let removed = MultiTimeRequest::new(
                vec![req.times()[0], req.times()[2]],
                vec![left[0].clone(), left[2].clone()],
                vec![right[0].clone(), right[2].clone()],
            ).unwrap();
            let a = multitime_gkls(&m, &with_identity).unwrap();
            let b = multitime_gkls(&m, &removed).unwrap();
            prop_assert!((a - b).norm() < 1e-12);
        }

        #[test]
        fn conjugation_symmetry(req in arb_request()) {
            let m = two_mode_model();
            let a = multitime_gkls(&m, &req).unwrap();
            let b = multitime_gkls(&m, &req.conjugate()).unwrap();
            prop_assert!((a.conj() - b).norm() < 1e-12);
        }

        #[test]
        fn nested_equals_chain(req in arb_request()) {
            let m = two_mode_model();
            let a = multitime_gkls(&m, &req).unwrap();
            let b = multitime_chain(&m, &req).unwrap();
            prop_assert!((a - b).norm() < 1e-12);
        }

        #[test]
        fn propagation_preserves_trace_and_hermiticity(t in 0.0f64..4.0) {
            let m = two_mode_model();
            let out = propagate(&m, &m.initial_state(), 0.0, t).unwrap();
            prop_assert!((out.trace() - c(1.0)).norm() < 1e-9);
            prop_assert!(out.matrix().hermiticity_defect() < 1e-9);
        }
    }
}
