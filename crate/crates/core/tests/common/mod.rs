//! Closed-form references shared by the integration tests.
#![allow(dead_code)]

use num_complex::Complex64 as C64;
use pseudomode::algebra::{pauli_x, pauli_y, pauli_z, OperatorMatrix};
use pseudomode::gkls::{BathState, GklsModel, PseudomodeParams, SystemModel};

pub fn plus_state() -> OperatorMatrix {
    OperatorMatrix::from_real_rows(&[&[0.5, 0.5], &[0.5, 0.5]]).unwrap()
}

/// Qubit with `H = ½ω σ_z`, coupled through `σ_z` to one Lorentzian mode, started in |+⟩.
pub fn dephasing_model(omega_s: f64, lambda: f64, omega: f64, gamma: f64, n_max: usize) -> GklsModel {
    let sys = SystemModel::constant(pauli_z().scale_real(0.5 * omega_s), vec![pauli_z()]).unwrap();
    let bath = PseudomodeParams::single(omega, gamma, lambda, n_max).unwrap();
    GklsModel::new(sys, bath, BathState::Vacuum, plus_state()).unwrap()
}

/// `G(x) = ∫₀ˣ∫₀ᵘ C(v) dv du` for `C(t) = λ² e^{−zt}`, `z = γ/2 + iΩ`.
fn double_integral(lambda: f64, omega: f64, gamma: f64, x: f64) -> C64 {
    let z = C64::new(0.5 * gamma, omega);
    lambda * lambda * (x / z - (1.0 - (-z * x).exp()) / (z * z))
}

/// `⟨σ₊(t₂) σ₋(t₁)⟩` for the pure-dephasing qubit above, exact for a Gaussian bath.
pub fn dephasing_coherence(omega_s: f64, lambda: f64, omega: f64, gamma: f64, t1: f64, t2: f64) -> C64 {
    let g = |x: f64| double_integral(lambda, omega, gamma, x);
    let tau = t2 - t1;
    let (g1, g2, gt) = (g(t1), g(t2), g(tau));
    let a = 2.0 * g1 + 2.0 * gt - g2;
    let b = g2.conj();
    let r = g2 - gt - g1;
    let m = 2.0 * g1.re + r - r.conj() - 2.0 * gt.re;
    let phi = a + b - m;
    0.5 * C64::new(0.0, omega_s * tau).exp() * (-phi).exp()
}

/// Jaynes–Cummings qubit `g(σ₊b + σ₋b†)` written as two Hermitian channels
/// (`σ_x` with `g/2`, `σ_y` with `ig/2`) on one undamped mode, started in |e,0⟩.
pub fn jaynes_cummings_model(omega: f64, g: f64, n_max: usize) -> GklsModel {
    let h = pauli_z().scale_real(0.5 * omega);
    let sys = SystemModel::constant(h, vec![pauli_x(), pauli_y()]).unwrap();
    let modes = PseudomodeParams::single(omega, 0.0, 1.0, n_max).unwrap().modes;
    let bath = PseudomodeParams::new(modes, vec![vec![C64::new(0.5 * g, 0.0)], vec![C64::new(0.0, 0.5 * g)]], None).unwrap();
    let excited = pseudomode::algebra::projector(2, 0);
    GklsModel::new(sys, bath, BathState::Vacuum, excited).unwrap()
}

/// `⟨σ₊(τ)σ₋(0)⟩` from |e,0⟩ on resonance.
pub fn jaynes_cummings_coherence(omega: f64, g: f64, tau: f64) -> C64 {
    C64::new(0.0, omega * tau).exp() * (g * tau).cos()
}
