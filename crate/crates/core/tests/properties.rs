mod common;

use num_complex::Complex64 as C64;
use proptest::prelude::*;

use pseudomode::algebra::*;
use pseudomode::bath::{correlation_analytic, SpectralDensity, SpectralKind};
use pseudomode::gkls::*;
use pseudomode::multitime::*;

fn small_op() -> impl Strategy<Value = OperatorMatrix> {
    proptest::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 4)
        .prop_map(|v| OperatorMatrix::new(2, v.into_iter().map(|(a, b)| C64::new(a, b)).collect()).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn single_mode_correlation_identity(omega in -2.0f64..2.0, gamma in 0.2f64..2.0, g in 0.05f64..0.5, t in 0.0f64..1.0) {
        let t = t * 10.0 / gamma;
        let sys = SystemModel::constant(pauli_z(), vec![pauli_z()]).unwrap();
        let bath = PseudomodeParams::single(omega, gamma, g, 3).unwrap();
        let m = GklsModel::new(sys, bath, BathState::Vacuum, projector(2, 0)).unwrap();
        let got = free_bath_two_time(&m, 0, 0, t, 0.0).unwrap();
        let want = g * g * C64::new(-0.5 * gamma * t, -omega * t).exp();
        prop_assert!((got - want).norm() < 1e-8);
    }

    #[test]
    fn correlation_is_hermitian_in_time(alpha in 0.05f64..0.5, cutoff in 0.5f64..5.0, temp in 0.0f64..2.0, t in 0.0f64..5.0) {
        let sd = SpectralDensity::new(SpectralKind::OhmicExpCutoff { coupling: alpha, cutoff, exponent: 1.0 }, temp).unwrap();
        let plus = correlation_analytic(&sd, t).unwrap();
        let minus = correlation_analytic(&sd, -t).unwrap();
        prop_assert!((plus.conj() - minus).norm() <= 1e-14 * plus.norm().max(1.0));
    }

    #[test]
    fn liouvillian_preserves_trace(omega in -2.0f64..2.0, gamma in 0.0f64..2.0, g in -0.5f64..0.5, h in small_op(), a in small_op()) {
        let h = (h.clone() + h.dagger()).scale_real(0.5);
        let a = (a.clone() + a.dagger()).scale_real(0.5);
        let sys = SystemModel::constant(h, vec![a]).unwrap();
        let bath = PseudomodeParams::single(omega, gamma, g, 3).unwrap();
        let m = GklsModel::new(sys, bath, BathState::Vacuum, projector(2, 1)).unwrap();
        let l = build_liouvillian(&m, 0.0).unwrap();
        prop_assert!(trace_preservation_defect(&l) < 1e-10);
    }

    #[test]
    fn two_time_regression_paths_agree(t1 in 0.0f64..3.0, d in 0.0f64..3.0, x in small_op(), y in small_op(), xr in small_op(), yr in small_op()) {
        let m = common::dephasing_model(1.0, 0.3, 0.8, 0.6, 4).with_truncation_tol(1.0);
        let req = MultiTimeRequest::new(vec![t1, t1 + d], vec![x, y], vec![xr, yr]).unwrap();
        let a = multitime_gkls(&m, &req).unwrap();
        let b = multitime_chain(&m, &req).unwrap();
        prop_assert!((a - b).norm() < 1e-12);
    }
}
