//! Compressed sparse row matrices and the action of their exponential on vectors.
//!
//! Used where dense superoperators or dilated Hilbert spaces become too large:
//! free-bath Liouvillians with deep Fock truncations and the brute-force oracles.

use num_complex::Complex64 as C64;
use rayon::prelude::*;

use crate::algebra::OperatorMatrix;
use crate::error::{Error, Result};

const PAR_THRESHOLD: usize = 1 << 14;

#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    indptr: Vec<usize>,
    indices: Vec<u32>,
    data: Vec<C64>,
}

impl CsrMatrix {
    /// Assembles from CSR arrays with sorted, duplicate-free column indices per row.
    pub(crate) fn from_raw_parts(n: usize, indptr: Vec<usize>, indices: Vec<u32>, data: Vec<C64>) -> Self {
        debug_assert_eq!(indptr.len(), n + 1);
        debug_assert_eq!(indices.len(), data.len());
        Self { n, indptr, indices, data }
    }

    /// Builds from `(row, col, value)` triplets; duplicates are summed and exact zeros dropped.
    pub fn from_triplets(n: usize, mut triplets: Vec<(usize, usize, C64)>) -> Result<Self> {
        if n > u32::MAX as usize {
            return Err(Error::ResourceCap {
                what: "sparse dimension",
                value: n,
                cap: u32::MAX as usize,
            });
        }
        if let Some(&(r, c, _)) = triplets.iter().find(|(r, c, _)| *r >= n || *c >= n) {
            return Err(Error::DimensionMismatch(format!("triplet ({r}, {c}) outside {n}x{n}")));
        }
        triplets.sort_unstable_by_key(|&(r, c, _)| (r, c));
        let mut indptr = vec![0usize; n + 1];
        let mut indices = Vec::with_capacity(triplets.len());
        let mut data: Vec<C64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            if last == Some((r, c)) {
                *data.last_mut().unwrap() += v;
            } else {
                indices.push(c as u32);
                data.push(v);
                indptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..n {
            indptr[r + 1] += indptr[r];
        }
        let mut m = Self { n, indptr, indices, data };
        m.prune();
        Ok(m)
    }

    pub fn from_dense(m: &OperatorMatrix) -> Self {
        let n = m.dim();
        let mut indptr = Vec::with_capacity(n + 1);
        let mut indices = Vec::new();
        let mut data = Vec::new();
        indptr.push(0);
        for i in 0..n {
            for j in 0..n {
                let v = m[(i, j)];
                if v != C64::new(0.0, 0.0) {
                    indices.push(j as u32);
                    data.push(v);
                }
            }
            indptr.push(data.len());
        }
        Self { n, indptr, indices, data }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            n,
            indptr: (0..=n).collect(),
            indices: (0..n as u32).collect(),
            data: vec![C64::new(1.0, 0.0); n],
        }
    }

    fn prune(&mut self) {
        let zero = C64::new(0.0, 0.0);
        if self.data.iter().all(|v| *v != zero) {
            return;
        }
        let mut indptr = vec![0usize; self.n + 1];
        let mut indices = Vec::with_capacity(self.data.len());
        let mut data = Vec::with_capacity(self.data.len());
        for r in 0..self.n {
            for k in self.indptr[r]..self.indptr[r + 1] {
                if self.data[k] != zero {
                    indices.push(self.indices[k]);
                    data.push(self.data[k]);
                }
            }
            indptr[r + 1] = data.len();
        }
        self.indptr = indptr;
        self.indices = indices;
        self.data = data;
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.data.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, C64)> + '_ {
        (self.indptr[r]..self.indptr[r + 1]).map(move |k| (self.indices[k] as usize, self.data[k]))
    }

    pub fn triplets(&self) -> Vec<(usize, usize, C64)> {
        (0..self.n)
            .flat_map(|r| self.row(r).map(move |(c, v)| (r, c, v)))
            .collect()
    }

    pub fn to_dense(&self) -> OperatorMatrix {
        let mut m = OperatorMatrix::zeros(self.n);
        for r in 0..self.n {
            for (c, v) in self.row(r) {
                m[(r, c)] += v;
            }
        }
        m
    }

    pub fn transpose(&self) -> Self {
        let t = self.triplets().into_iter().map(|(r, c, v)| (c, r, v)).collect();
        Self::from_triplets(self.n, t).expect("transpose keeps dimensions")
    }

    pub fn conj(&self) -> Self {
        let mut m = self.clone();
        for v in &mut m.data {
            *v = v.conj();
        }
        m
    }

    pub fn dagger(&self) -> Self {
        self.transpose().conj()
    }

    pub fn scale(&self, s: C64) -> Self {
        let mut m = self.clone();
        for v in &mut m.data {
            *v *= s;
        }
        m.prune();
        m
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.n != other.n {
            return Err(Error::DimensionMismatch("sparse add".into()));
        }
        let mut t = self.triplets();
        t.extend(other.triplets());
        Self::from_triplets(self.n, t)
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.n != other.n {
            return Err(Error::DimensionMismatch("sparse matmul".into()));
        }
        let mut t = Vec::new();
        for r in 0..self.n {
            for (k, a) in self.row(r) {
                for (c, b) in other.row(k) {
                    t.push((r, c, a * b));
                }
            }
        }
        Self::from_triplets(self.n, t)
    }

    /// `y = A x`
    pub fn matvec_into(&self, x: &[C64], y: &mut [C64]) {
        assert_eq!(x.len(), self.n);
        assert_eq!(y.len(), self.n);
        let row = |(r, out): (usize, &mut C64)| {
            let mut acc = C64::new(0.0, 0.0);
            for k in self.indptr[r]..self.indptr[r + 1] {
                acc += self.data[k] * x[self.indices[k] as usize];
            }
            *out = acc;
        };
        if self.n >= PAR_THRESHOLD {
            y.par_iter_mut().enumerate().with_min_len(2048).for_each(row);
        } else {
            y.iter_mut().enumerate().for_each(row);
        }
    }

    pub fn matvec(&self, x: &[C64]) -> Vec<C64> {
        let mut y = vec![C64::new(0.0, 0.0); self.n];
        self.matvec_into(x, &mut y);
        y
    }

    /// Induced 1-norm.
    pub fn norm_one(&self) -> f64 {
        let mut cols = vec![0.0f64; self.n];
        for (k, &c) in self.indices.iter().enumerate() {
            cols[c as usize] += self.data[k].norm();
        }
        cols.into_iter().fold(0.0, f64::max)
    }

    pub fn trace(&self) -> C64 {
        (0..self.n).flat_map(|r| self.row(r).filter(move |(c, _)| *c == r).map(|(_, v)| v)).sum()
    }

    pub fn hermiticity_defect(&self) -> f64 {
        let d = self.dagger().scale(C64::new(-1.0, 0.0));
        self.add(&d)
            .map(|m| m.data.iter().map(|v| v.norm()).fold(0.0, f64::max))
            .unwrap_or(f64::INFINITY)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.re.is_finite() && v.im.is_finite())
    }
}

/// `a ⊗ b` for sparse operands.
pub fn kron(a: &CsrMatrix, b: &CsrMatrix) -> CsrMatrix {
    let nb = b.n;
    let mut t = Vec::with_capacity(a.nnz() * b.nnz());
    for (ra, ca, va) in a.triplets() {
        for (rb, cb, vb) in b.triplets() {
            t.push((ra * nb + rb, ca * nb + cb, va * vb));
        }
    }
    CsrMatrix::from_triplets(a.n * nb, t).expect("kron dimensions consistent")
}

/// Column-stacked GKLS generator `−i(𝟙⊗H − Hᵀ⊗𝟙) + Σ γ (L̄⊗L − ½ 𝟙⊗L†L − ½ (L†L)ᵀ⊗𝟙)`.
pub fn liouvillian(h: &CsrMatrix, dissipators: &[(f64, CsrMatrix)]) -> Result<CsrMatrix> {
    let n = h.dim();
    let id = CsrMatrix::identity(n);
    let minus_i = C64::new(0.0, -1.0);
    let mut terms = kron(&id, h).scale(minus_i).triplets();
    terms.extend(kron(&h.transpose(), &id).scale(-minus_i).triplets());
    for (rate, l) in dissipators {
        if l.dim() != n {
            return Err(Error::DimensionMismatch("Lindblad operator dimension".into()));
        }
        if *rate == 0.0 {
            continue;
        }
        let r = C64::new(*rate, 0.0);
        let ldl = l.dagger().matmul(l)?;
        terms.extend(kron(&l.conj(), l).scale(r).triplets());
        terms.extend(kron(&id, &ldl).scale(-0.5 * r).triplets());
        terms.extend(kron(&ldl.transpose(), &id).scale(-0.5 * r).triplets());
    }
    CsrMatrix::from_triplets(n * n, terms)
}

/// Tolerance on the Taylor remainder relative to the propagated vector norm.
pub const EXPMV_TOL: f64 = 1e-15;
const EXPMV_THETA: f64 = 4.0;
const EXPMV_MAX_TERMS: usize = 80;

/// `e^{s A} v` by scaled Taylor steps with a trace shift.
pub fn expmv(a: &CsrMatrix, s: C64, v: &[C64]) -> Result<Vec<C64>> {
    if v.len() != a.dim() {
        return Err(Error::DimensionMismatch("expmv vector length".into()));
    }
    if !a.is_finite() || !(s.re.is_finite() && s.im.is_finite()) {
        return Err(Error::NonFinite);
    }
    if s == C64::new(0.0, 0.0) {
        return Ok(v.to_vec());
    }
    let n = a.dim();
    let mu = a.trace() / n as f64;
    // the shift only enters as a scalar factor; the Taylor series uses (A − μ) s
    let shift_norm = mu.norm();
    let norm = (a.norm_one() + shift_norm) * s.norm();
    let steps = ((norm / EXPMV_THETA).ceil() as usize).max(1);
    let h = s / steps as f64;
    let eta = (mu * h).exp();

    let mut f = v.to_vec();
    let mut term = vec![C64::new(0.0, 0.0); n];
    let mut work = vec![C64::new(0.0, 0.0); n];
    for _ in 0..steps {
        term.copy_from_slice(&f);
        let mut prev_small = false;
        let f_norm0 = inf_norm(&f);
        for k in 1..=EXPMV_MAX_TERMS {
            a.matvec_into(&term, &mut work);
            let scale = h / k as f64;
            let mu_scale = mu * h / k as f64;
            for i in 0..n {
                term[i] = work[i] * scale - term[i] * mu_scale;
            }
            let t_norm = inf_norm(&term);
            for i in 0..n {
                f[i] += term[i];
            }
            let small = t_norm <= EXPMV_TOL * inf_norm(&f).max(f_norm0 * 1e-300);
            if small && prev_small {
                break;
            }
            if k == EXPMV_MAX_TERMS {
                return Err(Error::Numerical("Taylor series for expmv did not converge".into()));
            }
            prev_small = small;
        }
        for x in f.iter_mut() {
            *x *= eta;
        }
    }
    Ok(f)
}

/// Gershgorin interval `[lo, hi]` containing the spectrum of a Hermitian matrix.
pub fn gershgorin_bounds(h: &CsrMatrix) -> (f64, f64) {
    (0..h.n)
        .into_par_iter()
        .map(|r| {
            let (mut diag, mut radius) = (0.0, 0.0);
            for (c, v) in h.row(r) {
                if c == r {
                    diag = v.re;
                } else {
                    radius += v.norm();
                }
            }
            (diag - radius, diag + radius)
        })
        .reduce(|| (f64::INFINITY, f64::NEG_INFINITY), |a, b| (a.0.min(b.0), a.1.max(b.1)))
}

const CHEBYSHEV_MAX_ARG: f64 = 200.0;

/// `J_0(x) … J_n(x)` for `x > 0` by Miller's backward recurrence.
fn bessel_j_sequence(x: f64, n: usize) -> Vec<f64> {
    let start = n + 40 + (x.sqrt() * 4.0) as usize;
    let mut j = vec![0.0; start + 2];
    j[start] = 1e-300;
    for k in (1..=start).rev() {
        j[k - 1] = 2.0 * k as f64 / x * j[k] - j[k + 1];
        if j[k - 1].abs() > 1e250 {
            for v in j[k - 1..].iter_mut() {
                *v *= 1e-250;
            }
        }
    }
    let norm = j[0] + 2.0 * j.iter().skip(2).step_by(2).sum::<f64>();
    j.truncate(n + 1);
    j.iter_mut().for_each(|v| *v /= norm);
    j
}

/// `e^{−iHt} v` for Hermitian `H` by a Chebyshev expansion on the Gershgorin interval.
/// Needs about `(hi − lo)·|t|/2` products, far fewer than a Taylor expansion on the 1-norm.
pub fn expmv_hermitian(h: &CsrMatrix, t: f64, v: &[C64]) -> Result<Vec<C64>> {
    if v.len() != h.dim() {
        return Err(Error::DimensionMismatch("expmv vector length".into()));
    }
    if !h.is_finite() || !t.is_finite() {
        return Err(Error::NonFinite);
    }
    let (lo, hi) = gershgorin_bounds(h);
    let c = 0.5 * (hi + lo);
    let r = 0.5 * (hi - lo);
    if h.n == 0 || t == 0.0 {
        return Ok(v.to_vec());
    }
    if r <= f64::EPSILON * c.abs().max(1.0) {
        let phase = C64::new(0.0, -c * t).exp();
        return Ok(v.iter().map(|z| z * phase).collect());
    }
    let steps = ((r * t.abs() / CHEBYSHEV_MAX_ARG).ceil() as usize).max(1);
    let dt = t / steps as f64;
    let x = r * dt.abs();
    let order = (x + 12.0 * x.cbrt() + 30.0).ceil() as usize;
    let bessel = bessel_j_sequence(x, order);
    // e^{−i x y} = Σ_k (2 − δ_k0) (−i)^k J_k(x) T_k(y), conjugated for negative dt
    let sign = dt.signum();
    let coeff: Vec<C64> = bessel
        .iter()
        .enumerate()
        .map(|(k, &jk)| {
            let w = if k == 0 { 1.0 } else { 2.0 };
            C64::new(0.0, -sign).powu(k as u32) * (w * jk)
        })
        .collect();
    let phase = C64::new(0.0, -c * dt).exp();
    let n = h.n;
    let mut f = v.to_vec();
    let mut t_prev = vec![C64::new(0.0, 0.0); n];
    let mut t_cur = vec![C64::new(0.0, 0.0); n];
    let mut work = vec![C64::new(0.0, 0.0); n];
    let (inv_r, c_r) = (1.0 / r, c / r);
    for _ in 0..steps {
        t_prev.copy_from_slice(&f);
        h.matvec_into(&t_prev, &mut work);
        t_cur.par_iter_mut().zip(work.par_iter()).zip(t_prev.par_iter()).for_each(|((o, w), p)| {
            *o = w * inv_r - p * c_r;
        });
        let (c0, c1) = (coeff[0], coeff[1]);
        f.par_iter_mut().zip(t_prev.par_iter()).zip(t_cur.par_iter()).for_each(|((o, p), q)| {
            *o = p * c0 + q * c1;
        });
        for ck in coeff.iter().skip(2) {
            h.matvec_into(&t_cur, &mut work);
            // T_{k+1} = 2 H̃ T_k − T_{k−1}, written into t_prev
            let ck = *ck;
            t_prev
                .par_iter_mut()
                .zip(work.par_iter())
                .zip(t_cur.par_iter())
                .zip(f.par_iter_mut())
                .with_min_len(4096)
                .for_each(|(((p, w), q), o)| {
                    *p = (w * inv_r - q * c_r) * 2.0 - *p;
                    *o += *p * ck;
                });
            std::mem::swap(&mut t_prev, &mut t_cur);
        }
        f.par_iter_mut().for_each(|z| *z *= phase);
    }
    Ok(f)
}

fn inf_norm(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::{self, expm};

    fn random_dense(n: usize, seed: u64) -> OperatorMatrix {
        let mut state = seed;
        let mut next = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        };
        OperatorMatrix::from_fn(n, |_, _| C64::new(next(), next()))
    }

    #[test]
    fn triplets_sum_duplicates() {
        let m = CsrMatrix::from_triplets(
            2,
            vec![(0, 1, C64::new(1.0, 0.0)), (0, 1, C64::new(2.0, 0.0)), (1, 0, C64::new(0.0, 0.0))],
        )
        .unwrap();
        assert_eq!(m.nnz(), 1);
        assert_eq!(m.to_dense()[(0, 1)], C64::new(3.0, 0.0));
        assert!(CsrMatrix::from_triplets(2, vec![(2, 0, C64::new(1.0, 0.0))]).is_err());
    }

    #[test]
    fn dense_roundtrip_and_kron() {
        let a = random_dense(3, 1);
        let b = random_dense(2, 2);
        let sa = CsrMatrix::from_dense(&a);
        assert_eq!(sa.to_dense(), a);
        let k = kron(&sa, &CsrMatrix::from_dense(&b)).to_dense();
        assert!(k.max_abs_diff(&algebra::kron(&a, &b)) < 1e-15);
        assert!(sa.dagger().to_dense().max_abs_diff(&a.dagger()) < 1e-15);
        let prod = sa.matmul(&sa).unwrap().to_dense();
        assert!(prod.max_abs_diff(&a.matmul(&a)) < 1e-13);
    }

    #[test]
    fn bessel_sequence_values() {
        // J_0(1), J_1(1), J_5(10)
        let j = bessel_j_sequence(1.0, 3);
        assert!((j[0] - 0.765_197_686_557_966_6).abs() < 1e-14);
        assert!((j[1] - 0.440_050_585_744_933_5).abs() < 1e-14);
        let j = bessel_j_sequence(10.0, 6);
        assert!((j[5] - (-0.234_061_528_186_793_6)).abs() < 1e-13);
    }

    #[test]
    fn chebyshev_matches_dense_expm() {
        let a = random_dense(12, 21);
        let h = (&a + &a.dagger()).scale_real(3.0);
        let v: Vec<C64> = (0..12).map(|k| C64::new(1.0, k as f64 * 0.1)).collect();
        for t in [0.3, -1.7, 40.0] {
            let exact = expm(&h.scale(C64::new(0.0, -t))).unwrap().matvec(&v);
            let got = expmv_hermitian(&CsrMatrix::from_dense(&h), t, &v).unwrap();
            let err = exact.iter().zip(&got).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
            assert!(err < 1e-11, "t={t}: {err}");
        }
        let d = CsrMatrix::from_dense(&OperatorMatrix::identity(3).scale_real(2.0));
        let w = expmv_hermitian(&d, 1.0, &[C64::new(1.0, 0.0); 3]).unwrap();
        assert!((w[0] - C64::new(0.0, -2.0).exp()).norm() < 1e-15);
    }

    #[test]
    fn expmv_matches_dense_expm() {
        for (seed, scale) in [(3u64, 0.1), (4, 1.0), (5, 8.0)] {
            let a = random_dense(6, seed).scale_real(scale);
            let v: Vec<C64> = (0..6).map(|k| C64::new(k as f64, 1.0)).collect();
            let exact = expm(&a).unwrap().matvec(&v);
            let got = expmv(&CsrMatrix::from_dense(&a), C64::new(1.0, 0.0), &v).unwrap();
            let err = exact.iter().zip(&got).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
            let size = exact.iter().map(|x| x.norm()).fold(0.0, f64::max);
            assert!(err <= 1e-12 * size, "scale {scale}: {err}");
        }
    }

    #[test]
    fn expmv_unitary_evolution_preserves_norm() {
        let a = random_dense(20, 9);
        let h = (&a + &a.dagger()).scale_real(5.0);
        let v: Vec<C64> = (0..20).map(|k| C64::new((k as f64).sin(), 0.0)).collect();
        let norm0: f64 = v.iter().map(|z| z.norm_sqr()).sum();
        let w = expmv(&CsrMatrix::from_dense(&h), C64::new(0.0, -3.0), &v).unwrap();
        let norm1: f64 = w.iter().map(|z| z.norm_sqr()).sum();
        assert!((norm0 - norm1).abs() < 1e-11 * norm0);
        let exact = expm(&h.scale(C64::new(0.0, -3.0))).unwrap().matvec(&v);
        let err = exact.iter().zip(&w).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
        assert!(err < 1e-11);
    }

    #[test]
    fn liouvillian_trace_preserving() {
        let h = random_dense(3, 11);
        let h = (&h + &h.dagger()).scale_real(0.5);
        let l = random_dense(3, 12);
        let lv = liouvillian(&CsrMatrix::from_dense(&h), &[(0.7, CsrMatrix::from_dense(&l))])
            .unwrap()
            .to_dense();
        let vec_id = algebra::vectorize(&OperatorMatrix::identity(3));
        for col in 0..9 {
            let s: C64 = (0..9).map(|row| vec_id[row].conj() * lv[(row, col)]).sum();
            assert!(s.norm() < 1e-13);
        }
    }
}
