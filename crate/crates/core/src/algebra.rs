//! Exact-size complex matrix algebra for SU(N) and su(N).
//!
//! Matrices are stored inline (row-major, fixed capacity [`MAX_N`]²) so the
//! quadrature inner loops never touch the heap. The dimension `n` is a runtime
//! parameter, default 3.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Largest supported group rank. Keeps matrices stack-allocated.
pub const MAX_N: usize = 6;

/// Default group rank.
pub const DEFAULT_N: usize = 3;

/// Unitarity / determinant tolerance for group elements.
pub const GROUP_TOL: f64 = 1e-10;
/// Anti-Hermiticity / trace tolerance for algebra elements.
pub const ALGEBRA_TOL: f64 = 1e-12;

pub type C64 = Complex64;

#[derive(Debug, Error)]
pub enum AlgebraError {
    #[error("matrix entries are not finite")]
    NonFinite,
    #[error("matrix dimension {0} outside supported range 2..={MAX_N}")]
    BadDimension(usize),
    #[error("unitarity defect {defect:.3e} exceeds tolerance {tol:.1e}")]
    NotUnitary { defect: f64, tol: f64 },
    #[error("determinant defect {defect:.3e} exceeds tolerance {tol:.1e}")]
    NotSpecial { defect: f64, tol: f64 },
    #[error("anti-Hermiticity defect {defect:.3e} exceeds tolerance {tol:.1e}")]
    NotAntiHermitian { defect: f64, tol: f64 },
    #[error("trace defect {defect:.3e} exceeds tolerance {tol:.1e}")]
    NotTraceless { defect: f64, tol: f64 },
}

/// Dense n×n complex matrix with inline storage.
#[derive(Clone, Copy)]
pub struct CMat {
    n: usize,
    a: [C64; MAX_N * MAX_N],
}

impl std::fmt::Debug for CMat {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "CMat {}x{} [", self.n, self.n)?;
        for i in 0..self.n {
            write!(f, "  ")?;
            for j in 0..self.n {
                let z = self[(i, j)];
                write!(f, "{:+.4}{:+.4}i  ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

impl std::ops::Index<(usize, usize)> for CMat {
    type Output = C64;
    #[inline(always)]
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        &self.a[i * self.n + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for CMat {
    #[inline(always)]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        &mut self.a[i * self.n + j]
    }
}

const ZERO_C: C64 = C64::new(0.0, 0.0);

impl CMat {
    #[inline]
    pub fn zeros(n: usize) -> Self {
        debug_assert!((2..=MAX_N).contains(&n));
        CMat { n, a: [ZERO_C; MAX_N * MAX_N] }
    }

    #[inline]
    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m[(i, i)] = C64::new(1.0, 0.0);
        }
        m
    }

    #[inline(always)]
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                m[(i, j)] = f(i, j);
            }
        }
        m
    }

    pub fn is_finite(&self) -> bool {
        self.entries().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    #[inline]
    pub fn entries(&self) -> impl Iterator<Item = &C64> {
        self.a[..self.n * self.n].iter()
    }

    /// out = self * rhs, no allocation.
    #[inline]
    pub fn mul_to(&self, rhs: &CMat, out: &mut CMat) {
        let n = self.n;
        debug_assert_eq!(rhs.n, n);
        out.n = n;
        for i in 0..n {
            for j in 0..n {
                let mut acc = ZERO_C;
                for k in 0..n {
                    acc += self.a[i * n + k] * rhs.a[k * n + j];
                }
                out.a[i * n + j] = acc;
            }
        }
    }

    #[inline]
    pub fn mul(&self, rhs: &CMat) -> CMat {
        let mut out = CMat::zeros(self.n);
        self.mul_to(rhs, &mut out);
        out
    }

    pub fn add(&self, rhs: &CMat) -> CMat {
        let mut out = *self;
        out.add_assign(rhs);
        out
    }

    #[inline]
    pub fn add_assign(&mut self, rhs: &CMat) {
        let nn = self.n * self.n;
        for k in 0..nn {
            self.a[k] += rhs.a[k];
        }
    }

    pub fn sub(&self, rhs: &CMat) -> CMat {
        let mut out = *self;
        let nn = self.n * self.n;
        for k in 0..nn {
            out.a[k] -= rhs.a[k];
        }
        out
    }

    #[inline]
    pub fn scale(&self, s: C64) -> CMat {
        let mut out = *self;
        let nn = self.n * self.n;
        for k in 0..nn {
            out.a[k] *= s;
        }
        out
    }

    #[inline]
    pub fn scale_re(&self, s: f64) -> CMat {
        let mut out = *self;
        let nn = self.n * self.n;
        for k in 0..nn {
            out.a[k] = C64::new(out.a[k].re * s, out.a[k].im * s);
        }
        out
    }

    /// self += s * rhs
    #[inline]
    pub fn axpy(&mut self, s: f64, rhs: &CMat) {
        let nn = self.n * self.n;
        for k in 0..nn {
            self.a[k] += C64::new(rhs.a[k].re * s, rhs.a[k].im * s);
        }
    }

    #[inline]
    pub fn dagger(&self) -> CMat {
        let n = self.n;
        let mut out = CMat::zeros(n);
        for i in 0..n {
            for j in 0..n {
                out.a[j * n + i] = self.a[i * n + j].conj();
            }
        }
        out
    }

    #[inline]
    pub fn trace(&self) -> C64 {
        let mut t = ZERO_C;
        for i in 0..self.n {
            t += self.a[i * self.n + i];
        }
        t
    }

    pub fn commutator(&self, rhs: &CMat) -> CMat {
        self.mul(rhs).sub(&rhs.mul(self))
    }

    /// tr(a·b) without forming the product.
    #[inline]
    pub fn trace_mul(a: &CMat, b: &CMat) -> C64 {
        let n = a.n;
        let mut t = ZERO_C;
        for i in 0..n {
            for j in 0..n {
                t += a.a[i * n + j] * b.a[j * n + i];
            }
        }
        t
    }

    /// tr(a·b·c) without forming products.
    #[inline]
    pub fn trace_mul3(a: &CMat, b: &CMat, c: &CMat) -> C64 {
        let n = a.n;
        let mut t = ZERO_C;
        for i in 0..n {
            for k in 0..n {
                let aik = a.a[i * n + k];
                let mut acc = ZERO_C;
                for j in 0..n {
                    acc += b.a[k * n + j] * c.a[j * n + i];
                }
                t += aik * acc;
            }
        }
        t
    }

    /// Largest entry magnitude.
    pub fn max_norm(&self) -> f64 {
        self.entries().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn frobenius(&self) -> f64 {
        self.entries().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// max-norm of (U·U† − I).
    pub fn unitarity_defect(&self) -> f64 {
        let p = self.mul(&self.dagger());
        let mut d = 0.0f64;
        for i in 0..self.n {
            for j in 0..self.n {
                let expect = if i == j { C64::new(1.0, 0.0) } else { ZERO_C };
                d = d.max((p[(i, j)] - expect).norm());
            }
        }
        d
    }

    /// Determinant by LU with partial pivoting (n ≤ MAX_N).
    pub fn det(&self) -> C64 {
        let n = self.n;
        let mut m = *self;
        let mut det = C64::new(1.0, 0.0);
        for col in 0..n {
            let mut piv = col;
            let mut best = m[(col, col)].norm();
            for r in col + 1..n {
                let v = m[(r, col)].norm();
                if v > best {
                    best = v;
                    piv = r;
                }
            }
            if best == 0.0 {
                return ZERO_C;
            }
            if piv != col {
                for j in 0..n {
                    let t = m[(col, j)];
                    m[(col, j)] = m[(piv, j)];
                    m[(piv, j)] = t;
                }
                det = -det;
            }
            let p = m[(col, col)];
            det *= p;
            for r in col + 1..n {
                let f = m[(r, col)] / p;
                for j in col..n {
                    let v = m[(col, j)];
                    m[(r, j)] -= f * v;
                }
            }
        }
        det
    }
}

/// Element of SU(N): unitary with unit determinant.
#[derive(Clone, Copy, Debug)]
pub struct GroupElement(pub CMat);

impl GroupElement {
    /// Validating constructor.
    pub fn new(m: CMat) -> Result<Self, AlgebraError> {
        if !(2..=MAX_N).contains(&m.dim()) {
            return Err(AlgebraError::BadDimension(m.dim()));
        }
        if !m.is_finite() {
            return Err(AlgebraError::NonFinite);
        }
        let u = m.unitarity_defect();
        if u > GROUP_TOL {
            return Err(AlgebraError::NotUnitary { defect: u, tol: GROUP_TOL });
        }
        let d = (m.det() - C64::new(1.0, 0.0)).norm();
        if d > GROUP_TOL {
            return Err(AlgebraError::NotSpecial { defect: d, tol: GROUP_TOL });
        }
        Ok(GroupElement(m))
    }

    pub fn identity(n: usize) -> Self {
        GroupElement(CMat::identity(n))
    }

    pub fn matrix(&self) -> &CMat {
        &self.0
    }

    /// Group inverse; for unitary matrices this is the conjugate transpose.
    pub fn inverse(&self) -> Self {
        GroupElement(self.0.dagger())
    }
}

/// Element of su(N): anti-Hermitian and traceless.
#[derive(Clone, Copy, Debug)]
pub struct AlgebraElement(pub CMat);

impl AlgebraElement {
    pub fn new(m: CMat) -> Result<Self, AlgebraError> {
        if !(2..=MAX_N).contains(&m.dim()) {
            return Err(AlgebraError::BadDimension(m.dim()));
        }
        if !m.is_finite() {
            return Err(AlgebraError::NonFinite);
        }
        let ah = m.add(&m.dagger()).max_norm();
        if ah > ALGEBRA_TOL {
            return Err(AlgebraError::NotAntiHermitian { defect: ah, tol: ALGEBRA_TOL });
        }
        let t = m.trace().norm();
        if t > ALGEBRA_TOL {
            return Err(AlgebraError::NotTraceless { defect: t, tol: ALGEBRA_TOL });
        }
        Ok(AlgebraElement(m))
    }

    pub fn zero(n: usize) -> Self {
        AlgebraElement(CMat::zeros(n))
    }

    pub fn matrix(&self) -> &CMat {
        &self.0
    }
}

/// Anti-Hermitian traceless projection: (M − M†)/2 minus its trace part.
/// Idempotent on algebra elements.
pub fn project_algebra(m: &CMat) -> CMat {
    let n = m.dim();
    let mut p = m.sub(&m.dagger()).scale_re(0.5);
    let t = p.trace() / (n as f64);
    for i in 0..n {
        p[(i, i)] -= t;
    }
    p
}

/// Taylor order such that ‖X‖ ≤ 1/2 converges below 1e−13 with margin.
const EXP_TAYLOR_ORDER: usize = 14;

/// Matrix exponential by scaling and squaring with a fixed-order Taylor core.
///
/// Inputs are small anti-Hermitian matrices, so the series converges fast; no
/// eigendecomposition is used anywhere.
pub fn exp_mat(x: &CMat) -> CMat {
    let n = x.dim();
    // Scale so the Taylor argument has norm ≤ 1/2.
    let norm = x.max_norm() * n as f64;
    let s = if norm > 0.5 { (norm / 0.5).log2().ceil() as u32 } else { 0 };
    let xs = x.scale_re(1.0 / f64::powi(2.0, s as i32));

    // Horner evaluation of Σ X^k/k!.
    let mut acc = CMat::identity(n);
    let mut tmp = CMat::zeros(n);
    for k in (1..=EXP_TAYLOR_ORDER).rev() {
        // acc = I + (X/k)·acc
        xs.mul_to(&acc, &mut tmp);
        acc = CMat::identity(n);
        acc.axpy(1.0 / k as f64, &tmp);
    }
    for _ in 0..s {
        acc.mul_to(&acc.clone(), &mut tmp);
        acc = tmp;
    }
    acc
}

/// Exponential of an algebra element; lands in the group.
pub fn exp_su(x: &AlgebraElement) -> Result<GroupElement, AlgebraError> {
    if !x.0.is_finite() {
        return Err(AlgebraError::NonFinite);
    }
    Ok(GroupElement(exp_mat(&x.0)))
}

/// Taylor coefficients of ρ ↦ exp(ρ·X), reusable across many ρ values.
///
/// The radial sweep over a cone mesh evaluates the same generator at every
/// radial layer; precomputing X^k/k! turns each layer into a scalar Horner
/// pass with no further matrix products.
#[derive(Clone)]
pub struct ExpSeries {
    terms: Vec<CMat>,
}

impl ExpSeries {
    /// Series length adapted to ‖X‖ so the tail stays below ~1e−13 for |ρ| ≤ 1.
    pub fn build(x: &CMat) -> Self {
        let n = x.dim();
        let norm = (x.max_norm() * n as f64).max(1e-300);
        let mut order = 12usize;
        let mut tail = norm.powi(order as i32 + 1);
        let mut fact = (1..=order as u128 + 1).product::<u128>() as f64;
        while tail / fact > 1e-14 && order < 34 {
            order += 1;
            tail *= norm;
            fact *= (order + 1) as f64;
        }
        let mut terms = Vec::with_capacity(order + 1);
        terms.push(CMat::identity(n));
        let mut cur = CMat::identity(n);
        let mut tmp = CMat::zeros(n);
        for k in 1..=order {
            cur.mul_to(x, &mut tmp);
            cur = tmp.scale_re(1.0 / k as f64);
            terms.push(cur);
        }
        ExpSeries { terms }
    }

    /// exp(ρ·X) by scalar Horner over the cached terms.
    #[inline]
    pub fn eval(&self, rho: f64, out: &mut CMat) {
        let last = self.terms.len() - 1;
        *out = self.terms[last];
        for k in (0..last).rev() {
            let scaled = out.scale_re(rho);
            *out = self.terms[k];
            out.add_assign(&scaled);
        }
    }
}

/// Deterministic random algebra element. `scale` bounds the Frobenius (and
/// hence operator) norm by scale·N.
pub fn random_algebra(n: usize, seed: u64, scale: f64) -> AlgebraElement {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let raw = CMat::from_fn(n, |_, _| {
        C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
    });
    let mut p = project_algebra(&raw);
    let f = p.frobenius();
    if f > 0.0 {
        // Frobenius bounds the operator norm, so ‖result‖ ≤ scale·N.
        p = p.scale_re(scale * (n as f64) / f.max(n as f64));
    }
    AlgebraElement(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn assert_close(a: &CMat, b: &CMat, tol: f64) {
        assert!(a.sub(b).max_norm() < tol, "matrices differ by {:.3e}", a.sub(b).max_norm());
    }

    #[test]
    fn exp_of_zero_is_identity() {
        let x = AlgebraElement::zero(3);
        let g = exp_su(&x).unwrap();
        assert_close(g.matrix(), &CMat::identity(3), 1e-15);
    }

    #[test]
    fn exp_inverse_cancels() {
        for seed in 0..10 {
            let x = random_algebra(3, seed, 1.0);
            let neg = AlgebraElement(x.0.scale_re(-1.0));
            let g = exp_su(&x).unwrap();
            let ginv = exp_su(&neg).unwrap();
            assert_close(&g.matrix().mul(ginv.matrix()), &CMat::identity(3), 1e-10);
        }
    }

    #[test]
    fn exp_matches_series_oracle_on_diagonal() {
        // X = diag(iπ, −iπ, 0)/2 → exp X = diag(i, −i, 1).
        use std::f64::consts::PI;
        let mut x = CMat::zeros(3);
        x[(0, 0)] = C64::new(0.0, PI / 2.0);
        x[(1, 1)] = C64::new(0.0, -PI / 2.0);
        let x = AlgebraElement::new(x).unwrap();
        let g = exp_su(&x).unwrap();

        // Independent oracle: truncated power series, 40 terms, no scaling.
        let mut oracle = CMat::identity(3);
        let mut term = CMat::identity(3);
        for k in 1..=40 {
            term = term.mul(&x.0).scale_re(1.0 / k as f64);
            oracle.add_assign(&term);
        }
        assert_close(g.matrix(), &oracle, 1e-12);

        let mut frozen = CMat::identity(3);
        frozen[(0, 0)] = C64::new(0.0, 1.0);
        frozen[(1, 1)] = C64::new(0.0, -1.0);
        assert_close(g.matrix(), &frozen, 1e-12);
    }

    #[test]
    fn exp_series_matches_exp_mat() {
        for seed in 0..20 {
            let x = random_algebra(3, seed, 1.5);
            let series = ExpSeries::build(&x.0);
            let mut out = CMat::zeros(3);
            for &rho in &[0.0, 0.13, 0.5, -0.77, 1.0] {
                series.eval(rho, &mut out);
                let direct = exp_mat(&x.0.scale_re(rho));
                assert_close(&out, &direct, 1e-12);
            }
        }
    }

    #[test]
    fn project_is_idempotent_and_kills_identity() {
        let x = random_algebra(3, 4, 0.8);
        assert_close(&project_algebra(&x.0), &x.0, 1e-15);
        let p = project_algebra(&CMat::identity(3));
        assert!(p.max_norm() < 1e-15);
    }

    #[test]
    fn random_algebra_deterministic_and_scaled() {
        let a = random_algebra(3, 7, 1.0);
        let b = random_algebra(3, 7, 1.0);
        assert_close(&a.0, &b.0, 0.0 + 1e-300);
        assert!(AlgebraElement::new(a.0).is_ok());
        let z = random_algebra(3, 7, 0.0);
        assert!(z.0.max_norm() == 0.0);
        assert!(a.0.frobenius() <= 1.0 * 3.0 + 1e-12);
    }

    #[test]
    fn group_element_rejects_non_unitary() {
        let m = CMat::from_fn(3, |i, j| C64::new((i + j) as f64, 0.0));
        assert!(GroupElement::new(m).is_err());
    }

    #[test]
    fn exp_su_rejects_non_finite() {
        let mut m = CMat::zeros(3);
        m[(0, 1)] = C64::new(f64::NAN, 0.0);
        m[(1, 0)] = C64::new(f64::NAN, 0.0);
        let x = AlgebraElement(m);
        assert!(exp_su(&x).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn exp_output_is_group_element(seed in 0u64..10_000) {
            let x = random_algebra(3, seed, 1.2);
            let g = exp_su(&x).unwrap();
            prop_assert!(GroupElement::new(*g.matrix()).is_ok());
        }

        #[test]
        fn commutator_trace_vanishes(sa in 0u64..5_000, sb in 0u64..5_000) {
            let x = random_algebra(3, sa, 1.0);
            let y = random_algebra(3, sb.wrapping_add(90_001), 1.0);
            let c = x.0.commutator(&y.0);
            prop_assert!(c.trace().norm() < 1e-12);
        }

        #[test]
        fn group_product_closure(sa in 0u64..5_000, sb in 0u64..5_000) {
            let g = exp_su(&random_algebra(3, sa, 1.0)).unwrap();
            let h = exp_su(&random_algebra(3, sb.wrapping_add(33), 1.0)).unwrap();
            let p = g.matrix().mul(h.matrix());
            prop_assert!(GroupElement::new(p).is_ok());
        }

        #[test]
        fn random_projection_satisfies_invariants(seed in 0u64..10_000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabcd);
            let raw = CMat::from_fn(3, |_, _| C64::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)));
            let p = project_algebra(&raw);
            prop_assert!(AlgebraElement::new(p).is_ok());
        }
    }
}
