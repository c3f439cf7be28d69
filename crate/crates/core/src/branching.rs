//! Stochastic links between adjacent levels of the BC branching graph.
//!
//! A row of the link matrix from level `N+1` to level `N` is
//!
//! ```text
//! Λ(λ, μ) = 2^N N! Γ(N+a+1)/Γ(a+1) · Δ_N(m̂)/Δ_{N+1}(l̂) · Σ_ν Π_i B(ν_i+N−i, μ_i+N−i)
//! ```
//!
//! where `ν` runs over the double interlacing `ν ≺ λ`, `μ ≺ ν ∪ 0`. The
//! interlacing constraints on `ν` factorize coordinate-wise (see
//! [`crate::sig::nu_ranges`]), so the ν-sum is a product of independent
//! one-dimensional sums of `B` values. Rows are assembled in log space;
//! for rational `(a, b)` every entry is an exact rational and an exact
//! backend is provided for oracle tests.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};

use crate::error::{Error, Result};
use crate::sig::{self, Signature};
use crate::specfun::{log_gamma_real, pochhammer_rat};

/// Row-sum consistency tolerance: a computed row must be stochastic to
/// this accuracy or the computation is rejected.
pub const ROW_SUM_TOL: f64 = 1e-9;

/// `log B(r, s)` for `s > 0` and `log B(r, 0)`, assembled from log-gamma
/// values. All factors are strictly positive for `a >= b >= -1/2`.
pub fn log_b_coeff(r: u32, s: u32, a: f64, b: f64) -> f64 {
    let (r, s) = (f64::from(r), f64::from(s));
    if s > 0.0 {
        (2.0 * r + a + b + 2.0).ln() + (2.0 * s + a + b + 1.0).ln() + log_gamma_real(r + 1.0)
            - std::f64::consts::LN_2
            - log_gamma_real(s + 1.0)
            + log_gamma_real(s + a + b + 1.0)
            + log_gamma_real(r + b + 1.0)
            + log_gamma_real(s + a + 1.0)
            - log_gamma_real(r + a + b + 2.0)
            - log_gamma_real(s + b + 1.0)
            - log_gamma_real(r + a + 2.0)
    } else {
        (2.0 * r + a + b + 2.0).ln() + log_gamma_real(r + 1.0) + log_gamma_real(r + b + 1.0)
            + log_gamma_real(a + 1.0)
            + log_gamma_real(a + b + 2.0)
            - std::f64::consts::LN_2
            - log_gamma_real(r + a + b + 2.0)
            - log_gamma_real(r + a + 2.0)
            - log_gamma_real(b + 1.0)
    }
}

/// Exact-rational `B(r, s)` for rational `a, b`. Every gamma ratio in the
/// definition collapses to a Pochhammer product, so the value is rational.
pub fn b_coeff_rat(r: u32, s: u32, a: &BigRational, b: &BigRational) -> BigRational {
    let ri = BigRational::from_integer(BigInt::from(r));
    let si = BigRational::from_integer(BigInt::from(s));
    let two = BigRational::from_integer(BigInt::from(2));
    let one = BigRational::one();
    let factorial = |n: u32| -> BigRational {
        let mut f = BigInt::one();
        for i in 2..=i64::from(n) {
            f *= i;
        }
        BigRational::from_integer(f)
    };
    // Γ(x+m)/Γ(x+n) for nonnegative integer offsets m, n from base x.
    let gr = |x: BigRational, m: u32, n: u32| -> BigRational {
        if m >= n {
            pochhammer_rat(&(x + BigRational::from_integer(BigInt::from(n))), m - n)
        } else {
            pochhammer_rat(&(x + BigRational::from_integer(BigInt::from(m))), n - m).recip()
        }
    };
    if s > 0 {
        // Γ(s+a+b+1)/Γ(r+a+b+2) · Γ(r+b+1)/Γ(s+b+1) · Γ(s+a+1)/Γ(r+a+2)
        let f1 = gr(a + b + &one, s, r + 1);
        let f2 = gr(b + &one, r, s);
        let f3 = gr(a + &one, s, r + 1);
        (&two * &ri + a + b + &two)
            * (&two * &si + a + b + &one)
            * factorial(r)
            * f1
            * f2
            * f3
            / (&two * factorial(s))
    } else {
        // Γ(r+b+1)/Γ(b+1) · Γ(a+b+2)/Γ(r+a+b+2) · Γ(a+1)/Γ(r+a+2)
        let f1 = pochhammer_rat(&(b + &one), r);
        let f2 = pochhammer_rat(&(a + b + &two), r).recip();
        let f3 = pochhammer_rat(&(a + &one), r + 1).recip();
        (&two * &ri + a + b + &two) * factorial(r) * f1 * f2 * f3 / &two
    }
}

/// `log Δ(l̂)` over the strictly decreasing `l`, using the factored form
/// `l̂_i − l̂_j = (l_i − l_j)(l_i + l_j + 2ε)`, which avoids cancellation
/// at `ε = 0`.
pub fn log_vandermonde_lhat(l: &[i64], eps: f64) -> f64 {
    let mut acc = 0.0;
    for i in 0..l.len() {
        for j in i + 1..l.len() {
            let d = (l[i] - l[j]) as f64;
            let s = (l[i] + l[j]) as f64 + 2.0 * eps;
            acc += (d * s).ln();
        }
    }
    acc
}

fn vandermonde_lhat_rat(l: &[i64], eps: &BigRational) -> BigRational {
    let mut acc = BigRational::one();
    let two_eps = eps + eps;
    for i in 0..l.len() {
        for j in i + 1..l.len() {
            let d = BigRational::from_integer(BigInt::from(l[i] - l[j]));
            let s = BigRational::from_integer(BigInt::from(l[i] + l[j])) + &two_eps;
            acc *= d * s;
        }
    }
    acc
}

/// `log 𝔓_λ(1^N | a, b)`: the multivariate Jacobi polynomial evaluated at
/// all-ones, via the closed gamma-product formula. Strictly positive.
pub fn log_jacobi_at_ones(sig: &Signature, a: f64, b: f64) -> f64 {
    let n = sig.level();
    let eps = 0.5 * (a + b + 1.0);
    let l = sig.l_coords();
    let mut acc = log_vandermonde_lhat(&l, eps);
    for (i, &li) in l.iter().enumerate() {
        let i1 = (i + 1) as f64; // 1-based index
        acc += log_gamma_real(li as f64 + a + 1.0)
            + (i1 - n as f64) * std::f64::consts::LN_2
            - log_gamma_real(li as f64 + 1.0)
            - log_gamma_real(a + i1)
            - log_gamma_real(i1);
    }
    acc
}

/// A finite probability row of the link matrix.
#[derive(Clone, Debug)]
pub struct KernelRow {
    pub source: Signature,
    /// `(μ, weight)` sorted descending by weight.
    pub weights: Vec<(Signature, f64)>,
}

impl KernelRow {
    pub fn weight_of(&self, mu: &Signature) -> f64 {
        self.weights
            .iter()
            .find(|(m, _)| m == mu)
            .map_or(0.0, |(_, w)| *w)
    }

    pub fn row_sum(&self) -> f64 {
        self.weights.iter().map(|(_, w)| w).sum()
    }
}

/// Precomputed table of `log B` values shared by all rows of a
/// verification run. Read-only after construction, safe to share across
/// threads.
pub struct KernelCtx {
    pub a: f64,
    pub b: f64,
    max_r: u32,
    max_s: u32,
    log_b: Vec<f64>,
}

impl KernelCtx {
    pub fn new(a: f64, b: f64, max_r: u32, max_s: u32) -> Self {
        let mut log_b = Vec::with_capacity(((max_r + 1) * (max_s + 1)) as usize);
        for r in 0..=max_r {
            for s in 0..=max_s {
                log_b.push(log_b_coeff(r, s, a, b));
            }
        }
        KernelCtx {
            a,
            b,
            max_r,
            max_s,
            log_b,
        }
    }

    /// Context sized for every row with source `λ_1 <= max_lambda1` at
    /// levels up to `max_level` (source side).
    pub fn for_truncation(a: f64, b: f64, max_lambda1: u32, max_level: usize) -> Self {
        let m = max_lambda1 + max_level as u32;
        KernelCtx::new(a, b, m, m)
    }

    pub fn eps(&self) -> f64 {
        0.5 * (self.a + self.b + 1.0)
    }

    #[inline]
    fn log_b(&self, r: u32, s: u32) -> f64 {
        debug_assert!(r <= self.max_r && s <= self.max_s, "B table too small");
        self.log_b[(r * (self.max_s + 1) + s) as usize]
    }

    fn log_prefactor(&self, n: usize) -> f64 {
        let nf = n as f64;
        nf * std::f64::consts::LN_2 + log_gamma_real(nf + 1.0) + log_gamma_real(nf + self.a + 1.0)
            - log_gamma_real(self.a + 1.0)
    }

    /// Single entry `Λ(λ, μ)`; zero when `μ` is not a BC-predecessor.
    pub fn entry(&self, lam: &Signature, mu: &Signature) -> f64 {
        let n = mu.level();
        debug_assert_eq!(lam.level(), n + 1);
        let Some(ranges) = sig::nu_ranges(lam, mu) else {
            return 0.0;
        };
        let mp = mu.parts();
        let mut log_tilde = 0.0;
        for (i, &(lo, hi)) in ranges.iter().enumerate() {
            let s = mp[i] + (n - 1 - i) as u32;
            // one-dimensional sum of B(v + N − i, s) over the admissible range
            let mut max = f64::NEG_INFINITY;
            for v in lo..=hi {
                max = max.max(self.log_b(v + (n - 1 - i) as u32, s));
            }
            let mut acc = 0.0;
            for v in lo..=hi {
                acc += (self.log_b(v + (n - 1 - i) as u32, s) - max).exp();
            }
            log_tilde += max + acc.ln();
        }
        let eps = self.eps();
        let log_dm = log_vandermonde_lhat(&mu.l_coords(), eps);
        let log_dl = log_vandermonde_lhat(&lam.l_coords(), eps);
        (self.log_prefactor(n) + log_dm - log_dl + log_tilde).exp()
    }

    /// Full row at `λ`, normalized check enforced post hoc.
    pub fn row(&self, lam: &Signature) -> Result<KernelRow> {
        let mut weights: Vec<(Signature, f64)> = kernel_support(lam)
            .into_iter()
            .map(|mu| {
                let w = self.entry(lam, &mu);
                (mu, w)
            })
            .collect();
        let sum: f64 = weights.iter().map(|(_, w)| w).sum();
        if (sum - 1.0).abs() > ROW_SUM_TOL {
            return Err(Error::Consistency {
                what: "kernel row sum",
                deviation: (sum - 1.0).abs(),
                tolerance: ROW_SUM_TOL,
            });
        }
        weights.sort_by(|x, y| y.1.partial_cmp(&x.1).unwrap().then(x.0.cmp(&y.0)));
        Ok(KernelRow {
            source: lam.clone(),
            weights,
        })
    }
}

/// The support of the row at `λ`: all `μ` with nonempty factored ν-ranges,
/// in canonical lex-descending order. Coincides with the μ-set of
/// [`sig::bc_predecessors`].
pub fn kernel_support(lam: &Signature) -> Vec<Signature> {
    let lp = lam.parts();
    let n = lp.len() - 1;
    let mut out = Vec::new();
    let lo: Vec<u32> = (0..n).map(|i| lp.get(i + 2).copied().unwrap_or(0)).collect();
    let hi: Vec<u32> = (0..n).map(|i| lp[i]).collect();
    let mut cur: Vec<u32> = hi.clone();
    for i in 1..n {
        cur[i] = cur[i].min(cur[i - 1]);
    }
    'outer: loop {
        if sig::nu_ranges(lam, &Signature::new(cur.clone()).unwrap()).is_some() {
            out.push(Signature::new(cur.clone()).unwrap());
        }
        let mut i = n;
        loop {
            if i == 0 {
                break 'outer;
            }
            i -= 1;
            if cur[i] > lo[i] {
                cur[i] -= 1;
                let mut ok = true;
                for j in i + 1..n {
                    let cap = cur[j - 1].min(hi[j]);
                    if cap < lo[j] {
                        ok = false;
                        break;
                    }
                    cur[j] = cap;
                }
                if ok {
                    break;
                }
                for j in i..n {
                    cur[j] = lo[j];
                }
            }
        }
    }
    out
}

/// Exact-rational row for rational `(a, b)`: prefactor, Vandermonde ratio
/// and every `B` value are rational, so entries are exact and the row sums
/// to exactly 1.
pub fn kernel_row_exact(
    lam: &Signature,
    a: &BigRational,
    b: &BigRational,
) -> Vec<(Signature, BigRational)> {
    let n = lam.level() - 1;
    let one = BigRational::one();
    let two = BigRational::from_integer(BigInt::from(2));
    let eps = (a + b + &one) / &two;
    // 2^N N! (a+1)_N
    let mut pref = pochhammer_rat(&(a + &one), n as u32);
    for i in 1..=n {
        pref *= BigRational::from_integer(BigInt::from(2 * i as i64));
    }
    let dl = vandermonde_lhat_rat(&lam.l_coords(), &eps);
    let mut out = Vec::new();
    for mu in kernel_support(lam) {
        let ranges = sig::nu_ranges(lam, &mu).unwrap();
        let mp = mu.parts();
        let mut tilde = BigRational::one();
        for (i, &(lo, hi)) in ranges.iter().enumerate() {
            let s = mp[i] + (n - 1 - i) as u32;
            let mut acc = BigRational::zero();
            for v in lo..=hi {
                acc += b_coeff_rat(v + (n - 1 - i) as u32, s, a, b);
            }
            tilde *= acc;
        }
        let dm = vandermonde_lhat_rat(&mu.l_coords(), &eps);
        out.push((mu, &pref * dm / &dl * tilde));
    }
    out
}

/// Closed form for the level-2 → level-1 link:
/// `Λ((λ₁,λ₂), μ) = 2(a+1) Σ_{λ₁ >= n >= max(μ,λ₂)} B(n, μ) / ((λ₁−λ₂+1)(λ₁+λ₂+1+2ε))`,
/// zero when the summation range is empty.
pub fn kernel_level1_closed_form(lambda1: u32, lambda2: u32, mu: u32, a: f64, b: f64) -> f64 {
    debug_assert!(lambda1 >= lambda2);
    let lo = mu.max(lambda2);
    if lo > lambda1 {
        return 0.0;
    }
    let eps = 0.5 * (a + b + 1.0);
    let mut max = f64::NEG_INFINITY;
    for n in lo..=lambda1 {
        max = max.max(log_b_coeff(n, mu, a, b));
    }
    let mut acc = 0.0;
    for n in lo..=lambda1 {
        acc += (log_b_coeff(n, mu, a, b) - max).exp();
    }
    let denom = (f64::from(lambda1) - f64::from(lambda2) + 1.0)
        * (f64::from(lambda1) + f64::from(lambda2) + 1.0 + 2.0 * eps);
    2.0 * (a + 1.0) * (max + acc.ln()).exp() / denom
}

/// Decay table `(λ₁, Λ(λ, μ), Λ·λ₁^N)` along `λ = (λ₁, tail)` with the tail
/// fixed; the third column stays bounded as `λ₁` grows.
pub fn kernel_decay_profile(
    mu: &Signature,
    a: f64,
    b: f64,
    tail: &[u32],
    lambda1_range: std::ops::RangeInclusive<u32>,
) -> Vec<(u32, f64, f64)> {
    let n = mu.level();
    debug_assert_eq!(tail.len(), n);
    let ctx = KernelCtx::for_truncation(a, b, *lambda1_range.end(), n + 1);
    let mut out = Vec::new();
    for l1 in lambda1_range {
        let mut parts = vec![l1];
        parts.extend_from_slice(tail);
        let lam = Signature::new(parts).expect("tail must be weakly decreasing below λ₁");
        let v = ctx.entry(&lam, mu);
        out.push((l1, v, v * f64::from(l1).powi(n as i32)));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::specfun::{rat, rat_to_f64};

    fn sig(parts: &[u32]) -> Signature {
        Signature::new(parts.to_vec()).unwrap()
    }

    #[test]
    fn b_coeff_basics() {
        // B(0,0) with a = b = 0: (a+b+2)/(2(a+1)) = 1
        assert!((log_b_coeff(0, 0, 0.0, 0.0)).abs() < 1e-14);
        // exact rational oracle at half-integer parameters
        for &(r, s) in &[(3u32, 2u32), (5, 5), (4, 0), (0, 3), (7, 1)] {
            for (a, b) in [(rat(1, 2), rat(-1, 2)), (rat(1, 2), rat(1, 2)), (rat(-1, 2), rat(-1, 2))] {
                let exact = rat_to_f64(&b_coeff_rat(r, s, &a, &b));
                let float = log_b_coeff(r, s, rat_to_f64(&a), rat_to_f64(&b)).exp();
                assert!(
                    (exact - float).abs() <= 1e-12 * exact.abs(),
                    "B({r},{s}) a={a} b={b}: exact {exact} vs {float}"
                );
                assert!(exact > 0.0);
            }
        }
    }

    #[test]
    fn jacobi_at_ones_small_cases() {
        // λ = (0) at N = 1: value 1 for any a
        assert!(log_jacobi_at_ones(&sig(&[0]), 0.7, 0.2).abs() < 1e-14);
        // λ = (1) at N = 1, a = b = 0: Γ(2)/Γ(2) = 1
        assert!(log_jacobi_at_ones(&sig(&[1]), 0.0, 0.0).abs() < 1e-13);
        // N = 1 general: 𝔓_k(1) = (a+1)_k / k!, cross-check the univariate value
        for k in 0..8u32 {
            let lhs = log_jacobi_at_ones(&sig(&[k]), 0.5, -0.5).exp();
            let rhs = crate::specfun::jacobi_p_at_one(k, 0.5);
            assert!((lhs - rhs).abs() < 1e-12 * (1.0 + rhs));
        }
        // zero signature at any level is strictly positive
        for n in 1..=5 {
            let v = log_jacobi_at_ones(&Signature::zero(n), 0.5, 0.5);
            assert!(v.is_finite());
        }
    }

    #[test]
    fn jacobi_at_ones_matches_determinant_limit() {
        // λ = (2,1), N = 2, a = b = 1/2: det[𝔓_{l_i}(x_j)]/Δ(x) at
        // x = (1, 1−h), Richardson-extrapolated in h.
        let (a, b) = (0.5, 0.5);
        let l = [3u32, 1u32];
        let f = |h: f64| {
            let p = |k: u32, x: f64| crate::specfun::jacobi_p(k, x, a, b);
            (p(l[0], 1.0) * p(l[1], 1.0 - h) - p(l[0], 1.0 - h) * p(l[1], 1.0)) / h
        };
        let h = 1e-4;
        let richardson = 2.0 * f(h / 2.0) - f(h);
        let direct = log_jacobi_at_ones(&sig(&[2, 1]), a, b).exp();
        assert!(
            (richardson - direct).abs() < 1e-6 * direct.abs(),
            "limit {richardson} vs formula {direct}"
        );
    }

    #[test]
    fn zero_row_is_point_mass() {
        for n1 in 2..=5usize {
            let lam = Signature::zero(n1);
            let ctx = KernelCtx::for_truncation(0.5, 0.5, 0, n1);
            let row = ctx.row(&lam).unwrap();
            assert_eq!(row.weights.len(), 1);
            assert_eq!(row.weights[0].0, Signature::zero(n1 - 1));
            assert!((row.weights[0].1 - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn support_matches_predecessors() {
        for lam in crate::sig::enumerate_level(3, 4) {
            let support = kernel_support(&lam);
            let preds: Vec<Signature> = crate::sig::bc_predecessors(&lam)
                .into_iter()
                .map(|(m, _)| m)
                .collect();
            assert_eq!(support, preds, "λ = {lam}");
        }
    }

    #[test]
    fn row_stochastic_small() {
        let ctx = KernelCtx::for_truncation(0.5, -0.5, 8, 4);
        for level in 2..=4usize {
            for lam in crate::sig::enumerate_level(level, 6) {
                let row = ctx.row(&lam).unwrap();
                assert!(
                    (row.row_sum() - 1.0).abs() < 1e-12,
                    "row sum {} at λ = {lam}",
                    row.row_sum()
                );
                for (_, w) in &row.weights {
                    assert!(*w >= 0.0);
                }
            }
        }
    }

    #[test]
    fn level1_closed_form_matches_row() {
        let (a, b) = (0.5, 0.5);
        let ctx = KernelCtx::for_truncation(a, b, 15, 2);
        for l1 in 0..=15u32 {
            for l2 in 0..=l1 {
                let lam = sig(&[l1, l2]);
                let row = ctx.row(&lam).unwrap();
                for mu in 0..=l1 {
                    let closed = kernel_level1_closed_form(l1, l2, mu, a, b);
                    let general = row.weight_of(&sig(&[mu]));
                    let scale = closed.abs().max(1e-300);
                    assert!(
                        (closed - general).abs() <= 1e-12 * scale.max(1.0),
                        "λ=({l1},{l2}), μ={mu}: closed {closed} vs row {general}"
                    );
                }
                // outside support
                assert_eq!(kernel_level1_closed_form(5, 0, 7, a, b), 0.0);
            }
        }
    }

    #[test]
    fn closed_form_zero_row() {
        assert!((kernel_level1_closed_form(0, 0, 0, 0.3, 0.1) - 1.0).abs() < 1e-13);
    }

    #[test]
    fn exact_rows_sum_to_one() {
        use num_traits::One;
        let cases = [(rat(1, 2), rat(1, 2)), (rat(0, 1), rat(0, 1)), (rat(-1, 2), rat(-1, 2))];
        for (a, b) in cases {
            for lam in crate::sig::enumerate_level(3, 4) {
                let row = kernel_row_exact(&lam, &a, &b);
                let sum: BigRational = row.iter().map(|(_, w)| w.clone()).sum();
                assert!(sum.is_one(), "exact row sum {sum} at λ = {lam}, a={a}, b={b}");
            }
        }
    }

    #[test]
    fn exact_rows_match_float_rows() {
        let (a, b) = (rat(1, 2), rat(-1, 2));
        let ctx = KernelCtx::for_truncation(0.5, -0.5, 6, 3);
        for lam in crate::sig::enumerate_level(3, 5) {
            let exact = kernel_row_exact(&lam, &a, &b);
            for (mu, w) in exact {
                let wf = rat_to_f64(&w);
                let vf = ctx.entry(&lam, &mu);
                assert!(
                    (wf - vf).abs() <= 1e-11 * (1.0 + wf.abs()),
                    "λ={lam}, μ={mu}: exact {wf} vs float {vf}"
                );
            }
        }
    }

    #[test]
    fn decay_profile_bounded() {
        // N = 2, μ = (1,0): Λ·λ₁² bounded; Λ decreasing in λ₁.
        let mu = sig(&[1, 0]);
        let rows = kernel_decay_profile(&mu, 0.5, 0.5, &[1, 0], 10..=60);
        let first_scaled = rows[0].2;
        for w in rows.windows(2) {
            assert!(w[1].1 < w[0].1, "Λ not decreasing at λ₁ = {}", w[1].0);
        }
        for (l1, _, scaled) in &rows {
            assert!(
                *scaled <= 2.0 * first_scaled,
                "Λ·λ₁² = {scaled} at λ₁ = {l1} exceeds bound {first_scaled}"
            );
        }
        // minimum feasible λ₁ has positive mass
        let ctx = KernelCtx::for_truncation(0.5, 0.5, 2, 3);
        assert!(ctx.entry(&sig(&[1, 1, 0]), &mu) > 0.0);
    }
}
