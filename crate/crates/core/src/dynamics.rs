//! Birth-and-death rates, Doob-h-transformed q-matrices, the discrete
//! difference operator on the quadratic half-lattice, Wilson–Neretin
//! orthogonal polynomials, and the infinitesimal identity checks.
//!
//! Rates for `N` nonintersecting particles are the single-particle rates
//! times a Vandermonde ratio in the `l̂` coordinates; the diagonal closes
//! the row to zero sum after the `−c_N` shift. Polynomials on the lattice
//! are stored in the falling-factorial basis `(x̂|ε)^m` where the operator
//! is bidiagonal, so applying it is exact and O(degree).

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::params::{in_h_circ, Params};
use crate::sig::Signature;
use crate::specfun::{collapse_real, pochhammer};
use crate::zmeasure::WeightFn;

/// Birth rate `β(x)` for the pair `(u, u')`. The prefactor
/// `(x+2ε)/(2(x+ε))` is kept factored and set to 1 at `x = 0, ε = 0` (its
/// limit in `ε`), which is the convention consistent with `W(0)`.
pub fn birth_rate(x: u32, u: Complex64, up: Complex64, a: f64, b: f64) -> Result<f64> {
    let eps = 0.5 * (a + b + 1.0);
    let xf = f64::from(x);
    let front = if x == 0 && eps == 0.0 {
        1.0
    } else {
        (xf + 2.0 * eps) / (2.0 * (xf + eps))
    };
    let q = collapse_real(
        (Complex64::new(xf, 0.0) - u) * (Complex64::new(xf, 0.0) - up),
        "(x-u)(x-u')",
    )?;
    let rate = front * (xf + a + 1.0) * q / (2.0 * xf + 2.0 * eps + 1.0);
    if !(rate > 0.0) {
        return Err(Error::domain(format!(
            "birth rate β({x}) = {rate} not positive; (u,u') outside H°"
        )));
    }
    Ok(rate)
}

/// Death rate `δ(x)`; `δ(0) = 0` by definition.
pub fn death_rate(x: u32, u: Complex64, up: Complex64, a: f64, b: f64) -> Result<f64> {
    if x == 0 {
        return Ok(0.0);
    }
    let eps = 0.5 * (a + b + 1.0);
    let xf = f64::from(x);
    let q = collapse_real(
        (Complex64::new(xf + 2.0 * eps, 0.0) + u) * (Complex64::new(xf + 2.0 * eps, 0.0) + up),
        "(x+u+2ε)(x+u'+2ε)",
    )?;
    let rate = xf * (xf + b) * q / (2.0 * (xf + eps) * (2.0 * xf + 2.0 * eps - 1.0));
    if !(rate > 0.0) {
        return Err(Error::domain(format!(
            "death rate δ({x}) = {rate} not positive; (u,u') outside H°"
        )));
    }
    Ok(rate)
}

/// The Doob normalization constant
/// `c_N = N(N−1)(N−2)/3 − N(N−1)(u+u'+b)/2`.
pub fn c_n(u: Complex64, up: Complex64, b: f64, n: usize) -> f64 {
    let nf = n as f64;
    let s = (u + up).re + b;
    nf * (nf - 1.0) * (nf - 2.0) / 3.0 - nf * (nf - 1.0) / 2.0 * s
}

/// Eigenvalue `γ_n = n(n + 1 − z − z' − b − 2N)` of the difference
/// operator at level `N`.
pub fn gamma_eigenvalue(n: u32, params: &Params, level: usize) -> f64 {
    let s = (params.z + params.zp).re + params.b;
    let nf = f64::from(n);
    nf * (nf + 1.0 - s - 2.0 * level as f64)
}

/// One row of the transition-rate matrix at level `N`.
#[derive(Clone, Debug, Serialize)]
pub struct RateRow {
    pub source: Signature,
    /// `(k, rate)` for the admissible moves `λ → λ + e_k` (0-based `k`).
    pub up: Vec<(usize, f64)>,
    /// `(k, rate)` for the admissible moves `λ → λ − e_k`.
    pub down: Vec<(usize, f64)>,
    /// `−Σ_i (β(l_i) + δ(l_i)) − c_N`; coincides with `−(Σ up + Σ down)`.
    pub diagonal: f64,
}

impl RateRow {
    /// Total jump rate out of the state (the holding-time parameter).
    pub fn total_rate(&self) -> f64 {
        self.up.iter().map(|(_, r)| r).sum::<f64>() + self.down.iter().map(|(_, r)| r).sum::<f64>()
    }
}

/// Build the row of `R^{(N)}` at `λ` for the pair `(u, u')`.
pub fn rate_row(
    lam: &Signature,
    u: Complex64,
    up_param: Complex64,
    a: f64,
    b: f64,
) -> Result<RateRow> {
    let n = lam.level();
    let eps = 0.5 * (a + b + 1.0);
    let l = lam.l_coords();
    let lhat = lam.lhat(eps);
    let mut up = Vec::new();
    let mut down = Vec::new();
    let mut diag = -c_n(u, up_param, b, n);
    for k in 0..n {
        let xk = l[k] as u32;
        let beta = birth_rate(xk, u, up_param, a, b)?;
        let delta = death_rate(xk, u, up_param, a, b)?;
        diag -= beta + delta;
        if lam.bump(k, 1).is_some() {
            let hat_plus = {
                let v = l[k] as f64 + 1.0 + eps;
                v * v
            };
            let mut ratio = 1.0;
            for j in 0..n {
                if j != k {
                    ratio *= (hat_plus - lhat[j]) / (lhat[k] - lhat[j]);
                }
            }
            up.push((k, beta * ratio));
        }
        if delta > 0.0 && lam.bump(k, -1).is_some() {
            let hat_minus = {
                let v = l[k] as f64 - 1.0 + eps;
                v * v
            };
            let mut ratio = 1.0;
            for j in 0..n {
                if j != k {
                    ratio *= (hat_minus - lhat[j]) / (lhat[k] - lhat[j]);
                }
            }
            down.push((k, delta * ratio));
        }
    }
    Ok(RateRow {
        source: lam.clone(),
        up,
        down,
        diagonal: diag,
    })
}

/// Single off-diagonal entry `R^{(N)}(λ, ν)`; zero unless `ν = λ ± e_k`.
/// For `λ = ν` returns the diagonal.
pub fn rate_entry(
    lam: &Signature,
    nu: &Signature,
    u: Complex64,
    up_param: Complex64,
    a: f64,
    b: f64,
) -> Result<f64> {
    if lam == nu {
        return Ok(rate_row(lam, u, up_param, a, b)?.diagonal);
    }
    let lp = lam.parts();
    let np = nu.parts();
    if lp.len() != np.len() {
        return Ok(0.0);
    }
    let mut diff_at = None;
    let mut total: i64 = 0;
    for (k, (&x, &y)) in lp.iter().zip(np).enumerate() {
        if x != y {
            total += (i64::from(x) - i64::from(y)).abs();
            diff_at = Some((k, i64::from(y) - i64::from(x)));
        }
    }
    if total != 1 {
        return Ok(0.0);
    }
    let (k, dir) = diff_at.unwrap();
    let row = rate_row(lam, u, up_param, a, b)?;
    let list = if dir == 1 { &row.up } else { &row.down };
    Ok(list.iter().find(|(j, _)| *j == k).map_or(0.0, |(_, r)| *r))
}

// ---------------------------------------------------------------------------
// Lattice polynomials
// ---------------------------------------------------------------------------

/// Polynomial in the quadratic-lattice variable `x̂ = (x+ε)²`, stored in
/// the falling-factorial basis `(x̂|ε)^m = Π_{j<m} (x̂ − (ε+j)²)`.
#[derive(Clone, Debug)]
pub struct LatticePoly {
    pub eps: f64,
    /// Coefficient of `(x̂|ε)^m` at index `m`.
    pub ff: Vec<f64>,
}

impl LatticePoly {
    pub fn from_ff(eps: f64, ff: Vec<f64>) -> Self {
        LatticePoly { eps, ff }
    }

    pub fn one(eps: f64) -> Self {
        LatticePoly { eps, ff: vec![1.0] }
    }

    pub fn degree(&self) -> usize {
        self.ff.len().saturating_sub(1)
    }

    fn node(&self, j: usize) -> f64 {
        let v = self.eps + j as f64;
        v * v
    }

    /// Evaluate at `x̂` by a Newton-basis Horner scheme.
    pub fn eval_xhat(&self, xhat: f64) -> f64 {
        let d = self.degree();
        let mut p = self.ff[d];
        for m in (0..d).rev() {
            p = p * (xhat - self.node(m)) + self.ff[m];
        }
        p
    }

    /// Evaluate at the lattice point `x` (i.e. at `x̂ = (x+ε)²`).
    pub fn eval_at(&self, x: u32) -> f64 {
        let v = f64::from(x) + self.eps;
        self.eval_xhat(v * v)
    }

    /// Coefficients on the monomial basis `x̂^k`, low to high.
    pub fn to_monomial(&self) -> Vec<f64> {
        let d = self.degree();
        let mut mono = vec![0.0; d + 1];
        mono[0] = self.ff[d];
        let mut deg = 0usize;
        for m in (0..d).rev() {
            // multiply by (x̂ − node_m), then add ff[m]
            for i in (1..=deg + 1).rev() {
                mono[i] = mono[i - 1] - self.node(m) * mono[i];
            }
            mono[0] = -self.node(m) * mono[0] + self.ff[m];
            deg += 1;
        }
        mono
    }

    /// Build from monomial coefficients by repeated synthetic division at
    /// the lattice nodes.
    pub fn from_monomial(eps: f64, mono: &[f64]) -> Self {
        let mut cur = mono.to_vec();
        let d = cur.len() - 1;
        let mut ff = vec![0.0; d + 1];
        for (j, slot) in ff.iter_mut().enumerate().take(d) {
            let t = {
                let v = eps + j as f64;
                v * v
            };
            // divide cur by (x̂ − t): remainder → ff[j]
            let mut quot = vec![0.0; cur.len() - 1];
            let mut carry = *cur.last().unwrap();
            for i in (0..cur.len() - 1).rev() {
                quot[i] = carry;
                carry = cur[i] + t * carry;
            }
            *slot = carry;
            cur = quot;
        }
        ff[d] = cur[0];
        LatticePoly { eps, ff }
    }
}

/// Apply the difference operator of the pair `(u, u')` to a lattice
/// polynomial, exactly, via the bidiagonal action
/// `D (x̂|ε)^m = m(m−b−u−u'−1)(x̂|ε)^m + (a+m) m (u−m+1)(u'−m+1)(x̂|ε)^{m−1}`.
pub fn apply_d(
    p: &LatticePoly,
    u: Complex64,
    up: Complex64,
    a: f64,
    b: f64,
) -> Result<LatticePoly> {
    let s = collapse_real(u + up, "u + u'")?;
    let mut out = vec![0.0; p.ff.len()];
    for (m, &c) in p.ff.iter().enumerate() {
        if m == 0 || c == 0.0 {
            continue;
        }
        let mf = m as f64;
        let diag = mf * (mf - 1.0) - mf * (s + b);
        out[m] += diag * c;
        let mm1 = Complex64::new(mf - 1.0, 0.0);
        let lower = collapse_real((u - mm1) * (up - mm1), "(u−m+1)(u'−m+1)")?;
        out[m - 1] += (a + mf) * mf * lower * c;
    }
    Ok(LatticePoly::from_ff(p.eps, out))
}

/// Pointwise stencil `(Df)(x̂) = β(x)(f(x̂⁺)−f(x̂)) + δ(x)(f(x̂⁻)−f(x̂))`,
/// the independent oracle for [`apply_d`].
pub fn apply_d_pointwise(
    p: &LatticePoly,
    x: u32,
    u: Complex64,
    up: Complex64,
    a: f64,
    b: f64,
) -> Result<f64> {
    let beta = birth_rate(x, u, up, a, b)?;
    let delta = death_rate(x, u, up, a, b)?;
    let fx = p.eval_at(x);
    let mut acc = beta * (p.eval_at(x + 1) - fx);
    if x > 0 {
        acc += delta * (p.eval_at(x - 1) - fx);
    }
    Ok(acc)
}

/// Monic Wilson–Neretin polynomial `𝔭_n` of the weight at level `N`,
/// built from the terminating 4F3 divided by its leading coefficient. The
/// hypergeometric series rearranges to exact coefficients on the
/// falling-factorial basis:
/// `𝔭_n = Σ_j (−1)^j (−n)_j (n+γ)_j / ((a+1)_j (1−z−N)_j (1−z'−N)_j j!) · pref · (x̂|ε)^j`
/// with `γ = 1 − z − z' − b − 2N` and
/// `pref = (a+1)_n (1−z−N)_n (1−z'−N)_n / (n+γ)_n`.
pub fn wilson_neretin(n: u32, params: &Params, level: usize) -> Result<LatticePoly> {
    if n as usize > level.saturating_sub(1) {
        return Err(Error::domain(format!(
            "only {level} orthogonal polynomials exist at level {level}; requested n = {n}"
        )));
    }
    params.require_h()?;
    let eps = params.epsilon();
    let nf = level as f64;
    let gamma = Complex64::new(1.0 - nf * 2.0, 0.0) - params.z - params.zp
        + Complex64::new(-params.b, 0.0);
    let pa = Complex64::new(params.a + 1.0, 0.0);
    let pb = Complex64::new(1.0 - nf, 0.0) - params.z;
    let pc = Complex64::new(1.0 - nf, 0.0) - params.zp;
    let ng = Complex64::new(n as f64, 0.0) + gamma;
    let denom_n = pochhammer(ng, n);
    let mut ff = Vec::with_capacity(n as usize + 1);
    for j in 0..=n {
        let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
        let mut t = Complex64::new(sign, 0.0);
        t *= pochhammer(Complex64::new(-(n as f64), 0.0), j);
        t *= pochhammer(ng, j);
        // tail Pochhammers (p+j)_{n-j} = (p)_n / (p)_j without division
        t *= pochhammer(pa + Complex64::new(j as f64, 0.0), n - j);
        t *= pochhammer(pb + Complex64::new(j as f64, 0.0), n - j);
        t *= pochhammer(pc + Complex64::new(j as f64, 0.0), n - j);
        t /= denom_n;
        let mut fact = 1.0;
        for i in 1..=j {
            fact *= f64::from(i);
        }
        t /= Complex64::new(fact, 0.0);
        ff.push(collapse_real(t, "Wilson-Neretin coefficient")?);
    }
    Ok(LatticePoly::from_ff(eps, ff))
}

/// Monic orthogonal polynomial by Gram–Schmidt against the weight summed
/// over `x <= L`, with `L` grown adaptively until the highest moment is
/// stable to 1e-13 relative.
pub fn wilson_neretin_gram_schmidt(n: u32, params: &Params, level: usize) -> Result<LatticePoly> {
    params.require_h()?;
    let eps = params.epsilon();
    let deg = n as usize;
    let n_moments = 2 * deg + 1;
    let mut l: u32 = 400;
    let mut moments = raw_moments(params, level, n_moments, l)?;
    loop {
        let next = raw_moments(params, level, n_moments, 2 * l)?;
        let stable = moments
            .iter()
            .zip(&next)
            .all(|(m, m2)| (m - m2).abs() <= 1e-13 * (1.0 + m2.abs()));
        moments = next;
        if stable || l >= 1 << 22 {
            break;
        }
        l *= 2;
    }
    if deg == 0 {
        return Ok(LatticePoly::one(eps));
    }
    // Solve Σ_{j<n} c_j m_{i+j} = −m_{i+n} for i = 0..n−1.
    let mut a = vec![vec![0.0; deg + 1]; deg];
    for i in 0..deg {
        for j in 0..deg {
            a[i][j] = moments[i + j];
        }
        a[i][deg] = -moments[i + deg];
    }
    gauss_solve(&mut a);
    let mut mono = Vec::with_capacity(deg + 1);
    for row in &a {
        mono.push(row[deg]);
    }
    mono.push(1.0);
    Ok(LatticePoly::from_monomial(eps, &mono))
}

/// Moments `Σ_{x<=L} x̂^k W(x)`, normalized by the total weight so the
/// Hankel system stays well scaled.
fn raw_moments(params: &Params, level: usize, count: usize, l: u32) -> Result<Vec<f64>> {
    let w = WeightFn::new(params, level, l)?;
    let eps = params.epsilon();
    let shift = (0..=l).map(|x| w.log_w(x)).fold(f64::NEG_INFINITY, f64::max);
    let mut z = 0.0;
    let mut moments = vec![0.0; count];
    for x in 0..=l {
        let wx = (w.log_w(x) - shift).exp();
        z += wx;
        let xh = {
            let v = f64::from(x) + eps;
            v * v
        };
        let mut p = wx;
        for m in moments.iter_mut() {
            *m += p;
            p *= xh;
        }
    }
    for m in moments.iter_mut() {
        *m /= z;
    }
    Ok(moments)
}

fn gauss_solve(a: &mut [Vec<f64>]) {
    let n = a.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())
            .unwrap();
        a.swap(col, piv);
        let p = a[col][col];
        for i in 0..n {
            if i != col {
                let f = a[i][col] / p;
                for j in col..=n {
                    a[i][j] -= f * a[col][j];
                }
            }
        }
    }
    for i in 0..n {
        let piv = a[i][i];
        let last = a[i].len() - 1;
        a[i][last] /= piv;
    }
}

/// Max relative residual of the eigenfunction identity
/// `D 𝔭_n = γ_n 𝔭_n` over `x <= x_max`, with the stencil as the
/// evaluation path.
pub fn eigen_check(n: u32, params: &Params, level: usize, x_max: u32) -> Result<f64> {
    let p = wilson_neretin(n, params, level)?;
    let gamma = gamma_eigenvalue(n, params, level);
    let (u, up) = params.level_shift(level);
    let mut worst: f64 = 0.0;
    for x in 0..=x_max {
        let lhs = apply_d_pointwise(&p, x, u, up, params.a, params.b)?;
        let rhs = gamma * p.eval_at(x);
        let denom = 1.0 + p.eval_at(x).abs();
        worst = worst.max((lhs - rhs).abs() / denom);
    }
    Ok(worst)
}

// ---------------------------------------------------------------------------
// Shifted-polynomial evaluation (floating) and identity residuals
// ---------------------------------------------------------------------------

/// `c(N, μ) = Π_i (N−i+1)_{μ_i} (N+a−i+1)_{μ_i}` in floating point.
pub fn c_n_mu_f64(level: usize, mu: &[u32], a: f64) -> f64 {
    let mut acc = 1.0;
    for (i, &m) in mu.iter().enumerate() {
        let base1 = level as f64 - i as f64; // N − i + 1 with 1-based i
        let base2 = level as f64 + a - i as f64;
        for k in 0..m {
            acc *= (base1 + f64::from(k)) * (base2 + f64::from(k));
        }
    }
    acc
}

/// Evaluate `T*_{μ|N}` at a strictly decreasing `x̂`-tuple:
/// `det[(x̂_i|ε)^{μ_j+N−j}] / (c(N,μ) Δ(x̂))`.
pub fn tstar_eval_f64(mu: &[u32], level: usize, xhat: &[f64], eps: f64, a: f64) -> f64 {
    debug_assert!(mu.len() <= level && xhat.len() == level);
    let mut mu_full = mu.to_vec();
    mu_full.resize(level, 0);
    let ff_pow = |x: f64, m: u32| -> f64 {
        let mut p = 1.0;
        for j in 0..m {
            let t = eps + f64::from(j);
            p *= x - t * t;
        }
        p
    };
    let mut mat = vec![vec![0.0; level]; level];
    for (i, &x) in xhat.iter().enumerate() {
        for (j, &mj) in mu_full.iter().enumerate() {
            mat[i][j] = ff_pow(x, mj + (level - 1 - j) as u32);
        }
    }
    let det = det_lu(&mut mat);
    let mut vand = 1.0;
    for i in 0..level {
        for j in i + 1..level {
            vand *= xhat[i] - xhat[j];
        }
    }
    det / (c_n_mu_f64(level, mu, a) * vand)
}

fn det_lu(m: &mut [Vec<f64>]) -> f64 {
    let n = m.len();
    let mut det = 1.0;
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| m[i][col].abs().partial_cmp(&m[j][col].abs()).unwrap())
            .unwrap();
        if piv != col {
            m.swap(col, piv);
            det = -det;
        }
        let p = m[col][col];
        if p == 0.0 {
            return 0.0;
        }
        det *= p;
        for i in col + 1..n {
            let f = m[i][col] / p;
            for j in col..n {
                m[i][j] -= f * m[col][j];
            }
        }
    }
    det
}

/// Residual of the infinitesimal invariance
/// `Σ_λ M(λ) R^{(N)}(λ, ν) = 0`, normalized by `M(ν) |diagonal|`.
pub fn invariance_residual(nu: &Signature, params: &Params, w: &WeightFn) -> Result<f64> {
    let n = nu.level();
    let (u, up) = params.level_shift(n);
    let nu_row = rate_row(nu, u, up, params.a, params.b)?;
    let log_m = |s: &Signature| -> f64 {
        let l = s.l_coords();
        let mut acc = 2.0 * crate::branching::log_vandermonde_lhat(&l, w.eps());
        for &li in &l {
            acc += w.log_w(li as u32);
        }
        acc
    };
    let base = log_m(nu);
    let mut acc = nu_row.diagonal;
    for k in 0..n {
        for dir in [1, -1] {
            if let Some(lam) = nu.bump(k, dir) {
                let r = rate_entry(&lam, nu, u, up, params.a, params.b)?;
                if r != 0.0 {
                    acc += (log_m(&lam) - base).exp() * r;
                }
            }
        }
    }
    Ok(acc.abs() / nu_row.diagonal.abs())
}

/// Residual of the infinitesimal master relation
/// `(R^{(N+1)}_{u+1,u'+1} Λ)(λ, ν) = (Λ R^{(N)}_{u,u'})(λ, ν)`, both sides
/// finite sums; normalized by `max(|lhs|, |rhs|, 1)`.
pub fn master_infinitesimal_residual(
    lam: &Signature,
    nu: &Signature,
    params: &Params,
    ctx: &crate::branching::KernelCtx,
) -> Result<f64> {
    let n = nu.level();
    debug_assert_eq!(lam.level(), n + 1);
    let (u, up) = params.level_shift(n);
    let one = Complex64::new(1.0, 0.0);
    let (a, b) = (params.a, params.b);

    // lhs: Σ_κ R^{(N+1)}(λ, κ) Λ(κ, ν) over κ ∈ {λ} ∪ {λ ± e_k}
    let lam_row = rate_row(lam, u + one, up + one, a, b)?;
    let mut lhs = lam_row.diagonal * ctx.entry(lam, nu);
    for (k, r) in &lam_row.up {
        let kappa = lam.bump(*k, 1).unwrap();
        lhs += r * ctx.entry(&kappa, nu);
    }
    for (k, r) in &lam_row.down {
        let kappa = lam.bump(*k, -1).unwrap();
        lhs += r * ctx.entry(&kappa, nu);
    }

    // rhs: Σ_κ Λ(λ, κ) R^{(N)}(κ, ν) over κ ∈ {ν} ∪ {ν ± e_k}
    let nu_row = rate_row(nu, u, up, a, b)?;
    let mut rhs = ctx.entry(lam, nu) * nu_row.diagonal;
    for k in 0..n {
        for dir in [1i32, -1i32] {
            if let Some(kappa) = nu.bump(k, dir) {
                let r = rate_entry(&kappa, nu, u, up, a, b)?;
                if r != 0.0 {
                    rhs += ctx.entry(lam, &kappa) * r;
                }
            }
        }
    }
    let scale = lhs.abs().max(rhs.abs()).max(1.0);
    Ok((lhs - rhs).abs() / scale)
}

/// Verify the expansion of `D^{(N)} T*_{μ|N}`: the diagonal coefficient is
/// `Σ_j m_j(m_j − b − u − u' − 1) − c_N` and the lowering terms are
/// `(u − m_j + 1)(u' − m_j + 1) 1{μ_j − 1 >= μ_{j+1}}` onto `T*_{μ−e_j|N}`,
/// checked against direct pointwise evaluation of `Σ_ν R(λ,ν) T*_μ(n̂)` on
/// a grid of `λ`. Returns the max relative residual.
pub fn tstar_expansion_residual(
    mu: &Signature,
    params: &Params,
    grid: &[Signature],
) -> Result<f64> {
    let n = mu.level();
    let eps = params.epsilon();
    let (a, b) = (params.a, params.b);
    let mut worst: f64 = 0.0;
    for lam in grid {
        debug_assert_eq!(lam.level(), n);
        let (u, up) = params.level_shift(n);
        let s = collapse_real(u + up, "u+u'")?;
        // direct side
        let row = rate_row(lam, u, up, a, b)?;
        let t_at = |sig_: &Signature| -> f64 {
            tstar_eval_f64(mu.parts(), n, &sig_.lhat(eps), eps, a)
        };
        let mut lhs = row.diagonal * t_at(lam);
        for (k, r) in &row.up {
            lhs += r * t_at(&lam.bump(*k, 1).unwrap());
        }
        for (k, r) in &row.down {
            lhs += r * t_at(&lam.bump(*k, -1).unwrap());
        }
        // claimed expansion
        let m: Vec<f64> = mu
            .parts()
            .iter()
            .enumerate()
            .map(|(j, &p)| f64::from(p) + (n - 1 - j) as f64)
            .collect();
        let mut diag = -c_n(u, up, b, n);
        for &mj in &m {
            diag += mj * (mj - b - s - 1.0);
        }
        let mut rhs = diag * t_at(lam);
        for j in 0..n {
            let mu_j = mu.parts()[j];
            let mu_next = if j + 1 < n { mu.parts()[j + 1] } else { 0 };
            if mu_j >= 1 && mu_j - 1 >= mu_next {
                let mut lowered = mu.parts().to_vec();
                lowered[j] -= 1;
                let coeff = collapse_real(
                    (u - Complex64::new(m[j] - 1.0, 0.0)) * (up - Complex64::new(m[j] - 1.0, 0.0)),
                    "lowering coefficient",
                )?;
                rhs += coeff * tstar_eval_f64(&lowered, n, &lam.lhat(eps), eps, a);
            }
        }
        let scale = lhs.abs().max(rhs.abs()).max(1.0);
        worst = worst.max((lhs - rhs).abs() / scale);
    }
    Ok(worst)
}

// ---------------------------------------------------------------------------
// Reuter diagnostics
// ---------------------------------------------------------------------------

/// Partial sums of the two non-explosiveness series and the fitted decay
/// exponent of the potential coefficients.
#[derive(Clone, Debug, Serialize)]
pub struct ReuterDiagnostics {
    /// Partial sums of `Σ 1/(β_n π_n)` at each power of 10 up to the cutoff.
    pub sum1_partials: Vec<(u32, f64)>,
    /// Partial sums of `Σ 1/δ_n + Σ (1/(δ_n π_n)) Σ_{k>n} π_k`.
    pub sum2_partials: Vec<(u32, f64)>,
    /// Fitted log-log slope of `π_n` on the last decade.
    pub pi_slope: f64,
    /// Predicted slope `−2(u+u'+b) − 3`.
    pub predicted_slope: f64,
}

pub fn reuter_diagnostics(
    u: Complex64,
    up: Complex64,
    a: f64,
    b: f64,
    cutoff: u32,
) -> Result<ReuterDiagnostics> {
    in_h_circ(u, up, a, b)?;
    let n = cutoff as usize;
    let mut log_beta = Vec::with_capacity(n + 1);
    let mut log_delta = vec![f64::NEG_INFINITY];
    for x in 0..=cutoff {
        log_beta.push(birth_rate(x, u, up, a, b)?.ln());
        if x >= 1 {
            log_delta.push(death_rate(x, u, up, a, b)?.ln());
        }
    }
    let mut log_pi = vec![0.0f64];
    for k in 1..=n {
        let prev = log_pi[k - 1];
        log_pi.push(prev + log_beta[k - 1] - log_delta[k]);
    }
    // suffix sums of π in linear space (π decays like n^{−2(u+u'+b)−3})
    let mut pi_tail = vec![0.0f64; n + 2];
    for k in (1..=n).rev() {
        pi_tail[k] = pi_tail[k + 1] + log_pi[k].exp();
    }
    let mut s1 = 0.0;
    let mut s2 = 0.0;
    let mut sum1_partials = Vec::new();
    let mut sum2_partials = Vec::new();
    for k in 0..=n {
        s1 += (-log_beta[k] - log_pi[k]).exp();
        if k >= 1 {
            s2 += (-log_delta[k]).exp() + (-log_delta[k] - log_pi[k]).exp() * pi_tail[k + 1];
        }
        let kk = k as u32;
        if kk >= 10 && (kk.ilog10() != (kk + 1).ilog10() || kk == cutoff) {
            sum1_partials.push((kk, s1));
            sum2_partials.push((kk, s2));
        }
    }
    // fitted slope on the last decade
    let lo = (n / 10).max(2);
    let (mut sx, mut sy, mut sxx, mut sxy, mut cnt) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for k in lo..=n {
        let lx = (k as f64).ln();
        sx += lx;
        sy += log_pi[k];
        sxx += lx * lx;
        sxy += lx * log_pi[k];
        cnt += 1.0;
    }
    let slope = (cnt * sxy - sx * sy) / (cnt * sxx - sx * sx);
    let s = (u + up).re + b;
    Ok(ReuterDiagnostics {
        sum1_partials,
        sum2_partials,
        pi_slope: slope,
        predicted_slope: -2.0 * s - 3.0,
    })
}
