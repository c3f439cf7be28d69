//! Truncated transition semigroups: the single-particle `P_1(t)` by
//! uniformization of the leading block of the rate matrix, the level-N
//! semigroup by the Karlin–McGregor determinant, and the semigroup-level
//! identity checks (harmonicity of the Vandermonde, stationarity, master
//! relation).
//!
//! Truncation policy is a killed boundary: outflow above the block is
//! dropped, rows are substochastic and the per-row leak is recorded. The
//! uniformization constant is `1.01 ×` the largest row rate; for large
//! `Λt` the base step is computed at `t/2^m` and squared `m` times, which
//! keeps every entry a finite sum of products of nonnegative terms.

use num_complex::Complex64;
use serde::Serialize;

use crate::dynamics::{birth_rate, c_n, death_rate};
use crate::error::Result;
use crate::params::Params;
use crate::sig::{enumerate_level, Signature};

/// Truncated single-particle semigroup on the states `0..=l`.
#[derive(Clone, Debug)]
pub struct P1Matrix {
    pub l: u32,
    pub t: f64,
    pub lambda_unif: f64,
    /// Row-major `(l+1) × (l+1)` matrix of transition probabilities.
    data: Vec<f64>,
    /// Per-row probability mass lost to the killed boundary.
    pub leak: Vec<f64>,
}

impl P1Matrix {
    pub fn size(&self) -> usize {
        self.l as usize + 1
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> f64 {
        self.data[x as usize * self.size() + y as usize]
    }

    pub fn row(&self, x: u32) -> &[f64] {
        let n = self.size();
        &self.data[x as usize * n..(x as usize + 1) * n]
    }

    pub fn row_sum(&self, x: u32) -> f64 {
        self.row(x).iter().sum()
    }
}

/// `P_1(t)` for the pair `(u, u')` on the truncated block `0..=l`.
pub fn p1_semigroup(
    t: f64,
    u: Complex64,
    up: Complex64,
    a: f64,
    b: f64,
    l: u32,
) -> Result<P1Matrix> {
    crate::params::in_h_circ(u, up, a, b)?;
    let n = l as usize + 1;
    let mut beta = Vec::with_capacity(n);
    let mut delta = Vec::with_capacity(n);
    for x in 0..=l {
        beta.push(birth_rate(x, u, up, a, b)?);
        delta.push(death_rate(x, u, up, a, b)?);
    }
    if t == 0.0 {
        let mut data = vec![0.0; n * n];
        for x in 0..n {
            data[x * n + x] = 1.0;
        }
        return Ok(P1Matrix {
            l,
            t,
            lambda_unif: 0.0,
            data,
            leak: vec![0.0; n],
        });
    }
    let qmax = (0..n).map(|x| beta[x] + delta[x]).fold(0.0f64, f64::max);
    let lambda = 1.01 * qmax;
    // halve the time until the Poisson mean is modest, then square back up
    let mut m = 0u32;
    while lambda * t / f64::powi(2.0, m as i32) > 32.0 {
        m += 1;
    }
    let tau = t / f64::powi(2.0, m as i32);
    let mean = lambda * tau;

    // one-step uniformization kernel K = I + Q/Λ (tridiagonal, nonnegative)
    let kdiag: Vec<f64> = (0..n).map(|x| 1.0 - (beta[x] + delta[x]) / lambda).collect();
    let kup: Vec<f64> = (0..n).map(|x| beta[x] / lambda).collect();
    let kdown: Vec<f64> = (0..n).map(|x| delta[x] / lambda).collect();

    // P(τ) = Σ_k pois(k; Λτ) K^k, truncated when the Poisson tail < 1e-13
    let mut series = vec![0.0; n * n];
    let mut power = vec![0.0; n * n];
    for x in 0..n {
        power[x * n + x] = 1.0;
    }
    let mut pois = (-mean).exp();
    let mut cum = 0.0;
    let mut k = 0u32;
    loop {
        for (s, p) in series.iter_mut().zip(&power) {
            *s += pois * p;
        }
        cum += pois;
        if 1.0 - cum < 1e-13 {
            break;
        }
        // power ← power · K (right-multiply by the tridiagonal kernel)
        let mut next = vec![0.0; n * n];
        for x in 0..n {
            let row = &power[x * n..(x + 1) * n];
            let out = &mut next[x * n..(x + 1) * n];
            for y in 0..n {
                let v = row[y];
                if v == 0.0 {
                    continue;
                }
                out[y] += v * kdiag[y];
                if y + 1 < n {
                    out[y + 1] += v * kup[y];
                }
                if y > 0 {
                    out[y - 1] += v * kdown[y];
                }
            }
        }
        power = next;
        k += 1;
        pois *= mean / f64::from(k);
    }
    // square back up to time t
    let mut p = series;
    for _ in 0..m {
        p = mat_square(&p, n);
    }
    let leak: Vec<f64> = (0..n)
        .map(|x| (1.0 - p[x * n..(x + 1) * n].iter().sum::<f64>()).max(0.0))
        .collect();
    Ok(P1Matrix {
        l,
        t,
        lambda_unif: lambda,
        data: p,
        leak,
    })
}

fn mat_square(a: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        let arow = &a[i * n..(i + 1) * n];
        let orow = &mut out[i * n..(i + 1) * n];
        for (k, &aik) in arow.iter().enumerate() {
            if aik == 0.0 {
                continue;
            }
            let brow = &a[k * n..(k + 1) * n];
            for (o, &bkj) in orow.iter_mut().zip(brow) {
                *o += aik * bkj;
            }
        }
    }
    out
}

pub(crate) fn det_small(m: &mut [Vec<f64>]) -> f64 {
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

/// Karlin–McGregor entry
/// `P_N(t; λ, ν) = e^{−c_N t} · Δ(n̂)/Δ(l̂) · det[P_1(t; l_i, n_j)]`
/// with the truncated `P_1` built for the same `(u, u')`.
pub fn pn_entry(
    p1: &P1Matrix,
    lam: &Signature,
    nu: &Signature,
    u: Complex64,
    up: Complex64,
    eps: f64,
    b: f64,
) -> f64 {
    let n = lam.level();
    debug_assert_eq!(nu.level(), n);
    let cn = c_n(u, up, b, n);
    let lh = lam.lhat(eps);
    let nh = nu.lhat(eps);
    let mut ratio = 1.0;
    for i in 0..n {
        for j in i + 1..n {
            ratio *= (nh[i] - nh[j]) / (lh[i] - lh[j]);
        }
    }
    let ll = lam.l_coords();
    let nl = nu.l_coords();
    let mut mat = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            mat[i][j] = p1.get(ll[i] as u32, nl[j] as u32);
        }
    }
    (-cn * p1.t).exp() * ratio * det_small(&mut mat)
}

/// Residual of the harmonicity identity
/// `Σ_{y} Π_i P_1(t; x_i, y_i) Δ(ŷ) = e^{c_N t} Δ(x̂)` under truncation:
/// the sum over the cube collapses to a determinant of moment vectors
/// `F_k(x) = Σ_y P_1(t; x, y) ŷ^k`.
pub fn harmonicity_residual(
    p1: &P1Matrix,
    x: &Signature,
    u: Complex64,
    up: Complex64,
    eps: f64,
    b: f64,
) -> f64 {
    let n = x.level();
    let cn = c_n(u, up, b, n);
    let xl = x.l_coords();
    // moment vectors per source coordinate
    let mut mat = vec![vec![0.0; n]; n];
    for (i, &xi) in xl.iter().enumerate() {
        let row = p1.row(xi as u32);
        let mut moments = vec![0.0; n];
        for (y, &p) in row.iter().enumerate() {
            let yh = {
                let v = y as f64 + eps;
                v * v
            };
            let mut pw = p;
            for mom in moments.iter_mut() {
                *mom += pw;
                pw *= yh;
            }
        }
        for j in 0..n {
            mat[i][j] = moments[n - 1 - j];
        }
    }
    let det = det_small(&mut mat);
    let xh = x.lhat(eps);
    let mut vand = 1.0;
    for i in 0..n {
        for j in i + 1..n {
            vand *= xh[i] - xh[j];
        }
    }
    let target = (cn * p1.t).exp() * vand;
    (det - target).abs() / target.abs()
}

/// Both sides of the semigroup-level master relation at `(λ, ν)`,
/// truncated at `κ_1 <= l` on each level.
#[derive(Clone, Debug, Serialize)]
pub struct MasterSides {
    pub lhs: f64,
    pub rhs: f64,
    pub residual: f64,
}

/// `(P_{N+1}(t) Λ)(λ, ν)` vs `(Λ P_N(t))(λ, ν)` with both `P` factors
/// built from the level-appropriate shifted parameters.
pub fn master_semigroup_residual(
    t: f64,
    lam: &Signature,
    nu: &Signature,
    params: &Params,
    l: u32,
) -> Result<MasterSides> {
    let n = nu.level();
    debug_assert_eq!(lam.level(), n + 1);
    let eps = params.epsilon();
    let (u_lo, up_lo) = params.level_shift(n);
    let (u_hi, up_hi) = params.level_shift(n + 1);
    let p1_hi = p1_semigroup(t, u_hi, up_hi, params.a, params.b, l)?;
    let p1_lo = p1_semigroup(t, u_lo, up_lo, params.a, params.b, l)?;
    let ctx = crate::branching::KernelCtx::for_truncation(params.a, params.b, l, n + 1);
    let mut lhs = 0.0;
    for kappa in enumerate_level(n + 1, l) {
        let k = ctx.entry(&kappa, nu);
        if k > 0.0 {
            lhs += pn_entry(&p1_hi, lam, &kappa, u_hi, up_hi, eps, params.b) * k;
        }
    }
    let mut rhs = 0.0;
    for kappa in crate::branching::kernel_support(lam) {
        let k = ctx.entry(lam, &kappa);
        if k > 0.0 {
            rhs += k * pn_entry(&p1_lo, &kappa, nu, u_lo, up_lo, eps, params.b);
        }
    }
    Ok(MasterSides {
        lhs,
        rhs,
        residual: (lhs - rhs).abs(),
    })
}
