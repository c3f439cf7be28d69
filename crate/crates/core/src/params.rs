//! Parameter tuples `(a, b, z, z')` and their domain classification.
//!
//! The pair `(z, z')` is classified into the principal, complementary or
//! degenerate series; the measures exist on the domain `H` (both the pair
//! and its `2ε`-shift principal-or-complementary plus `z + z' + b > −1`),
//! while the dynamics need the larger per-level domain `H°` in the shifted
//! parameters `(u, u') = (z + N − 1, z' + N − 1)`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance for recognizing conjugate pairs and integers in
/// floating-point inputs.
const CLASSIFY_TOL: f64 = 1e-12;

/// The parameter tuple `(a, b, z, z')` with the derived `ε = (a+b+1)/2`.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct Params {
    pub a: f64,
    pub b: f64,
    #[serde(with = "complex_serde")]
    pub z: Complex64,
    #[serde(with = "complex_serde")]
    pub zp: Complex64,
}

mod complex_serde {
    use num_complex::Complex64;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    struct Flat {
        re: f64,
        im: f64,
    }

    pub fn serialize<S: Serializer>(z: &Complex64, s: S) -> Result<S::Ok, S::Error> {
        Flat { re: z.re, im: z.im }.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Complex64, D::Error> {
        let f = Flat::deserialize(d)?;
        Ok(Complex64::new(f.re, f.im))
    }
}

/// Classification of a pair `(z, z')`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "tag", content = "m", rename_all = "lowercase")]
pub enum DomainClass {
    /// Non-real conjugate pair: `z' = conj(z)`, `z ∉ ℝ`.
    Principal,
    /// Both real with `m < z, z' < m + 1` for an integer `m`.
    Complementary(i64),
    /// `z = m` (or `z' = m`) for a positive integer `m`, other one `> m − 1`.
    Degenerate(i64),
    /// None of the above.
    Outside,
}

fn approx_int(x: f64) -> Option<i64> {
    let r = x.round();
    if (x - r).abs() <= CLASSIFY_TOL * (1.0 + x.abs()) {
        Some(r as i64)
    } else {
        None
    }
}

/// Classify `(z, z')` into the principal / complementary / degenerate
/// series, or `Outside`.
pub fn classify_pair(z: Complex64, zp: Complex64) -> DomainClass {
    let conj_tol = CLASSIFY_TOL * (1.0 + z.norm());
    let real_tol = CLASSIFY_TOL * (1.0 + z.norm().max(zp.norm()));
    let z_real = z.im.abs() <= real_tol;
    let zp_real = zp.im.abs() <= real_tol;
    if !z_real && (zp - z.conj()).norm() <= conj_tol {
        return DomainClass::Principal;
    }
    if z_real && zp_real {
        let (x, y) = (z.re, zp.re);
        // degenerate: one coordinate a positive integer, the other > m − 1
        for (p, q) in [(x, y), (y, x)] {
            if let Some(m) = approx_int(p) {
                if m >= 1 && q > m as f64 - 1.0 {
                    return DomainClass::Degenerate(m);
                }
            }
        }
        if approx_int(x).is_none() && approx_int(y).is_none() {
            let mx = x.floor() as i64;
            if mx == y.floor() as i64 {
                return DomainClass::Complementary(mx);
            }
        }
    }
    DomainClass::Outside
}

impl Params {
    /// Construct, enforcing `a >= b >= -1/2`.
    pub fn new(a: f64, b: f64, z: Complex64, zp: Complex64) -> Result<Self> {
        if !(a >= b && b >= -0.5) {
            return Err(Error::domain(format!(
                "need a >= b >= -1/2, got a = {a}, b = {b}"
            )));
        }
        Ok(Params { a, b, z, zp })
    }

    /// `ε = (a + b + 1)/2 >= 0`.
    pub fn epsilon(&self) -> f64 {
        0.5 * (self.a + self.b + 1.0)
    }

    /// Per-level shifted pair `(u, u') = (z + N − 1, z' + N − 1)`.
    pub fn level_shift(&self, n: usize) -> (Complex64, Complex64) {
        let s = Complex64::new(n as f64 - 1.0, 0.0);
        (self.z + s, self.zp + s)
    }

    /// Membership in `H`: both `(z, z')` and `(z + 2ε, z' + 2ε)` principal
    /// or complementary, and `z + z' + b > −1`.
    pub fn in_h(&self) -> bool {
        let shift = Complex64::new(2.0 * self.epsilon(), 0.0);
        let ok = |c: DomainClass| matches!(c, DomainClass::Principal | DomainClass::Complementary(_));
        ok(classify_pair(self.z, self.zp))
            && ok(classify_pair(self.z + shift, self.zp + shift))
            && (self.z + self.zp).re + self.b > -1.0
    }

    /// Validate `in_h`, reporting the failing condition.
    pub fn require_h(&self) -> Result<()> {
        let shift = Complex64::new(2.0 * self.epsilon(), 0.0);
        let ok = |c: DomainClass| matches!(c, DomainClass::Principal | DomainClass::Complementary(_));
        if !ok(classify_pair(self.z, self.zp)) {
            return Err(Error::domain(format!(
                "pair (z, z') = ({}, {}) outside Z_princ ⊔ Z_compl",
                self.z, self.zp
            )));
        }
        if !ok(classify_pair(self.z + shift, self.zp + shift)) {
            return Err(Error::domain(format!(
                "shifted pair (z + 2ε, z' + 2ε) = ({}, {}) outside Z_princ ⊔ Z_compl",
                self.z + shift,
                self.zp + shift
            )));
        }
        let s = (self.z + self.zp).re + self.b;
        if s <= -1.0 {
            return Err(Error::domain(format!("z + z' + b = {s} must exceed -1")));
        }
        Ok(())
    }

    /// Validate the `H°` membership of the level-`n` shifted pair.
    pub fn require_h_circ(&self, n: usize) -> Result<()> {
        let (u, up) = self.level_shift(n);
        in_h_circ(u, up, self.a, self.b)
    }
}

/// Membership in `H°` for a pair `(u, u')`:
/// `(u − k)(u' − k) > 0` for all `k ∈ ℤ_+`,
/// `(u + k + 2ε)(u' + k + 2ε) > 0` for all `k ∈ ℕ`,
/// `u + u' + b > −1`.
///
/// The two products are upward-opening quadratics in `k`, so positivity is
/// scanned up to `max(|u|, |u'|) + 2ε + 2` plus three consecutive positive
/// values, beyond which it is monotone. Reports which condition failed and
/// at which `k`.
pub fn in_h_circ(u: Complex64, up: Complex64, a: f64, b: f64) -> Result<()> {
    let eps = 0.5 * (a + b + 1.0);
    let bound = (u.norm().max(up.norm()) + 2.0 * eps + 2.0).ceil() as i64 + 3;
    let check = |prod: Complex64, what: &str, k: i64| -> Result<()> {
        if prod.im.abs() > 1e-12 * (1.0 + prod.norm()) {
            return Err(Error::domain(format!(
                "{what} at k = {k} is not real: {prod}"
            )));
        }
        if prod.re <= 0.0 {
            return Err(Error::domain(format!(
                "{what} at k = {k} is {} (must be > 0)",
                prod.re
            )));
        }
        Ok(())
    };
    for k in 0..=bound {
        let kk = Complex64::new(k as f64, 0.0);
        check((u - kk) * (up - kk), "(u - k)(u' - k)", k)?;
    }
    for k in 1..=bound {
        let kk = Complex64::new(k as f64 + 2.0 * eps, 0.0);
        check((u + kk) * (up + kk), "(u + k + 2ε)(u' + k + 2ε)", k)?;
    }
    let s = (u + up).re + b;
    if s <= -1.0 {
        return Err(Error::domain(format!("u + u' + b = {s} must exceed -1")));
    }
    Ok(())
}

/// The slightly stronger condition used by the master relation: the first
/// inequality must hold for all integers `k`, not just nonnegative ones.
pub fn satisfies_master_domain(z: Complex64, zp: Complex64, a: f64, b: f64) -> bool {
    if in_h_circ(z, zp, a, b).is_err() {
        return false;
    }
    let eps = 0.5 * (a + b + 1.0);
    let bound = (z.norm().max(zp.norm()) + 2.0 * eps + 2.0).ceil() as i64 + 3;
    for k in 1..=bound {
        let kk = Complex64::new(-k as f64, 0.0);
        let prod = (z - kk) * (zp - kk);
        if prod.im.abs() > 1e-12 * (1.0 + prod.norm()) || prod.re <= 0.0 {
            return false;
        }
    }
    true
}
