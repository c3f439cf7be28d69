//! Positive signatures, coordinate bijections and interlacing combinatorics.
//!
//! A signature at level `N` is a weakly decreasing tuple of `N` nonnegative
//! integers; trailing zeroes are significant, so `(4,2,1,0)` at level 4 and
//! `(4,2,1,0,0,0)` at level 6 are distinct. Each signature carries two
//! derived coordinate systems: the strictly decreasing `l_i = λ_i + N − i`
//! and the quadratic-lattice `l̂_i = (l_i + ε)²`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A positive signature: weakly decreasing nonnegative integer parts.
/// The level is the number of parts.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Debug, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Signature {
    parts: Vec<u32>,
}

/// Derived coordinates of a signature at a given ε.
#[derive(Clone, Debug, PartialEq)]
pub struct Coords {
    /// Strictly decreasing `l_i = λ_i + N − i`.
    pub l: Vec<i64>,
    /// Strictly decreasing `l̂_i = (l_i + ε)²`.
    pub lhat: Vec<f64>,
}

impl Signature {
    pub fn new(parts: Vec<u32>) -> Result<Self> {
        if parts.is_empty() {
            return Err(Error::invalid("signature must have at least one part"));
        }
        if parts.windows(2).any(|w| w[0] < w[1]) {
            return Err(Error::invalid(format!(
                "parts must be weakly decreasing: {parts:?}"
            )));
        }
        Ok(Signature { parts })
    }

    /// The all-zero signature at level `n`.
    pub fn zero(n: usize) -> Self {
        Signature {
            parts: vec![0; n.max(1)],
        }
    }

    pub fn level(&self) -> usize {
        self.parts.len()
    }

    pub fn parts(&self) -> &[u32] {
        &self.parts
    }

    /// `λ_1 + ... + λ_N`.
    pub fn size(&self) -> u64 {
        self.parts.iter().map(|&p| u64::from(p)).sum()
    }

    /// `l_i = λ_i + N − i` (1-based `i`), strictly decreasing.
    pub fn l_coords(&self) -> Vec<i64> {
        let n = self.parts.len() as i64;
        self.parts
            .iter()
            .enumerate()
            .map(|(i, &p)| i64::from(p) + n - 1 - i as i64)
            .collect()
    }

    /// `l̂_i = (l_i + ε)²`.
    pub fn lhat(&self, eps: f64) -> Vec<f64> {
        self.l_coords()
            .iter()
            .map(|&l| {
                let v = l as f64 + eps;
                v * v
            })
            .collect()
    }

    /// Both coordinate systems at once.
    pub fn coords(&self, eps: f64) -> Coords {
        Coords {
            l: self.l_coords(),
            lhat: self.lhat(eps),
        }
    }

    /// Signature with part `k` (0-based) moved by `delta = ±1`, if the
    /// result is again a signature.
    pub fn bump(&self, k: usize, delta: i32) -> Option<Signature> {
        let mut parts = self.parts.clone();
        let cur = parts.get(k).copied()?;
        let new = cur.checked_add_signed(delta)?;
        parts[k] = new;
        if k > 0 && parts[k - 1] < new {
            return None;
        }
        if k + 1 < parts.len() && new < parts[k + 1] {
            return None;
        }
        Some(Signature { parts })
    }

    /// Inverse of `coords`: rebuild the signature from `l`-coordinates.
    pub fn from_l_coords(l: &[i64]) -> Result<Self> {
        let n = l.len() as i64;
        let parts: Vec<u32> = l
            .iter()
            .enumerate()
            .map(|(i, &li)| {
                let p = li - (n - 1 - i as i64);
                u32::try_from(p).map_err(|_| Error::invalid(format!("negative part from l = {l:?}")))
            })
            .collect::<Result<_>>()?;
        Signature::new(parts)
    }
}

impl fmt::Display for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s: Vec<String> = self.parts.iter().map(|p| p.to_string()).collect();
        write!(f, "{}", s.join(","))
    }
}

impl FromStr for Signature {
    type Err = Error;

    /// Parse the comma-separated form, e.g. `"3,1,0"`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<u32> = s
            .split(',')
            .map(|p| {
                p.trim()
                    .parse::<u32>()
                    .map_err(|e| Error::invalid(format!("bad signature part {p:?}: {e}")))
            })
            .collect::<Result<_>>()?;
        Signature::new(parts)
    }
}

/// All signatures at `level` with `λ_1 <= max_part`, in lexicographically
/// descending order (the canonical iteration order).
pub fn enumerate_level(level: usize, max_part: u32) -> Vec<Signature> {
    let mut out = Vec::new();
    let mut cur = vec![max_part; level];
    loop {
        out.push(Signature { parts: cur.clone() });
        // next tuple in lex-descending order
        let mut i = level;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if cur[i] > 0 {
                cur[i] -= 1;
                let v = cur[i];
                for j in i + 1..level {
                    cur[j] = v;
                }
                break;
            }
            // carry: reset below happens after the decrement above
        }
        // skip states violating monotonicity (cannot occur by construction)
        debug_assert!(cur.windows(2).all(|w| w[0] >= w[1]));
    }
}

/// All `ν` at level `N` interlacing `λ` at level `N+1` (`λ ≻ ν`), i.e.
/// `λ_i >= ν_i >= λ_{i+1}`.
pub fn interlacing_below(lam: &Signature) -> Vec<Signature> {
    let lp = lam.parts();
    let n = lp.len() - 1;
    if n == 0 {
        return Vec::new();
    }
    let lo: Vec<u32> = (0..n).map(|i| lp[i + 1]).collect();
    let hi: Vec<u32> = (0..n).map(|i| lp[i]).collect();
    odometer(&lo, &hi)
}

/// All `μ` at level `N` with `ν ∪ 0 ≻ μ`, i.e. `ν_i >= μ_i >= ν_{i+1}` with
/// `ν_{N+1} = 0`.
pub fn interlacing_below_cup_zero(nu: &Signature) -> Vec<Signature> {
    let np = nu.parts();
    let n = np.len();
    let lo: Vec<u32> = (0..n).map(|i| if i + 1 < n { np[i + 1] } else { 0 }).collect();
    let hi: Vec<u32> = np.to_vec();
    odometer(&lo, &hi)
}

/// Nested odometer over per-coordinate ranges `[lo_i, hi_i]`, keeping only
/// weakly decreasing tuples. Output is lexicographically descending.
fn odometer(lo: &[u32], hi: &[u32]) -> Vec<Signature> {
    let n = lo.len();
    let mut out = Vec::new();
    if n == 0 || lo.iter().zip(hi).any(|(l, h)| l > h) {
        return out;
    }
    let mut cur: Vec<u32> = hi.to_vec();
    // clamp to monotone start
    for i in 1..n {
        cur[i] = cur[i].min(cur[i - 1]);
        if cur[i] < lo[i] {
            return out;
        }
    }
    'outer: loop {
        out.push(Signature { parts: cur.clone() });
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
                // restore and keep carrying
                for j in i..n {
                    cur[j] = lo[j];
                }
            }
        }
    }
    out
}

/// Every BC-predecessor `μ` of `λ` (level N+1 → N) paired with the full
/// list of intermediate `ν` satisfying `λ ≻ ν` and `ν ∪ 0 ≻ μ`.
pub fn bc_predecessors(lam: &Signature) -> Vec<(Signature, Vec<Signature>)> {
    let mut map: std::collections::BTreeMap<Signature, Vec<Signature>> = Default::default();
    for nu in interlacing_below(lam) {
        for mu in interlacing_below_cup_zero(&nu) {
            map.entry(mu).or_default().push(nu.clone());
        }
    }
    let mut out: Vec<(Signature, Vec<Signature>)> = map.into_iter().collect();
    // canonical lex-descending order on μ and on each ν list
    out.sort_by(|a, b| b.0.parts.cmp(&a.0.parts));
    for (_, nus) in &mut out {
        nus.sort_by(|a, b| b.parts.cmp(&a.parts));
    }
    out
}

/// Per-coordinate admissible range of the intermediate `ν_i` for a fixed
/// pair `(λ, μ)`: the double interlacing factorizes coordinate-wise into
/// `ν_i ∈ [max(λ_{i+1}, μ_i), min(λ_i, μ_{i-1})]` (with `μ_0 = +∞`), so a
/// kernel entry is a product of independent one-dimensional sums.
pub fn nu_ranges(lam: &Signature, mu: &Signature) -> Option<Vec<(u32, u32)>> {
    let lp = lam.parts();
    let mp = mu.parts();
    debug_assert_eq!(lp.len(), mp.len() + 1);
    let n = mp.len();
    let mut ranges = Vec::with_capacity(n);
    for i in 0..n {
        let lo = lp[i + 1].max(mp[i]);
        let hi = if i == 0 { lp[i] } else { lp[i].min(mp[i - 1]) };
        if lo > hi {
            return None;
        }
        ranges.push((lo, hi));
    }
    Some(ranges)
}
