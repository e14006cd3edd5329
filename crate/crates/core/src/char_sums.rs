//! Complete exponential sums over residues: the two quadratic families S
//! and T with their closed diagonal forms, Kloosterman sums and the dyadic
//! Gauss sum. Brute evaluation is definitional (double loop over residues,
//! Kahan-compensated complex accumulation); closed forms are exact integer
//! arithmetic. Equality of the two is what the verification grids test.

use crate::arith::{self, Discriminant, Factorization};
use serde::{Deserialize, Serialize};

pub const BRUTE_MODULUS_LIMIT: u64 = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Complex {
    pub re: f64,
    pub im: f64,
}

impl Complex {
    pub const ZERO: Complex = Complex { re: 0.0, im: 0.0 };
    pub const ONE: Complex = Complex { re: 1.0, im: 0.0 };

    pub fn norm(self) -> f64 {
        self.re.hypot(self.im)
    }

    /// Integer value if within tolerance 1e-6, as promised for the
    /// zero-frequency sums.
    pub fn as_integer(self) -> Option<i64> {
        let r = self.re.round();
        if (self.re - r).abs() < 1e-6 && self.im.abs() < 1e-6 {
            Some(r as i64)
        } else {
            None
        }
    }
}

/// e(t) = exp(2πit).
fn e(t: f64) -> Complex {
    let (s, c) = (2.0 * std::f64::consts::PI * t).sin_cos();
    Complex { re: c, im: s }
}

/// Kahan-compensated complex accumulator.
#[derive(Default)]
struct KahanSum {
    re: f64,
    im: f64,
    cre: f64,
    cim: f64,
}

impl KahanSum {
    fn add(&mut self, v: Complex) {
        let yr = v.re - self.cre;
        let tr = self.re + yr;
        self.cre = (tr - self.re) - yr;
        self.re = tr;
        let yi = v.im - self.cim;
        let ti = self.im + yi;
        self.cim = (ti - self.im) - yi;
        self.im = ti;
    }
    fn value(&self) -> Complex {
        Complex {
            re: self.re,
            im: self.im,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "family")]
pub enum CharSumQuery {
    S {
        h1: i64,
        h2: i64,
        a: u64,
        c: u64,
        z: u64,
        xi: u64,
    },
    T {
        k1: i64,
        k2: i64,
        x: i64,
        a: u64,
    },
}

impl CharSumQuery {
    pub fn evaluate(&self) -> Complex {
        match *self {
            CharSumQuery::S { h1, h2, a, c, z, xi } => s_brute(h1, h2, a, c, z, xi),
            CharSumQuery::T { k1, k2, x, a } => t_brute(k1, k2, x, a),
        }
    }
}

/// Residue pairs (y, w) mod a with a | c² + ξ² y w z².
pub fn s_solutions(a: u64, c: u64, z: u64, xi: u64) -> Vec<(u64, u64)> {
    assert!(a >= 1 && a <= BRUTE_MODULUS_LIMIT, "modulus too large");
    let c2 = ((c % a) as u128 * (c % a) as u128 % a as u128) as u64;
    let m = ((xi % a) as u128 * (xi % a) as u128 % a as u128) as u64;
    let z2 = ((z % a) as u128 * (z % a) as u128 % a as u128) as u64;
    let coef = (m as u128 * z2 as u128 % a as u128) as u64;
    let mut out = Vec::new();
    for y in 0..a {
        let cy = (coef as u128 * y as u128 % a as u128) as u64;
        for w in 0..a {
            if (c2 as u128 + cy as u128 * w as u128) % a as u128 == 0 {
                out.push((y, w));
            }
        }
    }
    out
}

/// S_ξ(h1, h2, a, c, z) = Σ_{y,w mod a, a | c²+ξ²ywz²} e((h1 y + h2 w)/a).
pub fn s_brute(h1: i64, h2: i64, a: u64, c: u64, z: u64, xi: u64) -> Complex {
    let mut acc = KahanSum::default();
    for (y, w) in s_solutions(a, c, z, xi) {
        let t = (h1 as f64 * y as f64 + h2 as f64 * w as f64) / a as f64;
        acc.add(e(t));
    }
    acc.value()
}

/// Diagonal closed form: Σ_{a1 a2 a3 = a, a3 | c²} a1 (ξ²z², a2 a3) a3 μ(a2).
pub fn s_closed_diag(a: u64, c: u64, z: u64, xi: u64) -> i64 {
    let c2 = c as u128 * c as u128;
    let zz = xi * xi * z * z;
    let mut total = 0i64;
    for a3 in Factorization::of(a).divisors() {
        if c2 % a3 as u128 != 0 {
            continue;
        }
        let rest = a / a3;
        for a2 in Factorization::of(rest).divisors() {
            let mu = arith::mobius(a2);
            if mu == 0 {
                continue;
            }
            let a1 = rest / a2;
            total += (a1 * arith::gcd_u64(zz, a2 * a3) * a3) as i64 * mu;
        }
    }
    total
}

/// Weil-type majorant for |S|: τ(a) (a, h1, h2) √a (a, c²)^{1/2}.
pub fn s_weil_bound(h1: i64, h2: i64, a: u64, c: u64) -> f64 {
    let tau = Factorization::of(a).divisors().len() as f64;
    let gh = arith::gcd_u64(a, arith::gcd_i64(h1, h2));
    let gc = arith::gcd_u64(a, ((c as u128 * c as u128) % a as u128) as u64);
    tau * gh as f64 * (a as f64).sqrt() * (gc as f64).sqrt()
}

/// Residue pairs (γ, δ) mod a with a | γ² + x δ².
pub fn t_solutions(x: i64, a: u64) -> Vec<(u64, u64)> {
    assert!(a >= 1 && a <= BRUTE_MODULUS_LIMIT, "modulus too large");
    let xm = x.rem_euclid(a as i64) as u64;
    let mut out = Vec::new();
    for g in 0..a {
        let g2 = (g as u128 * g as u128 % a as u128) as u64;
        for d in 0..a {
            let d2 = d as u128 * d as u128 % a as u128;
            if (g2 as u128 + xm as u128 * d2) % a as u128 == 0 {
                out.push((g, d));
            }
        }
    }
    out
}

/// T(k1, k2, x, a) = Σ_{γ²+xδ² ≡ 0 mod a} e((k1 γ + k2 δ)/a).
pub fn t_brute(k1: i64, k2: i64, x: i64, a: u64) -> Complex {
    let mut acc = KahanSum::default();
    for (g, d) in t_solutions(x, a) {
        let t = (k1 as f64 * g as f64 + k2 as f64 * d as f64) / a as f64;
        acc.add(e(t));
    }
    acc.value()
}

/// Diagonal closed form of T: sum over discriminant divisors d2 of ±a with
/// (x, d2) a perfect square, of (a/|d2|) φ(|d2|) χ_{d2/(x,d2)}(−x/(x,d2)) (x,d2)^{1/2}.
/// Both signs of each divisor are filtered through the discriminant test
/// on d2/(x, d2).
pub fn t_closed_diag(x: i64, a: u64) -> i64 {
    assert!(x != 0);
    let mut total = 0i64;
    for dpos in Factorization::of(a).divisors() {
        let g = arith::gcd_u64(x.unsigned_abs(), dpos);
        if !arith::is_perfect_square(g) {
            continue;
        }
        let d1 = (a / dpos) as i64;
        let phi = arith::euler_phi(dpos) as i64;
        let sqrt_g = arith::isqrt(g) as i64;
        let arg = -x / g as i64;
        for s in [1i64, -1] {
            let quot = s * (dpos / g) as i64;
            if let Some(disc) = Discriminant::new(quot) {
                total += d1 * phi * sqrt_g * disc.chi(arg);
            }
        }
    }
    total
}

/// Bound for |T| at odd modulus: τ(a) (a, k1²x + k2²) (a, x)^{1/2}.
pub fn t_weil_bound(k1: i64, k2: i64, x: i64, a: u64) -> f64 {
    let tau = Factorization::of(a).divisors().len() as f64;
    let mix = k1 as i128 * k1 as i128 * x as i128 + k2 as i128 * k2 as i128;
    let gm = if mix == 0 {
        a
    } else {
        num_integer::gcd(a as u128, mix.unsigned_abs()) as u64
    };
    let gx = arith::gcd_u64(a, x.unsigned_abs());
    tau * gm as f64 * (gx as f64).sqrt()
}

fn mod_inverse(x: u64, m: u64) -> Option<u64> {
    let (mut a, mut b) = (x as i128, m as i128);
    let (mut u, mut v) = (1i128, 0i128);
    while b != 0 {
        let q = a / b;
        (a, b) = (b, a - q * b);
        (u, v) = (v, u - q * v);
    }
    if a != 1 {
        return None;
    }
    Some(u.rem_euclid(m as i128) as u64)
}

/// Kloosterman sum Σ*_{x mod c} e((m x + n x̄)/c).
pub fn kloosterman(m: i64, n: i64, c: u64) -> Complex {
    assert!(c >= 1 && c <= 100_000, "modulus too large");
    if c == 1 {
        return Complex::ONE;
    }
    let mut acc = KahanSum::default();
    for x in 1..c {
        let Some(xbar) = mod_inverse(x, c) else {
            continue;
        };
        let t = (m as f64 * x as f64 + n as f64 * xbar as f64) / c as f64;
        acc.add(e(t));
    }
    acc.value()
}

/// Quadratic Gauss sum modulo 2^ρ at odd α: Σ_{d mod 2^ρ} e(α d²/2^ρ).
/// Closed form by case split on ρ.
pub fn gauss_pow2(alpha: i64, rho: u32) -> Complex {
    assert!(alpha % 2 != 0, "alpha must be odd");
    match rho {
        0 => Complex::ONE,
        1 => Complex::ZERO,
        _ => {
            let q = 1i64 << rho;
            let plus = Discriminant::new(q).unwrap().chi(alpha) as f64;
            let minus = Discriminant::new(-q).unwrap().chi(alpha) as f64;
            let scale = (q as f64).sqrt();
            Complex {
                re: scale * plus,
                im: scale * minus,
            }
        }
    }
}

/// Definitional evaluation of the dyadic Gauss sum, for cross-checking.
pub fn gauss_pow2_brute(alpha: i64, rho: u32) -> Complex {
    let q = 1u64 << rho;
    let mut acc = KahanSum::default();
    for d in 0..q {
        let sq = (d as u128 * d as u128 % q as u128) as u64;
        let t = (alpha.rem_euclid(q as i64) as f64 * sq as f64) / q as f64;
        acc.add(e(t));
    }
    acc.value()
}
