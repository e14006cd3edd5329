//! Exact integer arithmetic primitives shared by the counting and
//! character-sum code: factorization, Möbius, Kronecker symbols and
//! integer square roots. Everything here is pure and allocation-light;
//! all inputs in this crate are small enough that trial division wins.

use serde::{Deserialize, Serialize};

/// Prime factorization of a positive integer, primes strictly increasing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Factorization {
    pub value: u64,
    pub factors: Vec<(u64, u32)>,
}

impl Factorization {
    /// Factor `n ≥ 1` by trial division (2, 3, then 6k±1).
    pub fn of(n: u64) -> Factorization {
        assert!(n >= 1, "factorization needs a positive integer");
        let mut m = n;
        let mut factors = Vec::new();
        for p in [2u64, 3] {
            if m % p == 0 {
                let mut e = 0;
                while m % p == 0 {
                    m /= p;
                    e += 1;
                }
                factors.push((p, e));
            }
        }
        let mut p = 5u64;
        while p.saturating_mul(p) <= m {
            for q in [p, p + 2] {
                if m % q == 0 {
                    let mut e = 0;
                    while m % q == 0 {
                        m /= q;
                        e += 1;
                    }
                    factors.push((q, e));
                }
            }
            p += 6;
        }
        if m > 1 {
            factors.push((m, 1));
        }
        Factorization { value: n, factors }
    }

    /// p-adic valuation of the factored value.
    pub fn valuation(&self, p: u64) -> u32 {
        self.factors
            .iter()
            .find(|(q, _)| *q == p)
            .map(|(_, e)| *e)
            .unwrap_or(0)
    }

    pub fn is_squarefree(&self) -> bool {
        self.factors.iter().all(|(_, e)| *e == 1)
    }

    /// All divisors, ascending.
    pub fn divisors(&self) -> Vec<u64> {
        let mut divs = vec![1u64];
        for &(p, e) in &self.factors {
            let prev = divs.clone();
            let mut pe = 1u64;
            for _ in 0..e {
                pe *= p;
                divs.extend(prev.iter().map(|d| d * pe));
            }
        }
        divs.sort_unstable();
        divs
    }

    /// Radical (product of distinct primes).
    pub fn radical(&self) -> u64 {
        self.factors.iter().map(|(p, _)| p).product()
    }
}

/// Möbius function.
pub fn mobius(n: u64) -> i64 {
    let f = Factorization::of(n);
    if !f.is_squarefree() {
        0
    } else if f.factors.len() % 2 == 0 {
        1
    } else {
        -1
    }
}

/// Euler totient.
pub fn euler_phi(n: u64) -> u64 {
    let f = Factorization::of(n);
    let mut out = n;
    for (p, _) in f.factors {
        out = out / p * (p - 1);
    }
    out
}

/// Floor of the square root, exact integer bisection-free Newton iteration.
pub fn isqrt_u128(n: u128) -> u128 {
    if n < 2 {
        return n;
    }
    let mut x = 1u128 << ((128 - n.leading_zeros()).div_ceil(2));
    loop {
        let y = (x + n / x) / 2;
        if y >= x {
            break;
        }
        x = y;
    }
    x
}

pub fn isqrt(n: u64) -> u64 {
    isqrt_u128(n as u128) as u64
}

/// Largest t ≥ 0 with t^k ≤ bound (k ≥ 1), exact.
pub fn ifloor_root(bound: u128, k: u32) -> u128 {
    if k == 1 {
        return bound;
    }
    if bound == 0 {
        return 0;
    }
    let mut t = (bound as f64).powf(1.0 / k as f64) as u128 + 2;
    while checked_pow(t, k).map_or(true, |v| v > bound) {
        t -= 1;
    }
    t
}

pub fn checked_pow(base: u128, exp: u32) -> Option<u128> {
    let mut acc: u128 = 1;
    for _ in 0..exp {
        acc = acc.checked_mul(base)?;
    }
    Some(acc)
}

pub fn is_perfect_square(n: u64) -> bool {
    let r = isqrt(n);
    r * r == n
}

/// True iff v = −m² for some integer m ≥ 1. Bit-exact.
pub fn is_minus_square(v: i64) -> bool {
    assert!(v != 0);
    v < 0 && is_perfect_square(v.unsigned_abs())
}

/// Smallest integer whose square is a multiple of n.
pub fn sqrt_plus(n: u64) -> u64 {
    let f = Factorization::of(n);
    f.factors
        .iter()
        .map(|&(p, e)| p.pow(e.div_ceil(2)))
        .product()
}

pub fn gcd_u64(a: u64, b: u64) -> u64 {
    num_integer::gcd(a, b)
}

pub fn gcd_i64(a: i64, b: i64) -> u64 {
    num_integer::gcd(a.unsigned_abs(), b.unsigned_abs())
}

/// Nonzero integer ≡ 0 or 1 (mod 4), the index of a quadratic character.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Discriminant(i64);

impl Discriminant {
    pub fn new(d: i64) -> Option<Discriminant> {
        if d != 0 && (d.rem_euclid(4) == 0 || d.rem_euclid(4) == 1) {
            Some(Discriminant(d))
        } else {
            None
        }
    }

    pub fn value(self) -> i64 {
        self.0
    }

    /// χ_D(n) as a Kronecker symbol.
    pub fn chi(self, n: i64) -> i64 {
        kronecker(self.0, n)
    }
}

/// For odd d ≥ 1, the unique discriminant with |d*| = d.
pub fn odd_star(d: i64) -> i64 {
    debug_assert!(d % 2 != 0 && d > 0);
    if d % 4 == 1 {
        d
    } else {
        -d
    }
}

/// Kronecker symbol (a/n), defined for all integers, completely
/// multiplicative in n.
pub fn kronecker(a: i64, n: i64) -> i64 {
    if n == 0 {
        return if a == 1 || a == -1 { 1 } else { 0 };
    }
    let mut a = a;
    let mut n = n;
    let mut sign = 1i64;
    if n < 0 {
        n = -n;
        if a < 0 {
            sign = -sign;
        }
    }
    // factor out 2s from n; (a/2) = 0, ±1 by a mod 8
    let mut n2 = 0u32;
    while n % 2 == 0 {
        n /= 2;
        n2 += 1;
    }
    if n2 > 0 {
        if a % 2 == 0 {
            return 0;
        }
        let a8 = a.rem_euclid(8);
        let k2 = if a8 == 1 || a8 == 7 { 1 } else { -1 };
        if n2 % 2 == 1 {
            sign *= k2;
        }
    }
    // now n odd positive: Jacobi symbol with reciprocity
    a = a.rem_euclid(n);
    while a != 0 {
        while a % 2 == 0 {
            a /= 2;
            let n8 = n.rem_euclid(8);
            if n8 == 3 || n8 == 5 {
                sign = -sign;
            }
        }
        std::mem::swap(&mut a, &mut n);
        if a.rem_euclid(4) == 3 && n.rem_euclid(4) == 3 {
            sign = -sign;
        }
        a = a.rem_euclid(n);
    }
    if n == 1 {
        sign
    } else {
        0
    }
}

/// Divisors d | n with lo ≤ d ≤ hi, ascending.
pub fn divisors_in_range(n: u64, lo: u64, hi: u64) -> Vec<u64> {
    assert!(n >= 1 && lo >= 1 && lo <= hi);
    let mut out: Vec<u64> = Factorization::of(n)
        .divisors()
        .into_iter()
        .filter(|&d| d >= lo && d <= hi)
        .collect();
    out.sort_unstable();
    out
}

/// Smallest-prime-factor sieve for fast repeated factorization below a bound.
pub struct SpfSieve {
    spf: Vec<u32>,
}

impl SpfSieve {
    pub fn new(limit: usize) -> SpfSieve {
        let mut spf = vec![0u32; limit + 1];
        for i in 2..=limit {
            if spf[i] == 0 {
                let mut j = i;
                while j <= limit {
                    if spf[j] == 0 {
                        spf[j] = i as u32;
                    }
                    j += i;
                }
            }
        }
        SpfSieve { spf }
    }

    pub fn limit(&self) -> usize {
        self.spf.len() - 1
    }

    pub fn factorize(&self, n: u64) -> Vec<(u64, u32)> {
        debug_assert!((n as usize) < self.spf.len());
        let mut m = n as usize;
        let mut out = Vec::new();
        while m > 1 {
            let p = self.spf[m] as usize;
            let mut e = 0;
            while m % p == 0 {
                m /= p;
                e += 1;
            }
            out.push((p as u64, e));
        }
        out
    }

    /// Divisors of n within [lo, hi], unsorted.
    pub fn divisors_in_range(&self, n: u64, lo: u64, hi: u64) -> Vec<u64> {
        let factors = self.factorize(n);
        let mut divs = vec![1u64];
        for (p, e) in factors {
            let prev_len = divs.len();
            let mut pe = 1u64;
            for _ in 0..e {
                pe *= p;
                for i in 0..prev_len {
                    let d = divs[i] * pe;
                    if d <= hi {
                        divs.push(d);
                    }
                }
            }
        }
        divs.retain(|&d| d >= lo && d <= hi);
        divs
    }
}

/// Primes up to limit, by sieve of Eratosthenes.
pub fn primes_up_to(limit: u64) -> Vec<u64> {
    let limit = limit as usize;
    let mut is_prime = vec![true; limit + 1];
    let mut out = Vec::new();
    for i in 2..=limit {
        if is_prime[i] {
            out.push(i as u64);
            let mut j = i * i;
            while j <= limit {
                is_prime[j] = false;
                j += i;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mobius_small() {
        assert_eq!(mobius(1), 1);
        assert_eq!(mobius(4), 0);
        assert_eq!(mobius(6), 1);
        assert_eq!(mobius(30), -1);
    }

    #[test]
    fn mobius_sum_identity() {
        // Σ_{d|n} μ(d) = [n = 1]
        for n in 1..=10_000u64 {
            let s: i64 = Factorization::of(n)
                .divisors()
                .into_iter()
                .map(mobius)
                .sum();
            assert_eq!(s, i64::from(n == 1), "n={n}");
        }
    }

    #[test]
    fn sqrt_plus_matches_scan() {
        assert_eq!(sqrt_plus(1), 1);
        assert_eq!(sqrt_plus(4), 2);
        assert_eq!(sqrt_plus(12), 6);
        for n in 1..=10_000u64 {
            let fast = sqrt_plus(n);
            assert_eq!((fast * fast) % n, 0, "n={n}");
            // no smaller m works
            let slow = (1..=n).find(|m| (m * m) % n == 0).unwrap();
            assert_eq!(fast, slow, "n={n}");
        }
    }

    #[test]
    fn kronecker_examples() {
        for n in -20..=20i64 {
            if n != 0 {
                assert_eq!(kronecker(1, n), 1);
            }
        }
        assert_eq!(kronecker(-4, 3), -1);
        // 2 is a non-residue mod 5: squares mod 5 are {0,1,4}
        assert_eq!(kronecker(5, 2), -1);
    }

    #[test]
    fn kronecker_multiplicative_and_periodic() {
        for d in -200..=200i64 {
            if let Some(disc) = Discriminant::new(d) {
                for m in -20..=20i64 {
                    for n in -20..=20i64 {
                        assert_eq!(
                            disc.chi(m * n),
                            disc.chi(m) * disc.chi(n),
                            "D={d} m={m} n={n}"
                        );
                    }
                }
                let period = d.unsigned_abs() as i64;
                for n in -200..=200i64 {
                    assert_eq!(disc.chi(n), disc.chi(n + period), "D={d} n={n}");
                }
            }
        }
    }

    #[test]
    fn minus_square() {
        assert!(is_minus_square(-4));
        assert!(!is_minus_square(4));
        // isqrt(12) = 3, 3*3 != 12
        assert!(!is_minus_square(-12));
        assert!(is_minus_square(-1));
    }

    #[test]
    fn divisor_ranges() {
        assert_eq!(divisors_in_range(12, 1, 12), vec![1, 2, 3, 4, 6, 12]);
        assert_eq!(divisors_in_range(1, 1, 1), vec![1]);
        assert_eq!(divisors_in_range(12, 5, 11), vec![6]);
    }

    #[test]
    fn spf_sieve_matches_trial_division() {
        let sieve = SpfSieve::new(5000);
        for n in 2..=5000u64 {
            assert_eq!(sieve.factorize(n), Factorization::of(n).factors);
        }
        let mut d = sieve.divisors_in_range(360, 4, 90);
        d.sort_unstable();
        assert_eq!(d, divisors_in_range(360, 4, 90));
    }

    #[test]
    fn isqrt_exact() {
        for n in 0..100_000u64 {
            let r = isqrt(n);
            assert!(r * r <= n && (r + 1) * (r + 1) > n);
        }
        assert_eq!(ifloor_root(1_000_000, 3), 100);
        assert_eq!(ifloor_root(999_999, 3), 99);
    }
}
