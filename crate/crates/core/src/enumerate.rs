//! Point counting on the torsor.
//!
//! `count_brute` walks every candidate tuple and is the reference oracle.
//! `count_exact` solves the equation for the bilinear block: it enumerates
//! the square-block and product-block variables with positive values, reads
//! off the bilinear pair from a divisor window, counts the remaining free
//! pair by a coprime hyperbola count, and restores signs by an exact
//! multiplicity. `count_dyadic_box` counts solutions with every coordinate
//! in a dyadic shell, matching the delta-method setup.

use crate::arith::{self, SpfSieve};
use crate::variety::{ThinPredicate, VarietySpec};
use num_integer::Integer;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CountOptions {
    /// Apply the thin-set exclusion (where the spec declares one).
    pub apply_thin: bool,
}

impl Default for CountOptions {
    fn default() -> Self {
        CountOptions { apply_thin: true }
    }
}

#[derive(Debug, Error)]
pub enum EnumerateError {
    #[error("unsupported spec structure: {0}")]
    Unsupported(String),
    #[error("brute-force range for {var} is {cap}, refusing anything above {max}")]
    RangeTooLarge { var: String, cap: u64, max: u64 },
    #[error("checkpoint mismatch: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Largest t ≥ 0 such that the height monomial stays ≤ bound when `var`
/// takes value t, other variables take their entries in `values`
/// (0 meaning unassigned, treated as 1). Exact in integers.
fn mono_cap(mono: &[(usize, crate::variety::Exponent)], var: usize, values: &[u64], bound: u64) -> u64 {
    let dd: i64 = mono.iter().fold(1, |acc, (_, e)| acc.lcm(e.denom()));
    let bpow = match arith::checked_pow(bound as u128, dd as u32) {
        Some(v) => v,
        None => return u64::MAX,
    };
    let mut k: u128 = 1;
    let mut a_exp: u32 = 0;
    for &(vi, e) in mono {
        let ex = (e * num_rational::Ratio::from_integer(dd)).to_integer() as u32;
        if vi == var {
            a_exp = ex;
            continue;
        }
        let val = values[vi].max(1) as u128;
        match arith::checked_pow(val, ex).and_then(|p| k.checked_mul(p)) {
            Some(next) if next <= bpow => k = next,
            _ => return 0,
        }
    }
    debug_assert!(a_exp > 0);
    let cap = arith::ifloor_root(bpow / k, a_exp);
    cap.min(u64::MAX as u128) as u64
}

/// Exact partial height check: monomial with unassigned variables at 1.
fn mono_partial_ok(mono: &[(usize, crate::variety::Exponent)], values: &[i64], bound: u64) -> bool {
    let dd: i64 = mono.iter().fold(1, |acc, (_, e)| acc.lcm(e.denom()));
    let bpow = match arith::checked_pow(bound as u128, dd as u32) {
        Some(v) => v,
        None => return true,
    };
    let mut k: u128 = 1;
    for &(vi, e) in mono {
        let ex = (e * num_rational::Ratio::from_integer(dd)).to_integer() as u32;
        let val = values[vi].unsigned_abs().max(1) as u128;
        match arith::checked_pow(val, ex).and_then(|p| k.checked_mul(p)) {
            Some(next) if next <= bpow => k = next,
            _ => return false,
        }
    }
    true
}

const BRUTE_RANGE_LIMIT: u64 = 1_000;

/// Reference counter: recursive scan over all sign-value combinations with
/// exact height pruning at every level. Raw count, no symmetry division.
pub fn count_brute(spec: &VarietySpec, bound: u64, opts: CountOptions) -> Result<u64, EnumerateError> {
    let n = spec.num_vars();
    // equation variables first so the equation prunes early
    let mut order: Vec<usize> = (0..n).filter(|&i| spec.variables[i].block >= 1).collect();
    order.extend((0..n).filter(|&i| spec.variables[i].block == 0));

    let zero_vals = vec![0u64; n];
    let mut caps = vec![0u64; n];
    for v in 0..n {
        let cap = spec
            .height
            .iter()
            .filter(|m| m.iter().any(|&(vi, _)| vi == v))
            .map(|m| mono_cap(m, v, &zero_vals, bound))
            .min()
            .unwrap_or(0);
        if cap > BRUTE_RANGE_LIMIT {
            return Err(EnumerateError::RangeTooLarge {
                var: spec.variables[v].id.clone(),
                cap,
                max: BRUTE_RANGE_LIMIT,
            });
        }
        caps[v] = cap;
    }
    if caps.iter().any(|&c| c == 0) {
        return Ok(0);
    }

    // per recursion level: which monomials / gcd sets / thin predicates
    // become fully checkable, and whether the equation does
    let pos_of: Vec<usize> = {
        let mut p = vec![0; n];
        for (idx, &v) in order.iter().enumerate() {
            p[v] = idx;
        }
        p
    };
    let level_of = |vars: &[usize]| vars.iter().map(|&v| pos_of[v]).max().unwrap();
    let monos_at: Vec<Vec<usize>> = (0..n)
        .map(|lvl| {
            (0..spec.height.len())
                .filter(|&m| {
                    let vars: Vec<usize> = spec.height[m].iter().map(|&(vi, _)| vi).collect();
                    spec.height[m].iter().any(|&(vi, _)| pos_of[vi] == lvl) || level_of(&vars) == lvl
                })
                .collect()
        })
        .collect();
    let gcd_at: Vec<Vec<usize>> = (0..n)
        .map(|lvl| {
            (0..spec.gcd_sets.len())
                .filter(|&s| level_of(&spec.gcd_sets[s]) == lvl)
                .collect()
        })
        .collect();
    let eq_level = level_of(
        &(0..n)
            .filter(|&i| spec.variables[i].block >= 1)
            .collect::<Vec<_>>(),
    );
    let thin_at: Vec<Vec<usize>> = (0..n)
        .map(|lvl| {
            spec.thin
                .iter()
                .enumerate()
                .filter(|(_, t)| {
                    let ThinPredicate::MinusSquareProduct { vars } = t;
                    let idxs: Vec<usize> =
                        vars.iter().map(|id| spec.var_index(id).unwrap()).collect();
                    level_of(&idxs) == lvl
                })
                .map(|(i, _)| i)
                .collect()
        })
        .collect();

    struct Walk<'a> {
        spec: &'a VarietySpec,
        bound: u64,
        order: &'a [usize],
        caps: &'a [u64],
        monos_at: &'a [Vec<usize>],
        gcd_at: &'a [Vec<usize>],
        thin_at: &'a [Vec<usize>],
        eq_level: usize,
        apply_thin: bool,
        vals: Vec<i64>,
        total: u64,
    }
    impl Walk<'_> {
        fn go(&mut self, lvl: usize) {
            if lvl == self.order.len() {
                self.total += 1;
                return;
            }
            let v = self.order[lvl];
            for t in 1..=self.caps[v] {
                for sign in [1i64, -1] {
                    self.vals[v] = sign * t as i64;
                    if sign == 1
                        && !self.monos_at[lvl]
                            .iter()
                            .all(|&m| mono_partial_ok(&self.spec.height[m], &self.vals, self.bound))
                    {
                        // heights are sign-blind; skip both signs
                        break;
                    }
                    if !self.gcd_at[lvl].iter().all(|&s| {
                        self.spec.gcd_sets[s]
                            .iter()
                            .fold(0u64, |g, &vi| arith::gcd_u64(g, self.vals[vi].unsigned_abs()))
                            == 1
                    }) {
                        continue;
                    }
                    if lvl == self.eq_level && self.spec.equation_value(&self.vals_padded()) != 0 {
                        continue;
                    }
                    if self.apply_thin
                        && !self.thin_at[lvl].iter().all(|&ti| {
                            let ThinPredicate::MinusSquareProduct { vars } = &self.spec.thin[ti];
                            let p: i64 = vars
                                .iter()
                                .map(|id| self.vals[self.spec.var_index(id).unwrap()])
                                .product();
                            !arith::is_minus_square(p)
                        })
                    {
                        continue;
                    }
                    self.go(lvl + 1);
                }
            }
            self.vals[v] = 0;
        }
        // equation_value needs all equation vars set; unset entries are 0
        // but only block-0 vars can still be unset at eq_level
        fn vals_padded(&self) -> Vec<i64> {
            self.vals
                .iter()
                .map(|&x| if x == 0 { 1 } else { x })
                .collect()
        }
    }
    let mut walk = Walk {
        spec,
        bound,
        order: &order,
        caps: &caps,
        monos_at: &monos_at,
        gcd_at: &gcd_at,
        thin_at: &thin_at,
        eq_level,
        apply_thin: opts.apply_thin,
        vals: vec![0; n],
        total: 0,
    };
    walk.go(0);
    Ok(walk.total)
}

/// Structural analysis of a spec for the exact counter: one bilinear block
/// to solve for, one square block, one product block, 0 or 2 free variables.
struct Structure {
    b1: usize,
    b2: usize,
    sq: usize,
    prod: Vec<usize>,
    free: Vec<usize>,
    s_sq: i64,
    s_prod: i64,
    /// prefix enumeration order: square var, then product vars
    prefix: Vec<usize>,
    /// sign multiplicity per positive solution of the reduced problem
    mult: u64,
    /// thin exclusion applies and equals "product of odd-exponent product
    /// variables is minus a square"
    thin_active: bool,
    thin_vars: Vec<usize>,
    /// gcd sets entirely within the prefix
    gcd_prefix: Vec<Vec<usize>>,
    /// gcd sets touching the bilinear pair (no free vars)
    gcd_div: Vec<Vec<usize>>,
    /// known variables the first/second free variable must be coprime to
    coprime_a: Vec<usize>,
    coprime_b: Vec<usize>,
    pair_coprime: bool,
}

impl Structure {
    fn build(spec: &VarietySpec, opts: CountOptions) -> Result<Structure, EnumerateError> {
        let unsupported = |m: String| EnumerateError::Unsupported(m);
        let k = spec.block_count();
        if k != 3 {
            return Err(unsupported(format!("expected 3 equation blocks, found {k}")));
        }
        let members = |b: usize| -> Vec<usize> {
            (0..spec.num_vars())
                .filter(|&i| spec.variables[i].block == b)
                .collect()
        };
        let free = members(0);
        if !(free.is_empty() || free.len() == 2) {
            return Err(unsupported("need 0 or 2 free variables".into()));
        }
        let mut sq_block = None;
        for b in 1..=3 {
            let m = members(b);
            if m.len() == 1 && spec.variables[m[0]].h == 2 {
                sq_block = Some(b);
            }
        }
        let sq_block =
            sq_block.ok_or_else(|| unsupported("no square block (single variable, h = 2)".into()))?;
        let sq = members(sq_block)[0];
        // bilinear block: two h = 1 variables sharing a gcd set with sq
        let mut bil_block = None;
        for b in 1..=3 {
            if b == sq_block {
                continue;
            }
            let m = members(b);
            if m.len() == 2
                && m.iter().all(|&i| spec.variables[i].h == 1)
                && spec
                    .gcd_sets
                    .iter()
                    .any(|s| s.contains(&sq) && m.iter().all(|i| s.contains(i)))
            {
                if bil_block.is_some() {
                    return Err(unsupported("ambiguous bilinear block".into()));
                }
                bil_block = Some(b);
            }
        }
        let bil_block = bil_block.ok_or_else(|| {
            unsupported("no bilinear block tied to the square variable by a gcd set".into())
        })?;
        let bm = members(bil_block);
        let (b1, b2) = (bm[0], bm[1]);
        let prod_block = (1..=3).find(|&b| b != sq_block && b != bil_block).unwrap();
        let prod = members(prod_block);
        let odd: Vec<usize> = prod
            .iter()
            .copied()
            .filter(|&i| spec.variables[i].h % 2 == 1)
            .collect();
        if odd.is_empty() {
            return Err(unsupported("product block has no odd-exponent variable".into()));
        }
        for mono in &spec.height {
            let has = |v: usize| mono.iter().any(|&(vi, _)| vi == v);
            if has(b1) && has(b2) {
                return Err(unsupported("a height monomial couples the bilinear pair".into()));
            }
            let frees_in: Vec<&(usize, crate::variety::Exponent)> =
                mono.iter().filter(|(vi, _)| free.contains(vi)).collect();
            if frees_in.len() == 2 {
                if frees_in
                    .iter()
                    .any(|(_, e)| *e != num_rational::Ratio::from_integer(1))
                {
                    return Err(unsupported(
                        "two-free-variable monomial must be linear in each".into(),
                    ));
                }
            }
        }
        for f in &free {
            if !spec.height.iter().any(|m| {
                m.iter().any(|&(vi, _)| vi == *f)
                    && m.iter().filter(|(vi, _)| free.contains(vi)).count() == 1
            }) {
                return Err(unsupported(format!(
                    "free variable {} has no single-free height monomial",
                    spec.variables[*f].id
                )));
            }
        }

        let mut thin_active = false;
        let mut thin_vars = Vec::new();
        if opts.apply_thin {
            for t in &spec.thin {
                let ThinPredicate::MinusSquareProduct { vars } = t;
                let mut idxs: Vec<usize> =
                    vars.iter().map(|id| spec.var_index(id).unwrap()).collect();
                idxs.sort_unstable();
                let mut odd_sorted = odd.clone();
                odd_sorted.sort_unstable();
                if idxs != odd_sorted {
                    return Err(unsupported(
                        "thin predicate must cover exactly the odd-exponent product variables"
                            .into(),
                    ));
                }
                thin_active = true;
                thin_vars = idxs;
            }
        }

        let mut gcd_prefix = Vec::new();
        let mut gcd_div = Vec::new();
        let mut coprime_a = Vec::new();
        let mut coprime_b = Vec::new();
        let mut pair_coprime = false;
        for set in &spec.gcd_sets {
            if set.len() < 2 {
                return Err(unsupported("singleton gcd set".into()));
            }
            let frees_in: Vec<usize> = set.iter().copied().filter(|i| free.contains(i)).collect();
            match frees_in.len() {
                0 => {
                    if set.iter().any(|&i| i == b1 || i == b2) {
                        gcd_div.push(set.clone());
                    } else {
                        gcd_prefix.push(set.clone());
                    }
                }
                1 => {
                    let others: Vec<usize> =
                        set.iter().copied().filter(|i| !free.contains(i)).collect();
                    if frees_in[0] == free[0] {
                        coprime_a.extend(others);
                    } else {
                        coprime_b.extend(others);
                    }
                }
                _ => {
                    if set.len() != 2 {
                        return Err(unsupported(
                            "gcd set mixing both free variables with others".into(),
                        ));
                    }
                    pair_coprime = true;
                }
            }
        }

        let mut prefix = vec![sq];
        prefix.extend(prod.iter().copied());
        let mult = 2u64 * (1 << (prod.len() - 1)) * 2 * if free.is_empty() { 1 } else { 4 };
        Ok(Structure {
            b1,
            b2,
            sq,
            prod,
            free,
            s_sq: spec.signs[sq_block - 1],
            s_prod: spec.signs[prod_block - 1],
            prefix,
            mult,
            thin_active,
            thin_vars,
            gcd_prefix,
            gcd_div,
            coprime_a,
            coprime_b,
            pair_coprime,
        })
    }
}

/// Squarefree divisors of the product of `primes`, with Möbius signs.
fn squarefree_divisors(primes: &[u64]) -> Vec<(u64, i64)> {
    let mut out = vec![(1u64, 1i64)];
    for &p in primes {
        let len = out.len();
        for i in 0..len {
            let (d, mu) = out[i];
            out.push((d * p, -mu));
        }
    }
    out
}

/// #{1 ≤ a ≤ p, 1 ≤ b ≤ q, ab ≤ h} in O(√h).
fn hyperbola_count(p: u64, q: u64, h: u64) -> u64 {
    if p == 0 || q == 0 || h == 0 {
        return 0;
    }
    if (p as u128) * (q as u128) <= h as u128 {
        return p * q;
    }
    let amax = p.min(h);
    let t0 = amax.min(h / q);
    let mut total = t0 * q;
    let mut a = t0 + 1;
    while a <= amax {
        let val = h / a;
        let a2 = amax.min(h / val);
        total += val * (a2 - a + 1);
        a = a2 + 1;
    }
    total
}

/// Coprime hyperbola counter with a cached Möbius table.
struct PairCounter {
    mobius: Vec<i64>,
}

impl PairCounter {
    fn new(bound: u64) -> PairCounter {
        let lim = (arith::isqrt(bound) + 2) as usize;
        let mut mobius = vec![1i64; lim + 1];
        let mut is_comp = vec![false; lim + 1];
        let mut primes: Vec<usize> = Vec::new();
        if lim >= 1 {
            mobius[0] = 0;
        }
        for i in 2..=lim {
            if !is_comp[i] {
                primes.push(i);
                mobius[i] = -1;
            }
            for &p in &primes {
                let ip = i * p;
                if ip > lim {
                    break;
                }
                is_comp[ip] = true;
                if i % p == 0 {
                    mobius[ip] = 0;
                    break;
                }
                mobius[ip] = -mobius[i];
            }
        }
        PairCounter { mobius }
    }

    /// #{a ≤ p, b ≤ q, ab ≤ h, gcd(a,b) = 1 (if pair_coprime),
    ///   a coprime to every prime in u, b to every prime in v}.
    fn count(
        &self,
        p: u64,
        q: u64,
        h: u64,
        u_primes: &[u64],
        v_primes: &[u64],
        pair_coprime: bool,
    ) -> u64 {
        if p == 0 || q == 0 || h == 0 {
            return 0;
        }
        let h_eff = if (p as u128) * (q as u128) <= h as u128 {
            p.saturating_mul(q)
        } else {
            h
        };
        let u_divs = squarefree_divisors(u_primes);
        let v_divs = squarefree_divisors(v_primes);
        let f2 = |pp: u64, qq: u64, hh: u64| -> i64 {
            let mut acc = 0i64;
            for &(du, mu) in &u_divs {
                if du > pp {
                    continue;
                }
                for &(dv, mv) in &v_divs {
                    if dv > qq {
                        continue;
                    }
                    acc += mu * mv * hyperbola_count(pp / du, qq / dv, hh / (du * dv)) as i64;
                }
            }
            acc
        };
        if !pair_coprime {
            return f2(p, q, h_eff).max(0) as u64;
        }
        let gmax = p.min(q).min(arith::isqrt(h_eff));
        let mut total = 0i64;
        for g in 1..=gmax {
            let mu = self.mobius[g as usize];
            if mu == 0 {
                continue;
            }
            // a = g a', b = g b' forces g coprime to u and to v as well
            if u_primes.iter().chain(v_primes).any(|&pr| g % pr == 0) {
                continue;
            }
            total += mu * f2(p / g, q / g, h_eff / (g * g));
        }
        total.max(0) as u64
    }
}

/// Exact count restricted to square-variable residue class
/// `c ≡ residue + 1 (mod modulus)` (residue 0-based over positive c).
pub fn count_exact_slice(
    spec: &VarietySpec,
    bound: u64,
    opts: CountOptions,
    modulus: u64,
    residue: u64,
) -> Result<u64, EnumerateError> {
    assert!(modulus >= 1 && residue < modulus);
    let st = Structure::build(spec, opts)?;
    if bound == 0 {
        return Ok(0);
    }
    let n = spec.num_vars();
    let zero = vec![0u64; n];
    let cap_of = |v: usize, values: &[u64]| -> u64 {
        spec.height
            .iter()
            .filter(|m| m.iter().any(|&(vi, _)| vi == v))
            .map(|m| mono_cap(m, v, values, bound))
            .min()
            .unwrap_or(0)
    };
    let cmax = cap_of(st.sq, &zero);

    // sieve limit: cmax^2 + max product-block value, scanned exactly
    let pmax = {
        let mut vals = zero.clone();
        let mut best: u128 = 1;
        // enumerate all product vars but the last, take the last at cap
        fn scan(
            spec: &VarietySpec,
            st: &Structure,
            cap_of: &dyn Fn(usize, &[u64]) -> u64,
            vals: &mut Vec<u64>,
            idx: usize,
            best: &mut u128,
        ) {
            let v = st.prod[idx];
            let cap = cap_of(v, vals);
            if idx + 1 == st.prod.len() {
                let mut p: u128 = 1;
                for &u in &st.prod[..idx] {
                    p *= arith::checked_pow(vals[u] as u128, spec.variables[u].h).unwrap();
                }
                p *= arith::checked_pow(cap as u128, spec.variables[v].h).unwrap_or(0);
                *best = (*best).max(p);
                return;
            }
            for t in 1..=cap {
                vals[v] = t;
                scan(spec, st, cap_of, vals, idx + 1, best);
            }
            vals[v] = 0;
        }
        scan(spec, &st, &cap_of, &mut vals, 0, &mut best);
        best
    };
    let sieve_limit = ((cmax as u128 * cmax as u128 + pmax + 1).min(1 << 34)) as usize;
    let sieve = SpfSieve::new(sieve_limit);
    let pairs = PairCounter::new(bound);

    let mut vals = zero.clone();
    let mut total: u64 = 0;

    let mut c = residue + 1;
    while c <= cmax {
        vals[st.sq] = c;
        if cap_of(st.sq, &vals) >= c {
            enumerate_prod(
                spec, &st, bound, &cap_of, &sieve, &pairs, &mut vals, 0, &mut total,
            );
        }
        vals[st.sq] = 0;
        c += modulus;
    }
    Ok(total * st.mult)
}

#[allow(clippy::too_many_arguments)]
fn enumerate_prod(
    spec: &VarietySpec,
    st: &Structure,
    bound: u64,
    cap_of: &dyn Fn(usize, &[u64]) -> u64,
    sieve: &SpfSieve,
    pairs: &PairCounter,
    vals: &mut Vec<u64>,
    idx: usize,
    total: &mut u64,
) {
    if idx == st.prod.len() {
        prefix_leaf(spec, st, bound, cap_of, sieve, pairs, vals, total);
        return;
    }
    let v = st.prod[idx];
    let cap = cap_of(v, vals);
    for t in 1..=cap {
        vals[v] = t;
        enumerate_prod(spec, st, bound, cap_of, sieve, pairs, vals, idx + 1, total);
    }
    vals[v] = 0;
}

fn prime_list(sieve: &SpfSieve, n: u64) -> Vec<u64> {
    let fac = if (n as usize) < sieve.limit() {
        sieve.factorize(n)
    } else {
        arith::Factorization::of(n).factors
    };
    fac.into_iter().map(|(p, _)| p).collect()
}

#[allow(clippy::too_many_arguments)]
fn prefix_leaf(
    spec: &VarietySpec,
    st: &Structure,
    bound: u64,
    cap_of: &dyn Fn(usize, &[u64]) -> u64,
    sieve: &SpfSieve,
    pairs: &PairCounter,
    vals: &mut Vec<u64>,
    total: &mut u64,
) {
    // gcd sets fully inside the prefix
    for set in &st.gcd_prefix {
        if set.iter().fold(0u64, |g, &vi| arith::gcd_u64(g, vals[vi])) != 1 {
            return;
        }
    }
    let c = vals[st.sq] as u128;
    let mut p: u128 = 1;
    for &v in &st.prod {
        p *= arith::checked_pow(vals[v] as u128, spec.variables[v].h).unwrap();
    }
    let thin_sq = st.thin_active && {
        let prod: u64 = st.thin_vars.iter().map(|&v| vals[v]).product();
        arith::is_perfect_square(prod)
    };

    // coprimality prime sets for the free pair, from prefix variables
    let (ua, va): (Vec<u64>, Vec<u64>) = if st.free.is_empty() {
        (Vec::new(), Vec::new())
    } else {
        let collect = |list: &[usize]| -> Vec<u64> {
            let mut ps: Vec<u64> = list
                .iter()
                .filter(|v| st.prefix.contains(v))
                .flat_map(|&v| prime_list(sieve, vals[v]))
                .collect();
            ps.sort_unstable();
            ps.dedup();
            ps
        };
        (collect(&st.coprime_a), collect(&st.coprime_b))
    };

    for rel in [1i128, -1] {
        let t_signed = (c * c) as i128 + rel * p as i128;
        if t_signed == 0 {
            continue;
        }
        // sign of the product monomial forced by this branch
        let eps = rel as i64 * st.s_sq * st.s_prod;
        if st.thin_active && eps < 0 && thin_sq {
            continue;
        }
        let t_abs = t_signed.unsigned_abs();
        if t_abs > u64::MAX as u128 {
            continue;
        }
        let t_abs = t_abs as u64;
        let hi1 = cap_of(st.b1, vals);
        let hi2 = cap_of(st.b2, vals);
        if (hi1 as u128) * (hi2 as u128) < t_abs as u128 {
            continue;
        }
        let lo1 = t_abs.div_ceil(hi2);
        for d in sieve.divisors_in_range(t_abs, lo1, hi1) {
            let e = t_abs / d;
            vals[st.b1] = d;
            vals[st.b2] = e;
            let gcds_ok = st.gcd_div.iter().all(|set| {
                set.iter().fold(0u64, |g, &vi| arith::gcd_u64(g, vals[vi])) == 1
            });
            if gcds_ok {
                if st.free.is_empty() {
                    *total += 1;
                } else {
                    *total += free_pair_count(spec, st, bound, cap_of, sieve, pairs, vals, &ua, &va);
                }
            }
            vals[st.b1] = 0;
            vals[st.b2] = 0;
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn free_pair_count(
    spec: &VarietySpec,
    st: &Structure,
    bound: u64,
    cap_of: &dyn Fn(usize, &[u64]) -> u64,
    sieve: &SpfSieve,
    pairs: &PairCounter,
    vals: &[u64],
    ua: &[u64],
    va: &[u64],
) -> u64 {
    let (fa, fb) = (st.free[0], st.free[1]);
    let p_cap = cap_of(fa, vals);
    let q_cap = cap_of(fb, vals);
    if p_cap == 0 || q_cap == 0 {
        return 0;
    }
    // joint bound from two-free-variable monomials
    let mut h_cap = u64::MAX;
    for mono in &spec.height {
        let has_a = mono.iter().any(|&(vi, _)| vi == fa);
        let has_b = mono.iter().any(|&(vi, _)| vi == fb);
        if !(has_a && has_b) {
            continue;
        }
        let dd: i64 = mono.iter().fold(1, |acc, (_, e)| acc.lcm(e.denom()));
        let bpow = arith::checked_pow(bound as u128, dd as u32).unwrap();
        let mut k: u128 = 1;
        let mut overflow = false;
        for &(vi, e) in mono {
            if vi == fa || vi == fb {
                continue;
            }
            let ex = (e * num_rational::Ratio::from_integer(dd)).to_integer() as u32;
            match arith::checked_pow(vals[vi].max(1) as u128, ex).and_then(|x| k.checked_mul(x)) {
                Some(next) => k = next,
                None => {
                    overflow = true;
                    break;
                }
            }
        }
        if overflow || k > bpow {
            return 0;
        }
        let cap = arith::ifloor_root(bpow / k, dd as u32).min(u64::MAX as u128) as u64;
        h_cap = h_cap.min(cap);
    }
    // complete the coprimality prime sets with bilinear contributions
    let finish = |base: &[u64], list: &[usize]| -> Vec<u64> {
        let extra: Vec<u64> = list
            .iter()
            .filter(|v| !st.prefix.contains(v))
            .flat_map(|&v| prime_list(sieve, vals[v]))
            .collect();
        if extra.is_empty() {
            base.to_vec()
        } else {
            let mut ps = base.to_vec();
            ps.extend(extra);
            ps.sort_unstable();
            ps.dedup();
            ps
        }
    };
    let u_primes = finish(ua, &st.coprime_a);
    let v_primes = finish(va, &st.coprime_b);
    pairs.count(p_cap, q_cap, h_cap, &u_primes, &v_primes, st.pair_coprime)
}

/// Raw exact count (no symmetry division).
pub fn count_exact(spec: &VarietySpec, bound: u64, opts: CountOptions) -> Result<u64, EnumerateError> {
    count_exact_slice(spec, bound, opts, 1, 0)
}

/// One dyadic shell per coordinate: x lies in (top/2, top].
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DyadicBox {
    pub a: u64,
    pub b: u64,
    pub c: u64,
    pub y: u64,
    pub w: u64,
    pub z: u64,
}

fn shell(top: u64) -> std::ops::RangeInclusive<u64> {
    top / 2 + 1..=top
}

/// Solutions of a b + c² + ξ² y w z² = 0 with |each coordinate| in its
/// dyadic shell, optionally excluding y w = minus a square.
pub fn count_dyadic_box(bx: &DyadicBox, xi: u64, exclude_thin: bool) -> u64 {
    let xi2 = (xi * xi) as i128;
    let tmax = (bx.c as u128 * bx.c as u128
        + (xi * xi) as u128 * bx.y as u128 * bx.w as u128 * bx.z as u128 * bx.z as u128)
        as usize;
    let sieve = SpfSieve::new(tmax + 2);
    let mut total = 0u64;
    for c in shell(bx.c) {
        let c2 = (c as i128) * (c as i128);
        for y in shell(bx.y) {
            for w in shell(bx.w) {
                let thin_sq = arith::is_perfect_square(y * w);
                for z in shell(bx.z) {
                    let pz = xi2 * (y as i128) * (w as i128) * (z as i128) * (z as i128);
                    for eps in [1i128, -1] {
                        if exclude_thin && eps < 0 && thin_sq {
                            continue;
                        }
                        let m = c2 + eps * pz;
                        if m == 0 {
                            continue;
                        }
                        let t = m.unsigned_abs() as u64;
                        for d in sieve.divisors_in_range(t, *shell(bx.a).start(), bx.a) {
                            let e = t / d;
                            if shell(bx.b).contains(&e) {
                                total += 16;
                            }
                        }
                    }
                }
            }
        }
    }
    total
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct LadderRow {
    pub bound: u64,
    pub raw: u64,
    pub adjusted: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct LadderConfig {
    pub shards: usize,
    pub apply_thin: bool,
    pub checkpoint: Option<PathBuf>,
}

#[derive(Serialize, Deserialize, Default)]
struct Checkpoint {
    fingerprint: String,
    apply_thin: bool,
    rows: Vec<LadderRow>,
    partial: Option<PartialBound>,
}

#[derive(Serialize, Deserialize)]
struct PartialBound {
    bound: u64,
    slices: u64,
    done: BTreeMap<u64, u64>,
}

pub fn atomic_write(path: &Path, contents: &[u8]) -> std::io::Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, contents)?;
    std::fs::rename(&tmp, path)
}

fn save_checkpoint(path: &Path, ck: &Checkpoint) -> Result<(), EnumerateError> {
    atomic_write(path, serde_json::to_string_pretty(ck)?.as_bytes())?;
    Ok(())
}

/// Run the counting ladder over the given height bounds, sharded across
/// threads, resumable from a JSON checkpoint. Deterministic: the total is a
/// sum of per-residue-class slices, independent of scheduling.
pub fn run_ladder(
    spec: &VarietySpec,
    bounds: &[u64],
    cfg: &LadderConfig,
) -> Result<Vec<LadderRow>, EnumerateError> {
    let opts = CountOptions {
        apply_thin: cfg.apply_thin,
    };
    let fp = spec.fingerprint();
    let mut ck = Checkpoint {
        fingerprint: fp.clone(),
        apply_thin: cfg.apply_thin,
        ..Default::default()
    };
    if let Some(path) = &cfg.checkpoint {
        if path.exists() {
            let loaded: Checkpoint = serde_json::from_str(&std::fs::read_to_string(path)?)?;
            if loaded.fingerprint != fp {
                return Err(EnumerateError::Checkpoint(format!(
                    "checkpoint was written for spec {}, current spec is {}",
                    loaded.fingerprint, fp
                )));
            }
            if loaded.apply_thin != cfg.apply_thin {
                return Err(EnumerateError::Checkpoint(
                    "checkpoint thin-set setting differs".into(),
                ));
            }
            ck = loaded;
        }
    }
    let shards = cfg.shards.max(1);
    let mut out = Vec::new();
    for &b in bounds {
        if let Some(row) = ck.rows.iter().find(|r| r.bound == b) {
            out.push(row.clone());
            continue;
        }
        let nslices = (shards as u64) * 8;
        let mut done: BTreeMap<u64, u64> = match &ck.partial {
            Some(p) if p.bound == b && p.slices == nslices => p.done.clone(),
            _ => BTreeMap::new(),
        };
        let t0 = Instant::now();
        let pending: Vec<u64> = (0..nslices).filter(|s| !done.contains_key(s)).collect();
        for chunk in pending.chunks(shards.max(1)) {
            let results: Result<Vec<(u64, u64)>, EnumerateError> = chunk
                .par_iter()
                .map(|&s| count_exact_slice(spec, b, opts, nslices, s).map(|v| (s, v)))
                .collect();
            for (s, v) in results? {
                done.insert(s, v);
            }
            if let Some(path) = &cfg.checkpoint {
                ck.partial = Some(PartialBound {
                    bound: b,
                    slices: nslices,
                    done: done.clone(),
                });
                save_checkpoint(path, &ck)?;
            }
        }
        let raw: u64 = done.values().sum();
        let row = LadderRow {
            bound: b,
            raw,
            adjusted: raw as f64 / f64::powi(2.0, spec.symmetry_rank as i32),
            seconds: t0.elapsed().as_secs_f64(),
        };
        ck.rows.push(row.clone());
        ck.partial = None;
        if let Some(path) = &cfg.checkpoint {
            save_checkpoint(path, &ck)?;
        }
        out.push(row);
    }
    Ok(out)
}

/// CSV ledger: bound,raw,adjusted,seconds.
pub fn write_ladder_csv(path: &Path, rows: &[LadderRow]) -> std::io::Result<()> {
    let mut s = String::from("bound,raw,adjusted,seconds\n");
    for r in rows {
        s.push_str(&format!("{},{},{},{:.3}\n", r.bound, r.raw, r.adjusted, r.seconds));
    }
    atomic_write(path, s.as_bytes())
}
