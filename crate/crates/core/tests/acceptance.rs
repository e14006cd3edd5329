//! End-to-end acceptance checks. One test per criterion; each prints a
//! single pass line on success and asserts with detail on failure.
//!
//! The two long-horizon checks (empirical constant, thin-set growth) read
//! count ladders from `data/ladders/*.csv` at the workspace root (override
//! the location with TORSOR_DATA_DIR). Regenerate them with:
//!   torsor-count enumerate --variety x1 --bounds 1e4,3e4,1e5,3e5,1e6,2e6,5e6,1e7 --out data/ladders/x1.csv
//! and likewise for x2, x3, and x1 with --no-thin (x1_nothin.csv).

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive};
use std::path::PathBuf;

use torsor_count::char_sums;
use torsor_count::enumerate::{self, CountOptions, DyadicBox, LadderRow};
use torsor_count::peyre;
use torsor_count::report;
use torsor_count::singular;
use torsor_count::variety::VarietySpec;

fn rat(n: i64) -> BigRational {
    BigRational::from_integer(BigInt::from(n))
}

fn rmat(rows: &[&[i64]]) -> Vec<Vec<BigRational>> {
    rows.iter().map(|r| r.iter().map(|&v| rat(v)).collect()).collect()
}

fn data_dir() -> PathBuf {
    match std::env::var("TORSOR_DATA_DIR") {
        Ok(d) => PathBuf::from(d),
        Err(_) => PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data"),
    }
}

fn read_ladder(name: &str) -> Vec<LadderRow> {
    let path = data_dir().join("ladders").join(name);
    let text = std::fs::read_to_string(&path).unwrap_or_else(|e| {
        panic!(
            "cannot read ladder {} ({e}); regenerate with the enumerate command in this file's header",
            path.display()
        )
    });
    let mut rows = Vec::new();
    for line in text.lines().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let mut it = line.split(',');
        let bound: u64 = it.next().unwrap().trim().parse().expect("bad bound field");
        let raw: u64 = it.next().unwrap().trim().parse().expect("bad raw field");
        rows.push(LadderRow { bound, raw, adjusted: 0.0, seconds: 0.0 });
    }
    rows.sort_by_key(|r| r.bound);
    rows
}

/// Closed forms equal the brute sums at trivial twist, and the square-root
/// bounds dominate the twisted sums, over the full desk-scale grid.
#[test]
fn character_sum_identities() {
    let twists: [(i64, i64); 4] = [(0, 0), (1, 0), (1, 1), (-2, 3)];
    for a in 1..=200u64 {
        for c in 1..=8u64 {
            for z in 1..=8u64 {
                for xi in 1..=3u64 {
                    let closed = char_sums::s_closed_diag(a, c, z, xi) as f64;
                    let brute = char_sums::s_brute(0, 0, a, c, z, xi);
                    assert!(
                        brute.im.abs() < 1e-6 && (brute.re - closed).abs() < 1e-6,
                        "S closed form off at a={a} c={c} z={z} xi={xi}: {} vs {closed}",
                        brute.re
                    );
                    for (h1, h2) in twists {
                        let bound = char_sums::s_weil_bound(h1, h2, a, c);
                        let v = char_sums::s_brute(h1, h2, a, c, z, xi).norm();
                        assert!(
                            v <= bound + 1e-6,
                            "S bound fails at a={a} c={c} z={z} xi={xi} h=({h1},{h2}): {v} > {bound}"
                        );
                    }
                }
            }
        }
        for x in (-50..=50i64).filter(|&x| x != 0) {
            let closed = char_sums::t_closed_diag(x, a) as f64;
            let brute = char_sums::t_brute(0, 0, x, a);
            assert!(
                brute.im.abs() < 1e-6 && (brute.re - closed).abs() < 1e-6,
                "T closed form off at x={x} a={a}: {} vs {closed}",
                brute.re
            );
            if a % 2 == 1 {
                for (k1, k2) in twists {
                    let bound = char_sums::t_weil_bound(k1, k2, x, a);
                    let v = char_sums::t_brute(k1, k2, x, a).norm();
                    assert!(
                        v <= bound + 1e-6,
                        "T bound fails at x={x} a={a} k=({k1},{k2}): {v} > {bound}"
                    );
                }
            }
        }
    }
    println!("PASS character sum closed forms and square-root bounds (a<=200, c,z<=8, |x|<=50)");
}

/// The Euler factor closed form matches the definitional modulus-by-modulus
/// sums exactly, the auxiliary congruence count matches brute force, and the
/// partial products converge.
#[test]
fn singular_series_identities() {
    for p in [2u64, 3] {
        for xi in [1u64, 2, 6] {
            let r = torsor_count::arith::Factorization::of(xi).valuation(p);
            // brute partial sum over all prime powers q = p^k <= 81
            let mut brute = BigRational::from_integer(BigInt::from(1));
            let mut k = 1u32;
            while p.pow(k) <= 81 {
                brute += singular::q_term_brute(p.pow(k), xi);
                k += 1;
            }
            // closed partial sum over the surviving even powers
            let mut closed = BigRational::from_integer(BigInt::from(1));
            let mut n = 1u32;
            while p.pow(2 * n) <= 81 {
                closed += singular::series_term(p, r, n);
                n += 1;
            }
            assert_eq!(brute, closed, "partial sums differ at p={p} xi={xi}");
            // and the full factor is the limit
            let mut full = closed.clone();
            for m in n..24 {
                full += singular::series_term(p, r, m);
            }
            let f = singular::euler_factor(p, r);
            let f = BigRational::new(BigInt::from(*f.numer()), BigInt::from(*f.denom()));
            let gap = (f - full).abs().to_f64().unwrap();
            assert!(gap < 1e-12, "factor limit off at p={p} xi={xi}: {gap}");
        }
    }
    for p in [2u64, 3, 5, 7] {
        for n in 1..=2u32 {
            assert_eq!(
                singular::count_yz2(p, n),
                singular::count_yz2_brute(p, n),
                "congruence count off at p={p} n={n}"
            );
        }
    }
    let e100 = singular::singular_series(1, 100).value;
    let e1k = singular::singular_series(1, 1_000).value;
    let e10k = singular::singular_series(1, 10_000).value;
    assert!(e100 < e1k && e1k < e10k, "partial products must increase");
    let change = (e10k - e1k).abs();
    // Known red: the omitted factors are ~1 + 1/p^2, so this difference is
    // necessarily ~1.7e-4. Kept at the stated threshold instead of loosening.
    assert!(change < 1e-4, "product not settled: {change}");
    println!("PASS singular series identities and convergence (factor change {:.2e})", change);
}

/// The lifted enumerator agrees with direct iteration, and every raw count
/// carries the full sign-symmetry multiplicity.
#[test]
fn enumerator_matches_brute_force() {
    let opts = CountOptions::default();
    let x1 = VarietySpec::preset("x1").unwrap();
    for b in [4u64, 50, 200, 500] {
        let exact = enumerate::count_exact(&x1, b, opts).unwrap();
        let brute = enumerate::count_brute(&x1, b, opts).unwrap();
        assert_eq!(exact, brute, "x1 mismatch at B={b}");
        if b == 4 {
            assert_eq!(exact, 32, "x1 count at B=4");
        }
    }
    for name in ["x2", "x3"] {
        let spec = VarietySpec::preset(name).unwrap();
        for b in [10u64, 50, 200] {
            let exact = enumerate::count_exact(&spec, b, opts).unwrap();
            let brute = enumerate::count_brute(&spec, b, opts).unwrap();
            assert_eq!(exact, brute, "{name} mismatch at B={b}");
        }
    }
    for (name, m) in [("x1", 4u64), ("x2", 8), ("x3", 8)] {
        let spec = VarietySpec::preset(name).unwrap();
        for b in [10_000u64, 100_000, 1_000_000] {
            let raw = enumerate::count_exact(&spec, b, opts).unwrap();
            assert_eq!(raw % m, 0, "{name} raw count at B={b} not divisible by {m}");
        }
    }
    println!("PASS exact enumerator equals brute force; counts divisible by 4/8/8");
}

/// Dyadic-box counts approach the singular series times singular integral,
/// with the relative error nonincreasing as the box grows.
#[test]
fn dyadic_box_asymptotics() {
    let mut prev = f64::INFINITY;
    let mut errs = Vec::new();
    for k in [6u32, 8, 10] {
        let t = 1u64 << k;
        let s = 1u64 << (k / 2);
        let bx = DyadicBox { a: t, b: t, c: t, y: s, w: s, z: s };
        let rep = singular::asymp_compare(1, &bx, 4_000_000, 11, true);
        let stderr_rel = rep.integral.error / rep.integral.value;
        assert!(stderr_rel <= 0.02, "integral stderr too large at k={k}: {stderr_rel}");
        assert!(
            rep.relative_error <= prev + 1e-12,
            "relative error increased at k={k}: {} after {prev}",
            rep.relative_error
        );
        if k == 10 {
            assert!(
                rep.relative_error <= 0.25,
                "relative error at k=10 is {}",
                rep.relative_error
            );
        }
        prev = rep.relative_error;
        errs.push(format!("k={k}: {:.3}", rep.relative_error));
    }
    println!("PASS dyadic box counts track series*integral ({})", errs.join(", "));
}

/// The exponent matrices, rank condition, log exponent, exact polytope
/// volumes, and the local surjection identity all come out as fixed.
#[test]
fn leading_constant_machinery() {
    let sys1 = peyre::exponent_system(&VarietySpec::preset("x1").unwrap()).unwrap();
    assert_eq!(
        sys1.a1,
        rmat(&[
            &[2, 0, 0, 2, 0, 0, 0, 0],
            &[0, 2, 0, 0, 2, 0, 0, 0],
            &[0, 0, 2, 0, 0, 2, 0, 0],
            &[1, 1, 1, 0, 0, 0, 3, 0],
            &[0, 0, 0, 1, 1, 1, 0, 3],
            &[0, 0, 0, 0, 0, 0, 2, 2],
        ])
    );
    assert_eq!(
        sys1.a2,
        rmat(&[
            &[1, 0, -1],
            &[1, 0, -1],
            &[0, 2, -1],
            &[-1, -1, 0],
            &[-1, -1, 0],
            &[-2, -2, 1],
        ])
    );
    let sys2 = peyre::exponent_system(&VarietySpec::preset("x2").unwrap()).unwrap();
    let spec2 = VarietySpec::preset("x2").unwrap();
    let h = |n: i64, d: i64| BigRational::new(BigInt::from(n), BigInt::from(d));
    let (x31, x32, x01) = (
        spec2.var_index("x31").unwrap(),
        spec2.var_index("x32").unwrap(),
        spec2.var_index("x01").unwrap(),
    );
    assert_eq!(sys2.a1[x31][9], h(3, 2));
    assert_eq!(sys2.a1[x32][9], h(5, 2));
    assert_eq!(sys2.a1[x31][10], h(3, 2));
    assert_eq!(sys2.a1[x32][10], h(1, 2));
    assert_eq!(sys2.a1[x01][10], rat(2));
    assert_eq!(
        sys2.a2,
        rmat(&[
            &[0, 0, -1],
            &[0, 0, -1],
            &[1, 0, -1],
            &[1, 0, -1],
            &[-2, -2, 1],
            &[0, 1, -1],
            &[0, 1, -1],
        ])
    );
    let sys3 = peyre::exponent_system(&VarietySpec::preset("x3").unwrap()).unwrap();
    assert_eq!(
        sys3.a1,
        rmat(&[
            &[0, 0, 0, 0, 1, 1, 1, 2, 2, 2, 2],
            &[2, 2, 2, 2, 1, 1, 1, 0, 0, 0, 0],
            &[0, 0, 0, 2, 0, 0, 3, 0, 0, 0, 2],
            &[0, 0, 2, 0, 0, 3, 0, 0, 0, 2, 0],
            &[0, 2, 0, 0, 3, 0, 0, 0, 2, 0, 0],
            &[1, 0, 0, 0, 0, 0, 0, 2, 1, 1, 1],
            &[2, 1, 1, 1, 0, 0, 0, 1, 0, 0, 0],
        ])
    );
    // rank condition held (construction errors otherwise), log exponents
    assert_eq!((sys1.r, sys2.r, sys3.r), (5, 5, 5));
    assert_eq!((sys1.c2, sys2.c2, sys3.c2), (1, 2, 2));
    // exact polytope volumes, reproduced by Monte Carlo hit counting
    for (sys, n, d) in [(&sys1, 1i64, 6i64), (&sys2, 1, 15), (&sys3, 1, 12)] {
        let exact = peyre::c_star(sys).unwrap();
        assert_eq!(exact, BigRational::new(BigInt::from(n), BigInt::from(d)));
        let mc = peyre::c_star_mc(sys, 10_000_000, 5).unwrap();
        let rel = (mc.value - exact.to_f64().unwrap()).abs() / exact.to_f64().unwrap();
        assert!(rel < 0.01, "MC volume off by {rel} for {n}/{d}");
    }
    for (p, l) in [(2u64, 1u32), (2, 2), (3, 1), (3, 2)] {
        assert!(peyre::x2_surjection_check(p, l), "surjection identity fails at ({p},{l})");
    }
    println!("PASS exponent matrices, c2=(1,2,2), polytope volumes 1/6 1/15 1/12, surjection identity");
}

/// The normalized empirical series raw(B)/(B (log B)^c2) is flat over the
/// final decade and lands within 50% of the computed constant at B = 10^7.
#[test]
fn empirical_leading_constant() {
    let mut lines = Vec::new();
    for name in ["x1", "x2", "x3"] {
        let spec = VarietySpec::preset(name).unwrap();
        let rows = read_ladder(&format!("{name}.csv"));
        assert!(
            rows.last().map(|r| r.bound) == Some(10_000_000),
            "{name} ladder must reach B=1e7"
        );
        let sys = peyre::exponent_system(&spec).unwrap();
        let series: Vec<(u64, u64, f64)> = rows
            .iter()
            .map(|r| (r.bound, r.raw, report::c_emp(r.bound, r.raw, sys.c2)))
            .collect();
        let drift = report::last_decade_drift(&series);
        assert!(drift < 0.15, "{name} last-decade drift {drift}");
        let bd = peyre::peyre_constant(&spec, 2_000_000, 17, 2_000).unwrap();
        let c_top = series.last().unwrap().2;
        let rel = (c_top - bd.product).abs() / bd.product;
        assert!(
            rel <= 0.50,
            "{name}: C_emp(1e7)={c_top:.3} vs predicted {:.3} (rel {rel:.2}, mc+tail {:.3})",
            bd.product,
            bd.rel_error
        );
        lines.push(format!(
            "{name}: drift {drift:.3}, C_emp(1e7)={c_top:.2} vs {:.2} (rel {rel:.2})",
            bd.product
        ));
    }
    println!("PASS empirical constants track predictions ({})", lines.join("; "));
}

/// Points of the excluded thin set carry an extra log: their normalized
/// count grows markedly from B = 10^5 to 10^7.
#[test]
fn thin_set_log_growth() {
    let including: Vec<LadderRow> = read_ladder("x1_nothin.csv")
        .into_iter()
        .filter(|r| r.bound >= 100_000)
        .collect();
    let excluded: Vec<LadderRow> = read_ladder("x1.csv")
        .into_iter()
        .filter(|r| r.bound >= 100_000)
        .collect();
    let contrast = report::thin_contrast(&including, &excluded).unwrap();
    assert_eq!(contrast.thin_series.first().unwrap().0, 100_000);
    assert_eq!(contrast.thin_series.last().unwrap().0, 10_000_000);
    // the series must increase at every step (the extra-log trend)
    for w in contrast.thin_series.windows(2) {
        assert!(w[1].2 > w[0].2, "thin series not increasing at B={}", w[1].0);
    }
    // Known red: the measured growth over these two decades is ~1.04; the
    // split-quadric extra logarithm emerges too slowly to reach 1.15 by 1e7.
    assert!(
        contrast.growth_factor >= 1.15,
        "thin-set normalized growth only {:.3}",
        contrast.growth_factor
    );
    println!(
        "PASS thin-set normalized count grows x{:.3} from 1e5 to 1e7",
        contrast.growth_factor
    );
}
