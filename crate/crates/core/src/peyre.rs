//! Exponent-matrix system and the predicted leading constant.
//!
//! From a variety description this module builds the block matrix
//! A = [[A1 A2],[A3 A4]] whose rows are indexed by the torsor variables
//! (plus one extra row), checks rk(A1) = rk(A), and derives the three
//! factors of the predicted constant: the polytope volume c*, the product
//! of local densities c_fin, and the archimedean surface integral c_∞,
//! so that the raw point count should grow like c*·c_fin·c_∞·B·(log B)^c2.

use num_bigint::BigInt;
use num_rational::{BigRational, Ratio};
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arith::primes_up_to;
use crate::singular::{EstimateMethod, SingularEstimate};
use crate::variety::VarietySpec;

#[derive(Debug, Error)]
pub enum PeyreError {
    #[error("rank condition fails: rk(A1) = {rk_a1} but rk(A) = {rk_a}")]
    RankCondition { rk_a1: usize, rk_a: usize },
    #[error("chosen row set is not independent or has wrong size")]
    BadRowSet,
    #[error("linear solve inconsistent: {0}")]
    Inconsistent(String),
    #[error("polytope is unbounded")]
    Unbounded,
    #[error("unsupported: {0}")]
    Unsupported(String),
}

type Rat = BigRational;

fn rat(n: i64) -> Rat {
    BigRational::from_integer(BigInt::from(n))
}

fn rat_of(r: Ratio<i64>) -> Rat {
    BigRational::new(BigInt::from(*r.numer()), BigInt::from(*r.denom()))
}

/// Row-reduce a copy of `rows` and return its rank.
fn rank(rows: &[Vec<Rat>]) -> usize {
    if rows.is_empty() {
        return 0;
    }
    let mut m: Vec<Vec<Rat>> = rows.to_vec();
    let cols = m[0].len();
    let mut r = 0;
    for c in 0..cols {
        let Some(piv) = (r..m.len()).find(|&i| !m[i][c].is_zero()) else {
            continue;
        };
        m.swap(r, piv);
        let pv = m[r][c].clone();
        for x in m[r].iter_mut() {
            *x /= pv.clone();
        }
        for i in 0..m.len() {
            if i != r && !m[i][c].is_zero() {
                let f = m[i][c].clone();
                for cc in 0..cols {
                    let sub = &f * &m[r][cc];
                    m[i][cc] -= sub;
                }
            }
        }
        r += 1;
        if r == m.len() {
            break;
        }
    }
    r
}

/// Express `target` as a linear combination of the (independent) `rows`.
fn express(rows: &[Vec<Rat>], target: &[Rat]) -> Result<Vec<Rat>, PeyreError> {
    let m = rows.len();
    let n = target.len();
    // solve rows^T · x = target by elimination on the n×(m+1) augmented system
    let mut aug: Vec<Vec<Rat>> = (0..n)
        .map(|i| {
            let mut row: Vec<Rat> = (0..m).map(|j| rows[j][i].clone()).collect();
            row.push(target[i].clone());
            row
        })
        .collect();
    let mut r = 0;
    let mut lead: Vec<usize> = Vec::new();
    for c in 0..m {
        let Some(piv) = (r..n).find(|&i| !aug[i][c].is_zero()) else {
            continue;
        };
        aug.swap(r, piv);
        let pv = aug[r][c].clone();
        for x in aug[r].iter_mut() {
            *x /= pv.clone();
        }
        for i in 0..n {
            if i != r && !aug[i][c].is_zero() {
                let f = aug[i][c].clone();
                for cc in 0..=m {
                    let sub = &f * &aug[r][cc];
                    aug[i][cc] -= sub;
                }
            }
        }
        lead.push(c);
        r += 1;
    }
    let mut sol = vec![Rat::zero(); m];
    for (i, &c) in lead.iter().enumerate() {
        sol[c] = aug[i][m].clone();
    }
    // consistency check
    for i in 0..n {
        let mut s = Rat::zero();
        for j in 0..m {
            s += &sol[j] * &rows[j][i];
        }
        if s != target[i] {
            return Err(PeyreError::Inconsistent(format!(
                "coordinate {i} mismatch"
            )));
        }
    }
    Ok(sol)
}

/// The block matrix data and the exact solves feeding c* and c_∞.
#[derive(Debug, Clone)]
pub struct ExponentSystem {
    pub var_ids: Vec<String>,
    /// J×N height exponents.
    pub a1: Vec<Vec<Rat>>,
    /// J×k rows from the equation-block case formula.
    pub a2: Vec<Vec<Rat>>,
    /// rank of A1
    pub r: usize,
    pub c2: usize,
    /// indices (into var order) of the R chosen independent rows
    pub i_set: Vec<usize>,
    /// indices of the remaining J−R rows, in order
    pub dependents: Vec<usize>,
    /// (J−R)×R matrix expressing each dependent row in the chosen rows
    pub b_matrix: Vec<Vec<Rat>>,
    /// coefficients expressing the all-ones/(0..0,−1) row in the chosen rows
    pub b_vec: Vec<Rat>,
}

fn concat_rows(a: &[Vec<Rat>], b: &[Vec<Rat>]) -> Vec<Vec<Rat>> {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let mut row = x.clone();
            row.extend(y.iter().cloned());
            row
        })
        .collect()
}

/// Fixed row choices for the presets, so that one equation block restricts
/// to a single exponent-1 variable (needed by the c_∞ parametrization).
fn preset_rows(spec: &VarietySpec) -> Option<Vec<&'static str>> {
    match spec.name.as_str() {
        "x1" => Some(vec!["x11", "x21", "x31", "x32", "x33"]),
        "x2" | "x3" => Some(vec!["x01", "x02", "x11", "x21", "x31"]),
        _ => None,
    }
}

pub fn exponent_system(spec: &VarietySpec) -> Result<ExponentSystem, PeyreError> {
    let rows = preset_rows(spec).map(|ids| {
        ids.iter()
            .map(|id| spec.var_index(id).expect("preset var"))
            .collect::<Vec<_>>()
    });
    exponent_system_with_rows(spec, rows)
}

/// Like [`exponent_system`] but with an explicit choice of independent rows
/// (`None` = greedy leftmost).
pub fn exponent_system_with_rows(
    spec: &VarietySpec,
    rows: Option<Vec<usize>>,
) -> Result<ExponentSystem, PeyreError> {
    let j = spec.num_vars();
    let n = spec.height.len();
    let k = spec.block_count();

    let mut a1 = vec![vec![Rat::zero(); n]; j];
    for (nu, mono) in spec.height.iter().enumerate() {
        for &(vi, e) in mono {
            a1[vi][nu] = rat_of(e);
        }
    }

    let mut a2 = vec![vec![Rat::zero(); k]; j];
    for (vi, var) in spec.variables.iter().enumerate() {
        let i = var.block;
        let h = var.h as i64;
        for mu in 1..=k {
            a2[vi][mu - 1] = if i == 0 {
                if mu == k { rat(-1) } else { rat(0) }
            } else if i < k {
                if mu == i {
                    rat(h)
                } else if mu == k {
                    rat(-1)
                } else {
                    rat(0)
                }
            } else if mu == k {
                rat(h - 1)
            } else {
                rat(-h)
            };
        }
    }

    let a12 = concat_rows(&a1, &a2);
    let mut a34 = vec![Rat::one(); n];
    a34.extend((0..k).map(|mu| if mu == k - 1 { rat(-1) } else { rat(0) }));

    let rk_a1 = rank(&a1);
    let mut full = a12.clone();
    full.push(a34.clone());
    let rk_a = rank(&full);
    if rk_a1 != rk_a {
        return Err(PeyreError::RankCondition { rk_a1, rk_a });
    }
    let r = rk_a1;
    let c2 = j - r;

    let i_set: Vec<usize> = match rows {
        Some(rs) => {
            if rs.len() != r {
                return Err(PeyreError::BadRowSet);
            }
            let chosen: Vec<Vec<Rat>> = rs.iter().map(|&i| a12[i].clone()).collect();
            if rank(&chosen) != r {
                return Err(PeyreError::BadRowSet);
            }
            rs
        }
        None => {
            let mut picked: Vec<usize> = Vec::new();
            let mut basis: Vec<Vec<Rat>> = Vec::new();
            for (i, row) in a12.iter().enumerate() {
                basis.push(row.clone());
                if rank(&basis) == basis.len() {
                    picked.push(i);
                } else {
                    basis.pop();
                }
                if picked.len() == r {
                    break;
                }
            }
            if picked.len() != r {
                return Err(PeyreError::BadRowSet);
            }
            picked
        }
    };

    let chosen: Vec<Vec<Rat>> = i_set.iter().map(|&i| a12[i].clone()).collect();
    let dependents: Vec<usize> = (0..j).filter(|i| !i_set.contains(i)).collect();
    let mut b_matrix = Vec::with_capacity(dependents.len());
    for &d in &dependents {
        b_matrix.push(express(&chosen, &a12[d])?);
    }
    let b_vec = express(&chosen, &a34)?;

    Ok(ExponentSystem {
        var_ids: spec.variables.iter().map(|v| v.id.clone()).collect(),
        a1,
        a2,
        r,
        c2,
        i_set,
        dependents,
        b_matrix,
        b_vec,
    })
}

/// Volume of {r ∈ [0,∞)^d : b_ℓ − Σ_ι r_ι·B_ιℓ ≥ 0}, exact for d ≤ 2.
/// Returns the volume and (for d = 2) the polygon vertices.
pub fn polytope_volume(
    b_matrix: &[Vec<Rat>],
    b_vec: &[Rat],
) -> Result<(Rat, Vec<(Rat, Rat)>), PeyreError> {
    let d = b_matrix.len();
    match d {
        0 => {
            let ok = b_vec.iter().all(|b| !b.is_negative());
            Ok((if ok { Rat::one() } else { Rat::zero() }, Vec::new()))
        }
        1 => {
            let mut lo = Rat::zero();
            let mut hi: Option<Rat> = None;
            for (l, bl) in b_vec.iter().enumerate() {
                let c = &b_matrix[0][l];
                if c.is_positive() {
                    let u = bl / c;
                    hi = Some(match hi {
                        Some(h) => h.min(u),
                        None => u,
                    });
                } else if c.is_negative() {
                    lo = lo.max(bl / c);
                } else if bl.is_negative() {
                    return Ok((Rat::zero(), Vec::new()));
                }
            }
            let hi = hi.ok_or(PeyreError::Unbounded)?;
            let len = if hi > lo { hi - lo } else { Rat::zero() };
            Ok((len, Vec::new()))
        }
        2 => {
            // unboundedness: a nonzero direction d ≥ 0 with Σ d_ι B_ιℓ ≤ 0 for all ℓ
            let nl = b_vec.len();
            let mut dirs: Vec<(Rat, Rat)> = vec![(rat(1), rat(0)), (rat(0), rat(1))];
            for l in 0..nl {
                let (p, q) = (b_matrix[0][l].clone(), b_matrix[1][l].clone());
                for cand in [(q.clone(), -p.clone()), (-q, p)] {
                    if !cand.0.is_negative()
                        && !cand.1.is_negative()
                        && !(cand.0.is_zero() && cand.1.is_zero())
                    {
                        dirs.push(cand);
                    }
                }
            }
            for dir in dirs {
                let recedes = (0..nl).all(|l| {
                    !(&dir.0 * &b_matrix[0][l] + &dir.1 * &b_matrix[1][l]).is_positive()
                });
                if recedes {
                    return Err(PeyreError::Unbounded);
                }
            }
            // candidate vertices: pairwise intersections of constraint lines and axes
            let mut lines: Vec<(Rat, Rat, Rat)> = (0..nl)
                .map(|l| (b_matrix[0][l].clone(), b_matrix[1][l].clone(), b_vec[l].clone()))
                .collect();
            lines.push((rat(-1), rat(0), rat(0)));
            lines.push((rat(0), rat(-1), rat(0)));
            let mut verts: Vec<(Rat, Rat)> = Vec::new();
            for i in 0..lines.len() {
                for jj in i + 1..lines.len() {
                    let (a, b, c) = lines[i].clone();
                    let (d2, e, f) = lines[jj].clone();
                    let det = &a * &e - &b * &d2;
                    if det.is_zero() {
                        continue;
                    }
                    let r1 = (&c * &e - &b * &f) / det.clone();
                    let r2 = (&a * &f - &c * &d2) / det;
                    if r1.is_negative() || r2.is_negative() {
                        continue;
                    }
                    let feasible = (0..nl).all(|l| {
                        !(&b_vec[l] - &r1 * &b_matrix[0][l] - &r2 * &b_matrix[1][l])
                            .is_negative()
                    });
                    if feasible && !verts.contains(&(r1.clone(), r2.clone())) {
                        verts.push((r1, r2));
                    }
                }
            }
            if verts.len() < 3 {
                return Ok((Rat::zero(), verts));
            }
            let n = verts.len() as f64;
            let cx: f64 = verts.iter().map(|v| v.0.to_f64().unwrap()).sum::<f64>() / n;
            let cy: f64 = verts.iter().map(|v| v.1.to_f64().unwrap()).sum::<f64>() / n;
            verts.sort_by(|u, v| {
                let au = (u.1.to_f64().unwrap() - cy).atan2(u.0.to_f64().unwrap() - cx);
                let av = (v.1.to_f64().unwrap() - cy).atan2(v.0.to_f64().unwrap() - cx);
                au.partial_cmp(&av).unwrap()
            });
            let mut area = Rat::zero();
            for i in 0..verts.len() {
                let p = &verts[i];
                let q = &verts[(i + 1) % verts.len()];
                area += &p.0 * &q.1 - &q.0 * &p.1;
            }
            area = area.abs() / rat(2);
            Ok((area, verts))
        }
        _ => Err(PeyreError::Unsupported(format!(
            "exact polytope volume implemented for dimension ≤ 2, got {d}"
        ))),
    }
}

pub fn c_star(sys: &ExponentSystem) -> Result<Rat, PeyreError> {
    polytope_volume(&sys.b_matrix, &sys.b_vec).map(|(v, _)| v)
}

/// Monte Carlo cross-check of [`c_star`] by hit counting in a bounding box.
pub fn c_star_mc(sys: &ExponentSystem, samples: u64, seed: u64) -> Result<SingularEstimate, PeyreError> {
    let d = sys.b_matrix.len();
    let (exact, verts) = polytope_volume(&sys.b_matrix, &sys.b_vec)?;
    let bm: Vec<Vec<f64>> = sys
        .b_matrix
        .iter()
        .map(|row| row.iter().map(|x| x.to_f64().unwrap()).collect())
        .collect();
    let bv: Vec<f64> = sys.b_vec.iter().map(|x| x.to_f64().unwrap()).collect();
    // bounding box from the exact geometry
    let box_hi: Vec<f64> = match d {
        1 => {
            let mut hi = f64::INFINITY;
            for (l, &c) in bm[0].iter().enumerate() {
                if c > 0.0 {
                    hi = hi.min(bv[l] / c);
                }
            }
            vec![hi.max(1e-300) * 1.001]
        }
        2 => {
            let mut hx: f64 = 0.0;
            let mut hy: f64 = 0.0;
            for v in &verts {
                hx = hx.max(v.0.to_f64().unwrap());
                hy = hy.max(v.1.to_f64().unwrap());
            }
            vec![(hx * 1.001).max(1e-300), (hy * 1.001).max(1e-300)]
        }
        _ => return Err(PeyreError::Unsupported("MC box needs dimension ≤ 2".into())),
    };
    let vol_box: f64 = box_hi.iter().product();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut hits = 0u64;
    let mut point = vec![0.0; d];
    for _ in 0..samples {
        for (x, hi) in point.iter_mut().zip(&box_hi) {
            *x = rng.gen::<f64>() * hi;
        }
        let ok = (0..bv.len()).all(|l| {
            let mut s = bv[l];
            for i in 0..d {
                s -= point[i] * bm[i][l];
            }
            s >= 0.0
        });
        if ok {
            hits += 1;
        }
    }
    let frac = hits as f64 / samples as f64;
    let value = frac * vol_box;
    let stderr = vol_box * (frac * (1.0 - frac) / samples as f64).sqrt();
    Ok(SingularEstimate {
        value,
        error: stderr,
        method: EstimateMethod::MonteCarlo,
        exact: Some(format!("{}/{}", exact.numer(), exact.denom())),
        seed: Some(seed),
        samples: Some(samples),
    })
}

/// The data needed by the archimedean surface integral, restricted to the
/// chosen coordinates: signed monomials, height rows, and variable roles.
#[derive(Debug, Clone)]
pub struct SurfaceProblem {
    /// equation block index and exponent for each chosen variable (block 0 = off-equation)
    pub blocks: Vec<(usize, u32)>,
    pub signs: Vec<i64>,
    /// height rows restricted to the chosen variables (exponents)
    pub rows: Vec<Vec<f64>>,
    /// J − R, the power of two in front of the integral
    pub twos: usize,
    /// index of the solved variable (its block restricts to one exponent-1 variable)
    pub t0: usize,
    /// index of the variable integrated exactly innermost (alone in its block)
    pub inner: usize,
    /// sampling order for the remaining variables
    pub order: Vec<usize>,
}

fn build_surface_problem(
    spec: &VarietySpec,
    sys: &ExponentSystem,
) -> Result<SurfaceProblem, PeyreError> {
    let k = spec.block_count();
    let nvars = sys.i_set.len();
    let blocks: Vec<(usize, u32)> = sys
        .i_set
        .iter()
        .map(|&vi| (spec.variables[vi].block, spec.variables[vi].h))
        .collect();
    let rows: Vec<Vec<f64>> = (0..spec.height.len())
        .map(|nu| {
            sys.i_set
                .iter()
                .map(|&vi| sys.a1[vi][nu].to_f64().unwrap())
                .collect()
        })
        .collect();

    // candidate solve variables: alone in their block with exponent 1
    let singleton = |b: usize| -> Option<usize> {
        let members: Vec<usize> = (0..nvars).filter(|&i| blocks[i].0 == b).collect();
        (members.len() == 1).then(|| members[0])
    };
    for b0 in 1..=k {
        let Some(t0) = singleton(b0) else { continue };
        if blocks[t0].1 != 1 {
            continue;
        }
        for bi in 1..=k {
            if bi == b0 {
                continue;
            }
            let Some(inner) = singleton(bi) else { continue };
            // no height row may mix the solved and the innermost variable
            if rows.iter().any(|r| r[t0] > 0.0 && r[inner] > 0.0) {
                continue;
            }
            // derive a sampling order with finite caps
            let mut remaining: Vec<usize> =
                (0..nvars).filter(|&i| i != t0 && i != inner).collect();
            let mut order = Vec::new();
            'outer: while !remaining.is_empty() {
                for pos in 0..remaining.len() {
                    let v = remaining[pos];
                    let ok = rows.iter().any(|r| {
                        r[v] > 0.0
                            && r[t0] == 0.0
                            && r[inner] == 0.0
                            && remaining.iter().all(|&u| u == v || r[u] == 0.0)
                    });
                    if ok {
                        order.push(v);
                        remaining.remove(pos);
                        continue 'outer;
                    }
                }
                break;
            }
            if !remaining.is_empty() {
                continue;
            }
            return Ok(SurfaceProblem {
                blocks,
                signs: spec.signs.clone(),
                rows,
                twos: sys.c2,
                t0,
                inner,
                order,
            });
        }
    }
    Err(PeyreError::Unsupported(
        "no admissible solve/innermost variable pair for the surface integral".into(),
    ))
}

/// Monte Carlo evaluation of the surface integral 2^{J−R}·∫ χ/‖∇Φ*‖ dF.
///
/// With one monomial being a single exponent-1 variable t0, the surface
/// element and the gradient norm cancel and the integral is the volume of
/// the constraint region in the remaining coordinates. Those are sampled
/// uniformly under their monomial caps, with the last lone-block variable
/// integrated exactly (its constraints cut out one interval).
pub fn surface_integral_mc(prob: &SurfaceProblem, samples: u64, seed: u64) -> SingularEstimate {
    let nvars = prob.blocks.len();
    let k = prob.signs.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nsigns = prob.order.len() + 1; // sampled variables plus the innermost one
    let (b0, _) = prob.blocks[prob.t0];
    let (bi, hi) = prob.blocks[prob.inner];
    let s0 = prob.signs[b0 - 1] as f64;

    let mut sum = 0.0;
    let mut sumsq = 0.0;
    let mut t = vec![0.0f64; nvars];
    for _ in 0..samples {
        // sequential uniform sampling under the caps from rows free of t0/inner
        let mut weight = 1.0;
        let mut done: Vec<usize> = Vec::new();
        let mut degenerate = false;
        for &v in &prob.order {
            let mut cap = f64::INFINITY;
            for r in &prob.rows {
                if r[v] <= 0.0 || r[prob.t0] != 0.0 || r[prob.inner] != 0.0 {
                    continue;
                }
                if (0..nvars).any(|u| u != v && r[u] != 0.0 && !done.contains(&u)) {
                    continue;
                }
                let mut log_rest = 0.0;
                for &u in &done {
                    if r[u] != 0.0 {
                        log_rest += r[u] * t[u].ln();
                    }
                }
                cap = cap.min((-log_rest / r[v]).exp());
            }
            debug_assert!(cap.is_finite());
            t[v] = cap * rng.gen::<f64>();
            if t[v] <= 0.0 {
                degenerate = true;
                break;
            }
            weight *= cap;
            done.push(v);
        }
        if degenerate {
            continue;
        }
        // check every row free of t0 and the innermost variable
        let sampled_ok = prob.rows.iter().all(|r| {
            if r[prob.t0] != 0.0 || r[prob.inner] != 0.0 {
                return true;
            }
            let mut s = 0.0;
            for v in 0..nvars {
                if r[v] != 0.0 {
                    s += r[v] * t[v].ln();
                }
            }
            s <= 1e-9
        });
        if !sampled_ok {
            sumsq += 0.0;
            continue;
        }

        let mut total = 0.0;
        for pattern in 0..(1u32 << nsigns) {
            let sign_of = |i: usize| -> f64 {
                if pattern >> i & 1 == 0 {
                    1.0
                } else {
                    -1.0
                }
            };
            // a = sum of the signed monomials of the blocks other than t0's
            // and the innermost one, evaluated on the sampled magnitudes
            let mut a = 0.0;
            for blk in 1..=k {
                if blk == b0 || blk == bi {
                    continue;
                }
                let mut m = prob.signs[blk - 1] as f64;
                for (pos, &v) in prob.order.iter().enumerate() {
                    if prob.blocks[v].0 == blk {
                        m *= (sign_of(pos) * t[v]).powi(prob.blocks[v].1 as i32);
                    }
                }
                a += m;
            }
            let q = prob.signs[bi - 1] as f64 * sign_of(nsigns - 1).powi(hi as i32);
            // t0 magnitude as a function of w = v^h: |t0| = |a + q·w| / |s0|
            // w ranges over [0, ∞); each row cuts an interval
            let mut wlo = 0.0f64;
            let mut whi = f64::INFINITY;
            for r in &prob.rows {
                let g0 = r[prob.t0];
                let gi = r[prob.inner];
                if g0 == 0.0 && gi == 0.0 {
                    continue;
                }
                let mut log_rest = 0.0;
                for &v in &prob.order {
                    if r[v] != 0.0 {
                        log_rest += r[v] * t[v].ln();
                    }
                }
                if g0 == 0.0 {
                    // pure cap on the innermost variable
                    whi = whi.min(((-log_rest / gi).exp()).powi(hi as i32));
                } else {
                    // |a + q·w| ≤ c, with c from the rest of the row
                    let c = (-log_rest / g0).exp() * s0.abs();
                    let (r1, r2) = ((-c - a) / q, (c - a) / q);
                    wlo = wlo.max(r1.min(r2));
                    whi = whi.min(r1.max(r2));
                }
            }
            if whi > wlo {
                let vlo = wlo.max(0.0).powf(1.0 / hi as f64);
                let vhi = whi.powf(1.0 / hi as f64);
                if vhi > vlo {
                    total += weight * (vhi - vlo);
                }
            }
        }
        sum += total;
        sumsq += total * total;
    }
    let n = samples as f64;
    let mean = sum / n;
    let var = (sumsq / n - mean * mean).max(0.0);
    let scale = (1u64 << prob.twos) as f64;
    SingularEstimate {
        value: scale * mean,
        error: scale * (var / n).sqrt(),
        method: EstimateMethod::MonteCarlo,
        exact: None,
        seed: Some(seed),
        samples: Some(samples),
    }
}

pub fn c_infty(
    spec: &VarietySpec,
    sys: &ExponentSystem,
    samples: u64,
    seed: u64,
) -> Result<SingularEstimate, PeyreError> {
    let prob = build_surface_problem(spec, sys)?;
    Ok(surface_integral_mc(&prob, samples, seed))
}

// ---- p-adic densities -------------------------------------------------

fn big_pow(p: u64, e: u32) -> BigInt {
    BigInt::from(p).pow(e)
}

/// Number of residues mod p^l with valuation exactly v (v = l means ≡ 0).
fn class_size(p: u64, l: u32, v: u32) -> BigInt {
    if v >= l {
        BigInt::one()
    } else {
        big_pow(p, l - v) - big_pow(p, l - v - 1)
    }
}

/// #{x mod p^l : v(x) = v2, v(t + x) = w} for any fixed t with v(t) = v1.
fn pair_count(p: u64, l: u32, v1: u32, v2: u32, w: u32) -> BigInt {
    if v1 >= l {
        return if w == v2 { class_size(p, l, v2) } else { BigInt::zero() };
    }
    if v2 >= l {
        return if w == v1 { BigInt::one() } else { BigInt::zero() };
    }
    if v1 != v2 {
        return if w == v1.min(v2) {
            class_size(p, l, v2)
        } else {
            BigInt::zero()
        };
    }
    // v1 == v2 == v < l: t + x = p^v(u0 + u) with u0, u units mod p^M
    let m = l - v1;
    if w < v1 {
        return BigInt::zero();
    }
    if w < l {
        let j = w - v1;
        if j == 0 {
            big_pow(p, m - 1) * (BigInt::from(p) - 2)
        } else if j < m {
            big_pow(p, m - j) - big_pow(p, m - j - 1)
        } else {
            BigInt::zero()
        }
    } else {
        BigInt::one()
    }
}

/// Counts of a block monomial ∏ x^h by valuation class, under forced
/// divisibility of some variables. The second component records whether the
/// distribution is uniform on each class (true when some exponent is 1).
fn block_dist(hs: &[(u32, bool)], p: u64, l: u32) -> (Vec<BigInt>, bool) {
    let mut dist = vec![BigInt::zero(); l as usize + 1];
    let mut vals = vec![0u32; hs.len()];
    // odometer over per-variable valuations 0..=l (forced vars start at 1)
    for (i, &(_, forced)) in hs.iter().enumerate() {
        vals[i] = if forced { 1 } else { 0 };
    }
    loop {
        let mut cls: u64 = 0;
        let mut weight = BigInt::one();
        for (i, &(h, _)) in hs.iter().enumerate() {
            cls += h as u64 * vals[i] as u64;
            weight *= class_size(p, l, vals[i]);
        }
        let cls = (cls.min(l as u64)) as usize;
        dist[cls] += weight;
        // advance
        let mut i = 0;
        loop {
            if i == hs.len() {
                let uniform = hs.iter().any(|&(h, _)| h == 1);
                return (dist, uniform);
            }
            vals[i] += 1;
            if vals[i] <= l {
                break;
            }
            vals[i] = if hs[i].1 { 1 } else { 0 };
            i += 1;
        }
    }
}

/// Class distribution of b + c where c is class-uniform with counts `g`.
fn conv(f: &[BigInt], g: &[BigInt], p: u64, l: u32) -> Vec<BigInt> {
    let mut out = vec![BigInt::zero(); l as usize + 1];
    for v1 in 0..=l {
        if f[v1 as usize].is_zero() {
            continue;
        }
        for v2 in 0..=l {
            if g[v2 as usize].is_zero() {
                continue;
            }
            let size = class_size(p, l, v2);
            let per_value = &g[v2 as usize] / &size;
            debug_assert_eq!(&per_value * &size, g[v2 as usize]);
            for w in 0..=l {
                let pc = pair_count(p, l, v1, v2, w);
                if !pc.is_zero() {
                    out[w as usize] += &f[v1 as usize] * &per_value * pc;
                }
            }
        }
    }
    out
}

/// Solutions of the torsor equation mod p^l with the given variables forced
/// divisible by p, counted over all equation variables mod p^l.
fn eq_count(spec: &VarietySpec, p: u64, l: u32, forced: &[bool]) -> Result<BigInt, PeyreError> {
    let k = spec.block_count();
    let mut dists: Vec<(Vec<BigInt>, bool)> = Vec::with_capacity(k);
    for b in 1..=k {
        let hs: Vec<(u32, bool)> = spec
            .variables
            .iter()
            .enumerate()
            .filter(|(_, v)| v.block == b)
            .map(|(i, v)| (v.h, forced[i]))
            .collect();
        dists.push(block_dist(&hs, p, l));
    }
    // keep a class-uniform accumulator so the convolution stays exact
    let first = dists
        .iter()
        .position(|(_, u)| *u)
        .ok_or_else(|| PeyreError::Unsupported("no class-uniform equation block".into()))?;
    let mut acc = dists[first].0.clone();
    for (i, (d, _)) in dists.iter().enumerate() {
        if i != first {
            acc = conv(d, &acc, p, l);
        }
    }
    Ok(acc[l as usize].clone())
}

/// Exact local density: #{x mod p^L : equation, coprimality} / p^{L(J−1)},
/// stratified by valuations with inclusion–exclusion over the gcd sets.
pub fn c_p_density(spec: &VarietySpec, p: u64, l: u32) -> Result<Rat, PeyreError> {
    let j = spec.num_vars();
    let r = spec.gcd_sets.len();
    let mut total = BigInt::zero();
    for mask in 0u32..(1 << r) {
        let mut forced = vec![false; j];
        for (si, set) in spec.gcd_sets.iter().enumerate() {
            if mask >> si & 1 == 1 {
                for &vi in set {
                    forced[vi] = true;
                }
            }
        }
        let mut term = eq_count(spec, p, l, &forced)?;
        for (vi, var) in spec.variables.iter().enumerate() {
            if var.block == 0 {
                term *= if forced[vi] {
                    big_pow(p, l - 1)
                } else {
                    big_pow(p, l)
                };
            }
        }
        if mask.count_ones() % 2 == 0 {
            total += term;
        } else {
            total -= term;
        }
    }
    Ok(Rat::new(total, big_pow(p, l * (j as u32 - 1))))
}

/// Direct enumeration over all J variables mod p^L; oracle for the
/// stratified path. Requires p^{JL} ≤ 10^8.
pub fn c_p_density_brute(spec: &VarietySpec, p: u64, l: u32) -> Result<Rat, PeyreError> {
    let j = spec.num_vars();
    let pl = p.checked_pow(l).ok_or_else(|| PeyreError::Unsupported("p^L overflow".into()))?;
    if (pl as f64).powi(j as i32) > 1e8 {
        return Err(PeyreError::Unsupported("brute range too large".into()));
    }
    let k = spec.block_count();
    let mut count: u64 = 0;
    let mut x = vec![0u64; j];
    loop {
        let mut acc: u64 = 0;
        for b in 1..=k {
            let mut m: u64 = 1;
            for (vi, var) in spec.variables.iter().enumerate() {
                if var.block == b {
                    for _ in 0..var.h {
                        m = m * (x[vi] % pl) % pl;
                    }
                }
            }
            let s = spec.signs[b - 1];
            acc = if s > 0 {
                (acc + m) % pl
            } else {
                (acc + pl - m % pl) % pl
            };
        }
        if acc == 0 {
            let gcd_ok = spec
                .gcd_sets
                .iter()
                .all(|set| set.iter().any(|&vi| x[vi] % p != 0));
            if gcd_ok {
                count += 1;
            }
        }
        let mut i = 0;
        loop {
            if i == j {
                return Ok(Rat::new(
                    BigInt::from(count),
                    big_pow(p, l * (j as u32 - 1)),
                ));
            }
            x[i] += 1;
            if x[i] < pl {
                break;
            }
            x[i] = 0;
            i += 1;
        }
    }
}

/// Local density at p with L raised until two consecutive levels agree.
pub fn c_p_stable(spec: &VarietySpec, p: u64) -> Result<(Rat, u32), PeyreError> {
    let mut prev = c_p_density(spec, p, 1)?;
    for l in 2..=5u32 {
        let cur = c_p_density(spec, p, l)?;
        if cur == prev {
            return Ok((cur, l - 1));
        }
        prev = cur;
    }
    Err(PeyreError::Unsupported(format!(
        "local density at p = {p} did not stabilize by L = 5"
    )))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CFinResult {
    pub value: f64,
    /// empirical tail estimate for the primes beyond pmax
    pub tail: f64,
    pub pmax: u64,
    /// exact per-prime densities as "num/den"
    pub per_prime: Vec<(u64, String)>,
}

pub fn c_fin(spec: &VarietySpec, pmax: u64) -> Result<CFinResult, PeyreError> {
    let primes = primes_up_to(pmax);
    let locals: Vec<(u64, Rat)> = primes
        .par_iter()
        .map(|&p| c_p_stable(spec, p).map(|(v, _)| (p, v)))
        .collect::<Result<Vec<_>, _>>()?;
    let mut value = 1.0;
    let mut envelope: f64 = 0.0;
    let mut per_prime = Vec::with_capacity(locals.len());
    for (p, c) in &locals {
        let cf = c.to_f64().unwrap();
        value *= cf;
        if *p >= 11 {
            envelope = envelope.max((cf - 1.0).abs() * (*p as f64).powi(2));
        }
        per_prime.push((*p, format!("{}/{}", c.numer(), c.denom())));
    }
    // sum of K/p² over p > pmax, via the prime-counting approximation
    let tail = envelope / (pmax as f64 * (pmax as f64).ln());
    Ok(CFinResult {
        value,
        tail,
        pmax,
        per_prime,
    })
}

/// Verify the unit-fibered correspondence between the 7-variable local count
/// and the 8-variable count with the auxiliary variable z1 (x2 only):
/// count7/p^{6L} must equal (1−1/p)^{−1}·count8/p^{7L}.
pub fn x2_surjection_check(p: u64, l: u32) -> bool {
    let pl = p.pow(l);
    let pairs01 = |d31: bool, d32: bool| -> BigInt {
        // (x01, x02) mod p^l with the three two-variable coprimality rules
        let div = big_pow(p, l - 1);
        let nondiv = big_pow(p, l) - &div;
        let mut total = BigInt::zero();
        for a_div in [false, true] {
            for b_div in [false, true] {
                if a_div && d32 {
                    continue;
                }
                if b_div && d31 {
                    continue;
                }
                if a_div && b_div {
                    continue;
                }
                let wa = if a_div { div.clone() } else { nondiv.clone() };
                let wb = if b_div { div.clone() } else { nondiv.clone() };
                total += wa * wb;
            }
        }
        total
    };
    let mulm = |a: u64, b: u64| a * b % pl;
    let subm = |a: u64, b: u64| (a + pl - b % pl) % pl;

    // seven-variable side: x11·x12 − x21² − x31·x32 ≡ 0
    let mut count7 = BigInt::zero();
    for x11 in 0..pl {
        for x12 in 0..pl {
            let prod = mulm(x11, x12);
            for x21 in 0..pl {
                if x11 % p == 0 && x12 % p == 0 && x21 % p == 0 {
                    continue;
                }
                let lhs = subm(prod, mulm(x21, x21));
                for x31 in 0..pl {
                    for x32 in 0..pl {
                        if subm(lhs, mulm(x31, x32)) == 0 {
                            count7 += pairs01(x31 % p == 0, x32 % p == 0);
                        }
                    }
                }
            }
        }
    }
    // eight-variable side: x11·x12·z1 − x21²·z1 − x31·x32 ≡ 0, (x31·x32, z1, p) = 1
    let mut count8 = BigInt::zero();
    for x11 in 0..pl {
        for x12 in 0..pl {
            let prod = mulm(x11, x12);
            for x21 in 0..pl {
                if x11 % p == 0 && x12 % p == 0 && x21 % p == 0 {
                    continue;
                }
                let quad = subm(prod, mulm(x21, x21));
                for z1 in 0..pl {
                    let lhs = mulm(quad, z1);
                    for x31 in 0..pl {
                        for x32 in 0..pl {
                            if subm(lhs, mulm(x31, x32)) != 0 {
                                continue;
                            }
                            if (x31 % p == 0 || x32 % p == 0) && z1 % p == 0 {
                                continue;
                            }
                            count8 += pairs01(x31 % p == 0, x32 % p == 0);
                        }
                    }
                }
            }
        }
    }
    let lhs = Rat::new(count7, big_pow(p, 6 * l));
    let unit_frac = Rat::new(BigInt::from(p), BigInt::from(p - 1));
    let rhs = unit_frac * Rat::new(count8, big_pow(p, 7 * l));
    lhs == rhs
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RationalParts {
    pub num: String,
    pub den: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CInftyParts {
    pub value: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CFinParts {
    pub value: f64,
    pub tail: f64,
}

/// The assembled predicted constant; `product` multiplies against the raw
/// torsor count (no symmetry division) as B·(log B)^c2 coefficient.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PeyreBreakdown {
    pub variety: String,
    pub c_star: RationalParts,
    pub c_star_value: f64,
    pub c_fin: CFinParts,
    pub c_infty: CInftyParts,
    pub c2: usize,
    pub product: f64,
    /// combined relative uncertainty from the MC stderr and the tail bound
    pub rel_error: f64,
    pub seeds: Vec<u64>,
    pub samples: u64,
}

pub fn peyre_constant(
    spec: &VarietySpec,
    samples: u64,
    seed: u64,
    pmax: u64,
) -> Result<PeyreBreakdown, PeyreError> {
    let sys = exponent_system(spec)?;
    let star = c_star(&sys)?;
    let star_f = star.to_f64().unwrap();
    let fin = c_fin(spec, pmax)?;
    let inf = c_infty(spec, &sys, samples, seed)?;
    let product = star_f * fin.value * inf.value;
    let rel = (inf.error / inf.value).hypot(fin.tail / fin.value);
    Ok(PeyreBreakdown {
        variety: spec.name.clone(),
        c_star: RationalParts {
            num: star.numer().to_string(),
            den: star.denom().to_string(),
        },
        c_star_value: star_f,
        c_fin: CFinParts {
            value: fin.value,
            tail: fin.tail,
        },
        c_infty: CInftyParts {
            value: inf.value,
            stderr: inf.error,
        },
        c2: sys.c2,
        product,
        rel_error: rel,
        seeds: vec![seed],
        samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sysfor(name: &str) -> ExponentSystem {
        let spec = VarietySpec::preset(name).unwrap();
        exponent_system(&spec).unwrap()
    }

    fn rmat(entries: &[&[i64]]) -> Vec<Vec<Rat>> {
        entries
            .iter()
            .map(|row| row.iter().map(|&x| rat(x)).collect())
            .collect()
    }

    #[test]
    fn x1_matrices_match_reference() {
        let sys = sysfor("x1");
        // rows: x11, x12, x21, x31, x32, x33; columns = height monomials
        let a1 = rmat(&[
            &[2, 0, 0, 2, 0, 0, 0, 0],
            &[0, 2, 0, 0, 2, 0, 0, 0],
            &[0, 0, 2, 0, 0, 2, 0, 0],
            &[1, 1, 1, 0, 0, 0, 3, 0],
            &[0, 0, 0, 1, 1, 1, 0, 3],
            &[0, 0, 0, 0, 0, 0, 2, 2],
        ]);
        let a2 = rmat(&[
            &[1, 0, -1],
            &[1, 0, -1],
            &[0, 2, -1],
            &[-1, -1, 0],
            &[-1, -1, 0],
            &[-2, -2, 1],
        ]);
        assert_eq!(sys.a1, a1);
        assert_eq!(sys.a2, a2);
        assert_eq!(sys.r, 5);
        assert_eq!(sys.c2, 1);
    }

    #[test]
    fn x2_matrices_match_reference() {
        let sys = sysfor("x2");
        let h = |n: i64, d: i64| Rat::new(BigInt::from(n), BigInt::from(d));
        // spot-check the fractional column and full A2
        let spec = VarietySpec::preset("x2").unwrap();
        let x31 = spec.var_index("x31").unwrap();
        let x32 = spec.var_index("x32").unwrap();
        let x01 = spec.var_index("x01").unwrap();
        assert_eq!(sys.a1[x31][9], h(3, 2));
        assert_eq!(sys.a1[x32][9], h(5, 2));
        assert_eq!(sys.a1[x31][10], h(3, 2));
        assert_eq!(sys.a1[x32][10], h(1, 2));
        assert_eq!(sys.a1[x01][10], rat(2));
        let a2 = rmat(&[
            &[0, 0, -1],
            &[0, 0, -1],
            &[1, 0, -1],
            &[1, 0, -1],
            &[-2, -2, 1],
            &[0, 1, -1],
            &[0, 1, -1],
        ]);
        assert_eq!(sys.a2, a2);
        assert_eq!(sys.r, 5);
        assert_eq!(sys.c2, 2);
    }

    #[test]
    fn x3_matrices_match_reference() {
        let sys = sysfor("x3");
        let a1 = rmat(&[
            &[0, 0, 0, 0, 1, 1, 1, 2, 2, 2, 2],
            &[2, 2, 2, 2, 1, 1, 1, 0, 0, 0, 0],
            &[0, 0, 0, 2, 0, 0, 3, 0, 0, 0, 2],
            &[0, 0, 2, 0, 0, 3, 0, 0, 0, 2, 0],
            &[0, 2, 0, 0, 3, 0, 0, 0, 2, 0, 0],
            &[1, 0, 0, 0, 0, 0, 0, 2, 1, 1, 1],
            &[2, 1, 1, 1, 0, 0, 0, 1, 0, 0, 0],
        ]);
        assert_eq!(sys.a1, a1);
        assert_eq!(sys.r, 5);
        assert_eq!(sys.c2, 2);
    }

    #[test]
    fn c2_matches_symmetry_rank() {
        for name in ["x1", "x2", "x3"] {
            let spec = VarietySpec::preset(name).unwrap();
            let sys = exponent_system(&spec).unwrap();
            assert_eq!(sys.c2 as u32, spec.symmetry_rank - 1, "{name}");
        }
    }

    #[test]
    fn synthetic_polytopes() {
        // one dimension: r ≤ 2 and r ≤ 3
        let bm = vec![vec![rat(1), rat(1)]];
        let bv = vec![rat(2), rat(3)];
        assert_eq!(polytope_volume(&bm, &bv).unwrap().0, rat(2));
        // two dimensions: r1 + r2 ≤ 1 in the positive quadrant
        let bm = vec![vec![rat(1)], vec![rat(1)]];
        let bv = vec![rat(1)];
        assert_eq!(
            polytope_volume(&bm, &bv).unwrap().0,
            Rat::new(BigInt::from(1), BigInt::from(2))
        );
        // unbounded: constraint that never cuts the quadrant
        let bm = vec![vec![rat(-1)], vec![rat(0)]];
        let bv = vec![rat(1)];
        assert!(matches!(
            polytope_volume(&bm, &bv),
            Err(PeyreError::Unbounded)
        ));
    }

    #[test]
    fn preset_c_star_values() {
        let vals = [("x1", (1, 6)), ("x2", (1, 15)), ("x3", (1, 12))];
        for (name, (n, d)) in vals {
            let sys = sysfor(name);
            assert_eq!(
                c_star(&sys).unwrap(),
                Rat::new(BigInt::from(n), BigInt::from(d)),
                "{name}"
            );
        }
    }

    #[test]
    fn c_star_mc_agrees() {
        for name in ["x1", "x2", "x3"] {
            let sys = sysfor(name);
            let est = c_star_mc(&sys, 200_000, 7).unwrap();
            let exact = c_star(&sys).unwrap().to_f64().unwrap();
            assert!(
                (est.value - exact).abs() < 4.0 * est.error.max(1e-6),
                "{name}: {} vs {exact}",
                est.value
            );
        }
    }

    #[test]
    fn surface_integral_linear_case() {
        // Φ* = t1 + t2 with |t1| ≤ 1, |t2| ≤ 1: the solved slice has length 2
        let prob = SurfaceProblem {
            blocks: vec![(1, 1), (2, 1)],
            signs: vec![1, 1],
            rows: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            twos: 0,
            t0: 0,
            inner: 1,
            order: vec![],
        };
        let est = surface_integral_mc(&prob, 1000, 3);
        assert!((est.value - 2.0).abs() < 1e-9, "{}", est.value);
    }

    #[test]
    fn surface_problem_roles_resolve() {
        for name in ["x1", "x2", "x3"] {
            let spec = VarietySpec::preset(name).unwrap();
            let sys = exponent_system(&spec).unwrap();
            let prob = build_surface_problem(&spec, &sys).unwrap();
            assert_eq!(prob.order.len() + 2, sys.i_set.len(), "{name}");
        }
    }

    #[test]
    fn product_invariant_under_row_choice() {
        // two admissible row sets for x1 give different c* but the same
        // c*·c_∞ product within MC error
        let spec = VarietySpec::preset("x1").unwrap();
        let pick = |omit: &str| -> Vec<usize> {
            (0..spec.num_vars())
                .filter(|&i| spec.variables[i].id != omit)
                .collect()
        };
        let sys_a = exponent_system_with_rows(&spec, Some(pick("x12"))).unwrap();
        let sys_b = exponent_system_with_rows(&spec, Some(pick("x11"))).unwrap();
        let ia = c_infty(&spec, &sys_a, 40_000, 11).unwrap();
        let ib = c_infty(&spec, &sys_b, 40_000, 12).unwrap();
        let pa = c_star(&sys_a).unwrap().to_f64().unwrap() * ia.value;
        let pb = c_star(&sys_b).unwrap().to_f64().unwrap() * ib.value;
        let sa = c_star(&sys_a).unwrap().to_f64().unwrap() * ia.error;
        let sb = c_star(&sys_b).unwrap().to_f64().unwrap() * ib.error;
        assert!((pa - pb).abs() <= 3.0 * sa.hypot(sb), "{pa} vs {pb}");
    }

    #[test]
    fn stratified_density_matches_brute() {
        let cases = [
            ("x1", 2u64, 1u32),
            ("x1", 3, 1),
            ("x1", 5, 1),
            ("x2", 2, 1),
            ("x2", 2, 2),
            ("x2", 3, 1),
            ("x3", 2, 1),
            ("x3", 3, 1),
        ];
        for (name, p, l) in cases {
            let spec = VarietySpec::preset(name).unwrap();
            let s = c_p_density(&spec, p, l).unwrap();
            let b = c_p_density_brute(&spec, p, l).unwrap();
            assert_eq!(s, b, "{name} p={p} L={l}");
        }
    }

    #[test]
    fn densities_stabilize() {
        let spec = VarietySpec::preset("x2").unwrap();
        let l2 = c_p_density(&spec, 2, 2).unwrap();
        let l3 = c_p_density(&spec, 2, 3).unwrap();
        assert_eq!(l2, l3);
        let (stable, _) = c_p_stable(&spec, 3).unwrap();
        assert_eq!(stable, c_p_density(&spec, 3, 2).unwrap());
    }

    #[test]
    fn surjection_identity_small() {
        assert!(x2_surjection_check(2, 1));
        assert!(x2_surjection_check(3, 1));
        assert!(x2_surjection_check(2, 2));
    }

    #[test]
    fn c_fin_smoke() {
        let spec = VarietySpec::preset("x1").unwrap();
        let res = c_fin(&spec, 50).unwrap();
        assert!(res.value > 0.0 && res.value.is_finite());
        assert!(res.tail >= 0.0);
        assert_eq!(res.per_prime.len(), primes_up_to(50).len());
    }
}
