//! Python bindings for the torsor counting library.
//!
//! Exposes the variety presets, the exact and brute-force point counters,
//! the character sum identities, the singular series, and the full
//! leading-constant computation. Structured results come back as JSON
//! strings so the Python side can stay dependency free.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use torsor_count::char_sums;
use torsor_count::enumerate::{self, CountOptions, DyadicBox};
use torsor_count::peyre;
use torsor_count::report;
use torsor_count::singular;
use torsor_count::variety::{HeightBound, VarietySpec};

fn err<E: std::fmt::Display>(e: E) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// A torsor counting problem: variables, equation, heights, gcd and thin
/// conditions. Construct from a preset name ("x1", "x2", "x3") or a JSON
/// spec document.
#[pyclass(name = "Variety")]
struct PyVariety {
    spec: VarietySpec,
}

#[pymethods]
impl PyVariety {
    #[staticmethod]
    fn preset(name: &str) -> PyResult<Self> {
        Ok(PyVariety { spec: VarietySpec::preset(name).map_err(err)? })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(PyVariety { spec: VarietySpec::from_json(text).map_err(err)? })
    }

    #[getter]
    fn name(&self) -> String {
        self.spec.name.clone()
    }

    #[getter]
    fn num_vars(&self) -> usize {
        self.spec.num_vars()
    }

    fn fingerprint(&self) -> String {
        self.spec.fingerprint()
    }

    fn canonical_json(&self) -> String {
        self.spec.canonical_json()
    }

    /// Check every torsor condition (equation, heights, gcds, thin set)
    /// at an integer point.
    fn conditions_ok(&self, point: Vec<i64>, bound: u64) -> bool {
        self.spec.conditions_ok(&point, HeightBound(bound))
    }

    /// Count lattice points up to the height bound with the lifted
    /// divisor-sum enumerator.
    #[pyo3(signature = (bound, apply_thin = true))]
    fn count_exact(&self, py: Python<'_>, bound: u64, apply_thin: bool) -> PyResult<u64> {
        let spec = self.spec.clone();
        py.allow_threads(|| enumerate::count_exact(&spec, bound, CountOptions { apply_thin }))
            .map_err(err)
    }

    /// Count the same set by direct iteration over all candidate points.
    /// Only feasible for small bounds.
    #[pyo3(signature = (bound, apply_thin = true))]
    fn count_brute(&self, py: Python<'_>, bound: u64, apply_thin: bool) -> PyResult<u64> {
        let spec = self.spec.clone();
        py.allow_threads(|| enumerate::count_brute(&spec, bound, CountOptions { apply_thin }))
            .map_err(err)
    }

    /// Exact p-adic density of torsor solutions mod p^l, as a
    /// (numerator, denominator) string pair.
    fn p_adic_density(&self, p: u64, l: u32) -> PyResult<(String, String)> {
        let d = peyre::c_p_density(&self.spec, p, l).map_err(err)?;
        Ok((d.numer().to_string(), d.denom().to_string()))
    }

    /// Full leading-constant breakdown (rational factor, finite Euler
    /// product, archimedean density) as a JSON string.
    #[pyo3(signature = (samples = 1_000_000, seed = 1, pmax = 1000))]
    fn peyre_constant(&self, py: Python<'_>, samples: u64, seed: u64, pmax: u64) -> PyResult<String> {
        let spec = self.spec.clone();
        let breakdown = py
            .allow_threads(|| peyre::peyre_constant(&spec, samples, seed, pmax))
            .map_err(err)?;
        serde_json::to_string_pretty(&breakdown).map_err(err)
    }

    /// The exact rational polytope volume in the leading constant.
    fn c_star(&self) -> PyResult<(String, String)> {
        let sys = peyre::exponent_system(&self.spec).map_err(err)?;
        let v = peyre::c_star(&sys).map_err(err)?;
        Ok((v.numer().to_string(), v.denom().to_string()))
    }
}

/// Complete quadratic character sum over pairs mod a, restricted by the
/// congruence class of the discriminant. Returns (re, im).
#[pyfunction]
fn char_sum_s_brute(h1: i64, h2: i64, a: u64, c: u64, z: u64, xi: u64) -> (f64, f64) {
    let v = char_sums::s_brute(h1, h2, a, c, z, xi);
    (v.re, v.im)
}

/// Closed form for the same sum at trivial twist; always an integer.
#[pyfunction]
fn char_sum_s_closed(a: u64, c: u64, z: u64, xi: u64) -> i64 {
    char_sums::s_closed_diag(a, c, z, xi)
}

/// Character sum attached to the conic fibration. Returns (re, im).
#[pyfunction]
fn char_sum_t_brute(k1: i64, k2: i64, x: i64, a: u64) -> (f64, f64) {
    let v = char_sums::t_brute(k1, k2, x, a);
    (v.re, v.im)
}

/// Closed form for the fibration sum at trivial twist.
#[pyfunction]
fn char_sum_t_closed(x: i64, a: u64) -> i64 {
    char_sums::t_closed_diag(x, a)
}

/// Euler factor of the singular series at p, as a float.
#[pyfunction]
fn euler_factor(p: u64, r: u32) -> f64 {
    let f = singular::euler_factor(p, r);
    *f.numer() as f64 / *f.denom() as f64
}

/// Truncated singular series for the dyadic box model.
#[pyfunction]
fn singular_series(xi: u64, pmax: u64) -> f64 {
    singular::singular_series(xi, pmax).value
}

/// Count solutions in a dyadic box with all coordinates in (top/2, top].
/// tops = (a, b, c, y, w, z).
#[pyfunction]
#[pyo3(signature = (tops, xi, exclude_thin = true))]
fn count_dyadic_box(py: Python<'_>, tops: (u64, u64, u64, u64, u64, u64), xi: u64, exclude_thin: bool) -> u64 {
    let bx = DyadicBox { a: tops.0, b: tops.1, c: tops.2, y: tops.3, w: tops.4, z: tops.5 };
    py.allow_threads(|| enumerate::count_dyadic_box(&bx, xi, exclude_thin))
}

/// Fit raw counts to B * (polynomial in log B) of degree c2 and return
/// the result (coefficients, normalized series, drift) as JSON.
#[pyfunction]
fn fit_counts(rows: Vec<(u64, u64)>, c2: usize) -> PyResult<String> {
    let r = report::fit(&rows, c2).map_err(err)?;
    serde_json::to_string_pretty(&r).map_err(err)
}

/// Normalized count raw / (B (log B)^c2).
#[pyfunction]
fn c_emp(bound: u64, raw: u64, c2: usize) -> f64 {
    report::c_emp(bound, raw, c2)
}

#[pymodule]
fn torsor_count_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyVariety>()?;
    m.add_function(wrap_pyfunction!(char_sum_s_brute, m)?)?;
    m.add_function(wrap_pyfunction!(char_sum_s_closed, m)?)?;
    m.add_function(wrap_pyfunction!(char_sum_t_brute, m)?)?;
    m.add_function(wrap_pyfunction!(char_sum_t_closed, m)?)?;
    m.add_function(wrap_pyfunction!(euler_factor, m)?)?;
    m.add_function(wrap_pyfunction!(singular_series, m)?)?;
    m.add_function(wrap_pyfunction!(count_dyadic_box, m)?)?;
    m.add_function(wrap_pyfunction!(fit_counts, m)?)?;
    m.add_function(wrap_pyfunction!(c_emp, m)?)?;
    Ok(())
}
