//! Command-line front end: enumeration ladders, oracle checks, constant
//! computation, fitting, and report assembly.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use torsor_count::char_sums::{
    s_brute, s_closed_diag, s_weil_bound, t_brute, t_closed_diag, t_weil_bound,
};
use torsor_count::enumerate::{
    atomic_write, count_brute, count_dyadic_box, run_ladder, write_ladder_csv, CountOptions,
    DyadicBox, LadderConfig, LadderRow,
};
use torsor_count::peyre::{c_star, exponent_system, peyre_constant};
use torsor_count::report::{c_emp, fit, last_decade_drift, series_tsv, thin_contrast};
use torsor_count::singular::{asymp_compare, singular_series};
use torsor_count::VarietySpec;

const DATA_DIR_VAR: &str = "TORSOR_DATA_DIR";

#[derive(Parser)]
#[command(name = "torsor-count", version, about = "torsor point counting and constant verification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct SpecArgs {
    /// preset name (x1, x2, x3)
    #[arg(long, conflicts_with = "spec")]
    variety: Option<String>,
    /// JSON spec file
    #[arg(long)]
    spec: Option<PathBuf>,
}

impl SpecArgs {
    fn load(&self) -> Result<VarietySpec, String> {
        match (&self.variety, &self.spec) {
            (Some(name), None) => VarietySpec::preset(name).map_err(|e| e.to_string()),
            (None, Some(path)) => {
                let text = std::fs::read_to_string(path).map_err(|e| e.to_string())?;
                VarietySpec::from_json(&text).map_err(|e| e.to_string())
            }
            _ => Err("exactly one of --variety or --spec is required".into()),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run the exact counting ladder over height bounds
    Enumerate {
        #[command(flatten)]
        spec: SpecArgs,
        /// comma-separated bounds, e-notation allowed (1e3,1e4,...)
        #[arg(long, value_delimiter = ',')]
        bounds: Vec<String>,
        #[arg(long, default_value_t = 1)]
        shards: usize,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// keep the thin-set points instead of excluding them
        #[arg(long)]
        no_thin: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Reference enumeration over the full integer box (small bounds only)
    Brute {
        #[command(flatten)]
        spec: SpecArgs,
        #[arg(long)]
        bound: String,
        #[arg(long)]
        no_thin: bool,
    },
    /// Count solutions in a dyadic box for the auxiliary equation
    Box {
        #[arg(long, default_value_t = 1)]
        xi: u64,
        /// shell tops as a,b,c,y,w,z
        #[arg(long, value_delimiter = ',')]
        tops: Vec<String>,
        #[arg(long)]
        no_thin: bool,
    },
    /// Verify character-sum identities against brute force
    Charsum {
        #[command(subcommand)]
        what: CharsumCmd,
    },
    /// Evaluate the singular series
    Singular {
        #[arg(long, default_value_t = 1)]
        xi: u64,
        #[arg(long, default_value = "10000")]
        pmax: String,
    },
    /// Compare a dyadic-box count against series × integral
    Asymp {
        #[arg(long, default_value_t = 1)]
        xi: u64,
        #[arg(long, value_delimiter = ',')]
        tops: Vec<String>,
        #[arg(long, default_value = "2000000")]
        samples: String,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long)]
        no_thin: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compute the predicted constant breakdown
    Peyre {
        #[command(flatten)]
        spec: SpecArgs,
        #[arg(long, default_value = "2000000")]
        samples: String,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value = "10000")]
        pmax: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit a ladder CSV against B·(polynomial in log B)
    Fit {
        /// ledger CSV produced by `enumerate`
        #[arg(long)]
        ledger: PathBuf,
        #[arg(long)]
        c2: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run x1 with and without the thin-set exclusion and contrast them
    ThinContrast {
        #[arg(long, value_delimiter = ',')]
        bounds: Vec<String>,
        #[arg(long, default_value_t = 1)]
        shards: usize,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Combined report: fit a ledger and compare with the predicted constant
    Report {
        #[command(flatten)]
        spec: SpecArgs,
        #[arg(long)]
        ledger: PathBuf,
        #[arg(long, default_value = "2000000")]
        samples: String,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value = "10000")]
        pmax: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum CharsumCmd {
    /// closed forms vs brute force plus bound checks on a grid
    Verify {
        /// S or T
        #[arg(long)]
        family: String,
        #[arg(long, default_value_t = 200)]
        amax: u64,
    },
}

fn parse_num(s: &str) -> Result<u64, String> {
    let t = s.trim();
    if let Ok(v) = t.parse::<u64>() {
        return Ok(v);
    }
    let f: f64 = t.parse().map_err(|_| format!("bad number: {t}"))?;
    if f < 0.0 || f > 1.8e19 || f.fract() != 0.0 && f < 1e15 && f.fract().abs() > 1e-9 {
        return Err(format!("bad number: {t}"));
    }
    Ok(f as u64)
}

fn parse_nums(v: &[String]) -> Result<Vec<u64>, String> {
    v.iter().map(|s| parse_num(s)).collect()
}

fn build_id() -> String {
    option_env!("GIT_DESCRIBE")
        .map(str::to_owned)
        .unwrap_or_else(|| format!("torsor-count-{}", env!("CARGO_PKG_VERSION")))
}

#[derive(Serialize)]
struct Artifact<T: Serialize> {
    build: String,
    command: Vec<String>,
    fingerprint: Option<String>,
    payload: T,
}

fn emit<T: Serialize>(
    payload: T,
    fingerprint: Option<String>,
    out: Option<&Path>,
) -> Result<(), String> {
    let art = Artifact {
        build: build_id(),
        command: std::env::args().collect(),
        fingerprint,
        payload,
    };
    let text = serde_json::to_string_pretty(&art).map_err(|e| e.to_string())?;
    match out {
        Some(path) => atomic_write(&data_path(path), text.as_bytes()).map_err(|e| e.to_string()),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

/// Relative paths land in $TORSOR_DATA_DIR when it is set.
fn data_path(path: &Path) -> PathBuf {
    if path.is_absolute() {
        return path.to_path_buf();
    }
    match std::env::var_os(DATA_DIR_VAR) {
        Some(dir) => {
            let base = PathBuf::from(dir);
            let _ = std::fs::create_dir_all(&base);
            base.join(path)
        }
        None => path.to_path_buf(),
    }
}

fn read_ledger_csv(path: &Path) -> Result<Vec<(u64, u64)>, String> {
    let text = std::fs::read_to_string(path).map_err(|e| e.to_string())?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 && line.starts_with("bound") {
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split(',');
        let b: u64 = parts
            .next()
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| format!("bad ledger line {}", i + 1))?;
        let raw: u64 = parts
            .next()
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| format!("bad ledger line {}", i + 1))?;
        rows.push((b, raw));
    }
    Ok(rows)
}

/// exit 2 = validation failure, 3 = a verified property failed to hold
enum Failure {
    Validation(String),
    Check(String),
}

impl From<String> for Failure {
    fn from(s: String) -> Self {
        Failure::Validation(s)
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Enumerate {
            spec,
            bounds,
            shards,
            checkpoint,
            no_thin,
            out,
        } => {
            let spec = spec.load()?;
            let bounds = parse_nums(&bounds)?;
            if bounds.is_empty() {
                return Err(Failure::Validation("need at least one bound".into()));
            }
            let cfg = LadderConfig {
                shards,
                apply_thin: !no_thin,
                checkpoint: checkpoint.map(|p| data_path(&p)),
            };
            let rows = run_ladder(&spec, &bounds, &cfg).map_err(|e| e.to_string())?;
            for row in &rows {
                println!(
                    "B={} raw={} adjusted={} [{:.1}s]",
                    row.bound, row.raw, row.adjusted, row.seconds
                );
            }
            if let Some(path) = out {
                write_ladder_csv(&data_path(&path), &rows).map_err(|e| e.to_string())?;
            }
            Ok(())
        }
        Command::Brute {
            spec,
            bound,
            no_thin,
        } => {
            let spec = spec.load()?;
            let bound = parse_num(&bound)?;
            let opts = CountOptions {
                apply_thin: !no_thin,
            };
            let raw = count_brute(&spec, bound, opts).map_err(|e| e.to_string())?;
            println!(
                "B={bound} raw={raw} adjusted={}",
                raw as f64 / 2f64.powi(spec.symmetry_rank as i32)
            );
            Ok(())
        }
        Command::Box { xi, tops, no_thin } => {
            let t = parse_nums(&tops)?;
            if t.len() != 6 {
                return Err(Failure::Validation("--tops needs 6 values".into()));
            }
            let bx = DyadicBox {
                a: t[0],
                b: t[1],
                c: t[2],
                y: t[3],
                w: t[4],
                z: t[5],
            };
            println!("{}", count_dyadic_box(&bx, xi, !no_thin));
            Ok(())
        }
        Command::Charsum { what } => {
            let CharsumCmd::Verify { family, amax } = what;
            let mut checked = 0u64;
            match family.as_str() {
                "S" | "s" => {
                    for a in 1..=amax {
                        for c in 1..=4u64 {
                            for z in 1..=2u64 {
                                for xi in [1u64, 2, 3] {
                                    let closed = s_closed_diag(a, c, z, xi);
                                    let brute = s_brute(0, 0, a, c, z, xi);
                                    let diag = brute.as_integer().ok_or_else(|| {
                                        Failure::Check(format!(
                                            "S({a},{c},{z},{xi}) brute not integral"
                                        ))
                                    })?;
                                    if closed != diag {
                                        return Err(Failure::Check(format!(
                                            "S({a},{c},{z},{xi}): closed {closed} vs brute {diag}"
                                        )));
                                    }
                                    for h in [(0i64, 0i64), (1, 0), (1, 1), (-2, 3)] {
                                        let v = s_brute(h.0, h.1, a, c, z, xi).norm();
                                        if v > s_weil_bound(h.0, h.1, a, c) + 1e-6 {
                                            return Err(Failure::Check(format!(
                                                "S({a},{c},{z},{xi}) h={h:?} exceeds its bound"
                                            )));
                                        }
                                    }
                                    checked += 1;
                                }
                            }
                        }
                    }
                }
                "T" | "t" => {
                    for a in 1..=amax {
                        for x in [-5i64, -2, -1, 1, 2, 3, 4, 9] {
                            let closed = t_closed_diag(x, a);
                            let brute = t_brute(0, 0, x, a);
                            let diag = brute.as_integer().ok_or_else(|| {
                                Failure::Check(format!("T({x},{a}) brute not integral"))
                            })?;
                            if closed != diag {
                                return Err(Failure::Check(format!(
                                    "T({x},{a}): closed {closed} vs brute {diag}"
                                )));
                            }
                            if a % 2 == 1 {
                                for k in [(0i64, 0i64), (1, 0), (1, 1), (-2, 3)] {
                                    let v = t_brute(k.0, k.1, x, a).norm();
                                    if v > t_weil_bound(k.0, k.1, x, a) + 1e-6 {
                                        return Err(Failure::Check(format!(
                                            "T({x},{a}) k={k:?} exceeds its bound"
                                        )));
                                    }
                                }
                            }
                            checked += 1;
                        }
                    }
                }
                other => {
                    return Err(Failure::Validation(format!(
                        "unknown family {other}, expected S or T"
                    )))
                }
            }
            println!("ok: {checked} identities verified");
            Ok(())
        }
        Command::Singular { xi, pmax } => {
            let pmax = parse_num(&pmax)?;
            let est = singular_series(xi, pmax);
            emit(est, None, None)?;
            Ok(())
        }
        Command::Asymp {
            xi,
            tops,
            samples,
            seed,
            no_thin,
            out,
        } => {
            let t = parse_nums(&tops)?;
            if t.len() != 6 {
                return Err(Failure::Validation("--tops needs 6 values".into()));
            }
            let bx = DyadicBox {
                a: t[0],
                b: t[1],
                c: t[2],
                y: t[3],
                w: t[4],
                z: t[5],
            };
            let report = asymp_compare(xi, &bx, parse_num(&samples)?, seed, !no_thin);
            emit(report, None, out.as_deref())?;
            Ok(())
        }
        Command::Peyre {
            spec,
            samples,
            seed,
            pmax,
            out,
        } => {
            let spec = spec.load()?;
            let breakdown =
                peyre_constant(&spec, parse_num(&samples)?, seed, parse_num(&pmax)?)
                    .map_err(|e| e.to_string())?;
            emit(breakdown, Some(spec.fingerprint()), out.as_deref())?;
            Ok(())
        }
        Command::Fit { ledger, c2, out } => {
            let rows = read_ledger_csv(&data_path(&ledger))?;
            let result = fit(&rows, c2).map_err(|e| e.to_string())?;
            emit(result, None, out.as_deref())?;
            Ok(())
        }
        Command::ThinContrast {
            bounds,
            shards,
            checkpoint,
            out,
        } => {
            let spec = VarietySpec::preset("x1").map_err(|e| e.to_string())?;
            let bounds = parse_nums(&bounds)?;
            let run_one = |thin: bool, ck_suffix: &str| -> Result<Vec<LadderRow>, String> {
                let cfg = LadderConfig {
                    shards,
                    apply_thin: thin,
                    checkpoint: checkpoint
                        .as_ref()
                        .map(|p| data_path(&p.with_extension(format!("{ck_suffix}.json")))),
                };
                run_ladder(&spec, &bounds, &cfg).map_err(|e| e.to_string())
            };
            let excluded = run_one(true, "thin")?;
            let including = run_one(false, "all")?;
            let contrast = thin_contrast(&including, &excluded).map_err(|e| e.to_string())?;
            if let Some(prefix) = &out {
                let series: Vec<(f64, f64)> = contrast
                    .thin_series
                    .iter()
                    .map(|&(b, _, v)| (b as f64, v))
                    .collect();
                let tsv = series_tsv(("bound", "thin_over_blogb"), &series);
                atomic_write(
                    &data_path(&prefix.with_extension("tsv")),
                    tsv.as_bytes(),
                )
                .map_err(|e| e.to_string())?;
                emit(
                    &contrast,
                    Some(spec.fingerprint()),
                    Some(&prefix.with_extension("json")),
                )?;
            } else {
                emit(&contrast, Some(spec.fingerprint()), None)?;
            }
            Ok(())
        }
        Command::Report {
            spec,
            ledger,
            samples,
            seed,
            pmax,
            out,
        } => {
            let spec = spec.load()?;
            let sys = exponent_system(&spec).map_err(|e| e.to_string())?;
            let rows = read_ledger_csv(&data_path(&ledger))?;
            let fitted = fit(&rows, sys.c2).map_err(|e| e.to_string())?;
            let breakdown =
                peyre_constant(&spec, parse_num(&samples)?, seed, parse_num(&pmax)?)
                    .map_err(|e| e.to_string())?;
            let star = c_star(&sys).map_err(|e| e.to_string())?;
            let (b_top, raw_top) = *rows.iter().max_by_key(|r| r.0).unwrap();
            let c_top = c_emp(b_top, raw_top, sys.c2);
            let drift = last_decade_drift(&fitted.series);
            #[derive(Serialize)]
            struct Report<A: Serialize, B: Serialize> {
                fit: A,
                breakdown: B,
                c_star: String,
                c_emp_top: f64,
                predicted: f64,
                ratio: f64,
                last_decade_drift: f64,
            }
            let report = Report {
                c_star: star.to_string(),
                c_emp_top: c_top,
                predicted: breakdown.product,
                ratio: c_top / breakdown.product,
                last_decade_drift: drift,
                fit: fitted,
                breakdown,
            };
            emit(report, Some(spec.fingerprint()), out.as_deref())?;
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Check(msg)) => {
            eprintln!("check failed: {msg}");
            ExitCode::from(3)
        }
    }
}
