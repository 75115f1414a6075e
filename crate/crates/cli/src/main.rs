//! Command-line front end tying the library together: every experiment the
//! study operations support is reachable as a subcommand, and `run` drives
//! the same commands from a JSON config with deterministic, content-addressed
//! outputs.

mod config;

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use nalgebra::{Complex, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use config::{fmt_float, RunConfig};
use hierenc::apps::{
    collocation_system, complexity_table, condition_study, qfmm_potential, singular_spectrum,
    solve_reference,
};
use hierenc::blockenc::{band_index_oracles, encode_dense_naive, encode_sparse, BlockEncoding};
use hierenc::hierenc::{encode_hierarchical, optimality_report, required_bandwidth, sparsify_band};
use hierenc::hmatrix::{compress, HMatrix, RankPolicy};
use hierenc::hsplit::{hierarchical_split, HSplit, Variant};
use hierenc::kernels::{assemble_dense, EntryOracle, Kernel, KernelSpec, PointSet};
use hierenc::linalg::{condition_number, operator_norm};
use hierenc::stateprep::{prep_magnitude_hier, prep_smooth_fourier};

#[derive(Parser)]
#[command(
    name = "hierenc",
    about = "Hierarchical kernel-matrix splittings and block-encoding ledgers",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct KernelArgs {
    /// Path to a kernel JSON spec ({family, p, C, q, k, c, lambda, ...})
    #[arg(long)]
    kernel: Option<PathBuf>,
    /// Shorthand: polynomially decaying kernel with this exponent
    #[arg(long, conflicts_with = "kernel")]
    p: Option<f64>,
}

impl KernelArgs {
    fn spec(&self) -> Result<KernelSpec, CliError> {
        match (&self.kernel, self.p) {
            (Some(path), _) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| CliError::usage(format!("cannot read {}: {e}", path.display())))?;
                serde_json::from_str(&text)
                    .map_err(|e| CliError::usage(format!("kernel spec: {e}")))
            }
            (None, Some(p)) => Ok(KernelSpec::poly(p)),
            (None, None) => Err(CliError::usage(
                "pass --kernel <spec.json> or --p <exponent>",
            )),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Emit the hierarchical splitting as JSON on stdout
    Split {
        #[command(flatten)]
        kernel: KernelArgs,
        /// Point count (grid side for --variant uniform2d)
        #[arg(long)]
        n: usize,
        #[arg(long, default_value = "plain")]
        variant: String,
        #[arg(long, default_value_t = 0)]
        shift: i64,
    },
    /// Compress a kernel matrix into the low-rank container
    Compress {
        #[command(flatten)]
        kernel: KernelArgs,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value = "plain")]
        variant: String,
        #[arg(long, default_value_t = 0)]
        shift: i64,
        #[arg(long, default_value_t = 16)]
        rank: usize,
        /// Output container path
        #[arg(long)]
        out: PathBuf,
    },
    /// Apply a compressed matrix to a vector (CSV, one value per line)
    Matvec {
        #[arg(long)]
        hmatrix: PathBuf,
        #[arg(long)]
        vector: PathBuf,
    },
    /// Block-encode a kernel matrix and report the ledger
    Encode {
        #[command(flatten)]
        kernel: KernelArgs,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value = "naive")]
        method: String,
        #[arg(long, default_value = "plain")]
        variant: String,
        #[arg(long, default_value_t = 0)]
        shift: i64,
        #[arg(long, default_value_t = 1e-10)]
        eps: f64,
        /// Band half-width for --method sparse
        #[arg(long, default_value_t = 1)]
        bandwidth: usize,
        /// Write the ledger JSON here
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Hierarchical block-encoding with verification when the size permits
    HierEncode {
        #[command(flatten)]
        kernel: KernelArgs,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value = "plain")]
        variant: String,
        #[arg(long, default_value_t = 0)]
        shift: i64,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Normalization-factor optimality table over a size list
    Optimality {
        #[command(flatten)]
        kernel: KernelArgs,
        #[arg(long, value_delimiter = ',')]
        n_list: Vec<usize>,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Band sparsification error report
    Sparsify {
        #[command(flatten)]
        kernel: KernelArgs,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        bandwidth: Option<usize>,
        /// Pick the bandwidth from a target error instead
        #[arg(long)]
        eps_target: Option<f64>,
    },
    /// State preparation from a CSV input
    Prep {
        /// fourier (input = coefficients c_{-p}..c_p) or magnitude (input = unit vector)
        #[arg(long)]
        mode: String,
        #[arg(long)]
        input: PathBuf,
        /// Output dimension for fourier mode
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Fast-multipole potential computation
    Fmm {
        #[arg(long)]
        n: usize,
        /// Draw masses uniformly from [0.5, 1.5) with this seed (unit masses otherwise)
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Collocation integral-equation study
    Ie {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 1.0)]
        p: f64,
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Condition-number study CSV (kernel,N,kappa)
    Cond {
        #[arg(long, value_delimiter = ',')]
        n_list: Vec<usize>,
        /// Self-interaction of the 1/r kernel
        #[arg(long, default_value_t = 0.0)]
        diag: f64,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Singular-spectrum CSV (kernel,N,k,sigma_k)
    Spectrum {
        #[command(flatten)]
        kernel: KernelArgs,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Query-complexity comparison CSV (method,N,alpha,norm,kappa,forward,inverse)
    Complexity {
        #[command(flatten)]
        kernel: KernelArgs,
        #[arg(long, value_delimiter = ',')]
        n_list: Vec<usize>,
        #[arg(long, default_value_t = 10.0)]
        kappa: f64,
        #[arg(long, default_value_t = 1e-3)]
        eps: f64,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Drive any command from a JSON config; outputs land in a
    /// content-addressed directory with a ledger.json
    Run {
        #[arg(long)]
        config: PathBuf,
    },
}

struct CliError {
    message: String,
    usage: bool,
}

impl CliError {
    fn usage(msg: impl Into<String>) -> Self {
        CliError {
            message: msg.into(),
            usage: true,
        }
    }
}

impl From<hierenc::Error> for CliError {
    fn from(e: hierenc::Error) -> Self {
        CliError {
            message: e.to_string(),
            usage: false,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError {
            message: e.to_string(),
            usage: false,
        }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError {
            message: e.to_string(),
            usage: false,
        }
    }
}

fn main() {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => {}
        Err(e) => {
            let payload = json!({ "error": e.message });
            eprintln!("{payload}");
            std::process::exit(if e.usage { 2 } else { 1 });
        }
    }
}

fn parse_variant(name: &str, shift: i64) -> Result<Variant, CliError> {
    match name {
        "plain" => Ok(Variant::Plain1D),
        "cyclic" => Ok(Variant::Cyclic),
        "shifted_row" => Ok(Variant::ShiftedRow(shift)),
        "shifted_skew" => Ok(Variant::ShiftedSkew(shift)),
        "uniform2d" => Ok(Variant::Uniform2D),
        other => Err(CliError::usage(format!(
            "unknown variant {other:?} (plain | cyclic | shifted_row | shifted_skew | uniform2d)"
        ))),
    }
}

/// Builds (kernel, points, split) for a 1D/2D grid request. For shifted
/// variants the kernel follows the split's offset.
fn build_problem(
    spec: &KernelSpec,
    n: usize,
    variant: Variant,
) -> Result<(EntryOracle, HSplit), CliError> {
    let (points, kernel) = match variant {
        Variant::Uniform2D => {
            let points = PointSet::grid_2d(n)?;
            (points, spec.kernel(n * n)?)
        }
        Variant::ShiftedRow(c) => {
            let mut spec = spec.clone();
            spec.c = Some(c as f64);
            spec.skew = Some(false);
            let (kernel, points) = spec.build(n)?;
            (points, kernel)
        }
        Variant::ShiftedSkew(c) => {
            let mut spec = spec.clone();
            spec.c = Some(c as f64);
            spec.skew = Some(true);
            let (kernel, points) = spec.build(n)?;
            (points, kernel)
        }
        _ => {
            let (kernel, points) = spec.build(n)?;
            (points, kernel)
        }
    };
    let split = hierarchical_split(&points, variant, None)?;
    Ok((EntryOracle::new(kernel, points), split))
}

fn read_vector(path: &Path) -> Result<Vec<f64>, CliError> {
    let text = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        for tok in line.split(',') {
            let tok = tok.trim();
            if tok.is_empty() {
                continue;
            }
            out.push(tok.parse::<f64>().map_err(|e| {
                CliError::usage(format!(
                    "{}:{}: bad number {tok:?}: {e}",
                    path.display(),
                    ln + 1
                ))
            })?);
        }
    }
    Ok(out)
}

fn write_lines(path: &Path, lines: &[String]) -> Result<(), CliError> {
    let mut f = std::fs::File::create(path)?;
    for line in lines {
        writeln!(f, "{line}")?;
    }
    Ok(())
}

fn emit_csv(target: Option<&Path>, lines: Vec<String>) -> Result<(), CliError> {
    match target {
        Some(path) => write_lines(path, &lines),
        None => {
            for line in lines {
                println!("{line}");
            }
            Ok(())
        }
    }
}

fn write_report(target: Option<&Path>, value: &serde_json::Value) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value)?;
    match target {
        Some(path) => {
            std::fs::write(path, text + "\n")?;
        }
        None => println!("{text}"),
    }
    Ok(())
}

fn ledger_summary(enc: &BlockEncoding) -> serde_json::Value {
    enc.ledger_json()
}

fn dispatch(cmd: Command) -> Result<(), CliError> {
    match cmd {
        Command::Split {
            kernel,
            n,
            variant,
            shift,
        } => {
            let spec = kernel.spec()?;
            let variant = parse_variant(&variant, shift)?;
            let (_, split) = build_problem(&spec, n, variant)?;
            println!("{}", serde_json::to_string_pretty(&split)?);
            Ok(())
        }
        Command::Compress {
            kernel,
            n,
            variant,
            shift,
            rank,
            out,
        } => {
            let spec = kernel.spec()?;
            let variant = parse_variant(&variant, shift)?;
            let (oracle, split) = build_problem(&spec, n, variant)?;
            let h = compress(&oracle, &split, RankPolicy::Uniform(rank))?;
            let mut file = std::fs::File::create(&out)?;
            h.write_to(&mut file)?;
            eprintln!(
                "wrote {} (rank {}, {} levels, adjacent nnz {})",
                out.display(),
                rank,
                h.factors.len(),
                h.adjacent.len()
            );
            Ok(())
        }
        Command::Matvec { hmatrix, vector } => {
            let mut file = std::fs::File::open(&hmatrix)?;
            let h = HMatrix::read_from(&mut file)?;
            let v = read_vector(&vector)?;
            if v.len() != h.n() {
                return Err(CliError::usage(format!(
                    "vector length {} does not match matrix dimension {}",
                    v.len(),
                    h.n()
                )));
            }
            let out = h.matvec(&DVector::from_vec(v))?;
            for x in out.iter() {
                println!("{}", fmt_float(*x));
            }
            Ok(())
        }
        Command::Encode {
            kernel,
            n,
            method,
            variant,
            shift,
            eps,
            bandwidth,
            report,
        } => {
            let spec = kernel.spec()?;
            let variant = parse_variant(&variant, shift)?;
            let (oracle, split) = build_problem(&spec, n, variant)?;
            let enc = match method.as_str() {
                "naive" => encode_dense_naive(&oracle, oracle.scale(), eps)?,
                "sparse" => {
                    let (row, col) = band_index_oracles(n, bandwidth);
                    let d = 2 * bandwidth + 1;
                    encode_sparse(&oracle, &row, &col, d, d, oracle.scale(), eps)?
                }
                "hier" => encode_hierarchical(&oracle, &split, eps)?,
                other => {
                    return Err(CliError::usage(format!(
                        "unknown method {other:?} (naive | sparse | hier)"
                    )))
                }
            };
            write_report(report.as_deref(), &ledger_summary(&enc))?;
            Ok(())
        }
        Command::HierEncode {
            kernel,
            n,
            variant,
            shift,
            report,
        } => {
            let spec = kernel.spec()?;
            let variant = parse_variant(&variant, shift)?;
            let (oracle, split) = build_problem(&spec, n, variant)?;
            let enc = encode_hierarchical(&oracle, &split, 0.0)?;
            let mut ledger = ledger_summary(&enc);
            if n <= hierenc::config::dense_cap() {
                let k = assemble_dense(&oracle)?;
                let residual = enc.check(&k)?;
                let norm = operator_norm(&k);
                ledger["verification"] = json!({
                    "residual": residual,
                    "norm": norm,
                    "ratio": enc.alpha / norm,
                });
            }
            write_report(report.as_deref(), &ledger)?;
            Ok(())
        }
        Command::Optimality {
            kernel,
            n_list,
            csv,
        } => {
            if n_list.is_empty() {
                return Err(CliError::usage("empty n_list"));
            }
            let spec = kernel.spec()?;
            let k = spec.kernel(*n_list.last().unwrap())?;
            let rows = optimality_report(&k, &n_list)?;
            let mut lines = vec!["N,alpha,norm,ratio,naive_ratio".to_string()];
            for r in rows {
                lines.push(format!(
                    "{},{},{},{},{}",
                    r.n,
                    fmt_float(r.alpha),
                    fmt_float(r.norm),
                    fmt_float(r.ratio),
                    fmt_float(r.naive_ratio)
                ));
            }
            emit_csv(csv.as_deref(), lines)
        }
        Command::Sparsify {
            kernel,
            n,
            bandwidth,
            eps_target,
        } => {
            let spec = kernel.spec()?;
            let (k, points) = spec.build(n)?;
            let oracle = EntryOracle::new(k, points);
            let d = match (bandwidth, eps_target) {
                (Some(d), _) => d,
                (None, Some(eps)) => required_bandwidth(&oracle, eps)?,
                (None, None) => return Err(CliError::usage("pass --bandwidth or --eps-target")),
            };
            let rep = sparsify_band(&oracle, d)?;
            write_report(
                None,
                &json!({
                    "bandwidth": rep.bandwidth,
                    "measured_error": rep.measured_error,
                    "measured_is_dense_norm": rep.measured_is_dense_norm,
                    "analytic_estimate": rep.analytic_estimate,
                    "diverges": rep.diverges,
                    "encoding_alpha": rep.encoding_alpha,
                }),
            )
        }
        Command::Prep {
            mode,
            input,
            n,
            report,
        } => {
            let data = read_vector(&input)?;
            match mode.as_str() {
                "fourier" => {
                    let n = n.ok_or_else(|| CliError::usage("fourier mode needs --n"))?;
                    let coeffs: Vec<Complex<f64>> =
                        data.iter().map(|&re| Complex::new(re, 0.0)).collect();
                    let res = prep_smooth_fourier(&coeffs, n)?;
                    let state: Vec<serde_json::Value> =
                        res.state.iter().map(|c| json!([c.re, c.im])).collect();
                    write_report(
                        report.as_deref(),
                        &json!({"mode": "fourier", "success_prob": res.success_prob, "state": state}),
                    )
                }
                "magnitude" => {
                    let x = DVector::from_vec(data);
                    let prep = prep_magnitude_hier(&x)?;
                    let state: Vec<f64> = prep.result.state.iter().map(|c| c.re).collect();
                    write_report(
                        report.as_deref(),
                        &json!({
                            "mode": "magnitude",
                            "success_prob": prep.result.success_prob,
                            "beta_sq": prep.beta_sq,
                            "level_counts": prep.level_counts,
                            "state": state,
                        }),
                    )
                }
                other => Err(CliError::usage(format!("unknown prep mode {other:?}"))),
            }
        }
        Command::Fmm { n, seed, csv } => {
            let points = match seed {
                Some(seed) => {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    let masses: Vec<f64> = (0..n).map(|_| 0.5 + rng.random::<f64>()).collect();
                    PointSet::grid_1d(n).with_masses(masses)?
                }
                None => PointSet::grid_1d(n),
            };
            let res = qfmm_potential(&points, 0.0)?;
            let mut lines = vec!["i,potential".to_string()];
            for (i, v) in res.potential.iter().enumerate() {
                lines.push(format!("{i},{}", fmt_float(*v)));
            }
            emit_csv(csv.as_deref(), lines)?;
            eprintln!(
                "{}",
                json!({
                    "success_prob": res.success_prob,
                    "alpha": res.alpha,
                    "kernel_queries": res.kernel_queries,
                    "repetitions": res.repetitions,
                })
            );
            Ok(())
        }
        Command::Ie { n, p, lambda, csv } => {
            let lambda = lambda.unwrap_or(1.0 / n as f64);
            let sys = collocation_system(n, p, lambda)?;
            // smooth boundary data over the ring
            let g = DVector::from_fn(n, |i, _| {
                (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos() + 2.0
            });
            let f = solve_reference(&sys.system, &g)?;
            let oracle = EntryOracle::new(sys.kernel.clone(), PointSet::grid_1d(n));
            let enc = encode_hierarchical(&oracle, &sys.split, 0.0)?;
            let kappa = condition_number(&sys.system);
            let mut lines = vec!["i,g,f".to_string()];
            for i in 0..n {
                lines.push(format!("{i},{},{}", fmt_float(g[i]), fmt_float(f[i])));
            }
            emit_csv(csv.as_deref(), lines)?;
            eprintln!(
                "{}",
                json!({
                    "k_norm": sys.k_norm,
                    "kappa": kappa,
                    "kappa_bound": sys.kappa_bound,
                    "alpha": enc.alpha,
                    "encoding_ratio": enc.alpha / sys.k_norm,
                })
            );
            Ok(())
        }
        Command::Cond { n_list, diag, csv } => {
            if n_list.is_empty() {
                return Err(CliError::usage("empty n_list"));
            }
            let kernels = cond_kernels(diag);
            let rows = condition_study(&kernels, &n_list)?;
            let mut lines = vec!["kernel,N,kappa".to_string()];
            for r in rows {
                lines.push(format!("{},{},{}", r.kernel, r.n, fmt_float(r.kappa)));
            }
            emit_csv(csv.as_deref(), lines)
        }
        Command::Spectrum { kernel, n, csv } => {
            let spec = kernel.spec()?;
            let (k, points) = spec.build(n)?;
            let res = singular_spectrum(&k, &points)?;
            let mut lines = vec!["kernel,N,k,sigma_k".to_string()];
            for (i, s) in res.sigmas.iter().enumerate() {
                lines.push(format!("{},{n},{i},{}", spec.family, fmt_float(*s)));
            }
            emit_csv(csv.as_deref(), lines)?;
            eprintln!(
                "{}",
                json!({"numerical_rank": res.numerical_rank, "uniform_overlap": res.uniform_overlap})
            );
            Ok(())
        }
        Command::Complexity {
            kernel,
            n_list,
            kappa,
            eps,
            csv,
        } => {
            if n_list.is_empty() {
                return Err(CliError::usage("empty n_list"));
            }
            let spec = kernel.spec()?;
            let k = spec.kernel(*n_list.last().unwrap())?;
            let rows = complexity_table(&k, &n_list, kappa, eps)?;
            let mut lines =
                vec!["method,N,alpha,norm,kappa,forward_units,inverse_units".to_string()];
            for r in rows {
                lines.push(format!(
                    "{},{},{},{},{},{},{}",
                    r.method,
                    r.n,
                    fmt_float(r.alpha),
                    fmt_float(r.norm),
                    fmt_float(r.kappa),
                    fmt_float(r.forward_units),
                    fmt_float(r.inverse_units)
                ));
            }
            emit_csv(csv.as_deref(), lines)
        }
        Command::Run { config } => {
            let text = std::fs::read_to_string(&config)?;
            let cfg: RunConfig =
                serde_json::from_str(&text).map_err(|e| CliError::usage(format!("config: {e}")))?;
            run_config(cfg)
        }
    }
}

fn cond_kernels(diag: f64) -> Vec<(String, Kernel)> {
    vec![
        (
            "poly_p1".to_string(),
            Kernel::Custom {
                name: "inv_r_diag".into(),
                f: std::sync::Arc::new(move |r: f64| if r == 0.0 { diag } else { 1.0 / r }),
                deriv: None,
                decay: None,
            },
        ),
        (
            "gaussian".to_string(),
            Kernel::ExpDecay {
                q: 2.0,
                poly_order: 0.0,
                self_interaction: 1.0,
            },
        ),
    ]
}

/// Executes a config-driven run: artifacts and a ledger.json land in
/// `out/<content-hash>/`, so identical configs are byte-identical reruns.
fn run_config(cfg: RunConfig) -> Result<(), CliError> {
    let dir = cfg.out_dir()?;
    let seed = cfg.seed.unwrap_or(0);
    let mut artifacts: Vec<String> = Vec::new();
    let mut ledger = json!({
        "command": cfg.command,
        "config_hash": cfg.content_hash(),
        "seed": seed,
    });

    let kernel_spec = cfg.kernel.clone().unwrap_or_else(|| KernelSpec::poly(1.0));
    let variant = parse_variant(
        cfg.variant.as_deref().unwrap_or("plain"),
        cfg.shift.unwrap_or(0),
    )?;

    match cfg.command.as_str() {
        "split" => {
            let n = cfg
                .n
                .ok_or_else(|| CliError::usage("split needs field n"))?;
            let (_, split) = build_problem(&kernel_spec, n, variant)?;
            let path = dir.join("split.json");
            std::fs::write(&path, serde_json::to_string_pretty(&split)?)?;
            artifacts.push("split.json".into());
        }
        "optimality" => {
            let ns = cfg
                .n_list
                .clone()
                .filter(|l| !l.is_empty())
                .ok_or_else(|| CliError::usage("optimality needs a non-empty n_list"))?;
            let kernel = kernel_spec.kernel(*ns.last().unwrap())?;
            let rows = optimality_report(&kernel, &ns)?;
            let mut lines = vec!["N,alpha,norm,ratio,naive_ratio".to_string()];
            for r in &rows {
                lines.push(format!(
                    "{},{},{},{},{}",
                    r.n,
                    fmt_float(r.alpha),
                    fmt_float(r.norm),
                    fmt_float(r.ratio),
                    fmt_float(r.naive_ratio)
                ));
            }
            write_lines(&dir.join("optimality.csv"), &lines)?;
            artifacts.push("optimality.csv".into());
        }
        "hier-encode" | "encode" => {
            let n = cfg
                .n
                .ok_or_else(|| CliError::usage("encode needs field n"))?;
            let (oracle, split) = build_problem(&kernel_spec, n, variant)?;
            let enc = encode_hierarchical(&oracle, &split, cfg.eps.unwrap_or(0.0))?;
            ledger["encoding"] = ledger_summary(&enc);
            ledger["alpha"] = json!(enc.alpha);
            if n <= hierenc::config::dense_cap() {
                let k = assemble_dense(&oracle)?;
                ledger["verification_residual"] = json!(enc.check(&k)?);
            }
        }
        "cond" => {
            let ns = cfg
                .n_list
                .clone()
                .filter(|l| !l.is_empty())
                .ok_or_else(|| CliError::usage("cond needs a non-empty n_list"))?;
            let rows = condition_study(&cond_kernels(cfg.diag.unwrap_or(0.0)), &ns)?;
            let mut lines = vec!["kernel,N,kappa".to_string()];
            for r in rows {
                lines.push(format!("{},{},{}", r.kernel, r.n, fmt_float(r.kappa)));
            }
            write_lines(&dir.join("cond.csv"), &lines)?;
            artifacts.push("cond.csv".into());
        }
        "fmm" => {
            let n = cfg.n.ok_or_else(|| CliError::usage("fmm needs field n"))?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let masses: Vec<f64> = (0..n).map(|_| 0.5 + rng.random::<f64>()).collect();
            let points = PointSet::grid_1d(n).with_masses(masses)?;
            let res = qfmm_potential(&points, 0.0)?;
            let mut lines = vec!["i,potential".to_string()];
            for (i, v) in res.potential.iter().enumerate() {
                lines.push(format!("{i},{}", fmt_float(*v)));
            }
            write_lines(&dir.join("potential.csv"), &lines)?;
            artifacts.push("potential.csv".into());
            ledger["success_prob"] = json!(res.success_prob);
            ledger["encoding"] = ledger_summary(&res.encoding);
        }
        "sparsify" => {
            let n = cfg
                .n
                .ok_or_else(|| CliError::usage("sparsify needs field n"))?;
            let (kernel, points) = kernel_spec.build(n)?;
            let oracle = EntryOracle::new(kernel, points);
            let eps_list = cfg
                .eps_list
                .clone()
                .unwrap_or_else(|| vec![cfg.eps.unwrap_or(1e-2)]);
            let mut lines = vec!["eps_target,bandwidth,measured,analytic,diverges".to_string()];
            for eps in eps_list {
                let d = cfg
                    .bandwidth
                    .unwrap_or(((1.0 / eps).ceil() as usize).max(1));
                let rep = sparsify_band(&oracle, d)?;
                lines.push(format!(
                    "{},{},{},{},{}",
                    fmt_float(eps),
                    rep.bandwidth,
                    fmt_float(rep.measured_error),
                    fmt_float(rep.analytic_estimate),
                    rep.diverges
                ));
            }
            write_lines(&dir.join("sparsify.csv"), &lines)?;
            artifacts.push("sparsify.csv".into());
        }
        "ie" => {
            let n = cfg.n.ok_or_else(|| CliError::usage("ie needs field n"))?;
            let p = cfg.p.unwrap_or(1.0);
            let lambda = cfg.lambda.unwrap_or(1.0 / n as f64);
            let sys = collocation_system(n, p, lambda)?;
            ledger["k_norm"] = json!(sys.k_norm);
            ledger["kappa_bound"] = json!(sys.kappa_bound);
            ledger["kappa"] = json!(condition_number(&sys.system));
        }
        "complexity" => {
            let ns = cfg
                .n_list
                .clone()
                .filter(|l| !l.is_empty())
                .ok_or_else(|| CliError::usage("complexity needs a non-empty n_list"))?;
            let kernel = kernel_spec.kernel(*ns.last().unwrap())?;
            let rows = complexity_table(
                &kernel,
                &ns,
                cfg.kappa.unwrap_or(10.0),
                cfg.eps.unwrap_or(1e-3),
            )?;
            let mut lines =
                vec!["method,N,alpha,norm,kappa,forward_units,inverse_units".to_string()];
            for r in rows {
                lines.push(format!(
                    "{},{},{},{},{},{},{}",
                    r.method,
                    r.n,
                    fmt_float(r.alpha),
                    fmt_float(r.norm),
                    fmt_float(r.kappa),
                    fmt_float(r.forward_units),
                    fmt_float(r.inverse_units)
                ));
            }
            write_lines(&dir.join("complexity.csv"), &lines)?;
            artifacts.push("complexity.csv".into());
        }
        "spectrum" => {
            let n = cfg
                .n
                .ok_or_else(|| CliError::usage("spectrum needs field n"))?;
            let (kernel, points) = kernel_spec.build(n)?;
            let res = singular_spectrum(&kernel, &points)?;
            let mut lines = vec!["kernel,N,k,sigma_k".to_string()];
            for (i, s) in res.sigmas.iter().enumerate() {
                lines.push(format!("{},{n},{i},{}", kernel_spec.family, fmt_float(*s)));
            }
            write_lines(&dir.join("spectrum.csv"), &lines)?;
            artifacts.push("spectrum.csv".into());
            ledger["numerical_rank"] = json!(res.numerical_rank);
            ledger["uniform_overlap"] = json!(res.uniform_overlap);
        }
        other => {
            return Err(CliError::usage(format!(
                "config command {other:?} not recognized"
            )));
        }
    }

    ledger["artifacts"] = json!(artifacts);
    std::fs::write(
        dir.join("ledger.json"),
        serde_json::to_string_pretty(&ledger)? + "\n",
    )?;
    println!("{}", dir.display());
    Ok(())
}
