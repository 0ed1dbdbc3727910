//! embedscan: decide whether a stochastic matrix is e^Q for a rate matrix Q,
//! list every generator, and report rate identifiability.
//!
//! Exit codes: 0 embeddable (or census/bounds ok), 1 not embeddable,
//! 2 input error, 3 unsupported input (e.g. repeated eigenvalues at n >= 5).

use std::io::Read;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DMatrix;
use serde::Deserialize;

use embedscan_core::error::EmbedError;
use embedscan_core::matrix::BranchTag;
use embedscan_core::report::EmbeddabilityReport;
use embedscan_core::sampler::{run_census, CensusConfig, SetTally};
use embedscan_core::{
    solve, table1_threshold, IdentifiabilityClass, StochasticMatrix, ToleranceConfig,
};

#[derive(Parser)]
#[command(
    name = "embedscan",
    version,
    about = "Embeddability of stochastic matrices: generators and identifiability"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Decide embeddability of one matrix and enumerate its generators
    Check(CheckArgs),
    /// Monte-Carlo census over uniformly sampled 4x4 stochastic matrices
    Sample(SampleArgs),
    /// Print the determinant threshold that forces a unique generator
    Bounds {
        /// Matrix dimension (n >= 3)
        #[arg(long)]
        n: usize,
    },
}

#[derive(Args)]
struct CheckArgs {
    /// Input file, or - for stdin
    file: String,
    /// Input format; default: json for .json files, csv otherwise
    #[arg(long, value_enum)]
    format: Option<InputFormat>,
    /// Tolerance scale (default 1e-8; EMBEDSCAN_TOL env is the fallback)
    #[arg(long)]
    tol: Option<f64>,
    /// Print every generator matrix (infinite families: one representative
    /// per winding, marked as such)
    #[arg(long)]
    all_generators: bool,
    /// Emit the full report as JSON
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct SampleArgs {
    /// Number of samples
    #[arg(long)]
    n: usize,
    /// RNG seed; identical seeds reproduce the census bit-exactly
    #[arg(long)]
    seed: u64,
    /// Tolerance scale (default 1e-8; EMBEDSCAN_TOL env is the fallback)
    #[arg(long)]
    tol: Option<f64>,
    /// Emit the census result as JSON
    #[arg(long)]
    json: bool,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum InputFormat {
    Csv,
    Json,
}

/// Restore the default SIGPIPE disposition so a closed pipe (e.g. piping into
/// `head`) terminates the process quietly instead of panicking on EPIPE.
#[cfg(unix)]
fn reset_sigpipe() {
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
}

#[cfg(not(unix))]
fn reset_sigpipe() {}

fn main() -> ExitCode {
    reset_sigpipe();
    let cli = Cli::parse();
    let code = match cli.command {
        Cmd::Check(args) => check_cmd(&args),
        Cmd::Sample(args) => sample_cmd(&args),
        Cmd::Bounds { n } => bounds_cmd(n),
    };
    ExitCode::from(code)
}

/// Exit code for a library error: 2 when the input itself is malformed,
/// 3 when the input is valid but outside what the solver supports.
fn exit_code_for(e: &EmbedError) -> u8 {
    use EmbedError::*;
    match e {
        NotSquare { .. } | TooSmall { .. } | NegativeEntry { .. } | RowSumViolation { .. }
        | Parse { .. } | BadTolerance(_) => 2,
        _ => 3,
    }
}

fn resolve_tol(flag: Option<f64>) -> Result<ToleranceConfig, String> {
    let eps = match flag {
        Some(e) => Some(e),
        None => match std::env::var("EMBEDSCAN_TOL") {
            Ok(s) => Some(
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| format!("EMBEDSCAN_TOL is not a number: {s:?}"))?,
            ),
            Err(_) => None,
        },
    };
    let tol = match eps {
        Some(e) => ToleranceConfig::with_scale(e),
        None => ToleranceConfig::default(),
    };
    tol.validate().map_err(|e| e.to_string())?;
    Ok(tol)
}

fn read_input(path: &str) -> Result<String, String> {
    if path == "-" {
        let mut buf = String::new();
        std::io::stdin()
            .read_to_string(&mut buf)
            .map_err(|e| format!("reading stdin: {e}"))?;
        Ok(buf)
    } else {
        std::fs::read_to_string(path).map_err(|e| format!("reading {path}: {e}"))
    }
}

fn infer_format(path: &str, flag: Option<InputFormat>) -> InputFormat {
    flag.unwrap_or_else(|| {
        if path.to_ascii_lowercase().ends_with(".json") {
            InputFormat::Json
        } else {
            InputFormat::Csv
        }
    })
}

fn rows_to_matrix(rows: Vec<Vec<f64>>) -> Result<DMatrix<f64>, EmbedError> {
    if rows.is_empty() {
        return Err(EmbedError::Parse {
            line: 1,
            detail: "empty matrix".to_string(),
        });
    }
    let width = rows[0].len();
    for (i, r) in rows.iter().enumerate() {
        if r.len() != width {
            return Err(EmbedError::Parse {
                line: i + 1,
                detail: format!("expected {width} fields, found {}", r.len()),
            });
        }
    }
    Ok(DMatrix::from_fn(rows.len(), width, |i, j| rows[i][j]))
}

fn parse_csv(text: &str) -> Result<DMatrix<f64>, EmbedError> {
    let mut rows = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut row = Vec::new();
        for field in line.split(',') {
            let field = field.trim();
            let v: f64 = field.parse().map_err(|_| EmbedError::Parse {
                line: idx + 1,
                detail: format!("not a number: {field:?}"),
            })?;
            row.push(v);
        }
        rows.push(row);
    }
    rows_to_matrix(rows)
}

#[derive(Deserialize)]
struct MatrixInput {
    matrix: Vec<Vec<f64>>,
}

fn parse_json(text: &str) -> Result<DMatrix<f64>, EmbedError> {
    let input: MatrixInput = serde_json::from_str(text).map_err(|e| EmbedError::Parse {
        line: e.line(),
        detail: e.to_string(),
    })?;
    rows_to_matrix(input.matrix)
}

fn parse_matrix(text: &str, format: InputFormat) -> Result<DMatrix<f64>, EmbedError> {
    match format {
        InputFormat::Csv => parse_csv(text),
        InputFormat::Json => parse_json(text),
    }
}

/// %g-style formatting with six significant digits for human output.
fn sig6(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let a = x.abs();
    if (1e-4..1e7).contains(&a) {
        let decimals = (5 - a.log10().floor() as i32).max(0) as usize;
        format!("{x:.decimals$}")
    } else {
        format!("{x:.5e}")
    }
}

fn branch_desc(b: &BranchTag) -> String {
    match b {
        BranchTag::Principal => "principal log".to_string(),
        BranchTag::DistinctBranch(ks) => format!("branch k = {ks:?}"),
        BranchTag::Case2Branch(k) => format!("winding k = {k}"),
        BranchTag::Case3Point { k, x, y, z } => {
            format!(
                "winding k = {k}, sheet point ({}, {}, {})",
                sig6(*x),
                sig6(*y),
                sig6(*z)
            )
        }
        BranchTag::Defective => "jordan log".to_string(),
    }
}

fn identifiability_desc(c: &IdentifiabilityClass) -> String {
    match c {
        IdentifiabilityClass::NotEmbeddable => "not embeddable".to_string(),
        IdentifiabilityClass::UniqueGenerator => "unique generator".to_string(),
        IdentifiabilityClass::FiniteCount(m) => format!("finitely many generators ({m})"),
        IdentifiabilityClass::InfiniteFamily => "infinite family of generators".to_string(),
        IdentifiabilityClass::UnknownAtLeastOne => {
            "at least one generator; count not certified".to_string()
        }
    }
}

fn print_rows(rows: &[Vec<f64>], indent: &str) {
    for r in rows {
        let cells: Vec<String> = r.iter().map(|&v| format!("{:>13}", sig6(v))).collect();
        println!("{indent}{}", cells.join(" "));
    }
}

fn print_human(r: &EmbeddabilityReport, all_generators: bool) {
    println!("matrix: {} x {}, det {}", r.n, r.n, sig6(r.det));
    println!("case: {}", r.case);
    println!("embeddable: {}", if r.embeddable { "yes" } else { "no" });
    if let Some(reason) = &r.not_embeddable_reason {
        println!("reason: {reason}");
    }
    println!("identifiability: {}", identifiability_desc(&r.identifiability));
    if !r.identifiability_basis.is_empty() {
        println!("certificates: {}", r.identifiability_basis.join(", "));
    }
    if let Some(b) = &r.bounds {
        if let Some(t) = b.table1_threshold {
            println!(
                "determinant threshold for uniqueness: {} ({})",
                sig6(t),
                if b.det_shortcut { "above: unique" } else { "below" }
            );
        }
        if let Some(cb) = &b.count_bound {
            println!("generator count bound: {cb}");
        }
    }
    if let Some(c2) = &r.case2 {
        println!("winding interval: k in [{}, {}]", c2.k_lo, c2.k_hi);
        if !c2.blocked.is_empty() {
            println!("structurally blocked transitions: {:?}", c2.blocked);
        }
    }
    if let Some(c3) = &r.case3 {
        println!("windings k in [{}, {}]:", c3.k_lo, c3.k_hi);
        for w in &c3.windings {
            println!("  k = {} (theta {}): {}", w.k, sig6(w.theta), w.cardinality);
            if all_generators {
                for p in &w.points {
                    println!("    point ({}, {}, {})", sig6(p[0]), sig6(p[1]), sig6(p[2]));
                }
                if let Some(p) = &w.representative {
                    println!(
                        "    representative ({}, {}, {}) of an infinite family; \
                         listing is not exhaustive",
                        sig6(p[0]),
                        sig6(p[1]),
                        sig6(p[2])
                    );
                }
            }
        }
    }
    if r.generators.is_empty() {
        println!("generators: none");
    } else {
        println!("generators ({}):", r.generators.len());
        for (i, g) in r.generators.iter().enumerate() {
            println!(
                "  [{}] {}, exp residual {}",
                i + 1,
                branch_desc(&g.branch),
                sig6(g.exp_residual)
            );
            if all_generators {
                print_rows(&g.matrix, "      ");
            }
        }
        if !all_generators {
            println!("(--all-generators prints the matrices)");
        }
    }
    if let Some(c) = r.diagnostics.condition_number {
        println!("eigenbasis condition number: {}", sig6(c));
    }
    for w in &r.warnings {
        println!("warning: {w}");
    }
}

fn check_cmd(args: &CheckArgs) -> u8 {
    let tol = match resolve_tol(args.tol) {
        Ok(t) => t,
        Err(msg) => {
            eprintln!("error: {msg}");
            return 2;
        }
    };
    let text = match read_input(&args.file) {
        Ok(t) => t,
        Err(msg) => {
            eprintln!("error: {msg}");
            return 2;
        }
    };
    let raw = match parse_matrix(&text, infer_format(&args.file, args.format)) {
        Ok(m) => m,
        Err(e) => {
            eprintln!("error: {e}");
            return exit_code_for(&e);
        }
    };
    let m = match StochasticMatrix::validate_markov(&raw, &tol) {
        Ok(m) => m,
        Err(e) => {
            eprintln!("error: {e}");
            return exit_code_for(&e);
        }
    };
    let out = match solve(&m, &tol) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return exit_code_for(&e);
        }
    };
    let report = EmbeddabilityReport::from_outcome(&m, &out, &tol);
    if args.json {
        println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
    } else {
        print_human(&report, args.all_generators);
    }
    u8::from(!report.embeddable)
}

fn tally_line(name: &str, t: &SetTally) -> String {
    format!(
        "{name:<22} {:>9} members {:>9} embeddable  fraction {}",
        t.members,
        t.embeddable,
        sig6(t.fraction())
    )
}

fn sample_cmd(args: &SampleArgs) -> u8 {
    let tol = match resolve_tol(args.tol) {
        Ok(t) => t,
        Err(msg) => {
            eprintln!("error: {msg}");
            return 2;
        }
    };
    let cfg = CensusConfig {
        sample_count: args.n,
        seed: args.seed,
        tol,
    };
    let res = match run_census(&cfg) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return exit_code_for(&e);
        }
    };
    if args.json {
        println!("{}", serde_json::to_string_pretty(&res).expect("census serializes"));
    } else {
        println!(
            "census: {} samples, seed {}, rng {}",
            res.sample_count, res.seed, res.rng_scheme
        );
        println!("{}", tally_line("all sampled", &res.delta));
        println!("{}", tally_line("positive determinant", &res.delta_id));
        println!("{}", tally_line("diag largest in column", &res.delta_dlc));
        println!("{}", tally_line("diagonally dominant", &res.delta_dd));
        println!("max exp residual: {}", sig6(res.max_exp_residual));
        println!("re-verification failures: {}", res.reverify_failures);
        println!("solver errors: {}", res.solver_errors);
        println!("runtime: {} s", sig6(res.runtime_seconds));
    }
    0
}

fn bounds_cmd(n: usize) -> u8 {
    match table1_threshold(n) {
        Ok(t) => {
            println!("{t:.6}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_and_ragged() {
        let m = parse_csv("1,0\n0,1\n").unwrap();
        assert_eq!(m, DMatrix::identity(2, 2));
        let err = parse_csv("1,0\n0,1,0\n").unwrap_err();
        assert!(matches!(err, EmbedError::Parse { line: 2, .. }));
        let err = parse_csv("1,zero\n0,1\n").unwrap_err();
        assert!(matches!(err, EmbedError::Parse { line: 1, .. }));
    }

    #[test]
    fn json_input_parses() {
        let m = parse_json(r#"{"matrix": [[0.9, 0.1], [0.2, 0.8]]}"#).unwrap();
        assert_eq!(m[(0, 0)], 0.9);
        assert!(parse_json(r#"{"matrix": [[1.0], [0.5, 0.5]]}"#).is_err());
        assert!(parse_json("not json").is_err());
    }

    #[test]
    fn sig6_formats() {
        assert_eq!(sig6(0.0), "0");
        assert_eq!(sig6(3.141592653589793), "3.14159");
        assert_eq!(sig6(0.001867), "0.00186700");
        assert_eq!(sig6(1.23456789e-9), "1.23457e-9");
        assert_eq!(sig6(-2.0), "-2.00000");
    }

    #[test]
    fn format_inference() {
        assert!(matches!(infer_format("m.json", None), InputFormat::Json));
        assert!(matches!(infer_format("m.csv", None), InputFormat::Csv));
        assert!(matches!(infer_format("-", None), InputFormat::Csv));
        assert!(matches!(
            infer_format("m.json", Some(InputFormat::Csv)),
            InputFormat::Csv
        ));
    }
}
