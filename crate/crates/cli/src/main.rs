use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use tnfactor::circuit::bit_length;
use tnfactor::experiments::{run_compression_study, run_timing_study, summarize, write_csv_file, BitSummary};
use tnfactor::network::{Fault, TensorKind};
use tnfactor::tt::r_max;
use tnfactor::{
    build_network, factorize_with, run_selftest, verify, BitOrder, Error, FactorOptions, Mode, Scheme, SelfTestConfig,
    StudyConfig,
};

const EXIT_DEGENERATE: u8 = 2;
const EXIT_INCORRECT: u8 = 3;
const EXIT_USAGE: u8 = 64;
const EXIT_IO: u8 = 74;

/// Factor odd semiprimes by contracting a multiplier tensor network.
#[derive(Parser, Debug)]
#[command(name = "tnfactor", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Recover p and q for one modulus, bit by bit.
    Factor(FactorArgs),
    /// Exact factorization of seeded instance sets, with timings, as CSV.
    Timing(StudyArgs),
    /// Minimum bond dimension and bit-flip error study, as CSV.
    Compression(CompressionArgs),
    /// Check the network against the integer multiplier and the readout invariants.
    Selftest(SelftestArgs),
    /// Print the network built for a modulus.
    DumpNetwork(DumpArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SchemeArg {
    BottomUp,
    LeftRight,
}

impl From<SchemeArg> for Scheme {
    fn from(s: SchemeArg) -> Self {
        match s {
            SchemeArg::BottomUp => Scheme::BottomUp,
            SchemeArg::LeftRight => Scheme::LeftRight,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModeArg {
    Exact,
    Approx,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum OrderArg {
    Lsb,
    Msb,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Switch {
    On,
    Off,
}

#[derive(Args, Debug)]
struct FactorArgs {
    /// Positive integer to factor.
    #[arg(value_parser = clap::value_parser!(u64).range(1..))]
    modulus: u64,
    /// Contraction order.
    #[arg(long, value_enum, default_value = "bottom-up")]
    scheme: SchemeArg,
    /// Exact integer contraction or tensor-train boundary.
    #[arg(long, value_enum, default_value = "exact")]
    mode: ModeArg,
    /// Bond cap for approximate mode; defaults to the full-rank bound.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    chi: Option<u64>,
    /// Order in which bits of p are read out.
    #[arg(long, value_enum, default_value = "lsb")]
    order: OrderArg,
    /// Project already recovered bits onto their values.
    #[arg(long, value_enum, default_value = "on")]
    enforce: Switch,
    /// Round the boundary after every site instead of every row or column.
    #[arg(long)]
    round_per_site: bool,
    /// Print the result as JSON.
    #[arg(long)]
    json: bool,
}

#[derive(Args, Debug)]
struct StudyArgs {
    /// Smallest modulus width in bits.
    #[arg(long, default_value_t = 8)]
    min_bits: u32,
    /// Largest modulus width in bits.
    #[arg(long, default_value_t = 14)]
    max_bits: u32,
    /// Instances per width.
    #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u64).range(1..))]
    count: u64,
    /// Seed for instance sampling, recorded in the CSV header.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Contraction order.
    #[arg(long, value_enum, default_value = "bottom-up")]
    scheme: SchemeArg,
    /// Worker threads.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    jobs: u64,
    /// CSV output path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct CompressionArgs {
    #[command(flatten)]
    study: StudyArgs,
    /// Round the boundary after every site instead of every row or column.
    #[arg(long)]
    round_per_site: bool,
}

#[derive(Args, Debug)]
struct SelftestArgs {
    /// Widest modulus checked exhaustively (4 to 10).
    #[arg(long, default_value_t = 8, value_parser = clap::value_parser!(u32).range(4..=10))]
    max_bits: u32,
    /// Corrupt one entry of every cell of a kind, as KIND:i,j,...
    #[arg(long, hide = true, value_parser = parse_fault)]
    inject_fault: Option<Fault>,
}

#[derive(Args, Debug)]
struct DumpArgs {
    /// Odd modulus of at least 9.
    modulus: u64,
    /// Readout position; the other bits of p are summed over.
    #[arg(long, default_value_t = 0)]
    bit: usize,
    /// Emit JSON instead of one line per cell.
    #[arg(long)]
    json: bool,
}

fn parse_fault(s: &str) -> Result<Fault, String> {
    const KINDS: [TensorKind; 10] = [
        TensorKind::ZInit,
        TensorKind::ZMid,
        TensorKind::ZLast,
        TensorKind::TInit,
        TensorKind::SMid,
        TensorKind::KLast,
        TensorKind::SSaturation,
        TensorKind::RPost,
        TensorKind::FFinal,
        TensorKind::SatFinal,
    ];
    let (name, index) = s.split_once(':').ok_or("expected KIND:i,j,...")?;
    let kind = KINDS
        .into_iter()
        .find(|k| format!("{k:?}") == name)
        .ok_or_else(|| format!("unknown cell kind {name:?}"))?;
    let index = index
        .split(',')
        .map(|x| x.trim().parse::<usize>().map_err(|e| e.to_string()))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Fault { kind, index })
}

/// Maps engine errors onto exit codes.
fn error_code(e: &Error) -> u8 {
    match e {
        Error::Input(_) => EXIT_USAGE,
        Error::Degeneracy { .. } | Error::NoFactor(_) => EXIT_DEGENERATE,
        Error::Io(_) => EXIT_IO,
        _ => 1,
    }
}

fn fail(e: anyhow::Error) -> ExitCode {
    eprintln!("error: {e:#}");
    let code = e.downcast_ref::<Error>().map_or(1, error_code);
    ExitCode::from(code)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.command {
        Command::Factor(args) => cmd_factor(&args),
        Command::Timing(args) => cmd_study(&args, false, false),
        Command::Compression(args) => cmd_study(&args.study, true, args.round_per_site),
        Command::Selftest(args) => cmd_selftest(args),
        Command::DumpNetwork(args) => cmd_dump(&args),
    };
    result.unwrap_or_else(fail)
}

fn cmd_factor(args: &FactorArgs) -> anyhow::Result<ExitCode> {
    let n = args.modulus;
    if n.is_multiple_of(2) {
        if n == 2 {
            println!("2 is prime");
            return Ok(ExitCode::from(EXIT_DEGENERATE));
        }
        println!("N = {n} is even: p = {} q = 2", n / 2);
        println!("note: even numbers factor trivially as 2 * N/2; no contraction was run");
        return Ok(ExitCode::SUCCESS);
    }
    if n < 9 {
        println!("N = {n} has no factorization into two odd primes");
        return Ok(ExitCode::from(EXIT_DEGENERATE));
    }
    let scheme = Scheme::from(args.scheme);
    let mode = match args.mode {
        ModeArg::Exact => {
            if args.chi.is_some() {
                return Err(Error::Input("--chi only applies to --mode approx".into()).into());
            }
            Mode::Exact
        }
        ModeArg::Approx => {
            let chi = args.chi.map_or_else(|| r_max(bit_length(n), scheme), |c| c as usize);
            Mode::Approx(chi)
        }
    };
    let mut opts = FactorOptions::new(scheme, mode);
    opts.order = match args.order {
        OrderArg::Lsb => BitOrder::Lsb,
        OrderArg::Msb => BitOrder::Msb,
    };
    opts.enforce = matches!(args.enforce, Switch::On);
    opts.approx.round_per_site = args.round_per_site;
    let r = factorize_with(n, &opts)?;
    let ok = verify(&r);
    if args.json {
        println!("{}", serde_json::to_string_pretty(&r)?);
    } else {
        println!("N = {}  scheme = {}  mode = {}", r.modulus, r.scheme, r.mode);
        println!("{:>4} {:>24} {:>4}", "k", "omega", "bit");
        for b in &r.bits {
            let bit = b.bit.map_or_else(|| "?".to_string(), |x| x.to_string());
            println!("{:>4} {:>24} {:>4}", b.k, format!("{}", b.omega), bit);
        }
        println!("p = {}  q = {}", r.p, r.q);
        println!("t_total = {:.6} s  t_contraction = {:.6} s", r.t_total, r.t_contraction);
        println!("{}", if ok { "verified" } else { "NOT a valid factorization" });
    }
    Ok(ExitCode::from(if ok { 0 } else { EXIT_INCORRECT }))
}

fn cmd_study(args: &StudyArgs, compression: bool, round_per_site: bool) -> anyhow::Result<ExitCode> {
    let mut config = StudyConfig::new(
        args.min_bits,
        args.max_bits,
        args.count as usize,
        args.seed,
        args.scheme.into(),
    );
    config.jobs = args.jobs as usize;
    config.round_per_site = round_per_site;
    // fail on an unwritable path before spending time on the study
    std::fs::File::create(&args.out)
        .map_err(|e| Error::Io(format!("{}: {e}", args.out.display())))
        .with_context(|| "cannot open output file")?;
    let records = if compression {
        run_compression_study(&config)?
    } else {
        run_timing_study(&config)?
    };
    write_csv_file(&args.out, args.seed, &records)?;
    print_summary(&summarize(&records), compression);
    println!("wrote {} records to {}", records.len(), args.out.display());
    Ok(ExitCode::SUCCESS)
}

fn print_summary(rows: &[BitSummary], compression: bool) {
    let opt = |x: Option<f64>| x.map_or_else(|| "-".to_string(), |v| format!("{v:.4}"));
    let mut out = std::io::stdout().lock();
    let _ = if compression {
        writeln!(
            out,
            "{:>3} {:>8} {:>8} {:>12}",
            "n", "records", "correct", "mean_chi_min"
        )
    } else {
        writeln!(
            out,
            "{:>3} {:>8} {:>8} {:>12} {:>12}",
            "n", "records", "correct", "mean_t_total", "mean_t_contr"
        )
    };
    for r in rows {
        let _ = if compression {
            writeln!(
                out,
                "{:>3} {:>8} {:>8} {:>12}",
                r.n,
                r.records,
                r.correct,
                opt(r.mean_chi_min)
            )
        } else {
            writeln!(
                out,
                "{:>3} {:>8} {:>8} {:>12} {:>12}",
                r.n,
                r.records,
                r.correct,
                opt(r.mean_t_total),
                opt(r.mean_t_contraction)
            )
        };
    }
}

fn cmd_selftest(args: SelftestArgs) -> anyhow::Result<ExitCode> {
    let config = SelfTestConfig {
        max_bits: args.max_bits,
        fault: args.inject_fault,
    };
    let report = run_selftest(&config)?;
    print!("{report}");
    Ok(if report.passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

fn cmd_dump(args: &DumpArgs) -> anyhow::Result<ExitCode> {
    let net = build_network(args.modulus, &Default::default(), args.bit)?;
    if args.json {
        println!("{}", net.dump_json());
    } else {
        print!("{}", net.dump_text());
    }
    Ok(ExitCode::SUCCESS)
}
