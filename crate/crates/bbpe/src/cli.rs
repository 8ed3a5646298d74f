//! The `bbpe` command-line surface.
//!
//! Exit codes: 0 success, 1 usage error, 2 input/ingest error,
//! 3 invariant/verification failure. All diagnostics go to standard error;
//! machine-readable results go to standard output.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use crate::analysis;
use crate::bench;
use crate::codec::{self, SpecialsPolicy};
use crate::corpus::{self, TrainingConfig};
use crate::error::{BbpeError, Result};
use crate::serialization;
use crate::trainer;
use crate::vocab::{self, Provenance};

#[derive(Parser, Debug)]
#[command(
    name = "bbpe",
    version,
    about = "Byte-level BPE toolkit for binary executables"
)]
struct Cli {
    /// Increase verbosity (-v, -vv)
    #[arg(short = 'v', long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    /// Decrease verbosity
    #[arg(short = 'q', long, global = true, action = clap::ArgAction::Count)]
    quiet: u8,

    /// Worker threads (default: available cores, or BBPE_THREADS)
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a nested tokenizer family from a manifest of binaries
    Train(TrainArgs),
    /// Encode a file into a token stream
    Encode(EncodeArgs),
    /// Decode a token stream back into bytes
    Decode(DecodeArgs),
    /// Vocabulary-structure statistics for a tokenizer or family
    Analyze(AnalyzeArgs),
    /// Bytes-per-token benchmark over a manifest
    Bench(BenchArgs),
    /// Check the nested-prefix property of a family directory
    VerifyFamily(VerifyFamilyArgs),
    /// Side-by-side tokenization of an input prefix under two tokenizers
    Inspect(InspectArgs),
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// Manifest of input files (JSON lines)
    #[arg(long, value_name = "FILE")]
    manifest: PathBuf,

    /// Output directory for the family
    #[arg(long, value_name = "DIR")]
    out: PathBuf,

    /// Target total vocabulary sizes, ascending
    #[arg(
        long,
        value_name = "N,N,...",
        value_delimiter = ',',
        conflicts_with = "seed_sizes"
    )]
    sizes: Option<Vec<usize>>,

    /// Shortcut for a tiny desk-scale family (320, 512, 1024)
    #[arg(long)]
    seed_sizes: bool,

    /// Chunk size in bytes
    #[arg(long, value_name = "BYTES")]
    chunk_size: Option<usize>,

    /// Maximum chunk entropy retained for training, bits per byte
    #[arg(long, value_name = "BITS")]
    entropy_threshold: Option<f64>,

    /// Longest learned token, bytes
    #[arg(long, value_name = "BYTES")]
    max_token_len: Option<usize>,

    /// Minimum pair frequency for a merge
    #[arg(long, value_name = "COUNT")]
    min_pair_frequency: Option<u64>,

    /// File name prefix for family members
    #[arg(long, value_name = "NAME", default_value = "bbpe")]
    prefix: String,
}

#[derive(Args, Debug)]
struct EncodeArgs {
    /// Tokenizer document
    #[arg(long, value_name = "FILE")]
    tokenizer: PathBuf,

    /// Input file
    #[arg(long = "in", value_name = "FILE")]
    input: PathBuf,

    /// Output path (`-` for standard output)
    #[arg(long, value_name = "FILE")]
    out: PathBuf,

    /// Write one token id per line instead of the binary stream
    #[arg(long)]
    text: bool,
}

#[derive(Args, Debug)]
struct DecodeArgs {
    /// Tokenizer document
    #[arg(long, value_name = "FILE")]
    tokenizer: PathBuf,

    /// Input token stream
    #[arg(long = "in", value_name = "FILE")]
    input: PathBuf,

    /// Output path (`-` for standard output)
    #[arg(long, value_name = "FILE")]
    out: PathBuf,

    /// Input is one token id per line
    #[arg(long)]
    text: bool,

    /// What to do with special ids
    #[arg(long, value_enum, default_value_t = SpecialsCli::Error)]
    specials: SpecialsCli,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SpecialsCli {
    Skip,
    Error,
}

impl From<SpecialsCli> for SpecialsPolicy {
    fn from(value: SpecialsCli) -> Self {
        match value {
            SpecialsCli::Skip => SpecialsPolicy::Skip,
            SpecialsCli::Error => SpecialsPolicy::Error,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OutputFormat {
    Text,
    Json,
    Csv,
}

#[derive(Args, Debug)]
struct AnalyzeArgs {
    /// Tokenizer document to analyze
    #[arg(long, value_name = "FILE", conflicts_with = "family")]
    tokenizer: Option<PathBuf>,

    /// Family directory: emit the per-member scaling summary instead
    #[arg(long, value_name = "DIR")]
    family: Option<PathBuf>,

    /// Include special tokens in the length histogram as well
    #[arg(long)]
    include_specials: bool,

    #[arg(long, value_enum, default_value_t = OutputFormat::Text)]
    format: OutputFormat,
}

#[derive(Args, Debug)]
struct BenchArgs {
    /// Manifest of files to benchmark
    #[arg(long, value_name = "FILE")]
    manifest: PathBuf,

    /// Family directory supplying the members
    #[arg(long, value_name = "DIR", conflicts_with = "tokenizer")]
    family: Option<PathBuf>,

    /// Individual tokenizer document (repeatable)
    #[arg(long, value_name = "FILE")]
    tokenizer: Vec<PathBuf>,

    /// Context window size for the derived coverage column
    #[arg(long, value_name = "TOKENS", default_value_t = 8192)]
    window_tokens: u64,

    /// Compare two members by label, e.g. `--compare 32768,65536`
    #[arg(long, value_name = "A,B", value_delimiter = ',', num_args = 2)]
    compare: Option<Vec<String>>,

    #[arg(long, value_enum, default_value_t = OutputFormat::Text)]
    format: OutputFormat,
}

#[derive(Args, Debug)]
struct VerifyFamilyArgs {
    /// Family directory
    #[arg(value_name = "DIR")]
    dir: PathBuf,

    #[arg(long, value_enum, default_value_t = OutputFormat::Text)]
    format: OutputFormat,
}

#[derive(Args, Debug)]
struct InspectArgs {
    /// Tokenizer documents (exactly two)
    #[arg(long, value_name = "FILE", num_args = 1, action = clap::ArgAction::Append)]
    tokenizer: Vec<PathBuf>,

    /// Input file
    #[arg(long = "in", value_name = "FILE")]
    input: PathBuf,

    /// Byte prefix to cover
    #[arg(long, value_name = "BYTES", default_value_t = 32)]
    limit: usize,

    #[arg(long, value_enum, default_value_t = OutputFormat::Text)]
    format: OutputFormat,
}

/// Parses arguments, runs one command, and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };

    init_logging(cli.verbose, cli.quiet);
    if let Some(threads) = cli.threads.or_else(threads_from_env) {
        // Ignore failure: the global pool can only be sized once per process.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }

    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn threads_from_env() -> Option<usize> {
    std::env::var("BBPE_THREADS").ok()?.parse().ok()
}

fn init_logging(verbose: u8, quiet: u8) {
    let level = match verbose as i8 - quiet as i8 {
        i8::MIN..=-1 => log::LevelFilter::Error,
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .format_timestamp(None)
        .try_init();
}

fn dispatch(command: Command) -> Result<i32> {
    match command {
        Command::Train(args) => cmd_train(args),
        Command::Encode(args) => cmd_encode(args),
        Command::Decode(args) => cmd_decode(args),
        Command::Analyze(args) => cmd_analyze(args),
        Command::Bench(args) => cmd_bench(args),
        Command::VerifyFamily(args) => cmd_verify_family(args),
        Command::Inspect(args) => cmd_inspect(args),
    }
}

fn cmd_train(args: TrainArgs) -> Result<i32> {
    let mut config = TrainingConfig::default();
    if args.seed_sizes {
        config.target_vocab_sizes = vec![320, 512, 1024];
    }
    if let Some(sizes) = args.sizes {
        config.target_vocab_sizes = sizes;
    }
    if let Some(chunk_size) = args.chunk_size {
        config.chunk_size = chunk_size;
    }
    if let Some(threshold) = args.entropy_threshold {
        config.entropy_threshold = threshold;
    }
    if let Some(max_token_len) = args.max_token_len {
        config.max_token_len = max_token_len;
    }
    if let Some(min_pair_frequency) = args.min_pair_frequency {
        config.min_pair_frequency = min_pair_frequency;
    }
    config.validate()?;

    let entries = corpus::load_manifest(&args.manifest)?;
    let corpus_digest = corpus::manifest_digest(&args.manifest)?;
    info!("manifest lists {} file(s)", entries.len());
    let (chunks, ingest_summary) = corpus::ingest(&entries, &config)?;
    info!(
        "retained {} of {} chunks ({} of {} bytes)",
        ingest_summary.chunks - ingest_summary.chunks_filtered,
        ingest_summary.chunks,
        ingest_summary.bytes_retained,
        ingest_summary.bytes_total
    );

    let output = trainer::train(&chunks, &config)?;
    let provenance = Provenance {
        config_digest: config.digest(),
        corpus_digest,
    };
    let family = vocab::slice_family(&output.vocabulary, &config.target_vocab_sizes, provenance)?;
    let index = serialization::save_family(&family, &args.out, &args.prefix)?;

    let run_summary = serde_json::json!({
        "tool_version": crate::VERSION,
        "ingest": ingest_summary,
        "training": output.summary,
        "family": {
            "dir": args.out.display().to_string(),
            "prefix": index.prefix,
            "members": index.members,
            "provenance": index.provenance,
        },
    });
    println!("{}", serde_json::to_string_pretty(&run_summary)?);
    Ok(0)
}

fn write_output(path: &Path, bytes: &[u8]) -> Result<()> {
    if path.as_os_str() == "-" {
        std::io::stdout().write_all(bytes)?;
        Ok(())
    } else {
        fs::write(path, bytes)?;
        Ok(())
    }
}

fn read_input(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| BbpeError::Ingest {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

fn cmd_encode(args: EncodeArgs) -> Result<i32> {
    let vocab = serialization::load_tokenizer(&args.tokenizer)?;
    let data = read_input(&args.input)?;
    let encoded = codec::encode(&data, &vocab);
    info!(
        "encoded {} bytes into {} tokens",
        encoded.source_len,
        encoded.ids.len()
    );
    if args.text {
        let mut out = String::with_capacity(encoded.ids.len() * 6);
        for id in &encoded.ids {
            out.push_str(&id.to_string());
            out.push('\n');
        }
        write_output(&args.out, out.as_bytes())?;
    } else {
        let mut buffer = Vec::with_capacity(16 + encoded.ids.len() * 2);
        codec::write_token_stream(&mut buffer, &encoded.ids, &vocab)?;
        write_output(&args.out, &buffer)?;
    }
    Ok(0)
}

fn cmd_decode(args: DecodeArgs) -> Result<i32> {
    let vocab = serialization::load_tokenizer(&args.tokenizer)?;
    let data = read_input(&args.input)?;
    let ids: Vec<trainer::TokenId> = if args.text {
        let text = String::from_utf8(data)
            .map_err(|_| BbpeError::Codec("text token stream is not UTF-8".to_string()))?;
        text.lines()
            .filter(|line| !line.trim().is_empty())
            .map(|line| {
                line.trim()
                    .parse()
                    .map_err(|_| BbpeError::Codec(format!("invalid token id {line:?}")))
            })
            .collect::<Result<_>>()?
    } else {
        let (header, ids) = codec::read_token_stream(&mut data.as_slice())?;
        codec::check_stream_vocab(&header, &vocab)?;
        ids
    };
    let bytes = codec::decode(&ids, &vocab, args.specials.into())?;
    write_output(&args.out, &bytes)?;
    Ok(0)
}

fn cmd_analyze(args: AnalyzeArgs) -> Result<i32> {
    match (&args.tokenizer, &args.family) {
        (Some(tokenizer), None) => {
            let vocab = serialization::load_tokenizer(tokenizer)?;
            let lengths = analysis::length_distribution(&vocab, args.include_specials);
            // Length tables conventionally exclude specials; category tables
            // include them.
            let categories = analysis::category_breakdown(&vocab, true);
            match args.format {
                OutputFormat::Text => {
                    print!("{}", lengths.render_text());
                    println!();
                    print!("{}", categories.render_text());
                }
                OutputFormat::Json => {
                    let doc = serde_json::json!({
                        "total_size": vocab.total_size(),
                        "length_distribution": lengths,
                        "categories": categories,
                        "categories_without_specials":
                            analysis::category_breakdown(&vocab, false),
                    });
                    println!("{}", serde_json::to_string_pretty(&doc)?);
                }
                OutputFormat::Csv => {
                    println!("length,count");
                    for (len, count) in &lengths.counts {
                        println!("{len},{count}");
                    }
                }
            }
            Ok(0)
        }
        (None, Some(family_dir)) => {
            let (family, _) = serialization::load_family(family_dir)?;
            let rows = analysis::scaling_summary(&family);
            match args.format {
                OutputFormat::Text => print!("{}", analysis::render_scaling_text(&rows)),
                OutputFormat::Json => println!("{}", serde_json::to_string_pretty(&rows)?),
                OutputFormat::Csv => {
                    println!(
                        "vocab_size,avg_token_len,two_byte_coverage,three_byte_share,\
                         high_byte_share,ascii_only_share"
                    );
                    for row in rows {
                        println!(
                            "{},{:.6},{:.6},{:.6},{:.6},{:.6}",
                            row.vocab_size,
                            row.avg_token_len,
                            row.two_byte_coverage,
                            row.three_byte_share,
                            row.high_byte_share,
                            row.ascii_only_share
                        );
                    }
                }
            }
            Ok(0)
        }
        _ => Err(BbpeError::Usage(
            "analyze needs exactly one of --tokenizer or --family".to_string(),
        )),
    }
}

fn cmd_bench(args: BenchArgs) -> Result<i32> {
    let entries = corpus::load_manifest(&args.manifest)?;
    let members: Vec<crate::vocab::Vocabulary> = match (&args.family, &args.tokenizer[..]) {
        (Some(dir), []) => serialization::load_family(dir)?.0.members,
        (None, paths) if !paths.is_empty() => paths
            .iter()
            .map(|p| serialization::load_tokenizer(p))
            .collect::<Result<_>>()?,
        _ => {
            return Err(BbpeError::Usage(
                "bench needs --family or at least one --tokenizer".to_string(),
            ))
        }
    };
    let refs: Vec<&crate::vocab::Vocabulary> = members.iter().collect();
    let report = bench::bench_files(&entries, &refs, args.window_tokens)?;

    let comparison = match &args.compare {
        Some(pair) => Some(bench::compare_members(&report, &pair[0], &pair[1])?),
        None if report.member_labels.len() >= 2 => {
            let a = &report.member_labels[report.member_labels.len() - 2];
            let b = &report.member_labels[report.member_labels.len() - 1];
            Some(bench::compare_members(&report, a, b)?)
        }
        None => None,
    };

    match args.format {
        OutputFormat::Text => {
            print!("{}", report.render_text());
            if let Some(comparison) = &comparison {
                print!("{}", comparison.render_text());
            }
        }
        OutputFormat::Json => {
            let doc = serde_json::json!({
                "tool_version": crate::VERSION,
                "manifest_digest": corpus::manifest_digest(&args.manifest)?,
                "member_digests": refs
                    .iter()
                    .map(|v| v.digest_hex())
                    .collect::<Vec<_>>(),
                "report": report,
                "comparison": comparison,
            });
            println!("{}", serde_json::to_string_pretty(&doc)?);
        }
        OutputFormat::Csv => print!("{}", report.render_csv()),
    }
    Ok(0)
}

fn cmd_verify_family(args: VerifyFamilyArgs) -> Result<i32> {
    let (family, _) = serialization::load_family(&args.dir)?;
    let report = vocab::verify_nesting(&family);
    match args.format {
        OutputFormat::Text => print!("{}", report.render_text()),
        _ => println!("{}", serde_json::to_string_pretty(&report)?),
    }
    if report.passed {
        Ok(0)
    } else {
        Err(BbpeError::Verification(
            report
                .divergence
                .map(|d| d.to_string())
                .unwrap_or_else(|| "nesting check failed".to_string()),
        ))
    }
}

fn cmd_inspect(args: InspectArgs) -> Result<i32> {
    if args.tokenizer.len() != 2 {
        return Err(BbpeError::Usage(format!(
            "inspect needs exactly two --tokenizer arguments, got {}",
            args.tokenizer.len()
        )));
    }
    let left = serialization::load_tokenizer(&args.tokenizer[0])?;
    let right = serialization::load_tokenizer(&args.tokenizer[1])?;
    let data = read_input(&args.input)?;
    let diff = analysis::visual_diff(&data, &left, &right, args.limit)?;
    match args.format {
        OutputFormat::Text => print!("{}", diff.render_text()),
        _ => println!("{}", serde_json::to_string_pretty(&diff)?),
    }
    Ok(0)
}
