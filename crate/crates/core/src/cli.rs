//! Command-line front end: `block`, `eval` and `gen`.
//!
//! Settings resolve as defaults, then the TOML config file, then flags.
//! Exit codes are 0 on success, 1 on I/O failure and 2 on invalid input.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::Deserialize;

use crate::ann::{Algorithm, Metric};
use crate::blocker::{BlockInput, Blocker, BlockerConfig};
use crate::blocks::{self, Mode, Side};
use crate::corpus::load_csv;
use crate::encode::load_dense;
use crate::error::{Error, Result};
use crate::eval::{confusion_with_bounds, EvalReport, PredictedBlocks, TrueBlocks};
use crate::synth::{self, CorruptionSpec};

#[derive(Debug, Parser)]
#[command(name = "annblock", version, about = "Blocking for entity resolution with nearest-neighbour search")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Block one dataset (deduplication) or a query dataset against a reference (linkage).
    Block(BlockArgs),
    /// Score a result CSV against ground-truth blocks.
    Eval(EvalArgs),
    /// Generate a synthetic dataset with injected duplicates.
    Gen(GenArgs),
}

#[derive(Debug, clap::Args)]
struct BlockArgs {
    /// Reference (or only) dataset.
    #[arg(long)]
    input: PathBuf,
    /// Comma-separated key columns, concatenated in order.
    #[arg(long, value_delimiter = ',')]
    key_cols: Vec<String>,
    /// Query dataset; switches to record linkage.
    #[arg(long)]
    query: Option<PathBuf>,
    #[arg(long)]
    ann: Option<Algorithm>,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Inputs are headerless dense matrix CSVs.
    #[arg(long)]
    dense: bool,
    /// Where to write `x,y,block,dist`.
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    distance: Option<Metric>,
    #[arg(long)]
    k_search: Option<usize>,
    #[arg(long)]
    edge_k: Option<usize>,
    #[arg(long)]
    threads: Option<usize>,
    /// Id column carried into the block-column export.
    #[arg(long)]
    id_col: Option<String>,
    /// Write `<id>,block` for the reference dataset here.
    #[arg(long)]
    block_column: Option<PathBuf>,
}

#[derive(Debug, clap::Args)]
struct EvalArgs {
    #[arg(long)]
    result: PathBuf,
    #[arg(long)]
    truth: PathBuf,
    #[arg(long)]
    mode: Mode,
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Debug, clap::Args)]
struct GenArgs {
    /// Number of original records.
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 1.0)]
    dup_fraction: f64,
    #[arg(long, default_value_t = 2)]
    ops: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long)]
    out_prefix: PathBuf,
    /// Write separate reference and query files instead of one table.
    #[arg(long)]
    linkage: bool,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    text: Option<TextSection>,
    ann: Option<AnnSection>,
    edge_k: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct TextSection {
    n_shingles: Option<usize>,
    lowercase: Option<bool>,
    strip_non_alphanum: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct AnnSection {
    algorithm: Option<Algorithm>,
    random_seed: Option<u64>,
    distance: Option<Metric>,
    k_search: Option<usize>,
    n_threads: Option<usize>,
    hnsw: Option<HnswSection>,
    lsh: Option<LshSection>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct HnswSection {
    distance: Option<Metric>,
    k_search: Option<usize>,
    n_threads: Option<usize>,
    #[serde(rename = "M")]
    m: Option<usize>,
    ef_c: Option<usize>,
    ef_s: Option<usize>,
    heuristic: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct LshSection {
    n_tables: Option<usize>,
    n_bits: Option<usize>,
    n_probes: Option<usize>,
}

fn either<T>(name: &str, outer: Option<T>, inner: Option<T>) -> Result<Option<T>> {
    match (outer, inner) {
        (Some(_), Some(_)) => Err(Error::invalid(format!(
            "config sets '{name}' in both [ann] and [ann.hnsw]"
        ))),
        (a, b) => Ok(a.or(b)),
    }
}

/// Parse a TOML run configuration over the defaults. Unknown keys are errors.
pub fn parse_config(text: &str) -> Result<BlockerConfig> {
    let file: ConfigFile =
        toml::from_str(text).map_err(|e| Error::invalid(format!("config: {}", e.message())))?;
    let mut cfg = BlockerConfig::default();
    if let Some(t) = file.text {
        if let Some(v) = t.n_shingles {
            cfg.text.n_shingles = v;
        }
        if let Some(v) = t.lowercase {
            cfg.text.lowercase = v;
        }
        if let Some(v) = t.strip_non_alphanum {
            cfg.text.strip_non_alphanum = v;
        }
    }
    if let Some(a) = file.ann {
        let h = a.hnsw.unwrap_or_default();
        if let Some(v) = a.algorithm {
            cfg.ann.algorithm = v;
        }
        if let Some(v) = a.random_seed {
            cfg.ann.random_seed = v;
        }
        if let Some(v) = either("distance", a.distance, h.distance)? {
            cfg.ann.metric = v;
        }
        if let Some(v) = either("k_search", a.k_search, h.k_search)? {
            cfg.ann.k_search = v;
        }
        if let Some(v) = either("n_threads", a.n_threads, h.n_threads)? {
            cfg.ann.hnsw.n_threads = v;
        }
        if let Some(v) = h.m {
            cfg.ann.hnsw.m = v;
        }
        if let Some(v) = h.ef_c {
            cfg.ann.hnsw.ef_c = v;
        }
        if let Some(v) = h.ef_s {
            cfg.ann.hnsw.ef_s = v;
        }
        if let Some(v) = h.heuristic {
            cfg.ann.hnsw.heuristic = v;
        }
        if let Some(l) = a.lsh {
            if let Some(v) = l.n_tables {
                cfg.ann.lsh.n_tables = v;
            }
            if let Some(v) = l.n_bits {
                cfg.ann.lsh.n_bits = v;
            }
            if let Some(v) = l.n_probes {
                cfg.ann.lsh.n_probes = v;
            }
        }
    }
    if let Some(v) = file.edge_k {
        cfg.edge_k = v;
    }
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<BlockerConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text)
}

fn cmd_block(args: BlockArgs, out: &mut dyn Write) -> Result<()> {
    let mut cfg = match &args.config {
        Some(p) => load_config(p)?,
        None => BlockerConfig::default(),
    };
    if let Some(v) = args.ann {
        cfg.ann.algorithm = v;
    }
    if let Some(v) = args.seed {
        cfg.ann.random_seed = v;
    }
    if let Some(v) = args.distance {
        cfg.ann.metric = v;
    }
    if let Some(v) = args.k_search {
        cfg.ann.k_search = v;
    }
    if let Some(v) = args.edge_k {
        cfg.edge_k = v;
    }
    if let Some(v) = args.threads {
        cfg.ann.hnsw.n_threads = v;
    }
    let blocker = Blocker::new(cfg);

    let (result, x_corpus) = if args.dense {
        let x = load_dense(&args.input)?;
        let y = args.query.as_deref().map(load_dense).transpose()?;
        let r = blocker.block(BlockInput::Dense(&x), y.as_ref().map(BlockInput::Dense))?;
        (r, None)
    } else {
        if args.key_cols.is_empty() {
            return Err(Error::invalid("--key-cols is required for text input"));
        }
        let id_col = args.id_col.as_deref();
        let x = load_csv(&args.input, &args.key_cols, id_col)?;
        let y = args
            .query
            .as_deref()
            .map(|p| load_csv(p, &args.key_cols, id_col))
            .transpose()?;
        let r = blocker.block(BlockInput::Text(&x), y.as_ref().map(BlockInput::Text))?;
        (r, Some(x))
    };

    if let Some(path) = &args.output {
        result.save_csv(path)?;
    }
    if let Some(path) = &args.block_column {
        let corpus = x_corpus
            .as_ref()
            .ok_or_else(|| Error::invalid("--block-column needs text input"))?;
        let id_col = args.id_col.as_deref().unwrap_or("id");
        let column = blocks::export_block_column(&result, corpus, Side::X, id_col)?;
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        column
            .write_csv(std::io::BufWriter::new(file))
            .map_err(|e| Error::io(path, e))?;
    }
    write!(out, "{result}").map_err(|e| Error::io("<stdout>", e))
}

fn cmd_eval(args: EvalArgs, out: &mut dyn Write) -> Result<()> {
    let rows = blocks::read_result_rows(&args.result)?;
    let predicted = PredictedBlocks::from_rows(&rows, args.mode)?;
    let truth = TrueBlocks::load_csv(&args.truth, args.mode)?;
    let report = EvalReport::new(confusion_with_bounds(&predicted, &truth, None)?);
    if let Some(path) = &args.json {
        std::fs::write(path, report.to_json() + "\n").map_err(|e| Error::io(path, e))?;
    }
    write!(out, "{report}").map_err(|e| Error::io("<stdout>", e))
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn cmd_gen(args: GenArgs, out: &mut dyn Write) -> Result<()> {
    let spec = CorruptionSpec {
        n_originals: args.n,
        dup_fraction: args.dup_fraction,
        ops_per_dup: args.ops,
        seed: args.seed,
        ..Default::default()
    };
    let truth_path = with_suffix(&args.out_prefix, "_truth.csv");
    let msg = if args.linkage {
        let d = synth::generate_linkage(&spec)?;
        let (xp, yp) = (
            with_suffix(&args.out_prefix, "_x.csv"),
            with_suffix(&args.out_prefix, "_y.csv"),
        );
        d.write_csvs(&xp, &yp, &truth_path)?;
        format!(
            "wrote {} ({} rows), {} ({} rows), {} ({} rows)",
            xp.display(),
            d.x_rows.len(),
            yp.display(),
            d.y_rows.len(),
            truth_path.display(),
            d.pairs.len()
        )
    } else {
        let d = synth::generate(&spec)?;
        let data_path = with_suffix(&args.out_prefix, "_data.csv");
        d.write_data_csv(&data_path)?;
        d.write_truth_csv(&truth_path)?;
        format!(
            "wrote {} ({} rows), {} ({} rows)",
            data_path.display(),
            d.rows.len(),
            truth_path.display(),
            d.pairs.len()
        )
    };
    writeln!(out, "{msg}").map_err(|e| Error::io("<stdout>", e))
}

/// Parse `args` (including the program name) and run; returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let outcome = match cli.command {
        Command::Block(a) => cmd_block(a, out),
        Command::Eval(a) => cmd_eval(a, out),
        Command::Gen(a) => cmd_gen(a, out),
    };
    match outcome {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_io() {
                1
            } else {
                2
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_keys_follow_control_names() {
        let cfg = parse_config(
            r#"
            edge_k = 2
            [text]
            n_shingles = 3
            [ann]
            algorithm = "hnsw"
            random_seed = 2025
            [ann.hnsw]
            distance = "euclidean"
            k_search = 30
            n_threads = 1
            M = 16
            ef_c = 100
            ef_s = 50
            [ann.lsh]
            n_tables = 4
            "#,
        )
        .unwrap();
        assert_eq!(cfg.edge_k, 2);
        assert_eq!(cfg.text.n_shingles, 3);
        assert_eq!(cfg.ann.metric, Metric::Euclidean);
        assert_eq!((cfg.ann.hnsw.m, cfg.ann.hnsw.ef_c, cfg.ann.hnsw.ef_s), (16, 100, 50));
        assert_eq!(cfg.ann.lsh.n_tables, 4);
        assert_eq!(cfg.ann.lsh.n_bits, 16);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(parse_config("[ann.hnsw]\npath = \"/tmp/x\"\n").is_err());
        assert!(parse_config("[text]\nngram = 2\n").is_err());
        assert!(parse_config("bogus = 1\n").is_err());
    }

    #[test]
    fn duplicated_key_across_tables_rejected() {
        assert!(parse_config("[ann]\nk_search = 5\n[ann.hnsw]\nk_search = 6\n").is_err());
    }

    #[test]
    fn empty_config_is_default() {
        assert_eq!(parse_config("").unwrap(), BlockerConfig::default());
    }

    #[test]
    fn bad_flag_exits_2() {
        let mut sink = Vec::new();
        assert_eq!(run(["annblock", "block", "--nope"], &mut sink), 2);
        assert_eq!(run(["annblock", "block", "--input", "x.csv", "--ann", "faiss"], &mut sink), 2);
    }
}
