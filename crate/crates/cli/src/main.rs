use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use coarsehash::bench::{run_bench, BenchConfig};
use coarsehash::dataset::{self, DatasetRecipe};
use coarsehash::eval::{emit_report, measure_storage, recall_at, storage_report, StorageConfig};
use coarsehash::pipeline::{train, GroundTruth, QueryPlan, TrainConfig, TrainedModel};
use coarsehash::system::{Localizer, ProposedLocalizer};
use coarsehash::DescriptorMatrix;
use serde::Serialize;

#[derive(Parser)]
#[command(name = "coarsehash", version, about = "Coarse hashing place recognition with sequence matching")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate reference and query descriptor files from a recipe.
    GenData {
        #[arg(long)]
        recipe: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the recipe seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the recipe noise scale.
        #[arg(long = "noise-scale")]
        noise_scale: Option<f64>,
    },
    /// Fit PCA and quantizer on references and build the hash index.
    Train {
        /// Reference descriptors (`.desc`, `.json` or the shared stem).
        #[arg(long)]
        refs: PathBuf,
        #[arg(long = "d", default_value_t = 15)]
        d: usize,
        #[arg(long = "K", default_value_t = 2)]
        k: usize,
        #[arg(long)]
        batch: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Localize query windows against a trained index and write a match CSV.
    Query {
        /// Directory written by `train`.
        #[arg(long)]
        index: PathBuf,
        #[arg(long)]
        queries: PathBuf,
        /// Reference descriptors, read for their part boundary only.
        #[arg(long)]
        refs: Option<PathBuf>,
        #[arg(long = "L", default_value_t = 50)]
        l: usize,
        #[arg(long, default_value_t = 10)]
        stride: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Paired evaluation of all configured systems; writes the full report.
    Bench {
        /// JSON bench configuration with a nested recipe.
        #[arg(long)]
        config: PathBuf,
        #[arg(long = "d")]
        d: Option<usize>,
        #[arg(long = "K")]
        k: Option<usize>,
        #[arg(long = "L", value_delimiter = ',')]
        l: Option<Vec<usize>>,
        #[arg(long)]
        stride: Option<usize>,
        #[arg(long = "noise-scale", value_delimiter = ',')]
        noise_scale: Option<Vec<f64>>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path, what: &str) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {what} {}", path.display()))?;
    serde_json::from_str(&text)
        .map_err(coarsehash::Error::from)
        .with_context(|| format!("parsing {what} {}", path.display()))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let body = serde_json::to_string_pretty(value)? + "\n";
    fs::write(path, body).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn gen_data(recipe: &Path, out: &Path, seed: Option<u64>, noise_scale: Option<f64>) -> Result<()> {
    let mut recipe: DatasetRecipe = read_json(recipe, "recipe")?;
    if let Some(s) = seed {
        recipe.seed = s;
    }
    if let Some(n) = noise_scale {
        recipe.noise_scale = n;
    }
    let data = dataset::build(&recipe)?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    data.reference.save(out.join("reference"))?;
    data.query.save(out.join("query"))?;
    write_json(&out.join("recipe.json"), &recipe)?;
    println!(
        "wrote {} reference and {} query rows ({} dims) to {}",
        data.reference.rows(),
        data.query.rows(),
        data.reference.dims(),
        out.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct TrainSummary {
    references: usize,
    input_dims: usize,
    d: usize,
    k: usize,
    occupied_addresses: usize,
    max_bucket: usize,
    index_file_bytes: u64,
    model_mb: f64,
}

fn train_cmd(refs: &Path, d: usize, k: usize, batch: Option<usize>, out: &Path) -> Result<()> {
    let refs = DescriptorMatrix::load(refs).with_context(|| format!("loading references {}", refs.display()))?;
    let model = train(&refs, TrainConfig { d, k, batch })?;
    model.save(out)?;
    let storage = storage_report(StorageConfig {
        ref_count: refs.rows() as u64,
        input_dims: refs.dims() as u64,
        d: d as u64,
        k: k as u64,
    });
    let summary = TrainSummary {
        references: refs.rows(),
        input_dims: refs.dims(),
        d,
        k,
        occupied_addresses: model.index.occupied_count(),
        max_bucket: model.index.buckets().map(|(_, b)| b.len()).max().unwrap_or(0),
        index_file_bytes: fs::metadata(out.join("index.chx"))?.len(),
        model_mb: storage.total_mb(),
    };
    write_json(&out.join("train.json"), &summary)?;
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}

fn query_cmd(index: &Path, queries: &Path, refs: Option<&Path>, l: usize, stride: usize, out: &Path) -> Result<()> {
    let model = TrainedModel::load(index).with_context(|| format!("loading model from {}", index.display()))?;
    let queries = DescriptorMatrix::load(queries).with_context(|| format!("loading queries {}", queries.display()))?;
    let truth = match refs {
        Some(p) => GroundTruth::new(&DescriptorMatrix::load(p)?, &queries),
        None => GroundTruth::identity(),
    };
    // a stride past the end still evaluates the first window
    let plan = QueryPlan::new(l, stride.min(queries.rows()).max(1))?;
    let records = ProposedLocalizer::new(&model)?.localize(&queries, &plan, &truth)?;

    if let Some(dir) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let mut w = io::BufWriter::new(fs::File::create(out).with_context(|| format!("creating {}", out.display()))?);
    writeln!(w, "query,truth,best,score,n_r,fallback,nearest_candidate")?;
    for r in &records {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            r.query, r.truth, r.best, r.score, r.n_r, r.fallback_frames, r.nearest_candidate
        )?;
    }
    w.flush()?;

    let pairs: Vec<(usize, usize)> = records.iter().map(|r| (r.truth, r.best)).collect();
    let mean_nr = records.iter().map(|r| r.n_r as f64).sum::<f64>() / records.len() as f64;
    println!(
        "{} windows (L={l}): recall@0 {:.3}, @10 {:.3}, @20 {:.3}; mean N_r {mean_nr:.1}",
        records.len(),
        recall_at(&pairs, 0)?,
        recall_at(&pairs, 10)?,
        recall_at(&pairs, 20)?
    );
    Ok(())
}

#[derive(Serialize)]
struct RunRow<'a> {
    system: &'a str,
    #[serde(rename = "L")]
    l: usize,
    noise_scale: f64,
    mean_nr: f64,
    cap: Option<usize>,
    recall_at_20: f64,
    in_list_recall_at_20: f64,
}

#[allow(clippy::too_many_arguments)]
fn bench_cmd(
    config: &Path,
    d: Option<usize>,
    k: Option<usize>,
    l: Option<Vec<usize>>,
    stride: Option<usize>,
    noise: Option<Vec<f64>>,
    seed: Option<u64>,
    out: &Path,
) -> Result<()> {
    let mut cfg: BenchConfig = read_json(config, "bench config")?;
    cfg.d = d.unwrap_or(cfg.d);
    cfg.k = k.unwrap_or(cfg.k);
    cfg.sequence_lengths = l.unwrap_or(cfg.sequence_lengths);
    cfg.stride = stride.unwrap_or(cfg.stride);
    cfg.noise_scales = noise.unwrap_or(cfg.noise_scales);
    cfg.recipe.seed = seed.unwrap_or(cfg.recipe.seed);

    let mut report = run_bench(&cfg)?;
    let model_dir = out.join("model");
    report.model.save(&model_dir)?;
    report.storage.measured = Some(measure_storage(
        &model_dir,
        &report.model.index,
        report.model.pca.input_dims() as u64,
        cfg.d as u64,
    )?);
    emit_report(&report.curves(), &report.storage, &report.ops, out)?;
    let rows: Vec<RunRow> = report
        .runs
        .iter()
        .map(|r| RunRow {
            system: &r.system,
            l: r.l,
            noise_scale: r.noise_scale,
            mean_nr: r.mean_nr,
            cap: r.cap,
            recall_at_20: r.recall_at(20),
            in_list_recall_at_20: r.in_list_recall_at(20),
        })
        .collect();
    write_json(&out.join("runs.json"), &rows)?;
    write_json(&out.join("config.json"), &cfg)?;
    for r in &rows {
        println!(
            "{:<9} L={:<4} noise={:<4} N_r={:<8.1} recall@20={:.3} in-list={:.3}",
            r.system, r.l, r.noise_scale, r.mean_nr, r.recall_at_20, r.in_list_recall_at_20
        );
    }
    println!("model storage {:.4} MB; report in {}", report.storage.total_mb(), out.display());
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    use coarsehash::Error as E;
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<E>() {
            return match e {
                E::InvalidArgument(_) | E::Format { .. } | E::Json(_) => 2,
                E::Degenerate(_) => 3,
                E::Io(_) => 4,
            };
        }
        if cause.is::<serde_json::Error>() {
            return 2;
        }
        if cause.is::<io::Error>() {
            return 4;
        }
    }
    1
}

/// Context chain joined by ": ", dropping causes already quoted by the
/// message above them.
fn describe(err: &anyhow::Error) -> String {
    let mut parts: Vec<String> = Vec::new();
    for cause in err.chain() {
        let text = cause.to_string();
        if parts.last().is_none_or(|prev| !prev.ends_with(&text)) {
            parts.push(text);
        }
    }
    parts.join(": ")
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenData {
            recipe,
            out,
            seed,
            noise_scale,
        } => gen_data(&recipe, &out, seed, noise_scale),
        Command::Train { refs, d, k, batch, out } => train_cmd(&refs, d, k, batch, &out),
        Command::Query {
            index,
            queries,
            refs,
            l,
            stride,
            out,
        } => query_cmd(&index, &queries, refs.as_deref(), l, stride, &out),
        Command::Bench {
            config,
            d,
            k,
            l,
            stride,
            noise_scale,
            seed,
            out,
        } => bench_cmd(&config, d, k, l, stride, noise_scale, seed, &out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(exit_code(&e))
        }
    }
}
