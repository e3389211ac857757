//! Subcommand bodies. Each writes its human-facing output to `out`.

use std::collections::BTreeSet;
use std::io::Write;
use std::path::Path;

use anyhow::{bail, Context};

use registerdex::eval::synth::{generate, SynthConfig};
use registerdex::eval::{load_queries, parse_systems, run_benchmark, run_layer_ablation, BenchEnv, RecognizerChoice, SystemConfig};
use registerdex::index::{build_index_tree, load_index, save_index, IndexKind};
use registerdex::model::Operation;
use registerdex::recognizer::Recognizer;
use registerdex::register::{build_corpus_registers, read_corpus, read_registers, write_corpus, write_registers};

use crate::runtime::{BuildLock, Runtime};
use crate::state::{IdentifyRequest, SearchRequest, SearchState};

fn lock_path_for(file: &Path) -> std::path::PathBuf {
    let mut name = file.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".lock");
    file.with_file_name(name)
}

fn write_jsonl<T: serde::Serialize>(path: &Path, items: &[T]) -> anyhow::Result<()> {
    let mut buf = Vec::new();
    for item in items {
        serde_json::to_writer(&mut buf, item)?;
        buf.push(b'\n');
    }
    std::fs::write(path, buf).with_context(|| format!("writing {}", path.display()))
}

pub fn build_registers(rt: &Runtime, out: &mut dyn Write) -> anyhow::Result<()> {
    let c = &rt.config;
    let _lock = BuildLock::acquire(&lock_path_for(&c.registers))?;
    let corpus = read_corpus(&c.corpus)?;
    let previous = if c.registers.exists() {
        read_registers(&c.registers)?
    } else {
        Vec::new()
    };
    let handle = rt.model()?;
    let build = build_corpus_registers(&corpus, &rt.schemas, &handle.model, &rt.build_config(), &previous)?;
    write_registers(&c.registers, &build.registers)?;
    let recorded = handle.flush()?;

    let stats = handle.model.stats();
    writeln!(out, "papers: {}", corpus.len())?;
    writeln!(out, "registers written: {} (reused {})", build.registers.len(), build.reused)?;
    writeln!(out, "failures: {}", build.failures.len())?;
    for f in &build.failures {
        writeln!(out, "  {}: {}", f.paper_id, f.error)?;
    }
    let calls: Vec<String> = [Operation::Classify, Operation::Extract, Operation::Aggregate, Operation::Embed]
        .iter()
        .map(|op| format!("{op}={}", stats.calls(*op)))
        .collect();
    writeln!(out, "model calls: {}", calls.join(" "))?;
    if handle.recorder.is_some() {
        writeln!(out, "transcripts recorded: {recorded}")?;
    }
    writeln!(out, "network requests: {}", rt.network_requests())?;
    if !build.failures.is_empty() {
        bail!("{} paper(s) failed; rerun to retry them", build.failures.len());
    }
    Ok(())
}

pub fn build_index(rt: &Runtime, out: &mut dyn Write) -> anyhow::Result<String> {
    let c = &rt.config;
    if !c.registers.exists() {
        bail!("register store {} does not exist; run build-registers first", c.registers.display());
    }
    std::fs::create_dir_all(&c.index_dir).with_context(|| format!("creating {}", c.index_dir.display()))?;
    let _lock = BuildLock::acquire(&c.index_dir.join(".lock"))?;
    let registers = read_registers(&c.registers)?;
    let handle = match c.kind {
        IndexKind::Dense => Some(rt.model()?),
        IndexKind::Lexical => None,
    };
    let tree = build_index_tree(
        &registers,
        &rt.schemas,
        c.kind,
        handle.as_ref().map(|h| &h.model),
        rt.index_options(),
    )?;
    let digest = save_index(&tree, &c.index_dir)?;
    if let Some(h) = &handle {
        h.flush()?;
    }
    writeln!(out, "{} index over {} papers, {} views", tree.kind, tree.corpus_ids.len(), tree.views.len())?;
    for (path, n) in tree.doc_counts() {
        writeln!(out, "{n:>6}  {path}")?;
    }
    for (paper, path, error) in &tree.skipped {
        writeln!(out, "skipped {paper} at {path}: {error}")?;
    }
    writeln!(out, "manifest sha256: {digest}")?;
    writeln!(out, "network requests: {}", rt.network_requests())?;
    Ok(digest)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Text,
    Json,
}

pub fn search(rt: &Runtime, query: &str, views: Option<Vec<String>>, format: Format, out: &mut dyn Write) -> anyhow::Result<()> {
    let state = SearchState::load(rt)?;
    let req = SearchRequest {
        query: query.to_string(),
        k: None,
        m: None,
        kind: None,
        views,
    };
    let result = state.run(&req).map_err(|e| anyhow::anyhow!(e))?;
    for w in &result.warnings {
        tracing::warn!("{w}");
    }
    let response = state.respond(&result);
    match format {
        Format::Json => writeln!(out, "{}", serde_json::to_string_pretty(&response)?)?,
        Format::Text => {
            writeln!(out, "views: {}", response.views_used.join(", "))?;
            for (rank, hit) in response.results.iter().enumerate() {
                writeln!(
                    out,
                    "{:>3}. {:<16} {:>10.4}  [{}]  {}",
                    rank + 1,
                    hit.paper_id,
                    hit.score,
                    hit.best_view.as_deref().unwrap_or("-"),
                    hit.title
                )?;
            }
        }
    }
    Ok(())
}

pub fn identify(rt: &Runtime, query: &str, format: Format, out: &mut dyn Write) -> anyhow::Result<()> {
    let state = SearchState::load(rt)?;
    let res = state
        .identify(&IdentifyRequest {
            query: query.to_string(),
            k: None,
        })
        .map_err(|e| anyhow::anyhow!(e))?;
    match format {
        Format::Json => writeln!(out, "{}", serde_json::to_string_pretty(&res)?)?,
        Format::Text => {
            for v in &res.views {
                writeln!(out, "{v}")?;
            }
        }
    }
    Ok(())
}

pub struct EvalArgs<'a> {
    pub systems: &'a str,
    pub dataset: &'a Path,
    pub out_dir: &'a Path,
    pub layers: Option<BTreeSet<usize>>,
}

pub fn eval(rt: &Runtime, args: EvalArgs<'_>, out: &mut dyn Write) -> anyhow::Result<()> {
    let c = &rt.config;
    let systems = parse_systems(args.systems)?;
    let corpus = read_corpus(&c.corpus)?;
    let ids: BTreeSet<String> = corpus.iter().map(|d| d.id.clone()).collect();
    let queries = load_queries(args.dataset, &ids, &rt.schemas)?;
    let tree = match load_index(&c.index_dir, Some(&rt.schemas.versions())) {
        Ok(t) => Some(t),
        Err(e) => {
            tracing::warn!("no usable index at {}: {e}", c.index_dir.display());
            None
        }
    };
    let handle = match c.kind {
        IndexKind::Dense => Some(rt.model()?),
        IndexKind::Lexical => None,
    };
    let wants_remote = systems.contains(&SystemConfig::Register(RecognizerChoice::Remote));
    let remote: Option<Box<dyn Recognizer>> = match (&c.recognizer_url, wants_remote) {
        (Some(_), true) => Some(Box::new(rt.remote_recognizer()?)),
        _ => None,
    };
    let env = BenchEnv {
        dataset: args
            .dataset
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default(),
        schemas: &rt.schemas,
        tree: tree.as_ref(),
        corpus: &corpus,
        model: handle.as_ref().map(|h| &h.model),
        remote: remote.as_deref(),
        kind: c.kind,
        index_options: rt.index_options(),
        k: c.k,
        normalize: c.normalize,
        seed: c.seed,
    };
    let report = match &args.layers {
        Some(layers) => run_layer_ablation(&queries, &systems, &env, layers)?,
        None => run_benchmark(&queries, &systems, &env)?,
    };
    std::fs::create_dir_all(args.out_dir)?;
    std::fs::write(args.out_dir.join("report.json"), report.to_json())?;
    std::fs::write(args.out_dir.join("report.txt"), report.to_table())?;
    std::fs::write(args.out_dir.join("runtime.json"), report.runtime_json())?;
    std::fs::write(args.out_dir.join("config.toml"), c.to_toml())?;
    write!(out, "{}", report.to_table())?;
    for (system, r) in &report.runtime {
        writeln!(out, "runtime {system}: {:.1} ms total, {:.3} ms/query", r.total_ms, r.mean_query_ms)?;
    }
    writeln!(out, "network requests: {}", rt.network_requests())?;
    Ok(())
}

pub struct GenerateArgs<'a> {
    pub out_dir: &'a Path,
    pub papers: usize,
    pub key_pool: usize,
}

pub fn generate_corpus(rt: &Runtime, args: GenerateArgs<'_>, out: &mut dyn Write) -> anyhow::Result<()> {
    let cfg = SynthConfig {
        papers: args.papers,
        seed: rt.config.seed,
        key_pool: args.key_pool,
        ..Default::default()
    };
    let synth = generate(&rt.schemas, &cfg);
    std::fs::create_dir_all(args.out_dir)?;
    write_corpus(&args.out_dir.join("corpus.jsonl"), &synth.docs)?;
    write_jsonl(&args.out_dir.join("queries.jsonl"), &synth.queries)?;
    write_jsonl(&args.out_dir.join("views.jsonl"), &synth.examples)?;
    writeln!(
        out,
        "wrote {} papers, {} queries (seed {}) to {}",
        synth.docs.len(),
        synth.queries.len(),
        cfg.seed,
        args.out_dir.display()
    )?;
    Ok(())
}
