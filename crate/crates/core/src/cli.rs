//! Command-line entry points: dataset generation, statistics, encoding,
//! full alignment runs, evaluation, and noise sweeps.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use crate::config::RunConfig;
use crate::csls::dump_matrix;
use crate::error::{Result, TkgaError};
use crate::kg::{parse_seed_file, parse_tkg_file, SeedAlignment, TemporalKG};
use crate::metrics::{dataset_stats, hits_mrr, rank_test_pairs};
use crate::names::{FileNameProvider, HashNgramProvider, NameProvider};
use crate::pipeline::{
    encode_side, run_csls_baseline, run_pipeline, train_and_score, NoiseSpec, PipelineResult,
};
use crate::projection::RelMap;
use crate::reasoner::{MockReasoner, Reasoner, RemoteReasoner, ReplayReasoner};
use crate::synth::{synth_generate, SynthConfig};

pub const SCHEMA_VERSION: u32 = 1;

/// One structured log line on stderr.
fn log_line(event: &str, fields: serde_json::Value) {
    let mut obj = json!({"event": event});
    if let (Some(o), Some(f)) = (obj.as_object_mut(), fields.as_object()) {
        for (k, v) in f {
            o.insert(k.clone(), v.clone());
        }
    }
    eprintln!("{obj}");
}

#[derive(Parser)]
#[command(name = "tkga", about = "Temporal knowledge graph alignment engine")]
struct Cli {
    /// flat key=value configuration file
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Clone)]
struct DatasetArgs {
    /// source graph: head\trel\ttail\tbegin\tend per line
    #[arg(long)]
    source: PathBuf,
    #[arg(long)]
    target: PathBuf,
    /// seed alignment: src_label\ttgt_label per line
    #[arg(long)]
    seeds: PathBuf,
    /// precomputed name vectors (label\tf1 f2 ...); labels hashed when absent
    #[arg(long)]
    name_vectors: Option<PathBuf>,
    /// explicit relation equivalences (src_rel\ttgt_rel); exact labels when absent
    #[arg(long)]
    rel_map: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ReasonerKind {
    Mock,
    Remote,
    Replay,
}

#[derive(Clone, Copy, ValueEnum)]
enum RunMode {
    Full,
    Baseline,
}

#[derive(Args, Clone)]
struct RunArgs {
    #[command(flatten)]
    data: DatasetArgs,
    #[arg(long, value_enum, default_value = "mock")]
    reasoner: ReasonerKind,
    /// transcript JSONL: written by remote, read by replay
    #[arg(long)]
    transcript: Option<PathBuf>,
    #[arg(long)]
    iterations: Option<usize>,
    /// fraction of source fused vectors replaced by noise
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long, default_value = "13")]
    noise_seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic aligned graph pair
    Synth {
        #[arg(long, value_parser = ["easy", "wild"], default_value = "easy")]
        preset: String,
        #[arg(long, default_value = "200")]
        entities: usize,
        #[arg(long, default_value = "1")]
        seed: u64,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Dataset statistics for a graph pair and its seed alignment
    Stats {
        #[command(flatten)]
        data: DatasetArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train encoders and dump fused embeddings plus the similarity matrix
    Encode {
        #[command(flatten)]
        data: DatasetArgs,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Full alignment pipeline with iterative feedback
    Align {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Hits/MRR of the full pipeline or the similarity-only baseline
    Eval {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_enum, default_value = "full")]
        mode: RunMode,
    },
    /// Evaluate at several noise ratios in one run
    NoiseSweep {
        #[command(flatten)]
        run: RunArgs,
        /// comma-separated ratios, e.g. 0,0.4,0.8
        #[arg(long, default_value = "0,0.4,0.8")]
        ratios: String,
        #[arg(long, value_enum, default_value = "full")]
        mode: RunMode,
    },
}

struct LoadedData {
    source: TemporalKG,
    target: TemporalKG,
    seeds: SeedAlignment,
    rel_map: RelMap,
    names: Box<dyn NameProvider>,
}

fn load_data(args: &DatasetArgs, cfg: &RunConfig) -> Result<LoadedData> {
    let source = parse_tkg_file(&args.source)?;
    let target = parse_tkg_file(&args.target)?;
    let pairs = parse_seed_file(&args.seeds, &source, &target)?;
    let seeds = SeedAlignment::split_by_fraction(pairs, cfg.train_fraction, cfg.split_seed)?;
    let rel_map = match &args.rel_map {
        Some(p) => RelMap::from_file(p)?,
        None => RelMap::ExactLabel,
    };
    let names: Box<dyn NameProvider> = match &args.name_vectors {
        Some(p) => Box::new(FileNameProvider::load(p)?),
        None => Box::new(HashNgramProvider::new(cfg.pipeline.d_name)),
    };
    log_line(
        "data_loaded",
        json!({
            "source_entities": source.num_entities(),
            "target_entities": target.num_entities(),
            "seed_pairs": seeds.pairs.len(),
        }),
    );
    Ok(LoadedData {
        source,
        target,
        seeds,
        rel_map,
        names,
    })
}

fn write_json(path: Option<&Path>, value: &serde_json::Value) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("serializable");
    match path {
        Some(p) => fs::write(p, text).map_err(|e| TkgaError::io(p.display().to_string(), e)),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn make_reasoner(run: &RunArgs, data: &LoadedData, cfg: &RunConfig) -> Result<Box<dyn Reasoner>> {
    Ok(match run.reasoner {
        ReasonerKind::Mock => Box::new(MockReasoner::new(data.rel_map.clone())),
        ReasonerKind::Remote => Box::new(RemoteReasoner::new(
            cfg.remote.clone(),
            run.transcript.as_deref(),
        )?),
        ReasonerKind::Replay => {
            let path = run.transcript.as_ref().ok_or_else(|| TkgaError::Config {
                key: "transcript".into(),
                msg: "replay mode needs --transcript".into(),
            })?;
            Box::new(ReplayReasoner::from_file(path)?)
        }
    })
}

fn pipeline_json(data: &LoadedData, result: &PipelineResult) -> serde_json::Value {
    let pairs: Vec<[String; 2]> = result
        .final_pairs
        .iter()
        .map(|&(s, t)| {
            [
                data.source.entity_label(s).to_string(),
                data.target.entity_label(t).to_string(),
            ]
        })
        .collect();
    let rounds: Vec<serde_json::Value> = result
        .rounds
        .iter()
        .map(|r| {
            json!({
                "round": r.round,
                "fused_pairs": r.fused_pairs,
                "new_seeds": r.new_seeds,
                "report": r.report,
            })
        })
        .collect();
    json!({
        "schema_version": SCHEMA_VERSION,
        "rounds": rounds,
        "early_stop": result.early_stop,
        "aborted": result.aborted,
        "fused_pair_count": result.phi_f.len(),
        "alignment": pairs,
    })
}

fn run_full(run: &RunArgs, cfg: &mut RunConfig) -> Result<(LoadedData, PipelineResult)> {
    let data = load_data(&run.data, cfg)?;
    if let Some(n) = run.iterations {
        cfg.pipeline.iterations = n;
    }
    let noise = run.noise.map(|ratio| NoiseSpec {
        ratio,
        seed: run.noise_seed,
    });
    let mut reasoner = make_reasoner(run, &data, cfg)?;
    let test = data.seeds.test_pairs();
    let result = run_pipeline(
        &data.source,
        &data.target,
        &data.seeds,
        &data.rel_map,
        reasoner.as_mut(),
        data.names.as_ref(),
        &cfg.pipeline,
        noise,
        Some(&test),
    )?;
    for r in &result.rounds {
        log_line(
            "round",
            json!({"round": r.round, "fused_pairs": r.fused_pairs, "new_seeds": r.new_seeds}),
        );
    }
    Ok((data, result))
}

fn parse_ratios(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|p| {
            p.trim().parse::<f64>().map_err(|_| TkgaError::Config {
                key: "ratios".into(),
                msg: format!("cannot parse '{p}'"),
            })
        })
        .collect()
}

/// Exit status: 0 ok, 1 error, 2 aborted round.
pub fn run() -> i32 {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            log_line("error", json!({"message": e.to_string()}));
            eprintln!("error: {e}");
            1
        }
    }
}

fn dispatch(cli: Cli) -> Result<i32> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::from_file(p)?,
        None => {
            let mut c = RunConfig::default();
            c.apply_env();
            c
        }
    };
    match cli.cmd {
        Cmd::Synth {
            preset,
            entities,
            seed,
            out_dir,
        } => {
            let synth_cfg = match preset.as_str() {
                "wild" => SynthConfig::wild(entities, seed),
                _ => SynthConfig::easy(entities, seed),
            };
            let out = synth_generate(&synth_cfg)?;
            fs::create_dir_all(&out_dir)
                .map_err(|e| TkgaError::io(out_dir.display().to_string(), e))?;
            let write = |name: &str, text: &str| -> Result<()> {
                let p = out_dir.join(name);
                fs::write(&p, text).map_err(|e| TkgaError::io(p.display().to_string(), e))
            };
            write("source.tsv", &out.source.serialize())?;
            write("target.tsv", &out.target.serialize())?;
            let mut seeds_text = String::new();
            for &(s, t) in &out.seeds.pairs {
                seeds_text.push_str(out.source.entity_label(s));
                seeds_text.push('\t');
                seeds_text.push_str(out.target.entity_label(t));
                seeds_text.push('\n');
            }
            write("seeds.tsv", &seeds_text)?;
            write_json(
                Some(&out_dir.join("scenarios.json")),
                &json!({
                    "schema_version": SCHEMA_VERSION,
                    "counts": out.scenario_counts,
                    "per_pair": out.pair_scenarios,
                }),
            )?;
            log_line("synth_done", json!({"entities": entities, "preset": preset}));
            Ok(0)
        }
        Cmd::Stats { data, out } => {
            let d = load_data(&data, &cfg)?;
            let stats = dataset_stats(&d.source, &d.target, &d.seeds, cfg.comparator);
            write_json(
                out.as_deref(),
                &json!({"schema_version": SCHEMA_VERSION, "stats": stats}),
            )?;
            Ok(0)
        }
        Cmd::Encode { data, out_dir } => {
            let d = load_data(&data, &cfg)?;
            let src = encode_side(&d.source, d.names.as_ref(), &cfg.pipeline.walk, &cfg.pipeline.skipgram)?;
            let tgt = encode_side(&d.target, d.names.as_ref(), &cfg.pipeline.walk, &cfg.pipeline.skipgram)?;
            let (model, src_fused, matrix) =
                train_and_score(&src, &tgt, &d.seeds.train_pairs(), &cfg.pipeline, None)?;
            let tgt_fused = model.fuse_side(&tgt.views)?;
            fs::create_dir_all(&out_dir)
                .map_err(|e| TkgaError::io(out_dir.display().to_string(), e))?;
            let dump = |name: &str, m: &ndarray::Array2<f64>| -> Result<()> {
                let mut bytes = Vec::with_capacity(8 + m.len() * 4);
                bytes.extend((m.nrows() as u32).to_le_bytes());
                bytes.extend((m.ncols() as u32).to_le_bytes());
                for &v in m.iter() {
                    bytes.extend((v as f32).to_le_bytes());
                }
                let p = out_dir.join(name);
                fs::write(&p, bytes).map_err(|e| TkgaError::io(p.display().to_string(), e))
            };
            dump("fused_source.bin", &src_fused)?;
            dump("fused_target.bin", &tgt_fused)?;
            let p = out_dir.join("similarity.bin");
            fs::write(&p, dump_matrix(&matrix))
                .map_err(|e| TkgaError::io(p.display().to_string(), e))?;
            log_line(
                "encode_done",
                json!({"dimension": src_fused.ncols(), "sources": src_fused.nrows()}),
            );
            Ok(0)
        }
        Cmd::Align { run } => {
            let (data, result) = run_full(&run, &mut cfg)?;
            let mut body = pipeline_json(&data, &result);
            let test = data.seeds.test_pairs();
            let report = hits_mrr(rank_test_pairs(&result.matrix, &test, &result.phi_f))?;
            body["report"] = serde_json::to_value(&report).expect("serializable");
            write_json(run.out.as_deref(), &body)?;
            Ok(if result.aborted.is_some() { 2 } else { 0 })
        }
        Cmd::Eval { run, mode } => {
            let report = match mode {
                RunMode::Full => {
                    let (data, result) = run_full(&run, &mut cfg)?;
                    if let Some(msg) = &result.aborted {
                        eprintln!("error: {msg}");
                        return Ok(2);
                    }
                    let test = data.seeds.test_pairs();
                    hits_mrr(rank_test_pairs(&result.matrix, &test, &result.phi_f))?
                }
                RunMode::Baseline => {
                    let data = load_data(&run.data, &cfg)?;
                    let noise = run.noise.map(|ratio| NoiseSpec {
                        ratio,
                        seed: run.noise_seed,
                    });
                    let test = data.seeds.test_pairs();
                    run_csls_baseline(
                        &data.source,
                        &data.target,
                        &data.seeds,
                        data.names.as_ref(),
                        &cfg.pipeline,
                        noise,
                        Some(&test),
                    )?
                    .2
                    .expect("report requested")
                }
            };
            write_json(
                run.out.as_deref(),
                &json!({"schema_version": SCHEMA_VERSION, "report": report}),
            )?;
            Ok(0)
        }
        Cmd::NoiseSweep { run, ratios, mode } => {
            let ratios = parse_ratios(&ratios)?;
            let data = load_data(&run.data, &cfg)?;
            if let Some(n) = run.iterations {
                cfg.pipeline.iterations = n;
            }
            let test = data.seeds.test_pairs();
            let mut reports = Vec::new();
            for &ratio in &ratios {
                let noise = Some(NoiseSpec {
                    ratio,
                    seed: run.noise_seed,
                });
                let report = match mode {
                    RunMode::Full => {
                        let mut reasoner = make_reasoner(&run, &data, &cfg)?;
                        let result = run_pipeline(
                            &data.source,
                            &data.target,
                            &data.seeds,
                            &data.rel_map,
                            reasoner.as_mut(),
                            data.names.as_ref(),
                            &cfg.pipeline,
                            noise,
                            Some(&test),
                        )?;
                        if let Some(msg) = &result.aborted {
                            eprintln!("error: {msg}");
                            return Ok(2);
                        }
                        hits_mrr(rank_test_pairs(&result.matrix, &test, &result.phi_f))?
                    }
                    RunMode::Baseline => run_csls_baseline(
                        &data.source,
                        &data.target,
                        &data.seeds,
                        data.names.as_ref(),
                        &cfg.pipeline,
                        noise,
                        Some(&test),
                    )?
                    .2
                    .expect("report requested"),
                };
                log_line("noise_point", json!({"ratio": ratio, "hits1": report.hits1}));
                reports.push(json!({"ratio": ratio, "report": report}));
            }
            write_json(
                run.out.as_deref(),
                &json!({"schema_version": SCHEMA_VERSION, "sweep": reports}),
            )?;
            Ok(0)
        }
    }
}
