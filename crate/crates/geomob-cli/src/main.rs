//! Pipeline driver: each subcommand wraps one stage, reads and writes the
//! shared file formats, and drops a manifest next to its primary output.

mod config;
mod manifest;

use clap::{Parser, Subcommand};
use config::{FileConfig, SampleMode};
use geomob::align::{train_align, ModalityData};
use geomob::distill::{query, read_surrogate, train_distill, write_surrogate};
use geomob::embed::EmbeddingTable;
use geomob::graph::{build_graph, sample_random, sample_topk};
use geomob::hexgrid::{centroid_of, GeoCoord};
use geomob::lightgcn::PropagationPlan;
use geomob::line::train_line;
use geomob::probe::{render_report, run_benchmark, TaskDataset};
use geomob::synth::{generate, write_all};
use geomob::{Error, Result};
use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(
    name = "geomob",
    version,
    about = "Geospatial embeddings over a mobility-graph backbone"
)]
struct Cli {
    /// JSON config file; missing sections fall back to defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override every stage seed, derived from this value.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Force single-threaded execution everywhere.
    #[arg(long, global = true)]
    deterministic: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic dataset (events, modalities, tasks, latents).
    Synth {
        #[arg(long)]
        out: PathBuf,
    },
    /// Tokenize a lat/lon event log into cell ids.
    GridIndex {
        /// TSV rows: entity \t lat \t lon \t bucket.
        #[arg(long)]
        input: PathBuf,
        /// TSV rows: entity \t cell \t bucket.
        #[arg(long)]
        out: PathBuf,
    },
    /// Build the co-visitation graph from an event log.
    BuildGraph {
        #[arg(long)]
        events: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also export the edges as cell \t cell \t weight.
        #[arg(long)]
        edges_tsv: Option<PathBuf>,
    },
    /// Keep the strongest (or a random) fraction of each node's edges.
    SampleGraph {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Override the configured keep ratio in (0, 1].
        #[arg(long)]
        ratio: Option<f64>,
        /// Override the configured mode (topk | random).
        #[arg(long)]
        mode: Option<String>,
    },
    /// Pre-encode the full graph with second-order LINE.
    TrainLine {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Align mobility with the auxiliary modalities; writes embeddings and a
    /// per-epoch loss log.
    TrainAlign {
        /// The sampled subgraph.
        #[arg(long)]
        graph: PathBuf,
        /// LINE embeddings used to initialize the node table.
        #[arg(long)]
        init: PathBuf,
        #[arg(long)]
        text: Option<PathBuf>,
        #[arg(long)]
        image: Option<PathBuf>,
        #[arg(long)]
        demo: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Training log path; defaults to <out>.log.tsv.
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Convert a binary embedding table to cell \t v1,v2,... text.
    ExportEmb {
        #[arg(long)]
        emb: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Ridge-probe embeddings on task datasets and write the report table.
    Probe {
        #[arg(long)]
        emb: PathBuf,
        /// Task files; the task name is the file stem.
        #[arg(long, num_args = 1.., required = true)]
        tasks: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Distill cell embeddings into a coordinate-queryable surrogate.
    Distill {
        /// Teacher embeddings over grid cells.
        #[arg(long)]
        emb: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Query a trained surrogate at one coordinate or a TSV of coordinates.
    Query {
        #[arg(long)]
        surrogate: PathBuf,
        #[arg(long, allow_negative_numbers = true)]
        lat: Option<f64>,
        #[arg(long, allow_negative_numbers = true)]
        lon: Option<f64>,
        /// TSV rows: lat \t lon.
        #[arg(long)]
        coords: Option<PathBuf>,
        /// Output file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() {
    let cli = Cli::parse();
    if cli.deterministic {
        geomob::set_single_thread(true);
    }
    match run(cli) {
        Ok(()) => {}
        Err(e) => {
            let kind = match &e {
                Error::Range(_) => "range",
                Error::Config(_) => "config",
                Error::Validation(_) => "validation",
                Error::Parse { .. } => "parse",
                Error::Format { .. } => "format",
                Error::Numeric(_) => "numeric",
                Error::Io(_) => "io",
            };
            let line = serde_json::json!({ "error": kind, "message": e.to_string() });
            eprintln!("{line}");
            std::process::exit(1);
        }
    }
}

fn usage(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

/// Load a modality table, sniffing EMB1 binaries from their magic.
fn load_modality(path: &Path) -> Result<EmbeddingTable> {
    let mut head = [0u8; 4];
    let n = File::open(path)?.read(&mut head)?;
    if n == 4 && &head == b"EMB1" {
        geomob::io::read_embeddings(path)
    } else {
        geomob::io::read_modality_tsv(path)
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = FileConfig::load(cli.config.as_deref()).map_err(usage)?;
    if let Some(seed) = cli.seed {
        cfg.apply_global_seed(seed);
    }
    let seed = cfg.seed;
    let snapshot = serde_json::to_value(&cfg)
        .map_err(|e| Error::Validation(format!("config snapshot: {e}")))?;
    let command_name = match &cli.command {
        Command::Synth { .. } => "synth",
        Command::GridIndex { .. } => "grid-index",
        Command::BuildGraph { .. } => "build-graph",
        Command::SampleGraph { .. } => "sample-graph",
        Command::TrainLine { .. } => "train-line",
        Command::TrainAlign { .. } => "train-align",
        Command::ExportEmb { .. } => "export-emb",
        Command::Probe { .. } => "probe",
        Command::Distill { .. } => "distill",
        Command::Query { .. } => "query",
    };
    let mut man = manifest::ManifestBuilder::new(command_name, cli.deterministic, seed, snapshot);

    match cli.command {
        Command::Synth { out } => {
            let data = generate(&cfg.synth, &cfg.grid)?;
            let files = write_all(&data, &out)?;
            for p in [&files.events, &files.text, &files.image, &files.demo, &files.latents] {
                man.output(p);
            }
            for p in &files.tasks {
                man.output(p);
            }
            println!(
                "synth: {} cells, {} events, {} tasks -> {}",
                data.cells.len(),
                data.events.len(),
                data.tasks.len(),
                out.display()
            );
            man.write(&files.events)?;
        }
        Command::GridIndex { input, out } => {
            man.input(&input)?;
            let events = geomob::io::read_events(&input, Some(&cfg.grid))?;
            geomob::io::write_events(&out, &events)?;
            println!("grid-index: {} events -> {}", events.len(), out.display());
            man.output(&out);
            man.write(&out)?;
        }
        Command::BuildGraph { events, out, edges_tsv } => {
            man.input(&events)?;
            let records = geomob::io::read_events(&events, Some(&cfg.grid))?;
            let graph = build_graph(records)?;
            geomob::io::write_graph(&out, &graph)?;
            man.output(&out);
            if let Some(tsv) = &edges_tsv {
                geomob::io::write_graph_tsv(tsv, &graph)?;
                man.output(tsv);
            }
            println!(
                "build-graph: {} nodes, {} edges -> {}",
                graph.len(),
                graph.num_arcs() / 2,
                out.display()
            );
            man.write(&out)?;
        }
        Command::SampleGraph { graph, out, ratio, mode } => {
            man.input(&graph)?;
            let g = geomob::io::read_graph(&graph)?;
            let ratio = ratio.unwrap_or(cfg.sample.ratio);
            let mode = match mode.as_deref() {
                None => cfg.sample.mode,
                Some("topk") => SampleMode::Topk,
                Some("random") => SampleMode::Random,
                Some(other) => return Err(usage(format!("unknown sample mode '{other}'"))),
            };
            let sampled = match mode {
                SampleMode::Topk => sample_topk(&g, ratio)?,
                SampleMode::Random => sample_random(&g, ratio, cfg.sample.seed)?,
            };
            geomob::io::write_graph(&out, &sampled)?;
            println!(
                "sample-graph: kept {} of {} edges -> {}",
                sampled.num_arcs() / 2,
                g.num_arcs() / 2,
                out.display()
            );
            man.output(&out);
            man.write(&out)?;
        }
        Command::TrainLine { graph, out } => {
            man.input(&graph)?;
            let g = geomob::io::read_graph(&graph)?;
            let line = train_line(&g, &cfg.line)?;
            if !line.isolated.is_empty() {
                eprintln!(
                    "warning: {} isolated nodes received zero vectors",
                    line.isolated.len()
                );
            }
            geomob::io::write_embeddings(&out, &line.embeddings)?;
            println!(
                "train-line: {} nodes x {} dims -> {}",
                line.embeddings.len(),
                line.embeddings.dim(),
                out.display()
            );
            man.output(&out);
            man.write(&out)?;
        }
        Command::TrainAlign { graph, init, text, image, demo, out, log } => {
            man.input(&graph)?;
            man.input(&init)?;
            let g = geomob::io::read_graph(&graph)?;
            let line_init = geomob::io::read_embeddings(&init)?;
            let mut tables = [None, None, None];
            for (slot, path) in tables.iter_mut().zip([&text, &image, &demo]) {
                if let Some(p) = path {
                    man.input(p)?;
                    *slot = Some(load_modality(p)?);
                }
            }
            let [text_t, image_t, demo_t] = tables;
            let data = ModalityData::from_tables(text_t, image_t, demo_t)?;
            let plan = PropagationPlan::new(&g, cfg.lightgcn.layers, cfg.lightgcn.norm_mode);
            let result = train_align(&g, &plan, &line_init, &data, &cfg.align)?;
            for w in &result.warnings {
                eprintln!("warning: {w}");
            }
            geomob::io::write_embeddings(&out, &result.embeddings)?;
            man.output(&out);
            let log_path = log.unwrap_or_else(|| {
                let mut name = out.file_name().unwrap_or_default().to_os_string();
                name.push(".log.tsv");
                out.with_file_name(name)
            });
            let mut w = std::io::BufWriter::new(File::create(&log_path)?);
            for e in &result.log {
                writeln!(w, "{}\t{:.6}\t{:.6}", e.epoch, e.train_loss, e.val_loss)?;
            }
            w.flush()?;
            man.output(&log_path);
            let last = result.log.last();
            println!(
                "train-align: {} epochs, final train loss {:.4}, val loss {:.4} -> {}",
                result.log.len(),
                last.map_or(f64::NAN, |e| e.train_loss),
                last.map_or(f64::NAN, |e| e.val_loss),
                out.display()
            );
            man.write(&out)?;
        }
        Command::ExportEmb { emb, out } => {
            man.input(&emb)?;
            let table = geomob::io::read_embeddings(&emb)?;
            geomob::io::write_modality_tsv(&out, &table)?;
            println!("export-emb: {} rows -> {}", table.len(), out.display());
            man.output(&out);
            man.write(&out)?;
        }
        Command::Probe { emb, tasks, out } => {
            man.input(&emb)?;
            let table = geomob::io::read_embeddings(&emb)?;
            let mut datasets: Vec<TaskDataset> = Vec::new();
            for p in &tasks {
                man.input(p)?;
                let name = p
                    .file_stem()
                    .and_then(|s| s.to_str())
                    .ok_or_else(|| usage(format!("bad task path {}", p.display())))?;
                datasets.push(geomob::io::read_task(p, name)?);
            }
            let outcomes = run_benchmark(&table, &datasets, &cfg.probe);
            let report = render_report(&outcomes);
            std::fs::write(&out, &report)?;
            print!("{report}");
            man.output(&out);
            man.write(&out)?;
        }
        Command::Distill { emb, out } => {
            man.input(&emb)?;
            let teacher = geomob::io::read_embeddings(&emb)?;
            if teacher.dim() != cfg.distill.out_dim {
                return Err(Error::Config(format!(
                    "teacher dim {} does not match distill.out_dim {}",
                    teacher.dim(),
                    cfg.distill.out_dim
                )));
            }
            let mut coords = Vec::with_capacity(teacher.len());
            for &c in teacher.cells() {
                coords.push(centroid_of(c, &cfg.grid)?);
            }
            let (surrogate, report) = train_distill(&coords, teacher.data(), &cfg.distill)?;
            write_surrogate(&out, &surrogate)?;
            println!(
                "distill: {} epochs, final training mse {:.6} -> {}",
                report.epochs_run,
                report.final_mse,
                out.display()
            );
            man.output(&out);
            man.write(&out)?;
        }
        Command::Query { surrogate, lat, lon, coords, out } => {
            man.input(&surrogate)?;
            let s = read_surrogate(&surrogate)?;
            let mut lines = Vec::new();
            match (lat, lon, coords) {
                (Some(lat), Some(lon), None) => {
                    let v = query(GeoCoord { lat, lon }, &s)?;
                    lines.push(join(&v));
                }
                (None, None, Some(path)) => {
                    let reader = BufReader::new(File::open(&path)?);
                    for (idx, line) in reader.lines().enumerate() {
                        let line = line?;
                        if line.trim().is_empty() {
                            continue;
                        }
                        let mut parts = line.split('\t');
                        let parse = |s: Option<&str>, what: &str| -> Result<f64> {
                            s.and_then(|x| x.trim().parse::<f64>().ok()).ok_or(Error::Parse {
                                line: idx + 1,
                                msg: format!("bad {what}"),
                            })
                        };
                        let lat = parse(parts.next(), "lat")?;
                        let lon = parse(parts.next(), "lon")?;
                        let v = query(GeoCoord { lat, lon }, &s)?;
                        lines.push(format!("{lat}\t{lon}\t{}", join(&v)));
                    }
                }
                _ => {
                    return Err(usage("query needs either --lat and --lon, or --coords <file>"))
                }
            }
            let text = lines.join("\n") + "\n";
            match out {
                Some(p) => {
                    std::fs::write(&p, text)?;
                    man.output(&p);
                    man.write(&p)?;
                }
                None => print!("{text}"),
            }
        }
    }
    Ok(())
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x}")).collect::<Vec<_>>().join(",")
}
