use std::fs;
use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use scenedeck::annotate::load_or_annotate;
use scenedeck::catalog::movienet;
use scenedeck::catalog::EMBEDDINGS_DIR;
use scenedeck::synth::{generate_synthetic, SynthSpec};
use scenedeck::{load_catalog, EmbeddingStore, TextFallback};

use crate::api::{visualize_response, ApiError, Snapshot};
use crate::config::{FallbackSpec, DEFAULT_DATA_DIR, DEFAULT_PORT};
use crate::service;

/// Exit status for a rejected query or script.
pub const EXIT_BAD_INPUT: u8 = 2;

#[derive(Debug, Parser)]
#[command(name = "scenedeck", version, about = "Visualize screenplay dialogue with movie frames")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct DataDir {
    /// Catalog root holding catalog/, images/ and embeddings/.
    #[arg(long, env = "SCENEDECK_DATA_DIR", default_value = DEFAULT_DATA_DIR)]
    pub data_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct Fallback {
    /// Embedder for texts missing from the store: hash, none or sidecar:URL.
    #[arg(long, env = "SCENEDECK_TEXT_FALLBACK", default_value = "hash")]
    pub text_fallback: FallbackSpec,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate a catalog, optionally converting a MovieNet export first.
    Ingest {
        #[command(flatten)]
        data: DataDir,
        #[arg(long)]
        from_movienet: Option<PathBuf>,
    },
    /// Compute the annotation cache.
    Annotate {
        #[command(flatten)]
        data: DataDir,
        #[command(flatten)]
        fallback: Fallback,
        /// Recompute even when a cache exists.
        #[arg(long)]
        no_cache: bool,
    },
    /// Generate a synthetic catalog with images and embeddings.
    Synth(SynthArgs),
    /// Run the HTTP service.
    Serve {
        #[command(flatten)]
        data: DataDir,
        #[command(flatten)]
        fallback: Fallback,
        #[arg(long, env = "SCENEDECK_PORT", default_value_t = DEFAULT_PORT)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: IpAddr,
        /// Built web UI served at `/`.
        #[arg(long)]
        ui_dir: Option<PathBuf>,
        #[arg(long)]
        no_cache: bool,
    },
    /// Run one visualization and write the response JSON.
    Query {
        #[command(flatten)]
        data: DataDir,
        #[command(flatten)]
        fallback: Fallback,
        /// Screenplay file.
        #[arg(long)]
        script: PathBuf,
        #[arg(long, default_value = "")]
        attrs: String,
        #[arg(long)]
        max_results: Option<usize>,
        /// Output file; stdout when omitted or `-`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Total scenes; must be a multiple of --movies.
    #[arg(long, default_value_t = 40)]
    pub scenes: usize,
    #[arg(long, default_value_t = 4)]
    pub movies: usize,
    #[arg(long, default_value_t = 4)]
    pub shots_per_scene: usize,
    #[arg(long, default_value_t = 3)]
    pub frames_per_shot: usize,
    #[arg(long, default_value_t = 3)]
    pub casts_per_scene: usize,
    #[arg(long, default_value_t = 90)]
    pub locations: usize,
    #[arg(long, default_value_t = 512)]
    pub dim: usize,
    #[arg(long, default_value_t = 0.25)]
    pub sigma: f64,
    /// Store embeddings for shot keyframes only.
    #[arg(long)]
    pub keyframes_only: bool,
}

impl SynthArgs {
    pub fn spec(&self) -> anyhow::Result<SynthSpec> {
        if self.movies == 0 || self.scenes % self.movies != 0 {
            bail!(
                "--scenes ({}) must be a positive multiple of --movies ({})",
                self.scenes,
                self.movies
            );
        }
        Ok(SynthSpec {
            seed: self.seed,
            n_movies: self.movies,
            scenes_per_movie: self.scenes / self.movies,
            shots_per_scene: self.shots_per_scene,
            frames_per_shot: self.frames_per_shot,
            casts_per_scene: self.casts_per_scene,
            location_vocab_size: self.locations,
            embedding_dim: self.dim,
            sigma: self.sigma,
            keyframes_only: self.keyframes_only,
        })
    }
}

fn load_store(data_dir: &Path, fallback: TextFallback) -> anyhow::Result<EmbeddingStore> {
    EmbeddingStore::load(&data_dir.join(EMBEDDINGS_DIR), fallback).context("loading embeddings")
}

fn ingest(data_dir: &Path, from_movienet: Option<&Path>) -> anyhow::Result<()> {
    if let Some(src) = from_movienet {
        let report = movienet::convert(src, data_dir)
            .with_context(|| format!("converting {}", src.display()))?;
        for w in &report.warnings {
            eprintln!("warning: {w}");
        }
        println!(
            "converted {} movies, {} scenes, {} frames",
            report.movies, report.scenes, report.frames
        );
    }
    let catalog = load_catalog(data_dir)?;
    println!(
        "catalog ok: {} movies, {} scenes, {} shots, {} frames, {} location tags",
        catalog.movies().len(),
        catalog.scenes().len(),
        catalog.shots().len(),
        catalog.frames().len(),
        catalog.location_vocabulary().len()
    );
    if data_dir.join(EMBEDDINGS_DIR).exists() {
        let store = load_store(data_dir, TextFallback::None)?;
        let missing = catalog
            .shots()
            .iter()
            .filter(|s| !store.has_frame(&s.keyframe_id))
            .count();
        println!(
            "embeddings ok: dim {}, {} frames, {missing} shot keyframes without a vector",
            store.dim(),
            store.frame_count()
        );
    } else {
        eprintln!("warning: no embeddings/ directory");
    }
    Ok(())
}

fn annotate(data_dir: &Path, fallback: &FallbackSpec, no_cache: bool) -> anyhow::Result<()> {
    let catalog = load_catalog(data_dir)?;
    let store = load_store(data_dir, fallback.build())?;
    let (annotations, recomputed) = load_or_annotate(data_dir, &catalog, &store, !no_cache)?;
    println!(
        "{} {} scenes",
        if recomputed { "annotated" } else { "cache holds" },
        annotations.len()
    );
    Ok(())
}

fn synth(args: &SynthArgs) -> anyhow::Result<()> {
    let spec = args.spec()?;
    let report = generate_synthetic(&spec, &args.out)?;
    println!(
        "wrote {} movies, {} scenes, {} frames ({} embedded) to {}",
        report.movies,
        report.scenes,
        report.frames,
        report.embedded_frames,
        args.out.display()
    );
    Ok(())
}

/// Message for a rejected query, with a caret under the offending byte.
pub fn describe_query_error(attrs: &str, err: &ApiError) -> String {
    let mut msg = format!("error: {err}");
    if let Some(p) = err.0.position {
        let col = attrs
            .char_indices()
            .take_while(|(i, _)| *i < p)
            .count();
        msg.push_str(&format!("\n  {attrs}\n  {}^", " ".repeat(col)));
    }
    msg
}

fn query(
    data_dir: &Path,
    fallback: &FallbackSpec,
    script: &Path,
    attrs: &str,
    max_results: Option<usize>,
    out: Option<&Path>,
) -> anyhow::Result<ExitCode> {
    let script_text = fs::read_to_string(script)
        .with_context(|| format!("reading {}", script.display()))?;
    // Reject a malformed query before paying for the catalog load.
    if let Err(e) = scenedeck::parse_query(attrs) {
        eprintln!("{}", describe_query_error(attrs, &e.into()));
        return Ok(ExitCode::from(EXIT_BAD_INPUT));
    }
    let (snapshot, report) = Snapshot::load(data_dir, fallback.build(), true)?;
    if !report.missing_images.is_empty() {
        eprintln!("warning: {} image files are missing", report.missing_images.len());
    }
    let response = match visualize_response(&snapshot, &script_text, attrs, max_results) {
        Ok(r) => r,
        Err(e) if e.status().is_client_error() => {
            eprintln!("{}", describe_query_error(attrs, &e));
            return Ok(ExitCode::from(EXIT_BAD_INPUT));
        }
        Err(e) => bail!(e),
    };
    for w in &response.warnings {
        eprintln!("warning: {w}");
    }
    let mut json = serde_json::to_string_pretty(&response)?;
    json.push('\n');
    match out {
        Some(p) if p != Path::new("-") => {
            fs::write(p, json).with_context(|| format!("writing {}", p.display()))?
        }
        _ => print!("{json}"),
    }
    Ok(ExitCode::SUCCESS)
}

async fn serve(
    data_dir: PathBuf,
    fallback: FallbackSpec,
    addr: SocketAddr,
    ui_dir: Option<PathBuf>,
    no_cache: bool,
) -> anyhow::Result<()> {
    let (local, _state, handle) = service::bind(addr, ui_dir, move || {
        let (snapshot, report) = Snapshot::load(&data_dir, fallback.build(), !no_cache)?;
        if report.annotations_recomputed {
            tracing::info!("annotation cache rebuilt");
        }
        if !report.missing_images.is_empty() {
            tracing::warn!(
                count = report.missing_images.len(),
                first = %report.missing_images[0],
                "image files missing; their frames will answer 404"
            );
        }
        Ok(snapshot)
    })
    .await?;
    tracing::info!(%local, "listening");
    handle.await?
}

pub fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::Ingest {
            data,
            from_movienet,
        } => ingest(&data.data_dir, from_movienet.as_deref())?,
        Command::Annotate {
            data,
            fallback,
            no_cache,
        } => annotate(&data.data_dir, &fallback.text_fallback, no_cache)?,
        Command::Synth(args) => synth(&args)?,
        Command::Serve {
            data,
            fallback,
            port,
            host,
            ui_dir,
            no_cache,
        } => {
            let runtime = tokio::runtime::Runtime::new()?;
            runtime.block_on(serve(
                data.data_dir,
                fallback.text_fallback,
                SocketAddr::new(host, port),
                ui_dir,
                no_cache,
            ))?
        }
        Command::Query {
            data,
            fallback,
            script,
            attrs,
            max_results,
            out,
        } => {
            return query(
                &data.data_dir,
                &fallback.text_fallback,
                &script,
                &attrs,
                max_results,
                out.as_deref(),
            )
        }
    }
    Ok(ExitCode::SUCCESS)
}
