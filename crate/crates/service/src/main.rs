use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;
use std::sync::Arc;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use meshforge_core::asset::export_obj;
use meshforge_core::recon::{
    bake_field, read_weights, write_weights, DecoderHeads, Triplane, DEFAULT_CHANNELS, DEFAULT_HIDDEN,
    DEFAULT_PLANE_RESOLUTION,
};
use meshforge_core::sketch::parse_sketch;
use meshforge_service::api::{router, spawn_eviction, AppState};
use meshforge_service::gateway::Gateway;
use meshforge_service::mock_backend::{mock_backend_router, MockBackendOptions};
use meshforge_service::pipeline::{finish_mesh, run_headless, Pipeline, PipelineSettings, Selection, OBJECT_NAME};
use meshforge_service::session::{GenerationParams, SessionState};
use meshforge_service::ServiceConfig;

const EXIT_FAILED: u8 = 1;
const EXIT_USAGE: u8 = 2;

#[derive(Parser)]
#[command(name = "meshforge", version, about = "Sketch and prompt to textured mesh")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the whole pipeline once and write the asset files.
    Run(RunArgs),
    /// Serve the session HTTP API.
    Serve {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides the configured listen address.
        #[arg(long)]
        bind: Option<String>,
    },
    /// Serve the deterministic mock backends over the backend wire protocol.
    MockBackend {
        #[arg(long, default_value = "127.0.0.1:8090")]
        bind: String,
        #[arg(long)]
        token: Option<String>,
    },
    /// Bake a triplane and decoder into a mesh.
    Bake(BakeArgs),
}

#[derive(Clone, Copy, Debug)]
struct SelectArg(Selection);

impl FromStr for SelectArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s == "auto" {
            return Ok(Self(Selection::Auto));
        }
        s.parse()
            .map(|i| Self(Selection::Index(i)))
            .map_err(|_| format!("expected `auto` or a candidate index, got `{s}`"))
    }
}

#[derive(Args)]
struct RunArgs {
    /// Sketch interchange document.
    #[arg(long)]
    sketch: PathBuf,
    #[arg(long)]
    prompt: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Image backend: `mock` or an HTTP base URL.
    #[arg(long)]
    backend: Option<String>,
    /// Reconstruction backend: `mock` or an HTTP base URL.
    #[arg(long)]
    recon: Option<String>,
    #[arg(long)]
    resolution: Option<usize>,
    #[arg(long)]
    candidates: Option<u32>,
    #[arg(long, default_value = "auto")]
    select: SelectArg,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct BakeArgs {
    /// Triplane and decoder weights; random ones from `--seed` when absent.
    #[arg(long)]
    weights: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 64)]
    resolution: usize,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Also write the weights used, e.g. to keep a random draw.
    #[arg(long)]
    save_weights: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "warn".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    let runtime = tokio::runtime::Runtime::new().expect("tokio runtime");
    let result = runtime.block_on(async {
        match cli.command {
            Command::Run(args) => run(args).await,
            Command::Serve { config, bind } => serve(config.as_deref(), bind).await.map(|_| ExitCode::SUCCESS),
            Command::MockBackend { bind, token } => mock_backend(&bind, token).await.map(|_| ExitCode::SUCCESS),
            Command::Bake(args) => bake(args).map(|_| ExitCode::SUCCESS),
        }
    });
    result.unwrap_or_else(|e| {
        eprintln!("error: {e:#}");
        ExitCode::from(EXIT_FAILED)
    })
}

fn usage(msg: impl std::fmt::Display) -> anyhow::Result<ExitCode> {
    eprintln!("error: {msg}");
    eprintln!("usage: meshforge run --sketch <file> --prompt <text> [--seed u64] [--backend mock|<url>] [--recon mock|<url>] [--resolution N] [--candidates k] [--select auto|<idx>] [--out <dir>]");
    Ok(ExitCode::from(EXIT_USAGE))
}

async fn run(args: RunArgs) -> anyhow::Result<ExitCode> {
    let mut cfg = match ServiceConfig::load(args.config.as_deref()) {
        Ok(c) => c,
        Err(e) => return usage(e),
    };
    if let Some(b) = args.backend {
        cfg.image_backend = b;
    }
    if let Some(r) = args.recon {
        cfg.recon_backend = r;
    }
    if let Some(n) = args.resolution {
        cfg.resolution = n;
    }
    if let Some(k) = args.candidates {
        cfg.candidates = k;
    }
    if let Err(e) = cfg.validate() {
        return usage(e);
    }
    let selection = args.select.0;
    if selection.index() >= cfg.candidates as usize {
        return usage(format!("--select {} but only {} candidates", selection.index(), cfg.candidates));
    }
    let doc = match fs::read(&args.sketch) {
        Ok(d) => d,
        Err(e) => return usage(format!("cannot read {}: {e}", args.sketch.display())),
    };
    let canvas = match parse_sketch(&doc) {
        Ok(c) => c,
        Err(e) => return usage(format!("{}: {e}", args.sketch.display())),
    };
    let gateway = match Gateway::from_config(&cfg) {
        Ok(g) => Arc::new(g),
        Err(e) => return usage(e),
    };
    let pipeline = Pipeline::new(gateway, PipelineSettings::from(&cfg));
    let params = GenerationParams {
        prompt: args.prompt,
        seed: args.seed,
        candidates: cfg.candidates,
    };
    let record = run_headless(&pipeline, "cli", canvas, params, selection).await;

    let out = &args.out;
    let cand_dir = out.join("candidates");
    fs::create_dir_all(&cand_dir).with_context(|| format!("creating {}", cand_dir.display()))?;
    for (i, c) in record.candidates.iter().enumerate() {
        write(&cand_dir.join(format!("{i}.png")), &c.png)?;
    }
    let t = record.timings_ms;
    let Some(asset) = record.asset.as_ref().filter(|_| record.state() == SessionState::Done) else {
        let reason = record
            .error
            .as_ref()
            .map(|e| format!("{} failed: {}", e.stage, e.message))
            .unwrap_or_else(|| format!("ended in state {:?}", record.state()));
        eprintln!("error: {reason}");
        return Ok(ExitCode::from(EXIT_FAILED));
    };
    write(&out.join("mesh.obj"), asset.obj_text.as_bytes())?;
    write(&out.join("material.mtl"), asset.mtl_text.as_bytes())?;
    write(&out.join("manifest.json"), asset.manifest.to_json().as_bytes())?;
    if let Some(png) = &asset.preview_png {
        write(&out.join("preview.png"), png)?;
    }
    println!(
        "done in {:.0} ms: image_infer {:.0} | background_removal {:.0} | reconstruct {:.0} | extract {:.0} | package {:.0} | {} vertices, {} triangles{}",
        t.total,
        t.image_infer,
        t.background_removal,
        t.reconstruct,
        t.extract,
        t.package,
        asset.manifest.counts.vertices,
        asset.manifest.counts.triangles,
        if asset.manifest.budget_exceeded { " (over budget)" } else { "" },
    );
    Ok(ExitCode::SUCCESS)
}

fn write(path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

async fn shutdown_signal() {
    let _ = tokio::signal::ctrl_c().await;
}

async fn serve(config: Option<&Path>, bind: Option<String>) -> anyhow::Result<()> {
    let mut cfg = ServiceConfig::load(config)?;
    if let Some(b) = bind {
        cfg.bind = b;
    }
    let state = AppState::from_config(&cfg)?;
    spawn_eviction(state.clone());
    let listener = tokio::net::TcpListener::bind(&cfg.bind)
        .await
        .with_context(|| format!("binding {}", cfg.bind))?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(shutdown_signal())
        .await?;
    Ok(())
}

async fn mock_backend(bind: &str, token: Option<String>) -> anyhow::Result<()> {
    let listener = tokio::net::TcpListener::bind(bind)
        .await
        .with_context(|| format!("binding {bind}"))?;
    eprintln!("mock backend on http://{}", listener.local_addr()?);
    let opts = MockBackendOptions {
        token,
        ..MockBackendOptions::default()
    };
    axum::serve(listener, mock_backend_router(opts))
        .with_graceful_shutdown(shutdown_signal())
        .await?;
    Ok(())
}

fn bake(args: BakeArgs) -> anyhow::Result<()> {
    let (tp, heads) = match &args.weights {
        Some(p) => {
            let f = fs::File::open(p).with_context(|| format!("opening {}", p.display()))?;
            read_weights(std::io::BufReader::new(f))?
        }
        None => (
            Triplane::random(DEFAULT_PLANE_RESOLUTION, DEFAULT_CHANNELS, args.seed)?,
            DecoderHeads::random(DEFAULT_CHANNELS, DEFAULT_HIDDEN, args.seed.wrapping_add(1)),
        ),
    };
    if let Some(p) = &args.save_weights {
        let f = fs::File::create(p).with_context(|| format!("creating {}", p.display()))?;
        let mut w = std::io::BufWriter::new(f);
        write_weights(&mut w, &tp, &heads)?;
        w.flush()?;
    }
    let field = bake_field(&tp, &heads, args.resolution)?;
    let mesh = finish_mesh(&field).map_err(anyhow::Error::msg)?;
    let (obj, mtl) = export_obj(&mesh, OBJECT_NAME)?;
    fs::create_dir_all(&args.out)?;
    write(&args.out.join("mesh.obj"), obj.as_bytes())?;
    write(&args.out.join("material.mtl"), mtl.as_bytes())?;
    println!(
        "baked {} vertices, {} triangles at N = {}",
        mesh.vertices.len(),
        mesh.triangles.len(),
        args.resolution
    );
    Ok(())
}
