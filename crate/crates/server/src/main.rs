use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use biopsym_core::anatomy::load_obj;
use biopsym_core::biopsy::{evaluate_protocol, fire_biopsy, score_segment, BiopsySample};
use biopsym_core::exercises::Catalog;
use biopsym_core::geom::Segment;
use biopsym_core::probe::{guide_line_of, image_plane_of, ProbePose};
use biopsym_core::volume::{generate_phantom, load_volume, save_volume, write_pgm, PhantomSpec};
use biopsym_core::{Pose, Prostate, Volume};
use biopsym_server::http::DEFAULT_CATALOG;
use biopsym_server::scenario::{Scenarios, SliceConfig};
use biopsym_server::{router, AppState};
use biopsym_store::NdjsonStore;
use clap::{Parser, Subcommand};
use serde::Deserialize;
use tracing_subscriber::EnvFilter;

#[derive(Parser)]
#[command(name = "biopsym", version, about = "Prostate biopsy trainer")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the HTTP/WebSocket service.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long, env = "BIOPSYM_DATA_DIR", default_value = "data")]
        data_dir: PathBuf,
        /// Scenario file; the bundled scenarios when omitted.
        #[arg(long)]
        scenarios: Option<PathBuf>,
        /// Exercise catalog; the bundled catalog when omitted.
        #[arg(long)]
        catalog: Option<PathBuf>,
    },
    /// Write a synthetic volume.
    Phantom {
        #[arg(long, default_value_t = 2011)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Voxels per side; keeps the default field of view.
        #[arg(long)]
        size: Option<usize>,
    },
    /// Render one masked slice to a PGM image.
    Slice {
        #[arg(long)]
        volume: PathBuf,
        /// "depth_mm,pitch,yaw,roll" with angles in degrees.
        #[arg(long, allow_hyphen_values = true)]
        pose: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 256)]
        px: usize,
        #[arg(long, default_value_t = 0.3)]
        mm_per_px: f64,
    },
    /// Score recorded fires against a gland mesh.
    Score {
        /// Gland surface (OBJ).
        #[arg(long)]
        mesh: PathBuf,
        /// JSON lines, each a stored sample or {"pose":{..},"insertion_mm":x}.
        #[arg(long)]
        samples: PathBuf,
        /// Scenario file providing probe, needle, zone axes and order.
        #[arg(long)]
        scenario: PathBuf,
        /// Scenario id within the file; the first one when omitted.
        #[arg(long)]
        id: Option<String>,
    },
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ScoreLine {
    Recorded {
        segment: Segment<f64>,
        fire_pose: Pose,
        insertion_mm: f64,
    },
    Fire {
        pose: Pose,
        insertion_mm: f64,
    },
}

fn main() -> Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")))
        .with_writer(std::io::stderr)
        .init();
    match Cli::parse().cmd {
        Cmd::Serve {
            port,
            host,
            data_dir,
            scenarios,
            catalog,
        } => serve(host, port, data_dir, scenarios, catalog),
        Cmd::Phantom { seed, out, size } => {
            let mut spec = PhantomSpec::<f64> {
                seed,
                ..Default::default()
            };
            if let Some(n) = size {
                let mm = spec.spacing.x * (spec.dims[0] - 1) as f64 / (n.max(2) - 1) as f64;
                spec = spec.with_grid([n, n, n], [mm; 3].into());
            }
            let vol: Volume = generate_phantom(&spec)?;
            save_volume(&vol, &out).with_context(|| format!("writing {}", out.display()))?;
            Ok(())
        }
        Cmd::Slice {
            volume,
            pose,
            out,
            px,
            mm_per_px,
        } => {
            let vol: Volume = load_volume(&volume).with_context(|| format!("reading {}", volume.display()))?;
            let v: Vec<f64> = pose
                .split(',')
                .map(|s| s.trim().parse())
                .collect::<Result<_, _>>()
                .context("--pose")?;
            let [depth, pitch, yaw, roll] = v[..] else {
                bail!("--pose needs four comma-separated numbers");
            };
            let spec = Default::default();
            let pose = ProbePose::from_degrees(&spec, depth, pitch, yaw, roll)?;
            let extent = px as f64 * mm_per_px;
            let c = SliceConfig::default();
            let img = vol
                .extract_slice(&image_plane_of(&spec, &pose, (extent, extent), (px, px)))?
                .apply_sector_mask(c.fov_deg, c.r_min_mm, extent.min(c.r_max_mm), (px as f64 / 2.0, 0.0))?;
            let mut w = BufWriter::new(File::create(&out)?);
            write_pgm(&img, &mut w)?;
            w.flush()?;
            Ok(())
        }
        Cmd::Score {
            mesh,
            samples,
            scenario,
            id,
        } => score(mesh, samples, scenario, id),
    }
}

fn score(mesh: PathBuf, samples: PathBuf, scenario: PathBuf, id: Option<String>) -> Result<()> {
    let scenarios = Scenarios::load(&scenario)?;
    let sc = match &id {
        Some(id) => scenarios.get(id).with_context(|| format!("no scenario {id}"))?,
        None => scenarios.iter().next().context("scenario file is empty")?,
    };
    let def = &sc.def;
    let gland = Prostate::new(load_obj(&mesh)?, def.zone_axes)?;
    let reader = BufReader::new(File::open(&samples).with_context(|| format!("reading {}", samples.display()))?);
    let mut fired = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: ScoreLine =
            serde_json::from_str(&line).with_context(|| format!("{}:{}", samples.display(), n + 1))?;
        let (pose, insertion, core) = match parsed {
            ScoreLine::Recorded {
                segment,
                fire_pose,
                insertion_mm,
            } => (fire_pose, insertion_mm, score_segment(segment, &gland)),
            ScoreLine::Fire { pose, insertion_mm } => {
                let guide = guide_line_of(&def.probe, &pose);
                (
                    pose,
                    insertion_mm,
                    fire_biopsy(&def.needle, &guide, insertion_mm, &gland)?,
                )
            }
        };
        fired.push(BiopsySample::new(fired.len(), pose, insertion, core, 0));
    }
    let result = evaluate_protocol(&fired, &def.canonical_order, &def.targets)?;
    println!("{}", serde_json::to_string_pretty(&result)?);
    Ok(())
}

fn serve(
    host: String,
    port: u16,
    data_dir: PathBuf,
    scenarios: Option<PathBuf>,
    catalog: Option<PathBuf>,
) -> Result<()> {
    let scenarios = match scenarios {
        Some(p) => Scenarios::load(&p).with_context(|| format!("loading {}", p.display()))?,
        None => Scenarios::bundled(),
    };
    let catalog = match catalog {
        Some(p) => Catalog::from_json(&std::fs::read_to_string(&p)?)?,
        None => Catalog::from_json(DEFAULT_CATALOG)?,
    };
    let store = NdjsonStore::open(&data_dir).with_context(|| format!("opening store in {}", data_dir.display()))?;
    let state = Arc::new(AppState::new(scenarios, catalog, Box::new(store))?);
    let addr: SocketAddr = format!("{host}:{port}").parse().context("--host/--port")?;
    tokio::runtime::Runtime::new()?.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr).await?;
        tracing::info!("listening on {}", listener.local_addr()?);
        axum::serve(listener, router(state))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await?;
        Ok(())
    })
}
