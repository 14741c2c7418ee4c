//! `meshannot`: batch entry points and the annotation server.

mod report;

use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use meshannot_core::fixture::{Fixture, FixtureSpec};
use meshannot_core::mesh::{
    load_annotations, load_mesh, save_annotations, write_face_property_ply, FaceLabelMap, PixelLabelMask,
};
use meshannot_core::metrics::{aggregate_user_study, UserStudyRecord};
use meshannot_core::sampling::{sample_points, transfer_to_faces, transfer_to_pixels, PointCloud, SamplingStrategy};
use meshannot_core::segmentation::oversegment;
use meshannot_core::session::SessionParams;
use meshannot_core::{LabelTaxonomy, TexturedMesh};
use serde_json::json;

use report::{classify, evaluate, Invalid};

#[derive(Parser, Debug)]
#[command(name = "meshannot", version, about = "Semantic annotation tools for textured urban meshes")]
struct Cli {
    /// Seed for every randomised step.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Parameter set as inline JSON or `@file.json`.
    #[arg(long, global = true)]
    params: Option<String>,
    /// Cap on worker threads for parallel kernels.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Print machine-readable JSON reports.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Over-segment a mesh into planar segments.
    Segment {
        mesh: PathBuf,
        /// Writes `segments.ply` with a per-face `segment` property.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sample a labelled point cloud from a mesh.
    Sample(SampleArgs),
    /// Transfer point labels back to faces and texels.
    Transfer {
        mesh: PathBuf,
        cloud: PathBuf,
        /// Annotation export directory to write.
        #[arg(long)]
        out: PathBuf,
    },
    /// Score predicted annotations against truth, or aggregate a user study.
    Eval(EvalArgs),
    /// Generate a synthetic fixture with ground truth.
    GenFixture {
        /// Preset scene.
        #[arg(value_enum)]
        preset: Preset,
        dir: PathBuf,
        /// Full fixture spec (JSON); overrides the preset.
        #[arg(long)]
        spec: Option<PathBuf>,
        /// Vertex noise σ in metres.
        #[arg(long)]
        vertex_noise: Option<f64>,
        /// Texel noise σ in 8-bit units.
        #[arg(long)]
        texel_noise: Option<f64>,
    },
    /// Run the HTTP annotation service.
    Serve {
        #[arg(long, env = "MESHANNOT_PORT", default_value_t = 8080)]
        port: u16,
        #[arg(long, env = "MESHANNOT_HOST", default_value = "127.0.0.1")]
        host: std::net::IpAddr,
        /// Directory that request paths are resolved against.
        #[arg(long, env = "MESHANNOT_DATA_ROOT", default_value = ".")]
        data_root: PathBuf,
        /// Static client assets to serve.
        #[arg(long, env = "MESHANNOT_STATIC_DIR")]
        static_dir: Option<PathBuf>,
        /// Server-side solver timeout in seconds.
        #[arg(long, default_value_t = 60)]
        timeout: u64,
    },
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum Preset {
    Cube,
    Village,
    Facade,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum Strategy {
    FaceCentered,
    Random,
    Poisson,
    Superpixel,
}

#[derive(Copy, Clone, Debug, PartialEq, ValueEnum)]
enum LabelSource {
    Faces,
    Pixels,
}

#[derive(Args, Debug)]
struct SampleArgs {
    mesh: PathBuf,
    #[arg(long, value_enum, default_value = "face-centered")]
    strategy: Strategy,
    /// Point count for `random`.
    #[arg(long)]
    count: Option<usize>,
    /// Minimum distance (m) for `poisson`.
    #[arg(long)]
    radius: Option<f64>,
    /// Superpixel grid step for `superpixel`.
    #[arg(long, default_value_t = 10)]
    region_size: u32,
    /// Annotation directory whose labels are attached to the points.
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "faces")]
    source: LabelSource,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long, required_unless_present = "study")]
    mesh: Option<PathBuf>,
    #[arg(long, required_unless_present = "study")]
    truth: Option<PathBuf>,
    #[arg(long, required_unless_present = "study")]
    pred: Option<PathBuf>,
    /// Boundary band in texels; defaults to 2 % of each page diagonal.
    #[arg(long)]
    band: Option<u32>,
    /// JSON user-study records to aggregate instead.
    #[arg(long, conflicts_with_all = ["mesh", "truth", "pred"])]
    study: Option<PathBuf>,
    /// Write the JSON report here as well.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-class CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
}

fn read_params(arg: &Option<String>) -> Result<SessionParams> {
    let Some(a) = arg else { return Ok(SessionParams::default()) };
    let text = match a.strip_prefix('@') {
        Some(path) => std::fs::read_to_string(path).with_context(|| format!("reading {path}"))?,
        None => a.clone(),
    };
    let p: SessionParams = serde_json::from_str(&text).map_err(|e| Invalid(format!("--params: {e}")))?;
    p.validate().map_err(|e| Invalid(e.to_string()))?;
    Ok(p)
}

fn mesh(path: &Path) -> Result<TexturedMesh> {
    let (m, report) = load_mesh(path).with_context(|| format!("loading {}", path.display()))?;
    if report.degenerate_dropped > 0 {
        eprintln!("dropped {} degenerate faces", report.degenerate_dropped);
    }
    Ok(m)
}

fn emit(json: bool, value: &serde_json::Value, text: impl FnOnce() -> String) -> Result<()> {
    let out = if json { serde_json::to_string_pretty(value)? } else { text() };
    print_line(&out)
}

/// Like `println!` but a closed pipe ends the command quietly.
fn print_line(s: &str) -> Result<()> {
    match writeln!(std::io::stdout().lock(), "{s}") {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        r => Ok(r?),
    }
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            bail!(Invalid("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    let params = read_params(&cli.params)?;
    let seed = cli.seed.unwrap_or(0);
    match cli.command {
        Command::Segment { mesh: path, out } => {
            let m = mesh(&path)?;
            let seg = oversegment(&m, &params.segmentation)?;
            if let Some(dir) = &out {
                std::fs::create_dir_all(dir)?;
                write_face_property_ply(&m, "segment", &seg.face_ids(), &dir.join("segments.ply"))?;
            }
            let sizes: Vec<usize> = seg.segments.iter().map(|s| s.faces.len()).collect();
            let v = json!({"faces": m.face_count(), "segments": seg.len(), "segment_faces": sizes});
            emit(cli.json, &v, || format!("{} faces, {} segments", m.face_count(), seg.len()))
        }
        Command::Sample(a) => {
            let m = mesh(&a.mesh)?;
            let strategy = match a.strategy {
                Strategy::FaceCentered => SamplingStrategy::FaceCentered,
                Strategy::Random => SamplingStrategy::Random {
                    count: a.count.ok_or_else(|| Invalid("--count is required for random sampling".into()))?,
                },
                Strategy::Poisson => SamplingStrategy::Poisson {
                    radius: a.radius.ok_or_else(|| Invalid("--radius is required for poisson sampling".into()))?,
                },
                Strategy::Superpixel => SamplingStrategy::Superpixel { region_size: a.region_size },
            };
            let mut cloud = sample_points(&m, &strategy, seed)?;
            if let Some(dir) = &a.labels {
                let (_, faces, masks) = load_annotations(&m, dir)?;
                match a.source {
                    LabelSource::Faces => cloud.label_from_faces(&faces),
                    LabelSource::Pixels => cloud.label_from_pixels(&masks),
                }
            }
            cloud.write_ply(&a.out)?;
            let v = json!({"points": cloud.len(), "faces": m.face_count(), "out": a.out});
            emit(cli.json, &v, || format!("{} points written to {}", cloud.len(), a.out.display()))
        }
        Command::Transfer { mesh: path, cloud, out } => {
            let m = mesh(&path)?;
            let c = PointCloud::read_ply(&cloud)?;
            let faces: FaceLabelMap = transfer_to_faces(&m, &c)?;
            let masks: PixelLabelMask = if m.is_textured() { transfer_to_pixels(&m, &c)? } else { PixelLabelMask::unclassified(&m) };
            let manifest = save_annotations(&m, &LabelTaxonomy::urban(), &faces, &masks, &out)?;
            let v = json!({"points": c.len(), "faces": m.face_count(), "manifest": manifest});
            emit(cli.json, &v, || format!("labels for {} faces written to {}", m.face_count(), out.display()))
        }
        Command::Eval(a) => {
            let report = if let Some(study) = &a.study {
                let text = std::fs::read_to_string(study).with_context(|| format!("reading {}", study.display()))?;
                let records: Vec<UserStudyRecord> =
                    serde_json::from_str(&text).map_err(|e| Invalid(format!("{}: {e}", study.display())))?;
                let summary = aggregate_user_study(&records)?;
                if a.csv.is_some() {
                    bail!(Invalid("--csv applies to label evaluation only".into()));
                }
                serde_json::to_value(summary)?
            } else {
                let m = mesh(a.mesh.as_deref().expect("required by clap"))?;
                let (_, tf, tp) = load_annotations(&m, a.truth.as_deref().expect("required by clap"))?;
                let (_, pf, pp) = load_annotations(&m, a.pred.as_deref().expect("required by clap"))?;
                let r = evaluate(&m, (&tf, &tp), (&pf, &pp), a.band)?;
                if let Some(csv) = &a.csv {
                    r.write_csv(csv)?;
                }
                serde_json::to_value(r)?
            };
            if let Some(out) = &a.out {
                std::fs::write(out, serde_json::to_string_pretty(&report)? + "\n")?;
            }
            // reports are JSON either way
            print_line(&serde_json::to_string_pretty(&report)?)
        }
        Command::GenFixture { preset, dir, spec, vertex_noise, texel_noise } => {
            let mut s = match &spec {
                Some(path) => {
                    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                    serde_json::from_str(&text).map_err(|e| Invalid(format!("{}: {e}", path.display())))?
                }
                None => match preset {
                    Preset::Cube => FixtureSpec::cube_on_plane(),
                    Preset::Village => FixtureSpec::box_village(),
                    Preset::Facade => FixtureSpec::facade_windows(),
                },
            };
            if let Some(seed) = cli.seed {
                s.seed = seed;
            }
            if let Some(v) = vertex_noise {
                s.vertex_noise = v;
            }
            if let Some(t) = texel_noise {
                s.texel_noise = t;
            }
            if !(s.vertex_noise >= 0.0 && s.texel_noise >= 0.0) {
                bail!(Invalid("noise must be non-negative".into()));
            }
            let f = Fixture::generate(&s)?;
            let obj = f.write(&dir)?;
            let v = json!({
                "mesh": obj,
                "faces": f.mesh.face_count(),
                "boxes": f.truth.boxes.len(),
                "windows": f.truth.windows.len(),
                "expected_segments": f.truth.expected_segments,
            });
            emit(cli.json, &v, || format!("{} faces written to {}", f.mesh.face_count(), obj.display()))
        }
        Command::Serve { port, host, data_root, static_dir, timeout } => {
            tracing_subscriber::fmt()
                .with_env_filter(
                    tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
                )
                .init();
            if !data_root.is_dir() {
                bail!(Invalid(format!("data root {} is not a directory", data_root.display())));
            }
            let config = meshannot_service::ServiceConfig {
                data_root,
                timeout: std::time::Duration::from_secs(timeout),
                static_dir,
            };
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(meshannot_service::serve(config, SocketAddr::new(host, port)))?;
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(classify(&e))
        }
    }
}
