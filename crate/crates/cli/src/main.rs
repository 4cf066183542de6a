//! `arthronav` command-line front end.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use arthronav::geometry::{CameraFile, CameraModel, Pose};
use arthronav::grid::{draw_overlay, project_grid, refine_projection, BHGrid, GridPoints, LandmarkPair};
use arthronav::harness::{
    default_camera, evaluate, generate_sequence, read_masks, run_ablation, standard_script, track_source, write_masks,
    InitMask, SequenceDir, SequenceGenerator, SequenceScript, TrackOptions, TrackSummary,
};
use arthronav::image::Image;
use arthronav::memory::{MemoryConfig, Variant};
use arthronav::raster::LabeledMesh;
use arthronav::registration::{register_frame, Curve2D, FrameRegistrationConfig, ViewpointPrior};
use arthronav::segmentation::{segment_first_frame, HsvThresholds, RegionGrowingOracle};
use arthronav::{Error, Result};
use clap::{Args, Parser, Subcommand};
use log::info;
use serde::de::DeserializeOwned;
use serde::Serialize;

#[derive(Parser)]
#[command(
    name = "arthronav",
    version,
    about = "Arthroscopic navigation pipeline and synthetic benchmark harness"
)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Overrides the seed of scripts and memory configs.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Only warnings and errors on stderr.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Render a scripted synthetic sequence with ground truth.
    Synth { script: PathBuf, outdir: PathBuf },
    /// Write the standard benchmark script.
    Script {
        #[arg(long)]
        degraded: bool,
        #[arg(long, default_value_t = 500)]
        frames: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// First-frame cartilage segmentation.
    Segment {
        frame: PathBuf,
        #[arg(long)]
        thresholds: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Register the virtual camera to a frame.
    Register {
        frame: PathBuf,
        mesh: PathBuf,
        labels: PathBuf,
        #[arg(long)]
        prior: PathBuf,
        #[arg(long)]
        report: Option<PathBuf>,
        /// Camera file supplying intrinsics (pose ignored); default camera otherwise.
        #[arg(long)]
        camera: Option<PathBuf>,
        /// Observed margin curve (JSON); the foreground outline otherwise.
        #[arg(long)]
        margin: Option<PathBuf>,
        #[arg(long)]
        thresholds: Option<PathBuf>,
        #[arg(long, default_value_t = 3)]
        grid: usize,
    },
    /// Track a generated sequence directory.
    Track {
        seqdir: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        diag: Option<PathBuf>,
        #[arg(long)]
        variant: Option<Variant>,
        /// Final memory-store snapshot (JSON).
        #[arg(long)]
        snapshot: Option<PathBuf>,
        /// Start from the ground-truth first mask instead of segmenting frame 0.
        #[arg(long)]
        truth_init: bool,
    },
    /// Project the Bernard–Hertel grid into a scope view.
    ProjectGrid {
        grid: PathBuf,
        camera: PathBuf,
        #[arg(long)]
        overlay: Option<PathBuf>,
        /// Frame to draw on; a black image of the camera's size otherwise.
        #[arg(long)]
        frame: Option<PathBuf>,
        #[arg(long)]
        points: Option<PathBuf>,
        /// Landmark pairs `[{"p_s": [x,y,z], "p_a": [u,v]}, …]` for refinement.
        #[arg(long)]
        landmarks: Option<PathBuf>,
    },
    /// Score predicted masks against ground truth.
    Eval {
        preddir: PathBuf,
        truthdir: PathBuf,
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Run memory ablation variants on one script.
    Ablate {
        script: PathBuf,
        #[arg(
            long,
            value_delimiter = ',',
            default_value = "full,no_longterm,no_sensory,fixed_similarity,single_level"
        )]
        variants: Vec<Variant>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::parse(path, e.to_string()))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::invalid(e.to_string()))?;
    write_text(path, &(text + "\n"))
}

fn thresholds(path: &Option<PathBuf>) -> Result<HsvThresholds> {
    let th = match path {
        Some(p) => read_json(p)?,
        None => HsvThresholds::default(),
    };
    th.validate()?;
    Ok(th)
}

fn memory_config(path: &Option<PathBuf>, seed: Option<u64>, variant: Option<Variant>) -> Result<MemoryConfig> {
    let mut cfg = match path {
        Some(p) => MemoryConfig::read_json(p)?,
        None => MemoryConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(v) = variant {
        cfg.variant = v;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn script(path: &Path, seed: Option<u64>) -> Result<SequenceScript> {
    let mut s = SequenceScript::read_json(path)?;
    if let Some(seed) = seed {
        s.seed = seed;
    }
    s.validate()?;
    Ok(s)
}

fn run(cli: Cli) -> Result<()> {
    let g = &cli.global;
    match cli.command {
        Command::Synth { script: path, outdir } => {
            let s = script(&path, g.seed)?;
            let m = generate_sequence(&s, &outdir)?;
            info!(
                "wrote {} frames ({}x{}) to {}",
                m.frames,
                m.width,
                m.height,
                outdir.display()
            );
        }
        Command::Script { degraded, frames, out } => {
            write_json(&out, &standard_script(g.seed.unwrap_or(11), frames, degraded))?;
        }
        Command::Segment {
            frame,
            thresholds: th,
            out,
        } => {
            let img = Image::read_ppm(&frame)?;
            let seg = segment_first_frame(&img, &thresholds(&th)?, &RegionGrowingOracle::default())?;
            seg.mask.write_pgm(&out)?;
            info!(
                "mask area {} px, centroid ({:.2}, {:.2}), candidate {} of {}",
                seg.mask.area(),
                seg.centroid.0,
                seg.centroid.1,
                seg.selected,
                seg.candidates
            );
        }
        Command::Register {
            frame,
            mesh,
            labels,
            prior,
            report,
            camera,
            margin,
            thresholds: th,
            grid,
        } => {
            let img = Image::read_ppm(&frame)?;
            let (mesh, _) = LabeledMesh::load(&mesh, &labels)?;
            let prior = ViewpointPrior::read_json(&prior)?;
            let cam = match camera {
                Some(p) => CameraModel::try_from(&read_json::<CameraFile>(&p)?)?,
                None => default_camera((img.width(), img.height()), Pose::identity()),
            };
            let margin = margin.map(|p| Curve2D::read_json(&p)).transpose()?;
            let cfg = FrameRegistrationConfig {
                thresholds: thresholds(&th)?,
                grid_n: grid,
                ..FrameRegistrationConfig::default()
            };
            let r = register_frame(&img, &mesh, &cam, &prior, margin, &cfg)?.report();
            match report {
                Some(p) => write_json(&p, &r)?,
                None => println!("{}", serde_json::to_string_pretty(&r).expect("plain data")),
            }
            info!(
                "score {:.4} after {} evaluations in {:.0} ms",
                r.score, r.evaluations, r.wall_ms
            );
        }
        Command::Track {
            seqdir,
            config,
            out,
            diag,
            variant,
            snapshot,
            truth_init,
        } => {
            let dir = SequenceDir::open(&seqdir)?;
            let opts = TrackOptions {
                config: memory_config(&config, g.seed, variant)?,
                init: if truth_init {
                    InitMask::Truth
                } else {
                    InitMask::Segment(HsvThresholds::default())
                },
                keep_masks: true,
                ..TrackOptions::default()
            };
            let run = track_source(&dir, &opts)?;
            write_masks(&out, &run.masks)?;
            let summary = run.summary();
            write_json(&out.join("track.json"), &summary)?;
            if let Some(p) = diag {
                let mut text = String::new();
                for d in &run.diagnostics {
                    text.push_str(&serde_json::to_string(d).expect("plain data"));
                    text.push('\n');
                }
                write_text(&p, &text)?;
            }
            if let Some(p) = snapshot {
                write_text(&p, &run.session.snapshot_json()?)?;
            }
            info!(
                "tracked {} frames at {:.1} fps; peak entries {} (working {}, long-term {})",
                summary.frames, summary.fps, summary.peak_entries, summary.peak_working, summary.peak_longterm
            );
        }
        Command::ProjectGrid {
            grid,
            camera,
            overlay,
            frame,
            points,
            landmarks,
        } => {
            let g = BHGrid::read_json(&grid)?;
            let mut cam = CameraModel::try_from(&read_json::<CameraFile>(&camera)?)?;
            if let Some(p) = landmarks {
                let lm: Vec<LandmarkPair> = read_json(&p)?;
                let r = refine_projection(&g, &cam, &lm, &Default::default())?;
                info!(
                    "refined: E {:.4} -> {:.4}, rmse {:.3} px",
                    r.initial_error, r.final_error, r.rmse
                );
                cam = arthronav::grid::adjusted_camera(&cam, &r.delta_r.into(), &r.delta_t.into());
            }
            let px = project_grid(&g, &cam)?;
            let pts = GridPoints::new(&g, &px);
            match points {
                Some(p) => write_json(&p, &pts)?,
                None => println!("{}", serde_json::to_string_pretty(&pts).expect("plain data")),
            }
            if let Some(out) = overlay {
                let base = match frame {
                    Some(f) => Image::read_ppm(&f)?,
                    None => {
                        let k = &cam.intrinsics;
                        let (w, h) = ((2.0 * k.cx).round().max(1.0), (2.0 * k.cy).round().max(1.0));
                        Image::filled(w as usize, h as usize, [0, 0, 0])
                    }
                };
                draw_overlay(&base, &px, [0, 255, 0]).write_ppm(&out)?;
            }
        }
        Command::Eval {
            preddir,
            truthdir,
            report,
            csv,
        } => {
            let pred = read_masks(&preddir)?;
            let truth = read_masks(&truthdir)?;
            let mut r = evaluate(&pred, &truth)?;
            let summary_path = preddir.join("track.json");
            if summary_path.is_file() {
                let s: TrackSummary = read_json(&summary_path)?;
                r.peak_working = Some(s.peak_working);
                r.peak_longterm = Some(s.peak_longterm);
                println!("throughput: {:.1} fps over {} frames ({})", s.fps, s.frames, s.variant);
            }
            println!(
                "iou {:.4} ± {:.4} | centroid {:.3} ± {:.3} px | boundary {:.3} ± {:.3} px | failure rate {:.4}",
                r.iou.mean,
                r.iou.std,
                r.centroid_error.mean,
                r.centroid_error.std,
                r.boundary_distance.mean,
                r.boundary_distance.std,
                r.failure_rate
            );
            if let Some(p) = report {
                write_json(&p, &r)?;
            }
            if let Some(p) = csv {
                write_text(&p, &r.to_csv())?;
            }
        }
        Command::Ablate {
            script: path,
            variants,
            config,
            out,
            csv,
        } => {
            let s = script(&path, g.seed)?;
            let gen = SequenceGenerator::new(s)?;
            let opts = TrackOptions {
                config: memory_config(&config, g.seed, None)?,
                ..TrackOptions::default()
            };
            let table = run_ablation(&gen, &variants, &opts)?;
            print!("{}", table.to_csv());
            if let Some(p) = out {
                write_json(&p, &table)?;
            }
            if let Some(p) = csv {
                write_text(&p, &table.to_csv())?;
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.global.quiet { "warn" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Some(n) = cli.global.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot configure {n} threads: {e}");
            return ExitCode::from(2);
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
