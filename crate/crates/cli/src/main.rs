//! Command-line driver for scan-pair simulation, registration, and Monte
//! Carlo experiments.
//!
//! Exit codes: 0 success, 1 configuration error, 2 I/O error, 3 the
//! experiment produced no usable accepted trials.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use shadowgrid::cloud::PointCloud;
use shadowgrid::harness::{
    self, match_pair, read_records_csv, read_records_meta, render_text_table, run_experiment,
    summarize, trial_seed, write_ratio_chart_svg, write_records_csv, write_summary_csv,
    ExperimentConfig, HarnessError, Method, ReportMeta,
};
use shadowgrid::sim::{generate_trajectory, raycast_returns, scan_from_returns};
use shadowgrid::spherical_grid::build_shadow_filtered_grid;

#[derive(Parser)]
#[command(
    name = "shadowgrid",
    about = "Shadow-aware lidar scan matching: simulator, matcher, and Monte Carlo harness",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum SceneKind {
    Roadway,
    Offroad,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    SphericalShadow,
    Cartesian,
    CartesianNoGround,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::SphericalShadow => Method::SphericalShadow,
            MethodArg::Cartesian => Method::Cartesian,
            MethodArg::CartesianNoGround => Method::CartesianNoGround,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum CloudFormat {
    Ply,
    Csv,
}

#[derive(Subcommand)]
enum Command {
    /// Write a default experiment config as JSON.
    Preset {
        #[arg(long, value_enum)]
        scene: SceneKind,
        #[arg(long, value_enum, default_value = "spherical-shadow")]
        method: MethodArg,
        /// Full-scale protocol (64 channels, all locations) instead of the
        /// fast desk-scale preset.
        #[arg(long)]
        full: bool,
        /// Output path (stdout if omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simulate one scan pair and write the clouds plus scene metadata.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 0)]
        location: usize,
        #[arg(long, default_value_t = 0)]
        trial: usize,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, value_enum, default_value = "ply")]
        format: CloudFormat,
    },
    /// Register two point-cloud files and print the solution report.
    Match {
        #[arg(long)]
        primary: PathBuf,
        #[arg(long)]
        secondary: PathBuf,
        /// Experiment config supplying grid and matcher settings
        /// (desk-scale roadway defaults if omitted).
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum)]
        method: Option<MethodArg>,
        /// Write the spherical voxel grid as delimited text.
        #[arg(long)]
        dump_grid: Option<PathBuf>,
        /// Print the report as JSON instead of text.
        #[arg(long)]
        json: bool,
    },
    /// Run a Monte Carlo experiment and write records, summary, and chart.
    Montecarlo {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Rebuild summary table and chart from a records file.
    Report {
        #[arg(long)]
        records: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value = "experiment")]
        title: String,
    },
}

/// Error wrapper mapping each failure to the documented exit code.
enum CliError {
    Config(String),
    Io(String),
    NoAcceptedTrials(String),
}

impl CliError {
    fn exit_code(&self) -> ExitCode {
        match self {
            CliError::Config(_) => ExitCode::from(1),
            CliError::Io(_) => ExitCode::from(2),
            CliError::NoAcceptedTrials(_) => ExitCode::from(3),
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Io(m) | CliError::NoAcceptedTrials(m) => m,
        }
    }
}

impl From<HarnessError> for CliError {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::Io { .. } => CliError::Io(e.to_string()),
            HarnessError::InsufficientData { .. } => CliError::NoAcceptedTrials(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<shadowgrid::cloud::CloudIoError> for CliError {
    fn from(e: shadowgrid::cloud::CloudIoError) -> Self {
        CliError::Io(e.to_string())
    }
}

fn load_config(path: &Path) -> Result<ExperimentConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let cfg: ExperimentConfig = serde_json::from_str(&text)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    cfg.validate()?;
    Ok(cfg)
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Preset {
            scene,
            method,
            full,
            out,
        } => {
            let method = method.into();
            let cfg = match (scene, full) {
                (SceneKind::Roadway, false) => ExperimentConfig::desk_roadway(method),
                (SceneKind::Roadway, true) => ExperimentConfig::full_roadway(method),
                (SceneKind::Offroad, false) => ExperimentConfig::desk_offroad(method),
                (SceneKind::Offroad, true) => ExperimentConfig::full_offroad(method),
            };
            let text = serde_json::to_string_pretty(&cfg).expect("config serializes");
            match out {
                Some(path) => write_text(&path, &text)?,
                None => println!("{text}"),
            }
            Ok(())
        }
        Command::Simulate {
            config,
            location,
            trial,
            out_dir,
            format,
        } => {
            let cfg = load_config(&config)?;
            let scene = cfg.scene.build();
            let lidar = cfg.lidar.build().map_err(|e| CliError::Config(e.to_string()))?;
            let trajectory = generate_trajectory(&scene, &cfg.trajectory)
                .map_err(|e| CliError::Config(e.to_string()))?;
            if location + 1 >= trajectory.poses.len() {
                return Err(CliError::Config(format!(
                    "location {location} out of range (trajectory has {} pairs)",
                    trajectory.frame_pairs()
                )));
            }
            std::fs::create_dir_all(&out_dir)
                .map_err(|e| CliError::Io(format!("{}: {e}", out_dir.display())))?;
            let pose_p = trajectory.poses[location];
            let pose_s = trajectory.poses[location + 1];
            let seed_p = trial_seed(cfg.master_seed, location as u64, trial as u64, 0);
            let seed_s = trial_seed(cfg.master_seed, location as u64, trial as u64, 1);
            let mut pair = Vec::new();
            for (name, pose, seed) in [("primary", pose_p, seed_p), ("secondary", pose_s, seed_s)] {
                let returns = raycast_returns(&scene, &lidar, &pose)
                    .map_err(|e| CliError::Config(e.to_string()))?;
                let (cloud, _) = scan_from_returns(&returns, lidar.range_noise_sigma, seed);
                let path = match format {
                    CloudFormat::Ply => {
                        let path = out_dir.join(format!("{name}.ply"));
                        cloud.write_ply(&path, seed)?;
                        path
                    }
                    CloudFormat::Csv => {
                        let path = out_dir.join(format!("{name}.csv"));
                        cloud.write_csv(&path, seed)?;
                        path
                    }
                };
                println!("wrote {} ({} points)", path.display(), cloud.len());
                pair.push(cloud);
            }
            let truth = pose_p
                .transform_from(&pose_s)
                .to_state()
                .map_err(|e| CliError::Config(e.to_string()))?;
            let truth_json = serde_json::json!({
                "master_seed": cfg.master_seed,
                "location": location,
                "trial": trial,
                "truth_state": <[f64; 6]>::from(truth),
            });
            write_text(
                &out_dir.join("truth.json"),
                &serde_json::to_string_pretty(&truth_json).expect("serializes"),
            )?;
            let scene_json = serde_json::json!({
                "seed": cfg.master_seed,
                "scene": scene,
            });
            write_text(
                &out_dir.join("scene.json"),
                &serde_json::to_string_pretty(&scene_json).expect("serializes"),
            )?;
            Ok(())
        }
        Command::Match {
            primary,
            secondary,
            config,
            method,
            dump_grid,
            json,
        } => {
            let mut cfg = match config {
                Some(path) => load_config(&path)?,
                None => ExperimentConfig::desk_roadway(Method::SphericalShadow),
            };
            if let Some(method) = method {
                cfg.method = method.into();
            }
            if cfg.method == Method::CartesianNoGround {
                return Err(CliError::Config(
                    "cartesian_no_ground needs simulation ground truth; use `montecarlo`, or \
                     remove the ground beforehand and run the cartesian method"
                        .into(),
                ));
            }
            let (primary_cloud, _) = PointCloud::read_auto(&primary)?;
            let (secondary_cloud, _) = PointCloud::read_auto(&secondary)?;
            if let Some(path) = dump_grid {
                let grid = build_shadow_filtered_grid(&primary_cloud, &cfg.grid.build(&cfg.lidar))
                    .map_err(|e| CliError::Config(e.to_string()))?;
                grid.write_dump(&path)
                    .map_err(|e| CliError::Io(e.to_string()))?;
                println!("wrote {} ({} voxels)", path.display(), grid.voxel_count());
            }
            let scene = cfg.scene.build();
            let report = match_pair(&cfg, &scene, &primary_cloud, &secondary_cloud, None)
                .map_err(|e| CliError::Config(format!("registration failed: {e}")))?;
            if json {
                println!(
                    "{}",
                    serde_json::to_string_pretty(&report.to_record()).expect("serializes")
                );
            } else {
                println!("{report}");
            }
            Ok(())
        }
        Command::Montecarlo { config, out_dir } => {
            let cfg = load_config(&config)?;
            std::fs::create_dir_all(&out_dir)
                .map_err(|e| CliError::Io(format!("{}: {e}", out_dir.display())))?;
            let records = run_experiment(&cfg)?;
            let meta = ReportMeta::for_config(&cfg);
            write_records_csv(&out_dir.join("records.csv"), &records, &meta)?;
            let accepted = records.iter().filter(|r| r.accepted()).count();
            if accepted == 0 {
                return Err(CliError::NoAcceptedTrials(format!(
                    "all {} trials were rejected",
                    records.len()
                )));
            }
            let table = summarize(&records)?;
            let title = format!(
                "{:?} - {}",
                match cfg.scene {
                    harness::SceneConfig::Roadway { .. } => "Roadway",
                    harness::SceneConfig::Offroad { .. } => "Offroad",
                },
                cfg.method.name()
            );
            let text = render_text_table(&table, &title);
            print!("{text}");
            write_text(&out_dir.join("summary.txt"), &text)?;
            write_summary_csv(&out_dir.join("summary.csv"), &table, &meta)?;
            write_ratio_chart_svg(&out_dir.join("ratios.svg"), &table, &title, &meta)?;
            println!("wrote {}", out_dir.join("records.csv").display());
            Ok(())
        }
        Command::Report {
            records,
            out_dir,
            title,
        } => {
            let meta = read_records_meta(&records)?.unwrap_or(ReportMeta {
                config_sha256: "unknown".into(),
                master_seed: 0,
            });
            let rows = read_records_csv(&records)?;
            std::fs::create_dir_all(&out_dir)
                .map_err(|e| CliError::Io(format!("{}: {e}", out_dir.display())))?;
            let table = summarize(&rows)?;
            let text = render_text_table(&table, &title);
            print!("{text}");
            write_text(&out_dir.join("summary.txt"), &text)?;
            write_summary_csv(&out_dir.join("summary.csv"), &table, &meta)?;
            write_ratio_chart_svg(&out_dir.join("ratios.svg"), &table, &title, &meta)?;
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {}", err.message());
            err.exit_code()
        }
    }
}
