//! Thin command-line front end: fit a model, resample it, evaluate it,
//! inspect a model file. All logic lives in the library.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use pcmm::{
    evaluate, io, load_model, resample, run_pipeline, save_model, voxel_filter, Error,
    PipelineConfig,
};

#[derive(Parser)]
#[command(name = "pcmm", version, about = "Multi-model parametric point cloud representation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a hybrid Gaussian / plane / B-spline model to a point cloud.
    Fit {
        /// Input cloud (.ply ascii or binary-little-endian, or ascii .xyz).
        cloud: PathBuf,
        /// Output model file.
        #[arg(short, long)]
        output: PathBuf,
        #[command(flatten)]
        params: ParamArgs,
        /// Write run statistics as JSON.
        #[arg(long)]
        stats: Option<PathBuf>,
    },
    /// Generate a point cloud from a fitted model.
    Resample {
        model: PathBuf,
        /// Output cloud (.ply or .xyz).
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Compare a fitted model against a point cloud.
    Eval {
        model: PathBuf,
        cloud: PathBuf,
        /// Also report metrics against the voxel-filtered cloud.
        #[arg(long)]
        against_filtered: bool,
        /// Write the report as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Print a summary of a model file.
    Info { model: PathBuf },
}

#[derive(Args)]
struct ParamArgs {
    /// Voxel filter edge in meters.
    #[arg(long)]
    voxel_size: Option<f64>,
    /// Cluster size at or below which EM replaces 2-means.
    #[arg(long)]
    nem: Option<usize>,
    /// Density radius factor in [2, 3].
    #[arg(long)]
    rmin: Option<f64>,
    /// Minimum cluster size.
    #[arg(long)]
    nmin: Option<usize>,
    /// Merge angle tolerance in degrees.
    #[arg(long)]
    theta_min_deg: Option<f64>,
    /// Merge normal-distance tolerance in meters.
    #[arg(long)]
    lmin: Option<f64>,
    /// Plane boundary cell size as a multiple of the voxel size.
    #[arg(long)]
    plane_bnd_mult: Option<f64>,
    /// Surface boundary cell size as a multiple of the voxel size.
    #[arg(long)]
    surf_bnd_mult: Option<f64>,
    /// RNG seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Config file with `key = value` lines (same keys as the flags).
    #[arg(long)]
    config: Option<PathBuf>,
}

fn parse_config_file(path: &Path) -> Result<HashMap<String, String>, Error> {
    let text = std::fs::read_to_string(path)?;
    let mut map = HashMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
            path: path.to_path_buf(),
            line: lineno + 1,
            message: format!("expected key = value, got {line:?}"),
        })?;
        map.insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(map)
}

fn get<T: std::str::FromStr>(
    map: &HashMap<String, String>,
    key: &str,
    path: &Path,
) -> Result<Option<T>, Error> {
    match map.get(key) {
        None => Ok(None),
        Some(raw) => raw.parse::<T>().map(Some).map_err(|_| {
            Error::InvalidConfig(format!("bad value {raw:?} for {key} in {}", path.display()))
        }),
    }
}

/// Precedence: built-in defaults, then config file, then command-line flags.
fn build_config(params: &ParamArgs) -> Result<PipelineConfig, Error> {
    let file = match &params.config {
        Some(path) => Some((path.clone(), parse_config_file(path)?)),
        None => None,
    };
    let from_file = |key: &str| -> Result<Option<f64>, Error> {
        match &file {
            Some((path, map)) => get(map, key, path),
            None => Ok(None),
        }
    };
    let from_file_usize = |key: &str| -> Result<Option<usize>, Error> {
        match &file {
            Some((path, map)) => get(map, key, path),
            None => Ok(None),
        }
    };

    let voxel_size = params
        .voxel_size
        .or(from_file("voxel_size")?)
        .unwrap_or(0.03);
    let mut cfg = PipelineConfig::with_voxel_size(voxel_size);
    if let Some(v) = params.nem.or(from_file_usize("nem")?) {
        cfg.em_switch = v;
    }
    if let Some(v) = params.rmin.or(from_file("rmin")?) {
        cfg.density_radius = v;
    }
    if let Some(v) = params.nmin.or(from_file_usize("nmin")?) {
        cfg.min_cluster_points = v;
    }
    if let Some(v) = params.theta_min_deg.or(from_file("theta_min_deg")?) {
        cfg.merge_angle = v.to_radians();
    }
    if let Some(v) = params.lmin.or(from_file("lmin")?) {
        cfg.merge_distance = v;
    }
    if let Some(v) = params.plane_bnd_mult.or(from_file("plane_bnd_mult")?) {
        cfg.plane_cell_size = v * voxel_size;
    }
    if let Some(v) = params.surf_bnd_mult.or(from_file("surf_bnd_mult")?) {
        cfg.surface_cell_size = v * voxel_size;
    }
    if let Some(v) = params.seed.or(match &file {
        Some((path, map)) => get(map, "seed", path)?,
        None => None,
    }) {
        cfg.rng_seed = v;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn print_report(report: &pcmm::EvalReport, label: &str) {
    println!("# {label}");
    println!("precision_rmse = {}", report.precision_rmse);
    println!("completeness_rmse = {}", report.completeness_rmse);
    println!("generated_points = {}", report.generated_points);
    println!("original_points = {}", report.original_points);
    println!("compression_ratio = {}", report.compression_ratio);
    println!("gaussian_count = {}", report.gaussian_count);
    println!("plane_count = {}", report.plane_count);
    println!("surface_count = {}", report.surface_count);
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Fit {
            cloud,
            output,
            params,
            stats,
        } => {
            let cfg = build_config(&params)?;
            let points = io::load_cloud(&cloud)?;
            let (model, run_stats) = run_pipeline(&points, &cfg)?;
            save_model(&model, &output)?;
            println!(
                "fit: {} points -> {} filtered -> {} gaussians, {} planes, {} surfaces in {:.1} ms",
                run_stats.input_points,
                run_stats.filtered_points,
                run_stats.gaussian_count,
                run_stats.plane_count,
                run_stats.surface_count,
                run_stats.total_ms
            );
            println!("model written to {}", output.display());
            if let Some(stats_path) = stats {
                let json = serde_json::to_string_pretty(&run_stats)
                    .map_err(|e| Error::Numerical(format!("stats serialization: {e}")))?;
                std::fs::write(&stats_path, json)?;
                println!("stats written to {}", stats_path.display());
            }
            Ok(())
        }
        Command::Resample { model, output } => {
            let model = load_model(&model)?;
            let cloud = resample(&model)?;
            io::save_cloud(&cloud, &output)?;
            println!("resampled {} points to {}", cloud.len(), output.display());
            Ok(())
        }
        Command::Eval {
            model,
            cloud,
            against_filtered,
            json,
        } => {
            let model = load_model(&model)?;
            let points = io::load_cloud(&cloud)?;
            let report = evaluate(&model, &points)?;
            print_report(&report, "against raw cloud");
            let mut documents = vec![("raw", report)];
            if against_filtered {
                let filtered = voxel_filter(&points, model.config.voxel_size)?;
                let filtered_report = evaluate(&model, &filtered)?;
                print_report(&filtered_report, "against voxel-filtered cloud");
                documents.push(("filtered", filtered_report));
            }
            if let Some(json_path) = json {
                let map: serde_json::Value = documents
                    .into_iter()
                    .map(|(k, v)| (k.to_string(), serde_json::to_value(v).unwrap()))
                    .collect::<serde_json::Map<_, _>>()
                    .into();
                std::fs::write(&json_path, serde_json::to_string_pretty(&map).unwrap())?;
                println!("report written to {}", json_path.display());
            }
            Ok(())
        }
        Command::Info { model } => {
            let size = std::fs::metadata(&model)?.len();
            let model = load_model(&model)?;
            println!("format = PCMM1 ({size} bytes)");
            println!("gaussians = {}", model.gaussians.len());
            println!("planes = {}", model.planes.len());
            println!("surfaces = {}", model.surfaces.len());
            println!("input_points = {}", model.stats.input_points);
            println!("filtered_points = {}", model.stats.filtered_points);
            println!("parameter_scalars = {}", model.parameter_scalars());
            let cfg = &model.config;
            println!(
                "config: voxel_size={} em_switch={} density_radius={} min_cluster_points={} \
                 merge_angle={} merge_distance={} plane_cell_size={} surface_cell_size={} seed={}",
                cfg.voxel_size,
                cfg.em_switch,
                cfg.density_radius,
                cfg.min_cluster_points,
                cfg.merge_angle,
                cfg.merge_distance,
                cfg.plane_cell_size,
                cfg.surface_cell_size,
                cfg.rng_seed
            );
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(cause) = source {
                eprintln!("  caused by: {cause}");
                source = cause.source();
            }
            ExitCode::from(e.exit_code())
        }
    }
}
