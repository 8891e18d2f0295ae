use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::Args;

use knotsaw_core::detection::io::{read_detections_csv, write_detections_csv};
use knotsaw_core::detection::{evaluate_many, extract_detections, log_detect, KnotDetection, ProbabilityMap};
use knotsaw_core::heightmap::{build_heightmap, HeightMap};
use knotsaw_core::plot::{line_plot, Series};
use knotsaw_core::registration::{register as register_clouds, transfer_labels};
use knotsaw_core::sawopt::{corner_angles, knot_function, optimize_angle_with, pattern_function, write_function_csv};
use knotsaw_core::sawsim::{all_angle_baseline, classify_appearances, improvement_report, virtual_saw, SawingReport};
use knotsaw_core::synthgen::{generate_log, render_point_cloud, VirtualLog};
use knotsaw_core::{Execution, PointCloud};

use crate::config::Config;
use crate::{AtStage, CliResult, StageError};

/// Fallback pattern-function width when neither config nor ground truth gives one.
const FALLBACK_SIGMA_DEG: f64 = 5.0;

pub fn write_file(path: &Path, contents: &[u8], stage: &str) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).at(stage)?;
    }
    fs::write(path, contents).at(stage)
}

/// Writes `<stem>.csv` and `<stem>.svg` for a sampled periodic function.
pub fn write_function(dir: &Path, stem: &str, column: &str, delta: f64, samples: &[f64], stage: &str) -> CliResult<()> {
    let mut csv = Vec::new();
    write_function_csv(&mut csv, ("theta_deg", column), delta, samples).at(stage)?;
    write_file(&dir.join(format!("{stem}.csv")), &csv, stage)?;
    let x: Vec<f64> = (0..samples.len()).map(|j| j as f64 * delta).collect();
    let svg = line_plot(stem, "θ (deg)", column, &[Series { label: column, x: &x, y: samples }]);
    write_file(&dir.join(format!("{stem}.svg")), svg.as_bytes(), stage)
}

/// Pattern-function width: configured, else the ground-truth mean knot
/// halfwidth, else a fixed fallback.
pub fn pattern_sigma(cfg: &Config, truth: Option<&VirtualLog>) -> f64 {
    if cfg.pattern_sigma_deg > 0.0 {
        return cfg.pattern_sigma_deg;
    }
    match truth.and_then(VirtualLog::mean_angular_halfwidth) {
        Some(s) => s,
        None => {
            log::warn!("no pattern_sigma_deg and no ground-truth knots; using {FALLBACK_SIGMA_DEG} deg");
            FALLBACK_SIGMA_DEG
        }
    }
}

fn exec() -> Execution {
    Execution::Parallel
}

// ------------------------------------------------------------------ generate

#[derive(Args)]
pub struct GenerateArgs {
    /// Output directory for `cloud.xyz` (or `cloud.ply`) and `truth.json`.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    /// Write binary PLY instead of XYZ text.
    #[arg(long)]
    pub ply: bool,
}

pub fn cloud_name(ply: bool) -> &'static str {
    if ply {
        "cloud.ply"
    } else {
        "cloud.xyz"
    }
}

pub fn generate(cfg: &Config, a: &GenerateArgs) -> CliResult<()> {
    let log = generate_log(&cfg.gen).at("generate")?;
    let cloud = render_point_cloud(&log, &cfg.gen).at("generate")?;
    fs::create_dir_all(&a.out).at("generate")?;
    cloud.save(a.out.join(cloud_name(a.ply))).at("generate")?;
    log.save(a.out.join("truth.json")).at("generate")?;
    println!("{} knots, {} points", log.knots.len(), cloud.len());
    Ok(())
}

// ----------------------------------------------------------------- heightmap

#[derive(Args)]
pub struct HeightmapArgs {
    /// Input point cloud (`.xyz` or `.ply`).
    #[arg(long)]
    pub cloud: PathBuf,
    /// Output `HMAP v1` file.
    #[arg(long)]
    pub out: PathBuf,
    /// Optional CSV of centerline vertices.
    #[arg(long)]
    pub centerline: Option<PathBuf>,
}

pub fn heightmap(cfg: &Config, a: &HeightmapArgs) -> CliResult<()> {
    let cloud = PointCloud::load(&a.cloud).at("heightmap")?;
    let (map, centerline) = build_heightmap(&cloud, &cfg.heightmap_params(exec())).at("heightmap")?;
    let mut buf = Vec::new();
    map.write(&mut buf).at("heightmap")?;
    write_file(&a.out, &buf, "heightmap")?;
    if let Some(path) = &a.centerline {
        let mut s = String::from("x,y,z\n");
        for v in &centerline.vertices {
            s.push_str(&format!("{},{},{}\n", v.x, v.y, v.z));
        }
        write_file(path, s.as_bytes(), "heightmap")?;
    }
    println!(
        "{} x {} grid over {:.1} mm, mean radius {:.2} mm",
        map.theta_bins,
        map.l_bins,
        map.l_extent,
        map.mean()
    );
    Ok(())
}

// ------------------------------------------------------------------ register

#[derive(Args)]
pub struct RegisterArgs {
    #[arg(long)]
    pub source: PathBuf,
    #[arg(long)]
    pub target: PathBuf,
    /// Output transform file (source → target).
    #[arg(long)]
    pub out: PathBuf,
    /// Write the target cloud with labels transferred from the source.
    #[arg(long)]
    pub labels_out: Option<PathBuf>,
}

pub fn register(cfg: &Config, a: &RegisterArgs) -> CliResult<()> {
    let src = PointCloud::load(&a.source).at("register")?;
    let tgt = PointCloud::load(&a.target).at("register")?;
    let reg = register_clouds(&src, &tgt, &cfg.icp_params(exec())).at("register")?;
    let mut buf = Vec::new();
    reg.transform.write(&mut buf).at("register")?;
    write_file(&a.out, &buf, "register")?;
    let mse = reg.icp.mse_history.last().copied().unwrap_or(0.0);
    println!(
        "rotation {:.4} deg, {} iterations, {}converged, normalized MSE {mse:.3e}",
        reg.transform.angle().to_degrees(),
        reg.icp.iterations,
        if reg.icp.converged { "" } else { "not " }
    );
    if let Some(path) = &a.labels_out {
        let t = transfer_labels(&src, &tgt, &reg.transform, cfg.label_cutoff_mm).at("label_transfer")?;
        let labeled = PointCloud::with_labels(tgt.points.clone(), t.labels).at("label_transfer")?;
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).at("label_transfer")?;
        }
        labeled.save(path).at("label_transfer")?;
        println!("{:.1}% of target points matched", 100.0 * t.matched_fraction);
    }
    Ok(())
}

// -------------------------------------------------------------------- detect

#[derive(Args)]
pub struct DetectArgs {
    /// Input `HMAP v1` file.
    #[arg(long)]
    pub hmap: PathBuf,
    /// Output `PMAP v1` file.
    #[arg(long)]
    pub pmap: PathBuf,
    /// Output detection CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Log name written into the CSV; defaults to the height-map file stem.
    #[arg(long)]
    pub log: Option<String>,
}

pub fn detect_map(cfg: &Config, map: &HeightMap) -> CliResult<(ProbabilityMap, Vec<KnotDetection>)> {
    let pmap = log_detect(map, &cfg.log_params()).at("detect")?;
    let dets = extract_detections(&pmap, cfg.min_area_cells, cfg.binarize_at);
    Ok((pmap, dets))
}

pub fn detect(cfg: &Config, a: &DetectArgs) -> CliResult<()> {
    let map = HeightMap::load(&a.hmap).at("detect")?;
    let (pmap, dets) = detect_map(cfg, &map)?;
    let mut buf = Vec::new();
    pmap.write(&mut buf).at("detect")?;
    write_file(&a.pmap, &buf, "detect")?;
    if let Some(path) = &a.csv {
        let name = a.log.clone().unwrap_or_else(|| stem(&a.hmap));
        let mut buf = Vec::new();
        write_detections_csv(&mut buf, &name, &dets).at("detect")?;
        write_file(path, &buf, "detect")?;
    }
    println!("{} detections", dets.len());
    Ok(())
}

fn stem(p: &Path) -> String {
    p.file_stem().map_or_else(|| "log".to_string(), |s| s.to_string_lossy().into_owned())
}

// -------------------------------------------------------------------- knotfn

#[derive(Args)]
pub struct KnotfnArgs {
    /// Input `PMAP v1` file.
    #[arg(long)]
    pub pmap: PathBuf,
    /// Output directory for `knot_function.csv` and `.svg`.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

pub fn knotfn(a: &KnotfnArgs) -> CliResult<()> {
    let pmap = ProbabilityMap::load(&a.pmap).at("knotfn")?;
    let fk = knot_function(&pmap);
    write_function(&a.out, "knot_function", "f_k", fk.delta_theta, &fk.samples, "knotfn")?;
    if !fk.normalized {
        println!("probability map is empty; knot function is zero");
    }
    Ok(())
}

// ------------------------------------------------------------------ optimize

#[derive(Args)]
pub struct OptimizeArgs {
    /// Input `PMAP v1` file.
    #[arg(long)]
    pub pmap: PathBuf,
    /// Ground truth, used only for the default pattern-function width.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Output directory for functions, objective curve and `angle.json`.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

pub fn optimize(cfg: &Config, a: &OptimizeArgs) -> CliResult<()> {
    let pmap = ProbabilityMap::load(&a.pmap).at("optimize")?;
    let truth = a.truth.as_ref().map(VirtualLog::load).transpose().at("optimize")?;
    let pattern = cfg.pattern().at("optimize")?;
    let fk = knot_function(&pmap);
    let corners = corner_angles(&pattern).at("optimize")?;
    let fp = pattern_function(&corners, pattern_sigma(cfg, truth.as_ref()), fk.delta_theta).at("optimize")?;
    let best = optimize_angle_with(&fk, &fp, cfg.step_deg, exec()).at("optimize")?;
    write_function(&a.out, "knot_function", "f_k", fk.delta_theta, &fk.samples, "optimize")?;
    write_function(&a.out, "pattern_function", "f_p", fp.delta_theta, &fp.samples, "optimize")?;
    write_function(&a.out, "objective", "C", best.step_deg, &best.objective_curve, "optimize")?;
    let json = serde_json::to_string_pretty(&best).map_err(|e| StageError::new("optimize", "IOError", e.to_string()))?;
    write_file(&a.out.join("angle.json"), json.as_bytes(), "optimize")?;
    println!(
        "angle {} deg (objective {:.6e}, search period {} deg)",
        best.angle_deg, best.objective, best.symmetry_period
    );
    Ok(())
}

// ----------------------------------------------------------------------- saw

#[derive(Args)]
pub struct SawArgs {
    /// Ground-truth log (`truth.json`).
    #[arg(long)]
    pub truth: PathBuf,
    /// Sawing angle in degrees.
    #[arg(long)]
    pub angle: f64,
    /// Output report JSON.
    #[arg(long)]
    pub out: PathBuf,
    /// Also sweep all angles and report the improvement over their mean.
    #[arg(long)]
    pub baseline: bool,
    /// Directory for one PGM image per board face.
    #[arg(long)]
    pub pgm: Option<PathBuf>,
}

pub fn saw(cfg: &Config, a: &SawArgs) -> CliResult<()> {
    let log = VirtualLog::load(&a.truth).at("saw")?;
    let pattern = cfg.pattern().at("saw")?;
    let params = cfg.saw_params();
    let grids = virtual_saw(&log, &pattern, a.angle, &params).at("saw")?;
    if let Some(dir) = &a.pgm {
        fs::create_dir_all(dir).at("saw")?;
        for g in &grids {
            for f in &g.faces {
                let mut buf = Vec::new();
                f.write_pgm(&mut buf).at("saw")?;
                write_file(&dir.join(format!("board{}_{:?}.pgm", g.board, f.kind).to_lowercase()), &buf, "saw")?;
            }
        }
    }
    let apps = classify_appearances(&grids, params.arris_band_mm);
    let report = SawingReport::from_appearances(a.angle, pattern.boards.len(), apps);
    write_file(&a.out, report.to_json().at("saw")?.as_bytes(), "saw")?;
    println!(
        "angle {} deg: {} arris of {} knots, arris area {:.4} dm²",
        a.angle, report.arris_count, report.total_count, report.arris_area_dm2
    );
    if a.baseline {
        let base = all_angle_baseline(&log, &pattern, cfg.baseline_step_deg, &params, exec()).at("baseline")?;
        println!("{}", improvement_report(&report, &base));
    }
    Ok(())
}

// ------------------------------------------------------------------ evaluate

#[derive(Args)]
pub struct EvaluateArgs {
    /// Predicted detections CSV.
    #[arg(long)]
    pub pred: PathBuf,
    /// Ground-truth detections CSV.
    #[arg(long)]
    pub gt: PathBuf,
    /// IoU threshold; defaults to the configured value.
    #[arg(long)]
    pub iou: Option<f64>,
    /// Decimals printed in the table.
    #[arg(long, default_value_t = 2)]
    pub digits: usize,
    /// Also write `log,map` rows at full precision.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Number of θ bins, to expand wrapped boxes in files without masks.
    #[arg(long)]
    pub theta_bins: Option<usize>,
}

/// Log name for CSV rows without a `log` column.
const DEFAULT_LOG: &str = "log";

pub fn evaluate(cfg: &Config, a: &EvaluateArgs) -> CliResult<()> {
    let thr = a.iou.unwrap_or(cfg.iou_threshold);
    let read = |p: &Path| -> CliResult<_> {
        let f = fs::File::open(p).at("evaluate")?;
        read_detections_csv(std::io::BufReader::new(f), DEFAULT_LOG, a.theta_bins)
            .map_err(|e| StageError::new("evaluate", e.kind(), format!("{}: {e}", p.display())))
    };
    let (preds, gts) = (read(&a.pred)?, read(&a.gt)?);
    let mut logs: BTreeMap<String, (Vec<KnotDetection>, Vec<KnotDetection>)> = BTreeMap::new();
    for r in preds {
        logs.entry(r.log).or_default().0.push(r.detection);
    }
    for r in gts {
        logs.entry(r.log).or_default().1.push(r.detection);
    }
    let names: Vec<String> = logs.keys().cloned().collect();
    let pairs: Vec<_> = logs.into_values().collect();
    let (per_log, all) = evaluate_many(&pairs, thr);
    let d = a.digits;
    let mut out = std::io::stdout().lock();
    let mut csv = String::from("log,map\n");
    for (name, r) in names.iter().zip(&per_log) {
        let _ = writeln!(out, "{name} {:.d$}", r.map);
        csv.push_str(&format!("{name},{}\n", r.map));
    }
    let _ = writeln!(out, "All {:.d$}", all.map);
    csv.push_str(&format!("All,{}\n", all.map));
    if let Some(note) = &all.note {
        log::info!("{note}");
    }
    if let Some(path) = &a.csv {
        write_file(path, csv.as_bytes(), "evaluate")?;
    }
    Ok(())
}
