use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::Args;
use rayon::prelude::*;
use serde::Serialize;

use knotsaw_core::detection::io::write_detections_csv;
use knotsaw_core::detection::{evaluate_map, KnotDetection, ProbabilityMap};
use knotsaw_core::heightmap::build_heightmap;
use knotsaw_core::sawopt::{corner_angles, knot_function, optimize_angle_with, pattern_function};
use knotsaw_core::sawsim::{all_angle_baseline, improvement_report, saw_report, write_reports_csv, Improvement};
use knotsaw_core::synthgen::{generate_log, ground_truth_mask, render_point_cloud, VirtualLog};
use knotsaw_core::{Execution, PointCloud};

use crate::commands::{detect_map, pattern_sigma, write_file, write_function};
use crate::config::Config;
use crate::{AtStage, CliResult, StageError};

#[derive(Args)]
pub struct PipelineArgs {
    /// Output directory; batches get one `log_NNN` subdirectory per log.
    #[arg(long, default_value = "knotsaw_out")]
    pub out: PathBuf,
    /// Scanned point cloud instead of a synthetic log.
    #[arg(long)]
    pub cloud: Option<PathBuf>,
    /// Ground truth for `--cloud` or `--pmap`; enables sawing and evaluation.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// External probability map; height-map fitting and detection are skipped.
    #[arg(long)]
    pub pmap: Option<PathBuf>,
    /// Number of synthetic logs, seeded consecutively from the configured seed.
    #[arg(long, default_value_t = 1)]
    pub logs: usize,
}

/// One row of `summary.csv`.
#[derive(Debug, Clone, Serialize)]
pub struct LogSummary {
    pub log: String,
    pub seed: Option<u64>,
    pub knots: Option<usize>,
    pub detections: Option<usize>,
    pub map: Option<f64>,
    pub angle_deg: f64,
    pub improvement: Option<Improvement>,
}

const SUMMARY_HEADER: &str = "log,seed,knots,detections,map,angle_deg,arris_count,total_count,arris_area_dm2,\
baseline_mean_arris_count,baseline_mean_arris_area_dm2,count_change,area_change";

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl LogSummary {
    fn csv_row(&self) -> String {
        let i = self.improvement.as_ref();
        [
            self.log.clone(),
            opt(self.seed),
            opt(self.knots),
            opt(self.detections),
            opt(self.map),
            self.angle_deg.to_string(),
            opt(i.map(|i| i.optimized_arris_count)),
            opt(i.map(|i| i.optimized_total_count)),
            opt(i.map(|i| i.optimized_arris_area_dm2)),
            opt(i.map(|i| i.baseline_mean_arris_count)),
            opt(i.map(|i| i.baseline_mean_arris_area_dm2)),
            opt(i.and_then(|i| i.count_change)),
            opt(i.and_then(|i| i.area_change)),
        ]
        .join(",")
    }
}

enum Source {
    Synthetic(u64),
    Cloud(PathBuf),
    Pmap(PathBuf),
}

fn to_json<T: Serialize>(v: &T, stage: &str) -> CliResult<String> {
    serde_json::to_string_pretty(v).map_err(|e| StageError::new(stage, "IOError", e.to_string()))
}

fn write_dets(path: &Path, name: &str, dets: &[KnotDetection], stage: &str) -> CliResult<()> {
    let mut buf = Vec::new();
    write_detections_csv(&mut buf, name, dets).at(stage)?;
    write_file(path, &buf, stage)
}

fn run_log(cfg: &Config, source: &Source, truth_path: Option<&Path>, dir: &Path, name: &str) -> CliResult<LogSummary> {
    let exec = Execution::Parallel;
    let mut truth = truth_path.map(VirtualLog::load).transpose().at("input")?;
    let mut seed = None;

    let (pmap, detections) = match source {
        Source::Pmap(p) => (ProbabilityMap::load(p).at("input")?, None),
        Source::Synthetic(_) | Source::Cloud(_) => {
            let cloud = match source {
                Source::Synthetic(s) => {
                    let gen = knotsaw_core::synthgen::GenParams { seed: *s, ..cfg.gen.clone() };
                    let log = generate_log(&gen).at("generate")?;
                    let cloud = render_point_cloud(&log, &gen).at("generate")?;
                    cloud.save(dir.join("cloud.xyz")).at("generate")?;
                    log.save(dir.join("truth.json")).at("generate")?;
                    seed = Some(*s);
                    truth = Some(log);
                    cloud
                }
                Source::Cloud(p) => PointCloud::load(p).at("input")?,
                Source::Pmap(_) => unreachable!(),
            };
            let (hmap, _) = build_heightmap(&cloud, &cfg.heightmap_params(exec)).at("heightmap")?;
            hmap.save(dir.join("heightmap.hmap")).at("heightmap")?;
            let (pmap, dets) = detect_map(cfg, &hmap)?;
            write_dets(&dir.join("detections.csv"), name, &dets, "detect")?;
            (pmap, Some(dets))
        }
    };
    pmap.save(dir.join("probability.pmap")).at("detect")?;

    let map = match (&truth, &detections) {
        (Some(log), Some(dets)) => {
            let gt = ground_truth_mask(log, pmap.theta_bins, pmap.l_bins);
            write_dets(&dir.join("ground_truth.csv"), name, &gt, "evaluate")?;
            Some(evaluate_map(dets, &gt, cfg.iou_threshold).map)
        }
        _ => None,
    };

    let pattern = cfg.pattern().at("optimize")?;
    let fk = knot_function(&pmap);
    let corners = corner_angles(&pattern).at("optimize")?;
    let fp = pattern_function(&corners, pattern_sigma(cfg, truth.as_ref()), fk.delta_theta).at("optimize")?;
    let best = optimize_angle_with(&fk, &fp, cfg.step_deg, exec).at("optimize")?;
    write_function(dir, "knot_function", "f_k", fk.delta_theta, &fk.samples, "optimize")?;
    write_function(dir, "pattern_function", "f_p", fp.delta_theta, &fp.samples, "optimize")?;
    write_function(dir, "objective", "C", best.step_deg, &best.objective_curve, "optimize")?;
    write_file(&dir.join("angle.json"), to_json(&best, "optimize")?.as_bytes(), "optimize")?;

    let improvement = match &truth {
        Some(log) => {
            let params = cfg.saw_params();
            let report = saw_report(log, &pattern, best.angle_deg, &params).at("saw")?;
            write_file(&dir.join("report.json"), report.to_json().at("saw")?.as_bytes(), "saw")?;
            let base = all_angle_baseline(log, &pattern, cfg.baseline_step_deg, &params, exec).at("baseline")?;
            let mut csv = String::from("angle_deg,arris_count,total_count,arris_area_dm2\n");
            for i in 0..base.angles.len() {
                let _ = writeln!(
                    csv,
                    "{},{},{},{}",
                    base.angles[i], base.arris_counts[i], base.total_counts[i], base.arris_areas_dm2[i]
                );
            }
            write_file(&dir.join("baseline.csv"), csv.as_bytes(), "baseline")?;
            let imp = improvement_report(&report, &base);
            write_file(&dir.join("improvement.json"), to_json(&imp, "baseline")?.as_bytes(), "baseline")?;
            let mut rows = Vec::new();
            write_reports_csv(&mut rows, &[(name.to_string(), &report)]).at("saw")?;
            write_file(&dir.join("report.csv"), &rows, "saw")?;
            Some(imp)
        }
        None => None,
    };

    Ok(LogSummary {
        log: name.to_string(),
        seed,
        knots: truth.as_ref().map(|l| l.knots.len()),
        detections: detections.as_ref().map(Vec::len),
        map,
        angle_deg: best.angle_deg,
        improvement,
    })
}

fn pct(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{:.1}%", 100.0 * x))
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| s / n as f64)
}

pub fn run(cfg: &Config, a: &PipelineArgs) -> CliResult<()> {
    if a.logs == 0 {
        return Err(StageError::new("config", "InvalidParams", "invalid parameter logs: must be at least 1"));
    }
    if a.logs > 1 && (a.cloud.is_some() || a.pmap.is_some() || a.truth.is_some()) {
        return Err(StageError::new(
            "config",
            "InvalidParams",
            "invalid parameter logs: batches run on synthetic logs only",
        ));
    }
    if a.cloud.is_some() && a.pmap.is_some() {
        return Err(StageError::new("config", "InvalidParams", "--cloud and --pmap are exclusive"));
    }
    std::fs::create_dir_all(&a.out).at("output")?;
    write_file(&a.out.join("config.txt"), cfg.to_text().as_bytes(), "output")?;

    let jobs: Vec<(Source, PathBuf, String)> = if let Some(p) = &a.pmap {
        vec![(Source::Pmap(p.clone()), a.out.clone(), "log".into())]
    } else if let Some(c) = &a.cloud {
        vec![(Source::Cloud(c.clone()), a.out.clone(), "log".into())]
    } else if a.logs == 1 {
        vec![(Source::Synthetic(cfg.gen.seed), a.out.clone(), format!("seed_{}", cfg.gen.seed))]
    } else {
        (0..a.logs)
            .map(|i| {
                let name = format!("log_{i:03}");
                (Source::Synthetic(cfg.gen.seed + i as u64), a.out.join(&name), name)
            })
            .collect()
    };

    let results: Vec<CliResult<LogSummary>> = jobs
        .par_iter()
        .map(|(src, dir, name)| {
            std::fs::create_dir_all(dir).at("output")?;
            run_log(cfg, src, a.truth.as_deref(), dir, name).map_err(|mut e| {
                if a.logs > 1 {
                    e.message = format!("{name}: {}", e.message);
                }
                e
            })
        })
        .collect();
    let summaries: Vec<LogSummary> = results.into_iter().collect::<CliResult<_>>()?;

    let mut csv = format!("{SUMMARY_HEADER}\n");
    for s in &summaries {
        let _ = writeln!(csv, "{}", s.csv_row());
    }
    write_file(&a.out.join("summary.csv"), csv.as_bytes(), "output")?;

    println!(
        "{:<12} {:>6} {:>6} {:>6} {:>8} {:>10} {:>10}",
        "log", "knots", "dets", "mAP", "angle", "count", "area"
    );
    for s in &summaries {
        let i = s.improvement.as_ref();
        println!(
            "{:<12} {:>6} {:>6} {:>6} {:>8} {:>10} {:>10}",
            s.log,
            opt(s.knots),
            opt(s.detections),
            s.map.map_or_else(|| "-".into(), |m| format!("{m:.3}")),
            s.angle_deg,
            pct(i.and_then(|i| i.count_change)),
            pct(i.and_then(|i| i.area_change)),
        )
    }
    if summaries.len() > 1 {
        let imps: Vec<&Improvement> = summaries.iter().filter_map(|s| s.improvement.as_ref()).collect();
        println!(
            "mean change in arris count {}, arris area {}",
            pct(mean(imps.iter().filter_map(|i| i.count_change))),
            pct(mean(imps.iter().filter_map(|i| i.area_change))),
        );
    }
    if let [s] = summaries.as_slice() {
        if let Some(i) = &s.improvement {
            println!("{i}");
        }
    }
    Ok(())
}
