//! Flat `key = value` configuration with `--set` overrides.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use knotsaw_core::detection::{LogParams, DEFAULT_IOU_THRESHOLD, DEFAULT_MIN_AREA_CELLS, LOG_BINARIZE_AT};
use knotsaw_core::heightmap::HeightMapParams;
use knotsaw_core::registration::IcpParams;
use knotsaw_core::sawopt::SawingPattern;
use knotsaw_core::sawsim::SawParams;
use knotsaw_core::synthgen::GenParams;
use knotsaw_core::{Error, Execution, Result};

#[derive(Debug, Clone)]
pub struct Config {
    pub gen: GenParams,
    pub theta_bins: usize,
    /// 0 selects one bin per 10 mm of log.
    pub l_bins: usize,
    pub lambda: f64,
    pub n_segments: usize,
    pub centerline_bins: usize,
    pub log_sigma_mm: f64,
    pub log_threshold: f64,
    pub log_min_response: f64,
    pub binarize_at: f64,
    pub min_area_cells: usize,
    pub iou_threshold: f64,
    /// 0 uses the mean knot angular halfwidth of the ground truth.
    pub pattern_sigma_deg: f64,
    pub step_deg: f64,
    pub baseline_step_deg: f64,
    pub raster_mm: f64,
    pub arris_band_mm: f64,
    pub board_side: f64,
    pub pattern_file: Option<PathBuf>,
    pub icp_max_iter: usize,
    pub icp_trim: bool,
    pub label_cutoff_mm: f64,
}

impl Default for Config {
    fn default() -> Self {
        let log = LogParams::default();
        let saw = SawParams::default();
        let hm = HeightMapParams::default();
        Self {
            gen: GenParams::default(),
            theta_bins: hm.theta_bins,
            l_bins: 0,
            lambda: hm.lambda,
            n_segments: hm.n_segments,
            centerline_bins: hm.centerline_bins,
            log_sigma_mm: log.sigma_mm,
            log_threshold: log.threshold,
            log_min_response: log.min_response,
            binarize_at: LOG_BINARIZE_AT,
            min_area_cells: DEFAULT_MIN_AREA_CELLS,
            iou_threshold: DEFAULT_IOU_THRESHOLD,
            pattern_sigma_deg: 0.0,
            step_deg: 1.0,
            baseline_step_deg: 1.0,
            raster_mm: saw.raster_mm,
            arris_band_mm: saw.arris_band_mm,
            board_side: 160.0,
            pattern_file: None,
            icp_max_iter: IcpParams::default().max_iter,
            icp_trim: false,
            label_cutoff_mm: 2.0,
        }
    }
}

const KEYS: &[&str] = &[
    "theta_bins",
    "l_bins",
    "lambda",
    "n_segments",
    "centerline_bins",
    "log_sigma_mm",
    "log_threshold",
    "log_min_response",
    "binarize_at",
    "min_area_cells",
    "iou_threshold",
    "pattern_sigma_deg",
    "step_deg",
    "baseline_step_deg",
    "raster_mm",
    "arris_band_mm",
    "board_side",
    "pattern_file",
    "icp_max_iter",
    "icp_trim",
    "label_cutoff_mm",
];

fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e| Error::InvalidParams {
        param: key.to_string(),
        reason: format!("`{value}`: {e}"),
    })
}

fn invalid(key: &str, reason: impl Into<String>) -> Error {
    Error::InvalidParams {
        param: key.to_string(),
        reason: reason.into(),
    }
}

impl Config {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "theta_bins" => self.theta_bins = num(key, v)?,
            "l_bins" => self.l_bins = num(key, v)?,
            "lambda" => self.lambda = num(key, v)?,
            "n_segments" => self.n_segments = num(key, v)?,
            "centerline_bins" => self.centerline_bins = num(key, v)?,
            "log_sigma_mm" => self.log_sigma_mm = num(key, v)?,
            "log_threshold" => self.log_threshold = num(key, v)?,
            "log_min_response" => self.log_min_response = num(key, v)?,
            "binarize_at" => self.binarize_at = num(key, v)?,
            "min_area_cells" => self.min_area_cells = num(key, v)?,
            "iou_threshold" => self.iou_threshold = num(key, v)?,
            "pattern_sigma_deg" => self.pattern_sigma_deg = num(key, v)?,
            "step_deg" => self.step_deg = num(key, v)?,
            "baseline_step_deg" => self.baseline_step_deg = num(key, v)?,
            "raster_mm" => self.raster_mm = num(key, v)?,
            "arris_band_mm" => self.arris_band_mm = num(key, v)?,
            "board_side" => self.board_side = num(key, v)?,
            "pattern_file" => self.pattern_file = (!v.is_empty()).then(|| PathBuf::from(v)),
            "icp_max_iter" => self.icp_max_iter = num(key, v)?,
            "icp_trim" => self.icp_trim = num(key, v)?,
            "label_cutoff_mm" => self.label_cutoff_mm = num(key, v)?,
            _ if GenParams::KEYS.contains(&key) => self.gen.set(key, v)?,
            _ => return Err(invalid(key, "unknown configuration key")),
        }
        Ok(())
    }

    /// Applies `key = value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: i + 1,
                message: format!("expected `key = value`, got `{line}`"),
            })?;
            self.set(k.trim(), v)?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut c = Self::default();
        c.apply_text(&std::fs::read_to_string(path)?)?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        self.gen.validate()?;
        let positive = [
            ("lambda", self.lambda >= 0.0),
            ("theta_bins", self.theta_bins >= 2),
            ("n_segments", self.n_segments >= 1),
            ("log_sigma_mm", self.log_sigma_mm > 0.0),
            ("step_deg", self.step_deg > 0.0),
            ("baseline_step_deg", self.baseline_step_deg > 0.0),
            ("raster_mm", self.raster_mm > 0.0),
            ("arris_band_mm", self.arris_band_mm >= 0.0),
            ("board_side", self.board_side > 0.0),
            ("label_cutoff_mm", self.label_cutoff_mm > 0.0),
            ("pattern_sigma_deg", self.pattern_sigma_deg >= 0.0),
            ("log_min_response", self.log_min_response >= 0.0),
        ];
        if let Some((k, _)) = positive.iter().find(|(_, ok)| !ok) {
            return Err(invalid(k, "out of range"));
        }
        for (k, v) in [
            ("log_threshold", self.log_threshold),
            ("binarize_at", self.binarize_at),
            ("iou_threshold", self.iou_threshold),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(invalid(k, format!("must lie in [0, 1], got {v}")));
            }
        }
        if let Some(p) = &self.pattern_file {
            if !p.exists() {
                return Err(invalid("pattern_file", format!("{} does not exist", p.display())));
            }
        }
        Ok(())
    }

    pub fn heightmap_params(&self, execution: Execution) -> HeightMapParams {
        HeightMapParams {
            n_segments: self.n_segments,
            centerline_bins: self.centerline_bins,
            theta_bins: self.theta_bins,
            l_bins: (self.l_bins > 0).then_some(self.l_bins),
            lambda: self.lambda,
            execution,
        }
    }

    pub fn log_params(&self) -> LogParams {
        LogParams {
            sigma_mm: self.log_sigma_mm,
            threshold: self.log_threshold,
            min_response: self.log_min_response,
        }
    }

    pub fn saw_params(&self) -> SawParams {
        SawParams {
            raster_mm: self.raster_mm,
            arris_band_mm: self.arris_band_mm,
        }
    }

    pub fn icp_params(&self, execution: Execution) -> IcpParams {
        IcpParams {
            max_iter: self.icp_max_iter,
            trim: self.icp_trim,
            execution,
            ..IcpParams::default()
        }
    }

    pub fn pattern(&self) -> Result<SawingPattern> {
        let p = match &self.pattern_file {
            Some(path) => SawingPattern::load(path)?,
            None => SawingPattern::two_board_square(self.board_side),
        };
        p.validate()?;
        Ok(p)
    }

    /// Effective configuration in the file format.
    pub fn to_text(&self) -> String {
        let mut s = self.gen.to_kv();
        let pattern = self
            .pattern_file
            .as_ref()
            .map(|p| p.display().to_string())
            .unwrap_or_default();
        let values = [
            self.theta_bins.to_string(),
            self.l_bins.to_string(),
            self.lambda.to_string(),
            self.n_segments.to_string(),
            self.centerline_bins.to_string(),
            self.log_sigma_mm.to_string(),
            self.log_threshold.to_string(),
            self.log_min_response.to_string(),
            self.binarize_at.to_string(),
            self.min_area_cells.to_string(),
            self.iou_threshold.to_string(),
            self.pattern_sigma_deg.to_string(),
            self.step_deg.to_string(),
            self.baseline_step_deg.to_string(),
            self.raster_mm.to_string(),
            self.arris_band_mm.to_string(),
            self.board_side.to_string(),
            pattern,
            self.icp_max_iter.to_string(),
            self.icp_trim.to_string(),
            self.label_cutoff_mm.to_string(),
        ];
        for (k, v) in KEYS.iter().zip(values) {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }
}
