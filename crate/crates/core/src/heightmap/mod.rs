//! Point cloud → log-centric height map.
//!
//! The log's centerline is estimated and divided into segments, the cloud is
//! split by the planes bisecting consecutive segments, every point is expressed
//! in cylindrical coordinates (θ, ρ, l) about its segment, and finally a smooth
//! ρ = f(θ, l) is fitted on a regular grid with a gradient penalty.

mod centerline;
mod cylindrical;
mod fit;
pub mod grid_io;

pub use centerline::{estimate_centerline, split_by_bisecting_planes, Centerline, CenterlineParams};
pub use cylindrical::{cylindrical_samples, to_cylindrical, CylindricalSample, SegmentFrame};
pub use fit::{
    cell_mean_grid, fit_heightmap, fit_heightmap_with_stats, fit_objective, FitParams, SolveStats,
};

use serde::{Deserialize, Serialize};

use crate::{Execution, PointCloud, Result};

/// Regular grid of radial distance ρ (mm) over polar angle θ and longitudinal
/// position l. Node `(row, col)` sits at `θ = col·Δθ`, `l = row·Δl`, where
/// `Δθ = 360/theta_bins` and `Δl = l_extent/(l_bins − 1)`. Columns wrap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeightMap {
    pub theta_bins: usize,
    pub l_bins: usize,
    pub l_extent: f64,
    /// Row-major, `values[row * theta_bins + col]`.
    pub values: Vec<f64>,
    /// Smoothing weight used for the fit; unknown for maps read from disk.
    pub lambda: Option<f64>,
}

impl HeightMap {
    pub fn constant(theta_bins: usize, l_bins: usize, l_extent: f64, value: f64) -> Self {
        Self {
            theta_bins,
            l_bins,
            l_extent,
            values: vec![value; theta_bins * l_bins],
            lambda: None,
        }
    }

    pub fn delta_theta(&self) -> f64 {
        360.0 / self.theta_bins as f64
    }

    pub fn delta_l(&self) -> f64 {
        node_spacing(self.l_extent, self.l_bins)
    }

    pub fn theta_of(&self, col: usize) -> f64 {
        col as f64 * self.delta_theta()
    }

    pub fn l_of(&self, row: usize) -> f64 {
        row as f64 * self.delta_l()
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.theta_bins + col]
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Circularly shifts columns so that new column `c` holds old column `c − shift`.
    pub fn shift_columns(&self, shift: isize) -> Self {
        let n = self.theta_bins;
        let mut out = self.clone();
        for r in 0..self.l_bins {
            for c in 0..n {
                let src = (c as isize - shift).rem_euclid(n as isize) as usize;
                out.values[r * n + c] = self.values[r * n + src];
            }
        }
        out
    }
}

pub(crate) fn node_spacing(extent: f64, bins: usize) -> f64 {
    if bins > 1 {
        extent / (bins - 1) as f64
    } else {
        extent.max(1.0)
    }
}

/// End-to-end height map construction parameters.
#[derive(Debug, Clone)]
pub struct HeightMapParams {
    pub n_segments: usize,
    pub centerline_bins: usize,
    pub theta_bins: usize,
    /// Defaults to `⌈log length / 10 mm⌉`.
    pub l_bins: Option<usize>,
    pub lambda: f64,
    pub execution: Execution,
}

impl Default for HeightMapParams {
    fn default() -> Self {
        Self {
            n_segments: 4,
            centerline_bins: 50,
            theta_bins: 360,
            l_bins: None,
            lambda: 0.01,
            execution: Execution::Parallel,
        }
    }
}

/// Default number of longitudinal bins for a log of the given length.
pub fn default_l_bins(length_mm: f64) -> usize {
    ((length_mm / 10.0).ceil() as usize).max(2)
}

/// Runs centerline estimation, splitting, unwrapping and fitting.
pub fn build_heightmap(cloud: &PointCloud, params: &HeightMapParams) -> Result<(HeightMap, Centerline)> {
    let centerline = estimate_centerline(
        cloud,
        params.n_segments,
        &CenterlineParams {
            bins: params.centerline_bins,
        },
    )?;
    let samples = cylindrical_samples(cloud, &centerline)?;
    let extent = centerline.total_length();
    let fit = FitParams {
        theta_bins: params.theta_bins,
        l_bins: params.l_bins.unwrap_or_else(|| default_l_bins(extent)),
        lambda: params.lambda,
        l_extent: Some(extent),
        execution: params.execution,
        ..FitParams::default()
    };
    let map = fit_heightmap(&samples, &fit)?;
    Ok((map, centerline))
}
