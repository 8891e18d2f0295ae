//! Sawing-angle selection.
//!
//! The pattern function places a wrapped Gaussian at the polar angle of every
//! board corner; the knot function is the per-angle mass of a knot
//! probability map. The chosen rotation minimizes their circular
//! cross-correlation, so knots are steered away from board corners.

mod pattern;

pub use pattern::{corner_angles, symmetry_order, Board, SawingPattern};

use std::f64::consts::PI;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::detection::ProbabilityMap;
use crate::{circular_distance_deg, Error, Execution, Result};

/// Gaussian tails beyond this many σ are dropped.
const TRUNCATE_SIGMAS: f64 = 6.0;

fn grid_size(delta_theta: f64) -> Result<usize> {
    if !(delta_theta > 0.0) {
        return Err(Error::InvalidInput(format!("angular resolution must be positive, got {delta_theta}")));
    }
    let n = (360.0 / delta_theta).round();
    if n < 1.0 || (n * delta_theta - 360.0).abs() > 1e-9 {
        return Err(Error::InvalidInput(format!("{delta_theta}° does not divide 360°")));
    }
    Ok(n as usize)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternFunction {
    /// Values at `θ = j·Δθ`, `j = 0..360/Δθ`.
    pub samples: Vec<f64>,
    pub delta_theta: f64,
    pub sigma_deg: f64,
    pub corner_angles: Vec<f64>,
    /// Rotational symmetry order of the corner angles (1, 2 or 4).
    pub symmetry_order: usize,
}

/// Wrapped Gaussian mixture centered at the corner angles, sampled every
/// `delta_theta` degrees.
pub fn pattern_function(corners: &[f64], sigma_deg: f64, delta_theta: f64) -> Result<PatternFunction> {
    if !(sigma_deg > 0.0 && sigma_deg.is_finite()) {
        return Err(Error::param("sigma_deg", format!("must be positive, got {sigma_deg}")));
    }
    let n = grid_size(delta_theta)?;
    let norm = 1.0 / (sigma_deg * (2.0 * PI).sqrt());
    let cutoff = TRUNCATE_SIGMAS * sigma_deg;
    let samples = (0..n)
        .map(|j| {
            let theta = j as f64 * delta_theta;
            corners
                .iter()
                .map(|&c| circular_distance_deg(theta, c))
                .filter(|&d| d <= cutoff)
                .map(|d| norm * (-0.5 * (d / sigma_deg).powi(2)).exp())
                .sum()
        })
        .collect();
    Ok(PatternFunction {
        samples,
        delta_theta,
        sigma_deg,
        corner_angles: corners.to_vec(),
        symmetry_order: symmetry_order(corners),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnotFunction {
    pub samples: Vec<f64>,
    pub delta_theta: f64,
    /// True when the samples integrate to one; false for an all-zero map.
    pub normalized: bool,
}

impl KnotFunction {
    /// Wraps raw samples without normalizing them.
    pub fn from_samples(samples: Vec<f64>) -> Self {
        let delta_theta = 360.0 / samples.len() as f64;
        Self {
            samples,
            delta_theta,
            normalized: false,
        }
    }

    /// Circular shift: new sample `j` holds old sample `j − shift`.
    pub fn shifted(&self, shift: isize) -> Self {
        let n = self.samples.len() as isize;
        let samples = (0..n)
            .map(|j| self.samples[(j - shift).rem_euclid(n) as usize])
            .collect();
        Self { samples, ..self.clone() }
    }
}

/// Sums the probability map over l for each θ column and normalizes so that
/// `Σ samples · Δθ = 1`. An all-zero map yields an all-zero function.
pub fn knot_function(pmap: &ProbabilityMap) -> KnotFunction {
    let cols = pmap.theta_bins;
    let mut samples = vec![0.0; cols];
    for row in pmap.values.chunks(cols) {
        for (s, v) in samples.iter_mut().zip(row) {
            *s += v;
        }
    }
    let delta_theta = pmap.delta_theta();
    let total: f64 = samples.iter().sum();
    let normalized = total > 0.0;
    if normalized {
        let k = 1.0 / (total * delta_theta);
        samples.iter_mut().for_each(|s| *s *= k);
    }
    KnotFunction {
        samples,
        delta_theta,
        normalized,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AngleResult {
    pub angle_deg: f64,
    pub objective: f64,
    /// Objective at every multiple of `step_deg` over the full circle.
    pub objective_curve: Vec<f64>,
    pub step_deg: f64,
    /// Search range `[0, symmetry_period)`.
    pub symmetry_period: f64,
}

impl AngleResult {
    pub fn curve_angles(&self) -> Vec<f64> {
        (0..self.objective_curve.len()).map(|i| i as f64 * self.step_deg).collect()
    }
}

/// Periodic linear interpolation onto a grid `factor` times finer.
fn refine_linear(samples: &[f64], factor: usize) -> Vec<f64> {
    let n = samples.len();
    let mut out = Vec::with_capacity(n * factor);
    for j in 0..n {
        let (a, b) = (samples[j], samples[(j + 1) % n]);
        for t in 0..factor {
            let f = t as f64 / factor as f64;
            out.push(a + (b - a) * f);
        }
    }
    out
}

/// `C(m) = Σ_j f_k[(j + m) mod N] · f_p[j] · Δθ`, summed in index order.
pub fn correlation_at(fk: &[f64], fp: &[f64], shift: usize, delta_theta: f64) -> f64 {
    let n = fk.len();
    let mut acc = 0.0;
    for j in 0..n {
        acc += fk[(j + shift) % n] * fp[j];
    }
    acc * delta_theta
}

/// Selects the rotation angle minimizing the circular cross-correlation
/// `C(a) = Σ_θ f_k(θ + a) · f_p(θ) · Δθ`.
///
/// Rotating the log by `a` moves a knot at `θ` to `θ − a`, so `C(a)` measures
/// knot mass landing on corners. Candidates are the multiples of `step_deg`
/// in `[0, P)` with `P = 360 / symmetry order`; ties go to the smallest angle.
/// A step finer than the grid resamples the knot function linearly and
/// re-evaluates the pattern function; a coarser step must be a whole multiple
/// of the grid resolution.
pub fn optimize_angle(knot_fn: &KnotFunction, pattern_fn: &PatternFunction, step_deg: f64) -> Result<AngleResult> {
    optimize_angle_with(knot_fn, pattern_fn, step_deg, Execution::default())
}

pub fn optimize_angle_with(
    knot_fn: &KnotFunction,
    pattern_fn: &PatternFunction,
    step_deg: f64,
    execution: Execution,
) -> Result<AngleResult> {
    let n = knot_fn.samples.len();
    if n != pattern_fn.samples.len() || (knot_fn.delta_theta - pattern_fn.delta_theta).abs() > 1e-12 {
        return Err(Error::GridMismatch(format!(
            "knot function has {n} samples, pattern function {}",
            pattern_fn.samples.len()
        )));
    }
    grid_size(step_deg)?;
    let dtheta = pattern_fn.delta_theta;
    let (fk, fp, delta, stride) = if step_deg < dtheta - 1e-12 {
        let factor = (dtheta / step_deg).round();
        if (factor * step_deg - dtheta).abs() > 1e-9 {
            return Err(Error::param("step_deg", format!("{step_deg}° does not divide the {dtheta}° grid")));
        }
        let factor = factor as usize;
        let fine = pattern_function(&pattern_fn.corner_angles, pattern_fn.sigma_deg, step_deg)?;
        (refine_linear(&knot_fn.samples, factor), fine.samples, step_deg, 1)
    } else {
        let stride = (step_deg / dtheta).round();
        if (stride * dtheta - step_deg).abs() > 1e-9 {
            return Err(Error::param("step_deg", format!("{step_deg}° is not a multiple of the {dtheta}° grid")));
        }
        (knot_fn.samples.clone(), pattern_fn.samples.clone(), dtheta, stride as usize)
    };

    let candidates = fk.len() / stride;
    let objective_curve = execution.map_range(candidates, |i| correlation_at(&fk, &fp, i * stride, delta));

    let period = 360.0 / pattern_fn.symmetry_order as f64;
    let in_period = ((period / step_deg) - 1e-9).ceil().max(1.0) as usize;
    let mut best = 0;
    for i in 1..in_period.min(candidates) {
        if objective_curve[i] < objective_curve[best] {
            best = i;
        }
    }
    Ok(AngleResult {
        angle_deg: best as f64 * step_deg,
        objective: objective_curve[best],
        objective_curve,
        step_deg,
        symmetry_period: period,
    })
}

/// Two-column CSV of a sampled periodic function.
pub fn write_function_csv<W: Write>(w: &mut W, header: (&str, &str), delta: f64, samples: &[f64]) -> Result<()> {
    writeln!(w, "{},{}", header.0, header.1)?;
    for (j, v) in samples.iter().enumerate() {
        writeln!(w, "{},{}", j as f64 * delta, v)?;
    }
    Ok(())
}
