use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Synthetic log generator parameters. Lengths in millimeters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenParams {
    pub length: f64,
    pub butt_radius: f64,
    pub top_radius: f64,
    /// Lateral deviation of a quadratic pith at mid-length; 0 gives a straight log.
    pub pith_sagitta: f64,
    pub whorl_spacing_mean: f64,
    /// Whorl gaps are drawn uniformly within `mean · (1 ± jitter)`.
    pub whorl_spacing_jitter: f64,
    pub knots_per_whorl: (usize, usize),
    pub knot_base_radius: (f64, f64),
    pub bump_height: (f64, f64),
    pub surface_noise_sigma: f64,
    pub points_per_mm2: f64,
    pub seed: u64,
}

impl Default for GenParams {
    fn default() -> Self {
        Self {
            length: 4000.0,
            butt_radius: 150.0,
            top_radius: 125.0,
            pith_sagitta: 0.0,
            whorl_spacing_mean: 500.0,
            whorl_spacing_jitter: 0.2,
            knots_per_whorl: (3, 5),
            knot_base_radius: (10.0, 20.0),
            bump_height: (2.0, 5.0),
            surface_noise_sigma: 0.0,
            points_per_mm2: 0.1,
            seed: 42,
        }
    }
}

fn parse_f64(key: &str, v: &str) -> Result<f64> {
    v.trim()
        .parse::<f64>()
        .map_err(|e| Error::param(key, format!("`{v}` is not a number: {e}")))
}

fn parse_pair<T: std::str::FromStr>(key: &str, v: &str) -> Result<(T, T)>
where
    T::Err: std::fmt::Display,
{
    let t = v.trim().trim_start_matches('[').trim_end_matches(']');
    let parts: Vec<&str> = t.split([',', ' ']).filter(|s| !s.is_empty()).collect();
    let p = |s: &str| {
        s.parse::<T>()
            .map_err(|e| Error::param(key, format!("`{s}` is invalid: {e}")))
    };
    match parts.as_slice() {
        [a] => {
            let a = p(a)?;
            let b = p(parts[0])?;
            Ok((a, b))
        }
        [a, b] => Ok((p(a)?, p(b)?)),
        _ => Err(Error::param(key, format!("`{v}` is not a `min,max` range"))),
    }
}

impl GenParams {
    /// Keys understood by [`GenParams::set`].
    pub const KEYS: &'static [&'static str] = &[
        "length",
        "butt_radius",
        "top_radius",
        "pith_sagitta",
        "whorl_spacing_mean",
        "whorl_spacing_jitter",
        "knots_per_whorl",
        "knot_base_radius",
        "bump_height",
        "surface_noise_sigma",
        "points_per_mm2",
        "seed",
    ];

    /// Sets one field from its `key = value` text form. Ranges are `min,max`.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "length" => self.length = parse_f64(key, value)?,
            "butt_radius" => self.butt_radius = parse_f64(key, value)?,
            "top_radius" => self.top_radius = parse_f64(key, value)?,
            "pith_sagitta" => self.pith_sagitta = parse_f64(key, value)?,
            "whorl_spacing_mean" => self.whorl_spacing_mean = parse_f64(key, value)?,
            "whorl_spacing_jitter" => self.whorl_spacing_jitter = parse_f64(key, value)?,
            "knots_per_whorl" => self.knots_per_whorl = parse_pair(key, value)?,
            "knot_base_radius" => self.knot_base_radius = parse_pair(key, value)?,
            "bump_height" => self.bump_height = parse_pair(key, value)?,
            "surface_noise_sigma" => self.surface_noise_sigma = parse_f64(key, value)?,
            "points_per_mm2" => self.points_per_mm2 = parse_f64(key, value)?,
            "seed" => {
                self.seed = value
                    .trim()
                    .parse()
                    .map_err(|e| Error::param(key, format!("`{value}`: {e}")))?
            }
            _ => return Err(Error::param(key, "unknown generator parameter")),
        }
        Ok(())
    }

    /// Flat `key = value` text, readable by [`GenParams::set`].
    pub fn to_kv(&self) -> String {
        format!(
            "length = {}\nbutt_radius = {}\ntop_radius = {}\npith_sagitta = {}\nwhorl_spacing_mean = {}\n\
             whorl_spacing_jitter = {}\nknots_per_whorl = {},{}\nknot_base_radius = {},{}\nbump_height = {},{}\n\
             surface_noise_sigma = {}\npoints_per_mm2 = {}\nseed = {}\n",
            self.length,
            self.butt_radius,
            self.top_radius,
            self.pith_sagitta,
            self.whorl_spacing_mean,
            self.whorl_spacing_jitter,
            self.knots_per_whorl.0,
            self.knots_per_whorl.1,
            self.knot_base_radius.0,
            self.knot_base_radius.1,
            self.bump_height.0,
            self.bump_height.1,
            self.surface_noise_sigma,
            self.points_per_mm2,
            self.seed
        )
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::param(name, format!("must be positive, got {v}")))
            }
        };
        let non_negative = |name: &str, v: f64| {
            if v >= 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::param(name, format!("must be non-negative, got {v}")))
            }
        };
        positive("length", self.length)?;
        positive("butt_radius", self.butt_radius)?;
        positive("top_radius", self.top_radius)?;
        positive("whorl_spacing_mean", self.whorl_spacing_mean)?;
        positive("points_per_mm2", self.points_per_mm2)?;
        non_negative("surface_noise_sigma", self.surface_noise_sigma)?;
        if !self.pith_sagitta.is_finite() {
            return Err(Error::param("pith_sagitta", "must be finite"));
        }
        if !(0.0..1.0).contains(&self.whorl_spacing_jitter) {
            return Err(Error::param("whorl_spacing_jitter", "must be in [0, 1)"));
        }
        if self.knots_per_whorl.0 > self.knots_per_whorl.1 {
            return Err(Error::param("knots_per_whorl", "min exceeds max"));
        }
        let (b0, b1) = self.knot_base_radius;
        if !(b0 > 0.0 && b0 <= b1 && b1.is_finite()) {
            return Err(Error::param("knot_base_radius", "range must satisfy 0 < min <= max"));
        }
        let (h0, h1) = self.bump_height;
        if !(h0 >= 0.0 && h0 <= h1 && h1.is_finite()) {
            return Err(Error::param("bump_height", "range must satisfy 0 <= min <= max"));
        }
        let min_r = self.butt_radius.min(self.top_radius);
        if b1 >= min_r {
            return Err(Error::param("knot_base_radius", "knots must be narrower than the log"));
        }
        if 2.0 * (b1 + 10.0) >= self.length {
            return Err(Error::param("length", "log too short for its knots"));
        }
        Ok(())
    }
}
