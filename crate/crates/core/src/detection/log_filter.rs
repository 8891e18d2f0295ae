use super::ProbabilityMap;
use crate::heightmap::HeightMap;
use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct LogParams {
    /// Gaussian scale in millimeters on the log surface.
    pub sigma_mm: f64,
    /// Normalized responses below this are set to zero.
    pub threshold: f64,
    /// Raw responses (1/mm) below this are set to zero before normalizing,
    /// so a smooth log yields an empty map instead of amplified fitting noise.
    pub min_response: f64,
}

impl Default for LogParams {
    fn default() -> Self {
        Self {
            sigma_mm: 15.0,
            threshold: 0.05,
            min_response: 1e-3,
        }
    }
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_unstable_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Sampled Gaussian and its zero-sum second derivative, in cell units.
fn kernels(sigma: f64) -> (Vec<f64>, Vec<f64>) {
    let radius = (4.0 * sigma).ceil() as isize;
    let xs: Vec<f64> = (-radius..=radius).map(|x| x as f64).collect();
    let mut g: Vec<f64> = xs.iter().map(|x| (-x * x / (2.0 * sigma * sigma)).exp()).collect();
    let gs: f64 = g.iter().sum();
    g.iter_mut().for_each(|v| *v /= gs);
    let s2 = sigma * sigma;
    let mut g2: Vec<f64> = xs
        .iter()
        .zip(&g)
        .map(|(x, gv)| (x * x / (s2 * s2) - 1.0 / s2) * gv)
        .collect();
    let mean = g2.iter().sum::<f64>() / g2.len() as f64;
    g2.iter_mut().for_each(|v| *v -= mean);
    (g, g2)
}

/// Circular convolution along θ (columns) of a row-major grid.
fn conv_theta(src: &[f64], cols: usize, k: &[f64]) -> Vec<f64> {
    let radius = (k.len() / 2) as isize;
    let n = cols as isize;
    let mut out = vec![0.0; src.len()];
    for (row_in, row_out) in src.chunks(cols).zip(out.chunks_mut(cols)) {
        for (c, o) in row_out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (t, w) in k.iter().enumerate() {
                let idx = (c as isize + t as isize - radius).rem_euclid(n) as usize;
                acc += w * row_in[idx];
            }
            *o = acc;
        }
    }
    out
}

/// Half-sample symmetric reflection of an index into `0..n`.
fn reflect(i: isize, n: isize) -> usize {
    let period = 2 * n;
    let m = i.rem_euclid(period);
    (if m < n { m } else { period - 1 - m }) as usize
}

/// Convolution along l (rows) with reflect padding.
fn conv_l(src: &[f64], cols: usize, rows: usize, k: &[f64]) -> Vec<f64> {
    let radius = (k.len() / 2) as isize;
    let mut out = vec![0.0; src.len()];
    for r in 0..rows {
        for c in 0..cols {
            let mut acc = 0.0;
            for (t, w) in k.iter().enumerate() {
                let rr = reflect(r as isize + t as isize - radius, rows as isize);
                acc += w * src[rr * cols + c];
            }
            out[r * cols + c] = acc;
        }
    }
    out
}

/// Rectified Laplacian-of-Gaussian response, as negated curvature in 1/mm.
///
/// Each row is first detrended by its median, which removes taper without
/// depending on column order. The LoG is evaluated with σ converted to cells on
/// each axis (circular in θ, reflected in l) and negated so protrusions
/// respond positively. A σ below one cell is clamped to one cell with a
/// warning.
pub fn log_response(hmap: &HeightMap, sigma_mm: f64) -> Result<Vec<f64>> {
    if !(sigma_mm > 0.0) {
        return Err(Error::InvalidInput("LoG sigma must be positive".into()));
    }
    let cols = hmap.theta_bins;
    let rows = hmap.l_bins;
    if cols == 0 || rows == 0 || hmap.values.len() != cols * rows {
        return Err(Error::InvalidInput("malformed height map".into()));
    }

    let mut detrended = hmap.values.clone();
    for row in detrended.chunks_mut(cols) {
        let m = median(&mut row.to_vec());
        row.iter_mut().for_each(|v| *v -= m);
    }

    let radius_mm = median(&mut hmap.values.clone()).abs().max(1e-9);
    let mm_theta = radius_mm * hmap.delta_theta().to_radians();
    let mm_l = hmap.delta_l();
    let sigma_cells = |mm_per_cell: f64, axis: &str| {
        let s = sigma_mm / mm_per_cell;
        if s < 1.0 {
            log::warn!("SigmaTooSmall: σ = {s:.3} cells along {axis}, clamped to 1 cell");
            1.0
        } else {
            s
        }
    };
    let s_theta = sigma_cells(mm_theta, "theta");
    let s_l = sigma_cells(mm_l, "l");
    let (g_t, g2_t) = kernels(s_theta);
    let (g_l, g2_l) = kernels(s_l);

    let d2_theta = conv_l(&conv_theta(&detrended, cols, &g2_t), cols, rows, &g_l);
    let d2_l = conv_l(&conv_theta(&detrended, cols, &g_t), cols, rows, &g2_l);

    Ok(d2_theta
        .iter()
        .zip(&d2_l)
        .map(|(a, b)| (-(a / (mm_theta * mm_theta) + b / (mm_l * mm_l))).max(0.0))
        .collect())
}

/// Knot probability map from [`log_response`]: cut at `min_response`,
/// min-max normalized to `[0, 1]` and cut again at `threshold`.
pub fn log_detect(hmap: &HeightMap, params: &LogParams) -> Result<ProbabilityMap> {
    if !(params.min_response >= 0.0) {
        return Err(Error::param("min_response", "must be non-negative"));
    }
    let mut response = log_response(hmap, params.sigma_mm)?;
    response.iter_mut().filter(|v| **v < params.min_response).for_each(|v| *v = 0.0);
    let (cols, rows) = (hmap.theta_bins, hmap.l_bins);
    let (lo, hi) = response
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let values: Vec<f64> = if hi - lo > 0.0 {
        response
            .iter()
            .map(|&v| {
                let p = (v - lo) / (hi - lo);
                if p < params.threshold {
                    0.0
                } else {
                    p
                }
            })
            .collect()
    } else {
        vec![0.0; response.len()]
    };
    ProbabilityMap::from_values(cols, rows, hmap.l_extent, values)
}
