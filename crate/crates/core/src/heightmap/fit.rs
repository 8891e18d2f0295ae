use super::{node_spacing, CylindricalSample, HeightMap};
use crate::{Error, Execution, Result};

#[derive(Debug, Clone)]
pub struct FitParams {
    pub theta_bins: usize,
    pub l_bins: usize,
    /// Weight of the squared grid-neighbor differences.
    pub lambda: f64,
    /// Longitudinal extent of the grid; defaults to the largest sample `l`.
    pub l_extent: Option<f64>,
    /// Relative residual of the normal equations at which CG stops.
    pub tolerance: f64,
    pub max_iterations: usize,
    pub execution: Execution,
}

impl Default for FitParams {
    fn default() -> Self {
        Self {
            theta_bins: 360,
            l_bins: 100,
            lambda: 0.01,
            l_extent: None,
            tolerance: 1e-8,
            max_iterations: 10_000,
            execution: Execution::Parallel,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveStats {
    pub iterations: usize,
    pub relative_residual: f64,
    pub converged: bool,
}

/// Bilinear stencil of one sample: four node indices and weights.
#[derive(Debug, Clone, Copy)]
struct Bilinear {
    nodes: [(usize, usize); 4],
    weights: [f64; 4],
}

#[derive(Debug, Clone, Copy)]
struct Grid {
    cols: usize,
    rows: usize,
    dtheta: f64,
    dl: f64,
}

impl Grid {
    fn bilinear(&self, s: &CylindricalSample) -> Bilinear {
        let u = s.theta / self.dtheta;
        let uf = u.floor();
        let fu = u - uf;
        let j0 = (uf as i64).rem_euclid(self.cols as i64) as usize;
        let j1 = (j0 + 1) % self.cols;

        let v = (s.l / self.dl).clamp(0.0, (self.rows - 1) as f64);
        let i0 = (v.floor() as usize).min(self.rows - 2);
        let fv = v - i0 as f64;
        Bilinear {
            nodes: [(i0, j0), (i0, j1), (i0 + 1, j0), (i0 + 1, j1)],
            weights: [(1.0 - fu) * (1.0 - fv), fu * (1.0 - fv), (1.0 - fu) * fv, fu * fv],
        }
    }

    fn index(&self, (r, c): (usize, usize)) -> usize {
        r * self.cols + c
    }

    /// Stencil slot of node `b` relative to node `a`.
    fn slot(&self, a: (usize, usize), b: (usize, usize)) -> usize {
        let di = b.0 as isize - a.0 as isize;
        let dj = if b.1 == a.1 {
            0
        } else if b.1 == (a.1 + 1) % self.cols {
            1
        } else {
            -1
        };
        ((di + 1) * 3 + (dj + 1)) as usize
    }

    fn neighbor(&self, n: usize, slot: usize) -> Option<usize> {
        let (r, c) = (n / self.cols, n % self.cols);
        let di = slot as isize / 3 - 1;
        let dj = slot as isize % 3 - 1;
        let rr = r as isize + di;
        if rr < 0 || rr >= self.rows as isize {
            return None;
        }
        let cc = (c as isize + dj).rem_euclid(self.cols as isize) as usize;
        Some(rr as usize * self.cols + cc)
    }
}

/// Normal equations `(AᵀA + λL) x = Aᵀρ` stored as a 3×3 stencil per node.
struct NormalEquations {
    grid: Grid,
    coef: Vec<[f64; 9]>,
    rhs: Vec<f64>,
}

impl NormalEquations {
    fn assemble(grid: Grid, samples: &[CylindricalSample], lambda: f64) -> Self {
        let n = grid.rows * grid.cols;
        let mut coef = vec![[0.0; 9]; n];
        let mut rhs = vec![0.0; n];
        for s in samples {
            let b = grid.bilinear(s);
            for a in 0..4 {
                let ia = grid.index(b.nodes[a]);
                rhs[ia] += b.weights[a] * s.rho;
                for c in 0..4 {
                    coef[ia][grid.slot(b.nodes[a], b.nodes[c])] += b.weights[a] * b.weights[c];
                }
            }
        }
        if lambda > 0.0 {
            for r in 0..grid.rows {
                for c in 0..grid.cols {
                    let a = (r, c);
                    let mut edges = vec![(r, (c + 1) % grid.cols)];
                    if r + 1 < grid.rows {
                        edges.push((r + 1, c));
                    }
                    for b in edges {
                        let (ia, ib) = (grid.index(a), grid.index(b));
                        if ia == ib {
                            continue;
                        }
                        coef[ia][4] += lambda;
                        coef[ib][4] += lambda;
                        coef[ia][grid.slot(a, b)] -= lambda;
                        coef[ib][grid.slot(b, a)] -= lambda;
                    }
                }
            }
        }
        Self { grid, coef, rhs }
    }

    fn apply(&self, x: &[f64], out: &mut [f64], exec: Execution) {
        let grid = self.grid;
        let coef = &self.coef;
        exec.fill(out, |n| {
            let mut acc = 0.0;
            for (k, &w) in coef[n].iter().enumerate() {
                if w != 0.0 {
                    if let Some(m) = grid.neighbor(n, k) {
                        acc += w * x[m];
                    }
                }
            }
            acc
        });
    }
}

const DOT_CHUNK: usize = 4096;

/// Dot product whose result does not depend on the order of the terms.
/// Each product is rounded to a fixed-point grid set by the largest term and
/// the integers are summed exactly, so permuting the grid (a θ shift) or
/// splitting the sum across threads gives bit-identical solver iterates.
fn dot(a: &[f64], b: &[f64], exec: Execution) -> f64 {
    let chunks = a.len().div_ceil(DOT_CHUNK);
    let range = |i: usize| i * DOT_CHUNK..((i + 1) * DOT_CHUNK).min(a.len());
    let max = exec
        .map_range(chunks, |i| {
            range(i).map(|k| (a[k] * b[k]).abs()).fold(0.0, f64::max)
        })
        .into_iter()
        .fold(0.0, f64::max);
    if max == 0.0 || !max.is_finite() {
        return a.iter().zip(b).map(|(x, y)| x * y).sum();
    }
    let exp = max.log2().ceil() as i32;
    let scale = 2f64.powi((100 - exp).min(1000));
    let sum: i128 = exec
        .map_range(chunks, |i| {
            range(i).map(|k| (a[k] * b[k] * scale).round() as i128).sum::<i128>()
        })
        .into_iter()
        .sum();
    sum as f64 / scale
}

/// Jacobi-preconditioned conjugate gradient.
fn pcg(eq: &NormalEquations, x: &mut [f64], tol: f64, max_iter: usize, exec: Execution) -> SolveStats {
    let n = x.len();
    let diag: Vec<f64> = eq.coef.iter().map(|c| if c[4] > 0.0 { c[4] } else { 1.0 }).collect();
    let bnorm = dot(&eq.rhs, &eq.rhs, exec).sqrt();
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return SolveStats {
            iterations: 0,
            relative_residual: 0.0,
            converged: true,
        };
    }
    let mut ax = vec![0.0; n];
    eq.apply(x, &mut ax, exec);
    let mut r: Vec<f64> = eq.rhs.iter().zip(&ax).map(|(b, a)| b - a).collect();
    let mut z: Vec<f64> = r.iter().zip(&diag).map(|(r, d)| r / d).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z, exec);
    let mut ap = vec![0.0; n];
    let mut rel = dot(&r, &r, exec).sqrt() / bnorm;
    let mut it = 0;
    while rel > tol && it < max_iter {
        eq.apply(&p, &mut ap, exec);
        let pap = dot(&p, &ap, exec);
        if pap <= 0.0 {
            break;
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
            z[i] = r[i] / diag[i];
        }
        let rz_new = dot(&r, &z, exec);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
        it += 1;
        rel = dot(&r, &r, exec).sqrt() / bnorm;
    }
    SolveStats {
        iterations: it,
        relative_residual: rel,
        converged: rel <= tol,
    }
}

fn validate(samples: &[CylindricalSample], params: &FitParams) -> Result<Grid> {
    if samples.is_empty() {
        return Err(Error::InvalidInput("no samples to fit".into()));
    }
    if params.theta_bins < 2 || params.l_bins < 2 {
        return Err(Error::InvalidInput("height map needs at least 2 bins per axis".into()));
    }
    if !(params.lambda >= 0.0) || !params.lambda.is_finite() {
        return Err(Error::InvalidInput("lambda must be finite and non-negative".into()));
    }
    if samples
        .iter()
        .any(|s| !(s.theta.is_finite() && s.rho.is_finite() && s.l.is_finite()))
    {
        return Err(Error::InvalidInput("non-finite sample".into()));
    }
    let extent = params
        .l_extent
        .unwrap_or_else(|| samples.iter().map(|s| s.l).fold(0.0, f64::max));
    if !(extent > 0.0) {
        return Err(Error::InvalidInput("longitudinal extent must be positive".into()));
    }
    Ok(Grid {
        cols: params.theta_bins,
        rows: params.l_bins,
        dtheta: 360.0 / params.theta_bins as f64,
        dl: node_spacing(extent, params.l_bins),
    })
}

/// Fits the height map minimizing `Σ (B(θᵢ, lᵢ) − ρᵢ)² + λ Σ (fₐ − f_b)²`,
/// where `B` is bilinear interpolation and the second sum runs over all
/// 4-neighbor grid pairs, wrapping in θ. Cells without samples are filled by
/// the smoothness term alone.
pub fn fit_heightmap(samples: &[CylindricalSample], params: &FitParams) -> Result<HeightMap> {
    fit_heightmap_with_stats(samples, params).map(|(m, _)| m)
}

pub fn fit_heightmap_with_stats(samples: &[CylindricalSample], params: &FitParams) -> Result<(HeightMap, SolveStats)> {
    let grid = validate(samples, params)?;
    let eq = NormalEquations::assemble(grid, samples, params.lambda);
    let mean = samples.iter().map(|s| s.rho).sum::<f64>() / samples.len() as f64;
    let mut x = vec![mean; grid.rows * grid.cols];
    let stats = pcg(&eq, &mut x, params.tolerance, params.max_iterations, params.execution);
    if !stats.converged {
        log::warn!(
            "height map solve stopped after {} iterations at relative residual {:.3e}",
            stats.iterations,
            stats.relative_residual
        );
    }
    let map = HeightMap {
        theta_bins: grid.cols,
        l_bins: grid.rows,
        l_extent: grid.dl * (grid.rows - 1) as f64,
        values: x,
        lambda: Some(params.lambda),
    };
    Ok((map, stats))
}

fn map_grid(map: &HeightMap) -> Grid {
    Grid {
        cols: map.theta_bins,
        rows: map.l_bins,
        dtheta: map.delta_theta(),
        dl: map.delta_l(),
    }
}

/// Value of the fitting objective for an arbitrary grid.
pub fn fit_objective(map: &HeightMap, samples: &[CylindricalSample], lambda: f64) -> f64 {
    let grid = map_grid(map);
    let data: f64 = samples
        .iter()
        .map(|s| {
            let b = grid.bilinear(s);
            let v: f64 = (0..4).map(|k| b.weights[k] * map.values[grid.index(b.nodes[k])]).sum();
            (v - s.rho).powi(2)
        })
        .sum();
    let mut reg = 0.0;
    for r in 0..grid.rows {
        for c in 0..grid.cols {
            let a = map.get(r, c);
            reg += (a - map.get(r, (c + 1) % grid.cols)).powi(2);
            if r + 1 < grid.rows {
                reg += (a - map.get(r + 1, c)).powi(2);
            }
        }
    }
    data + lambda * reg
}

/// Grid of per-node sample means (nearest node), empty nodes at the global mean.
pub fn cell_mean_grid(samples: &[CylindricalSample], like: &HeightMap) -> HeightMap {
    let grid = map_grid(like);
    let mut sum = vec![0.0; grid.rows * grid.cols];
    let mut cnt = vec![0usize; grid.rows * grid.cols];
    for s in samples {
        let c = ((s.theta / grid.dtheta).round() as usize) % grid.cols;
        let r = ((s.l / grid.dl).round().max(0.0) as usize).min(grid.rows - 1);
        sum[r * grid.cols + c] += s.rho;
        cnt[r * grid.cols + c] += 1;
    }
    let mean = samples.iter().map(|s| s.rho).sum::<f64>() / samples.len().max(1) as f64;
    let mut out = like.clone();
    for (i, v) in out.values.iter_mut().enumerate() {
        *v = if cnt[i] > 0 { sum[i] / cnt[i] as f64 } else { mean };
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn samples(n: usize, length: f64, seed: u64, rho: impl Fn(f64, f64) -> f64) -> Vec<CylindricalSample> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let theta = rng.random_range(0.0..360.0);
                let l = rng.random_range(0.0..length);
                CylindricalSample {
                    theta,
                    rho: rho(theta, l),
                    l,
                }
            })
            .collect()
    }

    fn params(theta_bins: usize, l_bins: usize, lambda: f64, extent: f64) -> FitParams {
        FitParams {
            theta_bins,
            l_bins,
            lambda,
            l_extent: Some(extent),
            ..FitParams::default()
        }
    }

    #[test]
    fn constant_cylinder_is_exact() {
        let s = samples(20_000, 1000.0, 1, |_, _| 100.0);
        let map = fit_heightmap(&s, &params(90, 51, 0.1, 1000.0)).unwrap();
        for v in &map.values {
            assert!((v - 100.0).abs() <= 1e-4, "{v}");
        }
    }

    #[test]
    fn empty_samples_rejected() {
        assert!(matches!(
            fit_heightmap(&[], &FitParams::default()),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn empty_cells_filled_by_regularization() {
        // Samples only in the lower half of θ; the rest is filled smoothly.
        let s: Vec<_> = samples(10_000, 500.0, 2, |t, _| 100.0 + t / 180.0)
            .into_iter()
            .filter(|s| s.theta < 180.0)
            .collect();
        let (map, stats) = fit_heightmap_with_stats(&s, &params(72, 11, 0.5, 500.0)).unwrap();
        assert!(stats.converged);
        assert!(map.values.iter().all(|v| v.is_finite() && *v > 99.0 && *v < 102.0));
    }

    #[test]
    fn huge_lambda_approaches_mean() {
        let s = samples(5_000, 300.0, 3, |t, l| 100.0 + 5.0 * (t.to_radians()).sin() + l / 100.0);
        let mean = s.iter().map(|s| s.rho).sum::<f64>() / s.len() as f64;
        let (lo, hi) = s.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), s| (a.min(s.rho), b.max(s.rho)));
        let map = fit_heightmap(&s, &params(36, 11, 1e9, 300.0)).unwrap();
        let dev = map.values.iter().map(|v| (v - mean).abs()).fold(0.0, f64::max);
        assert!(dev <= 0.01 * (hi - lo), "deviation {dev}");
    }

    #[test]
    fn objective_not_worse_than_cell_means() {
        let s = samples(8_000, 400.0, 4, |t, l| 120.0 + 3.0 * (3.0 * t.to_radians()).cos() + (l / 50.0).sin());
        for lambda in [0.0, 0.01, 1.0] {
            let map = fit_heightmap(&s, &params(60, 21, lambda, 400.0)).unwrap();
            let baseline = cell_mean_grid(&s, &map);
            assert!(fit_objective(&map, &s, lambda) <= fit_objective(&baseline, &s, lambda) + 1e-9);
        }
    }

    #[test]
    fn deterministic_and_policy_independent() {
        let s = samples(4_000, 200.0, 5, |t, _| 80.0 + t / 360.0);
        let mut p = params(40, 21, 0.05, 200.0);
        p.execution = Execution::Sequential;
        let a = fit_heightmap(&s, &p).unwrap();
        p.execution = Execution::Parallel;
        let b = fit_heightmap(&s, &p).unwrap();
        let c = fit_heightmap(&s, &p).unwrap();
        assert_eq!(a.values, b.values);
        assert_eq!(b.values, c.values);
    }

    #[test]
    fn seam_has_no_discontinuity() {
        // Bump centred on θ = 0 straddles the wrap.
        let bump = |t: f64, l: f64| {
            let d = crate::circular_distance_deg(t, 0.0);
            100.0 + 4.0 * (-(d * d) / (2.0 * 8.0 * 8.0) - (l - 150.0).powi(2) / (2.0 * 30.0 * 30.0)).exp()
        };
        let s = samples(30_000, 300.0, 6, bump);
        let map = fit_heightmap(&s, &params(120, 31, 0.01, 300.0)).unwrap();
        let n = map.theta_bins;
        let mut interior = 0.0f64;
        for r in 0..map.l_bins {
            for c in 0..n - 1 {
                interior = interior.max((map.get(r, c) - map.get(r, c + 1)).abs());
            }
        }
        for r in 0..map.l_bins {
            let seam = (map.get(r, 0) - map.get(r, n - 1)).abs();
            assert!(seam <= 2.0 * interior, "row {r}: seam {seam} interior {interior}");
        }
        // Peak sits on the seam.
        let (imax, _) = map.values.iter().enumerate().fold((0, f64::MIN), |b, (i, &v)| if v > b.1 { (i, v) } else { b });
        let col = imax % n;
        assert!(col <= 1 || col >= n - 1, "peak column {col}");
    }
}
