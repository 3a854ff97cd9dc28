//! Post-processing over completed snapshots: particle census, normalized
//! size distributions, the cubic coarsening-law fit, and a shape-anisotropy
//! measure for the sphere-to-cube transition study.
//!
//! Everything here is read-only over a composition field; nothing touches
//! the solver. Particles are the face-connected components of
//! `{cells : c >= threshold}` (6-connectivity in 3D), merging across
//! periodic boundaries when the grid is periodic. Each component's
//! equivalent radius comes from its volume: `R = (3V/4pi)^{1/3}` in 3D,
//! `(V/pi)^{1/2}` in 2D, and `V/2` in 1D (half the segment length).

use thiserror::Error;

use crate::grid::Grid;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("threshold {0} is outside the meaningful composition range (0, 0.25)")]
    BadThreshold(f64),
    #[error("no cells reach the threshold {0}")]
    NoParticles(f64),
    #[error("fit window holds {found} points; at least 3 are required")]
    TooFewPoints { found: usize },
    #[error("cannot build a distribution from an empty radius sample")]
    EmptySample,
    #[error("anisotropy needs at least two grid axes (no diagonal exists in 1D)")]
    NoDiagonal,
}

/// Census of one snapshot at a fixed threshold.
#[derive(Debug, Clone)]
pub struct ParticleStats {
    pub count: usize,
    /// Equivalent radius of each particle, sorted ascending.
    pub radii: Vec<f64>,
    /// Arithmetic mean of `radii` (0 when no particles).
    pub mean_radius: f64,
    pub threshold: f64,
}

/// Equivalent radius of a component of volume `v` in `d` dimensions.
fn equivalent_radius(v: f64, d: usize) -> f64 {
    match d {
        1 => v / 2.0,
        2 => (v / std::f64::consts::PI).sqrt(),
        _ => (3.0 * v / (4.0 * std::f64::consts::PI)).cbrt(),
    }
}

/// Label the face-connected components of `{cells : c >= threshold}` and
/// reduce them to a census. Components touching across a periodic boundary
/// are one particle; under Neumann conditions the domain edge separates.
pub fn label_particles(
    grid: &Grid,
    c: &[f64],
    threshold: f64,
) -> Result<ParticleStats, AnalysisError> {
    if !(threshold > 0.0 && threshold < 0.25) {
        return Err(AnalysisError::BadThreshold(threshold));
    }
    assert_eq!(c.len(), grid.ncells(), "field length must match the grid");
    let n = grid.ncells();
    let cell_v = grid.cell_volume();
    let d = grid.ndim();
    let mut seen = vec![false; n];
    let mut stack: Vec<usize> = Vec::new();
    let mut radii = Vec::new();
    for start in 0..n {
        if seen[start] || c[start] < threshold {
            continue;
        }
        let mut cells = 0usize;
        seen[start] = true;
        stack.push(start);
        while let Some(i) = stack.pop() {
            cells += 1;
            for axis in 0..d {
                for dir in [-1i8, 1] {
                    if let Some(j) = grid.neighbor(i, axis, dir) {
                        if !seen[j] && c[j] >= threshold {
                            seen[j] = true;
                            stack.push(j);
                        }
                    }
                }
            }
        }
        radii.push(equivalent_radius(cells as f64 * cell_v, d));
    }
    radii.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mean_radius =
        if radii.is_empty() { 0.0 } else { radii.iter().sum::<f64>() / radii.len() as f64 };
    Ok(ParticleStats { count: radii.len(), radii, mean_radius, threshold })
}

/// Least-squares fit of the cubic growth law over a time window.
#[derive(Debug, Clone, Copy)]
pub struct CoarseningFit {
    /// Coarsening rate constant: slope of `<R>^3` against `t`.
    pub k: f64,
    /// Fitted `<R>^3` at the window start `t0`.
    pub r0_cubed: f64,
    /// Window start used as the time origin of the fit.
    pub t0: f64,
    /// Coefficient of determination of the line through `(t, <R>^3)`.
    pub r_squared: f64,
}

/// Fit `<R>^3 = r0_cubed + K (t - t0)` by least squares over the points of
/// `series` (pairs of `(t, <R>)`) whose `t` lies in `[window.0, window.1]`.
/// A constant series fits exactly with `K = 0`; by convention its
/// `r_squared` is 1 (the line reproduces every point).
pub fn fit_coarsening(
    series: &[(f64, f64)],
    window: (f64, f64),
) -> Result<CoarseningFit, AnalysisError> {
    let pts: Vec<(f64, f64)> = series
        .iter()
        .filter(|(t, _)| *t >= window.0 && *t <= window.1)
        .map(|&(t, r)| (t, r * r * r))
        .collect();
    if pts.len() < 3 {
        return Err(AnalysisError::TooFewPoints { found: pts.len() });
    }
    let t0 = window.0;
    // An exactly constant series is the K = 0 line; take it directly so
    // rounding in the mean cannot manufacture a spurious slope.
    if pts.iter().all(|(_, y)| *y == pts[0].1) {
        return Ok(CoarseningFit { k: 0.0, r0_cubed: pts[0].1, t0, r_squared: 1.0 });
    }
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|(t, _)| t - t0).sum();
    let sy: f64 = pts.iter().map(|(_, y)| *y).sum();
    let mx = sx / n;
    let my = sy / n;
    let sxx: f64 = pts.iter().map(|(t, _)| (t - t0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|(t, y)| (t - t0 - mx) * (y - my)).sum();
    let k = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - k * mx;
    let ss_res: f64 = pts.iter().map(|(t, y)| (y - (intercept + k * (t - t0))).powi(2)).sum();
    let ss_tot: f64 = pts.iter().map(|(_, y)| (y - my).powi(2)).sum();
    let r_squared = if ss_tot > 0.0 { (1.0 - ss_res / ss_tot).clamp(0.0, 1.0) } else { 1.0 };
    Ok(CoarseningFit { k, r0_cubed: intercept, t0, r_squared })
}

/// Normalized particle-size distribution over `R / <R>`.
#[derive(Debug, Clone)]
pub struct PsdHistogram {
    /// Number of equal-width bins spanning [0, 2.5].
    pub bins: usize,
    pub bin_width: f64,
    /// Probability density per bin; `sum(density) * bin_width == 1`.
    pub density: Vec<f64>,
    pub mean_radius: f64,
}

/// Upper edge of the normalized-radius axis.
pub const PSD_MAX_RATIO: f64 = 2.5;

impl PsdHistogram {
    pub fn bin_center(&self, b: usize) -> f64 {
        (b as f64 + 0.5) * self.bin_width
    }

    /// Total probability mass (1 by construction; exposed for checks).
    pub fn area(&self) -> f64 {
        self.density.iter().sum::<f64>() * self.bin_width
    }
}

/// Histogram of `R / <R>` over `[0, 2.5]` with unit-area normalization.
/// Ratios beyond the axis (pathological samples) land in the nearest edge
/// bin so the mass stays 1.
pub fn psd_histogram(radii: &[f64], bins: usize) -> Result<PsdHistogram, AnalysisError> {
    if radii.is_empty() {
        return Err(AnalysisError::EmptySample);
    }
    assert!(bins > 0, "a histogram needs at least one bin");
    let mean: f64 = radii.iter().sum::<f64>() / radii.len() as f64;
    let bin_width = PSD_MAX_RATIO / bins as f64;
    let mut counts = vec![0u64; bins];
    for &r in radii {
        let ratio = r / mean;
        let b = ((ratio / bin_width) as usize).min(bins - 1);
        counts[b] += 1;
    }
    let norm = 1.0 / (radii.len() as f64 * bin_width);
    let density = counts.iter().map(|&k| k as f64 * norm).collect();
    Ok(PsdHistogram { bins, bin_width, density, mean_radius: mean })
}

/// Shape anisotropy of the thresholded set around `center` (physical
/// coordinates): the particle's largest half-extent along any face
/// diagonal divided by its largest half-extent along any grid axis. A
/// ball scores ~1; a cube's face diagonal exceeds its edge by sqrt(2).
/// Distances use the minimum image on periodic grids.
pub fn anisotropy_measure(
    grid: &Grid,
    c: &[f64],
    threshold: f64,
    center: &[f64],
) -> Result<f64, AnalysisError> {
    if !(threshold > 0.0 && threshold < 0.25) {
        return Err(AnalysisError::BadThreshold(threshold));
    }
    let d = grid.ndim();
    if d < 2 {
        return Err(AnalysisError::NoDiagonal);
    }
    assert_eq!(center.len(), d, "center must give one coordinate per active axis");
    let dims = grid.dims();
    let h = grid.spacing();
    let periodic = grid.bc == crate::grid::BoundaryCondition::Periodic;

    let mut axis_extent = 0.0f64;
    let mut diag_extent = 0.0f64;
    let mut any = false;
    for i in 0..grid.ncells() {
        if c[i] < threshold {
            continue;
        }
        any = true;
        let mut dx = [0.0f64; 3];
        let mut rest = i;
        for a in 0..d {
            let pos = rest % dims[a];
            rest /= dims[a];
            let mut delta = (pos as f64 + 0.5) * h[a] - center[a];
            if periodic {
                let l = dims[a] as f64 * h[a];
                delta -= (delta / l).round() * l;
            }
            dx[a] = delta;
        }
        for a in 0..d {
            axis_extent = axis_extent.max(dx[a].abs());
            for b in (a + 1)..d {
                let proj = (dx[a].abs() + dx[b].abs()) / std::f64::consts::SQRT_2;
                diag_extent = diag_extent.max(proj);
            }
        }
    }
    if !any {
        return Err(AnalysisError::NoParticles(threshold));
    }
    Ok(diag_extent / axis_extent)
}
