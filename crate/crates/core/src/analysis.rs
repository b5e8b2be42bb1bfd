//! Far-field maps, collection efficiency, and fabrication-tolerance sweeps.

use faer::linalg::solvers::Solve;
use faer::Mat;
use num_complex::Complex64;

use crate::error::{AnalysisError, GmeError};
use crate::geometry::{perturb, CavityGeometry, ParamId};
use crate::gme::{CavityMode, GmeConfig, GmeSystem, RadiationChannel};
use crate::objective::parallel_map;

pub const DEFAULT_RESOLUTION: usize = 201;
pub const REFERENCE_NA: f64 = 0.68;
pub const DEFAULT_DELTAS_NM: [f64; 7] = [-6.0, -4.0, -2.0, 0.0, 2.0, 4.0, 6.0];
pub const INTERPOLATION_METHOD: &str = "thin-plate-spline";

/// Channel position in the (kx/k0, ky/k0) plane.
fn direction(c: &RadiationChannel) -> [f64; 2] {
    let s = c.theta.sin();
    [s * c.phi.cos(), s * c.phi.sin()]
}

fn total_power(channels: &[RadiationChannel]) -> f64 {
    channels.iter().map(|c| c.intensity()).sum()
}

/// Thin-plate spline through the channel intensities with an affine tail.
#[derive(Debug, Clone)]
pub struct FarFieldInterpolant {
    nodes: Vec<[f64; 2]>,
    weights: Vec<f64>,
    affine: [f64; 3],
}

fn tps(r2: f64) -> f64 {
    if r2 > 0.0 {
        0.5 * r2 * r2.ln()
    } else {
        0.0
    }
}

impl FarFieldInterpolant {
    pub fn new(channels: &[RadiationChannel]) -> Result<Self, AnalysisError> {
        let n = channels.len();
        if n < 3 {
            return Err(AnalysisError::TooFewChannels(n));
        }
        let nodes: Vec<[f64; 2]> = channels.iter().map(direction).collect();
        let p0 = nodes[0];
        let spread = nodes
            .iter()
            .flat_map(|a| nodes.iter().map(move |b| (a, b)))
            .map(|(a, b)| ((a[0] - p0[0]) * (b[1] - p0[1]) - (a[1] - p0[1]) * (b[0] - p0[0])).abs())
            .fold(0.0, f64::max);
        if spread <= 1e-14 {
            return Err(AnalysisError::Degenerate);
        }
        let m = n + 3;
        let mut a = Mat::<f64>::zeros(m, m);
        let mut rhs = Mat::<f64>::zeros(m, 1);
        for i in 0..n {
            for j in 0..n {
                let dx = nodes[i][0] - nodes[j][0];
                let dy = nodes[i][1] - nodes[j][1];
                a[(i, j)] = tps(dx * dx + dy * dy);
            }
            let row = [1.0, nodes[i][0], nodes[i][1]];
            for (k, &v) in row.iter().enumerate() {
                a[(i, n + k)] = v;
                a[(n + k, i)] = v;
            }
            rhs[(i, 0)] = channels[i].intensity();
        }
        let sol = a.partial_piv_lu().solve(&rhs);
        if (0..m).any(|i| !sol[(i, 0)].is_finite()) {
            return Err(AnalysisError::Degenerate);
        }
        Ok(Self {
            weights: (0..n).map(|i| sol[(i, 0)]).collect(),
            affine: [sol[(n, 0)], sol[(n + 1, 0)], sol[(n + 2, 0)]],
            nodes,
        })
    }

    /// Interpolated intensity at (kx/k0, ky/k0).
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        let mut v = self.affine[0] + self.affine[1] * x + self.affine[2] * y;
        for (p, w) in self.nodes.iter().zip(&self.weights) {
            let dx = x - p[0];
            let dy = y - p[1];
            v += w * tps(dx * dx + dy * dy);
        }
        v
    }
}

/// Peak-normalized intensity on a square grid over (kx/k0, ky/k0) ∈ [−1, 1]².
#[derive(Debug, Clone, PartialEq)]
pub struct FarFieldGrid {
    pub resolution: usize,
    /// Row-major, row index along ky; `None` outside the unit disk.
    pub values: Vec<Option<f64>>,
    /// Interpolated value that was mapped to 1.
    pub peak: f64,
}

impl FarFieldGrid {
    pub fn coordinate(&self, i: usize) -> f64 {
        grid_coordinate(i, self.resolution)
    }

    pub fn get(&self, ix: usize, iy: usize) -> Option<f64> {
        self.values[iy * self.resolution + ix]
    }
}

fn grid_coordinate(i: usize, resolution: usize) -> f64 {
    if resolution == 1 {
        0.0
    } else {
        -1.0 + 2.0 * i as f64 / (resolution - 1) as f64
    }
}

pub fn interpolate_farfield(channels: &[RadiationChannel], resolution: usize) -> Result<FarFieldGrid, AnalysisError> {
    let interp = FarFieldInterpolant::new(channels)?;
    if resolution == 0 {
        return Err(AnalysisError::TooFewChannels(0));
    }
    let mut raw = vec![None; resolution * resolution];
    for iy in 0..resolution {
        let y = grid_coordinate(iy, resolution);
        for ix in 0..resolution {
            let x = grid_coordinate(ix, resolution);
            if x * x + y * y <= 1.0 {
                raw[iy * resolution + ix] = Some(interp.eval(x, y).max(0.0));
            }
        }
    }
    let peak = raw.iter().flatten().copied().fold(0.0, f64::max);
    if !(peak > 0.0) {
        return Err(AnalysisError::ZeroPower);
    }
    let values = raw.into_iter().map(|v| v.map(|x| (x / peak).min(1.0))).collect();
    Ok(FarFieldGrid {
        resolution,
        values,
        peak,
    })
}

/// Relative L2 difference between a grid and its 90° rotation, over cells
/// present in both.
pub fn rotation_asymmetry(grid: &FarFieldGrid) -> f64 {
    let r = grid.resolution;
    let (mut num, mut den) = (0.0, 0.0);
    for iy in 0..r {
        for ix in 0..r {
            // (x, y) → (−y, x)
            if let (Some(a), Some(b)) = (grid.get(ix, iy), grid.get(r - 1 - iy, ix)) {
                num += (a - b) * (a - b);
                den += a * a;
            }
        }
    }
    if den > 0.0 {
        (num / den).sqrt()
    } else {
        0.0
    }
}

/// Fraction of the upward power in channels with sinθ ≤ na.
pub fn collection_efficiency(channels: &[RadiationChannel], na: f64) -> Result<f64, AnalysisError> {
    if !(0.0..=1.0).contains(&na) {
        return Err(AnalysisError::NumericalAperture(na));
    }
    let total = total_power(channels);
    if !(total > 0.0) {
        return Err(AnalysisError::ZeroPower);
    }
    let inside: f64 = channels
        .iter()
        .filter(|c| c.sin_theta() <= na)
        .map(|c| c.intensity())
        .sum();
    Ok(inside / total)
}

pub fn collection_curve(channels: &[RadiationChannel], na_list: &[f64]) -> Result<Vec<(f64, f64)>, AnalysisError> {
    if na_list.windows(2).any(|w| w[1] < w[0]) {
        return Err(AnalysisError::Unsorted);
    }
    na_list
        .iter()
        .map(|&na| collection_efficiency(channels, na).map(|e| (na, e)))
        .collect()
}

/// Channels of two modes merged by wavevector, with intensities added: the
/// emission of an unpolarized excitation of a degenerate pair.
pub fn incoherent_sum(a: &[RadiationChannel], b: &[RadiationChannel]) -> Vec<RadiationChannel> {
    let key = |c: &RadiationChannel| (c.k_parallel[0].to_bits(), c.k_parallel[1].to_bits());
    let mut out: Vec<RadiationChannel> = a.to_vec();
    for cb in b {
        match out.iter_mut().find(|c| key(c) == key(cb)) {
            Some(c) => {
                c.amp_s = Complex64::new((c.amp_s.norm_sqr() + cb.amp_s.norm_sqr()).sqrt(), 0.0);
                c.amp_p = Complex64::new((c.amp_p.norm_sqr() + cb.amp_p.norm_sqr()).sqrt(), 0.0);
            }
            None => out.push(cb.clone()),
        }
    }
    for c in out.iter_mut() {
        if !b.iter().any(|cb| key(cb) == key(c)) {
            c.amp_s = Complex64::new(c.amp_s.norm(), 0.0);
            c.amp_p = Complex64::new(c.amp_p.norm(), 0.0);
        }
    }
    out
}

/// Values of one tolerance cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToleranceValues {
    pub frequency: f64,
    pub q_factor: f64,
    pub q_normalized: f64,
    pub collection_efficiency: f64,
    pub overlap_a: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToleranceCell {
    pub param: ParamId,
    pub delta_nm: f64,
    /// Error message when the cell failed.
    pub result: Result<ToleranceValues, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToleranceReport {
    pub na: f64,
    pub baseline: ToleranceValues,
    pub cells: Vec<ToleranceCell>,
}

impl ToleranceReport {
    pub fn cells_for(&self, param: ParamId) -> impl Iterator<Item = &ToleranceCell> {
        self.cells.iter().filter(move |c| c.param == param)
    }
}

fn solve_tracked(g: &CavityGeometry, cfg: &GmeConfig, reference: &[f64]) -> Result<CavityMode, GmeError> {
    let system = GmeSystem::new(g, cfg)?;
    let tracked = system.track(reference, &cfg.sectors, cfg.mode_window)?;
    system.compute_losses(&tracked.mode)
}

/// Single-parameter sweep around `g`. Each cell tracks the mode of the unperturbed
/// design; failures are recorded per cell.
pub fn tolerance_sweep(
    g: &CavityGeometry,
    params: &[ParamId],
    deltas_nm: &[f64],
    cfg: &GmeConfig,
    na: f64,
    threads: usize,
) -> Result<ToleranceReport, AnalysisError> {
    if !(0.0..=1.0).contains(&na) {
        return Err(AnalysisError::NumericalAperture(na));
    }
    let reference = GmeSystem::new(g, cfg)?.fundamental_mode(g, cfg.mode_window)?.eigvec;
    let base_mode = solve_tracked(g, cfg, &reference)?;
    let base_q = base_mode.q_factor().unwrap_or(f64::INFINITY);
    let values = |m: &CavityMode| -> Result<ToleranceValues, AnalysisError> {
        let q = m.q_factor().unwrap_or(f64::INFINITY);
        Ok(ToleranceValues {
            frequency: m.frequency,
            q_factor: q,
            q_normalized: q / base_q,
            collection_efficiency: collection_efficiency(&m.channels, na)?,
            overlap_a: m.mode_overlap_with_ref.unwrap_or(1.0),
        })
    };
    let baseline = values(&base_mode)?;
    let jobs: Vec<(ParamId, f64)> = params
        .iter()
        .flat_map(|&p| deltas_nm.iter().map(move |&d| (p, d)))
        .collect();
    let cells = parallel_map(&jobs, threads, |&(param, delta_nm)| {
        let result = perturb(g, param, delta_nm)
            .map_err(|e| e.to_string())
            .and_then(|pg| solve_tracked(&pg, cfg, &reference).map_err(|e| e.to_string()))
            .and_then(|m| values(&m).map_err(|e| e.to_string()));
        ToleranceCell {
            param,
            delta_nm,
            result,
        }
    });
    Ok(ToleranceReport { na, baseline, cells })
}

/// Sample Pearson correlation; `None` when either series is constant.
pub fn correlation(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len().min(y.len());
    if n < 2 {
        return None;
    }
    let mx = x[..n].iter().sum::<f64>() / n as f64;
    let my = y[..n].iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for i in 0..n {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx).powi(2);
        syy += (y[i] - my).powi(2);
    }
    (sxx > 0.0 && syy > 0.0).then(|| sxy / (sxx * syy).sqrt())
}
