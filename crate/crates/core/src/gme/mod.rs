//! Guided-mode expansion of the patterned slab on the supercell reciprocal lattice.
//!
//! The problem is solved at the Γ point of the supercell. Because both the ring
//! pattern and the square supercell are symmetric under x → −x and y → −y, the
//! matrix block-diagonalizes into four mirror sectors that are diagonalized
//! independently. Radiative losses follow from first-order coupling of each
//! mode to the radiative states of the effective slab at every reciprocal
//! vector inside the light cone.

mod lattice;
mod radiation;
mod system;

use faer::Mat;
use num_complex::Complex64;

pub use lattice::{ReciprocalLattice, Sector};
pub use system::GmeSystem;

use crate::error::GmeError;
use crate::geometry::CavityGeometry;

#[derive(Debug, Clone, PartialEq)]
pub struct GmeConfig {
    /// Reciprocal-space cutoff, units of 2π/a.
    pub gmax: f64,
    pub num_guided_bands: usize,
    /// How many of the lowest eigenpairs [`solve_modes`] returns; `None` keeps
    /// every eigenpair up to the top of `mode_window`.
    pub num_eigenpairs: Option<usize>,
    /// Candidate interval for the cavity resonance, c/a.
    pub mode_window: (f64, f64),
    /// Mirror sectors to diagonalize.
    pub sectors: Vec<Sector>,
}

impl Default for GmeConfig {
    fn default() -> Self {
        Self {
            gmax: DEFAULT_GMAX,
            num_guided_bands: 1,
            num_eigenpairs: None,
            mode_window: (1.00, 1.20),
            sectors: Sector::ALL.to_vec(),
        }
    }
}

/// Default reciprocal cutoff, 2π/a. The cavity resonance near a/λ ≈ 1.08 sits at
/// |k| ≈ 3.2 (2π/a) on the fundamental slab band, so the cutoff must exceed that.
pub const DEFAULT_GMAX: f64 = 5.0;

impl GmeConfig {
    pub fn check(&self) -> Result<(), GmeError> {
        if !(self.gmax > 0.0) || !self.gmax.is_finite() {
            return Err(GmeError::Config(format!("gmax must be positive, got {}", self.gmax)));
        }
        if self.num_guided_bands == 0 {
            return Err(GmeError::Config("num_guided_bands must be at least 1".into()));
        }
        let (lo, hi) = self.mode_window;
        if !(lo < hi) || lo < 0.0 {
            return Err(GmeError::Config(format!("bad mode window [{lo}, {hi}]")));
        }
        if self.sectors.is_empty() {
            return Err(GmeError::Config("no mirror sectors selected".into()));
        }
        Ok(())
    }

    pub fn with_gmax(mut self, gmax: f64) -> Self {
        self.gmax = gmax;
        self
    }

    pub fn with_sectors(mut self, sectors: &[Sector]) -> Self {
        self.sectors = sectors.to_vec();
        self
    }
}

/// One radiation channel: a reciprocal vector inside the light cone.
#[derive(Debug, Clone, PartialEq)]
pub struct RadiationChannel {
    /// In-plane wavevector, 2π/a.
    pub k_parallel: [f64; 2],
    pub theta: f64,
    pub phi: f64,
    /// Upward far-field amplitude of the s (TE) and p (TM) polarizations,
    /// scaled so that |amp_s|² + |amp_p|² is the power in the channel.
    pub amp_s: Complex64,
    pub amp_p: Complex64,
}

impl RadiationChannel {
    pub fn intensity(&self) -> f64 {
        self.amp_s.norm_sqr() + self.amp_p.norm_sqr()
    }

    pub fn sin_theta(&self) -> f64 {
        self.theta.sin()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeLosses {
    /// Imaginary part of the complex frequency, c/a.
    pub loss_rate: f64,
    pub q_factor: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CavityMode {
    /// Resonance frequency, c/a.
    pub frequency: f64,
    pub sector: Sector,
    /// Real coefficients over the (G, band) basis, unit norm.
    pub eigvec: Vec<f64>,
    pub losses: Option<ModeLosses>,
    pub channels: Vec<RadiationChannel>,
    pub mode_overlap_with_ref: Option<f64>,
}

impl CavityMode {
    pub fn q_factor(&self) -> Option<f64> {
        self.losses.map(|l| l.q_factor)
    }
}

/// The assembled matrix over the (G, band) basis. Its eigenvalues are (2π f)².
pub fn assemble(g: &CavityGeometry, cfg: &GmeConfig) -> Result<Mat<f64>, GmeError> {
    Ok(GmeSystem::new(g, cfg)?.matrix())
}

/// Lowest eigenpairs over the configured sectors, ascending in frequency.
pub fn solve_modes(g: &CavityGeometry, cfg: &GmeConfig) -> Result<Vec<CavityMode>, GmeError> {
    GmeSystem::new(g, cfg)?.solve(cfg)
}

/// Fills the quality factor and radiation channels of `mode`.
pub fn compute_losses(mode: &CavityMode, g: &CavityGeometry, cfg: &GmeConfig) -> Result<CavityMode, GmeError> {
    GmeSystem::new(g, cfg)?.compute_losses(mode)
}

impl GmeSystem {
    pub fn solve(&self, cfg: &GmeConfig) -> Result<Vec<CavityMode>, GmeError> {
        let mut found = Vec::new();
        let mut solutions = Vec::new();
        for &sector in &cfg.sectors {
            let sol = self.solve_sector(sector)?;
            for (k, &lambda) in sol.eigenvalues.iter().enumerate() {
                found.push((eig_to_frequency(lambda), solutions.len(), k));
            }
            solutions.push(sol);
        }
        found.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        let keep = match cfg.num_eigenpairs {
            Some(k) => k.min(found.len()),
            None => found.iter().take_while(|f| f.0 <= cfg.mode_window.1).count(),
        };
        Ok(found[..keep]
            .iter()
            .map(|&(frequency, s, k)| CavityMode {
                frequency,
                sector: solutions[s].sector,
                eigvec: self.expand(&solutions[s], k),
                losses: None,
                channels: Vec::new(),
                mode_overlap_with_ref: None,
            })
            .collect())
    }

    /// Modes of the configured sectors with frequency inside `window`.
    pub fn modes_in_window(&self, sectors: &[Sector], window: (f64, f64)) -> Result<Vec<CavityMode>, GmeError> {
        let mut out = Vec::new();
        for &sector in sectors {
            let sol = self.solve_sector(sector)?;
            for (k, &lambda) in sol.eigenvalues.iter().enumerate() {
                let frequency = eig_to_frequency(lambda);
                if frequency >= window.0 && frequency <= window.1 {
                    out.push(CavityMode {
                        frequency,
                        sector,
                        eigvec: self.expand(&sol, k),
                        losses: None,
                        channels: Vec::new(),
                        mode_overlap_with_ref: None,
                    });
                }
            }
        }
        out.sort_by(|a, b| a.frequency.total_cmp(&b.frequency).then(a.sector.cmp(&b.sector)));
        Ok(out)
    }
}

fn eig_to_frequency(lambda: f64) -> f64 {
    lambda.max(0.0).sqrt() / (2.0 * std::f64::consts::PI)
}

/// Result of [`track_mode`].
#[derive(Debug, Clone, PartialEq)]
pub struct TrackedMode {
    pub mode: CavityMode,
    /// False when no candidate lay in the window and the global best overlap was taken.
    pub in_window: bool,
}

/// Picks the candidate with the largest overlap A = |⟨reference, eigvec⟩|² among those
/// inside `window`, falling back to all candidates when none is inside.
///
/// Overlaps equal to within 1e-9 resolve to the lower frequency.
pub fn track_mode(candidates: &[CavityMode], reference: &[f64], window: (f64, f64)) -> Result<TrackedMode, GmeError> {
    if candidates.is_empty() {
        return Err(GmeError::NoCandidates);
    }
    for c in candidates {
        if c.eigvec.len() != reference.len() {
            return Err(GmeError::BasisMismatch {
                reference: reference.len(),
                candidate: c.eigvec.len(),
            });
        }
    }
    let overlap = |c: &CavityMode| -> f64 {
        let d: f64 = c.eigvec.iter().zip(reference).map(|(a, b)| a * b).sum();
        (d * d).min(1.0)
    };
    let inside: Vec<&CavityMode> = candidates
        .iter()
        .filter(|c| c.frequency >= window.0 && c.frequency <= window.1)
        .collect();
    let in_window = !inside.is_empty();
    let pool: Vec<&CavityMode> = if in_window { inside } else { candidates.iter().collect() };
    let mut best: Option<(&CavityMode, f64)> = None;
    for &c in &pool {
        let a = overlap(c);
        best = match best {
            None => Some((c, a)),
            Some((b, ab)) => {
                if a > ab + 1e-9 || ((a - ab).abs() <= 1e-9 && c.frequency < b.frequency) {
                    Some((c, a))
                } else {
                    Some((b, ab))
                }
            }
        };
    }
    let (mode, a) = best.expect("pool is non-empty");
    let mut mode = mode.clone();
    mode.mode_overlap_with_ref = Some(a);
    Ok(TrackedMode { mode, in_window })
}

impl GmeSystem {
    /// Modes of `sector` inside `window` paired with the fraction of their in-plane
    /// core energy within `radius` (units of a) of the cavity center, ascending in frequency.
    pub fn localized_modes(
        &self,
        sector: Sector,
        window: (f64, f64),
        radius: f64,
    ) -> Result<Vec<(CavityMode, f64)>, GmeError> {
        let sol = self.solve_sector(sector)?;
        let ks: Vec<usize> = (0..sol.eigenvalues.len())
            .filter(|&k| {
                let f = eig_to_frequency(sol.eigenvalues[k]);
                f >= window.0 && f <= window.1
            })
            .collect();
        let loc = self.sector_localization(&sol, &ks, radius);
        Ok(ks
            .iter()
            .zip(loc)
            .map(|(&k, l)| {
                let mode = CavityMode {
                    frequency: eig_to_frequency(sol.eigenvalues[k]),
                    sector,
                    eigvec: self.expand(&sol, k),
                    losses: None,
                    channels: Vec::new(),
                    mode_overlap_with_ref: None,
                };
                (mode, l)
            })
            .collect())
    }

    /// The entry of [`Self::localized_modes`] with the largest localization.
    pub fn most_localized(
        &self,
        sector: Sector,
        window: (f64, f64),
        radius: f64,
    ) -> Result<Option<(CavityMode, f64)>, GmeError> {
        let mut best: Option<(CavityMode, f64)> = None;
        for (m, l) in self.localized_modes(sector, window, radius)? {
            if best.as_ref().is_none_or(|b| l > b.1) {
                best = Some((m, l));
            }
        }
        Ok(best)
    }
}

impl GmeSystem {
    /// [`track_mode`] over every eigenmode of `sectors`, without expanding each
    /// candidate onto the full basis.
    pub fn track(&self, reference: &[f64], sectors: &[Sector], window: (f64, f64)) -> Result<TrackedMode, GmeError> {
        if reference.len() != self.basis_size() {
            return Err(GmeError::BasisMismatch {
                reference: reference.len(),
                candidate: self.basis_size(),
            });
        }
        let mut solutions = Vec::new();
        let mut candidates: Vec<(f64, f64, usize, usize)> = Vec::new();
        let mut skipped = Vec::new();
        for &sector in sectors {
            let proj = self.sector_projection(sector, reference);
            if proj.iter().all(|&x| x == 0.0) {
                skipped.push(sector);
                continue;
            }
            let sol = self.solve_sector(sector)?;
            self.push_candidates(&sol, &proj, solutions.len(), &mut candidates);
            solutions.push(sol);
        }
        // Modes of skipped sectors all have A = 0; they only matter when nothing beats that.
        let best_a = candidates.iter().map(|c| c.1).fold(0.0, f64::max);
        if best_a <= 1e-9 {
            for sector in skipped {
                let sol = self.solve_sector(sector)?;
                let proj = vec![0.0; sol.combos.len()];
                self.push_candidates(&sol, &proj, solutions.len(), &mut candidates);
                solutions.push(sol);
            }
        }
        if candidates.is_empty() {
            return Err(GmeError::NoCandidates);
        }
        let inside = |c: &(f64, f64, usize, usize)| c.0 >= window.0 && c.0 <= window.1;
        let in_window = candidates.iter().any(inside);
        let mut best: Option<&(f64, f64, usize, usize)> = None;
        for c in candidates.iter().filter(|c| !in_window || inside(c)) {
            best = match best {
                None => Some(c),
                Some(b) if c.1 > b.1 + 1e-9 || ((c.1 - b.1).abs() <= 1e-9 && c.0 < b.0) => Some(c),
                keep => keep,
            };
        }
        let &(frequency, a, s, k) = best.expect("candidates are non-empty");
        let sol = &solutions[s];
        Ok(TrackedMode {
            mode: CavityMode {
                frequency,
                sector: sol.sector,
                eigvec: self.expand(sol, k),
                losses: None,
                channels: Vec::new(),
                mode_overlap_with_ref: Some(a),
            },
            in_window,
        })
    }

    fn sector_projection(&self, sector: Sector, v: &[f64]) -> Vec<f64> {
        self.vector_combos(sector)
            .iter()
            .map(|c| c.members.iter().map(|&(mu, u)| u * v[mu]).sum())
            .collect()
    }

    fn push_candidates(
        &self,
        sol: &system::SectorSolution,
        proj: &[f64],
        index: usize,
        out: &mut Vec<(f64, f64, usize, usize)>,
    ) {
        for (k, &lambda) in sol.eigenvalues.iter().enumerate() {
            let d: f64 = (0..proj.len()).map(|a| sol.vectors[(a, k)] * proj[a]).sum();
            out.push((eig_to_frequency(lambda), (d * d).min(1.0), index, k));
        }
    }

    /// The fundamental cavity mode: the x-polarized dipole mode in `window` most
    /// concentrated on the central disk and first ring of `g`, with losses filled.
    pub fn fundamental_mode(&self, g: &CavityGeometry, window: (f64, f64)) -> Result<CavityMode, GmeError> {
        let radius = g.disk_radius_r0 + g.ring_widths.first().copied().unwrap_or(0.0);
        let (mode, _) = self
            .most_localized(Sector::X_DIPOLE, window, radius)?
            .ok_or(GmeError::NoCandidates)?;
        self.compute_losses(&mode)
    }
}

impl GmeSystem {
    /// The fundamental mode and its y-polarized partner, both with losses filled.
    pub fn dipole_pair(&self, g: &CavityGeometry, window: (f64, f64)) -> Result<(CavityMode, CavityMode), GmeError> {
        let x = self.fundamental_mode(g, window)?;
        let radius = g.disk_radius_r0 + g.ring_widths.first().copied().unwrap_or(0.0);
        let (y, _) = self
            .most_localized(Sector::Y_DIPOLE, window, radius)?
            .ok_or(GmeError::NoCandidates)?;
        Ok((x, self.compute_losses(&y)?))
    }
}

/// [`GmeSystem::fundamental_mode`] for a fresh system built from `g` and `cfg`.
pub fn fundamental_mode(g: &CavityGeometry, cfg: &GmeConfig) -> Result<CavityMode, GmeError> {
    GmeSystem::new(g, cfg)?.fundamental_mode(g, cfg.mode_window)
}
