//! Assembly of the guided-mode eigenproblem for one geometry.
//!
//! The magnetic field is expanded in guided modes of the effective slab at
//! every supercell reciprocal vector. With E-normalized basis functions the
//! matrix reads
//!
//! ```text
//! H_μν = ω_μ² δ_μν + ω_μ ω_ν ε_eff² [η(G_μ, G_ν) − δ_{G_μ G_ν}/ε_eff] ∫_core E_μ*·E_ν dz
//! ```
//!
//! where η is the inverse of the plane-wave permittivity matrix of the patterned
//! layer and the eigenvalues are ω² (angular units, c = a = 1).

use std::f64::consts::PI;

use faer::linalg::solvers::DenseSolveCore;
use faer::{Mat, Side};

use super::lattice::{sector_combos, Combo, ReciprocalLattice, Sector};
use super::GmeConfig;
use crate::error::GmeError;
use crate::geometry::{average_permittivity, permittivity_fourier_radial, validate, CavityGeometry};
use crate::slab::{modes_at, CoreProfile, Polarization, SlabMode};

const TWO_PI: f64 = 2.0 * PI;

#[derive(Debug, Clone)]
pub(crate) struct BasisEntry {
    pub point: usize,
    pub mode: SlabMode,
    /// In-plane polarization unit vector: ê⊥ = ẑ×Ĝ for TE, Ĝ for TM.
    pub dir: [f64; 2],
    /// Angular frequency of the basis mode, rad/a.
    pub omega: f64,
    pub shell: usize,
}

/// Inverse of the plane-wave permittivity matrix, stored as its four mirror-sector blocks.
#[derive(Debug, Clone)]
pub(crate) struct InverseDielectric {
    blocks: Vec<Mat<f64>>,
    /// For each lattice point and scalar sector: (combo index, coefficient).
    slots: Vec<[(u32, f64); 4]>,
}

impl InverseDielectric {
    fn new(lattice: &ReciprocalLattice, geometry: &CavityGeometry) -> Result<Self, GmeError> {
        let max_sq = lattice
            .points
            .iter()
            .map(|&[m, n]| (m as i64).pow(2) + (n as i64).pow(2))
            .max()
            .unwrap_or(0);
        // |G_i - G_j|² ≤ 4 max|G|²
        let k_unit = TWO_PI / geometry.supercell_side_l;
        let eps_by_sq: Vec<f64> = (0..=4 * max_sq)
            .map(|d2| permittivity_fourier_radial(geometry, k_unit * (d2 as f64).sqrt()))
            .collect();
        let eps = |i: usize, j: usize| {
            let [a, b] = lattice.points[i];
            let [c, d] = lattice.points[j];
            let d2 = ((a - c) as i64).pow(2) + ((b - d) as i64).pow(2);
            eps_by_sq[d2 as usize]
        };

        let mut slots = vec![[(u32::MAX, 0.0); 4]; lattice.len()];
        let mut blocks = Vec::with_capacity(4);
        for sector in Sector::ALL {
            let combos = sector_combos(lattice, |_| true, sector, |_| 1.0);
            for (a, combo) in combos.iter().enumerate() {
                for &(p, c) in &combo.members {
                    slots[p][sector.index()] = (a as u32, c);
                }
            }
            let block = projected_matrix(&combos, &combos, &eps);
            let llt = block
                .llt(Side::Lower)
                .map_err(|_| GmeError::DielectricMatrix)?;
            blocks.push(llt.inverse());
        }
        Ok(Self { blocks, slots })
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (si, sj) = (&self.slots[i], &self.slots[j]);
        let mut acc = 0.0;
        for s in 0..4 {
            let (a, ca) = si[s];
            let (b, cb) = sj[s];
            if a != u32::MAX && b != u32::MAX {
                acc += ca * cb * self.blocks[s][(a as usize, b as usize)];
            }
        }
        acc
    }
}

/// ⟨α|A|β⟩ for symmetry-adapted combos, given matrix elements of an operator
/// that commutes with the mirrors. Fills the lower triangle and mirrors it.
fn projected_matrix(rows: &[Combo], cols: &[Combo], element: impl Fn(usize, usize) -> f64) -> Mat<f64> {
    let n = rows.len();
    debug_assert_eq!(n, cols.len());
    let mut out = Mat::<f64>::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let beta = &cols[j];
            let v: f64 = rows[i]
                .members
                .iter()
                .map(|&(mu, u)| u * element(mu, beta.rep))
                .sum::<f64>()
                * beta.rep_scale;
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    out
}

/// Eigen-decomposition of one mirror sector.
#[derive(Debug, Clone)]
pub(crate) struct SectorSolution {
    pub sector: Sector,
    pub combos: Vec<Combo>,
    /// Eigenvalues ω² (rad/a)², ascending.
    pub eigenvalues: Vec<f64>,
    pub vectors: Mat<f64>,
}

/// Prepared eigenproblem for one geometry and solver configuration.
#[derive(Debug, Clone)]
pub struct GmeSystem {
    pub(crate) lattice: ReciprocalLattice,
    pub(crate) eps_eff: f64,
    pub(crate) thickness: f64,
    pub(crate) entries: Vec<BasisEntry>,
    point_offsets: Vec<usize>,
    pub(crate) eta: InverseDielectric,
    shell_profiles: Vec<CoreProfile>,
    /// Core overlaps between shells: (∫ a a dz, ∫ b b dz), row-major.
    shell_overlaps: Vec<(f64, f64)>,
}

impl GmeSystem {
    pub fn new(geometry: &CavityGeometry, cfg: &GmeConfig) -> Result<Self, GmeError> {
        let report = validate(geometry);
        if !report.is_ok() {
            return Err(GmeError::Invalid(report));
        }
        cfg.check()?;
        let lattice = ReciprocalLattice::new(cfg.gmax, geometry.supercell_side_l);
        let eps_eff = average_permittivity(geometry);
        let thickness = geometry.slab_thickness;

        let mut entries = Vec::new();
        let mut point_offsets = Vec::with_capacity(lattice.len() + 1);
        let mut shell_keys: Vec<(i64, usize)> = Vec::new();
        let mut shell_profiles = Vec::new();
        let mut shell_modes: std::collections::HashMap<i64, Vec<SlabMode>> = Default::default();
        for p in 0..lattice.len() {
            point_offsets.push(entries.len());
            let sq = lattice.norm_sq_index(p);
            let modes = shell_modes
                .entry(sq)
                .or_insert_with(|| modes_at(lattice.magnitude(p), eps_eff, thickness, cfg.num_guided_bands))
                .clone();
            let v = lattice.vector(p);
            let mag = lattice.magnitude(p);
            let ghat = if mag > 0.0 { [v[0] / mag, v[1] / mag] } else { [1.0, 0.0] };
            for (slot, mode) in modes.into_iter().enumerate() {
                let key = (sq, slot);
                let shell = match shell_keys.iter().rposition(|k| *k == key) {
                    Some(s) => s,
                    None => {
                        shell_keys.push(key);
                        shell_profiles.push(mode.core_profile());
                        shell_keys.len() - 1
                    }
                };
                let dir = match mode.polarization {
                    Polarization::Te => [-ghat[1], ghat[0]],
                    Polarization::Tm => ghat,
                };
                entries.push(BasisEntry {
                    point: p,
                    omega: TWO_PI * mode.omega,
                    mode,
                    dir,
                    shell,
                });
            }
        }
        point_offsets.push(entries.len());
        if entries.is_empty() {
            return Err(GmeError::EmptyBasis { gmax: cfg.gmax });
        }
        if let Some(k) = cfg.num_eigenpairs {
            if k > entries.len() {
                return Err(GmeError::Config(format!(
                    "num_eigenpairs {k} exceeds basis size {}",
                    entries.len()
                )));
            }
        }

        let half = 0.5 * thickness;
        let s = shell_profiles.len();
        let mut shell_overlaps = vec![(0.0, 0.0); s * s];
        for i in 0..s {
            for j in 0..=i {
                let v = shell_profiles[i].overlap(&shell_profiles[j], half);
                shell_overlaps[i * s + j] = v;
                shell_overlaps[j * s + i] = v;
            }
        }

        let eta = InverseDielectric::new(&lattice, geometry)?;
        Ok(Self {
            lattice,
            eps_eff,
            thickness,
            entries,
            point_offsets,
            eta,
            shell_profiles,
            shell_overlaps,
        })
    }

    pub fn basis_size(&self) -> usize {
        self.entries.len()
    }

    pub fn lattice(&self) -> &ReciprocalLattice {
        &self.lattice
    }

    pub fn eps_eff(&self) -> f64 {
        self.eps_eff
    }

    /// Reciprocal vector (2π/a) and slab mode of basis function `i`.
    pub fn basis_function(&self, i: usize) -> ([f64; 2], &SlabMode) {
        let e = &self.entries[i];
        (self.lattice.vector(e.point), &e.mode)
    }

    pub(crate) fn num_shells(&self) -> usize {
        self.shell_profiles.len()
    }

    pub(crate) fn shell_profile(&self, shell: usize) -> &CoreProfile {
        &self.shell_profiles[shell]
    }

    pub(crate) fn delta_eta(&self, i: usize, j: usize) -> f64 {
        let base = self.eta.get(i, j);
        if i == j {
            base - 1.0 / self.eps_eff
        } else {
            base
        }
    }

    /// Matrix element H_μν, angular units.
    pub(crate) fn element(&self, mu: usize, nu: usize) -> f64 {
        let a = &self.entries[mu];
        let b = &self.entries[nu];
        let s = self.shell_profiles.len();
        let (ia, ib) = self.shell_overlaps[a.shell * s + b.shell];
        let c = (a.dir[0] * b.dir[0] + a.dir[1] * b.dir[1]) * ia + ib;
        let mut h = a.omega * b.omega * self.eps_eff * self.eps_eff * self.delta_eta(a.point, b.point) * c;
        if mu == nu {
            h += a.omega * a.omega;
        }
        h
    }

    /// The full symmetric matrix over the (G, band) basis, angular units.
    pub fn matrix(&self) -> Mat<f64> {
        let n = self.entries.len();
        let mut out = Mat::<f64>::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let v = self.element(i, j);
                out[(i, j)] = v;
                out[(j, i)] = v;
            }
        }
        out
    }

    pub(crate) fn vector_combos(&self, sector: Sector) -> Vec<Combo> {
        let max_bands = (0..self.lattice.len())
            .map(|p| self.point_offsets[p + 1] - self.point_offsets[p])
            .max()
            .unwrap_or(0);
        let mut combos = Vec::new();
        for slot in 0..max_bands {
            let has = |p: usize| self.point_offsets[p + 1] - self.point_offsets[p] > slot;
            let sign = |p: usize| self.entries[self.point_offsets[p] + slot].mode.polarization.mirror_sign();
            for mut c in sector_combos(&self.lattice, has, sector, sign) {
                for m in &mut c.members {
                    m.0 = self.point_offsets[m.0] + slot;
                }
                c.rep = self.point_offsets[c.rep] + slot;
                combos.push(c);
            }
        }
        combos
    }

    pub(crate) fn solve_sector(&self, sector: Sector) -> Result<SectorSolution, GmeError> {
        let combos = self.vector_combos(sector);
        if combos.is_empty() {
            return Ok(SectorSolution {
                sector,
                combos,
                eigenvalues: Vec::new(),
                vectors: Mat::zeros(0, 0),
            });
        }
        let h = projected_matrix(&combos, &combos, |mu, nu| self.element(mu, nu));
        let eig = h
            .self_adjoint_eigen(Side::Lower)
            .map_err(|e| GmeError::Eigensolver(format!("{e:?}")))?;
        let s = eig.S();
        let eigenvalues: Vec<f64> = (0..combos.len()).map(|i| s[i]).collect();
        let vectors = eig.U().to_owned();
        Ok(SectorSolution {
            sector,
            combos,
            eigenvalues,
            vectors,
        })
    }

    /// Expands eigenvector `k` of a sector solution onto the full basis.
    pub(crate) fn expand(&self, sol: &SectorSolution, k: usize) -> Vec<f64> {
        let mut v = vec![0.0; self.entries.len()];
        for (a, combo) in sol.combos.iter().enumerate() {
            let c = sol.vectors[(a, k)];
            for &(mu, u) in &combo.members {
                v[mu] += c * u;
            }
        }
        // Deterministic sign: largest-magnitude coefficient positive.
        let pivot = v
            .iter()
            .copied()
            .fold(0.0f64, |acc, x| if x.abs() > acc.abs() { x } else { acc });
        if pivot < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        v
    }

    /// Matrix element of the projector onto the disk of `radius` for the in-plane
    /// core electric energy, and the same for the whole cell.
    fn disk_weights(&self, radius: f64) -> impl Fn(usize, usize) -> (f64, f64) + '_ {
        let area = self.lattice.supercell_side * self.lattice.supercell_side;
        let k_unit = TWO_PI / self.lattice.supercell_side;
        let max_sq = (0..self.lattice.len())
            .map(|p| self.lattice.norm_sq_index(p))
            .max()
            .unwrap_or(0);
        let disk: Vec<f64> = (0..=4 * max_sq)
            .map(|d2| crate::geometry::annulus_transform(0.0, radius, k_unit * (d2 as f64).sqrt(), area))
            .collect();
        let s = self.shell_profiles.len();
        move |i, j| {
            let a = &self.entries[i];
            let b = &self.entries[j];
            let (ia, _) = self.shell_overlaps[a.shell * s + b.shell];
            let w = (a.dir[0] * b.dir[0] + a.dir[1] * b.dir[1]) * ia;
            let [m1, n1] = self.lattice.points[a.point];
            let [m2, n2] = self.lattice.points[b.point];
            let d2 = ((m1 - m2) as i64).pow(2) + ((n1 - n2) as i64).pow(2);
            (w * disk[d2 as usize], if d2 == 0 { w } else { 0.0 })
        }
    }

    /// Fraction of the in-plane core electric energy of `eigvec` within `radius` (units of a).
    pub fn localization(&self, eigvec: &[f64], radius: f64) -> f64 {
        let weights = self.disk_weights(radius);
        let nonzero: Vec<usize> = (0..eigvec.len()).filter(|&i| eigvec[i] != 0.0).collect();
        let (mut inside, mut total) = (0.0, 0.0);
        for &i in &nonzero {
            for &j in &nonzero {
                let (p, t) = weights(i, j);
                inside += eigvec[i] * eigvec[j] * p;
                total += eigvec[i] * eigvec[j] * t;
            }
        }
        if total > 0.0 {
            inside / total
        } else {
            0.0
        }
    }

    /// [`Self::localization`] for several eigenvectors of one sector at once.
    pub(crate) fn sector_localization(&self, sol: &SectorSolution, ks: &[usize], radius: f64) -> Vec<f64> {
        if ks.is_empty() {
            return Vec::new();
        }
        let weights = self.disk_weights(radius);
        let inside = projected_matrix(&sol.combos, &sol.combos, |i, j| weights(i, j).0);
        let total = projected_matrix(&sol.combos, &sol.combos, |i, j| weights(i, j).1);
        let m = sol.combos.len();
        let v = Mat::<f64>::from_fn(m, ks.len(), |r, c| sol.vectors[(r, ks[c])]);
        let pv = &inside * &v;
        let tv = &total * &v;
        (0..ks.len())
            .map(|c| {
                let (mut num, mut den) = (0.0, 0.0);
                for r in 0..m {
                    num += v[(r, c)] * pv[(r, c)];
                    den += v[(r, c)] * tv[(r, c)];
                }
                if den > 0.0 {
                    num / den
                } else {
                    0.0
                }
            })
            .collect()
    }
}
