//! Parametric ring-cavity geometry.
//!
//! A cavity is a dielectric slab patterned with `N` concentric etched annuli
//! around a central slab-material disk, centered in a square supercell. All
//! lengths are stored in units of the length unit `a`; `unit_length_a` carries
//! the physical scale in meters.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;

use crate::error::{GeometryError, ParseError};

/// Largest |delta| accepted by [`perturb`] unless a caller passes its own limit.
pub const DEFAULT_MAX_PERTURBATION_NM: f64 = 10.0;

#[derive(Debug, Clone, PartialEq)]
pub struct CavityGeometry {
    /// Physical size of the length unit, meters.
    pub unit_length_a: f64,
    pub slab_thickness: f64,
    pub eps_slab: f64,
    pub eps_etch: f64,
    pub disk_radius_r0: f64,
    pub ring_widths: Vec<f64>,
    /// Slab-material separation between consecutive etched rings.
    pub ring_gaps: Vec<f64>,
    pub supercell_side_l: f64,
}

/// One etched annulus, radii in units of `a`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Annulus {
    pub inner: f64,
    pub outer: f64,
}

impl CavityGeometry {
    /// Uniform slab without any etched rings.
    pub fn unpatterned(eps_slab: f64, slab_thickness: f64, supercell_side_l: f64) -> Self {
        Self {
            unit_length_a: 1e-6,
            slab_thickness,
            eps_slab,
            eps_etch: 1.0,
            disk_radius_r0: 0.0,
            ring_widths: Vec::new(),
            ring_gaps: Vec::new(),
            supercell_side_l,
        }
    }

    pub fn num_rings(&self) -> usize {
        self.ring_widths.len()
    }

    pub fn annuli(&self) -> Vec<Annulus> {
        let mut out = Vec::with_capacity(self.ring_widths.len());
        let mut inner = self.disk_radius_r0;
        for (i, &w) in self.ring_widths.iter().enumerate() {
            let outer = inner + w;
            out.push(Annulus { inner, outer });
            if let Some(&gap) = self.ring_gaps.get(i) {
                inner = outer + gap;
            }
        }
        out
    }

    /// Outer radius of the outermost ring (or the disk radius when there are no rings).
    pub fn footprint_radius(&self) -> f64 {
        self.disk_radius_r0 + self.ring_widths.iter().sum::<f64>() + self.ring_gaps.iter().sum::<f64>()
    }

    pub fn etched_area(&self) -> f64 {
        self.annuli()
            .iter()
            .map(|r| PI * (r.outer * r.outer - r.inner * r.inner))
            .sum()
    }

    /// Converts a length in nanometers to units of `a`.
    pub fn nm_to_a(&self, nm: f64) -> f64 {
        nm * 1e-9 / self.unit_length_a
    }

    pub fn a_to_nm(&self, len: f64) -> f64 {
        len * self.unit_length_a * 1e9
    }

    /// Copy with the physical length unit rescaled; dimensionless fields are untouched.
    pub fn with_unit_length(&self, unit_length_a: f64) -> Self {
        Self {
            unit_length_a,
            ..self.clone()
        }
    }

    /// Permittivity at a point (x, y) measured from the supercell center, units of `a`.
    pub fn permittivity_at(&self, x: f64, y: f64) -> f64 {
        let r2 = x * x + y * y;
        for ring in self.annuli() {
            if r2 >= ring.inner * ring.inner && r2 < ring.outer * ring.outer {
                return self.eps_etch;
            }
        }
        self.eps_slab
    }

    pub fn to_document(&self) -> String {
        let list = |v: &[f64]| {
            v.iter()
                .map(|x| format_sig12(*x))
                .collect::<Vec<_>>()
                .join(", ")
        };
        format!(
            "unit_length_a_m = {}\nslab_thickness_a = {}\neps_slab = {}\neps_etch = {}\n\
             disk_radius_a = {}\nring_widths_a = [{}]\nring_gaps_a = [{}]\nsupercell_side_a = {}\n",
            format_sig12(self.unit_length_a),
            format_sig12(self.slab_thickness),
            format_sig12(self.eps_slab),
            format_sig12(self.eps_etch),
            format_sig12(self.disk_radius_r0),
            list(&self.ring_widths),
            list(&self.ring_gaps),
            format_sig12(self.supercell_side_l),
        )
    }
}

/// Formats a float with 12 significant digits in scientific notation.
pub fn format_sig12(x: f64) -> String {
    format!("{x:.11e}")
}

impl FromStr for CavityGeometry {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut unit = None;
        let mut thickness = None;
        let mut eps_slab = None;
        let mut eps_etch = None;
        let mut r0 = None;
        let mut widths = None;
        let mut gaps = None;
        let mut side = None;
        for (lineno, raw) in s.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ParseError::Syntax {
                line: lineno + 1,
                message: format!("expected `key = value`, got `{line}`"),
            })?;
            let key = key.trim();
            let value = value.trim();
            let scalar = |v: &str| parse_f64(v, lineno + 1);
            match key {
                "unit_length_a_m" => unit = Some(scalar(value)?),
                "slab_thickness_a" => thickness = Some(scalar(value)?),
                "eps_slab" => eps_slab = Some(scalar(value)?),
                "eps_etch" => eps_etch = Some(scalar(value)?),
                "disk_radius_a" => r0 = Some(scalar(value)?),
                "ring_widths_a" => widths = Some(parse_list(value, lineno + 1)?),
                "ring_gaps_a" => gaps = Some(parse_list(value, lineno + 1)?),
                "supercell_side_a" => side = Some(scalar(value)?),
                other => return Err(ParseError::UnknownKey(other.to_string())),
            }
        }
        let need = |v: Option<f64>, k: &str| v.ok_or_else(|| ParseError::MissingKey(k.to_string()));
        Ok(Self {
            unit_length_a: need(unit, "unit_length_a_m")?,
            slab_thickness: need(thickness, "slab_thickness_a")?,
            eps_slab: need(eps_slab, "eps_slab")?,
            eps_etch: need(eps_etch, "eps_etch")?,
            disk_radius_r0: need(r0, "disk_radius_a")?,
            ring_widths: widths.ok_or_else(|| ParseError::MissingKey("ring_widths_a".into()))?,
            ring_gaps: gaps.ok_or_else(|| ParseError::MissingKey("ring_gaps_a".into()))?,
            supercell_side_l: need(side, "supercell_side_a")?,
        })
    }
}

pub(crate) fn parse_f64(v: &str, line: usize) -> Result<f64, ParseError> {
    v.trim().parse::<f64>().map_err(|_| ParseError::Syntax {
        line,
        message: format!("not a number: `{v}`"),
    })
}

pub(crate) fn parse_list(v: &str, line: usize) -> Result<Vec<f64>, ParseError> {
    let inner = v
        .trim()
        .strip_prefix('[')
        .and_then(|s| s.strip_suffix(']'))
        .ok_or_else(|| ParseError::Syntax {
            line,
            message: format!("expected `[v1, v2, ...]`, got `{v}`"),
        })?;
    if inner.trim().is_empty() {
        return Ok(Vec::new());
    }
    inner.split(',').map(|x| parse_f64(x, line)).collect()
}

/// The periodic bullseye: r0 = 0.355a, seven 0.07a rings separated by 0.1075a,
/// a 0.20a slab with eps = 12.25 in an 8a supercell, a = 1 um.
pub fn periodic_bullseye_template() -> CavityGeometry {
    CavityGeometry {
        unit_length_a: 1e-6,
        slab_thickness: 0.20,
        eps_slab: 12.25,
        eps_etch: 1.0,
        disk_radius_r0: 0.355,
        ring_widths: vec![0.07; 7],
        ring_gaps: vec![0.1075; 6],
        supercell_side_l: 8.0,
    }
}

/// The inverse-designed cavity as published: r0 = 369 nm, ring widths
/// 34/55/81/61/59/82/75 nm, gaps left at the bullseye value.
pub fn published_optimized_design() -> CavityGeometry {
    let mut g = periodic_bullseye_template();
    g.disk_radius_r0 = 0.369;
    g.ring_widths = vec![0.034, 0.055, 0.081, 0.061, 0.059, 0.082, 0.075];
    g
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    NonPositiveUnitLength,
    NonPositiveThickness,
    NonPositiveSupercell,
    NegativeDiskRadius,
    /// 1-based ring index.
    NonPositiveWidth(usize),
    NonPositiveGap(usize),
    GapCount { rings: usize, gaps: usize },
    PermittivityOrder,
    ExceedsSupercell { footprint: f64, half_side: f64 },
    NonFinite,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NonPositiveUnitLength => write!(f, "non-positive unit length"),
            Violation::NonPositiveThickness => write!(f, "non-positive slab thickness"),
            Violation::NonPositiveSupercell => write!(f, "non-positive supercell side"),
            Violation::NegativeDiskRadius => write!(f, "negative disk radius"),
            Violation::NonPositiveWidth(i) => write!(f, "non-positive width at index {i}"),
            Violation::NonPositiveGap(i) => write!(f, "non-positive gap at index {i}"),
            Violation::GapCount { rings, gaps } => {
                write!(f, "{rings} rings need {} gaps, found {gaps}", rings.saturating_sub(1))
            }
            Violation::PermittivityOrder => write!(f, "permittivities must satisfy eps_slab > eps_etch >= 1"),
            Violation::ExceedsSupercell { footprint, half_side } => write!(
                f,
                "structure exceeds supercell (outer radius {footprint:.6} >= L/2 = {half_side:.6})"
            ),
            Violation::NonFinite => write!(f, "non-finite field"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_ok() {
            return write!(f, "ok");
        }
        let msgs: Vec<String> = self.violations.iter().map(|v| v.to_string()).collect();
        write!(f, "{}", msgs.join("; "))
    }
}

pub fn validate(g: &CavityGeometry) -> ValidationReport {
    let mut violations = Vec::new();
    let scalars = [
        g.unit_length_a,
        g.slab_thickness,
        g.eps_slab,
        g.eps_etch,
        g.disk_radius_r0,
        g.supercell_side_l,
    ];
    if scalars
        .iter()
        .chain(&g.ring_widths)
        .chain(&g.ring_gaps)
        .any(|x| !x.is_finite())
    {
        violations.push(Violation::NonFinite);
        return ValidationReport { violations };
    }
    if g.unit_length_a <= 0.0 {
        violations.push(Violation::NonPositiveUnitLength);
    }
    if g.slab_thickness <= 0.0 {
        violations.push(Violation::NonPositiveThickness);
    }
    if g.supercell_side_l <= 0.0 {
        violations.push(Violation::NonPositiveSupercell);
    }
    // A disk of radius zero is allowed only for the ringless slab.
    if g.disk_radius_r0 < 0.0 || (g.disk_radius_r0 == 0.0 && !g.ring_widths.is_empty()) {
        violations.push(Violation::NegativeDiskRadius);
    }
    for (i, &w) in g.ring_widths.iter().enumerate() {
        if w <= 0.0 {
            violations.push(Violation::NonPositiveWidth(i + 1));
        }
    }
    for (i, &d) in g.ring_gaps.iter().enumerate() {
        if d <= 0.0 {
            violations.push(Violation::NonPositiveGap(i + 1));
        }
    }
    let expected_gaps = g.ring_widths.len().saturating_sub(1);
    if g.ring_gaps.len() != expected_gaps {
        violations.push(Violation::GapCount {
            rings: g.ring_widths.len(),
            gaps: g.ring_gaps.len(),
        });
    }
    if !(g.eps_slab > g.eps_etch && g.eps_etch >= 1.0) {
        violations.push(Violation::PermittivityOrder);
    }
    let footprint = g.footprint_radius();
    let half_side = 0.5 * g.supercell_side_l;
    if footprint >= half_side {
        violations.push(Violation::ExceedsSupercell { footprint, half_side });
    }
    ValidationReport { violations }
}

/// Identifies one perturbable length. Ring and gap indices are 1-based (w1..wN, d1..dN-1).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ParamId {
    DiskRadius,
    RingWidth(usize),
    RingGap(usize),
}

impl fmt::Display for ParamId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamId::DiskRadius => write!(f, "r0"),
            ParamId::RingWidth(i) => write!(f, "w{i}"),
            ParamId::RingGap(i) => write!(f, "d{i}"),
        }
    }
}

impl FromStr for ParamId {
    type Err = GeometryError;

    /// Accepts `r0`, `disk_radius`, `w3`, `ring_width[3]`, `d2`, `ring_gap[2]`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let unknown = || GeometryError::UnknownParam(s.to_string());
        let t = s.trim();
        if t == "r0" || t == "disk_radius" || t == "r" {
            return Ok(ParamId::DiskRadius);
        }
        let bracketed = |prefix: &str| -> Option<usize> {
            t.strip_prefix(prefix)?.strip_suffix(']')?.parse().ok()
        };
        if let Some(i) = bracketed("ring_width[") {
            return if i >= 1 { Ok(ParamId::RingWidth(i)) } else { Err(unknown()) };
        }
        if let Some(i) = bracketed("ring_gap[") {
            return if i >= 1 { Ok(ParamId::RingGap(i)) } else { Err(unknown()) };
        }
        let indexed = |prefix: char| -> Option<usize> { t.strip_prefix(prefix)?.parse().ok() };
        if let Some(i) = indexed('w').filter(|&i| i >= 1) {
            return Ok(ParamId::RingWidth(i));
        }
        if let Some(i) = indexed('d').filter(|&i| i >= 1) {
            return Ok(ParamId::RingGap(i));
        }
        Err(unknown())
    }
}

/// Returns a copy with one length changed by `delta_nm` nanometers.
pub fn perturb(g: &CavityGeometry, param: ParamId, delta_nm: f64) -> Result<CavityGeometry, GeometryError> {
    perturb_with_limit(g, param, delta_nm, DEFAULT_MAX_PERTURBATION_NM)
}

pub fn perturb_with_limit(
    g: &CavityGeometry,
    param: ParamId,
    delta_nm: f64,
    max_abs_nm: f64,
) -> Result<CavityGeometry, GeometryError> {
    if !delta_nm.is_finite() || delta_nm.abs() > max_abs_nm {
        return Err(GeometryError::DeltaTooLarge {
            delta_nm,
            max_nm: max_abs_nm,
        });
    }
    let mut out = g.clone();
    if delta_nm == 0.0 {
        return Ok(out);
    }
    let delta = g.nm_to_a(delta_nm);
    let slot = match param {
        ParamId::DiskRadius => &mut out.disk_radius_r0,
        ParamId::RingWidth(i) => out
            .ring_widths
            .get_mut(i.wrapping_sub(1))
            .ok_or_else(|| GeometryError::UnknownParam(param.to_string()))?,
        ParamId::RingGap(i) => out
            .ring_gaps
            .get_mut(i.wrapping_sub(1))
            .ok_or_else(|| GeometryError::UnknownParam(param.to_string()))?,
    };
    *slot += delta;
    let report = validate(&out);
    if !report.is_ok() {
        return Err(GeometryError::Invalid(report));
    }
    Ok(out)
}

/// Fourier transform of an annulus indicator divided by the cell area, at wavevector
/// magnitude `k` (rad per unit length).
pub(crate) fn annulus_transform(inner: f64, outer: f64, k: f64, cell_area: f64) -> f64 {
    if k == 0.0 {
        return PI * (outer * outer - inner * inner) / cell_area;
    }
    let disk = |r: f64| if r > 0.0 { r * libm::j1(k * r) } else { 0.0 };
    2.0 * PI / k * (disk(outer) - disk(inner)) / cell_area
}

/// Coefficient of the cell-periodic permittivity at reciprocal vector `recip`
/// given in units of 2π/L: (1/L²) ∫ ε(r) e^{-iG·r} dA.
pub fn permittivity_fourier(g: &CavityGeometry, recip: [f64; 2]) -> Complex64 {
    let l = g.supercell_side_l;
    let k = 2.0 * PI / l * recip[0].hypot(recip[1]);
    Complex64::new(permittivity_fourier_radial(g, k), 0.0)
}

/// Same coefficient as a function of |G| in rad per unit `a`.
pub(crate) fn permittivity_fourier_radial(g: &CavityGeometry, k: f64) -> f64 {
    let area = g.supercell_side_l * g.supercell_side_l;
    let contrast = g.eps_etch - g.eps_slab;
    let rings: f64 = g
        .annuli()
        .iter()
        .map(|r| annulus_transform(r.inner, r.outer, k, area))
        .sum();
    let uniform = if k == 0.0 { g.eps_slab } else { 0.0 };
    uniform + contrast * rings
}

/// Area-weighted mean permittivity over the supercell.
pub fn average_permittivity(g: &CavityGeometry) -> f64 {
    permittivity_fourier(g, [0.0, 0.0]).re
}

/// Samples ε at the cell centers of a `resolution`² grid, row-major with x fastest.
pub fn rasterize(g: &CavityGeometry, resolution: usize) -> Result<Vec<f64>, GeometryError> {
    if resolution < 16 {
        return Err(GeometryError::ResolutionTooSmall(resolution));
    }
    let half_step = g.supercell_side_l / (2.0 * resolution as f64);
    // Integer-symmetric coordinates make the grid exactly symmetric under 90° rotation.
    let coord = |i: usize| (2 * i as i64 + 1 - resolution as i64) as f64 * half_step;
    let mut out = Vec::with_capacity(resolution * resolution);
    for iy in 0..resolution {
        let y = coord(iy);
        for ix in 0..resolution {
            out.push(g.permittivity_at(coord(ix), y));
        }
    }
    Ok(out)
}

/// The eight optimized lengths (r0, w1..w7), units of `a`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParamVector(pub [f64; 8]);

impl ParamVector {
    pub fn from_geometry(g: &CavityGeometry) -> Result<Self, GeometryError> {
        if g.ring_widths.len() != 7 {
            return Err(GeometryError::RingCount(g.ring_widths.len()));
        }
        let mut v = [0.0; 8];
        v[0] = g.disk_radius_r0;
        v[1..].copy_from_slice(&g.ring_widths);
        Ok(Self(v))
    }

    /// Geometry with `template`'s gaps, slab, and supercell and these lengths.
    pub fn apply(&self, template: &CavityGeometry) -> CavityGeometry {
        CavityGeometry {
            disk_radius_r0: self.0[0],
            ring_widths: self.0[1..].to_vec(),
            ..template.clone()
        }
    }

    pub fn within(&self, bounds: &ParamBounds) -> bool {
        self.0
            .iter()
            .zip(bounds.lower.iter().zip(&bounds.upper))
            .all(|(x, (lo, hi))| x >= lo && x <= hi)
    }
}

/// Box bounds on the eight optimized lengths, units of `a`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParamBounds {
    pub lower: [f64; 8],
    pub upper: [f64; 8],
}

impl Default for ParamBounds {
    /// 20 nm minimum feature; r0 up to 0.6a, ring widths up to 0.3a.
    fn default() -> Self {
        let mut upper = [0.3; 8];
        upper[0] = 0.6;
        Self {
            lower: [0.02; 8],
            upper,
        }
    }
}
