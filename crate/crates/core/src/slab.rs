//! Guided modes of a uniform dielectric slab suspended in vacuum.
//!
//! These are the expansion basis of the guided-mode solver. Public quantities
//! use normalized units: wavevectors in 2π/a and frequencies in c/a (that is,
//! a/λ), so the vacuum light line is `omega == g`. Field profiles are evaluated
//! with `z` in units of `a`, measured from the slab midplane.

use std::f64::consts::{FRAC_PI_2, PI};

const TWO_PI: f64 = 2.0 * PI;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Polarization {
    Te,
    Tm,
}

impl Polarization {
    /// Sign picked up by the mode under an in-plane mirror reflection.
    pub(crate) fn mirror_sign(self) -> f64 {
        match self {
            Polarization::Te => -1.0,
            Polarization::Tm => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Trig {
    Cos,
    Sin,
}

/// `amp * cos(k z)` or `amp * sin(k z)` inside the core, k in rad/a.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct TrigProfile {
    pub amp: f64,
    pub kind: Trig,
}

/// Field of a slab mode restricted to the core: the in-plane electric component
/// (along ê⊥ for TE, along ĝ for TM) and the magnitude of the normal component.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct CoreProfile {
    /// Transverse wavenumber in the core, rad/a.
    pub k: f64,
    pub inplane: TrigProfile,
    pub normal: TrigProfile,
}

/// ∫_{-h}^{h} sin(x z)... helper: sin(x h) / x with the x -> 0 limit.
fn sinc_integral(x: f64, h: f64) -> f64 {
    let t = x * h;
    if t.abs() < 1e-6 {
        h * (1.0 - t * t / 6.0)
    } else {
        t.sin() / x
    }
}

/// ∫_{-h}^{h} p1(z) p2(z) dz for two core trig profiles.
fn trig_overlap(k1: f64, p1: &TrigProfile, k2: f64, p2: &TrigProfile, h: f64) -> f64 {
    if p1.amp == 0.0 || p2.amp == 0.0 {
        return 0.0;
    }
    let diff = sinc_integral(k1 - k2, h);
    let sum = sinc_integral(k1 + k2, h);
    let base = match (p1.kind, p2.kind) {
        (Trig::Cos, Trig::Cos) => diff + sum,
        (Trig::Sin, Trig::Sin) => diff - sum,
        _ => 0.0,
    };
    p1.amp * p2.amp * base
}

impl CoreProfile {
    /// Core integrals (∫ a₁a₂ dz, ∫ b₁b₂ dz) over the slab of half-thickness `half`.
    pub fn overlap(&self, other: &CoreProfile, half: f64) -> (f64, f64) {
        (
            trig_overlap(self.k, &self.inplane, other.k, &other.inplane, half),
            trig_overlap(self.k, &self.normal, other.k, &other.normal, half),
        )
    }
}

/// A guided mode of the symmetric slab at in-plane wavevector magnitude `g`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlabMode {
    pub polarization: Polarization,
    pub order: usize,
    /// In-plane wavevector magnitude, 2π/a.
    pub g: f64,
    /// Frequency, c/a.
    pub omega: f64,
    /// Cladding decay constant, 2π/a.
    pub chi: f64,
    /// Core transverse wavenumber, 2π/a.
    pub q: f64,
    /// Amplitude of the core profile (E for TE, H for TM).
    pub norm: f64,
    pub eps_eff: f64,
    pub thickness: f64,
}

/// Residual of the symmetric-slab eigenvalue equation in terms of u = q·d/2 (q in rad/a).
fn residual(u: f64, half: f64, g_ang: f64, eps: f64, pol: Polarization, order: usize) -> f64 {
    let q = u / half;
    let chi2 = ((eps - 1.0) * g_ang * g_ang - q * q) / eps;
    let chi = chi2.max(0.0).sqrt();
    let p = match pol {
        Polarization::Te => q,
        Polarization::Tm => q / eps,
    };
    if order % 2 == 0 {
        p * u.sin() - chi * u.cos()
    } else {
        p * u.cos() + chi * u.sin()
    }
}

/// Frequency (c/a) of the guided mode of order `order` at in-plane wavevector `g` (2π/a),
/// or `None` when that mode is cut off. Slab cladding is vacuum on both sides.
pub fn guided_dispersion(eps_eff: f64, thickness: f64, pol: Polarization, order: usize, g: f64) -> Option<f64> {
    solve_u(eps_eff, thickness, pol, order, g).map(|(_, omega_ang)| omega_ang / TWO_PI)
}

/// Returns (u, angular frequency) of the guided root.
fn solve_u(eps: f64, thickness: f64, pol: Polarization, order: usize, g: f64) -> Option<(f64, f64)> {
    if !(g > 0.0) || !(eps > 1.0) || !(thickness > 0.0) {
        return None;
    }
    let half = 0.5 * thickness;
    let g_ang = TWO_PI * g;
    let u_max = half * g_ang * (eps - 1.0).sqrt();
    let lo0 = order as f64 * FRAC_PI_2;
    if u_max <= lo0 {
        return None;
    }
    let hi0 = ((order + 1) as f64 * FRAC_PI_2).min(u_max);
    let f = |u: f64| residual(u, half, g_ang, eps, pol, order);
    let (mut lo, mut hi) = (lo0, hi0);
    let mut f_lo = f(lo);
    let mut f_hi = f(hi);
    if f_lo == 0.0 && order > 0 {
        // The bracket end itself is a root only at the cutoff; not guided.
        return None;
    }
    debug_assert!(f_lo * f_hi <= 0.0, "dispersion root not bracketed");
    for _ in 0..200 {
        if hi - lo <= 1e-14 * hi.max(1.0) {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let f_mid = f(mid);
        if f_mid == 0.0 {
            lo = mid;
            hi = mid;
            f_lo = 0.0;
            f_hi = 0.0;
            break;
        }
        if (f_mid < 0.0) == (f_lo < 0.0) {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
            f_hi = f_mid;
        }
    }
    // Secant polish inside the final bracket.
    let u = if f_hi != f_lo {
        let s = lo - f_lo * (hi - lo) / (f_hi - f_lo);
        if s >= lo && s <= hi {
            s
        } else {
            0.5 * (lo + hi)
        }
    } else {
        0.5 * (lo + hi)
    };
    if u >= u_max {
        return None;
    }
    let q = u / half;
    let omega_ang = ((q * q + g_ang * g_ang) / eps).sqrt();
    Some((u, omega_ang))
}

impl SlabMode {
    pub fn new(eps_eff: f64, thickness: f64, pol: Polarization, order: usize, g: f64) -> Option<Self> {
        let (u, omega_ang) = solve_u(eps_eff, thickness, pol, order, g)?;
        let half = 0.5 * thickness;
        let g_ang = TWO_PI * g;
        let q_ang = u / half;
        let chi_ang = (g_ang * g_ang - omega_ang * omega_ang).max(0.0).sqrt();
        let even = order % 2 == 0;
        let core_sq = if even {
            half + (2.0 * u).sin() / (2.0 * q_ang)
        } else {
            half - (2.0 * u).sin() / (2.0 * q_ang)
        };
        let edge_sq = if even { u.cos().powi(2) } else { u.sin().powi(2) };
        let weight = match pol {
            Polarization::Te => eps_eff,
            Polarization::Tm => 1.0,
        };
        let norm = 1.0 / (weight * core_sq + edge_sq / chi_ang).sqrt();
        Some(Self {
            polarization: pol,
            order,
            g,
            omega: omega_ang / TWO_PI,
            chi: chi_ang / TWO_PI,
            q: q_ang / TWO_PI,
            norm,
            eps_eff,
            thickness,
        })
    }

    pub(crate) fn core_profile(&self) -> CoreProfile {
        field_core_profile(
            self.polarization,
            self.order % 2 == 0,
            self.norm,
            TWO_PI * self.q,
            TWO_PI * self.g,
            TWO_PI * self.omega,
            self.eps_eff,
        )
    }

    /// Real electric-field components (in-plane, normal) at height `z` (units of a).
    ///
    /// The normal component of a TM mode carries a relative phase of -i, so
    /// |E|² = inplane² + normal².
    pub fn field_at(&self, z: f64) -> (f64, f64) {
        let half = 0.5 * self.thickness;
        let q = TWO_PI * self.q;
        let g = TWO_PI * self.g;
        let w = TWO_PI * self.omega;
        let chi = TWO_PI * self.chi;
        let even = self.order % 2 == 0;
        let core = |t: f64| if even { (q * t).cos() } else { (q * t).sin() };
        let core_d = |t: f64| if even { -q * (q * t).sin() } else { q * (q * t).cos() };
        // Scalar profile (E for TE, H for TM) and its z-derivative.
        let (s, ds, eps) = if z.abs() <= half {
            (self.norm * core(z), self.norm * core_d(z), self.eps_eff)
        } else {
            let edge = self.norm * core(half.copysign(z));
            let decay = (-chi * (z.abs() - half)).exp();
            (edge * decay, -chi * z.signum() * edge * decay, 1.0)
        };
        match self.polarization {
            Polarization::Te => (s, 0.0),
            Polarization::Tm => (ds / (w * eps), g * s / (w * eps)),
        }
    }

    /// Relative permittivity of the effective layered structure at height `z`.
    pub fn eps_at(&self, z: f64) -> f64 {
        if z.abs() <= 0.5 * self.thickness {
            self.eps_eff
        } else {
            1.0
        }
    }
}

fn field_core_profile(
    pol: Polarization,
    even: bool,
    amp: f64,
    q: f64,
    g: f64,
    w: f64,
    eps: f64,
) -> CoreProfile {
    let (cos_like, sin_like) = if even { (Trig::Cos, Trig::Sin) } else { (Trig::Sin, Trig::Cos) };
    match pol {
        Polarization::Te => CoreProfile {
            k: q,
            inplane: TrigProfile { amp, kind: cos_like },
            normal: TrigProfile {
                amp: 0.0,
                kind: cos_like,
            },
        },
        Polarization::Tm => {
            // a = h'/(ωε), b = g h/(ωε) with h = amp·cos(qz) (even) or amp·sin(qz) (odd).
            let da = if even { -amp * q } else { amp * q };
            CoreProfile {
                k: q,
                inplane: TrigProfile {
                    amp: da / (w * eps),
                    kind: sin_like,
                },
                normal: TrigProfile {
                    amp: g * amp / (w * eps),
                    kind: cos_like,
                },
            }
        }
    }
}

/// Core profile of the radiative standing-wave state at in-plane `g` and frequency `omega`
/// (both rad/a, `g < omega`), normalized to δ(k_z - k_z') in the vacuum cladding.
/// Returns the profile together with the cladding k_z.
pub(crate) fn radiative_core_profile(
    eps_eff: f64,
    thickness: f64,
    pol: Polarization,
    even: bool,
    g: f64,
    omega: f64,
) -> (CoreProfile, f64) {
    let half = 0.5 * thickness;
    let kz = (omega * omega - g * g).max(0.0).sqrt();
    let q = (eps_eff * omega * omega - g * g).sqrt();
    let u = q * half;
    let clad_amp = 1.0 / PI.sqrt();
    let ratio = match pol {
        Polarization::Te => q / kz,
        Polarization::Tm => q / (eps_eff * kz),
    };
    let (c, s) = (u.cos(), u.sin());
    let amp = if even {
        clad_amp / (c * c + (ratio * s).powi(2)).sqrt()
    } else {
        clad_amp / (s * s + (ratio * c).powi(2)).sqrt()
    };
    (field_core_profile(pol, even, amp, q, g, omega, eps_eff), kz)
}

/// Up to `num_bands` guided modes at each wavevector, lowest frequency first.
///
/// Ties in frequency order TE before TM, then by mode order.
pub fn build_basis(g_vectors: &[[f64; 2]], eps_eff: f64, thickness: f64, num_bands: usize) -> Vec<Vec<SlabMode>> {
    g_vectors
        .iter()
        .map(|v| modes_at(v[0].hypot(v[1]), eps_eff, thickness, num_bands))
        .collect()
}

pub(crate) fn modes_at(g: f64, eps_eff: f64, thickness: f64, num_bands: usize) -> Vec<SlabMode> {
    let mut modes = Vec::new();
    if num_bands == 0 || !(g > 0.0) {
        return modes;
    }
    for pol in [Polarization::Te, Polarization::Tm] {
        // Orders beyond num_bands can never be among the lowest num_bands modes.
        for order in 0..num_bands {
            match SlabMode::new(eps_eff, thickness, pol, order, g) {
                Some(m) => modes.push(m),
                None => break,
            }
        }
    }
    modes.sort_by(|a, b| {
        a.omega
            .total_cmp(&b.omega)
            .then(a.polarization.cmp(&b.polarization))
            .then(a.order.cmp(&b.order))
    });
    modes.truncate(num_bands);
    modes
}
