//! First-order radiative losses.
//!
//! Each reciprocal vector G with |G| < ω/c opens a radiation channel. The mode
//! couples to the radiative standing waves of the effective slab at that G
//! (both polarizations, both z-parities); the golden rule with the 1D photon
//! density of states dk_z/d(ω²) = 1/(2k_z) gives Im(ω²) = π Σ |M|²/(2k_z).

use std::f64::consts::PI;

use num_complex::Complex64;

use super::system::GmeSystem;
use super::{CavityMode, ModeLosses, RadiationChannel};
use crate::error::GmeError;
use crate::slab::{radiative_core_profile, Polarization};

/// Relative loss below which a mode is treated as lossless.
const LOSSLESS_THRESHOLD: f64 = 1e-13;

impl GmeSystem {
    pub fn compute_losses(&self, mode: &CavityMode) -> Result<CavityMode, GmeError> {
        if mode.eigvec.len() != self.entries.len() {
            return Err(GmeError::BasisMismatch {
                reference: self.entries.len(),
                candidate: mode.eigvec.len(),
            });
        }
        let omega = 2.0 * PI * mode.frequency;
        let half = 0.5 * self.thickness;
        let eps2 = self.eps_eff * self.eps_eff;
        let active: Vec<usize> = (0..self.entries.len()).filter(|&i| mode.eigvec[i] != 0.0).collect();

        let mut channels = Vec::new();
        let mut imag_w2 = 0.0;
        for r in 0..self.lattice.len() {
            let g_norm = self.lattice.magnitude(r);
            if g_norm >= mode.frequency {
                // Points are sorted by |G|.
                break;
            }
            let v = self.lattice.vector(r);
            let ghat = if g_norm > 0.0 { [v[0] / g_norm, v[1] / g_norm] } else { [1.0, 0.0] };
            let g_ang = 2.0 * PI * g_norm;
            let eta_row: Vec<f64> = active
                .iter()
                .map(|&i| self.delta_eta(r, self.entries[i].point))
                .collect();
            let mut amps = [Complex64::new(0.0, 0.0); 2];
            for (slot, pol) in [Polarization::Te, Polarization::Tm].into_iter().enumerate() {
                let dir = match pol {
                    Polarization::Te => [-ghat[1], ghat[0]],
                    Polarization::Tm => ghat,
                };
                let mut parity_sum = [0.0f64; 2];
                let mut kz = 0.0;
                for (pi, even) in [true, false].into_iter().enumerate() {
                    let (prof, kz_) = radiative_core_profile(self.eps_eff, self.thickness, pol, even, g_ang, omega);
                    kz = kz_;
                    let shell_overlaps: Vec<(f64, f64)> = (0..self.num_shells())
                        .map(|s| prof.overlap(self.shell_profile(s), half))
                        .collect();
                    let mut m = 0.0;
                    for (k, &i) in active.iter().enumerate() {
                        let e = &self.entries[i];
                        let (ia, ib) = shell_overlaps[e.shell];
                        let c = (dir[0] * e.dir[0] + dir[1] * e.dir[1]) * ia + ib;
                        m += mode.eigvec[i] * e.omega * eta_row[k] * c;
                    }
                    parity_sum[pi] = omega * eps2 * m;
                }
                let power = parity_sum[0].powi(2) + parity_sum[1].powi(2);
                imag_w2 += PI * power / (2.0 * kz);
                let scale = (PI / (4.0 * kz)).sqrt();
                amps[slot] = Complex64::new(parity_sum[0], parity_sum[1]) * scale;
            }
            channels.push(RadiationChannel {
                k_parallel: v,
                theta: (g_norm / mode.frequency).asin(),
                phi: if g_norm > 0.0 { v[1].atan2(v[0]) } else { 0.0 },
                amp_s: amps[0],
                amp_p: amps[1],
            });
        }
        if !(imag_w2 > LOSSLESS_THRESHOLD * omega * omega) {
            return Err(GmeError::NoRadiativeChannels {
                frequency: mode.frequency,
            });
        }
        let loss_rate_ang = imag_w2 / (2.0 * omega);
        let mut out = mode.clone();
        out.losses = Some(ModeLosses {
            loss_rate: loss_rate_ang / (2.0 * PI),
            q_factor: omega / (2.0 * loss_rate_ang),
        });
        out.channels = channels;
        Ok(out)
    }
}
