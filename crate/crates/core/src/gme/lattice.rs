//! Supercell reciprocal lattice and its mirror-symmetry sectors.

use std::fmt;

/// Parities of the electric field under x → -x and y → -y.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Sector {
    pub x_even: bool,
    pub y_even: bool,
}

impl Sector {
    pub const ALL: [Sector; 4] = [
        Sector { x_even: true, y_even: true },
        Sector { x_even: true, y_even: false },
        Sector { x_even: false, y_even: true },
        Sector { x_even: false, y_even: false },
    ];

    /// Sector of a dipole mode polarized along x at the cavity center.
    pub const X_DIPOLE: Sector = Sector { x_even: false, y_even: true };
    pub const Y_DIPOLE: Sector = Sector { x_even: true, y_even: false };

    fn signs(self) -> (f64, f64) {
        (
            if self.x_even { 1.0 } else { -1.0 },
            if self.y_even { 1.0 } else { -1.0 },
        )
    }

    pub(crate) fn index(self) -> usize {
        (!self.x_even as usize) * 2 + (!self.y_even as usize)
    }

    /// The partner sector under a 90° rotation.
    pub fn rotated(self) -> Sector {
        Sector {
            x_even: self.y_even,
            y_even: self.x_even,
        }
    }
}

impl fmt::Display for Sector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let p = |e: bool| if e { '+' } else { '-' };
        write!(f, "({},{})", p(self.x_even), p(self.y_even))
    }
}

/// Reciprocal vectors G = (2π/L)(m, n) with |G| ≤ gmax.
#[derive(Debug, Clone)]
pub struct ReciprocalLattice {
    pub supercell_side: f64,
    pub points: Vec<[i32; 2]>,
    max_index: i32,
    lookup: Vec<u32>,
}

impl ReciprocalLattice {
    /// `gmax` in units of 2π/a, `supercell_side` in units of a.
    pub fn new(gmax: f64, supercell_side: f64) -> Self {
        let radius = gmax * supercell_side;
        let r2 = radius * radius * (1.0 + 1e-12);
        let max_index = radius.floor().max(0.0) as i32;
        let mut points = Vec::new();
        for m in -max_index..=max_index {
            for n in -max_index..=max_index {
                if ((m * m + n * n) as f64) <= r2 {
                    points.push([m, n]);
                }
            }
        }
        points.sort_by_key(|&[m, n]| (m * m + n * n, m, n));
        let side = (2 * max_index + 1) as usize;
        let mut lookup = vec![u32::MAX; side * side];
        for (i, &[m, n]) in points.iter().enumerate() {
            lookup[((m + max_index) as usize) * side + (n + max_index) as usize] = i as u32;
        }
        Self {
            supercell_side,
            points,
            max_index,
            lookup,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn index_of(&self, m: i32, n: i32) -> Option<usize> {
        if m.abs() > self.max_index || n.abs() > self.max_index {
            return None;
        }
        let side = (2 * self.max_index + 1) as usize;
        let v = self.lookup[((m + self.max_index) as usize) * side + (n + self.max_index) as usize];
        (v != u32::MAX).then_some(v as usize)
    }

    /// Cartesian vector in units of 2π/a.
    pub fn vector(&self, i: usize) -> [f64; 2] {
        let [m, n] = self.points[i];
        [m as f64 / self.supercell_side, n as f64 / self.supercell_side]
    }

    pub fn magnitude(&self, i: usize) -> f64 {
        let [m, n] = self.points[i];
        ((m * m + n * n) as f64).sqrt() / self.supercell_side
    }

    pub fn norm_sq_index(&self, i: usize) -> i64 {
        let [m, n] = self.points[i];
        (m as i64).pow(2) + (n as i64).pow(2)
    }
}

/// A symmetry-adapted basis function: a normalized combination of lattice points.
#[derive(Debug, Clone)]
pub(crate) struct Combo {
    pub members: Vec<(usize, f64)>,
    /// Representative lattice point and the factor turning ⟨α|A|rep⟩ into ⟨α|A|this⟩
    /// for any operator A commuting with the mirrors.
    pub rep: usize,
    pub rep_scale: f64,
}

/// Symmetry-adapted combinations of the points in `usable` for one sector.
///
/// `mirror_sign` gives, per representative point, the sign a single basis function picks up under a mirror
/// (−1 for TE-polarized vector functions, +1 for scalars and TM).
pub(crate) fn sector_combos(
    lattice: &ReciprocalLattice,
    usable: impl Fn(usize) -> bool,
    sector: Sector,
    mirror_sign: impl Fn(usize) -> f64,
) -> Vec<Combo> {
    let (px, py) = sector.signs();
    let mut out = Vec::new();
    for (i, &[m, n]) in lattice.points.iter().enumerate() {
        if m < 0 || n < 0 || !usable(i) {
            continue;
        }
        let mirror_sign = mirror_sign(i);
        let images = [
            ([m, n], 1.0),
            ([-m, n], px * mirror_sign),
            ([m, -n], py * mirror_sign),
            ([-m, -n], px * py),
        ];
        let mut members: Vec<(usize, f64)> = Vec::with_capacity(4);
        for ([a, b], c) in images {
            let j = lattice
                .index_of(a, b)
                .expect("lattice is closed under mirrors");
            match members.iter_mut().find(|(k, _)| *k == j) {
                Some(entry) => entry.1 += c,
                None => members.push((j, c)),
            }
        }
        members.retain(|&(_, c)| c != 0.0);
        if members.is_empty() {
            continue;
        }
        let norm = members.iter().map(|(_, c)| c * c).sum::<f64>().sqrt();
        for entry in &mut members {
            entry.1 /= norm;
        }
        out.push(Combo {
            members,
            rep: i,
            rep_scale: 4.0 / norm,
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lattice_counts() {
        let l = ReciprocalLattice::new(0.25, 8.0);
        // Points with m² + n² <= 4.
        assert_eq!(l.len(), 13);
        assert_eq!(l.points[0], [0, 0]);
        assert_eq!(l.index_of(2, 0).map(|i| l.points[i]), Some([2, 0]));
        assert_eq!(l.index_of(2, 1), None);
    }

    #[test]
    fn sectors_partition_scalar_space() {
        let l = ReciprocalLattice::new(0.5, 8.0);
        let total: usize = Sector::ALL
            .iter()
            .map(|&s| sector_combos(&l, |_| true, s, |_| 1.0).len())
            .sum();
        assert_eq!(total, l.len());
        let te_total: usize = Sector::ALL
            .iter()
            .map(|&s| sector_combos(&l, |i| i != 0, s, |_| -1.0).len())
            .sum();
        assert_eq!(te_total, l.len() - 1);
    }
}
