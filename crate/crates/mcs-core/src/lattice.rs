//! Momentum lattice, plane-wave bases, and the threefold rotation machinery.
//!
//! The model lives on a triangular lattice Λ with dual lattice Λ* generated by
//! `g1 = √3·ω` and `g2 = √3·ω²`, where `ω = e^{2πi/3}`. Complex numbers double
//! as 2D vectors throughout; the real pairing is `⟨a, q⟩ = Re(a·conj(q))`.
//!
//! Plane waves are indexed by a component (layer/sublattice slot) and an
//! integer momentum index `(m1, m2)` relative to a coset offset: components
//! with odd 1-based index carry momenta in `i + Λ*`, even components in `Λ*`.
//! A Bloch offset shifts every momentum; when the offset lands on one of the
//! three rotation-fixed cosets (`Λ*`, `±i + Λ*`) the basis is closed under the
//! rotation `q ↦ ω̄·q` and the threefold symmetry machinery applies exactly.
//!
//! Truncation uses rotation-closed hexagonal index sets rather than square
//! boxes: a square `|m1|, |m2| ≤ N` is not invariant under the order-3 index
//! map (no integral basis fixes that), and every symmetry identity downstream
//! — exact sector projectors, spectra invariant under `k ↦ ωk`, zero modes
//! pinned at finite truncation — depends on exact closure.

use std::collections::HashMap;
use std::fmt;

use ndarray::prelude::*;
use ndarray_linalg::c64;

use crate::error::{McsError, Result};

// ---------------------------------------------------------------------------
// Scalar constants
// ---------------------------------------------------------------------------

/// Primitive cube root of unity `ω = e^{2πi/3}`.
pub fn omega() -> c64 {
    c64::new(-0.5, 0.75f64.sqrt())
}

/// `ω^k` for any integer `k`, reduced exactly mod 3 (no trig error drift).
pub fn omega_pow(k: i64) -> c64 {
    match k.rem_euclid(3) {
        0 => c64::new(1.0, 0.0),
        1 => omega(),
        _ => omega().conj(),
    }
}

/// First dual generator `g1 = √3·ω`.
pub fn dual_g1() -> c64 {
    c64::new(3f64.sqrt(), 0.0) * omega()
}

/// Second dual generator `g2 = √3·ω²`.
pub fn dual_g2() -> c64 {
    c64::new(3f64.sqrt(), 0.0) * omega().conj()
}

/// First direct generator `(4π/3)·i·ω`.
pub fn direct_a1() -> c64 {
    c64::new(0.0, 4.0 * std::f64::consts::PI / 3.0) * omega()
}

/// Second direct generator `(4π/3)·i·ω²`.
pub fn direct_a2() -> c64 {
    c64::new(0.0, 4.0 * std::f64::consts::PI / 3.0) * omega().conj()
}

/// The coset representative `i = (g1 - g2)/3`, the momentum carried by the
/// components with odd 1-based index.
pub fn coset_i() -> c64 {
    c64::new(0.0, 1.0)
}

/// Real pairing `⟨a, q⟩ = Re(a·conj(q))` between a direct-lattice vector and a
/// momentum. For `a ∈ Λ` and `q ∈ Λ*` the value lies in `2πZ`.
pub fn pairing(a: c64, q: c64) -> f64 {
    (a * q.conj()).re
}

/// Point of the direct lattice `Λ`, stored by integer coordinates in the
/// `(a1, a2)` basis.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct LatticePoint {
    pub a1: i64,
    pub a2: i64,
}

impl LatticePoint {
    pub fn new(a1: i64, a2: i64) -> Self {
        Self { a1, a2 }
    }

    /// Position as a complex number: `(4π/3)·i·ω·(a1 + ω·a2)`.
    pub fn value(self) -> c64 {
        direct_a1() * c64::new(self.a1 as f64, 0.0) + direct_a2() * c64::new(self.a2 as f64, 0.0)
    }
}

/// Point of the dual lattice `Λ*` (or one of its `±i` cosets), stored by
/// integer coordinates in the `(g1, g2)` basis plus the coset tag.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct DualPoint {
    pub m1: i32,
    pub m2: i32,
    pub coset: Coset,
}

impl DualPoint {
    pub fn new(m1: i32, m2: i32, coset: Coset) -> Self {
        Self { m1, m2, coset }
    }

    pub fn value(self) -> c64 {
        self.coset.offset()
            + dual_g1() * c64::new(self.m1 as f64, 0.0)
            + dual_g2() * c64::new(self.m2 as f64, 0.0)
    }
}

// ---------------------------------------------------------------------------
// Cosets of Λ* in the refined lattice Λ*/3
// ---------------------------------------------------------------------------

/// The three rotation-invariant cosets of `Λ*` inside `Λ*/3` that occur as
/// momentum offsets: `Λ*` itself and `±i + Λ*`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Coset {
    Zero,
    PlusI,
    MinusI,
}

impl Coset {
    /// Offset as a complex momentum.
    pub fn offset(self) -> c64 {
        match self {
            Coset::Zero => c64::new(0.0, 0.0),
            Coset::PlusI => coset_i(),
            Coset::MinusI => -coset_i(),
        }
    }

    /// Representative in thirds of the dual basis: offset = `(t1·g1 + t2·g2)/3`.
    fn third_rep(self) -> (i64, i64) {
        match self {
            Coset::Zero => (0, 0),
            Coset::PlusI => (1, -1),
            Coset::MinusI => (-1, 1),
        }
    }

    /// Coset of the sum of two offsets (group law modulo `Λ*`).
    pub fn combine(self, other: Coset) -> Coset {
        let (a1, a2) = self.third_rep();
        let (b1, b2) = other.third_rep();
        match ((a1 + b1).rem_euclid(3), (a2 + b2).rem_euclid(3)) {
            (0, 0) => Coset::Zero,
            (1, 2) => Coset::PlusI,
            (2, 1) => Coset::MinusI,
            _ => unreachable!("coset group is closed"),
        }
    }

    /// Membership in the rotation-closed hexagonal index set of size `N`.
    ///
    /// For the zero coset this is `max(|m1|, |m2|, |m1-m2|) ≤ N`; the shifted
    /// cosets use the same hexagon re-centered at the (non-integer) fixed
    /// point of the affine rotation, which keeps the set closed under
    /// [`Coset::rotate_index`] while staying as round as possible.
    pub fn contains(self, trunc: u32, m1: i32, m2: i32) -> bool {
        let (t1, t2) = self.third_rep();
        let (m1, m2) = (m1 as i64, m2 as i64);
        let bound = 3 * trunc as i64 + if self == Coset::Zero { 0 } else { 2 };
        (3 * m1 + t1).abs() <= bound
            && (3 * m2 + t2).abs() <= bound
            && (3 * (m1 - m2) + t1 - t2).abs() <= bound
    }

    /// All indices of the hexagonal set, in lexicographic `(m1, m2)` order.
    pub fn enumerate(self, trunc: u32) -> Vec<(i32, i32)> {
        let r = trunc as i32 + 1;
        let mut out = Vec::with_capacity(self.count(trunc));
        for m1 in -r..=r {
            for m2 in -r..=r {
                if self.contains(trunc, m1, m2) {
                    out.push((m1, m2));
                }
            }
        }
        out
    }

    /// Number of indices in the hexagonal set: `3N² + 3N + 1` for the zero
    /// coset, `3(N+1)²` for the shifted ones.
    pub fn count(self, trunc: u32) -> usize {
        let n = trunc as usize;
        match self {
            Coset::Zero => 3 * n * n + 3 * n + 1,
            _ => 3 * (n + 1) * (n + 1),
        }
    }

    /// Index image of the momentum rotation `q ↦ ω̄·q` on this coset:
    /// `ω̄·(offset + m1·g1 + m2·g2) = offset + m1'·g1 + m2'·g2`.
    pub fn rotate_index(self, m1: i32, m2: i32) -> (i32, i32) {
        // ω̄·g1 = -g1 - g2, ω̄·g2 = g1, ω̄·(±i) = ±(i - g1).
        let shift = match self {
            Coset::Zero => 0,
            Coset::PlusI => -1,
            Coset::MinusI => 1,
        };
        (m2 - m1 + shift, -m1)
    }
}

// ---------------------------------------------------------------------------
// Sector labels
// ---------------------------------------------------------------------------

/// Rotation sector label `p ∈ Z/3`: the subspace where the rotation acts as
/// multiplication by `ω̄^p`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SectorLabel(u8);

impl SectorLabel {
    pub fn new(p: i64) -> Self {
        Self(p.rem_euclid(3) as u8)
    }

    pub fn index(self) -> u8 {
        self.0
    }

    /// The sector reached from this one by applying the annihilation-direction
    /// block `D` (which intertwines as `D C = ω̄ C D`, lowering `p` by one).
    pub fn lowered(self) -> Self {
        Self::new(self.0 as i64 - 1)
    }
}

impl fmt::Display for SectorLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

// ---------------------------------------------------------------------------
// Momentum basis
// ---------------------------------------------------------------------------

/// One plane-wave basis entry: component index (0-based, `0..2n`) and the
/// integer momentum index relative to the component's coset offset.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct BasisEntry {
    pub comp: u16,
    pub m1: i32,
    pub m2: i32,
}

/// Finite plane-wave basis for the `2n`-component model at one Bloch momentum.
///
/// Entries are ordered component-major, then lexicographically by `(m1, m2)`;
/// construction is fully deterministic. Components with odd 1-based index
/// (0-based even) sit on `i + Λ*`, the rest on `Λ*`, both shifted by the Bloch
/// momentum. When the total offset of a component is equivalent to one of
/// `{0, +i, -i}` modulo `Λ*`, that component uses the matching rotation-closed
/// hexagon and the whole basis supports the exact threefold rotation.
#[derive(Clone, Debug)]
pub struct MomentumBasis {
    layers: usize,
    trunc: u32,
    bloch_k: c64,
    entries: Vec<BasisEntry>,
    comp_ranges: Vec<std::ops::Range<usize>>,
    /// Effective coset shape of each component (after folding the Bloch
    /// momentum when it is special).
    comp_cosets: Vec<Coset>,
    /// Base momentum of each component: coset offset plus any non-special
    /// Bloch remainder.
    comp_offsets: Vec<c64>,
    /// Whether the momentum set is exactly closed under `q ↦ ω̄·q`.
    rotation_closed: bool,
    lookup: HashMap<(u16, i32, i32), usize>,
}

/// Decomposition of a Bloch momentum against the special cosets.
fn split_bloch(bloch_k: c64) -> Option<Coset> {
    // Solve bloch_k = x·g1 + y·g2 over the reals, then test whether the
    // coordinates minus a coset representative are integers.
    let (g1, g2) = (dual_g1(), dual_g2());
    let det = g1.re * g2.im - g1.im * g2.re;
    let x = (bloch_k.re * g2.im - bloch_k.im * g2.re) / det;
    let y = (g1.re * bloch_k.im - g1.im * bloch_k.re) / det;
    for coset in [Coset::Zero, Coset::PlusI, Coset::MinusI] {
        let (t1, t2) = coset.third_rep();
        let r1 = x - t1 as f64 / 3.0;
        let r2 = y - t2 as f64 / 3.0;
        if (r1 - r1.round()).abs() < 1e-9 && (r2 - r2.round()).abs() < 1e-9 {
            return Some(coset);
        }
    }
    None
}

impl MomentumBasis {
    /// Build the basis for `n` layers (`2n` components) at hexagonal
    /// truncation `N` and the given Bloch momentum.
    pub fn build(layers: usize, trunc: u32, bloch_k: c64) -> Result<Self> {
        if layers == 0 {
            return Err(McsError::Config("layer count must be at least 1".into()));
        }
        let special = split_bloch(bloch_k);
        let ncomp = 2 * layers;
        let mut entries = Vec::new();
        let mut comp_ranges = Vec::with_capacity(ncomp);
        let mut comp_cosets = Vec::with_capacity(ncomp);
        let mut comp_offsets = Vec::with_capacity(ncomp);
        for comp in 0..ncomp {
            // 0-based even components are the 1-based odd ones on i + Λ*.
            let native = if comp.is_multiple_of(2) { Coset::PlusI } else { Coset::Zero };
            let (shape, offset) = match special {
                Some(bloch_coset) => {
                    let eff = native.combine(bloch_coset);
                    // Fold the whole Bloch momentum into the effective coset;
                    // the remainder is a lattice vector absorbed by
                    // re-centering the index hexagon, plus rounding residue.
                    let residue = bloch_k + native.offset() - eff.offset();
                    let residue = residue - nearest_lattice(residue);
                    (eff, eff.offset() + residue)
                }
                None => (native, native.offset() + bloch_k),
            };
            let start = entries.len();
            for (m1, m2) in shape.enumerate(trunc) {
                entries.push(BasisEntry {
                    comp: comp as u16,
                    m1,
                    m2,
                });
            }
            comp_ranges.push(start..entries.len());
            comp_cosets.push(shape);
            comp_offsets.push(offset);
        }
        let mut lookup = HashMap::with_capacity(entries.len());
        for (i, e) in entries.iter().enumerate() {
            lookup.insert((e.comp, e.m1, e.m2), i);
        }
        Ok(Self {
            layers,
            trunc,
            bloch_k,
            entries,
            comp_ranges,
            comp_cosets,
            comp_offsets,
            rotation_closed: special.is_some(),
            lookup,
        })
    }

    pub fn layers(&self) -> usize {
        self.layers
    }

    pub fn components(&self) -> usize {
        2 * self.layers
    }

    pub fn trunc(&self) -> u32 {
        self.trunc
    }

    pub fn bloch_k(&self) -> c64 {
        self.bloch_k
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[BasisEntry] {
        &self.entries
    }

    pub fn entry(&self, i: usize) -> BasisEntry {
        self.entries[i]
    }

    /// Entry index range of one component.
    pub fn component_range(&self, comp: usize) -> std::ops::Range<usize> {
        self.comp_ranges[comp].clone()
    }

    /// Effective coset shape of one component.
    pub fn component_coset(&self, comp: usize) -> Coset {
        self.comp_cosets[comp]
    }

    /// Momentum of entry `i`, Bloch offset included.
    pub fn momentum(&self, i: usize) -> c64 {
        let e = self.entries[i];
        self.comp_offsets[e.comp as usize]
            + dual_g1() * c64::new(e.m1 as f64, 0.0)
            + dual_g2() * c64::new(e.m2 as f64, 0.0)
    }

    /// Index of the entry `(comp, m1, m2)`, if present.
    pub fn find(&self, comp: usize, m1: i32, m2: i32) -> Option<usize> {
        self.lookup.get(&(comp as u16, m1, m2)).copied()
    }

    /// Entry ordering by momentum cell `(m1, m2)` first, component second,
    /// as a `new index → old index` permutation. The model operators couple
    /// only neighboring cells, so this ordering makes them banded with
    /// bandwidth O(N · components) instead of O(N²).
    pub fn cell_major_permutation(&self) -> Vec<usize> {
        let mut perm: Vec<usize> = (0..self.len()).collect();
        perm.sort_by_key(|&i| {
            let e = self.entries[i];
            (e.m1, e.m2, e.comp)
        });
        perm
    }

    /// Whether the momentum set is exactly closed under `q ↦ ω̄·q`.
    pub fn rotation_closed(&self) -> bool {
        self.rotation_closed
    }

    /// Index of the constant plane wave (`m = 0`) of a zero-coset component —
    /// the protected vectors `e_{2m}` live there. 0-based component index.
    pub fn constant_index(&self, comp: usize) -> Option<usize> {
        if self.comp_cosets[comp] != Coset::Zero {
            return None;
        }
        self.find(comp, 0, 0)
    }

    /// Unit coordinate vector supported on entry `i`.
    pub fn unit_vector(&self, i: usize) -> Array1<c64> {
        let mut v = Array1::zeros(self.len());
        v[i] = c64::new(1.0, 0.0);
        v
    }

    /// Tag describing this basis as a vector space (used to check that
    /// operators compose on matching spaces).
    pub fn space_tag(&self) -> SpaceTag {
        SpaceTag {
            layers: self.layers,
            trunc: self.trunc,
            bloch_bits: (self.bloch_k.re.to_bits(), self.bloch_k.im.to_bits()),
            dim: self.len(),
            part: SpacePart::Full,
        }
    }

    /// Tag of one component's sub-basis.
    pub fn component_tag(&self, comp: usize) -> SpaceTag {
        let mut tag = self.space_tag();
        tag.dim = self.comp_ranges[comp].len();
        tag.part = SpacePart::Component(comp as u16);
        tag
    }

    /// Tag of the doubled space `C^{2·dim}` that the Hamiltonian acts on.
    pub fn doubled_tag(&self) -> SpaceTag {
        let mut tag = self.space_tag();
        tag.dim = 2 * self.len();
        tag.part = SpacePart::Doubled;
        tag
    }

    /// Rotation weight of a component: the diagonal entry of
    /// `J = diag(1, 1, ω̄, ω, ω̄², ω², ...)`.
    pub fn rotation_weight(comp: usize) -> c64 {
        if comp.is_multiple_of(2) {
            omega_pow(-((comp / 2) as i64))
        } else {
            omega_pow(((comp - 1) / 2) as i64)
        }
    }

    /// Rotation as a weighted permutation: entry `i` maps to row
    /// `perm[i]` with weight `weight[i]`.
    fn rotation_permutation(&self) -> Result<(Vec<usize>, Vec<c64>)> {
        if !self.rotation_closed {
            return Err(McsError::RotationNotClosed(format!(
                "bloch momentum {} is not equivalent to 0 or ±i modulo the dual lattice",
                self.bloch_k
            )));
        }
        let mut perm = Vec::with_capacity(self.len());
        let mut weight = Vec::with_capacity(self.len());
        for e in &self.entries {
            let coset = self.comp_cosets[e.comp as usize];
            let (r1, r2) = coset.rotate_index(e.m1, e.m2);
            let row = self.find(e.comp as usize, r1, r2).ok_or_else(|| {
                McsError::RotationNotClosed(format!(
                    "index ({}, {}) of component {} leaves the truncation",
                    e.m1, e.m2, e.comp
                ))
            })?;
            perm.push(row);
            weight.push(Self::rotation_weight(e.comp as usize));
        }
        Ok((perm, weight))
    }

    /// Dense matrix of the rotation `(C u)(z) = J·u(ω z)`: column `(c, q)` has
    /// its single entry `J_c` at row `(c, ω̄ q)`. Exactly unitary with `C³ = 1`
    /// on a rotation-closed basis.
    pub fn rotation_matrix(&self) -> Result<OperatorMatrix> {
        let (perm, weight) = self.rotation_permutation()?;
        let dim = self.len();
        let mut mat = Array2::zeros((dim, dim));
        for col in 0..dim {
            mat[[perm[col], col]] = weight[col];
        }
        Ok(OperatorMatrix::new(mat, self.space_tag(), self.space_tag()))
    }

    /// Dense matrix of the spectral projector onto rotation sector `p`,
    /// `P_p = (1/3)·(1 + ω^p C + ω^{2p} C²)`.
    pub fn sector_projector(&self, p: SectorLabel) -> Result<OperatorMatrix> {
        let (perm, weight) = self.rotation_permutation()?;
        let dim = self.len();
        let third = c64::new(1.0 / 3.0, 0.0);
        let mut mat = Array2::zeros((dim, dim));
        let w1 = omega_pow(p.index() as i64);
        let w2 = omega_pow(2 * p.index() as i64);
        for col in 0..dim {
            mat[[col, col]] += third;
            // C: single entry J_c at perm[col].
            let r1 = perm[col];
            mat[[r1, col]] += w1 * weight[col] * third;
            // C²: follow the permutation twice, weights multiply.
            let r2 = perm[r1];
            mat[[r2, col]] += w2 * weight[col] * weight[r1] * third;
        }
        Ok(OperatorMatrix::new(mat, self.space_tag(), self.space_tag()))
    }

    /// Orthonormal basis of rotation sector `p`, stored sparsely (at most
    /// three nonzeros per column).
    ///
    /// Rotation-fixed entries (`q = 0`) contribute a unit column when the
    /// component's rotation weight matches the sector; every free orbit
    /// `{x, Cx, C²x}` contributes the normalized column `√3·P_p·x`. Columns
    /// are ordered by orbit representative (lowest entry index), so the
    /// construction is deterministic and exactly orthonormal.
    pub fn sector_basis(&self, p: SectorLabel) -> Result<SectorBasis> {
        let (perm, weight) = self.rotation_permutation()?;
        let dim = self.len();
        let inv_sqrt3 = c64::new(1.0 / 3f64.sqrt(), 0.0);
        let w1 = omega_pow(p.index() as i64);
        let w2 = omega_pow(2 * p.index() as i64);
        let mut cols: Vec<Vec<(usize, c64)>> = Vec::new();
        let mut fixed_cols = Vec::new();
        let mut entry_coeff: Vec<Option<(usize, c64)>> = vec![None; dim];
        let mut visited = vec![false; dim];
        for rep in 0..dim {
            if visited[rep] {
                continue;
            }
            if perm[rep] == rep {
                visited[rep] = true;
                // Fixed entry: C x = J_c x, so x lies in the sector with
                // ω̄^p = J_c.
                if weight[rep] == omega_pow(-(p.index() as i64)) {
                    entry_coeff[rep] = Some((cols.len(), c64::new(1.0, 0.0)));
                    fixed_cols.push((cols.len(), rep));
                    cols.push(vec![(rep, c64::new(1.0, 0.0))]);
                }
                continue;
            }
            let o1 = perm[rep];
            let o2 = perm[o1];
            visited[rep] = true;
            visited[o1] = true;
            visited[o2] = true;
            // √3·P_p·x = (x + ω^p·C x + ω^{2p}·C² x)/√3.
            let c0 = inv_sqrt3;
            let c1 = w1 * weight[rep] * inv_sqrt3;
            let c2 = w2 * weight[rep] * weight[o1] * inv_sqrt3;
            entry_coeff[rep] = Some((cols.len(), c0));
            entry_coeff[o1] = Some((cols.len(), c1));
            entry_coeff[o2] = Some((cols.len(), c2));
            cols.push(vec![(rep, c0), (o1, c1), (o2, c2)]);
        }
        let mut tag = self.space_tag();
        tag.part = SpacePart::Sector(p);
        tag.dim = cols.len();
        Ok(SectorBasis {
            p,
            full_dim: dim,
            cols,
            fixed_cols,
            entry_coeff,
            tag,
        })
    }
}

/// Nearest point of `Λ*` to a momentum (used to fold Bloch offsets).
fn nearest_lattice(q: c64) -> c64 {
    let (g1, g2) = (dual_g1(), dual_g2());
    let det = g1.re * g2.im - g1.im * g2.re;
    let x = (q.re * g2.im - q.im * g2.re) / det;
    let y = (g1.re * q.im - g1.im * q.re) / det;
    g1 * c64::new(x.round(), 0.0) + g2 * c64::new(y.round(), 0.0)
}

// ---------------------------------------------------------------------------
// Tagged operators and sector bases
// ---------------------------------------------------------------------------

/// Which part of the plane-wave structure a space refers to: the full basis,
/// a single component's sub-basis, one rotation sector, or the doubled space
/// the Hamiltonian acts on.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SpacePart {
    Full,
    Component(u16),
    Sector(SectorLabel),
    Doubled,
}

/// Identity of a vector space. Used to catch operator composition on
/// mismatched spaces.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SpaceTag {
    pub layers: usize,
    pub trunc: u32,
    pub bloch_bits: (u64, u64),
    pub dim: usize,
    pub part: SpacePart,
}

impl fmt::Display for SpaceTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "dim {} (n = {}, N = {}", self.dim, self.layers, self.trunc)?;
        match self.part {
            SpacePart::Full => {}
            SpacePart::Component(c) => write!(f, ", component {c}")?,
            SpacePart::Sector(p) => write!(f, ", sector {p}")?,
            SpacePart::Doubled => write!(f, ", doubled")?,
        }
        write!(f, ")")
    }
}

/// Dense complex matrix tagged with its domain and codomain spaces.
#[derive(Clone, Debug)]
pub struct OperatorMatrix {
    mat: Array2<c64>,
    domain: SpaceTag,
    codomain: SpaceTag,
}

impl OperatorMatrix {
    pub fn new(mat: Array2<c64>, codomain: SpaceTag, domain: SpaceTag) -> Self {
        assert_eq!(mat.nrows(), codomain.dim, "row count must match codomain");
        assert_eq!(mat.ncols(), domain.dim, "column count must match domain");
        Self {
            mat,
            domain,
            codomain,
        }
    }

    pub fn matrix(&self) -> &Array2<c64> {
        &self.mat
    }

    pub fn into_matrix(self) -> Array2<c64> {
        self.mat
    }

    pub fn domain(&self) -> SpaceTag {
        self.domain
    }

    pub fn codomain(&self) -> SpaceTag {
        self.codomain
    }

    pub fn apply(&self, v: &Array1<c64>) -> Result<Array1<c64>> {
        if v.len() != self.domain.dim {
            return Err(McsError::SpaceMismatch(format!(
                "vector of length {} applied to operator with domain {}",
                v.len(),
                self.domain
            )));
        }
        Ok(self.mat.dot(v))
    }

    /// Matrix product `self · other`, checking that the spaces line up.
    pub fn compose(&self, other: &OperatorMatrix) -> Result<OperatorMatrix> {
        if self.domain != other.codomain {
            return Err(McsError::SpaceMismatch(format!(
                "compose: domain {} vs codomain {}",
                self.domain, other.codomain
            )));
        }
        Ok(OperatorMatrix::new(
            self.mat.dot(&other.mat),
            self.codomain,
            other.domain,
        ))
    }

    /// Conjugate transpose, with domain and codomain swapped.
    pub fn adjoint(&self) -> OperatorMatrix {
        let mat = self.mat.t().mapv(|z| z.conj());
        OperatorMatrix::new(mat, self.domain, self.codomain)
    }
}

/// Orthonormal basis of one rotation sector, stored sparsely. Columns double
/// as an isometry `S: sector space → full space`; `Sᴴ M S` restricts an
/// operator and is evaluated without densifying `S`.
#[derive(Clone, Debug)]
pub struct SectorBasis {
    p: SectorLabel,
    full_dim: usize,
    /// Sparse columns: each holds at most three `(entry index, coefficient)`.
    cols: Vec<Vec<(usize, c64)>>,
    /// Columns that are unit vectors on rotation-fixed entries:
    /// `(column index, entry index)`.
    fixed_cols: Vec<(usize, usize)>,
    /// For every full-basis entry, the sector column it contributes to (an
    /// entry appears in at most one column of a given sector).
    entry_coeff: Vec<Option<(usize, c64)>>,
    tag: SpaceTag,
}

impl SectorBasis {
    pub fn label(&self) -> SectorLabel {
        self.p
    }

    pub fn dim(&self) -> usize {
        self.cols.len()
    }

    pub fn full_dim(&self) -> usize {
        self.full_dim
    }

    pub fn space_tag(&self) -> SpaceTag {
        self.tag
    }

    /// Columns that are unit vectors on rotation-fixed entries, as
    /// `(column index, full-basis entry index)` pairs.
    pub fn fixed_columns(&self) -> &[(usize, usize)] {
        &self.fixed_cols
    }

    /// Sector column (if any) through which a full-basis entry appears,
    /// with its coefficient in that column.
    pub fn entry_coefficient(&self, entry: usize) -> Option<(usize, c64)> {
        self.entry_coeff[entry]
    }

    /// The `(full-basis entry, coefficient)` support of one sector column.
    pub fn column_entries(&self, col: usize) -> &[(usize, c64)] {
        &self.cols[col]
    }

    /// Dense `full_dim × dim` isometry matrix.
    pub fn to_dense(&self) -> Array2<c64> {
        let mut s = Array2::zeros((self.full_dim, self.dim()));
        for (j, col) in self.cols.iter().enumerate() {
            for &(i, c) in col {
                s[[i, j]] = c;
            }
        }
        s
    }

    /// Restrict a full-space vector into sector coordinates: `Sᴴ v`.
    pub fn restrict_vec(&self, v: &ArrayView1<c64>) -> Array1<c64> {
        let mut out = Array1::zeros(self.dim());
        for (j, col) in self.cols.iter().enumerate() {
            let mut acc = c64::new(0.0, 0.0);
            for &(i, c) in col {
                acc += c.conj() * v[i];
            }
            out[j] = acc;
        }
        out
    }

    /// Expand sector coordinates into the full space: `S x`.
    pub fn expand_vec(&self, x: &ArrayView1<c64>) -> Array1<c64> {
        let mut out = Array1::zeros(self.full_dim);
        for (j, col) in self.cols.iter().enumerate() {
            for &(i, c) in col {
                out[i] += c * x[j];
            }
        }
        out
    }

    /// Restriction `Sᴴ_row · M · S_col` of a dense operator, using sparsity of
    /// the sector columns (O(d²) rather than two dense products).
    pub fn restrict_matrix(row: &SectorBasis, mat: &Array2<c64>, col: &SectorBasis) -> Array2<c64> {
        assert_eq!(mat.nrows(), row.full_dim);
        assert_eq!(mat.ncols(), col.full_dim);
        let mut out = Array2::zeros((row.dim(), col.dim()));
        for (jr, rcol) in row.cols.iter().enumerate() {
            for (jc, ccol) in col.cols.iter().enumerate() {
                let mut acc = c64::new(0.0, 0.0);
                for &(ri, rc) in rcol {
                    for &(ci, cc) in ccol {
                        acc += rc.conj() * mat[[ri, ci]] * cc;
                    }
                }
                out[[jr, jc]] = acc;
            }
        }
        out
    }

    /// Restriction of an operator given in sparse triplet form, in O(nnz).
    pub fn restrict_triplets(
        row: &SectorBasis,
        triplets: &[(usize, usize, c64)],
        col: &SectorBasis,
    ) -> Array2<c64> {
        let mut out = Array2::zeros((row.dim(), col.dim()));
        for &(i, j, v) in triplets {
            if let (Some((jr, rc)), Some((jc, cc))) =
                (row.entry_coeff[i], col.entry_coeff[j])
            {
                out[[jr, jc]] += rc.conj() * v * cc;
            }
        }
        out
    }
}
