//! Assembly of the model operators in the plane-wave basis.
//!
//! The chiral `n`-layer operator is block tridiagonal in the layer index,
//!
//! ```text
//!          ⎛ D(α)   t₁T₊                    ⎞
//!          ⎜ t₁T₋   D(0)   t₂T₊             ⎟
//!  D_n(α) = ⎜        t₂T₋   D(0)   …        ⎟ ,
//!          ⎜               …      t_{n-1}T₊ ⎟
//!          ⎝        t_{n-1}T₋     D(0)      ⎠
//! ```
//!
//! with the twisted-bilayer block `D(α) = [[2D_z̄, αU(z)], [αU(-z), 2D_z̄]]`,
//! free blocks `D(0)`, and tunneling matrices `T₊ = [[1,0],[0,0]]`,
//! `T₋ = [[0,0],[0,1]]`. In the plane-wave basis `2D_z̄` is multiplication by
//! the momentum, and `U(±z)` shifts momenta by `±i·ω^j` with weight `ω^j`.
//!
//! Everything is assembled from sparse triplets first; the dense matrices the
//! public API returns are filled from those, and the spectra code reuses the
//! triplets directly to restrict to rotation sectors without densifying.

use ndarray::prelude::*;
use ndarray_linalg::c64;

use crate::error::{McsError, Result};
use crate::lattice::{omega_pow, Coset, MomentumBasis, OperatorMatrix};

/// Model parameters: layer count `n`, the `n-1` interlayer tunnelings, the
/// chiral coupling `α`, and the hexagonal truncation size.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub layers: usize,
    pub tunnelings: Vec<f64>,
    pub alpha: c64,
    pub trunc: u32,
}

impl ModelConfig {
    pub fn new(layers: usize, tunnelings: Vec<f64>, alpha: c64, trunc: u32) -> Result<Self> {
        let cfg = Self {
            layers,
            tunnelings,
            alpha,
            trunc,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Convenience constructor with unit tunnelings and real coupling.
    pub fn uniform(layers: usize, alpha: f64, trunc: u32) -> Result<Self> {
        Self::new(
            layers,
            vec![1.0; layers.saturating_sub(1)],
            c64::new(alpha, 0.0),
            trunc,
        )
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers == 0 {
            return Err(McsError::Config("layer count must be at least 1".into()));
        }
        if self.tunnelings.len() + 1 != self.layers {
            return Err(McsError::Config(format!(
                "{} layers need {} tunnelings, got {}",
                self.layers,
                self.layers - 1,
                self.tunnelings.len()
            )));
        }
        if self.tunnelings.iter().any(|t| *t == 0.0 || !t.is_finite()) {
            return Err(McsError::Config(
                "tunneling parameters must be nonzero finite reals".into(),
            ));
        }
        if !self.alpha.re.is_finite() || !self.alpha.im.is_finite() {
            return Err(McsError::Config("coupling must be finite".into()));
        }
        Ok(())
    }

    /// Same parameters with a different coupling.
    pub fn with_alpha(&self, alpha: c64) -> Self {
        Self {
            alpha,
            ..self.clone()
        }
    }

    /// Same parameters with a different truncation.
    pub fn with_trunc(&self, trunc: u32) -> Self {
        Self {
            trunc,
            ..self.clone()
        }
    }

    /// Build the momentum basis this configuration works on.
    pub fn basis(&self, bloch_k: c64) -> Result<MomentumBasis> {
        MomentumBasis::build(self.layers, self.trunc, bloch_k)
    }
}

/// A constant plane wave `e_c` supported on the `m = 0` entry of a zero-coset
/// component. The top one (`c = 2n`, 1-based) spans the protected kernel of
/// `D_n(α)` for every `α` when `n ≥ 2`.
#[derive(Clone, Copy, Debug)]
pub struct ConstantVector {
    comp: usize,
    entry: usize,
    dim: usize,
}

impl ConstantVector {
    /// Constant vector of the 0-based component `comp`.
    pub fn new(basis: &MomentumBasis, comp: usize) -> Result<Self> {
        let entry = basis.constant_index(comp).ok_or_else(|| {
            McsError::Config(format!(
                "component {comp} carries no zero momentum (coset {:?})",
                basis.component_coset(comp)
            ))
        })?;
        Ok(Self {
            comp,
            entry,
            dim: basis.len(),
        })
    }

    /// The protected constant `e_{2n}` (1-based numbering), i.e. the last
    /// component's constant. Its column in `D_n(α)` is identically zero for
    /// `n ≥ 2`.
    pub fn top(basis: &MomentumBasis) -> Result<Self> {
        Self::new(basis, 2 * basis.layers() - 1)
    }

    /// 0-based component index.
    pub fn component(self) -> usize {
        self.comp
    }

    /// Index of the supporting entry in the basis.
    pub fn entry_index(self) -> usize {
        self.entry
    }

    pub fn vector(self) -> Array1<c64> {
        let mut v = Array1::zeros(self.dim);
        v[self.entry] = c64::new(1.0, 0.0);
        v
    }
}

// ---------------------------------------------------------------------------
// Sparse assembly
// ---------------------------------------------------------------------------

/// Momentum shifts of the potential `U(z)`, as thirds of the dual basis:
/// `i·ω^j = (s1·g1 + s2·g2)/3` with weight `ω^j`.
const U_SHIFT_THIRDS: [(i64, i64); 3] = [(1, -1), (1, 2), (-2, -1)];

/// Integer index displacement for a momentum shift between two cosets:
/// target index = source index + `index_shift`, valid whenever
/// `ct = cs ⊕ (coset of the shift)`.
fn index_shift(cs: Coset, ct: Coset, shift_thirds: (i64, i64)) -> (i32, i32) {
    let (s1, s2) = cs_third(cs);
    let (t1, t2) = cs_third(ct);
    let d1 = s1 + shift_thirds.0 - t1;
    let d2 = s2 + shift_thirds.1 - t2;
    debug_assert!(d1 % 3 == 0 && d2 % 3 == 0, "incompatible cosets for shift");
    ((d1 / 3) as i32, (d2 / 3) as i32)
}

fn cs_third(c: Coset) -> (i64, i64) {
    match c {
        Coset::Zero => (0, 0),
        Coset::PlusI => (1, -1),
        Coset::MinusI => (-1, 1),
    }
}

/// Triplets of the multiplication operator by `U(sign·z)` mapping component
/// `src` into component `dst` of the same basis. Entries whose shifted
/// momentum leaves the truncation are dropped.
fn potential_triplets(
    basis: &MomentumBasis,
    src: usize,
    dst: usize,
    sign: i8,
) -> Vec<(usize, usize, c64)> {
    let cs = basis.component_coset(src);
    let ct = basis.component_coset(dst);
    let mut out = Vec::new();
    for (j, &(s1, s2)) in U_SHIFT_THIRDS.iter().enumerate() {
        let thirds = if sign >= 0 {
            (s1, s2)
        } else {
            (-s1, -s2)
        };
        let (d1, d2) = index_shift(cs, ct, thirds);
        let weight = omega_pow(j as i64);
        for idx in basis.component_range(src) {
            let e = basis.entry(idx);
            if let Some(row) = basis.find(dst, e.m1 + d1, e.m2 + d2) {
                out.push((row, idx, weight));
            }
        }
    }
    out
}

/// Sparse triplets of `D_n(α) + k` on the given basis (the basis momenta
/// already include the Bloch offset the basis was built at; `k` is added on
/// top of that).
pub fn dn_triplets(
    config: &ModelConfig,
    basis: &MomentumBasis,
    k: c64,
) -> Result<Vec<(usize, usize, c64)>> {
    config.validate()?;
    if basis.layers() != config.layers || basis.trunc() != config.trunc {
        return Err(McsError::SpaceMismatch(format!(
            "basis built for n = {}, N = {} but config has n = {}, N = {}",
            basis.layers(),
            basis.trunc(),
            config.layers,
            config.trunc
        )));
    }
    let dim = basis.len();
    let mut out = Vec::with_capacity(6 * dim);
    // Diagonal: multiplication by the momentum, shifted by k.
    for i in 0..dim {
        out.push((i, i, basis.momentum(i) + k));
    }
    // Interlayer tunnelings at equal momentum: 1-based component pairs
    // (2m-1, 2m+1) and (2m+2, 2m) for m = 1..n-1.
    for (m, &t) in config.tunnelings.iter().enumerate() {
        let t = c64::new(t, 0.0);
        // 0-based: rows 2m, cols 2m+2 (both odd-coset components) ...
        let (row_comp, col_comp) = (2 * m, 2 * m + 2);
        for idx in basis.component_range(col_comp) {
            let e = basis.entry(idx);
            let row = basis
                .find(row_comp, e.m1, e.m2)
                .expect("same-coset components share index sets");
            out.push((row, idx, t));
        }
        // ... and rows 2m+3, cols 2m+1 (both zero-coset components).
        let (row_comp, col_comp) = (2 * m + 3, 2 * m + 1);
        for idx in basis.component_range(col_comp) {
            let e = basis.entry(idx);
            let row = basis
                .find(row_comp, e.m1, e.m2)
                .expect("same-coset components share index sets");
            out.push((row, idx, t));
        }
    }
    // Chiral coupling in the first layer block.
    if config.alpha != c64::new(0.0, 0.0) {
        for (r, c, v) in vn_triplets(basis) {
            out.push((r, c, config.alpha * v));
        }
    }
    Ok(out)
}

/// Sparse triplets of the coupling derivative `V_n = ∂D_n/∂α`: the `U(±z)`
/// blocks between the first two components, zero elsewhere.
pub fn vn_triplets(basis: &MomentumBasis) -> Vec<(usize, usize, c64)> {
    let mut out = potential_triplets(basis, 1, 0, 1);
    out.extend(potential_triplets(basis, 0, 1, -1));
    out
}

fn dense_from_triplets(dim_r: usize, dim_c: usize, trips: &[(usize, usize, c64)]) -> Array2<c64> {
    let mut m = Array2::zeros((dim_r, dim_c));
    for &(r, c, v) in trips {
        m[[r, c]] += v;
    }
    m
}

// ---------------------------------------------------------------------------
// Public dense builders
// ---------------------------------------------------------------------------

/// Multiplication matrix of the potential `U(sign·z)` between the first-layer
/// components: for `sign = +1` it maps the even-coset component (1-based 2)
/// into the odd-coset component (1-based 1), shifting each momentum `q` to
/// `q + i·ω^j` with weight `ω^j`; `sign = -1` is the reverse map with shifts
/// `-i·ω^j`. Shifts leaving the truncation are dropped, so every column has
/// at most three nonzero entries.
pub fn build_potential(basis: &MomentumBasis, sign: i8) -> OperatorMatrix {
    let (src, dst) = if sign >= 0 { (1, 0) } else { (0, 1) };
    let trips = potential_triplets(basis, src, dst, sign);
    let r0 = basis.component_range(dst).start;
    let c0 = basis.component_range(src).start;
    let local: Vec<_> = trips
        .into_iter()
        .map(|(r, c, v)| (r - r0, c - c0, v))
        .collect();
    let mat = dense_from_triplets(
        basis.component_range(dst).len(),
        basis.component_range(src).len(),
        &local,
    );
    OperatorMatrix::new(mat, basis.component_tag(dst), basis.component_tag(src))
}

/// Dense matrix of `D_n(α) + k` on the full basis.
pub fn build_dn(config: &ModelConfig, basis: &MomentumBasis, k: c64) -> Result<OperatorMatrix> {
    let trips = dn_triplets(config, basis, k)?;
    let mat = dense_from_triplets(basis.len(), basis.len(), &trips);
    Ok(OperatorMatrix::new(mat, basis.space_tag(), basis.space_tag()))
}

/// Dense matrix of the coupling derivative `V_n` on the full basis.
pub fn build_vn(basis: &MomentumBasis) -> OperatorMatrix {
    let trips = vn_triplets(basis);
    let mat = dense_from_triplets(basis.len(), basis.len(), &trips);
    OperatorMatrix::new(mat, basis.space_tag(), basis.space_tag())
}

/// Dense Bloch Hamiltonian on the doubled space,
/// `H_k = [[0, (D_n(α)+k)ᴴ], [D_n(α)+k, 0]]`.
///
/// Hermitian by construction, anticommutes with `W = diag(1, -1)` (so its
/// spectrum is symmetric around 0), and its nonnegative eigenvalues are the
/// singular values of `D_n(α) + k`.
pub fn build_hk(config: &ModelConfig, basis: &MomentumBasis, k: c64) -> Result<OperatorMatrix> {
    let trips = dn_triplets(config, basis, k)?;
    let dim = basis.len();
    let mut mat = Array2::zeros((2 * dim, 2 * dim));
    for &(r, c, v) in &trips {
        mat[[dim + r, c]] += v;
        mat[[c, dim + r]] += v.conj();
    }
    Ok(OperatorMatrix::new(mat, basis.doubled_tag(), basis.doubled_tag()))
}

/// Infinity norm of the model operator's diagonal: a cheap, deterministic
/// scale for relative tolerances (`max |q + k|` plus coupling magnitudes).
pub fn operator_scale(config: &ModelConfig, basis: &MomentumBasis, k: c64) -> f64 {
    let mut scale: f64 = 0.0;
    for i in 0..basis.len() {
        scale = scale.max((basis.momentum(i) + k).norm());
    }
    for &t in &config.tunnelings {
        scale = scale.max(t.abs());
    }
    scale.max(3.0 * config.alpha.norm()).max(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{coset_i, dual_g1, dual_g2, omega, SectorLabel};
    use ndarray_linalg::{Eigh, OperationNorm, UPLO, SVD};

    fn norm_inf(m: &Array2<c64>) -> f64 {
        m.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    fn zero_k() -> c64 {
        c64::new(0.0, 0.0)
    }

    #[test]
    fn potential_columns_have_at_most_three_entries() {
        let basis = MomentumBasis::build(1, 3, zero_k()).unwrap();
        for sign in [1i8, -1] {
            let u = build_potential(&basis, sign);
            for col in u.matrix().columns() {
                let nnz = col.iter().filter(|z| z.norm() > 0.0).count();
                assert!(nnz <= 3);
            }
            // Interior columns keep all three images.
            let interior = u
                .matrix()
                .columns()
                .into_iter()
                .filter(|col| col.iter().filter(|z| z.norm() > 0.0).count() == 3)
                .count();
            assert!(interior > 0);
        }
    }

    #[test]
    fn potential_shifts_momenta_with_cube_root_weights() {
        let basis = MomentumBasis::build(1, 3, zero_k()).unwrap();
        let shifts = [coset_i(), coset_i() + dual_g2(), coset_i() - dual_g1()];
        for sign in [1i8, -1] {
            let u = build_potential(&basis, sign);
            let (src, dst) = if sign > 0 { (1, 0) } else { (0, 1) };
            let r0 = basis.component_range(dst).start;
            let c0 = basis.component_range(src).start;
            for (jc, col) in u.matrix().columns().into_iter().enumerate() {
                let q_src = basis.momentum(c0 + jc);
                for (jr, z) in col.iter().enumerate() {
                    if z.norm() == 0.0 {
                        continue;
                    }
                    let dq = basis.momentum(r0 + jr) - q_src;
                    // Find which shift this is and check the weight is ω^j.
                    let j = (0..3)
                        .find(|&j| {
                            let s = if sign > 0 { shifts[j] } else { -shifts[j] };
                            (dq - s).norm() < 1e-12
                        })
                        .expect("momentum shift must be ±i·ω^j");
                    assert!((z - omega_pow(j as i64)).norm() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn potential_respects_cosets() {
        // sign = +1 maps zero-coset momenta into the i + Λ* coset.
        let basis = MomentumBasis::build(1, 2, zero_k()).unwrap();
        let u = build_potential(&basis, 1);
        assert_eq!(u.domain(), basis.component_tag(1));
        assert_eq!(u.codomain(), basis.component_tag(0));
        for idx in basis.component_range(0) {
            let q = basis.momentum(idx) - coset_i();
            // q must be a dual lattice vector.
            let x = pairing_coord(q);
            assert!((x.0 - x.0.round()).abs() < 1e-9 && (x.1 - x.1.round()).abs() < 1e-9);
        }
    }

    fn pairing_coord(q: c64) -> (f64, f64) {
        let (g1, g2) = (dual_g1(), dual_g2());
        let det = g1.re * g2.im - g1.im * g2.re;
        (
            (q.re * g2.im - q.im * g2.re) / det,
            (g1.re * q.im - g1.im * q.re) / det,
        )
    }

    #[test]
    fn potential_rotation_covariance() {
        // C₀·U = ω·U·C₁ where C₀, C₁ are the rotation blocks of the two
        // first-layer components (U(ωz) = ω·U(z)).
        let basis = MomentumBasis::build(1, 3, zero_k()).unwrap();
        let c = basis.rotation_matrix().unwrap();
        let u = build_potential(&basis, 1);
        let r = basis.component_range(0);
        let s = basis.component_range(1);
        let c00 = c.matrix().slice(ndarray::s![r.clone(), r.clone()]).to_owned();
        let c11 = c.matrix().slice(ndarray::s![s.clone(), s.clone()]).to_owned();
        let lhs = c00.dot(u.matrix());
        let rhs = u.matrix().dot(&c11).mapv(|z| omega() * z);
        assert!(norm_inf(&(&lhs - &rhs).to_owned()) < 1e-14);
    }

    #[test]
    fn dn_is_diagonal_plus_tunnelings_at_zero_coupling() {
        let config = ModelConfig::new(2, vec![0.7], zero_k(), 2).unwrap();
        let basis = config.basis(zero_k()).unwrap();
        let k = c64::new(0.21, -0.08);
        let d = build_dn(&config, &basis, k).unwrap();
        for ((r, c), v) in d.matrix().indexed_iter() {
            if r == c {
                assert!((v - (basis.momentum(r) + k)).norm() < 1e-14);
            } else if v.norm() > 0.0 {
                // Only tunneling entries remain, all equal to t₁ at equal
                // momentum between adjacent layers.
                assert!((v - c64::new(0.7, 0.0)).norm() < 1e-15);
                assert!((basis.momentum(r) - basis.momentum(c)).norm() < 1e-12);
                let (cr, cc) = (basis.entry(r).comp, basis.entry(c).comp);
                assert!((cr, cc) == (0, 2) || (cr, cc) == (3, 1));
            }
        }
    }

    #[test]
    fn dn_is_affine_in_alpha() {
        let config0 = ModelConfig::new(2, vec![1.3], zero_k(), 2).unwrap();
        let alpha = c64::new(0.8, -0.3);
        let config = config0.with_alpha(alpha);
        let basis = config.basis(zero_k()).unwrap();
        let k = c64::new(0.11, 0.07);
        let d0 = build_dn(&config0, &basis, k).unwrap();
        let v = build_vn(&basis);
        let d = build_dn(&config, &basis, k).unwrap();
        let expect = d0.matrix() + &v.matrix().mapv(|z| alpha * z);
        // Assembled identically, so the two agree exactly.
        assert_eq!(d.matrix(), &expect);
    }

    #[test]
    fn top_constant_column_vanishes_for_two_or_more_layers() {
        for layers in 2..=4usize {
            let mut tunnelings = vec![1.0; layers - 1];
            tunnelings[0] = 1.7;
            let config =
                ModelConfig::new(layers, tunnelings, c64::new(0.9, 0.2), 2).unwrap();
            let basis = config.basis(zero_k()).unwrap();
            let d = build_dn(&config, &basis, zero_k()).unwrap();
            let e = ConstantVector::top(&basis).unwrap();
            let col = d.matrix().column(e.entry_index());
            assert!(col.iter().all(|z| z.norm() == 0.0), "n = {layers}");
        }
    }

    #[test]
    fn top_constant_column_does_not_vanish_for_one_layer() {
        let config = ModelConfig::uniform(1, 0.9, 2).unwrap();
        let basis = config.basis(zero_k()).unwrap();
        let d = build_dn(&config, &basis, zero_k()).unwrap();
        let e = ConstantVector::top(&basis).unwrap();
        let col = d.matrix().column(e.entry_index());
        let norm: f64 = col.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        // The e_2 column carries the three α·U(z) entries.
        assert!((norm - 0.9 * 3f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn dn_intertwines_rotation() {
        // D C = ω̄ C D on rotation-closed bases.
        for (layers, bloch) in [(1usize, zero_k()), (2, zero_k()), (2, -coset_i())] {
            let config = ModelConfig::uniform(layers, 1.1, 2).unwrap();
            let basis = config.basis(bloch).unwrap();
            let d = build_dn(&config, &basis, zero_k()).unwrap();
            let c = basis.rotation_matrix().unwrap();
            let lhs = d.compose(&c).unwrap();
            let rhs = c.compose(&d).unwrap().into_matrix().mapv(|z| omega().conj() * z);
            assert!(
                norm_inf(&(lhs.matrix() - &rhs).to_owned()) < 1e-13,
                "n = {layers}, bloch = {bloch}"
            );
        }
    }

    #[test]
    fn dn_maps_sectors_down_by_one() {
        let config = ModelConfig::uniform(2, 0.7, 2).unwrap();
        let basis = config.basis(zero_k()).unwrap();
        let d = build_dn(&config, &basis, zero_k()).unwrap();
        for p in 0..3i64 {
            let from = basis.sector_basis(SectorLabel::new(p)).unwrap();
            let dvec = d.matrix().dot(&from.to_dense());
            let total: f64 = dvec.iter().map(|z| z.norm_sqr()).sum();
            // Nothing leaks into the two wrong target sectors...
            for q in [p, p + 1] {
                let wrong = basis.sector_basis(SectorLabel::new(q)).unwrap();
                let leak = wrong.to_dense().t().mapv(|z| z.conj()).dot(&dvec);
                let leaked: f64 = leak.iter().map(|z| z.norm_sqr()).sum();
                assert!(leaked <= 1e-20 * total.max(1.0), "p = {p}, q = {q}");
            }
            // ... and the correct one captures the whole image.
            let right = basis.sector_basis(SectorLabel::new(p - 1)).unwrap();
            let cap = right.to_dense().t().mapv(|z| z.conj()).dot(&dvec);
            let captured: f64 = cap.iter().map(|z| z.norm_sqr()).sum();
            assert!((total - captured).abs() <= 1e-12 * total.max(1.0));
        }
    }

    #[test]
    fn hk_is_hermitian_and_chiral() {
        let config = ModelConfig::new(2, vec![0.9], c64::new(1.2, 0.0), 2).unwrap();
        let basis = config.basis(zero_k()).unwrap();
        let k = c64::new(0.31, 0.17);
        let h = build_hk(&config, &basis, k).unwrap();
        let hm = h.matrix();
        let herm = hm - &hm.t().mapv(|z| z.conj());
        assert!(norm_inf(&herm) < 1e-15);
        // W H W = -H for W = diag(1, -1) on the two halves.
        let dim = basis.len();
        let mut whw = hm.clone();
        for ((r, c), v) in whw.indexed_iter_mut() {
            let sr = if r < dim { 1.0 } else { -1.0 };
            let sc = if c < dim { 1.0 } else { -1.0 };
            *v *= c64::new(sr * sc, 0.0);
        }
        assert!(norm_inf(&(&whw + hm).to_owned()) < 1e-15);
    }

    #[test]
    fn hk_eigenvalues_are_signed_singular_values() {
        let config = ModelConfig::uniform(1, 0.8, 1).unwrap();
        let basis = config.basis(zero_k()).unwrap();
        let k = c64::new(0.2, 0.1);
        let h = build_hk(&config, &basis, k).unwrap();
        let d = build_dn(&config, &basis, k).unwrap();
        let (evals, _) = h.matrix().eigh(UPLO::Lower).unwrap();
        let (_, svals, _) = d.matrix().svd(false, false).unwrap();
        let mut pos: Vec<f64> = evals.iter().copied().filter(|e| *e >= 0.0).collect();
        pos.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut sv: Vec<f64> = svals.to_vec();
        sv.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(pos.len(), sv.len());
        for (a, b) in pos.iter().zip(&sv) {
            assert!((a - b).abs() < 1e-12);
        }
        // Spectrum is even: every eigenvalue has a mirror partner.
        let mut neg: Vec<f64> = evals.iter().copied().filter(|e| *e < 0.0).map(|e| -e).collect();
        neg.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (a, b) in pos.iter().zip(neg.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn constants_block_is_a_jordan_chain_at_zero_coupling() {
        // At α = 0 and small k, the zero-momentum block over the even
        // components is the shift matrix with the tunnelings below the
        // diagonal plus k on it; its smallest singular value has the closed
        // form of a perturbed Jordan block.
        let t = 0.8;
        let config = ModelConfig::new(2, vec![t], zero_k(), 3).unwrap();
        let basis = config.basis(zero_k()).unwrap();
        let k = c64::new(3e-3, 1e-3);
        let d = build_dn(&config, &basis, k).unwrap();
        let (_, svals, _) = d.matrix().svd(false, false).unwrap();
        let smin = svals.iter().cloned().fold(f64::INFINITY, f64::min);
        // σ_min² of [[k, 0], [t, k]] = |k|² + t²/2 - sqrt(t⁴/4 + t²|k|²).
        let k2 = k.norm_sqr();
        let expect = (k2 + t * t / 2.0 - (t.powi(4) / 4.0 + t * t * k2).sqrt()).sqrt();
        assert!((smin - expect).abs() < 1e-12, "smin = {smin}, expect = {expect}");
        // Leading order |k|²/t.
        assert!((smin - k2 / t).abs() < 10.0 * k2 * k2 / t.powi(3));
    }

    #[test]
    fn operator_norm_scale_is_sane() {
        let config = ModelConfig::uniform(1, 1.0, 4).unwrap();
        let basis = config.basis(zero_k()).unwrap();
        let d = build_dn(&config, &basis, zero_k()).unwrap();
        let opnorm = d.matrix().opnorm_one().unwrap();
        let scale = operator_scale(&config, &basis, zero_k());
        assert!(scale <= opnorm * 2.0 && opnorm <= scale * 3.0);
    }

    #[test]
    fn config_validation() {
        assert!(ModelConfig::new(0, vec![], zero_k(), 2).is_err());
        assert!(ModelConfig::new(2, vec![], zero_k(), 2).is_err());
        assert!(ModelConfig::new(2, vec![0.0], zero_k(), 2).is_err());
        assert!(ModelConfig::new(2, vec![1.0], zero_k(), 2).is_ok());
        // Mismatched basis is rejected.
        let config = ModelConfig::uniform(2, 1.0, 3).unwrap();
        let basis = MomentumBasis::build(2, 2, zero_k()).unwrap();
        assert!(build_dn(&config, &basis, zero_k()).is_err());
    }
}
