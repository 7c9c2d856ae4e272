//! Spectral sets of the chiral model.
//!
//! The coupling values where the model degenerates come out of a
//! Birman–Schwinger reduction: `D_n(α) + k` is singular exactly when
//! `−1/α` is an eigenvalue of the compact operator `T = (D_n(0)+k)⁻¹ V_n`.
//! Mode A runs this at a generic Bloch momentum for the single-layer model
//! and yields the magic set; mode B runs it at `k = 0` on one rotation
//! sector (with the protected constants deflated) and yields the candidate
//! Dirac couplings. The module also provides the rank of the zero-group
//! spectral projector of `D_n(α)` and the flat-band residual
//! `max_k σ_min(D_n(α)+k)`.

use std::collections::BTreeMap;

use ndarray::prelude::*;
use ndarray_linalg::{c64, Eig, Inverse};
use serde::{Deserialize, Serialize};

use crate::error::{McsError, Result};
use crate::lattice::{dual_g1, dual_g2, MomentumBasis, SectorBasis, SectorLabel};
use crate::linalg::{smallest_singular_values, ApplyOp, PermutedBanded, SvdFactors};
use crate::operators::{dn_triplets, operator_scale, vn_triplets, ModelConfig};

/// Relative imaginary-part threshold below which a value counts as real.
pub const REAL_TOL: f64 = 1e-6;
/// Absolute tolerance for merging duplicates and for set difference.
pub const MERGE_TOL: f64 = 1e-6;
/// Default generic Bloch momentum for mode A (fixed for reproducibility; a
/// collision check rejects it if it ever hits a lattice momentum).
pub const GENERIC_K: c64 = c64::new(0.3, 0.2);

// ---------------------------------------------------------------------------
// Result types
// ---------------------------------------------------------------------------

/// One candidate coupling with its backward-error estimate
/// `‖(I + αT)v‖/‖v‖`.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct SpectralValue {
    pub re: f64,
    pub im: f64,
    pub residual: f64,
}

impl SpectralValue {
    pub fn value(&self) -> c64 {
        c64::new(self.re, self.im)
    }

    /// Whether the value counts as real for table comparisons.
    pub fn is_real(&self) -> bool {
        self.im.abs() <= REAL_TOL * (1.0 + self.value().norm())
    }
}

/// An ordered set of candidate couplings at one truncation.
///
/// Values are canonical representatives of the exact `α ↔ −α` symmetry
/// (nonnegative real part), sorted by real part when real and by modulus
/// otherwise, with duplicates within [`MERGE_TOL`] merged.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SpectralSet {
    /// `"A"` for the magic set, `"B"` for the Dirac set.
    pub mode: String,
    #[serde(rename = "n")]
    pub layers: usize,
    #[serde(rename = "t")]
    pub tunnelings: Vec<f64>,
    #[serde(rename = "N")]
    pub trunc: u32,
    pub values: Vec<SpectralValue>,
    /// Distance of each value to the nearest value of a coarser-truncation
    /// run (see [`SpectralSet::with_deltas`]); metadata, not serialized.
    #[serde(skip)]
    pub deltas: Vec<f64>,
}

impl SpectralSet {
    pub fn value(&self, i: usize) -> c64 {
        self.values[i].value()
    }

    /// The real members, in order.
    pub fn real_values(&self) -> Vec<f64> {
        self.values
            .iter()
            .filter(|v| v.is_real())
            .map(|v| v.re)
            .collect()
    }

    /// Whether some member lies within `tol` of `x`.
    pub fn contains(&self, x: c64, tol: f64) -> bool {
        self.values.iter().any(|v| (v.value() - x).norm() <= tol)
    }

    /// Attach per-value convergence deltas: the distance from each value to
    /// the nearest value of the same set computed at a coarser truncation.
    pub fn with_deltas(mut self, coarser: &SpectralSet) -> SpectralSet {
        self.deltas = self
            .values
            .iter()
            .map(|v| {
                coarser
                    .values
                    .iter()
                    .map(|w| (v.value() - w.value()).norm())
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        self
    }
}

/// Record of the exact constants removed when restricting `D_n(0)`:
/// the protected kernel vector from the domain sector that contains it and
/// the cokernel constant from the codomain when that is sector 0. Vectors
/// are identified by their 1-based constant index (`2m` ↔ the `m`-th
/// zero-coset component's constant).
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeflationRecord {
    pub domain_sector: u8,
    pub codomain_sector: u8,
    pub domain_removed: Vec<usize>,
    pub codomain_removed: Vec<usize>,
}

impl DeflationRecord {
    /// The removal rule that makes `D_n(0)`: sector j → sector j−1 exactly
    /// invertible: drop the top constant `e_{2n}` from the domain iff its
    /// sector `[1−n]` is `j`, and drop `e_2` from the codomain iff the
    /// codomain is sector 0.
    pub fn standard(layers: usize, j: SectorLabel) -> Self {
        let cod = j.lowered();
        let domain_removed = if SectorLabel::new(1 - layers as i64) == j {
            vec![2 * layers]
        } else {
            Vec::new()
        };
        let codomain_removed = if cod.index() == 0 { vec![2] } else { Vec::new() };
        Self {
            domain_sector: j.index(),
            codomain_sector: cod.index(),
            domain_removed,
            codomain_removed,
        }
    }
}

// ---------------------------------------------------------------------------
// Exact inverse of D_n(0) between rotation sectors
// ---------------------------------------------------------------------------

/// One momentum-orbit block of the restricted `D_n(0)`: rows are codomain
/// sector columns, columns are domain sector columns, both ordered by
/// component. At most `n × n` (the component ladder over one orbit).
struct OrbitBlock {
    dom_cols: Vec<usize>,
    cod_cols: Vec<usize>,
    mat: Array2<c64>,
    inv: Array2<c64>,
}

/// Exact solver for `D_n(0)` restricted from rotation sector `j` to sector
/// `j−1` with the protected constants deflated.
///
/// In sector coordinates the restricted operator is block-diagonal over
/// momentum orbits — each block is a small triangular tunneling ladder — so
/// solves cost O(dim·n²) and are exact to rounding.
pub struct D0Solver {
    domain: SectorBasis,
    codomain: SectorBasis,
    deflation: DeflationRecord,
    blocks: Vec<OrbitBlock>,
    dom_deflated: Option<usize>,
    cod_deflated: Option<usize>,
}

/// Canonical key of the momentum orbit of one sector column: component
/// parity (tunnelings never mix parities) plus the lexicographically
/// smallest index in the rotation orbit.
fn orbit_key(basis: &MomentumBasis, sb: &SectorBasis, col: usize) -> (u8, (i32, i32)) {
    let (entry, _) = sb.column_entries(col)[0];
    let e = basis.entry(entry);
    let coset = basis.component_coset(e.comp as usize);
    let mut best = (e.m1, e.m2);
    let mut cur = best;
    for _ in 0..2 {
        cur = coset.rotate_index(cur.0, cur.1);
        if cur < best {
            best = cur;
        }
    }
    ((e.comp % 2) as u8, best)
}

/// Sector column holding the constant of the 1-based component `2m`, if the
/// sector contains it.
fn constant_column(basis: &MomentumBasis, sb: &SectorBasis, even_1based: usize) -> Option<usize> {
    let comp = even_1based - 1; // 0-based zero-coset component
    let entry = basis.constant_index(comp)?;
    sb.fixed_columns()
        .iter()
        .find(|&&(_, e)| e == entry)
        .map(|&(c, _)| c)
}

/// Domain and codomain column indices sharing one momentum orbit, keyed by
/// `(coset, orbit representative)`.
type OrbitGroups = BTreeMap<(u8, (i32, i32)), (Vec<usize>, Vec<usize>)>;

/// Build the exact restricted inverse of `D_n(0)`: sector `j` → sector
/// `j−1`, deflating the constants listed in `deflation` (which must match
/// [`DeflationRecord::standard`] — anything else indicates a bookkeeping
/// error upstream).
pub fn invert_d0(
    config: &ModelConfig,
    basis: &MomentumBasis,
    j: SectorLabel,
    deflation: DeflationRecord,
) -> Result<D0Solver> {
    config.validate()?;
    if basis.bloch_k() != c64::new(0.0, 0.0) || !basis.rotation_closed() {
        return Err(McsError::Config(
            "restricted inversion needs the rotation-closed k = 0 basis".into(),
        ));
    }
    if deflation != DeflationRecord::standard(config.layers, j) {
        return Err(McsError::Config(format!(
            "deflation record does not match the exact kernel/cokernel constants \
             of the α = 0 operator in sector {}",
            j.index()
        )));
    }
    let domain = basis.sector_basis(j)?;
    let codomain = basis.sector_basis(j.lowered())?;
    let dom_deflated = deflation
        .domain_removed
        .first()
        .map(|&c| {
            constant_column(basis, &domain, c).ok_or_else(|| {
                McsError::Config("protected constant missing from its sector".into())
            })
        })
        .transpose()?;
    let cod_deflated = deflation
        .codomain_removed
        .first()
        .map(|&c| {
            constant_column(basis, &codomain, c).ok_or_else(|| {
                McsError::Config("cokernel constant missing from its sector".into())
            })
        })
        .transpose()?;

    // Group retained columns by momentum orbit.
    let mut groups: OrbitGroups = BTreeMap::new();
    for col in 0..domain.dim() {
        if Some(col) == dom_deflated {
            continue;
        }
        groups.entry(orbit_key(basis, &domain, col)).or_default().0.push(col);
    }
    for col in 0..codomain.dim() {
        if Some(col) == cod_deflated {
            continue;
        }
        groups.entry(orbit_key(basis, &codomain, col)).or_default().1.push(col);
    }

    let d0 = dn_triplets(&config.with_alpha(c64::new(0.0, 0.0)), basis, c64::new(0.0, 0.0))?;
    let full = SectorBasis::restrict_triplets(&codomain, &d0, &domain);
    let full_sq: f64 = full.iter().map(|z| z.norm_sqr()).sum();

    let mut blocks = Vec::with_capacity(groups.len());
    let mut captured_sq = 0.0;
    for (key, (dom_cols, cod_cols)) in groups {
        if dom_cols.len() != cod_cols.len() {
            return Err(McsError::Inconclusive(format!(
                "restricted block {key:?} is {}×{}, not square — deflation bookkeeping bug",
                cod_cols.len(),
                dom_cols.len()
            )));
        }
        if dom_cols.is_empty() {
            continue;
        }
        let sz = dom_cols.len();
        let mut mat = Array2::zeros((sz, sz));
        for (r, &cr) in cod_cols.iter().enumerate() {
            for (c, &cc) in dom_cols.iter().enumerate() {
                mat[[r, c]] = full[[cr, cc]];
            }
        }
        captured_sq += mat.iter().map(|z| z.norm_sqr()).sum::<f64>();
        let inv = mat.inv().map_err(|_| {
            McsError::Inconclusive(format!(
                "singular tunneling block {key:?} — deflation bookkeeping bug"
            ))
        })?;
        blocks.push(OrbitBlock {
            dom_cols,
            cod_cols,
            mat,
            inv,
        });
    }
    // The orbit blocks must account for the whole restricted operator; any
    // leakage means the grouping missed a coupling.
    if (captured_sq - full_sq).abs() > 1e-10 * full_sq.max(1.0) {
        return Err(McsError::Inconclusive(
            "momentum-orbit blocks do not cover the restricted operator".into(),
        ));
    }
    Ok(D0Solver {
        domain,
        codomain,
        deflation,
        blocks,
        dom_deflated,
        cod_deflated,
    })
}

impl D0Solver {
    pub fn domain(&self) -> &SectorBasis {
        &self.domain
    }

    pub fn codomain(&self) -> &SectorBasis {
        &self.codomain
    }

    pub fn deflation(&self) -> &DeflationRecord {
        &self.deflation
    }

    /// Domain sector column removed by deflation, if any.
    pub fn deflated_domain_col(&self) -> Option<usize> {
        self.dom_deflated
    }

    /// Codomain sector column removed by deflation, if any.
    pub fn deflated_codomain_col(&self) -> Option<usize> {
        self.cod_deflated
    }

    /// Solve `D_n(0) x = b` in sector coordinates (`b` over the codomain
    /// sector, result over the domain sector, zero on the deflated column).
    /// Returns the solution and the relative residual over the retained
    /// codomain coordinates; any weight of `b` on the deflated codomain
    /// column lies outside the restricted operator's range and is ignored.
    pub fn solve(&self, b: &ArrayView1<c64>) -> (Array1<c64>, f64) {
        assert_eq!(b.len(), self.codomain.dim(), "codomain coordinate mismatch");
        let mut x = Array1::zeros(self.domain.dim());
        let mut num = 0.0;
        let mut den = 0.0;
        for blk in &self.blocks {
            let bb = Array1::from_iter(blk.cod_cols.iter().map(|&c| b[c]));
            den += bb.iter().map(|z| z.norm_sqr()).sum::<f64>();
            let xb = blk.inv.dot(&bb);
            let r = blk.mat.dot(&xb) - &bb;
            num += r.iter().map(|z| z.norm_sqr()).sum::<f64>();
            for (i, &c) in blk.dom_cols.iter().enumerate() {
                x[c] = xb[i];
            }
        }
        let residual = if den > 0.0 { (num / den).sqrt() } else { 0.0 };
        (x, residual)
    }

    /// Solve with full-space vectors: restrict `b`, solve, expand.
    pub fn solve_full(&self, b: &ArrayView1<c64>) -> (Array1<c64>, f64) {
        let bs = self.codomain.restrict_vec(b);
        let (xs, residual) = self.solve(&bs.view());
        (self.domain.expand_vec(&xs.view()), residual)
    }
}

// ---------------------------------------------------------------------------
// Birman–Schwinger sets
// ---------------------------------------------------------------------------

/// Which reduction to run.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BsMode {
    /// Magic set: single layer, generic Bloch momentum (taken from the
    /// basis), full two-component space.
    A,
    /// Dirac-set contributions: `k = 0`, restricted to one rotation sector
    /// with the protected constants deflated.
    B(SectorLabel),
}

/// Canonical representative of the exact `α ↔ −α` symmetry.
fn canonical(a: c64) -> c64 {
    let tol = 1e-9 * (1.0 + a.norm());
    if a.re < -tol || (a.re.abs() <= tol && a.im < 0.0) {
        -a
    } else {
        a
    }
}

/// Ordering key: real part for (near-)real values, modulus otherwise.
fn sort_key(a: c64) -> f64 {
    if a.im.abs() <= REAL_TOL * (1.0 + a.norm()) {
        a.re
    } else {
        a.norm()
    }
}

/// Sort, canonicalize and merge raw `(α, residual)` pairs.
fn finish_values(raw: Vec<(c64, f64)>) -> Vec<SpectralValue> {
    let mut raw: Vec<(c64, f64)> = raw.into_iter().map(|(a, r)| (canonical(a), r)).collect();
    raw.sort_by(|a, b| {
        sort_key(a.0)
            .partial_cmp(&sort_key(b.0))
            .unwrap()
            .then(a.0.im.partial_cmp(&b.0.im).unwrap())
    });
    let mut out: Vec<SpectralValue> = Vec::new();
    for (a, r) in raw {
        let mut merged = false;
        for prev in out.iter_mut().rev() {
            if (sort_key(a) - sort_key(prev.value())).abs() > 2.0 * MERGE_TOL {
                break;
            }
            if (a - prev.value()).norm() <= MERGE_TOL {
                if r < prev.residual {
                    *prev = SpectralValue {
                        re: a.re,
                        im: a.im,
                        residual: r,
                    };
                }
                merged = true;
                break;
            }
        }
        if !merged {
            out.push(SpectralValue {
                re: a.re,
                im: a.im,
                residual: r,
            });
        }
    }
    out
}

/// Eigenvalues of the Birman–Schwinger operator mapped to coupling values.
///
/// Mode A: `T = (D(0)+k)⁻¹ V` at the basis Bloch momentum `k` for the
/// single-layer model. `T` is block-antidiagonal over the two components, so
/// its nonzero eigenvalues come in `±λ` pairs with `λ² ∈ Spec(T₂₁T₁₂)`; the
/// eigenproblem runs on one component at a quarter of the cost.
///
/// Mode B(j): `T = (D_n(0)|sector j)⁻¹ V_n` through [`invert_d0`].
///
/// Every eigenvalue `λ` yields the coupling `α = −1/λ` with residual
/// `‖(I + αT)v‖/‖v‖`.
pub fn birman_schwinger_set(
    config: &ModelConfig,
    basis: &MomentumBasis,
    mode: BsMode,
) -> Result<SpectralSet> {
    match mode {
        BsMode::A => mode_a_set(config, basis),
        BsMode::B(j) => mode_b_set(config, basis, j),
    }
}

fn mode_a_set(config: &ModelConfig, basis: &MomentumBasis) -> Result<SpectralSet> {
    if config.layers != 1 {
        return Err(McsError::Config(
            "the generic-momentum reduction runs on the single-layer model".into(),
        ));
    }
    if basis.layers() != 1 || basis.trunc() != config.trunc {
        return Err(McsError::SpaceMismatch("basis does not match config".into()));
    }
    let dim = basis.len();
    let diag: Vec<c64> = (0..dim).map(|i| basis.momentum(i)).collect();
    let min_abs = diag.iter().map(|q| q.norm()).fold(f64::INFINITY, f64::min);
    if min_abs < 1e-6 {
        return Err(McsError::GenericKCollision(min_abs));
    }
    let r0 = basis.component_range(0);
    let r1 = basis.component_range(1);
    let (d0, d1) = (r0.len(), r1.len());
    // T = (D(0)+k)⁻¹V splits into T₁₂: comp 1 → comp 0 and T₂₁: comp 0 → 1,
    // stored as sparse column lists in local component indices.
    let mut t12: Vec<Vec<(usize, c64)>> = vec![Vec::new(); d1];
    let mut t21: Vec<Vec<(usize, c64)>> = vec![Vec::new(); d0];
    for (r, c, v) in vn_triplets(basis) {
        let w = v / diag[r];
        if r0.contains(&r) {
            t12[c - r1.start].push((r - r0.start, w));
        } else {
            t21[c - r0.start].push((r - r1.start, w));
        }
    }
    // P = T₂₁T₁₂ on component 1 (at most 9 entries per column).
    let mut p = Array2::<c64>::zeros((d1, d1));
    for (j, col) in t12.iter().enumerate() {
        for &(r, w) in col {
            for &(s, u) in &t21[r] {
                p[[s, j]] += u * w;
            }
        }
    }
    let (mu, wvecs) = p.eig()?;
    // Honest eigen-residuals in one pass: R = P·W.
    let pw = p.dot(&wvecs);
    let mu_max = mu.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let mut raw = Vec::new();
    for (i, &m) in mu.iter().enumerate() {
        if m.norm() <= 1e-13 * mu_max {
            continue; // numerical kernel of the squared operator
        }
        let lambda = m.sqrt();
        let alpha = -1.0 / lambda;
        let w = wvecs.column(i);
        // Full eigenvector (v₀, v₁) = (T₁₂w/λ, w); the component-0 part of
        // (I + αT)v vanishes identically, leaving ‖w − Pw/μ‖.
        let mut v0 = Array1::<c64>::zeros(d0);
        for (jc, col) in t12.iter().enumerate() {
            let wj = w[jc];
            if wj == c64::new(0.0, 0.0) {
                continue;
            }
            for &(r, wt) in col {
                v0[r] += wt * wj;
            }
        }
        v0.mapv_inplace(|z| z / lambda);
        let v0_sq: f64 = v0.iter().map(|z| z.norm_sqr()).sum();
        let w_sq = w.iter().map(|z| z.norm_sqr()).sum::<f64>();
        let mut res_sq = 0.0;
        for s in 0..d1 {
            res_sq += (w[s] - pw[[s, i]] / m).norm_sqr();
        }
        let residual = (res_sq / (v0_sq + w_sq)).sqrt();
        raw.push((alpha, residual));
    }
    Ok(SpectralSet {
        mode: "A".into(),
        layers: config.layers,
        tunnelings: config.tunnelings.clone(),
        trunc: config.trunc,
        values: finish_values(raw),
        deltas: Vec::new(),
    })
}

fn mode_b_set(config: &ModelConfig, basis: &MomentumBasis, j: SectorLabel) -> Result<SpectralSet> {
    let solver = invert_d0(config, basis, j, DeflationRecord::standard(config.layers, j))?;
    let vres = SectorBasis::restrict_triplets(solver.codomain(), &vn_triplets(basis), solver.domain());
    let dd = solver.domain().dim();
    let mut t = Array2::<c64>::zeros((dd, dd));
    for c in 0..dd {
        if Some(c) == solver.deflated_domain_col() {
            continue;
        }
        let (x, _) = solver.solve(&vres.column(c));
        t.column_mut(c).assign(&x);
    }
    let (lam, wvecs) = t.eig()?;
    let tw = t.dot(&wvecs);
    let lam_max = lam.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let mut raw = Vec::new();
    for (i, &l) in lam.iter().enumerate() {
        if l.norm() <= 1e-13 * lam_max {
            continue;
        }
        let alpha = -1.0 / l;
        let w = wvecs.column(i);
        let mut res_sq = 0.0;
        let mut w_sq = 0.0;
        for s in 0..dd {
            res_sq += (w[s] + alpha * tw[[s, i]]).norm_sqr();
            w_sq += w[s].norm_sqr();
        }
        raw.push((alpha, (res_sq / w_sq).sqrt()));
    }
    Ok(SpectralSet {
        mode: "B".into(),
        layers: config.layers,
        tunnelings: config.tunnelings.clone(),
        trunc: config.trunc,
        values: finish_values(raw),
        deltas: Vec::new(),
    })
}

/// The Dirac set: sector-0 Birman–Schwinger values at `k = 0` minus the
/// magic set (which shows up there too, since a flat band degenerates every
/// momentum including `k = 0`).
pub fn dirac_set(config: &ModelConfig) -> Result<SpectralSet> {
    let basis = config.basis(c64::new(0.0, 0.0))?;
    let b0 = birman_schwinger_set(config, &basis, BsMode::B(SectorLabel::new(0)))?;
    let a_cfg = ModelConfig::new(1, Vec::new(), config.alpha, config.trunc)?;
    let a_basis = a_cfg.basis(GENERIC_K)?;
    let a_set = birman_schwinger_set(&a_cfg, &a_basis, BsMode::A)?;
    let values: Vec<SpectralValue> = b0
        .values
        .into_iter()
        .filter(|v| !a_set.contains(v.value(), MERGE_TOL))
        .collect();
    Ok(SpectralSet {
        mode: "B".into(),
        layers: config.layers,
        tunnelings: config.tunnelings.clone(),
        trunc: config.trunc,
        values,
        deltas: Vec::new(),
    })
}

// ---------------------------------------------------------------------------
// Spectral projector rank and flat-band residual
// ---------------------------------------------------------------------------

/// Rank of the spectral projector onto the zero eigenvalue group of
/// `D_n(α)` on the `k = 0` basis: `Π = −(1/2πi)∮(D_n(α)−z)⁻¹ dz` over the
/// circle `|z| = radius`, by 16-node trapezoidal quadrature (exponentially
/// accurate for periodic integrands). Returns the rank and the deviation of
/// the quadrature trace from the nearest integer.
pub fn projector_rank(
    config: &ModelConfig,
    basis: &MomentumBasis,
    radius: f64,
) -> Result<(usize, f64)> {
    if radius.is_nan() || radius <= 0.0 {
        return Err(McsError::Config("contour radius must be positive".into()));
    }
    let trips = dn_triplets(config, basis, c64::new(0.0, 0.0))?;
    let dim = basis.len();
    let mut d = Array2::<c64>::zeros((dim, dim));
    for &(r, c, v) in &trips {
        d[[r, c]] += v;
    }
    const NODES: usize = 16;
    let mut trace = c64::new(0.0, 0.0);
    for node in 0..NODES {
        let theta = std::f64::consts::TAU * node as f64 / NODES as f64;
        let z = c64::new(radius, 0.0) * c64::new(theta.cos(), theta.sin());
        let mut m = d.clone();
        for i in 0..dim {
            m[[i, i]] -= z;
        }
        let minv = m
            .inv()
            .map_err(|_| McsError::ContourCollision(f64::INFINITY))?;
        let tr: c64 = (0..dim).map(|i| minv[[i, i]]).sum();
        trace -= z * tr / NODES as f64;
    }
    let nearest = trace.re.round();
    let deviation = (trace - c64::new(nearest, 0.0)).norm();
    if deviation > 0.1 || nearest < 0.0 {
        return Err(McsError::ContourCollision(deviation));
    }
    Ok((nearest as usize, deviation))
}

/// Offset uniform grid over the Brillouin-zone fundamental cell,
/// `k = ((i+½)g₁ + (j+½)g₂)/div`. The half-step offsets keep the grid away
/// from the momenta where bands are pinned to zero for every coupling, so
/// the flat-band residual measures genuine flatness.
pub fn bz_grid(div: usize) -> Vec<c64> {
    let (g1, g2) = (dual_g1(), dual_g2());
    let mut out = Vec::with_capacity(div * div);
    for i in 0..div {
        for j in 0..div {
            let x = (i as f64 + 0.5) / div as f64;
            let y = (j as f64 + 0.5) / div as f64;
            out.push(g1 * c64::new(x, 0.0) + g2 * c64::new(y, 0.0));
        }
    }
    out
}

/// `max_k σ_min(D_n(α)+k)` over the given momenta: zero (to truncation
/// accuracy) exactly when the first band is flat. Large truncations go
/// through a banded factorization in cell-major order; small ones through a
/// dense decomposition.
pub fn flat_band_residual(config: &ModelConfig, k_grid: &[c64]) -> Result<f64> {
    let basis = config.basis(c64::new(0.0, 0.0))?;
    let dim = basis.len();
    let perm = basis.cell_major_permutation();
    let mut worst = 0.0_f64;
    for &k in k_grid {
        let trips = dn_triplets(config, &basis, k)?;
        let smin = if dim <= 600 {
            let mut d = Array2::<c64>::zeros((dim, dim));
            for &(r, c, v) in &trips {
                d[[r, c]] += v;
            }
            SvdFactors::new(&d)?.smallest(1)[0]
        } else {
            let scale = operator_scale(config, &basis, k);
            let solver = PermutedBanded::new(dim, &trips, perm.clone(), scale)?;
            let op = ApplyOp::Triplets {
                dim,
                triplets: &trips,
            };
            smallest_singular_values(&op, &solver, 1)?.0[0]
        };
        worst = worst.max(smin);
    }
    Ok(worst)
}
