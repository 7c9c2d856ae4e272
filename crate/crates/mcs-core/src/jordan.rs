//! Kernel vectors, Jordan chains and effective Hamiltonians at `k = 0`.
//!
//! Away from the degenerate couplings, `D_n(α)` at the pinned momentum has a
//! one-dimensional kernel spanned by the protected constant and an `n`-step
//! chain of generalized kernel vectors above it; on the Dirac set the kernel
//! jumps to dimension two and the chain shortens by one step. The chain
//! vectors and their Gram matrix against the adjoint chain carry the leading
//! band coefficients, which this module extracts through bordered
//! (Schur-complement) systems.

use std::io::Write as _;
use std::path::Path;

use ndarray::prelude::*;
use ndarray_linalg::{c64, Factorize, Solve};
use serde::{Deserialize, Serialize};

use crate::error::{McsError, Result};
use crate::lattice::{MomentumBasis, SectorBasis, SectorLabel};
use crate::linalg::{inner, vec_norm, SvdFactors};
use crate::operators::{build_hk, dn_triplets, operator_scale, ConstantVector, ModelConfig};

/// Relative kernel threshold: singular values below `KER_TOL · ‖D‖` count as
/// zero, and anything in the decade above them makes the kernel dimension
/// ambiguous.
pub const KER_TOL: f64 = 1e-8;
/// Relative tolerance on the chain defect `‖D u_{m+1} − u_m‖ / ‖u_m‖`.
pub const CHAIN_TOL: f64 = 1e-9;

// ---------------------------------------------------------------------------
// Sector blocks of D_n(α) at k = 0
// ---------------------------------------------------------------------------

/// The three rotation-sector blocks `B_j = D_n(α)` restricted to maps
/// sector `j` → sector `j − 1`, kept both dense (for residuals) and
/// factored. The sector bases are isometries, so the singular values of
/// `D_n(α)` are the union over the blocks and kernel/cokernel vectors
/// expand back to the full space.
struct SectorBlocks {
    sectors: Vec<SectorBasis>,
    mats: Vec<Array2<c64>>,
    svds: Vec<SvdFactors>,
    scale: f64,
}

impl SectorBlocks {
    fn new(config: &ModelConfig, basis: &MomentumBasis) -> Result<Self> {
        let trips = dn_triplets(config, basis, c64::new(0.0, 0.0))?;
        let sectors: Vec<SectorBasis> = (0..3)
            .map(|j| basis.sector_basis(SectorLabel::new(j)))
            .collect::<Result<_>>()?;
        let mats: Vec<Array2<c64>> = (0..3)
            .map(|j| SectorBasis::restrict_triplets(&sectors[(j + 2) % 3], &trips, &sectors[j]))
            .collect();
        let svds = mats.iter().map(SvdFactors::new).collect::<Result<_>>()?;
        let scale = operator_scale(config, basis, c64::new(0.0, 0.0));
        Ok(Self {
            sectors,
            mats,
            svds,
            scale,
        })
    }

    fn dom(&self, j: usize) -> &SectorBasis {
        &self.sectors[j]
    }

    fn cod(&self, j: usize) -> &SectorBasis {
        &self.sectors[(j + 2) % 3]
    }

    fn ker_tol(&self) -> f64 {
        KER_TOL * self.scale
    }

    /// Guard the kernel decision: no singular value may sit in the decade
    /// above the zero threshold.
    fn check_gap(&self) -> Result<()> {
        let tol = self.ker_tol();
        for (j, svd) in self.svds.iter().enumerate() {
            for &s in svd.values() {
                if s > tol && s < 10.0 * tol {
                    return Err(McsError::KernelAmbiguous(format!(
                        "singular value {s:.3e} of the sector-{j} block lies inside \
                         the ambiguous decade above {tol:.3e}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Minimal-norm solve of `D x = b` on one sector block: `b` lives in
    /// sector `j − 1`, the solution in sector `j`. Returns the full-space
    /// solution and the relative residual `‖B_j x − b‖ / ‖b‖`.
    fn solve_step(&self, j: usize, b: &Array1<c64>) -> (Array1<c64>, f64) {
        let bs = self.cod(j).restrict_vec(&b.view());
        let x = self.svds[j].solve_min_norm(&bs.view(), self.ker_tol());
        let r = &self.mats[j].dot(&x) - &bs;
        let rel = vec_norm(&r.view()) / vec_norm(&bs.view()).max(f64::MIN_POSITIVE);
        (self.dom(j).expand_vec(&x.view()), rel)
    }

    /// Minimal-norm solve of `D* x = b`: `b` in sector `j`, solution in
    /// sector `j − 1`.
    fn solve_adjoint_step(&self, j: usize, b: &Array1<c64>) -> (Array1<c64>, f64) {
        let bs = self.dom(j).restrict_vec(&b.view());
        let x = self.svds[j].solve_min_norm_adjoint(&bs.view(), self.ker_tol());
        // Bᴴx computed as (xᴴB)ᴴ to avoid materializing the adjoint.
        let xc = x.mapv(|z| z.conj());
        let ax = xc.dot(&self.mats[j]).mapv(|z| z.conj());
        let r = &ax - &bs;
        let rel = vec_norm(&r.view()) / vec_norm(&bs.view()).max(f64::MIN_POSITIVE);
        (self.cod(j).expand_vec(&x.view()), rel)
    }
}

/// Rotate a vector's phase so its largest-modulus entry is positive real,
/// making decomposition output deterministic and comparison-friendly.
fn canonical_phase(mut v: Array1<c64>) -> Array1<c64> {
    let mut best = 0usize;
    let mut mag = -1.0;
    for (i, z) in v.iter().enumerate() {
        if z.norm() > mag {
            mag = z.norm();
            best = i;
        }
    }
    if mag > 0.0 {
        let phase = v[best] / v[best].norm();
        v.mapv_inplace(|z| z / phase);
    }
    v
}

// ---------------------------------------------------------------------------
// Kernel pair
// ---------------------------------------------------------------------------

/// Orthonormal kernel and cokernel bases of `D_n(α)` at `k = 0`, tagged
/// with the rotation sector of each vector.
pub struct KernelPair {
    pub kernel: Vec<Array1<c64>>,
    pub cokernel: Vec<Array1<c64>>,
    pub kernel_sectors: Vec<u8>,
    pub cokernel_sectors: Vec<u8>,
    pub dim: usize,
}

/// Kernel and cokernel of `D_n(α)` at the pinned momentum, computed per
/// rotation sector. The kernel dimension `d ∈ {1, 2}` distinguishes generic
/// couplings from the Dirac set; for `n ≥ 2` the protected constant is
/// recognized and returned exactly, ordered first.
pub fn kernel_pair(config: &ModelConfig) -> Result<KernelPair> {
    config.validate()?;
    let basis = config.basis(c64::new(0.0, 0.0))?;
    let blocks = SectorBlocks::new(config, &basis)?;
    blocks.check_gap()?;
    kernel_pair_from(&blocks, config, &basis)
}

fn kernel_pair_from(
    blocks: &SectorBlocks,
    config: &ModelConfig,
    basis: &MomentumBasis,
) -> Result<KernelPair> {
    let tol = blocks.ker_tol();
    let mut kernel = Vec::new();
    let mut kernel_sectors = Vec::new();
    let mut cokernel = Vec::new();
    let mut cokernel_sectors = Vec::new();
    for j in 0..3 {
        for vk in blocks.svds[j].kernel(tol) {
            kernel.push(canonical_phase(blocks.dom(j).expand_vec(&vk.view())));
            kernel_sectors.push(j as u8);
        }
        for vc in blocks.svds[j].cokernel(tol) {
            cokernel.push(canonical_phase(blocks.cod(j).expand_vec(&vc.view())));
            cokernel_sectors.push(((j + 2) % 3) as u8);
        }
    }
    if kernel.len() != cokernel.len() {
        return Err(McsError::KernelAmbiguous(format!(
            "kernel dimension {} differs from cokernel dimension {} — index-zero \
             structure lost to truncation",
            kernel.len(),
            cokernel.len()
        )));
    }
    if kernel.is_empty() || kernel.len() > 2 {
        return Err(McsError::KernelAmbiguous(format!(
            "kernel dimension {} outside the expected range {{1, 2}}",
            kernel.len()
        )));
    }
    // Snap the protected constant: for n ≥ 2 the kernel contains e_{2n}
    // exactly. Rotate the computed vectors in its sector so the constant is
    // one exact basis vector, orthogonalize the rest against it, and order
    // the constant first.
    if config.layers >= 2 {
        let protected = SectorLabel::new(1 - config.layers as i64).index();
        let e2n = ConstantVector::top(basis)?;
        let idx = e2n.entry_index();
        let slots: Vec<usize> = (0..kernel.len())
            .filter(|&i| kernel_sectors[i] == protected)
            .collect();
        let weight: f64 = slots.iter().map(|&i| kernel[i][idx].norm_sqr()).sum();
        if (weight - 1.0).abs() > 1e-6 {
            return Err(McsError::KernelAmbiguous(format!(
                "kernel span carries weight {weight:.6} on the top constant; \
                 expected the constant to lie in the kernel exactly"
            )));
        }
        let e2n_vec = e2n.vector();
        let mut rest: Vec<Array1<c64>> = Vec::new();
        for &i in &slots {
            let c = kernel[i][idx];
            let mut w = kernel[i].clone();
            w.zip_mut_with(&e2n_vec, |a, &b| *a -= c * b);
            for prev in &rest {
                let ip = inner(&w.view(), &prev.view());
                w.zip_mut_with(prev, |a, &b| *a -= ip * b);
            }
            let nw = vec_norm(&w.view());
            if nw > 1e-6 {
                w.mapv_inplace(|z| z / nw);
                rest.push(canonical_phase(w));
            }
        }
        if rest.len() != slots.len() - 1 {
            return Err(McsError::KernelAmbiguous(
                "kernel span in the protected sector did not split cleanly around \
                 the top constant"
                    .into(),
            ));
        }
        let mut reordered = vec![(e2n_vec, protected)];
        for w in rest {
            reordered.push((w, protected));
        }
        for i in 0..kernel.len() {
            if kernel_sectors[i] != protected {
                reordered.push((kernel[i].clone(), kernel_sectors[i]));
            }
        }
        kernel = reordered.iter().map(|(v, _)| v.clone()).collect();
        kernel_sectors = reordered.iter().map(|&(_, s)| s).collect();
    }
    let dim = kernel.len();
    Ok(KernelPair {
        kernel,
        cokernel,
        kernel_sectors,
        cokernel_sectors,
        dim,
    })
}

// ---------------------------------------------------------------------------
// Jordan chains
// ---------------------------------------------------------------------------

fn cpair(z: c64) -> [f64; 2] {
    [z.re, z.im]
}

/// Chains, Gram matrix and (on the Dirac set) the gauge-fixed extra kernel
/// pair of `D_n(α)` at `k = 0`.
///
/// Normalization: `u_1` is the unit protected constant, each iterate solves
/// `D u_{m+1} = u_m` with minimal norm (hence orthogonal to the kernel), and
/// the adjoint chain does the same for `D*` starting from the unit cokernel
/// vector. All reported coefficients are relative to this convention.
#[derive(Serialize, Deserialize)]
pub struct JordanChainData {
    #[serde(rename = "n")]
    pub layers: usize,
    #[serde(rename = "t")]
    pub tunnelings: Vec<f64>,
    pub alpha: [f64; 2],
    #[serde(rename = "N")]
    pub trunc: u32,
    /// Kernel dimension `d`: 1 generic, 2 on the Dirac set.
    pub kernel_dim: usize,
    /// `n` for `d = 1`, `n − 1` for `d = 2`.
    pub chain_len: usize,
    /// `gram[a][b] = ⟨u_{a+1}, v_{b+1}⟩` as `[re, im]` pairs.
    pub gram: Vec<Vec<[f64; 2]>>,
    /// Relative defects `‖D u_{m+1} − u_m‖ / ‖u_m‖` per chain step.
    pub chain_residuals: Vec<f64>,
    /// The adjoint-chain analogues.
    pub adjoint_residuals: Vec<f64>,
    /// `⟨u′, v′⟩` after gauge fixing, when `d = 2`.
    pub extra_pairing: Option<[f64; 2]>,
    pub normalization: String,
    #[serde(skip)]
    pub u: Vec<Array1<c64>>,
    #[serde(skip)]
    pub v: Vec<Array1<c64>>,
    /// Gauge-fixed extra kernel vector (`d = 2` only).
    #[serde(skip)]
    pub u_extra: Option<Array1<c64>>,
    #[serde(skip)]
    pub v_extra: Option<Array1<c64>>,
}

impl JordanChainData {
    pub fn gram_entry(&self, a: usize, b: usize) -> c64 {
        let [re, im] = self.gram[a][b];
        c64::new(re, im)
    }

    /// Scale-free dichotomy indicator `|⟨u_n, v_1⟩| / (‖u_n‖·‖v_n‖)`.
    ///
    /// The raw corner pairing depends on the chain normalization — under
    /// minimal-norm iterates it diverges like the reciprocal distance to
    /// the Dirac set, because the top iterates blow up along the incoming
    /// extra kernel plane. This ratio is invariant under rescaling the
    /// chain vectors and tends to zero (linearly in the distance) as the
    /// coupling approaches a degenerate value, which is the numerical
    /// expression of the pairing dichotomy.
    pub fn dichotomy_indicator(&self) -> f64 {
        let corner = self.gram_entry(self.chain_len - 1, 0).norm();
        let nu = vec_norm(&self.u[self.chain_len - 1].view());
        let nv = vec_norm(&self.v[self.chain_len - 1].view());
        corner / (nu * nv).max(f64::MIN_POSITIVE)
    }

    /// Dump the chain vectors as interleaved little-endian `(re, im)` f64
    /// pairs, one file per vector, plus a JSON sidecar describing the
    /// layout. Returns the sidecar path.
    pub fn dump_vectors(&self, dir: &Path) -> Result<std::path::PathBuf> {
        std::fs::create_dir_all(dir)?;
        let mut files = Vec::new();
        let mut write = |name: String, vec: &Array1<c64>| -> Result<()> {
            let path = dir.join(&name);
            let mut buf = Vec::with_capacity(vec.len() * 16);
            for z in vec.iter() {
                buf.extend_from_slice(&z.re.to_le_bytes());
                buf.extend_from_slice(&z.im.to_le_bytes());
            }
            std::fs::File::create(&path)?.write_all(&buf)?;
            files.push(name);
            Ok(())
        };
        for (i, u) in self.u.iter().enumerate() {
            write(format!("u{}.bin", i + 1), u)?;
        }
        for (i, v) in self.v.iter().enumerate() {
            write(format!("v{}.bin", i + 1), v)?;
        }
        if let Some(u) = &self.u_extra {
            write("u_extra.bin".into(), u)?;
        }
        if let Some(v) = &self.v_extra {
            write("v_extra.bin".into(), v)?;
        }
        let sidecar = serde_json::json!({
            "layout": "complex128 little-endian interleaved (re, im)",
            "basis": {
                "n": self.layers,
                "N": self.trunc,
                "ordering": "components in layer order, hexagonal index set per component",
            },
            "entries": self.u.first().map_or(0, |u| u.len()),
            "files": files,
        });
        let path = dir.join("vectors.json");
        std::fs::write(&path, serde_json::to_string_pretty(&sidecar)?)?;
        Ok(path)
    }
}

/// Build the Jordan chain data at `k = 0`.
///
/// Both chains are computed per rotation sector (each step is a small
/// least-squares problem on one block), the Gram matrix against the adjoint
/// chain is recorded, and on the Dirac set the extra kernel pair is
/// gauge-fixed against the chains. Flat-band couplings are outside this
/// construction's domain; classify the bands first if the coupling is
/// unvetted.
pub fn jordan_chain(config: &ModelConfig) -> Result<JordanChainData> {
    config.validate()?;
    let basis = config.basis(c64::new(0.0, 0.0))?;
    let blocks = SectorBlocks::new(config, &basis)?;
    blocks.check_gap()?;
    let pair = kernel_pair_from(&blocks, config, &basis)?;
    let n = config.layers;
    let d = pair.dim;
    if d == 2 && n == 1 {
        return Err(McsError::Config(
            "chain construction for the single-layer model needs a simple kernel".into(),
        ));
    }
    let chain_len = if d == 1 { n } else { n - 1 };

    // Anchors. Generic: u_1 = protected constant, v_1 = the unique cokernel
    // vector (sector 0). Dirac set: the extra kernel vector sits in sector
    // 0, and the chain anchor v_1 moves to the sector-2 cokernel vector,
    // which pairs with the shortened chain; the sector-0 cokernel vector
    // becomes the extra v′.
    let u1 = pair.kernel[0].clone();
    let u1_sector = pair.kernel_sectors[0] as i64;
    let (v1, v1_sector, extra_raw) = if d == 1 {
        (pair.cokernel[0].clone(), pair.cokernel_sectors[0] as i64, None)
    } else {
        if pair.kernel_sectors[1] != 0 {
            return Err(McsError::KernelAmbiguous(format!(
                "extra kernel vector found in sector {} instead of 0",
                pair.kernel_sectors[1]
            )));
        }
        let find_cok = |sector: u8| -> Result<Array1<c64>> {
            pair.cokernel_sectors
                .iter()
                .position(|&s| s == sector)
                .map(|i| pair.cokernel[i].clone())
                .ok_or_else(|| {
                    McsError::KernelAmbiguous(format!(
                        "no cokernel vector in sector {sector} at a kernel-dimension-2 coupling"
                    ))
                })
        };
        let u_extra = pair.kernel[1].clone();
        (find_cok(2)?, 2, Some((u_extra, find_cok(0)?)))
    };

    // Forward chain: u_{m+1} solves D u_{m+1} = u_m, one sector up per step.
    let mut u = vec![u1];
    let mut chain_residuals = Vec::new();
    for m in 1..chain_len {
        let j = SectorLabel::new(u1_sector + m as i64).index() as usize;
        let (x, r) = blocks.solve_step(j, &u[m - 1]);
        if r > CHAIN_TOL {
            return Err(McsError::ChainBreak {
                step: m + 1,
                expected: chain_len,
                residual: r,
            });
        }
        chain_residuals.push(r);
        u.push(x);
    }
    // Adjoint chain: v_{m+1} solves D* v_{m+1} = v_m, one sector down.
    let mut v = vec![v1];
    let mut adjoint_residuals = Vec::new();
    for m in 1..chain_len {
        let j = SectorLabel::new(v1_sector - (m as i64 - 1)).index() as usize;
        let (x, r) = blocks.solve_adjoint_step(j, &v[m - 1]);
        if r > CHAIN_TOL {
            return Err(McsError::ChainBreak {
                step: m + 1,
                expected: chain_len,
                residual: r,
            });
        }
        adjoint_residuals.push(r);
        v.push(x);
    }

    let gram: Vec<Vec<[f64; 2]>> = u
        .iter()
        .map(|ua| {
            v.iter()
                .map(|vb| cpair(inner(&ua.view(), &vb.view())))
                .collect()
        })
        .collect();

    // Gauge fixing on the Dirac set: remove the chain shadow so the extra
    // pair decouples from the chain Gram block.
    let (u_extra, v_extra, extra_pairing) = if let Some((up, vp)) = extra_raw {
        let (uf, vf) = gauge_fix_pair(&u, &v, up, vp)?;
        let pairing = inner(&uf.view(), &vf.view());
        if pairing.norm() < 1e-10 {
            return Err(McsError::TruncationFailure(pairing.norm()));
        }
        (Some(uf), Some(vf), Some(cpair(pairing)))
    } else {
        (None, None, None)
    };

    Ok(JordanChainData {
        layers: n,
        tunnelings: config.tunnelings.clone(),
        alpha: [config.alpha.re, config.alpha.im],
        trunc: config.trunc,
        kernel_dim: d,
        chain_len,
        gram,
        chain_residuals,
        adjoint_residuals,
        extra_pairing,
        normalization: "unit protected constant u1; minimal-norm iterates D u_{m+1} = u_m; \
                        adjoint chain from the unit cokernel vector; extra pair unit after \
                        gauge correction"
            .into(),
        u,
        v,
        u_extra,
        v_extra,
    })
}

/// The gauge correction: subtract chain components so that
/// `⟨u′, v_{n−1}⟩ = ⟨u_{n−1}, v′⟩ = 0`, then renormalize.
fn gauge_fix_pair(
    u: &[Array1<c64>],
    v: &[Array1<c64>],
    mut up: Array1<c64>,
    mut vp: Array1<c64>,
) -> Result<(Array1<c64>, Array1<c64>)> {
    let last = u.len() - 1; // index of u_{n−1}, v_{n−1}
    let denom_u = inner(&u[0].view(), &v[last].view());
    if denom_u.norm() < 1e-10 {
        return Err(McsError::TruncationFailure(denom_u.norm()));
    }
    let cu = inner(&up.view(), &v[last].view()) / denom_u;
    up.zip_mut_with(&u[0], |a, &b| *a -= cu * b);
    let denom_v = inner(&u[last].view(), &v[0].view());
    if denom_v.norm() < 1e-10 {
        return Err(McsError::TruncationFailure(denom_v.norm()));
    }
    // ⟨u_{n−1}, ṽ′⟩ = 0 needs the conjugate coefficient on v_1.
    let cv = (inner(&u[last].view(), &vp.view()) / denom_v).conj();
    vp.zip_mut_with(&v[0], |a, &b| *a -= cv * b);
    let nu = vec_norm(&up.view());
    let nv = vec_norm(&vp.view());
    if nu < 1e-10 || nv < 1e-10 {
        return Err(McsError::TruncationFailure(nu.min(nv)));
    }
    up.mapv_inplace(|z| z / nu);
    vp.mapv_inplace(|z| z / nv);
    Ok((up, vp))
}

/// The gauge-fixed extra kernel pair `(u′, v′)` at a Dirac-set coupling.
pub fn gauge_fix(config: &ModelConfig) -> Result<(Array1<c64>, Array1<c64>)> {
    let data = jordan_chain(config)?;
    match (data.u_extra, data.v_extra) {
        (Some(u), Some(v)) => Ok((u, v)),
        _ => Err(McsError::Config(
            "gauge fixing needs a kernel of dimension 2 (a Dirac-set coupling)".into(),
        )),
    }
}

/// Leading cone coefficients at a Dirac-set coupling: the bands open as
/// `E_1 ≈ |⟨u_{n−1}, v_1⟩| · |k|^{n−1}` and `E_2 ≈ |⟨u′, v′⟩| · |k|` under
/// this module's normalization convention.
pub fn cone_coefficients(config: &ModelConfig) -> Result<(f64, f64)> {
    let data = jordan_chain(config)?;
    if data.kernel_dim != 2 {
        return Err(McsError::Config(
            "cone coefficients are defined on the Dirac set (kernel dimension 2)".into(),
        ));
    }
    let chain = data.gram_entry(data.chain_len - 1, 0).norm();
    let extra = data
        .extra_pairing
        .map(|[re, im]| c64::new(re, im).norm())
        .unwrap_or(0.0);
    Ok((chain, extra))
}

// ---------------------------------------------------------------------------
// Effective (Schur-complement) blocks
// ---------------------------------------------------------------------------

/// A 2×2 effective Hamiltonian block at `z = 0` and the residual of the
/// bordered solve that produced it.
#[derive(Serialize, Deserialize)]
pub struct EffectiveBlock {
    /// Entries as `[re, im]`, row-major.
    pub f_minus_plus: [[[f64; 2]; 2]; 2],
    pub residual: f64,
}

impl EffectiveBlock {
    pub fn matrix(&self) -> Array2<c64> {
        let mut m = Array2::zeros((2, 2));
        for r in 0..2 {
            for c in 0..2 {
                let [re, im] = self.f_minus_plus[r][c];
                m[[r, c]] = c64::new(re, im);
            }
        }
        m
    }

    fn from_matrix(m: &Array2<c64>, residual: f64) -> Self {
        let mut f = [[[0.0; 2]; 2]; 2];
        for r in 0..2 {
            for c in 0..2 {
                f[r][c] = cpair(m[[r, c]]);
            }
        }
        Self {
            f_minus_plus: f,
            residual,
        }
    }
}

/// Assemble and solve one bordered system `[[H_k, R_−], [R_+, 0]]` at
/// `z = 0` and return the bottom-right 2×2 block of its inverse — the
/// effective Hamiltonian data for the plane spanned by the outer border.
/// An optional inner border pair deflates the other kernel plane first.
fn bordered_block(
    h: &Array2<c64>,
    outer: (&Array1<c64>, &Array1<c64>),
    inner_pair: Option<(&Array1<c64>, &Array1<c64>)>,
    scale: f64,
) -> Result<EffectiveBlock> {
    let dim = h.nrows();
    let extra = 2 + if inner_pair.is_some() { 2 } else { 0 };
    let total = dim + extra;
    let mut m = Array2::<c64>::zeros((total, total));
    m.slice_mut(s![..dim, ..dim]).assign(h);
    fn place(m: &mut Array2<c64>, col: usize, vec: &Array1<c64>) {
        for (i, &z) in vec.iter().enumerate() {
            m[[i, col]] = z;
            m[[col, i]] = z.conj();
        }
    }
    if let Some((phi_p, psi_p)) = inner_pair {
        place(&mut m, dim, phi_p);
        place(&mut m, dim + 1, psi_p);
    }
    let outer_at = total - 2;
    place(&mut m, outer_at, outer.0);
    place(&mut m, outer_at + 1, outer.1);

    let f = m.factorize().map_err(|_| {
        McsError::Inconclusive(
            "bordered system is singular — momentum outside the effective-Hamiltonian disk"
                .into(),
        )
    })?;
    let mut block = Array2::zeros((2, 2));
    let mut residual = 0.0f64;
    for c in 0..2 {
        let mut rhs = Array1::<c64>::zeros(total);
        rhs[outer_at + c] = c64::new(1.0, 0.0);
        let x = f.solve(&rhs)?;
        let r = &m.dot(&x) - &rhs;
        residual = residual.max(vec_norm(&r.view()) / scale.max(1.0));
        block[[0, c]] = x[outer_at];
        block[[1, c]] = x[outer_at + 1];
    }
    if residual > 1e-9 {
        return Err(McsError::Inconclusive(format!(
            "bordered solve residual {residual:.3e} exceeds budget — momentum outside \
             the effective-Hamiltonian disk"
        )));
    }
    Ok(EffectiveBlock::from_matrix(&block, residual))
}

/// Effective 2×2 blocks of the Bloch Hamiltonian near the pinned momentum:
/// the Schur complement `F_{−+}(z = 0, k)` of the bordered system built on
/// the kernel pair. Generic couplings give one block whose off-diagonal
/// entries carry `k^n ⟨u_n, v_1⟩`; Dirac-set couplings give two blocks —
/// the chain plane opening like `|k|^{n−1}` and the extra plane opening
/// like `|k|`.
pub fn effective_block(config: &ModelConfig, k: c64) -> Result<Vec<EffectiveBlock>> {
    let data = jordan_chain(config)?;
    let basis = config.basis(c64::new(0.0, 0.0))?;
    let h = build_hk(config, &basis, k)?.into_matrix();
    let scale = operator_scale(config, &basis, k);
    let dim = basis.len();
    // Doubled-space kernel directions: φ = (u, 0), ψ = (0, v).
    let doubled = |top: Option<&Array1<c64>>, bottom: Option<&Array1<c64>>| {
        let mut z = Array1::<c64>::zeros(2 * dim);
        if let Some(t) = top {
            z.slice_mut(s![..dim]).assign(t);
        }
        if let Some(b) = bottom {
            z.slice_mut(s![dim..]).assign(b);
        }
        z
    };
    let phi = doubled(Some(&data.u[0]), None);
    let psi = doubled(None, Some(&data.v[0]));
    if data.kernel_dim == 1 {
        let block = bordered_block(&h, (&phi, &psi), None, scale)?;
        return Ok(vec![block]);
    }
    let up = data
        .u_extra
        .as_ref()
        .expect("kernel dimension 2 carries the extra pair");
    let vp = data
        .v_extra
        .as_ref()
        .expect("kernel dimension 2 carries the extra pair");
    let phi_p = doubled(Some(up), None);
    let psi_p = doubled(None, Some(vp));
    let chain_block = bordered_block(&h, (&phi, &psi), Some((&phi_p, &psi_p)), scale)?;
    let extra_block = bordered_block(&h, (&phi_p, &psi_p), Some((&phi, &psi)), scale)?;
    Ok(vec![chain_block, extra_block])
}
