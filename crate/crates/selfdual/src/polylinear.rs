//! Pointwise linear algebra of polysymplectic structures.
//!
//! A [`PolyStructure`] is `s` two-forms on `ℝ^{n(s+1)}`, optionally with a
//! metric. The central objects are standard bases (simultaneous normal forms
//! `ω_j = Σ_i v_i* ∧ (w^j_i)*`), metric compatibility, and the dualizing form
//! `ω_D = Σ_i (w¹_i)* ∧ (w²_i)*` for `s = 2`.
//!
//! Basis matrices list their columns as `v_1..v_n, w¹_1..w¹_n, …, w^s_n`.

use nalgebra::DMatrix;

use crate::error::{check_dim, GeometryError, Result};
use crate::exterior::{AxisLayout, AxisSet, MetricMatrix, Multivector};
use crate::linalg::{column_space, complement, hstack, null_space, rank, vstack, RANK_TOL};

/// Tolerance for normal-form and orthonormality checks.
pub const NORMAL_FORM_TOL: f64 = 1e-9;

#[derive(Clone, Debug)]
pub struct PolyStructure {
    n: usize,
    s: usize,
    omegas: Vec<Multivector>,
    metric: Option<MetricMatrix>,
    rank_tol: f64,
}

impl PolyStructure {
    pub fn new(n: usize, s: usize, omegas: Vec<Multivector>) -> Result<Self> {
        if n == 0 || s == 0 {
            return Err(GeometryError::InvalidParameter(
                "n and s must be positive".into(),
            ));
        }
        check_dim(s, omegas.len())?;
        let d = n * (s + 1);
        for w in &omegas {
            check_dim(d, w.dim())?;
            if w.terms().any(|(k, _)| k.grade() != 2) {
                return Err(GeometryError::NotPolysymplectic(
                    "forms must have grade 2".into(),
                ));
            }
        }
        Ok(PolyStructure {
            n,
            s,
            omegas,
            metric: None,
            rank_tol: RANK_TOL,
        })
    }

    /// `ω_j = Σ_i dx_i ∧ dy^j_i` with the Euclidean metric.
    pub fn normal_form(n: usize, s: usize) -> Self {
        let l = AxisLayout::new(n, s);
        let d = l.dim();
        let omegas = (1..=s)
            .map(|j| {
                Multivector::from_terms(
                    d,
                    (0..n).map(|i| (AxisSet((1 << l.x(i)) | (1 << l.y(j, i))), 1.0)),
                )
            })
            .collect();
        PolyStructure {
            n,
            s,
            omegas,
            metric: Some(MetricMatrix::identity(d)),
            rank_tol: RANK_TOL,
        }
    }

    pub fn with_metric(mut self, g: MetricMatrix) -> Result<Self> {
        check_dim(self.dim(), g.dim())?;
        self.metric = Some(g);
        Ok(self)
    }

    pub fn without_metric(mut self) -> Self {
        self.metric = None;
        self
    }

    pub fn with_rank_tol(mut self, tol: f64) -> Self {
        self.rank_tol = tol;
        self
    }

    pub fn n(&self) -> usize {
        self.n
    }
    pub fn s(&self) -> usize {
        self.s
    }
    pub fn dim(&self) -> usize {
        self.n * (self.s + 1)
    }
    pub fn layout(&self) -> AxisLayout {
        AxisLayout::new(self.n, self.s)
    }
    pub fn omegas(&self) -> &[Multivector] {
        &self.omegas
    }
    pub fn omega(&self, j: usize) -> &Multivector {
        &self.omegas[j - 1]
    }
    pub fn metric(&self) -> Option<&MetricMatrix> {
        self.metric.as_ref()
    }
    pub fn rank_tol(&self) -> f64 {
        self.rank_tol
    }

    pub fn form_matrices(&self) -> Vec<DMatrix<f64>> {
        self.omegas.iter().map(|w| w.to_antisymmetric()).collect()
    }

    /// Pull forms and metric back along the linear map `M`.
    pub fn pullback(&self, m: &DMatrix<f64>) -> Result<Self> {
        let omegas = self
            .omegas
            .iter()
            .map(|w| crate::exterior::pullback(m, w))
            .collect::<Result<Vec<_>>>()?;
        let metric = match &self.metric {
            Some(g) => Some(MetricMatrix::new(m.transpose() * g.matrix() * m)?),
            None => None,
        };
        Ok(PolyStructure {
            omegas,
            metric,
            ..self.clone()
        })
    }

    fn require_metric(&self) -> Result<&MetricMatrix> {
        self.metric
            .as_ref()
            .ok_or_else(|| GeometryError::Precondition("structure has no metric".into()))
    }
}

/// Columns `v_1..v_n, w¹_1..w^s_n` realising the normal form.
#[derive(Clone, Debug, PartialEq)]
pub struct StandardBasis {
    matrix: DMatrix<f64>,
    n: usize,
    s: usize,
    orthonormal: bool,
}

impl StandardBasis {
    pub fn new(matrix: DMatrix<f64>, n: usize, s: usize, orthonormal: bool) -> Result<Self> {
        check_dim(n * (s + 1), matrix.nrows())?;
        check_dim(n * (s + 1), matrix.ncols())?;
        Ok(StandardBasis {
            matrix,
            n,
            s,
            orthonormal,
        })
    }
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }
    pub fn n(&self) -> usize {
        self.n
    }
    pub fn s(&self) -> usize {
        self.s
    }
    pub fn is_orthonormal(&self) -> bool {
        self.orthonormal
    }
    pub fn v(&self, i: usize) -> Vec<f64> {
        self.matrix.column(i).iter().copied().collect()
    }
    pub fn w(&self, j: usize, i: usize) -> Vec<f64> {
        self.matrix.column(j * self.n + i).iter().copied().collect()
    }
    /// Rows are the dual coframe `v_i*, (w^j_i)*`.
    pub fn coframe(&self) -> Result<DMatrix<f64>> {
        self.matrix
            .clone()
            .try_inverse()
            .ok_or_else(|| GeometryError::Degenerate("basis matrix is singular".into()))
    }

    /// Replace `(v, w¹, …, w^s)` by `(vQ, w¹Q, …, w^sQ)`.
    pub fn reframe(&self, q: &DMatrix<f64>) -> Result<Self> {
        check_dim(self.n, q.nrows())?;
        let mut m = self.matrix.clone();
        for block in 0..=self.s {
            let cols = self.matrix.columns(block * self.n, self.n) * q;
            m.columns_mut(block * self.n, self.n).copy_from(&cols);
        }
        Ok(StandardBasis {
            matrix: m,
            ..self.clone()
        })
    }

    /// `max_j ‖Eᵀ Ω_j E − N_j‖_max`.
    pub fn normal_form_residual(&self, p: &PolyStructure) -> f64 {
        p.form_matrices()
            .iter()
            .enumerate()
            .map(|(j, om)| {
                let got = self.matrix.transpose() * om * &self.matrix;
                (got - normal_form_matrix(self.n, self.s, j + 1)).amax()
            })
            .fold(0.0, f64::max)
    }

    /// `‖Eᵀ g E − I‖_max`.
    pub fn gram_residual(&self, g: &MetricMatrix) -> f64 {
        let d = self.matrix.nrows();
        (self.matrix.transpose() * g.matrix() * &self.matrix - DMatrix::identity(d, d)).amax()
    }
}

/// Matrix of `Σ_i v_i* ∧ (w^j_i)*` in the basis order of [`StandardBasis`].
pub fn normal_form_matrix(n: usize, s: usize, j: usize) -> DMatrix<f64> {
    let d = n * (s + 1);
    let mut m = DMatrix::zeros(d, d);
    for i in 0..n {
        m[(i, j * n + i)] = 1.0;
        m[(j * n + i, i)] = -1.0;
    }
    m
}

/// Orthonormal basis of `ω^⊥ = {v : ι_v ω = 0}`.
pub fn kernel(omega: &Multivector, tol: f64) -> DMatrix<f64> {
    null_space(&omega.to_antisymmetric(), tol)
}

struct Kernels {
    /// Orthonormal basis of `Σ_j ω_j^⊥`.
    sum: DMatrix<f64>,
    /// `F_j = ∩_{k≠j} ω_k^⊥`, orthonormal bases.
    blocks: Vec<DMatrix<f64>>,
}

fn kernels(p: &PolyStructure) -> Result<Kernels> {
    let (n, s, tol) = (p.n, p.s, p.rank_tol);
    let mats = p.form_matrices();
    let mut ks = Vec::with_capacity(s);
    for (j, om) in mats.iter().enumerate() {
        let r = rank(om, tol);
        if r != 2 * n {
            return Err(GeometryError::NotPolysymplectic(format!(
                "omega_{} has rank {r}, expected {}",
                j + 1,
                2 * n
            )));
        }
        ks.push(null_space(om, tol));
    }
    let refs: Vec<&DMatrix<f64>> = ks.iter().collect();
    let sum = column_space(&hstack(&refs), tol);
    // For s = 1 the form is symplectic and its kernel is trivial.
    let expected = if s == 1 { 0 } else { n * s };
    if sum.ncols() != expected {
        return Err(GeometryError::NotPolysymplectic(format!(
            "sum of kernels has dimension {}, expected {}",
            sum.ncols(),
            expected
        )));
    }
    let mut blocks = Vec::with_capacity(s);
    for j in 0..s {
        let others: Vec<&DMatrix<f64>> = mats
            .iter()
            .enumerate()
            .filter(|(k, _)| *k != j)
            .map(|(_, m)| m)
            .collect();
        let f = if others.is_empty() {
            DMatrix::identity(p.dim(), p.dim())
        } else {
            null_space(&vstack(&others), tol)
        };
        if s > 1 && f.ncols() != n {
            return Err(GeometryError::NotPolysymplectic(format!(
                "fibre block {} has dimension {}, expected {n}",
                j + 1,
                f.ncols()
            )));
        }
        blocks.push(f);
    }
    Ok(Kernels { sum, blocks })
}

/// Orthonormal basis of the fibre block `∩_{k≠j} ω_k^⊥` (`j` is 1-based, `s ≥ 2`).
pub fn fibre_basis(p: &PolyStructure, j: usize) -> Result<DMatrix<f64>> {
    if p.s < 2 || j == 0 || j > p.s {
        return Err(GeometryError::InvalidParameter(format!(
            "fibre block {j} with s = {}",
            p.s
        )));
    }
    Ok(kernels(p)?.blocks.swap_remove(j - 1))
}

/// Orthonormal basis of `span(w)` chosen by Gram–Schmidt with column
/// pivoting on the projected coordinate axes: each step keeps the axis with
/// the largest remaining component (lowest index on ties), and columns are
/// returned in pivot-axis order. The result does not depend on how `w`
/// itself was rotated.
fn pivoted_basis(w: &DMatrix<f64>) -> DMatrix<f64> {
    let (d, k) = w.shape();
    let mut cand: Vec<nalgebra::DVector<f64>> = (0..d).map(|a| w * w.row(a).transpose()).collect();
    let mut chosen: Vec<(usize, nalgebra::DVector<f64>)> = Vec::with_capacity(k);
    for _ in 0..k {
        let mut best = 0;
        let mut best_norm = -1.0;
        for (a, c) in cand.iter().enumerate() {
            let nrm = c.norm();
            if nrm > best_norm * (1.0 + 1e-12) {
                best = a;
                best_norm = nrm;
            }
        }
        let mut q = cand[best].clone() / best_norm;
        let lead = q
            .iter()
            .copied()
            .fold(0.0_f64, |a, b| if b.abs() > a.abs() { b } else { a });
        if lead < 0.0 {
            q.neg_mut();
        }
        for c in cand.iter_mut() {
            let proj = q.dot(c);
            c.axpy(-proj, &q, 1.0);
        }
        chosen.push((best, q));
    }
    chosen.sort_by_key(|(a, _)| *a);
    let mut out = DMatrix::zeros(d, k);
    for (col, (_, q)) in chosen.iter().enumerate() {
        out.set_column(col, q);
    }
    out
}

fn invert(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    let scale = m.amax().max(f64::MIN_POSITIVE);
    let sv = m.singular_values();
    let smin = sv.iter().fold(f64::INFINITY, |a, &b| a.min(b));
    if smin <= 1e-12 * scale {
        return Err(GeometryError::Degenerate(format!("{what} is singular")));
    }
    m.clone()
        .try_inverse()
        .ok_or_else(|| GeometryError::Degenerate(format!("{what} is singular")))
}

fn g_orthonormalize(v: &DMatrix<f64>, g: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let gram = v.transpose() * g * v;
    let chol = gram.cholesky().ok_or(GeometryError::NotPositiveDefinite)?;
    let linv = invert(&chol.l(), "Cholesky factor")?;
    Ok(v * linv.transpose())
}

/// Symplectic basis of a nondegenerate 2-form by deflation.
///
/// Each step takes the pivoted direction `e` of the remaining subspace,
/// pairs it with `f ∝` the projection of `Ωᵀe` onto that subspace (so `ω(e, f) > 0`), and continues on the
/// ω-orthogonal complement of `span{e, f}` inside the remaining subspace.
fn symplectic_deflation(omega: &DMatrix<f64>, tol: f64) -> Result<DMatrix<f64>> {
    let d = omega.nrows();
    let n = d / 2;
    let smax = omega.amax();
    let mut rest = DMatrix::<f64>::identity(d, d);
    let mut out = DMatrix::zeros(d, d);
    for i in 0..n {
        let e = pivoted_basis(&rest).column(0).into_owned();
        let oe = &rest * (rest.transpose() * (omega.transpose() * &e));
        let norm = oe.norm();
        if norm <= tol * smax {
            return Err(GeometryError::NotPolysymplectic(
                "form is degenerate".into(),
            ));
        }
        let f = &oe / norm;
        let pairing = (e.transpose() * omega * &f)[(0, 0)];
        out.set_column(i, &e);
        out.set_column(n + i, &(f / pairing));
        if i + 1 < n {
            let mut cons = DMatrix::zeros(2, d);
            cons.set_row(0, &(omega.transpose() * &e).transpose());
            cons.set_row(1, &(omega.transpose() * out.column(n + i)).transpose());
            let inside = null_space(&(cons * &rest), tol);
            rest = &rest * inside;
        }
    }
    Ok(out)
}

/// A standard polysymplectic basis of `p` (orthonormal only by accident).
pub fn standard_basis(p: &PolyStructure) -> Result<StandardBasis> {
    let (n, s) = (p.n, p.s);
    let d = p.dim();
    let mats = p.form_matrices();
    let k = kernels(p)?;
    let matrix = if s == 1 {
        symplectic_deflation(&mats[0], p.rank_tol)?
    } else {
        let w = match &p.metric {
            Some(g) => null_space(&(k.sum.transpose() * g.matrix()), p.rank_tol),
            None => complement(&k.sum, p.rank_tol),
        };
        if w.ncols() != n {
            return Err(GeometryError::NotPolysymplectic(
                "complement has wrong dimension".into(),
            ));
        }
        let v0 = pivoted_basis(&w);
        let mut ws = Vec::with_capacity(s);
        for (j, om) in mats.iter().enumerate() {
            let m = v0.transpose() * om * &k.blocks[j];
            ws.push(&k.blocks[j] * invert(&m, "pairing of v with fibre block")?);
        }
        let mut v = v0.clone();
        for (j, om) in mats.iter().enumerate() {
            let a = v0.transpose() * om * &v0;
            v += &ws[j] * (a * 0.5).transpose();
        }
        let mut blocks: Vec<&DMatrix<f64>> = vec![&v];
        blocks.extend(ws.iter());
        hstack(&blocks)
    };
    let basis = StandardBasis {
        matrix,
        n,
        s,
        orthonormal: false,
    };
    if rank(&basis.matrix, p.rank_tol) != d {
        return Err(GeometryError::Degenerate("basis is not invertible".into()));
    }
    let res = basis.normal_form_residual(p);
    if res > NORMAL_FORM_TOL {
        return Err(GeometryError::Degenerate(format!(
            "normal form residual {res:e}"
        )));
    }
    Ok(basis)
}

#[derive(Clone, Debug)]
pub struct CompatibilityVerdict {
    pub compatible: bool,
    pub residual: f64,
    pub basis: StandardBasis,
}

/// Decide metric compatibility by building the canonical candidate basis.
pub fn is_compatible(p: &PolyStructure) -> Result<CompatibilityVerdict> {
    let g = p.require_metric()?;
    let gm = g.matrix();
    let (n, s) = (p.n, p.s);
    let mats = p.form_matrices();
    let k = kernels(p)?;
    let matrix = if s == 1 {
        let chol = gm
            .clone()
            .cholesky()
            .ok_or(GeometryError::NotPositiveDefinite)?;
        let l = chol.l();
        let linv = invert(&l, "Cholesky factor")?;
        let flat = &linv * &mats[0] * linv.transpose();
        linv.transpose() * symplectic_deflation(&flat, p.rank_tol)?
    } else {
        let w = null_space(&(k.sum.transpose() * gm), p.rank_tol);
        if w.ncols() != n {
            return Err(GeometryError::NotPolysymplectic(
                "complement has wrong dimension".into(),
            ));
        }
        let v = g_orthonormalize(&pivoted_basis(&w), gm)?;
        let ginv = invert(gm, "metric")?;
        let mut blocks = vec![v.clone()];
        for om in &mats {
            blocks.push(&ginv * om.transpose() * &v);
        }
        let refs: Vec<&DMatrix<f64>> = blocks.iter().collect();
        hstack(&refs)
    };
    let mut basis = StandardBasis {
        matrix,
        n,
        s,
        orthonormal: false,
    };
    let residual = basis.normal_form_residual(p).max(basis.gram_residual(g));
    let compatible = residual <= NORMAL_FORM_TOL;
    basis.orthonormal = compatible;
    Ok(CompatibilityVerdict {
        compatible,
        residual,
        basis,
    })
}

fn compatible_basis(p: &PolyStructure) -> Result<StandardBasis> {
    let v = is_compatible(p)?;
    if v.compatible {
        Ok(v.basis)
    } else {
        Err(GeometryError::NotCompatible(v.residual))
    }
}

/// `Σ_i (w¹_i)* ∧ (w²_i)*` read off a given standard basis.
pub fn dualizing_form_from_basis(b: &StandardBasis) -> Result<Multivector> {
    if b.s != 2 {
        return Err(GeometryError::InvalidParameter(
            "dualizing form needs s = 2".into(),
        ));
    }
    let co = b.coframe()?;
    let d = co.nrows();
    let mut m = DMatrix::zeros(d, d);
    for i in 0..b.n {
        let phi = co.row(b.n + i).transpose();
        let psi = co.row(2 * b.n + i).transpose();
        m += &phi * psi.transpose() - &psi * phi.transpose();
    }
    Ok(Multivector::from_antisymmetric(&m))
}

pub fn dualizing_form(p: &PolyStructure) -> Result<Multivector> {
    if p.s != 2 {
        return Err(GeometryError::InvalidParameter(
            "dualizing form needs s = 2".into(),
        ));
    }
    dualizing_form_from_basis(&compatible_basis(p)?)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Deformation {
    Alpha,
    Beta,
    Lambda,
}

/// The one-parameter deformations `α_t`, `β_t`, `λ_t`.
pub fn deform(p: &PolyStructure, kind: Deformation, t: f64) -> Result<PolyStructure> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(GeometryError::InvalidParameter(format!(
            "deformation parameter {t} <= 0"
        )));
    }
    if kind != Deformation::Lambda && p.s != 2 {
        return Err(GeometryError::InvalidParameter(
            "alpha/beta need s = 2".into(),
        ));
    }
    let b = compatible_basis(p)?;
    let n = p.n;
    let rt = t.sqrt();
    // Column scalings of the new orthonormal basis, per block (v, w¹, w², …).
    let block_scale = |block: usize| -> f64 {
        match (kind, block) {
            (Deformation::Lambda, _) => 1.0 / rt,
            (Deformation::Alpha, 0 | 1) | (Deformation::Beta, 0 | 2) => 1.0 / rt,
            _ => rt,
        }
    };
    let mut e = b.matrix.clone();
    for block in 0..=p.s {
        let c = block_scale(block);
        for i in 0..n {
            e.column_mut(block * n + i).scale_mut(c);
        }
    }
    let g = invert(&(&e * e.transpose()), "deformed frame")?;
    let g = MetricMatrix::new((&g + g.transpose()) * 0.5)?;
    let omegas = p
        .omegas
        .iter()
        .enumerate()
        .map(|(j, w)| {
            let scaled = match (kind, j) {
                (Deformation::Lambda, _) | (Deformation::Alpha, 0) | (Deformation::Beta, 1) => {
                    w.scaled(t)
                }
                _ => w.clone(),
            };
            scaled
        })
        .collect();
    Ok(PolyStructure {
        omegas,
        metric: Some(g),
        ..p.clone()
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Rotation {
    /// `(ω_D, ω_1)`
    D1,
    /// `(ω_2, ω_D)`
    TwoD,
}

pub fn rotate_structure(p: &PolyStructure, mode: Rotation) -> Result<PolyStructure> {
    let wd = dualizing_form(p)?;
    let omegas = match mode {
        Rotation::D1 => vec![wd, p.omegas[0].clone()],
        Rotation::TwoD => vec![p.omegas[1].clone(), wd],
    };
    Ok(PolyStructure {
        omegas,
        ..p.clone()
    })
}

/// Residual of the block-compatibility test: fibre blocks mutually
/// g-orthogonal and `(Σ_j ω_j^⊥)^{⊥_g}` isotropic for every `ω_j`.
pub fn block_compatibility_residual(p: &PolyStructure, g: &MetricMatrix) -> Result<f64> {
    check_dim(p.dim(), g.dim())?;
    let gm = g.matrix();
    let k = kernels(p)?;
    let mut res: f64 = 0.0;
    for a in 0..p.s {
        for b in a + 1..p.s {
            res = res.max((k.blocks[a].transpose() * gm * &k.blocks[b]).amax());
        }
    }
    let w = null_space(&(k.sum.transpose() * gm), p.rank_tol);
    if w.ncols() != p.n {
        return Err(GeometryError::NotPolysymplectic(
            "complement has wrong dimension".into(),
        ));
    }
    for om in p.form_matrices() {
        res = res.max((w.transpose() * om * &w).amax());
    }
    Ok(res)
}

pub fn is_block_compatible(p: &PolyStructure, g: &MetricMatrix) -> Result<bool> {
    Ok(block_compatibility_residual(p, g)? <= NORMAL_FORM_TOL)
}

/// Convex combination `t g1 + (1−t) g2` of block-compatible metrics that
/// agree on `Σ_j ω_j^⊥`; the result is re-tested.
pub fn interpolate_block_compatible(
    g1: &MetricMatrix,
    g2: &MetricMatrix,
    p: &PolyStructure,
    t: f64,
) -> Result<MetricMatrix> {
    if !(0.0..=1.0).contains(&t) {
        return Err(GeometryError::InvalidParameter(format!(
            "t = {t} outside [0, 1]"
        )));
    }
    for (name, g) in [("g1", g1), ("g2", g2)] {
        let r = block_compatibility_residual(p, g)?;
        if r > NORMAL_FORM_TOL {
            return Err(GeometryError::Precondition(format!(
                "{name} is not block-compatible (residual {r:e})"
            )));
        }
    }
    let k = kernels(p)?;
    let gap = (k.sum.transpose() * (g1.matrix() - g2.matrix()) * &k.sum).amax();
    if gap > NORMAL_FORM_TOL {
        return Err(GeometryError::Precondition(format!(
            "metrics differ on the kernel sum by {gap:e}"
        )));
    }
    let g = MetricMatrix::new(g1.matrix() * t + g2.matrix() * (1.0 - t))?;
    let r = block_compatibility_residual(p, &g)?;
    if r > NORMAL_FORM_TOL {
        return Err(GeometryError::Precondition(format!(
            "interpolated metric lost block compatibility ({r:e})"
        )));
    }
    Ok(g)
}

/// Data equivalent to a compatible metric: the Gram matrix of `g` on the
/// first fibre block (in the basis returned by [`fibre_basis`]) and the
/// horizontal subspace `(Σ_j ω_j^⊥)^{⊥_g}`.
#[derive(Clone, Debug)]
pub struct CompatibleData {
    pub fibre_gram: DMatrix<f64>,
    pub horizontal: DMatrix<f64>,
}

pub fn compatible_data(p: &PolyStructure) -> Result<CompatibleData> {
    let g = p.require_metric()?;
    compatible_basis(p)?;
    let k = kernels(p)?;
    let b1 = &k.blocks[0];
    let fibre_gram = b1.transpose() * g.matrix() * b1;
    let horizontal = null_space(&(k.sum.transpose() * g.matrix()), p.rank_tol);
    Ok(CompatibleData {
        fibre_gram,
        horizontal,
    })
}

/// The unique compatible metric with the given fibre Gram matrix and
/// horizontal subspace.
pub fn metric_from_data(data: &CompatibleData, p: &PolyStructure) -> Result<MetricMatrix> {
    if p.s < 2 {
        return Err(GeometryError::InvalidParameter("needs s >= 2".into()));
    }
    let (n, d) = (p.n, p.dim());
    check_dim(n, data.fibre_gram.nrows())?;
    check_dim(n, data.fibre_gram.ncols())?;
    check_dim(d, data.horizontal.nrows())?;
    check_dim(n, data.horizontal.ncols())?;
    let k = kernels(p)?;
    let w = &data.horizontal;
    if rank(&hstack(&[w, &k.sum]), p.rank_tol) != d {
        return Err(GeometryError::Precondition(
            "W is not complementary to the kernel sum".into(),
        ));
    }
    let mats = p.form_matrices();
    for om in &mats {
        let r = (w.transpose() * om * w).amax();
        if r > NORMAL_FORM_TOL * w.amax().powi(2).max(1.0) {
            return Err(GeometryError::Precondition(format!(
                "W is not isotropic ({r:e})"
            )));
        }
    }
    let gram = MetricMatrix::new(data.fibre_gram.clone())?;
    let chol = gram
        .matrix()
        .clone()
        .cholesky()
        .ok_or(GeometryError::NotPositiveDefinite)?;
    let f1 = &k.blocks[0] * invert(&chol.l(), "fibre Cholesky factor")?.transpose();
    let mv = w.transpose() * &mats[0] * &f1;
    let e = w * invert(&mv, "pairing of W with the first fibre block")?.transpose();
    let mut blocks = vec![e.clone(), f1];
    for j in 1..p.s {
        let m = e.transpose() * &mats[j] * &k.blocks[j];
        blocks.push(&k.blocks[j] * invert(&m, "pairing of W with a fibre block")?);
    }
    let refs: Vec<&DMatrix<f64>> = blocks.iter().collect();
    let frame = hstack(&refs);
    let g = invert(&(&frame * frame.transpose()), "assembled frame")?;
    MetricMatrix::new((&g + g.transpose()) * 0.5)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::{random_invertible, random_orthogonal, rng};

    fn close(a: &Multivector, b: &Multivector, tol: f64) -> bool {
        (a - b).max_abs() < tol
    }

    #[test]
    fn kernel_examples() {
        let w = Multivector::blade(3, &[0, 1]);
        let k = kernel(&w, RANK_TOL);
        assert_eq!(k.ncols(), 1);
        assert!((k[(2, 0)].abs() - 1.0).abs() < 1e-14);

        let p = PolyStructure::normal_form(2, 2);
        let k = kernel(p.omega(1), RANK_TOL);
        assert_eq!(k.ncols(), 2);
        // spans the y² axes (4, 5)
        for r in 0..4 {
            assert!(k.row(r).amax() < 1e-14);
        }
    }

    #[test]
    fn normal_form_gives_identity_basis() {
        for (n, s) in [(1, 1), (1, 2), (2, 2), (2, 3)] {
            let p = PolyStructure::normal_form(n, s).without_metric();
            let b = standard_basis(&p).unwrap();
            let d = n * (s + 1);
            assert!(
                (b.matrix() - DMatrix::<f64>::identity(d, d)).amax() < 1e-12,
                "n={n} s={s}"
            );
        }
    }

    #[test]
    fn pulled_back_structures_have_standard_bases() {
        let mut r = rng(11);
        for (n, s) in [(1, 1), (2, 1), (1, 2), (2, 2), (3, 2), (2, 3)] {
            let d = n * (s + 1);
            let m = random_invertible(&mut r, d, 0.5, 2.0);
            let p = PolyStructure::normal_form(n, s)
                .without_metric()
                .pullback(&m)
                .unwrap();
            let b = standard_basis(&p).unwrap();
            assert!(b.normal_form_residual(&p) < 1e-10);
        }
    }

    #[test]
    fn equal_forms_are_rejected() {
        let p = PolyStructure::normal_form(1, 2);
        let w = p.omega(1).clone();
        let q = PolyStructure::new(1, 2, vec![w.clone(), w]).unwrap();
        assert!(matches!(
            standard_basis(&q),
            Err(GeometryError::NotPolysymplectic(_))
        ));
    }

    #[test]
    fn compatibility_examples() {
        let p = PolyStructure::normal_form(2, 2);
        assert!(is_compatible(&p).unwrap().compatible);
        let mut g = DMatrix::identity(6, 6);
        g[(4, 4)] = 4.0;
        g[(5, 5)] = 4.0;
        let q = p
            .clone()
            .with_metric(MetricMatrix::new(g).unwrap())
            .unwrap();
        assert!(!is_compatible(&q).unwrap().compatible);
        assert!(matches!(
            dualizing_form(&q),
            Err(GeometryError::NotCompatible(_))
        ));
    }

    #[test]
    fn dualizing_form_of_normal_form() {
        let p = PolyStructure::normal_form(1, 2);
        assert_eq!(dualizing_form(&p).unwrap(), Multivector::blade(3, &[1, 2]));
        let p = PolyStructure::normal_form(2, 2);
        let want = &Multivector::blade(6, &[2, 4]) + &Multivector::blade(6, &[3, 5]);
        assert!(close(&dualizing_form(&p).unwrap(), &want, 1e-14));
    }

    #[test]
    fn dualizing_form_is_frame_independent() {
        let mut r = rng(5);
        let m = random_invertible(&mut r, 6, 0.6, 1.7);
        let p = PolyStructure::normal_form(2, 2).pullback(&m).unwrap();
        let base = is_compatible(&p).unwrap();
        assert!(base.compatible);
        let wd = dualizing_form_from_basis(&base.basis).unwrap();
        for _ in 0..20 {
            let q = random_orthogonal(&mut r, 2);
            let other = base.basis.reframe(&q).unwrap();
            assert!(other.normal_form_residual(&p) < 1e-10);
            assert!(close(
                &dualizing_form_from_basis(&other).unwrap(),
                &wd,
                1e-10
            ));
        }
    }

    #[test]
    fn deformations() {
        let mut r = rng(8);
        let m = random_invertible(&mut r, 6, 0.7, 1.4);
        let p = PolyStructure::normal_form(2, 2).pullback(&m).unwrap();
        let wd = dualizing_form(&p).unwrap();
        for t in [0.5, 2.0, 7.0] {
            for kind in [Deformation::Alpha, Deformation::Beta] {
                let q = deform(&p, kind, t).unwrap();
                assert!(is_compatible(&q).unwrap().compatible);
                assert!(close(&dualizing_form(&q).unwrap(), &wd, 1e-10));
            }
            let l = deform(&p, Deformation::Lambda, t).unwrap();
            assert!(close(&dualizing_form(&l).unwrap(), &wd.scaled(t), 1e-10));
        }
        let same = deform(&p, Deformation::Lambda, 1.0).unwrap();
        assert!((same.metric().unwrap().matrix() - p.metric().unwrap().matrix()).amax() < 1e-12);
        let back = deform(
            &deform(&p, Deformation::Alpha, 3.0).unwrap(),
            Deformation::Alpha,
            1.0 / 3.0,
        )
        .unwrap();
        assert!((back.metric().unwrap().matrix() - p.metric().unwrap().matrix()).amax() < 1e-12);
        assert!(close(back.omega(1), p.omega(1), 1e-12));
        assert!(deform(&p, Deformation::Alpha, 0.0).is_err());
        assert!(deform(&p, Deformation::Beta, -1.0).is_err());
    }

    #[test]
    fn rotations_stay_compatible() {
        let p = PolyStructure::normal_form(1, 2);
        let d1 = rotate_structure(&p, Rotation::D1).unwrap();
        assert_eq!(d1.omega(1), &Multivector::blade(3, &[1, 2]));
        assert!(is_compatible(&d1).unwrap().compatible);
        assert!(
            is_compatible(&rotate_structure(&p, Rotation::TwoD).unwrap())
                .unwrap()
                .compatible
        );
        // the rotated dualizing form is the remaining original form
        assert!(close(&dualizing_form(&d1).unwrap(), p.omega(2), 1e-14));
    }

    #[test]
    fn s1_compatibility_uses_symplectic_frames() {
        let p = PolyStructure::normal_form(2, 1);
        assert!(is_compatible(&p).unwrap().compatible);
        let mut g = DMatrix::identity(4, 4);
        g[(0, 0)] = 3.0;
        let q = p.with_metric(MetricMatrix::new(g).unwrap()).unwrap();
        assert!(!is_compatible(&q).unwrap().compatible);
    }

    #[test]
    fn metric_data_round_trip() {
        let p = PolyStructure::normal_form(1, 2);
        let data = CompatibleData {
            fibre_gram: DMatrix::identity(1, 1),
            horizontal: DMatrix::from_column_slice(3, 1, &[1.0, 0.0, 0.0]),
        };
        let g = metric_from_data(&data, &p).unwrap();
        assert!((g.matrix() - DMatrix::<f64>::identity(3, 3)).amax() < 1e-12);

        let bad = CompatibleData {
            fibre_gram: DMatrix::zeros(1, 1),
            ..data.clone()
        };
        assert!(metric_from_data(&bad, &p).is_err());
        let vertical = CompatibleData {
            horizontal: DMatrix::from_column_slice(3, 1, &[0.0, 1.0, 0.0]),
            ..data
        };
        assert!(matches!(
            metric_from_data(&vertical, &p),
            Err(GeometryError::Precondition(_))
        ));
    }
}
