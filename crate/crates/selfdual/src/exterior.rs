//! Sparse exterior algebra over a real vector space with ordered axes.
//!
//! A basis element `e^{i_1} ∧ … ∧ e^{i_k}` with `i_1 < … < i_k` is stored as
//! the bitmask of its axes. Every sign in the crate follows this increasing
//! order; the axis order itself is `(x_1..x_n, y¹_1..y¹_n, …, y^s_1..y^s_n)`
//! as laid out by [`AxisLayout`].

use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::DMatrix;

use crate::error::{check_dim, GeometryError, Result};

/// Coefficients whose magnitude falls below this are dropped.
pub const PRUNE_EPS: f64 = 1e-14;
/// Largest supported dimension (bitmask width).
pub const MAX_DIM: usize = 32;
/// Symmetry tolerance for [`MetricMatrix`].
pub const SYMMETRY_TOL: f64 = 1e-12;

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Default)]
pub struct AxisSet(pub u32);

impl AxisSet {
    pub const EMPTY: AxisSet = AxisSet(0);

    pub fn single(axis: usize) -> Self {
        AxisSet(1 << axis)
    }

    pub fn from_axes(axes: &[usize]) -> Option<Self> {
        let mut m = 0u32;
        for &a in axes {
            let bit = 1u32 << a;
            if m & bit != 0 {
                return None;
            }
            m |= bit;
        }
        Some(AxisSet(m))
    }

    pub fn grade(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn contains(self, axis: usize) -> bool {
        self.0 & (1 << axis) != 0
    }

    pub fn axes(self) -> impl Iterator<Item = usize> {
        let m = self.0;
        (0..MAX_DIM).filter(move |&a| m & (1 << a) != 0)
    }

    /// Number of axes of `self` strictly below `axis`.
    pub fn count_below(self, axis: usize) -> u32 {
        (self.0 & ((1u32 << axis) - 1)).count_ones()
    }
}

/// Sign of `e^A ∧ e^B` relative to `e^{A∪B}`; zero if the sets overlap.
pub fn wedge_sign(a: AxisSet, b: AxisSet) -> f64 {
    if a.0 & b.0 != 0 {
        return 0.0;
    }
    let mut swaps = 0u32;
    for axis in b.axes() {
        swaps += (a.0 >> axis).count_ones();
    }
    if swaps % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Axis naming for dimension `n(s+1)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AxisLayout {
    pub n: usize,
    pub s: usize,
}

impl AxisLayout {
    pub fn new(n: usize, s: usize) -> Self {
        AxisLayout { n, s }
    }
    pub fn dim(&self) -> usize {
        self.n * (self.s + 1)
    }
    /// Axis of `x_i` (0-based `i`).
    pub fn x(&self, i: usize) -> usize {
        i
    }
    /// Axis of `y^j_i` (1-based block `j`, 0-based `i`).
    pub fn y(&self, j: usize, i: usize) -> usize {
        j * self.n + i
    }
    pub fn label(&self, axis: usize) -> String {
        let block = axis / self.n;
        let i = axis % self.n + 1;
        if block == 0 {
            format!("x{i}")
        } else {
            format!("y{block}_{i}")
        }
    }
    pub fn labels(&self) -> Vec<String> {
        (0..self.dim()).map(|a| self.label(a)).collect()
    }
    pub fn set_label(&self, set: AxisSet) -> String {
        if set.grade() == 0 {
            return "1".to_string();
        }
        set.axes()
            .map(|a| format!("d{}", self.label(a)))
            .collect::<Vec<_>>()
            .join("^")
    }
}

/// Sparse element of `Λ*(ℝ^d)*`.
#[derive(Clone, PartialEq)]
pub struct Multivector {
    dim: usize,
    terms: BTreeMap<AxisSet, f64>,
}

impl fmt::Debug for Multivector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Multivector(d={}", self.dim)?;
        for (k, v) in &self.terms {
            write!(f, ", {:#b}: {v}", k.0)?;
        }
        write!(f, ")")
    }
}

impl Multivector {
    pub fn zero(dim: usize) -> Self {
        assert!(dim <= MAX_DIM, "dimension {dim} exceeds {MAX_DIM}");
        Multivector {
            dim,
            terms: BTreeMap::new(),
        }
    }

    pub fn scalar(dim: usize, c: f64) -> Self {
        let mut m = Self::zero(dim);
        m.add_term(AxisSet::EMPTY, c);
        m
    }

    /// The basis element of a set in increasing order.
    pub fn basis(dim: usize, set: AxisSet) -> Self {
        let mut m = Self::zero(dim);
        m.add_term(set, 1.0);
        m
    }

    /// `e^{a_1} ∧ e^{a_2} ∧ …` in the given (possibly unsorted) order.
    pub fn blade(dim: usize, axes: &[usize]) -> Self {
        let mut acc = Self::scalar(dim, 1.0);
        for &a in axes {
            acc = acc
                .wedge(&Self::basis(dim, AxisSet::single(a)))
                .expect("same dimension");
        }
        acc
    }

    /// The 1-form `Σ c_a e^a`.
    pub fn covector(coeffs: &[f64]) -> Self {
        let mut m = Self::zero(coeffs.len());
        for (a, &c) in coeffs.iter().enumerate() {
            m.add_term(AxisSet::single(a), c);
        }
        m
    }

    pub fn from_terms<I: IntoIterator<Item = (AxisSet, f64)>>(dim: usize, terms: I) -> Self {
        let mut m = Self::zero(dim);
        for (k, v) in terms {
            m.add_term(k, v);
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn add_term(&mut self, set: AxisSet, c: f64) {
        debug_assert!(self.dim == MAX_DIM || set.0 >> self.dim == 0);
        let e = self.terms.entry(set).or_insert(0.0);
        *e += c;
        if e.abs() < PRUNE_EPS {
            self.terms.remove(&set);
        }
    }

    pub fn coefficient(&self, set: AxisSet) -> f64 {
        self.terms.get(&set).copied().unwrap_or(0.0)
    }

    pub fn terms(&self) -> impl Iterator<Item = (AxisSet, f64)> + '_ {
        self.terms.iter().map(|(k, v)| (*k, *v))
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Drop coefficients below `eps`.
    pub fn prune(&mut self, eps: f64) {
        self.terms.retain(|_, v| v.abs() >= eps);
    }

    /// The grade if homogeneous, `None` for zero or mixed elements.
    pub fn grade(&self) -> Option<usize> {
        let mut it = self.terms.keys().map(|k| k.grade());
        let g = it.next()?;
        it.all(|h| h == g).then_some(g)
    }

    pub fn grade_part(&self, k: usize) -> Multivector {
        Multivector::from_terms(self.dim, self.terms().filter(|(s, _)| s.grade() == k))
    }

    /// Euclidean norm of the coefficient vector.
    pub fn norm(&self) -> f64 {
        self.terms.values().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.terms.values().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn scaled(&self, c: f64) -> Multivector {
        Multivector::from_terms(self.dim, self.terms().map(|(k, v)| (k, c * v)))
    }

    pub fn wedge(&self, other: &Multivector) -> Result<Multivector> {
        wedge(self, other)
    }

    /// Grade-2 part as an antisymmetric matrix `Ω` with `ω(u, v) = uᵀ Ω v`.
    pub fn to_antisymmetric(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for (set, c) in self.terms() {
            if set.grade() == 2 {
                let mut ax = set.axes();
                let (a, b) = (ax.next().unwrap(), ax.next().unwrap());
                m[(a, b)] += c;
                m[(b, a)] -= c;
            }
        }
        m
    }

    /// Inverse of [`Self::to_antisymmetric`]; reads the strict upper triangle.
    pub fn from_antisymmetric(m: &DMatrix<f64>) -> Multivector {
        let d = m.nrows();
        let mut out = Multivector::zero(d);
        for a in 0..d {
            for b in a + 1..d {
                let c = 0.5 * (m[(a, b)] - m[(b, a)]);
                out.add_term(AxisSet((1 << a) | (1 << b)), c);
            }
        }
        out
    }
}

impl Add for &Multivector {
    type Output = Multivector;
    fn add(self, o: &Multivector) -> Multivector {
        assert_eq!(self.dim, o.dim, "dimension mismatch");
        let mut out = self.clone();
        for (k, v) in o.terms() {
            out.add_term(k, v);
        }
        out
    }
}

impl Sub for &Multivector {
    type Output = Multivector;
    fn sub(self, o: &Multivector) -> Multivector {
        assert_eq!(self.dim, o.dim, "dimension mismatch");
        let mut out = self.clone();
        for (k, v) in o.terms() {
            out.add_term(k, -v);
        }
        out
    }
}

impl Neg for &Multivector {
    type Output = Multivector;
    fn neg(self) -> Multivector {
        self.scaled(-1.0)
    }
}

impl Mul<f64> for &Multivector {
    type Output = Multivector;
    fn mul(self, c: f64) -> Multivector {
        self.scaled(c)
    }
}

/// Symmetric positive-definite matrix, validated on construction.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricMatrix(DMatrix<f64>);

impl MetricMatrix {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        check_dim(m.nrows(), m.ncols())?;
        let scale = m.amax().max(1.0);
        let asym = (&m - m.transpose()).amax();
        if asym > SYMMETRY_TOL * scale {
            return Err(GeometryError::NotSymmetric(asym));
        }
        let sym = (&m + m.transpose()) * 0.5;
        if sym.clone().cholesky().is_none() {
            return Err(GeometryError::NotPositiveDefinite);
        }
        Ok(MetricMatrix(sym))
    }

    pub fn identity(d: usize) -> Self {
        MetricMatrix(DMatrix::identity(d, d))
    }

    pub fn diagonal(entries: &[f64]) -> Result<Self> {
        Self::new(DMatrix::from_diagonal(
            &nalgebra::DVector::from_column_slice(entries),
        ))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }
}

pub fn wedge(a: &Multivector, b: &Multivector) -> Result<Multivector> {
    check_dim(a.dim, b.dim)?;
    let mut out = Multivector::zero(a.dim);
    for (ka, va) in a.terms() {
        for (kb, vb) in b.terms() {
            let s = wedge_sign(ka, kb);
            if s != 0.0 {
                out.add_term(AxisSet(ka.0 | kb.0), s * va * vb);
            }
        }
    }
    Ok(out)
}

/// Interior product `ι_v a`, the antiderivation extending `e^k ↦ v_k`.
pub fn contract(v: &[f64], a: &Multivector) -> Result<Multivector> {
    check_dim(a.dim, v.len())?;
    let mut out = Multivector::zero(a.dim);
    for (set, c) in a.terms() {
        for axis in set.axes() {
            if v[axis] == 0.0 {
                continue;
            }
            let sign = if set.count_below(axis) % 2 == 0 {
                1.0
            } else {
                -1.0
            };
            out.add_term(AxisSet(set.0 & !(1 << axis)), sign * v[axis] * c);
        }
    }
    Ok(out)
}

/// Pairing on `Λ*` induced by `g`: Gram determinants on decomposables.
pub fn inner(a: &Multivector, b: &Multivector, g: &MetricMatrix) -> Result<f64> {
    check_dim(a.dim, b.dim)?;
    check_dim(a.dim, g.dim())?;
    let gm = g.matrix();
    let mut acc = 0.0;
    for (ka, va) in a.terms() {
        for (kb, vb) in b.terms() {
            if ka.grade() != kb.grade() {
                continue;
            }
            let rows: Vec<usize> = ka.axes().collect();
            let cols: Vec<usize> = kb.axes().collect();
            let k = rows.len();
            let minor = DMatrix::from_fn(k, k, |r, c| gm[(rows[r], cols[c])]);
            let det = if k == 0 { 1.0 } else { minor.determinant() };
            acc += va * vb * det;
        }
    }
    Ok(acc)
}

/// Algebra morphism of `Λ*` extending `e^i ↦ Σ_j M_ij e^j`.
///
/// This is the pullback along the linear map with matrix `M`, so a 2-form
/// with matrix `Ω` pulls back to `Mᵀ Ω M`.
pub fn pullback(m: &DMatrix<f64>, a: &Multivector) -> Result<Multivector> {
    check_dim(a.dim, m.nrows())?;
    check_dim(a.dim, m.ncols())?;
    let d = a.dim;
    let images: Vec<Multivector> = (0..d)
        .map(|i| Multivector::covector(&m.row(i).iter().copied().collect::<Vec<_>>()))
        .collect();
    let mut out = Multivector::zero(d);
    for (set, c) in a.terms() {
        let mut acc = Multivector::scalar(d, c);
        for axis in set.axes() {
            acc = wedge(&acc, &images[axis])?;
            if acc.is_empty() {
                break;
            }
        }
        out = &out + &acc;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn e(d: usize, axes: &[usize]) -> Multivector {
        Multivector::blade(d, axes)
    }

    #[test]
    fn wedge_basics() {
        let l = AxisLayout::new(1, 2);
        let dx = e(3, &[l.x(0)]);
        let dy1 = e(3, &[l.y(1, 0)]);
        let p = dx.wedge(&dy1).unwrap();
        assert_eq!(p.coefficient(AxisSet(0b011)), 1.0);
        assert!(dx.wedge(&dx).unwrap().is_empty());
        let q = dy1.wedge(&dx).unwrap();
        assert_eq!(q.coefficient(AxisSet(0b011)), -1.0);
    }

    #[test]
    fn wedge_sign_counts_inversions() {
        // e2 ∧ (e0 ∧ e1) = e0 ∧ e1 ∧ e2 (two swaps)
        assert_eq!(wedge_sign(AxisSet(0b100), AxisSet(0b011)), 1.0);
        // e1 ∧ (e0 ∧ e2) = −e0 ∧ e1 ∧ e2
        assert_eq!(wedge_sign(AxisSet(0b010), AxisSet(0b101)), -1.0);
        assert_eq!(wedge_sign(AxisSet(0b010), AxisSet(0b011)), 0.0);
    }

    #[test]
    fn contraction_examples() {
        let f = e(3, &[0, 1]);
        assert_eq!(contract(&[1.0, 0.0, 0.0], &f).unwrap(), e(3, &[1]));
        assert!(contract(&[0.0, 0.0, 1.0], &f).unwrap().is_empty());
        assert!(contract(&[1.0, 2.0, 3.0], &Multivector::scalar(3, 5.0))
            .unwrap()
            .is_empty());
        // ι_{e1}(e0∧e1) = −e0
        assert_eq!(
            contract(&[0.0, 1.0, 0.0], &f).unwrap(),
            e(3, &[0]).scaled(-1.0)
        );
    }

    #[test]
    fn inner_examples() {
        let id = MetricMatrix::identity(3);
        let f = e(3, &[0, 1]);
        assert_eq!(inner(&f, &f, &id).unwrap(), 1.0);
        assert_eq!(inner(&e(3, &[0]), &e(3, &[1]), &id).unwrap(), 0.0);
        let g = MetricMatrix::diagonal(&[4.0, 9.0, 1.0, 1.0]).unwrap();
        let h = e(4, &[0, 1]);
        assert!((inner(&h, &h, &g).unwrap() - 36.0).abs() < 1e-12);
    }

    #[test]
    fn pullback_examples() {
        let a = &e(3, &[0, 1]) + &e(3, &[2]);
        assert_eq!(pullback(&DMatrix::identity(3, 3), &a).unwrap(), a);
        let two = DMatrix::identity(3, 3) * 2.0;
        let p = pullback(&two, &e(3, &[0, 1])).unwrap();
        assert!((p.coefficient(AxisSet(0b011)) - 4.0).abs() < 1e-15);
        let mut rot = DMatrix::identity(3, 3);
        rot[(0, 0)] = 0.0;
        rot[(0, 1)] = -1.0;
        rot[(1, 0)] = 1.0;
        rot[(1, 1)] = 0.0;
        let r = pullback(&rot, &e(3, &[0])).unwrap();
        assert_eq!(r.len(), 1);
        assert_eq!(r.coefficient(AxisSet(0b010)).abs(), 1.0);
    }

    #[test]
    fn antisymmetric_round_trip() {
        let w = &e(4, &[0, 2]) + &e(4, &[1, 3]).scaled(2.5);
        let m = w.to_antisymmetric();
        assert_eq!(m[(1, 3)], 2.5);
        assert_eq!(m[(3, 1)], -2.5);
        assert_eq!(Multivector::from_antisymmetric(&m), w);
    }

    #[test]
    fn metric_validation() {
        let mut m = DMatrix::identity(2, 2);
        m[(0, 1)] = 0.1;
        assert!(matches!(
            MetricMatrix::new(m),
            Err(GeometryError::NotSymmetric(_))
        ));
        let neg = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, -1.0]));
        assert_eq!(
            MetricMatrix::new(neg),
            Err(GeometryError::NotPositiveDefinite)
        );
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let a = Multivector::scalar(2, 1.0);
        let b = Multivector::scalar(3, 1.0);
        assert!(matches!(
            wedge(&a, &b),
            Err(GeometryError::DimensionMismatch { .. })
        ));
        assert!(contract(&[1.0], &b).is_err());
    }

    #[test]
    fn layout_labels() {
        let l = AxisLayout::new(2, 2);
        assert_eq!(l.labels(), vec!["x1", "x2", "y1_1", "y1_2", "y2_1", "y2_2"]);
        assert_eq!(l.set_label(AxisSet(0b000101)), "dx1^dy1_1");
    }
}
