//! The operators `E^α_i` and `L_{αβ} = Σ_i E^α_i E^β_i` on `Λ*(ℝ^{3n})` and
//! the Lie algebra they generate.
//!
//! Indices `{0, 1, 2, 0̄, 1̄, 2̄}` are encoded as `0..6` with bar adding 3.
//! Unbarred indices wedge with `dx_i`, `dy¹_i`, `dy²_i`; barred ones contract
//! with the dual vectors. Operators are stored as sparse columns over the
//! bitmask basis of `Λ*`.

use std::collections::HashMap;
use std::fmt;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{GeometryError, Result};
use crate::exterior::{AxisSet, Multivector, PRUNE_EPS};

/// Entries below this are dropped from products.
pub const OP_PRUNE: f64 = 1e-14;
/// Relative threshold for accepting a new direction in the closure.
pub const CLOSURE_TOL: f64 = 1e-9;
/// Identity tolerance for relation sweeps.
pub const RELATION_TOL: f64 = 1e-12;
/// Largest `n` for which operators are materialized (`2^{3n}` columns).
pub const MAX_N: usize = 4;
/// Bracket rounds before the closure gives up.
pub const MAX_ROUNDS: usize = 50;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct Index(u8);

impl Index {
    pub const ALL: [Index; 6] = [Index(0), Index(1), Index(2), Index(3), Index(4), Index(5)];

    pub fn new(block: u8, barred: bool) -> Result<Self> {
        if block > 2 {
            return Err(GeometryError::InvalidParameter(format!(
                "block {block} out of range"
            )));
        }
        Ok(Index(block + if barred { 3 } else { 0 }))
    }

    pub const fn plain(block: u8) -> Self {
        Index(block)
    }

    pub const fn barred(block: u8) -> Self {
        Index(block + 3)
    }

    pub fn bar(self) -> Self {
        Index((self.0 + 3) % 6)
    }

    pub fn block(self) -> usize {
        (self.0 % 3) as usize
    }

    pub fn is_barred(self) -> bool {
        self.0 >= 3
    }
}

impl fmt::Display for Index {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}{}",
            self.block(),
            if self.is_barred() { "b" } else { "" }
        )
    }
}

/// Sparse operator on `Λ*(ℝ^{dim})`, column `c` holding the image of the
/// basis element with bitmask `c`.
#[derive(Clone, Debug, PartialEq)]
pub struct OperatorMatrix {
    dim: usize,
    cols: Vec<Vec<(u32, f64)>>,
}

fn merge_into(acc: &mut HashMap<u32, f64>, col: &[(u32, f64)], scale: f64) {
    for &(r, v) in col {
        *acc.entry(r).or_insert(0.0) += scale * v;
    }
}

fn finish(acc: HashMap<u32, f64>) -> Vec<(u32, f64)> {
    let mut v: Vec<(u32, f64)> = acc
        .into_iter()
        .filter(|(_, x)| x.abs() > OP_PRUNE)
        .collect();
    v.sort_unstable_by_key(|&(r, _)| r);
    v
}

impl OperatorMatrix {
    pub fn zero(dim: usize) -> Self {
        OperatorMatrix {
            dim,
            cols: vec![Vec::new(); 1 << dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        OperatorMatrix {
            dim,
            cols: (0..1u32 << dim).map(|c| vec![(c, 1.0)]).collect(),
        }
    }

    /// Operator from its action on basis elements.
    pub fn from_basis_action<F>(dim: usize, f: F) -> Self
    where
        F: Fn(AxisSet) -> Vec<(AxisSet, f64)>,
    {
        let cols = (0..1u32 << dim)
            .map(|c| {
                let mut acc = HashMap::new();
                for (s, v) in f(AxisSet(c)) {
                    *acc.entry(s.0).or_insert(0.0) += v;
                }
                finish(acc)
            })
            .collect();
        OperatorMatrix { dim, cols }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Side length `2^dim` of the matrix.
    pub fn size(&self) -> usize {
        self.cols.len()
    }

    pub fn nnz(&self) -> usize {
        self.cols.iter().map(Vec::len).sum()
    }

    pub fn entry(&self, row: u32, col: u32) -> f64 {
        self.cols[col as usize]
            .binary_search_by_key(&row, |&(r, _)| r)
            .map(|k| self.cols[col as usize][k].1)
            .unwrap_or(0.0)
    }

    pub fn entries(&self) -> impl Iterator<Item = (u32, u32, f64)> + '_ {
        self.cols
            .iter()
            .enumerate()
            .flat_map(|(c, col)| col.iter().map(move |&(r, v)| (r, c as u32, v)))
    }

    fn check_same(&self, other: &Self) -> Result<()> {
        crate::error::check_dim(self.dim, other.dim)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.lin_comb(1.0, other, 1.0)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.lin_comb(1.0, other, -1.0)
    }

    pub fn scaled(&self, s: f64) -> Self {
        let cols = self
            .cols
            .iter()
            .map(|c| {
                c.iter()
                    .map(|&(r, v)| (r, v * s))
                    .filter(|(_, v)| v.abs() > OP_PRUNE)
                    .collect()
            })
            .collect();
        OperatorMatrix {
            dim: self.dim,
            cols,
        }
    }

    /// `a·self + b·other`
    pub fn lin_comb(&self, a: f64, other: &Self, b: f64) -> Result<Self> {
        self.check_same(other)?;
        let cols = self
            .cols
            .iter()
            .zip(&other.cols)
            .map(|(x, y)| {
                let mut acc = HashMap::with_capacity(x.len() + y.len());
                merge_into(&mut acc, x, a);
                merge_into(&mut acc, y, b);
                finish(acc)
            })
            .collect();
        Ok(OperatorMatrix {
            dim: self.dim,
            cols,
        })
    }

    /// Matrix product `self · other`.
    pub fn compose(&self, other: &Self) -> Result<Self> {
        self.check_same(other)?;
        let cols = other
            .cols
            .iter()
            .map(|bc| {
                let mut acc = HashMap::new();
                for &(k, v) in bc {
                    merge_into(&mut acc, &self.cols[k as usize], v);
                }
                finish(acc)
            })
            .collect();
        Ok(OperatorMatrix {
            dim: self.dim,
            cols,
        })
    }

    pub fn transpose(&self) -> Self {
        let mut cols = vec![Vec::new(); self.size()];
        for (r, c, v) in self.entries() {
            cols[r as usize].push((c, v));
        }
        for col in &mut cols {
            col.sort_unstable_by_key(|&(r, _)| r);
        }
        OperatorMatrix {
            dim: self.dim,
            cols,
        }
    }

    pub fn trace(&self) -> f64 {
        (0..self.size() as u32).map(|c| self.entry(c, c)).sum()
    }

    pub fn frobenius(&self) -> f64 {
        self.entries().map(|(_, _, v)| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.entries().fold(0.0, |m, (_, _, v)| m.max(v.abs()))
    }

    /// `max |self − other|` entrywise.
    pub fn distance(&self, other: &Self) -> Result<f64> {
        Ok(self.sub(other)?.max_abs())
    }

    pub fn apply(&self, a: &Multivector) -> Result<Multivector> {
        crate::error::check_dim(self.dim, a.dim())?;
        let mut out = Multivector::zero(self.dim);
        for (set, c) in a.terms() {
            for &(r, v) in &self.cols[set.0 as usize] {
                out.add_term(AxisSet(r), c * v);
            }
        }
        out.prune(PRUNE_EPS);
        Ok(out)
    }

    /// Grade shift if the operator is homogeneous.
    pub fn degree(&self) -> Option<i32> {
        let mut deg = None;
        for (r, c, _) in self.entries() {
            let d = r.count_ones() as i32 - c.count_ones() as i32;
            match deg {
                None => deg = Some(d),
                Some(e) if e != d => return None,
                _ => {}
            }
        }
        deg.or(Some(0))
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.size(), self.size());
        for (r, c, v) in self.entries() {
            m[(r as usize, c as usize)] = v;
        }
        m
    }
}

/// `AB − BA`.
pub fn commutator(a: &OperatorMatrix, b: &OperatorMatrix) -> Result<OperatorMatrix> {
    a.compose(b)?.sub(&b.compose(a)?)
}

/// Operators for a fixed `n`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct OperatorSpace {
    n: usize,
}

impl OperatorSpace {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 || n > MAX_N {
            return Err(GeometryError::InvalidParameter(format!(
                "n = {n} outside 1..={MAX_N}"
            )));
        }
        Ok(OperatorSpace { n })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        3 * self.n
    }

    pub fn axis(&self, alpha: Index, i: usize) -> usize {
        alpha.block() * self.n + i
    }

    /// `E^α_i`, with `i` zero-based.
    pub fn basis_op(&self, alpha: Index, i: usize) -> Result<OperatorMatrix> {
        if i >= self.n {
            return Err(GeometryError::InvalidParameter(format!(
                "i = {i} out of range"
            )));
        }
        let axis = self.axis(alpha, i);
        let bit = 1u32 << axis;
        Ok(OperatorMatrix::from_basis_action(self.dim(), |s| {
            let sign = if s.count_below(axis) % 2 == 0 {
                1.0
            } else {
                -1.0
            };
            match (alpha.is_barred(), s.contains(axis)) {
                (false, false) => vec![(AxisSet(s.0 | bit), sign)],
                (true, true) => vec![(AxisSet(s.0 & !bit), sign)],
                _ => Vec::new(),
            }
        }))
    }

    /// `L_{αβ} = Σ_i E^α_i E^β_i`.
    pub fn l(&self, alpha: Index, beta: Index) -> OperatorMatrix {
        let mut acc = OperatorMatrix::zero(self.dim());
        for i in 0..self.n {
            let ea = self.basis_op(alpha, i).expect("i in range");
            let eb = self.basis_op(beta, i).expect("i in range");
            acc = acc
                .add(&ea.compose(&eb).expect("same space"))
                .expect("same space");
        }
        acc
    }

    /// `(e_0, e_1, e_2, f_0, f_1, f_2, h_0, h_1, h_2)`.
    pub fn chevalley_basis(&self) -> ChevalleyBasis {
        let (p, b) = (Index::plain, Index::barred);
        let e = [self.l(p(0), b(1)), self.l(p(1), b(2)), self.l(b(1), b(0))];
        let f = [self.l(b(0), p(1)), self.l(b(1), p(2)), self.l(p(1), p(0))];
        let diff = |x: OperatorMatrix, y: OperatorMatrix| x.sub(&y).expect("same space");
        let h = [
            diff(self.l(b(0), p(0)), self.l(b(1), p(1))),
            diff(self.l(b(1), p(1)), self.l(b(2), p(2))),
            diff(self.l(p(1), b(1)), self.l(b(0), p(0))),
        ];
        ChevalleyBasis { e, f, h }
    }

    /// `L_0, L_1, L_2` and their adjoints.
    pub fn sl4_generators(&self) -> Vec<OperatorMatrix> {
        let (p, b) = (Index::plain, Index::barred);
        vec![
            self.l(p(1), p(2)),
            self.l(p(0), p(1)),
            self.l(p(0), p(2)),
            self.l(b(2), b(1)),
            self.l(b(1), b(0)),
            self.l(b(2), b(0)),
        ]
    }

    /// `L_1 = ω_1∧` and its adjoint: the Lefschetz pair of a single form.
    pub fn lefschetz_pair(&self) -> Vec<OperatorMatrix> {
        let (p, b) = (Index::plain, Index::barred);
        vec![self.l(p(0), p(1)), self.l(b(1), b(0))]
    }
}

#[derive(Clone, Debug)]
pub struct ChevalleyBasis {
    pub e: [OperatorMatrix; 3],
    pub f: [OperatorMatrix; 3],
    pub h: [OperatorMatrix; 3],
}

/// Cartan matrix of `A_3`.
pub const CARTAN_A3: [[f64; 3]; 3] = [[2.0, -1.0, 0.0], [-1.0, 2.0, -1.0], [0.0, -1.0, 2.0]];

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RelationRecord {
    pub family: String,
    pub indices: String,
    pub residual: f64,
}

impl RelationRecord {
    pub fn holds(&self) -> bool {
        self.residual < RELATION_TOL
    }
}

fn record(
    family: &str,
    indices: String,
    lhs: &OperatorMatrix,
    rhs: &OperatorMatrix,
) -> RelationRecord {
    RelationRecord {
        family: family.into(),
        indices,
        residual: lhs.distance(rhs).expect("same space"),
    }
}

/// Every instance of the Chevalley relations, including `[h_i, h_j] = 0`.
pub fn chevalley_relations(basis: &ChevalleyBasis) -> Vec<RelationRecord> {
    let zero = OperatorMatrix::zero(basis.e[0].dim());
    let br = |a: &OperatorMatrix, b: &OperatorMatrix| commutator(a, b).expect("same space");
    let mut out = Vec::new();
    for i in 0..3 {
        for j in 0..3 {
            let a = CARTAN_A3[i][j];
            let ef = if i == j {
                basis.h[i].clone()
            } else {
                zero.clone()
            };
            out.push(record(
                "[e,f]",
                format!("{i}{j}"),
                &br(&basis.e[i], &basis.f[j]),
                &ef,
            ));
            out.push(record(
                "[e,h]",
                format!("{i}{j}"),
                &br(&basis.e[i], &basis.h[j]),
                &basis.e[i].scaled(a),
            ));
            out.push(record(
                "[f,h]",
                format!("{i}{j}"),
                &br(&basis.f[i], &basis.h[j]),
                &basis.f[i].scaled(-a),
            ));
            out.push(record(
                "[h,h]",
                format!("{i}{j}"),
                &br(&basis.h[i], &basis.h[j]),
                &zero,
            ));
        }
    }
    out
}

/// Relations among the `E^α_i`: anticommutation and the unit anticommutator.
pub fn basis_relations(space: &OperatorSpace) -> Vec<RelationRecord> {
    let n = space.n();
    let id = OperatorMatrix::identity(space.dim());
    let zero = OperatorMatrix::zero(space.dim());
    let ops: Vec<((Index, usize), OperatorMatrix)> = Index::ALL
        .iter()
        .flat_map(|&a| (0..n).map(move |i| (a, i)))
        .map(|(a, i)| ((a, i), space.basis_op(a, i).expect("i in range")))
        .collect();
    let mut out = Vec::new();
    for ((a, i), ea) in &ops {
        for ((b, j), eb) in &ops {
            let anti = ea
                .compose(eb)
                .unwrap()
                .add(&eb.compose(ea).unwrap())
                .unwrap();
            let tag = format!("{a}_{i} {b}_{j}");
            if (*i, *a) == (*j, b.bar()) {
                out.push(record("E anticommutator = Id", tag, &anti, &id));
            } else {
                out.push(record("E anticommute", tag, &anti, &zero));
            }
        }
    }
    out
}

/// The relations among the `L_{αβ}` swept over every admissible index
/// combination. Families are numbered as in the standard list: antisymmetry,
/// the `[L_{αβ}, L_{β̄ᾱ}]` rule, the contraction rule, and the two vanishing
/// rules. The contraction rule also needs `α ≠ β̄`; when `α = β̄` the bracket is
/// governed by the second rule instead.
pub fn commutation_relations(space: &OperatorSpace) -> Vec<RelationRecord> {
    let mut ls: HashMap<(Index, Index), OperatorMatrix> = HashMap::new();
    for a in Index::ALL {
        for b in Index::ALL {
            ls.insert((a, b), space.l(a, b));
        }
    }
    let l = |a: Index, b: Index| &ls[&(a, b)];
    let zero = OperatorMatrix::zero(space.dim());
    let mut jobs: Vec<(u8, [Index; 4])> = Vec::new();
    for a in Index::ALL {
        for b in Index::ALL {
            if a != b.bar() {
                jobs.push((1, [a, b, a, b]));
            }
            if a != b {
                jobs.push((2, [a, b, a, b]));
            }
            for c in Index::ALL {
                if a != c && b != c.bar() && a != b.bar() {
                    jobs.push((3, [a, b, c, c]));
                }
                if a != c.bar() && b != c.bar() {
                    jobs.push((5, [a, b, c, c]));
                }
                for d in Index::ALL {
                    if ![a, b].contains(&c.bar()) && ![a, b].contains(&d.bar()) {
                        jobs.push((4, [a, b, c, d]));
                    }
                }
            }
        }
    }
    jobs.par_iter()
        .map(|&(fam, [a, b, c, d])| {
            let br = |x: &OperatorMatrix, y: &OperatorMatrix| commutator(x, y).expect("same space");
            match fam {
                1 => record(
                    "L antisymmetry",
                    format!("{a}{b}"),
                    &l(a, b).scaled(-1.0),
                    l(b, a),
                ),
                2 => record(
                    "[L_ab, L_b'a'] = L_bb' - L_a'a",
                    format!("{a}{b}"),
                    &br(l(a, b), l(b.bar(), a.bar())),
                    &l(b, b.bar()).sub(l(a.bar(), a)).unwrap(),
                ),
                3 => record(
                    "[L_ac, L_c'b] = L_ab",
                    format!("{a}{c}{b}"),
                    &br(l(a, c), l(c.bar(), b)),
                    l(a, b),
                ),
                4 => record(
                    "[L_ab, L_cd] = 0",
                    format!("{a}{b}{c}{d}"),
                    &br(l(a, b), l(c, d)),
                    &zero,
                ),
                _ => record(
                    "[L_ac, L_cb] = 0",
                    format!("{a}{c}{b}"),
                    &br(l(a, c), l(c, b)),
                    &zero,
                ),
            }
        })
        .collect()
}

/// Index triples excluded from the contraction rule by `α ≠ β̄`, with the
/// residual of the literal statement on each.
pub fn contraction_rule_exceptions(space: &OperatorSpace) -> Vec<RelationRecord> {
    let mut out = Vec::new();
    for a in Index::ALL {
        for c in Index::ALL {
            let b = a.bar();
            if a != c && b != c.bar() {
                let lhs = commutator(&space.l(a, c), &space.l(c.bar(), b)).unwrap();
                out.push(record(
                    "[L_ac, L_c'b] = L_ab (b = a')",
                    format!("{a}{c}{b}"),
                    &lhs,
                    &space.l(a, b),
                ));
            }
        }
    }
    out
}

type SparseVec = HashMap<u64, f64>;

fn vectorize(op: &OperatorMatrix) -> SparseVec {
    op.entries()
        .map(|(r, c, v)| (((c as u64) << 32) | r as u64, v))
        .collect()
}

fn dot(a: &SparseVec, b: &SparseVec) -> f64 {
    let (small, large) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    small
        .iter()
        .map(|(k, v)| v * large.get(k).copied().unwrap_or(0.0))
        .sum()
}

#[derive(Clone, Debug)]
pub struct Closure {
    /// Orthonormal (Frobenius) basis of the generated algebra.
    pub basis: Vec<OperatorMatrix>,
    pub rounds: usize,
}

impl Closure {
    pub fn dimension(&self) -> usize {
        self.basis.len()
    }

    /// Smallest singular value of the trace form `tr(XY)` on the basis,
    /// relative to the largest.
    pub fn trace_form_conditioning(&self) -> f64 {
        let k = self.basis.len();
        if k == 0 {
            return 0.0;
        }
        let mut m = DMatrix::zeros(k, k);
        for i in 0..k {
            for j in i..k {
                let t = self.basis[i]
                    .compose(&self.basis[j])
                    .expect("same space")
                    .trace();
                m[(i, j)] = t;
                m[(j, i)] = t;
            }
        }
        let sv = m.singular_values();
        let max = sv.max();
        if max == 0.0 {
            0.0
        } else {
            sv.min() / max
        }
    }
}

/// Try to add `op` to the orthonormal basis; returns whether it was new.
fn absorb(basis: &mut Vec<OperatorMatrix>, vecs: &mut Vec<SparseVec>, op: &OperatorMatrix) -> bool {
    let norm0 = op.frobenius();
    if norm0 == 0.0 {
        return false;
    }
    let mut cur = op.clone();
    // two passes of classical Gram–Schmidt for stability
    for _ in 0..2 {
        let v = vectorize(&cur);
        for (b, bv) in basis.iter().zip(vecs.iter()) {
            let c = dot(&v, bv);
            if c != 0.0 {
                cur = cur.lin_comb(1.0, b, -c).expect("same space");
            }
        }
    }
    let r = cur.frobenius();
    if r <= CLOSURE_TOL * norm0.max(1.0) {
        return false;
    }
    let unit = cur.scaled(1.0 / r);
    vecs.push(vectorize(&unit));
    basis.push(unit);
    true
}

/// Closure of `gens` under brackets.
pub fn lie_closure(gens: &[OperatorMatrix]) -> Result<Closure> {
    let mut basis = Vec::new();
    let mut vecs = Vec::new();
    for g in gens {
        absorb(&mut basis, &mut vecs, g);
    }
    let mut checked = 0;
    for round in 1..=MAX_ROUNDS {
        let len = basis.len();
        let pairs: Vec<(usize, usize)> = (0..len)
            .flat_map(|i| (i + 1..len).map(move |j| (i, j)))
            .filter(|&(_, j)| j >= checked)
            .collect();
        let brackets: Vec<OperatorMatrix> = pairs
            .par_iter()
            .map(|&(i, j)| commutator(&basis[i], &basis[j]))
            .collect::<Result<_>>()?;
        checked = len;
        let before = basis.len();
        for b in &brackets {
            absorb(&mut basis, &mut vecs, b);
        }
        if basis.len() == before {
            return Ok(Closure {
                basis,
                rounds: round,
            });
        }
    }
    Err(GeometryError::NonConvergence(MAX_ROUNDS))
}

pub fn generated_dimension(gens: &[OperatorMatrix]) -> Result<usize> {
    lie_closure(gens).map(|c| c.dimension())
}
