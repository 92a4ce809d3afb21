//! Exterior derivatives, Levi-Civita derivatives and Frobenius checks of
//! structure fields, all via dual numbers with finite-difference cross-checks.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use super::structure::{Coefficients, FieldStructure, FormField, FormKind, StructureForm};
use crate::dual::{lift, seed, Dual, Scalar};
use crate::error::{check_dim, GeometryError, Result};
use crate::exterior::{wedge_sign, AxisSet, MetricMatrix, Multivector};
use crate::linalg::{column_space, hstack, null_space, RANK_TOL};

/// Weak self-duality threshold on `|dω_D|`.
pub const CLOSEDNESS_TOL: f64 = 1e-8;
/// Frobenius threshold on the normal part of brackets.
pub const INTEGRABILITY_TOL: f64 = 1e-8;
/// Step for the Richardson-extrapolated frame derivatives.
pub const BRACKET_STEP: f64 = 1e-3;

fn accumulate<T: Scalar>(terms: Coefficients<T>) -> BTreeMap<AxisSet, T> {
    let mut m = BTreeMap::new();
    for (k, c) in terms {
        *m.entry(k).or_insert(T::zero()) += c;
    }
    m
}

/// `dF` at `p` from exact first derivatives of the coefficients.
pub fn exterior_derivative<F: FormField>(f: &F, p: &[f64]) -> Result<Multivector> {
    let d = f.dim();
    check_dim(d, p.len())?;
    let base: Vec<f64> = p.to_vec();
    let mut out = Multivector::zero(d);
    for a in 0..d {
        let da = AxisSet::single(a);
        for (set, c) in accumulate(f.coefficients(&seed(&base, a))?) {
            if set.contains(a) {
                continue;
            }
            out.add_term(AxisSet(set.0 | da.0), wedge_sign(da, set) * c.eps);
        }
    }
    Ok(out)
}

/// `dF` at `p` by central differences with step `h`.
pub fn exterior_derivative_fd<F: FormField>(f: &F, p: &[f64], h: f64) -> Result<Multivector> {
    let d = f.dim();
    check_dim(d, p.len())?;
    let mut out = Multivector::zero(d);
    for a in 0..d {
        let mut pp = p.to_vec();
        let mut pm = p.to_vec();
        pp[a] += h;
        pm[a] -= h;
        let plus = Multivector::from_terms(d, f.coefficients(&pp)?);
        let minus = Multivector::from_terms(d, f.coefficients(&pm)?);
        let da = AxisSet::single(a);
        for (set, c) in (&plus - &minus).terms() {
            if !set.contains(a) {
                out.add_term(AxisSet(set.0 | da.0), wedge_sign(da, set) * c / (2.0 * h));
            }
        }
    }
    Ok(out)
}

/// Largest relative discrepancy between dual-number and central-difference
/// first derivatives over every form and metric coefficient at `p`.
///
/// The relative error is `|ad − fd| / max(|ad|, |fd|, 1)`, so coefficients
/// that vanish are compared absolutely.
pub fn gradient_check<F: FieldStructure>(f: &F, p: &[f64], h: f64) -> Result<f64> {
    let d = f.dim();
    check_dim(d, p.len())?;
    let rel = |ad: f64, fd: f64| (ad - fd).abs() / ad.abs().max(fd.abs()).max(1.0);
    let mut worst = 0.0_f64;
    for a in 0..d {
        let s = seed(&lift::<f64>(p), a);
        let mut pp = p.to_vec();
        let mut pm = p.to_vec();
        pp[a] += h;
        pm[a] -= h;
        for kind in FormKind::ALL {
            let ad = accumulate(f.form(kind, &s)?);
            let plus = accumulate(f.form(kind, &pp)?);
            let minus = accumulate(f.form(kind, &pm)?);
            let keys: std::collections::BTreeSet<AxisSet> = ad
                .keys()
                .chain(plus.keys())
                .chain(minus.keys())
                .copied()
                .collect();
            for k in keys {
                let a_val = ad.get(&k).map(|v: &Dual<f64>| v.eps).unwrap_or(0.0);
                let fd = (plus.get(&k).copied().unwrap_or(0.0)
                    - minus.get(&k).copied().unwrap_or(0.0))
                    / (2.0 * h);
                worst = worst.max(rel(a_val, fd));
            }
        }
        let ad = f.metric(&s)?;
        let plus = f.metric(&pp)?;
        let minus = f.metric(&pm)?;
        for k in 0..d * d {
            worst = worst.max(rel(ad[k].eps, (plus[k] - minus[k]) / (2.0 * h)));
        }
    }
    Ok(worst)
}

/// `|dω|` for each of the three forms.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Closedness {
    pub omega_1: f64,
    pub omega_2: f64,
    pub omega_d: f64,
}

pub fn closedness<F: FieldStructure>(f: &F, p: &[f64]) -> Result<Closedness> {
    let norm =
        |kind| exterior_derivative(&StructureForm { structure: f, kind }, p).map(|m| m.norm());
    Ok(Closedness {
        omega_1: norm(FormKind::Omega1)?,
        omega_2: norm(FormKind::Omega2)?,
        omega_d: norm(FormKind::OmegaD)?,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WeakSelfDualReport {
    pub points: usize,
    /// Max over the grid of the coefficient norm of `dω_D`.
    pub max_d_omega_d: f64,
    pub max_d_omega_1: f64,
    pub max_d_omega_2: f64,
    pub passed: bool,
}

/// Evaluate `dω_1, dω_2, dω_D` over a grid, in parallel.
pub fn verify_weak_selfdual<F: FieldStructure>(
    f: &F,
    grid: &[Vec<f64>],
) -> Result<WeakSelfDualReport> {
    let per_point: Vec<Closedness> = grid
        .par_iter()
        .map(|p| closedness(f, p))
        .collect::<Result<_>>()?;
    let max = |sel: fn(&Closedness) -> f64| per_point.iter().map(sel).fold(0.0, f64::max);
    let max_d_omega_d = max(|c| c.omega_d);
    Ok(WeakSelfDualReport {
        points: grid.len(),
        max_d_omega_d,
        max_d_omega_1: max(|c| c.omega_1),
        max_d_omega_2: max(|c| c.omega_2),
        passed: max_d_omega_d < CLOSEDNESS_TOL,
    })
}

/// Product of the volume of `ℝⁿ/ℤⁿ` under `g` and the volume of the quotient
/// by the `g`-dual lattice `g⁻¹ℤⁿ`, each from its own Gram matrix.
pub fn fibre_volume_product(g: &MetricMatrix) -> f64 {
    let vol = |gram: DMatrix<f64>| match gram.cholesky() {
        Some(ch) => ch.l().diagonal().iter().product::<f64>(),
        None => f64::NAN,
    };
    let m = g.matrix();
    let Some(dual) = m.clone().try_inverse() else {
        return f64::NAN;
    };
    let dual_gram = dual.transpose() * m * &dual;
    vol(m.clone()) * vol((&dual_gram + dual_gram.transpose()) * 0.5)
}

/// Coordinate norms of `∇ω_1, ∇ω_2, ∇ω_D` at a point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CovariantResiduals {
    pub omega_1: f64,
    pub omega_2: f64,
    pub omega_d: f64,
}

impl CovariantResiduals {
    pub fn max(&self) -> f64 {
        self.omega_1.max(self.omega_2).max(self.omega_d)
    }
}

fn form_matrix<T: Scalar>(d: usize, terms: Coefficients<T>) -> Vec<T> {
    let mut m = vec![T::zero(); d * d];
    for (set, c) in terms {
        let ax: Vec<usize> = set.axes().collect();
        if let [a, b] = ax[..] {
            m[a * d + b] += c;
            m[b * d + a] -= c;
        }
    }
    m
}

/// Levi-Civita derivatives of the three forms, with Christoffel symbols from
/// exact first derivatives of the metric field. The norm is the Frobenius norm
/// of the coordinate components `(∇_a ω)_{bc}`.
pub fn covariant_constancy<F: FieldStructure>(f: &F, p: &[f64]) -> Result<CovariantResiduals> {
    let d = f.dim();
    check_dim(d, p.len())?;
    let h = DMatrix::from_row_slice(d, d, &f.metric(p)?);
    let hinv = h
        .clone()
        .try_inverse()
        .ok_or(GeometryError::NotPositiveDefinite)?;
    if h.clone().cholesky().is_none() {
        return Err(GeometryError::NotPositiveDefinite);
    }
    let base = lift::<f64>(p);
    let seeds: Vec<Vec<Dual<f64>>> = (0..d).map(|a| seed(&base, a)).collect();
    // dh[a][(b,c)] = ∂_a h_bc
    let dh: Vec<DMatrix<f64>> = seeds
        .iter()
        .map(|s| {
            f.metric(s)
                .map(|m| DMatrix::from_fn(d, d, |b, c| m[b * d + c].eps))
        })
        .collect::<Result<_>>()?;
    // gamma[e][(a,b)] = Γ^e_ab
    let lowered =
        |f_: usize, a: usize, b: usize| 0.5 * (dh[a][(f_, b)] + dh[b][(f_, a)] - dh[f_][(a, b)]);
    let gamma: Vec<DMatrix<f64>> = (0..d)
        .map(|e| {
            DMatrix::from_fn(d, d, |a, b| {
                (0..d).map(|f_| hinv[(e, f_)] * lowered(f_, a, b)).sum()
            })
        })
        .collect();
    let mut res = [0.0; 3];
    for (slot, kind) in FormKind::ALL.into_iter().enumerate() {
        let w = DMatrix::from_row_slice(d, d, &form_matrix(d, f.form(kind, p)?));
        let mut sq = 0.0;
        for a in 0..d {
            let dw = form_matrix(d, f.form(kind, &seeds[a])?);
            for b in 0..d {
                for c in 0..d {
                    let mut v = dw[b * d + c].eps;
                    for e in 0..d {
                        v -= gamma[e][(a, b)] * w[(e, c)] + gamma[e][(a, c)] * w[(b, e)];
                    }
                    sq += v * v;
                }
            }
        }
        res[slot] = sq.sqrt();
    }
    Ok(CovariantResiduals {
        omega_1: res[0],
        omega_2: res[1],
        omega_d: res[2],
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IntegrabilityVerdict {
    pub forms: Vec<FormKind>,
    /// Rank of the distribution at the point.
    pub rank: usize,
    /// Largest normal component of a bracket of frame fields.
    pub residual: f64,
    pub integrable: bool,
}

fn kernel_projector<F: FieldStructure>(
    f: &F,
    kinds: &[FormKind],
    q: &[f64],
) -> Result<(DMatrix<f64>, usize)> {
    let d = f.dim();
    let mut blocks = Vec::new();
    for &k in kinds {
        let w = DMatrix::from_row_slice(d, d, &form_matrix(d, f.form(k, q)?));
        blocks.push(null_space(&w.transpose(), RANK_TOL));
    }
    let refs: Vec<&DMatrix<f64>> = blocks.iter().collect();
    let span = column_space(&hstack(&refs), RANK_TOL);
    Ok((&span * span.transpose(), span.ncols()))
}

/// Frobenius test for `Σ_k ker ω_k` over the chosen forms.
///
/// The local frame is `X_i(q) = P(q) b_i`, where `P(q)` projects onto the
/// distribution and `b_i` is a basis at `p`; frame derivatives come from
/// Richardson-extrapolated central differences.
pub fn leaf_integrability_check<F: FieldStructure>(
    f: &F,
    p: &[f64],
    kinds: &[FormKind],
) -> Result<IntegrabilityVerdict> {
    let d = f.dim();
    check_dim(d, p.len())?;
    let (p0, rank) = kernel_projector(f, kinds, p)?;
    let b0 = column_space(&p0, 1e-8);
    let frame_at = |q: &[f64]| kernel_projector(f, kinds, q).map(|(pq, _)| &pq * &b0);
    let central = |a: usize, h: f64| -> Result<DMatrix<f64>> {
        let mut qp = p.to_vec();
        let mut qm = p.to_vec();
        qp[a] += h;
        qm[a] -= h;
        Ok((frame_at(&qp)? - frame_at(&qm)?) / (2.0 * h))
    };
    // derivs[a] = ∂_a of the frame (d × rank)
    let derivs: Vec<DMatrix<f64>> = (0..d)
        .map(|a| {
            let coarse = central(a, BRACKET_STEP)?;
            let fine = central(a, BRACKET_STEP / 2.0)?;
            Ok((fine * 4.0 - coarse) / 3.0)
        })
        .collect::<Result<_>>()?;
    let x0 = frame_at(p)?;
    let normal = DMatrix::identity(d, d) - &p0;
    let directional = |v: &DVector<f64>, j: usize| -> DVector<f64> {
        (0..d).fold(DVector::zeros(d), |acc, a| acc + derivs[a].column(j) * v[a])
    };
    let mut residual = 0.0_f64;
    for i in 0..b0.ncols() {
        for j in i + 1..b0.ncols() {
            let xi = x0.column(i).into_owned();
            let xj = x0.column(j).into_owned();
            let bracket = directional(&xi, j) - directional(&xj, i);
            residual = residual.max((&normal * bracket).norm());
        }
    }
    Ok(IntegrabilityVerdict {
        forms: kinds.to_vec(),
        rank,
        residual,
        integrable: residual < INTEGRABILITY_TOL,
    })
}

/// Default finite-difference step for [`gradient_check`]. Central
/// differences on quartic potentials carry an `O(h²)` truncation error of
/// about `100 h²` relative, so the step sits near the rounding crossover.
pub const GRADIENT_STEP: f64 = 1e-5;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::patch::potential::{Monomial, Potential, PotentialChart};
    use crate::patch::structure::build_xy;
    use crate::patch::FD_STEP;
    use crate::sampling;

    /// `x dy¹` or `y² dx` on a 3-dimensional chart.
    struct Simple(bool);

    impl FormField for Simple {
        fn dim(&self) -> usize {
            3
        }
        fn coefficients<T: Scalar>(&self, p: &[T]) -> Result<Coefficients<T>> {
            Ok(if self.0 {
                vec![(AxisSet::single(1), p[0])]
            } else {
                vec![(AxisSet::single(0), p[2])]
            })
        }
    }

    /// `ω_1 = dx∧dy¹`, `ω_2 = dx∧dy² + ε y² dy¹∧dy²`: the kernels span a
    /// contact-type plane field.
    struct Twisted(f64);

    impl FieldStructure for Twisted {
        fn n(&self) -> usize {
            1
        }
        fn form<T: Scalar>(&self, kind: FormKind, p: &[T]) -> Result<Coefficients<T>> {
            let s = |a: &[usize]| AxisSet::from_axes(a).unwrap();
            Ok(match kind {
                FormKind::Omega1 => vec![(s(&[0, 1]), T::one())],
                FormKind::Omega2 => vec![(s(&[0, 2]), T::one()), (s(&[1, 2]), p[2].scale(self.0))],
                FormKind::OmegaD => vec![(s(&[1, 2]), T::one())],
            })
        }
        fn metric<T: Scalar>(&self, _p: &[T]) -> Result<Vec<T>> {
            Ok((0..9)
                .map(|k| if k % 4 == 0 { T::one() } else { T::zero() })
                .collect())
        }
    }

    fn quartic1d() -> XyChart {
        let k = Potential::Polynomial {
            terms: vec![Monomial {
                coef: 1.0 / 12.0,
                powers: vec![4],
            }],
        };
        build_xy(PotentialChart::new(1, k, vec![0.5], vec![2.0]).unwrap()).unwrap()
    }

    type XyChart = crate::patch::structure::XyStructure;

    fn random_chart(n: usize, seed: u64) -> XyChart {
        let mut rng = sampling::rng(seed);
        let k = Potential::random_convex_quartic(&mut rng, n);
        build_xy(PotentialChart::new(n, k, vec![-1.0; n], vec![1.0; n]).unwrap()).unwrap()
    }

    fn grid(n: usize, count: usize) -> Vec<Vec<f64>> {
        let mut lo = vec![-0.9; n];
        let mut hi = vec![0.9; n];
        lo.extend(vec![-2.0; 2 * n]);
        hi.extend(vec![2.0; 2 * n]);
        sampling::into_box(&sampling::halton(3 * n, count, 1), &lo, &hi)
    }

    #[test]
    fn derivative_of_simple_forms() {
        let p = [0.3, 0.1, -0.4];
        let d1 = exterior_derivative(&Simple(true), &p).unwrap();
        assert_eq!(d1, Multivector::blade(3, &[0, 1]));
        let d2 = exterior_derivative(&Simple(false), &p).unwrap();
        assert_eq!(d2, Multivector::blade(3, &[2, 0]));
        let fd = exterior_derivative_fd(&Simple(false), &p, FD_STEP).unwrap();
        assert!((&fd - &d2).max_abs() < 1e-10);
    }

    #[test]
    fn quartic_omega_d_is_closed() {
        let xy = quartic1d();
        for p in [[1.3, 0.4, -0.7], [0.6, -1.0, 2.0]] {
            let c = closedness(&xy, &p).unwrap();
            assert!(c.omega_d < 1e-10 && c.omega_1 < 1e-12, "{c:?}");
        }
    }

    #[test]
    fn random_quartics_are_weakly_self_dual() {
        for n in 1..=3 {
            let xy = random_chart(n, 40 + n as u64);
            let r = verify_weak_selfdual(&xy, &grid(n, 20)).unwrap();
            assert!(
                r.passed && r.max_d_omega_1 < 1e-10 && r.max_d_omega_2 < 1e-10,
                "{r:?}"
            );
        }
    }

    #[test]
    fn ad_matches_finite_differences() {
        let xy = random_chart(2, 3);
        for p in grid(2, 10) {
            assert!(gradient_check(&xy, &p, GRADIENT_STEP).unwrap() < 1e-6);
            let f = StructureForm {
                structure: &xy,
                kind: FormKind::OmegaD,
            };
            let ad = exterior_derivative(&f, &p).unwrap();
            let fd = exterior_derivative_fd(&f, &p, FD_STEP).unwrap();
            assert!((&ad - &fd).max_abs() < 1e-6);
        }
    }

    #[test]
    fn volume_product_is_one() {
        assert!((fibre_volume_product(&MetricMatrix::identity(3)) - 1.0).abs() < 1e-15);
        assert!(
            (fibre_volume_product(&MetricMatrix::diagonal(&[4.0]).unwrap()) - 1.0).abs() < 1e-15
        );
        let mut rng = sampling::rng(2);
        let g = MetricMatrix::new(sampling::random_spd(&mut rng, 3, 0.1, 10.0)).unwrap();
        assert!((fibre_volume_product(&g) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn parallel_forms_on_quadratic_charts_only() {
        let k = Potential::quadratic(&DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]));
        let flat =
            build_xy(PotentialChart::new(2, k, vec![-1.0; 2], vec![1.0; 2]).unwrap()).unwrap();
        let r = covariant_constancy(&flat, &[0.1, 0.2, 0.3, 0.4, 0.5, 0.6]).unwrap();
        assert!(r.max() < 1e-12, "{r:?}");
        let r = covariant_constancy(&quartic1d(), &[1.3, 0.4, -0.7]).unwrap();
        assert!(r.omega_1 > 1e-3, "{r:?}");
    }

    #[test]
    fn fibre_distribution_is_integrable() {
        let xy = random_chart(2, 9);
        let p = &grid(2, 3)[1];
        let v = leaf_integrability_check(&xy, p, &[FormKind::Omega1, FormKind::Omega2]).unwrap();
        assert_eq!(v.rank, 4);
        assert!(v.integrable, "{v:?}");
    }

    #[test]
    fn twisted_kernels_are_not_integrable() {
        let p = [0.2, 0.3, 0.5];
        let v = leaf_integrability_check(&Twisted(0.5), &p, &[FormKind::Omega1, FormKind::Omega2])
            .unwrap();
        assert_eq!(v.rank, 2);
        assert!(!v.integrable && v.residual > 0.1, "{v:?}");
        let v = leaf_integrability_check(&Twisted(0.0), &p, &[FormKind::Omega1, FormKind::Omega2])
            .unwrap();
        assert!(v.integrable, "{v:?}");
    }
}
