//! Fibre products of flat Lagrangian torus fibrations over a common base.

use nalgebra::DMatrix;

use super::structure::ConstantStructure;
use crate::error::{check_dim, GeometryError, Result};
use crate::exterior::{AxisLayout, AxisSet, MetricMatrix, Multivector};
use crate::linalg::{complement, RANK_TOL};
use crate::polylinear::{deform, Deformation, PolyStructure};

/// Allowed disagreement between the two base metrics.
pub const BASE_METRIC_TOL: f64 = 1e-10;

/// A flat Kähler torus `T^{2n}` with coordinates `(b, u)`, Kähler form
/// `Σ C_ab db_a∧du_b` and metric `blockdiag(g_B, G_F)`, fibred over the
/// `b`-torus. Compatibility forces `G_F = Cᵀ g_B⁻¹ C`.
#[derive(Clone, Debug, PartialEq)]
pub struct FlatTorusFibration {
    base_metric: DMatrix<f64>,
    coupling: DMatrix<f64>,
    fibre_metric: DMatrix<f64>,
}

impl FlatTorusFibration {
    pub fn new(base_metric: &MetricMatrix, coupling: DMatrix<f64>) -> Result<Self> {
        let n = base_metric.dim();
        check_dim(n, coupling.nrows())?;
        check_dim(n, coupling.ncols())?;
        let ginv = base_metric
            .matrix()
            .clone()
            .try_inverse()
            .ok_or(GeometryError::NotPositiveDefinite)?;
        if coupling.clone().try_inverse().is_none() {
            return Err(GeometryError::Degenerate(
                "coupling matrix is singular".into(),
            ));
        }
        let f = coupling.transpose() * ginv * &coupling;
        Ok(FlatTorusFibration {
            base_metric: base_metric.matrix().clone(),
            coupling,
            fibre_metric: (&f + f.transpose()) * 0.5,
        })
    }

    pub fn n(&self) -> usize {
        self.base_metric.nrows()
    }

    pub fn base_metric(&self) -> &DMatrix<f64> {
        &self.base_metric
    }

    pub fn coupling(&self) -> &DMatrix<f64> {
        &self.coupling
    }

    pub fn fibre_metric(&self) -> &DMatrix<f64> {
        &self.fibre_metric
    }

    /// Metric of the total space in `(b, u)` coordinates.
    pub fn total_metric(&self) -> DMatrix<f64> {
        block_diag(&[&self.base_metric, &self.fibre_metric])
    }
}

fn block_diag(blocks: &[&DMatrix<f64>]) -> DMatrix<f64> {
    let d: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut m = DMatrix::zeros(d, d);
    let mut at = 0;
    for b in blocks {
        m.view_mut((at, at), b.shape()).copy_from(*b);
        at += b.nrows();
    }
    m
}

#[derive(Clone, Debug, PartialEq)]
pub struct FibreProduct {
    pub structure: ConstantStructure,
    /// Riemannian-submersion defects of the projections to the first factor,
    /// the second factor and the base.
    pub projection_residuals: [f64; 3],
}

/// `g_π − π^*g_target` on the `h`-orthogonal complement of `ker dπ`.
fn submersion_defect(h: &DMatrix<f64>, proj: &DMatrix<f64>, target: &DMatrix<f64>) -> f64 {
    let d = h.nrows();
    let ker = crate::linalg::null_space(proj, RANK_TOL);
    // h-orthogonal complement of ker: vectors v with kerᵀ h v = 0
    let horiz = if ker.ncols() == 0 {
        DMatrix::identity(d, d)
    } else {
        complement(&(h * &ker), RANK_TOL)
    };
    let up = horiz.transpose() * h * &horiz;
    let pushed = proj * &horiz;
    let down = pushed.transpose() * target * &pushed;
    (up - down).amax()
}

/// The almost 2-Kähler structure on `X_1 ×_B X_2`, in coordinates
/// `(b, u¹, u²)`: the product metric is pulled back, both forms are scaled by
/// `√2`, and the metric is then normalized by `β_{1/√2}` followed by `α_{1/√2}`.
pub fn fibre_product(f1: &FlatTorusFibration, f2: &FlatTorusFibration) -> Result<FibreProduct> {
    let n = f1.n();
    check_dim(n, f2.n())?;
    let gap = (f1.base_metric() - f2.base_metric()).amax();
    if gap > BASE_METRIC_TOL {
        return Err(GeometryError::Precondition(format!(
            "base metrics differ by {gap:.3e}"
        )));
    }
    let lay = AxisLayout::new(n, 2);
    let form = |j: usize, c: &DMatrix<f64>, scale: f64| {
        let mut m = Multivector::zero(3 * n);
        for a in 0..n {
            for b in 0..n {
                m.add_term(
                    AxisSet::from_axes(&[lay.x(a), lay.y(j, b)]).expect("distinct"),
                    scale * c[(a, b)],
                );
            }
        }
        m
    };
    let product = block_diag(&[
        &(f1.base_metric() + f2.base_metric()),
        f1.fibre_metric(),
        f2.fibre_metric(),
    ]);
    let root2 = 2f64.sqrt();
    let raw = PolyStructure::new(
        n,
        2,
        vec![form(1, f1.coupling(), root2), form(2, f2.coupling(), root2)],
    )?
    .with_metric(MetricMatrix::new(product)?)?;
    let s = 1.0 / root2;
    let normalized = deform(&deform(&raw, Deformation::Beta, s)?, Deformation::Alpha, s)?;
    let structure = ConstantStructure::from_poly(&normalized)?;

    let h = structure.metric_value().matrix().clone();
    let select = |axes: Vec<usize>| {
        DMatrix::from_fn(
            axes.len(),
            3 * n,
            |r, c| if axes[r] == c { 1.0 } else { 0.0 },
        )
    };
    let base_axes: Vec<usize> = (0..n).map(|a| lay.x(a)).collect();
    let fibre_axes = |j: usize| (0..n).map(move |a| lay.y(j, a));
    let to1 = select(base_axes.iter().copied().chain(fibre_axes(1)).collect());
    let to2 = select(base_axes.iter().copied().chain(fibre_axes(2)).collect());
    let to_b = select(base_axes.clone());
    let projection_residuals = [
        submersion_defect(&h, &to1, &f1.total_metric()),
        submersion_defect(&h, &to2, &f2.total_metric()),
        submersion_defect(&h, &to_b, f1.base_metric()),
    ];
    Ok(FibreProduct {
        structure,
        projection_residuals,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::patch::structure::{FieldStructure, FormKind};
    use crate::polylinear::is_compatible;

    #[test]
    fn unit_factors_give_normal_form() {
        let g = MetricMatrix::identity(1);
        let f = FlatTorusFibration::new(&g, DMatrix::identity(1, 1)).unwrap();
        let fp = fibre_product(&f, &f).unwrap();
        let nf = PolyStructure::normal_form(1, 2);
        let s = &fp.structure;
        assert!((s.form_value(FormKind::Omega1) - nf.omega(1)).max_abs() < 1e-12);
        assert!((s.form_value(FormKind::Omega2) - nf.omega(2)).max_abs() < 1e-12);
        assert!((s.metric_value().matrix() - DMatrix::<f64>::identity(3, 3)).amax() < 1e-12);
        assert!(fp.projection_residuals.iter().all(|&r| r < 1e-12));
    }

    #[test]
    fn random_factors_are_compatible_and_riemannian() {
        let mut rng = crate::sampling::rng(8);
        for n in 1..=3 {
            let gb = MetricMatrix::new(crate::sampling::random_spd(&mut rng, n, 0.5, 2.0)).unwrap();
            let c1 = crate::sampling::random_invertible(&mut rng, n, 0.5, 2.0);
            let c2 = crate::sampling::random_invertible(&mut rng, n, 0.5, 2.0);
            let fp = fibre_product(
                &FlatTorusFibration::new(&gb, c1).unwrap(),
                &FlatTorusFibration::new(&gb, c2).unwrap(),
            )
            .unwrap();
            let ps = fp.structure.poly_structure(&vec![0.0; 3 * n]).unwrap();
            assert!(is_compatible(&ps).unwrap().compatible);
            assert!(
                fp.projection_residuals.iter().all(|&r| r < 1e-10),
                "{:?}",
                fp.projection_residuals
            );
        }
    }

    #[test]
    fn mismatched_bases_are_rejected() {
        let f1 =
            FlatTorusFibration::new(&MetricMatrix::identity(1), DMatrix::identity(1, 1)).unwrap();
        let f2 = FlatTorusFibration::new(
            &MetricMatrix::diagonal(&[2.0]).unwrap(),
            DMatrix::identity(1, 1),
        )
        .unwrap();
        assert!(matches!(
            fibre_product(&f1, &f2),
            Err(GeometryError::Precondition(_))
        ));
    }
}
