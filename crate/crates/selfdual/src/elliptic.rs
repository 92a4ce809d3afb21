//! Elliptic curves with complexified Kähler classes and the self-dual
//! 3-manifolds `X_{τ,t}` built from a pair of them.
//!
//! Chart coordinates on `X_{τ,t}` are `(b, u¹, u²)`: `b` is the imaginary
//! coordinate of `E_τ`, `u¹` its real coordinate, and `u²` the real coordinate
//! of `E_t` after rescaling its base so that both factors share `b`. The
//! lattice is generated by `(0,1,0)`, `(0,0,1)` and `(τ₂, τ₁, t₁)`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{GeometryError, Result};
use crate::exterior::{AxisSet, MetricMatrix, Multivector};
use crate::patch::{
    covariant_constancy, fibre_product, verify_weak_selfdual, ConstantStructure, FieldStructure,
    FlatTorusFibration, FormKind,
};
use crate::polylinear::{is_compatible, kernel, rotate_structure, PolyStructure, Rotation};

/// Allowed `|ℓ₁ℓ₂ − 1|` when recovering a mirror pair.
pub const SELF_DUAL_TOL: f64 = 1e-9;
/// Panels per side for [`complexified_area`].
pub const AREA_PANELS: usize = 129;
/// Threshold for the checks in [`selfdual_full_check`].
pub const CHECK_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EllipticParams {
    pub tau: Complex64,
    pub t: Complex64,
}

impl EllipticParams {
    pub fn new(tau: Complex64, t: Complex64) -> Result<Self> {
        if !(tau.im > 0.0 && t.im > 0.0) || !(tau.re.is_finite() && t.re.is_finite()) {
            return Err(GeometryError::InvalidParameter(format!(
                "(τ, t) = ({tau}, {t}) is not in H×H"
            )));
        }
        Ok(EllipticParams { tau, t })
    }

    pub fn swapped(&self) -> Self {
        EllipticParams {
            tau: self.t,
            t: self.tau,
        }
    }
}

/// `E_τ` with the complexified Kähler form `−t/(2 Im τ) dz∧dz̄`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveWithB {
    pub tau: Complex64,
    pub t: Complex64,
    /// The coefficient `−t/(2 Im τ)` of `dz∧dz̄`.
    pub kahler_coefficient: Complex64,
    /// The flat metric is this multiple of `dx² + dy²`.
    pub metric_coefficient: f64,
}

impl CurveWithB {
    pub fn new(tau: Complex64, t: Complex64) -> Result<Self> {
        EllipticParams::new(tau, t)?;
        Ok(CurveWithB {
            tau,
            t,
            kahler_coefficient: -t / (2.0 * tau.im),
            metric_coefficient: t.im / tau.im,
        })
    }
}

/// Which fibration each monodromy angle is attached to.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MonodromyConvention {
    /// `θ₁` is the translation of `X/ω₂^⊥ → B`, `θ₂` that of `X/ω₁^⊥ → B`.
    #[default]
    ProofTranslation,
    /// The two angles exchanged.
    SwappedLabels,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelfDualTorusData {
    pub base_length: f64,
    /// `ℓ_k` is the fibre length of `X → X/ω_k^⊥`.
    pub fibre_lengths: [f64; 2],
    /// Angles in `[0, 1)`.
    pub monodromy: [f64; 2],
    pub convention: MonodromyConvention,
}

/// `X_{τ,t}` as a constant-coefficient structure on `ℝ³` with its lattice.
#[derive(Clone, Debug, PartialEq)]
pub struct EllipticModel {
    pub params: EllipticParams,
    pub structure: ConstantStructure,
    /// Columns: base generator, `u¹` generator, `u²` generator.
    pub lattice: DMatrix<f64>,
}

/// The fibre product `E_τ ×_B E_t` with the normalized metric.
pub fn build_x(p: &EllipticParams) -> Result<EllipticModel> {
    let (tau, t) = (p.tau, p.t);
    let k = t.im / tau.im;
    let gb = MetricMatrix::diagonal(&[k])?;
    let e_tau = FlatTorusFibration::new(&gb, DMatrix::from_element(1, 1, k))?;
    let e_t = FlatTorusFibration::new(&gb, DMatrix::from_element(1, 1, 1.0))?;
    let fp = fibre_product(&e_tau, &e_t)?;
    #[rustfmt::skip]
    let lattice = DMatrix::from_row_slice(3, 3, &[
        tau.im, 0.0, 0.0,
        tau.re, 1.0, 0.0,
        t.re,   0.0, 1.0,
    ]);
    Ok(EllipticModel {
        params: *p,
        structure: fp.structure,
        lattice,
    })
}

fn wrap(theta: f64) -> f64 {
    let w = theta.rem_euclid(1.0);
    // rounding of a tiny negative angle lands just below 1
    if 1.0 - w < 1e-12 {
        0.0
    } else {
        w
    }
}

/// Distance on `ℝ/ℤ`.
pub fn circle_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(1.0);
    d.min(1.0 - d)
}

impl EllipticModel {
    /// Replace the metric by one whose `u²` fibre is `scale` times longer.
    pub fn with_fibre_scale(&self, scale: f64) -> Result<Self> {
        let mut h = self.structure.metric_value().matrix().clone();
        h[(2, 2)] *= scale * scale;
        let forms = FormKind::ALL.map(|k| self.structure.form_value(k).clone());
        let structure = ConstantStructure::from_parts(1, forms, MetricMatrix::new(h)?)?;
        Ok(EllipticModel {
            structure,
            ..self.clone()
        })
    }

    pub fn metric(&self) -> &DMatrix<f64> {
        self.structure.metric_value().matrix()
    }

    fn length(&self, v: &DVector<f64>) -> f64 {
        (v.transpose() * self.metric() * v)[(0, 0)].sqrt()
    }

    /// The fibre generator lying in `ker ω_k`.
    fn fibre_generator(&self, k: usize) -> Result<DVector<f64>> {
        let kind = if k == 1 {
            FormKind::Omega1
        } else {
            FormKind::Omega2
        };
        let ker = kernel(self.structure.form_value(kind), 1e-10);
        for c in 1..3 {
            let v = self.lattice.column(c).into_owned();
            if (&ker * (ker.transpose() * &v) - &v).norm() < 1e-12 {
                return Ok(v);
            }
        }
        Err(GeometryError::Degenerate(format!(
            "no lattice generator spans ker ω_{k}"
        )))
    }

    /// Invariants read off from the metric and the lattice.
    pub fn data(&self, convention: MonodromyConvention) -> Result<SelfDualTorusData> {
        let f1 = self.fibre_generator(1)?;
        let f2 = self.fibre_generator(2)?;
        let base = self.lattice.column(0).into_owned();
        // split the base generator into fibre parts plus an h-orthogonal rest
        let fib = DMatrix::from_columns(&[f1.clone(), f2.clone()]);
        let h = self.metric();
        let gram = fib.transpose() * h * &fib;
        let coeff = gram
            .try_inverse()
            .ok_or(GeometryError::Degenerate("fibre Gram matrix".into()))?
            * (fib.transpose() * h * &base);
        let horizontal = &base - &fib * &coeff;
        let along_ker1 = wrap(coeff[0]);
        let along_ker2 = wrap(coeff[1]);
        let monodromy = match convention {
            MonodromyConvention::ProofTranslation => [along_ker1, along_ker2],
            MonodromyConvention::SwappedLabels => [along_ker2, along_ker1],
        };
        Ok(SelfDualTorusData {
            base_length: self.length(&horizontal),
            fibre_lengths: [self.length(&f1), self.length(&f2)],
            monodromy,
            convention,
        })
    }

    /// `J` with `(b, u¹, u²) = J (r, s¹, s²)`, where `(r, s¹, s²) ∈ ℝ³/ℤ³`.
    pub fn lattice_frame(&self) -> &DMatrix<f64> {
        &self.lattice
    }

    /// A form pulled back to lattice coordinates.
    pub fn form_in_lattice(&self, kind: FormKind) -> Result<Multivector> {
        crate::exterior::pullback(&self.lattice, self.structure.form_value(kind))
    }

    /// The metric in lattice coordinates, `Jᵀ h J`.
    pub fn metric_in_lattice(&self) -> DMatrix<f64> {
        self.lattice.transpose() * self.metric() * &self.lattice
    }
}

/// Build `X_{τ,t}` and return its invariants.
pub fn torus_data(
    p: &EllipticParams,
    convention: MonodromyConvention,
) -> Result<SelfDualTorusData> {
    build_x(p)?.data(convention)
}

/// `E_{τ,t}` and its mirror `E_{t,τ}` from the invariants of `X_{τ,t}`.
pub fn recover_mirror_pair(d: &SelfDualTorusData) -> Result<(CurveWithB, CurveWithB)> {
    let [l1, l2] = d.fibre_lengths;
    let defect = (l1 * l2 - 1.0).abs();
    if !(defect <= SELF_DUAL_TOL) || !(d.base_length > 0.0) {
        return Err(GeometryError::NotSelfDual(defect));
    }
    let (t1, tau1) = match d.convention {
        MonodromyConvention::ProofTranslation => (d.monodromy[0], d.monodromy[1]),
        MonodromyConvention::SwappedLabels => (d.monodromy[1], d.monodromy[0]),
    };
    let tau = Complex64::new(wrap(tau1), d.base_length * l1);
    let t = Complex64::new(wrap(t1), d.base_length * l2);
    Ok((CurveWithB::new(tau, t)?, CurveWithB::new(t, tau)?))
}

/// `∫_{E_τ} −t/(2 Im τ) dz∧dz̄` by the midpoint rule on the fundamental
/// parallelogram `z = a + bτ`, `(a, b) ∈ [0,1]²`.
pub fn complexified_area(c: &CurveWithB) -> Complex64 {
    let n = AREA_PANELS;
    let h = 1.0 / n as f64;
    let z = |a: f64, b: f64| Complex64::new(a, 0.0) + c.tau * b;
    // dz∧dz̄ = −2i dx∧dy; dx∧dy = det ∂(x,y)/∂(a,b) da∧db
    let mut total = Complex64::new(0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            let (a, b) = ((i as f64 + 0.5) * h, (j as f64 + 0.5) * h);
            let za = (z(a + 0.5 * h, b) - z(a - 0.5 * h, b)) / h;
            let zb = (z(a, b + 0.5 * h) - z(a, b - 0.5 * h)) / h;
            let jac = za.re * zb.im - za.im * zb.re;
            total += c.kahler_coefficient * Complex64::new(0.0, -2.0) * jac * h * h;
        }
    }
    total
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GhRow {
    pub r: f64,
    pub tau: Complex64,
    /// `√(t₂/τ₂)`, the circle that shrinks.
    pub collapsing_length: f64,
    pub surviving_length: f64,
    pub base_length: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GhProfile {
    pub rows: Vec<GhRow>,
    pub monotone: bool,
    /// Largest `|ℓ_collapsing · ℓ_surviving − 1|`.
    pub self_duality_defect: f64,
}

/// Rescale `Im τ` so that `Im τ / Im t = r` for each `r` and record the
/// fibre lengths.
pub fn gh_scale_profile(p: &EllipticParams, rs: &[f64]) -> Result<GhProfile> {
    if rs.windows(2).any(|w| !(w[0] < w[1])) || rs.iter().any(|&r| !(r > 0.0)) {
        return Err(GeometryError::InvalidParameter(
            "r must be positive and increasing".into(),
        ));
    }
    let mut rows = Vec::with_capacity(rs.len());
    for &r in rs {
        let tau = Complex64::new(p.tau.re, r * p.t.im);
        let d = torus_data(
            &EllipticParams::new(tau, p.t)?,
            MonodromyConvention::default(),
        )?;
        rows.push(GhRow {
            r,
            tau,
            collapsing_length: d.fibre_lengths[1],
            surviving_length: d.fibre_lengths[0],
            base_length: d.base_length,
        });
    }
    let monotone = rows
        .windows(2)
        .all(|w| w[1].collapsing_length < w[0].collapsing_length);
    let self_duality_defect = rows
        .iter()
        .map(|row| (row.collapsing_length * row.surviving_length - 1.0).abs())
        .fold(0.0, f64::max);
    Ok(GhProfile {
        rows,
        monotone,
        self_duality_defect,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EllipticCheck {
    pub name: &'static str,
    pub residual: f64,
    pub passed: bool,
}

fn check(name: &'static str, residual: f64) -> EllipticCheck {
    EllipticCheck {
        name,
        residual,
        passed: residual < CHECK_TOL,
    }
}

fn rotation_residual(ps: &PolyStructure, mode: Rotation) -> f64 {
    let Ok(rot) = rotate_structure(ps, mode) else {
        return f64::INFINITY;
    };
    match (is_compatible(&rot), ConstantStructure::from_poly(&rot)) {
        (Ok(v), Ok(cs)) if v.compatible => {
            let grid = vec![vec![0.1, 0.2, 0.3], vec![0.7, -0.4, 0.9]];
            match verify_weak_selfdual(&cs, &grid) {
                Ok(r) => v.residual.max(r.max_d_omega_d),
                Err(_) => f64::INFINITY,
            }
        }
        (Ok(v), _) => v.residual.max(1.0),
        _ => f64::INFINITY,
    }
}

/// Closedness, parallelism, unit fibre volume and the rotated structures.
pub fn selfdual_full_check(m: &EllipticModel) -> Vec<EllipticCheck> {
    let s = &m.structure;
    let grid = vec![vec![0.0, 0.0, 0.0], vec![0.3, 0.5, 0.7]];
    let d_omega = verify_weak_selfdual(s, &grid)
        .map(|r| r.max_d_omega_d)
        .unwrap_or(f64::INFINITY);
    let nabla = covariant_constancy(s, &grid[1])
        .map(|r| r.max())
        .unwrap_or(f64::INFINITY);
    let volume = m
        .data(MonodromyConvention::default())
        .map(|d| (d.fibre_lengths[0] * d.fibre_lengths[1] - 1.0).abs())
        .unwrap_or(f64::INFINITY);
    let ps = s.poly_structure(&grid[0]);
    let compat = ps
        .as_ref()
        .ok()
        .and_then(|p| is_compatible(p).ok())
        .map(|v| {
            if v.compatible {
                v.residual
            } else {
                v.residual.max(1.0)
            }
        })
        .unwrap_or(f64::INFINITY);
    let (rot_d1, rot_2d) = match &ps {
        Ok(p) => (
            rotation_residual(p, Rotation::D1),
            rotation_residual(p, Rotation::TwoD),
        ),
        Err(_) => (f64::INFINITY, f64::INFINITY),
    };
    vec![
        check("compatible", compat),
        check("d_omega_d", d_omega),
        check("covariant_constancy", nabla),
        check("fibre_volume", volume),
        check("rotation_d1", rot_d1),
        check("rotation_2d", rot_2d),
    ]
}

/// `ω_D` of `X_{τ,t}` in chart coordinates: `du¹∧du²`.
pub fn expected_omega_d() -> Multivector {
    Multivector::basis(3, AxisSet::from_axes(&[1, 2]).expect("distinct"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn square_torus_invariants() {
        let d = torus_data(
            &EllipticParams::new(c(0.0, 1.0), c(0.0, 1.0)).unwrap(),
            Default::default(),
        )
        .unwrap();
        assert!((d.base_length - 1.0).abs() < 1e-14);
        assert!(d.fibre_lengths.iter().all(|l| (l - 1.0).abs() < 1e-14));
        assert_eq!(d.monodromy, [0.0, 0.0]);
    }

    #[test]
    fn unequal_imaginary_parts() {
        let d = torus_data(
            &EllipticParams::new(c(0.0, 2.0), c(0.0, 0.5)).unwrap(),
            Default::default(),
        )
        .unwrap();
        assert!((d.base_length - 1.0).abs() < 1e-14);
        assert!((d.fibre_lengths[0] - 2.0).abs() < 1e-14);
        assert!((d.fibre_lengths[1] - 0.5).abs() < 1e-14);
    }

    #[test]
    fn structure_matches_chart_formulas() {
        let p = EllipticParams::new(c(0.3, 1.7), c(0.6, 0.4)).unwrap();
        let m = build_x(&p).unwrap();
        let k = 0.4 / 1.7;
        let h = DMatrix::from_diagonal(&DVector::from_vec(vec![k, k, 1.0 / k]));
        assert!((m.metric() - h).amax() < 1e-13);
        assert!((m.structure.form_value(FormKind::OmegaD) - &expected_omega_d()).max_abs() < 1e-13);
        let w1 = Multivector::blade(3, &[0, 1]).scaled(k);
        assert!((m.structure.form_value(FormKind::Omega1) - &w1).max_abs() < 1e-13);
    }

    #[test]
    fn recovery_round_trip_and_mirror_swap() {
        let mut rng = crate::sampling::rng(17);
        for _ in 0..200 {
            let tau = c(rng.gen_range(0.0..1.0), rng.gen_range(0.1..10.0));
            let t = c(rng.gen_range(0.0..1.0), rng.gen_range(0.1..10.0));
            let p = EllipticParams::new(tau, t).unwrap();
            for conv in [
                MonodromyConvention::ProofTranslation,
                MonodromyConvention::SwappedLabels,
            ] {
                let (e1, e2) = recover_mirror_pair(&torus_data(&p, conv).unwrap()).unwrap();
                assert!((e1.tau.im - tau.im).abs() < 1e-12 && (e1.t.im - t.im).abs() < 1e-12);
                assert!(circle_distance(e1.tau.re, tau.re) < 1e-12);
                assert!(circle_distance(e1.t.re, t.re) < 1e-12);
                assert_eq!((e2.tau, e2.t), (e1.t, e1.tau));
            }
            let (m1, _) =
                recover_mirror_pair(&torus_data(&p.swapped(), Default::default()).unwrap())
                    .unwrap();
            assert!((m1.tau.im - t.im).abs() < 1e-12 && (m1.t.im - tau.im).abs() < 1e-12);
        }
    }

    #[test]
    fn non_self_dual_data_is_rejected() {
        let d = SelfDualTorusData {
            base_length: 1.0,
            fibre_lengths: [2.0, 1.0],
            monodromy: [0.0, 0.0],
            convention: Default::default(),
        };
        assert!(matches!(
            recover_mirror_pair(&d),
            Err(GeometryError::NotSelfDual(_))
        ));
        assert!(EllipticParams::new(c(0.0, -1.0), c(0.0, 1.0)).is_err());
    }

    #[test]
    fn area_is_i_times_t() {
        for (tau, t) in [
            (c(0.0, 1.0), c(0.0, 1.0)),
            (c(0.0, 2.0), c(0.0, 3.0)),
            (c(0.4, 0.8), c(0.2, 1.5)),
        ] {
            let a = complexified_area(&CurveWithB::new(tau, t).unwrap());
            assert!((a - Complex64::i() * t).norm() < 1e-9, "{a}");
        }
    }

    #[test]
    fn gh_profile_shrinks_like_inverse_root() {
        let p = EllipticParams::new(c(0.2, 1.0), c(0.1, 1.0)).unwrap();
        let prof = gh_scale_profile(&p, &[1.0, 4.0, 100.0]).unwrap();
        assert!(prof.monotone);
        assert!((prof.rows[0].collapsing_length - 1.0).abs() < 1e-14);
        assert!((prof.rows[2].collapsing_length - 0.1).abs() < 1e-14);
        assert!(prof.self_duality_defect < 1e-14);
    }

    #[test]
    fn full_check_passes_and_detects_corruption() {
        for (tau, t) in [(c(0.0, 1.0), c(0.0, 1.0)), (c(1.0, 2.0), c(0.3, 0.7))] {
            let m = build_x(&EllipticParams::new(tau, t).unwrap()).unwrap();
            let report = selfdual_full_check(&m);
            assert!(report.iter().all(|c| c.passed), "{report:?}");
            let bad = selfdual_full_check(&m.with_fibre_scale(2.0).unwrap());
            assert!(
                !bad.iter()
                    .find(|c| c.name == "fibre_volume")
                    .unwrap()
                    .passed
            );
        }
    }

    #[test]
    fn lattice_coordinates_of_omega_d() {
        let p = EllipticParams::new(c(0.3, 1.7), c(0.6, 0.4)).unwrap();
        let od = build_x(&p)
            .unwrap()
            .form_in_lattice(FormKind::OmegaD)
            .unwrap();
        let s = |a: &[usize]| AxisSet::from_axes(a).unwrap();
        assert!((od.coefficient(s(&[1, 2])) - 1.0).abs() < 1e-13);
        assert!((od.coefficient(s(&[0, 2])) - 0.3).abs() < 1e-13);
        assert!((od.coefficient(s(&[0, 1])) + 0.6).abs() < 1e-13);
    }
}
