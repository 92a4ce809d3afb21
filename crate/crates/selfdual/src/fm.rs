//! Fibre-integration transforms between the two elliptic quotients of
//! `X_{τ,t}`.
//!
//! Everything is computed in lattice coordinates `(r, s¹, s²) ∈ ℝ³/ℤ³`.
//! The quotient `E_1 = X/ω_1^⊥` forgets `s²` and `E_2 = X/ω_2^⊥` forgets `s¹`,
//! so `E_1` carries `(r, s¹)` and `E_2` carries `(r, s²)`. The output of a
//! transform at `p` is
//!
//! `∫_{π⁻¹(p)} Ω(ṽ_1, …, ṽ_m, ∂_fibre)`, with `Ω = ω_D^j ∧ π^*α`,
//!
//! where the `ṽ` are metric-orthogonal lifts. The integral is taken with the
//! trapezoid rule along the fibre, and output coefficients are recovered by a
//! discrete Fourier projection on an equispaced grid of the target.

use std::f64::consts::{SQRT_2, TAU};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::derham::FourierForm;
use crate::elliptic::EllipticModel;
use crate::error::{check_dim, GeometryError, Result};
use crate::exterior::{contract, wedge, AxisSet, Multivector};
use crate::patch::FormKind;

/// Fibre dimension of `X_{τ,t}` over either quotient.
pub const FIBRE_DIM: usize = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Carrier {
    E1,
    E2,
    X,
}

impl Carrier {
    /// Lattice axes of `X` that the carrier keeps.
    pub fn axes(self) -> &'static [usize] {
        match self {
            Carrier::E1 => &[0, 1],
            Carrier::E2 => &[0, 2],
            Carrier::X => &[0, 1, 2],
        }
    }

    pub fn dim(self) -> usize {
        self.axes().len()
    }

    /// Axis of `X` collapsed by the projection onto this quotient.
    fn fibre_axis(self) -> Option<usize> {
        match self {
            Carrier::E1 => Some(2),
            Carrier::E2 => Some(1),
            Carrier::X => None,
        }
    }
}

/// A trigonometric-polynomial form on `E_1`, `E_2` or `X` in lattice
/// coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct TorusForm {
    pub carrier: Carrier,
    pub form: FourierForm,
}

impl TorusForm {
    pub fn new(carrier: Carrier, form: FourierForm) -> Result<Self> {
        check_dim(carrier.dim(), form.dim())?;
        Ok(TorusForm { carrier, form })
    }

    pub fn zero(carrier: Carrier, max_freq: u32) -> Self {
        TorusForm {
            carrier,
            form: FourierForm::zero(carrier.dim(), max_freq),
        }
    }

    pub fn constant(carrier: Carrier, a: Multivector, max_freq: u32) -> Result<Self> {
        TorusForm::new(carrier, FourierForm::constant(a, max_freq))
    }

    /// Homogeneous degree, `None` for zero or mixed forms.
    pub fn degree(&self) -> Option<usize> {
        let mut deg = None;
        for (_, m) in self.form.modes() {
            for (set, c) in m.cos.terms().chain(m.sin.terms()) {
                if c == 0.0 {
                    continue;
                }
                match deg {
                    None => deg = Some(set.grade()),
                    Some(d) if d != set.grade() => return None,
                    _ => {}
                }
            }
        }
        deg
    }

    pub fn lin_comb(&self, a: f64, other: &TorusForm, b: f64) -> Result<TorusForm> {
        if self.carrier != other.carrier {
            return Err(GeometryError::Precondition(
                "forms live on different carriers".into(),
            ));
        }
        Ok(TorusForm {
            carrier: self.carrier,
            form: self.form.lin_comb(a, &other.form, b)?,
        })
    }

    pub fn max_abs(&self) -> f64 {
        self.form.max_abs()
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<Multivector> {
        self.form.evaluate(x)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct FmOptions {
    /// Fibre quadrature nodes; `None` uses `2N + 1`.
    pub fibre_samples: Option<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FmOutput {
    pub form: TorusForm,
    pub input_degree: Option<usize>,
    /// `i + 2j − n`; negative or too large targets give the zero form.
    pub target_degree: i64,
    pub degree_in_range: bool,
}

/// Re-index a form on the axes `axes` of a larger space.
fn embed(a: &Multivector, axes: &[usize], dim: usize) -> Multivector {
    Multivector::from_terms(
        dim,
        a.terms().map(|(set, c)| {
            let bits = set.axes().fold(0u32, |acc, i| acc | 1 << axes[i]);
            (AxisSet(bits), c)
        }),
    )
}

fn omega_d_power(model: &EllipticModel, j: usize) -> Result<Multivector> {
    let wd = model.form_in_lattice(FormKind::OmegaD)?;
    let mut acc = Multivector::scalar(3, 1.0);
    for _ in 0..j {
        acc = wedge(&acc, &wd)?;
    }
    Ok(acc)
}

/// Metric-orthogonal lifts of the target coordinate vectors, and the fibre
/// generator.
fn lifts(
    model: &EllipticModel,
    target: Carrier,
    fibre_axis: usize,
) -> (Vec<DVector<f64>>, DVector<f64>) {
    let g = model.metric_in_lattice();
    let f = DVector::from_fn(3, |i, _| if i == fibre_axis { 1.0 } else { 0.0 });
    let gf = &g * &f;
    let ff = f.dot(&gf);
    let lifted = target
        .axes()
        .iter()
        .map(|&a| {
            let e = DVector::from_fn(3, |i, _| if i == a { 1.0 } else { 0.0 });
            &e - &f * (e.dot(&gf) / ff)
        })
        .collect();
    (lifted, f)
}

/// Induced metric on the target: Gram matrix of the horizontal lifts.
pub fn quotient_metric(model: &EllipticModel, target: Carrier) -> Result<DMatrix<f64>> {
    source_of(target)?;
    let fibre_axis = target.fibre_axis().expect("quotient");
    let (lifted, _) = lifts(model, target, fibre_axis);
    let g = model.metric_in_lattice();
    Ok(DMatrix::from_fn(lifted.len(), lifted.len(), |a, b| {
        lifted[a].dot(&(&g * &lifted[b]))
    }))
}

/// Length of the fibre integrated by a transform landing on `target`.
pub fn integrated_fibre_length(model: &EllipticModel, target: Carrier) -> Result<f64> {
    source_of(target)?;
    let fibre_axis = target.fibre_axis().expect("quotient");
    let g = model.metric_in_lattice();
    Ok(g[(fibre_axis, fibre_axis)].sqrt())
}

/// The transform onto `target` integrates over the fibres of `X → target`,
/// whose axis is the one the source keeps and the target drops.
fn source_of(target: Carrier) -> Result<Carrier> {
    match target {
        Carrier::E1 => Ok(Carrier::E2),
        Carrier::E2 => Ok(Carrier::E1),
        Carrier::X => Err(GeometryError::Precondition(
            "transform targets a quotient".into(),
        )),
    }
}

fn fibre_integrate(
    alpha: &TorusForm,
    target: Carrier,
    j: usize,
    model: &EllipticModel,
    opts: FmOptions,
) -> Result<FmOutput> {
    let source = source_of(target)?;
    if alpha.carrier != source {
        return Err(GeometryError::Precondition(format!(
            "input lives on {:?}, expected {:?}",
            alpha.carrier, source
        )));
    }
    let big_n = alpha.form.max_freq();
    let input_degree = alpha.degree();
    let target_degree = input_degree.map_or(0, |i| i as i64) + 2 * j as i64 - FIBRE_DIM as i64;
    let degree_in_range = (0..=target.dim() as i64).contains(&target_degree);
    let zero = TorusForm::zero(target, big_n);
    if input_degree.is_none() || !degree_in_range {
        return Ok(FmOutput {
            form: zero,
            input_degree,
            target_degree,
            degree_in_range,
        });
    }
    let m = target_degree as usize;

    // the fibre of X → target is the axis that the target drops
    let fibre_axis = target.fibre_axis().expect("quotient");
    let (lifted, fibre) = lifts(model, target, fibre_axis);
    let wdj = omega_d_power(model, j)?;
    let samples = opts.fibre_samples.unwrap_or(2 * big_n as usize + 1).max(1);
    let grid = 2 * big_n as usize + 1;
    let out_sets: Vec<AxisSet> = (0..1u32 << target.dim())
        .map(AxisSet)
        .filter(|s| s.grade() == m)
        .collect();

    // target grid point → integrated coefficient on each output axis set
    let values: Vec<Vec<f64>> = (0..grid * grid)
        .into_par_iter()
        .map(|idx| {
            let p = [
                (idx / grid) as f64 / grid as f64,
                (idx % grid) as f64 / grid as f64,
            ];
            let mut acc = vec![0.0; out_sets.len()];
            for q in 0..samples {
                let mut x = [0.0; 3];
                x[target.axes()[0]] = p[0];
                x[target.axes()[1]] = p[1];
                x[fibre_axis] = q as f64 / samples as f64;
                let src: Vec<f64> = source.axes().iter().map(|&a| x[a]).collect();
                let a = alpha.form.evaluate(&src).expect("dimension");
                let omega = wedge(&wdj, &embed(&a, source.axes(), 3)).expect("dimension");
                for (slot, set) in out_sets.iter().enumerate() {
                    let mut cur = omega.clone();
                    for axis in set.axes() {
                        cur = contract(lifted[axis].as_slice(), &cur).expect("dimension");
                    }
                    cur = contract(fibre.as_slice(), &cur).expect("dimension");
                    acc[slot] += cur.coefficient(AxisSet::EMPTY) / samples as f64;
                }
            }
            acc
        })
        .collect();

    // discrete Fourier projection onto modes |k_a| ≤ N
    let n = big_n as i32;
    let mut form = FourierForm::zero(target.dim(), big_n);
    for k0 in 0..=n {
        for k1 in -n..=n {
            if k0 == 0 && k1 < 0 {
                continue;
            }
            let k = [k0, k1];
            let zero_mode = k0 == 0 && k1 == 0;
            let mut c = vec![0.0; out_sets.len()];
            let mut s = vec![0.0; out_sets.len()];
            for (idx, v) in values.iter().enumerate() {
                let (a, b) = (idx / grid, idx % grid);
                let phase = TAU * (k0 as f64 * a as f64 + k1 as f64 * b as f64) / grid as f64;
                let w = if zero_mode { 1.0 } else { SQRT_2 };
                for slot in 0..out_sets.len() {
                    c[slot] += w * phase.cos() * v[slot];
                    s[slot] += w * phase.sin() * v[slot];
                }
            }
            let norm = (grid * grid) as f64;
            let mk = |v: &[f64]| {
                Multivector::from_terms(
                    target.dim(),
                    out_sets.iter().zip(v).map(|(&set, &x)| (set, x / norm)),
                )
            };
            let (mut cm, mut sm) = (mk(&c), mk(&s));
            cm.prune(ROUND_EPS);
            sm.prune(ROUND_EPS);
            form.add_cos(&k, &cm)?;
            form.add_sin(&k, &sm)?;
        }
    }
    Ok(FmOutput {
        form: TorusForm::new(target, form)?,
        input_degree,
        target_degree,
        degree_in_range,
    })
}

/// Coefficients below this after the Fourier projection are rounding noise.
pub const ROUND_EPS: f64 = 1e-13;

/// `S^{1→2,j}`: from forms on `E_1` to forms on `E_2`.
pub fn transform(alpha: &TorusForm, j: usize, model: &EllipticModel) -> Result<FmOutput> {
    transform_with(alpha, j, model, FmOptions::default())
}

pub fn transform_with(
    alpha: &TorusForm,
    j: usize,
    model: &EllipticModel,
    opts: FmOptions,
) -> Result<FmOutput> {
    fibre_integrate(alpha, Carrier::E2, j, model, opts)
}

/// `S^{2→1,j}`: from forms on `E_2` to forms on `E_1`.
pub fn transform_back(beta: &TorusForm, j: usize, model: &EllipticModel) -> Result<FmOutput> {
    transform_back_with(beta, j, model, FmOptions::default())
}

pub fn transform_back_with(
    beta: &TorusForm,
    j: usize,
    model: &EllipticModel,
    opts: FmOptions,
) -> Result<FmOutput> {
    fibre_integrate(beta, Carrier::E1, j, model, opts)
}

/// `Σ_j S^{·,j}` over homogeneous parts. `ω_D^j` vanishes for `j ≥ 2` on the
/// 3-dimensional `X`, so `j ∈ {0, 1}` suffices.
pub fn transform_total(alpha: &TorusForm, model: &EllipticModel) -> Result<TorusForm> {
    let target = match alpha.carrier {
        Carrier::E1 => Carrier::E2,
        Carrier::E2 => Carrier::E1,
        Carrier::X => {
            return Err(GeometryError::Precondition(
                "transform targets a quotient".into(),
            ))
        }
    };
    let mut acc = TorusForm::zero(target, alpha.form.max_freq());
    for part in homogeneous_parts(alpha) {
        for j in 0..=1 {
            let out = fibre_integrate(&part, target, j, model, FmOptions::default())?;
            acc = acc.lin_comb(1.0, &out.form, 1.0)?;
        }
    }
    Ok(acc)
}

/// Split a form by degree.
pub fn homogeneous_parts(alpha: &TorusForm) -> Vec<TorusForm> {
    let dim = alpha.carrier.dim();
    (0..=dim)
        .filter_map(|g| {
            let mut f = FourierForm::zero(dim, alpha.form.max_freq());
            for (k, m) in alpha.form.modes() {
                f.add_cos(k, &m.cos.grade_part(g)).expect("same truncation");
                f.add_sin(k, &m.sin.grade_part(g)).expect("same truncation");
            }
            let part = TorusForm {
                carrier: alpha.carrier,
                form: f,
            };
            (part.max_abs() > 0.0).then_some(part)
        })
        .collect()
}

/// Pointwise norm of a constant form on `target` in the induced metric.
pub fn constant_form_norm(model: &EllipticModel, target: Carrier, a: &Multivector) -> Result<f64> {
    let q = quotient_metric(model, target)?;
    let qinv = q.try_inverse().ok_or(GeometryError::NotPositiveDefinite)?;
    let g = crate::exterior::MetricMatrix::new((&qinv + qinv.transpose()) * 0.5)?;
    Ok(crate::exterior::inner(a, a, &g)?.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::elliptic::{build_x, EllipticParams};
    use num_complex::Complex64;

    fn xii() -> EllipticModel {
        build_x(&EllipticParams::new(Complex64::i(), Complex64::i()).unwrap()).unwrap()
    }

    fn constant_part(f: &TorusForm) -> Multivector {
        f.form
            .mode(&vec![0; f.carrier.dim()])
            .map(|m| m.0)
            .unwrap_or(Multivector::zero(f.carrier.dim()))
    }

    #[test]
    fn unit_function_goes_to_unit_one_form() {
        let one = TorusForm::constant(Carrier::E1, Multivector::scalar(2, 1.0), 2).unwrap();
        let out = transform(&one, 1, &xii()).unwrap();
        assert_eq!(out.target_degree, 1);
        let c = constant_part(&out.form);
        // axes of E_2 are (r, s²): dy² is axis 1
        assert!((c.coefficient(AxisSet::single(1)).abs() - 1.0).abs() < 1e-12);
        assert!(c.coefficient(AxisSet::single(0)).abs() < 1e-12);
        assert_eq!(out.form.degree(), Some(1));
    }

    #[test]
    fn degree_floor() {
        let one = TorusForm::constant(Carrier::E1, Multivector::scalar(2, 1.0), 2).unwrap();
        let out = transform(&one, 0, &xii()).unwrap();
        assert_eq!(out.target_degree, -1);
        assert!(!out.degree_in_range);
        assert_eq!(out.form.max_abs(), 0.0);
    }

    #[test]
    fn dx_goes_to_dx_dy2() {
        let dx = TorusForm::constant(Carrier::E1, Multivector::blade(2, &[0]), 2).unwrap();
        let out = transform(&dx, 1, &xii()).unwrap();
        let c = constant_part(&out.form);
        assert!((c.coefficient(AxisSet(0b11)).abs() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn round_trip_on_constants() {
        let model = xii();
        for (a, expect) in [
            (Multivector::scalar(2, 1.0), 1.0),
            (Multivector::blade(2, &[0]), 1.0),
        ] {
            let f = TorusForm::constant(Carrier::E1, a.clone(), 1).unwrap();
            let back = transform_total(&transform_total(&f, &model).unwrap(), &model).unwrap();
            let c = constant_part(&back);
            let ratio = c.coefficient(a.terms().next().unwrap().0);
            assert!((ratio.abs() - expect).abs() < 1e-12, "{ratio}");
            assert!((&c - &a.scaled(ratio)).max_abs() < 1e-12);
        }
    }

    #[test]
    fn norm_scales_with_fibre_length() {
        let p = EllipticParams::new(Complex64::new(0.3, 1.7), Complex64::new(-0.2, 0.6)).unwrap();
        let model = build_x(&p).unwrap();
        let one = TorusForm::constant(Carrier::E1, Multivector::scalar(2, 1.0), 1).unwrap();
        let out = transform(&one, 1, &model).unwrap();
        let nrm = constant_form_norm(&model, Carrier::E2, &constant_part(&out.form)).unwrap();
        let ell = integrated_fibre_length(&model, Carrier::E2).unwrap();
        assert!((nrm - ell).abs() < 1e-12, "{nrm} vs {ell}");
        let closed = (p.t.im / p.tau.im).sqrt();
        assert!((ell - closed).abs() < 1e-12);
    }

    #[test]
    fn oscillating_input_and_refinement() {
        let model = build_x(
            &EllipticParams::new(Complex64::new(0.1, 1.2), Complex64::new(0.4, 0.9)).unwrap(),
        )
        .unwrap();
        let mut rng = crate::sampling::rng(4);
        let f = FourierForm::random(&mut rng, 2, 3, 4);
        let alpha = TorusForm::new(Carrier::E1, f).unwrap();
        for part in homogeneous_parts(&alpha) {
            let a = transform(&part, 1, &model).unwrap();
            let b = transform_with(
                &part,
                1,
                &model,
                FmOptions {
                    fibre_samples: Some(14),
                },
            )
            .unwrap();
            assert!(a.form.lin_comb(1.0, &b.form, -1.0).unwrap().max_abs() < 1e-9);
            // the input does not depend on s², so neither does the output
            for (k, _) in a.form.form.modes() {
                assert_eq!(k[1], 0);
            }
        }
    }
}
