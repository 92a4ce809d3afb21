//! Form and metric fields on a `3n`-dimensional chart with coordinates
//! `(x, y¹, y²)`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::potential::{hessian_ad, PotentialChart};
use crate::dual::{seed, Dual, Scalar};
use crate::error::{check_dim, GeometryError, Result};
use crate::exterior::{AxisLayout, AxisSet, MetricMatrix, Multivector};
use crate::linalg::{invert, min_eigenvalue};
use crate::polylinear::{dualizing_form, PolyStructure};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FormKind {
    Omega1,
    Omega2,
    OmegaD,
}

impl FormKind {
    pub const ALL: [FormKind; 3] = [FormKind::Omega1, FormKind::Omega2, FormKind::OmegaD];

    pub fn name(self) -> &'static str {
        match self {
            FormKind::Omega1 => "omega_1",
            FormKind::Omega2 => "omega_2",
            FormKind::OmegaD => "omega_D",
        }
    }
}

/// Sparse coefficient list of a form at a point; repeated keys add up.
pub type Coefficients<T> = Vec<(AxisSet, T)>;

/// Three 2-form fields and a metric field, evaluable at points of any scalar
/// type so that derivatives come from dual numbers.
pub trait FieldStructure: Sync {
    fn n(&self) -> usize;

    fn dim(&self) -> usize {
        3 * self.n()
    }

    fn form<T: Scalar>(&self, kind: FormKind, p: &[T]) -> Result<Coefficients<T>>;

    /// Row-major `dim × dim` metric coefficients.
    fn metric<T: Scalar>(&self, p: &[T]) -> Result<Vec<T>>;

    fn form_at(&self, kind: FormKind, p: &[f64]) -> Result<Multivector> {
        Ok(Multivector::from_terms(self.dim(), self.form(kind, p)?))
    }

    fn metric_at(&self, p: &[f64]) -> Result<MetricMatrix> {
        let d = self.dim();
        MetricMatrix::new(DMatrix::from_row_slice(d, d, &self.metric(p)?))
    }

    /// The pointwise `(ω_1, ω_2, h)`.
    fn poly_structure(&self, p: &[f64]) -> Result<PolyStructure> {
        let forms = vec![
            self.form_at(FormKind::Omega1, p)?,
            self.form_at(FormKind::Omega2, p)?,
        ];
        PolyStructure::new(self.n(), 2, forms)?.with_metric(self.metric_at(p)?)
    }
}

/// A single form field, the input of [`super::exterior_derivative`].
pub trait FormField: Sync {
    fn dim(&self) -> usize;
    fn coefficients<T: Scalar>(&self, p: &[T]) -> Result<Coefficients<T>>;
}

/// One of the three forms of a structure, viewed as a form field.
#[derive(Clone, Copy, Debug)]
pub struct StructureForm<'a, F> {
    pub structure: &'a F,
    pub kind: FormKind,
}

impl<'a, F: FieldStructure> FormField for StructureForm<'a, F> {
    fn dim(&self) -> usize {
        self.structure.dim()
    }
    fn coefficients<T: Scalar>(&self, p: &[T]) -> Result<Coefficients<T>> {
        self.structure.form(self.kind, p)
    }
}

/// The structure on `TY ×_Y TY` induced by a Hessian metric.
#[derive(Clone, Debug)]
pub struct XyStructure {
    chart: PotentialChart,
    layout: AxisLayout,
}

/// Points used to reject charts that are not convex on their box.
const CONVEXITY_SAMPLES: usize = 64;

/// Build the structure after checking convexity on a sample of the box.
pub fn build_xy(chart: PotentialChart) -> Result<XyStructure> {
    let mut pts = chart.sample_points(CONVEXITY_SAMPLES, 0x5eed);
    pts.push(chart.lower.clone());
    pts.push(chart.upper.clone());
    chart.validate_convexity(&pts)?;
    let layout = AxisLayout::new(chart.n, 2);
    Ok(XyStructure { chart, layout })
}

struct Geometry<T> {
    g: Vec<T>,
    /// `c[a·n + l] = Σ_{k,m} y²_m g_mk ∂g^{lk}/∂x_a`
    c: Vec<T>,
}

impl XyStructure {
    pub fn chart(&self) -> &PotentialChart {
        &self.chart
    }

    fn split<'p, T: Scalar>(&self, p: &'p [T]) -> Result<(&'p [T], &'p [T])> {
        let n = self.chart.n;
        check_dim(3 * n, p.len())?;
        let x: Vec<f64> = p[..n].iter().map(|v| v.value()).collect();
        self.chart.check_point(&x)?;
        Ok((&p[..n], &p[2 * n..]))
    }

    fn hessian<T: Scalar>(&self, x: &[T]) -> Result<Vec<T>> {
        let n = self.chart.n;
        let g = hessian_ad(&self.chart.potential, x);
        let gv = DMatrix::from_fn(n, n, |i, j| g[i * n + j].value());
        if gv.clone().cholesky().is_none() {
            return Err(GeometryError::NotConvexHere(min_eigenvalue(&gv)));
        }
        Ok(g)
    }

    fn geometry<T: Scalar>(&self, x: &[T], y2: &[T]) -> Result<Geometry<T>> {
        let n = self.chart.n;
        let mut g = Vec::new();
        let mut c = vec![T::zero(); n * n];
        for a in 0..n {
            let ga: Vec<Dual<T>> = self.hessian(&seed(x, a))?;
            let inv = invert(&ga, n).ok_or(GeometryError::NotConvexHere(0.0))?;
            if a == 0 {
                g = ga.iter().map(|v| v.re).collect();
            }
            // g y² once, then contract with ∂_a g^{-1}
            for l in 0..n {
                let mut acc = T::zero();
                for k in 0..n {
                    let mut gy = T::zero();
                    for m in 0..n {
                        gy += y2[m] * g[m * n + k];
                    }
                    acc += gy * inv[l * n + k].eps;
                }
                c[a * n + l] = acc;
            }
        }
        Ok(Geometry { g, c })
    }
}

impl FieldStructure for XyStructure {
    fn n(&self) -> usize {
        self.chart.n
    }

    fn form<T: Scalar>(&self, kind: FormKind, p: &[T]) -> Result<Coefficients<T>> {
        let n = self.chart.n;
        let (x, y2) = self.split(p)?;
        let lay = self.layout;
        let pair = |a: usize, b: usize| AxisSet::from_axes(&[a, b]).expect("distinct axes");
        let mut out = Vec::new();
        match kind {
            FormKind::Omega1 | FormKind::Omega2 => {
                let j = if kind == FormKind::Omega1 { 1 } else { 2 };
                let g = self.hessian(x)?;
                for i in 0..n {
                    for k in 0..n {
                        out.push((pair(lay.x(i), lay.y(j, k)), g[i * n + k]));
                    }
                }
            }
            FormKind::OmegaD => {
                let geo = self.geometry(x, y2)?;
                for i in 0..n {
                    for k in 0..n {
                        out.push((pair(lay.y(1, i), lay.y(2, k)), geo.g[i * n + k]));
                    }
                }
                // −Σ (g c)_{ij} dy¹_i∧dx_j = +Σ (g c)_{ij} dx_j∧dy¹_i
                for i in 0..n {
                    for j in 0..n {
                        let mut gc = T::zero();
                        for l in 0..n {
                            gc += geo.g[i * n + l] * geo.c[j * n + l];
                        }
                        out.push((pair(lay.x(j), lay.y(1, i)), gc));
                    }
                }
            }
        }
        Ok(out)
    }

    fn metric<T: Scalar>(&self, p: &[T]) -> Result<Vec<T>> {
        let n = self.chart.n;
        let d = 3 * n;
        let (x, y2) = self.split(p)?;
        let Geometry { g, c } = self.geometry(x, y2)?;
        let lay = self.layout;
        let mut h = vec![T::zero(); d * d];
        for a in 0..n {
            for b in 0..n {
                // horizontal block: g + c g cᵀ
                let mut acc = g[a * n + b];
                for l in 0..n {
                    for m in 0..n {
                        acc += c[a * n + l] * g[l * n + m] * c[b * n + m];
                    }
                }
                h[lay.x(a) * d + lay.x(b)] = acc;
                h[lay.y(1, a) * d + lay.y(1, b)] = g[a * n + b];
                h[lay.y(2, a) * d + lay.y(2, b)] = g[a * n + b];
            }
            for m in 0..n {
                let mut acc = T::zero();
                for l in 0..n {
                    acc -= c[a * n + l] * g[l * n + m];
                }
                h[lay.x(a) * d + lay.y(2, m)] = acc;
                h[lay.y(2, m) * d + lay.x(a)] = acc;
            }
        }
        Ok(h)
    }
}

/// A structure with constant coefficients, e.g. a flat torus.
#[derive(Clone, Debug, PartialEq)]
pub struct ConstantStructure {
    n: usize,
    forms: [Multivector; 3],
    metric: MetricMatrix,
}

impl ConstantStructure {
    /// `ω_D` is computed from the pointwise structure, which must be compatible.
    pub fn from_poly(p: &PolyStructure) -> Result<Self> {
        if p.s() != 2 {
            return Err(GeometryError::InvalidParameter(
                "constant structures need s = 2".into(),
            ));
        }
        let metric = p
            .metric()
            .cloned()
            .ok_or(GeometryError::NotCompatible(f64::INFINITY))?;
        let omega_d = dualizing_form(p)?;
        Ok(ConstantStructure {
            n: p.n(),
            forms: [p.omega(1).clone(), p.omega(2).clone(), omega_d],
            metric,
        })
    }

    /// Use the given three forms verbatim, without a compatibility check.
    pub fn from_parts(n: usize, forms: [Multivector; 3], metric: MetricMatrix) -> Result<Self> {
        for f in &forms {
            check_dim(3 * n, f.dim())?;
        }
        check_dim(3 * n, metric.dim())?;
        Ok(ConstantStructure { n, forms, metric })
    }

    pub fn form_value(&self, kind: FormKind) -> &Multivector {
        match kind {
            FormKind::Omega1 => &self.forms[0],
            FormKind::Omega2 => &self.forms[1],
            FormKind::OmegaD => &self.forms[2],
        }
    }

    pub fn metric_value(&self) -> &MetricMatrix {
        &self.metric
    }
}

impl FieldStructure for ConstantStructure {
    fn n(&self) -> usize {
        self.n
    }

    fn form<T: Scalar>(&self, kind: FormKind, p: &[T]) -> Result<Coefficients<T>> {
        check_dim(3 * self.n, p.len())?;
        Ok(self
            .form_value(kind)
            .terms()
            .map(|(k, c)| (k, T::from_f64(c)))
            .collect())
    }

    fn metric<T: Scalar>(&self, p: &[T]) -> Result<Vec<T>> {
        check_dim(3 * self.n, p.len())?;
        Ok(self
            .metric
            .matrix()
            .transpose()
            .iter()
            .map(|&v| T::from_f64(v))
            .collect())
    }
}
