//! Convex potentials on coordinate boxes and their Hessian metrics.

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dual::{Dual, Scalar};
use crate::error::{check_dim, GeometryError, Result};
use crate::exterior::MetricMatrix;
use crate::linalg::min_eigenvalue;
use crate::sampling;

/// Charts whose Hessian drops below this anywhere on the sample are rejected.
pub const MIN_HESSIAN_EIGENVALUE: f64 = 1e-6;
/// Finite-difference step for derivative cross-checks.
pub const FD_STEP: f64 = 1e-4;
/// Relative slack when deciding whether a point lies in the chart box.
pub const DOMAIN_SLACK: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Monomial {
    pub coef: f64,
    pub powers: Vec<u32>,
}

/// Expression tree for `K`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Potential {
    Polynomial {
        terms: Vec<Monomial>,
    },
    /// `scale · log Σ_i exp(x_i)`
    LogSumExp {
        #[serde(default = "unit")]
        scale: f64,
    },
    Sum {
        parts: Vec<Potential>,
    },
}

fn unit() -> f64 {
    1.0
}

impl Potential {
    pub fn eval<T: Scalar>(&self, x: &[T]) -> T {
        match self {
            Potential::Polynomial { terms } => {
                let mut acc = T::zero();
                for m in terms {
                    let mut t = T::from_f64(m.coef);
                    for (xi, &p) in x.iter().zip(&m.powers) {
                        if p > 0 {
                            t *= xi.powi(p);
                        }
                    }
                    acc += t;
                }
                acc
            }
            Potential::LogSumExp { scale } => {
                // shift by the largest primal value for stability
                let shift = x.iter().fold(f64::NEG_INFINITY, |m, v| m.max(v.value()));
                let s = T::from_f64(shift);
                let mut acc = T::zero();
                for &xi in x {
                    acc += (xi - s).exp();
                }
                (acc.ln() + s).scale(*scale)
            }
            Potential::Sum { parts } => {
                let mut acc = T::zero();
                for p in parts {
                    acc += p.eval(x);
                }
                acc
            }
        }
    }

    fn check_arity(&self, n: usize) -> Result<()> {
        match self {
            Potential::Polynomial { terms } => {
                for m in terms {
                    check_dim(n, m.powers.len())?;
                }
                Ok(())
            }
            Potential::LogSumExp { .. } => Ok(()),
            Potential::Sum { parts } => parts.iter().try_for_each(|p| p.check_arity(n)),
        }
    }

    /// `½ xᵀ A x`.
    pub fn quadratic(a: &DMatrix<f64>) -> Self {
        let n = a.nrows();
        let mut terms = Vec::new();
        for i in 0..n {
            for j in i..n {
                let mut powers = vec![0; n];
                powers[i] += 1;
                powers[j] += 1;
                let coef = if i == j {
                    0.5 * a[(i, i)]
                } else {
                    0.5 * (a[(i, j)] + a[(j, i)])
                };
                terms.push(Monomial { coef, powers });
            }
        }
        Potential::Polynomial { terms }
    }

    /// `c · (a·x)^k` expanded into monomials.
    pub fn power_of_linear(c: f64, a: &[f64], k: u32) -> Self {
        let n = a.len();
        let mut terms = Vec::new();
        let mut powers = vec![0u32; n];
        fn rec(
            idx: usize,
            left: u32,
            powers: &mut Vec<u32>,
            a: &[f64],
            k: u32,
            c: f64,
            out: &mut Vec<Monomial>,
        ) {
            if idx + 1 == a.len() {
                powers[idx] = left;
                let mut coef = c * multinomial(k, powers);
                for (ai, &p) in a.iter().zip(powers.iter()) {
                    coef *= ai.powi(p as i32);
                }
                if coef != 0.0 {
                    out.push(Monomial {
                        coef,
                        powers: powers.clone(),
                    });
                }
                return;
            }
            for p in 0..=left {
                powers[idx] = p;
                rec(idx + 1, left - p, powers, a, k, c, out);
            }
        }
        rec(0, k, &mut powers, a, k, c, &mut terms);
        Potential::Polynomial { terms }
    }

    /// A random strictly convex quartic: an SPD quadratic plus positive
    /// multiples of fourth powers of linear forms.
    pub fn random_convex_quartic<R: Rng>(rng: &mut R, n: usize) -> Self {
        let a = sampling::random_spd(rng, n, 0.5, 2.0);
        let mut parts = vec![Potential::quadratic(&a)];
        for _ in 0..n + 1 {
            let dir: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let c = rng.gen_range(0.05..0.5);
            parts.push(Potential::power_of_linear(c, &dir, 4));
        }
        Potential::Sum { parts }
    }
}

fn multinomial(k: u32, powers: &[u32]) -> f64 {
    let fact = |m: u32| (1..=m).map(|v| v as f64).product::<f64>();
    powers.iter().fold(fact(k), |acc, &p| acc / fact(p))
}

/// A potential together with the coordinate box it is used on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PotentialChart {
    pub n: usize,
    pub potential: Potential,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl PotentialChart {
    pub fn new(n: usize, potential: Potential, lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if n == 0 {
            return Err(GeometryError::InvalidParameter("n must be positive".into()));
        }
        check_dim(n, lower.len())?;
        check_dim(n, upper.len())?;
        if lower.iter().zip(&upper).any(|(a, b)| !(a < b)) {
            return Err(GeometryError::InvalidParameter("empty domain box".into()));
        }
        potential.check_arity(n)?;
        Ok(PotentialChart {
            n,
            potential,
            lower,
            upper,
        })
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.n
            && x.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(&v, (&a, &b))| {
                    let slack = DOMAIN_SLACK * (b - a);
                    v >= a - slack && v <= b + slack
                })
    }

    pub(crate) fn check_point(&self, x: &[f64]) -> Result<()> {
        if self.contains(x) {
            Ok(())
        } else {
            Err(GeometryError::OutsideDomain)
        }
    }

    /// Deterministic sample of the box.
    pub fn sample_points(&self, count: usize, seed: u64) -> Vec<Vec<f64>> {
        sampling::into_box(
            &sampling::halton(self.n, count, seed),
            &self.lower,
            &self.upper,
        )
    }

    /// Reject the chart if the Hessian is not uniformly positive on the sample.
    pub fn validate_convexity(&self, points: &[Vec<f64>]) -> Result<f64> {
        let mut lo = f64::INFINITY;
        for x in points {
            let h = hessian_ad(&self.potential, &crate::dual::lift::<f64>(x));
            let m = DMatrix::from_row_slice(self.n, self.n, &h);
            lo = lo.min(min_eigenvalue(&m));
        }
        if lo < MIN_HESSIAN_EIGENVALUE {
            return Err(GeometryError::NotConvexHere(lo));
        }
        Ok(lo)
    }
}

/// Row-major Hessian of `K` at a point of any scalar type.
pub fn hessian_ad<T: Scalar>(k: &Potential, x: &[T]) -> Vec<T> {
    let n = x.len();
    let mut h = vec![T::zero(); n * n];
    for i in 0..n {
        for j in i..n {
            let p: Vec<Dual<Dual<T>>> = x
                .iter()
                .enumerate()
                .map(|(m, &v)| {
                    let inner = Dual::new(v, if m == i { T::one() } else { T::zero() });
                    let outer = Dual::new(if m == j { T::one() } else { T::zero() }, T::zero());
                    Dual::new(inner, outer)
                })
                .collect();
            let val = k.eval(&p).eps.eps;
            h[i * n + j] = val;
            h[j * n + i] = val;
        }
    }
    h
}

/// Hessian metric `g_ij = ∂²K/∂x_i∂x_j`.
pub fn hessian_metric(chart: &PotentialChart, x: &[f64]) -> Result<MetricMatrix> {
    chart.check_point(x)?;
    let h = DMatrix::from_row_slice(chart.n, chart.n, &hessian_ad(&chart.potential, x));
    let sym = (&h + h.transpose()) * 0.5;
    if sym.clone().cholesky().is_none() {
        return Err(GeometryError::NotConvexHere(min_eigenvalue(&sym)));
    }
    MetricMatrix::new(sym)
}

/// Hessian by central differences of `K` values.
pub fn hessian_fd(k: &Potential, x: &[f64], h: f64) -> DMatrix<f64> {
    let n = x.len();
    let eval = |di: usize, si: f64, dj: usize, sj: f64| {
        let mut p = x.to_vec();
        p[di] += si * h;
        p[dj] += sj * h;
        k.eval(&p)
    };
    DMatrix::from_fn(n, n, |i, j| {
        (eval(i, 1.0, j, 1.0) - eval(i, 1.0, j, -1.0) - eval(i, -1.0, j, 1.0)
            + eval(i, -1.0, j, -1.0))
            / (4.0 * h * h)
    })
}

/// Spread of `det g` over a sample; zero for Monge–Ampère charts.
pub fn monge_ampere_residual(chart: &PotentialChart, points: &[Vec<f64>]) -> Result<f64> {
    let dets = points
        .iter()
        .map(|x| hessian_metric(chart, x).map(|g| g.matrix().determinant()))
        .collect::<Result<Vec<_>>>()?;
    if dets.is_empty() {
        return Ok(0.0);
    }
    let mean = dets.iter().sum::<f64>() / dets.len() as f64;
    Ok(dets.iter().fold(0.0, |m, d| m.max((d - mean).abs())))
}
