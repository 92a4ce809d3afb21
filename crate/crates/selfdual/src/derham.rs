//! Truncated Fourier de Rham complex on the flat torus `T^d = ℝ^d/ℤ^d`.
//!
//! A mode `k ≠ 0` carries two form coefficients, for `√2 cos(2πk·x)` and
//! `√2 sin(2πk·x)`; the zero mode carries one. With this normalization the
//! `L²` product is the dot product of coefficients, so `d*` is the transpose
//! of `d` mode by mode. Frequencies are stored canonically: the first
//! nonzero entry is positive.

use std::collections::BTreeMap;
use std::f64::consts::TAU;

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{check_dim, GeometryError, Result};
use crate::exterior::{contract, wedge, AxisSet, Multivector, PRUNE_EPS};
use crate::liealg::{Index, OperatorMatrix, OperatorSpace};

/// Pass threshold for the identity sweeps.
pub const SKAID_TOL: f64 = 1e-10;
/// Random forms per identity.
pub const SKAID_SAMPLES: usize = 50;
/// Nonzero modes in each random form.
pub const RANDOM_MODES: usize = 12;

pub type Frequency = Vec<i32>;

#[derive(Clone, Debug, PartialEq)]
pub struct Mode {
    pub cos: Multivector,
    pub sin: Multivector,
}

impl Mode {
    fn zero(dim: usize) -> Self {
        Mode {
            cos: Multivector::zero(dim),
            sin: Multivector::zero(dim),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FourierForm {
    dim: usize,
    max_freq: u32,
    modes: BTreeMap<Frequency, Mode>,
}

/// Canonical representative of `±k` and the sign picked up by the sine part.
fn canonical(k: &[i32]) -> (Frequency, f64) {
    match k.iter().find(|&&c| c != 0) {
        Some(&c) if c < 0 => (k.iter().map(|v| -v).collect(), -1.0),
        _ => (k.to_vec(), 1.0),
    }
}

impl FourierForm {
    pub fn zero(dim: usize, max_freq: u32) -> Self {
        FourierForm {
            dim,
            max_freq,
            modes: BTreeMap::new(),
        }
    }

    pub fn constant(a: Multivector, max_freq: u32) -> Self {
        let mut f = FourierForm::zero(a.dim(), max_freq);
        f.modes.insert(
            vec![0; a.dim()],
            Mode {
                cos: a,
                sin: Multivector::zero(f.dim),
            },
        );
        f
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn max_freq(&self) -> u32 {
        self.max_freq
    }

    pub fn modes(&self) -> impl Iterator<Item = (&Frequency, &Mode)> {
        self.modes.iter()
    }

    fn check_freq(&self, k: &[i32]) -> Result<()> {
        check_dim(self.dim, k.len())?;
        match k.iter().find(|c| c.unsigned_abs() > self.max_freq) {
            Some(&c) => Err(GeometryError::FrequencyOverflow(c as i64, self.max_freq)),
            None => Ok(()),
        }
    }

    /// Adds `a·√2cos(2πk·x)` (or `a` for `k = 0`).
    pub fn add_cos(&mut self, k: &[i32], a: &Multivector) -> Result<()> {
        self.check_freq(k)?;
        check_dim(self.dim, a.dim())?;
        if a.is_empty() {
            return Ok(());
        }
        let (key, _) = canonical(k);
        let m = self.modes.entry(key).or_insert_with(|| Mode::zero(a.dim()));
        m.cos = &m.cos + a;
        Ok(())
    }

    /// Adds `a·√2sin(2πk·x)`; the zero mode has no sine part.
    pub fn add_sin(&mut self, k: &[i32], a: &Multivector) -> Result<()> {
        self.check_freq(k)?;
        check_dim(self.dim, a.dim())?;
        let (key, sign) = canonical(k);
        if a.is_empty() || key.iter().all(|&c| c == 0) {
            return Ok(());
        }
        let m = self.modes.entry(key).or_insert_with(|| Mode::zero(a.dim()));
        m.sin = &m.sin + &a.scaled(sign);
        Ok(())
    }

    pub fn mode(&self, k: &[i32]) -> Option<(Multivector, Multivector)> {
        let (key, sign) = canonical(k);
        self.modes
            .get(&key)
            .map(|m| (m.cos.clone(), m.sin.scaled(sign)))
    }

    /// Pointwise value at `x`.
    pub fn evaluate(&self, x: &[f64]) -> Result<Multivector> {
        check_dim(self.dim, x.len())?;
        let mut out = Multivector::zero(self.dim);
        for (k, m) in &self.modes {
            if k.iter().all(|&c| c == 0) {
                out = &out + &m.cos;
                continue;
            }
            let phase = TAU * k.iter().zip(x).map(|(&a, b)| a as f64 * b).sum::<f64>();
            let r2 = std::f64::consts::SQRT_2;
            out = &(&out + &m.cos.scaled(r2 * phase.cos())) + &m.sin.scaled(r2 * phase.sin());
        }
        Ok(out)
    }

    fn map_modes<F>(&self, f: F) -> FourierForm
    where
        F: Fn(&Frequency, &Mode) -> Mode + Sync,
    {
        let modes = self
            .modes
            .par_iter()
            .map(|(k, m)| {
                let mut out = f(k, m);
                out.cos.prune(PRUNE_EPS);
                out.sin.prune(PRUNE_EPS);
                (k.clone(), out)
            })
            .filter(|(_, m)| !(m.cos.is_empty() && m.sin.is_empty()))
            .collect();
        FourierForm {
            dim: self.dim,
            max_freq: self.max_freq,
            modes,
        }
    }

    pub fn lin_comb(&self, a: f64, other: &FourierForm, b: f64) -> Result<FourierForm> {
        check_dim(self.dim, other.dim)?;
        let mut modes = BTreeMap::new();
        let keys: std::collections::BTreeSet<&Frequency> =
            self.modes.keys().chain(other.modes.keys()).collect();
        let zero = Mode::zero(self.dim);
        for k in keys {
            let x = self.modes.get(k).unwrap_or(&zero);
            let y = other.modes.get(k).unwrap_or(&zero);
            let mut m = Mode {
                cos: &x.cos.scaled(a) + &y.cos.scaled(b),
                sin: &x.sin.scaled(a) + &y.sin.scaled(b),
            };
            m.cos.prune(0.0);
            m.sin.prune(0.0);
            modes.insert(k.clone(), m);
        }
        Ok(FourierForm {
            dim: self.dim,
            max_freq: self.max_freq.max(other.max_freq),
            modes,
        })
    }

    pub fn sub(&self, other: &FourierForm) -> Result<FourierForm> {
        self.lin_comb(1.0, other, -1.0)
    }

    pub fn add(&self, other: &FourierForm) -> Result<FourierForm> {
        self.lin_comb(1.0, other, 1.0)
    }

    /// Largest coefficient magnitude.
    pub fn max_abs(&self) -> f64 {
        self.modes
            .values()
            .fold(0.0, |acc, m| acc.max(m.cos.max_abs()).max(m.sin.max_abs()))
    }

    /// `L²` norm.
    pub fn norm(&self) -> f64 {
        self.modes
            .values()
            .map(|m| m.cos.norm().powi(2) + m.sin.norm().powi(2))
            .sum::<f64>()
            .sqrt()
    }

    pub fn is_harmonic_support(&self) -> bool {
        self.modes.keys().all(|k| k.iter().all(|&c| c == 0))
    }

    /// Applies a constant-coefficient operator pointwise.
    pub fn apply_pointwise(&self, op: &OperatorMatrix) -> Result<FourierForm> {
        check_dim(self.dim, op.dim())?;
        Ok(self.map_modes(|_, m| Mode {
            cos: op.apply(&m.cos).expect("dimension checked"),
            sin: op.apply(&m.sin).expect("dimension checked"),
        }))
    }

    /// Exterior derivative.
    pub fn d(&self) -> FourierForm {
        self.map_modes(|k, m| {
            let kf = Multivector::covector(&k.iter().map(|&c| TAU * c as f64).collect::<Vec<_>>());
            Mode {
                cos: wedge(&kf, &m.sin).expect("same dim"),
                sin: -&wedge(&kf, &m.cos).expect("same dim"),
            }
        })
    }

    /// `L²` adjoint of `d` for the flat metric.
    pub fn codifferential(&self) -> FourierForm {
        self.map_modes(|k, m| {
            let kv: Vec<f64> = k.iter().map(|&c| TAU * c as f64).collect();
            Mode {
                cos: -&contract(&kv, &m.sin).expect("same dim"),
                sin: contract(&kv, &m.cos).expect("same dim"),
            }
        })
    }

    /// `dd* + d*d`.
    pub fn laplacian(&self) -> FourierForm {
        self.codifferential()
            .d()
            .add(&self.d().codifferential())
            .expect("same dim")
    }

    /// `(2π|k|)²` times each mode: the closed-form spectrum of the Laplacian.
    pub fn laplacian_spectral(&self) -> FourierForm {
        self.map_modes(|k, m| {
            let lam = TAU * TAU * k.iter().map(|&c| (c as f64).powi(2)).sum::<f64>();
            Mode {
                cos: m.cos.scaled(lam),
                sin: m.sin.scaled(lam),
            }
        })
    }

    /// Random form with `modes` frequencies drawn from `{−N..N}^d` and
    /// coefficients uniform in `[−1, 1]` on every basis element.
    pub fn random<R: Rng>(rng: &mut R, dim: usize, max_freq: u32, modes: usize) -> Self {
        let n = max_freq as i32;
        let mut f = FourierForm::zero(dim, max_freq);
        let coeffs = |rng: &mut R| {
            Multivector::from_terms(
                dim,
                (0..1u32 << dim).map(|s| (AxisSet(s), rng.gen_range(-1.0..=1.0))),
            )
        };
        let c0 = coeffs(rng);
        f.add_cos(&vec![0; dim], &c0).expect("zero frequency");
        for _ in 0..modes {
            let k: Frequency = (0..dim).map(|_| rng.gen_range(-n..=n)).collect();
            let (c, s) = (coeffs(rng), coeffs(rng));
            f.add_cos(&k, &c).expect("in range");
            f.add_sin(&k, &s).expect("in range");
        }
        f
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IdentityFamily {
    pub name: String,
    pub instances: usize,
    pub max_residual: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SkaidReport {
    pub n: usize,
    pub max_freq: u32,
    pub samples: usize,
    pub families: Vec<IdentityFamily>,
    /// Largest deviation of the harmonic-subspace action from the `liealg`
    /// matrices, together with `ΔL h` for harmonic `h`.
    pub harmonic_residual: f64,
    pub passed: bool,
}

fn unbarred_pairs() -> Vec<(Index, Index)> {
    let p = Index::plain;
    vec![(p(0), p(1)), (p(0), p(2)), (p(1), p(2))]
}

fn family(
    name: &str,
    ops: &[OperatorMatrix],
    forms: &[FourierForm],
    f: impl Fn(&OperatorMatrix, &FourierForm) -> f64 + Sync + Send,
) -> IdentityFamily {
    let f = &f;
    let max_residual = ops
        .par_iter()
        .flat_map(|op| forms.par_iter().map(move |form| f(op, form)))
        .reduce(|| 0.0, f64::max);
    IdentityFamily {
        name: name.into(),
        instances: ops.len() * forms.len(),
        max_residual,
        passed: max_residual < SKAID_TOL,
    }
}

/// `[L, Δ] F` with `Δ` assembled as `dd* + d*d`.
fn laplace_commutator(op: &OperatorMatrix, f: &FourierForm) -> f64 {
    let a = f.laplacian().apply_pointwise(op).expect("same dim");
    let b = f.apply_pointwise(op).expect("same dim").laplacian();
    a.sub(&b).expect("same dim").max_abs()
}

/// Checks the four commutation identities between the `L_{αβ}` and
/// `d, d*, Δ` on random forms, plus the action on harmonic forms.
pub fn verify_skaid(n: usize, max_freq: u32, seed: u64) -> Result<SkaidReport> {
    let space = OperatorSpace::new(n)?;
    let dim = space.dim();
    let mut rng = crate::sampling::rng(seed);
    let forms: Vec<FourierForm> = (0..SKAID_SAMPLES)
        .map(|_| FourierForm::random(&mut rng, dim, max_freq, RANDOM_MODES))
        .collect();

    let lhk: Vec<OperatorMatrix> = unbarred_pairs()
        .into_iter()
        .map(|(h, k)| space.l(h, k))
        .collect();
    let lhk_adj: Vec<OperatorMatrix> = unbarred_pairs()
        .into_iter()
        .map(|(h, k)| space.l(k.bar(), h.bar()))
        .collect();
    let all: Vec<OperatorMatrix> = Index::ALL
        .iter()
        .flat_map(|&a| Index::ALL.iter().map(move |&b| (a, b)))
        .map(|(a, b)| space.l(a, b))
        .collect();

    let mut families = vec![
        family("[L_hk, d] = 0", &lhk, &forms, |op, f| {
            let a = f.d().apply_pointwise(op).unwrap();
            let b = f.apply_pointwise(op).unwrap().d();
            a.sub(&b).unwrap().max_abs()
        }),
        family("d d^c_hk + d^c_hk d = 0", &lhk, &forms, |op, f| {
            let dc = |g: &FourierForm| {
                g.codifferential()
                    .apply_pointwise(op)
                    .unwrap()
                    .sub(&g.apply_pointwise(op).unwrap().codifferential())
                    .unwrap()
            };
            dc(f).d().add(&dc(&f.d())).unwrap().max_abs()
        }),
        family("[L_hk, Δ] = 0", &lhk, &forms, laplace_commutator),
        family("[L_k'h', Δ] = 0", &lhk_adj, &forms, laplace_commutator),
        family("[L_ab, Δ] = 0", &all, &forms, laplace_commutator),
    ];
    families.push(family(
        "Δ = (2π|k|)²",
        &[OperatorMatrix::identity(dim)],
        &forms,
        |_, f| {
            f.laplacian()
                .sub(&f.laplacian_spectral())
                .unwrap()
                .max_abs()
        },
    ));

    let harmonic_residual = harmonic_action_residual(&space, &all, max_freq)?;
    let passed = families.iter().all(|f| f.passed) && harmonic_residual < SKAID_TOL;
    Ok(SkaidReport {
        n,
        max_freq,
        samples: SKAID_SAMPLES,
        families,
        harmonic_residual,
        passed,
    })
}

/// For each constant basis form `e^S` and each operator: `L e^S` stays in the
/// kernel of `Δ` and its coefficients reproduce the column `S` of the matrix.
fn harmonic_action_residual(
    space: &OperatorSpace,
    ops: &[OperatorMatrix],
    max_freq: u32,
) -> Result<f64> {
    let dim = space.dim();
    let mut worst: f64 = 0.0;
    for op in ops {
        for s in 0..1u32 << dim {
            let h = FourierForm::constant(Multivector::basis(dim, AxisSet(s)), max_freq);
            let image = h.apply_pointwise(op)?;
            if !image.is_harmonic_support() {
                return Ok(f64::INFINITY);
            }
            worst = worst.max(image.laplacian().max_abs());
            let (c, _) = image
                .mode(&vec![0; dim])
                .unwrap_or((Multivector::zero(dim), Multivector::zero(dim)));
            for r in 0..1u32 << dim {
                worst = worst.max((c.coefficient(AxisSet(r)) - op.entry(r, s)).abs());
            }
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn d_of_constant_is_zero() {
        let f = FourierForm::constant(Multivector::scalar(3, 2.0), 2);
        assert_eq!(f.d().max_abs(), 0.0);
        assert_eq!(f.laplacian().max_abs(), 0.0);
    }

    #[test]
    fn single_mode_derivative() {
        // sin(2πx)dy: coefficient 1/√2 on the √2 sin basis function
        let mut f = FourierForm::zero(3, 2);
        f.add_sin(
            &[1, 0, 0],
            &Multivector::blade(3, &[1]).scaled(1.0 / 2f64.sqrt()),
        )
        .unwrap();
        let df = f.d();
        let x = [0.13, 0.4, 0.7];
        let got = df.evaluate(&x).unwrap();
        let want = Multivector::blade(3, &[0, 1]).scaled(TAU * (TAU * 0.13).cos());
        assert!((&got - &want).max_abs() < 1e-12);
    }

    #[test]
    fn laplacian_eigenvalue() {
        let mut f = FourierForm::zero(3, 2);
        f.add_sin(&[1, 0, 0], &Multivector::scalar(3, 1.0)).unwrap();
        let l = f.laplacian();
        let (_, s) = l.mode(&[1, 0, 0]).unwrap();
        assert!((s.coefficient(AxisSet::EMPTY) - TAU * TAU).abs() < 1e-12);
    }

    #[test]
    fn negative_frequency_folds() {
        let mut f = FourierForm::zero(2, 2);
        let a = Multivector::scalar(2, 1.0);
        f.add_sin(&[-1, 0], &a).unwrap();
        let (_, s) = f.mode(&[1, 0]).unwrap();
        assert_eq!(s.coefficient(AxisSet::EMPTY), -1.0);
        let x = [0.3, 0.0];
        let v = f.evaluate(&x).unwrap().coefficient(AxisSet::EMPTY);
        assert!((v - 2f64.sqrt() * (-TAU * 0.3).sin()).abs() < 1e-14);
    }

    #[test]
    fn overflow_rejected() {
        let mut f = FourierForm::zero(2, 2);
        assert!(matches!(
            f.add_cos(&[3, 0], &Multivector::scalar(2, 1.0)),
            Err(GeometryError::FrequencyOverflow(3, 2))
        ));
    }

    #[test]
    fn dd_vanishes_and_adjointness() {
        let mut rng = crate::sampling::rng(3);
        for _ in 0..5 {
            let f = FourierForm::random(&mut rng, 3, 4, 6);
            let g = FourierForm::random(&mut rng, 3, 4, 6);
            assert!(f.d().d().max_abs() < 1e-12);
            assert!(f.codifferential().codifferential().max_abs() < 1e-12);
            let lhs = l2(&f.d(), &g);
            let rhs = l2(&f, &g.codifferential());
            assert!((lhs - rhs).abs() < 1e-9 * lhs.abs().max(1.0));
            assert!(
                f.laplacian()
                    .sub(&f.laplacian_spectral())
                    .unwrap()
                    .max_abs()
                    < 1e-10
            );
        }
    }

    fn l2(a: &FourierForm, b: &FourierForm) -> f64 {
        let mut acc = 0.0;
        for (k, m) in a.modes() {
            if let Some((c, s)) = b.mode(k) {
                for (set, v) in m.cos.terms() {
                    acc += v * c.coefficient(set);
                }
                for (set, v) in m.sin.terms() {
                    acc += v * s.coefficient(set);
                }
            }
        }
        acc
    }

    #[test]
    fn evaluation_matches_derivative_by_differences() {
        let mut rng = crate::sampling::rng(9);
        let f = FourierForm::random(&mut rng, 3, 2, 3);
        let df = f.d();
        let x = [0.21, 0.52, 0.83];
        let h = 1e-5;
        // coefficient of dx_0 in d(f_∅) is ∂_0 f_∅
        let at = |t: f64| {
            f.evaluate(&[x[0] + t, x[1], x[2]])
                .unwrap()
                .coefficient(AxisSet::EMPTY)
        };
        let fd = (at(h) - at(-h)) / (2.0 * h);
        let ad = df.evaluate(&x).unwrap().coefficient(AxisSet::single(0));
        assert!((fd - ad).abs() < 1e-5 * ad.abs().max(1.0));
    }

    #[test]
    fn skaid_small() {
        let r = verify_skaid(1, 3, 1).unwrap();
        assert!(r.passed, "{r:?}");
        assert!(r.families[0].max_residual < 1e-12);
    }
}
