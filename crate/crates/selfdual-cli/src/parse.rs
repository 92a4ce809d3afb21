//! Flag parsers: complex numbers and form specifications.

use anyhow::{anyhow, bail, Context, Result};
use num_complex::Complex64;
use selfdual::exterior::{AxisSet, Multivector};

/// Parses `a+bi`, `a-bi`, `bi`, `i`, `-i` or a bare real.
pub fn complex(text: &str) -> Result<Complex64> {
    let s: String = text.chars().filter(|c| !c.is_whitespace()).collect();
    if s.is_empty() {
        bail!("empty complex number");
    }
    let Some(body) = s.strip_suffix('i') else {
        return Ok(Complex64::new(
            s.parse().with_context(|| format!("bad number {text:?}"))?,
            0.0,
        ));
    };
    // split at the last sign that is not a leading sign or an exponent sign
    let bytes = body.as_bytes();
    let split = (1..bytes.len())
        .rev()
        .find(|&k| matches!(bytes[k], b'+' | b'-') && !matches!(bytes[k - 1], b'e' | b'E'));
    let (re, im) = match split {
        Some(k) => (&body[..k], &body[k..]),
        None => ("0", body),
    };
    let im = match im {
        "" | "+" => 1.0,
        "-" => -1.0,
        v => v
            .parse()
            .with_context(|| format!("bad imaginary part in {text:?}"))?,
    };
    let re: f64 = re
        .parse()
        .with_context(|| format!("bad real part in {text:?}"))?;
    Ok(Complex64::new(re, im))
}

/// One term of a form specification: coefficient, optional Fourier factor
/// and a basis blade of the 2-torus.
#[derive(Clone, Debug, PartialEq)]
pub struct SpecTerm {
    pub coef: f64,
    pub wave: Option<(Wave, [i32; 2])>,
    pub blade: AxisSet,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Wave {
    Cos,
    Sin,
}

fn blade(name: &str) -> Option<AxisSet> {
    let axis = |a: &str| match a {
        "dr" | "dx" | "db" => Some(0usize),
        "ds" | "dy" | "du" | "ds1" | "ds2" | "dy1" | "dy2" => Some(1),
        _ => None,
    };
    let mut bits = 0u32;
    for part in name.split('^') {
        let a = axis(part)?;
        if bits & (1 << a) != 0 {
            return None;
        }
        bits |= 1 << a;
    }
    Some(AxisSet(bits))
}

fn wave(factor: &str) -> Result<Option<(Wave, [i32; 2])>> {
    let (kind, rest) = if let Some(r) = factor.strip_prefix("cos(") {
        (Wave::Cos, r)
    } else if let Some(r) = factor.strip_prefix("sin(") {
        (Wave::Sin, r)
    } else {
        return Ok(None);
    };
    let inner = rest
        .strip_suffix(')')
        .ok_or_else(|| anyhow!("unclosed {factor:?}"))?;
    let k: Vec<i32> = inner
        .split(',')
        .map(|v| v.parse())
        .collect::<std::result::Result<_, _>>()?;
    match k[..] {
        [a, b] => Ok(Some((kind, [a, b]))),
        _ => bail!("expected two frequencies in {factor:?}"),
    }
}

/// Parses e.g. `1`, `dr`, `2*dr^ds + 0.5*cos(1,0)*ds`.
///
/// Terms are separated by `+` and factors by `*`. A factor is a number, a
/// blade built from `dr`/`dx` (first axis) and `ds`/`dy` (second axis) joined
/// by `^`, or `cos(k1,k2)` / `sin(k1,k2)` meaning `√2 cos(2π k·x)`.
pub fn form_spec(text: &str) -> Result<Vec<SpecTerm>> {
    let s: String = text.chars().filter(|c| !c.is_whitespace()).collect();
    let mut out = Vec::new();
    for term in s.split('+').filter(|t| !t.is_empty()) {
        let mut t = SpecTerm {
            coef: 1.0,
            wave: None,
            blade: AxisSet::EMPTY,
        };
        let mut saw_blade = false;
        for factor in term.split('*') {
            if let Some(w) = wave(factor)? {
                if t.wave.replace(w).is_some() {
                    bail!("two Fourier factors in {term:?}");
                }
            } else if let Some(b) = blade(factor.trim_start_matches('-')) {
                if saw_blade {
                    bail!("two blades in {term:?}");
                }
                saw_blade = true;
                t.blade = b;
                if factor.starts_with('-') {
                    t.coef = -t.coef;
                }
            } else {
                t.coef *= factor
                    .parse::<f64>()
                    .with_context(|| format!("bad factor {factor:?}"))?;
            }
        }
        out.push(t);
    }
    if out.is_empty() {
        bail!("empty form specification");
    }
    Ok(out)
}

/// The constant-coefficient part of each term grouped by Fourier factor.
pub fn term_multivector(t: &SpecTerm) -> Multivector {
    Multivector::from_terms(2, [(t.blade, t.coef)])
}
