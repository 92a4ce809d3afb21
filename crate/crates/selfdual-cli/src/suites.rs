//! The verification suites behind each subcommand.

use std::path::Path;

use anyhow::{bail, Context, Result};
use num_complex::Complex64;
use serde::Serialize;
use serde_json::{json, Value};

use selfdual::derham::{verify_skaid, FourierForm};
use selfdual::elliptic::{
    build_x, recover_mirror_pair, selfdual_full_check, EllipticModel, EllipticParams,
    MonodromyConvention,
};
use selfdual::exterior::{pullback, AxisLayout, AxisSet, MetricMatrix, Multivector};
use selfdual::fm::{transform_back_with, transform_with, Carrier, FmOptions, FmOutput, TorusForm};
use selfdual::liealg::{
    basis_relations, chevalley_relations, commutation_relations, contraction_rule_exceptions,
    lie_closure, OperatorSpace,
};
use selfdual::patch::{
    build_xy, fibre_volume_product, gradient_check, hessian_metric, leaf_integrability_check,
    monge_ampere_residual, verify_weak_selfdual, ChartConfig, FormKind, GRADIENT_STEP,
    INTEGRABILITY_TOL,
};
use selfdual::polylinear::{dualizing_form, is_compatible, PolyStructure};
use selfdual::sampling::{random_invertible, rng};

use crate::parse::{SpecTerm, Wave};
use crate::report::{CheckRecord, Conventions, Report};

/// The chart used when `affine-check` gets no `--chart`.
pub const DEFAULT_CHART: &str = include_str!("../charts/quartic1d.cfg");

/// Volume product `vol(T)·vol(T^∨)` must be 1 to this accuracy.
pub const VOLUME_TOL: f64 = 1e-10;
/// Doubling the fibre quadrature may move transform outputs by this much.
pub const REFINEMENT_TOL: f64 = 1e-9;
pub const LINEARITY_TOL: f64 = 1e-10;
/// Pointwise compatibility and `ω_D` recovery.
pub const POINTWISE_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Tolerances {
    pub rank: f64,
    pub identity: f64,
    pub field: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            rank: 1e-10,
            identity: 1e-12,
            field: 1e-8,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Settings {
    pub seed: u64,
    pub tolerances: Tolerances,
}

impl Settings {
    fn validate(&self) -> Result<()> {
        let t = &self.tolerances;
        if !(t.rank > 0.0 && t.identity > 0.0 && t.field > 0.0) {
            bail!("tolerances must be positive");
        }
        Ok(())
    }
}

fn conventions() -> Conventions {
    Conventions::new("proof-translation")
}

fn config_value<T: Serialize>(settings: &Settings, extra: T) -> Value {
    json!({ "settings": settings, "arguments": extra })
}

pub fn verify_pointwise(n: usize, s: usize, trials: usize, settings: &Settings) -> Result<Report> {
    settings.validate()?;
    if n == 0 || s == 0 {
        bail!("n and s must be positive");
    }
    let d = n * (s + 1);
    let mut r = rng(settings.seed);
    let lay = AxisLayout::new(n, s);
    let flat_wd = Multivector::from_terms(
        d,
        (0..n).map(|i| {
            (
                AxisSet::from_axes(&[lay.x(0) + n + i, lay.x(0) + 2 * n + i])
                    .unwrap_or(AxisSet::EMPTY),
                1.0,
            )
        }),
    );
    let mut checks = Vec::with_capacity(trials);
    let mut wd_worst = 0.0_f64;
    for k in 0..trials {
        let a = random_invertible(&mut r, d, 0.5, 2.0);
        let p = PolyStructure::normal_form(n, s)
            .with_metric(MetricMatrix::identity(d))?
            .pullback(&a)?
            .with_rank_tol(settings.tolerances.rank);
        let v = is_compatible(&p)?;
        let mut residual = if v.compatible {
            v.residual
        } else {
            v.residual.max(1.0)
        };
        if s == 2 {
            let wd = dualizing_form(&p)?;
            let dev = (&wd - &pullback(&a, &flat_wd)?).max_abs();
            wd_worst = wd_worst.max(dev);
            residual = residual.max(dev);
        }
        checks.push(CheckRecord::new(
            format!("pointwise/{k}"),
            "orthonormal standard basis exists; dualizing form matches the normal form",
            residual,
            POINTWISE_TOL,
        ));
    }
    let data = json!({ "dimension": d, "max_dualizing_form_deviation": if s == 2 { Some(wd_worst) } else { None } });
    Ok(Report::new(
        "verify-pointwise",
        conventions(),
        config_value(settings, json!({ "n": n, "s": s, "trials": trials })),
        checks,
        data,
    ))
}

pub fn load_chart(path: Option<&Path>) -> Result<(ChartConfig, String)> {
    match path {
        Some(p) => Ok((ChartConfig::load(p)?, p.display().to_string())),
        None => Ok((
            ChartConfig::from_toml_str(DEFAULT_CHART)?,
            "builtin:quartic1d".into(),
        )),
    }
}

pub fn affine_check(cfg: &ChartConfig, source: &str, settings: &Settings) -> Result<Report> {
    settings.validate()?;
    let chart = cfg.chart()?;
    let xy = build_xy(chart.clone())?;
    let grid = cfg.grid_points();
    let n = cfg.n;
    let closed_tol = cfg.tolerances.closedness.min(settings.tolerances.field);
    let rep = verify_weak_selfdual(&xy, &grid)?;
    let mut volume = 0.0_f64;
    let mut gradient = 0.0_f64;
    for p in &grid {
        volume = volume.max((fibre_volume_product(&hessian_metric(&chart, &p[..n])?) - 1.0).abs());
        gradient = gradient.max(gradient_check(&xy, p, GRADIENT_STEP)?);
    }
    let mut integrability = 0.0_f64;
    for p in grid.iter().take(5) {
        let v = leaf_integrability_check(&xy, p, &[FormKind::Omega1, FormKind::Omega2])?;
        integrability = integrability.max(v.residual);
    }
    let checks = vec![
        CheckRecord::new(
            "affine/d_omega_d",
            "dualizing form of TY x_Y TY is closed",
            rep.max_d_omega_d,
            closed_tol,
        ),
        CheckRecord::new(
            "affine/d_omega_1",
            "omega_1 is closed",
            rep.max_d_omega_1,
            closed_tol,
        ),
        CheckRecord::new(
            "affine/d_omega_2",
            "omega_2 is closed",
            rep.max_d_omega_2,
            closed_tol,
        ),
        CheckRecord::new(
            "affine/fibre_volume",
            "vol(T) vol(T dual) = 1",
            volume,
            VOLUME_TOL,
        ),
        CheckRecord::new(
            "affine/gradient",
            "dual-number derivatives agree with central differences",
            gradient,
            cfg.tolerances.gradient,
        ),
        CheckRecord::new(
            "affine/leaf_integrability",
            "kernel sum of omega_1, omega_2 is integrable",
            integrability,
            INTEGRABILITY_TOL,
        ),
    ];
    let ma = monge_ampere_residual(&chart, &chart.sample_points(16, cfg.seed))?;
    let data = json!({ "n": n, "points": rep.points, "monge_ampere_residual": ma });
    Ok(Report::new(
        "affine-check",
        conventions(),
        config_value(settings, json!({ "chart": source, "chart_config": cfg })),
        checks,
        data,
    ))
}

fn params(tau: Complex64, t: Complex64) -> Result<EllipticParams> {
    EllipticParams::new(tau, t).context("invalid elliptic parameters")
}

pub fn mirror(
    tau: Complex64,
    t: Complex64,
    convention: MonodromyConvention,
    settings: &Settings,
) -> Result<Report> {
    settings.validate()?;
    let p = params(tau, t)?;
    let model = build_x(&p)?;
    let data = model.data(convention)?;
    let (e, dual) = recover_mirror_pair(&data)?;
    let tol = settings.tolerances.identity;
    let circle = selfdual::elliptic::circle_distance;
    let recovery = [
        (e.tau.im - tau.im).abs(),
        (e.t.im - t.im).abs(),
        circle(e.tau.re, tau.re),
        circle(e.t.re, t.re),
        (dual.tau - e.t).norm(),
        (dual.t - e.tau).norm(),
    ]
    .into_iter()
    .fold(0.0, f64::max);
    let mut checks = vec![
        CheckRecord::new(
            "mirror/l1_l2",
            "fibre lengths multiply to 1",
            (data.fibre_lengths[0] * data.fibre_lengths[1] - 1.0).abs(),
            tol,
        ),
        CheckRecord::new(
            "mirror/base_length",
            "base length is sqrt(Im t Im tau)",
            (data.base_length - (t.im * tau.im).sqrt()).abs(),
            tol,
        ),
        CheckRecord::new(
            "mirror/recovery",
            "torus data determine E_(tau,t) and E_(t,tau)",
            recovery,
            tol,
        ),
    ];
    for c in selfdual_full_check(&model) {
        checks.push(CheckRecord::new(
            format!("mirror/{}", c.name),
            "X_(tau,t) is self-dual",
            c.residual,
            selfdual::elliptic::CHECK_TOL,
        ));
    }
    let out = json!({ "torus_data": data, "recovered": e, "mirror": dual });
    let convention_name = match convention {
        MonodromyConvention::ProofTranslation => "proof-translation",
        MonodromyConvention::SwappedLabels => "swapped-labels",
    };
    Ok(Report::new(
        "mirror",
        Conventions::new(convention_name),
        config_value(
            settings,
            json!({ "tau": format_complex(tau), "t": format_complex(t) }),
        ),
        checks,
        out,
    ))
}

pub fn format_complex(z: Complex64) -> String {
    format!("{}{:+}i", z.re, z.im)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    /// From E_1 to E_2.
    Forward,
    /// From E_2 to E_1.
    Back,
}

fn spec_form(terms: &[SpecTerm], carrier: Carrier, max_freq: u32) -> Result<TorusForm> {
    let mut f = FourierForm::zero(2, max_freq);
    for t in terms {
        let a = crate::parse::term_multivector(t);
        match t.wave {
            None => f.add_cos(&[0, 0], &a)?,
            Some((Wave::Cos, k)) => f.add_cos(&k, &a)?,
            Some((Wave::Sin, k)) => f.add_sin(&k, &a)?,
        }
    }
    Ok(TorusForm::new(carrier, f)?)
}

fn run_fm(
    alpha: &TorusForm,
    j: usize,
    model: &EllipticModel,
    dir: Direction,
    opts: FmOptions,
) -> Result<FmOutput> {
    Ok(match dir {
        Direction::Forward => transform_with(alpha, j, model, opts)?,
        Direction::Back => transform_back_with(alpha, j, model, opts)?,
    })
}

fn coefficient_table(f: &TorusForm) -> Vec<Value> {
    let names = match f.carrier {
        Carrier::E1 => ["dr", "ds1"],
        _ => ["dr", "ds2"],
    };
    let label = |s: AxisSet| {
        if s.0 == 0 {
            "1".to_string()
        } else {
            s.axes().map(|a| names[a]).collect::<Vec<_>>().join("^")
        }
    };
    let mut rows = Vec::new();
    for (k, m) in f.form.modes() {
        for (part, mv) in [("cos", &m.cos), ("sin", &m.sin)] {
            for (set, c) in mv.terms() {
                rows.push(json!({ "frequency": k, "part": part, "blade": label(set), "value": c }));
            }
        }
    }
    rows
}

pub struct FmArgs<'a> {
    pub tau: Complex64,
    pub t: Complex64,
    pub alpha: &'a [SpecTerm],
    pub alpha_text: &'a str,
    pub j: usize,
    pub direction: Direction,
    pub max_freq: u32,
}

pub fn fm(args: &FmArgs, settings: &Settings) -> Result<Report> {
    settings.validate()?;
    let model = build_x(&params(args.tau, args.t)?)?;
    let source = match args.direction {
        Direction::Forward => Carrier::E1,
        Direction::Back => Carrier::E2,
    };
    let alpha = spec_form(args.alpha, source, args.max_freq)?;
    let out = run_fm(&alpha, args.j, &model, args.direction, FmOptions::default())?;
    let samples = 2 * (2 * args.max_freq as usize + 1);
    let fine = run_fm(
        &alpha,
        args.j,
        &model,
        args.direction,
        FmOptions {
            fibre_samples: Some(samples),
        },
    )?;
    let refinement = out.form.lin_comb(1.0, &fine.form, -1.0)?.max_abs();
    let doubled = run_fm(
        &alpha.lin_comb(2.0, &alpha, 0.0)?,
        args.j,
        &model,
        args.direction,
        FmOptions::default(),
    )?;
    let linearity = doubled.form.lin_comb(1.0, &out.form, -2.0)?.max_abs();
    let expected = out.input_degree.map(|i| i as i64 + 2 * args.j as i64 - 1);
    let degree_ok = match (out.input_degree, out.form.degree()) {
        (None, _) => out.form.max_abs() == 0.0,
        (Some(_), Some(d)) => out.degree_in_range && Some(d as i64) == expected,
        (Some(_), None) => out.form.max_abs() == 0.0,
    };
    let checks = vec![
        CheckRecord::flag("fm/degree", "output degree is i + 2j - n", degree_ok),
        CheckRecord::new(
            "fm/refinement",
            "doubling fibre samples leaves the output unchanged",
            refinement,
            REFINEMENT_TOL,
        ),
        CheckRecord::new(
            "fm/linearity",
            "transform is linear",
            linearity,
            LINEARITY_TOL,
        ),
    ];
    let data = json!({
        "input_degree": out.input_degree,
        "target_degree": out.target_degree,
        "degree_in_range": out.degree_in_range,
        "target": out.form.carrier,
        "coefficients": coefficient_table(&out.form),
        "integrated_fibre_length": selfdual::fm::integrated_fibre_length(&model, out.form.carrier)?,
    });
    Ok(Report::new(
        "fm",
        conventions(),
        config_value(
            settings,
            json!({
                "tau": format_complex(args.tau), "t": format_complex(args.t), "alpha": args.alpha_text,
                "j": args.j, "direction": args.direction, "max_freq": args.max_freq,
            }),
        ),
        checks,
        data,
    ))
}

pub fn rep_check(n: usize, settings: &Settings) -> Result<Report> {
    settings.validate()?;
    let sp = OperatorSpace::new(n)?;
    let tol = settings.tolerances.identity;
    let mut checks = Vec::new();
    for (anchor, recs) in [
        ("anticommutation of the E operators", basis_relations(&sp)),
        (
            "commutation relations among the L operators",
            commutation_relations(&sp),
        ),
        (
            "Chevalley relations for A_3",
            chevalley_relations(&sp.chevalley_basis()),
        ),
    ] {
        for r in recs {
            checks.push(CheckRecord::new(
                format!("rep/{}/{}", r.family, r.indices),
                anchor,
                r.residual,
                tol,
            ));
        }
    }
    let sl4 = lie_closure(&sp.sl4_generators())?;
    let single = lie_closure(&sp.lefschetz_pair())?;
    checks.push(CheckRecord::new(
        "rep/closure/sl4",
        "L_0, L_1, L_2 and adjoints generate sl(4)",
        (sl4.dimension() as f64 - 15.0).abs(),
        0.5,
    ));
    checks.push(CheckRecord::new(
        "rep/closure/sl2",
        "one form and its adjoint generate sl(2)",
        (single.dimension() as f64 - 3.0).abs(),
        0.5,
    ));
    checks.push(CheckRecord::new(
        "rep/closure/trace_form",
        "trace form of the closure is nondegenerate",
        1.0 / sl4.trace_form_conditioning().max(f64::MIN_POSITIVE),
        1e9,
    ));
    let exceptions = contraction_rule_exceptions(&sp);
    let data = json!({
        "n": n,
        "closure_dimension": sl4.dimension(),
        "closure_rounds": sl4.rounds,
        "single_form_dimension": single.dimension(),
        "contraction_rule_excluded": {
            "instances": exceptions.len(),
            "failing_literally": exceptions.iter().filter(|r| !r.holds()).count(),
        },
    });
    Ok(Report::new(
        "rep-check",
        conventions(),
        config_value(settings, json!({ "n": n })),
        checks,
        data,
    ))
}

pub fn skaid_check(n: usize, max_freq: u32, settings: &Settings) -> Result<Report> {
    settings.validate()?;
    let rep = verify_skaid(n, max_freq, settings.seed)?;
    let mut checks: Vec<CheckRecord> = rep
        .families
        .iter()
        .map(|f| {
            CheckRecord::new(
                format!("skaid/{}", f.name),
                "commutation with d, d* and the Laplacian",
                f.max_residual,
                selfdual::derham::SKAID_TOL,
            )
        })
        .collect();
    checks.push(CheckRecord::new(
        "skaid/harmonic",
        "harmonic forms carry the sl(4) action",
        rep.harmonic_residual,
        selfdual::derham::SKAID_TOL,
    ));
    let data =
        json!({ "n": n, "max_freq": max_freq, "samples": rep.samples, "families": rep.families });
    Ok(Report::new(
        "skaid-check",
        conventions(),
        config_value(settings, json!({ "n": n, "N": max_freq })),
        checks,
        data,
    ))
}

/// Every suite with its default arguments, merged into one report.
pub fn all(settings: &Settings) -> Result<Report> {
    let (cfg, source) = load_chart(None)?;
    let alpha = crate::parse::form_spec("1")?;
    let reports = vec![
        verify_pointwise(2, 2, 100, settings)?,
        affine_check(&cfg, &source, settings)?,
        mirror(
            Complex64::i(),
            Complex64::i(),
            MonodromyConvention::default(),
            settings,
        )?,
        fm(
            &FmArgs {
                tau: Complex64::i(),
                t: Complex64::i(),
                alpha: &alpha,
                alpha_text: "1",
                j: 1,
                direction: Direction::Forward,
                max_freq: 2,
            },
            settings,
        )?,
        rep_check(2, settings)?,
        skaid_check(1, 4, settings)?,
    ];
    let mut checks = Vec::new();
    let mut data = serde_json::Map::new();
    for r in reports {
        checks.extend(r.checks);
        data.insert(r.suite, r.data);
    }
    Ok(Report::new(
        "all",
        conventions(),
        config_value(settings, Value::Null),
        checks,
        Value::Object(data),
    ))
}
