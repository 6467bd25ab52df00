//! Degenerate diffusion coefficient `a(x)`, drift envelope `beta(x)` and the
//! sampled checks of the degeneracy hypotheses.
//!
//! A coefficient is *weakly degenerate* (WDP) when `x a'(x) <= K a(x)` holds
//! with `K < 1`; Dirichlet conditions are imposed at both ends. It is
//! *strongly degenerate* (SDP) when `1 <= K < 2` and `a(x)/x^sigma` is
//! nondecreasing near the origin; the flux `a y_x` then vanishes at `x = 0`.
//! All continuum statements are checked on finite sample sets.

use std::fmt;
use std::path::Path;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::sampling::{hypothesis_samples, GEOMETRIC_CEIL};

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
pub type FieldFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// Relative tolerance for sampled hypothesis checks.
pub const TOL_HYP: f64 = 1e-10;
/// Largest step of the central-difference fallback for `a'`.
pub const FD_STEP: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Case {
    Wdp,
    Sdp,
}

impl Case {
    /// Case admissible for a hypothesis constant `k`, if any.
    pub fn for_k(k: f64) -> Option<Case> {
        if (0.0..1.0).contains(&k) {
            Some(Case::Wdp)
        } else if (1.0..2.0).contains(&k) {
            Some(Case::Sdp)
        } else {
            None
        }
    }
}

impl fmt::Display for Case {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Case::Wdp => write!(f, "WDP"),
            Case::Sdp => write!(f, "SDP"),
        }
    }
}

/// Pointwise description of a candidate coefficient, before validation.
#[derive(Clone)]
pub struct Profile {
    label: String,
    eval: ScalarFn,
    deriv: Option<ScalarFn>,
}

impl fmt::Debug for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Profile")
            .field("label", &self.label)
            .field("analytic_derivative", &self.deriv.is_some())
            .finish()
    }
}

impl Profile {
    pub fn from_fn(label: impl Into<String>, eval: ScalarFn, deriv: Option<ScalarFn>) -> Self {
        Self {
            label: label.into(),
            eval,
            deriv,
        }
    }

    /// `a(x) = x^alpha` with analytic derivative.
    pub fn power(alpha: f64) -> Self {
        Self::from_fn(
            format!("x^{alpha}"),
            Arc::new(move |x: f64| x.powf(alpha)),
            Some(Arc::new(move |x: f64| {
                if alpha == 0.0 {
                    0.0
                } else {
                    alpha * x.powf(alpha - 1.0)
                }
            })),
        )
    }

    pub fn constant(value: f64) -> Self {
        Self::from_fn(
            format!("{value}"),
            Arc::new(move |_| value),
            Some(Arc::new(|_| 0.0)),
        )
    }

    /// Named closed-form coefficients.
    pub fn catalog(name: &str) -> Result<Self> {
        let p = match name {
            "sqrt" => Self::power(0.5),
            "power-damped" => Self::from_fn(
                name,
                Arc::new(|x: f64| x.powf(1.2) * (2.0 - x)),
                Some(Arc::new(|x: f64| {
                    1.2 * x.powf(0.2) * (2.0 - x) - x.powf(1.2)
                })),
            ),
            "sin-half" => Self::from_fn(
                name,
                Arc::new(|x: f64| (0.5 * std::f64::consts::PI * x).sin().sqrt()),
                Some(Arc::new(|x: f64| {
                    let w = 0.5 * std::f64::consts::PI;
                    0.5 * w * (w * x).cos() / (w * x).sin().sqrt()
                })),
            ),
            "power-mix" => Self::from_fn(
                name,
                Arc::new(|x: f64| x.sqrt() + x),
                Some(Arc::new(|x: f64| 0.5 / x.sqrt() + 1.0)),
            ),
            other => {
                return Err(Error::InvalidInput(format!(
                    "unknown catalog coefficient `{other}`"
                )))
            }
        };
        Ok(p)
    }

    /// Piecewise-linear coefficient through `(x, a)` points. The first point
    /// must be `(0, 0)`, abscissae strictly increasing and reaching 1.
    pub fn from_points(points: Vec<(f64, f64)>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::InvalidInput("table needs at least two rows".into()));
        }
        if points[0] != (0.0, 0.0) {
            return Err(Error::InvalidInput(
                "table must start with the row x=0, a=0".into(),
            ));
        }
        if points.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(Error::InvalidInput(
                "table abscissae must be strictly increasing".into(),
            ));
        }
        if points.last().unwrap().0 < 1.0 {
            return Err(Error::InvalidInput("table must cover [0, 1]".into()));
        }
        let pts = Arc::new(points);
        let eval = move |x: f64| {
            let k = pts.partition_point(|p| p.0 <= x).clamp(1, pts.len() - 1);
            let (x0, a0) = pts[k - 1];
            let (x1, a1) = pts[k];
            a0 + (a1 - a0) * (x - x0) / (x1 - x0)
        };
        Ok(Self::from_fn("table", Arc::new(eval), None))
    }

    /// Read a two-column `x,a` comma-separated table. A non-numeric first
    /// row is treated as a header.
    pub fn from_csv(path: impl AsRef<Path>) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_path(path)?;
        let mut points = Vec::new();
        for (row, record) in reader.records().enumerate() {
            let record = record?;
            if record.len() != 2 {
                return Err(Error::InvalidInput(format!(
                    "table row {} has {} columns, expected 2",
                    row + 1,
                    record.len()
                )));
            }
            let parsed = (record[0].parse::<f64>(), record[1].parse::<f64>());
            match parsed {
                (Ok(x), Ok(a)) => points.push((x, a)),
                _ if row == 0 => continue,
                _ => {
                    return Err(Error::InvalidInput(format!(
                        "table row {} is not numeric",
                        row + 1
                    )))
                }
            }
        }
        Self::from_points(points)
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn value(&self, x: f64) -> f64 {
        (self.eval)(x)
    }

    pub fn has_analytic_derivative(&self) -> bool {
        self.deriv.is_some()
    }

    /// `a'(x)`: analytic when supplied, otherwise central differences with
    /// step `min(1e-6, 1e-4 x)`, one-sided at `x = 1`.
    pub fn derivative(&self, x: f64) -> f64 {
        if let Some(d) = &self.deriv {
            return d(x);
        }
        let h = FD_STEP.min(1e-4 * x);
        if x + h > 1.0 {
            (self.value(x) - self.value(x - h)) / h
        } else {
            (self.value(x + h) - self.value(x - h)) / (2.0 * h)
        }
    }
}

/// Declared hypothesis data. Unset fields are inferred from samples.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Declaration {
    pub case: Option<Case>,
    pub k: Option<f64>,
}

impl Declaration {
    pub fn case(case: Case) -> Self {
        Self {
            case: Some(case),
            k: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Clause {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone)]
pub struct ValidationReport {
    /// Smallest `K >= 0` with `x a' <= K a` on the samples.
    pub k_measured: f64,
    /// `K` in force: the declared value when given, else `k_measured`.
    pub k: f64,
    pub case: Case,
    pub sigma: Option<f64>,
    pub clauses: Vec<Clause>,
    pub n_samples: usize,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.clauses.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Clause> {
        self.clauses.iter().filter(|c| !c.passed)
    }
}

/// Check the degeneracy hypotheses for `profile` on `n_samples` points.
pub fn validate_coefficient(
    profile: &Profile,
    declared: Declaration,
    n_samples: usize,
) -> Result<ValidationReport> {
    if n_samples < 16 {
        return Err(Error::InvalidInput(format!(
            "need at least 16 samples, got {n_samples}"
        )));
    }
    let xs = hypothesis_samples(n_samples);
    let mut values = Vec::with_capacity(xs.len());
    let mut k_measured = 0.0_f64;
    for &x in &xs {
        let a = profile.value(x);
        if !(a > 0.0) || !a.is_finite() {
            return Err(Error::NonPositiveCoefficient { x, value: a });
        }
        let ratio = x * profile.derivative(x) / a;
        if !ratio.is_finite() {
            return Err(Error::HypothesisViolated(format!(
                "x a'(x) / a(x) not finite at x = {x}"
            )));
        }
        k_measured = k_measured.max(ratio);
        values.push(a);
    }
    // Exact power laws land a few ulps off; snap to 12 decimals.
    let snapped = (k_measured * 1e12).round() / 1e12;
    if (k_measured - snapped).abs() < 1e-13 {
        k_measured = snapped;
    }

    let mut clauses = Vec::new();
    let a0 = profile.value(0.0);
    clauses.push(Clause {
        name: "vanishes_at_origin",
        passed: a0 == 0.0,
        detail: format!("a(0) = {a0}"),
    });

    let k = declared.k.unwrap_or(k_measured);
    let holds = xs
        .iter()
        .zip(&values)
        .all(|(&x, &a)| x * profile.derivative(x) <= k * a + TOL_HYP * a.abs());
    clauses.push(Clause {
        name: "growth_bound",
        passed: holds,
        detail: format!("x a'(x) <= {k} a(x) (measured K = {k_measured})"),
    });

    let admissible = Case::for_k(k);
    let case = match (declared.case, admissible) {
        (_, None) => {
            return Err(Error::HypothesisViolated(format!(
                "x a'(x) <= K a(x) needs K = {k}, outside [0, 2)"
            )))
        }
        (Some(c), Some(_)) => c,
        (None, Some(c)) => c,
    };
    let k_range_ok = match case {
        Case::Wdp => (0.0..1.0).contains(&k),
        Case::Sdp => (1.0..2.0).contains(&k),
    };
    clauses.push(Clause {
        name: "case_k_range",
        passed: k_range_ok,
        detail: match case {
            Case::Wdp => format!("WDP requires K in [0,1), K = {k}"),
            Case::Sdp => format!("SDP requires K in [1,2), K = {k}"),
        },
    });

    let mut sigma = None;
    if case == Case::Sdp && k_range_ok {
        let near: Vec<(f64, f64)> = xs
            .iter()
            .zip(&values)
            .filter(|(&x, _)| x <= GEOMETRIC_CEIL)
            .map(|(&x, &a)| (x, a))
            .collect();
        let sigma_cand = near
            .iter()
            .map(|&(x, a)| x * profile.derivative(x) / a)
            .fold(f64::INFINITY, f64::min);
        let s = if k > 1.0 {
            sigma_cand.min(k)
        } else if sigma_cand >= 1.0 {
            0.5
        } else {
            sigma_cand
        };
        let in_range = if k > 1.0 {
            s > 1.0 && s <= k
        } else {
            s > 0.0 && s < 1.0
        };
        let monotone = in_range
            && near.windows(2).all(|w| {
                let q0 = w[0].1 / w[0].0.powf(s);
                let q1 = w[1].1 / w[1].0.powf(s);
                q1 >= q0 - TOL_HYP * q0.abs()
            });
        clauses.push(Clause {
            name: "sigma_monotone",
            passed: monotone,
            detail: format!("a(x)/x^sigma nondecreasing on (0, 0.1] with sigma = {s}"),
        });
        if monotone {
            sigma = Some(s);
        }
    }

    Ok(ValidationReport {
        k_measured,
        k,
        case,
        sigma,
        clauses,
        n_samples,
    })
}

/// A validated degenerate coefficient (or the uniform non-degenerate
/// reference `a = const`, which uses Dirichlet conditions at both ends).
#[derive(Clone, Debug)]
pub struct DegeneracyCoefficient {
    profile: Profile,
    k: f64,
    sigma: Option<f64>,
    case: Case,
    degenerate: bool,
}

impl DegeneracyCoefficient {
    /// Validate and wrap. Any failed clause becomes `HypothesisViolated`.
    pub fn new(profile: Profile, declared: Declaration, n_samples: usize) -> Result<Self> {
        let report = validate_coefficient(&profile, declared, n_samples)?;
        Self::from_report(profile, &report)
    }

    pub fn from_report(profile: Profile, report: &ValidationReport) -> Result<Self> {
        if let Some(c) = report.failures().next() {
            return Err(Error::HypothesisViolated(format!(
                "{}: {}",
                c.name, c.detail
            )));
        }
        Ok(Self {
            profile,
            k: report.k,
            sigma: report.sigma,
            case: report.case,
            degenerate: true,
        })
    }

    pub fn power(alpha: f64) -> Result<Self> {
        Self::new(Profile::power(alpha), Declaration::default(), 256)
    }

    pub fn uniform(value: f64) -> Self {
        assert!(value > 0.0, "uniform coefficient must be positive");
        Self {
            profile: Profile::constant(value),
            k: 0.0,
            sigma: None,
            case: Case::Wdp,
            degenerate: false,
        }
    }

    pub fn value(&self, x: f64) -> f64 {
        self.profile.value(x)
    }

    pub fn derivative(&self, x: f64) -> f64 {
        self.profile.derivative(x)
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    pub fn sigma(&self) -> Option<f64> {
        self.sigma
    }

    pub fn case(&self) -> Case {
        self.case
    }

    pub fn is_degenerate(&self) -> bool {
        self.degenerate
    }

    pub fn profile(&self) -> &Profile {
        &self.profile
    }

    /// `x^2 / a(x)`, with its limit 0 at the degenerate endpoint.
    pub fn x2_over_a(&self, x: f64) -> f64 {
        if x <= 0.0 {
            if self.degenerate {
                return 0.0;
            }
            return 0.0 / self.value(0.0);
        }
        x * x / self.value(x)
    }
}

/// Coefficient field on space-time: constant, closed form, or sampled at
/// grid nodes (`values[n][i]` at `t_n`, `x_i`).
#[derive(Clone)]
pub enum SpaceTimeField {
    Constant(f64),
    Function(FieldFn),
    Sampled(Arc<Vec<Vec<f64>>>),
}

impl fmt::Debug for SpaceTimeField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SpaceTimeField::Constant(v) => write!(f, "Constant({v})"),
            SpaceTimeField::Function(_) => write!(f, "Function(..)"),
            SpaceTimeField::Sampled(v) => write!(f, "Sampled({} slices)", v.len()),
        }
    }
}

impl SpaceTimeField {
    pub fn zero() -> Self {
        SpaceTimeField::Constant(0.0)
    }

    pub fn at(&self, x: f64, t: f64, n: usize, i: usize) -> f64 {
        match self {
            SpaceTimeField::Constant(v) => *v,
            SpaceTimeField::Function(f) => f(x, t),
            SpaceTimeField::Sampled(v) => v[n][i],
        }
    }

    pub fn is_time_independent(&self) -> bool {
        matches!(self, SpaceTimeField::Constant(_))
    }
}

/// First-order envelope `beta(x)` with zero-order `b(x,t)` and first-order
/// `c(x,t)` coefficients of `y_t - (a y_x)_x + b y + beta c y_x`.
#[derive(Clone)]
pub struct DriftEnvelope {
    beta: ScalarFn,
    pub b: SpaceTimeField,
    pub c: SpaceTimeField,
    c_beta: f64,
}

impl fmt::Debug for DriftEnvelope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DriftEnvelope")
            .field("b", &self.b)
            .field("c", &self.c)
            .field("c_beta", &self.c_beta)
            .finish()
    }
}

impl DriftEnvelope {
    /// `beta(x) = x`, `b = c = 0`.
    pub fn zero() -> Self {
        Self {
            beta: Arc::new(|x| x),
            b: SpaceTimeField::zero(),
            c: SpaceTimeField::zero(),
            c_beta: 1.0,
        }
    }

    pub fn new(
        beta: ScalarFn,
        b: SpaceTimeField,
        c: SpaceTimeField,
        a: &DegeneracyCoefficient,
        n_samples: usize,
    ) -> Result<Self> {
        let c_beta = validate_beta(&beta, a, n_samples)?;
        Ok(Self { beta, b, c, c_beta })
    }

    pub fn beta(&self, x: f64) -> f64 {
        (self.beta)(x)
    }

    pub fn beta_fn(&self) -> &ScalarFn {
        &self.beta
    }

    pub fn c_beta(&self) -> f64 {
        self.c_beta
    }

    pub fn with_fields(&self, b: SpaceTimeField, c: SpaceTimeField) -> Self {
        Self {
            beta: self.beta.clone(),
            b,
            c,
            c_beta: self.c_beta,
        }
    }

    /// Both coefficient fields are constant in time.
    pub fn is_time_independent(&self) -> bool {
        self.b.is_time_independent() && self.c.is_time_independent()
    }
}

/// Default cap on `|beta(x)/x|`.
pub const BETA_CAP: f64 = 1e6;

/// Sup of `|beta(x)/x|` over the hypothesis samples.
///
/// The sup is tracked over the nested windows `x >= 1e-2, 1e-4, ..., 1e-10`;
/// sustained growth (factor > 1.2 over each of the last two windows) or a
/// value past [`BETA_CAP`] is reported as `EnvelopeUnbounded`.
pub fn validate_beta(beta: &ScalarFn, a: &DegeneracyCoefficient, n_samples: usize) -> Result<f64> {
    let xs = hypothesis_samples(n_samples.max(16));
    let windows = [1e-2, 1e-4, 1e-6, 1e-8, 1e-10];
    let mut sups = [0.0_f64; 5];
    for &x in &xs {
        let q = (beta(x) / x).abs();
        if !q.is_finite() {
            return Err(Error::EnvelopeUnbounded { sup: f64::INFINITY });
        }
        for (w, s) in windows.iter().zip(sups.iter_mut()) {
            if x >= *w {
                *s = s.max(q);
            }
        }
    }
    let sup = sups[4];
    let growing = sups[2] > 0.0 && sups[3] > 1.2 * sups[2] && sups[4] > 1.2 * sups[3];
    if sup > BETA_CAP || growing {
        return Err(Error::EnvelopeUnbounded { sup });
    }
    for &x in &xs {
        let bx = beta(x);
        let ax = a.value(x);
        let lhs = bx * bx / ax;
        let rhs = sup * sup * x * x / ax;
        if lhs > rhs * (1.0 + TOL_HYP) + f64::MIN_POSITIVE {
            return Err(Error::HypothesisViolated(format!(
                "beta^2/a <= C^2 x^2/a fails at x = {x}"
            )));
        }
    }
    Ok(sup)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sqrt_is_wdp_with_half() {
        let r = validate_coefficient(&Profile::power(0.5), Declaration::default(), 64).unwrap();
        assert!(r.passed());
        assert_eq!(r.case, Case::Wdp);
        assert!((r.k - 0.5).abs() < 1e-12);
    }

    #[test]
    fn square_rejected() {
        let err =
            validate_coefficient(&Profile::power(2.0), Declaration::default(), 64).unwrap_err();
        assert!(matches!(err, Error::HypothesisViolated(_)));
    }

    #[test]
    fn three_halves_is_sdp() {
        let r = validate_coefficient(&Profile::power(1.5), Declaration::default(), 64).unwrap();
        assert!(r.passed(), "{:?}", r.clauses);
        assert_eq!(r.case, Case::Sdp);
        assert!((r.k - 1.5).abs() < 1e-12);
        assert!((r.sigma.unwrap() - 1.5).abs() < 1e-12);
    }

    #[test]
    fn wdp_coefficient_declared_sdp_fails_unless_k_one() {
        let p = Profile::power(0.5);
        let r = validate_coefficient(&p, Declaration::case(Case::Sdp), 64).unwrap();
        assert!(!r.passed());
        assert!(r.failures().any(|c| c.name == "case_k_range"));
        let r = validate_coefficient(
            &p,
            Declaration {
                case: Some(Case::Sdp),
                k: Some(1.0),
            },
            64,
        )
        .unwrap();
        assert!(r.passed(), "{:?}", r.clauses);
        assert!(r.sigma.unwrap() <= 0.5);
    }

    #[test]
    fn nonpositive_interior_rejected() {
        let p = Profile::from_fn("neg", Arc::new(|x: f64| x - 0.5), None);
        let err = validate_coefficient(&p, Declaration::default(), 32).unwrap_err();
        assert!(matches!(err, Error::NonPositiveCoefficient { .. }));
    }

    #[test]
    fn finite_difference_derivative_matches() {
        let p = Profile::from_fn("x^0.75", Arc::new(|x: f64| x.powf(0.75)), None);
        for x in [1e-8_f64, 1e-3, 0.4, 1.0] {
            let exact = 0.75 * x.powf(-0.25);
            assert!((p.derivative(x) - exact).abs() < 1e-6 * exact, "x = {x}");
        }
        let r = validate_coefficient(&p, Declaration::default(), 64).unwrap();
        assert!((r.k - 0.75).abs() < 1e-6);
    }

    #[test]
    fn catalog_entries_validate() {
        for (name, case) in [
            ("sqrt", Case::Wdp),
            ("sin-half", Case::Wdp),
            ("power-mix", Case::Wdp),
            ("power-damped", Case::Sdp),
        ] {
            let r = validate_coefficient(
                &Profile::catalog(name).unwrap(),
                Declaration::default(),
                128,
            )
            .unwrap();
            assert!(r.passed(), "{name}: {:?}", r.clauses);
            assert_eq!(r.case, case, "{name}");
        }
    }

    #[test]
    fn table_requires_origin_row() {
        assert!(Profile::from_points(vec![(0.1, 0.1), (1.0, 1.0)]).is_err());
        assert!(
            Profile::from_points(vec![(0.0, 0.0), (0.5, 0.4), (0.4, 0.6), (1.0, 1.0)]).is_err()
        );
        let p = Profile::from_points(vec![(0.0, 0.0), (0.5, 0.5), (1.0, 1.0)]).unwrap();
        assert!((p.value(0.25) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn beta_linear() {
        let a = DegeneracyCoefficient::power(0.5).unwrap();
        let c = validate_beta(&(Arc::new(|x| x) as ScalarFn), &a, 64).unwrap();
        assert!((c - 1.0).abs() < 1e-15);
    }

    #[test]
    fn beta_oscillating_bounded_by_three() {
        let a = DegeneracyCoefficient::power(0.5).unwrap();
        let beta: ScalarFn = Arc::new(|x: f64| x * (2.0 + (1.0 / x).sin()));
        // Dense oracle: sup of 2 + sin(1/x) over refined uniform grids.
        let mut oracle = 0.0_f64;
        for k in 1..=200_000 {
            let x = k as f64 / 200_000.0;
            oracle = oracle.max(2.0 + (1.0 / x).sin());
        }
        let c = validate_beta(&beta, &a, 512).unwrap();
        assert!(c <= 3.0 + 1e-12);
        assert!(c <= oracle + 1e-3 && c > 2.5, "{c} vs {oracle}");
    }

    #[test]
    fn beta_sqrt_unbounded() {
        let a = DegeneracyCoefficient::power(0.5).unwrap();
        let beta: ScalarFn = Arc::new(|x: f64| x.sqrt());
        assert!(matches!(
            validate_beta(&beta, &a, 64),
            Err(Error::EnvelopeUnbounded { .. })
        ));
    }
}
