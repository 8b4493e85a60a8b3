//! The nonlinearity `f` and the constant `s`.
//!
//! Built-in models are `u1` (`f(t) = t`), `cp1` (`f(t) = (t−1)/(t+1)`) and
//! `power` (`f(t) = t^α`). Custom models implement [`Nonlinearity`] and declare
//! which growth class they belong to; [`check_assumptions`] then tests the
//! declaration on a log-spaced sample.

use std::fmt;
use std::sync::Arc;

use crate::error::{Result, VortexError};

/// Which of the two alternative growth conditions a model satisfies.
///
/// Class A: `f″t + f′ ≥ 0` and `|f|/(f′t)` bounded.
/// Class B: `f′t(|log t| + |f|)` bounded.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AssumptionClass {
    A,
    B,
}

impl fmt::Display for AssumptionClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AssumptionClass::A => write!(f, "A"),
            AssumptionClass::B => write!(f, "B"),
        }
    }
}

pub trait Nonlinearity: Send + Sync + fmt::Debug {
    fn name(&self) -> &str;

    /// `(f(t), f′(t), f″(t))` for `t ≥ 0`.
    fn eval(&self, t: f64) -> (f64, f64, f64);

    /// `sup_{t>0} f(t)`, possibly `+∞`.
    fn sup(&self) -> f64;

    /// `f⁻¹(y)` for `y` in `(f(0), sup f)`.
    fn inverse(&self, y: f64) -> Result<f64>;

    fn class(&self) -> AssumptionClass;
}

#[derive(Debug)]
struct Linear;

impl Nonlinearity for Linear {
    fn name(&self) -> &str {
        "u1"
    }
    fn eval(&self, t: f64) -> (f64, f64, f64) {
        (t, 1.0, 0.0)
    }
    fn sup(&self) -> f64 {
        f64::INFINITY
    }
    fn inverse(&self, y: f64) -> Result<f64> {
        if !(y > 0.0 && y.is_finite()) {
            return Err(VortexError::InverseDomain { value: y, lo: 0.0, hi: f64::INFINITY });
        }
        Ok(y)
    }
    fn class(&self) -> AssumptionClass {
        AssumptionClass::A
    }
}

#[derive(Debug)]
struct Sigmoid;

impl Nonlinearity for Sigmoid {
    fn name(&self) -> &str {
        "cp1"
    }
    fn eval(&self, t: f64) -> (f64, f64, f64) {
        let p = 1.0 + t;
        ((t - 1.0) / p, 2.0 / (p * p), -4.0 / (p * p * p))
    }
    fn sup(&self) -> f64 {
        1.0
    }
    fn inverse(&self, y: f64) -> Result<f64> {
        if !(y > -1.0 && y < 1.0) {
            return Err(VortexError::InverseDomain { value: y, lo: -1.0, hi: 1.0 });
        }
        Ok((1.0 + y) / (1.0 - y))
    }
    fn class(&self) -> AssumptionClass {
        AssumptionClass::B
    }
}

#[derive(Debug)]
struct Power {
    alpha: f64,
}

impl Nonlinearity for Power {
    fn name(&self) -> &str {
        "power"
    }
    fn eval(&self, t: f64) -> (f64, f64, f64) {
        let a = self.alpha;
        if t == 0.0 {
            // Limits from the right; the derivatives blow up when α is below 1 or 2.
            let d1 = if a > 1.0 { 0.0 } else if a == 1.0 { 1.0 } else { f64::INFINITY };
            let d2 = if a > 2.0 || a == 1.0 {
                0.0
            } else if a == 2.0 {
                2.0
            } else if a < 1.0 {
                f64::NEG_INFINITY
            } else {
                f64::INFINITY
            };
            return (0.0, d1, d2);
        }
        let f = t.powf(a);
        (f, a * f / t, a * (a - 1.0) * f / (t * t))
    }
    fn sup(&self) -> f64 {
        f64::INFINITY
    }
    fn inverse(&self, y: f64) -> Result<f64> {
        if !(y > 0.0 && y.is_finite()) {
            return Err(VortexError::InverseDomain { value: y, lo: 0.0, hi: f64::INFINITY });
        }
        Ok(y.powf(1.0 / self.alpha))
    }
    fn class(&self) -> AssumptionClass {
        AssumptionClass::A
    }
}

/// A nonlinearity together with the constant `s`.
#[derive(Clone, Debug)]
pub struct VortexModel {
    nonlinearity: Arc<dyn Nonlinearity>,
    s: f64,
    alpha: Option<f64>,
}

impl VortexModel {
    /// Wrap a custom nonlinearity, requiring `f(0) < s < sup f`.
    pub fn new(nonlinearity: Arc<dyn Nonlinearity>, s: f64) -> Result<VortexModel> {
        let f0 = nonlinearity.eval(0.0).0;
        let sup = nonlinearity.sup();
        if !(s.is_finite() && f0 < s && s < sup) {
            return Err(VortexError::InvalidModel(format!(
                "assumption (f1) violated: need f(0) = {f0} < s = {s} < sup f = {sup}"
            )));
        }
        Ok(VortexModel { nonlinearity, s, alpha: None })
    }

    pub fn u1() -> VortexModel {
        VortexModel { nonlinearity: Arc::new(Linear), s: 1.0, alpha: None }
    }

    pub fn cp1(s: f64) -> Result<VortexModel> {
        if !(s > -1.0 && s < 1.0) {
            return Err(VortexError::InvalidModel(format!(
                "assumption (f1) violated: cp1 requires -1 < s < 1, got s = {s}"
            )));
        }
        Ok(VortexModel { nonlinearity: Arc::new(Sigmoid), s, alpha: None })
    }

    pub fn power(alpha: f64, s: f64) -> Result<VortexModel> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(VortexError::InvalidModel(format!(
                "power model requires alpha > 0, got {alpha}"
            )));
        }
        if !(s > 0.0 && s.is_finite()) {
            return Err(VortexError::InvalidModel(format!(
                "assumption (f1) violated: power model requires s > 0, got s = {s}"
            )));
        }
        Ok(VortexModel { nonlinearity: Arc::new(Power { alpha }), s, alpha: Some(alpha) })
    }

    /// Look up a built-in model. `s` defaults to 1 for `u1` and `power` and
    /// to 0 for `cp1`; `alpha` defaults to 1.
    pub fn builtin(name: &str, s: Option<f64>, alpha: Option<f64>) -> Result<VortexModel> {
        match name {
            "u1" => match s {
                None => Ok(VortexModel::u1()),
                Some(s) => VortexModel::new(Arc::new(Linear), s),
            },
            "cp1" => VortexModel::cp1(s.unwrap_or(0.0)),
            "power" => VortexModel::power(alpha.unwrap_or(1.0), s.unwrap_or(1.0)),
            other => Err(VortexError::InvalidModel(format!(
                "unknown model {other:?} (expected u1, cp1 or power)"
            ))),
        }
    }

    pub fn name(&self) -> &str {
        self.nonlinearity.name()
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    pub fn alpha(&self) -> Option<f64> {
        self.alpha
    }

    pub fn class(&self) -> AssumptionClass {
        self.nonlinearity.class()
    }

    pub fn nonlinearity(&self) -> &Arc<dyn Nonlinearity> {
        &self.nonlinearity
    }

    #[inline]
    pub fn eval(&self, t: f64) -> (f64, f64, f64) {
        self.nonlinearity.eval(t)
    }

    pub fn f(&self, t: f64) -> f64 {
        self.eval(t).0
    }

    pub fn f0(&self) -> f64 {
        self.eval(0.0).0
    }

    pub fn sup(&self) -> f64 {
        self.nonlinearity.sup()
    }

    pub fn inverse(&self, y: f64) -> Result<f64> {
        self.nonlinearity.inverse(y)
    }
}

/// Outcome of the sampled assumption checks.
#[derive(Clone, Debug, PartialEq)]
pub struct AssumptionReport {
    pub model: String,
    pub samples: usize,
    pub t_min: f64,
    pub t_max: f64,
    /// `f′ > 0` at every sample (including `t = 0`).
    pub positive_derivative: bool,
    pub min_derivative: f64,
    /// `f(0) < s < max sampled f`.
    pub s_in_range: bool,
    pub f_at_zero: f64,
    pub max_sampled_f: f64,
    /// `f(f⁻¹(y)) = y` to 1e-10 relative on sampled `y`.
    pub inverse_consistent: bool,
    pub class_a: bool,
    pub min_class_a_curvature: f64,
    pub class_b: bool,
    pub declared: AssumptionClass,
    /// The declared class passes its check.
    pub declared_passes: bool,
    pub note: String,
}

impl AssumptionReport {
    pub fn passes(&self) -> bool {
        self.positive_derivative && self.s_in_range && self.inverse_consistent && self.declared_passes
    }

    /// One line per failed check.
    pub fn failures(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !self.positive_derivative {
            out.push(format!("assumption (f0) violated: min f' = {:e}", self.min_derivative));
        }
        if !self.s_in_range {
            out.push(format!(
                "assumption (f1) violated: need f(0) = {} < s < max f = {}",
                self.f_at_zero, self.max_sampled_f
            ));
        }
        if !self.inverse_consistent {
            out.push("f^-1 is not a two-sided inverse on sampled values".into());
        }
        if !self.declared_passes {
            out.push(format!("assumption (f3) class {} not satisfied on the sample", self.declared));
        }
        out
    }
}

/// Default upper end of the sampled range.
pub const DEFAULT_T_CHECK: f64 = 1e6;

/// Slope threshold (in log-log coordinates) separating "bounded" from "growing".
const GROWTH_SLOPE: f64 = 0.05;

/// Sample `(0, t_check]` log-uniformly and test the model assumptions.
///
/// The lower end is `min(1e-8, t_check/1e3)`. Boundedness of a positive
/// quantity `Q` is judged by its log-log slope over the first and last decade:
/// `Q` may not grow as `t → 0⁺` or as `t → t_check`. This is a sampled
/// certificate, not a proof.
pub fn check_assumptions(model: &VortexModel, t_check: f64, samples: usize) -> Result<AssumptionReport> {
    if !(t_check > 0.0 && t_check.is_finite()) {
        return Err(VortexError::InvalidParameter(format!("T_check must be positive, got {t_check}")));
    }
    if samples < 1000 {
        return Err(VortexError::InvalidParameter(format!("need at least 1000 samples, got {samples}")));
    }
    let t_min = 1e-8_f64.min(t_check / 1e3);
    let (lo, hi) = (t_min.ln(), t_check.ln());
    let ts: Vec<f64> = (0..samples)
        .map(|i| (lo + (hi - lo) * i as f64 / (samples - 1) as f64).exp())
        .collect();
    let evals: Vec<(f64, f64, f64)> = ts.iter().map(|&t| model.eval(t)).collect();

    let (f_zero, d_zero, _) = model.eval(0.0);
    let min_derivative = evals.iter().map(|e| e.1).fold(d_zero, f64::min);
    let positive_derivative = min_derivative > 0.0 && evals.iter().all(|e| e.1.is_finite());

    let max_sampled_f = evals.iter().map(|e| e.0).fold(f64::NEG_INFINITY, f64::max);
    let s = model.s();
    let s_in_range = f_zero < s && s < max_sampled_f;

    let inverse_consistent = evals.iter().filter(|e| e.0 > f_zero && e.0 < model.sup()).all(|e| {
        match model.inverse(e.0) {
            Ok(t) => {
                let back = model.f(t);
                (back - e.0).abs() <= 1e-10 * e.0.abs().max(1e-300)
                    || (back - e.0).abs() <= 1e-14
            }
            Err(_) => false,
        }
    });

    let curvature: Vec<f64> = ts.iter().zip(&evals).map(|(t, e)| e.2 * t + e.1).collect();
    let min_class_a_curvature = curvature.iter().copied().fold(f64::INFINITY, f64::min);
    let ratio: Vec<f64> = ts.iter().zip(&evals).map(|(t, e)| e.0.abs() / (e.1 * t)).collect();
    let class_a = min_class_a_curvature >= -1e-12 && bounded_trend(&ts, &ratio);

    let product: Vec<f64> = ts
        .iter()
        .zip(&evals)
        .map(|(t, e)| e.1 * t * (t.ln().abs() + e.0.abs()))
        .collect();
    let class_b = bounded_trend(&ts, &product);

    let declared = model.class();
    let declared_passes = match declared {
        AssumptionClass::A => class_a,
        AssumptionClass::B => class_b,
    };
    Ok(AssumptionReport {
        model: model.name().to_string(),
        samples,
        t_min,
        t_max: t_check,
        positive_derivative,
        min_derivative,
        s_in_range,
        f_at_zero: f_zero,
        max_sampled_f,
        inverse_consistent,
        class_a,
        min_class_a_curvature,
        class_b,
        declared,
        declared_passes,
        note: "sampled certificate only; polynomial growth is declared, not tested".into(),
    })
}

fn bounded_trend(ts: &[f64], q: &[f64]) -> bool {
    if q.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return false;
    }
    let first_decade_end = ts[0] * 10.0;
    let last_decade_start = ts[ts.len() - 1] / 10.0;
    let slope = |sel: &dyn Fn(f64) -> bool| -> Option<f64> {
        let pts: Vec<(f64, f64)> = ts
            .iter()
            .zip(q)
            .filter(|(t, v)| sel(**t) && **v > 0.0)
            .map(|(t, v)| (t.ln(), v.ln()))
            .collect();
        if pts.len() < 2 {
            return None;
        }
        let (a, b) = (pts[0], pts[pts.len() - 1]);
        Some((b.1 - a.1) / (b.0 - a.0))
    };
    // A quantity identically zero at an end is bounded there.
    let near_zero = slope(&|t| t <= first_decade_end).unwrap_or(0.0);
    let near_top = slope(&|t| t >= last_decade_start).unwrap_or(0.0);
    near_zero >= -GROWTH_SLOPE && near_top <= GROWTH_SLOPE
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn builtin_u1() {
        let m = VortexModel::builtin("u1", None, None).unwrap();
        assert_eq!(m.eval(2.0), (2.0, 1.0, 0.0));
        assert_eq!(m.s(), 1.0);
    }

    #[test]
    fn builtin_cp1() {
        let m = VortexModel::builtin("cp1", Some(0.0), None).unwrap();
        assert_eq!(m.f(0.0), -1.0);
        assert_eq!(m.f(1.0), 0.0);
        assert_eq!(m.eval(1.0).1, 0.5);
        assert_eq!(m.inverse(0.0).unwrap(), 1.0);
        let err = VortexModel::builtin("cp1", Some(1.5), None).unwrap_err().to_string();
        assert!(err.contains("(f1) violated"), "{err}");
        assert!(VortexModel::cp1(-1.0).is_err());
    }

    #[test]
    fn builtin_power() {
        let m = VortexModel::builtin("power", Some(1.0), Some(2.0)).unwrap();
        let (f, d1, d2) = m.eval(3.0);
        assert!((f - 9.0).abs() < 1e-12 && (d1 - 6.0).abs() < 1e-12 && (d2 - 2.0).abs() < 1e-12);
        assert!(VortexModel::power(0.0, 1.0).is_err());
        assert!(VortexModel::power(-1.0, 1.0).is_err());
        assert!(VortexModel::power(1.0, 0.0).is_err());
        assert!(VortexModel::builtin("nope", None, None).is_err());
    }

    #[test]
    fn assumption_classes() {
        let u1 = check_assumptions(&VortexModel::u1(), DEFAULT_T_CHECK, 2000).unwrap();
        assert!(u1.class_a && !u1.class_b && u1.passes(), "{u1:?}");
        assert!((u1.min_class_a_curvature - 1.0).abs() < 1e-12);

        let cp1 = check_assumptions(&VortexModel::cp1(0.0).unwrap(), 1e8, 4000).unwrap();
        assert!(cp1.class_b && !cp1.class_a && cp1.passes(), "{cp1:?}");

        let p = check_assumptions(&VortexModel::power(0.5, 1.0).unwrap(), DEFAULT_T_CHECK, 2000).unwrap();
        assert!(p.class_a && p.passes(), "{p:?}");
        assert!(p.min_class_a_curvature > 0.0);
    }

    #[test]
    fn cp1_class_b_quantity_is_bounded_on_wide_range() {
        // Independent sweep over [1e-8, 1e8]: the product peaks at an interior t and decays at both ends.
        let m = VortexModel::cp1(0.0).unwrap();
        let q = |t: f64| {
            let (f, d, _) = m.eval(t);
            d * t * (t.ln().abs() + f.abs())
        };
        let sup = (0..=1600).map(|i| q(10f64.powf(-8.0 + i as f64 * 0.01))).fold(0.0, f64::max);
        assert!(sup < 2.0, "{sup}");
        assert!(q(1e8) < 1e-6 && q(1e-8) < 1e-6);
    }

    #[test]
    fn custom_model_declared_class_is_checked() {
        #[derive(Debug)]
        struct Cubic;
        impl Nonlinearity for Cubic {
            fn name(&self) -> &str {
                "cubic"
            }
            fn eval(&self, t: f64) -> (f64, f64, f64) {
                (t * t * t, 3.0 * t * t, 6.0 * t)
            }
            fn sup(&self) -> f64 {
                f64::INFINITY
            }
            fn inverse(&self, y: f64) -> Result<f64> {
                Ok(y.cbrt())
            }
            fn class(&self) -> AssumptionClass {
                AssumptionClass::B
            }
        }
        let m = VortexModel::new(Arc::new(Cubic), 1.0).unwrap();
        let r = check_assumptions(&m, DEFAULT_T_CHECK, 1000).unwrap();
        // f'(0) = 0 violates positivity and the declared class B is wrong.
        assert!(!r.positive_derivative);
        assert!(r.class_a && !r.class_b && !r.declared_passes);
        assert!(!r.passes());
    }

    #[test]
    fn rejects_bad_check_parameters() {
        assert!(check_assumptions(&VortexModel::u1(), 0.0, 1000).is_err());
        assert!(check_assumptions(&VortexModel::u1(), 1e6, 10).is_err());
    }

    fn models() -> Vec<VortexModel> {
        vec![
            VortexModel::u1(),
            VortexModel::cp1(0.3).unwrap(),
            VortexModel::power(2.0, 1.0).unwrap(),
            VortexModel::power(0.5, 1.0).unwrap(),
            VortexModel::power(3.7, 2.0).unwrap(),
        ]
    }

    proptest! {
        #[test]
        fn derivatives_match_central_differences(t in 1e-3f64..1e3) {
            for m in models() {
                let h = 1e-5 * t.max(1.0).min(t * 100.0);
                let (_, d1, d2) = m.eval(t);
                let fd1 = (m.f(t + h) - m.f(t - h)) / (2.0 * h);
                let fd2 = (m.eval(t + h).1 - m.eval(t - h).1) / (2.0 * h);
                let scale1 = d1.abs() + m.f(t).abs() / t;
                prop_assert!((fd1 - d1).abs() <= 1e-6 * scale1, "{} f' at {t}: {fd1} vs {d1}", m.name());
                let scale2 = d2.abs() + d1.abs() / t;
                prop_assert!((fd2 - d2).abs() <= 1e-6 * scale2, "{} f'' at {t}: {fd2} vs {d2}", m.name());
            }
        }

        #[test]
        fn inverse_is_two_sided(t in 1e-4f64..1e4) {
            for m in models() {
                let y = m.f(t);
                let back = m.inverse(y).unwrap();
                prop_assert!((back - t).abs() <= 1e-10 * t.max(1.0) * (1.0 + t));
                prop_assert!((m.f(back) - y).abs() <= 1e-10 * y.abs().max(1e-12));
            }
        }
    }
}
