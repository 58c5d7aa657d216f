//! Scaling-law model families and their analytic gradients.
//!
//! Every model is an outer curve `g(m; a, b, c)` applied to an inner
//! combination `m` of the scaled features:
//!
//! | family             | g(m)                                       |
//! |--------------------|--------------------------------------------|
//! | `powerlaw`         | `a * m^b + c`                              |
//! | `arctan_scaling`   | `(200/pi) * atan(a * (pi/2) * m + b) + c`  |
//! | `logarithmic`      | `a * ln(m + b) + c`                        |
//! | `algebraic_root`   | `100 * m / (1 + abs(a * m)^(1/b)) + c`     |
//! | `arctan_regression`| `a + c * atan(m + b)`                      |
//!
//! The inner combination is linear (`sum w_f * x_f`) or a sum of two-parameter
//! arctan effects (`sum w_f1 * atan(w_f2 * x_f)`) over the model's features.
//! Parameters are laid out as `[a, b, c, inner weights...]`, with arctan
//! pairs interleaved per feature.

use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{validate_class_names, Feature, FeatureVector, MainFeature};

pub const N_OUTER: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Powerlaw,
    ArctanScaling,
    Logarithmic,
    AlgebraicRoot,
    /// `a + c * atan(m + b)`, used with forward-selected feature sets.
    ArctanRegression,
}

impl Family {
    pub const SCALING_LAWS: [Family; 4] =
        [Family::Powerlaw, Family::ArctanScaling, Family::Logarithmic, Family::AlgebraicRoot];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Inner {
    /// `w_n * total_n + w_e * epoch`
    TotalNLinear,
    /// `sum_c w_c * n_c + w_e * epoch`
    PerClassLinear,
    /// `sum_c w_c1 * atan(w_c2 * n_c) + w_e1 * atan(w_e2 * epoch)`
    PerClassArctan2,
    /// `w_n1 * atan(w_n2 * total_n) + w_e1 * atan(w_e2 * epoch)`
    TotalNArctan2,
    /// Linear over an explicit list of (possibly interaction) features.
    CustomFeatureSet,
}

impl Inner {
    pub const ALL: [Inner; 5] = [
        Inner::TotalNLinear,
        Inner::PerClassLinear,
        Inner::PerClassArctan2,
        Inner::TotalNArctan2,
        Inner::CustomFeatureSet,
    ];

    pub fn weights_per_feature(self) -> usize {
        match self {
            Inner::PerClassArctan2 | Inner::TotalNArctan2 => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParamVector(pub Vec<f64>);

impl ParamVector {
    pub fn outer(&self) -> [f64; 3] {
        [self.0[0], self.0[1], self.0[2]]
    }

    pub fn inner_weights(&self) -> &[f64] {
        &self.0[N_OUTER..]
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for ParamVector {
    fn from(v: Vec<f64>) -> Self {
        ParamVector(v)
    }
}

/// A model family bound to a concrete class layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelSpecRepr", into = "ModelSpecRepr")]
pub struct ModelSpec {
    family: Family,
    inner: Inner,
    class_names: Vec<String>,
    features: Vec<Feature>,
}

#[derive(Serialize, Deserialize)]
struct ModelSpecRepr {
    family: Family,
    inner: Inner,
    class_names: Vec<String>,
    /// May be omitted for the standard inner layouts.
    #[serde(default)]
    feature_names: Vec<String>,
}

impl TryFrom<ModelSpecRepr> for ModelSpec {
    type Error = Error;

    fn try_from(r: ModelSpecRepr) -> Result<Self> {
        let spec = match r.inner {
            Inner::CustomFeatureSet => ModelSpec::custom(r.family, r.class_names, &r.feature_names)?,
            inner => ModelSpec::new(r.family, inner, r.class_names)?,
        };
        if !r.feature_names.is_empty() && spec.feature_names() != r.feature_names {
            return Err(Error::config(format!(
                "feature names {:?} do not match the {:?} layout {:?}",
                r.feature_names,
                r.inner,
                spec.feature_names()
            )));
        }
        Ok(spec)
    }
}

impl From<ModelSpec> for ModelSpecRepr {
    fn from(s: ModelSpec) -> Self {
        ModelSpecRepr { feature_names: s.feature_names(), family: s.family, inner: s.inner, class_names: s.class_names }
    }
}

impl ModelSpec {
    /// Spec with one of the standard inner layouts.
    pub fn new(family: Family, inner: Inner, class_names: Vec<String>) -> Result<Self> {
        validate_class_names(&class_names)?;
        let features = match inner {
            Inner::TotalNLinear | Inner::TotalNArctan2 => {
                vec![Feature::Main(MainFeature::TotalN), Feature::Main(MainFeature::Epoch)]
            }
            Inner::PerClassLinear | Inner::PerClassArctan2 => (0..class_names.len())
                .map(|c| Feature::Main(MainFeature::Class(c)))
                .chain(std::iter::once(Feature::Main(MainFeature::Epoch)))
                .collect(),
            Inner::CustomFeatureSet => return Err(Error::config("custom feature sets need explicit features")),
        };
        Ok(ModelSpec { family, inner, class_names, features })
    }

    /// Linear inner combination over the named features.
    pub fn custom<S: AsRef<str>>(family: Family, class_names: Vec<String>, feature_names: &[S]) -> Result<Self> {
        validate_class_names(&class_names)?;
        let features =
            feature_names.iter().map(|n| Feature::parse(n.as_ref(), &class_names)).collect::<Result<Vec<_>>>()?;
        Ok(ModelSpec::with_features(family, class_names, features))
    }

    pub(crate) fn with_features(family: Family, class_names: Vec<String>, features: Vec<Feature>) -> Self {
        ModelSpec { family, inner: Inner::CustomFeatureSet, class_names, features }
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn inner(&self) -> Inner {
        self.inner
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn features(&self) -> &[Feature] {
        &self.features
    }

    pub fn feature_names(&self) -> Vec<String> {
        self.features.iter().map(|f| f.name(&self.class_names)).collect()
    }

    pub fn n_params(&self) -> usize {
        N_OUTER + self.inner.weights_per_feature() * self.features.len()
    }

    /// Names for every parameter slot, in parameter order.
    pub fn param_names(&self) -> Vec<String> {
        let mut names = vec!["a".to_string(), "b".to_string(), "c".to_string()];
        for f in self.feature_names() {
            if self.inner.weights_per_feature() == 2 {
                names.push(format!("{f}.1"));
                names.push(format!("{f}.2"));
            } else {
                names.push(f);
            }
        }
        names
    }

    fn check(&self, params: &[f64], x: &FeatureVector) -> Result<()> {
        if params.len() != self.n_params() {
            return Err(Error::contract(format!("model expects {} parameters, got {}", self.n_params(), params.len())));
        }
        if x.n_classes() != self.n_classes() {
            return Err(Error::contract(format!(
                "model expects {} classes, feature vector has {}",
                self.n_classes(),
                x.n_classes()
            )));
        }
        Ok(())
    }

    pub fn inner_combination(&self, params: &ParamVector, x: &FeatureVector) -> Result<f64> {
        self.check(&params.0, x)?;
        Ok(self.inner_value(&params.0, x, None))
    }

    // Inner value; when `grad` is given, writes dm/dw into grad[N_OUTER..].
    fn inner_value(&self, params: &[f64], x: &FeatureVector, mut grad: Option<&mut [f64]>) -> f64 {
        let w = &params[N_OUTER..];
        let mut m = 0.0;
        match self.inner.weights_per_feature() {
            1 => {
                for (i, f) in self.features.iter().enumerate() {
                    let v = f.value(x);
                    m += w[i] * v;
                    if let Some(g) = grad.as_deref_mut() {
                        g[N_OUTER + i] = v;
                    }
                }
            }
            _ => {
                for (i, f) in self.features.iter().enumerate() {
                    let v = f.value(x);
                    let (amp, rate) = (w[2 * i], w[2 * i + 1]);
                    let t = (rate * v).atan();
                    m += amp * t;
                    if let Some(g) = grad.as_deref_mut() {
                        g[N_OUTER + 2 * i] = t;
                        g[N_OUTER + 2 * i + 1] = amp * v / (1.0 + (rate * v).powi(2));
                    }
                }
            }
        }
        m
    }

    pub fn evaluate(&self, params: &ParamVector, x: &FeatureVector) -> Result<f64> {
        self.check(&params.0, x)?;
        let m = self.inner_value(&params.0, x, None);
        Ok(outer(self.family, params.outer(), m)?.value)
    }

    pub fn gradient(&self, params: &ParamVector, x: &FeatureVector) -> Result<Vec<f64>> {
        let mut grad = vec![0.0; self.n_params()];
        self.value_and_gradient(&params.0, x, &mut grad)?;
        Ok(grad)
    }

    /// Value and full parameter gradient in one pass. `grad` must hold
    /// `n_params()` entries.
    pub fn value_and_gradient(&self, params: &[f64], x: &FeatureVector, grad: &mut [f64]) -> Result<f64> {
        self.check(params, x)?;
        let m = self.inner_value(params, x, Some(grad));
        let o = outer(self.family, [params[0], params[1], params[2]], m)?;
        grad[..N_OUTER].copy_from_slice(&o.d_outer);
        for g in &mut grad[N_OUTER..] {
            // An inner weight that cannot move m has zero effect, even where
            // the outer curve is vertical.
            *g = if *g == 0.0 { 0.0 } else { o.d_m * *g };
            if !g.is_finite() {
                return Err(Error::Domain { what: "non-finite gradient at inner combination", value: m });
            }
        }
        Ok(o.value)
    }

    /// Evaluate without the shape checks (hot path for fitting).
    pub(crate) fn value_unchecked(&self, params: &[f64], x: &FeatureVector) -> Result<f64> {
        let m = self.inner_value(params, x, None);
        Ok(outer(self.family, [params[0], params[1], params[2]], m)?.value)
    }
}

struct Outer {
    value: f64,
    d_outer: [f64; 3],
    d_m: f64,
}

fn outer(family: Family, [a, b, c]: [f64; 3], m: f64) -> Result<Outer> {
    let out = match family {
        Family::Powerlaw => {
            if m.is_nan() || m < 0.0 {
                return Err(Error::Domain { what: "powerlaw inner combination is negative", value: m });
            }
            if m == 0.0 {
                if b <= 0.0 {
                    return Err(Error::Domain { what: "powerlaw at zero needs a positive exponent", value: b });
                }
                let d_m = if b > 1.0 {
                    0.0
                } else if b == 1.0 {
                    a
                } else {
                    f64::INFINITY
                };
                Outer { value: c, d_outer: [0.0, 0.0, 1.0], d_m }
            } else {
                let p = m.powf(b);
                Outer { value: a * p + c, d_outer: [p, a * p * m.ln(), 1.0], d_m: a * b * m.powf(b - 1.0) }
            }
        }
        Family::ArctanScaling => {
            let u = a * FRAC_PI_2 * m + b;
            let g = (200.0 / PI) / (1.0 + u * u);
            Outer { value: (200.0 / PI) * u.atan() + c, d_outer: [g * FRAC_PI_2 * m, g, 1.0], d_m: g * a * FRAC_PI_2 }
        }
        Family::Logarithmic => {
            let z = m + b;
            if z.is_nan() || z <= 0.0 {
                return Err(Error::Domain { what: "logarithm of a non-positive argument", value: z });
            }
            Outer { value: a * z.ln() + c, d_outer: [z.ln(), a / z, 1.0], d_m: a / z }
        }
        Family::AlgebraicRoot => algebraic_root(a, b, c, m)?,
        Family::ArctanRegression => {
            let u = m + b;
            let g = c / (1.0 + u * u);
            Outer { value: a + c * u.atan(), d_outer: [1.0, g, u.atan()], d_m: g }
        }
    };
    if !out.value.is_finite() {
        return Err(Error::Domain { what: "non-finite model value at inner combination", value: m });
    }
    if !out.d_outer.iter().all(|d| d.is_finite()) || out.d_m.is_nan() {
        return Err(Error::Domain { what: "non-finite gradient at inner combination", value: m });
    }
    Ok(out)
}

fn algebraic_root(a: f64, b: f64, c: f64, m: f64) -> Result<Outer> {
    if b == 0.0 {
        return Err(Error::Domain { what: "algebraic root of order 1/0", value: b });
    }
    let p = 1.0 / b;
    let q = (a * m).abs();
    if q == 0.0 && p < 0.0 {
        return Err(Error::Domain { what: "algebraic root: zero raised to a negative power", value: p });
    }
    let qp = if q == 0.0 { 0.0 } else { q.powf(p) };
    let den = 1.0 + qp;
    let value = 100.0 * m / den + c;
    let d_m = 100.0 * (den - p * qp) / (den * den);
    // d(q^p)/da and d(q^p)/db
    let (dqp_da, dqp_db) = if q == 0.0 {
        let da = if m == 0.0 || p > 1.0 {
            0.0
        } else if p == 1.0 {
            m.abs()
        } else {
            f64::INFINITY
        };
        (da, 0.0)
    } else {
        (p * qp / a, -qp * q.ln() / (b * b))
    };
    let scale = -100.0 * m / (den * den);
    Ok(Outer { value, d_outer: [scale * dqp_da, scale * dqp_db, 1.0], d_m })
}

/// A spec with fitted (or ground-truth) parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedModel {
    #[serde(flatten)]
    pub spec: ModelSpec,
    pub params: ParamVector,
}

impl FittedModel {
    pub fn new(spec: ModelSpec, params: ParamVector) -> Result<Self> {
        if params.len() != spec.n_params() {
            return Err(Error::contract(format!("model expects {} parameters, got {}", spec.n_params(), params.len())));
        }
        Ok(FittedModel { spec, params })
    }

    pub fn predict(&self, x: &FeatureVector) -> Result<f64> {
        self.spec.evaluate(&self.params, x)
    }
}

/// The four standard powerlaw variants, numbered 0 to 3: full
/// linear, full arctan, total-size linear and total-size arctan.
pub fn reference_model(number: u8, class_names: Vec<String>) -> Result<(String, ModelSpec)> {
    let (name, inner) = match number {
        0 => ("full linear model", Inner::PerClassLinear),
        1 => ("full arctan model", Inner::PerClassArctan2),
        2 => ("total_n linear model", Inner::TotalNLinear),
        3 => ("total_n arctan model", Inner::TotalNArctan2),
        _ => return Err(Error::config(format!("no reference model ({number})"))),
    };
    Ok((name.to_string(), ModelSpec::new(Family::Powerlaw, inner, class_names)?))
}

/// Model description with class names left to be filled from data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelTemplate {
    #[serde(default)]
    pub name: Option<String>,
    pub family: Family,
    pub inner: Inner,
    /// Required for `custom_feature_set`, ignored otherwise.
    #[serde(default)]
    pub features: Vec<String>,
}

impl ModelTemplate {
    pub fn bind(&self, class_names: &[String]) -> Result<ModelSpec> {
        match self.inner {
            Inner::CustomFeatureSet => ModelSpec::custom(self.family, class_names.to_vec(), &self.features),
            inner => ModelSpec::new(self.family, inner, class_names.to_vec()),
        }
    }
}
