//! Experiment configuration: TOML (or a JSON mirror) resolved into library
//! objects.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::basis::{BasisFamily, IndexDomain, MultiIndex};
use crate::error::{Error, Result};
use crate::estimators::{AdditiveComponent, AdditiveSpec};
use crate::models::{power_law_truth, TruthSpec};
use crate::operators::{OperatorKind, SvdOperator};
use crate::risk::{
    additive_rate, convolution_rate, matched_delta, radon_rate, BoundMode, EstimatorConfig,
    ObservationModel, TheoremOneConstants,
};
use crate::spaces::{CoefficientVector, Ellipsoid};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    WhiteNoise,
    Density,
    Tomography,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorConfig {
    pub kind: OperatorKind,
    #[serde(default)]
    pub q: f64,
    #[serde(default = "one")]
    pub scale: f64,
    /// Envelope for explicit singular values; defaults to the operator's own.
    #[serde(default)]
    pub envelope: Option<[f64; 2]>,
    /// Explicit singular values (filter coefficients) as `index:value`.
    #[serde(default)]
    pub singular_values: Vec<String>,
    #[serde(default = "default_floor")]
    pub floor: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassConfig {
    pub s: f64,
    #[serde(rename = "L")]
    pub radius: f64,
    #[serde(default = "one_usize")]
    pub d: usize,
    #[serde(rename = "C1", default = "one")]
    pub c1: f64,
    #[serde(rename = "C2", default = "one")]
    pub c2: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TruthKind {
    PowerLaw,
    Explicit,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruthConfig {
    #[serde(default = "default_truth_kind")]
    pub kind: TruthKind,
    #[serde(default = "default_max_degree")]
    pub max_degree: u32,
    /// Power-law decay; defaults to `s + 0.6` of the class it lives in.
    #[serde(default)]
    pub decay: Option<f64>,
    #[serde(default = "default_fraction")]
    pub fraction: f64,
    /// Coefficient of the constant function, added on top of the power law.
    #[serde(default)]
    pub constant: f64,
    #[serde(default)]
    pub coefficients: Vec<String>,
    /// Lower bound required of the observation density in density models.
    #[serde(default = "default_margin")]
    pub margin: f64,
}

impl Default for TruthConfig {
    fn default() -> Self {
        Self {
            kind: default_truth_kind(),
            max_degree: default_max_degree(),
            decay: None,
            fraction: default_fraction(),
            constant: 0.0,
            coefficients: Vec::new(),
            margin: default_margin(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorKind {
    DeltaNet,
    Dense,
    Additive,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComponentConfig {
    pub axis: usize,
    pub s: f64,
    #[serde(rename = "L")]
    pub radius: f64,
    #[serde(default)]
    pub q: f64,
    #[serde(default = "one")]
    pub scale: f64,
    #[serde(default)]
    pub delta: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorSpec {
    pub kind: EstimatorKind,
    /// Fixed delta; when absent the rate-matched `n^{-s/(2s+2q+d)}` is used.
    #[serde(default)]
    pub delta: Option<f64>,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    /// Geometry constant of the additive decomposition.
    #[serde(default = "one")]
    pub c: f64,
    #[serde(default)]
    pub components: Vec<ComponentConfig>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundConfig {
    #[serde(default = "default_c_tau")]
    pub c_tau: f64,
    #[serde(default = "default_xi")]
    pub xi: f64,
    /// Density-mode bounds on `||Af||_inf` and `||Qf||_inf`.
    #[serde(default)]
    pub b_inf: Option<f64>,
    #[serde(default)]
    pub b_inf_prime: Option<f64>,
}

impl Default for BoundConfig {
    fn default() -> Self {
        Self {
            c_tau: default_c_tau(),
            xi: default_xi(),
            b_inf: None,
            b_inf_prime: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetStatsConfig {
    #[serde(default = "default_deltas")]
    pub deltas: Vec<f64>,
}

impl Default for NetStatsConfig {
    fn default() -> Self {
        Self {
            deltas: default_deltas(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelKind,
    pub operator: OperatorConfig,
    pub class: ClassConfig,
    #[serde(default)]
    pub truth: TruthConfig,
    pub estimator: EstimatorSpec,
    #[serde(default = "default_ns")]
    pub ns: Vec<u64>,
    #[serde(default = "default_reps")]
    pub reps: usize,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Allowed distance between the fitted and the target rate exponent.
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default)]
    pub bound: BoundConfig,
    #[serde(default)]
    pub net_stats: NetStatsConfig,
}

fn one() -> f64 {
    1.0
}
fn one_usize() -> usize {
    1
}
fn default_floor() -> f64 {
    1e-14
}
fn default_truth_kind() -> TruthKind {
    TruthKind::PowerLaw
}
fn default_max_degree() -> u32 {
    8
}
fn default_fraction() -> f64 {
    0.5
}
fn default_margin() -> f64 {
    0.05
}
fn default_epsilon() -> f64 {
    1e-10
}
fn default_c_tau() -> f64 {
    TheoremOneConstants::DEFAULT_C_TAU
}
fn default_xi() -> f64 {
    TheoremOneConstants::DEFAULT_XI
}
fn default_deltas() -> Vec<f64> {
    vec![0.4, 0.2, 0.1, 0.05]
}
fn default_ns() -> Vec<u64> {
    vec![256, 1024, 4096, 16384, 65536]
}
fn default_reps() -> usize {
    30
}
fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}
fn default_tolerance() -> f64 {
    0.15
}

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

/// Parse `index:value` entries.
pub fn parse_index_values(entries: &[String]) -> Result<BTreeMap<MultiIndex, f64>> {
    let mut out = BTreeMap::new();
    for entry in entries {
        let (j, v) = entry
            .split_once(':')
            .ok_or_else(|| config_err(format!("`{entry}` is not of the form index:value")))?;
        let j: MultiIndex = j
            .parse()
            .map_err(|e| config_err(format!("`{entry}`: {e}")))?;
        let v: f64 = v
            .trim()
            .parse()
            .map_err(|_| config_err(format!("`{entry}`: bad value")))?;
        if out.insert(j.clone(), v).is_some() {
            return Err(config_err(format!("index {j} is listed twice")));
        }
    }
    Ok(out)
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| config_err(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| config_err(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a `.json` file as JSON and anything else as TOML.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_err(format!("cannot read {}: {e}", path.display())))?;
        if path.extension().is_some_and(|x| x == "json") {
            Self::from_json_str(&text)
        } else {
            Self::from_toml_str(&text)
        }
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn to_json_value(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }

    /// Checks every cross-field constraint so that compute never starts on an
    /// inconsistent configuration.
    pub fn validate(&self) -> Result<()> {
        let op_kind = self.operator.kind;
        match (self.model, op_kind) {
            (ModelKind::Density, OperatorKind::Convolution)
            | (ModelKind::Tomography, OperatorKind::Tomography2d)
            | (ModelKind::WhiteNoise, _) => {}
            (m, k) => {
                return Err(config_err(format!(
                    "model {m:?} cannot be combined with operator {k:?}"
                )))
            }
        }
        if self.estimator.kind == EstimatorKind::Additive {
            if self.model != ModelKind::WhiteNoise || op_kind != OperatorKind::Convolution {
                return Err(config_err(
                    "additive estimators run under white noise with convolution components",
                ));
            }
            self.additive_spec(self.ns.first().copied().unwrap_or(1))?;
        } else if !self.estimator.components.is_empty() {
            return Err(config_err("components are only used by the additive estimator"));
        }
        if matches!(op_kind, OperatorKind::Radon2d | OperatorKind::Tomography2d) && self.class.d != 2
        {
            return Err(config_err("Radon operators act on the disk: set class.d = 2"));
        }
        if self.ns.is_empty() || self.ns.contains(&0) {
            return Err(config_err("ns must list positive sample sizes"));
        }
        if self.ns.windows(2).any(|w| w[0] >= w[1]) {
            return Err(config_err("ns must be strictly increasing"));
        }
        if self.reps == 0 {
            return Err(config_err("reps must be at least 1"));
        }
        if !(self.tolerance > 0.0) {
            return Err(config_err("tolerance must be positive"));
        }
        if !(self.estimator.epsilon > 0.0) {
            return Err(config_err("estimator.epsilon must be positive"));
        }
        if self.net_stats.deltas.iter().any(|d| !(*d > 0.0)) {
            return Err(config_err("net_stats.deltas must be positive"));
        }
        if self.estimator.kind != EstimatorKind::Additive {
            let e = self.ellipsoid()?;
            self.operator()?;
            for &n in &self.ns {
                let delta = self.delta_for(n);
                if !(delta > 0.0 && delta < e.radius()) {
                    return Err(config_err(format!(
                        "delta={delta} at n={n} must lie in (0, L={})",
                        e.radius()
                    )));
                }
            }
            self.truth()?;
        }
        self.theorem_constants()?;
        Ok(())
    }

    pub fn domain(&self) -> IndexDomain {
        match self.operator.kind {
            OperatorKind::Convolution => IndexDomain::Trig { dim: self.class.d },
            _ => IndexDomain::Disk,
        }
    }

    pub fn observation_model(&self) -> ObservationModel {
        match self.model {
            ModelKind::WhiteNoise => ObservationModel::WhiteNoise,
            ModelKind::Density | ModelKind::Tomography => ObservationModel::Density,
        }
    }

    pub fn ellipsoid(&self) -> Result<Ellipsoid> {
        let c = &self.class;
        Ellipsoid::polynomial(self.domain(), c.s, c.radius)
            .and_then(|e| e.with_envelope(c.c1, c.c2))
            .map_err(|e| config_err(format!("class: {e}")))
    }

    pub fn operator(&self) -> Result<SvdOperator> {
        let o = &self.operator;
        let base = match o.kind {
            OperatorKind::Convolution => SvdOperator::convolution(self.domain(), o.q, o.scale),
            OperatorKind::Radon2d => Ok(SvdOperator::radon2d()),
            OperatorKind::Tomography2d => Ok(SvdOperator::tomography2d()),
        };
        let mut op = base.map_err(|e| config_err(format!("operator: {e}")))?;
        if let Some([lo, hi]) = o.envelope {
            op = op
                .with_envelope(lo, hi)
                .map_err(|e| config_err(format!("operator: {e}")))?;
        }
        let overrides = parse_index_values(&o.singular_values)?;
        if !overrides.is_empty() {
            op = op
                .with_overrides(overrides)
                .map_err(|e| config_err(format!("operator: {e}")))?;
        }
        op.with_floor(o.floor)
            .map_err(|e| config_err(format!("operator: {e}")))
    }

    /// Ill-posedness exponent seen by the rate laws.
    fn q(&self) -> f64 {
        match self.operator.kind {
            OperatorKind::Convolution => self.operator.q,
            _ => 0.5,
        }
    }

    pub fn delta_for(&self, n: u64) -> f64 {
        self.estimator
            .delta
            .unwrap_or_else(|| matched_delta(n as f64, self.class.s, self.q(), self.class.d as f64))
    }

    pub fn estimator_for(&self, n: u64) -> Result<EstimatorConfig> {
        let delta = self.delta_for(n);
        match self.estimator.kind {
            EstimatorKind::DeltaNet => Ok(EstimatorConfig::DeltaNet { delta }),
            EstimatorKind::Dense => Ok(EstimatorConfig::Dense {
                delta,
                epsilon: self.estimator.epsilon,
            }),
            EstimatorKind::Additive => Err(config_err("additive estimators use additive_spec")),
        }
    }

    pub fn additive_spec(&self, n: u64) -> Result<AdditiveSpec> {
        let d = self.class.d;
        let mut comps = Vec::new();
        for c in &self.estimator.components {
            let domain = IndexDomain::TrigAxis { dim: d, axis: c.axis };
            let e = Ellipsoid::polynomial(domain, c.s, c.radius)
                .map_err(|e| config_err(format!("component {}: {e}", c.axis)))?;
            let op = SvdOperator::convolution(domain, c.q, c.scale)
                .and_then(|op| op.with_floor(self.operator.floor))
                .map_err(|e| config_err(format!("component {}: {e}", c.axis)))?;
            let delta = c
                .delta
                .unwrap_or_else(|| matched_delta(n as f64, c.s, c.q, 1.0));
            if !(delta > 0.0 && delta < c.radius) {
                return Err(config_err(format!(
                    "component {} delta={delta} must lie in (0, L={})",
                    c.axis, c.radius
                )));
            }
            comps.push(AdditiveComponent {
                ellipsoid: e,
                operator: op,
                delta,
            });
        }
        AdditiveSpec::new(comps, self.estimator.c).map_err(|e| config_err(e.to_string()))
    }

    fn power_law(&self, e: &Ellipsoid) -> Result<CoefficientVector> {
        let t = &self.truth;
        power_law_truth(
            e,
            t.max_degree,
            t.decay.unwrap_or(e.smoothness() + 0.6),
            t.fraction,
        )
        .map_err(|err| config_err(format!("truth: {err}")))
    }

    fn truth_coefficients(&self, e: &Ellipsoid) -> Result<CoefficientVector> {
        let family = e.domain().family();
        let mut theta = match self.truth.kind {
            TruthKind::PowerLaw => self.power_law(e)?,
            TruthKind::Explicit => {
                let entries = parse_index_values(&self.truth.coefficients)?;
                CoefficientVector::from_entries(family, entries)
                    .map_err(|err| config_err(format!("truth: {err}")))?
            }
        };
        if self.truth.constant != 0.0 {
            let zero = match family {
                BasisFamily::Trig => MultiIndex::new(vec![0; self.class.d], 0)?,
                BasisFamily::Disk => {
                    return Err(config_err(
                        "disk truths have no constant coefficient; the baseline is built in",
                    ))
                }
            };
            theta.set(zero, self.truth.constant);
        }
        Ok(theta)
    }

    /// The truth, validated as a density (positive, unit mass) in density models.
    pub fn truth(&self) -> Result<TruthSpec> {
        let e = self.ellipsoid()?;
        let theta = self.truth_coefficients(&e)?;
        let spec = match self.model {
            ModelKind::WhiteNoise => TruthSpec::new(theta, e),
            ModelKind::Density | ModelKind::Tomography => {
                TruthSpec::density(theta, e, &self.operator()?, self.truth.margin)
            }
        };
        spec.map_err(|err| config_err(format!("truth: {err}")))
    }

    /// Additive truth: a power law on every component, summed.
    pub fn additive_truth(&self) -> Result<CoefficientVector> {
        let spec = self.additive_spec(self.ns[0])?;
        let mut theta = CoefficientVector::zero(BasisFamily::Trig);
        for comp in spec.components() {
            for (j, v) in self.power_law(&comp.ellipsoid)?.iter() {
                theta.set(j.clone(), v);
            }
        }
        Ok(theta)
    }

    pub fn target_exponent(&self) -> f64 {
        let s = self.class.s;
        let d = self.class.d as f64;
        match (self.estimator.kind, self.operator.kind) {
            (EstimatorKind::Additive, _) => {
                let comps: Vec<(f64, f64)> =
                    self.estimator.components.iter().map(|c| (c.s, c.q)).collect();
                additive_rate(&comps)
            }
            (_, OperatorKind::Convolution) => convolution_rate(s, self.operator.q, d),
            _ => radon_rate(s, d),
        }
    }

    pub fn theorem_constants(&self) -> Result<TheoremOneConstants> {
        let b = &self.bound;
        let mode = match self.model {
            ModelKind::WhiteNoise => BoundMode::WhiteNoise,
            _ => match (b.b_inf, b.b_inf_prime) {
                (Some(b_inf), Some(b_inf_prime)) => BoundMode::Density { b_inf, b_inf_prime },
                (None, None) => return Ok(TheoremOneConstants::white_noise_default()),
                _ => return Err(config_err("set both bound.b_inf and bound.b_inf_prime")),
            },
        };
        TheoremOneConstants::new(mode, b.c_tau, b.xi).map_err(|e| config_err(format!("bound: {e}")))
    }
}
