//! Empirical risk, Monte Carlo MISE, oracle bounds, entropy integrals and
//! rate regressions.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::MultiIndex;
use crate::error::{invalid, Error, Result};
use crate::estimators::{
    additive_minimize, dense_minimize_stats, AdditiveSpec, DeltaNet, EstimateResult,
};
use crate::models::{DensitySampler, Observation, SampleObservation, TruthSpec, WhiteNoiseObservation};
use crate::operators::{rho_q_lattice, SvdOperator};
use crate::rng::{replication_rng, Rng};
use crate::spaces::{truncation_level, CoefficientVector, Ellipsoid, LatticeNet};

use rand_distr::StandardNormal;

/// `gamma_n(g)`: `-2 sum theta_j z_j + sum theta_j^2` for white noise,
/// `-(2/n) sum_i (Qg)(Y_i) + ||g||^2` for a sample.
pub fn empirical_risk(g: &CoefficientVector, obs: &Observation, op: &SvdOperator) -> Result<f64> {
    if let Some((j, _)) = g.iter().find(|(_, v)| !v.is_finite()) {
        return invalid(format!("coefficient {j} is not finite"));
    }
    let norm2: f64 = g.iter().map(|(_, v)| v * v).sum();
    match obs {
        Observation::WhiteNoise(w) => {
            let mut cross = 0.0;
            for (j, v) in g.iter() {
                let z = w
                    .get(j)
                    .ok_or_else(|| Error::InvalidInput(format!("statistic z_{j} was not observed")))?;
                cross += v * z;
            }
            Ok(norm2 - 2.0 * cross)
        }
        Observation::Sample(s) => Ok(norm2 - 2.0 * mean_q(g, s, op)?),
    }
}

fn mean_q(g: &CoefficientVector, s: &SampleObservation, op: &SvdOperator) -> Result<f64> {
    let mut acc = 0.0;
    for y in s.points() {
        acc += op.eval_q_pointwise(g, y)?;
    }
    Ok(acc / s.n() as f64)
}

/// Centered empirical process `nu_n(Qg)`: the observed functional of `Qg`
/// minus its mean `<g, f>`.
pub fn centered_process(
    g: &CoefficientVector,
    obs: &Observation,
    op: &SvdOperator,
    truth: &CoefficientVector,
) -> Result<f64> {
    let mean = g.dot(truth);
    match obs {
        Observation::WhiteNoise(w) => {
            let mut acc = 0.0;
            for (j, v) in g.iter() {
                let z = w
                    .get(j)
                    .ok_or_else(|| Error::InvalidInput(format!("statistic z_{j} was not observed")))?;
                acc += v * z;
            }
            Ok(acc - mean)
        }
        Observation::Sample(s) => Ok(mean_q(g, s, op)? - mean),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ObservationModel {
    WhiteNoise,
    Density,
    /// `z_j = theta_j`: the `n -> infinity` surrogate.
    Noiseless,
}

#[derive(Clone, Debug)]
pub enum EstimatorConfig {
    /// Lattice delta-net over the truth's class.
    DeltaNet { delta: f64 },
    /// Dense minimizer truncated at `M(delta)`.
    Dense { delta: f64, epsilon: f64 },
}

enum Prepared {
    Lattice(LatticeNet),
    Dense {
        support: Vec<MultiIndex>,
        epsilon: f64,
    },
}

impl Prepared {
    fn new(config: &EstimatorConfig, e: &Ellipsoid) -> Result<Self> {
        Ok(match *config {
            EstimatorConfig::DeltaNet { delta } => Prepared::Lattice(LatticeNet::new(e, delta)?),
            EstimatorConfig::Dense { delta, epsilon } => Prepared::Dense {
                support: e.support(truncation_level(e, delta)?),
                epsilon,
            },
        })
    }

    fn support(&self) -> &[MultiIndex] {
        match self {
            Prepared::Lattice(net) => net.support(),
            Prepared::Dense { support, .. } => support,
        }
    }

    fn estimate(&self, e: &Ellipsoid, z: &[f64]) -> Result<CoefficientVector> {
        match self {
            Prepared::Lattice(net) => {
                let (coef, ..) = net.minimize_quadratic(z)?;
                Ok(CoefficientVector::from_dense(e.domain().family(), net.support(), &coef))
            }
            Prepared::Dense { support, epsilon } => {
                Ok(dense_minimize_stats(e, support, z, *epsilon)?.estimate)
            }
        }
    }
}

/// Mean and standard error of `||f_hat - f||^2` over replications.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MiseEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub reps: usize,
}

fn summarize(errors: &[f64]) -> MiseEstimate {
    let n = errors.len() as f64;
    let mean = errors.iter().sum::<f64>() / n;
    let var = errors.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (n - 1.0);
    MiseEstimate {
        mean,
        stderr: (var / n).sqrt(),
        reps: errors.len(),
    }
}

/// Run `reps` independent replications; replication `r` draws from the
/// ChaCha stream `r` of `master_seed`. A failing replication aborts the run
/// with its index.
fn replicate(
    reps: usize,
    master_seed: u64,
    run: impl Fn(&mut Rng) -> Result<f64> + Sync,
) -> Result<MiseEstimate> {
    if reps < 2 {
        return invalid(format!("reps={reps}: at least two replications are needed"));
    }
    let errors: Vec<Result<f64>> = (0..reps)
        .into_par_iter()
        .map(|r| run(&mut replication_rng(master_seed, r as u64)))
        .collect();
    let mut out = Vec::with_capacity(reps);
    for (r, e) in errors.into_iter().enumerate() {
        match e {
            Ok(v) => out.push(v),
            Err(source) => {
                return Err(Error::Replication {
                    replication: r,
                    source: Box::new(source),
                })
            }
        }
    }
    Ok(summarize(&out))
}

fn gaussian_z(theta: &[f64], scales: &[f64], n: u64, rng: &mut Rng) -> Vec<f64> {
    use rand::Rng as _;
    let noise = (n as f64).sqrt().recip();
    theta
        .iter()
        .zip(scales)
        .map(|(t, s)| {
            let eps: f64 = rng.sample(StandardNormal);
            t + noise * s * eps
        })
        .collect()
}

/// Monte Carlo MISE of an estimator, computed in coefficient space: the
/// truth's energy outside the estimator's support is added exactly.
pub fn mise_monte_carlo(
    truth: &TruthSpec,
    op: &SvdOperator,
    model: ObservationModel,
    estimator: &EstimatorConfig,
    n: u64,
    reps: usize,
    master_seed: u64,
) -> Result<MiseEstimate> {
    if n == 0 {
        return invalid("sample size n must be at least 1");
    }
    let e = truth.ellipsoid();
    let prepared = Prepared::new(estimator, e)?;
    let support = prepared.support().to_vec();
    let theta = truth.theta().to_dense(&support);
    let scales = op.inverse_singular_values(&support)?;
    let sampler = match model {
        ObservationModel::Density => Some(DensitySampler::new(truth, op)?),
        _ => None,
    };
    replicate(reps, master_seed, |rng| {
        let z = match model {
            ObservationModel::WhiteNoise => gaussian_z(&theta, &scales, n, rng),
            ObservationModel::Noiseless => theta.clone(),
            ObservationModel::Density => {
                let sample = sampler
                    .as_ref()
                    .expect("sampler exists in density mode")
                    .sample(n as usize, rng, master_seed)?;
                sample.statistics(op, &support)?
            }
        };
        let estimate = prepared.estimate(e, &z)?;
        Ok(estimate.distance(truth.theta()).powi(2))
    })
}

/// Monte Carlo MISE of the additive product-net estimator under white noise.
pub fn additive_mise_monte_carlo(
    theta: &CoefficientVector,
    spec: &AdditiveSpec,
    model: ObservationModel,
    n: u64,
    reps: usize,
    master_seed: u64,
) -> Result<MiseEstimate> {
    if model == ObservationModel::Density {
        return invalid("additive experiments run under white noise");
    }
    for comp in spec.components() {
        let part = CoefficientVector::from_entries(
            theta.basis(),
            theta
                .iter()
                .filter(|(j, _)| comp.ellipsoid.domain().contains(j))
                .map(|(j, v)| (j.clone(), v)),
        )?;
        if !comp.ellipsoid.contains(&part, 1e-12) {
            return invalid("additive truth leaves a component class");
        }
    }
    let nets = spec
        .components()
        .iter()
        .map(|c| LatticeNet::new(&c.ellipsoid, c.delta))
        .collect::<Result<Vec<_>>>()?;
    let mut support = Vec::new();
    let mut scales = Vec::new();
    for (net, comp) in nets.iter().zip(spec.components()) {
        support.extend(net.support().iter().cloned());
        scales.extend(comp.operator.inverse_singular_values(net.support())?);
    }
    let truth = theta.to_dense(&support);
    let refs: Vec<&dyn DeltaNet> = nets.iter().map(|n| n as &dyn DeltaNet).collect();
    replicate(reps, master_seed, |rng| {
        let z = match model {
            ObservationModel::Noiseless => truth.clone(),
            _ => gaussian_z(&truth, &scales, n, rng),
        };
        let obs = Observation::WhiteNoise(WhiteNoiseObservation::from_stats(
            theta.basis(),
            support.iter().cloned().zip(z),
            n as f64,
            master_seed,
        )?);
        let est: EstimateResult = additive_minimize(spec, &refs, &obs)?;
        Ok(est.estimate.distance(theta).powi(2))
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum BoundMode {
    WhiteNoise,
    /// `b_inf` bounds `||Af||_inf`, `b_inf_prime` bounds `||Qf||_inf` over the class.
    Density { b_inf: f64, b_inf_prime: f64 },
}

/// Constants of the delta-net oracle bound.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TheoremOneConstants {
    pub xi: f64,
    pub c_tau: f64,
    pub c1: f64,
    pub c2: f64,
    pub mode: BoundMode,
}

impl TheoremOneConstants {
    pub const DEFAULT_C_TAU: f64 = 32.0;
    pub const DEFAULT_XI: f64 = 0.26;

    /// Smallest admissible `xi` for the mode and `C_tau`.
    pub fn xi_lower(mode: BoundMode, c_tau: f64) -> f64 {
        match mode {
            BoundMode::WhiteNoise => (2.0 / c_tau).sqrt(),
            BoundMode::Density { b_inf, b_inf_prime } => {
                (4.0 * b_inf_prime / 3.0
                    + (2.0 * (8.0 * b_inf_prime.powi(2) / 9.0 + c_tau * b_inf)).sqrt())
                    / c_tau
            }
        }
    }

    pub fn new(mode: BoundMode, c_tau: f64, xi: f64) -> Result<Self> {
        if !(c_tau > 0.0 && c_tau.is_finite()) {
            return invalid(format!("C_tau={c_tau} must be positive"));
        }
        if let BoundMode::Density { b_inf, b_inf_prime } = mode {
            if !(b_inf > 0.0 && b_inf_prime > 0.0) {
                return invalid("density bounds B_inf and B'_inf must be positive");
            }
        }
        let lo = Self::xi_lower(mode, c_tau);
        if !(xi >= lo && xi < 0.5) {
            return invalid(format!(
                "xi={xi} is not admissible: need {lo} <= xi < 1/2{}",
                if lo >= 0.5 { " (the interval is empty for this C_tau)" } else { "" }
            ));
        }
        Ok(Self {
            xi,
            c_tau,
            c1: (1.0 + 2.0 * xi) / (1.0 - 2.0 * xi),
            c2: xi * c_tau / (1.0 - 2.0 * xi),
            mode,
        })
    }

    pub fn white_noise_default() -> Self {
        Self::new(BoundMode::WhiteNoise, Self::DEFAULT_C_TAU, Self::DEFAULT_XI)
            .expect("default constants are admissible")
    }

    /// Recomputes `C1`, `C2` from `xi`, `C_tau` and compares to the stored values.
    pub fn is_consistent(&self) -> bool {
        let c1 = (1.0 + 2.0 * self.xi) / (1.0 - 2.0 * self.xi);
        let c2 = self.xi * self.c_tau / (1.0 - 2.0 * self.xi);
        (c1 - self.c1).abs() <= 1e-12 && (c2 - self.c2).abs() <= 1e-12
    }
}

/// `C1 delta^2 + C2 rho^2 (log #F + 1) / n`.
pub fn theorem1_bound(
    consts: &TheoremOneConstants,
    delta: f64,
    net_log_card: f64,
    rho: f64,
    n: f64,
) -> Result<f64> {
    if !consts.is_consistent() {
        return invalid("Theorem constants are inconsistent with xi and C_tau");
    }
    if !(delta >= 0.0 && net_log_card >= 0.0 && rho >= 0.0 && n > 0.0) {
        return invalid("bound needs delta, log-cardinality, rho >= 0 and n > 0");
    }
    Ok(consts.c1 * delta * delta + consts.c2 * rho * rho * (net_log_card + 1.0) / n)
}

/// `3 delta^2 + 32 c^{-1} n^{-1} [sum rho_j^2 lambda_j + (sum rho_j)^2]`
/// with `delta = sum delta_j`.
pub fn theorem4_bound(c: f64, deltas: &[f64], rhos: &[f64], lambdas: &[f64], n: f64) -> Result<f64> {
    if !(c > 0.0) {
        return invalid(format!("geometry constant c={c} must be positive"));
    }
    if deltas.len() != rhos.len() || rhos.len() != lambdas.len() || deltas.is_empty() {
        return invalid("per-component deltas, rhos and lambdas must have one equal, nonzero length");
    }
    if !(n > 0.0) {
        return invalid("n must be positive");
    }
    let delta: f64 = deltas.iter().sum();
    let weighted: f64 = rhos.iter().zip(lambdas).map(|(r, l)| r * r * l).sum();
    let total: f64 = rhos.iter().sum();
    Ok(3.0 * delta * delta + 32.0 / (c * n) * (weighted + total * total))
}

/// Natural-log cardinality and exact `rho(Q, .)` of the lattice net at `delta`.
pub fn lattice_net_stats(e: &Ellipsoid, op: &SvdOperator, delta: f64) -> Result<(f64, f64)> {
    let net = LatticeNet::new(e, delta)?;
    let rho = rho_q_lattice(op, &net)?;
    Ok((net.log_cardinality()?, rho))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EntropyIntegral {
    pub value: f64,
    pub divergent: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EntropyMode {
    /// `rho = C u^{-q/s}`, `log # = C u^{-d/s}` with constants from the class.
    Analytic,
    /// Lattice nets built at each grid point.
    Built,
}

/// `int_0^delta c_rho u^{-a} sqrt(c_card u^{-b}) du` by trapezoid rule on a
/// geometric grid, with the part below the grid integrated exactly.
pub fn entropy_integral_power(
    c_rho: f64,
    a: f64,
    c_card: f64,
    b: f64,
    delta: f64,
    grid_size: usize,
) -> Result<EntropyIntegral> {
    if grid_size < 16 {
        return invalid(format!("grid_size={grid_size} must be at least 16"));
    }
    if !(delta > 0.0) {
        return invalid(format!("delta={delta} must be positive"));
    }
    let p = a + b / 2.0;
    if p >= 1.0 {
        return Ok(EntropyIntegral {
            value: f64::INFINITY,
            divergent: true,
        });
    }
    let h = |u: f64| c_rho * u.powf(-a) * (c_card * u.powf(-b)).sqrt();
    Ok(EntropyIntegral {
        value: geometric_trapezoid(h, delta, grid_size, Some(p))?,
        divergent: false,
    })
}

// Trapezoid rule in t = ln(delta / u) over [0, T], plus the tail below
// u_min = delta e^{-T} integrated as a power law `h(u_min) (u/u_min)^{-p}`
// with `p` either given or read off the last two nodes.
fn geometric_trapezoid(
    h: impl Fn(f64) -> f64,
    delta: f64,
    grid_size: usize,
    exponent: Option<f64>,
) -> Result<f64> {
    const SPAN: f64 = 12.0;
    let step = SPAN / (grid_size - 1) as f64;
    let mut total = 0.0;
    let mut prev = None;
    let mut last = (0.0, 0.0);
    for k in 0..grid_size {
        let t = k as f64 * step;
        let u = delta * (-t).exp();
        let g = h(u) * u;
        if let Some(pg) = prev {
            total += 0.5 * step * (pg + g);
        }
        prev = Some(g);
        last = (u, h(u));
    }
    let (u_min, h_min) = last;
    let p = match exponent {
        Some(p) => p,
        None => {
            let u_prev = delta * (-(SPAN - step)).exp();
            let h_prev = h(u_prev);
            if h_prev <= 0.0 || h_min <= 0.0 {
                0.0
            } else {
                (h_min / h_prev).ln() / (u_prev / u_min).ln()
            }
        }
    };
    if p >= 1.0 {
        return Err(Error::Numerical(
            "integrand decays too slowly near zero: the entropy integral diverges".into(),
        ));
    }
    Ok(total + h_min * u_min / (1.0 - p))
}

/// Entropy integral `int_0^delta rho(Q, F_u) sqrt(log #F_u) du`.
pub fn entropy_integral(
    op: &SvdOperator,
    e: &Ellipsoid,
    delta: f64,
    grid_size: usize,
    mode: EntropyMode,
) -> Result<EntropyIntegral> {
    let b2 = e.l2_bound();
    if !(delta > 0.0 && delta <= b2) {
        return invalid(format!("delta={delta} outside (0, B_2={b2}]"));
    }
    let s = e.smoothness();
    let a = op.q() / s;
    let b = e.dim() as f64 / s;
    let base = std::f64::consts::SQRT_2 * e.radius() / e.c1();
    match mode {
        EntropyMode::Analytic => {
            // b_j = b_1 |j|^{-q}, with b_1 read off a degree-one index
            let first = e
                .support(1)
                .into_iter()
                .find(|j| j.degree() == 1)
                .ok_or_else(|| Error::InvalidInput("class has no degree-one index".into()))?;
            let c_rho = base.powf(a) / op.singular_value(&first)?;
            entropy_integral_power(c_rho, a, base.powf(b), b, delta, grid_size)
        }
        EntropyMode::Built => {
            if a + b / 2.0 >= 1.0 {
                return Ok(EntropyIntegral {
                    value: f64::INFINITY,
                    divergent: true,
                });
            }
            if grid_size < 16 {
                return invalid(format!("grid_size={grid_size} must be at least 16"));
            }
            let radius = e.radius();
            let h = |u: f64| -> f64 {
                if u >= radius {
                    return 0.0;
                }
                match lattice_net_stats(e, op, u) {
                    Ok((log_card, rho)) => rho * log_card.max(0.0).sqrt(),
                    Err(_) => f64::NAN,
                }
            };
            let value = geometric_trapezoid_capped(h, delta, grid_size)?;
            Ok(EntropyIntegral {
                value,
                divergent: false,
            })
        }
    }
}

// Built nets get expensive quickly, so the built mode integrates over one
// decade and extrapolates below it.
fn geometric_trapezoid_capped(h: impl Fn(f64) -> f64, delta: f64, grid_size: usize) -> Result<f64> {
    let span = 10f64.ln();
    let step = span / (grid_size - 1) as f64;
    let nodes: Vec<(f64, f64)> = (0..grid_size)
        .map(|k| {
            let u = delta * (-(k as f64) * step).exp();
            (u, h(u))
        })
        .collect();
    if nodes.iter().any(|(_, v)| !v.is_finite()) {
        return Err(Error::Numerical(
            "net construction failed inside the entropy integral grid".into(),
        ));
    }
    let mut total = 0.0;
    for w in nodes.windows(2) {
        total += 0.5 * step * (w[0].1 * w[0].0 + w[1].1 * w[1].0);
    }
    let (u_min, h_min) = nodes[grid_size - 1];
    let (u_prev, h_prev) = nodes[grid_size / 2];
    let p = if h_min > 0.0 && h_prev > 0.0 {
        (h_min / h_prev).ln() / (u_prev / u_min).ln()
    } else {
        0.0
    };
    if p >= 1.0 {
        return Err(Error::Numerical("entropy integral diverges near zero".into()));
    }
    Ok(total + h_min * u_min / (1.0 - p))
}

/// Convolution target `-2s / (2s + 2q + d)`.
pub fn convolution_rate(s: f64, q: f64, d: f64) -> f64 {
    -2.0 * s / (2.0 * s + 2.0 * q + d)
}

/// Radon target `-2s / (2s + 2d - 1)`.
pub fn radon_rate(s: f64, d: f64) -> f64 {
    -2.0 * s / (2.0 * s + 2.0 * d - 1.0)
}

/// Additive target: the slowest one-dimensional component rate.
pub fn additive_rate(components: &[(f64, f64)]) -> f64 {
    components
        .iter()
        .map(|&(s, q)| convolution_rate(s, q, 1.0))
        .fold(f64::NEG_INFINITY, f64::max)
}

/// `delta(n) = n^{-s / (2s + 2q + d)}`, balancing `delta^2` against
/// `rho^2 log # / n` for polynomial decay.
pub fn matched_delta(n: f64, s: f64, q: f64, d: f64) -> f64 {
    n.powf(-s / (2.0 * s + 2.0 * q + d))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RateExperiment {
    pub ns: Vec<u64>,
    pub mises: Vec<f64>,
    pub stderrs: Vec<f64>,
    pub reps: usize,
    pub target_exponent: f64,
}

impl RateExperiment {
    pub fn new(
        ns: Vec<u64>,
        mises: Vec<f64>,
        stderrs: Vec<f64>,
        reps: usize,
        target_exponent: f64,
    ) -> Result<Self> {
        if ns.len() != mises.len() || ns.len() != stderrs.len() {
            return invalid("ns, mises and stderrs must have equal lengths");
        }
        if ns.windows(2).any(|w| w[0] >= w[1]) {
            return invalid("sample sizes must be strictly increasing");
        }
        if reps < 30 {
            return invalid(format!("reps={reps}: rate experiments need at least 30"));
        }
        if stderrs.iter().any(|s| !s.is_finite() || *s < 0.0) {
            return invalid("standard errors must be finite and non-negative");
        }
        Ok(Self {
            ns,
            mises,
            stderrs,
            reps,
            target_exponent,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RateFit {
    pub slope: f64,
    pub slope_stderr: f64,
    pub intercept: f64,
    pub target: f64,
    pub weighted: bool,
}

impl RateFit {
    pub fn within(&self, tolerance: f64) -> bool {
        (self.slope - self.target).abs() <= tolerance
    }
}

/// Weighted least squares of `ln MISE` on `ln n`, with weights
/// `(MISE / stderr)^2` (inverse delta-method variances of `ln MISE`).
/// Falls back to ordinary least squares when some standard error is zero.
pub fn rate_regression(exp: &RateExperiment) -> Result<RateFit> {
    if exp.ns.len() < 4 {
        return invalid("rate regression needs at least four sample sizes");
    }
    let first = exp.ns[0] as f64;
    let last = *exp.ns.last().expect("non-empty") as f64;
    if last / first < 100.0 - 1e-9 {
        return invalid("sample sizes must span at least two decades");
    }
    if let Some(m) = exp.mises.iter().find(|m| !(**m > 0.0)) {
        return invalid(format!("MISE value {m} is not positive; its log is undefined"));
    }
    let xs: Vec<f64> = exp.ns.iter().map(|&n| (n as f64).ln()).collect();
    let ys: Vec<f64> = exp.mises.iter().map(|m| m.ln()).collect();
    let weighted = exp.stderrs.iter().all(|s| *s > 0.0);
    let ws: Vec<f64> = if weighted {
        exp.mises
            .iter()
            .zip(&exp.stderrs)
            .map(|(m, s)| (m / s).powi(2))
            .collect()
    } else {
        vec![1.0; xs.len()]
    };
    let sw: f64 = ws.iter().sum();
    let mx = xs.iter().zip(&ws).map(|(x, w)| x * w).sum::<f64>() / sw;
    let my = ys.iter().zip(&ws).map(|(y, w)| y * w).sum::<f64>() / sw;
    let sxx: f64 = xs.iter().zip(&ws).map(|(x, w)| w * (x - mx).powi(2)).sum();
    let sxy: f64 = xs
        .iter()
        .zip(&ys)
        .zip(&ws)
        .map(|((x, y), w)| w * (x - mx) * (y - my))
        .sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let slope_stderr = if weighted {
        (1.0 / sxx).sqrt()
    } else {
        let k = xs.len() as f64;
        let rss: f64 = xs
            .iter()
            .zip(&ys)
            .map(|(x, y)| (y - intercept - slope * x).powi(2))
            .sum();
        (rss / (k - 2.0) / sxx).sqrt()
    };
    Ok(RateFit {
        slope,
        slope_stderr,
        intercept,
        target: exp.target_exponent,
        weighted,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{eval_trig_basis, BasisFamily, IndexDomain};
    use crate::models::{power_law_truth, simulate_white_noise};
    use crate::rng::seeded;
    use proptest::prelude::*;
    use rand::Rng as _;

    fn conv_problem() -> (Ellipsoid, SvdOperator, TruthSpec) {
        let d = IndexDomain::Trig { dim: 1 };
        let e = Ellipsoid::polynomial(d, 2.0, 1.0).unwrap();
        let op = SvdOperator::convolution(d, 1.0, 1.0).unwrap();
        let theta = power_law_truth(&e, 12, 2.6, 0.5).unwrap();
        (e.clone(), op, TruthSpec::new(theta, e).unwrap())
    }

    #[test]
    fn risk_examples() {
        let (e, op, truth) = conv_problem();
        let support = e.support(4);
        let obs = Observation::WhiteNoise(simulate_white_noise(&truth, &op, &support, 50, 1).unwrap());
        let zero = CoefficientVector::zero(BasisFamily::Trig);
        assert_eq!(empirical_risk(&zero, &obs, &op).unwrap(), 0.0);
        let z = obs.statistics(&op, &support).unwrap();
        let g = CoefficientVector::from_dense(BasisFamily::Trig, &support, &z);
        let expected: f64 = -z.iter().map(|v| v * v).sum::<f64>();
        assert!((empirical_risk(&g, &obs, &op).unwrap() - expected).abs() < 1e-14);
    }

    #[test]
    fn risk_expectation() {
        let (e, op, truth) = conv_problem();
        let support = e.support(3);
        let mut rng = seeded(4);
        let vals: Vec<f64> = support.iter().map(|_| rng.random_range(-0.3..0.3)).collect();
        let g = CoefficientVector::from_dense(BasisFamily::Trig, &support, &vals);
        let reps = 10_000;
        let xs: Vec<f64> = (0..reps)
            .map(|r| {
                let obs = Observation::WhiteNoise(
                    simulate_white_noise(&truth, &op, &support, 40, r).unwrap(),
                );
                empirical_risk(&g, &obs, &op).unwrap()
            })
            .collect();
        let s = summarize(&xs);
        let expected = g.l2_norm().powi(2) - 2.0 * g.dot(truth.theta());
        assert!((s.mean - expected).abs() < 3.0 * s.stderr);
    }

    #[test]
    fn risk_identity_holds() {
        let (e, op, truth) = conv_problem();
        let support = e.support(12);
        let mut rng = seeded(10);
        for r in 0..10 {
            let obs =
                Observation::WhiteNoise(simulate_white_noise(&truth, &op, &support, 100, r).unwrap());
            let mut draw = || {
                let v: Vec<f64> = support.iter().map(|_| rng.random_range(-0.5..0.5)).collect();
                CoefficientVector::from_dense(BasisFamily::Trig, &support, &v)
            };
            let (fh, f0) = (draw(), draw());
            let f = truth.theta();
            let lhs = fh.distance(f).powi(2) - empirical_risk(&fh, &obs, &op).unwrap()
                + empirical_risk(&f0, &obs, &op).unwrap()
                - f0.distance(f).powi(2);
            let mut diff = fh.clone();
            for (j, v) in f0.iter() {
                diff.set(j.clone(), fh.get(j) - v);
            }
            let rhs = 2.0 * centered_process(&diff, &obs, &op, f).unwrap();
            assert!((lhs - rhs).abs() < 1e-10, "{lhs} vs {rhs}");
        }
    }

    #[test]
    fn parseval_matches_grid_quadrature() {
        let support = IndexDomain::Trig { dim: 1 }.indices_up_to(6);
        let mut rng = seeded(6);
        for _ in 0..10 {
            let a: Vec<f64> = support.iter().map(|_| rng.random_range(-1.0..1.0)).collect();
            let b: Vec<f64> = support.iter().map(|_| rng.random_range(-1.0..1.0)).collect();
            let fa = CoefficientVector::from_dense(BasisFamily::Trig, &support, &a);
            let fb = CoefficientVector::from_dense(BasisFamily::Trig, &support, &b);
            let m = 1_000_000;
            let mut acc = 0.0;
            for i in 0..m {
                let x = [i as f64 / m as f64];
                let d: f64 = support
                    .iter()
                    .zip(a.iter().zip(&b))
                    .map(|(j, (u, v))| (u - v) * eval_trig_basis(j, &x).unwrap())
                    .sum();
                acc += d * d;
            }
            let quad = acc / m as f64;
            assert!((quad - fa.distance(&fb).powi(2)).abs() < 1e-6);
        }
    }

    #[test]
    fn noiseless_net_containing_truth_has_zero_mise() {
        let d = IndexDomain::Trig { dim: 1 };
        let e = Ellipsoid::polynomial(d, 1.0, 1.0).unwrap();
        let op = SvdOperator::identity(d).unwrap();
        let lattice = LatticeNet::new(&e, 0.5).unwrap();
        let mut k = vec![0i64; lattice.support().len()];
        k[1] = 1;
        let theta = CoefficientVector::from_dense(
            BasisFamily::Trig,
            lattice.support(),
            &lattice.coefficients(&k),
        );
        let truth = TruthSpec::new(theta, e).unwrap();
        let est = EstimatorConfig::DeltaNet { delta: 0.5 };
        let m = mise_monte_carlo(&truth, &op, ObservationModel::Noiseless, &est, 1, 4, 0).unwrap();
        assert_eq!(m.mean, 0.0);
    }

    #[test]
    fn dense_single_coordinate_mise() {
        let d = IndexDomain::TrigAxis { dim: 1, axis: 0 };
        let e = Ellipsoid::polynomial(d, 1.0, 1e6).unwrap();
        let op = SvdOperator::convolution(d, 1.0, 0.5).unwrap();
        let theta = CoefficientVector::from_entries(BasisFamily::Trig, [(MultiIndex::cos(1), 0.3)])
            .unwrap();
        let truth = TruthSpec::new(theta, e).unwrap();
        // delta just below L keeps only degree 1 (cos and sin) in the fit
        let est = EstimatorConfig::Dense {
            delta: 0.9e6,
            epsilon: 1e-12,
        };
        let n = 100;
        let m = mise_monte_carlo(&truth, &op, ObservationModel::WhiteNoise, &est, n, 4000, 9).unwrap();
        let expected = 2.0 * 4.0 / n as f64;
        assert!((m.mean - expected).abs() < 3.0 * m.stderr, "{m:?} vs {expected}");
    }

    #[test]
    fn replication_failure_names_index() {
        // replications whose first uniform draw is small fail
        let err = replicate(64, 0, |rng| {
            let x: f64 = rng.random();
            if x < 0.1 {
                Err(Error::Numerical(format!("draw {x}")))
            } else {
                Ok(x)
            }
        })
        .unwrap_err();
        let first = (0..64)
            .position(|r| replication_rng(0, r).random::<f64>() < 0.1)
            .unwrap();
        assert!(matches!(err, Error::Replication { replication, .. } if replication == first), "{err}");
        let (_, op, truth) = conv_problem();
        let est = EstimatorConfig::Dense {
            delta: 0.1,
            epsilon: 1e-9,
        };
        assert!(mise_monte_carlo(&truth, &op, ObservationModel::WhiteNoise, &est, 10, 1, 0).is_err());
        let floored = op.with_floor(0.5).unwrap();
        assert!(matches!(
            mise_monte_carlo(&truth, &floored, ObservationModel::WhiteNoise, &est, 10, 3, 0),
            Err(Error::IllPosed { .. })
        ));
    }

    #[test]
    fn theorem_one_examples() {
        assert!(TheoremOneConstants::new(BoundMode::WhiteNoise, 8.0, 0.49).is_err());
        let c = TheoremOneConstants::new(BoundMode::WhiteNoise, 32.0, 0.25).unwrap();
        assert!((c.c1 - 3.0).abs() < 1e-15 && (c.c2 - 16.0).abs() < 1e-15);
        let v = theorem1_bound(&c, 0.0, 0.0, 2.0, 10.0).unwrap();
        assert!((v - c.c2 * 4.0 / 10.0).abs() < 1e-15);
        let a = theorem1_bound(&c, 0.0, 3.0, 2.0, 10.0).unwrap();
        let b = theorem1_bound(&c, 0.0, 3.0, 2.0, 20.0).unwrap();
        assert!((a - 2.0 * b).abs() < 1e-14);
        let dens = BoundMode::Density {
            b_inf: 2.0,
            b_inf_prime: 5.0,
        };
        assert!(TheoremOneConstants::new(dens, 2.0, 0.3).is_err());
        let lo = TheoremOneConstants::xi_lower(dens, 400.0);
        assert!(TheoremOneConstants::new(dens, 400.0, lo).is_ok());
    }

    #[test]
    fn theorem_four_examples() {
        let one = theorem4_bound(2.0, &[0.1], &[3.0], &[5.0], 100.0).unwrap();
        assert!((one - (0.03 + 32.0 / 200.0 * (9.0 * 5.0 + 9.0))).abs() < 1e-12);
        let p = theorem4_bound(1.0, &[0.1, 0.2], &[1.0, 1.0], &[4.0, 4.0], 50.0).unwrap();
        assert!((p - (3.0 * 0.09 + 32.0 / 50.0 * (8.0 + 4.0))).abs() < 1e-12);
        let big = theorem4_bound(1.0, &[0.1, 0.2], &[1.0, 1.0], &[4.0, 4.0], 1e300).unwrap();
        assert!((big - 0.27).abs() < 1e-12);
        assert!(theorem4_bound(0.0, &[0.1], &[1.0], &[1.0], 1.0).is_err());
    }

    #[test]
    fn entropy_integral_closed_form() {
        for b in [0.5, 1.0, 1.5] {
            let c = 3.0;
            let delta = 0.4;
            let got = entropy_integral_power(1.0, 0.0, c, b, delta, 64).unwrap();
            let exact = c.sqrt() * delta.powf(1.0 - b / 2.0) / (1.0 - b / 2.0);
            assert!((got.value / exact - 1.0).abs() < 0.01, "b={b}: {} vs {exact}", got.value);
        }
        let div = entropy_integral_power(1.0, 0.5, 1.0, 1.0, 0.4, 16).unwrap();
        assert!(div.divergent);
        let tiny = entropy_integral_power(1.0, 0.0, 1.0, 1.0, 1e-12, 16).unwrap();
        assert!(tiny.value < 1e-5);
        assert!(entropy_integral_power(1.0, 0.0, 1.0, 1.0, 0.4, 8).is_err());
    }

    #[test]
    fn entropy_integral_modes() {
        let d = IndexDomain::Trig { dim: 1 };
        let e = Ellipsoid::polynomial(d, 2.0, 1.0).unwrap();
        let op = SvdOperator::convolution(d, 0.5, 1.0).unwrap();
        let a = entropy_integral(&op, &e, 0.8, 16, EntropyMode::Analytic).unwrap();
        assert!(!a.divergent && a.value > 0.0);
        let b = entropy_integral(&op, &e, 0.8, 16, EntropyMode::Built).unwrap();
        assert!(!b.divergent && b.value > 0.0);
        let op2 = SvdOperator::convolution(d, 2.0, 1.0).unwrap();
        assert!(entropy_integral(&op2, &e, 0.5, 16, EntropyMode::Analytic).unwrap().divergent);
        assert!(entropy_integral(&op, &e, 1.5, 16, EntropyMode::Analytic).is_err());
    }

    #[test]
    fn targets() {
        assert!((convolution_rate(2.0, 1.0, 1.0) + 4.0 / 7.0).abs() < 1e-15);
        assert!((radon_rate(2.0, 2.0) + 4.0 / 7.0).abs() < 1e-15);
        assert!((additive_rate(&[(1.0, 0.0), (2.0, 1.0)]) + 4.0 / 7.0).abs() < 1e-15);
    }

    #[test]
    fn exact_power_law_slope() {
        let ns: Vec<u64> = vec![256, 1024, 4096, 16384, 65536];
        let mises: Vec<f64> = ns.iter().map(|&n| 3.0 * (n as f64).powf(-4.0 / 7.0)).collect();
        let ses: Vec<f64> = mises.iter().map(|m| m * 0.05).collect();
        let exp = RateExperiment::new(ns.clone(), mises.clone(), ses, 30, -4.0 / 7.0).unwrap();
        let fit = rate_regression(&exp).unwrap();
        assert!((fit.slope + 4.0 / 7.0).abs() < 1e-12);
        let zero_se = RateExperiment::new(ns.clone(), mises, vec![0.0; 5], 30, -4.0 / 7.0).unwrap();
        assert!(!rate_regression(&zero_se).unwrap().weighted);
        let bad = RateExperiment::new(ns, vec![1.0, 0.0, 1.0, 1.0, 1.0], vec![0.1; 5], 30, 0.0).unwrap();
        assert!(rate_regression(&bad).is_err());
        assert!(RateExperiment::new(vec![1, 2], vec![1.0, 1.0], vec![0.1, 0.1], 2, 0.0).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn theorem_one_monotone(delta in 0.0f64..1.0, lc in 0.0f64..50.0, rho in 0.0f64..10.0, n in 1.0f64..1e6, f in 1.0f64..3.0) {
            let c = TheoremOneConstants::white_noise_default();
            let base = theorem1_bound(&c, delta, lc, rho, n).unwrap();
            prop_assert!(theorem1_bound(&c, delta, lc, rho, n * f).unwrap() <= base);
            prop_assert!(theorem1_bound(&c, delta * f, lc, rho, n).unwrap() >= base);
            prop_assert!(theorem1_bound(&c, delta, lc * f, rho, n).unwrap() >= base);
            prop_assert!(theorem1_bound(&c, delta, lc, rho * f, n).unwrap() >= base);
        }
    }
}
