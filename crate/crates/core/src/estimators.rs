//! Empirical-risk minimizers: over a delta-net, over the whole truncated
//! ellipsoid, and over a product of per-coordinate nets for additive models.

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::Serialize;

use crate::basis::{BasisFamily, IndexDomain, MultiIndex};
use crate::error::{invalid, Error, Result};
use crate::models::Observation;
use crate::operators::SvdOperator;
use crate::spaces::{quadratic_risk, truncation_level, CoefficientVector, Ellipsoid, LatticeNet, Net};

/// How the estimate was picked.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    /// Position in an explicit net.
    NetIndex(usize),
    /// Integer coordinates in a lattice net.
    LatticePoint(Vec<i64>),
    /// Multiplier of the ellipsoid constraint in the dense solver.
    Lagrange(f64),
    Components(Vec<Selection>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct EstimateResult {
    pub estimate: CoefficientVector,
    pub risk_value: f64,
    pub selection: Selection,
    /// Number of candidates attaining the minimum (1 when unique).
    pub ties_broken: u64,
}

#[derive(Serialize)]
struct Sidecar<'a> {
    risk_value: f64,
    lambda: Option<f64>,
    ties_broken: u64,
    selection: &'a Selection,
    seconds: f64,
}

impl EstimateResult {
    pub fn lagrange_multiplier(&self) -> Option<f64> {
        match self.selection {
            Selection::Lagrange(l) => Some(l),
            _ => None,
        }
    }

    /// The estimate in the net point line format.
    pub fn to_text(&self, delta: f64, truncation_level: u32) -> String {
        let support: Vec<MultiIndex> = self.estimate.indices().cloned().collect();
        let values = self.estimate.to_dense(&support);
        crate::spaces::format_points(delta, truncation_level, &support, &[values])
    }

    pub fn sidecar_json(&self, seconds: f64) -> String {
        let s = Sidecar {
            risk_value: self.risk_value,
            lambda: self.lagrange_multiplier(),
            ties_broken: self.ties_broken,
            selection: &self.selection,
            seconds,
        };
        serde_json::to_string_pretty(&s).expect("sidecar serializes")
    }
}

/// A finite candidate set over which the white-noise quadratic can be minimized.
pub trait DeltaNet: Sync {
    fn support(&self) -> &[MultiIndex];
    /// Minimizer of `sum theta_j (theta_j - 2 z_j)` with ties resolved to the
    /// lowest serialized position: `(coefficients, risk, selection, ties)`.
    fn minimize_quadratic(&self, z: &[f64]) -> Result<(Vec<f64>, f64, Selection, u64)>;
}

impl DeltaNet for Net {
    fn support(&self) -> &[MultiIndex] {
        Net::support(self)
    }

    fn minimize_quadratic(&self, z: &[f64]) -> Result<(Vec<f64>, f64, Selection, u64)> {
        if self.is_empty() {
            return invalid("cannot minimize over an empty net");
        }
        let pts = self.raw_points();
        let risks: Vec<f64> = pts.par_iter().map(|p| quadratic_risk(p, z)).collect();
        let (best, risk) = risks
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::INFINITY), |(bi, br), (i, r)| if r < br { (i, r) } else { (bi, br) });
        if !risk.is_finite() {
            return Err(Error::Numerical("empirical risk is not finite on the net".into()));
        }
        let ties = risks.iter().filter(|&&r| r == risk).count() as u64;
        Ok((pts[best].clone(), risk, Selection::NetIndex(best), ties))
    }
}

impl DeltaNet for LatticeNet {
    fn support(&self) -> &[MultiIndex] {
        LatticeNet::support(self)
    }

    fn minimize_quadratic(&self, z: &[f64]) -> Result<(Vec<f64>, f64, Selection, u64)> {
        let m = self.minimize(z)?;
        Ok((m.coefficients, m.risk, Selection::LatticePoint(m.point), m.ties))
    }
}

/// Net point minimizing the empirical risk.
pub fn delta_net_minimize(
    net: &dyn DeltaNet,
    obs: &Observation,
    op: &SvdOperator,
) -> Result<EstimateResult> {
    let z = obs.statistics(op, net.support())?;
    minimize_with_stats(net, &z, op.domain().family())
}

fn minimize_with_stats(
    net: &dyn DeltaNet,
    z: &[f64],
    basis: BasisFamily,
) -> Result<EstimateResult> {
    let (coefficients, risk_value, selection, ties_broken) = net.minimize_quadratic(z)?;
    Ok(EstimateResult {
        estimate: CoefficientVector::from_dense(basis, net.support(), &coefficients),
        risk_value,
        selection,
        ties_broken,
    })
}

pub const DENSE_MAX_ITERATIONS: usize = 200;

/// Minimizer of `sum theta_j^2 - 2 theta_j z_j` subject to
/// `sum a_j^2 theta_j^2 <= L^2`, with the multiplier of the constraint.
///
/// The solution is `theta_j = z_j / (1 + lambda a_j^2)`. Bisection keeps a
/// feasible upper end `lambda_hi` and stops once the duality gap
/// `-lambda_hi g(lambda_hi)` is at most `epsilon`, so the returned risk is
/// within `epsilon` of the constrained infimum.
pub fn dense_solve(weights: &[f64], z: &[f64], radius: f64, epsilon: f64) -> Result<(Vec<f64>, f64)> {
    if let Some(i) = z.iter().position(|v| !v.is_finite()) {
        return invalid(format!("statistic at position {i} is not finite"));
    }
    if !(epsilon > 0.0) {
        return invalid(format!("tolerance epsilon={epsilon} must be positive"));
    }
    let r2 = radius * radius;
    let excess = |lambda: f64| -> f64 {
        weights
            .iter()
            .zip(z)
            .map(|(a, zi)| (a * zi / (1.0 + lambda * a * a)).powi(2))
            .sum::<f64>()
            - r2
    };
    if excess(0.0) <= 0.0 {
        return Ok((z.to_vec(), 0.0));
    }
    let spread: f64 = weights.iter().zip(z).map(|(a, zi)| (zi / a).powi(2)).sum();
    let mut hi = spread.sqrt() / radius;
    // guard against rounding in the feasibility of the analytic bracket
    while excess(hi) > 0.0 {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..DENSE_MAX_ITERATIONS {
        let gap = -hi * excess(hi);
        if gap <= epsilon {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if excess(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let theta = weights
        .iter()
        .zip(z)
        .map(|(a, zi)| zi / (1.0 + hi * a * a))
        .collect();
    Ok((theta, hi))
}

/// Dense minimizer over the ellipsoid truncated to degree `m`.
pub fn dense_minimize(
    e: &Ellipsoid,
    obs: &Observation,
    op: &SvdOperator,
    m: u32,
    epsilon: f64,
) -> Result<EstimateResult> {
    let support = e.support(m);
    let z = obs.statistics(op, &support)?;
    dense_minimize_stats(e, &support, &z, epsilon)
}

/// Dense minimizer for statistics already aligned with `support`.
pub fn dense_minimize_stats(
    e: &Ellipsoid,
    support: &[MultiIndex],
    z: &[f64],
    epsilon: f64,
) -> Result<EstimateResult> {
    let weights = e.weights(support);
    let (theta, lambda) = dense_solve(&weights, z, e.radius(), epsilon)?;
    Ok(EstimateResult {
        risk_value: quadratic_risk(&theta, z),
        estimate: CoefficientVector::from_dense(e.domain().family(), support, &theta),
        selection: Selection::Lagrange(lambda),
        ties_broken: 1,
    })
}

/// Truncation level for a dense fit whose tail costs at most `delta^2 / 2`.
pub fn dense_truncation(e: &Ellipsoid, delta: f64) -> Result<u32> {
    truncation_level(e, delta)
}

/// One coordinate function of an additive model.
#[derive(Clone, Debug)]
pub struct AdditiveComponent {
    pub ellipsoid: Ellipsoid,
    pub operator: SvdOperator,
    pub delta: f64,
}

#[derive(Clone, Debug)]
pub struct AdditiveSpec {
    components: Vec<AdditiveComponent>,
    c: f64,
}

impl AdditiveSpec {
    pub fn new(components: Vec<AdditiveComponent>, c: f64) -> Result<Self> {
        if components.len() < 2 {
            return invalid("an additive model needs at least two components");
        }
        if !(c > 0.0) {
            return invalid(format!("geometry constant c={c} must be positive"));
        }
        let mut axes = BTreeSet::new();
        let dim = components[0].ellipsoid.dim();
        for comp in &components {
            match comp.ellipsoid.domain() {
                IndexDomain::TrigAxis { dim: d, axis } if d == dim => {
                    if !axes.insert(axis) {
                        return invalid(format!(
                            "two components act on axis {axis}; their supports overlap"
                        ));
                    }
                }
                other => {
                    return invalid(format!(
                        "additive components need single-axis trigonometric classes of \
                         dimension {dim}, got {other:?}"
                    ))
                }
            }
            if comp.operator.domain() != comp.ellipsoid.domain() {
                return invalid("component operator and class act on different index sets");
            }
            if !(comp.delta > 0.0) {
                return invalid("component deltas must be positive");
            }
        }
        Ok(Self { components, c })
    }

    pub fn components(&self) -> &[AdditiveComponent] {
        &self.components
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn dim(&self) -> usize {
        self.components[0].ellipsoid.dim()
    }

    /// `delta = sum delta_j`.
    pub fn total_delta(&self) -> f64 {
        self.components.iter().map(|c| c.delta).sum()
    }
}

/// Minimizer over the product net. The risk separates over the disjoint
/// component supports, so the joint argmin is the concatenation of the
/// componentwise argmins.
pub fn additive_minimize(
    spec: &AdditiveSpec,
    nets: &[&dyn DeltaNet],
    obs: &Observation,
) -> Result<EstimateResult> {
    if nets.len() != spec.components.len() {
        return invalid(format!(
            "{} nets for {} components",
            nets.len(),
            spec.components.len()
        ));
    }
    let mut seen = BTreeSet::new();
    for net in nets {
        for j in net.support() {
            if !seen.insert(j.clone()) {
                return invalid(format!("index {j} appears in two component nets"));
            }
        }
    }
    let mut estimate = CoefficientVector::zero(BasisFamily::Trig);
    let mut risk = 0.0;
    let mut selections = Vec::new();
    let mut ties: u64 = 1;
    for (comp, net) in spec.components.iter().zip(nets) {
        let part = delta_net_minimize(*net, obs, &comp.operator)?;
        for (j, v) in part.estimate.iter() {
            estimate.set(j.clone(), v);
        }
        risk += part.risk_value;
        selections.push(part.selection);
        ties = ties.saturating_mul(part.ties_broken);
    }
    Ok(EstimateResult {
        estimate,
        risk_value: risk,
        selection: Selection::Components(selections),
        ties_broken: ties,
    })
}
