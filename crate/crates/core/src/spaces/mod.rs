//! Ellipsoidal function classes, coefficient vectors, delta-nets and packing sets.

mod lattice;
mod net;
mod packing;

use std::collections::BTreeMap;
use std::f64::consts::SQRT_2;

use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::basis::{BasisFamily, IndexDomain, MultiIndex};
use crate::error::{invalid, Error, Result};
use crate::rng::Rng;

pub use lattice::{quadratic_risk, LatticeMinimum, LatticeNet};
pub(crate) use net::format_points;
pub use net::{build_delta_net, build_delta_net_with_cap, Net, NetConstruction, DEFAULT_NET_CAP};
pub use packing::{build_packing_set, build_packing_set_with, PackingOptions, PackingSet};

/// Sobolev-type ellipsoid `{theta : sum a_j^2 theta_j^2 <= L^2}` with the
/// polynomial weight law `a_j = scale * max(|j|, 1)^s`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ellipsoid {
    domain: IndexDomain,
    smoothness: f64,
    radius: f64,
    scale: f64,
    c1: f64,
    c2: f64,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    overrides: BTreeMap<MultiIndex, f64>,
}

impl Ellipsoid {
    pub fn polynomial(domain: IndexDomain, smoothness: f64, radius: f64) -> Result<Self> {
        domain.validate()?;
        if !(smoothness > 0.0 && smoothness.is_finite()) {
            return invalid(format!("smoothness s={smoothness} must be positive"));
        }
        if !(radius > 0.0 && radius.is_finite()) {
            return invalid(format!("radius L={radius} must be positive"));
        }
        Ok(Self {
            domain,
            smoothness,
            radius,
            scale: 1.0,
            c1: 1.0,
            c2: 1.0,
            overrides: BTreeMap::new(),
        })
    }

    /// Multiply the weight law by `scale`; the envelope constants follow.
    pub fn with_scale(mut self, scale: f64) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) {
            return invalid(format!("weight scale {scale} must be positive"));
        }
        self.scale = scale;
        self.c1 = scale;
        self.c2 = scale;
        self.check_overrides()?;
        Ok(self)
    }

    /// Widen the envelope `c1 max(|j|,1)^s <= a_j <= c2 max(|j|,1)^s`.
    pub fn with_envelope(mut self, c1: f64, c2: f64) -> Result<Self> {
        if !(c1 > 0.0 && c1 <= self.scale && self.scale <= c2) {
            return invalid(format!(
                "envelope [{c1}, {c2}] must be positive and contain the law scale {}",
                self.scale
            ));
        }
        self.c1 = c1;
        self.c2 = c2;
        self.check_overrides()?;
        Ok(self)
    }

    pub fn with_overrides(mut self, overrides: BTreeMap<MultiIndex, f64>) -> Result<Self> {
        self.overrides = overrides;
        self.check_overrides()?;
        Ok(self)
    }

    fn check_overrides(&self) -> Result<()> {
        for (j, &a) in &self.overrides {
            if !self.domain.contains(j) {
                return invalid(format!("weight override {j} outside the class index set"));
            }
            let base = j.law_degree().powf(self.smoothness);
            let tol = 1e-12 * a.abs().max(1.0);
            if !(a > 0.0) || a < self.c1 * base - tol || a > self.c2 * base + tol {
                return invalid(format!(
                    "weight a_{j}={a} outside the envelope [{}, {}]",
                    self.c1 * base,
                    self.c2 * base
                ));
            }
        }
        Ok(())
    }

    pub fn domain(&self) -> IndexDomain {
        self.domain
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn smoothness(&self) -> f64 {
        self.smoothness
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    /// Lower envelope constant `C_1`.
    pub fn c1(&self) -> f64 {
        self.c1
    }

    pub fn c2(&self) -> f64 {
        self.c2
    }

    pub fn weight(&self, j: &MultiIndex) -> f64 {
        self.overrides
            .get(j)
            .copied()
            .unwrap_or_else(|| self.scale * j.law_degree().powf(self.smoothness))
    }

    pub fn weights(&self, support: &[MultiIndex]) -> Vec<f64> {
        support.iter().map(|j| self.weight(j)).collect()
    }

    /// `sqrt(sum a_j^2 theta_j^2)`.
    pub fn weighted_norm(&self, theta: &CoefficientVector) -> f64 {
        theta
            .iter()
            .map(|(j, v)| (self.weight(j) * v).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    pub fn contains(&self, theta: &CoefficientVector, tol: f64) -> bool {
        theta.iter().all(|(j, _)| self.domain.contains(j))
            && self.weighted_norm(theta).powi(2) <= self.radius.powi(2) + tol
    }

    /// `B_2 = sup ||g||_2` over the class.
    pub fn l2_bound(&self) -> f64 {
        let min_override = self.overrides.values().copied().fold(f64::INFINITY, f64::min);
        self.radius / self.c1.min(min_override)
    }

    /// Indices of degree at most `m` in serialized order.
    pub fn support(&self, m: u32) -> Vec<MultiIndex> {
        self.domain.indices_up_to(m)
    }

    /// Draw `theta` uniformly from the ellipsoid truncated to `support`:
    /// a uniform point of the Euclidean unit ball, mapped by `x -> L x / a`.
    pub fn sample_uniform(&self, support: &[MultiIndex], rng: &mut Rng) -> Vec<f64> {
        let dim = support.len();
        if dim == 0 {
            return Vec::new();
        }
        let g: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        let u: f64 = rng.random();
        let r = u.powf(1.0 / dim as f64) * self.radius / norm;
        g.iter()
            .zip(support)
            .map(|(gi, j)| gi * r / self.weight(j))
            .collect()
    }
}

/// Truncation level `M = floor((C_1^{-1} sqrt2 L / delta)^{1/s})`.
///
/// Every theta in the ellipsoid then has `sum_{|j| > M} theta_j^2 <= delta^2 / 2`.
pub fn truncation_level(e: &Ellipsoid, delta: f64) -> Result<u32> {
    if !(delta > 0.0 && delta.is_finite()) {
        return invalid(format!("delta={delta} must be positive"));
    }
    if delta >= e.radius {
        return invalid(format!(
            "delta={delta} is not below L={}: the net degenerates to a single point",
            e.radius
        ));
    }
    let base = SQRT_2 * e.radius / (e.c1 * delta);
    let m = base.powf(1.0 / e.smoothness);
    // guard exact powers such as 1.0^(1/2) landing a hair below the integer
    let m = (m * (1.0 + 1e-12)).floor();
    if m > u32::MAX as f64 / 2.0 {
        return Err(Error::ResourceCap {
            what: "truncation level",
            required: m,
            cap: u32::MAX as usize / 2,
            hint: format!("delta={delta} is too small to represent"),
        });
    }
    Ok(m as u32)
}

/// A finitely supported coefficient vector over one basis family.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoefficientVector {
    entries: BTreeMap<MultiIndex, f64>,
    basis: BasisFamily,
}

impl CoefficientVector {
    pub fn zero(basis: BasisFamily) -> Self {
        Self {
            entries: BTreeMap::new(),
            basis,
        }
    }

    pub fn from_entries(
        basis: BasisFamily,
        entries: impl IntoIterator<Item = (MultiIndex, f64)>,
    ) -> Result<Self> {
        let mut out = Self::zero(basis);
        for (j, v) in entries {
            if !v.is_finite() {
                return invalid(format!("coefficient {j} is not finite"));
            }
            out.entries.insert(j, v);
        }
        Ok(out)
    }

    /// Build from values aligned with `support`; zeros are kept.
    pub fn from_dense(basis: BasisFamily, support: &[MultiIndex], values: &[f64]) -> Self {
        debug_assert_eq!(support.len(), values.len());
        Self {
            entries: support.iter().cloned().zip(values.iter().copied()).collect(),
            basis,
        }
    }

    /// Values aligned with `support`, zero where the vector has no entry.
    pub fn to_dense(&self, support: &[MultiIndex]) -> Vec<f64> {
        support.iter().map(|j| self.get(j)).collect()
    }

    pub fn basis(&self) -> BasisFamily {
        self.basis
    }

    pub fn get(&self, j: &MultiIndex) -> f64 {
        self.entries.get(j).copied().unwrap_or(0.0)
    }

    pub fn set(&mut self, j: MultiIndex, v: f64) {
        self.entries.insert(j, v);
    }

    pub fn iter(&self) -> impl Iterator<Item = (&MultiIndex, f64)> {
        self.entries.iter().map(|(j, &v)| (j, v))
    }

    pub fn indices(&self) -> impl Iterator<Item = &MultiIndex> {
        self.entries.keys()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Parseval: `||f||_2 = sqrt(sum theta_j^2)`.
    pub fn l2_norm(&self) -> f64 {
        self.entries.values().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.entries
            .iter()
            .map(|(j, v)| v * other.get(j))
            .sum()
    }

    pub fn distance(&self, other: &Self) -> f64 {
        let mut s = 0.0;
        for (j, v) in &self.entries {
            s += (v - other.get(j)).powi(2);
        }
        for (j, v) in &other.entries {
            if !self.entries.contains_key(j) {
                s += v * v;
            }
        }
        s.sqrt()
    }

    pub fn max_degree(&self) -> u32 {
        self.entries.keys().map(|j| j.degree()).max().unwrap_or(0)
    }
}

/// Least-squares slope of `ln ln #Net` against `ln(1/delta)`.
pub fn net_cardinality_exponent(e: &Ellipsoid, deltas: &[f64]) -> Result<f64> {
    let mut distinct: Vec<f64> = deltas.to_vec();
    distinct.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    distinct.dedup();
    if distinct.len() < 2 {
        return invalid("degenerate regression: fewer than two distinct deltas");
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for &d in &distinct {
        let log_card = LatticeNet::new(e, d)?.log_cardinality()?;
        if log_card > 0.0 && log_card.is_finite() {
            xs.push((1.0 / d).ln());
            ys.push(log_card.ln());
        }
    }
    if xs.len() < 2 {
        return invalid("degenerate regression: fewer than two nets with more than one point");
    }
    Ok(least_squares_slope(&xs, &ys))
}

pub(crate) fn least_squares_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn trig1(s: f64, l: f64) -> Ellipsoid {
        Ellipsoid::polynomial(IndexDomain::Trig { dim: 1 }, s, l).unwrap()
    }

    #[test]
    fn truncation_examples() {
        assert_eq!(truncation_level(&trig1(1.0, 1.0), 0.1).unwrap(), 14);
        // floor(1^{1/2}) needs sqrt2 L / (C1 delta) = 1 with delta < L, so C1 = 2.
        let e = trig1(2.0, 1.0).with_scale(2.0).unwrap();
        assert_eq!(truncation_level(&e, 1.0 / SQRT_2).unwrap(), 1);
        let e = trig1(1.0, 1.0).with_scale(SQRT_2).unwrap();
        assert_eq!(truncation_level(&e, 1.0 - 1e-9).unwrap(), 1);
    }

    #[test]
    fn truncation_rejects_large_delta() {
        assert!(truncation_level(&trig1(2.0, 1.0), SQRT_2).is_err());
        assert!(truncation_level(&trig1(2.0, 1.0), 1.0).is_err());
        assert!(truncation_level(&trig1(2.0, 1.0), 0.0).is_err());
    }

    #[test]
    fn tail_bound_holds_for_uniform_samples() {
        for &(s, l, delta) in &[(1.0, 1.0, 0.2), (2.0, 1.0, 0.1), (1.5, 2.0, 0.3)] {
            let e = trig1(s, l);
            let m = truncation_level(&e, delta).unwrap();
            let wide = e.support(4 * m + 8);
            let mut rng = seeded(7);
            for _ in 0..1000 {
                let theta = e.sample_uniform(&wide, &mut rng);
                let tail: f64 = wide
                    .iter()
                    .zip(&theta)
                    .filter(|(j, _)| j.degree() > m)
                    .map(|(_, v)| v * v)
                    .sum();
                assert!(tail <= delta * delta / 2.0 + 1e-12, "tail {tail}");
            }
        }
    }

    #[test]
    fn uniform_samples_are_inside() {
        let e = Ellipsoid::polynomial(IndexDomain::Disk, 2.0, 1.5).unwrap();
        let support = e.support(6);
        let mut rng = seeded(3);
        for _ in 0..200 {
            let theta = e.sample_uniform(&support, &mut rng);
            let c = CoefficientVector::from_dense(BasisFamily::Disk, &support, &theta);
            assert!(e.contains(&c, 1e-12));
        }
    }

    #[test]
    fn override_outside_envelope_is_rejected() {
        let mut o = BTreeMap::new();
        o.insert(MultiIndex::cos(2), 10.0);
        assert!(trig1(1.0, 1.0).with_overrides(o.clone()).is_err());
        let e = trig1(1.0, 1.0).with_envelope(0.5, 6.0).unwrap();
        assert!(e.with_overrides(o).is_ok());
    }

    #[test]
    fn weights_follow_law() {
        let e = trig1(2.0, 1.0);
        assert_eq!(e.weight(&MultiIndex::cos(0)), 1.0);
        assert_eq!(e.weight(&MultiIndex::sin(3).unwrap()), 9.0);
        assert_eq!(e.l2_bound(), 1.0);
    }

    #[test]
    fn cardinality_exponent_degenerate() {
        let e = trig1(1.0, 1.0);
        assert!(net_cardinality_exponent(&e, &[0.1, 0.1, 0.1]).is_err());
    }

    #[test]
    fn cardinality_exponent_tracks_d_over_s() {
        let deltas = [0.4, 0.2, 0.1, 0.05];
        let s1 = net_cardinality_exponent(&trig1(1.0, 1.0), &deltas).unwrap();
        assert!((s1 - 1.0).abs() < 0.35, "s=1 slope {s1}");
        let s2 = net_cardinality_exponent(&trig1(2.0, 1.0), &deltas).unwrap();
        assert!((s2 - 0.5).abs() < 0.35, "s=2 slope {s2}");
    }
}
