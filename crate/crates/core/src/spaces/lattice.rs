//! Cubic-lattice delta-nets held implicitly as integer points `k` with
//! `sum w_j k_j^2 <= B`, where the coefficient vector is `h k`.

use crate::basis::MultiIndex;
use crate::error::{invalid, Error, Result};

use super::{truncation_level, Ellipsoid};

/// Largest dynamic-programming table (entries) the minimizer will allocate.
const MAX_TABLE: usize = 1 << 28;
const MAX_BUDGET: u64 = 1 << 30;
/// Inner-loop steps allowed for exact counting.
const MAX_COUNT_WORK: f64 = (1u64 << 35) as f64;

#[derive(Clone, Debug)]
pub struct LatticeNet {
    delta: f64,
    truncation_level: u32,
    radius: f64,
    support: Vec<MultiIndex>,
    weights: Vec<f64>,
    units: Vec<u64>,
    unit: f64,
    step: f64,
    budget: u64,
}

/// Minimizer of the white-noise empirical risk over a lattice net.
#[derive(Clone, Debug, PartialEq)]
pub struct LatticeMinimum {
    pub point: Vec<i64>,
    pub coefficients: Vec<f64>,
    pub risk: f64,
    pub ties: u64,
}

impl LatticeNet {
    /// Lattice of step `h = delta / (2 sqrt(N))` over the `N` indices of
    /// degree at most `M`, intersected with the ellipsoid. Rounding toward
    /// zero maps every truncated class member to a lattice point within
    /// `delta / 2`.
    pub fn new(e: &Ellipsoid, delta: f64) -> Result<Self> {
        let m = truncation_level(e, delta)?;
        let support = e.support(m);
        let weights = e.weights(&support);
        let n = support.len().max(1) as f64;
        let step = delta / (2.0 * n.sqrt());
        let unit = weights.iter().map(|a| a * a).fold(f64::INFINITY, f64::min);
        let mut units = Vec::with_capacity(weights.len());
        for (j, a) in support.iter().zip(&weights) {
            let ratio = a * a / unit;
            let w = ratio.round();
            if (ratio - w).abs() > 1e-9 * w.max(1.0) {
                return invalid(format!(
                    "lattice nets need squared weights that are integer multiples of the \
                     smallest one; a_{j}^2 / min a^2 = {ratio}"
                ));
            }
            units.push(w as u64);
        }
        let budget = if support.is_empty() {
            0.0
        } else {
            (e.radius() * e.radius() / (unit * step * step)).floor()
        };
        if budget > MAX_BUDGET as f64 {
            return Err(Error::ResourceCap {
                what: "lattice budget",
                required: budget,
                cap: MAX_BUDGET as usize,
                hint: format!("at delta={delta}, M={m}; increase delta"),
            });
        }
        Ok(Self {
            delta,
            truncation_level: m,
            radius: e.radius(),
            support,
            weights,
            units,
            unit,
            step,
            budget: budget as u64,
        })
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn truncation_level(&self) -> u32 {
        self.truncation_level
    }

    pub fn support(&self) -> &[MultiIndex] {
        &self.support
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn budget(&self) -> u64 {
        self.budget
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    /// Whether coordinate `i` can be nonzero in some net point.
    pub fn is_active(&self, i: usize) -> bool {
        self.units[i] <= self.budget
    }

    /// Indices that are nonzero in at least one net point.
    pub fn active_support(&self) -> impl Iterator<Item = &MultiIndex> {
        self.support
            .iter()
            .enumerate()
            .filter(|(i, _)| self.is_active(*i))
            .map(|(_, j)| j)
    }

    fn max_abs(&self, i: usize) -> i64 {
        isqrt(self.budget / self.units[i]) as i64
    }

    pub fn contains_point(&self, k: &[i64]) -> bool {
        k.len() == self.support.len()
            && k.iter()
                .zip(&self.units)
                .map(|(&ki, &w)| (w as u128) * (ki.unsigned_abs() as u128).pow(2))
                .sum::<u128>()
                <= self.budget as u128
    }

    pub fn coefficients(&self, k: &[i64]) -> Vec<f64> {
        k.iter().map(|&ki| self.step * ki as f64).collect()
    }

    /// Net point within `delta / 2` of any truncated class member
    /// (values aligned with the support).
    pub fn witness(&self, theta: &[f64]) -> Vec<i64> {
        theta
            .iter()
            .enumerate()
            .map(|(i, t)| {
                if self.is_active(i) {
                    (t / self.step).trunc() as i64
                } else {
                    0
                }
            })
            .collect()
    }

    /// Natural log of the number of lattice points, by exact counting over
    /// the integer budget.
    pub fn log_cardinality(&self) -> Result<f64> {
        let b = self.budget as usize;
        let work: f64 = (0..self.support.len())
            .filter(|&i| self.is_active(i))
            .map(|i| self.max_abs(i) as f64 * (b + 1) as f64)
            .sum();
        if work > MAX_COUNT_WORK {
            return Err(Error::ResourceCap {
                what: "lattice counting steps",
                required: work,
                cap: MAX_COUNT_WORK as usize,
                hint: format!(
                    "at delta={}, M={}; increase delta",
                    self.delta, self.truncation_level
                ),
            });
        }
        let mut counts = vec![0.0f64; b + 1];
        counts[0] = 1.0;
        let mut log_scale = 0.0;
        for i in 0..self.support.len() {
            if !self.is_active(i) {
                continue;
            }
            let w = self.units[i] as usize;
            let kmax = self.max_abs(i) as usize;
            let mut next = counts.clone();
            for k in 1..=kmax {
                let off = w * k * k;
                for t in off..=b {
                    next[t] += 2.0 * counts[t - off];
                }
            }
            let peak = next.iter().copied().fold(0.0, f64::max);
            for v in &mut next {
                *v /= peak;
            }
            log_scale += peak.ln();
            counts = next;
        }
        Ok(log_scale + counts.iter().sum::<f64>().ln())
    }

    pub fn cardinality(&self) -> Result<f64> {
        Ok(self.log_cardinality()?.exp())
    }

    /// All lattice points in lexicographic order of `k`.
    pub fn materialize(&self, cap: usize) -> Result<Vec<Vec<i64>>> {
        let count = self.cardinality()?;
        if count > cap as f64 {
            return Err(Error::ResourceCap {
                what: "net points",
                required: count,
                cap,
                hint: format!(
                    "increase delta above {} or lower the truncation level M={}",
                    self.delta, self.truncation_level
                ),
            });
        }
        let mut out = Vec::with_capacity(count.round() as usize);
        let mut current = vec![0i64; self.support.len()];
        self.enumerate(0, self.budget, &mut current, &mut out);
        Ok(out)
    }

    fn enumerate(&self, i: usize, left: u64, current: &mut Vec<i64>, out: &mut Vec<Vec<i64>>) {
        if i == self.support.len() {
            out.push(current.clone());
            return;
        }
        let w = self.units[i];
        let kmax = isqrt(left / w) as i64;
        for k in -kmax..=kmax {
            current[i] = k;
            let used = w * (k.unsigned_abs()).pow(2);
            self.enumerate(i + 1, left - used, current, out);
        }
        current[i] = 0;
    }

    /// Exact minimizer of `sum theta_j (theta_j - 2 z_j)` over the net, the
    /// lexicographically smallest `k` among minimizers, and the number of
    /// minimizing points.
    pub fn minimize(&self, z: &[f64]) -> Result<LatticeMinimum> {
        if z.len() != self.support.len() {
            return invalid(format!(
                "statistics cover {} indices, net support has {}",
                z.len(),
                self.support.len()
            ));
        }
        if let Some(bad) = z.iter().position(|v| !v.is_finite()) {
            return invalid(format!("statistic z_{} is not finite", self.support[bad]));
        }
        let h = self.step;
        let cost = |k: i64, zi: f64| {
            let t = h * k as f64;
            t * (t - 2.0 * zi)
        };
        // Candidate values per coordinate: anything outside [min(0, floor), max(0, ceil)]
        // is dominated by a candidate with smaller |k| and lower cost.
        let ranges: Vec<(i64, i64)> = (0..z.len())
            .map(|i| {
                if !self.is_active(i) {
                    return (0, 0);
                }
                let kmax = self.max_abs(i);
                let r = z[i] / h;
                let lo = (r.floor() as i64).clamp(-kmax, kmax).min(0);
                let hi = (r.ceil() as i64).clamp(-kmax, kmax).max(0);
                (lo, hi)
            })
            .collect();

        // Unconstrained coordinatewise optimum, if unique and feasible.
        let mut greedy = Vec::with_capacity(z.len());
        let mut unique = true;
        for (i, &(lo, hi)) in ranges.iter().enumerate() {
            let mut best = lo;
            let mut best_cost = cost(lo, z[i]);
            let mut count = 1;
            for k in lo + 1..=hi {
                let c = cost(k, z[i]);
                if c < best_cost {
                    best = k;
                    best_cost = c;
                    count = 1;
                } else if c == best_cost {
                    count += 1;
                }
            }
            unique &= count == 1;
            greedy.push(best);
        }
        if unique && self.contains_point(&greedy) {
            return Ok(self.finish(greedy, z, 1));
        }

        let b = self.budget as usize;
        let active: Vec<usize> = (0..z.len()).filter(|&i| self.is_active(i)).collect();
        let table = active.len().saturating_mul(b + 1);
        if table > MAX_TABLE {
            return Err(Error::ResourceCap {
                what: "minimization table entries",
                required: table as f64,
                cap: MAX_TABLE,
                hint: format!(
                    "at delta={}, M={}; increase delta",
                    self.delta, self.truncation_level
                ),
            });
        }

        // best[t]: minimal suffix cost with weight budget at most t.
        // exact[t], ways[t]: minimal suffix cost with weight exactly t, and how
        // many suffixes reach it.
        let mut choices = vec![0u16; table];
        let mut best = vec![0.0f64; b + 1];
        let mut exact = vec![f64::INFINITY; b + 1];
        exact[0] = 0.0;
        let mut ways = vec![0.0f64; b + 1];
        ways[0] = 1.0;
        let mut best_next = vec![0.0; b + 1];
        let mut exact_next = vec![0.0; b + 1];
        let mut ways_next = vec![0.0; b + 1];
        for (row, &i) in active.iter().enumerate().rev() {
            let (lo, hi) = ranges[i];
            let w = self.units[i] as usize;
            let choice = &mut choices[row * (b + 1)..(row + 1) * (b + 1)];
            best_next.fill(f64::INFINITY);
            exact_next.fill(f64::INFINITY);
            ways_next.fill(0.0);
            for k in lo..=hi {
                let c = cost(k, z[i]);
                let off = w * (k.unsigned_abs() as usize).pow(2);
                let tag = (k - lo) as u16;
                for t in off..=b {
                    let v = c + best[t - off];
                    if v < best_next[t] {
                        best_next[t] = v;
                        choice[t] = tag;
                    }
                    let e = c + exact[t - off];
                    if e < exact_next[t] {
                        exact_next[t] = e;
                        ways_next[t] = ways[t - off];
                    } else if e == exact_next[t] {
                        ways_next[t] += ways[t - off];
                    }
                }
            }
            std::mem::swap(&mut best, &mut best_next);
            std::mem::swap(&mut exact, &mut exact_next);
            std::mem::swap(&mut ways, &mut ways_next);
        }

        let optimum = best[b];
        let ties: f64 = exact
            .iter()
            .zip(&ways)
            .filter(|(e, _)| **e == optimum)
            .map(|(_, w)| *w)
            .sum();

        let mut point = vec![0i64; z.len()];
        let mut left = b;
        for (row, &i) in active.iter().enumerate() {
            let k = ranges[i].0 + choices[row * (b + 1) + left] as i64;
            point[i] = k;
            left -= self.units[i] as usize * (k.unsigned_abs() as usize).pow(2);
        }
        Ok(self.finish(point, z, ties.max(1.0) as u64))
    }

    fn finish(&self, point: Vec<i64>, z: &[f64], ties: u64) -> LatticeMinimum {
        let coefficients = self.coefficients(&point);
        let risk = quadratic_risk(&coefficients, z);
        LatticeMinimum {
            point,
            coefficients,
            risk,
            ties,
        }
    }

    /// Largest `sum a_j^2 theta_j^2` any net point can reach, as a check on
    /// the membership guarantee.
    pub fn max_weighted_norm_sq(&self) -> f64 {
        self.unit * self.step * self.step * self.budget as f64
    }
}

/// White-noise empirical risk `sum theta_j (theta_j - 2 z_j)`, accumulated from
/// the last coordinate to the first so every caller gets identical rounding.
pub fn quadratic_risk(theta: &[f64], z: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (t, zi) in theta.iter().zip(z).rev() {
        acc = t * (t - 2.0 * zi) + acc;
    }
    acc
}

fn isqrt(x: u64) -> u64 {
    let mut r = (x as f64).sqrt() as u64;
    while r * r > x {
        r -= 1;
    }
    while (r + 1) * (r + 1) <= x {
        r += 1;
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::IndexDomain;
    use crate::rng::seeded;
    use proptest::prelude::*;
    use rand::Rng as _;

    fn trig1(s: f64, l: f64) -> Ellipsoid {
        Ellipsoid::polynomial(IndexDomain::Trig { dim: 1 }, s, l).unwrap()
    }

    #[test]
    fn isqrt_is_exact() {
        for x in 0..5000u64 {
            let r = isqrt(x);
            assert!(r * r <= x && (r + 1) * (r + 1) > x);
        }
    }

    #[test]
    fn counting_matches_enumeration() {
        for &(s, l, d) in &[(1.0, 1.0, 0.5), (2.0, 1.0, 0.3), (1.0, 2.0, 1.5), (2.0, 1.0, 0.5)] {
            let net = LatticeNet::new(&trig1(s, l), d).unwrap();
            let pts = net.materialize(1 << 20).unwrap();
            assert!((net.log_cardinality().unwrap() - (pts.len() as f64).ln()).abs() < 1e-9);
            assert!(pts.iter().all(|k| net.contains_point(k)));
        }
    }

    #[test]
    fn points_stay_inside_ellipsoid() {
        let e = trig1(2.0, 1.0);
        let net = LatticeNet::new(&e, 0.3).unwrap();
        assert!(net.max_weighted_norm_sq() <= 1.0 + 1e-12);
        for k in net.materialize(1 << 20).unwrap() {
            let th = net.coefficients(&k);
            let s: f64 = th.iter().zip(net.weights()).map(|(t, a)| (a * t).powi(2)).sum();
            assert!(s <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn witness_covers_class() {
        let e = trig1(1.0, 1.0);
        let delta = 0.2;
        let net = LatticeNet::new(&e, delta).unwrap();
        let wide = e.support(60);
        let mut rng = seeded(11);
        for _ in 0..1000 {
            let theta = e.sample_uniform(&wide, &mut rng);
            let truncated: Vec<f64> = net
                .support()
                .iter()
                .map(|j| theta[wide.iter().position(|w| w == j).unwrap()])
                .collect();
            let k = net.witness(&truncated);
            assert!(net.contains_point(&k));
            let phi = net.coefficients(&k);
            let near: f64 = phi.iter().zip(&truncated).map(|(p, t)| (p - t).powi(2)).sum();
            let tail: f64 = wide
                .iter()
                .zip(&theta)
                .filter(|(j, _)| j.degree() > net.truncation_level())
                .map(|(_, t)| t * t)
                .sum();
            assert!((near + tail).sqrt() <= delta);
        }
    }

    #[test]
    fn coarse_net_holds_zero() {
        let net = LatticeNet::new(&trig1(1.0, 1.0), 0.999).unwrap();
        let pts = net.materialize(1 << 20).unwrap();
        assert!(pts.iter().any(|k| k.iter().all(|&v| v == 0)));
    }

    #[test]
    fn non_commensurate_weights_are_rejected() {
        let e = trig1(0.75, 1.0);
        assert!(LatticeNet::new(&e, 0.2).is_err());
    }

    fn brute_force(net: &LatticeNet, z: &[f64]) -> (Vec<i64>, f64, u64) {
        brute_force_over(net, &net.materialize(1 << 22).unwrap(), z)
    }

    fn brute_force_over(net: &LatticeNet, pts: &[Vec<i64>], z: &[f64]) -> (Vec<i64>, f64, u64) {
        let mut best: Option<(Vec<i64>, f64)> = None;
        let mut ties = 0;
        for k in pts.iter().cloned() {
            let r = quadratic_risk(&net.coefficients(&k), z);
            match &best {
                Some((_, b)) if r > *b => {}
                Some((_, b)) if r == *b => ties += 1,
                _ => {
                    best = Some((k, r));
                    ties = 1;
                }
            }
        }
        let (k, r) = best.unwrap();
        (k, r, ties)
    }

    #[test]
    fn minimize_matches_brute_force() {
        let e = trig1(1.0, 1.0);
        let net = LatticeNet::new(&e, 0.6).unwrap();
        let pts = net.materialize(1 << 22).unwrap();
        let mut rng = seeded(5);
        for _ in 0..200 {
            let scale: f64 = rng.random_range(0.05..2.0);
            let z: Vec<f64> = (0..net.support().len())
                .map(|_| scale * (rng.random::<f64>() - 0.5))
                .collect();
            let got = net.minimize(&z).unwrap();
            let (k, r, ties) = brute_force_over(&net, &pts, &z);
            assert_eq!(got.risk, r);
            assert_eq!(got.point, k);
            assert_eq!(got.ties, ties);
        }
    }

    #[test]
    fn minimize_counts_ties() {
        let e = trig1(1.0, 1.0);
        let net = LatticeNet::new(&e, 0.45).unwrap();
        // z on half-steps: each coordinate has two equally good roundings
        let z: Vec<f64> = vec![0.5 * net.step(); net.support().len()];
        let got = net.minimize(&z).unwrap();
        let (k, r, ties) = brute_force(&net, &z);
        assert_eq!(got.risk, r);
        assert_eq!(got.point, k);
        assert_eq!(got.ties, ties);
        assert!(ties > 1);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn minimize_is_exact(seed in 0u64..1_000_000, s in prop::sample::select(vec![1.0, 2.0]), delta in 0.55f64..0.9) {
            let e = trig1(s, 1.0);
            let net = LatticeNet::new(&e, delta).unwrap();
            let mut rng = seeded(seed);
            let z: Vec<f64> = (0..net.support().len()).map(|_| 2.0 * rng.random::<f64>() - 1.0).collect();
            let got = net.minimize(&z).unwrap();
            let (k, r, _) = brute_force(&net, &z);
            prop_assert_eq!(got.risk, r);
            prop_assert_eq!(got.point, k);
        }

        #[test]
        fn finer_nets_are_larger(s in prop::sample::select(vec![1.0, 2.0]), d in 0.3f64..0.9, f in 0.5f64..0.95) {
            let e = trig1(s, 1.0);
            let coarse = LatticeNet::new(&e, d).unwrap();
            let fine = LatticeNet::new(&e, d * f).unwrap();
            prop_assert!(fine.truncation_level() >= coarse.truncation_level());
            prop_assert!(fine.log_cardinality().unwrap() >= coarse.log_cardinality().unwrap() - 1e-9);
        }
    }
}
