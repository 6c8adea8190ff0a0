//! Forward operators held diagonally in their singular systems, the
//! inverse-adjoint `Q`, and the operator norms built from them.

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_1_SQRT_2, PI};

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::basis::{
    eval_disk_basis, eval_radon_image_basis, eval_trig_basis, BasisFamily, DiskPoint, IndexDomain,
    MultiIndex,
};
use crate::error::{invalid, Error, Result};
use crate::quadrature::GaussLegendre;
use crate::rng::{seeded, Rng};
use crate::spaces::{CoefficientVector, LatticeNet, Net, PackingSet};

pub const DEFAULT_FLOOR: f64 = 1e-14;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OperatorKind {
    Convolution,
    Radon2d,
    Tomography2d,
}

/// Fourier coefficients of a periodic convolution kernel, one per basis index.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ConvolutionFilter {
    pub coefficients: BTreeMap<MultiIndex, f64>,
}

/// A point of the observation space: the cube `[0,1]^d` for convolution, or a
/// line `(u, phi)` for the Radon operators.
#[derive(Clone, Debug, PartialEq)]
pub enum YPoint {
    Cube(Vec<f64>),
    Line { u: f64, phi: f64 },
}

/// `A phi_j = b_j psi_j` with `C2' max(|j|,1)^{-q} <= b_j <= C3' max(|j|,1)^{-q}`.
#[derive(Clone, Debug, PartialEq)]
pub struct SvdOperator {
    kind: OperatorKind,
    domain: IndexDomain,
    q: f64,
    scale: f64,
    c_lower: f64,
    c_upper: f64,
    overrides: BTreeMap<MultiIndex, f64>,
    floor: f64,
}

impl SvdOperator {
    /// Periodic convolution with `b_j = scale * max(|j|,1)^{-q}`.
    pub fn convolution(domain: IndexDomain, q: f64, scale: f64) -> Result<Self> {
        domain.validate()?;
        if domain.family() != BasisFamily::Trig {
            return invalid("convolution operators act on the trigonometric basis");
        }
        if !(q >= 0.0 && q.is_finite()) {
            return invalid(format!("ill-posedness q={q} must be non-negative"));
        }
        if !(scale > 0.0 && scale.is_finite()) {
            return invalid(format!("singular value scale {scale} must be positive"));
        }
        Ok(Self {
            kind: OperatorKind::Convolution,
            domain,
            q,
            scale,
            c_lower: scale,
            c_upper: scale,
            overrides: BTreeMap::new(),
            floor: DEFAULT_FLOOR,
        })
    }

    pub fn identity(domain: IndexDomain) -> Result<Self> {
        Self::convolution(domain, 0.0, 1.0)
    }

    /// Convolution whose singular values are the filter's Fourier
    /// coefficients, checked against the envelope `[c_lower, c_upper] max(|j|,1)^{-q}`.
    pub fn from_filter(
        domain: IndexDomain,
        filter: &ConvolutionFilter,
        q: f64,
        c_lower: f64,
        c_upper: f64,
    ) -> Result<Self> {
        let mut op = Self::convolution(domain, q, c_lower)?;
        op.c_upper = c_upper;
        op.with_overrides(filter.coefficients.clone())
    }

    /// Planar Radon transform on the disk, `b_jk = pi^{-1} (j+k+1)^{-1/2}`.
    pub fn radon2d() -> Self {
        Self {
            kind: OperatorKind::Radon2d,
            domain: IndexDomain::Disk,
            q: 0.5,
            scale: 1.0 / PI,
            c_lower: FRAC_1_SQRT_2 / PI,
            c_upper: 1.0 / PI,
            overrides: BTreeMap::new(),
            floor: DEFAULT_FLOOR,
        }
    }

    /// Density of observed lines for a density on the disk: the chord mean,
    /// `b_jk = (j+k+1)^{-1/2}`.
    pub fn tomography2d() -> Self {
        Self {
            kind: OperatorKind::Tomography2d,
            scale: 1.0,
            c_lower: FRAC_1_SQRT_2,
            c_upper: 1.0,
            ..Self::radon2d()
        }
    }

    /// Widen the decay envelope used to validate explicit singular values.
    pub fn with_envelope(mut self, c_lower: f64, c_upper: f64) -> Result<Self> {
        if !(c_lower > 0.0 && c_lower <= c_upper) {
            return invalid(format!("decay envelope [{c_lower}, {c_upper}] is empty"));
        }
        self.c_lower = c_lower;
        self.c_upper = c_upper;
        Ok(self)
    }

    pub fn with_overrides(mut self, overrides: BTreeMap<MultiIndex, f64>) -> Result<Self> {
        for (j, &b) in &overrides {
            if !self.domain.contains(j) {
                return Err(Error::UnsupportedIndex(j.clone()));
            }
            let law = self.law(j);
            let tol = 1e-12 * b.abs().max(1e-300);
            if !(b > 0.0)
                || b < self.c_lower * law / self.scale - tol
                || b > self.c_upper * law / self.scale + tol
            {
                return invalid(format!(
                    "singular value b_{j}={b} outside the envelope [{}, {}]",
                    self.c_lower * law / self.scale,
                    self.c_upper * law / self.scale
                ));
            }
        }
        self.overrides = overrides;
        Ok(self)
    }

    pub fn with_floor(mut self, floor: f64) -> Result<Self> {
        if !(floor >= 0.0) {
            return invalid(format!("singular value floor {floor} must be non-negative"));
        }
        self.floor = floor;
        Ok(self)
    }

    pub fn kind(&self) -> OperatorKind {
        self.kind
    }

    pub fn domain(&self) -> IndexDomain {
        self.domain
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn floor(&self) -> f64 {
        self.floor
    }

    fn law(&self, j: &MultiIndex) -> f64 {
        match self.kind {
            OperatorKind::Convolution => self.scale * j.law_degree().powf(-self.q),
            _ => self.scale / ((j.degree() + 1) as f64).sqrt(),
        }
    }

    pub fn singular_value(&self, j: &MultiIndex) -> Result<f64> {
        if !self.domain.contains(j) {
            return Err(Error::UnsupportedIndex(j.clone()));
        }
        Ok(self.overrides.get(j).copied().unwrap_or_else(|| self.law(j)))
    }

    /// `b_j^{-1}`, refusing singular values below the floor.
    pub fn inverse_singular_value(&self, j: &MultiIndex) -> Result<f64> {
        let b = self.singular_value(j)?;
        if b < self.floor {
            return Err(Error::IllPosed {
                index: j.clone(),
                value: b,
                floor: self.floor,
            });
        }
        Ok(1.0 / b)
    }

    pub fn singular_values(&self, support: &[MultiIndex]) -> Result<Vec<f64>> {
        support.iter().map(|j| self.singular_value(j)).collect()
    }

    pub fn inverse_singular_values(&self, support: &[MultiIndex]) -> Result<Vec<f64>> {
        support.iter().map(|j| self.inverse_singular_value(j)).collect()
    }

    fn check_family(&self, g: &CoefficientVector) -> Result<()> {
        if g.basis() != self.domain.family() {
            return invalid("coefficient vector and operator use different bases");
        }
        Ok(())
    }

    /// Image-side coefficients `b_j theta_j`.
    pub fn apply_a(&self, g: &CoefficientVector) -> Result<CoefficientVector> {
        self.check_family(g)?;
        let entries = g
            .iter()
            .map(|(j, v)| Ok((j.clone(), self.singular_value(j)? * v)))
            .collect::<Result<Vec<_>>>()?;
        CoefficientVector::from_entries(g.basis(), entries)
    }

    /// Source-side coefficients `h_j / b_j` of `A^{-1} h`.
    pub fn apply_a_inverse(&self, h: &CoefficientVector) -> Result<CoefficientVector> {
        self.apply_q(h)
    }

    /// Image-side coefficients `theta_j / b_j` of `Q g`. The diagonal form of
    /// `Q = (A^{-1})^*` coincides with that of `A^{-1}`.
    pub fn apply_q(&self, g: &CoefficientVector) -> Result<CoefficientVector> {
        self.check_family(g)?;
        let entries = g
            .iter()
            .map(|(j, v)| Ok((j.clone(), self.inverse_singular_value(j)? * v)))
            .collect::<Result<Vec<_>>>()?;
        CoefficientVector::from_entries(g.basis(), entries)
    }

    pub fn eval_image_basis(&self, j: &MultiIndex, y: &YPoint) -> Result<f64> {
        match (self.domain.family(), y) {
            (BasisFamily::Trig, YPoint::Cube(x)) => eval_trig_basis(j, x),
            (BasisFamily::Disk, YPoint::Line { u, phi }) => eval_radon_image_basis(j, *u, *phi),
            _ => invalid("observation point does not match the operator's image space"),
        }
    }

    /// `(Q g)(y) = sum_j b_j^{-1} theta_j psi_j(y)`.
    pub fn eval_q_pointwise(&self, g: &CoefficientVector, y: &YPoint) -> Result<f64> {
        self.check_family(g)?;
        let mut acc = 0.0;
        for (j, v) in g.iter() {
            if v != 0.0 {
                acc += self.inverse_singular_value(j)? * v * self.eval_image_basis(j, y)?;
            }
        }
        Ok(acc)
    }

    /// `(A g)(y)`, without any density offset.
    pub fn eval_a_pointwise(&self, g: &CoefficientVector, y: &YPoint) -> Result<f64> {
        self.check_family(g)?;
        let mut acc = 0.0;
        for (j, v) in g.iter() {
            if v != 0.0 {
                acc += self.singular_value(j)? * v * self.eval_image_basis(j, y)?;
            }
        }
        Ok(acc)
    }

    /// Known constant part of the observation density that is not carried by
    /// the coefficient vector: the uniform density `1/pi` for tomography,
    /// where the disk basis has no constant function.
    pub fn density_offset(&self) -> f64 {
        match self.kind {
            OperatorKind::Tomography2d => 1.0 / PI,
            _ => 0.0,
        }
    }

    /// Total mass of the observation measure `nu`.
    pub fn image_measure_mass(&self) -> f64 {
        match self.domain.family() {
            BasisFamily::Trig => 1.0,
            BasisFamily::Disk => PI,
        }
    }

    /// Dimension of the observation space.
    pub fn image_dim(&self) -> usize {
        self.domain.dim()
    }

    /// A draw from `nu` normalized to a probability measure.
    pub fn sample_image_uniform(&self, rng: &mut Rng) -> YPoint {
        match self.domain.family() {
            BasisFamily::Trig => YPoint::Cube((0..self.domain.dim()).map(|_| rng.random()).collect()),
            BasisFamily::Disk => {
                // |x| for x the abscissa of a uniform point of the disk has
                // density proportional to sqrt(1-u^2) on [0,1].
                let u = loop {
                    let x: f64 = rng.random_range(-1.0..1.0);
                    let y: f64 = rng.random_range(-1.0..1.0);
                    if x * x + y * y <= 1.0 {
                        break x.abs();
                    }
                };
                let phi = rng.random_range(0.0..2.0 * PI);
                YPoint::Line { u, phi }
            }
        }
    }

    /// Roughly `count` points spread over the observation space.
    pub fn image_check_grid(&self, count: usize) -> Vec<YPoint> {
        match self.domain.family() {
            BasisFamily::Trig => {
                let d = self.domain.dim();
                let per_axis = ((count as f64).powf(1.0 / d as f64).round() as usize).max(2);
                let mut out = Vec::new();
                let mut idx = vec![0usize; d];
                loop {
                    out.push(YPoint::Cube(
                        idx.iter().map(|&i| i as f64 / per_axis as f64).collect(),
                    ));
                    let mut axis = 0;
                    loop {
                        if axis == d {
                            return out;
                        }
                        idx[axis] += 1;
                        if idx[axis] < per_axis {
                            break;
                        }
                        idx[axis] = 0;
                        axis += 1;
                    }
                }
            }
            BasisFamily::Disk => {
                let side = ((count as f64).sqrt().round() as usize).max(2);
                let mut out = Vec::with_capacity(side * side);
                for i in 0..side {
                    let u = i as f64 / (side - 1) as f64;
                    for k in 0..side {
                        out.push(YPoint::Line {
                            u,
                            phi: 2.0 * PI * k as f64 / side as f64,
                        });
                    }
                }
                out
            }
        }
    }
}

/// Value of `rho(Q, net)` with its certificate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RhoEstimate {
    /// Exact maximum when `exhaustive`, otherwise the largest sampled ratio.
    pub lower: f64,
    /// `max b_j^{-1}` over coordinates in which the net varies.
    pub upper: f64,
    pub exhaustive: bool,
}

impl RhoEstimate {
    pub fn value(&self) -> f64 {
        if self.exhaustive {
            self.lower
        } else {
            self.upper
        }
    }
}

const EXHAUSTIVE_PAIRS_LIMIT: usize = 2000;
const SAMPLED_PAIRS: usize = 100_000;

/// `max ||Q(phi - phi')|| / ||phi - phi'||` over distinct net points.
pub fn rho_q(op: &SvdOperator, net: &Net) -> Result<RhoEstimate> {
    if net.len() < 2 {
        return invalid("rho(Q, net) needs at least two net points");
    }
    let inv = op.inverse_singular_values(net.support())?;
    let pts = net.raw_points();
    let ratio = |a: &[f64], b: &[f64]| {
        let mut num = 0.0;
        let mut den = 0.0;
        for ((x, y), w) in a.iter().zip(b).zip(&inv) {
            let d = x - y;
            num += (w * d).powi(2);
            den += d * d;
        }
        (den > 0.0).then(|| (num / den).sqrt())
    };
    let varies: Vec<bool> = (0..inv.len())
        .map(|c| pts.iter().any(|p| p[c] != pts[0][c]))
        .collect();
    let upper = inv
        .iter()
        .zip(&varies)
        .filter(|(_, v)| **v)
        .map(|(w, _)| *w)
        .fold(0.0, f64::max);
    if pts.len() <= EXHAUSTIVE_PAIRS_LIMIT {
        let mut best: f64 = 0.0;
        for i in 0..pts.len() {
            for k in i + 1..pts.len() {
                if let Some(r) = ratio(&pts[i], &pts[k]) {
                    best = best.max(r);
                }
            }
        }
        return Ok(RhoEstimate {
            lower: best,
            upper,
            exhaustive: true,
        });
    }
    let mut rng = seeded(0x0a11_ce5);
    let mut best: f64 = 0.0;
    for _ in 0..SAMPLED_PAIRS {
        let i = rng.random_range(0..pts.len());
        let k = rng.random_range(0..pts.len());
        if let Some(r) = ratio(&pts[i], &pts[k]) {
            best = best.max(r);
        }
    }
    Ok(RhoEstimate {
        lower: best,
        upper,
        exhaustive: false,
    })
}

/// Exact `rho(Q, net)` for a lattice net: the pair `0, h e_j` attains
/// `b_j^{-1}` for every coordinate that can move, and no pair exceeds the
/// largest such value.
pub fn rho_q_lattice(op: &SvdOperator, net: &LatticeNet) -> Result<f64> {
    let mut best: Option<f64> = None;
    for j in net.active_support() {
        let w = op.inverse_singular_value(j)?;
        best = Some(best.map_or(w, |b: f64| b.max(w)));
    }
    best.ok_or_else(|| Error::InvalidInput("lattice net has a single point".into()))
}

/// `(1/sqrt2) max ||A(f - g)|| / ||f - g||` over distinct packing points.
pub fn rho_k_whitenoise(op: &SvdOperator, packing: &PackingSet) -> Result<f64> {
    if packing.len() < 2 {
        return invalid("rho_K needs at least two packing points");
    }
    let b = op.singular_values(packing.support())?;
    let pts = packing.raw_points();
    let mut best: f64 = 0.0;
    for i in 0..pts.len() {
        for k in i + 1..pts.len() {
            let mut num = 0.0;
            let mut den = 0.0;
            for ((x, y), w) in pts[i].iter().zip(&pts[k]).zip(&b) {
                let d = x - y;
                num += (w * d).powi(2);
                den += d * d;
            }
            if den > 0.0 {
                best = best.max((num / den).sqrt());
            }
        }
    }
    Ok(FRAC_1_SQRT_2 * best)
}

const RADON_NODES: usize = 128;

/// Radon transform of a finite Zernike expansion by Gauss-Legendre
/// quadrature along the chord at signed distance `u` and normal angle `phi`,
/// normalized as `pi^{-1}` times the chord mean so that it reproduces
/// `b_jk psi_jk` with `b_jk = pi^{-1} (j+k+1)^{-1/2}`.
pub fn radon_forward_quadrature(f: &CoefficientVector, u: f64, phi: f64) -> Result<f64> {
    if f.basis() != BasisFamily::Disk {
        return invalid("Radon quadrature needs a disk expansion");
    }
    if !(0.0..1.0).contains(&u) {
        return invalid(format!("u={u} outside [0,1): the chord degenerates"));
    }
    let half = (1.0 - u * u).sqrt();
    let (s, c) = phi.sin_cos();
    let rule = GaussLegendre::new(RADON_NODES);
    let mut total = 0.0;
    for (t, w) in rule.on_interval(-half, half) {
        let x = u * c - t * s;
        let y = u * s + t * c;
        let p = DiskPoint::from_cartesian(x, y)
            .ok_or_else(|| Error::Numerical(format!("chord point ({x}, {y}) left the disk")))?;
        let mut v = 0.0;
        for (j, theta) in f.iter() {
            if theta != 0.0 {
                v += theta * eval_disk_basis(j, p)?;
            }
        }
        total += w * v;
    }
    Ok(total / (2.0 * PI * half))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spaces::{build_delta_net, build_packing_set, Ellipsoid};
    use proptest::prelude::*;

    fn conv1(q: f64) -> SvdOperator {
        SvdOperator::convolution(IndexDomain::Trig { dim: 1 }, q, 1.0).unwrap()
    }

    fn unit(basis: BasisFamily, j: MultiIndex) -> CoefficientVector {
        CoefficientVector::from_entries(basis, [(j, 1.0)]).unwrap()
    }

    #[test]
    fn singular_relation_on_unit_vectors() {
        let op = conv1(1.0);
        let j = MultiIndex::sin(3).unwrap();
        let a = op.apply_a(&unit(BasisFamily::Trig, j.clone())).unwrap();
        assert_eq!(a.get(&j), 1.0 / 3.0);
        let q = op.apply_q(&unit(BasisFamily::Trig, j.clone())).unwrap();
        assert_eq!(q.get(&j), 3.0);
        assert!(op.apply_a(&CoefficientVector::zero(BasisFamily::Trig)).unwrap().is_empty());
    }

    #[test]
    fn radon_singular_values() {
        let op = SvdOperator::radon2d();
        let b = op.singular_value(&MultiIndex::pair(1, 0)).unwrap();
        assert!((b - 1.0 / (PI * 2f64.sqrt())).abs() < 1e-15);
        assert!(op.singular_value(&MultiIndex::pair(0, 0)).is_err());
        let t = SvdOperator::tomography2d();
        assert!((t.singular_value(&MultiIndex::pair(2, 1)).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn floor_triggers_ill_posed_error() {
        let op = conv1(1.0).with_floor(0.2).unwrap();
        let g = unit(BasisFamily::Trig, MultiIndex::cos(6));
        match op.apply_q(&g) {
            Err(Error::IllPosed { index, .. }) => assert_eq!(index, MultiIndex::cos(6)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unsupported_index_is_rejected() {
        let op = conv1(1.0);
        let g = CoefficientVector::from_entries(
            BasisFamily::Trig,
            [(MultiIndex::new(vec![1, 1], 0).unwrap(), 1.0)],
        )
        .unwrap();
        assert!(matches!(op.apply_a(&g), Err(Error::UnsupportedIndex(_))));
    }

    #[test]
    fn q_pointwise_examples() {
        let op = conv1(1.0);
        let y = YPoint::Cube(vec![0.0]);
        let g = unit(BasisFamily::Trig, MultiIndex::cos(1));
        let v = op.eval_q_pointwise(&g, &y).unwrap();
        assert!((v - 2f64.sqrt()).abs() < 1e-15);
        let zero = CoefficientVector::zero(BasisFamily::Trig);
        assert_eq!(op.eval_q_pointwise(&zero, &y).unwrap(), 0.0);
    }

    #[test]
    fn q_sup_norm_bounded_by_triangle_inequality() {
        let op = conv1(1.5);
        let support = IndexDomain::Trig { dim: 1 }.indices_up_to(6);
        let mut rng = seeded(9);
        let vals: Vec<f64> = support.iter().map(|_| rng.random_range(-1.0..1.0)).collect();
        let g = CoefficientVector::from_dense(BasisFamily::Trig, &support, &vals);
        let bound: f64 = support
            .iter()
            .zip(&vals)
            .map(|(j, v)| {
                let sup = if j.degree() == 0 { 1.0 } else { 2f64.sqrt() };
                v.abs() * op.inverse_singular_value(j).unwrap() * sup
            })
            .sum();
        for y in op.image_check_grid(10_000) {
            assert!(op.eval_q_pointwise(&g, &y).unwrap().abs() <= bound + 1e-12);
        }
    }

    #[test]
    fn rho_q_single_coordinate_and_bound() {
        let op = conv1(1.0);
        let support = IndexDomain::Trig { dim: 1 }.indices_up_to(3);
        let j = 4; // position of some coordinate
        let mut a = vec![0.0; support.len()];
        let mut b = vec![0.0; support.len()];
        a[j] = 0.1;
        b[j] = -0.3;
        let net =
            Net::from_points(0.5, 3, BasisFamily::Trig, support.clone(), vec![a, b]).unwrap();
        let r = rho_q(&op, &net).unwrap();
        assert_eq!(r.value(), op.inverse_singular_value(&support[j]).unwrap());

        let e = Ellipsoid::polynomial(IndexDomain::Trig { dim: 1 }, 1.0, 1.0).unwrap();
        let net = build_delta_net(&e, 0.6).unwrap();
        let r = rho_q(&op, &net).unwrap();
        let max_inv = op
            .inverse_singular_values(net.support())
            .unwrap()
            .into_iter()
            .fold(0.0, f64::max);
        assert!(r.value() <= max_inv);
        assert!(r.lower <= r.upper + 1e-15);
    }

    #[test]
    fn rho_q_lattice_matches_explicit() {
        let op = conv1(1.0);
        let e = Ellipsoid::polynomial(IndexDomain::Trig { dim: 1 }, 2.0, 1.0).unwrap();
        for delta in [0.7, 0.6, 0.5] {
            let lattice = LatticeNet::new(&e, delta).unwrap();
            let net = Net::from_lattice(&lattice, BasisFamily::Trig, 1 << 20).unwrap();
            let explicit = rho_q(&op, &net).unwrap();
            let exact = rho_q_lattice(&op, &lattice).unwrap();
            if explicit.exhaustive {
                assert_eq!(explicit.value(), exact);
            } else {
                assert_eq!(explicit.upper, exact);
                assert!(explicit.lower <= exact);
            }
        }
    }

    #[test]
    fn rho_q_rejects_single_point() {
        let net = Net::from_points(0.5, 0, BasisFamily::Trig, vec![MultiIndex::cos(0)], vec![vec![0.0]])
            .unwrap();
        assert!(rho_q(&conv1(1.0), &net).is_err());
    }

    #[test]
    fn rho_k_examples() {
        let e = Ellipsoid::polynomial(IndexDomain::Trig { dim: 1 }, 1.0, 1.0).unwrap();
        let p = build_packing_set(&e, 0.1, &CoefficientVector::zero(BasisFamily::Trig)).unwrap();
        let id = SvdOperator::identity(IndexDomain::Trig { dim: 1 }).unwrap();
        assert!((rho_k_whitenoise(&id, &p).unwrap() - FRAC_1_SQRT_2).abs() < 1e-15);
        let op = conv1(1.0);
        let r = rho_k_whitenoise(&op, &p).unwrap();
        let (m_star, m) = p.shell();
        let lo = FRAC_1_SQRT_2 / m as f64;
        let hi = FRAC_1_SQRT_2 / (m_star.max(1)) as f64;
        assert!(r >= lo - 1e-15 && r <= hi + 1e-15, "{r} not in [{lo}, {hi}]");
    }

    #[test]
    fn radon_quadrature_matches_svd() {
        let op = SvdOperator::radon2d();
        let mut rng = seeded(4);
        for j in IndexDomain::Disk.indices_up_to(4) {
            let f = unit(BasisFamily::Disk, j.clone());
            let b = op.singular_value(&j).unwrap();
            for _ in 0..100 {
                let u: f64 = rng.random_range(0.0..1.0);
                let phi: f64 = rng.random_range(0.0..2.0 * PI);
                let lhs = radon_forward_quadrature(&f, u, phi).unwrap();
                let rhs = b * eval_radon_image_basis(&j, u, phi).unwrap();
                assert!((lhs - rhs).abs() < 1e-9, "{j}: {lhs} vs {rhs}");
            }
        }
    }

    #[test]
    fn radon_quadrature_edge_cases() {
        let zero = CoefficientVector::zero(BasisFamily::Disk);
        assert_eq!(radon_forward_quadrature(&zero, 0.3, 1.0).unwrap(), 0.0);
        assert!(radon_forward_quadrature(&zero, 1.0, 1.0).is_err());
        let f = unit(BasisFamily::Disk, MultiIndex::pair(1, 1));
        let v = radon_forward_quadrature(&f, 1.0 - 1e-6, 0.5).unwrap();
        assert!(v.is_finite() && v.abs() < 10.0);
    }

    #[test]
    fn sampler_matches_nu_moments() {
        // E[u] under sqrt(1-u^2) on [0,1] is (1/3) / (pi/4) = 4 / (3 pi)
        let op = SvdOperator::radon2d();
        let mut rng = seeded(8);
        let n = 200_000;
        let mut s = 0.0;
        for _ in 0..n {
            if let YPoint::Line { u, .. } = op.sample_image_uniform(&mut rng) {
                s += u;
            }
        }
        let mean = s / n as f64;
        assert!((mean - 4.0 / (3.0 * PI)).abs() < 3e-3);
    }

    proptest! {
        #[test]
        fn q_inverts_a(seed in 0u64..10_000, q in 0.0f64..3.0) {
            let op = conv1(q);
            let support = IndexDomain::Trig { dim: 1 }.indices_up_to(8);
            let mut rng = seeded(seed);
            let vals: Vec<f64> = support.iter().map(|_| rng.random_range(-1.0..1.0)).collect();
            let g = CoefficientVector::from_dense(BasisFamily::Trig, &support, &vals);
            let back = op.apply_q(&op.apply_a(&g).unwrap()).unwrap();
            for (j, v) in g.iter() {
                prop_assert!((back.get(j) - v).abs() <= 1e-12 * v.abs().max(1.0));
            }
        }

        #[test]
        fn adjoint_identity_in_coefficients(seed in 0u64..10_000) {
            for op in [conv1(1.0), SvdOperator::radon2d()] {
                let support = op.domain().indices_up_to(8);
                let mut rng = seeded(seed);
                let h: Vec<f64> = support.iter().map(|_| rng.random_range(-1.0..1.0)).collect();
                let g: Vec<f64> = support.iter().map(|_| rng.random_range(-1.0..1.0)).collect();
                let fam = op.domain().family();
                let h = CoefficientVector::from_dense(fam, &support, &h);
                let g = CoefficientVector::from_dense(fam, &support, &g);
                let lhs = h.dot(&op.apply_q(&g).unwrap());
                let rhs = op.apply_a_inverse(&h).unwrap().dot(&g);
                prop_assert!((lhs - rhs).abs() <= 1e-10);
            }
        }
    }
}
