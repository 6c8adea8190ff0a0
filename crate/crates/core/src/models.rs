//! Synthetic observations: white-noise sufficient statistics and i.i.d.
//! samples from the observation density `Af`.

use std::collections::BTreeMap;
use std::io::Write;

use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::basis::{BasisFamily, MultiIndex};
use crate::error::{invalid, Error, Result};
use crate::operators::{SvdOperator, YPoint};
use crate::rng::{seeded, Rng};
use crate::spaces::{CoefficientVector, Ellipsoid};

const CHECK_GRID: usize = 10_000;
const ENVELOPE_INFLATION: f64 = 1.05;

/// `z_j = theta_j + n^{-1/2} b_j^{-1} eps_j` for each observed index.
#[derive(Clone, Debug, PartialEq)]
pub struct WhiteNoiseObservation {
    basis: BasisFamily,
    stats: BTreeMap<MultiIndex, f64>,
    n: f64,
    seed: u64,
}

impl WhiteNoiseObservation {
    pub fn from_stats(
        basis: BasisFamily,
        stats: impl IntoIterator<Item = (MultiIndex, f64)>,
        n: f64,
        seed: u64,
    ) -> Result<Self> {
        let stats: BTreeMap<_, _> = stats.into_iter().collect();
        if let Some((j, _)) = stats.iter().find(|(_, v)| !v.is_finite()) {
            return invalid(format!("statistic z_{j} is not finite"));
        }
        if !(n > 0.0) {
            return invalid(format!("sample size n={n} must be positive"));
        }
        Ok(Self {
            basis,
            stats,
            n,
            seed,
        })
    }

    /// The `n -> infinity` limit: `z_j = theta_j`.
    pub fn noiseless(theta: &CoefficientVector, support: &[MultiIndex]) -> Self {
        Self {
            basis: theta.basis(),
            stats: support.iter().map(|j| (j.clone(), theta.get(j))).collect(),
            n: f64::INFINITY,
            seed: 0,
        }
    }

    pub fn basis(&self) -> BasisFamily {
        self.basis
    }

    pub fn n(&self) -> f64 {
        self.n
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn get(&self, j: &MultiIndex) -> Option<f64> {
        self.stats.get(j).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&MultiIndex, f64)> {
        self.stats.iter().map(|(j, &v)| (j, v))
    }

    pub fn len(&self) -> usize {
        self.stats.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stats.is_empty()
    }

    /// Statistics aligned with `support`.
    pub fn statistics(&self, support: &[MultiIndex]) -> Result<Vec<f64>> {
        support
            .iter()
            .map(|j| {
                self.get(j)
                    .ok_or_else(|| Error::InvalidInput(format!("statistic z_{j} was not observed")))
            })
            .collect()
    }

    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "index,z")?;
        for (j, z) in &self.stats {
            writeln!(w, "{j},{z:.16e}")?;
        }
        Ok(())
    }
}

/// I.i.d. points `Y_1, ..., Y_n` of the observation space.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleObservation {
    points: Vec<YPoint>,
    seed: u64,
}

impl SampleObservation {
    pub fn new(points: Vec<YPoint>, seed: u64) -> Result<Self> {
        if points.is_empty() {
            return invalid("a sample needs at least one point");
        }
        Ok(Self { points, seed })
    }

    pub fn points(&self) -> &[YPoint] {
        &self.points
    }

    pub fn n(&self) -> usize {
        self.points.len()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Empirical coefficients `n^{-1} sum_i b_j^{-1} psi_j(Y_i)`, with which the
    /// density empirical risk becomes the white-noise quadratic.
    pub fn statistics(&self, op: &SvdOperator, support: &[MultiIndex]) -> Result<Vec<f64>> {
        let inv = op.inverse_singular_values(support)?;
        let mut sums = vec![0.0; support.len()];
        for y in &self.points {
            for (s, j) in sums.iter_mut().zip(support) {
                *s += op.eval_image_basis(j, y)?;
            }
        }
        let n = self.points.len() as f64;
        Ok(sums.iter().zip(&inv).map(|(s, w)| w * s / n).collect())
    }

    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        match self.points.first() {
            Some(YPoint::Line { .. }) => writeln!(w, "u,phi")?,
            Some(YPoint::Cube(x)) => {
                let names: Vec<String> = (1..=x.len()).map(|i| format!("y{i}")).collect();
                writeln!(w, "{}", names.join(","))?;
            }
            None => {}
        }
        for p in &self.points {
            match p {
                YPoint::Line { u, phi } => writeln!(w, "{u:.16e},{phi:.16e}")?,
                YPoint::Cube(x) => {
                    let cells: Vec<String> = x.iter().map(|v| format!("{v:.16e}")).collect();
                    writeln!(w, "{}", cells.join(","))?;
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Observation {
    WhiteNoise(WhiteNoiseObservation),
    Sample(SampleObservation),
}

impl Observation {
    /// The quadratic-form statistics `z_j` over `support`.
    pub fn statistics(&self, op: &SvdOperator, support: &[MultiIndex]) -> Result<Vec<f64>> {
        match self {
            Observation::WhiteNoise(w) => w.statistics(support),
            Observation::Sample(s) => s.statistics(op, support),
        }
    }
}

/// Range of `Af` over the check grid, recorded for density-mode truths.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DensityDiagnostics {
    pub min: f64,
    pub max: f64,
    pub integral: f64,
}

/// Simulation ground truth.
#[derive(Clone, Debug, PartialEq)]
pub struct TruthSpec {
    theta: CoefficientVector,
    ellipsoid: Ellipsoid,
    positivity_margin: Option<f64>,
    diagnostics: Option<DensityDiagnostics>,
}

impl TruthSpec {
    pub fn new(theta: CoefficientVector, ellipsoid: Ellipsoid) -> Result<Self> {
        if theta.basis() != ellipsoid.domain().family() {
            return invalid("truth and class use different bases");
        }
        if !ellipsoid.contains(&theta, 1e-12) {
            return invalid(format!(
                "truth has weighted norm {} outside the class radius {} (or indices outside the class)",
                ellipsoid.weighted_norm(&theta),
                ellipsoid.radius()
            ));
        }
        Ok(Self {
            theta,
            ellipsoid,
            positivity_margin: None,
            diagnostics: None,
        })
    }

    /// Truth whose observation density `Af` is a probability density with
    /// `Af >= margin` on the check grid.
    pub fn density(
        theta: CoefficientVector,
        ellipsoid: Ellipsoid,
        op: &SvdOperator,
        margin: f64,
    ) -> Result<Self> {
        let mut truth = Self::new(theta, ellipsoid)?;
        if !(margin > 0.0) {
            return invalid(format!("positivity margin {margin} must be positive"));
        }
        let grid = op.image_check_grid(CHECK_GRID);
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        for y in &grid {
            let v = truth.observation_density(op, y)?;
            min = min.min(v);
            max = max.max(v);
        }
        let integral = truth.observation_integral(op)?;
        if min < margin {
            return invalid(format!(
                "observation density drops to {min} on the check grid, below the margin {margin}"
            ));
        }
        if (integral - 1.0).abs() > 1e-8 {
            return invalid(format!("observation density integrates to {integral}, not 1"));
        }
        truth.positivity_margin = Some(margin);
        truth.diagnostics = Some(DensityDiagnostics { min, max, integral });
        Ok(truth)
    }

    pub fn theta(&self) -> &CoefficientVector {
        &self.theta
    }

    pub fn ellipsoid(&self) -> &Ellipsoid {
        &self.ellipsoid
    }

    pub fn positivity_margin(&self) -> Option<f64> {
        self.positivity_margin
    }

    pub fn diagnostics(&self) -> Option<DensityDiagnostics> {
        self.diagnostics
    }

    /// `Af(y)`, including the known offset of the tomography model.
    pub fn observation_density(&self, op: &SvdOperator, y: &YPoint) -> Result<f64> {
        Ok(op.density_offset() + op.eval_a_pointwise(&self.theta, y)?)
    }

    /// `int Af dnu`, computed from the coefficients: only constant image
    /// functions have nonzero mean.
    pub fn observation_integral(&self, op: &SvdOperator) -> Result<f64> {
        let mut total = op.density_offset() * op.image_measure_mass();
        for (j, v) in self.theta.iter() {
            if j.degree() == 0 {
                total += op.singular_value(j)? * v;
            }
        }
        Ok(total)
    }
}

/// Truth with `theta_j` proportional to `max(|j|,1)^{-decay}` on every
/// non-constant index of degree at most `max_degree`, scaled to weighted
/// norm `fraction * L`.
pub fn power_law_truth(
    e: &Ellipsoid,
    max_degree: u32,
    decay: f64,
    fraction: f64,
) -> Result<CoefficientVector> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return invalid(format!("norm fraction {fraction} must lie in (0, 1)"));
    }
    let support: Vec<MultiIndex> = e
        .support(max_degree)
        .into_iter()
        .filter(|j| j.degree() > 0)
        .collect();
    if support.is_empty() {
        return invalid("power-law truth needs at least one non-constant index");
    }
    let raw: Vec<f64> = support.iter().map(|j| j.law_degree().powf(-decay)).collect();
    let mut theta = CoefficientVector::from_dense(e.domain().family(), &support, &raw);
    let scale = fraction * e.radius() / e.weighted_norm(&theta);
    for (j, v) in support.iter().zip(&raw) {
        theta.set(j.clone(), v * scale);
    }
    Ok(theta)
}

fn gaussian_stats(
    theta: &CoefficientVector,
    op: &SvdOperator,
    support: &[MultiIndex],
    n: f64,
    rng: &mut Rng,
) -> Result<BTreeMap<MultiIndex, f64>> {
    let noise = n.sqrt().recip();
    support
        .iter()
        .map(|j| {
            let eps: f64 = rng.sample(StandardNormal);
            let z = theta.get(j) + noise * op.inverse_singular_value(j)? * eps;
            Ok((j.clone(), z))
        })
        .collect()
}

/// White-noise statistics over `support` from the seeded generator.
pub fn simulate_white_noise(
    truth: &TruthSpec,
    op: &SvdOperator,
    support: &[MultiIndex],
    n: u64,
    seed: u64,
) -> Result<WhiteNoiseObservation> {
    simulate_white_noise_with(truth.theta(), op, support, n, &mut seeded(seed), seed)
}

/// As [`simulate_white_noise`], drawing from a caller-owned generator.
pub fn simulate_white_noise_with(
    theta: &CoefficientVector,
    op: &SvdOperator,
    support: &[MultiIndex],
    n: u64,
    rng: &mut Rng,
    seed: u64,
) -> Result<WhiteNoiseObservation> {
    if n == 0 {
        return invalid("sample size n must be at least 1");
    }
    if theta.basis() != op.domain().family() {
        return invalid("truth and operator use different bases");
    }
    let stats = gaussian_stats(theta, op, support, n as f64, rng)?;
    Ok(WhiteNoiseObservation {
        basis: theta.basis(),
        stats,
        n: n as f64,
        seed,
    })
}

/// Rejection sampler for `Af` against a flat envelope over `nu`.
pub struct DensitySampler<'a> {
    truth: &'a TruthSpec,
    op: &'a SvdOperator,
    envelope: f64,
}

impl<'a> DensitySampler<'a> {
    pub fn new(truth: &'a TruthSpec, op: &'a SvdOperator) -> Result<Self> {
        let diag = truth.diagnostics().ok_or_else(|| {
            Error::InvalidInput("density sampling needs a truth validated as a density".into())
        })?;
        Ok(Self {
            truth,
            op,
            envelope: ENVELOPE_INFLATION * diag.max,
        })
    }

    pub fn envelope(&self) -> f64 {
        self.envelope
    }

    pub fn draw(&self, rng: &mut Rng) -> Result<YPoint> {
        loop {
            let y = self.op.sample_image_uniform(rng);
            let v = self.truth.observation_density(self.op, &y)?;
            if v > self.envelope || v < 0.0 {
                return Err(Error::Numerical(format!(
                    "observation density {v} at {y:?} escapes the envelope [0, {}]; \
                     the check grid missed an extremum",
                    self.envelope
                )));
            }
            let accept: f64 = rng.random();
            if accept * self.envelope < v {
                return Ok(y);
            }
        }
    }

    pub fn sample(&self, n: usize, rng: &mut Rng, seed: u64) -> Result<SampleObservation> {
        if n == 0 {
            return invalid("sample size n must be at least 1");
        }
        let points = (0..n).map(|_| self.draw(rng)).collect::<Result<Vec<_>>>()?;
        SampleObservation::new(points, seed)
    }
}

pub fn sample_density(
    truth: &TruthSpec,
    op: &SvdOperator,
    n: usize,
    seed: u64,
) -> Result<SampleObservation> {
    DensitySampler::new(truth, op)?.sample(n, &mut seeded(seed), seed)
}

/// Lines `(u_i, phi_i)` hit by a tomography experiment on a disk density.
pub fn sample_tomography(truth: &TruthSpec, n: usize, seed: u64) -> Result<SampleObservation> {
    if n == 0 {
        return invalid("tomography needs at least one observed line");
    }
    if truth.theta().basis() != BasisFamily::Disk {
        return invalid("tomography truth must be a disk expansion");
    }
    let op = SvdOperator::tomography2d();
    sample_density(truth, &op, n, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::IndexDomain;
    use std::f64::consts::PI;

    fn conv_setup() -> (Ellipsoid, SvdOperator) {
        let d = IndexDomain::Trig { dim: 1 };
        (
            Ellipsoid::polynomial(d, 1.0, 2.0).unwrap(),
            SvdOperator::convolution(d, 1.0, 1.0).unwrap(),
        )
    }

    fn density_truth() -> (TruthSpec, SvdOperator) {
        let (e, op) = conv_setup();
        let theta = CoefficientVector::from_entries(
            BasisFamily::Trig,
            [
                (MultiIndex::cos(0), 1.0),
                (MultiIndex::cos(1), 0.2),
                (MultiIndex::sin(2).unwrap(), -0.15),
            ],
        )
        .unwrap();
        (TruthSpec::density(theta, e, &op, 0.2).unwrap(), op)
    }

    #[test]
    fn noiseless_observation_is_truth() {
        let (e, _) = conv_setup();
        let theta = power_law_truth(&e, 5, 2.5, 0.5).unwrap();
        let support = e.support(5);
        let obs = WhiteNoiseObservation::noiseless(&theta, &support);
        for j in &support {
            assert_eq!(obs.get(j).unwrap(), theta.get(j));
        }
    }

    #[test]
    fn white_noise_moments() {
        let (e, op) = conv_setup();
        let theta = power_law_truth(&e, 3, 2.0, 0.5).unwrap();
        let truth = TruthSpec::new(theta.clone(), e.clone()).unwrap();
        let support = e.support(3);
        let n = 64u64;
        let reps = 10_000;
        let mut sum = vec![0.0; support.len()];
        let mut sq = vec![0.0; support.len()];
        for r in 0..reps {
            let obs = simulate_white_noise(&truth, &op, &support, n, r).unwrap();
            for (i, z) in obs.statistics(&support).unwrap().iter().enumerate() {
                sum[i] += z;
                sq[i] += z * z;
            }
        }
        for (i, j) in support.iter().enumerate() {
            let mean = sum[i] / reps as f64;
            let var = sq[i] / reps as f64 - mean * mean;
            let expected = op.inverse_singular_value(j).unwrap().powi(2) / n as f64;
            assert!((var / expected - 1.0).abs() < 0.05, "{j}: {var} vs {expected}");
            let se = (expected / reps as f64).sqrt();
            assert!((mean - theta.get(j)).abs() < 3.0 * se + 1e-15, "{j}");
        }
    }

    #[test]
    fn identical_seeds_reproduce() {
        let (e, op) = conv_setup();
        let truth = TruthSpec::new(power_law_truth(&e, 4, 2.0, 0.5).unwrap(), e.clone()).unwrap();
        let support = e.support(4);
        let a = simulate_white_noise(&truth, &op, &support, 100, 3).unwrap();
        let b = simulate_white_noise(&truth, &op, &support, 100, 3).unwrap();
        let (mut x, mut y) = (Vec::new(), Vec::new());
        a.write_csv(&mut x).unwrap();
        b.write_csv(&mut y).unwrap();
        assert_eq!(x, y);
        assert!(String::from_utf8(x).unwrap().starts_with("index,z\n"));
    }

    #[test]
    fn truth_outside_class_is_rejected() {
        let (e, _) = conv_setup();
        let theta =
            CoefficientVector::from_entries(BasisFamily::Trig, [(MultiIndex::cos(1), 3.0)]).unwrap();
        assert!(TruthSpec::new(theta, e).is_err());
    }

    #[test]
    fn negative_density_is_rejected() {
        let (e, op) = conv_setup();
        let theta = CoefficientVector::from_entries(
            BasisFamily::Trig,
            [(MultiIndex::cos(0), 1.0), (MultiIndex::cos(1), 0.9)],
        )
        .unwrap();
        assert!(TruthSpec::density(theta, e, &op, 0.2).is_err());
    }

    #[test]
    fn uniform_density_sample_passes_ks() {
        let (e, op) = conv_setup();
        let theta =
            CoefficientVector::from_entries(BasisFamily::Trig, [(MultiIndex::cos(0), 1.0)]).unwrap();
        let truth = TruthSpec::density(theta, e, &op, 0.2).unwrap();
        let s = sample_density(&truth, &op, 10_000, 17).unwrap();
        let mut xs: Vec<f64> = s
            .points()
            .iter()
            .map(|p| match p {
                YPoint::Cube(x) => x[0],
                _ => unreachable!(),
            })
            .collect();
        xs.sort_by(f64::total_cmp);
        let n = xs.len() as f64;
        let ks = xs
            .iter()
            .enumerate()
            .map(|(i, &x)| (x - i as f64 / n).abs().max(((i + 1) as f64 / n - x).abs()))
            .fold(0.0, f64::max);
        // 1% critical value 1.628 / sqrt(n)
        assert!(ks < 1.628 / n.sqrt(), "KS {ks}");
    }

    #[test]
    fn sample_mean_of_q_matches_inner_product() {
        let (truth, op) = density_truth();
        let s = sample_density(&truth, &op, 100_000, 5).unwrap();
        let g = CoefficientVector::from_entries(
            BasisFamily::Trig,
            [(MultiIndex::cos(1), 0.7), (MultiIndex::sin(2).unwrap(), 0.4)],
        )
        .unwrap();
        let vals: Vec<f64> = s
            .points()
            .iter()
            .map(|y| op.eval_q_pointwise(&g, y).unwrap())
            .collect();
        let n = vals.len() as f64;
        let mean = vals.iter().sum::<f64>() / n;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        // <Qg, Af> = <g, f>
        let expected = g.dot(truth.theta());
        assert!((mean - expected).abs() < 3.0 * (var / n).sqrt());
    }

    #[test]
    fn single_draw_and_zero_rejected() {
        let (truth, op) = density_truth();
        assert_eq!(sample_density(&truth, &op, 1, 1).unwrap().n(), 1);
        assert!(sample_density(&truth, &op, 0, 1).is_err());
    }

    fn uniform_disk_truth() -> TruthSpec {
        let e = Ellipsoid::polynomial(IndexDomain::Disk, 2.0, 1.0).unwrap();
        let op = SvdOperator::tomography2d();
        TruthSpec::density(CoefficientVector::zero(BasisFamily::Disk), e, &op, 0.2).unwrap()
    }

    #[test]
    fn tomography_uniform_angles() {
        let s = sample_tomography(&uniform_disk_truth(), 10_000, 12).unwrap();
        let mut bins = [0usize; 36];
        for p in s.points() {
            if let YPoint::Line { u, phi } = p {
                assert!((0.0..=1.0).contains(u) && (0.0..2.0 * PI).contains(phi));
                bins[((phi / (2.0 * PI)) * 36.0) as usize % 36] += 1;
            }
        }
        let expected = 10_000.0 / 36.0;
        let chi: f64 = bins.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        // 1% critical value of chi-square with 35 degrees of freedom
        assert!(chi < 57.34, "chi-square {chi}");
    }

    #[test]
    fn tomography_u_marginal() {
        // For the uniform disk the u-marginal has density proportional to
        // sqrt(1-u^2): compare histogram masses with Gauss-Legendre integrals.
        use crate::quadrature::GaussLegendre;
        let n = 20_000;
        let s = sample_tomography(&uniform_disk_truth(), n, 99).unwrap();
        let bins = 10;
        let mut counts = vec![0usize; bins];
        for p in s.points() {
            if let YPoint::Line { u, .. } = p {
                counts[((u * bins as f64) as usize).min(bins - 1)] += 1;
            }
        }
        let gl = GaussLegendre::new(64);
        for (b, &c) in counts.iter().enumerate() {
            let lo = b as f64 / bins as f64;
            let hi = lo + 1.0 / bins as f64;
            let p = gl.integrate(lo, hi, |u| (1.0 - u * u).sqrt()) / (PI / 4.0);
            let se = (p * (1.0 - p) / n as f64).sqrt();
            let f = c as f64 / n as f64;
            assert!((f - p).abs() < 4.0 * se, "bin {b}: {f} vs {p}");
        }
    }

    #[test]
    fn tomography_rejects_empty_sample() {
        assert!(sample_tomography(&uniform_disk_truth(), 0, 1).is_err());
    }

    #[test]
    fn tomography_csv_has_rows_in_range() {
        let s = sample_tomography(&uniform_disk_truth(), 100, 2).unwrap();
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("u,phi"));
        assert_eq!(lines.count(), 100);
    }
}
