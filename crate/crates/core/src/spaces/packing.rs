use std::f64::consts::SQRT_2;

use rand::Rng as _;

use crate::basis::{BasisFamily, MultiIndex};
use crate::error::{invalid, Result};
use crate::rng::seeded;

use super::net::format_points;
use super::{truncation_level, CoefficientVector, Ellipsoid};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PackingOptions {
    /// Upper limit on the number of code words.
    pub cap: usize,
    /// Seed for the randomized greedy search used on shells wider than 16.
    pub seed: u64,
}

impl Default for PackingOptions {
    fn default() -> Self {
        Self {
            cap: 4096,
            seed: 0x5eed,
        }
    }
}

/// Points `theta* + eps * omega` for binary words `omega` on the shell
/// `M* <= |j| <= M`, pairwise at Hamming distance at least `|shell| / 4`.
#[derive(Clone, Debug, PartialEq)]
pub struct PackingSet {
    delta: f64,
    truncation_level: u32,
    shell_start: u32,
    basis: BasisFamily,
    base: CoefficientVector,
    support: Vec<MultiIndex>,
    points: Vec<Vec<f64>>,
    epsilon: f64,
    min_hamming: usize,
    c0: f64,
    c_upper: f64,
}

impl PackingSet {
    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn shell(&self) -> (u32, u32) {
        (self.shell_start, self.truncation_level)
    }

    pub fn base_point(&self) -> &CoefficientVector {
        &self.base
    }

    /// Shell indices, the coordinates the points vary in.
    pub fn support(&self) -> &[MultiIndex] {
        &self.support
    }

    /// Shell coordinates of each point (the base point included).
    pub fn raw_points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn min_hamming(&self) -> usize {
        self.min_hamming
    }

    /// Guaranteed separation constant: every pair is at least `C0 delta` apart.
    pub fn c0(&self) -> f64 {
        self.c0
    }

    /// Every pair is at most `C delta` apart.
    pub fn c_upper(&self) -> f64 {
        self.c_upper
    }

    pub fn log_cardinality(&self) -> f64 {
        (self.points.len() as f64).ln()
    }

    /// Whether the code reaches the Varshamov-Gilbert size `2^{m/8}`.
    pub fn meets_gilbert_varshamov(&self) -> bool {
        self.log_cardinality() >= self.support.len() as f64 / 8.0 * std::f64::consts::LN_2 - 1e-12
    }

    pub fn point(&self, i: usize) -> CoefficientVector {
        let mut out = self.base.clone();
        for (j, v) in self.support.iter().zip(&self.points[i]) {
            out.set(j.clone(), *v);
        }
        out
    }

    pub fn to_text(&self) -> String {
        format_points(self.delta, self.truncation_level, &self.support, &self.points)
    }
}

pub fn build_packing_set(
    e: &Ellipsoid,
    delta: f64,
    base: &CoefficientVector,
) -> Result<PackingSet> {
    build_packing_set_with(e, delta, base, PackingOptions::default())
}

pub fn build_packing_set_with(
    e: &Ellipsoid,
    delta: f64,
    base: &CoefficientVector,
    options: PackingOptions,
) -> Result<PackingSet> {
    let m = truncation_level(e, delta)?;
    let m_star = m / 2;
    let min_delta = SQRT_2 * e.radius() / e.c1();
    if m == 0 {
        return invalid(format!(
            "packing shell is empty at delta={delta}; need delta <= {min_delta} so that M >= 1"
        ));
    }
    let support: Vec<MultiIndex> = e
        .support(m)
        .into_iter()
        .filter(|j| j.degree() >= m_star)
        .collect();
    if support.is_empty() {
        return invalid(format!(
            "packing shell is empty at delta={delta}; need delta <= {min_delta} so that M >= 1"
        ));
    }
    let l_star = e.weighted_norm(base);
    if l_star >= e.radius() {
        return invalid(format!(
            "base point has weighted norm {l_star}, not below L={}",
            e.radius()
        ));
    }
    let width = support.len();
    let min_hamming = width.div_ceil(4).max(1);
    let words = gilbert_varshamov_code(width, min_hamming, options);
    let shell_weight: f64 = support.iter().map(|j| e.weight(j).powi(2)).sum();
    let epsilon = (delta / (width as f64).sqrt())
        .min((e.radius() - l_star) / shell_weight.sqrt());
    let achieved = min_pairwise_hamming(&words).unwrap_or(width);
    let base_shell = base.to_dense(&support);
    let points = words
        .iter()
        .map(|w| {
            base_shell
                .iter()
                .enumerate()
                .map(|(i, b)| b + if bit(w, i) { epsilon } else { 0.0 })
                .collect()
        })
        .collect();
    Ok(PackingSet {
        delta,
        truncation_level: m,
        shell_start: m_star,
        basis: e.domain().family(),
        base: base.clone(),
        support,
        points,
        epsilon,
        min_hamming: achieved,
        c0: epsilon * (achieved as f64).sqrt() / delta,
        c_upper: epsilon * (width as f64).sqrt() / delta,
    })
}

type Word = Vec<u64>;

fn bit(w: &Word, i: usize) -> bool {
    w[i / 64] >> (i % 64) & 1 == 1
}

fn hamming(a: &Word, b: &Word) -> usize {
    a.iter().zip(b).map(|(x, y)| (x ^ y).count_ones() as usize).sum()
}

fn min_pairwise_hamming(words: &[Word]) -> Option<usize> {
    let mut best = None;
    for i in 0..words.len() {
        for j in i + 1..words.len() {
            let d = hamming(&words[i], &words[j]);
            best = Some(best.map_or(d, |b: usize| b.min(d)));
        }
    }
    best
}

/// Greedy code: exhaustive lexicographic scan for `m <= 16`, random
/// candidates from a seeded generator beyond that.
fn gilbert_varshamov_code(m: usize, min_distance: usize, options: PackingOptions) -> Vec<Word> {
    let limbs = m.div_ceil(64);
    let mut code: Vec<Word> = Vec::new();
    let try_add = |w: Word, code: &mut Vec<Word>| {
        if code.iter().all(|c| hamming(c, &w) >= min_distance) {
            code.push(w);
        }
    };
    if m <= 16 {
        for x in 0u64..(1 << m) {
            if code.len() >= options.cap {
                break;
            }
            try_add(vec![x], &mut code);
        }
    } else {
        let mut rng = seeded(options.seed);
        try_add(vec![0; limbs], &mut code);
        let attempts = 50 * options.cap;
        for _ in 0..attempts {
            if code.len() >= options.cap {
                break;
            }
            let mut w: Word = (0..limbs).map(|_| rng.random::<u64>()).collect();
            if m % 64 != 0 {
                w[limbs - 1] &= (1u64 << (m % 64)) - 1;
            }
            try_add(w, &mut code);
        }
    }
    code
}
