//! Orthonormal bases on both sides of the operators.
//!
//! Two families are supported:
//!
//! * the tensor trigonometric basis on `[0,1]^d`, indexed by a frequency
//!   multi-index `j` and a parity vector `k` choosing cosine or sine per axis;
//! * the realified Zernike basis on the unit disk together with the
//!   Chebyshev-of-the-second-kind image basis on `[0,1] x [0, 2pi)`, which
//!   form the singular system of the 2D Radon transform.

use std::cmp::Ordering;
use std::f64::consts::{PI, SQRT_2};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Frequency multi-index with per-axis cos/sin parity.
///
/// Bit `i` of `parity` selects the sine on axis `i`; it may only be set when
/// `indices[i] > 0`. Disk indices `(j, k)` carry no parity.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct MultiIndex {
    indices: Vec<u32>,
    parity: u32,
}

impl MultiIndex {
    pub fn new(indices: Vec<u32>, parity: u32) -> Result<Self> {
        if indices.len() > 32 {
            return invalid("multi-index dimension above 32");
        }
        for (axis, &j) in indices.iter().enumerate() {
            if j == 0 && parity & (1 << axis) != 0 {
                return invalid(format!(
                    "parity bit set on axis {axis} where the frequency is zero"
                ));
            }
        }
        if indices.len() < 32 && parity >> indices.len() != 0 {
            return invalid("parity bits beyond the index dimension");
        }
        Ok(Self { indices, parity })
    }

    /// Cosine (or constant, for `j = 0`) index in one dimension.
    pub fn cos(j: u32) -> Self {
        Self {
            indices: vec![j],
            parity: 0,
        }
    }

    /// Sine index in one dimension; `j` must be positive.
    pub fn sin(j: u32) -> Result<Self> {
        Self::new(vec![j], 1)
    }

    /// Disk index `(j, k)`.
    pub fn pair(j: u32, k: u32) -> Self {
        Self {
            indices: vec![j, k],
            parity: 0,
        }
    }

    pub fn indices(&self) -> &[u32] {
        &self.indices
    }

    pub fn parity(&self) -> u32 {
        self.parity
    }

    pub fn dim(&self) -> usize {
        self.indices.len()
    }

    pub fn is_sine(&self, axis: usize) -> bool {
        self.parity & (1 << axis) != 0
    }

    /// `|j| = j_1 + ... + j_d`.
    pub fn degree(&self) -> u32 {
        self.indices.iter().sum()
    }

    /// `max(|j|, 1)`, the base of the polynomial weight and decay laws.
    pub fn law_degree(&self) -> f64 {
        self.degree().max(1) as f64
    }
}

impl Ord for MultiIndex {
    fn cmp(&self, other: &Self) -> Ordering {
        self.degree()
            .cmp(&other.degree())
            .then_with(|| self.indices.cmp(&other.indices))
            .then_with(|| self.parity.reverse_bits().cmp(&other.parity.reverse_bits()))
    }
}

impl PartialOrd for MultiIndex {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (axis, j) in self.indices.iter().enumerate() {
            if axis > 0 {
                f.write_str(".")?;
            }
            write!(f, "{j}")?;
            if self.is_sine(axis) {
                f.write_str("s")?;
            }
        }
        Ok(())
    }
}

impl FromStr for MultiIndex {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.is_empty() {
            return invalid("empty multi-index");
        }
        let mut indices = Vec::new();
        let mut parity = 0u32;
        for (axis, part) in s.split('.').enumerate() {
            let (digits, sine) = match part.strip_suffix('s') {
                Some(d) => (d, true),
                None => (part.strip_suffix('c').unwrap_or(part), false),
            };
            let j: u32 = digits
                .parse()
                .map_err(|_| Error::InvalidInput(format!("bad multi-index component `{part}`")))?;
            if sine {
                parity |= 1 << axis;
            }
            indices.push(j);
        }
        Self::new(indices, parity)
    }
}

impl Serialize for MultiIndex {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for MultiIndex {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Which basis a coefficient vector refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BasisFamily {
    Trig,
    Disk,
}

/// An index set: which multi-indices belong to a function class.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum IndexDomain {
    /// Full tensor trigonometric basis on `[0,1]^dim`.
    Trig { dim: usize },
    /// Centered one-dimensional trigonometric functions of coordinate `axis`
    /// inside `[0,1]^dim` (the constant is excluded).
    TrigAxis { dim: usize, axis: usize },
    /// Realified Zernike basis, `(j, k) != (0, 0)`.
    Disk,
}

impl IndexDomain {
    pub fn family(&self) -> BasisFamily {
        match self {
            IndexDomain::Trig { .. } | IndexDomain::TrigAxis { .. } => BasisFamily::Trig,
            IndexDomain::Disk => BasisFamily::Disk,
        }
    }

    /// Dimension of the source domain.
    pub fn dim(&self) -> usize {
        match *self {
            IndexDomain::Trig { dim } | IndexDomain::TrigAxis { dim, .. } => dim,
            IndexDomain::Disk => 2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            IndexDomain::Trig { dim } if dim == 0 || dim > 8 => {
                invalid(format!("trigonometric dimension {dim} outside 1..=8"))
            }
            IndexDomain::TrigAxis { dim, axis } if dim == 0 || dim > 8 || axis >= dim => {
                invalid(format!("axis {axis} invalid for dimension {dim}"))
            }
            _ => Ok(()),
        }
    }

    pub fn contains(&self, j: &MultiIndex) -> bool {
        match *self {
            IndexDomain::Trig { dim } => j.dim() == dim,
            IndexDomain::TrigAxis { dim, axis } => {
                j.dim() == dim
                    && j.indices[axis] > 0
                    && j.indices
                        .iter()
                        .enumerate()
                        .all(|(i, &v)| i == axis || v == 0)
            }
            IndexDomain::Disk => j.dim() == 2 && j.parity == 0 && j.degree() > 0,
        }
    }

    /// All indices of degree at most `max_degree`, in serialized order.
    pub fn indices_up_to(&self, max_degree: u32) -> Vec<MultiIndex> {
        let mut out = Vec::new();
        match *self {
            IndexDomain::Trig { dim } => {
                let mut current = vec![0u32; dim];
                push_trig(&mut out, &mut current, 0, max_degree);
            }
            IndexDomain::TrigAxis { dim, axis } => {
                for j in 1..=max_degree {
                    let mut idx = vec![0u32; dim];
                    idx[axis] = j;
                    out.push(MultiIndex {
                        indices: idx.clone(),
                        parity: 0,
                    });
                    out.push(MultiIndex {
                        indices: idx,
                        parity: 1 << axis,
                    });
                }
            }
            IndexDomain::Disk => {
                for n in 1..=max_degree {
                    for j in 0..=n {
                        out.push(MultiIndex::pair(j, n - j));
                    }
                }
            }
        }
        out.sort();
        out
    }
}

fn push_trig(out: &mut Vec<MultiIndex>, current: &mut Vec<u32>, axis: usize, budget: u32) {
    if axis == current.len() {
        let nonzero: Vec<usize> = (0..current.len()).filter(|&i| current[i] > 0).collect();
        for mask in 0u32..(1 << nonzero.len()) {
            let mut parity = 0u32;
            for (bit, &ax) in nonzero.iter().enumerate() {
                if mask & (1 << bit) != 0 {
                    parity |= 1 << ax;
                }
            }
            out.push(MultiIndex {
                indices: current.clone(),
                parity,
            });
        }
        return;
    }
    for j in 0..=budget {
        current[axis] = j;
        push_trig(out, current, axis + 1, budget - j);
    }
    current[axis] = 0;
}

/// Point of the unit disk in polar coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DiskPoint {
    r: f64,
    theta: f64,
}

impl DiskPoint {
    pub fn new(r: f64, theta: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&r) || !(0.0..2.0 * PI).contains(&theta) {
            return invalid(format!("disk point (r={r}, theta={theta}) out of range"));
        }
        Ok(Self { r, theta })
    }

    /// Polar form of a Cartesian point; `None` outside the closed disk.
    pub fn from_cartesian(x: f64, y: f64) -> Option<Self> {
        let r = x.hypot(y);
        if r > 1.0 + 1e-12 {
            return None;
        }
        let mut theta = y.atan2(x);
        if theta < 0.0 {
            theta += 2.0 * PI;
        }
        if theta >= 2.0 * PI {
            theta = 0.0;
        }
        Some(Self {
            r: r.min(1.0),
            theta,
        })
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }
}

/// Tensor trigonometric basis function `phi_jk(x)` on `[0,1]^d`.
pub fn eval_trig_basis(j: &MultiIndex, x: &[f64]) -> Result<f64> {
    if x.len() != j.dim() {
        return invalid(format!(
            "point has dimension {} but index has dimension {}",
            x.len(),
            j.dim()
        ));
    }
    let mut v = 1.0;
    for (axis, (&ji, &xi)) in j.indices.iter().zip(x).enumerate() {
        if ji == 0 {
            continue;
        }
        let arg = 2.0 * PI * ji as f64 * xi;
        v *= SQRT_2 * if j.is_sine(axis) { arg.sin() } else { arg.cos() };
    }
    Ok(v)
}

/// Radial Zernike polynomial `Z_a^b(r)`, normalized so that `Z_a^b(1) = 1`.
///
/// Evaluated as `r^b P_k^{(0,b)}(2r^2 - 1)` with `k = (a-b)/2` through the
/// Jacobi three-term recurrence.
pub fn eval_zernike_radial(a: u32, b: u32, r: f64) -> Result<f64> {
    if b > a || (a - b) % 2 != 0 {
        return invalid(format!("Zernike degree {a} and order {b} need a >= b, a-b even"));
    }
    if !(0.0..=1.0).contains(&r) {
        return invalid(format!("Zernike radius {r} outside [0,1]"));
    }
    let k = (a - b) / 2;
    let x = 2.0 * r * r - 1.0;
    let beta = b as f64;
    // Jacobi P_k^{(0, beta)}(x)
    let mut p_prev = 1.0;
    let mut p = if k == 0 {
        1.0
    } else {
        1.0 + (beta + 2.0) * (x - 1.0) / 2.0
    };
    for m in 2..=k {
        let m = m as f64;
        let s = 2.0 * m + beta;
        let c1 = 2.0 * m * (m + beta) * (s - 2.0);
        let c2 = (s - 1.0) * (s * (s - 2.0) * x - beta * beta);
        let c3 = 2.0 * (m - 1.0) * (m + beta - 1.0) * s;
        let next = (c2 * p - c3 * p_prev) / c1;
        p_prev = p;
        p = next;
    }
    Ok(r.powi(b as i32) * p)
}

/// Chebyshev polynomial of the second kind `U_m(u)` by the three-term recurrence.
pub fn eval_chebyshev_u(m: u32, u: f64) -> f64 {
    let mut prev = 1.0;
    if m == 0 {
        return prev;
    }
    let mut cur = 2.0 * u;
    for _ in 1..m {
        let next = 2.0 * u * cur - prev;
        prev = cur;
        cur = next;
    }
    cur
}

fn disk_pair(j: &MultiIndex) -> Result<(u32, u32)> {
    match j.indices() {
        &[a, b] if j.parity == 0 => {
            if a == 0 && b == 0 {
                invalid("disk index (0,0) is excluded from the basis")
            } else {
                Ok((a, b))
            }
        }
        _ => invalid(format!("{j} is not a disk index (j,k)")),
    }
}

// Realification shared by both sides: sqrt2 Re for j>k, itself for j=k, sqrt2 Im for j<k.
fn realified_angular(j: u32, k: u32, angle: f64) -> f64 {
    let freq = j as f64 - k as f64;
    match j.cmp(&k) {
        Ordering::Greater => SQRT_2 * (freq * angle).cos(),
        Ordering::Equal => 1.0,
        Ordering::Less => SQRT_2 * (freq * angle).sin(),
    }
}

/// Realified disk basis function `phi_jk(r, theta)`.
pub fn eval_disk_basis(j: &MultiIndex, p: DiskPoint) -> Result<f64> {
    let (a, b) = disk_pair(j)?;
    let n = a + b;
    let radial = eval_zernike_radial(n, a.abs_diff(b), p.r)?;
    Ok(((n + 1) as f64 / PI).sqrt() * radial * realified_angular(a, b, p.theta))
}

/// Realified image basis function `psi_jk(u, phi) = pi^{-1/2} U_{j+k}(u) x angular part`.
pub fn eval_radon_image_basis(j: &MultiIndex, u: f64, phi: f64) -> Result<f64> {
    let (a, b) = disk_pair(j)?;
    if !(0.0..=1.0).contains(&u) {
        return invalid(format!("image coordinate u={u} outside [0,1]"));
    }
    if !(0.0..2.0 * PI).contains(&phi) {
        return invalid(format!("image angle phi={phi} outside [0, 2pi)"));
    }
    Ok(eval_chebyshev_u(a + b, u) * realified_angular(a, b, phi) / PI.sqrt())
}
