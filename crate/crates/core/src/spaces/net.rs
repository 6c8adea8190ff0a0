use std::fmt::Write as _;
use std::io::{BufRead, Write};

use crate::basis::{BasisFamily, MultiIndex};
use crate::error::{invalid, Error, Result};

use super::{CoefficientVector, Ellipsoid, LatticeNet};

pub const DEFAULT_NET_CAP: usize = 1 << 24;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum NetConstruction {
    Lattice { step: f64 },
    Explicit,
}

/// A finite delta-net stored point by point over a common support.
#[derive(Clone, Debug, PartialEq)]
pub struct Net {
    delta: f64,
    truncation_level: u32,
    basis: BasisFamily,
    support: Vec<MultiIndex>,
    points: Vec<Vec<f64>>,
    construction: NetConstruction,
}

impl Net {
    pub fn from_points(
        delta: f64,
        truncation_level: u32,
        basis: BasisFamily,
        support: Vec<MultiIndex>,
        points: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if let Some(p) = points.iter().find(|p| p.len() != support.len()) {
            return invalid(format!(
                "net point has {} coordinates, support has {}",
                p.len(),
                support.len()
            ));
        }
        Ok(Self {
            delta,
            truncation_level,
            basis,
            support,
            points,
            construction: NetConstruction::Explicit,
        })
    }

    pub fn from_lattice(lattice: &LatticeNet, basis: BasisFamily, cap: usize) -> Result<Self> {
        let points = lattice
            .materialize(cap)?
            .iter()
            .map(|k| lattice.coefficients(k))
            .collect();
        Ok(Self {
            delta: lattice.delta(),
            truncation_level: lattice.truncation_level(),
            basis,
            support: lattice.support().to_vec(),
            points,
            construction: NetConstruction::Lattice {
                step: lattice.step(),
            },
        })
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn truncation_level(&self) -> u32 {
        self.truncation_level
    }

    pub fn basis(&self) -> BasisFamily {
        self.basis
    }

    pub fn support(&self) -> &[MultiIndex] {
        &self.support
    }

    /// Raw coordinates aligned with [`Net::support`].
    pub fn raw_points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn construction(&self) -> NetConstruction {
        self.construction
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, i: usize) -> CoefficientVector {
        CoefficientVector::from_dense(self.basis, &self.support, &self.points[i])
    }

    /// Euclidean distance from `theta` to the nearest point.
    pub fn distance_to(&self, theta: &CoefficientVector) -> f64 {
        let inside = theta.to_dense(&self.support);
        let outside: f64 = theta
            .iter()
            .filter(|(j, _)| self.support.binary_search(j).is_err())
            .map(|(_, v)| v * v)
            .sum();
        let nearest = self
            .points
            .iter()
            .map(|p| p.iter().zip(&inside).map(|(a, b)| (a - b).powi(2)).sum::<f64>())
            .fold(f64::INFINITY, f64::min);
        (nearest + outside).sqrt()
    }

    pub fn write_text(&self, mut w: impl Write) -> Result<()> {
        w.write_all(
            format_points(self.delta, self.truncation_level, &self.support, &self.points)
                .as_bytes(),
        )?;
        Ok(())
    }

    pub fn to_text(&self) -> String {
        format_points(self.delta, self.truncation_level, &self.support, &self.points)
    }

    pub fn read_text(r: impl BufRead, basis: BasisFamily) -> Result<Self> {
        let (delta, m, support, points) = parse_points(r)?;
        Self::from_points(delta, m, basis, support, points)
    }
}

pub fn build_delta_net(e: &Ellipsoid, delta: f64) -> Result<Net> {
    build_delta_net_with_cap(e, delta, DEFAULT_NET_CAP)
}

pub fn build_delta_net_with_cap(e: &Ellipsoid, delta: f64, cap: usize) -> Result<Net> {
    let lattice = LatticeNet::new(e, delta)?;
    Net::from_lattice(&lattice, e.domain().family(), cap)
}

pub(crate) fn format_points(
    delta: f64,
    m: u32,
    support: &[MultiIndex],
    points: &[Vec<f64>],
) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# delta={delta:.16e} M={m} count={}", points.len());
    let labels: Vec<String> = support.iter().map(|j| j.to_string()).collect();
    for p in points {
        let mut first = true;
        for (label, v) in labels.iter().zip(p) {
            if !first {
                out.push(' ');
            }
            first = false;
            let _ = write!(out, "{label}:{v:.16e}");
        }
        out.push('\n');
    }
    out
}

type ParsedPoints = (f64, u32, Vec<MultiIndex>, Vec<Vec<f64>>);

pub(crate) fn parse_points(r: impl BufRead) -> Result<ParsedPoints> {
    let mut lines = r.lines().enumerate();
    let (_, header) = lines.next().ok_or(Error::Parse {
        line: 1,
        message: "missing header".into(),
    })?;
    let header = header?;
    let bad_header = |message: &str| Error::Parse {
        line: 1,
        message: message.to_string(),
    };
    let rest = header
        .strip_prefix('#')
        .ok_or_else(|| bad_header("header must start with '#'"))?;
    let mut delta = None;
    let mut m = None;
    let mut count = None;
    for field in rest.split_whitespace() {
        let (key, value) = field
            .split_once('=')
            .ok_or_else(|| bad_header("header fields are key=value"))?;
        match key {
            "delta" => delta = value.parse::<f64>().ok(),
            "M" => m = value.parse::<u32>().ok(),
            "count" => count = value.parse::<usize>().ok(),
            _ => return Err(bad_header(&format!("unknown header field {key}"))),
        }
    }
    let (delta, m, count) = match (delta, m, count) {
        (Some(d), Some(m), Some(c)) => (d, m, c),
        _ => return Err(bad_header("header needs delta, M and count")),
    };
    let mut support: Option<Vec<MultiIndex>> = None;
    let mut points = Vec::with_capacity(count);
    for (i, line) in lines {
        let line = line?;
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let mut idx = Vec::new();
        let mut vals = Vec::new();
        for pair in line.split_whitespace() {
            let err = |message: String| Error::Parse {
                line: lineno,
                message,
            };
            let (j, v) = pair
                .split_once(':')
                .ok_or_else(|| err(format!("expected index:value, got {pair}")))?;
            idx.push(
                j.parse::<MultiIndex>()
                    .map_err(|e| err(format!("bad index {j}: {e}")))?,
            );
            vals.push(
                v.parse::<f64>()
                    .map_err(|e| err(format!("bad value {v}: {e}")))?,
            );
        }
        match &support {
            None => support = Some(idx),
            Some(s) if *s != idx => {
                return Err(Error::Parse {
                    line: lineno,
                    message: "point support differs from the first point".into(),
                })
            }
            Some(_) => {}
        }
        points.push(vals);
    }
    if points.len() != count {
        return Err(Error::Parse {
            line: 1,
            message: format!("header count={count} but {} points follow", points.len()),
        });
    }
    Ok((delta, m, support.unwrap_or_default(), points))
}
