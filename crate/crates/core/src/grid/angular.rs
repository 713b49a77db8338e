//! Quadrature rules on the unit sphere.
//!
//! Weights are normalized to the surface measure, so they sum to 4π.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A named quadrature rule on S².
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
#[derive(Default)]
pub enum AngularRule {
    /// The six coordinate axes, equal weights. Degree 3.
    Octahedral6,
    /// Axes plus the twelve face diagonals. Degree 5; every reflection across a
    /// plane normal to one of its nodes maps the velocity lattice onto itself.
    #[default]
    Octahedral18,
    /// The 26-point Lebedev rule (axes, face diagonals, cube vertices). Degree 7.
    Lebedev26,
    /// Gauss–Legendre in cos θ times the uniform rule in φ.
    ProductGauss { polar: usize, azimuthal: usize },
}


impl AngularRule {
    /// Largest total polynomial degree integrated exactly.
    pub fn degree(&self) -> usize {
        match *self {
            AngularRule::Octahedral6 => 3,
            AngularRule::Octahedral18 => 5,
            AngularRule::Lebedev26 => 7,
            AngularRule::ProductGauss { polar, azimuthal } => {
                (2 * polar).saturating_sub(1).min(azimuthal.saturating_sub(1))
            }
        }
    }

    pub fn name(&self) -> String {
        match *self {
            AngularRule::Octahedral6 => "octahedral-6".into(),
            AngularRule::Octahedral18 => "octahedral-18".into(),
            AngularRule::Lebedev26 => "lebedev-26".into(),
            AngularRule::ProductGauss { polar, azimuthal } => {
                format!("product-gauss-{polar}x{azimuthal}")
            }
        }
    }

    /// Nodes `(direction, weight)` with weights summing to 4π.
    pub fn nodes(&self) -> Vec<([f64; 3], f64)> {
        let four_pi = 4.0 * PI;
        match *self {
            AngularRule::Octahedral6 => axes().into_iter().map(|d| (d, four_pi / 6.0)).collect(),
            AngularRule::Octahedral18 => {
                let mut out: Vec<_> = axes().into_iter().map(|d| (d, four_pi / 30.0)).collect();
                out.extend(face_diagonals().into_iter().map(|d| (d, four_pi / 15.0)));
                out
            }
            AngularRule::Lebedev26 => {
                let mut out: Vec<_> = axes().into_iter().map(|d| (d, four_pi / 21.0)).collect();
                out.extend(face_diagonals().into_iter().map(|d| (d, four_pi * 4.0 / 105.0)));
                out.extend(vertices().into_iter().map(|d| (d, four_pi * 27.0 / 840.0)));
                out
            }
            AngularRule::ProductGauss { polar, azimuthal } => {
                let (xs, ws) = gauss_legendre(polar);
                let dphi = 2.0 * PI / azimuthal as f64;
                let mut out = Vec::with_capacity(polar * azimuthal);
                for (&c, &w) in xs.iter().zip(&ws) {
                    let s = (1.0 - c * c).max(0.0).sqrt();
                    for j in 0..azimuthal {
                        let phi = (j as f64 + 0.5) * dphi;
                        out.push(([s * phi.cos(), s * phi.sin(), c], w * dphi));
                    }
                }
                out
            }
        }
    }
}

impl fmt::Display for AngularRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl FromStr for AngularRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase();
        match key.as_str() {
            "octahedral-6" => return Ok(AngularRule::Octahedral6),
            "octahedral-18" | "octahedral" => return Ok(AngularRule::Octahedral18),
            "lebedev-26" | "lebedev" => return Ok(AngularRule::Lebedev26),
            "product-gauss" => return Ok(AngularRule::ProductGauss { polar: 4, azimuthal: 8 }),
            _ => {}
        }
        if let Some(rest) = key.strip_prefix("product-gauss-") {
            if let Some((p, q)) = rest.split_once('x') {
                if let (Ok(polar), Ok(azimuthal)) = (p.parse::<usize>(), q.parse::<usize>()) {
                    if polar > 0 && azimuthal > 0 {
                        return Ok(AngularRule::ProductGauss { polar, azimuthal });
                    }
                }
            }
        }
        Err(Error::UnknownAngularRule(s.to_string()))
    }
}

impl TryFrom<String> for AngularRule {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<AngularRule> for String {
    fn from(r: AngularRule) -> String {
        r.name()
    }
}

fn axes() -> Vec<[f64; 3]> {
    let mut out = Vec::with_capacity(6);
    for axis in 0..3 {
        for sign in [1.0, -1.0] {
            let mut d = [0.0; 3];
            d[axis] = sign;
            out.push(d);
        }
    }
    out
}

fn face_diagonals() -> Vec<[f64; 3]> {
    let r = std::f64::consts::FRAC_1_SQRT_2;
    let mut out = Vec::with_capacity(12);
    for (a, b) in [(0, 1), (0, 2), (1, 2)] {
        for sa in [1.0, -1.0] {
            for sb in [1.0, -1.0] {
                let mut d = [0.0; 3];
                d[a] = sa * r;
                d[b] = sb * r;
                out.push(d);
            }
        }
    }
    out
}

fn vertices() -> Vec<[f64; 3]> {
    let r = 1.0 / 3f64.sqrt();
    let mut out = Vec::with_capacity(8);
    for sx in [1.0, -1.0] {
        for sy in [1.0, -1.0] {
            for sz in [1.0, -1.0] {
                out.push([sx * r, sy * r, sz * r]);
            }
        }
    }
    out
}

/// Gauss–Legendre nodes and weights on [-1, 1] by Newton iteration on P_n.
pub(crate) fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut xs = vec![0.0; n];
    let mut ws = vec![0.0; n];
    for i in 0..n {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let (_, d) = legendre(n, x);
        if d != 0.0 {
            dp = d;
        }
        xs[i] = x;
        ws[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    (xs, ws)
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let n = n as f64;
    let dp = n * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}
