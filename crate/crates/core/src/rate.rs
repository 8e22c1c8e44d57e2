//! Jump rate functions `g(n)`.
//!
//! Every rate satisfies `g(0) = 0`, `g(n) > 0` for `n >= 1`, is
//! nondecreasing and Lipschitz, and either grows like `n^alpha` for some
//! `alpha` in `(0, 1]` or increases to the saturation value 1.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

/// Asymptotic class of a rate function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum RateFamily {
    /// `g(n) / n^alpha -> 1`.
    PowerAlpha(f64),
    /// `g(n)` increases to 1.
    Bounded,
}

impl RateFamily {
    /// Convergence radius of the partition function: `lim g(n)`.
    pub fn radius(&self) -> f64 {
        match self {
            RateFamily::PowerAlpha(_) => f64::INFINITY,
            RateFamily::Bounded => 1.0,
        }
    }

    pub fn alpha(&self) -> Option<f64> {
        match self {
            RateFamily::PowerAlpha(a) => Some(*a),
            RateFamily::Bounded => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Kind {
    Identity,
    Power(f64),
    /// `n / (n + 1)`
    Rational,
    /// `1 - 2^-n`
    Geometric,
    Table(Table),
}

/// Tabulated values `g(0..=n_max)`; beyond `n_max` the tail is
/// `g(n_max) + n^alpha - n_max^alpha` (power family) or `g(n_max) = 1`
/// held constant (bounded family).
#[derive(Debug, Clone, PartialEq)]
struct Table {
    values: Vec<f64>,
    anchor: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateFunction {
    kind: Kind,
    family: RateFamily,
    lipschitz: f64,
}

impl RateFunction {
    /// `g(n) = n`: independent random walkers.
    pub fn identity() -> Self {
        RateFunction {
            kind: Kind::Identity,
            family: RateFamily::PowerAlpha(1.0),
            lipschitz: 1.0,
        }
    }

    /// `g(n) = n^alpha`, `0 < alpha <= 1`.
    pub fn power(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::Rate(format!("power exponent {alpha} not in (0, 1]")));
        }
        if alpha == 1.0 {
            return Ok(Self::identity());
        }
        Ok(RateFunction {
            kind: Kind::Power(alpha),
            family: RateFamily::PowerAlpha(alpha),
            // concave, so the largest increment is g(1) - g(0)
            lipschitz: 1.0,
        })
    }

    /// `g(n) = n / (n + 1)`.
    pub fn rational() -> Self {
        RateFunction {
            kind: Kind::Rational,
            family: RateFamily::Bounded,
            lipschitz: 0.5,
        }
    }

    /// `g(n) = 1 - 2^-n`.
    pub fn geometric() -> Self {
        RateFunction {
            kind: Kind::Geometric,
            family: RateFamily::Bounded,
            lipschitz: 0.5,
        }
    }

    /// Builds a tabulated rate from `g(0), ..., g(n_max)`.
    ///
    /// Bounded tables must end exactly at the saturation value 1; the
    /// table is not rescaled.
    pub fn table(values: Vec<f64>, family: RateFamily) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::Rate("table needs at least g(0) and g(1)".into()));
        }
        if values[0] != 0.0 {
            return Err(Error::Rate(format!("g(0) must be 0, got {}", values[0])));
        }
        for (n, w) in values.windows(2).enumerate() {
            if !(w[1] > 0.0) || !w[1].is_finite() {
                return Err(Error::Rate(format!("g({}) must be positive", n + 1)));
            }
            if w[1] < w[0] {
                return Err(Error::Rate(format!("table decreases at n = {}", n + 1)));
            }
        }
        let n_max = values.len() - 1;
        let last = values[n_max];
        let mut lipschitz = values
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(0.0_f64, f64::max);
        let anchor = match family {
            RateFamily::PowerAlpha(alpha) => {
                if !(alpha > 0.0 && alpha <= 1.0) {
                    return Err(Error::Rate(format!("power exponent {alpha} not in (0, 1]")));
                }
                let nm = n_max as f64;
                lipschitz = lipschitz.max((nm + 1.0).powf(alpha) - nm.powf(alpha));
                last - nm.powf(alpha)
            }
            RateFamily::Bounded => {
                if (last - 1.0).abs() > 1e-12 {
                    return Err(Error::Rate(format!(
                        "bounded table must saturate at g = 1, last value is {last}"
                    )));
                }
                1.0
            }
        };
        Ok(RateFunction {
            kind: Kind::Table(Table { values, anchor }),
            family,
            lipschitz,
        })
    }

    /// Reads a two-column `n g(n)` text file (whitespace or comma
    /// separated, `#` comments). Rows must list `n = 0, 1, ..., n_max`.
    pub fn load_table(path: &Path, family: RateFamily) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse_table(&text, family)
    }

    pub fn parse_table(text: &str, family: RateFamily) -> Result<Self> {
        let mut values = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut cols = line
                .split(|c: char| c == ',' || c.is_whitespace())
                .filter(|s| !s.is_empty());
            let bad = || Error::Rate(format!("line {}: expected `n g(n)`", lineno + 1));
            let n: usize = cols.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
            let g: f64 = cols.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
            if n != values.len() {
                return Err(Error::Rate(format!(
                    "line {}: expected n = {}, found {n}",
                    lineno + 1,
                    values.len()
                )));
            }
            values.push(g);
        }
        Self::table(values, family)
    }

    #[inline]
    pub fn eval(&self, n: u64) -> f64 {
        if n == 0 {
            return 0.0;
        }
        match &self.kind {
            Kind::Identity => n as f64,
            Kind::Power(a) => (n as f64).powf(*a),
            Kind::Rational => {
                let x = n as f64;
                x / (x + 1.0)
            }
            Kind::Geometric => {
                if n >= 1100 {
                    1.0
                } else {
                    1.0 - (-(n as f64)).exp2()
                }
            }
            Kind::Table(t) => match t.values.get(n as usize) {
                Some(v) => *v,
                None => match self.family {
                    RateFamily::PowerAlpha(a) => t.anchor + (n as f64).powf(a),
                    RateFamily::Bounded => t.anchor,
                },
            },
        }
    }

    /// `ln g(n)! = sum_{k=1}^n ln g(k)`.
    pub fn log_factorial(&self, n: u64) -> f64 {
        if n == 0 {
            return 0.0;
        }
        match &self.kind {
            Kind::Identity => ln_gamma(n as f64 + 1.0),
            Kind::Power(a) => a * ln_gamma(n as f64 + 1.0),
            Kind::Rational => -(n as f64 + 1.0).ln(),
            // ln(1 - 2^-k) is below 1e-18 in magnitude past k = 60
            Kind::Geometric => (1..=n.min(64)).map(|k| self.eval(k).ln()).sum(),
            Kind::Table(_) => (1..=n).map(|k| self.eval(k).ln()).sum(),
        }
    }

    pub fn family(&self) -> RateFamily {
        self.family
    }

    /// `g*`: bound on `|g(n+1) - g(n)|`.
    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    pub fn radius(&self) -> f64 {
        self.family.radius()
    }

    pub fn is_identity(&self) -> bool {
        matches!(self.kind, Kind::Identity)
    }

    /// Largest `n` with `g(n) <= level`; 0 when `level < g(1)`.
    ///
    /// For bounded rates the caller must ensure `level < 1`.
    pub fn last_below(&self, level: f64) -> u64 {
        if self.eval(1) > level {
            return 0;
        }
        if let Kind::Identity = self.kind {
            return level.floor() as u64;
        }
        let mut hi: u64 = 2;
        while self.eval(hi) <= level {
            hi = hi.checked_mul(2).expect("rate never exceeds level");
        }
        let mut lo = hi / 2;
        // g(lo) <= level < g(hi)
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            if self.eval(mid) <= level {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    }
}

impl fmt::Display for RateFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            Kind::Identity => write!(f, "g(n) = n"),
            Kind::Power(a) => write!(f, "g(n) = n^{a}"),
            Kind::Rational => write!(f, "g(n) = n/(n+1)"),
            Kind::Geometric => write!(f, "g(n) = 1 - 2^-n"),
            Kind::Table(t) => write!(f, "tabulated g, n_max = {}", t.values.len() - 1),
        }
    }
}
