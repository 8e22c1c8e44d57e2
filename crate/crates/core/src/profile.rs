//! Macroscopic density profiles on the unit torus.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Profile {
    Constant {
        value: f64,
    },
    /// `mean + amplitude * cos(2 pi mode x)`.
    Cosine {
        mean: f64,
        amplitude: f64,
        #[serde(default = "one")]
        mode: u32,
    },
    /// Value `values[i]` on `[breaks[i], breaks[i+1])`, the last segment
    /// running to 1. `breaks[0]` must be 0.
    Piecewise { breaks: Vec<f64>, values: Vec<f64> },
}

fn one() -> u32 {
    1
}

impl Profile {
    pub fn constant(value: f64) -> Self {
        Profile::Constant { value }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |reason: &str| Err(Error::config("initial.profile", reason));
        match self {
            Profile::Constant { value } => {
                if !(*value >= 0.0 && value.is_finite()) {
                    return bad("density must be finite and nonnegative");
                }
            }
            Profile::Cosine { mean, amplitude, mode } => {
                if !(mean.is_finite() && amplitude.is_finite()) || *mean < amplitude.abs() {
                    return bad("cosine profile must stay nonnegative (mean >= |amplitude|)");
                }
                if *mode == 0 {
                    return bad("cosine mode must be at least 1");
                }
            }
            Profile::Piecewise { breaks, values } => {
                if breaks.is_empty() || breaks.len() != values.len() {
                    return bad("breaks and values must be nonempty and of equal length");
                }
                if breaks[0] != 0.0 {
                    return bad("first break must be 0");
                }
                if breaks.windows(2).any(|w| w[1] <= w[0]) || *breaks.last().unwrap() >= 1.0 {
                    return bad("breaks must increase strictly inside [0, 1)");
                }
                if values.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
                    return bad("densities must be finite and nonnegative");
                }
            }
        }
        Ok(())
    }

    pub fn value(&self, x: f64) -> f64 {
        let x = x.rem_euclid(1.0);
        match self {
            Profile::Constant { value } => *value,
            Profile::Cosine { mean, amplitude, mode } => mean + amplitude * (TAU * *mode as f64 * x).cos(),
            Profile::Piecewise { breaks, values } => {
                let i = breaks.partition_point(|b| *b <= x);
                values[i.saturating_sub(1)]
            }
        }
    }

    /// Antiderivative on one period, `F(0) = 0`, for `x` in `[0, 1]`.
    fn primitive(&self, x: f64) -> f64 {
        match self {
            Profile::Constant { value } => value * x,
            Profile::Cosine { mean, amplitude, mode } => {
                let k = TAU * *mode as f64;
                mean * x + amplitude * (k * x).sin() / k
            }
            Profile::Piecewise { breaks, values } => {
                let mut acc = 0.0;
                for (i, (&b, &v)) in breaks.iter().zip(values).enumerate() {
                    if x <= b {
                        break;
                    }
                    let end = breaks.get(i + 1).copied().unwrap_or(1.0);
                    acc += v * (x.min(end) - b);
                }
                acc
            }
        }
    }

    /// Total mass `int_0^1 rho`.
    pub fn mass(&self) -> f64 {
        self.primitive(1.0)
    }

    /// `int_a^b rho` for any `a <= b`, periodically extended.
    pub fn integral(&self, a: f64, b: f64) -> f64 {
        let f = |x: f64| {
            let k = x.floor();
            k * self.mass() + self.primitive(x - k)
        };
        f(b) - f(a)
    }

    pub fn average(&self, a: f64, b: f64) -> f64 {
        self.integral(a, b) / (b - a)
    }

    pub fn max_value(&self) -> f64 {
        match self {
            Profile::Constant { value } => *value,
            Profile::Cosine { mean, amplitude, .. } => mean + amplitude.abs(),
            Profile::Piecewise { values, .. } => values.iter().cloned().fold(0.0, f64::max),
        }
    }

    /// Complex Fourier coefficient `int_0^1 rho(x) e^{-2 pi i k x} dx`
    /// as `(re, im)`.
    pub fn fourier_coefficient(&self, k: u32) -> (f64, f64) {
        if k == 0 {
            return (self.mass(), 0.0);
        }
        match self {
            Profile::Constant { .. } => (0.0, 0.0),
            Profile::Cosine { amplitude, mode, .. } => {
                if k == *mode {
                    (amplitude / 2.0, 0.0)
                } else {
                    (0.0, 0.0)
                }
            }
            Profile::Piecewise { breaks, values } => {
                // int_a^b e^{-i w x} dx = (sin(w b) - sin(w a)) / w
                //                         + i (cos(w b) - cos(w a)) / w
                let w = TAU * k as f64;
                let mut re = 0.0;
                let mut im = 0.0;
                for (i, (&a, &v)) in breaks.iter().zip(values).enumerate() {
                    let b = breaks.get(i + 1).copied().unwrap_or(1.0);
                    re += v * ((w * b).sin() - (w * a).sin()) / w;
                    im += v * ((w * b).cos() - (w * a).cos()) / w;
                }
                (re, im)
            }
        }
    }
}

/// Macroscopic initial data: the density profile, the initial atom masses
/// (one entry per defect, used at critical defects only; empty for none)
/// and the level `c0` held at super-slow defects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialCondition {
    pub profile: Profile,
    #[serde(default)]
    pub atoms: Vec<f64>,
    #[serde(default)]
    pub c0: f64,
}

impl InitialCondition {
    pub fn new(profile: Profile) -> Self {
        InitialCondition { profile, atoms: Vec::new(), c0: 0.0 }
    }

    pub fn with_atoms(mut self, atoms: Vec<f64>) -> Self {
        self.atoms = atoms;
        self
    }

    pub fn with_c0(mut self, c0: f64) -> Self {
        self.c0 = c0;
        self
    }

    pub fn atom(&self, j: usize) -> f64 {
        self.atoms.get(j).copied().unwrap_or(0.0)
    }
}
