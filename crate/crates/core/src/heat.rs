//! Fourier-series solution of the linear heat equation `d_t rho = d_xx rho`
//! on the unit torus, the exact limit for `g(n) = n` without defects.

use std::f64::consts::{PI, TAU};

use crate::profile::Profile;

const MAX_MODES: u32 = 4096;

#[derive(Debug, Clone)]
pub struct FourierHeat {
    profile: Profile,
    coeffs: Vec<(f64, f64)>,
}

impl FourierHeat {
    pub fn new(profile: &Profile) -> Self {
        let coeffs = (0..=MAX_MODES).map(|k| profile.fourier_coefficient(k)).collect();
        FourierHeat { profile: profile.clone(), coeffs }
    }

    /// Average of the solution over `[x - h, x + h]` at time `t`; with
    /// `h = 0` this is the point value.
    pub fn window_average(&self, t: f64, x: f64, h: f64) -> f64 {
        if t == 0.0 {
            return if h > 0.0 {
                self.profile.average(x - h, x + h)
            } else {
                self.profile.value(x)
            };
        }
        let mut acc = self.coeffs[0].0;
        for (k, &(re, im)) in self.coeffs.iter().enumerate().skip(1) {
            let kk = k as f64;
            let decay = (-4.0 * PI * PI * kk * kk * t).exp();
            if decay < 1e-20 {
                break;
            }
            if re == 0.0 && im == 0.0 {
                continue;
            }
            let smooth = if h > 0.0 {
                (TAU * kk * h).sin() / (TAU * kk * h)
            } else {
                1.0
            };
            let (s, c) = (TAU * kk * x).sin_cos();
            acc += 2.0 * decay * smooth * (re * c - im * s);
        }
        acc
    }

    pub fn value(&self, t: f64, x: f64) -> f64 {
        self.window_average(t, x, 0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cosine_closed_form() {
        let p = Profile::Cosine { mean: 1.0, amplitude: 1.0, mode: 1 };
        let h = FourierHeat::new(&p);
        for x in [0.0, 0.1, 0.37, 0.8] {
            let exact = 1.0 + (-4.0 * PI * PI * 0.05_f64).exp() * (TAU * x).cos();
            assert!((h.value(0.05, x) - exact).abs() < 1e-14);
        }
    }

    #[test]
    fn step_profile_conserves_mass_and_smooths() {
        let p = Profile::Piecewise { breaks: vec![0.0, 0.5], values: vec![2.0, 0.0] };
        let h = FourierHeat::new(&p);
        let n = 1000;
        let mass: f64 = (0..n).map(|i| h.value(0.01, (i as f64 + 0.5) / n as f64)).sum::<f64>() / n as f64;
        assert!((mass - 1.0).abs() < 1e-9);
        // symmetric about the jump
        assert!((h.value(0.01, 0.5) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn step_profile_matches_images() {
        // 2 * 1_[0, 1/2) convolved with the periodized Gaussian kernel
        use statrs::function::erf::erf;
        let t: f64 = 0.01;
        let s = (4.0 * t).sqrt();
        let oracle = |x: f64| {
            (-5..=5)
                .map(|m| {
                    let y = x - m as f64;
                    erf(y / s) - erf((y - 0.5) / s)
                })
                .sum::<f64>()
        };
        let h = FourierHeat::new(&Profile::Piecewise { breaks: vec![0.0, 0.5], values: vec![2.0, 0.0] });
        for x in [0.0, 0.1, 0.25, 0.4, 0.77] {
            assert!((h.value(t, x) - oracle(x)).abs() < 1e-10, "{x}");
        }
    }
}
