//! Grand-canonical single-site laws `P_phi(n) = phi^n / (Z(phi) g(n)!)`
//! and the derived functions `Z`, `R`, `Phi = R^-1` and `sigma^2`.
//!
//! All series are evaluated on a window around the mode of the summand,
//! with weights stored relative to the mode term. The window grows in both
//! directions until a geometric bound on the remaining tail (including
//! the second moment) drops below `truncation_tol` times the partial sum.

use rand::Rng;

use crate::error::{Error, Result};
use crate::rate::{RateFamily, RateFunction};

/// Default relative tail tolerance for every series.
pub const TRUNCATION_TOL: f64 = 1e-16;

/// Weights below this (relative to the mode term) are dropped.
const NEGLIGIBLE: f64 = 1e-300;

/// Refuse windows longer than this many terms.
const MAX_WINDOW: usize = 50_000_000;

/// Truncated, mode-centred support of a discrete law.
#[derive(Debug, Clone)]
struct Window {
    lo: u64,
    mode: u64,
    /// Unnormalized weights relative to the mode term.
    weights: Vec<f64>,
}

impl Window {
    /// `up(n)` is `t(n+1) / t(n)` and `down(n)` is `t(n-1) / t(n)`; both
    /// ratio sequences must be nonincreasing away from the mode.
    fn build(mode: u64, tol: f64, up: impl Fn(u64) -> f64, down: impl Fn(u64) -> f64) -> Result<Self> {
        let scale = (1.0 + mode as f64).powi(2);
        let mut above = Vec::new();
        let mut below = Vec::new();
        let mut sum = 1.0;

        let mut n = mode;
        let mut w = 1.0;
        loop {
            let r = up(n);
            if r <= 0.0 {
                break;
            }
            if r < 1.0 {
                let q = 1.0 - r;
                let x = n as f64;
                let tail = w * (x * x * r / q + 2.0 * x * r / (q * q) + r * (1.0 + r) / (q * q * q));
                if tail <= tol * sum * scale {
                    break;
                }
            }
            w *= r;
            if w < NEGLIGIBLE {
                break;
            }
            n += 1;
            above.push(w);
            sum += w;
            if above.len() > MAX_WINDOW {
                return Err(Error::Domain { phi: f64::NAN, radius: f64::NAN });
            }
        }

        let mut n = mode;
        let mut w = 1.0;
        while n > 0 {
            let r = down(n);
            if r < 1.0 {
                let x = n as f64;
                let tail = w * x * x * r / (1.0 - r);
                if tail <= tol * sum * scale {
                    break;
                }
            }
            w *= r;
            if w < NEGLIGIBLE {
                break;
            }
            n -= 1;
            below.push(w);
            sum += w;
            if below.len() > MAX_WINDOW {
                return Err(Error::Domain { phi: f64::NAN, radius: f64::NAN });
            }
        }

        let lo = mode - below.len() as u64;
        let mut weights = below;
        weights.reverse();
        weights.push(1.0);
        weights.extend(above);
        Ok(Window { lo, mode, weights })
    }

    fn sum(&self) -> f64 {
        self.weights.iter().sum()
    }

    fn moments(&self) -> (f64, f64) {
        let s = self.sum();
        let mean = self
            .weights
            .iter()
            .enumerate()
            .map(|(i, w)| (self.lo + i as u64) as f64 * w)
            .sum::<f64>()
            / s;
        let var = self
            .weights
            .iter()
            .enumerate()
            .map(|(i, w)| {
                let d = (self.lo + i as u64) as f64 - mean;
                d * d * w
            })
            .sum::<f64>()
            / s;
        (mean, var)
    }
}

/// The thermodynamic function family of a rate function.
///
/// Immutable after construction; share it freely between threads.
#[derive(Debug, Clone)]
pub struct GrandCanonical {
    rate: RateFunction,
    radius: f64,
    truncation_tol: f64,
}

impl GrandCanonical {
    pub fn new(rate: RateFunction) -> Self {
        let radius = rate.radius();
        GrandCanonical {
            rate,
            radius,
            truncation_tol: TRUNCATION_TOL,
        }
    }

    pub fn rate(&self) -> &RateFunction {
        &self.rate
    }

    /// `r_g`: infinite for power rates, 1 for bounded rates.
    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn lipschitz(&self) -> f64 {
        self.rate.lipschitz()
    }

    pub fn family(&self) -> RateFamily {
        self.rate.family()
    }

    pub fn truncation_tol(&self) -> f64 {
        self.truncation_tol
    }

    fn check(&self, phi: f64) -> Result<()> {
        if phi >= 0.0 && phi < self.radius {
            Ok(())
        } else {
            Err(Error::Domain { phi, radius: self.radius })
        }
    }

    fn window(&self, phi: f64) -> Result<Window> {
        self.check(phi)?;
        if phi == 0.0 {
            return Ok(Window { lo: 0, mode: 0, weights: vec![1.0] });
        }
        let g = &self.rate;
        let mode = g.last_below(phi);
        Window::build(
            mode,
            self.truncation_tol,
            |n| phi / g.eval(n + 1),
            |n| g.eval(n) / phi,
        )
        .map_err(|_| Error::Domain { phi, radius: self.radius })
    }

    /// `ln Z(phi)`.
    pub fn log_partition(&self, phi: f64) -> Result<f64> {
        let w = self.window(phi)?;
        if phi == 0.0 {
            return Ok(0.0);
        }
        let log_mode_term = w.mode as f64 * phi.ln() - self.rate.log_factorial(w.mode);
        Ok(log_mode_term + w.sum().ln())
    }

    /// `R(phi)`, the mean of `P_phi`.
    pub fn mean_density(&self, phi: f64) -> Result<f64> {
        Ok(self.window(phi)?.moments().0)
    }

    /// `sigma^2(phi)`, the variance of `P_phi`.
    pub fn variance(&self, phi: f64) -> Result<f64> {
        Ok(self.window(phi)?.moments().1)
    }

    /// `E_{P_phi}[g(X)]`, which equals `phi`.
    pub fn mean_rate(&self, phi: f64) -> Result<f64> {
        let w = self.window(phi)?;
        let s = w.sum();
        Ok(w.weights
            .iter()
            .enumerate()
            .map(|(i, x)| self.rate.eval(w.lo + i as u64) * x)
            .sum::<f64>()
            / s)
    }

    /// `Phi(rho) = R^-1(rho)` by bisection on `[0, min(g* rho, r_g))`,
    /// run until the bracket cannot shrink further.
    pub fn fugacity(&self, rho: f64) -> f64 {
        assert!(rho >= 0.0 && rho.is_finite(), "density {rho} must be finite and nonnegative");
        if rho == 0.0 {
            return 0.0;
        }
        if self.rate.is_identity() {
            return rho;
        }
        let mut lo = 0.0_f64;
        let mut hi = (self.lipschitz() * rho).min(self.radius);
        // R(g* rho) >= rho because Phi(rho) <= g* rho; the radius end is +inf.
        for _ in 0..4096 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            let r = if mid >= self.radius {
                f64::INFINITY
            } else {
                self.mean_density(mid).unwrap_or(f64::INFINITY)
            };
            if r < rho {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let pick_lo = match self.mean_density(lo) {
            Ok(r_lo) => match self.mean_density(hi) {
                Ok(r_hi) => (rho - r_lo).abs() <= (r_hi - rho).abs(),
                Err(_) => true,
            },
            Err(_) => false,
        };
        if pick_lo {
            lo
        } else {
            hi
        }
    }

    /// `Phi'(rho) = Phi(rho) / sigma^2(Phi(rho))`, equal to `g(1)` at 0.
    pub fn fugacity_derivative(&self, rho: f64) -> f64 {
        let phi = self.fugacity(rho);
        if phi == 0.0 {
            return self.rate.eval(1);
        }
        let (_, var) = self.window(phi).expect("fugacity inside domain").moments();
        phi / var
    }

    pub fn marginal(&self, phi: f64) -> Result<Marginal> {
        Ok(Marginal::from_window(self.window(phi)?))
    }

    /// Draws one occupancy from `P_phi` by exact inverse-CDF sampling.
    pub fn sample_occupancy<R: Rng + ?Sized>(&self, phi: f64, rng: &mut R) -> Result<u64> {
        Ok(self.marginal(phi)?.sample(rng))
    }
}

/// A tabulated discrete law supporting inverse-CDF sampling.
#[derive(Debug, Clone)]
pub struct Marginal {
    lo: u64,
    pmf: Vec<f64>,
    cdf: Vec<f64>,
}

impl Marginal {
    fn from_window(w: Window) -> Self {
        let s = w.sum();
        let pmf: Vec<f64> = w.weights.iter().map(|x| x / s).collect();
        let mut cdf = Vec::with_capacity(pmf.len());
        let mut acc = 0.0;
        for p in &pmf {
            acc += p;
            cdf.push(acc);
        }
        if let Some(last) = cdf.last_mut() {
            *last = 1.0;
        }
        Marginal { lo: w.lo, pmf, cdf }
    }

    /// Point mass at zero.
    pub fn zero() -> Self {
        Marginal { lo: 0, pmf: vec![1.0], cdf: vec![1.0] }
    }

    /// Ordinary Poisson law with the given mean.
    pub fn poisson(mean: f64) -> Result<Self> {
        if !(mean >= 0.0 && mean.is_finite()) {
            return Err(Error::Domain { phi: mean, radius: f64::INFINITY });
        }
        if mean == 0.0 {
            return Ok(Self::zero());
        }
        let mode = mean.floor() as u64;
        let w = Window::build(mode, TRUNCATION_TOL, |n| mean / (n + 1) as f64, |n| n as f64 / mean)?;
        Ok(Self::from_window(w))
    }

    /// Smallest `n` with `F(n) > u`, for `u` in `[0, 1)`.
    pub fn quantile(&self, u: f64) -> u64 {
        let idx = self.cdf.partition_point(|&c| c <= u);
        self.lo + idx.min(self.cdf.len() - 1) as u64
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        self.quantile(rng.random::<f64>())
    }

    pub fn probability(&self, n: u64) -> f64 {
        if n < self.lo {
            return 0.0;
        }
        self.pmf.get((n - self.lo) as usize).copied().unwrap_or(0.0)
    }

    pub fn mean(&self) -> f64 {
        self.pmf
            .iter()
            .enumerate()
            .map(|(i, p)| (self.lo + i as u64) as f64 * p)
            .sum()
    }

    /// Support covered by the table, inclusive.
    pub fn support(&self) -> (u64, u64) {
        (self.lo, self.lo + self.pmf.len() as u64 - 1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Plain forward summation of `phi^n / g(n)!`, independent of the
    /// mode-centred window.
    fn brute_series(g: &RateFunction, phi: f64, terms: u64) -> (f64, f64) {
        let mut t = 1.0;
        let mut z = 1.0;
        let mut m = 0.0;
        for n in 1..=terms {
            t *= phi / g.eval(n);
            z += t;
            m += n as f64 * t;
        }
        (z, m / z)
    }

    #[test]
    fn partition_examples() {
        let id = GrandCanonical::new(RateFunction::identity());
        assert!((id.log_partition(2.0).unwrap() - 2.0).abs() < 1e-12);

        let rat = GrandCanonical::new(RateFunction::rational());
        let (z, _) = brute_series(rat.rate(), 0.5, 200);
        assert!((z.ln() - 4f64.ln()).abs() < 1e-12);
        assert!((rat.log_partition(0.5).unwrap() - z.ln()).abs() < 1e-12);

        let sq = GrandCanonical::new(RateFunction::power(0.5).unwrap());
        let lz = sq.log_partition(100.0).unwrap();
        assert!((lz / 5000.0 - 1.0).abs() < 0.05, "ln Z = {lz}");
    }

    #[test]
    fn log_partition_against_log_space_oracle() {
        // independent log-sum-exp over all terms from n = 0
        let g = RateFunction::power(0.5).unwrap();
        let phi: f64 = 100.0;
        let mut logs = Vec::new();
        let mut lt = 0.0;
        logs.push(0.0);
        for n in 1..40_000u64 {
            lt += phi.ln() - g.eval(n).ln();
            logs.push(lt);
        }
        let m = logs.iter().cloned().fold(f64::MIN, f64::max);
        let oracle = m + logs.iter().map(|l| (l - m).exp()).sum::<f64>().ln();
        let got = GrandCanonical::new(g).log_partition(phi).unwrap();
        assert!((got - oracle).abs() < 1e-8 * oracle, "{got} vs {oracle}");
    }

    #[test]
    fn mean_and_fugacity_examples() {
        let id = GrandCanonical::new(RateFunction::identity());
        assert!((id.mean_density(3.0).unwrap() - 3.0).abs() < 1e-12);
        assert!((id.fugacity(1.5) - 1.5).abs() < 1e-12);
        assert_eq!(id.fugacity(0.0), 0.0);
        assert_eq!(id.mean_density(0.0).unwrap(), 0.0);

        let rat = GrandCanonical::new(RateFunction::rational());
        let (_, r) = brute_series(rat.rate(), 0.5, 400);
        assert!((r - 2.0).abs() < 1e-10);
        assert!((rat.mean_density(0.5).unwrap() - 2.0).abs() < 1e-10);
        assert!((rat.fugacity(2.0) - 0.5).abs() < 1e-11);
    }

    #[test]
    fn domain_errors() {
        let rat = GrandCanonical::new(RateFunction::rational());
        assert!(matches!(rat.log_partition(1.0), Err(Error::Domain { .. })));
        assert!(rat.mean_density(1.2).is_err());
        assert!(rat.sample_occupancy(1.0, &mut ChaCha8Rng::seed_from_u64(1)).is_err());
        assert!(GrandCanonical::new(RateFunction::identity()).mean_density(-1.0).is_err());
    }

    #[test]
    fn mean_rate_equals_fugacity() {
        for gc in [
            GrandCanonical::new(RateFunction::power(0.25).unwrap()),
            GrandCanonical::new(RateFunction::geometric()),
        ] {
            for phi in [0.1, 0.5, 0.9] {
                assert!((gc.mean_rate(phi).unwrap() - phi).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn derivative_matches_finite_difference() {
        let gc = GrandCanonical::new(RateFunction::rational());
        for rho in [0.0, 0.3, 1.0, 4.0] {
            let h = 1e-5;
            let fd = (gc.fugacity(rho + h) - gc.fugacity((rho - h).max(0.0))) / (rho + h - (rho - h).max(0.0));
            let d = gc.fugacity_derivative(rho);
            assert!((fd - d).abs() < 1e-5, "rho {rho}: {fd} vs {d}");
            assert!(d >= 0.0 && d <= gc.lipschitz() + 1e-12);
        }
    }

    #[test]
    fn sampling_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let id = GrandCanonical::new(RateFunction::identity());
        let m = id.marginal(3.0).unwrap();
        let mean = (0..100_000).map(|_| m.sample(&mut rng) as f64).sum::<f64>() / 1e5;
        assert!((2.95..=3.05).contains(&mean), "{mean}");

        let big = id.marginal(2048.0).unwrap();
        let mean = (0..1000).map(|_| big.sample(&mut rng) as f64).sum::<f64>() / 1e3;
        assert!((mean / 2048.0 - 1.0).abs() < 0.01, "{mean}");

        for _ in 0..100 {
            assert_eq!(id.sample_occupancy(0.0, &mut rng).unwrap(), 0);
        }
    }

    #[test]
    fn poisson_marginal() {
        let p = Marginal::poisson(7.5).unwrap();
        assert!((p.mean() - 7.5).abs() < 1e-12);
        let q = Marginal::poisson(0.0).unwrap();
        assert_eq!(q.quantile(0.999), 0);
    }

    #[test]
    fn quantile_edges() {
        let gc = GrandCanonical::new(RateFunction::identity());
        let m = gc.marginal(1.0).unwrap();
        assert_eq!(m.quantile(0.0), 0);
        let (_, hi) = m.support();
        assert!(m.quantile(1.0 - 1e-17) <= hi);
    }
}
