//! Product measures on the lattice: the invariant family `R^N_c` and the
//! local-equilibrium initial measures built from a macroscopic profile.

use std::collections::HashMap;

use rand::Rng;
use serde::Serialize;

use crate::defects::{DefectClass, DefectSet};
use crate::error::{Error, Result};
use crate::profile::Profile;
use crate::rate::RateFamily;
use crate::thermo::{GrandCanonical, Marginal};

/// Law of one site's initial occupancy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "law", content = "param", rename_all = "lowercase")]
pub enum SiteLaw {
    /// Grand-canonical `P_phi`.
    Fugacity(f64),
    /// Ordinary Poisson with the given mean (bounded-rate atoms).
    Poisson(f64),
}

impl SiteLaw {
    pub fn marginal(&self, gc: &GrandCanonical) -> Result<Marginal> {
        match *self {
            SiteLaw::Fugacity(phi) => gc.marginal(phi),
            SiteLaw::Poisson(mean) => Marginal::poisson(mean),
        }
    }

    fn key(&self) -> (u8, u64) {
        match *self {
            SiteLaw::Fugacity(x) => (0, x.to_bits()),
            SiteLaw::Poisson(x) => (1, x.to_bits()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InvariantMeasureSpec {
    pub c: f64,
    pub n: usize,
    pub fugacities: Vec<f64>,
}

impl InvariantMeasureSpec {
    pub fn laws(&self) -> Vec<SiteLaw> {
        self.fugacities.iter().map(|&f| SiteLaw::Fugacity(f)).collect()
    }
}

/// `R^N_c`: fugacity `Phi(c)` at regular sites and `lambda_j N^beta_j Phi(c)`
/// at defect sites.
pub fn build_invariant(
    gc: &GrandCanonical,
    c: f64,
    n: usize,
    defects: &DefectSet,
) -> Result<InvariantMeasureSpec> {
    let sites = defects.lattice_sites(n)?;
    let base = gc.fugacity(c);
    let mut fugacities = vec![base; n];
    for ((j, d, _), &k) in defects.iter().zip(&sites) {
        let phi = d.divisor(n) * base;
        if !(phi < gc.radius()) {
            return Err(Error::FugacityOverflow { defect: j, site: k, phi, radius: gc.radius() });
        }
        fugacities[k] = phi;
    }
    Ok(InvariantMeasureSpec { c, n, fugacities })
}

/// Local-equilibrium product measure for the profile `rho0` with initial
/// atoms `atoms[j]` at critical defects (entries at other defects are
/// ignored; an empty slice means no atoms).
///
/// Regular site `k` uses the cell average of `rho0` over `[(k-1)/N, k/N]`.
pub fn build_local_equilibrium(
    gc: &GrandCanonical,
    rho0: &Profile,
    atoms: &[f64],
    c0: f64,
    n: usize,
    defects: &DefectSet,
) -> Result<Vec<SiteLaw>> {
    if !atoms.is_empty() && atoms.len() != defects.len() {
        return Err(Error::config("atoms", "need one entry per defect"));
    }
    let sites = defects.lattice_sites(n)?;
    let nf = n as f64;
    let mut cache: HashMap<u64, f64> = HashMap::new();
    let mut laws: Vec<SiteLaw> = (0..n)
        .map(|k| {
            let rho = (nf * rho0.integral((k as f64 - 1.0) / nf, k as f64 / nf)).max(0.0);
            let phi = *cache.entry(rho.to_bits()).or_insert_with(|| gc.fugacity(rho));
            SiteLaw::Fugacity(phi)
        })
        .collect();
    for ((j, d, class), &k) in defects.iter().zip(&sites) {
        let m0 = atoms.get(j).copied().unwrap_or(0.0);
        let law = match (gc.family(), class) {
            (_, DefectClass::Sub) => SiteLaw::Fugacity(0.0),
            (RateFamily::PowerAlpha(alpha), DefectClass::Critical) => {
                SiteLaw::Fugacity((nf * m0).powf(alpha))
            }
            (RateFamily::Bounded, DefectClass::Critical) => SiteLaw::Poisson(m0 * nf),
            (_, DefectClass::Super) => SiteLaw::Fugacity(d.divisor(n) * gc.fugacity(c0)),
        };
        if let SiteLaw::Fugacity(phi) = law {
            if !(phi < gc.radius()) {
                return Err(Error::FugacityOverflow { defect: j, site: k, phi, radius: gc.radius() });
            }
        }
        laws[k] = law;
    }
    Ok(laws)
}

/// Independent per-site draws from the given laws.
pub fn sample_configuration<R: Rng + ?Sized>(
    gc: &GrandCanonical,
    laws: &[SiteLaw],
    rng: &mut R,
) -> Result<Vec<u64>> {
    let mut cache: HashMap<(u8, u64), Marginal> = HashMap::new();
    let mut occ = Vec::with_capacity(laws.len());
    for (site, law) in laws.iter().enumerate() {
        let m = match cache.get(&law.key()) {
            Some(m) => m,
            None => {
                let m = law.marginal(gc).map_err(|_| match *law {
                    SiteLaw::Fugacity(phi) => Error::SiteOverflow { site, phi, radius: gc.radius() },
                    SiteLaw::Poisson(mean) => Error::SiteOverflow { site, phi: mean, radius: f64::INFINITY },
                })?;
                cache.entry(law.key()).or_insert(m)
            }
        };
        occ.push(m.sample(rng));
    }
    Ok(occ)
}

/// Two sitewise-ordered configurations drawn with a shared uniform per
/// site from `lower[k] <= upper[k]` stochastically ordered laws.
pub fn sample_ordered_pair<R: Rng + ?Sized>(
    gc: &GrandCanonical,
    lower: &[SiteLaw],
    upper: &[SiteLaw],
    rng: &mut R,
) -> Result<(Vec<u64>, Vec<u64>)> {
    assert_eq!(lower.len(), upper.len());
    let mut a = Vec::with_capacity(lower.len());
    let mut b = Vec::with_capacity(lower.len());
    for (l, u) in lower.iter().zip(upper) {
        let x = rng.random::<f64>();
        a.push(l.marginal(gc)?.quantile(x));
        b.push(u.marginal(gc)?.quantile(x));
    }
    Ok((a, b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::defects::DefectSpec;
    use crate::rate::RateFunction;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn identity() -> GrandCanonical {
        GrandCanonical::new(RateFunction::identity())
    }

    #[test]
    fn invariant_fugacities() {
        let gc = identity();
        let d = DefectSet::new(vec![DefectSpec::new(0.0, 1.0, 2.0)], gc.family()).unwrap();
        let spec = build_invariant(&gc, 1.0, 100, &d).unwrap();
        assert!((spec.fugacities[0] - 200.0).abs() < 1e-12);
        assert!(spec.fugacities[1..].iter().all(|&f| (f - 1.0).abs() < 1e-12));

        let spec = build_invariant(&gc, 0.0, 50, &DefectSet::empty()).unwrap();
        assert!(spec.fugacities.iter().all(|&f| f == 0.0));
    }

    #[test]
    fn invariant_overflow_for_bounded_rates() {
        let gc = GrandCanonical::new(RateFunction::rational());
        let d = DefectSet::new(vec![DefectSpec::new(0.25, 0.0, 2.0)], gc.family()).unwrap();
        let c = gc.mean_density(0.6).unwrap();
        match build_invariant(&gc, c, 64, &d) {
            Err(Error::FugacityOverflow { defect: 0, site: 16, phi, .. }) => {
                assert!((phi - 1.2).abs() < 1e-9)
            }
            other => panic!("unexpected {other:?}"),
        }
        // just below the threshold R(1/2) the measure exists
        let c_ok = gc.mean_density(0.49).unwrap();
        assert!(build_invariant(&gc, c_ok, 64, &d).is_ok());
    }

    #[test]
    fn local_equilibrium_examples() {
        let gc = identity();
        let flat = build_local_equilibrium(&gc, &Profile::constant(1.0), &[], 1.0, 8, &DefectSet::empty()).unwrap();
        assert!(flat.iter().all(|l| matches!(l, SiteLaw::Fugacity(f) if (f - 1.0).abs() < 1e-12)));

        let crit = DefectSet::new(vec![DefectSpec::new(0.5, 1.0, 3.0)], gc.family()).unwrap();
        let laws = build_local_equilibrium(&gc, &Profile::constant(1.0), &[2.0], 1.0, 100, &crit).unwrap();
        assert_eq!(laws[50], SiteLaw::Fugacity(200.0));

        let sup = DefectSet::new(vec![DefectSpec::new(0.0, 2.0, 1.0)], gc.family()).unwrap();
        let laws = build_local_equilibrium(&gc, &Profile::constant(1.0), &[], 1.0, 10, &sup).unwrap();
        assert!(matches!(laws[0], SiteLaw::Fugacity(f) if (f - 100.0).abs() < 1e-9));

        let sub = DefectSet::new(vec![DefectSpec::new(0.3, 0.5, 1.0)], gc.family()).unwrap();
        let laws = build_local_equilibrium(&gc, &Profile::constant(1.0), &[], 1.0, 10, &sub).unwrap();
        assert_eq!(laws[3], SiteLaw::Fugacity(0.0));
    }

    #[test]
    fn bounded_critical_sites_get_poisson_atoms() {
        let gc = GrandCanonical::new(RateFunction::rational());
        let d = DefectSet::new(vec![DefectSpec::new(0.5, 0.0, 2.0)], gc.family()).unwrap();
        let laws = build_local_equilibrium(&gc, &Profile::constant(3.0), &[0.25], 1.0, 64, &d).unwrap();
        assert_eq!(laws[32], SiteLaw::Poisson(16.0));
        assert!(matches!(laws[0], SiteLaw::Fugacity(f) if (f - 0.6).abs() < 1e-10));
    }

    #[test]
    fn cell_average_uses_left_cell() {
        let gc = identity();
        let p = Profile::Piecewise { breaks: vec![0.0, 0.5], values: vec![2.0, 0.0] };
        let laws = build_local_equilibrium(&gc, &p, &[], 1.0, 4, &DefectSet::empty()).unwrap();
        // site k averages over [(k-1)/4, k/4]
        let phis: Vec<f64> = laws.iter().map(|l| match l { SiteLaw::Fugacity(f) => *f, _ => unreachable!() }).collect();
        assert_eq!(phis, vec![0.0, 2.0, 2.0, 0.0]);
    }

    #[test]
    fn ordered_pair_is_sitewise_ordered() {
        let gc = identity();
        let lo = build_invariant(&gc, 0.5, 256, &DefectSet::empty()).unwrap().laws();
        let hi = build_invariant(&gc, 2.0, 256, &DefectSet::empty()).unwrap().laws();
        let (a, b) = sample_ordered_pair(&gc, &lo, &hi, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert!(a.iter().zip(&b).all(|(x, y)| x <= y));
    }
}
