use proptest::prelude::*;
use zrp_core::pde::{solve, SolverConfig};
use zrp_core::{DefectSet, DefectSpec, GrandCanonical, InitialCondition, Profile, RateFunction};

fn piecewise(values: Vec<f64>) -> Profile {
    let k = values.len();
    Profile::Piecewise { breaks: (0..k).map(|i| i as f64 / k as f64).collect(), values }
}

const TIMES: [f64; 3] = [0.002, 0.01, 0.03];

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn solutions_stay_ordered(
        base in prop::collection::vec(0.0f64..3.0, 1..6),
        bump in prop::collection::vec(0.0f64..2.0, 1..6),
        atom in 0.0f64..0.5,
        beta in prop::sample::select(vec![0.5, 1.0, 2.0]),
    ) {
        let gc = GrandCanonical::new(RateFunction::power(0.5).unwrap());
        let d = DefectSet::new(vec![DefectSpec::new(0.5, beta, 2.0)], gc.family()).unwrap();
        let k = base.len().max(bump.len());
        let lo: Vec<f64> = (0..k).map(|i| base[i % base.len()]).collect();
        let hi: Vec<f64> = lo.iter().enumerate().map(|(i, v)| v + bump[i % bump.len()]).collect();
        let cfg = SolverConfig::new(64, 0.03, TIMES.to_vec());
        let a = solve(&gc, &d, &InitialCondition::new(piecewise(lo)).with_atoms(vec![atom]).with_c0(1.0), &cfg).unwrap();
        let b = solve(&gc, &d, &InitialCondition::new(piecewise(hi)).with_atoms(vec![atom]).with_c0(1.0), &cfg).unwrap();
        for (x, y) in a.snapshots.iter().zip(&b.snapshots) {
            for (p, q) in x.rho.iter().zip(&y.rho) {
                prop_assert!(*p <= q + 1e-10);
            }
            if let (Some(m), Some(n)) = (x.atoms.get(&0), y.atoms.get(&0)) {
                prop_assert!(*m <= n + 1e-10);
            }
        }
    }

    #[test]
    fn mass_is_conserved_without_pins(
        values in prop::collection::vec(0.0f64..4.0, 1..8),
        atom in 0.0f64..1.0,
        bounded in any::<bool>(),
    ) {
        let (gc, d) = if bounded {
            let gc = GrandCanonical::new(RateFunction::rational());
            let d = DefectSet::new(vec![DefectSpec::new(0.25, 0.0, 2.0)], gc.family()).unwrap();
            (gc, d)
        } else {
            let gc = GrandCanonical::new(RateFunction::identity());
            let d = DefectSet::new(vec![DefectSpec::new(0.25, 1.0, 2.0), DefectSpec::new(0.75, 0.5, 3.0)], gc.family()).unwrap();
            (gc, d)
        };
        let atoms = if bounded { vec![0.0] } else { vec![atom, 0.0] };
        let init = InitialCondition::new(piecewise(values)).with_atoms(atoms);
        let sol = solve(&gc, &d, &init, &SolverConfig::new(64, 0.03, TIMES.to_vec())).unwrap();
        let m0 = sol.mass_audit.initial;
        for s in &sol.snapshots {
            prop_assert!((s.total_mass() - m0).abs() < 1e-10, "{} vs {}", s.total_mass(), m0);
            prop_assert!(s.rho.iter().all(|r| *r >= 0.0));
            prop_assert!(s.atoms.values().all(|m| *m >= 0.0));
        }
    }

    #[test]
    fn bounded_threshold_and_complementarity(
        values in prop::collection::vec(0.0f64..8.0, 1..8),
        lambda in 1.2f64..4.0,
    ) {
        let gc = GrandCanonical::new(RateFunction::rational());
        let d = DefectSet::new(vec![DefectSpec::new(0.5, 0.0, lambda)], gc.family()).unwrap();
        let sol = solve(&gc, &d, &InitialCondition::new(piecewise(values)), &SolverConfig::new(64, 0.03, TIMES.to_vec())).unwrap();
        let node = d.grid_nodes(64).unwrap()[0];
        for s in &sol.snapshots {
            let phi = gc.fugacity(s.rho[node]);
            prop_assert!(phi <= 1.0 / lambda + 1e-8);
            prop_assert!(s.atoms[&0] * (1.0 / lambda - phi) <= 1e-6);
        }
    }
}
