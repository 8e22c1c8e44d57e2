use rayon::prelude::*;

use crate::thermo::GrandCanonical;

/// Minimum number of table intervals.
const MIN_INTERVALS: usize = 4096;

/// `Phi` as used inside the time loop.
///
/// The identity rate is evaluated exactly. Other rates use a cubic Hermite
/// table of `Phi` and `Phi' = phi / sigma^2(phi)` on `[0, rho_max]`; queries
/// beyond the table fall back to the series inversion.
#[derive(Debug, Clone)]
pub struct FluxTable {
    gc: GrandCanonical,
    table: Option<Table>,
}

#[derive(Debug, Clone)]
struct Table {
    h: f64,
    rho_max: f64,
    phi: Vec<f64>,
    dphi: Vec<f64>,
}

impl FluxTable {
    pub fn new(gc: &GrandCanonical, rho_max: f64) -> Self {
        if gc.rate().is_identity() {
            return FluxTable { gc: gc.clone(), table: None };
        }
        let rho_max = rho_max.max(1.0);
        let intervals = MIN_INTERVALS.max((rho_max * 256.0).ceil() as usize);
        let h = rho_max / intervals as f64;
        let g1 = gc.rate().eval(1);
        let (phi, dphi): (Vec<f64>, Vec<f64>) = (0..=intervals)
            .into_par_iter()
            .map(|i| {
                let phi = gc.fugacity(i as f64 * h);
                let dphi = match gc.variance(phi) {
                    Ok(var) if phi > 0.0 => phi / var,
                    _ => g1,
                };
                (phi, dphi)
            })
            .unzip();
        FluxTable { gc: gc.clone(), table: Some(Table { h, rho_max, phi, dphi }) }
    }

    pub fn grand_canonical(&self) -> &GrandCanonical {
        &self.gc
    }

    pub fn is_exact(&self) -> bool {
        self.table.is_none()
    }

    #[inline]
    pub fn eval(&self, rho: f64) -> f64 {
        let rho = rho.max(0.0);
        let Some(t) = &self.table else { return rho };
        if rho >= t.rho_max {
            return self.gc.fugacity(rho);
        }
        let x = rho / t.h;
        let i = (x as usize).min(t.phi.len() - 2);
        let s = x - i as f64;
        let s2 = s * s;
        let s3 = s2 * s;
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        h00 * t.phi[i] + h10 * t.h * t.dphi[i] + h01 * t.phi[i + 1] + h11 * t.h * t.dphi[i + 1]
    }
}
