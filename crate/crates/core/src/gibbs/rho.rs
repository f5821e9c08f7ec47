//! Griddy-Gibbs update for the spatial autocorrelation `rho`.
//!
//! `(-1, 1)` is cut into equal cells. Cell `k` is chosen with probability
//! proportional to the prior mass of the cell times the conditional
//! likelihood at the cell midpoint; `rho` is then drawn from the prior
//! restricted to that cell by inverting the arcsine antiderivative. With a
//! likelihood that is constant in `rho` the update is an exact prior draw.

use rand::Rng;

use crate::model::rho_prior_antiderivative;

#[derive(Debug, Clone)]
pub struct RhoGrid {
    edges: Vec<f64>,
    midpoints: Vec<f64>,
    log_mass: Vec<f64>,
    /// `0.5 log det(diag(r) - rho W*)` at each midpoint.
    half_logdet: Vec<f64>,
}

impl RhoGrid {
    /// Grid without a log-determinant term.
    pub fn flat(size: usize) -> Self {
        assert!(size >= 1);
        let edges: Vec<f64> = (0..=size)
            .map(|k| -1.0 + 2.0 * k as f64 / size as f64)
            .collect();
        let midpoints = edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
        let log_mass = edges
            .windows(2)
            .map(|w| (rho_prior_antiderivative(w[1]) - rho_prior_antiderivative(w[0])).ln())
            .collect();
        Self {
            edges,
            midpoints,
            log_mass,
            half_logdet: vec![0.0; size],
        }
    }

    /// Grid for a CAR precision `diag(r) - rho W*` whose symmetrically
    /// scaled kernel `diag(r)^-1/2 W* diag(r)^-1/2` has the given
    /// eigenvalues.
    pub fn for_car(size: usize, scaled_eigenvalues: &[f64], row_sums: &[f64]) -> Self {
        let mut grid = Self::flat(size);
        let log_r: f64 = row_sums.iter().map(|r| r.ln()).sum();
        grid.half_logdet = grid
            .midpoints
            .iter()
            .map(|&rho| {
                0.5 * (log_r
                    + scaled_eigenvalues
                        .iter()
                        .map(|l| (1.0 - rho * l).ln())
                        .sum::<f64>())
            })
            .collect();
        grid
    }

    pub fn len(&self) -> usize {
        self.midpoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.midpoints.is_empty()
    }

    pub fn midpoints(&self) -> &[f64] {
        &self.midpoints
    }

    pub fn half_logdet(&self) -> &[f64] {
        &self.half_logdet
    }

    /// Draw `rho` given the log-likelihood of each midpoint (excluding the
    /// log-determinant, which the grid adds itself).
    pub fn draw_with<R: Rng + ?Sized>(&self, log_lik: &[f64], rng: &mut R) -> f64 {
        debug_assert_eq!(log_lik.len(), self.len());
        let lw: Vec<f64> = (0..self.len())
            .map(|k| self.log_mass[k] + self.half_logdet[k] + log_lik[k])
            .collect();
        let max = lw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let weights: Vec<f64> = lw.iter().map(|v| (v - max).exp()).collect();
        let total: f64 = weights.iter().sum();
        let target = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut cell = self.len() - 1;
        for (k, w) in weights.iter().enumerate() {
            acc += w;
            if target < acc {
                cell = k;
                break;
            }
        }
        let lo = self.edges[cell].asin();
        let hi = self.edges[cell + 1].asin();
        let u: f64 = rng.random();
        let bound = 1.0 - f64::EPSILON;
        (lo + u * (hi - lo)).sin().clamp(-bound, bound)
    }

    /// Draw `rho | phi, sigma2_u` for the CAR log-density
    /// `0.5 log det(Q0(rho)) - (phi' diag(r) phi - rho phi' W* phi) / (2 sigma2_u)`.
    pub fn draw_car<R: Rng + ?Sized>(
        &self,
        phi_d_phi: f64,
        phi_w_phi: f64,
        sigma2_u: f64,
        rng: &mut R,
    ) -> f64 {
        let ll: Vec<f64> = self
            .midpoints
            .iter()
            .map(|&rho| -(phi_d_phi - rho * phi_w_phi) / (2.0 * sigma2_u))
            .collect();
        self.draw_with(&ll, rng)
    }
}
