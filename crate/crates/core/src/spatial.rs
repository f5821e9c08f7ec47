//! Spatial weight system and exploratory spatial diagnostics.
//!
//! The raw kernel combines distance decay with sign-screened contiguity,
//!
//! ```text
//! w*_ij = exp(-d_ij)^a * delta_ij^b,     w*_ii = 0
//! w_ij  = w*_ij / r_i,                   r_i = sum_j w*_ij
//! M     = diag(1 / r_i)
//! ```
//!
//! and the proper CAR field `phi ~ N(0, sigma2_u (I - rho W)^-1 M)` has the
//! symmetric precision `(diag(r) - rho W*) / sigma2_u`.

use std::fmt;

use nalgebra::{Cholesky, DMatrix};
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpatialError {
    #[error("no rate available for area index {0}")]
    MissingRate(usize),
    #[error("every area was pruned from the weight system; no usable spatial structure")]
    AllPruned,
    #[error("rho = {0} is outside the open interval (-1, 1)")]
    RhoOutOfRange(f64),
    #[error("variance parameter {0} is not strictly positive")]
    NonPositiveVariance(f64),
    #[error("CAR precision is not positive definite")]
    NotPositiveDefinite,
    #[error("variogram subset '{subset}' has {n} areas; at least 2 are required")]
    SubsetTooSmall { subset: VariogramSubset, n: usize },
    #[error("rates have zero variance; Moran's I is undefined")]
    DegenerateRates,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

/// Exponents of the weight kernel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WeightConfig {
    pub exponent_a: f64,
    pub exponent_b: f64,
}

impl Default for WeightConfig {
    fn default() -> Self {
        Self {
            exponent_a: 1.0,
            exponent_b: 1.0,
        }
    }
}

/// Planar Euclidean distances between `(latitude, longitude)` centroids, in
/// coordinate degrees.
pub fn distance_matrix(coords: &[(f64, f64)]) -> DMatrix<f64> {
    let n = coords.len();
    let mut d = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let dx = coords[i].0 - coords[j].0;
            let dy = coords[i].1 - coords[j].1;
            let dij = (dx * dx + dy * dy).sqrt();
            d[(i, j)] = dij;
            d[(j, i)] = dij;
        }
    }
    d
}

/// Binary contiguity restricted to neighbour pairs whose rates share a strict
/// sign (`y_i * y_j > 0`).
pub fn contiguity_matrix(
    n: usize,
    adjacency: &[(usize, usize)],
    rates: &[f64],
) -> Result<DMatrix<f64>, SpatialError> {
    let mut delta = DMatrix::zeros(n, n);
    for &(i, j) in adjacency {
        if i >= n || j >= n {
            return Err(SpatialError::DimensionMismatch(format!(
                "adjacency pair ({i}, {j}) outside {n} areas"
            )));
        }
        let yi = *rates.get(i).ok_or(SpatialError::MissingRate(i))?;
        let yj = *rates.get(j).ok_or(SpatialError::MissingRate(j))?;
        if !yi.is_finite() {
            return Err(SpatialError::MissingRate(i));
        }
        if !yj.is_finite() {
            return Err(SpatialError::MissingRate(j));
        }
        if i != j && yi * yj > 0.0 {
            delta[(i, j)] = 1.0;
            delta[(j, i)] = 1.0;
        }
    }
    Ok(delta)
}

/// Raw kernel `W*` before pruning. The diagonal is zero.
pub fn raw_weights(d: &DMatrix<f64>, delta: &DMatrix<f64>, config: &WeightConfig) -> DMatrix<f64> {
    let n = d.nrows();
    let mut w = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            if i != j {
                w[(i, j)] = (-d[(i, j)]).exp().powf(config.exponent_a)
                    * delta[(i, j)].powf(config.exponent_b);
            }
        }
    }
    w
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PruneReason {
    ZeroRowSum,
    ZeroColumnSum,
    ZeroRowAndColumnSum,
}

impl fmt::Display for PruneReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PruneReason::ZeroRowSum => "zero_row_sum",
            PruneReason::ZeroColumnSum => "zero_column_sum",
            PruneReason::ZeroRowAndColumnSum => "zero_row_and_column_sum",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PrunedArea {
    pub area_id: String,
    /// Index into the input ordering.
    pub index: usize,
    /// 1-based pruning pass.
    pub pass: usize,
    pub reason: PruneReason,
}

/// The pruned, row-standardized weight system over the kept areas.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightSystem {
    pub kept_ids: Vec<String>,
    /// Input indices of the kept areas, in kept order.
    pub kept_index: Vec<usize>,
    pub w_star: DMatrix<f64>,
    pub w: DMatrix<f64>,
    pub row_sums: Vec<f64>,
    /// Diagonal of `M`.
    pub m_diag: Vec<f64>,
    pub pruned: Vec<PrunedArea>,
    /// Row sums of the unpruned kernel, indexed like the input.
    pub initial_row_sums: Vec<f64>,
}

impl WeightSystem {
    pub fn len(&self) -> usize {
        self.kept_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kept_ids.is_empty()
    }

    /// `diag(r) - rho W*`, the CAR precision times `sigma2_u`.
    pub fn unscaled_precision(&self, rho: f64) -> DMatrix<f64> {
        let mut q = -rho * &self.w_star;
        for (i, r) in self.row_sums.iter().enumerate() {
            q[(i, i)] = *r;
        }
        q
    }

    /// Assemble a weight system directly from a symmetric kernel over areas
    /// that are all kept.
    pub fn from_kernel(ids: Vec<String>, w_star: DMatrix<f64>) -> Result<Self, SpatialError> {
        let n = ids.len();
        if w_star.nrows() != n || w_star.ncols() != n {
            return Err(SpatialError::DimensionMismatch(format!(
                "kernel is {}x{}, expected {n}x{n}",
                w_star.nrows(),
                w_star.ncols()
            )));
        }
        let row_sums: Vec<f64> = (0..n).map(|i| w_star.row(i).sum()).collect();
        if row_sums.iter().any(|r| !(*r > 0.0)) {
            return Err(SpatialError::AllPruned);
        }
        let mut w = w_star.clone();
        for i in 0..n {
            for j in 0..n {
                w[(i, j)] /= row_sums[i];
            }
        }
        Ok(Self {
            kept_ids: ids,
            kept_index: (0..n).collect(),
            m_diag: row_sums.iter().map(|r| 1.0 / r).collect(),
            initial_row_sums: row_sums.clone(),
            row_sums,
            w_star,
            w,
            pruned: Vec::new(),
        })
    }
}

/// Build `W*`, prune areas with a zero row or column sum until no such area
/// remains, then row-standardize.
pub fn build_weight_system(
    ids: &[String],
    d: &DMatrix<f64>,
    delta: &DMatrix<f64>,
    config: &WeightConfig,
) -> Result<WeightSystem, SpatialError> {
    let n = ids.len();
    if d.shape() != (n, n) || delta.shape() != (n, n) {
        return Err(SpatialError::DimensionMismatch(format!(
            "{} ids, distance {:?}, contiguity {:?}",
            n,
            d.shape(),
            delta.shape()
        )));
    }
    let raw = raw_weights(d, delta, config);
    let initial_row_sums: Vec<f64> = (0..n).map(|i| raw.row(i).sum()).collect();

    let mut alive = vec![true; n];
    let mut pruned = Vec::new();
    let mut pass = 0;
    loop {
        pass += 1;
        let mut dropped = Vec::new();
        for i in (0..n).filter(|&i| alive[i]) {
            let row: f64 = (0..n).filter(|&j| alive[j]).map(|j| raw[(i, j)]).sum();
            let col: f64 = (0..n).filter(|&j| alive[j]).map(|j| raw[(j, i)]).sum();
            let reason = match (row > 0.0, col > 0.0) {
                (true, true) => continue,
                (false, true) => PruneReason::ZeroRowSum,
                (true, false) => PruneReason::ZeroColumnSum,
                (false, false) => PruneReason::ZeroRowAndColumnSum,
            };
            dropped.push((i, reason));
        }
        if dropped.is_empty() {
            break;
        }
        for (i, reason) in dropped {
            alive[i] = false;
            pruned.push(PrunedArea {
                area_id: ids[i].clone(),
                index: i,
                pass,
                reason,
            });
        }
    }

    let kept_index: Vec<usize> = (0..n).filter(|&i| alive[i]).collect();
    if kept_index.is_empty() {
        return Err(SpatialError::AllPruned);
    }
    let k = kept_index.len();
    let w_star = DMatrix::from_fn(k, k, |a, b| raw[(kept_index[a], kept_index[b])]);
    let row_sums: Vec<f64> = (0..k).map(|a| w_star.row(a).sum()).collect();
    let w = DMatrix::from_fn(k, k, |a, b| w_star[(a, b)] / row_sums[a]);
    Ok(WeightSystem {
        kept_ids: kept_index.iter().map(|&i| ids[i].clone()).collect(),
        kept_index,
        w_star,
        w,
        m_diag: row_sums.iter().map(|r| 1.0 / r).collect(),
        row_sums,
        pruned,
        initial_row_sums,
    })
}

fn check_rho(rho: f64) -> Result<(), SpatialError> {
    if rho.is_finite() && rho.abs() < 1.0 {
        Ok(())
    } else {
        Err(SpatialError::RhoOutOfRange(rho))
    }
}

/// CAR precision `Q = (diag(r) - rho W*) / sigma2_u`, verified positive
/// definite.
pub fn car_precision(
    ws: &WeightSystem,
    sigma2_u: f64,
    rho: f64,
) -> Result<DMatrix<f64>, SpatialError> {
    check_rho(rho)?;
    if !(sigma2_u > 0.0) || !sigma2_u.is_finite() {
        return Err(SpatialError::NonPositiveVariance(sigma2_u));
    }
    let q = ws.unscaled_precision(rho) / sigma2_u;
    if Cholesky::new(q.clone()).is_none() {
        return Err(SpatialError::NotPositiveDefinite);
    }
    Ok(q)
}

/// CAR covariance in its unsymmetrized form `sigma2_u (I - rho W)^-1 M`.
pub fn car_covariance(
    ws: &WeightSystem,
    sigma2_u: f64,
    rho: f64,
) -> Result<DMatrix<f64>, SpatialError> {
    check_rho(rho)?;
    let n = ws.len();
    let a = DMatrix::identity(n, n) - rho * &ws.w;
    let inv = a
        .lu()
        .try_inverse()
        .ok_or(SpatialError::NotPositiveDefinite)?;
    let m = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(ws.m_diag.clone()));
    Ok(sigma2_u * inv * m)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum VariogramSubset {
    All,
    UndercountOnly,
    OvercountOnly,
}

impl VariogramSubset {
    pub const ALL: [VariogramSubset; 3] = [
        VariogramSubset::All,
        VariogramSubset::UndercountOnly,
        VariogramSubset::OvercountOnly,
    ];

    fn admits(self, y: f64) -> bool {
        match self {
            VariogramSubset::All => true,
            VariogramSubset::UndercountOnly => y > 0.0,
            VariogramSubset::OvercountOnly => y < 0.0,
        }
    }
}

impl fmt::Display for VariogramSubset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            VariogramSubset::All => "all",
            VariogramSubset::UndercountOnly => "undercount",
            VariogramSubset::OvercountOnly => "overcount",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VariogramPoint {
    pub distance: f64,
    pub sq_diff: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VariogramCloud {
    pub subset: VariogramSubset,
    pub points: Vec<VariogramPoint>,
}

/// Squared rate differences against distance over every unordered pair in
/// the chosen subset.
pub fn variogram_cloud(
    rates: &[f64],
    d: &DMatrix<f64>,
    subset: VariogramSubset,
) -> Result<VariogramCloud, SpatialError> {
    if d.shape() != (rates.len(), rates.len()) {
        return Err(SpatialError::DimensionMismatch(format!(
            "{} rates, distance {:?}",
            rates.len(),
            d.shape()
        )));
    }
    let members: Vec<usize> = (0..rates.len())
        .filter(|&i| subset.admits(rates[i]))
        .collect();
    if members.len() < 2 {
        return Err(SpatialError::SubsetTooSmall {
            subset,
            n: members.len(),
        });
    }
    let mut points = Vec::with_capacity(members.len() * (members.len() - 1) / 2);
    for (a, &i) in members.iter().enumerate() {
        for &j in &members[a + 1..] {
            let diff = rates[i] - rates[j];
            points.push(VariogramPoint {
                distance: d[(i, j)],
                sq_diff: diff * diff,
            });
        }
    }
    Ok(VariogramCloud { subset, points })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MoranResult {
    #[serde(rename = "I")]
    pub i: f64,
    #[serde(rename = "expected")]
    pub expected_i: f64,
    /// Standard deviation under the normality null; absent when `n < 3`.
    #[serde(rename = "sd")]
    pub sd_i: Option<f64>,
    /// Two-sided normal-approximation p-value; absent when `n < 3`.
    #[serde(rename = "p")]
    pub p_value: Option<f64>,
    pub n: usize,
}

/// Global Moran's I with normality-assumption moments.
pub fn morans_i(rates: &[f64], w: &DMatrix<f64>) -> Result<MoranResult, SpatialError> {
    let n = rates.len();
    if w.shape() != (n, n) {
        return Err(SpatialError::DimensionMismatch(format!(
            "{n} rates, weights {:?}",
            w.shape()
        )));
    }
    if n < 2 {
        return Err(SpatialError::DimensionMismatch(
            "Moran's I needs at least 2 areas".into(),
        ));
    }
    let nf = n as f64;
    let mean = rates.iter().sum::<f64>() / nf;
    let z: Vec<f64> = rates.iter().map(|y| y - mean).collect();
    let m2: f64 = z.iter().map(|v| v * v).sum();
    if m2 == 0.0 {
        return Err(SpatialError::DegenerateRates);
    }

    let mut s0 = 0.0;
    let mut cross = 0.0;
    let mut s1 = 0.0;
    let mut row = vec![0.0; n];
    let mut col = vec![0.0; n];
    for i in 0..n {
        for j in 0..n {
            let wij = w[(i, j)];
            s0 += wij;
            cross += wij * z[i] * z[j];
            row[i] += wij;
            col[j] += wij;
            let sym = wij + w[(j, i)];
            s1 += sym * sym;
        }
    }
    s1 *= 0.5;
    let s2: f64 = row.iter().zip(&col).map(|(r, c)| (r + c) * (r + c)).sum();

    let i_stat = nf / s0 * cross / m2;
    let expected = -1.0 / (nf - 1.0);
    let (sd, p) = if n >= 3 {
        let var = (nf * nf * s1 - nf * s2 + 3.0 * s0 * s0) / ((nf * nf - 1.0) * s0 * s0)
            - expected * expected;
        if var > 0.0 {
            let sd = var.sqrt();
            let zscore = (i_stat - expected) / sd;
            let p = statrs::function::erf::erfc(zscore.abs() / std::f64::consts::SQRT_2);
            (Some(sd), Some(p.clamp(f64::MIN_POSITIVE, 1.0)))
        } else {
            (None, None)
        }
    } else {
        (None, None)
    };
    Ok(MoranResult {
        i: i_stat,
        expected_i: expected,
        sd_i: sd,
        p_value: p,
        n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("A{i}")).collect()
    }

    fn three_area_example() -> WeightSystem {
        let d = distance_matrix(&[(0.0, 0.0), (0.0, 1.0), (0.0, 2.0)]);
        let delta = contiguity_matrix(3, &[(0, 1), (1, 2)], &[1.0, 2.0, -1.0]).unwrap();
        build_weight_system(&ids(3), &d, &delta, &WeightConfig::default()).unwrap()
    }

    #[test]
    fn distances() {
        let d = distance_matrix(&[(0.0, 0.0), (3.0, 4.0)]);
        assert_eq!(d[(0, 1)], 5.0);
        assert_eq!(d[(1, 0)], 5.0);
        let d = distance_matrix(&[(1.5, 2.5), (1.5, 2.5)]);
        assert_eq!(d[(0, 1)], 0.0);
        let d = distance_matrix(&[(0.0, 0.0), (0.0, 1.0), (0.0, 2.0)]);
        assert_eq!((d[(0, 1)], d[(0, 2)], d[(1, 2)]), (1.0, 2.0, 1.0));
    }

    #[test]
    fn contiguity_sign_rule() {
        let c = |a: f64, b: f64| contiguity_matrix(2, &[(0, 1)], &[a, b]).unwrap()[(0, 1)];
        assert_eq!(c(1.0, 2.0), 1.0);
        assert_eq!(c(2.0, -1.0), 0.0);
        assert_eq!(c(0.0, 3.0), 0.0);
        assert_eq!(c(-1.0, -3.0), 1.0);
        assert_eq!(
            contiguity_matrix(3, &[(0, 2)], &[1.0, 1.0]),
            Err(SpatialError::MissingRate(2))
        );
    }

    #[test]
    fn three_area_hand_example() {
        let ws = three_area_example();
        let e1 = (-1.0f64).exp();
        assert_eq!(ws.kept_ids, vec!["A0", "A1"]);
        assert_eq!(ws.pruned.len(), 1);
        assert_eq!(ws.pruned[0].area_id, "A2");
        assert_eq!(ws.pruned[0].reason, PruneReason::ZeroRowAndColumnSum);
        assert_abs_diff_eq!(ws.w_star[(0, 1)], 0.367879, epsilon = 1e-6);
        assert_abs_diff_eq!(ws.w_star[(0, 1)], e1, epsilon = 1e-15);
        assert_eq!(ws.w, DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]));
        assert_abs_diff_eq!(ws.row_sums[0], e1, epsilon = 1e-15);
        assert_abs_diff_eq!(ws.m_diag[1], std::f64::consts::E, epsilon = 1e-12);
    }

    #[test]
    fn empty_graph_is_all_pruned() {
        let d = distance_matrix(&[(0.0, 0.0), (0.0, 1.0), (1.0, 0.0)]);
        let delta = DMatrix::zeros(3, 3);
        assert_eq!(
            build_weight_system(&ids(3), &d, &delta, &WeightConfig::default()).unwrap_err(),
            SpatialError::AllPruned
        );
    }

    #[test]
    fn two_area_kernel() {
        let w = DMatrix::from_row_slice(2, 2, &[0.0, 0.5, 0.5, 0.0]);
        let ws = WeightSystem::from_kernel(ids(2), w).unwrap();
        assert_eq!(ws.w, DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]));
        assert_eq!(ws.m_diag, vec![2.0, 2.0]);

        let q = car_precision(&ws, 1.0, 0.5).unwrap();
        assert_eq!(q, DMatrix::from_row_slice(2, 2, &[0.5, -0.25, -0.25, 0.5]));
        let cov = car_covariance(&ws, 1.0, 0.5).unwrap();
        assert!(((&q * &cov) - DMatrix::identity(2, 2)).amax() < 1e-12);

        let q0 = car_precision(&ws, 2.0, 0.0).unwrap();
        assert_eq!(q0, DMatrix::from_row_slice(2, 2, &[0.25, 0.0, 0.0, 0.25]));

        assert_eq!(
            car_precision(&ws, 1.0, 1.0),
            Err(SpatialError::RhoOutOfRange(1.0))
        );
        assert_eq!(
            car_precision(&ws, 1.0, -1.0),
            Err(SpatialError::RhoOutOfRange(-1.0))
        );
    }

    #[test]
    fn variogram_examples() {
        let d = distance_matrix(&[(0.0, 0.0), (0.0, 1.0), (0.0, 2.0)]);
        let cloud = variogram_cloud(&[0.0, 1.0, 3.0], &d, VariogramSubset::All).unwrap();
        let pts: Vec<(f64, f64)> = cloud
            .points
            .iter()
            .map(|p| (p.distance, p.sq_diff))
            .collect();
        assert_eq!(pts, vec![(1.0, 1.0), (2.0, 9.0), (1.0, 4.0)]);

        let d2 = distance_matrix(&[(0.0, 0.0), (1.0, 1.0)]);
        assert_eq!(
            variogram_cloud(&[1.0, 2.0], &d2, VariogramSubset::All)
                .unwrap()
                .points
                .len(),
            1
        );

        let flat = variogram_cloud(&[2.0; 3], &d, VariogramSubset::All).unwrap();
        assert!(flat.points.iter().all(|p| p.sq_diff == 0.0));

        let err =
            variogram_cloud(&[0.0, 1.0, 3.0], &d, VariogramSubset::OvercountOnly).unwrap_err();
        assert_eq!(
            err,
            SpatialError::SubsetTooSmall {
                subset: VariogramSubset::OvercountOnly,
                n: 0
            }
        );
        let under = variogram_cloud(&[0.0, 1.0, 3.0], &d, VariogramSubset::UndercountOnly).unwrap();
        assert_eq!(under.points.len(), 1);
        assert_eq!(under.points[0].sq_diff, 4.0);
    }

    #[test]
    fn moran_two_area_antithetic() {
        let w = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let r = morans_i(&[1.0, -1.0], &w).unwrap();
        assert_eq!(r.i, -1.0);
        assert_eq!(r.expected_i, -1.0);
        assert_eq!(r.sd_i, None);
        assert_eq!(r.p_value, None);
    }

    #[test]
    fn moran_checkerboard_is_negative() {
        // 4-cycle, alternating signs
        let mut w = DMatrix::zeros(4, 4);
        for i in 0..4 {
            w[(i, (i + 1) % 4)] = 0.5;
            w[((i + 1) % 4, i)] = 0.5;
        }
        let r = morans_i(&[1.0, -1.0, 1.0, -1.0], &w).unwrap();
        assert!(r.i < 0.0);
        assert_abs_diff_eq!(r.expected_i, -1.0 / 3.0, epsilon = 0.0);
        assert_eq!(morans_i(&[2.0; 4], &w), Err(SpatialError::DegenerateRates));
    }

    fn random_kernel(n: usize, density: f64, seed: u64) -> DMatrix<f64> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let coords: Vec<(f64, f64)> = (0..n)
            .map(|_| (rng.random_range(0.0..3.0), rng.random_range(0.0..3.0)))
            .collect();
        let rates: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..2.0)).collect();
        let mut adj = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                if rng.random_bool(density) {
                    adj.push((i, j));
                }
            }
        }
        let delta = contiguity_matrix(n, &adj, &rates).unwrap();
        raw_weights(&distance_matrix(&coords), &delta, &WeightConfig::default())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(128))]

        #[test]
        fn rows_standardize_and_prune_like_row_only(n in 2usize..15, density in 0.05f64..0.8, seed in any::<u64>()) {
            let raw = random_kernel(n, density, seed);
            // rebuild through the public path with delta derived from raw
            let delta = raw.map(|v| if v > 0.0 { 1.0 } else { 0.0 });
            let d = raw.map(|v| if v > 0.0 { -v.ln() } else { 0.0 });
            let res = build_weight_system(&ids(n), &d, &delta, &WeightConfig::default());
            let row_only: Vec<usize> = (0..n).filter(|&i| raw.row(i).sum() > 0.0).collect();
            match res {
                Ok(ws) => {
                    prop_assert_eq!(&ws.kept_index, &row_only);
                    for i in 0..ws.len() {
                        prop_assert!((ws.w.row(i).sum() - 1.0).abs() < 1e-12);
                        prop_assert_eq!(ws.w[(i, i)], 0.0);
                        prop_assert_eq!(ws.w_star[(i, i)], 0.0);
                        for j in 0..ws.len() {
                            prop_assert_eq!(ws.w_star[(i, j)], ws.w_star[(j, i)]);
                            prop_assert_eq!(ws.w[(i, j)], ws.w_star[(i, j)] / ws.row_sums[i]);
                        }
                    }
                    prop_assert!(ws.pruned.iter().all(|p| p.pass == 1));
                }
                Err(e) => {
                    prop_assert_eq!(e, SpatialError::AllPruned);
                    prop_assert!(row_only.is_empty());
                }
            }
        }

        #[test]
        fn precision_symmetric_pd(n in 2usize..10, seed in any::<u64>(), rho in -0.999f64..0.999) {
            let raw = random_kernel(n, 0.9, seed);
            let keep: Vec<usize> = (0..n).filter(|&i| raw.row(i).sum() > 0.0).collect();
            prop_assume!(keep.len() >= 2);
            let k = DMatrix::from_fn(keep.len(), keep.len(), |a, b| raw[(keep[a], keep[b])]);
            let ws = WeightSystem::from_kernel(ids(keep.len()), k).unwrap();
            let q = car_precision(&ws, 1.7, rho).unwrap();
            prop_assert_eq!(&q, &q.transpose());
            let cov = car_covariance(&ws, 1.7, rho).unwrap();
            let err = (&q * &cov - DMatrix::identity(ws.len(), ws.len())).amax();
            prop_assert!(err < 1e-10, "inverse-pair error {}", err);
        }
    }

    #[test]
    fn pruning_cascades_for_asymmetric_kernels() {
        // A->B only: B has zero row sum, A zero column sum; then nothing left.
        let mut raw = DMatrix::zeros(3, 3);
        raw[(0, 1)] = 1.0;
        raw[(1, 2)] = 1.0;
        raw[(2, 1)] = 1.0;
        // area 0 has no incoming weight; its removal leaves 1 <-> 2 intact
        let d = raw.map(|v: f64| if v > 0.0 { 0.0 } else { 1.0 });
        let delta = raw.clone();
        let ws = build_weight_system(&ids(3), &d, &delta, &WeightConfig::default()).unwrap();
        assert_eq!(ws.kept_ids, vec!["A1", "A2"]);
        assert_eq!(ws.pruned[0].reason, PruneReason::ZeroColumnSum);
    }
}
