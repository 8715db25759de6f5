use nalgebra::{DMatrix, DVector};

use super::MapError;
use crate::geometry::Twist2;

/// Tikhonov term added to the interpolation matrix diagonal.
pub const RIDGE: f64 = 1e-10;

const MAX_CONDITION: f64 = 1e12;

#[derive(Clone, Debug, PartialEq)]
pub struct ImpactSample {
    /// Projected impact coordinate along the nominal face, one per robot.
    pub key: Vec<f64>,
    pub v_o_plus: Twist2,
}

#[derive(Clone, Debug)]
pub struct ImpactDataset {
    pub samples: Vec<ImpactSample>,
    pub arm_count: usize,
    /// Gaussian shape parameter, 1/m.
    pub rho: f64,
    pub scenario_hash: String,
    weights: Option<DMatrix<f64>>,
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Kernel width `1 / rho` of 1.5 median nearest-neighbour spacings: wide
/// enough to bridge a missing node while keeping `Phi` well conditioned.
/// A single sample gets `rho = 1`.
pub fn default_rho(keys: &[Vec<f64>]) -> f64 {
    if keys.len() < 2 {
        return 1.0;
    }
    let mut nn: Vec<f64> = keys
        .iter()
        .enumerate()
        .map(|(i, a)| {
            keys.iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, b)| dist(a, b))
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    nn.sort_by(f64::total_cmp);
    let m = nn.len();
    let median = if m % 2 == 1 { nn[m / 2] } else { 0.5 * (nn[m / 2 - 1] + nn[m / 2]) };
    1.0 / (1.5 * median)
}

impl ImpactDataset {
    /// Validates the samples; `rho = None` picks [`default_rho`].
    pub fn new(samples: Vec<ImpactSample>, arm_count: usize, rho: Option<f64>, scenario_hash: impl Into<String>) -> Result<Self, MapError> {
        if samples.is_empty() {
            return Err(MapError::Empty);
        }
        if !(1..=2).contains(&arm_count) {
            return Err(MapError::ArmCount(arm_count));
        }
        for (i, s) in samples.iter().enumerate() {
            if s.key.len() != arm_count {
                return Err(MapError::KeyShape(i, s.key.len(), arm_count));
            }
        }
        for i in 0..samples.len() {
            for j in i + 1..samples.len() {
                if dist(&samples[i].key, &samples[j].key) <= 1e-9 {
                    return Err(MapError::DuplicateKeys(i, j));
                }
            }
        }
        let keys: Vec<Vec<f64>> = samples.iter().map(|s| s.key.clone()).collect();
        let rho = rho.unwrap_or_else(|| default_rho(&keys));
        if !(rho.is_finite() && rho > 0.0) {
            return Err(MapError::Rho(rho));
        }
        Ok(Self {
            samples,
            arm_count,
            rho,
            scenario_hash: scenario_hash.into(),
            weights: None,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    fn kernel(&self, r: f64) -> f64 {
        let x = self.rho * r;
        (-x * x).exp()
    }

    /// Interpolation matrix without the ridge term.
    pub fn kernel_matrix(&self) -> DMatrix<f64> {
        let n = self.len();
        DMatrix::from_fn(n, n, |i, j| self.kernel(dist(&self.samples[i].key, &self.samples[j].key)))
    }

    /// Stacked targets, one row per sample.
    pub fn targets(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.len(), 3, |i, c| self.samples[i].v_o_plus.as_vector()[c])
    }

    /// Solves `(Phi + RIDGE I) W = V`, then takes one refinement step
    /// against the unregularised `Phi` so the ridge does not bias the
    /// nodes. `W` has one row per sample.
    pub fn build_weights(&mut self) -> Result<&DMatrix<f64>, MapError> {
        let n = self.len();
        let kernel = self.kernel_matrix();
        let phi = &kernel + DMatrix::identity(n, n) * RIDGE;
        let eig = phi.clone().symmetric_eigenvalues();
        let (lo, hi) = (eig.min(), eig.max());
        let cond = if lo > 0.0 { hi / lo } else { f64::INFINITY };
        if cond > MAX_CONDITION {
            return Err(MapError::IllConditioned(cond));
        }
        let chol = phi.cholesky().ok_or(MapError::IllConditioned(cond))?;
        let targets = self.targets();
        let mut w = chol.solve(&targets);
        w += chol.solve(&(targets - &kernel * &w));
        Ok(self.weights.insert(w))
    }

    pub fn weights(&self) -> Option<&DMatrix<f64>> {
        self.weights.as_ref()
    }

    /// Predicted post-impact object twist at `query`.
    pub fn interpolate(&self, query: &[f64]) -> Result<Twist2, MapError> {
        if query.len() != self.arm_count {
            return Err(MapError::QueryShape {
                got: query.len(),
                expected: self.arm_count,
            });
        }
        let w = self.weights.as_ref().ok_or(MapError::WeightsMissing)?;
        let dists: Vec<f64> = self.samples.iter().map(|s| dist(&s.key, query)).collect();
        let nearest = dists.iter().copied().fold(f64::INFINITY, f64::min);
        if nearest > 2.0 / self.rho {
            log::warn!("impact-map query {query:?} is {nearest:.3} m from the nearest sample; the prediction decays toward zero");
        }
        let phi = DVector::from_iterator(dists.len(), dists.iter().map(|r| self.kernel(*r)));
        let v = w.transpose() * phi;
        Ok(Twist2::new(v[0], v[1], v[2]))
    }

    /// Leave-one-out relative errors on `|v_o_plus|`, same `rho`.
    pub fn leave_one_out(&self) -> Result<Vec<f64>, MapError> {
        let mut out = Vec::with_capacity(self.len());
        for k in 0..self.len() {
            let rest: Vec<ImpactSample> = self
                .samples
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != k)
                .map(|(_, s)| s.clone())
                .collect();
            let mut sub = ImpactDataset::new(rest, self.arm_count, Some(self.rho), self.scenario_hash.clone())?;
            sub.build_weights()?;
            let pred = sub.interpolate(&self.samples[k].key)?;
            let truth = self.samples[k].v_o_plus;
            out.push((pred.norm() - truth.norm()).abs() / truth.norm());
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(key: &[f64], v: (f64, f64, f64)) -> ImpactSample {
        ImpactSample {
            key: key.to_vec(),
            v_o_plus: Twist2::new(v.0, v.1, v.2),
        }
    }

    #[test]
    fn single_sample_is_constant() {
        let mut d = ImpactDataset::new(vec![sample(&[0.01], (0.1, -0.3, 0.02))], 1, None, "").unwrap();
        let w = d.build_weights().unwrap().clone();
        // Phi = [1]; W = v up to the ridge
        assert!((w[(0, 1)] + 0.3).abs() < 1e-9);
        for q in [-0.05, 0.0, 0.01, 0.2] {
            let v = d.interpolate(&[q]).unwrap();
            let expect = (-(d.rho * (q - 0.01)).powi(2)).exp() * -0.3;
            assert!((v.vy - expect).abs() < 1e-9);
        }
    }

    #[test]
    fn far_apart_samples_weigh_themselves() {
        let mut d = ImpactDataset::new(
            vec![sample(&[0.0], (1.0, 2.0, 3.0)), sample(&[1.0], (-1.0, 0.5, 0.0))],
            1,
            Some(20.0),
            "",
        )
        .unwrap();
        let w = d.build_weights().unwrap();
        assert!((w[(0, 0)] - 1.0).abs() < 1e-9 && (w[(1, 1)] - 0.5).abs() < 1e-9);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(ImpactDataset::new(vec![], 1, None, ""), Err(MapError::Empty)));
        let dup = vec![sample(&[0.1], (0.0, 0.0, 0.0)), sample(&[0.1], (1.0, 0.0, 0.0))];
        assert!(matches!(ImpactDataset::new(dup, 1, None, ""), Err(MapError::DuplicateKeys(0, 1))));
        let d = ImpactDataset::new(vec![sample(&[0.1, 0.2], (0.0, 0.0, 0.0))], 2, None, "").unwrap();
        assert!(matches!(d.interpolate(&[0.0, 0.0]), Err(MapError::WeightsMissing)));
        assert!(matches!(d.interpolate(&[0.0]), Err(MapError::QueryShape { .. })));
    }

    #[test]
    fn default_rho_uses_nearest_spacing() {
        let keys: Vec<Vec<f64>> = (0..5).map(|i| vec![0.01 * i as f64]).collect();
        assert!((default_rho(&keys) - 200.0 / 3.0).abs() < 1e-9);
    }
}
