use nalgebra::DVector;

use crate::geometry::Vec2;

/// Joint-velocity innovation detector with a reporting delay.
///
/// A robot is flagged when the one-step jump `|dq(k) - dq(k-1)|` exceeds
/// the threshold while its end effector is within `radius` of the expected
/// object centre. The raw flag latches and becomes visible `latency` steps
/// later.
#[derive(Clone, Debug)]
pub struct ImpactDetector {
    pub threshold: f64,
    pub latency: usize,
    previous: Vec<Option<DVector<f64>>>,
    raw_step: Vec<Option<usize>>,
}

impl ImpactDetector {
    pub fn new(robots: usize, threshold: f64, latency: usize) -> Self {
        Self {
            threshold,
            latency,
            previous: vec![None; robots],
            raw_step: vec![None; robots],
        }
    }

    /// Feeds the measurement of control step `k`; returns the reported
    /// flags.
    pub fn update(&mut self, k: usize, dq: &[DVector<f64>], ee: &[Vec2], center: Vec2, radius: f64) -> Vec<bool> {
        for (i, dqi) in dq.iter().enumerate() {
            if self.raw_step[i].is_none() {
                if let Some(prev) = &self.previous[i] {
                    let jump = (dqi - prev).norm();
                    if jump > self.threshold && (ee[i] - center).norm() <= radius {
                        self.raw_step[i] = Some(k);
                    }
                }
            }
            self.previous[i] = Some(dqi.clone());
        }
        self.flags(k)
    }

    pub fn flags(&self, k: usize) -> Vec<bool> {
        self.raw_step
            .iter()
            .map(|r| r.is_some_and(|s| k >= s + self.latency))
            .collect()
    }

    /// Step at which each robot's raw jump was seen.
    pub fn raw_steps(&self) -> &[Option<usize>] {
        &self.raw_step
    }
}
