//! Demonstrations, velocity estimation and normalization.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::diffengine::Sample;
use crate::{Error, Result, MAX_DIM};

/// One recorded trajectory in workspace units.
#[derive(Debug, Clone, PartialEq)]
pub struct Demonstration {
    /// `K × d` positions.
    pub states: Vec<Vec<f64>>,
    /// `K × d` velocities, in workspace units per second.
    pub velocities: Vec<Vec<f64>>,
    /// Sampling period in seconds.
    pub dt: f64,
    /// Position of the demonstration within its dataset.
    pub index: usize,
}

impl Demonstration {
    pub fn new(states: Vec<Vec<f64>>, velocities: Vec<Vec<f64>>, dt: f64, index: usize) -> Result<Self> {
        if states.len() < 2 {
            return Err(Error::InvalidDemonstration("a demonstration needs at least two samples"));
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidDemonstration("dt must be positive"));
        }
        if velocities.len() != states.len() {
            return Err(Error::InvalidDemonstration("states and velocities differ in length"));
        }
        let d = states[0].len();
        if d == 0 || d > MAX_DIM {
            return Err(Error::UnsupportedDimension(d));
        }
        for row in states.iter().chain(&velocities) {
            if row.len() != d {
                return Err(Error::InvalidDemonstration("ragged state or velocity rows"));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidDemonstration("non-finite value"));
            }
        }
        Ok(Self {
            states,
            velocities,
            dt,
            index,
        })
    }

    /// Builds a demonstration whose velocities are estimated from positions.
    pub fn from_states(states: Vec<Vec<f64>>, dt: f64, index: usize) -> Result<Self> {
        let velocities = estimate_velocities(&states, dt)?;
        Self::new(states, velocities, dt, index)
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.states[0].len()
    }

    pub fn start(&self) -> &[f64] {
        &self.states[0]
    }

    pub fn end(&self) -> &[f64] {
        &self.states[self.states.len() - 1]
    }
}

/// Central differences at interior samples, one-sided at both ends.
pub fn estimate_velocities(states: &[Vec<f64>], dt: f64) -> Result<Vec<Vec<f64>>> {
    if !(dt > 0.0) {
        return Err(Error::Contract("dt must be positive"));
    }
    let k = states.len();
    if k < 2 {
        return Err(Error::InvalidDemonstration("a demonstration needs at least two samples"));
    }
    let diff = |a: &[f64], b: &[f64], h: f64| -> Vec<f64> { a.iter().zip(b).map(|(x, y)| (x - y) / h).collect() };
    let mut out = Vec::with_capacity(k);
    out.push(diff(&states[1], &states[0], dt));
    for i in 1..k - 1 {
        out.push(diff(&states[i + 1], &states[i - 1], 2.0 * dt));
    }
    out.push(diff(&states[k - 1], &states[k - 2], dt));
    Ok(out)
}

/// Maps workspace coordinates to normalized, target-centred coordinates:
/// `z = (x − target) / scale` per dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub target: Vec<f64>,
    /// Centre of the symmetric scaling; always equal to `target`.
    pub offset: Vec<f64>,
    /// Per-dimension half-range.
    pub scale: Vec<f64>,
    /// Bounding box of the training states, in workspace units.
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Normalization {
    pub fn new(target: Vec<f64>, scale: Vec<f64>, lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        let d = target.len();
        for found in [scale.len(), lower.len(), upper.len()] {
            if found != d {
                return Err(Error::DimensionMismatch { expected: d, found });
            }
        }
        if scale.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(Error::Contract("scale must be positive"));
        }
        Ok(Self {
            offset: target.clone(),
            target,
            scale,
            lower,
            upper,
        })
    }

    /// Target at the origin, unit scale, box `[−1, 1]ᵈ`.
    pub fn identity(dim: usize) -> Self {
        Self {
            target: vec![0.0; dim],
            offset: vec![0.0; dim],
            scale: vec![1.0; dim],
            lower: vec![-1.0; dim],
            upper: vec![1.0; dim],
        }
    }

    /// Fits a symmetric per-dimension scale about `target` so every state of
    /// `demos` lands in `[−1, 1]`. Dimensions with zero range get scale 1
    /// and are reported in the second return value.
    pub fn fit(demos: &[Demonstration], target: &[f64]) -> Result<(Self, Vec<usize>)> {
        let first = demos.first().ok_or(Error::EmptyDataset)?;
        let d = first.dim();
        if target.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: target.len(),
            });
        }
        let mut half = vec![0.0f64; d];
        let mut lower = vec![f64::INFINITY; d];
        let mut upper = vec![f64::NEG_INFINITY; d];
        for demo in demos {
            if demo.dim() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: demo.dim(),
                });
            }
            for x in &demo.states {
                for i in 0..d {
                    half[i] = half[i].max((x[i] - target[i]).abs());
                    lower[i] = lower[i].min(x[i]);
                    upper[i] = upper[i].max(x[i]);
                }
            }
        }
        let mut degenerate = Vec::new();
        for (i, h) in half.iter_mut().enumerate() {
            if *h == 0.0 {
                *h = 1.0;
                degenerate.push(i);
            }
        }
        Ok((Self::new(target.to_vec(), half, lower, upper)?, degenerate))
    }

    pub fn dim(&self) -> usize {
        self.target.len()
    }

    pub fn to_normalized(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.offset)
            .zip(&self.scale)
            .map(|((x, o), s)| (x - o) / s)
            .collect()
    }

    pub fn from_normalized(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .zip(&self.offset)
            .zip(&self.scale)
            .map(|((z, o), s)| z * s + o)
            .collect()
    }

    pub fn velocity_to_normalized(&self, v: &[f64]) -> Vec<f64> {
        v.iter().zip(&self.scale).map(|(v, s)| v / s).collect()
    }

    pub fn velocity_from_normalized(&self, v: &[f64]) -> Vec<f64> {
        v.iter().zip(&self.scale).map(|(v, s)| v * s).collect()
    }

    /// Diagonal of the training-data bounding box.
    pub fn workspace_diameter(&self) -> f64 {
        libm::sqrt(
            self.upper
                .iter()
                .zip(&self.lower)
                .map(|(u, l)| (u - l) * (u - l))
                .sum(),
        )
    }

    /// Maps a demonstration into normalized coordinates. Time is untouched.
    pub fn apply(&self, demo: &Demonstration) -> Demonstration {
        Demonstration {
            states: demo.states.iter().map(|x| self.to_normalized(x)).collect(),
            velocities: demo.velocities.iter().map(|v| self.velocity_to_normalized(v)).collect(),
            dt: demo.dt,
            index: demo.index,
        }
    }
}

/// Mean of the final states.
pub fn default_target(demos: &[Demonstration]) -> Result<Vec<f64>> {
    let first = demos.first().ok_or(Error::EmptyDataset)?;
    let mut t = vec![0.0; first.dim()];
    for demo in demos {
        for (a, b) in t.iter_mut().zip(demo.end()) {
            *a += b;
        }
    }
    let n = demos.len() as f64;
    t.iter_mut().for_each(|v| *v /= n);
    Ok(t)
}

/// Demonstrations in normalized coordinates plus the map back.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedDataset {
    pub demos: Vec<Demonstration>,
    pub normalization: Normalization,
    /// Dimensions whose range was zero and were given unit scale.
    pub degenerate_dims: Vec<usize>,
}

impl NormalizedDataset {
    pub fn dim(&self) -> usize {
        self.normalization.dim()
    }

    pub fn sample_count(&self) -> usize {
        self.demos.iter().map(Demonstration::len).sum()
    }

    /// Every `(x, ẋ)` pair, demonstration by demonstration.
    pub fn samples(&self) -> Vec<Sample> {
        self.demos
            .iter()
            .flat_map(|d| {
                d.states
                    .iter()
                    .zip(&d.velocities)
                    .map(|(x, v)| Sample::new(x.clone(), v.clone()))
            })
            .collect()
    }
}

/// Shifts the target to the origin and scales into `[−1, 1]`. The target
/// defaults to the mean of the final states.
pub fn normalize(demos: &[Demonstration], target: Option<&[f64]>) -> Result<NormalizedDataset> {
    let target = match target {
        Some(t) => t.to_vec(),
        None => default_target(demos)?,
    };
    let (normalization, degenerate_dims) = Normalization::fit(demos, &target)?;
    Ok(NormalizedDataset {
        demos: demos.iter().map(|d| normalization.apply(d)).collect(),
        normalization,
        degenerate_dims,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rows(v: &[f64]) -> Vec<Vec<f64>> {
        v.iter().map(|&x| vec![x]).collect()
    }

    #[test]
    fn velocities_of_linear_motion() {
        assert_eq!(estimate_velocities(&rows(&[0.0, 1.0, 2.0]), 1.0).unwrap(), rows(&[1.0, 1.0, 1.0]));
    }

    #[test]
    fn velocities_central_and_one_sided() {
        assert_eq!(estimate_velocities(&rows(&[0.0, 1.0, 4.0]), 1.0).unwrap(), rows(&[1.0, 2.0, 3.0]));
    }

    #[test]
    fn two_samples_duplicate_forward_difference() {
        assert_eq!(estimate_velocities(&rows(&[1.0, 3.0]), 0.5).unwrap(), rows(&[4.0, 4.0]));
    }

    #[test]
    fn velocity_estimation_rejects_bad_dt() {
        assert!(estimate_velocities(&rows(&[0.0, 1.0]), 0.0).is_err());
        assert!(estimate_velocities(&rows(&[0.0, 1.0]), -1.0).is_err());
        assert!(estimate_velocities(&rows(&[0.0]), 1.0).is_err());
    }

    #[test]
    fn central_differences_exact_on_quadratics() {
        let dt = 0.1;
        let states: Vec<Vec<f64>> = (0..20)
            .map(|k| {
                let t = k as f64 * dt;
                vec![3.0 * t * t - 2.0 * t + 1.0, -t * t]
            })
            .collect();
        let v = estimate_velocities(&states, dt).unwrap();
        for k in 1..19 {
            let t = k as f64 * dt;
            assert!((v[k][0] - (6.0 * t - 2.0)).abs() < 1e-12);
            assert!((v[k][1] + 2.0 * t).abs() < 1e-12);
        }
    }

    #[test]
    fn demonstration_validation() {
        assert!(Demonstration::new(rows(&[0.0]), rows(&[0.0]), 0.1, 0).is_err());
        assert!(Demonstration::new(rows(&[0.0, 1.0]), rows(&[0.0]), 0.1, 0).is_err());
        assert!(Demonstration::new(rows(&[0.0, f64::NAN]), rows(&[0.0, 0.0]), 0.1, 0).is_err());
        assert!(Demonstration::new(rows(&[0.0, 1.0]), rows(&[0.0, 0.0]), 0.0, 0).is_err());
    }

    #[test]
    fn normalization_maps_target_to_origin() {
        let states: Vec<Vec<f64>> = (0..=10).map(|k| vec![-10.0 + k as f64, 10.0 - k as f64]).collect();
        let demo = Demonstration::from_states(states, 0.1, 0).unwrap();
        let ds = normalize(&[demo], Some(&[0.0, 0.0])).unwrap();
        let n = &ds.demos[0];
        assert_eq!(n.end(), &[0.0, 0.0][..]);
        assert!(n.states.iter().flatten().all(|v| (-1.0..=1.0).contains(v)));
        assert_eq!(ds.normalization.scale, vec![10.0, 10.0]);
    }

    #[test]
    fn velocity_scaling() {
        let norm = Normalization::new(vec![0.0, 0.0], vec![10.0, 10.0], vec![-10.0; 2], vec![10.0; 2]).unwrap();
        assert_eq!(norm.velocity_to_normalized(&[10.0, 0.0]), vec![1.0, 0.0]);
    }

    #[test]
    fn default_target_is_mean_of_finals() {
        let a = Demonstration::from_states(vec![vec![0.0, 0.0], vec![1.0, 1.0]], 1.0, 0).unwrap();
        let b = Demonstration::from_states(vec![vec![5.0, 5.0], vec![3.0, 1.0]], 1.0, 1).unwrap();
        assert_eq!(default_target(&[a.clone(), b.clone()]).unwrap(), vec![2.0, 1.0]);
        let ds = normalize(&[a, b], None).unwrap();
        assert_eq!(ds.normalization.to_normalized(&[2.0, 1.0]), vec![0.0, 0.0]);
        assert_eq!(ds.sample_count(), 4);
    }

    #[test]
    fn zero_range_dimension_gets_unit_scale() {
        let demo = Demonstration::from_states(vec![vec![1.0, 2.0], vec![0.0, 2.0]], 1.0, 0).unwrap();
        let ds = normalize(&[demo], None).unwrap();
        assert_eq!(ds.degenerate_dims, vec![1]);
        assert_eq!(ds.normalization.scale[1], 1.0);
    }

    #[test]
    fn normalization_commutes_with_concatenation() {
        let a = Demonstration::from_states(vec![vec![0.0, 3.0], vec![1.0, 1.0], vec![2.0, 0.5]], 0.1, 0).unwrap();
        let b = Demonstration::from_states(vec![vec![-4.0, 2.0], vec![1.5, 1.0]], 0.2, 1).unwrap();
        let norm = Normalization::new(vec![2.0, 0.5], vec![6.0, 2.5], vec![-4.0, 0.5], vec![2.0, 3.0]).unwrap();
        let joint: Vec<_> = [a.clone(), b.clone()].iter().map(|d| norm.apply(d)).collect();
        assert_eq!(joint[0], norm.apply(&a));
        assert_eq!(joint[1], norm.apply(&b));
    }

    proptest! {
        #[test]
        fn round_trip(x in -1e3f64..1e3, y in -1e3f64..1e3, tx in -50f64..50.0, sx in 0.1f64..100.0) {
            let norm = Normalization::new(vec![tx, -tx], vec![sx, 2.0 * sx], vec![-1.0; 2], vec![1.0; 2]).unwrap();
            let back = norm.from_normalized(&norm.to_normalized(&[x, y]));
            prop_assert!((back[0] - x).abs() <= 1e-12 * (1.0 + x.abs()));
            prop_assert!((back[1] - y).abs() <= 1e-12 * (1.0 + y.abs()));
        }
    }
}
