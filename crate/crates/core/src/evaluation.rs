//! Rollouts, reproduction metrics and stability diagnostics.
//!
//! Rollouts integrate in normalized coordinates and report workspace units.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Demonstration;
use crate::dynamics::{self, lyapunov, pullback};
use crate::model::StableDsModel;
use crate::{Error, Result};

/// Convergence radius as a fraction of the workspace diameter.
pub const CONVERGENCE_FRACTION: f64 = 0.01;
/// Rollouts leaving `[−10, 10]ᵈ` in normalized coordinates are stopped.
pub const DIVERGENCE_BOX: f64 = 10.0;
/// Allowed per-step increase of `V` before counting a monotonicity violation.
pub const MONOTONICITY_TOLERANCE: f64 = 1e-8;
/// Below this latent norm the monotonicity check stops.
pub const LATENT_FLOOR: f64 = 1e-6;
/// Relative residual allowed for the pulled-back velocity solve.
pub const SOLVE_TOLERANCE: f64 = 1e-10;
/// Radius of the far shell probed by the audit, in normalized units.
pub const FAR_SHELL_RADIUS: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Integrator {
    #[default]
    Euler,
    Rk4,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rollout {
    /// `T × d` states in workspace units, starting at `x0`.
    pub states: Vec<Vec<f64>>,
    /// `T × d` velocities at those states, in workspace units.
    pub velocities: Vec<Vec<f64>>,
    /// `V` at each state.
    pub lyapunov: Vec<f64>,
    pub converged: bool,
    pub steps_to_converge: Option<usize>,
    /// Left the normalized divergence box; the rollout was truncated.
    pub diverged: bool,
    /// Stopped on a Jacobian that stayed singular after one perturbation.
    pub aborted: bool,
}

impl Rollout {
    /// Steps where `V` grew by more than [`MONOTONICITY_TOLERANCE`] while the
    /// latent state was still above [`LATENT_FLOOR`].
    pub fn monotonicity_violations(&self) -> usize {
        self.lyapunov
            .windows(2)
            .take_while(|w| libm::sqrt(2.0 * w[0]) >= LATENT_FLOOR)
            .filter(|w| w[1] > w[0] + MONOTONICITY_TOLERANCE)
            .count()
    }
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    libm::sqrt(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum())
}

/// Normalized velocity and `V`; on a singular Jacobian retries once from a
/// point moved by about 1e-6.
fn velocity_with_retry(model: &StableDsModel, z: &[f64], rng: &mut ChaCha8Rng) -> Result<(Vec<f64>, f64)> {
    let eval = |z: &[f64]| -> Result<(Vec<f64>, f64)> {
        Ok(match pullback(model, z)? {
            None => (vec![0.0; z.len()], 0.0),
            Some(p) => {
                let v = lyapunov(&p.eval.y);
                (p.velocity, v)
            }
        })
    };
    match eval(z) {
        Err(Error::NearSingularJacobian { .. }) => {
            let moved: Vec<f64> = z.iter().map(|v| v + 1e-6 * rng.gen_range(-1.0..1.0)).collect();
            eval(&moved)
        }
        other => other,
    }
}

/// Forward-Euler rollout of `steps` steps from workspace state `x0`.
pub fn rollout(model: &StableDsModel, x0: &[f64], steps: usize, dt: f64) -> Result<Rollout> {
    rollout_with(model, x0, steps, dt, Integrator::Euler)
}

pub fn rollout_with(model: &StableDsModel, x0: &[f64], steps: usize, dt: f64, integrator: Integrator) -> Result<Rollout> {
    if steps == 0 {
        return Err(Error::Contract("rollout needs at least one step"));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::Contract("dt must be positive"));
    }
    if x0.len() != model.state_dim() {
        return Err(Error::DimensionMismatch {
            expected: model.state_dim(),
            found: x0.len(),
        });
    }
    let norm = &model.normalization;
    let radius = CONVERGENCE_FRACTION * norm.workspace_diameter();
    let target = norm.target.clone();
    let near = |x: &[f64]| distance(x, &target) <= radius;
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);

    let mut z = norm.to_normalized(x0);
    let mut out = Rollout {
        states: vec![x0.to_vec()],
        velocities: Vec::with_capacity(steps + 1),
        lyapunov: Vec::with_capacity(steps + 1),
        converged: false,
        steps_to_converge: None,
        diverged: false,
        aborted: false,
    };
    if near(x0) {
        out.converged = true;
        out.steps_to_converge = Some(0);
    }

    for k in 0..=steps {
        let (v, lyap) = match velocity_with_retry(model, &z, &mut rng) {
            Ok(r) => r,
            Err(Error::NearSingularJacobian { .. }) => {
                out.aborted = true;
                out.states.truncate(out.velocities.len());
                break;
            }
            Err(e) => return Err(e),
        };
        out.velocities.push(norm.velocity_from_normalized(&v));
        out.lyapunov.push(lyap);
        if k == steps {
            break;
        }
        let next: Vec<f64> = match integrator {
            Integrator::Euler => z.iter().zip(&v).map(|(a, b)| a + dt * b).collect(),
            Integrator::Rk4 => match rk4_step(model, &z, &v, dt, &mut rng) {
                Ok(n) => n,
                Err(Error::NearSingularJacobian { .. }) => {
                    out.aborted = true;
                    break;
                }
                Err(e) => return Err(e),
            },
        };
        if next.iter().any(|c| !(c.abs() <= DIVERGENCE_BOX)) {
            out.diverged = true;
            break;
        }
        z = next;
        let x = norm.from_normalized(&z);
        if !out.converged && near(&x) {
            out.converged = true;
            out.steps_to_converge = Some(k + 1);
        }
        out.states.push(x);
    }
    debug_assert_eq!(out.states.len(), out.velocities.len());
    Ok(out)
}

fn rk4_step(model: &StableDsModel, z: &[f64], k1: &[f64], dt: f64, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    let shift = |a: &[f64], b: &[f64], h: f64| -> Vec<f64> { a.iter().zip(b).map(|(x, y)| x + h * y).collect() };
    let k2 = velocity_with_retry(model, &shift(z, k1, 0.5 * dt), rng)?.0;
    let k3 = velocity_with_retry(model, &shift(z, &k2, 0.5 * dt), rng)?.0;
    let k4 = velocity_with_retry(model, &shift(z, &k3, dt), rng)?.0;
    Ok((0..z.len())
        .map(|i| z[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect())
}

/// Area of triangle `abc` (2-D shoelace; Gram determinant otherwise).
fn triangle_area(a: &[f64], b: &[f64], c: &[f64]) -> f64 {
    if a.len() == 2 {
        return 0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1])).abs();
    }
    let u: Vec<f64> = b.iter().zip(a).map(|(x, y)| x - y).collect();
    let v: Vec<f64> = c.iter().zip(a).map(|(x, y)| x - y).collect();
    let (uu, vv, uv) = (dynamics::dot(&u, &u), dynamics::dot(&v, &v), dynamics::dot(&u, &v));
    0.5 * libm::sqrt((uu * vv - uv * uv).max(0.0))
}

/// Area swept between quadrilateral `(d0, d1, r1, r0)`: the mean of its two
/// diagonal splits, each a sum of absolute triangle areas.
fn quad_area(d0: &[f64], d1: &[f64], r1: &[f64], r0: &[f64]) -> f64 {
    let split_a = triangle_area(d0, d1, r1) + triangle_area(d0, r1, r0);
    let split_b = triangle_area(d0, d1, r0) + triangle_area(d1, r1, r0);
    0.5 * (split_a + split_b)
}

/// Swept error area between a demonstration and its reproduction, in
/// squared workspace units.
pub fn sea(demo: &[Vec<f64>], repro: &[Vec<f64>]) -> Result<f64> {
    if demo.len() != repro.len() {
        return Err(Error::Contract("demonstration and reproduction differ in length"));
    }
    Ok(demo
        .windows(2)
        .zip(repro.windows(2))
        .map(|(d, r)| quad_area(&d[0], &d[1], &r[1], &r[0]))
        .sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VelocityError {
    pub rmse: f64,
    /// Samples skipped for near-singular Jacobians.
    pub skipped: usize,
}

/// Root mean square velocity error at the demonstrated states, in workspace
/// units per second.
pub fn v_rmse(demo: &Demonstration, model: &StableDsModel) -> Result<VelocityError> {
    let mut total = 0.0;
    let mut used = 0usize;
    let mut skipped = 0usize;
    for (x, v) in demo.states.iter().zip(&demo.velocities) {
        match model.velocity(x) {
            Ok(pred) => {
                total += pred.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
                used += 1;
            }
            Err(Error::NearSingularJacobian { .. }) => skipped += 1,
            Err(e) => return Err(e),
        }
    }
    if used == 0 {
        return Err(Error::DegenerateBatch { skipped });
    }
    Ok(VelocityError {
        rmse: libm::sqrt(total / used as f64),
        skipped,
    })
}

/// A regular grid over a box in workspace units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Points per axis.
    pub resolution: usize,
}

impl GridSpec {
    /// The training bounding box padded by `margin` of its extent.
    pub fn around(model: &StableDsModel, margin: f64, resolution: usize) -> Self {
        let n = &model.normalization;
        let (mut lower, mut upper) = (n.lower.clone(), n.upper.clone());
        for i in 0..lower.len() {
            let pad = margin * (upper[i] - lower[i]).max(1e-9);
            lower[i] -= pad;
            upper[i] += pad;
        }
        Self { lower, upper, resolution }
    }

    /// Grid points, first axis varying fastest.
    pub fn points(&self) -> Vec<Vec<f64>> {
        let d = self.lower.len();
        let r = self.resolution;
        let total = r.pow(d as u32);
        (0..total)
            .map(|mut flat| {
                (0..d)
                    .map(|i| {
                        let j = flat % r;
                        flat /= r;
                        self.lower[i] + (self.upper[i] - self.lower[i]) * j as f64 / (r - 1) as f64
                    })
                    .collect()
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldSample {
    pub x: Vec<f64>,
    /// `None` where the Jacobian is near-singular.
    pub velocity: Option<Vec<f64>>,
}

/// Samples the learned field on `grid`.
pub fn vector_field(model: &StableDsModel, grid: &GridSpec) -> Result<Vec<FieldSample>> {
    if grid.resolution < 2 {
        return Err(Error::Contract("grid resolution must be at least 2"));
    }
    if grid.lower.len() != model.state_dim() || grid.upper.len() != model.state_dim() {
        return Err(Error::DimensionMismatch {
            expected: model.state_dim(),
            found: grid.lower.len(),
        });
    }
    grid.points()
        .into_iter()
        .map(|x| match model.velocity(&x) {
            Ok(v) => Ok(FieldSample { x, velocity: Some(v) }),
            Err(Error::NearSingularJacobian { .. }) => Ok(FieldSample { x, velocity: None }),
            Err(e) => Err(e),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub box_samples: usize,
    pub shell_samples: usize,
    /// `V` at the target; zero by construction.
    pub v_at_target: f64,
    pub box_v_min: f64,
    pub box_v_max: f64,
    pub shell_v_min: f64,
    pub shell_v_max: f64,
    /// Samples away from the target with `V̇ = yᵀẏ ≥ 0`.
    pub rate_violations: usize,
    pub singular_jacobians: usize,
    /// Samples whose velocity solve missed `‖Jẋ − ẏ‖ ≤ 1e-10·‖ẏ‖`.
    pub residual_failures: usize,
}

impl AuditReport {
    /// Far-shell `V` exceeds every in-box `V` (a proxy for radial growth).
    pub fn radially_growing(&self) -> bool {
        self.shell_v_min > self.box_v_max
    }

    pub fn is_clean(&self) -> bool {
        self.rate_violations == 0 && self.singular_jacobians == 0 && self.residual_failures == 0
    }
}

/// Random probes of the Lyapunov conditions: `samples` states uniform in the
/// doubled normalized box and as many on the far shell.
pub fn stability_audit(model: &StableDsModel, samples: usize, seed: u64) -> Result<AuditReport> {
    if samples == 0 {
        return Err(Error::Contract("audit needs at least one sample"));
    }
    let d = model.state_dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = AuditReport {
        box_samples: samples,
        shell_samples: samples,
        v_at_target: lyapunov(&model.transform.transform(&vec![0.0; d])?),
        box_v_min: f64::INFINITY,
        box_v_max: f64::NEG_INFINITY,
        shell_v_min: f64::INFINITY,
        shell_v_max: f64::NEG_INFINITY,
        rate_violations: 0,
        singular_jacobians: 0,
        residual_failures: 0,
    };
    for shell in [false, true] {
        for _ in 0..samples {
            let z: Vec<f64> = if shell {
                loop {
                    let u: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
                    let r = libm::sqrt(dynamics::dot(&u, &u));
                    if r > 1e-3 && r <= 1.0 {
                        break u.iter().map(|c| FAR_SHELL_RADIUS * c / r).collect();
                    }
                }
            } else {
                (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect()
            };
            let v = lyapunov(&model.transform.transform(&z)?);
            if shell {
                report.shell_v_min = report.shell_v_min.min(v);
                report.shell_v_max = report.shell_v_max.max(v);
            } else {
                report.box_v_min = report.box_v_min.min(v);
                report.box_v_max = report.box_v_max.max(v);
            }
            match pullback(model, &z) {
                Ok(None) => {}
                Ok(Some(p)) => {
                    if dynamics::dot(&p.eval.y, &p.latent_velocity) >= 0.0 {
                        report.rate_violations += 1;
                    }
                    let scale = libm::sqrt(dynamics::dot(&p.latent_velocity, &p.latent_velocity));
                    if p.residual() > SOLVE_TOLERANCE * scale {
                        report.residual_failures += 1;
                    }
                }
                Err(Error::NearSingularJacobian { .. }) => report.singular_jacobians += 1,
                Err(e) => return Err(e),
            }
        }
    }
    Ok(report)
}

/// Metrics for one demonstration reproduced from its own start point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemoMetrics {
    pub index: usize,
    pub samples: usize,
    pub sea: f64,
    pub v_rmse: f64,
    pub velocity_skipped: usize,
    pub converged: bool,
    pub steps_to_converge: Option<usize>,
    pub diverged: bool,
    pub aborted: bool,
    pub monotonicity_violations: usize,
}

/// Reproduces `demo` with its own step count and `dt`, then scores it.
///
/// A truncated reproduction is held at its last state so SEA still covers
/// every demonstrated segment.
pub fn evaluate_demo(model: &StableDsModel, demo: &Demonstration, integrator: Integrator) -> Result<(DemoMetrics, Rollout)> {
    let repro = rollout_with(model, demo.start(), demo.len() - 1, demo.dt, integrator)?;
    let mut states = repro.states.clone();
    if states.is_empty() {
        states.push(demo.start().to_vec());
    }
    while states.len() < demo.len() {
        let last = states[states.len() - 1].clone();
        states.push(last);
    }
    let area = sea(&demo.states, &states)?;
    let vel = v_rmse(demo, model)?;
    Ok((
        DemoMetrics {
            index: demo.index,
            samples: demo.len(),
            sea: area,
            v_rmse: vel.rmse,
            velocity_skipped: vel.skipped,
            converged: repro.converged,
            steps_to_converge: repro.steps_to_converge,
            diverged: repro.diverged,
            aborted: repro.aborted,
            monotonicity_violations: repro.monotonicity_violations(),
        },
        repro,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub per_demo: Vec<DemoMetrics>,
    pub mean_sea: f64,
    pub mean_v_rmse: f64,
    pub convergence_fraction: f64,
    pub monotonicity_violations: usize,
    pub audit: Option<AuditReport>,
}

impl EvalReport {
    pub fn from_demos(per_demo: Vec<DemoMetrics>) -> Self {
        let n = per_demo.len().max(1) as f64;
        Self {
            mean_sea: per_demo.iter().map(|m| m.sea).sum::<f64>() / n,
            mean_v_rmse: per_demo.iter().map(|m| m.v_rmse).sum::<f64>() / n,
            convergence_fraction: per_demo.iter().filter(|m| m.converged).count() as f64 / n,
            monotonicity_violations: per_demo.iter().map(|m| m.monotonicity_violations).sum(),
            per_demo,
            audit: None,
        }
    }

    /// Any audited stability violation.
    pub fn has_stability_violation(&self) -> bool {
        self.audit.as_ref().is_some_and(|a| !a.is_clean())
    }
}

/// Evaluates every demonstration in order.
pub fn evaluate(model: &StableDsModel, demos: &[Demonstration], integrator: Integrator) -> Result<EvalReport> {
    let per_demo = demos
        .iter()
        .map(|d| evaluate_demo(model, d, integrator).map(|(m, _)| m))
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalReport::from_demos(per_demo))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Normalization;
    use crate::dynamics::{DynamicsMode, LatentDynamics};
    use crate::networks::{Activation, Layer, Layout, MlpParams, TransformSpec};

    fn zero_net(d: usize, act: Activation) -> MlpParams {
        MlpParams::new(vec![Layer {
            input_dim: d,
            output_dim: d,
            activation: act,
            weights: vec![0.0; d * d],
            bias: None,
        }])
        .unwrap()
    }

    fn contraction_model() -> StableDsModel {
        let spec = TransformSpec::new(zero_net(2, Activation::Linear), zero_net(2, Activation::Tanh)).unwrap();
        let latent = LatentDynamics::new(zero_net(2, Activation::Linear), 1.0, DynamicsMode::FixedContraction).unwrap();
        StableDsModel::new(spec, latent, Normalization::identity(2)).unwrap()
    }

    fn learned_model(seed: u64) -> StableDsModel {
        StableDsModel::initialize(seed, &Layout::standard(2), 1.0, DynamicsMode::Learned, Normalization::identity(2)).unwrap()
    }

    #[test]
    fn rollout_from_target_stays_put() {
        let m = learned_model(0);
        let r = rollout(&m, &[0.0, 0.0], 5, 0.1).unwrap();
        assert!(r.states.iter().all(|s| s == &vec![0.0, 0.0]));
        assert_eq!(r.steps_to_converge, Some(0));
        assert_eq!(r.states.len(), 6);
    }

    #[test]
    fn euler_on_contraction_is_geometric() {
        let m = contraction_model();
        let r = rollout(&m, &[1.0, 0.0], 30, 0.1).unwrap();
        for (k, s) in r.states.iter().enumerate() {
            assert!((s[0] - libm::pow(0.9, k as f64)).abs() < 1e-12);
            assert_eq!(s[1], 0.0);
        }
        // diameter 2√2, radius 0.0283: 0.9^k ≤ 0.0283 first at k = 34
        assert!(!r.converged);
        let r = rollout(&m, &[1.0, 0.0], 40, 0.1).unwrap();
        assert_eq!(r.steps_to_converge, Some(34));
        assert_eq!(r.monotonicity_violations(), 0);
    }

    #[test]
    fn divergence_truncates() {
        let m = contraction_model();
        // dt = 25 overshoots: z ← z − 25 z = −24 z
        let r = rollout(&m, &[0.5, 0.0], 10, 25.0).unwrap();
        assert!(r.diverged);
        assert_eq!(r.states.len(), 1);
        assert!(r.states.iter().flatten().all(|v| v.is_finite()));
    }

    #[test]
    fn rollout_contracts() {
        assert!(rollout(&contraction_model(), &[1.0, 0.0], 0, 0.1).is_err());
        assert!(rollout(&contraction_model(), &[1.0, 0.0], 3, 0.0).is_err());
        assert!(rollout(&contraction_model(), &[1.0], 3, 0.1).is_err());
    }

    #[test]
    fn rk4_is_more_accurate_than_euler() {
        let m = contraction_model();
        let exact = libm::exp(-1.0);
        let e = rollout_with(&m, &[1.0, 0.0], 10, 0.1, Integrator::Euler).unwrap();
        let r = rollout_with(&m, &[1.0, 0.0], 10, 0.1, Integrator::Rk4).unwrap();
        assert!((r.states[10][0] - exact).abs() < 1e-6);
        assert!((e.states[10][0] - exact).abs() > 1e-2);
    }

    #[test]
    fn euler_is_first_order() {
        let m = learned_model(3);
        let end = |steps: usize, dt: f64| rollout(&m, &[0.8, -0.6], steps, dt).unwrap().states[steps].clone();
        let a = end(50, 0.02);
        let b = end(100, 0.01);
        let c = end(200, 0.005);
        let dist = |p: &[f64], q: &[f64]| libm::sqrt(p.iter().zip(q).map(|(x, y)| (x - y) * (x - y)).sum());
        let ratio = dist(&a, &b) / dist(&b, &c);
        assert!((1.6..2.4).contains(&ratio), "{ratio}");
    }

    #[test]
    fn sea_examples() {
        let d = vec![vec![0.0, 0.0], vec![1.0, 0.0]];
        let r = vec![vec![0.0, 1.0], vec![1.0, 1.0]];
        assert_eq!(sea(&d, &d).unwrap(), 0.0);
        assert_eq!(sea(&d, &r).unwrap(), 1.0);
        let d3 = vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![2.0, 0.0]];
        let r3: Vec<_> = d3.iter().map(|p| vec![p[0], p[1] + 0.5]).collect();
        assert_eq!(sea(&d3, &r3).unwrap(), 1.0);
        assert!(sea(&d3, &r).is_err());
    }

    #[test]
    fn sea_in_three_dimensions() {
        let d = vec![vec![0.0, 0.0, 0.0], vec![1.0, 0.0, 0.0]];
        let r = vec![vec![0.0, 0.0, 2.0], vec![1.0, 0.0, 2.0]];
        assert!((sea(&d, &r).unwrap() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn v_rmse_examples() {
        // ẋ = −x against demonstrated velocities offset by (3, 4)
        let m = contraction_model();
        let states: Vec<Vec<f64>> = (0..5).map(|k| vec![0.1 * k as f64 + 0.1, 0.0]).collect();
        let vel = states.iter().map(|x| vec![3.0 - x[0], 4.0 - x[1]]).collect();
        let demo = Demonstration::new(states.clone(), vel, 0.1, 0).unwrap();
        assert!((v_rmse(&demo, &m).unwrap().rmse - 5.0).abs() < 1e-12);
        // reproducing the model exactly
        let l = learned_model(2);
        let vel = states.iter().map(|x| l.velocity(x).unwrap()).collect();
        let demo = Demonstration::new(states, vel, 0.1, 0).unwrap();
        assert_eq!(v_rmse(&demo, &l).unwrap().rmse, 0.0);
    }

    #[test]
    fn v_rmse_is_homogeneous() {
        let m = learned_model(4);
        let states: Vec<Vec<f64>> = (0..8).map(|k| vec![0.9 - 0.1 * k as f64, 0.3]).collect();
        let vel: Vec<Vec<f64>> = (0..8).map(|k| vec![-1.0, 0.1 * k as f64]).collect();
        let base = v_rmse(&Demonstration::new(states.clone(), vel.clone(), 0.1, 0).unwrap(), &m).unwrap().rmse;
        let c = 2.5;
        let mut scaled = m.clone();
        scaled.latent.beta *= c;
        let last = scaled.latent.n.layers.last_mut().unwrap();
        last.weights.iter_mut().for_each(|w| *w *= c);
        last.bias.iter_mut().flatten().for_each(|b| *b *= c);
        let vel_c = vel.iter().map(|v| v.iter().map(|x| c * x).collect()).collect();
        let s = v_rmse(&Demonstration::new(states, vel_c, 0.1, 0).unwrap(), &scaled).unwrap().rmse;
        assert!((s - c * base).abs() <= 1e-12 * s);
    }

    #[test]
    fn field_on_contraction_points_home() {
        let m = contraction_model();
        let grid = GridSpec {
            lower: vec![-1.0, -1.0],
            upper: vec![1.0, 1.0],
            resolution: 5,
        };
        let f = vector_field(&m, &grid).unwrap();
        assert_eq!(f.len(), 25);
        for s in &f {
            let v = s.velocity.as_ref().unwrap();
            if s.x.iter().any(|&c| c != 0.0) {
                assert!(dynamics::dot(v, &s.x) < 0.0);
            }
        }
        let small = GridSpec { resolution: 2, ..grid.clone() };
        assert_eq!(vector_field(&m, &small).unwrap().len(), 4);
        assert!(vector_field(&m, &GridSpec { resolution: 1, ..grid }).is_err());
    }

    #[test]
    fn audit_of_fresh_model_is_clean() {
        let m = learned_model(5);
        let a = stability_audit(&m, 2000, 1).unwrap();
        assert_eq!(a.v_at_target, 0.0);
        assert!(a.is_clean(), "{a:?}");
        assert!(a.radially_growing());
        assert!(stability_audit(&m, 0, 1).is_err());
    }

    #[test]
    fn report_aggregates_are_means() {
        let mk = |i: usize, sea: f64, v: f64, converged: bool| DemoMetrics {
            index: i,
            samples: 10,
            sea,
            v_rmse: v,
            velocity_skipped: 0,
            converged,
            steps_to_converge: None,
            diverged: false,
            aborted: false,
            monotonicity_violations: i,
        };
        let r = EvalReport::from_demos(vec![mk(0, 1.0, 2.0, true), mk(1, 3.0, 4.0, false)]);
        assert_eq!(r.mean_sea, 2.0);
        assert_eq!(r.mean_v_rmse, 3.0);
        assert_eq!(r.convergence_fraction, 0.5);
        assert_eq!(r.monotonicity_violations, 1);
        assert!(!r.has_stability_violation());
    }
}
