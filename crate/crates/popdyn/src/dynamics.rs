//! Mean-field velocity evaluation and trajectory integration on the simplex.
//!
//! The general switching dynamics are
//!
//! ```text
//! dx_i/dt = sum_j x_j p_ji(x) lambda_j(x)  -  lambda_i(x) x_i
//! ```
//!
//! Configuration-independent and linear-viral kinds are evaluated through
//! their closed forms and agree with the generic evaluation to round-off;
//! pairwise-rule protocols are routed through their quadratic rule dynamics.
//!
//! Integration uses an embedded Dormand-Prince 5(4) pair with standard
//! step-size control. Each accepted step is projected back onto the simplex
//! (clamp tiny negatives, rescale to unit sum); the projection drift is of
//! the order of the local error and preserves fixed points of all in-scope
//! dynamics. A fixed-step fourth-order method is kept as an independent
//! cross-check. Stiffness is reported, never silently mitigated.

use crate::protocol::{DensityVector, ProtocolError, ProtocolKind, ProtocolSpec};
use crate::reduction::RuleIncidence;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IntegrateError {
    #[error("invalid integration options: {0}")]
    InvalidOptions(String),
    #[error("step size underflow at t = {t} (dt = {dt}): dynamics too stiff for an explicit method")]
    StepUnderflow { t: f64, dt: f64, partial: Trajectory },
    #[error("state escaped the simplex domain: {0}")]
    DomainEscape(String),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
}

/// Time-stamped sequence of simplex points.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub points: Vec<DensityVector>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_time(&self) -> f64 {
        *self.times.last().expect("nonempty trajectory")
    }

    pub fn final_point(&self) -> &DensityVector {
        self.points.last().expect("nonempty trajectory")
    }

    /// Linear interpolation at time `t` (clamped to the covered range).
    pub fn sample_at(&self, t: f64) -> Vec<f64> {
        assert!(!self.is_empty());
        if t <= self.times[0] {
            return self.points[0].to_vec();
        }
        if t >= self.final_time() {
            return self.final_point().to_vec();
        }
        let idx = self.times.partition_point(|&u| u <= t);
        let (t0, t1) = (self.times[idx - 1], self.times[idx]);
        let w = (t - t0) / (t1 - t0);
        self.points[idx - 1]
            .iter()
            .zip(self.points[idx].iter())
            .map(|(a, b)| a + w * (b - a))
            .collect()
    }

    /// CSV export with header `t,<state names>`; numbers use the shortest
    /// representation that round-trips.
    pub fn to_csv(&self, names: &[String]) -> String {
        let mut out = String::from("t");
        for n in names {
            out.push(',');
            out.push_str(n);
        }
        out.push('\n');
        for (t, p) in self.times.iter().zip(&self.points) {
            out.push_str(&format!("{t}"));
            for v in p.iter() {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Integration controls.
#[derive(Debug, Clone)]
pub struct IntegrateOptions {
    pub t_end: f64,
    pub dt_init: f64,
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub renormalize_each_step: bool,
}

impl IntegrateOptions {
    /// Defaults with the given end time.
    pub fn to(t_end: f64) -> Self {
        Self {
            t_end,
            dt_init: 1e-2,
            rel_tol: 1e-8,
            abs_tol: 1e-10,
            renormalize_each_step: true,
        }
    }

    fn check(&self) -> Result<(), IntegrateError> {
        if !(self.t_end > 0.0) {
            return Err(IntegrateError::InvalidOptions(format!("t_end = {}", self.t_end)));
        }
        if !(self.dt_init > 0.0) || self.dt_init > self.t_end {
            return Err(IntegrateError::InvalidOptions(format!(
                "dt_init = {} must be positive and at most t_end = {}",
                self.dt_init, self.t_end
            )));
        }
        if !(self.rel_tol > 0.0) || !(self.abs_tol > 0.0) {
            return Err(IntegrateError::InvalidOptions("tolerances must be positive".into()));
        }
        Ok(())
    }
}

impl Default for IntegrateOptions {
    fn default() -> Self {
        Self::to(1.0)
    }
}

/// Result of [`integrate`]: the trajectory plus diagnostics of how well the
/// flow stayed on the simplex before each projection.
#[derive(Debug, Clone)]
pub struct IntegrationOutput {
    pub trajectory: Trajectory,
    /// Weighted local-error norm of the final accepted step (a value of 1
    /// means exactly at tolerance).
    pub final_error_estimate: f64,
    /// Smallest coordinate observed across accepted steps before projection.
    pub min_pre_renormalization: f64,
    /// Largest `|sum(x) - 1|` observed before projection.
    pub max_conservation_drift: f64,
}

/// Velocity evaluator prepared once per integration run.
pub(crate) enum PreparedRhs<'a> {
    Rules { incidence: RuleIncidence },
    Switching(&'a ProtocolSpec),
}

impl PreparedRhs<'_> {
    pub(crate) fn prepare(spec: &ProtocolSpec) -> PreparedRhs<'_> {
        match spec.kind() {
            ProtocolKind::Ppp { rules } => PreparedRhs::Rules {
                incidence: RuleIncidence::from_rules(spec.k(), rules),
            },
            _ => PreparedRhs::Switching(spec),
        }
    }

    pub(crate) fn eval(&self, x: &[f64]) -> Vec<f64> {
        match self {
            PreparedRhs::Rules { incidence } => incidence.rhs(x),
            PreparedRhs::Switching(spec) => spp_rhs_raw(spec, x),
        }
    }
}

/// Specialized velocity evaluation at a raw point (no simplex checks).
pub(crate) fn spp_rhs_raw(spec: &ProtocolSpec, x: &[f64]) -> Vec<f64> {
    let k = x.len();
    match spec.kind() {
        ProtocolKind::Ppp { .. } => unreachable!("spp_rhs_raw on ppp kind"),
        ProtocolKind::Spp { rates, switch } => {
            let lambda: Vec<f64> = (0..k).map(|j| rates[j].eval(x)).collect();
            (0..k)
                .map(|i| {
                    let inflow: f64 =
                        (0..k).map(|j| x[j] * switch[j][i].eval(i, x) * lambda[j]).sum();
                    inflow - lambda[i] * x[i]
                })
                .collect()
        }
        ProtocolKind::Mpp { rates, switch } => (0..k)
            .map(|i| {
                let inflow: f64 = (0..k).map(|j| x[j] * rates[j] * switch[j][i]).sum();
                inflow - rates[i] * x[i]
            })
            .collect(),
        ProtocolKind::Lvp { immunity, delta, .. } => {
            let t_i: Vec<f64> = (0..k).map(|i| immunity.row_dot(i, x)).collect();
            let t_bar: f64 = (0..k).map(|i| x[i] * t_i[i]).sum();
            (0..k).map(|i| delta * (t_i[i] - t_bar) * x[i]).collect()
        }
    }
}

/// Velocity of a switching-kind protocol (`spp`, `mpp`, `lvp`) at `x`,
/// through the kind's closed form.
pub fn spp_rhs(spec: &ProtocolSpec, x: &DensityVector) -> Result<Vec<f64>, ProtocolError> {
    if matches!(spec.kind(), ProtocolKind::Ppp { .. }) {
        return Err(ProtocolError::KindMismatch { op: "spp_rhs", kind: "ppp" });
    }
    Ok(spp_rhs_raw(spec, x))
}

/// Velocity through the generic inflow/outflow sum, evaluating rates and
/// switch weights term by term. Must agree with [`spp_rhs`] to round-off;
/// kept as an independent evaluation route.
pub fn spp_rhs_generic(spec: &ProtocolSpec, x: &DensityVector) -> Result<Vec<f64>, ProtocolError> {
    if matches!(spec.kind(), ProtocolKind::Ppp { .. }) {
        return Err(ProtocolError::KindMismatch { op: "spp_rhs_generic", kind: "ppp" });
    }
    let k = spec.k();
    let mut v = vec![0.0; k];
    for i in 0..k {
        let mut inflow = 0.0;
        for j in 0..k {
            inflow += x[j] * spec.switch_raw(j, i, x) * spec.rate_raw(j, x);
        }
        v[i] = inflow - spec.rate_raw(i, x) * x[i];
    }
    Ok(v)
}

/// Total velocity for any kind: rule protocols go through their quadratic
/// dynamics, switching kinds through [`spp_rhs`].
pub fn rhs(spec: &ProtocolSpec, x: &DensityVector) -> Vec<f64> {
    PreparedRhs::prepare(spec).eval(x)
}

/// Clamp-and-rescale projection onto the simplex.
///
/// Accepts entries down to `-1e-9` and a sum within `1e-6` of 1; anything
/// further out indicates the state genuinely left the domain.
pub fn renormalize(raw: &[f64]) -> Result<DensityVector, IntegrateError> {
    if raw.is_empty() {
        return Err(IntegrateError::DomainEscape("empty vector".into()));
    }
    let mut min = f64::INFINITY;
    let mut sum = 0.0;
    for &v in raw {
        if !v.is_finite() {
            return Err(IntegrateError::DomainEscape(format!("non-finite entry {v}")));
        }
        min = min.min(v);
        sum += v;
    }
    if min <= -1e-9 {
        return Err(IntegrateError::DomainEscape(format!("entry {min} below -1e-9")));
    }
    if (sum - 1.0).abs() > 1e-6 {
        return Err(IntegrateError::DomainEscape(format!("sum {sum} differs from 1 by more than 1e-6")));
    }
    // Inputs already normalized up to summation round-off pass through
    // unchanged. The rescale below always lands inside this band, which
    // makes the projection bit-exactly idempotent.
    let band = raw.len() as f64 * f64::EPSILON;
    if min >= 0.0 && (sum - 1.0).abs() <= band {
        return DensityVector::new(raw.to_vec())
            .map_err(|e| IntegrateError::DomainEscape(e.to_string()));
    }
    let clamped: Vec<f64> = raw.iter().map(|&v| v.max(0.0)).collect();
    let total: f64 = clamped.iter().sum();
    let mut x: Vec<f64> = clamped.iter().map(|&v| v / total).collect();
    let largest = (0..x.len())
        .max_by(|&a, &b| x[a].partial_cmp(&x[b]).expect("finite"))
        .expect("nonempty");
    for _ in 0..4 {
        let drift = 1.0 - x.iter().sum::<f64>();
        if drift.abs() <= 0.5 * band {
            break;
        }
        x[largest] += drift;
    }
    DensityVector::new(x).map_err(|e| IntegrateError::DomainEscape(e.to_string()))
}

// Dormand-Prince 5(4) tableau.
const A: [[f64; 6]; 6] = [
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
// Fifth-order solution weights (identical to the last tableau row).
const B5: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
// Error weights: fifth-order minus embedded fourth-order solution.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

struct RawIntegration {
    times: Vec<f64>,
    points: Vec<Vec<f64>>,
    final_error_estimate: f64,
    min_pre_renormalization: f64,
    max_conservation_drift: f64,
}

/// Shared adaptive stepper. `project` enables the simplex clamp/rescale of
/// each accepted step; the pre-projection extremes are tracked either way.
fn rk45_core(
    f: &dyn Fn(&[f64]) -> Vec<f64>,
    y0: &[f64],
    opts: &IntegrateOptions,
    project: bool,
) -> Result<RawIntegration, IntegrateError> {
    opts.check()?;
    let dim = y0.len();
    let mut t = 0.0;
    let mut y = y0.to_vec();
    let mut dt = opts.dt_init;
    let mut times = vec![0.0];
    let mut points = vec![y.clone()];
    let mut last_err = 0.0;
    let mut min_pre = y.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut max_drift = (y.iter().sum::<f64>() - 1.0).abs();

    // Longest prefix of accepted steps that are valid densities; points of
    // a non-simplex run past that prefix are dropped rather than invented.
    let partial = |times: &[f64], points: &[Vec<f64>]| {
        let mut ts = Vec::new();
        let mut ps = Vec::new();
        for (t, p) in times.iter().zip(points) {
            match DensityVector::new(p.clone()) {
                Ok(d) => {
                    ts.push(*t);
                    ps.push(d);
                }
                Err(_) => break,
            }
        }
        Trajectory { times: ts, points: ps }
    };

    while t < opts.t_end {
        dt = dt.min(opts.t_end - t);
        if dt < 1e-14 * opts.t_end {
            return Err(IntegrateError::StepUnderflow {
                t,
                dt,
                partial: partial(&times, &points),
            });
        }

        let mut k: Vec<Vec<f64>> = Vec::with_capacity(7);
        k.push(f(&y));
        for s in 0..6 {
            let mut stage = y.clone();
            for (j, kj) in k.iter().enumerate() {
                let a = A[s][j];
                if a != 0.0 {
                    for d in 0..dim {
                        stage[d] += dt * a * kj[d];
                    }
                }
            }
            k.push(f(&stage));
        }

        let mut y_new = y.clone();
        let mut err = vec![0.0; dim];
        for (j, kj) in k.iter().enumerate() {
            for d in 0..dim {
                y_new[d] += dt * B5[j] * kj[d];
                err[d] += dt * E[j] * kj[d];
            }
        }

        let mut err_norm_sq = 0.0;
        for d in 0..dim {
            let scale = opts.abs_tol + opts.rel_tol * y[d].abs().max(y_new[d].abs());
            let r = err[d] / scale;
            err_norm_sq += r * r;
        }
        let err_norm = (err_norm_sq / dim as f64).sqrt();

        if err_norm <= 1.0 {
            t += dt;
            last_err = err_norm;
            min_pre = min_pre.min(y_new.iter().cloned().fold(f64::INFINITY, f64::min));
            max_drift = max_drift.max((y_new.iter().sum::<f64>() - 1.0).abs());
            if project {
                if let Some(&bad) = y_new.iter().find(|v| **v <= -1e-9) {
                    return Err(IntegrateError::DomainEscape(format!(
                        "coordinate {bad} at t = {t} (below -1e-9 before projection)"
                    )));
                }
                let clamped: Vec<f64> = y_new.iter().map(|&v| v.max(0.0)).collect();
                let total: f64 = clamped.iter().sum();
                if (total - 1.0).abs() > 1e-6 {
                    return Err(IntegrateError::DomainEscape(format!(
                        "mass {total} at t = {t} (drifted more than 1e-6 before projection)"
                    )));
                }
                y = clamped.iter().map(|&v| v / total).collect();
            } else {
                y = y_new;
            }
            times.push(t);
            points.push(y.clone());
        }

        let factor = if err_norm == 0.0 {
            5.0
        } else {
            (0.9 * err_norm.powf(-0.2)).clamp(0.2, 5.0)
        };
        dt *= factor;
    }

    Ok(RawIntegration {
        times,
        points,
        final_error_estimate: last_err,
        min_pre_renormalization: min_pre,
        max_conservation_drift: max_drift,
    })
}

/// Integrates the mean-field dynamics from `x0` to `opts.t_end`.
pub fn integrate(
    spec: &ProtocolSpec,
    x0: &DensityVector,
    opts: &IntegrateOptions,
) -> Result<IntegrationOutput, IntegrateError> {
    if x0.len() != spec.k() {
        return Err(ProtocolError::Shape(format!(
            "x0 has {} entries for {} states",
            x0.len(),
            spec.k()
        ))
        .into());
    }
    let prepared = PreparedRhs::prepare(spec);
    let raw = rk45_core(&|x| prepared.eval(x), x0, opts, opts.renormalize_each_step)?;
    let points = raw
        .points
        .into_iter()
        .map(|p| {
            if opts.renormalize_each_step {
                DensityVector::new(p).map_err(|e| IntegrateError::DomainEscape(e.to_string()))
            } else {
                renormalize(&p)
            }
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(IntegrationOutput {
        trajectory: Trajectory { times: raw.times, points },
        final_error_estimate: raw.final_error_estimate,
        min_pre_renormalization: raw.min_pre_renormalization,
        max_conservation_drift: raw.max_conservation_drift,
    })
}

/// Integrates and reports the state exactly at `0, sample_dt, 2*sample_dt, ...`
/// up to `t_end`, by chaining adaptive runs segment by segment.
pub fn integrate_on_grid(
    spec: &ProtocolSpec,
    x0: &DensityVector,
    t_end: f64,
    sample_dt: f64,
    opts: &IntegrateOptions,
) -> Result<Trajectory, IntegrateError> {
    if !(sample_dt > 0.0) || !(t_end > 0.0) {
        return Err(IntegrateError::InvalidOptions("t_end and sample_dt must be positive".into()));
    }
    let steps = (t_end / sample_dt + 1e-9).floor() as usize;
    let mut times = vec![0.0];
    let mut points = vec![x0.clone()];
    let mut current = x0.clone();
    let mut t = 0.0;
    for s in 1..=steps {
        let target = s as f64 * sample_dt;
        let seg = IntegrateOptions {
            t_end: target - t,
            dt_init: opts.dt_init.min(target - t),
            ..opts.clone()
        };
        let out = integrate(spec, &current, &seg)?;
        current = out.trajectory.final_point().clone();
        t = target;
        times.push(target);
        points.push(current.clone());
    }
    if t_end - t > 1e-9 * t_end.max(1.0) {
        let seg = IntegrateOptions {
            t_end: t_end - t,
            dt_init: opts.dt_init.min(t_end - t),
            ..opts.clone()
        };
        let out = integrate(spec, &current, &seg)?;
        times.push(t_end);
        points.push(out.trajectory.final_point().clone());
    }
    Ok(Trajectory { times, points })
}

/// Fixed-step classical fourth-order integrator; cross-check for the
/// adaptive method.
pub fn integrate_rk4(
    spec: &ProtocolSpec,
    x0: &DensityVector,
    dt: f64,
    t_end: f64,
) -> Result<Trajectory, IntegrateError> {
    if !(dt > 0.0) || !(t_end > 0.0) {
        return Err(IntegrateError::InvalidOptions("dt and t_end must be positive".into()));
    }
    let prepared = PreparedRhs::prepare(spec);
    let dim = x0.len();
    let mut y: Vec<f64> = x0.to_vec();
    let mut t = 0.0;
    let mut times = vec![0.0];
    let mut points = vec![x0.clone()];
    while t < t_end - 1e-12 * t_end {
        let h = dt.min(t_end - t);
        let k1 = prepared.eval(&y);
        let mid1: Vec<f64> = (0..dim).map(|d| y[d] + 0.5 * h * k1[d]).collect();
        let k2 = prepared.eval(&mid1);
        let mid2: Vec<f64> = (0..dim).map(|d| y[d] + 0.5 * h * k2[d]).collect();
        let k3 = prepared.eval(&mid2);
        let end: Vec<f64> = (0..dim).map(|d| y[d] + h * k3[d]).collect();
        let k4 = prepared.eval(&end);
        for d in 0..dim {
            y[d] += h / 6.0 * (k1[d] + 2.0 * k2[d] + 2.0 * k3[d] + k4[d]);
        }
        let projected = renormalize(&y)?;
        y = projected.to_vec();
        t += h;
        times.push(t);
        points.push(projected);
    }
    Ok(Trajectory { times, points })
}

/// General-purpose adaptive integration of an arbitrary ODE (no simplex
/// projection); used for image systems such as the Lotka-Volterra form.
pub fn integrate_ode(
    f: impl Fn(&[f64]) -> Vec<f64>,
    y0: &[f64],
    opts: &IntegrateOptions,
) -> Result<(Vec<f64>, Vec<Vec<f64>>), IntegrateError> {
    let raw = rk45_core(&f, y0, opts, false)?;
    Ok((raw.times, raw.points))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::{ImmunityMatrix, StateSet};
    use crate::reduction::ppp_to_spp;

    fn states(k: usize) -> StateSet {
        StateSet::new((0..k).map(|i| format!("q{}", i + 1)).collect()).unwrap()
    }

    fn swap_mpp() -> ProtocolSpec {
        ProtocolSpec::mpp(
            states(2),
            vec![1.0, 1.0],
            vec![vec![0.0, 1.0], vec![1.0, 0.0]],
        )
        .unwrap()
    }

    fn worked_ppp() -> ProtocolSpec {
        use crate::protocol::PppRule;
        ProtocolSpec::ppp(
            states(3),
            vec![
                PppRule::new((0, 1), (2, 1)),
                PppRule::new((2, 0), (0, 1)),
                PppRule::new((1, 2), (1, 0)),
            ],
        )
        .unwrap()
    }

    #[test]
    fn swap_rhs_at_vertex() {
        let v = spp_rhs(&swap_mpp(), &DensityVector::vertex(2, 0)).unwrap();
        assert_eq!(v, vec![-1.0, 1.0]);
    }

    #[test]
    fn reduced_rule_dynamics_match_rule_rhs_at_barycenter() {
        let spec = worked_ppp();
        let reduced = ppp_to_spp(&spec).unwrap();
        let x = DensityVector::uniform(3);
        let v = spp_rhs(&reduced, &x).unwrap();
        assert!(v[0].abs() < 1e-14);
        assert!((v[1] - 1.0 / 9.0).abs() < 1e-14);
        assert!((v[2] + 1.0 / 9.0).abs() < 1e-14);
    }

    #[test]
    fn uniform_immunity_has_zero_velocity() {
        let spec = ProtocolSpec::lvp(states(3), ImmunityMatrix::constant(3, 1), 2.0, 1.0).unwrap();
        let x = DensityVector::new(vec![0.5, 0.2, 0.3]).unwrap();
        let v = spp_rhs(&spec, &x).unwrap();
        assert!(v.iter().all(|&c| c.abs() < 1e-15), "{v:?}");
    }

    #[test]
    fn swap_integration_matches_closed_form() {
        // dx1/dt = 1 - 2 x1 from x1 = 1 gives x1(t) = 1/2 + exp(-2 t)/2.
        let out = integrate(
            &swap_mpp(),
            &DensityVector::vertex(2, 0),
            &IntegrateOptions::to(1.0),
        )
        .unwrap();
        let x1 = out.trajectory.final_point()[0];
        let exact = 0.5 + 0.5 * (-2.0f64).exp();
        assert!((x1 - exact).abs() < 1e-6, "x1 = {x1}, exact = {exact}");
    }

    #[test]
    fn rk4_cross_check_against_closed_form() {
        let traj = integrate_rk4(&swap_mpp(), &DensityVector::vertex(2, 0), 1e-3, 1.0).unwrap();
        let exact = 0.5 + 0.5 * (-2.0f64).exp();
        assert!((traj.final_point()[0] - exact).abs() < 1e-9);
    }

    #[test]
    fn zero_rhs_spec_stays_put() {
        let spec = ProtocolSpec::lvp(states(3), ImmunityMatrix::constant(3, 1), 2.0, 1.0).unwrap();
        let x0 = DensityVector::new(vec![0.2, 0.3, 0.5]).unwrap();
        let out = integrate(&spec, &x0, &IntegrateOptions::to(10.0)).unwrap();
        for p in &out.trajectory.points {
            for (a, b) in p.iter().zip(x0.iter()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn conservation_along_rule_trajectory() {
        let out = integrate(
            &worked_ppp(),
            &DensityVector::uniform(3),
            &IntegrateOptions::to(50.0),
        )
        .unwrap();
        for p in &out.trajectory.points {
            assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        }
        assert!(out.min_pre_renormalization >= -1e-9);
        assert!(out.max_conservation_drift <= 1e-9);
    }

    #[test]
    fn renormalize_cases() {
        let a = renormalize(&[0.5, 0.5]).unwrap();
        assert_eq!(a.as_slice(), &[0.5, 0.5]);

        let b = renormalize(&[0.5, 0.3, 0.2 + 1e-10]).unwrap();
        assert!((b.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!((b[2] - 0.2).abs() < 1e-9);

        let c = renormalize(&[-1e-10, 1.0]).unwrap();
        assert_eq!(c.as_slice(), &[0.0, 1.0]);

        assert!(renormalize(&[-1e-8, 1.0]).is_err());
        assert!(renormalize(&[0.6, 0.6]).is_err());
    }

    #[test]
    fn renormalize_is_idempotent() {
        let once = renormalize(&[0.3, 0.30000000005, 0.4]).unwrap();
        let twice = renormalize(&once).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn generic_and_specialized_velocities_agree() {
        use rand::{Rng, SeedableRng};
        let specs = vec![
            swap_mpp(),
            ProtocolSpec::lvp(states(3), ImmunityMatrix::identity(3), 5.0, 1.0).unwrap(),
            ppp_to_spp(&worked_ppp()).unwrap(),
        ];
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(31);
        for spec in &specs {
            let k = spec.k();
            for _ in 0..100 {
                let e: Vec<f64> = (0..k).map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect();
                let sum: f64 = e.iter().sum();
                let x = DensityVector::new(e.into_iter().map(|v| v / sum).collect()).unwrap();
                let a = spp_rhs(spec, &x).unwrap();
                let b = spp_rhs_generic(spec, &x).unwrap();
                for (u, v) in a.iter().zip(&b) {
                    assert!((u - v).abs() < 1e-13, "{u} vs {v} for {}", spec.kind_name());
                }
            }
        }
    }

    #[test]
    fn grid_sampling_hits_exact_times() {
        let traj = integrate_on_grid(
            &swap_mpp(),
            &DensityVector::vertex(2, 0),
            1.0,
            0.25,
            &IntegrateOptions::to(1.0),
        )
        .unwrap();
        assert_eq!(traj.times, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        let exact = 0.5 + 0.5 * (-2.0f64).exp();
        assert!((traj.final_point()[0] - exact).abs() < 1e-6);
    }

    #[test]
    fn tolerance_halving_barely_moves_final_state() {
        let spec = worked_ppp();
        let x0 = DensityVector::new(vec![0.5, 0.25, 0.25]).unwrap();
        let a = integrate(&spec, &x0, &IntegrateOptions::to(20.0)).unwrap();
        let tight = IntegrateOptions {
            rel_tol: 5e-9,
            abs_tol: 5e-11,
            ..IntegrateOptions::to(20.0)
        };
        let b = integrate(&spec, &x0, &tight).unwrap();
        for (u, v) in a.trajectory.final_point().iter().zip(b.trajectory.final_point().iter()) {
            assert!((u - v).abs() < 1e-6);
        }
    }

    #[test]
    fn extreme_rates_report_stiffness_with_partial_trajectory() {
        let spec = ProtocolSpec::mpp(
            states(2),
            vec![1e15, 1e15],
            vec![vec![0.0, 1.0], vec![1.0, 0.0]],
        )
        .unwrap();
        let err = integrate(
            &spec,
            &DensityVector::vertex(2, 0),
            &IntegrateOptions::to(1.0),
        )
        .unwrap_err();
        let IntegrateError::StepUnderflow { partial, .. } = err else {
            panic!("expected a stiffness report, got {err}");
        };
        assert!(!partial.is_empty());
        assert_eq!(partial.points[0].as_slice(), &[1.0, 0.0]);
    }

    #[test]
    fn times_strictly_increase() {
        let out = integrate(
            &swap_mpp(),
            &DensityVector::vertex(2, 0),
            &IntegrateOptions::to(5.0),
        )
        .unwrap();
        for w in out.trajectory.times.windows(2) {
            assert!(w[1] > w[0]);
        }
    }
}
