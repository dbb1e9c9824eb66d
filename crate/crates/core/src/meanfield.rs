//! Classical mean fields of the driven cavity and the mechanical mode with
//! reservoir memory, and the derived drive quantities used downstream.

use std::io::Write;

use num_complex::Complex64;
use statrs::function::gamma::gamma;

use crate::error::{Result, SimError};
use crate::io::write_csv;
use crate::model::{KappaSchedule, PhysicalParams, TimeGrid};

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

#[derive(Debug, Clone)]
pub struct MeanFieldTrajectory {
    pub grid: TimeGrid,
    pub omega_m: f64,
    pub alpha: Vec<Complex64>,
    pub beta: Vec<Complex64>,
    /// Enhanced coupling `G = g0 * alpha`.
    pub coupling: Vec<Complex64>,
    /// Effective detuning `delta_c - 2 g0 Re(beta)`.
    pub delta_eff: Vec<f64>,
    /// `P(t_j) = int_0^{t_j} [i delta_eff + kappa/2]`, so `u(t1, t2) = P(t2) - P(t1)`.
    pub phase_accum: Vec<Complex64>,
    /// Decay rate averaged over each step `[t_j, t_{j+1}]`.
    pub kappa_steps: Vec<f64>,
}

impl MeanFieldTrajectory {
    #[inline]
    pub fn u(&self, i: usize, j: usize) -> Complex64 {
        self.phase_accum[j] - self.phase_accum[i]
    }

    /// `exp(u(t_{j+1}, t_j))`.
    #[inline]
    pub fn step_factor(&self, j: usize) -> Complex64 {
        self.u(j + 1, j).exp()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> std::io::Result<()> {
        let rows = (0..self.grid.len()).map(|j| {
            vec![
                self.grid.t(j),
                self.alpha[j].re,
                self.alpha[j].im,
                self.beta[j].re,
                self.beta[j].im,
                self.coupling[j].norm(),
                self.delta_eff[j],
            ]
        });
        write_csv(out, &["t", "re_alpha", "im_alpha", "re_beta", "im_beta", "abs_g", "delta_eff"], rows)
    }

    /// Largest residual of the discrete trapezoidal equations over all steps.
    pub fn discrete_residual(&self, p: &PhysicalParams) -> f64 {
        let phi = memory_table(p, &self.grid);
        let dt = self.grid.dt;
        let x: Vec<f64> = self.beta.iter().map(|b| 2.0 * b.re).collect();
        let mut worst: f64 = 0.0;
        let mut mem_prev = 0.0;
        for n in 0..self.grid.n_steps {
            let mem_next = memory_sum(&phi, &x, n, dt);
            let kappa = self.kappa_steps[n];
            let ra = |a: Complex64, xb: f64| -(I * p.delta_c + 0.5 * kappa) * a + I * p.g0 * a * xb + p.drive;
            let rb = |b: Complex64, a: Complex64, mem: f64| -I * p.omega_m * b + I * p.g0 * a.norm_sqr() + I * mem;
            let (a0, a1) = (self.alpha[n], self.alpha[n + 1]);
            let (b0, b1) = (self.beta[n], self.beta[n + 1]);
            let resid_a = a1 - a0 - 0.5 * dt * (ra(a0, x[n]) + ra(a1, x[n + 1]));
            let resid_b = b1 - b0 - 0.5 * dt * (rb(b0, a0, mem_prev) + rb(b1, a1, mem_next));
            worst = worst.max(resid_a.norm() / (1.0 + a1.norm())).max(resid_b.norm() / (1.0 + b1.norm()));
            mem_prev = mem_next;
        }
        worst
    }
}

/// `Im f(t_j)` on the grid.
fn memory_table(p: &PhysicalParams, grid: &TimeGrid) -> Vec<f64> {
    let density = p.spectral_density();
    (0..grid.len()).map(|j| density.memory_kernel_im(grid.t(j))).collect()
}

/// Trapezoidal `Im int_0^{t_{n+1}} f(t_{n+1} - tau) x(tau) dtau` using `x_0..=x_n`
/// (the endpoint term vanishes because `f(0) = 0`).
#[inline]
fn memory_sum(phi: &[f64], x: &[f64], n: usize, dt: f64) -> f64 {
    let interior: f64 = x[1..=n].iter().zip(phi[1..=n].iter().rev()).map(|(a, b)| a * b).sum();
    dt * (interior + 0.5 * x[0] * phi[n + 1])
}

pub fn solve_meanfield(p: &PhysicalParams, sched: &KappaSchedule, grid: &TimeGrid) -> Result<MeanFieldTrajectory> {
    const MAX_SWEEPS: usize = 50;
    let n_nodes = grid.len();
    let dt = grid.dt;
    let a = 0.5 * dt;
    let phi = memory_table(p, grid);
    let kappa_steps = sched.interval_means(grid);

    let mut alpha = Vec::with_capacity(n_nodes);
    let mut beta = Vec::with_capacity(n_nodes);
    let mut x = Vec::with_capacity(n_nodes);
    alpha.push(p.alpha0);
    beta.push(p.beta0);
    x.push(2.0 * p.beta0.re);

    let mut mem_prev = 0.0;
    for n in 0..grid.n_steps {
        let kappa = kappa_steps[n];
        let damp = I * p.delta_c + 0.5 * kappa;
        let (a0, b0) = (alpha[n], beta[n]);
        let rate_a0 = -damp * a0 + I * p.g0 * a0 * x[n] + p.drive;
        let rate_b0 = -I * p.omega_m * b0 + I * p.g0 * a0.norm_sqr() + I * mem_prev;
        let mem_next = memory_sum(&phi, &x, n, dt);

        let mut a1 = a0 + dt * rate_a0;
        let mut b1 = b0 + dt * rate_b0;
        let mut converged = false;
        for _ in 0..MAX_SWEEPS {
            let x1 = 2.0 * b1.re;
            let a_new = (a0 + a * (rate_a0 + p.drive)) / (1.0 + a * (damp - I * p.g0 * x1));
            let b_new = (b0 + a * (rate_b0 + I * p.g0 * a_new.norm_sqr() + I * mem_next)) / (1.0 + I * a * p.omega_m);
            let change = (a_new - a1).norm() / (1.0 + a_new.norm()) + (b_new - b1).norm() / (1.0 + b_new.norm());
            a1 = a_new;
            b1 = b_new;
            if change < 1e-14 {
                converged = true;
                break;
            }
        }
        if !(a1.is_finite() && b1.is_finite()) || !converged {
            return Err(SimError::Divergence { stage: "meanfield", step: n + 1 });
        }
        alpha.push(a1);
        beta.push(b1);
        x.push(2.0 * b1.re);
        mem_prev = mem_next;
    }

    let coupling: Vec<Complex64> = alpha.iter().map(|a| a * p.g0).collect();
    let delta_eff: Vec<f64> = beta.iter().map(|b| p.delta_c - 2.0 * p.g0 * b.re).collect();
    let mut phase_accum = Vec::with_capacity(n_nodes);
    phase_accum.push(Complex64::new(0.0, 0.0));
    for n in 0..grid.n_steps {
        let detuning = 0.5 * dt * (delta_eff[n] + delta_eff[n + 1]);
        let decay = 0.5 * sched.integral(grid.t(n), grid.t(n + 1));
        let prev = phase_accum[n];
        phase_accum.push(prev + Complex64::new(decay, detuning));
    }

    Ok(MeanFieldTrajectory {
        grid: *grid,
        omega_m: p.omega_m,
        alpha,
        beta,
        coupling,
        delta_eff,
        phase_accum,
        kappa_steps,
    })
}

fn grid_index(traj: &MeanFieldTrajectory, t: f64) -> Result<usize> {
    traj.grid.index_of(t)
}

/// `u(t1, t2) = -int_{t2}^{t1} [i delta_eff + kappa/2]`.
pub fn phase_u(traj: &MeanFieldTrajectory, t1: f64, t2: f64) -> Result<Complex64> {
    Ok(traj.u(grid_index(traj, t1)?, grid_index(traj, t2)?))
}

/// `u1(t) = u(t, 0) - i omega_m t`.
pub fn phase_u1(traj: &MeanFieldTrajectory, t: f64) -> Result<Complex64> {
    let j = grid_index(traj, t)?;
    Ok(phase_u1_at(traj, j))
}

/// `u2(t) = u(t, 0) + i omega_m t`.
pub fn phase_u2(traj: &MeanFieldTrajectory, t: f64) -> Result<Complex64> {
    let j = grid_index(traj, t)?;
    Ok(phase_u2_at(traj, j))
}

#[inline]
pub fn phase_u1_at(traj: &MeanFieldTrajectory, j: usize) -> Complex64 {
    traj.u(j, 0) - I * traj.omega_m * traj.grid.t(j)
}

#[inline]
pub fn phase_u2_at(traj: &MeanFieldTrajectory, j: usize) -> Complex64 {
    traj.u(j, 0) + I * traj.omega_m * traj.grid.t(j)
}

/// Static response `lambda` of the mechanics to its own displacement through
/// the reservoir: `int_0^inf f = i lambda` with `lambda = 2 eta omega_l Gamma(s)`.
pub fn reservoir_static_shift(p: &PhysicalParams) -> f64 {
    2.0 * p.eta * p.omega_l * gamma(p.s_exponent)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteadyState {
    pub alpha: Complex64,
    pub beta: Complex64,
    pub delta_eff: f64,
}

/// Stationary mean fields at constant `kappa` by damped fixed-point iteration.
pub fn steady_state(p: &PhysicalParams, kappa: f64) -> Result<SteadyState> {
    let lambda = reservoir_static_shift(p);
    let mut beta = 0.0;
    for _ in 0..10_000 {
        let delta_eff = p.delta_c - 2.0 * p.g0 * beta;
        let alpha = p.drive / Complex64::new(0.5 * kappa, delta_eff);
        let next = p.g0 * alpha.norm_sqr() / (1.0 - 2.0 * lambda);
        let blended = 0.5 * beta + 0.5 * next;
        if (blended - beta).abs() <= 1e-14 * (1.0 + beta.abs()) {
            let delta_eff = p.delta_c - 2.0 * p.g0 * blended;
            return Ok(SteadyState {
                alpha: p.drive / Complex64::new(0.5 * kappa, delta_eff),
                beta: Complex64::new(blended, 0.0),
                delta_eff,
            });
        }
        beta = blended;
    }
    Err(SimError::Divergence { stage: "steady state", step: 10_000 })
}

/// Bare detuning for which the stationary effective detuning equals `target`.
pub fn bare_detuning_for_target(p: &PhysicalParams, target: f64, kappa: f64) -> f64 {
    let alpha = p.drive / Complex64::new(0.5 * kappa, target);
    let beta = p.g0 * alpha.norm_sqr() / (1.0 - 2.0 * reservoir_static_shift(p));
    target + 2.0 * p.g0 * beta
}
