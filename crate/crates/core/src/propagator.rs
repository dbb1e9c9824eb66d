//! Dressed mechanical propagators.
//!
//! The fluctuation `db(t) = M(t) db(0) + L*(t) db^dag(0) + int R(t, tau) h(tau) dtau`
//! where `h` collects every source term. `M`, `L` are integrated forward in
//! `t`; the response row `R(t_n, .) = M(t_n, .) - L*(t_n, .)` needed by the
//! noise integrals is integrated backward in `tau` from the adjoint equations.

use num_complex::Complex64;

use crate::bath::KernelTable;
use crate::error::{Result, SimError};
use crate::meanfield::MeanFieldTrajectory;
use crate::model::TimeGrid;

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

#[derive(Debug, Clone)]
pub struct PropagatorPair {
    pub grid: TimeGrid,
    pub m: Vec<Complex64>,
    pub l: Vec<Complex64>,
}

pub(crate) fn check_grids(traj: &MeanFieldTrajectory, kernels: &KernelTable) -> Result<()> {
    if traj.grid != kernels.grid {
        return Err(SimError::GridMismatch(format!("mean field on {:?}, kernels on {:?}", traj.grid, kernels.grid)));
    }
    Ok(())
}

/// `F(t_i, t_j) = f(t_i - t_j) - [G*(t_i) G(t_j) e^{u(t_i,t_j)} - G(t_i) G*(t_j) e^{u*(t_i,t_j)}]`.
pub fn f_kernel_at(traj: &MeanFieldTrajectory, kernels: &KernelTable, i: usize, j: usize) -> Result<Complex64> {
    if j > i {
        return Err(SimError::Domain(format!("F(t, tau) needs tau <= t, got indices {i} < {j}")));
    }
    let g = &traj.coupling;
    let e = traj.u(i, j).exp();
    let radiation = g[i].conj() * g[j] * e - g[i] * g[j].conj() * e.conj();
    Ok(kernels.memory(i - j) - radiation)
}

pub fn f_kernel(traj: &MeanFieldTrajectory, kernels: &KernelTable, t: f64, tau: f64) -> Result<Complex64> {
    f_kernel_at(traj, kernels, traj.grid.index_of(t)?, traj.grid.index_of(tau)?)
}

/// One trapezoidal step of `x' = -i freq x + d(t)` given `drive = d_n + d_{n+1}`.
#[inline]
pub(crate) fn trapezoid_step(prev: Complex64, freq: f64, half_dt: f64, drive: Complex64) -> Complex64 {
    let c = I * (half_dt * freq);
    (prev * (1.0 - c) + half_dt * drive) / (1.0 + c)
}

/// Trapezoidal `Im`-kernel bath sum `sum_{i<=n} w_i phi_{n+1-i} y_i` with the
/// left endpoint at half weight (the right endpoint is multiplied by `phi_0 = 0`).
#[inline]
fn bath_sum(phi: &[f64], y: &[Complex64], n: usize, dt: f64) -> Complex64 {
    let mut re = 0.0;
    let mut im = 0.0;
    for (yi, &ph) in y[1..=n].iter().zip(phi[1..=n].iter().rev()) {
        re += yi.re * ph;
        im += yi.im * ph;
    }
    let edge = 0.5 * phi[n + 1];
    Complex64::new(dt * (re + edge * y[0].re), dt * (im + edge * y[0].im))
}

/// Solves `M' = -i w M + int F (M + L)`, `L' = +i w L + int F* (M + L)` with
/// `M(0) = 1`, `L(0) = 0`.
pub fn solve_ml(traj: &MeanFieldTrajectory, kernels: &KernelTable) -> Result<PropagatorPair> {
    check_grids(traj, kernels)?;
    let grid = traj.grid;
    let dt = grid.dt;
    let a = 0.5 * dt;
    let w = traj.omega_m;
    let g = &traj.coupling;
    let phi = &kernels.memory_im;

    let mut m = Vec::with_capacity(grid.len());
    let mut l = Vec::with_capacity(grid.len());
    let mut y = Vec::with_capacity(grid.len());
    m.push(Complex64::new(1.0, 0.0));
    l.push(Complex64::new(0.0, 0.0));
    y.push(Complex64::new(1.0, 0.0));

    // s1 = sum_i w_i e^{u(t_n, t_i)} G_i y_i, s2 the same with e^{u*} and G*.
    let mut s1 = Complex64::new(0.0, 0.0);
    let mut s2 = Complex64::new(0.0, 0.0);
    let mut memory_prev = Complex64::new(0.0, 0.0);
    for n in 0..grid.n_steps {
        let weight = if n == 0 { a } else { dt };
        let e = traj.step_factor(n);
        s1 = e * (s1 + weight * g[n] * y[n]);
        s2 = e.conj() * (s2 + weight * g[n].conj() * y[n]);
        let memory = I * bath_sum(phi, &y, n, dt) - (g[n + 1].conj() * s1 - g[n + 1] * s2);
        let drive = memory_prev + memory;
        let m_next = trapezoid_step(m[n], w, a, drive);
        let l_next = trapezoid_step(l[n], -w, a, -drive);
        if !(m_next.is_finite() && l_next.is_finite()) {
            return Err(SimError::Divergence { stage: "propagator", step: n + 1 });
        }
        m.push(m_next);
        l.push(l_next);
        y.push(m_next + l_next);
        memory_prev = memory;
    }
    Ok(PropagatorPair { grid, m, l })
}

impl PropagatorPair {
    /// Largest residual of the discrete equations, recomputing every memory
    /// integral directly from `F`. Quadratic cost; for validation.
    pub fn discrete_residual(&self, traj: &MeanFieldTrajectory, kernels: &KernelTable) -> Result<f64> {
        check_grids(traj, kernels)?;
        let dt = self.grid.dt;
        let w = traj.omega_m;
        // Memory integrals for the M equation (kernel F) and the L equation (kernel F*).
        let memory = |n: usize| -> Result<(Complex64, Complex64)> {
            let mut for_m = Complex64::new(0.0, 0.0);
            let mut for_l = Complex64::new(0.0, 0.0);
            for i in 0..=n {
                let weight = if i == 0 || i == n { 0.5 * dt } else { dt };
                let f = f_kernel_at(traj, kernels, n, i)?;
                let y = self.m[i] + self.l[i];
                for_m += weight * f * y;
                for_l += weight * f.conj() * y;
            }
            Ok((for_m, for_l))
        };
        let mut worst: f64 = 0.0;
        let mut prev = memory(0)?;
        for n in 0..self.grid.n_steps {
            let next = memory(n + 1)?;
            let rm = self.m[n + 1] - self.m[n] - 0.5 * dt * (-I * w * (self.m[n] + self.m[n + 1]) + prev.0 + next.0);
            let rl = self.l[n + 1] - self.l[n] - 0.5 * dt * (I * w * (self.l[n] + self.l[n + 1]) + prev.1 + next.1);
            worst = worst.max(rm.norm()).max(rl.norm());
            prev = next;
        }
        Ok(worst)
    }
}

/// Response row `R(t_n, t_j)`, `j = 0..=n`, together with `M(t_n, 0)` and
/// `L(t_n, 0)` recovered from the same backward sweep.
#[derive(Debug, Clone)]
pub struct ResponseRow {
    pub n: usize,
    pub response: Vec<Complex64>,
    pub m_at_origin: Complex64,
    pub l_at_origin: Complex64,
}

/// Integrates the adjoint pair `d_tau R = i w S`, `d_tau S = i w R - 2 Phi`
/// backward from `R = S = 1` at `tau = t_n`, where `R = M - L*` and
/// `S = M + L*` as functions of the initial time `tau`, and
/// `Phi(tau) = int_tau^t F(s, tau) R(s) ds`.
pub fn response_row(traj: &MeanFieldTrajectory, kernels: &KernelTable, n: usize) -> ResponseRow {
    let dt = traj.grid.dt;
    let a = 0.5 * dt;
    let w = traj.omega_m;
    let g = &traj.coupling;
    let phi = &kernels.memory_im;
    let one = Complex64::new(1.0, 0.0);
    let mut r = vec![Complex64::new(0.0, 0.0); n + 1];
    r[n] = one;
    let mut sigma_next = one;
    let mut big_phi_next = Complex64::new(0.0, 0.0);
    // t1 = sum_{i>j} w_i G*_i e^{u(t_i, t_j)} R_i and t2 with G, e^{u*}.
    let mut t1 = Complex64::new(0.0, 0.0);
    let mut t2 = Complex64::new(0.0, 0.0);
    let c = I * (a * w);
    let det = 1.0 + a * a * w * w;
    let mut sigma0 = one;
    for j in (0..n).rev() {
        let weight = if j + 1 == n { a } else { dt };
        let e = traj.step_factor(j);
        t1 = e * (t1 + weight * g[j + 1].conj() * r[j + 1]);
        t2 = e.conj() * (t2 + weight * g[j + 1] * r[j + 1]);
        // bath part: sum_{i=j+1}^{n} w_i f(t_i - t_j) R_i, w_n = dt/2
        let mut re = 0.0;
        let mut im = 0.0;
        for (ri, &ph) in r[j + 1..n].iter().zip(phi[1..n - j].iter()) {
            re += ri.re * ph;
            im += ri.im * ph;
        }
        let edge = 0.5 * phi[n - j];
        let bath = I * Complex64::new(dt * (re + edge * r[n].re), dt * (im + edge * r[n].im));
        let big_phi = bath - (g[j] * t1 - g[j].conj() * t2);

        let r_next = r[j + 1];
        let p = r_next - c * sigma_next;
        let q = sigma_next - a * (I * w * r_next - 2.0 * big_phi_next) + 2.0 * a * big_phi;
        let rj = (p - c * q) / det;
        let sj = (q - c * p) / det;
        r[j] = rj;
        sigma_next = sj;
        big_phi_next = big_phi;
        sigma0 = sj;
    }
    let r0 = r[0];
    ResponseRow { n, response: r, m_at_origin: 0.5 * (sigma0 + r0), l_at_origin: (0.5 * (sigma0 - r0)).conj() }
}
