//! Phonon number `N_b(t) = <db^dag(t) db(t)>` of the mechanical fluctuation.
//!
//! With `db(t) = M db(0) + L* db^dag(0) + P da(0) + Q da^dag(0) + noise`,
//! the correlation-independent pieces (`M`, `L`, `P`, `Q`, the cavity input
//! noise and the reservoir noise) are gathered once per output time in a
//! [`PhononBasis`]; the initial moments `(n0, m0, c1, c2)` enter only through
//! a cheap bilinear combination.

use std::io::Write;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::bath::KernelTable;
use crate::error::{Result, SimError};
use crate::io::write_csv;
use crate::meanfield::MeanFieldTrajectory;
use crate::model::{PhysicalParams, TimeGrid};
use crate::propagator::{check_grids, response_row, PropagatorPair};

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Photon-sourced kernel `f1(t_i, t_j) = <h_a^dag(t_i) h_a(t_j)>` for the
/// source `h_a(t) = i G*(t) e^{u(t,0)} da(0) + i G(t) e^{u*(t,0)} da^dag(0)`.
pub fn photon_kernel(traj: &MeanFieldTrajectory, n0: f64, i: usize, j: usize) -> Complex64 {
    let g = &traj.coupling;
    let (ui, uj) = (traj.u(i, 0), traj.u(j, 0));
    g[i] * g[j].conj() * (ui.conj() + uj).exp() * n0 + g[i].conj() * g[j] * (ui + uj.conj()).exp() * (n0 + 1.0)
}

/// Cavity-input kernel `f2(t_i, t_j) = G*(t_i) G(t_j) int_0^{min} kappa(s) e^{u(t_i,s) + u*(t_j,s)} ds`
/// (trapezoidal in `s`, `kappa` constant over each step).
pub fn input_noise_kernel(traj: &MeanFieldTrajectory, i: usize, j: usize) -> Complex64 {
    let g = &traj.coupling;
    let top = i.min(j);
    let dt = traj.grid.dt;
    let mut acc = Complex64::new(0.0, 0.0);
    for k in 0..top {
        let at = |s: usize| (traj.u(i, s) + traj.u(j, s).conj()).exp();
        acc += traj.kappa_steps[k] * 0.5 * dt * (at(k) + at(k + 1));
    }
    g[i].conj() * g[j] * acc
}

/// Correlation source `f_ini(t_j) = G*(t_j) e^{u(t_j,0)} c1 + G(t_j) e^{u*(t_j,0)} c2*`.
pub fn correlation_source(traj: &MeanFieldTrajectory, c1: Complex64, c2: Complex64, j: usize) -> Complex64 {
    let g = traj.coupling[j];
    let e = traj.u(j, 0).exp();
    g.conj() * e * c1 + g * e.conj() * c2.conj()
}

/// Correlation-independent ingredients of `N_b` at each output time.
#[derive(Debug, Clone)]
pub struct PhononBasis {
    pub grid: TimeGrid,
    pub indices: Vec<usize>,
    pub m: Vec<Complex64>,
    pub l: Vec<Complex64>,
    /// `P = i int R G* e^{u(tau,0)}`: weight of `da(0)`.
    pub p: Vec<Complex64>,
    /// `Q = i int R G e^{u*(tau,0)}`: weight of `da^dag(0)`.
    pub q: Vec<Complex64>,
    /// `int kappa(s) |V(t,s)|^2 ds` from vacuum cavity input.
    pub input_noise: Vec<f64>,
    /// `int int R*(tau1) R(tau2) f_th(tau1 - tau2)` from the reservoir.
    pub thermal_noise: Vec<f64>,
    /// Largest difference between the forward `M`, `L` and their values
    /// recovered by the backward response sweep.
    pub propagator_mismatch: f64,
}

struct OutputTerms {
    p: Complex64,
    q: Complex64,
    input_noise: f64,
    thermal_noise: f64,
    mismatch: f64,
}

impl PhononBasis {
    pub fn build(
        traj: &MeanFieldTrajectory,
        kernels: &KernelTable,
        pair: &PropagatorPair,
        indices: &[usize],
    ) -> Result<Self> {
        check_grids(traj, kernels)?;
        if pair.grid != traj.grid {
            return Err(SimError::GridMismatch("propagators and mean field differ".into()));
        }
        if let Some(&bad) = indices.iter().find(|&&n| n >= traj.grid.len()) {
            return Err(SimError::GridMismatch(format!("output index {bad} beyond grid")));
        }
        let origin: Vec<Complex64> = (0..traj.grid.len()).map(|j| traj.u(j, 0).exp()).collect();
        let terms: Vec<OutputTerms> =
            indices.par_iter().map(|&n| output_terms(traj, kernels, pair, &origin, n)).collect();
        for (k, t) in terms.iter().enumerate() {
            if !(t.p.is_finite() && t.q.is_finite() && t.input_noise.is_finite() && t.thermal_noise.is_finite()) {
                return Err(SimError::Divergence { stage: "phonon assembly", step: indices[k] });
            }
        }
        Ok(PhononBasis {
            grid: traj.grid,
            indices: indices.to_vec(),
            m: indices.iter().map(|&n| pair.m[n]).collect(),
            l: indices.iter().map(|&n| pair.l[n]).collect(),
            p: terms.iter().map(|t| t.p).collect(),
            q: terms.iter().map(|t| t.q).collect(),
            input_noise: terms.iter().map(|t| t.input_noise).collect(),
            thermal_noise: terms.iter().map(|t| t.thermal_noise).collect(),
            propagator_mismatch: terms.iter().map(|t| t.mismatch).fold(0.0, f64::max),
        })
    }

    pub fn times(&self) -> Vec<f64> {
        self.indices.iter().map(|&n| self.grid.t(n)).collect()
    }

    /// Correlation term `2 Re[M* (P c1 + Q c2*) + L (P c2 + Q c1*)]` at output `k`.
    #[inline]
    pub fn correlation_term(&self, k: usize, c1: Complex64, c2: Complex64) -> f64 {
        let (m, l, p, q) = (self.m[k], self.l[k], self.p[k], self.q[k]);
        2.0 * (m.conj() * (p * c1 + q * c2.conj()) + l * (p * c2 + q * c1.conj())).re
    }

    pub fn assemble(&self, n0: f64, m0: f64, c1: Complex64, c2: Complex64) -> PhononSeries {
        let len = self.indices.len();
        let mut parts = NbBreakdown {
            occupancy: Vec::with_capacity(len),
            photon: Vec::with_capacity(len),
            input_noise: self.input_noise.clone(),
            thermal_noise: self.thermal_noise.clone(),
            correlation: Vec::with_capacity(len),
        };
        let mut nb = Vec::with_capacity(len);
        for k in 0..len {
            let occupancy = self.m[k].norm_sqr() * m0 + self.l[k].norm_sqr() * (m0 + 1.0);
            let photon = self.p[k].norm_sqr() * n0 + self.q[k].norm_sqr() * (n0 + 1.0);
            let correlation = self.correlation_term(k, c1, c2);
            nb.push(occupancy + photon + self.input_noise[k] + self.thermal_noise[k] + correlation);
            parts.occupancy.push(occupancy);
            parts.photon.push(photon);
            parts.correlation.push(correlation);
        }
        PhononSeries { times: self.times(), nb, components: Some(parts) }
    }
}

fn output_terms(
    traj: &MeanFieldTrajectory,
    kernels: &KernelTable,
    pair: &PropagatorPair,
    origin: &[Complex64],
    n: usize,
) -> OutputTerms {
    let zero = Complex64::new(0.0, 0.0);
    if n == 0 {
        return OutputTerms { p: zero, q: zero, input_noise: 0.0, thermal_noise: 0.0, mismatch: 0.0 };
    }
    let row = response_row(traj, kernels, n);
    let r = &row.response;
    let dt = traj.grid.dt;
    let half = 0.5 * dt;
    let g = &traj.coupling;
    let weight = |j: usize| if j == 0 || j == n { half } else { dt };

    let mut p = zero;
    let mut q = zero;
    for j in 0..=n {
        let wr = weight(j) * r[j];
        p += wr * g[j].conj() * origin[j];
        q += wr * g[j] * origin[j].conj();
    }

    // W(t_j) = int_{t_j}^{t_n} R(tau) G(tau) e^{u*(tau, t_j)} dtau, swept backward.
    let mut w_next = zero;
    let mut input_noise = 0.0;
    for j in (0..n).rev() {
        let e = traj.step_factor(j).conj();
        let w_here = e * (w_next + half * r[j + 1] * g[j + 1]) + half * r[j] * g[j];
        input_noise += traj.kappa_steps[j] * half * (w_here.norm_sqr() + w_next.norm_sqr());
        w_next = w_here;
    }

    let v: Vec<Complex64> = (0..=n).map(|j| weight(j) * r[j]).collect();
    let thermal_noise = thermal_quadratic_form(&v, &kernels.thermal);

    let mismatch = (row.m_at_origin - pair.m[n]).norm().max((row.l_at_origin - pair.l[n]).norm());
    OutputTerms { p: I * p, q: I * q, input_noise, thermal_noise, mismatch }
}

/// `sum_{i,j} v_i* f(t_i - t_j) v_j` for a stationary Hermitian kernel
/// (`f(-t) = f(t)*`), via the autocorrelation of `v` computed by FFT.
fn thermal_quadratic_form(v: &[Complex64], kernel: &[Complex64]) -> f64 {
    let n = v.len();
    let len = (2 * n).next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let forward = planner.plan_fft_forward(len);
    let inverse = planner.plan_fft_inverse(len);
    let mut buf = vec![Complex64::new(0.0, 0.0); len];
    buf[..n].copy_from_slice(v);
    forward.process(&mut buf);
    for x in buf.iter_mut() {
        *x = Complex64::new(x.norm_sqr(), 0.0);
    }
    inverse.process(&mut buf);
    // buf[d] / len = sum_j v_{j+d} v_j*, the conjugate of sum_j v*_{j+d} v_j.
    let scale = 1.0 / len as f64;
    let mut total = kernel[0].re * buf[0].re * scale;
    for d in 1..n {
        total += 2.0 * (kernel[d] * buf[d].conj()).re * scale;
    }
    total
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NbBreakdown {
    /// `|M|^2 m0 + |L|^2 (m0 + 1)`.
    pub occupancy: Vec<f64>,
    /// Initial cavity fluctuations (`f1`).
    pub photon: Vec<f64>,
    /// Vacuum cavity input (`f2`).
    pub input_noise: Vec<f64>,
    /// Mechanical reservoir (`f_th`).
    pub thermal_noise: Vec<f64>,
    /// Initial optical-mechanical correlations (`f_ini`).
    pub correlation: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhononSeries {
    pub times: Vec<f64>,
    pub nb: Vec<f64>,
    pub components: Option<NbBreakdown>,
}

impl PhononSeries {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> std::io::Result<()> {
        match &self.components {
            Some(c) => {
                let rows = (0..self.len()).map(|k| {
                    vec![
                        self.times[k],
                        self.nb[k],
                        c.occupancy[k],
                        c.photon[k],
                        c.input_noise[k],
                        c.thermal_noise[k],
                        c.correlation[k],
                    ]
                });
                write_csv(
                    out,
                    &["t", "n_b", "occupancy", "photon", "input_noise", "thermal_noise", "correlation"],
                    rows,
                )
            }
            None => write_csv(out, &["t", "n_b"], (0..self.len()).map(|k| vec![self.times[k], self.nb[k]])),
        }
    }
}

/// Full assembly of `N_b` at the given grid indices.
pub fn assemble_nb(
    traj: &MeanFieldTrajectory,
    kernels: &KernelTable,
    pair: &PropagatorPair,
    p: &PhysicalParams,
    indices: &[usize],
) -> Result<PhononSeries> {
    let basis = PhononBasis::build(traj, kernels, pair, indices)?;
    Ok(basis.assemble(p.n0, p.m0, p.c1, p.c2))
}
