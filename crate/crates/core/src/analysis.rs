//! Cooling diagnostics: the correlation-sourced cooling rate and its running
//! integral, instantaneous minima, steady tails, the Q-switch experiment and
//! scans over the initial correlations.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bath::KernelTable;
use crate::error::{Result, SimError};
use crate::meanfield::{phase_u1_at, phase_u2_at, solve_meanfield, MeanFieldTrajectory};
use crate::model::{validate_params, KappaSchedule, PhysicalParams, TimeGrid};
use crate::moments::{PhononBasis, PhononSeries};
use crate::propagator::{solve_ml, PropagatorPair};

/// Sign and phase convention for the correlation-sourced cooling rate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NuConvention {
    /// `2 Im[G (c1 e^{u1} + c2* e^{u2})]`.
    #[default]
    A,
    /// `-Im[G c1 e^{u1} + G c2* e^{u2*}]`.
    B,
}

impl std::str::FromStr for NuConvention {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "a" => Ok(NuConvention::A),
            "b" => Ok(NuConvention::B),
            other => Err(SimError::Invalid(vec![format!("unknown nu_i convention '{other}' (expected a or b)")])),
        }
    }
}

/// Correlation-sourced cooling rate at grid node `j`.
pub fn nu_i_at(traj: &MeanFieldTrajectory, c1: Complex64, c2: Complex64, j: usize, conv: NuConvention) -> f64 {
    let g = traj.coupling[j];
    let e1 = phase_u1_at(traj, j).exp();
    let u2 = phase_u2_at(traj, j);
    match conv {
        NuConvention::A => 2.0 * (g * (c1 * e1 + c2.conj() * u2.exp())).im,
        NuConvention::B => -(g * c1 * e1 + g * c2.conj() * u2.conj().exp()).im,
    }
}

/// `nu_i` on every grid node.
pub fn nu_i(traj: &MeanFieldTrajectory, c1: Complex64, c2: Complex64, conv: NuConvention) -> Vec<f64> {
    (0..traj.grid.len()).map(|j| nu_i_at(traj, c1, c2, j, conv)).collect()
}

/// Cumulative trapezoid `N_cl(t_j) = int_0^{t_j} nu_i` on every grid node.
pub fn n_cl(traj: &MeanFieldTrajectory, c1: Complex64, c2: Complex64, conv: NuConvention) -> Vec<f64> {
    cumulative_trapezoid(&nu_i(traj, c1, c2, conv), traj.grid.dt)
}

pub fn cumulative_trapezoid(y: &[f64], dt: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(y.len());
    let mut acc = 0.0;
    for (k, v) in y.iter().enumerate() {
        if k > 0 {
            acc += 0.5 * dt * (y[k - 1] + v);
        }
        out.push(acc);
    }
    out
}

/// `dN_b/dt` by finite differences: centered inside, one-sided at both ends.
pub fn cooling_rate_numeric(series: &PhononSeries) -> Result<Vec<f64>> {
    let (t, y) = (&series.times, &series.nb);
    let n = t.len();
    if n < 3 {
        return Err(SimError::Insufficient(format!("cooling rate needs at least 3 points, got {n}")));
    }
    let mut rate = Vec::with_capacity(n);
    rate.push((y[1] - y[0]) / (t[1] - t[0]));
    for k in 1..n - 1 {
        rate.push((y[k + 1] - y[k - 1]) / (t[k + 1] - t[k - 1]));
    }
    rate.push((y[n - 1] - y[n - 2]) / (t[n - 1] - t[n - 2]));
    Ok(rate)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InstantMinimum {
    pub t_min: f64,
    pub nb_min: f64,
    /// Vertex of the parabola through the argmin and its neighbours, when
    /// both neighbours exist and the parabola opens upward.
    pub refined: Option<(f64, f64)>,
}

/// Smallest sample inside `[t_a, t_b]`, earliest on ties.
pub fn find_instant_min(series: &PhononSeries, window: (f64, f64)) -> Result<InstantMinimum> {
    let (t_a, t_b) = window;
    let slack = 1e-9 * (1.0 + t_b.abs());
    let mut best: Option<usize> = None;
    for (k, &t) in series.times.iter().enumerate() {
        if t < t_a - slack || t > t_b + slack {
            continue;
        }
        match best {
            Some(b) if series.nb[k] >= series.nb[b] => {}
            _ => best = Some(k),
        }
    }
    let k = best.ok_or_else(|| SimError::Insufficient(format!("no samples in window [{t_a}, {t_b}]")))?;
    let refined = if k > 0 && k + 1 < series.len() {
        parabola_vertex(
            (series.times[k - 1], series.nb[k - 1]),
            (series.times[k], series.nb[k]),
            (series.times[k + 1], series.nb[k + 1]),
        )
    } else {
        None
    };
    Ok(InstantMinimum { t_min: series.times[k], nb_min: series.nb[k], refined })
}

fn parabola_vertex(a: (f64, f64), b: (f64, f64), c: (f64, f64)) -> Option<(f64, f64)> {
    let d1 = (b.1 - a.1) / (b.0 - a.0);
    let d2 = (c.1 - b.1) / (c.0 - b.0);
    let curv = (d2 - d1) / (c.0 - a.0);
    if !(curv > 0.0) {
        return None;
    }
    // y = b.1 + s (t - b.0) + curv (t - b.0)^2 with s the slope at b.
    let slope = d1 + curv * (b.0 - a.0);
    let shift = -slope / (2.0 * curv);
    Some((b.0 + shift, b.1 - slope * slope / (4.0 * curv)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SteadyTail {
    pub mean: f64,
    /// `(max - min) / mean` over the tail.
    pub spread: f64,
    pub flat: bool,
}

pub const TAIL_FRACTION: f64 = 0.1;
pub const FLATNESS_LIMIT: f64 = 0.05;

/// Mean over the last tenth of the time window and whether it is flat.
pub fn steady_tail(series: &PhononSeries) -> Result<SteadyTail> {
    let (Some(&t0), Some(&t1)) = (series.times.first(), series.times.last()) else {
        return Err(SimError::Insufficient("empty series".into()));
    };
    let start = t1 - TAIL_FRACTION * (t1 - t0);
    let tail: Vec<f64> = series
        .times
        .iter()
        .zip(&series.nb)
        .filter(|(t, _)| **t >= start - 1e-9 * (1.0 + t1.abs()))
        .map(|(_, v)| *v)
        .collect();
    let mean = tail.iter().sum::<f64>() / tail.len() as f64;
    let hi = tail.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lo = tail.iter().cloned().fold(f64::INFINITY, f64::min);
    let spread = (hi - lo) / mean.abs();
    Ok(SteadyTail { mean, spread, flat: spread < FLATNESS_LIMIT })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoolingReport {
    pub nb: PhononSeries,
    /// Numerical `dN_b/dt` at the output times.
    pub nu: Vec<f64>,
    /// `N_cl` at the output times.
    pub ncl: Vec<f64>,
    pub t_min: f64,
    pub nb_min: f64,
    pub refined_min: Option<(f64, f64)>,
    pub nb_steady: f64,
    pub tail_spread: f64,
    pub tail_flat: bool,
    pub convention: NuConvention,
    pub params_echo: PhysicalParams,
    pub schedule_echo: KappaSchedule,
    pub grid: TimeGrid,
    pub propagator_mismatch: f64,
}

/// Where and how densely a run reports `N_b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutputSpec {
    /// Spacing between reported times.
    pub spacing: f64,
    /// Search window of the instantaneous minimum; `None` means `[5, t_max]`.
    pub min_window: Option<(f64, f64)>,
    pub convention: NuConvention,
}

impl Default for OutputSpec {
    fn default() -> Self {
        OutputSpec { spacing: 0.05, min_window: None, convention: NuConvention::A }
    }
}

impl OutputSpec {
    pub fn window(&self, grid: &TimeGrid) -> (f64, f64) {
        self.min_window.unwrap_or((5.0_f64.min(grid.t_max()), grid.t_max()))
    }
}

/// Everything that does not depend on the initial moments, prepared once.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub params: PhysicalParams,
    pub schedule: KappaSchedule,
    pub traj: MeanFieldTrajectory,
    pub kernels: KernelTable,
    pub pair: PropagatorPair,
    pub basis: PhononBasis,
    pub output: OutputSpec,
    pub warnings: Vec<String>,
}

impl Simulation {
    pub fn prepare(p: &PhysicalParams, sched: &KappaSchedule, grid: &TimeGrid, output: OutputSpec) -> Result<Self> {
        let warnings = validate_params(p, sched, grid).into_result()?;
        if !(output.spacing > 0.0) {
            return Err(SimError::Invalid(vec!["output spacing > 0".into()]));
        }
        let traj = solve_meanfield(p, sched, grid)?;
        let kernels = KernelTable::build(&p.spectral_density(), &p.occupation, grid);
        let pair = solve_ml(&traj, &kernels)?;
        let indices = grid.subsample(output.spacing);
        let basis = PhononBasis::build(&traj, &kernels, &pair, &indices)?;
        Ok(Simulation { params: p.clone(), schedule: sched.clone(), traj, kernels, pair, basis, output, warnings })
    }

    pub fn grid(&self) -> TimeGrid {
        self.traj.grid
    }

    pub fn series(&self, c1: Complex64, c2: Complex64) -> PhononSeries {
        self.basis.assemble(self.params.n0, self.params.m0, c1, c2)
    }

    /// `N_cl` at the output times.
    pub fn ncl_at_outputs(&self, c1: Complex64, c2: Complex64) -> Vec<f64> {
        let full = n_cl(&self.traj, c1, c2, self.output.convention);
        self.basis.indices.iter().map(|&n| full[n]).collect()
    }

    pub fn report(&self, c1: Complex64, c2: Complex64) -> Result<CoolingReport> {
        let nb = self.series(c1, c2);
        let nu = cooling_rate_numeric(&nb)?;
        let min = find_instant_min(&nb, self.output.window(&self.grid()))?;
        let tail = steady_tail(&nb)?;
        let mut params_echo = self.params.clone();
        params_echo.c1 = c1;
        params_echo.c2 = c2;
        Ok(CoolingReport {
            ncl: self.ncl_at_outputs(c1, c2),
            nu,
            t_min: min.t_min,
            nb_min: min.nb_min,
            refined_min: min.refined,
            nb_steady: tail.mean,
            tail_spread: tail.spread,
            tail_flat: tail.flat,
            convention: self.output.convention,
            params_echo,
            schedule_echo: self.schedule.clone(),
            grid: self.grid(),
            propagator_mismatch: self.basis.propagator_mismatch,
            nb,
        })
    }
}

/// Full pipeline with the decay rate stepped from its base value to `kappa_hi` at `t_switch`.
pub fn run_qswitch(
    p: &PhysicalParams,
    base: &KappaSchedule,
    grid: &TimeGrid,
    t_switch: f64,
    kappa_hi: f64,
    output: OutputSpec,
) -> Result<CoolingReport> {
    grid.index_of(t_switch)?;
    if !(kappa_hi >= 0.0) {
        return Err(SimError::Invalid(vec!["kappa_hi >= 0".into()]));
    }
    let sched = KappaSchedule::q_switch(base.base(), t_switch, kappa_hi)?;
    Simulation::prepare(p, &sched, grid, output)?.report(p.c1, p.c2)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanRow {
    pub c1: Complex64,
    pub c2: Complex64,
    pub t_min: f64,
    pub nb_min: f64,
    pub nb_steady: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanTable {
    pub rows: Vec<ScanRow>,
    /// Index of the earliest minimum, lowest `N_b` on ties.
    pub best: usize,
}

impl Simulation {
    /// One row per `(c1, c2)` pair, in input order (`c1` outer).
    pub fn scan(&self, c1_values: &[Complex64], c2_values: &[Complex64]) -> Result<ScanTable> {
        if c1_values.is_empty() || c2_values.is_empty() {
            return Err(SimError::Insufficient("scan needs at least one c1 and one c2 value".into()));
        }
        let points: Vec<(Complex64, Complex64)> =
            c1_values.iter().flat_map(|&a| c2_values.iter().map(move |&b| (a, b))).collect();
        let window = self.output.window(&self.grid());
        let rows: Vec<ScanRow> = points
            .par_iter()
            .map(|&(c1, c2)| {
                let nb = self.series(c1, c2);
                let min = find_instant_min(&nb, window)?;
                let tail = steady_tail(&nb)?;
                Ok(ScanRow { c1, c2, t_min: min.t_min, nb_min: min.nb_min, nb_steady: tail.mean })
            })
            .collect::<Result<_>>()?;
        let best = (0..rows.len())
            .min_by(|&a, &b| rows[a].t_min.total_cmp(&rows[b].t_min).then(rows[a].nb_min.total_cmp(&rows[b].nb_min)))
            .unwrap_or(0);
        Ok(ScanTable { rows, best })
    }
}

pub fn scan_correlations(
    p: &PhysicalParams,
    sched: &KappaSchedule,
    grid: &TimeGrid,
    c1_values: &[Complex64],
    c2_values: &[Complex64],
    output: OutputSpec,
) -> Result<ScanTable> {
    Simulation::prepare(p, sched, grid, output)?.scan(c1_values, c2_values)
}
