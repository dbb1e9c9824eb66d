//! Physical parameters, dissipation schedules, the time grid and the
//! physicality diagnostics for the initial two-mode state.
//!
//! All quantities are in units of the mechanical frequency: `omega_m = 1`,
//! times in `1/omega_m`, and `hbar = k_B = 1`.

use nalgebra::{DMatrix, Matrix4};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};

/// Mean occupation of the mechanical reservoir modes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Occupation {
    /// Every reservoir mode carries the same occupation `m_k`.
    Flat(f64),
    /// Bose-Einstein occupation `1/(exp(omega/T) - 1)`.
    BoseEinstein { temperature: f64 },
}

impl Occupation {
    pub fn mean(&self, omega: f64) -> f64 {
        match *self {
            Occupation::Flat(m) => m,
            Occupation::BoseEinstein { temperature } => {
                if temperature <= 0.0 {
                    0.0
                } else {
                    1.0 / (omega / temperature).exp_m1()
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhysicalParams {
    pub omega_m: f64,
    /// Bare cavity detuning from the drive.
    pub delta_c: f64,
    /// Single-photon optomechanical coupling.
    pub g0: f64,
    pub drive: f64,
    /// System-bath coupling strength of the spectral density.
    pub eta: f64,
    /// Reservoir cutoff frequency.
    pub omega_l: f64,
    /// Ohmicity: `< 1` sub-Ohmic, `1` Ohmic, `> 1` super-Ohmic.
    pub s_exponent: f64,
    pub occupation: Occupation,
    /// Initial cavity fluctuation occupancy.
    pub n0: f64,
    /// Initial mechanical fluctuation occupancy.
    pub m0: f64,
    /// Beam-splitter type initial correlation `<db^dag(0) da(0)>`.
    pub c1: Complex64,
    /// Parametric-amplification type initial correlation `<db(0) da(0)>`.
    pub c2: Complex64,
    pub alpha0: Complex64,
    pub beta0: Complex64,
}

/// Cavity decay rate used by the reference parameter set.
pub const FIG2_KAPPA: f64 = 0.05;

impl PhysicalParams {
    /// Reference parameter set: `eta = 1e-5`, `omega_l = 5`, `s = 1`,
    /// `g0 = 5e-4`, `E = 388`, `alpha0 = beta0 = 100`, `m_k = m0 = 100`, `n0 = 0`,
    /// no initial correlations, and the bare detuning chosen so that the
    /// steady-state effective detuning equals `omega_m` at `kappa = 0.05`.
    pub fn fig2() -> Self {
        let mut p = PhysicalParams {
            omega_m: 1.0,
            delta_c: 0.0,
            g0: 5e-4,
            drive: 388.0,
            eta: 1e-5,
            omega_l: 5.0,
            s_exponent: 1.0,
            occupation: Occupation::Flat(100.0),
            n0: 0.0,
            m0: 100.0,
            c1: Complex64::new(0.0, 0.0),
            c2: Complex64::new(0.0, 0.0),
            alpha0: Complex64::new(100.0, 0.0),
            beta0: Complex64::new(100.0, 0.0),
        };
        p.delta_c = crate::meanfield::bare_detuning_for_target(&p, 1.0, FIG2_KAPPA);
        p
    }

    pub fn with_correlations(mut self, c1: Complex64, c2: Complex64) -> Self {
        self.c1 = c1;
        self.c2 = c2;
        self
    }

    pub fn spectral_density(&self) -> crate::bath::SpectralDensity {
        crate::bath::SpectralDensity::new(self.eta, self.omega_l, self.s_exponent)
    }
}

impl Default for PhysicalParams {
    fn default() -> Self {
        Self::fig2()
    }
}

/// Piecewise-constant, right-continuous cavity decay rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KappaSchedule {
    segments: Vec<(f64, f64)>,
}

// Absolute slack when comparing a time against a segment start, so that a
// grid point computed as `j * dt` lands on the segment it is meant to open.
const SWITCH_SLACK: f64 = 1e-10;

impl KappaSchedule {
    pub fn new(segments: Vec<(f64, f64)>) -> Result<Self> {
        let sched = KappaSchedule { segments };
        let violations = sched.violations();
        if violations.is_empty() {
            Ok(sched)
        } else {
            Err(SimError::Invalid(violations))
        }
    }

    pub fn constant(kappa: f64) -> Self {
        KappaSchedule { segments: vec![(0.0, kappa)] }
    }

    /// Base rate `kappa_lo` switched to `kappa_hi` at `t_switch`.
    pub fn q_switch(kappa_lo: f64, t_switch: f64, kappa_hi: f64) -> Result<Self> {
        Self::new(vec![(0.0, kappa_lo), (t_switch, kappa_hi)])
    }

    pub fn segments(&self) -> &[(f64, f64)] {
        &self.segments
    }

    pub fn base(&self) -> f64 {
        self.segments.first().map(|s| s.1).unwrap_or(0.0)
    }

    pub fn max_kappa(&self) -> f64 {
        self.segments.iter().map(|s| s.1).fold(0.0, f64::max)
    }

    fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        match self.segments.first() {
            None => out.push("schedule must have at least one segment".to_string()),
            Some(&(t0, _)) if t0 != 0.0 => out.push("first schedule segment must start at t = 0".to_string()),
            _ => {}
        }
        for w in self.segments.windows(2) {
            if w[1].0 <= w[0].0 {
                out.push("schedule start times must be strictly increasing".to_string());
                break;
            }
        }
        if self.segments.iter().any(|s| !(s.1 >= 0.0) || !s.1.is_finite()) {
            out.push("kappa >= 0".to_string());
        }
        out
    }

    /// Decay rate at time `t`: value of the last segment starting at or before `t`.
    pub fn at(&self, t: f64) -> Result<f64> {
        if !(t >= 0.0) {
            return Err(SimError::Domain(format!("kappa requested at t = {t} < 0")));
        }
        Ok(self.at_unchecked(t))
    }

    fn at_unchecked(&self, t: f64) -> f64 {
        let probe = t + SWITCH_SLACK * (1.0 + t.abs());
        let idx = self.segments.partition_point(|s| s.0 <= probe);
        self.segments[idx.saturating_sub(1)].1
    }

    /// Exact integral of the decay rate over `[t0, t1]`.
    pub fn integral(&self, t0: f64, t1: f64) -> f64 {
        if t1 <= t0 {
            return 0.0;
        }
        let mut total = 0.0;
        for (k, &(start, value)) in self.segments.iter().enumerate() {
            let end = self.segments.get(k + 1).map(|s| s.0).unwrap_or(f64::INFINITY);
            let lo = start.max(t0);
            let hi = end.min(t1);
            if hi > lo {
                total += value * (hi - lo);
            }
        }
        total
    }

    /// Point values on every grid node.
    pub fn on_grid(&self, grid: &TimeGrid) -> Vec<f64> {
        (0..grid.len()).map(|j| self.at_unchecked(grid.t(j))).collect()
    }

    /// Interval averages `(1/dt) * int_{t_j}^{t_{j+1}} kappa`, one per step.
    pub fn interval_means(&self, grid: &TimeGrid) -> Vec<f64> {
        (0..grid.n_steps)
            .map(|j| {
                // A switch that sits on a grid node opens the following interval.
                let t0 = grid.t(j);
                let t1 = grid.t(j + 1);
                let slack = 1e-6 * grid.dt;
                let interior_switch = self.segments.iter().any(|s| s.0 > t0 + slack && s.0 < t1 - slack);
                if interior_switch {
                    self.integral(t0, t1) / (t1 - t0)
                } else {
                    self.at_unchecked(t0)
                }
            })
            .collect()
    }
}

/// Uniform time grid `t_j = j * dt`, `j = 0..=n_steps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub dt: f64,
    pub n_steps: usize,
}

impl TimeGrid {
    pub fn new(dt: f64, n_steps: usize) -> Result<Self> {
        let grid = TimeGrid { dt, n_steps };
        let v = grid.violations();
        if v.is_empty() {
            Ok(grid)
        } else {
            Err(SimError::Invalid(v))
        }
    }

    /// Grid covering `[0, t_max]` with the last node at the multiple of `dt` closest to `t_max`.
    pub fn covering(dt: f64, t_max: f64) -> Result<Self> {
        if !(dt > 0.0) || !(t_max > 0.0) {
            return Err(SimError::Invalid(vec!["dt > 0".into(), "t_max > 0".into()]));
        }
        Self::new(dt, (t_max / dt).round().max(1.0) as usize)
    }

    fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            v.push("dt > 0".to_string());
        }
        if self.n_steps < 1 {
            v.push("n_steps >= 1".to_string());
        }
        v
    }

    /// Number of nodes, `n_steps + 1`.
    pub fn len(&self) -> usize {
        self.n_steps + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn t(&self, j: usize) -> f64 {
        j as f64 * self.dt
    }

    pub fn t_max(&self) -> f64 {
        self.t(self.n_steps)
    }

    /// Index of a grid-aligned time.
    pub fn index_of(&self, t: f64) -> Result<usize> {
        let k = (t / self.dt).round();
        if k < 0.0 || k > self.n_steps as f64 || (k * self.dt - t).abs() > 1e-6 * self.dt {
            return Err(SimError::OffGrid { t, dt: self.dt });
        }
        Ok(k as usize)
    }

    /// Indices spaced by roughly `spacing`, always including 0 and the last node.
    pub fn subsample(&self, spacing: f64) -> Vec<usize> {
        let stride = ((spacing / self.dt).round() as usize).max(1);
        let mut idx: Vec<usize> = (0..=self.n_steps).step_by(stride).collect();
        if *idx.last().unwrap() != self.n_steps {
            idx.push(self.n_steps);
        }
        idx
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<String>,
    pub warnings: Vec<String>,
}

impl ValidationReport {
    pub fn is_runnable(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn into_result(self) -> Result<Vec<String>> {
        if self.violations.is_empty() {
            Ok(self.warnings)
        } else {
            Err(SimError::Invalid(self.violations))
        }
    }
}

pub fn validate_params(p: &PhysicalParams, sched: &KappaSchedule, grid: &TimeGrid) -> ValidationReport {
    let mut r = ValidationReport::default();
    let mut need = |ok: bool, what: &str| {
        if !ok {
            r.violations.push(what.to_string());
        }
    };
    need(p.omega_m == 1.0, "omega_m = 1");
    need(p.eta >= 0.0, "eta >= 0");
    need(p.omega_l > 0.0, "omega_l > 0");
    need(p.s_exponent > 0.0, "s_exponent > 0");
    need(p.m0 >= 0.0, "m0 >= 0");
    need(p.n0 >= 0.0, "n0 >= 0");
    need(p.drive >= 0.0, "drive_E >= 0");
    match p.occupation {
        Occupation::Flat(m) => need(m >= 0.0, "occupation m_k >= 0"),
        Occupation::BoseEinstein { temperature } => need(temperature >= 0.0, "temperature >= 0"),
    }
    let finite = [p.delta_c, p.g0, p.drive, p.eta, p.omega_l, p.s_exponent, p.n0, p.m0].iter().all(|x| x.is_finite())
        && [p.c1, p.c2, p.alpha0, p.beta0].iter().all(|z| z.is_finite());
    need(finite, "all parameters finite");
    r.violations.extend(sched.violations());
    r.violations.extend(grid.violations());

    if grid.dt > 0.0 {
        if grid.dt * p.omega_l > 0.1 {
            r.warnings
                .push(format!("dt * omega_l = {:.3} > 0.1: reservoir cutoff poorly resolved", grid.dt * p.omega_l));
        }
        // Effective detuning at the start and in the stationary state.
        let initial = (p.delta_c - 2.0 * p.g0 * p.beta0.re).abs();
        let stationary = crate::meanfield::steady_state(p, sched.base()).map(|s| s.delta_eff.abs()).unwrap_or(0.0);
        let delta_max = initial.max(stationary);
        if grid.dt * delta_max > 0.1 {
            r.warnings.push(format!(
                "dt * max|delta_c'| ~ {:.3} > 0.1: effective detuning poorly resolved",
                grid.dt * delta_max
            ));
        }
    }
    r
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhysicalityReport {
    /// `|c1|^2 <= n0 * m0`.
    pub c1_bound: bool,
    /// `|c2|^2 <= min((n0 + 1) m0, n0 (m0 + 1))`.
    pub c2_bound: bool,
    /// `V + (i/2) Omega >= 0` for the quadrature covariance matrix.
    pub uncertainty: bool,
    /// Smallest eigenvalue of `V + (i/2) Omega`.
    pub min_eigenvalue: f64,
}

impl PhysicalityReport {
    pub fn passes(&self) -> bool {
        self.c1_bound && self.c2_bound && self.uncertainty
    }
}

/// Quadrature covariance `V_ij = <{R_i, R_j}>/2` for `R = (x_a, p_a, x_b, p_b)`,
/// built from `n0 = <a^dag a>`, `m0 = <b^dag b>`, `c1 = <b^dag a>`, `c2 = <b a>`
/// with all other second moments zero.
pub fn quadrature_covariance(n0: f64, m0: f64, c1: Complex64, c2: Complex64) -> Matrix4<f64> {
    let z = Complex64::new(0.0, 0.0);
    let re = |x: f64| Complex64::new(x, 0.0);
    // <zeta_k zeta_l> for zeta = (a, a^dag, b, b^dag)
    let w = Matrix4::<Complex64>::new(
        z,
        re(n0 + 1.0),
        c2,
        c1,
        re(n0),
        z,
        c1.conj(),
        c2.conj(),
        c2,
        c1.conj(),
        z,
        re(m0 + 1.0),
        c1,
        c2.conj(),
        re(m0),
        z,
    );
    let gamma = quadrature_transform() * w * quadrature_transform().transpose();
    let mut v = Matrix4::<f64>::zeros();
    for i in 0..4 {
        for j in 0..4 {
            v[(i, j)] = 0.5 * (gamma[(i, j)] + gamma[(j, i)]).re;
        }
    }
    v
}

/// Rows express `(x_a, p_a, x_b, p_b)` in terms of `(a, a^dag, b, b^dag)`.
fn quadrature_transform() -> Matrix4<Complex64> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let r = Complex64::new(s, 0.0);
    let i = Complex64::new(0.0, s);
    let z = Complex64::new(0.0, 0.0);
    Matrix4::new(r, r, z, z, -i, i, z, z, z, z, r, r, z, z, -i, i)
}

/// Symplectic form with `[R_i, R_j] = i Omega_ij`.
pub fn symplectic_form() -> Matrix4<f64> {
    Matrix4::new(0.0, 1.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, -1.0, 0.0)
}

pub fn gaussian_physicality(n0: f64, m0: f64, c1: Complex64, c2: Complex64) -> PhysicalityReport {
    let c1_bound = c1.norm_sqr() <= n0 * m0;
    let c2_bound = c2.norm_sqr() <= ((n0 + 1.0) * m0).min(n0 * (m0 + 1.0));
    let v = quadrature_covariance(n0, m0, c1, c2);
    let omega = symplectic_form();
    let h = DMatrix::<Complex64>::from_fn(4, 4, |i, j| Complex64::new(v[(i, j)], 0.5 * omega[(i, j)]));
    let min_eigenvalue = h.symmetric_eigenvalues().min();
    let scale = 1.0 + n0.abs() + m0.abs() + c1.norm() + c2.norm();
    PhysicalityReport { c1_bound, c2_bound, uncertainty: min_eigenvalue >= -1e-12 * scale, min_eigenvalue }
}
