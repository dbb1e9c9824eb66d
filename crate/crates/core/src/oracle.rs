//! Finite-bath reference solution.
//!
//! The reservoir is replaced by `K` explicit modes and all normal-ordered
//! second moments `N_ij = <x_i^dag x_j>`, `A_ij = <x_i x_j>` of
//! `x = (da, db, b_1, ..., b_K)` are integrated exactly (up to the time
//! stepper). Vacuum cavity input leaves normal-ordered moments untouched, so
//! the cavity loss appears only as damping.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::bath::SpectralDensity;
use crate::error::{Result, SimError};
use crate::meanfield::MeanFieldTrajectory;
use crate::model::{KappaSchedule, PhysicalParams, TimeGrid};
use crate::moments::PhononSeries;

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };
const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscretizedBath {
    pub omegas: Vec<f64>,
    pub couplings: Vec<f64>,
    pub spacing: f64,
}

impl DiscretizedBath {
    pub fn len(&self) -> usize {
        self.omegas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.omegas.is_empty()
    }

    /// `sum_j V_j^2`.
    pub fn total_weight(&self) -> f64 {
        self.couplings.iter().map(|v| v * v).sum()
    }

    /// `2i sum_j V_j^2 sin(omega_j t)`.
    pub fn memory_kernel(&self, t: f64) -> Complex64 {
        let s: f64 = self.omegas.iter().zip(&self.couplings).map(|(w, v)| v * v * (w * t).sin()).sum();
        Complex64::new(0.0, 2.0 * s)
    }

    /// First revival time `2 pi / d_omega`.
    pub fn recurrence_time(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.spacing
    }
}

/// Midpoint grid `omega_j = (j - 1/2) d_omega` on `(0, omega_max]` with `V_j^2 = J(omega_j) d_omega`.
pub fn discretize_bath(density: &SpectralDensity, omega_max: f64, modes: usize) -> Result<DiscretizedBath> {
    if !(omega_max > 0.0) || modes == 0 {
        return Err(SimError::Invalid(vec!["omega_max > 0".into(), "K >= 1".into()]));
    }
    let spacing = omega_max / modes as f64;
    let omegas: Vec<f64> = (1..=modes).map(|j| (j as f64 - 0.5) * spacing).collect();
    let couplings = omegas.iter().map(|&w| density.eval(w).map(|jw| (jw * spacing).sqrt())).collect::<Result<_>>()?;
    Ok(DiscretizedBath { omegas, couplings, spacing })
}

/// Dense normal and anomalous moment blocks, row-major `n x n` with `n = K + 2`.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentState {
    pub dim: usize,
    /// `N_ij = <x_i^dag x_j>`.
    pub normal: Vec<Complex64>,
    /// `A_ij = <x_i x_j>`.
    pub anomalous: Vec<Complex64>,
}

pub const CAVITY: usize = 0;
pub const MECHANICS: usize = 1;

impl MomentState {
    pub fn initial(p: &PhysicalParams, bath: &DiscretizedBath) -> Self {
        let dim = bath.len() + 2;
        let mut s = MomentState { dim, normal: vec![ZERO; dim * dim], anomalous: vec![ZERO; dim * dim] };
        s.set_n(CAVITY, CAVITY, Complex64::new(p.n0, 0.0));
        s.set_n(MECHANICS, MECHANICS, Complex64::new(p.m0, 0.0));
        s.set_n(MECHANICS, CAVITY, p.c1);
        s.set_n(CAVITY, MECHANICS, p.c1.conj());
        s.anomalous[CAVITY * dim + MECHANICS] = p.c2;
        s.anomalous[MECHANICS * dim + CAVITY] = p.c2;
        for (j, &w) in bath.omegas.iter().enumerate() {
            s.set_n(j + 2, j + 2, Complex64::new(p.occupation.mean(w), 0.0));
        }
        s
    }

    #[inline]
    pub fn n(&self, i: usize, j: usize) -> Complex64 {
        self.normal[i * self.dim + j]
    }

    #[inline]
    pub fn a(&self, i: usize, j: usize) -> Complex64 {
        self.anomalous[i * self.dim + j]
    }

    fn set_n(&mut self, i: usize, j: usize, v: Complex64) {
        self.normal[i * self.dim + j] = v;
    }

    /// Largest violation of `N = N^dag` and `A = A^T`.
    pub fn hermiticity_residue(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.dim {
            for j in i..self.dim {
                worst = worst.max((self.n(i, j) - self.n(j, i).conj()).norm());
                worst = worst.max((self.a(i, j) - self.a(j, i)).norm());
            }
        }
        worst
    }

    /// Smallest eigenvalue of `[[1 + N^T, A], [A*, N]]`, the Gram matrix of
    /// `(x, x^dag)`; negative values flag an unphysical Gaussian state.
    pub fn min_gram_eigenvalue(&self) -> f64 {
        let n = self.dim;
        let gram = DMatrix::from_fn(2 * n, 2 * n, |r, c| match (r < n, c < n) {
            (true, true) => self.n(c, r) + if r == c { 1.0 } else { 0.0 },
            (true, false) => self.a(r, c - n),
            (false, true) => self.a(r - n, c).conj(),
            (false, false) => self.n(r - n, c - n),
        });
        gram.symmetric_eigenvalues().iter().cloned().fold(f64::INFINITY, f64::min)
    }
}

/// Coefficient matrix with nonzeros only on the diagonal, in row `1` and in column `1`.
struct Arrow {
    diag: Vec<Complex64>,
    /// Row `1` off the diagonal.
    row: Vec<Complex64>,
    /// Column `1` off the diagonal.
    col: Vec<Complex64>,
}

impl Arrow {
    fn zeros(n: usize) -> Self {
        Arrow { diag: vec![ZERO; n], row: vec![ZERO; n], col: vec![ZERO; n] }
    }
}

/// Linear equations `dx/dt = X x + Y x^dag` of the fluctuation operators.
/// `Y` has a vanishing diagonal.
struct Generator {
    n: usize,
    x: Arrow,
    y: Arrow,
    z1: Vec<Complex64>,
    w1: Vec<Complex64>,
}

impl Generator {
    fn new(bath: &DiscretizedBath, omega_m: f64) -> Self {
        let n = bath.len() + 2;
        let mut x = Arrow::zeros(n);
        let mut y = Arrow::zeros(n);
        x.diag[MECHANICS] = -I * omega_m;
        for (j, (&w, &v)) in bath.omegas.iter().zip(&bath.couplings).enumerate() {
            x.diag[j + 2] = -I * w;
            x.row[j + 2] = -I * v;
            x.col[j + 2] = -I * v;
            y.row[j + 2] = -I * v;
            y.col[j + 2] = -I * v;
        }
        Generator { n, x, y, z1: vec![ZERO; n], w1: vec![ZERO; n] }
    }

    fn set_drive(&mut self, g: Complex64, delta: f64, kappa: f64) {
        self.x.diag[CAVITY] = -(I * delta + 0.5 * kappa);
        self.x.col[CAVITY] = I * g;
        self.x.row[CAVITY] = I * g.conj();
        self.y.col[CAVITY] = I * g;
        self.y.row[CAVITY] = I * g;
    }

    /// `dN = Z + Z^dag` with `Z = X* N + Y* A`; `dA = W + W^T + Y` with
    /// `W = X A + Y N`. Only row `1` of `Z` and `W` needs a full reduction;
    /// every other entry follows from the arrow structure in one pass.
    fn rate(&mut self, s: &MomentState, out: &mut MomentState) {
        let n = self.n;
        let (nn, aa) = (&s.normal, &s.anomalous);
        let (x, y) = (&self.x, &self.y);
        let b = MECHANICS;
        let (n1, a1) = (&nn[b * n..(b + 1) * n], &aa[b * n..(b + 1) * n]);

        let xd1 = x.diag[b];
        for k in 0..n {
            self.z1[k] = xd1.conj() * n1[k];
            self.w1[k] = xd1 * a1[k];
        }
        for m in 0..n {
            if m == b {
                continue;
            }
            let (xr, yr) = (x.row[m], y.row[m]);
            let (nm, am) = (&nn[m * n..(m + 1) * n], &aa[m * n..(m + 1) * n]);
            for k in 0..n {
                self.z1[k] += xr.conj() * nm[k] + yr.conj() * am[k];
                self.w1[k] += xr * am[k] + yr * nm[k];
            }
        }
        let (n11, a11) = (n1[b], a1[b]);
        // Z_k1 and W_k1 for k != 1.
        let z_col = |k: usize| x.diag[k].conj() * nn[k * n + b] + x.col[k].conj() * n11 + y.col[k].conj() * a11;
        let w_col = |k: usize| x.diag[k] * aa[k * n + b] + x.col[k] * a11 + y.col[k] * n11;

        // Upper triangle only; the lower one follows from N = N^dag, A = A^T.
        for r in 0..n {
            if r == b {
                continue;
            }
            let (xdr, xcr, ycr) = (x.diag[r], x.col[r], y.col[r]);
            let (nr1, a1r_conj, a1r) = (nn[r * n + b], a1[r].conj(), a1[r]);
            let (src_n, src_a) = (&nn[r * n..(r + 1) * n], &aa[r * n..(r + 1) * n]);
            let (dst_n, dst_a) = (&mut out.normal[r * n..(r + 1) * n], &mut out.anomalous[r * n..(r + 1) * n]);
            for k in r..n {
                if k == b {
                    continue;
                }
                let (xdk, xck, yck) = (x.diag[k], x.col[k], y.col[k]);
                dst_n[k] = (xdr.conj() + xdk) * src_n[k]
                    + xcr.conj() * n1[k]
                    + xck * nr1
                    + ycr.conj() * a1[k]
                    + yck * a1r_conj;
                dst_a[k] = (xdr + xdk) * src_a[k] + xcr * a1[k] + xck * a1r + ycr * n1[k] + yck * n1[r];
            }
        }
        for r in b + 1..n {
            for k in 0..r {
                if k == b {
                    continue;
                }
                out.normal[r * n + k] = out.normal[k * n + r].conj();
                out.anomalous[r * n + k] = out.anomalous[k * n + r];
            }
        }
        for k in 0..n {
            if k == b {
                continue;
            }
            let dn = self.z1[k] + z_col(k).conj();
            out.normal[b * n + k] = dn;
            out.normal[k * n + b] = dn.conj();
            let da = self.w1[k] + w_col(k) + y.row[k];
            out.anomalous[b * n + k] = da;
            out.anomalous[k * n + b] = da;
        }
        out.normal[b * n + b] = Complex64::new(2.0 * self.z1[b].re, 0.0);
        out.anomalous[b * n + b] = 2.0 * self.w1[b];
    }
}

/// Reduced moments recorded at each output time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentSample {
    pub t: f64,
    pub nb: f64,
    pub na: f64,
    /// `<db^dag da>`.
    pub c1: Complex64,
    /// `<db da>`.
    pub c2: Complex64,
    pub hermiticity_residue: f64,
}

#[derive(Debug, Clone)]
pub struct OracleRun {
    pub samples: Vec<MomentSample>,
    /// Full states at the requested snapshot indices.
    pub snapshots: Vec<(f64, MomentState)>,
    pub substeps: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleOptions {
    /// Upper bound on `omega h` for the fastest rotation in the moments,
    /// which is twice the highest mode frequency (anomalous block).
    pub max_phase_step: f64,
    /// Number of evenly spread full-state snapshots to keep.
    pub snapshots: usize,
}

impl Default for OracleOptions {
    fn default() -> Self {
        OracleOptions { max_phase_step: 1.0, snapshots: 0 }
    }
}

/// Four-point Lagrange interpolation of grid data at time `t`.
fn interpolate<T>(values: &[T], dt: f64, t: f64) -> T
where
    T: Copy + std::ops::Mul<f64, Output = T> + std::ops::Add<Output = T>,
{
    let last = values.len() - 1;
    let x = t / dt;
    let k = (x.floor() as isize).clamp(0, last as isize) as usize;
    if (x - k as f64).abs() < 1e-12 {
        return values[k];
    }
    if last < 3 {
        let k = k.min(last - 1);
        let f = x - k as f64;
        return values[k] * (1.0 - f) + values[k + 1] * f;
    }
    let start = k.saturating_sub(1).min(last - 3);
    let mut acc = values[start] * 0.0;
    for a in 0..4 {
        let mut w = 1.0;
        for b in 0..4 {
            if a != b {
                w *= (x - (start + b) as f64) / (a as f64 - b as f64);
            }
        }
        acc = acc + values[start + a] * w;
    }
    acc
}

/// Integrates the moment equations on `grid` (whose nodes must coincide with
/// nodes of the mean-field grid) and records reduced moments on every node.
pub fn evolve_moments(
    p: &PhysicalParams,
    sched: &KappaSchedule,
    bath: &DiscretizedBath,
    traj: &MeanFieldTrajectory,
    grid: &TimeGrid,
    options: OracleOptions,
) -> Result<OracleRun> {
    let ratio = grid.dt / traj.grid.dt;
    if (ratio - ratio.round()).abs() > 1e-9 || ratio < 0.5 || grid.t_max() > traj.grid.t_max() + 1e-9 * grid.dt {
        return Err(SimError::GridMismatch("oracle grid must be a coarsening of the mean-field grid".into()));
    }
    let fastest = bath.omegas.iter().cloned().fold(p.omega_m, f64::max);
    let substeps = ((grid.dt * 2.0 * fastest / options.max_phase_step).ceil() as usize).max(1);
    let h = grid.dt / substeps as f64;

    let mut gen = Generator::new(bath, p.omega_m);
    let mut state = MomentState::initial(p, bath);
    let mut k1 = state.clone();
    let mut k2 = state.clone();
    let mut k3 = state.clone();
    let mut k4 = state.clone();
    let mut stage = state.clone();
    let snapshot_at: Vec<usize> = match options.snapshots {
        0 => Vec::new(),
        1 => vec![grid.n_steps],
        s => (0..s).map(|k| k * grid.n_steps / (s - 1)).collect(),
    };

    let mut samples = Vec::with_capacity(grid.len());
    let mut snapshots = Vec::new();
    let record = |s: &MomentState, t: f64| MomentSample {
        t,
        nb: s.n(MECHANICS, MECHANICS).re,
        na: s.n(CAVITY, CAVITY).re,
        c1: s.n(MECHANICS, CAVITY),
        c2: s.a(MECHANICS, CAVITY),
        hermiticity_residue: s.hermiticity_residue(),
    };
    samples.push(record(&state, 0.0));
    if snapshot_at.contains(&0) {
        snapshots.push((0.0, state.clone()));
    }

    for step in 0..grid.n_steps {
        for sub in 0..substeps {
            let t0 = grid.t(step) + sub as f64 * h;
            // Stages sample the schedule just inside the step so a switch on a
            // node opens the step that starts there.
            let tiny = 1e-9 * h;
            let at = |t: f64| {
                let g = interpolate(&traj.coupling, traj.grid.dt, t);
                let d = interpolate(&traj.delta_eff, traj.grid.dt, t);
                let kappa = sched.at((t - tiny).max(t0 + tiny)).unwrap_or(sched.base());
                (g, d, kappa)
            };
            let (g, d, kappa) = at(t0);
            gen.set_drive(g, d, kappa);
            gen.rate(&state, &mut k1);
            axpy(&state, &k1, 0.5 * h, &mut stage);
            let (g, d, kappa) = at(t0 + 0.5 * h);
            gen.set_drive(g, d, kappa);
            gen.rate(&stage, &mut k2);
            axpy(&state, &k2, 0.5 * h, &mut stage);
            gen.rate(&stage, &mut k3);
            axpy(&state, &k3, h, &mut stage);
            let (g, d, kappa) = at(t0 + h);
            gen.set_drive(g, d, kappa);
            gen.rate(&stage, &mut k4);
            for (blk, (a, b, c, dd)) in [
                (&mut state.normal, (&k1.normal, &k2.normal, &k3.normal, &k4.normal)),
                (&mut state.anomalous, (&k1.anomalous, &k2.anomalous, &k3.anomalous, &k4.anomalous)),
            ] {
                for i in 0..blk.len() {
                    blk[i] += (h / 6.0) * (a[i] + 2.0 * (b[i] + c[i]) + dd[i]);
                }
            }
        }
        let nb = state.n(MECHANICS, MECHANICS);
        if !nb.is_finite() || !state.n(CAVITY, CAVITY).is_finite() {
            return Err(SimError::Divergence { stage: "oracle", step: step + 1 });
        }
        let t = grid.t(step + 1);
        samples.push(record(&state, t));
        if snapshot_at.contains(&(step + 1)) {
            snapshots.push((t, state.clone()));
        }
    }
    Ok(OracleRun { samples, snapshots, substeps })
}

fn axpy(base: &MomentState, k: &MomentState, h: f64, out: &mut MomentState) {
    for (o, (b, v)) in out.normal.iter_mut().zip(base.normal.iter().zip(&k.normal)) {
        *o = b + h * v;
    }
    for (o, (b, v)) in out.anomalous.iter_mut().zip(base.anomalous.iter().zip(&k.anomalous)) {
        *o = b + h * v;
    }
}

pub fn extract_nb(run: &OracleRun) -> PhononSeries {
    PhononSeries {
        times: run.samples.iter().map(|s| s.t).collect(),
        nb: run.samples.iter().map(|s| s.nb).collect(),
        components: None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Correlation {
    /// `<db^dag da>`.
    BeamSplitter,
    /// `<db da>`.
    PairCreation,
}

pub fn extract_correlations(run: &OracleRun, which: Correlation) -> Vec<Complex64> {
    run.samples
        .iter()
        .map(|s| match which {
            Correlation::BeamSplitter => s.c1,
            Correlation::PairCreation => s.c2,
        })
        .collect()
}

/// Bath used for validation: `K` modes up to `omega_max`.
pub fn reference_bath(p: &PhysicalParams, omega_max: f64, modes: usize) -> Result<DiscretizedBath> {
    discretize_bath(&p.spectral_density(), omega_max, modes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::meanfield::solve_meanfield;
    use crate::model::{Occupation, FIG2_KAPPA};
    use approx::assert_relative_eq;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn single_midpoint_mode() {
        let density = SpectralDensity::new(1.0, 1.0, 1.0);
        let bath = discretize_bath(&density, 2.0, 1).unwrap();
        assert_eq!(bath.omegas, vec![1.0]);
        assert_relative_eq!(bath.couplings[0].powi(2), 2.0 * density.eval(1.0).unwrap(), epsilon = 1e-15);
        assert!(discretize_bath(&density, 0.0, 3).is_err());
        assert!(discretize_bath(&density, 1.0, 0).is_err());
    }

    #[test]
    fn total_weight_matches_integral() {
        let p = PhysicalParams::fig2();
        let bath = reference_bath(&p, 200.0, 600).unwrap();
        let exact = p.spectral_density().total_weight();
        assert_relative_eq!(exact, 2.5e-4, epsilon = 1e-15);
        assert!((bath.total_weight() - exact).abs() < 1e-3 * exact);
    }

    #[test]
    fn kernel_reconstruction_converges() {
        let p = PhysicalParams::fig2();
        let density = p.spectral_density();
        let ts: Vec<f64> = (0..=700).map(|k| 0.1 * k as f64).collect();
        let err = |modes: usize| {
            let bath = reference_bath(&p, 200.0, modes).unwrap();
            ts.iter()
                .map(|&t| (bath.memory_kernel(t) - density.memory_kernel(t).unwrap()).norm_sqr())
                .sum::<f64>()
                .sqrt()
        };
        // Below the recurrence time the midpoint sum converges quadratically.
        let (e1, e2, e3) = (err(2400), err(4800), err(9600));
        assert!(e2 < 0.5 * e1 && e3 < 0.5 * e2, "{e1} {e2} {e3}");
    }

    fn decoupled_params() -> PhysicalParams {
        let mut p = PhysicalParams::fig2();
        p.g0 = 0.0;
        p.eta = 0.0;
        p.n0 = 2.0;
        p.m0 = 3.0;
        p.c1 = c(0.5, 0.25);
        p.c2 = c(-0.3, 0.7);
        p.occupation = Occupation::Flat(3.0);
        p
    }

    #[test]
    fn decoupled_modes_rotate_and_decay() {
        let p = decoupled_params();
        let grid = TimeGrid::covering(0.01, 10.0).unwrap();
        let sched = KappaSchedule::constant(FIG2_KAPPA);
        let traj = solve_meanfield(&p, &sched, &grid).unwrap();
        let bath = discretize_bath(&SpectralDensity::new(1e-5, 5.0, 1.0), 20.0, 8).unwrap();
        let mut bath = bath;
        bath.couplings.iter_mut().for_each(|v| *v = 0.0);
        let run = evolve_moments(&p, &sched, &bath, &traj, &grid, OracleOptions::default()).unwrap();
        let delta = traj.delta_eff[0];
        let pair = extract_correlations(&run, Correlation::PairCreation);
        for (s, c2) in run.samples.iter().zip(&pair) {
            let expect = p.c2 * (-(I * (delta + p.omega_m) + 0.5 * FIG2_KAPPA) * s.t).exp();
            assert!((c2 - expect).norm() < 5e-8, "t={} {c2} vs {expect}", s.t);
            assert_relative_eq!(s.nb, p.m0, epsilon = 1e-12);
            assert_relative_eq!(s.na, p.n0 * (-FIG2_KAPPA * s.t).exp(), epsilon = 1e-10);
        }
        let first = &run.samples[0];
        assert_eq!(first.c1, p.c1);
        assert_eq!(extract_nb(&run).nb[0], p.m0);
    }

    #[test]
    fn undamped_free_evolution_keeps_occupancies() {
        let p = decoupled_params();
        let grid = TimeGrid::covering(0.02, 5.0).unwrap();
        let sched = KappaSchedule::constant(0.0);
        let traj = solve_meanfield(&p, &sched, &grid).unwrap();
        let mut bath = discretize_bath(&SpectralDensity::new(1e-5, 5.0, 1.0), 10.0, 5).unwrap();
        bath.couplings.iter_mut().for_each(|v| *v = 0.0);
        let run = evolve_moments(&p, &sched, &bath, &traj, &grid, OracleOptions { snapshots: 2, ..Default::default() })
            .unwrap();
        for s in &run.samples {
            assert_relative_eq!(s.nb, p.m0, epsilon = 1e-12);
            assert_relative_eq!(s.na, p.n0, epsilon = 1e-12);
        }
        let last = &run.snapshots.last().unwrap().1;
        for j in 2..last.dim {
            assert_relative_eq!(last.n(j, j).re, 3.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn weakly_coupled_bath_stays_near_equilibrium() {
        let mut p = decoupled_params();
        p.eta = 1e-5;
        p.c1 = c(0.0, 0.0);
        p.c2 = c(0.0, 0.0);
        let grid = TimeGrid::covering(0.05, 70.0).unwrap();
        let sched = KappaSchedule::constant(FIG2_KAPPA);
        let traj = solve_meanfield(&p, &sched, &grid).unwrap();
        let bath = reference_bath(&p, 40.0, 80).unwrap();
        let run = evolve_moments(&p, &sched, &bath, &traj, &grid, OracleOptions::default()).unwrap();
        for s in &run.samples {
            assert!((s.nb - p.m0).abs() < 0.01 * p.m0, "t={} nb={}", s.t, s.nb);
        }
    }

    #[test]
    fn physical_states_stay_physical() {
        let mut p = PhysicalParams::fig2();
        p.n0 = 1.0;
        p.m0 = 2.0;
        p.occupation = Occupation::Flat(2.0);
        p.c1 = c(0.6, 0.2);
        p.c2 = c(0.3, 0.0);
        assert!(crate::model::gaussian_physicality(p.n0, p.m0, p.c1, p.c2).passes());
        let grid = TimeGrid::covering(0.02, 10.0).unwrap();
        let sched = KappaSchedule::constant(FIG2_KAPPA);
        let traj = solve_meanfield(&p, &sched, &grid).unwrap();
        let bath = reference_bath(&p, 40.0, 40).unwrap();
        let run =
            evolve_moments(&p, &sched, &bath, &traj, &grid, OracleOptions { snapshots: 10, ..Default::default() })
                .unwrap();
        assert_eq!(run.snapshots.len(), 10);
        for (t, s) in &run.snapshots {
            assert!(s.min_gram_eigenvalue() >= -1e-8, "t={t}");
            assert!(s.hermiticity_residue() < 1e-12);
        }
    }

    /// The structured rate equals the dense matrix expressions.
    #[test]
    fn structured_rate_matches_dense_algebra() {
        use nalgebra::DMatrix;
        let p = PhysicalParams::fig2();
        let bath = reference_bath(&p, 20.0, 5).unwrap();
        let n = bath.len() + 2;
        let mut gen = Generator::new(&bath, 1.0);
        gen.set_drive(c(0.2, -0.1), 1.1, 0.05);
        let mut rng = 1u64;
        let mut next = || {
            rng = rng.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (rng >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        let raw = DMatrix::from_fn(n, n, |_, _| c(next(), next()));
        let nm = &raw + raw.adjoint();
        let raw = DMatrix::from_fn(n, n, |_, _| c(next(), next()));
        let am = &raw + raw.transpose();
        let to_vec = |m: &DMatrix<Complex64>| (0..n * n).map(|i| m[(i / n, i % n)]).collect::<Vec<_>>();
        let state = MomentState { dim: n, normal: to_vec(&nm), anomalous: to_vec(&am) };
        let mut out = state.clone();
        gen.rate(&state, &mut out);

        let dense = |a: &Arrow| {
            DMatrix::from_fn(n, n, |r, k| {
                if r == k {
                    a.diag[r]
                } else if r == MECHANICS {
                    a.row[k]
                } else if k == MECHANICS {
                    a.col[r]
                } else {
                    ZERO
                }
            })
        };
        let (xm, ym) = (dense(&gen.x), dense(&gen.y));
        let z = xm.conjugate() * &nm + ym.conjugate() * &am;
        let w = &xm * &am + &ym * &nm;
        let dn = &z + z.adjoint();
        let da = &w + w.transpose() + &ym;
        for i in 0..n * n {
            assert!((out.normal[i] - dn[(i / n, i % n)]).norm() < 1e-13);
            assert!((out.anomalous[i] - da[(i / n, i % n)]).norm() < 1e-13);
        }
    }

    /// Doubling the mode count at least halves the change in `N_b`, inside
    /// the recurrence guard of the coarsest bath.
    #[test]
    fn mode_count_convergence() {
        let p = PhysicalParams::fig2();
        let sched = KappaSchedule::constant(FIG2_KAPPA);
        let grid = TimeGrid::covering(0.01, 6.0).unwrap();
        let traj = solve_meanfield(&p, &sched, &grid).unwrap();
        let omega_max = 40.0;
        let coarse = 40;
        let horizon = 0.5 * reference_bath(&p, omega_max, coarse).unwrap().recurrence_time();
        let series = |modes: usize| {
            let bath = reference_bath(&p, omega_max, modes).unwrap();
            let run = evolve_moments(&p, &sched, &bath, &traj, &grid, OracleOptions::default()).unwrap();
            extract_nb(&run)
        };
        let runs: Vec<PhononSeries> = [coarse, 2 * coarse, 4 * coarse].iter().map(|&k| series(k)).collect();
        let l2 = |a: &PhononSeries, b: &PhononSeries| {
            a.times
                .iter()
                .zip(a.nb.iter().zip(&b.nb))
                .filter(|(t, _)| **t <= horizon)
                .map(|(_, (x, y))| (x - y).powi(2))
                .sum::<f64>()
                .sqrt()
        };
        let (d1, d2) = (l2(&runs[0], &runs[1]), l2(&runs[1], &runs[2]));
        assert!(d2 <= 0.5 * d1, "{d1:e} {d2:e} horizon {horizon}");
    }

    #[test]
    fn interpolation_is_exact_for_cubics() {
        let dt = 0.1;
        let vals: Vec<f64> = (0..20).map(|k| (k as f64 * dt).powi(3) - 2.0 * k as f64 * dt).collect();
        for t in [0.0, 0.05, 0.37, 1.0, 1.83, 1.9] {
            assert_relative_eq!(interpolate(&vals, dt, t), t.powi(3) - 2.0 * t, epsilon = 1e-12);
        }
    }
}
