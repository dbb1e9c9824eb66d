//! Acceptance criteria, one line each. Runs sequentially so that the timing
//! checks are not disturbed by other tests; exits non-zero if any fails.

use std::time::Instant;

use coolsim::analysis::{find_instant_min, n_cl, run_qswitch, NuConvention, OutputSpec, Simulation};
use coolsim::meanfield::{solve_meanfield, MeanFieldTrajectory};
use coolsim::model::FIG2_KAPPA;
use coolsim::oracle::{evolve_moments, extract_nb, reference_bath, OracleOptions};
use coolsim::{solve_ml, KappaSchedule, KernelTable, Occupation, PhysicalParams, SpectralDensity, TimeGrid};
use num_complex::Complex64;

// Criterion 1
const BASE_DT: f64 = 2e-3;
const BASE_T_MAX: f64 = 40.0;
const MIN_WINDOW: (f64, f64) = (5.0, 40.0);
const BASE_T_RANGE: (f64, f64) = (21.4, 23.6);
const BASE_NB_RANGE: (f64, f64) = (0.3, 0.5);
const BASE_RUNTIME_S: f64 = 300.0;
// Criteria 2 and 3
const CORRELATIONS: [f64; 3] = [0.0, 50.0, 100.0];
const C1_T_TARGETS: [f64; 3] = [22.5, 19.15, 17.15];
const C1_NB_TARGETS: [f64; 3] = [0.4, 0.2, 0.07];
const C2_T_TARGETS: [f64; 3] = [22.5, 23.25, 23.85];
const C2_NB_TARGETS: [f64; 3] = [0.4, 0.2, 0.02];
const T_REL_TOL: f64 = 0.05;
const NB_ABS_TOL: f64 = 0.05;
// Criterion 4
const NCL_T_MAX: f64 = 100.0;
const NCL_C1_PEAK: f64 = 20.0;
const NCL_C2_TROUGH: f64 = 45.0;
const NCL_T_REL_TOL: f64 = 0.15;
const LINEARITY_TOL: f64 = 1e-12;
// Criterion 5
const QSWITCH_DT: f64 = 5e-3;
const QSWITCH_T_MAX: f64 = 70.0;
const QSWITCH_AT: f64 = 17.15;
const QSWITCH_KAPPA_HI: f64 = 1.0;
const QSWITCH_TARGET: f64 = 0.096;
const UNSWITCHED_TARGET: f64 = 0.11;
const QSWITCH_TOL: f64 = 0.02;
// Criterion 6
const ORACLE_MODES: usize = 600;
const ORACLE_OMEGA_MAX_OVER_L: f64 = 40.0;
const ORACLE_T_MAX: f64 = 30.0;
const ORACLE_KERNEL_DT: f64 = 5e-3;
const ORACLE_SAMPLE_DT: f64 = 0.1;
const ORACLE_MAX_PHASE_STEP: f64 = 2.0;
const ORACLE_REL_TOL: f64 = 0.02;
const ORACLE_RUNTIME_S: f64 = 900.0;
// Criterion 7
const KERNEL_QUAD_TOL: f64 = 1e-8;
const BATH_WEIGHT_TOL: f64 = 1e-3;
// Criterion 8
const TRIVIAL_TOL: f64 = 1e-8;
const HALVING_FACTOR: f64 = 3.5;
// Criterion 9
const WORKER_TOL: f64 = 1e-12;
const SCAN_NODES: usize = 10_000;
const SCAN_MARGINAL_FRACTION: f64 = 0.1;

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn within(x: f64, (lo, hi): (f64, f64)) -> bool {
    x >= lo && x <= hi
}

fn near_rel(x: f64, target: f64, tol: f64) -> bool {
    (x - target).abs() <= tol * target.abs()
}

fn reference_sim(spacing: f64) -> (Simulation, f64) {
    let p = PhysicalParams::fig2();
    let grid = TimeGrid::covering(BASE_DT, BASE_T_MAX).unwrap();
    let out = OutputSpec { spacing, min_window: Some(MIN_WINDOW), convention: NuConvention::A };
    let start = Instant::now();
    let sim = Simulation::prepare(&p, &KappaSchedule::constant(FIG2_KAPPA), &grid, out).unwrap();
    (sim, start.elapsed().as_secs_f64())
}

fn minimum(sim: &Simulation, c1: f64, c2: f64) -> (f64, f64) {
    let m = find_instant_min(&sim.series(c(c1), c(c2)), MIN_WINDOW).unwrap();
    (m.t_min, m.nb_min)
}

fn baseline_minimum(sim: &Simulation, seconds: f64) -> Outcome {
    let (t, nb) = minimum(sim, 0.0, 0.0);
    let passed = within(t, BASE_T_RANGE) && within(nb, BASE_NB_RANGE) && seconds < BASE_RUNTIME_S;
    outcome(passed, format!("t_min = {t:.3}, N_b = {nb:.4}, runtime {seconds:.1} s"))
}

fn correlation_sweep(sim: &Simulation, beam_splitter: bool) -> Outcome {
    let (t_targets, nb_targets) =
        if beam_splitter { (C1_T_TARGETS, C1_NB_TARGETS) } else { (C2_T_TARGETS, C2_NB_TARGETS) };
    let mins: Vec<(f64, f64)> =
        CORRELATIONS.iter().map(|&x| if beam_splitter { minimum(sim, x, 0.0) } else { minimum(sim, 0.0, x) }).collect();
    let ordered = if beam_splitter {
        mins.windows(2).all(|w| w[1].0 < w[0].0 && w[1].1 < w[0].1)
    } else {
        mins.windows(2).all(|w| w[1].0 >= w[0].0)
    };
    let on_target = mins
        .iter()
        .zip(t_targets.iter().zip(&nb_targets))
        .all(|((t, nb), (tt, nt))| near_rel(*t, *tt, T_REL_TOL) && (nb - nt).abs() <= NB_ABS_TOL);
    let listing: Vec<String> = mins.iter().map(|(t, nb)| format!("({t:.2}, {nb:.3})")).collect();
    outcome(ordered && on_target, format!("(t_min, N_b_min) = {}; ordering {}", listing.join(" "), ordered))
}

fn global_extremum(traj: &MeanFieldTrajectory, values: &[f64], largest: bool) -> (f64, f64) {
    let mut k = 0;
    for (j, v) in values.iter().enumerate() {
        if (largest && *v > values[k]) || (!largest && *v < values[k]) {
            k = j;
        }
    }
    (traj.grid.t(k), values[k])
}

fn ncl_structure() -> Outcome {
    let p = PhysicalParams::fig2();
    let grid = TimeGrid::covering(BASE_DT, NCL_T_MAX).unwrap();
    let traj = solve_meanfield(&p, &KappaSchedule::constant(FIG2_KAPPA), &grid).unwrap();
    let conv = NuConvention::A;
    let per_c1 = n_cl(&traj, c(1.0), c(0.0), conv);
    let per_c2 = n_cl(&traj, c(0.0), c(1.0), conv);
    let (t1, v1) = global_extremum(&traj, &per_c1, true);
    let (t2, v2) = global_extremum(&traj, &per_c2, false);
    let lam = 37.5;
    let linear = |unit: &[f64], scaled: Vec<f64>| {
        unit.iter().zip(&scaled).all(|(u, s)| (s / lam - u).abs() <= LINEARITY_TOL * (1.0 + u.abs()))
    };
    let linear =
        linear(&per_c1, n_cl(&traj, c(lam), c(0.0), conv)) && linear(&per_c2, n_cl(&traj, c(0.0), c(lam), conv));
    let passed = v1 > 0.0
        && near_rel(t1, NCL_C1_PEAK, NCL_T_REL_TOL)
        && v2 < 0.0
        && near_rel(t2, NCL_C2_TROUGH, NCL_T_REL_TOL)
        && linear;
    outcome(passed, format!("N_cl/c1 max {v1:.4} at t = {t1:.2}; N_cl/c2 min {v2:.4} at t = {t2:.2}; linear {linear}"))
}

fn qswitch() -> Outcome {
    let p = PhysicalParams::fig2().with_correlations(c(100.0), c(0.0));
    let grid = TimeGrid::covering(QSWITCH_DT, QSWITCH_T_MAX).unwrap();
    let base = KappaSchedule::constant(FIG2_KAPPA);
    let out = OutputSpec { spacing: 0.25, min_window: None, convention: NuConvention::A };
    let switched = run_qswitch(&p, &base, &grid, QSWITCH_AT, QSWITCH_KAPPA_HI, out).unwrap();
    let plain = Simulation::prepare(&p, &base, &grid, out).unwrap().report(p.c1, p.c2).unwrap();
    let passed = switched.tail_flat
        && (switched.nb_steady - QSWITCH_TARGET).abs() <= QSWITCH_TOL
        && (plain.nb_steady - UNSWITCHED_TARGET).abs() <= QSWITCH_TOL;
    outcome(
        passed,
        format!(
            "switched tail mean {:.4} (spread {:.3}, flat {}); unswitched late mean {:.4}",
            switched.nb_steady, switched.tail_spread, switched.tail_flat, plain.nb_steady
        ),
    )
}

fn oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let p = PhysicalParams::fig2();
    let sched = KappaSchedule::constant(FIG2_KAPPA);
    let grid = TimeGrid::covering(ORACLE_KERNEL_DT, ORACLE_T_MAX).unwrap();
    let out = OutputSpec { spacing: ORACLE_SAMPLE_DT, min_window: None, convention: NuConvention::A };
    let sim = Simulation::prepare(&p, &sched, &grid, out).unwrap();
    let stride = (ORACLE_SAMPLE_DT / ORACLE_KERNEL_DT).round() as usize;
    let oracle_grid = TimeGrid::new(stride as f64 * grid.dt, grid.n_steps / stride).unwrap();
    let bath = reference_bath(&p, ORACLE_OMEGA_MAX_OVER_L * p.omega_l, ORACLE_MODES).unwrap();
    let mut worst = Vec::new();
    for (c1, c2) in [(0.0, 0.0), (100.0, 0.0), (0.0, 100.0)] {
        let q = p.clone().with_correlations(c(c1), c(c2));
        let kernel = sim.series(q.c1, q.c2);
        let run = evolve_moments(
            &q,
            &sched,
            &bath,
            &sim.traj,
            &oracle_grid,
            OracleOptions { max_phase_step: ORACLE_MAX_PHASE_STEP, snapshots: 0 },
        )
        .unwrap();
        let oracle = extract_nb(&run);
        let mut w: f64 = 0.0;
        for (k, &n) in sim.basis.indices.iter().enumerate() {
            if n % stride == 0 {
                let o = oracle.nb[n / stride];
                w = w.max((kernel.nb[k] - o).abs() / o.abs());
            }
        }
        worst.push(w);
    }
    let seconds = start.elapsed().as_secs_f64();
    let passed = worst.iter().all(|&w| w <= ORACLE_REL_TOL) && seconds < ORACLE_RUNTIME_S;
    outcome(
        passed,
        format!(
            "max rel diff {:.2e} / {:.2e} / {:.2e} (c=0, c1=100, c2=100); recurrence 2pi/dw = {:.1}; runtime {seconds:.0} s",
            worst[0],
            worst[1],
            worst[2],
            bath.recurrence_time()
        ),
    )
}

fn kernel_identities() -> Outcome {
    let mut worst_quad: f64 = 0.0;
    let mut imaginary = true;
    for s in [0.5, 1.0, 2.0] {
        let d = SpectralDensity::new(1e-5, 5.0, s);
        for t in [0.05, 0.5, 2.0, 10.0, 40.0, 70.0] {
            let closed = d.memory_kernel(t).unwrap();
            let quad = d.memory_kernel_quadrature(t).unwrap();
            worst_quad = worst_quad.max((closed - quad).norm() / closed.norm());
            imaginary &= closed.re == 0.0;
        }
    }
    let d = SpectralDensity::new(1e-5, 5.0, 1.0);
    let occ = Occupation::Flat(100.0);
    let mut hermitian: f64 = 0.0;
    for (t1, t2) in [(0.3, 1.7), (4.0, 2.5), (10.0, 0.0)] {
        let a = d.thermal_kernel(t1, t2, &occ).unwrap();
        let b = d.thermal_kernel(t2, t1, &occ).unwrap();
        let shifted = d.thermal_kernel(t1 + 3.0, t2 + 3.0, &occ).unwrap();
        hermitian = hermitian.max((a - b.conj()).norm() / a.norm()).max((a - shifted).norm() / a.norm());
    }
    let p = PhysicalParams::fig2();
    let bath = reference_bath(&p, ORACLE_OMEGA_MAX_OVER_L * p.omega_l, ORACLE_MODES).unwrap();
    let exact = p.spectral_density().total_weight();
    let weight = (bath.total_weight() - exact).abs() / exact;
    let passed = worst_quad < KERNEL_QUAD_TOL && imaginary && hermitian < 1e-8 && weight < BATH_WEIGHT_TOL;
    outcome(
        passed,
        format!(
            "closed form vs quadrature {worst_quad:.1e}; Re f = 0 {imaginary}; f_th Hermitian-stationary {hermitian:.1e}; sum V^2 vs int J {weight:.1e}"
        ),
    )
}

fn trivial_limits() -> Outcome {
    let mut p = PhysicalParams::fig2();
    p.g0 = 0.0;
    p.eta = 0.0;
    let sched = KappaSchedule::constant(FIG2_KAPPA);
    let grid = TimeGrid::covering(2e-4, 2.0).unwrap();
    let out = OutputSpec { spacing: 0.1, min_window: None, convention: NuConvention::A };
    let sim = Simulation::prepare(&p, &sched, &grid, out).unwrap();
    let m_err =
        (0..grid.len()).map(|j| (sim.pair.m[j] - Complex64::new(0.0, -grid.t(j)).exp()).norm()).fold(0.0, f64::max);
    let l_max = sim.pair.l.iter().map(|l| l.norm()).fold(0.0, f64::max);
    let nb_err = sim.series(c(0.0), c(0.0)).nb.iter().map(|v| (v - p.m0).abs()).fold(0.0, f64::max);

    let fig2 = PhysicalParams::fig2();
    let short = TimeGrid::covering(0.01, 2.0).unwrap();
    let sim2 = Simulation::prepare(&fig2, &sched, &short, out).unwrap();
    let start_err = [(0.0, 0.0), (100.0, 0.0), (0.0, 100.0), (-30.0, 70.0)]
        .iter()
        .map(|&(a, b)| (sim2.series(c(a), c(b)).nb[0] - fig2.m0).abs())
        .fold(0.0, f64::max);

    let at = 10.0;
    let alpha = |dt: f64| {
        let g = TimeGrid::covering(dt, at).unwrap();
        *solve_meanfield(&fig2, &sched, &g).unwrap().alpha.last().unwrap()
    };
    let (a1, a2, a3) = (alpha(4e-3), alpha(2e-3), alpha(1e-3));
    let mf_factor = (a1 - a2).norm() / (a2 - a3).norm();
    let m_at = |dt: f64| {
        let g = TimeGrid::covering(dt, at).unwrap();
        let traj = solve_meanfield(&fig2, &sched, &g).unwrap();
        let kt = KernelTable::build(&fig2.spectral_density(), &fig2.occupation, &g);
        *solve_ml(&traj, &kt).unwrap().m.last().unwrap()
    };
    let (m1, m2, m3) = (m_at(0.02), m_at(0.01), m_at(0.005));
    let ml_factor = (m1 - m2).norm() / (m2 - m3).norm();
    let passed = m_err < TRIVIAL_TOL
        && l_max < TRIVIAL_TOL
        && nb_err < TRIVIAL_TOL
        && start_err < TRIVIAL_TOL
        && mf_factor >= HALVING_FACTOR
        && ml_factor >= HALVING_FACTOR;
    outcome(
        passed,
        format!(
            "|M - e^-it| {m_err:.1e}, |L| {l_max:.1e}, |N_b - m0| {nb_err:.1e}, N_b(0) {start_err:.1e}; halving factors {mf_factor:.2} (mean field), {ml_factor:.2} (M, L)"
        ),
    )
}

fn determinism_and_cost() -> Outcome {
    let p = PhysicalParams::fig2();
    let sched = KappaSchedule::constant(FIG2_KAPPA);
    let out = OutputSpec { spacing: 0.05, min_window: None, convention: NuConvention::A };
    let small = TimeGrid::covering(0.01, 20.0).unwrap();
    let in_pool = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            let sim = Simulation::prepare(&p, &sched, &small, out).unwrap();
            let mut v = sim.series(c(100.0), c(30.0)).nb;
            v.extend(sim.scan(&[c(0.0), c(50.0)], &[c(0.0), c(25.0)]).unwrap().rows.iter().map(|r| r.nb_min));
            v
        })
    };
    let (one, four) = (in_pool(1), in_pool(4));
    let spread = one.iter().zip(&four).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);

    let grid = TimeGrid::new(BASE_T_MAX / (SCAN_NODES - 1) as f64, SCAN_NODES - 1).unwrap();
    let start = Instant::now();
    let sim = Simulation::prepare(&p, &sched, &grid, out).unwrap();
    sim.report(c(0.0), c(0.0)).unwrap();
    let cold = start.elapsed().as_secs_f64();
    let values: Vec<Complex64> = (0..20).map(|k| c(5.0 * k as f64)).collect();
    let start = Instant::now();
    let table = sim.scan(&values, &values).unwrap();
    let marginal = start.elapsed().as_secs_f64() / table.rows.len() as f64;
    let passed = spread <= WORKER_TOL && marginal <= SCAN_MARGINAL_FRACTION * cold;
    outcome(passed, format!("worker spread {spread:.1e}; cold run {cold:.2} s, marginal scan point {marginal:.2e} s"))
}

fn main() {
    let mut failures = 0;
    let mut report = |n: usize, name: &str, o: Outcome| {
        println!("criterion {n} [{}] {name}: {}", if o.passed { "PASS" } else { "FAIL" }, o.detail);
        if !o.passed {
            failures += 1;
        }
    };
    let (sim, seconds) = reference_sim(0.05);
    report(1, "baseline instantaneous minimum", baseline_minimum(&sim, seconds));
    report(2, "beam-splitter correlation accelerates cooling", correlation_sweep(&sim, true));
    report(3, "pair correlation delays the minimum", correlation_sweep(&sim, false));
    drop(sim);
    report(4, "N_cl lobes and linearity", ncl_structure());
    report(5, "Q-switch freezes the minimum", qswitch());
    report(6, "kernel path matches finite-bath oracle", oracle_equivalence());
    report(7, "kernel identities", kernel_identities());
    report(8, "trivial limits and step halving", trivial_limits());
    report(9, "determinism and scan cost", determinism_and_cost());
    println!("acceptance: {} of 9 criteria failed", failures);
    if failures > 0 {
        std::process::exit(1);
    }
}
