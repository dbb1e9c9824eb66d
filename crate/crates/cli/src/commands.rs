use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use coolsim::analysis::{n_cl, nu_i, run_qswitch, CoolingReport, Simulation};
use coolsim::io::write_csv;
use coolsim::meanfield::solve_meanfield;
use coolsim::oracle::{evolve_moments, extract_nb, reference_bath, OracleOptions};
use coolsim::{gaussian_physicality, validate_params, PhysicalityReport, TimeGrid};
use num_complex::Complex64;
use serde::Serialize;
use serde_json::json;

use crate::config::{Mode, RunConfig};
use crate::Failure;

const VERSION: &str = env!("CARGO_PKG_VERSION");

pub fn dispatch(cfg: &RunConfig, out: &Path, workers: usize) -> Result<(), Failure> {
    let started = Instant::now();
    let grid = cfg.time_grid()?;
    let warnings = validate_params(&cfg.params, &cfg.schedule, &grid).into_result()?;
    for w in &warnings {
        eprintln!("coolsim: warning: {w}");
    }
    let physicality = gaussian_physicality(cfg.params.n0, cfg.params.m0, cfg.params.c1, cfg.params.c2);
    let header = Header {
        version: VERSION,
        config: cfg,
        physicality_warning: !physicality.passes(),
        physicality: &physicality,
        warnings: &warnings,
    };
    let outcome = match cfg.mode {
        Mode::Run => cmd_run(cfg, &grid, out, &header),
        Mode::Ncl => cmd_ncl(cfg, &grid, out, &header),
        Mode::Scan => cmd_scan(cfg, &grid, out, &header),
        Mode::Qswitch => cmd_qswitch(cfg, &grid, out, &header),
        Mode::OracleCompare => cmd_oracle_compare(cfg, &grid, out, &header),
    };
    // Wall time lives in its own file so the other outputs stay byte-stable.
    let timing = json!({ "mode": cfg.mode, "workers": workers, "seconds": started.elapsed().as_secs_f64() });
    write_json(&out.join("timing.json"), &timing)?;
    outcome
}

#[derive(Serialize)]
struct Header<'a> {
    version: &'static str,
    config: &'a RunConfig,
    physicality_warning: bool,
    physicality: &'a PhysicalityReport,
    warnings: &'a [String],
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path).map(BufWriter::new).map_err(|e| Failure::Config(format!("cannot write {}: {e}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Failure> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn report_json<T: Serialize>(out: &Path, header: &Header, body: T) -> Result<(), Failure> {
    write_json(&out.join("report.json"), &json!({ "header": header, "result": body }))
}

fn prepare(cfg: &RunConfig, grid: &TimeGrid) -> Result<Simulation, Failure> {
    Ok(Simulation::prepare(&cfg.params, &cfg.schedule, grid, cfg.output_spec())?)
}

fn cmd_run(cfg: &RunConfig, grid: &TimeGrid, out: &Path, header: &Header) -> Result<(), Failure> {
    let sim = prepare(cfg, grid)?;
    let report = sim.report(cfg.params.c1, cfg.params.c2)?;
    report.nb.write_csv(create(&out.join("nb.csv"))?)?;
    sim.traj.write_csv(create(&out.join("meanfield.csv"))?)?;
    report_json(out, header, &report)
}

#[derive(Serialize)]
struct Extremum {
    t: f64,
    value: f64,
}

fn extremum(times: &[f64], values: &[f64], largest: bool) -> Extremum {
    let mut k = 0;
    for (j, v) in values.iter().enumerate() {
        if (largest && *v > values[k]) || (!largest && *v < values[k]) {
            k = j;
        }
    }
    Extremum { t: times[k], value: values[k] }
}

/// `N_cl` driven by one channel, divided by that channel's magnitude.
fn normalized(reference: f64) -> f64 {
    if reference > 0.0 {
        reference
    } else {
        1.0
    }
}

fn cmd_ncl(cfg: &RunConfig, grid: &TimeGrid, out: &Path, header: &Header) -> Result<(), Failure> {
    let traj = solve_meanfield(&cfg.params, &cfg.schedule, grid)?;
    let conv = cfg.output.nu_i_convention;
    let (c1, c2) = (cfg.params.c1, cfg.params.c2);
    let zero = Complex64::new(0.0, 0.0);
    let unit = |c: Complex64| if c.norm() > 0.0 { c } else { Complex64::new(1.0, 0.0) };
    let (u1, u2) = (unit(c1), unit(c2));
    let total = n_cl(&traj, c1, c2, conv);
    let rate = nu_i(&traj, c1, c2, conv);
    let per_c1 = n_cl(&traj, u1, zero, conv);
    let per_c2 = n_cl(&traj, zero, u2, conv);
    let (s1, s2) = (normalized(u1.norm()), normalized(u2.norm()));
    let idx = grid.subsample(cfg.output.spacing);
    let times: Vec<f64> = idx.iter().map(|&j| grid.t(j)).collect();
    let col = |v: &[f64], s: f64| idx.iter().map(|&j| v[j] / s).collect::<Vec<f64>>();
    let (per_c1, per_c2) = (col(&per_c1, s1), col(&per_c2, s2));
    let rows = (0..idx.len()).map(|k| {
        let j = idx[k];
        vec![times[k], total[j], rate[j], per_c1[k], per_c2[k]]
    });
    write_csv(create(&out.join("ncl.csv"))?, &["t", "n_cl", "nu_i", "n_cl_per_c1", "n_cl_per_c2"], rows)?;
    report_json(
        out,
        header,
        json!({
            "convention": conv,
            "n_cl_per_c1_max": extremum(&times, &per_c1, true),
            "n_cl_per_c2_min": extremum(&times, &per_c2, false),
        }),
    )
}

fn cmd_scan(cfg: &RunConfig, grid: &TimeGrid, out: &Path, header: &Header) -> Result<(), Failure> {
    let sim = prepare(cfg, grid)?;
    let table = sim.scan(&cfg.scan.c1_values, &cfg.scan.c2_values)?;
    let rows = table.rows.iter().map(|r| vec![r.c1.re, r.c1.im, r.c2.re, r.c2.im, r.t_min, r.nb_min, r.nb_steady]);
    write_csv(
        create(&out.join("scan.csv"))?,
        &["c1_re", "c1_im", "c2_re", "c2_im", "t_min", "n_b_min", "n_b_steady"],
        rows,
    )?;
    write_json(
        &out.join("scan.json"),
        &json!({
            "version": VERSION,
            "params": cfg.params,
            "schedule": cfg.schedule,
            "grid": grid,
            "output": cfg.output,
            "columns": ["c1_re", "c1_im", "c2_re", "c2_im", "t_min", "n_b_min", "n_b_steady"],
        }),
    )?;
    report_json(out, header, json!({ "rows": table.rows, "best": table.rows[table.best], "best_index": table.best }))
}

#[derive(Serialize)]
struct QSwitchResult<'a> {
    switched: &'a CoolingReport,
    unswitched: &'a CoolingReport,
}

fn cmd_qswitch(cfg: &RunConfig, grid: &TimeGrid, out: &Path, header: &Header) -> Result<(), Failure> {
    let q = &cfg.qswitch;
    let spec = cfg.output_spec();
    let switched = run_qswitch(&cfg.params, &cfg.schedule, grid, q.t_switch, q.kappa_hi, spec)?;
    let unswitched = prepare(cfg, grid)?.report(cfg.params.c1, cfg.params.c2)?;
    let kappa = &switched.schedule_echo;
    let rows = (0..switched.nb.len()).map(|k| {
        let t = switched.nb.times[k];
        vec![t, switched.nb.nb[k], unswitched.nb.nb[k], kappa.at(t).unwrap_or(kappa.base())]
    });
    write_csv(create(&out.join("qswitch.csv"))?, &["t", "n_b", "n_b_unswitched", "kappa"], rows)?;
    report_json(out, header, QSwitchResult { switched: &switched, unswitched: &unswitched })
}

fn cmd_oracle_compare(cfg: &RunConfig, grid: &TimeGrid, out: &Path, header: &Header) -> Result<(), Failure> {
    let sim = prepare(cfg, grid)?;
    let kernel = sim.series(cfg.params.c1, cfg.params.c2);
    let stride = ((cfg.output.spacing / grid.dt).round() as usize).max(1);
    let oracle_grid = TimeGrid::new(stride as f64 * grid.dt, grid.n_steps / stride)?;
    let o = &cfg.oracle;
    let bath = reference_bath(&cfg.params, o.omega_max_over_omega_l * cfg.params.omega_l, o.modes)?;
    let options = OracleOptions { max_phase_step: o.max_phase_step, snapshots: 0 };
    let run = evolve_moments(&cfg.params, &cfg.schedule, &bath, &sim.traj, &oracle_grid, options)?;
    let oracle = extract_nb(&run);

    let mut rows = Vec::new();
    let mut worst: f64 = 0.0;
    for (k, &n) in sim.basis.indices.iter().enumerate() {
        if n % stride != 0 || n / stride >= oracle.len() {
            continue;
        }
        let (a, b) = (kernel.nb[k], oracle.nb[n / stride]);
        let rel = (a - b).abs() / b.abs();
        worst = worst.max(rel);
        rows.push(vec![kernel.times[k], a, b, rel]);
    }
    write_csv(create(&out.join("oracle_diff.csv"))?, &["t", "n_b_kernel", "n_b_oracle", "abs_rel_diff"], rows)?;
    let recurrence = bath.recurrence_time();
    let passed = worst <= o.tolerance;
    report_json(
        out,
        header,
        json!({
            "max_abs_rel_diff": worst,
            "tolerance": o.tolerance,
            "passed": passed,
            "modes": o.modes,
            "oracle_substeps": run.substeps,
            "recurrence_time": recurrence,
            "window_exceeds_half_recurrence": oracle_grid.t_max() > 0.5 * recurrence,
        }),
    )?;
    if passed {
        Ok(())
    } else {
        Err(Failure::OracleTolerance(format!("kernel and oracle differ by {worst:.3e} > {:.3e}", o.tolerance)))
    }
}
