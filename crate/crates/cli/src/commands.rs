//! Subcommand implementations.
//!
//! Every command runs inside a [`RunContext`]: artifacts are written as
//! they are produced, and the manifest is stamped by the caller no matter
//! how the command ends. Gate failures are `CliError::Gate` (exit 1);
//! anything wrong with the configuration itself is `CliError::Usage`
//! (exit 2).

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use num_complex::Complex64;

use dkga::grid::{bracket, make_grid, Repr, ScalarField, SpinorField};
use dkga::kleingordon::{
    build_w2, decomposition_w_series, direct_w_series, kernel_y_smoothed, kernel_z_smoothed,
    lorentz_map, ChargeDensity, NucleusPath,
};
use dkga::norms::{
    decay_fit, lebesgue_norm, smallness_functional, sobolev_norm_spinor, NormReport,
};
use dkga::solver::{
    hypotheses, solve_system1, solve_system2, GateReport, RunConfig, SolverError, SystemKind,
    Trajectory, WMode,
};

use crate::config::FileConfig;
use crate::manifest::{blob_sha256, Manifest, RunContext};
use crate::CliError;

/// Coupled-run window check, reported alongside the theorem hypotheses.
pub const HORIZON_WINDOW: &str = "T <= eta_horizon * min(sqrt(M), 1/|v0|)";

/// Maps solver failures onto exit classes: broken configuration is a usage
/// error, everything the theory refuses or the iteration loses is a gate
/// failure.
pub fn from_solver(e: SolverError) -> CliError {
    match e {
        SolverError::GateViolation { .. }
        | SolverError::HorizonViolation { .. }
        | SolverError::BallViolation { .. }
        | SolverError::Divergence { .. }
        | SolverError::NotContracting { .. }
        | SolverError::NotConverged { .. } => CliError::Gate(e.to_string()),
        other => CliError::Usage(other.to_string()),
    }
}

fn norm3(v: [f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

// ---------------------------------------------------------------------------
// Gate assembly

/// Records every hypothesis the named system checks, in the solver's check
/// order. The smallness functional needs the assembled potential, so it is
/// only evaluated once everything cheaper has passed; a refused run still
/// reports the full remainder of the table.
fn hypothesis_report(
    cfg: &RunConfig,
    path: &NucleusPath,
    kind: SystemKind,
) -> Result<GateReport, CliError> {
    let grid = make_grid(cfg.grid_n, cfg.box_length).map_err(|e| CliError::Usage(e.to_string()))?;
    let chi = ChargeDensity::new(&grid, cfg.chi.clone())
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let u0 = cfg.u0.build(&grid).map_err(from_solver)?;
    let state0 = cfg.kg0.build(&grid).map_err(from_solver)?;

    let mut gates = GateReport::default();
    if kind == SystemKind::Coupled {
        let speed = norm3(cfg.v0);
        gates.record(hypotheses::LAUNCH_SPEED, speed, 0.5);
        let window = if speed > 0.0 {
            cfg.nucleus_mass.sqrt().min(1.0 / speed)
        } else {
            cfg.nucleus_mass.sqrt()
        };
        gates.record(HORIZON_WINDOW, cfg.horizon, cfg.eta_horizon * window);
    }
    gates.record(hypotheses::PATH_SPEED, path.sup_speed(), 0.5);
    gates.record(hypotheses::PATH_ACCEL_L1, path.qddot_l1(), 0.5);
    gates.record(hypotheses::PATH_RANGE, path.sup_q(), 1.0);
    gates.record(
        hypotheses::CHI_W11,
        chi.w_k1_norm(1).map_err(|e| CliError::Usage(e.to_string()))?,
        cfg.gates.chi_w11,
    );
    gates.record(
        hypotheses::U0_HS,
        sobolev_norm_spinor(&u0, cfg.s).map_err(|e| CliError::Usage(e.to_string()))?,
        cfg.gates.u0_hs,
    );
    if gates.all_pass() {
        let w = match cfg.w_mode {
            WMode::Decomposition => decomposition_w_series(&chi, path, &state0),
            WMode::Direct => direct_w_series(&chi, path, &state0),
        }
        .map_err(|e| CliError::Usage(e.to_string()))?;
        gates.record(
            hypotheses::SMALLNESS,
            smallness_functional(&w, cfg.s, cfg.weight_n, cfg.v0)
                .map_err(|e| CliError::Usage(e.to_string()))?,
            cfg.gates.smallness,
        );
    } else {
        eprintln!("note: smallness functional skipped, an earlier hypothesis already failed");
    }
    Ok(gates)
}

fn first_violation(gates: &GateReport) -> Option<CliError> {
    gates
        .entries
        .iter()
        .find(|e| !e.value.is_finite() || e.margin < 0.0)
        .map(|e| {
            CliError::Gate(format!(
                "hypothesis violated: {}: value {} exceeds bound {}",
                e.hypothesis, e.value, e.bound
            ))
        })
}

fn gate_table(gates: &GateReport) -> String {
    let mut out = String::new();
    writeln!(
        out,
        "{:<44} {:>13} {:>13} {:>13}",
        "hypothesis", "value", "bound", "margin"
    )
    .unwrap();
    for e in &gates.entries {
        writeln!(
            out,
            "{:<44} {:>13.6e} {:>13.6e} {:>13.6e}",
            e.hypothesis, e.value, e.bound, e.margin
        )
        .unwrap();
    }
    out
}

// ---------------------------------------------------------------------------
// simulate-system1 / simulate-system2

pub fn simulate(ctx: &mut RunContext, file: &FileConfig, kind: SystemKind) -> Result<(), CliError> {
    let cfg = file.to_run_config()?;
    ctx.manifest.config = file.resolved_echo(&cfg);
    let nodes = cfg.node_count().map_err(from_solver)?;
    let path = match kind {
        SystemKind::FieldOnly => file.build_path(&cfg, cfg.dt, nodes)?,
        // The coupled solver owns its path; the inertial launch path is the
        // zeroth iterate and carries the gate inputs (v0, M).
        SystemKind::Coupled => NucleusPath::inertial(cfg.dt, nodes, cfg.nucleus_mass, cfg.v0)
            .map_err(|e| CliError::Usage(e.to_string()))?,
    };

    let clock = Instant::now();
    let pre = hypothesis_report(&cfg, &path, kind)?;
    ctx.timing("gate_assembly_seconds", clock.elapsed().as_secs_f64());
    ctx.manifest.set_gates(&pre);
    ctx.write_artifact("gate.json", pre.to_json().as_bytes())?;
    if let Some(violation) = first_violation(&pre) {
        eprint!("{}", gate_table(&pre));
        return Err(violation);
    }

    let clock = Instant::now();
    let traj = match kind {
        SystemKind::FieldOnly => solve_system1(&cfg, &path),
        SystemKind::Coupled => solve_system2(&cfg),
    }
    .map_err(from_solver)?;
    ctx.timing("solve_seconds", clock.elapsed().as_secs_f64());

    ctx.manifest.set_gates(&traj.gate_report);
    ctx.write_artifact("gate.json", traj.gate_report.to_json().as_bytes())?;
    write_trajectory_artifacts(ctx, &cfg, &traj)?;

    let sup_hs = traj.norm_series.hs.iter().cloned().fold(0.0, f64::max);
    println!(
        "{}: {} nodes, {} sweeps, sup_t ||u||_H^s = {:.6e}",
        ctx.manifest.command,
        traj.times.len(),
        traj.sweep_distances.len(),
        sup_hs
    );
    if let Some(r) = traj.contraction_ratios.last() {
        println!("final contraction ratio {r:.4}");
    }
    if let Some(r) = traj.q_ratios.last() {
        println!("final nucleus iteration ratio {r:.4}");
    }
    println!("artifacts in {}", ctx.out_dir.display());
    Ok(())
}

fn write_trajectory_artifacts(
    ctx: &mut RunContext,
    cfg: &RunConfig,
    traj: &Trajectory,
) -> Result<(), CliError> {
    ctx.write_artifact("series.csv", traj.norm_series.to_csv().as_bytes())?;
    ctx.write_artifact("norms.csv", traj.reports.to_csv().as_bytes())?;
    ctx.write_artifact("norms.json", traj.reports.to_json().as_bytes())?;
    ctx.write_artifact("path.csv", traj.path.to_csv_string().as_bytes())?;

    let mut sweeps = String::from("sweep,x_distance,ratio\n");
    for (i, d) in traj.sweep_distances.iter().enumerate() {
        let ratio = if i == 0 {
            String::new()
        } else {
            traj.contraction_ratios
                .get(i - 1)
                .map_or(String::new(), |r| r.to_string())
        };
        writeln!(sweeps, "{},{},{}", i + 1, d, ratio).unwrap();
    }
    ctx.write_artifact("sweeps.csv", sweeps.as_bytes())?;

    if !traj.q_distances.is_empty() {
        let mut rows = String::from("iteration,z_distance,ratio\n");
        for (i, d) in traj.q_distances.iter().enumerate() {
            let ratio = if i == 0 {
                String::new()
            } else {
                traj.q_ratios
                    .get(i - 1)
                    .map_or(String::new(), |r| r.to_string())
            };
            writeln!(rows, "{},{},{}", i + 1, d, ratio).unwrap();
        }
        ctx.write_artifact("q_iter.csv", rows.as_bytes())?;
    }

    if cfg.dump_stride > 0 {
        for k in (0..traj.u_snapshots.len()).step_by(cfg.dump_stride) {
            let mut buf = Vec::new();
            traj.u_snapshots[k]
                .write_dump(&mut buf)
                .map_err(|e| CliError::Usage(e.to_string()))?;
            ctx.write_artifact(&format!("u_{k:05}.dump"), &buf)?;
            let mut buf = Vec::new();
            traj.w_snapshots[k]
                .write_dump(&mut buf)
                .map_err(|e| CliError::Usage(e.to_string()))?;
            ctx.write_artifact(&format!("w_{k:05}.dump"), &buf)?;
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// gate-report

pub fn gate_report(ctx: &mut RunContext, file: &FileConfig, system: u8) -> Result<(), CliError> {
    let kind = match system {
        1 => SystemKind::FieldOnly,
        2 => SystemKind::Coupled,
        other => {
            return Err(CliError::Usage(format!(
                "--system must be 1 or 2, got {other}"
            )))
        }
    };
    let cfg = file.to_run_config()?;
    ctx.manifest.config = file.resolved_echo(&cfg);
    let nodes = cfg.node_count().map_err(from_solver)?;
    let path = match kind {
        SystemKind::FieldOnly => file.build_path(&cfg, cfg.dt, nodes)?,
        SystemKind::Coupled => NucleusPath::inertial(cfg.dt, nodes, cfg.nucleus_mass, cfg.v0)
            .map_err(|e| CliError::Usage(e.to_string()))?,
    };
    let gates = hypothesis_report(&cfg, &path, kind)?;
    ctx.manifest.set_gates(&gates);
    ctx.write_artifact("gate.json", gates.to_json().as_bytes())?;
    print!("{}", gate_table(&gates));
    match first_violation(&gates) {
        Some(violation) => Err(violation),
        None => Ok(()),
    }
}

// ---------------------------------------------------------------------------
// verify-decomposition

pub fn verify_decomposition(ctx: &mut RunContext, file: &FileConfig) -> Result<(), CliError> {
    let cfg = file.to_run_config()?;
    ctx.manifest.config = file.resolved_echo(&cfg);
    let base_nodes = cfg.node_count().map_err(from_solver)?;
    let levels = file.usize_or("quad_levels", 3)?;
    if levels == 0 {
        return Err(CliError::Usage("quad_levels must be at least 1".into()));
    }

    let grid = make_grid(cfg.grid_n, cfg.box_length).map_err(|e| CliError::Usage(e.to_string()))?;
    let chi = ChargeDensity::new(&grid, cfg.chi.clone())
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let state0 = cfg.kg0.build(&grid).map_err(from_solver)?;

    let mut report = NormReport::new();
    let mut rows: Vec<(usize, f64, usize, f64)> = Vec::new();
    for level in 0..levels {
        let refine = 1usize << level;
        let dt_quad = cfg.dt / refine as f64;
        let nodes = (base_nodes - 1) * refine + 1;
        let path = file.build_path(&cfg, dt_quad, nodes)?;
        let clock = Instant::now();
        let split = decomposition_w_series(&chi, &path, &state0)
            .map_err(|e| CliError::Usage(e.to_string()))?;
        let direct =
            direct_w_series(&chi, &path, &state0).map_err(|e| CliError::Usage(e.to_string()))?;
        ctx.timing(
            &format!("level_{level}_seconds"),
            clock.elapsed().as_secs_f64(),
        );
        let mismatch = sup_relative_l2(&split, &direct);
        if mismatch.is_finite() {
            report.push(
                "decomposition identity mismatch",
                format!("dt_quad={dt_quad};nodes={nodes}"),
                mismatch,
            )
            .map_err(|e| CliError::Usage(e.to_string()))?;
        }
        rows.push((level, dt_quad, nodes, mismatch));
    }

    let mut csv = String::from("level,dt_quad,nodes,mismatch,order\n");
    println!(
        "{:>5} {:>12} {:>7} {:>13} {:>7}",
        "level", "dt_quad", "nodes", "mismatch", "order"
    );
    for (i, (level, dt_quad, nodes, mismatch)) in rows.iter().enumerate() {
        let order = if i == 0 {
            String::new()
        } else {
            let prev = rows[i - 1].3;
            if *mismatch > 0.0 && prev.is_finite() && mismatch.is_finite() {
                format!("{}", (prev / mismatch).log2())
            } else {
                String::new()
            }
        };
        writeln!(csv, "{level},{dt_quad},{nodes},{mismatch},{order}").unwrap();
        println!(
            "{:>5} {:>12.6e} {:>7} {:>13.6e} {:>7}",
            level,
            dt_quad,
            nodes,
            mismatch,
            if order.is_empty() {
                "-".to_string()
            } else {
                format!("{:.2}", order.parse::<f64>().unwrap())
            }
        );
    }
    ctx.write_artifact("decomposition.csv", csv.as_bytes())?;
    ctx.write_artifact("norms.csv", report.to_csv().as_bytes())?;
    ctx.write_artifact("norms.json", report.to_json().as_bytes())?;

    if let Some(tol) = file.f64_opt("decomp_tol")? {
        let finest = rows.last().unwrap().3;
        let mut gates = GateReport::default();
        gates.record(
            "decomposition mismatch at finest dt_quad <= decomp_tol",
            finest,
            tol,
        );
        ctx.manifest.set_gates(&gates);
        ctx.write_artifact("gate.json", gates.to_json().as_bytes())?;
        if let Some(violation) = first_violation(&gates) {
            return Err(violation);
        }
    }
    Ok(())
}

/// `sup_k ||a_k - b_k||_2 / sup_k ||b_k||_2`. The supremum is taken before
/// dividing: runs launched from zero data have an exactly-zero reference at
/// the first node, and a per-node quotient there would report roundoff as
/// an infinite mismatch.
fn sup_relative_l2(a: &[ScalarField], b: &[ScalarField]) -> f64 {
    let mut num = 0.0f64;
    let mut den = 0.0f64;
    for (fa, fb) in a.iter().zip(b) {
        num = num.max(l2_distance(fa, fb));
        den = den.max(fb.l2_norm());
    }
    if den > 0.0 {
        num / den
    } else if num > 0.0 {
        f64::INFINITY
    } else {
        0.0
    }
}

fn l2_distance(a: &ScalarField, b: &ScalarField) -> f64 {
    let mut sum = 0.0;
    for (x, y) in a.values().iter().zip(b.values()) {
        sum += (x - y).norm_sqr();
    }
    (sum * a.grid().cell_volume()).sqrt()
}

// ---------------------------------------------------------------------------
// verify-kernels

pub fn verify_kernels(ctx: &mut RunContext, file: &FileConfig) -> Result<(), CliError> {
    let cfg = file.to_run_config()?;
    ctx.manifest.config = file.resolved_echo(&cfg);
    let sigma = file.f64_or("kernel_sigma", 2.0)?;
    let v = file.triple_or("kernel_v", [0.5, 0.0, 0.0])?;
    let tol = file.f64_or("kernel_tol", 1e-3)?;
    if !(sigma > 0.0) {
        return Err(CliError::Usage(format!(
            "kernel_sigma must be positive, got {sigma}"
        )));
    }
    if norm3(v) >= 1.0 {
        return Err(CliError::Usage(format!(
            "kernel_v must be subluminal, got |v| = {}",
            norm3(v)
        )));
    }
    let grid = make_grid(cfg.grid_n, cfg.box_length).map_err(|e| CliError::Usage(e.to_string()))?;

    let gauss = move |x: [f64; 3]| {
        (-(x[0] * x[0] + x[1] * x[1] + x[2] * x[2]) / (2.0 * sigma * sigma)).exp()
    };
    let clock = Instant::now();
    let yukawa = transform_pair_mismatch(
        &grid,
        gauss,
        |xi| {
            let om = bracket(xi);
            1.0 / (om * om)
        },
        |x| kernel_y_smoothed(sigma, norm3(x)).unwrap(),
    )?;
    // Probing with the boost-composed gaussian collapses the anisotropic
    // convolution to the plain smoothed kernel at the mapped point.
    let boosted = transform_pair_mismatch(
        &grid,
        move |x| gauss(lorentz_map(v, x).unwrap()),
        move |xi| {
            let om = bracket(xi);
            let d = xi[0] * v[0] + xi[1] * v[1] + xi[2] * v[2];
            1.0 / (om * om - d * d)
        },
        move |x| kernel_y_smoothed(sigma, norm3(lorentz_map(v, x).unwrap())).unwrap(),
    )?;
    let envelope = transform_pair_mismatch(
        &grid,
        gauss,
        |xi| {
            let om2 = 1.0 + xi[0] * xi[0] + xi[1] * xi[1] + xi[2] * xi[2];
            1.0 / (om2 * om2)
        },
        |x| kernel_z_smoothed(sigma, norm3(x)).unwrap() / (8.0 * std::f64::consts::PI),
    )?;
    ctx.timing("kernel_seconds", clock.elapsed().as_secs_f64());

    let rows = [
        ("yukawa", yukawa),
        ("yukawa_boosted", boosted),
        ("envelope", envelope),
    ];
    let mut csv = String::from("kernel,mismatch,tolerance,pass\n");
    let mut gates = GateReport::default();
    println!(
        "{:<16} {:>13} {:>11} {:>5}",
        "kernel", "mismatch", "tolerance", "pass"
    );
    for (name, mismatch) in rows {
        let pass = mismatch <= tol;
        writeln!(csv, "{name},{mismatch},{tol},{pass}").unwrap();
        println!("{name:<16} {mismatch:>13.6e} {tol:>11.1e} {pass:>5}");
        gates.record(
            format!("kernel transform-pair mismatch <= tol ({name})"),
            mismatch,
            tol,
        );
    }
    ctx.write_artifact("kernels.csv", csv.as_bytes())?;
    ctx.manifest.set_gates(&gates);
    ctx.write_artifact("gate.json", gates.to_json().as_bytes())?;
    match first_violation(&gates) {
        Some(violation) => Err(violation),
        None => Ok(()),
    }
}

/// Relative L^2 mismatch on the annulus `|x| in [2 dx, L/4]` between the
/// lattice transform pair (symbol times sampled probe spectrum) and the
/// analytic continuum convolution.
fn transform_pair_mismatch(
    grid: &std::sync::Arc<dkga::grid::Grid3>,
    probe: impl Fn([f64; 3]) -> f64,
    symbol: impl Fn([f64; 3]) -> f64,
    convolved: impl Fn([f64; 3]) -> f64,
) -> Result<f64, CliError> {
    let mut f = ScalarField::from_real_space_fn(grid, probe).into_repr(Repr::Frequency);
    f.apply_multiplier(|xi| Complex64::new(symbol(xi), 0.0))
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let f = f.into_repr(Repr::Space);
    let (mut num, mut den) = (0.0, 0.0);
    grid.for_each_x(|b, x| {
        let r = norm3(x);
        if r >= 2.0 * grid.dx() && r <= grid.length() / 4.0 {
            let exact = convolved(x);
            num += (f.values()[b].re - exact) * (f.values()[b].re - exact);
            den += exact * exact;
        }
    });
    if den == 0.0 {
        return Err(CliError::Usage(
            "kernel annulus is empty; grid too coarse for the comparison".into(),
        ));
    }
    Ok((num / den).sqrt())
}

// ---------------------------------------------------------------------------
// decay-fit

pub fn decay_fit_cmd(ctx: &mut RunContext, file: &FileConfig) -> Result<(), CliError> {
    let cfg = file.to_run_config()?;
    ctx.manifest.config = file.resolved_echo(&cfg);
    let t0 = file.f64_or("fit_t0", 5.0)?;
    let t1 = file.f64_or("fit_t1", 40.0)?;
    let samples = file.usize_or("fit_samples", 36)?;
    if !(t1 > t0 && t0 >= 0.0) {
        return Err(CliError::Usage(format!(
            "fit window must satisfy 0 <= fit_t0 < fit_t1, got [{t0}, {t1}]"
        )));
    }
    if samples < 2 {
        return Err(CliError::Usage(format!(
            "fit_samples must be at least 2, got {samples}"
        )));
    }
    if cfg.chi.amplitude() != 0.0 {
        eprintln!(
            "note: decay-fit measures the homogeneous field; chi_amplitude != 0 \
             adds a non-decaying static component to the sup norm"
        );
    }

    let grid = make_grid(cfg.grid_n, cfg.box_length).map_err(|e| CliError::Usage(e.to_string()))?;
    let chi = ChargeDensity::new(&grid, cfg.chi.clone())
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let state0 = cfg.kg0.build(&grid).map_err(from_solver)?;

    let clock = Instant::now();
    let mut times = Vec::with_capacity(samples);
    let mut sups = Vec::with_capacity(samples);
    let mut csv = String::from("t,sup_norm\n");
    for i in 0..samples {
        let t = t0 + (t1 - t0) * i as f64 / (samples - 1) as f64;
        let w2 = build_w2(&chi, &state0, t).map_err(|e| CliError::Usage(e.to_string()))?;
        let sup = lebesgue_norm(&w2, f64::INFINITY).map_err(|e| CliError::Usage(e.to_string()))?;
        writeln!(csv, "{t},{sup}").unwrap();
        times.push(t);
        sups.push(sup);
    }
    ctx.timing("sample_seconds", clock.elapsed().as_secs_f64());
    ctx.write_artifact("decay.csv", csv.as_bytes())?;

    let fit = decay_fit(&times, &sups).map_err(|e| CliError::Usage(e.to_string()))?;
    let mut report = NormReport::new();
    let params = format!("window=[{t0},{t1}];samples={samples}");
    report
        .push_signed("fitted decay exponent", params.clone(), fit.exponent)
        .and_then(|_| report.push("fit confidence", params, fit.confidence))
        .map_err(|e| CliError::Usage(e.to_string()))?;
    ctx.write_artifact("norms.csv", report.to_csv().as_bytes())?;
    ctx.write_artifact("norms.json", report.to_json().as_bytes())?;
    println!(
        "fitted sup-norm decay exponent {:.4} (confidence {:.4})",
        fit.exponent, fit.confidence
    );

    if let Some(expect) = file.f64_opt("fit_expect")? {
        let tol = file.f64_or("fit_tolerance", 0.15)?;
        let mut gates = GateReport::default();
        gates.record(
            "fitted decay exponent within tolerance of expectation",
            (fit.exponent - expect).abs(),
            tol,
        );
        ctx.manifest.set_gates(&gates);
        ctx.write_artifact("gate.json", gates.to_json().as_bytes())?;
        if let Some(violation) = first_violation(&gates) {
            return Err(violation);
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// compare

struct LoadedManifest {
    dir: std::path::PathBuf,
    manifest: Manifest,
}

fn load_manifest(path: &Path) -> Result<(LoadedManifest, Vec<u8>), CliError> {
    let bytes = std::fs::read(path)
        .map_err(|e| CliError::Usage(format!("cannot read manifest {}: {e}", path.display())))?;
    let manifest: Manifest = serde_json::from_slice(&bytes)
        .map_err(|e| CliError::Usage(format!("cannot parse manifest {}: {e}", path.display())))?;
    let dir = path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| std::path::PathBuf::from("."));
    Ok((LoadedManifest { dir, manifest }, bytes))
}

impl LoadedManifest {
    fn config_f64(&self, key: &str) -> Result<f64, CliError> {
        let raw = self.manifest.config.get(key).ok_or_else(|| {
            CliError::Usage(format!("manifest lacks config echo for `{key}`"))
        })?;
        raw.parse()
            .map_err(|_| CliError::Usage(format!("manifest echo `{key} = {raw}` is not a number")))
    }

    /// Re-hashes an artifact and hands back its bytes; a mismatch means the
    /// manifest no longer describes what is on disk.
    fn artifact_bytes(&self, name: &str) -> Result<Vec<u8>, CliError> {
        let record = self
            .manifest
            .artifacts
            .iter()
            .find(|a| a.name == name)
            .ok_or_else(|| CliError::Usage(format!("manifest lists no artifact `{name}`")))?;
        let path = self.dir.join(name);
        let bytes = std::fs::read(&path)
            .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
        if blob_sha256(&bytes) != record.sha256 {
            return Err(CliError::Usage(format!(
                "artifact {name} does not match its manifest checksum; manifest is stale"
            )));
        }
        Ok(bytes)
    }

    fn has_artifact(&self, name: &str) -> bool {
        self.manifest.artifacts.iter().any(|a| a.name == name)
    }

    fn dump_names(&self, prefix: &str) -> Vec<String> {
        let mut names: Vec<String> = self
            .manifest
            .artifacts
            .iter()
            .filter(|a| a.name.starts_with(prefix) && a.name.ends_with(".dump"))
            .map(|a| a.name.clone())
            .collect();
        names.sort();
        names
    }
}

struct CompareRow {
    quantity: String,
    t: String,
    a: String,
    b: String,
    delta: f64,
}

pub fn compare(
    ctx: &mut RunContext,
    path_a: &Path,
    path_b: &Path,
    tol: Option<f64>,
) -> Result<(), CliError> {
    let (a, bytes_a) = load_manifest(path_a)?;
    let (b, bytes_b) = load_manifest(path_b)?;
    ctx.record_input(path_a.display().to_string(), &bytes_a);
    ctx.record_input(path_b.display().to_string(), &bytes_b);

    for key in ["grid_n", "box_length", "horizon", "dt", "s"] {
        let (va, vb) = (a.config_f64(key)?, b.config_f64(key)?);
        if va != vb {
            return Err(CliError::Usage(format!(
                "incompatible runs: {key} differs ({va} vs {vb})"
            )));
        }
    }
    let s = a.config_f64("s")?;
    let dt = a.config_f64("dt")?;

    let mut rows: Vec<CompareRow> = Vec::new();
    let mut sup_series_hs = 0.0f64;

    // Scalar diagnostics, matched by name and parameter string.
    if a.has_artifact("norms.json") && b.has_artifact("norms.json") {
        let na = parse_norm_entries(&a.artifact_bytes("norms.json")?)?;
        let nb = parse_norm_entries(&b.artifact_bytes("norms.json")?)?;
        for ea in &na {
            if let Some(eb) = nb
                .iter()
                .find(|e| e.name == ea.name && e.params == ea.params)
            {
                rows.push(CompareRow {
                    quantity: format!("norm:{}[{}]", ea.name, ea.params),
                    t: String::new(),
                    a: ea.value.to_string(),
                    b: eb.value.to_string(),
                    delta: (ea.value - eb.value).abs(),
                });
            }
        }
    }

    // Per-node norm series.
    if a.has_artifact("series.csv") && b.has_artifact("series.csv") {
        let sa = parse_csv_table(&a.artifact_bytes("series.csv")?)?;
        let sb = parse_csv_table(&b.artifact_bytes("series.csv")?)?;
        if sa.len() != sb.len() {
            return Err(CliError::Usage(format!(
                "incompatible runs: series length {} vs {}",
                sa.len(),
                sb.len()
            )));
        }
        for (ra, rb) in sa.iter().zip(&sb) {
            for (col, name) in [(1, "series_l2"), (2, "series_hs"), (3, "series_linf")] {
                let delta = (ra[col] - rb[col]).abs();
                if name == "series_hs" {
                    sup_series_hs = sup_series_hs.max(delta);
                }
                rows.push(CompareRow {
                    quantity: name.into(),
                    t: ra[0].to_string(),
                    a: ra[col].to_string(),
                    b: rb[col].to_string(),
                    delta,
                });
            }
        }
    }

    // Nucleus paths: per-node position and velocity distances.
    if a.has_artifact("path.csv") && b.has_artifact("path.csv") {
        let pa = parse_csv_table(&a.artifact_bytes("path.csv")?)?;
        let pb = parse_csv_table(&b.artifact_bytes("path.csv")?)?;
        if pa.len() == pb.len() {
            for (ra, rb) in pa.iter().zip(&pb) {
                let dq = ((ra[1] - rb[1]).powi(2)
                    + (ra[2] - rb[2]).powi(2)
                    + (ra[3] - rb[3]).powi(2))
                .sqrt();
                let dv = ((ra[4] - rb[4]).powi(2)
                    + (ra[5] - rb[5]).powi(2)
                    + (ra[6] - rb[6]).powi(2))
                .sqrt();
                rows.push(CompareRow {
                    quantity: "path_q".into(),
                    t: ra[0].to_string(),
                    a: String::new(),
                    b: String::new(),
                    delta: dq,
                });
                rows.push(CompareRow {
                    quantity: "path_qdot".into(),
                    t: ra[0].to_string(),
                    a: String::new(),
                    b: String::new(),
                    delta: dv,
                });
            }
        }
    }

    // Field snapshots, where both runs dumped the same nodes.
    for name in a.dump_names("u_") {
        if !b.has_artifact(&name) {
            continue;
        }
        let fa = read_spinor(&a.artifact_bytes(&name)?)?;
        let fb = read_spinor(&b.artifact_bytes(&name)?)?;
        let diff = spinor_difference(&fa, &fb)?;
        let t = dump_time(&name, dt);
        rows.push(CompareRow {
            quantity: "field_u_l2".into(),
            t: t.clone(),
            a: String::new(),
            b: String::new(),
            delta: diff.l2_norm(),
        });
        rows.push(CompareRow {
            quantity: "field_u_hs".into(),
            t,
            a: String::new(),
            b: String::new(),
            delta: sobolev_norm_spinor(&diff, s).map_err(|e| CliError::Usage(e.to_string()))?,
        });
    }
    for name in a.dump_names("w_") {
        if !b.has_artifact(&name) {
            continue;
        }
        let fa = read_scalar(&a.artifact_bytes(&name)?)?;
        let fb = read_scalar(&b.artifact_bytes(&name)?)?;
        rows.push(CompareRow {
            quantity: "field_w_l2".into(),
            t: dump_time(&name, dt),
            a: String::new(),
            b: String::new(),
            delta: l2_distance(&fa, &fb),
        });
    }

    if rows.is_empty() {
        return Err(CliError::Usage(
            "the two manifests share no comparable artifacts".into(),
        ));
    }

    let mut csv = String::from("quantity,t,a,b,delta\n");
    for r in &rows {
        writeln!(csv, "{},{},{},{},{}", r.quantity, r.t, r.a, r.b, r.delta).unwrap();
    }
    ctx.write_artifact("compare.csv", csv.as_bytes())?;

    // One summary line per quantity family.
    let mut families: Vec<(String, f64)> = Vec::new();
    for r in &rows {
        match families.iter_mut().find(|(q, _)| *q == r.quantity) {
            Some((_, sup)) => *sup = sup.max(r.delta),
            None => families.push((r.quantity.clone(), r.delta)),
        }
    }
    println!("{:<44} {:>13}", "quantity", "sup delta");
    for (q, sup) in &families {
        println!("{q:<44} {sup:>13.6e}");
    }

    if let Some(tol) = tol {
        let mut gates = GateReport::default();
        gates.record(
            "sup_t delta of the H^s series <= tol",
            sup_series_hs,
            tol,
        );
        ctx.manifest.set_gates(&gates);
        ctx.write_artifact("gate.json", gates.to_json().as_bytes())?;
        if let Some(violation) = first_violation(&gates) {
            return Err(violation);
        }
    }
    Ok(())
}

struct NormEntryView {
    name: String,
    params: String,
    value: f64,
}

fn parse_norm_entries(bytes: &[u8]) -> Result<Vec<NormEntryView>, CliError> {
    #[derive(serde::Deserialize)]
    struct Entry {
        name: String,
        params: String,
        value: f64,
    }
    #[derive(serde::Deserialize)]
    struct Report {
        entries: Vec<Entry>,
    }
    let report: Report = serde_json::from_slice(bytes)
        .map_err(|e| CliError::Usage(format!("cannot parse norms.json: {e}")))?;
    Ok(report
        .entries
        .into_iter()
        .map(|e| NormEntryView {
            name: e.name,
            params: e.params,
            value: e.value,
        })
        .collect())
}

/// Parses a numeric CSV with one header line into rows of f64 columns.
fn parse_csv_table(bytes: &[u8]) -> Result<Vec<Vec<f64>>, CliError> {
    let text = std::str::from_utf8(bytes)
        .map_err(|_| CliError::Usage("artifact is not valid UTF-8".into()))?;
    let mut rows = Vec::new();
    for line in text.lines().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let row: Result<Vec<f64>, _> = line.split(',').map(|v| v.trim().parse()).collect();
        rows.push(row.map_err(|_| CliError::Usage(format!("non-numeric CSV row `{line}`")))?);
    }
    Ok(rows)
}

fn dump_time(name: &str, dt: f64) -> String {
    name.trim_start_matches(|c: char| !c.is_ascii_digit())
        .trim_end_matches(".dump")
        .parse::<usize>()
        .map_or(String::new(), |k| (k as f64 * dt).to_string())
}

fn read_spinor(bytes: &[u8]) -> Result<SpinorField, CliError> {
    SpinorField::read_dump(&mut &bytes[..]).map_err(|e| CliError::Usage(e.to_string()))
}

fn read_scalar(bytes: &[u8]) -> Result<ScalarField, CliError> {
    ScalarField::read_dump(&mut &bytes[..]).map_err(|e| CliError::Usage(e.to_string()))
}

fn spinor_difference(a: &SpinorField, b: &SpinorField) -> Result<SpinorField, CliError> {
    let mut diff = a.clone();
    for c in 0..4 {
        let bv = b.component(c);
        for (x, y) in diff.components_mut()[c].iter_mut().zip(bv) {
            *x -= y;
        }
    }
    Ok(diff)
}
