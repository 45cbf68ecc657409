use std::f64::consts::{PI, SQRT_2};
use std::path::{Path, PathBuf};

use dwlab_core::evolution::evolve_with;
use dwlab_core::golden::{compute_derived, merge, GoldenStore};
use dwlab_core::modulation::{Tracker, TrackRecord};
use dwlab_core::spectral::continuation_sweep;
use dwlab_core::stability::run_sweep;
use dwlab_core::{
    assemble, energy, evolve, fit_decay, lowest_eigs, quad, rho_a, rho_r, solve_profile, translate_gauge, EvolveConfig,
    ExperimentConfig, Grid, OperatorKind,
};
use num_complex::Complex64;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::formats::{read_profile, read_state, write_csv, write_profile, write_state};
use crate::manifest::{manifest_path, write_json_file, Run};
use crate::{CliError, Command, MetricArg, OpArg};

pub const TRACK_HEADER: [&str; 8] = ["t", "alpha", "theta1", "theta2", "res1", "res2", "res3", "ratio"];
pub const SERIES_HEADER: [&str; 12] =
    ["t", "alpha", "theta1", "theta2", "res1", "res2", "res3", "rho", "energy_gap", "ratio", "ball_lhs", "control_ratio"];

/// Short content digest, so run ids follow the data rather than the path.
fn file_digest(path: &Path) -> Result<String, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(Sha256::digest(&bytes).iter().take(8).map(|b| format!("{b:02x}")).collect())
}

fn print_json(v: &Value) {
    println!("{}", serde_json::to_string(v).expect("serializable"));
}

/// `a.csv` -> `a.json`.
fn sidecar(path: &Path) -> PathBuf {
    path.with_extension("json")
}

pub fn dispatch(cmd: Command) -> Result<(), CliError> {
    match cmd {
        Command::Profile { gamma, l, n, tol, out } => profile(gamma, l, n, tol, &out),
        Command::Energy { state, gamma, out } => energy_cmd(&state, gamma, out.as_deref()),
        Command::Distance { metric, param, a, b, gamma, out } => distance(metric, param, &a, &b, gamma, out.as_deref()),
        Command::Spectrum { op, r, gamma, modes, l, n, out } => spectrum(op, r, gamma, modes, l, n, &out),
        Command::Continuation { gamma, r_list, modes, l, n, out } => continuation(gamma, &r_list, modes, l, n, &out),
        Command::Evolve { init, gamma, dt, t_final, stride, out } => evolve_cmd(&init, gamma, dt, t_final, stride, &out),
        Command::Track { traj, profile, out } => track_cmd(&traj, &profile, &out),
        Command::Stability { config, out } => stability(&config, &out),
        Command::Selftest => selftest(),
        Command::GoldenUpdate { store, n, force } => golden_update(&store, n, force),
    }
}

fn profile(gamma: f64, l: f64, n: usize, tol: f64, out: &Path) -> Result<(), CliError> {
    let config = json!({"gamma": gamma, "L": l, "n": n, "tol": tol});
    let mut run = Run::new("profile", config);
    let grid = Grid::new(l, n)?;
    run.grid(l, n);
    let p = solve_profile(gamma, &grid, tol)?;
    write_profile(out, &run.id, &p)?;
    run.output(out);
    let (rate_left, rate_right, fit_error) = match fit_decay(&p) {
        Ok(f) => (Some(f.rate_left), Some(f.rate_right), None),
        Err(e) => (None, None, Some(e.to_string())),
    };
    let side = json!({
        "gamma": gamma,
        "L": l,
        "n": n,
        "residual_norm": p.residual_norm,
        "midpoint_mismatch": p.midpoint_mismatch,
        "rate_left": rate_left,
        "rate_right": rate_right,
        "fit_error": fit_error,
    });
    run.write_json(&sidecar(out), side)?;
    run.finish(&manifest_path(out))?;
    Ok(())
}

fn energy_cmd(state: &Path, gamma: f64, out: Option<&Path>) -> Result<(), CliError> {
    let mut run = Run::new("energy", json!({"gamma": gamma, "state": file_digest(state)?}));
    let psi = read_state(state)?;
    run.grid(psi.grid.half_width(), psi.grid.len());
    let v = json!({"energy": energy(&psi, gamma)?, "run_id": run.id});
    print_json(&v);
    if let Some(out) = out {
        run.write_json(out, v)?;
        run.finish(&manifest_path(out))?;
    }
    Ok(())
}

fn distance(metric: MetricArg, param: f64, a: &Path, b: &Path, gamma: f64, out: Option<&Path>) -> Result<(), CliError> {
    let name = match metric {
        MetricArg::RhoR => "rhoR",
        MetricArg::RhoA => "rhoA",
    };
    let config = json!({"metric": name, "param": param, "gamma": gamma, "a": file_digest(a)?, "b": file_digest(b)?});
    let mut run = Run::new("distance", config);
    let (pa, pb) = (read_state(a)?, read_state(b)?);
    if pa.grid != pb.grid {
        return Err(CliError::Validation("states are on different grids".into()));
    }
    run.grid(pa.grid.half_width(), pa.grid.len());
    let d = match metric {
        MetricArg::RhoR => {
            let wall = solve_profile(gamma, &pa.grid, 1e-10)?;
            rho_r(&pa, &pb, param, &wall)?
        }
        MetricArg::RhoA => rho_a(&pa, &pb, param)?,
    };
    let v = json!({"metric": name, "param": param, "distance": d, "run_id": run.id});
    print_json(&v);
    if let Some(out) = out {
        run.write_json(out, v)?;
        run.finish(&manifest_path(out))?;
    }
    Ok(())
}

fn spectrum(op: OpArg, r: Option<f64>, gamma: f64, modes: usize, l: f64, n: usize, out: &Path) -> Result<(), CliError> {
    let kind = match (op, r) {
        (OpArg::Lminus, _) => OperatorKind::Lminus,
        (OpArg::Lplus, _) => OperatorKind::Lplus,
        (OpArg::Lr, Some(r)) => OperatorKind::LR(r),
        (OpArg::Lr, None) => return Err(CliError::Validation("--op lr needs --R".into())),
    };
    let config = json!({"op": kind.name(), "R": kind.window(), "gamma": gamma, "modes": modes, "L": l, "n": n});
    let mut run = Run::new("spectrum", config);
    run.grid(l, n);
    let p = solve_profile(gamma, &Grid::new(l, n)?, 1e-10)?;
    let k = assemble(OperatorKind::K, &p)?;
    let res = lowest_eigs(&assemble(kind, &p)?, &k, modes)?;
    let mut v = serde_json::to_value(&res).expect("serializable");
    v["kernel_count"] = json!(res.kernel_count());
    run.write_json(out, v)?;
    run.finish(&manifest_path(out))?;
    Ok(())
}

fn continuation(gamma: f64, r_list: &[f64], modes: usize, l: f64, n: usize, out: &Path) -> Result<(), CliError> {
    let config = json!({"gamma": gamma, "R_list": r_list, "modes": modes, "L": l, "n": n});
    let mut run = Run::new("continuation", config);
    run.grid(l, n);
    let curves = continuation_sweep(gamma, modes, r_list, &Grid::new(l, n)?)?;
    let mut rows = Vec::new();
    for &r in r_list {
        for c in &curves {
            if let Some(&(_, lambda)) = c.samples.iter().find(|s| s.0 == r) {
                rows.push(vec![r, c.mode as f64, lambda]);
            }
        }
    }
    write_csv(out, &run.id, &["R", "mode", "lambda"], rows)?;
    run.output(out);
    let lambda_inf: Vec<f64> = curves.iter().map(|c| c.lambda_inf).collect();
    run.write_json(&sidecar(out), json!({"gamma": gamma, "lambda_inf": lambda_inf}))?;
    run.finish(&manifest_path(out))?;
    Ok(())
}

fn snapshot_name(k: usize) -> String {
    format!("snapshot_{k:05}.csv")
}

fn evolve_cmd(init: &Path, gamma: f64, dt: f64, t_final: f64, stride: usize, out: &Path) -> Result<(), CliError> {
    let cfg = EvolveConfig::new(dt, t_final);
    let config = json!({"gamma": gamma, "evolve": cfg, "stride": stride, "init": file_digest(init)?});
    let mut run = Run::new("evolve", config.clone());
    let psi0 = read_state(init)?;
    run.grid(psi0.grid.half_width(), psi0.grid.len());
    cfg.validate(&psi0.grid)?;
    std::fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    let mut times = Vec::new();
    let mut energies = Vec::new();
    let mut files = Vec::new();
    let mut write_err = None;
    let result = evolve_with(&psi0, gamma, &cfg, stride, |t, psi, e| {
        let name = snapshot_name(files.len());
        let path = out.join(&name);
        if let Err(err) = write_state(&path, &run.id, psi) {
            write_err = Some(err);
            return Err(dwlab_core::Error::Invalid("snapshot write failed".into()));
        }
        times.push(t);
        energies.push(e);
        files.push(name);
        Ok(())
    });
    if let Some(e) = write_err {
        return Err(e);
    }
    result?;
    for f in &files {
        run.output(&out.join(f));
    }
    let index = json!({"times": times, "energies": energies, "config": config, "files": files});
    run.write_json(&out.join("index.json"), index)?;
    run.finish(&out.join("manifest.json"))?;
    Ok(())
}

fn track_cmd(traj: &Path, profile_path: &Path, out: &Path) -> Result<(), CliError> {
    let index_path = traj.join("index.json");
    let text = std::fs::read_to_string(&index_path).map_err(|e| CliError::io(&index_path, e))?;
    let index: Value = serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("{}: {e}", index_path.display())))?;
    let bad = || CliError::Validation(format!("{}: missing times, files or config.gamma", index_path.display()));
    let gamma = index["config"]["gamma"].as_f64().ok_or_else(bad)?;
    let times: Vec<f64> = index["times"].as_array().ok_or_else(bad)?.iter().filter_map(Value::as_f64).collect();
    let files: Vec<String> =
        index["files"].as_array().ok_or_else(bad)?.iter().filter_map(|v| v.as_str().map(str::to_string)).collect();
    if times.len() != files.len() {
        return Err(bad());
    }
    let config = json!({"traj": index["run_id"], "profile": file_digest(profile_path)?});
    let mut run = Run::new("track", config);
    let wall = read_profile(profile_path, gamma)?;
    run.grid(wall.grid.half_width(), wall.grid.len());
    let mut tracker = Tracker::new(&wall)?;
    for (t, f) in times.iter().zip(&files) {
        let psi = read_state(&traj.join(f))?;
        tracker.push(*t, &psi)?;
    }
    let rows = tracker.records.iter().map(|r: &TrackRecord| {
        vec![r.t, r.alpha, r.theta1, r.theta2, r.residual[0], r.residual[1], r.residual[2], r.ratio()]
    });
    write_csv(out, &run.id, &TRACK_HEADER, rows)?;
    run.output(out);
    run.finish(&manifest_path(out))?;
    Ok(())
}

fn stability(config_paths: &[PathBuf], out: &Path) -> Result<(), CliError> {
    let mut configs = Vec::new();
    for p in config_paths {
        let text = std::fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
        configs.push(ExperimentConfig::parse(&text)?);
    }
    let sweep = configs.len() > 1;
    if sweep {
        std::fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    }
    let mut run = Run::new("stability", serde_json::to_value(&configs).expect("serializable"));
    run.grid(configs[0].l, configs[0].n);
    let reports = run_sweep(&configs)?;
    for (k, rep) in reports.iter().enumerate() {
        let report_path = if sweep { out.join(format!("report_{k:03}.json")) } else { out.to_path_buf() };
        let series_path = report_path.with_extension("series.csv");
        let rows = rep.series.iter().map(|s| {
            vec![
                s.t,
                s.alpha,
                s.theta1,
                s.theta2,
                s.residual[0],
                s.residual[1],
                s.residual[2],
                s.rho,
                s.energy_gap,
                s.ratio,
                s.ball_lhs,
                s.control_ratio,
            ]
        });
        write_csv(&series_path, &run.id, &SERIES_HEADER, rows)?;
        run.output(&series_path);
        let mut v = serde_json::to_value(rep).expect("serializable");
        v["epsilon_ratio"] = json!(rep.epsilon_ratio());
        v["series_file"] = json!(series_path.file_name().and_then(|s| s.to_str()));
        run.write_json(&report_path, v)?;
    }
    run.finish(&manifest_path(out))?;
    Ok(())
}

struct Check {
    name: &'static str,
    pass: bool,
    detail: String,
}

fn check(name: &'static str, f: impl FnOnce() -> Result<(bool, String), dwlab_core::Error>) -> Check {
    match f() {
        Ok((pass, detail)) => Check { name, pass, detail },
        Err(e) => Check { name, pass: false, detail: e.to_string() },
    }
}

fn selftest() -> Result<(), CliError> {
    let checks = [
        check("quad of 1 on [-1, 1]", || {
            let g = Grid::new(1.0, 101)?;
            let v = quad(&vec![1.0; g.len()], &g)?;
            Ok(((v - 2.0).abs() < 1e-14, format!("{v}")))
        }),
        check("quad of x vanishes", || {
            let g = Grid::new(3.0, 301)?;
            let v = quad(&g.nodes(), &g)?;
            Ok((v.abs() < 1e-14, format!("{v:e}")))
        }),
        check("n must be odd", || Ok((Grid::new(30.0, 3000).is_err(), String::new()))),
        check("gamma must exceed 1", || {
            let e = solve_profile(0.9, &Grid::new(30.0, 301)?, 1e-10).unwrap_err();
            Ok((e.to_string().contains("gamma must exceed 1"), e.to_string()))
        }),
        check("gamma = 3 wall is the tanh profile", || {
            let g = Grid::new(30.0, 1501)?;
            let p = solve_profile(3.0, &g, 1e-10)?;
            let err = (0..g.len()).map(|i| (p.u1[i] - 0.5 * (1.0 + (g.x(i) / SQRT_2).tanh())).abs()).fold(0.0, f64::max);
            Ok((err < 1e-4 && p.u1[g.mid()] == 0.5, format!("sup err {err:.2e}")))
        }),
        check("phase pi negates the first component", || {
            let p = solve_profile(2.0, &Grid::new(30.0, 301)?, 1e-10)?;
            let s = translate_gauge(&p, 0.0, PI, 0.0)?;
            let ok = (0..p.grid.len()).all(|i| (s.psi1[i] + p.u1[i]).norm() < 1e-15 && s.psi2[i] == Complex64::new(p.u2[i], 0.0));
            Ok((ok, String::new()))
        }),
        check("zero horizon keeps the state", || {
            let p = solve_profile(2.0, &Grid::new(30.0, 301)?, 1e-10)?;
            let t = evolve(&p.as_state(), 2.0, &EvolveConfig::new(0.05, 0.0), 10)?;
            Ok((t.snapshots.len() == 1 && t.snapshots[0] == p.as_state(), String::new()))
        }),
        check("unknown config key rejected", || {
            Ok((ExperimentConfig::parse("gamma = 2\nfoo = 1\n").is_err(), String::new()))
        }),
    ];
    let mut failed = 0;
    for c in &checks {
        println!("selftest {}: {} {}", c.name, if c.pass { "PASS" } else { "FAIL" }, c.detail);
        failed += usize::from(!c.pass);
    }
    if failed > 0 {
        return Err(CliError::Numerical(format!("{failed} selftest checks failed")));
    }
    Ok(())
}

fn golden_update(store: &Path, n: usize, force: bool) -> Result<(), CliError> {
    let mut run = Run::new("golden-update", json!({"n": n}));
    let existing = if store.exists() { Some(GoldenStore::load(store)?) } else { None };
    let fresh = compute_derived(n)?;
    let (merged, drifts) = merge(existing.as_ref(), fresh, force)?;
    for d in &drifts {
        println!(
            "{}: {} -> {} (drift {:.3} tolerances)",
            d.name,
            d.old.map_or("new".to_string(), |v| v.to_string()),
            d.new,
            d.relative
        );
    }
    if let Some(dir) = store.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    merged.save(store)?;
    run.output(store);
    let report: Vec<Value> = drifts.iter().map(|d| serde_json::to_value(d).expect("serializable")).collect();
    let mut report_path = store.as_os_str().to_owned();
    report_path.push(".drift.json");
    let report_path = PathBuf::from(report_path);
    write_json_file(&report_path, &json!({"run_id": run.id, "drift": report}))?;
    run.output(&report_path);
    run.finish(&manifest_path(store))?;
    Ok(())
}
