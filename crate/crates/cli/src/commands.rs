//! Subcommand implementations.

use std::fs;
use std::io::Write as _;
use std::ops::ControlFlow;
use std::path::{Path, PathBuf};

use cavity_forge_core::analysis::{
    collection_curve, incoherent_sum, interpolate_farfield, tolerance_sweep, FarFieldGrid, INTERPOLATION_METHOD,
};
use cavity_forge_core::geometry::{validate, CavityGeometry, ParamBounds, ParamId};
use cavity_forge_core::gme::{CavityMode, GmeSystem, RadiationChannel};
use cavity_forge_core::optimizer::{run_with, EpochRecord, OptimizationTrace, RunOptions};

use crate::checkpoint;
use crate::config::{parse_number_list, GeometrySource, RunConfig};
use crate::output::{audit, csv_line, num, sanitize, sha256_hex, Csv, Manifest, OutputDir};
use crate::{Cli, Command, Failure, DEFAULT_OUT, OUT_ENV};

/// Progress lines on stdout; a closed pipe is not an error.
macro_rules! say {
    ($($arg:tt)*) => {{
        let _ = writeln!(std::io::stdout(), $($arg)*);
    }};
}

pub const MODES_CSV: &str = "simulate_modes.csv";
pub const CHANNELS_CSV: &str = "simulate_channels.csv";
pub const SIMULATE_FARFIELD_CSV: &str = "simulate_farfield.csv";
pub const FARFIELD_CSV: &str = "farfield_grid.csv";
pub const COLLECTION_CSV: &str = "collection.csv";
pub const TOLERANCE_CSV: &str = "tolerance.csv";
pub const TRACE_CSV: &str = "optimize_trace.csv";
pub const SERIES_CSV: &str = "optimize_series.csv";
pub const BEST_GEOMETRY: &str = "optimize_best.geom";

pub const TRACE_HEADER: [&str; 18] = [
    "epoch", "stage", "q_ref", "frequency", "q_factor", "A", "tau_f", "tau_ff", "tau_q", "total", "r0", "w1", "w2",
    "w3", "w4", "w5", "w6", "w7",
];

/// Configuration after defaults, the config file, `--set` overrides and flags.
pub fn resolve_config(cli: &Cli) -> Result<(RunConfig, Vec<PathBuf>), Failure> {
    let g = &cli.global;
    let mut cfg = RunConfig::default();
    let mut inputs = Vec::new();
    if let Some(path) = &g.config {
        let text = fs::read_to_string(path).map_err(|e| Failure::config(format!("{}: {e}", path.display())))?;
        cfg.merge_text(&text)
            .map_err(|e| Failure::config(format!("{}: {e}", path.display())))?;
        inputs.push(path.clone());
    }
    for kv in &g.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Failure::config(format!("--set expects KEY=VALUE, got `{kv}`")))?;
        cfg.set(k.trim(), v.trim()).map_err(Failure::config)?;
    }
    if let Some(t) = &g.template {
        cfg.geometry = GeometrySource::Template(t.parse().map_err(Failure::config)?);
    }
    if let Some(p) = &g.geometry {
        cfg.geometry = GeometrySource::File(p.clone());
    }
    if let Some(n) = g.threads {
        cfg.threads = n;
    }
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    if let Some(o) = &g.out {
        cfg.out = Some(o.clone());
    }
    match &cli.command {
        Command::Optimize(a) => {
            if a.smoke {
                cfg.apply_smoke();
            }
            if let Some(e) = a.epochs {
                cfg.schedule.epochs = e;
            }
        }
        Command::Tolerance(a) => {
            if let Some(d) = &a.deltas {
                cfg.sweep_deltas_nm = parse_number_list(d).map_err(|e| Failure::config(format!("--deltas: {e}")))?;
            }
            if let Some(p) = &a.params {
                cfg.sweep_params = p
                    .split(',')
                    .map(|s| s.trim().parse::<ParamId>())
                    .collect::<Result<_, _>>()
                    .map_err(|e| Failure::config(format!("--params: {e}")))?;
            }
            if let Some(na) = a.na {
                cfg.sweep_na = na;
            }
        }
        Command::Collection(a) => {
            if let Some(grid) = &a.na_grid {
                cfg.na_grid = parse_number_list(grid).map_err(|e| Failure::config(format!("--na-grid: {e}")))?;
            }
        }
        Command::Farfield(a) => {
            if let Some(r) = a.resolution {
                cfg.resolution = r;
            }
        }
        Command::Simulate | Command::ValidateConfig => {}
    }
    cfg.check().map_err(Failure::config)?;
    if let GeometrySource::File(p) = &cfg.geometry {
        inputs.push(p.clone());
    }
    Ok((cfg, inputs))
}

fn output_root(cfg: &RunConfig) -> PathBuf {
    cfg.out
        .clone()
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

fn load_geometry(cfg: &RunConfig) -> Result<CavityGeometry, Failure> {
    let g = cfg.load_geometry().map_err(Failure::config)?;
    let report = validate(&g);
    if !report.is_ok() {
        return Err(Failure::config(format!("invalid geometry: {report}")));
    }
    Ok(g)
}

pub fn dispatch(cli: &Cli) -> Result<(), Failure> {
    let (cfg, inputs) = resolve_config(cli)?;
    // Bit-determinism per thread count: dense kernels stay single-threaded and
    // parallelism comes only from the explicit probe/cell distribution.
    faer::set_global_parallelism(faer::Par::Seq);
    if let Command::ValidateConfig = cli.command {
        load_geometry(&cfg)?;
        let _ = std::io::stdout().write_all(cfg.to_text().as_bytes());
        return Ok(());
    }
    let g = load_geometry(&cfg)?;
    let dir = OutputDir::acquire(&output_root(&cfg))?;
    let name = match cli.command {
        Command::Simulate => "simulate",
        Command::Optimize(_) => "optimize",
        Command::Tolerance(_) => "tolerance",
        Command::Collection(_) => "collection",
        Command::Farfield(_) => "farfield",
        Command::ValidateConfig => unreachable!(),
    };
    let mut manifest = Manifest::new(name, cfg.to_text());
    for p in &inputs {
        manifest.add_input(p).map_err(|e| Failure::config(format!("{}: {e}", p.display())))?;
    }
    let result = match &cli.command {
        Command::Simulate => simulate(&cfg, &g, &dir, &mut manifest),
        Command::Optimize(a) => optimize(&cfg, &g, &dir, &mut manifest, cli.global.resume.as_deref(), a.halt_after),
        Command::Tolerance(_) => tolerance(&cfg, &g, &dir, &mut manifest),
        Command::Collection(_) => collection(&cfg, &g, &dir, &mut manifest),
        Command::Farfield(_) => farfield(&cfg, &g, &dir, &mut manifest),
        Command::ValidateConfig => unreachable!(),
    };
    // Partial outputs of a failed command are still listed.
    manifest.finish(&dir)?;
    result?;
    let report = audit(dir.root())?;
    if !report.is_clean() {
        return Err(Failure::io(format!("output audit of {}: {report}", dir.root().display())));
    }
    Ok(())
}

fn solver_metadata(manifest: &mut Manifest, cfg: &RunConfig, system: &GmeSystem) {
    manifest.solver("gmax", num(cfg.gme.gmax));
    manifest.solver("num_guided_bands", cfg.gme.num_guided_bands);
    manifest.solver("basis_size", system.basis_size());
    manifest.solver("threads", cfg.threads);
    manifest.solver("seed", cfg.seed);
}

fn build_system(cfg: &RunConfig, g: &CavityGeometry, manifest: &mut Manifest) -> Result<GmeSystem, Failure> {
    let system = GmeSystem::new(g, &cfg.gme).map_err(Failure::solver)?;
    solver_metadata(manifest, cfg, &system);
    Ok(system)
}

fn dipole_pair(cfg: &RunConfig, g: &CavityGeometry, manifest: &mut Manifest) -> Result<(CavityMode, CavityMode), Failure> {
    let system = build_system(cfg, g, manifest)?;
    system.dipole_pair(g, cfg.gme.mode_window).map_err(Failure::solver)
}

pub fn modes_csv(modes: &[&CavityMode]) -> Csv {
    let mut c = Csv::new(&["index", "frequency_c_over_a", "q_factor", "A"]);
    for (i, m) in modes.iter().enumerate() {
        c.row(&[
            i.to_string(),
            num(m.frequency),
            num(m.q_factor().unwrap_or(f64::INFINITY)),
            num(m.mode_overlap_with_ref.unwrap_or(1.0)),
        ]);
    }
    c
}

pub fn channels_csv(channels: &[RadiationChannel]) -> Csv {
    let mut c = Csv::new(&["Gx", "Gy", "theta", "phi", "re_amp_s", "im_amp_s", "re_amp_p", "im_amp_p"]);
    for ch in channels {
        c.row(&[
            num(ch.k_parallel[0]),
            num(ch.k_parallel[1]),
            num(ch.theta),
            num(ch.phi),
            num(ch.amp_s.re),
            num(ch.amp_s.im),
            num(ch.amp_p.re),
            num(ch.amp_p.im),
        ]);
    }
    c
}

pub fn farfield_csv(grid: &FarFieldGrid) -> Csv {
    let mut c = Csv::new(&["kx_over_k0", "ky_over_k0", "intensity"]);
    for iy in 0..grid.resolution {
        for ix in 0..grid.resolution {
            let v = grid.get(ix, iy).map(num).unwrap_or_default();
            c.row(&[num(grid.coordinate(ix)), num(grid.coordinate(iy)), v]);
        }
    }
    c
}

fn pair_farfield(cfg: &RunConfig, x: &CavityMode, y: &CavityMode, manifest: &mut Manifest) -> Result<FarFieldGrid, Failure> {
    manifest.solver("interpolation", INTERPOLATION_METHOD);
    let sum = incoherent_sum(&x.channels, &y.channels);
    interpolate_farfield(&sum, cfg.resolution).map_err(Failure::solver)
}

fn simulate(cfg: &RunConfig, g: &CavityGeometry, dir: &OutputDir, manifest: &mut Manifest) -> Result<(), Failure> {
    let (x, y) = dipole_pair(cfg, g, manifest)?;
    manifest.write_artifact(dir, MODES_CSV, modes_csv(&[&x, &y]).as_str().as_bytes())?;
    manifest.write_artifact(dir, CHANNELS_CSV, channels_csv(&x.channels).as_str().as_bytes())?;
    let grid = pair_farfield(cfg, &x, &y, manifest)?;
    manifest.write_artifact(dir, SIMULATE_FARFIELD_CSV, farfield_csv(&grid).as_str().as_bytes())?;
    for (label, m) in [("x-dipole", &x), ("y-dipole", &y)] {
        say!(
            "{label}: f = {:.6} c/a, Q = {:.1}, {} radiation channels",
            m.frequency,
            m.q_factor().unwrap_or(f64::INFINITY),
            m.channels.len()
        );
    }
    Ok(())
}

fn farfield(cfg: &RunConfig, g: &CavityGeometry, dir: &OutputDir, manifest: &mut Manifest) -> Result<(), Failure> {
    let (x, y) = dipole_pair(cfg, g, manifest)?;
    let grid = pair_farfield(cfg, &x, &y, manifest)?;
    manifest.write_artifact(dir, FARFIELD_CSV, farfield_csv(&grid).as_str().as_bytes())?;
    say!("far field: {0}×{0} grid, peak {1:.6e} normalized to 1", grid.resolution, grid.peak);
    Ok(())
}

fn collection(cfg: &RunConfig, g: &CavityGeometry, dir: &OutputDir, manifest: &mut Manifest) -> Result<(), Failure> {
    let system = build_system(cfg, g, manifest)?;
    let mode = system.fundamental_mode(g, cfg.gme.mode_window).map_err(Failure::solver)?;
    let curve = collection_curve(&mode.channels, &cfg.na_grid).map_err(Failure::solver)?;
    let mut c = Csv::new(&["na", "efficiency"]);
    for (na, eta) in &curve {
        c.row(&[num(*na), num(*eta)]);
    }
    manifest.write_artifact(dir, COLLECTION_CSV, c.as_str().as_bytes())?;
    say!("collection efficiency at {} NA values written", curve.len());
    Ok(())
}

fn tolerance(cfg: &RunConfig, g: &CavityGeometry, dir: &OutputDir, manifest: &mut Manifest) -> Result<(), Failure> {
    build_system(cfg, g, manifest)?;
    let report = tolerance_sweep(g, &cfg.sweep_params, &cfg.sweep_deltas_nm, &cfg.gme, cfg.sweep_na, cfg.threads)
        .map_err(Failure::solver)?;
    let mut c = Csv::new(&[
        "param",
        "delta_nm",
        "frequency_c_over_a",
        "q_factor",
        "q_normalized",
        "collection_efficiency",
        "error",
    ]);
    let mut failed = 0;
    for cell in &report.cells {
        let mut row = vec![cell.param.to_string(), num(cell.delta_nm)];
        match &cell.result {
            Ok(v) => {
                row.extend([num(v.frequency), num(v.q_factor), num(v.q_normalized), num(v.collection_efficiency)]);
                row.push(String::new());
            }
            Err(e) => {
                failed += 1;
                row.extend(std::iter::repeat_n(String::new(), 4));
                row.push(sanitize(e));
            }
        }
        c.row(&row);
    }
    manifest.write_artifact(dir, TOLERANCE_CSV, c.as_str().as_bytes())?;
    say!(
        "tolerance: {} cells ({failed} failed), baseline Q = {:.1}, collection at NA {} = {:.4}",
        report.cells.len(),
        report.baseline.q_factor,
        cfg.sweep_na,
        report.baseline.collection_efficiency
    );
    Ok(())
}

pub fn trace_row(r: &EpochRecord) -> Vec<String> {
    let mut row = vec![
        r.epoch.to_string(),
        r.stage.to_string(),
        num(r.q_ref),
        num(r.frequency),
        num(r.q_factor),
        num(r.overlap_a),
        num(r.tau_f),
        num(r.tau_ff),
        num(r.tau_q),
        num(r.total),
    ];
    row.extend(r.params.0.iter().map(|p| num(*p)));
    row
}

/// Normalized Q and far-field overlap per epoch.
pub fn series_csv(trace: &OptimizationTrace) -> Csv {
    let mut c = Csv::new(&["epoch", "q_normalized", "tau_ff"]);
    for (r, qn) in trace.records().iter().zip(trace.normalized_q()) {
        c.row(&[r.epoch.to_string(), num(qn), num(r.tau_ff)]);
    }
    c
}

/// Digest of the configuration fields that determine the optimizer trajectory.
fn trajectory_digest(cfg: &RunConfig) -> String {
    let text: String = cfg
        .to_text()
        .lines()
        .filter(|l| !l.starts_with("run.out "))
        .map(|l| format!("{l}\n"))
        .collect();
    sha256_hex(text.as_bytes())
}

fn optimize(
    cfg: &RunConfig,
    g: &CavityGeometry,
    dir: &OutputDir,
    manifest: &mut Manifest,
    resume: Option<&Path>,
    halt_after: Option<usize>,
) -> Result<(), Failure> {
    build_system(cfg, g, manifest)?;
    let schedule = cfg.schedule.stages().map_err(Failure::config)?;
    let opts = RunOptions {
        threads: cfg.threads,
        tau_ff_floor: cfg.schedule.tau_ff_floor,
        rolling_reference: cfg.schedule.rolling_reference,
        seed: cfg.seed,
        moments: cfg.schedule.moments,
    };
    let digest = trajectory_digest(cfg);
    let resume_state = match resume {
        None => None,
        Some(trace_path) => {
            let side = checkpoint::sidecar(trace_path);
            let text = fs::read_to_string(&side).map_err(|e| Failure::config(format!("{}: {e}", side.display())))?;
            let loaded = checkpoint::parse(&text).map_err(|e| Failure::config(format!("{}: {e}", side.display())))?;
            if loaded.config_digest != digest {
                return Err(Failure::config(format!(
                    "{} was written with a different configuration",
                    side.display()
                )));
            }
            manifest.add_input(&side).map_err(|e| Failure::config(format!("{}: {e}", side.display())))?;
            Some((loaded.trace, loaded.checkpoint))
        }
    };

    let trace_path = dir.path(TRACE_CSV);
    let side_path = checkpoint::sidecar(&trace_path);
    let side_name = side_path.file_name().unwrap().to_string_lossy().into_owned();
    let mut file = fs::File::create(&trace_path)?;
    let header = Csv::new(&TRACE_HEADER);
    file.write_all(header.as_str().as_bytes())?;
    let mut trace = match &resume_state {
        Some((t, _)) => t.clone(),
        None => OptimizationTrace::new(opts.tau_ff_floor),
    };
    for r in trace.records() {
        file.write_all(csv_line(&trace_row(r)).as_bytes())?;
    }
    file.flush()?;
    let mut io_error: Option<std::io::Error> = None;

    let result = run_with(
        g,
        &schedule,
        &cfg.gme,
        &cfg.loss,
        &ParamBounds::default(),
        &opts,
        resume_state,
        |rec, ckpt| {
            let _ = trace.push(*rec);
            let write = (|| -> std::io::Result<()> {
                file.write_all(csv_line(&trace_row(rec)).as_bytes())?;
                file.flush()?;
                crate::output::write_atomic(&side_path, checkpoint::render(&digest, &trace, ckpt).as_bytes())
            })();
            eprintln!(
                "epoch {:>4} stage {} f {:.5} Q {:>10.1} A {:.4} tau_ff {:.4} loss {:.5}",
                rec.epoch, rec.stage, rec.frequency, rec.q_factor, rec.overlap_a, rec.tau_ff, rec.total
            );
            if let Err(e) = write {
                io_error = Some(e);
                return ControlFlow::Break(());
            }
            match halt_after {
                Some(h) if rec.epoch >= h => ControlFlow::Break(()),
                _ => ControlFlow::Continue(()),
            }
        },
    );
    drop(file);
    if let Some(e) = io_error {
        return Err(e.into());
    }
    let (final_trace, best, outcome) = match result {
        Ok(out) => {
            let note = if out.completed {
                "completed".to_string()
            } else {
                format!(
                    "halted after epoch {}; continue with --resume {}",
                    out.trace.records().len() - 1,
                    trace_path.display()
                )
            };
            (out.trace, out.best, Ok(note))
        }
        Err(abort) => (abort.trace, abort.best, Err(Failure::solver(format!("optimizer aborted: {}", abort.error)))),
    };
    manifest.record(dir, TRACE_CSV)?;
    if side_path.exists() {
        manifest.record(dir, &side_name)?;
    }
    manifest.write_artifact(dir, SERIES_CSV, series_csv(&final_trace).as_str().as_bytes())?;
    manifest.write_artifact(dir, BEST_GEOMETRY, best.to_document().as_bytes())?;
    if let Some(b) = final_trace.best() {
        let q0 = final_trace.records()[0].q_factor;
        say!(
            "best epoch {}: Q = {:.1} ({:.2}× initial), tau_ff = {:.4}, f = {:.5} c/a",
            b.epoch,
            b.q_factor,
            b.q_factor / q0,
            b.tau_ff,
            b.frequency
        );
    }
    let note = outcome?;
    say!("optimize {note}");
    Ok(())
}
