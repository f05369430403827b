//! Command-line front end.
//!
//! Every subcommand reads the same JSON configuration (`--config`, with
//! built-in defaults when absent), so a run is reproducible from one
//! file.  `--out DIR` writes CSV/JSON artifacts; without it the primary
//! artifact streams to stdout.  Exit codes: 0 success, 1 failed checks,
//! 2 configuration or I/O problems, 3 numerical breakdown.

use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use iwatsuka::bands::{compute_bands, write_csv, BandsOptions};
use iwatsuka::evolve2d::{effective_packet, velocity_probe, write_trace_csv, EvolveOptions, Grid2D};
use iwatsuka::fiber::FiberGrid;
use iwatsuka::harness::{self, RunConfig};
use iwatsuka::ledger::build_ledger;
use iwatsuka::profiles::FieldProfile;
use iwatsuka::wavepacket::{
    check_localization, localization_threshold_scan, Envelope, WavePacket,
};
use iwatsuka::{Error, Result};

#[derive(Parser)]
#[command(
    name = "iwatsuka",
    version,
    about = "Band structure, edge currents and transport for a magnetic step in the plane"
)]
struct Cli {
    /// JSON run configuration; built-in defaults when absent.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Artifact directory; overrides the configuration's `out`.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Worker threads for the sweeps; defaults to the logical CPU count.
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Sweep the band functions and their slopes over the momentum grid.
    Bands,
    /// Build a trust-window packet and report its edge current and floors.
    Current,
    /// Check transverse confinement and scan for the guarantee threshold.
    Localize,
    /// Compare ramp profiles against the step: distances, bands, slopes.
    Smooth,
    /// Price the certified constants cascade for the first trust window.
    Constants,
    /// Evolve a packet through the configured perturbation and record it.
    Evolve,
    /// Run every registered check and write the report.
    VerifyAll,
    /// List the registered checks and their ledger anchors.
    ListChecks,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Numeric(_) => ExitCode::from(3),
                _ => ExitCode::from(2),
            }
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::from_json(&fs::read_to_string(path)?)?,
        None => RunConfig::default(),
    };
    if cli.out.is_some() {
        cfg.out = cli.out.clone();
    }
    if let Some(dir) = &cfg.out {
        fs::create_dir_all(dir)?;
    }
    match cli.cmd {
        Cmd::Bands => bands(&cfg),
        Cmd::Current => current(&cfg),
        Cmd::Localize => localize(&cfg),
        Cmd::Smooth => smooth(&cfg),
        Cmd::Constants => constants(&cfg),
        Cmd::Evolve => evolve(&cfg),
        Cmd::VerifyAll => verify_all(&cfg),
        Cmd::ListChecks => {
            harness::write_catalog(&mut std::io::stdout().lock())?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn sweep_opts(cfg: &RunConfig) -> BandsOptions {
    BandsOptions { resolution: cfg.grid.step, ..Default::default() }
}

fn emit(cfg: &RunConfig, name: &str, body: &[u8]) -> Result<Option<PathBuf>> {
    match &cfg.out {
        Some(dir) => {
            let path = dir.join(name);
            fs::write(&path, body)?;
            Ok(Some(path))
        }
        None => {
            std::io::stdout().lock().write_all(body)?;
            Ok(None)
        }
    }
}

fn bands(cfg: &RunConfig) -> Result<ExitCode> {
    let table = compute_bands(
        &cfg.profile,
        cfg.grid.k_min,
        cfg.grid.k_max,
        cfg.grid.n_k,
        cfg.grid.j_max,
        &sweep_opts(cfg),
    )?;
    let mut csv = Vec::new();
    write_csv(&table, &mut csv)?;
    if let Some(path) = emit(cfg, "bands.csv", &csv)? {
        println!(
            "{}",
            json!({
                "profile": cfg.profile.id(),
                "bands": cfg.grid.j_max,
                "momenta": table.k.len(),
                "transverse_step": table.grid.h,
                "csv": path,
            })
        );
    }
    Ok(ExitCode::SUCCESS)
}

/// Packet for the first trust window, or a fixed right-moving interval
/// when no window applies.
fn default_packet(cfg: &RunConfig) -> Result<(WavePacket, String)> {
    let opts = sweep_opts(cfg);
    let usable = !cfg.figure_mode && cfg.profile.ratio() > 1.0;
    if let (Some(w), true) = (cfg.windows.first(), usable) {
        let p = WavePacket::in_window(
            &cfg.profile,
            w.band,
            w.delta,
            33,
            Envelope::Hann,
            &opts,
        )?;
        Ok((p, format!("band {} trust window, half-width {}", w.band, w.delta)))
    } else {
        let bp = cfg.profile.b_plus();
        let (lo, hi) = (0.35 * bp.sqrt(), 1.9 * bp.sqrt());
        let p = WavePacket::on_k_interval(&cfg.profile, 1, lo, hi, 33, Envelope::Hann, &opts)?;
        Ok((p, format!("band 1 momenta [{lo:.3}, {hi:.3}]")))
    }
}

fn current(cfg: &RunConfig) -> Result<ExitCode> {
    let (packet, origin) = default_packet(cfg)?;
    let (e_lo, e_hi) = packet.energy_window();
    let (v_lo, v_hi) = packet.velocity_window();
    let mut summary = json!({
        "profile": cfg.profile.id(),
        "packet": origin,
        "envelope": packet.envelope.id(),
        "momentum_window": [packet.k[0], packet.k[packet.k.len() - 1]],
        "energy_window": [e_lo, e_hi],
        "edge_current": packet.edge_current(),
        "mean_velocity": packet.mean_velocity(),
        "velocity_window": [v_lo, v_hi],
    });
    if let (Some(w), false) = (cfg.windows.first(), cfg.figure_mode) {
        if let Ok(ledger) = build_ledger(w.band, cfg.profile.ratio(), w.delta) {
            let floor = ledger.perturbed.current_floor(cfg.profile.b_minus());
            summary["certified_floor"] = json!(floor);
            summary["floor_margin"] = json!(packet.edge_current() / floor);
        }
    }
    if let Some(dir) = &cfg.out {
        let mut csv = String::from("x,density\n");
        for (i, d) in packet.density().iter().enumerate() {
            csv.push_str(&format!("{:.12e},{:.12e}\n", packet.grid.x(i), d));
        }
        let path = dir.join("density.csv");
        fs::write(&path, csv)?;
        summary["density_csv"] = json!(path);
    }
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(ExitCode::SUCCESS)
}

fn localize(cfg: &RunConfig) -> Result<ExitCode> {
    let Some(w) = cfg.windows.first() else {
        return Err(Error::Config("localization needs a trust window".to_string()));
    };
    let l = &cfg.localization;
    let rep = check_localization(
        &cfg.profile,
        w.band,
        w.delta,
        l.eps1,
        l.eps2,
        33,
        &sweep_opts(cfg),
    )?;
    let scan = localization_threshold_scan(
        cfg.profile.ratio(),
        w.band,
        w.delta,
        l.eps1,
        l.eps2,
        33,
        &l.field_scan,
        &BandsOptions::default(),
    )?;
    let summary = json!({
        "profile": cfg.profile.id(),
        "band": rep.band,
        "delta": rep.delta,
        "interval": [rep.interval.0, rep.interval.1],
        "mass_inside": rep.mass_inside,
        "guarantee": rep.guarantee,
        "nontrivial": rep.nontrivial,
        "conditions_hold": rep.conditions.all(),
        "strong_pass": rep.strong_pass(),
        "envelope_max_ratio": rep.envelope_max_ratio,
        "field_scan": scan
            .reports
            .iter()
            .map(|(b, r)| json!({
                "b_minus": b,
                "guarantee": r.guarantee,
                "mass_inside": r.mass_inside,
                "strong_pass": r.strong_pass(),
            }))
            .collect::<Vec<_>>(),
        "threshold": scan.threshold,
    });
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(ExitCode::SUCCESS)
}

fn smooth(cfg: &RunConfig) -> Result<ExitCode> {
    let (bm, bp, r) = (cfg.profile.b_minus(), cfg.profile.b_plus(), cfg.profile.ratio());
    if !(r > 1.0) {
        return Err(Error::Config("ramp comparison needs a field step".to_string()));
    }
    let sharp = FieldProfile::sharp(bm, bp)?;
    let eps = 0.1 / bm.sqrt();
    let span = 2.2 * bp.sqrt();
    let mut shapes = Vec::new();
    for smooth in [
        FieldProfile::smooth_linear(bm, bp, eps)?,
        FieldProfile::smooth_cubic(bm, bp, eps)?,
    ] {
        let cmp = iwatsuka::bands::compare_sharp_smooth(
            &sharp,
            &smooth,
            -span,
            span,
            21,
            cfg.grid.j_max,
            &BandsOptions::default(),
        )?;
        shapes.push(json!({
            "profile": smooth.id(),
            "ramp_half_width": eps,
            "primitive_distance": cmp.sup_beta_distance,
            "max_sqrt_band_gap": cmp.max_sqrt_gap,
            "allowance": cmp.allowance,
            "sqrt_gap_within_distance": cmp.pass,
            "abs_gap_within_bound": cmp.pass_abs,
        }));
    }
    println!(
        "{}",
        serde_json::to_string_pretty(&json!({
            "step_profile": sharp.id(),
            "shapes": shapes,
        }))?
    );
    Ok(ExitCode::SUCCESS)
}

fn constants(cfg: &RunConfig) -> Result<ExitCode> {
    let Some(w) = cfg.windows.first() else {
        return Err(Error::Config("the constants cascade needs a trust window".to_string()));
    };
    if !cfg.profile.is_sharp() {
        return Err(Error::Config(
            "certified floors are stated for the step profile".to_string(),
        ));
    }
    let ledger = build_ledger(w.band, cfg.profile.ratio(), w.delta)?;
    let body = ledger.to_json()? + "\n";
    if let Some(path) = emit(cfg, "constants.json", body.as_bytes())? {
        println!("{}", json!({ "constants_json": path }));
    }
    Ok(ExitCode::SUCCESS)
}

fn evolve(cfg: &RunConfig) -> Result<ExitCode> {
    let e = &cfg.evolve;
    let x = FiberGrid::covering(e.x_lo, e.x_hi, e.hx)?;
    let grid = Grid2D::new(x, e.y_half, e.hy)?;
    let band = cfg.windows.first().map(|w| w.band).unwrap_or(1);
    let packet =
        effective_packet(&cfg.profile, band, e.k_lo, e.k_hi, e.n_k, e.envelope, &grid)?;
    let opts = EvolveOptions { dt: e.dt, ..Default::default() };
    let probe =
        velocity_probe(&packet, &cfg.perturbation, &grid, &opts, e.steps, e.samples)?;
    let mut csv = Vec::new();
    write_trace_csv(&probe.trace, &mut csv)?;
    let path = emit(cfg, "trace.csv", &csv)?;
    let mut summary = json!({
        "profile": cfg.profile.id(),
        "band": band,
        "perturbed": !cfg.perturbation.is_empty(),
        "initial_current": probe.initial_current,
        "dip": probe.dip,
        "late_mean": probe.late_mean,
        "norm_drift": probe.trace.norm_drift,
        "samples": probe.trace.times.len(),
    });
    if let Some(p) = path {
        summary["trace_csv"] = json!(p);
        println!("{}", serde_json::to_string_pretty(&summary)?);
    } else {
        eprintln!("{summary}");
    }
    Ok(ExitCode::SUCCESS)
}

fn verify_all(cfg: &RunConfig) -> Result<ExitCode> {
    let report = harness::run(cfg)?;
    let mut out = std::io::stdout().lock();
    for c in &report.checks {
        let bound = c.bound.map(|b| format!(" bound {b:.6e}")).unwrap_or_default();
        writeln!(
            out,
            "[{:>8}] {:<24} {:<28} observed {:.6e}{}",
            c.status.id(),
            c.id,
            c.anchor,
            c.observed,
            bound
        )?;
    }
    let failed = report.failed();
    writeln!(
        out,
        "{} checks: {} failed, {} of {} listed",
        report.checks.len(),
        failed,
        report.checks.len(),
        harness::catalog().len()
    )?;
    if failed > 0 {
        return Ok(ExitCode::from(1));
    }
    Ok(ExitCode::SUCCESS)
}
