//! `qdpurify`: simulate gated quantum-dot photon streams, analyse tag files, run sweeps.
//!
//! Exit codes: 0 success, 1 bad usage or configuration, 2 runtime failure.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod config;
mod recipes;

use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use qdpurify::analysis::analyze;
use qdpurify::correlator::HbtHistogram;
use qdpurify::estimators::DecompositionOptions;
use qdpurify::sweeper::{predict_g2, sweep_offset, sweep_power, write_sweep_csv, SweepSettings};
use qdpurify::{gated_beta, qtt1, simulate, survival_fraction, ModulationWaveform};
use serde_json::{json, Value};

use config::{RunConfig, SweepSpec, UsageError};
use recipes::Recipe;

#[derive(Parser)]
#[command(
    name = "qdpurify",
    version,
    about = "Temporal purification of single photons from room-temperature quantum dots"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct Common {
    /// JSON run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed; overrides `train.rng_seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a pulsed run; writes tags.qtt1 and summary.json.
    Simulate {
        #[command(flatten)]
        common: Common,
    },
    /// Analyse a QTT1 tag file; writes waveform.csv, hbt.csv, decomposition.csv and analysis.json.
    Analyze {
        /// QTT1 tag file.
        tags: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Run the sweep in the config's `sweep` section, or a bundled recipe.
    Sweep {
        #[arg(long, value_enum, conflicts_with = "config")]
        recipe: Option<Recipe>,
        /// Pulses per row for recipes.
        #[arg(long, requires = "recipe")]
        pulses: Option<u64>,
        #[command(flatten)]
        common: Common,
    },
    /// Modulation waveform utilities.
    Waveform {
        #[command(subcommand)]
        action: WaveformAction,
    },
}

#[derive(Subcommand)]
enum WaveformAction {
    /// Tabulate m(t) as CSV (stdout unless --out is given).
    Sample {
        /// Waveform as inline JSON, e.g. '{"kind":"heaviside_step","t0":30}'. Defaults to the config's.
        #[arg(long)]
        waveform: Option<String>,
        #[arg(long)]
        start: Option<f64>,
        #[arg(long)]
        end: Option<f64>,
        #[arg(long)]
        step: Option<f64>,
        #[command(flatten)]
        common: Common,
    },
}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn load_config(common: &Common) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(p) => config::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.train.rng_seed = seed;
    }
    Ok(cfg)
}

fn out_dir(common: &Common, cfg: &RunConfig) -> Result<PathBuf> {
    let dir = common.out.clone().or_else(|| cfg.output.clone()).unwrap_or_else(|| PathBuf::from("qdpurify-out"));
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn write_json(path: &Path, v: &Value) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, v)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn cmd_simulate(common: &Common) -> Result<()> {
    let cfg = load_config(common)?;
    let dir = out_dir(common, &cfg)?;
    let sim = simulate(&cfg.emitter, &cfg.train, &cfg.waveform, &cfg.chain)?;
    let tags_path = dir.join("tags.qtt1");
    let mut w = create(&tags_path)?;
    qtt1::write_tags(&sim.tags, &mut w)?;

    let power = cfg.train.power_ratio;
    let (s, ds) = sim.summary.survival();
    let (b, db) = sim.summary.gated_biexciton_share();
    let a = &cfg.analysis;
    let g2_pred =
        predict_g2(&cfg.emitter, power, &cfg.waveform, &cfg.chain, cfg.train.repetition_period, a.integration_window);
    write_json(
        &dir.join("summary.json"),
        &json!({
            "config": cfg,
            "summary": sim.summary,
            "survival": { "mc": s, "sigma": s_or_zero(ds), "analytic": survival_fraction(&cfg.emitter, power, &cfg.waveform)? },
            "beta": { "mc": b, "sigma": s_or_zero(db), "analytic": gated_beta(&cfg.emitter, power, &cfg.waveform)? },
            "g2_predicted": g2_pred.ok(),
        }),
    )?;
    println!("{} tags -> {}", sim.tags.len(), tags_path.display());
    Ok(())
}

fn s_or_zero(x: f64) -> f64 {
    if x.is_finite() {
        x
    } else {
        0.0
    }
}

fn cmd_analyze(tags: &Path, common: &Common) -> Result<()> {
    let cfg = load_config(common)?;
    let dir = out_dir(common, &cfg)?;
    let file = File::open(tags).with_context(|| format!("opening {}", tags.display()))?;
    let tags_v = qtt1::read_tags(BufReader::new(file)).with_context(|| format!("reading {}", tags.display()))?;
    let period = cfg.train.repetition_period;
    let a = &cfg.analysis;

    // Flat dark background is subtracted only when the run is described by a config.
    let n_pulses = match (&common.config, tags_v.last()) {
        (Some(_), _) => cfg.train.n_pulses,
        (None, Some(t)) => (t.time_ns() / period).floor() as u64 + 1,
        (None, None) => 0,
    };
    let background = if common.config.is_some() {
        DecompositionOptions::default()
            .with_dark_background(cfg.chain.dark_rate_per_ns(), 2, n_pulses, a.waveform_bin)
            .background_per_bin
    } else {
        0.0
    };
    let an = analyze(&tags_v, period, &cfg.waveform, background, a)?;

    let meta = format!("# source={}\n# config={}\n", tags.display(), cfg.to_json_line());
    let mut w = create(&dir.join("waveform.csv"))?;
    w.write_all(meta.as_bytes())?;
    an.waveform.to_csv(&mut w)?;
    w.flush()?;

    let hbt = an.hbt.clone().unwrap_or_else(|_| HbtHistogram::empty(a.span_for(period), a.hbt_bin));
    let mut w = create(&dir.join("hbt.csv"))?;
    w.write_all(meta.as_bytes())?;
    hbt.to_csv(&mut w)?;
    w.flush()?;

    let err = |e: &qdpurify::Error| json!({ "error": e.to_string() });
    let g2 = match &an.g2 {
        Ok(g) => json!({
            "g2_zero": g.g2_zero,
            "sigma": g.sigma,
            "center_area": g.center_area,
            "mean_side_area": g.mean_side(),
            "side_areas": g.side_areas,
        }),
        Err(e) => err(e),
    };
    let beta = match &an.decomposition {
        Ok(d) => {
            let mut w = create(&dir.join("decomposition.csv"))?;
            w.write_all(meta.as_bytes())?;
            d.to_csv(&mut w)?;
            w.flush()?;
            json!({
                "beta_hat": d.beta_hat,
                "sigma": d.beta_sigma,
                "tau_slow": d.tau_slow,
                "a_slow": d.a_slow,
                "tau_fast": d.tau_fast,
                "a_fast": d.a_fast,
                "tail_fit_start": d.tail_fit_start,
                "fit_residual": d.fit_residual,
                "clamped_fraction": d.clamped_fraction,
                "background_per_bin": d.background_per_bin,
            })
        }
        Err(e) => err(e),
    };
    let per_channel = [0u8, 1].map(|c| tags_v.iter().filter(|t| t.channel == c).count());
    write_json(
        &dir.join("analysis.json"),
        &json!({
            "source": tags.display().to_string(),
            "tags": tags_v.len(),
            "tags_per_channel": per_channel,
            "zero_counts": tags_v.is_empty(),
            "pulses_assumed": n_pulses,
            "g2": g2,
            "beta": beta,
            "settings": a,
        }),
    )?;
    match &an.g2 {
        Ok(g) => println!("g2(0) = {:.5} ± {:.5}", g.g2_zero, g.sigma),
        Err(e) => println!("g2(0) unavailable: {e}"),
    }
    match &an.decomposition {
        Ok(d) => println!("beta  = {:.5} ± {:.5}", d.beta_hat, d.beta_sigma),
        Err(e) => println!("beta unavailable: {e}"),
    }
    Ok(())
}

fn cmd_sweep(recipe: Option<Recipe>, pulses: Option<u64>, common: &Common) -> Result<()> {
    let cfg = load_config(common)?;
    let dir = out_dir(common, &cfg)?;
    let (name, rows, mut meta) = match recipe {
        Some(r) => {
            let pulses = pulses.unwrap_or(recipes::DEFAULT_RECIPE_PULSES);
            if pulses == 0 {
                return Err(usage("--pulses must be >= 1"));
            }
            let seed = common.seed.unwrap_or(0);
            let rows = recipes::run(r, seed, pulses)?;
            let meta = vec![
                ("recipe".to_string(), r.name().to_string()),
                ("seed".to_string(), seed.to_string()),
                ("pulses_per_row".to_string(), pulses.to_string()),
            ];
            (r.name().to_string(), rows, meta)
        }
        None => {
            if common.config.is_none() {
                return Err(usage("sweep needs --recipe or --config with a `sweep` section"));
            }
            let spec = cfg.sweep.clone().ok_or_else(|| usage("config has no `sweep` section"))?;
            let rows = match spec {
                SweepSpec::Offset { edge, offsets, dark } => {
                    let s = SweepSettings { analysis: cfg.analysis.clone(), dark };
                    sweep_offset(&cfg.emitter, &cfg.train, &cfg.chain, edge, &offsets, &s)
                }
                SweepSpec::Power { powers, dark } => {
                    let s = SweepSettings { analysis: cfg.analysis.clone(), dark };
                    sweep_power(&cfg.emitter, &cfg.train, &cfg.chain, &cfg.waveform, &powers, &s)
                }
            }
            .map_err(|e| match e {
                qdpurify::Error::InvalidConfig { .. } => usage(e.to_string()),
                other => other.into(),
            })?;
            ("sweep".to_string(), rows, vec![("seed".to_string(), cfg.train.rng_seed.to_string())])
        }
    };
    meta.push(("config".to_string(), cfg.to_json_line()));
    let path = dir.join(format!("{name}.csv"));
    let mut w = create(&path)?;
    write_sweep_csv(&rows, &meta, &mut w)?;
    w.flush()?;
    let failed = rows.iter().filter(|r| r.error.is_some()).count();
    println!("{} rows ({failed} with notes) -> {}", rows.len(), path.display());
    Ok(())
}

fn cmd_waveform_sample(
    inline: Option<&str>,
    start: Option<f64>,
    end: Option<f64>,
    step: Option<f64>,
    common: &Common,
) -> Result<()> {
    let cfg = load_config(common)?;
    let w: ModulationWaveform = match inline {
        Some(text) => {
            let de = &mut serde_json::Deserializer::from_str(text);
            serde_path_to_error::deserialize(de)
                .map_err(|e| usage(format!("--waveform: {}: {}", e.path(), e.inner())))?
        }
        None => cfg.waveform,
    };
    w.validate().map_err(|e| usage(e.to_string()))?;
    let start = start.unwrap_or(cfg.sample.start);
    let end = end.unwrap_or(cfg.sample.end);
    let step = step.unwrap_or(cfg.sample.step);
    if !(step > 0.0 && step.is_finite()) {
        return Err(usage("step must be finite and > 0"));
    }
    if !(end >= start) {
        return Err(usage("end must be >= start"));
    }

    let mut out: Box<dyn Write> = match &common.out {
        Some(_) => Box::new(create(&out_dir(common, &cfg)?.join("waveform_sample.csv"))?),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    };
    writeln!(out, "# waveform={}", serde_json::to_string(&w)?)?;
    writeln!(out, "t_ns,transmission")?;
    let n = ((end - start) / step + 1e-9).floor() as u64;
    for k in 0..=n {
        let t = start + k as f64 * step;
        writeln!(out, "{t},{}", w.transmission(t))?;
    }
    out.flush()?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { common } => cmd_simulate(&common),
        Command::Analyze { tags, common } => cmd_analyze(&tags, &common),
        Command::Sweep { recipe, pulses, common } => cmd_sweep(recipe, pulses, &common),
        Command::Waveform { action: WaveformAction::Sample { waveform, start, end, step, common } } => {
            cmd_waveform_sample(waveform.as_deref(), start, end, step, &common)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
