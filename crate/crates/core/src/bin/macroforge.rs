// SPDX-License-Identifier: Apache-2.0

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use macroforge::driver::{analyze, write_outputs, Pipeline, PipelineConfig, PlacementFile, PrototypeMode};
use macroforge::evaluator::{render_svg, RenderAnnotations};
use macroforge::netlist::{generate_synthetic, load_design, save_design, ChipOutline, SyntheticSpec};
use macroforge::relocator::IoRegions;
use macroforge::tuner::{tune, TuneSpec};
use macroforge::{Error, Result};

#[derive(Parser)]
#[command(name = "macroforge", version, about = "Fixed-outline macro placement")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Place all macros of a design.
    Place(PlaceArgs),
    /// Print metrics of an existing placement as JSON.
    Eval(EvalArgs),
    /// Draw an existing placement as SVG.
    Render(RenderArgs),
    /// Tune the overlap and cost weights.
    Tune(TuneArgs),
    /// Write a synthetic design.
    Generate(GenerateArgs),
}

#[derive(Args)]
struct ConfigArgs {
    /// Pipeline configuration JSON; missing fields take defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
}

impl ConfigArgs {
    fn load(&self) -> Result<PipelineConfig> {
        let mut cfg = match &self.config {
            Some(p) => PipelineConfig::load(p)?,
            None => PipelineConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        Ok(cfg)
    }
}

#[derive(Args)]
struct PlaceArgs {
    #[arg(long)]
    design: PathBuf,
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long)]
    out: PathBuf,
    /// `internal` or `file:<positions.json>`.
    #[arg(long)]
    prototype: Option<PrototypeMode>,
    /// Write per-iteration logs and stage timings under <out>/trace.
    #[arg(long)]
    trace: bool,
    #[arg(long)]
    abplace_lambda: Option<f64>,
    #[arg(long)]
    abplace_iters: Option<usize>,
    #[arg(long)]
    abplace_tol: Option<f64>,
    /// Write groups, clusters and the connection matrix to <out>/connectivity.json.
    #[arg(long)]
    dump_connectivity: bool,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    design: PathBuf,
    #[arg(long)]
    placement: PathBuf,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct RenderArgs {
    #[arg(long)]
    design: PathBuf,
    #[arg(long)]
    placement: PathBuf,
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long, default_value = "layout.svg")]
    out: PathBuf,
}

#[derive(Args)]
struct TuneArgs {
    #[arg(long)]
    design: PathBuf,
    #[arg(long, default_value_t = 50)]
    budget: usize,
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long, default_value = "tune_result.json")]
    out: PathBuf,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    macros: usize,
    /// Defaults scale with the macro count.
    #[arg(long)]
    cells: Option<usize>,
    #[arg(long)]
    nets: Option<usize>,
    #[arg(long)]
    width: Option<f64>,
    #[arg(long)]
    height: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

fn write(path: &Path, body: &str) -> Result<()> {
    fs::write(path, body).map_err(|e| Error::Placement(format!("{}: {e}", path.display())))
}

fn place(args: PlaceArgs) -> Result<()> {
    let design = load_design(&args.design)?;
    let mut cfg = args.config.load()?;
    if let Some(mode) = args.prototype {
        cfg.prototype = mode;
    }
    if let Some(l) = args.abplace_lambda {
        cfg.lambda = l;
    }
    if let Some(n) = args.abplace_iters {
        cfg.abplace.max_iters = n;
    }
    if let Some(t) = args.abplace_tol {
        cfg.abplace.tol = t;
    }
    let (pipeline, mut state) = Pipeline::new(&design, cfg, args.trace)?;
    if args.dump_connectivity {
        fs::create_dir_all(&args.out).map_err(|e| Error::Placement(format!("{}: {e}", args.out.display())))?;
        let body = serde_json::to_string_pretty(&pipeline.connectivity_dump()).expect("dump serializes");
        write(&args.out.join("connectivity.json"), &body)?;
    }
    pipeline.run(&mut state)?;
    let result = pipeline.finish(state)?;
    write_outputs(&args.out, &design, &result, args.trace)?;
    eprintln!(
        "placed {} macros in {} iterations, hpwl {:.3}",
        result.rects.len(),
        result.iterations,
        result.metrics.hpwl
    );
    Ok(())
}

fn eval(args: EvalArgs) -> Result<()> {
    let design = load_design(&args.design)?;
    let rects = PlacementFile::load(&args.placement)?.rects(&design)?;
    let (pipeline, _) = Pipeline::new(&design, args.config.load()?, false)?;
    let metrics = pipeline.evaluate(&rects)?;
    println!("{}", serde_json::to_string_pretty(&metrics).expect("metrics serialize"));
    Ok(())
}

fn render(args: RenderArgs) -> Result<()> {
    let design = load_design(&args.design)?;
    let rects = PlacementFile::load(&args.placement)?.rects(&design)?;
    let cfg = args.config.load()?;
    let (_, _, groups) = analyze(&design, &cfg);
    let mut group_of = vec![None; design.num_macros];
    for g in &groups {
        for &m in &g.members {
            group_of[m] = Some(g.id);
        }
    }
    let notes = RenderAnnotations {
        groups: group_of,
        keepouts: IoRegions::from_ports(&design, &cfg.io_keepout).rects,
        ellipse: None,
    };
    write(&args.out, &render_svg(&design, &rects, &notes))
}

fn tune_cmd(args: TuneArgs) -> Result<()> {
    let design = load_design(&args.design)?;
    let cfg = args.config.load()?;
    let spec = TuneSpec {
        budget: args.budget,
        ..TuneSpec::default()
    };
    let result = tune(&design, &cfg, &spec, cfg.seed)?;
    write(&args.out, &result.to_json())?;
    eprintln!("best objective {:.6} at sample {}", result.best_objective, result.best_index);
    Ok(())
}

fn generate(args: GenerateArgs) -> Result<()> {
    let mut spec = SyntheticSpec::scaled(args.seed, args.macros);
    if let Some(c) = args.cells {
        spec.n_cells = c;
    }
    if let Some(n) = args.nets {
        spec.n_nets = n;
    }
    if args.width.is_some() || args.height.is_some() {
        spec.outline = ChipOutline::new(
            args.width.unwrap_or(spec.outline.width),
            args.height.unwrap_or(spec.outline.height),
        )?;
    }
    save_design(&generate_synthetic(&spec)?, &args.out)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Place(a) => place(a),
        Command::Eval(a) => eval(a),
        Command::Render(a) => render(a),
        Command::Tune(a) => tune_cmd(a),
        Command::Generate(a) => generate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
