use std::fs;
use std::io;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{ensure, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{error, info};

use dstc::codec::{write_dstc, TwoLevelBitmapMatrix, ValueOrder};
use dstc::cost::CostConfig;
use dstc::gen;
use dstc_bench::fixture;
use dstc_bench::report::{write_im2col, write_outputs, write_report};
use dstc_bench::run::{run_sweep, RowResult, RunOptions};
use dstc_bench::scenario::{parse_scenarios, GemmSpec, LayerSpec, Scenario, Workload};

#[derive(Parser)]
#[command(name = "dstc", version, about = "Dual-side sparse tensor core experiments")]
struct Cli {
    /// Base RNG seed for scenarios that do not set their own.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Square tile edge for GEMM encodings and fixtures.
    #[arg(long, global = true, default_value_t = 32)]
    tile: usize,
    /// Worker threads; all cores when absent.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Also write long-format per-figure tables.
    #[arg(long, global = true)]
    plot_data: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CostArgs {
    #[arg(long, default_value_t = 16)]
    ports: usize,
    #[arg(long, default_value_t = 16)]
    banks: usize,
    #[arg(long, default_value_t = 32)]
    oc_window: usize,
    /// Schedule accumulation without the operand collector.
    #[arg(long)]
    no_collector: bool,
    /// Keep per-step records and write them under `traces/`.
    #[arg(long)]
    traces: bool,
}

impl CostArgs {
    fn config(&self) -> CostConfig {
        CostConfig {
            acc_ports: self.ports,
            acc_banks: self.banks,
            oc_window: self.oc_window,
            use_operand_collector: !self.no_collector,
            ..CostConfig::default()
        }
    }
}

#[derive(Args)]
struct LayerArgs {
    #[arg(long, default_value = "layer")]
    name: String,
    #[arg(long = "h")]
    h: usize,
    #[arg(long = "w")]
    w: usize,
    #[arg(long = "c")]
    c: usize,
    #[arg(long = "n", default_value_t = 1)]
    n: usize,
    #[arg(long, default_value_t = 3)]
    kh: usize,
    #[arg(long, default_value_t = 3)]
    kw: usize,
    #[arg(long, default_value_t = 1)]
    stride: usize,
    #[arg(long, default_value_t = 0.5)]
    act_density: f64,
    #[arg(long, default_value_t = 1.0)]
    wgt_density: f64,
    #[arg(long, default_value = "dual")]
    mode: String,
    #[arg(long, default_value_t = 1)]
    repetitions: usize,
}

impl LayerArgs {
    fn spec(&self) -> LayerSpec {
        LayerSpec {
            name: self.name.clone(),
            h: self.h,
            w: self.w,
            c: self.c,
            n: self.n,
            kh: self.kh,
            kw: self.kw,
            s: self.stride,
            act_density: self.act_density,
            wgt_density: self.wgt_density,
            mode: self.mode.clone(),
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum FixtureKind {
    /// Two-level bitmap matrix, `.dstc`.
    Matrix,
    /// HWC feature map, `.dmat`.
    Map,
}

#[derive(Subcommand)]
enum Command {
    /// Write a random fixture file.
    Gen {
        kind: FixtureKind,
        /// Rows, or feature-map height.
        #[arg(long)]
        rows: usize,
        /// Columns, or feature-map width.
        #[arg(long)]
        cols: usize,
        #[arg(long, default_value_t = 1)]
        channels: usize,
        #[arg(long)]
        density: f64,
        /// File stem; derived from the shape when absent.
        #[arg(long)]
        name: Option<String>,
    },
    /// Random sparse GEMM with oracle check and cost report.
    Gemm {
        #[arg(long)]
        m: usize,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        a_density: f64,
        #[arg(long)]
        b_density: f64,
        #[arg(long, default_value = "dual")]
        mode: String,
        #[arg(long, default_value_t = 1)]
        repetitions: usize,
        #[command(flatten)]
        cost: CostArgs,
    },
    /// Random sparse convolution layer with oracle check and cost report.
    Conv {
        #[command(flatten)]
        layer: LayerArgs,
        #[command(flatten)]
        cost: CostArgs,
    },
    /// Read counts of dense, CSR and bitmap im2col on one layer.
    Im2colBench {
        #[command(flatten)]
        layer: LayerArgs,
    },
    /// Run every scenario of a JSON file.
    Sweep {
        scenarios: PathBuf,
        #[command(flatten)]
        cost: CostArgs,
    },
    /// Check a `.dstc` or `.dmat` fixture round-trips.
    Verify { fixture: PathBuf },
}

fn run_scenarios(cli: &Cli, scenarios: Vec<Scenario>, cost: Option<&CostArgs>) -> Result<ExitCode> {
    let opts = RunOptions {
        seed: cli.seed,
        tile: cli.tile,
        cost: cost.map(CostArgs::config).unwrap_or_default(),
        keep_traces: cost.is_some_and(|c| c.traces),
    };
    opts.cost.validate()?;
    for s in &scenarios {
        s.validate().with_context(|| s.name())?;
    }
    let rows = run_sweep(&scenarios, &opts)?;
    write_outputs(&cli.out, &rows, cli.plot_data)?;
    let stdout = io::stdout().lock();
    if rows.iter().all(|r| matches!(r, RowResult::Im2col(_))) {
        write_im2col(stdout, &rows)?;
    } else {
        write_report(stdout, &rows)?;
    }
    let failed = rows.iter().filter(|r| !r.passed()).count();
    if failed > 0 {
        error!("{failed} oracle check(s) failed");
        return Ok(ExitCode::from(2));
    }
    Ok(ExitCode::SUCCESS)
}

fn gen_fixture(cli: &Cli, kind: FixtureKind, rows: usize, cols: usize, channels: usize, density: f64, name: Option<String>) -> Result<()> {
    let mut rng = gen::rng(cli.seed);
    fs::create_dir_all(&cli.out)?;
    let (path, bytes) = match kind {
        FixtureKind::Matrix => {
            ensure!(channels == 1, "matrix fixtures have one channel");
            let dense = gen::sparse_matrix(rows, cols, density, &mut rng)?;
            let enc = TwoLevelBitmapMatrix::encode(&dense, cli.tile, cli.tile, ValueOrder::RowMajor)?;
            let mut buf = Vec::new();
            write_dstc(&enc, &mut buf)?;
            let stem = name.unwrap_or_else(|| format!("matrix_{rows}x{cols}_d{density}"));
            (cli.out.join(format!("{stem}.dstc")), buf)
        }
        FixtureKind::Map => {
            let map = gen::feature_map(rows, cols, channels, density, &mut rng)?;
            let mut buf = Vec::new();
            map.write_dmat(&mut buf)?;
            let stem = name.unwrap_or_else(|| format!("map_{rows}x{cols}x{channels}_d{density}"));
            (cli.out.join(format!("{stem}.dmat")), buf)
        }
    };
    fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
    println!("{}", path.display());
    Ok(())
}

fn run(cli: &Cli) -> Result<ExitCode> {
    ensure!((1..=32).contains(&cli.tile), "--tile must be in 1..=32");
    if let Some(t) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(t).build_global()?;
    }
    match &cli.command {
        Command::Gen { kind, rows, cols, channels, density, name } => {
            gen_fixture(cli, *kind, *rows, *cols, *channels, *density, name.clone())?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Gemm { m, n, k, a_density, b_density, mode, repetitions, cost } => {
            let s = Scenario {
                repetitions: *repetitions,
                ..Scenario::new(Workload::Gemm(GemmSpec {
                    name: None,
                    m: *m,
                    n: *n,
                    k: *k,
                    a_density: *a_density,
                    b_density: *b_density,
                    mode: Some(mode.clone()),
                }))
            };
            run_scenarios(cli, vec![s], Some(cost))
        }
        Command::Conv { layer, cost } => {
            let s = Scenario {
                repetitions: layer.repetitions,
                ..Scenario::new(Workload::Conv(layer.spec()))
            };
            run_scenarios(cli, vec![s], Some(cost))
        }
        Command::Im2colBench { layer } => {
            let s = Scenario {
                repetitions: layer.repetitions,
                ..Scenario::new(Workload::Im2colBench(layer.spec()))
            };
            run_scenarios(cli, vec![s], None)
        }
        Command::Sweep { scenarios, cost } => {
            let text = fs::read_to_string(scenarios).with_context(|| format!("reading {}", scenarios.display()))?;
            let list = parse_scenarios(&text)?;
            info!("{} scenarios from {}", list.len(), scenarios.display());
            run_scenarios(cli, list, Some(cost))
        }
        Command::Verify { fixture } => {
            println!("{}", fixture::verify(fixture)?);
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter("DSTC_LOG")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
