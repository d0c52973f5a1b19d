use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use qcrf::{build_weights, slic_partition, total_energy, EnergyParams};
use qcrf_cli::bench::{bench_sweep, synthetic_instances, write_csv, BenchConfig};
use qcrf_cli::config::{Method, ParamsConfig, RunConfig};
use qcrf_cli::eval::{eval_iou, IGNORE_LABEL};
use qcrf_cli::pipeline::run_method;
use qcrf_cli::synth::generate;
use qcrf_cli::{io as qio, CliError, Result};

#[derive(Parser)]
#[command(name = "qcrf", version, about = "Fully connected CRF inference with superpixel-quantized weights")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute a SLIC superpixel map for a PGM image.
    Superpix {
        #[arg(long)]
        image: PathBuf,
        #[arg(long, default_value_t = 200)]
        count: usize,
        #[arg(long, default_value_t = 10.0)]
        compactness: f64,
        #[arg(long, short)]
        output: PathBuf,
    },
    /// Dump the quantized weight table as CSV (`s,t,w`, s <= t).
    Weights {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        superpixels: PathBuf,
        #[command(flatten)]
        params: ParamFlags,
        /// Defaults to stdout.
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Run inference and write the labeling as PGM.
    Solve(SolveArgs),
    /// Energy-gap sweep over lambda on synthetic instances.
    Bench(BenchArgs),
    /// Per-class IoU of a predicted labeling against ground truth.
    Eval {
        #[arg(long)]
        prediction: PathBuf,
        #[arg(long)]
        ground_truth: PathBuf,
        #[arg(long)]
        labels: usize,
        /// Score ground-truth value 255 like any other label.
        #[arg(long)]
        no_ignore: bool,
    },
    /// Write one synthetic instance (image, unaries, superpixels, truth).
    Synth {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 48)]
        width: usize,
        #[arg(long, default_value_t = 48)]
        height: usize,
        #[arg(long, default_value_t = 2)]
        labels: usize,
        #[arg(long, default_value_t = 20)]
        superpixels: usize,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

#[derive(Args, Default)]
struct ParamFlags {
    #[arg(long)]
    lambda1: Option<f64>,
    #[arg(long)]
    lambda2: Option<f64>,
    #[arg(long)]
    beta1: Option<f64>,
    #[arg(long)]
    beta2: Option<f64>,
    #[arg(long)]
    beta3: Option<f64>,
    #[arg(long)]
    smoothness: Option<f64>,
}

impl ParamFlags {
    fn apply(&self, p: &mut ParamsConfig) {
        let pairs = [
            (&mut p.lambda1, self.lambda1),
            (&mut p.lambda2, self.lambda2),
            (&mut p.beta1, self.beta1),
            (&mut p.beta2, self.beta2),
            (&mut p.beta3, self.beta3),
            (&mut p.smoothness, self.smoothness),
        ];
        for (field, flag) in pairs {
            if let Some(v) = flag {
                *field = v;
            }
        }
    }
}

#[derive(Args)]
struct SolveArgs {
    /// TOML run configuration; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    method: Option<Method>,
    #[arg(long)]
    image: Option<PathBuf>,
    #[arg(long)]
    unary: Option<PathBuf>,
    #[arg(long)]
    superpixels: Option<PathBuf>,
    #[arg(long, short)]
    output: Option<PathBuf>,
    #[arg(long)]
    superpixel_count: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    max_sweeps: Option<usize>,
    #[arg(long)]
    max_outer_sweeps: Option<usize>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    #[command(flatten)]
    params: ParamFlags,
}

#[derive(Args)]
struct BenchArgs {
    /// TOML bench configuration; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "0.1,0.3,0.5,1,2")]
    lambdas: Vec<f64>,
    #[arg(long, value_delimiter = ',', value_enum)]
    methods: Option<Vec<Method>>,
    #[arg(long)]
    instances: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    labels: Option<usize>,
    #[arg(long)]
    threads: Option<usize>,
    /// Defaults to stdout.
    #[arg(long, short)]
    output: Option<PathBuf>,
    #[command(flatten)]
    params: ParamFlags,
}

fn output_writer(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).map_err(|e| CliError::Io { path: p.display().to_string(), source: e })?,
        )),
        None => Box::new(io::stdout().lock()),
    })
}

fn solve(args: SolveArgs) -> Result<()> {
    let mut cfg = match &args.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(m) = args.method {
        cfg.method = m;
    }
    for (slot, flag) in [
        (&mut cfg.paths.image, args.image),
        (&mut cfg.paths.unary, args.unary),
        (&mut cfg.paths.superpixels, args.superpixels),
        (&mut cfg.paths.output, args.output),
    ] {
        if flag.is_some() {
            *slot = flag;
        }
    }
    cfg.superpixel_count = args.superpixel_count.unwrap_or(cfg.superpixel_count);
    cfg.seed = args.seed.unwrap_or(cfg.seed);
    cfg.solver.max_sweeps = args.max_sweeps.unwrap_or(cfg.solver.max_sweeps);
    cfg.solver.max_outer_sweeps = args.max_outer_sweeps.unwrap_or(cfg.solver.max_outer_sweeps);
    cfg.solver.max_iters = args.max_iters.unwrap_or(cfg.solver.max_iters);
    cfg.solver.tol = args.tol.unwrap_or(cfg.solver.tol);
    args.params.apply(&mut cfg.params);
    cfg.validate_for_solve()?;

    let paths = &cfg.paths;
    let image = qio::load_image(paths.image.as_deref().expect("validated"))?;
    let unary = qio::load_unary(paths.unary.as_deref().expect("validated"))?;
    if unary.width() != image.width() || unary.height() != image.height() {
        return Err(CliError::Config("unary tensor and image sizes differ".into()));
    }
    let partition = match &paths.superpixels {
        Some(p) => qio::load_partition(p, &image)?,
        None => slic_partition(&image, cfg.superpixel_count.min(image.len()), cfg.compactness)?,
    };
    let weights = build_weights(&partition, &cfg.energy_params()?)?;
    let outcome = run_method(cfg.method, &unary, &partition, &weights, &cfg.solver)?;
    let check = total_energy(&outcome.labeling, &unary, &partition, &weights)?;
    if check != outcome.energy {
        return Err(CliError::Invariant(format!(
            "reported energy {} differs from recomputed {check}",
            outcome.energy
        )));
    }
    qio::store_labeling(
        paths.output.as_deref().expect("validated"),
        image.width(),
        image.height(),
        &outcome.labeling,
        unary.num_labels(),
    )?;
    println!("method={} energy={} superpixels={}", cfg.method, outcome.energy, partition.num_superpixels());
    Ok(())
}

fn bench(args: BenchArgs) -> Result<()> {
    let mut cfg = match &args.config {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::Io { path: p.display().to_string(), source: e })?;
            toml::from_str(&text).map_err(|e| CliError::Config(e.to_string()))?
        }
        None => BenchConfig::default(),
    };
    if let Some(m) = args.methods {
        cfg.methods = m;
    }
    cfg.instances = args.instances.unwrap_or(cfg.instances);
    cfg.seed = args.seed.unwrap_or(cfg.seed);
    cfg.synth.num_labels = args.labels.unwrap_or(cfg.synth.num_labels);
    cfg.threads = args.threads.unwrap_or(cfg.threads);
    args.params.apply(&mut cfg.params);
    let params: EnergyParams = cfg.params.into();
    params.validate()?;
    if args.lambdas.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
        return Err(CliError::Config("lambdas must be finite and non-negative".into()));
    }
    let instances = synthetic_instances(&cfg)?;
    let rows = bench_sweep(&instances, &params, &args.lambdas, &cfg.methods, &cfg.solver, cfg.threads);
    write_csv(&rows, output_writer(args.output.as_deref())?)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Superpix { image, count, compactness, output } => {
            let image = qio::load_image(&image)?;
            let partition = slic_partition(&image, count, compactness)?;
            qio::store_partition(&output, &partition)?;
            println!("superpixels={}", partition.num_superpixels());
            Ok(())
        }
        Command::Weights { image, superpixels, params, output } => {
            let image = qio::load_image(&image)?;
            let partition = qio::load_partition(&superpixels, &image)?;
            let mut p = ParamsConfig::default();
            params.apply(&mut p);
            let weights = build_weights(&partition, &p.into())?;
            let mut w = csv::Writer::from_writer(output_writer(output.as_deref())?);
            w.write_record(["s", "t", "w"])?;
            for (s, t, v) in weights.upper_triangle() {
                w.write_record([s.to_string(), t.to_string(), v.to_string()])?;
            }
            w.flush().map_err(csv::Error::from)?;
            Ok(())
        }
        Command::Solve(args) => solve(args),
        Command::Bench(args) => bench(args),
        Command::Eval { prediction, ground_truth, labels, no_ignore } => {
            let (pw, ph, _, pred) = qio::load_labeling(&prediction)?;
            let (gw, gh, _, gt) = qio::load_labeling(&ground_truth)?;
            if (pw, ph) != (gw, gh) {
                return Err(CliError::Config(format!("prediction is {pw}x{ph}, ground truth {gw}x{gh}")));
            }
            let ignore = (!no_ignore).then_some(IGNORE_LABEL);
            let report = eval_iou(&pred, &gt, labels, ignore)?;
            println!("class,iou");
            for (l, iou) in report.per_class.iter().enumerate() {
                if let Some(v) = iou {
                    println!("{l},{v}");
                }
            }
            match report.mean {
                Some(m) => println!("mean,{m}"),
                None => println!("mean,"),
            }
            Ok(())
        }
        Command::Synth { seed, width, height, labels, superpixels, out_dir } => {
            let spec = qcrf_cli::synth::SynthSpec {
                width,
                height,
                num_labels: labels,
                superpixel_count: superpixels,
                ..Default::default()
            };
            let inst = generate(&spec, seed)?;
            std::fs::create_dir_all(&out_dir)
                .map_err(|e| CliError::Io { path: out_dir.display().to_string(), source: e })?;
            qio::store_image(&out_dir.join("image.pgm"), &inst.image)?;
            qio::store_unary(&out_dir.join("unary.bin"), &inst.unary)?;
            qio::store_partition(&out_dir.join("superpixels.bin"), &inst.partition)?;
            qio::store_labeling(&out_dir.join("truth.pgm"), width, height, &inst.ground_truth, labels)?;
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("qcrf: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
