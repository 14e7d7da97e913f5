use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;
use smlp_core::checkpoint::save_sidecar;
use smlp_core::{Checkpoint, ErrorSignal, ResetPolicy, Scheme, UpdateRule};
use smlp_cli::experiments::{
    ablation_violations, convergence_slope, early_guess, forward_equivalence, layer_curve, max_error_rise, quant_convergence,
    run_ablation, run_train, strictly_decreasing, Method, Variant, DETERMINISTIC_SLOPE, STOCHASTIC_SLOPE,
};
use smlp_cli::output::{opt_cell, out_file, write_csv, write_json};
use smlp_cli::spec::{config_hash, load_datasets, DataSource, Preset, RunSpec};

/// Spiking multi-layer perceptron experiments.
///
/// Exit status: 0 when every checked property holds, 2 when one is violated,
/// 1 on usage or runtime errors.
#[derive(Parser)]
#[command(name = "smlp", version)]
struct Cli {
    /// Directory for CSV, JSON and checkpoint outputs.
    #[arg(long, global = true, default_value = "runs")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Reconstruction error of deterministic vs Poisson spike encoding over T.
    QuantConvergence {
        #[arg(long, default_value_t = 64)]
        width: usize,
        #[arg(long = "T", value_delimiter = ',', default_values_t = [10, 100, 1000, 10000])]
        t: Vec<usize>,
        #[arg(long, default_value_t = 20)]
        seeds: u64,
    },
    /// Relative error of a random spiking network against its dense counterpart over T.
    ForwardEquivalence {
        #[arg(long, value_delimiter = ',', default_values_t = [784, 500, 500, 10])]
        arch: Vec<usize>,
        #[arg(long = "T", value_delimiter = ',', default_values_t = [10, 100, 1000, 10000])]
        t: Vec<usize>,
        #[arg(long, default_value_t = 0.1)]
        init_std: f64,
        /// Number of random inputs averaged.
        #[arg(long, default_value_t = 1)]
        inputs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train or evaluate a spiking or dense network.
    Train(TrainArgs),
    /// One-at-a-time hyperparameter variants against the SGD baseline.
    Ablation {
        #[command(flatten)]
        run: RunArgs,
        /// Subset of variants, by key.
        #[arg(long, value_delimiter = ',', value_parser = parse_variant)]
        variants: Option<Vec<Variant>>,
    },
    /// Error of early guesses versus computation for trained checkpoints.
    EarlyGuess {
        /// `name=path` pairs of checkpoints to evaluate as spiking networks.
        #[arg(long = "checkpoint", required = true, value_parser = parse_named)]
        checkpoints: Vec<(String, PathBuf)>,
        /// Checkpoint used for the dense reference points; defaults to the first one.
        #[arg(long)]
        dense: Option<PathBuf>,
        #[arg(long, default_value_t = 100)]
        t_max: usize,
        /// Snapshot timesteps; defaults to 1..=t_max.
        #[arg(long = "at", value_delimiter = ',')]
        at: Option<Vec<usize>>,
        /// Count only the layers after the input layer.
        #[arg(long)]
        exclude_input_layer: bool,
        #[command(flatten)]
        data: DataArgs,
    },
}

#[derive(Args, Clone)]
struct DataArgs {
    /// MNIST directory; defaults to `$SMLP_DATA/mnist`.
    #[arg(long)]
    data_dir: Option<PathBuf>,
    /// Sparse-format training file (use with --sparse-test instead of MNIST).
    #[arg(long, requires = "sparse_test")]
    sparse_train: Option<PathBuf>,
    #[arg(long, requires = "sparse_train")]
    sparse_test: Option<PathBuf>,
    #[arg(long)]
    n_features: Option<usize>,
    #[arg(long)]
    train_limit: Option<usize>,
    #[arg(long)]
    test_limit: Option<usize>,
}

impl DataArgs {
    fn source(&self) -> Option<DataSource> {
        match (&self.sparse_train, &self.sparse_test, &self.data_dir) {
            (Some(train), Some(test), _) => Some(DataSource::Sparse {
                train: train.clone(),
                test: test.clone(),
                n_features: self.n_features,
            }),
            (_, _, Some(dir)) => Some(DataSource::Mnist { dir: dir.clone() }),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum RuleArg {
    Sgd,
    Fsgd,
}

#[derive(Clone, Copy, ValueEnum)]
enum RoutingArg {
    BreadthFirst,
    DepthFirst,
}

#[derive(Clone, Copy, ValueEnum)]
enum ResetArg {
    NoReset,
    ZeroReset,
    Random,
}

#[derive(Clone, Copy, ValueEnum)]
enum SignalArg {
    Increment,
    Cumulative,
}

#[derive(Clone, Copy, ValueEnum)]
enum PresetArg {
    Desk,
    Full,
    FullSgd,
}

/// Settings shared by `train` and `ablation`; unset flags keep the preset's value.
#[derive(Args, Clone)]
struct RunArgs {
    #[arg(long, value_enum, default_value = "desk")]
    preset: PresetArg,
    #[arg(long, value_delimiter = ',')]
    arch: Option<Vec<usize>>,
    #[arg(long, value_enum)]
    rule: Option<RuleArg>,
    #[arg(long = "T")]
    t: Option<usize>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long, value_enum)]
    routing: Option<RoutingArg>,
    #[arg(long, value_enum)]
    bwd_reset: Option<ResetArg>,
    #[arg(long)]
    smooth: bool,
    #[arg(long, value_enum)]
    error_signal: Option<SignalArg>,
    #[arg(long)]
    init_std: Option<f64>,
    /// Timesteps for evaluating the spiking network; defaults to --T.
    #[arg(long)]
    eval_t: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    data: DataArgs,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Use the dense ReLU network instead of the spiking one.
    #[arg(long)]
    oracle: bool,
    /// Learning rate of the dense network.
    #[arg(long)]
    oracle_eta: Option<f64>,
    /// Start from these weights.
    #[arg(long)]
    init_from: Option<PathBuf>,
    /// Skip training and only evaluate the --init-from weights.
    #[arg(long)]
    eval_only: bool,
    /// Base name of the output files.
    #[arg(long, default_value = "train")]
    name: String,
}

fn parse_variant(s: &str) -> Result<Variant, String> {
    Variant::from_key(s).ok_or_else(|| {
        let keys: Vec<&str> = Variant::ALL.iter().map(|v| v.key()).collect();
        format!("unknown variant {s:?}; expected one of {}", keys.join(", "))
    })
}

fn parse_named(s: &str) -> Result<(String, PathBuf), String> {
    match s.split_once('=') {
        Some((name, path)) if !name.is_empty() && !path.is_empty() => Ok((name.to_string(), PathBuf::from(path))),
        _ => Err(format!("expected name=path, got {s:?}")),
    }
}

impl RunArgs {
    fn spec(&self) -> RunSpec {
        let mut spec = RunSpec::preset(match self.preset {
            PresetArg::Desk => Preset::Desk,
            PresetArg::Full => Preset::Full,
            PresetArg::FullSgd => Preset::FullSgd,
        });
        let c = &mut spec.train;
        if let Some(r) = self.rule {
            c.update_rule = match r {
                RuleArg::Sgd => UpdateRule::Sgd,
                RuleArg::Fsgd => UpdateRule::Fsgd,
            };
        }
        if let Some(r) = self.routing {
            c.routing = match r {
                RoutingArg::BreadthFirst => Scheme::BreadthFirst,
                RoutingArg::DepthFirst => Scheme::DepthFirst,
            };
        }
        if let Some(r) = self.bwd_reset {
            c.bwd_reset = match r {
                ResetArg::NoReset => ResetPolicy::NoReset,
                ResetArg::ZeroReset => ResetPolicy::ZeroReset,
                ResetArg::Random => ResetPolicy::Random,
            };
        }
        if let Some(s) = self.error_signal {
            c.error_signal = match s {
                SignalArg::Increment => ErrorSignal::Increment,
                SignalArg::Cumulative => ErrorSignal::Cumulative,
            };
        }
        c.smooth_gradients |= self.smooth;
        if let Some(t) = self.t {
            c.t_steps = t;
        }
        if let Some(eta) = self.eta {
            c.eta = eta;
        }
        if let Some(seed) = self.seed {
            c.seed = seed;
        }
        if let Some(arch) = &self.arch {
            spec.arch = arch.clone();
        }
        if let Some(e) = self.epochs {
            spec.epochs = e;
        }
        if let Some(s) = self.init_std {
            spec.init_std = s;
        }
        spec.eval_t = self.eval_t.or(spec.eval_t);
        if let Some(src) = self.data.source() {
            spec.data = src;
        }
        if self.data.train_limit.is_some() {
            spec.train_limit = self.data.train_limit;
        }
        if self.data.test_limit.is_some() {
            spec.test_limit = self.data.test_limit;
        }
        spec
    }
}

/// Outcome of a subcommand: the property violations it found.
type Violations = Vec<String>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(v) if v.is_empty() => ExitCode::SUCCESS,
        Ok(v) => {
            for msg in v {
                eprintln!("property violated: {msg}");
            }
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Result<Violations> {
    match cli.command {
        Command::QuantConvergence { width, t, seeds } => cmd_quant_convergence(&cli.out, width, &t, seeds),
        Command::ForwardEquivalence {
            arch,
            t,
            init_std,
            inputs,
            seed,
        } => cmd_forward_equivalence(&cli.out, &arch, &t, init_std, inputs, seed),
        Command::Train(args) => cmd_train(&cli.out, args),
        Command::Ablation { run, variants } => cmd_ablation(&cli.out, &run, variants.as_deref().unwrap_or(&Variant::ALL)),
        Command::EarlyGuess {
            checkpoints,
            dense,
            t_max,
            at,
            exclude_input_layer,
            data,
        } => cmd_early_guess(&cli.out, &checkpoints, dense, t_max, at, exclude_input_layer, &data),
    }
}

fn cmd_quant_convergence(out: &std::path::Path, width: usize, ts: &[usize], seeds: u64) -> Result<Violations> {
    if ts.len() < 2 || ts.contains(&0) {
        bail!("need at least two positive T values");
    }
    let hash = config_hash(&json!({"cmd": "quant-convergence", "width": width, "T": ts, "seeds": seeds}));
    let rows = quant_convergence(width, ts, seeds)?;
    let path = out_file(out, "quant_convergence.csv")?;
    write_csv(
        &path,
        &hash,
        "method,T,l1_error",
        rows.iter().map(|r| format!("{},{},{}", r.method.name(), r.t, r.l1_error)),
    )?;
    let mut violations = Vec::new();
    for (method, band) in [(Method::Deterministic, DETERMINISTIC_SLOPE), (Method::Stochastic, STOCHASTIC_SLOPE)] {
        let slope = convergence_slope(&rows, method);
        println!("{:<13} slope {slope:+.3}  (band {:+.2}..{:+.2})", method.name(), band.start(), band.end());
        if !band.contains(&slope) {
            violations.push(format!("{} slope {slope:.3} outside [{}, {}]", method.name(), band.start(), band.end()));
        }
    }
    println!("wrote {}", path.display());
    Ok(violations)
}

fn cmd_forward_equivalence(
    out: &std::path::Path,
    arch: &[usize],
    ts: &[usize],
    init_std: f64,
    inputs: usize,
    seed: u64,
) -> Result<Violations> {
    if arch.len() < 2 {
        bail!("--arch needs at least two layer sizes");
    }
    let hash = config_hash(&json!({"cmd": "forward-equivalence", "arch": arch, "T": ts, "init_std": init_std, "inputs": inputs, "seed": seed}));
    let rows = forward_equivalence(arch, ts, init_std, seed, inputs)?;
    let path = out_file(out, "forward_equivalence.csv")?;
    write_csv(&path, &hash, "layer,T,rel_l1", rows.iter().map(|r| format!("{},{},{}", r.layer, r.t, r.rel_l1)))?;
    let mut violations = Vec::new();
    for l in 0..arch.len() - 1 {
        let curve = layer_curve(&rows, l);
        let cells: Vec<String> = curve.iter().map(|(t, e)| format!("T={t}: {e:.4}")).collect();
        println!("layer {l}: {}", cells.join("  "));
        if !strictly_decreasing(&curve) {
            violations.push(format!("layer {l} error is not strictly decreasing in T"));
        }
    }
    println!("wrote {}", path.display());
    Ok(violations)
}

fn cmd_train(out: &std::path::Path, args: TrainArgs) -> Result<Violations> {
    let mut spec = args.run.spec();
    spec.oracle = args.oracle;
    if let Some(eta) = args.oracle_eta {
        spec.oracle_eta = eta;
    }
    spec.init_from = args.init_from;
    spec.eval_only = args.eval_only;
    spec.validate()?;
    let (train, test) = load_datasets(&spec.data, spec.train_limit, spec.test_limit)?;
    println!(
        "{} {:?}: {} train / {} test samples, hash {}",
        if spec.oracle { "dense" } else { "spiking" },
        spec.arch,
        train.len(),
        test.len(),
        config_hash(&spec)
    );
    let outcome = run_train(&spec, &train, &test, |e| {
        let train = e.train_error.map_or(String::from("-"), |x| format!("{x:.2}%"));
        println!("epoch {:>3}  train {train}  test {:.2}%", e.epoch, e.test_error);
    })?;
    let rec = &outcome.record;
    let base = &args.name;
    let ckpt_path = out_file(out, &format!("{base}.ckpt"))?;
    outcome.checkpoint.save(&ckpt_path)?;
    save_sidecar(&ckpt_path, &spec)?;
    write_json(&out_file(out, &format!("{base}.json"))?, rec)?;
    write_csv(
        &out_file(out, &format!("{base}_epochs.csv"))?,
        &rec.config_hash,
        "epoch,train_error,test_error",
        rec.epochs.iter().map(|e| format!("{},{},{}", e.epoch, opt_cell(e.train_error), e.test_error)),
    )?;
    println!("wrote {} ({:.1}s)", ckpt_path.display(), rec.wall_time_secs);
    Ok(Vec::new())
}

fn cmd_ablation(out: &std::path::Path, run: &RunArgs, variants: &[Variant]) -> Result<Violations> {
    let base = run.spec();
    base.validate()?;
    let (train, test) = load_datasets(&base.data, base.train_limit, base.test_limit)?;
    let hash = config_hash(&json!({"cmd": "ablation", "base": base, "variants": variants}));
    println!("{:<32} {:>8}", "Variant", "% Error");
    let rows = run_ablation(&base, variants, &train, &test, |r| {
        println!("{:<32} {:>8.2}", r.variant.label(), r.test_error);
    })?;
    let path = out_file(out, "ablation.csv")?;
    write_csv(
        &path,
        &hash,
        "variant,train_error,test_error",
        rows.iter().map(|r| format!("{},{},{}", r.variant.key(), opt_cell(r.train_error), r.test_error)),
    )?;
    write_json(&out_file(out, "ablation.json")?, &json!({"config_hash": hash, "base": base, "rows": rows}))?;
    println!("wrote {}", path.display());
    Ok(ablation_violations(&rows))
}

fn cmd_early_guess(
    out: &std::path::Path,
    checkpoints: &[(String, PathBuf)],
    dense: Option<PathBuf>,
    t_max: usize,
    at: Option<Vec<usize>>,
    exclude_input_layer: bool,
    data: &DataArgs,
) -> Result<Violations> {
    let mut spec = RunSpec::default();
    if let Some(src) = data.source() {
        spec.data = src;
    }
    let test_limit = data.test_limit.or(spec.test_limit);
    let (_, test) = load_datasets(&spec.data, Some(1), test_limit)?;
    let models = checkpoints
        .iter()
        .map(|(name, path)| Ok((name.clone(), Checkpoint::load(path).with_context(|| format!("loading {}", path.display()))?)))
        .collect::<Result<Vec<_>>>()?;
    let dense_ckpt = match &dense {
        Some(p) => Checkpoint::load(p)?,
        None => models[0].1.clone(),
    };
    let at = at.unwrap_or_else(|| (1..=t_max).collect());
    let hash = config_hash(&json!({
        "cmd": "early-guess",
        "checkpoints": checkpoints,
        "dense": dense,
        "t_max": t_max,
        "at": at,
        "exclude_input_layer": exclude_input_layer,
        "data": spec.data,
        "test_limit": test_limit,
    }));
    let rows = early_guess(&models, &dense_ckpt, &test, t_max, &at, !exclude_input_layer)?;
    let path = out_file(out, "early_guess.csv")?;
    write_csv(
        &path,
        &hash,
        "model,t,ops,error",
        rows.iter().map(|r| format!("{},{},{},{}", r.model, r.t.map(|t| t.to_string()).unwrap_or_default(), r.ops, r.error)),
    )?;
    for r in rows.iter().filter(|r| r.t.is_none() || r.t == Some(t_max)) {
        println!("{:<16} ops {:>12.0}  error {:.2}%", r.model, r.ops, r.error);
    }
    println!("wrote {}", path.display());
    let mut violations = Vec::new();
    if test.len() >= 1000 {
        for (name, _) in &models {
            let rise = max_error_rise(&rows, name);
            if rise > 0.5 {
                violations.push(format!("{name}: error rises by {rise:.2} points between snapshots"));
            }
        }
    }
    Ok(violations)
}
