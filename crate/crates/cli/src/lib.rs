//! Config-driven runs of the sparse-dl library: training, evaluation, the
//! synthetic generator and certified convex runs.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;
use sparse_dl::encoders::FistaConfig;
use sparse_dl::eval::{classify, encode_test, metrics, Metrics};
use sparse_dl::io::{load_features, load_labels, load_model, save_features, save_labels, save_model};
use sparse_dl::model::{build_targets, EncoderKind, FeatureMatrix, HyperParams, SupervisionTargets};
use sparse_dl::synthetic::{generate_synthetic, SyntheticSpec};
use sparse_dl::trainer::{
    certify, train_with_observer, BTrainConfig, CertifiedRun, CertifyOptions, IterationRecord, SweepOptions, TrainOptions,
    TrainReport, TrainRun,
};
use sparse_dl::Error;

pub const EXIT_OK: u8 = 0;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_DATA: u8 = 3;
pub const EXIT_DIVERGENCE: u8 = 4;
pub const EXIT_CERTIFICATION: u8 = 5;

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    fn config(msg: impl Into<String>) -> Self {
        Self { code: EXIT_CONFIG, message: msg.into() }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Config(_) => EXIT_CONFIG,
            Error::Divergence { .. } | Error::Singular(_) => EXIT_DIVERGENCE,
            _ => EXIT_DATA,
        };
        Self { code, message: e.to_string() }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "sdl", version, about = "Label-consistent sparse dictionary learning")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model from a config file.
    Train(TrainArgs),
    /// Evaluate a saved model on labeled features.
    Eval(EvalArgs),
    /// Write a synthetic dataset with its ground truth.
    Synth(SynthArgs),
    /// Run the supervised convex pipeline with fixed weights and check every step.
    Certify(CertifyArgs),
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Supervised proximal code steps with a per-step certificate (fista only).
    #[arg(long)]
    pub certify: bool,
    #[arg(long)]
    pub encoder: Option<EncoderKind>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long)]
    pub labels: PathBuf,
    /// Also write `metrics.txt` here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 32)]
    pub d: usize,
    #[arg(long, default_value_t = 500)]
    pub n: usize,
    #[arg(long, default_value_t = 30)]
    pub k: usize,
    #[arg(long, default_value_t = 3)]
    pub c: usize,
    #[arg(long, default_value_t = 3)]
    pub t: usize,
    #[arg(long, default_value_t = 0.05)]
    pub noise_sigma: f64,
    #[arg(long, default_value_t = 3.0)]
    pub separation: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct CertifyArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Override `c_G / L_G`; values below 1 void the decrease guarantee.
    #[arg(long)]
    pub g_curvature_factor: Option<f64>,
    #[arg(long)]
    pub iterations: Option<usize>,
}

/// Flat run configuration. Relative paths are resolved against the config
/// file's directory. Without `features` the run uses a synthetic dataset
/// described by the `synthetic_*` keys.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub features: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub encoder: Option<EncoderKind>,
    pub n_atoms: Option<usize>,
    pub n_classes: Option<usize>,

    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub mu_a: Option<f64>,
    pub rho_w: Option<f64>,
    pub eps_d: Option<f64>,
    pub mu_g: Option<f64>,
    pub lambda: Option<f64>,
    pub sparsity: Option<usize>,
    pub n_layers: Option<usize>,
    pub warmup_iters: Option<usize>,
    pub ramp_iters: Option<usize>,
    pub max_outer: Option<usize>,
    pub seed: Option<u64>,

    pub learning_rate: Option<f64>,
    pub inner_steps: Option<usize>,
    pub grad_clip: Option<f64>,

    pub fista_max_iters: Option<usize>,
    pub fista_rel_tol: Option<f64>,

    pub certify_iterations: Option<usize>,
    pub g_curvature_factor: Option<f64>,
    pub g_prox_steps: Option<usize>,
    pub d_curvature_factor: Option<f64>,
    pub d_pgd_steps: Option<usize>,
    pub class_init: Option<bool>,

    pub synthetic_d: Option<usize>,
    pub synthetic_n: Option<usize>,
    pub synthetic_k: Option<usize>,
    pub synthetic_c: Option<usize>,
    pub synthetic_t: Option<usize>,
    pub synthetic_noise_sigma: Option<f64>,
    pub synthetic_separation: Option<f64>,
    pub synthetic_seed: Option<u64>,
}

/// Regularization used by `certify` when the config leaves it unset.
pub const CERTIFY_MU_G: f64 = 30.0;
pub const CERTIFY_MU_A: f64 = 100.0;
pub const CERTIFY_RHO_W: f64 = 100.0;
pub const CERTIFY_LAMBDA: f64 = 1.0;

const DEFAULT_ATOMS: usize = 520;

impl Config {
    pub fn load(path: &Path) -> CliResult<(Self, PathBuf)> {
        let text = fs::read_to_string(path).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        let cfg: Config = toml::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok((cfg, base))
    }

    fn synthetic_keys_set(&self) -> bool {
        self.synthetic_d.is_some()
            || self.synthetic_n.is_some()
            || self.synthetic_k.is_some()
            || self.synthetic_c.is_some()
            || self.synthetic_t.is_some()
            || self.synthetic_noise_sigma.is_some()
            || self.synthetic_separation.is_some()
            || self.synthetic_seed.is_some()
    }

    pub fn synthetic_spec(&self) -> SyntheticSpec {
        let d = SyntheticSpec::default();
        SyntheticSpec {
            d: self.synthetic_d.unwrap_or(d.d),
            n: self.synthetic_n.unwrap_or(d.n),
            k: self.synthetic_k.unwrap_or(d.k),
            c: self.synthetic_c.unwrap_or(d.c),
            t: self.synthetic_t.unwrap_or(d.t),
            noise_sigma: self.synthetic_noise_sigma.unwrap_or(d.noise_sigma),
            cluster_separation: self.synthetic_separation.unwrap_or(d.cluster_separation),
            seed: self.synthetic_seed.unwrap_or(d.seed),
        }
    }

    fn hyper_params(&self, base: HyperParams, default_sparsity: usize) -> HyperParams {
        HyperParams {
            alpha: self.alpha.unwrap_or(base.alpha),
            beta: self.beta.unwrap_or(base.beta),
            mu_a: self.mu_a.unwrap_or(base.mu_a),
            rho_w: self.rho_w.unwrap_or(base.rho_w),
            eps_d: self.eps_d.unwrap_or(base.eps_d),
            mu_g: self.mu_g.unwrap_or(base.mu_g),
            lambda: self.lambda.unwrap_or(base.lambda),
            sparsity: self.sparsity.unwrap_or(default_sparsity),
            n_layers: self.n_layers.unwrap_or(base.n_layers),
            warmup_iters: self.warmup_iters.unwrap_or(base.warmup_iters),
            ramp_iters: self.ramp_iters.unwrap_or(base.ramp_iters),
            max_outer: self.max_outer.unwrap_or(base.max_outer),
            seed: self.seed.unwrap_or(base.seed),
        }
    }

    fn fista(&self) -> FistaConfig {
        let d = FistaConfig::default();
        FistaConfig {
            max_iters: self.fista_max_iters.unwrap_or(d.max_iters),
            rel_tol: self.fista_rel_tol.unwrap_or(d.rel_tol),
            ..d
        }
    }

    fn sweep(&self) -> SweepOptions {
        let d = SweepOptions::default();
        SweepOptions {
            g_curvature_factor: self.g_curvature_factor.unwrap_or(d.g_curvature_factor),
            g_prox_steps: self.g_prox_steps.unwrap_or(d.g_prox_steps),
            d_curvature_factor: self.d_curvature_factor.unwrap_or(d.d_curvature_factor),
            d_pgd_steps: self.d_pgd_steps.unwrap_or(d.d_pgd_steps),
        }
    }
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// Training data plus the sizes the model is built with.
struct Dataset {
    y: FeatureMatrix,
    targets: SupervisionTargets,
    default_sparsity: usize,
}

fn load_dataset(cfg: &Config, base: &Path) -> CliResult<Dataset> {
    let (y, labels, n_atoms, n_classes, default_sparsity) = match &cfg.features {
        Some(f) => {
            if cfg.synthetic_keys_set() {
                return Err(CliError::config("synthetic_* keys cannot be combined with a features file"));
            }
            let labels_path = cfg
                .labels
                .as_ref()
                .ok_or_else(|| CliError::config("`features` needs a matching `labels` file"))?;
            let y = load_features(&resolve(base, f))?;
            let labels = load_labels(&resolve(base, labels_path))?;
            let n_classes = cfg.n_classes.unwrap_or_else(|| labels.iter().max().map_or(0, |m| m + 1));
            let n_atoms = cfg.n_atoms.unwrap_or(DEFAULT_ATOMS);
            (y, labels, n_atoms, n_classes, HyperParams::default().sparsity)
        }
        None => {
            if cfg.labels.is_some() {
                return Err(CliError::config("`labels` given without `features`"));
            }
            let spec = cfg.synthetic_spec();
            let s = generate_synthetic(&spec)?;
            let n_atoms = cfg.n_atoms.unwrap_or(spec.k);
            let n_classes = cfg.n_classes.unwrap_or(spec.c);
            (s.y, s.labels, n_atoms, n_classes, spec.t)
        }
    };
    if y.n_samples() == 0 {
        return Err(CliError { code: EXIT_DATA, message: "dataset has no samples".into() });
    }
    if labels.len() != y.n_samples() {
        return Err(CliError {
            code: EXIT_DATA,
            message: format!("{} labels for {} samples", labels.len(), y.n_samples()),
        });
    }
    let targets = build_targets(&labels, n_atoms, n_classes)?;
    Ok(Dataset { y, targets, default_sparsity })
}

fn write(path: &Path, bytes: &[u8]) -> CliResult<()> {
    fs::write(path, bytes).map_err(|e| CliError {
        code: EXIT_DATA,
        message: format!("{}: {e}", path.display()),
    })
}

fn create_dir(path: &Path) -> CliResult<()> {
    fs::create_dir_all(path).map_err(|e| CliError {
        code: EXIT_DATA,
        message: format!("{}: {e}", path.display()),
    })
}

fn to_json<T: serde::Serialize>(v: &T) -> CliResult<Vec<u8>> {
    let mut s = serde_json::to_vec_pretty(v).map_err(|e| CliError {
        code: EXIT_DIVERGENCE,
        message: format!("report serialization: {e}"),
    })?;
    s.push(b'\n');
    Ok(s)
}

fn out_dir(cli: Option<&PathBuf>, cfg: &Config, base: &Path) -> PathBuf {
    match (cli, &cfg.out) {
        (Some(p), _) => p.clone(),
        (None, Some(p)) => resolve(base, p),
        (None, None) => base.join("out"),
    }
}

/// Human-readable table of a training report.
pub fn report_text(report: &TrainReport) -> String {
    let mut s = format!(
        "# train encoder={} supervised_codes={} iterations={}\n",
        report.encoder,
        report.supervised_codes,
        report.records.len()
    );
    s.push_str("iter  phase   alpha     beta      objective           step_norm     train_acc  h1\n");
    for r in &report.records {
        let acc = r.train_accuracy.map_or("-".to_string(), |a| format!("{a:.4}"));
        let h1 = r.h1_pass.map_or("-", |p| if p { "pass" } else { "FAIL" });
        let _ = writeln!(
            s,
            "{:<5} {:<7} {:<9.4} {:<9.4} {:<19.12e} {:<13.6e} {:<10} {}",
            r.iteration,
            format!("{:?}", r.phase).to_lowercase(),
            r.alpha,
            r.beta,
            r.objective,
            r.step_norm,
            acc,
            h1
        );
    }
    if let Some(c) = &report.certificate {
        let _ = writeln!(s, "certificate: {} ({} sweeps)", if c.pass { "pass" } else { "FAIL" }, c.sweeps.len());
    }
    s
}

pub struct TrainOutcome {
    pub run: TrainRun,
    pub out_dir: PathBuf,
    /// False only when `--certify` was set and a check failed.
    pub certified: bool,
}

/// Trains from `args.config`, then writes `model.bin`, `report.json`,
/// `report.txt` and, with `--certify`, `certificate.txt`/`certificate.json`.
/// A diverged run leaves `report.partial.json` and no model.
pub fn cmd_train(args: &TrainArgs) -> CliResult<TrainOutcome> {
    let (cfg, base) = Config::load(&args.config)?;
    let kind = args.encoder.or(cfg.encoder).unwrap_or(EncoderKind::TopKLista);
    if args.certify && kind != EncoderKind::FistaLasso {
        return Err(CliError::config("--certify needs the fista encoder"));
    }
    let data = load_dataset(&cfg, &base)?;
    let mut hp = cfg.hyper_params(HyperParams::default(), data.default_sparsity);
    if let Some(seed) = args.seed {
        hp.seed = seed;
    }
    let opts = TrainOptions {
        b_train: BTrainConfig {
            learning_rate: cfg.learning_rate.unwrap_or(BTrainConfig::default().learning_rate),
            inner_steps: cfg.inner_steps.unwrap_or(BTrainConfig::default().inner_steps),
            grad_clip: cfg.grad_clip.unwrap_or(BTrainConfig::default().grad_clip),
        },
        fista: cfg.fista(),
        supervised_codes: args.certify,
        sweep: cfg.sweep(),
    };
    let out = out_dir(args.out.as_ref(), &cfg, &base);
    let mut seen: Vec<IterationRecord> = Vec::new();
    let result = train_with_observer(&data.y, &data.targets, &hp, kind, &opts, |r, _, _| seen.push(r.clone()));
    let run = match result {
        Ok(run) => run,
        Err(e @ Error::Divergence { .. }) => {
            create_dir(&out)?;
            let partial = TrainReport {
                encoder: kind,
                supervised_codes: args.certify,
                records: seen,
                certificate: None,
            };
            write(&out.join("report.partial.json"), &to_json(&partial)?)?;
            return Err(e.into());
        }
        Err(e) => return Err(e.into()),
    };
    create_dir(&out)?;
    save_model(&run.state, &out.join("model.bin"))?;
    write(&out.join("report.json"), &to_json(&run.report)?)?;
    write(&out.join("report.txt"), report_text(&run.report).as_bytes())?;
    let mut certified = true;
    if let Some(cert) = &run.report.certificate {
        write(&out.join("certificate.txt"), cert.to_text().as_bytes())?;
        write(&out.join("certificate.json"), &to_json(cert)?)?;
        certified = cert.pass;
    }
    Ok(TrainOutcome { run, out_dir: out, certified })
}

/// Encodes `features` with the saved model, classifies and reports metrics.
pub fn cmd_eval(args: &EvalArgs) -> CliResult<Metrics> {
    let state = load_model(&args.model)?;
    let y = load_features(&args.features)?;
    let labels = load_labels(&args.labels)?;
    if labels.len() != y.n_samples() {
        return Err(CliError {
            code: EXIT_DATA,
            message: format!("{} labels for {} samples", labels.len(), y.n_samples()),
        });
    }
    let g = encode_test(&y.view(), &state, &FistaConfig::default())?;
    let pred = classify(&g.view(), &state.classifier.view())?;
    let m = metrics(&pred, &labels, &g.view(), state.n_classes())?;
    if let Some(out) = &args.out {
        create_dir(out)?;
        write(&out.join("metrics.txt"), m.to_text().as_bytes())?;
    }
    Ok(m)
}

/// Writes `features.bin`, `labels.txt`, `d_true.bin` and `g_true.bin`.
pub fn cmd_synth(args: &SynthArgs) -> CliResult<()> {
    let spec = SyntheticSpec {
        d: args.d,
        n: args.n,
        k: args.k,
        c: args.c,
        t: args.t,
        noise_sigma: args.noise_sigma,
        cluster_separation: args.separation,
        seed: args.seed,
    };
    let s = generate_synthetic(&spec)?;
    create_dir(&args.out)?;
    save_features(s.y.as_array(), &args.out.join("features.bin"))?;
    save_labels(&s.labels, &args.out.join("labels.txt"))?;
    save_features(&s.d_true, &args.out.join("d_true.bin"))?;
    save_features(&s.g_true, &args.out.join("g_true.bin"))?;
    Ok(())
}

pub struct CertifyOutcome {
    pub run: CertifiedRun,
    pub out_dir: PathBuf,
}

/// Certified run with fixed `(α, β)`. Writes `certificate.txt`,
/// `certificate.json` and `model.bin`; a failing certificate is still written.
pub fn cmd_certify(args: &CertifyArgs) -> CliResult<CertifyOutcome> {
    let (cfg, base) = Config::load(&args.config)?;
    if matches!(cfg.encoder, Some(EncoderKind::TopKLista)) {
        return Err(CliError::config("certification runs the fista pipeline"));
    }
    let data = load_dataset(&cfg, &base)?;
    let certify_base = HyperParams {
        mu_g: CERTIFY_MU_G,
        mu_a: CERTIFY_MU_A,
        rho_w: CERTIFY_RHO_W,
        lambda: CERTIFY_LAMBDA,
        ..HyperParams::default()
    };
    let mut hp = cfg.hyper_params(certify_base, data.default_sparsity);
    if let Some(seed) = args.seed {
        hp.seed = seed;
    }
    hp.validate(data.targets.n_atoms())?;
    let mut sweep = cfg.sweep();
    if let Some(f) = args.g_curvature_factor {
        sweep.g_curvature_factor = f;
    }
    if !(sweep.g_curvature_factor > 0.0 && sweep.d_curvature_factor > 0.0) {
        return Err(CliError::config("curvature factors must be positive"));
    }
    let opts = CertifyOptions {
        iterations: args.iterations.or(cfg.certify_iterations).unwrap_or(CertifyOptions::default().iterations),
        alpha: hp.alpha,
        beta: hp.beta,
        sweep,
        fista: cfg.fista(),
        class_init: cfg.class_init.unwrap_or(true),
    };
    let run = certify(&data.y, &data.targets, &hp, &opts)?;
    let out = out_dir(args.out.as_ref(), &cfg, &base);
    create_dir(&out)?;
    write(&out.join("certificate.txt"), run.certificate.to_text().as_bytes())?;
    write(&out.join("certificate.json"), &to_json(&run.certificate)?)?;
    save_model(&run.state, &out.join("model.bin"))?;
    Ok(CertifyOutcome { run, out_dir: out })
}

/// Runs a parsed command line and returns the process exit code.
pub fn run(cli: &Cli) -> u8 {
    let result = match &cli.command {
        Command::Train(a) => cmd_train(a).map(|o| {
            println!("{}", report_text(&o.run.report).trim_end());
            println!("wrote {}", o.out_dir.display());
            if o.certified {
                EXIT_OK
            } else {
                EXIT_CERTIFICATION
            }
        }),
        Command::Eval(a) => cmd_eval(a).map(|m| {
            print!("{}", m.to_text());
            EXIT_OK
        }),
        Command::Synth(a) => cmd_synth(a).map(|()| {
            println!("wrote {}", a.out.display());
            EXIT_OK
        }),
        Command::Certify(a) => cmd_certify(a).map(|o| {
            let c = &o.run.certificate;
            match c.first_failure() {
                None => {
                    println!("certificate: pass ({} sweeps)", c.sweeps.len());
                    EXIT_OK
                }
                Some((it, what)) => {
                    println!("certificate: FAIL at iteration {it}: {what}");
                    EXIT_CERTIFICATION
                }
            }
        }),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.code
        }
    }
}
