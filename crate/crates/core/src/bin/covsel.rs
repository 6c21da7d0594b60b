//! `covsel`: generate models, compute exact oracles, run estimators and
//! compare them.
//!
//! Exit codes: 0 success, 2 precondition failure, 3 numeric failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use covsel::bench::{
    ar1_verify, exact_oracle, format_summary_table, memory_budget_from_env, parse_bytes, run_estimator, score,
    sidecar_path, summarize, write_summary_csv, Ar1VerifyConfig, EstimatorKind, EstimatorParams, GeneratedModel,
    IndexSpec, ResultRow, RunRecord, SamplerKind, MEMORY_BUDGET_ENV,
};
use covsel::mtx;
use covsel::selcov::SelectedCov;
use covsel::{Error, Result};

#[derive(Parser)]
#[command(name = "covsel", version, about = "Selected covariances of sparse GMRFs: exact oracle, Monte Carlo and Rao-Blackwellized estimators")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a model's matrices and manifest.json into a directory.
    Gen {
        #[command(subcommand)]
        model: GenModel,
    },
    /// Exact selected inverse by Takahashi recursion.
    Oracle(OracleArgs),
    /// Run one estimator with a fixed seed.
    Estimate(EstimateArgs),
    /// Score estimates against an oracle and aggregate over replications.
    Compare(CompareArgs),
    /// Analytic against empirical RMSE on AR(1) chains.
    Ar1Verify(Ar1Args),
}

#[derive(Subcommand)]
enum GenModel {
    /// Stationary AR(1) chain.
    Ar1 {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        phi: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// RW1 posterior diag(λ) + GᵀG on a 7-point (or 5-point) lattice.
    Rw1 {
        #[arg(long, value_delimiter = ',', required = true)]
        dims: Vec<usize>,
        #[arg(long, default_value_t = 1)]
        lambda_seed: u64,
        #[arg(long, default_value_t = 0.1)]
        lambda_lo: f64,
        #[arg(long, default_value_t = 0.2)]
        lambda_hi: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// K variables per voxel with equicorrelated coupling.
    Kvar {
        #[arg(long, value_delimiter = ',', required = true)]
        dims: Vec<usize>,
        #[arg(long)]
        k: usize,
        #[arg(long, default_value_t = 0.5)]
        rho: f64,
        #[arg(long, default_value_t = 1)]
        lambda_seed: u64,
        #[arg(long, default_value_t = 0.1)]
        lambda_lo: f64,
        #[arg(long, default_value_t = 0.2)]
        lambda_hi: f64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct ModelArgs {
    /// Model directory written by `gen`.
    #[arg(long, conflicts_with = "q", required_unless_present = "q")]
    model: Option<PathBuf>,
    /// Bare Matrix Market precision matrix.
    #[arg(long)]
    q: Option<PathBuf>,
    /// `G` of `Q = GᵀG + HᵀH`, used with `--q` by the PCG sampler.
    #[arg(long, requires = "h", requires = "q")]
    g: Option<PathBuf>,
    #[arg(long, requires = "g")]
    h: Option<PathBuf>,
    /// Index set: diag, pattern, neighbors or pairs:FILE.
    #[arg(long = "set", default_value = "diag")]
    set: String,
}

impl ModelArgs {
    fn load(&self) -> Result<GeneratedModel> {
        if let Some(dir) = &self.model {
            return GeneratedModel::read(dir);
        }
        let q = mtx::read_sym(self.q.as_ref().expect("clap enforces --model or --q"))?;
        let gh = match (&self.g, &self.h) {
            (Some(g), Some(h)) => Some((mtx::read_rect(g)?, mtx::read_rect(h)?)),
            _ => None,
        };
        Ok(GeneratedModel::from_matrix(q, gh))
    }

    fn index(&self, model: &GeneratedModel) -> Result<covsel::sparse::IndexSet> {
        let spec: IndexSpec = self.set.parse()?;
        let lattice = model.manifest.as_ref().map(|m| m.lattice()).transpose()?;
        spec.resolve(&model.q, lattice.as_ref())
    }
}

#[derive(Args)]
struct OracleArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Memory budget in bytes (K/M/G suffixes allowed); overrides the environment.
    #[arg(long)]
    budget: Option<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EstimateArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// mc, hutchinson, simple-rbmc, block-rbmc or interface.
    #[arg(long)]
    estimator: String,
    #[arg(long = "ns", default_value_t = 50)]
    n_s: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// chol (exact) or pcg (needs G and H).
    #[arg(long, default_value = "chol")]
    sampler: String,
    /// Blocks per lattice dimension, e.g. 4,4,4.
    #[arg(long, value_delimiter = ',')]
    blocks: Option<Vec<usize>>,
    /// Block RBMC enclosure margin in voxels.
    #[arg(long, default_value_t = 4)]
    margin: usize,
    /// Interface method refinement iterations.
    #[arg(long, default_value_t = 1)]
    n_iter: usize,
    /// PCG relative residual tolerance.
    #[arg(long, default_value_t = 1e-9)]
    delta: f64,
    #[arg(long, default_value_t = 0.95)]
    confidence: f64,
    /// Estimate CSV; timing goes to `<out>.json`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CompareArgs {
    #[arg(long)]
    oracle: PathBuf,
    /// Estimate CSVs; each may have a `.json` timing sidecar.
    #[arg(long, num_args = 1.., required = true)]
    estimates: Vec<PathBuf>,
    /// Summary CSV.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-replication result rows CSV.
    #[arg(long)]
    rows: Option<PathBuf>,
}

#[derive(Args)]
struct Ar1Args {
    #[arg(long, value_delimiter = ',', default_value = "0.1,0.3,0.5,0.7,0.9")]
    phis: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "1,3,11")]
    ms: Vec<usize>,
    #[arg(long = "ns", default_value_t = 50)]
    n_s: usize,
    #[arg(long, default_value_t = 200)]
    reps: usize,
    /// Chain length.
    #[arg(long, default_value_t = 2000)]
    n: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 0.15)]
    rbmc_tol: f64,
    #[arg(long, default_value_t = 0.10)]
    mc_tol: f64,
    /// Plot-ready CSV.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn write_json(path: &Path, v: &impl serde::Serialize) -> Result<()> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    std::fs::write(path, s)?;
    Ok(())
}

fn gen(model: GenModel) -> Result<()> {
    let (m, out) = match model {
        GenModel::Ar1 { n, phi, out } => (GeneratedModel::ar1(n, phi)?, out),
        GenModel::Rw1 { dims, lambda_seed, lambda_lo, lambda_hi, out } => {
            (GeneratedModel::rw1(&dims, lambda_seed, (lambda_lo, lambda_hi))?, out)
        }
        GenModel::Kvar { dims, k, rho, lambda_seed, lambda_lo, lambda_hi, out } => {
            (GeneratedModel::kvar(&dims, k, rho, lambda_seed, (lambda_lo, lambda_hi))?, out)
        }
    };
    m.write(&out)?;
    println!("wrote n = {} model to {}", m.q.n(), out.display());
    Ok(())
}

fn oracle(a: OracleArgs) -> Result<()> {
    let budget = match &a.budget {
        Some(b) => parse_bytes(b)?,
        None => memory_budget_from_env()?,
    };
    let model = a.model.load()?;
    let s = a.model.index(&model)?;
    let (cov, stats) = exact_oracle(&model.q, &s, budget)?;
    cov.write_csv_file(&a.out)?;
    write_json(&sidecar_path(&a.out), &stats)?;
    println!("{} entries, fill {}, peak {} bytes", cov.len(), stats.fill_count, stats.peak_bytes);
    Ok(())
}

fn estimate(a: EstimateArgs) -> Result<()> {
    let kind: EstimatorKind = a.estimator.parse()?;
    let mut p = EstimatorParams::new(kind, a.n_s, a.seed);
    p.sampler = a.sampler.parse::<SamplerKind>()?;
    p.blocks_per_dim = a.blocks;
    p.margin = a.margin;
    p.n_iter = a.n_iter;
    p.delta = a.delta;
    p.confidence = a.confidence;
    let model = a.model.load()?;
    let s = a.model.index(&model)?;
    let (cov, record) = run_estimator(&model, &s, &p)?;
    cov.write_csv_file(&a.out)?;
    write_json(&sidecar_path(&a.out), &record)?;
    println!(
        "{}: {} entries, sampling {:.3}s, estimation {:.3}s, peak {} bytes",
        record.estimator,
        cov.len(),
        record.sample_seconds,
        record.estimate_seconds,
        record.peak_bytes
    );
    Ok(())
}

fn compare(a: CompareArgs) -> Result<()> {
    let oracle = SelectedCov::read_csv_file(&a.oracle, None)?;
    let mut rows = Vec::with_capacity(a.estimates.len());
    for path in &a.estimates {
        let est = SelectedCov::read_csv_file(path, Some(oracle.index().n()))?;
        let sc = score(&oracle, &est).map_err(|e| match e {
            Error::InvalidParameter(m) => Error::InvalidParameter(format!("{}: {m}", path.display())),
            other => other,
        })?;
        let side = sidecar_path(path);
        // Oracle sidecars carry size statistics only and are skipped.
        let record: Option<RunRecord> = if side.exists() {
            let v: serde_json::Value = serde_json::from_reader(std::io::BufReader::new(std::fs::File::open(&side)?))?;
            if v.get("estimator").is_some() { Some(serde_json::from_value(v)?) } else { None }
        } else {
            None
        };
        rows.push(ResultRow::new(&est, &sc, record.as_ref()));
    }
    let summary = summarize(&rows);
    if let Some(p) = &a.rows {
        let mut sorted = rows.clone();
        sorted.sort_by(|x, y| {
            (&x.estimator, x.n_s, x.n_b, x.seed)
                .cmp(&(&y.estimator, y.n_s, y.n_b, y.seed))
                .then(x.rmse.total_cmp(&y.rmse))
        });
        let mut wr = csv::Writer::from_path(p)?;
        for r in &sorted {
            wr.serialize(r)?;
        }
        wr.flush()?;
    }
    if let Some(p) = &a.out {
        write_summary_csv(&summary, std::io::BufWriter::new(std::fs::File::create(p)?))?;
    }
    print!("{}", format_summary_table(&summary));
    Ok(())
}

fn ar1(a: Ar1Args) -> Result<()> {
    let cfg = Ar1VerifyConfig {
        phis: a.phis,
        ms: a.ms,
        n_s: a.n_s,
        reps: a.reps,
        n: a.n,
        seed: a.seed,
        rbmc_tol: a.rbmc_tol,
        mc_tol: a.mc_tol,
    };
    let report = ar1_verify(&cfg)?;
    if let Some(p) = &a.out {
        report.write_csv(std::io::BufWriter::new(std::fs::File::create(p)?))?;
    }
    print!("{}", report.format_table());
    println!("overall: {}", if report.all_pass() { "PASS" } else { "FAIL" });
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Gen { model } => gen(model),
        Command::Oracle(a) => oracle(a),
        Command::Estimate(a) => estimate(a),
        Command::Compare(a) => compare(a),
        Command::Ar1Verify(a) => ar1(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if let Error::BudgetExceeded { .. } = e {
                eprintln!("raise the budget with --budget or {MEMORY_BUDGET_ENV}");
            }
            ExitCode::from(if e.is_numeric() { 3 } else { 2 })
        }
    }
}
