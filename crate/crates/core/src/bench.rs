//! Experiment plumbing behind the `covsel` command-line harness: model
//! manifests, the budgeted exact oracle, estimator runs with timing,
//! scoring against an oracle, aggregation over replications and the AR(1)
//! verification sweep.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::chol::{cholesky, factorize};
use crate::error::{Error, Result};
use crate::estimators::{
    ar1_analytic_rmse, hutchinson_diagonal, mc_analytic_rmse, mc_estimate, simple_rbmc, BlockPartition,
    BlockRbmcPlan, DEFAULT_CONFIDENCE,
};
use crate::interface::{InterfaceDecomposition, InterfacePlan};
use crate::lattice::Lattice;
use crate::models::{
    ar1_precision, equicorrelated_coupling, kvariate_lattice_precision, rw1_posterior_precision, uniform_lambda,
    ModelKind,
};
use crate::mtx;
use crate::ordering::{amd_order, symbolic_cholesky};
use crate::pcg::PcgConfig;
use crate::sampler::{rademacher_probes, sample_gmrf_chol, sample_gmrf_pcg, SampleMatrix};
use crate::selcov::SelectedCov;
use crate::sparse::{IndexSet, SparseRectMatrix, SparseSymMatrix};
use crate::takahashi::{exact_memory_estimate, takahashi_recursion};

/// Environment variable overriding the oracle memory budget, in bytes.
pub const MEMORY_BUDGET_ENV: &str = "COVSEL_MEMORY_BUDGET";
/// Default oracle memory budget: 4 GiB.
pub const DEFAULT_MEMORY_BUDGET: usize = 4 << 30;

/// Budget from [`MEMORY_BUDGET_ENV`], falling back to the default. Accepts a
/// plain byte count or a `K`, `M` or `G` suffix (powers of 1024).
pub fn memory_budget_from_env() -> Result<usize> {
    match std::env::var(MEMORY_BUDGET_ENV) {
        Ok(v) => parse_bytes(&v),
        Err(_) => Ok(DEFAULT_MEMORY_BUDGET),
    }
}

pub fn parse_bytes(s: &str) -> Result<usize> {
    let t = s.trim();
    let (num, mult) = match t.chars().last().map(|c| c.to_ascii_uppercase()) {
        Some('K') => (&t[..t.len() - 1], 1usize << 10),
        Some('M') => (&t[..t.len() - 1], 1 << 20),
        Some('G') => (&t[..t.len() - 1], 1 << 30),
        _ => (t, 1),
    };
    let v: f64 = num.trim().parse().map_err(|_| Error::Parse(format!("bad byte count '{s}'")))?;
    if !(v >= 0.0 && v.is_finite()) {
        return Err(Error::Parse(format!("bad byte count '{s}'")));
    }
    Ok((v * mult as f64) as usize)
}

/// Description of a generated model and the files holding it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelManifest {
    pub kind: ModelKind,
    pub n: usize,
    /// Lattice extents; a chain of length `n` for AR(1).
    pub dims: Vec<usize>,
    pub k: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_range: Option<(f64, f64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    /// File names relative to the manifest directory.
    pub q_file: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g_file: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h_file: Option<String>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

impl ModelManifest {
    pub fn lattice(&self) -> Result<Lattice> {
        Lattice::new(&self.dims, self.k)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_reader(std::io::BufReader::new(std::fs::File::open(path)?))?)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        std::fs::write(path, s)?;
        Ok(())
    }
}

/// A model held in memory together with its manifest.
#[derive(Debug, Clone)]
pub struct GeneratedModel {
    /// Absent for a bare matrix, which then has no lattice geometry.
    pub manifest: Option<ModelManifest>,
    pub q: SparseSymMatrix,
    /// `Q = GᵀG + HᵀH`, when the model defines such a split.
    pub gh: Option<(SparseRectMatrix, SparseRectMatrix)>,
}

impl GeneratedModel {
    pub fn ar1(n: usize, phi: f64) -> Result<Self> {
        let q = ar1_precision(n, phi)?;
        let manifest = ModelManifest {
            kind: ModelKind::Ar1,
            n,
            dims: vec![n],
            k: 1,
            phi: Some(phi),
            lambda_seed: None,
            lambda_range: None,
            rho: None,
            q_file: "Q.mtx".into(),
            g_file: None,
            h_file: None,
        };
        Ok(Self { manifest: Some(manifest), q, gh: None })
    }

    pub fn rw1(dims: &[usize], lambda_seed: u64, lambda_range: (f64, f64)) -> Result<Self> {
        check_range(lambda_range)?;
        let n: usize = dims.iter().product();
        let lambda = uniform_lambda(n, lambda_range.0, lambda_range.1, lambda_seed);
        let (q, g, h) = rw1_posterior_precision(dims, &lambda)?;
        let manifest = ModelManifest {
            kind: ModelKind::Rw1Posterior,
            n,
            dims: dims.to_vec(),
            k: 1,
            phi: None,
            lambda_seed: Some(lambda_seed),
            lambda_range: Some(lambda_range),
            rho: None,
            q_file: "Q.mtx".into(),
            g_file: Some("G.mtx".into()),
            h_file: Some("H.mtx".into()),
        };
        Ok(Self { manifest: Some(manifest), q, gh: Some((g, h)) })
    }

    /// K-variate lattice with equicorrelated coupling `rho`.
    pub fn kvar(dims: &[usize], k: usize, rho: f64, lambda_seed: u64, lambda_range: (f64, f64)) -> Result<Self> {
        check_range(lambda_range)?;
        if k == 0 {
            return Err(Error::InvalidParameter("k must be at least 1".into()));
        }
        let voxels: usize = dims.iter().product();
        let lambda = uniform_lambda(voxels, lambda_range.0, lambda_range.1, lambda_seed);
        let q = kvariate_lattice_precision(dims, k, &equicorrelated_coupling(k, rho), &lambda)?;
        let manifest = ModelManifest {
            kind: ModelKind::Kvariate,
            n: voxels * k,
            dims: dims.to_vec(),
            k,
            phi: None,
            lambda_seed: Some(lambda_seed),
            lambda_range: Some(lambda_range),
            rho: Some(rho),
            q_file: "Q.mtx".into(),
            g_file: None,
            h_file: None,
        };
        Ok(Self { manifest: Some(manifest), q, gh: None })
    }

    /// A bare matrix, optionally with its `G`, `H` split.
    pub fn from_matrix(q: SparseSymMatrix, gh: Option<(SparseRectMatrix, SparseRectMatrix)>) -> Self {
        Self { manifest: None, q, gh }
    }

    pub fn lattice(&self) -> Result<Lattice> {
        self.manifest_or_err()?.lattice()
    }

    fn manifest_or_err(&self) -> Result<&ModelManifest> {
        self.manifest
            .as_ref()
            .ok_or_else(|| Error::InvalidParameter("this operation needs a model directory with a manifest".into()))
    }

    /// Writes the matrices and `manifest.json` into `dir`, creating it.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        let m = self.manifest_or_err()?;
        std::fs::create_dir_all(dir)?;
        mtx::write_sym(&self.q, dir.join(&m.q_file))?;
        if let (Some((g, h)), Some(gf), Some(hf)) = (&self.gh, &m.g_file, &m.h_file) {
            mtx::write_rect(g, dir.join(gf))?;
            mtx::write_rect(h, dir.join(hf))?;
        }
        m.write(dir.join(MANIFEST_FILE))
    }

    /// Loads a model from a directory written by [`write`](Self::write).
    pub fn read(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let manifest = ModelManifest::read(dir.join(MANIFEST_FILE))?;
        let q = mtx::read_sym(dir.join(&manifest.q_file))?;
        if q.n() != manifest.n {
            return Err(Error::DimensionMismatch { expected: manifest.n, got: q.n() });
        }
        let gh = match (&manifest.g_file, &manifest.h_file) {
            (Some(g), Some(h)) => Some((mtx::read_rect(dir.join(g))?, mtx::read_rect(dir.join(h))?)),
            _ => None,
        };
        Ok(Self { manifest: Some(manifest), q, gh })
    }
}

fn check_range((lo, hi): (f64, f64)) -> Result<()> {
    if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
        return Err(Error::InvalidParameter(format!("lambda range ({lo}, {hi}) must satisfy 0 < lo <= hi")));
    }
    Ok(())
}

/// Which covariance entries to compute.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum IndexSpec {
    /// All marginal variances.
    Diagonal,
    /// The lower-triangle pattern of `Q`, diagonal included.
    Pattern,
    /// Diagonal plus same-variable pairs of adjacent voxels.
    Neighbors,
    /// Pairs listed in a CSV file with `i` and `j` columns.
    Pairs(PathBuf),
}

impl FromStr for IndexSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "diag" | "diagonal" => Ok(Self::Diagonal),
            "pattern" => Ok(Self::Pattern),
            "neighbors" => Ok(Self::Neighbors),
            _ => match s.strip_prefix("pairs:") {
                Some(p) if !p.is_empty() => Ok(Self::Pairs(p.into())),
                _ => Err(Error::Parse(format!("unknown index set '{s}' (diag, pattern, neighbors, pairs:FILE)"))),
            },
        }
    }
}

#[derive(Deserialize)]
struct PairRow {
    i: usize,
    j: usize,
}

impl IndexSpec {
    /// Resolves the set on `q`. `lattice` is needed for `Neighbors`.
    pub fn resolve(&self, q: &SparseSymMatrix, lattice: Option<&Lattice>) -> Result<IndexSet> {
        let n = q.n();
        match self {
            Self::Diagonal => Ok(IndexSet::diagonal(n)),
            Self::Pattern => Ok(IndexSet::pattern_of(q)),
            Self::Neighbors => {
                let lat = lattice
                    .ok_or_else(|| Error::InvalidParameter("the neighbors index set needs a lattice model".into()))?;
                if lat.n_vars() != n {
                    return Err(Error::DimensionMismatch { expected: n, got: lat.n_vars() });
                }
                let k = lat.k();
                let mut pairs: Vec<(usize, usize)> = (0..n).map(|i| (i, i)).collect();
                for (a, b) in lat.edges() {
                    pairs.extend((0..k).map(|v| (b * k + v, a * k + v)));
                }
                IndexSet::explicit(n, &pairs)
            }
            Self::Pairs(path) => {
                let mut rd = csv::Reader::from_path(path)?;
                let pairs: Vec<(usize, usize)> = rd
                    .deserialize::<PairRow>()
                    .map(|r| r.map(|r| (r.i, r.j)))
                    .collect::<std::result::Result<_, _>>()?;
                IndexSet::explicit(n, &pairs)
            }
        }
    }
}

/// Size bookkeeping of an exact oracle run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct OracleStats {
    pub n: usize,
    pub fill_count: usize,
    /// Pre-flight estimate compared against the budget.
    pub estimated_bytes: usize,
    /// Factor values plus the recursion's peak working set.
    pub peak_bytes: usize,
}

/// Exact `Σ_S` by Takahashi recursion. The symbolic analysis, augmented
/// with the pairs of `s`, runs first; if the estimated memory exceeds
/// `budget` the numeric work is skipped and `BudgetExceeded` returned.
pub fn exact_oracle(q: &SparseSymMatrix, s: &IndexSet, budget: usize) -> Result<(SelectedCov, OracleStats)> {
    let extra: Vec<(usize, usize)> = s.pairs().iter().copied().filter(|&(i, j)| q.get(i, j).is_none()).collect();
    let augmented = if extra.is_empty() { None } else { Some(q.with_extra_pattern(&extra)?) };
    let pattern = augmented.as_ref().unwrap_or(q);
    let symbolic = symbolic_cholesky(pattern, &amd_order(pattern))?;
    let fill_count = symbolic.fill_count();
    let estimated_bytes = exact_memory_estimate(fill_count);
    if estimated_bytes > budget {
        return Err(Error::BudgetExceeded { estimated: estimated_bytes, budget });
    }
    let l = factorize(q, &symbolic)?;
    let rec = takahashi_recursion(&l, l.n(), s)?;
    let value = std::mem::size_of::<f64>();
    let peak_bytes = fill_count * value + rec.peak_entries * value;
    let mut cov = SelectedCov::new(s.clone(), rec.values, "takahashi");
    for k in 0..cov.len() {
        cov.set_uncertainty(k, crate::selcov::EntryUncertainty { exact_part: cov.values()[k], est_variance: 0.0, ci: None });
    }
    Ok((cov, OracleStats { n: q.n(), fill_count, estimated_bytes, peak_bytes }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorKind {
    Mc,
    Hutchinson,
    SimpleRbmc,
    BlockRbmc,
    Interface,
}

impl EstimatorKind {
    pub fn id(self) -> &'static str {
        match self {
            Self::Mc => "mc",
            Self::Hutchinson => "hutchinson",
            Self::SimpleRbmc => "simple-rbmc",
            Self::BlockRbmc => "block-rbmc",
            Self::Interface => "interface",
        }
    }
}

impl FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "mc" => Self::Mc,
            "hutchinson" => Self::Hutchinson,
            "simple-rbmc" => Self::SimpleRbmc,
            "block-rbmc" => Self::BlockRbmc,
            "interface" => Self::Interface,
            _ => {
                return Err(Error::InvalidParameter(format!(
                    "unknown estimator '{s}' (mc, hutchinson, simple-rbmc, block-rbmc, interface)"
                )))
            }
        })
    }
}

/// How GMRF samples are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplerKind {
    /// Cholesky factor of `Q`: exact samples.
    Chol,
    /// Perturbation sampler with PCG solves, needs `Q = GᵀG + HᵀH`.
    Pcg,
}

impl FromStr for SamplerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "chol" => Ok(Self::Chol),
            "pcg" => Ok(Self::Pcg),
            _ => Err(Error::InvalidParameter(format!("unknown sampler '{s}' (chol, pcg)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorParams {
    pub estimator: EstimatorKind,
    pub n_s: usize,
    pub seed: u64,
    pub sampler: SamplerKind,
    /// Block grid for block RBMC and the interface method.
    pub blocks_per_dim: Option<Vec<usize>>,
    /// Enclosure margin for block RBMC, in voxels.
    pub margin: usize,
    pub n_iter: usize,
    /// PCG relative residual tolerance for the PCG sampler and Hutchinson.
    pub delta: f64,
    pub confidence: f64,
}

impl EstimatorParams {
    pub fn new(estimator: EstimatorKind, n_s: usize, seed: u64) -> Self {
        Self {
            estimator,
            n_s,
            seed,
            sampler: SamplerKind::Chol,
            blocks_per_dim: None,
            margin: 4,
            n_iter: 1,
            delta: PcgConfig::default().delta,
            confidence: DEFAULT_CONFIDENCE,
        }
    }
}

/// Timing and size record written next to an estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub estimator: String,
    pub n: usize,
    pub n_s: usize,
    /// Number of blocks, for the block methods.
    pub n_b: Option<usize>,
    pub seed: u64,
    pub params: EstimatorParams,
    /// Drawing samples or probes, factorization for the Cholesky sampler included.
    pub sample_seconds: f64,
    /// Everything after the samples exist.
    pub estimate_seconds: f64,
    /// Live factor and state storage of the estimator, samples excluded.
    pub peak_bytes: usize,
    pub sample_bytes: usize,
}

fn draw_samples(model: &GeneratedModel, p: &EstimatorParams) -> Result<SampleMatrix> {
    match p.sampler {
        SamplerKind::Chol => sample_gmrf_chol(&cholesky(&model.q)?, p.n_s, p.seed),
        SamplerKind::Pcg => {
            let (g, h) = model
                .gh
                .as_ref()
                .ok_or_else(|| Error::InvalidParameter("the PCG sampler needs a model with G and H".into()))?;
            sample_gmrf_pcg(g, h, &model.q, p.n_s, p.seed, &PcgConfig::with_delta(p.delta), false)
        }
    }
}

fn blocks_for(model: &GeneratedModel, p: &EstimatorParams) -> Result<Vec<usize>> {
    let b = p
        .blocks_per_dim
        .clone()
        .ok_or_else(|| Error::InvalidParameter(format!("{} needs blocks per dimension", p.estimator.id())))?;
    let dims = &model.manifest_or_err()?.dims;
    if b.len() != dims.len() {
        return Err(Error::DimensionMismatch { expected: dims.len(), got: b.len() });
    }
    Ok(b)
}

/// Runs one estimator on `model` for the index set `s`. Identical inputs
/// give identical estimates; only the timing fields of the record vary.
pub fn run_estimator(model: &GeneratedModel, s: &IndexSet, p: &EstimatorParams) -> Result<(SelectedCov, RunRecord)> {
    if p.n_s == 0 {
        return Err(Error::InvalidParameter("n_s must be at least 1".into()));
    }
    let q = &model.q;
    let n = q.n();
    let value = std::mem::size_of::<f64>();
    let t0 = Instant::now();
    let x = match p.estimator {
        EstimatorKind::Hutchinson => rademacher_probes(n, p.n_s, p.seed)?,
        _ => draw_samples(model, p)?,
    };
    let sample_seconds = t0.elapsed().as_secs_f64();
    let sample_bytes = x.data().len() * value;
    let diag_only = || {
        if s.is_diagonal_only() && s.len() == n {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("{} estimates the full diagonal only", p.estimator.id())))
        }
    };
    let t1 = Instant::now();
    let (cov, n_b, peak_bytes) = match p.estimator {
        EstimatorKind::Mc => (mc_estimate(&x, s)?, None, s.len() * value),
        EstimatorKind::Hutchinson => {
            diag_only()?;
            (hutchinson_diagonal(q, &x, &PcgConfig::with_delta(p.delta))?, None, 3 * n * value)
        }
        EstimatorKind::SimpleRbmc => {
            diag_only()?;
            (simple_rbmc(q, &x, p.confidence)?, None, 2 * n * value)
        }
        EstimatorKind::BlockRbmc => {
            let lattice = model.lattice()?;
            let part = BlockPartition::regular_tiling(&lattice, &blocks_for(model, p)?, p.margin)?;
            let plan = BlockRbmcPlan::new(q, &part, s, p.confidence)?;
            let (mut covs, stats) = plan.run_batch(&[&x])?;
            (covs.pop().expect("one replication"), Some(part.len()), stats.peak_factor_bytes)
        }
        EstimatorKind::Interface => {
            let blocks = blocks_for(model, p)?;
            let dec = InterfaceDecomposition::new(&model.lattice()?, &blocks)?;
            let run = InterfacePlan::new(q, &dec, s)?.run(&x, p.n_iter)?;
            (run.estimate, Some(dec.len()), run.peak_bytes)
        }
    };
    let estimate_seconds = t1.elapsed().as_secs_f64();
    let record = RunRecord {
        estimator: p.estimator.id().into(),
        n,
        n_s: p.n_s,
        n_b,
        seed: p.seed,
        params: p.clone(),
        sample_seconds,
        estimate_seconds,
        peak_bytes,
        sample_bytes,
    };
    Ok((cov, record))
}

/// Sidecar path of an estimate CSV: `est.csv` → `est.csv.json`.
pub fn sidecar_path(csv: impl AsRef<Path>) -> PathBuf {
    let mut s = csv.as_ref().as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// Errors of one estimate against the oracle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Scores {
    /// `max_i |r_i|`, `r_i = (σ̂_i − σ_i) / σ_i`.
    pub max_rel_error: f64,
    /// `sqrt(mean r_i²)`.
    pub rmse: f64,
    /// Share of entries whose interval misses the oracle value; `None` when
    /// the estimate carries no intervals.
    pub noncoverage: Option<f64>,
    pub entries: usize,
}

/// Scores on the diagonal entries when the index set has any, otherwise on
/// all entries. The two index sets must be identical.
pub fn score(oracle: &SelectedCov, est: &SelectedCov) -> Result<Scores> {
    if oracle.index().pairs() != est.index().pairs() {
        return Err(Error::InvalidParameter(format!(
            "index sets differ: oracle has {} entries, estimate has {}",
            oracle.len(),
            est.len()
        )));
    }
    let pairs = oracle.index().pairs();
    let has_diag = pairs.iter().any(|&(i, j)| i == j);
    let used: Vec<usize> = (0..pairs.len()).filter(|&k| !has_diag || pairs[k].0 == pairs[k].1).collect();
    let mut max: f64 = 0.0;
    let mut ss = 0.0;
    let mut with_ci = 0usize;
    let mut missed = 0usize;
    for &k in &used {
        let truth = oracle.values()[k];
        if truth == 0.0 {
            return Err(Error::InvalidParameter(format!("oracle entry {:?} is zero; relative error undefined", pairs[k])));
        }
        let r = (est.values()[k] - truth) / truth;
        max = max.max(r.abs());
        ss += r * r;
        if let Some(ci) = est.uncertainty()[k].and_then(|u| u.ci) {
            with_ci += 1;
            // A few ulps of slack so degenerate zero-width intervals around an
            // exact value are not counted as misses through rounding alone.
            let slack = 4.0 * f64::EPSILON * truth.abs();
            if truth < ci.0 - slack || truth > ci.1 + slack {
                missed += 1;
            }
        }
    }
    let m = used.len().max(1) as f64;
    Ok(Scores {
        max_rel_error: max,
        rmse: (ss / m).sqrt(),
        noncoverage: (with_ci > 0).then(|| missed as f64 / with_ci as f64),
        entries: used.len(),
    })
}

/// One replication of one estimator, scored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub estimator: String,
    pub n_s: Option<usize>,
    pub n_b: Option<usize>,
    pub wall_seconds: Option<f64>,
    pub sample_seconds: Option<f64>,
    pub peak_bytes: Option<usize>,
    pub max_rel_error: f64,
    pub rmse: f64,
    pub noncoverage: Option<f64>,
    pub seed: Option<u64>,
}

impl ResultRow {
    pub fn new(est: &SelectedCov, scores: &Scores, record: Option<&RunRecord>) -> Self {
        Self {
            estimator: record.map(|r| r.estimator.clone()).unwrap_or_else(|| est.method().to_string()),
            n_s: est.n_s().or(record.map(|r| r.n_s)),
            n_b: record.and_then(|r| r.n_b),
            wall_seconds: record.map(|r| r.estimate_seconds),
            sample_seconds: record.map(|r| r.sample_seconds),
            peak_bytes: record.map(|r| r.peak_bytes),
            max_rel_error: scores.max_rel_error,
            rmse: scores.rmse,
            noncoverage: scores.noncoverage,
            seed: record.map(|r| r.seed),
        }
    }
}

/// Mean and sample standard deviation; the deviation is 0 for one value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanSd {
    pub mean: f64,
    pub sd: f64,
}

impl MeanSd {
    pub fn of(v: &[f64]) -> Option<Self> {
        if v.is_empty() {
            return None;
        }
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let sd = if v.len() > 1 { (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt() } else { 0.0 };
        Some(Self { mean, sd })
    }
}

/// Aggregate of all replications sharing estimator, `n_s` and `N_b`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub estimator: String,
    pub n_s: Option<usize>,
    pub n_b: Option<usize>,
    pub replications: usize,
    pub wall_seconds: Option<MeanSd>,
    pub sample_seconds: Option<MeanSd>,
    pub max_rel_error: MeanSd,
    pub rmse: MeanSd,
    pub noncoverage: Option<MeanSd>,
    pub peak_bytes: Option<usize>,
}

/// Groups rows and sorts the groups by mean RMSE, best first. The result
/// does not depend on the order of `rows`.
pub fn summarize(rows: &[ResultRow]) -> Vec<SummaryRow> {
    let mut groups: BTreeMap<(String, Option<usize>, Option<usize>), Vec<&ResultRow>> = BTreeMap::new();
    for r in rows {
        groups.entry((r.estimator.clone(), r.n_s, r.n_b)).or_default().push(r);
    }
    let mut out: Vec<SummaryRow> = groups
        .into_iter()
        .map(|((estimator, n_s, n_b), mut g)| {
            g.sort_by(|a, b| {
                a.seed.cmp(&b.seed).then(a.rmse.total_cmp(&b.rmse)).then(a.max_rel_error.total_cmp(&b.max_rel_error))
            });
            let col = |f: &dyn Fn(&ResultRow) -> Option<f64>| -> Option<MeanSd> {
                let v: Option<Vec<f64>> = g.iter().map(|r| f(r)).collect();
                v.and_then(|v| MeanSd::of(&v))
            };
            SummaryRow {
                replications: g.len(),
                wall_seconds: col(&|r| r.wall_seconds),
                sample_seconds: col(&|r| r.sample_seconds),
                max_rel_error: col(&|r| Some(r.max_rel_error)).expect("non-empty group"),
                rmse: col(&|r| Some(r.rmse)).expect("non-empty group"),
                noncoverage: col(&|r| r.noncoverage),
                peak_bytes: g.iter().map(|r| r.peak_bytes).collect::<Option<Vec<_>>>().and_then(|v| v.into_iter().max()),
                estimator,
                n_s,
                n_b,
            }
        })
        .collect();
    out.sort_by(|a, b| a.rmse.mean.total_cmp(&b.rmse.mean).then_with(|| a.estimator.cmp(&b.estimator)));
    out
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

fn opt_ms(v: Option<MeanSd>) -> (String, String) {
    v.map(|m| (format!("{:e}", m.mean), format!("{:e}", m.sd))).unwrap_or_default()
}

/// Writes the summary as CSV, one row per group.
pub fn write_summary_csv<W: std::io::Write>(rows: &[SummaryRow], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record([
        "estimator",
        "n_s",
        "n_b",
        "replications",
        "wall_seconds_mean",
        "wall_seconds_sd",
        "sample_seconds_mean",
        "sample_seconds_sd",
        "max_rel_error_mean",
        "max_rel_error_sd",
        "rmse_mean",
        "rmse_sd",
        "noncoverage_mean",
        "noncoverage_sd",
        "peak_bytes",
    ])?;
    for r in rows {
        let (wm, ws) = opt_ms(r.wall_seconds);
        let (sm, ss) = opt_ms(r.sample_seconds);
        let (cm, cs) = opt_ms(r.noncoverage);
        wr.write_record([
            r.estimator.clone(),
            opt(r.n_s),
            opt(r.n_b),
            r.replications.to_string(),
            wm,
            ws,
            sm,
            ss,
            format!("{:e}", r.max_rel_error.mean),
            format!("{:e}", r.max_rel_error.sd),
            format!("{:e}", r.rmse.mean),
            format!("{:e}", r.rmse.sd),
            cm,
            cs,
            opt(r.peak_bytes),
        ])?;
    }
    wr.flush()?;
    Ok(())
}

/// Fixed-width human-readable table of the summary.
pub fn format_summary_table(rows: &[SummaryRow]) -> String {
    let pm = |m: Option<MeanSd>, scale: f64, prec: usize| -> String {
        m.map(|m| format!("{:.p$} ± {:.p$}", m.mean * scale, m.sd * scale, p = prec)).unwrap_or_else(|| "-".into())
    };
    let mut s = format!(
        "{:<12} {:>5} {:>5} {:>4} {:>20} {:>22} {:>22} {:>16} {:>12}\n",
        "estimator", "n_s", "N_b", "R", "time [s]", "max rel err", "rel RMSE", "noncov [%]", "peak bytes"
    );
    for r in rows {
        s.push_str(&format!(
            "{:<12} {:>5} {:>5} {:>4} {:>20} {:>22} {:>22} {:>16} {:>12}\n",
            r.estimator,
            opt(r.n_s),
            opt(r.n_b),
            r.replications,
            pm(r.wall_seconds, 1.0, 4),
            pm(Some(r.max_rel_error), 1.0, 6),
            pm(Some(r.rmse), 1.0, 6),
            pm(r.noncoverage, 100.0, 2),
            opt(r.peak_bytes),
        ));
    }
    s
}

/// Grid and tolerances of the AR(1) verification sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Ar1VerifyConfig {
    pub phis: Vec<f64>,
    /// Odd window sizes.
    pub ms: Vec<usize>,
    pub n_s: usize,
    pub reps: usize,
    /// Chain length.
    pub n: usize,
    pub seed: u64,
    /// Relative tolerance on the RBMC cells.
    pub rbmc_tol: f64,
    /// Relative tolerance on the MC rows.
    pub mc_tol: f64,
}

impl Default for Ar1VerifyConfig {
    fn default() -> Self {
        Self {
            phis: vec![0.1, 0.3, 0.5, 0.7, 0.9],
            ms: vec![1, 3, 11],
            n_s: 50,
            reps: 200,
            n: 2000,
            seed: 1,
            rbmc_tol: 0.15,
            mc_tol: 0.10,
        }
    }
}

/// One cell: RBMC with window `m`, or MC when `m` is `None`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Ar1Row {
    pub phi: f64,
    pub m: Option<usize>,
    pub analytic: f64,
    pub empirical: f64,
    /// 95% interval of the empirical RMSE.
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Ar1Report {
    pub config: Ar1VerifyConfig,
    pub rows: Vec<Ar1Row>,
    /// MC RMSE agrees across `φ` within 4 standard errors.
    pub mc_constant: bool,
    /// Per `φ`: empirical RBMC RMSE strictly decreases as `m` grows, or is
    /// exactly zero throughout.
    pub monotone: Vec<(f64, bool)>,
}

impl Ar1Report {
    pub fn all_pass(&self) -> bool {
        self.rows.iter().all(|r| r.pass) && self.mc_constant && self.monotone.iter().all(|m| m.1)
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["phi", "estimator", "m", "analytic", "empirical", "ci_lo", "ci_hi", "pass"])?;
        for r in &self.rows {
            wr.write_record([
                r.phi.to_string(),
                if r.m.is_some() { "rbmc".into() } else { "mc".to_string() },
                opt(r.m),
                format!("{:e}", r.analytic),
                format!("{:e}", r.empirical),
                format!("{:e}", r.ci_lo),
                format!("{:e}", r.ci_hi),
                r.pass.to_string(),
            ])?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn format_table(&self) -> String {
        let mut s = format!("{:>6} {:>6} {:>12} {:>12} {:>25} {:>5}\n", "phi", "M", "analytic", "empirical", "95% CI", "ok");
        for r in &self.rows {
            s.push_str(&format!(
                "{:>6} {:>6} {:>12.6} {:>12.6} {:>25} {:>5}\n",
                r.phi,
                r.m.map(|m| m.to_string()).unwrap_or_else(|| "MC".into()),
                r.analytic,
                r.empirical,
                format!("[{:.6}, {:.6}]", r.ci_lo, r.ci_hi),
                if r.pass { "PASS" } else { "FAIL" }
            ));
        }
        s.push_str(&format!("MC constant across phi: {}\n", if self.mc_constant { "PASS" } else { "FAIL" }));
        for (phi, ok) in &self.monotone {
            s.push_str(&format!("phi {phi}: RMSE decreasing in M: {}\n", if *ok { "PASS" } else { "FAIL" }));
        }
        s
    }
}

/// Empirical RMSE with a delta-method 95% interval from per-replication
/// mean squared errors.
fn rmse_with_ci(per_rep_mse: &[f64]) -> (f64, f64, f64) {
    let ms = MeanSd::of(per_rep_mse).expect("at least one replication");
    let rmse = ms.mean.sqrt();
    if rmse == 0.0 {
        return (0.0, 0.0, 0.0);
    }
    let se = ms.sd / (per_rep_mse.len() as f64).sqrt() / (2.0 * rmse);
    (rmse, (rmse - 1.96 * se).max(0.0), rmse + 1.96 * se)
}

/// Analytic against empirical relative RMSE of windowed RBMC and MC on the
/// interior of a stationary AR(1) chain, where every marginal variance is
/// `1/(1−φ²)`. Nodes within half the widest window of either end are
/// excluded so every window is complete.
pub fn ar1_verify(cfg: &Ar1VerifyConfig) -> Result<Ar1Report> {
    if cfg.phis.iter().any(|&p| !(0.0..1.0).contains(&p)) {
        return Err(Error::InvalidParameter("every phi must lie in [0, 1)".into()));
    }
    if cfg.ms.iter().any(|&m| m % 2 == 0) {
        return Err(Error::InvalidParameter("window sizes must be odd".into()));
    }
    if cfg.n_s == 0 || cfg.reps == 0 {
        return Err(Error::InvalidParameter("n_s and reps must be at least 1".into()));
    }
    let halo = cfg.ms.iter().max().copied().unwrap_or(1) / 2;
    if cfg.n <= 2 * halo + 1 {
        return Err(Error::InvalidParameter(format!("chain length {} too short for the widest window", cfg.n)));
    }
    let interior = halo..cfg.n - halo;
    let count = interior.len() as f64;
    let s = IndexSet::diagonal(cfg.n);
    let chunk = 40usize;
    let mut rows = Vec::new();
    let mut monotone = Vec::new();
    let mut mc_stats = Vec::new();
    for (pi, &phi) in cfg.phis.iter().enumerate() {
        let q = ar1_precision(cfg.n, phi)?;
        let l = cholesky(&q)?;
        let sigma2 = 1.0 / (1.0 - phi * phi);
        let parts: Vec<BlockPartition> =
            cfg.ms.iter().map(|&m| BlockPartition::centered_windows(cfg.n, m)).collect::<Result<_>>()?;
        let plans: Vec<BlockRbmcPlan> =
            parts.iter().map(|p| BlockRbmcPlan::new(&q, p, &s, DEFAULT_CONFIDENCE)).collect::<Result<_>>()?;
        let rel_mse = |v: &[f64]| interior.clone().map(|i| ((v[i] - sigma2) / sigma2).powi(2)).sum::<f64>() / count;
        let mut rb: Vec<Vec<f64>> = vec![Vec::with_capacity(cfg.reps); cfg.ms.len()];
        let mut mc = Vec::with_capacity(cfg.reps);
        let mut r0 = 0;
        while r0 < cfg.reps {
            let r1 = (r0 + chunk).min(cfg.reps);
            let xs: Vec<SampleMatrix> = (r0..r1)
                .map(|r| sample_gmrf_chol(&l, cfg.n_s, cfg.seed.wrapping_add(((pi as u64) << 32) | r as u64)))
                .collect::<Result<_>>()?;
            let refs: Vec<&SampleMatrix> = xs.iter().collect();
            for (k, plan) in plans.iter().enumerate() {
                for cov in plan.run_batch(&refs)?.0 {
                    rb[k].push(rel_mse(cov.values()));
                }
            }
            for x in &xs {
                mc.push(rel_mse(mc_estimate(x, &s)?.values()));
            }
            r0 = r1;
        }
        let mut last = f64::INFINITY;
        let mut mono = true;
        for (k, &m) in cfg.ms.iter().enumerate() {
            let analytic = ar1_analytic_rmse(phi, m, cfg.n_s)?;
            let (empirical, ci_lo, ci_hi) = rmse_with_ci(&rb[k]);
            let pass = if analytic == 0.0 {
                empirical < 1e-12
            } else {
                (empirical - analytic).abs() <= cfg.rbmc_tol * analytic
            };
            rows.push(Ar1Row { phi, m: Some(m), analytic, empirical, ci_lo, ci_hi, pass });
            mono &= empirical < last || (empirical == 0.0 && last <= 1e-12);
            last = empirical;
        }
        if !cfg.ms.windows(2).all(|w| w[0] < w[1]) {
            mono = true;
        }
        monotone.push((phi, mono));
        let analytic = mc_analytic_rmse(cfg.n_s)?;
        let (empirical, ci_lo, ci_hi) = rmse_with_ci(&mc);
        let se = (ci_hi - empirical) / 1.96;
        mc_stats.push((empirical, se));
        rows.push(Ar1Row {
            phi,
            m: None,
            analytic,
            empirical,
            ci_lo,
            ci_hi,
            pass: (empirical - analytic).abs() <= cfg.mc_tol * analytic,
        });
    }
    let pooled = mc_stats.iter().map(|v| v.0).sum::<f64>() / mc_stats.len().max(1) as f64;
    let mc_constant = mc_stats.iter().all(|&(v, se)| (v - pooled).abs() <= 4.0 * se.max(1e-12));
    Ok(Ar1Report { config: cfg.clone(), rows, mc_constant, monotone })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn byte_counts() {
        assert_eq!(parse_bytes("1M").unwrap(), 1 << 20);
        assert_eq!(parse_bytes("2048").unwrap(), 2048);
        assert_eq!(parse_bytes("1.5k").unwrap(), 1536);
        assert!(parse_bytes("lots").is_err());
    }

    #[test]
    fn index_spec_parsing() {
        assert_eq!("diag".parse::<IndexSpec>().unwrap(), IndexSpec::Diagonal);
        assert_eq!("pairs:a.csv".parse::<IndexSpec>().unwrap(), IndexSpec::Pairs("a.csv".into()));
        assert!("pairs:".parse::<IndexSpec>().is_err());
    }

    #[test]
    fn oracle_on_exchangeable_pair() {
        let q = SparseSymMatrix::from_triplets(2, &[(0, 0, 2.0), (1, 1, 2.0), (1, 0, -1.0)]).unwrap();
        let (c, st) = exact_oracle(&q, &IndexSet::diagonal(2), usize::MAX).unwrap();
        assert!((c.values()[0] - 2.0 / 3.0).abs() < 1e-15 && (c.values()[1] - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(st.fill_count, 3);
        assert!(matches!(exact_oracle(&q, &IndexSet::diagonal(2), 8), Err(Error::BudgetExceeded { .. })));
    }

    #[test]
    fn oracle_covers_pairs_outside_the_pattern() {
        let q = crate::models::ar1_precision(6, 0.5).unwrap();
        let s = IndexSet::explicit(6, &[(5, 0), (3, 3)]).unwrap();
        let (c, _) = exact_oracle(&q, &s, usize::MAX).unwrap();
        let d = q.to_dense().try_inverse().unwrap();
        assert!((c.get(5, 0).unwrap() - d[(5, 0)]).abs() < 1e-13);
    }

    #[test]
    fn perfect_estimate_scores_zero() {
        let q = crate::models::ar1_precision(10, 0.5).unwrap();
        let (o, _) = exact_oracle(&q, &IndexSet::diagonal(10), usize::MAX).unwrap();
        let s = score(&o, &o).unwrap();
        assert_eq!((s.max_rel_error, s.rmse), (0.0, 0.0));
        let other = SelectedCov::new(IndexSet::diagonal(9), vec![1.0; 9], "x");
        assert!(score(&o, &other).is_err());
    }

    #[test]
    fn single_replication_has_zero_sd() {
        let row = ResultRow {
            estimator: "mc".into(),
            n_s: Some(5),
            n_b: None,
            wall_seconds: Some(1.0),
            sample_seconds: None,
            peak_bytes: Some(8),
            max_rel_error: 0.5,
            rmse: 0.2,
            noncoverage: None,
            seed: Some(1),
        };
        let s = summarize(std::slice::from_ref(&row));
        assert_eq!(s[0].rmse, MeanSd { mean: 0.2, sd: 0.0 });
        assert!(s[0].sample_seconds.is_none() && s[0].noncoverage.is_none());
    }

    #[test]
    fn summary_is_order_insensitive_and_sorted() {
        let mk = |e: &str, seed, rmse| ResultRow {
            estimator: e.into(),
            n_s: Some(10),
            n_b: None,
            wall_seconds: None,
            sample_seconds: None,
            peak_bytes: None,
            max_rel_error: rmse * 3.0,
            rmse,
            noncoverage: None,
            seed: Some(seed),
        };
        let rows = vec![mk("mc", 1, 0.3), mk("block-rbmc", 1, 0.01), mk("mc", 2, 0.1), mk("block-rbmc", 2, 0.02)];
        let mut rev = rows.clone();
        rev.reverse();
        assert_eq!(summarize(&rows), summarize(&rev));
        assert_eq!(summarize(&rows)[0].estimator, "block-rbmc");
    }

    #[test]
    fn ar1_sweep_small() {
        let cfg = Ar1VerifyConfig { phis: vec![0.0, 0.5], ms: vec![1, 3], n_s: 20, reps: 10, n: 200, seed: 3, ..Default::default() };
        let rep = ar1_verify(&cfg).unwrap();
        assert_eq!(rep.rows.len(), 6);
        let zero: Vec<_> = rep.rows.iter().filter(|r| r.phi == 0.0 && r.m.is_some()).collect();
        assert!(zero.iter().all(|r| r.empirical < 1e-12 && r.pass));
        assert!(ar1_verify(&Ar1VerifyConfig { ms: vec![2], ..cfg }).is_err());
    }
}
