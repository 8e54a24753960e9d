//! The seven experiment modes.
//!
//! Each mode runs one or more batches of replicas (a "run"), pools their
//! regeneration blocks and turns them into estimates. Distinct runs of one
//! mode use disjoint replica index ranges under the configured seed, so they
//! are independent.

use std::fs;
use std::io;

use rayon::prelude::*;
use thiserror::Error;

use sepwalk_core::engine::{EngineError, ProbeTally};
use sepwalk_core::experiment::{run_replica_range, ReplicaResult, ReplicaSpec};
use sepwalk_core::model::{perturbed_rates, DerivedConstants, ModelParams};
use sepwalk_core::randomness::replica_seed;
use sepwalk_core::regeneration::AttemptLedger;
use sepwalk_core::stats::{
    cramer_rate, direct_variance, duration_tail, einstein_fit, estimate_clt_variance, estimate_density, estimate_speed,
    estimate_speed_direct, geometric_attempts, ks_normal, ks_two_sample, lag1_autocorrelation, ldp_curve, ldp_slope,
    linear_fit, log_survival, martingale_residual, skellam_abs_tail, speed_density_gap, BlockSample, CltVariance,
    DensityEstimate, EinsteinFit, EinsteinPoint, Estimate, GeometricFit, KsResult, LdpPoint, LdpSlope, StatsError,
    TailFit, DEFAULT_BLOCK_FLOOR,
};
use sepwalk_core::torus::{compare_on_torus, OracleReport};
use sepwalk_core::walker::CouplingCheck;
use sepwalk_core::{Site, Time};

use crate::config::{Config, Mode, ModelSpec};
use crate::output::{render_report, write_block_log, write_file, Curve};

#[derive(Debug, Error)]
pub enum RunError {
    #[error("simulation failed: {0}")]
    Engine(#[from] EngineError),
    #[error("estimation failed: {0}")]
    Stats(#[from] StatsError),
    #[error("cannot write artifacts: {0}")]
    Io(#[from] io::Error),
}

/// Levels of the attempt count's log-survival need this many blocks.
pub const SURVIVAL_MIN_COUNT: usize = 10;

/// One batch of replicas with a common specification.
#[derive(Debug, Clone)]
pub struct BlockRun {
    pub spec: ReplicaSpec,
    pub results: Vec<ReplicaResult>,
    /// Whether estimates are built from this run's blocks; only such runs
    /// are held to the censoring budget.
    pub estimates_blocks: bool,
}

impl BlockRun {
    pub fn new(spec: ReplicaSpec, seed: u64, start: u64, count: u64) -> Result<Self, EngineError> {
        let results = run_replica_range(&spec, seed, start, count)?;
        Ok(Self { spec, results, estimates_blocks: true })
    }

    /// A run used only for per-replica quantities at the horizon.
    pub fn sample_only(spec: ReplicaSpec, seed: u64, start: u64, count: u64) -> Result<Self, EngineError> {
        Ok(Self { estimates_blocks: false, ..Self::new(spec, seed, start, count)? })
    }

    /// Blocks starting after this time are not used for estimation.
    pub fn cutoff(&self) -> Time {
        let margin =
            DerivedConstants::new(&self.spec.params, self.spec.eps_confirm).expect("validated").completion_margin();
        self.spec.horizon - margin
    }

    pub fn sample(&self) -> BlockSample {
        BlockSample::from_blocks_before(self.results.iter().flat_map(|r| &r.blocks), self.results.len(), self.cutoff())
    }

    pub fn finals(&self) -> Vec<Site> {
        self.results.iter().map(|r| r.x_final).collect()
    }

    pub fn tallies(&self) -> Vec<ProbeTally> {
        self.results.iter().map(|r| r.probe).collect()
    }

    pub fn ledger(&self) -> AttemptLedger {
        let mut l = AttemptLedger::default();
        for r in &self.results {
            l.merge(&r.ledger);
        }
        l
    }

    pub fn couplings(&self) -> CouplingCheck {
        let mut c = CouplingCheck::default();
        for r in &self.results {
            c.merge(&r.couplings);
        }
        c
    }

    pub fn events(&self) -> u64 {
        self.results.iter().map(|r| r.counters.events).sum()
    }

    /// Fraction of replicas whose unfinished block started before the
    /// cutoff, i.e. replicas that lose a block the estimators would have used.
    /// A cutoff at or before time 0 leaves nothing usable and counts as 1.
    pub fn censored_fraction(&self) -> f64 {
        let cutoff = self.cutoff();
        if cutoff <= 0.0 {
            return 1.0;
        }
        let lost = self.results.iter().filter(|r| r.censored.is_some_and(|b| b.start_time < cutoff)).count();
        lost as f64 / self.results.len() as f64
    }

    pub fn speed(&self) -> Result<Estimate, StatsError> {
        estimate_speed(&self.sample(), DEFAULT_BLOCK_FLOOR)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpeedSummary {
    pub blocks: usize,
    pub speed: Estimate,
    pub speed_direct: Estimate,
    pub lower_bound: f64,
    pub ledger: AttemptLedger,
    pub couplings: CouplingCheck,
    pub events: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlocksSummary {
    pub speed: SpeedSummary,
    pub variance: CltVariance,
    pub variance_direct: Estimate,
    pub mean_duration: Estimate,
    pub attempts: GeometricFit,
    /// Success probability of a trial, from the first blocks: those follow
    /// the unconditioned law, so their attempt counts are exactly geometric.
    pub kappa_first: Estimate,
    pub tail: TailFit,
    pub acf_duration: f64,
    pub acf_displacement: f64,
    /// `4 / sqrt(n)`.
    pub acf_bound: f64,
    pub halves_duration: KsResult,
    pub halves_displacement: KsResult,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CltSummary {
    pub speed: Estimate,
    pub variance: CltVariance,
    pub variance_direct: Estimate,
    /// `(X_T - v T) / sqrt(σ² T)` per sample replica.
    pub normalized: Vec<f64>,
    pub ks: KsResult,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LdpBranch {
    /// Deviation as a fraction of the speed.
    pub fraction: f64,
    pub eps: f64,
    pub points: Vec<LdpPoint>,
    pub slope: Option<LdpSlope>,
    /// Exact tails when the rates do not depend on the environment.
    pub exact: Option<LdpReference>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LdpReference {
    pub log_p: Vec<f64>,
    /// Slope of the exact curve, fitted over the same cells with the same
    /// weights as the empirical one.
    pub slope: Option<f64>,
    /// `-min(I(v + ε), I(v - ε))`, the limiting slope.
    pub cramer_slope: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LdpSummary {
    pub speed: Estimate,
    pub branches: Vec<LdpBranch>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensitySummary {
    pub speed: Estimate,
    pub density: DensityEstimate,
    pub residual: Estimate,
    pub gap: Estimate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EinsteinSummary {
    pub points: Vec<EinsteinPoint>,
    pub fit: EinsteinFit,
    /// `α + β`.
    pub diffusivity: f64,
    pub probe_lambda: f64,
    pub density: DensityEstimate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleSummary {
    pub reports: Vec<OracleReport>,
}

impl OracleSummary {
    pub fn mismatches(&self) -> usize {
        self.reports.iter().filter(|r| !r.matches()).count()
    }
}

// built once per run; boxing would buy nothing
#[allow(clippy::large_enum_variant)]
#[derive(Debug, Clone, PartialEq)]
pub enum Summary {
    Speed(SpeedSummary),
    Blocks(BlocksSummary),
    Clt(CltSummary),
    Ldp(LdpSummary),
    Density(DensitySummary),
    Einstein(EinsteinSummary),
    Oracle(OracleSummary),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Censoring {
    /// Largest censored fraction over the runs.
    pub fraction: f64,
    pub budget: f64,
}

impl Censoring {
    pub fn exceeded(&self) -> bool {
        self.fraction > self.budget
    }
}

/// Everything a mode produced. `summary` is `None` when the censoring budget
/// was exceeded before estimation.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub mode: Mode,
    pub runs: Vec<BlockRun>,
    pub censoring: Censoring,
    pub summary: Option<Summary>,
}

impl Outcome {
    pub fn oracle_failed(&self) -> bool {
        matches!(&self.summary, Some(Summary::Oracle(o)) if o.mismatches() > 0)
    }
}

fn spec(cfg: &Config, params: ModelParams, horizon: Time) -> ReplicaSpec {
    let mut s = ReplicaSpec::new(params, horizon);
    s.eps_confirm = cfg.eps_confirm;
    s
}

/// Runs the configured mode.
pub fn run(cfg: &Config) -> Result<Outcome, RunError> {
    let r = cfg.replicas;
    let mut runs = Vec::new();
    let censoring = |runs: &[BlockRun]| Censoring {
        fraction: runs.iter().filter(|r| r.estimates_blocks).map(BlockRun::censored_fraction).fold(0.0, f64::max),
        budget: cfg.censoring_budget,
    };
    macro_rules! censor_gate {
        () => {
            let c = censoring(&runs);
            if c.exceeded() {
                return Ok(Outcome { mode: cfg.mode, runs, censoring: c, summary: None });
            }
        };
    }

    let summary = match cfg.mode {
        Mode::Speed | Mode::Blocks => {
            let mut s = spec(cfg, cfg.params(), cfg.horizon);
            s.check_couplings = true;
            runs.push(BlockRun::new(s, cfg.seed, 0, r)?);
            censor_gate!();
            let speed = speed_summary(&runs[0])?;
            if cfg.mode == Mode::Speed {
                Summary::Speed(speed)
            } else {
                Summary::Blocks(blocks_summary(&runs[0], speed)?)
            }
        }
        Mode::Clt => {
            let s = spec(cfg, cfg.params(), cfg.horizon);
            let est = spec(cfg, cfg.params(), cfg.estimation_horizon);
            runs.push(BlockRun::sample_only(s, cfg.seed, 0, r)?);
            runs.push(BlockRun::new(est, cfg.seed, r, cfg.estimation_replicas)?);
            censor_gate!();
            Summary::Clt(clt_summary(&runs[0], &runs[1])?)
        }
        Mode::Ldp => {
            let mut s = spec(cfg, cfg.params(), cfg.horizon);
            s.snapshots = cfg.t_grid.clone();
            runs.push(BlockRun::new(s, cfg.seed, 0, r)?);
            censor_gate!();
            Summary::Ldp(ldp_summary(&runs[0], &cfg.eps_grid)?)
        }
        Mode::Density => {
            let est = spec(cfg, cfg.params(), cfg.estimation_horizon);
            let mut probed = spec(cfg, cfg.params(), cfg.horizon);
            probed.probe_rate = cfg.probe_rate;
            runs.push(BlockRun::new(est, cfg.seed, 0, cfg.estimation_replicas)?);
            runs.push(BlockRun::sample_only(probed, cfg.seed, cfg.estimation_replicas, r)?);
            censor_gate!();
            Summary::Density(density_summary(&runs[0], &runs[1])?)
        }
        Mode::Einstein => {
            let ModelSpec::Perturbed { base, rho } = cfg.model else { unreachable!("resolved einstein config") };
            let lambdas: Vec<f64> = std::iter::once(0.0).chain(cfg.lambda_grid.iter().copied()).collect();
            for (k, &lambda) in lambdas.iter().enumerate() {
                let p = perturbed_rates(&base.with_lambda(lambda), rho).expect("validated");
                runs.push(BlockRun::new(spec(cfg, p, cfg.horizon), cfg.seed, k as u64 * r, r)?);
            }
            let probe_lambda = cfg.lambda_grid[0];
            let mut probed =
                spec(cfg, perturbed_rates(&base.with_lambda(probe_lambda), rho).expect("validated"), cfg.horizon);
            probed.probe_rate = cfg.probe_rate;
            runs.push(BlockRun::sample_only(probed, cfg.seed, lambdas.len() as u64 * r, r)?);
            censor_gate!();
            let points = lambdas
                .iter()
                .zip(&runs)
                .map(|(&lambda, run)| Ok(EinsteinPoint { lambda, speed: run.speed()? }))
                .collect::<Result<Vec<_>, StatsError>>()?;
            let last = runs.last().expect("probe run");
            Summary::Einstein(EinsteinSummary {
                fit: einstein_fit(&points)?,
                points,
                diffusivity: base.alpha + base.beta,
                probe_lambda,
                density: estimate_density(&last.tallies(), cfg.horizon, cfg.probe_rate)?,
            })
        }
        Mode::Oracle => {
            let params = cfg.params();
            let reports = (0..r)
                .into_par_iter()
                .map(|i| {
                    compare_on_torus(&params, cfg.torus_sites, replica_seed(cfg.seed, i), cfg.oracle_events as usize)
                })
                .collect::<Result<Vec<_>, _>>()?;
            Summary::Oracle(OracleSummary { reports })
        }
    };
    Ok(Outcome { mode: cfg.mode, censoring: censoring(&runs), runs, summary: Some(summary) })
}

pub fn speed_summary(run: &BlockRun) -> Result<SpeedSummary, StatsError> {
    let sample = run.sample();
    Ok(SpeedSummary {
        blocks: sample.len(),
        speed: estimate_speed(&sample, DEFAULT_BLOCK_FLOOR)?,
        speed_direct: estimate_speed_direct(&run.finals(), run.spec.horizon)?,
        lower_bound: run.spec.params.alpha_min() - run.spec.params.beta_max(),
        ledger: run.ledger(),
        couplings: run.couplings(),
        events: run.events(),
    })
}

pub fn blocks_summary(run: &BlockRun, speed: SpeedSummary) -> Result<BlocksSummary, StatsError> {
    let s = run.sample();
    let n = s.len();
    let half = n / 2;
    Ok(BlocksSummary {
        variance: estimate_clt_variance(&s, speed.speed.value, DEFAULT_BLOCK_FLOOR)?,
        variance_direct: direct_variance(&run.finals(), run.spec.horizon),
        mean_duration: sepwalk_core::stats::mean_estimate(&s.durations),
        attempts: geometric_attempts(&s.attempts, SURVIVAL_MIN_COUNT)?,
        kappa_first: first_block_kappa(run),
        tail: duration_tail(&s.durations, tail_guard(n))?,
        acf_duration: lag1_autocorrelation(&s.durations),
        acf_displacement: lag1_autocorrelation(&s.displacements),
        acf_bound: 4.0 / (n as f64).sqrt(),
        halves_duration: ks_two_sample(&s.durations[..half], &s.durations[half..]),
        halves_displacement: ks_two_sample(&s.displacements[..half], &s.displacements[half..]),
        speed,
    })
}

/// MLE `n / Σ (K + 1)` over the first blocks, with its delta-method SE.
pub fn first_block_kappa(run: &BlockRun) -> Estimate {
    let ks: Vec<u32> =
        run.results.iter().filter_map(|r| r.blocks.first().filter(|b| b.is_first)).map(|b| b.attempts).collect();
    let n = ks.len() as f64;
    let trials: f64 = ks.iter().map(|&k| k as f64 + 1.0).sum();
    let kappa = n / trials;
    Estimate::new(kappa, kappa * ((1.0 - kappa) / n).sqrt())
}

/// Order statistics dropped from the top of the duration tail fit: the last
/// percent, where the empirical survival rests on a handful of blocks.
pub fn tail_guard(n: usize) -> usize {
    (n / 100).max(10)
}

/// `sample` provides the normalized positions, `estimation` the speed and
/// variance used to normalize them.
pub fn clt_summary(sample: &BlockRun, estimation: &BlockRun) -> Result<CltSummary, StatsError> {
    let est = estimation.sample();
    let speed = estimate_speed(&est, DEFAULT_BLOCK_FLOOR)?;
    let variance = estimate_clt_variance(&est, speed.value, DEFAULT_BLOCK_FLOOR)?;
    let t = sample.spec.horizon;
    let scale = (variance.centered.value * t).sqrt();
    let normalized: Vec<f64> = sample.finals().iter().map(|&x| (x as f64 - speed.value * t) / scale).collect();
    Ok(CltSummary {
        speed,
        variance,
        variance_direct: direct_variance(&sample.finals(), t),
        ks: ks_normal(&normalized),
        normalized,
    })
}

pub fn ldp_summary(run: &BlockRun, fractions: &[f64]) -> Result<LdpSummary, StatsError> {
    let speed = run.speed()?;
    let v = speed.value;
    let ts = &run.spec.snapshots;
    let positions: Vec<Vec<Site>> =
        (0..ts.len()).map(|k| run.results.iter().map(|r| r.snapshots[k]).collect()).collect();
    let p = run.spec.params;
    let branches = fractions
        .iter()
        .map(|&fraction| {
            let eps = fraction * v;
            let points = ldp_curve(&positions, ts, v, eps);
            let slope = ldp_slope(&points);
            let exact = p.is_homogeneous().then(|| {
                let (a, b) = (p.alpha0, p.beta0);
                let log_p: Vec<f64> = ts.iter().map(|&t| skellam_abs_tail(a, b, t, v, eps).ln()).collect();
                let used: Vec<usize> = (0..points.len()).filter(|&i| !points[i].is_zero_count()).collect();
                let slope = (used.len() >= 2).then(|| {
                    let x: Vec<f64> = used.iter().map(|&i| ts[i]).collect();
                    let y: Vec<f64> = used.iter().map(|&i| log_p[i]).collect();
                    let w: Vec<f64> = used.iter().map(|&i| points[i].se.powi(-2)).collect();
                    linear_fit(&x, &y, Some(&w)).slope
                });
                let cramer_slope = -cramer_rate(a, b, v + eps).min(cramer_rate(a, b, v - eps));
                LdpReference { log_p, slope, cramer_slope }
            });
            LdpBranch { fraction, eps, points, slope, exact }
        })
        .collect();
    Ok(LdpSummary { speed, branches })
}

pub fn density_summary(estimation: &BlockRun, probed: &BlockRun) -> Result<DensitySummary, StatsError> {
    let speed = estimation.speed()?;
    let (t, mu) = (probed.spec.horizon, probed.spec.probe_rate);
    let params = &probed.spec.params;
    let density = estimate_density(&probed.tallies(), t, mu)?;
    Ok(DensitySummary {
        speed,
        residual: martingale_residual(params, &probed.finals(), &probed.tallies(), t, mu)?,
        gap: speed_density_gap(params, speed, density.rho),
        density,
    })
}

struct Entries(toml::Table);

impl Entries {
    fn num(&mut self, k: &str, v: f64) {
        self.0.insert(k.into(), v.into());
    }

    fn int(&mut self, k: &str, v: u64) {
        self.0.insert(k.into(), toml::Value::Integer(v as i64));
    }

    fn flag(&mut self, k: &str, v: bool) {
        self.0.insert(k.into(), v.into());
    }

    fn est(&mut self, k: &str, e: Estimate) {
        self.num(k, e.value);
        self.num(&format!("{k}_se"), e.se);
    }
}

fn speed_entries(e: &mut Entries, s: &SpeedSummary) {
    e.int("blocks", s.blocks as u64);
    e.int("events", s.events);
    e.est("speed", s.speed);
    e.est("speed_direct", s.speed_direct);
    e.num("speed_lower_bound", s.lower_bound);
    e.int("attempts_created", s.ledger.created);
    e.int("attempts_failed", s.ledger.failed);
    e.int("attempts_abandoned", s.ledger.abandoned);
    e.int("attempts_succeeded", s.ledger.succeeded);
    e.int("attempts_pending", s.ledger.pending);
    e.int("attempts_confirmed_open", s.ledger.confirmed_open);
    e.flag("attempts_reconcile", s.ledger.reconciles());
    e.int("coupling_steps", s.couplings.steps);
    e.int("coupling_violations", s.couplings.violations());
}

/// Estimates as a flat table.
pub fn estimates_table(outcome: &Outcome) -> toml::Table {
    let mut e = Entries(toml::Table::new());
    e.num("censored_fraction", outcome.censoring.fraction);
    e.num("censoring_budget", outcome.censoring.budget);
    e.flag("censoring_exceeded", outcome.censoring.exceeded());
    let Some(summary) = &outcome.summary else { return e.0 };
    match summary {
        Summary::Speed(s) => speed_entries(&mut e, s),
        Summary::Blocks(b) => {
            speed_entries(&mut e, &b.speed);
            e.est("sigma2_centered", b.variance.centered);
            e.num("sigma2_uncentered", b.variance.uncentered);
            e.est("sigma2_direct", b.variance_direct);
            e.est("mean_duration", b.mean_duration);
            e.num("kappa_pooled", b.attempts.kappa);
            e.est("kappa_first_block", b.kappa_first);
            e.num("attempts_log_survival_slope", b.attempts.fit.slope);
            e.num("attempts_log_survival_r2", b.attempts.fit.r_squared);
            e.num("tail_slope_lower_decile", b.tail.lower_band.slope);
            e.num("tail_slope_upper_decile", b.tail.upper_band.slope);
            e.num("tail_slope_drift", b.tail.slope_drift());
            e.num("acf_duration", b.acf_duration);
            e.num("acf_displacement", b.acf_displacement);
            e.num("acf_bound", b.acf_bound);
            e.num("halves_ks_p_duration", b.halves_duration.p_value);
            e.num("halves_ks_p_displacement", b.halves_displacement.p_value);
        }
        Summary::Clt(c) => {
            e.est("speed", c.speed);
            e.est("sigma2_centered", c.variance.centered);
            e.num("sigma2_uncentered", c.variance.uncentered);
            e.est("sigma2_direct", c.variance_direct);
            e.int("clt_samples", c.normalized.len() as u64);
            e.num("clt_ks_statistic", c.ks.statistic);
            e.num("clt_ks_p", c.ks.p_value);
        }
        Summary::Ldp(l) => {
            e.est("speed", l.speed);
            for b in &l.branches {
                let k = format!("eps_{}", b.fraction);
                e.num(&format!("{k}_value"), b.eps);
                if let Some(s) = &b.slope {
                    e.num(&format!("{k}_slope"), s.fit.slope);
                    e.num(&format!("{k}_slope_se"), s.fit.slope_se);
                    e.int(&format!("{k}_zero_cells"), s.excluded as u64);
                }
                if let Some(x) = &b.exact {
                    if let Some(s) = x.slope {
                        e.num(&format!("{k}_exact_slope"), s);
                    }
                    e.num(&format!("{k}_cramer_slope"), x.cramer_slope);
                }
            }
        }
        Summary::Density(d) => {
            e.est("speed", d.speed);
            e.est("rho_observed", d.density.rho);
            e.est("time_on_marked_fraction", d.density.time_on_marked);
            e.est("martingale_residual", d.residual);
            e.est("speed_density_gap", d.gap);
        }
        Summary::Einstein(s) => {
            for p in &s.points {
                e.est(&format!("speed_lambda_{}", p.lambda), p.speed);
            }
            e.est("einstein_slope", s.fit.slope);
            e.num("diffusivity", s.diffusivity);
            e.num("einstein_z", s.fit.slope.z(s.diffusivity));
            e.num("probe_lambda", s.probe_lambda);
            e.est("rho_observed", s.density.rho);
            e.est("time_on_marked_fraction", s.density.time_on_marked);
        }
        Summary::Oracle(o) => {
            e.int("torus_seeds", o.reports.len() as u64);
            e.int("torus_mismatches", o.mismatches() as u64);
            let compared: u64 = o.reports.iter().map(|r| r.compared as u64).sum();
            e.int("torus_events_compared", compared);
            if let Some(r) = o.reports.iter().find(|r| !r.matches()) {
                e.int("first_mismatch_seed", r.seed);
                e.int("first_mismatch_event", r.first_mismatch.unwrap_or(0) as u64);
            }
        }
    }
    e.0
}

/// Plot-ready curves of the outcome.
pub fn curves(outcome: &Outcome) -> Vec<Curve> {
    let mut out = Vec::new();
    let Some(summary) = &outcome.summary else { return out };
    match summary {
        Summary::Blocks(_) => {
            let s = outcome.runs[0].sample();
            let mut c = Curve::new(
                "attempts",
                "log-survival of failed attempts per block",
                &[("n", "failed attempts, count"), ("log_survival", "ln P(K >= n)")],
            );
            for (n, y) in log_survival(&s.attempts, SURVIVAL_MIN_COUNT) {
                c.push(vec![n, y]);
            }
            out.push(c);
            let mut d = s.durations.clone();
            d.sort_by(|a, b| a.total_cmp(b));
            let n = d.len();
            let mut c = Curve::new(
                "duration_tail",
                "log-survival of block durations over the top two deciles",
                &[("duration", "time units"), ("log_survival", "ln P(tau > duration)")],
            );
            for (i, &t) in d.iter().enumerate().skip(n * 8 / 10) {
                c.push(vec![t, ((n - i) as f64 / n as f64).ln()]);
            }
            out.push(c);
        }
        Summary::Clt(clt) => {
            let mut z = clt.normalized.clone();
            z.sort_by(|a, b| a.total_cmp(b));
            let n = z.len() as f64;
            let normal = statrs_normal_cdf;
            let mut c = Curve::new(
                "clt",
                "empirical distribution of (X_T - v T) / sqrt(sigma2 T)",
                &[("z", "dimensionless"), ("ecdf", "probability"), ("normal_cdf", "probability")],
            );
            for (i, &x) in z.iter().enumerate() {
                c.push(vec![x, (i + 1) as f64 / n, normal(x)]);
            }
            out.push(c);
        }
        Summary::Ldp(l) => {
            let mut c = Curve::new(
                "ldp",
                "large-deviation decay of P(|X_t - v t| >= eps t)",
                &[
                    ("t", "time units"),
                    ("eps", "sites per time unit"),
                    ("hits", "count"),
                    ("replicas", "count"),
                    ("log_p", "ln probability"),
                    ("se", "ln probability"),
                    ("exact_log_p", "ln probability, nan unless rates are state-independent"),
                ],
            );
            for b in &l.branches {
                for (i, p) in b.points.iter().enumerate() {
                    let exact = b.exact.as_ref().map_or(f64::NAN, |x| x.log_p[i]);
                    c.push(vec![p.t, p.eps, p.hits as f64, p.replicas as f64, p.log_p, p.se, exact]);
                }
            }
            out.push(c);
        }
        Summary::Einstein(s) => {
            let mut c = Curve::new(
                "einstein",
                "speed of the perturbed walk against the perturbation strength",
                &[
                    ("lambda", "dimensionless"),
                    ("speed", "sites per time unit"),
                    ("speed_se", "sites per time unit"),
                    ("speed_change", "v(lambda) - v(0), sites per time unit"),
                ],
            );
            for p in &s.points {
                c.push(vec![p.lambda, p.speed.value, p.speed.se, p.speed.value - s.fit.v0.value]);
            }
            out.push(c);
        }
        _ => {}
    }
    out
}

fn statrs_normal_cdf(x: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-x / std::f64::consts::SQRT_2)
}

/// Writes `report.txt`, `blocks.log` (when the mode simulates blocks) and the
/// curves into `cfg.out`.
pub fn write_artifacts(cfg: &Config, outcome: &Outcome) -> io::Result<()> {
    fs::create_dir_all(&cfg.out)?;
    let report = render_report(cfg.to_table(), estimates_table(outcome));
    fs::write(cfg.out.join("report.txt"), report)?;
    if !outcome.runs.is_empty() {
        let runs: Vec<(u32, &[ReplicaResult])> =
            outcome.runs.iter().enumerate().map(|(i, r)| (i as u32, r.results.as_slice())).collect();
        write_file(&cfg.out.join("blocks.log"), |w| write_block_log(w, &runs))?;
    }
    for c in curves(outcome) {
        write_file(&cfg.out.join(c.file_name()), |w| c.write(w))?;
    }
    Ok(())
}
