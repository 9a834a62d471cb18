//! Experiment runners. Each returns the artifacts it produced; writing them
//! to disk is left to the caller.

use crate::config::{Config, ConfigError, Experiment};
use heavytail::boltzmann::Boltzmann;
use heavytail::chain::{replicate, ChainModel, IidPareto, Reciprocal, StationaryDensity, WeightSpec};
use heavytail::coupling::{block_tail_report, dyadic_grid, regen_condition_report, theta_bar_estimate, DoeblinSpec};
use heavytail::diagnostics::{generate_ensemble, report_from_ensemble, target_exponent, Centering, EnsembleSpec, Mode};
use heavytail::fracdiff::{
    domain_half_width, frac_heat_solve, l2k_error, mc_kinetic_solution, model_effective_diffusivity, torus_midpoints, Grid,
    KineticInitialData,
};
use heavytail::quad::{integrate, level_intervals, scan_grid};
use heavytail::rng::{stream, substream};
use heavytail::spectral::{discretize, martingale_decompose, solve_poisson, spectral_gap, GridModel};
use heavytail::stats::hill_profile;
use serde_json::{json, Value};
use std::fmt::Write;

#[derive(Debug)]
pub enum Failure {
    /// The configuration is malformed or asks for something unsupported.
    Invalid(String),
    /// A numerical routine failed on a valid configuration.
    Runtime(String),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Invalid(_) => 2,
            Failure::Runtime(_) => 1,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Invalid(m) => write!(f, "invalid configuration: {m}"),
            Failure::Runtime(m) => write!(f, "run failed: {m}"),
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Invalid(e.0)
    }
}

impl From<heavytail::Error> for Failure {
    fn from(e: heavytail::Error) -> Self {
        use heavytail::Error::*;
        match e {
            InvalidSpec(_) | Domain(_) | GridMismatch(_) | NotCentered(_) => Failure::Invalid(e.to_string()),
            _ => Failure::Runtime(e.to_string()),
        }
    }
}

/// Artifacts of one run: named file contents, a JSON summary for the
/// manifest, and the reason a convergence gate failed, if it did.
#[derive(Debug, Default)]
pub struct Outcome {
    pub files: Vec<(String, String)>,
    pub summary: Value,
    pub gate_failure: Option<String>,
}

impl Outcome {
    fn add(&mut self, stem: &str, ext: &str, seed: u64, contents: String) {
        self.files.push((format!("{stem}_seed{seed}.{ext}"), contents));
    }
}

pub enum Model {
    IidPareto(IidPareto),
    Reciprocal(Reciprocal),
    Boltzmann(Boltzmann),
}

macro_rules! with_model {
    ($model:expr, $m:ident => $body:expr) => {
        match $model {
            Model::IidPareto($m) => $body,
            Model::Reciprocal($m) => $body,
            Model::Boltzmann($m) => $body,
        }
    };
}

fn reject_key(cfg: &Config, key: &str, model: &str) -> Result<(), Failure> {
    if cfg.raw(key).is_some() {
        return Err(Failure::Invalid(format!("key `{key}` does not apply to model `{model}`")));
    }
    Ok(())
}

pub fn build_model(cfg: &Config) -> Result<Model, Failure> {
    let name = cfg.require("model")?;
    match name {
        "iid_pareto" => {
            let alpha = cfg.real_or("alpha", f64::NAN);
            if alpha.is_nan() {
                return Err(Failure::Invalid("model `iid_pareto` needs key `alpha`".into()));
            }
            let m = IidPareto::standard(alpha, cfg.bool_or("symmetric", true)).map_err(|e| Failure::Invalid(format!("key `alpha`: {e}")))?;
            Ok(Model::IidPareto(m))
        }
        "reciprocal" => {
            reject_key(cfg, "alpha", name)?;
            Ok(Model::Reciprocal(Reciprocal { symmetric: cfg.bool_or("symmetric", true) }))
        }
        "boltzmann" => {
            reject_key(cfg, "alpha", name)?;
            reject_key(cfg, "symmetric", name)?;
            Ok(Model::Boltzmann(Boltzmann::lattice()))
        }
        other => Err(Failure::Invalid(format!("key `model`: unknown model `{other}`"))),
    }
}

pub fn run(cfg: &Config, seed: u64) -> Result<Outcome, Failure> {
    let model = build_model(cfg)?;
    match cfg.experiment {
        Experiment::Tails => with_model!(&model, m => tails(cfg, m, seed)),
        Experiment::Coupling => match &model {
            Model::IidPareto(m) => coupling(cfg, m, (0..32).map(|j| (j as f64 + 0.5) / 32.0).collect(), seed),
            Model::Boltzmann(m) => coupling(cfg, m, m.regen_probes(), seed),
            Model::Reciprocal(_) => Err(Failure::Invalid("key `model`: `reciprocal` has no regeneration structure".into())),
        },
        Experiment::Spectral => with_model!(&model, m => spectral(cfg, m, seed)),
        Experiment::Converge => converge(cfg, &model, seed),
        Experiment::Kinetic => with_model!(&model, m => kinetic(cfg, m, seed)),
        Experiment::Fracdiff => with_model!(&model, m => fracdiff(cfg, m, seed)),
    }
}

/// `π(Ψ > λ)` or `π(Ψ < −λ)` by quadrature over the level set.
fn level_mass(d: &dyn StationaryDensity, lambda: f64, positive: bool) -> Result<f64, Failure> {
    let (a, b) = d.support();
    let singular = d.singular_points();
    let grid = scan_grid(a, b, 2048, &singular);
    let inside = |x: f64| {
        let v = d.observable(x);
        if positive {
            v > lambda
        } else {
            v < -lambda
        }
    };
    let mut total = 0.0;
    for (lo, hi) in level_intervals(inside, &grid) {
        let mut breaks = vec![lo];
        breaks.extend(singular.iter().copied().filter(|&s| s > lo && s < hi));
        breaks.push(hi);
        total += integrate(|x| d.pdf(x), &breaks, 1e-300, 1e-13, 4000)?.value;
    }
    Ok(total)
}

fn tails<M: ChainModel<State = f64>>(cfg: &Config, m: &M, seed: u64) -> Result<Outcome, Failure> {
    let samples = cfg.count_or("samples", 1_000_000);
    let lambdas = cfg.reals_or("lambdas", &[10.0, 100.0, 1000.0, 10000.0]);
    if samples < 2 || lambdas.iter().any(|&l| l <= 0.0) {
        return Err(Failure::Invalid("keys `samples`, `lambdas`: need two samples and positive thresholds".into()));
    }
    let alpha = m.tail().alpha;
    let values = replicate(seed, 0x7A11, samples, |rng| {
        let x = m.stationary_draw(rng);
        m.psi(&x)
    });
    let density = m.pi_density().ok_or_else(|| Failure::Invalid("model has no stationary density".into()))?;
    let n = samples as f64;
    let mut csv = String::from("lambda,empirical_pos,empirical_neg,n_exceed_pos,n_exceed_neg,quadrature_pos,quadrature_neg\n");
    for &l in &lambdas {
        let pos = values.iter().filter(|&&v| v > l).count();
        let neg = values.iter().filter(|&&v| v < -l).count();
        let scale = l.powf(alpha);
        let qp = scale * level_mass(density, l, true)?;
        let qn = scale * level_mass(density, l, false)?;
        let _ = writeln!(csv, "{l:e},{:e},{:e},{pos},{neg},{qp:e},{qn:e}", scale * pos as f64 / n, scale * neg as f64 / n);
    }
    let orders: Vec<usize> = cfg.counts_or("hill_orders", &[100, 1000, 10000]).into_iter().filter(|&k| k >= 1 && k < samples).collect();
    let mut hill = String::from("k,alpha_hat\n");
    if !orders.is_empty() {
        for (k, a) in orders.iter().zip(hill_profile(&values, &orders)?) {
            let _ = writeln!(hill, "{k},{a:e}");
        }
    }
    let mut out = Outcome { summary: json!({ "alpha": alpha, "samples": samples }), ..Default::default() };
    out.add("tails", "csv", seed, csv);
    out.add("hill", "csv", seed, hill);
    Ok(out)
}

fn coupling<M: DoeblinSpec>(cfg: &Config, m: &M, probes: Vec<M::State>, seed: u64) -> Result<Outcome, Failure>
where
    M::State: Sync,
{
    let blocks = cfg.count_or("blocks", 1_000_000);
    let j_max = cfg.count_or("j_max", 10);
    let steps = cfg.count_or("theta_steps", 1_000_000);
    let paths = cfg.count_or("regen_paths", 100_000);
    let n_max = cfg.count_or("regen_n_max", 20);
    let (theta, se) = theta_bar_estimate(m, steps, 100, &mut stream(seed, 0x7E7A))?;
    let mut out = Outcome::default();
    out.add("theta_bar", "csv", seed, format!("theta_bar,se\n{theta:e},{se:e}\n"));

    let rows = block_tail_report(m, blocks, &dyadic_grid(j_max as u32), seed)?;
    let mut csv = String::from("lambda,alpha_lambda_pos,alpha_lambda_neg,n_exceed_pos,n_exceed_neg,flag\n");
    for r in &rows {
        let flag = if r.low_confidence { "low_confidence" } else { "ok" };
        let _ = writeln!(csv, "{:e},{:e},{:e},{},{},{flag}", r.lambda, r.alpha_lambda_pos, r.alpha_lambda_neg, r.n_exceed_pos, r.n_exceed_neg);
    }
    out.add("block_tails", "csv", seed, csv);

    let regen = regen_condition_report(m, n_max, &probes, paths, seed)?;
    let mut csv = String::from("n,summand,hits\n");
    for (i, (s, h)) in regen.summands.iter().zip(&regen.hits).enumerate() {
        let _ = writeln!(csv, "{},{s:e},{h}", i + 1);
    }
    out.add("regeneration", "csv", seed, csv);
    let tail = m.tail();
    out.summary = json!({
        "theta_bar": theta,
        "theta_bar_se": se,
        "predicted_block_c_plus": tail.c_plus / theta,
        "predicted_block_c_minus": tail.c_minus / theta,
        "regeneration_total": regen.total,
        "regeneration_total_is_lower_bound": regen.is_lower_bound,
    });
    Ok(out)
}

fn spectral<G: GridModel>(cfg: &Config, m: &G, seed: u64) -> Result<Outcome, Failure> {
    let sizes = cfg.counts_or("grid_sizes", &[256, 512, 1024]);
    let tol = cfg.real_or("tol", 1e-10);
    let paths = cfg.count_or("paths", 10);
    let length = cfg.count_or("path_length", 1000);
    if !(tol > 0.0) || length == 0 {
        return Err(Failure::Invalid("keys `tol`, `path_length` must be positive".into()));
    }
    let mut out = Outcome::default();
    let mut csv = String::from("M,gap,row_sum_error,detailed_balance_error,poisson_residual,poisson_terms,max_telescoping_error\n");
    let mut gaps = Vec::new();
    for &size in &sizes {
        let op = discretize(m, size)?;
        let gap = spectral_gap(&op)?;
        let psi = op.center(&op.sample(m));
        let sol = solve_poisson(&op, &psi, tol)?;
        let mut worst: f64 = 0.0;
        for p in 0..paths {
            let path = op.simulate_path(length, &mut substream(seed, 0x5BEC_0000 + size as u64, p as u64));
            let mg = martingale_decompose(&op, &sol, &path)?;
            let s: f64 = path[1..].iter().map(|&i| psi[i]).sum();
            worst = worst.max((s - mg.increments.iter().sum::<f64>() - mg.boundary).abs());
        }
        let _ = writeln!(
            csv,
            "{size},{gap:e},{:e},{:e},{:e},{},{worst:e}",
            op.row_sum_error(),
            op.detailed_balance_error(),
            sol.residual,
            sol.terms_used
        );
        out.add(&format!("operator_M{size}"), "txt", seed, op.to_text());
        out.add(&format!("poisson_M{size}"), "txt", seed, sol.to_text());
        gaps.push(gap);
    }
    out.add("spectral", "csv", seed, csv);
    out.summary = json!({ "grid_sizes": sizes, "gaps": gaps });
    Ok(out)
}

fn ensemble_spec(cfg: &Config, model: &Model, seed: u64) -> Result<EnsembleSpec, Failure> {
    let t = cfg.real_or("t", 1.0);
    let mode = match cfg.word_or("mode", "discrete") {
        "discrete" => Mode::DiscreteSum,
        "weighted" => Mode::WeightedSum(match cfg.word_or("weights", "constant") {
            "constant" => WeightSpec::constant(),
            "exponential" => WeightSpec::exponential(with_model!(model, m => m.tail().alpha)),
            other => return Err(Failure::Invalid(format!("key `weights`: unknown law `{other}`"))),
        }),
        "continuous" => Mode::ContinuousFunctional,
        other => return Err(Failure::Invalid(format!("key `mode`: unknown mode `{other}`"))),
    };
    if cfg.raw("weights").is_some() && !matches!(mode, Mode::WeightedSum(_)) {
        return Err(Failure::Invalid("key `weights` needs mode = weighted".into()));
    }
    let centering = match cfg.word_or("centering", "none") {
        "none" => Centering::None,
        "mean" => {
            let exact = match model {
                Model::IidPareto(m) => m.mean(),
                Model::Reciprocal(r) if r.symmetric => Some(0.0),
                Model::Boltzmann(_) => Some(0.0),
                Model::Reciprocal(_) => None,
            };
            let mean = cfg.raw("mean").map(|_| cfg.real_or("mean", 0.0)).or(exact);
            Centering::Mean(mean.ok_or_else(|| Failure::Invalid("key `mean`: the model has no finite mean to default to".into()))?)
        }
        "truncated" => Centering::TruncatedCN,
        other => return Err(Failure::Invalid(format!("key `centering`: unknown centering `{other}`"))),
    };
    if cfg.raw("mean").is_some() && !matches!(centering, Centering::Mean(_)) {
        return Err(Failure::Invalid("key `mean` needs centering = mean".into()));
    }
    let step_budget = cfg.raw("step_budget").map(|_| cfg.u64_or("step_budget", 0));
    Ok(EnsembleSpec {
        mode,
        n_schedule: cfg.counts_or("N_schedule", &[100, 1000, 10000]),
        replicas: cfg.count_or("replicas", 10_000),
        centering,
        pre_centered: cfg.bool_or("pre_centered", false),
        t,
        seed,
        step_budget,
    })
}

fn converge(cfg: &Config, model: &Model, seed: u64) -> Result<Outcome, Failure> {
    let spec = ensemble_spec(cfg, model, seed)?;
    let (ens, le, t_scale) = with_model!(model, m => {
        let (le, t_scale) = target_exponent(m, &spec)?;
        (generate_ensemble(m, &spec)?, le, t_scale)
    });
    let rep = report_from_ensemble(&ens, &le, t_scale, seed)?;
    let mut out = Outcome::default();
    let mut csv = String::from("replica,N,value\n");
    for (n, samples) in &ens.per_n {
        for (i, v) in samples.iter().enumerate() {
            let _ = writeln!(csv, "{i},{n},{v:e}");
        }
    }
    out.add("ensemble", "csv", seed, csv);
    let mut conv = String::from("N,cf_distance,ks_distance,cf_sigma\n");
    for (p, s) in rep.report.per_n.iter().zip(&rep.cf_sigma) {
        let _ = writeln!(conv, "{},{:e},{:e},{s:e}", p.n, p.cf_distance, p.ks_distance);
    }
    out.add("convergence", "csv", seed, conv);
    let json = serde_json::to_string_pretty(&rep.report).map_err(|e| Failure::Runtime(e.to_string()))?;
    out.add("stable_report", "json", seed, json + "\n");
    out.summary = json!({
        "limit": format!("{:?}", le.kind),
        "t_scale": t_scale,
        "monotone": rep.monotone,
        "hill_drift": rep.hill_drift,
        "partial": rep.partial,
    });
    if rep.failed() {
        out.gate_failure = Some("CF distance increased along the N schedule beyond 3 bootstrap sigma".into());
    }
    Ok(out)
}

fn field_grid(cfg: &Config, d: f64, t: f64) -> Result<Grid, Failure> {
    let points = cfg.count_or("grid_points", 1 << 14);
    let half_width = match cfg.real_or("half_width", 0.0) {
        w if w > 0.0 => w,
        _ => domain_half_width(d, t, 1e-4).max(64.0),
    };
    Grid::new(half_width, points).map_err(|e| Failure::Invalid(format!("keys `half_width`, `grid_points`: {e}")))
}

fn kinetic<M: ChainModel<State = f64>>(cfg: &Config, m: &M, seed: u64) -> Result<Outcome, Failure> {
    let t = cfg.real_or("t", 1.0);
    let width = cfg.real_or("width", 0.5);
    if !(width > 0.0) {
        return Err(Failure::Invalid("key `width` must be positive".into()));
    }
    let schedule = cfg.counts_or("N_schedule", &[1000, 10000]);
    let x_probes = cfg.reals_or("x_probes", &[-0.5, 0.0, 0.5]);
    let k_probes = torus_midpoints(cfg.count_or("k_count", 8));
    let paths = cfg.count_or("paths", 10_000);
    let d = model_effective_diffusivity(m)?;
    let u0 = KineticInitialData::gaussian(width);
    let field = frac_heat_solve(|x| u0.k_average(x), field_grid(cfg, d, t)?, t, d)?;
    let mut table_csv = String::new();
    let mut l2k = String::from("N,x,error,se\n");
    for (j, &n) in schedule.iter().enumerate() {
        let table = mc_kinetic_solution(m, &u0, n as f64, t, &x_probes, &k_probes, paths, seed.wrapping_add(j as u64))?;
        let csv = table.to_csv();
        table_csv.push_str(if j == 0 { &csv } else { csv.split_once('\n').map(|(_, rest)| rest).unwrap_or("") });
        for r in l2k_error(&table, &field)? {
            let _ = writeln!(l2k, "{n},{:e},{:e},{:e}", r.x, r.error, r.se);
        }
    }
    let mut out = Outcome { summary: json!({ "diffusivity": d, "t": t }), ..Default::default() };
    out.add("kinetic", "csv", seed, table_csv);
    out.add("l2k", "csv", seed, l2k);
    Ok(out)
}

fn fracdiff<M: ChainModel>(cfg: &Config, m: &M, seed: u64) -> Result<Outcome, Failure> {
    let t = cfg.real_or("t", 1.0);
    let width = cfg.real_or("width", 0.5);
    if !(width > 0.0) || !(t >= 0.0) {
        return Err(Failure::Invalid("keys `width`, `t`: need width > 0 and t ≥ 0".into()));
    }
    let d = match cfg.raw("diffusivity") {
        Some(_) => cfg.real_or("diffusivity", 1.0),
        None => model_effective_diffusivity(m)?,
    };
    let u0 = KineticInitialData::gaussian(width);
    let field = frac_heat_solve(|x| u0.k_average(x), field_grid(cfg, d, t)?, t, d)?;
    let mut out = Outcome { summary: json!({ "diffusivity": d, "t": t, "mass": field.mass() }), ..Default::default() };
    out.add("field", "csv", seed, field.to_csv());
    Ok(out)
}
