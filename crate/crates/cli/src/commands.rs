use std::collections::BTreeMap;
use std::fs::File;
use std::path::{Path, PathBuf};

use carp_core::engine::{simulate_trajectory, CarpModel, NetworkState};
use carp_core::influence::{category_influence, Aggregation, CategoryInfluence};
use carp_core::mle::BoundaryFlag;
use carp_core::risk_model::{
    load_history_file, load_network_files, load_risk_catalog, map_cross_year, CrossYearMapping, LikelihoodScale,
};
use carp_core::rng::child_seed;
use carp_core::synthetic::{build_fixture, NetworkSpec};
use carp_core::validation::{
    forward_error_bounds, network_effect_comparison, recovery_experiment, sensitivity_suite, AttributionFractions,
    RecoveryConfig, ValidationReport,
};
use carp_core::{
    compute_properties, fit, risk_influence, solve_steady_state, Category, FitConfig, FitResult, HistoryMatrix,
    InfluenceMatrix, MeanFieldConfig, ModelParams, RiskNetwork, SteadyState,
};
use serde::Serialize;

use crate::cli::*;
use crate::error::{CliError, CliResult};
use crate::output::{float, opt_float, sha256_hex, ArtifactDir};

/// Inputs read and artifacts written by one command.
pub struct Session {
    pub out: ArtifactDir,
    pub inputs: BTreeMap<String, String>,
}

impl Session {
    pub fn new(out: &Path) -> CliResult<Self> {
        Ok(Session {
            out: ArtifactDir::create(out)?,
            inputs: BTreeMap::new(),
        })
    }

    fn input(&mut self, path: &Path) -> CliResult<()> {
        let bytes = std::fs::read(path).map_err(|source| CliError::Read {
            path: path.display().to_string(),
            source,
        })?;
        self.inputs.insert(path.display().to_string(), sha256_hex(&bytes));
        Ok(())
    }
}

fn scale(a: &ScaleArgs) -> LikelihoodScale {
    if a.pre_normalized {
        LikelihoodScale::PreNormalized
    } else {
        LikelihoodScale::Survey {
            scale_max: a.scale_max,
            epsilon: a.epsilon,
        }
    }
}

fn load_network(s: &mut Session, year: &str, risks: &Path, pairs: &Path, sc: &ScaleArgs) -> CliResult<RiskNetwork> {
    s.input(risks)?;
    s.input(pairs)?;
    Ok(load_network_files(year, risks, pairs, scale(sc))?)
}

fn network(s: &mut Session, a: &NetworkArgs) -> CliResult<RiskNetwork> {
    load_network(s, &a.year, &a.risks, &a.pairs, &a.scale)
}

fn history(s: &mut Session, path: &Path, net: &RiskNetwork) -> CliResult<HistoryMatrix> {
    s.input(path)?;
    Ok(load_history_file(path, net)?)
}

fn fit_config(o: &FitOptions) -> CliResult<FitConfig> {
    if o.grid_points < 2 || o.top_k == 0 || !(o.ftol > 0.0) {
        return Err(CliError::Usage(
            "grid-points must be at least 2, top-k at least 1 and ftol positive".to_string(),
        ));
    }
    Ok(FitConfig {
        grid_points: o.grid_points,
        top_k: o.top_k,
        ftol: o.ftol,
        max_iterations: o.max_iterations,
        max_restarts: o.max_restarts,
        ..FitConfig::default()
    })
}

fn meanfield_config(o: &MeanFieldOptions) -> CliResult<MeanFieldConfig> {
    if !(o.tol > 0.0) || o.max_iter == 0 {
        return Err(CliError::Usage("tol must be positive and max-iter at least 1".to_string()));
    }
    Ok(MeanFieldConfig {
        tol: o.tol,
        max_iter: o.max_iter,
    })
}

fn read_params(path: &Path) -> CliResult<ModelParams> {
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    let get = |k: &str| {
        v.get(k).and_then(serde_json::Value::as_f64).ok_or_else(|| {
            CliError::Usage(format!("{}: missing numeric `{k}`", path.display()))
        })
    };
    Ok(ModelParams::new(get("alpha")?, get("beta")?, get("gamma")?)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
enum ParamsSource {
    Given,
    Fitted,
}

/// Explicit parameters, or a fit of `hist` when none are given.
fn params(
    s: &mut Session,
    a: &ParamsArgs,
    hist: Option<&HistoryMatrix>,
    net: &RiskNetwork,
    fit_opts: &FitOptions,
) -> CliResult<(ModelParams, ParamsSource)> {
    if let Some(path) = &a.params {
        s.input(path)?;
        return Ok((read_params(path)?, ParamsSource::Given));
    }
    if let (Some(al), Some(be), Some(ga)) = (a.alpha, a.beta, a.gamma) {
        return Ok((ModelParams::new(al, be, ga)?, ParamsSource::Given));
    }
    match hist {
        Some(h) => {
            let r = fit(h, &net.graph, &net.likelihoods(), &fit_config(fit_opts)?)?;
            Ok((r.params, ParamsSource::Fitted))
        }
        None => Err(CliError::Usage(
            "give --params, --alpha/--beta/--gamma, or a --history to fit".to_string(),
        )),
    }
}

#[derive(Serialize)]
struct FitOutput<'a> {
    alpha: f64,
    beta: f64,
    gamma: f64,
    loglik: f64,
    converged: bool,
    boundary_flags: &'a [BoundaryFlag],
    iterations: usize,
    restarts: usize,
    evaluations: usize,
    risks: usize,
    months: usize,
}

fn write_fit(s: &mut Session, r: &FitResult, h: &HistoryMatrix) -> CliResult<()> {
    s.out.json(
        "fit.json",
        &FitOutput {
            alpha: r.params.alpha,
            beta: r.params.beta,
            gamma: r.params.gamma,
            loglik: r.log_likelihood,
            converged: r.converged,
            boundary_flags: &r.flags,
            iterations: r.iterations,
            restarts: r.restarts,
            evaluations: r.evaluations,
            risks: h.risk_count(),
            months: h.month_count(),
        },
    )
}

#[derive(Serialize)]
struct Convergence {
    params: ModelParams,
    params_source: ParamsSource,
    tol: f64,
    max_iter: usize,
    residual: f64,
    iterations: usize,
    converged: bool,
    monotone: bool,
    discrepancy: f64,
    multiple_fixed_points: bool,
}

fn write_steady_state(
    s: &mut Session,
    net: &RiskNetwork,
    ss: &SteadyState,
    p: ModelParams,
    source: ParamsSource,
    cfg: &MeanFieldConfig,
) -> CliResult<()> {
    let rows = net.risks.iter().zip(&ss.p_hat).map(|(r, &v)| vec![r.id.clone(), float(v)]);
    s.out.csv("steady_state.csv", &["risk_id", "p_hat"], rows)?;
    s.out.json(
        "convergence.json",
        &Convergence {
            params: p,
            params_source: source,
            tol: cfg.tol,
            max_iter: cfg.max_iter,
            residual: ss.residual,
            iterations: ss.iterations,
            converged: ss.converged,
            monotone: ss.monotone,
            discrepancy: ss.discrepancy,
            multiple_fixed_points: ss.multiple_fixed_points,
        },
    )
}

#[derive(Serialize)]
struct Anomaly<'a> {
    source_id: &'a str,
    target_id: &'a str,
    influence: f64,
}

#[derive(Serialize)]
struct InfluenceSummary<'a> {
    params: ModelParams,
    params_source: ParamsSource,
    aggregation: Aggregation,
    kappa: f64,
    baseline_residual: f64,
    multiple_fixed_points: bool,
    category_degenerate: bool,
    anomalies: Vec<Anomaly<'a>>,
    category: &'a CategoryInfluence,
}

fn write_influence(
    s: &mut Session,
    net: &RiskNetwork,
    p: ModelParams,
    source: ParamsSource,
    opts: &InfluenceOptions,
    mf: &MeanFieldConfig,
) -> CliResult<InfluenceMatrix> {
    let l = net.likelihoods();
    let m = risk_influence(&net.graph, &l, &p, mf)?;
    let aggregation = match opts.aggregation {
        AggregationArg::Sum => Aggregation::Sum,
        AggregationArg::Mean => Aggregation::Mean,
    };
    let cat = category_influence(&m, &net.categories(), aggregation, opts.kappa)?;
    let ids = net.ids();

    let rows = m.iter().map(|(i, j, v)| vec![ids[i].clone(), ids[j].clone(), float(v)]);
    s.out.csv("influence.csv", &["source_id", "target_id", "influence"], rows)?;

    let mut cat_rows = Vec::with_capacity(25);
    for a in Category::ALL {
        for b in Category::ALL {
            let (x, y) = (a.index(), b.index());
            cat_rows.push(vec![
                a.as_str().to_string(),
                b.as_str().to_string(),
                float(cat.raw[x][y]),
                opt_float(cat.normalized.map(|n| n[x][y])),
                opt_float(cat.log_scaled.map(|n| n[x][y])),
            ]);
        }
    }
    s.out.csv(
        "category_influence.csv",
        &["source_cat", "target_cat", "raw", "normalized", "log_scaled"],
        cat_rows,
    )?;

    let f = &m.baseline_fractions;
    let frac_rows = (0..net.len()).map(|i| {
        vec![
            ids[i].clone(),
            float(m.baseline.p_hat[i]),
            opt_float(f.internal[i]),
            opt_float(f.external[i]),
            opt_float(f.recovery[i]),
        ]
    });
    s.out.csv(
        "transition_fractions.csv",
        &["risk_id", "p_hat", "internal", "external", "recovery"],
        frac_rows,
    )?;

    s.out.json(
        "influence.json",
        &InfluenceSummary {
            params: p,
            params_source: source,
            aggregation,
            kappa: opts.kappa,
            baseline_residual: m.baseline.residual,
            multiple_fixed_points: m.baseline.multiple_fixed_points,
            category_degenerate: cat.degenerate,
            anomalies: m
                .anomalies
                .iter()
                .map(|&(i, j, v)| Anomaly {
                    source_id: &ids[i],
                    target_id: &ids[j],
                    influence: v,
                })
                .collect(),
            category: &cat,
        },
    )?;
    Ok(m)
}

#[derive(Serialize)]
struct StatsOutput<'a> {
    year: &'a str,
    #[serde(flatten)]
    properties: carp_core::NetworkProperties,
}

fn write_stats(s: &mut Session, net: &RiskNetwork) -> CliResult<()> {
    s.out.json(
        "stats.json",
        &StatsOutput {
            year: &net.year,
            properties: compute_properties(&net.graph)?,
        },
    )
}

pub fn fit_cmd(s: &mut Session, a: &FitArgs) -> CliResult<()> {
    let net = network(s, &a.network)?;
    let h = history(s, &a.history, &net)?;
    let r = fit(&h, &net.graph, &net.likelihoods(), &fit_config(&a.fit)?)?;
    write_fit(s, &r, &h)
}

#[derive(Serialize)]
struct SimulateSummary {
    params: ModelParams,
    params_source: ParamsSource,
    initial: &'static str,
    horizon: u64,
    runs: usize,
    seed: u64,
    checkpoints: Vec<u64>,
}

pub fn simulate_cmd(s: &mut Session, a: &SimulateArgs) -> CliResult<()> {
    let net = network(s, &a.network)?;
    let h = a.history.as_deref().map(|p| history(s, p, &net)).transpose()?;
    let (p, source) = params(s, &a.params, h.as_ref(), &net, &a.fit)?;
    let model = CarpModel::from_network(&net, p)?;
    let (initial, label) = match &h {
        Some(h) => (NetworkState::from_active(h.column(h.month_count() - 1)), "history_last_month"),
        None => (NetworkState::passive(net.len()), "all_passive"),
    };
    let report = simulate_trajectory(&model, &initial, a.horizon, a.runs, a.seed)?;
    let ids = net.ids();

    let mut rows = Vec::with_capacity(report.checkpoints.len() * ids.len());
    for (c, t) in report.checkpoints.iter().enumerate() {
        for (i, id) in ids.iter().enumerate() {
            rows.push(vec![t.to_string(), id.clone(), float(report.mean[c][i])]);
        }
    }
    s.out.csv("trajectory.csv", &["t", "risk_id", "frequency"], rows)?;
    let stats = ids
        .iter()
        .enumerate()
        .map(|(i, id)| vec![id.clone(), float(report.terminal()[i]), float(report.mean_activations[i])]);
    s.out.csv("statistics.csv", &["risk_id", "freq_active", "freq_activation"], stats)?;
    s.out.json(
        "simulate.json",
        &SimulateSummary {
            params: p,
            params_source: source,
            initial: label,
            horizon: a.horizon,
            runs: a.runs,
            seed: a.seed,
            checkpoints: report.checkpoints.clone(),
        },
    )
}

pub fn steady_state_cmd(s: &mut Session, a: &SteadyStateArgs) -> CliResult<()> {
    let net = network(s, &a.network)?;
    let h = a.history.as_deref().map(|p| history(s, p, &net)).transpose()?;
    let (p, source) = params(s, &a.params, h.as_ref(), &net, &a.fit)?;
    let mf = meanfield_config(&a.meanfield)?;
    let ss = solve_steady_state(&net.likelihoods(), &p, &net.graph, &mf)?;
    write_steady_state(s, &net, &ss, p, source, &mf)
}

pub fn influence_cmd(s: &mut Session, a: &InfluenceArgs) -> CliResult<()> {
    let net = network(s, &a.network)?;
    let h = a.history.as_deref().map(|p| history(s, p, &net)).transpose()?;
    let (p, source) = params(s, &a.params, h.as_ref(), &net, &a.fit)?;
    let mf = meanfield_config(&a.meanfield)?;
    write_influence(s, &net, p, source, &a.influence, &mf).map(|_| ())
}

pub fn stats_cmd(s: &mut Session, a: &StatsArgs) -> CliResult<()> {
    let net = network(s, &a.network)?;
    write_stats(s, &net)
}

pub fn pipeline_cmd(s: &mut Session, a: &PipelineArgs) -> CliResult<()> {
    let year = match &a.year {
        Some(y) => y.clone(),
        None => a
            .dir
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| "network".to_string()),
    };
    let file = |name: &str| -> PathBuf { a.dir.join(name) };
    let net = load_network(s, &year, &file("risks.csv"), &file("pairs.csv"), &a.scale)?;
    let h = history(s, &file("history.csv"), &net)?;
    let r = fit(&h, &net.graph, &net.likelihoods(), &fit_config(&a.fit)?)?;
    write_fit(s, &r, &h)?;
    let mf = meanfield_config(&a.meanfield)?;
    let ss = solve_steady_state(&net.likelihoods(), &r.params, &net.graph, &mf)?;
    write_steady_state(s, &net, &ss, r.params, ParamsSource::Fitted, &mf)?;
    write_influence(s, &net, r.params, ParamsSource::Fitted, &a.influence, &mf)?;
    write_stats(s, &net)
}

#[derive(Serialize)]
struct Truth {
    alpha: f64,
    beta: f64,
    gamma: f64,
    seed: u64,
    spec: NetworkSpec,
    months: usize,
    tally: carp_core::engine::CauseTally,
    attribution: Option<AttributionFractions>,
}

pub fn generate_cmd(s: &mut Session, a: &GenerateArgs) -> CliResult<()> {
    let spec = NetworkSpec {
        year: a.year.clone(),
        risks: a.size,
        density: a.density,
        ..NetworkSpec::like_2013()
    };
    let p = ModelParams::new(a.alpha, a.beta, a.gamma)?;
    let f = build_fixture(&spec, p, a.months, a.seed)?;
    let mut buf = Vec::new();
    f.network.write_risks_csv(&mut buf)?;
    s.out.write("risks.csv", &buf)?;
    buf.clear();
    f.network.write_pairs_csv(&mut buf)?;
    s.out.write("pairs.csv", &buf)?;
    buf.clear();
    f.run.history.write_long_csv(&mut buf)?;
    s.out.write("history.csv", &buf)?;
    s.out.json(
        "truth.json",
        &Truth {
            alpha: p.alpha,
            beta: p.beta,
            gamma: p.gamma,
            seed: a.seed,
            spec,
            months: a.months,
            tally: f.run.tally,
            attribution: AttributionFractions::from_tally(&f.run.tally),
        },
    )
}

pub fn align_cmd(s: &mut Session, a: &AlignArgs) -> CliResult<()> {
    let sc = scale(&a.scale);
    s.input(&a.risks_a)?;
    s.input(&a.risks_b)?;
    let ra = load_risk_catalog(File::open(&a.risks_a)?, sc)?;
    let rb = load_risk_catalog(File::open(&a.risks_b)?, sc)?;
    let mapping = match &a.mapping {
        Some(p) => {
            s.input(p)?;
            CrossYearMapping::from_reader(File::open(p)?)?
        }
        None => CrossYearMapping::bundled(),
    };
    let report = map_cross_year(&a.year_a, &ra, &a.year_b, &rb, &mapping)?;
    s.out.json("alignment.json", &report)
}

#[derive(Serialize)]
struct Validated<'a, T: Serialize> {
    experiment: &'static str,
    params: ModelParams,
    params_source: ParamsSource,
    seed: u64,
    #[serde(flatten)]
    report: &'a T,
}

fn recovery_rows(r: &ValidationReport) -> Vec<Vec<String>> {
    r.replicates
        .iter()
        .map(|x| {
            vec![
                x.index.to_string(),
                float(x.params.alpha),
                float(x.params.beta),
                float(x.params.gamma),
                float(x.attribution.a),
                float(x.attribution.b),
                float(x.activation_param),
                float(x.recovery_param),
                float(x.ks),
                r.own.retained.contains(&x.index).to_string(),
            ]
        })
        .collect()
}

const RECOVERY_HEADER: [&str; 10] = [
    "replicate",
    "alpha",
    "beta",
    "gamma",
    "a",
    "b",
    "activation_param",
    "recovery_param",
    "ks",
    "retained",
];

impl Validated<'_, ()> {
    fn with<'b, T: Serialize>(&self, experiment: &'static str, report: &'b T) -> Validated<'b, T> {
        Validated {
            experiment,
            params: self.params,
            params_source: self.params_source,
            seed: self.seed,
            report,
        }
    }
}

#[derive(Serialize)]
struct ForwardOutput<'a> {
    recovery_seed: u64,
    forecast_seed: u64,
    recovery_activation_bound: f64,
    recovery_recovery_bound: f64,
    validation_sets: usize,
    forward: &'a carp_core::validation::ForwardReport,
}

pub fn validate_cmd(s: &mut Session, a: &ValidateArgs) -> CliResult<()> {
    let net = network(s, &a.network)?;
    let h = history(s, &a.history, &net)?;
    let (p, source) = params(s, &a.params, Some(&h), &net, &a.fit)?;
    let fit_cfg = fit_config(&a.fit)?;
    let l = net.likelihoods();
    let g = &net.graph;
    let ids = net.ids();
    let head = Validated {
        experiment: "",
        params: p,
        params_source: source,
        seed: a.seed,
        report: &(),
    };
    match a.experiment {
        Experiment::Recovery => {
            let cfg = RecoveryConfig {
                replicates: a.replicates,
                seed: a.seed,
                fit: fit_cfg,
            };
            let r = recovery_experiment(g, &l, &h, &p, None, &cfg)?;
            s.out.json("recovery.json", &head.with("recovery", &r))?;
            s.out.csv("recovery_replicates.csv", &RECOVERY_HEADER, recovery_rows(&r))?;
        }
        Experiment::Forward => {
            let recovery_seed = child_seed(a.seed, 1);
            let forecast_seed = child_seed(a.seed, 2);
            let cfg = RecoveryConfig {
                replicates: a.replicates,
                seed: recovery_seed,
                fit: fit_cfg,
            };
            let r = recovery_experiment(g, &l, &h, &p, None, &cfg)?;
            let sets: Vec<ModelParams> = r
                .replicates
                .iter()
                .filter(|x| r.own.retained.contains(&x.index))
                .map(|x| x.params)
                .collect();
            let fw = forward_error_bounds(g, &l, &h, &p, &sets, a.months, a.runs, forecast_seed)?;
            let out = ForwardOutput {
                recovery_seed,
                forecast_seed,
                recovery_activation_bound: r.own.activation_bound,
                recovery_recovery_bound: r.own.recovery_bound,
                validation_sets: sets.len(),
                forward: &fw,
            };
            s.out.json("forward.json", &head.with("forward", &out))?;
            s.out.csv("recovery_replicates.csv", &RECOVERY_HEADER, recovery_rows(&r))?;
            let band = |t: usize, f: fn(&carp_core::validation::ForwardStatistics, usize) -> f64| {
                let vals: Vec<f64> = fw.validation.iter().map(|v| f(v, t)).collect();
                let mean = vals.iter().sum::<f64>() / vals.len() as f64;
                let high = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let low = vals.iter().copied().fold(f64::INFINITY, f64::min);
                [f(&fw.ground_truth, t), mean, high, low].map(float)
            };
            let rows = (0..a.months).map(|t| {
                let mut row = vec![(t + 1).to_string()];
                row.extend(band(t, |v, t| v.monthly_active[t]));
                row.extend(band(t, |v, t| v.monthly_activations[t]));
                row
            });
            s.out.csv(
                "forward.csv",
                &[
                    "month",
                    "truth_active",
                    "mean_active",
                    "high_active",
                    "low_active",
                    "truth_activation",
                    "mean_activation",
                    "high_activation",
                    "low_activation",
                ],
                rows,
            )?;
        }
        Experiment::NetworkEffect => {
            let r = network_effect_comparison(g, &l, &h, &p, a.runs, a.seed, &fit_cfg)?;
            s.out.json("network_effect.json", &head.with("network-effect", &r))?;
            let rows = (0..r.observed.len()).map(|t| {
                vec![
                    (t + 1).to_string(),
                    r.observed[t].to_string(),
                    float(r.network.mean[t]),
                    float(r.network.std_dev[t]),
                    float(r.independent.mean[t]),
                    float(r.independent.std_dev[t]),
                ]
            });
            s.out.csv(
                "network_effect.csv",
                &["step", "observed", "network_mean", "network_std", "independent_mean", "independent_std"],
                rows,
            )?;
        }
        Experiment::Sensitivity => {
            let mf = meanfield_config(&a.meanfield)?;
            let r = sensitivity_suite(g, &l, &h, &p, a.fraction, a.seed, &fit_cfg, &mf)?;
            s.out.json("sensitivity.json", &head.with("sensitivity", &r))?;
            let mut order: Vec<usize> = (0..ids.len()).collect();
            order.sort_by(|&x, &y| r.baseline[y].total_cmp(&r.baseline[x]).then(x.cmp(&y)));
            let rows = order.into_iter().map(|i| {
                vec![
                    ids[i].clone(),
                    float(r.baseline[i]),
                    float(r.single_likelihood[i]),
                    float(r.single_history[i]),
                    float(r.all_likelihood[i]),
                    float(r.all_history[i]),
                ]
            });
            s.out.csv(
                "sensitivity.csv",
                &["risk_id", "baseline", "single_likelihood", "single_history", "all_likelihood", "all_history"],
                rows,
            )?;
        }
    }
    Ok(())
}
