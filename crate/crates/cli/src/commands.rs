use std::fs;
use std::io::Write;
use std::path::Path;

use serde_json::json;
use wlasso::io::{
    json_string, load_csv_table, load_run_config, report_to_csv_string, report_to_json_string, write_report, CsvSpec,
    Format, NaPolicy, Report, ResponseColumn, RunConfig, SimGrid,
};
use wlasso::sim::{paper_grid, run_simulation, Pattern, SimConfig};
use wlasso::solver::{fit_from, Algorithm};
use wlasso::theory::{
    beta_min_threshold, failure_probability, l1_error_bounds, prediction_error_bounds, s_constant, BoundInputs,
};
use wlasso::tuning::{
    cross_validate, lambda_max, lasso_pilot, loocv, loocv_refit, select_weights_and_lambda, threshold_coefficients,
    theoretical_lambda_floor, LambdaPath, LossKind,
};
use wlasso::weights::compute_weights;
use wlasso::{normalize, Dataset, Error, Result, SolverConfig, WeightConfig, WeightScheme, WeightVector};

use crate::args::{
    AlgorithmArg, BoundsArgs, Cli, Command, CvArgs, DataArgs, FitArgs, FormatArg, LoocvArgs, NaPolicyArg,
    SimulateArgs, SolverArgs, WeightArgs, WeightsArgs,
};

pub enum Outcome {
    Converged,
    NotConverged,
}

impl Outcome {
    fn from_flag(converged: bool) -> Self {
        if converged {
            Outcome::Converged
        } else {
            Outcome::NotConverged
        }
    }
}

pub fn run(cli: Cli) -> Result<Outcome> {
    let config = match &cli.config {
        Some(path) => load_run_config(path)?,
        None => RunConfig::default(),
    };
    match cli.command {
        Command::Fit(a) => cmd_fit(&config, a),
        Command::Cv(a) => cmd_cv(&config, a),
        Command::Loocv(a) => cmd_loocv(&config, a),
        Command::Weights(a) => cmd_weights(&config, a),
        Command::Simulate(a) => cmd_simulate(&config, a),
        Command::Bounds(a) => cmd_bounds(a),
    }
}

fn load_data(a: &DataArgs) -> Result<Dataset> {
    let mut spec = CsvSpec::new(&a.data);
    spec.response_column = match a.response.parse::<usize>() {
        Ok(i) => ResponseColumn::Index(i),
        Err(_) => ResponseColumn::Name(a.response.clone()),
    };
    if !a.delimiter.is_ascii() {
        return Err(Error::InvalidInput(format!("delimiter '{}' is not a single byte", a.delimiter)));
    }
    spec.delimiter = a.delimiter as u8;
    spec.has_header = !a.no_header;
    spec.na_policy = match a.na_policy {
        NaPolicyArg::Error => NaPolicy::Error,
        NaPolicyArg::Drop => NaPolicy::DropRow,
    };
    spec.label_map = a.label_map.as_deref().map(str::parse).transpose()?;
    Ok(load_csv_table(&spec)?.data)
}

fn solver_config(base: &RunConfig, a: &SolverArgs) -> Result<SolverConfig> {
    let mut cfg = base.solver.clone();
    if let Some(v) = a.max_iter {
        cfg.max_iter = v;
    }
    if let Some(v) = a.tol_kkt {
        cfg.tol_kkt = v;
    }
    if let Some(v) = a.tol_obj {
        cfg.tol_obj = v;
    }
    if let Some(alg) = a.algorithm {
        cfg.algorithm = match alg {
            AlgorithmArg::Fista => Algorithm::ProxGradFista,
            AlgorithmArg::Transform => Algorithm::TransformThenUnweighted,
        };
    }
    cfg.fit_intercept |= a.intercept;
    cfg.validate()?;
    Ok(cfg)
}

fn weight_config(base: &RunConfig, a: &WeightArgs) -> Result<(WeightScheme, WeightConfig)> {
    let scheme: WeightScheme = a.weights.parse()?;
    let mut cfg = base.weights.clone();
    if let Some(r) = a.r {
        cfg.r = r;
    }
    if a.pilot_lambda.is_some() {
        cfg.lasso_pilot_lambda = a.pilot_lambda;
    }
    cfg.validate()?;
    Ok((scheme, cfg))
}

fn folds_or(base: &RunConfig, folds: Option<usize>) -> usize {
    folds.unwrap_or(base.tuning.folds)
}

fn seed_or(base: &RunConfig, seed: Option<u64>) -> u64 {
    seed.unwrap_or(base.seed)
}

/// `Some(lambda)` for a number, `None` for the literal `cv`.
fn parse_lambda(s: &str) -> Result<Option<f64>> {
    if s.eq_ignore_ascii_case("cv") {
        return Ok(None);
    }
    match s.parse::<f64>() {
        Ok(v) if v >= 0.0 && v.is_finite() => Ok(Some(v)),
        _ => Err(Error::InvalidInput(format!("--lambda must be a non-negative number or 'cv', got '{s}'"))),
    }
}

/// Normalized weights for `scheme`; the Type IV pilot is fitted here.
fn scheme_weights(
    data: &Dataset,
    scheme: WeightScheme,
    wcfg: &WeightConfig,
    folds: usize,
    seed: u64,
    cfg: &SolverConfig,
) -> Result<WeightVector> {
    let pilot = match scheme {
        WeightScheme::TypeIV => Some(lasso_pilot(data, wcfg, folds, seed, cfg)?),
        _ => None,
    };
    Ok(normalize(&compute_weights(scheme, data, wcfg, pilot.as_ref())?))
}

fn weights_and_lambda(
    data: &Dataset,
    scheme: WeightScheme,
    wcfg: &WeightConfig,
    lambda: Option<f64>,
    folds: usize,
    seed: u64,
    cfg: &SolverConfig,
) -> Result<(WeightVector, f64)> {
    match lambda {
        Some(l) => Ok((scheme_weights(data, scheme, wcfg, folds, seed, cfg)?, l)),
        None => {
            let sel = select_weights_and_lambda(data, scheme, wcfg, folds, seed, cfg)?;
            Ok((sel.weights, sel.lambda))
        }
    }
}

fn emit_text(body: &str, out: Option<&Path>) -> Result<()> {
    match out {
        Some(path) => fs::write(path, body)?,
        None => std::io::stdout().write_all(body.as_bytes())?,
    }
    Ok(())
}

fn emit_report(report: &dyn Report, out: Option<&Path>, format: FormatArg) -> Result<()> {
    let body = match format {
        FormatArg::Json => report_to_json_string(report)?,
        FormatArg::Csv => report_to_csv_string(report)?,
    };
    emit_text(&body, out)
}

fn cmd_fit(base: &RunConfig, a: FitArgs) -> Result<Outcome> {
    let data = load_data(&a.data)?;
    let cfg = solver_config(base, &a.solver)?;
    let (scheme, wcfg) = weight_config(base, &a.weights)?;
    let lambda = parse_lambda(&a.lambda)?;
    if a.limit.is_nan() || a.limit < 0.0 {
        return Err(Error::InvalidInput(format!("--limit must be non-negative, got {}", a.limit)));
    }
    let folds = folds_or(base, a.folds);
    let seed = seed_or(base, a.seed);

    let (w, lambda) = weights_and_lambda(&data, scheme, &wcfg, lambda, folds, seed, &cfg)?;
    let mut result = fit_from(&data, &w, lambda, &cfg, None)?;
    if !result.converged {
        log::warn!(
            "fit did not converge in {} iterations (KKT violation {:e})",
            result.iterations,
            result.kkt_max_violation
        );
    }
    if a.limit > 0.0 {
        result.coef = threshold_coefficients(&result.coef, a.limit)?.0;
    }
    emit_report(&result, a.out.as_deref(), a.format)?;
    Ok(Outcome::from_flag(result.converged))
}

fn cmd_cv(base: &RunConfig, a: CvArgs) -> Result<Outcome> {
    let data = load_data(&a.data)?;
    let cfg = solver_config(base, &a.solver)?;
    let (scheme, wcfg) = weight_config(base, &a.weights)?;
    let folds = folds_or(base, a.folds);
    let seed = seed_or(base, a.seed);
    let loss: LossKind = match &a.loss {
        Some(s) => s.parse()?,
        None => base.tuning.loss,
    };
    let n_lambda = a.n_lambda.unwrap_or(base.tuning.n_lambda);
    let min_ratio = a.min_ratio.unwrap_or(base.tuning.min_ratio);

    let w = scheme_weights(&data, scheme, &wcfg, folds, seed, &cfg)?;
    let path = LambdaPath::log_spaced(lambda_max(&data, &w, cfg.fit_intercept)?, n_lambda, min_ratio)?;
    let report = cross_validate(&data, &w, &path, folds, loss, seed, &cfg)?;
    if report.nonconverged_fits > 0 {
        log::warn!("{} fold fits did not converge", report.nonconverged_fits);
    }
    emit_report(&report, a.out.as_deref(), a.format)?;
    Ok(Outcome::from_flag(report.nonconverged_fits == 0))
}

fn cmd_loocv(base: &RunConfig, a: LoocvArgs) -> Result<Outcome> {
    let data = load_data(&a.data)?;
    let cfg = solver_config(base, &a.solver)?;
    let (scheme, wcfg) = weight_config(base, &a.weights)?;
    let folds = folds_or(base, a.folds);
    let seed = seed_or(base, a.seed);

    let (summary, lambda) = if a.refit {
        (loocv_refit(&data, scheme, &wcfg, folds, a.limit, seed, &cfg)?, None)
    } else {
        let lambda = parse_lambda(&a.lambda)?;
        let (w, lambda) = weights_and_lambda(&data, scheme, &wcfg, lambda, folds, seed, &cfg)?;
        (loocv(&data, &w, lambda, a.limit, &cfg)?, Some(lambda))
    };
    if !summary.failed.is_empty() {
        log::warn!("{} held-out fits did not converge and were excluded", summary.failed.len());
    }
    let mut value = serde_json::to_value(&summary)?;
    value["scheme"] = json!(scheme);
    value["lambda"] = json!(lambda);
    value["refit"] = json!(a.refit);
    value["limit"] = json!(a.limit);
    emit_text(&json_string(value)?, a.out.as_deref())?;
    Ok(Outcome::from_flag(summary.failed.is_empty()))
}

fn cmd_weights(base: &RunConfig, a: WeightsArgs) -> Result<Outcome> {
    let data = load_data(&a.data)?;
    let cfg = solver_config(base, &a.solver)?;
    let (scheme, wcfg) = weight_config(base, &a.weights)?;
    let pilot = match scheme {
        WeightScheme::TypeIV => Some(lasso_pilot(&data, &wcfg, folds_or(base, a.folds), seed_or(base, a.seed), &cfg)?),
        _ => None,
    };
    let mut w = compute_weights(scheme, &data, &wcfg, pilot.as_ref())?;
    if a.normalize {
        w = normalize(&w);
    }
    let value = json!({
        "scheme": w.scheme,
        "normalized": w.normalized,
        "weights": w.w.to_vec(),
        "min": w.min(),
        "max": w.max(),
    });
    emit_text(&json_string(value)?, a.out.as_deref())?;
    Ok(Outcome::Converged)
}

fn sim_config(base: &RunConfig, a: &SimulateArgs) -> Result<SimConfig> {
    let mut cfg = base.sim.clone();
    if let Some(pattern) = a.pattern {
        cfg.pattern = match pattern {
            1 => Pattern::Pattern1,
            2 => Pattern::Pattern2,
            other => return Err(Error::InvalidInput(format!("--pattern must be 1 or 2, got {other}"))),
        };
    }
    if let Some(p) = a.p {
        cfg.p = p;
    }
    if let Some(rho) = a.rho {
        cfg.rho = rho;
    }
    if let Some(r) = a.replicates {
        cfg.n_replicates = r;
    }
    if let Some(n) = a.n_train {
        cfg.n_train = n;
    }
    if let Some(n) = a.n_test {
        cfg.n_test = n;
    }
    if let Some(methods) = &a.methods {
        cfg.methods = methods.iter().map(|m| m.parse()).collect::<Result<_>>()?;
    }
    cfg.seed = a.seed.unwrap_or(cfg.seed);
    cfg.validate()?;
    Ok(cfg)
}

fn config_stem(cfg: &SimConfig) -> String {
    format!("sim_pattern{}_p{}_rho{}", cfg.pattern, cfg.p, cfg.rho)
}

fn cmd_simulate(base: &RunConfig, a: SimulateArgs) -> Result<Outcome> {
    let cfg = sim_config(base, &a)?;
    let configs = if a.grid { paper_grid(&cfg) } else { vec![cfg] };
    fs::create_dir_all(&a.out)?;
    let mut reports = Vec::with_capacity(configs.len());
    for c in &configs {
        log::info!("simulating {}", config_stem(c));
        let report = run_simulation(c)?;
        let stem = config_stem(c);
        write_report(&report, a.out.join(format!("{stem}.json")), Format::Json)?;
        write_report(&report, a.out.join(format!("{stem}.csv")), Format::Csv)?;
        for (r, m, msg) in &report.failures {
            log::warn!("{stem}: replicate {r} ({m:?}) failed: {msg}");
        }
        reports.push(report);
    }
    write_report(&SimGrid(&reports), a.out.join("summary.csv"), Format::Csv)?;
    Ok(Outcome::Converged)
}

fn cmd_bounds(a: BoundsArgs) -> Result<Outcome> {
    let floor = theoretical_lambda_floor(a.l_bound, a.a, a.wmin, a.n, a.p);
    let inputs = BoundInputs {
        l_bound: a.l_bound,
        b_radius: a.b_radius,
        a: a.a,
        lambda: a.lambda.unwrap_or(floor),
        d_star: a.dstar,
        k: a.k,
        eps_n: a.eps,
        w_min: a.wmin,
        w_max: a.wmax.unwrap_or(a.wmin),
        wh_sq: a.wh_sq.unwrap_or(a.dstar as f64 * a.wmin * a.wmin),
        n: a.n,
        p: a.p,
    };
    inputs.validate()?;
    let l1 = l1_error_bounds(&inputs)?;
    let pred = prediction_error_bounds(&inputs, a.b_star)?;
    let beta_min = beta_min_threshold(&inputs, a.delta)?;
    let value = json!({
        "inputs": inputs,
        "s": s_constant(a.l_bound, a.b_radius),
        "lambda_floor": floor,
        "below_floor": inputs.below_floor(),
        "l1_stabil_bound": l1.stabil_bound,
        "l1_weighted_stabil_bound": l1.weighted_stabil_bound,
        "prediction_stabil_bound": pred.stabil_bound,
        "prediction_weighted_stabil_bound": pred.weighted_stabil_bound,
        "weight_condition": pred.weight_condition,
        "b0": beta_min.b0,
        "p_delta": beta_min.p_delta,
        "failure_probability": failure_probability(a.p, a.a),
    });
    emit_text(&json_string(value)?, None)?;
    Ok(Outcome::Converged)
}
