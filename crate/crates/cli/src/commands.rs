use std::io::Write;
use std::path::PathBuf;

use gaitscope::compare::{compare_truncations, write_comparison_csv};
use gaitscope::env::{ToyEnv, D_ACT, D_OBS};
use gaitscope::fixed_points::{
    analyze, local_gradient_field, unforced_rollout, write_decay_csv, write_eigen_csv,
    write_field_csv, zero_input_vector, FixedPointOptions, InitScheme,
};
use gaitscope::pca::{
    collect_rollouts, explained_variance_report, fit_pca, PcBasis, RolloutDataset,
};
use gaitscope::perturb::{
    class_contrast, classify_tangentiality, neural_perturbation_experiment, nominal_period,
    nominal_rollout, phase_response_curve, physical_perturbation_trial, robustness_grid,
    write_pair_csv, PhysicalPerturbationSpec, ResponsePoint,
};
use gaitscope::policy::{load_weights, weights_to_json};
use gaitscope::train::{initial_net, train_with};
use gaitscope::PolicyNet;
use nalgebra::DVector;
use serde_json::json;

use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};
use crate::output::{Meta, Outputs};

fn outputs(cfg: &ExperimentConfig) -> CliResult<Outputs> {
    Outputs::create(&cfg.paths.out_dir, Meta::new(cfg.hash(), cfg.seed))
}

fn env(cfg: &ExperimentConfig) -> CliResult<ToyEnv> {
    Ok(ToyEnv::new(cfg.env.clone())?)
}

fn check_policy_dims(net: &PolicyNet) -> CliResult<()> {
    for (what, expected, got) in [
        ("policy observation width", D_OBS, net.dims.d_obs),
        ("policy action width", D_ACT, net.dims.d_act),
    ] {
        if expected != got {
            return Err(CliError::Core(gaitscope::Error::Dimension {
                what,
                expected,
                got,
            }));
        }
    }
    Ok(())
}

fn require_net(cfg: &ExperimentConfig) -> CliResult<PolicyNet> {
    let path = cfg
        .paths
        .weights
        .as_ref()
        .ok_or_else(|| CliError::Config("paths.weights is required for this command".into()))?;
    let net = load_weights(path).map_err(|e| match e {
        gaitscope::Error::Io(io) => CliError::MissingInput {
            what: "weights",
            path: path.clone(),
            reason: io.to_string(),
        },
        other => other.into(),
    })?;
    check_policy_dims(&net)?;
    Ok(net)
}

fn read_file(what: &'static str, path: &PathBuf) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::MissingInput {
        what,
        path: path.clone(),
        reason: e.to_string(),
    })
}

fn load_dataset(cfg: &ExperimentConfig) -> CliResult<Option<RolloutDataset>> {
    match &cfg.paths.dataset {
        Some(p) => Ok(Some(RolloutDataset::read_csv(
            read_file("dataset", p)?.as_bytes(),
        )?)),
        None => Ok(None),
    }
}

/// The configured basis, or one fitted to fresh rollouts of `net`.
fn basis_for(cfg: &ExperimentConfig, net: &PolicyNet, env: &ToyEnv) -> CliResult<PcBasis> {
    let basis = match &cfg.paths.basis {
        Some(p) => PcBasis::from_json(&read_file("basis", p)?)?,
        None => fit_pca(&collect_rollouts(net, env, &cfg.rollout, cfg.seed)?)?.basis,
    };
    if basis.dim() != net.dims.state_len() {
        return Err(CliError::Core(gaitscope::Error::Dimension {
            what: "basis width",
            expected: net.dims.state_len(),
            got: basis.dim(),
        }));
    }
    Ok(basis)
}

pub fn train(cfg: &ExperimentConfig) -> CliResult<Vec<PathBuf>> {
    cfg.validate_common()?;
    cfg.train.validate()?;
    let env = env(cfg)?;
    let init = match &cfg.paths.weights {
        Some(_) => require_net(cfg)?,
        None => {
            let net = initial_net(cfg.dims.clone(), cfg.seed)?;
            check_policy_dims(&net)?;
            net
        }
    };
    let mut out = outputs(cfg)?;
    let every = cfg.checkpoint_every;
    let (net, report) = train_with(init, &env, &cfg.train, |epoch, net, _| {
        if every == 0 || (epoch + 1) % every != 0 {
            return Ok(None);
        }
        let name = format!("checkpoints/epoch_{:04}.json", epoch + 1);
        out.with_sidecar(&name, &weights_to_json(net)?)
            .map_err(|e| gaitscope::Error::Io(std::io::Error::other(e.to_string())))?;
        Ok(Some(name))
    })?;
    out.with_sidecar("weights.json", &weights_to_json(&net)?)?;
    out.json(
        "train_report.json",
        json!({ "report": report, "train": cfg.train }),
    )?;
    out.csv("loss.csv", |buf| {
        let mut w = csv::Writer::from_writer(buf);
        w.write_record(["epoch", "loss"])?;
        for (e, l) in report.loss_curve.iter().enumerate() {
            w.write_record([e.to_string(), l.to_string()])?;
        }
        w.flush()?;
        Ok(())
    })?;
    Ok(out.written().to_vec())
}

pub fn rollout(cfg: &ExperimentConfig) -> CliResult<Vec<PathBuf>> {
    cfg.validate_common()?;
    cfg.rollout.validate()?;
    let net = require_net(cfg)?;
    let env = env(cfg)?;
    let ds = collect_rollouts(&net, &env, &cfg.rollout, cfg.seed)?;
    let mut out = outputs(cfg)?;
    out.csv("dataset.csv", |buf| ds.write_csv(buf))?;
    Ok(out.written().to_vec())
}

pub fn pca(cfg: &ExperimentConfig) -> CliResult<Vec<PathBuf>> {
    cfg.validate_common()?;
    cfg.rollout.validate()?;
    let ds = match load_dataset(cfg)? {
        Some(ds) => ds,
        None => {
            let net = require_net(cfg)?;
            collect_rollouts(&net, &env(cfg)?, &cfg.rollout, cfg.seed)?
        }
    };
    let fit = fit_pca(&ds)?;
    if fit.rank_deficient {
        eprintln!(
            "warning: dataset is rank deficient (rank {} of {}); trailing variances set to 0",
            fit.rank,
            fit.basis.dim()
        );
    }
    let mut out = outputs(cfg)?;
    out.with_sidecar("basis.json", &fit.basis.to_json()?)?;
    out.csv("variance.csv", |buf| {
        let mut w = csv::Writer::from_writer(buf);
        w.write_record(["pc", "variance", "fraction", "cumulative"])?;
        for (row, v) in explained_variance_report(&fit.basis)
            .iter()
            .zip(fit.basis.variances.iter())
        {
            w.write_record([
                row.pc.to_string(),
                v.to_string(),
                row.fraction.to_string(),
                row.cumulative.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    })?;
    out.json(
        "pca_summary.json",
        json!({ "rows": ds.rows(), "rank": fit.rank, "rank_deficient": fit.rank_deficient, "source_hash": fit.basis.source_hash }),
    )?;
    Ok(out.written().to_vec())
}

pub fn fixed_points(cfg: &ExperimentConfig) -> CliResult<Vec<PathBuf>> {
    cfg.validate_common()?;
    cfg.rollout.validate()?;
    let fp = &cfg.fixed_points;
    fp.options.validate()?;
    if fp.n_inits == 0
        || !(fp.merge_radius > 0.0)
        || !(fp.tol_marginal >= 0.0)
        || !(fp.init_inflate >= 0.0)
    {
        return Err(CliError::Config(
            "fixed_points needs n_inits >= 1, merge_radius > 0, tol_marginal >= 0 and init_inflate >= 0".into(),
        ));
    }
    if fp.decay_steps == 0 || fp.field.resolution == 0 {
        return Err(CliError::Config(
            "fixed_points.decay_steps and field.resolution must be positive".into(),
        ));
    }
    let net = require_net(cfg)?;
    let env = env(cfg)?;
    let ds = match load_dataset(cfg)? {
        Some(ds) => ds,
        None => collect_rollouts(&net, &env, &cfg.rollout, cfg.seed)?,
    };
    if ds.width() != net.dims.state_len() {
        return Err(CliError::Core(gaitscope::Error::Dimension {
            what: "dataset width",
            expected: net.dims.state_len(),
            got: ds.width(),
        }));
    }
    let basis = basis_for(cfg, &net, &env)?;
    let states: Vec<DVector<f64>> = ds.data.row_iter().map(|r| r.transpose()).collect();
    let opts = FixedPointOptions {
        init: InitScheme::from_states(&states, fp.init_inflate)?,
        ..fp.options.clone()
    };
    let x = zero_input_vector(&net);
    let analysis = analyze(
        &net,
        &x,
        fp.n_inits,
        &opts,
        fp.merge_radius,
        fp.tol_marginal,
        cfg.seed,
    )?;
    let fields = analysis
        .reports
        .iter()
        .map(|r| local_gradient_field(&net, &x, &r.state, &basis, fp.field))
        .collect::<gaitscope::Result<Vec<_>>>()?;
    let start = states.last().expect("dataset has rows");
    let decay = unforced_rollout(&net, &x, start, fp.decay_steps)?;
    let end = decay.last().expect("decay has states");
    let target = analysis
        .reports
        .iter()
        .min_by(|a, b| (&a.state - end).norm().total_cmp(&(&b.state - end).norm()))
        .map_or_else(|| end.clone(), |r| r.state.clone());

    let mut out = outputs(cfg)?;
    out.json("fixed_points.json", analysis.to_json_value())?;
    out.csv("eigenvalues.csv", |buf| {
        write_eigen_csv(&analysis.reports, buf)
    })?;
    for (i, f) in fields.iter().enumerate() {
        out.csv(&format!("field_fp{i}.csv"), |buf| write_field_csv(f, buf))?;
    }
    out.csv("decay.csv", |buf| {
        write_decay_csv(&decay, &basis, &target, buf)
    })?;
    Ok(out.written().to_vec())
}

fn write_response_csv(points: &[ResponsePoint], buf: &mut Vec<u8>) -> gaitscope::Result<()> {
    let mut w = csv::Writer::from_writer(buf);
    w.write_record([
        "t_apply",
        "tangentiality",
        "class",
        "phase_shift_rad",
        "max_deviation",
    ])?;
    for p in points {
        let class = serde_json::to_value(classify_tangentiality(p.tangentiality))?;
        w.write_record([
            p.t_apply.to_string(),
            p.tangentiality.to_string(),
            class.as_str().unwrap_or_default().to_string(),
            p.phase_shift_rad
                .map_or_else(String::new, |v| v.to_string()),
            p.max_deviation.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn perturb_neural(cfg: &ExperimentConfig) -> CliResult<Vec<PathBuf>> {
    cfg.validate_common()?;
    cfg.rollout.validate()?;
    let block = &cfg.neural;
    block.experiment.validate()?;
    let net = require_net(cfg)?;
    let env = env(cfg)?;
    let basis = basis_for(cfg, &net, &env)?;
    block.spec.validate(&basis, block.experiment.warmup)?;
    if block.spec.t_apply >= block.experiment.steps {
        return Err(CliError::Config(
            "neural.spec.t_apply must precede the end of the rollout".into(),
        ));
    }
    let pair = neural_perturbation_experiment(
        &net,
        &env,
        &basis,
        &block.spec,
        &block.experiment,
        cfg.seed,
    )?;
    let count = match block.response_steps {
        Some(n) => n,
        None => {
            let nominal = nominal_rollout(&net, &env, &block.experiment, cfg.seed)?;
            nominal_period(&basis, &nominal, block.experiment.warmup)?
        }
    };
    if block.spec.t_apply + count > block.experiment.steps {
        return Err(CliError::Config(format!(
            "phase-response window {}..{} runs past the {}-step rollout",
            block.spec.t_apply,
            block.spec.t_apply + count,
            block.experiment.steps
        )));
    }
    let response = if count > 0 {
        phase_response_curve(
            &net,
            &env,
            &basis,
            &block.spec,
            count,
            &block.experiment,
            cfg.seed,
        )?
    } else {
        Vec::new()
    };

    let mut out = outputs(cfg)?;
    out.csv("trace_pair.csv", |buf| pair.write_csv(&basis, buf))?;
    let mut metrics = json!({ "spec": pair.spec, "metrics": pair.metrics });
    if !response.is_empty() {
        let cc = class_contrast(&response);
        metrics["class_contrast"] = json!({
            "n_tangential": cc.n_tangential,
            "n_orthogonal": cc.n_orthogonal,
            "tangential_mean_abs_shift": cc.tangential_mean_abs_shift,
            "orthogonal_mean_abs_shift": cc.orthogonal_mean_abs_shift,
            "ratio": cc.ratio(),
        });
        out.csv("phase_response.csv", |buf| {
            write_response_csv(&response, buf)
        })?;
    }
    out.json("metrics.json", metrics)?;
    Ok(out.written().to_vec())
}

pub fn perturb_physical(cfg: &ExperimentConfig) -> CliResult<Vec<PathBuf>> {
    cfg.validate_common()?;
    cfg.rollout.validate()?;
    let block = &cfg.physical;
    block.trial.recovery.validate()?;
    if !block.spec.magnitude_bw.is_finite() || !(block.spec.duration_ms >= 0.0) {
        return Err(CliError::Config(
            "physical.spec needs a finite magnitude and non-negative duration".into(),
        ));
    }
    let net = require_net(cfg)?;
    let env = env(cfg)?;
    let basis = basis_for(cfg, &net, &env)?;
    let pushed = physical_perturbation_trial(&net, &env, &block.spec, &block.trial, cfg.seed)?;
    let unpushed_spec = PhysicalPerturbationSpec {
        magnitude_bw: 0.0,
        ..block.spec
    };
    let unpushed = physical_perturbation_trial(&net, &env, &unpushed_spec, &block.trial, cfg.seed)?;

    let mut out = outputs(cfg)?;
    out.csv("trace.csv", |buf| pushed.trace.write_csv(buf))?;
    out.csv("trace_pair.csv", |buf| {
        write_pair_csv(&basis, &unpushed.trace, &pushed.trace, buf)
    })?;
    out.json(
        "outcome.json",
        json!({
            "spec": block.spec,
            "recovered": pushed.recovered,
            "fell": pushed.fell,
            "recovery_step": pushed.recovery_step,
        }),
    )?;
    Ok(out.written().to_vec())
}

pub fn robustness(cfg: &ExperimentConfig) -> CliResult<Vec<PathBuf>> {
    cfg.validate_common()?;
    cfg.grid.validate()?;
    let net = require_net(cfg)?;
    let env = env(cfg)?;
    let grid = robustness_grid(&net, &env, &cfg.grid, cfg.seed)?;
    let mut out = outputs(cfg)?;
    out.csv("grid.csv", |buf| grid.write_csv(buf))?;
    Ok(out.written().to_vec())
}

pub fn bptt_compare(cfg: &ExperimentConfig) -> CliResult<Vec<PathBuf>> {
    cfg.validate_common()?;
    cfg.grid.validate()?;
    if cfg.compare.k_values.is_empty() {
        return Err(CliError::Config(
            "compare.k_values must not be empty".into(),
        ));
    }
    for &k in &cfg.compare.k_values {
        let mut t = cfg.train.clone();
        t.k_trunc = k;
        t.validate()?;
    }
    let env = env(cfg)?;
    check_policy_dims(&initial_net(cfg.dims.clone(), cfg.seed)?)?;
    let runs = compare_truncations(
        &env,
        &cfg.dims,
        &cfg.train,
        &cfg.compare.k_values,
        &cfg.grid,
        cfg.seed,
    )?;
    let rows: Vec<_> = runs.iter().map(|r| r.row.clone()).collect();
    let mut out = outputs(cfg)?;
    out.csv("comparison.csv", |buf| write_comparison_csv(&rows, buf))?;
    for run in &runs {
        let k = run.row.k_trunc;
        out.with_sidecar(&format!("weights_k{k}.json"), &weights_to_json(&run.net)?)?;
        out.csv(&format!("grid_k{k}.csv"), |buf| run.grid.write_csv(buf))?;
        out.json(
            &format!("train_report_k{k}.json"),
            json!({ "report": run.report }),
        )?;
    }
    let mut stdout = std::io::stdout().lock();
    for r in &rows {
        let _ = writeln!(
            stdout,
            "k_trunc={} summed_fraction={:.3}",
            r.k_trunc, r.summed_fraction
        );
    }
    Ok(out.written().to_vec())
}
