use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use mrf_spg::bounds::{influence_matrix, GrandSums};
use mrf_spg::eval::{
    generate_ground_truth, sample_dataset, scored_run, structure_auc, GroundTruth, ScoredRun, WeightBand,
    SYNTHETIC_STRATEGIES,
};
use mrf_spg::exact;
use mrf_spg::gibbs::sample_states;
use mrf_spg::io::{self as mio, RunConfig, TraceRow};
use mrf_spg::optimizer::{run_spg, SpgConfig};
use mrf_spg::{Assignment, Dataset, MrfError, Result};
use serde_json::json;

use crate::{BoundsArgs, EvalArgs, GenerateArgs, LearnArgs, OracleArgs, OracleOp, SampleArgs, SyntheticArgs};

const CONFIG_FILE: &str = "run_config.json";

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    Ok(())
}

fn write_json(path: Option<&Path>, value: &serde_json::Value) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match path {
        Some(path) => {
            ensure_parent(path)?;
            fs::write(path, text + "\n")?;
        }
        None => writeln!(io::stdout().lock(), "{text}")?,
    }
    Ok(())
}

pub fn generate(a: GenerateArgs) -> Result<()> {
    let band = WeightBand {
        low: a.weight_low,
        high: a.weight_high,
    };
    let truth = generate_ground_truth(a.p, a.edge_prob, band, a.seed)?;
    ensure_parent(&a.out)?;
    mio::save_model(&a.out, &truth.theta)?;
    log::info!("{} edges written to {}", truth.edges.len(), a.out.display());
    Ok(())
}

pub fn sample(a: SampleArgs) -> Result<()> {
    let theta = mio::load_model(&a.model)?;
    if a.n == 0 {
        return Err(MrfError::InvalidInput("--n must be at least 1".into()));
    }
    let data = Dataset::new(sample_states(&theta, a.n, a.burn_in, a.seed))?;
    ensure_parent(&a.out)?;
    mio::save_binary_csv(&a.out, &data)
}

fn resolve_learn_config(a: &LearnArgs) -> Result<RunConfig> {
    let mut cfg = match &a.config {
        Some(path) => mio::load_run_config(path)?,
        None => RunConfig::new("learn", SpgConfig::default()),
    };
    let spg = &mut cfg.spg;
    macro_rules! set {
        ($flag:expr, $field:expr) => {
            if let Some(v) = $flag.clone() {
                $field = v;
            }
        };
    }
    set!(a.lambda, spg.lambda);
    set!(a.alpha, spg.alpha);
    set!(a.q, spg.q);
    set!(a.strategy, spg.strategy);
    set!(a.tau_max, spg.tau_max);
    set!(a.iters, spg.max_iters);
    set!(a.stop_tol, spg.stop_tol);
    set!(a.seed, spg.master_seed);
    set!(a.init_mode, spg.init_mode);
    set!(a.init, spg.theta_init);
    set!(a.beta_total, spg.beta_total);
    spg.conservative_check |= a.conservative;
    spg.instrument_exact |= a.exact_obj;
    cfg.impute_missing |= a.impute_missing;
    if let Some(d) = &a.data {
        cfg.data = Some(d.clone());
    }
    if let Some(t) = &a.trace {
        cfg.trace = Some(t.clone());
    }
    if let Some(m) = &a.model_out {
        cfg.model_out = Some(m.clone());
    }
    cfg.spg.validate()?;
    Ok(cfg)
}

fn output_dir(explicit: Option<&PathBuf>, cfg: &RunConfig) -> PathBuf {
    explicit
        .cloned()
        .or_else(|| {
            cfg.model_out
                .as_ref()
                .or(cfg.trace.as_ref())
                .and_then(|p| p.parent().map(Path::to_path_buf))
        })
        .unwrap_or_else(|| PathBuf::from("."))
}

pub fn learn(a: LearnArgs) -> Result<()> {
    let cfg = resolve_learn_config(&a)?;
    let data_path = cfg
        .data
        .clone()
        .ok_or_else(|| MrfError::InvalidInput("no dataset given (--data or `data` in --config)".into()))?;
    let data = mio::load_binary_csv(&data_path, cfg.impute_missing)?;
    let dir = output_dir(a.out_dir.as_ref(), &cfg);
    fs::create_dir_all(&dir)?;
    mio::save_run_config(dir.join(CONFIG_FILE), &cfg)?;

    let run = run_spg(&data, &cfg.spg)?;
    let unmet = run.records.iter().filter(|r| r.criterion_unmet).count();
    if unmet > 0 {
        log::warn!("{unmet} iterations hit tau_max before the bound criterion held");
    }
    if let Some(path) = &cfg.trace {
        let rows: Vec<TraceRow> = run
            .records
            .iter()
            .map(|r| TraceRow::from_record(r, a.wall_clock))
            .collect();
        ensure_parent(path)?;
        mio::save_trace(path, &rows)?;
    }
    if let Some(path) = &cfg.model_out {
        ensure_parent(path)?;
        mio::save_model(path, &run.theta)?;
    }
    Ok(())
}

pub fn eval(a: EvalArgs) -> Result<()> {
    let truth = GroundTruth::from_params(mio::load_model(&a.truth)?);
    let model = mio::load_model(&a.model)?;
    let auc = structure_auc(&model, &truth)?;
    let nonzero = model
        .indexer()
        .pairs()
        .filter(|&(k, i, j)| i != j && model.theta()[k] != 0.0)
        .count();
    write_json(
        a.out.as_deref(),
        &json!({
            "format_version": mio::FORMAT_VERSION,
            "p": model.p(),
            "auc": auc,
            "true_edges": truth.edges.len(),
            "nonzero_edges": nonzero,
        }),
    )
}

pub fn bounds(a: BoundsArgs) -> Result<()> {
    if a.tau_min == 0 || a.tau_min > a.tau_max {
        return Err(MrfError::InvalidInput("need 1 <= --tau-min <= --tau-max".into()));
    }
    let theta = mio::load_model(&a.model)?;
    let inf = influence_matrix(&theta);
    if inf.bound_divergent() {
        log::warn!(
            "scan product has spectral radius {:.4}; the bound does not decay",
            inf.b_spectral_radius
        );
    }
    let scale = 2.0 * (theta.m() as f64).sqrt();
    let mut out: Box<dyn Write> = match &a.out {
        Some(path) => {
            ensure_parent(path)?;
            Box::new(BufWriter::new(File::create(path)?))
        }
        None => Box::new(io::stdout().lock()),
    };
    writeln!(out, "tau,grand_sum,asym_bound")?;
    for (t, g) in GrandSums::new(&inf.b)
        .enumerate()
        .map(|(k, g)| (k + 1, g))
        .skip(a.tau_min - 1)
        .take(a.tau_max - a.tau_min + 1)
    {
        writeln!(out, "{t},{g},{}", scale * g)?;
    }
    out.flush()?;
    Ok(())
}

fn parse_state(p: usize, text: &str) -> Result<Assignment> {
    let bits: Vec<u8> = text
        .chars()
        .map(|c| match c {
            '0' => Ok(0),
            '1' => Ok(1),
            other => Err(MrfError::InvalidInput(format!(
                "state character `{other}` is not 0 or 1"
            ))),
        })
        .collect::<Result<_>>()?;
    if bits.len() != p {
        return Err(MrfError::DimensionMismatch {
            expected: p,
            found: bits.len(),
        });
    }
    Assignment::from_bits(&bits)
}

fn rows(p: usize, flat: &[f64]) -> Vec<Vec<f64>> {
    flat.chunks(p).map(<[f64]>::to_vec).collect()
}

pub fn oracle(a: OracleArgs) -> Result<()> {
    let theta = mio::load_model(&a.model)?;
    let load_data = || -> Result<Dataset> {
        let path = a
            .data
            .as_ref()
            .ok_or_else(|| MrfError::InvalidInput("this operation needs --data".into()))?;
        mio::load_binary_csv(path, false)
    };
    let value = match a.op {
        OracleOp::LogPartition => json!({ "log_partition": exact::log_partition(&theta)? }),
        OracleOp::Moments => json!({ "moments": exact::exact_moments(&theta)? }),
        OracleOp::Gradient => json!({ "gradient": exact::exact_gradient(&theta, &load_data()?)? }),
        OracleOp::Objective => json!({
            "lambda": a.lambda,
            "objective": exact::exact_objective(&theta, &load_data()?, a.lambda)?,
        }),
        OracleOp::Influence => {
            let u = influence_matrix(&theta).u;
            let p = theta.p();
            let bound: Vec<f64> = (0..p * p).map(|k| u[(k / p, k % p)]).collect();
            json!({
                "exhaustive": rows(p, &exact::dobrushin_influence(&theta)?),
                "upper_bound": rows(p, &bound),
            })
        }
        OracleOp::Tv => {
            let x0 = match &a.x0 {
                Some(s) => parse_state(theta.p(), s)?,
                None => Assignment::zeros(theta.p()),
            };
            json!({
                "tau": a.tau,
                "x0": x0.to_bits(),
                "tv": exact::exact_tv_after_tau(&theta, &x0, a.tau)?,
            })
        }
    };
    write_json(None, &value)
}

fn summarize(run: &ScoredRun, wall_clock: bool) -> serde_json::Value {
    let mut v = json!({
        "strategy": run.label,
        "final_auc": run.final_auc(),
        "median_tau": run.median_tau(),
        "iterations": run.run.records.len(),
        "criterion_unmet": run.run.records.iter().filter(|r| r.criterion_unmet).count(),
    });
    if wall_clock {
        v["time_ms"] = json!(run.run.records.last().map(|r| r.time_ms));
        v["time_to_final_auc_ms"] = json!(run.time_to_final_auc(0.01));
    }
    v
}

pub fn paper_synthetic(a: SyntheticArgs) -> Result<()> {
    if a.seeds == 0 {
        return Err(MrfError::InvalidInput("--seeds must be at least 1".into()));
    }
    fs::create_dir_all(&a.out_dir)?;
    let base = SpgConfig {
        alpha: a.alpha,
        lambda: a.lambda,
        q: a.q,
        tau_max: a.tau_max,
        max_iters: a.iters,
        ..SpgConfig::default()
    };
    let mut echo = RunConfig::new("paper-synthetic", base.clone());
    echo.trace = Some(a.out_dir.clone());
    mio::save_run_config(a.out_dir.join(CONFIG_FILE), &echo)?;
    let setup = json!({
        "p": a.p, "n": a.n, "burn_in": a.burn_in, "edge_prob": a.edge_prob,
        "weight_band": [1.0, 2.0], "first_seed": a.seed, "seeds": a.seeds,
    });

    let mut per_seed = Vec::new();
    for seed in a.seed..a.seed + a.seeds {
        let dir = a.out_dir.join(format!("seed-{seed}"));
        fs::create_dir_all(&dir)?;
        let truth = generate_ground_truth(a.p, a.edge_prob, WeightBand::default(), seed)?;
        let data = sample_dataset(&truth, a.n, a.burn_in, seed)?;
        mio::save_model(dir.join("truth.json"), &truth.theta)?;
        mio::save_binary_csv(dir.join("data.csv"), &data)?;
        let mut runs = Vec::new();
        for (label, strategy) in SYNTHETIC_STRATEGIES {
            let cfg = SpgConfig {
                strategy,
                master_seed: seed,
                ..base.clone()
            };
            let scored = scored_run(label, &data, &truth, &cfg)?;
            let rows: Vec<TraceRow> = scored
                .run
                .records
                .iter()
                .zip(&scored.aucs)
                .map(|(r, &auc)| TraceRow {
                    auc: Some(auc),
                    ..TraceRow::from_record(r, a.wall_clock)
                })
                .collect();
            mio::save_trace(dir.join(format!("{label}.csv")), &rows)?;
            mio::save_model(dir.join(format!("{label}-model.json")), &scored.run.theta)?;
            log::info!("seed {seed} {label}: final AUC {:.4}", scored.final_auc());
            runs.push(summarize(&scored, a.wall_clock));
        }
        per_seed.push(json!({ "seed": seed, "true_edges": truth.edges.len(), "runs": runs }));
    }
    write_json(
        Some(&a.out_dir.join("summary.json")),
        &json!({ "format_version": mio::FORMAT_VERSION, "setup": setup, "results": per_seed }),
    )
}
