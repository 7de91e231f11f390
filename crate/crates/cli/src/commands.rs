//! Subcommand implementations.

use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::Args;
use serde::Serialize;

use stabwit_core::calib::{
    design_random_states, extract_rates, run_calibration_campaign, select_generator_set,
    CalRecord, CalibrationDataset, GeneratorSelection, SufficientStats,
};
use stabwit_core::config::{parse_alpha_grid, parse_angle, Config};
use stabwit_core::error::Error;
use stabwit_core::mitigate::{ctmp_gamma, tp_support_overhead, CtmpMitigator, Method};
use stabwit_core::noise::{GeneratorTerm, NoiseChannel, ReadoutNoiseModel, SynthRanges, TpRates};
use stabwit_core::report::{fmt_f64, write_stamped_csv, write_stamped_json, RunManifest};
use stabwit_core::teleport::{
    fit_oscillation, parallel_groups, run_teleport, scan_alpha, scan_alpha_exact,
    exact_postfree_fidelity, InputState, OscillationFit, PerturbationKind, TeleportConfig,
};
use stabwit_core::witness::{
    GenuineVerdict, MitigationSpec, WitnessPlan, hoeffding_shots, run_witness,
};
use stabwit_core::{GraphSpec, MitigatedEstimate};

use crate::runctx::{display, parse_pairs, parse_range, RunCtx};

fn config_err(msg: impl Into<String>) -> anyhow::Error {
    Error::Config(msg.into()).into()
}

fn overlay(cfg: &mut Config, key: &str, value: Option<impl ToString>) {
    if let Some(v) = value {
        cfg.set(key, v.to_string());
    }
}

/// Write a model file with a manifest stamp comment up top (the loader
/// ignores `#` lines).
fn save_model_stamped(path: &Path, hash: &str, model: &ReadoutNoiseModel) -> anyhow::Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)
                .with_context(|| format!("cannot create {}", dir.display()))?;
        }
    }
    let text = format!("# manifest {hash}\n{}", model.to_text());
    std::fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(())
}

// ---------------------------------------------------------------- plan ----

#[derive(Args)]
pub struct PlanArgs {
    /// Target half-width of the fidelity confidence interval.
    #[arg(long)]
    epsilon: f64,
    /// Allowed failure probability of the Hoeffding bound.
    #[arg(long)]
    delta: f64,
    /// Mitigation overhead Gamma: shot values span [-Gamma, +Gamma].
    #[arg(long, default_value_t = 1.0)]
    gamma_overhead: f64,
    /// Cap on shots per setting when splitting the budget.
    #[arg(long, default_value_t = 3000)]
    k_cap: usize,
}

pub fn plan(ctx: &RunCtx, args: PlanArgs) -> anyhow::Result<()> {
    if !(args.epsilon > 0.0 && args.epsilon.is_finite()) {
        return Err(config_err(format!("epsilon must be positive, got {}", args.epsilon)));
    }
    if !(args.delta > 0.0 && args.delta < 1.0) {
        return Err(config_err(format!("delta must lie in (0, 1), got {}", args.delta)));
    }
    if !(args.gamma_overhead >= 1.0 && args.gamma_overhead.is_finite()) {
        return Err(config_err(format!("gamma overhead must be >= 1, got {}", args.gamma_overhead)));
    }

    let bound = hoeffding_shots(args.epsilon, args.delta, args.gamma_overhead);
    let plan = WitnessPlan::from_error_budget(args.epsilon, args.delta, args.gamma_overhead, args.k_cap);
    println!("N = {bound}");
    println!(
        "M = {} settings x K = {} shots per setting ({} total)",
        plan.settings,
        plan.shots_per_setting,
        plan.n_total()
    );
    println!(
        "epsilon = {}, delta = {}, Gamma = {}",
        fmt_f64(plan.epsilon),
        fmt_f64(plan.delta),
        fmt_f64(plan.overhead)
    );

    let mut cfg = Config::empty();
    cfg.set("epsilon", args.epsilon.to_string());
    cfg.set("delta", args.delta.to_string());
    cfg.set("gamma_overhead", args.gamma_overhead.to_string());
    cfg.set("k_cap", args.k_cap.to_string());
    let mut manifest =
        RunManifest::new("plan", ctx.resolve_seed(None)).with_config(None, &cfg.to_text());
    let out = ctx.path("plan.json");
    manifest.record_output(&out);

    #[derive(Serialize)]
    struct PlanSummary {
        hoeffding_bound: u64,
        n_total: u64,
        plan: WitnessPlan,
    }
    let summary = PlanSummary { hoeffding_bound: bound, n_total: plan.n_total(), plan };
    write_stamped_json(&out, &manifest.hash(), &summary)?;
    ctx.finish(manifest)?;
    Ok(())
}

// --------------------------------------------------------- synth-model ----

#[derive(Args)]
pub struct SynthModelArgs {
    /// Qubit count.
    #[arg(long)]
    n: usize,
    /// lo:hi range for the 0->1 flip probability.
    #[arg(long, default_value = "0.002:0.02")]
    eps: String,
    /// lo:hi range for the 1->0 flip probability.
    #[arg(long, default_value = "0.005:0.04")]
    eta: String,
    /// lo:hi range for correlated pair rates.
    #[arg(long, default_value = "0:0")]
    pair_rate: String,
    /// Qubit pairs that receive correlated terms, e.g. 0-1,4-5.
    #[arg(long)]
    pairs: Option<String>,
    /// Depolarizing probability applied per measured qubit.
    #[arg(long)]
    depol: Option<f64>,
    /// Model file to write (default <out-dir>/model.txt).
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn synth_model(ctx: &RunCtx, args: SynthModelArgs) -> anyhow::Result<()> {
    let seed = ctx.resolve_seed(None);
    let ranges = SynthRanges {
        eps: parse_range(&args.eps)?,
        eta: parse_range(&args.eta)?,
        pair_rate: parse_range(&args.pair_rate)?,
        pairs: match &args.pairs {
            Some(raw) => parse_pairs(raw)?,
            None => Vec::new(),
        },
        depolarizing_p: args.depol,
    };
    let model = ReadoutNoiseModel::synth_device(args.n, seed, &ranges)?;
    let out = args.out.unwrap_or_else(|| ctx.path("model.txt"));

    let mut cfg = Config::empty();
    cfg.set("n", args.n.to_string());
    cfg.set("eps", &args.eps);
    cfg.set("eta", &args.eta);
    cfg.set("pair_rate", &args.pair_rate);
    if let Some(p) = &args.pairs {
        cfg.set("pairs", p);
    }
    if let Some(p) = args.depol {
        cfg.set("depol", p.to_string());
    }
    let mut manifest = RunManifest::new("synth-model", seed).with_config(None, &cfg.to_text());
    manifest.record_output(&out);
    save_model_stamped(&out, &manifest.hash(), &model)?;

    let est = ctmp_gamma(&model.build_rate_set()?, seed);
    println!(
        "model: {} qubits, {} correlated terms -> {}",
        args.n,
        model.generator_terms().len(),
        display(&out)
    );
    println!(
        "gamma = {} ({}), Gamma = {}",
        fmt_f64(est.gamma),
        if est.exact { "exact" } else { "annealed" },
        fmt_f64((2.0 * est.gamma).exp())
    );
    ctx.finish(manifest)?;
    Ok(())
}

// ----------------------------------------------------------- calibrate ----

#[derive(Args)]
pub struct CalibrateArgs {
    /// Existing calibration records (JSON lines of prepared/observed).
    #[arg(long)]
    data: Option<PathBuf>,
    /// Qubit count (only needed with --data; inferred from the records otherwise).
    #[arg(long)]
    n: Option<usize>,
    /// Truth model file to simulate calibration shots against.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Forward channel for simulation: tp | ctmp.
    #[arg(long, default_value = "tp")]
    channel: String,
    /// Number of random preparation states to simulate.
    #[arg(long, default_value_t = 50)]
    states: usize,
    /// Shots per preparation state.
    #[arg(long, default_value_t = 2000)]
    shots_per_state: u64,
    /// Also write the simulated records as JSON lines.
    #[arg(long)]
    save_data: bool,
    /// Generator selection: tp | nearest-neighbor | full | most-correlated.
    #[arg(long, default_value = "most-correlated")]
    select: String,
    /// Correlation threshold for most-correlated selection.
    #[arg(long)]
    threshold: Option<f64>,
    /// Layout graph for nearest-neighbor selection (chain:N, grid-sparse:RxC, ...).
    #[arg(long)]
    graph: Option<String>,
}

fn simulate_dataset(
    model: &ReadoutNoiseModel,
    channel: NoiseChannel,
    states: &[stabwit_core::BitString],
    shots_per_state: u64,
    seed: u64,
) -> anyhow::Result<CalibrationDataset> {
    let rates = match channel {
        NoiseChannel::Ctmp => Some(model.build_rate_set()?),
        NoiseChannel::Tp => None,
    };
    let mut records = Vec::with_capacity(states.len() * shots_per_state as usize);
    for (i, prepared) in states.iter().enumerate() {
        // Same stream layout as the on-the-fly campaign, so the reduced
        // statistics agree whether or not raw records are kept.
        let mut rng = stabwit_core::rng::stream(seed, i as u64);
        for _ in 0..shots_per_state {
            let mut observed = prepared.clone();
            match (&rates, channel) {
                (Some(rs), _) => rs.gillespie(&mut observed, &mut rng),
                (None, _) => model.apply_tp_noise(&mut observed, &mut rng),
            }
            records.push(CalRecord { prepared: prepared.clone(), observed });
        }
    }
    Ok(CalibrationDataset { records })
}

pub fn calibrate(ctx: &RunCtx, args: CalibrateArgs) -> anyhow::Result<()> {
    let seed = ctx.resolve_seed(None);
    let mut cfg = Config::empty();
    cfg.set("select", &args.select);
    if let Some(t) = args.threshold {
        cfg.set("threshold", t.to_string());
    }
    if let Some(g) = &args.graph {
        cfg.set("graph", g);
    }
    let mut manifest = RunManifest::new("calibrate", seed);
    let mut inputs: Vec<PathBuf> = Vec::new();

    let (stats, source): (SufficientStats, String) = if let Some(data) = &args.data {
        inputs.push(data.clone());
        cfg.set("data", display(data));
        let ds = CalibrationDataset::load_jsonl(data)?;
        let n = match args.n {
            Some(n) => n,
            None => ds
                .records
                .first()
                .map(|r| r.prepared.len())
                .ok_or_else(|| config_err("calibration data is empty"))?,
        };
        (ds.accumulate(n)?, display(data))
    } else {
        let model_path =
            args.model.as_ref().ok_or_else(|| config_err("need --data or --model"))?;
        inputs.push(model_path.clone());
        cfg.set("model", display(model_path));
        cfg.set("channel", &args.channel);
        cfg.set("states", args.states.to_string());
        cfg.set("shots_per_state", args.shots_per_state.to_string());
        let model = ReadoutNoiseModel::load(model_path)?;
        let channel = NoiseChannel::parse(&args.channel)?;
        let states = design_random_states(model.n(), args.states, seed);
        let stats = if args.save_data {
            let ds = simulate_dataset(&model, channel, &states, args.shots_per_state, seed)?;
            let path = ctx.path("calibration.jsonl");
            ds.save_jsonl(&path)?;
            manifest.record_output(&path);
            println!("records -> {}", display(&path));
            ds.accumulate(model.n())?
        } else {
            run_calibration_campaign(&model, channel, &states, args.shots_per_state, seed)?
        };
        (stats, display(model_path))
    };

    let extraction = extract_rates(&stats)?;
    let mode = match (GeneratorSelection::parse(&args.select)?, args.threshold) {
        (GeneratorSelection::MostCorrelated { .. }, Some(t)) => {
            GeneratorSelection::MostCorrelated { threshold: t }
        }
        (mode, Some(_)) => {
            return Err(config_err(format!(
                "--threshold only applies to most-correlated selection, not {}",
                mode.label()
            )));
        }
        (mode, None) => mode,
    };
    let layout = match &args.graph {
        Some(src) => Some(GraphSpec::parse_source(src)?),
        None => None,
    };
    let terms = select_generator_set(&stats, &extraction, &mode, layout.as_ref())?;
    let pair_terms: Vec<GeneratorTerm> =
        terms.iter().filter(|t| matches!(t, GeneratorTerm::Pair { .. })).cloned().collect();
    let n_pairs = pair_terms.len();
    // Without pair terms the model is the TP view of the device, so it
    // carries the marginal flip estimates. Once pair terms enter the
    // generator list the single-qubit part must come from the strict
    // conditional log instead: marginal estimates already absorb
    // pair-induced flips, and keeping both would correct those events twice.
    let tp = if pair_terms.is_empty() {
        stats.tp_estimates()?
    } else {
        extraction.singles.iter().map(|&(r0, r1)| TpRates::from_single_rates(r0, r1)).collect()
    };
    let calibrated = ReadoutNoiseModel::from_parts(stats.n(), tp, pair_terms, None)?;

    for path in &inputs {
        manifest.record_input(path);
    }
    manifest = manifest.with_config(None, &cfg.to_text());
    let model_out = ctx.path("calibrated-model.txt");
    let corr_out = ctx.path("correlations.csv");
    let summary_out = ctx.path("calibrate-summary.json");
    manifest.record_output(&model_out);
    manifest.record_output(&corr_out);
    manifest.record_output(&summary_out);
    let hash = manifest.hash();

    save_model_stamped(&model_out, &hash, &calibrated)?;
    let corr = stabwit_core::calib::correlation_csv(&stats);
    let mut lines = corr.lines();
    let header = lines.next().unwrap_or_default().to_string();
    let rows: Vec<String> = lines.map(str::to_string).collect();
    write_stamped_csv(&corr_out, &hash, &header, &rows)?;

    let est = ctmp_gamma(&calibrated.build_rate_set()?, seed);
    #[derive(Serialize)]
    struct CalibrationSummary {
        source: String,
        qubits: usize,
        states: usize,
        records: u64,
        selection: String,
        pair_terms: usize,
        clipped_entries: usize,
        skipped_pairs: usize,
        gamma: f64,
        overhead: f64,
    }
    let summary = CalibrationSummary {
        source,
        qubits: stats.n(),
        states: stats.states().len(),
        records: stats.total_records(),
        selection: mode.label().to_string(),
        pair_terms: n_pairs,
        clipped_entries: extraction.clip_count,
        skipped_pairs: extraction.skipped_pairs.len(),
        gamma: est.gamma,
        overhead: (2.0 * est.gamma).exp(),
    };
    write_stamped_json(&summary_out, &hash, &summary)?;

    println!(
        "calibrated {} qubits from {} records: {} pair terms ({})",
        summary.qubits, summary.records, summary.pair_terms, summary.selection
    );
    println!("gamma = {}, Gamma = {}", fmt_f64(summary.gamma), fmt_f64(summary.overhead));
    println!("model -> {}", display(&model_out));
    ctx.finish(manifest)?;
    Ok(())
}

// ------------------------------------------------------------- witness ----

#[derive(Args)]
pub struct WitnessArgs {
    /// Key-value config file; flags override file keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Graph source: chain:N | grid-sparse:RxC | grid-full:RxC | path.
    #[arg(long)]
    graph: Option<String>,
    /// Truth readout model: model file path, or "none".
    #[arg(long)]
    model: Option<String>,
    /// Forward noise channel of the truth model: tp | ctmp.
    #[arg(long)]
    channel: Option<String>,
    /// Shot-value method: raw | tp | ctmp.
    #[arg(long)]
    method: Option<String>,
    /// Model whose rates drive mitigation (default: the truth model).
    #[arg(long)]
    mitigation_model: Option<String>,
    /// Target Hoeffding half-width (alternative to --settings/--shots).
    #[arg(long)]
    epsilon: Option<f64>,
    /// Bound failure probability (default 0.003).
    #[arg(long)]
    delta: Option<f64>,
    /// Explicit number of settings M.
    #[arg(long)]
    settings: Option<usize>,
    /// Shots per setting K.
    #[arg(long)]
    shots: Option<usize>,
    /// Mitigation walk samples per shot T.
    #[arg(long)]
    samples_per_shot: Option<usize>,
    /// Cap on K when splitting an epsilon budget.
    #[arg(long)]
    k_cap: Option<usize>,
}

enum BuiltMitigation {
    Raw,
    Tp(Vec<TpRates>),
    Ctmp(CtmpMitigator),
}

impl BuiltMitigation {
    fn spec(&self) -> MitigationSpec<'_> {
        match self {
            BuiltMitigation::Raw => MitigationSpec::Raw,
            BuiltMitigation::Tp(rates) => MitigationSpec::Tp { rates },
            BuiltMitigation::Ctmp(mitigator) => MitigationSpec::Ctmp { mitigator },
        }
    }
}

fn load_truth_model(src: &str, n: usize, inputs: &mut Vec<PathBuf>) -> anyhow::Result<ReadoutNoiseModel> {
    if src == "none" {
        Ok(ReadoutNoiseModel::noiseless(n))
    } else {
        let path = PathBuf::from(src);
        inputs.push(path.clone());
        Ok(ReadoutNoiseModel::load(&path)?)
    }
}

pub fn witness(ctx: &RunCtx, args: WitnessArgs) -> anyhow::Result<()> {
    let mut cfg = match &args.config {
        Some(path) => Config::load(path)?,
        None => Config::empty(),
    };
    overlay(&mut cfg, "graph", args.graph);
    overlay(&mut cfg, "model", args.model);
    overlay(&mut cfg, "channel", args.channel);
    overlay(&mut cfg, "method", args.method);
    overlay(&mut cfg, "mitigation_model", args.mitigation_model);
    overlay(&mut cfg, "epsilon", args.epsilon);
    overlay(&mut cfg, "delta", args.delta);
    overlay(&mut cfg, "settings", args.settings);
    overlay(&mut cfg, "shots", args.shots);
    overlay(&mut cfg, "samples_per_shot", args.samples_per_shot);
    overlay(&mut cfg, "k_cap", args.k_cap);

    let mut inputs: Vec<PathBuf> = Vec::new();
    let graph_src = cfg.require("graph")?.to_string();
    let graph = GraphSpec::parse_source(&graph_src)?;
    if Path::new(&graph_src).exists() {
        inputs.push(PathBuf::from(&graph_src));
    }
    let model_src = cfg.get("model").unwrap_or("none").to_string();
    let truth = load_truth_model(&model_src, graph.n(), &mut inputs)?;
    let channel = NoiseChannel::parse(cfg.get("channel").unwrap_or("tp"))?;
    let default_method = if model_src == "none" { "raw" } else { "tp" };
    let method = Method::parse(cfg.get("method").unwrap_or(default_method))?;
    let seed = ctx.resolve_seed(cfg.get_u64("seed")?);

    let mitigation = match method {
        Method::Raw => BuiltMitigation::Raw,
        Method::Tp | Method::Ctmp => {
            let mit_model = match cfg.get("mitigation_model") {
                Some(src) => load_truth_model(src, graph.n(), &mut inputs)?,
                None => truth.clone(),
            };
            match method {
                Method::Tp => BuiltMitigation::Tp(mit_model.tp_rates().to_vec()),
                _ => BuiltMitigation::Ctmp(CtmpMitigator::new(mit_model.build_rate_set()?, seed)),
            }
        }
    };
    let overhead = match &mitigation {
        BuiltMitigation::Raw => 1.0,
        BuiltMitigation::Tp(rates) => tp_support_overhead(rates, 0..graph.n())?,
        BuiltMitigation::Ctmp(m) => m.overhead(),
    };

    let delta = cfg.get_f64("delta")?.unwrap_or(0.003);
    let samples_per_shot = cfg.get_usize("samples_per_shot")?.unwrap_or(1);
    let plan = match (cfg.get_usize("settings")?, cfg.get_usize("shots")?) {
        (Some(m), Some(k)) => WitnessPlan::explicit(m, k, samples_per_shot, delta, overhead),
        (None, None) => {
            let epsilon = cfg
                .get_f64("epsilon")?
                .ok_or_else(|| config_err("need either epsilon or settings+shots"))?;
            let k_cap = match cfg.get_usize("k_cap")? {
                Some(k) => k,
                None => match graph.layout() {
                    stabwit_core::graph::LayoutTag::GridSparse
                    | stabwit_core::graph::LayoutTag::GridFull => 2000,
                    _ => 3000,
                },
            };
            let mut plan = WitnessPlan::from_error_budget(epsilon, delta, overhead, k_cap);
            plan.samples_per_shot = samples_per_shot;
            plan
        }
        _ => return Err(config_err("settings and shots must be given together")),
    };

    let outcome = run_witness(&graph, &truth, channel, &mitigation.spec(), &plan, seed)?;

    let mut manifest =
        RunManifest::new("witness", seed).with_config(args.config.as_deref(), &cfg.to_text());
    for p in &inputs {
        manifest.record_input(p);
    }
    let summary_out = ctx.path("witness-summary.json");
    let settings_out = ctx.path("witness-settings.csv");
    manifest.record_output(&summary_out);
    manifest.record_output(&settings_out);
    let hash = manifest.hash();

    #[derive(Serialize)]
    struct WitnessSummary<'a> {
        graph: &'a str,
        qubits: usize,
        truth_model: &'a str,
        truth_channel: &'a str,
        plan: &'a WitnessPlan,
        estimate: &'a MitigatedEstimate,
        verdict: &'a GenuineVerdict,
    }
    write_stamped_json(
        &summary_out,
        &hash,
        &WitnessSummary {
            graph: &graph_src,
            qubits: graph.n(),
            truth_model: &model_src,
            truth_channel: cfg.get("channel").unwrap_or("tp"),
            plan: &plan,
            estimate: &outcome.estimate,
            verdict: &outcome.verdict,
        },
    )?;
    let rows: Vec<String> = outcome
        .setting_estimates
        .iter()
        .enumerate()
        .map(|(i, s)| {
            format!(
                "{i},{},{},{},{},{}",
                s.subset,
                s.pauli,
                fmt_f64(s.mean),
                s.shots,
                s.overflows
            )
        })
        .collect();
    write_stamped_csv(&settings_out, &hash, "setting,subset,pauli,mean,shots,overflows", &rows)?;

    println!(
        "graph {} ({} qubits), method {}, truth {}",
        graph_src,
        graph.n(),
        outcome.estimate.method.label(),
        if model_src == "none" { "noiseless" } else { &model_src },
    );
    println!(
        "M = {} settings x K = {} shots, T = {}",
        plan.settings, plan.shots_per_setting, plan.samples_per_shot
    );
    println!(
        "fidelity = {} (se {})",
        fmt_f64(outcome.estimate.value),
        fmt_f64(outcome.estimate.empirical_std_error)
    );
    println!(
        "epsilon = {} at delta = {}, Gamma = {}",
        fmt_f64(plan.epsilon),
        fmt_f64(plan.delta),
        fmt_f64(outcome.estimate.overhead)
    );
    println!(
        "genuine multipartite entanglement: {} (margin {})",
        if outcome.verdict.genuine { "CERTIFIED" } else { "not certified" },
        fmt_f64(outcome.verdict.margin)
    );
    ctx.finish(manifest)?;
    Ok(())
}

// ------------------------------------------------------------ teleport ----

#[derive(Args)]
pub struct TeleportArgs {
    /// Key-value config file; flags override file keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Chain length (resource qubits, excluding the input).
    #[arg(long)]
    n: Option<usize>,
    /// Input state: 0 | 1 | + | - | +i | -i.
    #[arg(long)]
    input: Option<String>,
    /// Perturbation kind: s | sb_odd | sb_even (absent: clean wire).
    #[arg(long)]
    kind: Option<String>,
    /// Alpha grid start:stop:count (pi-aware), or a comma list.
    #[arg(long)]
    alphas: Option<String>,
    /// Single alpha value (pi-aware).
    #[arg(long)]
    alpha: Option<String>,
    /// ZXZ rotation angle beta (pi-aware, default 0).
    #[arg(long)]
    beta: Option<String>,
    /// Number of parallel perturbation groups.
    #[arg(long)]
    groups: Option<usize>,
    /// Shots per grid point.
    #[arg(long)]
    shots: Option<usize>,
    /// Exact branch enumeration instead of sampling (n <= 14).
    #[arg(long)]
    exact: bool,
    /// Readout model file, or "none".
    #[arg(long)]
    model: Option<String>,
    /// Forward noise channel: tp | ctmp.
    #[arg(long)]
    channel: Option<String>,
    /// Shot-value method: raw | tp.
    #[arg(long)]
    method: Option<String>,
    /// Harmonics in the oscillation fit.
    #[arg(long)]
    harmonics: Option<usize>,
    /// Fresh randomness per grid point instead of common random numbers.
    #[arg(long)]
    fresh_randomness: bool,
}

pub fn teleport(ctx: &RunCtx, args: TeleportArgs) -> anyhow::Result<()> {
    let mut cfg = match &args.config {
        Some(path) => Config::load(path)?,
        None => Config::empty(),
    };
    overlay(&mut cfg, "n", args.n);
    overlay(&mut cfg, "input", args.input);
    overlay(&mut cfg, "kind", args.kind);
    overlay(&mut cfg, "alphas", args.alphas);
    overlay(&mut cfg, "alpha", args.alpha);
    overlay(&mut cfg, "beta", args.beta);
    overlay(&mut cfg, "groups", args.groups);
    overlay(&mut cfg, "shots", args.shots);
    overlay(&mut cfg, "model", args.model);
    overlay(&mut cfg, "channel", args.channel);
    overlay(&mut cfg, "method", args.method);
    overlay(&mut cfg, "harmonics", args.harmonics);
    if args.exact {
        cfg.set("exact", "true");
    }
    if args.fresh_randomness {
        cfg.set("fresh_randomness", "true");
    }

    let n = cfg
        .get_usize("n")?
        .ok_or_else(|| config_err("need a chain length n"))?;
    let input = InputState::parse(cfg.require("input")?)?;
    let kind = match cfg.get("kind") {
        Some(k) => Some(PerturbationKind::parse(k)?),
        None => None,
    };
    let beta = match cfg.get("beta") {
        Some(raw) => parse_angle(raw)?,
        None => 0.0,
    };
    let groups = cfg.get_usize("groups")?.unwrap_or(1);
    let shots = cfg.get_usize("shots")?.unwrap_or(4096);
    let exact = cfg.get_bool("exact")?.unwrap_or(false);
    let seed = ctx.resolve_seed(cfg.get_u64("seed")?);
    let crn = !cfg.get_bool("fresh_randomness")?.unwrap_or(false);

    let mut inputs: Vec<PathBuf> = Vec::new();
    let model_src = cfg.get("model").unwrap_or("none").to_string();
    // The readout model covers the input qubit plus the chain.
    let model = if model_src == "none" {
        None
    } else {
        Some(load_truth_model(&model_src, n + 1, &mut inputs)?)
    };
    let channel = NoiseChannel::parse(cfg.get("channel").unwrap_or("tp"))?;
    let default_method = if model.is_some() { "tp" } else { "raw" };
    let method = Method::parse(cfg.get("method").unwrap_or(default_method))?;
    if method == Method::Ctmp {
        return Err(config_err("teleport mitigation supports raw or tp only"));
    }
    if exact && (model.is_some() || method != Method::Raw) {
        return Err(config_err("exact enumeration is noiseless; drop --model/--method"));
    }
    if exact && n > 14 {
        return Err(config_err(format!("exact enumeration is capped at n = 14, got {n}")));
    }
    let readout = model.as_ref().map(|m| (m, channel));
    let mit_rates: Option<Vec<TpRates>> = match (method, &model) {
        (Method::Tp, Some(m)) => Some(m.tp_rates().to_vec()),
        (Method::Tp, None) => {
            return Err(config_err("tp mitigation needs a readout model"));
        }
        _ => None,
    };

    let perturbations = match kind {
        Some(kind) => parallel_groups(groups, kind, 0.0, beta),
        None => Vec::new(),
    };
    let tcfg = TeleportConfig::new(n, input).with_perturbations(perturbations);

    let mut manifest =
        RunManifest::new("teleport", seed).with_config(args.config.as_deref(), &cfg.to_text());
    for p in &inputs {
        manifest.record_input(p);
    }

    let grid = match cfg.get("alphas") {
        Some(raw) => Some(parse_alpha_grid(raw)?),
        None => None,
    };
    if let Some(grid) = grid {
        let harmonics = cfg.get_usize("harmonics")?.unwrap_or(1);
        let scan_out = ctx.path("teleport-scan.csv");
        let fit_out = ctx.path("teleport-fit.json");
        manifest.record_output(&scan_out);
        let fit_possible = grid.len() >= 4 * harmonics + 2;
        if fit_possible {
            manifest.record_output(&fit_out);
        }
        let hash = manifest.hash();

        let points: Vec<(f64, f64, f64)> = if exact {
            scan_alpha_exact(&tcfg, &grid)?.into_iter().map(|(a, v)| (a, v, 0.0)).collect()
        } else {
            scan_alpha(&tcfg, &grid, readout, mit_rates.as_deref(), shots, seed, crn)?
                .into_iter()
                .map(|p| (p.alpha, p.value, p.std_error))
                .collect()
        };
        let rows: Vec<String> = points
            .iter()
            .map(|(a, v, se)| format!("{},{},{}", fmt_f64(*a), fmt_f64(*v), fmt_f64(*se)))
            .collect();
        write_stamped_csv(&scan_out, &hash, "alpha,fidelity,std_error", &rows)?;
        println!(
            "scanned {} alphas on the n = {} wire ({}) -> {}",
            points.len(),
            n,
            if exact { "exact".to_string() } else { format!("{shots} shots each") },
            display(&scan_out)
        );

        if fit_possible {
            let xs: Vec<f64> = points.iter().map(|p| p.0).collect();
            let ys: Vec<f64> = points.iter().map(|p| p.1).collect();
            let fit: OscillationFit = fit_oscillation(&xs, &ys, harmonics)?;
            write_stamped_json(&fit_out, &hash, &fit)?;
            println!(
                "fit: amplitude = {}, period = {}, offset = {}, fluctuation = {}",
                fmt_f64(fit.amplitude),
                fmt_f64(fit.period),
                fmt_f64(fit.offset),
                fmt_f64(fit.fluctuation)
            );
            println!("fit -> {}", display(&fit_out));
        } else {
            println!("fit skipped: {} points cannot constrain {harmonics} harmonic(s)", points.len());
        }
        ctx.finish(manifest)?;
        return Ok(());
    }

    // Single-point run.
    let alpha = match cfg.get("alpha") {
        Some(raw) => parse_angle(raw)?,
        None if kind.is_some() => {
            return Err(config_err("a perturbed wire needs --alpha or --alphas"));
        }
        None => 0.0,
    };
    let tcfg = TeleportConfig {
        perturbations: tcfg
            .perturbations
            .iter()
            .map(|p| stabwit_core::teleport::Perturbation { alpha, ..*p })
            .collect(),
        ..tcfg
    };
    let summary_out = ctx.path("teleport-summary.json");
    manifest.record_output(&summary_out);
    let hash = manifest.hash();

    #[derive(Serialize)]
    struct TeleportSummary<'a> {
        n: usize,
        input: &'a str,
        kind: Option<&'a str>,
        groups: usize,
        alpha: f64,
        beta: f64,
        exact: bool,
        estimate: Option<&'a MitigatedEstimate>,
        exact_value: Option<f64>,
    }
    let (estimate, exact_value);
    if exact {
        estimate = None;
        exact_value = Some(exact_postfree_fidelity(&tcfg)?);
        println!("exact fidelity = {}", fmt_f64(exact_value.unwrap()));
    } else {
        let est = run_teleport(&tcfg, readout, mit_rates.as_deref(), shots, seed)?;
        println!(
            "fidelity = {} (se {}, method {}, {} shots)",
            fmt_f64(est.value),
            fmt_f64(est.empirical_std_error),
            est.method.label(),
            shots
        );
        estimate = Some(est);
        exact_value = None;
    }
    write_stamped_json(
        &summary_out,
        &hash,
        &TeleportSummary {
            n,
            input: input.label(),
            kind: kind.map(|k| k.label()),
            groups,
            alpha,
            beta,
            exact,
            estimate: estimate.as_ref(),
            exact_value,
        },
    )?;
    ctx.finish(manifest)?;
    Ok(())
}

// -------------------------------------------------------------- report ----

#[derive(Args)]
pub struct ReportArgs {
    /// Summary JSON files or run directories to scan.
    inputs: Vec<PathBuf>,
    /// Output CSV path (default <out-dir>/report.csv).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn collect_summaries(inputs: &[PathBuf]) -> anyhow::Result<Vec<PathBuf>> {
    let mut found = Vec::new();
    for input in inputs {
        if input.is_dir() {
            let mut entries: Vec<PathBuf> = std::fs::read_dir(input)
                .with_context(|| format!("cannot read {}", input.display()))?
                .filter_map(|e| e.ok())
                .map(|e| e.path())
                .filter(|p| {
                    p.file_name()
                        .and_then(|s| s.to_str())
                        .is_some_and(|s| s.ends_with("summary.json"))
                })
                .collect();
            entries.sort();
            found.extend(entries);
        } else {
            found.push(input.clone());
        }
    }
    Ok(found)
}

pub fn report(ctx: &RunCtx, args: ReportArgs) -> anyhow::Result<()> {
    if args.inputs.is_empty() {
        return Err(config_err("report needs at least one summary file or run directory"));
    }
    let files = collect_summaries(&args.inputs)?;
    if files.is_empty() {
        return Err(config_err("no summary files found under the given inputs"));
    }

    let get_f = |v: &serde_json::Value, ptr: &str| v.pointer(ptr).and_then(|x| x.as_f64());
    let get_u = |v: &serde_json::Value, ptr: &str| v.pointer(ptr).and_then(|x| x.as_u64());
    let cell = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
    let cell_u = |v: Option<u64>| v.map(|x| x.to_string()).unwrap_or_default();

    let mut rows = Vec::new();
    for path in &files {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read {}", path.display()))?;
        let v: serde_json::Value = serde_json::from_str(&text)
            .with_context(|| format!("bad JSON in {}", path.display()))?;
        let graph = v
            .get("graph")
            .and_then(|x| x.as_str())
            .map(str::to_string)
            .or_else(|| get_u(&v, "/n").map(|n| format!("wire:{n}")))
            .unwrap_or_default();
        let method = v
            .pointer("/estimate/method")
            .and_then(|x| x.as_str())
            .map(|s| s.to_lowercase())
            .unwrap_or_default();
        let value = get_f(&v, "/estimate/value").or_else(|| get_f(&v, "/exact_value"));
        rows.push(format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            path.display(),
            graph,
            cell_u(get_u(&v, "/qubits").or_else(|| get_u(&v, "/n"))),
            method,
            cell_u(get_u(&v, "/estimate/settings")),
            cell_u(get_u(&v, "/estimate/shots_per_setting")),
            cell_u(get_u(&v, "/estimate/samples_per_shot")),
            cell(value),
            cell(get_f(&v, "/estimate/empirical_std_error")),
            cell(get_f(&v, "/estimate/planned_epsilon")),
            cell(get_f(&v, "/estimate/delta")),
            cell(get_f(&v, "/estimate/gamma")),
            cell(get_f(&v, "/estimate/overhead")),
        ));
    }

    let seed = ctx.resolve_seed(None);
    let mut manifest = RunManifest::new("report", seed);
    for f in &files {
        manifest.record_input(f);
    }
    let out = args.out.unwrap_or_else(|| ctx.path("report.csv"));
    manifest.record_output(&out);
    write_stamped_csv(
        &out,
        &manifest.hash(),
        "source,graph,qubits,method,settings,shots_per_setting,samples_per_shot,value,std_error,epsilon,delta,gamma,overhead",
        &rows,
    )?;
    println!("report: {} runs -> {}", rows.len(), display(&out));
    ctx.finish(manifest)?;
    Ok(())
}
