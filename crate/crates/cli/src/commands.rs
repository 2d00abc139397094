use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, Write};
use std::path::Path;

use decay_ledger::config::presets;
use decay_ledger::contamination::{
    audit_holdout, build_plan, inject, injected_fraction, reference_weights, position_profile, synth_corpus, tag_counts,
    ByteTokenizer, ContaminationPlan, PlanRequest, Placement, TokenStream,
};
use decay_ledger::dedup::{filter_duplicates, read_records, write_records};
use decay_ledger::ledger::{
    average_rate, bound_warning, decile_origins, write_composition_csv, write_curves_csv,
};
use decay_ledger::sim::{
    max_relative_error, reconstruct_theta, run_sim, run_toy, toy_optimizer, Continuation, GapSeries, Hyper,
    OptimizerConfig, OptimizerKind, Quadratic, SimProblem, ToySettings, ZeroGradient,
};
use decay_ledger::stats::{gap_report, read_outcomes};
use decay_ledger::svg::{bar_chart, line_chart, Series};
use decay_ledger::{
    build_prefix, chinchilla_account, composition_report, exact_forgetting_time, forgetting_curve,
    forgetting_time_bound, Error, Result, RunConfig, ScheduleSpec,
};

use crate::output::{suffixed, Artifacts};
use crate::{AnalyzeArgs, ContaminateArgs, DedupArgs, DemoMode, ForgetArgs, GapArgs, ProblemKind, ScheduleChoice, SimulateArgs};

/// Tolerance for the reconstructed final weights.
const RECONSTRUCTION_TOL: f64 = 1e-9;

fn load_config(arg: &str) -> Result<RunConfig> {
    let run = if Path::new(arg).exists() {
        RunConfig::load(arg)?
    } else if presets::source(arg).is_some() {
        presets::load(arg)?
    } else {
        return Err(Error::Io(std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!("{arg}: no such file and not a preset ({})", presets::NAMES.join(", ")),
        )));
    };
    run.validate()?;
    Ok(run)
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

pub fn analyze(a: AnalyzeArgs) -> Result<()> {
    let run = load_config(&a.config)?;
    let prefix = build_prefix(&run)?;
    let total = prefix.total_steps();
    if a.origin > total {
        return Err(Error::Argument(format!("--origin {} beyond the last step {total}", a.origin)));
    }
    if !(a.epsilon > 0.0 && a.epsilon < 1.0) {
        return Err(Error::Argument(format!("--epsilon must be in (0, 1), got {}", a.epsilon)));
    }
    println!("run {}: {total} steps, weight decay {}", run.name, run.weight_decay);
    if run.approximate {
        println!("note: schedule parameters are approximate");
    }
    if let (Some(p), Some(tps)) = (run.param_count, run.tokens_per_step) {
        let c = chinchilla_account(p, tps * total)?;
        println!("tokens {:.3e} = {:.1}x the Chinchilla budget of {:.3e}", c.trained_tokens as f64, c.multiple, c.chinchilla_tokens as f64);
    }

    let mut origins = if a.deciles { decile_origins(total) } else { Vec::new() };
    if !origins.contains(&a.origin) {
        origins.push(a.origin);
        origins.sort_unstable();
    }
    let stride = a.stride.unwrap_or((total / 500).max(1));
    let mut curves = Vec::with_capacity(origins.len());
    println!("\n{:>10}  {:>12}  {:>14}", "origin", "final weight", format!("below {:e}", a.epsilon));
    for &o in &origins {
        let c = forgetting_curve(&prefix, o, stride)?;
        let w = c.final_weight();
        let t = exact_forgetting_time(&prefix, o, a.epsilon)?;
        let when = t.map_or("no".to_string(), |t| format!("at step {t}"));
        println!("{o:>10}  {w:>12.4e}  {when:>14}");
        curves.push(c);
    }

    println!("\nupdate at step {}, epsilon {:e}:", a.origin, a.epsilon);
    if a.origin == total {
        println!("  never forgotten: no steps follow it, weight stays 1");
    } else if run.weight_decay == 0.0 {
        println!("  never forgotten: no weight decay");
    } else {
        let lambda = average_rate(&prefix, a.origin, total)?;
        match forgetting_time_bound(run.weight_decay, lambda, a.epsilon) {
            Ok(b) => println!("  bound   ln(1/eps)/(gamma*avg lr) = {b} steps (avg lr {lambda:.4e} over the rest of the run)"),
            Err(e) => println!("  bound unavailable: {e}"),
        }
        if let Some(w) = bound_warning(run.weight_decay, lambda) {
            println!("  warning: {w}");
        }
        match exact_forgetting_time(&prefix, a.origin, a.epsilon)? {
            Some(t) => println!("  exact   step {t} ({} steps later)", t - a.origin),
            None => println!(
                "  exact   not forgotten by the end of the run (weight {:.4e})",
                prefix.survival(a.origin, total)?
            ),
        }
    }

    let composition = if total >= 10 {
        let r = composition_report(&prefix)?;
        println!("\nshare of the gradient terms in the final weights, by tenth of the run:");
        for (i, f) in r.decile_fractions.iter().enumerate() {
            println!("  {:>3}-{:<3}%  {:>7.3}%", i * 10, (i + 1) * 10, 100.0 * f);
        }
        println!("  initial weights keep coefficient {:.4e}", r.init_share);
        Some(r)
    } else {
        println!("\ncomposition skipped: fewer than 10 steps");
        None
    };

    let mut out = Artifacts::default();
    if let Some(p) = &a.csv {
        out.add(suffixed(p, ".curves.csv"), |w| write_curves_csv(w, &curves))?;
        if let Some(r) = &composition {
            out.add(suffixed(p, ".composition.csv"), |w| write_composition_csv(w, r))?;
        }
    }
    if let Some(p) = &a.svg {
        let pts: Vec<(String, Vec<(f64, f64)>)> = curves
            .iter()
            .map(|c| (format!("from step {}", c.origin_step), c.samples.iter().map(|&(t, w)| (t as f64, w)).collect()))
            .collect();
        let series: Vec<Series> = pts.iter().map(|(n, p)| Series { name: n, points: p }).collect();
        out.add_text(suffixed(p, ".curves.svg"), &line_chart(&format!("{}: surviving weight", run.name), "step", "weight", &series));
        if let Some(r) = &composition {
            let bars: Vec<(String, f64)> =
                r.decile_fractions.iter().enumerate().map(|(i, f)| (format!("{}-{}%", i * 10, (i + 1) * 10), *f)).collect();
            out.add_text(suffixed(p, ".composition.svg"), &bar_chart(&format!("{}: final-weight composition", run.name), "share", &bars));
        }
    }
    out.commit()?;
    Ok(())
}

pub fn simulate(a: SimulateArgs) -> Result<()> {
    let seed = a.seed.resolve();
    let run = match &a.config {
        Some(c) => load_config(c)?,
        None => {
            let schedule = match a.schedule {
                ScheduleChoice::Constant => ScheduleSpec::constant(a.lr, a.steps),
                ScheduleChoice::Cosine => ScheduleSpec::cosine(a.warmup, a.lr, 0.0, a.steps),
                ScheduleChoice::Linear => ScheduleSpec::linear_decay(a.warmup, a.lr, 0.0, a.steps),
            };
            RunConfig::new("simulate", a.wd, schedule)
        }
    };
    let hyper = match a.optimizer {
        OptimizerKind::AdamW => Hyper { beta1: a.beta1, beta2: a.beta2, adam_epsilon: a.adam_epsilon, ..Hyper::adamw() },
        OptimizerKind::SgdWd => Hyper::sgd(),
        OptimizerKind::SgdMomentumWd => Hyper::sgd_momentum(a.momentum),
    };
    let opt = OptimizerConfig::new(hyper, run, seed);
    opt.validate()?;
    if a.dim == 0 {
        return Err(Error::Argument("--dim must be >= 1".into()));
    }
    let problem: Box<dyn SimProblem> = match a.problem {
        ProblemKind::Quadratic => Box::new(Quadratic::random(a.dim, a.examples, a.min_eig, seed)),
        ProblemKind::Zero => Box::new(ZeroGradient { dim: a.dim }),
    };
    let trace = run_sim(problem.as_ref(), &opt)?;
    let rebuilt = reconstruct_theta(&trace, &opt.run)?;
    let err = max_relative_error(&rebuilt, &trace.theta_final);
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    println!("{} steps, dim {}, |theta_0| = {:.4e}, |theta_T| = {:.4e}", trace.steps(), trace.dim(), norm(&trace.theta_init), norm(&trace.theta_final));
    if let Some(last) = trace.records.last() {
        println!("final loss {:.6e}", last.loss);
    }
    println!("max reconstruction error {err:.3e} (tolerance {RECONSTRUCTION_TOL:e})");

    let mut out = Artifacts::default();
    if let Some(p) = &a.trace {
        out.add(p, |w| trace.write_csv(w))?;
    }
    if let Some(p) = &a.updates {
        out.add(p, |w| trace.write_updates(w))?;
    }
    if !(err <= RECONSTRUCTION_TOL) {
        return Err(Error::Numeric {
            step: trace.steps(),
            what: format!("reconstructed weights differ by {err:.3e}"),
        });
    }
    out.commit()?;
    Ok(())
}

pub fn forget_demo(a: ForgetArgs) -> Result<()> {
    let seed = a.seed.resolve();
    if a.wd.is_empty() {
        return Err(Error::Argument("--wd needs at least one value".into()));
    }
    let settings = ToySettings {
        vocab: a.vocab,
        continuation: match a.mode {
            DemoMode::Repeated => Continuation::Repeated { block_tokens: a.repeat_block },
            _ => Continuation::Fresh,
        },
        contamination_share: if a.mode == DemoMode::Null { 0.0 } else { ToySettings::default().contamination_share },
        checkpoint_every: a.checkpoint_every.unwrap_or(if a.steps >= 20_000 { 500 } else { (a.steps / 40).max(1) }),
        ..ToySettings::default()
    };
    let mut runs: Vec<GapSeries> = Vec::new();
    for &wd in &a.wd {
        let opt = toy_optimizer(a.steps, a.lr, wd, seed);
        let g = run_toy(&settings, &opt)?;
        let (peak, last) = (g.peak(), g.final_point());
        println!(
            "wd {wd}: window steps {}..{}, {} repetitions; peak gap {:.4} nats at step {}; final gap {:.4} (sigma {:.4}), {:.1}% of peak",
            g.window_steps.0,
            g.window_steps.1,
            g.repetitions,
            peak.gap,
            peak.step,
            last.gap,
            last.sigma,
            if peak.gap != 0.0 { 100.0 * last.gap / peak.gap } else { 0.0 }
        );
        if a.mode != DemoMode::Null && wd > 0.0 {
            let prefix = build_prefix(&opt.run)?;
            println!("      decay factor after the window W = {:.4}", prefix.survival(g.window_steps.1, a.steps)?);
        }
        runs.push(g);
    }

    let mut out = Artifacts::default();
    if let Some(p) = &a.csv {
        out.add(p, |w| {
            writeln!(w, "weight_decay,step,gap_ce,sigma")?;
            for g in &runs {
                for pt in &g.points {
                    writeln!(w, "{},{},{},{}", g.weight_decay, pt.step, pt.gap, pt.sigma)?;
                }
            }
            Ok(())
        })?;
    }
    if let Some(p) = &a.svg {
        let pts: Vec<(String, Vec<(f64, f64)>)> = runs
            .iter()
            .map(|g| (format!("wd {}", g.weight_decay), g.points.iter().map(|p| (p.step as f64, p.gap)).collect()))
            .collect();
        let series: Vec<Series> = pts.iter().map(|(n, p)| Series { name: n, points: p }).collect();
        out.add_text(p, &line_chart("contaminated minus holdout cross-entropy", "step", "gap (nats)", &series));
    }
    out.commit()?;
    Ok(())
}

pub fn dedup(a: DedupArgs) -> Result<()> {
    let seed = a.seed.resolve();
    let records = read_records(open(&a.records)?)?;
    let (kept, report) = filter_duplicates(&records, a.threshold, seed)?;
    print!("{}", report.render_table());
    println!("{} of {} records kept, {} duplicate pairs", kept.len(), records.len(), report.duplicate_pairs.len());
    let mut out = Artifacts::default();
    if let Some(p) = &a.out {
        out.add(p, |w| write_records(w, &kept))?;
    }
    if let Some(p) = &a.report {
        let json = serde_json::to_string_pretty(&report).map_err(|e| Error::Format(e.to_string()))?;
        out.add_text(p, &json);
    }
    out.commit()?;
    Ok(())
}

pub fn contaminate(a: ContaminateArgs) -> Result<()> {
    let records = read_records(open(&a.records)?)?;
    let plan = match &a.plan {
        Some(p) => {
            let plan = ContaminationPlan::load(p)?;
            println!("plan loaded from {} (seed {})", p.display(), plan.seed);
            plan
        }
        None => {
            let seed = a.seed.resolve();
            let placement = match a.window.as_deref() {
                Some(&[start_fraction, end_fraction]) => Placement::Window { start_fraction, end_fraction },
                Some(_) => return Err(Error::Argument("--window takes START,END".into())),
                None => Placement::UniformRandom,
            };
            build_plan(
                &records,
                &PlanRequest {
                    subset_sizes: a.subset_sizes.clone(),
                    repetitions: a.repetitions.clone(),
                    holdout_size: a.holdout,
                    placement,
                    seed,
                    weights: a.reference_mix.then(reference_weights),
                },
            )?
        }
    };
    let clean = match &a.stream {
        Some(p) => TokenStream::read_binary(open(p)?)?,
        None => {
            let seed = plan.seed;
            println!("synthetic clean stream: {} tokens, byte vocabulary, seed {seed}", a.synth_tokens);
            synth_corpus(ByteTokenizer::EOT as usize, a.synth_tokens, seed)?.stream
        }
    };
    let stream = inject(&clean, &plan, &records, &ByteTokenizer)?;
    let injected = (stream.len() - clean.len()) as f64;
    println!(
        "{} insertions of {} questions, {} tokens added ({:.4}% of the clean stream)",
        plan.total_insertions(),
        plan.subsets.iter().map(|s| s.question_ids.len()).sum::<usize>(),
        injected,
        100.0 * injected_fraction(injected, clean.len() as f64)
    );
    for s in &plan.subsets {
        println!("  subset {}: {} questions x {}", s.subset_id, s.question_ids.len(), s.repetitions);
    }
    let leaked = audit_holdout(&stream.provenance, &plan.holdout_ids);
    if !leaked.is_empty() {
        return Err(Error::Validation { step: 0, reason: format!("{} holdout questions found in the stream", leaked.len()) });
    }
    println!("holdout: {} questions, none injected", plan.holdout_ids.len());
    let profiles = position_profile(&plan, clean.len() as u64)?;
    let counts = tag_counts(&profiles);
    let summary: Vec<String> = counts.iter().map(|(t, n)| format!("{} {n}", t.as_str())).collect();
    println!("position tags: {}", summary.join(", "));

    let mut out = Artifacts::default();
    out.add(&a.out, |w| stream.write_binary(w))?;
    out.add(suffixed(&a.out, ".prov"), |w| stream.write_provenance(w))?;
    if let Some(p) = &a.plan_out {
        out.add_text(p, &plan.to_json()?);
    }
    if let Some(p) = &a.profile {
        let subset_of: BTreeMap<&str, &str> =
            plan.subsets.iter().flat_map(|s| s.question_ids.iter().map(move |q| (q.as_str(), s.subset_id.as_str()))).collect();
        out.add(p, |w| {
            writeln!(w, "question_id,subset,insertions,mean_offset,tag")?;
            for (id, pr) in &profiles {
                let subset = subset_of.get(id.as_str()).copied().unwrap_or("");
                writeln!(w, "{id},{subset},{},{},{}", pr.offsets.len(), pr.mean, pr.tag.as_str())?;
            }
            Ok(())
        })?;
    }
    out.commit()?;
    Ok(())
}

pub fn gap_stats(a: GapArgs) -> Result<()> {
    let seed = a.seed.resolve();
    let evals = read_outcomes(open(&a.outcomes)?)?;
    let report = gap_report(&evals, a.level, a.resamples, seed)?;
    let pct = 100.0 * a.level;
    println!("{:<12} {:>6} {:>9} {:>19} {:>8} {:>19}", "label", "n", "accuracy", format!("{pct}% CI"), "gap pp", format!("gap {pct}% CI"));
    for r in &report.rows {
        println!(
            "{:<12} {:>6} {:>8.2}% {:>8.2}..{:<8.2}  {:>8.2} {:>8.2}..{:<8.2}",
            r.label,
            r.n,
            100.0 * r.accuracy,
            100.0 * r.ci_low,
            100.0 * r.ci_high,
            r.gap_pp,
            r.gap_ci_low,
            r.gap_ci_high
        );
    }
    let mut out = Artifacts::default();
    if let Some(p) = &a.csv {
        out.add(p, |w| report.write_csv(w))?;
    }
    if let Some(p) = &a.json {
        out.add_text(p, &report.to_json());
    }
    if let Some(p) = &a.svg {
        let bars: Vec<(String, f64)> = report.rows.iter().skip(1).map(|r| (r.label.clone(), r.gap_pp)).collect();
        out.add_text(p, &bar_chart("accuracy gap over the holdout", "gap (pp)", &bars));
    }
    out.commit()?;
    Ok(())
}
