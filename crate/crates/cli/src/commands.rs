// SPDX-License-Identifier: Apache-2.0

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use curriculum_core::analysis::{
    self, composition_timeline, loss_ratio_entry, read_loss_log, AnalysisReport, Balance, NamedTimeline,
    SpearmanEntry,
};
use curriculum_core::corpus::{self, load_corpus, write_corpus, Corpus, Stage};
use curriculum_core::curricula::{self, CurriculumInputs, Strategy};
use curriculum_core::gradstore::read_dump_dir;
use curriculum_core::heuristics::{read_scores, score_corpus, write_scores, ScoreTable};
use curriculum_core::influence::{self, InfluenceConfig, InfluenceMatrix};

use crate::config::PipelineConfig;
use crate::{AnalyzeArgs, BuildArgs, Cli, Command, CorpusCommand, InfluenceArgs, PlotArgs, ScoresArgs};

struct Ctx {
    cfg: PipelineConfig,
    out: PathBuf,
}

impl Ctx {
    fn corpus(&self, flag: Option<PathBuf>) -> Result<Corpus> {
        let path = flag
            .or_else(|| self.cfg.corpus.clone())
            .context("no corpus given (--corpus or `corpus` in the config)")?;
        load_corpus(&path).with_context(|| format!("loading corpus {}", path.display()))
    }

    fn out_path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn ensure_out(&self) -> Result<()> {
        fs::create_dir_all(&self.out).with_context(|| format!("creating {}", self.out.display()))
    }
}

pub fn run(cli: Cli) -> Result<ExitCode> {
    let cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    cfg.check_paths()?;
    let out = cli
        .out_dir
        .clone()
        .or_else(|| cfg.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    let ctx = Ctx { cfg, out };
    match cli.command {
        Command::Corpus(c) => corpus_cmd(&ctx, c),
        Command::Influence(a) => influence_cmd(&ctx, a),
        Command::Scores(a) => scores_cmd(&ctx, a),
        Command::Build(a) => build_cmd(&ctx, a),
        Command::Analyze(a) => analyze_cmd(&ctx, a),
        Command::Plot(a) => plot_cmd(&ctx, a),
        Command::Config => {
            print!("{}", ctx.cfg.to_toml());
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn describe(c: &Corpus) -> String {
    let mut s = format!("corpus {}: {} documents, {} words\n", c.name(), c.len(), c.total_words());
    for (stage, words) in Stage::ALL.iter().zip(c.stage_words()) {
        let docs = c.documents().iter().filter(|d| d.stage == *stage).count();
        s.push_str(&format!("  {stage}: {docs} documents, {words} words\n"));
    }
    s.push_str(&format!("  longest document: {} words\n", c.max_doc_len()));
    s
}

fn corpus_cmd(ctx: &Ctx, cmd: CorpusCommand) -> Result<ExitCode> {
    match cmd {
        CorpusCommand::Inspect { corpus } => {
            print!("{}", describe(&ctx.corpus(corpus)?));
        }
        CorpusCommand::Equitoken { corpus, length, out } => {
            let c = ctx.corpus(corpus)?;
            let (derived, report) = corpus::synth_equitoken(&c, length)?;
            let path = out.unwrap_or_else(|| ctx.out_path(&format!("{}.jsonl", derived.name())));
            ctx.ensure_out()?;
            write_corpus(&derived, &path)?;
            println!(
                "{} documents from {} groups ({} trailing words dropped) -> {}",
                report.documents,
                report.groups,
                report.dropped_words,
                path.display()
            );
        }
        CorpusCommand::Stratify {
            corpus,
            words_per_stage,
            seed,
            out,
        } => {
            let c = ctx.corpus(corpus)?;
            let derived = corpus::stratify(&c, words_per_stage, seed.unwrap_or(ctx.cfg.seed))?;
            let path = out.unwrap_or_else(|| ctx.out_path(&format!("{}.jsonl", derived.name())));
            ctx.ensure_out()?;
            write_corpus(&derived, &path)?;
            print!("{}", describe(&derived));
            println!("-> {}", path.display());
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn influence_cmd(ctx: &Ctx, a: InfluenceArgs) -> Result<ExitCode> {
    let dumps = a
        .dumps
        .or_else(|| ctx.cfg.dumps.clone())
        .context("no dump directory given (--dumps or `dumps` in the config)")?;
    let mut set = read_dump_dir(&dumps)?;
    let weights = a.weights.unwrap_or_else(|| ctx.cfg.influence.weights.clone());
    if !weights.is_empty() {
        set = set.with_weights(weights)?;
    }
    // dumps may cover more documents than the corpus; the corpus is
    // only used to check coverage
    if a.corpus.is_some() || ctx.cfg.corpus.is_some() {
        let c = ctx.corpus(a.corpus)?;
        let have: std::collections::HashSet<u64> = set.doc_ids().iter().copied().collect();
        let missing = c.doc_ids().into_iter().filter(|id| !have.contains(id)).count();
        if missing > 0 {
            bail!("{missing} corpus documents have no gradient rows");
        }
    }
    let config = InfluenceConfig {
        include_self: ctx.cfg.influence.include_self && !a.exclude_self,
        chunk_size: a.chunk_size.unwrap_or(ctx.cfg.influence.chunk_size),
    };
    let phi = influence::influence_matrix(&set, config)?;
    ctx.ensure_out()?;
    influence::write_phi(&phi, ctx.out_path("phi.bin"))?;
    influence::write_phi_table(&phi, ctx.out_path("phi.tsv"))?;
    let zero: usize = set
        .checkpoints()
        .iter()
        .map(|c| influence::normalize_rows(c).zero_rows())
        .sum();
    println!(
        "influence: {} documents x {} checkpoints{} -> {}",
        phi.n_docs(),
        phi.n_checkpoints(),
        if zero > 0 { format!(" ({zero} zero gradient rows)") } else { String::new() },
        ctx.out_path("phi.bin").display()
    );
    Ok(ExitCode::SUCCESS)
}

fn scores_cmd(ctx: &Ctx, a: ScoresArgs) -> Result<ExitCode> {
    let c = ctx.corpus(a.corpus)?;
    let table = score_corpus(
        &c,
        a.window.unwrap_or(ctx.cfg.heuristics.window),
        a.alpha.unwrap_or(ctx.cfg.heuristics.alpha),
    )?;
    ctx.ensure_out()?;
    write_scores(&table, ctx.out_path("scores.tsv"))?;
    println!("scores: {} documents -> {}", table.rows.len(), ctx.out_path("scores.tsv").display());
    Ok(ExitCode::SUCCESS)
}

fn optional_input<T>(
    explicit: Option<PathBuf>,
    fallback: PathBuf,
    read: impl FnOnce(&Path) -> Result<T>,
) -> Result<Option<T>> {
    match explicit {
        Some(p) => read(&p).map(Some),
        None if fallback.exists() => read(&fallback).map(Some),
        None => Ok(None),
    }
}

fn build_cmd(ctx: &Ctx, a: BuildArgs) -> Result<ExitCode> {
    let c = ctx.corpus(a.corpus.clone())?;
    let mut spec = ctx.cfg.strategy.clone();
    macro_rules! set {
        ($($f:ident),*) => { $(if let Some(v) = a.$f { spec.$f = v; })* };
    }
    set!(epochs, block_size, segments, keep_fraction, epochs_per_stage, mu, sigma);
    if a.single_shuffle {
        spec.reshuffle = false;
    }
    if a.start_low {
        spec.alternate_start_high = false;
    }
    let seed = a.seed.unwrap_or(ctx.cfg.seed);
    let budget = a.budget.unwrap_or(ctx.cfg.budget);

    let strategies: Vec<Strategy> = if a.all {
        Strategy::ALL.to_vec()
    } else {
        let name = a.strategy.as_deref().expect("clap requires --strategy without --all");
        vec![Strategy::parse(name, a.direction)?]
    };
    let phi: Option<InfluenceMatrix> = optional_input(a.phi, ctx.out_path("phi.bin"), |p| {
        influence::read_phi(p).with_context(|| format!("reading {}", p.display()))
    })?;
    let scores: Option<ScoreTable> = optional_input(a.scores, ctx.out_path("scores.tsv"), |p| {
        read_scores(p).with_context(|| format!("reading {}", p.display()))
    })?;
    let inputs = CurriculumInputs {
        phi: phi.as_ref(),
        scores: scores.as_ref(),
    };

    ctx.ensure_out()?;
    let mut failures = 0;
    for s in strategies {
        let m = curricula::build(s, &c, inputs, &spec, seed, budget).with_context(|| format!("building {s}"))?;
        let report = curricula::validate_manifest(&m, &c);
        let name = s.name();
        curricula::write_manifest(&m, ctx.out_path(&format!("{name}.cman")))?;
        let mut text = Vec::new();
        curricula::write_manifest_text(&m, &mut text)?;
        fs::write(ctx.out_path(&format!("{name}.txt")), text)?;
        fs::write(ctx.out_path(&format!("{name}.validation.txt")), report.to_string())?;
        for w in &m.warnings {
            eprintln!("warning: {name}: {w}");
        }
        let status = if report.is_ok() { "ok" } else { "INVALID" };
        println!(
            "{name:<14} {status:<8} {} epochs, {} words{}",
            m.epochs.len(),
            m.total_words(),
            if m.truncated { " (budget reached)" } else { "" }
        );
        if !report.is_ok() {
            failures += 1;
            eprint!("{report}");
        }
    }
    Ok(if failures == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn manifest_name(path: &Path) -> String {
    path.file_stem().map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned())
}

fn read_pairs(path: &Path) -> Result<(Vec<f64>, Vec<f64>)> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let f: Vec<&str> = line.split(|c: char| c == ',' || c.is_whitespace()).filter(|s| !s.is_empty()).collect();
        match f.as_slice() {
            [x, y] => match (x.parse(), y.parse()) {
                (Ok(x), Ok(y)) => {
                    xs.push(x);
                    ys.push(y);
                }
                _ if xs.is_empty() => continue,
                _ => bail!("{}:{}: cannot parse {line:?}", path.display(), i + 1),
            },
            _ => bail!("{}:{}: expected two columns", path.display(), i + 1),
        }
    }
    Ok((xs, ys))
}

fn analyze_cmd(ctx: &Ctx, a: AnalyzeArgs) -> Result<ExitCode> {
    let settings = &ctx.cfg.analysis;
    let losses: Vec<PathBuf> = if a.loss.is_empty() { settings.loss_logs.clone() } else { a.loss };
    if a.manifests.is_empty() && losses.is_empty() && a.spearman.is_empty() {
        bail!("nothing to analyze: give --manifests, --loss or --spearman");
    }
    let mut report = AnalysisReport::default();

    if !a.manifests.is_empty() {
        let c = ctx.corpus(a.corpus)?;
        let segments = a.segments.unwrap_or(settings.segments);
        let balance = if a.count_balanced { Balance::Documents } else { settings.balance };
        let mut manifests = Vec::new();
        for p in &a.manifests {
            let m = curricula::read_manifest(p)?;
            if m.corpus_hash != c.content_hash() {
                bail!("{} was built for corpus {:?}, not this one", p.display(), m.corpus_name);
            }
            manifests.push((manifest_name(p), m));
        }
        for (name, m) in &manifests {
            let timeline = composition_timeline(m, &c, segments, balance).with_context(|| format!("timeline of {name}"))?;
            report.timelines.push(NamedTimeline {
                name: name.clone(),
                timeline,
            });
        }
        if settings.jsd && !a.no_jsd {
            report.jsd = analysis::pairwise_jsd(&report.timelines)?;
        }
        if settings.tau && !a.no_tau {
            for (i, (na, ma)) in manifests.iter().enumerate() {
                for (nb, mb) in &manifests[i + 1..] {
                    report.tau.push(analysis::tau_entry(na, ma, nb, mb));
                }
            }
        }
    }
    for p in &losses {
        let series = read_loss_log(p)?;
        report.loss_ratio.push(loss_ratio_entry(&manifest_name(p), &series));
    }
    for p in &a.spearman {
        let (x, y) = read_pairs(p)?;
        let rho = analysis::spearman(&x, &y).with_context(|| format!("spearman of {}", p.display()))?;
        let stem = manifest_name(p);
        report.spearman.push(SpearmanEntry {
            x: format!("{stem}:x"),
            y: format!("{stem}:y"),
            rho,
        });
    }

    ctx.ensure_out()?;
    let text = report.to_text();
    fs::write(ctx.out_path("report.txt"), &text)?;
    fs::write(ctx.out_path("report.json"), report.to_json())?;
    for e in &report.loss_ratio {
        let mut s = String::from("step\tloss\tratio\n");
        for ((st, l), r) in e.steps.iter().zip(&e.losses).zip(&e.ratios) {
            s.push_str(&format!("{st}\t{l}\t{r}\n"));
        }
        fs::write(ctx.out_path(&format!("{}.loss_ratio.tsv", e.name)), s)?;
    }
    print!("{text}");
    Ok(ExitCode::SUCCESS)
}

fn plot_cmd(ctx: &Ctx, a: PlotArgs) -> Result<ExitCode> {
    let path = a.report.unwrap_or_else(|| ctx.out_path("report.json"));
    let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    let report: AnalysisReport = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    ctx.ensure_out()?;
    let mut written = Vec::new();
    for t in &report.timelines {
        let p = ctx.out_path(&format!("composition_{}.svg", t.name));
        fs::write(&p, analysis::svg_composition(&t.name, &t.timeline))?;
        written.push(p);
    }
    if !report.jsd.is_empty() {
        let p = ctx.out_path("jsd.svg");
        fs::write(&p, analysis::svg_jsd_table(&report.jsd))?;
        written.push(p);
    }
    if !report.loss_ratio.is_empty() {
        let p = ctx.out_path("loss.svg");
        fs::write(&p, analysis::svg_loss_curves(&report.loss_ratio))?;
        written.push(p);
    }
    for p in &written {
        println!("{}", p.display());
    }
    Ok(ExitCode::SUCCESS)
}
