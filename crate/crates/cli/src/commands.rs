use std::collections::BTreeMap;
use std::ops::ControlFlow;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use bimsmt::context::AblationMask;
use bimsmt::context::ContextModel;
use bimsmt::corpus::{
    corpus_stats, extract_directory, read_jsonl, split_corpus, write_jsonl, Conversation, Direction, ExtractOptions,
    Language, SplitRatio,
};
use bimsmt::eval::{ablation_text, evaluate as score, run_ablation, Aligned, EvalOptions, Smoothing};
use bimsmt::nmt::{sentences_in, BaseNmt, EpochLog, RnnLms, Vocabs};
use bimsmt::rng::component_rng;
use bimsmt::tensor::ParamStore;
use bimsmt::train::{
    conversation_reps, hyp_to_jsonl, parse_hyp_jsonl, translate_conversation, translate_corpus, ContextualNmt,
    RunConfig,
};
use clap::Args;
use serde::Serialize;

use crate::manifest::RunManifest;
use crate::models::{self, check_dims, placeholder_lms, ModelKind, ModelMeta};
use crate::{ConfigArgs, DataArgs};

impl ConfigArgs {
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .with_context(|| format!("--set expects KEY=VALUE, got {kv:?}"))?;
            cfg.set(k.trim(), v)?;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

impl DataArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        if let Some(p) = &self.train {
            cfg.train = Some(p.clone());
        }
        if let Some(p) = &self.dev {
            cfg.dev = Some(p.clone());
        }
    }
}

fn read_corpus(path: &Path, m: &mut RunManifest) -> Result<Vec<Conversation>> {
    if !path.is_file() {
        bail!("corpus not found: {}", path.display());
    }
    m.input(path)?;
    Ok(read_jsonl(path)?)
}

fn train_and_dev(cfg: &RunConfig, m: &mut RunManifest) -> Result<(Vec<Conversation>, Vec<Conversation>)> {
    let train = cfg
        .train
        .as_deref()
        .context("no training data; pass --train or set `train` in the config")?;
    let train = read_corpus(train, m)?;
    if train.is_empty() {
        bail!("training corpus is empty");
    }
    let dev = match cfg.dev.as_deref() {
        Some(p) => read_corpus(p, m)?,
        None => Vec::new(),
    };
    Ok((train, dev))
}

fn create_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    }
    Ok(())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    create_parent(path)?;
    std::fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

fn log_epoch(what: &str) -> impl FnMut(&EpochLog) -> ControlFlow<()> + '_ {
    move |l| {
        log::info!(
            "{what} epoch {} lr {:.4} train nll/token {:.4} dev ppl {:.4}",
            l.epoch,
            l.lr,
            l.train_nll,
            l.dev_perplexity
        );
        ControlFlow::Continue(())
    }
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    /// Directory holding `en/` and one foreign-language directory.
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 5)]
    max_speakers: usize,
    #[arg(long, default_value_t = 100)]
    max_len: usize,
    /// train:dev:test
    #[arg(long, default_value = "100:2:3")]
    ratio: SplitRatio,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Serialize)]
struct ExtractSnapshot<'a> {
    input: &'a Path,
    options: ExtractOptions,
    ratio: SplitRatio,
}

pub fn extract(a: ExtractArgs) -> Result<()> {
    let mut m = RunManifest::start("extract");
    let options = ExtractOptions {
        max_speakers: a.max_speakers,
        max_len: a.max_len,
    };
    if a.max_speakers == 0 || a.max_len < 2 {
        bail!("--max-speakers must be positive and --max-len at least 2");
    }
    m.config(&ExtractSnapshot {
        input: &a.input,
        options,
        ratio: a.ratio,
    })?;
    m.root_seed = Some(a.seed);
    if !a.input.is_dir() {
        bail!("input directory not found: {}", a.input.display());
    }
    let ex = extract_directory(&a.input, options)?;
    let mut docs: Vec<_> = walk_files(&a.input)?;
    docs.sort();
    for d in &docs {
        m.input(d)?;
    }
    let splits = split_corpus(ex.conversations, a.ratio, a.seed)?;
    std::fs::create_dir_all(&a.out).with_context(|| format!("cannot create {}", a.out.display()))?;
    let mut stats = BTreeMap::new();
    for (name, part) in [("train", &splits.train), ("dev", &splits.dev), ("test", &splits.test)] {
        let p = a.out.join(format!("{name}.jsonl"));
        write_jsonl(&p, part)?;
        m.output(&p)?;
        stats.insert(name, serde_json::to_value(corpus_stats(part))?);
    }
    let report = serde_json::json!({ "counts": ex.counts, "splits": stats });
    let p = a.out.join("stats.json");
    write_text(&p, &(serde_json::to_string_pretty(&report)? + "\n"))?;
    m.output(&p)?;
    let mp = m.write(&a.out.join("manifest.json"))?;
    log::info!(
        "kept {} conversations ({} train, {} dev, {} test); manifest {}",
        ex.counts.kept,
        splits.train.len(),
        splits.dev.len(),
        splits.test.len(),
        mp.display()
    );
    Ok(())
}

fn walk_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for e in std::fs::read_dir(dir)? {
        let p = e?.path();
        if p.is_dir() {
            out.extend(walk_files(&p)?);
        } else if p.is_file() {
            out.push(p);
        }
    }
    Ok(out)
}

#[derive(Debug, Args)]
pub struct TrainBaseArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    #[command(flatten)]
    data: DataArgs,
    /// en2fr, fr2en or both.
    #[arg(long = "dir", default_value = "both")]
    direction: String,
    #[arg(long)]
    out: PathBuf,
}

pub fn train_base(a: TrainBaseArgs) -> Result<()> {
    let mut cfg = a.cfg.resolve()?;
    a.data.apply(&mut cfg);
    let directions: Vec<Direction> = match a.direction.as_str() {
        "both" => Direction::ALL.to_vec(),
        d => vec![d.parse()?],
    };
    let mut m = RunManifest::start("train-base");
    m.config(&cfg)?;
    m.seeds(cfg.seed, &["init", "shuffle"]);
    let (train, dev) = train_and_dev(&cfg, &mut m)?;
    let vocabs = Vocabs::build(&train, cfg.vocab)?;
    let dims = vocabs.dims(cfg.embed, cfg.hidden, cfg.align);
    let (tr, dv) = (vocabs.encode_all(&train), vocabs.encode_all(&dev));
    let mut store = ParamStore::new();
    let base = BaseNmt::new(&mut store, dims, &mut component_rng(cfg.seed, "init"))?;
    let report = bimsmt::nmt::train_base(
        &mut store,
        &base,
        &directions,
        &tr,
        &dv,
        &cfg.base_options(),
        &mut component_rng(cfg.seed, "shuffle"),
        log_epoch("base"),
    )?;
    log::info!(
        "best epoch {} dev ppl {:.4}",
        report.best_epoch,
        report.best_dev_perplexity
    );
    let meta = ModelMeta {
        kind: ModelKind::Base,
        dims,
        vocabs,
        directions,
        context: None,
        config: cfg,
        reports: vec![("base".into(), report)],
    };
    models::save(&a.out, &meta, &store)?;
    m.output(&a.out)?;
    m.write_beside(&a.out)?;
    Ok(())
}

#[derive(Debug, Args)]
pub struct TrainRnnlmArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    #[command(flatten)]
    data: DataArgs,
    /// Base checkpoint whose vocabularies and sizes the models share.
    #[arg(long)]
    base: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

pub fn train_rnnlm(a: TrainRnnlmArgs) -> Result<()> {
    let mut cfg = a.cfg.resolve()?;
    a.data.apply(&mut cfg);
    let mut m = RunManifest::start("train-rnnlm");
    m.config(&cfg)?;
    m.seeds(cfg.seed, &["lm", "lm-shuffle"]);
    let base = models::load(&a.base, &[ModelKind::Base, ModelKind::Contextual])?;
    m.input(&a.base)?;
    check_dims(&cfg, &base.meta.dims, &a.base)?;
    let (train, dev) = train_and_dev(&cfg, &mut m)?;
    let vocabs = base.meta.vocabs.clone();
    let dims = base.meta.dims;
    let (tr, dv) = (vocabs.encode_all(&train), vocabs.encode_all(&dev));
    let mut store = ParamStore::new();
    let lms = RnnLms::new(&mut store, dims, &mut component_rng(cfg.seed, "lm"))?;
    let mut reports = Vec::new();
    for lang in [Language::English, Language::Foreign] {
        let what = format!("lm.{}", lang.code());
        let r = bimsmt::nmt::train_rnnlm(
            &mut store,
            lms.get(lang),
            &sentences_in(&tr, lang),
            &sentences_in(&dv, lang),
            &cfg.lm_options(),
            &mut component_rng(cfg.seed, "lm-shuffle"),
            log_epoch(&what),
        )?;
        reports.push((what, r));
    }
    let meta = ModelMeta {
        kind: ModelKind::Rnnlm,
        dims,
        vocabs,
        directions: Vec::new(),
        context: None,
        config: cfg,
        reports,
    };
    models::save(&a.out, &meta, &store)?;
    m.output(&a.out)?;
    m.write_beside(&a.out)?;
    Ok(())
}

#[derive(Debug, Args)]
pub struct TrainContextArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    #[command(flatten)]
    data: DataArgs,
    /// Base checkpoint; give it twice when the directions were trained
    /// separately.
    #[arg(long, required = true)]
    base: Vec<PathBuf>,
    /// Language-model checkpoint.
    #[arg(long)]
    lm: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

/// Base parameters assembled from one or more base checkpoints, each
/// contributing the directions it trained.
fn merged_base(paths: &[PathBuf], m: &mut RunManifest) -> Result<(ModelMeta, ParamStore, BaseNmt)> {
    let mut merged: Option<(ModelMeta, ParamStore, BaseNmt)> = None;
    for p in paths {
        let l = models::load(p, &[ModelKind::Base])?;
        m.input(p)?;
        let (store, model) = l.contextual()?;
        match &mut merged {
            None => merged = Some((l.meta, store, model.base)),
            Some((meta, dst, _)) => {
                if meta.vocabs != l.meta.vocabs || meta.dims != l.meta.dims {
                    bail!("{} was trained on different vocabularies or sizes", p.display());
                }
                for d in &l.meta.directions {
                    dst.load_matching(&store.subset(&model.base.direction(*d).prefix()))?;
                    if !meta.directions.contains(d) {
                        meta.directions.push(*d);
                    }
                }
            }
        }
    }
    let (meta, store, base) = merged.context("no base checkpoint given")?;
    for d in Direction::ALL {
        if !meta.directions.contains(&d) {
            bail!("no base checkpoint trained direction {d}");
        }
    }
    Ok((meta, store, base))
}

pub fn train_context(a: TrainContextArgs) -> Result<()> {
    let mut cfg = a.cfg.resolve()?;
    a.data.apply(&mut cfg);
    let mut m = RunManifest::start("train-context");
    m.config(&cfg)?;
    m.seeds(cfg.seed, &["ctx", "ctx-shuffle"]);
    let (base_meta, base_store, base) = merged_base(&a.base, &mut m)?;
    check_dims(&cfg, &base_meta.dims, &a.base[0])?;
    let lm = models::load(&a.lm, &[ModelKind::Rnnlm])?;
    m.input(&a.lm)?;
    if lm.meta.vocabs != base_meta.vocabs || lm.meta.dims != base_meta.dims {
        bail!(
            "{} does not share the base model's vocabularies and sizes",
            a.lm.display()
        );
    }
    let (lm_store, lms) = lm.lms()?;
    let (train, dev) = train_and_dev(&cfg, &mut m)?;
    let vocabs = &base_meta.vocabs;
    let (tr, dv) = (vocabs.encode_all(&train), vocabs.encode_all(&dev));
    let tr_reps = conversation_reps(&base_store, &base, &lm_store, &lms, &tr)?;
    let dv_reps = conversation_reps(&base_store, &base, &lm_store, &lms, &dv)?;
    let mut store = base_store.clone();
    let ctx = ContextModel::new(
        &mut store,
        cfg.context,
        base_meta.dims.hidden,
        &mut component_rng(cfg.seed, "ctx"),
    )?;
    let model = ContextualNmt {
        base,
        context: Some(ctx),
    };
    let report = bimsmt::train::train_contextual(
        &mut store,
        &model,
        &tr,
        &tr_reps,
        &dv,
        &dv_reps,
        &cfg.contextual_options(),
        &mut component_rng(cfg.seed, "ctx-shuffle"),
        log_epoch("context"),
    )?;
    log::info!(
        "best epoch {} dev ppl {:.4}",
        report.best_epoch,
        report.best_dev_perplexity
    );
    let meta = ModelMeta {
        kind: ModelKind::Contextual,
        dims: base_meta.dims,
        vocabs: base_meta.vocabs,
        directions: Direction::ALL.to_vec(),
        context: Some(cfg.context),
        config: cfg,
        reports: vec![("context".into(), report)],
    };
    models::save(&a.out, &meta, &store)?;
    m.output(&a.out)?;
    m.write_beside(&a.out)?;
    Ok(())
}

/// A model ready to decode, with the language models it reads.
struct Decoder {
    meta: ModelMeta,
    store: ParamStore,
    model: ContextualNmt,
    lm_store: ParamStore,
    lms: RnnLms,
}

fn decoder(model: &Path, lm: Option<&Path>, m: &mut RunManifest) -> Result<Decoder> {
    let l = models::load(model, &[ModelKind::Base, ModelKind::Contextual])?;
    m.input(model)?;
    let (store, net) = l.contextual()?;
    let (lm_store, lms) = match (&net.context, lm) {
        (Some(_), Some(p)) => {
            let lm = models::load(p, &[ModelKind::Rnnlm])?;
            m.input(p)?;
            if lm.meta.vocabs != l.meta.vocabs || lm.meta.dims != l.meta.dims {
                bail!("{} does not share the model's vocabularies and sizes", p.display());
            }
            lm.lms()?
        }
        (Some(_), None) => bail!("{} is contextual and needs --lm", model.display()),
        (None, _) => placeholder_lms(l.meta.dims)?,
    };
    Ok(Decoder {
        meta: l.meta,
        store,
        model: net,
        lm_store,
        lms,
    })
}

#[derive(Debug, Args)]
pub struct TranslateArgs {
    /// Base or contextual checkpoint.
    #[arg(long)]
    model: PathBuf,
    /// Language-model checkpoint, needed by contextual models.
    #[arg(long)]
    lm: Option<PathBuf>,
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// History parts left visible, e.g. `all` or `current_turn+prev_turns_other_lang`.
    #[arg(long)]
    mask: Option<AblationMask>,
    /// Only the previous sentence is visible as history.
    #[arg(long)]
    local_prev_sentence_only: bool,
    /// Writes context attention weights per sentence as JSONL.
    #[arg(long)]
    attention: Option<PathBuf>,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    jobs: u64,
}

pub fn translate(a: TranslateArgs) -> Result<()> {
    let mut m = RunManifest::start("translate");
    let d = decoder(&a.model, a.lm.as_deref(), &mut m)?;
    let ctx = d.meta.context;
    let mask = a.mask.or(ctx.map(|c| c.ablation_mask)).unwrap_or(AblationMask::ALL);
    let local = a.local_prev_sentence_only || ctx.is_some_and(|c| c.local_prev_sentence_only);
    let model = d.model.with_view(mask, local);
    m.config(&serde_json::json!({
        "context": model.context.as_ref().map(|c| c.config),
        "jobs": a.jobs,
    }))?;
    let convs = read_corpus(&a.input, &mut m)?;
    let hyps = translate_corpus(
        &d.store,
        &model,
        &d.lm_store,
        &d.lms,
        &d.meta.vocabs,
        &convs,
        a.jobs as usize,
    )?;
    write_text(&a.out, &hyp_to_jsonl(&hyps))?;
    m.output(&a.out)?;
    if let Some(p) = &a.attention {
        let mut text = String::new();
        for c in &convs {
            let enc = d.meta.vocabs.encode_conversation(c);
            let out = translate_conversation(&d.store, &model, &d.lm_store, &d.lms, &enc)?;
            for (k, s) in out.iter().enumerate() {
                let line = serde_json::json!({ "id": c.id, "sentence": k, "attention": s.context_attention });
                text.push_str(&line.to_string());
                text.push('\n');
            }
        }
        write_text(p, &text)?;
        m.output(p)?;
    }
    m.write_beside(&a.out)?;
    Ok(())
}

fn smoothing(s: &str) -> Result<Smoothing> {
    match s {
        "none" => Ok(Smoothing::None),
        "add_one" => Ok(Smoothing::AddOne),
        _ => bail!(bimsmt::Error::Config(format!(
            "unknown smoothing {s:?}, expected none or add_one"
        ))),
    }
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Hypotheses written by `translate`.
    #[arg(long)]
    hyp: PathBuf,
    /// Reference conversations.
    #[arg(long = "ref")]
    reference: PathBuf,
    /// Second system's hypotheses, for significance and token analysis.
    #[arg(long)]
    baseline: Option<PathBuf>,
    /// JSON report path; the text table always goes to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 1000)]
    samples: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// none or add_one
    #[arg(long, default_value = "none")]
    smoothing: String,
    #[arg(long, default_value_t = 20)]
    top: usize,
}

fn read_hyps(path: &Path, m: &mut RunManifest) -> Result<Vec<bimsmt::train::HypConversation>> {
    if !path.is_file() {
        bail!("hypotheses not found: {}", path.display());
    }
    m.input(path)?;
    let text = std::fs::read_to_string(path)?;
    parse_hyp_jsonl(&text).with_context(|| format!("in {}", path.display()))
}

pub fn evaluate(a: EvaluateArgs) -> Result<()> {
    let mut m = RunManifest::start("evaluate");
    let opts = EvalOptions {
        smoothing: smoothing(&a.smoothing)?,
        bootstrap_samples: a.samples,
        seed: a.seed,
        top_tokens: a.top,
    };
    m.config(&opts)?;
    m.root_seed = Some(a.seed);
    let hyps = read_hyps(&a.hyp, &mut m)?;
    let refs = read_corpus(&a.reference, &mut m)?;
    let baseline = match &a.baseline {
        Some(p) => Some(read_hyps(p, &mut m)?),
        None => None,
    };
    let aligned = Aligned::new(&hyps, &refs, baseline.as_deref())?;
    let report = score(&aligned, &opts)?;
    print!("{}", report.to_text());
    if let Some(out) = &a.out {
        write_text(out, &(serde_json::to_string_pretty(&report)? + "\n"))?;
        m.output(out)?;
        m.write_beside(out)?;
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    /// Contextual checkpoint.
    #[arg(long)]
    model: PathBuf,
    /// Base checkpoint for the no-context row.
    #[arg(long, required = true)]
    base: Vec<PathBuf>,
    #[arg(long)]
    lm: PathBuf,
    #[arg(long = "in")]
    input: PathBuf,
    /// Comma-separated masks.
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "all,current_turn,prev_turns_same_lang,prev_turns_other_lang"
    )]
    masks: Vec<AblationMask>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value = "none")]
    smoothing: String,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    jobs: u64,
}

pub fn ablate(a: AblateArgs) -> Result<()> {
    let mut m = RunManifest::start("ablate");
    let sm = smoothing(&a.smoothing)?;
    m.config(&serde_json::json!({
        "masks": a.masks.iter().map(|x| x.to_string()).collect::<Vec<_>>(),
        "smoothing": sm,
    }))?;
    let d = decoder(&a.model, Some(&a.lm), &mut m)?;
    if d.model.context.is_none() {
        bail!("{} is not a contextual checkpoint", a.model.display());
    }
    let (base_meta, base_store, _) = merged_base(&a.base, &mut m)?;
    if base_meta.vocabs != d.meta.vocabs || base_meta.dims != d.meta.dims {
        bail!("base and contextual checkpoints disagree on vocabularies or sizes");
    }
    let convs = read_corpus(&a.input, &mut m)?;
    let rows = run_ablation(
        &base_store,
        &d.store,
        &d.model,
        &d.lm_store,
        &d.lms,
        &d.meta.vocabs,
        &convs,
        &a.masks,
        sm,
        a.jobs as usize,
    )?;
    print!("{}", ablation_text(&rows));
    if let Some(out) = &a.out {
        write_text(out, &(serde_json::to_string_pretty(&rows)? + "\n"))?;
        m.output(out)?;
        m.write_beside(out)?;
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    /// Conversations (JSONL).
    #[arg(long = "in")]
    input: PathBuf,
}

pub fn stats(a: StatsArgs) -> Result<()> {
    if !a.input.is_file() {
        bail!("corpus not found: {}", a.input.display());
    }
    let convs = read_jsonl(&a.input)?;
    println!("{}", serde_json::to_string_pretty(&corpus_stats(&convs))?);
    Ok(())
}
