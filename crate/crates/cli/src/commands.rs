use std::collections::HashSet;
use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use bottleneck::encoders::{
    fnv1a, EmbeddingTable, FileBackedEncoder, ShuffledEncoder, TextEncoder, Tokenizer,
};
use bottleneck::grammar::{
    read_corpus, write_corpus, GenerateOptions, Grammar, Prompt, Vocabulary,
};
use bottleneck::mmeval::{compare, mm_report, read_pairs};
use bottleneck::pipeline::{
    beam_config, build_encoder, check_disjoint, embed, probe_and_evaluate, texts,
    train_autoencoder, EncoderKind, PipelineError,
};
use bottleneck::probe::{
    decode_all, describe, load_encoder, read_decodes, save_encoder, write_decodes, EncoderInfo,
    ProbeCheckpoint, ProbeError,
};
use bottleneck::textmetrics::{join, stratify, EvalReport, ReportFormat};
use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::{serde_enum, Cli, Command, DecodeArgs, EncoderArgs, TrainArgs, UserError};

/// Inputs, outputs and settings of one invocation.
struct Run {
    out: PathBuf,
    cfg: RunConfig,
    inputs: Vec<Value>,
    outputs: Vec<String>,
    details: Value,
}

impl Run {
    fn input(&mut self, path: &Path) -> anyhow::Result<Vec<u8>> {
        let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        self.inputs.push(json!({
            "path": path.display().to_string(),
            "bytes": bytes.len(),
            "fnv1a": format!("{:016x}", fnv1a(&bytes)),
        }));
        Ok(bytes)
    }

    fn corpus(&mut self, path: &Path) -> anyhow::Result<Vec<Prompt>> {
        let bytes = self.input(path)?;
        read_corpus(&bytes[..]).with_context(|| format!("corpus {}", path.display()))
    }

    fn table(&mut self, path: &Path) -> anyhow::Result<EmbeddingTable> {
        self.input(path)?;
        EmbeddingTable::load(path).with_context(|| format!("embedding table {}", path.display()))
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn output(&mut self, name: &str, bytes: &[u8]) -> anyhow::Result<()> {
        let path = self.path(name);
        fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
        self.outputs.push(name.to_string());
        Ok(())
    }

    fn manifest(&mut self, command: &str) -> anyhow::Result<()> {
        let manifest = json!({
            "tool": "bottleneck",
            "version": env!("CARGO_PKG_VERSION"),
            "command": command,
            "config": self.cfg,
            "inputs": self.inputs,
            "outputs": self.outputs,
            "details": self.details,
        });
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        let name = format!("{command}.manifest.json");
        fs::write(self.path(&name), text)?;
        Ok(())
    }
}

fn grammar(cfg: &RunConfig) -> anyhow::Result<Grammar> {
    Ok(match cfg.vocab.as_str() {
        "desk" => Grammar::desk(),
        "full" => Grammar::full(),
        path => Grammar::new(Vocabulary::load(path)?)?,
    })
}

fn pretty(v: &impl serde::Serialize) -> anyhow::Result<Vec<u8>> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    Ok(s.into_bytes())
}

fn format_flag(cfg: &mut RunConfig, flag: &Option<String>) -> anyhow::Result<()> {
    if let Some(f) = flag {
        cfg.eval.format = serde_enum::<ReportFormat>(f).map_err(UserError)?;
    }
    Ok(())
}

fn apply_encoder(cfg: &mut RunConfig, a: &EncoderArgs) {
    if let Some(k) = a.encoder {
        cfg.encoder.kind = k;
    }
    if let Some(d) = a.dim {
        cfg.encoder.dim = d;
    }
    if let Some(h) = a.encoder_hidden {
        cfg.encoder.hidden = h;
    }
    if a.no_shuffle {
        cfg.encoder.shuffle = false;
    }
}

fn apply_train(cfg: &mut RunConfig, a: &TrainArgs, autoenc: bool) {
    let section = if autoenc {
        &mut cfg.autoenc
    } else {
        &mut cfg.train
    };
    if let Some(e) = a.epochs {
        section.epochs = e;
    }
    if let Some(b) = a.batch_size {
        section.batch_size = b;
    }
    if let Some(lr) = a.lr {
        section.lr = lr;
    }
    if let Some(h) = a.probe_hidden {
        cfg.probe.hidden = h;
    }
    if let Some(l) = a.probe_layers {
        cfg.probe.layers = l;
    }
    if let Some(c) = a.conditioning {
        cfg.probe.conditioning = c;
    }
}

fn apply_decode(cfg: &mut RunConfig, a: &DecodeArgs) {
    if let Some(b) = a.beam {
        cfg.train.beam = b;
    }
    if let Some(m) = a.max_len {
        cfg.train.max_len = m;
    }
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    let mut cfg = RunConfig::load(cli.global.config.as_deref())?;
    if let Some(s) = cli.global.seed {
        cfg.seed = s;
    }
    if let Some(t) = cli.global.threads {
        cfg.threads = Some(t);
    }
    if let Some(v) = &cli.global.vocab {
        cfg.vocab = v.clone();
    }
    match &cli.command {
        Command::Gen {
            per_type, clamp, ..
        } => {
            if let Some(n) = per_type {
                cfg.gen.per_type = *n;
            }
            cfg.gen.clamp |= clamp;
        }
        Command::Autoenc { encoder, opt, .. } => {
            apply_encoder(&mut cfg, encoder);
            apply_train(&mut cfg, opt, true);
        }
        Command::Probe {
            encoder,
            opt,
            decode,
            format,
            ..
        } => {
            apply_encoder(&mut cfg, encoder);
            apply_train(&mut cfg, opt, false);
            apply_decode(&mut cfg, decode);
            format_flag(&mut cfg, format)?;
        }
        Command::Decode {
            encoder, decode, ..
        } => {
            apply_encoder(&mut cfg, encoder);
            apply_decode(&mut cfg, decode);
        }
        Command::EvalText { format, .. } | Command::Report { format, .. } => {
            format_flag(&mut cfg, format)?;
        }
        Command::EvalMm {
            scoring, format, ..
        } => {
            if let Some(s) = scoring {
                cfg.eval.scoring = *s;
            }
            format_flag(&mut cfg, format)?;
        }
    }
    if let Some(n) = cfg.threads {
        if n == 0 {
            bail!(UserError("threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("starting worker pool")?;
    }
    fs::create_dir_all(&cli.global.out)
        .with_context(|| format!("creating {}", cli.global.out.display()))?;
    let mut run = Run {
        out: cli.global.out.clone(),
        cfg,
        inputs: Vec::new(),
        outputs: Vec::new(),
        details: Value::Null,
    };
    match &cli.command {
        Command::Gen { exclude, .. } => gen(&mut run, exclude)?,
        Command::Autoenc { train, .. } => autoenc(&mut run, train)?,
        Command::Probe {
            train,
            eval,
            encoder,
            train_embeddings,
            eval_embeddings,
            allow_overlap,
            ..
        } => probe(
            &mut run,
            train,
            eval,
            encoder.encoder_checkpoint.as_deref(),
            train_embeddings.as_deref().zip(eval_embeddings.as_deref()),
            *allow_overlap,
        )?,
        Command::Decode {
            checkpoint,
            corpus,
            encoder,
            embeddings,
            decode,
        } => decode_cmd(
            &mut run,
            checkpoint,
            corpus,
            encoder.encoder_checkpoint.as_deref(),
            embeddings.as_deref(),
            decode,
        )?,
        Command::EvalText {
            corpus, decodes, ..
        } => eval_text(&mut run, corpus, decodes)?,
        Command::EvalMm { pairs, compare, .. } => eval_mm(&mut run, pairs, compare.as_deref())?,
        Command::Report { runs, .. } => report(&mut run, runs)?,
    }
    run.manifest(cli.command.name())
}

fn gen(run: &mut Run, exclude: &[PathBuf]) -> anyhow::Result<()> {
    let g = grammar(&run.cfg)?;
    let mut taken = HashSet::new();
    for path in exclude {
        taken.extend(run.corpus(path)?.into_iter().map(|p| p.text));
    }
    let mut opts = GenerateOptions::new(run.cfg.gen.per_type, run.cfg.seed);
    opts.clamp_to_capacity = run.cfg.gen.clamp;
    let (corpus, plans) = g.generate_corpus(&opts, &taken)?;
    let mut bytes = Vec::new();
    write_corpus(&mut bytes, &corpus)?;
    run.output("corpus.jsonl", &bytes)?;
    let cells: Vec<Value> = plans
        .iter()
        .map(|p| {
            json!({
                "cell": p.cell,
                "capacity": p.capacity.to_string(),
                "requested": p.requested,
                "produced": p.produced,
            })
        })
        .collect();
    let summary = json!({ "total": corpus.len(), "cells": cells });
    run.output("corpus.summary.json", &pretty(&summary)?)?;
    println!("{} prompts in {} cells", corpus.len(), plans.len());
    Ok(())
}

fn require_pooled(kind: EncoderKind) -> anyhow::Result<()> {
    if matches!(kind, EncoderKind::Pooled | EncoderKind::PooledAutoenc) {
        Ok(())
    } else {
        bail!(UserError(format!("encoder `{kind}` is not trainable")))
    }
}

fn train_encoder(
    run: &mut Run,
    tok: &Tokenizer,
    train: &[Prompt],
) -> anyhow::Result<bottleneck::encoders::PooledEncoder<f32>> {
    let settings = run.cfg.encoder_settings();
    require_pooled(settings.kind)?;
    let result = match train_autoencoder(
        &settings,
        tok,
        &texts(train),
        &run.cfg.probe_settings(),
        &run.cfg.autoenc_config(),
    ) {
        Ok(r) => r,
        Err(ProbeError::EncoderNonFinite {
            epoch,
            batch,
            last_good: Some(enc),
        }) => {
            save_encoder(&enc, f64::NAN, 0, &run.path("encoder.last_good.ckpt"))?;
            return Err(ProbeError::EncoderNonFinite {
                epoch,
                batch,
                last_good: None,
            }
            .into());
        }
        Err(e) => return Err(e.into()),
    };
    save_encoder(
        &result.encoder,
        result.best_val_loss,
        result.best_epoch,
        &run.path("encoder.ckpt"),
    )?;
    run.outputs.push("encoder.ckpt".into());
    let history = json!({
        "best_epoch": result.best_epoch,
        "best_val_loss": result.best_val_loss,
        "initial_val_loss": result.initial_val_loss,
        "history": result.history,
    });
    run.output("autoenc.history.json", &pretty(&history)?)?;
    Ok(result.encoder)
}

fn autoenc(run: &mut Run, train: &Path) -> anyhow::Result<()> {
    let g = grammar(&run.cfg)?;
    let tok = Tokenizer::from_vocab(g.vocab());
    let corpus = run.corpus(train)?;
    train_encoder(run, &tok, &corpus)?;
    Ok(())
}

fn shuffled(run: &Run, inner: Box<dyn TextEncoder>) -> Box<dyn TextEncoder> {
    match run.cfg.encoder_settings().shuffle {
        Some(seed) => Box::new(ShuffledEncoder::new(inner, seed)),
        None => inner,
    }
}

fn table_encoder(run: &mut Run, path: &Path) -> anyhow::Result<Box<dyn TextEncoder>> {
    let table = run.table(path)?;
    Ok(shuffled(run, Box::new(FileBackedEncoder::new(table))))
}

/// Builtin encoder from settings, with pooled weights from `checkpoint`.
fn builtin_encoder(
    run: &mut Run,
    tok: &Tokenizer,
    checkpoint: Option<&Path>,
) -> anyhow::Result<Box<dyn TextEncoder>> {
    let trained = match checkpoint {
        Some(p) => {
            require_pooled(run.cfg.encoder.kind)?;
            run.input(p)?;
            let enc = load_encoder(p).with_context(|| format!("encoder {}", p.display()))?;
            if enc.tokenizer() != tok {
                bail!(UserError(format!(
                    "encoder {} was trained with a different vocabulary",
                    p.display()
                )));
            }
            Some(enc)
        }
        None => None,
    };
    Ok(build_encoder(&run.cfg.encoder_settings(), tok, trained)?)
}

fn write_report(run: &mut Run, stem: &str, report: &EvalReport) -> anyhow::Result<()> {
    let format = run.cfg.eval.format;
    run.output(
        &format!("{stem}.json"),
        report.render(ReportFormat::Json).as_bytes(),
    )?;
    if format != ReportFormat::Json {
        run.output(
            &format!("{stem}.{}", format.extension()),
            report.render(format).as_bytes(),
        )?;
    }
    print!("{}", report.render(format));
    Ok(())
}

fn probe(
    run: &mut Run,
    train_path: &Path,
    eval_path: &Path,
    encoder_checkpoint: Option<&Path>,
    tables: Option<(&Path, &Path)>,
    allow_overlap: bool,
) -> anyhow::Result<()> {
    let g = grammar(&run.cfg)?;
    let tok = Tokenizer::from_vocab(g.vocab());
    let train = run.corpus(train_path)?;
    let eval = run.corpus(eval_path)?;
    if !allow_overlap {
        check_disjoint(&train, &eval)?;
    }
    let (train_enc, eval_enc) = match tables {
        Some((a, b)) => {
            let (a, b) = (table_encoder(run, a)?, table_encoder(run, b)?);
            if a.name() != b.name() || a.dim() != b.dim() {
                bail!(UserError(format!(
                    "embedding tables come from different encoders ({} / {})",
                    a.name(),
                    b.name()
                )));
            }
            (a, Some(b))
        }
        None if encoder_checkpoint.is_none()
            && run.cfg.encoder.kind == EncoderKind::PooledAutoenc =>
        {
            let trained = train_encoder(run, &tok, &train)?;
            (
                build_encoder(&run.cfg.encoder_settings(), &tok, Some(trained))?,
                None,
            )
        }
        None => (builtin_encoder(run, &tok, encoder_checkpoint)?, None),
    };
    let eval_enc = eval_enc.as_deref().unwrap_or(&*train_enc);
    let train_emb = embed(&*train_enc, &train).context("embedding the training corpus")?;
    let eval_emb = embed(eval_enc, &eval).context("embedding the evaluation corpus")?;
    let info = EncoderInfo {
        name: train_enc.name(),
        dim: train_enc.dim(),
    };
    let result = probe_and_evaluate(
        info.clone(),
        &train_emb,
        &train,
        &eval_emb,
        &eval,
        &tok,
        &run.cfg.probe_settings(),
        &run.cfg.train_config(),
    );
    let result = match result {
        Ok(r) => r,
        Err(PipelineError::Probe(ProbeError::NonFinite {
            epoch,
            batch,
            last_good,
        })) => {
            if let Some(ck) = last_good {
                ck.save(&run.path("probe.last_good.ckpt"))?;
            }
            return Err(ProbeError::NonFinite {
                epoch,
                batch,
                last_good: None,
            }
            .into());
        }
        Err(e) => return Err(e.into()),
    };
    result.training.checkpoint.save(&run.path("probe.ckpt"))?;
    run.outputs.push("probe.ckpt".into());
    let mut decodes = Vec::new();
    write_decodes(&mut decodes, &result.decodes)?;
    run.output("decodes.jsonl", &decodes)?;
    let training = json!({ "encoder": info, "training": describe(&result.training) });
    run.output("training.json", &pretty(&training)?)?;
    run.details = json!({ "encoder": info });
    write_report(run, "report", &result.report)
}

fn decode_cmd(
    run: &mut Run,
    checkpoint: &Path,
    corpus: &Path,
    encoder_checkpoint: Option<&Path>,
    embeddings: Option<&Path>,
    args: &DecodeArgs,
) -> anyhow::Result<()> {
    run.input(checkpoint)?;
    let ckpt = ProbeCheckpoint::load(checkpoint)
        .with_context(|| format!("probe {}", checkpoint.display()))?;
    let prompts = run.corpus(corpus)?;
    let encoder = match embeddings {
        Some(p) => table_encoder(run, p)?,
        None => builtin_encoder(run, &ckpt.tokenizer, encoder_checkpoint)?,
    };
    if encoder.name() != ckpt.encoder.name || encoder.dim() != ckpt.encoder.dim {
        bail!(UserError(format!(
            "probe was trained on `{}` ({}-dim) but the encoder is `{}` ({}-dim)",
            ckpt.encoder.name,
            ckpt.encoder.dim,
            encoder.name(),
            encoder.dim()
        )));
    }
    let emb = embed(&*encoder, &prompts)?;
    let mut beam = beam_config(&ckpt.train);
    if let Some(b) = args.beam {
        beam.beam = b;
    }
    if let Some(m) = args.max_len {
        beam.max_len = m;
    }
    let ids: Vec<&str> = prompts.iter().map(|p| p.id.as_str()).collect();
    let out = decode_all(
        &ckpt.model,
        &ckpt.tokenizer,
        &ids,
        &texts(&prompts),
        &emb,
        &beam,
    )?;
    let mut bytes = Vec::new();
    write_decodes(&mut bytes, &out)?;
    run.output("decodes.jsonl", &bytes)?;
    run.details = json!({ "beam": beam, "encoder": ckpt.encoder });
    println!("decoded {} prompts", out.len());
    Ok(())
}

fn eval_text(run: &mut Run, corpus: &Path, decodes: &Path) -> anyhow::Result<()> {
    let prompts = run.corpus(corpus)?;
    let bytes = run.input(decodes)?;
    let decoded = read_decodes(BufReader::new(&bytes[..]))
        .with_context(|| format!("decodes {}", decodes.display()))?;
    let report = stratify(&join(&prompts, &decoded)?)?;
    write_report(run, "report", &report)
}

fn eval_mm(run: &mut Run, pairs: &Path, other: Option<&Path>) -> anyhow::Result<()> {
    let scoring = run.cfg.eval.scoring;
    let format = run.cfg.eval.format;
    let bytes = run.input(pairs)?;
    let records = read_pairs(&bytes[..]).with_context(|| format!("pairs {}", pairs.display()))?;
    let report = mm_report(&records, scoring);
    let rendered = match format {
        ReportFormat::Markdown => report.to_markdown(),
        ReportFormat::Csv => report.to_csv(),
        ReportFormat::Json => String::from_utf8(pretty(&report)?)?,
    };
    run.output(
        &format!("mm_report.{}", format.extension()),
        rendered.as_bytes(),
    )?;
    print!("{rendered}");
    if let Some(path) = other {
        let bytes = run.input(path)?;
        let b = read_pairs(&bytes[..]).with_context(|| format!("pairs {}", path.display()))?;
        let cmp = compare(&records, &b, scoring)?;
        let rendered = match format {
            ReportFormat::Markdown => cmp.to_markdown(),
            ReportFormat::Csv => cmp.to_csv(),
            ReportFormat::Json => String::from_utf8(pretty(&cmp)?)?,
        };
        run.output(
            &format!("mm_compare.{}", format.extension()),
            rendered.as_bytes(),
        )?;
        print!("{rendered}");
    }
    Ok(())
}

fn report(run: &mut Run, dirs: &[PathBuf]) -> anyhow::Result<()> {
    let mut rows = Vec::new();
    for dir in dirs {
        let report: EvalReport = serde_json::from_slice(&run.input(&dir.join("report.json"))?)
            .map_err(|e| UserError(format!("{}/report.json: {e}", dir.display())))?;
        let training: Value = serde_json::from_slice(&run.input(&dir.join("training.json"))?)
            .map_err(|e| UserError(format!("{}/training.json: {e}", dir.display())))?;
        let encoder = training["encoder"]["name"]
            .as_str()
            .unwrap_or("?")
            .to_string();
        let dim = training["encoder"]["dim"].as_u64().unwrap_or(0);
        rows.push((dir.display().to_string(), encoder, dim, report));
    }
    let opt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.1}"));
    let format = run.cfg.eval.format;
    let rendered = match format {
        ReportFormat::Markdown => {
            let mut s = String::from(
                "| run | encoder | dim | EM | multiples EM | negation EM | BLEU-4 | Shuffled% |\n|---|---|---|---|---|---|---|---|\n",
            );
            for (dir, enc, dim, r) in &rows {
                s.push_str(&format!(
                    "| {dir} | {enc} | {dim} | {} | {} | {} | {} | {} |\n",
                    opt(r.headline.as_ref().map(|a| a.em)),
                    opt(r.multiples.as_ref().map(|a| a.em)),
                    opt(r.negation.as_ref().map(|a| a.em)),
                    opt(r.headline.as_ref().map(|a| a.bleu)),
                    opt(r.shuffled),
                ));
            }
            s
        }
        ReportFormat::Csv => {
            let mut s = String::from("run,encoder,dim,em,multiples_em,negation_em,bleu,shuffled\n");
            let num = |v: Option<f64>| v.map_or_else(String::new, |x| format!("{x:.4}"));
            for (dir, enc, dim, r) in &rows {
                s.push_str(&format!(
                    "{dir},{enc},{dim},{},{},{},{},{}\n",
                    num(r.headline.as_ref().map(|a| a.em)),
                    num(r.multiples.as_ref().map(|a| a.em)),
                    num(r.negation.as_ref().map(|a| a.em)),
                    num(r.headline.as_ref().map(|a| a.bleu)),
                    num(r.shuffled),
                ));
            }
            s
        }
        ReportFormat::Json => {
            let rows: Vec<Value> = rows
                .iter()
                .map(|(dir, enc, dim, r)| json!({ "run": dir, "encoder": enc, "dim": dim, "report": r }))
                .collect();
            String::from_utf8(pretty(&rows)?)?
        }
    };
    run.output(
        &format!("summary.{}", format.extension()),
        rendered.as_bytes(),
    )?;
    print!("{rendered}");
    Ok(())
}
