use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use pairmt::checkpoint::Checkpoint;
use pairmt::config::ExperimentConfig;
use pairmt::corpus::{
    filter_mono_by_length, filter_pairs_by_length, generate_toy_corpus, read_parallel,
    read_sentences, write_parallel, write_sentences,
};
use pairmt::em::{evaluate, joint_train, translate_sentences, Direction, Split, TaskData};

#[derive(Parser)]
#[command(
    name = "pairmt",
    version,
    about = "Train paired translation models jointly on bitext and monolingual data"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(clap::Args)]
struct ConfigArgs {
    /// Experiment configuration file (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Named preset: baseline, backtrans or joint-em.
    #[arg(long)]
    preset: Option<String>,
    /// Override the master seed (data and training).
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic two-language corpus.
    GenData {
        /// Output directory for the corpus files.
        #[arg(long)]
        out: PathBuf,
        /// Overwrite files in a non-empty directory.
        #[arg(long)]
        force: bool,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Train both directions on the bitext only.
    Pretrain {
        /// Directory produced by gen-data.
        #[arg(long)]
        data: PathBuf,
        /// Working directory for checkpoints and logs.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Full pipeline: pretraining plus EM iterations (resumes if interrupted).
    JointTrain {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Override the number of EM iterations.
        #[arg(long)]
        iterations: Option<usize>,
        /// Override the synthesis n-best size.
        #[arg(long)]
        n_best: Option<usize>,
        /// Force all pseudo-pair weights to 1 (ablation).
        #[arg(long)]
        weight_1: bool,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Translate a file of sentences with a trained checkpoint.
    Translate {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Input text, one sentence per line.
        #[arg(long)]
        input: PathBuf,
        /// Output file; stdout when omitted.
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long, default_value_t = 8)]
        beam: usize,
    },
    /// Corpus BLEU of a checkpoint against a reference file.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Source text, one sentence per line.
        #[arg(long)]
        source: PathBuf,
        /// Reference translations, aligned line by line.
        #[arg(long)]
        reference: PathBuf,
        #[arg(long, default_value_t = 8)]
        beam: usize,
    },
}

fn resolve_config(args: &ConfigArgs) -> Result<ExperimentConfig> {
    let mut cfg = match (&args.config, &args.preset) {
        (Some(_), Some(_)) => bail!("pass either --config or --preset, not both"),
        (Some(path), None) => {
            ExperimentConfig::load(path).with_context(|| format!("loading {}", path.display()))?
        }
        (None, Some(name)) => ExperimentConfig::preset(name)
            .with_context(|| format!("unknown preset {name:?} (try baseline, backtrans, joint-em)"))?,
        (None, None) => ExperimentConfig::default(),
    };
    if let Some(seed) = args.seed {
        cfg.toy.seed = seed;
        cfg.em.seed = seed;
    }
    Ok(cfg)
}

fn gen_data(out: &Path, force: bool, cfg: &ExperimentConfig) -> Result<()> {
    if out.exists() && out.read_dir()?.next().is_some() && !force {
        bail!(
            "output directory {} is not empty (use --force to overwrite)",
            out.display()
        );
    }
    std::fs::create_dir_all(out)?;
    let s = cfg.sizes;
    let data = generate_toy_corpus(
        cfg.toy,
        s.n_parallel,
        s.n_mono_src,
        s.n_mono_tgt,
        s.n_dev,
        s.n_test,
    )?;
    write_parallel(&out.join("train.src"), &out.join("train.tgt"), &data.bitext)?;
    write_sentences(&out.join("mono.src"), &data.mono_src)?;
    write_sentences(&out.join("mono.tgt"), &data.mono_tgt)?;
    write_parallel(&out.join("dev.src"), &out.join("dev.tgt"), &data.dev)?;
    write_parallel(&out.join("test.src"), &out.join("test.tgt"), &data.test)?;
    cfg.save(&out.join("experiment.toml"))?;
    eprintln!(
        "wrote {} train pairs, {}+{} monolingual, {} dev, {} test to {}",
        data.bitext.len(),
        data.mono_src.len(),
        data.mono_tgt.len(),
        data.dev.len(),
        data.test.len(),
        out.display()
    );
    Ok(())
}

fn load_task(data: &Path, max_len: usize) -> Result<TaskData> {
    let bitext = read_parallel(&data.join("train.src"), &data.join("train.tgt"))?;
    let mono_src = read_sentences(&data.join("mono.src"))?;
    let mono_tgt = read_sentences(&data.join("mono.tgt"))?;
    let dev = read_parallel(&data.join("dev.src"), &data.join("dev.tgt"))?;
    let test = read_parallel(&data.join("test.src"), &data.join("test.tgt"))?;

    let (bitext, dropped_bi) = filter_pairs_by_length(&bitext, max_len);
    let (mono_src, d1) = filter_mono_by_length(&mono_src, max_len);
    let (mono_tgt, d2) = filter_mono_by_length(&mono_tgt, max_len);
    if dropped_bi + d1 + d2 > 0 {
        eprintln!(
            "dropped {dropped_bi} bitext pairs and {} monolingual sentences longer than {max_len} tokens",
            d1 + d2
        );
    }
    Ok(TaskData::new(
        bitext,
        mono_src,
        mono_tgt,
        dev,
        test,
        usize::MAX,
    )?)
}

fn run_training(data: &Path, out: &Path, cfg: &ExperimentConfig) -> Result<()> {
    let task = load_task(data, cfg.em.model.max_len)?;
    let outcome = joint_train(out, &task, &cfg.em)?;
    for s in &outcome.summaries {
        println!("{}", serde_json::to_string(s)?);
    }
    let test_s2t = evaluate(&outcome.s2t, &task, Direction::SrcToTgt, Split::Test, cfg.em.eval_beam)?;
    let test_t2s = evaluate(&outcome.t2s, &task, Direction::TgtToSrc, Split::Test, cfg.em.eval_beam)?;
    println!(
        "best iteration s2t={} t2s={}",
        outcome.best_iter_s2t, outcome.best_iter_t2s
    );
    println!("test bleu s2t: {}", test_s2t.to_line());
    println!("test bleu t2s: {}", test_t2s.to_line());
    Ok(())
}

fn translate(checkpoint: &Path, input: &Path, output: Option<&Path>, beam: usize) -> Result<()> {
    let ckpt = Checkpoint::load(checkpoint)
        .with_context(|| format!("loading {}", checkpoint.display()))?;
    let model = ckpt.to_model()?;
    let sentences = read_sentences(input)?;
    let sources: Vec<Vec<u32>> = sentences.iter().map(|s| ckpt.src_vocab.encode(s)).collect();
    let hyps = translate_sentences(&model, &sources, &ckpt.tgt_vocab, beam);
    let text: String = hyps
        .iter()
        .map(|h| h.join(" "))
        .collect::<Vec<_>>()
        .join("\n")
        + "\n";
    match output {
        Some(path) => std::fs::write(path, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn evaluate_files(checkpoint: &Path, source: &Path, reference: &Path, beam: usize) -> Result<()> {
    let ckpt = Checkpoint::load(checkpoint)
        .with_context(|| format!("loading {}", checkpoint.display()))?;
    let model = ckpt.to_model()?;
    let src = read_sentences(source)?;
    let refs = read_sentences(reference)?;
    if src.len() != refs.len() {
        bail!(
            "source has {} lines but reference has {}",
            src.len(),
            refs.len()
        );
    }
    let sources: Vec<Vec<u32>> = src.iter().map(|s| ckpt.src_vocab.encode(s)).collect();
    let hyps = translate_sentences(&model, &sources, &ckpt.tgt_vocab, beam);
    let refs: Vec<Vec<_>> = refs.into_iter().map(|r| vec![r]).collect();
    let report = pairmt::bleu::corpus_bleu(&hyps, &refs)?;
    println!("{}", report.to_line());
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().cmd {
        Cmd::GenData { out, force, cfg } => {
            let cfg = resolve_config(&cfg)?;
            gen_data(&out, force, &cfg)
        }
        Cmd::Pretrain { data, out, cfg } => {
            let mut cfg = resolve_config(&cfg)?;
            cfg.em.iterations = 0;
            run_training(&data, &out, &cfg)
        }
        Cmd::JointTrain {
            data,
            out,
            iterations,
            n_best,
            weight_1,
            cfg,
        } => {
            let mut cfg = resolve_config(&cfg)?;
            if let Some(n) = iterations {
                cfg.em.iterations = n;
            }
            if let Some(n) = n_best {
                cfg.em.e_step.n_best = n;
                cfg.em.e_step.beam_size = cfg.em.e_step.beam_size.max(n);
            }
            if weight_1 {
                cfg.em.e_step.weights_all_one = true;
            }
            run_training(&data, &out, &cfg)
        }
        Cmd::Translate {
            checkpoint,
            input,
            output,
            beam,
        } => translate(&checkpoint, &input, output.as_deref(), beam),
        Cmd::Evaluate {
            checkpoint,
            source,
            reference,
            beam,
        } => evaluate_files(&checkpoint, &source, &reference, beam),
    }
}
