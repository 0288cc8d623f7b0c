use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use wordalign::harness::{
    dump_pca_coords, read_predictions, run_ablations, Pipeline, PipelineConfig, Side,
    TokenPrediction, TopK,
};

#[derive(Parser)]
#[command(
    name = "wordalign",
    version,
    about = "Align spoken-word and text-word embeddings to recognise speech"
)]
struct Cli {
    #[command(flatten)]
    common: CommonArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// INI-style config file; unset keys keep their defaults.
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,
    /// Global seed; overrides `[run] seed` and re-derives the stage seeds.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; overrides `[run] out_dir`.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Override one setting, as `section.key=value`. Repeatable.
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE", global = true)]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic corpus.
    Synth,
    /// Compute MFCC features (recorded audio) or write the synthetic corpus.
    Featurize,
    /// Train the speech embedder.
    TrainSpeech,
    /// Train the text embedder.
    TrainText,
    /// Train the alignment between the projected speech and text sets.
    Align,
    /// Rank text words for every spoken token.
    Decode,
    /// Rescore decoded utterances with the bigram LM at each beam width.
    Rescore,
    /// Recompute paired and unpaired accuracy from a predictions file.
    Eval {
        /// Defaults to `<out_dir>/predictions.jsonl`.
        #[arg(long)]
        predictions: Option<PathBuf>,
    },
    /// Run the disentanglement and phone-encoding ablations.
    Ablate,
    /// Per-word mean embeddings projected on the first three principal components.
    DumpPca {
        /// `speech` (token phonetic vectors) or `text`.
        #[arg(long, default_value = "speech")]
        from: Side,
        /// Comma-separated words; all lexicon words when omitted.
        #[arg(long, value_delimiter = ',')]
        words: Vec<String>,
        /// Write the TSV here instead of stdout.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Run every stage and write the evaluation report.
    RunAll,
}

fn load_config(args: &CommonArgs) -> Result<PipelineConfig> {
    let mut cfg = match &args.config {
        Some(path) => {
            PipelineConfig::load(path).with_context(|| format!("loading {}", path.display()))?
        }
        None => PipelineConfig::default(),
    };
    for o in &args.overrides {
        let (lhs, value) = o
            .split_once('=')
            .with_context(|| format!("`{o}` is not SECTION.KEY=VALUE"))?;
        let (section, key) = lhs
            .split_once('.')
            .with_context(|| format!("`{lhs}` is not SECTION.KEY"))?;
        cfg.apply(section.trim(), key.trim(), value.trim())?;
    }
    if let Some(seed) = args.seed {
        cfg.set_seed(seed);
    }
    if let Some(dir) = &args.out_dir {
        cfg.out_dir = dir.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write_config(cfg: &PipelineConfig) -> Result<()> {
    std::fs::create_dir_all(&cfg.out_dir)
        .with_context(|| format!("creating {}", cfg.out_dir.display()))?;
    let path = cfg.out_dir.join("config.ini");
    std::fs::write(&path, cfg.to_text()).with_context(|| format!("writing {}", path.display()))
}

fn topk_line(name: &str, t: &TopK) -> String {
    format!(
        "{name:<10} {:>6} {:>8.1} {:>8.1}",
        t.tokens, t.top1, t.top10
    )
}

fn eval_predictions(preds: &[TokenPrediction]) -> Result<String> {
    let paired: Vec<&TokenPrediction> = preds.iter().filter(|p| p.seed).collect();
    let unpaired: Vec<&TokenPrediction> = preds.iter().filter(|p| !p.seed).collect();
    Ok(format!(
        "{:<10} {:>6} {:>8} {:>8}\n{}\n{}\n",
        "set",
        "tokens",
        "top-1",
        "top-10",
        topk_line("paired", &TopK::from_predictions(&paired)?),
        topk_line("unpaired", &TopK::from_predictions(&unpaired)?)
    ))
}

fn run(cli: Cli) -> Result<()> {
    let cfg = load_config(&cli.common)?;
    write_config(&cfg)?;
    let out_dir = cfg.out_dir.clone();
    match cli.command {
        Command::Synth => {
            if !cfg.paths.is_synthetic() {
                bail!("`synth` needs a config without [paths] manifest");
            }
            let mut p = Pipeline::new(cfg)?;
            let d = p.dataset()?;
            println!(
                "{} spoken words, {} lexicon words, {} LM sentences -> {}",
                d.segments.len(),
                d.lexicon.len(),
                d.transcripts.len(),
                out_dir.join("corpus").display()
            );
        }
        Command::Featurize => {
            let mut p = Pipeline::new(cfg)?;
            let d = p.dataset()?;
            let frames: usize = d.segments.iter().map(|s| s.frames.rows()).sum();
            println!("{} segments, {frames} frames", d.segments.len());
        }
        Command::TrainSpeech => {
            let mut p = Pipeline::new(cfg)?;
            p.speech_model()?;
            let t = p.speech_trace();
            if let (Some(first), Some(last)) = (t.first(), t.last()) {
                println!(
                    "speech embedder, {} epochs: reconstruction {:.4} -> {:.4}, speaker {:.4}, discriminator {:.4}",
                    t.len(),
                    first.reconstruction,
                    last.reconstruction,
                    last.speaker,
                    last.discriminator
                );
            }
        }
        Command::TrainText => {
            let mut p = Pipeline::new(cfg)?;
            p.text_model()?;
            let t = p.text_trace();
            if let (Some(first), Some(last)) = (t.first(), t.last()) {
                println!(
                    "text embedder, {} epochs: reconstruction {first:.4} -> {last:.4}",
                    t.len()
                );
            }
        }
        Command::Align => {
            let mut p = Pipeline::new(cfg)?;
            let a = p.alignment()?;
            println!(
                "{} seed pairs, k = {}, alignment loss {:.6} -> {:.6}",
                a.seeds.len(),
                a.transform.dim(),
                a.trace.first().copied().unwrap_or(f64::NAN),
                a.trace.last().copied().unwrap_or(f64::NAN)
            );
        }
        Command::Decode => {
            let mut p = Pipeline::new(cfg)?;
            let preds = p.decode()?.to_vec();
            print!("{}", eval_predictions(&preds)?);
        }
        Command::Rescore => {
            let mut p = Pipeline::new(cfg)?;
            let (acc, _) = p.rescore()?;
            if acc.is_empty() {
                println!("no transcripts configured; nothing to rescore");
            }
            for a in acc {
                println!("K={:<4} {:.1}", a.beam_width, a.accuracy);
            }
        }
        Command::Eval { predictions } => {
            let path = predictions.unwrap_or_else(|| out_dir.join("predictions.jsonl"));
            let preds =
                read_predictions(&path).with_context(|| format!("reading {}", path.display()))?;
            print!("{}", eval_predictions(&preds)?);
        }
        Command::Ablate => {
            let report = run_ablations(&cfg)?;
            print!("{}", report.table());
        }
        Command::DumpPca {
            from,
            words,
            output,
        } => {
            let mut p = Pipeline::new(cfg)?;
            let words = if words.is_empty() {
                p.dataset()?.lexicon.words().map(str::to_string).collect()
            } else {
                words
            };
            let (labels, vectors) = p.embedding_table(from)?;
            let tsv = dump_pca_coords(&labels, &vectors, &words)?;
            match output {
                Some(path) => std::fs::write(&path, tsv)
                    .with_context(|| format!("writing {}", path.display()))?,
                None => print!("{tsv}"),
            }
        }
        Command::RunAll => {
            let report = Pipeline::new(cfg)?.run()?;
            print!("{}", report.table());
        }
    }
    Ok(())
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
