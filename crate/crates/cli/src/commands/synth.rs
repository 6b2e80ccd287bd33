use std::fs;

use anticipation::ingest::write_manifest;
use anticipation::synth::{generate_football_corpus, generate_synthetic_corpus, CorpusSpec};
use serde_json::json;

use crate::artifacts::{series_path, write_bytes, Run};
use crate::error::{CliError, CliResult};
use crate::{SynthArgs, SynthKind};

pub fn run(args: &SynthArgs) -> CliResult<()> {
    let mut run = Run::start("synth", args, &args.out)?;
    let corpus = match args.kind {
        SynthKind::Categories => generate_synthetic_corpus(&CorpusSpec::five_categories(), args.n_events, args.seed)?,
        SynthKind::HighVolume => generate_synthetic_corpus(&CorpusSpec::high_volume(), args.n_events, args.seed)?,
        SynthKind::Football => generate_football_corpus(args.n_events, args.seed)?,
    };

    let manifest = run.path("manifest.csv");
    write_manifest(&manifest, &corpus.events)?;
    run.output(&manifest);

    let dir = run.path("series");
    fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    let mut truth = String::new();
    for ((ev, series), params) in corpus.events.iter().zip(&corpus.series).zip(&corpus.truth) {
        let path = series_path(&dir, ev);
        series.write_csv(&path)?;
        run.output(&path);
        truth.push_str(&serde_json::to_string(&json!({ "event": ev.id(), "params": params }))?);
        truth.push('\n');
    }
    let truth_path = run.path("truth.jsonl");
    write_bytes(&truth_path, truth.as_bytes())?;
    run.output(&truth_path);

    run.write_json(
        "synth_summary.json",
        &json!({ "kind": args.kind, "n_events": corpus.len(), "seed": args.seed }),
    )?;
    println!("synth: {} events written to {}", corpus.len(), args.out.display());
    run.finish()
}
