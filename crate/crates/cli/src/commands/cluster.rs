use std::collections::BTreeMap;

use anticipation::pipeline::{run_clustering, ClusterConfig, ClusterSource};
use serde_json::json;

use crate::artifacts::{flush, load_corpus, load_fits, FITS_FILE, Run};
use crate::error::{CliError, CliResult};
use crate::{ClusterArgs, SourceArg};

fn sources(s: SourceArg) -> Vec<ClusterSource> {
    match s {
        SourceArg::All => ClusterSource::ALL.to_vec(),
        SourceArg::Proposed => vec![ClusterSource::Proposed],
        SourceArg::Spikem => vec![ClusterSource::Spikem],
        SourceArg::Powerlaw => vec![ClusterSource::Powerlaw],
        SourceArg::Fraction => vec![ClusterSource::Fraction],
    }
}

pub fn run(args: &ClusterArgs) -> CliResult<()> {
    if args.k_min == 0 || args.k_min > args.k_max {
        return Err(CliError::Usage(format!("invalid K range {}..={}", args.k_min, args.k_max)));
    }
    let mut run = Run::start("cluster", args, &args.data.out)?;
    let (events, _) = load_corpus(&args.data.manifest(), &args.data.series_dir(), &mut run)?;
    let fits = load_fits(&args.data.out.join(FITS_FILE), &events, &mut run)?;
    let cfg = ClusterConfig {
        k_min: args.k_min,
        k_max: args.k_max,
        selection_restarts: args.selection_restarts,
        restarts: args.restarts,
        seed: args.seed,
        circular_phase: args.circular_phase,
    };

    let selected = sources(args.features);
    let mut summary = BTreeMap::new();
    let mut failures = Vec::new();
    for source in &selected {
        let result = match run_clustering(&events, &fits, *source, &cfg) {
            Ok(r) => r,
            // with every source requested, one lacking fits is reported rather than fatal
            Err(e) if selected.len() > 1 => {
                println!("cluster {source}: skipped: {e}");
                summary.insert(source.as_str(), json!({ "error": e.to_string() }));
                failures.push(e);
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        let (mut w, path) = run.csv_writer(&format!("clusters_{source}.csv"))?;
        w.write_record(["event", "category", "cluster"])?;
        for ((e, c), k) in result.events.iter().zip(&result.categories).zip(&result.assignments) {
            w.write_record([e.as_str(), c.as_str(), &k.to_string()])?;
        }
        flush(w, &path)?;
        run.write_json(&format!("cluster_{source}.json"), &result_json(&result))?;
        println!(
            "cluster {source}: K={} AMI {:.3}, median over {} restarts {:.3}",
            result.k,
            result.ami,
            result.restarts.values.len(),
            result.restarts.median
        );
        summary.insert(
            source.as_str(),
            json!({
                "n_events": result.events.len(),
                "k": result.k,
                "ami": result.ami,
                "single_class": result.single_class,
                "median_ami": result.restarts.median,
                "q1_ami": result.restarts.q1,
                "q3_ami": result.restarts.q3,
            }),
        );
    }
    if failures.len() == selected.len() {
        return Err(failures.swap_remove(0).into());
    }
    run.write_json("cluster_summary.json", &json!({ "config": cfg, "sources": summary }))?;
    run.finish()
}

fn result_json(r: &anticipation::pipeline::ClusterRun) -> serde_json::Value {
    json!({
        "source": r.source,
        "k": r.k,
        "bic_by_k": r.bic_by_k,
        "weights": r.weights,
        "centers": r.centers,
        "standardizer": r.standardizer,
        "ami": r.ami,
        "single_class": r.single_class,
        "restarts": r.restarts,
    })
}
