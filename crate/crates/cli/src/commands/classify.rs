use std::collections::BTreeMap;

use anticipation::classify::{FeatureSet, Regularization, C_GRID};
use anticipation::pipeline::run_classification;
use serde_json::json;

use crate::artifacts::{flush, load_corpus, load_fits, FITS_FILE, Run};
use crate::error::{CliError, CliResult};
use crate::{ClassifyArgs, FeatureSetArg};

fn feature_sets(s: FeatureSetArg) -> Vec<FeatureSet> {
    match s {
        FeatureSetArg::All => FeatureSet::ALL.to_vec(),
        FeatureSetArg::ResponseOpponent => vec![FeatureSet::ResponseOpponent],
        FeatureSetArg::Response => vec![FeatureSet::Response],
        FeatureSetArg::SpikemOpponent => vec![FeatureSet::SpikemOpponent],
        FeatureSetArg::Powerlaw => vec![FeatureSet::Powerlaw],
        FeatureSetArg::Fraction => vec![FeatureSet::Fraction],
    }
}

pub fn run(args: &ClassifyArgs) -> CliResult<()> {
    if !(args.c > 0.0) {
        return Err(CliError::Usage(format!("--c must be positive, got {}", args.c)));
    }
    let mut run = Run::start("classify", args, &args.data.out)?;
    let (events, _) = load_corpus(&args.data.manifest(), &args.data.series_dir(), &mut run)?;
    let fits = load_fits(&args.data.out.join(FITS_FILE), &events, &mut run)?;
    let reg = if args.c_grid {
        Regularization::Grid(C_GRID.to_vec())
    } else {
        Regularization::Fixed(args.c)
    };

    let sets = feature_sets(args.feature_set);
    let (mut w, path) = run.csv_writer("classify.csv")?;
    w.write_record(["feature_set", "fold", "n_test", "c", "accuracy", "baseline_accuracy"])?;
    let mut summary = BTreeMap::new();
    let mut failures = Vec::new();
    for set in &sets {
        let result = match run_classification(&events, &fits, *set, args.folds, &reg, args.seed) {
            Ok(r) => r,
            // with every set requested, one lacking fits is reported rather than fatal
            Err(e) if sets.len() > 1 => {
                println!("classify {set}: skipped: {e}");
                summary.insert(set.as_str(), json!({ "error": e.to_string() }));
                failures.push(e);
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        for f in &result.cv.folds {
            w.write_record([
                set.as_str().to_string(),
                f.fold.to_string(),
                f.n_test.to_string(),
                f.c.to_string(),
                f.accuracy.to_string(),
                f.baseline_accuracy.to_string(),
            ])?;
        }
        let cv = &result.cv;
        println!(
            "classify {set}: accuracy {:.1}% vs majority {:.1}% over {} samples",
            100.0 * cv.mean_accuracy,
            100.0 * cv.mean_baseline_accuracy,
            result.n_samples
        );
        summary.insert(
            set.as_str(),
            json!({
                "n_samples": result.n_samples,
                "mean_accuracy": cv.mean_accuracy,
                "mean_baseline_accuracy": cv.mean_baseline_accuracy,
                "lift": cv.mean_accuracy - cv.mean_baseline_accuracy,
                "folds": cv.folds,
            }),
        );
    }
    flush(w, &path)?;
    if failures.len() == sets.len() {
        return Err(failures.swap_remove(0).into());
    }
    run.write_json(
        "classify_summary.json",
        &json!({
            "regularization": reg,
            "folds": args.folds,
            "seed": args.seed,
            "features": "heavy-tailed parameters log-transformed, then standardized on each training fold",
            "feature_sets": summary,
        }),
    )?;
    run.finish()
}
