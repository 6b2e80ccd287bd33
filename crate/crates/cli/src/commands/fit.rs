use std::collections::BTreeMap;

use anticipation::baselines::spikem_simulate;
use anticipation::linalg::{median, quantile};
use anticipation::pipeline::{fit_corpus, CorpusEvent, EventFits, FitSelection};
use serde::Serialize;
use serde_json::json;

use crate::artifacts::{flush, load_corpus, opt, write_fits, Run};
use crate::error::CliResult;
use crate::{FitArgs, FitMethod};

#[derive(Debug, Serialize)]
struct R2Summary {
    fitted: usize,
    failed: usize,
    median_r2: Option<f64>,
    q1_r2: Option<f64>,
    q3_r2: Option<f64>,
}

impl R2Summary {
    fn new(r2: Vec<Option<Option<f64>>>) -> Self {
        let fitted = r2.iter().filter(|v| v.is_some()).count();
        let values: Vec<f64> = r2.iter().filter_map(|v| v.flatten()).collect();
        R2Summary {
            fitted,
            failed: r2.len() - fitted,
            median_r2: median(&values),
            q1_r2: quantile(&values, 0.25),
            q3_r2: quantile(&values, 0.75),
        }
    }
}

fn selection(method: FitMethod) -> FitSelection {
    match method {
        FitMethod::All => FitSelection::ALL,
        FitMethod::Proposed => FitSelection {
            proposed: true,
            ..Default::default()
        },
        FitMethod::Spikem => FitSelection {
            spikem: true,
            ..Default::default()
        },
        FitMethod::Powerlaw => FitSelection {
            powerlaw: true,
            ..Default::default()
        },
    }
}

/// Fitted curves per method over the whole window; the peak hour has none.
fn curves(ev: &CorpusEvent, f: &EventFits) -> Vec<(&'static str, Vec<Option<f64>>)> {
    let n = ev.values.len();
    let mut out = Vec::new();
    if let Some(p) = &f.proposed {
        out.push(("proposed", p.params.eval_hours(n)));
    }
    if let Some(s) = &f.spikem {
        if let Ok(x) = spikem_simulate(&s.params, n) {
            out.push(("spikem", x.into_iter().map(Some).collect()));
        }
    }
    if let Some(p) = &f.powerlaw {
        out.push(("powerlaw", (0..n).map(|h| p.params.eval(h as f64)).collect()));
    }
    out
}

pub fn run(args: &FitArgs) -> CliResult<()> {
    let mut run = Run::start("fit", args, &args.data.out)?;
    let (events, missing) = load_corpus(&args.data.manifest(), &args.data.series_dir(), &mut run)?;
    let which = selection(args.method);
    let fits = fit_corpus(&events, which);
    write_fits(&mut run, &events, &fits)?;

    let (mut w, path) = run.csv_writer("plot_fit.csv")?;
    w.write_record(["event", "method", "hour", "observed", "fitted"])?;
    for (ev, f) in events.iter().zip(&fits) {
        for (method, curve) in curves(ev, f) {
            for (h, (y, c)) in ev.values.iter().zip(curve).enumerate() {
                w.write_record([ev.id(), method.to_string(), h.to_string(), y.to_string(), opt(c)])?;
            }
        }
    }
    flush(w, &path)?;

    let mut methods = BTreeMap::new();
    if which.proposed {
        methods.insert("proposed", R2Summary::new(fits.iter().map(|f| f.proposed.map(|p| p.r2)).collect()));
    }
    if which.spikem {
        methods.insert("spikem", R2Summary::new(fits.iter().map(|f| f.spikem.as_ref().map(|p| p.r2)).collect()));
    }
    if which.powerlaw {
        methods.insert("powerlaw", R2Summary::new(fits.iter().map(|f| f.powerlaw.as_ref().map(|p| p.r2)).collect()));
    }
    let errors: Vec<_> = fits
        .iter()
        .flat_map(|f| f.errors.iter().map(move |e| json!({ "event": f.event, "error": e })))
        .collect();
    run.write_json(
        "fit_summary.json",
        &json!({
            "n_events": events.len(),
            "missing_series": missing,
            "methods": methods,
            "errors": errors,
        }),
    )?;
    for (m, s) in &methods {
        println!(
            "fit: {m}: {} fitted, {} failed, median R2 {}",
            s.fitted,
            s.failed,
            s.median_r2.map_or("n/a".into(), |v| format!("{v:.3}"))
        );
    }
    run.finish()
}
