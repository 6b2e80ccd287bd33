use anticipation::pipeline::{run_prediction, Method, PredictionConfig};
use anticipation::predict::{PriorMode, RegressorScale};
use serde_json::json;

use crate::artifacts::{flush, load_corpus, load_fits, opt, FITS_FILE, Run};
use crate::error::CliResult;
use crate::{MethodArg, PredictArgs, PriorArg, ScaleArg};

fn methods(m: MethodArg) -> Vec<Method> {
    match m {
        MethodArg::All => Method::ALL.to_vec(),
        MethodArg::Proposed => vec![Method::Proposed],
        MethodArg::Spikem => vec![Method::Spikem],
        MethodArg::Powerlaw => vec![Method::Powerlaw],
        MethodArg::Lr => vec![Method::Lr],
    }
}

fn config(args: &PredictArgs) -> PredictionConfig {
    PredictionConfig {
        t_obs: args.t_obs,
        horizon: args.horizon,
        prior: match args.prior {
            PriorArg::None => PriorMode::None,
            PriorArg::Anticipation => PriorMode::Anticipation,
            PriorArg::AnticipationCategory => PriorMode::AnticipationCategory,
        },
        scale: match args.scale {
            ScaleArg::Log => RegressorScale::Log,
            ScaleArg::Raw => RegressorScale::Raw,
        },
        methods: methods(args.method),
        folds: args.folds,
        seed: args.seed,
    }
}

pub fn run(args: &PredictArgs) -> CliResult<()> {
    let mut run = Run::start("predict", args, &args.data.out)?;
    let (events, _) = load_corpus(&args.data.manifest(), &args.data.series_dir(), &mut run)?;
    let fits = load_fits(&args.data.out.join(FITS_FILE), &events, &mut run)?;
    let cfg = config(args);
    let result = run_prediction(&events, &fits, &cfg)?;
    let t = args.t_obs;

    let (mut w, path) = run.csv_writer(&format!("metrics_t{t}.csv"))?;
    w.write_record(["event", "category", "t_obs", "method", "ape_ts", "ape_cum"])?;
    for r in &result.rows {
        w.write_record([
            r.event.clone(),
            r.category.clone(),
            r.t_obs.to_string(),
            r.method.to_string(),
            opt(r.ape_ts),
            opt(r.ape_cum),
        ])?;
    }
    flush(w, &path)?;

    let (mut w, path) = run.csv_writer(&format!("plot_predict_t{t}.csv"))?;
    w.write_record(["event", "method", "hour", "observed", "predicted"])?;
    for p in &result.predictions {
        for (i, (y, f)) in p.observed.iter().zip(&p.predicted).enumerate() {
            w.write_record([
                p.event.clone(),
                p.method.to_string(),
                (p.first_hour + i).to_string(),
                y.to_string(),
                f.to_string(),
            ])?;
        }
    }
    flush(w, &path)?;

    let summary = result.summary();
    run.write_json(
        &format!("predict_summary_t{t}.json"),
        &json!({
            "config": cfg,
            "n_events": events.len(),
            "methods": summary,
            "failures": result.failures,
        }),
    )?;
    for (m, s) in &summary {
        let fmt = |v: Option<f64>| v.map_or("n/a".into(), |v| format!("{v:.3}"));
        println!(
            "predict t_obs={t}: {m}: mean APE ts {} cum {} over {} events",
            fmt(s.ape_ts.mean),
            fmt(s.ape_cum.mean),
            s.ape_ts.n
        );
    }
    run.finish()
}
