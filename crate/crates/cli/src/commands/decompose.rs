use std::collections::BTreeMap;

use anticipation::model::{decompose_circadian, RegionMix};
use serde_json::json;

use crate::artifacts::{flush, load_corpus, load_fits, FITS_FILE, Run};
use crate::error::CliResult;
use crate::DecomposeArgs;

const REGIONS: [&str; 3] = ["us", "uk", "au"];

pub fn run(args: &DecomposeArgs) -> CliResult<()> {
    let mut run = Run::start("decompose", args, &args.data.out)?;
    let (events, _) = load_corpus(&args.data.manifest(), &args.data.series_dir(), &mut run)?;
    let fits = load_fits(&args.data.out.join(FITS_FILE), &events, &mut run)?;
    let template = RegionMix::default();

    let (mut w, path) = run.csv_writer("decompose.csv")?;
    w.write_record(["event", "category", "alpha_c", "t_c", "p_us", "p_uk", "p_au", "dominant"])?;
    // per category: weight sums, dominant-region counts, events
    let mut by_cat: BTreeMap<String, ([f64; 3], [usize; 3], usize)> = BTreeMap::new();
    for (ev, f) in events.iter().zip(&fits) {
        let Some(fit) = &f.proposed else { continue };
        let p = &fit.params;
        let weights = decompose_circadian(p.alpha_c, p.t_c, &template).weights();
        let dominant = (0..3).fold(0, |best, i| if weights[i] > weights[best] { i } else { best });
        let category = ev.record.category.to_string();
        w.write_record([
            ev.id(),
            category.clone(),
            p.alpha_c.to_string(),
            p.t_c.to_string(),
            weights[0].to_string(),
            weights[1].to_string(),
            weights[2].to_string(),
            REGIONS[dominant].to_string(),
        ])?;
        let entry = by_cat.entry(category).or_insert(([0.0; 3], [0; 3], 0));
        for (s, v) in entry.0.iter_mut().zip(weights) {
            *s += v;
        }
        entry.1[dominant] += 1;
        entry.2 += 1;
    }
    flush(w, &path)?;

    let categories: BTreeMap<String, serde_json::Value> = by_cat
        .into_iter()
        .map(|(c, (sum, dom, n))| {
            let mean: BTreeMap<&str, f64> = REGIONS.iter().zip(sum).map(|(r, s)| (*r, s / n as f64)).collect();
            let dominant: BTreeMap<&str, usize> = REGIONS.iter().copied().zip(dom).collect();
            (c, json!({ "n_events": n, "mean_weights": mean, "dominant": dominant }))
        })
        .collect();
    for (c, v) in &categories {
        println!("decompose {c}: {}", v["mean_weights"]);
    }
    run.write_json(
        "decompose_summary.json",
        &json!({ "template": template, "categories": categories }),
    )?;
    run.finish()
}
