use std::collections::BTreeMap;
use std::fs;

use serde_json::Value;

use crate::artifacts::Run;
use crate::error::{CliError, CliResult};
use crate::ReportArgs;

/// Summary files read by the report, keyed by the section they fill.
const SECTIONS: [(&str, &str); 8] = [
    ("synth", "synth_summary.json"),
    ("ingest", "ingest_report.json"),
    ("fit", "fit_summary.json"),
    ("predict_t24", "predict_summary_t24.json"),
    ("predict_t48", "predict_summary_t48.json"),
    ("predict_t72", "predict_summary_t72.json"),
    ("cluster", "cluster_summary.json"),
    ("classify", "classify_summary.json"),
];

const DECOMPOSE: (&str, &str) = ("decompose", "decompose_summary.json");

pub fn run(args: &ReportArgs) -> CliResult<()> {
    let mut run = Run::start("report", args, &args.out)?;
    let mut report = BTreeMap::new();
    for (section, file) in SECTIONS.iter().chain([&DECOMPOSE]) {
        let path = args.out.join(file);
        if !path.exists() {
            continue;
        }
        run.input(&path);
        let text = fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
        let value: Value = serde_json::from_str(&text)?;
        report.insert(*section, value);
    }
    if !report.contains_key("fit") {
        return Err(CliError::Dependency {
            path: args.out.join("fit_summary.json"),
            command: "fit",
        });
    }
    run.write_json("report.json", &report)?;
    print_highlights(&report);
    run.finish()
}

fn print_highlights(report: &BTreeMap<&str, Value>) {
    if let Some(Value::Object(methods)) = report.get("fit").map(|v| &v["methods"]) {
        for (m, s) in methods {
            println!("fit {m}: median R2 {}", s["median_r2"]);
        }
    }
    for t in [24, 48, 72] {
        if let Some(Value::Object(methods)) = report.get(format!("predict_t{t}").as_str()).map(|v| &v["methods"]) {
            for (m, s) in methods {
                println!("predict t_obs={t} {m}: mean APE ts {} cum {}", s["ape_ts"]["mean"], s["ape_cum"]["mean"]);
            }
        }
    }
    if let Some(Value::Object(sources)) = report.get("cluster").map(|v| &v["sources"]) {
        for (s, v) in sources {
            if let Some(e) = v["error"].as_str() {
                println!("cluster {s}: {e}");
                continue;
            }
            println!("cluster {s}: K={} median AMI {}", v["k"], v["median_ami"]);
        }
    }
    if let Some(Value::Object(sets)) = report.get("classify").map(|v| &v["feature_sets"]) {
        for (s, v) in sets {
            if let Some(e) = v["error"].as_str() {
                println!("classify {s}: {e}");
                continue;
            }
            println!(
                "classify {s}: accuracy {} vs majority {}",
                v["mean_accuracy"], v["mean_baseline_accuracy"]
            );
        }
    }
}
