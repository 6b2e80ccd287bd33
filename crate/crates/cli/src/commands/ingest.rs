use std::collections::{BTreeMap, HashSet};
use std::fs;

use anticipation::ingest::{
    build_window, filter_popular, locate_peak, read_dump_dir, read_manifest, write_manifest, DumpStats, EventRecord,
    PageviewCounts, PeakLocation, TimeSeries,
};
use anticipation::Error as CoreError;
use serde::Serialize;

use crate::artifacts::{flush, series_path, Run};
use crate::error::{CliError, CliResult};
use crate::IngestArgs;

#[derive(Debug, Serialize)]
struct IngestReport {
    manifest_events: usize,
    retained: usize,
    excluded: usize,
    exclusions_by_reason: BTreeMap<String, usize>,
    threshold: u64,
    missing_hours_filled: usize,
    dump: Option<DumpStats>,
}

struct Exclusion {
    event: String,
    reason: &'static str,
    detail: String,
}

/// Per-event failures that exclude the event instead of aborting the run.
fn exclusion_reason(e: &CoreError) -> Option<&'static str> {
    match e {
        CoreError::DataQuality(_) => Some("missing-hours"),
        CoreError::InsufficientData(_) => Some("insufficient-data"),
        _ => None,
    }
}

pub fn run(args: &IngestArgs) -> CliResult<()> {
    let mut run = Run::start("ingest", args, &args.out)?;
    run.input(&args.manifest);
    let records = read_manifest(&args.manifest)?;

    let mut exclusions = Vec::new();
    let mut source = PageviewCounts::new();
    let mut dump = None;
    // series files are loaded per event so one file cannot cover another's gaps
    let mut available: Vec<(EventRecord, Option<PageviewCounts>)> = Vec::new();
    if let Some(dir) = &args.dump_dir {
        let titles: HashSet<String> = records.iter().flat_map(EventRecord::titles).collect();
        let (counts, stats) = read_dump_dir(dir, &args.project, &titles)?;
        source = counts;
        dump = Some(stats);
        available = records.iter().map(|r| (r.clone(), None)).collect();
    } else if let Some(dir) = &args.series_dir {
        for r in &records {
            let path = series_path(dir, r);
            if !path.exists() {
                exclusions.push(Exclusion {
                    event: r.id(),
                    reason: "missing-series",
                    detail: path.display().to_string(),
                });
                continue;
            }
            run.input(&path);
            let mut own = PageviewCounts::new();
            own.load_series_csv(&r.article, &path)?;
            available.push((r.clone(), Some(own)));
        }
    }

    let mut windows: Vec<((EventRecord, TimeSeries), PeakLocation)> = Vec::new();
    let mut missing_hours = 0;
    for (r, own) in available {
        let step = build_window(&r, own.as_ref().unwrap_or(&source)).and_then(|(series, report)| {
            let peak = locate_peak(&series, r.event_date)?;
            Ok((series, report, peak))
        });
        match step {
            Ok((series, report, peak)) => {
                missing_hours += report.missing_hours;
                windows.push(((r, series), peak));
            }
            Err(e) => match exclusion_reason(&e) {
                Some(reason) => exclusions.push(Exclusion {
                    event: r.id(),
                    reason,
                    detail: e.to_string(),
                }),
                None => return Err(e.into()),
            },
        }
    }

    let before: Vec<(String, u64)> = windows.iter().map(|((r, _), p)| (r.id(), p.peak_value)).collect();
    let kept = filter_popular(windows, args.threshold);
    let kept_ids: HashSet<String> = kept.iter().map(|((r, _), _)| r.id()).collect();
    for (id, peak) in before {
        if !kept_ids.contains(&id) {
            exclusions.push(Exclusion {
                event: id,
                reason: "below-threshold",
                detail: format!("peak {peak} <= {}", args.threshold),
            });
        }
    }

    let dir = run.path("series");
    fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    let mut retained = Vec::with_capacity(kept.len());
    for ((record, series), _) in kept {
        let path = series_path(&dir, &record);
        series.write_csv(&path)?;
        run.output(&path);
        retained.push(record);
    }
    let manifest = run.path("manifest.csv");
    write_manifest(&manifest, &retained)?;
    run.output(&manifest);

    let (mut w, path) = run.csv_writer("exclusions.csv")?;
    w.write_record(["event", "reason", "detail"])?;
    let mut by_reason = BTreeMap::new();
    for x in &exclusions {
        w.write_record([x.event.as_str(), x.reason, x.detail.as_str()])?;
        *by_reason.entry(x.reason.to_string()).or_insert(0) += 1;
    }
    flush(w, &path)?;

    let report = IngestReport {
        manifest_events: records.len(),
        retained: retained.len(),
        excluded: exclusions.len(),
        exclusions_by_reason: by_reason,
        threshold: args.threshold,
        missing_hours_filled: missing_hours,
        dump,
    };
    run.write_json("ingest_report.json", &report)?;
    println!(
        "ingest: {} of {} events retained, {} excluded",
        report.retained, report.manifest_events, report.excluded
    );
    run.finish()
}
