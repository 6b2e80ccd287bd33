//! Event manifest CSV: `article,redirects,category,event_date,result,stage,opponent`.

use std::path::Path;

use chrono::NaiveDate;

use super::{Category, EventRecord, Outcome};
use crate::error::{Error, Result};

pub const MANIFEST_COLUMNS: [&str; 7] = [
    "article",
    "redirects",
    "category",
    "event_date",
    "result",
    "stage",
    "opponent",
];

pub fn read_manifest(path: &Path) -> Result<Vec<EventRecord>> {
    let mut r = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)?;
    let headers = r.headers()?.clone();
    let missing: Vec<String> = MANIFEST_COLUMNS
        .iter()
        .filter(|c| !headers.iter().any(|h| h == **c))
        .map(|c| c.to_string())
        .collect();
    if !missing.is_empty() {
        return Err(Error::Schema {
            file: path.display().to_string(),
            missing,
        });
    }
    let col = |name: &str| headers.iter().position(|h| h == name).unwrap();
    let idx: Vec<usize> = MANIFEST_COLUMNS.iter().map(|c| col(c)).collect();

    let mut events = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let field = |k: usize| rec.get(idx[k]).unwrap_or("").trim();
        let at_line = |e: Error| match e {
            Error::Parse { msg, .. } => Error::Parse { line, msg },
            other => other,
        };
        let article = field(0);
        if article.is_empty() {
            return Err(Error::Parse {
                line,
                msg: "empty article".into(),
            });
        }
        let redirects = field(1)
            .split('|')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(String::from)
            .collect();
        let event_date = NaiveDate::parse_from_str(field(3), "%Y-%m-%d").map_err(|e| Error::Parse {
            line,
            msg: format!("bad event_date {:?}: {e}", field(3)),
        })?;
        let result = match field(4) {
            "" => None,
            s => Some(s.parse().map_err(at_line)?),
        };
        let stage = match field(5) {
            "" => None,
            s => Some(s.parse().map_err(at_line)?),
        };
        let opponent = Some(field(6)).filter(|s| !s.is_empty()).map(String::from);
        let outcome = (result.is_some() || stage.is_some() || opponent.is_some()).then_some(Outcome {
            result,
            stage,
            opponent,
        });
        events.push(EventRecord {
            article: article.to_string(),
            redirects,
            category: Category::from(field(2)),
            event_date,
            outcome,
        });
    }
    Ok(events)
}

pub fn write_manifest(path: &Path, events: &[EventRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(MANIFEST_COLUMNS)?;
    for ev in events {
        let o = ev.outcome.clone().unwrap_or_default();
        w.write_record([
            ev.article.as_str(),
            &ev.redirects.join("|"),
            ev.category.as_str(),
            &ev.event_date.to_string(),
            o.result.map(|r| r.as_str()).unwrap_or(""),
            o.stage.map(|s| s.as_str()).unwrap_or(""),
            o.opponent.as_deref().unwrap_or(""),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}
