//! Event windows, peak detection and popularity filtering.

mod dump;
mod manifest;

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use chrono::{DateTime, Duration, NaiveDate, NaiveDateTime, Timelike, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use dump::{dump_file_hour, parse_dump_line, read_dump_dir, DumpRecord, DumpStats};
pub use manifest::{read_manifest, write_manifest, MANIFEST_COLUMNS};

/// Days of history before the event day included in a window.
pub const DAYS_BEFORE: i64 = 10;
/// Window length: 10 days before, the event day, 10 days after.
pub const WINDOW_HOURS: usize = 21 * 24;
/// Peak search span starting at 0:00 UTC on the event date.
pub const PEAK_SEARCH_HOURS: usize = 48;
/// Events are retained when their peak strictly exceeds this many views/hour.
pub const POPULARITY_THRESHOLD: u64 = 100;
/// Windows with a larger share of missing hours are rejected.
pub const MAX_MISSING_FRACTION: f64 = 0.2;

/// Hourly view counts starting at a UTC hour boundary.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TimeSeries {
    pub start: DateTime<Utc>,
    pub counts: Vec<u64>,
}

impl TimeSeries {
    pub fn new(start: DateTime<Utc>, counts: Vec<u64>) -> Result<Self> {
        if counts.is_empty() {
            return Err(Error::InsufficientData("empty time series".into()));
        }
        if start.minute() != 0 || start.second() != 0 || start.nanosecond() != 0 {
            return Err(Error::InvalidParams(format!("series start {start} is not on an hour")));
        }
        Ok(TimeSeries { start, counts })
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn values(&self) -> Vec<f64> {
        self.counts.iter().map(|&c| c as f64).collect()
    }

    /// Index of `at` relative to the series start, in whole hours.
    pub fn hour_index(&self, at: DateTime<Utc>) -> i64 {
        (at - self.start).num_hours()
    }

    pub fn start_hour(&self) -> i64 {
        epoch_hour(self.start)
    }

    /// Writes the `utc_hour,views` cache format.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["utc_hour", "views"])?;
        for (i, c) in self.counts.iter().enumerate() {
            let at = self.start + Duration::hours(i as i64);
            w.write_record([format_hour(at), c.to_string()])?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    /// Reads the `utc_hour,views` cache format; hours must be consecutive.
    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut src = PageviewCounts::new();
        src.load_series_csv("", path)?;
        let hours: Vec<i64> = src.covered.iter().copied().collect();
        let (first, last) = match (hours.first(), hours.last()) {
            (Some(&a), Some(&b)) => (a, b),
            _ => return Err(Error::InsufficientData(format!("{} has no rows", path.display()))),
        };
        if (last - first + 1) as usize != hours.len() {
            return Err(Error::DataQuality(format!("{} skips hours", path.display())));
        }
        let counts = (first..=last).map(|h| src.get("", h)).collect();
        TimeSeries::new(hour_to_datetime(first), counts)
    }
}

/// Hours since the Unix epoch.
pub fn epoch_hour(at: DateTime<Utc>) -> i64 {
    at.timestamp().div_euclid(3600)
}

pub fn hour_to_datetime(hour: i64) -> DateTime<Utc> {
    DateTime::from_timestamp(hour * 3600, 0).expect("hour in chrono range")
}

pub fn format_hour(at: DateTime<Utc>) -> String {
    at.format("%Y-%m-%dT%H:00:00Z").to_string()
}

pub fn parse_hour(s: &str) -> Result<DateTime<Utc>> {
    let s = s.trim();
    let parsed = DateTime::parse_from_rfc3339(s)
        .map(|d| d.with_timezone(&Utc))
        .or_else(|_| {
            NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M:%S").map(|n| n.and_utc())
        })
        .or_else(|_| NaiveDateTime::parse_from_str(s, "%Y-%m-%d %H:%M:%S").map(|n| n.and_utc()))
        .map_err(|e| Error::Parse {
            line: 0,
            msg: format!("bad utc_hour {s:?}: {e}"),
        })?;
    Ok(hour_to_datetime(epoch_hour(parsed)))
}

pub fn midnight(date: NaiveDate) -> DateTime<Utc> {
    date.and_hms_opt(0, 0, 0).expect("valid midnight").and_utc()
}

/// Event category; the five built-in ones plus any free-form label.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "String", into = "String")]
pub enum Category {
    Election,
    Sports,
    Football,
    Film,
    Holiday,
    Other(String),
}

impl Category {
    pub const BUILTIN: [Category; 5] = [
        Category::Election,
        Category::Sports,
        Category::Football,
        Category::Film,
        Category::Holiday,
    ];

    pub fn as_str(&self) -> &str {
        match self {
            Category::Election => "election",
            Category::Sports => "sports",
            Category::Football => "football",
            Category::Film => "film",
            Category::Holiday => "holiday",
            Category::Other(s) => s,
        }
    }
}

impl From<&str> for Category {
    fn from(s: &str) -> Self {
        match s.trim().to_ascii_lowercase().as_str() {
            "election" | "elections" => Category::Election,
            "sports" | "sport" => Category::Sports,
            "football" => Category::Football,
            "film" | "films" => Category::Film,
            "holiday" | "holidays" => Category::Holiday,
            _ => Category::Other(s.trim().to_string()),
        }
    }
}

impl From<String> for Category {
    fn from(s: String) -> Self {
        Category::from(s.as_str())
    }
}

impl From<Category> for String {
    fn from(c: Category) -> Self {
        c.as_str().to_string()
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatchResult {
    Win,
    Draw,
    Lose,
}

impl MatchResult {
    /// Class order, also used to break ties between equal scores.
    pub const ALL: [MatchResult; 3] = [MatchResult::Win, MatchResult::Draw, MatchResult::Lose];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            MatchResult::Win => "win",
            MatchResult::Draw => "draw",
            MatchResult::Lose => "lose",
        }
    }
}

impl FromStr for MatchResult {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "win" | "w" => Ok(MatchResult::Win),
            "draw" | "d" => Ok(MatchResult::Draw),
            "lose" | "loss" | "l" => Ok(MatchResult::Lose),
            other => Err(Error::Parse {
                line: 0,
                msg: format!("unknown result {other:?}"),
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Group,
    Knockout,
    Final,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Group => "group",
            Stage::Knockout => "knockout",
            Stage::Final => "final",
        }
    }
}

impl FromStr for Stage {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "group" => Ok(Stage::Group),
            "knockout" => Ok(Stage::Knockout),
            "final" => Ok(Stage::Final),
            other => Err(Error::Parse {
                line: 0,
                msg: format!("unknown stage {other:?}"),
            }),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Outcome {
    pub result: Option<MatchResult>,
    pub stage: Option<Stage>,
    pub opponent: Option<String>,
}

/// One planned event from the manifest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventRecord {
    pub article: String,
    pub redirects: Vec<String>,
    pub category: Category,
    pub event_date: NaiveDate,
    pub outcome: Option<Outcome>,
}

impl EventRecord {
    pub fn new(article: impl Into<String>, category: Category, event_date: NaiveDate) -> Self {
        EventRecord {
            article: article.into(),
            redirects: Vec::new(),
            category,
            event_date,
            outcome: None,
        }
    }

    /// Stable identifier `<article>@<date>` with file-system-safe characters.
    pub fn id(&self) -> String {
        event_id(&self.article, self.event_date)
    }

    /// Article plus redirects in dump-title form.
    pub fn titles(&self) -> Vec<String> {
        std::iter::once(&self.article)
            .chain(&self.redirects)
            .map(|t| normalize_title(t))
            .collect()
    }

    pub fn window_start(&self) -> DateTime<Utc> {
        midnight(self.event_date) - Duration::days(DAYS_BEFORE)
    }

    pub fn result(&self) -> Option<MatchResult> {
        self.outcome.as_ref().and_then(|o| o.result)
    }

    pub fn opponent(&self) -> Option<&str> {
        self.outcome.as_ref().and_then(|o| o.opponent.as_deref())
    }
}

pub fn event_id(article: &str, date: NaiveDate) -> String {
    let safe: String = normalize_title(article)
        .chars()
        .map(|c| {
            if c.is_alphanumeric() || matches!(c, '-' | '_' | '.' | '(' | ')' | ',') {
                c
            } else {
                '_'
            }
        })
        .collect();
    format!("{safe}@{date}")
}

/// Dump titles use underscores instead of spaces.
pub fn normalize_title(title: &str) -> String {
    title.trim().replace(' ', "_")
}

/// Hourly counts keyed by `(title, epoch hour)`, plus the set of hours for
/// which any data was available at all.
#[derive(Debug, Clone, Default)]
pub struct PageviewCounts {
    counts: HashMap<(String, i64), u64>,
    covered: BTreeSet<i64>,
}

impl PageviewCounts {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, title: &str, hour: i64, count: u64) {
        *self.counts.entry((normalize_title(title), hour)).or_insert(0) += count;
        self.covered.insert(hour);
    }

    /// Marks an hour as observed even if no tracked title had views.
    pub fn mark_covered(&mut self, hour: i64) {
        self.covered.insert(hour);
    }

    pub fn get(&self, title: &str, hour: i64) -> u64 {
        self.counts.get(&(title.to_string(), hour)).copied().unwrap_or(0)
    }

    pub fn is_covered(&self, hour: i64) -> bool {
        self.covered.contains(&hour)
    }

    /// Order-independent merge; the result is the same however the inputs
    /// were partitioned.
    pub fn merge(&mut self, other: PageviewCounts) {
        for (k, v) in other.counts {
            *self.counts.entry(k).or_insert(0) += v;
        }
        self.covered.extend(other.covered);
    }

    /// Loads a `utc_hour,views` cache file as counts for `title`.
    pub fn load_series_csv(&mut self, title: &str, path: &Path) -> Result<()> {
        let mut r = csv::Reader::from_path(path)?;
        let headers = r.headers()?.clone();
        let missing: Vec<String> = ["utc_hour", "views"]
            .iter()
            .filter(|c| !headers.iter().any(|h| h.trim() == **c))
            .map(|c| c.to_string())
            .collect();
        if !missing.is_empty() {
            return Err(Error::Schema {
                file: path.display().to_string(),
                missing,
            });
        }
        let hi = headers.iter().position(|h| h.trim() == "utc_hour").unwrap();
        let vi = headers.iter().position(|h| h.trim() == "views").unwrap();
        for (line, rec) in r.records().enumerate() {
            let rec = rec?;
            let at = parse_hour(&rec[hi]).map_err(|e| Error::Parse {
                line: line + 2,
                msg: e.to_string(),
            })?;
            let views: u64 = rec[vi].trim().parse().map_err(|e| Error::Parse {
                line: line + 2,
                msg: format!("bad views {:?}: {e}", &rec[vi]),
            })?;
            self.add(title, epoch_hour(at), views);
        }
        Ok(())
    }
}

/// Diagnostics from building a window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct WindowReport {
    pub missing_hours: usize,
}

/// Builds the 504-hour window for `event`, summing article and redirects.
/// Hours with no data are zero-filled; too many of them is an error.
pub fn build_window(event: &EventRecord, source: &PageviewCounts) -> Result<(TimeSeries, WindowReport)> {
    let start = event.window_start();
    let h0 = epoch_hour(start);
    let titles = event.titles();
    let mut missing = 0;
    let counts: Vec<u64> = (0..WINDOW_HOURS as i64)
        .map(|i| {
            let h = h0 + i;
            if !source.is_covered(h) {
                missing += 1;
            }
            titles.iter().map(|t| source.get(t, h)).sum()
        })
        .collect();
    if missing as f64 > MAX_MISSING_FRACTION * WINDOW_HOURS as f64 {
        return Err(Error::DataQuality(format!(
            "{}: {missing} of {WINDOW_HOURS} hours missing",
            event.id()
        )));
    }
    Ok((TimeSeries::new(start, counts)?, WindowReport { missing_hours: missing }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeakLocation {
    /// Hour index within the window.
    pub t_p: usize,
    pub peak_value: u64,
}

/// Busiest hour within 48 hours of 0:00 UTC on `event_date`; ties go to the
/// earliest hour.
pub fn locate_peak(series: &TimeSeries, event_date: NaiveDate) -> Result<PeakLocation> {
    let from = series.hour_index(midnight(event_date));
    let to = from + PEAK_SEARCH_HOURS as i64;
    if from < 0 || to > series.len() as i64 {
        return Err(Error::InsufficientData(format!(
            "series does not cover the peak search span starting {event_date}"
        )));
    }
    let (from, to) = (from as usize, to as usize);
    let mut best = from;
    for i in from + 1..to {
        if series.counts[i] > series.counts[best] {
            best = i;
        }
    }
    Ok(PeakLocation {
        t_p: best,
        peak_value: series.counts[best],
    })
}

/// Keeps items whose peak strictly exceeds `threshold`.
pub fn filter_popular<T>(items: Vec<(T, PeakLocation)>, threshold: u64) -> Vec<(T, PeakLocation)> {
    items.into_iter().filter(|(_, p)| p.peak_value > threshold).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn date(s: &str) -> NaiveDate {
        NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap()
    }

    fn full_source(event: &EventRecord, value: u64) -> PageviewCounts {
        let mut src = PageviewCounts::new();
        let h0 = epoch_hour(event.window_start());
        for i in 0..WINDOW_HOURS as i64 {
            src.add(&event.article, h0 + i, value);
        }
        src
    }

    #[test]
    fn window_sums_redirects() {
        let mut ev = EventRecord::new("Liverpool F.C.", Category::Football, date("2018-05-02"));
        ev.redirects = vec!["LFC".into()];
        let mut src = full_source(&ev, 0);
        let h = epoch_hour(ev.window_start()) + 77;
        src.add("Liverpool_F.C.", h, 3);
        src.add("LFC", h, 2);
        let (s, report) = build_window(&ev, &src).unwrap();
        assert_eq!(s.len(), WINDOW_HOURS);
        assert_eq!(s.counts[77], 5);
        assert_eq!(report.missing_hours, 0);
        assert_eq!(s.start, midnight(date("2018-04-22")));
    }

    #[test]
    fn window_missing_hours() {
        let ev = EventRecord::new("X", Category::Film, date("2018-03-01"));
        let mut src = PageviewCounts::new();
        let h0 = epoch_hour(ev.window_start());
        // 30% missing
        let keep = (WINDOW_HOURS as f64 * 0.7) as i64;
        for i in 0..keep {
            src.add("X", h0 + i, 1);
        }
        assert!(matches!(build_window(&ev, &src), Err(Error::DataQuality(_))));

        // 10% missing is zero-filled and reported
        let mut src = PageviewCounts::new();
        for i in 0..WINDOW_HOURS as i64 {
            if i % 10 != 0 {
                src.add("X", h0 + i, 4);
            }
        }
        let (s, r) = build_window(&ev, &src).unwrap();
        assert_eq!(r.missing_hours, 51);
        assert_eq!(s.counts[0], 0);
        assert_eq!(s.counts[1], 4);
    }

    #[test]
    fn peak_examples() {
        let ev = EventRecord::new("X", Category::Film, date("2018-03-11"));
        let start = ev.window_start();
        let mut counts = vec![10u64; WINDOW_HOURS];
        let base = 240;
        counts[base + 30] = 150;
        let s = TimeSeries::new(start, counts.clone()).unwrap();
        let p = locate_peak(&s, ev.event_date).unwrap();
        assert_eq!(p, PeakLocation { t_p: base + 30, peak_value: 150 });

        counts[base + 30] = 10;
        counts[base + 10] = 99;
        counts[base + 20] = 99;
        // outside the span: ignored
        counts[base + 48] = 1000;
        counts[base - 1] = 1000;
        let s = TimeSeries::new(start, counts).unwrap();
        assert_eq!(locate_peak(&s, ev.event_date).unwrap().t_p, base + 10);

        let short = TimeSeries::new(start, vec![1; 250]).unwrap();
        assert!(locate_peak(&short, ev.event_date).is_err());
    }

    #[test]
    fn popularity_is_strict() {
        let items = vec![
            ("a", PeakLocation { t_p: 0, peak_value: 101 }),
            ("b", PeakLocation { t_p: 0, peak_value: 100 }),
        ];
        let kept = filter_popular(items, POPULARITY_THRESHOLD);
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].0, "a");
    }

    #[test]
    fn series_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let start = midnight(date("2018-01-01"));
        let s = TimeSeries::new(start, vec![1, 2, 3, 0, 5]).unwrap();
        let path = dir.path().join("s.csv");
        s.write_csv(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("utc_hour,views\n2018-01-01T00:00:00Z,1\n"));
        let mut src = PageviewCounts::new();
        src.load_series_csv("T", &path).unwrap();
        assert_eq!(src.get("T", epoch_hour(start) + 4), 5);
        assert!(src.is_covered(epoch_hour(start) + 3));
        assert!(!src.is_covered(epoch_hour(start) + 5));
        assert_eq!(TimeSeries::read_csv(&path).unwrap(), s);
    }

    #[test]
    fn categories_parse() {
        assert_eq!(Category::from("Football"), Category::Football);
        assert_eq!(Category::from("opera"), Category::Other("opera".into()));
        let json = serde_json::to_string(&Category::Film).unwrap();
        assert_eq!(json, "\"film\"");
        assert_eq!(EventRecord::new("A/B c", Category::Film, date("2018-01-02")).id(), "A_B_c@2018-01-02");
    }

    #[test]
    fn merge_is_order_independent() {
        let mut a = PageviewCounts::new();
        a.add("x", 1, 2);
        let mut b = PageviewCounts::new();
        b.add("x", 1, 3);
        b.mark_covered(9);
        let mut ab = a.clone();
        ab.merge(b.clone());
        let mut ba = b;
        ba.merge(a);
        assert_eq!(ab.get("x", 1), 5);
        assert_eq!(ba.get("x", 1), 5);
        assert!(ab.is_covered(9) && ba.is_covered(9));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn peak_matches_exhaustive_scan(counts in proptest::collection::vec(0u64..50, WINDOW_HOURS)) {
            let d = date("2019-06-15");
            let start = midnight(d) - Duration::days(DAYS_BEFORE);
            let s = TimeSeries::new(start, counts.clone()).unwrap();
            let p = locate_peak(&s, d).unwrap();
            let span = 240..288;
            let max = span.clone().map(|i| counts[i]).max().unwrap();
            let first = span.clone().find(|&i| counts[i] == max).unwrap();
            prop_assert_eq!(p.t_p, first);
            prop_assert_eq!(p.peak_value, max);
        }
    }
}
