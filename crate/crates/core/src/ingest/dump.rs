//! Wikimedia hourly pageview dumps (`domain title count bytes` per line).

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::{Path, PathBuf};

use chrono::NaiveDateTime;
use flate2::read::MultiGzDecoder;
use rayon::prelude::*;
use serde::Serialize;

use super::{epoch_hour, PageviewCounts};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DumpRecord {
    pub domain: String,
    pub title: String,
    pub count: u64,
}

/// Parses one dump line. `Ok(None)` means the line belongs to another project.
pub fn parse_dump_line(line: &str, project: &str) -> Result<Option<DumpRecord>> {
    let mut parts = line.split_whitespace();
    let (Some(domain), Some(title), Some(count), Some(_bytes), None) =
        (parts.next(), parts.next(), parts.next(), parts.next(), parts.next())
    else {
        return Err(Error::Parse {
            line: 0,
            msg: format!("expected 4 fields in {line:?}"),
        });
    };
    let count: u64 = count.parse().map_err(|_| Error::Parse {
        line: 0,
        msg: format!("bad count {count:?}"),
    })?;
    if domain != project {
        return Ok(None);
    }
    Ok(Some(DumpRecord {
        domain: domain.to_string(),
        title: title.to_string(),
        count,
    }))
}

/// Hour encoded in a dump file name such as `pageviews-20180502-140000.gz`.
/// The timestamp is taken as the start of the covered hour.
pub fn dump_file_hour(path: &Path) -> Option<i64> {
    let name = path.file_name()?.to_str()?;
    let stem = name.split('.').next()?;
    let mut parts = stem.rsplit('-');
    let time = parts.next()?;
    let date = parts.next()?;
    if date.len() != 8 || time.len() != 6 {
        return None;
    }
    let dt = NaiveDateTime::parse_from_str(&format!("{date}{time}"), "%Y%m%d%H%M%S").ok()?;
    Some(epoch_hour(dt.and_utc()))
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct DumpStats {
    pub files: usize,
    pub lines: u64,
    pub malformed: u64,
    pub matched: u64,
    pub skipped_files: Vec<String>,
}

fn open_dump(path: &Path) -> Result<Box<dyn BufRead>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader: Box<dyn Read> = if path.extension().is_some_and(|e| e == "gz") {
        Box::new(MultiGzDecoder::new(file))
    } else {
        Box::new(file)
    };
    Ok(Box::new(BufReader::new(reader)))
}

fn read_one(path: &Path, hour: i64, project: &str, titles: &HashSet<String>) -> Result<(PageviewCounts, DumpStats)> {
    let mut counts = PageviewCounts::new();
    counts.mark_covered(hour);
    let mut stats = DumpStats {
        files: 1,
        ..Default::default()
    };
    let mut buf = Vec::new();
    let mut reader = open_dump(path)?;
    loop {
        buf.clear();
        let n = reader.read_until(b'\n', &mut buf).map_err(|e| Error::io(path, e))?;
        if n == 0 {
            break;
        }
        stats.lines += 1;
        // titles are percent-encoded upstream but not guaranteed valid UTF-8
        let line = String::from_utf8_lossy(&buf);
        let line = line.trim_end();
        if line.is_empty() {
            continue;
        }
        match parse_dump_line(line, project) {
            Ok(Some(rec)) if titles.contains(&rec.title) => {
                stats.matched += 1;
                counts.add(&rec.title, hour, rec.count);
            }
            Ok(_) => {}
            Err(_) => stats.malformed += 1,
        }
    }
    Ok((counts, stats))
}

/// Reads every dump file in `dir` (in parallel), keeping only `titles`.
/// Files whose name carries no timestamp are skipped and listed.
pub fn read_dump_dir(dir: &Path, project: &str, titles: &HashSet<String>) -> Result<(PageviewCounts, DumpStats)> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file())
        .collect();
    files.sort();
    let mut skipped = Vec::new();
    let dated: Vec<(PathBuf, i64)> = files
        .into_iter()
        .filter_map(|p| match dump_file_hour(&p) {
            Some(h) => Some((p, h)),
            None => {
                skipped.push(p.display().to_string());
                None
            }
        })
        .collect();
    let parts: Vec<(PageviewCounts, DumpStats)> = dated
        .par_iter()
        .map(|(p, h)| read_one(p, *h, project, titles))
        .collect::<Result<_>>()?;
    let mut counts = PageviewCounts::new();
    let mut stats = DumpStats {
        skipped_files: skipped,
        ..Default::default()
    };
    for (c, s) in parts {
        counts.merge(c);
        stats.files += s.files;
        stats.lines += s.lines;
        stats.malformed += s.malformed;
        stats.matched += s.matched;
    }
    Ok((counts, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn parse_examples() {
        assert_eq!(
            parse_dump_line("en Liverpool_F.C. 1543 0", "en").unwrap(),
            Some(DumpRecord {
                domain: "en".into(),
                title: "Liverpool_F.C.".into(),
                count: 1543
            })
        );
        assert_eq!(parse_dump_line("de Berlin 7 0", "en").unwrap(), None);
        assert!(parse_dump_line("en BadLine", "en").is_err());
        assert!(parse_dump_line("en X notanumber 0", "en").is_err());
    }

    #[test]
    fn file_hour_from_name() {
        let h = dump_file_hour(Path::new("/x/pageviews-20180502-140000.gz")).unwrap();
        let expected = NaiveDateTime::parse_from_str("2018-05-02 14:00:00", "%Y-%m-%d %H:%M:%S")
            .unwrap()
            .and_utc();
        assert_eq!(h, epoch_hour(expected));
        assert!(dump_file_hour(Path::new("notes.txt")).is_none());
    }

    #[test]
    fn reads_plain_and_gzip() {
        let dir = tempfile::tempdir().unwrap();
        let plain = dir.path().join("pageviews-20180101-000000");
        std::fs::write(&plain, "en A 5 0\nen B 1 0\nde A 9 0\nen broken\n").unwrap();
        let gz = dir.path().join("pageviews-20180101-010000.gz");
        let mut enc = flate2::write::GzEncoder::new(File::create(&gz).unwrap(), flate2::Compression::default());
        enc.write_all(b"en A 7 0\n").unwrap();
        enc.finish().unwrap();
        std::fs::write(dir.path().join("README"), "ignore me").unwrap();

        let titles: HashSet<String> = ["A".to_string()].into();
        let (counts, stats) = read_dump_dir(dir.path(), "en", &titles).unwrap();
        let h0 = dump_file_hour(&plain).unwrap();
        assert_eq!(counts.get("A", h0), 5);
        assert_eq!(counts.get("A", h0 + 1), 7);
        assert_eq!(counts.get("B", h0), 0);
        assert_eq!(stats.files, 2);
        assert_eq!(stats.malformed, 1);
        assert_eq!(stats.matched, 2);
        assert_eq!(stats.skipped_files.len(), 1);
    }
}
