//! Daily hashtag-trend archives and frequency ranking.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use chrono::{Duration, NaiveDate};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::corpus::parse_date;

#[derive(Debug, Error)]
pub enum TrendError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("trend archive is missing column `{0}`")]
    MissingColumn(&'static str),
    #[error("top n must be at least 1")]
    InvalidTopN,
    #[error("date range is reversed: {from} > {to}")]
    ReversedRange { from: NaiveDate, to: NaiveDate },
    #[error("nothing to write")]
    EmptyRanking,
    #[error("line {line}: {reason}")]
    BadPlotRow { line: usize, reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrendRecord {
    pub date: NaiveDate,
    pub location: String,
    /// Without the leading `#`.
    pub hashtag: String,
    pub rank: u32,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LoadedTrends {
    pub records: Vec<TrendRecord>,
    pub skipped: usize,
}

pub const DEFAULT_FROM: (i32, u32, u32) = (2020, 1, 20);
pub const DEFAULT_TO: (i32, u32, u32) = (2020, 5, 20);

pub fn default_window() -> (NaiveDate, NaiveDate) {
    let d = |(y, m, day): (i32, u32, u32)| NaiveDate::from_ymd_opt(y, m, day).expect("valid date");
    (d(DEFAULT_FROM), d(DEFAULT_TO))
}

pub fn load_trends(path: impl AsRef<Path>) -> Result<LoadedTrends, TrendError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| TrendError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_trends(file)
}

/// Reads CSV with header `date,location,hashtag,rank`. Rows with a bad date,
/// an empty hashtag or a rank below 1 are skipped and counted.
pub fn read_trends<R: Read>(reader: R) -> Result<LoadedTrends, TrendError> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let col = |name: &'static str| {
        headers
            .iter()
            .position(|h| h.eq_ignore_ascii_case(name))
            .ok_or(TrendError::MissingColumn(name))
    };
    let (di, li, hi, ri) = (col("date")?, col("location")?, col("hashtag")?, col("rank")?);
    let mut out = LoadedTrends::default();
    for row in rdr.records() {
        let row = row?;
        let field = |i: usize| row.get(i).unwrap_or("");
        let date = parse_date(field(di));
        let hashtag = field(hi).trim_start_matches('#').to_string();
        let rank = field(ri).parse::<u32>().ok().filter(|&r| r >= 1);
        match (date, rank) {
            (Some(date), Some(rank)) if !hashtag.is_empty() => out.records.push(TrendRecord {
                date,
                location: field(li).to_string(),
                hashtag,
                rank,
            }),
            _ => out.skipped += 1,
        }
    }
    Ok(out)
}

pub fn write_trends<W: Write>(writer: W, records: &[TrendRecord]) -> Result<(), TrendError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["date", "location", "hashtag", "rank"])?;
    for r in records {
        w.write_record([r.date.to_string(), r.location.clone(), r.hashtag.clone(), r.rank.to_string()])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Ranks hashtags trending between `from` and `to` inclusive.
///
/// A hashtag's frequency is the number of distinct (date, location) pairs it
/// trended in; hashtags are compared case-insensitively and reported in lower
/// case. Ordered by frequency descending then hashtag ascending, truncated to
/// `n`. `location`, when given, keeps only records from that location
/// (case-insensitive).
pub fn top_hashtags(
    records: &[TrendRecord],
    from: NaiveDate,
    to: NaiveDate,
    n: usize,
    location: Option<&str>,
) -> Result<Vec<(String, usize)>, TrendError> {
    if n < 1 {
        return Err(TrendError::InvalidTopN);
    }
    if from > to {
        return Err(TrendError::ReversedRange { from, to });
    }
    let mut seen: BTreeMap<String, BTreeSet<(NaiveDate, String)>> = BTreeMap::new();
    for r in records {
        if r.date < from || r.date > to {
            continue;
        }
        if location.is_some_and(|l| !r.location.eq_ignore_ascii_case(l)) {
            continue;
        }
        seen.entry(r.hashtag.to_lowercase())
            .or_default()
            .insert((r.date, r.location.to_lowercase()));
    }
    let mut ranked: Vec<(String, usize)> = seen.into_iter().map(|(h, s)| (h, s.len())).collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked.truncate(n);
    Ok(ranked)
}

/// Writes `hashtag,frequency` rows in rank order.
pub fn write_plot_data<W: Write>(writer: W, ranked: &[(String, usize)]) -> Result<(), TrendError> {
    if ranked.is_empty() {
        return Err(TrendError::EmptyRanking);
    }
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["hashtag", "frequency"])?;
    for (h, f) in ranked {
        w.write_record([h.as_str(), &f.to_string()])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn emit_plot_data(ranked: &[(String, usize)], path: impl AsRef<Path>) -> Result<(), TrendError> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|source| TrendError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    write_plot_data(file, ranked)
}

/// Reads back a file written by [`emit_plot_data`]. `#` lines are skipped.
pub fn read_plot_data<R: Read>(reader: R) -> Result<Vec<(String, usize)>, TrendError> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(reader);
    let mut out = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row?;
        let line = i + 2;
        if row.len() != 2 {
            return Err(TrendError::BadPlotRow {
                line,
                reason: format!("expected 2 fields, found {}", row.len()),
            });
        }
        let f = row[1].parse().map_err(|_| TrendError::BadPlotRow {
            line,
            reason: format!("bad frequency `{}`", &row[1]),
        })?;
        out.push((row[0].to_string(), f));
    }
    Ok(out)
}

const TAGS: &[&str] = &[
    "COVID19", "Coronavirus", "IndiaFightsCorona", "StayHome", "Lockdown", "JantaCurfew", "SocialDistancing",
    "WuhanVirus", "StayHomeStaySafe", "Lockdown21", "CoronaWarriors", "9pm9minutes", "PMCARES", "TablighiJamaat",
    "MigrantWorkers", "WorkFromHome", "ClapForOurCarers", "FlattenTheCurve", "QuarantineLife", "Lockdown3",
    "Covid_19india", "HydroxyChloroquine", "StayAtHome", "IPL2020",
];
const LOCATIONS: &[&str] = &["Worldwide", "India", "Delhi", "Mumbai"];

/// Seeded trend archive inside the default window. Popularity is skewed so a
/// handful of hashtags dominate, with random case variants.
pub fn synthetic_trends(rows: usize, seed: u64) -> Vec<TrendRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (from, to) = default_window();
    let span = (to - from).num_days();
    (0..rows)
        .map(|_| {
            // Squaring a uniform variate biases toward the head of the list.
            let u: f64 = rng.gen();
            let idx = ((u * u) * TAGS.len() as f64) as usize;
            let mut hashtag = TAGS[idx.min(TAGS.len() - 1)].to_string();
            if rng.gen_bool(0.1) {
                hashtag = hashtag.to_lowercase();
            }
            TrendRecord {
                date: from + Duration::days(rng.gen_range(-5..=span + 5)),
                location: LOCATIONS.choose(&mut rng).expect("non-empty").to_string(),
                hashtag,
                rank: rng.gen_range(1..=50),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn day(d: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(2020, 3, d).unwrap()
    }

    fn rec(d: u32, loc: &str, tag: &str) -> TrendRecord {
        TrendRecord {
            date: day(d),
            location: loc.into(),
            hashtag: tag.into(),
            rank: 1,
        }
    }

    #[test]
    fn loads_and_skips_invalid_rows() {
        let csv = "date,location,hashtag,rank\n\
                   2020-03-01,India,#Covid19,1\n\
                   2020-03-01,Delhi,Covid19,3\n\
                   2020-03-02,India,Lockdown,0\n\
                   not-a-date,India,X,2\n\
                   2020-03-02,India,,2\n";
        let t = read_trends(csv.as_bytes()).unwrap();
        assert_eq!(t.records.len(), 2);
        assert_eq!(t.skipped, 3);
        assert_eq!(t.records[0].hashtag, "Covid19");
        assert!(matches!(
            read_trends("date,hashtag,rank\n".as_bytes()),
            Err(TrendError::MissingColumn("location"))
        ));
    }

    #[test]
    fn counting_and_tiebreak() {
        let r = vec![rec(1, "a", "A"), rec(2, "a", "a"), rec(3, "a", "A"), rec(1, "a", "b")];
        assert_eq!(top_hashtags(&r, day(1), day(31), 1, None).unwrap(), vec![("a".into(), 3)]);
        let r = vec![rec(1, "x", "b"), rec(2, "x", "b"), rec(1, "x", "a"), rec(2, "x", "a")];
        let top = top_hashtags(&r, day(1), day(31), 10, None).unwrap();
        assert_eq!(top, vec![("a".into(), 2), ("b".into(), 2)]);
        assert!(matches!(top_hashtags(&r, day(1), day(2), 0, None), Err(TrendError::InvalidTopN)));
    }

    #[test]
    fn duplicates_across_locations_both_count() {
        let r = vec![rec(1, "India", "x"), rec(1, "Delhi", "x"), rec(1, "India", "X")];
        assert_eq!(top_hashtags(&r, day(1), day(1), 5, None).unwrap(), vec![("x".into(), 2)]);
        assert_eq!(top_hashtags(&r, day(1), day(1), 5, Some("delhi")).unwrap(), vec![("x".into(), 1)]);
    }

    #[test]
    fn plot_data_round_trip_and_quoting() {
        let ranked: Vec<(String, usize)> = (0..13).map(|i| (format!("tag{i}"), 20 - i)).collect();
        let mut buf = Vec::new();
        write_plot_data(&mut buf, &ranked).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text.lines().count(), 14);
        assert_eq!(read_plot_data(buf.as_slice()).unwrap(), ranked);
        let mut seeded = b"# seed=1\n".to_vec();
        seeded.extend_from_slice(&buf);
        assert_eq!(read_plot_data(seeded.as_slice()).unwrap(), ranked);

        let odd = vec![("a,b".to_string(), 2)];
        let mut buf = Vec::new();
        write_plot_data(&mut buf, &odd).unwrap();
        assert!(String::from_utf8(buf.clone()).unwrap().contains("\"a,b\",2"));
        assert_eq!(read_plot_data(buf.as_slice()).unwrap(), odd);
        assert!(matches!(write_plot_data(Vec::new(), &[]), Err(TrendError::EmptyRanking)));
    }

    #[test]
    fn synthetic_archive_round_trips() {
        let recs = synthetic_trends(50, 3);
        assert_eq!(recs, synthetic_trends(50, 3));
        let mut buf = Vec::new();
        write_trends(&mut buf, &recs).unwrap();
        assert_eq!(read_trends(buf.as_slice()).unwrap().records, recs);
    }

    proptest! {
        #[test]
        fn ranking_properties(seed in any::<u64>(), n in 1usize..30, a in 0i64..120, w in 0i64..60, extra in 0i64..30) {
            let recs = synthetic_trends(200, seed);
            let (start, _) = default_window();
            let from = start + Duration::days(a);
            let to = from + Duration::days(w);
            let top = top_hashtags(&recs, from, to, n, None).unwrap();
            prop_assert!(top.windows(2).all(|p| p[0].1 >= p[1].1));
            let all = top_hashtags(&recs, from, to, usize::MAX, None).unwrap();
            prop_assert_eq!(top.len(), n.min(all.len()));
            let wider = top_hashtags(&recs, from - Duration::days(extra), to + Duration::days(extra), usize::MAX, None).unwrap();
            let wide: BTreeMap<_, _> = wider.into_iter().collect();
            for (h, f) in all {
                prop_assert!(wide[&h] >= f);
            }
        }
    }
}
