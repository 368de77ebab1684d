use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cf::{HistoryEntry, ItemId, UserId};
use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rating {
    Scaled(f64),
    Binary(bool),
}

impl Rating {
    pub fn is_like(self) -> Option<bool> {
        match self {
            Rating::Binary(b) => Some(b),
            Rating::Scaled(_) => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatingRecord {
    pub user: UserId,
    pub item: ItemId,
    pub rating: Rating,
    pub timestamp: i64,
}

impl RatingRecord {
    /// Feedback after binarization; panics on a scaled rating.
    pub fn liked(&self) -> bool {
        self.rating.is_like().expect("record is not binarized")
    }

    /// History entry of a binarized record.
    pub fn entry(&self) -> HistoryEntry {
        HistoryEntry::new(self.item, self.liked(), self.timestamp)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RatingKind {
    Scaled { min: f64, max: f64 },
    Binary,
}

/// Column layout of a delimited rating file. Column indices are zero-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Schema {
    pub delimiter: String,
    pub user_col: usize,
    pub item_col: usize,
    pub rating_col: usize,
    pub timestamp_col: usize,
    pub header: bool,
    pub kind: RatingKind,
}

impl Schema {
    /// `user::item::rating::timestamp` with ratings on a 1..5 scale.
    pub fn movielens() -> Self {
        Self {
            delimiter: "::".into(),
            user_col: 0,
            item_col: 1,
            rating_col: 2,
            timestamp_col: 3,
            header: false,
            kind: RatingKind::Scaled { min: 1.0, max: 5.0 },
        }
    }

    /// The tab-separated layout written by [`export_tsv`]. The header
    /// decides whether the third column is a 0/1 feedback or a rating.
    pub fn canonical() -> Self {
        Self {
            delimiter: "\t".into(),
            user_col: 0,
            item_col: 1,
            rating_col: 2,
            timestamp_col: 3,
            header: true,
            kind: RatingKind::Binary,
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "movielens" => Ok(Self::movielens()),
            "tsv" | "canonical" => Ok(Self::canonical()),
            other => Err(invalid(format!("unknown schema preset {other:?}; expected movielens or tsv"))),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.delimiter.is_empty() {
            return Err(invalid("schema delimiter is empty"));
        }
        if let RatingKind::Scaled { min, max } = self.kind {
            if !(min.is_finite() && max.is_finite() && min < max) {
                return Err(invalid(format!("rating scale [{min}, {max}] is not a finite increasing range")));
            }
        }
        Ok(())
    }

    fn parse_line(&self, line: &str) -> std::result::Result<RatingRecord, String> {
        let fields: Vec<&str> = line.split(self.delimiter.as_str()).map(str::trim).collect();
        let get = |col: usize, name: &str| {
            fields
                .get(col)
                .copied()
                .ok_or_else(|| format!("missing {name} column {col} ({} fields)", fields.len()))
        };
        let user = get(self.user_col, "user")?;
        let user = user.parse::<u32>().map_err(|_| format!("user id {user:?} is not an unsigned integer"))?;
        let item = get(self.item_col, "item")?;
        let item = item.parse::<u32>().map_err(|_| format!("item id {item:?} is not an unsigned integer"))?;
        let ts = get(self.timestamp_col, "timestamp")?;
        let timestamp = ts.parse::<i64>().map_err(|_| format!("timestamp {ts:?} is not an integer"))?;
        let raw = get(self.rating_col, "rating")?;
        let rating = match self.kind {
            RatingKind::Binary => match raw {
                "0" => Rating::Binary(false),
                "1" => Rating::Binary(true),
                _ => return Err(format!("feedback {raw:?} is not 0 or 1")),
            },
            RatingKind::Scaled { min, max } => {
                let r: f64 = raw.parse().map_err(|_| format!("rating {raw:?} is not a number"))?;
                if !(r >= min && r <= max) {
                    return Err(format!("rating {r} outside scale [{min}, {max}]"));
                }
                Rating::Scaled(r)
            }
        };
        Ok(RatingRecord {
            user: UserId(user),
            item: ItemId(item),
            rating,
            timestamp,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LineError {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestOutcome {
    pub records: Vec<RatingRecord>,
    pub errors: Vec<LineError>,
    pub lines: usize,
}

/// Parses a delimited rating file. Malformed lines are collected with their
/// 1-based line numbers; the call fails when their share of non-blank lines
/// exceeds `max_malformed_fraction`.
pub fn ingest(path: &Path, schema: &Schema, max_malformed_fraction: f64) -> Result<IngestOutcome> {
    let file = File::open(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::MissingArtifact(format!("rating file {}", path.display()))
        } else {
            Error::Io(e)
        }
    })?;
    ingest_reader(file, schema, max_malformed_fraction)
}

pub fn ingest_reader(reader: impl Read, schema: &Schema, max_malformed_fraction: f64) -> Result<IngestOutcome> {
    schema.validate()?;
    if !(0.0..=1.0).contains(&max_malformed_fraction) {
        return Err(invalid(format!("malformed fraction {max_malformed_fraction} outside [0, 1]")));
    }
    let mut schema = schema.clone();
    let mut out = IngestOutcome {
        records: Vec::new(),
        errors: Vec::new(),
        lines: 0,
    };
    let mut header_pending = schema.header;
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        let trimmed = line.trim_end_matches('\r');
        if trimmed.trim().is_empty() {
            continue;
        }
        if header_pending {
            header_pending = false;
            let cols: Vec<&str> = trimmed.split(schema.delimiter.as_str()).map(str::trim).collect();
            match cols.get(schema.rating_col).copied() {
                Some("rating") => schema.kind = scaled_default(schema.kind),
                Some("feedback") => schema.kind = RatingKind::Binary,
                _ => {}
            }
            continue;
        }
        out.lines += 1;
        match schema.parse_line(trimmed) {
            Ok(r) => out.records.push(r),
            Err(message) => out.errors.push(LineError { line: i + 1, message }),
        }
    }
    if out.lines == 0 {
        log::warn!("rating input contains no records");
    }
    let allowed = (max_malformed_fraction * out.lines as f64).floor() as usize;
    if out.errors.len() > allowed {
        return Err(Error::TooManyMalformed {
            malformed: out.errors.len(),
            total: out.lines,
            allowed: max_malformed_fraction,
        });
    }
    for e in &out.errors {
        log::warn!("line {}: {}", e.line, e.message);
    }
    Ok(out)
}

fn scaled_default(kind: RatingKind) -> RatingKind {
    match kind {
        RatingKind::Scaled { .. } => kind,
        RatingKind::Binary => RatingKind::Scaled {
            min: f64::MIN,
            max: f64::MAX,
        },
    }
}

/// Writes records in the canonical layout. All records must share a rating
/// kind; binary records get a `feedback` header, scaled ones `rating`.
pub fn write_tsv(records: &[RatingRecord], mut w: impl Write) -> Result<()> {
    let binary = match records.first().map(|r| r.rating) {
        None | Some(Rating::Binary(_)) => true,
        Some(Rating::Scaled(_)) => false,
    };
    writeln!(w, "user\titem\t{}\ttimestamp", if binary { "feedback" } else { "rating" })?;
    for r in records {
        let value = match (r.rating, binary) {
            (Rating::Binary(b), true) => u8::from(b).to_string(),
            (Rating::Scaled(x), false) => format!("{x}"),
            _ => return Err(invalid("cannot export a mix of binary and scaled ratings")),
        };
        writeln!(w, "{}\t{}\t{}\t{}", r.user, r.item, value, r.timestamp)?;
    }
    Ok(())
}

pub fn export_tsv(records: &[RatingRecord], path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_tsv(records, &mut w)?;
    w.flush()?;
    Ok(())
}

/// Ratings at or above `like` become likes; everything else is a dislike.
/// Already-binary records pass through unchanged.
pub fn binarize(records: &[RatingRecord], like: f64, dislike: f64) -> Result<Vec<RatingRecord>> {
    if !(like > dislike) {
        return Err(invalid(format!("like threshold {like} must exceed dislike threshold {dislike}")));
    }
    Ok(records
        .iter()
        .map(|r| {
            let rating = match r.rating {
                Rating::Scaled(x) => Rating::Binary(x >= like),
                b @ Rating::Binary(_) => b,
            };
            RatingRecord { rating, ..*r }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str, schema: &Schema) -> Result<IngestOutcome> {
        ingest_reader(text.as_bytes(), schema, 0.5)
    }

    #[test]
    fn movielens_line() {
        let out = parse("1::1193::5::978300760\n", &Schema::movielens()).unwrap();
        assert_eq!(
            out.records,
            vec![RatingRecord {
                user: UserId(1),
                item: ItemId(1193),
                rating: Rating::Scaled(5.0),
                timestamp: 978300760
            }]
        );
    }

    #[test]
    fn empty_and_malformed() {
        assert!(parse("", &Schema::movielens()).unwrap().records.is_empty());
        let out = parse("1::2::abc::5\n1::3::4::6\n", &Schema::movielens()).unwrap();
        assert_eq!(out.records.len(), 1);
        assert_eq!(out.errors[0].line, 1);
        assert!(out.errors[0].message.contains("abc"));
        let err = ingest_reader("1::2::abc::5\nx\n1::3::4::6\n".as_bytes(), &Schema::movielens(), 0.5).unwrap_err();
        assert!(matches!(err, Error::TooManyMalformed { malformed: 2, total: 3, .. }));
        let out = parse("1::2::9::5\n1::3::4::6\n", &Schema::movielens()).unwrap();
        assert!(out.errors[0].message.contains("outside scale"));
    }

    #[test]
    fn thresholds() {
        let recs: Vec<RatingRecord> = [1.0, 2.0, 3.0, 3.5, 4.0, 5.0]
            .iter()
            .map(|&x| RatingRecord { user: UserId(0), item: ItemId(0), rating: Rating::Scaled(x), timestamp: 0 })
            .collect();
        let b = binarize(&recs, 4.0, 3.0).unwrap();
        let likes: Vec<bool> = b.iter().map(|r| r.liked()).collect();
        assert_eq!(likes, vec![false, false, false, false, true, true]);
        assert_eq!(binarize(&b, 4.0, 3.0).unwrap(), b);
        assert!(binarize(&recs, 3.0, 3.0).is_err());
    }

    #[test]
    fn round_trip_both_kinds() {
        let scaled: Vec<RatingRecord> = (0..5)
            .map(|i| RatingRecord {
                user: UserId(i),
                item: ItemId(10 - i),
                rating: Rating::Scaled(1.0 + i as f64 * 0.75),
                timestamp: -3 + i as i64 * 1_000_000_007,
            })
            .collect();
        for recs in [scaled.clone(), binarize(&scaled, 2.5, 2.0).unwrap()] {
            let mut buf = Vec::new();
            write_tsv(&recs, &mut buf).unwrap();
            let back = ingest_reader(buf.as_slice(), &Schema::canonical(), 0.0).unwrap();
            assert_eq!(back.records, recs);
        }
        let mut mixed = scaled.clone();
        mixed.push(binarize(&scaled[..1], 2.5, 2.0).unwrap()[0]);
        assert!(write_tsv(&mixed, Vec::new()).is_err());
    }

    #[test]
    fn missing_file_is_missing_artifact() {
        let err = ingest(Path::new("/nonexistent/ratings.dat"), &Schema::movielens(), 0.0).unwrap_err();
        assert_eq!(err.kind(), crate::ErrorKind::MissingArtifact);
    }
}
