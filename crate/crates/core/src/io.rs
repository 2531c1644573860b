//! Dataset files and result artifacts.
//!
//! Two CSV layouts are read and written:
//!
//! * `type_count`: one row per auction with columns `auction_id`,
//!   `winning_bid`, `x_1..x_d`, `n_type_a`, `n_type_b`, `winner_type`
//!   (`a`/`b` or `0`/`1`).
//! * `full_identity`: an auction table `auction_id`, `winning_bid`,
//!   `x_1..x_d` plus a long bidder table `auction_id`, `bidder_index`,
//!   optional `label`, `z_1..z_k`, `is_winner` with exactly one winner per
//!   auction.
//!
//! Lines starting with `#` are comments; writers put a JSON metadata object
//! on the first line. Every file is written to a temporary sibling and
//! renamed into place, so a failure never leaves a partial file.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::Serialize;
use serde_json::Value;

use crate::data::{AuctionRecord, Winner};
use crate::error::{Error, Result};
use crate::model::{Bidder, BidderRoster, CovariateVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetSchema {
    TypeCount,
    FullIdentity,
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Io(format!("{}: {e}", path.display()))
}

/// Writes `bytes` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| io_err(path, e))?;
    tmp.write_all(bytes).map_err(|e| io_err(path, e))?;
    tmp.as_file().sync_all().map_err(|e| io_err(path, e))?;
    tmp.persist(path).map_err(|e| io_err(path, e.error))?;
    Ok(())
}

/// JSON document `{"metadata": …, "result": …}`.
pub fn write_json<S: Serialize>(path: &Path, metadata: &Value, result: &S) -> Result<()> {
    let doc = serde_json::json!({ "metadata": metadata, "result": result });
    let mut bytes = serde_json::to_vec_pretty(&doc)?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

fn with_header(metadata: &Value, body: Vec<u8>) -> Result<Vec<u8>> {
    let mut out = format!("# {}\n", serde_json::to_string(metadata)?).into_bytes();
    out.extend(body);
    Ok(out)
}

/// CSV of serializable rows, preceded by the metadata comment line.
pub fn write_csv_rows<S: Serialize>(path: &Path, metadata: &Value, rows: &[S]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let body = w.into_inner().map_err(|e| io_err(path, e))?;
    write_atomic(path, &with_header(metadata, body)?)
}

/// CSV with explicit header and rows of numbers.
pub fn write_csv_table(path: &Path, metadata: &Value, header: &[&str], rows: &[Vec<f64>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r.iter().map(|v| v.to_string()))?;
    }
    let body = w.into_inner().map_err(|e| io_err(path, e))?;
    write_atomic(path, &with_header(metadata, body)?)
}

/// Metadata object stored on the first line of a CSV, if any.
pub fn read_metadata(path: &Path) -> Result<Option<Value>> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    match text.lines().next().and_then(|l| l.strip_prefix('#')) {
        Some(rest) => Ok(serde_json::from_str(rest.trim()).ok()),
        None => Ok(None),
    }
}

struct Table {
    headers: Vec<String>,
    rows: Vec<(usize, csv::StringRecord)>,
}

impl Table {
    fn read(path: &Path) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_path(path).map_err(|e| io_err(path, e))?;
        let headers = rdr.headers()?.iter().map(str::to_string).collect();
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let line = rec.position().map_or(0, |p| p.line() as usize);
            rows.push((line, rec));
        }
        Ok(Self { headers, rows })
    }

    fn col(&self, name: &str) -> Result<usize> {
        self.headers.iter().position(|h| h == name).ok_or_else(|| Error::MissingColumn(name.into()))
    }

    fn opt_col(&self, name: &str) -> Option<usize> {
        self.headers.iter().position(|h| h == name)
    }

    /// Indices of `prefix_1, prefix_2, …` in order; must be contiguous from 1.
    fn numbered(&self, prefix: &str) -> Vec<usize> {
        (1..).map_while(|j| self.opt_col(&format!("{prefix}_{j}"))).collect()
    }
}

fn parse<T: std::str::FromStr>(line: usize, rec: &csv::StringRecord, col: usize, name: &str) -> Result<T> {
    let raw = rec.get(col).unwrap_or("");
    raw.parse().map_err(|_| Error::Data { row: line, message: format!("cannot parse {name} = `{raw}`") })
}

fn row_err(line: usize) -> impl Fn(Error) -> Error {
    move |e| match e {
        Error::Data { .. } => e,
        other => Error::Data { row: line, message: other.to_string() },
    }
}

fn winner_type(line: usize, raw: &str) -> Result<usize> {
    match raw {
        "a" | "A" | "0" => Ok(0),
        "b" | "B" | "1" => Ok(1),
        _ => Err(Error::Data { row: line, message: format!("winner_type must be a/b or 0/1, got `{raw}`") }),
    }
}

fn covariates(line: usize, rec: &csv::StringRecord, xcols: &[usize]) -> Result<CovariateVector<f64>> {
    let x: Vec<f64> =
        xcols.iter().enumerate().map(|(j, &c)| parse(line, rec, c, &format!("x_{}", j + 1))).collect::<Result<_>>()?;
    CovariateVector::new(&x).map_err(row_err(line))
}

pub fn load_type_count(path: &Path) -> Result<Vec<AuctionRecord>> {
    let t = Table::read(path)?;
    let (id, wb, na, nb, wt) = (t.col("auction_id")?, t.col("winning_bid")?, t.col("n_type_a")?, t.col("n_type_b")?, t.col("winner_type")?);
    let xcols = t.numbered("x");
    t.rows
        .iter()
        .map(|(line, rec)| {
            let line = *line;
            let auction_id: u64 = parse(line, rec, id, "auction_id")?;
            let winning_bid: f64 = parse(line, rec, wb, "winning_bid")?;
            let counts = [parse::<usize>(line, rec, na, "n_type_a")?, parse::<usize>(line, rec, nb, "n_type_b")?];
            let winner = winner_type(line, rec.get(wt).unwrap_or(""))?;
            if counts[winner] == 0 {
                return Err(Error::Data { row: line, message: "winner type has no bidder in the auction".into() });
            }
            let x = covariates(line, rec, &xcols)?;
            let roster = BidderRoster::from_type_counts(&counts).map_err(row_err(line))?;
            AuctionRecord::new(auction_id, winning_bid, x, roster, Winner::Type(winner)).map_err(row_err(line))
        })
        .collect()
}

pub fn load_full_identity(auctions: &Path, bidders: &Path) -> Result<Vec<AuctionRecord>> {
    let bt = Table::read(bidders)?;
    let (bid, bidx, win) = (bt.col("auction_id")?, bt.col("bidder_index")?, bt.col("is_winner")?);
    let label_col = bt.opt_col("label");
    let zcols = bt.numbered("z");
    // auction_id → (first line, [(bidder_index, label, z, is_winner)])
    type Entry = (usize, Vec<(usize, usize, Vec<f64>, bool)>);
    let mut by_auction: BTreeMap<u64, Entry> = BTreeMap::new();
    for (line, rec) in &bt.rows {
        let line = *line;
        let a: u64 = parse(line, rec, bid, "auction_id")?;
        let i: usize = parse(line, rec, bidx, "bidder_index")?;
        let label = match label_col {
            Some(c) => parse(line, rec, c, "label")?,
            None => 0,
        };
        let z: Vec<f64> = zcols.iter().enumerate().map(|(j, &c)| parse(line, rec, c, &format!("z_{}", j + 1))).collect::<Result<_>>()?;
        let w = match rec.get(win).unwrap_or("") {
            "1" | "true" | "TRUE" | "True" => true,
            "0" | "false" | "FALSE" | "False" => false,
            raw => return Err(Error::Data { row: line, message: format!("is_winner must be 0/1, got `{raw}`") }),
        };
        by_auction.entry(a).or_insert((line, Vec::new())).1.push((i, label, z, w));
    }

    let at = Table::read(auctions)?;
    let (id, wb) = (at.col("auction_id")?, at.col("winning_bid")?);
    let xcols = at.numbered("x");
    at.rows
        .iter()
        .map(|(line, rec)| {
            let line = *line;
            let auction_id: u64 = parse(line, rec, id, "auction_id")?;
            let winning_bid: f64 = parse(line, rec, wb, "winning_bid")?;
            let x = covariates(line, rec, &xcols)?;
            let (bline, mut bs) = by_auction.remove(&auction_id).ok_or(Error::Data {
                row: line,
                message: format!("auction {auction_id} has no bidders in the bidder table"),
            })?;
            bs.sort_by_key(|b| b.0);
            if bs.windows(2).any(|w| w[0].0 == w[1].0) {
                return Err(Error::Data { row: bline, message: format!("auction {auction_id}: duplicate bidder_index") });
            }
            let winners: Vec<usize> = bs.iter().enumerate().filter(|(_, b)| b.3).map(|(k, _)| k).collect();
            let winner = match winners.as_slice() {
                [w] => *w,
                [] => return Err(Error::Data { row: bline, message: format!("auction {auction_id}: no winner") }),
                _ => return Err(Error::Data { row: bline, message: format!("auction {auction_id}: multiple winners") }),
            };
            let roster = BidderRoster::new(bs.into_iter().map(|(_, label, z, _)| Bidder::new(label, z)).collect()).map_err(row_err(line))?;
            AuctionRecord::new(auction_id, winning_bid, x, roster, Winner::Index(winner)).map_err(row_err(line))
        })
        .collect()
}

fn x_header(d: usize, prefix: &str) -> Vec<String> {
    (1..=d).map(|j| format!("{prefix}_{j}")).collect()
}

/// Type-count layout; needs rosters with labels 0 and 1 only.
pub fn save_type_count(path: &Path, records: &[AuctionRecord], metadata: &Value) -> Result<()> {
    let d = records.first().map_or(0, |r| r.x.characteristics().len());
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["auction_id".to_string(), "winning_bid".into()];
    header.extend(x_header(d, "x"));
    header.extend(["n_type_a".into(), "n_type_b".into(), "winner_type".into()]);
    w.write_record(&header)?;
    for r in records {
        if r.x.characteristics().len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: r.x.characteristics().len() });
        }
        let (a, b) = r.type_pair()?;
        let mut row = vec![r.auction_id.to_string(), r.winning_bid.to_string()];
        row.extend(r.x.characteristics().iter().map(|v| v.to_string()));
        row.extend([a.to_string(), b.to_string(), if r.winner_label() == 0 { "a" } else { "b" }.to_string()]);
        w.write_record(&row)?;
    }
    let body = w.into_inner().map_err(|e| io_err(path, e))?;
    write_atomic(path, &with_header(metadata, body)?)
}

/// Full-identity layout; type winners are written as the first bidder of the
/// winning type.
pub fn save_full_identity(auctions: &Path, bidders: &Path, records: &[AuctionRecord], metadata: &Value) -> Result<()> {
    let d = records.first().map_or(0, |r| r.x.characteristics().len());
    let k = records.iter().flat_map(|r| r.roster.bidders()).map(|b| b.z.len()).max().unwrap_or(0);
    let mut aw = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["auction_id".to_string(), "winning_bid".into()];
    header.extend(x_header(d, "x"));
    aw.write_record(&header)?;
    let mut bw = csv::Writer::from_writer(Vec::new());
    let mut bheader = vec!["auction_id".to_string(), "bidder_index".into(), "label".into()];
    bheader.extend(x_header(k, "z"));
    bheader.push("is_winner".into());
    bw.write_record(&bheader)?;
    for r in records {
        let mut row = vec![r.auction_id.to_string(), r.winning_bid.to_string()];
        row.extend(r.x.characteristics().iter().map(|v| v.to_string()));
        aw.write_record(&row)?;
        let winner = match r.winner {
            Winner::Index(i) => i,
            Winner::Type(t) => r.roster.bidders().iter().position(|b| b.label == t).ok_or(Error::UnknownLabel(t))?,
        };
        for (i, b) in r.roster.bidders().iter().enumerate() {
            if b.z.len() != k {
                return Err(Error::DimensionMismatch { expected: k, got: b.z.len() });
            }
            let mut row = vec![r.auction_id.to_string(), i.to_string(), b.label.to_string()];
            row.extend(b.z.iter().map(|v| v.to_string()));
            row.push(u8::from(i == winner).to_string());
            bw.write_record(&row)?;
        }
    }
    let abody = aw.into_inner().map_err(|e| io_err(auctions, e))?;
    let bbody = bw.into_inner().map_err(|e| io_err(bidders, e))?;
    write_atomic(auctions, &with_header(metadata, abody)?)?;
    write_atomic(bidders, &with_header(metadata, bbody)?)
}
