//! Readers and writers for datasets, itemset families and clusterings.
//!
//! Dense CSV has an optional header of column labels and an optional first
//! column of row labels; both are recognised by tokens other than `0`/`1`.
//! Transaction files list the items of one row per line, whitespace
//! separated, with an optional `#items: A B C` directive fixing the column
//! order. Writers produce identical bytes for identical inputs.

use std::collections::{HashMap, HashSet};
use std::io::{BufRead, Read, Write};
use std::str::FromStr;

use crate::clustering::RowClustering;
use crate::error::{Error, Result};
use crate::matrix::BinaryDataset;
use crate::patterns::{Itemset, ItemsetFamily};

const ITEMS_DIRECTIVE: &str = "#items:";

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DatasetFormat {
    Dense,
    Transactions,
}

impl FromStr for DatasetFormat {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "dense" | "dense-csv" | "csv" => Ok(DatasetFormat::Dense),
            "transactions" => Ok(DatasetFormat::Transactions),
            _ => Err(format!("unknown dataset format {s:?}")),
        }
    }
}

pub fn load_dataset<R: Read>(source: R, format: DatasetFormat) -> Result<BinaryDataset> {
    match format {
        DatasetFormat::Dense => load_dense(source),
        DatasetFormat::Transactions => load_transactions(std::io::BufReader::new(source)),
    }
}

pub fn write_dataset<W: Write>(d: &BinaryDataset, format: DatasetFormat, out: W) -> Result<()> {
    match format {
        DatasetFormat::Dense => write_dense(d, out),
        DatasetFormat::Transactions => write_transactions(d, out),
    }
}

pub fn dataset_to_string(d: &BinaryDataset, format: DatasetFormat) -> String {
    let mut buf = Vec::new();
    write_dataset(d, format, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("writers emit UTF-8")
}

fn is_bit(tok: &str) -> bool {
    tok == "0" || tok == "1"
}

fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        kind => Error::parse(line, format!("{kind:?}")),
    }
}

fn load_dense<R: Read>(source: R) -> Result<BinaryDataset> {
    let mut reader =
        csv::ReaderBuilder::new().has_headers(false).flexible(true).trim(csv::Trim::All).from_reader(source);

    let mut header: Option<Vec<String>> = None;
    let mut labelled: Option<bool> = None;
    let mut row_labels = Vec::new();
    let mut rows: Vec<Vec<u8>> = Vec::new();
    let mut width: Option<usize> = None;

    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(csv_error)?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(i + 1);
        let toks: Vec<&str> = rec.iter().collect();
        if toks.iter().all(|t| t.is_empty()) {
            continue;
        }
        let looks_like_header = toks.iter().skip(1).any(|t| !is_bit(t)) || (toks.len() == 1 && !is_bit(toks[0]));
        if i == 0 && looks_like_header {
            header = Some(toks.iter().map(|t| t.to_string()).collect());
            continue;
        }
        let has_label = *labelled.get_or_insert(!is_bit(toks[0]));
        let cells = if has_label { &toks[1..] } else { &toks[..] };
        if has_label {
            row_labels.push(toks[0].to_string());
        }
        match width {
            None => width = Some(cells.len()),
            Some(w) if w != cells.len() => {
                return Err(Error::parse(line, format!("expected {w} cells, found {}", cells.len())));
            }
            _ => {}
        }
        let mut row = Vec::with_capacity(cells.len());
        for (c, tok) in cells.iter().enumerate() {
            match *tok {
                "0" => row.push(0),
                "1" => row.push(1),
                other => {
                    return Err(Error::value(Some(line), format!("cell {} is {other:?}, expected 0 or 1", c + 1)));
                }
            }
        }
        rows.push(row);
    }

    let n_cols = match (&header, width) {
        (_, Some(w)) => w,
        (Some(h), None) => h.len() - usize::from(h.first().is_some_and(|c| c.is_empty())),
        (None, None) => 0,
    };
    let col_labels = match header {
        Some(mut h) => {
            if h.len() == n_cols + 1 && (labelled == Some(true) || h[0].is_empty()) {
                h.remove(0);
            }
            if h.len() != n_cols {
                return Err(Error::parse(1, format!("header has {} labels for {n_cols} columns", h.len())));
            }
            Some(h)
        }
        None => None,
    };
    if let Some(h) = &col_labels {
        check_unique(h, "column")?;
    }
    let row_labels = (labelled == Some(true)).then_some(row_labels);
    if let Some(r) = &row_labels {
        check_unique(r, "row")?;
    }
    BinaryDataset::from_fn(rows.len(), n_cols, |r, c| rows[r][c] == 1).with_labels(row_labels, col_labels)
}

fn check_unique(labels: &[String], what: &str) -> Result<()> {
    let mut seen = HashSet::new();
    for l in labels {
        if !seen.insert(l) {
            return Err(Error::value(None, format!("duplicate {what} label {l:?}")));
        }
    }
    Ok(())
}

fn load_transactions<R: BufRead>(source: R) -> Result<BinaryDataset> {
    let mut declared = false;
    let mut labels: Vec<String> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut rows: Vec<Vec<usize>> = Vec::new();

    for (i, line) in source.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        let text = line.trim();
        if let Some(rest) = text.strip_prefix(ITEMS_DIRECTIVE) {
            if declared || !rows.is_empty() {
                return Err(Error::parse(lineno, "#items directive must come first and only once"));
            }
            let items: Vec<String> = rest.split_whitespace().map(str::to_string).collect();
            for (c, item) in items.iter().enumerate() {
                if index.insert(item.clone(), c).is_some() {
                    return Err(Error::value(Some(lineno), format!("item {item:?} declared twice")));
                }
            }
            labels = items;
            declared = true;
            continue;
        }
        if text.starts_with('#') {
            continue;
        }
        let mut row = Vec::new();
        for item in text.split_whitespace() {
            let c = match index.get(item) {
                Some(&c) => c,
                None if declared => {
                    return Err(Error::value(Some(lineno), format!("item {item:?} not in #items")));
                }
                None => {
                    labels.push(item.to_string());
                    index.insert(item.to_string(), labels.len() - 1);
                    labels.len() - 1
                }
            };
            if row.contains(&c) {
                return Err(Error::value(Some(lineno), format!("duplicate item {item:?} in transaction")));
            }
            row.push(c);
        }
        rows.push(row);
    }

    BinaryDataset::from_fn(rows.len(), labels.len(), |r, c| rows[r].contains(&c)).with_labels(None, Some(labels))
}

fn write_dense<W: Write>(d: &BinaryDataset, out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().flexible(true).from_writer(out);
    let map = |e: csv::Error| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        kind => Error::Corrupt(format!("{kind:?}")),
    };
    if let Some(cols) = d.col_labels() {
        let mut header: Vec<&str> = Vec::with_capacity(cols.len() + 1);
        if d.row_labels().is_some() {
            header.push("");
        }
        header.extend(cols.iter().map(String::as_str));
        w.write_record(&header).map_err(map)?;
    }
    for r in 0..d.n_rows() {
        let mut rec: Vec<String> = Vec::with_capacity(d.n_cols() + 1);
        if let Some(rows) = d.row_labels() {
            rec.push(rows[r].clone());
        }
        rec.extend((0..d.n_cols()).map(|c| if d.get(r, c) { "1" } else { "0" }.to_string()));
        w.write_record(&rec).map_err(map)?;
    }
    w.flush()?;
    Ok(())
}

fn write_transactions<W: Write>(d: &BinaryDataset, mut out: W) -> Result<()> {
    let labels: Vec<String> = (0..d.n_cols()).map(|c| d.col_label(c)).collect();
    writeln!(out, "{ITEMS_DIRECTIVE} {}", labels.join(" "))?;
    for r in 0..d.n_rows() {
        let items: Vec<&str> = (0..d.n_cols()).filter(|&c| d.get(r, c)).map(|c| labels[c].as_str()).collect();
        writeln!(out, "{}", items.join(" "))?;
    }
    Ok(())
}

/// Reads an itemset family: one itemset per line as column labels, with an
/// optional trailing `: target`. Either every line has a target or none.
pub fn load_itemsets<R: Read>(source: R, d: &BinaryDataset) -> Result<ItemsetFamily> {
    let mut entries: Vec<(Itemset, Option<u64>, usize)> = Vec::new();
    for (i, line) in std::io::BufReader::new(source).lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        let text = line.trim();
        if text.is_empty() || text.starts_with('#') {
            continue;
        }
        let (items, target) = match text.rsplit_once(':') {
            Some((items, t)) => {
                let t =
                    t.trim().parse::<u64>().map_err(|_| Error::parse(lineno, format!("bad target {:?}", t.trim())))?;
                (items, Some(t))
            }
            None => (text, None),
        };
        let mut cols = Vec::new();
        for tok in items.split_whitespace() {
            let c = d.col_index(tok).ok_or_else(|| Error::value(Some(lineno), format!("unknown column {tok:?}")))?;
            if cols.contains(&c) {
                return Err(Error::value(Some(lineno), format!("column {tok:?} repeated")));
            }
            cols.push(c);
        }
        entries.push((Itemset::new(cols), target, lineno));
    }
    let with_targets = entries.iter().filter(|e| e.1.is_some()).count();
    if with_targets == 0 {
        return Ok(ItemsetFamily::new(entries.into_iter().map(|e| e.0)));
    }
    if let Some(e) = entries.iter().find(|e| e.1.is_none()) {
        return Err(Error::parse(e.2, "target frequency missing; give targets on every line or none"));
    }
    Ok(ItemsetFamily::with_targets(entries.into_iter().map(|e| (e.0, e.1.unwrap()))))
}

pub fn write_itemsets<W: Write>(family: &ItemsetFamily, d: &BinaryDataset, mut out: W) -> Result<()> {
    for (i, x) in family.itemsets().iter().enumerate() {
        match family.target(i) {
            Some(t) => writeln!(out, "{}: {t}", x.label(d))?,
            None => writeln!(out, "{}", x.label(d))?,
        }
    }
    Ok(())
}

/// Reads `row_label<TAB>cluster_id` lines; every row must appear exactly once.
pub fn load_clustering<R: Read>(source: R, d: &BinaryDataset) -> Result<RowClustering> {
    let mut ids: Vec<Option<usize>> = vec![None; d.n_rows()];
    for (i, line) in std::io::BufReader::new(source).lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let (label, id) =
            line.split_once('\t').ok_or_else(|| Error::parse(lineno, "expected row_label<TAB>cluster_id"))?;
        let r =
            d.row_index(label.trim()).ok_or_else(|| Error::value(Some(lineno), format!("unknown row {label:?}")))?;
        let id =
            id.trim().parse::<usize>().map_err(|_| Error::parse(lineno, format!("bad cluster id {:?}", id.trim())))?;
        if id >= d.n_rows().max(1) {
            return Err(Error::value(Some(lineno), format!("cluster id {id} exceeds the number of rows")));
        }
        if ids[r].replace(id).is_some() {
            return Err(Error::value(Some(lineno), format!("row {label:?} assigned twice")));
        }
    }
    if let Some(r) = ids.iter().position(Option::is_none) {
        return Err(Error::value(None, format!("row {:?} has no cluster", d.row_label(r))));
    }
    Ok(RowClustering::new(ids.into_iter().map(Option::unwrap)))
}

pub fn write_clustering<W: Write>(c: &RowClustering, d: &BinaryDataset, mut out: W) -> Result<()> {
    c.check(d)?;
    for (r, id) in c.assignment().iter().enumerate() {
        writeln!(out, "{}\t{id}", d.row_label(r))?;
    }
    Ok(())
}
