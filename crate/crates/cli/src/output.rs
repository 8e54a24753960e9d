//! Artifact formats: the report, the block log and the curve files.
//!
//! Every columnar file starts with `#` comment lines naming each column with
//! its unit, followed by one tab-separated header row and the data rows.
//! Floats are written in their shortest round-trip form, so identical runs
//! give identical bytes.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use sepwalk_core::experiment::ReplicaResult;

/// Version of the simulator and of the artifact formats, stamped into every
/// file.
pub const CRATE_VERSION: &str = env!("CARGO_PKG_VERSION");
pub const FORMAT_VERSION: u32 = 1;

pub const BLOCK_LOG_COLUMNS: [(&str, &str); 10] = [
    ("run", "index of the simulation run within the mode"),
    ("replica", "replica index"),
    ("block", "block index within the replica"),
    ("start_time", "time units"),
    ("duration", "time units"),
    ("displacement", "sites"),
    ("attempts", "failed regeneration attempts before success, count"),
    ("events", "walker clock rings in the block, count"),
    ("first", "1 for the delayed first block"),
    ("censored", "1 for the unfinished block at the horizon"),
];

fn banner(w: &mut impl Write, what: &str) -> io::Result<()> {
    writeln!(w, "# sepwalk {CRATE_VERSION} {what}, format {FORMAT_VERSION}")
}

fn header(w: &mut impl Write, columns: &[(&str, &str)]) -> io::Result<()> {
    for (name, unit) in columns {
        writeln!(w, "# {name}: {unit}")?;
    }
    let names: Vec<&str> = columns.iter().map(|c| c.0).collect();
    writeln!(w, "{}", names.join("\t"))
}

/// Block log of one or more runs, one line per block including the censored
/// one.
pub fn write_block_log(w: &mut impl Write, runs: &[(u32, &[ReplicaResult])]) -> io::Result<()> {
    banner(w, "block log")?;
    header(w, &BLOCK_LOG_COLUMNS)?;
    for &(run, results) in runs {
        for r in results {
            for b in r.blocks.iter().chain(&r.censored) {
                writeln!(
                    w,
                    "{run}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                    r.index,
                    b.index,
                    b.start_time,
                    b.duration,
                    b.displacement,
                    b.attempts,
                    b.event_count,
                    u8::from(b.is_first),
                    u8::from(b.censored)
                )?;
            }
        }
    }
    Ok(())
}

/// A plot-ready table.
#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    /// File stem after `curve_`.
    pub name: String,
    pub description: String,
    pub columns: Vec<(String, String)>,
    pub rows: Vec<Vec<f64>>,
}

impl Curve {
    pub fn new(name: &str, description: &str, columns: &[(&str, &str)]) -> Self {
        Self {
            name: name.into(),
            description: description.into(),
            columns: columns.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn file_name(&self) -> String {
        format!("curve_{}.dat", self.name)
    }

    pub fn write(&self, w: &mut impl Write) -> io::Result<()> {
        banner(w, &self.description)?;
        let cols: Vec<(&str, &str)> = self.columns.iter().map(|(a, b)| (a.as_str(), b.as_str())).collect();
        header(w, &cols)?;
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            writeln!(w, "{}", cells.join("\t"))?;
        }
        Ok(())
    }
}

/// `report.txt`: a comment banner followed by TOML with the sections
/// `[run]`, `[config]` and `[estimates]`.
pub fn render_report(config: toml::Table, estimates: toml::Table) -> String {
    let mut run = toml::Table::new();
    run.insert("version".into(), CRATE_VERSION.into());
    run.insert("format".into(), toml::Value::Integer(FORMAT_VERSION.into()));
    let mut doc = toml::Table::new();
    doc.insert("run".into(), run.into());
    doc.insert("config".into(), config.into());
    doc.insert("estimates".into(), estimates.into());
    format!(
        "# sepwalk {CRATE_VERSION} report, format {FORMAT_VERSION}\n{}",
        toml::to_string(&doc).expect("plain table")
    )
}

pub fn write_file(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> io::Result<()>) -> io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    f(&mut w)?;
    w.flush()
}
