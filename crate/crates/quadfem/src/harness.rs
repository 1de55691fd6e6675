//! Convergence tables, CSV emission, and regression fixtures.
//!
//! A [`ConvergenceTable`] holds per-level errors, percentages relative to
//! the reference norm, and `log2` rates between consecutive levels, for one
//! or more norms.  CSV output keeps full precision (17 significant digits);
//! the aligned human-readable table prints errors in two-significant-digit
//! scientific notation for visual comparison.  Fixture files are the same
//! CSV format and are compared cell by cell with relative tolerances on
//! errors and absolute tolerances on rates.

use std::fmt;
use std::path::Path;

use crate::{Error, Result};

/// One table cell: error, percent of the reference norm, and the rate from
/// the previous level (blank on the first row).
#[derive(Clone, Copy, Debug)]
pub struct TableCell {
    pub err: f64,
    pub pct: f64,
    pub rate: Option<f64>,
}

/// Per-level errors, percentages, and rates for one or more norms.
#[derive(Clone, Debug, Default)]
pub struct ConvergenceTable {
    meta: Vec<(String, String)>,
    norm_labels: Vec<String>,
    ns: Vec<u32>,
    /// `cells[row][norm]`
    cells: Vec<Vec<TableCell>>,
}

impl ConvergenceTable {
    pub fn new(norm_labels: Vec<String>) -> Self {
        ConvergenceTable {
            meta: Vec::new(),
            norm_labels,
            ns: Vec::new(),
            cells: Vec::new(),
        }
    }

    pub fn set_meta(&mut self, key: &str, value: &str) {
        if let Some(slot) = self.meta.iter_mut().find(|(k, _)| k == key) {
            slot.1 = value.to_string();
        } else {
            self.meta.push((key.to_string(), value.to_string()));
        }
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        self.meta
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn norm_labels(&self) -> &[String] {
        &self.norm_labels
    }

    pub fn levels(&self) -> &[u32] {
        &self.ns
    }

    pub fn rows(&self) -> usize {
        self.ns.len()
    }

    pub fn cell(&self, row: usize, norm: usize) -> TableCell {
        self.cells[row][norm]
    }

    /// Append a level; `cols` holds `(err, pct)` per norm, rates are
    /// computed against the previous row.
    pub fn push_row(&mut self, n: u32, cols: &[(f64, f64)]) {
        assert_eq!(cols.len(), self.norm_labels.len());
        if let Some(&last) = self.ns.last() {
            assert!(n > last, "levels must be strictly increasing");
        }
        let prev = self.cells.last().cloned();
        let row: Vec<TableCell> = cols
            .iter()
            .enumerate()
            .map(|(k, &(err, pct))| {
                let rate = prev.as_ref().and_then(|p| {
                    if p[k].err > 0.0 && err > 0.0 {
                        Some((p[k].err / err).log2())
                    } else {
                        None
                    }
                });
                TableCell { err, pct, rate }
            })
            .collect();
        self.ns.push(n);
        self.cells.push(row);
    }

    /// Final rate in the given norm, if at least two levels were recorded.
    pub fn final_rate(&self, norm: usize) -> Option<f64> {
        self.cells.last().and_then(|row| row[norm].rate)
    }

    /// Rates recomputed from the error column agree with the stored column.
    pub fn rates_consistent(&self, tol: f64) -> bool {
        for k in 0..self.norm_labels.len() {
            for row in 1..self.rows() {
                let expect = (self.cells[row - 1][k].err / self.cells[row][k].err).log2();
                match self.cells[row][k].rate {
                    Some(r) if (r - expect).abs() <= tol => {}
                    _ => return false,
                }
            }
        }
        true
    }

    /// Full-precision CSV.  With one norm and `with_pct = false` the header
    /// is `n,err,rate`; otherwise columns are prefixed with the norm label,
    /// `n,l2_err,l2_pct,l2_rate,...`.
    pub fn to_csv(&self, with_pct: bool) -> String {
        let mut out = String::new();
        for (k, v) in &self.meta {
            out.push_str(&format!("# {k}={v}\n"));
        }
        let single = self.norm_labels.len() == 1 && !with_pct;
        out.push('n');
        for label in &self.norm_labels {
            if single {
                out.push_str(",err,rate");
            } else {
                out.push_str(&format!(",{label}_err"));
                if with_pct {
                    out.push_str(&format!(",{label}_pct"));
                }
                out.push_str(&format!(",{label}_rate"));
            }
        }
        out.push('\n');
        for (row, n) in self.ns.iter().enumerate() {
            out.push_str(&n.to_string());
            for cell in &self.cells[row] {
                out.push_str(&format!(",{:.16e}", cell.err));
                if with_pct && !single {
                    out.push_str(&format!(",{:.16e}", cell.pct));
                }
                match cell.rate {
                    Some(r) => out.push_str(&format!(",{r:.16e}")),
                    None => out.push(','),
                }
            }
            out.push('\n');
        }
        out
    }

    /// Parse the CSV format back.  Percent columns are optional; a missing
    /// percent is stored as NaN and skipped by fixture comparison.
    pub fn from_csv(text: &str) -> Result<ConvergenceTable> {
        let mut meta = Vec::new();
        let mut lines = text.lines().peekable();
        while let Some(line) = lines.peek() {
            if let Some(rest) = line.strip_prefix('#') {
                if let Some((k, v)) = rest.trim().split_once('=') {
                    meta.push((k.trim().to_string(), v.trim().to_string()));
                }
                lines.next();
            } else {
                break;
            }
        }
        let header = lines
            .next()
            .ok_or_else(|| Error::InvalidArgument("empty table".into()))?;
        let cols: Vec<&str> = header.split(',').collect();
        if cols.first() != Some(&"n") {
            return Err(Error::InvalidArgument(format!(
                "bad table header '{header}'"
            )));
        }
        // column layout per norm: err [pct] rate
        let mut norm_labels = Vec::new();
        let mut has_pct = Vec::new();
        let mut k = 1;
        while k < cols.len() {
            let (label, err_col) = match cols[k].strip_suffix("_err") {
                Some(l) => (l.to_string(), true),
                None => ("err".to_string(), cols[k] == "err"),
            };
            if !err_col {
                return Err(Error::InvalidArgument(format!(
                    "expected an error column, got '{}'",
                    cols[k]
                )));
            }
            let pct = k + 1 < cols.len() && cols[k + 1].ends_with("pct");
            let rate_at = if pct { k + 2 } else { k + 1 };
            if rate_at >= cols.len() || !cols[rate_at].ends_with("rate") {
                return Err(Error::InvalidArgument(format!(
                    "expected a rate column for norm '{label}'"
                )));
            }
            norm_labels.push(label);
            has_pct.push(pct);
            k = rate_at + 1;
        }
        let mut table = ConvergenceTable::new(norm_labels.clone());
        table.meta = meta;
        for line in lines {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            let n: u32 = fields[0]
                .trim()
                .parse()
                .map_err(|_| Error::InvalidArgument(format!("bad level '{}'", fields[0])))?;
            let mut cells = Vec::new();
            let mut at = 1;
            for &pct in &has_pct {
                let err = parse_float(fields.get(at).copied())?;
                at += 1;
                let pct_val = if pct {
                    let v = parse_float(fields.get(at).copied())?;
                    at += 1;
                    v
                } else {
                    f64::NAN
                };
                let rate = match fields.get(at).map(|s| s.trim()) {
                    Some("") | None => None,
                    Some(s) => Some(s.parse().map_err(|_| {
                        Error::InvalidArgument(format!("bad rate '{s}'"))
                    })?),
                };
                at += 1;
                cells.push(TableCell {
                    err,
                    pct: pct_val,
                    rate,
                });
            }
            table.ns.push(n);
            table.cells.push(cells);
        }
        Ok(table)
    }

    /// Aligned human-readable table in the style used by convergence
    /// studies: per norm an `err % rate` block, errors with two significant
    /// digits.
    pub fn to_aligned_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.meta {
            out.push_str(&format!("# {k}={v}\n"));
        }
        out.push_str(&format!("{:>5}", "n"));
        for label in &self.norm_labels {
            out.push_str(&format!(
                "  {:>9} {:>8} {:>5}",
                format!("{label}_err"),
                "%",
                "rate"
            ));
        }
        out.push('\n');
        for (row, n) in self.ns.iter().enumerate() {
            out.push_str(&format!("{n:>5}"));
            for cell in &self.cells[row] {
                let rate = match cell.rate {
                    Some(r) => format!("{r:.1}"),
                    None => String::new(),
                };
                let pct = if cell.pct.is_nan() {
                    String::new()
                } else {
                    format!("{:.3}", cell.pct)
                };
                out.push_str(&format!(
                    "  {:>9} {:>8} {:>5}",
                    format!("{:.1e}", cell.err),
                    pct,
                    rate
                ));
            }
            out.push('\n');
        }
        out
    }

    /// Gnuplot-friendly whitespace-separated data: n, h, then one error
    /// column per norm.
    pub fn to_gnuplot(&self) -> String {
        let mut out = String::from("# n h");
        for label in &self.norm_labels {
            out.push_str(&format!(" {label}_err"));
        }
        out.push('\n');
        for (row, n) in self.ns.iter().enumerate() {
            out.push_str(&format!("{n} {:.16e}", 1.0 / *n as f64));
            for cell in &self.cells[row] {
                out.push_str(&format!(" {:.16e}", cell.err));
            }
            out.push('\n');
        }
        out
    }

    pub fn write_csv<P: AsRef<Path>>(&self, path: P, with_pct: bool) -> Result<()> {
        std::fs::write(path, self.to_csv(with_pct))?;
        Ok(())
    }

    pub fn read_csv<P: AsRef<Path>>(path: P) -> Result<ConvergenceTable> {
        Self::from_csv(&std::fs::read_to_string(path)?)
    }
}

fn parse_float(tok: Option<&str>) -> Result<f64> {
    tok.ok_or_else(|| Error::InvalidArgument("missing table field".into()))?
        .trim()
        .parse()
        .map_err(|_| Error::InvalidArgument(format!("bad table field '{}'", tok.unwrap())))
}

/// Tolerances for comparing a computed table to a stored fixture.
#[derive(Clone, Copy, Debug)]
pub struct FixtureTolerances {
    /// Relative tolerance on error and percent cells.
    pub err_rel: f64,
    /// Absolute tolerance on rate cells.
    pub rate_abs: f64,
}

/// One compared cell.
#[derive(Clone, Debug)]
pub struct CellCheck {
    pub n: u32,
    pub norm: String,
    pub column: &'static str,
    pub got: f64,
    pub want: f64,
    pub pass: bool,
}

/// Per-cell verdicts and the overall result.
#[derive(Clone, Debug)]
pub struct FixtureReport {
    pub checks: Vec<CellCheck>,
    pub pass: bool,
}

impl fmt::Display for FixtureReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            writeln!(
                f,
                "{} n={:<4} {:<4} {:<5} got {:<12.4e} want {:<12.4e}",
                if c.pass { "pass" } else { "FAIL" },
                c.n,
                c.norm,
                c.column,
                c.got,
                c.want
            )?;
        }
        let failures = self.checks.iter().filter(|c| !c.pass).count();
        if self.pass {
            write!(f, "fixture comparison: all {} cells pass", self.checks.len())
        } else {
            write!(
                f,
                "fixture comparison: {failures} of {} cells FAIL",
                self.checks.len()
            )
        }
    }
}

/// Compare a computed table against a fixture cell by cell.
///
/// Shapes (levels and norm count) must match, and any metadata key present
/// in both tables must agree.  Errors and percentages are compared with the
/// relative tolerance, rates with the absolute one; a missing percent (NaN)
/// is skipped.
pub fn compare_to_fixture(
    got: &ConvergenceTable,
    fixture: &ConvergenceTable,
    tol: &FixtureTolerances,
) -> Result<FixtureReport> {
    for (k, v) in &fixture.meta {
        if let Some(g) = got.meta(k) {
            if g != v {
                return Err(Error::InvalidArgument(format!(
                    "metadata mismatch for '{k}': got '{g}', fixture has '{v}'"
                )));
            }
        }
    }
    if got.ns != fixture.ns || got.norm_labels.len() != fixture.norm_labels.len() {
        return Err(Error::InvalidArgument(
            "table shape does not match fixture".into(),
        ));
    }
    let mut checks = Vec::new();
    for row in 0..got.rows() {
        for k in 0..got.norm_labels.len() {
            let g = got.cells[row][k];
            let w = fixture.cells[row][k];
            let n = got.ns[row];
            let norm = got.norm_labels[k].clone();
            let rel_ok = |a: f64, b: f64| (a - b).abs() <= tol.err_rel * b.abs();
            checks.push(CellCheck {
                n,
                norm: norm.clone(),
                column: "err",
                got: g.err,
                want: w.err,
                pass: rel_ok(g.err, w.err),
            });
            if !w.pct.is_nan() && !g.pct.is_nan() {
                checks.push(CellCheck {
                    n,
                    norm: norm.clone(),
                    column: "pct",
                    got: g.pct,
                    want: w.pct,
                    pass: rel_ok(g.pct, w.pct),
                });
            }
            match (g.rate, w.rate) {
                (None, None) => {}
                (Some(gr), Some(wr)) => checks.push(CellCheck {
                    n,
                    norm,
                    column: "rate",
                    got: gr,
                    want: wr,
                    pass: (gr - wr).abs() <= tol.rate_abs,
                }),
                (gr, wr) => checks.push(CellCheck {
                    n,
                    norm,
                    column: "rate",
                    got: gr.unwrap_or(f64::NAN),
                    want: wr.unwrap_or(f64::NAN),
                    pass: false,
                }),
            }
        }
    }
    let pass = checks.iter().all(|c| c.pass);
    Ok(FixtureReport { checks, pass })
}

/// Worker count from `QUADFEM_THREADS`; 0 (the default) means the
/// deterministic serial path.
pub fn threads_from_env() -> usize {
    std::env::var("QUADFEM_THREADS")
        .ok()
        .and_then(|s| s.parse().ok())
        .unwrap_or(0)
}

/// A rayon pool for `threads > 0`, `None` for the serial path.
pub fn make_pool(threads: usize) -> Option<rayon::ThreadPool> {
    if threads == 0 {
        None
    } else {
        Some(
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .expect("thread pool construction cannot fail with a fixed count"),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_table() -> ConvergenceTable {
        let mut t = ConvergenceTable::new(vec!["l2".into(), "h1".into()]);
        t.set_meta("element", "q2");
        t.set_meta("family", "square");
        t.push_row(2, &[(3.5e-2, 2.877), (4.5e-1, 37.253)]);
        t.push_row(4, &[(4.4e-3, 0.360), (1.1e-1, 9.333)]);
        t.push_row(8, &[(5.5e-4, 0.045), (2.8e-2, 2.329)]);
        t
    }

    #[test]
    fn rates_computed_from_errors() {
        let t = sample_table();
        assert!(t.cell(0, 0).rate.is_none());
        let r = t.cell(1, 0).rate.unwrap();
        assert!((r - (3.5e-2f64 / 4.4e-3).log2()).abs() < 1e-12);
        assert!(t.rates_consistent(1e-12));
    }

    #[test]
    fn csv_round_trip() {
        let t = sample_table();
        let csv = t.to_csv(true);
        let back = ConvergenceTable::from_csv(&csv).unwrap();
        assert_eq!(back.levels(), t.levels());
        assert_eq!(back.meta("element"), Some("q2"));
        for row in 0..t.rows() {
            for k in 0..2 {
                assert_eq!(back.cell(row, k).err, t.cell(row, k).err);
                assert_eq!(back.cell(row, k).pct, t.cell(row, k).pct);
                assert_eq!(back.cell(row, k).rate, t.cell(row, k).rate);
            }
        }
        // single-norm style without percent
        let mut p = ConvergenceTable::new(vec!["l2".into()]);
        p.push_row(2, &[(0.5, f64::NAN)]);
        p.push_row(4, &[(0.125, f64::NAN)]);
        let csv = p.to_csv(false);
        assert!(csv.contains("n,err,rate"));
        let back = ConvergenceTable::from_csv(&csv).unwrap();
        assert_eq!(back.cell(1, 0).rate.unwrap(), 2.0);
    }

    #[test]
    fn identical_tables_pass_comparison() {
        let t = sample_table();
        let report = compare_to_fixture(
            &t,
            &t.clone(),
            &FixtureTolerances {
                err_rel: 1e-12,
                rate_abs: 1e-12,
            },
        )
        .unwrap();
        assert!(report.pass);
    }

    #[test]
    fn tolerance_arithmetic() {
        let mut got = ConvergenceTable::new(vec!["l2".into()]);
        got.push_row(2, &[(1.0, f64::NAN)]);
        got.push_row(4, &[(1.0 / 4.227, f64::NAN)]); // rate 2.08
        let mut fix = ConvergenceTable::new(vec!["l2".into()]);
        fix.push_row(2, &[(1.0, f64::NAN)]);
        fix.push_row(4, &[(1.0 / 4.287, f64::NAN)]); // rate 2.10
        let tol = FixtureTolerances {
            err_rel: 0.15,
            rate_abs: 0.1,
        };
        let report = compare_to_fixture(&got, &fix, &tol).unwrap();
        assert!(report.pass, "rate 2.08 vs 2.1 within 0.1:\n{report}");

        // error off by 20% against a 15% relative tolerance
        let mut bad = ConvergenceTable::new(vec!["l2".into()]);
        bad.push_row(2, &[(1.2, f64::NAN)]);
        bad.push_row(4, &[(1.2 / 4.287, f64::NAN)]);
        let report = compare_to_fixture(&bad, &fix, &tol).unwrap();
        assert!(!report.pass);
        let failing: Vec<_> = report.checks.iter().filter(|c| !c.pass).collect();
        assert!(failing.iter().any(|c| c.n == 2 && c.column == "err"));
    }

    #[test]
    fn shape_and_metadata_mismatches_are_errors() {
        let t = sample_table();
        let mut short = t.clone();
        short.ns.pop();
        short.cells.pop();
        assert!(compare_to_fixture(
            &t,
            &short,
            &FixtureTolerances {
                err_rel: 0.1,
                rate_abs: 0.1
            }
        )
        .is_err());

        let mut other = t.clone();
        other.set_meta("family", "trapezoid");
        assert!(compare_to_fixture(
            &t,
            &other,
            &FixtureTolerances {
                err_rel: 0.1,
                rate_abs: 0.1
            }
        )
        .is_err());
    }

    #[test]
    fn aligned_text_has_two_digit_errors() {
        let text = sample_table().to_aligned_text();
        assert!(text.contains("3.5e-2"));
        assert!(text.contains("2.877"));
    }
}
