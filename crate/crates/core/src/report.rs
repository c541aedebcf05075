//! CSV emission and plot-data rendering.
//!
//! Every CSV written by this crate has a header row and decimal floats with
//! nine significant digits, so identical runs produce byte-identical files.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

/// Format with nine significant digits. Plain notation for moderate
/// magnitudes, scientific otherwise.
pub fn fmt_sig9(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let exp = x.abs().log10().floor() as i32;
    if (-4..9).contains(&exp) {
        let decimals = (8 - exp).max(0) as usize;
        let s = format!("{x:.decimals$}");
        // rounding may have bumped the magnitude (9.99999999995 -> 10.00000000)
        let digits = s.chars().filter(|c| c.is_ascii_digit()).skip_while(|c| *c == '0').count();
        if digits > 9 && decimals > 0 {
            let d = decimals - 1;
            return format!("{x:.d$}");
        }
        s
    } else {
        format!("{x:.8e}")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsvTable {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        CsvTable {
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn header(&self) -> &[String] {
        &self.header
    }

    pub fn rows(&self) -> &[Vec<String>] {
        &self.rows
    }

    pub fn push(&mut self, values: impl IntoIterator<Item = f64>) {
        self.rows.push(values.into_iter().map(fmt_sig9).collect());
    }

    pub fn push_raw(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv_string(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header).expect("in-memory write");
        for r in &self.rows {
            w.write_record(r).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf8 csv")
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv_string()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<CsvTable> {
        let mut reader = csv::Reader::from_path(path).map_err(|e| Error::Csv {
            path: path.into(),
            line: 1,
            message: e.to_string(),
        })?;
        let header: Vec<String> = reader
            .headers()
            .map_err(|e| Error::Csv {
                path: path.into(),
                line: 1,
                message: e.to_string(),
            })?
            .iter()
            .map(str::to_string)
            .collect();
        let mut table = CsvTable::new(header);
        for (i, rec) in reader.records().enumerate() {
            let rec = rec.map_err(|e| Error::Csv {
                path: path.into(),
                line: i + 2,
                message: e.to_string(),
            })?;
            table.rows.push(rec.iter().map(str::to_string).collect());
        }
        Ok(table)
    }
}

/// Turn every CSV in `run_dir` into a whitespace-separated `.dat` series file
/// under `out_dir`, plus a gnuplot script stub that plots each file's columns
/// against its first column. Returns the files written.
pub fn render_plot_data(run_dir: &Path, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let mut csvs: Vec<PathBuf> = fs::read_dir(run_dir)
        .map_err(|e| Error::io(run_dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    csvs.sort();
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    let mut written = Vec::new();
    let mut script = String::from("# generated plot stub: `gnuplot -p plot.gp`\nset datafile commentschars '#'\nset key autotitle columnhead\n");
    for csv_path in csvs {
        let table = CsvTable::read(&csv_path)?;
        let stem = csv_path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        let dat = out_dir.join(format!("{stem}.dat"));
        let mut body = table.header().join(" ");
        body.push('\n');
        for r in table.rows() {
            body.push_str(&r.join(" "));
            body.push('\n');
        }
        fs::write(&dat, body).map_err(|e| Error::io(&dat, e))?;
        let cols = table.header().len();
        if cols >= 2 {
            script.push_str(&format!("set title '{stem}'\nplot "));
            let series: Vec<String> = (2..=cols)
                .map(|c| format!("'{stem}.dat' using 1:{c} with lines"))
                .collect();
            script.push_str(&series.join(", "));
            script.push_str("\npause -1\n");
        }
        written.push(dat);
    }
    let gp = out_dir.join("plot.gp");
    fs::write(&gp, script).map_err(|e| Error::io(&gp, e))?;
    written.push(gp);
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nine_significant_digits() {
        assert_eq!(fmt_sig9(0.0), "0");
        assert_eq!(fmt_sig9(1.0), "1.00000000");
        assert_eq!(fmt_sig9(-0.367879441171), "-0.367879441");
        assert_eq!(fmt_sig9(123456.789012), "123456.789");
        assert_eq!(fmt_sig9(1.5e-7), "1.50000000e-7");
        assert_eq!(fmt_sig9(9.999999999), "10.0000000");
    }

    #[test]
    fn parsed_values_keep_nine_digits() {
        for x in [0.1234567891234, -7.654321e-3, 2.0e12, 42.0] {
            let back: f64 = fmt_sig9(x).parse().unwrap();
            assert!(((back - x) / x).abs() < 5e-9, "{x}");
        }
    }

    #[test]
    fn renders_dat_and_script() {
        let dir = tempfile::tempdir().unwrap();
        let mut t = CsvTable::new(["t", "a", "b"]);
        t.push([0.0, 1.0, 2.0]);
        t.push([0.1, 1.5, 2.5]);
        t.write(&dir.path().join("series.csv")).unwrap();
        let out = dir.path().join("plots");
        let files = render_plot_data(dir.path(), &out).unwrap();
        assert_eq!(files.len(), 2);
        let dat = fs::read_to_string(out.join("series.dat")).unwrap();
        assert!(dat.starts_with("t a b\n0 1.00000000 2.00000000\n"));
        assert!(fs::read_to_string(out.join("plot.gp")).unwrap().contains("using 1:3"));
    }
}
