//! CSV tables and run metadata.
//!
//! Every file opens with a `#` stamp line carrying the config hash and
//! seed. Floats are written in shortest round-trip scientific form, so equal
//! inputs give byte-identical files.

use fbsde_core::evaluation::{ConvergenceRow, ErrorReport};
use fbsde_core::simulate::PathBatch;
use fbsde_core::training::LossRecord;

/// Provenance written at the top of every artifact.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stamp {
    pub config_hash: String,
    pub seed: u64,
}

impl Stamp {
    pub fn line(&self) -> String {
        format!("config_hash = {} seed = {}", self.config_hash, self.seed)
    }
}

fn num(v: f64) -> String {
    format!("{v:e}")
}

fn table<I>(stamp: &Stamp, header: &[String], rows: I) -> String
where
    I: IntoIterator<Item = Vec<String>>,
{
    let mut out = format!("# {}\n", stamp.line()).into_bytes();
    {
        let mut w = csv::Writer::from_writer(&mut out);
        // writing to a Vec cannot fail
        w.write_record(header).expect("in-memory csv");
        for r in rows {
            w.write_record(&r).expect("in-memory csv");
        }
        w.flush().expect("in-memory csv");
    }
    String::from_utf8(out).expect("csv output is UTF-8")
}

fn names(cols: &[&str]) -> Vec<String> {
    cols.iter().map(|s| s.to_string()).collect()
}

pub fn loss_csv(stamp: &Stamp, history: &[LossRecord]) -> String {
    let header = names(&["step", "lr", "pathwise", "terminal_value", "terminal_grad", "total"]);
    table(
        stamp,
        &header,
        history.iter().map(|r| {
            vec![
                r.step.to_string(),
                num(r.lr),
                num(r.loss.pathwise),
                num(r.loss.terminal_value),
                num(r.loss.terminal_grad),
                num(r.loss.total),
            ]
        }),
    )
}

pub fn report_csv(stamp: &Stamp, report: &ErrorReport) -> String {
    let header = names(&["station", "t", "mean", "sd", "mean_plus_2sd"]);
    let upper = report.mean_plus_2sd();
    table(
        stamp,
        &header,
        (0..report.stations.len()).map(|i| {
            vec![
                i.to_string(),
                num(report.stations[i]),
                num(report.mean[i]),
                num(report.sd[i]),
                num(upper[i]),
            ]
        }),
    )
}

/// Side-by-side curves of two reports on the same stations.
pub fn compare_csv(stamp: &Stamp, plain: &ErrorReport, mscale: &ErrorReport) -> String {
    let header = names(&[
        "station",
        "t",
        "plain_mean",
        "plain_mean_plus_2sd",
        "mscale_mean",
        "mscale_mean_plus_2sd",
    ]);
    let (pu, mu) = (plain.mean_plus_2sd(), mscale.mean_plus_2sd());
    table(
        stamp,
        &header,
        (0..plain.stations.len()).map(|i| {
            vec![
                i.to_string(),
                num(plain.stations[i]),
                num(plain.mean[i]),
                num(pu[i]),
                num(mscale.mean[i]),
                num(mu[i]),
            ]
        }),
    )
}

/// One row per path and station: `path_id, n, t, X_1..X_d, Y, Z_1..Z_d`.
pub fn trajectory_csv(stamp: &Stamp, batch: &PathBatch) -> String {
    let d = batch.x[0].cols();
    let mut header = names(&["path_id", "n", "t"]);
    header.extend((1..=d).map(|i| format!("X_{i}")));
    header.push("Y".into());
    header.extend((1..=d).map(|i| format!("Z_{i}")));
    let stations = batch.x.len();
    let rows = (0..batch.paths()).flat_map(|p| {
        (0..stations).map(move |n| {
            let mut r = vec![p.to_string(), n.to_string(), num(batch.grid.t(n))];
            r.extend(batch.x[n].row(p).iter().map(|&v| num(v)));
            r.push(num(batch.y[n].row(p)[0]));
            r.extend(batch.z[n].row(p).iter().map(|&v| num(v)));
            r
        })
    });
    table(stamp, &header, rows)
}

/// Relative `Y₀` errors per step count with the extrapolated column.
pub fn convergence_csv(stamp: &Stamp, rows: &[ConvergenceRow]) -> String {
    let header = names(&["n_steps", "y0", "raw_error", "extrapolated_error"]);
    table(
        stamp,
        &header,
        rows.iter().map(|r| {
            vec![
                r.n_steps.to_string(),
                num(r.y0),
                num(r.raw_error),
                r.extrapolated_error.map(num).unwrap_or_default(),
            ]
        }),
    )
}

/// Externally supplied `(N, raw, extrapolated)` errors in the layout of
/// [`convergence_csv`], with the `y0` column left empty.
pub fn reference_csv(stamp: &Stamp, rows: &[(usize, f64, Option<f64>)]) -> String {
    let header = names(&["n_steps", "y0", "raw_error", "extrapolated_error"]);
    table(
        stamp,
        &header,
        rows.iter().map(|&(n, raw, ex)| {
            vec![n.to_string(), String::new(), num(raw), ex.map(num).unwrap_or_default()]
        }),
    )
}

/// Reads `n_steps, raw_error, extrapolated_error` rows, header required,
/// `#` comments allowed, extra columns ignored.
pub fn read_reference(text: &str) -> Result<Vec<(usize, f64, Option<f64>)>, String> {
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = r.headers().map_err(|e| e.to_string())?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| format!("reference table lacks column `{name}`"))
    };
    let (n_col, raw_col, ex_col) = (col("n_steps")?, col("raw_error")?, col("extrapolated_error")?);
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| e.to_string())?;
        let cell = |c: usize| rec.get(c).unwrap_or("");
        let bad = |what: &str| format!("row {}: bad {what}", i + 1);
        let n = cell(n_col).parse().map_err(|_| bad("n_steps"))?;
        let raw = cell(raw_col).parse().map_err(|_| bad("raw_error"))?;
        let ex = match cell(ex_col) {
            "" => None,
            s => Some(s.parse().map_err(|_| bad("extrapolated_error"))?),
        };
        out.push((n, raw, ex));
    }
    Ok(out)
}

/// `key = value` metadata lines after the stamp.
pub fn metadata(stamp: &Stamp, entries: &[(&str, String)], config: &str) -> String {
    let mut s = format!("# {}\n", stamp.line());
    for (k, v) in entries {
        s.push_str(&format!("{k} = {v}\n"));
    }
    s.push_str("\n# resolved configuration\n");
    s.push_str(config);
    s
}
