//! File formats: the functional history CSV, legacy ASCII structured-points
//! snapshots, JSON checkpoints and sweep reports.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use crate::diagnostics::{FunctionalRecord, CSV_COLUMNS};
use crate::error::{Error, Result};
use crate::harness::{Checkpoint, RefinementReport, SweepReport};
use crate::state::State;

pub fn csv_header() -> String {
    CSV_COLUMNS.join(",")
}

pub fn csv_row(r: &FunctionalRecord) -> String {
    let mut s = String::with_capacity(24 * 24);
    for (i, v) in r.values().iter().enumerate() {
        if i > 0 {
            s.push(',');
        }
        write!(s, "{v:.16e}").expect("writing to a String");
    }
    s
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes a header and one row per record.
pub fn write_csv(records: &[FunctionalRecord], path: &Path) -> Result<()> {
    let mut s = csv_header();
    s.push('\n');
    for r in records {
        s.push_str(&csv_row(r));
        s.push('\n');
    }
    write_file(path, &s)
}

/// Appends one row, writing the header first if the file is new or empty.
pub fn write_csv_row(record: &FunctionalRecord, path: &Path) -> Result<()> {
    let fresh = fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
    let mut f = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    let mut s = String::new();
    if fresh {
        s.push_str(&csv_header());
        s.push('\n');
    }
    s.push_str(&csv_row(record));
    s.push('\n');
    f.write_all(s.as_bytes()).map_err(|e| Error::io(path, e))
}

pub fn read_csv(path: &Path) -> Result<Vec<FunctionalRecord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::Format {
        path: path.into(),
        msg: "empty file".into(),
    })?;
    if header != csv_header() {
        return Err(Error::Format {
            path: path.into(),
            msg: format!("unexpected header `{header}`"),
        });
    }
    lines
        .enumerate()
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, l)| {
            let vals: Vec<f64> = l
                .split(',')
                .map(|v| v.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Format {
                    path: path.into(),
                    msg: format!("line {}: {e}", i + 2),
                })?;
            let arr: [f64; 24] = vals.try_into().map_err(|v: Vec<f64>| Error::Format {
                path: path.into(),
                msg: format!("line {}: expected 24 columns, got {}", i + 2, v.len()),
            })?;
            Ok(FunctionalRecord::from_values(&arr))
        })
        .collect()
}

/// Cell-centred data read back from a snapshot.
#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub title: String,
    pub dims: [usize; 3],
    pub origin: [f64; 3],
    pub spacing: [f64; 3],
    pub fields: BTreeMap<String, Vec<f64>>,
}

/// Field names in snapshot order.
pub const SNAPSHOT_FIELDS: [&str; 6] = ["n", "c", "P", "u_x", "u_y", "u_z"];

/// Writes `n`, `c`, `P` and the cell-averaged velocity components as point
/// data on the lattice of cell centres. Values use the shortest round-trip
/// decimal form.
pub fn write_snapshot(state: &State, path: &Path) -> Result<()> {
    let g = state.grid();
    let mut cells = [1usize; 3];
    cells[..g.dim()].copy_from_slice(g.cells());
    let mut s = String::new();
    let h: Vec<f64> = (0..3).map(|a| g.spacing(a)).collect();
    writeln!(s, "# vtk DataFile Version 3.0").unwrap();
    writeln!(s, "chemons snapshot t={} eps={}", state.t, state.eps).unwrap();
    writeln!(s, "ASCII").unwrap();
    writeln!(s, "DATASET STRUCTURED_POINTS").unwrap();
    writeln!(s, "DIMENSIONS {} {} {}", cells[0], cells[1], cells[2]).unwrap();
    writeln!(s, "ORIGIN {} {} {}", 0.5 * h[0], 0.5 * h[1], 0.5 * h[2]).unwrap();
    writeln!(s, "SPACING {} {} {}", h[0], h[1], h[2]).unwrap();
    writeln!(s, "POINT_DATA {}", g.num_cells()).unwrap();
    let avg = state.u.cell_average();
    let columns: [Vec<f64>; 6] = [
        state.n.values.clone(),
        state.c.values.clone(),
        state.p.values.clone(),
        avg.iter().map(|v| v[0]).collect(),
        avg.iter().map(|v| v[1]).collect(),
        avg.iter().map(|v| v[2]).collect(),
    ];
    for (name, vals) in SNAPSHOT_FIELDS.iter().zip(&columns) {
        writeln!(s, "SCALARS {name} double 1").unwrap();
        writeln!(s, "LOOKUP_TABLE default").unwrap();
        for v in vals {
            writeln!(s, "{v}").unwrap();
        }
    }
    write_file(path, &s)
}

pub fn read_snapshot(path: &Path) -> Result<Snapshot> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let bad = |msg: String| Error::Format { path: path.into(), msg };
    let mut lines = text.lines();
    let mut next = |what: &str| lines.next().ok_or_else(|| bad(format!("truncated before {what}")));
    if !next("version")?.starts_with("# vtk DataFile") {
        return Err(bad("not a legacy VTK file".into()));
    }
    let title = next("title")?.to_string();
    if next("format")?.trim() != "ASCII" {
        return Err(bad("only ASCII files are supported".into()));
    }
    if next("dataset")?.trim() != "DATASET STRUCTURED_POINTS" {
        return Err(bad("only STRUCTURED_POINTS datasets are supported".into()));
    }
    fn triple<T: std::str::FromStr>(line: &str, tag: &str) -> Option<[T; 3]> {
        let mut it = line.split_whitespace();
        if it.next()? != tag {
            return None;
        }
        let a = it.next()?.parse().ok()?;
        let b = it.next()?.parse().ok()?;
        let c = it.next()?.parse().ok()?;
        Some([a, b, c])
    }
    let dims: [usize; 3] = triple(next("DIMENSIONS")?, "DIMENSIONS").ok_or_else(|| bad("bad DIMENSIONS".into()))?;
    let origin: [f64; 3] = triple(next("ORIGIN")?, "ORIGIN").ok_or_else(|| bad("bad ORIGIN".into()))?;
    let spacing: [f64; 3] = triple(next("SPACING")?, "SPACING").ok_or_else(|| bad("bad SPACING".into()))?;
    let count: usize = next("POINT_DATA")?
        .strip_prefix("POINT_DATA ")
        .and_then(|v| v.trim().parse().ok())
        .ok_or_else(|| bad("bad POINT_DATA".into()))?;
    if count != dims[0] * dims[1] * dims[2] {
        return Err(bad("POINT_DATA does not match DIMENSIONS".into()));
    }
    let mut fields = BTreeMap::new();
    while let Some(line) = lines.next() {
        if line.trim().is_empty() {
            continue;
        }
        let name = line
            .strip_prefix("SCALARS ")
            .and_then(|r| r.split_whitespace().next())
            .ok_or_else(|| bad(format!("expected SCALARS, got `{line}`")))?
            .to_string();
        match lines.next() {
            Some(l) if l.starts_with("LOOKUP_TABLE") => {}
            _ => return Err(bad(format!("missing LOOKUP_TABLE for {name}"))),
        }
        let mut vals = Vec::with_capacity(count);
        for _ in 0..count {
            let l = lines.next().ok_or_else(|| bad(format!("truncated data for {name}")))?;
            vals.push(l.trim().parse::<f64>().map_err(|e| bad(format!("{name}: {e}")))?);
        }
        fields.insert(name, vals);
    }
    Ok(Snapshot {
        title,
        dims,
        origin,
        spacing,
        fields,
    })
}

pub fn write_json<T: serde::Serialize>(value: &T, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Format {
        path: path.into(),
        msg: e.to_string(),
    })?;
    write_file(path, &text)
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Format {
        path: path.into(),
        msg: e.to_string(),
    })
}

pub fn save_checkpoint(ck: &Checkpoint, path: &Path) -> Result<()> {
    write_json(ck, path)
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    read_json(path)
}

fn matrix_csv(values: &[f64], m: &[Vec<f64>]) -> String {
    let mut s = String::from("value");
    for v in values {
        write!(s, ",{v}").unwrap();
    }
    s.push('\n');
    for (v, row) in values.iter().zip(m) {
        write!(s, "{v}").unwrap();
        for d in row {
            write!(s, ",{d:.16e}").unwrap();
        }
        s.push('\n');
    }
    s
}

/// Writes `<axis>_dist_n.csv`, `<axis>_dist_pow.csv`, `<axis>_ratios.csv`
/// and `<axis>_summary.txt` into `dir`.
pub fn write_sweep_report(report: &SweepReport, dir: &Path) -> Result<()> {
    let axis = report.axis.name();
    write_file(&dir.join(format!("{axis}_dist_n.csv")), &matrix_csv(&report.values, &report.dist_n))?;
    write_file(&dir.join(format!("{axis}_dist_pow.csv")), &matrix_csv(&report.values, &report.dist_pow))?;
    let mut r = String::from("k,ratio_n,ratio_pow\n");
    for (k, (a, b)) in report.cauchy_ratios.iter().zip(&report.cauchy_ratios_pow).enumerate() {
        writeln!(r, "{k},{a:.16e},{b:.16e}").unwrap();
    }
    write_file(&dir.join(format!("{axis}_ratios.csv")), &r)?;
    let mut t = String::new();
    writeln!(t, "axis: {axis}").unwrap();
    writeln!(t, "values: {:?}", report.values).unwrap();
    writeln!(t, "cauchy_ratios: {:?}", report.cauchy_ratios).unwrap();
    writeln!(t, "cauchy_ratios_pow: {:?}", report.cauchy_ratios_pow).unwrap();
    writeln!(t, "trend: {:?}", report.trend).unwrap();
    for s in &report.summaries {
        writeln!(
            t,
            "run {}: steps {}, max mass {:.6e}, max nmax {:.6e}, max |F| {:.6e}, max div u {:.3e}",
            s.value, s.steps, s.max_mass, s.max_nmax, s.max_energy, s.max_div_u
        )
        .unwrap();
    }
    for (v, msg) in &report.failures {
        writeln!(t, "run {v} failed: {msg}").unwrap();
    }
    write_file(&dir.join(format!("{axis}_summary.txt")), &t)
}

pub fn write_refinement(report: &RefinementReport, path: &Path) -> Result<()> {
    let mut s = String::from("cells,res_n,res_c,res_u\n");
    for (c, r) in report.cells.iter().zip(&report.residuals) {
        writeln!(s, "{c},{:.16e},{:.16e},{:.16e}", r.n, r.c, r.u).unwrap();
    }
    write_file(path, &s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{GridSpec, ScalarField, VectorField};

    #[test]
    fn header_is_stable() {
        assert_eq!(
            csv_header(),
            "t,mass,l2n,cmax,grad_c_l2,ent_n,fisher_c,kin_u,energy_F,diss_nlog,diss_grad_m1,diss_grad_m1_eps,\
             hess_logc,quart_c,grad_u_l2,grad_m_half,pow_m,pow_m1,grad_2m3,grad_2m4,grad_nm_43,div_u_max,nmax,K_const"
        );
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("h.csv");
        let vals: [f64; 24] = std::array::from_fn(|i| (i as f64 + 0.1).sqrt() * 1e-7f64.powi(i as i32 % 3));
        let r = FunctionalRecord::from_values(&vals);
        write_csv_row(&r, &path).unwrap();
        write_csv_row(&r, &path).unwrap();
        let back = read_csv(&path).unwrap();
        assert_eq!(back, vec![r.clone(), r]);
    }

    #[test]
    fn snapshot_round_trip_is_exact() {
        let g = GridSpec::new(&[6, 4], &[1.5, 1.0]).unwrap();
        let s = State {
            t: 0.1 + 0.2,
            n: ScalarField::from_fn(&g, |x| (3.0 * x[0]).exp() / 7.0),
            c: ScalarField::from_fn(&g, |x| 1.0 / (1.0 + x[1])),
            u: VectorField::from_fn(&g, |x| [x[1] * (1.0 - x[1]), 0.0, 0.0]),
            p: ScalarField::from_fn(&g, |x| x[0] - 0.75),
            eps: 0.01,
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.vtk");
        write_snapshot(&s, &path).unwrap();
        let snap = read_snapshot(&path).unwrap();
        assert_eq!(snap.dims, [6, 4, 1]);
        assert_eq!(snap.fields["n"], s.n.values);
        assert_eq!(snap.fields["c"], s.c.values);
        assert_eq!(snap.fields["P"], s.p.values);
        let ux: Vec<f64> = s.u.cell_average().iter().map(|v| v[0]).collect();
        assert_eq!(snap.fields["u_x"], ux);
        assert!(snap.title.contains("t=0.30000000000000004"));
    }

    #[test]
    fn wrong_header_is_a_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("h.csv");
        std::fs::write(&path, "t,mass\n0,1\n").unwrap();
        assert!(matches!(read_csv(&path), Err(Error::Format { .. })));
    }

    #[test]
    fn missing_file_reports_path() {
        let err = read_csv(Path::new("/nonexistent/h.csv")).unwrap_err();
        assert!(err.to_string().contains("/nonexistent/h.csv"));
    }
}
