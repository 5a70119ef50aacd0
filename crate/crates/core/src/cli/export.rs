//! Trajectory CSV.
//!
//! One header line, then one row per (record, agent). Floats are written with
//! 17 significant digits so a read-back is lossless.

use std::fmt::Write as _;
use std::path::Path;

use ndarray::Array2;

use crate::dynamics::{Record, SystemState, Trajectory};
use crate::error::{Error, Result};

pub fn header(q: usize, with_lyapunov: bool) -> String {
    let mut cols = vec!["t".to_string(), "agent".to_string()];
    for block in ["x", "z", "v"] {
        cols.extend((1..=q).map(|k| format!("{block}_{k}")));
    }
    cols.extend(["F", "consensus", "fixed_point"].map(String::from));
    if with_lyapunov {
        cols.push("V".into());
    }
    cols.join(",")
}

fn push_num(out: &mut String, v: f64) {
    out.push(',');
    write!(out, "{v:.16e}").expect("writing to a String");
}

pub fn to_csv(traj: &Trajectory) -> String {
    let Some(first) = traj.records.first() else {
        return String::new();
    };
    let (n, q) = first.state.x.dim();
    let with_v = first.lyapunov.is_some();
    let mut out = header(q, with_v);
    out.push('\n');
    for r in &traj.records {
        for i in 0..n {
            write!(out, "{:.16e},{}", r.state.t, i + 1).expect("writing to a String");
            for block in [&r.state.x, &r.state.z, &r.state.v] {
                for k in 0..q {
                    push_num(&mut out, block[[i, k]]);
                }
            }
            push_num(&mut out, r.cost);
            push_num(&mut out, r.consensus);
            push_num(&mut out, r.fixed_point);
            if let Some(v) = r.lyapunov {
                push_num(&mut out, v);
            }
            out.push('\n');
        }
    }
    out
}

pub fn write_csv(traj: &Trajectory, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, to_csv(traj))?;
    Ok(())
}

fn bad(line: usize, msg: impl std::fmt::Display) -> Error {
    Error::Trajectory(format!("line {line}: {msg}"))
}

/// Parses a file produced by [`to_csv`] back into records.
pub fn from_csv(text: &str) -> Result<Vec<Record>> {
    let mut lines = text.lines();
    let head = lines.next().ok_or_else(|| bad(1, "missing header"))?;
    let cols: Vec<&str> = head.split(',').collect();
    let with_v = cols.last() == Some(&"V");
    let fixed = 2 + 3 + usize::from(with_v);
    if cols.len() < fixed + 3 || !(cols.len() - fixed).is_multiple_of(3) {
        return Err(bad(1, format!("unexpected header `{head}`")));
    }
    let q = (cols.len() - fixed) / 3;
    if head != header(q, with_v) {
        return Err(bad(1, format!("unexpected header `{head}`")));
    }

    let mut rows: Vec<(f64, usize, Vec<f64>)> = Vec::new();
    for (idx, line) in lines.enumerate() {
        let lineno = idx + 2;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != cols.len() {
            return Err(bad(lineno, format!("{} fields, expected {}", fields.len(), cols.len())));
        }
        let t: f64 = fields[0].parse().map_err(|e| bad(lineno, e))?;
        let agent: usize = fields[1].parse().map_err(|e| bad(lineno, e))?;
        let vals = fields[2..]
            .iter()
            .map(|f| f.parse::<f64>().map_err(|e| bad(lineno, e)))
            .collect::<Result<Vec<_>>>()?;
        rows.push((t, agent, vals));
    }

    let mut records = Vec::new();
    let mut start = 0;
    while start < rows.len() {
        let t = rows[start].0;
        let end = rows[start..]
            .iter()
            .position(|r| r.1 == 1 && r.0 != t)
            .map_or(rows.len(), |p| start + p);
        let group = &rows[start..end];
        let n = group.len();
        for (i, r) in group.iter().enumerate() {
            if r.1 != i + 1 || r.0 != t {
                return Err(bad(start + i + 2, "rows of one record must list agents 1..n at one time"));
            }
        }
        let block = |off: usize| Array2::from_shape_fn((n, q), |(i, k)| group[i].2[off + k]);
        let tail = &group[0].2[3 * q..];
        records.push(Record {
            state: SystemState {
                x: block(0),
                z: block(q),
                v: block(2 * q),
                t,
            },
            cost: tail[0],
            consensus: tail[1],
            fixed_point: tail[2],
            lyapunov: with_v.then(|| tail[3]),
        });
        start = end;
    }
    Ok(records)
}

pub fn read_csv(path: &Path) -> Result<Vec<Record>> {
    from_csv(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn record(t: f64, lyap: Option<f64>) -> Record {
        Record {
            state: SystemState {
                x: array![[0.1, -2.0], [1.0 / 3.0, 4.0]],
                z: array![[0.0, 1e-300], [5.0, 6.0]],
                v: array![[-7.0, 8.0], [9.0, f64::MIN_POSITIVE]],
                t,
            },
            cost: 9.0,
            consensus: 0.25,
            fixed_point: 1.0 / 7.0,
            lyapunov: lyap,
        }
    }

    #[test]
    fn header_layout() {
        assert_eq!(
            header(2, true),
            "t,agent,x_1,x_2,z_1,z_2,v_1,v_2,F,consensus,fixed_point,V"
        );
        assert_eq!(header(1, false), "t,agent,x_1,z_1,v_1,F,consensus,fixed_point");
    }

    #[test]
    fn lossless_round_trip() {
        for lyap in [None, Some(0.1 + 0.2)] {
            let traj = Trajectory {
                records: vec![record(0.0, lyap), record(0.1, lyap)],
                stride: 100,
                h: 1e-3,
            };
            let text = to_csv(&traj);
            assert_eq!(text.lines().count(), 5);
            assert_eq!(from_csv(&text).unwrap(), traj.records);
        }
    }

    #[test]
    fn seventeen_digits() {
        let traj = Trajectory {
            records: vec![record(0.0, None)],
            stride: 1,
            h: 1.0,
        };
        let text = to_csv(&traj);
        let row = text.lines().nth(1).unwrap();
        let x1 = row.split(',').nth(2).unwrap();
        assert_eq!(x1, "1.0000000000000001e-1");
    }

    #[test]
    fn rejects_bad_header() {
        assert!(from_csv("t,agent,x_1\n").is_err());
        assert!(from_csv("").is_err());
    }
}
