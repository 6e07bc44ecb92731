//! CSV serialization for datasets.
//!
//! Schema: columns `x1..xd`, then `t`, then `y`, optionally followed by
//! `y0,y1,tau` when counterfactuals are available. UTF-8, comma
//! separated, header row required.

use std::path::Path;

use crate::error::{Error, Result};

use super::Dataset;

/// Writes `data` to `path`. Counterfactual columns are emitted only when
/// the dataset carries them.
pub fn write_csv(data: &Dataset, path: &Path) -> Result<()> {
    data.validate()?;
    let mut w = csv::Writer::from_path(path)
        .map_err(|e| Error::data(format!("cannot open {} for writing: {e}", path.display())))?;
    let d = data.dim();
    let with_cf = data.has_counterfactuals();

    let mut header: Vec<String> = (1..=d).map(|j| format!("x{j}")).collect();
    header.push("t".into());
    header.push("y".into());
    if with_cf {
        header.extend(["y0".into(), "y1".into(), "tau".into()]);
    }
    w.write_record(&header).map_err(|e| Error::data(e.to_string()))?;

    let fmt = |v: f64| {
        // Round-trip exact float formatting.
        let mut s = format!("{v}");
        if !s.contains(['.', 'e', 'n', 'i']) {
            s.push_str(".0");
        }
        s
    };
    for i in 0..data.len() {
        let mut rec: Vec<String> = data.x[i].iter().map(|&v| fmt(v)).collect();
        rec.push(data.t[i].to_string());
        rec.push(fmt(data.y[i]));
        if with_cf {
            rec.push(fmt(data.y0.as_ref().unwrap()[i]));
            rec.push(fmt(data.y1.as_ref().unwrap()[i]));
            match &data.tau {
                Some(tau) => rec.push(fmt(tau[i])),
                None => rec.push(fmt(data.y1.as_ref().unwrap()[i] - data.y0.as_ref().unwrap()[i])),
            }
        }
        w.write_record(&rec).map_err(|e| Error::data(e.to_string()))?;
    }
    w.flush().map_err(|e| Error::data(e.to_string()))?;
    Ok(())
}

/// Loads a dataset written in the schema above. Errors carry the
/// offending row number (1-based, counting the header as row 1).
pub fn load_csv(path: &Path) -> Result<Dataset> {
    let mut r = csv::Reader::from_path(path)
        .map_err(|e| Error::data(format!("cannot read {}: {e}", path.display())))?;
    let header = r
        .headers()
        .map_err(|e| Error::data(format!("bad header: {e}")))?
        .clone();
    let cols: Vec<&str> = header.iter().map(str::trim).collect();

    let d = cols.iter().take_while(|c| c.starts_with('x')).count();
    if d == 0 {
        return Err(Error::data("header must start with covariate columns x1, x2, ..."));
    }
    for (j, c) in cols.iter().take(d).enumerate() {
        let expected = format!("x{}", j + 1);
        if *c != expected {
            return Err(Error::data(format!(
                "covariate columns must be consecutive: expected {expected}, found {c}"
            )));
        }
    }
    let rest: Vec<&str> = cols[d..].to_vec();
    let with_cf = match rest.as_slice() {
        ["t", "y"] => false,
        ["t", "y", "y0", "y1", "tau"] => true,
        other => {
            return Err(Error::data(format!(
                "after covariates expected columns t,y or t,y,y0,y1,tau; found {}",
                other.join(",")
            )))
        }
    };

    let mut data = Dataset {
        x: Vec::new(),
        t: Vec::new(),
        y: Vec::new(),
        y0: with_cf.then(Vec::new),
        y1: with_cf.then(Vec::new),
        tau: with_cf.then(Vec::new),
        meta: None,
    };
    for (idx, rec) in r.records().enumerate() {
        let row_no = idx + 2;
        let rec = rec.map_err(|e| Error::data(format!("row {row_no}: {e}")))?;
        if rec.len() != cols.len() {
            return Err(Error::data(format!(
                "row {row_no}: {} fields, expected {}",
                rec.len(),
                cols.len()
            )));
        }
        let num = |k: usize, name: &str| -> Result<f64> {
            let raw = rec[k].trim();
            let v: f64 = raw
                .parse()
                .map_err(|_| Error::data(format!("row {row_no}: {name} is not a number: {raw:?}")))?;
            if !v.is_finite() {
                return Err(Error::data(format!("row {row_no}: {name} is not finite")));
            }
            Ok(v)
        };
        let mut xrow = Vec::with_capacity(d);
        for j in 0..d {
            xrow.push(num(j, &format!("x{}", j + 1))?);
        }
        let t_raw = rec[d].trim();
        let t: u8 = match t_raw {
            "0" => 0,
            "1" => 1,
            _ => {
                return Err(Error::data(format!(
                    "row {row_no}: treatment must be 0 or 1, found {t_raw:?}"
                )))
            }
        };
        data.x.push(xrow);
        data.t.push(t);
        data.y.push(num(d + 1, "y")?);
        if with_cf {
            data.y0.as_mut().unwrap().push(num(d + 2, "y0")?);
            data.y1.as_mut().unwrap().push(num(d + 3, "y1")?);
            data.tau.as_mut().unwrap().push(num(d + 4, "tau")?);
        }
    }
    data.validate()?;
    Ok(data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::core::Rho;
    use crate::datagen::{gen_synthetic, NoiseSpec};
    use std::io::Write as _;

    #[test]
    fn round_trip_with_counterfactuals() {
        let rho = Rho::new(0.3).unwrap();
        let data = gen_synthetic(120, 3, rho, &NoiseSpec::gaussian(rho), 5).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.csv");
        write_csv(&data, &path).unwrap();
        let loaded = load_csv(&path).unwrap();
        assert_eq!(loaded.len(), 120);
        assert_eq!(loaded.dim(), 3);
        assert_eq!(loaded.x, data.x);
        assert_eq!(loaded.t, data.t);
        assert_eq!(loaded.y, data.y);
        assert_eq!(loaded.y0, data.y0);
        assert_eq!(loaded.tau, data.tau);
    }

    #[test]
    fn round_trip_factual_only() {
        let rho = Rho::new(0.0).unwrap();
        let mut data = gen_synthetic(50, 1, rho, &NoiseSpec::gaussian(rho), 6).unwrap();
        data.y0 = None;
        data.y1 = None;
        data.tau = None;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.csv");
        write_csv(&data, &path).unwrap();
        let header = std::fs::read_to_string(&path).unwrap();
        assert!(header.starts_with("x1,t,y\n"));
        let loaded = load_csv(&path).unwrap();
        assert!(!loaded.has_counterfactuals());
        assert_eq!(loaded.y, data.y);
    }

    #[test]
    fn errors_carry_row_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        let mut f = std::fs::File::create(&path).unwrap();
        writeln!(f, "x1,t,y").unwrap();
        writeln!(f, "0.1,0,1.5").unwrap();
        writeln!(f, "0.2,2,1.5").unwrap();
        drop(f);
        let err = load_csv(&path).unwrap_err().to_string();
        assert!(err.contains("row 3"), "{err}");
        assert!(err.contains("treatment"), "{err}");
    }

    #[test]
    fn rejects_malformed_header_and_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "x1,x3,t,y\n0.1,0.2,0,1.0\n").unwrap();
        assert!(load_csv(&path).unwrap_err().to_string().contains("x2"));
        std::fs::write(&path, "x1,t,y\nabc,0,1.0\n").unwrap();
        assert!(load_csv(&path).unwrap_err().to_string().contains("row 2"));
        std::fs::write(&path, "t,y\n0,1.0\n").unwrap();
        assert!(load_csv(&path).is_err());
    }
}
