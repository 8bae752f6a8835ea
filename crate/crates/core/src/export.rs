//! CSV artifacts. Values are printed with 17 significant digits so every
//! double round-trips and files are byte-stable.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::bsde::BsdeSolution;
use crate::chain::TimeStateGrid;
use crate::error::{Error, Result};
use crate::field::ValueField;
use crate::game::StrategyField;
use crate::pde::PdeSolution;
use crate::scalar::{fmt17, Scalar};

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io { path: path.display().to_string(), source }
}

/// Writes `contents` to `dir/name`, creating `dir` if needed.
pub fn write_artifact(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| io_err(&path, e))?;
    Ok(path)
}

fn check_grid<T: Scalar>(field: &ValueField<T>, grid: &TimeStateGrid<T>) -> Result<()> {
    if field.n_times() != grid.n_steps + 1 || field.n_states() != grid.n_states {
        return Err(Error::Index(format!(
            "field of shape {}x{} is not on the {}x{} grid",
            field.n_times(),
            field.n_states(),
            grid.n_steps + 1,
            grid.n_states
        )));
    }
    Ok(())
}

fn rows<T: Scalar>(grid: &TimeStateGrid<T>, out: &mut String, mut line: impl FnMut(usize, usize, &mut String)) {
    for k in 0..=grid.n_steps {
        for i in 0..grid.n_states {
            let _ = write!(out, "{k},{},{i},{}", fmt17(grid.t(k)), fmt17(grid.x(i)));
            line(k, i, out);
            out.push('\n');
        }
    }
}

/// `k,t,i,x,value`.
pub fn field_csv<T: Scalar>(field: &ValueField<T>, grid: &TimeStateGrid<T>) -> Result<String> {
    check_grid(field, grid)?;
    let mut out = String::from("k,t,i,x,value\n");
    rows(grid, &mut out, |k, i, s| {
        let _ = write!(s, ",{}", fmt17(field.get(k, i)));
    });
    Ok(out)
}

/// One `<name>.csv` per field; returns the written paths in input order.
pub fn export_fields<T: Scalar>(fields: &[(&str, &ValueField<T>)], grid: &TimeStateGrid<T>, output_dir: &Path) -> Result<Vec<PathBuf>> {
    fields
        .iter()
        .map(|(name, field)| write_artifact(output_dir, &format!("{name}.csv"), &field_csv(field, grid)?))
        .collect()
}

/// `k,t,i,x,Y,Z,K_1..K_J,A1_inc,A2_inc`.
pub fn bsde_csv<T: Scalar>(sol: &BsdeSolution<T>, grid: &TimeStateGrid<T>) -> Result<String> {
    check_grid(&sol.y, grid)?;
    let mut out = String::from("k,t,i,x,Y,Z");
    for j in 1..=sol.k.len() {
        let _ = write!(out, ",K_{j}");
    }
    out.push_str(",A1_inc,A2_inc\n");
    rows(grid, &mut out, |k, i, s| {
        let _ = write!(s, ",{},{}", fmt17(sol.y.get(k, i)), fmt17(sol.z.get(k, i)));
        for kf in &sol.k {
            let _ = write!(s, ",{}", fmt17(kf.get(k, i)));
        }
        let _ = write!(s, ",{},{}", fmt17(sol.a1_inc.get(k, i)), fmt17(sol.a2_inc.get(k, i)));
    });
    Ok(out)
}

/// `k,t,i,x,u,alpha_star,lower_contact,upper_contact`; flags as `0`/`1`.
pub fn strategy_csv<T: Scalar>(u: &ValueField<T>, strategy: &StrategyField<T>, grid: &TimeStateGrid<T>) -> Result<String> {
    check_grid(u, grid)?;
    let mut out = String::from("k,t,i,x,u,alpha_star,lower_contact,upper_contact\n");
    rows(grid, &mut out, |k, i, s| {
        let _ = write!(
            s,
            ",{},{},{},{}",
            fmt17(u.get(k, i)),
            strategy.control(k, i),
            u8::from(strategy.lower_contact(k, i)),
            u8::from(strategy.upper_contact(k, i))
        );
    });
    Ok(out)
}

/// `k,t,i,x,u,residual`.
pub fn pde_csv<T: Scalar>(sol: &PdeSolution<T>, grid: &TimeStateGrid<T>) -> Result<String> {
    check_grid(&sol.u, grid)?;
    let mut out = String::from("k,t,i,x,u,residual\n");
    rows(grid, &mut out, |k, i, s| {
        let _ = write!(s, ",{},{}", fmt17(sol.u.get(k, i)), fmt17(sol.residual.get(k, i)));
    });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_field_rows() {
        let g = TimeStateGrid::<f64>::new(1, 3, 0.0, 1.0, 1.0).unwrap();
        let f = ValueField::filled(2, 3, 1.0);
        let csv = field_csv(&f, &g).unwrap();
        let lines: Vec<_> = csv.lines().collect();
        assert_eq!(lines[0], "k,t,i,x,value");
        assert_eq!(lines.len(), 7);
        assert_eq!(lines[1], "0,0.0000000000000000e0,0,0.0000000000000000e0,1.0000000000000000e0");
        assert!(lines[1..].iter().all(|l| l.ends_with(",1.0000000000000000e0")));
    }

    #[test]
    fn two_fields_two_files_byte_stable() {
        let dir = tempfile::tempdir().unwrap();
        let g = TimeStateGrid::<f64>::new(1, 3, 0.0, 1.0, 1.0).unwrap();
        let a = ValueField::from_fn(2, 3, |k, i| (k as f64 + 0.1) / (i as f64 + 3.0));
        let b = ValueField::filled(2, 3, -2.5);
        let paths = export_fields(&[("alpha", &a), ("beta", &b)], &g, dir.path()).unwrap();
        assert_eq!(paths, vec![dir.path().join("alpha.csv"), dir.path().join("beta.csv")]);
        let first = fs::read(&paths[0]).unwrap();
        export_fields(&[("alpha", &a)], &g, dir.path()).unwrap();
        assert_eq!(first, fs::read(&paths[0]).unwrap());
        // Round trip of the printed digits.
        let text = String::from_utf8(first).unwrap();
        let v: f64 = text.lines().nth(2).unwrap().rsplit(',').next().unwrap().parse().unwrap();
        assert_eq!(v, a.get(0, 1));
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let g = TimeStateGrid::<f64>::new(1, 3, 0.0, 1.0, 1.0).unwrap();
        assert!(field_csv(&ValueField::filled(3, 3, 0.0), &g).is_err());
    }

    #[test]
    fn unwritable_directory_fails() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("plain");
        fs::write(&file, "x").unwrap();
        let g = TimeStateGrid::<f64>::new(1, 3, 0.0, 1.0, 1.0).unwrap();
        let err = export_fields(&[("v", &ValueField::filled(2, 3, 0.0))], &g, &file.join("sub")).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }
}
