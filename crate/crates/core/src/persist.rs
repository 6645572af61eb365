//! Versioned plain-text model container.
//!
//! ```text
//! JPDL-MODEL 1
//! scalar f64
//! class_names 3 7 9
//! blocks 5 5 5
//! param lambda1 0.05
//! ...
//! projection <m> <d>
//! <m rows of d values>
//! dictionary <d> <n>
//! <d rows of n values>
//! means <K> <n>
//! <K rows of n values>
//! trace <len>
//! <one row>
//! codes <n> <N> <per-class column counts...>   (or `codes none`)
//! <n rows of N values>
//! end
//! ```
//!
//! Values are written with the shortest representation that parses back to
//! the same number, so a load after a save reproduces the model bit for bit.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::dictionary::StructuredDictionary;
use crate::error::{Error, Result};
use crate::fisher::CodingMatrix;
use crate::partition::Partition;
use crate::proj_update::ProjectionMatrix;
use crate::scalar::Real;
use crate::trainer::{Hyperparameters, TrainedModel};

pub const MAGIC: &str = "JPDL-MODEL";
pub const VERSION: u32 = 1;

fn write_row<'a, T: Real>(out: &mut String, values: impl Iterator<Item = &'a T>) {
    let mut first = true;
    for v in values {
        if !first {
            out.push(' ');
        }
        first = false;
        let _ = write!(out, "{v}");
    }
    out.push('\n');
}

fn write_matrix<T: Real>(out: &mut String, m: &DMatrix<T>) {
    for r in 0..m.nrows() {
        write_row(out, m.row(r).iter());
    }
}

pub fn model_to_string<T: Real>(model: &TrainedModel<T>) -> String {
    let mut out = format!("{MAGIC} {VERSION}\nscalar {}\n", T::NAME);
    let names: Vec<String> = model.class_names.iter().map(i64::to_string).collect();
    let _ = writeln!(out, "class_names {}", names.join(" "));
    let blocks: Vec<String> = model
        .dictionary
        .blocks()
        .counts()
        .iter()
        .map(usize::to_string)
        .collect();
    let _ = writeln!(out, "blocks {}", blocks.join(" "));
    for (k, v) in model.params.entries() {
        let _ = writeln!(out, "param {k} {v}");
    }
    let p = model.projection.as_matrix();
    let _ = writeln!(out, "projection {} {}", p.nrows(), p.ncols());
    write_matrix(&mut out, p);
    let d = model.dictionary.atoms();
    let _ = writeln!(out, "dictionary {} {}", d.nrows(), d.ncols());
    write_matrix(&mut out, d);
    let _ = writeln!(out, "means {} {}", model.class_means.len(), d.ncols());
    for m in &model.class_means {
        write_row(&mut out, m.iter());
    }
    let _ = writeln!(out, "trace {}", model.objective_trace.len());
    write_row(&mut out, model.objective_trace.iter());
    match &model.training_codes {
        None => out.push_str("codes none\n"),
        Some(codes) => {
            let v = codes.values();
            let counts: Vec<String> = codes
                .column_partition()
                .counts()
                .iter()
                .map(usize::to_string)
                .collect();
            let _ = writeln!(
                out,
                "codes {} {} {}",
                v.nrows(),
                v.ncols(),
                counts.join(" ")
            );
            write_matrix(&mut out, v);
        }
    }
    out.push_str("end\n");
    out
}

pub fn save_model<T: Real>(model: &TrainedModel<T>, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, model_to_string(model))?;
    Ok(())
}

pub fn load_model<T: Real>(path: impl AsRef<Path>) -> Result<TrainedModel<T>> {
    model_from_str(&std::fs::read_to_string(path)?)
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    line: usize,
}

impl<'a> Lines<'a> {
    fn next(&mut self) -> Result<&'a str> {
        match self.inner.next() {
            Some((n, l)) => {
                self.line = n + 1;
                Ok(l.trim_end())
            }
            None => Err(Error::parse(
                format!("line {}", self.line + 1),
                "unexpected end of file",
            )),
        }
    }

    fn err(&self, message: impl Into<String>) -> Error {
        Error::parse(format!("line {}", self.line), message)
    }

    /// Next line split into its keyword and the remaining fields.
    fn section(&mut self, keyword: &str) -> Result<Vec<&'a str>> {
        let line = self.next()?;
        let mut fields = line.split_whitespace();
        if fields.next() != Some(keyword) {
            return Err(self.err(format!("expected `{keyword}`")));
        }
        Ok(fields.collect())
    }

    fn parse<V: std::str::FromStr>(&self, field: &str) -> Result<V> {
        field
            .parse()
            .map_err(|_| self.err(format!("invalid number `{field}`")))
    }

    fn row<T: Real>(&mut self, len: usize) -> Result<Vec<T>> {
        let line = self.next()?;
        let values: Vec<T> = line
            .split_whitespace()
            .map(|f| self.parse(f))
            .collect::<Result<_>>()?;
        if values.len() != len {
            return Err(self.err(format!("expected {len} values, found {}", values.len())));
        }
        Ok(values)
    }

    fn matrix<T: Real>(&mut self, rows: usize, cols: usize) -> Result<DMatrix<T>> {
        let mut m = DMatrix::zeros(rows, cols);
        for r in 0..rows {
            let row = self.row(cols)?;
            for (c, v) in row.into_iter().enumerate() {
                m[(r, c)] = v;
            }
        }
        Ok(m)
    }

    fn shape(&self, fields: &[&str], count: usize) -> Result<Vec<usize>> {
        if fields.len() < count {
            return Err(self.err(format!("expected {count} sizes")));
        }
        fields[..count].iter().map(|f| self.parse(f)).collect()
    }
}

pub fn model_from_str<T: Real>(text: &str) -> Result<TrainedModel<T>> {
    let mut lines = Lines {
        inner: text.lines().enumerate(),
        line: 0,
    };
    let header = lines.next()?;
    let version = header
        .strip_prefix(MAGIC)
        .map(str::trim)
        .ok_or_else(|| lines.err("not a model file"))?;
    if version != VERSION.to_string() {
        return Err(lines.err(format!("unsupported model version `{version}`")));
    }
    let scalar = lines.section("scalar")?;
    if scalar != [T::NAME] {
        return Err(lines.err(format!(
            "model stores `{}` values, expected {}",
            scalar.join(" "),
            T::NAME
        )));
    }
    let class_names: Vec<i64> = lines
        .section("class_names")?
        .iter()
        .map(|f| lines.parse(f))
        .collect::<Result<_>>()?;
    let blocks: Vec<usize> = lines
        .section("blocks")?
        .iter()
        .map(|f| lines.parse(f))
        .collect::<Result<_>>()?;
    if blocks.len() != class_names.len() || blocks.is_empty() {
        return Err(lines.err("block count does not match the number of classes"));
    }

    let mut params = Hyperparameters::<T>::default();
    let mut fields = lines.next()?.split_whitespace().collect::<Vec<_>>();
    while fields.first() == Some(&"param") {
        if fields.len() != 3 {
            return Err(lines.err("expected `param <key> <value>`"));
        }
        let known = params
            .set(fields[1], fields[2])
            .map_err(|e| lines.err(e.to_string()))?;
        if !known {
            return Err(lines.err(format!("unknown parameter `{}`", fields[1])));
        }
        fields = lines.next()?.split_whitespace().collect();
    }

    if fields.first() != Some(&"projection") {
        return Err(lines.err("expected `projection`"));
    }
    let s = lines.shape(&fields[1..], 2)?;
    let p = lines.matrix(s[0], s[1])?;
    let projection = ProjectionMatrix::new(p).map_err(|e| lines.err(e.to_string()))?;

    let fields = lines.section("dictionary")?;
    let s = lines.shape(&fields, 2)?;
    let atoms = lines.matrix(s[0], s[1])?;
    let dictionary = StructuredDictionary::new(atoms, Partition::from_counts(&blocks))
        .map_err(|e| lines.err(e.to_string()))?;
    if dictionary.dim() != projection.output_dim() {
        return Err(lines.err("dictionary rows differ from the projection's output dimension"));
    }

    let fields = lines.section("means")?;
    let s = lines.shape(&fields, 2)?;
    if s[0] != class_names.len() || s[1] != dictionary.total_atoms() {
        return Err(lines.err("mean codes do not match the classes and atoms"));
    }
    let class_means = (0..s[0])
        .map(|_| lines.row::<T>(s[1]).map(DVector::from_vec))
        .collect::<Result<Vec<_>>>()?;

    let fields = lines.section("trace")?;
    let s = lines.shape(&fields, 1)?;
    let objective_trace = if s[0] == 0 {
        lines.next()?;
        Vec::new()
    } else {
        lines.row(s[0])?
    };

    let fields = lines.section("codes")?;
    let training_codes = if fields == ["none"] {
        None
    } else {
        let s = lines.shape(&fields, 2)?;
        let counts: Vec<usize> = fields[2..]
            .iter()
            .map(|f| lines.parse(f))
            .collect::<Result<_>>()?;
        if counts.len() != class_names.len() {
            return Err(lines.err("code column counts do not match the number of classes"));
        }
        let values = lines.matrix(s[0], s[1])?;
        Some(
            CodingMatrix::new(
                values,
                Partition::from_counts(&counts),
                dictionary.blocks().clone(),
            )
            .map_err(|e| lines.err(e.to_string()))?,
        )
    };
    if !lines.section("end")?.is_empty() {
        return Err(lines.err("trailing fields after `end`"));
    }

    Ok(TrainedModel {
        projection,
        dictionary,
        class_means,
        class_names,
        params,
        objective_trace,
        training_codes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> TrainedModel<f64> {
        let p = DMatrix::from_column_slice(3, 1, &[1.0, 0.0, 0.0]);
        let dict = StructuredDictionary::new(
            DMatrix::from_row_slice(1, 2, &[1.0, -1.0]),
            Partition::uniform(2, 1),
        )
        .unwrap();
        TrainedModel {
            projection: ProjectionMatrix::new(p).unwrap(),
            dictionary: dict,
            class_means: vec![
                DVector::from_vec(vec![0.1, 0.2]),
                DVector::from_vec(vec![1.0 / 3.0, -2.5e-20]),
            ],
            class_names: vec![4, -1],
            params: Hyperparameters {
                dim: 1,
                ..Default::default()
            },
            objective_trace: vec![3.0, 2.0],
            training_codes: None,
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let m = tiny();
        let text = model_to_string(&m);
        assert!(text.starts_with("JPDL-MODEL 1\nscalar f64\n"));
        assert_eq!(model_from_str::<f64>(&text).unwrap(), m);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let text = model_to_string(&tiny()).replace("0.1 0.2", "0.1 zz");
        let err = model_from_str::<f64>(&text).unwrap_err();
        let line = text.lines().position(|l| l == "0.1 zz").unwrap() + 1;
        assert!(
            matches!(&err, Error::Parse { location, .. } if *location == format!("line {line}")),
            "{err}"
        );
        assert!(matches!(
            model_from_str::<f64>("JPDL-MODEL 9\n"),
            Err(Error::Parse { .. })
        ));
        assert!(matches!(
            model_from_str::<f32>(&model_to_string(&tiny())),
            Err(Error::Parse { .. })
        ));
        assert!(matches!(
            model_from_str::<f64>(""),
            Err(Error::Parse { .. })
        ));
    }
}
