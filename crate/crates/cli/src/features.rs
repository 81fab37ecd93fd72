//! Feature tables: one row per shape with its id, class, split and vector.

use std::path::Path;

use vipgan::renderer::Split;
use vipgan::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub ids: Vec<String>,
    pub classes: Vec<String>,
    pub splits: Vec<Split>,
    pub rows: Vec<Vec<f64>>,
}

impl FeatureTable {
    /// Integer labels in order of first appearance of each class.
    pub fn labels(&self) -> Vec<usize> {
        let mut names: Vec<&str> = Vec::new();
        self.classes
            .iter()
            .map(|c| match names.iter().position(|n| n == c) {
                Some(i) => i,
                None => {
                    names.push(c);
                    names.len() - 1
                }
            })
            .collect()
    }

    pub fn subset(&self, split: Split) -> Self {
        let keep: Vec<usize> = (0..self.ids.len()).filter(|&i| self.splits[i] == split).collect();
        Self {
            ids: keep.iter().map(|&i| self.ids[i].clone()).collect(),
            classes: keep.iter().map(|&i| self.classes[i].clone()).collect(),
            splits: keep.iter().map(|&i| self.splits[i]).collect(),
            rows: keep.iter().map(|&i| self.rows[i].clone()).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let csv_err = |e: csv::Error| Error::io(path, e.into());
        let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
        let mut header = vec!["shape_id".to_string(), "class".into(), "split".into()];
        header.extend((0..self.dim()).map(|i| format!("f{i}")));
        w.write_record(&header).map_err(csv_err)?;
        for i in 0..self.ids.len() {
            let mut rec = vec![self.ids[i].clone(), self.classes[i].clone(), self.splits[i].to_string()];
            rec.extend(self.rows[i].iter().map(|v| v.to_string()));
            w.write_record(&rec).map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let data_err = |line: u64, msg: String| Error::Data(format!("{} line {line}: {msg}", path.display()));
        let mut r = csv::Reader::from_path(path).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
        let header = r.headers().map_err(|e| Error::Data(format!("{}: {e}", path.display())))?.clone();
        if header.len() < 4 || &header[0] != "shape_id" || &header[1] != "class" || &header[2] != "split" {
            return Err(Error::Data(format!(
                "{}: expected columns shape_id,class,split,f0,...",
                path.display()
            )));
        }
        let dim = header.len() - 3;
        let mut t = Self { ids: Vec::new(), classes: Vec::new(), splits: Vec::new(), rows: Vec::new() };
        for rec in r.records() {
            let rec = rec.map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
            let line = rec.position().map_or(0, |p| p.line());
            if rec.len() != dim + 3 {
                return Err(data_err(line, format!("expected {} fields, found {}", dim + 3, rec.len())));
            }
            let split: Split = rec[2].parse().map_err(|_| data_err(line, format!("unknown split {:?}", &rec[2])))?;
            let row = (3..rec.len())
                .map(|j| rec[j].parse::<f64>().map_err(|_| data_err(line, format!("bad number {:?}", &rec[j]))))
                .collect::<Result<Vec<_>>>()?;
            t.ids.push(rec[0].to_string());
            t.classes.push(rec[1].to_string());
            t.splits.push(split);
            t.rows.push(row);
        }
        if t.ids.is_empty() {
            return Err(Error::Data(format!("{}: no feature rows", path.display())));
        }
        Ok(t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_labels() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.csv");
        let t = FeatureTable {
            ids: vec!["b_0".into(), "a_0".into(), "b_1".into()],
            classes: vec!["b".into(), "a".into(), "b".into()],
            splits: vec![Split::Train, Split::Test, Split::Test],
            rows: vec![vec![0.5, -1.0], vec![1e-7, 3.25], vec![0.0, 2.0]],
        };
        t.write(&p).unwrap();
        let back = FeatureTable::read(&p).unwrap();
        assert_eq!(back, t);
        assert_eq!(back.labels(), vec![0, 1, 0]);
        assert_eq!(back.subset(Split::Test).ids, vec!["a_0", "b_1"]);
    }

    #[test]
    fn malformed_rows_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.csv");
        std::fs::write(&p, "shape_id,class,split,f0\na,x,train,zero\n").unwrap();
        assert!(matches!(FeatureTable::read(&p), Err(Error::Data(m)) if m.contains("line 2")));
        std::fs::write(&p, "id,f0\n").unwrap();
        assert!(matches!(FeatureTable::read(&p), Err(Error::Data(_))));
    }
}
