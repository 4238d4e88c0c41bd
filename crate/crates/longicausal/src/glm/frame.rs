use std::collections::HashMap;

use crate::error::Error;
use crate::Result;

use super::Scalar;

/// Column-oriented data frame with named columns of equal length.
///
/// Missing values are `NaN`; the fitting routines drop rows with missing
/// responses, weights, offsets, or design values automatically.
#[derive(Debug, Clone)]
pub struct Frame<F> {
    n: usize,
    names: Vec<String>,
    cols: Vec<Vec<F>>,
    index: HashMap<String, usize>,
}

impl<F: Scalar> Frame<F> {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            names: Vec::new(),
            cols: Vec::new(),
            index: HashMap::new(),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// Adds a column; replaces it if the name already exists.
    pub fn push(&mut self, name: impl Into<String>, col: Vec<F>) -> Result<()> {
        let name = name.into();
        if col.len() != self.n {
            return Err(Error::Glm(format!(
                "column `{name}` has length {} but frame has {} rows",
                col.len(),
                self.n
            )));
        }
        match self.index.get(&name) {
            Some(&i) => self.cols[i] = col,
            None => {
                self.index.insert(name.clone(), self.cols.len());
                self.names.push(name);
                self.cols.push(col);
            }
        }
        Ok(())
    }

    pub fn col(&self, name: &str) -> Option<&[F]> {
        self.index.get(name).map(|&i| self.cols[i].as_slice())
    }

    pub fn require(&self, name: &str) -> Result<&[F]> {
        self.col(name)
            .ok_or_else(|| Error::Glm(format!("missing column `{name}`")))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn push_and_replace() {
        let mut f: Frame<f64> = Frame::new(3);
        f.push("x", vec![1.0, 2.0, 3.0]).unwrap();
        f.push("x", vec![4.0, 5.0, 6.0]).unwrap();
        assert_eq!(f.col("x").unwrap(), &[4.0, 5.0, 6.0]);
        assert_eq!(f.names().len(), 1);
        assert!(f.push("y", vec![1.0]).is_err());
    }
}
