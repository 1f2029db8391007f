//! Coordinate charts: an ordered list of distinct variable names.

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChartError {
    #[error("duplicate variable name `{0}`")]
    DuplicateName(String),
    #[error("empty chart")]
    Empty,
    #[error("chart mismatch: `{0}` vs `{1}`")]
    Mismatch(String, String),
}

#[derive(Clone, PartialEq, Eq)]
pub struct Chart {
    names: Arc<Vec<String>>,
}

impl fmt::Debug for Chart {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Chart[{}]", self.names.join(", "))
    }
}

impl fmt::Display for Chart {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.names.join(" "))
    }
}

impl Chart {
    pub fn new(names: Vec<String>) -> Result<Chart, ChartError> {
        if names.is_empty() {
            return Err(ChartError::Empty);
        }
        for (i, n) in names.iter().enumerate() {
            if names[..i].contains(n) {
                return Err(ChartError::DuplicateName(n.clone()));
            }
        }
        Ok(Chart { names: Arc::new(names) })
    }

    pub fn from_strs(names: &[&str]) -> Chart {
        Chart::new(names.iter().map(|s| s.to_string()).collect()).expect("valid chart")
    }

    pub fn dim(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, i: usize) -> &str {
        &self.names[i]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Cotangent-bundle chart in (p, x) block order: momentum slots named
    /// `p_<var>` first, then the base variables.
    pub fn phase_extension(&self) -> Result<Chart, ChartError> {
        let mut names: Vec<String> = self.names.iter().map(|n| format!("p_{n}")).collect();
        names.extend(self.names.iter().cloned());
        Chart::new(names)
    }

    pub fn check_same(&self, other: &Chart) -> Result<(), ChartError> {
        if self == other {
            Ok(())
        } else {
            Err(ChartError::Mismatch(self.to_string(), other.to_string()))
        }
    }
}
