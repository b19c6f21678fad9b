use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-column empirical CDF with mid-ranks for ties, linear between knots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileNormalizer {
    columns: Vec<ColumnQuantiles>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ColumnQuantiles {
    values: Vec<f64>,
    ranks: Vec<f64>,
}

const MIN_VALUES: usize = 10;

impl QuantileNormalizer {
    pub fn fit<'a>(rows: impl IntoIterator<Item = &'a [f64]>, width: usize) -> Result<Self> {
        let mut cols = vec![Vec::new(); width];
        for row in rows {
            if row.len() != width {
                return Err(Error::data(format!("row of width {}, expected {width}", row.len())));
            }
            for (c, &v) in cols.iter_mut().zip(row) {
                if v.is_finite() {
                    c.push(v);
                }
            }
        }
        let columns = cols
            .into_iter()
            .enumerate()
            .map(|(j, c)| ColumnQuantiles::fit(c, j))
            .collect::<Result<_>>()?;
        Ok(Self { columns })
    }

    pub fn width(&self) -> usize {
        self.columns.len()
    }

    /// Map to [0, 1]; non-finite values stay NaN.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.columns)
            .map(|(&v, c)| if v.is_finite() { c.map(v) } else { f64::NAN })
            .collect()
    }
}

impl ColumnQuantiles {
    fn fit(mut v: Vec<f64>, column: usize) -> Result<Self> {
        if v.len() < MIN_VALUES {
            return Err(Error::data(format!(
                "column {column} has {} finite values, need {MIN_VALUES}",
                v.len()
            )));
        }
        v.sort_by(f64::total_cmp);
        let n = v.len();
        if v[0] == v[n - 1] {
            log::warn!("column {column} is constant, mapped to 0.5");
            return Ok(Self { values: vec![v[0]], ranks: vec![0.5] });
        }
        let mut values = Vec::new();
        let mut ranks = Vec::new();
        let mut i = 0;
        while i < n {
            let j = i + v[i..].partition_point(|&u| u == v[i]);
            values.push(v[i]);
            ranks.push((i + j - 1) as f64 / 2.0 / (n - 1) as f64);
            i = j;
        }
        Ok(Self { values, ranks })
    }

    fn map(&self, v: f64) -> f64 {
        if self.values.len() == 1 {
            return 0.5;
        }
        let last = self.values.len() - 1;
        if v < self.values[0] {
            return 0.0;
        }
        if v > self.values[last] {
            return 1.0;
        }
        let k = self.values.partition_point(|&u| u <= v);
        if k == 0 {
            return self.ranks[0];
        }
        if k > last {
            return self.ranks[last];
        }
        let (v0, v1) = (self.values[k - 1], self.values[k]);
        let (r0, r1) = (self.ranks[k - 1], self.ranks[k]);
        r0 + (v - v0) / (v1 - v0) * (r1 - r0)
    }
}
