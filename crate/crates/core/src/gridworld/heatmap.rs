use std::io::Write;

use super::spec::Cell;
use crate::error::Result;

/// Per-cell visit counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Heatmap {
    width: usize,
    height: usize,
    counts: Vec<u64>,
}

impl Heatmap {
    pub fn new(width: usize, height: usize) -> Self {
        Heatmap {
            width,
            height,
            counts: vec![0; width * height],
        }
    }

    /// Builds a heatmap from the cells occupied when each action was taken.
    pub fn from_cells(width: usize, height: usize, cells: impl IntoIterator<Item = Cell>) -> Self {
        let mut h = Heatmap::new(width, height);
        for c in cells {
            h.record(c);
        }
        h
    }

    pub fn record(&mut self, cell: Cell) {
        self.counts[cell.row * self.width + cell.col] += 1;
    }

    pub fn count(&self, cell: Cell) -> u64 {
        self.counts[cell.row * self.width + cell.col]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn merge(&mut self, other: &Heatmap) {
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
    }

    /// CSV with header `row,col,count`, one line per cell in row-major order.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["row", "col", "count"])?;
        for r in 0..self.height {
            for c in 0..self.width {
                let n = self.counts[r * self.width + c];
                w.write_record([r.to_string(), c.to_string(), n.to_string()])?;
            }
        }
        w.flush().map_err(|e| crate::error::Error::io("heatmap.csv", e))?;
        Ok(())
    }
}
