//! Adaptive 2-D tensor-product quadrature for complex-valued integrands.
//!
//! Each cell is evaluated with a 4x4 and an 8x8 Gauss-Legendre tensor rule;
//! the difference is the cell's error estimate and the 8x8 value its
//! contribution. Cells are split four ways, worst error first, until the
//! summed estimate meets the absolute tolerance or the cell budget runs
//! out. The integrands this crate cares about oscillate along the angular
//! axis and spike near exclusion-disk boundaries, so callers seed the grid
//! with enough angular columns to keep the per-cell phase span small and
//! let refinement chase the disks.
//!
//! Evaluation order is deterministic: ties in the refinement queue break on
//! cell index, and the final sums run in cell-creation order.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use num_complex::Complex64;

const GL4_X: [f64; 4] = [
    -0.8611363115940526,
    -0.3399810435848563,
    0.3399810435848563,
    0.8611363115940526,
];
const GL4_W: [f64; 4] = [
    0.3478548451374538,
    0.6521451548625461,
    0.6521451548625461,
    0.3478548451374538,
];

const GL8_X: [f64; 8] = [
    -0.9602898564975363,
    -0.7966664774136267,
    -0.5255324099163290,
    -0.1834346424956498,
    0.1834346424956498,
    0.5255324099163290,
    0.7966664774136267,
    0.9602898564975363,
];
const GL8_W: [f64; 8] = [
    0.1012285362903763,
    0.2223810344533745,
    0.3137066458778873,
    0.3626837833783620,
    0.3626837833783620,
    0.3137066458778873,
    0.2223810344533745,
    0.1012285362903763,
];

/// Controls for [`integrate_adaptive`].
#[derive(Debug, Clone)]
pub struct QuadOptions {
    /// Absolute tolerance on the integral value.
    pub abs_tol: f64,
    /// Hard cap on the number of leaf cells.
    pub max_cells: usize,
    /// Seed grid: (cells along axis 0, cells along axis 1).
    pub initial_splits: (usize, usize),
    /// Log-space the axis-0 seed boundaries (requires a positive lower bound).
    pub log_axis0: bool,
}

impl Default for QuadOptions {
    fn default() -> Self {
        QuadOptions {
            abs_tol: 1e-6,
            max_cells: 60_000,
            initial_splits: (8, 8),
            log_axis0: false,
        }
    }
}

/// Outcome of one adaptive integration.
#[derive(Debug, Clone)]
pub struct QuadResult {
    pub value: Complex64,
    pub abs_error: f64,
    pub cells: usize,
    pub evals: usize,
    pub converged: bool,
}

#[derive(Debug, Clone)]
struct Cell {
    lo0: f64,
    hi0: f64,
    lo1: f64,
    hi1: f64,
    value: Complex64,
    err: f64,
    live: bool,
}

struct HeapEntry {
    err: f64,
    idx: usize,
}

impl PartialEq for HeapEntry {
    fn eq(&self, other: &Self) -> bool {
        self.err == other.err && self.idx == other.idx
    }
}
impl Eq for HeapEntry {}
impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        // max-heap on error, older cell wins ties
        self.err
            .partial_cmp(&other.err)
            .unwrap_or(Ordering::Equal)
            .then(other.idx.cmp(&self.idx))
    }
}

fn eval_cell<F: Fn(f64, f64) -> Complex64>(f: &F, cell: &mut Cell) {
    let c0 = 0.5 * (cell.lo0 + cell.hi0);
    let h0 = 0.5 * (cell.hi0 - cell.lo0);
    let c1 = 0.5 * (cell.lo1 + cell.hi1);
    let h1 = 0.5 * (cell.hi1 - cell.lo1);
    let scale = h0 * h1;

    let mut low = Complex64::new(0.0, 0.0);
    for (i, &xi) in GL4_X.iter().enumerate() {
        let x = c0 + h0 * xi;
        let mut row = Complex64::new(0.0, 0.0);
        for (j, &yj) in GL4_X.iter().enumerate() {
            row += GL4_W[j] * f(x, c1 + h1 * yj);
        }
        low += GL4_W[i] * row;
    }
    low *= scale;

    let mut high = Complex64::new(0.0, 0.0);
    for (i, &xi) in GL8_X.iter().enumerate() {
        let x = c0 + h0 * xi;
        let mut row = Complex64::new(0.0, 0.0);
        for (j, &yj) in GL8_X.iter().enumerate() {
            row += GL8_W[j] * f(x, c1 + h1 * yj);
        }
        high += GL8_W[i] * row;
    }
    high *= scale;

    cell.value = high;
    cell.err = (high - low).norm();
}

const EVALS_PER_CELL: usize = 16 + 64;

/// Integrate `f` over `[a0, b0] x [a1, b1]`.
pub fn integrate_adaptive<F: Fn(f64, f64) -> Complex64>(
    f: &F,
    bounds: (f64, f64, f64, f64),
    opts: &QuadOptions,
) -> QuadResult {
    let (a0, b0, a1, b1) = bounds;
    assert!(b0 > a0 && b1 > a1, "empty integration domain");
    assert!(opts.abs_tol > 0.0, "tolerance must be positive");

    let n0 = opts.initial_splits.0.max(1);
    let n1 = opts.initial_splits.1.max(1);
    let edges0: Vec<f64> = if opts.log_axis0 {
        assert!(a0 > 0.0, "log-spaced axis needs a positive lower bound");
        let (la, lb) = (a0.ln(), b0.ln());
        (0..=n0)
            .map(|i| (la + (lb - la) * i as f64 / n0 as f64).exp())
            .collect()
    } else {
        (0..=n0)
            .map(|i| a0 + (b0 - a0) * i as f64 / n0 as f64)
            .collect()
    };
    let edges1: Vec<f64> = (0..=n1)
        .map(|i| a1 + (b1 - a1) * i as f64 / n1 as f64)
        .collect();

    let mut cells: Vec<Cell> = Vec::with_capacity(n0 * n1 * 2);
    let mut heap = BinaryHeap::new();
    let mut evals = 0usize;
    for i in 0..n0 {
        for j in 0..n1 {
            let mut cell = Cell {
                lo0: edges0[i],
                hi0: edges0[i + 1],
                lo1: edges1[j],
                hi1: edges1[j + 1],
                value: Complex64::new(0.0, 0.0),
                err: 0.0,
                live: true,
            };
            eval_cell(f, &mut cell);
            evals += EVALS_PER_CELL;
            heap.push(HeapEntry {
                err: cell.err,
                idx: cells.len(),
            });
            cells.push(cell);
        }
    }

    let mut total_err: f64 = cells.iter().map(|c| c.err).sum();
    let mut live_count = cells.len();

    while total_err > opts.abs_tol && live_count < opts.max_cells {
        let entry = match heap.pop() {
            Some(e) => e,
            None => break,
        };
        if !cells[entry.idx].live {
            continue;
        }
        if entry.err <= 0.0 {
            break; // nothing left worth splitting
        }
        let parent = cells[entry.idx].clone();
        cells[entry.idx].live = false;
        total_err -= parent.err;
        live_count -= 1;

        let m0 = 0.5 * (parent.lo0 + parent.hi0);
        let m1 = 0.5 * (parent.lo1 + parent.hi1);
        let quarters = [
            (parent.lo0, m0, parent.lo1, m1),
            (parent.lo0, m0, m1, parent.hi1),
            (m0, parent.hi0, parent.lo1, m1),
            (m0, parent.hi0, m1, parent.hi1),
        ];
        for &(lo0, hi0, lo1, hi1) in &quarters {
            let mut child = Cell {
                lo0,
                hi0,
                lo1,
                hi1,
                value: Complex64::new(0.0, 0.0),
                err: 0.0,
                live: true,
            };
            eval_cell(f, &mut child);
            evals += EVALS_PER_CELL;
            total_err += child.err;
            heap.push(HeapEntry {
                err: child.err,
                idx: cells.len(),
            });
            cells.push(child);
            live_count += 1;
        }
    }

    // Final sums in creation order, independent of the refinement schedule.
    let mut value = Complex64::new(0.0, 0.0);
    let mut abs_error = 0.0;
    for cell in cells.iter().filter(|c| c.live) {
        value += cell.value;
        abs_error += cell.err;
    }

    QuadResult {
        value,
        abs_error,
        cells: live_count,
        evals,
        converged: abs_error <= opts.abs_tol,
    }
}
