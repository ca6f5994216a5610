//! Per-thread counter of operations that scan every row of an N-row matrix.
//!
//! The hopper promises that after initialization no iteration touches all N
//! rows; tests read this counter around the iteration loop to check that.

use std::cell::Cell;

thread_local! {
    static ROW_SCANS: Cell<u64> = const { Cell::new(0) };
}

pub(crate) fn record_row_scan() {
    ROW_SCANS.with(|c| c.set(c.get() + 1));
}

/// Number of full row scans performed on the current thread so far.
pub fn row_scans() -> u64 {
    ROW_SCANS.with(Cell::get)
}
