//! Leave-one-block-out resampling of time series.
//!
//! A series is cut into `J` contiguous blocks of near-equal length. Holding
//! out block `j` leaves the concatenation of the other blocks for training
//! and block `j` for testing. Holding out an interior block joins two
//! non-adjacent stretches of time, so the training series has one
//! discontinuity; design rows whose lag window reaches across it are
//! *junction rows* and can optionally be dropped.
//!
//! Series that already contain discontinuities (for instance a training
//! series being resampled again) are handled through
//! [`leave_one_out_segmented`], which carries the existing breaks along.

use std::ops::Range;

use crate::error::{invalid, Result};
use crate::model::{build_design_excluding, CountSeries, DesignPair};

/// Default number of blocks.
pub const DEFAULT_BLOCKS: usize = 10;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockPlan {
    bounds: Vec<Range<usize>>,
    order: usize,
    /// Drop junction rows from training designs.
    pub drop_transition: bool,
}

/// Splits `0..len` into `n_blocks` contiguous blocks whose sizes differ by at
/// most one, earlier blocks taking the remainder. Every block must be able to
/// hold `order + 2` observations.
pub fn plan_blocks(len: usize, n_blocks: usize, order: usize) -> Result<BlockPlan> {
    if n_blocks < 2 {
        return Err(invalid!("need at least 2 blocks, got {n_blocks}"));
    }
    if order == 0 {
        return Err(invalid!("order must be at least 1"));
    }
    if len < n_blocks * (order + 2) {
        return Err(invalid!(
            "series of length {len} is too short for {n_blocks} blocks at order {order} (need {})",
            n_blocks * (order + 2)
        ));
    }
    let (base, extra) = (len / n_blocks, len % n_blocks);
    let mut start = 0;
    let bounds = (0..n_blocks)
        .map(|j| {
            let end = start + base + usize::from(j < extra);
            let r = start..end;
            start = end;
            r
        })
        .collect();
    Ok(BlockPlan {
        bounds,
        order,
        drop_transition: false,
    })
}

impl BlockPlan {
    pub fn with_drop_transition(mut self, drop: bool) -> Self {
        self.drop_transition = drop;
        self
    }

    pub fn n_blocks(&self) -> usize {
        self.bounds.len()
    }

    pub fn bounds(&self) -> &[Range<usize>] {
        &self.bounds
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Length of the series the plan covers.
    pub fn len(&self) -> usize {
        self.bounds.last().map_or(0, |r| r.end)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// One train/test split of a series.
#[derive(Debug, Clone, PartialEq)]
pub struct Resample {
    /// Retained blocks concatenated in temporal order.
    pub train: CountSeries,
    /// Position in the input series of each training observation.
    pub train_times: Vec<usize>,
    /// Training positions `b` where `train[b - 1]` and `train[b]` are not
    /// adjacent in the input.
    pub train_breaks: Vec<usize>,
    /// Training target times whose lag window crosses a break.
    pub junction_rows: Vec<usize>,
    /// The held-out block.
    pub test: CountSeries,
    /// Up to `D` observations immediately preceding the held-out block within
    /// the same contiguous stretch, used only as lags for the first test rows.
    pub test_context: CountSeries,
    /// Breaks inside the held-out block, relative to its start.
    pub test_breaks: Vec<usize>,
    pub held_out_index: usize,
    pub order: usize,
    pub drop_transition: bool,
}

/// Holds out block `j` of a contiguous series.
pub fn leave_one_out(series: &CountSeries, plan: &BlockPlan, j: usize) -> Result<Resample> {
    leave_one_out_segmented(series, &[], plan, j)
}

/// Holds out block `j` of a series that already has discontinuities at the
/// positions in `breaks`.
pub fn leave_one_out_segmented(series: &CountSeries, breaks: &[usize], plan: &BlockPlan, j: usize) -> Result<Resample> {
    if plan.len() != series.len() {
        return Err(invalid!("plan covers {} observations, series has {}", plan.len(), series.len()));
    }
    if j >= plan.n_blocks() {
        return Err(invalid!("block {j} out of range for {} blocks", plan.n_blocks()));
    }
    if let Some(b) = breaks.iter().find(|&&b| b == 0 || b >= series.len()) {
        return Err(invalid!("break {b} out of range"));
    }
    let order = plan.order;
    let held = plan.bounds[j].clone();
    let width = held.len();

    let mut train_breaks: Vec<usize> = breaks
        .iter()
        .filter_map(|&b| {
            if b < held.start {
                Some(b)
            } else if b > held.end {
                Some(b - width)
            } else {
                None
            }
        })
        .collect();
    if held.start > 0 && held.end < series.len() {
        train_breaks.push(held.start);
    }
    train_breaks.sort_unstable();
    train_breaks.dedup();

    let train_times: Vec<usize> = (0..held.start).chain(held.end..series.len()).collect();
    let parts = [series.slice(0..held.start), series.slice(held.end..series.len())];
    let parts: Vec<CountSeries> = parts.into_iter().filter(|p| !p.is_empty()).collect();
    let train = CountSeries::concat(&parts)?;
    let junction_rows = junctions(&train_breaks, order, train.len());

    let segment_start = breaks.iter().copied().filter(|&b| b <= held.start).max().unwrap_or(0);
    let context_start = segment_start.max(held.start.saturating_sub(order));
    let test_breaks = breaks
        .iter()
        .filter(|&&b| b > held.start && b < held.end)
        .map(|&b| b - held.start)
        .collect();

    Ok(Resample {
        train,
        train_times,
        train_breaks,
        junction_rows,
        test: series.slice(held.clone()),
        test_context: series.slice(context_start..held.start),
        test_breaks,
        held_out_index: j,
        order,
        drop_transition: plan.drop_transition,
    })
}

/// Target times in `[b, b + D)` for each break `b`, clipped to valid rows.
fn junctions(breaks: &[usize], order: usize, len: usize) -> Vec<usize> {
    let mut rows: Vec<usize> = breaks.iter().flat_map(|&b| b.max(order)..(b + order).min(len)).collect();
    rows.sort_unstable();
    rows.dedup();
    rows
}

impl Resample {
    /// Training design; junction rows are dropped when `drop_transition` is set.
    pub fn train_design(&self) -> Result<DesignPair> {
        let exclude: &[usize] = if self.drop_transition { &self.junction_rows } else { &[] };
        build_design_excluding(&self.train, self.order, exclude)
    }

    /// Design whose rows target the held-out block. Lags of the first rows
    /// come from the context when there is one; otherwise the first `D`
    /// observations of the block only serve as lags. Rows crossing a break
    /// inside the block are always dropped.
    pub fn test_design(&self) -> Result<DesignPair> {
        let ctx = self.test_context.len();
        let joined = if ctx == 0 {
            self.test.clone()
        } else {
            CountSeries::concat(&[self.test_context.clone(), self.test.clone()])?
        };
        let shifted: Vec<usize> = self.test_breaks.iter().map(|b| b + ctx).collect();
        let mut exclude: Vec<usize> = (0..ctx).collect();
        exclude.extend(junctions(&shifted, self.order, joined.len()));
        build_design_excluding(&joined, self.order, &exclude)
    }
}

/// All `J` leave-one-block-out resamples of a contiguous series.
pub fn all_resamples(series: &CountSeries, plan: &BlockPlan) -> Result<Vec<Resample>> {
    (0..plan.n_blocks()).map(|j| leave_one_out(series, plan, j)).collect()
}
