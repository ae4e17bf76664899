//! Column graph over the reference canvas.
//!
//! Replicate-padded canvas segments consist of long runs of identical
//! columns. After `m` same-padded 3x3 layers only the `m` columns at each end
//! of a run can differ from the rest, so every trunk stage keeps those
//! columns and evaluates the run interior once, as a representative that is
//! its own neighbor. Each stage has its own layout, and a [`Transition`]
//! locates every 3x3 neighborhood of one layout in the previous one. The
//! backward cone of a merged column only ever meets columns equal to the
//! representative, so parameter gradients stay exact.

use crate::arch::{CANVAS_COLS, CANVAS_ROWS};

const NO_NEIGHBOR: u32 = u32::MAX;

#[derive(Clone, Debug)]
pub(crate) struct ColumnPlan {
    /// Canvas column read for each compressed column.
    pub source: Vec<usize>,
    /// Compressed column standing in for each canvas column.
    pub expand: [usize; CANVAS_COLS],
}

impl ColumnPlan {
    /// Plan that keeps every column.
    #[cfg(test)]
    pub fn full() -> Self {
        let mut expand = [0usize; CANVAS_COLS];
        for (c, e) in expand.iter_mut().enumerate() {
            *e = c;
        }
        ColumnPlan { source: (0..CANVAS_COLS).collect(), expand }
    }

    /// Keeps `margin` columns at each end of every run of identical columns
    /// and merges the rest of the run.
    pub fn compress(canvas: &[f32], margin: usize) -> Self {
        debug_assert_eq!(canvas.len(), CANVAS_ROWS * CANVAS_COLS);
        let same = |a: usize, b: usize| {
            (0..CANVAS_ROWS).all(|r| {
                canvas[r * CANVAS_COLS + a].to_bits() == canvas[r * CANVAS_COLS + b].to_bits()
            })
        };
        let mut source = Vec::with_capacity(CANVAS_COLS);
        let mut expand = [0usize; CANVAS_COLS];
        let mut start = 0;
        while start < CANVAS_COLS {
            let mut end = start + 1;
            while end < CANVAS_COLS && same(start, end) {
                end += 1;
            }
            if end - start >= 2 * margin + 2 {
                for c in start..start + margin {
                    expand[c] = source.len();
                    source.push(c);
                }
                let rep = source.len();
                source.push(start + margin);
                for e in &mut expand[start + margin..end - margin] {
                    *e = rep;
                }
                for c in end - margin..end {
                    expand[c] = source.len();
                    source.push(c);
                }
            } else {
                for c in start..end {
                    expand[c] = source.len();
                    source.push(c);
                }
            }
            start = end;
        }
        ColumnPlan { source, expand }
    }

    pub fn len(&self) -> usize {
        self.source.len()
    }
}

/// Position layout of a batch: sample `s`, compressed column `c`, row `r`
/// lives at `base[s] + c * CANVAS_ROWS + r`.
#[derive(Clone, Debug)]
pub(crate) struct BatchLayout {
    pub plans: Vec<ColumnPlan>,
    pub base: Vec<usize>,
    pub positions: usize,
}

impl BatchLayout {
    pub fn new(plans: Vec<ColumnPlan>) -> Self {
        let mut base = Vec::with_capacity(plans.len());
        let mut positions = 0;
        for p in &plans {
            base.push(positions);
            positions += p.len() * CANVAS_ROWS;
        }
        BatchLayout { plans, base, positions }
    }

    /// Position holding canvas cell `(row, col)` of sample `s`.
    #[inline]
    pub fn position(&self, s: usize, row: usize, col: usize) -> usize {
        self.base[s] + self.plans[s].expand[col] * CANVAS_ROWS + row
    }

    /// Canvas cell read for position `p` of sample `s`.
    pub fn source_cell(&self, s: usize, p: usize) -> (usize, usize) {
        let local = p - self.base[s];
        (local % CANVAS_ROWS, self.plans[s].source[local / CANVAS_ROWS])
    }
}

/// For every position of an output layout, the positions of its 3x3
/// neighborhood in an input layout, row-major over `(dy + 1) * 3 + (dx + 1)`.
#[derive(Clone, Debug)]
pub(crate) struct Transition {
    neighbors: Vec<u32>,
}

/// Center tap of a 3x3 neighborhood.
pub(crate) const CENTER: usize = 4;

impl Transition {
    pub fn new(from: &BatchLayout, to: &BatchLayout) -> Self {
        let mut neighbors = vec![NO_NEIGHBOR; to.positions * 9];
        for (s, plan) in to.plans.iter().enumerate() {
            for (k, &c) in plan.source.iter().enumerate() {
                for r in 0..CANVAS_ROWS {
                    let p = to.base[s] + k * CANVAS_ROWS + r;
                    for dy in 0..3 {
                        let rr = r as isize + dy as isize - 1;
                        if !(0..CANVAS_ROWS as isize).contains(&rr) {
                            continue;
                        }
                        for dx in 0..3 {
                            let cc = c as isize + dx as isize - 1;
                            if !(0..CANVAS_COLS as isize).contains(&cc) {
                                continue;
                            }
                            neighbors[p * 9 + dy * 3 + dx] = from.position(s, rr as usize, cc as usize) as u32;
                        }
                    }
                }
            }
        }
        Transition { neighbors }
    }

    #[inline]
    pub fn neighbor(&self, p: usize, tap: usize) -> Option<usize> {
        let n = self.neighbors[p * 9 + tap];
        (n != NO_NEIGHBOR).then_some(n as usize)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn canvas_with_runs() -> Vec<f32> {
        let mut c = vec![0.0f32; CANVAS_ROWS * CANVAS_COLS];
        for r in 0..CANVAS_ROWS {
            for col in 0..CANVAS_COLS {
                c[r * CANVAS_COLS + col] = match col {
                    0..=59 => 0.1 * r as f32,
                    60..=71 => col as f32 * 0.01,
                    _ => 0.9,
                };
            }
        }
        c
    }

    #[test]
    fn constant_runs_collapse() {
        let plan = ColumnPlan::compress(&canvas_with_runs(), 5);
        // Run 0..60 -> 11 columns, 12 distinct columns, run 72..132 -> 11 columns.
        assert_eq!(plan.len(), 11 + 12 + 11);
        assert_eq!(plan.expand[5], plan.expand[54]);
        assert_ne!(plan.expand[4], plan.expand[5]);
        assert_ne!(plan.expand[54], plan.expand[55]);
        let plan = ColumnPlan::compress(&canvas_with_runs(), 0);
        assert_eq!(plan.len(), 1 + 12 + 1);
    }

    #[test]
    fn short_runs_are_kept() {
        let c: Vec<f32> = (0..CANVAS_ROWS * CANVAS_COLS).map(|i| (i % 7) as f32).collect();
        let plan = ColumnPlan::compress(&c, 5);
        assert_eq!(plan.len(), CANVAS_COLS);
    }

    #[test]
    fn full_plan_neighbors_follow_grid() {
        let layout = BatchLayout::new(vec![ColumnPlan::full(), ColumnPlan::full()]);
        let t = Transition::new(&layout, &layout);
        assert_eq!(layout.positions, 2 * CANVAS_ROWS * CANVAS_COLS);
        let p = layout.position(1, 2, 10);
        assert_eq!(t.neighbor(p, 0), Some(layout.position(1, 1, 9)));
        assert_eq!(t.neighbor(p, 8), Some(layout.position(1, 3, 11)));
        let top = layout.position(0, 0, 0);
        assert_eq!(t.neighbor(top, 1), None);
        assert_eq!(t.neighbor(top, 3), None);
        assert_eq!(t.neighbor(top, CENTER), Some(top));
    }

    #[test]
    fn representatives_read_representatives() {
        let canvas = canvas_with_runs();
        let from = BatchLayout::new(vec![ColumnPlan::compress(&canvas, 2)]);
        let to = BatchLayout::new(vec![ColumnPlan::compress(&canvas, 3)]);
        let t = Transition::new(&from, &to);
        let rep_to = to.position(0, 1, 30);
        let rep_from = from.position(0, 1, 30);
        for tap in [3, CENTER, 5] {
            assert_eq!(t.neighbor(rep_to, tap), Some(rep_from));
        }
        // The kept column next to the interior reads kept and merged columns.
        let edge = to.position(0, 1, 2);
        assert_eq!(t.neighbor(edge, 3), Some(from.position(0, 1, 1)));
        assert_eq!(t.neighbor(edge, 5), Some(rep_from));
    }
}
