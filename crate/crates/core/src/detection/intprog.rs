//! Integer-occupancy recovery from sliding-window counts.
//!
//! Every candidate cell holds a non-negative integer number of objects. The
//! solver picks occupancies whose per-window totals best match the window
//! counts of the density map in the L1 sense, with the overall number fixed
//! to the map's rounded count.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::{target_count, DetectionSet, Method};
use crate::error::{Error, Result};
use crate::grid::{DensityMap, Point2, Raster};
use crate::synthesis::{axis_weights, DEFAULT_TRUNCATION};

pub const EXACT_MAX_CANDIDATES: usize = 25;
pub const EXACT_MAX_OBJECTS: usize = 4;

const REFINE_MAX_PASSES: usize = 100;
/// First destinations tried per pairwise relocation.
const PAIR_FIRST_CHOICES: usize = 8;
const IMPROVEMENT_EPS: f64 = 1e-12;

/// Density totals over a grid of (possibly overlapping) square windows.
#[derive(Debug, Clone, PartialEq)]
pub struct GridCounts {
    pub window: usize,
    pub stride: usize,
    /// Window `i` starts at `i * stride - origin` along each axis.
    pub origin: usize,
    /// Raster size the windows were laid over.
    pub width: usize,
    pub height: usize,
    /// Number of window rows and columns.
    pub rows: usize,
    pub cols: usize,
    /// Row-major, `rows * cols` entries.
    pub counts: Vec<f64>,
}

fn window_steps(len: usize, window: usize, stride: usize) -> usize {
    if len <= window {
        1
    } else {
        (len - window).div_ceil(stride) + 1
    }
}

/// Indices of the windows along one axis that cover position `p`.
fn covering(p: usize, window: usize, stride: usize, origin: usize, steps: usize) -> Range<usize> {
    let p = p + origin;
    let lo = if p < window {
        0
    } else {
        (p + 1 - window).div_ceil(stride)
    };
    let hi = (p / stride).min(steps - 1);
    lo..hi + 1
}

fn span(i: usize, window: usize, stride: usize, origin: usize, len: usize) -> Range<usize> {
    let start = i * stride;
    start.saturating_sub(origin)..(start + window).saturating_sub(origin).min(len)
}

impl GridCounts {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.counts[i * self.cols + j]
    }

    /// Cell rows covered by window row `i` (cropped at the border).
    pub fn row_span(&self, i: usize) -> Range<usize> {
        span(i, self.window, self.stride, self.origin, self.height)
    }

    pub fn col_span(&self, j: usize) -> Range<usize> {
        span(j, self.window, self.stride, self.origin, self.width)
    }

    /// Window rows whose span contains cell row `r`.
    pub fn windows_at_row(&self, r: usize) -> Range<usize> {
        covering(r, self.window, self.stride, self.origin, self.rows)
    }

    pub fn windows_at_col(&self, c: usize) -> Range<usize> {
        covering(c, self.window, self.stride, self.origin, self.cols)
    }
}

/// Sums the clamped density of ROI cells over windows at offsets
/// `(i * stride, j * stride)`, cropped at the far borders.
pub fn window_counts(map: &DensityMap, window: usize, stride: usize) -> Result<GridCounts> {
    check_window(window, stride)?;
    let rows = window_steps(map.height(), window, stride);
    let cols = window_steps(map.width(), window, stride);
    counts_on_grid(map, window, stride, 0, rows, cols)
}

/// Like [`window_counts`], but the grid starts `window - stride` cells
/// before the frame and runs past its end, so that every cell lies in the
/// same number of windows (when `stride` divides `window`). Windows are
/// cropped to the frame.
pub fn padded_window_counts(map: &DensityMap, window: usize, stride: usize) -> Result<GridCounts> {
    check_window(window, stride)?;
    let origin = window - stride;
    let steps = |len: usize| (len - 1 + origin) / stride + 1;
    counts_on_grid(
        map,
        window,
        stride,
        origin,
        steps(map.height()),
        steps(map.width()),
    )
}

fn check_window(window: usize, stride: usize) -> Result<()> {
    if window == 0 || stride == 0 || stride > window {
        return Err(Error::validation(format!(
            "need window >= 1 and 1 <= stride <= window, got window {window}, stride {stride}"
        )));
    }
    Ok(())
}

fn counts_on_grid(
    map: &DensityMap,
    window: usize,
    stride: usize,
    origin: usize,
    rows: usize,
    cols: usize,
) -> Result<GridCounts> {
    let (w, h) = (map.width(), map.height());
    // summed-area table over clamped in-ROI density
    let mut sat = vec![0.0; (w + 1) * (h + 1)];
    for r in 0..h {
        let mut row = 0.0;
        for c in 0..w {
            if map.in_roi(r, c) {
                row += map.at(r, c).max(0.0);
            }
            sat[(r + 1) * (w + 1) + c + 1] = sat[r * (w + 1) + c + 1] + row;
        }
    }
    let mut grid = GridCounts {
        window,
        stride,
        origin,
        width: w,
        height: h,
        rows,
        cols,
        counts: vec![0.0; rows * cols],
    };
    for i in 0..rows {
        let rs = grid.row_span(i);
        for j in 0..cols {
            let cs = grid.col_span(j);
            let at = |r: usize, c: usize| sat[r * (w + 1) + c];
            grid.counts[i * cols + j] =
                at(rs.end, cs.end) - at(rs.start, cs.end) - at(rs.end, cs.start)
                    + at(rs.start, cs.start);
        }
    }
    Ok(grid)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Solver {
    #[default]
    Greedy,
    Exact,
}

impl std::str::FromStr for Solver {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "greedy" => Ok(Solver::Greedy),
            "exact" => Ok(Solver::Exact),
            _ => Err(Error::validation(format!("unknown solver {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntProgConfig {
    pub window: usize,
    pub stride: usize,
    /// Spacing of the candidate lattice, in cells.
    pub candidate_stride: usize,
    pub solver: Solver,
    /// Width of the kernel one object spreads over. With 0 an object counts
    /// fully in every window containing its cell.
    pub kernel_sigma: f64,
}

impl IntProgConfig {
    /// Windows two kernel widths across at half-window stride, with the
    /// kernel model.
    pub fn for_sigma(sigma: f64) -> Self {
        let window = ((2.0 * sigma).round() as usize).max(1);
        Self {
            window,
            stride: (window / 2).max(1),
            candidate_stride: 1,
            solver: Solver::Greedy,
            kernel_sigma: sigma,
        }
    }
}

impl Default for IntProgConfig {
    fn default() -> Self {
        Self::for_sigma(4.0)
    }
}

/// Window counts together with what one object at each cell adds to every
/// window. Contributions are separable: the share of window `(i, j)` for a
/// unit at `(r, c)` is `row_share(r, i) * col_share(c, j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct IntProgProblem {
    pub counts: GridCounts,
    /// Per cell row, `(window row, share)`.
    rows: Vec<Vec<(usize, f64)>>,
    cols: Vec<Vec<(usize, f64)>>,
    /// Per window row, `(cell row, share)`.
    rows_inv: Vec<Vec<(usize, f64)>>,
    cols_inv: Vec<Vec<(usize, f64)>>,
    /// All shares are 0 or 1.
    binary: bool,
}

fn invert(per_cell: &[Vec<(usize, f64)>], steps: usize) -> Vec<Vec<(usize, f64)>> {
    let mut inv = vec![Vec::new(); steps];
    for (p, list) in per_cell.iter().enumerate() {
        for &(i, a) in list {
            inv[i].push((p, a));
        }
    }
    inv
}

impl IntProgProblem {
    /// Each object counts 1 in every window that contains its cell.
    pub fn indicator(counts: GridCounts) -> Self {
        let rows: Vec<_> = (0..counts.height)
            .map(|r| counts.windows_at_row(r).map(|i| (i, 1.0)).collect())
            .collect();
        let cols: Vec<_> = (0..counts.width)
            .map(|c| counts.windows_at_col(c).map(|j| (j, 1.0)).collect())
            .collect();
        Self::assemble(counts, rows, cols, true)
    }

    /// Each object spreads as the unit-mass truncated Gaussian used for
    /// ground-truth synthesis, centered on its cell and renormalized to the
    /// frame.
    pub fn kernel(counts: GridCounts, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::validation(format!(
                "kernel sigma must be positive, got {sigma}"
            )));
        }
        let axis = |len: usize,
                    steps: usize,
                    window_span: &dyn Fn(usize) -> Range<usize>|
         -> Vec<Vec<(usize, f64)>> {
            (0..len)
                .map(|p| {
                    let (start, w) =
                        axis_weights(p as f64 + 0.5, sigma, DEFAULT_TRUNCATION * sigma, len);
                    let total: f64 = w.iter().sum();
                    let mut prefix = vec![0.0; w.len() + 1];
                    for (k, v) in w.iter().enumerate() {
                        prefix[k + 1] = prefix[k] + v / total;
                    }
                    let end = start + w.len();
                    (0..steps)
                        .filter_map(|i| {
                            let s = window_span(i);
                            let (a, b) = (s.start.max(start), s.end.min(end));
                            (a < b).then(|| (i, prefix[b - start] - prefix[a - start]))
                        })
                        .collect()
                })
                .collect()
        };
        let rows = axis(counts.height, counts.rows, &|i| counts.row_span(i));
        let cols = axis(counts.width, counts.cols, &|j| counts.col_span(j));
        Ok(Self::assemble(counts, rows, cols, false))
    }

    /// Whether units at the two cells add to at least one common window.
    fn interact(&self, p: (usize, usize), q: (usize, usize)) -> bool {
        fn overlap(a: &[(usize, f64)], b: &[(usize, f64)]) -> bool {
            a.iter().any(|(i, _)| b.iter().any(|(j, _)| i == j))
        }
        overlap(&self.rows[p.0], &self.rows[q.0]) && overlap(&self.cols[p.1], &self.cols[q.1])
    }

    fn assemble(
        counts: GridCounts,
        rows: Vec<Vec<(usize, f64)>>,
        cols: Vec<Vec<(usize, f64)>>,
        binary: bool,
    ) -> Self {
        let rows_inv = invert(&rows, counts.rows);
        let cols_inv = invert(&cols, counts.cols);
        Self {
            counts,
            rows,
            cols,
            rows_inv,
            cols_inv,
            binary,
        }
    }

    /// `(window index, share)` for a unit at `cell`.
    fn footprint(&self, (r, c): (usize, usize)) -> impl Iterator<Item = (usize, f64)> + '_ {
        let cols = self.counts.cols;
        self.rows[r].iter().flat_map(move |&(i, a)| {
            self.cols[c]
                .iter()
                .map(move |&(j, b)| (i * cols + j, a * b))
        })
    }

    fn check_candidates(&self, candidates: &[(usize, usize)]) -> Result<()> {
        let (w, h) = (self.counts.width, self.counts.height);
        match candidates.iter().find(|&&(r, c)| r >= h || c >= w) {
            Some(&(r, c)) => Err(Error::validation(format!(
                "candidate ({r}, {c}) outside the {w}x{h} grid"
            ))),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntProgSolution {
    /// Candidate cells as `(row, col)`.
    pub candidates: Vec<(usize, usize)>,
    pub occupancy: Vec<u32>,
    /// L1 distance between implied and observed window counts.
    pub objective: f64,
}

impl IntProgSolution {
    /// Candidate centers, each repeated by its occupancy.
    pub fn points(&self) -> Vec<Point2> {
        let mut out = Vec::new();
        for (&(r, c), &n) in self.candidates.iter().zip(&self.occupancy) {
            for _ in 0..n {
                out.push(Point2::cell_center(r, c));
            }
        }
        out
    }
}

/// L1 objective for an explicit occupancy.
pub fn intprog_objective(
    problem: &IntProgProblem,
    candidates: &[(usize, usize)],
    occupancy: &[u32],
) -> f64 {
    let mut implied = vec![0.0; problem.counts.counts.len()];
    for (&q, &n) in candidates.iter().zip(occupancy) {
        for (w, a) in problem.footprint(q) {
            implied[w] += n as f64 * a;
        }
    }
    implied
        .iter()
        .zip(&problem.counts.counts)
        .map(|(a, b)| (a - b).abs())
        .sum()
}

/// Places `total` objects on `candidates` to minimize the L1 window-count
/// residual.
pub fn solve_intprog(
    problem: &IntProgProblem,
    candidates: &[(usize, usize)],
    total: usize,
    solver: Solver,
) -> Result<IntProgSolution> {
    problem.check_candidates(candidates)?;
    if total > 0 && candidates.is_empty() {
        return Err(Error::Degenerate(format!(
            "{total} objects but no candidate cells"
        )));
    }
    let occupancy = match solver {
        Solver::Greedy => Greedy::new(problem, candidates).run(total),
        Solver::Exact => {
            if candidates.len() > EXACT_MAX_CANDIDATES || total > EXACT_MAX_OBJECTS {
                return Err(Error::Capacity(format!(
                    "exact solver handles at most {EXACT_MAX_CANDIDATES} candidates and {EXACT_MAX_OBJECTS} objects, got {} and {total}",
                    candidates.len()
                )));
            }
            exact(problem, candidates, total)
        }
    };
    let objective = intprog_objective(problem, candidates, &occupancy);
    Ok(IntProgSolution {
        candidates: candidates.to_vec(),
        occupancy,
        objective,
    })
}

/// Objective change from adding `a` to a window with residual `r`.
fn add_cost(r: f64, a: f64) -> f64 {
    (r + a).abs() - r.abs()
}

/// Greedy insertion with incrementally maintained per-candidate insertion
/// costs, followed by single-unit and pairwise relocations.
struct Greedy<'a> {
    problem: &'a IntProgProblem,
    candidates: &'a [(usize, usize)],
    /// Candidate index per cell.
    lookup: Vec<Option<usize>>,
    /// Implied minus observed count per window.
    residual: Vec<f64>,
    /// Objective change from adding one unit at each candidate.
    delta: Vec<f64>,
    occupancy: Vec<u32>,
}

impl<'a> Greedy<'a> {
    fn new(problem: &'a IntProgProblem, candidates: &'a [(usize, usize)]) -> Self {
        let counts = &problem.counts;
        let mut lookup = vec![None; counts.width * counts.height];
        for (q, &(r, c)) in candidates.iter().enumerate() {
            lookup[r * counts.width + c].get_or_insert(q);
        }
        let residual: Vec<f64> = counts.counts.iter().map(|c| -c).collect();
        let delta = candidates
            .iter()
            .map(|&q| {
                problem
                    .footprint(q)
                    .map(|(w, a)| add_cost(residual[w], a))
                    .sum()
            })
            .collect();
        Self {
            problem,
            candidates,
            lookup,
            residual,
            delta,
            occupancy: vec![0; candidates.len()],
        }
    }

    /// Adds `sign` (+1 or -1) units at candidate `q`, updating residuals and
    /// the insertion costs of every candidate sharing a window with `q`.
    fn apply(&mut self, q: usize, sign: f64) {
        let p = self.problem;
        let (r, c) = self.candidates[q];
        let (cols, width) = (p.counts.cols, p.counts.width);
        for &(i, a) in &p.rows[r] {
            for &(j, b) in &p.cols[c] {
                let w = i * cols + j;
                let before = self.residual[w];
                let after = before + sign * a * b;
                self.residual[w] = after;
                if p.binary {
                    let change = add_cost(after, 1.0) - add_cost(before, 1.0);
                    if change == 0.0 {
                        continue;
                    }
                    for &(rr, _) in &p.rows_inv[i] {
                        for &(cc, _) in &p.cols_inv[j] {
                            if let Some(k) = self.lookup[rr * width + cc] {
                                self.delta[k] += change;
                            }
                        }
                    }
                } else {
                    for &(rr, ar) in &p.rows_inv[i] {
                        for &(cc, ac) in &p.cols_inv[j] {
                            if let Some(k) = self.lookup[rr * width + cc] {
                                let s = ar * ac;
                                self.delta[k] += add_cost(after, s) - add_cost(before, s);
                            }
                        }
                    }
                }
            }
        }
        if sign > 0.0 {
            self.occupancy[q] += 1;
        } else {
            self.occupancy[q] -= 1;
        }
    }

    fn best_insertion(&self) -> usize {
        let mut best = 0;
        for q in 1..self.delta.len() {
            if self.delta[q] < self.delta[best] - IMPROVEMENT_EPS {
                best = q;
            }
        }
        best
    }

    fn removal_gain(&self, q: usize) -> f64 {
        self.problem
            .footprint(self.candidates[q])
            .map(|(w, a)| add_cost(self.residual[w], -a))
            .sum()
    }

    /// Candidates with the lowest insertion cost, ties by index.
    fn cheapest(&self, k: usize) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.delta.len()).collect();
        let by_cost =
            |a: &usize, b: &usize| self.delta[*a].total_cmp(&self.delta[*b]).then(a.cmp(b));
        if k < order.len() {
            order.select_nth_unstable_by(k, by_cost);
            order.truncate(k);
        }
        order.sort_unstable_by(by_cost);
        order
    }

    /// Moves one unit from `a` to the best insertion point if that helps.
    fn relocate_one(&mut self, a: usize) -> bool {
        let removed = self.removal_gain(a);
        self.apply(a, -1.0);
        let b = self.best_insertion();
        if b != a && removed + self.delta[b] < -IMPROVEMENT_EPS {
            self.apply(b, 1.0);
            true
        } else {
            self.apply(a, 1.0);
            false
        }
    }

    /// Takes one unit each from `a` and `b` and places the two jointly: the
    /// first at one of the cheapest cells, the second at the best cell given
    /// the first.
    fn relocate_pair(&mut self, a: usize, b: usize) -> bool {
        let mut change = self.removal_gain(a);
        self.apply(a, -1.0);
        change += self.removal_gain(b);
        self.apply(b, -1.0);
        let mut best: Option<(f64, usize, usize)> = None;
        for c in self.cheapest(PAIR_FIRST_CHOICES) {
            let first = self.delta[c];
            self.apply(c, 1.0);
            let d = self.best_insertion();
            let total = change + first + self.delta[d];
            self.apply(c, -1.0);
            if best.is_none_or(|(t, _, _)| total < t) {
                best = Some((total, c, d));
            }
        }
        match best {
            Some((total, c, d)) if total < -IMPROVEMENT_EPS => {
                self.apply(c, 1.0);
                self.apply(d, 1.0);
                true
            }
            _ => {
                self.apply(b, 1.0);
                self.apply(a, 1.0);
                false
            }
        }
    }

    fn run(mut self, total: usize) -> Vec<u32> {
        for _ in 0..total {
            let q = self.best_insertion();
            self.apply(q, 1.0);
        }
        for _ in 0..REFINE_MAX_PASSES {
            let mut improved = false;
            for a in 0..self.candidates.len() {
                if self.occupancy[a] > 0 {
                    improved |= self.relocate_one(a);
                }
            }
            let occupied: Vec<usize> = (0..self.candidates.len())
                .filter(|&q| self.occupancy[q] > 0)
                .collect();
            for (i, &a) in occupied.iter().enumerate() {
                for &b in &occupied[i..] {
                    let enough = if a == b { 2 } else { 1 };
                    if self.occupancy[a] < enough
                        || self.occupancy[b] < enough
                        || !self
                            .problem
                            .interact(self.candidates[a], self.candidates[b])
                    {
                        continue;
                    }
                    improved |= self.relocate_pair(a, b);
                }
            }
            if !improved {
                break;
            }
        }
        self.occupancy
    }
}

/// Depth-first enumeration of occupancy multisets with the bound
/// `sum(max(0, residual))`, which can only grow as units are added.
fn exact(problem: &IntProgProblem, candidates: &[(usize, usize)], total: usize) -> Vec<u32> {
    let members: Vec<Vec<(usize, f64)>> = candidates
        .iter()
        .map(|&q| problem.footprint(q).collect())
        .collect();

    struct Search<'a> {
        members: &'a [Vec<(usize, f64)>],
        residual: Vec<f64>,
        picks: Vec<usize>,
        best: f64,
        best_picks: Vec<usize>,
    }

    impl Search<'_> {
        fn dfs(&mut self, start: usize, remaining: usize) {
            let bound: f64 = if remaining == 0 {
                self.residual.iter().map(|r| r.abs()).sum()
            } else {
                self.residual.iter().map(|r| r.max(0.0)).sum()
            };
            if bound >= self.best {
                return;
            }
            if remaining == 0 {
                self.best = bound;
                self.best_picks = self.picks.clone();
                return;
            }
            for q in start..self.members.len() {
                for &(w, a) in &self.members[q] {
                    self.residual[w] += a;
                }
                self.picks.push(q);
                self.dfs(q, remaining - 1);
                self.picks.pop();
                for &(w, a) in &self.members[q] {
                    self.residual[w] -= a;
                }
            }
        }
    }

    let mut search = Search {
        members: &members,
        residual: problem.counts.counts.iter().map(|c| -c).collect(),
        picks: Vec::new(),
        best: f64::INFINITY,
        best_picks: Vec::new(),
    };
    search.dfs(0, total);
    let mut occupancy = vec![0; candidates.len()];
    for q in search.best_picks {
        occupancy[q] += 1;
    }
    occupancy
}

/// ROI cells on the candidate lattice, row-major.
fn lattice(map: &DensityMap, step: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for r in (0..map.height()).step_by(step) {
        for c in (0..map.width()).step_by(step) {
            if map.in_roi(r, c) {
                out.push((r, c));
            }
        }
    }
    out
}

/// Window counts on the padded grid, then greedy or exact occupancy
/// recovery over the ROI cells of the candidate lattice.
pub fn detect_intprog(map: &DensityMap, cfg: &IntProgConfig) -> Result<DetectionSet> {
    if cfg.candidate_stride == 0 {
        return Err(Error::validation("candidate_stride must be >= 1"));
    }
    if !(cfg.kernel_sigma >= 0.0 && cfg.kernel_sigma.is_finite()) {
        return Err(Error::validation(format!(
            "kernel sigma must be >= 0, got {}",
            cfg.kernel_sigma
        )));
    }
    let (source_count, target) = target_count(map);
    if target < 0 {
        return Err(Error::Degenerate(format!(
            "map counts {source_count}, which rounds below zero"
        )));
    }
    let counts = padded_window_counts(map, cfg.window, cfg.stride)?;
    let problem = if cfg.kernel_sigma > 0.0 {
        IntProgProblem::kernel(counts, cfg.kernel_sigma)?
    } else {
        IntProgProblem::indicator(counts)
    };
    let candidates = lattice(map, cfg.candidate_stride);
    let solution = solve_intprog(&problem, &candidates, target as usize, cfg.solver)?;
    Ok(DetectionSet::new(
        Method::Intprog,
        solution.points(),
        source_count,
    ))
}
