//! Decomposition of a slice into connected regions of equal right-half-plane
//! root count. Each region is certified by a single representative point.

use std::collections::{HashMap, VecDeque};

use num::rational::BigRational;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::expr::{simplest_rational_in, to_big};
use crate::rhp_counter::{CounterConfig, VerdictKind};
use crate::slice::{CellLabel, SliceProblem};

pub const MIN_RESOLUTION: usize = 16;
pub const MAX_RESOLUTION: usize = 2048;

/// Largest denominator used when snapping representatives to rationals.
pub const SNAP_DENOMINATOR: i64 = 1000;

/// Node-centred labels over a 1-D or 2-D slice. Node `(i, j)` sits at the
/// centre of cell `(i, j)`, so the open domain edges are never sampled.
#[derive(Clone, Debug, PartialEq)]
pub struct LabelGrid {
    lo: Vec<f64>,
    hi: Vec<f64>,
    shape: [usize; 2],
    labels: Vec<CellLabel>,
}

impl LabelGrid {
    /// Builds a grid from precomputed labels, row-major with the first axis
    /// varying fastest.
    pub fn from_labels(
        lo: Vec<f64>,
        hi: Vec<f64>,
        shape: [usize; 2],
        labels: Vec<CellLabel>,
    ) -> Self {
        assert_eq!(labels.len(), shape[0] * shape[1]);
        assert_eq!(lo.len(), hi.len());
        LabelGrid {
            lo,
            hi,
            shape,
            labels,
        }
    }

    pub fn shape(&self) -> [usize; 2] {
        self.shape
    }

    /// Domain edges along `axis`.
    pub fn bounds(&self, axis: usize) -> (f64, f64) {
        (self.lo[axis], self.hi[axis])
    }

    pub fn dims(&self) -> usize {
        self.lo.len()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[CellLabel] {
        &self.labels
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.shape[0] + i
    }

    pub fn ij(&self, index: usize) -> (usize, usize) {
        (index % self.shape[0], index / self.shape[0])
    }

    pub fn label(&self, i: usize, j: usize) -> CellLabel {
        self.labels[self.index(i, j)]
    }

    /// Cell widths per axis.
    pub fn step(&self) -> Vec<f64> {
        (0..self.dims())
            .map(|a| (self.hi[a] - self.lo[a]) / self.shape[a] as f64)
            .collect()
    }

    pub fn coord(&self, axis: usize, i: usize) -> f64 {
        let h = (self.hi[axis] - self.lo[axis]) / self.shape[axis] as f64;
        self.lo[axis] + (i as f64 + 0.5) * h
    }

    pub fn point(&self, index: usize) -> Vec<f64> {
        let (i, j) = self.ij(index);
        let mut p = vec![self.coord(0, i)];
        if self.dims() == 2 {
            p.push(self.coord(1, j));
        }
        p
    }

    pub fn neighbours(&self, index: usize) -> impl Iterator<Item = usize> + '_ {
        let (i, j) = self.ij(index);
        let [w, h] = self.shape;
        let candidates = [
            (i > 0).then(|| index - 1),
            (i + 1 < w).then(|| index + 1),
            (j > 0).then(|| index - w),
            (j + 1 < h).then(|| index + w),
        ];
        candidates.into_iter().flatten()
    }

    /// Distinct decided labels present in the grid, sorted.
    pub fn decided_labels(&self) -> Vec<CellLabel> {
        let mut seen: Vec<CellLabel> = self
            .labels
            .iter()
            .copied()
            .filter(CellLabel::is_decided)
            .collect();
        seen.sort();
        seen.dedup();
        seen
    }
}

fn check_resolution(res: usize) -> Result<()> {
    if (MIN_RESOLUTION..=MAX_RESOLUTION).contains(&res) {
        Ok(())
    } else {
        Err(Error::InvalidSlice(format!(
            "resolution {res} outside [{MIN_RESOLUTION}, {MAX_RESOLUTION}]"
        )))
    }
}

/// Labels every node of a `res`-per-axis grid over the slice.
pub fn classify_grid(problem: &SliceProblem, res: usize) -> Result<LabelGrid> {
    check_resolution(res)?;
    let slice = problem.slice();
    let dims = slice.dims();
    let (lo, hi): (Vec<f64>, Vec<f64>) = (0..dims).map(|a| slice.bounds(a)).unzip();
    let shape = [res, if dims == 2 { res } else { 1 }];
    let mut grid = LabelGrid::from_labels(
        lo,
        hi,
        shape,
        vec![CellLabel::OutOfModel; shape[0] * shape[1]],
    );
    let labels: Vec<CellLabel> = (0..grid.len())
        .into_par_iter()
        .map(|index| problem.classify(&grid.point(index)))
        .collect();
    grid.labels = labels;
    Ok(grid)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Component {
    pub id: usize,
    pub label: CellLabel,
    pub cells: Vec<usize>,
    /// Grid index of the interior-most cell.
    pub representative: usize,
}

/// Connected components of a label grid. Decided labels form regions;
/// marginal cells form separate pseudo-regions; out-of-model cells belong
/// to neither.
#[derive(Clone, Debug)]
pub struct RegionMap {
    pub grid: LabelGrid,
    pub component_of: Vec<Option<usize>>,
    pub regions: Vec<Component>,
    pub marginal: Vec<Component>,
}

impl RegionMap {
    pub fn region_labels(&self) -> Vec<CellLabel> {
        let mut labels: Vec<CellLabel> = self.regions.iter().map(|c| c.label).collect();
        labels.sort();
        labels.dedup();
        labels
    }

    /// Region whose cells contain `point`.
    pub fn region_at(&self, point: &[f64]) -> Option<&Component> {
        let step = self.grid.step();
        let mut idx = [0usize; 2];
        for (a, &x) in point.iter().enumerate().take(self.grid.dims()) {
            let k = ((x - self.grid.lo[a]) / step[a]).floor();
            if k < 0.0 || k >= self.grid.shape[a] as f64 {
                return None;
            }
            idx[a] = k as usize;
        }
        let cell = self.grid.index(idx[0], idx[1]);
        let id = self.component_of[cell]?;
        self.regions.iter().find(|c| c.id == id)
    }

    pub fn area_fraction(&self, component: &Component) -> f64 {
        component.cells.len() as f64 / self.grid.len() as f64
    }

    /// Cells of `component` whose four neighbours all belong to it.
    pub fn interior_cells(&self, component: &Component) -> Vec<usize> {
        component
            .cells
            .iter()
            .copied()
            .filter(|&c| {
                let n: Vec<usize> = self.grid.neighbours(c).collect();
                n.len() == 2 * self.grid.dims()
                    && n.iter()
                        .all(|&m| self.component_of[m] == Some(component.id))
            })
            .collect()
    }
}

/// Components under 4-connectivity.
pub fn connected_components(grid: LabelGrid) -> RegionMap {
    flood(grid, &HashMap::new())
}

/// Components under 4-connectivity, plus diagonal links through saddle
/// blocks. A 2×2 block whose diagonals carry two different labels is
/// ambiguous; the label sampled at its centre decides which diagonal pair
/// is joined. The other pair stays separated.
pub fn connected_components_resolved(grid: LabelGrid, problem: &SliceProblem) -> RegionMap {
    let links = saddle_links(&grid, problem);
    flood(grid, &links)
}

fn saddle_links(grid: &LabelGrid, problem: &SliceProblem) -> HashMap<usize, Vec<usize>> {
    let [w, h] = grid.shape;
    let mut saddles = Vec::new();
    for j in 0..h.saturating_sub(1) {
        for i in 0..w.saturating_sub(1) {
            let c00 = grid.index(i, j);
            let c10 = grid.index(i + 1, j);
            let c01 = grid.index(i, j + 1);
            let c11 = grid.index(i + 1, j + 1);
            let l = &grid.labels;
            if l[c00] == l[c11] && l[c10] == l[c01] && l[c00] != l[c10] {
                saddles.push((c00, c10, c01, c11));
            }
        }
    }
    let decided: Vec<(usize, usize)> = saddles
        .into_par_iter()
        .filter_map(|(c00, c10, c01, c11)| {
            let centre: Vec<f64> = grid
                .point(c00)
                .iter()
                .zip(grid.point(c11))
                .map(|(a, b)| 0.5 * (a + b))
                .collect();
            let label = problem.classify(&centre);
            if label == grid.labels[c00] {
                Some((c00, c11))
            } else if label == grid.labels[c10] {
                Some((c10, c01))
            } else {
                None
            }
        })
        .collect();
    let mut links: HashMap<usize, Vec<usize>> = HashMap::new();
    for (a, b) in decided {
        if grid.labels[a] == CellLabel::OutOfModel {
            continue;
        }
        links.entry(a).or_default().push(b);
        links.entry(b).or_default().push(a);
    }
    links
}

fn flood(grid: LabelGrid, links: &HashMap<usize, Vec<usize>>) -> RegionMap {
    let mut component_of = vec![None; grid.len()];
    let mut regions = Vec::new();
    let mut marginal = Vec::new();
    let distance = foreign_distance(&grid);
    let mut next_id = 0;
    for start in 0..grid.len() {
        let label = grid.labels[start];
        if component_of[start].is_some() || label == CellLabel::OutOfModel {
            continue;
        }
        let id = next_id;
        next_id += 1;
        let mut cells = Vec::new();
        let mut queue = VecDeque::from([start]);
        component_of[start] = Some(id);
        while let Some(c) = queue.pop_front() {
            cells.push(c);
            let extra = links.get(&c).into_iter().flatten().copied();
            for m in grid.neighbours(c).chain(extra) {
                if component_of[m].is_none() && grid.labels[m] == label {
                    component_of[m] = Some(id);
                    queue.push_back(m);
                }
            }
        }
        cells.sort_unstable();
        let representative = representative(&grid, &cells, &distance);
        let component = Component {
            id,
            label,
            cells,
            representative,
        };
        if label == CellLabel::Marginal {
            marginal.push(component);
        } else {
            regions.push(component);
        }
    }
    RegionMap {
        grid,
        component_of,
        regions,
        marginal,
    }
}

/// City-block steps from each cell to the nearest cell carrying another
/// label or lying outside the grid, measured through same-label cells.
fn foreign_distance(grid: &LabelGrid) -> Vec<usize> {
    let mut dist = vec![usize::MAX; grid.len()];
    let mut queue = VecDeque::new();
    let full = 2 * grid.dims();
    for c in 0..grid.len() {
        let on_border = grid.neighbours(c).count() < full;
        if on_border || grid.neighbours(c).any(|m| grid.labels[m] != grid.labels[c]) {
            dist[c] = 1;
            queue.push_back(c);
        }
    }
    while let Some(c) = queue.pop_front() {
        for m in grid.neighbours(c) {
            if dist[m] == usize::MAX && grid.labels[m] == grid.labels[c] {
                dist[m] = dist[c] + 1;
                queue.push_back(m);
            }
        }
    }
    dist
}

/// Largest distance from differing labels and the grid edge; ties go to the
/// cell nearest the component centroid, then to the lowest index.
fn representative(grid: &LabelGrid, cells: &[usize], distance: &[usize]) -> usize {
    let n = cells.len() as f64;
    let (ci, cj) = cells.iter().fold((0.0, 0.0), |(si, sj), &c| {
        let (i, j) = grid.ij(c);
        (si + i as f64 / n, sj + j as f64 / n)
    });
    let centroid_gap = |c: usize| {
        let (i, j) = grid.ij(c);
        (i as f64 - ci).powi(2) + (j as f64 - cj).powi(2)
    };
    *cells
        .iter()
        .min_by(|&&a, &&b| {
            distance[b]
                .cmp(&distance[a])
                .then(centroid_gap(a).total_cmp(&centroid_gap(b)))
                .then(a.cmp(&b))
        })
        .expect("components are never empty")
}

/// Simplest rational inside the representative's cell, per axis.
pub fn snapped_point(grid: &LabelGrid, cell: usize) -> Vec<(i64, i64)> {
    let p = grid.point(cell);
    let step = grid.step();
    p.iter()
        .zip(&step)
        .map(|(&x, &h)| {
            simplest_rational_in(x - 0.45 * h, x + 0.45 * h, SNAP_DENOMINATOR).unwrap_or_else(
                || {
                    let den = SNAP_DENOMINATOR;
                    ((x * den as f64).round() as i64, den)
                },
            )
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub enum OracleCheck {
    Agrees(VerdictKind),
    Skipped(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct RegionSummary {
    pub id: usize,
    pub label: CellLabel,
    pub cells: usize,
    pub area_fraction: f64,
    pub representative: Vec<f64>,
    pub snapped: Vec<(i64, i64)>,
    pub counter: VerdictKind,
    pub oracle: OracleCheck,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RegionReport {
    pub regions: Vec<RegionSummary>,
    pub marginal_cells: usize,
    pub out_of_model_cells: usize,
}

impl RegionReport {
    pub fn render(&self, names: &[String]) -> String {
        let mut out = format!("{} region(s)\n", self.regions.len());
        for r in &self.regions {
            let at: Vec<String> = names
                .iter()
                .zip(&r.snapped)
                .map(|(n, (p, q))| {
                    if *q == 1 {
                        format!("{n}={p}")
                    } else {
                        format!("{n}={p}/{q}")
                    }
                })
                .collect();
            let oracle = match &r.oracle {
                OracleCheck::Agrees(k) => format!("oracle {k}"),
                OracleCheck::Skipped(why) => format!("oracle skipped: {why}"),
            };
            out.push_str(&format!(
                "region {}: {} area {:.4} cells {} at ({}) counter {} {}\n",
                r.id,
                r.label,
                r.area_fraction,
                r.cells,
                at.join(", "),
                r.counter,
                oracle
            ));
        }
        if self.marginal_cells > 0 {
            out.push_str(&format!("marginal cells: {}\n", self.marginal_cells));
        }
        if self.out_of_model_cells > 0 {
            out.push_str(&format!(
                "out-of-model cells: {}\n",
                self.out_of_model_cells
            ));
        }
        out
    }
}

/// Re-verifies each region at its snapped representative with a fresh,
/// refined counter run and, where the reduced degree allows, the root oracle.
pub fn region_report(map: &RegionMap, problem: &SliceProblem) -> Result<RegionReport> {
    let refined = problem.config().refined();
    let mut regions = Vec::with_capacity(map.regions.len());
    for comp in &map.regions {
        let snapped = snapped_point(&map.grid, comp.representative);
        let point: Vec<f64> = snapped.iter().map(|&(p, q)| p as f64 / q as f64).collect();
        let exact: Vec<BigRational> = snapped.iter().map(|&(p, q)| to_big(p, q)).collect();
        let mismatch = |found: String, source_name: &'static str| Error::RegionInconsistent {
            region: comp.id,
            expected: comp.label.to_string(),
            found,
            point: point.clone(),
            source_name,
        };
        let counter = problem.verdict_with(&point, &refined)?.kind;
        if CellLabel::from(counter) != comp.label {
            return Err(mismatch(counter.to_string(), "contour counter"));
        }
        let oracle = match problem.oracle_at(&exact) {
            Ok(Some(report)) => {
                if CellLabel::from(report.verdict.kind) != comp.label {
                    return Err(mismatch(report.verdict.kind.to_string(), "root oracle"));
                }
                OracleCheck::Agrees(report.verdict.kind)
            }
            Ok(None) => OracleCheck::Skipped("reduced degree above cap".into()),
            Err(e) => OracleCheck::Skipped(e.to_string()),
        };
        regions.push(RegionSummary {
            id: comp.id,
            label: comp.label,
            cells: comp.cells.len(),
            area_fraction: map.area_fraction(comp),
            representative: map.grid.point(comp.representative),
            snapped,
            counter,
            oracle,
        });
    }
    let count = |l: CellLabel| map.grid.labels.iter().filter(|&&x| x == l).count();
    Ok(RegionReport {
        regions,
        marginal_cells: count(CellLabel::Marginal),
        out_of_model_cells: count(CellLabel::OutOfModel),
    })
}

/// Re-classifies up to `samples` random interior cells per region with a
/// refined counter; returns `(region id, cell)` for every disagreement.
pub fn spot_check(
    map: &RegionMap,
    problem: &SliceProblem,
    samples: usize,
    seed: u64,
) -> Vec<(usize, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let refined: CounterConfig = problem.config().refined();
    let mut picks = Vec::new();
    for comp in &map.regions {
        let mut interior = map.interior_cells(comp);
        interior.shuffle(&mut rng);
        picks.extend(
            interior
                .into_iter()
                .take(samples)
                .map(|c| (comp.id, comp.label, c)),
        );
    }
    picks
        .into_par_iter()
        .filter(|&(_, label, cell)| problem.classify_with(&map.grid.point(cell), &refined) != label)
        .map(|(id, _, cell)| (id, cell))
        .collect()
}

/// Verdicts along a one-parameter slice together with the located label
/// changes between neighbouring nodes.
#[derive(Clone, Debug)]
pub struct Scan {
    pub grid: LabelGrid,
    pub crossings: Vec<crate::boundary::BoundaryPoint>,
}

pub fn scan(problem: &SliceProblem, res: usize) -> Result<Scan> {
    if problem.dims() != 1 {
        return Err(Error::InvalidSlice(
            "scan needs a one-parameter slice".into(),
        ));
    }
    let grid = classify_grid(problem, res)?;
    let crossings = crate::boundary::crossings_on_grid(problem, &grid)
        .into_iter()
        .map(|c| c.point)
        .collect();
    Ok(Scan { grid, crossings })
}
