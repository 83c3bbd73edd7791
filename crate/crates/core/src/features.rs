//! Section statistics and ratio features over height maps.
//!
//! Seven regions are laid over the normalized footprint `(u, v) ∈ [0, 1]²`
//! (`u` left → right, `v` posterior → anterior). A cell belongs to a region
//! when its centre does. Regions overlap; only P/M/A partition the map.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::sqrt;
use crate::heightmap::HeightMap;

pub const SECTION_COUNT: usize = 7;
pub const PAIR_COUNT: usize = SECTION_COUNT * (SECTION_COUNT - 1) / 2;
/// Default minimum fraction of valid cells for a section to count.
pub const DEFAULT_MIN_VALID_FRACTION: f64 = 0.3;

/// Feature used by the first fixed rule: `avg(A0) / avg(P)`.
pub const RATIO_A0_P: &str = "ratio_P_A0";
/// Feature used by the second fixed rule: `avg(C) / avg(C̄)`.
pub const REF_RATIO_C: &str = "ref_C";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Section {
    P,
    M,
    A,
    L,
    R,
    C,
    A0,
}

impl Section {
    /// Canonical order used for pair enumeration and feature columns.
    pub const ALL: [Section; SECTION_COUNT] =
        [Section::P, Section::M, Section::A, Section::L, Section::R, Section::C, Section::A0];

    /// Sections the fixed rules read; a vertebra without them is unusable.
    pub const REQUIRED: [Section; 3] = [Section::A0, Section::P, Section::C];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Section::P => "P",
            Section::M => "M",
            Section::A => "A",
            Section::L => "L",
            Section::R => "R",
            Section::C => "C",
            Section::A0 => "A0",
        }
    }

    pub fn from_name(name: &str) -> Option<Section> {
        Section::ALL.into_iter().find(|s| s.name() == name)
    }
}

/// Section pairs `(i, j)` with `i` before `j` in [`Section::ALL`].
pub fn section_pairs() -> [(Section, Section); PAIR_COUNT] {
    let mut out = [(Section::P, Section::P); PAIR_COUNT];
    let mut n = 0;
    for i in 0..SECTION_COUNT {
        for j in i + 1..SECTION_COUNT {
            out[n] = (Section::ALL[i], Section::ALL[j]);
            n += 1;
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
    #[serde(default = "yes")]
    pub lo_closed: bool,
    #[serde(default = "yes")]
    pub hi_closed: bool,
}

fn yes() -> bool {
    true
}

impl Interval {
    pub const fn new(lo: f64, hi: f64, lo_closed: bool, hi_closed: bool) -> Self {
        Interval { lo, hi, lo_closed, hi_closed }
    }

    pub const FULL: Interval = Interval::new(0.0, 1.0, true, true);

    pub fn contains(&self, x: f64) -> bool {
        let above = if self.lo_closed { x >= self.lo } else { x > self.lo };
        let below = if self.hi_closed { x <= self.hi } else { x < self.hi };
        above && below
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub u: Interval,
    pub v: Interval,
}

impl Region {
    pub fn contains(&self, u: f64, v: f64) -> bool {
        self.u.contains(u) && self.v.contains(v)
    }
}

/// One axis-aligned region per section, indexed like [`Section::ALL`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SectionLayout {
    pub regions: [Region; SECTION_COUNT],
}

impl Default for SectionLayout {
    fn default() -> Self {
        const THIRD: f64 = 1.0 / 3.0;
        const TWO_THIRDS: f64 = 2.0 / 3.0;
        let full = Interval::FULL;
        SectionLayout {
            regions: [
                // P: v < 1/3
                Region { u: full, v: Interval::new(0.0, THIRD, true, false) },
                // M: 1/3 <= v < 2/3
                Region { u: full, v: Interval::new(THIRD, TWO_THIRDS, true, false) },
                // A: v >= 2/3
                Region { u: full, v: Interval::new(TWO_THIRDS, 1.0, true, true) },
                // L: u < 1/3
                Region { u: Interval::new(0.0, THIRD, true, false), v: full },
                // R: u > 2/3
                Region { u: Interval::new(TWO_THIRDS, 1.0, false, true), v: full },
                // C: 1/4 <= u, v <= 3/4
                Region { u: Interval::new(0.25, 0.75, true, true), v: Interval::new(0.25, 0.75, true, true) },
                // A0: 1/3 <= u <= 2/3, v >= 2/3
                Region {
                    u: Interval::new(THIRD, TWO_THIRDS, true, true),
                    v: Interval::new(TWO_THIRDS, 1.0, true, true),
                },
            ],
        }
    }
}

impl SectionLayout {
    pub fn region(&self, s: Section) -> &Region {
        &self.regions[s.index()]
    }

    /// `(cell, weight)` for every cell overlapping section `s`, where the
    /// weight is the fraction of the cell's area inside the region. Cells
    /// are row-major over a `grid_size × grid_size` grid.
    pub fn cell_weights(&self, s: Section, grid_size: usize) -> Vec<(usize, f64)> {
        let g = grid_size as f64;
        let region = self.region(s);
        let overlap = |iv: &Interval, k: usize| {
            let (a, b) = (k as f64 / g, (k + 1) as f64 / g);
            ((iv.hi.min(b) - iv.lo.max(a)) * g).max(0.0)
        };
        let mut out = Vec::new();
        for row in 0..grid_size {
            let wv = overlap(&region.v, row);
            if wv == 0.0 {
                continue;
            }
            for col in 0..grid_size {
                let w = wv * overlap(&region.u, col);
                if w > 0.0 {
                    out.push((row * grid_size + col, w));
                }
            }
        }
        out
    }

    /// Cells with a positive share of section `s`.
    pub fn cells(&self, s: Section, grid_size: usize) -> Vec<usize> {
        self.cell_weights(s, grid_size).into_iter().map(|(c, _)| c).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SectionStats {
    pub mean: [Option<f64>; SECTION_COUNT],
    /// Population standard deviation.
    pub std: [Option<f64>; SECTION_COUNT],
    pub valid_fraction: [f64; SECTION_COUNT],
}

impl SectionStats {
    pub fn mean_of(&self, s: Section) -> Option<f64> {
        self.mean[s.index()]
    }
}

/// Area-weighted mean and population standard deviation of the valid
/// cells in each section. The valid fraction is the weighted share of valid
/// cells; sections below `min_valid_fraction` are marked missing, and a
/// missing A0, P or C section is an error.
pub fn section_stats(map: &HeightMap, layout: &SectionLayout, min_valid_fraction: f64) -> Result<SectionStats> {
    let mut stats =
        SectionStats { mean: [None; SECTION_COUNT], std: [None; SECTION_COUNT], valid_fraction: [0.0; SECTION_COUNT] };
    for s in Section::ALL {
        let weights = layout.cell_weights(s, map.grid_size);
        let total: f64 = weights.iter().map(|(_, w)| w).sum();
        let valid: Vec<(f64, f64)> =
            weights.iter().filter(|(c, _)| map.valid[*c]).map(|&(c, w)| (map.heights[c], w)).collect();
        let wsum: f64 = valid.iter().map(|(_, w)| w).sum();
        let fraction = if total > 0.0 { wsum / total } else { 0.0 };
        stats.valid_fraction[s.index()] = fraction;
        if valid.is_empty() || fraction < min_valid_fraction {
            continue;
        }
        // Offsets from the first value keep constant maps exact.
        let h0 = valid[0].0;
        let mean = h0 + valid.iter().map(|(h, w)| w * (h - h0)).sum::<f64>() / wsum;
        let var = valid.iter().map(|(h, w)| w * (h - mean) * (h - mean)).sum::<f64>() / wsum;
        stats.mean[s.index()] = Some(mean);
        stats.std[s.index()] = Some(sqrt(var));
    }
    for s in Section::REQUIRED {
        if stats.mean[s.index()].is_none() {
            return Err(Error::FeatureFailure { section: s.name() });
        }
    }
    Ok(stats)
}

/// All 21 ratios `mean(j) / mean(i)` over [`section_pairs`].
pub fn pairwise_ratios(means: &[f64; SECTION_COUNT]) -> Result<[f64; PAIR_COUNT]> {
    for s in Section::ALL {
        let m = means[s.index()];
        if !(m > 0.0 && m.is_finite()) {
            return Err(Error::DivisionGuard { section: s.name() });
        }
    }
    let mut out = [0.0; PAIR_COUNT];
    for (o, (i, j)) in out.iter_mut().zip(section_pairs()) {
        *o = means[j.index()] / means[i.index()];
    }
    Ok(out)
}

fn optional_ratios(means: &[Option<f64>; SECTION_COUNT]) -> [Option<f64>; PAIR_COUNT] {
    let mut out = [None; PAIR_COUNT];
    for (o, (i, j)) in out.iter_mut().zip(section_pairs()) {
        *o = match (means[i.index()], means[j.index()]) {
            (Some(a), Some(b)) if a > 0.0 && b > 0.0 => Some(b / a),
            _ => None,
        };
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceStrategy {
    /// One reference per scan: the vertebra with the tallest central section.
    #[default]
    ScanMax,
    /// Per vertebra: the tallest central section among itself and its
    /// immediate label neighbours.
    Proximate,
}

/// Index of the reference vertebra for every entry of `scan`
/// (`(label, stats)` pairs). Ties go to the lower label.
pub fn select_reference(scan: &[(u32, SectionStats)], strategy: ReferenceStrategy) -> Result<Vec<usize>> {
    let usable: Vec<usize> =
        (0..scan.len()).filter(|&i| scan[i].1.mean_of(Section::C).is_some_and(|c| c > 0.0)).collect();
    if usable.len() < 2 {
        return Err(Error::ScanExcluded { valid_vertebrae: usable.len() });
    }
    let better = |a: usize, b: usize| -> usize {
        let (ca, cb) = (scan[a].1.mean_of(Section::C).unwrap(), scan[b].1.mean_of(Section::C).unwrap());
        if cb > ca || (cb == ca && scan[b].0 < scan[a].0) {
            b
        } else {
            a
        }
    };
    match strategy {
        ReferenceStrategy::ScanMax => {
            let best = usable.iter().copied().reduce(better).expect("non-empty");
            Ok(alloc::vec![best; scan.len()])
        }
        ReferenceStrategy::Proximate => Ok((0..scan.len())
            .map(|i| usable.iter().copied().filter(|&j| scan[j].0.abs_diff(scan[i].0) <= 1).reduce(better).unwrap_or(i))
            .collect()),
    }
}

/// Everything the rule layer can read about one vertebra.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub label: u32,
    pub section_mean: [Option<f64>; SECTION_COUNT],
    pub section_std: [Option<f64>; SECTION_COUNT],
    pub pair_ratio: [Option<f64>; PAIR_COUNT],
    pub ref_ratio: [Option<f64>; SECTION_COUNT],
    pub reference_label: Option<u32>,
    pub valid_cell_fraction: [f64; SECTION_COUNT],
}

impl FeatureVector {
    /// Vector without reference ratios.
    pub fn from_stats(label: u32, stats: &SectionStats) -> FeatureVector {
        FeatureVector {
            label,
            section_mean: stats.mean,
            section_std: stats.std,
            pair_ratio: optional_ratios(&stats.mean),
            ref_ratio: [None; SECTION_COUNT],
            reference_label: None,
            valid_cell_fraction: stats.valid_fraction,
        }
    }

    /// Fills `ref_ratio` as `mean(X) / mean(X̄)` against `reference`.
    pub fn set_reference(&mut self, reference_label: u32, reference: &SectionStats) {
        self.reference_label = Some(reference_label);
        for s in Section::ALL {
            self.ref_ratio[s.index()] = match (self.section_mean[s.index()], reference.mean[s.index()]) {
                (Some(a), Some(b)) if b > 0.0 => Some(a / b),
                _ => None,
            };
        }
    }

    /// Feature by schema name; `None` when unknown or missing.
    pub fn get(&self, name: &str) -> Option<f64> {
        let (kind, rest) = name.split_once('_')?;
        match kind {
            "mean" => self.section_mean[Section::from_name(rest)?.index()],
            "std" => self.section_std[Section::from_name(rest)?.index()],
            "ref" => self.ref_ratio[Section::from_name(rest)?.index()],
            "ratio" => {
                let (a, b) = rest.split_once('_')?;
                let (a, b) = (Section::from_name(a)?, Section::from_name(b)?);
                let k = section_pairs().iter().position(|&p| p == (a, b))?;
                self.pair_ratio[k]
            }
            _ => None,
        }
    }

    /// Values in [`feature_names`] order.
    pub fn values(&self, include_raw: bool) -> Vec<Option<f64>> {
        let mut out = Vec::with_capacity(60);
        if include_raw {
            out.extend_from_slice(&self.section_mean);
            out.extend_from_slice(&self.section_std);
        }
        out.extend_from_slice(&self.pair_ratio);
        out.extend_from_slice(&self.ref_ratio);
        out
    }
}

/// Ratio feature columns (21 pair ratios then 7 reference ratios),
/// optionally preceded by raw means and standard deviations.
pub fn feature_names(include_raw: bool) -> Vec<String> {
    let mut out = Vec::new();
    if include_raw {
        out.extend(Section::ALL.iter().map(|s| format!("mean_{}", s.name())));
        out.extend(Section::ALL.iter().map(|s| format!("std_{}", s.name())));
    }
    out.extend(section_pairs().iter().map(|(a, b)| format!("ratio_{}_{}", a.name(), b.name())));
    out.extend(Section::ALL.iter().map(|s| format!("ref_{}", s.name())));
    out
}

/// Human-readable form of a feature name, e.g. `ratio_P_A0` → `avg(A0)/avg(P)`.
pub fn display_name(name: &str) -> String {
    let Some((kind, rest)) = name.split_once('_') else {
        return name.into();
    };
    match kind {
        "mean" => format!("avg({rest})"),
        "std" => format!("std({rest})"),
        "ref" => format!("avg({rest})/avg({rest}\u{304})"),
        "ratio" => match rest.split_once('_') {
            Some((a, b)) => format!("avg({b})/avg({a})"),
            None => name.into(),
        },
        _ => name.into(),
    }
}

/// Feature vectors for every vertebra of one scan, with reference ratios.
pub fn build_feature_vectors(scan: &[(u32, SectionStats)], strategy: ReferenceStrategy) -> Result<Vec<FeatureVector>> {
    let refs = select_reference(scan, strategy)?;
    Ok(scan
        .iter()
        .zip(refs)
        .map(|((label, stats), r)| {
            let mut fv = FeatureVector::from_stats(*label, stats);
            fv.set_reference(scan[r].0, &scan[r].1);
            fv
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::heightmap::AxialBounds;

    const BOUNDS: AxialBounds = AxialBounds { u_min: 0.0, u_max: 1.0, v_min: 0.0, v_max: 1.0 };

    fn constant_map(g: usize, h: f64) -> HeightMap {
        HeightMap::from_cells(g, &alloc::vec![Some(h); g * g], BOUNDS).unwrap()
    }

    #[test]
    fn layout_regions_nonempty_and_bands_partition() {
        let layout = SectionLayout::default();
        for g in 8..=32 {
            for s in Section::ALL {
                assert!(!layout.cells(s, g).is_empty(), "{s:?} empty at G={g}");
            }
            let mut cover = alloc::vec![0.0; g * g];
            for s in [Section::P, Section::M, Section::A] {
                for (c, w) in layout.cell_weights(s, g) {
                    cover[c] += w;
                }
            }
            assert!(cover.iter().all(|w| (w - 1.0).abs() < 1e-12));
            let l = layout.cell_weights(Section::L, g);
            let r = layout.cell_weights(Section::R, g);
            let total = |v: &[(usize, f64)]| v.iter().map(|(_, w)| w).sum::<f64>();
            assert!((total(&l) + total(&r) - 2.0 / 3.0 * (g * g) as f64).abs() < 1e-9);
        }
    }

    #[test]
    fn default_layout_at_sixteen() {
        let layout = SectionLayout::default();
        let rows = |s| {
            let mut r: Vec<usize> = layout.cells(s, 16).iter().map(|c| c / 16).collect();
            r.dedup();
            r
        };
        assert_eq!(rows(Section::P), (0..6).collect::<Vec<_>>());
        assert_eq!(rows(Section::A), (10..16).collect::<Vec<_>>());
        let p5: Vec<f64> =
            layout.cell_weights(Section::P, 16).iter().filter(|(c, _)| c / 16 == 5).map(|x| x.1).collect();
        assert!(p5.iter().all(|w| (w - 1.0 / 3.0).abs() < 1e-12));
        let a0: f64 = layout.cell_weights(Section::A0, 16).iter().map(|x| x.1).sum();
        assert!((a0 - 256.0 / 9.0).abs() < 1e-9);
        let c = layout.cell_weights(Section::C, 16);
        assert_eq!(c.len(), 64);
        assert!(c.iter().all(|x| x.1 == 1.0));
    }

    #[test]
    fn constant_map_stats() {
        let st = section_stats(&constant_map(16, 25.0), &SectionLayout::default(), 0.3).unwrap();
        for s in Section::ALL {
            assert_eq!(st.mean_of(s), Some(25.0));
            assert_eq!(st.std[s.index()], Some(0.0));
            assert_eq!(st.valid_fraction[s.index()], 1.0);
        }
    }

    #[test]
    fn missing_required_section_fails() {
        let layout = SectionLayout::default();
        let g = 16;
        let a0 = layout.cells(Section::A0, g);
        let cells: Vec<Option<f64>> = (0..g * g).map(|c| (!a0.contains(&c)).then_some(20.0)).collect();
        let map = HeightMap::from_cells(g, &cells, BOUNDS).unwrap();
        assert_eq!(section_stats(&map, &layout, 0.3), Err(Error::FeatureFailure { section: "A0" }));
    }

    #[test]
    fn missing_lateral_section_is_carried() {
        let layout = SectionLayout::default();
        let g = 16;
        let l = layout.cells(Section::L, g);
        let cells: Vec<Option<f64>> = (0..g * g).map(|c| (!l.contains(&c)).then_some(20.0)).collect();
        let map = HeightMap::from_cells(g, &cells, BOUNDS).unwrap();
        let st = section_stats(&map, &layout, 0.3).unwrap();
        assert_eq!(st.mean_of(Section::L), None);
        let fv = FeatureVector::from_stats(1, &st);
        assert_eq!(fv.get("ratio_P_L"), None);
        assert_eq!(fv.get("ratio_L_R"), None);
        assert_eq!(fv.get(RATIO_A0_P), Some(1.0));
        assert_eq!(fv.get("mean_C"), Some(20.0));
    }

    #[test]
    fn pairwise_examples() {
        assert!(pairwise_ratios(&[7.0; 7]).unwrap().iter().all(|&r| r == 1.0));
        let mut means = [25.0; 7];
        means[Section::A0.index()] = 20.0;
        let r = pairwise_ratios(&means).unwrap();
        let k = section_pairs().iter().position(|&p| p == (Section::P, Section::A0)).unwrap();
        assert!((r[k] - 0.8).abs() < 1e-15);
        let doubled = pairwise_ratios(&means.map(|m| m * 2.0)).unwrap();
        assert_eq!(r, doubled);
        means[Section::M.index()] = 0.0;
        assert_eq!(pairwise_ratios(&means), Err(Error::DivisionGuard { section: "M" }));
    }

    #[test]
    fn canonical_pair_order() {
        let names = feature_names(false);
        assert_eq!(names.len(), 28);
        assert_eq!(
            &names[..7],
            &["ratio_P_M", "ratio_P_A", "ratio_P_L", "ratio_P_R", "ratio_P_C", "ratio_P_A0", "ratio_M_A"]
        );
        assert_eq!(names[20], "ratio_C_A0");
        assert_eq!(names[27], "ref_A0");
        assert_eq!(feature_names(true).len(), 42);
        assert_eq!(display_name(RATIO_A0_P), "avg(A0)/avg(P)");
        assert_eq!(display_name(REF_RATIO_C), "avg(C)/avg(C\u{304})");
    }

    fn stats_with_c(c: f64) -> SectionStats {
        let mut mean = [Some(20.0); 7];
        mean[Section::C.index()] = Some(c);
        SectionStats { mean, std: [Some(0.0); 7], valid_fraction: [1.0; 7] }
    }

    #[test]
    fn reference_selection() {
        let scan = [(20, stats_with_c(20.0)), (21, stats_with_c(25.0)), (22, stats_with_c(25.0))];
        assert_eq!(select_reference(&scan, ReferenceStrategy::ScanMax).unwrap(), alloc::vec![1, 1, 1]);
        let fvs = build_feature_vectors(&scan, ReferenceStrategy::ScanMax).unwrap();
        assert!(fvs[1].ref_ratio.iter().all(|&r| r == Some(1.0)));
        assert_eq!(fvs[0].get(REF_RATIO_C), Some(0.8));
        assert_eq!(fvs[2].reference_label, Some(21));
        assert_eq!(
            select_reference(&scan[..1], ReferenceStrategy::ScanMax),
            Err(Error::ScanExcluded { valid_vertebrae: 1 })
        );
        let far = [(5, stats_with_c(30.0)), (20, stats_with_c(20.0)), (21, stats_with_c(22.0))];
        assert_eq!(select_reference(&far, ReferenceStrategy::Proximate).unwrap(), alloc::vec![0, 2, 2]);
    }
}
