//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use vcfscan_core::features::{Section, SectionLayout, SECTION_COUNT};
use vcfscan_core::phantom::HeightField;

/// Area-weighted mean height of every section, integrating the closed-form
/// field over `section ∩ footprint` with an `n × n` midpoint rule on the
/// footprint's bounding box.
pub fn analytic_section_means(field: &HeightField, layout: &SectionLayout, n: usize) -> [f64; SECTION_COUNT] {
    let (ru, rv) = (field.radius_lateral, field.radius_ap);
    let mut sum = [0.0; SECTION_COUNT];
    let mut area = [0.0; SECTION_COUNT];
    for i in 0..n {
        for j in 0..n {
            let un = (i as f64 + 0.5) / n as f64;
            let vn = (j as f64 + 0.5) / n as f64;
            let Some(h) = field.height(-ru + 2.0 * ru * un, -rv + 2.0 * rv * vn) else {
                continue;
            };
            for s in Section::ALL {
                if layout.region(s).contains(un, vn) {
                    sum[s.index()] += h;
                    area[s.index()] += 1.0;
                }
            }
        }
    }
    let mut out = [0.0; SECTION_COUNT];
    for k in 0..SECTION_COUNT {
        out[k] = sum[k] / area[k];
    }
    out
}

/// `mean(b) / mean(a)` for two sections.
pub fn analytic_ratio(field: &HeightField, a: Section, b: Section) -> f64 {
    let m = analytic_section_means(field, &SectionLayout::default(), 800);
    m[b.index()] / m[a.index()]
}
