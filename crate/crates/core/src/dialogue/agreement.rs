//! Agreement level between the two code spaces.
//!
//! Codes are quantized componentwise at a threshold into bit patterns. A
//! sample agrees when its pattern pair `(p1, p2)` occurs at least twice and
//! `p2` is the unique most frequent partner of `p1`.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::translator::CodePairSet;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CoOccurrence {
    pub first: String,
    pub second: String,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AgreementReport {
    /// Completed epochs when the codes were taken.
    pub epoch: usize,
    pub level: f64,
    pub threshold: f64,
    /// Pattern pairs by descending count, ties in pattern order.
    pub table: Vec<CoOccurrence>,
}

impl AgreementReport {
    pub fn samples(&self) -> usize {
        self.table.iter().map(|c| c.count).sum()
    }
}

pub fn quantize(code: &[f64], threshold: f64) -> String {
    code.iter().map(|v| if *v > threshold { '1' } else { '0' }).collect()
}

pub fn agreement_level(pairs: &CodePairSet, threshold: f64, epoch: usize) -> AgreementReport {
    let mut counts: BTreeMap<(String, String), usize> = BTreeMap::new();
    for (a, b) in pairs.first.iter().zip(&pairs.second) {
        *counts
            .entry((quantize(a, threshold), quantize(b, threshold)))
            .or_default() += 1;
    }
    // unique majority partner of every first pattern
    let mut best: BTreeMap<&str, (usize, Option<&str>)> = BTreeMap::new();
    for ((p1, p2), &n) in &counts {
        let entry = best.entry(p1.as_str()).or_insert((0, None));
        if n > entry.0 {
            *entry = (n, Some(p2.as_str()));
        } else if n == entry.0 {
            entry.1 = None;
        }
    }
    let agreeing: usize = counts
        .iter()
        .filter(|((p1, p2), &n)| n >= 2 && best[p1.as_str()].1 == Some(p2.as_str()))
        .map(|(_, &n)| n)
        .sum();
    let mut table: Vec<CoOccurrence> = counts
        .iter()
        .map(|((a, b), &count)| CoOccurrence {
            first: a.clone(),
            second: b.clone(),
            count,
        })
        .collect();
    table.sort_by(|x, y| y.count.cmp(&x.count).then_with(|| (&x.first, &x.second).cmp(&(&y.first, &y.second))));
    AgreementReport {
        epoch,
        level: if pairs.is_empty() { 0.0 } else { agreeing as f64 / pairs.len() as f64 },
        threshold,
        table,
    }
}
