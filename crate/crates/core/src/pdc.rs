//! Pairwise dependency conditions (PDCs) between feature columns.
//!
//! For features i ≠ j, each condition must hold on every row:
//! - PDC1: z_i = 1 ⇒ z_j = 0 (disjoint features)
//! - PDC2: z_i = 1 ⇒ z_j = 1 (z_i is contained in z_j)
//! - PDC3: z_i = 0 ⇒ z_j = 0 (z_j is contained in z_i)
//!
//! Any one of them makes the factorization non-identifiable.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::BinaryMatrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PdcKind {
    Pdc1,
    Pdc2,
    Pdc3,
}

impl PdcKind {
    pub const ALL: [PdcKind; 3] = [PdcKind::Pdc1, PdcKind::Pdc2, PdcKind::Pdc3];

    /// Whether rows with (z_i, z_j) = (a, b) are allowed.
    pub fn allows(self, a: bool, b: bool) -> bool {
        match self {
            PdcKind::Pdc1 => !(a && b),
            PdcKind::Pdc2 => !(a && !b),
            PdcKind::Pdc3 => !(!a && b),
        }
    }
}

impl fmt::Display for PdcKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            PdcKind::Pdc1 => "PDC1",
            PdcKind::Pdc2 => "PDC2",
            PdcKind::Pdc3 => "PDC3",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum ColumnState {
    AllZero,
    AllOne,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct PdcPair {
    pub i: usize,
    pub j: usize,
    pub kind: PdcKind,
    /// Either column is constant, so the implication may hold vacuously.
    pub degenerate: bool,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct PdcOptions {
    /// Leave pairs touching a constant column out of the count and ratio.
    pub exclude_degenerate: bool,
}

impl Default for PdcOptions {
    fn default() -> Self {
        Self { exclude_degenerate: true }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct PdcReport {
    pub k: usize,
    /// Every ordered pair and kind for which the condition holds.
    pub pairs: Vec<PdcPair>,
    /// K(K−1)/2.
    pub n_pairs_total: usize,
    /// Unordered pairs entering the ratio denominator.
    pub n_pairs_eligible: usize,
    /// Unordered eligible pairs with at least one PDC in either direction.
    pub pdc_pair_count: usize,
    /// `pdc_pair_count / n_pairs_eligible`, or `None` when no pair is eligible.
    pub pdc_ratio: Option<f64>,
    pub pdc1: usize,
    pub pdc2: usize,
    pub pdc3: usize,
    pub constant_columns: Vec<(usize, ColumnState)>,
}

impl PdcReport {
    /// Unordered pairs (min, max) with at least one eligible PDC.
    pub fn unordered_pairs(&self, opts: PdcOptions) -> BTreeSet<(usize, usize)> {
        self.pairs
            .iter()
            .filter(|p| !(opts.exclude_degenerate && p.degenerate))
            .map(|p| (p.i.min(p.j), p.i.max(p.j)))
            .collect()
    }

    pub fn holds(&self, i: usize, j: usize, kind: PdcKind) -> bool {
        self.pairs.iter().any(|p| p.i == i && p.j == j && p.kind == kind)
    }
}

fn column_bitsets(z: &BinaryMatrix) -> Vec<Vec<u64>> {
    let words = z.rows().div_ceil(64);
    let mut cols = vec![vec![0u64; words]; z.cols()];
    for n in 0..z.rows() {
        for (k, &bit) in z.row(n).iter().enumerate() {
            if bit == 1 {
                cols[k][n / 64] |= 1 << (n % 64);
            }
        }
    }
    cols
}

pub fn detect_pdc(z: &BinaryMatrix) -> PdcReport {
    detect_pdc_with(z, PdcOptions::default())
}

pub fn detect_pdc_with(z: &BinaryMatrix, opts: PdcOptions) -> PdcReport {
    let (n, k) = z.shape();
    let cols = column_bitsets(z);
    let tail_mask = if n % 64 == 0 { u64::MAX } else { (1u64 << (n % 64)) - 1 };
    let words = cols.first().map_or(0, Vec::len);
    let valid = |w: usize| if w + 1 == words { tail_mask } else { u64::MAX };

    let ones: Vec<u32> = cols.iter().map(|c| c.iter().map(|w| w.count_ones()).sum()).collect();
    let constant: Vec<Option<ColumnState>> = ones
        .iter()
        .map(|&c| match c as usize {
            0 => Some(ColumnState::AllZero),
            c if c == n => Some(ColumnState::AllOne),
            _ => None,
        })
        .collect();

    // any row with (z_i, z_j) = pattern?
    let any = |i: usize, j: usize, a: bool, b: bool| {
        (0..words).any(|w| {
            let x = if a { cols[i][w] } else { !cols[i][w] };
            let y = if b { cols[j][w] } else { !cols[j][w] };
            x & y & valid(w) != 0
        })
    };

    let mut pairs = Vec::new();
    for i in 0..k {
        for j in 0..k {
            if i == j {
                continue;
            }
            let degenerate = constant[i].is_some() || constant[j].is_some();
            if !any(i, j, true, true) {
                pairs.push(PdcPair { i, j, kind: PdcKind::Pdc1, degenerate });
            }
            if !any(i, j, true, false) {
                pairs.push(PdcPair { i, j, kind: PdcKind::Pdc2, degenerate });
            }
            if !any(i, j, false, true) {
                pairs.push(PdcPair { i, j, kind: PdcKind::Pdc3, degenerate });
            }
        }
    }

    let count_kind = |kind| pairs.iter().filter(|p| p.kind == kind && !(opts.exclude_degenerate && p.degenerate)).count();
    let n_constant = constant.iter().filter(|c| c.is_some()).count();
    let n_pairs_total = k * k.saturating_sub(1) / 2;
    let n_pairs_eligible = if opts.exclude_degenerate {
        let m = k - n_constant;
        m * m.saturating_sub(1) / 2
    } else {
        n_pairs_total
    };
    let mut report = PdcReport {
        k,
        pdc1: count_kind(PdcKind::Pdc1),
        pdc2: count_kind(PdcKind::Pdc2),
        pdc3: count_kind(PdcKind::Pdc3),
        pairs: Vec::new(),
        n_pairs_total,
        n_pairs_eligible,
        pdc_pair_count: 0,
        pdc_ratio: None,
        constant_columns: constant.iter().enumerate().filter_map(|(i, c)| c.map(|c| (i, c))).collect(),
    };
    report.pairs = pairs;
    report.pdc_pair_count = report.unordered_pairs(opts).len();
    report.pdc_ratio = (n_pairs_eligible > 0).then(|| report.pdc_pair_count as f64 / n_pairs_eligible as f64);
    report
}

/// Unordered pairs forced to satisfy some PDC by composing the given ones:
/// containment is transitive, and a subset of a feature disjoint from another
/// is disjoint from it too. The input pairs themselves are included.
pub fn composition_closure(pairs: &[(usize, usize, PdcKind)]) -> BTreeSet<(usize, usize)> {
    let mut subset: HashSet<(usize, usize)> = HashSet::new();
    let mut disjoint: HashSet<(usize, usize)> = HashSet::new();
    for &(i, j, kind) in pairs {
        match kind {
            PdcKind::Pdc1 => {
                disjoint.insert((i, j));
                disjoint.insert((j, i));
            }
            PdcKind::Pdc2 => {
                subset.insert((i, j));
            }
            PdcKind::Pdc3 => {
                subset.insert((j, i));
            }
        }
    }
    loop {
        let mut added = false;
        let subs: Vec<_> = subset.iter().copied().collect();
        for &(a, b) in &subs {
            for &(c, d) in &subs {
                if b == c && a != d && subset.insert((a, d)) {
                    added = true;
                }
            }
            let disj: Vec<_> = disjoint.iter().copied().collect();
            for (c, d) in disj {
                if b == c && a != d && disjoint.insert((a, d)) {
                    disjoint.insert((d, a));
                    added = true;
                }
            }
        }
        if !added {
            break;
        }
    }
    subset
        .iter()
        .chain(disjoint.iter())
        .map(|&(a, b)| (a.min(b), a.max(b)))
        .collect()
}

#[derive(Clone, Debug)]
pub struct MultilabelOptions {
    /// Separator between the label field and any trailing feature tokens.
    pub delimiter: char,
    /// Number of labels; inferred as max index + 1 when absent.
    pub declared_k: Option<usize>,
}

impl Default for MultilabelOptions {
    fn default() -> Self {
        Self { delimiter: ' ', declared_k: None }
    }
}

/// Parses a sparse label-list file: one instance per line, comma-separated
/// 0-based label indices first, anything after the delimiter ignored. An
/// optional first line `# K=<n>` declares the label count.
pub fn parse_multilabel(text: &str, opts: &MultilabelOptions) -> Result<BinaryMatrix> {
    let mut declared = opts.declared_k;
    let mut rows: Vec<Vec<usize>> = Vec::new();
    let body = text.strip_suffix('\n').unwrap_or(text);
    for (idx, raw) in body.split('\n').enumerate() {
        let line_no = idx + 1;
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if idx == 0 {
            if let Some(header) = line.trim().strip_prefix('#') {
                let value = header.trim().strip_prefix("K=").ok_or_else(|| Error::Parse {
                    line: line_no,
                    message: format!("unrecognized header {line:?}"),
                })?;
                let k = value.trim().parse::<usize>().map_err(|_| Error::Parse {
                    line: line_no,
                    message: format!("invalid label count {value:?}"),
                })?;
                declared = declared.or(Some(k));
                continue;
            }
        }
        let field = line.split(opts.delimiter).next().unwrap_or("").trim();
        let mut labels = Vec::new();
        if !field.is_empty() && !field.contains(':') {
            for token in field.split(',') {
                let label = token.trim().parse::<usize>().map_err(|_| Error::Parse {
                    line: line_no,
                    message: format!("label {token:?} is not a nonnegative integer"),
                })?;
                if let Some(k) = declared {
                    if label >= k {
                        return Err(Error::Parse {
                            line: line_no,
                            message: format!("label {label} out of range for K = {k}"),
                        });
                    }
                }
                labels.push(label);
            }
        }
        rows.push(labels);
    }
    if body.is_empty() || rows.is_empty() {
        return Err(Error::Parse { line: 1, message: "no instances".into() });
    }
    let k = match declared {
        Some(k) => k,
        None => rows.iter().flatten().max().map(|m| m + 1).ok_or_else(|| Error::Parse {
            line: 1,
            message: "no labels present and no declared K".into(),
        })?,
    };
    let mut z = BinaryMatrix::zeros(rows.len(), k.max(1));
    for (n, labels) in rows.iter().enumerate() {
        for &l in labels {
            z.set(n, l, true);
        }
    }
    Ok(z)
}

pub fn read_multilabel(path: impl AsRef<Path>, opts: &MultilabelOptions) -> Result<BinaryMatrix> {
    parse_multilabel(&fs::read_to_string(path)?, opts)
}

/// Label-list form of a binary matrix (inverse of `parse_multilabel`).
pub fn format_multilabel(z: &BinaryMatrix) -> String {
    let mut out = format!("# K={}\n", z.cols());
    for n in 0..z.rows() {
        let labels: Vec<String> = (0..z.cols()).filter(|&k| z.get(n, k) == 1).map(|k| k.to_string()).collect();
        out.push_str(&labels.join(","));
        out.push('\n');
    }
    out
}

#[derive(Clone, Debug, Serialize)]
pub struct SurveyRow {
    pub name: String,
    pub n: usize,
    pub k: usize,
    pub pdc_pair_count: usize,
    pub pdc_ratio: Option<f64>,
    pub error: Option<String>,
}

/// One row per dataset; failures are recorded on the row and the survey goes on.
pub fn survey<P: AsRef<Path>>(datasets: &[(String, P)], parse: &MultilabelOptions, opts: PdcOptions) -> Vec<SurveyRow> {
    datasets
        .iter()
        .map(|(name, path)| match read_multilabel(path, parse) {
            Ok(z) => {
                let report = detect_pdc_with(&z, opts);
                SurveyRow {
                    name: name.clone(),
                    n: z.rows(),
                    k: z.cols(),
                    pdc_pair_count: report.pdc_pair_count,
                    pdc_ratio: report.pdc_ratio,
                    error: None,
                }
            }
            Err(e) => SurveyRow {
                name: name.clone(),
                n: 0,
                k: 0,
                pdc_pair_count: 0,
                pdc_ratio: None,
                error: Some(e.to_string()),
            },
        })
        .collect()
}

pub fn survey_csv(rows: &[SurveyRow]) -> String {
    let mut out = String::from("name,n,k,pdc_pair_count,pdc_ratio,error\n");
    for r in rows {
        let ratio = r.pdc_ratio.map(|v| format!("{v:.6}")).unwrap_or_default();
        let error = r.error.as_deref().unwrap_or("").replace([',', '\n'], ";");
        out.push_str(&format!("{},{},{},{},{},{}\n", r.name, r.n, r.k, r.pdc_pair_count, ratio, error));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn complementary_columns_are_disjoint_both_ways() {
        let z = BinaryMatrix::from_rows(&[vec![1, 0, 1], vec![0, 1, 1], vec![1, 0, 0], vec![0, 1, 0]]).unwrap();
        let r = detect_pdc(&z);
        assert!(r.holds(0, 1, PdcKind::Pdc1) && r.holds(1, 0, PdcKind::Pdc1));
        assert!(!r.holds(0, 2, PdcKind::Pdc1));
    }

    #[test]
    fn containment_is_pdc2() {
        // cats ⊆ mammals
        let cats = [1, 0, 0, 1, 0];
        let mammals = [1, 1, 0, 1, 0];
        let z = BinaryMatrix::from_fn(5, 2, |n, k| if k == 0 { cats[n] == 1 } else { mammals[n] == 1 });
        let r = detect_pdc(&z);
        assert!(r.holds(0, 1, PdcKind::Pdc2));
        assert!(r.holds(1, 0, PdcKind::Pdc3));
        assert!(!r.holds(1, 0, PdcKind::Pdc2));
        assert_eq!(r.pdc_pair_count, 1);
        assert_eq!(r.pdc_ratio, Some(1.0));
    }

    #[test]
    fn all_patterns_have_no_pdc() {
        for k in 2..=6 {
            let z = BinaryMatrix::from_fn(1 << k, k, |n, j| (n >> j) & 1 == 1);
            let r = detect_pdc(&z);
            assert!(r.pairs.is_empty());
            assert_eq!(r.pdc_ratio, Some(0.0));
        }
    }

    #[test]
    fn constant_columns_are_degenerate() {
        let z = BinaryMatrix::from_rows(&[vec![1, 0, 1], vec![0, 0, 1], vec![1, 0, 1]]).unwrap();
        let r = detect_pdc(&z);
        assert_eq!(r.constant_columns, vec![(1, ColumnState::AllZero), (2, ColumnState::AllOne)]);
        assert!(r.pairs.iter().filter(|p| p.i == 0 && p.j == 2).any(|p| p.kind == PdcKind::Pdc2 && p.degenerate));
        assert_eq!(r.n_pairs_eligible, 0);
        assert_eq!(r.pdc_ratio, None);
        let all = detect_pdc_with(&z, PdcOptions { exclude_degenerate: false });
        assert_eq!(all.pdc_pair_count, 3);
        assert_eq!(all.pdc_ratio, Some(1.0));
    }

    #[test]
    fn single_instance_ratio_is_null() {
        let z = BinaryMatrix::from_rows(&[vec![1, 0, 1, 0]]).unwrap();
        assert_eq!(detect_pdc(&z).pdc_ratio, None);
    }

    #[test]
    fn composition_of_containment() {
        let implied = composition_closure(&[(0, 1, PdcKind::Pdc2), (1, 2, PdcKind::Pdc2), (3, 2, PdcKind::Pdc1)]);
        for p in [(0, 1), (1, 2), (0, 2), (2, 3), (1, 3), (0, 3)] {
            assert!(implied.contains(&p), "{p:?}");
        }
        assert_eq!(implied.len(), 6);
    }

    #[test]
    fn multilabel_examples() {
        let opts = MultilabelOptions { declared_k: Some(3), ..Default::default() };
        let z = parse_multilabel("0,2\n1\n", &opts).unwrap();
        assert_eq!(z, BinaryMatrix::from_rows(&[vec![1, 0, 1], vec![0, 1, 0]]).unwrap());
        let z = parse_multilabel("0 1:0.5 2:1\n 3:0.1\n2,1\n", &MultilabelOptions::default()).unwrap();
        assert_eq!(z, BinaryMatrix::from_rows(&[vec![1, 0, 0], vec![0, 0, 0], vec![0, 1, 1]]).unwrap());
        let z = parse_multilabel("# K=4\n1\n\n", &MultilabelOptions::default()).unwrap();
        assert_eq!(z.shape(), (2, 4));
    }

    #[test]
    fn multilabel_errors_name_the_line() {
        let opts = MultilabelOptions { declared_k: Some(3), ..Default::default() };
        assert!(matches!(parse_multilabel("0\n1,x\n", &opts), Err(Error::Parse { line: 2, .. })));
        assert!(matches!(parse_multilabel("0\n1\n3\n", &opts), Err(Error::Parse { line: 3, .. })));
        assert!(parse_multilabel("", &MultilabelOptions::default()).is_err());
    }

    #[test]
    fn survey_continues_past_bad_dataset() {
        let dir = tempfile::tempdir().unwrap();
        let good = dir.path().join("good.txt");
        std::fs::write(&good, "0\n1\n0,1\n\n").unwrap();
        let rows = survey(
            &[("good".to_string(), good), ("missing".to_string(), dir.path().join("nope.txt"))],
            &MultilabelOptions::default(),
            PdcOptions::default(),
        );
        assert_eq!(rows[0].k, 2);
        assert_eq!(rows[0].pdc_pair_count, 0);
        assert!(rows[1].error.is_some());
        let csv = survey_csv(&rows);
        assert!(csv.starts_with("name,n,k,pdc_pair_count,pdc_ratio"));
    }

    proptest! {
        #[test]
        fn pdc2_is_pdc3_reversed(bits in prop::collection::vec(any::<bool>(), 40)) {
            let z = BinaryMatrix::from_fn(10, 4, |n, k| bits[n * 4 + k]);
            let r = detect_pdc(&z);
            for i in 0..4 {
                for j in 0..4 {
                    if i != j {
                        prop_assert_eq!(r.holds(i, j, PdcKind::Pdc2), r.holds(j, i, PdcKind::Pdc3));
                    }
                }
            }
        }

        #[test]
        fn invariant_under_row_permutation(bits in prop::collection::vec(any::<bool>(), 36), seed in 0u64..1000) {
            let z = BinaryMatrix::from_fn(12, 3, |n, k| bits[n * 3 + k]);
            let mut order: Vec<usize> = (0..12).collect();
            let mut s = seed;
            for i in (1..12).rev() {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1);
                order.swap(i, (s >> 33) as usize % (i + 1));
            }
            let shuffled = z.select_rows(&order);
            prop_assert_eq!(detect_pdc(&z).pairs, detect_pdc(&shuffled).pairs);
        }

        #[test]
        fn label_list_round_trips(bits in prop::collection::vec(any::<bool>(), 30)) {
            let z = BinaryMatrix::from_fn(6, 5, |n, k| bits[n * 5 + k]);
            let back = parse_multilabel(&format_multilabel(&z), &MultilabelOptions::default()).unwrap();
            prop_assert_eq!(back, z);
        }
    }
}
