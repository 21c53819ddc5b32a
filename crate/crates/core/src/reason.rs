//! Path verification and linear re-ranking over discovered formulas.
//!
//! A formula r₁ → … → rₙ holds for a pair (s, t) when some walk from s
//! to t follows exactly that relation sequence. Verification runs a
//! bi-directional search: a left frontier grows from s consuming the
//! formula front-to-back, a right frontier grows from t consuming it
//! back-to-front along inverse edges, and whichever frontier is
//! currently smaller expands next. The formula holds iff the frontiers
//! intersect once every relation is consumed.
//!
//! Verification results become binary features — entry (i, j) is 1 iff
//! formula j holds for pair i — and a ridge-regularized least-squares
//! model over those features scores candidate pairs for ranking.

use std::collections::BTreeSet;
use std::io::{BufRead, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::kg::{format_formula, parse_formula, EntityId, KnowledgeGraph, PathFormula};

/// Knobs for [`bidirectional_verify_with`].
#[derive(Clone, Copy, Debug)]
pub struct VerifyOptions {
    /// Abort with an overflow flag when a frontier would exceed this.
    pub frontier_cap: usize,
    /// Expand the right frontier when sizes tie (left by default). The
    /// final result must not depend on this; it exists so tests can
    /// check that invariance.
    pub expand_right_on_tie: bool,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            frontier_cap: 1_000_000,
            expand_right_on_tie: false,
        }
    }
}

/// Outcome of a capped verification.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Verification {
    pub holds: bool,
    /// True when a frontier exceeded the cap and the search gave up;
    /// `holds` is then reported as false.
    pub overflowed: bool,
}

/// [`bidirectional_verify_with`] under default options, reduced to the
/// plain boolean.
pub fn bidirectional_verify(
    kg: &KnowledgeGraph,
    formula: &PathFormula,
    source: EntityId,
    target: EntityId,
) -> Result<bool> {
    Ok(bidirectional_verify_with(kg, formula, source, target, &VerifyOptions::default())?.holds)
}

/// Checks whether `formula` connects `source` to `target`, expanding the
/// smaller frontier each round. On graphs without inverse closure the
/// right frontier cannot expand, so the search degrades to forward-only
/// expansion from the left.
pub fn bidirectional_verify_with(
    kg: &KnowledgeGraph,
    formula: &PathFormula,
    source: EntityId,
    target: EntityId,
    options: &VerifyOptions,
) -> Result<Verification> {
    if formula.is_empty() {
        return Err(Error::EmptyPath);
    }
    kg.entity_name(source)?;
    kg.entity_name(target)?;
    for &rel in formula.iter() {
        kg.relation_name(rel)?;
    }
    let relations = formula.relations();
    let mut left: BTreeSet<EntityId> = BTreeSet::new();
    left.insert(source);
    let mut right: BTreeSet<EntityId> = BTreeSet::new();
    right.insert(target);
    let mut lo = 0usize; // next relation the left side consumes
    let mut hi = relations.len(); // one past the last the right side consumes
    while lo < hi {
        if left.is_empty() || right.is_empty() {
            return Ok(Verification {
                holds: false,
                overflowed: false,
            });
        }
        let expand_right = kg.is_inverse_closed()
            && (right.len() < left.len()
                || (right.len() == left.len() && options.expand_right_on_tie));
        let next = if expand_right {
            hi -= 1;
            let inverse = kg.inverse_of(relations[hi])?;
            expand_frontier(kg, &right, inverse)?
        } else {
            let relation = relations[lo];
            lo += 1;
            expand_frontier(kg, &left, relation)?
        };
        if next.len() > options.frontier_cap {
            return Ok(Verification {
                holds: false,
                overflowed: true,
            });
        }
        if expand_right {
            right = next;
        } else {
            left = next;
        }
    }
    Ok(Verification {
        holds: left.intersection(&right).next().is_some(),
        overflowed: false,
    })
}

fn expand_frontier(
    kg: &KnowledgeGraph,
    frontier: &BTreeSet<EntityId>,
    relation: crate::kg::RelationId,
) -> Result<BTreeSet<EntityId>> {
    let mut next = BTreeSet::new();
    for &entity in frontier {
        next.extend(kg.neighbors(entity, relation)?.iter().copied());
    }
    Ok(next)
}

/// A candidate (source, target) pair with its ground-truth label.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LabeledPair {
    pub source: EntityId,
    pub target: EntityId,
    pub positive: bool,
}

/// Binary features: one row per pair, one column per formula; entry
/// (i, j) is 1.0 exactly when formula j verifies for pair i.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatrix {
    formulas: Vec<PathFormula>,
    pairs: Vec<LabeledPair>,
    rows: Vec<Vec<f64>>,
}

impl FeatureMatrix {
    pub fn formulas(&self) -> &[PathFormula] {
        &self.formulas
    }

    pub fn pairs(&self) -> &[LabeledPair] {
        &self.pairs
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i]
    }

    pub fn pair_count(&self) -> usize {
        self.pairs.len()
    }

    pub fn formula_count(&self) -> usize {
        self.formulas.len()
    }
}

/// Verifies every formula against every pair. Overflowed verifications
/// count as 0. Column j of the result corresponds to `formulas[j]`, so
/// permuting the formulas permutes the columns identically.
pub fn extract_features(
    kg: &KnowledgeGraph,
    formulas: &[PathFormula],
    pairs: &[LabeledPair],
) -> Result<FeatureMatrix> {
    if formulas.is_empty() {
        return Err(Error::EmptyInput(
            "no formulas to extract features from".into(),
        ));
    }
    let options = VerifyOptions::default();
    let mut rows = Vec::with_capacity(pairs.len());
    for pair in pairs {
        let mut row = Vec::with_capacity(formulas.len());
        for formula in formulas {
            let v = bidirectional_verify_with(kg, formula, pair.source, pair.target, &options)?;
            row.push(if v.holds { 1.0 } else { 0.0 });
        }
        rows.push(row);
    }
    Ok(FeatureMatrix {
        formulas: formulas.to_vec(),
        pairs: pairs.to_vec(),
        rows,
    })
}

/// Affine scorer over formula features: one weight per formula plus an
/// unpenalized bias.
#[derive(Clone, Debug, PartialEq)]
pub struct RerankModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    /// Set when the training rows were all identical and the model fell
    /// back to predicting the mean label.
    pub degenerate: bool,
}

/// Fits ridge-regularized least squares of ±1 labels on the feature
/// rows; the bias column is not penalized. Requires at least one
/// positive and one negative row. All-identical rows carry no signal,
/// so that case yields a bias-only mean-label model flagged degenerate.
pub fn fit_rerank(features: &FeatureMatrix, l2: f64) -> Result<RerankModel> {
    if !(l2 >= 0.0 && l2.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "ridge strength must be finite and ≥ 0, got {l2}"
        )));
    }
    let positives = features.pairs.iter().filter(|p| p.positive).count();
    let negatives = features.pair_count() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::InvalidArgument(
            "re-ranking needs at least one positive and one negative row".into(),
        ));
    }
    let labels: Vec<f64> = features
        .pairs
        .iter()
        .map(|p| if p.positive { 1.0 } else { -1.0 })
        .collect();
    let k = features.formula_count();
    if features.rows.iter().all(|r| r == &features.rows[0]) {
        let mean = labels.iter().sum::<f64>() / labels.len() as f64;
        return Ok(RerankModel {
            weights: vec![0.0; k],
            bias: mean,
            degenerate: true,
        });
    }
    // Normal equations over [features | 1], ridge on the k weight
    // coordinates only.
    let n = k + 1;
    let mut a = vec![vec![0.0f64; n]; n];
    let mut b = vec![0.0f64; n];
    for (row, &y) in features.rows.iter().zip(&labels) {
        for i in 0..n {
            let xi = if i < k { row[i] } else { 1.0 };
            b[i] += xi * y;
            for j in 0..n {
                let xj = if j < k { row[j] } else { 1.0 };
                a[i][j] += xi * xj;
            }
        }
    }
    for (i, row) in a.iter_mut().enumerate().take(k) {
        row[i] += l2;
    }
    let solution = solve_linear_system(a, b)?;
    Ok(RerankModel {
        weights: solution[..k].to_vec(),
        bias: solution[k],
        degenerate: false,
    })
}

/// Gaussian elimination with partial pivoting; errors on a numerically
/// singular system.
fn solve_linear_system(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Result<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .expect("nonempty range");
        if a[pivot][col].abs() < 1e-12 {
            return Err(Error::Degenerate(
                "singular normal equations; increase ridge strength".into(),
            ));
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let factor = a[row][col] / a[col][col];
            if factor == 0.0 {
                continue;
            }
            for j in col..n {
                a[row][j] -= factor * a[col][j];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = vec![0.0f64; n];
    for col in (0..n).rev() {
        let mut sum = b[col];
        for j in col + 1..n {
            sum -= a[col][j] * x[j];
        }
        x[col] = sum / a[col][col];
    }
    Ok(x)
}

/// Scores every row of `features` with `model`; errors when the column
/// count does not match the weight count.
pub fn score_pairs(model: &RerankModel, features: &FeatureMatrix) -> Result<Vec<f64>> {
    if model.weights.len() != features.formula_count() {
        return Err(Error::DimensionMismatch {
            expected: model.weights.len(),
            got: features.formula_count(),
        });
    }
    Ok(features
        .rows
        .iter()
        .map(|row| {
            row.iter()
                .zip(&model.weights)
                .map(|(x, w)| x * w)
                .sum::<f64>()
                + model.bias
        })
        .collect())
}

/// Writes one formula per line, relation names joined by " -> ".
pub fn write_formulas<W: Write>(
    w: &mut W,
    kg: &KnowledgeGraph,
    formulas: &[PathFormula],
) -> Result<()> {
    for f in formulas {
        writeln!(w, "{}", format_formula(kg, f)?)?;
    }
    Ok(())
}

/// Reads a file written by [`write_formulas`]; blank and `#` lines are
/// skipped.
pub fn read_formulas<R: BufRead>(r: &mut R, kg: &KnowledgeGraph) -> Result<Vec<PathFormula>> {
    let mut formulas = Vec::new();
    for line in r.lines() {
        let line = line?;
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        formulas.push(parse_formula(kg, &line)?);
    }
    Ok(formulas)
}

/// Exports the matrix: a header line of tab-joined formula strings,
/// then `source<TAB>target<TAB>label<TAB>f₁,…,f_k` per pair with the
/// label written as 1 or -1.
pub fn write_feature_matrix<W: Write>(
    w: &mut W,
    kg: &KnowledgeGraph,
    features: &FeatureMatrix,
) -> Result<()> {
    let header: Vec<String> = features
        .formulas
        .iter()
        .map(|f| format_formula(kg, f))
        .collect::<Result<_>>()?;
    writeln!(w, "{}", header.join("\t"))?;
    for (pair, row) in features.pairs.iter().zip(&features.rows) {
        let cells: Vec<String> = row.iter().map(|&v| format!("{}", v as i64)).collect();
        writeln!(
            w,
            "{}\t{}\t{}\t{}",
            kg.entity_name(pair.source)?,
            kg.entity_name(pair.target)?,
            if pair.positive { 1 } else { -1 },
            cells.join(",")
        )?;
    }
    Ok(())
}

/// Reads a file written by [`write_feature_matrix`].
pub fn read_feature_matrix<R: BufRead>(
    r: &mut R,
    kg: &KnowledgeGraph,
    origin: &Path,
) -> Result<FeatureMatrix> {
    let mut lines = r.lines();
    let header = loop {
        match lines.next() {
            Some(line) => {
                let line = line?;
                if !line.starts_with('#') {
                    break line;
                }
            }
            None => return Err(Error::format(origin, "missing formula header")),
        }
    };
    let formulas: Vec<PathFormula> = header
        .split('\t')
        .map(|s| parse_formula(kg, s))
        .collect::<Result<_>>()?;
    let mut pairs = Vec::new();
    let mut rows = Vec::new();
    for (idx, line) in lines.enumerate() {
        let line = line?;
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let lineno = idx + 2;
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 4 {
            return Err(Error::parse(origin, lineno, "expected 4 tab-separated fields"));
        }
        let positive = match fields[2] {
            "1" | "+1" => true,
            "-1" => false,
            other => {
                return Err(Error::parse(origin, lineno, format!("bad label `{other}`")))
            }
        };
        let row: Vec<f64> = fields[3]
            .split(',')
            .map(|c| match c {
                "0" => Ok(0.0),
                "1" => Ok(1.0),
                other => Err(Error::parse(
                    origin,
                    lineno,
                    format!("feature entries must be 0 or 1, got `{other}`"),
                )),
            })
            .collect::<Result<_>>()?;
        if row.len() != formulas.len() {
            return Err(Error::parse(
                origin,
                lineno,
                format!("expected {} features, got {}", formulas.len(), row.len()),
            ));
        }
        pairs.push(LabeledPair {
            source: kg.entity_id(fields[0])?,
            target: kg.entity_id(fields[1])?,
            positive,
        });
        rows.push(row);
    }
    Ok(FeatureMatrix {
        formulas,
        pairs,
        rows,
    })
}
