//! Order-constraint expressions and their matrix form `R theta > r`.
//!
//! A constraint string is a chain of groups joined by `<` or `>`:
//!
//! ```text
//! chain := group (cmp group)+
//! cmp   := "<" | ">"            (">=" and "<=" are accepted as synonyms)
//! group := term | "(" term ("," term)* ")"
//! term  := identifier | real literal
//! ```
//!
//! Every adjacent pair of groups expands to one row per pair of members, so
//! `education > (class, income) > 0` yields four rows. Identifiers may be
//! wrapped in backticks when they contain characters the grammar reserves.

use std::collections::HashSet;
use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg;

/// Tolerance used when comparing rescaled rows for duplicates.
const DEDUP_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConstraintError {
    #[error("syntax error in {text:?} at column {column}: {message}")]
    Syntax { text: String, column: usize, message: String },
    #[error("unknown parameter {name:?} in {text:?} at column {column}")]
    UnknownIdentifier { name: String, text: String, column: usize },
    #[error("comparison between two literals in {text:?} at column {column}")]
    LiteralOnlyPair { text: String, column: usize },
    #[error("empty group in {text:?} at column {column}")]
    EmptyGroup { text: String, column: usize },
    #[error("literal inside a multi-term group in {text:?} at column {column}; literals must stand alone")]
    LiteralInGroup { text: String, column: usize },
    #[error("more than one numeric literal in {text:?} (second at column {column})")]
    MultipleLiterals { text: String, column: usize },
    #[error("no constraint strings given")]
    NoConstraints,
    #[error("every constraint is degenerate (compares a parameter with itself)")]
    AllDegenerate,
    #[error("duplicate parameter name {0:?}")]
    DuplicateName(String),
    #[error("constraint sets refer to different parameter lists")]
    NameMismatch,
    #[error("invalid constraint matrix: {0}")]
    InvalidMatrix(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Comparator {
    Greater,
    Less,
}

impl fmt::Display for Comparator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Comparator::Greater => f.write_str(">"),
            Comparator::Less => f.write_str("<"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Term {
    Param(String),
    Literal(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Group {
    pub terms: Vec<Term>,
    /// 1-based column where the group starts.
    pub column: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Chain {
    pub text: String,
    pub groups: Vec<Group>,
    pub comparators: Vec<Comparator>,
}

impl Chain {
    /// Adjacent pairs `(left, cmp, right)`.
    pub fn pairs(&self) -> impl Iterator<Item = (&Group, Comparator, &Group)> {
        self.groups
            .windows(2)
            .zip(self.comparators.iter())
            .map(|(w, &c)| (&w[0], c, &w[1]))
    }

    /// Evaluate every pairwise relation the chain spells out, directly on `theta`.
    pub fn holds(&self, theta: &[f64], names: &[String]) -> bool {
        let value = |t: &Term| match t {
            Term::Literal(c) => *c,
            Term::Param(p) => {
                let j = names.iter().position(|n| n == p).expect("validated name");
                theta[j]
            }
        };
        self.pairs().all(|(left, cmp, right)| {
            left.terms.iter().all(|a| {
                right.terms.iter().all(|b| match cmp {
                    Comparator::Greater => value(a) > value(b),
                    Comparator::Less => value(a) < value(b),
                })
            })
        })
    }
}

/// Parsed form of one or more constraint strings.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintExpr {
    pub chains: Vec<Chain>,
}

impl ConstraintExpr {
    pub fn parse(texts: &[impl AsRef<str>]) -> Result<Self, ConstraintError> {
        if texts.is_empty() {
            return Err(ConstraintError::NoConstraints);
        }
        let chains = texts.iter().map(|t| parse_chain(t.as_ref())).collect::<Result<_, _>>()?;
        Ok(Self { chains })
    }

    pub fn holds(&self, theta: &[f64], names: &[String]) -> bool {
        self.chains.iter().all(|c| c.holds(theta, names))
    }
}

// ---------------------------------------------------------------------------
// Lexer

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Ident(String),
    Number(f64),
    Open,
    Close,
    Comma,
    Cmp(Comparator),
}

struct Lexed {
    token: Token,
    column: usize,
}

fn is_ident_start(c: char) -> bool {
    c.is_alphabetic() || c == '_' || c == '.'
}

fn is_ident_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_' || c == '.' || c == ':'
}

fn lex(text: &str) -> Result<Vec<Lexed>, ConstraintError> {
    let chars: Vec<char> = text.chars().collect();
    let syntax = |column: usize, message: &str| ConstraintError::Syntax {
        text: text.to_string(),
        column,
        message: message.to_string(),
    };
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let column = i + 1;
        let starts_number = |k: usize| -> bool {
            let d = |k: usize| chars.get(k).is_some_and(|c| c.is_ascii_digit());
            match chars.get(k) {
                Some(c) if c.is_ascii_digit() => true,
                Some('.') => d(k + 1),
                Some('-') | Some('+') => d(k + 1) || (chars.get(k + 1) == Some(&'.') && d(k + 2)),
                _ => false,
            }
        };
        match c {
            _ if c.is_whitespace() => {
                i += 1;
            }
            '(' => {
                out.push(Lexed { token: Token::Open, column });
                i += 1;
            }
            ')' => {
                out.push(Lexed { token: Token::Close, column });
                i += 1;
            }
            ',' => {
                out.push(Lexed { token: Token::Comma, column });
                i += 1;
            }
            '<' | '>' => {
                let cmp = if c == '<' { Comparator::Less } else { Comparator::Greater };
                i += 1;
                if chars.get(i) == Some(&'=') {
                    i += 1;
                }
                out.push(Lexed { token: Token::Cmp(cmp), column });
            }
            '=' => return Err(syntax(column, "equality constraints are not supported; refit a reduced model instead")),
            '`' => {
                let start = i + 1;
                let end = chars[start..]
                    .iter()
                    .position(|&c| c == '`')
                    .map(|p| start + p)
                    .ok_or_else(|| syntax(column, "unterminated backtick identifier"))?;
                if end == start {
                    return Err(syntax(column, "empty identifier"));
                }
                out.push(Lexed { token: Token::Ident(chars[start..end].iter().collect()), column });
                i = end + 1;
            }
            _ if starts_number(i) => {
                let start = i;
                if chars[i] == '-' || chars[i] == '+' {
                    i += 1;
                }
                while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                    i += 1;
                }
                if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                    let mut k = i + 1;
                    if k < chars.len() && (chars[k] == '-' || chars[k] == '+') {
                        k += 1;
                    }
                    if k < chars.len() && chars[k].is_ascii_digit() {
                        i = k;
                        while i < chars.len() && chars[i].is_ascii_digit() {
                            i += 1;
                        }
                    }
                }
                let literal: String = chars[start..i].iter().collect();
                let value: f64 = literal.parse().map_err(|_| syntax(column, "malformed number"))?;
                if !value.is_finite() {
                    return Err(syntax(column, "non-finite number"));
                }
                if i < chars.len() && is_ident_char(chars[i]) {
                    return Err(syntax(i + 1, "unexpected character after number"));
                }
                out.push(Lexed { token: Token::Number(value), column });
            }
            _ if is_ident_start(c) => {
                let start = i;
                while i < chars.len() && is_ident_char(chars[i]) {
                    i += 1;
                }
                out.push(Lexed { token: Token::Ident(chars[start..i].iter().collect()), column });
            }
            _ => return Err(syntax(column, &format!("unexpected character {c:?}"))),
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Parser

fn parse_chain(text: &str) -> Result<Chain, ConstraintError> {
    let tokens = lex(text)?;
    let end_column = text.chars().count() + 1;
    let syntax = |column: usize, message: &str| ConstraintError::Syntax {
        text: text.to_string(),
        column,
        message: message.to_string(),
    };

    let mut pos = 0;
    let mut groups = Vec::new();
    let mut comparators = Vec::new();
    loop {
        groups.push(parse_group(text, &tokens, &mut pos, end_column)?);
        match tokens.get(pos) {
            None => break,
            Some(Lexed { token: Token::Cmp(c), .. }) => {
                comparators.push(*c);
                pos += 1;
            }
            Some(t) => return Err(syntax(t.column, "expected '<' or '>'")),
        }
    }
    if groups.len() < 2 {
        return Err(syntax(end_column, "a constraint needs at least one comparison"));
    }

    // Literal rules: never on both sides of a pair, singleton groups only, one per chain.
    let all_lit = |g: &Group| g.terms.iter().all(|t| matches!(t, Term::Literal(_)));
    for w in groups.windows(2) {
        if all_lit(&w[0]) && all_lit(&w[1]) {
            return Err(ConstraintError::LiteralOnlyPair { text: text.to_string(), column: w[1].column });
        }
    }
    let mut literal_seen = false;
    for g in &groups {
        let n_lit = g.terms.iter().filter(|t| matches!(t, Term::Literal(_))).count();
        if n_lit > 0 && g.terms.len() > 1 {
            return Err(ConstraintError::LiteralInGroup { text: text.to_string(), column: g.column });
        }
        if n_lit > 0 {
            if literal_seen {
                return Err(ConstraintError::MultipleLiterals { text: text.to_string(), column: g.column });
            }
            literal_seen = true;
        }
    }
    let chain = Chain { text: text.to_string(), groups, comparators };
    Ok(chain)
}

fn parse_group(text: &str, tokens: &[Lexed], pos: &mut usize, end_column: usize) -> Result<Group, ConstraintError> {
    let syntax = |column: usize, message: &str| ConstraintError::Syntax {
        text: text.to_string(),
        column,
        message: message.to_string(),
    };
    let term = |t: &Lexed| match &t.token {
        Token::Ident(s) => Some(Term::Param(s.clone())),
        Token::Number(v) => Some(Term::Literal(*v)),
        _ => None,
    };
    let Some(first) = tokens.get(*pos) else {
        return Err(syntax(end_column, "expected a parameter, number or '('"));
    };
    let column = first.column;
    if first.token != Token::Open {
        let t = term(first).ok_or_else(|| syntax(column, "expected a parameter, number or '('"))?;
        *pos += 1;
        return Ok(Group { terms: vec![t], column });
    }
    *pos += 1;
    if matches!(tokens.get(*pos), Some(Lexed { token: Token::Close, .. })) {
        *pos += 1;
        return Err(ConstraintError::EmptyGroup { text: text.to_string(), column });
    }
    let mut terms = Vec::new();
    loop {
        let Some(t) = tokens.get(*pos) else {
            return Err(syntax(end_column, "unclosed '('"));
        };
        if matches!(t.token, Token::Comma | Token::Close) {
            return Err(ConstraintError::EmptyGroup { text: text.to_string(), column: t.column });
        }
        terms.push(term(t).ok_or_else(|| syntax(t.column, "expected a parameter or number"))?);
        *pos += 1;
        match tokens.get(*pos) {
            Some(Lexed { token: Token::Comma, .. }) => *pos += 1,
            Some(Lexed { token: Token::Close, .. }) => {
                *pos += 1;
                return Ok(Group { terms, column });
            }
            Some(t) => return Err(syntax(t.column, "expected ',' or ')'")),
            None => return Err(syntax(end_column, "unclosed '('")),
        }
    }
}

// ---------------------------------------------------------------------------
// Matrix form

/// Linear inequality constraints `R theta > r` over an ordered parameter list.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintSet {
    coeff_matrix: DMatrix<f64>,
    bounds: DVector<f64>,
    source_text: Vec<String>,
    param_names: Vec<String>,
}

impl ConstraintSet {
    /// Build from an explicit matrix, validating shapes and dropping duplicate rows.
    pub fn from_matrix(
        coeff_matrix: DMatrix<f64>,
        bounds: DVector<f64>,
        param_names: Vec<String>,
        source_text: Vec<String>,
    ) -> Result<Self, ConstraintError> {
        check_unique(&param_names)?;
        if coeff_matrix.ncols() != param_names.len() {
            return Err(ConstraintError::InvalidMatrix(format!(
                "{} columns but {} parameter names",
                coeff_matrix.ncols(),
                param_names.len()
            )));
        }
        if coeff_matrix.nrows() != bounds.len() {
            return Err(ConstraintError::InvalidMatrix(format!(
                "{} rows but {} bounds",
                coeff_matrix.nrows(),
                bounds.len()
            )));
        }
        if coeff_matrix.iter().chain(bounds.iter()).any(|v| !v.is_finite()) {
            return Err(ConstraintError::InvalidMatrix("non-finite entry".into()));
        }
        let rows: Vec<(Vec<f64>, f64)> = (0..coeff_matrix.nrows())
            .map(|i| (coeff_matrix.row(i).iter().copied().collect(), bounds[i]))
            .collect();
        Self::from_rows(rows, param_names, source_text)
    }

    fn from_rows(
        rows: Vec<(Vec<f64>, f64)>,
        param_names: Vec<String>,
        source_text: Vec<String>,
    ) -> Result<Self, ConstraintError> {
        let kept = dedup_rows(rows);
        if kept.is_empty() {
            return Err(ConstraintError::AllDegenerate);
        }
        let d = param_names.len();
        let coeff_matrix = DMatrix::from_fn(kept.len(), d, |i, j| kept[i].0[j]);
        let bounds = DVector::from_iterator(kept.len(), kept.iter().map(|r| r.1));
        Ok(Self { coeff_matrix, bounds, source_text, param_names })
    }

    pub fn coeff_matrix(&self) -> &DMatrix<f64> {
        &self.coeff_matrix
    }

    pub fn bounds(&self) -> &DVector<f64> {
        &self.bounds
    }

    pub fn source_text(&self) -> &[String] {
        &self.source_text
    }

    pub fn param_names(&self) -> &[String] {
        &self.param_names
    }

    pub fn n_constraints(&self) -> usize {
        self.coeff_matrix.nrows()
    }

    pub fn n_params(&self) -> usize {
        self.coeff_matrix.ncols()
    }

    /// Does `R theta > r` hold elementwise?
    pub fn contains(&self, theta: &[f64]) -> bool {
        assert_eq!(theta.len(), self.n_params(), "theta has the wrong dimension");
        (0..self.n_constraints()).all(|i| {
            let lhs: f64 = self.coeff_matrix.row(i).iter().zip(theta).map(|(a, t)| a * t).sum();
            lhs > self.bounds[i]
        })
    }

    /// Intersection of two sets over the same parameters.
    pub fn intersect(&self, other: &ConstraintSet) -> Result<ConstraintSet, ConstraintError> {
        if self.param_names != other.param_names {
            return Err(ConstraintError::NameMismatch);
        }
        let rows = self.row_pairs().chain(other.row_pairs()).collect();
        let mut source = self.source_text.clone();
        source.extend(other.source_text.iter().cloned());
        Self::from_rows(rows, self.param_names.clone(), source)
    }

    fn row_pairs(&self) -> impl Iterator<Item = (Vec<f64>, f64)> + '_ {
        (0..self.n_constraints()).map(|i| (self.coeff_matrix.row(i).iter().copied().collect(), self.bounds[i]))
    }

    /// Human-readable label built from the source strings.
    pub fn label(&self) -> String {
        self.source_text.join(" & ")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&ConstraintSetJson::from(self)).expect("constraint set serializes")
    }

    pub fn from_json(json: &str) -> Result<Self, ConstraintError> {
        let raw: ConstraintSetJson =
            serde_json::from_str(json).map_err(|e| ConstraintError::InvalidMatrix(e.to_string()))?;
        raw.try_into()
    }
}

/// Serialized layout: `{"R": [[...]], "r": [...], "names": [...], "source": [...]}`.
#[derive(Debug, Serialize, Deserialize)]
pub struct ConstraintSetJson {
    #[serde(rename = "R")]
    pub coeff_matrix: Vec<Vec<f64>>,
    #[serde(rename = "r")]
    pub bounds: Vec<f64>,
    pub names: Vec<String>,
    #[serde(default)]
    pub source: Vec<String>,
}

impl From<&ConstraintSet> for ConstraintSetJson {
    fn from(cs: &ConstraintSet) -> Self {
        Self {
            coeff_matrix: linalg::to_rows(&cs.coeff_matrix),
            bounds: cs.bounds.iter().copied().collect(),
            names: cs.param_names.clone(),
            source: cs.source_text.clone(),
        }
    }
}

impl TryFrom<ConstraintSetJson> for ConstraintSet {
    type Error = ConstraintError;

    fn try_from(raw: ConstraintSetJson) -> Result<Self, Self::Error> {
        let ncols = raw.names.len();
        if raw.coeff_matrix.iter().any(|r| r.len() != ncols) {
            return Err(ConstraintError::InvalidMatrix("ragged R".into()));
        }
        let m = DMatrix::from_fn(raw.coeff_matrix.len(), ncols, |i, j| raw.coeff_matrix[i][j]);
        ConstraintSet::from_matrix(m, DVector::from_vec(raw.bounds), raw.names, raw.source)
    }
}

impl Serialize for ConstraintSet {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        ConstraintSetJson::from(self).serialize(s)
    }
}

fn check_unique(names: &[String]) -> Result<(), ConstraintError> {
    let mut seen = HashSet::new();
    for n in names {
        if !seen.insert(n.as_str()) {
            return Err(ConstraintError::DuplicateName(n.clone()));
        }
    }
    Ok(())
}

/// Drop all-zero rows and rows equal to an earlier one after scaling each
/// augmented row by the largest absolute coefficient.
fn dedup_rows(rows: Vec<(Vec<f64>, f64)>) -> Vec<(Vec<f64>, f64)> {
    let mut kept: Vec<(Vec<f64>, f64)> = Vec::new();
    let mut normalized: Vec<Vec<f64>> = Vec::new();
    for (row, bound) in rows {
        let scale = row.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        if scale == 0.0 {
            continue;
        }
        let mut norm: Vec<f64> = row.iter().map(|v| v / scale).collect();
        norm.push(bound / scale);
        let dup = normalized
            .iter()
            .any(|k| k.iter().zip(&norm).all(|(a, b)| (a - b).abs() <= DEDUP_TOL));
        if !dup {
            normalized.push(norm);
            kept.push((row, bound));
        }
    }
    kept
}

/// Parse constraint strings into `[R | r]` over `coef_names`.
///
/// Rows from every string are concatenated (the constraints hold jointly) and
/// deduplicated. Parameters not mentioned get zero columns.
pub fn parse_constraints(texts: &[impl AsRef<str>], coef_names: &[String]) -> Result<ConstraintSet, ConstraintError> {
    check_unique(coef_names)?;
    let expr = ConstraintExpr::parse(texts)?;
    let d = coef_names.len();
    let column = |name: &str, chain: &Chain, col: usize| -> Result<usize, ConstraintError> {
        coef_names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| ConstraintError::UnknownIdentifier {
                name: name.to_string(),
                text: chain.text.clone(),
                column: col,
            })
    };

    let mut rows = Vec::new();
    for chain in &expr.chains {
        for (left, cmp, right) in chain.pairs() {
            // normalize to `high > low`
            let (high, low) = match cmp {
                Comparator::Greater => (left, right),
                Comparator::Less => (right, left),
            };
            for a in &high.terms {
                for b in &low.terms {
                    let mut row = vec![0.0; d];
                    let bound = match (a, b) {
                        (Term::Param(p), Term::Param(q)) => {
                            row[column(p, chain, high.column)?] += 1.0;
                            row[column(q, chain, low.column)?] -= 1.0;
                            0.0
                        }
                        (Term::Param(p), Term::Literal(c)) => {
                            row[column(p, chain, high.column)?] = 1.0;
                            *c
                        }
                        (Term::Literal(c), Term::Param(q)) => {
                            row[column(q, chain, low.column)?] = -1.0;
                            -*c
                        }
                        (Term::Literal(_), Term::Literal(_)) => unreachable!("rejected while parsing"),
                    };
                    rows.push((row, bound));
                }
            }
        }
    }
    let source = texts.iter().map(|t| t.as_ref().to_string()).collect();
    ConstraintSet::from_rows(rows, coef_names.to_vec(), source)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    fn rows(cs: &ConstraintSet) -> Vec<(Vec<f64>, f64)> {
        cs.row_pairs().collect()
    }

    #[test]
    fn three_level_chain_with_nuisance_columns() {
        let coef = names(&["theta0", "class", "education", "income", "gender", "sigma2"]);
        let cs = parse_constraints(&["class > education > income > 0"], &coef).unwrap();
        let expected = DMatrix::from_row_slice(
            3,
            6,
            &[
                0.0, 1.0, -1.0, 0.0, 0.0, 0.0, //
                0.0, 0.0, 1.0, -1.0, 0.0, 0.0, //
                0.0, 0.0, 0.0, 1.0, 0.0, 0.0,
            ],
        );
        assert_eq!(cs.coeff_matrix(), &expected);
        assert_eq!(cs.bounds().as_slice(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn group_expands_to_all_pairs() {
        let coef = names(&["class", "education", "income"]);
        let cs = parse_constraints(&["education > (class, income) > 0"], &coef).unwrap();
        assert_eq!(
            rows(&cs),
            vec![
                (vec![-1.0, 1.0, 0.0], 0.0),
                (vec![0.0, 1.0, -1.0], 0.0),
                (vec![1.0, 0.0, 0.0], 0.0),
                (vec![0.0, 0.0, 1.0], 0.0),
            ]
        );
    }

    #[test]
    fn duplicates_across_strings_collapse() {
        let cs = parse_constraints(&["X1 > 0", "X1 > 0"], &names(&["X1"])).unwrap();
        assert_eq!(rows(&cs), vec![(vec![1.0], 0.0)]);
        assert_eq!(cs.source_text().len(), 2);
    }

    #[test]
    fn rescaled_duplicates_collapse() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, -1.0, 2.0, -2.0]);
        let cs = ConstraintSet::from_matrix(m, DVector::from_vec(vec![0.5, 1.0]), names(&["a", "b"]), vec![]).unwrap();
        assert_eq!(cs.n_constraints(), 1);
    }

    #[test]
    fn less_than_chain_from_literal() {
        let cs = parse_constraints(&["0 < X1 < X2"], &names(&["X1", "X2"])).unwrap();
        assert_eq!(rows(&cs), vec![(vec![1.0, 0.0], 0.0), (vec![-1.0, 1.0], 0.0)]);
    }

    #[test]
    fn less_than_chain_matches_grid_membership() {
        let coef = names(&["X1", "X2"]);
        let cs = parse_constraints(&["0 < X1 < X2"], &coef).unwrap();
        // 1000-point grid over [-1, 1]^2 (40 x 25), offset so no point lies on a boundary
        let mut checked = 0;
        for i in 0..40 {
            for j in 0..25 {
                let x1 = -1.0 + (i as f64 + 0.5) * 2.0 / 40.0;
                let x2 = -1.0 + (j as f64 + 0.37) * 2.0 / 25.0;
                let direct = 0.0 < x1 && x1 < x2;
                assert_eq!(cs.contains(&[x1, x2]), direct, "({x1}, {x2})");
                checked += 1;
            }
        }
        assert_eq!(checked, 1000);
    }

    #[test]
    fn literal_bounds_and_signs() {
        let coef = names(&["a", "b"]);
        let cs = parse_constraints(&["a > 0.5"], &coef).unwrap();
        assert_eq!(rows(&cs), vec![(vec![1.0, 0.0], 0.5)]);
        let cs = parse_constraints(&["-1.5 > b"], &coef).unwrap();
        assert_eq!(rows(&cs), vec![(vec![0.0, -1.0], 1.5)]);
        let cs = parse_constraints(&["a < 2e-1"], &coef).unwrap();
        assert_eq!(rows(&cs), vec![(vec![-1.0, 0.0], -0.2)]);
    }

    #[test]
    fn mixed_comparators_are_pairwise() {
        let coef = names(&["a", "b", "c"]);
        let cs = parse_constraints(&["a > b < c"], &coef).unwrap();
        assert_eq!(rows(&cs), vec![(vec![1.0, -1.0, 0.0], 0.0), (vec![0.0, -1.0, 1.0], 0.0)]);
    }

    #[test]
    fn dotted_and_backticked_identifiers() {
        let coef = names(&["class.educ.income", "factor(g)old"]);
        let cs = parse_constraints(&["class.educ.income > 0", "`factor(g)old` < 0"], &coef).unwrap();
        assert_eq!(cs.n_constraints(), 2);
    }

    #[test]
    fn weak_inequalities_are_synonyms() {
        let coef = names(&["a", "b"]);
        let strict = parse_constraints(&["a > b"], &coef).unwrap();
        let weak = parse_constraints(&["a >= b"], &coef).unwrap();
        assert_eq!(strict.coeff_matrix(), weak.coeff_matrix());
    }

    #[test]
    fn errors() {
        let coef = names(&["a", "b"]);
        assert!(matches!(
            parse_constraints(&["a > zz"], &coef),
            Err(ConstraintError::UnknownIdentifier { ref name, column: 5, .. }) if name == "zz"
        ));
        assert!(matches!(parse_constraints(&["1 > 0"], &coef), Err(ConstraintError::LiteralOnlyPair { .. })));
        assert!(matches!(parse_constraints(&["a > () > b"], &coef), Err(ConstraintError::EmptyGroup { .. })));
        assert!(matches!(parse_constraints(&["a > (b, ) "], &coef), Err(ConstraintError::EmptyGroup { .. })));
        assert!(matches!(parse_constraints(&["a > (b, 0)"], &coef), Err(ConstraintError::LiteralInGroup { .. })));
        assert!(matches!(parse_constraints(&["1 > a > 0"], &coef), Err(ConstraintError::MultipleLiterals { .. })));
        assert!(matches!(parse_constraints(&["a > > b"], &coef), Err(ConstraintError::Syntax { column: 5, .. })));
        assert!(matches!(parse_constraints(&["a"], &coef), Err(ConstraintError::Syntax { .. })));
        assert!(matches!(parse_constraints(&["a = b"], &coef), Err(ConstraintError::Syntax { column: 3, .. })));
        assert!(matches!(parse_constraints(&["a > (b"], &coef), Err(ConstraintError::Syntax { .. })));
        assert!(matches!(parse_constraints(&["a > b $"], &coef), Err(ConstraintError::Syntax { column: 7, .. })));
        assert!(matches!(parse_constraints(&["a > a"], &coef), Err(ConstraintError::AllDegenerate)));
        assert!(matches!(parse_constraints(&[] as &[&str], &coef), Err(ConstraintError::NoConstraints)));
        assert!(matches!(parse_constraints(&["a > 0"], &names(&["a", "a"])), Err(ConstraintError::DuplicateName(_))));
    }

    #[test]
    fn json_layout() {
        let cs = parse_constraints(&["b > a"], &names(&["a", "b"])).unwrap();
        let v: serde_json::Value = serde_json::from_str(&cs.to_json()).unwrap();
        assert_eq!(v["R"], serde_json::json!([[-1.0, 1.0]]));
        assert_eq!(v["r"], serde_json::json!([0.0]));
        assert_eq!(v["names"], serde_json::json!(["a", "b"]));
        assert_eq!(v["source"], serde_json::json!(["b > a"]));
        assert_eq!(ConstraintSet::from_json(&cs.to_json()).unwrap(), cs);
    }

    #[test]
    fn intersect_requires_same_names() {
        let a = parse_constraints(&["x > 0"], &names(&["x", "y"])).unwrap();
        let b = parse_constraints(&["y > x"], &names(&["x", "y"])).unwrap();
        assert_eq!(a.intersect(&b).unwrap().n_constraints(), 2);
        let c = parse_constraints(&["y > 0"], &names(&["y", "x"])).unwrap();
        assert_eq!(a.intersect(&c), Err(ConstraintError::NameMismatch));
    }
}
