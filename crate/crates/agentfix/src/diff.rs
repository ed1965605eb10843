//! Line-oriented minimal-edit diffing, unified-diff rendering, changed-line
//! extraction, and function-scope mapping for subject sources.
//!
//! Line numbers are 1-based throughout. Texts are normalized by dropping a
//! single trailing newline before splitting, so `"a\n"` and `"a"` diff equal.

use regex::Regex;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::sync::OnceLock;

/// One step of an edit script over the lines of text A.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum EditOp {
    /// Line `a_line` of A is kept unchanged in B.
    Keep { a_line: usize, text: String },
    /// Line `a_line` of A is deleted.
    Delete { a_line: usize, text: String },
    /// `text` is inserted into B after A's line `after_a_line` (0 = prepend).
    Insert { after_a_line: usize, text: String },
}

/// A minimal edit script transforming text A into text B.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EditScript {
    pub ops: Vec<EditOp>,
}

impl EditScript {
    /// Number of Delete plus Insert ops.
    pub fn edit_count(&self) -> usize {
        self.ops
            .iter()
            .filter(|op| !matches!(op, EditOp::Keep { .. }))
            .count()
    }

    pub fn is_identity(&self) -> bool {
        self.edit_count() == 0
    }

    /// Reconstructs B by replaying the script.
    pub fn apply(&self) -> String {
        let lines: Vec<&str> = self
            .ops
            .iter()
            .filter_map(|op| match op {
                EditOp::Keep { text, .. } | EditOp::Insert { text, .. } => Some(text.as_str()),
                EditOp::Delete { .. } => None,
            })
            .collect();
        join_lines(&lines)
    }
}

/// Set of A-file line numbers touched by an edit: deleted lines plus the
/// anchor line preceding each insertion (0 for prepends).
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChangedLineSet {
    pub touched: BTreeSet<usize>,
}

impl ChangedLineSet {
    pub fn is_empty(&self) -> bool {
        self.touched.is_empty()
    }
}

/// Maps source lines to enclosing function names. Lines outside any span
/// belong to `<module>`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunctionMap {
    /// Non-overlapping (name, start_line, end_line) spans; nested function
    /// bodies are attributed to the innermost function.
    pub spans: Vec<(String, usize, usize)>,
}

pub const MODULE_SCOPE: &str = "<module>";

impl FunctionMap {
    /// Name owning `line`.
    pub fn name_at(&self, line: usize) -> &str {
        self.spans
            .iter()
            .find(|(_, start, end)| *start <= line && line <= *end)
            .map(|(name, _, _)| name.as_str())
            .unwrap_or(MODULE_SCOPE)
    }

    /// Distinct names owning any of `lines`.
    pub fn names_for(&self, lines: &ChangedLineSet) -> BTreeSet<String> {
        lines
            .touched
            .iter()
            .map(|&line| self.name_at(line).to_string())
            .collect()
    }
}

/// Splits into lines after dropping one trailing newline. Empty text has
/// zero lines; a lone newline is one empty line, so `join_lines` inverts
/// this exactly.
pub fn split_lines(text: &str) -> Vec<&str> {
    if text.is_empty() {
        return Vec::new();
    }
    text.strip_suffix('\n').unwrap_or(text).split('\n').collect()
}

fn join_lines(lines: &[&str]) -> String {
    if lines.is_empty() {
        String::new()
    } else {
        let mut out = lines.join("\n");
        out.push('\n');
        out
    }
}

/// Minimal line diff from `a` to `b`.
///
/// Computed over an LCS table; within a changed region deletions are emitted
/// before insertions, which makes the script deterministic.
pub fn line_diff(a: &str, b: &str) -> EditScript {
    let a_lines = split_lines(a);
    let b_lines = split_lines(b);
    let n = a_lines.len();
    let m = b_lines.len();

    // lcs[i][j] = LCS length of a[i..] and b[j..]
    let mut lcs = vec![vec![0usize; m + 1]; n + 1];
    for i in (0..n).rev() {
        for j in (0..m).rev() {
            lcs[i][j] = if a_lines[i] == b_lines[j] {
                lcs[i + 1][j + 1] + 1
            } else {
                lcs[i + 1][j].max(lcs[i][j + 1])
            };
        }
    }

    let mut ops = Vec::with_capacity(n + m);
    let (mut i, mut j) = (0, 0);
    while i < n || j < m {
        if i < n && j < m && a_lines[i] == b_lines[j] && lcs[i][j] == lcs[i + 1][j + 1] + 1 {
            ops.push(EditOp::Keep {
                a_line: i + 1,
                text: a_lines[i].to_string(),
            });
            i += 1;
            j += 1;
        } else if i < n && lcs[i][j] == lcs[i + 1][j] {
            ops.push(EditOp::Delete {
                a_line: i + 1,
                text: a_lines[i].to_string(),
            });
            i += 1;
        } else {
            ops.push(EditOp::Insert {
                after_a_line: i,
                text: b_lines[j].to_string(),
            });
            j += 1;
        }
    }
    EditScript { ops }
}

/// Renders a script in unified-diff format with `context` lines of context.
pub fn render_unified(script: &EditScript, a_name: &str, b_name: &str, context: usize) -> String {
    let mut out = format!("--- {a_name}\n+++ {b_name}\n");
    if script.is_identity() {
        return out;
    }

    // b-line number carried by each op (line it produces in B, if any).
    let mut b_line = 0usize;
    let b_lines: Vec<usize> = script
        .ops
        .iter()
        .map(|op| match op {
            EditOp::Keep { .. } | EditOp::Insert { .. } => {
                b_line += 1;
                b_line
            }
            EditOp::Delete { .. } => b_line,
        })
        .collect();

    // Windows of op indices around each change, merged when they touch.
    let mut hunks: Vec<(usize, usize)> = Vec::new();
    for (idx, op) in script.ops.iter().enumerate() {
        if matches!(op, EditOp::Keep { .. }) {
            continue;
        }
        let lo = idx.saturating_sub(context);
        let hi = (idx + context).min(script.ops.len() - 1);
        match hunks.last_mut() {
            Some((_, prev_hi)) if lo <= *prev_hi + 1 => *prev_hi = (*prev_hi).max(hi),
            _ => hunks.push((lo, hi)),
        }
    }

    for (lo, hi) in hunks {
        let ops = &script.ops[lo..=hi];
        let a_count = ops
            .iter()
            .filter(|op| !matches!(op, EditOp::Insert { .. }))
            .count();
        let b_count = ops
            .iter()
            .filter(|op| !matches!(op, EditOp::Delete { .. }))
            .count();
        let a_start = if a_count == 0 {
            // Pure-insert hunk: show the anchor line.
            match &ops[0] {
                EditOp::Insert { after_a_line, .. } => *after_a_line,
                _ => unreachable!(),
            }
        } else {
            ops.iter()
                .find_map(|op| match op {
                    EditOp::Keep { a_line, .. } | EditOp::Delete { a_line, .. } => Some(*a_line),
                    EditOp::Insert { .. } => None,
                })
                .unwrap()
        };
        let b_start = if b_count == 0 {
            b_lines[lo]
        } else {
            ops.iter()
                .zip(&b_lines[lo..=hi])
                .find_map(|(op, &bl)| match op {
                    EditOp::Delete { .. } => None,
                    _ => Some(bl),
                })
                .unwrap()
        };

        out.push_str(&format!("@@ -{a_start},{a_count} +{b_start},{b_count} @@\n"));
        for op in ops {
            let (prefix, text) = match op {
                EditOp::Keep { text, .. } => (' ', text),
                EditOp::Delete { text, .. } => ('-', text),
                EditOp::Insert { text, .. } => ('+', text),
            };
            out.push(prefix);
            out.push_str(text);
            out.push('\n');
        }
    }
    out
}

/// A-file lines touched when editing `a` into `b`.
pub fn changed_lines(a: &str, b: &str) -> ChangedLineSet {
    let script = line_diff(a, b);
    let touched = script
        .ops
        .iter()
        .filter_map(|op| match op {
            EditOp::Delete { a_line, .. } => Some(*a_line),
            EditOp::Insert { after_a_line, .. } => Some(*after_a_line),
            EditOp::Keep { .. } => None,
        })
        .collect();
    ChangedLineSet { touched }
}

fn def_header_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^(\s*)(?:async\s+)?def\s+([A-Za-z_][A-Za-z0-9_]*)\s*\(").unwrap())
}

fn indent_width(line: &str) -> usize {
    line.chars()
        .take_while(|c| c.is_whitespace())
        .map(|c| if c == '\t' { 8 } else { 1 })
        .sum()
}

/// Maps every line of a Python-syntax source to its innermost enclosing
/// function. A header is `def`/`async def` followed by an identifier and `(`;
/// its span runs until the next non-blank line indented at or below the
/// header.
pub fn function_map(source: &str) -> FunctionMap {
    let lines = split_lines(source);
    let total = lines.len();
    // innermost owner per line, None = module scope
    let mut owner: Vec<Option<String>> = vec![None; total];

    // (name, header indent, start line)
    let mut stack: Vec<(String, usize, usize)> = Vec::new();
    for (idx, line) in lines.iter().enumerate() {
        let lineno = idx + 1;
        let blank = line.trim().is_empty();
        if !blank {
            let indent = indent_width(line);
            while let Some((name, h_indent, start)) = stack.last().cloned() {
                if indent <= h_indent {
                    stack.pop();
                    for slot in owner[start - 1..lineno - 1].iter_mut() {
                        if slot.is_none() {
                            *slot = Some(name.clone());
                        }
                    }
                } else {
                    break;
                }
            }
            if let Some(caps) = def_header_re().captures(line) {
                let h_indent = indent_width(caps.get(1).unwrap().as_str());
                stack.push((caps[2].to_string(), h_indent, lineno));
            }
        }
    }
    while let Some((name, _, start)) = stack.pop() {
        for slot in owner[start - 1..total].iter_mut() {
            if slot.is_none() {
                *slot = Some(name.clone());
            }
        }
    }

    // Compress per-line ownership into spans.
    let mut spans = Vec::new();
    let mut run: Option<(String, usize)> = None;
    for (idx, slot) in owner.iter().enumerate() {
        let lineno = idx + 1;
        match (&mut run, slot) {
            (Some((name, _)), Some(cur)) if name == cur => {}
            _ => {
                if let Some((name, start)) = run.take() {
                    spans.push((name, start, lineno - 1));
                }
                if let Some(cur) = slot {
                    run = Some((cur.clone(), lineno));
                }
            }
        }
    }
    if let Some((name, start)) = run {
        spans.push((name, start, total));
    }
    FunctionMap { spans }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Brute-force LCS length over line slices, the minimality oracle.
    fn lcs_oracle(a: &[&str], b: &[&str]) -> usize {
        let mut dp = vec![vec![0usize; b.len() + 1]; a.len() + 1];
        for i in 0..a.len() {
            for j in 0..b.len() {
                dp[i + 1][j + 1] = if a[i] == b[j] {
                    dp[i][j] + 1
                } else {
                    dp[i + 1][j].max(dp[i][j + 1])
                };
            }
        }
        dp[a.len()][b.len()]
    }

    #[test]
    fn identity_diff_is_all_keeps() {
        let text = "alpha\nbeta\ngamma\n";
        let script = line_diff(text, text);
        assert!(script.is_identity());
        assert_eq!(script.ops.len(), 3);
        assert_eq!(script.apply(), text);
    }

    #[test]
    fn insert_into_empty() {
        let script = line_diff("", "x\ny");
        assert_eq!(
            script.ops,
            vec![
                EditOp::Insert {
                    after_a_line: 0,
                    text: "x".into()
                },
                EditOp::Insert {
                    after_a_line: 0,
                    text: "y".into()
                },
            ]
        );
    }

    #[test]
    fn delete_before_insert_in_change_regions() {
        let script = line_diff("a\nb\nc\n", "a\nz\nc\n");
        assert_eq!(
            script.ops,
            vec![
                EditOp::Keep {
                    a_line: 1,
                    text: "a".into()
                },
                EditOp::Delete {
                    a_line: 2,
                    text: "b".into()
                },
                EditOp::Insert {
                    after_a_line: 2,
                    text: "z".into()
                },
                EditOp::Keep {
                    a_line: 3,
                    text: "c".into()
                },
            ]
        );
    }

    #[test]
    fn minimality_matches_lcs_oracle_exhaustive() {
        // All line-sequences length <= 6 over {p, q}.
        let mut seqs: Vec<Vec<&str>> = vec![vec![]];
        for len in 1..=6usize {
            for bits in 0..(1u32 << len) {
                seqs.push(
                    (0..len)
                        .map(|k| if bits >> k & 1 == 0 { "p" } else { "q" })
                        .collect(),
                );
            }
        }
        for a in &seqs {
            for b in &seqs {
                let a_text = a.iter().map(|l| format!("{l}\n")).collect::<String>();
                let b_text = b.iter().map(|l| format!("{l}\n")).collect::<String>();
                let script = line_diff(&a_text, &b_text);
                let expected = a.len() + b.len() - 2 * lcs_oracle(a, b);
                assert_eq!(script.edit_count(), expected, "a={a:?} b={b:?}");
                assert_eq!(script.apply(), b_text, "a={a:?} b={b:?}");
            }
        }
    }

    #[test]
    fn unified_single_line_replacement() {
        let a = "l1\nl2\nl3\nl4\nl5\n";
        let b = "l1\nl2\nL3\nl4\nl5\n";
        let rendered = render_unified(&line_diff(a, b), "a", "b", 1);
        assert_eq!(
            rendered,
            "--- a\n+++ b\n@@ -2,3 +2,3 @@\n l2\n-l3\n+L3\n l4\n"
        );
    }

    #[test]
    fn unified_prepend_to_empty() {
        let rendered = render_unified(&line_diff("", "only\n"), "a", "b", 3);
        assert_eq!(rendered, "--- a\n+++ b\n@@ -0,0 +1,1 @@\n+only\n");
    }

    #[test]
    fn unified_identity_has_no_hunks() {
        let rendered = render_unified(&line_diff("x\n", "x\n"), "old", "new", 3);
        assert_eq!(rendered, "--- old\n+++ new\n");
    }

    #[test]
    fn changed_lines_identity_is_empty() {
        assert!(changed_lines("a\nb\n", "a\nb\n").is_empty());
    }

    #[test]
    fn changed_lines_single_delete() {
        let a = "1\n2\n3\n4\n5\n";
        let b = "1\n2\n3\n5\n";
        let set = changed_lines(a, b);
        assert_eq!(set.touched, BTreeSet::from([4]));
    }

    #[test]
    fn changed_lines_insert_and_delete() {
        // 6-line file: insert after line 2, delete line 5.
        let a = "1\n2\n3\n4\n5\n6\n";
        let b = "1\n2\nnew\n3\n4\n6\n";
        let set = changed_lines(a, b);
        assert_eq!(set.touched, BTreeSet::from([2, 5]));
    }

    #[test]
    fn function_map_no_headers() {
        let map = function_map("x = 1\ny = 2\n");
        assert!(map.spans.is_empty());
        assert_eq!(map.name_at(1), MODULE_SCOPE);
    }

    #[test]
    fn function_map_simple_span() {
        let src = "x = 1\ndef f(a):\n    y = a\n    z = y\n    return z\n";
        let map = function_map(src);
        assert_eq!(map.spans, vec![("f".to_string(), 2, 5)]);
        assert_eq!(map.name_at(1), MODULE_SCOPE);
        assert_eq!(map.name_at(4), "f");
    }

    #[test]
    fn function_map_span_ends_at_dedent() {
        let src = "def f():\n    pass\nx = 1\n";
        let map = function_map(src);
        assert_eq!(map.spans, vec![("f".to_string(), 1, 2)]);
        assert_eq!(map.name_at(3), MODULE_SCOPE);
    }

    #[test]
    fn function_map_nested_innermost_wins() {
        let src = "def outer():\n    a = 1\n    def inner():\n        b = 2\n    return inner\n";
        let map = function_map(src);
        assert_eq!(map.name_at(2), "outer");
        assert_eq!(map.name_at(4), "inner");
        assert_eq!(map.name_at(5), "outer");
        // no line is covered twice
        let mut seen = BTreeSet::new();
        for (_, start, end) in &map.spans {
            for line in *start..=*end {
                assert!(seen.insert(line), "line {line} covered twice");
            }
        }
    }

    proptest! {
        #[test]
        fn apply_reproduces_b(
            a in proptest::collection::vec("[a-d]{0,3}", 0..50),
            b in proptest::collection::vec("[a-d]{0,3}", 0..50),
        ) {
            let a_text = a.iter().map(|l| format!("{l}\n")).collect::<String>();
            let b_text = b.iter().map(|l| format!("{l}\n")).collect::<String>();
            let script = line_diff(&a_text, &b_text);
            prop_assert_eq!(script.apply(), b_text);
        }

        #[test]
        fn changed_lines_empty_iff_equal(
            a in proptest::collection::vec("[ab]", 0..8),
            b in proptest::collection::vec("[ab]", 0..8),
        ) {
            let a_text = a.iter().map(|l| format!("{l}\n")).collect::<String>();
            let b_text = b.iter().map(|l| format!("{l}\n")).collect::<String>();
            prop_assert_eq!(changed_lines(&a_text, &b_text).is_empty(), a_text == b_text);
        }
    }
}
