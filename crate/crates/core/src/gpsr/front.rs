use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::expr::Expr;

#[derive(Debug, Clone, PartialEq)]
pub struct FrontEntry {
    pub expr: Expr,
    pub loss: f64,
}

impl FrontEntry {
    pub fn complexity(&self) -> usize {
        self.expr.complexity()
    }
}

/// Best loss seen at each complexity. Losses strictly decrease as
/// complexity grows; a candidate dominated by a simpler entry is dropped.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParetoFront {
    entries: BTreeMap<usize, FrontEntry>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelSelection {
    /// Lowest `loss + parsimony * complexity`.
    #[default]
    Best,
    /// Lowest loss.
    Accuracy,
}

impl ParetoFront {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entries ordered by complexity.
    pub fn entries(&self) -> impl Iterator<Item = &FrontEntry> {
        self.entries.values()
    }

    /// Whether a candidate with this complexity and loss would enter.
    pub fn improves(&self, complexity: usize, loss: f64) -> bool {
        loss.is_finite() && self.entries.range(..=complexity).all(|(_, e)| loss < e.loss)
    }

    /// Inserts if not dominated; returns whether the front changed.
    pub fn insert(&mut self, expr: &Expr, loss: f64) -> bool {
        let c = expr.complexity();
        if !self.improves(c, loss) {
            return false;
        }
        self.entries.retain(|&k, e| k < c || e.loss < loss);
        self.entries.insert(
            c,
            FrontEntry {
                expr: expr.clone(),
                loss,
            },
        );
        true
    }

    pub fn min_loss(&self) -> Option<&FrontEntry> {
        // The most complex entry carries the lowest loss.
        self.entries.values().next_back()
    }

    pub fn select(&self, mode: ModelSelection, parsimony: f64) -> Option<&FrontEntry> {
        match mode {
            ModelSelection::Accuracy => self.min_loss(),
            ModelSelection::Best => self.entries.values().min_by(|a, b| {
                let sa = a.loss + parsimony * a.complexity() as f64;
                let sb = b.loss + parsimony * b.complexity() as f64;
                sa.total_cmp(&sb)
            }),
        }
    }

    /// Whether losses strictly decrease with complexity.
    pub fn is_monotone(&self) -> bool {
        self.entries
            .values()
            .zip(self.entries.values().skip(1))
            .all(|(a, b)| b.loss < a.loss)
    }

    /// Plain-text table: complexity, loss, expression.
    pub fn to_table<S: AsRef<str>>(&self, names: &[S]) -> String {
        let mut out = String::from("complexity  loss          expression\n");
        for e in self.entries.values() {
            out.push_str(&format!(
                "{:>10}  {:<12.6e}  {}\n",
                e.complexity(),
                e.loss,
                e.expr.to_text(names)
            ));
        }
        out
    }
}
