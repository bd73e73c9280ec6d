use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::store::SourceTable;

/// Table a free-text term is searched in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TermTable {
    RiskFactor,
    HealthCondition,
}

impl TermTable {
    pub fn name(self) -> &'static str {
        match self {
            TermTable::RiskFactor => "risk_factor",
            TermTable::HealthCondition => "health_condition",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleExpr {
    CodeRange {
        low_root: u16,
        high_root: u16,
        sources: BTreeSet<SourceTable>,
    },
    CodeExact {
        code_root: u16,
        sources: BTreeSet<SourceTable>,
    },
    /// Case-insensitive substring match.
    TermMatch { text: String, table: TermTable },
    /// Case-insensitive exact drug-name match against any of `names`.
    MedicationAny { names: Vec<String> },
    Or(Vec<RuleExpr>),
    And(Vec<RuleExpr>),
    Not(Box<RuleExpr>),
}

impl RuleExpr {
    pub fn contains_not(&self) -> bool {
        match self {
            RuleExpr::Not(_) => true,
            RuleExpr::Or(c) | RuleExpr::And(c) => c.iter().any(RuleExpr::contains_not),
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DefinitionSpec {
    pub name: String,
    pub expr: RuleExpr,
    /// Text of the `#` comment lines directly above the definition.
    pub description: String,
}

fn write_sources(f: &mut fmt::Formatter<'_>, sources: &BTreeSet<SourceTable>) -> fmt::Result {
    let names: Vec<&str> = sources.iter().map(|s| s.name()).collect();
    write!(f, " in ({})", names.join(", "))
}

fn write_str_lit(f: &mut fmt::Formatter<'_>, s: &str) -> fmt::Result {
    f.write_str("\"")?;
    for ch in s.chars() {
        match ch {
            '"' => f.write_str("\\\"")?,
            '\\' => f.write_str("\\\\")?,
            c => write!(f, "{}", c)?,
        }
    }
    f.write_str("\"")
}

impl fmt::Display for RuleExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RuleExpr::CodeRange {
                low_root,
                high_root,
                sources,
            } => {
                write!(f, "icd9[{:03}-{:03}]", low_root, high_root)?;
                write_sources(f, sources)
            }
            RuleExpr::CodeExact { code_root, sources } => {
                write!(f, "icd9[{:03}]", code_root)?;
                write_sources(f, sources)
            }
            RuleExpr::TermMatch { text, table } => {
                f.write_str("term(")?;
                write_str_lit(f, text)?;
                write!(f, ") in {}", table.name())
            }
            RuleExpr::MedicationAny { names } => {
                f.write_str("med(")?;
                for (i, n) in names.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write_str_lit(f, n)?;
                }
                f.write_str(")")
            }
            RuleExpr::Or(children) => {
                for (i, c) in children.iter().enumerate() {
                    if i > 0 {
                        f.write_str(" | ")?;
                    }
                    if matches!(c, RuleExpr::Or(_)) {
                        write!(f, "({})", c)?;
                    } else {
                        write!(f, "{}", c)?;
                    }
                }
                Ok(())
            }
            RuleExpr::And(children) => {
                for (i, c) in children.iter().enumerate() {
                    if i > 0 {
                        f.write_str(" & ")?;
                    }
                    if matches!(c, RuleExpr::Or(_) | RuleExpr::And(_)) {
                        write!(f, "({})", c)?;
                    } else {
                        write!(f, "{}", c)?;
                    }
                }
                Ok(())
            }
            RuleExpr::Not(child) => {
                if matches!(**child, RuleExpr::Or(_) | RuleExpr::And(_)) {
                    write!(f, "!({})", child)
                } else {
                    write!(f, "!{}", child)
                }
            }
        }
    }
}

impl fmt::Display for DefinitionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for line in self.description.lines() {
            writeln!(f, "# {}", line)?;
        }
        write!(f, "def {} = {}", self.name, self.expr)
    }
}

/// Pretty-prints a definition file that parses back to the same list.
pub fn print_definitions(defs: &[DefinitionSpec]) -> String {
    let mut out = String::new();
    for d in defs {
        out.push_str(&d.to_string());
        out.push_str("\n\n");
    }
    out
}
