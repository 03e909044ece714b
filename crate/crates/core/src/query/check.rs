//! Static rule integrity checking ahead of evaluation: missing setup,
//! missing check boundary, invalid patterns, and statically incompatible
//! adjacent signatures.

use std::fmt;

use super::{Operation, Rule};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RuleViolation {
    /// Index into the rule's combined pre+post operation sequence, when the
    /// violation is tied to one operation.
    pub step: Option<usize>,
    pub message: String,
}

impl fmt::Display for RuleViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.step {
            Some(step) => write!(f, "step {step}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

pub fn check_rule(rule: &Rule) -> Vec<RuleViolation> {
    let mut out = Vec::new();
    if rule.name.is_empty() {
        out.push(RuleViolation {
            step: None,
            message: "rule has no name".to_string(),
        });
    }
    if rule.comment.is_empty() {
        out.push(RuleViolation {
            step: None,
            message: "rule has no comment".to_string(),
        });
    }
    if !rule.has_check {
        out.push(RuleViolation {
            step: None,
            message: "rule lacks exactly one check boundary between pre and post".to_string(),
        });
    }

    let all: Vec<&Operation> = rule.pre.iter().chain(rule.post.iter()).collect();
    for (step, op) in all.iter().enumerate() {
        if let Some(p) = op.invalid_pattern() {
            out.push(RuleViolation {
                step: Some(step),
                message: format!("{}: invalid pattern `{}`", op.name(), p.raw),
            });
        }
        for sub in op.subrules() {
            check_ops(&sub.ops, step, &mut out);
        }
    }

    // Adjacent signature compatibility inside each section. The boundary
    // itself resets the frontier to all nodes, so no constraint across it.
    check_adjacent(&rule.pre, 0, &mut out);
    check_adjacent(&rule.post, rule.pre.len(), &mut out);
    out
}

fn check_adjacent(ops: &[Operation], offset: usize, out: &mut Vec<RuleViolation>) {
    for window in 0..ops.len().saturating_sub(1) {
        let a = &ops[window];
        let b = &ops[window + 1];
        let yields = a.signature().yields;
        let accepts = b.signature().accepts;
        if !yields.intersects(accepts) {
            out.push(RuleViolation {
                step: Some(offset + window + 1),
                message: format!(
                    "{} yields {:?} nodes but {} accepts only {:?}",
                    a.name(),
                    yields,
                    b.name(),
                    accepts
                ),
            });
        }
    }
}

fn check_ops(ops: &[Operation], parent_step: usize, out: &mut Vec<RuleViolation>) {
    for op in ops {
        if let Some(p) = op.invalid_pattern() {
            out.push(RuleViolation {
                step: Some(parent_step),
                message: format!("subrule {}: invalid pattern `{}`", op.name(), p.raw),
            });
        }
        for sub in op.subrules() {
            check_ops(&sub.ops, parent_step, out);
        }
    }
    for window in 0..ops.len().saturating_sub(1) {
        let yields = ops[window].signature().yields;
        let accepts = ops[window + 1].signature().accepts;
        if !yields.intersects(accepts) {
            out.push(RuleViolation {
                step: Some(parent_step),
                message: format!(
                    "subrule: {} yields {:?} nodes but {} accepts only {:?}",
                    ops[window].name(),
                    yields,
                    ops[window + 1].name(),
                    accepts
                ),
            });
        }
    }
}
