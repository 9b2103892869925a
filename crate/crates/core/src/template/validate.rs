use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use super::{EditOp, ElementaryTemplate};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Severity {
    Warning,
    Error,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub severity: Severity,
    pub template_id: String,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let level = match self.severity {
            Severity::Warning => "warning",
            Severity::Error => "error",
        };
        write!(f, "{level}: {}: {}", self.template_id, self.message)
    }
}

/// Static checks on one template: charge and hydrogen bookkeeping, possible
/// hydrogen underflow, and bond edits that cannot succeed.
pub fn validate_template(t: &ElementaryTemplate) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let mut push = |severity, message: String| {
        out.push(Diagnostic {
            severity,
            template_id: t.id.clone(),
            message,
        })
    };
    if t.is_termination {
        if !t.edits.is_empty() {
            push(Severity::Error, "termination template carries edits".into());
        }
        return out;
    }
    if t.edits.is_empty() {
        push(Severity::Error, "template has no edits".into());
    }

    let net_q = t.net_charge();
    let net_h = t.net_h();
    let p = t.proton_implicit as i32;
    if net_q.abs() > 1 {
        push(
            Severity::Error,
            format!("net charge change {net_q:+} exceeds one unit"),
        );
    } else if net_q != 0 && p == 0 {
        push(
            Severity::Error,
            format!("uncompensated net charge {net_q:+} without proton_implicit"),
        );
    } else if net_q != p {
        push(
            Severity::Error,
            format!("net charge change {net_q:+} does not match proton_implicit({p:+})"),
        );
    }
    if net_h != p {
        push(
            Severity::Error,
            format!("net hydrogen change {net_h:+} does not match proton_implicit({p:+})"),
        );
    }

    let mut running: BTreeMap<u32, i32> = BTreeMap::new();
    let mut warned: BTreeSet<u32> = BTreeSet::new();
    for edit in &t.edits {
        if let EditOp::DeltaH { slot, delta } = *edit {
            if delta == 0 {
                push(
                    Severity::Warning,
                    format!("delta_h(:{slot},0) has no effect"),
                );
            }
            let r = running.entry(slot).or_default();
            *r += delta as i32;
            let guaranteed = t.pattern.atom(slot).map_or(0, |a| a.guaranteed_h()) as i32;
            if guaranteed + *r < 0 && warned.insert(slot) {
                push(
                    Severity::Warning,
                    format!(
                        "delta_h on slot :{slot} can drive hydrogens below zero; \
                         the pattern guarantees only {guaranteed}"
                    ),
                );
            }
        }
    }

    // Track which bonds are certainly present, certainly absent, or unknown.
    let mut present: BTreeSet<(u32, u32)> = t.pattern.bonds().iter().map(|b| (b.a, b.b)).collect();
    let mut absent: BTreeSet<(u32, u32)> = BTreeSet::new();
    for edit in &t.edits {
        let (a, b) = match *edit {
            EditOp::MakeBond { a, b, .. }
            | EditOp::BreakBond { a, b }
            | EditOp::SetOrder { a, b, .. } => (a, b),
            _ => continue,
        };
        if a == b {
            push(
                Severity::Error,
                format!("bond edit joins slot :{a} to itself"),
            );
            continue;
        }
        let key = (a.min(b), a.max(b));
        match edit {
            EditOp::MakeBond { .. } => {
                if present.contains(&key) {
                    push(
                        Severity::Error,
                        format!("make_bond(:{a},:{b}) on a pair that is already bonded"),
                    );
                }
                absent.remove(&key);
                present.insert(key);
            }
            EditOp::BreakBond { .. } | EditOp::SetOrder { .. } => {
                let name = if matches!(edit, EditOp::BreakBond { .. }) {
                    "break_bond"
                } else {
                    "set_order"
                };
                if absent.contains(&key) {
                    push(
                        Severity::Error,
                        format!("{name}(:{a},:{b}) on a bond removed earlier"),
                    );
                } else if !present.contains(&key) {
                    push(
                        Severity::Warning,
                        format!("{name}(:{a},:{b}) on a bond the pattern does not require"),
                    );
                }
                if matches!(edit, EditOp::BreakBond { .. }) {
                    present.remove(&key);
                    absent.insert(key);
                }
            }
            _ => unreachable!(),
        }
    }
    out
}
