use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::{EditOp, ElementSet, PatternAtom, PatternGraph, ReactionClassDef};
use crate::molgraph::BondOrder;

/// Renders classes back into pack text that parses to an equal value.
pub fn print_pack(classes: &[ReactionClassDef]) -> String {
    let mut out = String::new();
    for (i, class) in classes.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        let _ = writeln!(out, "class {} {{", quote(&class.class_name));
        for cond in &class.conditions {
            let _ = writeln!(out, "  condition {} {{", quote(&cond.name));
            if cond.required_agents.is_empty() {
                out.push_str("    agents: none\n");
            } else {
                let agents: Vec<String> = cond.required_agents.iter().map(print_pattern).collect();
                let _ = writeln!(out, "    agents: {}", agents.join(", "));
            }
            if cond.distinct_molecules {
                out.push_str("    distinct_molecules\n");
            }
            for step in &cond.steps {
                let _ = write!(
                    out,
                    "    step {} {}",
                    step.step_index,
                    quote(&step.step_name)
                );
                if step.proton_implicit != 0 {
                    let _ = write!(out, " proton_implicit({:+})", step.proton_implicit);
                }
                out.push_str(" {\n");
                let _ = writeln!(out, "      pattern: {}", print_pattern(&step.pattern));
                let edits: Vec<String> = step.edits.iter().map(print_edit).collect();
                let _ = writeln!(out, "      edits: {}", edits.join(", "));
                out.push_str("    }\n");
            }
            out.push_str("  }\n");
        }
        out.push_str("}\n");
    }
    out
}

fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        if c == '"' || c == '\\' {
            out.push('\\');
        }
        out.push(c);
    }
    out.push('"');
    out
}

fn print_edit(edit: &EditOp) -> String {
    match *edit {
        EditOp::MakeBond { a, b, order } => format!("make_bond(:{a},:{b},{})", order.name()),
        EditOp::BreakBond { a, b } => format!("break_bond(:{a},:{b})"),
        EditOp::SetOrder { a, b, order } => format!("set_order(:{a},:{b},{})", order.name()),
        EditOp::DeltaH { slot, delta } => format!("delta_h(:{slot},{delta:+})"),
        EditOp::DeltaCharge { slot, delta } => format!("delta_charge(:{slot},{delta:+})"),
        EditOp::SetAromatic { slot, aromatic } => format!("set_aromatic(:{slot},{aromatic})"),
    }
}

fn bond_symbol(order: Option<BondOrder>) -> char {
    match order {
        Some(BondOrder::Single) => '-',
        Some(BondOrder::Double) => '=',
        Some(BondOrder::Triple) => '#',
        Some(BondOrder::Aromatic) => ':',
        None => '~',
    }
}

fn print_atom(atom: &PatternAtom) -> String {
    let mut s = String::from("[");
    match &atom.elements {
        ElementSet::Any => s.push('*'),
        ElementSet::Of(set) => {
            let names: Vec<&str> = set.iter().map(|e| e.symbol()).collect();
            s.push_str(&names.join(","));
        }
    }
    if let Some(q) = atom.charge {
        let _ = write!(s, ";{q:+}");
    }
    if let Some(h) = atom.exact_h {
        let _ = write!(s, ";H{h}");
    }
    if let Some(h) = atom.min_h {
        let _ = write!(s, ";h{h}+");
    }
    if let Some(h) = atom.max_h {
        let _ = write!(s, ";h{h}");
    }
    match atom.aromatic {
        Some(true) => s.push_str(";ar"),
        Some(false) => s.push_str(";al"),
        None => {}
    }
    match atom.in_ring {
        Some(true) => s.push_str(";ring"),
        Some(false) => s.push_str(";chain"),
        None => {}
    }
    if let Some(d) = atom.max_degree {
        let _ = write!(s, ";deg<={d}");
    }
    let _ = write!(s, ":{}]", atom.slot);
    s
}

/// Writes a pattern with every bond symbol explicit, starting each
/// component at its lowest slot and visiting neighbours in slot order.
pub fn print_pattern(pattern: &PatternGraph) -> String {
    let parts: Vec<String> = pattern
        .components()
        .iter()
        .map(|comp| Writer::new(pattern).component(comp[0]))
        .collect();
    parts.join(".")
}

struct Writer<'a> {
    pattern: &'a PatternGraph,
    preorder: BTreeMap<u32, usize>,
    children: BTreeMap<u32, Vec<(u32, Option<BondOrder>)>>,
    /// Ring bonds opened at an atom: (partner, order).
    opens: BTreeMap<u32, Vec<(u32, Option<BondOrder>)>>,
    /// Ring bonds closed at an atom: partner.
    closes: BTreeMap<u32, Vec<u32>>,
    digits: BTreeMap<(u32, u32), u32>,
    in_use: Vec<bool>,
}

impl<'a> Writer<'a> {
    fn new(pattern: &'a PatternGraph) -> Writer<'a> {
        Writer {
            pattern,
            preorder: BTreeMap::new(),
            children: BTreeMap::new(),
            opens: BTreeMap::new(),
            closes: BTreeMap::new(),
            digits: BTreeMap::new(),
            in_use: Vec::new(),
        }
    }

    fn component(mut self, root: u32) -> String {
        self.explore(root, None);
        let mut out = String::new();
        self.emit(root, &mut out);
        out
    }

    fn explore(&mut self, u: u32, parent: Option<u32>) {
        let idx = self.preorder.len();
        self.preorder.insert(u, idx);
        let mut nbrs: Vec<(u32, Option<BondOrder>)> = self.pattern.neighbors(u).collect();
        nbrs.sort_by_key(|&(v, _)| v);
        for (v, order) in nbrs {
            if Some(v) == parent {
                continue;
            }
            match self.preorder.get(&v) {
                None => {
                    self.children.entry(u).or_default().push((v, order));
                    self.explore(v, Some(u));
                }
                Some(&pv) if pv < self.preorder[&u] => {
                    self.opens.entry(v).or_default().push((u, order));
                    self.closes.entry(u).or_default().push(v);
                }
                Some(_) => {}
            }
        }
    }

    fn take_digit(&mut self) -> u32 {
        let d = match self.in_use.iter().skip(1).position(|&b| !b) {
            Some(i) => i + 1,
            None => self.in_use.len().max(1),
        };
        if self.in_use.len() <= d {
            self.in_use.resize(d + 1, false);
        }
        self.in_use[d] = true;
        d as u32
    }

    fn emit(&mut self, u: u32, out: &mut String) {
        out.push_str(&print_atom(self.pattern.atom(u).expect("slot in pattern")));
        for v in self.closes.get(&u).cloned().unwrap_or_default() {
            let d = self.digits.remove(&(v, u)).expect("ring opened");
            self.in_use[d as usize] = false;
            push_digit(out, d);
        }
        for (v, order) in self.opens.get(&u).cloned().unwrap_or_default() {
            let d = self.take_digit();
            self.digits.insert((u, v), d);
            out.push(bond_symbol(order));
            push_digit(out, d);
        }
        let kids = self.children.get(&u).cloned().unwrap_or_default();
        let last = kids.len().saturating_sub(1);
        for (i, (v, order)) in kids.into_iter().enumerate() {
            if i < last {
                out.push('(');
            }
            out.push(bond_symbol(order));
            self.emit(v, out);
            if i < last {
                out.push(')');
            }
        }
    }
}

fn push_digit(out: &mut String, d: u32) {
    if d < 10 {
        let _ = write!(out, "{d}");
    } else {
        let _ = write!(out, "%{d:02}");
    }
}
