//! Elementary reaction templates: data model, the `.mrt` text format,
//! validation, and the shipped starter pack.

mod parse;
mod print;
mod validate;

pub use parse::{parse_pack, PackError};
pub use print::{print_pack, print_pattern};
pub use validate::{validate_template, Diagnostic, Severity};

use crate::molgraph::{BondOrder, Element};

/// Id of the auto-generated no-change template.
pub const TERMINATION_ID: &str = "termination";

/// Source of the shipped starter pack (`packs/starter.mrt`).
pub const STARTER_PACK: &str = include_str!("../../../../packs/starter.mrt");

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ElementSet {
    Any,
    /// Sorted, deduplicated.
    Of(Vec<Element>),
}

impl ElementSet {
    pub fn contains(&self, element: Element) -> bool {
        match self {
            ElementSet::Any => true,
            ElementSet::Of(set) => set.contains(&element),
        }
    }
}

/// One left-hand-side atom environment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatternAtom {
    pub slot: u32,
    pub elements: ElementSet,
    pub charge: Option<i8>,
    pub exact_h: Option<u8>,
    pub min_h: Option<u8>,
    pub max_h: Option<u8>,
    pub aromatic: Option<bool>,
    pub in_ring: Option<bool>,
    pub max_degree: Option<u8>,
}

impl PatternAtom {
    pub fn new(slot: u32, elements: ElementSet) -> PatternAtom {
        PatternAtom {
            slot,
            elements,
            charge: None,
            exact_h: None,
            min_h: None,
            max_h: None,
            aromatic: None,
            in_ring: None,
            max_degree: None,
        }
    }

    /// Hydrogens every matched atom is guaranteed to carry.
    pub fn guaranteed_h(&self) -> u8 {
        self.exact_h.or(self.min_h).unwrap_or(0)
    }
}

/// A pattern bond between two slots; `None` order matches any bond.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct PatternBond {
    pub a: u32,
    pub b: u32,
    pub order: Option<BondOrder>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PatternError {
    #[error("slot :{0} declared twice")]
    DuplicateSlot(u32),
    #[error("bond references undeclared slot :{0}")]
    UndeclaredSlot(u32),
    #[error("bond joins slot :{0} to itself")]
    SelfBond(u32),
    #[error("slots :{0} and :{1} bonded twice")]
    DuplicateBond(u32, u32),
}

/// A pattern graph held in normal form: atoms sorted by slot, bonds
/// oriented low→high and sorted, components listed by lowest slot.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PatternGraph {
    atoms: Vec<PatternAtom>,
    bonds: Vec<PatternBond>,
    components: Vec<Vec<u32>>,
}

impl PatternGraph {
    pub fn new(
        mut atoms: Vec<PatternAtom>,
        bonds: Vec<PatternBond>,
    ) -> Result<PatternGraph, PatternError> {
        atoms.sort_by_key(|a| a.slot);
        for pair in atoms.windows(2) {
            if pair[0].slot == pair[1].slot {
                return Err(PatternError::DuplicateSlot(pair[0].slot));
            }
        }
        let has = |s: u32| atoms.binary_search_by_key(&s, |a| a.slot).is_ok();
        let mut norm = Vec::with_capacity(bonds.len());
        for b in bonds {
            for s in [b.a, b.b] {
                if !has(s) {
                    return Err(PatternError::UndeclaredSlot(s));
                }
            }
            if b.a == b.b {
                return Err(PatternError::SelfBond(b.a));
            }
            norm.push(PatternBond {
                a: b.a.min(b.b),
                b: b.a.max(b.b),
                order: b.order,
            });
        }
        norm.sort();
        for pair in norm.windows(2) {
            if (pair[0].a, pair[0].b) == (pair[1].a, pair[1].b) {
                return Err(PatternError::DuplicateBond(pair[0].a, pair[0].b));
            }
        }
        let components = connected_components(&atoms, &norm);
        Ok(PatternGraph {
            atoms,
            bonds: norm,
            components,
        })
    }

    pub fn empty() -> PatternGraph {
        PatternGraph::default()
    }

    pub fn atoms(&self) -> &[PatternAtom] {
        &self.atoms
    }

    pub fn bonds(&self) -> &[PatternBond] {
        &self.bonds
    }

    pub fn components(&self) -> &[Vec<u32>] {
        &self.components
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn atom(&self, slot: u32) -> Option<&PatternAtom> {
        self.atoms
            .binary_search_by_key(&slot, |a| a.slot)
            .ok()
            .map(|i| &self.atoms[i])
    }

    pub fn bond(&self, a: u32, b: u32) -> Option<&PatternBond> {
        let (lo, hi) = (a.min(b), a.max(b));
        self.bonds.iter().find(|x| x.a == lo && x.b == hi)
    }

    /// Slots bonded to `slot`, with the pattern bond order.
    pub fn neighbors(&self, slot: u32) -> impl Iterator<Item = (u32, Option<BondOrder>)> + '_ {
        self.bonds.iter().filter_map(move |b| {
            if b.a == slot {
                Some((b.b, b.order))
            } else if b.b == slot {
                Some((b.a, b.order))
            } else {
                None
            }
        })
    }
}

fn connected_components(atoms: &[PatternAtom], bonds: &[PatternBond]) -> Vec<Vec<u32>> {
    let slots: Vec<u32> = atoms.iter().map(|a| a.slot).collect();
    let mut comp: Vec<Option<usize>> = vec![None; slots.len()];
    let idx = |s: u32| slots.binary_search(&s).expect("slot validated");
    let mut out: Vec<Vec<u32>> = Vec::new();
    for start in 0..slots.len() {
        if comp[start].is_some() {
            continue;
        }
        let id = out.len();
        let mut members = vec![slots[start]];
        comp[start] = Some(id);
        let mut stack = vec![slots[start]];
        while let Some(s) = stack.pop() {
            for b in bonds {
                let other = if b.a == s {
                    b.b
                } else if b.b == s {
                    b.a
                } else {
                    continue;
                };
                let j = idx(other);
                if comp[j].is_none() {
                    comp[j] = Some(id);
                    members.push(other);
                    stack.push(other);
                }
            }
        }
        members.sort_unstable();
        out.push(members);
    }
    out
}

/// One graph edit, addressed by pattern slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EditOp {
    MakeBond { a: u32, b: u32, order: BondOrder },
    BreakBond { a: u32, b: u32 },
    SetOrder { a: u32, b: u32, order: BondOrder },
    DeltaH { slot: u32, delta: i8 },
    DeltaCharge { slot: u32, delta: i8 },
    SetAromatic { slot: u32, aromatic: bool },
}

impl EditOp {
    pub fn slots(&self) -> Vec<u32> {
        match *self {
            EditOp::MakeBond { a, b, .. }
            | EditOp::BreakBond { a, b }
            | EditOp::SetOrder { a, b, .. } => vec![a, b],
            EditOp::DeltaH { slot, .. }
            | EditOp::DeltaCharge { slot, .. }
            | EditOp::SetAromatic { slot, .. } => vec![slot],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ElementaryTemplate {
    /// `class/condition/step_index`
    pub id: String,
    pub class_name: String,
    pub condition_name: String,
    pub step_index: u32,
    pub step_name: String,
    pub pattern: PatternGraph,
    pub edits: Vec<EditOp>,
    pub required_agents: Vec<PatternGraph>,
    /// Net charge and hydrogen change allowed without an explicit partner:
    /// -1 (deprotonation), 0, or +1 (protonation).
    pub proton_implicit: i8,
    pub is_termination: bool,
    /// Distinct pattern components must bind distinct molecules.
    pub distinct_molecules: bool,
}

impl ElementaryTemplate {
    /// The appended no-change step that marks mechanism completion.
    pub fn termination() -> ElementaryTemplate {
        ElementaryTemplate {
            id: TERMINATION_ID.to_string(),
            class_name: String::new(),
            condition_name: String::new(),
            step_index: 0,
            step_name: "Termination".to_string(),
            pattern: PatternGraph::empty(),
            edits: Vec::new(),
            required_agents: Vec::new(),
            proton_implicit: 0,
            is_termination: true,
            distinct_molecules: false,
        }
    }

    /// Net formal-charge change of one application.
    pub fn net_charge(&self) -> i32 {
        self.edits
            .iter()
            .map(|e| match e {
                EditOp::DeltaCharge { delta, .. } => *delta as i32,
                _ => 0,
            })
            .sum()
    }

    /// Net hydrogen change of one application.
    pub fn net_h(&self) -> i32 {
        self.edits
            .iter()
            .map(|e| match e {
                EditOp::DeltaH { delta, .. } => *delta as i32,
                _ => 0,
            })
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Condition {
    pub name: String,
    pub required_agents: Vec<PatternGraph>,
    pub distinct_molecules: bool,
    pub steps: Vec<ElementaryTemplate>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReactionClassDef {
    /// Possibly several names separated by " / ", as in a class catalog.
    pub class_name: String,
    pub conditions: Vec<Condition>,
}

impl ReactionClassDef {
    pub fn aliases(&self) -> impl Iterator<Item = &str> {
        self.class_name.split(" / ").map(str::trim)
    }

    /// Matches the full class name or any one of its aliases.
    pub fn matches(&self, name: &str) -> bool {
        let name = name.trim();
        self.class_name == name || self.aliases().any(|a| a == name)
    }
}

/// A parsed set of reaction classes.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TemplatePack {
    pub classes: Vec<ReactionClassDef>,
}

impl TemplatePack {
    pub fn parse(text: &str) -> Result<TemplatePack, PackError> {
        Ok(TemplatePack {
            classes: parse_pack(text)?,
        })
    }

    pub fn starter() -> TemplatePack {
        TemplatePack::parse(STARTER_PACK).expect("starter pack parses")
    }

    pub fn templates(&self) -> impl Iterator<Item = &ElementaryTemplate> {
        self.classes
            .iter()
            .flat_map(|c| c.conditions.iter())
            .flat_map(|c| c.steps.iter())
    }

    pub fn template(&self, id: &str) -> Option<&ElementaryTemplate> {
        self.templates().find(|t| t.id == id)
    }

    pub fn classes_matching<'a>(
        &'a self,
        name: &'a str,
    ) -> impl Iterator<Item = &'a ReactionClassDef> + 'a {
        self.classes.iter().filter(move |c| c.matches(name))
    }

    pub fn diagnostics(&self) -> Vec<Diagnostic> {
        self.templates().flat_map(validate_template).collect()
    }
}
