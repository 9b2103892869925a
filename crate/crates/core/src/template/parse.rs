use std::collections::{BTreeMap, HashSet};

use super::{
    Condition, EditOp, ElementSet, ElementaryTemplate, PatternAtom, PatternBond, PatternError,
    PatternGraph, ReactionClassDef,
};
use crate::molgraph::{BondOrder, Element};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PackErrorKind {
    #[error("expected {0}")]
    Expected(String),
    #[error("unknown element `{0}`")]
    UnknownElement(String),
    #[error("unknown atom constraint `{0}`")]
    UnknownConstraint(String),
    #[error("atom constraint `{0}` given twice or contradicts another")]
    ConflictingConstraint(String),
    #[error("unknown edit `{0}`")]
    UnknownEdit(String),
    #[error("bad arguments to {edit}: {message}")]
    BadArguments { edit: String, message: String },
    #[error("unknown bond order `{0}`")]
    UnknownBondOrder(String),
    #[error("edit references undeclared slot :{slot} in template {template}")]
    UndeclaredSlot { slot: u32, template: String },
    #[error("step {found} out of order, expected step {expected}")]
    StepOutOfOrder { expected: u32, found: u32 },
    #[error("duplicate template id {0}")]
    DuplicateTemplateId(String),
    #[error("proton_implicit must be -1, 0 or +1, got {0}")]
    ProtonImplicit(i64),
    #[error("unclosed ring bond {0}")]
    UnclosedRing(u32),
    #[error("ring bond {0} has no bond symbol or conflicting symbols")]
    RingBondOrder(u32),
    #[error("{0}")]
    Pattern(#[from] PatternError),
}

/// A pack syntax or semantic error, with 1-based line and column.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("line {line}, column {col}: {kind}")]
pub struct PackError {
    pub line: usize,
    pub col: usize,
    pub kind: PackErrorKind,
}

/// Parses a template pack document. An empty document (or one holding only
/// comments) yields no classes.
pub fn parse_pack(text: &str) -> Result<Vec<ReactionClassDef>, PackError> {
    let mut p = Parser {
        text: text.chars().collect(),
        pos: 0,
        ids: HashSet::new(),
    };
    let mut classes = Vec::new();
    loop {
        p.skip_trivia();
        if p.at_end() {
            break;
        }
        classes.push(p.class()?);
    }
    Ok(classes)
}

enum Arg {
    Slot(u32),
    Int(i64),
    Word(String),
}

struct Parser {
    text: Vec<char>,
    pos: usize,
    ids: HashSet<String>,
}

type PResult<T> = Result<T, PackError>;

impl Parser {
    fn error_at(&self, pos: usize, kind: PackErrorKind) -> PackError {
        let mut line = 1;
        let mut col = 1;
        for &c in &self.text[..pos.min(self.text.len())] {
            if c == '\n' {
                line += 1;
                col = 1;
            } else {
                col += 1;
            }
        }
        PackError { line, col, kind }
    }

    fn error(&self, kind: PackErrorKind) -> PackError {
        self.error_at(self.pos, kind)
    }

    fn expected<T>(&self, what: &str) -> PResult<T> {
        Err(self.error(PackErrorKind::Expected(what.to_string())))
    }

    fn at_end(&self) -> bool {
        self.pos >= self.text.len()
    }

    fn peek(&self) -> Option<char> {
        self.text.get(self.pos).copied()
    }

    fn skip_trivia(&mut self) {
        while let Some(c) = self.peek() {
            if c.is_whitespace() {
                self.pos += 1;
            } else if c == '#' {
                while let Some(c) = self.peek() {
                    if c == '\n' {
                        break;
                    }
                    self.pos += 1;
                }
            } else {
                break;
            }
        }
    }

    fn eat(&mut self, c: char) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect_char(&mut self, c: char) -> PResult<()> {
        self.skip_trivia();
        if self.eat(c) {
            Ok(())
        } else {
            self.expected(&format!("`{c}`"))
        }
    }

    fn word(&mut self) -> Option<String> {
        let start = self.pos;
        while let Some(c) = self.peek() {
            let ok = if self.pos == start {
                c.is_ascii_alphabetic() || c == '_'
            } else {
                c.is_ascii_alphanumeric() || c == '_'
            };
            if !ok {
                break;
            }
            self.pos += 1;
        }
        (self.pos > start).then(|| self.text[start..self.pos].iter().collect())
    }

    fn peek_word(&mut self) -> Option<String> {
        self.skip_trivia();
        let save = self.pos;
        let w = self.word();
        self.pos = save;
        w
    }

    fn keyword(&mut self, kw: &str) -> PResult<()> {
        self.skip_trivia();
        let save = self.pos;
        match self.word() {
            Some(w) if w == kw => Ok(()),
            _ => {
                self.pos = save;
                self.expected(&format!("`{kw}`"))
            }
        }
    }

    fn string(&mut self) -> PResult<String> {
        self.skip_trivia();
        if !self.eat('"') {
            return self.expected("a quoted string");
        }
        let mut out = String::new();
        loop {
            match self.peek() {
                None | Some('\n') => return self.expected("closing `\"`"),
                Some('"') => {
                    self.pos += 1;
                    return Ok(out);
                }
                Some('\\') => {
                    self.pos += 1;
                    match self.peek() {
                        Some(c @ ('"' | '\\')) => {
                            out.push(c);
                            self.pos += 1;
                        }
                        _ => return self.expected("`\\\"` or `\\\\`"),
                    }
                }
                Some(c) => {
                    out.push(c);
                    self.pos += 1;
                }
            }
        }
    }

    fn digits(&mut self) -> Option<u64> {
        let start = self.pos;
        while matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
            self.pos += 1;
        }
        if self.pos == start {
            return None;
        }
        self.text[start..self.pos]
            .iter()
            .collect::<String>()
            .parse()
            .ok()
    }

    fn signed_int(&mut self) -> PResult<i64> {
        self.skip_trivia();
        let neg = if self.eat('-') {
            true
        } else {
            self.eat('+');
            false
        };
        match self.digits() {
            Some(v) => Ok(if neg { -(v as i64) } else { v as i64 }),
            None => self.expected("an integer"),
        }
    }

    fn class(&mut self) -> PResult<ReactionClassDef> {
        self.keyword("class")?;
        let class_name = self.string()?;
        self.expect_char('{')?;
        let mut conditions = Vec::new();
        loop {
            self.skip_trivia();
            if self.eat('}') {
                break;
            }
            conditions.push(self.condition(&class_name)?);
        }
        if conditions.is_empty() {
            return self.expected("at least one condition");
        }
        Ok(ReactionClassDef {
            class_name,
            conditions,
        })
    }

    fn condition(&mut self, class_name: &str) -> PResult<Condition> {
        self.keyword("condition")?;
        let name = self.string()?;
        self.expect_char('{')?;
        let mut required_agents = Vec::new();
        if self.peek_word().as_deref() == Some("agents") {
            self.keyword("agents")?;
            self.expect_char(':')?;
            if self.peek_word().as_deref() == Some("none") {
                self.keyword("none")?;
            } else {
                loop {
                    required_agents.push(self.pattern()?);
                    self.skip_trivia();
                    if !self.eat(',') {
                        break;
                    }
                }
            }
        }
        let mut distinct_molecules = false;
        while self.peek_word().as_deref() == Some("distinct_molecules") {
            self.keyword("distinct_molecules")?;
            distinct_molecules = true;
        }
        let mut steps = Vec::new();
        loop {
            self.skip_trivia();
            if self.eat('}') {
                break;
            }
            let expected = steps.len() as u32 + 1;
            let step = self.step(class_name, &name, expected)?;
            steps.push(step);
        }
        if steps.is_empty() {
            return self.expected("at least one step");
        }
        for step in &mut steps {
            step.required_agents = required_agents.clone();
            step.distinct_molecules = distinct_molecules;
        }
        Ok(Condition {
            name,
            required_agents,
            distinct_molecules,
            steps,
        })
    }

    fn step(
        &mut self,
        class_name: &str,
        condition_name: &str,
        expected: u32,
    ) -> PResult<ElementaryTemplate> {
        let start = self.pos;
        self.keyword("step")?;
        self.skip_trivia();
        let index_pos = self.pos;
        let index = self.signed_int()?;
        if index != expected as i64 {
            return Err(self.error_at(
                index_pos,
                PackErrorKind::StepOutOfOrder {
                    expected,
                    found: index.max(0) as u32,
                },
            ));
        }
        let step_name = self.string()?;
        let mut proton_implicit = 0i8;
        if self.peek_word().as_deref() == Some("proton_implicit") {
            self.keyword("proton_implicit")?;
            self.expect_char('(')?;
            self.skip_trivia();
            let value_pos = self.pos;
            let v = self.signed_int()?;
            if !(-1..=1).contains(&v) {
                return Err(self.error_at(value_pos, PackErrorKind::ProtonImplicit(v)));
            }
            proton_implicit = v as i8;
            self.expect_char(')')?;
        }
        self.expect_char('{')?;
        self.keyword("pattern")?;
        self.expect_char(':')?;
        let pattern = self.pattern()?;
        self.keyword("edits")?;
        self.expect_char(':')?;
        let id = format!("{class_name}/{condition_name}/{index}");
        let mut edits = Vec::new();
        loop {
            self.skip_trivia();
            let edit_pos = self.pos;
            let edit = self.edit()?;
            for slot in edit.slots() {
                if pattern.atom(slot).is_none() {
                    return Err(self.error_at(
                        edit_pos,
                        PackErrorKind::UndeclaredSlot {
                            slot,
                            template: id.clone(),
                        },
                    ));
                }
            }
            edits.push(edit);
            self.skip_trivia();
            if !self.eat(',') {
                break;
            }
        }
        self.expect_char('}')?;
        if !self.ids.insert(id.clone()) {
            return Err(self.error_at(start, PackErrorKind::DuplicateTemplateId(id)));
        }
        Ok(ElementaryTemplate {
            id,
            class_name: class_name.to_string(),
            condition_name: condition_name.to_string(),
            step_index: index as u32,
            step_name,
            pattern,
            edits,
            required_agents: Vec::new(),
            proton_implicit,
            is_termination: false,
            distinct_molecules: false,
        })
    }

    fn edit(&mut self) -> PResult<EditOp> {
        let name_pos = self.pos;
        let Some(name) = self.word() else {
            return self.expected("an edit");
        };
        self.expect_char('(')?;
        let mut args = Vec::new();
        self.skip_trivia();
        if !self.eat(')') {
            loop {
                args.push(self.arg()?);
                self.skip_trivia();
                if self.eat(')') {
                    break;
                }
                if !self.eat(',') {
                    return self.expected("`,` or `)`");
                }
            }
        }
        let bad = |p: &Parser, message: &str| {
            p.error_at(
                name_pos,
                PackErrorKind::BadArguments {
                    edit: name.clone(),
                    message: message.to_string(),
                },
            )
        };
        let order = |p: &Parser, arg: &Arg| -> PResult<BondOrder> {
            let text = match arg {
                Arg::Word(w) => w.clone(),
                Arg::Int(i) => i.to_string(),
                Arg::Slot(_) => return Err(bad(p, "expected a bond order")),
            };
            BondOrder::from_name(&text)
                .ok_or_else(|| p.error_at(name_pos, PackErrorKind::UnknownBondOrder(text)))
        };
        let delta = |p: &Parser, arg: &Arg| -> PResult<i8> {
            match arg {
                Arg::Int(v) if (-8..=8).contains(v) => Ok(*v as i8),
                _ => Err(bad(p, "expected a small signed integer")),
            }
        };
        match (name.as_str(), args.as_slice()) {
            ("make_bond", [Arg::Slot(a), Arg::Slot(b), o]) => Ok(EditOp::MakeBond {
                a: *a,
                b: *b,
                order: order(self, o)?,
            }),
            ("break_bond", [Arg::Slot(a), Arg::Slot(b)]) => Ok(EditOp::BreakBond { a: *a, b: *b }),
            ("set_order", [Arg::Slot(a), Arg::Slot(b), o]) => Ok(EditOp::SetOrder {
                a: *a,
                b: *b,
                order: order(self, o)?,
            }),
            ("delta_h", [Arg::Slot(s), d]) => Ok(EditOp::DeltaH {
                slot: *s,
                delta: delta(self, d)?,
            }),
            ("delta_charge", [Arg::Slot(s), d]) => Ok(EditOp::DeltaCharge {
                slot: *s,
                delta: delta(self, d)?,
            }),
            ("set_aromatic", [Arg::Slot(s), Arg::Word(w)]) if w == "true" || w == "false" => {
                Ok(EditOp::SetAromatic {
                    slot: *s,
                    aromatic: w == "true",
                })
            }
            ("make_bond" | "set_order", _) => Err(bad(self, "expected (:a, :b, order)")),
            ("break_bond", _) => Err(bad(self, "expected (:a, :b)")),
            ("delta_h" | "delta_charge", _) => Err(bad(self, "expected (:slot, n)")),
            ("set_aromatic", _) => Err(bad(self, "expected (:slot, true|false)")),
            _ => Err(self.error_at(name_pos, PackErrorKind::UnknownEdit(name.clone()))),
        }
    }

    fn arg(&mut self) -> PResult<Arg> {
        self.skip_trivia();
        match self.peek() {
            Some(':') => {
                self.pos += 1;
                match self.digits() {
                    Some(v) if v <= u32::MAX as u64 => Ok(Arg::Slot(v as u32)),
                    _ => self.expected("a slot number after `:`"),
                }
            }
            Some(c) if c == '+' || c == '-' || c.is_ascii_digit() => {
                Ok(Arg::Int(self.signed_int()?))
            }
            _ => match self.word() {
                Some(w) => Ok(Arg::Word(w)),
                None => self.expected("an edit argument"),
            },
        }
    }

    /// Pattern text is contiguous: whitespace ends it.
    fn pattern(&mut self) -> PResult<PatternGraph> {
        self.skip_trivia();
        let start = self.pos;
        let mut atoms: Vec<PatternAtom> = Vec::new();
        let mut bonds: Vec<PatternBond> = Vec::new();
        let mut rings: BTreeMap<u32, (u32, Option<Option<BondOrder>>)> = BTreeMap::new();
        let mut prev: Option<u32> = None;
        let mut pending: Option<Option<BondOrder>> = None;
        let mut branches: Vec<u32> = Vec::new();
        loop {
            match self.peek() {
                Some('[') => {
                    let atom = self.pattern_atom()?;
                    if let Some(p) = prev {
                        let Some(order) = pending.take() else {
                            return self.expected("a bond symbol before the atom");
                        };
                        bonds.push(PatternBond {
                            a: p,
                            b: atom.slot,
                            order,
                        });
                    } else if pending.is_some() {
                        return self.expected("an atom before the bond symbol");
                    }
                    prev = Some(atom.slot);
                    atoms.push(atom);
                }
                Some(c @ ('-' | '=' | '#' | ':' | '~')) => {
                    if prev.is_none() || pending.is_some() {
                        return self.expected("an atom");
                    }
                    self.pos += 1;
                    pending = Some(match c {
                        '-' => Some(BondOrder::Single),
                        '=' => Some(BondOrder::Double),
                        '#' => Some(BondOrder::Triple),
                        ':' => Some(BondOrder::Aromatic),
                        _ => None,
                    });
                }
                Some(c) if c.is_ascii_digit() || c == '%' => {
                    let Some(at) = prev else {
                        return self.expected("an atom before the ring bond");
                    };
                    let digit_pos = self.pos;
                    let n = if self.eat('%') {
                        let d: String = self.text[self.pos..].iter().take(2).collect();
                        if d.len() != 2 || !d.chars().all(|c| c.is_ascii_digit()) {
                            return self.expected("two digits after `%`");
                        }
                        self.pos += 2;
                        d.parse().unwrap()
                    } else {
                        self.pos += 1;
                        c.to_digit(10).unwrap()
                    };
                    let here = pending.take();
                    if let Some((other, there)) = rings.remove(&n) {
                        let order = match (there, here) {
                            (Some(x), None) | (None, Some(x)) => x,
                            (Some(x), Some(y)) if x == y => x,
                            _ => {
                                return Err(
                                    self.error_at(digit_pos, PackErrorKind::RingBondOrder(n))
                                )
                            }
                        };
                        bonds.push(PatternBond {
                            a: other,
                            b: at,
                            order,
                        });
                    } else {
                        rings.insert(n, (at, here));
                    }
                }
                Some('(') => {
                    let Some(p) = prev else {
                        return self.expected("an atom before `(`");
                    };
                    if pending.is_some() {
                        return self.expected("an atom");
                    }
                    self.pos += 1;
                    branches.push(p);
                }
                Some(')') => {
                    if pending.is_some() {
                        return self.expected("an atom");
                    }
                    let Some(p) = branches.pop() else {
                        return self.expected("a matching `(`");
                    };
                    self.pos += 1;
                    prev = Some(p);
                }
                Some('.') => {
                    if pending.is_some() || !branches.is_empty() || prev.is_none() {
                        return self.expected("an atom");
                    }
                    self.pos += 1;
                    prev = None;
                }
                _ => break,
            }
        }
        if atoms.is_empty() || pending.is_some() || prev.is_none() {
            return self.expected("a pattern atom");
        }
        if !branches.is_empty() {
            return self.expected("`)`");
        }
        if let Some((&n, _)) = rings.iter().next() {
            return Err(self.error(PackErrorKind::UnclosedRing(n)));
        }
        PatternGraph::new(atoms, bonds).map_err(|e| self.error_at(start, e.into()))
    }

    fn pattern_atom(&mut self) -> PResult<PatternAtom> {
        self.pos += 1; // '['
        let elements = if self.eat('*') {
            ElementSet::Any
        } else {
            let mut set = Vec::new();
            loop {
                set.push(self.element()?);
                if !self.eat(',') {
                    break;
                }
            }
            set.sort();
            set.dedup();
            ElementSet::Of(set)
        };
        let mut atom = PatternAtom::new(0, elements);
        while self.eat(';') {
            self.constraint(&mut atom)?;
        }
        if !self.eat(':') {
            return self.expected("`:` and a slot number");
        }
        match self.digits() {
            Some(v) if v <= u32::MAX as u64 => atom.slot = v as u32,
            _ => return self.expected("a slot number"),
        }
        if !self.eat(']') {
            return self.expected("`]`");
        }
        Ok(atom)
    }

    fn element(&mut self) -> PResult<Element> {
        let start = self.pos;
        let Some(first) = self.peek().filter(|c| c.is_ascii_uppercase()) else {
            return self.expected("an element symbol");
        };
        self.pos += 1;
        if let Some(second) = self.peek().filter(|c| c.is_ascii_lowercase()) {
            let two: String = [first, second].iter().collect();
            if let Some(e) = Element::from_symbol(&two) {
                self.pos += 1;
                return Ok(e);
            }
            return Err(self.error_at(start, PackErrorKind::UnknownElement(two)));
        }
        Element::from_symbol(&first.to_string())
            .ok_or_else(|| self.error_at(start, PackErrorKind::UnknownElement(first.to_string())))
    }

    fn constraint(&mut self, atom: &mut PatternAtom) -> PResult<()> {
        let start = self.pos;
        let conflict = |p: &Parser| {
            let text: String = p.text[start..p.pos].iter().collect();
            Err(p.error_at(start, PackErrorKind::ConflictingConstraint(text)))
        };
        fn set<T>(slot: &mut Option<T>, v: T) -> bool {
            if slot.is_some() {
                return false;
            }
            *slot = Some(v);
            true
        }
        let small = |p: &mut Parser| -> PResult<u8> {
            match p.digits() {
                Some(v) if v <= 16 => Ok(v as u8),
                _ => p.expected("a small count"),
            }
        };
        if let Some(c @ ('+' | '-')) = self.peek() {
            self.pos += 1;
            let v = self.digits().unwrap_or(1).min(8) as i8;
            let v = if c == '-' { -v } else { v };
            if !set(&mut atom.charge, v) {
                return conflict(self);
            }
            return Ok(());
        }
        let Some(word) = self.letters() else {
            return self.expected("an atom constraint");
        };
        let ok = match word.as_str() {
            "H" => {
                let n = small(self)?;
                set(&mut atom.exact_h, n)
            }
            "h" => {
                let n = small(self)?;
                if self.eat('+') {
                    set(&mut atom.min_h, n)
                } else {
                    set(&mut atom.max_h, n)
                }
            }
            "ar" => set(&mut atom.aromatic, true),
            "al" => set(&mut atom.aromatic, false),
            "ring" => set(&mut atom.in_ring, true),
            "chain" => set(&mut atom.in_ring, false),
            "deg" => {
                if !(self.eat('<') && self.eat('=')) {
                    return self.expected("`<=` after `deg`");
                }
                let n = small(self)?;
                set(&mut atom.max_degree, n)
            }
            _ => {
                return Err(self.error_at(start, PackErrorKind::UnknownConstraint(word)));
            }
        };
        if ok {
            Ok(())
        } else {
            conflict(self)
        }
    }

    fn letters(&mut self) -> Option<String> {
        let start = self.pos;
        while matches!(self.peek(), Some(c) if c.is_ascii_alphabetic()) {
            self.pos += 1;
        }
        (self.pos > start).then(|| self.text[start..self.pos].iter().collect())
    }
}
