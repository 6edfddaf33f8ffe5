//! Terms, belief atoms and syntactic matching.
//!
//! Stored beliefs are ground; queries may contain variables (written
//! `?name`). Matching is one-way pattern matching with consistent bindings
//! for repeated variables. Function symbols nest one level (enough for
//! forms like `event(c1, queue_grew(5))`).

use std::collections::BTreeMap;
use std::fmt;

use crate::property::PropertyValue;

#[derive(Debug, Clone, PartialEq)]
pub enum Term {
    /// A bare identifier: component ids, type names, enum-like symbols.
    Sym(String),
    Int(i64),
    Float(f64),
    Bool(bool),
    Str(String),
    /// A query variable `?name`.
    Var(String),
    /// A functor application, e.g. `queue_grew(5)`.
    App(String, Vec<Term>),
}

impl Term {
    pub fn sym(s: impl Into<String>) -> Term {
        Term::Sym(s.into())
    }

    pub fn var(s: impl Into<String>) -> Term {
        Term::Var(s.into())
    }

    pub fn app(functor: impl Into<String>, args: Vec<Term>) -> Term {
        Term::App(functor.into(), args)
    }

    pub fn is_ground(&self) -> bool {
        match self {
            Term::Var(_) => false,
            Term::App(_, args) => args.iter().all(Term::is_ground),
            _ => true,
        }
    }

    /// The identifier behind a symbol or string term.
    pub fn as_name(&self) -> Option<&str> {
        match self {
            Term::Sym(s) | Term::Str(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_int(&self) -> Option<i64> {
        match self {
            Term::Int(i) => Some(*i),
            _ => None,
        }
    }

    pub fn apply(&self, bindings: &Bindings) -> Term {
        match self {
            Term::Var(v) => bindings.get(v).cloned().unwrap_or_else(|| self.clone()),
            Term::App(f, args) => {
                Term::App(f.clone(), args.iter().map(|a| a.apply(bindings)).collect())
            }
            other => other.clone(),
        }
    }
}

impl From<PropertyValue> for Term {
    fn from(v: PropertyValue) -> Term {
        match v {
            PropertyValue::Str(s) => Term::Str(s),
            PropertyValue::Int(i) => Term::Int(i),
            PropertyValue::Float(x) => Term::Float(x),
            PropertyValue::Bool(b) => Term::Bool(b),
        }
    }
}

impl From<&PropertyValue> for Term {
    fn from(v: &PropertyValue) -> Term {
        Term::from(v.clone())
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Sym(s) => f.write_str(s),
            Term::Int(i) => write!(f, "{i}"),
            Term::Float(x) => write!(f, "{x}"),
            Term::Bool(b) => write!(f, "{b}"),
            Term::Str(s) => write!(f, "{s:?}"),
            Term::Var(v) => write!(f, "?{v}"),
            Term::App(functor, args) => {
                write!(f, "{functor}(")?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{a}")?;
                }
                f.write_str(")")
            }
        }
    }
}

/// A predicate applied to terms.
#[derive(Debug, Clone, PartialEq)]
pub struct BeliefAtom {
    pub predicate: String,
    pub args: Vec<Term>,
}

impl BeliefAtom {
    pub fn new(predicate: impl Into<String>, args: Vec<Term>) -> Self {
        Self { predicate: predicate.into(), args }
    }

    pub fn is_ground(&self) -> bool {
        self.args.iter().all(Term::is_ground)
    }

    pub fn apply(&self, bindings: &Bindings) -> BeliefAtom {
        BeliefAtom {
            predicate: self.predicate.clone(),
            args: self.args.iter().map(|a| a.apply(bindings)).collect(),
        }
    }
}

impl fmt::Display for BeliefAtom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", Term::App(self.predicate.clone(), self.args.clone()))
    }
}

/// Shorthand for `BeliefAtom::new`.
pub fn atom(predicate: &str, args: Vec<Term>) -> BeliefAtom {
    BeliefAtom::new(predicate, args)
}

pub type Bindings = BTreeMap<String, Term>;

/// Match a query atom against a ground fact; `None` on mismatch.
pub fn match_atom(query: &BeliefAtom, fact: &BeliefAtom) -> Option<Bindings> {
    if query.predicate != fact.predicate || query.args.len() != fact.args.len() {
        return None;
    }
    let mut bindings = Bindings::new();
    for (q, f) in query.args.iter().zip(&fact.args) {
        if !match_term(q, f, &mut bindings) {
            return None;
        }
    }
    Some(bindings)
}

fn match_term(query: &Term, fact: &Term, bindings: &mut Bindings) -> bool {
    match query {
        Term::Var(v) => match bindings.get(v) {
            Some(bound) => bound == fact,
            None => {
                bindings.insert(v.clone(), fact.clone());
                true
            }
        },
        Term::App(qf, qargs) => match fact {
            Term::App(ff, fargs) if qf == ff && qargs.len() == fargs.len() => {
                qargs.iter().zip(fargs).all(|(q, f)| match_term(q, f, bindings))
            }
            _ => false,
        },
        other => other == fact,
    }
}
