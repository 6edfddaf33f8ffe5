//! The belief store: a set of ground atoms with pattern-matching queries.

use super::term::{match_atom, BeliefAtom, Bindings};
use super::AgentError;

/// Ground atoms in assertion order. Assertion has set semantics.
#[derive(Debug, Default, Clone)]
pub struct BeliefStore {
    facts: Vec<BeliefAtom>,
}

impl BeliefStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Assert a ground atom. Returns whether the belief was new.
    pub fn assert_fact(&mut self, fact: BeliefAtom) -> Result<bool, AgentError> {
        if !fact.is_ground() {
            return Err(AgentError::NonGroundAssert(fact.to_string()));
        }
        if self.facts.contains(&fact) {
            return Ok(false);
        }
        self.facts.push(fact);
        Ok(true)
    }

    /// Remove every fact matching the query (which may contain variables).
    /// Returns the number removed.
    pub fn retract(&mut self, query: &BeliefAtom) -> usize {
        let before = self.facts.len();
        self.facts.retain(|f| match_atom(query, f).is_none());
        before - self.facts.len()
    }

    /// Every substitution making the query ground against the store, in
    /// assertion order. Empty means "not believed".
    pub fn query(&self, query: &BeliefAtom) -> Vec<Bindings> {
        self.facts.iter().filter_map(|f| match_atom(query, f)).collect()
    }

    pub fn first_match(&self, query: &BeliefAtom) -> Option<Bindings> {
        self.facts.iter().find_map(|f| match_atom(query, f))
    }

    pub fn holds(&self, query: &BeliefAtom) -> bool {
        self.first_match(query).is_some()
    }

    /// Assert `fact` and retract the same-argument atom of the opposite
    /// predicate, keeping mutually exclusive pairs consistent
    /// (activated/deactivated, created/removed).
    pub fn assert_exclusive(&mut self, fact: BeliefAtom, opposite: &str) -> Result<bool, AgentError> {
        let counter = BeliefAtom::new(opposite, fact.args.clone());
        self.retract(&counter);
        self.assert_fact(fact)
    }

    pub fn len(&self) -> usize {
        self.facts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.facts.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &BeliefAtom> {
        self.facts.iter()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::term::{atom, Term};

    #[test]
    fn assert_is_idempotent() {
        let mut store = BeliefStore::new();
        let a = atom("activated", vec![Term::sym("c1")]);
        assert!(store.assert_fact(a.clone()).unwrap());
        assert!(!store.assert_fact(a).unwrap());
        assert_eq!(store.len(), 1);
    }

    #[test]
    fn non_ground_assert_is_rejected() {
        let mut store = BeliefStore::new();
        let a = atom("activated", vec![Term::var("c")]);
        assert!(matches!(store.assert_fact(a), Err(AgentError::NonGroundAssert(_))));
    }

    #[test]
    fn retract_with_variables_removes_all_matches() {
        let mut store = BeliefStore::new();
        for (p, v) in [("batch", 4i64), ("pause", 10)] {
            store
                .assert_fact(atom(
                    "property",
                    vec![Term::sym("c1"), Term::sym(p), Term::Int(v)],
                ))
                .unwrap();
        }
        store
            .assert_fact(atom("property", vec![Term::sym("c2"), Term::sym("batch"), Term::Int(9)]))
            .unwrap();
        let removed = store.retract(&atom(
            "property",
            vec![Term::sym("c1"), Term::var("p"), Term::var("v")],
        ));
        assert_eq!(removed, 2);
        assert_eq!(store.len(), 1);
    }

    #[test]
    fn query_returns_all_substitutions_in_order() {
        let mut store = BeliefStore::new();
        store.assert_fact(atom("event", vec![Term::sym("c1"), Term::sym("done")])).unwrap();
        store.assert_fact(atom("event", vec![Term::sym("c2"), Term::sym("done")])).unwrap();
        let subs = store.query(&atom("event", vec![Term::var("c"), Term::sym("done")]));
        assert_eq!(subs.len(), 2);
        assert_eq!(subs[0].get("c"), Some(&Term::sym("c1")));
        assert_eq!(subs[1].get("c"), Some(&Term::sym("c2")));
    }

    #[test]
    fn ground_query_on_present_atom_gives_one_empty_substitution() {
        let mut store = BeliefStore::new();
        let a = atom("component", vec![Term::sym("g1")]);
        store.assert_fact(a.clone()).unwrap();
        let subs = store.query(&a);
        assert_eq!(subs.len(), 1);
        assert!(subs[0].is_empty());
    }

    #[test]
    fn exclusive_assert_retracts_opposite() {
        let mut store = BeliefStore::new();
        store.assert_fact(atom("deactivated", vec![Term::sym("c")])).unwrap();
        store
            .assert_exclusive(atom("activated", vec![Term::sym("c")]), "deactivated")
            .unwrap();
        assert!(store.holds(&atom("activated", vec![Term::sym("c")])));
        assert!(!store.holds(&atom("deactivated", vec![Term::sym("c")])));
    }
}
