//! Dolev-Yao deduction and the rank function.

use std::collections::BTreeSet;

use super::term::{AtomKind, Term};
use super::NetError;

pub const DEFAULT_DEPTH: usize = 4;
pub const DEFAULT_MAX_TERMS: usize = 50_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClosureBudget {
    /// Largest depth of a term the intruder assembles itself.
    pub max_depth: usize,
    pub max_terms: usize,
}

impl Default for ClosureBudget {
    fn default() -> Self {
        ClosureBudget { max_depth: DEFAULT_DEPTH, max_terms: DEFAULT_MAX_TERMS }
    }
}

/// Decryption key for `{m}_k`.
fn inverse_key(k: &Term) -> Option<Term> {
    match k {
        Term::Atom(AtomKind::Key, _) | Term::DhKey(..) => Some(k.clone()),
        Term::Atom(AtomKind::PubKey, name) => Some(Term::privkey(name.clone())),
        _ => None,
    }
}

fn analyse(t: &Term, known: &BTreeSet<Term>, out: &mut Vec<Term>) {
    match t {
        Term::Pair(a, b) => out.extend([(**a).clone(), (**b).clone()]),
        Term::Enc(m, k) => {
            if inverse_key(k).is_some_and(|inv| known.contains(&inv)) {
                out.push((**m).clone());
            }
        }
        Term::Sig(m, _) => out.push((**m).clone()),
        Term::Atom(AtomKind::PrivKey, name) => out.push(Term::pubkey(name.clone())),
        Term::Exp(x) => {
            for y in known.iter().filter(|y| matches!(y, Term::Atom(AtomKind::DhSecret, _))) {
                out.push(Term::dh_key((**x).clone(), y.clone()));
            }
        }
        _ => {}
    }
}

fn constructible(t: &Term, known: &BTreeSet<Term>) -> bool {
    match t {
        Term::Atom(..) => false,
        Term::Sig(m, k) => known.contains(m) && matches!(**k, Term::Atom(AtomKind::PrivKey, _)) && known.contains(k),
        Term::DhKey(a, b) => {
            (known.contains(a) && known.contains(&Term::exp((**b).clone())))
                || (known.contains(b) && known.contains(&Term::exp((**a).clone())))
        }
        _ => t.children().iter().all(|c| known.contains(*c)),
    }
}

/// Smallest superset of `knowledge` closed under projection, decryption with
/// a known inverse key, signature opening and DH combination, plus any
/// subterm of depth at most `max_depth` whose parts are known.
pub fn deduction_closure(knowledge: &BTreeSet<Term>, budget: ClosureBudget) -> Result<BTreeSet<Term>, NetError> {
    let mut known = knowledge.clone();
    loop {
        let mut fresh = Vec::new();
        for t in &known {
            analyse(t, &known, &mut fresh);
        }
        let mut candidates = BTreeSet::new();
        for t in &known {
            for s in t.subterms() {
                if !s.is_atom() && s.depth() <= budget.max_depth && !known.contains(s) {
                    candidates.insert(s.clone());
                }
            }
        }
        fresh.extend(candidates.into_iter().filter(|c| constructible(c, &known)));
        let before = known.len();
        known.extend(fresh);
        if known.len() > budget.max_terms {
            return Err(NetError::BudgetExceeded { partial: known.len() });
        }
        if known.len() == before {
            return Ok(known);
        }
    }
}

/// Whether `target` follows from a closed knowledge set by construction.
pub fn can_derive(closure: &BTreeSet<Term>, target: &Term) -> bool {
    if closure.contains(target) {
        return true;
    }
    match target {
        Term::Atom(AtomKind::PubKey, name) => closure.contains(&Term::privkey(name.clone())),
        Term::Atom(..) => false,
        Term::Sig(m, k) => matches!(**k, Term::Atom(AtomKind::PrivKey, _)) && closure.contains(k) && can_derive(closure, m),
        Term::DhKey(a, b) => {
            (can_derive(closure, a) && can_derive(closure, &Term::exp((**b).clone())))
                || (can_derive(closure, b) && can_derive(closure, &Term::exp((**a).clone())))
        }
        _ => target.children().iter().all(|c| can_derive(closure, c)),
    }
}

/// Rank 0 marks terms that must stay secret.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankAssignment {
    pub secret_nonce_prefixes: Vec<String>,
    pub secret_int_prefixes: Vec<String>,
}

impl Default for RankAssignment {
    fn default() -> Self {
        RankAssignment { secret_nonce_prefixes: vec!["n2".into()], secret_int_prefixes: vec!["share".into(), "contrib".into()] }
    }
}

impl RankAssignment {
    pub fn rank(&self, t: &Term) -> u8 {
        let prefixed = |name: &str, prefixes: &[String]| prefixes.iter().any(|p| name.starts_with(p.as_str()));
        match t {
            Term::Atom(AtomKind::Id | AtomKind::Label | AtomKind::PubKey, _) => 1,
            Term::Atom(AtomKind::Nonce, n) => u8::from(!prefixed(n, &self.secret_nonce_prefixes)),
            Term::Atom(AtomKind::Int, n) => u8::from(!prefixed(n, &self.secret_int_prefixes)),
            Term::Atom(AtomKind::Key | AtomKind::PrivKey | AtomKind::DhSecret, _) => 0,
            Term::Pair(a, b) => self.rank(a).min(self.rank(b)),
            Term::Enc(_, k) => self.rank(k),
            Term::Sig(..) | Term::Exp(_) | Term::DhKey(..) => 0,
            Term::Hash(_) => 1,
        }
    }

    /// Rank-0 atoms and DH shared keys. Rank-0 compounds that travel in
    /// clear (signatures, `g^x`, ciphertexts) are not counted.
    pub fn is_leak(&self, t: &Term) -> bool {
        matches!(t, Term::DhKey(..)) || (t.is_atom() && self.rank(t) == 0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankReport {
    pub holds: bool,
    pub leaked: Vec<Term>,
    pub closure_size: usize,
}

/// Closes `observed` and lists every derivable secret.
pub fn rank_report(observed: &BTreeSet<Term>, rank: &RankAssignment) -> Result<RankReport, NetError> {
    let closure = deduction_closure(observed, ClosureBudget::default())?;
    let leaked: Vec<Term> = closure.iter().filter(|t| rank.is_leak(t)).cloned().collect();
    Ok(RankReport { holds: leaked.is_empty(), leaked, closure_size: closure.len() })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Policy {
    Passive,
    ReplayScript,
    BlockScript,
}

/// The network attacker: sees every envelope and remembers every term.
#[derive(Debug, Clone)]
pub struct IntruderState {
    knowledge: BTreeSet<Term>,
    pub policy: Policy,
}

impl IntruderState {
    pub fn new<I: IntoIterator<Item = Term>>(initial: I) -> Self {
        IntruderState { knowledge: initial.into_iter().collect(), policy: Policy::Passive }
    }

    pub fn observe(&mut self, t: Term) {
        self.knowledge.insert(t);
    }

    pub fn knowledge(&self) -> &BTreeSet<Term> {
        &self.knowledge
    }

    pub fn closure(&self) -> Result<BTreeSet<Term>, NetError> {
        deduction_closure(&self.knowledge, ClosureBudget::default())
    }

    pub fn can_send(&self, t: &Term) -> Result<bool, NetError> {
        Ok(can_derive(&self.closure()?, t))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(terms: &[Term]) -> BTreeSet<Term> {
        terms.iter().cloned().collect()
    }

    #[test]
    fn decrypt_with_key() {
        let m = Term::nonce("n2.x");
        let k = Term::key("k");
        let c = deduction_closure(&set(&[Term::enc(m.clone(), k.clone()), k]), ClosureBudget::default()).unwrap();
        assert!(c.contains(&m));
        let c = deduction_closure(&set(&[Term::enc(m.clone(), Term::key("k"))]), ClosureBudget::default()).unwrap();
        assert!(!c.contains(&m));
        let pk = Term::pubkey("B");
        let c = deduction_closure(&set(&[Term::enc(m.clone(), pk), Term::privkey("B")]), ClosureBudget::default()).unwrap();
        assert!(c.contains(&m));
    }

    #[test]
    fn projection() {
        let (a, b) = (Term::id("a"), Term::id("b"));
        let c = deduction_closure(&set(&[Term::pair(a.clone(), b.clone())]), ClosureBudget::default()).unwrap();
        assert!(c.contains(&a) && c.contains(&b));
    }

    #[test]
    fn dh_combination() {
        let (x, y) = (Term::dh_secret("x"), Term::dh_secret("y"));
        let c = deduction_closure(&set(&[Term::exp(x.clone()), y.clone()]), ClosureBudget::default()).unwrap();
        assert!(c.contains(&Term::dh_key(x.clone(), y.clone())));
        let c = deduction_closure(&set(&[Term::exp(x.clone()), Term::exp(y.clone())]), ClosureBudget::default()).unwrap();
        assert!(!can_derive(&c, &Term::dh_key(x, y)));
    }

    #[test]
    fn construction_on_demand() {
        let c = deduction_closure(&set(&[Term::id("A"), Term::nonce("n"), Term::key("k")]), ClosureBudget::default()).unwrap();
        let target = Term::enc(Term::pair(Term::id("A"), Term::nonce("n")), Term::key("k"));
        assert!(can_derive(&c, &target));
        assert!(!can_derive(&c, &Term::sig(Term::id("A"), Term::privkey("A"))));
    }

    #[test]
    fn budget() {
        let many: BTreeSet<Term> = (0..50).map(|i| Term::pair(Term::id(format!("a{i}")), Term::id("b"))).collect();
        let tight = ClosureBudget { max_depth: 4, max_terms: 60 };
        assert!(matches!(deduction_closure(&many, tight), Err(NetError::BudgetExceeded { .. })));
    }

    #[test]
    fn rank_examples() {
        let r = RankAssignment::default();
        assert_eq!(r.rank(&Term::nonce("n1:00")), 1);
        assert_eq!(r.rank(&Term::nonce("n2:00")), 0);
        assert_eq!(r.rank(&Term::pair(Term::id("A"), Term::nonce("n2:00"))), 0);
        assert_eq!(r.rank(&Term::enc(Term::id("A"), Term::pubkey("B"))), 1);
        assert!(rank_report(&BTreeSet::new(), &r).unwrap().holds);
        let leaked = set(&[Term::pair(Term::id("A"), Term::key("kAB"))]);
        assert!(!rank_report(&leaked, &r).unwrap().holds);
    }
}
