//! Grounded uniform-cost search over a PDDL-lite domain.
//!
//! Operators are grounded lazily: at each state the positive preconditions
//! are unified in order against static facts and the current state, then
//! negative preconditions are checked on the complete binding.

use super::pddl::{Domain, Term};
use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap, HashMap, HashSet};
use std::fmt;

/// A ground atom `(pred arg...)`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Atom {
    pub predicate: String,
    pub args: Vec<String>,
}

impl Atom {
    pub fn new(predicate: &str, args: &[&str]) -> Self {
        Self {
            predicate: predicate.to_string(),
            args: args.iter().map(|a| a.to_string()).collect(),
        }
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}", self.predicate)?;
        for a in &self.args {
            write!(f, " {a}")?;
        }
        f.write_str(")")
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Problem {
    pub name: String,
    pub init: Vec<Atom>,
    pub goal: Vec<Atom>,
}

impl Problem {
    pub fn to_pddl(&self, domain: &str) -> String {
        let objects: BTreeSet<&str> = self
            .init
            .iter()
            .chain(&self.goal)
            .flat_map(|a| a.args.iter().map(String::as_str))
            .collect();
        let mut out = format!("(define (problem {})\n  (:domain {domain})\n  (:objects", self.name);
        for o in objects {
            out.push(' ');
            out.push_str(o);
        }
        out.push_str(")\n  (:init");
        for a in &self.init {
            out.push_str(&format!("\n    {a}"));
        }
        out.push_str(")\n  (:goal (and");
        for a in &self.goal {
            out.push_str(&format!(" {a}"));
        }
        out.push_str(")))\n");
        out
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct GroundAction {
    pub operator: String,
    pub args: Vec<String>,
}

impl fmt::Display for GroundAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}", self.operator)?;
        for a in &self.args {
            write!(f, " {a}")?;
        }
        f.write_str(")")
    }
}

/// Read-only view of a search state handed to hooks.
pub struct FactView<'a> {
    facts: &'a BTreeSet<Vec<u32>>,
    syms: &'a Interner,
}

impl FactView<'_> {
    /// Number of dynamic facts `(pred first ...)` whose argument at `pos` equals `value`.
    pub fn count(&self, pred: &str, pos: usize, value: &str) -> usize {
        let (Some(p), Some(v)) = (self.syms.get(pred), self.syms.get(value)) else {
            return 0;
        };
        self.facts
            .iter()
            .filter(|f| f[0] == p && f.get(pos + 1) == Some(&v))
            .count()
    }
}

/// Domain-specific costs and guards.
pub trait SearchHooks {
    /// Navigation cost of an edge; `None` prunes it. `moved` is false until
    /// the first navigation edge on the path.
    fn nav_cost(&self, action: &GroundAction, moved: bool) -> Option<u64>;
    fn is_nav(&self, operator: &str) -> bool;
    /// Extra applicability check beyond the operator's preconditions.
    fn allowed(&self, _action: &GroundAction, _facts: &FactView) -> bool {
        true
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SearchOutcome {
    Found {
        actions: Vec<GroundAction>,
        nav_cost: u64,
        expanded: usize,
    },
    Exhausted,
    Limit,
}

#[derive(Default)]
struct Interner {
    ids: HashMap<String, u32>,
    names: Vec<String>,
}

impl Interner {
    fn intern(&mut self, s: &str) -> u32 {
        if let Some(&id) = self.ids.get(s) {
            return id;
        }
        let id = self.names.len() as u32;
        self.names.push(s.to_string());
        self.ids.insert(s.to_string(), id);
        id
    }

    fn get(&self, s: &str) -> Option<u32> {
        self.ids.get(s).copied()
    }
}

#[derive(Clone, Copy)]
enum CTerm {
    Var(usize),
    Const(u32),
}

struct CLit {
    positive: bool,
    pred: u32,
    is_static: bool,
    args: Vec<CTerm>,
}

struct COp {
    name: String,
    nparams: usize,
    pre: Vec<CLit>,
    eff: Vec<CLit>,
}

struct Node {
    facts: BTreeSet<Vec<u32>>,
    moved: bool,
    parent: usize,
    action: Option<GroundAction>,
    nav: u64,
}

pub struct Searcher<'a, H: SearchHooks> {
    syms: Interner,
    ops: Vec<COp>,
    static_by_pred: HashMap<u32, Vec<Vec<u32>>>,
    static_set: HashSet<Vec<u32>>,
    hooks: &'a H,
    pub max_expansions: usize,
}

fn fact_of(syms: &mut Interner, a: &Atom) -> Vec<u32> {
    let mut f = vec![syms.intern(&a.predicate)];
    f.extend(a.args.iter().map(|x| syms.intern(x)));
    f
}

impl<'a, H: SearchHooks> Searcher<'a, H> {
    pub fn new(domain: &Domain, hooks: &'a H) -> Self {
        let mut syms = Interner::default();
        let statics: HashSet<String> = domain
            .static_predicates()
            .into_iter()
            .map(String::from)
            .collect();
        let ops = domain
            .operators
            .iter()
            .map(|op| {
                let mut compile = |lits: &[super::pddl::Literal]| -> Vec<CLit> {
                    lits.iter()
                        .map(|l| CLit {
                            positive: l.positive,
                            pred: syms.intern(&l.predicate),
                            is_static: statics.contains(&l.predicate),
                            args: l
                                .args
                                .iter()
                                .map(|t| match t {
                                    Term::Var(v) => CTerm::Var(
                                        op.params.iter().position(|p| p == v).expect("validated"),
                                    ),
                                    Term::Const(c) => CTerm::Const(syms.intern(c)),
                                })
                                .collect(),
                        })
                        .collect()
                };
                COp {
                    name: op.name.clone(),
                    nparams: op.params.len(),
                    pre: compile(&op.precondition),
                    eff: compile(&op.effect),
                }
            })
            .collect();
        Self {
            syms,
            ops,
            static_by_pred: HashMap::new(),
            static_set: HashSet::new(),
            hooks,
            max_expansions: 500_000,
        }
    }

    fn ground(&self, lit: &CLit, binding: &[u32]) -> Vec<u32> {
        let mut f = vec![lit.pred];
        f.extend(lit.args.iter().map(|t| match t {
            CTerm::Var(i) => binding[*i],
            CTerm::Const(c) => *c,
        }));
        f
    }

    fn holds(&self, fact: &[u32], facts: &BTreeSet<Vec<u32>>) -> bool {
        self.static_set.contains(fact) || facts.contains(fact)
    }

    fn unify(
        &self,
        op: &COp,
        idx: usize,
        binding: &mut Vec<u32>,
        facts: &BTreeSet<Vec<u32>>,
        out: &mut Vec<Vec<u32>>,
    ) {
        const UNBOUND: u32 = u32::MAX;
        let Some(lit) = op.pre.iter().filter(|l| l.positive).nth(idx) else {
            let full = binding.clone();
            let neg_ok = op
                .pre
                .iter()
                .filter(|l| !l.positive)
                .all(|l| !self.holds(&self.ground(l, &full), facts));
            if neg_ok {
                out.push(full);
            }
            return;
        };
        let empty = Vec::new();
        let candidates: Box<dyn Iterator<Item = &Vec<u32>>> = if lit.is_static {
            Box::new(self.static_by_pred.get(&lit.pred).unwrap_or(&empty).iter())
        } else {
            let lo = vec![lit.pred];
            let hi = vec![lit.pred + 1];
            Box::new(facts.range(lo..hi))
        };
        for fact in candidates {
            if fact.len() != lit.args.len() + 1 {
                continue;
            }
            let mut newly = Vec::new();
            let mut ok = true;
            for (t, &v) in lit.args.iter().zip(&fact[1..]) {
                match *t {
                    CTerm::Const(c) => ok = c == v,
                    CTerm::Var(i) if binding[i] == UNBOUND => {
                        binding[i] = v;
                        newly.push(i);
                    }
                    CTerm::Var(i) => ok = binding[i] == v,
                }
                if !ok {
                    break;
                }
            }
            if ok {
                self.unify(op, idx + 1, binding, facts, out);
            }
            for i in newly {
                binding[i] = UNBOUND;
            }
        }
    }

    fn successors(&self, node: &Node) -> Vec<(GroundAction, BTreeSet<Vec<u32>>, u64)> {
        let mut out = Vec::new();
        for op in &self.ops {
            let mut bindings = Vec::new();
            let mut b = vec![u32::MAX; op.nparams];
            self.unify(op, 0, &mut b, &node.facts, &mut bindings);
            for binding in bindings {
                let action = GroundAction {
                    operator: op.name.clone(),
                    args: binding
                        .iter()
                        .map(|s| self.syms.names[*s as usize].clone())
                        .collect(),
                };
                let view = FactView {
                    facts: &node.facts,
                    syms: &self.syms,
                };
                if !self.hooks.allowed(&action, &view) {
                    continue;
                }
                let Some(cost) = self.hooks.nav_cost(&action, node.moved) else {
                    continue;
                };
                let mut next = node.facts.clone();
                for l in op.eff.iter().filter(|l| !l.positive) {
                    next.remove(&self.ground(l, &binding));
                }
                for l in op.eff.iter().filter(|l| l.positive) {
                    next.insert(self.ground(l, &binding));
                }
                out.push((action, next, cost));
            }
        }
        out.sort_by(|a, b| a.0.cmp(&b.0));
        out
    }

    /// Uniform-cost search minimizing (operator count, navigation cost)
    /// lexicographically. Ties resolve to the lexicographically smallest
    /// ground action sequence in generation order.
    pub fn solve(&mut self, problem: &Problem) -> SearchOutcome {
        let mut init = BTreeSet::new();
        for a in &problem.init {
            let f = fact_of(&mut self.syms, a);
            let pred = f[0];
            let is_static = self.ops.iter().all(|o| o.eff.iter().all(|l| l.pred != pred));
            if is_static {
                self.static_by_pred.entry(pred).or_default().push(f.clone());
                self.static_set.insert(f);
            } else {
                init.insert(f);
            }
        }
        for v in self.static_by_pred.values_mut() {
            v.sort();
        }
        let goal: Vec<Vec<u32>> = problem.goal.iter().map(|a| fact_of(&mut self.syms, a)).collect();

        let mut nodes = vec![Node {
            facts: init,
            moved: false,
            parent: usize::MAX,
            action: None,
            nav: 0,
        }];
        let mut heap = BinaryHeap::new();
        heap.push(Reverse((0usize, 0u64, 0usize)));
        let mut closed: HashSet<(BTreeSet<Vec<u32>>, bool)> = HashSet::new();
        let mut expanded = 0;
        while let Some(Reverse((ops, nav, id))) = heap.pop() {
            let key = (nodes[id].facts.clone(), nodes[id].moved);
            if !closed.insert(key) {
                continue;
            }
            if goal.iter().all(|g| self.holds(g, &nodes[id].facts)) {
                let mut actions = Vec::new();
                let mut cur = id;
                while let Some(a) = &nodes[cur].action {
                    actions.push(a.clone());
                    cur = nodes[cur].parent;
                }
                actions.reverse();
                return SearchOutcome::Found {
                    actions,
                    nav_cost: nav,
                    expanded,
                };
            }
            expanded += 1;
            if expanded > self.max_expansions {
                return SearchOutcome::Limit;
            }
            for (action, facts, cost) in self.successors(&nodes[id]) {
                let moved = nodes[id].moved || self.hooks.is_nav(&action.operator);
                if closed.contains(&(facts.clone(), moved)) {
                    continue;
                }
                let child = nodes.len();
                nodes.push(Node {
                    facts,
                    moved,
                    parent: id,
                    action: Some(action),
                    nav: nav + cost,
                });
                heap.push(Reverse((ops + 1, nodes[child].nav, child)));
            }
        }
        SearchOutcome::Exhausted
    }
}
