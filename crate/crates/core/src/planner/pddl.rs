//! A reduced STRIPS subset of PDDL: untyped parameters, conjunctive
//! preconditions (negative literals allowed) and conjunctive add/delete effects.
//!
//! ```text
//! domain    := "(" "define" "(" "domain" NAME ")" predicates? action* ")"
//! predicates:= "(" ":predicates" ( "(" NAME VAR* ")" )* ")"
//! action    := "(" ":action" NAME ":parameters" "(" VAR* ")"
//!                 (":precondition" formula)? (":effect" formula)? ")"
//! formula   := literal | "(" "and" literal* ")"
//! literal   := atom | "(" "not" atom ")"
//! atom      := "(" NAME term* ")"        term := VAR | NAME
//! ```
//!
//! Comments start with `;`. Names are case-sensitive.

use std::collections::BTreeMap;
use std::fmt;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PddlError {
    #[error("{line}:{col}: {message}")]
    Syntax {
        line: usize,
        col: usize,
        message: String,
    },
    #[error("undeclared predicate `{0}`")]
    UndeclaredPredicate(String),
    #[error("predicate `{name}` takes {expected} arguments, got {got}")]
    Arity {
        name: String,
        expected: usize,
        got: usize,
    },
    #[error("variable `{var}` in action `{action}` is not a parameter")]
    UnboundVariable { action: String, var: String },
    #[error("parameter `{var}` of action `{action}` appears in no positive precondition")]
    UngroundableParameter { action: String, var: String },
    #[error("duplicate {kind} `{name}`")]
    Duplicate { kind: &'static str, name: String },
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Term {
    Var(String),
    Const(String),
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Var(v) => write!(f, "?{v}"),
            Term::Const(c) => f.write_str(c),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Literal {
    pub positive: bool,
    pub predicate: String,
    pub args: Vec<Term>,
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut atom = format!("({}", self.predicate);
        for a in &self.args {
            atom.push(' ');
            atom.push_str(&a.to_string());
        }
        atom.push(')');
        if self.positive {
            f.write_str(&atom)
        } else {
            write!(f, "(not {atom})")
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Operator {
    pub name: String,
    pub params: Vec<String>,
    pub precondition: Vec<Literal>,
    pub effect: Vec<Literal>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Domain {
    pub name: String,
    /// name -> arity, in declaration order
    pub predicates: Vec<(String, usize)>,
    pub operators: Vec<Operator>,
}

pub const HOUSEHOLD: &str = include_str!("../../assets/household.pddl");

impl Domain {
    pub fn household() -> Domain {
        parse_domain(HOUSEHOLD).expect("shipped domain parses")
    }

    pub fn operator(&self, name: &str) -> Option<&Operator> {
        self.operators.iter().find(|o| o.name == name)
    }

    pub fn arity(&self, pred: &str) -> Option<usize> {
        self.predicates
            .iter()
            .find(|(n, _)| n == pred)
            .map(|(_, a)| *a)
    }

    /// Predicates never touched by an effect.
    pub fn static_predicates(&self) -> Vec<&str> {
        self.predicates
            .iter()
            .map(|(n, _)| n.as_str())
            .filter(|n| {
                !self
                    .operators
                    .iter()
                    .any(|o| o.effect.iter().any(|l| l.predicate == *n))
            })
            .collect()
    }
}

fn write_formula(f: &mut fmt::Formatter<'_>, lits: &[Literal]) -> fmt::Result {
    f.write_str("(and")?;
    for l in lits {
        write!(f, " {l}")?;
    }
    f.write_str(")")
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "(define (domain {})", self.name)?;
        f.write_str("  (:predicates")?;
        for (name, arity) in &self.predicates {
            write!(f, " ({name}")?;
            for i in 0..*arity {
                write!(f, " ?a{i}")?;
            }
            f.write_str(")")?;
        }
        f.write_str(")")?;
        for op in &self.operators {
            write!(f, "\n  (:action {}\n    :parameters (", op.name)?;
            let params: Vec<String> = op.params.iter().map(|p| format!("?{p}")).collect();
            write!(f, "{})\n    :precondition ", params.join(" "))?;
            write_formula(f, &op.precondition)?;
            f.write_str("\n    :effect ")?;
            write_formula(f, &op.effect)?;
            f.write_str(")")?;
        }
        f.write_str(")\n")
    }
}

#[derive(Debug, Clone)]
enum Sexp {
    Atom(String, usize, usize),
    List(Vec<Sexp>, usize, usize),
}

impl Sexp {
    fn pos(&self) -> (usize, usize) {
        match self {
            Sexp::Atom(_, l, c) | Sexp::List(_, l, c) => (*l, *c),
        }
    }
}

fn err_at(pos: (usize, usize), message: impl Into<String>) -> PddlError {
    PddlError::Syntax {
        line: pos.0,
        col: pos.1,
        message: message.into(),
    }
}

fn read_sexps(text: &str) -> Result<Vec<Sexp>, PddlError> {
    let mut stack: Vec<(Vec<Sexp>, usize, usize)> = vec![(Vec::new(), 0, 0)];
    let (mut line, mut col) = (1, 0);
    let mut chars = text.chars().peekable();
    while let Some(ch) = chars.next() {
        col += 1;
        match ch {
            '\n' => {
                line += 1;
                col = 0;
            }
            ';' => {
                while chars.peek().is_some_and(|c| *c != '\n') {
                    chars.next();
                }
            }
            '(' => stack.push((Vec::new(), line, col)),
            ')' => {
                if stack.len() == 1 {
                    return Err(err_at((line, col), "unbalanced `)`"));
                }
                let (items, l, c) = stack.pop().unwrap();
                stack.last_mut().unwrap().0.push(Sexp::List(items, l, c));
            }
            c if c.is_whitespace() => {}
            c => {
                let (l, start) = (line, col);
                let mut tok = c.to_string();
                while let Some(&n) = chars.peek() {
                    if n.is_whitespace() || n == '(' || n == ')' || n == ';' {
                        break;
                    }
                    tok.push(n);
                    chars.next();
                    col += 1;
                }
                stack.last_mut().unwrap().0.push(Sexp::Atom(tok, l, start));
            }
        }
    }
    if stack.len() > 1 {
        let (_, l, c) = stack.last().unwrap();
        return Err(err_at((*l, *c), "unclosed `(`"));
    }
    Ok(stack.pop().unwrap().0)
}

fn atom(s: &Sexp) -> Option<&str> {
    match s {
        Sexp::Atom(a, ..) => Some(a),
        _ => None,
    }
}

fn expect_list<'a>(s: &'a Sexp, what: &str) -> Result<&'a [Sexp], PddlError> {
    match s {
        Sexp::List(items, ..) => Ok(items),
        _ => Err(err_at(s.pos(), format!("expected {what}"))),
    }
}

fn name(s: &Sexp, what: &str) -> Result<String, PddlError> {
    match atom(s) {
        Some(a) if !a.starts_with('?') && !a.starts_with(':') => Ok(a.to_string()),
        _ => Err(err_at(s.pos(), format!("expected {what}"))),
    }
}

fn var(s: &Sexp) -> Result<String, PddlError> {
    match atom(s) {
        Some(a) if a.len() > 1 && a.starts_with('?') => Ok(a[1..].to_string()),
        _ => Err(err_at(s.pos(), "expected a variable")),
    }
}

fn parse_atom(s: &Sexp, positive: bool) -> Result<Literal, PddlError> {
    let items = expect_list(s, "an atom")?;
    let (head, rest) = items
        .split_first()
        .ok_or_else(|| err_at(s.pos(), "empty atom"))?;
    let predicate = name(head, "a predicate name")?;
    let args = rest
        .iter()
        .map(|t| match atom(t) {
            Some(a) if a.starts_with('?') => var(t).map(Term::Var),
            Some(_) => name(t, "a term").map(Term::Const),
            None => Err(err_at(t.pos(), "nested term")),
        })
        .collect::<Result<_, _>>()?;
    Ok(Literal {
        positive,
        predicate,
        args,
    })
}

fn parse_literal(s: &Sexp) -> Result<Literal, PddlError> {
    let items = expect_list(s, "a literal")?;
    match items.first().and_then(atom) {
        Some("not") => {
            if items.len() != 2 {
                return Err(err_at(s.pos(), "`not` takes one atom"));
            }
            parse_atom(&items[1], false)
        }
        Some("and" | "or" | "forall" | "exists" | "when" | "imply") => Err(err_at(
            s.pos(),
            format!("unsupported construct `{}`", atom(&items[0]).unwrap()),
        )),
        _ => parse_atom(s, true),
    }
}

fn parse_formula(s: &Sexp) -> Result<Vec<Literal>, PddlError> {
    let items = expect_list(s, "a formula")?;
    if items.first().and_then(atom) == Some("and") {
        items[1..].iter().map(parse_literal).collect()
    } else {
        Ok(vec![parse_literal(s)?])
    }
}

fn parse_action(items: &[Sexp], pos: (usize, usize)) -> Result<Operator, PddlError> {
    let op_name = items
        .get(1)
        .ok_or_else(|| err_at(pos, "action without a name"))
        .and_then(|s| name(s, "an action name"))?;
    let mut op = Operator {
        name: op_name,
        params: Vec::new(),
        precondition: Vec::new(),
        effect: Vec::new(),
    };
    let mut i = 2;
    while i < items.len() {
        let key = atom(&items[i]).ok_or_else(|| err_at(items[i].pos(), "expected a keyword"))?;
        let value = items
            .get(i + 1)
            .ok_or_else(|| err_at(items[i].pos(), format!("`{key}` needs a value")))?;
        match key {
            ":parameters" => {
                op.params = expect_list(value, "a parameter list")?
                    .iter()
                    .map(var)
                    .collect::<Result<_, _>>()?
            }
            ":precondition" => op.precondition = parse_formula(value)?,
            ":effect" => op.effect = parse_formula(value)?,
            other => return Err(err_at(items[i].pos(), format!("unsupported keyword `{other}`"))),
        }
        i += 2;
    }
    Ok(op)
}

pub fn parse_domain(text: &str) -> Result<Domain, PddlError> {
    let top = read_sexps(text)?;
    let [root] = top.as_slice() else {
        let pos = top.get(1).map_or((1, 1), Sexp::pos);
        return Err(err_at(pos, "expected exactly one (define ...) form"));
    };
    let items = expect_list(root, "(define ...)")?;
    if items.first().and_then(atom) != Some("define") {
        return Err(err_at(root.pos(), "expected `define`"));
    }
    let header = items
        .get(1)
        .ok_or_else(|| err_at(root.pos(), "missing domain header"))?;
    let h = expect_list(header, "(domain NAME)")?;
    if h.len() != 2 || atom(&h[0]) != Some("domain") {
        return Err(err_at(header.pos(), "expected (domain NAME)"));
    }
    let mut domain = Domain {
        name: name(&h[1], "a domain name")?,
        predicates: Vec::new(),
        operators: Vec::new(),
    };
    for section in &items[2..] {
        let s = expect_list(section, "a domain section")?;
        match s.first().and_then(atom) {
            Some(":predicates") => {
                for p in &s[1..] {
                    let decl = expect_list(p, "a predicate declaration")?;
                    let (head, args) = decl
                        .split_first()
                        .ok_or_else(|| err_at(p.pos(), "empty predicate declaration"))?;
                    let pname = name(head, "a predicate name")?;
                    for a in args {
                        var(a)?;
                    }
                    if domain.arity(&pname).is_some() {
                        return Err(PddlError::Duplicate {
                            kind: "predicate",
                            name: pname,
                        });
                    }
                    domain.predicates.push((pname, args.len()));
                }
            }
            Some(":action") => {
                let op = parse_action(s, section.pos())?;
                if domain.operator(&op.name).is_some() {
                    return Err(PddlError::Duplicate {
                        kind: "action",
                        name: op.name,
                    });
                }
                domain.operators.push(op);
            }
            Some(other) => {
                return Err(err_at(section.pos(), format!("unsupported section `{other}`")))
            }
            None => return Err(err_at(section.pos(), "expected a section keyword")),
        }
    }
    validate(&domain)?;
    Ok(domain)
}

fn validate(domain: &Domain) -> Result<(), PddlError> {
    let arities: BTreeMap<&str, usize> = domain
        .predicates
        .iter()
        .map(|(n, a)| (n.as_str(), *a))
        .collect();
    for op in &domain.operators {
        for lit in op.precondition.iter().chain(&op.effect) {
            let expected = *arities
                .get(lit.predicate.as_str())
                .ok_or_else(|| PddlError::UndeclaredPredicate(lit.predicate.clone()))?;
            if expected != lit.args.len() {
                return Err(PddlError::Arity {
                    name: lit.predicate.clone(),
                    expected,
                    got: lit.args.len(),
                });
            }
            for t in &lit.args {
                if let Term::Var(v) = t {
                    if !op.params.contains(v) {
                        return Err(PddlError::UnboundVariable {
                            action: op.name.clone(),
                            var: v.clone(),
                        });
                    }
                }
            }
        }
        for p in &op.params {
            let bound = op
                .precondition
                .iter()
                .any(|l| l.positive && l.args.contains(&Term::Var(p.clone())));
            if !bound {
                return Err(PddlError::UngroundableParameter {
                    action: op.name.clone(),
                    var: p.clone(),
                });
            }
        }
    }
    Ok(())
}
