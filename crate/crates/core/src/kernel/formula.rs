use std::fmt;

use serde::{Deserialize, Serialize};

/// A propositional formula.
///
/// Negation is not a constructor: `~ F` is read as `F -> False`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Formula {
    Atom(String),
    True,
    False,
    Impl(Box<Formula>, Box<Formula>),
    And(Box<Formula>, Box<Formula>),
    Or(Box<Formula>, Box<Formula>),
    /// Application of a transparent definition.
    DefApp(String, Vec<Formula>),
}

impl Formula {
    pub fn atom(name: impl Into<String>) -> Formula {
        Formula::Atom(name.into())
    }

    pub fn imp(lhs: Formula, rhs: Formula) -> Formula {
        Formula::Impl(Box::new(lhs), Box::new(rhs))
    }

    pub fn and(lhs: Formula, rhs: Formula) -> Formula {
        Formula::And(Box::new(lhs), Box::new(rhs))
    }

    pub fn or(lhs: Formula, rhs: Formula) -> Formula {
        Formula::Or(Box::new(lhs), Box::new(rhs))
    }

    pub fn negation(f: Formula) -> Formula {
        Formula::imp(f, Formula::False)
    }

    pub fn app(name: impl Into<String>, args: Vec<Formula>) -> Formula {
        Formula::DefApp(name.into(), args)
    }

    /// Replaces every atom named in `params` by the matching argument.
    pub fn subst(&self, params: &[String], args: &[Formula]) -> Formula {
        match self {
            Formula::Atom(a) => match params.iter().position(|p| p == a) {
                Some(i) => args[i].clone(),
                None => self.clone(),
            },
            Formula::True | Formula::False => self.clone(),
            Formula::Impl(l, r) => Formula::imp(l.subst(params, args), r.subst(params, args)),
            Formula::And(l, r) => Formula::and(l.subst(params, args), r.subst(params, args)),
            Formula::Or(l, r) => Formula::or(l.subst(params, args), r.subst(params, args)),
            Formula::DefApp(d, xs) => Formula::DefApp(d.clone(), xs.iter().map(|x| x.subst(params, args)).collect()),
        }
    }

    /// Calls `f` on every name occurring in the formula, in reading order.
    pub fn for_each_name(&self, f: &mut impl FnMut(&str)) {
        match self {
            Formula::Atom(a) => f(a),
            Formula::True | Formula::False => {}
            Formula::Impl(l, r) | Formula::And(l, r) | Formula::Or(l, r) => {
                l.for_each_name(f);
                r.for_each_name(f);
            }
            Formula::DefApp(d, xs) => {
                f(d);
                for x in xs {
                    x.for_each_name(f);
                }
            }
        }
    }

    pub fn size(&self) -> usize {
        match self {
            Formula::Atom(_) | Formula::True | Formula::False => 1,
            Formula::Impl(l, r) | Formula::And(l, r) | Formula::Or(l, r) => 1 + l.size() + r.size(),
            Formula::DefApp(_, xs) => 1 + xs.iter().map(Formula::size).sum::<usize>(),
        }
    }

    fn level(&self) -> u8 {
        match self {
            Formula::Impl(..) => 0,
            Formula::Or(..) => 1,
            Formula::And(..) => 2,
            Formula::DefApp(_, xs) if !xs.is_empty() => 3,
            _ => 4,
        }
    }

    fn fmt_at(&self, f: &mut fmt::Formatter<'_>, min: u8) -> fmt::Result {
        if self.level() < min {
            write!(f, "(")?;
            self.fmt_at(f, 0)?;
            return write!(f, ")");
        }
        match self {
            Formula::Atom(a) => write!(f, "{a}"),
            Formula::True => write!(f, "True"),
            Formula::False => write!(f, "False"),
            Formula::Impl(l, r) => {
                l.fmt_at(f, 1)?;
                write!(f, " -> ")?;
                r.fmt_at(f, 0)
            }
            Formula::Or(l, r) => {
                l.fmt_at(f, 2)?;
                write!(f, " \\/ ")?;
                r.fmt_at(f, 1)
            }
            Formula::And(l, r) => {
                l.fmt_at(f, 3)?;
                write!(f, " /\\ ")?;
                r.fmt_at(f, 2)
            }
            Formula::DefApp(d, xs) => {
                write!(f, "{d}")?;
                for x in xs {
                    write!(f, " ")?;
                    x.fmt_at(f, 4)?;
                }
                Ok(())
            }
        }
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.fmt_at(f, 0)
    }
}
