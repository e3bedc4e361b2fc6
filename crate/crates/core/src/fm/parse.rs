//! Line-based model format.
//!
//! ```text
//! model phone
//! root Phone
//! mandatory Phone Screen
//! optional Phone GPS
//! alt Screen Basic HD
//! constraint (not (and Basic GPS))
//! ```
//!
//! `#` starts a comment. Tree directives must name an already declared
//! parent; constraints may mention any feature of the finished tree.

use crate::error::{ModelError, ParseError, ParseErrorKind};
use crate::fm::model::{Expr, FeatureId, FeatureModel, GroupKind, Relation};

pub fn parse_model(text: &str) -> Result<FeatureModel, ParseError> {
    let mut name: Option<String> = None;
    let mut model: Option<FeatureModel> = None;
    let mut constraints = Vec::new();
    let mut last_line = 0;

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        last_line = line;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let err = |kind| ParseError { line, kind };
        let (keyword, rest) = match content.split_once(char::is_whitespace) {
            Some((k, r)) => (k, r.trim()),
            None => (content, ""),
        };
        let args: Vec<&str> = rest.split_whitespace().collect();

        if name.is_none() {
            if keyword != "model" {
                return Err(err(ParseErrorKind::MissingModelDirective));
            }
            let [n] = args.as_slice() else {
                return Err(err(syntax("expected `model <name>`")));
            };
            name = Some(n.to_string());
            continue;
        }

        match keyword {
            "model" => return Err(err(syntax("duplicate `model` directive"))),
            "root" => {
                if model.is_some() {
                    return Err(err(syntax("duplicate `root` directive")));
                }
                let [r] = args.as_slice() else {
                    return Err(err(syntax("expected `root <feature>`")));
                };
                let root = feature(r).map_err(err)?;
                model = Some(FeatureModel::new(name.clone().unwrap_or_default(), root));
            }
            "mandatory" | "optional" => {
                let m = model.as_mut().ok_or_else(|| err(ParseErrorKind::MissingRoot))?;
                let [parent, child] = args.as_slice() else {
                    return Err(err(syntax(&format!("expected `{keyword} <parent> <child>`"))));
                };
                let relation = if keyword == "mandatory" {
                    Relation::Mandatory
                } else {
                    Relation::Optional
                };
                let child = feature(child).map_err(err)?;
                m.add_child(parent, child, relation).map_err(|e| err(e.into()))?;
            }
            "or" | "alt" => {
                let m = model.as_mut().ok_or_else(|| err(ParseErrorKind::MissingRoot))?;
                let Some((parent, members)) = args.split_first() else {
                    return Err(err(syntax("expected a parent and at least two members")));
                };
                if members.len() < 2 {
                    return Err(err(syntax("a group needs at least two members")));
                }
                let members = members
                    .iter()
                    .map(|s| feature(s))
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(err)?;
                let kind = if keyword == "or" { GroupKind::Or } else { GroupKind::Alternative };
                m.add_group(parent, kind, members).map_err(|e| err(e.into()))?;
            }
            "constraint" => {
                if model.is_none() {
                    return Err(err(ParseErrorKind::MissingRoot));
                }
                let expr = parse_expr(rest).map_err(err)?;
                constraints.push((line, expr));
            }
            other => return Err(err(syntax(&format!("unknown directive `{other}`")))),
        }
    }

    if name.is_none() {
        return Err(ParseError { line: last_line.max(1), kind: ParseErrorKind::MissingModelDirective });
    }
    let mut model =
        model.ok_or(ParseError { line: last_line.max(1), kind: ParseErrorKind::MissingRoot })?;
    for (line, expr) in constraints {
        model.add_constraint(expr).map_err(|e| ParseError { line, kind: e.into() })?;
    }
    Ok(model)
}

fn syntax(msg: &str) -> ParseErrorKind {
    ParseErrorKind::Syntax(msg.to_string())
}

fn feature(s: &str) -> Result<FeatureId, ParseErrorKind> {
    FeatureId::new(s).map_err(ParseErrorKind::Model)
}

/// Parses a prefix-notation expression such as `(implies A (or B C))`.
pub fn parse_expr(text: &str) -> Result<Expr, ParseErrorKind> {
    let tokens = tokenize(text);
    if tokens.is_empty() {
        return Err(syntax("empty expression"));
    }
    let mut pos = 0;
    let expr = expr_at(&tokens, &mut pos)?;
    if pos != tokens.len() {
        return Err(syntax(&format!("unexpected `{}` after expression", tokens[pos])));
    }
    Ok(expr)
}

fn tokenize(text: &str) -> Vec<&str> {
    let mut tokens = Vec::new();
    let mut start = None;
    for (i, c) in text.char_indices() {
        if c == '(' || c == ')' || c.is_whitespace() {
            if let Some(s) = start.take() {
                tokens.push(&text[s..i]);
            }
            if !c.is_whitespace() {
                tokens.push(&text[i..i + 1]);
            }
        } else if start.is_none() {
            start = Some(i);
        }
    }
    if let Some(s) = start {
        tokens.push(&text[s..]);
    }
    tokens
}

fn expr_at(tokens: &[&str], pos: &mut usize) -> Result<Expr, ParseErrorKind> {
    let Some(&tok) = tokens.get(*pos) else {
        return Err(syntax("unexpected end of expression"));
    };
    *pos += 1;
    match tok {
        ")" => Err(syntax("unexpected `)`")),
        "(" => {
            let Some(&op) = tokens.get(*pos) else {
                return Err(syntax("unexpected end of expression"));
            };
            *pos += 1;
            let mut args = Vec::new();
            loop {
                match tokens.get(*pos) {
                    None => return Err(syntax("missing `)`")),
                    Some(&")") => {
                        *pos += 1;
                        break;
                    }
                    Some(_) => args.push(expr_at(tokens, pos)?),
                }
            }
            match (op, args.len()) {
                ("not", 1) => Ok(Expr::not(args.pop().expect("one argument"))),
                ("and", n) if n >= 1 => Ok(Expr::And(args)),
                ("or", n) if n >= 1 => Ok(Expr::Or(args)),
                ("implies", 2) => {
                    let rhs = args.pop().expect("two arguments");
                    let lhs = args.pop().expect("two arguments");
                    Ok(Expr::implies(lhs, rhs))
                }
                ("not" | "and" | "or" | "implies", n) => {
                    Err(syntax(&format!("`{op}` cannot take {n} argument(s)")))
                }
                _ => Err(syntax(&format!("unknown operator `{op}`"))),
            }
        }
        name => feature(name).map(Expr::Atom),
    }
}

impl From<ModelError> for ParseErrorKind {
    fn from(e: ModelError) -> Self {
        ParseErrorKind::Model(e)
    }
}
