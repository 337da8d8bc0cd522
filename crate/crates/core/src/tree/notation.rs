//! Text form of process trees: `→(a, ×(b, τ), ∧(c, d), ⟲(e, f))`.
//! ASCII aliases `->`, `X`, `+`, `*` are accepted for the operators when
//! directly followed by `(`; `tau` is accepted for τ. Labels containing
//! `,()'\` or surrounding whitespace are single-quoted with `\` escapes.

use thiserror::Error;

use super::{Node, NodeKind, Operator, Shape};

#[derive(Debug, Error, Clone, PartialEq)]
#[error("{message} at offset {offset}")]
pub struct ParseError {
    pub offset: usize,
    pub message: String,
}

pub(crate) fn print(node: &Node) -> String {
    let mut out = String::new();
    write_node(node, &mut out);
    out
}

fn write_node(node: &Node, out: &mut String) {
    match &node.kind {
        NodeKind::Activity(a) => write_label(a, out),
        NodeKind::Tau => out.push('τ'),
        NodeKind::Operator(op, ch) => {
            out.push_str(op.symbol());
            out.push('(');
            for (i, c) in ch.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                write_node(c, out);
            }
            out.push(')');
        }
    }
}

fn needs_quotes(label: &str) -> bool {
    label.is_empty()
        || label == "τ"
        || label == "tau"
        || label.trim() != label
        || label.chars().any(|c| matches!(c, ',' | '(' | ')' | '\'' | '\\'))
}

fn write_label(label: &str, out: &mut String) {
    if !needs_quotes(label) {
        out.push_str(label);
        return;
    }
    out.push('\'');
    for c in label.chars() {
        if c == '\'' || c == '\\' {
            out.push('\\');
        }
        out.push(c);
    }
    out.push('\'');
}

pub(crate) fn parse(text: &str) -> Result<Shape, ParseError> {
    let mut p = Parser { src: text, pos: 0 };
    let shape = p.node()?;
    p.skip_ws();
    if p.pos != text.len() {
        return Err(p.error("trailing input"));
    }
    Ok(shape)
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
}

impl Parser<'_> {
    fn rest(&self) -> &str {
        &self.src[self.pos..]
    }

    fn error(&self, message: &str) -> ParseError {
        ParseError { offset: self.pos, message: message.to_string() }
    }

    fn skip_ws(&mut self) {
        let trimmed = self.rest().trim_start();
        self.pos = self.src.len() - trimmed.len();
    }

    fn operator(&mut self) -> Option<Operator> {
        const OPS: [(&str, Operator); 8] = [
            ("→(", Operator::Sequence),
            ("->(", Operator::Sequence),
            ("×(", Operator::Xor),
            ("X(", Operator::Xor),
            ("∧(", Operator::And),
            ("+(", Operator::And),
            ("⟲(", Operator::Loop),
            ("*(", Operator::Loop),
        ];
        for (tok, op) in OPS {
            if self.rest().starts_with(tok) {
                self.pos += tok.len();
                return Some(op);
            }
        }
        None
    }

    fn node(&mut self) -> Result<Shape, ParseError> {
        self.skip_ws();
        if let Some(op) = self.operator() {
            let mut children = Vec::new();
            loop {
                children.push(self.node()?);
                self.skip_ws();
                match self.rest().chars().next() {
                    Some(',') => self.pos += 1,
                    Some(')') => {
                        self.pos += 1;
                        break;
                    }
                    _ => return Err(self.error("expected `,` or `)`")),
                }
            }
            if children.len() < 2 {
                return Err(self.error("operator needs at least two children"));
            }
            return Ok(Shape::Op(op, children));
        }
        if self.rest().starts_with('\'') {
            self.pos += 1;
            let mut label = String::new();
            let mut chars = self.rest().char_indices();
            loop {
                match chars.next() {
                    Some((i, '\'')) => {
                        self.pos += i + 1;
                        return Ok(Shape::Activity(label));
                    }
                    Some((_, '\\')) => match chars.next() {
                        Some((_, c)) => label.push(c),
                        None => break,
                    },
                    Some((_, c)) => label.push(c),
                    None => break,
                }
            }
            return Err(self.error("unterminated quoted label"));
        }
        let end = self.rest().find([',', ')', '(']).unwrap_or(self.rest().len());
        let raw = self.rest()[..end].trim().to_string();
        if raw.is_empty() {
            return Err(self.error("expected a node"));
        }
        self.pos += end;
        Ok(match raw.as_str() {
            "τ" | "tau" => Shape::Tau,
            _ => Shape::Activity(raw),
        })
    }
}
