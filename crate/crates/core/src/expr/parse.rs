//! Infix expression parser.
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := unary (('*' | '/') unary)*
//! unary  := ('-' | '+') unary | power
//! power  := atom ('^' exponent)?
//! exponent := '-'? integer | '(' '-'? integer ')'
//! atom   := number | 'x' digits | param | func '(' expr ')' | '(' expr ')'
//! ```

use super::{parse_decimal, Expr, ExprError, Func};

/// Parses `text` over state dimension `n` with the given parameter names and
/// returns the normalized expression.
pub fn parse(text: &str, n: usize, params: &[&str]) -> Result<Expr, ExprError> {
    let mut p = Parser { src: text, pos: 0, n, params };
    let e = p.expr()?;
    p.skip_ws();
    if p.pos < p.src.len() {
        return Err(p.error("unexpected trailing input"));
    }
    Ok(e.normalize())
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
    n: usize,
    params: &'a [&'a str],
}

impl<'a> Parser<'a> {
    fn error(&self, message: &str) -> ExprError {
        ExprError::Syntax {
            offset: self.pos,
            message: message.to_string(),
        }
    }

    fn skip_ws(&mut self) {
        while let Some(c) = self.peek() {
            if c.is_whitespace() {
                self.pos += c.len_utf8();
            } else {
                break;
            }
        }
    }

    fn peek(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn eat(&mut self, c: char) -> bool {
        self.skip_ws();
        if self.peek() == Some(c) {
            self.pos += c.len_utf8();
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<Expr, ExprError> {
        let mut terms = vec![self.term()?];
        loop {
            if self.eat('+') {
                terms.push(self.term()?);
            } else if self.eat('-') {
                terms.push(-self.term()?);
            } else {
                break;
            }
        }
        Ok(if terms.len() == 1 { terms.pop().unwrap() } else { Expr::Add(terms) })
    }

    fn term(&mut self) -> Result<Expr, ExprError> {
        let mut acc = self.unary()?;
        loop {
            if self.eat('*') {
                acc = acc * self.unary()?;
            } else if self.eat('/') {
                acc = acc / self.unary()?;
            } else {
                break;
            }
        }
        Ok(acc)
    }

    fn unary(&mut self) -> Result<Expr, ExprError> {
        if self.eat('-') {
            return Ok(-self.unary()?);
        }
        if self.eat('+') {
            return self.unary();
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ExprError> {
        let base = self.atom()?;
        if self.eat('^') {
            let paren = self.eat('(');
            let neg = self.eat('-');
            self.skip_ws();
            let start = self.pos;
            while self.peek().is_some_and(|c| c.is_ascii_digit()) {
                self.pos += 1;
            }
            if start == self.pos {
                return Err(self.error("expected integer exponent"));
            }
            let k: i64 = self.src[start..self.pos]
                .parse()
                .map_err(|_| self.error("exponent out of range"))?;
            if paren && !self.eat(')') {
                return Err(self.error("expected `)`"));
            }
            return Ok(base.powi(if neg { -k } else { k }));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr, ExprError> {
        self.skip_ws();
        let start = self.pos;
        let c = match self.peek() {
            Some(c) => c,
            None => return Err(self.error("unexpected end of input")),
        };
        if c == '(' {
            self.pos += 1;
            let e = self.expr()?;
            if !self.eat(')') {
                return Err(self.error("expected `)`"));
            }
            return Ok(e);
        }
        if c.is_ascii_digit() || c == '.' {
            while self.peek().is_some_and(|c| c.is_ascii_digit() || c == '.') {
                self.pos += 1;
            }
            let lit = &self.src[start..self.pos];
            return parse_decimal(lit).map(Expr::Const).ok_or(ExprError::Syntax {
                offset: start,
                message: format!("malformed number `{lit}`"),
            });
        }
        if c.is_ascii_alphabetic() || c == '_' {
            while self.peek().is_some_and(|c| c.is_ascii_alphanumeric() || c == '_') {
                self.pos += 1;
            }
            let name = &self.src[start..self.pos];
            if let Some(f) = Func::from_name(name) {
                if self.eat('(') {
                    let arg = self.expr()?;
                    if !self.eat(')') {
                        return Err(self.error("expected `)`"));
                    }
                    return Ok(Expr::call(f, arg));
                }
            }
            if let Some(digits) = name.strip_prefix('x') {
                if !digits.is_empty() && digits.chars().all(|c| c.is_ascii_digit()) {
                    let index: usize = digits.parse().map_err(|_| ExprError::Syntax {
                        offset: start,
                        message: "variable index out of range".into(),
                    })?;
                    if index == 0 || index > self.n {
                        return Err(ExprError::VariableOutOfRange { index, dim: self.n, offset: start });
                    }
                    return Ok(Expr::Var(index - 1));
                }
            }
            if self.params.contains(&name) {
                return Ok(Expr::Param(name.to_string()));
            }
            return Err(ExprError::UnknownIdentifier {
                name: name.to_string(),
                offset: start,
            });
        }
        Err(self.error(&format!("unexpected character `{c}`")))
    }
}
