//! Infix expression syntax used by manifest files.
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary (('*' | '/') unary)*
//! unary   := '-' unary | power
//! power   := primary ('^' (exponent | '(' exponent ')'))?
//! exponent := ['-'] integer
//! primary := number | 'pi' | x<k> | func '(' expr ')' | '(' expr ')'
//! func    := exp | log | sqrt | sin | cos
//! ```

use thiserror::Error;

use super::Expr;

#[derive(Debug, Clone, PartialEq, Error)]
#[error("column {column}: {message}")]
pub struct ParseError {
    /// 1-based character column.
    pub column: usize,
    pub message: String,
}

/// Parse `text` as an expression over coordinates `x0..x{dim-1}`.
pub fn parse(text: &str, dim: usize) -> Result<Expr, ParseError> {
    let mut parser = Parser {
        chars: text.chars().collect(),
        pos: 0,
        dim,
    };
    let e = parser.expr()?;
    parser.skip_ws();
    if parser.pos < parser.chars.len() {
        return Err(parser.error(format!("unexpected '{}'", parser.chars[parser.pos])));
    }
    Ok(e)
}

struct Parser {
    chars: Vec<char>,
    pos: usize,
    dim: usize,
}

impl Parser {
    fn error(&self, message: impl Into<String>) -> ParseError {
        ParseError {
            column: self.pos + 1,
            message: message.into(),
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.chars.len() && self.chars[self.pos].is_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<char> {
        self.skip_ws();
        self.chars.get(self.pos).copied()
    }

    fn eat(&mut self, c: char) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            if self.eat('+') {
                lhs = lhs + self.term()?;
            } else if self.eat('-') {
                lhs = lhs - self.term()?;
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            if self.eat('*') {
                lhs = lhs * self.unary()?;
            } else if self.eat('/') {
                lhs = lhs / self.unary()?;
            } else {
                return Ok(lhs);
            }
        }
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if self.eat('-') {
            return Ok(-self.unary()?);
        }
        if self.eat('+') {
            return self.unary();
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.primary()?;
        if !self.eat('^') {
            return Ok(base);
        }
        let wrapped = self.eat('(');
        let n = self.exponent()?;
        if wrapped && !self.eat(')') {
            return Err(self.error("expected ')'"));
        }
        Ok(base.powi(n))
    }

    fn exponent(&mut self) -> Result<i32, ParseError> {
        let negative = self.eat('-');
        self.skip_ws();
        let start = self.pos;
        let literal = self.number_literal();
        if literal.is_empty() {
            return Err(self.error("expected integer exponent after '^'"));
        }
        let n: i32 = literal.parse().map_err(|_| ParseError {
            column: start + 1,
            message: format!("exponent '{literal}' is not an integer"),
        })?;
        Ok(if negative { -n } else { n })
    }

    fn number_literal(&mut self) -> String {
        let start = self.pos;
        while self.pos < self.chars.len() {
            let c = self.chars[self.pos];
            let exp_sign = (c == '-' || c == '+')
                && self.pos > start
                && matches!(self.chars[self.pos - 1], 'e' | 'E');
            if c.is_ascii_digit() || c == '.' || c == 'e' || c == 'E' || exp_sign {
                self.pos += 1;
            } else {
                break;
            }
        }
        self.chars[start..self.pos].iter().collect()
    }

    fn primary(&mut self) -> Result<Expr, ParseError> {
        match self.peek() {
            None => Err(self.error("unexpected end of expression")),
            Some('(') => {
                self.pos += 1;
                let e = self.expr()?;
                if !self.eat(')') {
                    return Err(self.error("expected ')'"));
                }
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == '.' => {
                let start = self.pos;
                let literal = self.number_literal();
                literal.parse::<f64>().map(Expr::constant).map_err(|_| ParseError {
                    column: start + 1,
                    message: format!("invalid number '{literal}'"),
                })
            }
            Some(c) if c.is_ascii_alphabetic() || c == '_' => {
                let start = self.pos;
                while self.pos < self.chars.len()
                    && (self.chars[self.pos].is_ascii_alphanumeric() || self.chars[self.pos] == '_')
                {
                    self.pos += 1;
                }
                let ident: String = self.chars[start..self.pos].iter().collect();
                let unknown = || ParseError {
                    column: start + 1,
                    message: format!("unknown identifier '{ident}'"),
                };
                match ident.as_str() {
                    "pi" => Ok(Expr::constant(std::f64::consts::PI)),
                    "exp" | "log" | "sqrt" | "sin" | "cos" => {
                        if !self.eat('(') {
                            return Err(self.error(format!("expected '(' after {ident}")));
                        }
                        let arg = self.expr()?;
                        if !self.eat(')') {
                            return Err(self.error("expected ')'"));
                        }
                        Ok(match ident.as_str() {
                            "exp" => arg.exp(),
                            "log" => arg.ln(),
                            "sqrt" => arg.sqrt(),
                            "sin" => arg.sin(),
                            _ => arg.cos(),
                        })
                    }
                    _ => {
                        let index = ident
                            .strip_prefix('x')
                            .filter(|digits| {
                                !digits.is_empty() && digits.chars().all(|c| c.is_ascii_digit())
                            })
                            .and_then(|digits| digits.parse::<usize>().ok())
                            .ok_or_else(unknown)?;
                        if index >= self.dim {
                            return Err(ParseError {
                                column: start + 1,
                                message: format!(
                                    "coordinate '{ident}' out of range for dimension {}",
                                    self.dim
                                ),
                            });
                        }
                        Ok(Expr::var(index))
                    }
                }
            }
            Some(c) => Err(self.error(format!("unexpected '{c}'"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eval(text: &str, p: &[f64]) -> f64 {
        parse(text, p.len()).unwrap().eval(p).unwrap()
    }

    #[test]
    fn precedence_and_powers() {
        assert_eq!(eval("x0^2 + x1^2", &[3.0, 4.0]), 25.0);
        assert_eq!(eval("-x0^2", &[3.0]), -9.0);
        assert_eq!(eval("2*x0^-1", &[4.0]), 0.5);
        assert_eq!(eval("2*x0^(-2)", &[2.0]), 0.5);
        assert_eq!(eval("1/(1+x0^2+x1^2)", &[0.0, 0.0]), 1.0);
        assert_eq!(eval("8/2/2", &[]), 2.0);
        assert_eq!(eval("1 - 2 - 3", &[]), -4.0);
        assert!((eval("-log(1+x0^2)", &[1.0]) + 2f64.ln()).abs() < 1e-15);
        assert!((eval("sqrt(2)*exp(0)*cos(pi)", &[]) + 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(eval("1.5e2", &[]), 150.0);
        assert_eq!(eval("2.5e-1", &[]), 0.25);
    }

    #[test]
    fn rejects_dangling_operator() {
        let err = parse("x0 +", 1).unwrap_err();
        assert_eq!(err.column, 5);
    }

    #[test]
    fn rejects_unknown_identifier() {
        let err = parse("x0 + y", 2).unwrap_err();
        assert_eq!(err.column, 6);
        assert!(err.message.contains("'y'"));
        assert!(parse("tan(x0)", 1).is_err());
        assert!(parse("x2", 2).is_err());
    }

    #[test]
    fn rejects_fractional_exponent() {
        assert!(parse("x0^0.5", 1).is_err());
        assert!(parse("x0^x1", 2).is_err());
    }

    #[test]
    fn rejects_trailing_garbage() {
        assert!(parse("x0 x1", 2).is_err());
        assert!(parse("(x0", 1).is_err());
    }
}
