//! Text grammar for jump measures.
//!
//! ```text
//! measure  := stable "(" kvs ")"             keys: beta, c (default 1)
//!           | tempered "(" kvs ")"           keys: beta, theta, c (default 1)
//!           | atoms "[" [pair {"," pair}] "]"
//!           | trunc "(" measure "," "eps" "=" number ")"
//!           | mix "(" term {"," term} ")"
//!           | sum "(" measure {"," measure} ")"
//! pair     := "(" number "," number ")"      position, mass
//! term     := number "*" stable "(" kvs ")"
//! kvs      := key "=" number {"," key "=" number}
//! ```
//!
//! Whitespace is insignificant. Errors carry the byte offset of the problem.

use super::LevyMeasure;
use crate::error::{Error, Result};

/// Parse a measure description such as `trunc(stable(beta=0.5,c=1),eps=1e-3)`.
pub fn parse_measure(src: &str) -> Result<LevyMeasure> {
    let mut p = Parser { src, pos: 0 };
    let m = p.measure()?;
    p.skip_ws();
    if p.pos != src.len() {
        return Err(p.err("unexpected trailing input"));
    }
    Ok(m)
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Parser<'a> {
    fn err(&self, msg: &str) -> Error {
        Error::Parse {
            pos: self.pos,
            msg: msg.to_string(),
        }
    }

    fn rest(&self) -> &'a str {
        &self.src[self.pos..]
    }

    fn skip_ws(&mut self) {
        let trimmed = self.rest().trim_start();
        self.pos = self.src.len() - trimmed.len();
    }

    fn peek(&mut self) -> Option<char> {
        self.skip_ws();
        self.rest().chars().next()
    }

    fn expect(&mut self, c: char) -> Result<()> {
        if self.peek() == Some(c) {
            self.pos += c.len_utf8();
            Ok(())
        } else {
            Err(self.err(&format!("expected '{c}'")))
        }
    }

    fn eat(&mut self, c: char) -> bool {
        if self.peek() == Some(c) {
            self.pos += c.len_utf8();
            true
        } else {
            false
        }
    }

    fn ident(&mut self) -> Result<&'a str> {
        self.skip_ws();
        let rest = self.rest();
        let len = rest
            .find(|c: char| !(c.is_ascii_alphanumeric() || c == '_'))
            .unwrap_or(rest.len());
        if len == 0 {
            return Err(self.err("expected a name"));
        }
        self.pos += len;
        Ok(&rest[..len])
    }

    fn number(&mut self) -> Result<f64> {
        self.skip_ws();
        let start = self.pos;
        let rest = self.rest();
        let mut len = 0;
        let bytes = rest.as_bytes();
        while len < bytes.len() {
            let b = bytes[len];
            let exp_sign =
                (b == b'+' || b == b'-') && len > 0 && matches!(bytes[len - 1], b'e' | b'E');
            if b.is_ascii_digit()
                || b == b'.'
                || b == b'e'
                || b == b'E'
                || exp_sign
                || (len == 0 && (b == b'-' || b == b'+'))
            {
                len += 1;
            } else {
                break;
            }
        }
        rest[..len]
            .parse::<f64>()
            .inspect(|_| {
                self.pos += len;
            })
            .map_err(|_| Error::Parse {
                pos: start,
                msg: "expected a number".into(),
            })
    }

    fn kvs(&mut self, allowed: &[&str]) -> Result<Vec<(&'a str, f64)>> {
        let mut out = Vec::new();
        loop {
            let at = self.pos;
            let key = self.ident()?;
            if !allowed.contains(&key) {
                return Err(Error::Parse {
                    pos: at,
                    msg: format!("unknown key '{key}', expected one of {allowed:?}"),
                });
            }
            if out.iter().any(|(k, _)| *k == key) {
                return Err(Error::Parse {
                    pos: at,
                    msg: format!("duplicate key '{key}'"),
                });
            }
            self.expect('=')?;
            out.push((key, self.number()?));
            if !self.eat(',') {
                return Ok(out);
            }
        }
    }

    fn required(&self, kvs: &[(&str, f64)], key: &str, at: usize) -> Result<f64> {
        kvs.iter()
            .find(|(k, _)| *k == key)
            .map(|(_, v)| *v)
            .ok_or_else(|| Error::Parse {
                pos: at,
                msg: format!("missing key '{key}'"),
            })
    }

    fn optional(kvs: &[(&str, f64)], key: &str, default: f64) -> f64 {
        kvs.iter()
            .find(|(k, _)| *k == key)
            .map_or(default, |(_, v)| *v)
    }

    // validation errors from the constructors are re-tagged with the position
    fn at<T>(&self, at: usize, r: Result<T>) -> Result<T> {
        r.map_err(|e| match e {
            Error::InvalidMeasure(msg) => Error::Parse { pos: at, msg },
            other => other,
        })
    }

    fn measure(&mut self) -> Result<LevyMeasure> {
        self.skip_ws();
        let at = self.pos;
        let name = self.ident()?;
        match name {
            "stable" => {
                self.expect('(')?;
                let kv = self.kvs(&["beta", "c"])?;
                self.expect(')')?;
                let beta = self.required(&kv, "beta", at)?;
                self.at(at, LevyMeasure::stable(beta, Self::optional(&kv, "c", 1.0)))
            }
            "tempered" => {
                self.expect('(')?;
                let kv = self.kvs(&["beta", "theta", "c"])?;
                self.expect(')')?;
                let beta = self.required(&kv, "beta", at)?;
                let theta = self.required(&kv, "theta", at)?;
                self.at(
                    at,
                    LevyMeasure::tempered(beta, theta, Self::optional(&kv, "c", 1.0)),
                )
            }
            "atoms" => {
                self.expect('[')?;
                let mut pairs = Vec::new();
                if !self.eat(']') {
                    loop {
                        self.expect('(')?;
                        let y = self.number()?;
                        self.expect(',')?;
                        let m = self.number()?;
                        self.expect(')')?;
                        pairs.push((y, m));
                        if self.eat(']') {
                            break;
                        }
                        self.expect(',')?;
                    }
                }
                self.at(at, LevyMeasure::atoms(&pairs))
            }
            "trunc" => {
                self.expect('(')?;
                let base = self.measure()?;
                self.expect(',')?;
                let kv = self.kvs(&["eps"])?;
                self.expect(')')?;
                let eps = self.required(&kv, "eps", at)?;
                self.at(at, base.truncate(eps))
            }
            "mix" => {
                self.expect('(')?;
                let mut comps = Vec::new();
                loop {
                    let w = self.number()?;
                    self.expect('*')?;
                    let inner = self.pos;
                    let kind = self.ident()?;
                    if kind != "stable" {
                        return Err(Error::Parse {
                            pos: inner,
                            msg: "mixture terms must be stable(...)".into(),
                        });
                    }
                    self.expect('(')?;
                    let kv = self.kvs(&["beta", "c"])?;
                    self.expect(')')?;
                    let beta = self.required(&kv, "beta", inner)?;
                    comps.push((beta, w * Self::optional(&kv, "c", 1.0)));
                    if !self.eat(',') {
                        break;
                    }
                }
                self.expect(')')?;
                self.at(at, LevyMeasure::mixture(&comps))
            }
            "sum" => {
                self.expect('(')?;
                let mut parts = vec![self.measure()?];
                while self.eat(',') {
                    parts.push(self.measure()?);
                }
                self.expect(')')?;
                Ok(LevyMeasure::sum(parts))
            }
            other => Err(Error::Parse {
                pos: at,
                msg: format!("unknown measure '{other}'"),
            }),
        }
    }
}
