//! Text form of an SPM.
//!
//! ```text
//! % spm v1
//! % npm_hash <hex>
//! % merge both
//! % weighting empirical
//! % samples 9976
//! % pattern u1_0 11001000
//! 1.0::u1_0 :- b1_0.
//! 0.85::d1_2 :- u1_1.
//! ```
//! Grammar: `line := comment | clause | blank`, `comment := '%' text`,
//! `clause := prob '::' id ws? ':-' ws? id ws? '.'`, where `prob` is a
//! decimal in [0, 1] and `id` is `[budai]<ue>_<index|S|A|D>`. Comments named
//! above carry provenance and vocabulary patterns; other comments are
//! ignored. Clauses are written sorted by (tail, head).

use std::fmt::Write as _;

use super::spm::{format_prob, Spm};
use crate::error::{Error, Result};
use crate::extract::VocabId;

pub fn serialize_problog(spm: &Spm) -> String {
    let p = &spm.provenance;
    let mut out = String::from("% spm v1\n");
    if !p.npm_hash.is_empty() {
        let _ = writeln!(out, "% npm_hash {}", p.npm_hash);
    }
    let _ = writeln!(out, "% merge {}\n% weighting {}\n% samples {}", p.merge, p.weighting, p.samples);
    for (id, pat) in &spm.patterns {
        let _ = writeln!(out, "% pattern {id} {pat}");
    }
    for c in spm.clauses() {
        let _ = writeln!(out, "{}::{} :- {}.", format_prob(c.prob), c.head, c.tail);
    }
    out
}

struct Cursor<'a> {
    line: usize,
    text: &'a str,
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn err(&self, message: impl Into<String>) -> Error {
        Error::Syntax { line: self.line, column: self.text[..self.pos].chars().count() + 1, message: message.into() }
    }

    fn rest(&self) -> &'a str {
        &self.text[self.pos..]
    }

    fn skip_ws(&mut self) {
        let r = self.rest();
        self.pos += r.len() - r.trim_start().len();
    }

    fn expect(&mut self, token: &str) -> Result<()> {
        if self.rest().starts_with(token) {
            self.pos += token.len();
            Ok(())
        } else {
            Err(self.err(format!("expected {token:?}")))
        }
    }

    fn take_while(&mut self, f: impl Fn(char) -> bool) -> &'a str {
        let r = self.rest();
        let n = r.find(|c| !f(c)).unwrap_or(r.len());
        self.pos += n;
        &r[..n]
    }

    fn id(&mut self) -> Result<VocabId> {
        let start = self.pos;
        let word = self.take_while(|c| c.is_ascii_alphanumeric() || c == '_');
        VocabId::parse(word).ok_or_else(|| {
            self.pos = start;
            self.err(format!("bad identifier {word:?}"))
        })
    }
}

fn header_field<T: std::str::FromStr>(cur: &Cursor, value: &str) -> Result<T> {
    value.trim().parse().map_err(|_| cur.err(format!("bad header value {:?}", value.trim())))
}

pub fn parse_problog(text: &str) -> Result<Spm> {
    let mut spm = Spm::default();
    for (n, raw) in text.lines().enumerate() {
        let mut cur = Cursor { line: n + 1, text: raw, pos: 0 };
        cur.skip_ws();
        if cur.rest().is_empty() {
            continue;
        }
        if let Some(comment) = cur.rest().strip_prefix('%') {
            cur.pos += 1;
            let body = comment.trim();
            let (key, value) = body.split_once(' ').unwrap_or((body, ""));
            match key {
                "npm_hash" => spm.provenance.npm_hash = value.trim().to_string(),
                "merge" => spm.provenance.merge = header_field(&cur, value)?,
                "weighting" => spm.provenance.weighting = header_field(&cur, value)?,
                "samples" => spm.provenance.samples = header_field(&cur, value)?,
                "pattern" => {
                    let (id, pat) = value.trim().split_once(' ').ok_or_else(|| cur.err("pattern needs id and bits"))?;
                    let id = VocabId::parse(id).ok_or_else(|| cur.err(format!("bad identifier {id:?}")))?;
                    spm.patterns.insert(id, header_field(&cur, pat)?);
                }
                _ => {}
            }
            continue;
        }
        let start = cur.pos;
        let num = cur.take_while(|c| c.is_ascii_digit() || matches!(c, '.' | 'e' | 'E' | '-' | '+'));
        let prob: f64 = num.parse().map_err(|_| {
            cur.pos = start;
            cur.err(format!("bad probability {num:?}"))
        })?;
        if !(0.0..=1.0).contains(&prob) {
            return Err(Error::ProbabilityRange(prob));
        }
        cur.expect("::")?;
        let head = cur.id()?;
        cur.skip_ws();
        cur.expect(":-")?;
        cur.skip_ws();
        let tail = cur.id()?;
        cur.skip_ws();
        cur.expect(".")?;
        cur.skip_ws();
        if !cur.rest().is_empty() {
            return Err(cur.err("trailing characters"));
        }
        if spm.prob(tail, head).is_some() {
            return Err(Error::Syntax {
                line: cur.line,
                column: 1,
                message: format!("duplicate clause {head} :- {tail}"),
            });
        }
        spm.insert(tail, head, prob).map_err(|e| match e {
            Error::Config(m) => Error::Syntax { line: cur.line, column: 1, message: m },
            other => other,
        })?;
    }
    Ok(spm)
}
