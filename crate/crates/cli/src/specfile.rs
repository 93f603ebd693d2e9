//! Line-oriented coefficient files.
//!
//! ```text
//! # comments run to the end of the line
//! h = 0.5
//! alpha = 1, beta = 1
//! v1 on (-1, 1): poly -4
//! b1
//!   on (-1, 0): poly 0 1
//!   on (0, 1): poly 0 -1
//! V0 atom at 0 mass 2
//! ```
//!
//! Numbers are decimal, `inf`/`-inf`, or hexadecimal floats such as `0x1.8p1`.

use bvlap_core::{CoefficientSpec, Error, PiecewiseBV, Poly, SignedMeasure};
use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

#[derive(Debug, Clone, PartialEq)]
pub struct SpecError {
    pub line: usize,
    pub column: usize,
    pub message: String,
    /// `syntax`, or the violated condition (`positivity`, `invariant`).
    pub kind: &'static str,
}

impl fmt::Display for SpecError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}, column {}: {}", self.line, self.column, self.message)
    }
}

impl std::error::Error for SpecError {}

fn err<T>(line: usize, column: usize, message: impl Into<String>) -> Result<T, SpecError> {
    Err(SpecError {
        line,
        column,
        message: message.into(),
        kind: "syntax",
    })
}

#[derive(Debug, Clone, PartialEq)]
struct Token {
    text: String,
    column: usize,
}

fn tokenize(line: &str) -> Vec<Token> {
    let mut out = vec![];
    let mut cur = String::new();
    let mut start = 0;
    for (i, ch) in line.char_indices() {
        let col = line[..i].chars().count() + 1;
        if ch == '#' {
            break;
        }
        if ch.is_whitespace() || "(),:=".contains(ch) {
            if !cur.is_empty() {
                out.push(Token {
                    text: std::mem::take(&mut cur),
                    column: start,
                });
            }
            if !ch.is_whitespace() {
                out.push(Token {
                    text: ch.to_string(),
                    column: col,
                });
            }
        } else {
            if cur.is_empty() {
                start = col;
            }
            cur.push(ch);
        }
    }
    if !cur.is_empty() {
        out.push(Token { text: cur, column: start });
    }
    out
}

/// Decimal, `inf`, or hexadecimal float (`[-]0x<hex>[.<hex>][p<exp>]`).
pub fn parse_number(s: &str) -> Option<f64> {
    let (neg, body) = match s.strip_prefix('-') {
        Some(r) => (true, r),
        None => (false, s.strip_prefix('+').unwrap_or(s)),
    };
    let v = if let Some(hex) = body.strip_prefix("0x").or_else(|| body.strip_prefix("0X")) {
        parse_hex(hex)?
    } else {
        let lower = body.to_ascii_lowercase();
        if lower == "nan" {
            return None;
        }
        lower.parse::<f64>().ok()?
    };
    Some(if neg { -v } else { v })
}

fn parse_hex(s: &str) -> Option<f64> {
    let (mant, exp) = match s.find(['p', 'P']) {
        Some(k) => (&s[..k], s[k + 1..].parse::<i32>().ok()?),
        None => (s, 0),
    };
    let (int, frac) = match mant.split_once('.') {
        Some((a, b)) => (a, b),
        None => (mant, ""),
    };
    if int.is_empty() && frac.is_empty() {
        return None;
    }
    let digits: String = int.chars().chain(frac.chars()).collect();
    if digits.len() > 13 {
        return None;
    }
    let m = u64::from_str_radix(&digits, 16).ok()?;
    Some(m as f64 * 2f64.powi(exp - 4 * frac.len() as i32))
}

const NAMES: [&str; 6] = ["alpha", "beta", "b0", "b1", "v0", "v1"];

fn coefficient(name: &str) -> Option<&'static str> {
    let lower = name.to_ascii_lowercase();
    NAMES.iter().copied().find(|n| *n == lower)
}

#[derive(Default)]
struct Def {
    background: Option<f64>,
    pieces: Vec<(f64, f64, Poly, usize, usize)>,
    atoms: Vec<(f64, f64, usize, usize)>,
    line: usize,
}

/// A parsed file with the line on which each coefficient first appears.
#[derive(Debug, Clone)]
pub struct ParsedSpec {
    pub spec: CoefficientSpec,
    pub lines: BTreeMap<String, usize>,
}

struct Cursor<'a> {
    toks: &'a [Token],
    pos: usize,
    line: usize,
    end_col: usize,
}

impl<'a> Cursor<'a> {
    fn peek(&self) -> Option<&'a Token> {
        self.toks.get(self.pos)
    }

    fn next(&mut self, what: &str) -> Result<&'a Token, SpecError> {
        match self.toks.get(self.pos) {
            Some(t) => {
                self.pos += 1;
                Ok(t)
            }
            None => err(self.line, self.end_col, format!("expected {what}")),
        }
    }

    fn expect(&mut self, text: &str) -> Result<(), SpecError> {
        let t = self.next(&format!("'{text}'"))?;
        if t.text.eq_ignore_ascii_case(text) {
            Ok(())
        } else {
            err(self.line, t.column, format!("expected '{text}', found '{}'", t.text))
        }
    }

    fn number(&mut self) -> Result<(f64, usize), SpecError> {
        let t = self.next("a number")?;
        match parse_number(&t.text) {
            Some(v) => Ok((v, t.column)),
            None => err(self.line, t.column, format!("'{}' is not a number", t.text)),
        }
    }

    fn done(&self) -> bool {
        self.pos >= self.toks.len()
    }
}

/// Parses coefficient text; `validate` failures are reported at the line of the
/// coefficient they concern.
pub fn parse_spec(text: &str) -> Result<ParsedSpec, SpecError> {
    let mut defs: BTreeMap<&'static str, Def> = BTreeMap::new();
    let mut h = 1.0;
    let mut r0 = None;
    let mut section: Option<&'static str> = None;
    let mut lines: BTreeMap<String, usize> = BTreeMap::new();
    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        let toks = tokenize(raw);
        let end_col = raw.chars().count() + 1;
        let mut statements: Vec<&[Token]> = vec![];
        let (mut depth, mut start) = (0i32, 0usize);
        for (i, t) in toks.iter().enumerate() {
            match t.text.as_str() {
                "(" => depth += 1,
                ")" => depth -= 1,
                "," if depth == 0 => {
                    statements.push(&toks[start..i]);
                    start = i + 1;
                }
                _ => {}
            }
        }
        statements.push(&toks[start..]);
        for st in statements {
            if st.is_empty() {
                continue;
            }
            let mut c = Cursor {
                toks: st,
                pos: 0,
                line,
                end_col,
            };
            let head = c.next("a statement")?;
            let key = head.text.to_ascii_lowercase();
            if key == "h" || key == "r0" {
                c.expect("=")?;
                let (v, _) = c.number()?;
                if key == "h" {
                    h = v;
                } else {
                    r0 = Some(v);
                }
            } else {
                let (name, rest_head) = match coefficient(&head.text) {
                    Some(n) => {
                        section = Some(n);
                        (n, c.peek())
                    }
                    None => match section {
                        Some(n) => {
                            c.pos = 0;
                            (n, Some(head))
                        }
                        None => {
                            return err(line, head.column, format!("unknown coefficient or keyword '{}'", head.text));
                        }
                    },
                };
                let def = defs.entry(name).or_insert_with(|| Def {
                    line,
                    ..Def::default()
                });
                lines.entry(name.to_string()).or_insert(line);
                match rest_head.map(|t| t.text.to_ascii_lowercase()) {
                    None => {}
                    Some(s) if s == ":" => {
                        c.pos += 1;
                    }
                    Some(s) if s == "=" => {
                        c.pos += 1;
                        let (v, _) = c.number()?;
                        def.background = Some(v);
                    }
                    Some(s) if s == "on" => {
                        c.pos += 1;
                        let col = st[c.pos.saturating_sub(1)].column;
                        c.expect("(")?;
                        let (a, _) = c.number()?;
                        c.expect(",")?;
                        let (b, _) = c.number()?;
                        c.expect(")")?;
                        c.expect(":")?;
                        c.expect("poly")?;
                        let mut coef = vec![];
                        while !c.done() {
                            coef.push(c.number()?.0);
                        }
                        if coef.is_empty() || coef.len() > 4 {
                            return err(line, col, "poly needs one to four coefficients (degree at most 3)");
                        }
                        if !(a < b) {
                            return err(line, col, format!("empty interval ({a}, {b})"));
                        }
                        def.pieces.push((a, b, Poly::new(coef), line, col));
                    }
                    Some(s) if s == "atom" => {
                        c.pos += 1;
                        let col = st[c.pos - 1].column;
                        if name != "v0" {
                            return err(line, col, format!("atoms are only allowed in V0, not {name}"));
                        }
                        c.expect("at")?;
                        let (x, _) = c.number()?;
                        c.expect("mass")?;
                        let (m, _) = c.number()?;
                        if !x.is_finite() || !m.is_finite() {
                            return err(line, col, "atom location and mass must be finite");
                        }
                        def.atoms.push((x, m, line, col));
                    }
                    Some(_) => {
                        let t = &st[c.pos];
                        return err(line, t.column, format!("expected '=', 'on' or 'atom', found '{}'", t.text));
                    }
                }
                if let Some(t) = c.peek() {
                    return err(line, t.column, format!("unexpected '{}'", t.text));
                }
            }
        }
    }
    let build = |name: &str, default: f64| -> Result<PiecewiseBV, SpecError> {
        match defs.get(name) {
            None => Ok(PiecewiseBV::constant(default)),
            Some(d) => assemble(d, d.background.unwrap_or(if d.pieces.is_empty() { default } else { 0.0 })),
        }
    };
    let v0_def = defs.get("v0");
    let mut atoms: Vec<(f64, f64)> = vec![];
    if let Some(d) = v0_def {
        for &(x, m, l, col) in &d.atoms {
            if atoms.iter().any(|a| a.0 == x) {
                return err(l, col, format!("second atom at x = {x}"));
            }
            atoms.push((x, m));
        }
    }
    let v0_density = build("v0", 0.0)?;
    let spec = CoefficientSpec {
        h,
        alpha: build("alpha", 1.0)?,
        beta: build("beta", 1.0)?,
        b0: build("b0", 0.0)?,
        b1: build("b1", 0.0)?,
        v0: SignedMeasure::new(v0_density, atoms).map_err(|e| SpecError {
            line: v0_def.map_or(0, |d| d.line),
            column: 1,
            message: e.to_string(),
            kind: "invariant",
        })?,
        v1: build("v1", 0.0)?,
        r0,
    };
    if let Err(e) = spec.validate() {
        let msg = e.to_string();
        let line = msg
            .split(|c: char| !c.is_ascii_alphanumeric())
            .find_map(|w| coefficient(w))
            .and_then(|n| lines.get(n).copied())
            .unwrap_or(1);
        return Err(SpecError {
            line,
            column: 1,
            message: msg,
            kind: if matches!(e, Error::Positivity(_)) { "positivity" } else { "invariant" },
        });
    }
    Ok(ParsedSpec { spec, lines })
}

fn assemble(d: &Def, background: f64) -> Result<PiecewiseBV, SpecError> {
    let mut pieces = d.pieces.clone();
    pieces.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap());
    for w in pieces.windows(2) {
        if w[1].0 < w[0].1 {
            return err(w[1].3, w[1].4, format!("interval overlaps ({}, {})", w[0].0, w[0].1));
        }
    }
    let mut breaks: Vec<f64> = pieces
        .iter()
        .flat_map(|p| [p.0, p.1])
        .filter(|x| x.is_finite())
        .collect();
    breaks.dedup();
    let mut polys = Vec::with_capacity(breaks.len() + 1);
    for k in 0..=breaks.len() {
        let lo = if k == 0 { f64::NEG_INFINITY } else { breaks[k - 1] };
        let hi = if k == breaks.len() { f64::INFINITY } else { breaks[k] };
        let p = pieces
            .iter()
            .find(|p| p.0 <= lo && hi <= p.1)
            .map_or(Poly::constant(background), |p| p.2.clone());
        polys.push(p);
    }
    PiecewiseBV::new(breaks, polys)
        .map(|f| f.simplify())
        .map_err(|e| SpecError {
            line: d.line,
            column: 1,
            message: e.to_string(),
            kind: "invariant",
        })
}

pub fn parse_spec_file(path: &Path) -> anyhow::Result<ParsedSpec> {
    let text = std::fs::read_to_string(path).map_err(|e| anyhow::anyhow!("cannot read {}: {e}", path.display()))?;
    parse_spec(&text).map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))
}
