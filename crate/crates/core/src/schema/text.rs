//! Raw-text trajectory grammar: `[x1, y1], [x2, y2], [x3, y3], [x4, y4], [x5, y5]`.
//!
//! ```text
//! line   := ws* pair (ws* ',' ws* pair){4} ws*
//! pair   := '[' ws* number ws* ',' ws* number ws* ']'
//! number := [+-]? digit+ ('.' digit+)? ([eE] [+-]? digit+)?
//! ws     := ' ' | '\t' | '\r' | '\n'
//! ```
//!
//! Anything else (markdown fences, commentary, `NaN`, overflowing literals) is
//! rejected with the byte offset of the first offending input.

use std::fmt;

use thiserror::Error;

use crate::traj::{Waypoint, WAYPOINTS_1HZ};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TextErrorKind {
    ExpectedOpenBracket,
    ExpectedComma,
    ExpectedCloseBracket,
    InvalidNumber,
    NonFiniteNumber,
    TooFewPairs { found: usize },
    TooManyPairs,
    TrailingInput,
}

impl fmt::Display for TextErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::ExpectedOpenBracket => write!(f, "expected '['"),
            Self::ExpectedComma => write!(f, "expected ','"),
            Self::ExpectedCloseBracket => write!(f, "expected ']'"),
            Self::InvalidNumber => write!(f, "invalid number"),
            Self::NonFiniteNumber => write!(f, "number is not finite"),
            Self::TooFewPairs { found } => {
                write!(f, "expected {WAYPOINTS_1HZ} pairs, found {found}")
            }
            Self::TooManyPairs => write!(f, "expected {WAYPOINTS_1HZ} pairs, found more"),
            Self::TrailingInput => write!(f, "unexpected trailing input"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{kind} at byte {offset}")]
pub struct TextError {
    pub offset: usize,
    pub kind: TextErrorKind,
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn skip_ws(&mut self) {
        while let Some(b' ' | b'\t' | b'\r' | b'\n') = self.bytes.get(self.pos) {
            self.pos += 1;
        }
    }

    fn peek(&self) -> Option<u8> {
        self.bytes.get(self.pos).copied()
    }

    fn fail<T>(&self, kind: TextErrorKind) -> Result<T, TextError> {
        Err(TextError {
            offset: self.pos,
            kind,
        })
    }

    fn expect(&mut self, byte: u8, kind: TextErrorKind) -> Result<(), TextError> {
        self.skip_ws();
        if self.peek() == Some(byte) {
            self.pos += 1;
            Ok(())
        } else {
            self.fail(kind)
        }
    }

    fn digits(&mut self) -> usize {
        let start = self.pos;
        while matches!(self.peek(), Some(b'0'..=b'9')) {
            self.pos += 1;
        }
        self.pos - start
    }

    fn number(&mut self) -> Result<f64, TextError> {
        self.skip_ws();
        let start = self.pos;
        let invalid = TextError {
            offset: start,
            kind: TextErrorKind::InvalidNumber,
        };
        if let Some(b'+' | b'-') = self.peek() {
            self.pos += 1;
        }
        if self.digits() == 0 {
            return Err(invalid);
        }
        if self.peek() == Some(b'.') {
            self.pos += 1;
            if self.digits() == 0 {
                return Err(invalid);
            }
        }
        if let Some(b'e' | b'E') = self.peek() {
            self.pos += 1;
            if let Some(b'+' | b'-') = self.peek() {
                self.pos += 1;
            }
            if self.digits() == 0 {
                return Err(invalid);
            }
        }
        // The grammar above only admits ASCII.
        let literal = std::str::from_utf8(&self.bytes[start..self.pos]).map_err(|_| invalid.clone())?;
        let value: f64 = literal.parse().map_err(|_| invalid)?;
        if !value.is_finite() {
            return Err(TextError {
                offset: start,
                kind: TextErrorKind::NonFiniteNumber,
            });
        }
        Ok(value)
    }

    fn pair(&mut self) -> Result<Waypoint, TextError> {
        self.expect(b'[', TextErrorKind::ExpectedOpenBracket)?;
        let x = self.number()?;
        self.expect(b',', TextErrorKind::ExpectedComma)?;
        let y = self.number()?;
        self.expect(b']', TextErrorKind::ExpectedCloseBracket)?;
        Ok(Waypoint::new(x, y))
    }
}

/// Parses exactly five bracketed waypoint pairs.
pub fn parse_trajectory_text(raw: &str) -> Result<[Waypoint; WAYPOINTS_1HZ], TextError> {
    let mut cur = Cursor {
        bytes: raw.as_bytes(),
        pos: 0,
    };
    let mut out = [Waypoint::ORIGIN; WAYPOINTS_1HZ];
    out[0] = cur.pair()?;
    for (found, slot) in out.iter_mut().enumerate().skip(1) {
        cur.skip_ws();
        match cur.peek() {
            Some(b',') => cur.pos += 1,
            None => return cur.fail(TextErrorKind::TooFewPairs { found }),
            Some(_) => return cur.fail(TextErrorKind::ExpectedComma),
        }
        *slot = cur.pair()?;
    }
    cur.skip_ws();
    match cur.peek() {
        None => Ok(out),
        Some(b',') => {
            let at = cur.pos;
            cur.pos += 1;
            cur.skip_ws();
            if cur.peek() == Some(b'[') {
                Err(TextError {
                    offset: at,
                    kind: TextErrorKind::TooManyPairs,
                })
            } else {
                Err(TextError {
                    offset: at,
                    kind: TextErrorKind::TrailingInput,
                })
            }
        }
        Some(_) => cur.fail(TextErrorKind::TrailingInput),
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SerializeError {
    #[error("expected {WAYPOINTS_1HZ} waypoints, found {0}")]
    WrongCount(usize),
    #[error("waypoint {0} is not finite")]
    NonFinite(usize),
}

/// Canonical text form using the shortest decimal that round-trips each value.
pub fn serialize_trajectory_text(waypoints: &[Waypoint]) -> Result<String, SerializeError> {
    if waypoints.len() != WAYPOINTS_1HZ {
        return Err(SerializeError::WrongCount(waypoints.len()));
    }
    if let Some(i) = waypoints.iter().position(|w| !w.is_finite()) {
        return Err(SerializeError::NonFinite(i));
    }
    Ok(format_pairs(waypoints))
}

/// `[x, y], [x, y], ...` for any number of finite points.
pub(crate) fn format_pairs(points: &[Waypoint]) -> String {
    let mut s = String::new();
    for (i, w) in points.iter().enumerate() {
        if i > 0 {
            s.push_str(", ");
        }
        s.push_str(&format!("[{}, {}]", w.x, w.y));
    }
    s
}
