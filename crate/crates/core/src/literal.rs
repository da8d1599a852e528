//! Forgiving reader for the dictionary literals language models emit.
//!
//! Accepts JSON as well as the Python-flavoured variant: single-quoted
//! strings, bare `True`/`False`/`None`, unquoted keys and trailing commas.

use std::fmt;

#[derive(Debug, Clone, PartialEq)]
pub enum Literal {
    Str(String),
    Num(f64),
    Bool(bool),
    Null,
    /// Unquoted identifier that is not a known keyword.
    Word(String),
    List(Vec<Literal>),
    Object(Vec<(String, Literal)>),
}

impl Literal {
    /// Case-insensitive key lookup on an object.
    pub fn get(&self, key: &str) -> Option<&Literal> {
        match self {
            Literal::Object(fields) => fields
                .iter()
                .find(|(k, _)| k.trim().eq_ignore_ascii_case(key))
                .map(|(_, v)| v),
            _ => None,
        }
    }
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Literal::Str(s) | Literal::Word(s) => write!(f, "{s}"),
            Literal::Num(n) => write!(f, "{n}"),
            Literal::Bool(b) => write!(f, "{b}"),
            Literal::Null => write!(f, "null"),
            Literal::List(items) => {
                write!(f, "[")?;
                for (k, item) in items.iter().enumerate() {
                    if k > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{item}")?;
                }
                write!(f, "]")
            }
            Literal::Object(_) => write!(f, "{{...}}"),
        }
    }
}

/// Quotes `s` as a single-quoted literal that `parse_object_at` reads back
/// unchanged.
pub fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('\'');
    for ch in s.chars() {
        match ch {
            '\\' => out.push_str("\\\\"),
            '\'' => out.push_str("\\'"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            c if (c as u32) < 0x20 || c == '\u{7f}' => {
                out.push_str(&format!("\\u{:04x}", c as u32));
            }
            c => out.push(c),
        }
    }
    out.push('\'');
    out
}

struct Reader<'a> {
    chars: Vec<(usize, char)>,
    pos: usize,
    src: &'a str,
}

impl<'a> Reader<'a> {
    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).map(|&(_, c)| c)
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek();
        self.pos += 1;
        c
    }

    fn skip_ws(&mut self) {
        while self.peek().is_some_and(char::is_whitespace) {
            self.pos += 1;
        }
    }

    fn expect(&mut self, want: char) -> Option<()> {
        self.skip_ws();
        (self.bump()? == want).then_some(())
    }

    fn byte_offset(&self) -> usize {
        self.chars.get(self.pos).map_or(self.src.len(), |&(b, _)| b)
    }

    fn value(&mut self, depth: usize) -> Option<Literal> {
        if depth > 32 {
            return None;
        }
        self.skip_ws();
        match self.peek()? {
            '{' => self.object(depth),
            '[' | '(' => self.list(depth),
            '\'' | '"' => self.string().map(Literal::Str),
            c if c == '-' || c == '+' || c.is_ascii_digit() => self.number(),
            c if c.is_alphabetic() || c == '_' => {
                let w = self.word();
                Some(match w.as_str() {
                    "True" | "true" => Literal::Bool(true),
                    "False" | "false" => Literal::Bool(false),
                    "None" | "null" => Literal::Null,
                    _ => Literal::Word(w),
                })
            }
            _ => None,
        }
    }

    fn word(&mut self) -> String {
        let mut w = String::new();
        while let Some(c) = self.peek() {
            if c.is_alphanumeric() || c == '_' || c == '-' {
                w.push(c);
                self.pos += 1;
            } else {
                break;
            }
        }
        w
    }

    fn number(&mut self) -> Option<Literal> {
        let mut s = String::new();
        while let Some(c) = self.peek() {
            if c.is_ascii_digit() || matches!(c, '-' | '+' | '.' | 'e' | 'E') {
                s.push(c);
                self.pos += 1;
            } else {
                break;
            }
        }
        s.parse().ok().map(Literal::Num)
    }

    fn hex4(&mut self) -> Option<u32> {
        let mut v = 0;
        for _ in 0..4 {
            v = v * 16 + self.bump()?.to_digit(16)?;
        }
        Some(v)
    }

    fn string(&mut self) -> Option<String> {
        let quote = self.bump()?;
        let mut out = String::new();
        loop {
            match self.bump()? {
                c if c == quote => return Some(out),
                '\\' => match self.bump()? {
                    'n' => out.push('\n'),
                    'r' => out.push('\r'),
                    't' => out.push('\t'),
                    'b' => out.push('\u{8}'),
                    'f' => out.push('\u{c}'),
                    '0' => out.push('\0'),
                    'u' => {
                        let hi = self.hex4()?;
                        let code = if (0xD800..0xDC00).contains(&hi) {
                            let save = self.pos;
                            if self.bump() == Some('\\') && self.bump() == Some('u') {
                                let lo = self.hex4()?;
                                if (0xDC00..0xE000).contains(&lo) {
                                    0x10000 + ((hi - 0xD800) << 10) + (lo - 0xDC00)
                                } else {
                                    self.pos = save;
                                    0xFFFD
                                }
                            } else {
                                self.pos = save;
                                0xFFFD
                            }
                        } else {
                            hi
                        };
                        out.push(char::from_u32(code).unwrap_or('\u{FFFD}'));
                    }
                    other => out.push(other),
                },
                c => out.push(c),
            }
        }
    }

    fn list(&mut self, depth: usize) -> Option<Literal> {
        let close = if self.bump()? == '[' { ']' } else { ')' };
        let mut items = Vec::new();
        loop {
            self.skip_ws();
            if self.peek()? == close {
                self.pos += 1;
                return Some(Literal::List(items));
            }
            items.push(self.value(depth + 1)?);
            self.skip_ws();
            match self.bump()? {
                ',' => continue,
                c if c == close => return Some(Literal::List(items)),
                _ => return None,
            }
        }
    }

    fn key(&mut self) -> Option<String> {
        self.skip_ws();
        match self.peek()? {
            '\'' | '"' => self.string(),
            c if c.is_alphabetic() || c == '_' => Some(self.word()),
            _ => None,
        }
    }

    fn object(&mut self, depth: usize) -> Option<Literal> {
        self.expect('{')?;
        let mut fields = Vec::new();
        loop {
            self.skip_ws();
            if self.peek()? == '}' {
                self.pos += 1;
                return Some(Literal::Object(fields));
            }
            let k = self.key()?;
            self.expect(':')?;
            let v = self.value(depth + 1)?;
            fields.push((k, v));
            self.skip_ws();
            match self.bump()? {
                ',' => continue,
                '}' => return Some(Literal::Object(fields)),
                _ => return None,
            }
        }
    }
}

/// Tries to read one object literal starting at byte offset `start` (which
/// must hold `{`). Returns the object and the byte offset just past it.
pub fn parse_object_at(text: &str, start: usize) -> Option<(Literal, usize)> {
    let mut r = Reader {
        chars: text[start..]
            .char_indices()
            .map(|(b, c)| (b + start, c))
            .collect(),
        pos: 0,
        src: text,
    };
    let obj = r.object(0)?;
    Some((obj, r.byte_offset()))
}

/// Every object literal found in `text`, scanning `{` positions left to right.
pub fn objects_in(text: &str) -> impl Iterator<Item = (usize, Literal, usize)> + '_ {
    text.char_indices()
        .filter(|&(_, c)| c == '{')
        .filter_map(move |(b, _)| parse_object_at(text, b).map(|(o, end)| (b, o, end)))
}
