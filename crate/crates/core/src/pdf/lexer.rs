use super::{Dictionary, ObjectId, PdfValue};

/// Nesting limit for arrays and dictionaries.
const MAX_DEPTH: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum LexError {
    Eof,
    Unexpected(usize),
    TooDeep,
}

pub(crate) fn is_whitespace(b: u8) -> bool {
    matches!(b, b'\0' | b'\t' | b'\n' | b'\x0c' | b'\r' | b' ')
}

pub(crate) fn is_delimiter(b: u8) -> bool {
    matches!(
        b,
        b'(' | b')' | b'<' | b'>' | b'[' | b']' | b'{' | b'}' | b'/' | b'%'
    )
}

fn is_regular(b: u8) -> bool {
    !is_whitespace(b) && !is_delimiter(b)
}

pub(crate) struct Lexer<'a> {
    data: &'a [u8],
    pub(crate) pos: usize,
}

impl<'a> Lexer<'a> {
    pub(crate) fn new(data: &'a [u8], pos: usize) -> Self {
        Lexer {
            data,
            pos: pos.min(data.len()),
        }
    }

    fn peek(&self) -> Option<u8> {
        self.data.get(self.pos).copied()
    }

    pub(crate) fn skip_whitespace(&mut self) {
        while let Some(b) = self.peek() {
            if is_whitespace(b) {
                self.pos += 1;
            } else if b == b'%' {
                while let Some(c) = self.peek() {
                    if c == b'\n' || c == b'\r' {
                        break;
                    }
                    self.pos += 1;
                }
            } else {
                break;
            }
        }
    }

    /// Consumes `keyword` if it appears next as a complete token.
    pub(crate) fn eat_keyword(&mut self, keyword: &[u8]) -> bool {
        self.skip_whitespace();
        let end = self.pos + keyword.len();
        if self.data.get(self.pos..end) == Some(keyword)
            && self.data.get(end).map(|&b| !is_regular(b)).unwrap_or(true)
        {
            self.pos = end;
            true
        } else {
            false
        }
    }

    pub(crate) fn read_keyword(&mut self) -> &'a [u8] {
        self.skip_whitespace();
        let start = self.pos;
        while self.peek().map(is_regular).unwrap_or(false) {
            self.pos += 1;
        }
        &self.data[start..self.pos]
    }

    /// Reads an unsigned decimal integer token.
    pub(crate) fn read_unsigned(&mut self) -> Option<u64> {
        self.skip_whitespace();
        let start = self.pos;
        let mut value: u64 = 0;
        while let Some(b) = self.peek().filter(u8::is_ascii_digit) {
            value = value.checked_mul(10)?.checked_add(u64::from(b - b'0'))?;
            self.pos += 1;
        }
        if self.pos == start || self.peek().map(is_regular).unwrap_or(false) {
            self.pos = start;
            return None;
        }
        Some(value)
    }

    pub(crate) fn parse_value(&mut self) -> Result<PdfValue, LexError> {
        self.parse_value_at_depth(0)
    }

    fn parse_value_at_depth(&mut self, depth: usize) -> Result<PdfValue, LexError> {
        if depth > MAX_DEPTH {
            return Err(LexError::TooDeep);
        }
        self.skip_whitespace();
        let b = self.peek().ok_or(LexError::Eof)?;
        match b {
            b'/' => Ok(PdfValue::Name(self.parse_name())),
            b'(' => Ok(PdfValue::String(self.parse_literal_string())),
            b'<' if self.data.get(self.pos + 1) == Some(&b'<') => {
                self.pos += 2;
                self.parse_dictionary_body(depth).map(PdfValue::Dictionary)
            }
            b'<' => self.parse_hex_string().map(PdfValue::String),
            b'[' => {
                self.pos += 1;
                let mut items = Vec::new();
                loop {
                    self.skip_whitespace();
                    match self.peek() {
                        None => return Err(LexError::Eof),
                        Some(b']') => {
                            self.pos += 1;
                            return Ok(PdfValue::Array(items));
                        }
                        Some(_) => items.push(self.parse_value_at_depth(depth + 1)?),
                    }
                }
            }
            b'+' | b'-' | b'.' | b'0'..=b'9' => self.parse_number_or_reference(),
            _ if is_regular(b) => {
                let start = self.pos;
                match self.read_keyword() {
                    b"true" => Ok(PdfValue::Boolean(true)),
                    b"false" => Ok(PdfValue::Boolean(false)),
                    b"null" => Ok(PdfValue::Null),
                    _ => {
                        self.pos = start;
                        Err(LexError::Unexpected(start))
                    }
                }
            }
            _ => Err(LexError::Unexpected(self.pos)),
        }
    }

    /// Parses dictionary entries after the opening `<<`.
    pub(crate) fn parse_dictionary_body(&mut self, depth: usize) -> Result<Dictionary, LexError> {
        let mut dict = Dictionary::new();
        loop {
            self.skip_whitespace();
            match self.peek() {
                None => return Err(LexError::Eof),
                Some(b'>') if self.data.get(self.pos + 1) == Some(&b'>') => {
                    self.pos += 2;
                    return Ok(dict);
                }
                Some(b'/') => {
                    let key = self.parse_name();
                    self.skip_whitespace();
                    if self.data.get(self.pos..self.pos + 2) == Some(b">>") {
                        dict.insert(key, PdfValue::Null);
                        continue;
                    }
                    let value = self.parse_value_at_depth(depth + 1)?;
                    dict.insert(key, value);
                }
                Some(_) => return Err(LexError::Unexpected(self.pos)),
            }
        }
    }

    fn parse_name(&mut self) -> String {
        debug_assert_eq!(self.peek(), Some(b'/'));
        self.pos += 1;
        let mut bytes = Vec::new();
        while let Some(b) = self.peek().filter(|&b| is_regular(b)) {
            if b == b'#' {
                let hex = self
                    .data
                    .get(self.pos + 1..self.pos + 3)
                    .and_then(|h| std::str::from_utf8(h).ok())
                    .and_then(|h| u8::from_str_radix(h, 16).ok());
                if let Some(decoded) = hex {
                    bytes.push(decoded);
                    self.pos += 3;
                    continue;
                }
            }
            bytes.push(b);
            self.pos += 1;
        }
        String::from_utf8(bytes)
            .unwrap_or_else(|e| e.into_bytes().iter().map(|&b| b as char).collect())
    }

    fn parse_literal_string(&mut self) -> Vec<u8> {
        debug_assert_eq!(self.peek(), Some(b'('));
        self.pos += 1;
        let mut out = Vec::new();
        let mut nesting = 1usize;
        while let Some(b) = self.peek() {
            self.pos += 1;
            match b {
                b'\\' => {
                    let Some(next) = self.peek() else { break };
                    self.pos += 1;
                    match next {
                        b'n' => out.push(b'\n'),
                        b'r' => out.push(b'\r'),
                        b't' => out.push(b'\t'),
                        b'b' => out.push(0x08),
                        b'f' => out.push(0x0c),
                        b'\r' => {
                            if self.peek() == Some(b'\n') {
                                self.pos += 1;
                            }
                        }
                        b'\n' => {}
                        b'0'..=b'7' => {
                            let mut value = u32::from(next - b'0');
                            for _ in 0..2 {
                                match self.peek() {
                                    Some(d @ b'0'..=b'7') => {
                                        value = value * 8 + u32::from(d - b'0');
                                        self.pos += 1;
                                    }
                                    _ => break,
                                }
                            }
                            out.push((value & 0xff) as u8);
                        }
                        other => out.push(other),
                    }
                }
                b'(' => {
                    nesting += 1;
                    out.push(b);
                }
                b')' => {
                    nesting -= 1;
                    if nesting == 0 {
                        return out;
                    }
                    out.push(b);
                }
                _ => out.push(b),
            }
        }
        out
    }

    fn parse_hex_string(&mut self) -> Result<Vec<u8>, LexError> {
        debug_assert_eq!(self.peek(), Some(b'<'));
        let start = self.pos;
        self.pos += 1;
        let mut out = Vec::new();
        let mut high: Option<u8> = None;
        while let Some(b) = self.peek() {
            self.pos += 1;
            if b == b'>' {
                if let Some(h) = high {
                    out.push(h << 4);
                }
                return Ok(out);
            }
            if is_whitespace(b) {
                continue;
            }
            let nibble = match b {
                b'0'..=b'9' => b - b'0',
                b'a'..=b'f' => b - b'a' + 10,
                b'A'..=b'F' => b - b'A' + 10,
                _ => return Err(LexError::Unexpected(self.pos - 1)),
            };
            match high.take() {
                Some(h) => out.push((h << 4) | nibble),
                None => high = Some(nibble),
            }
        }
        Err(LexError::Unexpected(start))
    }

    fn parse_number_or_reference(&mut self) -> Result<PdfValue, LexError> {
        let start = self.pos;
        let token = self.read_keyword();
        let text = std::str::from_utf8(token).map_err(|_| LexError::Unexpected(start))?;
        let is_integer = !text.contains('.');
        if is_integer {
            let Ok(value) = text.parse::<i64>() else {
                // Out-of-range integers degrade to reals; junk is an error.
                return text
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .map(PdfValue::Real)
                    .ok_or(LexError::Unexpected(start));
            };
            if value >= 0 && !text.starts_with(['+', '-']) {
                let save = self.pos;
                if let Some(generation) = self.read_unsigned() {
                    if self.eat_keyword(b"R") {
                        if let (Ok(number), Ok(generation)) =
                            (u32::try_from(value), u16::try_from(generation))
                        {
                            return Ok(PdfValue::Reference(ObjectId::new(number, generation)));
                        }
                    }
                }
                self.pos = save;
            }
            return Ok(PdfValue::Integer(value));
        }
        parse_real(text)
            .map(PdfValue::Real)
            .ok_or(LexError::Unexpected(start))
    }
}

fn parse_real(text: &str) -> Option<f64> {
    // Producer quirks such as "1.2.3" or "--5": keep the longest prefix that
    // still reads as a number.
    let text = text.strip_prefix("--").map_or(text, |t| t);
    (1..=text.len())
        .rev()
        .filter(|&end| text.is_char_boundary(end))
        .find_map(|end| text[..end].parse::<f64>().ok())
        .filter(|v| v.is_finite())
}
