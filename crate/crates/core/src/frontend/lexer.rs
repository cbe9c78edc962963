use super::{FrontendError, Pos};
use num_bigint::BigInt;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Tok {
    Ident(String),
    /// `b2.0` style name: only construct identifiers are written this way.
    Dotted(String, u32),
    Int(BigInt),
    Semi,
    LParen,
    RParen,
    LBrack,
    RBrack,
    LBrace,
    RBrace,
    Assign,
    AddAssign,
    SubAssign,
    Plus,
    Minus,
    EqEq,
    Gt,
    Lt,
    Not,
    And,
    /// `⟨5,2,0⟩`: an identifier stack, head first. Only annotated sources
    /// may contain these.
    Stack(Vec<u64>),
    Eof,
}

impl Tok {
    pub fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Dotted(b, v) => format!("`{b}.{v}`"),
            Tok::Int(n) => format!("`{n}`"),
            Tok::Semi => "`;`".into(),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::LBrack => "`[`".into(),
            Tok::RBrack => "`]`".into(),
            Tok::LBrace => "`{`".into(),
            Tok::RBrace => "`}`".into(),
            Tok::Assign => "`=`".into(),
            Tok::AddAssign => "`+=`".into(),
            Tok::SubAssign => "`-=`".into(),
            Tok::Plus => "`+`".into(),
            Tok::Minus => "`-`".into(),
            Tok::EqEq => "`==`".into(),
            Tok::Gt => "`>`".into(),
            Tok::Lt => "`<`".into(),
            Tok::Not => "negation".into(),
            Tok::And => "conjunction".into(),
            Tok::Stack(_) => "an identifier stack".into(),
            Tok::Eof => "end of input".into(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Token {
    pub tok: Tok,
    pub pos: Pos,
}

pub fn lex(src: &str) -> Result<Vec<Token>, FrontendError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1u32, 1u32);

    macro_rules! bump {
        () => {{
            if chars[i] == '\n' {
                line += 1;
                col = 1;
            } else {
                col += 1;
            }
            i += 1;
        }};
    }

    while i < chars.len() {
        let c = chars[i];
        let pos = Pos { line, col };
        if c.is_whitespace() {
            bump!();
            continue;
        }
        if c == '/' && chars.get(i + 1) == Some(&'/') {
            while i < chars.len() && chars[i] != '\n' {
                bump!();
            }
            continue;
        }
        if c.is_ascii_alphabetic() {
            let mut s = String::new();
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                s.push(chars[i]);
                bump!();
            }
            if i + 1 < chars.len() && chars[i] == '.' && chars[i + 1].is_ascii_digit() {
                bump!();
                let mut v = String::new();
                while i < chars.len() && chars[i].is_ascii_digit() {
                    v.push(chars[i]);
                    bump!();
                }
                let version = v.parse::<u32>().map_err(|_| FrontendError::new(pos, "version number too large"))?;
                out.push(Token { tok: Tok::Dotted(s, version), pos });
            } else {
                let tok = match s.as_str() {
                    "not" => Tok::Not,
                    "and" => Tok::And,
                    _ => Tok::Ident(s),
                };
                out.push(Token { tok, pos });
            }
            continue;
        }
        if c.is_ascii_digit() {
            let mut s = String::new();
            while i < chars.len() && chars[i].is_ascii_digit() {
                s.push(chars[i]);
                bump!();
            }
            out.push(Token { tok: Tok::Int(s.parse().expect("digits")), pos });
            continue;
        }
        if c == '⟨' {
            bump!();
            let mut text = String::new();
            while i < chars.len() && chars[i] != '⟩' {
                text.push(chars[i]);
                bump!();
            }
            if i == chars.len() {
                return Err(FrontendError::new(pos, "unclosed identifier stack"));
            }
            bump!();
            let ids = text
                .split(',')
                .map(str::trim)
                .filter(|t| !t.is_empty())
                .map(|t| t.parse::<u64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|_| FrontendError::new(pos, "identifier stacks hold comma-separated numbers"))?;
            out.push(Token { tok: Tok::Stack(ids), pos });
            continue;
        }
        let next = chars.get(i + 1).copied();
        let (tok, width) = match (c, next) {
            ('+', Some('=')) => (Tok::AddAssign, 2),
            ('-', Some('=')) => (Tok::SubAssign, 2),
            ('=', Some('=')) => (Tok::EqEq, 2),
            ('&', Some('&')) => (Tok::And, 2),
            (';', _) => (Tok::Semi, 1),
            ('(', _) => (Tok::LParen, 1),
            (')', _) => (Tok::RParen, 1),
            ('[', _) => (Tok::LBrack, 1),
            (']', _) => (Tok::RBrack, 1),
            ('{', _) => (Tok::LBrace, 1),
            ('}', _) => (Tok::RBrace, 1),
            ('=', _) => (Tok::Assign, 1),
            ('+', _) => (Tok::Plus, 1),
            ('-', _) => (Tok::Minus, 1),
            ('>', _) => (Tok::Gt, 1),
            ('<', _) => (Tok::Lt, 1),
            ('!', _) | ('¬', _) => (Tok::Not, 1),
            ('∧', _) => (Tok::And, 1),
            _ => return Err(FrontendError::new(pos, format!("unexpected character `{c}`"))),
        };
        for _ in 0..width {
            bump!();
        }
        out.push(Token { tok, pos });
    }
    out.push(Token { tok: Tok::Eof, pos: Pos { line, col } });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<Tok> {
        lex(s).unwrap().into_iter().map(|t| t.tok).collect()
    }

    #[test]
    fn dotted_and_symbols() {
        assert_eq!(
            toks("while w1.0 (x < 4) // loop\n"),
            vec![
                Tok::Ident("while".into()),
                Tok::Dotted("w1".into(), 0),
                Tok::LParen,
                Tok::Ident("x".into()),
                Tok::Lt,
                Tok::Int(4.into()),
                Tok::RParen,
                Tok::Eof
            ]
        );
        assert_eq!(toks("a -= 1")[1], Tok::SubAssign);
        assert_eq!(toks("!x && y")[0], Tok::Not);
        assert_eq!(toks("p and q")[1], Tok::And);
    }

    #[test]
    fn positions() {
        let t = lex("x = 1;\n  y = 2").unwrap();
        assert_eq!(t[4].pos, Pos { line: 2, col: 3 });
        let err = lex("x = $").unwrap_err();
        assert_eq!(err.pos, Some(Pos { line: 1, col: 5 }));
    }
}
