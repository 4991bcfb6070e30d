//! Tokenizer for the Verilog subset.

use super::{DiagCode, Diagnostic};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Tok {
    Ident(String),
    /// Keywords are lexed as dedicated tokens.
    Module,
    Endmodule,
    Input,
    Output,
    Reg,
    Wire,
    Always,
    Posedge,
    Begin,
    End,
    If,
    Else,
    /// Sized literal such as `1'b0`; kept raw so width errors can name it.
    Number(String),
    LParen,
    RParen,
    LBracket,
    RBracket,
    At,
    Star,
    Semi,
    Comma,
    Colon,
    Assign,    // =
    NbAssign,  // <=
    EqEq,      // ==
    NotEq,     // !=
    Amp,       // &
    Pipe,      // |
    Caret,     // ^
    Tilde,     // ~
    Eof,
}

impl Tok {
    pub fn describe(&self) -> String {
        match self {
            Tok::Ident(name) => format!("identifier `{name}`"),
            Tok::Number(text) => format!("number `{text}`"),
            Tok::Eof => "end of input".to_string(),
            other => format!("`{}`", other.text()),
        }
    }

    fn text(&self) -> &'static str {
        match self {
            Tok::Module => "module",
            Tok::Endmodule => "endmodule",
            Tok::Input => "input",
            Tok::Output => "output",
            Tok::Reg => "reg",
            Tok::Wire => "wire",
            Tok::Always => "always",
            Tok::Posedge => "posedge",
            Tok::Begin => "begin",
            Tok::End => "end",
            Tok::If => "if",
            Tok::Else => "else",
            Tok::LParen => "(",
            Tok::RParen => ")",
            Tok::LBracket => "[",
            Tok::RBracket => "]",
            Tok::At => "@",
            Tok::Star => "*",
            Tok::Semi => ";",
            Tok::Comma => ",",
            Tok::Colon => ":",
            Tok::Assign => "=",
            Tok::NbAssign => "<=",
            Tok::EqEq => "==",
            Tok::NotEq => "!=",
            Tok::Amp => "&",
            Tok::Pipe => "|",
            Tok::Caret => "^",
            Tok::Tilde => "~",
            Tok::Ident(_) | Tok::Number(_) | Tok::Eof => unreachable!(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Token {
    pub tok: Tok,
    pub line: u32,
    pub col: u32,
}

pub fn tokenize(source: &str) -> Result<Vec<Token>, Diagnostic> {
    let mut tokens = Vec::new();
    let mut chars = source.chars().peekable();
    let mut line: u32 = 1;
    let mut col: u32 = 1;

    macro_rules! push {
        ($tok:expr, $line:expr, $col:expr) => {
            tokens.push(Token { tok: $tok, line: $line, col: $col })
        };
    }

    while let Some(&c) = chars.peek() {
        let (tline, tcol) = (line, col);
        match c {
            '\n' => {
                chars.next();
                line += 1;
                col = 1;
            }
            c if c.is_whitespace() => {
                chars.next();
                col += 1;
            }
            '/' => {
                chars.next();
                col += 1;
                if chars.peek() == Some(&'/') {
                    while let Some(&c) = chars.peek() {
                        if c == '\n' {
                            break;
                        }
                        chars.next();
                        col += 1;
                    }
                } else {
                    return Err(Diagnostic::new(
                        DiagCode::UnsupportedOperator,
                        tline,
                        tcol,
                        "operator `/` is not supported; only `&`, `|`, `^`, `~`".to_string(),
                    ));
                }
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let mut word = String::new();
                while let Some(&c) = chars.peek() {
                    if c.is_ascii_alphanumeric() || c == '_' {
                        word.push(c);
                        chars.next();
                        col += 1;
                    } else {
                        break;
                    }
                }
                let tok = match word.as_str() {
                    "module" => Tok::Module,
                    "endmodule" => Tok::Endmodule,
                    "input" => Tok::Input,
                    "output" => Tok::Output,
                    "reg" => Tok::Reg,
                    "wire" => Tok::Wire,
                    "always" => Tok::Always,
                    "posedge" => Tok::Posedge,
                    "begin" => Tok::Begin,
                    "end" => Tok::End,
                    "if" => Tok::If,
                    "else" => Tok::Else,
                    _ => Tok::Ident(word),
                };
                push!(tok, tline, tcol);
            }
            c if c.is_ascii_digit() => {
                // Sized literals: digits, optional 'b/'d/'h base and value.
                let mut text = String::new();
                while let Some(&c) = chars.peek() {
                    if c.is_ascii_alphanumeric() || c == '\'' {
                        text.push(c);
                        chars.next();
                        col += 1;
                    } else {
                        break;
                    }
                }
                push!(Tok::Number(text), tline, tcol);
            }
            _ => {
                chars.next();
                col += 1;
                let tok = match c {
                    '(' => Tok::LParen,
                    ')' => Tok::RParen,
                    '[' => Tok::LBracket,
                    ']' => Tok::RBracket,
                    '@' => Tok::At,
                    '*' => Tok::Star,
                    ';' => Tok::Semi,
                    ':' => Tok::Colon,
                    ',' => Tok::Comma,
                    '&' => Tok::Amp,
                    '|' => Tok::Pipe,
                    '^' => Tok::Caret,
                    '~' => Tok::Tilde,
                    '=' => {
                        if chars.peek() == Some(&'=') {
                            chars.next();
                            col += 1;
                            Tok::EqEq
                        } else {
                            Tok::Assign
                        }
                    }
                    '<' => {
                        if chars.peek() == Some(&'=') {
                            chars.next();
                            col += 1;
                            Tok::NbAssign
                        } else {
                            return Err(Diagnostic::new(
                                DiagCode::UnsupportedOperator,
                                tline,
                                tcol,
                                "operator `<` is not supported".to_string(),
                            ));
                        }
                    }
                    '!' => {
                        if chars.peek() == Some(&'=') {
                            chars.next();
                            col += 1;
                            Tok::NotEq
                        } else {
                            return Err(Diagnostic::new(
                                DiagCode::UnsupportedOperator,
                                tline,
                                tcol,
                                "operator `!` is not supported; use `~`".to_string(),
                            ));
                        }
                    }
                    op @ ('+' | '-' | '%' | '?') => {
                        return Err(Diagnostic::new(
                            DiagCode::UnsupportedOperator,
                            tline,
                            tcol,
                            format!("operator `{op}` is not supported; only `&`, `|`, `^`, `~`"),
                        ));
                    }
                    other => {
                        return Err(Diagnostic::new(
                            DiagCode::Syntax,
                            tline,
                            tcol,
                            format!("unexpected character `{other}`"),
                        ));
                    }
                };
                push!(tok, tline, tcol);
            }
        }
    }
    tokens.push(Token { tok: Tok::Eof, line, col });
    Ok(tokens)
}
