//! Lossless lexer for Java, Python and C sources.
//!
//! Concatenating the text of every token reproduces the input exactly, which
//! is what lets the metamorphic renamer rewrite single tokens without
//! touching layout, strings or comments.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Language;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TokenKind {
    Ident,
    Keyword,
    Number,
    Str,
    Char,
    Comment,
    /// A C preprocessor line, continuation lines included.
    Preprocessor,
    Whitespace,
    Punct,
}

impl TokenKind {
    /// Whitespace, comments and preprocessor lines carry no program tokens.
    pub fn is_trivia(self) -> bool {
        matches!(
            self,
            TokenKind::Whitespace | TokenKind::Comment | TokenKind::Preprocessor
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Token<'a> {
    pub kind: TokenKind,
    pub text: &'a str,
    /// Byte offset into the source.
    pub start: usize,
}

impl Token<'_> {
    pub fn end(&self) -> usize {
        self.start + self.text.len()
    }

    pub fn is(&self, text: &str) -> bool {
        self.text == text
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LexError {
    #[error("UNLEXABLE_SOURCE: unterminated string literal starting on line {line}")]
    UnterminatedString { line: usize },
    #[error("UNLEXABLE_SOURCE: unterminated character literal starting on line {line}")]
    UnterminatedChar { line: usize },
    #[error("UNLEXABLE_SOURCE: unterminated block comment starting on line {line}")]
    UnterminatedComment { line: usize },
}

const JAVA_KEYWORDS: &[&str] = &[
    "abstract", "assert", "boolean", "break", "byte", "case", "catch", "char", "class", "const",
    "continue", "default", "do", "double", "else", "enum", "extends", "final", "finally", "float",
    "for", "goto", "if", "implements", "import", "instanceof", "int", "interface", "long", "native",
    "new", "package", "private", "protected", "public", "return", "short", "static", "strictfp",
    "super", "switch", "synchronized", "this", "throw", "throws", "transient", "try", "void",
    "volatile", "while", "true", "false", "null", "var", "record", "yield", "sealed", "permits",
    "_",
];

const JAVA_BUILTINS: &[&str] = &[
    "String", "Object", "System", "Integer", "Long", "Double", "Float", "Boolean", "Character",
    "Byte", "Short", "Math", "Number", "Void", "Class", "Enum", "Record", "Exception",
    "RuntimeException", "Error", "Throwable", "IllegalArgumentException",
    "IllegalStateException", "NullPointerException", "Thread", "Runnable", "Override",
    "Deprecated", "SuppressWarnings", "FunctionalInterface", "List", "Map", "Set", "ArrayList",
    "HashMap", "HashSet", "LinkedList", "Arrays", "Collections", "Iterable", "Iterator",
    "Comparable", "StringBuilder", "Optional", "Objects", "java", "javax", "lang", "util", "io",
    "out", "err", "in", "println", "print", "printf", "length", "size", "equals", "hashCode",
    "toString", "main", "get", "set", "add", "put", "clone", "finalize", "getClass",
];

const PYTHON_KEYWORDS: &[&str] = &[
    "False", "None", "True", "and", "as", "assert", "async", "await", "break", "class",
    "continue", "def", "del", "elif", "else", "except", "finally", "for", "from", "global", "if",
    "import", "in", "is", "lambda", "nonlocal", "not", "or", "pass", "raise", "return", "try",
    "while", "with", "yield", "match", "case", "type", "_",
];

const PYTHON_BUILTINS: &[&str] = &[
    "self", "cls", "print", "len", "range", "str", "int", "float", "bool", "bytes", "list",
    "dict", "set", "frozenset", "tuple", "object", "super", "isinstance", "issubclass",
    "getattr", "setattr", "hasattr", "delattr", "open", "input", "map", "filter", "zip",
    "enumerate", "sum", "min", "max", "abs", "sorted", "reversed", "iter", "next", "repr", "hash",
    "id", "format", "round", "divmod", "pow", "any", "all", "chr", "ord", "vars", "dir", "callable",
    "property", "staticmethod", "classmethod", "Exception", "BaseException", "ValueError",
    "TypeError", "KeyError", "IndexError", "AttributeError", "RuntimeError", "NameError",
    "NotImplementedError", "StopIteration", "ZeroDivisionError", "AssertionError",
    "NotImplemented", "Ellipsis", "main", "os", "sys", "math", "typing", "Optional", "List",
    "Dict", "Any",
];

const C_KEYWORDS: &[&str] = &[
    "auto", "break", "case", "char", "const", "continue", "default", "do", "double", "else",
    "enum", "extern", "float", "for", "goto", "if", "inline", "int", "long", "register",
    "restrict", "return", "short", "signed", "sizeof", "static", "struct", "switch", "typedef",
    "union", "unsigned", "void", "volatile", "while", "_Bool", "_Complex", "_Imaginary",
    "_Alignas", "_Alignof", "_Atomic", "_Generic", "_Noreturn", "_Static_assert",
    "_Thread_local", "bool", "true", "false", "NULL",
];

const C_BUILTINS: &[&str] = &[
    "main", "printf", "scanf", "puts", "putchar", "getchar", "fprintf", "sprintf", "snprintf",
    "fputs", "fgets", "fopen", "fclose", "malloc", "calloc", "realloc", "free", "exit", "abort",
    "assert", "strlen", "strcpy", "strncpy", "strcmp", "strncmp", "strcat", "memcpy", "memset",
    "memmove", "stdout", "stderr", "stdin", "size_t", "ptrdiff_t", "FILE", "EOF", "errno",
    "int8_t", "int16_t", "int32_t", "int64_t", "uint8_t", "uint16_t", "uint32_t", "uint64_t",
];

pub fn keywords(lang: Language) -> &'static [&'static str] {
    match lang {
        Language::Java => JAVA_KEYWORDS,
        Language::Python => PYTHON_KEYWORDS,
        Language::C => C_KEYWORDS,
    }
}

/// Library and entry-point names that are never treated as user-defined.
pub fn builtins(lang: Language) -> &'static [&'static str] {
    match lang {
        Language::Java => JAVA_BUILTINS,
        Language::Python => PYTHON_BUILTINS,
        Language::C => C_BUILTINS,
    }
}

pub fn is_keyword(lang: Language, word: &str) -> bool {
    keywords(lang).contains(&word)
}

/// Keyword, builtin, or (Python) dunder name.
pub fn is_reserved(lang: Language, word: &str) -> bool {
    is_keyword(lang, word)
        || builtins(lang).contains(&word)
        || (lang == Language::Python && word.starts_with("__") && word.ends_with("__"))
}

pub fn is_valid_identifier(lang: Language, word: &str) -> bool {
    let mut chars = word.chars();
    let Some(first) = chars.next() else {
        return false;
    };
    is_ident_start(lang, first) && chars.all(|c| is_ident_continue(lang, c)) && !is_keyword(lang, word)
}

fn is_ident_start(lang: Language, c: char) -> bool {
    c == '_' || c.is_alphabetic() || (lang == Language::Java && c == '$')
}

fn is_ident_continue(lang: Language, c: char) -> bool {
    c == '_' || c.is_alphanumeric() || (lang == Language::Java && c == '$')
}

const OPERATORS: &[&str] = &[
    ">>>=", "<<=", ">>=", ">>>", "...", "**=", "//=", "->", "::", "++", "--", "&&", "||", "==",
    "!=", "<=", ">=", "+=", "-=", "*=", "/=", "%=", "&=", "|=", "^=", "<<", ">>", "**", "//",
    ":=",
];

const PY_STRING_PREFIXES: &[&str] = &["r", "b", "u", "f", "rb", "br", "fr", "rf"];

struct Lexer<'a> {
    lang: Language,
    src: &'a str,
    pos: usize,
    out: Vec<Token<'a>>,
}

pub fn tokenize(lang: Language, src: &str) -> Result<Vec<Token<'_>>, LexError> {
    let mut lx = Lexer {
        lang,
        src,
        pos: 0,
        out: Vec::new(),
    };
    lx.run()?;
    Ok(lx.out)
}

/// Non-trivia tokens only.
pub fn significant<'a>(tokens: &[Token<'a>]) -> Vec<Token<'a>> {
    tokens.iter().copied().filter(|t| !t.kind.is_trivia()).collect()
}

impl<'a> Lexer<'a> {
    fn rest(&self) -> &'a str {
        &self.src[self.pos..]
    }

    fn peek(&self) -> Option<char> {
        self.rest().chars().next()
    }

    fn peek_at(&self, n: usize) -> Option<char> {
        self.rest().chars().nth(n)
    }

    fn line_of(&self, offset: usize) -> usize {
        self.src[..offset].matches('\n').count() + 1
    }

    fn emit(&mut self, kind: TokenKind, start: usize) {
        self.out.push(Token {
            kind,
            text: &self.src[start..self.pos],
            start,
        });
    }

    fn at_line_start(&self) -> bool {
        self.src[..self.pos]
            .rsplit('\n')
            .next()
            .map_or(true, |l| l.chars().all(char::is_whitespace))
    }

    fn run(&mut self) -> Result<(), LexError> {
        while let Some(c) = self.peek() {
            let start = self.pos;
            let c_like = self.lang != Language::Python;
            if c.is_whitespace() {
                while self.peek().is_some_and(char::is_whitespace) {
                    self.bump();
                }
                self.emit(TokenKind::Whitespace, start);
            } else if c_like && self.rest().starts_with("//") {
                self.take_line();
                self.emit(TokenKind::Comment, start);
            } else if c_like && self.rest().starts_with("/*") {
                match self.rest()[2..].find("*/") {
                    Some(end) => self.pos += 2 + end + 2,
                    None => {
                        return Err(LexError::UnterminatedComment {
                            line: self.line_of(start),
                        })
                    }
                }
                self.emit(TokenKind::Comment, start);
            } else if c == '#' && self.lang == Language::Python {
                self.take_line();
                self.emit(TokenKind::Comment, start);
            } else if c == '#' && self.lang == Language::C && self.at_line_start() {
                self.take_directive();
                self.emit(TokenKind::Preprocessor, start);
            } else if c == '"' || (c == '\'' && self.lang == Language::Python) {
                self.string(start)?;
                self.emit(TokenKind::Str, start);
            } else if c == '\'' {
                self.char_literal(start)?;
                self.emit(TokenKind::Char, start);
            } else if c.is_ascii_digit() || (c == '.' && self.peek_at(1).is_some_and(|d| d.is_ascii_digit())) {
                self.number();
                self.emit(TokenKind::Number, start);
            } else if is_ident_start(self.lang, c) {
                while self.peek().is_some_and(|c| is_ident_continue(self.lang, c)) {
                    self.bump();
                }
                let word = &self.src[start..self.pos];
                if self.lang == Language::Python
                    && matches!(self.peek(), Some('"' | '\''))
                    && PY_STRING_PREFIXES.contains(&word.to_ascii_lowercase().as_str())
                {
                    self.string(start)?;
                    self.emit(TokenKind::Str, start);
                } else if is_keyword(self.lang, word) {
                    self.emit(TokenKind::Keyword, start);
                } else {
                    self.emit(TokenKind::Ident, start);
                }
            } else {
                match OPERATORS.iter().find(|op| self.rest().starts_with(**op)) {
                    Some(op) => self.pos += op.len(),
                    None => self.bump(),
                }
                self.emit(TokenKind::Punct, start);
            }
        }
        Ok(())
    }

    fn bump(&mut self) {
        if let Some(c) = self.peek() {
            self.pos += c.len_utf8();
        }
    }

    fn take_line(&mut self) {
        let len = self.rest().find('\n').unwrap_or(self.rest().len());
        self.pos += len;
    }

    fn take_directive(&mut self) {
        loop {
            let line_len = self.rest().find('\n').unwrap_or(self.rest().len());
            let line = &self.rest()[..line_len];
            let continued = line.trim_end_matches('\r').ends_with('\\') && line_len < self.rest().len();
            self.pos += line_len;
            if !continued {
                break;
            }
            self.pos += 1;
        }
    }

    /// Consumes a string literal whose optional prefix starts at `start`;
    /// `self.pos` is on the opening quote.
    fn string(&mut self, start: usize) -> Result<(), LexError> {
        let quote = self.peek().expect("on quote");
        let triple: String = std::iter::repeat(quote).take(3).collect();
        let allows_triple = self.lang == Language::Python || (self.lang == Language::Java && quote == '"');
        if allows_triple && self.rest().starts_with(&triple) {
            self.pos += 3;
            loop {
                if self.rest().starts_with(&triple) {
                    self.pos += 3;
                    return Ok(());
                }
                match self.peek() {
                    None => {
                        return Err(LexError::UnterminatedString {
                            line: self.line_of(start),
                        })
                    }
                    Some('\\') => {
                        self.bump();
                        self.bump();
                    }
                    Some(_) => self.bump(),
                }
            }
        }
        self.bump();
        loop {
            match self.peek() {
                None | Some('\n') => {
                    return Err(LexError::UnterminatedString {
                        line: self.line_of(start),
                    })
                }
                Some('\\') => {
                    self.bump();
                    self.bump();
                }
                Some(c) if c == quote => {
                    self.bump();
                    return Ok(());
                }
                Some(_) => self.bump(),
            }
        }
    }

    fn char_literal(&mut self, start: usize) -> Result<(), LexError> {
        self.bump();
        loop {
            match self.peek() {
                None | Some('\n') => {
                    return Err(LexError::UnterminatedChar {
                        line: self.line_of(start),
                    })
                }
                Some('\\') => {
                    self.bump();
                    self.bump();
                }
                Some('\'') => {
                    self.bump();
                    return Ok(());
                }
                Some(_) => self.bump(),
            }
        }
    }

    fn number(&mut self) {
        let hex = self.rest().starts_with("0x") || self.rest().starts_with("0X");
        let mut prev = '\0';
        while let Some(c) = self.peek() {
            let exponent_sign = (c == '+' || c == '-')
                && (matches!(prev, 'p' | 'P') || (!hex && matches!(prev, 'e' | 'E')));
            if c.is_ascii_alphanumeric() || c == '_' || c == '.' || exponent_sign {
                if c == '.' && self.peek_at(1) == Some('.') {
                    break;
                }
                prev = c;
                self.bump();
            } else {
                break;
            }
        }
    }
}

/// Integer value of a plain decimal literal (`37`, `37L`, `37u`), with its suffix.
pub fn decimal_literal(text: &str) -> Option<(u64, &str)> {
    let digits_end = text
        .find(|c: char| !c.is_ascii_digit())
        .unwrap_or(text.len());
    let (digits, suffix) = text.split_at(digits_end);
    if digits.is_empty() || (digits.len() > 1 && digits.starts_with('0')) {
        return None;
    }
    if !suffix.chars().all(|c| matches!(c, 'l' | 'L' | 'u' | 'U')) {
        return None;
    }
    digits.parse().ok().map(|v| (v, suffix))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kinds(lang: Language, src: &str) -> Vec<(TokenKind, &str)> {
        tokenize(lang, src)
            .unwrap()
            .into_iter()
            .filter(|t| t.kind != TokenKind::Whitespace)
            .map(|t| (t.kind, t.text))
            .collect()
    }

    #[test]
    fn java_basics() {
        let toks = kinds(Language::Java, "int x = 10; // c\nString s = \"a\\\"b\";");
        assert_eq!(
            toks,
            vec![
                (TokenKind::Keyword, "int"),
                (TokenKind::Ident, "x"),
                (TokenKind::Punct, "="),
                (TokenKind::Number, "10"),
                (TokenKind::Punct, ";"),
                (TokenKind::Comment, "// c"),
                (TokenKind::Ident, "String"),
                (TokenKind::Ident, "s"),
                (TokenKind::Punct, "="),
                (TokenKind::Str, "\"a\\\"b\""),
                (TokenKind::Punct, ";"),
            ]
        );
    }

    #[test]
    fn python_prefixed_and_triple_strings() {
        let toks = kinds(Language::Python, "x = rb'\\d' + \"\"\"a\n'b'\"\"\"  # note");
        assert_eq!(toks[2], (TokenKind::Str, "rb'\\d'"));
        assert_eq!(toks[4], (TokenKind::Str, "\"\"\"a\n'b'\"\"\""));
        assert_eq!(toks[5], (TokenKind::Comment, "# note"));
    }

    #[test]
    fn python_floor_division_is_not_a_comment() {
        let toks = kinds(Language::Python, "a // b");
        assert_eq!(toks[1], (TokenKind::Punct, "//"));
    }

    #[test]
    fn c_preprocessor_lines() {
        let toks = kinds(Language::C, "#include <stdio.h>\n#define N \\\n 3\nint a = N;");
        assert_eq!(toks[0], (TokenKind::Preprocessor, "#include <stdio.h>"));
        assert_eq!(toks[1], (TokenKind::Preprocessor, "#define N \\\n 3"));
        assert_eq!(toks[2], (TokenKind::Keyword, "int"));
    }

    #[test]
    fn numbers_with_exponents_and_suffixes() {
        let toks = kinds(Language::Java, "1e-3 + 0x1F + 10L + .5f");
        let nums: Vec<_> = toks.iter().filter(|t| t.0 == TokenKind::Number).map(|t| t.1).collect();
        assert_eq!(nums, vec!["1e-3", "0x1F", "10L", ".5f"]);
        assert_eq!(decimal_literal("10L"), Some((10, "L")));
        assert_eq!(decimal_literal("0x1F"), None);
        assert_eq!(decimal_literal("010"), None);
    }

    #[test]
    fn unterminated_literals_are_errors() {
        assert_eq!(
            tokenize(Language::Java, "a\n\"abc\n").unwrap_err(),
            LexError::UnterminatedString { line: 2 }
        );
        assert!(matches!(
            tokenize(Language::C, "/* open"),
            Err(LexError::UnterminatedComment { line: 1 })
        ));
        assert!(matches!(
            tokenize(Language::Python, "'''x"),
            Err(LexError::UnterminatedString { .. })
        ));
    }

    #[test]
    fn reserved_names() {
        assert!(is_reserved(Language::Python, "continue"));
        assert!(is_reserved(Language::Python, "__init__"));
        assert!(is_reserved(Language::C, "printf"));
        assert!(!is_reserved(Language::Java, "Widget"));
        assert!(is_valid_identifier(Language::Java, "$x1"));
        assert!(!is_valid_identifier(Language::Python, "$x1"));
        assert!(!is_valid_identifier(Language::Java, "class"));
    }

    #[test]
    fn lossless_on_java_listing() {
        let src = "public class C extends B {\n  public int m() {\n    return super.k();\n  }\n}\n";
        let toks = tokenize(Language::Java, src).unwrap();
        let joined: String = toks.iter().map(|t| t.text).collect();
        assert_eq!(joined, src);
    }
}
