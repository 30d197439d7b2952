//! Token-level structure recovery: which identifiers a program declares, and
//! which members each class declares.
//!
//! This is deliberately shallow. It recognizes declaration *positions*
//! (`Type name =`, `def name`, `class Name`, ...) rather than resolving
//! bindings, which is enough for consistent lexical renaming and for the
//! declarative mechanics checks.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::corpus::{Language, SourceUnit};
use crate::lexer::{self, LexError, Token, TokenKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum DeclCategory {
    Class,
    Method,
    Variable,
    Package,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Declaration {
    pub name: String,
    pub category: DeclCategory,
}

/// A significant token plus layout facts the Python rules need.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Sig<'a> {
    pub tok: Token<'a>,
    /// First token of a physical line.
    pub line_start: bool,
    /// Column (in chars) of the token on its line.
    pub column: usize,
}

pub(crate) fn significant_with_layout<'a>(src: &'a str, tokens: &[Token<'a>]) -> Vec<Sig<'a>> {
    let mut out = Vec::new();
    let mut newline_pending = true;
    for tok in tokens {
        if tok.kind.is_trivia() {
            if tok.text.contains('\n') {
                newline_pending = true;
            }
            continue;
        }
        let line_begin = src[..tok.start].rfind('\n').map_or(0, |i| i + 1);
        out.push(Sig {
            tok: *tok,
            line_start: newline_pending,
            column: src[line_begin..tok.start].chars().count(),
        });
        newline_pending = tok.text.contains('\n') && tok.kind == TokenKind::Str;
    }
    out
}

fn is_primitive(lang: Language, word: &str) -> bool {
    match lang {
        Language::Java => matches!(
            word,
            "int" | "long" | "short" | "byte" | "char" | "boolean" | "float" | "double" | "void" | "var"
        ),
        Language::C => matches!(
            word,
            "int" | "long" | "short" | "char" | "float" | "double" | "void" | "signed" | "unsigned"
                | "_Bool" | "bool"
        ),
        Language::Python => false,
    }
}

/// Token that can end a type in a declaration (`int`, `Foo`, `List<T>`, `T[]`).
fn ends_type(lang: Language, t: &Token) -> bool {
    match t.kind {
        TokenKind::Ident => true,
        TokenKind::Keyword => is_primitive(lang, t.text),
        TokenKind::Punct => {
            (t.text.ends_with('>') && t.text != "->" && t.text != ">=") || t.text == "]" || t.text == "..."
        }
        _ => false,
    }
}

fn is_type_decl_keyword(word: &str) -> bool {
    matches!(word, "class" | "interface" | "enum" | "record")
}

/// Every declaration occurrence in one source, in order.
pub fn declarations(lang: Language, src: &str) -> Result<Vec<Declaration>, LexError> {
    let tokens = lexer::tokenize(lang, src)?;
    let sig = significant_with_layout(src, &tokens);
    Ok(match lang {
        Language::Python => python_declarations(&sig),
        Language::Java | Language::C => c_like_declarations(lang, &sig),
    })
}

fn push(out: &mut Vec<Declaration>, name: &str, category: DeclCategory) {
    out.push(Declaration {
        name: name.to_string(),
        category,
    });
}

fn c_like_declarations(lang: Language, sig: &[Sig]) -> Vec<Declaration> {
    let mut out = Vec::new();
    let mut depth = 0usize;
    let text = |i: usize| sig.get(i).map_or("", |s| s.tok.text);
    for i in 0..sig.len() {
        let t = sig[i].tok;
        match t.text {
            "{" => depth += 1,
            "}" => depth = depth.saturating_sub(1),
            _ => {}
        }
        let prev = i.checked_sub(1).map(|j| sig[j].tok);
        let after_dot = prev.is_some_and(|p| p.is(".") || p.is("->") || p.is("::"));
        if t.kind == TokenKind::Keyword && !after_dot {
            let tag_keyword = match lang {
                Language::Java => is_type_decl_keyword(t.text),
                _ => matches!(t.text, "struct" | "union" | "enum"),
            };
            if tag_keyword {
                if let Some(n) = sig.get(i + 1).filter(|n| n.tok.kind == TokenKind::Ident) {
                    push(&mut out, n.tok.text, DeclCategory::Class);
                }
            }
            if lang == Language::Java && t.is("package") {
                let mut j = i + 1;
                while j < sig.len() && !sig[j].tok.is(";") {
                    if sig[j].tok.kind == TokenKind::Ident {
                        push(&mut out, sig[j].tok.text, DeclCategory::Package);
                    }
                    j += 1;
                }
            }
            continue;
        }
        if t.kind != TokenKind::Ident || after_dot {
            continue;
        }
        let Some(prev) = prev else { continue };
        let typed = ends_type(lang, &prev)
            || (lang == Language::C
                && prev.is("*")
                && i >= 2
                && ends_type(lang, &sig[i - 2].tok)
                && !sig[i - 2].tok.is("]"));
        if !typed {
            continue;
        }
        match text(i + 1) {
            "(" if lang == Language::Java || depth == 0 => push(&mut out, t.text, DeclCategory::Method),
            "=" | ";" | "," | ")" | ":" | "[" => push(&mut out, t.text, DeclCategory::Variable),
            _ => {}
        }
    }
    out
}

const AUGMENTED: &[&str] = &["+=", "-=", "*=", "/=", "//=", "%=", "**=", "&=", "|=", "^=", ">>=", "<<="];

fn python_declarations(sig: &[Sig]) -> Vec<Declaration> {
    let mut out = Vec::new();
    let text = |i: usize| sig.get(i).map_or("", |s| s.tok.text);
    let ident = |i: usize| sig.get(i).filter(|s| s.tok.kind == TokenKind::Ident);
    for i in 0..sig.len() {
        let t = sig[i].tok;
        match (t.kind, t.text) {
            (TokenKind::Keyword, "class") => {
                if let Some(n) = ident(i + 1) {
                    push(&mut out, n.tok.text, DeclCategory::Class);
                }
            }
            (TokenKind::Keyword, "def") => {
                if let Some(n) = ident(i + 1) {
                    push(&mut out, n.tok.text, DeclCategory::Method);
                }
                if text(i + 2) == "(" {
                    let mut depth = 0usize;
                    let mut j = i + 2;
                    while j < sig.len() {
                        match sig[j].tok.text {
                            "(" | "[" | "{" => depth += 1,
                            ")" | "]" | "}" => {
                                depth -= 1;
                                if depth == 0 {
                                    break;
                                }
                            }
                            _ => {}
                        }
                        if depth == 1
                            && sig[j].tok.kind == TokenKind::Ident
                            && matches!(text(j - 1), "(" | "," | "*" | "**")
                            && matches!(text(j + 1), "," | ")" | "=" | ":")
                        {
                            push(&mut out, sig[j].tok.text, DeclCategory::Variable);
                        }
                        j += 1;
                    }
                }
            }
            (TokenKind::Keyword, "for") => {
                let mut j = i + 1;
                while j < sig.len() && !sig[j].tok.is("in") && !sig[j].tok.is(":") {
                    if sig[j].tok.kind == TokenKind::Ident {
                        push(&mut out, sig[j].tok.text, DeclCategory::Variable);
                    }
                    j += 1;
                }
            }
            (TokenKind::Keyword, "as") => {
                if let Some(n) = ident(i + 1) {
                    push(&mut out, n.tok.text, DeclCategory::Variable);
                }
            }
            (TokenKind::Ident, name) => {
                let next = text(i + 1);
                let assigns = next == "=" || next == ":" || AUGMENTED.contains(&next);
                if sig[i].line_start && assigns {
                    push(&mut out, name, DeclCategory::Variable);
                } else if i >= 2
                    && text(i - 1) == "."
                    && text(i - 2) == "self"
                    && (next == "=" || AUGMENTED.contains(&next))
                {
                    push(&mut out, name, DeclCategory::Variable);
                }
            }
            _ => {}
        }
    }
    out
}

/// The declared identifiers of a program, one category each
/// (class over method over variable over package when a name plays
/// several roles). Reserved names are excluded.
pub fn declared_names(
    lang: Language,
    units: &[&SourceUnit],
) -> Result<BTreeMap<String, DeclCategory>, LexError> {
    let mut names: BTreeMap<String, DeclCategory> = BTreeMap::new();
    for unit in units {
        for decl in declarations(lang, &unit.text)? {
            if lexer::is_reserved(lang, &decl.name) {
                continue;
            }
            names
                .entry(decl.name)
                .and_modify(|c| *c = (*c).min(decl.category))
                .or_insert(decl.category);
        }
    }
    Ok(names)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MemberKind {
    Method,
    Field,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Member {
    pub name: String,
    pub kind: MemberKind,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassInfo {
    pub name: String,
    pub superclass: Option<String>,
    pub members: Vec<Member>,
    pub path: String,
}

impl ClassInfo {
    pub fn declares(&self, name: &str, kind: MemberKind) -> bool {
        self.members.iter().any(|m| m.name == name && m.kind == kind)
    }
}

/// Classes declared across `units` with their directly declared members.
pub fn classes(lang: Language, units: &[SourceUnit]) -> Result<Vec<ClassInfo>, LexError> {
    let mut out = Vec::new();
    for unit in units {
        let tokens = lexer::tokenize(lang, &unit.text)?;
        let sig = significant_with_layout(&unit.text, &tokens);
        match lang {
            Language::Java => java_classes(&sig, &unit.path, &mut out),
            Language::Python => python_classes(&sig, &unit.path, &mut out),
            Language::C => {}
        }
    }
    Ok(out)
}

fn java_classes(sig: &[Sig], path: &str, out: &mut Vec<ClassInfo>) {
    for i in 0..sig.len() {
        let t = sig[i].tok;
        if t.kind != TokenKind::Keyword || !is_type_decl_keyword(t.text) {
            continue;
        }
        if i > 0 && sig[i - 1].tok.is(".") {
            continue;
        }
        let Some(name) = sig.get(i + 1).filter(|n| n.tok.kind == TokenKind::Ident) else {
            continue;
        };
        let mut j = i + 2;
        let mut superclass = None;
        while j < sig.len() && !sig[j].tok.is("{") {
            if sig[j].tok.is("extends") {
                superclass = sig
                    .get(j + 1)
                    .filter(|n| n.tok.kind == TokenKind::Ident)
                    .map(|n| n.tok.text.to_string());
            }
            j += 1;
        }
        let body_start = j + 1;
        let mut depth = 1usize;
        let mut parens = 0usize;
        let mut members = Vec::new();
        let mut k = body_start;
        while k < sig.len() && depth > 0 {
            let tok = sig[k].tok;
            match tok.text {
                "{" => depth += 1,
                "}" => depth -= 1,
                "(" => parens += 1,
                ")" => parens = parens.saturating_sub(1),
                _ => {}
            }
            if depth == 1 && parens == 0 && tok.kind == TokenKind::Ident && k > body_start {
                let prev = sig[k - 1].tok;
                let next = sig.get(k + 1).map_or("", |s| s.tok.text);
                if ends_type(Language::Java, &prev) && !prev.is(".") {
                    match next {
                        "(" => members.push(Member {
                            name: tok.text.to_string(),
                            kind: MemberKind::Method,
                        }),
                        "=" | ";" | "," => members.push(Member {
                            name: tok.text.to_string(),
                            kind: MemberKind::Field,
                        }),
                        _ => {}
                    }
                }
            } else if depth == 1 && parens == 0 && tok.kind == TokenKind::Ident && k == body_start {
                // first member without a preceding type token cannot be a declaration
            }
            k += 1;
        }
        out.push(ClassInfo {
            name: name.tok.text.to_string(),
            superclass,
            members,
            path: path.to_string(),
        });
    }
}

fn python_classes(sig: &[Sig], path: &str, out: &mut Vec<ClassInfo>) {
    for i in 0..sig.len() {
        let t = sig[i].tok;
        if !(t.kind == TokenKind::Keyword && t.is("class") && sig[i].line_start) {
            continue;
        }
        let Some(name) = sig.get(i + 1).filter(|n| n.tok.kind == TokenKind::Ident) else {
            continue;
        };
        let class_col = sig[i].column;
        let superclass = (sig.get(i + 2).is_some_and(|s| s.tok.is("(")))
            .then(|| sig.get(i + 3))
            .flatten()
            .filter(|s| s.tok.kind == TokenKind::Ident)
            .map(|s| s.tok.text.to_string());
        let mut members = Vec::new();
        let mut body_col = None;
        let mut k = i + 2;
        while k < sig.len() {
            let s = sig[k];
            if s.line_start && s.column <= class_col {
                break;
            }
            if s.line_start && body_col.is_none() {
                body_col = Some(s.column);
            }
            let text = |j: usize| sig.get(j).map_or("", |x| x.tok.text);
            if s.tok.is("def") && s.line_start && Some(s.column) == body_col {
                if let Some(n) = sig.get(k + 1).filter(|n| n.tok.kind == TokenKind::Ident) {
                    members.push(Member {
                        name: n.tok.text.to_string(),
                        kind: MemberKind::Method,
                    });
                }
            } else if s.tok.kind == TokenKind::Ident
                && s.line_start
                && Some(s.column) == body_col
                && text(k + 1) == "="
            {
                members.push(Member {
                    name: s.tok.text.to_string(),
                    kind: MemberKind::Field,
                });
            } else if s.tok.kind == TokenKind::Ident
                && k >= 2
                && text(k - 1) == "."
                && text(k - 2) == "self"
                && text(k + 1) == "="
                && !members.iter().any(|m| m.name == s.tok.text && m.kind == MemberKind::Field)
            {
                members.push(Member {
                    name: s.tok.text.to_string(),
                    kind: MemberKind::Field,
                });
            }
            k += 1;
        }
        out.push(ClassInfo {
            name: name.tok.text.to_string(),
            superclass,
            members,
            path: path.to_string(),
        });
    }
}

/// A top-level Java type declaration and the byte range it occupies.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TopLevelType {
    pub name: String,
    pub range: std::ops::Range<usize>,
}

/// Splits a Java compilation unit into its header (package/import
/// statements) and its top-level type declarations. Leading comments and
/// whitespace belong to the declaration that follows them.
pub fn java_top_level(src: &str) -> Result<(std::ops::Range<usize>, Vec<TopLevelType>), LexError> {
    let tokens = lexer::tokenize(Language::Java, src)?;
    let mut header_end = 0usize;
    let mut types = Vec::new();
    let mut depth = 0usize;
    let mut seg_start = 0usize;
    let mut seg_first: Option<&str> = None;
    let mut seg_name: Option<String> = None;
    let mut expect_name = false;
    for tok in &tokens {
        if tok.kind.is_trivia() {
            continue;
        }
        if depth == 0 && seg_first.is_none() {
            seg_first = Some(tok.text);
        }
        if depth == 0 && expect_name && tok.kind == TokenKind::Ident && seg_name.is_none() {
            seg_name = Some(tok.text.to_string());
        }
        expect_name = depth == 0 && tok.kind == TokenKind::Keyword && is_type_decl_keyword(tok.text);
        match tok.text {
            "{" => depth += 1,
            "}" => {
                depth = depth.saturating_sub(1);
                if depth == 0 {
                    if let Some(name) = seg_name.take() {
                        types.push(TopLevelType {
                            name,
                            range: seg_start..tok.end(),
                        });
                    }
                    seg_start = tok.end();
                    seg_first = None;
                }
            }
            ";" if depth == 0 => {
                if matches!(seg_first, Some("package" | "import")) {
                    header_end = tok.end();
                }
                seg_start = tok.end();
                seg_first = None;
                seg_name = None;
            }
            _ => {}
        }
    }
    Ok((0..header_end, types))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(lang: Language, src: &str) -> BTreeMap<String, DeclCategory> {
        let u = SourceUnit::new("x", src);
        declared_names(lang, &[&u]).unwrap()
    }

    const SUPER_CALL_BEFORE: &str = "public class A {\n  public int k() {\n    return 10;\n  }\n}\npublic class B extends A {\n  public int k() {\n    return 20;\n  }\n  public int m() {\n    return super.k();\n  }\n}\npublic class C extends B {\n  public static void main(String[] args) {\n    C c = new C();\n    System.out.println(c.m());\n  }\n}\n";

    #[test]
    fn java_declarations_of_super_call() {
        let n = names(Language::Java, SUPER_CALL_BEFORE);
        assert_eq!(n.get("A"), Some(&DeclCategory::Class));
        assert_eq!(n.get("C"), Some(&DeclCategory::Class));
        assert_eq!(n.get("k"), Some(&DeclCategory::Method));
        assert_eq!(n.get("m"), Some(&DeclCategory::Method));
        assert_eq!(n.get("c"), Some(&DeclCategory::Variable));
        assert_eq!(n.get("args"), Some(&DeclCategory::Variable));
        assert!(!n.contains_key("main"));
        assert!(!n.contains_key("println"));
    }

    #[test]
    fn c_declarations() {
        let src = "#include <stdio.h>\nconst char newFunction() {\n  return \"%d\";\n}\nint main() {\n  int a=0;\n  char *p = 0;\n  printf(newFunction(), a * a);\n  return 0;\n}\n";
        let n = names(Language::C, src);
        assert_eq!(n.get("newFunction"), Some(&DeclCategory::Method));
        assert_eq!(n.get("a"), Some(&DeclCategory::Variable));
        assert_eq!(n.get("p"), Some(&DeclCategory::Variable));
        assert_eq!(n.len(), 3);
    }

    #[test]
    fn python_declarations() {
        let src = "class B:\n  def a(self, n, *rest, k=1) -> None:\n    text = 'hello'\n    self.count = n\n    for i, j in rest:\n      total += i\n";
        let n = names(Language::Python, src);
        assert_eq!(n.get("B"), Some(&DeclCategory::Class));
        assert_eq!(n.get("a"), Some(&DeclCategory::Method));
        for v in ["text", "n", "rest", "k", "count", "i", "j", "total"] {
            assert_eq!(n.get(v), Some(&DeclCategory::Variable), "{v}");
        }
        assert!(!n.contains_key("self"));
    }

    #[test]
    fn java_members() {
        let src = "public class B extends A {\n  protected int f = 1;\n  public long t() {\n    int local = f;\n    return local;\n  }\n}\npublic class C extends A {}\n";
        let cls = classes(Language::Java, &[SourceUnit::new("B.java", src)]).unwrap();
        assert_eq!(cls.len(), 2);
        assert_eq!(cls[0].superclass.as_deref(), Some("A"));
        assert_eq!(
            cls[0].members,
            vec![
                Member { name: "f".into(), kind: MemberKind::Field },
                Member { name: "t".into(), kind: MemberKind::Method },
            ]
        );
        assert!(cls[1].members.is_empty());
    }

    #[test]
    fn python_members() {
        let src = "class Square(Shape):\n    sides = 4\n\n    def __init__(self, side):\n        self.side = side\n\n    def area(self):\n        return self.side * self.side\n\n\ndef free():\n    pass\n";
        let cls = classes(Language::Python, &[SourceUnit::new("s.py", src)]).unwrap();
        assert_eq!(cls.len(), 1);
        let c = &cls[0];
        assert_eq!(c.superclass.as_deref(), Some("Shape"));
        assert!(c.declares("area", MemberKind::Method));
        assert!(c.declares("side", MemberKind::Field));
        assert!(c.declares("sides", MemberKind::Field));
        assert!(!c.declares("free", MemberKind::Method));
    }

    #[test]
    fn java_split_points() {
        let src = "package p;\nimport java.util.List;\n\npublic class A {}\n// b\nclass B { void f() {} }\n";
        let (header, types) = java_top_level(src).unwrap();
        assert_eq!(&src[header], "package p;\nimport java.util.List;");
        assert_eq!(types.len(), 2);
        assert_eq!(types[0].name, "A");
        assert_eq!(&src[types[0].range.clone()], "\n\npublic class A {}");
        assert_eq!(&src[types[1].range.clone()], "\n// b\nclass B { void f() {} }");
    }
}
