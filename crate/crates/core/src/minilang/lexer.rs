use super::MiniLangError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenKind {
    Keyword,
    Identifier,
    IntLiteral,
    StringLiteral,
    CharLiteral,
    Operator,
    Punctuation,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub kind: TokenKind,
    pub text: String,
    /// 1-based.
    pub line: usize,
    /// 1-based, counted in chars.
    pub col: usize,
}

pub const KEYWORDS: &[&str] = &[
    "int", "long", "char", "void", "bool", "float", "double", "if", "else", "for", "while", "return",
];

pub const TYPE_KEYWORDS: &[&str] = &["int", "long", "char", "void", "bool", "float", "double"];

// Longest first so that maximal munch is a linear scan.
const OPERATORS: &[&str] = &[
    "++", "--", "+=", "-=", "==", "!=", "<=", ">=", "&&", "||", "+", "-", "*", "/", "%", "<", ">", "=", "!",
];

const PUNCTUATION: &[char] = &['(', ')', '{', '}', '[', ']', ';', ','];

struct Cursor<'a> {
    chars: std::iter::Peekable<std::str::Chars<'a>>,
    line: usize,
    col: usize,
}

impl Cursor<'_> {
    fn peek(&mut self) -> Option<char> {
        self.chars.peek().copied()
    }

    fn peek2(&self) -> Option<char> {
        let mut it = self.chars.clone();
        it.next();
        it.next()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.chars.next()?;
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn error(&self, line: usize, col: usize, message: impl Into<String>) -> MiniLangError {
        MiniLangError::Lex {
            line,
            col,
            message: message.into(),
        }
    }
}

pub fn tokenize(source: &str) -> Result<Vec<Token>, MiniLangError> {
    let mut cur = Cursor {
        chars: source.chars().peekable(),
        line: 1,
        col: 1,
    };
    let mut tokens = Vec::new();
    while let Some(c) = cur.peek() {
        let (line, col) = (cur.line, cur.col);
        if c.is_whitespace() {
            cur.bump();
            continue;
        }
        if c == '/' && cur.peek2() == Some('/') {
            while let Some(c) = cur.peek() {
                if c == '\n' {
                    break;
                }
                cur.bump();
            }
            continue;
        }
        if c == '/' && cur.peek2() == Some('*') {
            cur.bump();
            cur.bump();
            loop {
                match cur.bump() {
                    Some('*') if cur.peek() == Some('/') => {
                        cur.bump();
                        break;
                    }
                    Some(_) => {}
                    None => return Err(cur.error(line, col, "unterminated comment")),
                }
            }
            continue;
        }
        let mut text = String::new();
        let kind = if c.is_ascii_alphabetic() || c == '_' {
            while let Some(c) = cur.peek() {
                if !(c.is_ascii_alphanumeric() || c == '_') {
                    break;
                }
                text.push(c);
                cur.bump();
            }
            if KEYWORDS.contains(&text.as_str()) {
                TokenKind::Keyword
            } else {
                TokenKind::Identifier
            }
        } else if c.is_ascii_digit() {
            while let Some(c) = cur.peek() {
                if !c.is_ascii_digit() {
                    break;
                }
                text.push(c);
                cur.bump();
            }
            if matches!(cur.peek(), Some(c) if c.is_ascii_alphabetic() || c == '_' || c == '.') {
                return Err(cur.error(cur.line, cur.col, format!("malformed number after '{text}'")));
            }
            TokenKind::IntLiteral
        } else if c == '"' || c == '\'' {
            let quote = c;
            text.push(quote);
            cur.bump();
            loop {
                match cur.bump() {
                    Some('\\') => {
                        text.push('\\');
                        match cur.bump() {
                            Some(e) if e != '\n' => text.push(e),
                            _ => return Err(cur.error(line, col, "unterminated literal")),
                        }
                    }
                    Some(c) if c == quote => {
                        text.push(c);
                        break;
                    }
                    Some('\n') | None => {
                        let what = if quote == '"' { "string" } else { "character" };
                        return Err(cur.error(line, col, format!("unterminated {what} literal")));
                    }
                    Some(c) => text.push(c),
                }
            }
            if quote == '"' {
                TokenKind::StringLiteral
            } else {
                if text.len() < 3 {
                    return Err(cur.error(line, col, "empty character literal"));
                }
                TokenKind::CharLiteral
            }
        } else if PUNCTUATION.contains(&c) {
            text.push(c);
            cur.bump();
            TokenKind::Punctuation
        } else {
            let next = cur.peek2();
            let two: String = [Some(c), next].iter().flatten().collect();
            if let Some(op) = OPERATORS.iter().find(|op| two.starts_with(**op)) {
                for _ in 0..op.len() {
                    cur.bump();
                }
                text.push_str(op);
                TokenKind::Operator
            } else {
                return Err(cur.error(line, col, format!("unexpected character '{c}'")));
            }
        };
        tokens.push(Token { kind, text, line, col });
    }
    Ok(tokens)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kinds_and_text(src: &str) -> Vec<(TokenKind, String)> {
        tokenize(src).unwrap().into_iter().map(|t| (t.kind, t.text)).collect()
    }

    #[test]
    fn simple_assignment() {
        use TokenKind::*;
        assert_eq!(
            kinds_and_text("x=1;"),
            vec![
                (Identifier, "x".into()),
                (Operator, "=".into()),
                (IntLiteral, "1".into()),
                (Punctuation, ";".into())
            ]
        );
    }

    #[test]
    fn comments_vanish() {
        assert!(tokenize("/*c*/").unwrap().is_empty());
        assert!(tokenize("// line\n  ").unwrap().is_empty());
    }

    #[test]
    fn for_loop_token_count() {
        // Hand enumeration: for ( i = 0 ; i < n ; i ++ ) { s += i ; }
        let expected = [
            "for", "(", "i", "=", "0", ";", "i", "<", "n", ";", "i", "++", ")", "{", "s", "+=", "i", ";", "}",
        ];
        let tokens = tokenize("for(i=0;i<n;i++){s+=i;}").unwrap();
        let texts: Vec<&str> = tokens.iter().map(|t| t.text.as_str()).collect();
        assert_eq!(texts, expected);
        assert_eq!(tokens.len(), 19);
    }

    #[test]
    fn positions_are_one_based() {
        let tokens = tokenize("int a;\n  a = 'c';").unwrap();
        assert_eq!((tokens[0].line, tokens[0].col), (1, 1));
        let a = &tokens[3];
        assert_eq!((a.text.as_str(), a.line, a.col), ("a", 2, 3));
        assert_eq!(tokens[5].kind, TokenKind::CharLiteral);
    }

    #[test]
    fn unterminated_string_reports_position() {
        let err = tokenize("x = \"abc").unwrap_err();
        assert_eq!(
            err,
            MiniLangError::Lex {
                line: 1,
                col: 5,
                message: "unterminated string literal".into()
            }
        );
    }

    #[test]
    fn significant_text_is_preserved() {
        let src = "int f(int a) { /* x */ return a+=1; } // tail";
        let joined: String = tokenize(src).unwrap().iter().map(|t| t.text.clone()).collect();
        assert_eq!(joined, "intf(inta){returna+=1;}");
    }
}
