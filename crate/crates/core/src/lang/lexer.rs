use super::ast::KEYWORDS;
use super::SyntaxError;

#[derive(Clone, Debug, PartialEq)]
pub(crate) enum Tok {
    Name(String),
    Kw(&'static str),
    Int(i64),
    Float(f64),
    Str(String),
    Op(&'static str),
    Newline,
    Indent,
    Dedent,
    Eof,
}

#[derive(Clone, Debug)]
pub(crate) struct Token {
    pub tok: Tok,
    pub line: u32,
    pub col: u32,
}

const INDENT_UNIT: usize = 4;

// Longest operators first so that `//=` wins over `//` and `/`.
const OPERATORS: &[&str] = &[
    "//=", "+=", "-=", "*=", "/=", "%=", "//", "==", "!=", "<=", ">=", "+", "-", "*", "/", "%", "<",
    ">", "=", "(", ")", "[", "]", "{", "}", ",", ":", ".",
];

pub(crate) fn tokenize(src: &str) -> Result<Vec<Token>, SyntaxError> {
    let mut tokens = Vec::new();
    let mut indents: Vec<usize> = vec![0];
    let mut depth = 0usize;

    for (line_idx, raw_line) in src.lines().enumerate() {
        let line_no = line_idx as u32 + 1;
        let line: Vec<char> = raw_line.chars().collect();
        let mut i = 0;

        if depth == 0 {
            let mut width = 0;
            while i < line.len() && (line[i] == ' ' || line[i] == '\t') {
                if line[i] == '\t' {
                    return Err(SyntaxError::new(line_no, i as u32 + 1, "tabs are not allowed in indentation"));
                }
                width += 1;
                i += 1;
            }
            if i == line.len() || line[i] == '#' {
                continue;
            }
            let current = *indents.last().unwrap();
            if width > current {
                if width != current + INDENT_UNIT {
                    return Err(SyntaxError::new(line_no, 1, "indentation must increase by exactly 4 spaces"));
                }
                indents.push(width);
                tokens.push(Token { tok: Tok::Indent, line: line_no, col: 1 });
            } else if width < current {
                while *indents.last().unwrap() > width {
                    indents.pop();
                    tokens.push(Token { tok: Tok::Dedent, line: line_no, col: 1 });
                }
                if *indents.last().unwrap() != width {
                    return Err(SyntaxError::new(line_no, 1, "unindent does not match any outer indentation level"));
                }
            }
        }

        while i < line.len() {
            let c = line[i];
            let col = i as u32 + 1;
            if c == ' ' {
                i += 1;
                continue;
            }
            if c == '\t' {
                return Err(SyntaxError::new(line_no, col, "tabs are not allowed"));
            }
            if c == '#' {
                break;
            }
            if c.is_ascii_alphabetic() || c == '_' {
                let start = i;
                while i < line.len() && (line[i].is_ascii_alphanumeric() || line[i] == '_') {
                    i += 1;
                }
                let word: String = line[start..i].iter().collect();
                let tok = match KEYWORDS.iter().find(|k| **k == word) {
                    Some(k) => Tok::Kw(k),
                    None => Tok::Name(word),
                };
                tokens.push(Token { tok, line: line_no, col });
                continue;
            }
            if c.is_ascii_digit() {
                let (tok, next) = lex_number(&line, i, line_no)?;
                tokens.push(Token { tok, line: line_no, col });
                i = next;
                continue;
            }
            if c == '"' || c == '\'' {
                let (s, next) = lex_string(&line, i, line_no)?;
                tokens.push(Token { tok: Tok::Str(s), line: line_no, col });
                i = next;
                continue;
            }
            let rest: String = line[i..line.len().min(i + 3)].iter().collect();
            match OPERATORS.iter().find(|op| rest.starts_with(*op)) {
                Some(op) => {
                    match *op {
                        "(" | "[" | "{" => depth += 1,
                        ")" | "]" | "}" => {
                            if depth == 0 {
                                return Err(SyntaxError::new(line_no, col, format!("unmatched '{op}'")));
                            }
                            depth -= 1;
                        }
                        _ => {}
                    }
                    tokens.push(Token { tok: Tok::Op(op), line: line_no, col });
                    i += op.len();
                }
                None => {
                    return Err(SyntaxError::new(line_no, col, format!("unexpected character '{c}'")));
                }
            }
        }

        if depth == 0 && !matches!(tokens.last().map(|t| &t.tok), None | Some(Tok::Newline) | Some(Tok::Indent) | Some(Tok::Dedent)) {
            tokens.push(Token { tok: Tok::Newline, line: line_no, col: line.len() as u32 + 1 });
        }
    }

    let last_line = src.lines().count() as u32 + 1;
    if depth != 0 {
        return Err(SyntaxError::new(last_line, 1, "unexpected end of input inside brackets"));
    }
    if !matches!(tokens.last().map(|t| &t.tok), None | Some(Tok::Newline) | Some(Tok::Dedent)) {
        tokens.push(Token { tok: Tok::Newline, line: last_line, col: 1 });
    }
    while indents.len() > 1 {
        indents.pop();
        tokens.push(Token { tok: Tok::Dedent, line: last_line, col: 1 });
    }
    tokens.push(Token { tok: Tok::Eof, line: last_line, col: 1 });
    Ok(tokens)
}

fn lex_number(line: &[char], start: usize, line_no: u32) -> Result<(Tok, usize), SyntaxError> {
    let mut i = start;
    let mut is_float = false;
    while i < line.len() && line[i].is_ascii_digit() {
        i += 1;
    }
    if i + 1 < line.len() && line[i] == '.' && line[i + 1].is_ascii_digit() {
        is_float = true;
        i += 1;
        while i < line.len() && line[i].is_ascii_digit() {
            i += 1;
        }
    }
    if i < line.len() && (line[i] == 'e' || line[i] == 'E') {
        let mut j = i + 1;
        if j < line.len() && (line[j] == '+' || line[j] == '-') {
            j += 1;
        }
        if j < line.len() && line[j].is_ascii_digit() {
            is_float = true;
            i = j;
            while i < line.len() && line[i].is_ascii_digit() {
                i += 1;
            }
        }
    }
    if i < line.len() && (line[i].is_ascii_alphabetic() || line[i] == '_') {
        return Err(SyntaxError::new(line_no, start as u32 + 1, "invalid number literal"));
    }
    let text: String = line[start..i].iter().collect();
    let tok = if is_float {
        Tok::Float(text.parse().map_err(|_| SyntaxError::new(line_no, start as u32 + 1, "invalid float literal"))?)
    } else {
        Tok::Int(text.parse().map_err(|_| SyntaxError::new(line_no, start as u32 + 1, "integer literal too large"))?)
    };
    Ok((tok, i))
}

fn lex_string(line: &[char], start: usize, line_no: u32) -> Result<(String, usize), SyntaxError> {
    let quote = line[start];
    let mut out = String::new();
    let mut i = start + 1;
    while i < line.len() {
        let c = line[i];
        if c == quote {
            return Ok((out, i + 1));
        }
        if c == '\\' {
            let esc = line
                .get(i + 1)
                .ok_or_else(|| SyntaxError::new(line_no, i as u32 + 1, "unterminated escape"))?;
            out.push(match esc {
                'n' => '\n',
                't' => '\t',
                '\\' => '\\',
                '\'' => '\'',
                '"' => '"',
                other => {
                    return Err(SyntaxError::new(line_no, i as u32 + 1, format!("unknown escape '\\{other}'")));
                }
            });
            i += 2;
            continue;
        }
        out.push(c);
        i += 1;
    }
    Err(SyntaxError::new(line_no, start as u32 + 1, "unterminated string literal"))
}
