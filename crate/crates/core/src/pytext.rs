//! Line-level scanning helpers for Python source text: enough quote and
//! comment awareness for the syntactic scanner rules and the lightweight
//! grammar check, without a real parser.

/// One physical line classified by the scanner.
#[derive(Debug, Clone)]
pub(crate) struct CodeLine {
    /// 1-based line number.
    pub number: u32,
    /// The line with trailing comment removed, or `None` when the whole line
    /// sits inside a triple-quoted string.
    pub code: Option<String>,
}

fn run_of(chars: &[char], start: usize, c: char, count: usize) -> bool {
    start + count <= chars.len() && chars[start..start + count].iter().all(|x| *x == c)
}

/// Split source into classified lines, tracking triple-quoted strings across
/// line boundaries and stripping `#` comments that appear outside strings.
/// Short-string contents stay in the code part; triple-string contents do not.
pub(crate) fn classify_lines(source: &str) -> Vec<CodeLine> {
    let mut out = Vec::new();
    // Quote character of the currently open triple-quoted string, if any.
    let mut open_triple: Option<char> = None;

    for (idx, raw) in source.lines().enumerate() {
        let chars: Vec<char> = raw.chars().collect();
        let started_in_triple = open_triple.is_some();
        let mut exited_triple = false;
        let mut code = String::new();
        let mut in_short: Option<char> = None;
        let mut i = 0;

        while i < chars.len() {
            let c = chars[i];
            if let Some(q) = open_triple {
                if run_of(&chars, i, q, 3) {
                    open_triple = None;
                    exited_triple = true;
                    i += 3;
                } else {
                    i += 1;
                }
                continue;
            }
            if let Some(q) = in_short {
                code.push(c);
                if c == '\\' {
                    if i + 1 < chars.len() {
                        code.push(chars[i + 1]);
                    }
                    i += 2;
                    continue;
                }
                if c == q {
                    in_short = None;
                }
                i += 1;
                continue;
            }
            match c {
                '#' => break,
                '"' | '\'' => {
                    if run_of(&chars, i, c, 3) {
                        open_triple = Some(c);
                        i += 3;
                    } else {
                        in_short = Some(c);
                        code.push(c);
                        i += 1;
                    }
                }
                _ => {
                    code.push(c);
                    i += 1;
                }
            }
        }

        let code = if started_in_triple && !exited_triple {
            None
        } else {
            Some(code)
        };
        out.push(CodeLine {
            number: (idx + 1) as u32,
            code,
        });
    }
    out
}

/// Check delimiter balance and short-string termination. Returns the first
/// problem found.
pub(crate) fn check_delimiters(source: &str) -> Result<(), String> {
    let mut stack: Vec<(char, u32)> = Vec::new();
    let mut open_triple: Option<char> = None;

    for (idx, raw) in source.lines().enumerate() {
        let line_no = (idx + 1) as u32;
        let chars: Vec<char> = raw.chars().collect();
        let mut in_short: Option<char> = None;
        let mut i = 0;
        while i < chars.len() {
            let c = chars[i];
            if let Some(q) = open_triple {
                if run_of(&chars, i, q, 3) {
                    open_triple = None;
                    i += 3;
                } else {
                    i += 1;
                }
                continue;
            }
            if let Some(q) = in_short {
                if c == '\\' {
                    i += 2;
                    continue;
                }
                if c == q {
                    in_short = None;
                }
                i += 1;
                continue;
            }
            match c {
                '#' => break,
                '"' | '\'' => {
                    if run_of(&chars, i, c, 3) {
                        open_triple = Some(c);
                        i += 3;
                    } else {
                        in_short = Some(c);
                        i += 1;
                    }
                }
                '(' | '[' | '{' => {
                    stack.push((c, line_no));
                    i += 1;
                }
                ')' | ']' | '}' => {
                    let expected = match c {
                        ')' => '(',
                        ']' => '[',
                        _ => '{',
                    };
                    match stack.pop() {
                        Some((open, _)) if open == expected => {}
                        Some((open, at)) => {
                            return Err(format!(
                                "line {line_no}: closing {c:?} does not match {open:?} opened on line {at}"
                            ));
                        }
                        None => {
                            return Err(format!("line {line_no}: unmatched closing {c:?}"));
                        }
                    }
                    i += 1;
                }
                _ => i += 1,
            }
        }
        if in_short.is_some() {
            return Err(format!("line {line_no}: unterminated string literal"));
        }
    }
    if open_triple.is_some() {
        return Err("unterminated triple-quoted string".to_string());
    }
    if let Some((open, at)) = stack.pop() {
        return Err(format!("unclosed {open:?} opened on line {at}"));
    }
    Ok(())
}

/// Bracket depth contribution of an already comment-stripped code line,
/// ignoring delimiters inside short strings.
pub(crate) fn depth_delta(code: &str) -> i32 {
    let mut delta = 0;
    let mut in_short: Option<char> = None;
    let mut chars = code.chars();
    while let Some(c) = chars.next() {
        if let Some(q) = in_short {
            if c == '\\' {
                chars.next();
                continue;
            }
            if c == q {
                in_short = None;
            }
            continue;
        }
        match c {
            '"' | '\'' => in_short = Some(c),
            '(' | '[' | '{' => delta += 1,
            ')' | ']' | '}' => delta -= 1,
            _ => {}
        }
    }
    delta
}
