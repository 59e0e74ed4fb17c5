use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::LazyLock;

use regex::Regex;
use serde_json::Value;
use thiserror::Error;

use super::{mask_token, Dropped, Problem, DATA_DIR_ENV, ONE_INDEX, PI_INDEX};
use crate::expr::{eval_expr, parse_expression, Literal};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorpusFormat {
    Math23k,
    Mawps,
    Synthetic,
}

impl FromStr for CorpusFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "math23k-json" | "math23k" => Ok(CorpusFormat::Math23k),
            "mawps-json" | "mawps" => Ok(CorpusFormat::Mawps),
            "synthetic-json" | "synthetic" => Ok(CorpusFormat::Synthetic),
            _ => Err(format!(
                "unknown corpus format `{s}` (expected math23k-json, mawps-json or synthetic-json)"
            )),
        }
    }
}

impl fmt::Display for CorpusFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CorpusFormat::Math23k => "math23k-json",
            CorpusFormat::Mawps => "mawps-json",
            CorpusFormat::Synthetic => "synthetic-json",
        })
    }
}

/// The `pi` Math23K answers were computed with. A corpus convention, not an
/// approximation of the constant.
#[allow(clippy::approx_constant)]
pub const MATH23K_PI: f64 = 3.14;

#[derive(Debug, Clone, PartialEq)]
pub struct LoadOptions {
    pub format: CorpusFormat,
    /// Value given to the `pi` constant. Math23K answers use 3.14.
    pub pi: f64,
}

impl LoadOptions {
    pub fn new(format: CorpusFormat) -> Self {
        let pi = match format {
            CorpusFormat::Math23k => MATH23K_PI,
            _ => std::f64::consts::PI,
        };
        Self { format, pi }
    }
}

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("record {record}: missing or invalid field `{field}`")]
    Schema { record: String, field: &'static str },
    #[error("malformed JSON near record {index}: {source}")]
    Json {
        index: usize,
        source: serde_json::Error,
    },
}

#[derive(Debug, Clone, Default)]
pub struct LoadedCorpus {
    pub problems: Vec<Problem>,
    pub dropped: Vec<Dropped>,
}

/// Reads a corpus file. Relative paths that do not exist are retried under
/// `$MTREE_DATA_DIR`.
pub fn load_corpus(path: &Path, options: &LoadOptions) -> Result<LoadedCorpus, LoadError> {
    let path = resolve(path);
    let text = std::fs::read_to_string(&path).map_err(|source| LoadError::Io {
        path: path.clone(),
        source,
    })?;
    parse_corpus(&text, options)
}

fn resolve(path: &Path) -> PathBuf {
    if path.is_relative() && !path.exists() {
        if let Some(root) = std::env::var_os(DATA_DIR_ENV) {
            let candidate = Path::new(&root).join(path);
            if candidate.exists() {
                return candidate;
            }
        }
    }
    path.to_path_buf()
}

/// Parses corpus text: a JSON array, JSON lines, or concatenated objects.
pub fn parse_corpus(text: &str, options: &LoadOptions) -> Result<LoadedCorpus, LoadError> {
    let records: Vec<Value> = if text.trim_start().starts_with('[') {
        serde_json::from_str(text).map_err(|source| LoadError::Json { index: 0, source })?
    } else {
        let mut out = Vec::new();
        for (index, v) in serde_json::Deserializer::from_str(text)
            .into_iter::<Value>()
            .enumerate()
        {
            out.push(v.map_err(|source| LoadError::Json { index, source })?);
        }
        out
    };
    let mut corpus = LoadedCorpus::default();
    for (index, record) in records.iter().enumerate() {
        match read_record(record, index, options)? {
            Ok(p) => corpus.problems.push(p),
            Err(d) => {
                log::info!("dropping {}: {}", d.id, d.reason);
                corpus.dropped.push(d);
            }
        }
    }
    Ok(corpus)
}

fn field<'a>(record: &'a Value, names: &[&str]) -> Option<&'a Value> {
    names
        .iter()
        .find_map(|n| record.get(*n))
        .filter(|v| !v.is_null())
}

fn first_scalar(v: &Value) -> &Value {
    match v {
        Value::Array(items) if !items.is_empty() => &items[0],
        other => other,
    }
}

fn read_record(
    record: &Value,
    index: usize,
    options: &LoadOptions,
) -> Result<Result<Problem, Dropped>, LoadError> {
    let id = match field(record, &["id", "iIndex"]) {
        Some(Value::String(s)) => s.clone(),
        Some(Value::Number(n)) => n.to_string(),
        _ => {
            return Err(LoadError::Schema {
                record: format!("#{index}"),
                field: "id",
            })
        }
    };
    let schema = |field: &'static str| LoadError::Schema {
        record: id.clone(),
        field,
    };
    let text_fields: &[&str] = match options.format {
        CorpusFormat::Math23k => &["segmented_text", "text", "original_text"],
        _ => &["text", "segmented_text", "sQuestion", "original_text"],
    };
    let text = field(record, text_fields)
        .and_then(Value::as_str)
        .ok_or_else(|| schema("text"))?
        .to_string();
    let equation = field(record, &["equation", "lEquations"])
        .map(first_scalar)
        .and_then(Value::as_str)
        .ok_or_else(|| schema("equation"))?
        .to_string();
    let answer = match field(record, &["ans", "answer", "lSolutions"]).map(first_scalar) {
        Some(Value::Number(n)) => n.as_f64(),
        Some(Value::String(s)) => match parse_answer(s) {
            Some(a) => Some(a),
            None => {
                return Ok(Err(Dropped {
                    id,
                    reason: format!("unparsable answer `{s}`"),
                }))
            }
        },
        _ => None,
    }
    .ok_or_else(|| schema("ans"))?;
    Ok(Ok(mask_problem(id, text, equation, answer, options)))
}

/// Parses an answer string, applying the same number rewrites as equations.
pub(crate) fn parse_answer(s: &str) -> Option<f64> {
    let e = parse_expression(&rewrite_equation(s)).ok()?;
    eval_expr(&e).ok().filter(|v| v.is_finite())
}

static NUMBER: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r"(?x)
        (?P<mixed>\d+)\((?P<mn>\d+)/(?P<md>\d+)\)
        | \((?P<pn>\d+)/(?P<pd>\d+)\)
        | (?P<fnum>\d+)/(?P<fden>\d+)
        | (?P<dec>\d*\.?\d+)(?P<pct>%)?
        ",
    )
    .expect("valid regex")
});

static PERCENT: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(\d*\.?\d+)\s*%").expect("valid regex"));

static MIXED: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(\d+)\((\d+)/(\d+)\)").expect("valid regex"));

/// Moves the decimal point two places left: `25` becomes `0.25`.
pub(crate) fn percent_literal(raw: &str) -> Option<Literal> {
    let lit = Literal::decimal(raw)?;
    let (int, frac) = lit.text().split_once('.').unwrap_or((lit.text(), ""));
    let digits = format!("{int}{frac}");
    let point = int.len() as isize - 2;
    let shifted = if point <= 0 {
        format!("0.{}{}", "0".repeat((-point) as usize), digits)
    } else {
        let (a, b) = digits.split_at(point as usize);
        format!("{a}.{b}")
    };
    Literal::decimal(&shifted)
}

/// Textual rewrites applied before parsing an equation or answer:
/// `n%` becomes the decimal `n/100`, mixed numbers `a(b/c)` become
/// `(a+b/c)`, square brackets become round ones.
pub(crate) fn rewrite_equation(eq: &str) -> String {
    let eq = eq.replace(['[', '{'], "(").replace([']', '}'], ")");
    let eq = MIXED.replace_all(&eq, "($1+$2/$3)");
    PERCENT
        .replace_all(&eq, |c: &regex::Captures| {
            percent_literal(&c[1]).map_or_else(|| c[0].to_string(), |l| l.text().to_string())
        })
        .into_owned()
}

struct Extracted {
    literal: Literal,
    surface: String,
}

fn extract(c: &regex::Captures) -> Option<Extracted> {
    let surface = c[0].to_string();
    let dec = |s: &str| Literal::decimal(s);
    if let (Some(a), Some(b), Some(d)) = (c.name("mixed"), c.name("mn"), c.name("md")) {
        let (a, b, d) = (dec(a.as_str())?, dec(b.as_str())?, dec(d.as_str())?);
        if d.value() == 0.0 {
            return None;
        }
        let text = format!("{a}({b}/{d})");
        return Some(Extracted {
            literal: Literal::new(text, a.value() + b.value() / d.value()),
            surface,
        });
    }
    let frac = c
        .name("pn")
        .zip(c.name("pd"))
        .or_else(|| c.name("fnum").zip(c.name("fden")));
    if let Some((n, d)) = frac {
        let (n, d) = (dec(n.as_str())?, dec(d.as_str())?);
        if d.value() == 0.0 {
            return None;
        }
        return Some(Extracted {
            literal: Literal::new(format!("{n}/{d}"), n.value() / d.value()),
            surface,
        });
    }
    let raw = c.name("dec")?.as_str();
    let literal = if c.name("pct").is_some() {
        percent_literal(raw)?
    } else {
        dec(raw)?
    };
    Some(Extracted { literal, surface })
}

fn split_words(span: &str, out: &mut Vec<String>) {
    for word in span.split_whitespace() {
        let mut current = String::new();
        for ch in word.chars() {
            if ch.is_alphanumeric() || ch == '_' || ch == '\'' {
                current.push(ch);
            } else {
                if !current.is_empty() {
                    out.push(std::mem::take(&mut current));
                }
                out.push(ch.to_string());
            }
        }
        if !current.is_empty() {
            out.push(current);
        }
    }
}

/// Tokenizes and masks `text`; numbers become `NUM_i` with the two
/// constants injected in front.
pub(crate) fn mask_text(
    text: &str,
    pi: f64,
) -> (Vec<String>, Vec<Literal>, Vec<String>, Vec<usize>) {
    let mut tokens = vec![mask_token(ONE_INDEX), mask_token(PI_INDEX)];
    let mut values = vec![Literal::one(), Literal::new("pi", pi)];
    let mut surface = vec!["1".to_string(), "pi".to_string()];
    let mut positions = vec![0, 1];
    let mut last = 0;
    for c in NUMBER.captures_iter(text) {
        let m = c.get(0).expect("whole match");
        let Some(x) = extract(&c) else { continue };
        split_words(&text[last..m.start()], &mut tokens);
        last = m.end();
        let i = values.len();
        positions.push(tokens.len());
        tokens.push(mask_token(i));
        values.push(x.literal);
        surface.push(x.surface);
    }
    split_words(&text[last..], &mut tokens);
    (tokens, values, surface, positions)
}

fn mask_problem(
    id: String,
    text: String,
    equation: String,
    answer: f64,
    options: &LoadOptions,
) -> Problem {
    let (tokens, values, surface, positions) = mask_text(&text, options.pi);
    Problem {
        id,
        text,
        tokens,
        values,
        surface,
        positions,
        equation,
        answer,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn opts() -> LoadOptions {
        LoadOptions::new(CorpusFormat::Synthetic)
    }

    #[test]
    fn figure_problem_masks_constants_first() {
        let text = r#"{"id": "mike", "text": "Mike reads 2 hours a day at 3 pages per hour, then 4 and 5 more pages.", "equation": "x=2*3+4+5", "ans": 15}"#;
        let c = parse_corpus(text, &opts()).unwrap();
        let p = &c.problems[0];
        let vals: Vec<&str> = p.values.iter().map(Literal::text).collect();
        assert_eq!(vals, ["1", "pi", "2", "3", "4", "5"]);
        assert_eq!(p.values[1].value(), std::f64::consts::PI);
        for (i, &q) in p.positions.iter().enumerate() {
            assert_eq!(p.tokens[q], mask_token(i));
        }
        assert_eq!(&p.tokens[..3], ["NUM_0", "NUM_1", "Mike"]);
        assert_eq!(p.answer, 15.0);
    }

    #[test]
    fn percent_answer_is_scaled() {
        let text = r#"{"id": 1, "text": "a 25% discount", "equation": "x=25%", "ans": "25%"}"#;
        let c = parse_corpus(text, &opts()).unwrap();
        assert_eq!(c.problems[0].answer, 0.25);
        assert_eq!(c.problems[0].values[2].text(), "0.25");
        assert_eq!(c.problems[0].surface[2], "25%");
    }

    #[test]
    fn percent_literal_shifts_decimal_point() {
        for (raw, want) in [
            ("25", "0.25"),
            ("5", "0.05"),
            ("12.5", "0.125"),
            ("150", "1.5"),
            ("0.5", "0.005"),
            ("100", "1"),
        ] {
            assert_eq!(percent_literal(raw).unwrap().text(), want, "{raw}");
        }
    }

    #[test]
    fn fractions_and_mixed_numbers_are_single_values() {
        let (_, values, surface, _) = mask_text("take (1/2) of 3(1/4) kg, or 3/5", MATH23K_PI);
        let vals: Vec<&str> = values.iter().map(Literal::text).collect();
        assert_eq!(vals, ["1", "pi", "1/2", "3(1/4)", "3/5"]);
        assert_eq!(values[3].value(), 3.25);
        assert_eq!(surface[2], "(1/2)");
        assert_eq!(values[4].value(), 0.6);
    }

    #[test]
    fn words_and_punctuation_split() {
        let (tokens, ..) = mask_text("Tom's 3 apples, then 4.5kg.", MATH23K_PI);
        assert_eq!(
            tokens,
            ["NUM_0", "NUM_1", "Tom's", "NUM_2", "apples", ",", "then", "NUM_3", "kg", "."]
        );
    }

    #[test]
    fn equation_rewrites() {
        assert_eq!(rewrite_equation("x=[2+3]*50%"), "x=(2+3)*0.5");
        assert_eq!(rewrite_equation("x=1(1/2)*4"), "x=(1+1/2)*4");
        assert_eq!(parse_answer("1(1/2)"), Some(1.5));
        assert_eq!(parse_answer("3/4"), Some(0.75));
        assert_eq!(parse_answer("abc"), None);
    }

    #[test]
    fn array_and_lines_formats() {
        let arr = r#"[{"id":"a","text":"1 2","equation":"1+2","ans":3},{"id":"b","text":"3","equation":"3","ans":3}]"#;
        assert_eq!(parse_corpus(arr, &opts()).unwrap().problems.len(), 2);
        let lines = "{\"id\":\"a\",\"text\":\"1 2\",\"equation\":\"1+2\",\"ans\":3}\n{\"id\":\"b\",\"text\":\"3\",\"equation\":\"3\",\"ans\":3}\n";
        assert_eq!(parse_corpus(lines, &opts()).unwrap().problems.len(), 2);
        assert!(parse_corpus("", &opts()).unwrap().problems.is_empty());
    }

    #[test]
    fn mawps_style_fields() {
        let rec = r#"{"iIndex": 7, "sQuestion": "He had 9 and ate 8.", "lEquations": ["X=9-8"], "lSolutions": [1.0]}"#;
        let c = parse_corpus(rec, &LoadOptions::new(CorpusFormat::Mawps)).unwrap();
        assert_eq!(c.problems[0].id, "7");
        assert_eq!(c.problems[0].equation, "X=9-8");
    }

    #[test]
    fn schema_errors_name_the_field() {
        let rec = r#"{"id": "q", "text": "1"}"#;
        match parse_corpus(rec, &opts()) {
            Err(LoadError::Schema { record, field }) => {
                assert_eq!(record, "q");
                assert_eq!(field, "equation");
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            parse_corpus("{\"id\":", &opts()),
            Err(LoadError::Json { .. })
        ));
    }

    #[test]
    fn unparsable_answer_drops_record() {
        let rec = r#"{"id": "q", "text": "1", "equation": "1", "ans": "n/a"}"#;
        let c = parse_corpus(rec, &opts()).unwrap();
        assert!(c.problems.is_empty());
        assert_eq!(c.dropped[0].id, "q");
    }

    #[test]
    fn math23k_defaults() {
        let o = LoadOptions::new(CorpusFormat::Math23k);
        assert_eq!(o.pi, MATH23K_PI);
        let rec = r#"{"id":"1","original_text":"raw","segmented_text":"一 个 数 3.5 的 (1/2)","equation":"x=3.5*(1/2)","ans":"1.75"}"#;
        let c = parse_corpus(rec, &o).unwrap();
        let vals: Vec<&str> = c.problems[0].values.iter().map(Literal::text).collect();
        assert_eq!(vals, ["1", "pi", "3.5", "1/2"]);
        assert_eq!(c.problems[0].answer, 1.75);
    }
}
