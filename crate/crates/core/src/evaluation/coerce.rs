//! Typing of free-text answers: boolean, number, trend, or text.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnswerType {
    Boolean,
    Trend,
    Number,
    Text,
}

impl AnswerType {
    pub fn as_str(self) -> &'static str {
        match self {
            AnswerType::Boolean => "boolean",
            AnswerType::Trend => "trend",
            AnswerType::Number => "number",
            AnswerType::Text => "text",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Trend {
    Increasing,
    Decreasing,
    Stable,
}

impl Trend {
    pub fn as_str(self) -> &'static str {
        match self {
            Trend::Increasing => "increasing",
            Trend::Decreasing => "decreasing",
            Trend::Stable => "stable",
        }
    }
}

/// A raw answer with exactly one typed payload matching `answer_type`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypedAnswer {
    pub raw: String,
    pub answer_type: AnswerType,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bool_value: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trend_value: Option<Trend>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub number_value: Option<f64>,
    /// Display-only unit text around a number, e.g. `$ per barrel`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unit: Option<String>,
}

impl TypedAnswer {
    fn text(raw: &str) -> Self {
        Self { raw: raw.to_string(), answer_type: AnswerType::Text, bool_value: None, trend_value: None, number_value: None, unit: None }
    }

    /// Canonical text of the typed payload.
    pub fn render(&self) -> String {
        match self.answer_type {
            AnswerType::Boolean => self.bool_value.unwrap_or(false).to_string(),
            AnswerType::Trend => self.trend_value.map(Trend::as_str).unwrap_or("stable").to_string(),
            AnswerType::Number => {
                let n = self.number_value.unwrap_or(0.0);
                match self.unit.as_deref() {
                    Some(u) if !u.is_empty() => format!("{n} {u}"),
                    _ => n.to_string(),
                }
            }
            AnswerType::Text => self.raw.clone(),
        }
    }
}

impl fmt::Display for TypedAnswer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

/// Keyword families mapping words to trends.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrendLexicon {
    pub version: u32,
    words: BTreeMap<String, Trend>,
}

#[derive(Deserialize)]
struct LexiconFile {
    version: u32,
    families: BTreeMap<Trend, Vec<String>>,
}

const BUNDLED_LEXICON: &str = include_str!("../../data/trend_lexicon.toml");

impl TrendLexicon {
    pub fn from_toml_str(text: &str) -> Result<Self, String> {
        let file: LexiconFile = toml::from_str(text).map_err(|e| e.to_string())?;
        let mut words = BTreeMap::new();
        for (trend, list) in file.families {
            for w in list {
                if let Some(prev) = words.insert(w.to_lowercase(), trend) {
                    if prev != trend {
                        return Err(format!("`{w}` belongs to two families"));
                    }
                }
            }
        }
        Ok(Self { version: file.version, words })
    }

    /// The lexicon shipped in `data/trend_lexicon.toml`.
    pub fn bundled() -> &'static TrendLexicon {
        static LEX: OnceLock<TrendLexicon> = OnceLock::new();
        LEX.get_or_init(|| TrendLexicon::from_toml_str(BUNDLED_LEXICON).expect("bundled lexicon is valid"))
    }

    /// Trend of the first keyword found in `text`.
    pub fn classify(&self, text: &str) -> Option<Trend> {
        text.to_lowercase()
            .split(|c: char| !c.is_alphabetic())
            .find_map(|w| self.words.get(w).copied())
    }
}

const CURRENCY: [char; 4] = ['$', '€', '£', '¥'];
const TEMPORAL: [&str; 12] = ["since", "in", "by", "from", "until", "till", "before", "after", "during", "of", "to", "through"];

struct NumberToken {
    value: f64,
    currency: Option<char>,
    suffix: String,
    integral: bool,
}

/// Parses a numeric prefix of one whitespace token, e.g. `$1,337.5`, `-2e3`, `5%`.
fn parse_token(token: &str) -> Option<NumberToken> {
    let t = token.trim_start_matches(['(', '"', '\'', '[']);
    let chars: Vec<char> = t.chars().collect();
    let mut i = 0;
    let mut currency = None;
    let mut negative = false;
    for _ in 0..2 {
        match chars.get(i) {
            Some(c) if CURRENCY.contains(c) && currency.is_none() => {
                currency = Some(*c);
                i += 1;
            }
            Some('-') | Some('+') if !negative && chars.get(i + 1).is_some_and(|c| c.is_ascii_digit() || CURRENCY.contains(c) || *c == '.') => {
                negative = chars[i] == '-';
                i += 1;
            }
            _ => {}
        }
    }
    let mut digits = String::new();
    let start = i;
    while i < chars.len() {
        let c = chars[i];
        if c.is_ascii_digit() {
            digits.push(c);
            i += 1;
        } else if c == ',' && !digits.is_empty() && chars.len() >= i + 4 && chars[i + 1..i + 4].iter().all(char::is_ascii_digit)
            && chars.get(i + 4).is_none_or(|c| !c.is_ascii_digit())
        {
            i += 1;
        } else {
            break;
        }
    }
    let mut integral = true;
    if chars.get(i) == Some(&'.') && chars.get(i + 1).is_some_and(char::is_ascii_digit) {
        integral = false;
        digits.push('.');
        i += 1;
        while i < chars.len() && chars[i].is_ascii_digit() {
            digits.push(chars[i]);
            i += 1;
        }
    }
    if digits.is_empty() || digits == "." || i == start {
        return None;
    }
    if matches!(chars.get(i), Some('e') | Some('E')) {
        let mut j = i + 1;
        let mut exp = String::from("e");
        if matches!(chars.get(j), Some('+') | Some('-')) {
            exp.push(chars[j]);
            j += 1;
        }
        let exp_start = j;
        while j < chars.len() && chars[j].is_ascii_digit() {
            exp.push(chars[j]);
            j += 1;
        }
        if j > exp_start {
            digits.push_str(&exp);
            integral = false;
            i = j;
        }
    }
    let mut value: f64 = digits.parse().ok()?;
    if negative {
        value = -value;
    }
    let suffix: String = chars[i..].iter().collect();
    let suffix = suffix.trim_end_matches(['.', ',', ';', ':', ')', '"', '\'', ']', '!', '?']).to_string();
    Some(NumberToken { value, currency, suffix, integral })
}

fn is_year_like(tok: &NumberToken) -> bool {
    tok.integral && tok.currency.is_none() && tok.suffix.is_empty() && (1800.0..=2199.0).contains(&tok.value)
}

fn coerce_number(raw: &str) -> Option<(f64, String)> {
    let tokens: Vec<&str> = raw.split_whitespace().collect();
    for (i, token) in tokens.iter().enumerate() {
        let Some(tok) = parse_token(token) else { continue };
        let after_temporal = i > 0 && TEMPORAL.contains(&tokens[i - 1].to_lowercase().as_str());
        if after_temporal && is_year_like(&tok) {
            continue;
        }
        let mut trailing: Vec<String> = Vec::new();
        if !tok.suffix.is_empty() {
            trailing.push(tok.suffix.clone());
        }
        trailing.extend(tokens[i + 1..].iter().map(|s| s.to_string()));
        let trailing = trailing.join(" ");
        let trailing = trailing.trim().trim_end_matches(['.', ',', ';', ':', '!', '?']).trim().to_string();
        let unit = match (tok.currency, trailing.is_empty()) {
            (Some(c), true) => c.to_string(),
            (Some(c), false) => format!("{c} {trailing}"),
            (None, _) => trailing,
        };
        return Some((tok.value, unit));
    }
    None
}

fn coerce_bool(raw: &str) -> Option<bool> {
    match raw.trim().trim_end_matches('.').to_lowercase().as_str() {
        "true" | "yes" => Some(true),
        "false" | "no" => Some(false),
        _ => None,
    }
}

/// Types a raw answer with the bundled trend lexicon.
pub fn coerce(raw: &str) -> TypedAnswer {
    coerce_with(raw, TrendLexicon::bundled())
}

/// Tries, in order: whole-answer boolean, first numeric token (years after a
/// temporal preposition are skipped), trend keyword, then plain text.
pub fn coerce_with(raw: &str, lexicon: &TrendLexicon) -> TypedAnswer {
    let mut out = TypedAnswer::text(raw);
    if let Some(b) = coerce_bool(raw) {
        out.answer_type = AnswerType::Boolean;
        out.bool_value = Some(b);
    } else if let Some((n, unit)) = coerce_number(raw) {
        out.answer_type = AnswerType::Number;
        out.number_value = Some(n);
        out.unit = (!unit.is_empty()).then_some(unit);
    } else if let Some(t) = lexicon.classify(raw) {
        out.answer_type = AnswerType::Trend;
        out.trend_value = Some(t);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spec_examples() {
        let t = coerce("True");
        assert_eq!((t.answer_type, t.bool_value), (AnswerType::Boolean, Some(true)));
        assert_eq!(coerce("lowest level since 2009").answer_type, AnswerType::Text);
        let n = coerce("prices rose to $71.75 per barrel");
        assert_eq!(n.number_value, Some(71.75));
        assert_eq!(n.unit.as_deref(), Some("$ per barrel"));
    }

    #[test]
    fn number_forms() {
        assert_eq!(coerce("1,337 edges").number_value, Some(1337.0));
        assert_eq!(coerce("5%").number_value, Some(5.0));
        assert_eq!(coerce("5%").unit.as_deref(), Some("%"));
        assert_eq!(coerce("about 1.5e3 units").number_value, Some(1500.0));
        assert_eq!(coerce("-$4.2").number_value, Some(-4.2));
        assert_eq!(coerce("in 2020 output was 42").number_value, Some(42.0));
        assert_eq!(coerce("2020").number_value, Some(2020.0));
        assert_eq!(coerce("COVID-19 cases increased").answer_type, AnswerType::Trend);
    }

    #[test]
    fn rendering_is_a_fixed_point() {
        for raw in ["Yes", "prices fell sharply", "$63.27 per barrel", "12%", "lowest level since 2009", "flat"] {
            let once = coerce(raw);
            let twice = coerce(&once.render());
            assert_eq!(once.answer_type, twice.answer_type, "{raw}");
            assert_eq!(once.render(), twice.render(), "{raw}");
        }
    }

    #[test]
    fn lexicon_rejects_conflicting_families() {
        let bad = "version = 1\n[families]\nincreasing = [\"up\"]\ndecreasing = [\"up\"]\n";
        assert!(TrendLexicon::from_toml_str(bad).is_err());
        assert_eq!(TrendLexicon::bundled().version, 1);
    }
}
