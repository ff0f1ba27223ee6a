//! Deterministic rendering of windows, queries, feedback, and demonstration
//! blocks into prompt text, and extraction of numeric forecasts from model
//! replies.
//!
//! The templates here are normative for the whole artifact: golden tests pin
//! them byte for byte. Numbers are rendered in lowercase scientific notation
//! with six significant digits; zero is always `0.00000e0`.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::marketdata::WindowSample;
use crate::math;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PromptError {
    #[error("no parseable number in reply: {reply:?}")]
    NoNumber { reply: String },
    #[error("feedback error field {stated} does not match |prediction - truth| = {actual}")]
    InconsistentError { stated: f64, actual: f64 },
    #[error("cannot concatenate an empty prompt list")]
    EmptyConcat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptKind {
    Input,
    Query,
    Feedback,
    Demonstration,
    Composite,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptText {
    pub text: String,
    pub kind: PromptKind,
}

/// A forecast value extracted from model output.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedForecast {
    pub value: f64,
    pub raw_span: String,
    /// Set when a negative number was clamped to zero.
    pub clamped: bool,
}

pub const QUERY_TEXT: &str = "Task: predict the next day's realized variance (squared daily log return). Reply with a single number in scientific notation on the last line.";

/// Lowercase scientific notation, six significant digits. Negative zero is
/// normalized so the canonical zero is always `0.00000e0`.
pub fn format_number(v: f64) -> String {
    let v = if v == 0.0 { 0.0 } else { v };
    format!("{:.5e}", v)
}

/// One line per day, chronological, with absolute day indices.
pub fn render_input(window: &WindowSample) -> PromptText {
    let w = window.history.len();
    let start = window.end_index + 1 - w;
    let mut lines = Vec::with_capacity(w);
    for (offset, obs) in window.history.iter().enumerate() {
        lines.push(format!(
            "day {}: log_return={}, realized_variance={}",
            start + offset,
            format_number(obs.log_return),
            format_number(obs.realized_variance)
        ));
    }
    PromptText { text: lines.join("\n"), kind: PromptKind::Input }
}

pub fn render_query() -> PromptText {
    PromptText { text: QUERY_TEXT.to_string(), kind: PromptKind::Query }
}

/// Oracle feedback for one refinement step. The stated error is recomputed
/// and must match exactly.
pub fn render_feedback(
    truth: f64,
    prediction: f64,
    error: f64,
    hint: f64,
) -> Result<PromptText, PromptError> {
    let actual = math::abs(prediction - truth);
    // Exact up to rounding of the caller's own subtraction.
    if math::abs(error - actual) > 1e-12 * (1.0 + actual) {
        return Err(PromptError::InconsistentError { stated: error, actual });
    }
    let text = format!(
        "Ground truth: {}. Your prediction: {}. Absolute error: {}. Hint: consider adjusting toward the recent average realized variance {}. Provide a corrected prediction; reply with a single number on the last line.",
        format_number(truth),
        format_number(prediction),
        format_number(error),
        format_number(hint)
    );
    Ok(PromptText { text, kind: PromptKind::Feedback })
}

/// Demonstration block: the stored prompt text followed by its answer line.
pub fn render_demonstration(prompt_text: &str, value: f64) -> PromptText {
    PromptText {
        text: format!("{}\nanswer: {}", prompt_text, format_number(value)),
        kind: PromptKind::Demonstration,
    }
}

/// Joins parts with a blank-line separator, preserving order.
pub fn concat(parts: &[PromptText]) -> Result<PromptText, PromptError> {
    if parts.is_empty() {
        return Err(PromptError::EmptyConcat);
    }
    let text = parts.iter().map(|p| p.text.as_str()).collect::<Vec<_>>().join("\n\n");
    Ok(PromptText { text, kind: PromptKind::Composite })
}

/// Extracts the last decimal or scientific-notation number from a reply.
/// Negative values clamp to zero with a flag.
pub fn parse_forecast(reply: &str) -> Result<ParsedForecast, PromptError> {
    let mut last: Option<(usize, usize, f64)> = None;
    let bytes = reply.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        if let Some((end, value)) = scan_number(bytes, i) {
            last = Some((i, end, value));
            i = end;
        } else {
            i += 1;
        }
    }
    match last {
        Some((start, end, value)) => {
            let clamped = value < 0.0;
            Ok(ParsedForecast {
                value: if clamped { 0.0 } else { value },
                raw_span: reply[start..end].to_string(),
                clamped,
            })
        }
        None => Err(PromptError::NoNumber { reply: reply.to_string() }),
    }
}

/// Tries to consume a number starting exactly at `start`:
/// [+-]? digits [.digits]? ([eE][+-]?digits)?  or  [+-]? .digits ...
/// Returns the end offset and the parsed value.
fn scan_number(bytes: &[u8], start: usize) -> Option<(usize, f64)> {
    let mut i = start;
    if i < bytes.len() && (bytes[i] == b'+' || bytes[i] == b'-') {
        i += 1;
    }
    let mantissa_start = i;
    while i < bytes.len() && bytes[i].is_ascii_digit() {
        i += 1;
    }
    if i < bytes.len() && bytes[i] == b'.' {
        i += 1;
        while i < bytes.len() && bytes[i].is_ascii_digit() {
            i += 1;
        }
    }
    // Require at least one mantissa digit.
    if !bytes[mantissa_start..i].iter().any(|b| b.is_ascii_digit()) {
        return None;
    }
    let mantissa_end = i;
    let mut end = mantissa_end;
    if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
        let mut j = i + 1;
        if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
            j += 1;
        }
        let exp_digits_start = j;
        while j < bytes.len() && bytes[j].is_ascii_digit() {
            j += 1;
        }
        if j > exp_digits_start {
            end = j;
        }
    }
    let text = core::str::from_utf8(&bytes[start..end]).ok()?;
    text.parse::<f64>().ok().map(|v| (end, v))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::marketdata::{Date, ReturnObservation};
    use alloc::vec;
    use proptest::prelude::*;

    fn toy_window() -> WindowSample {
        WindowSample {
            end_index: 4,
            history: vec![
                ReturnObservation {
                    date: Date::new(2024, 1, 4),
                    log_return: 0.01,
                    realized_variance: 1e-4,
                },
                ReturnObservation {
                    date: Date::new(2024, 1, 5),
                    log_return: -0.02,
                    realized_variance: 4e-4,
                },
            ],
            target: 2e-4,
        }
    }

    #[test]
    fn input_golden() {
        let p = render_input(&toy_window());
        assert_eq!(p.kind, PromptKind::Input);
        assert_eq!(
            p.text,
            "day 3: log_return=1.00000e-2, realized_variance=1.00000e-4\n\
             day 4: log_return=-2.00000e-2, realized_variance=4.00000e-4"
        );
        // Determinism.
        assert_eq!(render_input(&toy_window()), p);
    }

    #[test]
    fn zero_variance_canonical() {
        let mut w = toy_window();
        w.history[1].log_return = 0.0;
        w.history[1].realized_variance = 0.0;
        assert!(render_input(&w).text.contains("realized_variance=0.00000e0"));
    }

    #[test]
    fn query_golden() {
        let q = render_query();
        assert_eq!(q.text, QUERY_TEXT);
        assert_eq!(render_query(), q);
        assert_eq!(q.kind, PromptKind::Query);
    }

    #[test]
    fn feedback_golden() {
        let f = render_feedback(2e-4, 3e-4, 1e-4, 2.5e-4).unwrap();
        for needle in ["2.00000e-4", "3.00000e-4", "1.00000e-4", "2.50000e-4"] {
            assert!(f.text.contains(needle), "missing {needle} in {}", f.text);
        }
        assert_eq!(f.kind, PromptKind::Feedback);
    }

    #[test]
    fn feedback_checks_error_field() {
        assert!(matches!(
            render_feedback(2e-4, 3e-4, 5e-5, 2.5e-4),
            Err(PromptError::InconsistentError { .. })
        ));
    }

    #[test]
    fn feedback_zero_error() {
        let f = render_feedback(2e-4, 2e-4, 0.0, 2e-4).unwrap();
        assert!(f.text.contains("Absolute error: 0.00000e0"));
    }

    #[test]
    fn concat_rules() {
        let a = PromptText { text: "A".into(), kind: PromptKind::Input };
        let b = PromptText { text: "B".into(), kind: PromptKind::Query };
        let joined = concat(&[a.clone(), b]).unwrap();
        assert_eq!(joined.text, "A\n\nB");
        assert_eq!(joined.kind, PromptKind::Composite);
        let single = concat(&[a]).unwrap();
        assert_eq!(single.text, "A");
        assert_eq!(single.kind, PromptKind::Composite);
        assert!(concat(&[]).is_err());
    }

    #[test]
    fn concat_associative() {
        let p = |s: &str| PromptText { text: s.into(), kind: PromptKind::Input };
        let left = concat(&[concat(&[p("x"), p("y")]).unwrap(), p("z")]).unwrap();
        let right = concat(&[p("x"), concat(&[p("y"), p("z")]).unwrap()]).unwrap();
        assert_eq!(left.text, right.text);
    }

    #[test]
    fn parse_basics() {
        assert_eq!(parse_forecast("0.000123").unwrap().value, 1.23e-4);
        let p = parse_forecast("Forecast: roughly 2.5e-4 tomorrow.").unwrap();
        assert_eq!(p.value, 2.5e-4);
        assert_eq!(p.raw_span, "2.5e-4");
        assert!(parse_forecast("I cannot forecast.").is_err());
    }

    #[test]
    fn parse_last_number_wins() {
        let p = parse_forecast("inputs were 1e-4 and 2e-4\nanswer: 3.25e-4").unwrap();
        assert_eq!(p.value, 3.25e-4);
    }

    #[test]
    fn parse_clamps_negative() {
        let p = parse_forecast("my estimate is -2.0e-4").unwrap();
        assert_eq!(p.value, 0.0);
        assert!(p.clamped);
    }

    #[test]
    fn parse_bare_exponent_not_number() {
        // "3e" has no exponent digits; the match stops at the mantissa.
        assert_eq!(parse_forecast("value 3e").unwrap().value, 3.0);
    }

    #[test]
    fn demonstration_block() {
        let d = render_demonstration("day 1: x", 2e-4);
        assert_eq!(d.text, "day 1: x\nanswer: 2.00000e-4");
        assert_eq!(d.kind, PromptKind::Demonstration);
    }

    proptest! {
        #[test]
        fn render_parse_round_trip(v in 0.0f64..1.0) {
            // Round to 6 significant digits via the template, then parse.
            let rendered = format_number(v);
            let parsed = parse_forecast(&alloc::format!("answer: {rendered}")).unwrap();
            let tolerance = if v == 0.0 { 0.0 } else { v * 1e-5 };
            prop_assert!((parsed.value - v).abs() <= tolerance);
        }

        #[test]
        fn no_locale_formatting(v in -1.0e6f64..1.0e6) {
            let s = format_number(v);
            prop_assert!(!s.contains(','));
            prop_assert!(s.chars().all(|c| c.is_ascii_digit() || c == '.' || c == 'e' || c == '-' || c == '+'));
        }
    }
}
