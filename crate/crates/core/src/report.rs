//! Static score-sheet reports rendered from a composed [`Judgment`].
//!
//! Values are shown to two decimals. The displayed total is the sum of the
//! displayed TES and PCS subtotals, so the printed sheet always adds up.

use std::fmt::Write as _;

use crate::rubric::{ActionType, Judgment};

/// Hundredths, rounded half away from zero.
fn cents(v: f64) -> i64 {
    (v * 100.0).round() as i64
}

fn show_cents(c: i64) -> String {
    let sign = if c < 0 { "-" } else { "" };
    format!("{sign}{}.{:02}", c.abs() / 100, c.abs() % 100)
}

/// `v` to two decimals; never prints `-0.00`.
pub fn two_decimals(v: f64) -> String {
    show_cents(cents(v))
}

struct Totals {
    tes: i64,
    pcs: i64,
}

impl Totals {
    fn of(j: &Judgment) -> Self {
        Totals {
            tes: cents(j.tes_total),
            pcs: cents(j.pcs_total),
        }
    }

    fn total(&self) -> i64 {
        self.tes + self.pcs
    }
}

fn timeline_codes(j: &Judgment) -> String {
    j.segments
        .iter()
        .flat_map(|s| std::iter::repeat(s.action.code()).take(s.len()))
        .collect()
}

pub fn render_text(j: &Judgment) -> String {
    let t = Totals::of(j);
    let mut s = String::new();
    let _ = writeln!(s, "Performance: {}", j.performance_id);
    let _ = writeln!(s, "Total Score: {}", show_cents(t.total()));
    let _ = writeln!(s);
    let _ = writeln!(
        s,
        "{:>3}  {:<16}{:>8}{:>8}{:>8}",
        "#", "Element", "Base", "GOE", "Score"
    );
    for e in &j.elements {
        let flag = if e.detected { "" } else { "  NOT DETECTED" };
        let _ = writeln!(
            s,
            "{:>3}  {:<16}{:>8}{:>8}{:>8}{flag}",
            e.seq,
            e.name,
            two_decimals(e.base),
            two_decimals(e.goe),
            two_decimals(e.tes)
        );
    }
    let _ = writeln!(s, "TES subtotal: {}", show_cents(t.tes));
    let _ = writeln!(s);
    let _ = writeln!(s, "Program components (factor {:.2})", j.pcs_factor);
    for (name, v) in j.pcs_component_names.iter().zip(&j.pcs_components) {
        let _ = writeln!(s, "     {name:<24}{:>8}", two_decimals(*v));
    }
    let _ = writeln!(s, "PCS subtotal: {}", show_cents(t.pcs));
    let _ = writeln!(s);
    let _ = writeln!(
        s,
        "Timeline (T transition, J jump, S spin, Q step sequence):"
    );
    let _ = writeln!(s, "{}", timeline_codes(j));
    if !j.warnings.is_empty() {
        let _ = writeln!(s);
        let _ = writeln!(s, "Warnings:");
        for w in &j.warnings {
            let _ = writeln!(s, "  - {w}");
        }
    }
    s
}

fn escape(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&#39;"),
            c => out.push(c),
        }
    }
    out
}

fn colour(action: ActionType) -> &'static str {
    match action {
        ActionType::Transition => "#d0d0d0",
        ActionType::Jump => "#e4572e",
        ActionType::Spin => "#17bebb",
        ActionType::StepSequence => "#ffc914",
    }
}

const STYLE: &str = "body{font-family:sans-serif;margin:2em}table{border-collapse:collapse}\
td,th{padding:2px 10px;text-align:right}td.name,th.name{text-align:left}\
tr.missing{color:#b00020}.timeline{display:flex;height:24px;width:100%;max-width:900px}\
.timeline span{display:block;height:100%}";

pub fn render_html(j: &Judgment) -> String {
    let t = Totals::of(j);
    let mut s = String::new();
    let id = escape(&j.performance_id);
    let _ = writeln!(
        s,
        "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><title>{id}</title>"
    );
    let _ = writeln!(s, "<style>{STYLE}</style></head><body>");
    let _ = writeln!(s, "<h1>{id}</h1>");
    let _ = writeln!(
        s,
        "<p class=\"total\">Total Score: <strong>{}</strong></p>",
        show_cents(t.total())
    );
    let _ = writeln!(s, "<table class=\"elements\"><tr><th>#</th><th class=\"name\">Element</th><th>Base</th><th>GOE</th><th>Score</th><th></th></tr>");
    for e in &j.elements {
        let (class, flag) = if e.detected {
            ("", "")
        } else {
            (" class=\"missing\"", "NOT DETECTED")
        };
        let _ = writeln!(
            s,
            "<tr{class}><td>{}</td><td class=\"name\">{}</td><td>{}</td><td>{}</td><td>{}</td><td>{flag}</td></tr>",
            e.seq,
            escape(&e.name),
            two_decimals(e.base),
            two_decimals(e.goe),
            two_decimals(e.tes)
        );
    }
    let _ = writeln!(s, "<tr><th></th><th class=\"name\">TES</th><th></th><th></th><th>{}</th><th></th></tr></table>", show_cents(t.tes));
    let _ = writeln!(s, "<h2>Program components</h2>");
    let _ = writeln!(
        s,
        "<table class=\"components\"><tr><th class=\"name\">Component</th><th>Score</th></tr>"
    );
    for (name, v) in j.pcs_component_names.iter().zip(&j.pcs_components) {
        let _ = writeln!(
            s,
            "<tr><td class=\"name\">{}</td><td>{}</td></tr>",
            escape(name),
            two_decimals(*v)
        );
    }
    let _ = writeln!(
        s,
        "<tr><td class=\"name\">Factor</td><td>{:.2}</td></tr>",
        j.pcs_factor
    );
    let _ = writeln!(
        s,
        "<tr><th class=\"name\">PCS</th><th>{}</th></tr></table>",
        show_cents(t.pcs)
    );
    let _ = writeln!(s, "<h2>Timeline</h2>\n<div class=\"timeline\">");
    for seg in &j.segments {
        let _ = writeln!(
            s,
            "<span style=\"flex:{};background:{}\" title=\"{} {}-{}\"></span>",
            seg.len(),
            colour(seg.action),
            seg.action.name(),
            seg.start,
            seg.end
        );
    }
    let _ = writeln!(s, "</div>");
    if !j.warnings.is_empty() {
        let _ = writeln!(s, "<h2>Warnings</h2><ul>");
        for w in &j.warnings {
            let _ = writeln!(s, "<li>{}</li>", escape(w));
        }
        let _ = writeln!(s, "</ul>");
    }
    let _ = writeln!(s, "</body></html>");
    s
}
