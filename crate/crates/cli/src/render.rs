//! One row per iteration. Tokens committed in that iteration carry their
//! probability; earlier tokens are shown plainly and masked positions as `_`.

use std::collections::HashMap;
use std::fmt::Write;

use cmlm_core::corpus::format_tokens;
use cmlm_core::DecodeTrace;

use crate::args::RenderFormat;

enum Cell {
    Masked,
    Kept(u32),
    New(u32, f64),
}

fn rows(trace: &DecodeTrace) -> anyhow::Result<Vec<Vec<Cell>>> {
    let states = trace.replay()?;
    Ok(trace
        .steps
        .iter()
        .zip(&states[1..])
        .map(|(step, state)| {
            let fresh: HashMap<usize, f64> = step.unmask.iter().map(|u| (u.position, u.prob)).collect();
            (0..trace.n)
                .map(|i| match (state.token(i), fresh.get(&i)) {
                    (None, _) => Cell::Masked,
                    (Some(t), Some(&p)) => Cell::New(t, p),
                    (Some(t), None) => Cell::Kept(t),
                })
                .collect()
        })
        .collect())
}

pub fn render(trace: &DecodeTrace, format: RenderFormat) -> anyhow::Result<String> {
    match format {
        RenderFormat::Text => text(trace),
        RenderFormat::Html => html(trace),
    }
}

fn text(trace: &DecodeTrace) -> anyhow::Result<String> {
    let mut out = String::new();
    writeln!(out, "# source: {}", format_tokens(&trace.source))?;
    writeln!(
        out,
        "# n={} iterations={} final: {}",
        trace.n,
        trace.iterations(),
        format_tokens(&trace.final_tokens)
    )?;
    for (t, row) in rows(trace)?.iter().enumerate() {
        let cells: Vec<String> = row
            .iter()
            .map(|c| match c {
                Cell::Masked => "_".to_string(),
                Cell::Kept(tok) => tok.to_string(),
                Cell::New(tok, p) => format!("{tok}[{p:.3}]"),
            })
            .collect();
        writeln!(out, "{}: {}", t + 1, cells.join(" "))?;
    }
    Ok(out)
}

/// Yellow at probability 1, blue at 0.
fn colour(p: f64) -> String {
    let p = p.clamp(0.0, 1.0);
    let mix = |lo: f64, hi: f64| (lo + (hi - lo) * p).round() as u8;
    format!(
        "#{:02x}{:02x}{:02x}",
        mix(70.0, 255.0),
        mix(110.0, 221.0),
        mix(220.0, 0.0)
    )
}

fn html(trace: &DecodeTrace) -> anyhow::Result<String> {
    let mut out = String::from(
        "<!DOCTYPE html>\n<html>\n<head>\n<meta charset=\"utf-8\">\n<title>decode trace</title>\n<style>\n\
         table { border-collapse: collapse; font-family: monospace; }\n\
         td, th { border: 1px solid #ccc; padding: 2px 6px; text-align: center; }\n\
         td.mask { color: #999; }\n\
         td.kept { color: #666; }\n\
         </style>\n</head>\n<body>\n",
    );
    writeln!(out, "<p>source: {}</p>", format_tokens(&trace.source))?;
    writeln!(out, "<table>")?;
    write!(out, "<tr><th>iteration</th>")?;
    for i in 1..=trace.n {
        write!(out, "<th>{i}</th>")?;
    }
    writeln!(out, "</tr>")?;
    for (t, row) in rows(trace)?.iter().enumerate() {
        write!(out, "<tr><th>{}</th>", t + 1)?;
        for c in row {
            match c {
                Cell::Masked => write!(out, "<td class=\"mask\">_</td>")?,
                Cell::Kept(tok) => write!(out, "<td class=\"kept\">{tok}</td>")?,
                Cell::New(tok, p) => write!(
                    out,
                    "<td class=\"new\" style=\"background:{}\" title=\"p={p:.3}\">{tok}</td>",
                    colour(*p)
                )?,
            }
        }
        writeln!(out, "</tr>")?;
    }
    writeln!(out, "</table>\n</body>\n</html>")?;
    Ok(out)
}
