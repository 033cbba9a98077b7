//! Protocol fixture for the external scorer bridge.
//!
//! Usage: `cmlm-stub-scorer <mode> [vocab_size]`
//!
//! - `peaked`: position `i` puts 0.6 on `(i + sum(src)) mod V`, the rest spread evenly
//! - `uniform`: uniform over the vocabulary
//! - `bad-sum`: every probability is 0.9
//! - `wrong-id`: replies with `id + 1`
//! - `garbage`: replies with a non-JSON line
//! - `error`: replies with an error object
//! - `silent`: handshakes, then never answers
//! - `no-handshake`: never prints the handshake
//! - `bad-proto`: handshakes with the wrong protocol name

use std::io::{BufRead, Write};

use serde_json::{json, Value};

fn distribution(mode: &str, src: &[u64], pos: usize, v: usize) -> Vec<(usize, f64)> {
    match mode {
        "uniform" => (0..v).map(|t| (t, 1.0 / v as f64)).collect(),
        "bad-sum" => (0..v).map(|t| (t, 0.9)).collect(),
        _ => {
            let peak = (pos + src.iter().sum::<u64>() as usize) % v;
            let rest = 0.4 / (v - 1) as f64;
            (0..v).map(|t| (t, if t == peak { 0.6 } else { rest })).collect()
        }
    }
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let mode = args.get(1).map(String::as_str).unwrap_or("peaked").to_string();
    let v: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(4);
    let stdin = std::io::stdin();
    let mut out = std::io::stdout().lock();

    if mode == "no-handshake" {
        for _ in stdin.lock().lines() {}
        return;
    }
    let proto = if mode == "bad-proto" { "other" } else { "cmlm-scorer" };
    writeln!(out, "{}", json!({"proto": proto, "version": 1, "vocab_size": v})).unwrap();
    out.flush().unwrap();

    for line in stdin.lock().lines() {
        let Ok(line) = line else { break };
        let req: Value = match serde_json::from_str(&line) {
            Ok(r) => r,
            Err(_) => break,
        };
        let id = req["id"].as_u64().unwrap_or(0);
        let topk = req["topk"].as_u64().unwrap_or(v as u64) as usize;
        let src: Vec<u64> = req["src"]
            .as_array()
            .map(|a| a.iter().filter_map(Value::as_u64).collect())
            .unwrap_or_default();
        let tgt = req["tgt"].as_array().cloned().unwrap_or_default();
        let reply = match mode.as_str() {
            "silent" => continue,
            "garbage" => "this is not json".to_string(),
            "error" => json!({"id": id, "error": "stub failure"}).to_string(),
            _ => {
                let preds: Vec<Value> = tgt
                    .iter()
                    .enumerate()
                    .filter(|(_, t)| t.is_null())
                    .map(|(pos, _)| {
                        let mut dist = distribution(&mode, &src, pos, v);
                        dist.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
                        dist.truncate(topk.max(1));
                        json!({"pos": pos, "dist": dist})
                    })
                    .collect();
                let id = if mode == "wrong-id" { id + 1 } else { id };
                json!({"id": id, "preds": preds}).to_string()
            }
        };
        if writeln!(out, "{reply}").and_then(|_| out.flush()).is_err() {
            break;
        }
    }
}
