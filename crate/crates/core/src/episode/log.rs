//! Episode logs: a header line followed by one JSON line per decision.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::{DecisionLog, EpisodeResult};

pub const EPISODE_LOG_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    version: u32,
    #[serde(flatten)]
    result: EpisodeResult,
}

/// Write the episode summary (without decisions) and then each decision.
pub fn write_episode_log<W: Write>(mut out: W, result: &EpisodeResult) -> std::io::Result<()> {
    let mut head = result.clone();
    head.decisions.clear();
    let header = Header {
        version: EPISODE_LOG_VERSION,
        result: head,
    };
    serde_json::to_writer(&mut out, &header)?;
    out.write_all(b"\n")?;
    for d in &result.decisions {
        serde_json::to_writer(&mut out, d)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_episode_log<R: BufRead>(input: R) -> Result<EpisodeResult, String> {
    let mut lines = input.lines();
    let first = lines
        .next()
        .ok_or("empty episode log")?
        .map_err(|e| e.to_string())?;
    let header: Header = serde_json::from_str(&first).map_err(|e| e.to_string())?;
    if header.version != EPISODE_LOG_VERSION {
        return Err(format!(
            "unsupported episode log version {}",
            header.version
        ));
    }
    let mut result = header.result;
    for line in lines {
        let line = line.map_err(|e| e.to_string())?;
        if line.trim().is_empty() {
            continue;
        }
        let d: DecisionLog = serde_json::from_str(&line).map_err(|e| e.to_string())?;
        result.decisions.push(d);
    }
    Ok(result)
}
