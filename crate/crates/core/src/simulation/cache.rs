//! Binary path cache: a small self-describing header (magic, version, shape,
//! field list, market config) followed by flat little-endian f64 arrays.
//! A CSV exporter is provided for debugging and plotting.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::market::MarketConfig;
use crate::simulation::{PathSet, SimError};

const MAGIC: &[u8; 4] = b"RHPC";
const VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct CacheHeader {
    n_paths: u64,
    n_steps: u64,
    fields: Vec<FieldDesc>,
    market: MarketConfig,
}

#[derive(Debug, Serialize, Deserialize)]
struct FieldDesc {
    name: String,
    rows: u64,
    cols: u64,
}

fn field_list(set: &PathSet) -> Vec<FieldDesc> {
    let p = set.n_paths() as u64;
    let n = set.n_steps() as u64;
    let has_payoff = set.payoff().is_some();
    let mut fields = vec![
        FieldDesc { name: "t".into(), rows: 1, cols: n + 1 },
        FieldDesc { name: "S".into(), rows: p, cols: n + 1 },
        FieldDesc { name: "V".into(), rows: p, cols: n + 1 },
        FieldDesc { name: "FV".into(), rows: p, cols: n + 1 },
        FieldDesc { name: "dW".into(), rows: p, cols: n },
        FieldDesc { name: "dB".into(), rows: p, cols: n },
    ];
    if has_payoff {
        fields.push(FieldDesc { name: "payoff".into(), rows: p, cols: 1 });
    }
    fields
}

pub fn write_path_cache(path: &Path, set: &PathSet) -> Result<(), SimError> {
    let mut w = BufWriter::new(File::create(path)?);
    let header = CacheHeader {
        n_paths: set.n_paths() as u64,
        n_steps: set.n_steps() as u64,
        fields: field_list(set),
        market: *set.market(),
    };
    let header_json = serde_json::to_vec(&header)
        .map_err(|e| SimError::CacheFormat(format!("header encode: {e}")))?;
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(header_json.len() as u32).to_le_bytes())?;
    w.write_all(&header_json)?;
    let (s, v, fv, dw, db, payoff) = set.raw_columns();
    write_f64s(&mut w, set.grid())?;
    write_f64s(&mut w, s)?;
    write_f64s(&mut w, v)?;
    write_f64s(&mut w, fv)?;
    write_f64s(&mut w, dw)?;
    write_f64s(&mut w, db)?;
    if !payoff.is_empty() {
        write_f64s(&mut w, payoff)?;
    }
    w.flush()?;
    Ok(())
}

fn write_f64s(w: &mut impl Write, xs: &[f64]) -> std::io::Result<()> {
    // chunked conversion keeps memory bounded on large batches
    let mut buf = Vec::with_capacity(8 * 8192.min(xs.len().max(1)));
    for chunk in xs.chunks(8192) {
        buf.clear();
        for x in chunk {
            buf.extend_from_slice(&x.to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    Ok(())
}

fn read_f64s(r: &mut impl Read, len: usize) -> Result<Vec<f64>, SimError> {
    let mut bytes = vec![0u8; len * 8];
    r.read_exact(&mut bytes)?;
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

pub fn read_path_cache(path: &Path) -> Result<PathSet, SimError> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(SimError::CacheFormat("bad magic".into()));
    }
    let mut word = [0u8; 4];
    r.read_exact(&mut word)?;
    let version = u32::from_le_bytes(word);
    if version != VERSION {
        return Err(SimError::CacheFormat(format!(
            "unsupported version {version}"
        )));
    }
    r.read_exact(&mut word)?;
    let header_len = u32::from_le_bytes(word) as usize;
    let mut header_bytes = vec![0u8; header_len];
    r.read_exact(&mut header_bytes)?;
    let header: CacheHeader = serde_json::from_slice(&header_bytes)
        .map_err(|e| SimError::CacheFormat(format!("header decode: {e}")))?;
    let mut arrays = Vec::with_capacity(header.fields.len());
    for f in &header.fields {
        arrays.push((f.name.clone(), read_f64s(&mut r, (f.rows * f.cols) as usize)?));
    }
    let take = |name: &str| -> Result<Vec<f64>, SimError> {
        arrays
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, a)| a.clone())
            .ok_or_else(|| SimError::CacheFormat(format!("missing field {name}")))
    };
    let mut set = PathSet::from_raw(
        header.market,
        take("t")?,
        take("S")?,
        take("V")?,
        take("FV")?,
        take("dW")?,
        take("dB")?,
    )?;
    if let Ok(payoff) = take("payoff") {
        set.set_payoff(payoff)?;
    }
    Ok(set)
}

/// Plot-ready long-format dump: one row per (path, step).
pub fn write_paths_csv(out: &mut impl Write, set: &PathSet) -> std::io::Result<()> {
    writeln!(out, "path_id,step,t,S,V,FV")?;
    for p in 0..set.n_paths() {
        let (s, v, fv) = (set.stock(p), set.variance(p), set.forward_variance(p));
        for k in 0..=set.n_steps() {
            writeln!(
                out,
                "{p},{k},{:.12e},{:.12e},{:.12e},{:.12e}",
                set.grid()[k],
                s[k],
                v[k],
                fv[k]
            )?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulation::simulate_rbergomi;

    #[test]
    fn cache_roundtrip_is_bit_exact() {
        let cfg = MarketConfig::default();
        let mut set = simulate_rbergomi(&cfg, 7).unwrap();
        set.set_payoff((0..7).map(|i| i as f64).collect()).unwrap();
        let dir = std::env::temp_dir().join(format!("rh-cache-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let file = dir.join("paths.bin");
        write_path_cache(&file, &set).unwrap();
        let back = read_path_cache(&file).unwrap();
        assert_eq!(set, back);
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn csv_export_has_row_per_path_step() {
        let cfg = MarketConfig::default();
        let set = simulate_rbergomi(&cfg, 3).unwrap();
        let mut buf = Vec::new();
        write_paths_csv(&mut buf, &set).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let rows = text.lines().count();
        assert_eq!(rows, 1 + 3 * (set.n_steps() + 1));
        assert!(text.starts_with("path_id,step,t,S,V,FV"));
    }
}
