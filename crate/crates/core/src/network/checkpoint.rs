//! Policy checkpoints: a versioned binary with a JSON topology descriptor
//! followed by the flat little-endian parameter array.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::network::{MlpTopology, NetError, Policy, PolicyKind};

const MAGIC: &[u8; 4] = b"RHCK";
const VERSION: u32 = 1;

/// Provenance carried alongside the parameters.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct TrainMeta {
    pub seed: u64,
    pub epochs: u32,
}

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointHeader {
    kind: PolicyKind,
    n_steps: usize,
    info_dim: usize,
    n_instruments: usize,
    topology: MlpTopology,
    hidden_state: usize,
    n_params: usize,
    meta: TrainMeta,
}

pub fn save_policy(path: &Path, policy: &Policy, meta: TrainMeta) -> Result<(), NetError> {
    let mut w = BufWriter::new(File::create(path).map_err(io_err)?);
    let header = CheckpointHeader {
        kind: policy.kind,
        n_steps: policy.n_steps,
        info_dim: policy.info_dim,
        n_instruments: policy.n_instruments,
        topology: policy.topology.clone(),
        hidden_state: policy.hidden_state,
        n_params: policy.params.len(),
        meta,
    };
    let header_json =
        serde_json::to_vec(&header).map_err(|e| NetError::Shape(format!("encode: {e}")))?;
    w.write_all(MAGIC).map_err(io_err)?;
    w.write_all(&VERSION.to_le_bytes()).map_err(io_err)?;
    w.write_all(&(header_json.len() as u32).to_le_bytes())
        .map_err(io_err)?;
    w.write_all(&header_json).map_err(io_err)?;
    let mut buf = Vec::with_capacity(policy.params.len() * 8);
    for x in &policy.params {
        buf.extend_from_slice(&x.to_le_bytes());
    }
    w.write_all(&buf).map_err(io_err)?;
    w.flush().map_err(io_err)
}

pub fn load_policy(path: &Path) -> Result<(Policy, TrainMeta), NetError> {
    let mut r = BufReader::new(File::open(path).map_err(io_err)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(io_err)?;
    if &magic != MAGIC {
        return Err(NetError::Shape("bad checkpoint magic".into()));
    }
    let mut word = [0u8; 4];
    r.read_exact(&mut word).map_err(io_err)?;
    if u32::from_le_bytes(word) != VERSION {
        return Err(NetError::Shape("unsupported checkpoint version".into()));
    }
    r.read_exact(&mut word).map_err(io_err)?;
    let hlen = u32::from_le_bytes(word) as usize;
    let mut hbytes = vec![0u8; hlen];
    r.read_exact(&mut hbytes).map_err(io_err)?;
    let header: CheckpointHeader =
        serde_json::from_slice(&hbytes).map_err(|e| NetError::Shape(format!("decode: {e}")))?;
    let mut pbytes = vec![0u8; header.n_params * 8];
    r.read_exact(&mut pbytes).map_err(io_err)?;
    let params: Vec<f64> = pbytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let mut policy = Policy::new(
        header.kind,
        header.n_steps,
        header.info_dim,
        header.n_instruments,
        header.topology,
        header.hidden_state.max(1),
        0,
    )?;
    if policy.params.len() != params.len() {
        return Err(NetError::Shape(format!(
            "checkpoint has {} parameters, topology implies {}",
            params.len(),
            policy.params.len()
        )));
    }
    policy.params = params;
    Ok((policy, header.meta))
}

fn io_err(e: std::io::Error) -> NetError {
    NetError::Shape(format!("checkpoint io: {e}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn checkpoint_roundtrip_preserves_parameters() {
        let policy = Policy::standard(PolicyKind::FullyRecurrent, 4, 9);
        let dir = std::env::temp_dir().join(format!("rh-ck-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let file = dir.join("policy.bin");
        let meta = TrainMeta { seed: 9, epochs: 30 };
        save_policy(&file, &policy, meta).unwrap();
        let (back, meta2) = load_policy(&file).unwrap();
        assert_eq!(policy, back);
        assert_eq!(meta2.seed, 9);
        assert_eq!(meta2.epochs, 30);
        std::fs::remove_dir_all(&dir).ok();
    }
}
