//! Bank file format: magic `HBNK`, version u16, algo u8, bits u16,
//! count u64, then `count * words` packed hashes as little-endian u64, then
//! the id table as u32 length-prefixed UTF-8 strings in entry order.

use std::fs;
use std::path::Path;

use super::{EvalError, HashBank};
use crate::hashes::{BitHash, HashAlgo, HashSpec};

const MAGIC: &[u8; 4] = b"HBNK";
const VERSION: u16 = 1;

fn algo_code(algo: HashAlgo) -> u8 {
    match algo {
        HashAlgo::AHash => 0,
        HashAlgo::DHash => 1,
        HashAlgo::PHash => 2,
    }
}

fn algo_from_code(code: u8) -> Option<HashAlgo> {
    match code {
        0 => Some(HashAlgo::AHash),
        1 => Some(HashAlgo::DHash),
        2 => Some(HashAlgo::PHash),
        _ => None,
    }
}

pub fn save_bank(bank: &HashBank, path: &Path) -> Result<(), EvalError> {
    let io = |source| EvalError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.push(algo_code(bank.spec().algo()));
    buf.extend_from_slice(&(bank.spec().bits() as u16).to_le_bytes());
    buf.extend_from_slice(&(bank.len() as u64).to_le_bytes());
    for word in bank.packed_words() {
        buf.extend_from_slice(&word.to_le_bytes());
    }
    for id in bank.ids() {
        buf.extend_from_slice(&(id.len() as u32).to_le_bytes());
        buf.extend_from_slice(id.as_bytes());
    }
    let tmp = path.with_extension("hbnk.tmp");
    fs::write(&tmp, &buf).map_err(io)?;
    fs::rename(&tmp, path).map_err(io)
}

pub fn load_bank(path: &Path) -> Result<HashBank, EvalError> {
    let bytes = fs::read(path).map_err(|source| EvalError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let bad = |reason: &str| EvalError::BadBankFile {
        path: path.display().to_string(),
        reason: reason.to_string(),
    };
    if bytes.len() < 17 || &bytes[0..4] != MAGIC {
        return Err(bad("missing HBNK magic"));
    }
    if u16::from_le_bytes([bytes[4], bytes[5]]) != VERSION {
        return Err(bad("unsupported version"));
    }
    let algo = algo_from_code(bytes[6]).ok_or_else(|| bad("unknown algorithm code"))?;
    let bits = u16::from_le_bytes([bytes[7], bytes[8]]) as usize;
    let spec = HashSpec::new(algo, bits).map_err(|e| bad(&e.to_string()))?;
    let count = u64::from_le_bytes(bytes[9..17].try_into().unwrap()) as usize;

    let words_per_hash = bits.div_ceil(64);
    let mut pos = 17;
    let hash_bytes = count * words_per_hash * 8;
    if bytes.len() < pos + hash_bytes {
        return Err(bad("truncated hash table"));
    }
    let mut hashes = Vec::with_capacity(count);
    for _ in 0..count {
        let mut bits_vec = vec![false; bits];
        for w in 0..words_per_hash {
            let word = u64::from_le_bytes(bytes[pos..pos + 8].try_into().unwrap());
            pos += 8;
            for (j, slot) in bits_vec.iter_mut().skip(w * 64).take(64).enumerate() {
                *slot = (word >> j) & 1 == 1;
            }
        }
        hashes.push(BitHash::from_bits(&bits_vec));
    }

    let mut ids = Vec::with_capacity(count);
    for _ in 0..count {
        if bytes.len() < pos + 4 {
            return Err(bad("truncated id table"));
        }
        let len = u32::from_le_bytes(bytes[pos..pos + 4].try_into().unwrap()) as usize;
        pos += 4;
        if bytes.len() < pos + len {
            return Err(bad("truncated id entry"));
        }
        let id = std::str::from_utf8(&bytes[pos..pos + len])
            .map_err(|_| bad("id is not valid UTF-8"))?
            .to_string();
        pos += len;
        ids.push(id);
    }
    if pos != bytes.len() {
        return Err(bad("trailing bytes after id table"));
    }
    Ok(HashBank::from_entries(
        spec,
        ids.into_iter().zip(hashes).collect(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corrupt_files_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bank.hbnk");
        fs::write(&path, b"NOPE").unwrap();
        assert!(matches!(
            load_bank(&path),
            Err(EvalError::BadBankFile { .. })
        ));
        fs::write(&path, b"HBNK\x01\x00\x09").unwrap();
        assert!(load_bank(&path).is_err());
    }
}
