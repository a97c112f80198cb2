//! Byte-level lossless back-ends applied to the Huffman payload.
//!
//! `rle` and `lz` outputs start with a flag byte: 0 = coded, 1 = stored raw.
//! Raw storage is chosen whenever coding would not shrink the input.

use crate::error::{Error, Result};

use super::Lossless;

const FLAG_CODED: u8 = 0;
const FLAG_RAW: u8 = 1;

pub fn lossless_encode(payload: &[u8], choice: Lossless) -> Vec<u8> {
    let coded = match choice {
        Lossless::None => return payload.to_vec(),
        Lossless::Rle => rle_encode(payload),
        Lossless::Lz => lz_encode(payload),
    };
    let mut out = Vec::with_capacity(coded.len().min(payload.len()) + 1);
    if coded.len() < payload.len() {
        out.push(FLAG_CODED);
        out.extend_from_slice(&coded);
    } else {
        out.push(FLAG_RAW);
        out.extend_from_slice(payload);
    }
    out
}

pub fn lossless_decode(bytes: &[u8], choice: Lossless) -> Result<Vec<u8>> {
    if choice == Lossless::None {
        return Ok(bytes.to_vec());
    }
    let (&flag, body) = bytes
        .split_first()
        .ok_or_else(|| Error::Corrupt("empty lossless block".into()))?;
    match flag {
        FLAG_RAW => Ok(body.to_vec()),
        FLAG_CODED => match choice {
            Lossless::Rle => rle_decode(body),
            Lossless::Lz => lz_decode(body),
            Lossless::None => unreachable!(),
        },
        f => Err(Error::Corrupt(format!("unknown lossless flag {f}"))),
    }
}

fn put_varint(out: &mut Vec<u8>, mut v: usize) {
    while v >= 0x80 {
        out.push((v as u8) | 0x80);
        v >>= 7;
    }
    out.push(v as u8);
}

fn get_varint(bytes: &[u8], pos: &mut usize) -> Result<usize> {
    let mut v = 0usize;
    let mut shift = 0;
    loop {
        let b = *bytes
            .get(*pos)
            .ok_or_else(|| Error::Corrupt("truncated varint".into()))?;
        *pos += 1;
        if shift > 56 {
            return Err(Error::Corrupt("varint overflow".into()));
        }
        v |= ((b & 0x7f) as usize) << shift;
        if b & 0x80 == 0 {
            return Ok(v);
        }
        shift += 7;
    }
}

const RLE_MIN_RUN: usize = 3;

/// Control byte `0x00..=0x7f`: that many plus one literal bytes follow.
/// Control byte `0x80`: a varint run length, then the repeated byte.
fn rle_encode(input: &[u8]) -> Vec<u8> {
    let mut out = Vec::new();
    let mut lit_start = 0;
    let mut i = 0;
    let flush_literals = |out: &mut Vec<u8>, lits: &[u8]| {
        for chunk in lits.chunks(128) {
            out.push((chunk.len() - 1) as u8);
            out.extend_from_slice(chunk);
        }
    };
    while i < input.len() {
        let b = input[i];
        let mut j = i + 1;
        while j < input.len() && input[j] == b {
            j += 1;
        }
        if j - i >= RLE_MIN_RUN {
            flush_literals(&mut out, &input[lit_start..i]);
            out.push(0x80);
            put_varint(&mut out, j - i);
            out.push(b);
            lit_start = j;
        }
        i = j;
    }
    flush_literals(&mut out, &input[lit_start..]);
    out
}

fn rle_decode(body: &[u8]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    let mut pos = 0;
    while pos < body.len() {
        let ctl = body[pos];
        pos += 1;
        if ctl < 0x80 {
            let n = ctl as usize + 1;
            let lits = body
                .get(pos..pos + n)
                .ok_or_else(|| Error::Corrupt("truncated RLE literals".into()))?;
            out.extend_from_slice(lits);
            pos += n;
        } else if ctl == 0x80 {
            let n = get_varint(body, &mut pos)?;
            let b = *body
                .get(pos)
                .ok_or_else(|| Error::Corrupt("truncated RLE run".into()))?;
            pos += 1;
            out.resize(out.len() + n, b);
        } else {
            return Err(Error::Corrupt(format!("bad RLE control byte {ctl:#x}")));
        }
    }
    Ok(out)
}

const LZ_MIN_MATCH: usize = 4;
const LZ_WINDOW: usize = 65_535;
const LZ_HASH_BITS: u32 = 16;

#[inline]
fn read_u32(b: &[u8], i: usize) -> u32 {
    u32::from_le_bytes([b[i], b[i + 1], b[i + 2], b[i + 3]])
}

#[inline]
fn hash4(v: u32) -> usize {
    (v.wrapping_mul(2_654_435_761) >> (32 - LZ_HASH_BITS)) as usize
}

fn put_len_ext(out: &mut Vec<u8>, mut rest: usize) {
    while rest >= 255 {
        out.push(255);
        rest -= 255;
    }
    out.push(rest as u8);
}

fn get_len_ext(body: &[u8], pos: &mut usize, nibble: usize) -> Result<usize> {
    let mut n = nibble;
    if nibble == 15 {
        loop {
            let b = *body
                .get(*pos)
                .ok_or_else(|| Error::Corrupt("truncated LZ length".into()))?;
            *pos += 1;
            n += b as usize;
            if b != 255 {
                break;
            }
        }
    }
    Ok(n)
}

fn emit_sequence(out: &mut Vec<u8>, literals: &[u8], matched: Option<(usize, usize)>) {
    let lit = literals.len();
    let mlen = matched.map_or(0, |(_, l)| l - LZ_MIN_MATCH);
    out.push(((lit.min(15) as u8) << 4) | mlen.min(15) as u8);
    if lit >= 15 {
        put_len_ext(out, lit - 15);
    }
    out.extend_from_slice(literals);
    if let Some((offset, _)) = matched {
        out.extend_from_slice(&(offset as u16).to_le_bytes());
        if mlen >= 15 {
            put_len_ext(out, mlen - 15);
        }
    }
}

/// Greedy single-pass matcher over a 64 KiB window with 4-byte minimum
/// matches. Sequences are `token | literal length ext | literals | offset u16
/// | match length ext`; the final sequence carries literals only.
fn lz_encode(input: &[u8]) -> Vec<u8> {
    let n = input.len();
    let mut out = Vec::with_capacity(n / 2 + 16);
    let mut table = vec![u32::MAX; 1 << LZ_HASH_BITS];
    let mut anchor = 0;
    let mut i = 0;
    while i + LZ_MIN_MATCH <= n {
        let v = read_u32(input, i);
        let h = hash4(v);
        let cand = table[h];
        table[h] = i as u32;
        if cand != u32::MAX {
            let c = cand as usize;
            if i - c <= LZ_WINDOW && read_u32(input, c) == v {
                let mut len = LZ_MIN_MATCH;
                while i + len < n && input[c + len] == input[i + len] {
                    len += 1;
                }
                emit_sequence(&mut out, &input[anchor..i], Some((i - c, len)));
                i += len;
                anchor = i;
                if i >= 2 && i + 2 <= n {
                    // keep the table warm across long matches
                    let p = i - 2;
                    table[hash4(read_u32(input, p.min(n - LZ_MIN_MATCH)))] = p as u32;
                }
                continue;
            }
        }
        i += 1;
    }
    emit_sequence(&mut out, &input[anchor..], None);
    out
}

fn lz_decode(body: &[u8]) -> Result<Vec<u8>> {
    let mut out: Vec<u8> = Vec::with_capacity(body.len() * 2);
    let mut pos = 0;
    loop {
        let token = *body
            .get(pos)
            .ok_or_else(|| Error::Corrupt("truncated LZ token".into()))?;
        pos += 1;
        let lit = get_len_ext(body, &mut pos, (token >> 4) as usize)?;
        let lits = body
            .get(pos..pos + lit)
            .ok_or_else(|| Error::Corrupt("truncated LZ literals".into()))?;
        out.extend_from_slice(lits);
        pos += lit;
        if pos == body.len() {
            return Ok(out);
        }
        let off = body
            .get(pos..pos + 2)
            .map(|b| u16::from_le_bytes([b[0], b[1]]) as usize)
            .ok_or_else(|| Error::Corrupt("truncated LZ offset".into()))?;
        pos += 2;
        let len = get_len_ext(body, &mut pos, (token & 0x0f) as usize)? + LZ_MIN_MATCH;
        if off == 0 || off > out.len() {
            return Err(Error::Corrupt(format!("LZ offset {off} out of range")));
        }
        let start = out.len() - off;
        for k in 0..len {
            let b = out[start + k];
            out.push(b);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zeros_rle_tiny() {
        let enc = lossless_encode(&[0u8; 1000], Lossless::Rle);
        assert!(enc.len() <= 8, "{}", enc.len());
        assert_eq!(lossless_decode(&enc, Lossless::Rle).unwrap(), vec![0u8; 1000]);
    }

    #[test]
    fn random_bytes_stored_raw() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let data: Vec<u8> = (0..5000).map(|_| rng.random()).collect();
        for choice in [Lossless::Rle, Lossless::Lz] {
            let enc = lossless_encode(&data, choice);
            assert_eq!(enc.len(), data.len() + 1);
            assert_eq!(enc[0], FLAG_RAW);
            assert_eq!(lossless_decode(&enc, choice).unwrap(), data);
        }
    }

    #[test]
    fn lz_repetitive_text() {
        let data = b"abcabcabcabcabcabcabcabcabcabc-hello-hello-hello-hello".repeat(50);
        let enc = lossless_encode(&data, Lossless::Lz);
        assert!(enc.len() < data.len() / 5);
        assert_eq!(lossless_decode(&enc, Lossless::Lz).unwrap(), data);
    }

    #[test]
    fn none_is_identity() {
        assert_eq!(lossless_encode(b"xyz", Lossless::None), b"xyz");
    }

    #[test]
    fn corrupt_inputs_error() {
        assert!(lossless_decode(&[], Lossless::Lz).is_err());
        assert!(lossless_decode(&[7, 1, 2], Lossless::Rle).is_err());
        assert!(lossless_decode(&[0, 0xf0], Lossless::Lz).is_err());
        // match referring before the start of output
        assert!(lossless_decode(&[0, 0x10, b'a', 9, 0], Lossless::Lz).is_err());
    }

    #[test]
    fn empty_payload_roundtrips() {
        for choice in [Lossless::None, Lossless::Rle, Lossless::Lz] {
            let enc = lossless_encode(&[], choice);
            assert!(lossless_decode(&enc, choice).unwrap().is_empty());
        }
    }
}
