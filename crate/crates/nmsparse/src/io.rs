//! Bit-exact tensor file IO.
//!
//! Two formats, auto-detected by extension: the NPY v1.0 container
//! (little-endian '<f8' matrices, '|u1' masks, C order, 2-D shapes,
//! header space-padded to 64-byte alignment) and plain CSV of decimal
//! literals. NPY round-trips are bit-identical.

use crate::error::{Error, Result};
use crate::tensor::{Mask, Matrix};
use std::fs;
use std::path::Path;

const MAGIC: &[u8; 6] = b"\x93NUMPY";

fn npy_header(descr: &str, rows: usize, cols: usize) -> Vec<u8> {
    let dict =
        format!("{{'descr': '{descr}', 'fortran_order': False, 'shape': ({rows}, {cols}), }}");
    // magic(6) + version(2) + header_len(2) + header must be a
    // multiple of 64; the header ends with '\n'.
    let prefix = 10;
    let unpadded = prefix + dict.len() + 1;
    let padded = unpadded.div_ceil(64) * 64;
    let pad = padded - prefix - dict.len() - 1;
    let mut out = Vec::with_capacity(padded);
    out.extend_from_slice(MAGIC);
    out.push(1);
    out.push(0);
    let hlen = (dict.len() + pad + 1) as u16;
    out.extend_from_slice(&hlen.to_le_bytes());
    out.extend_from_slice(dict.as_bytes());
    out.extend(std::iter::repeat_n(b' ', pad));
    out.push(b'\n');
    out
}

struct NpyPayload {
    descr: String,
    rows: usize,
    cols: usize,
    data: Vec<u8>,
    data_offset: u64,
}

fn fmt_err(offset: u64, message: impl Into<String>) -> Error {
    Error::Format {
        offset,
        message: message.into(),
    }
}

fn parse_header_field<'a>(header: &'a str, key: &str, offset: u64) -> Result<&'a str> {
    let pos = header
        .find(key)
        .ok_or_else(|| fmt_err(offset, format!("header missing '{key}'")))?;
    let rest = header[pos + key.len()..].trim_start_matches([':', ' ', '\'']);
    Ok(rest)
}

fn read_npy(path: &Path) -> Result<NpyPayload> {
    let bytes = fs::read(path)?;
    if bytes.len() < 10 || &bytes[0..6] != MAGIC {
        return Err(fmt_err(0, "not an NPY file (bad magic)"));
    }
    if bytes[6] != 1 || bytes[7] != 0 {
        return Err(fmt_err(
            6,
            format!("unsupported NPY version {}.{}", bytes[6], bytes[7]),
        ));
    }
    let hlen = u16::from_le_bytes([bytes[8], bytes[9]]) as usize;
    if bytes.len() < 10 + hlen {
        return Err(fmt_err(10, "truncated header"));
    }
    let header = std::str::from_utf8(&bytes[10..10 + hlen])
        .map_err(|_| fmt_err(10, "header is not ASCII"))?;

    let descr_raw = parse_header_field(header, "'descr'", 10)?;
    let descr: String = descr_raw.chars().take_while(|&c| c != '\'').collect();

    let order = parse_header_field(header, "'fortran_order'", 10)?;
    if order.trim_start().starts_with("True") {
        return Err(fmt_err(10, "fortran_order=True is not supported"));
    }

    let shape_raw = parse_header_field(header, "'shape'", 10)?;
    let open = shape_raw
        .find('(')
        .ok_or_else(|| fmt_err(10, "malformed shape"))?;
    let close = shape_raw
        .find(')')
        .ok_or_else(|| fmt_err(10, "malformed shape"))?;
    let dims: Vec<usize> = shape_raw[open + 1..close]
        .split(',')
        .map(|s| s.trim())
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<usize>()
                .map_err(|_| fmt_err(10, format!("bad shape component '{s}'")))
        })
        .collect::<Result<_>>()?;
    if dims.len() != 2 {
        return Err(fmt_err(
            10,
            format!("expected a 2-D payload, got {}-D", dims.len()),
        ));
    }

    let data_offset = (10 + hlen) as u64;
    Ok(NpyPayload {
        descr,
        rows: dims[0],
        cols: dims[1],
        data: bytes[10 + hlen..].to_vec(),
        data_offset,
    })
}

fn is_npy(path: &Path) -> bool {
    path.extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("npy"))
}

fn parse_csv(path: &Path) -> Result<(usize, usize, Vec<f64>)> {
    let text = fs::read_to_string(path)?;
    let mut rows = 0usize;
    let mut cols = 0usize;
    let mut data = Vec::new();
    let mut offset = 0u64;
    for line in text.lines() {
        let trimmed = line.trim();
        if trimmed.is_empty() {
            offset += line.len() as u64 + 1;
            continue;
        }
        let values: Vec<f64> = trimmed
            .split(',')
            .map(|tok| {
                tok.trim()
                    .parse::<f64>()
                    .map_err(|_| fmt_err(offset, format!("bad numeric literal '{}'", tok.trim())))
            })
            .collect::<Result<_>>()?;
        if rows == 0 {
            cols = values.len();
        } else if values.len() != cols {
            return Err(fmt_err(
                offset,
                format!(
                    "row {} has {} values, expected {cols}",
                    rows + 1,
                    values.len()
                ),
            ));
        }
        rows += 1;
        data.extend(values);
        offset += line.len() as u64 + 1;
    }
    if rows == 0 {
        return Err(fmt_err(0, "empty CSV"));
    }
    Ok((rows, cols, data))
}

/// Load a matrix from NPY ('<f8' or '|u1') or CSV.
pub fn load_matrix(path: &Path) -> Result<Matrix> {
    if !is_npy(path) {
        let (rows, cols, data) = parse_csv(path)?;
        return Matrix::new(rows, cols, data);
    }
    let p = read_npy(path)?;
    let expected = p.rows * p.cols;
    match p.descr.as_str() {
        "<f8" => {
            if p.data.len() != expected * 8 {
                return Err(fmt_err(
                    p.data_offset,
                    format!(
                        "payload is {} bytes, expected {}",
                        p.data.len(),
                        expected * 8
                    ),
                ));
            }
            let data = p
                .data
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            Matrix::new(p.rows, p.cols, data)
        }
        "|u1" => {
            if p.data.len() != expected {
                return Err(fmt_err(
                    p.data_offset,
                    format!("payload is {} bytes, expected {expected}", p.data.len()),
                ));
            }
            Matrix::new(p.rows, p.cols, p.data.iter().map(|&b| b as f64).collect())
        }
        other => Err(fmt_err(10, format!("unsupported dtype '{other}'"))),
    }
}

/// Load a mask: '|u1' NPY, or any matrix file whose entries are 0/1.
pub fn load_mask(path: &Path) -> Result<Mask> {
    let mat = load_matrix(path)?;
    let bits = mat
        .data()
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            if v == 0.0 {
                Ok(0u8)
            } else if v == 1.0 {
                Ok(1u8)
            } else {
                Err(Error::InvalidMask(format!(
                    "mask entry at flat index {i} is {v}, expected 0 or 1"
                )))
            }
        })
        .collect::<Result<Vec<u8>>>()?;
    Mask::new(mat.rows(), mat.cols(), bits)
}

/// Shortest decimal that round-trips, so CSV load(save(x)) is exact.
fn fmt_f64(v: f64) -> String {
    let mut s = format!("{v}");
    if !s.contains(['.', 'e', 'E']) {
        s.push_str(".0");
    }
    s
}

pub fn save_matrix(path: &Path, mat: &Matrix) -> Result<()> {
    if is_npy(path) {
        let mut out = npy_header("<f8", mat.rows(), mat.cols());
        for v in mat.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        fs::write(path, out)?;
    } else {
        let mut text = String::new();
        for i in 0..mat.rows() {
            let row: Vec<String> = mat.row(i).iter().map(|&v| fmt_f64(v)).collect();
            text.push_str(&row.join(","));
            text.push('\n');
        }
        fs::write(path, text)?;
    }
    Ok(())
}

pub fn save_mask(path: &Path, mask: &Mask) -> Result<()> {
    if is_npy(path) {
        let mut out = npy_header("|u1", mask.rows(), mask.cols());
        out.extend_from_slice(mask.bits());
        fs::write(path, out)?;
    } else {
        let mut text = String::new();
        for i in 0..mask.rows() {
            let row: Vec<String> = (0..mask.cols())
                .map(|j| if mask.kept(i, j) { "1" } else { "0" }.to_string())
                .collect();
            text.push_str(&row.join(","));
            text.push('\n');
        }
        fs::write(path, text)?;
    }
    Ok(())
}
