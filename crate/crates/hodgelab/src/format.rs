//! Binary container for cochains and sampled fields:
//! `HLAB`, a little-endian u32 header length, a JSON header, then the
//! values as little-endian f64.

use std::io::{Read, Write};
use std::path::Path;

use anyhow::Context;
use hodgelab_core::forms::complex::CubicalComplex;
use hodgelab_core::forms::dec::Cochain;
use hodgelab_core::lattice::Lattice;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MAGIC: &[u8; 4] = b"HLAB";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Payload {
    /// One value per r-cell of a complex.
    Cochain,
    /// Components of a sampled form on a lattice, component-major.
    Field,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Header {
    pub format: Payload,
    pub version: u32,
    pub degree: usize,
    pub n: usize,
    /// Cell counts per degree for cochains, lattice dimensions for fields.
    pub cell_counts: Vec<usize>,
    pub domain_hash: String,
    pub len: usize,
}

/// A failed integrity check, named so that callers can report it.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{check}: {detail}")]
pub struct FormatError {
    pub check: &'static str,
    pub detail: String,
}

fn fail(check: &'static str, detail: impl Into<String>) -> anyhow::Error {
    FormatError { check, detail: detail.into() }.into()
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn complex_hash(cx: &CubicalComplex) -> String {
    let mut s = Sha256::new();
    s.update((cx.n as u64).to_le_bytes());
    s.update(cx.h.to_le_bytes());
    for k in 0..3 {
        s.update(cx.origin[k].to_le_bytes());
        s.update((cx.cells_per_axis[k] as u64).to_le_bytes());
    }
    s.update(cx.cube_mask.iter().map(|&b| b as u8).collect::<Vec<u8>>());
    hex(&s.finalize())
}

pub fn lattice_hash(lat: &Lattice) -> String {
    let mut s = Sha256::new();
    s.update((lat.n as u64).to_le_bytes());
    s.update(lat.h.to_le_bytes());
    for k in 0..3 {
        s.update(lat.origin[k].to_le_bytes());
        s.update((lat.dims[k] as u64).to_le_bytes());
    }
    s.update(lat.active.iter().map(|&b| b as u8).collect::<Vec<u8>>());
    hex(&s.finalize())
}

pub fn encode(header: &Header, values: &[f64]) -> anyhow::Result<Vec<u8>> {
    if header.len != values.len() {
        anyhow::bail!("header length {} does not match {} values", header.len, values.len());
    }
    let json = serde_json::to_vec(header)?;
    let mut out = Vec::with_capacity(8 + json.len() + 8 * values.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn decode(bytes: &[u8]) -> anyhow::Result<(Header, Vec<f64>)> {
    if bytes.len() < 8 || &bytes[..4] != MAGIC {
        return Err(fail("binary.magic", "missing HLAB signature"));
    }
    let hlen = u32::from_le_bytes(bytes[4..8].try_into().expect("four bytes")) as usize;
    let body = bytes.get(8..8 + hlen).ok_or_else(|| fail("binary.header", "header runs past the end of the file"))?;
    let header: Header = serde_json::from_slice(body).map_err(|e| fail("binary.header", e.to_string()))?;
    if header.version != FORMAT_VERSION {
        return Err(fail("binary.version", format!("version {} (expected {FORMAT_VERSION})", header.version)));
    }
    let data = &bytes[8 + hlen..];
    if data.len() != 8 * header.len {
        return Err(fail("binary.length", format!("{} payload bytes for {} values", data.len(), header.len)));
    }
    let values: Vec<f64> = data.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("eight bytes"))).collect();
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(fail("binary.finite", format!("value {i} is not finite")));
    }
    Ok((header, values))
}

pub fn write_file(path: &Path, header: &Header, values: &[f64]) -> anyhow::Result<()> {
    let bytes = encode(header, values)?;
    let mut f = std::fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    f.write_all(&bytes)?;
    Ok(())
}

pub fn read_file(path: &Path) -> anyhow::Result<(Header, Vec<f64>)> {
    let mut bytes = Vec::new();
    std::fs::File::open(path).with_context(|| format!("opening {}", path.display()))?.read_to_end(&mut bytes)?;
    decode(&bytes).with_context(|| format!("reading {}", path.display()))
}

pub fn cochain_header(cx: &CubicalComplex, c: &Cochain) -> Header {
    Header {
        format: Payload::Cochain,
        version: FORMAT_VERSION,
        degree: c.degree,
        n: cx.n,
        cell_counts: cx.counts(),
        domain_hash: complex_hash(cx),
        len: c.values.len(),
    }
}

pub fn write_cochain(path: &Path, cx: &CubicalComplex, c: &Cochain) -> anyhow::Result<()> {
    write_file(path, &cochain_header(cx, c), &c.values)
}

/// Reads a cochain and checks it against the complex it is meant for.
pub fn read_cochain(path: &Path, cx: &CubicalComplex, degree: Option<usize>) -> anyhow::Result<Cochain> {
    let (h, values) = read_file(path)?;
    if h.format != Payload::Cochain {
        return Err(fail("binary.format", "expected a cochain"));
    }
    if h.n != cx.n || h.cell_counts != cx.counts() {
        return Err(fail("binary.cell_counts", format!("{:?} does not match the domain {:?}", h.cell_counts, cx.counts())));
    }
    if h.domain_hash != complex_hash(cx) {
        return Err(fail("binary.domain_hash", "domain hash does not match the configured domain"));
    }
    if let Some(r) = degree {
        if h.degree != r {
            return Err(fail("binary.degree", format!("degree {} (expected {r})", h.degree)));
        }
    }
    if h.degree > cx.n || values.len() != cx.count(h.degree) {
        return Err(fail("binary.length", format!("{} values for {} cells of degree {}", values.len(), cx.count(h.degree.min(cx.n)), h.degree)));
    }
    Ok(Cochain { degree: h.degree, values })
}

pub fn field_header(lat: &Lattice, degree: usize, len: usize) -> Header {
    Header {
        format: Payload::Field,
        version: FORMAT_VERSION,
        degree,
        n: lat.n,
        cell_counts: lat.dims[..lat.n].to_vec(),
        domain_hash: lattice_hash(lat),
        len,
    }
}

/// Reads the components of a sampled field on `lat`.
pub fn read_field(path: &Path, lat: &Lattice) -> anyhow::Result<(usize, Vec<Vec<f64>>)> {
    let (h, values) = read_file(path)?;
    if h.format != Payload::Field {
        return Err(fail("binary.format", "expected a sampled field"));
    }
    if h.n != lat.n || h.cell_counts != lat.dims[..lat.n] {
        return Err(fail("binary.cell_counts", format!("{:?} does not match the lattice", h.cell_counts)));
    }
    if h.domain_hash != lattice_hash(lat) {
        return Err(fail("binary.domain_hash", "lattice hash does not match the configured domain"));
    }
    if values.is_empty() || values.len() % lat.len() != 0 {
        return Err(fail("binary.length", format!("{} values is not a multiple of {} lattice points", values.len(), lat.len())));
    }
    Ok((h.degree, values.chunks(lat.len()).map(|c| c.to_vec()).collect()))
}

pub fn write_field(path: &Path, lat: &Lattice, degree: usize, components: &[Vec<f64>]) -> anyhow::Result<()> {
    let flat: Vec<f64> = components.concat();
    write_file(path, &field_header(lat, degree, flat.len()), &flat)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square() -> CubicalComplex {
        CubicalComplex::unit_box(2, &[3, 3], 1.0 / 3.0).unwrap()
    }

    fn check_name(e: anyhow::Error) -> &'static str {
        e.chain().find_map(|c| c.downcast_ref::<FormatError>()).map(|f| f.check).unwrap_or("other")
    }

    #[test]
    fn cochain_round_trip() {
        let cx = square();
        let c = Cochain { degree: 1, values: (0..cx.count(1)).map(|i| i as f64 * 0.5 - 1.0).collect() };
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.bin");
        write_cochain(&p, &cx, &c).unwrap();
        assert_eq!(read_cochain(&p, &cx, Some(1)).unwrap(), c);
        let bytes = std::fs::read(&p).unwrap();
        assert_eq!(&bytes[..4], b"HLAB");
    }

    #[test]
    fn corruption_is_named() {
        let cx = square();
        let c = Cochain { degree: 0, values: vec![1.0; cx.count(0)] };
        let good = encode(&cochain_header(&cx, &c), &c.values).unwrap();
        let mut bad = good.clone();
        bad[0] = b'X';
        assert_eq!(check_name(decode(&bad).unwrap_err()), "binary.magic");
        let truncated = &good[..good.len() - 3];
        assert_eq!(check_name(decode(truncated).unwrap_err()), "binary.length");
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.bin");
        std::fs::write(&p, &good).unwrap();
        let other = CubicalComplex::punctured_box(2, &[3, 3], 1.0 / 3.0, &[(1, 2), (1, 2)]).unwrap();
        assert_eq!(check_name(read_cochain(&p, &other, None).unwrap_err()), "binary.cell_counts");
        let shifted = CubicalComplex::from_mask(2, &[3, 3], 1.0 / 3.0, &[0.5, 0.0], |_| true).unwrap();
        assert_eq!(check_name(read_cochain(&p, &shifted, None).unwrap_err()), "binary.domain_hash");
        assert_eq!(check_name(read_cochain(&p, &cx, Some(1)).unwrap_err()), "binary.degree");
    }

    #[test]
    fn field_round_trip() {
        let lat = square().cube_lattice();
        let comps = vec![vec![1.0; lat.len()], vec![2.0; lat.len()]];
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.bin");
        write_field(&p, &lat, 1, &comps).unwrap();
        assert_eq!(read_field(&p, &lat).unwrap(), (1, comps));
    }
}
