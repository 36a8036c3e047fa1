//! Dataset files.
//!
//! CSV (canonical), one record per row:
//!
//! ```text
//! seed,snr_db,n_ue_true,re0,...,re11,im0,...,im11,label_mask,n_cs
//! ```
//!
//! Floats are written in shortest round-trip form; `label_mask` is the
//! decimal 12-bit multi-hot mask.
//!
//! Packed binary, all little-endian: magic `P0DS`, `u16` version, `u64`
//! record count, then 116-byte records laid out as `u64 seed, f32 snr_db,
//! u8 n_ue_true, u8 n_cs, u16 label_mask, 24 x f32 iq`, followed by four
//! reserved zero bytes.

use super::PucchRecord;
use crate::error::{Error, Result};
use crate::waveform::{AlphaSet, N_SC};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

pub const BINARY_MAGIC: &[u8; 4] = b"P0DS";
pub const BINARY_VERSION: u16 = 1;
pub const BINARY_RECORD_LEN: usize = 116;
const BINARY_PAYLOAD_LEN: usize = 8 + 4 + 1 + 1 + 2 + 4 * 2 * N_SC;
const BINARY_HEADER_LEN: usize = 4 + 2 + 8;

pub fn csv_header() -> Vec<String> {
    let mut h = vec!["seed".to_string(), "snr_db".into(), "n_ue_true".into()];
    h.extend((0..N_SC).map(|k| format!("re{k}")));
    h.extend((0..N_SC).map(|k| format!("im{k}")));
    h.push("label_mask".into());
    h.push("n_cs".into());
    h
}

/// Comma-joined CSV header line.
pub const CSV_HEADER: &str = "seed,snr_db,n_ue_true,re0,re1,re2,re3,re4,re5,re6,re7,re8,re9,re10,re11,im0,im1,im2,im3,im4,im5,im6,im7,im8,im9,im10,im11,label_mask,n_cs";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetFormat {
    Csv,
    Binary,
}

impl DatasetFormat {
    /// `.bin` selects the packed format, anything else CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("bin") => DatasetFormat::Binary,
            _ => DatasetFormat::Csv,
        }
    }
}

impl std::str::FromStr for DatasetFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(DatasetFormat::Csv),
            "bin" => Ok(DatasetFormat::Binary),
            other => Err(Error::Config(format!("unknown dataset format '{other}'"))),
        }
    }
}

fn csv_err(e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        kind => Error::format(line, format!("{kind:?}")),
    }
}

pub fn write_csv<W: Write>(records: &[PucchRecord], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(csv_header()).map_err(csv_err)?;
    let mut row: Vec<String> = Vec::with_capacity(5 + 2 * N_SC);
    for r in records {
        row.clear();
        row.push(r.seed.to_string());
        row.push(r.snr_db.to_string());
        row.push(r.n_ue_true.to_string());
        row.extend(r.iq.iter().map(|v| v.to_string()));
        row.push(r.label.mask().to_string());
        row.push(r.n_cs.to_string());
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: Read>(input: R) -> Result<Vec<PucchRecord>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let header = rdr.headers().map_err(csv_err)?.clone();
    let expected = csv_header();
    if header.iter().ne(expected.iter().map(String::as_str)) {
        return Err(Error::format(1, "unexpected dataset CSV header"));
    }
    let mut records = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(csv_err)?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        let field = |i: usize| row.get(i).unwrap_or("");
        fn parse<T: std::str::FromStr>(s: &str, line: u64, name: &str) -> Result<T> {
            s.trim()
                .parse()
                .map_err(|_| Error::format(line, format!("bad {name} value '{s}'")))
        }
        let mut iq = [0f32; 2 * N_SC];
        for (k, v) in iq.iter_mut().enumerate() {
            *v = parse(field(3 + k), line, "iq")?;
        }
        let mask: u16 = parse(field(3 + 2 * N_SC), line, "label_mask")?;
        let rec = PucchRecord {
            seed: parse(field(0), line, "seed")?,
            snr_db: parse(field(1), line, "snr_db")?,
            n_ue_true: parse(field(2), line, "n_ue_true")?,
            n_cs: parse(field(4 + 2 * N_SC), line, "n_cs")?,
            label: AlphaSet::from_mask(mask).map_err(|e| Error::format(line, e.to_string()))?,
            iq,
        };
        rec.validate().map_err(|e| Error::format(line, e.to_string()))?;
        records.push(rec);
    }
    Ok(records)
}

pub fn write_binary<W: Write>(records: &[PucchRecord], mut out: W) -> Result<()> {
    out.write_all(BINARY_MAGIC)?;
    out.write_all(&BINARY_VERSION.to_le_bytes())?;
    out.write_all(&(records.len() as u64).to_le_bytes())?;
    let mut buf = [0u8; BINARY_RECORD_LEN];
    for r in records {
        buf[0..8].copy_from_slice(&r.seed.to_le_bytes());
        buf[8..12].copy_from_slice(&r.snr_db.to_le_bytes());
        buf[12] = r.n_ue_true;
        buf[13] = r.n_cs;
        buf[14..16].copy_from_slice(&r.label.mask().to_le_bytes());
        for (k, v) in r.iq.iter().enumerate() {
            buf[16 + 4 * k..20 + 4 * k].copy_from_slice(&v.to_le_bytes());
        }
        buf[BINARY_PAYLOAD_LEN..].fill(0);
        out.write_all(&buf)?;
    }
    out.flush()?;
    Ok(())
}

fn read_exact_at<R: Read>(input: &mut R, buf: &mut [u8], offset: u64, what: &str) -> Result<()> {
    input.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::format(offset, format!("truncated {what}")),
        _ => Error::Io(e),
    })
}

pub fn read_binary<R: Read>(mut input: R) -> Result<Vec<PucchRecord>> {
    let mut header = [0u8; BINARY_HEADER_LEN];
    read_exact_at(&mut input, &mut header, 0, "header")?;
    if &header[0..4] != BINARY_MAGIC {
        return Err(Error::format(0, "bad magic, expected P0DS"));
    }
    let version = u16::from_le_bytes([header[4], header[5]]);
    if version != BINARY_VERSION {
        return Err(Error::format(4, format!("unsupported version {version}")));
    }
    let count = u64::from_le_bytes(header[6..14].try_into().unwrap());
    let mut records = Vec::with_capacity(count.min(1 << 24) as usize);
    let mut buf = [0u8; BINARY_RECORD_LEN];
    for i in 0..count {
        let offset = BINARY_HEADER_LEN as u64 + i * BINARY_RECORD_LEN as u64;
        read_exact_at(&mut input, &mut buf, offset, "record")?;
        let mut iq = [0f32; 2 * N_SC];
        for (k, v) in iq.iter_mut().enumerate() {
            *v = f32::from_le_bytes(buf[16 + 4 * k..20 + 4 * k].try_into().unwrap());
        }
        let mask = u16::from_le_bytes([buf[14], buf[15]]);
        let rec = PucchRecord {
            seed: u64::from_le_bytes(buf[0..8].try_into().unwrap()),
            snr_db: f32::from_le_bytes(buf[8..12].try_into().unwrap()),
            n_ue_true: buf[12],
            n_cs: buf[13],
            label: AlphaSet::from_mask(mask).map_err(|e| Error::format(offset + 14, e.to_string()))?,
            iq,
        };
        rec.validate().map_err(|e| Error::format(offset, e.to_string()))?;
        records.push(rec);
    }
    let mut trailing = [0u8; 1];
    if input.read(&mut trailing)? != 0 {
        let end = BINARY_HEADER_LEN as u64 + count * BINARY_RECORD_LEN as u64;
        return Err(Error::format(end, "trailing bytes after last record"));
    }
    Ok(records)
}

pub fn write_dataset(path: &Path, records: &[PucchRecord], format: DatasetFormat) -> Result<()> {
    let out = BufWriter::new(File::create(path)?);
    match format {
        DatasetFormat::Csv => write_csv(records, out),
        DatasetFormat::Binary => write_binary(records, out),
    }
}

/// Reads a dataset, detecting the packed format by its magic.
pub fn read_dataset(path: &Path) -> Result<Vec<PucchRecord>> {
    let mut f = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    let n = f.read(&mut magic)?;
    let f = BufReader::new(File::open(path)?);
    if n == 4 && &magic == BINARY_MAGIC {
        read_binary(f)
    } else {
        read_csv(f)
    }
}

#[cfg(test)]
mod tests {
    use super::super::{generate_dataset, DatasetSpec};
    use super::*;
    use proptest::prelude::*;

    fn sample() -> Vec<PucchRecord> {
        let spec = DatasetSpec {
            iters: 1,
            allocs_per_grid: 2,
            ..DatasetSpec::desk(5)
        };
        generate_dataset(&spec).unwrap()
    }

    #[test]
    fn header_constant_matches() {
        assert_eq!(CSV_HEADER, csv_header().join(","));
        assert_eq!(BINARY_PAYLOAD_LEN, 112);
    }

    #[test]
    fn csv_round_trip() {
        let recs = sample();
        let mut buf = Vec::new();
        write_csv(&recs, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text.lines().next().unwrap(), CSV_HEADER);
        assert_eq!(read_csv(&buf[..]).unwrap(), recs);
    }

    #[test]
    fn binary_layout_and_round_trip() {
        let recs = sample();
        let mut buf = Vec::new();
        write_binary(&recs, &mut buf).unwrap();
        assert_eq!(buf.len(), BINARY_HEADER_LEN + recs.len() * BINARY_RECORD_LEN);
        assert_eq!(&buf[0..4], b"P0DS");
        assert_eq!(read_binary(&buf[..]).unwrap(), recs);
    }

    #[test]
    fn binary_errors_carry_position() {
        let recs = sample();
        let mut buf = Vec::new();
        write_binary(&recs, &mut buf).unwrap();

        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(read_binary(&bad[..]), Err(Error::Format { position: 0, .. })));

        let cut = &buf[..BINARY_HEADER_LEN + BINARY_RECORD_LEN + 10];
        match read_binary(cut) {
            Err(Error::Format { position, .. }) => {
                assert_eq!(position, (BINARY_HEADER_LEN + BINARY_RECORD_LEN) as u64)
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn csv_rejects_inconsistent_label() {
        let mut recs = sample();
        recs[3].n_ue_true = 7;
        recs[3].label = AlphaSet::from_mask(1).unwrap();
        let mut buf = Vec::new();
        write_csv(&recs, &mut buf).unwrap();
        assert!(matches!(read_csv(&buf[..]), Err(Error::Format { position: 5, .. })));
    }

    proptest! {
        #[test]
        fn float_fields_round_trip_both_formats(
            seed in any::<u64>(),
            snr in -50f32..50f32,
            bits in 0u16..4096,
            n_cs in 0u8..12,
            iq in proptest::array::uniform24(any::<f32>().prop_filter("finite", |v| v.is_finite())),
        ) {
            let label = AlphaSet::from_mask(bits).unwrap();
            let rec = PucchRecord { seed, snr_db: snr, n_ue_true: label.len() as u8, n_cs, label, iq };
            let mut c = Vec::new();
            write_csv(&[rec], &mut c).unwrap();
            let back = read_csv(&c[..]).unwrap();
            prop_assert_eq!(back[0].iq.map(f32::to_bits), rec.iq.map(f32::to_bits));
            prop_assert_eq!(back[0], rec);
            let mut b = Vec::new();
            write_binary(&[rec], &mut b).unwrap();
            prop_assert_eq!(read_binary(&b[..]).unwrap()[0], rec);
        }
    }
}
