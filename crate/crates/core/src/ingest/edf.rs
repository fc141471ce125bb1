//! EDF reader and writer.
//!
//! Implements the fixed-width ASCII header layout of the European Data
//! Format: a 256-byte main header followed by 256 bytes per signal
//! (field-major), then data records of little-endian 16-bit integers.
//! Annotation signals (label `EDF Annotations`) are excluded from the data
//! matrix and parsed into `(sample, label)` events from their TAL streams.

use ndarray::Array2;

use crate::error::{Error, Result};

const HEADER_MAIN: usize = 256;
const HEADER_PER_SIGNAL: usize = 256;
const ANNOTATION_LABEL: &str = "EDF Annotations";

/// Parsed EDF main + signal headers.
#[derive(Debug, Clone)]
pub struct EdfHeader {
    pub version: String,
    pub patient_id: String,
    pub recording_id: String,
    pub start_date: String,
    pub start_time: String,
    pub header_bytes: usize,
    pub n_records: usize,
    pub record_duration: f64,
    pub n_signals: usize,
    pub signals: Vec<SignalHeader>,
}

#[derive(Debug, Clone)]
pub struct SignalHeader {
    pub label: String,
    pub transducer: String,
    pub dimension: String,
    pub physical_min: f64,
    pub physical_max: f64,
    pub digital_min: i32,
    pub digital_max: i32,
    pub prefiltering: String,
    pub samples_per_record: usize,
}

impl SignalHeader {
    pub fn is_annotation(&self) -> bool {
        self.label.trim() == ANNOTATION_LABEL
    }

    /// Digital→physical linear scaling.
    pub fn scale(&self) -> f64 {
        (self.physical_max - self.physical_min) / (self.digital_max - self.digital_min) as f64
    }

    pub fn to_physical(&self, digital: i16) -> f64 {
        self.physical_min + (digital as i32 - self.digital_min) as f64 * self.scale()
    }
}

/// A continuous multichannel recording in physical units.
#[derive(Debug, Clone)]
pub struct Recording {
    /// channels × time, physical units (µV for EEG signals).
    pub samples: Array2<f64>,
    pub fs: f64,
    pub channel_names: Vec<String>,
    /// `(sample_index, label)` events, sorted by sample index.
    pub events: Vec<(i64, String)>,
}

fn ascii_field<'a>(bytes: &'a [u8], offset: &mut usize, len: usize) -> Result<&'a str> {
    if *offset + len > bytes.len() {
        return Err(Error::Edf(format!(
            "truncated stream: header field at {} exceeds {} bytes",
            *offset,
            bytes.len()
        )));
    }
    let raw = &bytes[*offset..*offset + len];
    *offset += len;
    std::str::from_utf8(raw).map_err(|_| Error::Edf(format!("non-ASCII header field at {offset:?}")))
}

fn parse_int(s: &str, what: &str) -> Result<i64> {
    s.trim()
        .parse::<i64>()
        .map_err(|_| Error::Edf(format!("unparsable numeric field {what}: {s:?}")))
}

fn parse_float(s: &str, what: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| Error::Edf(format!("unparsable numeric field {what}: {s:?}")))
}

/// Parse the fixed-width EDF header block.
pub fn parse_header(bytes: &[u8]) -> Result<EdfHeader> {
    if bytes.len() < HEADER_MAIN {
        return Err(Error::Edf(format!(
            "truncated stream: {} bytes, need at least {HEADER_MAIN} for the header",
            bytes.len()
        )));
    }
    let mut off = 0usize;
    let version = ascii_field(bytes, &mut off, 8)?.trim().to_string();
    let patient_id = ascii_field(bytes, &mut off, 80)?.trim().to_string();
    let recording_id = ascii_field(bytes, &mut off, 80)?.trim().to_string();
    let start_date = ascii_field(bytes, &mut off, 8)?.trim().to_string();
    let start_time = ascii_field(bytes, &mut off, 8)?.trim().to_string();
    let header_bytes = parse_int(ascii_field(bytes, &mut off, 8)?, "header_bytes")? as usize;
    let _reserved = ascii_field(bytes, &mut off, 44)?;
    let n_records_raw = parse_int(ascii_field(bytes, &mut off, 8)?, "n_records")?;
    let record_duration = parse_float(ascii_field(bytes, &mut off, 8)?, "record_duration")?;
    let n_signals = parse_int(ascii_field(bytes, &mut off, 4)?, "n_signals")? as usize;

    if n_records_raw < 0 {
        return Err(Error::Edf(format!("n_records {n_records_raw} must be >= 0")));
    }
    let expect = HEADER_MAIN + HEADER_PER_SIGNAL * n_signals;
    if header_bytes != expect {
        return Err(Error::Edf(format!(
            "header_bytes {header_bytes} != 256 + 256*{n_signals} = {expect}"
        )));
    }
    if bytes.len() < expect {
        return Err(Error::Edf(format!(
            "truncated stream: {} bytes, header declares {expect}",
            bytes.len()
        )));
    }

    // Per-signal headers are field-major: all labels, all transducers, ...
    let ns = n_signals;
    let field = |start: usize, width: usize, i: usize| -> &[u8] {
        let base = HEADER_MAIN + start * ns + width * i;
        &bytes[base..base + width]
    };
    let text = |start: usize, width: usize, i: usize| -> Result<String> {
        std::str::from_utf8(field(start, width, i))
            .map(|s| s.trim().to_string())
            .map_err(|_| Error::Edf("non-ASCII signal header field".into()))
    };

    let mut signals = Vec::with_capacity(ns);
    for i in 0..ns {
        let label = text(0, 16, i)?;
        let transducer = text(16, 80, i)?;
        let dimension = text(96, 8, i)?;
        let physical_min = parse_float(&text(104, 8, i)?, "physical_min")?;
        let physical_max = parse_float(&text(112, 8, i)?, "physical_max")?;
        let digital_min = parse_int(&text(120, 8, i)?, "digital_min")? as i32;
        let digital_max = parse_int(&text(128, 8, i)?, "digital_max")? as i32;
        let prefiltering = text(136, 80, i)?;
        let samples_per_record = parse_int(&text(216, 8, i)?, "samples_per_record")? as usize;
        let sig = SignalHeader {
            label,
            transducer,
            dimension,
            physical_min,
            physical_max,
            digital_min,
            digital_max,
            prefiltering,
            samples_per_record,
        };
        if !sig.is_annotation() {
            if sig.physical_max <= sig.physical_min {
                return Err(Error::Edf(format!(
                    "signal {i}: physical range [{}, {}] is empty",
                    sig.physical_min, sig.physical_max
                )));
            }
            if sig.digital_max <= sig.digital_min {
                return Err(Error::Edf(format!(
                    "signal {i}: digital range [{}, {}] is empty (zero scale)",
                    sig.digital_min, sig.digital_max
                )));
            }
        }
        signals.push(sig);
    }

    Ok(EdfHeader {
        version,
        patient_id,
        recording_id,
        start_date,
        start_time,
        header_bytes,
        n_records: n_records_raw as usize,
        record_duration,
        n_signals,
        signals,
    })
}

/// Parse a full EDF byte stream into a physical-unit [`Recording`].
pub fn parse_edf(bytes: &[u8]) -> Result<Recording> {
    let header = parse_header(bytes)?;
    let ns = header.n_signals;

    let data_signals: Vec<usize> = (0..ns).filter(|&i| !header.signals[i].is_annotation()).collect();
    let ann_signals: Vec<usize> = (0..ns).filter(|&i| header.signals[i].is_annotation()).collect();

    // All data signals must share one rate for a rectangular recording.
    let spr: Vec<usize> = data_signals
        .iter()
        .map(|&i| header.signals[i].samples_per_record)
        .collect();
    if let Some(&first) = spr.first() {
        if spr.iter().any(|&s| s != first) {
            return Err(Error::Edf("mixed per-signal sampling rates are unsupported".into()));
        }
    }
    if header.record_duration <= 0.0 {
        return Err(Error::Edf(format!(
            "record duration {} must be > 0",
            header.record_duration
        )));
    }
    let samples_per_record = spr.first().copied().unwrap_or(0);
    let fs = samples_per_record as f64 / header.record_duration;

    let record_len_samples: usize = (0..ns).map(|i| header.signals[i].samples_per_record).sum();
    let record_len_bytes = record_len_samples * 2;
    let need = header.header_bytes + header.n_records * record_len_bytes;
    if bytes.len() < need {
        return Err(Error::Edf(format!(
            "truncated stream: {} bytes, {} records need {need}",
            bytes.len(),
            header.n_records
        )));
    }

    let n_time = header.n_records * samples_per_record;
    let mut samples = Array2::<f64>::zeros((data_signals.len(), n_time));
    let mut ann_bytes: Vec<u8> = Vec::new();

    for rec in 0..header.n_records {
        let mut off = header.header_bytes + rec * record_len_bytes;
        for i in 0..ns {
            let sig = &header.signals[i];
            let n = sig.samples_per_record;
            let chunk = &bytes[off..off + 2 * n];
            off += 2 * n;
            if sig.is_annotation() {
                ann_bytes.extend_from_slice(chunk);
                // Record boundary marker so TALs never join across records.
                ann_bytes.push(0);
            } else {
                let row = data_signals.iter().position(|&d| d == i).unwrap();
                let base = rec * samples_per_record;
                for (k, pair) in chunk.chunks_exact(2).enumerate() {
                    let d = i16::from_le_bytes([pair[0], pair[1]]);
                    samples[[row, base + k]] = sig.to_physical(d);
                }
            }
        }
    }

    let mut events = parse_tal_events(&ann_bytes, fs);
    events.sort_by_key(|(s, _)| *s);
    let _ = ann_signals;

    Ok(Recording {
        samples,
        fs,
        channel_names: data_signals
            .iter()
            .map(|&i| header.signals[i].label.clone())
            .collect(),
        events,
    })
}

/// Extract `(sample, label)` events from a concatenated TAL byte stream.
fn parse_tal_events(bytes: &[u8], fs: f64) -> Vec<(i64, String)> {
    let mut events = Vec::new();
    for tal in bytes.split(|&b| b == 0) {
        if tal.is_empty() {
            continue;
        }
        let Ok(text) = std::str::from_utf8(tal) else {
            continue;
        };
        // "+onset[\x15duration]\x14annotation\x14..."
        let mut parts = text.split('\x14');
        let Some(time_part) = parts.next() else { continue };
        let onset_str = time_part.split('\x15').next().unwrap_or("");
        let Ok(onset) = onset_str.parse::<f64>() else {
            continue;
        };
        for ann in parts {
            let ann = ann.trim();
            if !ann.is_empty() {
                events.push(((onset * fs).round() as i64, ann.to_string()));
            }
        }
    }
    events
}

/// Writer options: declared physical range and record layout.
#[derive(Debug, Clone)]
pub struct EdfWriteOptions {
    /// Declared physical range for every channel; samples outside error out.
    pub physical_min: f64,
    pub physical_max: f64,
    pub patient_id: String,
    pub recording_id: String,
}

impl Default for EdfWriteOptions {
    fn default() -> Self {
        EdfWriteOptions {
            physical_min: -3276.8,
            physical_max: 3276.8,
            patient_id: "X X X X".into(),
            recording_id: "Startdate X X X X".into(),
        }
    }
}

fn fixed_ascii(s: &str, width: usize, out: &mut Vec<u8>) {
    let mut bytes: Vec<u8> = s
        .bytes()
        .map(|b| if (32..=126).contains(&b) { b } else { b'_' })
        .take(width)
        .collect();
    bytes.resize(width, b' ');
    out.extend_from_slice(&bytes);
}

fn fixed_number(v: f64, width: usize, out: &mut Vec<u8>) {
    // Shortest representation that fits the fixed-width field.
    let mut s = format!("{v}");
    if s.len() > width {
        for prec in (0..width).rev() {
            s = format!("{v:.prec$}");
            if s.len() <= width {
                break;
            }
        }
        s.truncate(width);
    }
    fixed_ascii(&s, width, out);
}

/// Serialise a [`Recording`] to EDF bytes.
///
/// Uses 1-second data records when the length divides evenly, otherwise a
/// single record spanning the whole recording. Events are embedded as TALs
/// in an `EDF Annotations` signal. The inverse of [`parse_edf`] up to one
/// digital quantum of the declared range.
pub fn write_edf(rec: &Recording, opts: &EdfWriteOptions) -> Result<Vec<u8>> {
    let (n_ch, n_time) = rec.samples.dim();
    if n_ch == 0 {
        return Err(Error::Invalid("write_edf: channel count must be >= 1".into()));
    }
    if !(rec.fs > 0.0) {
        return Err(Error::Invalid("write_edf: fs must be > 0".into()));
    }
    if rec.samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::Invalid("write_edf: non-finite sample".into()));
    }
    for &v in rec.samples.iter() {
        if v < opts.physical_min || v > opts.physical_max {
            return Err(Error::Invalid(format!(
                "write_edf: sample {v} outside declared physical range [{}, {}]",
                opts.physical_min, opts.physical_max
            )));
        }
    }
    for &(s, _) in &rec.events {
        if s < 0 || s >= n_time as i64 {
            return Err(Error::Invalid(format!("write_edf: event sample {s} out of bounds")));
        }
    }

    let fs_round = rec.fs.round();
    let one_second_records = (rec.fs - fs_round).abs() < 1e-9
        && fs_round > 0.0
        && n_time % fs_round as usize == 0
        && n_time > 0;
    let (n_records, samples_per_record, record_duration) = if one_second_records {
        (n_time / fs_round as usize, fs_round as usize, 1.0)
    } else {
        (1usize.min(n_time.max(1)), n_time, n_time as f64 / rec.fs)
    };
    let n_records = n_records.max(1);

    // TALs per record: timestamp TAL plus events starting in the record.
    let mut record_tals: Vec<Vec<u8>> = Vec::with_capacity(n_records);
    for r in 0..n_records {
        let t0 = r as f64 * record_duration;
        let mut tal = Vec::new();
        tal.extend_from_slice(format!("+{t0}\x14\x14\x00").as_bytes());
        let lo = (r * samples_per_record) as i64;
        let hi = lo + samples_per_record as i64;
        for (s, label) in &rec.events {
            if *s >= lo && *s < hi {
                let onset = *s as f64 / rec.fs;
                tal.extend_from_slice(format!("+{onset}\x14{label}\x14\x00").as_bytes());
            }
        }
        record_tals.push(tal);
    }
    let ann_bytes_per_record = record_tals.iter().map(|t| t.len()).max().unwrap_or(2);
    // Annotation "samples" are byte pairs.
    let ann_spr = ann_bytes_per_record.div_ceil(2).max(1);

    let ns = n_ch + 1;
    let header_bytes = HEADER_MAIN + HEADER_PER_SIGNAL * ns;
    let mut out = Vec::with_capacity(header_bytes + n_records * (n_ch * samples_per_record + ann_spr) * 2);

    // Main header.
    fixed_ascii("0", 8, &mut out);
    fixed_ascii(&opts.patient_id, 80, &mut out);
    fixed_ascii(&opts.recording_id, 80, &mut out);
    fixed_ascii("01.01.00", 8, &mut out);
    fixed_ascii("00.00.00", 8, &mut out);
    fixed_number(header_bytes as f64, 8, &mut out);
    fixed_ascii("", 44, &mut out);
    fixed_number(n_records as f64, 8, &mut out);
    fixed_number(record_duration, 8, &mut out);
    fixed_number(ns as f64, 4, &mut out);

    // Signal headers, field-major.
    let digital_min = -32768i32;
    let digital_max = 32767i32;
    for i in 0..ns {
        let label = if i < n_ch { rec.channel_names.get(i).cloned().unwrap_or_else(|| format!("CH{i}")) } else { ANNOTATION_LABEL.into() };
        fixed_ascii(&label, 16, &mut out);
    }
    for _ in 0..ns {
        fixed_ascii("", 80, &mut out); // transducer
    }
    for i in 0..ns {
        fixed_ascii(if i < n_ch { "uV" } else { "" }, 8, &mut out);
    }
    for i in 0..ns {
        fixed_number(if i < n_ch { opts.physical_min } else { -1.0 }, 8, &mut out);
    }
    for i in 0..ns {
        fixed_number(if i < n_ch { opts.physical_max } else { 1.0 }, 8, &mut out);
    }
    for _ in 0..ns {
        fixed_number(digital_min as f64, 8, &mut out);
    }
    for _ in 0..ns {
        fixed_number(digital_max as f64, 8, &mut out);
    }
    for _ in 0..ns {
        fixed_ascii("", 80, &mut out); // prefiltering
    }
    for i in 0..ns {
        fixed_number(if i < n_ch { samples_per_record } else { ann_spr } as f64, 8, &mut out);
    }
    for _ in 0..ns {
        fixed_ascii("", 32, &mut out);
    }
    debug_assert_eq!(out.len(), header_bytes);

    // Data records.
    let scale = (digital_max - digital_min) as f64 / (opts.physical_max - opts.physical_min);
    for r in 0..n_records {
        let base = r * samples_per_record;
        for ch in 0..n_ch {
            for k in 0..samples_per_record {
                let p = rec.samples[[ch, base + k]];
                let d = ((p - opts.physical_min) * scale).round() as i64 + digital_min as i64;
                let d = d.clamp(digital_min as i64, digital_max as i64) as i16;
                out.extend_from_slice(&d.to_le_bytes());
            }
        }
        let tal = &record_tals[r];
        let mut ann = tal.clone();
        ann.resize(ann_spr * 2, 0);
        out.extend_from_slice(&ann);
    }

    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn make_recording(n_ch: usize, n_time: usize, fs: f64) -> Recording {
        let mut samples = Array2::<f64>::zeros((n_ch, n_time));
        for c in 0..n_ch {
            for t in 0..n_time {
                samples[[c, t]] =
                    100.0 * (2.0 * std::f64::consts::PI * (5.0 + c as f64) * t as f64 / fs).sin();
            }
        }
        Recording {
            samples,
            fs,
            channel_names: (0..n_ch).map(|i| format!("EEG C{i}")).collect(),
            events: vec![
                (n_time as i64 / 8, "vowel/a".into()),
                (n_time as i64 / 2, "vowel/i".into()),
            ],
        }
    }

    #[test]
    fn header_bytes_arithmetic_61_signals() {
        // A recording with 60 data channels + 1 annotation signal has 61
        // signal headers: 256 + 61*256 = 15872.
        let rec = make_recording(60, 1024, 256.0);
        let bytes = write_edf(&rec, &EdfWriteOptions::default()).unwrap();
        let header = parse_header(&bytes).unwrap();
        assert_eq!(header.n_signals, 61);
        assert_eq!(header.header_bytes, 256 + 61 * 256);
        assert_eq!(header.header_bytes, 15_872);
    }

    #[test]
    fn digital_zero_maps_to_half_quantum() {
        // Digital range [-32768, 32767] onto the symmetric [-3276.8, 3276.8]
        // µV range puts digital 0 at +0.05 µV (half a quantum above centre,
        // because the digital range has one more negative level).
        let sig = SignalHeader {
            label: "EEG".into(),
            transducer: String::new(),
            dimension: "uV".into(),
            physical_min: -3276.8,
            physical_max: 3276.8,
            digital_min: -32768,
            digital_max: 32767,
            prefiltering: String::new(),
            samples_per_record: 256,
        };
        let p = sig.to_physical(0);
        assert!((p - 0.05).abs() < 1e-3, "physical value {p}");
    }

    #[test]
    fn empty_stream_is_truncation_error() {
        match parse_edf(&[]) {
            Err(Error::Edf(msg)) => assert!(msg.contains("truncated"), "{msg}"),
            other => panic!("expected truncation error, got {other:?}"),
        }
    }

    #[test]
    fn corrupted_header_bytes_field_rejected() {
        let rec = make_recording(2, 512, 256.0);
        let mut bytes = write_edf(&rec, &EdfWriteOptions::default()).unwrap();
        // The header_bytes field lives at offset 184..192.
        bytes[184..192].copy_from_slice(b"999     ");
        assert!(parse_edf(&bytes).is_err());
    }

    #[test]
    fn zeros_roundtrip_exactly() {
        let rec = Recording {
            samples: Array2::zeros((3, 512)),
            fs: 256.0,
            channel_names: vec!["A".into(), "B".into(), "C".into()],
            events: vec![],
        };
        let bytes = write_edf(&rec, &EdfWriteOptions::default()).unwrap();
        let back = parse_edf(&bytes).unwrap();
        assert_eq!(back.samples.dim(), (3, 512));
        // Zero is representable within half a quantum of this range.
        let quantum = (3276.8 + 3276.8) / 65535.0;
        for &v in back.samples.iter() {
            assert!(v.abs() <= quantum, "residual {v}");
        }
    }

    #[test]
    fn sine_roundtrip_within_one_quantum() {
        let rec = make_recording(2, 1000, 250.0); // non-divisible: single record
        let opts = EdfWriteOptions::default();
        let bytes = write_edf(&rec, &opts).unwrap();
        let back = parse_edf(&bytes).unwrap();
        assert_eq!(back.samples.dim(), rec.samples.dim());
        let quantum = (opts.physical_max - opts.physical_min) / 65535.0;
        for (a, b) in rec.samples.iter().zip(back.samples.iter()) {
            assert!((a - b).abs() <= quantum, "error {} > quantum {quantum}", (a - b).abs());
        }
    }

    #[test]
    fn out_of_range_sample_is_error() {
        let mut rec = make_recording(1, 256, 256.0);
        rec.samples[[0, 10]] = 9000.0;
        assert!(write_edf(&rec, &EdfWriteOptions::default()).is_err());
    }

    #[test]
    fn events_roundtrip_through_annotations() {
        let rec = make_recording(2, 1024, 256.0);
        let bytes = write_edf(&rec, &EdfWriteOptions::default()).unwrap();
        let back = parse_edf(&bytes).unwrap();
        assert_eq!(back.events.len(), 2);
        assert_eq!(back.events[0], (128, "vowel/a".to_string()));
        assert_eq!(back.events[1], (512, "vowel/i".to_string()));
        assert_eq!(back.channel_names.len(), 2);
        assert_eq!(back.fs, 256.0);
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(48))]

        /// Round-trip is sample-exact up to one digital quantum for any
        /// finite recording within the declared physical range.
        #[test]
        fn roundtrip_within_one_quantum(
            n_ch in 1usize..5,
            n_time in 64usize..700,
            fs_idx in 0usize..3,
            seed in 0u64..1000,
        ) {
            use rand::Rng;
            let fs = [128.0, 256.0, 500.0][fs_idx];
            let mut rng = crate::rng::rng_for(seed, "edf-prop", 0);
            let mut samples = Array2::<f64>::zeros((n_ch, n_time));
            for v in samples.iter_mut() {
                *v = (rng.random::<f64>() - 0.5) * 6000.0;
            }
            let rec = Recording {
                samples,
                fs,
                channel_names: (0..n_ch).map(|i| format!("C{i}")).collect(),
                events: vec![(n_time as i64 / 2, "x".into())],
            };
            let opts = EdfWriteOptions::default();
            let bytes = write_edf(&rec, &opts).unwrap();
            let back = parse_edf(&bytes).unwrap();
            proptest::prop_assert_eq!(back.samples.dim(), rec.samples.dim());
            let quantum = (opts.physical_max - opts.physical_min) / 65535.0;
            for (a, b) in rec.samples.iter().zip(back.samples.iter()) {
                proptest::prop_assert!((a - b).abs() <= quantum);
            }
            proptest::prop_assert_eq!(&back.events, &rec.events);
        }
    }

    #[test]
    fn degenerate_digital_range_rejected() {
        let rec = make_recording(1, 256, 256.0);
        let mut bytes = write_edf(&rec, &EdfWriteOptions::default()).unwrap();
        // Overwrite digital_min (field start 120*ns) and digital_max
        // (field start 128*ns) of signal 0 with the same value.
        let ns = 2;
        let base = 256 + 120 * ns;
        bytes[base..base + 8].copy_from_slice(b"5       ");
        let base = 256 + 128 * ns;
        bytes[base..base + 8].copy_from_slice(b"5       ");
        let err = parse_edf(&bytes).unwrap_err();
        assert!(format!("{err}").contains("digital range"), "{err}");
    }
}
