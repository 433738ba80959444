//! Reader for MIT-BIH style WFDB records.
//!
//! Three files make up a record: a text header (`.hea`), format-212 packed
//! samples (`.dat`) and a binary MIT annotation stream (`.atr`). Everything in
//! here works on in-memory byte buffers so records can be parsed in parallel.

use std::fmt;
use std::path::{Path, PathBuf};

/// Sampling rate of every MIT-BIH arrhythmia record.
pub const MITBIH_FS: f64 = 360.0;

#[derive(Debug, Clone, PartialEq)]
pub enum WfdbError {
    MalformedHeader(String),
    UnsupportedFormat { signal: usize, format: u32 },
    TruncatedSignal { needed: usize, available: usize },
    MalformedAnnotation { offset: usize, reason: &'static str },
    Io { path: PathBuf, message: String },
}

impl fmt::Display for WfdbError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WfdbError::MalformedHeader(msg) => write!(f, "malformed header: {msg}"),
            WfdbError::UnsupportedFormat { signal, format } => {
                write!(
                    f,
                    "signal {signal} uses storage format {format}, only 212 is supported"
                )
            }
            WfdbError::TruncatedSignal { needed, available } => {
                write!(
                    f,
                    "signal file truncated: need {needed} bytes, have {available}"
                )
            }
            WfdbError::MalformedAnnotation { offset, reason } => {
                write!(f, "malformed annotation stream at byte {offset}: {reason}")
            }
            WfdbError::Io { path, message } => write!(f, "{}: {message}", path.display()),
        }
    }
}

impl std::error::Error for WfdbError {}

#[derive(Debug, Clone, PartialEq)]
pub struct SignalSpec {
    pub file_name: String,
    pub storage_format: u32,
    /// ADC units per millivolt.
    pub adc_gain: f64,
    pub adc_resolution: u32,
    pub adc_zero: i32,
    /// Physical zero in ADC units; equals `adc_zero` unless the gain field
    /// carries an explicit `(baseline)`.
    pub baseline: i32,
    pub initial_value: i32,
    pub checksum: i32,
    pub block_size: u32,
    pub lead_name: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecordHeader {
    pub record_name: String,
    pub n_signals: usize,
    pub sampling_rate: f64,
    pub n_samples: usize,
    pub signals: Vec<SignalSpec>,
    pub comments: Vec<String>,
}

/// One entry of an annotation stream.
///
/// `symbol` is the MIT-BIH mnemonic for `code`; codes with no mnemonic keep
/// their numeric value and carry `char::REPLACEMENT_CHARACTER` with `known`
/// cleared.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotationEvent {
    pub sample_index: u64,
    pub code: u8,
    pub symbol: char,
    pub known: bool,
    pub channel: u8,
    pub subtype: i8,
    pub aux: Option<Vec<u8>>,
}

#[derive(Debug, Clone)]
pub struct EcgRecord {
    pub header: RecordHeader,
    /// Raw ADC values, one vector per channel.
    pub signals: Vec<Vec<i32>>,
    pub annotations: Vec<AnnotationEvent>,
    pub patient_id: u32,
}

impl EcgRecord {
    /// Channel converted to millivolts using the header's gain and baseline.
    pub fn channel_mv(&self, channel: usize) -> Option<Vec<f64>> {
        let spec = self.header.signals.get(channel)?;
        let raw = self.signals.get(channel)?;
        Some(
            raw.iter()
                .map(|&v| adc_to_mv(v, spec.adc_gain, spec.baseline))
                .collect(),
        )
    }
}

fn field<'a>(it: &mut impl Iterator<Item = &'a str>, what: &str) -> Result<&'a str, WfdbError> {
    it.next()
        .ok_or_else(|| WfdbError::MalformedHeader(format!("missing {what}")))
}

fn num<T: std::str::FromStr>(s: &str, what: &str) -> Result<T, WfdbError> {
    s.parse()
        .map_err(|_| WfdbError::MalformedHeader(format!("bad {what}: {s:?}")))
}

/// Parses the text of a single-segment `.hea` file.
pub fn parse_header(text: &str) -> Result<RecordHeader, WfdbError> {
    let mut comments = Vec::new();
    let mut lines = text.lines().filter_map(|l| {
        let t = l.trim();
        if let Some(c) = t.strip_prefix('#') {
            comments.push(c.trim().to_string());
            None
        } else if t.is_empty() {
            None
        } else {
            Some(t.to_string())
        }
    });

    let record_line = lines
        .next()
        .ok_or_else(|| WfdbError::MalformedHeader("empty header".into()))?;
    let mut it = record_line.split_whitespace();
    let name = field(&mut it, "record name")?;
    if name.contains('/') {
        return Err(WfdbError::MalformedHeader(
            "multi-segment records are not supported".into(),
        ));
    }
    let n_signals: usize = num(field(&mut it, "signal count")?, "signal count")?;
    // "360/counter_freq(base)" is allowed by the format; keep the leading number.
    let fs_tok = it.next().unwrap_or("250");
    let fs_main = fs_tok.split(['/', '(']).next().unwrap_or(fs_tok);
    let sampling_rate: f64 = num(fs_main, "sampling frequency")?;
    let n_samples: usize = match it.next() {
        Some(tok) => num(tok, "sample count")?,
        None => return Err(WfdbError::MalformedHeader("missing sample count".into())),
    };
    if n_signals == 0 {
        return Err(WfdbError::MalformedHeader(
            "record declares no signals".into(),
        ));
    }
    if !(sampling_rate > 0.0) {
        return Err(WfdbError::MalformedHeader(
            "sampling frequency must be positive".into(),
        ));
    }

    let mut signals = Vec::with_capacity(n_signals);
    for idx in 0..n_signals {
        let line = lines.next().ok_or_else(|| {
            WfdbError::MalformedHeader(format!("missing specification line for signal {idx}"))
        })?;
        signals.push(parse_signal_line(&line, idx)?);
    }
    // Drain so trailing comment lines are collected.
    lines.by_ref().for_each(drop);
    drop(lines);

    Ok(RecordHeader {
        record_name: name.to_string(),
        n_signals,
        sampling_rate,
        n_samples,
        signals,
        comments,
    })
}

fn parse_signal_line(line: &str, idx: usize) -> Result<SignalSpec, WfdbError> {
    let mut it = line.split_whitespace();
    let file_name = field(&mut it, "signal file name")?.to_string();
    let fmt_tok = field(&mut it, "storage format")?;
    // Format may carry "x<spf>", ":<skew>" or "+<offset>" suffixes.
    let fmt_main = fmt_tok.split(['x', ':', '+']).next().unwrap_or(fmt_tok);
    let storage_format: u32 = num(fmt_main, "storage format")?;
    if storage_format != 212 {
        return Err(WfdbError::UnsupportedFormat {
            signal: idx,
            format: storage_format,
        });
    }

    let (adc_gain, baseline) = match it.next() {
        Some(tok) => parse_gain(tok)?,
        None => (200.0, None),
    };
    if !(adc_gain > 0.0) {
        return Err(WfdbError::MalformedHeader(format!(
            "signal {idx}: ADC gain must be positive"
        )));
    }
    let adc_resolution = match it.next() {
        Some(t) => num(t, "ADC resolution")?,
        None => 12,
    };
    let adc_zero: i32 = match it.next() {
        Some(t) => num(t, "ADC zero")?,
        None => 0,
    };
    let initial_value = match it.next() {
        Some(t) => num(t, "initial value")?,
        None => adc_zero,
    };
    let checksum = match it.next() {
        Some(t) => num(t, "checksum")?,
        None => 0,
    };
    let block_size = match it.next() {
        Some(t) => num(t, "block size")?,
        None => 0,
    };
    let lead_name = it.collect::<Vec<_>>().join(" ");
    let baseline = baseline.unwrap_or(adc_zero);

    Ok(SignalSpec {
        file_name,
        storage_format,
        adc_gain,
        adc_resolution,
        adc_zero,
        baseline,
        initial_value,
        checksum,
        block_size,
        lead_name,
    })
}

fn parse_gain(tok: &str) -> Result<(f64, Option<i32>), WfdbError> {
    let tok = tok.split('/').next().unwrap_or(tok);
    match tok.split_once('(') {
        Some((g, rest)) => {
            let b = rest.trim_end_matches(')');
            Ok((num(g, "ADC gain")?, Some(num(b, "ADC baseline")?)))
        }
        None => Ok((num(tok, "ADC gain")?, None)),
    }
}

/// Decodes format-212 packed samples.
///
/// Each 3-byte group carries two 12-bit two's-complement samples; channels are
/// interleaved sample by sample in the stream.
pub fn read_signal_212(
    bytes: &[u8],
    n_signals: usize,
    n_samples: usize,
) -> Result<Vec<Vec<i32>>, WfdbError> {
    let total = n_signals * n_samples;
    let needed = (total * 3).div_ceil(2);
    if bytes.len() < needed {
        return Err(WfdbError::TruncatedSignal {
            needed,
            available: bytes.len(),
        });
    }
    let mut out = vec![Vec::with_capacity(n_samples); n_signals];
    for k in 0..total {
        let base = (k / 2) * 3;
        let raw = if k % 2 == 0 {
            bytes[base] as i32 | ((bytes[base + 1] as i32 & 0x0F) << 8)
        } else {
            bytes[base + 2] as i32 | ((bytes[base + 1] as i32 & 0xF0) << 4)
        };
        out[k % n_signals].push(sign_extend_12(raw));
    }
    Ok(out)
}

#[inline]
fn sign_extend_12(v: i32) -> i32 {
    if v & 0x800 != 0 {
        v - 0x1000
    } else {
        v
    }
}

/// Packs interleaved samples into format 212. Values are truncated to 12 bits.
pub fn encode_212(signals: &[Vec<i32>]) -> Vec<u8> {
    let n_signals = signals.len();
    let n_samples = signals.first().map_or(0, Vec::len);
    let total = n_signals * n_samples;
    let mut out = Vec::with_capacity((total * 3).div_ceil(2));
    let sample = |k: usize| (signals[k % n_signals][k / n_signals] & 0xFFF) as u32;
    let mut k = 0;
    while k < total {
        let s0 = sample(k);
        if k + 1 < total {
            let s1 = sample(k + 1);
            out.push((s0 & 0xFF) as u8);
            out.push((((s0 >> 8) & 0x0F) | ((s1 >> 4) & 0xF0)) as u8);
            out.push((s1 & 0xFF) as u8);
        } else {
            out.push((s0 & 0xFF) as u8);
            out.push(((s0 >> 8) & 0x0F) as u8);
        }
        k += 2;
    }
    out
}

const SKIP: u8 = 59;
const NUM: u8 = 60;
const SUB: u8 = 61;
const CHN: u8 = 62;
const AUX: u8 = 63;

/// MIT-BIH mnemonic for an annotation code, if it has one.
pub fn code_to_symbol(code: u8) -> Option<char> {
    const TABLE: [Option<char>; 42] = [
        Some(' '),
        Some('N'),
        Some('L'),
        Some('R'),
        Some('a'),
        Some('V'),
        Some('F'),
        Some('J'),
        Some('A'),
        Some('S'),
        Some('E'),
        Some('j'),
        Some('/'),
        Some('Q'),
        Some('~'),
        None,
        Some('|'),
        None,
        Some('s'),
        Some('T'),
        Some('*'),
        Some('D'),
        Some('"'),
        Some('='),
        Some('p'),
        Some('B'),
        Some('^'),
        Some('t'),
        Some('+'),
        Some('u'),
        Some('?'),
        Some('!'),
        Some('['),
        Some(']'),
        Some('e'),
        Some('n'),
        Some('@'),
        Some('x'),
        Some('f'),
        Some('('),
        Some(')'),
        Some('r'),
    ];
    TABLE.get(code as usize).copied().flatten()
}

/// Inverse of [`code_to_symbol`].
pub fn symbol_to_code(symbol: char) -> Option<u8> {
    (0u8..42).find(|&c| code_to_symbol(c) == Some(symbol))
}

/// Decodes an MIT-format annotation stream.
///
/// Sample positions are reconstructed from interval codes; SKIP, NUM, SUB, CHN
/// and AUX pseudo-codes modify the surrounding annotation and are never
/// emitted on their own. Decoding stops at the 0x0000 end marker or at the end
/// of the buffer.
pub fn read_annotations(bytes: &[u8]) -> Result<Vec<AnnotationEvent>, WfdbError> {
    let mut events: Vec<AnnotationEvent> = Vec::new();
    let mut time: i64 = 0;
    let mut channel: u8 = 0;
    let mut pos = 0usize;

    let word_at = |pos: usize| -> Result<u16, WfdbError> {
        match bytes.get(pos..pos + 2) {
            Some(b) => Ok(u16::from_le_bytes([b[0], b[1]])),
            None => Err(WfdbError::MalformedAnnotation {
                offset: pos,
                reason: "odd trailing byte",
            }),
        }
    };

    while pos < bytes.len() {
        let word = word_at(pos)?;
        if word == 0 {
            break;
        }
        let code = (word >> 10) as u8;
        let interval = (word & 0x03FF) as i64;
        match code {
            SKIP => {
                let hi = bytes
                    .get(pos + 2..pos + 6)
                    .ok_or(WfdbError::MalformedAnnotation {
                        offset: pos,
                        reason: "SKIP without its 32-bit interval",
                    })?;
                let high = u16::from_le_bytes([hi[0], hi[1]]) as u32;
                let low = u16::from_le_bytes([hi[2], hi[3]]) as u32;
                time += ((high << 16) | low) as i32 as i64;
                pos += 6;
            }
            NUM => pos += 2,
            SUB => {
                if let Some(last) = events.last_mut() {
                    last.subtype = (word & 0xFF) as u8 as i8;
                }
                pos += 2;
            }
            CHN => {
                channel = (word & 0xFF) as u8;
                if let Some(last) = events.last_mut() {
                    last.channel = channel;
                }
                pos += 2;
            }
            AUX => {
                let len = interval as usize;
                let start = pos + 2;
                let padded = len + (len & 1);
                let payload =
                    bytes
                        .get(start..start + padded)
                        .ok_or(WfdbError::MalformedAnnotation {
                            offset: pos,
                            reason: "AUX payload runs past end of stream",
                        })?;
                if let Some(last) = events.last_mut() {
                    last.aux = Some(payload[..len].to_vec());
                }
                pos = start + padded;
            }
            _ => {
                time += interval;
                if time < 0 {
                    return Err(WfdbError::MalformedAnnotation {
                        offset: pos,
                        reason: "negative sample position",
                    });
                }
                let symbol = code_to_symbol(code);
                events.push(AnnotationEvent {
                    sample_index: time as u64,
                    code,
                    symbol: symbol.unwrap_or(char::REPLACEMENT_CHARACTER),
                    known: symbol.is_some(),
                    channel,
                    subtype: 0,
                    aux: None,
                });
                pos += 2;
            }
        }
    }
    Ok(events)
}

/// `(adc - zero) / gain`, in millivolts.
#[inline]
pub fn adc_to_mv(adc: i32, gain: f64, zero: i32) -> f64 {
    (adc - zero) as f64 / gain
}

/// Parses a record from its three files' contents.
pub fn parse_record(
    header_text: &str,
    dat: &[u8],
    atr: &[u8],
    patient_id: u32,
) -> Result<EcgRecord, WfdbError> {
    let header = parse_header(header_text)?;
    let signals = read_signal_212(dat, header.n_signals, header.n_samples)?;
    let annotations = read_annotations(atr)?;
    if annotations
        .iter()
        .any(|a| a.sample_index >= header.n_samples as u64)
    {
        return Err(WfdbError::MalformedAnnotation {
            offset: 0,
            reason: "annotation beyond end of record",
        });
    }
    Ok(EcgRecord {
        header,
        signals,
        annotations,
        patient_id,
    })
}

fn read_file(path: &Path) -> Result<Vec<u8>, WfdbError> {
    std::fs::read(path).map_err(|e| WfdbError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Loads `<dir>/<record>.hea`, the signal file it names, and `<record>.atr`.
pub fn load_record(dir: &Path, record: &str) -> Result<EcgRecord, WfdbError> {
    let hea = read_file(&dir.join(format!("{record}.hea")))?;
    let text = String::from_utf8_lossy(&hea);
    let header = parse_header(&text)?;
    let dat_name = header.signals[0].file_name.clone();
    let dat = read_file(&dir.join(dat_name))?;
    let atr = read_file(&dir.join(format!("{record}.atr")))?;
    let patient_id = record.parse().unwrap_or(0);
    parse_record(&text, &dat, &atr, patient_id)
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER_100: &str = "100 2 360 650000\n\
        100.dat 212 200 11 1024 995 -22131 0 MLII\n\
        100.dat 212 200 11 1024 1011 20052 0 V5\n\
        # 69 M 1085 1629 x1\n\
        # Aldomet, Inderal\n";

    #[test]
    fn record_100_header() {
        let h = parse_header(HEADER_100).unwrap();
        assert_eq!(h.sampling_rate, 360.0);
        assert_eq!(h.n_signals, 2);
        assert_eq!(h.n_samples, 650_000);
        assert_eq!(h.signals[0].storage_format, 212);
        assert_eq!(h.signals[0].adc_gain, 200.0);
        assert_eq!(h.signals[0].lead_name, "MLII");
        assert_eq!(h.signals[0].initial_value, 995);
        assert_eq!(h.signals[1].lead_name, "V5");
        assert_eq!(h.comments.len(), 2);
    }

    #[test]
    fn synthetic_one_signal_header() {
        let h = parse_header("t 1 360 3\nt.dat 212 200 11 1024 0 0 0 0 X").unwrap();
        assert_eq!(h.n_samples, 3);
        assert_eq!(h.signals[0].adc_zero, 1024);
        // Seven numeric fields precede the description, so the spare "0" joins it.
        assert_eq!(h.signals[0].lead_name, "0 X");
    }

    #[test]
    fn format_16_rejected() {
        let err = parse_header("t 1 360 3\nt.dat 16 200 11 1024 0 0 0 0 X").unwrap_err();
        assert_eq!(
            err,
            WfdbError::UnsupportedFormat {
                signal: 0,
                format: 16
            }
        );
    }

    #[test]
    fn missing_signal_line() {
        assert!(matches!(
            parse_header("t 2 360 3\nt.dat 212 200 11 1024 0 0 0 0 X"),
            Err(WfdbError::MalformedHeader(_))
        ));
        assert!(matches!(
            parse_header("# only a comment\n"),
            Err(WfdbError::MalformedHeader(_))
        ));
        assert!(matches!(
            parse_header("t 1"),
            Err(WfdbError::MalformedHeader(_))
        ));
    }

    #[test]
    fn gain_with_baseline_and_units() {
        let h = parse_header("t 1 360 3\nt.dat 212 200(1000)/mV 11 1024 0 0 0 lead II").unwrap();
        assert_eq!(h.signals[0].adc_gain, 200.0);
        assert_eq!(h.signals[0].baseline, 1000);
        assert_eq!(h.signals[0].adc_zero, 1024);
        assert_eq!(h.signals[0].lead_name, "lead II");
    }

    #[test]
    fn decode_212_worked_example() {
        assert_eq!(
            read_signal_212(&[0xE8, 0x3F, 0x10], 1, 2).unwrap(),
            vec![vec![-24, 784]]
        );
        assert_eq!(read_signal_212(&[0, 0, 0], 1, 2).unwrap(), vec![vec![0, 0]]);
    }

    #[test]
    fn decode_212_truncated() {
        assert_eq!(
            read_signal_212(&[0xE8, 0x3F], 1, 2).unwrap_err(),
            WfdbError::TruncatedSignal {
                needed: 3,
                available: 2
            }
        );
    }

    #[test]
    fn decode_212_interleaves_channels() {
        let sig = vec![vec![1, -2, 3], vec![-2048, 2047, 0]];
        let bytes = encode_212(&sig);
        assert_eq!(bytes.len(), 9);
        assert_eq!(read_signal_212(&bytes, 2, 3).unwrap(), sig);
    }

    #[test]
    fn odd_sample_count_uses_partial_group() {
        let sig = vec![vec![5, -6, 7]];
        let bytes = encode_212(&sig);
        assert_eq!(bytes.len(), 5);
        assert_eq!(read_signal_212(&bytes, 1, 3).unwrap(), sig);
    }

    fn word(code: u8, interval: u16) -> [u8; 2] {
        (((code as u16) << 10) | interval).to_le_bytes()
    }

    #[test]
    fn end_marker_only() {
        assert!(read_annotations(&[0, 0]).unwrap().is_empty());
        assert!(read_annotations(&[]).unwrap().is_empty());
    }

    #[test]
    fn cumulative_intervals() {
        let mut b = Vec::new();
        b.extend(word(1, 10));
        b.extend(word(5, 5));
        b.extend([0, 0]);
        let ev = read_annotations(&b).unwrap();
        assert_eq!(
            ev.iter().map(|e| e.sample_index).collect::<Vec<_>>(),
            vec![10, 15]
        );
        assert_eq!(ev[0].symbol, 'N');
        assert_eq!(ev[1].symbol, 'V');
    }

    #[test]
    fn pseudo_codes_are_consumed() {
        let mut b = Vec::new();
        b.extend(word(SKIP, 0));
        // 70000 = 0x0001_1170: high word then low word, each little-endian.
        b.extend(1u16.to_le_bytes());
        b.extend(0x1170u16.to_le_bytes());
        b.extend(word(1, 3));
        b.extend(word(CHN, 1));
        b.extend(word(AUX, 3));
        b.extend(b"(N\0\0");
        b.extend(word(NUM, 2));
        b.extend(word(28, 2));
        b.extend([0, 0]);
        let ev = read_annotations(&b).unwrap();
        assert_eq!(ev.len(), 2);
        assert_eq!(ev[0].sample_index, 70_003);
        assert_eq!(ev[0].channel, 1);
        assert_eq!(ev[0].aux.as_deref(), Some(&b"(N\0"[..]));
        assert_eq!(ev[1].sample_index, 70_005);
        assert_eq!(ev[1].symbol, '+');
        assert_eq!(ev[1].channel, 1, "channel carries over");
    }

    #[test]
    fn dangling_multibyte_code() {
        let mut b = Vec::new();
        b.extend(word(1, 3));
        b.extend(word(SKIP, 0));
        b.extend([1, 0]);
        assert!(matches!(
            read_annotations(&b),
            Err(WfdbError::MalformedAnnotation { .. })
        ));

        let mut b = Vec::new();
        b.extend(word(1, 3));
        b.extend(word(AUX, 5));
        b.extend(b"ab");
        assert!(matches!(
            read_annotations(&b),
            Err(WfdbError::MalformedAnnotation { .. })
        ));

        assert!(matches!(
            read_annotations(&[4, 4, 1]),
            Err(WfdbError::MalformedAnnotation { .. })
        ));
    }

    #[test]
    fn unknown_code_flagged() {
        let mut b = Vec::new();
        b.extend(word(15, 1));
        let ev = read_annotations(&b).unwrap();
        assert!(!ev[0].known);
        assert_eq!(ev[0].code, 15);
    }

    #[test]
    fn symbol_table_round_trip() {
        for c in "NLRaVFJASEj/Q~|sT*D\"=pB^t+u?![]en@xf()r".chars() {
            assert_eq!(code_to_symbol(symbol_to_code(c).unwrap()), Some(c));
        }
    }

    #[test]
    fn adc_conversion() {
        assert_eq!(adc_to_mv(1024, 200.0, 1024), 0.0);
        assert_eq!(adc_to_mv(1224, 200.0, 1024), 1.0);
        assert!((adc_to_mv(995, 200.0, 1024) + 0.145).abs() < 1e-12);
    }
}
