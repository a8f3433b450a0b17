//! Text trace format.
//!
//! ```text
//! # name: jacobi
//! # source: synthetic:stencil1d
//! # element_size: 8
//! I 0 LOAD 0 r1 - 0x1000 8
//! I 1 IADD 0 r3 r1,r2
//! ```
//!
//! Lines starting with `#` are comments; `# key: value` comments with keys
//! `name`, `source` and `element_size` populate the trace metadata. Input
//! starting with the gzip magic bytes is decompressed transparently.

use std::io::{BufRead, BufReader, Read, Write};

use flate2::read::MultiGzDecoder;
use smallvec::SmallVec;

use super::{
    InstructionRecord, MemAccess, OpcodeClass, RegId, Trace, TraceError, TraceMeta, TraceSource,
    VALID_ACCESS_SIZES,
};

const GZIP_MAGIC: [u8; 2] = [0x1f, 0x8b];

/// Streaming record reader. Metadata comments are folded into [`meta`](Self::meta)
/// as they are encountered; every yielded record already satisfies the record
/// invariants and follows its predecessor's `seq_id`.
pub struct TraceReader<R> {
    input: R,
    line: String,
    line_no: u64,
    prev_seq: Option<u64>,
    meta: TraceMeta,
}

impl<R: BufRead> TraceReader<R> {
    pub fn new(input: R) -> Self {
        TraceReader {
            input,
            line: String::new(),
            line_no: 0,
            prev_seq: None,
            meta: TraceMeta::default(),
        }
    }

    pub fn meta(&self) -> &TraceMeta {
        &self.meta
    }

    pub fn into_meta(self) -> TraceMeta {
        self.meta
    }

    fn header(&mut self, comment: &str) {
        let Some((key, value)) = comment.split_once(':') else {
            return;
        };
        let value = value.trim();
        match key.trim() {
            "name" => self.meta.name = value.to_string(),
            "source" => {
                if let Ok(src) = value.parse::<TraceSource>() {
                    self.meta.source = src;
                }
            }
            "element_size" => {
                if let Ok(e) = value.parse() {
                    self.meta.element_size = Some(e);
                }
            }
            _ => {}
        }
    }
}

impl<R: BufRead> Iterator for TraceReader<R> {
    type Item = Result<InstructionRecord, TraceError>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            self.line.clear();
            match self.input.read_line(&mut self.line) {
                Ok(0) => return None,
                Ok(_) => {}
                Err(e) => return Some(Err(e.into())),
            }
            self.line_no += 1;
            let text = self.line.trim();
            if text.is_empty() {
                continue;
            }
            if let Some(comment) = text.strip_prefix('#') {
                let comment = comment.to_string();
                self.header(&comment);
                continue;
            }
            let record = match parse_record(text, self.line_no) {
                Ok(r) => r,
                Err(e) => return Some(Err(e)),
            };
            if let Some(prev) = self.prev_seq {
                if record.seq_id <= prev {
                    return Some(Err(TraceError::NonMonotoneSeq {
                        line: self.line_no,
                        prev,
                        got: record.seq_id,
                    }));
                }
            }
            self.prev_seq = Some(record.seq_id);
            return Some(Ok(record));
        }
    }
}

fn malformed(line: u64, reason: impl Into<String>) -> TraceError {
    TraceError::Malformed {
        line,
        reason: reason.into(),
    }
}

fn parse_record(text: &str, line: u64) -> Result<InstructionRecord, TraceError> {
    let mut fields = text.split_ascii_whitespace();
    let mut next = |what: &str| {
        fields
            .next()
            .ok_or_else(|| malformed(line, format!("missing {what}")))
    };

    let tag = next("record tag")?;
    if tag != "I" {
        return Err(malformed(
            line,
            format!("expected record tag `I`, found `{tag}`"),
        ));
    }
    let seq_id = next("seq_id")?
        .parse()
        .map_err(|_| malformed(line, "seq_id is not an unsigned integer"))?;
    let opcode: OpcodeClass = next("opcode")?.parse().map_err(|e| malformed(line, e))?;
    let bb_id = next("bb_id")?
        .parse()
        .map_err(|_| malformed(line, "bb_id is not an unsigned integer"))?;
    let dest = match next("dest")? {
        "-" => None,
        r => Some(r.parse::<RegId>().map_err(|e| malformed(line, e))?),
    };
    let sources = match next("sources")? {
        "-" => SmallVec::new(),
        list => list
            .split(',')
            .map(|r| r.parse::<RegId>().map_err(|e| malformed(line, e)))
            .collect::<Result<SmallVec<_>, _>>()?,
    };

    let mem = match fields.next() {
        None => None,
        Some(addr) => {
            let size = fields
                .next()
                .ok_or_else(|| malformed(line, "address without access size"))?;
            let hex = addr
                .strip_prefix("0x")
                .ok_or_else(|| malformed(line, "address must be 0x-prefixed hex"))?;
            let addr = u64::from_str_radix(hex, 16)
                .map_err(|_| malformed(line, format!("bad address `{addr}`")))?;
            let size = size
                .parse()
                .map_err(|_| malformed(line, format!("bad access size `{size}`")))?;
            Some(MemAccess { addr, size })
        }
    };
    if fields.next().is_some() {
        return Err(malformed(line, "trailing fields"));
    }

    match (opcode.is_memory(), mem) {
        (false, Some(_)) => return Err(TraceError::AddressOnNonMemory { line, opcode }),
        (true, None) => return Err(TraceError::MissingAddress { line, opcode }),
        (true, Some(m)) if !VALID_ACCESS_SIZES.contains(&m.size) => {
            return Err(TraceError::InvalidSize { line, size: m.size })
        }
        _ => {}
    }

    Ok(InstructionRecord {
        seq_id,
        opcode,
        bb_id,
        dest,
        sources,
        mem,
    })
}

/// Reads a whole trace from plain or gzip-compressed text.
pub fn parse_trace<R: Read>(input: R) -> Result<Trace, TraceError> {
    let mut buffered = BufReader::with_capacity(1 << 16, input);
    let is_gzip = buffered.fill_buf()?.starts_with(&GZIP_MAGIC);
    let stream: Box<dyn BufRead> = if is_gzip {
        Box::new(BufReader::with_capacity(
            1 << 16,
            MultiGzDecoder::new(buffered),
        ))
    } else {
        Box::new(buffered)
    };

    let mut reader = TraceReader::new(stream);
    let mut records = Vec::new();
    for record in reader.by_ref() {
        records.push(record?);
    }
    Ok(Trace::new(reader.into_meta(), records))
}

/// Writes the canonical text form: metadata header followed by one record per line.
pub fn write_trace<W: Write>(trace: &Trace, out: W) -> std::io::Result<()> {
    let mut out = std::io::BufWriter::with_capacity(1 << 16, out);
    let meta = trace.meta();
    writeln!(out, "# name: {}", meta.name)?;
    writeln!(out, "# source: {}", meta.source)?;
    if let Some(e) = meta.element_size {
        writeln!(out, "# element_size: {e}")?;
    }
    for r in trace {
        write!(out, "I {} {} {} ", r.seq_id, r.opcode, r.bb_id)?;
        match r.dest {
            Some(d) => write!(out, "{d}")?,
            None => out.write_all(b"-")?,
        }
        out.write_all(b" ")?;
        if r.sources.is_empty() {
            out.write_all(b"-")?;
        } else {
            for (i, s) in r.sources.iter().enumerate() {
                if i > 0 {
                    out.write_all(b",")?;
                }
                write!(out, "{s}")?;
            }
        }
        if let Some(m) = r.mem {
            write!(out, " {:#x} {}", m.addr, m.size)?;
        }
        out.write_all(b"\n")?;
    }
    out.flush()
}
