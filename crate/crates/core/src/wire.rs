//! TLV-in-CSV wire format.
//!
//! A message is a comma-joined run of `TAG,LEN,V1,...,VLEN` triples. The first
//! triple is always `MSG,1,<kind>` and the second `SEQ,1,<n>`:
//!
//! ```text
//! PATTERN  MSG,1,PATTERN,SEQ,1,<n>,DELTA,1,<ms>,REP,1,<r>,DLY,1,<ms>,CH<k>,<len>,<v...>
//! STOP     MSG,1,STOP,SEQ,1,<n>
//! ACK      MSG,1,ACK,SEQ,1,<acked n>
//! HELLO    MSG,1,HELLO,SEQ,1,<n>,ID,1,<device id>,NCH,1,<channels>
//! ```
//!
//! Tags that a kind does not know are skipped when decoding.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::envelope::PWM_MAX;
use crate::{MAX_CHANNELS, MAX_DATAGRAM_BYTES, MAX_SAMPLES_PER_CHANNEL};

const MAX_TAG_LEN: usize = 8;
const MAX_DEVICE_ID_LEN: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MessageKind {
    Pattern,
    Stop,
    Ack,
    Hello,
}

impl MessageKind {
    pub fn as_str(self) -> &'static str {
        match self {
            MessageKind::Pattern => "PATTERN",
            MessageKind::Stop => "STOP",
            MessageKind::Ack => "ACK",
            MessageKind::Hello => "HELLO",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "PATTERN" => MessageKind::Pattern,
            "STOP" => MessageKind::Stop,
            "ACK" => MessageKind::Ack,
            "HELLO" => MessageKind::Hello,
            _ => return None,
        })
    }
}

impl fmt::Display for MessageKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One cycle of PWM samples per channel plus the repetition metadata the
/// device uses to expand it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatternPayload {
    pub delta_ms: u32,
    pub repeat: u32,
    pub delay_ms: u32,
    pub channels: BTreeMap<u8, Vec<u16>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Body {
    Pattern(PatternPayload),
    Stop,
    Ack,
    Hello { device_id: String, channel_count: u8 },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WireMessage {
    pub seq: u32,
    pub body: Body,
}

impl WireMessage {
    pub fn new(seq: u32, body: Body) -> Self {
        Self { seq, body }
    }

    pub fn ack(seq: u32) -> Self {
        Self { seq, body: Body::Ack }
    }

    pub fn kind(&self) -> MessageKind {
        match self.body {
            Body::Pattern(_) => MessageKind::Pattern,
            Body::Stop => MessageKind::Stop,
            Body::Ack => MessageKind::Ack,
            Body::Hello { .. } => MessageKind::Hello,
        }
    }
}

/// Where in the input an error was detected.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Position {
    pub token: usize,
    pub byte: usize,
}

impl fmt::Display for Position {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "token {} (byte {})", self.token, self.byte)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WireError {
    #[error("E_MALFORMED at {at}: {reason}")]
    Malformed { at: Position, reason: String },
    #[error("E_BAD_PREFIX at {at}: {reason}")]
    BadPrefix { at: Position, reason: String },
    #[error("E_RANGE at {at}: {reason}")]
    Range { at: Position, reason: String },
    #[error("E_TOO_LARGE: {size} bytes exceeds the {cap}-byte datagram cap")]
    TooLarge { size: usize, cap: usize },
    #[error("E_INVALID: {0}")]
    Invalid(String),
}

impl WireError {
    pub fn code(&self) -> &'static str {
        match self {
            WireError::Malformed { .. } => "E_MALFORMED",
            WireError::BadPrefix { .. } => "E_BAD_PREFIX",
            WireError::Range { .. } => "E_RANGE",
            WireError::TooLarge { .. } => "E_TOO_LARGE",
            WireError::Invalid(_) => "E_INVALID",
        }
    }
}

fn is_tag(s: &str) -> bool {
    (1..=MAX_TAG_LEN).contains(&s.len()) && s.bytes().all(|b| b.is_ascii_uppercase() || b.is_ascii_digit())
}

fn is_value(s: &str) -> bool {
    !s.is_empty() && s.bytes().all(|b| b.is_ascii_graphic() && b != b',')
}

pub fn is_valid_device_id(id: &str) -> bool {
    (1..=MAX_DEVICE_ID_LEN).contains(&id.len())
        && id
            .bytes()
            .all(|b| b.is_ascii_alphanumeric() || matches!(b, b'-' | b'_' | b'.'))
}

fn check_payload(p: &PatternPayload) -> Result<(), String> {
    if p.delta_ms < 1 {
        return Err("DELTA must be at least 1".into());
    }
    if p.repeat < 1 {
        return Err("REP must be at least 1".into());
    }
    if p.channels.is_empty() {
        return Err("PATTERN needs at least one channel".into());
    }
    for (&ch, samples) in &p.channels {
        if ch as usize >= MAX_CHANNELS {
            return Err(format!("channel {ch} out of range 0..{MAX_CHANNELS}"));
        }
        if samples.len() > MAX_SAMPLES_PER_CHANNEL {
            return Err(format!(
                "channel {ch} has {} samples (cap {MAX_SAMPLES_PER_CHANNEL})",
                samples.len()
            ));
        }
        if let Some(v) = samples.iter().find(|&&v| v > PWM_MAX) {
            return Err(format!("channel {ch} sample {v} exceeds {PWM_MAX}"));
        }
    }
    Ok(())
}

struct Writer(String);

impl Writer {
    fn field(&mut self, tag: &str, values: &[&dyn fmt::Display]) {
        use fmt::Write;
        if !self.0.is_empty() {
            self.0.push(',');
        }
        let _ = write!(self.0, "{tag},{}", values.len());
        for v in values {
            let _ = write!(self.0, ",{v}");
        }
    }
}

/// Encodes a message to its canonical byte form.
pub fn encode(msg: &WireMessage) -> Result<Vec<u8>, WireError> {
    let mut w = Writer(String::new());
    w.field("MSG", &[&msg.kind().as_str()]);
    w.field("SEQ", &[&msg.seq]);
    match &msg.body {
        Body::Stop | Body::Ack => {}
        Body::Hello { device_id, channel_count } => {
            if !is_valid_device_id(device_id) {
                return Err(WireError::Invalid(format!("invalid device id {device_id:?}")));
            }
            if !(1..=MAX_CHANNELS as u8).contains(channel_count) {
                return Err(WireError::Invalid(format!("channel count {channel_count} out of range 1..=8")));
            }
            w.field("ID", &[device_id]);
            w.field("NCH", &[channel_count]);
        }
        Body::Pattern(p) => {
            check_payload(p).map_err(WireError::Invalid)?;
            w.field("DELTA", &[&p.delta_ms]);
            w.field("REP", &[&p.repeat]);
            w.field("DLY", &[&p.delay_ms]);
            for (ch, samples) in &p.channels {
                let values: Vec<&dyn fmt::Display> = samples.iter().map(|v| v as &dyn fmt::Display).collect();
                w.field(&format!("CH{ch}"), &values);
            }
        }
    }
    let out = w.0.into_bytes();
    if out.len() > MAX_DATAGRAM_BYTES {
        return Err(WireError::TooLarge {
            size: out.len(),
            cap: MAX_DATAGRAM_BYTES,
        });
    }
    Ok(out)
}

#[derive(Clone, Copy)]
struct Token<'a> {
    text: &'a str,
    at: Position,
}

struct Field<'a> {
    tag: Token<'a>,
    values: Vec<Token<'a>>,
}

fn malformed(at: Position, reason: impl Into<String>) -> WireError {
    WireError::Malformed { at, reason: reason.into() }
}

fn range(at: Position, reason: impl Into<String>) -> WireError {
    WireError::Range { at, reason: reason.into() }
}

fn tokenize(input: &str) -> Vec<Token<'_>> {
    let mut byte = 0;
    input
        .split(',')
        .enumerate()
        .map(|(token, text)| {
            let t = Token {
                text,
                at: Position { token, byte },
            };
            byte += text.len() + 1;
            t
        })
        .collect()
}

fn parse_fields<'a>(tokens: &[Token<'a>]) -> Result<Vec<Field<'a>>, WireError> {
    let mut fields = Vec::new();
    let mut i = 0;
    while i < tokens.len() {
        let tag = tokens[i];
        if !is_tag(tag.text) {
            return Err(malformed(tag.at, format!("invalid tag {:?}", truncate(tag.text))));
        }
        let Some(len_tok) = tokens.get(i + 1) else {
            return Err(malformed(tag.at, format!("truncated triple: {} has no length", tag.text)));
        };
        let len = parse_digits(len_tok.text)
            .ok_or_else(|| malformed(len_tok.at, format!("length {:?} is not an integer", truncate(len_tok.text))))?;
        let start = i + 2;
        let available = (tokens.len() - start.min(tokens.len())) as u64;
        if len > available {
            return Err(malformed(
                len_tok.at,
                format!("{} declares {len} values but only {available} tokens remain", tag.text),
            ));
        }
        let end = start + len as usize;
        let values = tokens[start..end].to_vec();
        if let Some(bad) = values.iter().find(|v| !is_value(v.text)) {
            return Err(malformed(bad.at, "empty or non-printable value"));
        }
        fields.push(Field { tag, values });
        i = end;
    }
    Ok(fields)
}

fn truncate(s: &str) -> &str {
    match s.char_indices().nth(16) {
        Some((i, _)) => &s[..i],
        None => s,
    }
}

/// Decimal digits only, no sign; `None` if empty, non-digit or over `u64`.
fn parse_digits(s: &str) -> Option<u64> {
    if s.is_empty() || s.len() > 19 || !s.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    s.parse().ok()
}

fn single<'a>(field: &Field<'a>) -> Result<Token<'a>, WireError> {
    match field.values.as_slice() {
        [v] => Ok(*v),
        _ => Err(malformed(
            field.tag.at,
            format!("{} must have length 1, got {}", field.tag.text, field.values.len()),
        )),
    }
}

fn uint(tok: Token<'_>, what: &str, max: u64) -> Result<u64, WireError> {
    if tok.text.is_empty() || !tok.text.bytes().all(|b| b.is_ascii_digit()) {
        return Err(malformed(tok.at, format!("{what} {:?} is not an integer", truncate(tok.text))));
    }
    match parse_digits(tok.text) {
        Some(v) if v <= max => Ok(v),
        _ => Err(range(tok.at, format!("{what} {} exceeds {max}", truncate(tok.text)))),
    }
}

fn u32_field(field: &Field<'_>) -> Result<u32, WireError> {
    Ok(uint(single(field)?, field.tag.text, u64::from(u32::MAX))? as u32)
}

/// Decodes one datagram. Total over arbitrary input.
pub fn decode(bytes: &[u8]) -> Result<WireMessage, WireError> {
    let origin = Position { token: 0, byte: 0 };
    if bytes.is_empty() {
        return Err(malformed(origin, "empty message"));
    }
    let text = std::str::from_utf8(bytes).map_err(|e| {
        malformed(
            Position {
                token: bytes[..e.valid_up_to()].iter().filter(|&&b| b == b',').count(),
                byte: e.valid_up_to(),
            },
            "not valid UTF-8",
        )
    })?;
    let tokens = tokenize(text);
    let fields = parse_fields(&tokens)?;

    let mut it = fields.iter();
    let msg = it.next().filter(|f| f.tag.text == "MSG").ok_or_else(|| WireError::BadPrefix {
        at: origin,
        reason: "first field must be MSG".into(),
    })?;
    let kind_tok = single(msg)?;
    let kind = MessageKind::parse(kind_tok.text)
        .ok_or_else(|| malformed(kind_tok.at, format!("unknown message kind {:?}", truncate(kind_tok.text))))?;

    let seq_field = it.next().filter(|f| f.tag.text == "SEQ").ok_or_else(|| WireError::BadPrefix {
        at: fields.get(1).map_or(kind_tok.at, |f| f.tag.at),
        reason: "second field must be SEQ".into(),
    })?;
    let seq = u32_field(seq_field)?;

    let rest: Vec<&Field<'_>> = it.collect();
    let body = match kind {
        MessageKind::Stop => Body::Stop,
        MessageKind::Ack => Body::Ack,
        MessageKind::Hello => decode_hello(&rest, seq_field)?,
        MessageKind::Pattern => Body::Pattern(decode_pattern(&rest, seq_field)?),
    };
    Ok(WireMessage { seq, body })
}

fn take_unique<'f, 'a>(rest: &[&'f Field<'a>], tag: &str, anchor: &Field<'_>) -> Result<&'f Field<'a>, WireError> {
    let mut found = rest.iter().filter(|f| f.tag.text == tag);
    let first = found
        .next()
        .ok_or_else(|| malformed(anchor.tag.at, format!("missing {tag} field")))?;
    if let Some(dup) = found.next() {
        return Err(malformed(dup.tag.at, format!("duplicate {tag} field")));
    }
    Ok(first)
}

fn decode_hello(rest: &[&Field<'_>], anchor: &Field<'_>) -> Result<Body, WireError> {
    let id = single(take_unique(rest, "ID", anchor)?)?;
    if !is_valid_device_id(id.text) {
        return Err(malformed(id.at, "invalid device id"));
    }
    let nch_tok = single(take_unique(rest, "NCH", anchor)?)?;
    let nch = uint(nch_tok, "NCH", u64::from(u32::MAX))?;
    if !(1..=MAX_CHANNELS as u64).contains(&nch) {
        return Err(range(nch_tok.at, format!("NCH {nch} outside 1..={MAX_CHANNELS}")));
    }
    Ok(Body::Hello {
        device_id: id.text.to_owned(),
        channel_count: nch as u8,
    })
}

fn decode_pattern(rest: &[&Field<'_>], anchor: &Field<'_>) -> Result<PatternPayload, WireError> {
    let delta_field = take_unique(rest, "DELTA", anchor)?;
    let delta_ms = u32_field(delta_field)?;
    if delta_ms < 1 {
        return Err(range(delta_field.values[0].at, "DELTA must be at least 1"));
    }
    let rep_field = take_unique(rest, "REP", anchor)?;
    let repeat = u32_field(rep_field)?;
    if repeat < 1 {
        return Err(range(rep_field.values[0].at, "REP must be at least 1"));
    }
    let delay_ms = u32_field(take_unique(rest, "DLY", anchor)?)?;

    let mut channels = BTreeMap::new();
    for field in rest {
        let Some(index) = field.tag.text.strip_prefix("CH") else {
            continue;
        };
        if index.is_empty() || !index.bytes().all(|b| b.is_ascii_digit()) {
            continue;
        }
        let ch = match index.parse::<u8>() {
            Ok(ch) if index.len() == 1 && (ch as usize) < MAX_CHANNELS => ch,
            _ => return Err(range(field.tag.at, format!("channel {index} outside 0..{MAX_CHANNELS}"))),
        };
        if field.values.len() > MAX_SAMPLES_PER_CHANNEL {
            return Err(range(
                field.tag.at,
                format!("{} has {} samples (cap {MAX_SAMPLES_PER_CHANNEL})", field.tag.text, field.values.len()),
            ));
        }
        let samples = field
            .values
            .iter()
            .map(|v| uint(*v, "PWM value", u64::from(PWM_MAX)).map(|x| x as u16))
            .collect::<Result<Vec<_>, _>>()?;
        if channels.insert(ch, samples).is_some() {
            return Err(malformed(field.tag.at, format!("duplicate {} field", field.tag.text)));
        }
    }
    if channels.is_empty() {
        return Err(malformed(anchor.tag.at, "PATTERN carries no CH fields"));
    }
    Ok(PatternPayload {
        delta_ms,
        repeat,
        delay_ms,
        channels,
    })
}
