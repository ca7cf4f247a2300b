use std::collections::BTreeMap;

use super::{
    is_jpeg2000, trim_value, DicomError, DicomObject, PayloadKind, PhotometricInterpretation,
    RawElement, Tag, Vr, EXPLICIT_VR_LITTLE_ENDIAN,
};

const PREAMBLE_LEN: usize = 128;
const UNDEFINED_LENGTH: u32 = 0xFFFF_FFFF;
const MAX_SEQUENCE_DEPTH: usize = 32;

pub(super) struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    pub(super) fn new(data: &'a [u8], pos: usize) -> Self {
        Cursor { data, pos }
    }

    pub(super) fn pos(&self) -> usize {
        self.pos
    }

    pub(super) fn is_empty(&self) -> bool {
        self.pos >= self.data.len()
    }

    pub(super) fn remaining(&self) -> usize {
        self.data.len().saturating_sub(self.pos)
    }

    pub(super) fn take(&mut self, n: usize) -> Result<&'a [u8], DicomError> {
        if n > self.remaining() {
            return Err(DicomError::TruncatedElement {
                offset: self.pos,
                needed: n,
                available: self.remaining(),
            });
        }
        let out = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    pub(super) fn u16(&mut self) -> Result<u16, DicomError> {
        let b = self.take(2)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    pub(super) fn u32(&mut self) -> Result<u32, DicomError> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    pub(super) fn tag(&mut self) -> Result<Tag, DicomError> {
        let group = self.u16()?;
        let element = self.u16()?;
        Ok(Tag(group, element))
    }

    fn peek_tag(&self) -> Result<Tag, DicomError> {
        let mut probe = Cursor::new(self.data, self.pos);
        probe.tag()
    }

}

struct Header {
    tag: Tag,
    vr: Vr,
    length: u32,
}

fn read_header(cur: &mut Cursor<'_>) -> Result<Header, DicomError> {
    let offset = cur.pos();
    let tag = cur.tag()?;
    if tag.group() == 0xFFFE {
        return Err(DicomError::MalformedSequence(offset));
    }
    let code = cur.take(2)?;
    let vr = Vr([code[0], code[1]]);
    let length = match vr.has_long_length() {
        Some(true) => {
            cur.take(2)?;
            cur.u32()?
        }
        Some(false) => u32::from(cur.u16()?),
        None => return Err(DicomError::UnsupportedVr { tag, vr }),
    };
    Ok(Header { tag, vr, length })
}

/// Skips the items of an undefined-length sequence, including the closing
/// sequence delimiter.
fn skip_undefined_sequence(cur: &mut Cursor<'_>, depth: usize) -> Result<(), DicomError> {
    if depth > MAX_SEQUENCE_DEPTH {
        return Err(DicomError::MalformedSequence(cur.pos()));
    }
    loop {
        let offset = cur.pos();
        let tag = cur.tag()?;
        let length = cur.u32()?;
        match tag {
            Tag::SEQUENCE_DELIMITATION => return Ok(()),
            Tag::ITEM if length != UNDEFINED_LENGTH => {
                cur.take(length as usize)?;
            }
            Tag::ITEM => skip_undefined_item(cur, depth + 1)?,
            _ => return Err(DicomError::MalformedSequence(offset)),
        }
    }
}

/// Walks encapsulated pixel data up to and including its sequence
/// delimiter. Items must have defined lengths.
fn skip_fragments(cur: &mut Cursor<'_>) -> Result<(), DicomError> {
    loop {
        let offset = cur.pos();
        let tag = cur.tag()?;
        let length = cur.u32()?;
        match tag {
            Tag::SEQUENCE_DELIMITATION => return Ok(()),
            Tag::ITEM if length != UNDEFINED_LENGTH => {
                cur.take(length as usize)?;
            }
            _ => {
                return Err(DicomError::MalformedEncapsulation(format!(
                    "unexpected {tag} with length {length:#x} at offset {offset}"
                )))
            }
        }
    }
}

fn skip_undefined_item(cur: &mut Cursor<'_>, depth: usize) -> Result<(), DicomError> {
    loop {
        if cur.peek_tag()? == Tag::ITEM_DELIMITATION {
            cur.tag()?;
            cur.u32()?;
            return Ok(());
        }
        let header = read_header(cur)?;
        if header.length == UNDEFINED_LENGTH {
            if header.vr != Vr::SQ && header.vr != Vr::UN {
                return Err(DicomError::MalformedSequence(cur.pos()));
            }
            skip_undefined_sequence(cur, depth)?;
        } else {
            cur.take(header.length as usize)?;
        }
    }
}

fn string_value(tag: Tag, bytes: &[u8]) -> Result<String, DicomError> {
    let s = std::str::from_utf8(bytes).map_err(|_| DicomError::InvalidValue {
        tag,
        reason: "value is not valid text".into(),
    })?;
    Ok(trim_value(s).to_string())
}

fn us_value(tag: Tag, bytes: &[u8]) -> Result<u16, DicomError> {
    match bytes {
        [lo, hi] => Ok(u16::from_le_bytes([*lo, *hi])),
        _ => Err(DicomError::InvalidValue {
            tag,
            reason: format!("expected a 2-byte US value, got {} bytes", bytes.len()),
        }),
    }
}

fn check_transfer_syntax(uid: &str) -> Result<(), DicomError> {
    if uid == EXPLICIT_VR_LITTLE_ENDIAN || is_jpeg2000(uid) {
        Ok(())
    } else {
        Err(DicomError::UnsupportedTransferSyntax(uid.to_string()))
    }
}

#[derive(Default)]
struct Collected {
    transfer_syntax_uid: Option<String>,
    photometric: Option<String>,
    rows: Option<u16>,
    columns: Option<u16>,
    bits_allocated: Option<u16>,
    bits_stored: Option<u16>,
    pixel: Option<(Vec<u8>, PayloadKind)>,
}

/// Parses an explicit-VR little-endian DICOM file.
///
/// An undefined-length PixelData element (encapsulated payload) ends the
/// parse: all remaining bytes become the payload and their item structure
/// is validated by [`extract_pixel_payload`](super::extract_pixel_payload).
pub fn parse_dicom(bytes: &[u8]) -> Result<DicomObject, DicomError> {
    if bytes.len() < PREAMBLE_LEN + 4 || &bytes[PREAMBLE_LEN..PREAMBLE_LEN + 4] != b"DICM" {
        return Err(DicomError::MissingMagic);
    }
    let mut cur = Cursor::new(bytes, PREAMBLE_LEN + 4);
    let mut found = Collected::default();
    let mut extra_tags = BTreeMap::new();
    let mut syntax_checked = false;

    while !cur.is_empty() {
        let header = read_header(&mut cur)?;
        let tag = header.tag;

        if tag.group() != 0x0002 && !syntax_checked {
            let uid = found
                .transfer_syntax_uid
                .as_deref()
                .ok_or(DicomError::MissingRequiredTag(Tag::TRANSFER_SYNTAX_UID))?;
            check_transfer_syntax(uid)?;
            syntax_checked = true;
        }

        if tag == Tag::PIXEL_DATA {
            if header.length == UNDEFINED_LENGTH {
                let start = cur.pos();
                skip_fragments(&mut cur)?;
                found.pixel = Some((bytes[start..cur.pos()].to_vec(), PayloadKind::Encapsulated));
                continue;
            }
            let value = cur.take(header.length as usize)?;
            found.pixel = Some((value.to_vec(), PayloadKind::Native));
            continue;
        }

        let value = if header.length == UNDEFINED_LENGTH {
            if header.vr != Vr::SQ && header.vr != Vr::UN {
                return Err(DicomError::InvalidValue {
                    tag,
                    reason: format!("undefined length on {} element", header.vr),
                });
            }
            let start = cur.pos();
            skip_undefined_sequence(&mut cur, 0)?;
            &bytes[start..cur.pos()]
        } else {
            cur.take(header.length as usize)?
        };

        match tag {
            Tag::TRANSFER_SYNTAX_UID => found.transfer_syntax_uid = Some(string_value(tag, value)?),
            Tag::PHOTOMETRIC_INTERPRETATION => found.photometric = Some(string_value(tag, value)?),
            Tag::ROWS => found.rows = Some(us_value(tag, value)?),
            Tag::COLUMNS => found.columns = Some(us_value(tag, value)?),
            Tag::BITS_ALLOCATED => found.bits_allocated = Some(us_value(tag, value)?),
            Tag::BITS_STORED => found.bits_stored = Some(us_value(tag, value)?),
            _ => {
                extra_tags.insert(
                    tag,
                    RawElement {
                        vr: header.vr,
                        value: value.to_vec(),
                    },
                );
            }
        }
    }

    let transfer_syntax_uid = found
        .transfer_syntax_uid
        .ok_or(DicomError::MissingRequiredTag(Tag::TRANSFER_SYNTAX_UID))?;
    check_transfer_syntax(&transfer_syntax_uid)?;
    let photometric = found
        .photometric
        .ok_or(DicomError::MissingRequiredTag(Tag::PHOTOMETRIC_INTERPRETATION))?;
    let rows = found.rows.ok_or(DicomError::MissingRequiredTag(Tag::ROWS))?;
    let columns = found.columns.ok_or(DicomError::MissingRequiredTag(Tag::COLUMNS))?;
    let bits_allocated = found
        .bits_allocated
        .ok_or(DicomError::MissingRequiredTag(Tag::BITS_ALLOCATED))?;
    let bits_stored = found
        .bits_stored
        .ok_or(DicomError::MissingRequiredTag(Tag::BITS_STORED))?;
    let (pixel_payload, payload_kind) = found
        .pixel
        .ok_or(DicomError::MissingRequiredTag(Tag::PIXEL_DATA))?;

    let photometric_interpretation =
        PhotometricInterpretation::from_value(&photometric).ok_or_else(|| {
            DicomError::InvalidValue {
                tag: Tag::PHOTOMETRIC_INTERPRETATION,
                reason: format!("unsupported photometric interpretation {photometric:?}"),
            }
        })?;
    if rows == 0 || columns == 0 {
        return Err(DicomError::InvalidValue {
            tag: if rows == 0 { Tag::ROWS } else { Tag::COLUMNS },
            reason: "image dimension is zero".into(),
        });
    }
    if bits_allocated != 8 && bits_allocated != 16 {
        return Err(DicomError::InvalidValue {
            tag: Tag::BITS_ALLOCATED,
            reason: format!("{bits_allocated} bits allocated, expected 8 or 16"),
        });
    }
    if bits_stored == 0 || bits_stored > bits_allocated {
        return Err(DicomError::InvalidValue {
            tag: Tag::BITS_STORED,
            reason: format!("{bits_stored} bits stored with {bits_allocated} allocated"),
        });
    }
    let encapsulated_syntax = is_jpeg2000(&transfer_syntax_uid);
    if encapsulated_syntax != (payload_kind == PayloadKind::Encapsulated) {
        return Err(DicomError::InvalidValue {
            tag: Tag::PIXEL_DATA,
            reason: format!(
                "{:?} pixel data under transfer syntax {transfer_syntax_uid}",
                payload_kind
            ),
        });
    }

    Ok(DicomObject {
        transfer_syntax_uid,
        photometric_interpretation,
        rows,
        columns,
        bits_allocated,
        bits_stored,
        pixel_payload,
        payload_kind,
        extra_tags,
    })
}
