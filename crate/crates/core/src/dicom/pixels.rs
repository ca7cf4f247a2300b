use std::borrow::Cow;

use super::parse::Cursor;
use super::{DicomError, DicomObject, PayloadKind, PixelMatrix, Tag};

const UNDEFINED_LENGTH: u32 = 0xFFFF_FFFF;

/// Pixel bytes ready for decoding: raw little-endian samples for native
/// data, a bare codestream for encapsulated data.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExtractedPayload<'a> {
    pub kind: PayloadKind,
    pub bytes: Cow<'a, [u8]>,
}

fn malformed(msg: impl Into<String>) -> DicomError {
    DicomError::MalformedEncapsulation(msg.into())
}

fn encapsulation_error(err: DicomError) -> DicomError {
    match err {
        DicomError::TruncatedElement {
            offset,
            needed,
            available,
        } => malformed(format!(
            "item at payload offset {offset} needs {needed} bytes, {available} remain"
        )),
        other => other,
    }
}

/// Returns the pixel bytes of the first (only) frame.
///
/// For encapsulated data the basic offset table item is skipped and the
/// fragments of the first frame are concatenated.
pub fn extract_pixel_payload(obj: &DicomObject) -> Result<ExtractedPayload<'_>, DicomError> {
    match obj.payload_kind {
        PayloadKind::Native => Ok(ExtractedPayload {
            kind: PayloadKind::Native,
            bytes: Cow::Borrowed(&obj.pixel_payload),
        }),
        PayloadKind::Encapsulated => Ok(ExtractedPayload {
            kind: PayloadKind::Encapsulated,
            bytes: Cow::Owned(
                first_frame_fragments(&obj.pixel_payload).map_err(encapsulation_error)?,
            ),
        }),
    }
}

fn first_frame_fragments(payload: &[u8]) -> Result<Vec<u8>, DicomError> {
    let mut cur = Cursor::new(payload, 0);

    let tag = cur.tag()?;
    let length = cur.u32()?;
    if tag != Tag::ITEM {
        return Err(malformed(format!(
            "expected offset table item, found {tag}"
        )));
    }
    if length == UNDEFINED_LENGTH || length % 4 != 0 {
        return Err(malformed(format!("bad offset table length {length:#x}")));
    }
    let table = cur.take(length as usize)?;
    let offsets: Vec<u32> = table
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    let frame_end = offsets.get(1).copied().map(|o| o as usize);

    let first_item = cur.pos();
    let mut frame = Vec::new();
    let mut fragments = 0usize;
    loop {
        if cur.is_empty() {
            return Err(malformed("missing sequence delimiter"));
        }
        let item_offset = cur.pos() - first_item;
        let tag = cur.tag()?;
        let length = cur.u32()?;
        match tag {
            Tag::SEQUENCE_DELIMITATION => break,
            Tag::ITEM if length != UNDEFINED_LENGTH => {
                let bytes = cur.take(length as usize)?;
                if frame_end.is_none_or(|end| item_offset < end) {
                    frame.extend_from_slice(bytes);
                    fragments += 1;
                }
            }
            Tag::ITEM => return Err(malformed("fragment with undefined length")),
            other => {
                return Err(malformed(format!(
                    "unexpected tag {other} at payload offset {}",
                    first_item + item_offset
                )))
            }
        }
    }
    if fragments == 0 {
        return Err(malformed("no fragments"));
    }
    Ok(frame)
}

/// Decodes native little-endian samples, masking each to `bits_stored`.
///
/// The payload may carry one trailing pad byte when the sample area has odd
/// length.
pub fn decode_native_pixels(obj: &DicomObject) -> Result<PixelMatrix, DicomError> {
    if obj.payload_kind != PayloadKind::Native {
        return Err(DicomError::NotNative);
    }
    let rows = obj.rows();
    let columns = obj.columns();
    let bytes_per_sample = usize::from(obj.bits_allocated / 8);
    let expected = rows * columns * bytes_per_sample;
    let actual = obj.pixel_payload.len();
    if actual != expected && !(expected % 2 == 1 && actual == expected + 1) {
        return Err(DicomError::PayloadSizeMismatch { expected, actual });
    }
    let mask = ((1u32 << obj.bits_stored) - 1) as u16;
    let data = &obj.pixel_payload[..expected];
    let values: Vec<u16> = match bytes_per_sample {
        1 => data.iter().map(|&b| u16::from(b) & mask).collect(),
        _ => data
            .chunks_exact(2)
            .map(|c| u16::from_le_bytes([c[0], c[1]]) & mask)
            .collect(),
    };
    PixelMatrix::new(rows, columns, obj.bits_stored, values)
}
