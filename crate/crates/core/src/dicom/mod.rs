//! Minimal DICOM Part 10 reader.
//!
//! Only what the mammography pipeline needs is interpreted: the transfer
//! syntax, photometric interpretation, image geometry, bit depth and the
//! pixel payload. Every other element is kept verbatim in
//! [`DicomObject::extra_tags`].
//!
//! Supported encodings:
//!
//! - Explicit VR Little Endian (`1.2.840.10008.1.2.1`), native pixel data.
//! - The JPEG 2000 family (`1.2.840.10008.1.2.4.90` to `.93`), encapsulated
//!   pixel data. The codestream is extracted, never decoded here.
//!
//! Implicit VR and big-endian files are rejected.

pub mod fixture;
mod parse;
mod pixels;

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

pub use parse::parse_dicom;
pub use pixels::{decode_native_pixels, extract_pixel_payload, ExtractedPayload};

pub const EXPLICIT_VR_LITTLE_ENDIAN: &str = "1.2.840.10008.1.2.1";
pub const IMPLICIT_VR_LITTLE_ENDIAN: &str = "1.2.840.10008.1.2";
pub const JPEG2000_LOSSLESS: &str = "1.2.840.10008.1.2.4.90";
pub const JPEG2000: &str = "1.2.840.10008.1.2.4.91";
pub const JPEG2000_PART2_LOSSLESS: &str = "1.2.840.10008.1.2.4.92";
pub const JPEG2000_PART2: &str = "1.2.840.10008.1.2.4.93";

/// Whether the transfer syntax belongs to the JPEG 2000 encapsulated family.
pub fn is_jpeg2000(uid: &str) -> bool {
    matches!(
        uid,
        JPEG2000_LOSSLESS | JPEG2000 | JPEG2000_PART2_LOSSLESS | JPEG2000_PART2
    )
}

/// A data element tag, `(group,element)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Tag(pub u16, pub u16);

impl Tag {
    pub const FILE_META_GROUP_LENGTH: Tag = Tag(0x0002, 0x0000);
    pub const TRANSFER_SYNTAX_UID: Tag = Tag(0x0002, 0x0010);
    pub const PHOTOMETRIC_INTERPRETATION: Tag = Tag(0x0028, 0x0004);
    pub const ROWS: Tag = Tag(0x0028, 0x0010);
    pub const COLUMNS: Tag = Tag(0x0028, 0x0011);
    pub const BITS_ALLOCATED: Tag = Tag(0x0028, 0x0100);
    pub const BITS_STORED: Tag = Tag(0x0028, 0x0101);
    pub const PIXEL_DATA: Tag = Tag(0x7FE0, 0x0010);

    pub const ITEM: Tag = Tag(0xFFFE, 0xE000);
    pub const ITEM_DELIMITATION: Tag = Tag(0xFFFE, 0xE00D);
    pub const SEQUENCE_DELIMITATION: Tag = Tag(0xFFFE, 0xE0DD);

    pub fn group(self) -> u16 {
        self.0
    }

    pub fn element(self) -> u16 {
        self.1
    }
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({:04X},{:04X})", self.0, self.1)
    }
}

/// Two-letter value representation code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Vr(pub [u8; 2]);

impl Vr {
    pub const OB: Vr = Vr(*b"OB");
    pub const OW: Vr = Vr(*b"OW");
    pub const SQ: Vr = Vr(*b"SQ");
    pub const UN: Vr = Vr(*b"UN");
    pub const UI: Vr = Vr(*b"UI");
    pub const CS: Vr = Vr(*b"CS");
    pub const US: Vr = Vr(*b"US");
    pub const UL: Vr = Vr(*b"UL");
    pub const LO: Vr = Vr(*b"LO");

    const LONG: [&'static [u8; 2]; 13] = [
        b"OB", b"OD", b"OF", b"OL", b"OV", b"OW", b"SQ", b"SV", b"UC", b"UN", b"UR", b"UT",
        b"UV",
    ];
    const SHORT: [&'static [u8; 2]; 21] = [
        b"AE", b"AS", b"AT", b"CS", b"DA", b"DS", b"DT", b"FL", b"FD", b"IS", b"LO", b"LT",
        b"PN", b"SH", b"SL", b"SS", b"ST", b"TM", b"UI", b"UL", b"US",
    ];

    /// `Some(true)` for VRs with a reserved field and 32-bit length,
    /// `Some(false)` for 16-bit length VRs, `None` if the code is unknown.
    pub fn has_long_length(self) -> Option<bool> {
        if Self::LONG.contains(&&self.0) {
            Some(true)
        } else if Self::SHORT.contains(&&self.0) {
            Some(false)
        } else {
            None
        }
    }

    /// Padding byte used to bring string values to even length.
    pub fn pad_byte(self) -> u8 {
        if self == Vr::UI || self == Vr::OB || self == Vr::UN {
            0
        } else {
            b' '
        }
    }
}

impl fmt::Display for Vr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.0[0] as char, self.0[1] as char)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum PhotometricInterpretation {
    #[serde(rename = "MONOCHROME1")]
    Monochrome1,
    #[serde(rename = "MONOCHROME2")]
    Monochrome2,
}

impl PhotometricInterpretation {
    pub fn as_str(self) -> &'static str {
        match self {
            PhotometricInterpretation::Monochrome1 => "MONOCHROME1",
            PhotometricInterpretation::Monochrome2 => "MONOCHROME2",
        }
    }

    /// Parses a (possibly padded) attribute value.
    pub fn from_value(value: &str) -> Option<Self> {
        match trim_value(value) {
            "MONOCHROME1" => Some(PhotometricInterpretation::Monochrome1),
            "MONOCHROME2" => Some(PhotometricInterpretation::Monochrome2),
            _ => None,
        }
    }
}

impl fmt::Display for PhotometricInterpretation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PayloadKind {
    Native,
    Encapsulated,
}

/// An element kept as-is: VR plus undecoded value bytes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawElement {
    pub vr: Vr,
    pub value: Vec<u8>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DicomError {
    #[error("not a DICOM file: missing 128-byte preamble and DICM magic")]
    MissingMagic,
    #[error("required tag {0} is missing")]
    MissingRequiredTag(Tag),
    #[error("unsupported value representation {vr} at tag {tag}")]
    UnsupportedVr { tag: Tag, vr: Vr },
    #[error("element at offset {offset} is truncated: needs {needed} bytes, {available} remain")]
    TruncatedElement {
        offset: usize,
        needed: usize,
        available: usize,
    },
    #[error("unsupported transfer syntax {0}")]
    UnsupportedTransferSyntax(String),
    #[error("tag {tag} has an invalid value: {reason}")]
    InvalidValue { tag: Tag, reason: String },
    #[error("malformed sequence at offset {0}")]
    MalformedSequence(usize),
    #[error("malformed encapsulated pixel data: {0}")]
    MalformedEncapsulation(String),
    #[error("pixel payload has {actual} bytes, expected {expected}")]
    PayloadSizeMismatch { expected: usize, actual: usize },
    #[error("pixel data is encapsulated and must be decoded externally")]
    NotNative,
    #[error("pixel matrix invariant violated: {0}")]
    InvalidPixelMatrix(String),
}

/// Right-trims DICOM pad characters (space and NUL) and leading spaces.
pub fn trim_value(value: &str) -> &str {
    value.trim_end_matches([' ', '\0']).trim_start_matches(' ')
}

/// Pads a string value to even length with the VR's pad byte.
pub fn pad_value(value: &str, vr: Vr) -> Vec<u8> {
    let mut bytes = value.as_bytes().to_vec();
    if bytes.len() % 2 == 1 {
        bytes.push(vr.pad_byte());
    }
    bytes
}

/// A parsed DICOM file. Immutable once constructed.
#[derive(Debug, Clone, PartialEq)]
pub struct DicomObject {
    pub(crate) transfer_syntax_uid: String,
    pub(crate) photometric_interpretation: PhotometricInterpretation,
    pub(crate) rows: u16,
    pub(crate) columns: u16,
    pub(crate) bits_allocated: u16,
    pub(crate) bits_stored: u16,
    pub(crate) pixel_payload: Vec<u8>,
    pub(crate) payload_kind: PayloadKind,
    pub(crate) extra_tags: BTreeMap<Tag, RawElement>,
}

impl DicomObject {
    pub fn transfer_syntax_uid(&self) -> &str {
        &self.transfer_syntax_uid
    }

    pub fn photometric_interpretation(&self) -> PhotometricInterpretation {
        self.photometric_interpretation
    }

    pub fn rows(&self) -> usize {
        self.rows as usize
    }

    pub fn columns(&self) -> usize {
        self.columns as usize
    }

    pub fn bits_allocated(&self) -> u16 {
        self.bits_allocated
    }

    pub fn bits_stored(&self) -> u16 {
        self.bits_stored
    }

    pub fn pixel_payload(&self) -> &[u8] {
        &self.pixel_payload
    }

    pub fn payload_kind(&self) -> PayloadKind {
        self.payload_kind
    }

    pub fn extra_tags(&self) -> &BTreeMap<Tag, RawElement> {
        &self.extra_tags
    }

    /// Re-encodes every captured element (except PixelData) to its on-disk
    /// value bytes. Interpreted attributes are written back with standard
    /// even-length padding.
    pub fn to_tag_values(&self) -> BTreeMap<Tag, Vec<u8>> {
        let mut out: BTreeMap<Tag, Vec<u8>> = self
            .extra_tags
            .iter()
            .map(|(tag, el)| (*tag, el.value.clone()))
            .collect();
        out.insert(
            Tag::TRANSFER_SYNTAX_UID,
            pad_value(&self.transfer_syntax_uid, Vr::UI),
        );
        out.insert(
            Tag::PHOTOMETRIC_INTERPRETATION,
            pad_value(self.photometric_interpretation.as_str(), Vr::CS),
        );
        out.insert(Tag::ROWS, self.rows.to_le_bytes().to_vec());
        out.insert(Tag::COLUMNS, self.columns.to_le_bytes().to_vec());
        out.insert(Tag::BITS_ALLOCATED, self.bits_allocated.to_le_bytes().to_vec());
        out.insert(Tag::BITS_STORED, self.bits_stored.to_le_bytes().to_vec());
        out
    }
}

/// Raw 2-D grid of unsigned pixel values, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PixelMatrix {
    rows: usize,
    columns: usize,
    bits_stored: u16,
    values: Vec<u16>,
}

impl PixelMatrix {
    pub fn new(
        rows: usize,
        columns: usize,
        bits_stored: u16,
        values: Vec<u16>,
    ) -> Result<Self, DicomError> {
        if rows == 0 || columns == 0 {
            return Err(DicomError::InvalidPixelMatrix(format!(
                "empty grid {rows}x{columns}"
            )));
        }
        if !(1..=16).contains(&bits_stored) {
            return Err(DicomError::InvalidPixelMatrix(format!(
                "bits_stored {bits_stored} outside 1..=16"
            )));
        }
        if values.len() != rows * columns {
            return Err(DicomError::InvalidPixelMatrix(format!(
                "{} values for a {rows}x{columns} grid",
                values.len()
            )));
        }
        let limit = 1u32 << bits_stored;
        if let Some(v) = values.iter().find(|&&v| u32::from(v) >= limit) {
            return Err(DicomError::InvalidPixelMatrix(format!(
                "value {v} does not fit in {bits_stored} bits"
            )));
        }
        Ok(PixelMatrix {
            rows,
            columns,
            bits_stored,
            values,
        })
    }

    /// Builds a matrix from nested rows; convenient in tests.
    pub fn from_rows(rows: &[Vec<u16>], bits_stored: u16) -> Result<Self, DicomError> {
        let columns = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != columns) {
            return Err(DicomError::InvalidPixelMatrix("ragged rows".into()));
        }
        PixelMatrix::new(rows.len(), columns, bits_stored, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn columns(&self) -> usize {
        self.columns
    }

    pub fn bits_stored(&self) -> u16 {
        self.bits_stored
    }

    pub fn values(&self) -> &[u16] {
        &self.values
    }

    pub fn get(&self, row: usize, col: usize) -> u16 {
        self.values[row * self.columns + col]
    }

    pub fn to_rows(&self) -> Vec<Vec<u16>> {
        self.values.chunks(self.columns).map(<[u16]>::to_vec).collect()
    }
}
