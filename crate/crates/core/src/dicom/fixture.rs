//! Writer for small synthetic DICOM files.
//!
//! This is not a general DICOM writer. It emits exactly the subset the
//! parser understands so tests, examples and the acceptance suite can build
//! inputs with known bytes.

use std::collections::BTreeMap;

use super::{pad_value, Tag, Vr, EXPLICIT_VR_LITTLE_ENDIAN, JPEG2000_LOSSLESS};

const DIGITAL_MAMMOGRAPHY_SOP_CLASS: &str = "1.2.840.10008.5.1.4.1.1.1.2";

#[derive(Debug, Clone)]
enum Pixels {
    Native(Vec<u8>),
    Encapsulated {
        offsets: Vec<u32>,
        fragments: Vec<Vec<u8>>,
        corrupt: bool,
    },
    Absent,
}

#[derive(Debug, Clone)]
pub struct FixtureBuilder {
    elements: BTreeMap<Tag, (Vr, Vec<u8>)>,
    nested_sequences: Vec<Tag>,
    pixels: Pixels,
}

fn us(v: u16) -> Vec<u8> {
    v.to_le_bytes().to_vec()
}

impl FixtureBuilder {
    fn base(
        transfer_syntax: &str,
        rows: u16,
        columns: u16,
        bits_allocated: u16,
        bits_stored: u16,
        photometric: &str,
        pixels: Pixels,
    ) -> Self {
        let mut elements = BTreeMap::new();
        elements.insert(Tag(0x0002, 0x0001), (Vr::OB, vec![0x00, 0x01]));
        elements.insert(
            Tag(0x0002, 0x0002),
            (Vr::UI, pad_value(DIGITAL_MAMMOGRAPHY_SOP_CLASS, Vr::UI)),
        );
        elements.insert(
            Tag(0x0002, 0x0003),
            (Vr::UI, pad_value("1.2.826.0.1.3680043.10.1.1", Vr::UI)),
        );
        elements.insert(Tag::TRANSFER_SYNTAX_UID, (Vr::UI, pad_value(transfer_syntax, Vr::UI)));
        elements.insert(
            Tag(0x0008, 0x0016),
            (Vr::UI, pad_value(DIGITAL_MAMMOGRAPHY_SOP_CLASS, Vr::UI)),
        );
        elements.insert(Tag(0x0028, 0x0002), (Vr::US, us(1)));
        elements.insert(
            Tag::PHOTOMETRIC_INTERPRETATION,
            (Vr::CS, pad_value(photometric, Vr::CS)),
        );
        elements.insert(Tag::ROWS, (Vr::US, us(rows)));
        elements.insert(Tag::COLUMNS, (Vr::US, us(columns)));
        elements.insert(Tag::BITS_ALLOCATED, (Vr::US, us(bits_allocated)));
        elements.insert(Tag::BITS_STORED, (Vr::US, us(bits_stored)));
        elements.insert(
            Tag(0x0028, 0x0102),
            (Vr::US, us(bits_stored.saturating_sub(1))),
        );
        elements.insert(Tag(0x0028, 0x0103), (Vr::US, us(0)));
        FixtureBuilder {
            elements,
            nested_sequences: Vec::new(),
            pixels,
        }
    }

    /// Explicit VR little endian file with raw pixel bytes.
    pub fn native(
        rows: u16,
        columns: u16,
        bits_allocated: u16,
        bits_stored: u16,
        photometric: &str,
        payload: Vec<u8>,
    ) -> Self {
        Self::base(
            EXPLICIT_VR_LITTLE_ENDIAN,
            rows,
            columns,
            bits_allocated,
            bits_stored,
            photometric,
            Pixels::Native(payload),
        )
    }

    /// Native fixture from 16-bit sample values.
    pub fn native_u16(rows: u16, columns: u16, bits_stored: u16, photometric: &str, samples: &[u16]) -> Self {
        let payload = samples.iter().flat_map(|v| v.to_le_bytes()).collect();
        Self::native(rows, columns, 16, bits_stored, photometric, payload)
    }

    /// JPEG 2000 lossless file with an empty offset table and the given
    /// fragments.
    pub fn encapsulated(
        rows: u16,
        columns: u16,
        bits_allocated: u16,
        bits_stored: u16,
        photometric: &str,
        fragments: Vec<Vec<u8>>,
    ) -> Self {
        Self::base(
            JPEG2000_LOSSLESS,
            rows,
            columns,
            bits_allocated,
            bits_stored,
            photometric,
            Pixels::Encapsulated {
                offsets: Vec::new(),
                fragments,
                corrupt: false,
            },
        )
    }

    pub fn transfer_syntax(mut self, uid: &str) -> Self {
        self.elements
            .insert(Tag::TRANSFER_SYNTAX_UID, (Vr::UI, pad_value(uid, Vr::UI)));
        self
    }

    /// Sets the photometric interpretation bytes verbatim (no padding applied).
    pub fn photometric_raw(mut self, value: &[u8]) -> Self {
        self.elements
            .insert(Tag::PHOTOMETRIC_INTERPRETATION, (Vr::CS, value.to_vec()));
        self
    }

    pub fn with_element(mut self, tag: Tag, vr: Vr, value: Vec<u8>) -> Self {
        self.elements.insert(tag, (vr, value));
        self
    }

    /// Adds an undefined-length SQ with one undefined-length item holding a
    /// single LO element.
    pub fn with_nested_sequence(mut self, tag: Tag) -> Self {
        self.nested_sequences.push(tag);
        self
    }

    pub fn without_pixel_data(mut self) -> Self {
        self.pixels = Pixels::Absent;
        self
    }

    pub fn offset_table(mut self, table: Vec<u32>) -> Self {
        if let Pixels::Encapsulated { offsets, .. } = &mut self.pixels {
            *offsets = table;
        }
        self
    }

    /// Replaces the first fragment's item tag with garbage.
    pub fn corrupt_after_offset_table(mut self) -> Self {
        if let Pixels::Encapsulated { corrupt, .. } = &mut self.pixels {
            *corrupt = true;
        }
        self
    }

    fn nested_sequence_bytes() -> Vec<u8> {
        let mut out = Vec::new();
        out.extend(item_header(Tag::ITEM, 0xFFFF_FFFF));
        write_element(&mut out, Tag(0x0008, 0x1150), Vr::LO, b"NESTED".to_vec());
        out.extend(item_header(Tag::ITEM_DELIMITATION, 0));
        out.extend(item_header(Tag::SEQUENCE_DELIMITATION, 0));
        out
    }

    /// The value bytes the parser should report for every non-pixel element.
    pub fn expected_tag_values(&self) -> BTreeMap<Tag, Vec<u8>> {
        let mut out: BTreeMap<Tag, Vec<u8>> = self
            .elements
            .iter()
            .map(|(tag, (_, value))| (*tag, value.clone()))
            .collect();
        for tag in &self.nested_sequences {
            out.insert(*tag, Self::nested_sequence_bytes());
        }
        out.insert(Tag::FILE_META_GROUP_LENGTH, self.meta_group_length().to_le_bytes().to_vec());
        out
    }

    fn meta_group_length(&self) -> u32 {
        let mut meta = Vec::new();
        for (tag, (vr, value)) in self.elements.range(Tag(0x0002, 0x0001)..Tag(0x0003, 0x0000)) {
            write_element(&mut meta, *tag, *vr, value.clone());
        }
        meta.len() as u32
    }

    pub fn build(&self) -> Vec<u8> {
        let mut out = vec![0u8; 128];
        out.extend_from_slice(b"DICM");
        write_element(
            &mut out,
            Tag::FILE_META_GROUP_LENGTH,
            Vr::UL,
            self.meta_group_length().to_le_bytes().to_vec(),
        );
        let mut sequences = self.nested_sequences.iter().peekable();
        for (tag, (vr, value)) in &self.elements {
            while let Some(seq) = sequences.next_if(|s| *s < tag) {
                write_sequence(&mut out, *seq);
            }
            write_element(&mut out, *tag, *vr, value.clone());
        }
        for seq in sequences {
            write_sequence(&mut out, *seq);
        }
        match &self.pixels {
            Pixels::Native(payload) => {
                let vr = if self.bits_allocated() > 8 { Vr::OW } else { Vr::OB };
                write_element(&mut out, Tag::PIXEL_DATA, vr, payload.clone());
            }
            Pixels::Encapsulated {
                offsets,
                fragments,
                corrupt,
            } => {
                out.extend(header_bytes(Tag::PIXEL_DATA, Vr::OB, 0xFFFF_FFFF));
                let table: Vec<u8> = offsets.iter().flat_map(|o| o.to_le_bytes()).collect();
                out.extend(item_header(Tag::ITEM, table.len() as u32));
                out.extend(table);
                for (i, fragment) in fragments.iter().enumerate() {
                    if i == 0 && *corrupt {
                        out.extend(item_header(Tag(0x1234, 0x5678), fragment.len() as u32));
                    } else {
                        out.extend(item_header(Tag::ITEM, fragment.len() as u32));
                    }
                    out.extend_from_slice(fragment);
                }
                out.extend(item_header(Tag::SEQUENCE_DELIMITATION, 0));
            }
            Pixels::Absent => {}
        }
        out
    }

    fn bits_allocated(&self) -> u16 {
        self.elements
            .get(&Tag::BITS_ALLOCATED)
            .map_or(8, |(_, v)| u16::from_le_bytes([v[0], v[1]]))
    }
}

fn write_sequence(out: &mut Vec<u8>, tag: Tag) {
    out.extend(header_bytes(tag, Vr::SQ, 0xFFFF_FFFF));
    out.extend(FixtureBuilder::nested_sequence_bytes());
}

fn header_bytes(tag: Tag, vr: Vr, length: u32) -> Vec<u8> {
    let mut out = Vec::with_capacity(12);
    out.extend(tag.0.to_le_bytes());
    out.extend(tag.1.to_le_bytes());
    out.extend(vr.0);
    if vr.has_long_length().unwrap_or(false) {
        out.extend([0, 0]);
        out.extend(length.to_le_bytes());
    } else {
        out.extend((length as u16).to_le_bytes());
    }
    out
}

fn write_element(out: &mut Vec<u8>, tag: Tag, vr: Vr, value: Vec<u8>) {
    out.extend(header_bytes(tag, vr, value.len() as u32));
    out.extend(value);
}

fn item_header(tag: Tag, length: u32) -> Vec<u8> {
    let mut out = Vec::with_capacity(8);
    out.extend(tag.0.to_le_bytes());
    out.extend(tag.1.to_le_bytes());
    out.extend(length.to_le_bytes());
    out
}
