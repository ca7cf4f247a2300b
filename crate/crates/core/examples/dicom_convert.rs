// Parse two in-memory DICOM files, one with native 12-bit samples and one
// with a JPEG 2000 payload, and show what conversion would write.
//
// `cargo run --example dicom_convert`

use std::error::Error;

use mammoscreen::dicom::fixture::FixtureBuilder;
use mammoscreen::dicom::{decode_native_pixels, extract_pixel_payload, parse_dicom, PayloadKind};
use mammoscreen::imageops::pgm::{read_pgm, write_pgm};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let samples: Vec<u16> = (0..12).map(|v| v * 341).collect();
    let native = FixtureBuilder::native_u16(3, 4, 12, "MONOCHROME1", &samples).build();
    let obj = parse_dicom(&native)?;
    println!(
        "native: {}x{}, {} of {} bits, {}",
        obj.rows(),
        obj.columns(),
        obj.bits_stored(),
        obj.bits_allocated(),
        obj.photometric_interpretation()
    );
    let pixels = decode_native_pixels(&obj)?;
    let pgm = write_pgm(&pixels);
    assert_eq!(read_pgm(&pgm)?.values(), pixels.values());
    println!("  first row {:?}, {} byte graymap", pixels.to_rows()[0], pgm.len());

    let fragments = vec![vec![0xFF, 0x4F, 0xFF, 0x51], vec![0, 1, 2, 3]];
    let j2k = FixtureBuilder::encapsulated(512, 512, 16, 12, "MONOCHROME2", fragments).build();
    let obj = parse_dicom(&j2k)?;
    let payload = extract_pixel_payload(&obj)?;
    assert_eq!(payload.kind, PayloadKind::Encapsulated);
    println!(
        "jpeg 2000 ({}): {} byte codestream for the external decoder",
        obj.transfer_syntax_uid(),
        payload.bytes.len()
    );

    // a file cut short is rejected, never half-read
    assert!(parse_dicom(&j2k[..j2k.len() - 3]).is_err());
    Ok(())
}

fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
