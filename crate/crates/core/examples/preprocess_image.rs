// Preprocess a synthetic MONOCHROME1 gradient to the 512×512 model input.
//
// `cargo run --example preprocess_image`

use std::error::Error;

use mammoscreen::dicom::{PhotometricInterpretation, PixelMatrix};
use mammoscreen::imageops::{orient, preprocess, MODEL_INPUT_SIZE};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let (rows, columns) = (300, 200);
    let values = (0..rows * columns)
        .map(|i| ((i % columns) * 4095 / (columns - 1)) as u16)
        .collect();
    let raw = PixelMatrix::new(rows, columns, 12, values)?;

    let m1 = orient(&raw, PhotometricInterpretation::Monochrome1);
    let m2 = orient(&raw, PhotometricInterpretation::Monochrome2);
    println!(
        "left edge: MONOCHROME1 {:.3}, MONOCHROME2 {:.3}",
        m1.get(0, 0),
        m2.get(0, 0)
    );

    let out = preprocess(&raw, PhotometricInterpretation::Monochrome1)?;
    assert_eq!((out.rows(), out.columns()), (MODEL_INPUT_SIZE, MODEL_INPUT_SIZE));
    let (lo, hi) = out
        .values()
        .iter()
        .fold((f64::MAX, f64::MIN), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    println!(
        "{}x{} -> {}x{}, range [{lo:.3}, {hi:.3}], mean {:.3}",
        rows,
        columns,
        out.rows(),
        out.columns(),
        out.mean()
    );
    Ok(())
}

fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
