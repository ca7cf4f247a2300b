use std::path::{Path, PathBuf};
use std::process::Command;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{create_dir, file_stem, list_files, write_file, BatchSummary, PipelineError};
use crate::dicom::{
    decode_native_pixels, extract_pixel_payload, is_jpeg2000, parse_dicom, PayloadKind,
    PhotometricInterpretation, PixelMatrix,
};
use crate::imageops::pgm::{read_pgm, write_pgm};

/// Overrides the configured decoder command when set.
pub const DECODER_ENV: &str = "MAMMO_J2K_DECODER";

/// Facts about a converted image that later stages need, stored next to the
/// graymap as `<stem>.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub rows: usize,
    pub columns: usize,
    pub bits_stored: u16,
    pub photometric: PhotometricInterpretation,
    pub transfer_syntax: String,
}

fn shell_quote(path: &Path) -> String {
    format!("'{}'", path.to_string_lossy().replace('\'', r"'\''"))
}

/// Runs the decoder template through `sh -c` after substituting the quoted
/// paths, then reads the graymap it wrote.
fn run_decoder(template: &str, codestream: &Path, output: &Path) -> Result<PixelMatrix, PipelineError> {
    if !template.contains("{input}") || !template.contains("{output}") {
        return Err(PipelineError::Decoder(
            "command template needs {input} and {output} placeholders".into(),
        ));
    }
    let command = template
        .replace("{input}", &shell_quote(codestream))
        .replace("{output}", &shell_quote(output));
    let status = Command::new("sh")
        .arg("-c")
        .arg(&command)
        .status()
        .map_err(|e| PipelineError::Decoder(format!("cannot start: {e}")))?;
    if !status.success() {
        return Err(PipelineError::Decoder(format!("{command:?} exited with {status}")));
    }
    let bytes = std::fs::read(output).map_err(PipelineError::io(output))?;
    Ok(read_pgm(&bytes)?)
}

/// Converts one DICOM file to `<out_dir>/<stem>.pgm` plus its sidecar.
///
/// Encapsulated JPEG 2000 pixel data is written to `<stem>.j2k` and handed
/// to `decoder`; without a decoder the codestream is kept and the file is
/// reported as failed.
pub fn convert_file(input: &Path, out_dir: &Path, decoder: Option<&str>) -> Result<PathBuf, PipelineError> {
    let bytes = std::fs::read(input).map_err(PipelineError::io(input))?;
    let obj = parse_dicom(&bytes)?;
    let stem = file_stem(input);
    let pgm_path = out_dir.join(format!("{stem}.pgm"));
    let pixels = match obj.payload_kind() {
        PayloadKind::Native => decode_native_pixels(&obj)?,
        PayloadKind::Encapsulated => {
            if !is_jpeg2000(obj.transfer_syntax_uid()) {
                return Err(crate::dicom::DicomError::UnsupportedTransferSyntax(
                    obj.transfer_syntax_uid().to_string(),
                )
                .into());
            }
            let payload = extract_pixel_payload(&obj)?;
            let j2k = out_dir.join(format!("{stem}.j2k"));
            write_file(&j2k, &payload.bytes)?;
            let template = decoder.ok_or_else(|| {
                PipelineError::Decoder(format!(
                    "JPEG 2000 codestream saved to {}; no decoder configured",
                    j2k.display()
                ))
            })?;
            let decoded_path = out_dir.join(format!("{stem}.decoded.pgm"));
            let decoded = run_decoder(template, &j2k, &decoded_path);
            let _ = std::fs::remove_file(&decoded_path);
            let decoded = decoded?;
            let _ = std::fs::remove_file(&j2k);
            if (decoded.rows(), decoded.columns()) != (obj.rows(), obj.columns()) {
                return Err(PipelineError::Decoder(format!(
                    "decoded image is {}x{}, header says {}x{}",
                    decoded.rows(),
                    decoded.columns(),
                    obj.rows(),
                    obj.columns()
                )));
            }
            decoded
        }
    };
    let sidecar = Sidecar {
        rows: pixels.rows(),
        columns: pixels.columns(),
        bits_stored: pixels.bits_stored(),
        photometric: obj.photometric_interpretation(),
        transfer_syntax: obj.transfer_syntax_uid().to_string(),
    };
    write_file(&pgm_path, &write_pgm(&pixels))?;
    let json = serde_json::to_vec_pretty(&sidecar).expect("sidecar serializes");
    write_file(&out_dir.join(format!("{stem}.json")), &json)?;
    Ok(pgm_path)
}

/// Converts every `.dcm` file in `in_dir`, in parallel. Per-file failures
/// are collected; only an unreadable input or output directory is fatal.
pub fn convert_dir(in_dir: &Path, out_dir: &Path, decoder: Option<&str>) -> Result<BatchSummary, PipelineError> {
    let inputs = list_files(in_dir, "dcm")?;
    create_dir(out_dir)?;
    let results = inputs
        .into_par_iter()
        .map(|input| {
            let r = convert_file(&input, out_dir, decoder);
            (input, r)
        })
        .collect();
    Ok(BatchSummary::collect(results))
}
