use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::{create_dir, file_stem, list_files, write_file, BatchSummary, PipelineError, Sidecar};
use crate::imageops::pgm::{read_pgm, write_pgm};
use crate::imageops::preprocess;

/// Output bit depth of the model-ready graymaps.
const OUTPUT_BITS: u16 = 16;

/// Preprocesses `<stem>.pgm` using the photometric interpretation in the
/// neighbouring `<stem>.json` and writes a 512×512 16-bit graymap.
pub fn preprocess_file(input: &Path, out_dir: &Path) -> Result<PathBuf, PipelineError> {
    let sidecar_path = input.with_extension("json");
    let sidecar_bytes = std::fs::read(&sidecar_path).map_err(|e| PipelineError::Sidecar {
        path: sidecar_path.clone(),
        reason: e.to_string(),
    })?;
    let sidecar: Sidecar = serde_json::from_slice(&sidecar_bytes).map_err(|e| PipelineError::Sidecar {
        path: sidecar_path.clone(),
        reason: e.to_string(),
    })?;
    let bytes = std::fs::read(input).map_err(PipelineError::io(input))?;
    let pixels = read_pgm(&bytes)?;
    if (pixels.rows(), pixels.columns()) != (sidecar.rows, sidecar.columns) {
        return Err(PipelineError::Sidecar {
            path: sidecar_path,
            reason: format!(
                "records {}x{}, image is {}x{}",
                sidecar.rows,
                sidecar.columns,
                pixels.rows(),
                pixels.columns()
            ),
        });
    }
    let image = preprocess(&pixels, sidecar.photometric)?;
    let out = out_dir.join(format!("{}.pgm", file_stem(input)));
    write_file(&out, &write_pgm(&image.to_pixel_matrix(OUTPUT_BITS)))?;
    Ok(out)
}

/// Preprocesses every `.pgm` in `in_dir`, in parallel.
pub fn preprocess_dir(in_dir: &Path, out_dir: &Path) -> Result<BatchSummary, PipelineError> {
    let inputs = list_files(in_dir, "pgm")?;
    create_dir(out_dir)?;
    let results = inputs
        .into_par_iter()
        .map(|input| {
            let r = preprocess_file(&input, out_dir);
            (input, r)
        })
        .collect();
    Ok(BatchSummary::collect(results))
}
