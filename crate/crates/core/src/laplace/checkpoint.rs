use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::laplace::{Curvature, CurvatureKind, LastLayerPosterior, Likelihood};
use crate::numkit::Matrix;

pub const POSTERIOR_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct PosteriorRecord {
    format_version: u32,
    kind: CurvatureKind,
    w_map: Matrix,
    curvature: Curvature,
    prior_precision: f64,
    n_data: usize,
    likelihood: Likelihood,
}

pub fn posterior_to_text(posterior: &LastLayerPosterior) -> String {
    let rec = PosteriorRecord {
        format_version: POSTERIOR_FORMAT_VERSION,
        kind: posterior.kind(),
        w_map: posterior.w_map.clone(),
        curvature: posterior.curvature.clone(),
        prior_precision: posterior.prior_precision,
        n_data: posterior.n_data,
        likelihood: posterior.likelihood,
    };
    let mut s = serde_json::to_string_pretty(&rec).expect("posterior serializes");
    s.push('\n');
    s
}

pub fn posterior_from_text(text: &str, path: &Path) -> Result<LastLayerPosterior> {
    let bad = |msg: String| Error::Format {
        path: path.to_path_buf(),
        msg,
    };
    let rec: PosteriorRecord = serde_json::from_str(text).map_err(|e| bad(e.to_string()))?;
    if rec.format_version != POSTERIOR_FORMAT_VERSION {
        return Err(bad(format!(
            "unsupported posterior format_version {}",
            rec.format_version
        )));
    }
    if rec.kind != rec.curvature.kind() {
        return Err(bad("kind does not match the curvature payload".into()));
    }
    let (o, hd) = rec.w_map.shape();
    let d = o * hd;
    let shapes_ok = match &rec.curvature {
        Curvature::Full(g) => g.shape() == (d, d),
        Curvature::Diagonal(g) => g.len() == d,
        Curvature::Kfac(f) => f.a.shape() == (hd, hd) && f.b.shape() == (o, o),
    };
    if !shapes_ok || rec.w_map.as_slice().len() != d {
        return Err(bad("curvature payload does not match w_map".into()));
    }
    Ok(LastLayerPosterior {
        w_map: rec.w_map,
        curvature: rec.curvature,
        prior_precision: rec.prior_precision,
        n_data: rec.n_data,
        likelihood: rec.likelihood,
    })
}

pub fn save_posterior(path: impl AsRef<Path>, posterior: &LastLayerPosterior) -> Result<()> {
    crate::pipeline::write_atomic(path.as_ref(), posterior_to_text(posterior).as_bytes())
}

pub fn load_posterior(path: impl AsRef<Path>) -> Result<LastLayerPosterior> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    posterior_from_text(&text, path)
}
