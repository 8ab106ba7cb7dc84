//! Checkpoint directories: one binary tensor file per parameter plus a
//! `manifest.txt` of `key = value` lines.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::tensor::io;

pub const MANIFEST: &str = "manifest.txt";

/// What a checkpoint records besides the tensors.
#[derive(Clone, Debug, PartialEq)]
pub struct Manifest {
    pub metapaths: Vec<String>,
    pub dim: usize,
    pub attn_dim: usize,
    pub in_dim: usize,
    pub lambda: f64,
    pub layers: usize,
    pub tensors: Vec<String>,
}

impl Manifest {
    fn to_text(&self) -> String {
        format!(
            "metapaths = {}\ndim = {}\nattn_dim = {}\nin_dim = {}\nlambda = {}\nlayers = {}\ntensors = {}\n",
            self.metapaths.join(","),
            self.dim,
            self.attn_dim,
            self.in_dim,
            self.lambda,
            self.layers,
            self.tensors.join(",")
        )
    }

    fn parse(text: &str) -> Result<Self> {
        let mut get = std::collections::HashMap::new();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Data(format!("bad manifest line `{line}`")))?;
            get.insert(k.trim().to_string(), v.trim().to_string());
        }
        let field = |k: &str| {
            get.get(k)
                .cloned()
                .ok_or_else(|| Error::Data(format!("manifest lacks `{k}`")))
        };
        let number = |k: &str| -> Result<usize> {
            field(k)?
                .parse()
                .map_err(|_| Error::Data(format!("manifest `{k}` is not a count")))
        };
        let list = |s: String| -> Vec<String> {
            s.split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(String::from)
                .collect()
        };
        Ok(Manifest {
            metapaths: list(field("metapaths")?),
            dim: number("dim")?,
            attn_dim: number("attn_dim")?,
            in_dim: number("in_dim")?,
            lambda: field("lambda")?
                .parse()
                .map_err(|_| Error::Data("manifest `lambda` is not a number".into()))?,
            layers: number("layers")?,
            tensors: list(field("tensors")?),
        })
    }
}

pub fn save(dir: &Path, params: &ModelParams, metapaths: &[String], lambda: f64) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
    let named = params.named();
    for (name, t) in &named {
        io::save(t, &dir.join(format!("{name}.bin")))?;
    }
    let manifest = Manifest {
        metapaths: metapaths.to_vec(),
        dim: params.dim(),
        attn_dim: params.w_sem.rows(),
        in_dim: params.in_dim(),
        lambda,
        layers: params.encoders[0].weights.len(),
        tensors: named.into_iter().map(|(n, _)| n).collect(),
    };
    let path = dir.join(MANIFEST);
    fs::write(&path, manifest.to_text())
        .map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

pub fn load(dir: &Path) -> Result<(ModelParams, Manifest)> {
    let path = dir.join(MANIFEST);
    let text = fs::read_to_string(&path)
        .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    let manifest = Manifest::parse(&text)?;
    let named = manifest
        .tensors
        .iter()
        .map(|name| Ok((name.clone(), io::load(&dir.join(format!("{name}.bin")))?)))
        .collect::<Result<Vec<_>>>()?;
    let params = ModelParams::from_named(manifest.metapaths.len(), named)?;
    if params.dim() != manifest.dim || params.in_dim() != manifest.in_dim {
        return Err(Error::Data("checkpoint tensors disagree with manifest".into()));
    }
    Ok((params, manifest))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::HemiConfig;
    use rand::SeedableRng;

    #[test]
    fn save_load_round_trip() {
        let config = HemiConfig {
            dim: 4,
            attn_dim: 3,
            layers: 2,
            ..HemiConfig::default()
        };
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let params = ModelParams::init(5, 2, &config, &mut rng).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let names = vec!["pap".to_string(), "psp".to_string()];
        save(dir.path(), &params, &names, 0.25).unwrap();
        let (back, manifest) = load(dir.path()).unwrap();
        assert_eq!(back, params);
        assert_eq!(manifest.metapaths, names);
        assert_eq!(manifest.lambda, 0.25);
        assert_eq!(manifest.layers, 2);
    }

    #[test]
    fn missing_tensor_file_is_an_error() {
        let config = HemiConfig {
            dim: 2,
            attn_dim: 2,
            ..HemiConfig::default()
        };
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let params = ModelParams::init(3, 1, &config, &mut rng).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save(dir.path(), &params, &["a".to_string()], 0.5).unwrap();
        fs::remove_file(dir.path().join("attention.q.bin")).unwrap();
        assert!(load(dir.path()).is_err());
    }
}
