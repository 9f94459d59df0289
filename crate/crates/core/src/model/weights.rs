//! Named parameter arrays, their initial values, the content fingerprint
//! and the weights file.
//!
//! File layout (little-endian):
//!
//! ```text
//! u16 version
//! u32 config length, config text (UTF-8 key=value lines)
//! records until the last 8 bytes, each:
//!     u16 name length, name bytes, u8 rank, rank × u32 dims, f32 data
//! u64 fingerprint
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::config::ModelConfig;
use crate::entropy::factorized::{PriorNet, WIDTHS};
use crate::error::{Error, Result};
use crate::nn::{Real, Tensor};

pub const WEIGHTS_VERSION: u16 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct ParamArray {
    dims: Vec<usize>,
    data: Vec<f32>,
}

impl ParamArray {
    pub fn new(dims: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        if dims.iter().product::<usize>() != data.len() {
            return Err(crate::error::shape_err("ParamArray", dims.iter().product::<usize>(), data.len()));
        }
        Ok(ParamArray { dims, data })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub(crate) fn to_tensor<T: Real>(&self) -> Tensor<T> {
        Tensor::new(self.dims.clone(), self.data.iter().map(|&v| T::c(v as f64)).collect())
    }
}

enum Init {
    /// `U(-b, b)` with `b = sqrt(3 / fan_in)`.
    FanIn(usize),
    Zeros,
    /// Reparameterized GDN offset; squares to 1.
    GdnBeta,
    /// Reparameterized GDN matrix; squares to 0.1 on the diagonal.
    GdnGamma,
    /// Filled from [`PriorNet::init`].
    Prior,
}

struct ParamDef {
    name: String,
    dims: Vec<usize>,
    init: Init,
}

/// Every parameter the configuration needs, with its shape.
fn layout(cfg: &ModelConfig) -> Vec<ParamDef> {
    let mut defs = Vec::new();
    let mut push = |name: String, dims: Vec<usize>, init: Init| defs.push(ParamDef { name, dims, init });
    let (n, cy, cz, k) = (cfg.hidden_channels, cfg.latent_channels, cfg.hyper_channels, cfg.kernel_size);
    let stages = cfg.main_stages();
    let attention = cfg.architecture == super::Architecture::AttentionLite;

    for i in 0..stages {
        let cin = if i == 0 { 3 } else { n };
        let cout = if i + 1 == stages { cy } else { n };
        // No bias: g_a maps the black image to the zero latent.
        push(format!("g_a.conv{i}.weight"), vec![cout, cin, k, k], Init::FanIn(cin * k * k));
        if i + 1 < stages {
            push(format!("g_a.gdn{i}.beta"), vec![n], Init::GdnBeta);
            push(format!("g_a.gdn{i}.gamma"), vec![n, n], Init::GdnGamma);
        }
    }
    for side in ["g_a", "g_s"] {
        if attention {
            for m in ["wq", "wk", "wv", "wo"] {
                push(format!("{side}.attn.{m}"), vec![cy, cy], Init::FanIn(cy));
            }
        }
    }
    for i in 0..stages {
        let cin = if i == 0 { cy } else { n };
        let cout = if i + 1 == stages { 3 } else { n };
        // Each output of a stride-2 transposed conv sees about k²/4 taps.
        push(format!("g_s.deconv{i}.weight"), vec![cin, cout, k, k], Init::FanIn((cin * k * k / 4).max(1)));
        push(format!("g_s.deconv{i}.bias"), vec![cout], Init::Zeros);
        if i + 1 < stages {
            push(format!("g_s.igdn{i}.beta"), vec![n], Init::GdnBeta);
            push(format!("g_s.igdn{i}.gamma"), vec![n, n], Init::GdnGamma);
        }
    }
    if cfg.architecture.has_hyperprior() {
        let [s0, s1] = cfg.hyper_strides();
        // Non-overlapping kernels (kernel = stride): each z position covers
        // exactly its own block of y.
        push("h_a.conv0.weight".into(), vec![n, cy, s0, s0], Init::FanIn(cy * s0 * s0));
        push("h_a.conv0.bias".into(), vec![n], Init::Zeros);
        push("h_a.conv1.weight".into(), vec![cz, n, s1, s1], Init::FanIn(n * s1 * s1));
        push("h_a.conv1.bias".into(), vec![cz], Init::Zeros);
        push("h_s.deconv0.weight".into(), vec![cz, n, s1, s1], Init::FanIn(cz));
        push("h_s.deconv0.bias".into(), vec![n], Init::Zeros);
        push("h_s.deconv1.weight".into(), vec![n, 2 * cy, s0, s0], Init::FanIn(n));
        push("h_s.deconv1.bias".into(), vec![2 * cy], Init::Zeros);
    }
    let cp = cfg.prior_channels();
    for i in 0..4 {
        let (din, dout) = (WIDTHS[i], WIDTHS[i + 1]);
        push(format!("prior.matrix{i}"), vec![cp, dout, din], Init::Prior);
        push(format!("prior.bias{i}"), vec![cp, dout], Init::Prior);
        if i < 3 {
            push(format!("prior.factor{i}"), vec![cp, dout], Init::Prior);
        }
    }
    defs
}

const GDN_BETA_MIN: f64 = 1e-6;

/// All learned parameters of one model.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelWeights {
    config: ModelConfig,
    params: BTreeMap<String, ParamArray>,
    fingerprint: u64,
}

impl ModelWeights {
    /// Fresh weights drawn from `config.init_seed`.
    pub fn init(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.init_seed);
        let prior = PriorNet::init(config.prior_channels(), rng.gen());
        let mut params = BTreeMap::new();
        for def in layout(&config) {
            let len: usize = def.dims.iter().product();
            let data: Vec<f32> = match def.init {
                Init::FanIn(fan) => {
                    let b = (3.0 / fan as f64).sqrt() as f32;
                    (0..len).map(|_| rng.gen_range(-b..b)).collect()
                }
                Init::Zeros => vec![0.0; len],
                Init::GdnBeta => vec![(1.0 - GDN_BETA_MIN).sqrt() as f32; len],
                Init::GdnGamma => {
                    let c = def.dims[0];
                    (0..len)
                        .map(|i| if i / c == i % c { 0.1f32.sqrt() } else { 0.01 })
                        .collect()
                }
                Init::Prior => prior_field(&prior, &def.name).iter().map(|&v| v as f32).collect(),
            };
            params.insert(def.name, ParamArray { dims: def.dims, data });
        }
        Self::from_params(config, params)
    }

    /// Validates names, shapes and finiteness against `config`.
    pub fn from_params(config: ModelConfig, params: BTreeMap<String, ParamArray>) -> Result<Self> {
        config.validate()?;
        let defs = layout(&config);
        if defs.len() != params.len() {
            return Err(Error::MalformedWeights(format!(
                "expected {} parameter arrays, found {}",
                defs.len(),
                params.len()
            )));
        }
        for def in &defs {
            let p = params
                .get(&def.name)
                .ok_or_else(|| Error::MalformedWeights(format!("missing parameter {}", def.name)))?;
            if p.dims != def.dims {
                return Err(crate::error::shape_err("ModelWeights", &def.dims, &p.dims));
            }
            if p.data.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite { layer: def.name.clone() });
            }
        }
        let fingerprint = fingerprint(&config, &params);
        Ok(ModelWeights { config, params, fingerprint })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn fingerprint(&self) -> u64 {
        self.fingerprint
    }

    pub fn params(&self) -> &BTreeMap<String, ParamArray> {
        &self.params
    }

    pub fn param(&self, name: &str) -> Option<&ParamArray> {
        self.params.get(name)
    }

    pub fn num_parameters(&self) -> usize {
        self.params.values().map(|p| p.data.len()).sum()
    }

    fn group<'a>(&'a self, prefixes: &'a [&'a str]) -> impl Iterator<Item = (&'a str, &'a ParamArray)> + 'a {
        self.params
            .iter()
            .filter(move |(k, _)| prefixes.iter().any(|p| k.starts_with(p)))
            .map(|(k, v)| (k.as_str(), v))
    }

    /// Parameters of `g_a` and `h_a`.
    pub fn encoder_params(&self) -> impl Iterator<Item = (&str, &ParamArray)> + '_ {
        self.group(&["g_a.", "h_a."])
    }

    /// Parameters of `g_s` and `h_s`.
    pub fn decoder_params(&self) -> impl Iterator<Item = (&str, &ParamArray)> + '_ {
        self.group(&["g_s.", "h_s."])
    }

    pub fn entropy_params(&self) -> impl Iterator<Item = (&str, &ParamArray)> + '_ {
        self.group(&["prior."])
    }

    /// Same arrays under a different λ and metric label.
    pub fn relabel(&self, lambda: f64, metric: super::DistortionMetric) -> Result<Self> {
        let config = ModelConfig {
            lambda,
            metric,
            ..self.config.clone()
        };
        Self::from_params(config, self.params.clone())
    }

    /// The factorized prior in f64.
    pub fn prior_net(&self) -> PriorNet {
        let mut net = PriorNet::zeros(self.config.prior_channels());
        let get = |n: String| self.params[&n].data.iter().map(|&v| v as f64).collect::<Vec<_>>();
        for i in 0..4 {
            net.matrices[i] = get(format!("prior.matrix{i}"));
            net.biases[i] = get(format!("prior.bias{i}"));
            if i < 3 {
                net.factors[i] = get(format!("prior.factor{i}"));
            }
        }
        net
    }

    pub(crate) fn tensors<T: Real>(&self) -> BTreeMap<String, Tensor<T>> {
        self.params.iter().map(|(k, v)| (k.clone(), v.to_tensor())).collect()
    }

    pub(crate) fn from_tensors<T: Real>(config: ModelConfig, tensors: &BTreeMap<String, Tensor<T>>) -> Result<Self> {
        let params = tensors
            .iter()
            .map(|(k, t)| {
                let data = t.data.iter().map(|v| v.f64() as f32).collect();
                (k.clone(), ParamArray { dims: t.shape.clone(), data })
            })
            .collect();
        Self::from_params(config, params)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&WEIGHTS_VERSION.to_le_bytes());
        let text = self.config.to_text();
        out.extend_from_slice(&(text.len() as u32).to_le_bytes());
        out.extend_from_slice(text.as_bytes());
        for (name, p) in &self.params {
            write_record(&mut out, name, p);
        }
        out.extend_from_slice(&self.fingerprint.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::MalformedWeights(m.to_string());
        let mut r = Reader { bytes, pos: 0 };
        if bytes.len() < 2 + 4 + 8 {
            return Err(bad("file too short"));
        }
        let body_end = bytes.len() - 8;
        let version = u16::from_le_bytes(r.take(2, body_end)?.try_into().unwrap());
        if version != WEIGHTS_VERSION {
            return Err(Error::MalformedWeights(format!("unsupported version {version}")));
        }
        let clen = r.u32(body_end)? as usize;
        let text = std::str::from_utf8(r.take(clen, body_end)?).map_err(|_| bad("config is not UTF-8"))?;
        let config = ModelConfig::from_text(text)?;
        let mut params = BTreeMap::new();
        while r.pos < body_end {
            let nlen = u16::from_le_bytes(r.take(2, body_end)?.try_into().unwrap()) as usize;
            let name = std::str::from_utf8(r.take(nlen, body_end)?)
                .map_err(|_| bad("parameter name is not UTF-8"))?
                .to_string();
            let rank = r.take(1, body_end)?[0] as usize;
            let mut dims = Vec::with_capacity(rank);
            for _ in 0..rank {
                dims.push(r.u32(body_end)? as usize);
            }
            let len = dims
                .iter()
                .try_fold(1usize, |a, &d| a.checked_mul(d))
                .and_then(|n| n.checked_mul(4))
                .ok_or_else(|| bad("parameter size overflows"))?;
            let data = r
                .take(len, body_end)?
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            if params.insert(name.clone(), ParamArray { dims, data }).is_some() {
                return Err(Error::MalformedWeights(format!("duplicate parameter {name}")));
            }
        }
        let stored = u64::from_le_bytes(bytes[body_end..].try_into().unwrap());
        let w = Self::from_params(config, params)?;
        if w.fingerprint != stored {
            return Err(Error::MalformedWeights(format!(
                "fingerprint {stored:016x} does not match contents {:016x}",
                w.fingerprint
            )));
        }
        Ok(w)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

fn prior_field<'a>(net: &'a PriorNet, name: &str) -> &'a [f64] {
    let (kind, idx) = name["prior.".len()..].split_at(name.len() - "prior.".len() - 1);
    let i: usize = idx.parse().expect("layer index");
    match kind {
        "matrix" => &net.matrices[i],
        "bias" => &net.biases[i],
        "factor" => &net.factors[i],
        _ => unreachable!("prior field {name}"),
    }
}

fn write_record(out: &mut Vec<u8>, name: &str, p: &ParamArray) {
    out.extend_from_slice(&(name.len() as u16).to_le_bytes());
    out.extend_from_slice(name.as_bytes());
    out.push(p.dims.len() as u8);
    for &d in &p.dims {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for &v in &p.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, end: usize) -> Result<&'a [u8]> {
        if end - self.pos < n {
            return Err(Error::MalformedWeights("unexpected end of file".into()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, end: usize) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, end)?.try_into().unwrap()))
    }
}

/// SHA-256 over the config text and every record, truncated to 64 bits.
fn fingerprint(config: &ModelConfig, params: &BTreeMap<String, ParamArray>) -> u64 {
    let mut h = Sha256::new();
    let text = config.to_text();
    h.update((text.len() as u32).to_le_bytes());
    h.update(text.as_bytes());
    let mut buf = Vec::new();
    for (name, p) in params {
        buf.clear();
        write_record(&mut buf, name, p);
        h.update(&buf);
    }
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().unwrap())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Architecture, DistortionMetric};

    fn small(arch: Architecture) -> ModelConfig {
        ModelConfig {
            architecture: arch,
            latent_channels: 8,
            hyper_channels: 4,
            hidden_channels: 6,
            kernel_size: 3,
            stride_y: 4,
            stride_z: 16,
            ..ModelConfig::default()
        }
    }

    #[test]
    fn init_is_seeded() {
        let a = ModelWeights::init(small(Architecture::Hyperprior)).unwrap();
        let b = ModelWeights::init(small(Architecture::Hyperprior)).unwrap();
        assert_eq!(a.fingerprint(), b.fingerprint());
        let c = ModelWeights::init(ModelConfig { init_seed: 1, ..small(Architecture::Hyperprior) }).unwrap();
        assert_ne!(a.fingerprint(), c.fingerprint());
    }

    #[test]
    fn groups_partition_parameters() {
        for arch in [Architecture::Factorized, Architecture::Hyperprior, Architecture::AttentionLite] {
            let w = ModelWeights::init(small(arch)).unwrap();
            let total = w.encoder_params().count() + w.decoder_params().count() + w.entropy_params().count();
            assert_eq!(total, w.params().len());
            assert_eq!(w.encoder_params().any(|(n, _)| n.starts_with("h_a")), arch.has_hyperprior());
        }
    }

    #[test]
    fn bytes_round_trip_exactly() {
        let w = ModelWeights::init(small(Architecture::AttentionLite)).unwrap();
        let bytes = w.to_bytes();
        let back = ModelWeights::from_bytes(&bytes).unwrap();
        assert_eq!(back, w);
        assert_eq!(back.to_bytes(), bytes);
    }

    #[test]
    fn tampering_is_detected() {
        let w = ModelWeights::init(small(Architecture::Factorized)).unwrap();
        let mut bytes = w.to_bytes();
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0x40;
        assert!(ModelWeights::from_bytes(&bytes).is_err());
        let bytes = w.to_bytes();
        assert!(ModelWeights::from_bytes(&bytes[..bytes.len() - 3]).is_err());
    }

    #[test]
    fn relabel_changes_fingerprint_only_through_config() {
        let w = ModelWeights::init(small(Architecture::Hyperprior)).unwrap();
        let r = w.relabel(0.5, DistortionMetric::MsSsim).unwrap();
        assert_eq!(r.params(), w.params());
        assert_ne!(r.fingerprint(), w.fingerprint());
    }

    #[test]
    fn non_finite_arrays_rejected() {
        let w = ModelWeights::init(small(Architecture::Factorized)).unwrap();
        let mut params = w.params().clone();
        params.get_mut("g_s.deconv0.bias").unwrap().data[0] = f32::NAN;
        let err = ModelWeights::from_params(w.config().clone(), params).unwrap_err();
        assert!(matches!(err, Error::NonFinite { ref layer } if layer == "g_s.deconv0.bias"));
    }
}
