use std::fmt;
use std::str::FromStr;

use scenedeck::embeddings::SidecarClient;
use scenedeck::TextFallback;

pub const DEFAULT_PORT: u16 = 8080;
pub const DEFAULT_DATA_DIR: &str = "data";

/// `--text-fallback` value: `hash`, `none` or `sidecar:URL`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FallbackSpec {
    Hash,
    None,
    Sidecar(String),
}

impl FallbackSpec {
    pub fn build(&self) -> TextFallback {
        match self {
            FallbackSpec::Hash => TextFallback::Hash,
            FallbackSpec::None => TextFallback::None,
            FallbackSpec::Sidecar(url) => TextFallback::Sidecar(SidecarClient::new(url)),
        }
    }
}

impl FromStr for FallbackSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "hash" => Ok(FallbackSpec::Hash),
            "none" => Ok(FallbackSpec::None),
            _ => match s.strip_prefix("sidecar:") {
                Some(url) if !url.is_empty() => Ok(FallbackSpec::Sidecar(url.to_string())),
                _ => Err(format!("expected hash, none or sidecar:URL, got {s:?}")),
            },
        }
    }
}

impl fmt::Display for FallbackSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FallbackSpec::Hash => f.write_str("hash"),
            FallbackSpec::None => f.write_str("none"),
            FallbackSpec::Sidecar(url) => write!(f, "sidecar:{url}"),
        }
    }
}
