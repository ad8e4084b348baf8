use thiserror::Error;

/// Errors raised by the simulation library and the experiment runner.
#[derive(Debug, Error)]
pub enum Error {
    /// A caller violated a documented precondition. `constraint` names it.
    #[error("usage error ({constraint}): {detail}")]
    Usage {
        constraint: &'static str,
        detail: String,
    },
    /// A finite resource (window width, enumeration budget, depth cap) ran out.
    #[error("resource error ({resource}): {detail}")]
    Resource {
        resource: &'static str,
        detail: String,
    },
    /// A property that must hold for any deterministic noise field failed.
    #[error("invariant violated ({invariant}): {detail}")]
    Invariant {
        invariant: &'static str,
        detail: String,
    },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("config error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn usage(constraint: &'static str, detail: impl Into<String>) -> Error {
    Error::Usage {
        constraint,
        detail: detail.into(),
    }
}

pub(crate) fn invariant(invariant: &'static str, detail: impl Into<String>) -> Error {
    Error::Invariant {
        invariant,
        detail: detail.into(),
    }
}

pub(crate) fn resource(resource: &'static str, detail: impl Into<String>) -> Error {
    Error::Resource {
        resource,
        detail: detail.into(),
    }
}
