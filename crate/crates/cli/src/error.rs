//! Exit-code classification: 2 for bad input or usage, 1 for failures while
//! computing or writing results.

use std::fmt;
use std::path::Path;

use speechsim::report::ReportError;
use speechsim::{AlignError, CorpusError, MetricError, RetrievalError, SynthError};

pub const EXIT_COMPUTE: u8 = 1;
pub const EXIT_USAGE: u8 = 2;

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn usage(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }

    pub fn compute(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_COMPUTE,
            message: message.into(),
        }
    }

    pub fn write(path: &Path, err: std::io::Error) -> Self {
        Failure::compute(format!("cannot write {}: {err}", path.display()))
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

fn metric_code(e: &MetricError) -> u8 {
    match e {
        MetricError::DimMismatch { .. } | MetricError::NotNormalized { .. } | MetricError::InvalidSpec(_) => {
            EXIT_USAGE
        }
        MetricError::Align(AlignError::BadEpsilon(_)) => EXIT_USAGE,
        MetricError::ZeroMean { .. } | MetricError::Align(_) => EXIT_COMPUTE,
    }
}

impl From<CorpusError> for Failure {
    fn from(e: CorpusError) -> Self {
        Failure::usage(e.to_string())
    }
}

impl From<MetricError> for Failure {
    fn from(e: MetricError) -> Self {
        Failure {
            code: metric_code(&e),
            message: e.to_string(),
        }
    }
}

impl From<RetrievalError> for Failure {
    fn from(e: RetrievalError) -> Self {
        let code = match &e {
            RetrievalError::Pair { source, .. } | RetrievalError::Metric(source) => metric_code(source),
            RetrievalError::NonFiniteScore { .. } | RetrievalError::ThreadPool(_) => EXIT_COMPUTE,
            _ => EXIT_USAGE,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

impl From<SynthError> for Failure {
    fn from(e: SynthError) -> Self {
        let code = match e {
            SynthError::Config(_) => EXIT_USAGE,
            SynthError::Io { .. } | SynthError::Corpus(_) => EXIT_COMPUTE,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

impl From<ReportError> for Failure {
    fn from(e: ReportError) -> Self {
        match e {
            ReportError::DimMismatch(..) => Failure::usage(e.to_string()),
            ReportError::Parse(_) => Failure::compute(e.to_string()),
        }
    }
}
