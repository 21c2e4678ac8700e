use std::process::ExitCode;

use aefs_core::corpus::CorpusError;
use aefs_core::evalkit::EvalError;
use aefs_core::gateway::GatewayError;
use aefs_core::prompt::PromptError;
use serde_json::{json, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Usage,
    Data,
    Network,
}

#[derive(Debug)]
pub struct CliError {
    pub kind: Kind,
    pub code: &'static str,
    pub message: String,
    pub details: Option<Value>,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        CliError { kind: Kind::Usage, code: "usage", message: message.into(), details: None }
    }

    pub fn data(message: impl Into<String>) -> Self {
        CliError { kind: Kind::Data, code: "data", message: message.into(), details: None }
    }

    pub fn with_code(mut self, code: &'static str) -> Self {
        self.code = code;
        self
    }

    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self.kind {
            Kind::Usage => 1,
            Kind::Data => 2,
            Kind::Network => 3,
        })
    }

    pub fn to_json(&self) -> String {
        let mut v = json!({ "error": self.code, "message": self.message });
        if let Some(d) = &self.details {
            v["details"] = d.clone();
        }
        v.to_string()
    }
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        let code = match &e {
            CorpusError::MissingColumn(_) => "missing_column",
            CorpusError::EmptyFile(_) => "empty_file",
            CorpusError::SampleTooLarge { .. } => "sample_too_large",
            _ => "corpus",
        };
        CliError::data(e.to_string()).with_code(code)
    }
}

impl From<PromptError> for CliError {
    fn from(e: PromptError) -> Self {
        let code = match &e {
            PromptError::SchemaError { .. } => "schema_error",
            PromptError::TagMismatch { .. } => "tag_mismatch",
            _ => "prompt",
        };
        CliError::data(e.to_string()).with_code(code)
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        let code = match &e {
            EvalError::MissingStatement { .. } => "missing_statement",
            EvalError::EmptyReport => "empty_report",
            EvalError::DegenerateGroups(_) => "degenerate_groups",
            EvalError::EmptyCell { .. } => "empty_cell",
            _ => "evaluation",
        };
        CliError::data(e.to_string()).with_code(code)
    }
}

pub fn gateway_kind(e: &GatewayError) -> (Kind, &'static str) {
    match e {
        GatewayError::ReplayMiss { .. } => (Kind::Data, "replay_miss"),
        GatewayError::InvalidRequest(_) => (Kind::Data, "invalid_request"),
        GatewayError::Cache(_) => (Kind::Data, "cache"),
        GatewayError::NetworkError { .. } => (Kind::Network, "network_error"),
        GatewayError::RateLimited { .. } => (Kind::Network, "rate_limited"),
        GatewayError::AuthError(_) => (Kind::Network, "auth_error"),
        GatewayError::Api { .. } => (Kind::Network, "api_error"),
    }
}

impl From<GatewayError> for CliError {
    fn from(e: GatewayError) -> Self {
        let (kind, code) = gateway_kind(&e);
        CliError { kind, code, message: e.to_string(), details: None }
    }
}
