use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Config,
    Dependency,
    Input,
    Stage,
    Io,
}

impl Kind {
    pub fn name(self) -> &'static str {
        match self {
            Kind::Config => "config",
            Kind::Dependency => "dependency",
            Kind::Input => "input",
            Kind::Stage => "stage",
            Kind::Io => "io",
        }
    }

    pub fn exit_code(self) -> i32 {
        match self {
            Kind::Config => 2,
            Kind::Dependency => 3,
            Kind::Input => 4,
            Kind::Stage => 5,
            Kind::Io => 6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CliError {
    pub kind: Kind,
    /// Config key path, for config errors.
    pub key: Option<String>,
    pub message: String,
}

impl CliError {
    pub fn config(key: &str, message: impl Into<String>) -> Self {
        Self {
            kind: Kind::Config,
            key: Some(key.to_string()),
            message: message.into(),
        }
    }

    pub fn new(kind: Kind, message: impl Into<String>) -> Self {
        Self {
            kind,
            key: None,
            message: message.into(),
        }
    }

    /// One JSON object on a single line.
    pub fn line(&self) -> String {
        let mut obj = serde_json::Map::new();
        obj.insert("error".into(), self.kind.name().into());
        if let Some(k) = &self.key {
            obj.insert("key".into(), k.clone().into());
        }
        obj.insert("message".into(), self.message.clone().into());
        serde_json::Value::Object(obj).to_string()
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.key {
            Some(k) => write!(f, "{} error at {k}: {}", self.kind.name(), self.message),
            None => write!(f, "{} error: {}", self.kind.name(), self.message),
        }
    }
}

impl std::error::Error for CliError {}

pub type Result<T> = std::result::Result<T, CliError>;

/// Wraps a library error raised while computing a stage.
pub fn stage<E: fmt::Display>(e: E) -> CliError {
    CliError::new(Kind::Stage, e.to_string())
}

/// Wraps a parse error in an artifact or input file.
pub fn input<E: fmt::Display>(name: &str) -> impl Fn(E) -> CliError + '_ {
    move |e| CliError::new(Kind::Input, format!("{name}: {e}"))
}
