use std::fmt::Display;

pub const EXIT_DATA: i32 = 2;
pub const EXIT_CONVERGENCE: i32 = 3;
pub const EXIT_CONFIG: i32 = 4;

/// An error together with the process exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub error: anyhow::Error,
}

impl Failure {
    pub fn config(msg: impl Display) -> Self {
        Self { code: EXIT_CONFIG, error: anyhow::anyhow!("{msg}") }
    }

    pub fn data(msg: impl Display) -> Self {
        Self { code: EXIT_DATA, error: anyhow::anyhow!("{msg}") }
    }

    pub fn convergence(msg: impl Display) -> Self {
        Self { code: EXIT_CONVERGENCE, error: anyhow::anyhow!("{msg}") }
    }
}

pub trait ResultExt<T> {
    fn data_err<C: Display, F: FnOnce() -> C>(self, ctx: F) -> Result<T, Failure>;
    fn config_err<C: Display, F: FnOnce() -> C>(self, ctx: F) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> ResultExt<T> for Result<T, E> {
    fn data_err<C: Display, F: FnOnce() -> C>(self, ctx: F) -> Result<T, Failure> {
        self.map_err(|e| Failure { code: EXIT_DATA, error: e.into().context(ctx().to_string()) })
    }

    fn config_err<C: Display, F: FnOnce() -> C>(self, ctx: F) -> Result<T, Failure> {
        self.map_err(|e| Failure { code: EXIT_CONFIG, error: e.into().context(ctx().to_string()) })
    }
}
