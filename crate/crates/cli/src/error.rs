//! Error categories and their exit codes.

use sefce_core::eval::EvalError;
use sefce_core::fa::FaError;
use sefce_core::game::GameError;
use sefce_core::io::IoError;
use sefce_core::solver::SolveError;
use sefce_core::verify::VerifyError;
use sefce_core::PlcError;
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Config,
    Numerical,
    TooLarge,
}

#[derive(Debug)]
pub struct CliError {
    pub kind: Kind,
    pub message: String,
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        CliError {
            kind: Kind::Config,
            message: message.into(),
        }
    }

    pub fn code(&self) -> u8 {
        match self.kind {
            Kind::Config => 2,
            Kind::Numerical => 3,
            Kind::TooLarge => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

fn game_kind(e: &GameError) -> Kind {
    match e {
        GameError::TooLarge(_) => Kind::TooLarge,
        GameError::NumericalFailure(_) => Kind::Numerical,
        _ => Kind::Config,
    }
}

fn solve_kind(e: &SolveError) -> Kind {
    match e {
        SolveError::Game(g) => game_kind(g),
        _ => Kind::Numerical,
    }
}

fn fa_kind(e: &FaError) -> Kind {
    match e {
        FaError::Config(_) | FaError::Shape(_) => Kind::Config,
        FaError::Solve(s) => solve_kind(s),
        FaError::Game(g) => game_kind(g),
        FaError::Plc(_) => Kind::Numerical,
    }
}

fn verify_kind(e: &VerifyError) -> Kind {
    match e {
        VerifyError::Game(g) => game_kind(g),
        VerifyError::TooLarge(_) => Kind::TooLarge,
        _ => Kind::Numerical,
    }
}

macro_rules! classify {
    ($t:ty, $f:expr) => {
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError {
                    kind: $f(&e),
                    message: e.to_string(),
                }
            }
        }
    };
}

classify!(GameError, game_kind);
classify!(SolveError, solve_kind);
classify!(FaError, fa_kind);
classify!(VerifyError, verify_kind);
classify!(EvalError, |e: &EvalError| match e {
    EvalError::Fa(x) => fa_kind(x),
    EvalError::Solve(x) => solve_kind(x),
    EvalError::Verify(x) => verify_kind(x),
    EvalError::Game(x) => game_kind(x),
});
classify!(IoError, |e: &IoError| match e {
    IoError::Game(g) => game_kind(g),
    _ => Kind::Config,
});
classify!(PlcError, |e: &PlcError| match e {
    PlcError::Parse { .. } => Kind::Config,
    _ => Kind::Numerical,
});
classify!(serde_json::Error, |_: &serde_json::Error| Kind::Config);
