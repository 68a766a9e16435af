//! Stackelberg extensive-form correlated equilibria in perfect-information
//! game trees, solved exactly through enforceable payoff frontiers or
//! approximately with a learned frontier model.

pub mod eval;
pub mod fa;
pub mod game;
pub mod io;
pub mod plc;
pub mod rng;
pub mod solver;
pub mod verify;

pub use game::{Game, GameTree, Owner};
pub use plc::{Epf, Knot, PlcError};
pub use solver::{solve, SolveResult, StrategyProfile};
