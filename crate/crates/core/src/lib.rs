pub mod calculus;
pub mod cli;
pub mod comparison;
pub mod experiments;
pub mod expr;
pub mod fuzzy;
pub mod ivp;
pub mod lyapunov;
pub mod ode;
pub mod scenario;

/// Shortest round-trip decimal form used in every CSV and text output.
pub(crate) fn fmt_float(v: f64) -> String {
    format!("{v:?}")
}
