#![allow(dead_code)]

//! Acceptance checks with independent oracles, shared by the integration
//! tests and the acceptance report.

/// Returns `Err(message)` from the enclosing check when `cond` is false.
macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

macro_rules! ensure_eq {
    ($left:expr, $right:expr, $($msg:tt)+) => {
        match (&$left, &$right) {
            (l, r) => {
                if l != r {
                    return Err(format!("{}: {:?} != {:?}", format!($($msg)+), l, r));
                }
            }
        }
    };
}

#[path = "../common/mod.rs"]
pub mod common;
pub mod dataflow;
pub mod diff;
pub mod recommender;
pub mod reviewer;
pub mod round_trip;
pub mod tree;
pub mod watch;

/// Detail line on success, failure reason otherwise.
pub type Outcome = Result<String, String>;
