pub mod analysis;
pub mod attacker;
pub mod error;
pub mod experiment;
pub mod ident;
pub mod idpool;
pub mod lookup;
pub mod par;
pub mod peermgr;
pub mod rng;
pub mod simnet;
pub mod table;

pub use error::{Error, Result};
