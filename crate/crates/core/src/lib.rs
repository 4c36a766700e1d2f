//! Multiparty session types with crash-stop failures: types and subtyping,
//! typing-context semantics, explicit state spaces, property checking (directly
//! and through the modal mu-calculus), a session pi-calculus with typing, and
//! text formats for all of them.

pub mod context;
pub mod mucalc;
pub mod name;
pub mod process;
pub mod properties;
pub mod report;
pub mod statespace;
pub mod syntax;
pub mod types;

pub use context::{Endpoint, TransitionLabel, TypingContext};
pub use mucalc::Property;
pub use name::{Name, Role, Session};
pub use statespace::{build_lts, Limits, Lts};
pub use types::{Label, Payload, SessionType};
