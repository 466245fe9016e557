//! Core types for an SMC query gateway.
//!
//! Clients query aggregates computed over peers' private sensor readings.
//! Access is controlled with signed authorization grants that both the
//! gateway and every participating peer re-verify. This crate holds the
//! pieces all components share: the query/predicate model, the canonical
//! byte encoding every signature is computed over, identities and result
//! encryption, the request checks, the wire envelopes, and the pluggable
//! secure-computation backends.

pub mod api;
pub mod canonical;
pub mod checks;
pub mod clock;
pub mod crypto;
pub mod fixed;
pub mod hexser;
pub mod label;
pub mod messages;
pub mod predicate;
pub mod profile;
pub mod query;
pub mod reason;
pub mod smc;
pub mod wire;

pub use canonical::{signing_input, to_canonical_bytes, to_canonical_string, CanonicalError};
pub use checks::{check_computation_request, Rejected, RequestTrust};
pub use clock::{Clock, ManualClock, SystemClock, Timestamp};
pub use crypto::{
    Certificate, Ciphertext, CryptoError, Fingerprint, Identity, Signature, TrustStore, Validity,
};
pub use fixed::Fixed;
pub use label::{Label, LabelError, LabelSet};
pub use messages::{
    AccountabilityEntry, ComputationRequest, Grant, GrantRequest, SignedResult, UnsignedGrant,
};
pub use predicate::{parse_predicate, Atom, ParseError, Predicate};
pub use profile::{build_label_superset, PeerProfile};
pub use query::{query_matches, Preprocessor, Preselector, Query};
pub use reason::{Check, Failure, Reason};
