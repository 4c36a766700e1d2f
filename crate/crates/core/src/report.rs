//! Machine-readable results of checking one context document.

use std::collections::BTreeSet;
use std::time::Instant;

use serde::Serialize;
use thiserror::Error;

use crate::mucalc::Property;
use crate::name::{Role, Session};
use crate::properties::{check, Verdict};
use crate::statespace::{build_lts, Limits, Lts, StateSpaceError};
use crate::syntax::ContextDoc;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("the document has no session bindings")]
    NoSession,
    #[error(transparent)]
    StateSpace(#[from] StateSpaceError),
}

#[derive(Debug, Clone, Serialize)]
pub struct LtsStats {
    pub states: usize,
    pub edges: usize,
    pub reduction_states: usize,
    pub reduction_edges: usize,
}

impl LtsStats {
    pub fn of(lts: &Lts) -> LtsStats {
        LtsStats {
            states: lts.states.len(),
            edges: lts.edges.len(),
            reduction_states: lts.reduction_reachable().len(),
            reduction_edges: lts.reduction_edge_count(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PropertyResult {
    pub property: Property,
    #[serde(flatten)]
    pub verdict: Verdict,
    pub millis: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub input: String,
    pub session: Session,
    pub reliable: BTreeSet<Role>,
    pub lts: LtsStats,
    pub build_millis: f64,
    pub results: Vec<PropertyResult>,
}

impl Report {
    pub fn all_hold(&self) -> bool {
        self.results.iter().all(|r| r.verdict.holds)
    }
}

fn millis(since: Instant) -> f64 {
    since.elapsed().as_secs_f64() * 1000.0
}

/// Build the LTS of `doc` and check `properties` (in the fixed order safe, df,
/// live, term, nterm). Witnesses are dropped unless `witness` is set.
pub fn check_document(
    input: &str,
    doc: &ContextDoc,
    properties: &[Property],
    limits: &Limits,
    witness: bool,
) -> Result<Report, ReportError> {
    let session = doc.session.clone().ok_or(ReportError::NoSession)?;
    let started = Instant::now();
    let lts = build_lts(&doc.context, &session, &doc.reliable, limits)?;
    let build_millis = millis(started);
    let wanted: BTreeSet<Property> = properties.iter().copied().collect();
    let results = Property::ALL
        .into_iter()
        .filter(|p| wanted.contains(p))
        .map(|property| {
            let started = Instant::now();
            let mut verdict = check(&lts, property);
            let elapsed = millis(started);
            if !witness {
                verdict.witness = None;
            }
            PropertyResult {
                property,
                verdict,
                millis: elapsed,
            }
        })
        .collect();
    Ok(Report {
        input: input.to_string(),
        session,
        reliable: doc.reliable.clone(),
        lts: LtsStats::of(&lts),
        build_millis,
        results,
    })
}
