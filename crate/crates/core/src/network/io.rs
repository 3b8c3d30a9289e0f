//! JSON net files: one object holding the variables, parent lists, CPTs, the query
//! variable and the evidence.
//!
//! Probabilities are written as shortest round-trip decimals, so a load after a save
//! reproduces every value bit for bit.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{BeliefNet, NetError, QuerySpec, Variable, VarId};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvidenceEntry {
    pub var: VarId,
    pub value: usize,
}

/// On-disk layout of a net and its query.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetFile {
    pub variables: Vec<Variable>,
    pub parents: Vec<Vec<VarId>>,
    pub cpts: Vec<Vec<f64>>,
    pub query: VarId,
    #[serde(default)]
    pub evidence: Vec<EvidenceEntry>,
}

impl NetFile {
    pub fn new(net: &BeliefNet, q: &QuerySpec) -> Self {
        NetFile {
            variables: net.variables.clone(),
            parents: net.parents.clone(),
            cpts: net.cpts.clone(),
            query: q.query,
            evidence: q
                .evidence
                .iter()
                .map(|(&var, &value)| EvidenceEntry { var, value })
                .collect(),
        }
    }

    pub fn into_parts(self) -> (BeliefNet, QuerySpec) {
        let net = BeliefNet {
            variables: self.variables,
            parents: self.parents,
            cpts: self.cpts,
        };
        let q = QuerySpec {
            query: self.query,
            evidence: self.evidence.into_iter().map(|e| (e.var, e.value)).collect(),
        };
        (net, q)
    }
}

pub fn net_to_string(net: &BeliefNet, q: &QuerySpec) -> String {
    let mut s = serde_json::to_string_pretty(&NetFile::new(net, q))
        .expect("net file serialization cannot fail");
    s.push('\n');
    s
}

/// Parses and validates a net file body.
pub fn net_from_str(text: &str) -> Result<(BeliefNet, QuerySpec), NetError> {
    let file: NetFile = serde_json::from_str(text).map_err(|e| NetError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let (net, q) = file.into_parts();
    let mut violations = net.validate();
    if violations.is_empty() {
        violations = net.validate_query(&q);
    }
    if violations.is_empty() {
        Ok((net, q))
    } else {
        Err(NetError::Invalid(violations))
    }
}

pub fn save_net(path: &Path, net: &BeliefNet, q: &QuerySpec) -> Result<(), NetError> {
    std::fs::write(path, net_to_string(net, q)).map_err(|source| NetError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_net(path: &Path) -> Result<(BeliefNet, QuerySpec), NetError> {
    let text = std::fs::read_to_string(path).map_err(|source| NetError::Io {
        path: path.display().to_string(),
        source,
    })?;
    net_from_str(&text)
}
