//! Line-oriented loan-network text format.
//!
//! ```text
//! overdraft-net v1 as_of=<block>
//! N <id> <reputation>
//! L <agreement_id> <lender> <borrower> <amount> <opening_block> <T_d> <F_o> <closing_fee>
//! A <id> <balance> <locked>        (ledger dumps only)
//! ```
//!
//! Blank lines and lines starting with `#` are ignored.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::model::{
    validate_signed_fees, AgreementId, LoanEdge, LoanNetworkView, NodeId, Tokens, ViewError,
};

pub const HEADER_PREFIX: &str = "overdraft-net v1 as_of=";

#[derive(Debug, Error, PartialEq)]
pub enum ParseError {
    #[error("missing or malformed header line")]
    Header,
    #[error("line {line}: {msg}")]
    Line { line: usize, msg: String },
    #[error("duplicate node {0}")]
    DuplicateNode(NodeId),
    #[error("invalid view: {0}")]
    View(#[from] ViewError),
    #[error("{0}")]
    Unexpected(String),
}

/// `A` line of a ledger dump.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AccountLine {
    pub node: NodeId,
    pub balance: Tokens,
    pub locked: Tokens,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedNetwork {
    pub view: LoanNetworkView,
    pub accounts: Vec<AccountLine>,
}

fn field<T: std::str::FromStr>(parts: &[&str], idx: usize, line: usize, name: &str) -> Result<T, ParseError> {
    parts
        .get(idx)
        .ok_or_else(|| ParseError::Line { line, msg: format!("missing {name}") })?
        .parse()
        .map_err(|_| ParseError::Line { line, msg: format!("bad {name} {:?}", parts[idx]) })
}

pub fn parse(text: &str) -> Result<ParsedNetwork, ParseError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));

    let (_, header) = lines.next().ok_or(ParseError::Header)?;
    let as_of = header
        .strip_prefix(HEADER_PREFIX)
        .and_then(|b| b.trim().parse().ok())
        .ok_or(ParseError::Header)?;

    let mut nodes = BTreeMap::new();
    let mut edges = Vec::new();
    let mut accounts = Vec::new();

    for (no, line) in lines {
        let parts: Vec<&str> = line.split_whitespace().collect();
        match parts[0] {
            "N" => {
                if parts.len() != 3 {
                    return Err(ParseError::Line { line: no, msg: "node line needs 2 fields".into() });
                }
                let id: NodeId = field(&parts, 1, no, "node id")?;
                let rep: f64 = field(&parts, 2, no, "reputation")?;
                if let Some(frac) = parts[2].split('.').nth(1) {
                    if frac.len() > 6 {
                        return Err(ParseError::Line { line: no, msg: "reputation has more than 6 fractional digits".into() });
                    }
                }
                if nodes.insert(id, rep).is_some() {
                    return Err(ParseError::DuplicateNode(id));
                }
            }
            "L" => {
                if parts.len() != 9 {
                    return Err(ParseError::Line { line: no, msg: "loan line needs 8 fields".into() });
                }
                let opening_fee: i64 = field(&parts, 7, no, "opening fee")?;
                let closing_fee: i64 = field(&parts, 8, no, "closing fee")?;
                validate_signed_fees(opening_fee, closing_fee)
                    .map_err(|_| ParseError::Line { line: no, msg: "negative fee".into() })?;
                let edge = LoanEdge {
                    agreement_id: AgreementId(field(&parts, 1, no, "agreement id")?),
                    lender: field(&parts, 2, no, "lender")?,
                    borrower: field(&parts, 3, no, "borrower")?,
                    amount: field(&parts, 4, no, "amount")?,
                    opening_block: field(&parts, 5, no, "opening block")?,
                    agreement_duration: field(&parts, 6, no, "duration")?,
                    opening_fee: opening_fee as Tokens,
                    closing_fee: closing_fee as Tokens,
                };
                edges.push(edge);
            }
            "A" => {
                if parts.len() != 4 {
                    return Err(ParseError::Line { line: no, msg: "account line needs 3 fields".into() });
                }
                accounts.push(AccountLine {
                    node: field(&parts, 1, no, "account id")?,
                    balance: field(&parts, 2, no, "balance")?,
                    locked: field(&parts, 3, no, "locked")?,
                });
            }
            other => {
                return Err(ParseError::Line { line: no, msg: format!("unknown record type {other:?}") });
            }
        }
    }

    let view = LoanNetworkView::new(as_of, nodes, edges)?;
    Ok(ParsedNetwork { view, accounts })
}

/// Writes a view followed by account lines.
pub fn write_ledger_dump(view: &LoanNetworkView, accounts: &[AccountLine]) -> String {
    use std::fmt::Write;
    let mut out = String::new();
    crate::model::write_view(&mut out, view);
    for a in accounts {
        let _ = writeln!(out, "A {} {} {}", a.node, a.balance, a.locked);
    }
    out
}
