use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{AttrValue, Case, EventLog, MatchStats, AWAKE_MIN, TOTAL_SLEEP_MIN};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Comparator {
    Ge,
    Le,
    Lt,
    Gt,
    Eq,
}

impl Comparator {
    fn symbol(&self) -> &'static str {
        match self {
            Comparator::Ge => ">=",
            Comparator::Le => "<=",
            Comparator::Lt => "<",
            Comparator::Gt => ">",
            Comparator::Eq => "=",
        }
    }

    fn holds(&self, ord: Ordering) -> bool {
        match self {
            Comparator::Ge => ord != Ordering::Less,
            Comparator::Le => ord != Ordering::Greater,
            Comparator::Lt => ord == Ordering::Less,
            Comparator::Gt => ord == Ordering::Greater,
            Comparator::Eq => ord == Ordering::Equal,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Literal {
    Number(f64),
    Text(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Clause {
    pub attribute: String,
    pub op: Comparator,
    pub value: Literal,
}

impl Clause {
    pub fn new(attribute: &str, op: Comparator, value: f64) -> Self {
        Clause { attribute: attribute.into(), op, value: Literal::Number(value) }
    }

    /// Absent attributes and type mismatches never satisfy a clause.
    pub fn matches(&self, case: &Case) -> bool {
        let Some(actual) = case.attributes.get(&self.attribute) else {
            return false;
        };
        let ord = match (actual, &self.value) {
            (AttrValue::Str(a), Literal::Text(b)) => Some(a.as_str().cmp(b.as_str())),
            (AttrValue::Bool(a), Literal::Text(b)) => match b.to_ascii_lowercase().as_str() {
                "true" => Some(a.cmp(&true)),
                "false" => Some(a.cmp(&false)),
                _ => None,
            },
            (AttrValue::Str(_), Literal::Number(_)) => None,
            (a, Literal::Number(b)) => a.as_f64().and_then(|a| a.partial_cmp(b)),
            (_, Literal::Text(_)) => None,
        };
        ord.is_some_and(|o| self.op.holds(o))
    }
}

impl fmt::Display for Clause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.value {
            Literal::Number(v) => write!(f, "{}{}{}", self.attribute, self.op.symbol(), v),
            Literal::Text(v) => write!(f, "{}{}{}", self.attribute, self.op.symbol(), v),
        }
    }
}

/// Conjunction of threshold clauses over case attributes. No clauses means
/// every case qualifies.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CohortPredicate {
    pub clauses: Vec<Clause>,
}

impl CohortPredicate {
    /// At least eight hours asleep and under an hour awake.
    pub fn good_sleep() -> Self {
        CohortPredicate {
            clauses: vec![
                Clause::new(TOTAL_SLEEP_MIN, Comparator::Ge, 480.0),
                Clause::new(AWAKE_MIN, Comparator::Lt, 60.0),
            ],
        }
    }

    pub fn is_empty(&self) -> bool {
        self.clauses.is_empty()
    }

    pub fn matches(&self, case: &Case) -> bool {
        self.clauses.iter().all(|c| c.matches(case))
    }
}

impl FromStr for CohortPredicate {
    type Err = Error;

    /// Parses `attr<op>value[,attr<op>value...]` with ops `>= <= < > =`
    /// (`≥` and `≤` accepted too).
    fn from_str(s: &str) -> Result<Self> {
        let mut clauses = Vec::new();
        for raw in s.split(',').map(str::trim).filter(|c| !c.is_empty()) {
            let text = raw.replace('≥', ">=").replace('≤', "<=");
            let pos = text
                .find(['<', '>', '='])
                .ok_or_else(|| Error::InvalidPredicate { clause: raw.into(), message: "no comparator".into() })?;
            let (attribute, rest) = text.split_at(pos);
            let (op, value) = if let Some(v) = rest.strip_prefix(">=") {
                (Comparator::Ge, v)
            } else if let Some(v) = rest.strip_prefix("<=") {
                (Comparator::Le, v)
            } else if let Some(v) = rest.strip_prefix('<') {
                (Comparator::Lt, v)
            } else if let Some(v) = rest.strip_prefix('>') {
                (Comparator::Gt, v)
            } else {
                (Comparator::Eq, rest.trim_start_matches('='))
            };
            let attribute = attribute.trim();
            let value = value.trim();
            if attribute.is_empty() || value.is_empty() {
                return Err(Error::InvalidPredicate { clause: raw.into(), message: "empty attribute or value".into() });
            }
            let value = match value.parse::<f64>() {
                Ok(v) if v.is_finite() => Literal::Number(v),
                _ => Literal::Text(value.to_string()),
            };
            clauses.push(Clause { attribute: attribute.to_string(), op, value });
        }
        Ok(CohortPredicate { clauses })
    }
}

/// Keeps the cases satisfying every clause; match statistics are recounted
/// over the retained cases.
pub fn filter_cohort(log: &EventLog, pred: &CohortPredicate) -> Result<EventLog> {
    if let Some(unknown) = pred.clauses.iter().find(|c| !log.schema.case.contains_key(&c.attribute)) {
        return Err(Error::UnknownAttribute(unknown.attribute.clone()));
    }
    let cases: Vec<Case> = log.cases.iter().filter(|c| pred.matches(c)).cloned().collect();
    Ok(EventLog { home_tz: log.home_tz, match_stats: MatchStats::count(&cases), schema: log.schema.clone(), cases })
}

/// Keeps the cases containing at least one event named `activity`.
pub fn filter_cases_with_activity(log: &EventLog, activity: &str) -> EventLog {
    let cases: Vec<Case> = log
        .cases
        .iter()
        .filter(|c| c.events.iter().any(|e| e.activity == activity))
        .cloned()
        .collect();
    EventLog { home_tz: log.home_tz, match_stats: MatchStats::count(&cases), schema: log.schema.clone(), cases }
}
