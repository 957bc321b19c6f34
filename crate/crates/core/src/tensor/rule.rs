//! Unfolding rules: ordered partitions of the tensor modes.

use crate::error::{invalid, FcpError, Result};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// Ordered partition of modes `0..N` into `M` nonempty groups.
///
/// Groups are stored 0-based. The textual form is 1-based, e.g.
/// `1,(2,3),(4,5)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct UnfoldingRule {
    groups: Vec<Vec<usize>>,
}

impl UnfoldingRule {
    /// Builds a rule from 0-based groups. Validates the partition property
    /// against the order implied by the largest mode index.
    pub fn new(groups: Vec<Vec<usize>>) -> Result<Self> {
        let rule = Self { groups };
        let order = rule.groups.iter().map(Vec::len).sum();
        rule.validate(order)?;
        Ok(rule)
    }

    /// Builds a rule from 1-based groups.
    pub fn from_one_based(groups: &[Vec<usize>]) -> Result<Self> {
        let mut zero = Vec::with_capacity(groups.len());
        for g in groups {
            let mut out = Vec::with_capacity(g.len());
            for &m in g {
                if m == 0 {
                    return invalid("mode numbers are 1-based");
                }
                out.push(m - 1);
            }
            zero.push(out);
        }
        Self::new(zero)
    }

    /// `[1],[2],...,[N]`.
    pub fn identity(order: usize) -> Self {
        Self {
            groups: (0..order).map(|n| vec![n]).collect(),
        }
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    /// Number of groups `M`, i.e. the order of the unfolded tensor.
    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    /// Number of original modes covered.
    pub fn order(&self) -> usize {
        self.groups.iter().map(Vec::len).sum()
    }

    pub fn is_identity(&self) -> bool {
        self.groups
            .iter()
            .enumerate()
            .all(|(k, g)| g.len() == 1 && g[0] == k)
    }

    /// True when no group has more than one mode.
    pub fn has_merged_groups(&self) -> bool {
        self.groups.iter().any(|g| g.len() > 1)
    }

    /// Concatenation of the groups: the mode permutation applied before reshaping.
    pub fn permutation(&self) -> Vec<usize> {
        self.groups.iter().flatten().copied().collect()
    }

    pub fn merged_sizes(&self, shape: &[usize]) -> Vec<usize> {
        self.groups
            .iter()
            .map(|g| g.iter().map(|&k| shape[k]).product())
            .collect()
    }

    pub fn validate(&self, order: usize) -> Result<()> {
        if self.groups.is_empty() {
            return invalid("unfolding rule needs at least one group");
        }
        if self.groups.iter().any(Vec::is_empty) {
            return invalid(format!("rule {self} has an empty group"));
        }
        let mut seen = vec![false; order];
        let mut count = 0;
        for &m in self.groups.iter().flatten() {
            if m >= order || seen[m] {
                return invalid(format!(
                    "rule {self} is not a partition of modes 1..{order}"
                ));
            }
            seen[m] = true;
            count += 1;
        }
        if count != order {
            return invalid(format!("rule {self} does not cover modes 1..{order}"));
        }
        Ok(())
    }
}

impl fmt::Display for UnfoldingRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, g) in self.groups.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            if g.len() == 1 {
                write!(f, "{}", g[0] + 1)?;
            } else {
                f.write_str("(")?;
                for (j, m) in g.iter().enumerate() {
                    if j > 0 {
                        f.write_str(",")?;
                    }
                    write!(f, "{}", m + 1)?;
                }
                f.write_str(")")?;
            }
        }
        Ok(())
    }
}

impl FromStr for UnfoldingRule {
    type Err = FcpError;

    /// Parses `1,(2,3),(4,5)`; whitespace is ignored and an optional pair of
    /// outer brackets is accepted.
    fn from_str(s: &str) -> Result<Self> {
        let compact: String = s.chars().filter(|c| !c.is_whitespace()).collect();
        let body = compact
            .strip_prefix('[')
            .and_then(|b| b.strip_suffix(']'))
            .unwrap_or(&compact);
        if body.is_empty() {
            return invalid("empty unfolding rule");
        }
        let bad = || FcpError::InvalidArgument(format!("cannot parse unfolding rule '{s}'"));
        let mut groups = Vec::new();
        let mut chars = body.chars().peekable();
        loop {
            match chars.peek() {
                Some('(') => {
                    chars.next();
                    let mut inner = String::new();
                    loop {
                        match chars.next() {
                            Some(')') => break,
                            Some(c) if c.is_ascii_digit() || c == ',' => inner.push(c),
                            _ => return Err(bad()),
                        }
                    }
                    let group = inner
                        .split(',')
                        .map(|t| t.parse::<usize>().map_err(|_| bad()))
                        .collect::<Result<Vec<_>>>()?;
                    groups.push(group);
                }
                Some(c) if c.is_ascii_digit() => {
                    let mut num = String::new();
                    while let Some(&c) = chars.peek() {
                        if !c.is_ascii_digit() {
                            break;
                        }
                        num.push(c);
                        chars.next();
                    }
                    groups.push(vec![num.parse::<usize>().map_err(|_| bad())?]);
                }
                _ => return Err(bad()),
            }
            match chars.next() {
                None => break,
                Some(',') => continue,
                Some(_) => return Err(bad()),
            }
        }
        Self::from_one_based(&groups)
    }
}
