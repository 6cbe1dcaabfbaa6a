use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::timeline::{encode_runs, Action, ActionTimeline, Segment, NUM_ACTIONS};

/// Relabel a violating segment found between `prev` and `next`.
/// `None` on either side matches any class; timeline ends count as `No`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RepairRule {
    pub prev: Option<u8>,
    pub next: Option<u8>,
    pub replace_with: u8,
}

/// Allowed class transitions plus a repair table for segments that break them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActionGrammar {
    allowed: [[bool; NUM_ACTIONS]; NUM_ACTIONS],
    rules: Vec<RepairRule>,
}

#[derive(Serialize, Deserialize)]
struct RuleFile {
    prev: Option<String>,
    next: Option<String>,
    replace_with: String,
}

#[derive(Serialize, Deserialize)]
struct GrammarFile {
    transitions: Vec<(String, String)>,
    repairs: Vec<RuleFile>,
}

fn parse_action(name: &str) -> Result<u8> {
    Action::from_name(name)
        .map(Action::id)
        .ok_or_else(|| Error::Config(format!("unknown action `{name}`")))
}

impl ActionGrammar {
    pub fn new(transitions: &[(u8, u8)], rules: Vec<RepairRule>) -> Result<Self> {
        let check = |c: u8| {
            if (c as usize) < NUM_ACTIONS {
                Ok(())
            } else {
                Err(Error::Config(format!("class id {c} out of range")))
            }
        };
        let mut allowed = [[false; NUM_ACTIONS]; NUM_ACTIONS];
        for (i, row) in allowed.iter_mut().enumerate() {
            row[i] = true;
        }
        for &(a, b) in transitions {
            check(a)?;
            check(b)?;
            allowed[a as usize][b as usize] = true;
        }
        for r in &rules {
            r.prev.map(check).transpose()?;
            r.next.map(check).transpose()?;
            check(r.replace_with)?;
        }
        Ok(Self { allowed, rules })
    }

    /// Suturing order: vessel cutting, then repeated cycles of needle
    /// handling, touching the vessel, withdrawing, knot tying and cutting.
    /// Background may appear anywhere.
    pub fn surgical_default() -> Self {
        use Action::*;
        let chain = [
            (VesselCutting, NeedleHandling),
            (NeedleHandling, NeedleTouchVessel),
            (NeedleTouchVessel, NeedleWithdrawing),
            (NeedleWithdrawing, KnotTying),
            (KnotTying, KnotCutting),
            (KnotCutting, NeedleHandling),
        ];
        let mut transitions: Vec<(u8, u8)> = chain.iter().map(|(a, b)| (a.id(), b.id())).collect();
        for a in Action::ALL.iter().skip(1) {
            transitions.push((No.id(), a.id()));
            transitions.push((a.id(), No.id()));
        }
        let mut g = Self::new(&transitions, Vec::new()).expect("default grammar is valid");
        // the unique stage that fits between two neighbours, when there is one
        let mut rules = Vec::new();
        for p in 0..NUM_ACTIONS as u8 {
            for n in 0..NUM_ACTIONS as u8 {
                let fits: Vec<u8> = (1..NUM_ACTIONS as u8)
                    .filter(|&c| c != p && c != n && g.allows(p, c) && g.allows(c, n))
                    .collect();
                if let [c] = fits[..] {
                    rules.push(RepairRule { prev: Some(p), next: Some(n), replace_with: c });
                }
            }
        }
        g.rules = rules;
        g
    }

    pub fn allows(&self, from: u8, to: u8) -> bool {
        self.allowed[from as usize][to as usize]
    }

    pub fn rules(&self) -> &[RepairRule] {
        &self.rules
    }

    fn lookup(&self, prev: u8, next: u8) -> Option<u8> {
        let hit = |r: &&RepairRule, exact: usize| {
            let score = r.prev.is_some() as usize + r.next.is_some() as usize;
            score == exact && r.prev.is_none_or(|p| p == prev) && r.next.is_none_or(|n| n == next)
        };
        (0..=2)
            .rev()
            .find_map(|exact| self.rules.iter().find(|r| hit(r, exact)))
            .map(|r| r.replace_with)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: GrammarFile = serde_json::from_str(text)?;
        let transitions = file
            .transitions
            .iter()
            .map(|(a, b)| Ok((parse_action(a)?, parse_action(b)?)))
            .collect::<Result<Vec<_>>>()?;
        let rules = file
            .repairs
            .iter()
            .map(|r| {
                Ok(RepairRule {
                    prev: r.prev.as_deref().map(parse_action).transpose()?,
                    next: r.next.as_deref().map(parse_action).transpose()?,
                    replace_with: parse_action(&r.replace_with)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(&transitions, rules)
    }

    pub fn to_json(&self) -> String {
        let name = |c: u8| Action::ALL[c as usize].name().to_string();
        let mut transitions = Vec::new();
        for a in 0..NUM_ACTIONS as u8 {
            for b in 0..NUM_ACTIONS as u8 {
                if a != b && self.allows(a, b) {
                    transitions.push((name(a), name(b)));
                }
            }
        }
        let repairs = self
            .rules
            .iter()
            .map(|r| RuleFile {
                prev: r.prev.map(name),
                next: r.next.map(name),
                replace_with: name(r.replace_with),
            })
            .collect();
        serde_json::to_string_pretty(&GrammarFile { transitions, repairs }).expect("grammar serializes")
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Index of the first adjacent pair that breaks a transition rule.
    pub fn first_violation(&self, runs: &[Segment]) -> Option<usize> {
        runs.windows(2).position(|w| !self.allows(w[0].class_id, w[1].class_id))
    }
}

impl Default for ActionGrammar {
    fn default() -> Self {
        Self::surgical_default()
    }
}

/// Repair transition violations until none remain.
///
/// Of each violating pair the shorter segment (the later on ties) is
/// relabelled from the repair table; without a usable rule it merges into a
/// neighbour, preferring one whose class fits the other side.
pub fn apply_grammar(t: &ActionTimeline, g: &ActionGrammar) -> ActionTimeline {
    let mut runs = encode_runs(t.labels());
    while let Some(i) = g.first_violation(&runs) {
        let j = if runs[i].len() < runs[i + 1].len() { i } else { i + 1 };
        runs[j].class_id = repair_class(&runs, j, g);
        let labels: Vec<u8> = runs.iter().flat_map(|s| std::iter::repeat_n(s.class_id, s.len())).collect();
        runs = encode_runs(&labels);
    }
    let labels = runs.iter().flat_map(|s| std::iter::repeat_n(s.class_id, s.len())).collect();
    t.with_labels(labels).expect("labels come from a valid timeline")
}

fn repair_class(runs: &[Segment], j: usize, g: &ActionGrammar) -> u8 {
    let prev = (j > 0).then(|| runs[j - 1].class_id);
    let next = runs.get(j + 1).map(|s| s.class_id);
    let fits = |c: u8| prev.is_none_or(|p| g.allows(p, c)) && next.is_none_or(|n| g.allows(c, n));
    let no = Action::No.id();
    if let Some(c) = g.lookup(prev.unwrap_or(no), next.unwrap_or(no)) {
        if c != runs[j].class_id && fits(c) {
            return c;
        }
    }
    let mut neighbours: Vec<(usize, u8)> = Vec::new();
    if let Some(p) = prev {
        neighbours.push((runs[j - 1].len(), p));
    }
    if let Some(n) = next {
        neighbours.push((runs[j + 1].len(), n));
    }
    // longer first, preceding wins ties (stable sort)
    neighbours.sort_by(|a, b| b.0.cmp(&a.0));
    neighbours
        .iter()
        .find(|(_, c)| fits(*c))
        .or(neighbours.first())
        .map(|&(_, c)| c)
        .expect("a violating segment has a neighbour")
}
