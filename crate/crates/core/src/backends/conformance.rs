//! Contract checks every backend implementation must pass: reply arity,
//! value ranges, precondition errors and determinism.

use std::fmt;

use serde::Serialize;

use crate::corpus::tokenize;
use crate::pipeline::MaskedSequence;

use super::BackendSet;

const PROBE_TEXTS: [&str; 4] = [
    "The men are duchesses",
    "She loves her work.",
    "report",
    "He said: \"it's fine\", didn't he?",
];

#[derive(Debug, Clone, Serialize)]
pub struct ConformanceCheck {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct ConformanceReport {
    pub checks: Vec<ConformanceCheck>,
}

impl ConformanceReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &ConformanceCheck> {
        self.checks.iter().filter(|c| !c.passed)
    }

    fn record(&mut self, name: &'static str, outcome: Result<(), String>) {
        let (passed, detail) = match outcome {
            Ok(()) => (true, String::new()),
            Err(e) => (false, e),
        };
        self.checks.push(ConformanceCheck { name, passed, detail });
    }
}

impl fmt::Display for ConformanceReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            let mark = if c.passed { "ok  " } else { "FAIL" };
            write!(f, "{mark} {}", c.name)?;
            if !c.detail.is_empty() {
                write!(f, ": {}", c.detail)?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

pub fn run_conformance(backends: &BackendSet) -> ConformanceReport {
    let mut report = ConformanceReport::default();

    report.record("score: one finite score per token", {
        PROBE_TEXTS.iter().try_for_each(|text| {
            let seq = tokenize(text);
            let scores = backends.scorer.score_tokens(&seq).map_err(|e| e.to_string())?;
            ensure(scores.len() == seq.len(), || {
                format!("{text:?}: {} scores for {} tokens", scores.len(), seq.len())
            })?;
            ensure(
                scores
                    .iter()
                    .enumerate()
                    .all(|(i, s)| s.word_index == i && s.score.is_finite()),
                || format!("{text:?}: scores out of order or non-finite"),
            )
        })
    });
    report.record(
        "score: empty input rejected",
        ensure(backends.scorer.score_tokens(&tokenize("")).is_err(), || {
            "empty sequence was accepted".into()
        }),
    );

    let one_slot = MaskedSequence::new(tokenize("The men are duchesses"), vec![3..4]).expect("valid slots");
    let two_slots = MaskedSequence::new(tokenize("She loves her husband"), vec![0..1, 3..4]).expect("valid slots");
    report.record("infill: one non-empty fill per slot", {
        [&one_slot, &two_slots].iter().try_for_each(|m| {
            let fills = backends.infiller.infill(m).map_err(|e| e.to_string())?;
            ensure(fills.len() == m.slots().len(), || {
                format!("{:?}: {} fills for {} slots", m.render(), fills.len(), m.slots().len())
            })?;
            ensure(
                fills
                    .iter()
                    .all(|f| !f.is_empty() && f.iter().all(|w| !w.trim().is_empty())),
                || format!("{:?}: empty fill", m.render()),
            )
        })
    });
    report.record("infill: zero slots rejected", {
        let zero = MaskedSequence::new(tokenize("The men"), Vec::new()).expect("valid slots");
        ensure(backends.infiller.infill(&zero).is_err(), || {
            "zero-slot request was accepted".into()
        })
    });

    report.record("classify: probability in [0, 1]", {
        PROBE_TEXTS.iter().try_for_each(|text| {
            let v = backends.classifier.classify_gender(text).map_err(|e| e.to_string())?;
            ensure((0.0..=1.0).contains(&v.p_female), || {
                format!("{text:?}: p_female = {}", v.p_female)
            })
        })
    });
    report.record(
        "classify: empty text rejected",
        ensure(backends.classifier.classify_gender("").is_err(), || {
            "empty text was accepted".into()
        }),
    );

    report.record("lm: finite non-positive log-probability", {
        PROBE_TEXTS.iter().try_for_each(|text| {
            let s = backends.lm.lm_logprob(text).map_err(|e| e.to_string())?;
            ensure(s.logprob.is_finite() && s.logprob <= 0.0 && s.n_tokens > 0, || {
                format!("{text:?}: logprob {} over {} tokens", s.logprob, s.n_tokens)
            })
        })
    });
    report.record(
        "lm: empty text rejected",
        ensure(backends.lm.lm_logprob("").is_err(), || "empty text was accepted".into()),
    );

    report.record("all roles: repeated calls agree", {
        let text = PROBE_TEXTS[1];
        let twice = || -> Result<_, String> {
            let s = backends
                .scorer
                .score_tokens(&tokenize(text))
                .map_err(|e| e.to_string())?;
            let f = backends.infiller.infill(&one_slot).map_err(|e| e.to_string())?;
            let c = backends.classifier.classify_gender(text).map_err(|e| e.to_string())?;
            let l = backends.lm.lm_logprob(text).map_err(|e| e.to_string())?;
            Ok((s, f, c, l))
        };
        match (twice(), twice()) {
            (Ok(a), Ok(b)) => ensure(a == b, || "replies differ between identical requests".into()),
            (Err(e), _) | (_, Err(e)) => Err(e),
        }
    });

    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::{BackendConfig, BackendSet};
    use std::sync::Arc;

    #[test]
    fn default_mocks_conform_except_for_the_missing_lm() {
        let set = BackendSet::from_config(&BackendConfig::default()).unwrap();
        let report = run_conformance(&set);
        let failed: Vec<_> = report.failures().map(|c| c.name).collect();
        assert_eq!(
            failed,
            [
                "lm: finite non-positive log-probability",
                "all roles: repeated calls agree"
            ]
        );
    }

    #[test]
    fn mocks_with_an_lm_conform() {
        let mut set = BackendSet::from_config(&BackendConfig::default()).unwrap();
        set.lm = Arc::new(crate::backends::mock::UniformLm { vocab_size: 100 });
        let report = run_conformance(&set);
        assert!(report.passed(), "{report}");
    }
}
