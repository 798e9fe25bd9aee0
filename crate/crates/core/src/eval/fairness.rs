use std::path::Path;

use serde::Serialize;

use crate::{Error, Result};

/// One prediction: true label `y`, predicted label `y_hat` and the group
/// the record belongs to.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FairnessRecord {
    pub y: bool,
    pub y_hat: bool,
    pub group: String,
}

impl FairnessRecord {
    pub fn new(y: bool, y_hat: bool, group: impl Into<String>) -> Self {
        FairnessRecord {
            y,
            y_hat,
            group: group.into(),
        }
    }
}

/// Confusion counts and rates of one group.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupRates {
    pub group: String,
    pub tp: usize,
    pub fn_: usize,
    pub fp: usize,
    pub tn: usize,
    pub tpr: f64,
    pub fpr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FairnessMetrics {
    /// `|TPR_a - TPR_a'|`.
    pub tprd: f64,
    /// `|FPR_a - FPR_a'|`.
    pub fprd: f64,
    /// Per-group counts, groups in sorted name order.
    pub groups: [GroupRates; 2],
}

fn group_rates(records: &[FairnessRecord], group: &str) -> Result<GroupRates> {
    let mut tp = 0;
    let mut fn_ = 0;
    let mut fp = 0;
    let mut tn = 0;
    for r in records.iter().filter(|r| r.group == group) {
        match (r.y, r.y_hat) {
            (true, true) => tp += 1,
            (true, false) => fn_ += 1,
            (false, true) => fp += 1,
            (false, false) => tn += 1,
        }
    }
    if tp + fn_ == 0 {
        return Err(Error::EmptyStratum(format!("y=1, group={group}")));
    }
    if fp + tn == 0 {
        return Err(Error::EmptyStratum(format!("y=0, group={group}")));
    }
    Ok(GroupRates {
        group: group.to_string(),
        tp,
        fn_,
        fp,
        tn,
        tpr: tp as f64 / (tp + fn_) as f64,
        fpr: fp as f64 / (fp + tn) as f64,
    })
}

/// True- and false-positive rate differences between the two groups present
/// in `records`, as absolute values.
pub fn tprd_fprd(records: &[FairnessRecord]) -> Result<FairnessMetrics> {
    let mut groups: Vec<&str> = records.iter().map(|r| r.group.as_str()).collect();
    groups.sort_unstable();
    groups.dedup();
    let [a, b] = groups[..] else {
        return Err(Error::Config(format!(
            "fairness metrics need exactly two groups, found {}: {groups:?}",
            groups.len()
        )));
    };
    let a = group_rates(records, a)?;
    let b = group_rates(records, b)?;
    Ok(FairnessMetrics {
        tprd: (a.tpr - b.tpr).abs(),
        fprd: (a.fpr - b.fpr).abs(),
        groups: [a, b],
    })
}

fn parse_binary(field: &str) -> Option<bool> {
    match field {
        "0" => Some(false),
        "1" => Some(true),
        _ => None,
    }
}

/// Reads `y,y_hat,group` rows. A first line whose label fields are not
/// binary is taken as a header; blank lines are skipped.
pub fn load_fairness_csv(path: impl AsRef<Path>) -> Result<Vec<FairnessRecord>> {
    let path = path.as_ref();
    let contents = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut records = Vec::new();
    for (i, line) in contents.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 3 {
            return Err(Error::parse(
                path,
                i + 1,
                format!("expected 3 fields, found {}", fields.len()),
            ));
        }
        match (parse_binary(fields[0]), parse_binary(fields[1])) {
            (Some(y), Some(y_hat)) if !fields[2].is_empty() => records.push(FairnessRecord::new(y, y_hat, fields[2])),
            _ if i == 0 => continue,
            _ => {
                return Err(Error::parse(
                    path,
                    i + 1,
                    "labels must be 0 or 1 and the group non-empty",
                ))
            }
        }
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn block(group: &str, tp: usize, fn_: usize, fp: usize, tn: usize) -> Vec<FairnessRecord> {
        let mut out = Vec::new();
        out.extend((0..tp).map(|_| FairnessRecord::new(true, true, group)));
        out.extend((0..fn_).map(|_| FairnessRecord::new(true, false, group)));
        out.extend((0..fp).map(|_| FairnessRecord::new(false, true, group)));
        out.extend((0..tn).map(|_| FairnessRecord::new(false, false, group)));
        out
    }

    #[test]
    fn identical_groups_give_zero() {
        let mut records = block("f", 3, 1, 1, 4);
        records.extend(block("m", 3, 1, 1, 4));
        let m = tprd_fprd(&records).unwrap();
        assert_eq!((m.tprd, m.fprd), (0.0, 0.0));
    }

    #[test]
    fn hand_counted_rates() {
        // TPR 3/4 vs 1/2, FPR 1/5 vs 1/5.
        let mut records = block("a", 3, 1, 1, 4);
        records.extend(block("b", 2, 2, 2, 8));
        let m = tprd_fprd(&records).unwrap();
        assert_eq!(m.tprd, 0.25);
        assert_eq!(m.fprd, 0.0);
        assert_eq!(m.groups[0].group, "a");
        assert_eq!((m.groups[1].tp, m.groups[1].fn_), (2, 2));
    }

    #[test]
    fn empty_stratum_is_named() {
        let mut records = block("a", 3, 1, 1, 4);
        records.extend(block("b", 0, 0, 2, 8));
        let err = tprd_fprd(&records).unwrap_err();
        assert!(matches!(&err, Error::EmptyStratum(s) if s == "y=1, group=b"), "{err}");
    }

    #[test]
    fn needs_two_groups() {
        assert!(matches!(tprd_fprd(&block("a", 1, 1, 1, 1)), Err(Error::Config(_))));
        let mut three = block("a", 1, 1, 1, 1);
        three.extend(block("b", 1, 1, 1, 1));
        three.extend(block("c", 1, 1, 1, 1));
        assert!(tprd_fprd(&three).is_err());
    }

    #[test]
    fn csv_with_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("preds.csv");
        std::fs::write(&path, "y,y_hat,group\n1,1,f\n0,1,m\n\n").unwrap();
        let records = load_fairness_csv(&path).unwrap();
        assert_eq!(
            records,
            vec![
                FairnessRecord::new(true, true, "f"),
                FairnessRecord::new(false, true, "m")
            ]
        );
        std::fs::write(&path, "1,1,f\n2,1,m\n").unwrap();
        assert!(matches!(load_fairness_csv(&path), Err(Error::Parse { line: 2, .. })));
    }

    proptest! {
        #[test]
        fn bounded_and_symmetric(
            a in (1usize..6, 0usize..6, 0usize..6, 1usize..6),
            b in (1usize..6, 0usize..6, 0usize..6, 1usize..6),
        ) {
            let mut records = block("a", a.0, a.1, a.2, a.3);
            records.extend(block("b", b.0, b.1, b.2, b.3));
            let m = tprd_fprd(&records).unwrap();
            prop_assert!((0.0..=1.0).contains(&m.tprd) && (0.0..=1.0).contains(&m.fprd));

            let renamed: Vec<_> = records
                .iter()
                .map(|r| FairnessRecord::new(r.y, r.y_hat, if r.group == "a" { "z" } else { "b" }))
                .collect();
            let swapped = tprd_fprd(&renamed).unwrap();
            prop_assert_eq!((m.tprd, m.fprd), (swapped.tprd, swapped.fprd));
        }
    }
}
