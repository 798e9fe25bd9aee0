use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Cell text for a metric a variant did not report.
pub const MISSING_CELL: &str = "\u{2014}";

pub const REPORT_COLUMNS: [&str; 6] = ["PPL", "T-Acc", "TPRD", "FPRD", "WEAT", "Effect_size"];

/// Metrics of one ablation variant; absent metrics render as [`MISSING_CELL`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VariantMetrics {
    pub variant: String,
    #[serde(default)]
    pub ppl: Option<f64>,
    #[serde(default)]
    pub transfer_accuracy: Option<f64>,
    #[serde(default)]
    pub tprd: Option<f64>,
    #[serde(default)]
    pub fprd: Option<f64>,
    #[serde(default)]
    pub weat: Option<f64>,
    #[serde(default)]
    pub effect_size: Option<f64>,
}

impl VariantMetrics {
    fn values(&self) -> [Option<f64>; 6] {
        [
            self.ppl,
            self.transfer_accuracy,
            self.tprd,
            self.fprd,
            self.weat,
            self.effect_size,
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationTable {
    /// Variant name and one formatted cell per column of [`REPORT_COLUMNS`].
    pub rows: Vec<(String, [String; 6])>,
    pub warnings: Vec<String>,
}

impl AblationTable {
    pub fn to_markdown(&self) -> String {
        let mut out = format!("| Variant | {} |\n", REPORT_COLUMNS.join(" | "));
        out.push_str(&format!("|---|{}\n", "---:|".repeat(REPORT_COLUMNS.len())));
        for (name, cells) in &self.rows {
            out.push_str(&format!("| {name} | {} |\n", cells.join(" | ")));
        }
        out
    }

    pub fn to_tsv(&self) -> String {
        let mut out = format!("Variant\t{}\n", REPORT_COLUMNS.join("\t"));
        for (name, cells) in &self.rows {
            out.push_str(&format!("{name}\t{}\n", cells.join("\t")));
        }
        out
    }
}

/// One row per variant in input order. Missing metrics become
/// [`MISSING_CELL`] and produce a warning.
pub fn ablation_report(variants: &[VariantMetrics]) -> Result<AblationTable> {
    if variants.is_empty() {
        return Err(Error::Empty("ablation report needs at least one variant".into()));
    }
    let mut warnings = Vec::new();
    let rows = variants
        .iter()
        .map(|v| {
            let values = v.values();
            let cells = std::array::from_fn(|i| match values[i] {
                Some(x) => format!("{x:.2}"),
                None => {
                    let w = format!("variant {}: no {} value", v.variant, REPORT_COLUMNS[i]);
                    log::warn!("{w}");
                    warnings.push(w);
                    MISSING_CELL.to_string()
                }
            });
            (v.variant.clone(), cells)
        })
        .collect();
    Ok(AblationTable { rows, warnings })
}
