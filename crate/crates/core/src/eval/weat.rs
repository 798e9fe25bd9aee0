use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::word2vec::EmbeddingTable;
use crate::{Error, Result};

/// Target sets `X`, `Y` and attribute sets `A`, `B` of one association test.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeatSpec {
    #[serde(rename = "X")]
    pub x: Vec<String>,
    #[serde(rename = "Y")]
    pub y: Vec<String>,
    #[serde(rename = "A")]
    pub a: Vec<String>,
    #[serde(rename = "B")]
    pub b: Vec<String>,
}

impl WeatSpec {
    pub fn new(
        x: impl IntoIterator<Item = impl Into<String>>,
        y: impl IntoIterator<Item = impl Into<String>>,
        a: impl IntoIterator<Item = impl Into<String>>,
        b: impl IntoIterator<Item = impl Into<String>>,
    ) -> Result<Self> {
        fn owned(words: impl IntoIterator<Item = impl Into<String>>) -> Vec<String> {
            words.into_iter().map(Into::into).collect()
        }
        let spec = WeatSpec {
            x: owned(x),
            y: owned(y),
            a: owned(a),
            b: owned(b),
        };
        spec.validate()?;
        Ok(spec)
    }

    fn sets(&self) -> [(&'static str, &[String]); 4] {
        [("X", &self.x), ("Y", &self.y), ("A", &self.a), ("B", &self.b)]
    }

    /// Sets must be non-empty, lowercase, free of repeats and pairwise disjoint.
    pub fn validate(&self) -> Result<()> {
        let mut seen: HashSet<&str> = HashSet::new();
        for (name, set) in self.sets() {
            if set.is_empty() {
                return Err(Error::Config(format!("WEAT set {name} is empty")));
            }
            for w in set {
                if w.is_empty() || w.chars().any(char::is_uppercase) {
                    return Err(Error::Config(format!("WEAT set {name}: {w:?} is not a lowercase word")));
                }
                if !seen.insert(w) {
                    return Err(Error::Config(format!(
                        "WEAT set {name}: {w:?} appears in more than one place"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: WeatSpec = serde_json::from_str(text).map_err(|e| Error::Config(format!("WEAT spec: {e}")))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let spec: WeatSpec = serde_json::from_str(&text).map_err(|e| Error::parse(path, e.line(), e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    /// Female- and male-stereotyped careers against female and male attributes.
    pub fn career() -> Self {
        WeatSpec::from_json(include_str!("../../data/career_weat.json")).expect("shipped spec is valid")
    }

    /// Pleasant and unpleasant words against female and male attributes.
    pub fn pleasant() -> Self {
        WeatSpec::from_json(include_str!("../../data/pleasant_weat.json")).expect("shipped spec is valid")
    }

    pub fn swap_attributes(&self) -> Self {
        WeatSpec {
            a: self.b.clone(),
            b: self.a.clone(),
            ..self.clone()
        }
    }

    pub fn swap_targets(&self) -> Self {
        WeatSpec {
            x: self.y.clone(),
            y: self.x.clone(),
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeatResult {
    /// `Σ_x s(x, A, B) - Σ_y s(y, A, B)`.
    pub statistic: f64,
    /// Difference of mean associations over the sample standard deviation of
    /// all target associations.
    pub effect_size: f64,
    /// `s(w, A, B)` for each word of `X` then `Y`.
    pub associations: Vec<(String, f64)>,
}

/// Cosine similarity; 0 when either vector is zero.
pub fn cosine(u: &[f64], v: &[f64]) -> f64 {
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    let nu = u.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nv = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    if nu == 0.0 || nv == 0.0 {
        0.0
    } else {
        dot / (nu * nv)
    }
}

fn mean(xs: impl ExactSizeIterator<Item = f64>) -> f64 {
    let n = xs.len() as f64;
    xs.sum::<f64>() / n
}

/// Computes the association statistic and effect size. Every word of the
/// spec must have a vector; missing words are all reported at once.
pub fn weat(embeddings: &EmbeddingTable, spec: &WeatSpec) -> Result<WeatResult> {
    spec.validate()?;
    let mut missing: Vec<String> = spec
        .sets()
        .iter()
        .flat_map(|(_, set)| set.iter())
        .filter(|w| embeddings.get(w).is_none())
        .cloned()
        .collect();
    if !missing.is_empty() {
        missing.sort();
        return Err(Error::MissingWords(missing));
    }
    let vec = |w: &String| embeddings.get(w).expect("checked above");
    let association = |w: &String| {
        let t = vec(w);
        mean(spec.a.iter().map(|a| cosine(t, vec(a)))) - mean(spec.b.iter().map(|b| cosine(t, vec(b))))
    };
    let sx: Vec<f64> = spec.x.iter().map(association).collect();
    let sy: Vec<f64> = spec.y.iter().map(association).collect();

    let statistic = sx.iter().sum::<f64>() - sy.iter().sum::<f64>();
    let all: Vec<f64> = sx.iter().chain(&sy).copied().collect();
    let m = mean(all.iter().copied());
    // X and Y are non-empty, so there are at least two associations.
    let var = all.iter().map(|s| (s - m).powi(2)).sum::<f64>() / (all.len() - 1) as f64;
    let std = var.sqrt();
    if !(std > 1e-12) {
        return Err(Error::DegenerateSpec);
    }
    let effect_size = (mean(sx.iter().copied()) - mean(sy.iter().copied())) / std;
    let associations = spec.x.iter().chain(&spec.y).cloned().zip(all).collect();
    Ok(WeatResult {
        statistic,
        effect_size,
        associations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn table(entries: &[(&str, Vec<f64>)]) -> EmbeddingTable {
        EmbeddingTable::new(entries.iter().map(|(w, v)| (w.to_string(), v.clone())).collect()).unwrap()
    }

    fn spec(x: &[&str], y: &[&str], a: &[&str], b: &[&str]) -> WeatSpec {
        WeatSpec::new(
            x.iter().copied(),
            y.iter().copied(),
            a.iter().copied(),
            b.iter().copied(),
        )
        .unwrap()
    }

    #[test]
    fn hand_computed_plane_example() {
        let emb = table(&[
            ("x", vec![1.0, 0.0]),
            ("y", vec![0.0, 1.0]),
            ("a", vec![1.0, 0.0]),
            ("b", vec![0.0, 1.0]),
        ]);
        let r = weat(&emb, &spec(&["x"], &["y"], &["a"], &["b"])).unwrap();
        assert_eq!(r.associations, vec![("x".to_string(), 1.0), ("y".to_string(), -1.0)]);
        assert!((r.statistic - 2.0).abs() < 1e-12);
        // Sample std of {1, -1} is sqrt(2).
        assert!((r.effect_size - 2.0 / 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn identical_vectors_are_degenerate() {
        let v = vec![0.3, 0.4];
        let emb = table(&[("x", v.clone()), ("y", v.clone()), ("a", v.clone()), ("b", v)]);
        assert!(matches!(
            weat(&emb, &spec(&["x"], &["y"], &["a"], &["b"])),
            Err(Error::DegenerateSpec)
        ));
    }

    #[test]
    fn missing_words_are_listed() {
        let emb = table(&[("x", vec![1.0]), ("a", vec![1.0])]);
        let err = weat(&emb, &spec(&["x"], &["y"], &["a"], &["b", "c"])).unwrap_err();
        assert!(matches!(err, Error::MissingWords(ref w) if w == &["b", "c", "y"]));
    }

    #[test]
    fn invalid_specs_are_rejected() {
        assert!(WeatSpec::new(["x"], ["x"], ["a"], ["b"]).is_err());
        assert!(WeatSpec::new(["x"], Vec::<String>::new(), ["a"], ["b"]).is_err());
        assert!(WeatSpec::new(["X"], ["y"], ["a"], ["b"]).is_err());
        assert!(WeatSpec::from_json(r#"{"X":["x"],"Y":["y"],"A":["a"],"B":["b"],"C":[]}"#).is_err());
    }

    #[test]
    fn shipped_specs_load() {
        let career = WeatSpec::career();
        assert_eq!((career.x.len(), career.y.len()), (11, 9));
        assert!(career.a.contains(&"she".to_string()) && career.b.contains(&"he".to_string()));
        let pleasant = WeatSpec::pleasant();
        assert_eq!((pleasant.x.len(), pleasant.y.len()), (25, 25));
    }

    fn vector(dim: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-1.0f64..1.0, dim)
    }

    proptest! {
        #[test]
        fn antisymmetry_and_scale_invariance(
            vs in prop::collection::vec(vector(4), 6),
            k in 0.01f64..100.0,
        ) {
            prop_assume!(vs.iter().all(|v| v.iter().map(|x| x * x).sum::<f64>() > 1e-3));
            let names = ["x1", "x2", "y1", "y2", "a", "b"];
            let entries: Vec<_> = names.iter().zip(&vs).map(|(n, v)| (*n, v.clone())).collect();
            let emb = table(&entries);
            let s = spec(&["x1", "x2"], &["y1", "y2"], &["a"], &["b"]);
            let Ok(base) = weat(&emb, &s) else { return Ok(()) };
            let tol = |x: f64, eps: f64| eps * x.abs().max(1.0);

            for flipped in [s.swap_attributes(), s.swap_targets()] {
                let r = weat(&emb, &flipped).unwrap();
                prop_assert!((r.statistic + base.statistic).abs() <= tol(base.statistic, 1e-12));
                prop_assert!((r.effect_size + base.effect_size).abs() <= tol(base.effect_size, 1e-12));
            }

            let scaled: Vec<_> = entries.iter().map(|(n, v)| (*n, v.iter().map(|x| x * k).collect())).collect();
            let r = weat(&table(&scaled), &s).unwrap();
            prop_assert!((r.statistic - base.statistic).abs() <= tol(base.statistic, 1e-9));
            prop_assert!((r.effect_size - base.effect_size).abs() <= tol(base.effect_size, 1e-9));
        }
    }
}
