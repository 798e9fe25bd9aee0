/// Capitalisation pattern of a token.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Casing {
    Lower,
    Title,
    Upper,
    Mixed,
}

pub fn casing_of(s: &str) -> Casing {
    let letters: Vec<char> = s.chars().filter(|c| c.is_alphabetic()).collect();
    let Some((first, rest)) = letters.split_first() else {
        return Casing::Lower;
    };
    if letters.iter().all(|c| !c.is_uppercase()) {
        Casing::Lower
    } else if first.is_uppercase() && rest.iter().all(|c| !c.is_uppercase()) {
        Casing::Title
    } else if letters.iter().all(|c| !c.is_lowercase()) {
        // a lone capital is indistinguishable from Title; classify it as such
        if letters.len() == 1 {
            Casing::Title
        } else {
            Casing::Upper
        }
    } else {
        Casing::Mixed
    }
}

/// Re-applies the casing of `source` to a lowercase `replacement`.
pub fn apply_casing(source: &str, replacement: &str) -> String {
    match casing_of(source) {
        Casing::Lower => replacement.to_lowercase(),
        Casing::Upper => replacement.to_uppercase(),
        Casing::Title => {
            let mut chars = replacement.chars();
            match chars.next() {
                Some(c) => c.to_uppercase().chain(chars.flat_map(char::to_lowercase)).collect(),
                None => String::new(),
            }
        }
        Casing::Mixed => {
            // position-wise copy of the source's upper/lower pattern
            let mask: Vec<bool> = source.chars().map(char::is_uppercase).collect();
            replacement
                .chars()
                .enumerate()
                .flat_map(|(i, c)| -> Box<dyn Iterator<Item = char>> {
                    if mask.get(i).copied().unwrap_or(false) {
                        Box::new(c.to_uppercase())
                    } else {
                        Box::new(c.to_lowercase())
                    }
                })
                .collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn classes() {
        assert_eq!(casing_of("her"), Casing::Lower);
        assert_eq!(casing_of("Bachelor"), Casing::Title);
        assert_eq!(casing_of("HER"), Casing::Upper);
        assert_eq!(casing_of("McDonald"), Casing::Mixed);
        assert_eq!(casing_of("I"), Casing::Title);
        assert_eq!(casing_of("42"), Casing::Lower);
    }

    #[test]
    fn reapply() {
        assert_eq!(apply_casing("Bachelor", "spinster"), "Spinster");
        assert_eq!(apply_casing("HER", "his"), "HIS");
        assert_eq!(apply_casing("her", "his"), "his");
        assert_eq!(apply_casing("hE", "she"), "sHe");
    }
}
