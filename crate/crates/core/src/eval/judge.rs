//! Containment judging over normalized text.

/// Lowercase, punctuation to spaces, whitespace collapsed.
pub fn normalize(text: &str) -> String {
    let spaced: String =
        text.chars().map(|c| if c.is_alphanumeric() { c } else { ' ' }).flat_map(char::to_lowercase).collect();
    spaced.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn contains_tokens(haystack: &str, needle: &str) -> bool {
    !needle.is_empty() && format!(" {haystack} ").contains(&format!(" {needle} "))
}

/// True iff the normalized output contains the normalized gold or an alias
/// as a whole-token run.
pub fn judge<S: AsRef<str>>(output: &str, gold: &str, aliases: &[S]) -> bool {
    let out = normalize(output);
    std::iter::once(gold).chain(aliases.iter().map(AsRef::as_ref)).any(|g| contains_tokens(&out, &normalize(g)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const NONE: &[&str] = &[];

    #[test]
    fn examples() {
        assert!(judge("Thought: ... Therefore the answer is Taloga.\nAnswer: Taloga", "Taloga", NONE));
        assert!(judge("Taloga", "Taloga", NONE));
        assert!(!judge("The USSR", "US", NONE));
        assert!(judge("born in the U.S.", "U.S.", NONE));
        assert!(judge("Answer: Washington, D.C.", "Washington DC", &["Washington, D.C."]));
        assert!(judge("E00017-kalomi", "E00017-Kalomi", NONE));
        assert!(!judge("E00017-kalomiz", "E00017-Kalomi", NONE));
        assert!(!judge("anything", "!!", NONE));
    }

    #[test]
    fn alias_accepted() {
        assert!(judge("Answer: Taloga, Oklahoma", "Taloga City", &["Taloga, Oklahoma"]));
        assert!(!judge("Answer: Tulsa", "Taloga", &["Taloga, Oklahoma"]));
    }

    /// Independent boundary oracle: a match must start at a token start and
    /// end at a token end of the normalized output.
    fn boundary_oracle(out: &str, gold: &str) -> bool {
        let (o, g) = (normalize(out), normalize(gold));
        if g.is_empty() {
            return false;
        }
        let ob = o.as_bytes();
        (0..=o.len().saturating_sub(g.len())).any(|i| {
            o.get(i..i + g.len()) == Some(g.as_str())
                && (i == 0 || ob[i - 1] == b' ')
                && (i + g.len() == o.len() || ob[i + g.len()] == b' ')
        })
    }

    #[test]
    fn adversarial_pairs_match_oracle() {
        let pairs = [
            ("USSR", "US"),
            ("US", "USSR"),
            ("the us army", "US"),
            ("Paris-based", "Paris"),
            ("Parisian", "Paris"),
            ("New York City", "York"),
            ("NewYork", "York"),
            ("is 1999.", "99"),
            ("UK/US", "US"),
            ("", "US"),
        ];
        for (out, gold) in pairs {
            assert_eq!(judge(out, gold, NONE), boundary_oracle(out, gold), "{out:?} vs {gold:?}");
        }
    }

    proptest! {
        #[test]
        fn appending_never_breaks_a_match(
            out in "[a-zA-Z ,.]{0,30}",
            gold in "[a-zA-Z]{1,6}",
            sep in "[ ,.!\n]",
            tail in "[a-zA-Z ,.!]{0,20}",
        ) {
            if judge(&out, &gold, NONE) {
                let joined = format!("{}{}{}", out, sep, tail);
                prop_assert!(judge(&joined, &gold, NONE));
            }
        }

        #[test]
        fn agrees_with_boundary_oracle(out in "[a-cA-C .-]{0,24}", gold in "[a-c .]{1,5}") {
            prop_assert_eq!(judge(&out, &gold, NONE), boundary_oracle(&out, &gold));
        }
    }
}
