/// Canonical form used for every output-equality check: `\r\n` and lone `\r`
/// become `\n`, trailing whitespace is removed from each line, and trailing
/// blank lines are dropped. No final newline.
pub fn normalize_output(raw: &str) -> String {
    let unified = raw.replace("\r\n", "\n").replace('\r', "\n");
    let mut lines: Vec<&str> = unified.split('\n').map(str::trim_end).collect();
    while lines.last().is_some_and(|l| l.is_empty()) {
        lines.pop();
    }
    lines.join("\n")
}

/// Canonical stdin text: normalized lines plus exactly one final newline.
pub fn canonical_input(raw: &str) -> String {
    let mut s = normalize_output(raw);
    if !s.is_empty() {
        s.push('\n');
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn examples() {
        assert_eq!(normalize_output("3 \n\n"), "3");
        assert_eq!(normalize_output("a\r\nb\r\n"), "a\nb");
        assert_eq!(normalize_output(""), "");
        assert_eq!(normalize_output(" x\t\n  \n"), " x");
        assert_eq!(canonical_input("1 2\r\n3"), "1 2\n3\n");
        assert_eq!(canonical_input("\n\n"), "");
    }

    proptest! {
        #[test]
        fn idempotent(s in "[a-c \t\r\n]{0,40}") {
            let once = normalize_output(&s);
            prop_assert_eq!(normalize_output(&once), once.clone());
            prop_assert!(!once.ends_with('\n'));
            prop_assert!(!once.contains('\r'));
        }

        #[test]
        fn canonical_input_is_stable(s in "[0-9 \r\n]{0,40}") {
            let c = canonical_input(&s);
            prop_assert_eq!(canonical_input(&c), c);
        }
    }
}
