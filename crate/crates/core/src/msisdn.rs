//! Cellphone numbers in normalized digit form.

use alloc::string::String;

/// Strips a leading `+` and the separators people type (spaces, dashes,
/// dots) and checks the remainder is 10 to 15 digits.
pub fn normalize(raw: &str) -> Option<String> {
    let raw = raw.trim();
    let raw = raw.strip_prefix('+').unwrap_or(raw);
    let mut out = String::with_capacity(raw.len());
    for c in raw.chars() {
        match c {
            '0'..='9' => out.push(c),
            ' ' | '-' | '.' => {}
            _ => return None,
        }
    }
    (10..=15).contains(&out.len()).then_some(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalizes() {
        assert_eq!(normalize("+27 82 000 0001").as_deref(), Some("27820000001"));
        assert_eq!(normalize("27820000001").as_deref(), Some("27820000001"));
        assert_eq!(normalize("abc"), None);
        assert_eq!(normalize("123"), None);
        assert_eq!(normalize("2782000000#"), None);
    }
}
