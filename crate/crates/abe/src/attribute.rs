use std::collections::BTreeSet;
use std::fmt;

use crate::error::AbeError;

/// Characters allowed in an attribute name besides alphanumerics.
const PUNCTUATION: &[char] = &['_', '-', ':', '.', '=', '/', '@', '#'];

/// A canonical attribute name such as `firm:xyz` or `clearance:bit3=0`.
///
/// Canonical form is lowercase with no whitespace. `==` never appears inside a
/// name because the policy grammar reserves it as a comparator.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Attribute(String);

impl Attribute {
    pub fn new(name: &str) -> Result<Self, AbeError> {
        let canonical = name.trim().to_lowercase();
        if canonical.is_empty() {
            return Err(AbeError::InvalidAttribute(name.to_string()));
        }
        if canonical.len() > u8::MAX as usize || canonical.contains("==") {
            return Err(AbeError::InvalidAttribute(name.to_string()));
        }
        if !canonical
            .chars()
            .all(|c| c.is_alphanumeric() || PUNCTUATION.contains(&c))
        {
            return Err(AbeError::InvalidAttribute(name.to_string()));
        }
        Ok(Attribute(canonical))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// Leaf attribute for one bit position of a numeric attribute.
    pub fn bit(name: &str, position: u32, set: bool) -> Result<Self, AbeError> {
        Attribute::new(&format!("{}:bit{}={}", name, position, u8::from(set)))
    }

    /// Compiles `name = value` into one bit attribute per position, the
    /// representation comparison policies are evaluated against.
    pub fn numeric(name: &str, value: u64, width: u32) -> Result<Vec<Self>, AbeError> {
        if width == 0 || width > 32 || value >= 1u64 << width {
            return Err(AbeError::NumericOutOfRange { value, width });
        }
        (0..width)
            .map(|i| Attribute::bit(name, i, (value >> i) & 1 == 1))
            .collect()
    }
}

impl fmt::Display for Attribute {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::str::FromStr for Attribute {
    type Err = AbeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Attribute::new(s)
    }
}

/// Parses one user-facing attribute specification into canonical attributes.
///
/// `clearance=4` is a numeric assignment and expands to `width` bit
/// attributes; anything else (including explicit bit attributes such as
/// `clearance:bit3=0`) is a single plain attribute.
pub fn parse_attribute_spec(spec: &str, width: u32) -> Result<Vec<Attribute>, AbeError> {
    let spec = spec.trim();
    if let Some((name, value)) = spec.split_once('=') {
        let is_numeric = !value.is_empty() && value.bytes().all(|b| b.is_ascii_digit());
        if is_numeric && !is_bit_name(name) && !name.contains('=') {
            let value: u64 = value
                .parse()
                .map_err(|_| AbeError::InvalidAttribute(spec.to_string()))?;
            let name = Attribute::new(name)?;
            return Attribute::numeric(name.as_str(), value, width);
        }
    }
    Ok(vec![Attribute::new(spec)?])
}

fn is_bit_name(name: &str) -> bool {
    match name.rsplit_once(":bit") {
        Some((_, digits)) => !digits.is_empty() && digits.bytes().all(|b| b.is_ascii_digit()),
        None => false,
    }
}

/// Parses a list of attribute specifications into a canonical set.
pub fn parse_attribute_set<S: AsRef<str>>(specs: &[S], width: u32) -> Result<BTreeSet<Attribute>, AbeError> {
    let mut set = BTreeSet::new();
    for spec in specs {
        set.extend(parse_attribute_spec(spec.as_ref(), width)?);
    }
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn canonicalizes_case_and_trims() {
        let a = Attribute::new("  Firm:XYZ ").unwrap();
        assert_eq!(a.as_str(), "firm:xyz");
    }

    #[test]
    fn rejects_bad_names() {
        assert!(Attribute::new("").is_err());
        assert!(Attribute::new("   ").is_err());
        assert!(Attribute::new("two words").is_err());
        assert!(Attribute::new("a==b").is_err());
        assert!(Attribute::new("paren(").is_err());
    }

    #[test]
    fn numeric_expands_to_bits() {
        let bits = Attribute::numeric("clearance", 4, 8).unwrap();
        assert_eq!(bits.len(), 8);
        assert!(bits.contains(&Attribute::new("clearance:bit2=1").unwrap()));
        assert!(bits.contains(&Attribute::new("clearance:bit0=0").unwrap()));
        assert!(Attribute::numeric("clearance", 256, 8).is_err());
    }

    #[test]
    fn spec_parsing_distinguishes_numeric_from_bit_names() {
        assert_eq!(parse_attribute_spec("clearance=2", 8).unwrap().len(), 8);
        assert_eq!(parse_attribute_spec("clearance:bit3=0", 8).unwrap().len(), 1);
        assert_eq!(parse_attribute_spec("intern", 8).unwrap().len(), 1);
        assert!(parse_attribute_spec("clearance=999", 8).is_err());
    }

    proptest! {
        #[test]
        fn canonical_form_is_idempotent(name in "[A-Za-z0-9_:.@/-]{1,40}") {
            let once = Attribute::new(&name).unwrap();
            let twice = Attribute::new(once.as_str()).unwrap();
            prop_assert_eq!(once, twice);
        }
    }
}
