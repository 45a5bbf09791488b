//! Threshold access trees, the policy language that produces them, and the
//! bag-of-bits compiler for numeric comparisons.
//!
//! Grammar (AND binds tighter than OR, keywords are case-insensitive):
//!
//! ```text
//! expr   := term ('OR' term)*
//! term   := factor ('AND' factor)*
//! factor := attribute | name cmp integer | '(' expr ')'
//! cmp    := '<' | '<=' | '>' | '>=' | '=='
//! ```

use std::collections::BTreeSet;
use std::fmt;

use crate::attribute::Attribute;
use crate::error::{AbeError, PolicyError};

/// Default bit width of numeric attributes.
pub const DEFAULT_NUMERIC_WIDTH: u32 = 8;

/// A threshold-gate policy over attributes.
///
/// Children of a gate are indexed from 1 in order; those indices are the
/// evaluation points used when the secret is shared down the tree.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum AccessTree {
    Leaf(Attribute),
    Gate {
        threshold: usize,
        children: Vec<AccessTree>,
    },
}

impl AccessTree {
    pub fn leaf(attr: Attribute) -> Self {
        AccessTree::Leaf(attr)
    }

    pub fn gate(threshold: usize, children: Vec<AccessTree>) -> Result<Self, AbeError> {
        let n = children.len();
        if n == 0 || n > u8::MAX as usize || threshold == 0 || threshold > n {
            return Err(AbeError::InvalidGate { threshold, arity: n });
        }
        Ok(AccessTree::Gate { threshold, children })
    }

    /// n-of-n gate. A single child is returned unwrapped.
    pub fn and(mut children: Vec<AccessTree>) -> Result<Self, AbeError> {
        if children.len() == 1 {
            return Ok(children.pop().unwrap());
        }
        let n = children.len();
        AccessTree::gate(n, children)
    }

    /// 1-of-n gate. A single child is returned unwrapped.
    pub fn or(mut children: Vec<AccessTree>) -> Result<Self, AbeError> {
        if children.len() == 1 {
            return Ok(children.pop().unwrap());
        }
        AccessTree::gate(1, children)
    }

    /// Leaves in pre-order; ciphertext leaf components follow this order.
    pub fn leaves(&self) -> Vec<&Attribute> {
        let mut out = Vec::new();
        self.collect_leaves(&mut out);
        out
    }

    fn collect_leaves<'a>(&'a self, out: &mut Vec<&'a Attribute>) {
        match self {
            AccessTree::Leaf(a) => out.push(a),
            AccessTree::Gate { children, .. } => {
                for c in children {
                    c.collect_leaves(out);
                }
            }
        }
    }

    pub fn leaf_count(&self) -> usize {
        match self {
            AccessTree::Leaf(_) => 1,
            AccessTree::Gate { children, .. } => children.iter().map(|c| c.leaf_count()).sum(),
        }
    }

    /// Re-checks gate invariants, e.g. after decoding.
    pub fn validate(&self) -> Result<(), AbeError> {
        match self {
            AccessTree::Leaf(_) => Ok(()),
            AccessTree::Gate { threshold, children } => {
                let n = children.len();
                if n == 0 || n > u8::MAX as usize || *threshold == 0 || *threshold > n {
                    return Err(AbeError::InvalidGate {
                        threshold: *threshold,
                        arity: n,
                    });
                }
                children.iter().try_for_each(|c| c.validate())
            }
        }
    }

    /// Canonical prefix encoding: gate = `0x01 k n children...`,
    /// leaf = `0x02 len name`.
    pub fn encode(&self, out: &mut Vec<u8>) {
        match self {
            AccessTree::Leaf(a) => {
                out.push(0x02);
                out.push(a.as_str().len() as u8);
                out.extend_from_slice(a.as_str().as_bytes());
            }
            AccessTree::Gate { threshold, children } => {
                out.push(0x01);
                out.push(*threshold as u8);
                out.push(children.len() as u8);
                for c in children {
                    c.encode(out);
                }
            }
        }
    }

    /// Decodes one tree from the front of `input`, returning the remainder.
    pub fn decode(input: &[u8]) -> Result<(AccessTree, &[u8]), AbeError> {
        Self::decode_at(input, 0)
    }

    fn decode_at(input: &[u8], depth: usize) -> Result<(AccessTree, &[u8]), AbeError> {
        const MAX_DEPTH: usize = 64;
        if depth > MAX_DEPTH {
            return Err(AbeError::Malformed("access tree too deep"));
        }
        match input {
            [0x02, len, rest @ ..] => {
                let len = *len as usize;
                if rest.len() < len {
                    return Err(AbeError::Malformed("truncated leaf"));
                }
                let name =
                    std::str::from_utf8(&rest[..len]).map_err(|_| AbeError::Malformed("leaf name is not utf-8"))?;
                let attr = Attribute::new(name)?;
                if attr.as_str() != name {
                    return Err(AbeError::Malformed("leaf name is not canonical"));
                }
                Ok((AccessTree::Leaf(attr), &rest[len..]))
            }
            [0x01, k, n, rest @ ..] => {
                let mut rest = rest;
                let mut children = Vec::with_capacity(*n as usize);
                for _ in 0..*n {
                    let (child, r) = Self::decode_at(rest, depth + 1)?;
                    children.push(child);
                    rest = r;
                }
                let tree = AccessTree::gate(*k as usize, children)?;
                Ok((tree, rest))
            }
            _ => Err(AbeError::Malformed("bad access tree tag")),
        }
    }
}

impl fmt::Display for AccessTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AccessTree::Leaf(a) => write!(f, "{}", a),
            AccessTree::Gate { threshold, children } => {
                write!(f, "{}of{}(", threshold, children.len())?;
                for (i, c) in children.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{}", c)?;
                }
                f.write_str(")")
            }
        }
    }
}

/// True iff `attrs` satisfies the tree's root threshold, recursively.
pub fn satisfies(attrs: &BTreeSet<Attribute>, tree: &AccessTree) -> bool {
    match tree {
        AccessTree::Leaf(a) => attrs.contains(a),
        AccessTree::Gate { threshold, children } => {
            children.iter().filter(|c| satisfies(attrs, c)).count() >= *threshold
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Comparator {
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
}

impl Comparator {
    pub const ALL: [Comparator; 5] = [
        Comparator::Lt,
        Comparator::Le,
        Comparator::Gt,
        Comparator::Ge,
        Comparator::Eq,
    ];

    pub fn holds(self, value: u64, k: u64) -> bool {
        match self {
            Comparator::Lt => value < k,
            Comparator::Le => value <= k,
            Comparator::Gt => value > k,
            Comparator::Ge => value >= k,
            Comparator::Eq => value == k,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Comparator::Lt => "<",
            Comparator::Le => "<=",
            Comparator::Gt => ">",
            Comparator::Ge => ">=",
            Comparator::Eq => "==",
        }
    }
}

/// Intermediate boolean formula used while compiling comparisons.
#[derive(Clone, Debug)]
enum Formula {
    True,
    False,
    Bit(u32, bool),
    And(Vec<Formula>),
    Or(Vec<Formula>),
}

impl Formula {
    fn and(a: Formula, b: Formula) -> Formula {
        match (a, b) {
            (Formula::False, _) | (_, Formula::False) => Formula::False,
            (Formula::True, x) | (x, Formula::True) => x,
            (Formula::And(mut xs), Formula::And(ys)) => {
                xs.extend(ys);
                Formula::And(xs)
            }
            (Formula::And(mut xs), y) => {
                xs.push(y);
                Formula::And(xs)
            }
            (x, Formula::And(mut ys)) => {
                ys.insert(0, x);
                Formula::And(ys)
            }
            (x, y) => Formula::And(vec![x, y]),
        }
    }

    fn or(a: Formula, b: Formula) -> Formula {
        match (a, b) {
            (Formula::True, _) | (_, Formula::True) => Formula::True,
            (Formula::False, x) | (x, Formula::False) => x,
            (Formula::Or(mut xs), Formula::Or(ys)) => {
                xs.extend(ys);
                Formula::Or(xs)
            }
            (Formula::Or(mut xs), y) => {
                xs.push(y);
                Formula::Or(xs)
            }
            (x, Formula::Or(mut ys)) => {
                ys.insert(0, x);
                Formula::Or(ys)
            }
            (x, y) => Formula::Or(vec![x, y]),
        }
    }

    fn into_tree(self, name: &str) -> Result<AccessTree, AbeError> {
        match self {
            // Every compiled value carries exactly one of bit0=0 / bit0=1.
            Formula::True => AccessTree::or(vec![
                AccessTree::leaf(Attribute::bit(name, 0, false)?),
                AccessTree::leaf(Attribute::bit(name, 0, true)?),
            ]),
            Formula::False => AccessTree::and(vec![
                AccessTree::leaf(Attribute::bit(name, 0, false)?),
                AccessTree::leaf(Attribute::bit(name, 0, true)?),
            ]),
            Formula::Bit(i, set) => Ok(AccessTree::leaf(Attribute::bit(name, i, set)?)),
            Formula::And(xs) => AccessTree::and(xs.into_iter().map(|x| x.into_tree(name)).collect::<Result<_, _>>()?),
            Formula::Or(xs) => AccessTree::or(xs.into_iter().map(|x| x.into_tree(name)).collect::<Result<_, _>>()?),
        }
    }
}

/// `value > k` over bit positions `top..=0`, scanning from the most
/// significant bit.
fn greater_than(k: u64, top: u32) -> Formula {
    let mut acc = Formula::False;
    for i in 0..=top {
        acc = if (k >> i) & 1 == 1 {
            Formula::and(Formula::Bit(i, true), acc)
        } else {
            Formula::or(Formula::Bit(i, true), acc)
        };
    }
    acc
}

/// `value < k` over bit positions `top..=0`.
fn less_than(k: u64, top: u32) -> Formula {
    let mut acc = Formula::False;
    for i in 0..=top {
        acc = if (k >> i) & 1 == 1 {
            Formula::or(Formula::Bit(i, false), acc)
        } else {
            Formula::and(Formula::Bit(i, false), acc)
        };
    }
    acc
}

/// Compiles `name cmp k` into a subtree over the bit attributes
/// `name:bit{i}={0|1}` produced by [`Attribute::numeric`].
pub fn compile_comparison(name: &str, cmp: Comparator, k: u64, width: u32) -> Result<AccessTree, AbeError> {
    if width == 0 || width > 32 || k >= 1u64 << width {
        return Err(AbeError::NumericOutOfRange { value: k, width });
    }
    let name = Attribute::new(name)?;
    let name = name.as_str();
    let top = width - 1;
    let max = (1u64 << width) - 1;
    let formula = match cmp {
        Comparator::Gt => greater_than(k, top),
        Comparator::Ge if k == 0 => Formula::True,
        Comparator::Ge => greater_than(k - 1, top),
        Comparator::Lt => less_than(k, top),
        Comparator::Le if k == max => Formula::True,
        Comparator::Le => less_than(k + 1, top),
        Comparator::Eq => (0..width)
            .rev()
            .map(|i| Formula::Bit(i, (k >> i) & 1 == 1))
            .fold(Formula::True, Formula::and),
    };
    formula.into_tree(name)
}

#[derive(Clone, Debug, PartialEq)]
enum Token {
    Ident(String),
    Number(u64),
    Cmp(Comparator),
    And,
    Or,
    LParen,
    RParen,
}

fn is_ident_char(c: char) -> bool {
    c.is_alphanumeric() || "_-:.=/@#".contains(c)
}

fn tokenize(text: &str) -> Result<Vec<(usize, Token)>, PolicyError> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let (pos, c) = chars[i];
        let next = chars.get(i + 1).map(|&(_, c)| c);
        match c {
            c if c.is_whitespace() => i += 1,
            '(' => {
                tokens.push((pos, Token::LParen));
                i += 1;
            }
            ')' => {
                tokens.push((pos, Token::RParen));
                i += 1;
            }
            '<' | '>' => {
                let or_equal = next == Some('=');
                let cmp = match (c, or_equal) {
                    ('<', false) => Comparator::Lt,
                    ('<', true) => Comparator::Le,
                    ('>', false) => Comparator::Gt,
                    _ => Comparator::Ge,
                };
                tokens.push((pos, Token::Cmp(cmp)));
                i += if or_equal { 2 } else { 1 };
            }
            '=' if next == Some('=') => {
                tokens.push((pos, Token::Cmp(Comparator::Eq)));
                i += 2;
            }
            c if is_ident_char(c) => {
                let start = i;
                while i < chars.len() && is_ident_char(chars[i].1) {
                    // A `==` always starts a comparator.
                    if chars[i].1 == '=' && chars.get(i + 1).map(|&(_, c)| c) == Some('=') {
                        break;
                    }
                    i += 1;
                }
                let word: String = chars[start..i].iter().map(|&(_, c)| c).collect();
                let token = if word.eq_ignore_ascii_case("and") {
                    Token::And
                } else if word.eq_ignore_ascii_case("or") {
                    Token::Or
                } else if word.bytes().all(|b| b.is_ascii_digit()) {
                    Token::Number(word.parse().map_err(|_| PolicyError::Syntax {
                        position: pos,
                        message: "integer too large".into(),
                    })?)
                } else {
                    Token::Ident(word)
                };
                tokens.push((pos, token));
            }
            other => {
                return Err(PolicyError::Syntax {
                    position: pos,
                    message: format!("unexpected character {:?}", other),
                })
            }
        }
    }
    Ok(tokens)
}

struct Parser {
    tokens: Vec<(usize, Token)>,
    cursor: usize,
    end: usize,
    width: u32,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.cursor).map(|(_, t)| t)
    }

    fn position(&self) -> usize {
        self.tokens.get(self.cursor).map(|(p, _)| *p).unwrap_or(self.end)
    }

    fn error(&self, message: impl Into<String>) -> AbeError {
        AbeError::Policy(PolicyError::Syntax {
            position: self.position(),
            message: message.into(),
        })
    }

    fn expr(&mut self) -> Result<AccessTree, AbeError> {
        let mut terms = vec![self.term()?];
        while self.peek() == Some(&Token::Or) {
            self.cursor += 1;
            terms.push(self.term()?);
        }
        AccessTree::or(terms)
    }

    fn term(&mut self) -> Result<AccessTree, AbeError> {
        let mut factors = vec![self.factor()?];
        while self.peek() == Some(&Token::And) {
            self.cursor += 1;
            factors.push(self.factor()?);
        }
        AccessTree::and(factors)
    }

    fn factor(&mut self) -> Result<AccessTree, AbeError> {
        match self.peek().cloned() {
            Some(Token::LParen) => {
                self.cursor += 1;
                let inner = self.expr()?;
                if self.peek() != Some(&Token::RParen) {
                    return Err(self.error("expected ')'"));
                }
                self.cursor += 1;
                Ok(inner)
            }
            Some(Token::Ident(name)) => {
                let name_pos = self.position();
                self.cursor += 1;
                if let Some(Token::Cmp(cmp)) = self.peek().cloned() {
                    self.cursor += 1;
                    let value = match self.peek() {
                        Some(Token::Number(v)) => *v,
                        _ => return Err(self.error("expected integer after comparator")),
                    };
                    self.cursor += 1;
                    return compile_comparison(&name, cmp, value, self.width).map_err(|e| match e {
                        AbeError::NumericOutOfRange { value, width } => {
                            AbeError::Policy(PolicyError::ValueOutOfRange { value, width })
                        }
                        other => other,
                    });
                }
                let attr = Attribute::new(&name).map_err(|_| {
                    AbeError::Policy(PolicyError::Syntax {
                        position: name_pos,
                        message: format!("invalid attribute {:?}", name),
                    })
                })?;
                Ok(AccessTree::leaf(attr))
            }
            Some(_) => Err(self.error("expected attribute or '('")),
            None => Err(self.error("unexpected end of policy")),
        }
    }
}

/// Parses a policy string with the default numeric width.
pub fn parse_policy(text: &str) -> Result<AccessTree, AbeError> {
    parse_policy_with_width(text, DEFAULT_NUMERIC_WIDTH)
}

pub fn parse_policy_with_width(text: &str, width: u32) -> Result<AccessTree, AbeError> {
    let tokens = tokenize(text).map_err(AbeError::Policy)?;
    let mut parser = Parser {
        tokens,
        cursor: 0,
        end: text.len(),
        width,
    };
    let tree = parser.expr()?;
    if parser.cursor != parser.tokens.len() {
        return Err(parser.error("trailing input"));
    }
    Ok(tree)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn attrs(names: &[&str]) -> BTreeSet<Attribute> {
        names.iter().map(|n| Attribute::new(n).unwrap()).collect()
    }

    fn numeric(name: &str, v: u64) -> BTreeSet<Attribute> {
        Attribute::numeric(name, v, 8).unwrap().into_iter().collect()
    }

    #[test]
    fn single_attribute_is_a_leaf() {
        let tree = parse_policy("a").unwrap();
        assert_eq!(tree, AccessTree::leaf(Attribute::new("a").unwrap()));
    }

    #[test]
    fn and_binds_tighter_than_or() {
        let tree = parse_policy("a OR (b AND c)").unwrap();
        let expected = AccessTree::gate(
            1,
            vec![
                AccessTree::leaf(Attribute::new("a").unwrap()),
                AccessTree::gate(
                    2,
                    vec![
                        AccessTree::leaf(Attribute::new("b").unwrap()),
                        AccessTree::leaf(Attribute::new("c").unwrap()),
                    ],
                )
                .unwrap(),
            ],
        )
        .unwrap();
        assert_eq!(tree, expected);
        assert_eq!(parse_policy("a OR b AND c").unwrap(), expected);
    }

    #[test]
    fn office_policy_shape() {
        let tree = parse_policy("firm:xyz AND dept:financial AND clearance > 3").unwrap();
        match &tree {
            AccessTree::Gate { threshold, children } => {
                assert_eq!(*threshold, 3);
                assert_eq!(children.len(), 3);
                assert_eq!(
                    children[2],
                    compile_comparison("clearance", Comparator::Gt, 3, 8).unwrap()
                );
            }
            other => panic!("expected gate, got {}", other),
        }
    }

    #[test]
    fn clearance_examples() {
        let tree = compile_comparison("clearance", Comparator::Gt, 3, 8).unwrap();
        assert!(satisfies(&numeric("clearance", 4), &tree));
        assert!(!satisfies(&numeric("clearance", 3), &tree));
        assert!(!satisfies(&numeric("clearance", 2), &tree));
    }

    #[test]
    fn equality_is_a_full_bit_match() {
        let tree = compile_comparison("x", Comparator::Eq, 5, 8).unwrap();
        match &tree {
            AccessTree::Gate { threshold, children } => {
                assert_eq!((*threshold, children.len()), (8, 8));
                let leaves: BTreeSet<Attribute> = tree.leaves().into_iter().cloned().collect();
                assert_eq!(leaves, numeric("x", 5));
            }
            other => panic!("expected 8-of-8 gate, got {}", other),
        }
    }

    #[test]
    fn comparisons_with_and_without_spaces() {
        let a = parse_policy("x==5").unwrap();
        let b = parse_policy("x == 5").unwrap();
        assert_eq!(a, b);
        assert_eq!(parse_policy("x>=3").unwrap(), parse_policy("x >= 3").unwrap());
    }

    #[test]
    fn bit_attribute_names_parse_as_leaves() {
        let tree = parse_policy("clearance:bit3=0").unwrap();
        assert_eq!(tree, AccessTree::leaf(Attribute::new("clearance:bit3=0").unwrap()));
    }

    #[test]
    fn syntax_errors_carry_positions() {
        match parse_policy("a AND (b OR c") {
            Err(AbeError::Policy(PolicyError::Syntax { position, .. })) => assert_eq!(position, 13),
            other => panic!("unexpected {:?}", other),
        }
        match parse_policy("a b") {
            Err(AbeError::Policy(PolicyError::Syntax { position, .. })) => assert_eq!(position, 2),
            other => panic!("unexpected {:?}", other),
        }
        assert!(parse_policy("").is_err());
        assert!(parse_policy("AND a").is_err());
        assert!(parse_policy("a $ b").is_err());
        assert!(parse_policy("x > y").is_err());
    }

    #[test]
    fn out_of_range_comparison_is_rejected() {
        assert!(matches!(
            parse_policy("clearance > 256"),
            Err(AbeError::Policy(PolicyError::ValueOutOfRange { value: 256, width: 8 }))
        ));
        assert!(compile_comparison("x", Comparator::Lt, 256, 8).is_err());
    }

    #[test]
    fn empty_set_satisfies_nothing() {
        let tree = parse_policy("a OR b").unwrap();
        assert!(!satisfies(&BTreeSet::new(), &tree));
    }

    #[test]
    fn office_policy_satisfaction() {
        let tree = parse_policy("firm:xyz AND dept:financial AND clearance > 3").unwrap();
        let mut alice = attrs(&["firm:xyz", "dept:financial"]);
        alice.extend(numeric("clearance", 4));
        assert!(satisfies(&alice, &tree));
        assert!(!satisfies(&attrs(&["intern"]), &tree));
        let mut bob = attrs(&["intern"]);
        bob.extend(numeric("clearance", 2));
        assert!(!satisfies(&bob, &tree));
    }

    #[test]
    fn gate_invariants() {
        assert!(AccessTree::gate(0, vec![AccessTree::leaf(Attribute::new("a").unwrap())]).is_err());
        assert!(AccessTree::gate(2, vec![AccessTree::leaf(Attribute::new("a").unwrap())]).is_err());
        assert!(AccessTree::gate(1, vec![]).is_err());
    }

    #[test]
    fn encoding_layout() {
        let tree = parse_policy("a OR bc").unwrap();
        let mut out = Vec::new();
        tree.encode(&mut out);
        assert_eq!(out, vec![0x01, 1, 2, 0x02, 1, b'a', 0x02, 2, b'b', b'c']);
        let (decoded, rest) = AccessTree::decode(&out).unwrap();
        assert!(rest.is_empty());
        assert_eq!(decoded, tree);
    }

    #[test]
    fn constant_comparisons_are_representable() {
        let always = compile_comparison("x", Comparator::Ge, 0, 8).unwrap();
        let never = compile_comparison("x", Comparator::Gt, 255, 8).unwrap();
        for v in [0u64, 17, 255] {
            assert!(satisfies(&numeric("x", v), &always));
            assert!(!satisfies(&numeric("x", v), &never));
        }
    }
}
