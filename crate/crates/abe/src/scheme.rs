//! Ciphertext-policy ABE over BLS12-381 with a KEM-DEM payload layer.
//!
//! Group placement for the asymmetric pairing `e: G1 x G2 -> GT`:
//!
//! | element                  | group |
//! |--------------------------|-------|
//! | `h = g1^beta`, `C = h^s` | G1    |
//! | `D = g2^((alpha+r)/beta)`| G2    |
//! | `D_j = g1^r * H(j)^r_j`  | G1    |
//! | `D'_j = g2^r_j`          | G2    |
//! | `C_y = g2^q_y(0)`        | G2    |
//! | `C'_y = H(att)^q_y(0)`   | G1    |
//! | `H(att)`                 | G1    |
//!
//! Decryption collapses every leaf term and `e(C, D)` into a single
//! multi-pairing, with the Lagrange weights of each path folded into the G1
//! arguments.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use aes_gcm::aead::{Aead, KeyInit, Payload};
use aes_gcm::{Aes256Gcm, Nonce};
use ark_bls12_381::{Bls12_381, Fr, G1Affine, G1Projective, G2Affine};
use ark_ec::hashing::curve_maps::wb::WBMap;
use ark_ec::hashing::map_to_curve_hasher::MapToCurveBasedHasher;
use ark_ec::hashing::HashToCurve;
use ark_ec::pairing::{Pairing, PairingOutput};
use ark_ec::{AffineRepr, CurveGroup};
use ark_ff::field_hashers::DefaultFieldHasher;
use ark_ff::{Field, One, PrimeField, UniformRand, Zero};
use ark_serialize::{CanonicalDeserialize, CanonicalSerialize, Compress, Validate};
use rand::{CryptoRng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

use crate::attribute::Attribute;
use crate::error::AbeError;
use crate::policy::{satisfies, AccessTree};

pub type Gt = PairingOutput<Bls12_381>;

/// Domain separation tag for hashing attributes into G1.
pub const ATTRIBUTE_DST: &[u8] = b"loc-auth/attr";
/// Suffix appended to the encapsulated GT element before hashing it to a DEM key.
pub const DEM_KEY_TAG: &[u8] = b"loc-auth/dem";
pub const MAX_PAYLOAD: usize = 1024;
pub const FORMAT_VERSION: u8 = 0x01;

pub const G1_BYTES: usize = 48;
pub const G2_BYTES: usize = 96;
pub const GT_BYTES: usize = 576;
pub const SCALAR_BYTES: usize = 32;
pub const NONCE_BYTES: usize = 12;

const MIN_SECURITY_BITS: u32 = 100;
const MAX_SECURITY_BITS: u32 = 128;

type AttributeHasher =
    MapToCurveBasedHasher<G1Projective, DefaultFieldHasher<Sha256, 128>, WBMap<ark_bls12_381::g1::Config>>;

fn attribute_hasher() -> AttributeHasher {
    AttributeHasher::new(ATTRIBUTE_DST).expect("WB map parameters for BLS12-381 G1 are valid")
}

/// Hashes an attribute into G1 with the standard hash-to-curve construction.
pub fn hash_attribute(attr: &Attribute) -> Result<G1Affine, AbeError> {
    attribute_hasher()
        .hash(attr.as_str().as_bytes())
        .map_err(|_| AbeError::HashToCurve)
}

#[derive(Clone, PartialEq, Eq)]
pub struct PublicParams {
    pub g1: G1Affine,
    pub g2: G2Affine,
    /// `g1^beta`
    pub h: G1Affine,
    /// `e(g1, g2)^alpha`
    pub pairing_constant: Gt,
}

#[derive(Clone, PartialEq, Eq)]
pub struct MasterKey {
    pub(crate) beta: Fr,
    pub(crate) g2_alpha: G2Affine,
}

impl fmt::Debug for MasterKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("MasterKey(..)")
    }
}

impl fmt::Debug for PublicParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PublicParams").finish_non_exhaustive()
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
pub struct KeyComponent {
    pub(crate) d: G1Affine,
    pub(crate) d_prime: G2Affine,
}

#[derive(Clone, PartialEq, Eq)]
pub struct UserSecretKey {
    pub(crate) d: G2Affine,
    pub(crate) components: BTreeMap<Attribute, KeyComponent>,
}

impl UserSecretKey {
    pub fn attributes(&self) -> BTreeSet<Attribute> {
        self.components.keys().cloned().collect()
    }

    pub fn holds(&self, attr: &Attribute) -> bool {
        self.components.contains_key(attr)
    }
}

impl fmt::Debug for UserSecretKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("UserSecretKey")
            .field("attributes", &self.components.keys().collect::<Vec<_>>())
            .finish_non_exhaustive()
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
pub struct LeafComponent {
    pub(crate) c: G2Affine,
    pub(crate) c_prime: G1Affine,
}

#[derive(Clone, PartialEq, Eq)]
pub struct AbeCiphertext {
    pub(crate) tree: AccessTree,
    pub(crate) c_tilde: Gt,
    pub(crate) c: G1Affine,
    pub(crate) leaves: Vec<LeafComponent>,
    pub(crate) nonce: [u8; NONCE_BYTES],
    pub(crate) dem: Vec<u8>,
}

impl AbeCiphertext {
    pub fn policy(&self) -> &AccessTree {
        &self.tree
    }
}

impl fmt::Debug for AbeCiphertext {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AbeCiphertext")
            .field("policy", &format_args!("{}", self.tree))
            .field("payload_len", &self.dem.len().saturating_sub(16))
            .finish_non_exhaustive()
    }
}

/// Generates public parameters and the master key.
pub fn setup<R: RngCore + CryptoRng>(security_bits: u32, rng: &mut R) -> Result<(PublicParams, MasterKey), AbeError> {
    if !(MIN_SECURITY_BITS..=MAX_SECURITY_BITS).contains(&security_bits) {
        return Err(AbeError::UnsupportedSecurityLevel(security_bits));
    }
    let alpha = nonzero_scalar(rng);
    let beta = nonzero_scalar(rng);
    let g1 = G1Affine::generator();
    let g2 = G2Affine::generator();
    let params = PublicParams {
        g1,
        g2,
        h: (g1 * beta).into_affine(),
        pairing_constant: Bls12_381::pairing(g1, g2) * alpha,
    };
    let msk = MasterKey {
        beta,
        g2_alpha: (g2 * alpha).into_affine(),
    };
    Ok((params, msk))
}

/// Deterministic setup from a seed; reproducible fixtures only.
pub fn setup_from_seed(security_bits: u32, seed: u64) -> Result<(PublicParams, MasterKey), AbeError> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    setup(security_bits, &mut rng)
}

fn nonzero_scalar<R: RngCore + CryptoRng>(rng: &mut R) -> Fr {
    loop {
        let x = Fr::rand(rng);
        if !x.is_zero() {
            return x;
        }
    }
}

/// Issues a key for exactly the attributes in `attrs`.
pub fn keygen<R: RngCore + CryptoRng>(
    msk: &MasterKey,
    params: &PublicParams,
    attrs: &BTreeSet<Attribute>,
    rng: &mut R,
) -> Result<UserSecretKey, AbeError> {
    if attrs.is_empty() {
        return Err(AbeError::EmptyAttributeSet);
    }
    let r = Fr::rand(rng);
    let beta_inv = msk.beta.inverse().ok_or(AbeError::Malformed("zero beta"))?;
    let d = ((msk.g2_alpha.into_group() + params.g2 * r) * beta_inv).into_affine();
    let g1_r = params.g1 * r;
    let hasher = attribute_hasher();
    let mut components = BTreeMap::new();
    for attr in attrs {
        let r_j = Fr::rand(rng);
        let h = hasher
            .hash(attr.as_str().as_bytes())
            .map_err(|_| AbeError::HashToCurve)?;
        components.insert(
            attr.clone(),
            KeyComponent {
                d: (g1_r + h * r_j).into_affine(),
                d_prime: (params.g2 * r_j).into_affine(),
            },
        );
    }
    Ok(UserSecretKey { d, components })
}

/// Shares `secret` down the tree, pushing one share per leaf in pre-order.
fn share_secret<R: RngCore + CryptoRng>(tree: &AccessTree, secret: Fr, rng: &mut R, out: &mut Vec<Fr>) {
    match tree {
        AccessTree::Leaf(_) => out.push(secret),
        AccessTree::Gate { threshold, children } => {
            let mut coefficients = Vec::with_capacity(*threshold);
            coefficients.push(secret);
            coefficients.extend((1..*threshold).map(|_| Fr::rand(rng)));
            for (i, child) in children.iter().enumerate() {
                let x = Fr::from((i + 1) as u64);
                // Horner evaluation of q(x).
                let share = coefficients.iter().rev().fold(Fr::zero(), |acc, c| acc * x + c);
                share_secret(child, share, rng, out);
            }
        }
    }
}

/// Lagrange basis polynomial for `index` over `indices`, evaluated at zero.
pub fn lagrange_at_zero(index: u64, indices: &[u64]) -> Fr {
    let i = Fr::from(index);
    let mut numerator = Fr::one();
    let mut denominator = Fr::one();
    for &j in indices {
        if j == index {
            continue;
        }
        let j = Fr::from(j);
        numerator *= -j;
        denominator *= i - j;
    }
    numerator * denominator.inverse().expect("indices are distinct")
}

/// Which leaves take part in decryption and with what combined Lagrange weight.
///
/// When more than `k` children of a gate are satisfiable, the `k` smallest
/// indices are used.
fn decryption_plan(
    tree: &AccessTree,
    attrs: &BTreeMap<Attribute, KeyComponent>,
    next_leaf: &mut usize,
) -> Option<Vec<(usize, Fr)>> {
    match tree {
        AccessTree::Leaf(a) => {
            let index = *next_leaf;
            *next_leaf += 1;
            attrs.contains_key(a).then(|| vec![(index, Fr::one())])
        }
        AccessTree::Gate { threshold, children } => {
            let plans: Vec<Option<Vec<(usize, Fr)>>> =
                children.iter().map(|c| decryption_plan(c, attrs, next_leaf)).collect();
            let chosen: Vec<(u64, Vec<(usize, Fr)>)> = plans
                .into_iter()
                .enumerate()
                .filter_map(|(i, p)| p.map(|p| ((i + 1) as u64, p)))
                .take(*threshold)
                .collect();
            if chosen.len() < *threshold {
                return None;
            }
            let indices: Vec<u64> = chosen.iter().map(|(i, _)| *i).collect();
            let mut out = Vec::new();
            for (index, plan) in chosen {
                let weight = lagrange_at_zero(index, &indices);
                out.extend(plan.into_iter().map(|(leaf, w)| (leaf, w * weight)));
            }
            Some(out)
        }
    }
}

fn dem_key(element: &Gt) -> [u8; 32] {
    let mut bytes = Vec::with_capacity(GT_BYTES);
    element
        .serialize_compressed(&mut bytes)
        .expect("serializing into a Vec cannot fail");
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    hasher.update(DEM_KEY_TAG);
    hasher.finalize().into()
}

/// Hybrid encryption of `payload` under `tree`. Randomized per call.
pub fn encrypt<R: RngCore + CryptoRng>(
    params: &PublicParams,
    tree: &AccessTree,
    payload: &[u8],
    rng: &mut R,
) -> Result<AbeCiphertext, AbeError> {
    if payload.len() > MAX_PAYLOAD {
        return Err(AbeError::PayloadTooLarge(payload.len()));
    }
    tree.validate()?;
    let s = Fr::rand(rng);
    let mut shares = Vec::with_capacity(tree.leaf_count());
    share_secret(tree, s, rng, &mut shares);

    let hasher = attribute_hasher();
    let mut leaves = Vec::with_capacity(shares.len());
    for (attr, share) in tree.leaves().into_iter().zip(&shares) {
        let h = hasher
            .hash(attr.as_str().as_bytes())
            .map_err(|_| AbeError::HashToCurve)?;
        leaves.push(LeafComponent {
            c: (params.g2 * share).into_affine(),
            c_prime: (h * share).into_affine(),
        });
    }

    // Random GT element whose hash keys the DEM; blinded by e(g1,g2)^(alpha s).
    let encapsulated = params.pairing_constant * Fr::rand(rng);
    let c_tilde = encapsulated + params.pairing_constant * s;
    let c = (params.h * s).into_affine();

    let mut nonce = [0u8; NONCE_BYTES];
    rng.fill_bytes(&mut nonce);
    let mut ct = AbeCiphertext {
        tree: tree.clone(),
        c_tilde,
        c,
        leaves,
        nonce,
        dem: Vec::new(),
    };
    let header = ct.header_bytes();
    let key = dem_key(&encapsulated);
    let cipher = Aes256Gcm::new_from_slice(&key).expect("32-byte key");
    ct.dem = cipher
        .encrypt(
            Nonce::from_slice(&nonce),
            Payload {
                msg: payload,
                aad: &header,
            },
        )
        .expect("AES-GCM encryption of a bounded payload cannot fail");
    Ok(ct)
}

/// Recovers the payload if the key's attributes satisfy the ciphertext policy.
pub fn decrypt(_params: &PublicParams, key: &UserSecretKey, ct: &AbeCiphertext) -> Result<Vec<u8>, AbeError> {
    if ct.leaves.len() != ct.tree.leaf_count() {
        return Err(AbeError::Malformed("leaf components do not match policy"));
    }
    let mut next_leaf = 0;
    let plan = decryption_plan(&ct.tree, &key.components, &mut next_leaf).ok_or(AbeError::PolicyNotSatisfied)?;

    let leaf_attrs = ct.tree.leaves();
    let mut g1_args: Vec<G1Affine> = Vec::with_capacity(2 * plan.len() + 1);
    let mut g2_args: Vec<G2Affine> = Vec::with_capacity(2 * plan.len() + 1);
    g1_args.push(ct.c);
    g2_args.push(key.d);
    let mut weighted_d = Vec::with_capacity(plan.len());
    let mut weighted_c = Vec::with_capacity(plan.len());
    for (leaf, weight) in &plan {
        let component = &key.components[leaf_attrs[*leaf]];
        let leaf_ct = &ct.leaves[*leaf];
        // e(D_j, C_y)^-w * e(C'_y, D'_j)^w
        weighted_d.push(component.d * (-*weight));
        weighted_c.push(leaf_ct.c_prime * *weight);
        g2_args.push(leaf_ct.c);
        g2_args.push(component.d_prime);
    }
    let weighted_d = G1Projective::normalize_batch(&weighted_d);
    let weighted_c = G1Projective::normalize_batch(&weighted_c);
    for (d, c) in weighted_d.into_iter().zip(weighted_c) {
        g1_args.push(d);
        g1_args.push(c);
    }
    // e(g1,g2)^(alpha s)
    let blinding = Bls12_381::multi_pairing(g1_args, g2_args);
    let encapsulated = ct.c_tilde - blinding;

    let key = dem_key(&encapsulated);
    let header = ct.header_bytes();
    let cipher = Aes256Gcm::new_from_slice(&key).expect("32-byte key");
    cipher
        .decrypt(
            Nonce::from_slice(&ct.nonce),
            Payload {
                msg: &ct.dem,
                aad: &header,
            },
        )
        .map_err(|_| AbeError::IntegrityFailure)
}

/// Cheap pre-check used by callers that only need to know whether a key
/// could open a ciphertext.
pub fn can_decrypt(key: &UserSecretKey, ct: &AbeCiphertext) -> bool {
    satisfies(&key.attributes(), &ct.tree)
}

fn write_point<P: CanonicalSerialize>(p: &P, out: &mut Vec<u8>) {
    p.serialize_compressed(out).expect("serializing into a Vec cannot fail");
}

struct Reader<'a> {
    input: &'a [u8],
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], AbeError> {
        if self.input.len() < n {
            return Err(AbeError::Malformed("truncated input"));
        }
        let (head, tail) = self.input.split_at(n);
        self.input = tail;
        Ok(head)
    }

    fn byte(&mut self) -> Result<u8, AbeError> {
        Ok(self.take(1)?[0])
    }

    fn version(&mut self) -> Result<(), AbeError> {
        if self.byte()? != FORMAT_VERSION {
            return Err(AbeError::Malformed("unknown version"));
        }
        Ok(())
    }

    fn point<P: CanonicalDeserialize>(&mut self, n: usize) -> Result<P, AbeError> {
        P::deserialize_compressed(self.take(n)?).map_err(|_| AbeError::Malformed("invalid group element"))
    }

    fn finish(&self) -> Result<(), AbeError> {
        if self.input.is_empty() {
            Ok(())
        } else {
            Err(AbeError::Malformed("trailing bytes"))
        }
    }
}

impl PublicParams {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = vec![FORMAT_VERSION];
        write_point(&self.g1, &mut out);
        write_point(&self.g2, &mut out);
        write_point(&self.h, &mut out);
        write_point(&self.pairing_constant, &mut out);
        out
    }

    /// Decodes and validates group membership of every element.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, AbeError> {
        let mut r = Reader { input: bytes };
        r.version()?;
        let params = PublicParams {
            g1: r.point(G1_BYTES)?,
            g2: r.point(G2_BYTES)?,
            h: r.point(G1_BYTES)?,
            pairing_constant: r.point(GT_BYTES)?,
        };
        r.finish()?;
        params.validate()?;
        Ok(params)
    }

    /// Group membership and non-identity of all elements.
    pub fn validate(&self) -> Result<(), AbeError> {
        let on_curve = self.g1.is_on_curve()
            && self.g1.is_in_correct_subgroup_assuming_on_curve()
            && self.h.is_on_curve()
            && self.h.is_in_correct_subgroup_assuming_on_curve()
            && self.g2.is_on_curve()
            && self.g2.is_in_correct_subgroup_assuming_on_curve();
        let nonzero = !self.g1.is_zero() && !self.g2.is_zero() && !self.h.is_zero() && !self.pairing_constant.is_zero();
        let gt_order = self.pairing_constant.0.pow(<Fr as PrimeField>::MODULUS).is_one();
        if on_curve && nonzero && gt_order {
            Ok(())
        } else {
            Err(AbeError::Malformed("public parameters fail group validation"))
        }
    }
}

impl MasterKey {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = vec![FORMAT_VERSION];
        write_point(&self.beta, &mut out);
        write_point(&self.g2_alpha, &mut out);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, AbeError> {
        let mut r = Reader { input: bytes };
        r.version()?;
        let beta: Fr = r.point(SCALAR_BYTES)?;
        let g2_alpha: G2Affine = r.point(G2_BYTES)?;
        r.finish()?;
        if beta.is_zero() || g2_alpha.is_zero() {
            return Err(AbeError::Malformed("degenerate master key"));
        }
        Ok(MasterKey { beta, g2_alpha })
    }

    /// Whether this master key produced `params`: `e(h, g2^alpha) = e(g1,g2)^(alpha beta)`.
    pub fn matches(&self, params: &PublicParams) -> bool {
        Bls12_381::pairing(params.h, self.g2_alpha) == params.pairing_constant * self.beta
            && (params.g1 * self.beta).into_affine() == params.h
    }
}

impl UserSecretKey {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = vec![FORMAT_VERSION];
        write_point(&self.d, &mut out);
        out.extend_from_slice(&(self.components.len() as u16).to_be_bytes());
        for (attr, component) in &self.components {
            out.push(attr.as_str().len() as u8);
            out.extend_from_slice(attr.as_str().as_bytes());
            write_point(&component.d, &mut out);
            write_point(&component.d_prime, &mut out);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, AbeError> {
        let mut r = Reader { input: bytes };
        r.version()?;
        let d = r.point(G2_BYTES)?;
        let count = u16::from_be_bytes(r.take(2)?.try_into().unwrap());
        let mut components = BTreeMap::new();
        for _ in 0..count {
            let len = r.byte()? as usize;
            let name = std::str::from_utf8(r.take(len)?).map_err(|_| AbeError::Malformed("attribute is not utf-8"))?;
            let attr = Attribute::new(name)?;
            if attr.as_str() != name {
                return Err(AbeError::Malformed("attribute is not canonical"));
            }
            let component = KeyComponent {
                d: r.point(G1_BYTES)?,
                d_prime: r.point(G2_BYTES)?,
            };
            if components.insert(attr, component).is_some() {
                return Err(AbeError::Malformed("duplicate attribute"));
            }
        }
        r.finish()?;
        if components.is_empty() {
            return Err(AbeError::EmptyAttributeSet);
        }
        Ok(UserSecretKey { d, components })
    }
}

impl AbeCiphertext {
    /// `version | tree | C~ | C | (C_y, C'_y)...`; also the DEM associated data.
    fn header_bytes(&self) -> Vec<u8> {
        let mut out = vec![FORMAT_VERSION];
        self.tree.encode(&mut out);
        write_point(&self.c_tilde, &mut out);
        write_point(&self.c, &mut out);
        for leaf in &self.leaves {
            write_point(&leaf.c, &mut out);
            write_point(&leaf.c_prime, &mut out);
        }
        out
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = self.header_bytes();
        out.extend_from_slice(&self.nonce);
        out.extend_from_slice(&self.dem);
        out
    }

    /// Decodes a ciphertext. Curve points are checked for subgroup
    /// membership; `C~` is left unchecked since a bad value only yields a
    /// wrong DEM key and fails authentication.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, AbeError> {
        let mut r = Reader { input: bytes };
        r.version()?;
        let (tree, rest) = AccessTree::decode(r.input)?;
        r.input = rest;
        let c_tilde = Gt::deserialize_with_mode(r.take(GT_BYTES)?, Compress::Yes, Validate::No)
            .map_err(|_| AbeError::Malformed("invalid GT element"))?;
        let c = r.point(G1_BYTES)?;
        let mut leaves = Vec::with_capacity(tree.leaf_count());
        for _ in 0..tree.leaf_count() {
            leaves.push(LeafComponent {
                c: r.point(G2_BYTES)?,
                c_prime: r.point(G1_BYTES)?,
            });
        }
        let nonce: [u8; NONCE_BYTES] = r.take(NONCE_BYTES)?.try_into().unwrap();
        if r.input.len() < 16 {
            return Err(AbeError::Malformed("DEM ciphertext shorter than its tag"));
        }
        Ok(AbeCiphertext {
            tree,
            c_tilde,
            c,
            leaves,
            nonce,
            dem: r.input.to_vec(),
        })
    }
}

#[allow(dead_code)]
fn _assert_send_sync() {
    fn is<T: Send + Sync>() {}
    is::<PublicParams>();
    is::<UserSecretKey>();
    is::<AbeCiphertext>();
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::parse_policy;

    fn attrs(names: &[&str]) -> BTreeSet<Attribute> {
        names.iter().map(|n| Attribute::new(n).unwrap()).collect()
    }

    #[test]
    fn lagrange_weights_for_two_points() {
        assert_eq!(lagrange_at_zero(1, &[1, 2]), Fr::from(2u64));
        assert_eq!(lagrange_at_zero(2, &[1, 2]), -Fr::one());
    }

    #[test]
    fn lagrange_reconstructs_a_quadratic() {
        // q(x) = 7 + 3x + 5x^2 sampled at 1, 3, 4
        let q = |x: u64| Fr::from(7 + 3 * x + 5 * x * x);
        let set = [1u64, 3, 4];
        let at_zero: Fr = set.iter().map(|&i| q(i) * lagrange_at_zero(i, &set)).sum();
        assert_eq!(at_zero, Fr::from(7u64));
    }

    #[test]
    fn security_level_bounds() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        assert!(matches!(
            setup(80, &mut rng),
            Err(AbeError::UnsupportedSecurityLevel(80))
        ));
        assert!(matches!(
            setup(256, &mut rng),
            Err(AbeError::UnsupportedSecurityLevel(256))
        ));
        assert!(setup(100, &mut rng).is_ok());
    }

    #[test]
    fn single_leaf_round_trip() {
        let (pp, msk) = setup_from_seed(128, 11).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(12);
        let key = keygen(&msk, &pp, &attrs(&["a"]), &mut rng).unwrap();
        let ct = encrypt(&pp, &parse_policy("a").unwrap(), b"hello", &mut rng).unwrap();
        assert_eq!(decrypt(&pp, &key, &ct).unwrap(), b"hello");
    }

    #[test]
    fn threshold_gate_uses_smallest_indices() {
        let (pp, msk) = setup_from_seed(128, 1).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let tree = AccessTree::gate(
            2,
            ["a", "b", "c"]
                .iter()
                .map(|n| AccessTree::leaf(Attribute::new(n).unwrap()))
                .collect(),
        )
        .unwrap();
        let key = keygen(&msk, &pp, &attrs(&["a", "b", "c"]), &mut rng).unwrap();
        let mut next = 0;
        let plan = decryption_plan(&tree, &key.components, &mut next).unwrap();
        assert_eq!(plan.iter().map(|(i, _)| *i).collect::<Vec<_>>(), vec![0, 1]);
        let ct = encrypt(&pp, &tree, b"2-of-3", &mut rng).unwrap();
        assert_eq!(decrypt(&pp, &key, &ct).unwrap(), b"2-of-3");
        let partial = keygen(&msk, &pp, &attrs(&["c", "b"]), &mut rng).unwrap();
        assert_eq!(decrypt(&pp, &partial, &ct).unwrap(), b"2-of-3");
        let single = keygen(&msk, &pp, &attrs(&["c"]), &mut rng).unwrap();
        assert_eq!(decrypt(&pp, &single, &ct), Err(AbeError::PolicyNotSatisfied));
    }

    #[test]
    fn mixed_key_components_do_not_collude() {
        let (pp, msk) = setup_from_seed(128, 5).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(6);
        let key_a = keygen(&msk, &pp, &attrs(&["a"]), &mut rng).unwrap();
        let key_b = keygen(&msk, &pp, &attrs(&["b"]), &mut rng).unwrap();
        let ct = encrypt(&pp, &parse_policy("a AND b").unwrap(), b"secret", &mut rng).unwrap();
        assert_eq!(decrypt(&pp, &key_a, &ct), Err(AbeError::PolicyNotSatisfied));
        assert_eq!(decrypt(&pp, &key_b, &ct), Err(AbeError::PolicyNotSatisfied));

        let mut mixed = key_a.clone();
        mixed.components.extend(key_b.components.clone());
        assert_eq!(decrypt(&pp, &mixed, &ct), Err(AbeError::IntegrityFailure));
        let mut mixed = key_b.clone();
        mixed.components.extend(key_a.components.clone());
        assert_eq!(decrypt(&pp, &mixed, &ct), Err(AbeError::IntegrityFailure));
    }

    #[test]
    fn tampered_dem_fails_integrity() {
        let (pp, msk) = setup_from_seed(128, 8).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        let key = keygen(&msk, &pp, &attrs(&["a"]), &mut rng).unwrap();
        let mut ct = encrypt(&pp, &parse_policy("a").unwrap(), b"payload", &mut rng).unwrap();
        ct.dem[0] ^= 1;
        assert_eq!(decrypt(&pp, &key, &ct), Err(AbeError::IntegrityFailure));
    }

    #[test]
    fn payload_limit() {
        let (pp, _) = setup_from_seed(128, 8).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        let tree = parse_policy("a").unwrap();
        assert!(encrypt(&pp, &tree, &[0u8; MAX_PAYLOAD], &mut rng).is_ok());
        assert_eq!(
            encrypt(&pp, &tree, &[0u8; MAX_PAYLOAD + 1], &mut rng).unwrap_err(),
            AbeError::PayloadTooLarge(MAX_PAYLOAD + 1)
        );
    }

    #[test]
    fn empty_attribute_set_is_rejected() {
        let (pp, msk) = setup_from_seed(128, 8).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        assert_eq!(
            keygen(&msk, &pp, &BTreeSet::new(), &mut rng).unwrap_err(),
            AbeError::EmptyAttributeSet
        );
    }
}
