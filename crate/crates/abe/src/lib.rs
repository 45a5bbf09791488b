//! Ciphertext-policy attribute-based encryption with threshold access trees.
//!
//! Policies are written in a small boolean language (`AND`, `OR`,
//! parentheses, numeric comparisons) and compiled to threshold trees.
//! Numeric attributes are represented as one attribute per bit so that
//! comparisons like `clearance > 3` become ordinary tree policies.
//!
//! ```
//! use locauth_abe::*;
//! use rand::SeedableRng;
//!
//! let (pp, msk) = setup_from_seed(128, 7).unwrap();
//! let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(1);
//! let attrs = parse_attribute_set(&["firm:xyz", "clearance=4"], 8).unwrap();
//! let key = keygen(&msk, &pp, &attrs, &mut rng).unwrap();
//! let policy = parse_policy("firm:xyz AND clearance > 3").unwrap();
//! let ct = encrypt(&pp, &policy, b"token", &mut rng).unwrap();
//! assert_eq!(decrypt(&pp, &key, &ct).unwrap(), b"token");
//! ```

mod attribute;
mod error;
mod policy;
mod scheme;

pub use attribute::{parse_attribute_set, parse_attribute_spec, Attribute};
pub use error::{AbeError, PolicyError};
pub use policy::{
    compile_comparison, parse_policy, parse_policy_with_width, satisfies, AccessTree, Comparator, DEFAULT_NUMERIC_WIDTH,
};
pub use scheme::{
    can_decrypt, decrypt, encrypt, hash_attribute, keygen, lagrange_at_zero, setup, setup_from_seed, AbeCiphertext, Gt,
    MasterKey, PublicParams, UserSecretKey, ATTRIBUTE_DST, DEM_KEY_TAG, FORMAT_VERSION, MAX_PAYLOAD,
};
