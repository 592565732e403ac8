//! Prime-order group arithmetic and the message encoding that lets a combined
//! slot value be classified as idle, a single message, or a collision.
//!
//! The group is the quadratic-residue subgroup of `Z_p^*` for a safe prime
//! `p = 2q + 1`. Because `p ≡ 3 (mod 4)`, square roots are a single
//! exponentiation by `(p + 1) / 4`, which makes decoding deterministic.
//!
//! A payload `v` of at most `L` bits is mapped to `u = v ‖ checksum(v)` and
//! then to the group element `u² mod p`. Decoding takes the smaller of the two
//! square roots and accepts it only if it is below `2^(L+c)` and carries a
//! valid checksum. A product of two or more encoded messages decodes to a
//! valid message only by accident, with probability about `2^-c`.

use std::fmt;

use num_bigint::BigUint;
use num_traits::{One, Zero};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::prime::{find_safe_prime, is_probable_prime};

pub const DEFAULT_CHECKSUM_BITS: u32 = 32;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GroupError {
    #[error("parameter out of range: {0}")]
    ParameterRange(String),
    #[error("invalid group parameters: {0}")]
    InvalidParams(String),
    #[error("payload has {bits} bits but at most {max} are allowed")]
    PayloadTooLong { bits: u64, max: u32 },
    #[error("payload encodes to a degenerate integer below 2")]
    DegeneratePayload,
    #[error("value is not an element of the group")]
    NotInGroup,
    #[error("malformed hex: {0}")]
    Hex(String),
}

/// An element of the order-`q` subgroup, stored as its residue mod `p`.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GroupElement(BigUint);

impl GroupElement {
    pub fn as_biguint(&self) -> &BigUint {
        &self.0
    }

    pub fn is_identity(&self) -> bool {
        self.0.is_one()
    }
}

impl fmt::Debug for GroupElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "GroupElement({:x})", self.0)
    }
}

/// An exponent, always reduced mod `q`.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Scalar(BigUint);

impl Scalar {
    pub fn as_biguint(&self) -> &BigUint {
        &self.0
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }
}

impl fmt::Debug for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Scalar({:x})", self.0)
    }
}

/// Result of classifying a combined slot value.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SlotOutcome<P = Vec<u8>> {
    Idle,
    Message(P),
    Collision,
}

impl<P> SlotOutcome<P> {
    pub fn map<Q>(self, f: impl FnOnce(P) -> Q) -> SlotOutcome<Q> {
        match self {
            SlotOutcome::Idle => SlotOutcome::Idle,
            SlotOutcome::Message(p) => SlotOutcome::Message(f(p)),
            SlotOutcome::Collision => SlotOutcome::Collision,
        }
    }

    pub fn is_collision(&self) -> bool {
        matches!(self, SlotOutcome::Collision)
    }

    pub fn tag(&self) -> &'static str {
        match self {
            SlotOutcome::Idle => "idle",
            SlotOutcome::Message(_) => "message",
            SlotOutcome::Collision => "collision",
        }
    }
}

/// A successfully decoded message: the payload and the integer `u` whose
/// square is the group element.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Decoded {
    pub payload: Vec<u8>,
    pub code: BigUint,
}

#[derive(Clone, PartialEq, Eq)]
pub struct GroupParams {
    p: BigUint,
    q: BigUint,
    g: GroupElement,
    payload_bits: u32,
    checksum_bits: u32,
    sqrt_exp: BigUint,
    element_len: usize,
}

impl fmt::Debug for GroupParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GroupParams")
            .field("p", &format_args!("{:x}", self.p))
            .field("q", &format_args!("{:x}", self.q))
            .field("g", &format_args!("{:x}", self.g.0))
            .field("payload_bits", &self.payload_bits)
            .field("checksum_bits", &self.checksum_bits)
            .finish()
    }
}

/// Serialized form of [`GroupParams`], field order `(p, q, g, L, c)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamsRecord {
    pub p: String,
    pub q: String,
    pub g: String,
    pub payload_bits: u32,
    pub checksum_bits: u32,
}

fn hex_biguint(s: &str) -> Result<BigUint, GroupError> {
    if s.is_empty() {
        return Err(GroupError::Hex("empty string".into()));
    }
    let bytes = hex::decode(s).map_err(|e| GroupError::Hex(e.to_string()))?;
    Ok(BigUint::from_bytes_be(&bytes))
}

fn fixed_width(v: &BigUint, len: usize) -> Vec<u8> {
    let raw = v.to_bytes_be();
    let raw: &[u8] = if v.is_zero() { &[] } else { &raw };
    let mut out = vec![0u8; len.saturating_sub(raw.len())];
    out.extend_from_slice(raw);
    out
}

impl GroupParams {
    /// Validate explicit parameters.
    pub fn new(
        p: BigUint,
        q: BigUint,
        g: BigUint,
        payload_bits: u32,
        checksum_bits: u32,
    ) -> Result<Self, GroupError> {
        if p != &q * 2u32 + 1u32 {
            return Err(GroupError::InvalidParams("p != 2q + 1".into()));
        }
        if q < BigUint::from(5u32) || !is_probable_prime(&q) || !is_probable_prime(&p) {
            return Err(GroupError::InvalidParams("p and q must both be prime, q >= 5".into()));
        }
        if g.is_zero() || g.is_one() || g >= p || !g.modpow(&q, &p).is_one() {
            return Err(GroupError::InvalidParams("g must have order q".into()));
        }
        if payload_bits == 0 {
            return Err(GroupError::ParameterRange("payload_bits must be positive".into()));
        }
        if checksum_bits > 256 {
            return Err(GroupError::ParameterRange("checksum_bits must be at most 256".into()));
        }
        let budget = q.bits() as i64 - 2;
        if payload_bits as i64 + checksum_bits as i64 > budget {
            return Err(GroupError::ParameterRange(format!(
                "payload_bits + checksum_bits = {} exceeds bits(q) - 2 = {budget}",
                payload_bits + checksum_bits
            )));
        }
        let sqrt_exp = (&p + 1u32) >> 2;
        let element_len = p.bits().div_ceil(8) as usize;
        Ok(GroupParams {
            p,
            q,
            g: GroupElement(g),
            payload_bits,
            checksum_bits,
            sqrt_exp,
            element_len,
        })
    }

    /// The 5-bit toy group `p = 23, q = 11, g = 4` with two payload bits and
    /// no checksum. Small enough to check by hand.
    pub fn toy() -> Self {
        GroupParams::new(23u32.into(), 11u32.into(), 4u32.into(), 2, 0)
            .expect("toy parameters are valid")
    }

    pub fn modulus(&self) -> &BigUint {
        &self.p
    }

    pub fn order(&self) -> &BigUint {
        &self.q
    }

    pub fn generator(&self) -> &GroupElement {
        &self.g
    }

    pub fn payload_bits(&self) -> u32 {
        self.payload_bits
    }

    pub fn checksum_bits(&self) -> u32 {
        self.checksum_bits
    }

    /// True for every safe prime above 7; square roots rely on it.
    pub fn modulus_is_3_mod_4(&self) -> bool {
        (&self.p % 4u32) == BigUint::from(3u32)
    }

    /// Width in bytes of decoded payloads.
    pub fn payload_len(&self) -> usize {
        self.payload_bits.div_ceil(8) as usize
    }

    /// Width in bytes of serialized elements and scalars.
    pub fn element_len(&self) -> usize {
        self.element_len
    }

    pub fn to_record(&self) -> ParamsRecord {
        ParamsRecord {
            p: hex::encode(fixed_width(&self.p, self.element_len)),
            q: hex::encode(fixed_width(&self.q, self.element_len)),
            g: hex::encode(fixed_width(&self.g.0, self.element_len)),
            payload_bits: self.payload_bits,
            checksum_bits: self.checksum_bits,
        }
    }

    pub fn from_record(rec: &ParamsRecord) -> Result<Self, GroupError> {
        GroupParams::new(
            hex_biguint(&rec.p)?,
            hex_biguint(&rec.q)?,
            hex_biguint(&rec.g)?,
            rec.payload_bits,
            rec.checksum_bits,
        )
    }

    // ----- elements -----

    pub fn identity(&self) -> GroupElement {
        GroupElement(BigUint::one())
    }

    /// Accept `v` only if it lies in the order-`q` subgroup.
    pub fn element(&self, v: BigUint) -> Result<GroupElement, GroupError> {
        if v.is_zero() || v >= self.p || !v.modpow(&self.q, &self.p).is_one() {
            return Err(GroupError::NotInGroup);
        }
        Ok(GroupElement(v))
    }

    pub fn element_from_bytes(&self, bytes: &[u8]) -> Result<GroupElement, GroupError> {
        self.element(BigUint::from_bytes_be(bytes))
    }

    pub fn element_from_hex(&self, s: &str) -> Result<GroupElement, GroupError> {
        if s.len() != 2 * self.element_len {
            return Err(GroupError::Hex(format!(
                "expected {} hex digits, got {}",
                2 * self.element_len,
                s.len()
            )));
        }
        self.element(hex_biguint(s)?)
    }

    /// Fixed-width big-endian encoding.
    pub fn element_bytes(&self, e: &GroupElement) -> Vec<u8> {
        fixed_width(&e.0, self.element_len)
    }

    pub fn element_hex(&self, e: &GroupElement) -> String {
        hex::encode(self.element_bytes(e))
    }

    pub fn mul(&self, a: &GroupElement, b: &GroupElement) -> GroupElement {
        GroupElement((&a.0 * &b.0) % &self.p)
    }

    pub fn inv(&self, a: &GroupElement) -> GroupElement {
        // a^(q-1) = a^-1 in an order-q group.
        GroupElement(a.0.modpow(&(&self.q - 1u32), &self.p))
    }

    pub fn div(&self, a: &GroupElement, b: &GroupElement) -> GroupElement {
        self.mul(a, &self.inv(b))
    }

    pub fn pow(&self, base: &GroupElement, exp: &Scalar) -> GroupElement {
        GroupElement(base.0.modpow(&exp.0, &self.p))
    }

    /// `g^exp`.
    pub fn exp_g(&self, exp: &Scalar) -> GroupElement {
        self.pow(&self.g, exp)
    }

    pub fn product<'a>(&self, items: impl IntoIterator<Item = &'a GroupElement>) -> GroupElement {
        items
            .into_iter()
            .fold(self.identity(), |acc, e| self.mul(&acc, e))
    }

    // ----- scalars -----

    pub fn scalar(&self, v: BigUint) -> Scalar {
        Scalar(v % &self.q)
    }

    pub fn scalar_from_u64(&self, v: u64) -> Scalar {
        self.scalar(BigUint::from(v))
    }

    /// Signed helper used for hand-checked examples.
    pub fn scalar_from_i64(&self, v: i64) -> Scalar {
        if v >= 0 {
            self.scalar_from_u64(v as u64)
        } else {
            self.scalar_neg(&self.scalar_from_u64(v.unsigned_abs()))
        }
    }

    pub fn scalar_from_hex(&self, s: &str) -> Result<Scalar, GroupError> {
        let v = hex_biguint(s)?;
        if v >= self.q {
            return Err(GroupError::Hex("scalar not reduced mod q".into()));
        }
        Ok(Scalar(v))
    }

    pub fn scalar_hex(&self, s: &Scalar) -> String {
        hex::encode(fixed_width(&s.0, self.element_len))
    }

    pub fn scalar_add(&self, a: &Scalar, b: &Scalar) -> Scalar {
        Scalar((&a.0 + &b.0) % &self.q)
    }

    pub fn scalar_sub(&self, a: &Scalar, b: &Scalar) -> Scalar {
        Scalar((&a.0 + &self.q - &b.0) % &self.q)
    }

    pub fn scalar_mul(&self, a: &Scalar, b: &Scalar) -> Scalar {
        Scalar((&a.0 * &b.0) % &self.q)
    }

    pub fn scalar_neg(&self, a: &Scalar) -> Scalar {
        Scalar((&self.q - &a.0) % &self.q)
    }

    /// Uniform in `[0, q)`; oversamples by 64 bits to flatten the bias.
    pub fn random_scalar<R: RngCore + ?Sized>(&self, rng: &mut R) -> Scalar {
        let len = self.q.bits().div_ceil(8) as usize + 8;
        let mut buf = vec![0u8; len];
        rng.fill_bytes(&mut buf);
        self.scalar(BigUint::from_bytes_be(&buf))
    }

    /// Uniform in `[1, q)`.
    pub fn random_nonzero_scalar<R: RngCore + ?Sized>(&self, rng: &mut R) -> Scalar {
        let len = self.q.bits().div_ceil(8) as usize + 8;
        let mut buf = vec![0u8; len];
        rng.fill_bytes(&mut buf);
        let v = BigUint::from_bytes_be(&buf) % (&self.q - 1u32);
        Scalar(v + 1u32)
    }

    pub fn random_element<R: RngCore + ?Sized>(&self, rng: &mut R) -> GroupElement {
        self.exp_g(&self.random_nonzero_scalar(rng))
    }

    // ----- message encoding -----

    fn checksum(&self, payload: &BigUint) -> BigUint {
        if self.checksum_bits == 0 {
            return BigUint::zero();
        }
        let mut h = Sha256::new();
        h.update(b"dcnet/checksum/v1");
        h.update(self.payload_bits.to_be_bytes());
        h.update(fixed_width(payload, self.payload_len()));
        let digest = BigUint::from_bytes_be(&h.finalize());
        digest >> (256 - self.checksum_bits)
    }

    /// The integer `u = payload ‖ checksum(payload)` that gets squared.
    pub fn message_code(&self, payload: &[u8]) -> Result<BigUint, GroupError> {
        let v = BigUint::from_bytes_be(payload);
        if v.bits() > self.payload_bits as u64 {
            return Err(GroupError::PayloadTooLong {
                bits: v.bits(),
                max: self.payload_bits,
            });
        }
        let u = (&v << self.checksum_bits) | self.checksum(&v);
        if u < BigUint::from(2u32) {
            return Err(GroupError::DegeneratePayload);
        }
        Ok(u)
    }

    /// Map a payload of at most `L` bits into the group.
    pub fn encode_message(&self, payload: &[u8]) -> Result<GroupElement, GroupError> {
        let u = self.message_code(payload)?;
        Ok(GroupElement(u.modpow(&BigUint::from(2u32), &self.p)))
    }

    /// Invert [`encode_message`](Self::encode_message) if `c` is a valid
    /// encoding. Payloads come back at the fixed width `payload_len()`.
    pub fn decode(&self, c: &GroupElement) -> Option<Decoded> {
        if c.is_identity() {
            return None;
        }
        let r = c.0.modpow(&self.sqrt_exp, &self.p);
        let other = &self.p - &r;
        let u = if r < other { r } else { other };
        let bound = BigUint::one() << (self.payload_bits + self.checksum_bits);
        if u >= bound || u < BigUint::from(2u32) {
            return None;
        }
        let mask = (BigUint::one() << self.checksum_bits) - 1u32;
        let v = &u >> self.checksum_bits;
        if (&u & &mask) != self.checksum(&v) {
            return None;
        }
        Some(Decoded {
            payload: fixed_width(&v, self.payload_len()),
            code: u,
        })
    }

    /// Classify a combined slot value.
    pub fn classify(&self, c: &GroupElement) -> SlotOutcome {
        if c.is_identity() {
            return SlotOutcome::Idle;
        }
        match self.decode(c) {
            Some(d) => SlotOutcome::Message(d.payload),
            None => SlotOutcome::Collision,
        }
    }

    /// Left-align `text` into a fixed-width payload (truncating if needed).
    pub fn payload_from_text(&self, text: &str) -> Vec<u8> {
        let len = self.payload_len();
        let mut out = vec![0u8; len];
        let bytes = text.as_bytes();
        let n = bytes.len().min(len);
        out[..n].copy_from_slice(&bytes[..n]);
        // Keep within L bits when L is not a multiple of 8.
        let excess = (len as u32 * 8).saturating_sub(self.payload_bits);
        if excess > 0 && len > 0 {
            out[0] &= 0xffu8 >> excess;
        }
        out
    }
}

/// Generate parameters by deterministic safe-prime search seeded from `seed`.
pub fn make_params(
    modulus_bits: u32,
    payload_bits: u32,
    checksum_bits: u32,
    seed: &[u8],
) -> Result<GroupParams, GroupError> {
    if modulus_bits < 16 {
        return Err(GroupError::ParameterRange("modulus_bits must be at least 16".into()));
    }
    if payload_bits == 0 {
        return Err(GroupError::ParameterRange("payload_bits must be positive".into()));
    }
    if payload_bits as u64 + checksum_bits as u64 > modulus_bits as u64 - 3 {
        return Err(GroupError::ParameterRange(format!(
            "payload_bits + checksum_bits must be at most {}",
            modulus_bits - 3
        )));
    }
    let mut h = Sha256::new();
    h.update(b"dcnet/make_params/v1");
    h.update(modulus_bits.to_be_bytes());
    h.update(seed);
    let mut rng = ChaCha20Rng::from_seed(h.finalize().into());
    let (p, q) = find_safe_prime(modulus_bits, &mut rng);

    let mut g = BigUint::one();
    while g.is_one() || g.is_zero() {
        let mut buf = vec![0u8; p.bits().div_ceil(8) as usize + 8];
        rng.fill_bytes(&mut buf);
        let h = BigUint::from_bytes_be(&buf) % &p;
        g = h.modpow(&BigUint::from(2u32), &p);
    }
    GroupParams::new(p, q, g, payload_bits, checksum_bits)
}

/// Hash arbitrary bytes into a scalar mod `q` (domain separated by `tag`).
pub(crate) fn hash_to_scalar(params: &GroupParams, tag: &[u8], parts: &[&[u8]]) -> Scalar {
    let mut h = Sha256::new();
    h.update((tag.len() as u32).to_be_bytes());
    h.update(tag);
    for part in parts {
        h.update((part.len() as u32).to_be_bytes());
        h.update(part);
    }
    let digest = h.finalize();
    // Stretch to q's width plus 64 bits so the reduction is close to uniform.
    let need = params.order().bits().div_ceil(8) as usize + 8;
    let mut wide = Vec::with_capacity(need + 32);
    for ctr in 0u32.. {
        if wide.len() >= need {
            break;
        }
        let mut block = Sha256::new();
        block.update(digest);
        block.update(ctr.to_be_bytes());
        wide.extend_from_slice(&block.finalize());
    }
    wide.truncate(need);
    params.scalar(BigUint::from_bytes_be(&wide))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toy_generator_has_order_eleven_by_enumeration() {
        // Oracle: walk powers of 4 mod 23 until we return to 1.
        let mut acc = 1u32;
        let mut order = 0;
        loop {
            acc = acc * 4 % 23;
            order += 1;
            if acc == 1 {
                break;
            }
        }
        assert_eq!(order, 11);
        let params = GroupParams::toy();
        assert!(params.modulus_is_3_mod_4());
    }

    #[test]
    fn toy_encoding_matches_squares_table() {
        let params = GroupParams::toy();
        // squares mod 23: 2^2 = 4, 3^2 = 9
        assert_eq!(params.encode_message(&[3]).unwrap().as_biguint(), &BigUint::from(9u32));
        assert_eq!(params.encode_message(&[2]).unwrap().as_biguint(), &BigUint::from(4u32));
        assert!(matches!(
            params.encode_message(&[4]),
            Err(GroupError::PayloadTooLong { bits: 3, max: 2 })
        ));
        assert_eq!(params.encode_message(&[1]), Err(GroupError::DegeneratePayload));
    }

    #[test]
    fn toy_classification() {
        let params = GroupParams::toy();
        assert_eq!(params.classify(&params.identity()), SlotOutcome::Idle);
        let nine = params.element(9u32.into()).unwrap();
        assert_eq!(params.classify(&nine), SlotOutcome::Message(vec![3]));
        // 4 * 9 = 36 = 13 mod 23; roots are 6 and 17, 6 >= 2^2.
        let thirteen = params.mul(
            &params.encode_message(&[2]).unwrap(),
            &params.encode_message(&[3]).unwrap(),
        );
        assert_eq!(thirteen.as_biguint(), &BigUint::from(13u32));
        assert_eq!(params.classify(&thirteen), SlotOutcome::Collision);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(GroupParams::new(23u32.into(), 11u32.into(), 5u32.into(), 2, 0).is_err());
        assert!(GroupParams::new(23u32.into(), 11u32.into(), 4u32.into(), 3, 0).is_err());
        assert!(GroupParams::new(21u32.into(), 10u32.into(), 4u32.into(), 1, 0).is_err());
        assert!(matches!(
            make_params(16, 20, 0, b"s"),
            Err(GroupError::ParameterRange(_))
        ));
        assert!(make_params(15, 2, 0, b"s").is_err());
    }

    #[test]
    fn make_params_is_deterministic() {
        let a = make_params(16, 2, 0, b"seed").unwrap();
        let b = make_params(16, 2, 0, b"seed").unwrap();
        assert_eq!(a, b);
        assert_eq!(a.modulus().bits(), 16);
        assert!(a.modulus_is_3_mod_4());
        let c = make_params(64, 24, 32, b"seed").unwrap();
        assert_eq!(c.modulus().bits(), 64);
    }

    #[test]
    fn params_record_round_trip() {
        let params = make_params(64, 24, 16, b"rec").unwrap();
        let rec = params.to_record();
        assert_eq!(GroupParams::from_record(&rec).unwrap(), params);
    }

    #[test]
    fn element_membership() {
        let params = GroupParams::toy();
        // 5 is a non-residue mod 23.
        assert_eq!(params.element(5u32.into()), Err(GroupError::NotInGroup));
        assert_eq!(params.element(0u32.into()), Err(GroupError::NotInGroup));
        assert_eq!(params.element(23u32.into()), Err(GroupError::NotInGroup));
        let e = params.element(18u32.into()).unwrap();
        assert_eq!(params.element_hex(&e), "12");
        assert_eq!(params.element_from_hex("12").unwrap(), e);
        assert!(params.element_from_hex("012").is_err());
    }
}
