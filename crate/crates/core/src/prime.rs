//! Miller-Rabin testing and deterministic safe-prime search.

use num_bigint::BigUint;
use num_integer::Integer;
use num_traits::{One, ToPrimitive, Zero};
use rand::RngCore;

const SMALL_PRIMES: [u32; 24] = [
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89,
];

/// Odd primes below 2000, used to sieve candidates before Miller-Rabin.
fn sieve_primes() -> &'static [u32] {
    use std::sync::OnceLock;
    static PRIMES: OnceLock<Vec<u32>> = OnceLock::new();
    PRIMES.get_or_init(|| {
        let limit = 2000usize;
        let mut composite = vec![false; limit];
        let mut out = Vec::new();
        for i in 2..limit {
            if !composite[i] {
                if i > 2 {
                    out.push(i as u32);
                }
                let mut j = i * i;
                while j < limit {
                    composite[j] = true;
                    j += i;
                }
            }
        }
        out
    })
}

/// Miller-Rabin with the first 24 primes as witnesses. Deterministic for
/// every input below 3.3e24 and overwhelmingly reliable above that.
pub fn is_probable_prime(n: &BigUint) -> bool {
    if let Some(small) = n.to_u64() {
        if small < 2 {
            return false;
        }
        for &p in SMALL_PRIMES.iter() {
            if small == p as u64 {
                return true;
            }
            if small % p as u64 == 0 {
                return false;
            }
        }
    } else {
        for &p in SMALL_PRIMES.iter() {
            if (n % p).is_zero() {
                return false;
            }
        }
    }

    let one = BigUint::one();
    let n_minus_one = n - &one;
    let mut d = n_minus_one.clone();
    let mut s = 0u32;
    while d.is_even() {
        d >>= 1;
        s += 1;
    }

    'witness: for &a in SMALL_PRIMES.iter() {
        let a = BigUint::from(a);
        if a >= n_minus_one {
            continue;
        }
        let mut x = a.modpow(&d, n);
        if x == one || x == n_minus_one {
            continue;
        }
        for _ in 1..s {
            x = x.modpow(&BigUint::from(2u32), n);
            if x == n_minus_one {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

fn survives_sieve(n: &BigUint) -> bool {
    for &p in sieve_primes() {
        let r = (n % p).to_u32().unwrap_or(1);
        if r == 0 {
            return n == &BigUint::from(p);
        }
    }
    true
}

/// Search for a safe prime `p = 2q + 1` with exactly `bits` bits, drawing
/// candidates for `q` from `rng`. Returns `(p, q)`.
pub fn find_safe_prime<R: RngCore>(bits: u32, rng: &mut R) -> (BigUint, BigUint) {
    assert!(bits >= 4, "safe primes need at least 4 bits");
    let q_bits = bits - 1;
    let byte_len = q_bits.div_ceil(8) as usize;
    let excess = byte_len as u32 * 8 - q_bits;
    let mut buf = vec![0u8; byte_len];
    loop {
        rng.fill_bytes(&mut buf);
        buf[0] &= 0xffu8 >> excess;
        let mut q = BigUint::from_bytes_be(&buf);
        q.set_bit((q_bits - 1) as u64, true);
        q.set_bit(0, true);
        let p: BigUint = (&q << 1u32) + 1u32;
        if p.bits() != bits as u64 {
            continue;
        }
        if !survives_sieve(&q) || !survives_sieve(&p) {
            continue;
        }
        if is_probable_prime(&q) && is_probable_prime(&p) {
            return (p, q);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn trial_division(n: u64) -> bool {
        if n < 2 {
            return false;
        }
        let mut d = 2;
        while d * d <= n {
            if n.is_multiple_of(d) {
                return false;
            }
            d += 1;
        }
        true
    }

    #[test]
    fn agrees_with_trial_division_below_20000() {
        for n in 0u64..20_000 {
            assert_eq!(
                is_probable_prime(&BigUint::from(n)),
                trial_division(n),
                "n = {n}"
            );
        }
    }

    #[test]
    fn rejects_carmichael_numbers() {
        for n in [561u64, 1105, 1729, 2465, 2821, 6601, 8911, 41041, 825265] {
            assert!(!is_probable_prime(&BigUint::from(n)));
        }
    }

    #[test]
    fn safe_prime_has_requested_width() {
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        for bits in [16u32, 24, 64, 128] {
            let (p, q) = find_safe_prime(bits, &mut rng);
            assert_eq!(p.bits(), bits as u64);
            assert_eq!(p, &q * 2u32 + 1u32);
            assert!(is_probable_prime(&p) && is_probable_prime(&q));
        }
    }
}
