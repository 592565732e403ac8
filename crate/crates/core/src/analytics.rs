//! Expected resolution length and throughput of SICTA.
//!
//! `S_k` is the expected number of transmitted rounds needed to resolve a
//! collision of `k` messages, counting the first one. Inferred rounds are
//! free, which gives
//!
//! ```text
//! S_k = Σ_{i=0..k} C(k,i) 2^−k (S_i + S_{k−i}),   S_0 = S_1 = 1
//!     = Σ_{i<k} C(k,i) S_i / (2^{k−1} − 1)
//! ```
//!
//! With the two-collision rule a pair always resolves in two rounds, so the
//! optimized variant pins `S_2 = 2` and feeds that into all larger `k`.

use std::fmt::Write as _;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};

use crate::sicta::Variant;

/// `k` at which the maximum stable throughput is read off.
pub const MST_K: usize = 64;
/// Lower end of the tail window used for the error bar.
pub const MST_TAIL_FROM: usize = 48;

fn binomial_row(k: usize) -> Vec<BigInt> {
    let mut row = vec![BigInt::one(); k + 1];
    for i in 1..k {
        row[i] = &row[i - 1] * BigInt::from(k - i + 1) / BigInt::from(i);
    }
    row
}

/// `S_0 ..= S_kmax` as exact rationals.
pub fn expected_rounds_table(kmax: usize, variant: Variant) -> Vec<BigRational> {
    let mut s: Vec<BigRational> = Vec::with_capacity(kmax + 1);
    for k in 0..=kmax {
        let v = match (k, variant) {
            (0 | 1, _) => BigRational::one(),
            (2, Variant::Optimized) => BigRational::from_integer(BigInt::from(2)),
            _ => {
                let row = binomial_row(k);
                let sum = (0..k).fold(BigRational::zero(), |acc, i| {
                    acc + &s[i] * BigRational::from_integer(row[i].clone())
                });
                let den = (BigInt::one() << (k - 1)) - 1;
                sum / BigRational::from_integer(den)
            }
        };
        s.push(v);
    }
    s
}

pub fn expected_rounds(k: usize, variant: Variant) -> BigRational {
    expected_rounds_table(k, variant).pop().expect("non-empty table")
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThroughputRow {
    pub k: usize,
    pub s_k: BigRational,
    pub s_k_f64: f64,
    pub throughput: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThroughputTable {
    pub variant: Variant,
    pub rows: Vec<ThroughputRow>,
}

impl ThroughputTable {
    pub fn row(&self, k: usize) -> Option<&ThroughputRow> {
        self.rows.iter().find(|r| r.k == k)
    }

    /// `k,S_k_num,S_k_den,throughput` with a header line.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("k,S_k_num,S_k_den,throughput\n");
        for r in &self.rows {
            let _ = writeln!(out, "{},{},{},{:.9}", r.k, r.s_k.numer(), r.s_k.denom(), r.throughput);
        }
        out
    }
}

pub fn to_f64(r: &BigRational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

/// Rows `k = 1 ..= kmax`. Requires `kmax ≥ 2`.
pub fn throughput_curve(kmax: usize, variant: Variant) -> Option<ThroughputTable> {
    if kmax < 2 {
        return None;
    }
    let s = expected_rounds_table(kmax, variant);
    let rows = (1..=kmax)
        .map(|k| {
            let tp = BigRational::from_integer(BigInt::from(k)) / &s[k];
            ThroughputRow {
                k,
                s_k_f64: to_f64(&s[k]),
                throughput: to_f64(&tp),
                s_k: s[k].clone(),
            }
        })
        .collect();
    Some(ThroughputTable { variant, rows })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MstEstimate {
    /// `k/S_k` at `k = 64`.
    pub value: f64,
    /// Range of `k/S_k` over `k = 48 ..= 64`.
    pub tail_min: f64,
    pub tail_max: f64,
}

impl MstEstimate {
    pub fn spread(&self) -> f64 {
        self.tail_max - self.tail_min
    }
}

pub fn mst_estimate(variant: Variant) -> MstEstimate {
    let table = throughput_curve(MST_K, variant).expect("MST_K ≥ 2");
    let tail: Vec<f64> = table.rows[MST_TAIL_FROM - 1..].iter().map(|r| r.throughput).collect();
    MstEstimate {
        value: table.rows[MST_K - 1].throughput,
        tail_min: tail.iter().copied().fold(f64::INFINITY, f64::min),
        tail_max: tail.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    }
}
