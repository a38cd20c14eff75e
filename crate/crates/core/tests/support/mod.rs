//! Independent reference implementations used as test oracles. Nothing here
//! calls into the library's geometry, assignment, hashing or statistics code.
#![allow(dead_code)]

use std::collections::BTreeSet;

/// FIPS 180-4 SHA-256.
pub fn sha256(msg: &[u8]) -> [u8; 32] {
    const K: [u32; 64] = [
        0x428a2f98, 0x71374491, 0xb5c0fbcf, 0xe9b5dba5, 0x3956c25b, 0x59f111f1, 0x923f82a4, 0xab1c5ed5,
        0xd807aa98, 0x12835b01, 0x243185be, 0x550c7dc3, 0x72be5d74, 0x80deb1fe, 0x9bdc06a7, 0xc19bf174,
        0xe49b69c1, 0xefbe4786, 0x0fc19dc6, 0x240ca1cc, 0x2de92c6f, 0x4a7484aa, 0x5cb0a9dc, 0x76f988da,
        0x983e5152, 0xa831c66d, 0xb00327c8, 0xbf597fc7, 0xc6e00bf3, 0xd5a79147, 0x06ca6351, 0x14292967,
        0x27b70a85, 0x2e1b2138, 0x4d2c6dfc, 0x53380d13, 0x650a7354, 0x766a0abb, 0x81c2c92e, 0x92722c85,
        0xa2bfe8a1, 0xa81a664b, 0xc24b8b70, 0xc76c51a3, 0xd192e819, 0xd6990624, 0xf40e3585, 0x106aa070,
        0x19a4c116, 0x1e376c08, 0x2748774c, 0x34b0bcb5, 0x391c0cb3, 0x4ed8aa4a, 0x5b9cca4f, 0x682e6ff3,
        0x748f82ee, 0x78a5636f, 0x84c87814, 0x8cc70208, 0x90befffa, 0xa4506ceb, 0xbef9a3f7, 0xc67178f2,
    ];
    let mut h: [u32; 8] = [
        0x6a09e667, 0xbb67ae85, 0x3c6ef372, 0xa54ff53a, 0x510e527f, 0x9b05688c, 0x1f83d9ab, 0x5be0cd19,
    ];
    let mut data = msg.to_vec();
    let bit_len = (msg.len() as u64).wrapping_mul(8);
    data.push(0x80);
    while data.len() % 64 != 56 {
        data.push(0);
    }
    data.extend_from_slice(&bit_len.to_be_bytes());
    for block in data.chunks(64) {
        let mut w = [0u32; 64];
        for (i, word) in block.chunks(4).enumerate() {
            w[i] = u32::from_be_bytes([word[0], word[1], word[2], word[3]]);
        }
        for i in 16..64 {
            let s0 = w[i - 15].rotate_right(7) ^ w[i - 15].rotate_right(18) ^ (w[i - 15] >> 3);
            let s1 = w[i - 2].rotate_right(17) ^ w[i - 2].rotate_right(19) ^ (w[i - 2] >> 10);
            w[i] = w[i - 16].wrapping_add(s0).wrapping_add(w[i - 7]).wrapping_add(s1);
        }
        let mut v = h;
        for i in 0..64 {
            let s1 = v[4].rotate_right(6) ^ v[4].rotate_right(11) ^ v[4].rotate_right(25);
            let ch = (v[4] & v[5]) ^ (!v[4] & v[6]);
            let t1 = v[7].wrapping_add(s1).wrapping_add(ch).wrapping_add(K[i]).wrapping_add(w[i]);
            let s0 = v[0].rotate_right(2) ^ v[0].rotate_right(13) ^ v[0].rotate_right(22);
            let maj = (v[0] & v[1]) ^ (v[0] & v[2]) ^ (v[1] & v[2]);
            let t2 = s0.wrapping_add(maj);
            v = [t1.wrapping_add(t2), v[0], v[1], v[2], v[3].wrapping_add(t1), v[4], v[5], v[6]];
        }
        for (a, b) in h.iter_mut().zip(v) {
            *a = a.wrapping_add(b);
        }
    }
    let mut out = [0u8; 32];
    for (i, word) in h.iter().enumerate() {
        out[4 * i..4 * i + 4].copy_from_slice(&word.to_be_bytes());
    }
    out
}

pub fn to_hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn cross(o: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

/// Extreme points of the convex hull by testing every directed pair: (i, j)
/// is a hull edge when no point lies strictly right of it and every point on
/// its line lies within the segment. O(n^3).
pub fn brute_hull_vertices(points: &[(f64, f64)]) -> BTreeSet<(i64, i64)> {
    let pts: Vec<(f64, f64)> = {
        let set: BTreeSet<(i64, i64)> = points.iter().map(|p| (p.0 as i64, p.1 as i64)).collect();
        set.into_iter().map(|(x, y)| (x as f64, y as f64)).collect()
    };
    let mut out = BTreeSet::new();
    for i in 0..pts.len() {
        for j in 0..pts.len() {
            if i == j {
                continue;
            }
            let (a, b) = (pts[i], pts[j]);
            let edge = pts.iter().enumerate().all(|(k, &p)| {
                if k == i || k == j {
                    return true;
                }
                let c = cross(a, b, p);
                if c != 0.0 {
                    return c > 0.0;
                }
                let t = (p.0 - a.0) * (b.0 - a.0) + (p.1 - a.1) * (b.1 - a.1);
                let len2 = (b.0 - a.0).powi(2) + (b.1 - a.1).powi(2);
                t > 0.0 && t < len2
            });
            if edge {
                out.insert((a.0 as i64, a.1 as i64));
                out.insert((b.0 as i64, b.1 as i64));
            }
        }
    }
    out
}

/// Unsigned polygon area by the shoelace sum.
pub fn shoelace(vertices: &[(f64, f64)]) -> f64 {
    let n = vertices.len();
    let twice: f64 = (0..n)
        .map(|i| {
            let (a, b) = (vertices[i], vertices[(i + 1) % n]);
            a.0 * b.1 - b.0 * a.1
        })
        .sum();
    twice.abs() / 2.0
}

/// Exhaustive optimum over partial one-to-one assignments: the largest
/// number of admissible pairs, then the smallest cost sum (summed in row
/// order). Returns (cardinality, cost).
pub fn brute_assignment(cost: &[Vec<Option<f64>>]) -> (usize, f64) {
    fn go(row: usize, cost: &[Vec<Option<f64>>], used: &mut Vec<bool>, card: usize, acc: f64, best: &mut (usize, f64)) {
        if row == cost.len() {
            if card > best.0 || (card == best.0 && acc < best.1) {
                *best = (card, acc);
            }
            return;
        }
        go(row + 1, cost, used, card, acc, best);
        for j in 0..used.len() {
            if let (false, Some(c)) = (used[j], cost[row][j]) {
                used[j] = true;
                go(row + 1, cost, used, card + 1, acc + c, best);
                used[j] = false;
            }
        }
    }
    let cols = cost.first().map_or(0, Vec::len);
    let mut best = (0, 0.0);
    go(0, cost, &mut vec![false; cols], 0, 0.0, &mut best);
    best
}

/// Nearest-rank percentile without sorting: the smallest value whose
/// cumulative count reaches `num/den` of the sample.
pub fn rank_percentile(values: &[i64], num: usize, den: usize) -> i64 {
    let n = values.len();
    *values
        .iter()
        .filter(|&&x| values.iter().filter(|&&y| y <= x).count() * den >= num * n)
        .min()
        .expect("non-empty")
}

/// Lower median without sorting: the smallest value with at least
/// ceil(n / 2) values at or below it.
pub fn rank_lower_median(values: &[i64]) -> i64 {
    let need = values.len().div_ceil(2);
    *values
        .iter()
        .filter(|&&x| values.iter().filter(|&&y| y <= x).count() >= need)
        .min()
        .expect("non-empty")
}

/// Every substring shaped like a plate under either template.
pub fn plate_like_substrings(text: &str) -> Vec<String> {
    let re = regex::Regex::new(r"[A-Z]{2}[0-9]{2}[A-Z]{1,2}[0-9]{4}").unwrap();
    let b = text.as_bytes();
    let mut out = Vec::new();
    for len in [9, 10] {
        for start in 0..b.len().saturating_sub(len - 1) {
            let Ok(s) = std::str::from_utf8(&b[start..start + len]) else { continue };
            if re.find(s).is_some_and(|m| m.start() == 0 && m.end() == len) {
                out.push(s.to_string());
            }
        }
    }
    out
}
