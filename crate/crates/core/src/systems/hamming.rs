//! Hard-decision Hamming(7,4) with BPSK on the in-phase rail.
//!
//! Reference link for judging the autoencoder: the same seven complex channel
//! uses and unit average power per complex sample, quadrature left empty.

use crate::error::Result;
use crate::metrics::Estimate;
use crate::rng::SimRng;
use crate::signal::ebn0_to_noise_variance;
use rand::Rng;
use rand_distr::StandardNormal;

pub const RATE: f64 = 4.0 / 7.0;

/// Generator rows for data bits d0..d3; codeword layout `[d0 d1 d2 d3 p0 p1 p2]`.
const PARITY: [[u8; 3]; 4] = [[1, 1, 0], [1, 0, 1], [0, 1, 1], [1, 1, 1]];

pub fn encode(message: u8) -> [u8; 7] {
    let mut c = [0u8; 7];
    for i in 0..4 {
        c[i] = (message >> i) & 1;
    }
    for j in 0..3 {
        c[4 + j] = (0..4).fold(0, |acc, i| acc ^ (c[i] & PARITY[i][j]));
    }
    c
}

fn syndrome(c: &[u8; 7]) -> [u8; 3] {
    let mut s = [0u8; 3];
    for j in 0..3 {
        s[j] = c[4 + j] ^ (0..4).fold(0, |acc, i| acc ^ (c[i] & PARITY[i][j]));
    }
    s
}

/// Corrects up to one bit error and returns the data nibble.
pub fn decode(mut c: [u8; 7]) -> u8 {
    let s = syndrome(&c);
    if s != [0, 0, 0] {
        let column = |k: usize| -> [u8; 3] {
            if k < 4 {
                PARITY[k]
            } else {
                let mut e = [0u8; 3];
                e[k - 4] = 1;
                e
            }
        };
        if let Some(k) = (0..7).find(|&k| column(k) == s) {
            c[k] ^= 1;
        }
    }
    (0..4).fold(0, |acc, i| acc | (c[i] << i))
}

/// Monte-Carlo block-error rate at `ebn0_db`.
pub fn simulate_bler(ebn0_db: f64, trials: u64, rng: &mut SimRng) -> Result<Estimate> {
    let sigma = ebn0_to_noise_variance(ebn0_db, RATE)?.sqrt();
    let mut errors = 0;
    for _ in 0..trials {
        let message: u8 = rng.random_range(0..16);
        let mut hard = encode(message);
        for b in hard.iter_mut() {
            let x = if *b == 1 { -1.0 } else { 1.0 };
            let n: f64 = rng.sample(StandardNormal);
            *b = u8::from(x + sigma * n < 0.0);
        }
        if decode(hard) != message {
            errors += 1;
        }
    }
    Ok(Estimate::wilson(errors, trials))
}
