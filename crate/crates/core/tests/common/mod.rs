//! Plain-loop oracles and random inputs shared by the integration suites.
//! Nothing here touches the tensor library.

#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub const EPS: f64 = 1e-7;

pub type Matrix = Vec<Vec<f64>>;

fn clog(p: f64) -> f64 {
    p.clamp(EPS, 1.0 - EPS).ln()
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (mut s, mut n) = (0.0, 0usize);
    for x in v {
        s += x;
        n += 1;
    }
    s / n as f64
}

pub fn closed_ce(p: &Matrix, y: &[u32]) -> f64 {
    mean(p.iter().zip(y).map(|(row, &l)| -clog(row[l as usize])))
}

pub fn ova_hard_negative(p: &Matrix, y: &[u32]) -> f64 {
    mean(p.iter().zip(y).map(|(row, &l)| {
        let mut hardest = f64::NEG_INFINITY;
        for (k, &v) in row.iter().enumerate() {
            if k != l as usize && v > hardest {
                hardest = v;
            }
        }
        -clog(row[l as usize]) - clog(1.0 - hardest)
    }))
}

pub fn ova_all_negatives(p: &Matrix, y: &[u32]) -> f64 {
    mean(p.iter().zip(y).map(|(row, &l)| {
        let mut s = -clog(row[l as usize]);
        for (k, &v) in row.iter().enumerate() {
            if k != l as usize {
                s -= clog(1.0 - v);
            }
        }
        s
    }))
}

pub fn open_entropy_min(p: &Matrix) -> f64 {
    -mean(p.iter().map(|row| mean(row.iter().map(|&v| v * clog(v) + (1.0 - v) * clog(1.0 - v)))))
}

pub fn negative_constraint(p: &Matrix) -> f64 {
    -mean(p.iter().map(|row| mean(row.iter().map(|&v| clog(1.0 - v)))))
}

pub fn gen_entropy(p: &Matrix) -> f64 {
    -mean(p.iter().map(|row| mean(row.iter().map(|&v| v * clog(v)))))
}

pub fn gen_agreement(p: &Matrix) -> f64 {
    -mean(p.iter().map(|row| mean(row.iter().map(|&v| clog(1.0 - (1.0 - v))))))
}

pub fn h_score(a: f64, b: f64) -> f64 {
    if a + b == 0.0 {
        0.0
    } else {
        2.0 * a * b / (a + b)
    }
}

/// Random row-stochastic matrix.
pub fn simplex_rows(rng: &mut ChaCha8Rng, b: usize, k: usize) -> Matrix {
    (0..b)
        .map(|_| {
            let logits: Vec<f64> = (0..k).map(|_| rng.random_range(-3.0..3.0)).collect();
            let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
            let s: f64 = e.iter().sum();
            e.into_iter().map(|v| v / s).collect()
        })
        .collect()
}

/// Independent probabilities in (0.01, 0.99).
pub fn unit_rows(rng: &mut ChaCha8Rng, b: usize, k: usize) -> Matrix {
    (0..b).map(|_| (0..k).map(|_| rng.random_range(0.01..0.99)).collect()).collect()
}

pub fn labels(rng: &mut ChaCha8Rng, b: usize, k: usize) -> Vec<u32> {
    (0..b).map(|_| rng.random_range(0..k as u32)).collect()
}

pub fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()) + 1e-12
}

/// The 31 Office-31 categories in their folder-listing order.
pub const OFFICE31: [&str; 31] = [
    "back_pack",
    "bike",
    "bike_helmet",
    "bookcase",
    "bottle",
    "calculator",
    "desk_chair",
    "desk_lamp",
    "desktop_computer",
    "file_cabinet",
    "headphones",
    "keyboard",
    "laptop_computer",
    "letter_tray",
    "mobile_phone",
    "monitor",
    "mouse",
    "mug",
    "paper_notebook",
    "pen",
    "phone",
    "printer",
    "projector",
    "punchers",
    "ring_binder",
    "ruler",
    "scissors",
    "speaker",
    "stapler",
    "tape_dispenser",
    "trash_can",
];
