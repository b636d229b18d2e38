//! Seeded synthetic data: CICIDS2017-shaped flow exports and Gaussian blobs.
//!
//! The flow generator mimics the quirks of the public exports (leading
//! spaces in header names, a repeated `Fwd Header Length` column,
//! `Infinity`/`NaN` rate cells, empty cells, duplicated rows) so the whole
//! preprocessing path can be exercised without the real dataset.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal};

use crate::error::Result;
use crate::features::Matrix;
use crate::ingest::{FlowTable, LabelVector};

/// Header as it appears in the raw exports, including the leading spaces and
/// the repeated column.
pub const FLOW_HEADER: [&str; 22] = [
    "Flow ID",
    " Source IP",
    " Source Port",
    " Destination IP",
    " Destination Port",
    " Protocol",
    " Timestamp",
    " Flow Duration",
    " Total Fwd Packets",
    " Total Backward Packets",
    "Total Length of Fwd Packets",
    " Total Length of Bwd Packets",
    " Fwd Packet Length Max",
    " Fwd Packet Length Mean",
    "Flow Bytes/s",
    " Flow Packets/s",
    " Flow IAT Mean",
    " Fwd Header Length",
    " Fwd Header Length",
    " SYN Flag Count",
    " Average Packet Size",
    " Label",
];

#[derive(Clone, Debug, PartialEq)]
pub struct FlowSynthOptions {
    pub rows: usize,
    /// Fraction of rows labelled with an attack class.
    pub attack_fraction: f64,
    /// Fraction of rows carrying a missing or non-finite cell.
    pub dirty_fraction: f64,
    /// Fraction of rows emitted twice.
    pub duplicate_fraction: f64,
    pub seed: u64,
}

impl Default for FlowSynthOptions {
    fn default() -> Self {
        FlowSynthOptions {
            rows: 2000,
            attack_fraction: 0.3,
            dirty_fraction: 0.02,
            duplicate_fraction: 0.01,
            seed: 0,
        }
    }
}

#[derive(Clone, Copy)]
enum Class {
    Benign,
    DDoS,
    PortScan,
}

fn lognormal(rng: &mut ChaCha8Rng, median: f64, spread: f64) -> f64 {
    LogNormal::new(median.ln(), spread).expect("valid").sample(rng)
}

fn flow_row(rng: &mut ChaCha8Rng, i: usize, class: Class) -> Vec<String> {
    let (duration, fwd, bwd, fwd_len, syn) = match class {
        Class::Benign => (
            lognormal(rng, 2.0e5, 1.2),
            lognormal(rng, 8.0, 0.7).ceil(),
            lognormal(rng, 7.0, 0.7).ceil(),
            lognormal(rng, 120.0, 0.6),
            u8::from(rng.gen_bool(0.1)),
        ),
        Class::DDoS => (
            lognormal(rng, 1.5e6, 0.8),
            lognormal(rng, 4.0, 0.4).ceil(),
            lognormal(rng, 1.5, 0.5).ceil(),
            lognormal(rng, 20.0, 0.5),
            u8::from(rng.gen_bool(0.3)),
        ),
        Class::PortScan => (
            lognormal(rng, 60.0, 0.7),
            1.0,
            lognormal(rng, 1.0, 0.3).round(),
            lognormal(rng, 2.0, 0.6),
            u8::from(rng.gen_bool(0.9)),
        ),
    };
    let protocol = match class {
        Class::PortScan => 6,
        _ if rng.gen_bool(0.25) => 17,
        _ if rng.gen_bool(0.02) => 0,
        _ => 6,
    };
    let dst_port = match class {
        Class::Benign => [53, 80, 443, 443, 8080][rng.gen_range(0..5)],
        Class::DDoS => 80,
        Class::PortScan => rng.gen_range(1..1024),
    };
    let bwd_len = bwd * lognormal(rng, 300.0, 0.8);
    let total_len = fwd_len * fwd + bwd_len;
    let secs = duration / 1e6;
    let bytes_per_s = total_len / secs;
    let packets_per_s = (fwd + bwd) / secs;
    let iat = duration / (fwd + bwd);
    let header = fwd * 32.0;
    let avg = total_len / (fwd + bwd);
    let src = format!("192.168.{}.{}", rng.gen_range(0..4), rng.gen_range(1..255));
    let dst = format!("172.16.0.{}", rng.gen_range(1..20));
    let src_port = rng.gen_range(1024..65535);
    let label = match class {
        Class::Benign => "BENIGN",
        Class::DDoS => "DDoS",
        Class::PortScan => "PortScan",
    };
    vec![
        format!("{dst}-{src}-{dst_port}-{src_port}-{protocol}"),
        src,
        src_port.to_string(),
        dst,
        dst_port.to_string(),
        protocol.to_string(),
        format!("7/7/2017 {}:{:02}", 9 + i / 3600 % 8, i / 60 % 60),
        format!("{}", duration.round()),
        format!("{fwd}"),
        format!("{bwd}"),
        format!("{:.1}", fwd_len * fwd),
        format!("{bwd_len:.1}"),
        format!("{:.1}", fwd_len * 1.3),
        format!("{fwd_len:.4}"),
        format!("{bytes_per_s:.4}"),
        format!("{packets_per_s:.4}"),
        format!("{iat:.4}"),
        format!("{header}"),
        format!("{header}"),
        syn.to_string(),
        format!("{avg:.4}"),
        label.to_string(),
    ]
}

/// Generates a raw flow table with `rows` distinct records plus duplicates.
pub fn synth_flows(opts: &FlowSynthOptions) -> FlowTable {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut rows = Vec::with_capacity(opts.rows + opts.rows / 50);
    for i in 0..opts.rows {
        let class = if rng.gen_bool(opts.attack_fraction) {
            if rng.gen_bool(0.6) {
                Class::DDoS
            } else {
                Class::PortScan
            }
        } else {
            Class::Benign
        };
        let mut row = flow_row(&mut rng, i, class);
        if rng.gen_bool(opts.dirty_fraction) {
            match rng.gen_range(0..3) {
                0 => row[14] = "Infinity".into(),
                1 => row[15] = "NaN".into(),
                _ => row[16] = String::new(),
            }
        }
        if rng.gen_bool(opts.duplicate_fraction) {
            rows.push(row.clone());
        }
        rows.push(row);
    }
    FlowTable {
        columns: FLOW_HEADER.iter().map(|s| s.to_string()).collect(),
        rows,
        source_files: Vec::new(),
    }
}

/// Writes [`synth_flows`] output as a CSV file with the raw header.
pub fn write_synth_flows(opts: &FlowSynthOptions, path: &Path) -> Result<()> {
    synth_flows(opts).write_csv(path)
}

/// Two Gaussian blobs in two features (centred at ±2.5, σ = 1), zero-padded
/// to `features` columns. Classes alternate by row.
pub fn blobs(n: usize, features: usize, seed: u64) -> (Matrix, LabelVector) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).expect("valid");
    let mut data = Vec::with_capacity(n * features);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let y = (i % 2) as u8;
        let centre = if y == 1 { 2.5 } else { -2.5 };
        for j in 0..features {
            data.push(if j < 2 { centre + normal.sample(&mut rng) } else { 0.0 });
        }
        labels.push(y);
    }
    (
        Matrix {
            rows: n,
            cols: features,
            data,
        },
        LabelVector::from_values(labels),
    )
}
