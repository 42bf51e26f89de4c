//! Merges BER CSV files into whitespace-separated columns for plotting.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use super::CliError;
use crate::montecarlo::BerRecord;

const EXPECTED_HEADER: &str = "snr_db,frames,bits,bit_errors,ber,precoder,detector,scenario,M,N,L_or_Q,seed,fingerprint";

fn series_label(r: &BerRecord) -> String {
    format!("{}_{}_{}{}_{}x{}", r.precoder, r.detector, r.scenario, r.l_or_q, r.m, r.n)
}

/// Merged table plus the warnings raised while building it.
pub struct Merged {
    pub text: String,
    pub warnings: Vec<String>,
}

pub fn merge(inputs: &[PathBuf]) -> Result<Merged, CliError> {
    if inputs.is_empty() {
        return Err(CliError::usage("--in: at least one CSV file is required"));
    }
    let mut order: Vec<String> = Vec::new();
    let mut series: BTreeMap<String, BTreeMap<u64, (f64, f64)>> = BTreeMap::new();
    let mut warnings = Vec::new();
    for path in inputs {
        let mut rdr = csv::Reader::from_path(path)
            .map_err(|e| CliError::usage(format!("--in: cannot read {}: {e}", path.display())))?;
        let header = rdr
            .headers()
            .map_err(|e| CliError::usage(format!("--in: {}: {e}", path.display())))?
            .iter()
            .collect::<Vec<_>>()
            .join(",");
        if header != EXPECTED_HEADER {
            return Err(CliError::usage(format!("--in: {} has an unexpected header '{header}'", path.display())));
        }
        for row in rdr.deserialize::<BerRecord>() {
            let r = row.map_err(|e| CliError::usage(format!("--in: {}: {e}", path.display())))?;
            let label = series_label(&r);
            if !series.contains_key(&label) {
                order.push(label.clone());
            }
            let points = series.entry(label.clone()).or_default();
            if points.insert(r.snr_db.to_bits(), (r.snr_db, r.ber)).is_some() {
                warnings.push(format!("duplicate SNR {} dB in series {label}; keeping the last row", r.snr_db));
            }
        }
    }
    let mut snrs: Vec<f64> = series.values().flat_map(|p| p.values().map(|(s, _)| *s)).collect();
    snrs.sort_by(f64::total_cmp);
    snrs.dedup();

    let mut text = String::from("# BER versus SNR; plot with a logarithmic y axis (set logscale y)\n");
    let _ = writeln!(text, "# snr_db {}", order.join(" "));
    for snr in snrs {
        let _ = write!(text, "{snr}");
        for label in &order {
            match series[label].get(&snr.to_bits()) {
                Some((_, ber)) => {
                    let _ = write!(text, " {ber:e}");
                }
                None => text.push_str(" NaN"),
            }
        }
        text.push('\n');
    }
    Ok(Merged { text, warnings })
}
