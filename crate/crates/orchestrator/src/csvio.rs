//! Long-format result schema shared by every experiment.
//!
//! One row per (cell × replicate × metric), plus aggregate rows per cell
//! with `seed_tuple = "agg"` and metric names suffixed `__mean` /
//! `__stderr`. Long format keeps the schema stable as metrics are added.
//! Rows carry the full provenance tuple (config hash, seed-schedule id,
//! code version); nothing time-dependent is written, so repeated runs are
//! byte-identical.

use serde::{Deserialize, Serialize};

/// Version string stamped on rows (the crate version).
pub fn code_version() -> String {
    format!("rflab-{}", env!("CARGO_PKG_VERSION"))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Row {
    pub experiment_id: String,
    pub model: String,
    pub d: usize,
    pub n: usize,
    pub p: usize,
    /// Degree of linearity r = ζ/η of the activation.
    pub r: f64,
    pub eta: f64,
    pub zeta: f64,
    /// "inf" round-trips through f64 parsing.
    pub snr: f64,
    pub gamma: f64,
    pub k: usize,
    /// NN rows only; empty for RF.
    pub epoch: Option<usize>,
    /// "master:cell:replicate", or "agg" on aggregate rows.
    pub seed_tuple: String,
    pub metric: String,
    pub value: f64,
    pub config_hash: String,
    pub schedule_id: String,
    pub code_version: String,
}

/// Shared per-sweep row fields, cloned into each emitted row.
#[derive(Debug, Clone)]
pub struct RowStamp {
    pub experiment_id: String,
    pub model: String,
    pub d: usize,
    pub r: f64,
    pub eta: f64,
    pub zeta: f64,
    pub snr: f64,
    pub gamma: f64,
    pub k: usize,
    pub config_hash: String,
    pub schedule_id: String,
    pub code_version: String,
}

impl RowStamp {
    pub fn row(
        &self,
        n: usize,
        p: usize,
        epoch: Option<usize>,
        seed_tuple: &str,
        metric: &str,
        value: f64,
    ) -> Row {
        Row {
            experiment_id: self.experiment_id.clone(),
            model: self.model.clone(),
            d: self.d,
            n,
            p,
            r: self.r,
            eta: self.eta,
            zeta: self.zeta,
            snr: self.snr,
            gamma: self.gamma,
            k: self.k,
            epoch,
            seed_tuple: seed_tuple.to_string(),
            metric: metric.to_string(),
            value,
            config_hash: self.config_hash.clone(),
            schedule_id: self.schedule_id.clone(),
            code_version: self.code_version.clone(),
        }
    }
}

/// Serialize rows (with header) into a byte buffer; the sweep writer owns
/// file placement so cells can be appended atomically with their marker.
pub fn rows_to_bytes(rows: &[Row], with_header: bool) -> crate::Result<Vec<u8>> {
    let mut wtr = csv::WriterBuilder::new()
        .has_headers(with_header)
        .from_writer(Vec::new());
    for row in rows {
        wtr.serialize(row)?;
    }
    Ok(wtr
        .into_inner()
        .map_err(|e| crate::Error::Config(format!("csv buffer: {e}")))?)
}

/// Read all rows of a result CSV.
pub fn read_rows(path: &std::path::Path) -> crate::Result<Vec<Row>> {
    let mut rdr = csv::Reader::from_path(path)
        .map_err(|e| crate::Error::Config(format!("open {}: {e}", path.display())))?;
    let mut out = Vec::new();
    for rec in rdr.deserialize() {
        out.push(rec?);
    }
    Ok(out)
}

/// Pull a per-cell aggregate profile (metric__mean, metric__stderr) for one
/// metric out of a result CSV, ordered by N ascending. Cells sharing N are
/// averaged (distinct P/D rows should be filtered by the caller).
pub fn profile_from_rows(rows: &[Row], metric: &str) -> Vec<(usize, f64, f64)> {
    use std::collections::BTreeMap;
    let mean_key = format!("{metric}__mean");
    let se_key = format!("{metric}__stderr");
    let mut means: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    let mut ses: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for row in rows {
        if row.metric == mean_key {
            means.entry(row.n).or_default().push(row.value);
        } else if row.metric == se_key {
            ses.entry(row.n).or_default().push(row.value);
        }
    }
    means
        .into_iter()
        .map(|(n, ms)| {
            let m = ms.iter().sum::<f64>() / ms.len() as f64;
            let s = ses
                .get(&n)
                .map(|v| v.iter().sum::<f64>() / v.len() as f64)
                .unwrap_or(0.0);
            (n, m, s)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stamp() -> RowStamp {
        RowStamp {
            experiment_id: "e".into(),
            model: "rf".into(),
            d: 10,
            r: 0.5,
            eta: 0.5,
            zeta: 0.25,
            snr: f64::INFINITY,
            gamma: 0.0,
            k: 1,
            config_hash: "h".into(),
            schedule_id: "s".into(),
            code_version: code_version(),
        }
    }

    #[test]
    fn header_and_infinity_roundtrip() {
        let rows = vec![stamp().row(5, 100, None, "1:0:0", "loss_mc", 1.25)];
        let bytes = rows_to_bytes(&rows, true).unwrap();
        let text = String::from_utf8(bytes).unwrap();
        assert!(text.starts_with("experiment_id,model,d,n,p,r,eta,zeta,snr,"));
        assert!(text.contains(",inf,"));
        let tmp = tempfile::NamedTempFile::new().unwrap();
        std::fs::write(tmp.path(), text).unwrap();
        let back = read_rows(tmp.path()).unwrap();
        assert_eq!(back.len(), 1);
        assert!(back[0].snr.is_infinite());
        assert_eq!(back[0].epoch, None);
        assert_eq!(back[0].value, 1.25);
    }

    #[test]
    fn profile_extraction_orders_by_n() {
        let s = stamp();
        let rows = vec![
            s.row(20, 100, None, "agg", "loss_ge__mean", 2.0),
            s.row(20, 100, None, "agg", "loss_ge__stderr", 0.2),
            s.row(5, 100, None, "agg", "loss_ge__mean", 1.0),
            s.row(5, 100, None, "agg", "loss_ge__stderr", 0.1),
        ];
        let prof = profile_from_rows(&rows, "loss_ge");
        assert_eq!(prof.len(), 2);
        assert_eq!(prof[0], (5, 1.0, 0.1));
        assert_eq!(prof[1], (20, 2.0, 0.2));
    }
}
