use serde::{Deserialize, Serialize};

/// Process resource usage at one instant (Linux `/proc`; absent elsewhere).
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ResourceSample {
    pub rss_kib: u64,
    pub cpu_secs: f64,
}

pub fn resource_sample() -> Option<ResourceSample> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    let rss_kib = status
        .lines()
        .find_map(|l| l.strip_prefix("VmRSS:"))?
        .split_whitespace()
        .next()?
        .parse()
        .ok()?;
    // Fields 14 and 15 (utime, stime) follow the parenthesised command name.
    let stat = std::fs::read_to_string("/proc/self/stat").ok()?;
    let rest = &stat[stat.rfind(')')? + 2..];
    let fields: Vec<&str> = rest.split_whitespace().collect();
    let ticks: u64 = fields.get(11)?.parse::<u64>().ok()? + fields.get(12)?.parse::<u64>().ok()?;
    Some(ResourceSample { rss_kib, cpu_secs: ticks as f64 / 100.0 })
}

/// Run counters (monotone) and wall-clock latency sums.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub seed: u64,
    pub nodes: usize,
    pub events: u64,
    pub ticks: u64,
    pub records_ingested: u64,
    pub accesses_granted: u64,
    pub accesses_denied: u64,
    pub decryptions_ok: u64,
    pub decryptions_failed: u64,
    /// Decryptions whose accepted result failed the sealed digest check.
    pub forged_accepted: u64,
    pub messages_dropped: u64,
    pub rejected_txs: u64,
    pub transactions: u64,
    pub blocks: u64,
    /// Blocks from end-of-tick sealing, as opposed to consensus rounds.
    pub sealed_blocks: u64,
    pub mining_attempts: u64,
    pub consensus_rounds: u64,
    pub consensus_failures: u64,
    pub granted_secs: f64,
    pub denied_secs: f64,
    pub block_secs: f64,
    pub wall_secs: f64,
    pub resources: Option<ResourceSample>,
}

fn rate(count: u64, secs: f64) -> f64 {
    if secs > 0.0 {
        count as f64 / secs
    } else {
        0.0
    }
}

impl Metrics {
    pub fn attempts_per_block(&self) -> f64 {
        if self.blocks == 0 {
            0.0
        } else {
            self.mining_attempts as f64 / self.blocks as f64
        }
    }

    pub fn granted_tps(&self) -> f64 {
        rate(self.accesses_granted, self.granted_secs)
    }

    pub fn denied_tps(&self) -> f64 {
        rate(self.accesses_denied, self.denied_secs)
    }

    pub fn mean_block_secs(&self) -> f64 {
        if self.sealed_blocks == 0 {
            0.0
        } else {
            self.block_secs / self.sealed_blocks as f64
        }
    }

    /// `(metric, value)` pairs, counters first, then derived rates.
    pub fn rows(&self) -> Vec<(String, String)> {
        let value = serde_json::to_value(self).expect("metrics serialize");
        let mut rows: Vec<(String, String)> = Vec::new();
        for (k, v) in value.as_object().expect("metrics is a struct") {
            match v {
                serde_json::Value::Object(inner) => {
                    rows.extend(inner.iter().map(|(ik, iv)| (format!("{k}.{ik}"), iv.to_string())))
                }
                serde_json::Value::Null => {}
                other => rows.push((k.clone(), other.to_string())),
            }
        }
        rows.push(("attempts_per_block".into(), self.attempts_per_block().to_string()));
        rows.push(("granted_tps".into(), self.granted_tps().to_string()));
        rows.push(("denied_tps".into(), self.denied_tps().to_string()));
        rows.push(("mean_block_secs".into(), self.mean_block_secs().to_string()));
        rows
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["metric", "value"]).expect("in-memory write");
        for (k, v) in self.rows() {
            w.write_record([k, v]).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv of utf-8 is utf-8")
    }

    pub fn to_json(&self) -> serde_json::Value {
        let mut v = serde_json::to_value(self).expect("metrics serialize");
        let obj = v.as_object_mut().expect("metrics is a struct");
        obj.insert("attempts_per_block".into(), self.attempts_per_block().into());
        obj.insert("granted_tps".into(), self.granted_tps().into());
        obj.insert("denied_tps".into(), self.denied_tps().into());
        obj.insert("mean_block_secs".into(), self.mean_block_secs().into());
        v
    }
}
