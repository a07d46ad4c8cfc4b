use super::MetricRow;
use crate::config::CoreConfig;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};

/// Rows of a matrix run together with the inputs that produced them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatrixReport {
    pub seed: u64,
    pub configs: Vec<CoreConfig>,
    pub rows: Vec<MetricRow>,
}

impl MatrixReport {
    /// Rows for one benchmark/variant at a given point label.
    pub fn find(&self, bench: &str, variant: &str, point: &str) -> Vec<&MetricRow> {
        self.rows.iter().filter(|r| r.benchmark == bench && r.variant == variant && r.point == point).collect()
    }
}

pub fn write_csv<W: Write>(rows: &[MetricRow], out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: Read>(input: R) -> Result<Vec<MetricRow>, csv::Error> {
    csv::Reader::from_reader(input).deserialize().collect()
}

pub fn write_json<W: Write>(report: &MatrixReport, out: W) -> serde_json::Result<()> {
    serde_json::to_writer_pretty(out, report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(point: &str, speedup: f64) -> MetricRow {
        MetricRow {
            benchmark: "saxpy".into(),
            variant: "full".into(),
            w: 8,
            t: 16,
            p: 3,
            r: 3,
            c: 8,
            point: point.into(),
            cycles: 1234.0,
            instr_total: 99.0,
            instr_loop: 0.0,
            instr_pred: 0.0,
            instr_mem: 3.0,
            instr_comp: 80.0,
            flops: 1280.0,
            utilization: 0.1 + 0.2,
            speedup,
            instr_reduction: 1.0 / 3.0,
        }
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let rows = vec![row("4", 7.123456789012345), row("mean", f64::MIN_POSITIVE)];
        let mut buf = Vec::new();
        write_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with(
            "benchmark,variant,W,T,P,R,C,point,cycles,instr_total,instr_loop,instr_pred,instr_mem,instr_comp,flops,utilization,speedup,instr_reduction\n"
        ));
        assert_eq!(read_csv(buf.as_slice()).unwrap(), rows);
    }
}
