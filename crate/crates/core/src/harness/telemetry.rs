use std::fmt::Write as _;

use nalgebra::DVector;

/// One control-loop step.
#[derive(Debug, Clone, PartialEq)]
pub struct TelemetryRecord {
    pub t: f64,
    pub q: DVector<f64>,
    pub qdot: DVector<f64>,
    pub x: DVector<f64>,
    pub x_hat: DVector<f64>,
    pub e: DVector<f64>,
    pub x_tilde: DVector<f64>,
    pub x_tilde_dot: DVector<f64>,
    pub r_x: DVector<f64>,
    pub norm_e: f64,
    pub norm_xtilde: f64,
    pub norm_xtildedot: f64,
    pub rank: usize,
    pub min_sv: f64,
    pub clamped: bool,
    pub disturbance: u64,
    /// Weight vector after adaptation, when recording is enabled.
    pub weights: Option<DVector<f64>>,
}

pub fn csv_header(n: usize, m: usize) -> String {
    let mut cols = vec!["t".to_string()];
    let mut group = |name: &str, len: usize| cols.extend((1..=len).map(|i| format!("{name}{i}")));
    group("q", n);
    group("qdot", n);
    group("x", m);
    group("xhat", m);
    group("e", m);
    cols.extend(
        ["norm_e", "norm_xtilde", "norm_xtildedot", "rank", "min_sv", "clamped", "disturbance"]
            .iter()
            .map(|s| s.to_string()),
    );
    cols.join(",")
}

fn push_vec(line: &mut String, v: &DVector<f64>) {
    for x in v.iter() {
        let _ = write!(line, ",{x}");
    }
}

pub fn csv_row(r: &TelemetryRecord) -> String {
    let mut line = format!("{}", r.t);
    for v in [&r.q, &r.qdot, &r.x, &r.x_hat, &r.e] {
        push_vec(&mut line, v);
    }
    let _ = write!(
        line,
        ",{},{},{},{},{},{},{}",
        r.norm_e,
        r.norm_xtilde,
        r.norm_xtildedot,
        r.rank,
        r.min_sv,
        u8::from(r.clamped),
        r.disturbance
    );
    line
}

/// Full CSV document, header first. Empty telemetry yields the header only.
pub fn telemetry_csv(records: &[TelemetryRecord], n: usize, m: usize) -> String {
    let mut out = csv_header(n, m);
    out.push('\n');
    for r in records {
        out.push_str(&csv_row(r));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_layout() {
        assert_eq!(
            csv_header(2, 2),
            "t,q1,q2,qdot1,qdot2,x1,x2,xhat1,xhat2,e1,e2,norm_e,norm_xtilde,norm_xtildedot,rank,min_sv,clamped,disturbance"
        );
    }

    #[test]
    fn row_has_header_width() {
        let v = |n| DVector::from_element(n, 0.5);
        let r = TelemetryRecord {
            t: 0.05,
            q: v(6),
            qdot: v(6),
            x: v(6),
            x_hat: v(6),
            e: v(6),
            x_tilde: v(6),
            x_tilde_dot: v(6),
            r_x: v(6),
            norm_e: 1.0,
            norm_xtilde: 2.0,
            norm_xtildedot: 3.0,
            rank: 6,
            min_sv: 0.1,
            clamped: true,
            disturbance: 5,
            weights: None,
        };
        let row = csv_row(&r);
        assert_eq!(row.split(',').count(), csv_header(6, 6).split(',').count());
        assert!(row.ends_with(",1,5"));
    }
}
