//! Deterministic serialization of run artifacts.
//!
//! Every file embeds the tool version, model fingerprint, mode and seed,
//! and reruns with identical configuration produce byte-identical output:
//! floats are printed with 17 significant digits, JSON field order is
//! fixed by the struct definitions.

use serde::Serialize;

use crate::asymptotics::{SmoothnessReport, TheoremReport};
use crate::occupation::OccupationSeq;
use crate::oracle::McEstimate;
use crate::renewal::ReturnDist;

/// Provenance block shared by all artifacts.
#[derive(Debug, Clone, Serialize)]
pub struct RunMeta {
    pub tool_version: String,
    pub model_fingerprint: String,
    pub mode: String,
    pub method: String,
    pub n_max: usize,
    pub grid: Option<Vec<usize>>,
    pub seed: Option<u64>,
}

impl RunMeta {
    fn header_lines(&self, title: &str) -> String {
        let mut s = String::new();
        s.push_str(&format!("# {title}\n"));
        s.push_str(&format!("# version: {}\n", self.tool_version));
        s.push_str(&format!("# model: {}\n", self.model_fingerprint));
        s.push_str(&format!("# method: {}\n", self.method));
        s.push_str(&format!("# mode: {}\n", self.mode));
        if let Some(grid) = &self.grid {
            let dims: Vec<String> = grid.iter().map(|m| m.to_string()).collect();
            s.push_str(&format!("# grid: {}\n", dims.join(",")));
        }
        if let Some(seed) = self.seed {
            s.push_str(&format!("# seed: {seed}\n"));
        }
        s
    }
}

/// 17 significant digits; enough to round-trip any f64.
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn occupation_csv(u: &OccupationSeq, meta: &RunMeta) -> String {
    let mut s = meta.header_lines("occupation sequence u_n = P{S_n = 0}");
    s.push_str("n,u,u_error\n");
    for n in 0..=u.n_max() {
        s.push_str(&format!("{n},{},{}\n", fmt17(u.value(n)), fmt17(u.error(n))));
    }
    s
}

pub fn return_csv(p: &ReturnDist, meta: &RunMeta) -> String {
    let mut s = meta.header_lines("first-return distribution p_n = P{tau = n}");
    s.push_str("n,p,cumulative\n");
    let cum = p.cumulative();
    for n in 0..=p.n_max() {
        s.push_str(&format!("{n},{},{}\n", fmt17(p.value(n)), fmt17(cum[n])));
    }
    s
}

/// Companion plot table for the verification report.
pub fn plot_csv(report: &TheoremReport, meta: &RunMeta) -> String {
    let mut s = meta.header_lines("asymptotic diagnostics ladder");
    s.push_str("n,u,p,cn_un,ratio,predicted_p\n");
    for row in &report.ladder {
        s.push_str(&format!(
            "{},{},{},{},{},{}\n",
            row.n,
            fmt17(row.u),
            fmt17(row.p),
            fmt17(row.cn_un),
            fmt17(row.ratio),
            fmt17(row.predicted_p)
        ));
    }
    s
}

pub fn mc_csv(est: &McEstimate, meta: &RunMeta) -> String {
    let mut s = meta.header_lines("Monte Carlo estimates with Wilson 99% intervals");
    s.push_str("n,u_hat,u_lo,u_hi,p_hat,p_lo,p_hi\n");
    for n in 1..=est.n_max {
        let (ulo, uhi) = est.u_interval(n);
        let (plo, phi) = est.p_interval(n);
        s.push_str(&format!(
            "{n},{},{},{},{},{},{}\n",
            fmt17(est.u_hat(n)),
            fmt17(ulo),
            fmt17(uhi),
            fmt17(est.p_hat(n)),
            fmt17(plo),
            fmt17(phi)
        ));
    }
    s
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

/// `compute` artifact: escape probability and occupation mass breakdown.
#[derive(Debug, Clone, Serialize)]
pub struct ComputeSummary {
    pub meta: RunMeta,
    pub p: f64,
    pub p_interval: Interval,
    pub defect: f64,
    pub u_partial: f64,
    pub u_tail: f64,
    pub u_total: f64,
    pub u_bound: f64,
    pub alias_bound_at_horizon: f64,
}

/// `verify` artifact: the theorem diagnostics plus pass/fail wiring.
#[derive(Debug, Clone, Serialize)]
pub struct VerifySummary {
    pub meta: RunMeta,
    pub tolerance_ratio: f64,
    pub tolerance_constant: f64,
    pub ladder_guard: f64,
    pub clean_horizon: usize,
    pub pass_ratio: bool,
    pub pass_constant: bool,
    pub pass: bool,
    pub smoothness: SmoothnessReport,
    pub report: TheoremReport,
}

/// One compared quantity in the oracle matrix; exact values are carried
/// as `num/den` strings so replays can compare bit for bit.
#[derive(Debug, Clone, Serialize)]
pub struct OracleRow {
    pub n: usize,
    pub quantity: String,
    pub enumeration: Option<String>,
    pub taboo: Option<String>,
    pub renewal: Option<String>,
    pub exact_agree: bool,
    pub value: f64,
    pub mc_estimate: Option<f64>,
    pub mc_interval: Option<Interval>,
    pub mc_contains: Option<bool>,
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleSummary {
    pub meta: RunMeta,
    pub trials: u64,
    pub interval_method: String,
    pub exact_chains_agree: bool,
    pub mc_containment: f64,
    pub mc_pass: bool,
    pub pass: bool,
    pub rows: Vec<OracleRow>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulateSummary {
    pub meta: RunMeta,
    pub trials: u64,
    pub interval_method: String,
    pub n_max: usize,
}

/// Canonical JSON rendering: pretty, fixed field order, trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report serialization");
    s.push('\n');
    s
}

pub fn write_text(path: &std::path::Path, text: &str) -> crate::Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, text)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::occupation::MethodTag;

    fn meta() -> RunMeta {
        RunMeta {
            tool_version: "0.0.test".into(),
            model_fingerprint: "abcd".into(),
            mode: "float".into(),
            method: "convolution".into(),
            n_max: 2,
            grid: Some(vec![65, 65]),
            seed: Some(7),
        }
    }

    #[test]
    fn csv_is_stable_and_has_17_digits() {
        let u = OccupationSeq::from_parts(
            vec![1.0, 0.5, 7.0 / 24.0],
            None,
            None,
            MethodTag::Convolution,
            "abcd".into(),
        );
        let a = occupation_csv(&u, &meta());
        let b = occupation_csv(&u, &meta());
        assert_eq!(a, b);
        assert!(a.contains("2.9166666666666669e-1"), "{a}");
        assert!(a.contains("# grid: 65,65"));
        assert!(a.contains("# seed: 7"));
    }

    #[test]
    fn json_is_deterministic() {
        let s = ComputeSummary {
            meta: meta(),
            p: 0.4,
            p_interval: Interval { lo: 0.39, hi: 0.41 },
            defect: 0.6,
            u_partial: 0.66,
            u_tail: 0.006,
            u_total: 0.666,
            u_bound: 1e-9,
            alias_bound_at_horizon: 0.0,
        };
        assert_eq!(to_json(&s), to_json(&s));
        assert!(to_json(&s).ends_with('\n'));
    }
}
