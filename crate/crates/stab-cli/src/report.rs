//! Report structs and the three output encodings (JSON, CSV, text).
//!
//! JSON is the machine interface: field order is fixed by struct
//! declaration order and every float is printed with 17 significant
//! digits, so identical runs produce byte-identical documents. CSV
//! flattens the same data for spreadsheet use; text is a short human
//! summary.

use std::io;

use serde::Serialize;

/// Serializes `f64` as `{:.16e}` (17 significant digits), which
/// round-trips exactly and keeps output independent of the shortest
/// representation heuristic. Everything else uses the compact defaults.
pub struct SigFigFormatter;

impl serde_json::ser::Formatter for SigFigFormatter {
    fn write_f64<W>(&mut self, writer: &mut W, value: f64) -> io::Result<()>
    where
        W: ?Sized + io::Write,
    {
        write!(writer, "{value:.16e}")
    }
}

/// Renders any report as a single JSON line with a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, SigFigFormatter);
    value
        .serialize(&mut ser)
        .expect("report types serialize without error");
    buf.push(b'\n');
    String::from_utf8(buf).expect("serialized report is UTF-8")
}

/// The float encoding shared by JSON and CSV output.
pub fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

#[derive(Serialize)]
pub struct ComplexOut {
    pub re: f64,
    pub im: f64,
}

#[derive(Serialize)]
pub struct EigenSummaryOut {
    pub sum_re: f64,
    pub prod_re: f64,
}

#[derive(Serialize)]
pub struct AnalyzeReport {
    pub label: String,
    pub epsilon: f64,
    pub nodes: usize,
    pub t1: f64,
    pub t2: f64,
    pub quad_error: f64,
    pub verdict: &'static str,
    pub criterion: &'static str,
    pub status: &'static str,
    pub singular_point: &'static str,
    pub back_solved: Option<(f64, f64)>,
    pub eigen_summary: EigenSummaryOut,
    pub sweep_derived: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepBlock>,
}

/// Sweep summary embedded in an analyze report when the automatic
/// refinement ran.
#[derive(Serialize)]
pub struct SweepBlock {
    pub eps_min: f64,
    pub eps_max: f64,
    pub verdict: &'static str,
    pub samples: Vec<SweepSampleOut>,
}

impl AnalyzeReport {
    pub fn to_csv(&self) -> String {
        let (a, b) = match self.back_solved {
            Some((a, b)) => (fmt17(a), fmt17(b)),
            None => (String::new(), String::new()),
        };
        let sweep_verdict = self.sweep.as_ref().map_or("", |s| s.verdict);
        let mut out = String::from(
            "label,epsilon,nodes,t1,t2,quad_error,verdict,criterion,status,\
             singular_point,back_a,back_b,sum_re,prod_re,sweep_derived,sweep_verdict\n",
        );
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            self.label,
            fmt17(self.epsilon),
            self.nodes,
            fmt17(self.t1),
            fmt17(self.t2),
            fmt17(self.quad_error),
            self.verdict,
            self.criterion,
            self.status,
            self.singular_point,
            a,
            b,
            fmt17(self.eigen_summary.sum_re),
            fmt17(self.eigen_summary.prod_re),
            self.sweep_derived,
            sweep_verdict,
        ));
        out
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("system: {}\n", self.label));
        out.push_str(&format!(
            "epsilon = {:.6e}, nodes = {}\n",
            self.epsilon, self.nodes
        ));
        out.push_str(&format!(
            "t1 = {:.6e}, t2 = {:.6e} (quadrature error ~ {:.1e})\n",
            self.t1, self.t2, self.quad_error
        ));
        out.push_str(&format!(
            "criterion {} -> {} (final status: {})\n",
            self.criterion, self.verdict, self.status
        ));
        match self.back_solved {
            Some((a, b)) => out.push_str(&format!(
                "singular point: {} with (a, b) = ({:.6}, {:.6})\n",
                self.singular_point, a, b
            )),
            None => out.push_str(&format!("singular point: {}\n", self.singular_point)),
        }
        out.push_str(&format!(
            "eigen summary: sum_re = {:.6e}, prod_re = {:.6e}\n",
            self.eigen_summary.sum_re, self.eigen_summary.prod_re
        ));
        if let Some(sweep) = &self.sweep {
            out.push_str(&format!(
                "refined by sweep over [{:.3e}, {:.3e}]: {}\n",
                sweep.eps_min, sweep.eps_max, sweep.verdict
            ));
        }
        out
    }
}

#[derive(Serialize)]
pub struct LinearizeReport {
    pub label: String,
    pub epsilon: f64,
    pub nodes: usize,
    pub matrix: Vec<Vec<f64>>,
    pub eigenvalues: Vec<ComplexOut>,
    pub jacobian: Vec<Vec<f64>>,
    pub jacobian_step: f64,
    pub diff_norm: f64,
    pub cross_coupling: Vec<usize>,
}

impl LinearizeReport {
    pub fn to_csv(&self) -> String {
        let n = self.matrix.len();
        let mut header = vec!["label".to_string(), "epsilon".into(), "nodes".into()];
        for r in 0..n {
            for c in 0..n {
                header.push(format!("a_{}_{}", r + 1, c + 1));
            }
        }
        for i in 0..n {
            header.push(format!("re_{}", i + 1));
            header.push(format!("im_{}", i + 1));
        }
        for r in 0..n {
            for c in 0..n {
                header.push(format!("j_{}_{}", r + 1, c + 1));
            }
        }
        header.push("jacobian_step".into());
        header.push("diff_norm".into());
        header.push("cross_coupling".into());

        let mut row = vec![self.label.clone(), fmt17(self.epsilon), self.nodes.to_string()];
        for r in &self.matrix {
            row.extend(r.iter().map(|v| fmt17(*v)));
        }
        for ev in &self.eigenvalues {
            row.push(fmt17(ev.re));
            row.push(fmt17(ev.im));
        }
        for r in &self.jacobian {
            row.extend(r.iter().map(|v| fmt17(*v)));
        }
        row.push(fmt17(self.jacobian_step));
        row.push(fmt17(self.diff_norm));
        row.push(
            self.cross_coupling
                .iter()
                .map(|i| i.to_string())
                .collect::<Vec<_>>()
                .join(";"),
        );
        format!("{}\n{}\n", header.join(","), row.join(","))
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("system: {}\n", self.label));
        out.push_str(&format!(
            "epsilon = {:.6e}, nodes = {}\n",
            self.epsilon, self.nodes
        ));
        out.push_str("averaged state matrix A(epsilon):\n");
        for r in &self.matrix {
            let cells: Vec<String> = r.iter().map(|v| format!("{v:>14.6e}")).collect();
            out.push_str(&format!("  [{}]\n", cells.join(", ")));
        }
        out.push_str("eigenvalues:\n");
        for ev in &self.eigenvalues {
            out.push_str(&format!("  {:.6e} {:+.6e}j\n", ev.re, ev.im));
        }
        out.push_str(&format!(
            "finite-difference Jacobian (step {:.1e}):\n",
            self.jacobian_step
        ));
        for r in &self.jacobian {
            let cells: Vec<String> = r.iter().map(|v| format!("{v:>14.6e}")).collect();
            out.push_str(&format!("  [{}]\n", cells.join(", ")));
        }
        out.push_str(&format!("|A - J| (inf norm) = {:.6e}\n", self.diff_norm));
        if !self.cross_coupling.is_empty() {
            let eqs: Vec<String> = self.cross_coupling.iter().map(|i| i.to_string()).collect();
            out.push_str(&format!(
                "cross-coupled equations (planar averages approximate): {}\n",
                eqs.join(", ")
            ));
        }
        out
    }
}

#[derive(Serialize)]
pub struct SweepSampleOut {
    pub epsilon: f64,
    pub eigenvalues: Vec<ComplexOut>,
    pub max_re: f64,
    pub re_tol: f64,
}

#[derive(Serialize)]
pub struct SweepReport {
    pub label: String,
    pub eps_min: f64,
    pub eps_max: f64,
    pub nodes: usize,
    pub verdict: &'static str,
    pub samples: Vec<SweepSampleOut>,
    pub limit_cycle_roots: Vec<f64>,
}

impl SweepReport {
    pub fn to_csv(&self) -> String {
        let n = self.samples.first().map_or(0, |s| s.eigenvalues.len());
        let mut header = vec!["epsilon".to_string()];
        for i in 0..n {
            header.push(format!("re_{}", i + 1));
            header.push(format!("im_{}", i + 1));
        }
        header.push("max_re".into());
        header.push("re_tol".into());
        let mut out = format!("{}\n", header.join(","));
        for s in &self.samples {
            let mut row = vec![fmt17(s.epsilon)];
            for ev in &s.eigenvalues {
                row.push(fmt17(ev.re));
                row.push(fmt17(ev.im));
            }
            row.push(fmt17(s.max_re));
            row.push(fmt17(s.re_tol));
            out.push_str(&format!("{}\n", row.join(",")));
        }
        out.push_str(&format!("# verdict,{}\n", self.verdict));
        for root in &self.limit_cycle_roots {
            out.push_str(&format!("# limit_cycle_root,{}\n", fmt17(*root)));
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("system: {}\n", self.label));
        out.push_str(&format!(
            "sweep over [{:.6e}, {:.6e}] ({} samples)\n",
            self.eps_min,
            self.eps_max,
            self.samples.len()
        ));
        for s in &self.samples {
            out.push_str(&format!(
                "  epsilon = {:.6e}: max Re = {:+.6e} (tol {:.1e})\n",
                s.epsilon, s.max_re, s.re_tol
            ));
        }
        out.push_str(&format!("verdict: {}\n", self.verdict));
        if self.limit_cycle_roots.is_empty() {
            out.push_str("limit-cycle amplitude candidates: none\n");
        } else {
            let roots: Vec<String> = self
                .limit_cycle_roots
                .iter()
                .map(|r| format!("{r:.9}"))
                .collect();
            out.push_str(&format!(
                "limit-cycle amplitude candidates: {}\n",
                roots.join(", ")
            ));
        }
        out
    }
}

#[derive(Serialize)]
pub struct ComparePair {
    pub epsilon: f64,
    pub diff_norm: f64,
}

#[derive(Serialize)]
pub struct CompareJacobianReport {
    pub label: String,
    pub jacobian_step: f64,
    pub nodes: usize,
    pub jacobian: Vec<Vec<f64>>,
    pub eigenvalues: Vec<ComplexOut>,
    pub pairs: Vec<ComparePair>,
    pub slope: Option<f64>,
}

impl CompareJacobianReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epsilon,diff_norm\n");
        for p in &self.pairs {
            out.push_str(&format!("{},{}\n", fmt17(p.epsilon), fmt17(p.diff_norm)));
        }
        match self.slope {
            Some(s) => out.push_str(&format!("# slope,{}\n", fmt17(s))),
            None => out.push_str("# slope,\n"),
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("system: {}\n", self.label));
        out.push_str(&format!(
            "|A(epsilon) - J| against epsilon (Jacobian step {:.1e}):\n",
            self.jacobian_step
        ));
        for p in &self.pairs {
            out.push_str(&format!(
                "  epsilon = {:.6e}: diff = {:.6e}\n",
                p.epsilon, p.diff_norm
            ));
        }
        match self.slope {
            Some(s) => out.push_str(&format!("log-log slope = {s:.4}\n")),
            None => out.push_str("log-log slope: not defined for these samples\n"),
        }
        out
    }
}

#[derive(Serialize)]
pub struct PortraitFile {
    pub file: String,
    pub x0: Vec<f64>,
    pub samples: usize,
    pub diverged: bool,
    pub return_distance: Option<f64>,
}

#[derive(Serialize)]
pub struct PortraitIndex {
    pub label: String,
    pub epsilon: f64,
    pub t_end: f64,
    pub step: f64,
    pub files: Vec<PortraitFile>,
}
