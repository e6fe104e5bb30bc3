//! CSV output: comma-separated, header row, floats to 9 significant digits.

use std::fmt::Write as _;

use kbrn::analysis::{GradientTrace, ShapeRow};
use kbrn::training::TrainHistory;

pub const HISTORY_HEADER: &str = "epoch,train_loss,train_acc,val_acc,seconds";
pub const TRACE_HEADER: &str = "t,grad_norm,jacobian_norm,max_slope";
pub const SHAPES_HEADER: &str = "unit,input,output,derivative";
pub const SWEEP_HEADER: &str = "T,cell,final_test_acc,epochs_to_95,seconds";

/// `printf("%.9g")`: 9 significant digits, trailing zeros dropped, exponent
/// form below 1e-4 or from 1e9 up.
pub fn fmt_g9(x: f64) -> String {
    if x.is_nan() {
        return "NaN".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    let sci = format!("{:.8e}", x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..9).contains(&exp) {
        let m = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        return format!("{m}e{sign}{:02}", exp.abs());
    }
    let decimals = (8 - exp).max(0) as usize;
    trim_zeros(&format!("{:.*}", decimals, x)).to_string()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// One row per epoch. The `seconds` column stays empty unless `timings`
/// is set, keeping the body reproducible.
pub fn history_csv(h: &TrainHistory, timings: bool) -> String {
    let mut out = format!("{HISTORY_HEADER}\n");
    for (r, s) in h.records.iter().zip(&h.seconds) {
        let secs = if timings { fmt_g9(*s) } else { String::new() };
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.epoch,
            fmt_g9(r.train_loss),
            fmt_g9(r.train_acc),
            fmt_g9(r.val_acc),
            secs
        );
    }
    out
}

pub fn trace_csv(t: &GradientTrace) -> String {
    let mut out = format!("{TRACE_HEADER}\n");
    for s in &t.steps {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            s.t,
            fmt_g9(s.grad_norm),
            fmt_g9(s.jacobian_norm),
            fmt_g9(s.max_slope)
        );
    }
    out
}

pub fn shapes_csv(rows: &[ShapeRow]) -> String {
    let mut out = format!("{SHAPES_HEADER}\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            r.unit,
            fmt_g9(r.input),
            fmt_g9(r.output),
            fmt_g9(r.derivative)
        );
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub seq_len: usize,
    pub cell: kbrn::cells::CellKind,
    /// NaN when the run diverged.
    pub final_test_acc: f64,
    /// −1 when the threshold was never reached.
    pub epochs_to_95: i64,
    pub seconds: f64,
}

pub fn sweep_csv(rows: &[SweepRow], timings: bool) -> String {
    let mut out = format!("{SWEEP_HEADER}\n");
    for r in rows {
        let secs = if timings { fmt_g9(r.seconds) } else { String::new() };
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.seq_len,
            r.cell,
            fmt_g9(r.final_test_acc),
            r.epochs_to_95,
            secs
        );
    }
    out
}
