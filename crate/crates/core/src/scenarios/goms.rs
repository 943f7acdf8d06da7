//! Keystroke-level operator counts for the gas-payment workflows.

use std::fmt;

use serde::Serialize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum GomsOp {
    /// Mental: perceive, decide, recall.
    M,
    /// Physical: click, navigate, submit.
    P,
    /// Wait on system latency.
    W,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum WorkflowLabel {
    EoaRecovery,
    PoaSteadyState,
    AoaInit,
    AoaSteadyState,
    AoaTopUp,
}

impl fmt::Display for WorkflowLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(&format!("{self:?}"))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct WorkflowModel {
    pub label: WorkflowLabel,
    pub steps: Vec<(GomsOp, &'static str)>,
}

impl WorkflowModel {
    pub fn operators(&self) -> impl Iterator<Item = GomsOp> + '_ {
        self.steps.iter().map(|(op, _)| *op)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct GomsCount {
    pub m: u32,
    pub p: u32,
    pub w: u32,
    pub total: u32,
}

impl fmt::Display for GomsCount {
    /// `4M + 4P + 1W = 9`, omitting zero terms.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let terms: Vec<String> = [(self.m, "M"), (self.p, "P"), (self.w, "W")]
            .iter()
            .filter(|(n, _)| *n > 0)
            .map(|(n, s)| format!("{n}{s}"))
            .collect();
        if terms.is_empty() {
            write!(f, "0")
        } else {
            write!(f, "{} = {}", terms.join(" + "), self.total)
        }
    }
}

pub fn goms_count(operators: impl IntoIterator<Item = GomsOp>) -> GomsCount {
    let mut c = GomsCount::default();
    for op in operators {
        match op {
            GomsOp::M => c.m += 1,
            GomsOp::P => c.p += 1,
            GomsOp::W => c.w += 1,
        }
        c.total += 1;
    }
    c
}

/// The five workflow models in display order.
pub fn workflow_models() -> Vec<WorkflowModel> {
    use GomsOp::*;
    vec![
        WorkflowModel {
            label: WorkflowLabel::EoaRecovery,
            steps: vec![
                (M, "notice the out-of-gas failure"),
                (M, "pick bridge, swap or purchase"),
                (M, "choose a provider"),
                (P, "open the provider"),
                (M, "work out how much ETH to get"),
                (P, "run the swap or bridge"),
                (W, "wait for it to land"),
                (P, "go back to the dApp"),
                (P, "resend the transaction"),
            ],
        },
        WorkflowModel {
            label: WorkflowLabel::PoaSteadyState,
            steps: vec![
                (M, "read the transaction prompt"),
                (M, "choose a sponsoring service"),
                (P, "set up the sponsorship request"),
                (P, "sign and send through the service"),
            ],
        },
        WorkflowModel {
            label: WorkflowLabel::AoaInit,
            steps: vec![
                (M, "choose a community"),
                (P, "mint the Gas Card"),
                (W, "wait for the mint"),
                (P, "fund the card with xPNTs"),
            ],
        },
        WorkflowModel {
            label: WorkflowLabel::AoaSteadyState,
            steps: vec![(M, "read the transaction prompt"), (P, "confirm")],
        },
        WorkflowModel {
            label: WorkflowLabel::AoaTopUp,
            steps: vec![(M, "notice the low balance"), (P, "top up xPNTs")],
        },
    ]
}

pub fn model(label: WorkflowLabel) -> WorkflowModel {
    workflow_models().into_iter().find(|m| m.label == label).expect("every label has a model")
}

/// Fractional reduction in operator count going from `from` to `to`.
pub fn reduction(from: GomsCount, to: GomsCount) -> f64 {
    1.0 - f64::from(to.total) / f64::from(from.total)
}

/// Text table of all models plus the two steady-state reductions.
pub fn render_table() -> String {
    let mut out = String::from("workflow          M  P  W  total  operators\n");
    for m in workflow_models() {
        let c = goms_count(m.operators());
        out.push_str(&format!("{:<16} {:>2} {:>2} {:>2} {:>6}  {}\n", m.label.to_string(), c.m, c.p, c.w, c.total, c));
    }
    let steady = goms_count(model(WorkflowLabel::AoaSteadyState).operators());
    let poa = goms_count(model(WorkflowLabel::PoaSteadyState).operators());
    let eoa = goms_count(model(WorkflowLabel::EoaRecovery).operators());
    out.push_str(&format!(
        "\nreduction AoaSteadyState vs PoaSteadyState: {:.0}%\n",
        reduction(poa, steady) * 100.0
    ));
    out.push_str(&format!("reduction AoaSteadyState vs EoaRecovery: {:.0}%\n", reduction(eoa, steady) * 100.0));
    out
}
