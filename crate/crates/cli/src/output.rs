//! CSV writers. Every file opens with a `#schema_version=N` line.

use std::path::Path;

use efe_core::envs::EpisodeLog;
use efe_core::modelfile::SCHEMA_VERSION;
use efe_core::planner::PlannerResult;
use efe_core::suite::CheckRow;

use crate::Result;

pub struct Csv {
    writer: csv::Writer<Vec<u8>>,
}

impl Csv {
    pub fn new(header: &[&str]) -> Self {
        let mut buf = format!("#schema_version={SCHEMA_VERSION}\n").into_bytes();
        buf.reserve(1024);
        let mut writer = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(buf);
        writer.write_record(header).expect("writes to memory");
        Self { writer }
    }

    pub fn row(&mut self, fields: &[String]) {
        self.writer.write_record(fields).expect("writes to memory");
    }

    pub fn into_string(self) -> String {
        let bytes = self.writer.into_inner().expect("writes to memory");
        String::from_utf8(bytes).expect("fields are utf-8")
    }

    pub fn write(self, path: &Path) -> Result<()> {
        std::fs::write(path, self.into_string())?;
        Ok(())
    }
}

pub fn actions_field(actions: &[usize], labels: &[String]) -> String {
    actions
        .iter()
        .map(|&a| labels.get(a).cloned().unwrap_or_else(|| a.to_string()))
        .collect::<Vec<_>>()
        .join("-")
}

pub fn verify_csv(rows: &[CheckRow]) -> Csv {
    let mut csv = Csv::new(&["check_name", "seed", "residual", "tolerance", "pass"]);
    for r in rows {
        csv.row(&[
            r.check_name.clone(),
            r.seed.to_string(),
            format!("{:e}", r.residual),
            format!("{:e}", r.tolerance),
            r.pass.to_string(),
        ]);
    }
    csv
}

pub fn plan_csv(plan: &PlannerResult, labels: &[String]) -> Csv {
    let mut csv = Csv::new(&[
        "policy_id",
        "actions",
        "risk",
        "ambiguity",
        "novelty",
        "G",
        "P",
        "C",
        "q_star",
    ]);
    for u in plan.ranking() {
        let e = &plan.efe.per_policy[u];
        csv.row(&[
            u.to_string(),
            actions_field(&plan.policies[u].actions, labels),
            e.risk.to_string(),
            e.ambiguity.to_string(),
            e.novelty.to_string(),
            plan.g_mode[u].to_string(),
            plan.prior_cost[u].to_string(),
            plan.complexity[u].to_string(),
            plan.policy_posterior.prob(u).to_string(),
        ]);
    }
    csv
}

pub fn episode_csv(log: &EpisodeLog, labels: &[String]) -> Csv {
    let mut csv = Csv::new(&[
        "step",
        "chosen_policy",
        "action",
        "observation",
        "true_state",
        "q_chosen",
        "f_value",
        "theta_belief",
    ]);
    for s in &log.steps {
        let q = s
            .policies
            .iter()
            .position(|p| *p == s.chosen_policy)
            .map_or(f64::NAN, |i| s.policy_posterior[i]);
        let theta = s
            .theta_belief
            .iter()
            .map(f64::to_string)
            .collect::<Vec<_>>()
            .join(";");
        csv.row(&[
            s.step.to_string(),
            actions_field(&s.chosen_policy, labels),
            s.action.to_string(),
            s.observation.to_string(),
            s.true_state.to_string(),
            q.to_string(),
            s.f_value.to_string(),
            theta,
        ]);
    }
    csv
}

pub fn summary_csv(logs: &[EpisodeLog]) -> Csv {
    let mut csv = Csv::new(&[
        "seed",
        "true_theta",
        "initial_state",
        "final_state",
        "steps",
        "reward_proxy",
        "reached_preferred",
    ]);
    for l in logs {
        csv.row(&[
            l.seed.to_string(),
            l.true_theta.to_string(),
            l.initial_state.to_string(),
            l.final_state.to_string(),
            l.steps.len().to_string(),
            l.reward_proxy.to_string(),
            l.reached_preferred.to_string(),
        ]);
    }
    csv
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_carries_the_schema_version() {
        let mut csv = Csv::new(&["a", "b"]);
        csv.row(&["x,y".into(), "z".into()]);
        assert_eq!(csv.into_string(), "#schema_version=1\na,b\n\"x,y\",z\n");
    }

    #[test]
    fn actions_use_labels_when_present() {
        let labels = vec!["up".to_string(), "down".to_string()];
        assert_eq!(actions_field(&[1, 0], &labels), "down-up");
        assert_eq!(actions_field(&[3], &labels), "3");
    }
}
