use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::driver::Pad;
use crate::world::InteractionMatrix;

/// One agent's turn. Field order is the serialized key order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: u64,
    pub agent: String,
    pub place: String,
    pub observation: String,
    pub driver: f64,
    /// `[P, A, D]`
    pub emotion: [f64; 3],
    pub thought: String,
    /// As logged: filtered actions carry the filter marker.
    pub action: String,
    pub filtered: bool,
    pub outcome: String,
    pub resources: BTreeMap<String, i64>,
    pub faults: Vec<String>,
}

impl StepRecord {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("step records always serialize")
    }
}

/// Per-step series for every agent and area.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsSeries {
    pub steps: u64,
    pub agents: Vec<String>,
    pub areas: Vec<String>,
    pub driver: BTreeMap<String, Vec<f64>>,
    pub pad: BTreeMap<String, Vec<[f64; 3]>>,
    pub resources: BTreeMap<String, Vec<i64>>,
    pub topic: BTreeMap<String, Vec<f64>>,
    pub interaction_matrix: InteractionMatrix,
}

impl MetricsSeries {
    pub fn new(agents: &[String], areas: &[String], matrix: InteractionMatrix) -> Self {
        Self {
            steps: 0,
            agents: agents.to_vec(),
            areas: areas.to_vec(),
            driver: agents.iter().map(|a| (a.clone(), Vec::new())).collect(),
            pad: agents.iter().map(|a| (a.clone(), Vec::new())).collect(),
            resources: agents.iter().map(|a| (a.clone(), Vec::new())).collect(),
            topic: areas.iter().map(|a| (a.clone(), Vec::new())).collect(),
            interaction_matrix: matrix,
        }
    }

    /// Appends one completed step.
    pub fn push_step(
        &mut self,
        drivers: &BTreeMap<String, f64>,
        pads: &BTreeMap<String, Pad>,
        balances: &BTreeMap<String, i64>,
        topics: &BTreeMap<String, f64>,
        matrix: InteractionMatrix,
    ) {
        for a in &self.agents {
            let d = drivers.get(a).copied().unwrap_or_default();
            let p = pads.get(a).copied().unwrap_or_default();
            let r = balances.get(a).copied().unwrap_or_default();
            self.driver.entry(a.clone()).or_default().push(d);
            self.pad.entry(a.clone()).or_default().push(p.as_array());
            self.resources.entry(a.clone()).or_default().push(r);
        }
        for area in &self.areas {
            let t = topics.get(area).copied().unwrap_or_default();
            self.topic.entry(area.clone()).or_default().push(t);
        }
        self.interaction_matrix = matrix;
        self.steps += 1;
    }

    /// Long-format CSV: `step,entity,series,value`. Per step: every agent's
    /// driver, pleasure, arousal, dominance and resource, then every area's topic.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,entity,series,value\n");
        for s in 0..self.steps as usize {
            let step = s + 1;
            for a in &self.agents {
                let pad = self.pad[a][s];
                out.push_str(&format!("{step},{a},driver,{}\n", self.driver[a][s]));
                out.push_str(&format!("{step},{a},pleasure,{}\n", pad[0]));
                out.push_str(&format!("{step},{a},arousal,{}\n", pad[1]));
                out.push_str(&format!("{step},{a},dominance,{}\n", pad[2]));
                out.push_str(&format!("{step},{a},resource,{}\n", self.resources[a][s]));
            }
            for area in &self.areas {
                out.push_str(&format!("{step},{area},topic,{}\n", self.topic[area][s]));
            }
        }
        out
    }
}

/// Human-readable rendering of one step's records.
pub fn render_transcript_step(step: u64, resource_line: &str, records: &[StepRecord]) -> String {
    let mut out = format!("Time step: {step}\n\n");
    match resource_line.split_once(": ") {
        Some((label, rest)) => out.push_str(&format!("{label}:\n\n{rest}\n\n")),
        None => out.push_str(&format!("{resource_line}\n\n")),
    }
    for r in records {
        out.push_str(&format!(
            "Role: {}\n\nPlace: {}\n\nObservation: {}\n\nDriver: {}\n\nEmotion: [{} {} {}]\n\nThought: {}\n\nAction: {}\n\n",
            r.agent, r.place, r.observation, r.driver, r.emotion[0], r.emotion[1], r.emotion[2], r.thought, r.action
        ));
    }
    out
}
