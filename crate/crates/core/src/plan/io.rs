use super::{MemoryPlan, PlanError};

/// Pretty JSON with a trailing newline.
pub fn save_plan(plan: &MemoryPlan) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(plan).expect("plan serialization cannot fail");
    out.push(b'\n');
    out
}

pub fn load_plan(bytes: &[u8]) -> Result<MemoryPlan, PlanError> {
    serde_json::from_slice(bytes).map_err(|e| PlanError::Parse(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plan::{ExecutionSequence, Provenance, ResidentTimeline};

    #[test]
    fn round_trip_and_missing_field() {
        let plan = MemoryPlan {
            sequence: ExecutionSequence::default(),
            addresses: [("x".to_string(), 3)].into(),
            peak_mem: 7,
            timeline: ResidentTimeline::default(),
            added_control_edges: vec![],
            provenance: Provenance { mode: "split".into(), ..Default::default() },
        };
        let bytes = save_plan(&plan);
        assert_eq!(load_plan(&bytes).unwrap(), plan);
        let text = String::from_utf8(bytes).unwrap().replace("\"peak_mem\"", "\"peak\"");
        assert!(matches!(load_plan(text.as_bytes()), Err(PlanError::Parse(m)) if m.contains("peak_mem")));
    }
}
