use std::collections::{BTreeMap, VecDeque};

use masse_core::orchestrator::roles::{check_toolsets, parse_roles, ROLES_JSON};
use masse_core::orchestrator::{
    builtin_roles, classify_failure, register_tools, run_pipeline_with, AgentReply, FailureLabel,
    PipelineConfig, PipelineError, RegistryError, ScriptedBackend, ToolRegistry,
};
use masse_core::protocol::{MessageKind, PipelineState, TraceLog};
use proptest::prelude::*;
use serde_json::{json, Map, Value};

const PROBLEM: &str = include_str!("../data/golden/problem.txt");

#[test]
fn registry_holds_fifteen_tools_and_rejects_duplicates() {
    let mut registry = ToolRegistry::new();
    assert_eq!(register_tools(&mut registry).unwrap(), 15);
    assert_eq!(registry.len(), 15);
    let again = register_tools(&mut registry).unwrap_err();
    assert!(matches!(again, RegistryError::Duplicate(_)));
    assert_eq!(ToolRegistry::builtin().len(), 15);
}

#[test]
fn shipped_toolsets_partition_the_registry() {
    let roles = builtin_roles();
    assert_eq!(roles.len(), 9);
    check_toolsets(roles, &ToolRegistry::builtin()).unwrap();
    let total: usize = roles.iter().map(|r| r.toolset.len()).sum();
    assert_eq!(total, 15);
}

#[test]
fn overlapping_or_partial_toolsets_are_rejected() {
    let registry = ToolRegistry::builtin();
    let mut doc: Value = serde_json::from_str(ROLES_JSON).unwrap();
    let stolen = doc["DesignEngineer"]["toolset"][0].clone();
    doc["SafetyManager"]["toolset"]
        .as_array_mut()
        .unwrap()
        .push(stolen);
    let roles = parse_roles(&doc.to_string()).unwrap();
    assert!(check_toolsets(&roles, &registry).is_err());

    let mut doc: Value = serde_json::from_str(ROLES_JSON).unwrap();
    doc["SafetyManager"]["toolset"] = json!([]);
    let roles = parse_roles(&doc.to_string()).unwrap();
    assert!(check_toolsets(&roles, &registry).is_err());

    let mut doc: Value = serde_json::from_str(ROLES_JSON).unwrap();
    doc.as_object_mut().unwrap().remove("ModelEngineer");
    assert!(parse_roles(&doc.to_string()).is_err());
}

fn one_step_script(state: PipelineState, replies: &[Value]) -> ScriptedBackend {
    let mut map = BTreeMap::new();
    map.insert(
        state,
        replies
            .iter()
            .map(Value::to_string)
            .collect::<VecDeque<_>>(),
    );
    ScriptedBackend::new(map)
}

fn failed(backend: &mut ScriptedBackend) -> (FailureLabel, String, TraceLog) {
    match run_pipeline_with(PROBLEM, &PipelineConfig::default(), backend) {
        Err(PipelineError::Failed(f)) => (f.label, f.failure.kind.clone(), f.trace),
        Err(e) => panic!("{e}"),
        Ok(_) => panic!("expected failure"),
    }
}

#[test]
fn calling_another_roles_tool_is_refused() {
    let call = json!({"tool_calls": [{"name": "get_seismic_parameters", "args": {"location": "Nanaimo, BC"}}]});
    let (label, kind, trace) = failed(&mut one_step_script(PipelineState::Decompose, &[call]));
    assert_eq!(
        (label, kind.as_str()),
        (FailureLabel::ToolRuntimeError, "ToolNotPermitted")
    );
    assert!(trace.tool_results().all(|(_, r)| r.writes.is_empty()));
}

#[test]
fn unknown_tools_are_refused() {
    let call = json!({"tool_calls": [{"name": "delete_everything", "args": {}}]});
    let (_, kind, _) = failed(&mut one_step_script(PipelineState::Decompose, &[call]));
    assert_eq!(kind, "UnknownTool");
}

#[test]
fn bad_arguments_get_one_repair_round() {
    let bad =
        json!({"tool_calls": [{"name": "split_problem_description", "args": {"problem_text": 7}}]});
    let (label, _, trace) = failed(&mut one_step_script(
        PipelineState::Decompose,
        &[bad.clone(), bad],
    ));
    assert_eq!(label, FailureLabel::SchemaViolation);
    let end = trace.step_end(PipelineState::Decompose).unwrap();
    assert_eq!(end.rounds, 2);
    assert_eq!(classify_failure(&trace), FailureLabel::SchemaViolation);
}

#[test]
fn a_repaired_call_continues_the_step() {
    let bad = json!({"tool_calls": [{"name": "split_problem_description", "args": {}}]});
    let good = json!({"tool_calls": [{"name": "split_problem_description", "args": {"problem_text": PROBLEM}}]});
    // The scripted step ends without the remaining Step 1 calls, so the run
    // stops later, but the repair itself is accepted.
    let done = json!({"final": "decomposed"});
    let (_, _, trace) = failed(&mut one_step_script(
        PipelineState::Decompose,
        &[bad, good, done],
    ));
    let end = trace.step_end(PipelineState::Decompose).unwrap();
    assert_eq!(end.rounds, 3);
    assert!(trace.first_failure().unwrap().state > PipelineState::Decompose);
}

#[test]
fn tool_call_ids_are_unique_and_positional() {
    let run = masse_core::orchestrator::run_pipeline(PROBLEM, &PipelineConfig::default()).unwrap();
    let ids: Vec<String> = run.trace.tool_calls().map(|(_, _, c)| c.id).collect();
    let unique: std::collections::BTreeSet<_> = ids.iter().collect();
    assert_eq!(unique.len(), ids.len());
    assert!(ids
        .iter()
        .all(|id| id.starts_with('s') && id.contains('r') && id.contains('c')));
    let results: Vec<String> = run.trace.tool_results().map(|(_, r)| r.call_id).collect();
    assert_eq!(results, ids);
    let instructions = run
        .trace
        .messages()
        .filter(|(_, m)| m.kind == MessageKind::Instruction)
        .count();
    assert_eq!(instructions, 10);
}

fn json_leaf() -> impl Strategy<Value = Value> {
    prop_oneof![
        any::<bool>().prop_map(Value::from),
        any::<i32>().prop_map(Value::from),
        "[a-z ]{0,12}".prop_map(Value::from),
    ]
}

proptest! {
    #[test]
    fn replies_round_trip_through_render(
        calls in prop::collection::vec(("[a-z_]{1,20}", prop::collection::btree_map("[a-z_]{1,8}", json_leaf(), 0..4)), 1..4),
        text in "[A-Za-z .]{0,40}",
    ) {
        let calls: Vec<(String, Map<String, Value>)> = calls
            .into_iter()
            .map(|(n, a)| (n, a.into_iter().collect()))
            .collect();
        let reply = AgentReply::ToolCalls(calls);
        prop_assert_eq!(AgentReply::parse(&reply.render()), reply);
        let fin = AgentReply::Final(text);
        prop_assert_eq!(AgentReply::parse(&fin.render()), fin);
    }
}

#[test]
fn config_documents_override_defaults_at_any_depth() {
    let cfg =
        PipelineConfig::from_json(r#"{"capacity": {"capacity_scale": 0.1}, "max_rounds": 6}"#)
            .unwrap();
    assert_eq!(cfg.capacity.capacity_scale, 0.1);
    assert_eq!(
        cfg.capacity.members,
        PipelineConfig::default().capacity.members
    );
    assert_eq!(cfg.max_rounds, 6);
    assert!(PipelineConfig::from_json(r#"{"capacity": {"scale": 0.1}}"#).is_err());
    assert!(PipelineConfig::from_json(r#"{"max_rounds": 0}"#).is_err());
    assert!(PipelineConfig::from_json("[]").is_err());
    let remote = PipelineConfig::from_json(
        r#"{"backend": {"kind": "remote", "endpoint": "http://localhost:1/v1", "model": "m"}}"#,
    )
    .unwrap();
    assert!(matches!(
        remote.backend,
        masse_core::orchestrator::BackendConfig::Remote(_)
    ));
}
