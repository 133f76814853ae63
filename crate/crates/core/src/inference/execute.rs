use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use tracing::debug;

use super::{InferenceError, InferencePlan, Layer, PlanStep, Reasoner, ReasonerError, StepDirection, StepRequest, VariableView};
use crate::blanket::Query;
use crate::llm::Usage;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecuteConfig {
    /// Retries per step after an unreadable reply.
    pub max_retries: usize,
}

impl Default for ExecuteConfig {
    fn default() -> Self {
        Self { max_retries: 5 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepTrace {
    pub node: String,
    pub layer: Layer,
    pub direction: StepDirection,
    pub inputs: Vec<String>,
    pub value: String,
    pub contextual_information: Option<String>,
    pub causal_effect: Option<String>,
    pub attempts: usize,
    pub ambiguous: bool,
    pub usage: Usage,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct InferenceTrace {
    /// Plan steps executed.
    pub steps: usize,
    /// Extra attempts after unreadable replies.
    pub retries: usize,
    /// Reasoner calls, `steps + retries`.
    pub calls: usize,
    pub usage: Usage,
    pub entries: Vec<StepTrace>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InferenceResult {
    pub query_id: String,
    pub target: String,
    pub target_value: String,
    pub factual: BTreeMap<String, String>,
    pub counterfactual: BTreeMap<String, String>,
    pub trace: InferenceTrace,
}

fn view(query: &Query, id: &str, value: Option<&String>) -> VariableView {
    let n = query.query_graph.node(id).expect("plan nodes come from the query graph");
    VariableView {
        id: n.id.clone(),
        name: n.name.clone(),
        description: n.description.clone(),
        var_type: n.var_type.clone(),
        values: n.values.clone(),
        current_value: value.cloned(),
    }
}

fn request(query: &Query, step: &PlanStep, layer_values: &BTreeMap<String, String>) -> StepRequest {
    let relationships = step
        .inputs
        .iter()
        .map(|i| {
            let (c, e) = match step.direction {
                StepDirection::Causal => (i.as_str(), step.node.as_str()),
                StepDirection::Anticausal => (step.node.as_str(), i.as_str()),
            };
            let d = query.query_graph.edge(c, e).map(|e| e.description.clone()).unwrap_or_default();
            (c.to_string(), e.to_string(), d)
        })
        .collect();
    StepRequest {
        query_id: query.id.clone(),
        layer: step.layer,
        direction: step.direction,
        target: view(query, &step.node, None),
        inputs: step.inputs.iter().map(|i| view(query, i, layer_values.get(i))).collect(),
        relationships,
    }
}

/// Runs `plan` against `reasoner`. Unreadable replies are retried with the
/// error as feedback; any other reasoner failure ends the run.
pub fn execute(plan: &InferencePlan, query: &Query, reasoner: &dyn Reasoner, config: &ExecuteConfig) -> Result<InferenceResult, InferenceError> {
    let mut factual = query.observations.clone();
    let mut counterfactual: BTreeMap<String, String> = BTreeMap::new();
    let mut trace = InferenceTrace::default();

    let run = |step: &PlanStep, values: &mut BTreeMap<String, String>, trace: &mut InferenceTrace| -> Result<(), InferenceError> {
        let req = request(query, step, values);
        let mut feedback: Option<String> = None;
        let mut attempts = 0;
        let mut usage = Usage::default();
        loop {
            attempts += 1;
            match reasoner.infer_step(&req, feedback.as_deref()) {
                Ok(out) => {
                    usage += out.usage;
                    debug!(node = %step.node, value = %out.current_value, "step done");
                    values.insert(step.node.clone(), out.current_value.clone());
                    trace.entries.push(StepTrace {
                        node: step.node.clone(),
                        layer: step.layer,
                        direction: step.direction,
                        inputs: step.inputs.clone(),
                        value: out.current_value,
                        contextual_information: out.contextual_information,
                        causal_effect: out.causal_effect,
                        attempts,
                        ambiguous: out.ambiguous,
                        usage,
                    });
                    trace.steps += 1;
                    trace.usage += usage;
                    return Ok(());
                }
                Err(ReasonerError::Parse { message, usage: u }) => {
                    usage += u;
                    if attempts > config.max_retries {
                        trace.usage += usage;
                        return Err(InferenceError::MaxRetriesExceeded { node: step.node.clone(), retries: config.max_retries, last: message });
                    }
                    trace.retries += 1;
                    feedback = Some(message);
                }
                Err(source) => return Err(InferenceError::Step { node: step.node.clone(), source }),
            }
        }
    };

    for step in &plan.abduction_steps {
        run(step, &mut factual, &mut trace)?;
    }
    if plan.counterfactual {
        for (n, v) in &query.interventions {
            counterfactual.insert(n.clone(), v.clone());
        }
        for n in &plan.transfer {
            let v = factual.get(n).ok_or_else(|| InferenceError::UnresolvableNode(n.clone()))?;
            counterfactual.insert(n.clone(), v.clone());
        }
        for step in &plan.prediction_steps {
            run(step, &mut counterfactual, &mut trace)?;
        }
    } else {
        for step in &plan.prediction_steps {
            run(step, &mut factual, &mut trace)?;
        }
    }
    trace.calls = trace.steps + trace.retries;
    let layer = if plan.counterfactual { &counterfactual } else { &factual };
    let target_value = layer.get(&plan.target).cloned().ok_or_else(|| InferenceError::UnresolvableNode(plan.target.clone()))?;
    Ok(InferenceResult { query_id: query.id.clone(), target: plan.target.clone(), target_value, factual, counterfactual, trace })
}
