//! Step reasoners: one call computes one node from its direct neighbours.

use std::collections::BTreeMap;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value as Json};
use thiserror::Error;

use super::{Layer, StepDirection};
use crate::llm::{ChatBackend, ChatMessage, Usage};
use crate::prompts::{render, Prompts};
use crate::pyliteral::{parse_prefix, scan_assignments};
use crate::scm::{parse_value, ScmInstance, Value};
use crate::world_graph::VarType;

/// A node as shown to the reasoner.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VariableView {
    pub id: String,
    pub name: String,
    pub description: String,
    #[serde(rename = "type")]
    pub var_type: VarType,
    pub values: String,
    pub current_value: Option<String>,
}

impl VariableView {
    fn to_argument(&self) -> Json {
        json!({
            "name": self.name,
            "description": self.description,
            "type": self.var_type.as_str(),
            "values": self.values,
            "current_value": self.current_value,
        })
    }
}

/// Everything one step may look at: the node, its known neighbours in the
/// step direction and the edges between them.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepRequest {
    pub query_id: String,
    pub layer: Layer,
    pub direction: StepDirection,
    pub target: VariableView,
    pub inputs: Vec<VariableView>,
    /// `(cause, effect, description)` by node id.
    pub relationships: Vec<(String, String, String)>,
}

impl StepRequest {
    /// Ids of every node the request mentions.
    pub fn mentioned(&self) -> Vec<&str> {
        std::iter::once(self.target.id.as_str()).chain(self.inputs.iter().map(|v| v.id.as_str())).collect()
    }

    /// The keyword arguments handed to a language model.
    pub fn arguments(&self) -> Json {
        let name_of = |id: &str| {
            self.mentioned()
                .into_iter()
                .zip(std::iter::once(&self.target).chain(&self.inputs))
                .find(|(i, _)| *i == id)
                .map_or(id.to_string(), |(_, v)| v.name.clone())
        };
        let inputs: Vec<Json> = self.inputs.iter().map(VariableView::to_argument).collect();
        let key = match self.direction {
            StepDirection::Causal => "parent_variables",
            StepDirection::Anticausal => "children_variables",
        };
        let rels: Vec<Json> = self
            .relationships
            .iter()
            .map(|(c, e, d)| json!({"cause": name_of(c), "effect": name_of(e), "description": d}))
            .collect();
        json!({"target_variable": self.target.to_argument(), key: inputs, "causal_relationships": rels})
    }

    fn input_values(&self) -> Result<BTreeMap<String, Value>, ReasonerError> {
        self.inputs
            .iter()
            .map(|v| {
                let raw = v.current_value.as_deref().unwrap_or_default();
                parse_value(raw)
                    .map(|x| (v.id.clone(), x))
                    .ok_or_else(|| ReasonerError::Domain(format!("`{}` has the non-integer value {raw:?}", v.id)))
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepOutput {
    pub current_value: String,
    pub contextual_information: Option<String>,
    pub causal_effect: Option<String>,
    /// Set when an abduction had to pick among several consistent values.
    #[serde(default)]
    pub ambiguous: bool,
    pub usage: Usage,
}

#[derive(Debug, Clone, Error, PartialEq, Eq, Serialize, Deserialize)]
pub enum ReasonerError {
    #[error("could not read the reply: {message}")]
    Parse { message: String, usage: Usage },
    #[error("backend failure: {0}")]
    Backend(String),
    #[error("`{node}` is not determined by its children; candidates {candidates:?}")]
    AmbiguousAbduction { node: String, candidates: Vec<Value> },
    #[error("no value of `{0}` reproduces its children")]
    Inconsistent(String),
    #[error("`{0}` has no mechanism")]
    MechanismMissing(String),
    #[error("{0}")]
    Domain(String),
}

pub trait Reasoner: Send + Sync {
    /// Computes the target of `request`. `feedback` carries the previous
    /// attempt's parse error on a retry.
    fn infer_step(&self, request: &StepRequest, feedback: Option<&str>) -> Result<StepOutput, ReasonerError>;
}

/// Exact steps from known mechanisms. Anticausal steps keep the values that
/// reproduce every given child under some co-parent assignment and fail
/// unless exactly one remains.
#[derive(Debug, Clone)]
pub struct DeterministicReasoner {
    scm: ScmInstance,
}

impl DeterministicReasoner {
    pub fn new(scm: ScmInstance) -> Self {
        Self { scm }
    }

    fn causal(&self, request: &StepRequest) -> Result<StepOutput, ReasonerError> {
        let node = &request.target.id;
        let mech = self.scm.mechanism(node).ok_or_else(|| ReasonerError::MechanismMissing(node.clone()))?;
        let values = request.input_values()?;
        let v = mech.apply_map(&values).map_err(ReasonerError::Domain)?;
        let shown: Vec<String> = mech.parents().iter().map(|p| format!("{p}={}", values[p])).collect();
        Ok(StepOutput {
            current_value: v.to_string(),
            contextual_information: Some(format!("computed from {}", shown.join(", "))),
            causal_effect: Some(mech.describe()),
            ambiguous: false,
            usage: Usage::default(),
        })
    }

    /// Whether some assignment of the child's other parents maps `node = v`
    /// onto the child's observed value.
    fn reproduces(&self, node: &str, v: Value, child: &str, child_value: Value) -> Result<bool, ReasonerError> {
        let mech = self.scm.mechanism(child).ok_or_else(|| ReasonerError::MechanismMissing(child.to_string()))?;
        let parents = mech.parents();
        let domains: Vec<Vec<Value>> = parents
            .iter()
            .map(|p| if p == node { vec![v] } else { self.scm.domain(p).map(<[Value]>::to_vec).unwrap_or_default() })
            .collect();
        let mut digits = vec![0usize; parents.len()];
        if domains.iter().any(Vec::is_empty) {
            return Ok(false);
        }
        loop {
            let args: Vec<Value> = digits.iter().zip(&domains).map(|(&d, dom)| dom[d]).collect();
            if mech.apply(&args) == Ok(child_value) {
                return Ok(true);
            }
            let mut i = 0;
            loop {
                if i == digits.len() {
                    return Ok(false);
                }
                digits[i] += 1;
                if digits[i] < domains[i].len() {
                    break;
                }
                digits[i] = 0;
                i += 1;
            }
        }
    }

    fn anticausal(&self, request: &StepRequest) -> Result<StepOutput, ReasonerError> {
        let node = &request.target.id;
        let domain = self.scm.domain(node).ok_or_else(|| ReasonerError::Domain(format!("`{node}` is not in the model")))?;
        let children = request.input_values()?;
        let mut candidates = Vec::new();
        for &v in domain {
            let mut ok = true;
            for (c, &cv) in &children {
                if !self.reproduces(node, v, c, cv)? {
                    ok = false;
                    break;
                }
            }
            if ok {
                candidates.push(v);
            }
        }
        match candidates.as_slice() {
            [] => Err(ReasonerError::Inconsistent(node.clone())),
            [v] => Ok(StepOutput {
                current_value: v.to_string(),
                contextual_information: Some(format!("the only value consistent with {}", children.keys().cloned().collect::<Vec<_>>().join(", "))),
                causal_effect: None,
                ambiguous: false,
                usage: Usage::default(),
            }),
            _ => Err(ReasonerError::AmbiguousAbduction { node: node.clone(), candidates }),
        }
    }
}

impl Reasoner for DeterministicReasoner {
    fn infer_step(&self, request: &StepRequest, _feedback: Option<&str>) -> Result<StepOutput, ReasonerError> {
        match request.direction {
            StepDirection::Causal => self.causal(request),
            StepDirection::Anticausal => self.anticausal(request),
        }
    }
}

/// Steps answered by a chat model. The reply is parsed for assignments to
/// `target_variable[...]` or a dict passed to `final_answer`.
pub struct ChatReasoner {
    chat: Arc<dyn ChatBackend>,
    prompts: Prompts,
}

impl ChatReasoner {
    pub fn new(chat: Arc<dyn ChatBackend>) -> Self {
        Self { chat, prompts: Prompts::bundled() }
    }

    pub fn messages(&self, request: &StepRequest, feedback: Option<&str>) -> Vec<ChatMessage> {
        let task = match request.direction {
            StepDirection::Causal => format!("Compute the value of '{}' from its direct causes.", request.target.name),
            StepDirection::Anticausal => format!("Infer the value of '{}' from its direct effects.", request.target.name),
        };
        let args = serde_json::to_string_pretty(&request.arguments()).expect("json");
        let mut user = render(&self.prompts.inference_user, &[("task", &task), ("arguments", &args)]);
        if let Some(f) = feedback {
            user.push_str(&format!("\n\nYour previous answer could not be used: {f}\nAnswer again."));
        }
        vec![ChatMessage::system(self.prompts.inference_system()), ChatMessage::user(user)]
    }
}

fn literal_text(v: &Json) -> Option<String> {
    match v {
        Json::Null => None,
        Json::String(s) => Some(s.clone()),
        other => Some(other.to_string()),
    }
}

/// Reads the target fields out of a reply.
pub(crate) fn parse_step_reply(reply: &str) -> Result<(BTreeMap<String, Json>, bool), String> {
    let code = match reply.find("```") {
        Some(start) => {
            let rest = &reply[start + 3..];
            let body = &rest[rest.find('\n').map_or(rest.len(), |i| i + 1)..];
            &body[..body.find("```").unwrap_or(body.len())]
        }
        None => reply,
    };
    let mut fields: BTreeMap<String, Json> = BTreeMap::new();
    for a in scan_assignments(code) {
        if a.name != "target_variable" {
            continue;
        }
        match (a.path.as_slice(), a.value) {
            (_, Some(Err(e))) => return Err(format!("line {}: {e}", a.line)),
            ([key], Some(Ok(v))) => {
                fields.insert(key.clone(), v);
            }
            ([], Some(Ok(Json::Object(o)))) => fields.extend(o),
            _ => {}
        }
    }
    if let Some(i) = code.find("final_answer(") {
        let arg = code[i + "final_answer(".len()..].trim_start();
        if arg.starts_with('{') {
            match parse_prefix(arg) {
                Ok((Json::Object(o), _)) => fields.extend(o),
                Ok(_) => {}
                Err(e) => return Err(format!("final_answer argument: {e}")),
            }
        }
    }
    let ambiguous = fields.get("ambiguous").is_some_and(|v| v.as_bool() == Some(true));
    Ok((fields, ambiguous))
}

impl Reasoner for ChatReasoner {
    fn infer_step(&self, request: &StepRequest, feedback: Option<&str>) -> Result<StepOutput, ReasonerError> {
        let reply = self.chat.complete(&self.messages(request, feedback)).map_err(|e| ReasonerError::Backend(e.to_string()))?;
        let usage = reply.usage;
        let (fields, ambiguous) = parse_step_reply(&reply.content).map_err(|message| ReasonerError::Parse { message, usage })?;
        let current_value = fields
            .get("current_value")
            .and_then(literal_text)
            .filter(|v| !v.trim().is_empty())
            .ok_or_else(|| ReasonerError::Parse { message: "target_variable['current_value'] was not set".into(), usage })?;
        Ok(StepOutput {
            current_value,
            contextual_information: fields.get("contextual_information").and_then(literal_text),
            causal_effect: fields.get("causal_effect").and_then(literal_text),
            ambiguous,
            usage,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordedRequest {
    pub request: StepRequest,
    pub arguments: Json,
}

/// Wraps a reasoner and keeps every request it sees.
pub struct RecordingReasoner<R> {
    inner: R,
    log: Mutex<Vec<RecordedRequest>>,
}

impl<R: Reasoner> RecordingReasoner<R> {
    pub fn new(inner: R) -> Self {
        Self { inner, log: Mutex::new(Vec::new()) }
    }

    pub fn requests(&self) -> Vec<RecordedRequest> {
        self.log.lock().expect("log lock").clone()
    }
}

impl<R: Reasoner> Reasoner for RecordingReasoner<R> {
    fn infer_step(&self, request: &StepRequest, feedback: Option<&str>) -> Result<StepOutput, ReasonerError> {
        self.log
            .lock()
            .expect("log lock")
            .push(RecordedRequest { request: request.clone(), arguments: request.arguments() });
        self.inner.infer_step(request, feedback)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reply_fields_from_assignments_and_final_answer() {
        let reply = "Thought: prices fell\nCode:\n```py\ntarget_variable['current_value'] = 'lowest level since 2009'\ntarget_variable['causal_effect'] = \"supply glut\"\nfinal_answer(target_variable)\n```<end_code>";
        let (f, amb) = parse_step_reply(reply).unwrap();
        assert_eq!(f["current_value"], "lowest level since 2009");
        assert_eq!(f["causal_effect"], "supply glut");
        assert!(!amb);
        let (f, _) = parse_step_reply("```py\nfinal_answer({'current_value': 3, 'ambiguous': True})\n```").unwrap();
        assert_eq!(literal_text(&f["current_value"]).unwrap(), "3");
        assert!(parse_step_reply("```py\ntarget_variable['current_value'] = [1,\n```").is_err());
    }
}
