//! Prompt templates shipped as data files, with `{{placeholder}}` substitution.

/// The full set of agent templates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Prompts {
    pub variable_schema: String,
    pub relationship_schema: String,
    pub extraction_system: String,
    pub extraction_user: String,
    pub inference_system: String,
    pub inference_user: String,
}

impl Prompts {
    pub fn bundled() -> Self {
        Self {
            variable_schema: include_str!("../data/prompts/variable_schema.txt").to_string(),
            relationship_schema: include_str!("../data/prompts/relationship_schema.txt").to_string(),
            extraction_system: include_str!("../data/prompts/extraction_system.txt").to_string(),
            extraction_user: include_str!("../data/prompts/extraction_user.txt").to_string(),
            inference_system: include_str!("../data/prompts/inference_system.txt").to_string(),
            inference_user: include_str!("../data/prompts/inference_user.txt").to_string(),
        }
    }

    /// Extraction system prompt with the schema blocks and tool name filled in.
    pub fn extraction_system(&self, tool_name: &str) -> String {
        render(
            &self.extraction_system,
            &[
                ("variable", self.variable_schema.trim_end()),
                ("causal_relationship", self.relationship_schema.trim_end()),
                ("retrieval_tool_name", tool_name),
            ],
        )
    }

    pub fn inference_system(&self) -> String {
        render(
            &self.inference_system,
            &[("variable", self.variable_schema.trim_end()), ("causal_relationship", self.relationship_schema.trim_end())],
        )
    }
}

/// Replaces each `{{key}}` with its value. Unknown placeholders are left as is.
pub fn render(template: &str, values: &[(&str, &str)]) -> String {
    let mut out = template.to_string();
    for (key, value) in values {
        out = out.replace(&format!("{{{{{key}}}}}"), value);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn placeholders_are_filled() {
        let p = Prompts::bundled();
        let system = p.extraction_system("graph_retriever");
        assert!(!system.contains("{{"));
        assert!(system.contains("\"supporting_text_snippets\""));
        assert!(system.contains("`graph_retriever(query=...)`"));
        assert!(!p.inference_system().contains("{{"));
        assert_eq!(render("a {{x}} {{y}}", &[("x", "1")]), "a 1 {{y}}");
    }
}
