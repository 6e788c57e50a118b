//! Function-call declarations and argument validation.

use serde_json::{json, Map, Value};

use super::{ToolError, ToolName};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamType {
    Str,
    Int,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamSpec {
    pub name: &'static str,
    pub ty: ParamType,
    pub required: bool,
    pub default: Option<Value>,
    pub allowed: &'static [&'static str],
    pub description: &'static str,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToolSpec {
    pub name: ToolName,
    pub description: &'static str,
    pub params: Vec<ParamSpec>,
}

const fn param(name: &'static str, ty: ParamType, required: bool, description: &'static str) -> ParamSpec {
    ParamSpec { name, ty, required, default: None, allowed: &[], description }
}

impl ToolSpec {
    pub fn of(name: ToolName) -> Self {
        use ParamType::*;
        match name {
            ToolName::WebSearch => Self {
                name,
                description: "Search the web for information online. Returns web search results with titles, URLs, and text snippets.",
                params: vec![
                    param("query", Str, true, "Search query string."),
                    ParamSpec {
                        default: Some(json!(10)),
                        ..param("max_results", Int, false, "Maximum number of results.")
                    },
                ],
            },
            ToolName::ImageSearch => Self {
                name,
                description: "Search for related images using text query or reverse image search. Supports two modes: (1) text search with search_type='text'; (2) reverse image search with search_type='reverse'.",
                params: vec![
                    ParamSpec {
                        default: Some(json!("text")),
                        allowed: &["text", "reverse"],
                        ..param("search_type", Str, false, "Either 'text' or 'reverse'.")
                    },
                    param("query", Str, false, "Search query for text mode."),
                    param(
                        "image_url",
                        Str,
                        false,
                        "Image reference for reverse mode. Supports 'original_image', 'tool_image_N', or image URLs.",
                    ),
                    ParamSpec {
                        default: Some(json!(10)),
                        ..param("max_results", Int, false, "Maximum results.")
                    },
                ],
            },
            ToolName::Visit => Self {
                name,
                description: "Visit a webpage and extract its main textual content. Typically used after obtaining URLs from search results.",
                params: vec![
                    param("url", Str, true, "Full URL starting with 'http://' or 'https://'."),
                    param("goal", Str, false, "Information to find on the page (helps focus extraction)."),
                ],
            },
            ToolName::CodeInterpreter => Self {
                name,
                description: "Executes Python code in a stateful Jupyter kernel. Supports image processing (PIL, OpenCV), calculations, and data manipulation. Pre-loaded image variables: original_image, tool_image_N. Pre-installed packages: PIL, NumPy, OpenCV, Matplotlib, SciPy, Scikit-learn, Pandas, SymPy. Note: Code execution is persistent across calls. Use plt.show() or save images to display outputs.",
                params: vec![param("code", Str, true, "Python code to execute.")],
            },
        }
    }

    /// The `{name, description, parameters}` object offered to the model.
    pub fn declaration(&self) -> Value {
        let mut properties = Map::new();
        for p in &self.params {
            let mut prop = json!({
                "type": match p.ty { ParamType::Str => "string", ParamType::Int => "integer" },
                "description": p.description,
            });
            if let Some(d) = &p.default {
                prop["default"] = d.clone();
            }
            if !p.allowed.is_empty() {
                prop["enum"] = json!(p.allowed);
            }
            properties.insert(p.name.to_string(), prop);
        }
        let required: Vec<&str> = self.params.iter().filter(|p| p.required).map(|p| p.name).collect();
        json!({
            "name": self.name.as_str(),
            "description": self.description,
            "parameters": {"type": "object", "properties": properties, "required": required},
        })
    }

    /// Checks `args` against the schema and fills defaults.
    pub fn validate(&self, args: &Value) -> Result<Map<String, Value>, ToolError> {
        let obj = match args {
            Value::Object(o) => o.clone(),
            Value::Null => Map::new(),
            other => {
                return Err(ToolError::InvalidArguments(format!(
                    "arguments must be a JSON object, got {other}"
                )))
            }
        };
        if let Some(unknown) = obj.keys().find(|k| !self.params.iter().any(|p| p.name == k.as_str())) {
            return Err(ToolError::InvalidParameter {
                param: unknown.clone(),
                reason: format!("not a parameter of {}", self.name),
            });
        }
        let mut out = Map::new();
        for p in &self.params {
            match obj.get(p.name).filter(|v| !v.is_null()) {
                None if p.required => return Err(ToolError::MissingParameter(p.name.to_string())),
                None => {
                    if let Some(d) = &p.default {
                        out.insert(p.name.to_string(), d.clone());
                    }
                }
                Some(v) => {
                    let ok = match p.ty {
                        ParamType::Str => v.is_string(),
                        ParamType::Int => v.as_u64().is_some_and(|n| n >= 1),
                    };
                    if !ok {
                        let want = match p.ty {
                            ParamType::Str => "a string",
                            ParamType::Int => "a positive integer",
                        };
                        return Err(ToolError::InvalidParameter {
                            param: p.name.to_string(),
                            reason: format!("expected {want}, got {v}"),
                        });
                    }
                    if !p.allowed.is_empty() && !p.allowed.contains(&v.as_str().unwrap_or_default()) {
                        return Err(ToolError::InvalidParameter {
                            param: p.name.to_string(),
                            reason: format!("must be one of {:?}", p.allowed),
                        });
                    }
                    out.insert(p.name.to_string(), v.clone());
                }
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn declarations_carry_defaults_and_required() {
        let d = ToolSpec::of(ToolName::ImageSearch).declaration();
        assert_eq!(d["name"], "image_search");
        assert_eq!(d["parameters"]["properties"]["search_type"]["default"], "text");
        assert_eq!(d["parameters"]["properties"]["max_results"]["default"], 10);
        assert_eq!(d["parameters"]["required"], json!([]));
        let v = ToolSpec::of(ToolName::Visit).declaration();
        assert_eq!(v["parameters"]["required"], json!(["url"]));
    }

    #[test]
    fn validation_fills_defaults_and_names_bad_params() {
        let spec = ToolSpec::of(ToolName::WebSearch);
        let args = spec.validate(&json!({"query": "q"})).unwrap();
        assert_eq!(args["max_results"], 10);
        assert!(matches!(spec.validate(&json!({})), Err(ToolError::MissingParameter(p)) if p == "query"));
        assert!(matches!(
            spec.validate(&json!({"query": "q", "max_results": "ten"})),
            Err(ToolError::InvalidParameter { param, .. }) if param == "max_results"
        ));
        assert!(matches!(
            spec.validate(&json!({"query": "q", "lang": "en"})),
            Err(ToolError::InvalidParameter { param, .. }) if param == "lang"
        ));
        assert!(matches!(
            ToolSpec::of(ToolName::ImageSearch).validate(&json!({"search_type": "video"})),
            Err(ToolError::InvalidParameter { param, .. }) if param == "search_type"
        ));
    }
}
