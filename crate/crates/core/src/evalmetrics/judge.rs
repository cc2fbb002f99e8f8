use serde::{Deserialize, Serialize};

use super::EvalError;

pub const JUDGE_RUBRIC: &str = "clarity, relevance, completeness, and legal reasoning in a scale of 10";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JudgeScores {
    pub clarity: f64,
    pub relevance: f64,
    pub completeness: f64,
    pub legal_reasoning: f64,
}

impl JudgeScores {
    pub fn validate(&self) -> Result<(), EvalError> {
        for (name, v) in [
            ("clarity", self.clarity),
            ("relevance", self.relevance),
            ("completeness", self.completeness),
            ("legal_reasoning", self.legal_reasoning),
        ] {
            if !(0.0..=10.0).contains(&v) {
                return Err(EvalError::JudgeRange { field: name, value: v });
            }
        }
        Ok(())
    }
}

/// Prompt asking a judge model to grade `response` to an instruction.
pub fn judge_request(instruction: &str, input: Option<&str>, response: &str) -> Result<String, EvalError> {
    if response.trim().is_empty() {
        return Err(EvalError::JudgeReply("response to be judged is empty".into()));
    }
    let mut s = format!(
        "Evaluate the response to the legal instruction below on {JUDGE_RUBRIC}.\n\
         Reply with only a JSON object of four numbers with the keys \"clarity\", \"relevance\", \"completeness\" and \"legal_reasoning\".\n\
         ### Instruction: {instruction}\n"
    );
    if let Some(input) = input.filter(|i| !i.trim().is_empty()) {
        s.push_str(&format!("### Input: {input}\n"));
    }
    s.push_str(&format!("### Response: {response}\n"));
    Ok(s)
}

/// Reads the first `{...}` object in `reply` as [`JudgeScores`].
pub fn judge_parse(reply: &str) -> Result<JudgeScores, EvalError> {
    let start = reply.find('{').ok_or_else(|| EvalError::JudgeReply("no JSON object in reply".into()))?;
    let end = reply[start..]
        .find('}')
        .map(|e| start + e + 1)
        .ok_or_else(|| EvalError::JudgeReply("unterminated JSON object".into()))?;
    let scores: JudgeScores =
        serde_json::from_str(&reply[start..end]).map_err(|e| EvalError::JudgeReply(e.to_string()))?;
    scores.validate()?;
    Ok(scores)
}

/// Where judge requests go. The bearer token is read from `token_env`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgeEndpoint {
    pub url: String,
    pub token_env: String,
    #[serde(default)]
    pub model: Option<String>,
}

impl JudgeEndpoint {
    pub fn token(&self) -> Result<String, EvalError> {
        std::env::var(&self.token_env)
            .map_err(|_| EvalError::JudgeTransport(format!("environment variable {} is not set", self.token_env)))
    }

    /// JSON request body carrying `prompt`.
    pub fn request_body(&self, prompt: &str) -> String {
        serde_json::json!({
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
        })
        .to_string()
    }
}

/// Delivers a request body to an endpoint and returns the reply text.
pub trait JudgeTransport {
    fn send(&self, endpoint: &JudgeEndpoint, token: &str, body: &str) -> Result<String, EvalError>;
}

/// Formats, sends and parses one judgement.
pub fn judge_with(
    transport: &dyn JudgeTransport,
    endpoint: &JudgeEndpoint,
    instruction: &str,
    input: Option<&str>,
    response: &str,
) -> Result<JudgeScores, EvalError> {
    let body = endpoint.request_body(&judge_request(instruction, input, response)?);
    let token = endpoint.token()?;
    judge_parse(&transport.send(endpoint, &token, &body)?)
}
