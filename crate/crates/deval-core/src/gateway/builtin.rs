//! Deterministic built-in models: the reference oracle, a stubborn probe that
//! never updates its answer, and a scripted replayer for fixtures.

use std::path::Path;
use std::sync::Mutex;

use serde_json::Value;

use super::{validate_history, ChatMessage, GatewayError, HttpModel, Model, ModelConfig, Role};
use crate::tasks::{self, scene, TaskInput};

fn oracle_reply(history: &[ChatMessage]) -> Result<String, GatewayError> {
    let last_user = history
        .iter()
        .rev()
        .find(|m| m.role == Role::User)
        .ok_or(GatewayError::BadHistory("no user message"))?;
    let input = match &last_user.image {
        Some(ppm) => {
            let img =
                scene::decode_ppm(ppm).map_err(|e| GatewayError::OraclePrompt(e.to_string()))?;
            TaskInput::ImageCount(img)
        }
        None => tasks::parse_rendered_text(&last_user.text)
            .map_err(|e| GatewayError::OraclePrompt(e.to_string()))?,
    };
    let output =
        tasks::solve_input(&input).map_err(|e| GatewayError::OraclePrompt(e.to_string()))?;
    Ok(format!("Final answer: {}", tasks::render_answer(&output)))
}

/// Answers every prompt with the reference solution in the required
/// final-answer format. The fixed point of the harness: its transcripts must
/// pass every shipped rule. A prompt it cannot read signals a template
/// regression, so that is a hard error rather than a wrong answer.
pub struct OracleModel;

impl Model for OracleModel {
    fn name(&self) -> &str {
        "builtin:oracle"
    }

    fn complete_chat(
        &self,
        history: &[ChatMessage],
        _cfg: &ModelConfig,
    ) -> Result<String, GatewayError> {
        validate_history(history)?;
        oracle_reply(history)
    }

    fn deterministic(&self) -> bool {
        true
    }
}

/// Answers the first round via the oracle, then repeats its latest answer
/// verbatim. A boundary probe: it passes exactly the rules whose relation
/// tolerates an unchanged answer.
pub struct StubbornModel;

impl Model for StubbornModel {
    fn name(&self) -> &str {
        "builtin:stubborn"
    }

    fn complete_chat(
        &self,
        history: &[ChatMessage],
        _cfg: &ModelConfig,
    ) -> Result<String, GatewayError> {
        validate_history(history)?;
        if let Some(prev) = history.iter().rev().find(|m| m.role == Role::Assistant) {
            return Ok(prev.text.clone());
        }
        oracle_reply(history)
    }

    fn deterministic(&self) -> bool {
        true
    }
}

enum ScriptLine {
    Bare(String),
    Keyed { key: String, reply: String },
}

/// Replays a fixture transcript. Lines are JSONL: a bare string replays
/// sequentially; an object `{"key": ..., "reply": ...}` switches the whole
/// script to keyed mode, where the first entry whose key is a substring of
/// the last user message answers (stateless, so reprompts re-match). Lines
/// that are not JSON replay verbatim.
pub struct ScriptedModel {
    name: String,
    lines: Vec<ScriptLine>,
    keyed: bool,
    cursor: Mutex<usize>,
}

impl ScriptedModel {
    pub fn from_path(path: &Path) -> Result<Self, GatewayError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| GatewayError::Script(format!("{}: {e}", path.display())))?;
        Ok(Self::from_script(&text, format!("builtin:scripted:{}", path.display())))
    }

    pub fn from_script(text: &str, name: String) -> Self {
        let mut lines = Vec::new();
        for raw in text.lines() {
            if raw.trim().is_empty() {
                continue;
            }
            match serde_json::from_str::<Value>(raw) {
                Ok(Value::String(s)) => lines.push(ScriptLine::Bare(s)),
                Ok(Value::Object(map))
                    if map.contains_key("key") && map.contains_key("reply") =>
                {
                    lines.push(ScriptLine::Keyed {
                        key: map["key"].as_str().unwrap_or_default().to_string(),
                        reply: map["reply"].as_str().unwrap_or_default().to_string(),
                    });
                }
                _ => lines.push(ScriptLine::Bare(raw.to_string())),
            }
        }
        let keyed = lines.iter().any(|l| matches!(l, ScriptLine::Keyed { .. }));
        ScriptedModel { name, lines, keyed, cursor: Mutex::new(0) }
    }
}

impl Model for ScriptedModel {
    fn name(&self) -> &str {
        &self.name
    }

    fn complete_chat(
        &self,
        history: &[ChatMessage],
        _cfg: &ModelConfig,
    ) -> Result<String, GatewayError> {
        validate_history(history)?;
        if self.keyed {
            let last_user =
                history.iter().rev().find(|m| m.role == Role::User).expect("validated");
            for line in &self.lines {
                if let ScriptLine::Keyed { key, reply } = line {
                    if last_user.text.contains(key.as_str()) {
                        return Ok(reply.clone());
                    }
                }
            }
            let head: String = last_user.text.chars().take(60).collect();
            return Err(GatewayError::Script(format!("no keyed reply matches: {head}")));
        }
        let mut cursor = self.cursor.lock().expect("cursor lock");
        match self.lines.get(*cursor) {
            Some(ScriptLine::Bare(s)) => {
                *cursor += 1;
                Ok(s.clone())
            }
            Some(ScriptLine::Keyed { .. }) => unreachable!("keyed lines imply keyed mode"),
            None => Err(GatewayError::Script("script exhausted".to_string())),
        }
    }

    fn deterministic(&self) -> bool {
        true
    }
}

/// Resolve a model name: `builtin:oracle`, `builtin:stubborn`,
/// `builtin:scripted:<path>`, or anything else as a remote model reachable
/// through the configured endpoint.
pub fn resolve_model(name: &str, cfg: &ModelConfig) -> Result<Box<dyn Model>, GatewayError> {
    if name == "builtin:oracle" {
        return Ok(Box::new(OracleModel));
    }
    if name == "builtin:stubborn" {
        return Ok(Box::new(StubbornModel));
    }
    if let Some(path) = name.strip_prefix("builtin:scripted:") {
        return Ok(Box::new(ScriptedModel::from_path(Path::new(path))?));
    }
    if let Some(rest) = name.strip_prefix("builtin:") {
        return Err(GatewayError::Script(format!("unknown builtin model: {rest}")));
    }
    Ok(Box::new(HttpModel::new(cfg)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::sample_majority;

    fn cfg() -> ModelConfig {
        ModelConfig::default()
    }

    #[test]
    fn oracle_solves_a_rendered_walk_prompt() {
        let history = [
            ChatMessage::system("irrelevant for the oracle"),
            ChatMessage::user("You start at position 0. Moves: clockwise 25 steps."),
        ];
        let reply = OracleModel.complete_chat(&history, &cfg()).unwrap();
        assert_eq!(reply, "Final answer: 5");
    }

    #[test]
    fn oracle_errors_on_an_unrecognized_prompt() {
        let history = [ChatMessage::user("what is the meaning of life?")];
        let err = OracleModel.complete_chat(&history, &cfg()).unwrap_err();
        assert!(matches!(err, GatewayError::OraclePrompt(_)));
    }

    #[test]
    fn stubborn_repeats_its_previous_answer_verbatim() {
        let round1 = [
            ChatMessage::system("s"),
            ChatMessage::user("You start at position 3. Moves: counterclockwise 7 steps."),
        ];
        let first = StubbornModel.complete_chat(&round1, &cfg()).unwrap();
        assert_eq!(first, "Final answer: 16");
        let round2 = [
            round1[0].clone(),
            round1[1].clone(),
            ChatMessage::assistant(first.clone()),
            ChatMessage::user("You start at position 3. Moves: clockwise 7 steps."),
        ];
        let second = StubbornModel.complete_chat(&round2, &cfg()).unwrap();
        assert_eq!(second, first);
    }

    #[test]
    fn scripted_sequential_mode_replays_and_then_exhausts() {
        let model = ScriptedModel::from_script(
            "\"first\"\n\nplain verbatim line\n\"third\"\n",
            "builtin:scripted:test".to_string(),
        );
        let history = [ChatMessage::user("anything")];
        assert_eq!(model.complete_chat(&history, &cfg()).unwrap(), "first");
        assert_eq!(model.complete_chat(&history, &cfg()).unwrap(), "plain verbatim line");
        assert_eq!(model.complete_chat(&history, &cfg()).unwrap(), "third");
        assert!(matches!(
            model.complete_chat(&history, &cfg()),
            Err(GatewayError::Script(_))
        ));
    }

    #[test]
    fn scripted_keyed_mode_matches_substrings_of_the_last_user_message() {
        let script = concat!(
            "{\"key\": \"case-7\", \"reply\": \"DR-Misapplied\"}\n",
            "{\"key\": \"case-8\", \"reply\": \"DR-Unaware\"}\n",
        );
        let model = ScriptedModel::from_script(script, "builtin:scripted:test".to_string());
        let ask = |text: &str| {
            let history = [ChatMessage::user(text.to_string())];
            model.complete_chat(&history, &cfg())
        };
        assert_eq!(ask("judge this. Case: case-8 please").unwrap(), "DR-Unaware");
        assert_eq!(ask("Case: case-7").unwrap(), "DR-Misapplied");
        // Keyed mode is stateless: the same key answers again.
        assert_eq!(ask("Case: case-7").unwrap(), "DR-Misapplied");
        assert!(ask("Case: case-9").is_err());
    }

    #[test]
    fn majority_voting_breaks_ties_lexicographically() {
        let script = "\"A\"\n\"A\"\n\"B\"\n\"B\"\n\"C\"\n";
        let model = ScriptedModel::from_script(script, "builtin:scripted:test".to_string());
        let history = [ChatMessage::user("q")];
        let cfg = ModelConfig { samples_k: 5, ..Default::default() };
        let winner = sample_majority(&model, &history, &cfg, &|s| s.to_string()).unwrap();
        assert_eq!(winner, "A");
    }

    #[test]
    fn resolver_knows_every_builtin_and_rejects_typos() {
        let cfg = cfg();
        assert_eq!(resolve_model("builtin:oracle", &cfg).unwrap().name(), "builtin:oracle");
        assert_eq!(resolve_model("builtin:stubborn", &cfg).unwrap().name(), "builtin:stubborn");
        assert!(resolve_model("builtin:psychic", &cfg).is_err());
        // Remote names require endpoint and key.
        assert!(resolve_model("some-remote-model", &cfg).is_err());
    }
}
