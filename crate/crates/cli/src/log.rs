//! Diagnostics on stderr, either plain text or one JSON object per line.

use serde_json::{json, Map, Value};

pub struct Log {
    json: bool,
}

impl Log {
    pub fn new(json: bool) -> Self {
        Log { json }
    }

    /// `fields` must be a JSON object; `text` is the plain-text rendering.
    pub fn event(&self, name: &str, fields: Value, text: impl FnOnce() -> String) {
        if self.json {
            let mut obj = Map::new();
            obj.insert("event".into(), name.into());
            if let Value::Object(f) = fields {
                obj.extend(f);
            }
            eprintln!("{}", Value::Object(obj));
        } else {
            eprintln!("{}", text());
        }
    }

    pub fn error(&self, message: &str, code: u8) {
        self.event("error", json!({ "message": message, "exit_code": code }), || {
            format!("error: {message}")
        });
    }
}
