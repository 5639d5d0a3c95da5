use serde_json::{json, Value};

fn error_response(description: &str) -> Value {
    json!({"description": description, "content": {"application/json": {"schema": {"$ref": "#/components/schemas/Error"}}}})
}

fn ok(description: &str, schema: &str) -> Value {
    json!({"description": description, "content": {"application/json": {"schema": {"$ref": format!("#/components/schemas/{schema}")}}}})
}

fn body(schema: &str, required: bool) -> Value {
    json!({"required": required, "content": {"application/json": {"schema": {"$ref": format!("#/components/schemas/{schema}")}}}})
}

/// OpenAPI 3.0 description of the v1 API.
pub fn document() -> Value {
    let id = json!({"name": "id", "in": "path", "required": true, "schema": {"type": "string"}});
    let session_errors = |extra: &[(&str, &str)]| {
        let mut m = serde_json::Map::new();
        m.insert("404".into(), error_response("unknown session"));
        for (code, desc) in extra {
            m.insert((*code).into(), error_response(desc));
        }
        m
    };
    let with = |mut m: serde_json::Map<String, Value>, code: &str, v: Value| {
        m.insert(code.into(), v);
        Value::Object(m)
    };
    json!({
        "openapi": "3.0.3",
        "info": {"title": "wireoff", "version": "1.0.0",
                 "description": "Forecasts, simulations and wire-off recommendations for a degraded vendor."},
        "paths": {
            "/v1/sessions": {"post": {
                "summary": "Create a session from CSV payloads or server-side file paths",
                "requestBody": body("CreateSession", true),
                "responses": {"201": ok("session created", "SessionInfo"), "400": error_response("malformed body or inputs")}
            }},
            "/v1/sessions/{id}": {"get": {
                "summary": "Session status", "parameters": [id],
                "responses": with(session_errors(&[]), "200", ok("session", "SessionInfo"))
            }},
            "/v1/sessions/{id}/fit": {"post": {
                "summary": "Fit baselines, availability smoother, behavior and wired-off slope",
                "parameters": [id], "requestBody": body("FitRequest", true),
                "responses": with(session_errors(&[("400", "malformed body")]), "200", ok("fitted model summaries", "FitSummary"))
            }},
            "/v1/sessions/{id}/forecast": {"get": {
                "summary": "Per-minute forecast curve",
                "parameters": [id,
                    {"name": "kind", "in": "query", "required": true,
                     "schema": {"type": "string", "enum": ["baseline", "availability", "wiredoff", "wiredon"]}},
                    {"name": "horizon", "in": "query", "schema": {"type": "integer", "minimum": 1}},
                    {"name": "vendor", "in": "query", "schema": {"type": "string"}}],
                "responses": with(session_errors(&[("400", "bad query"), ("409", "not fitted")]), "200", ok("curve", "Forecast"))
            }},
            "/v1/sessions/{id}/simulate": {"post": {
                "summary": "Monte Carlo wired-on forecast; the seed is mandatory",
                "parameters": [id], "requestBody": body("SimulateRequest", true),
                "responses": with(session_errors(&[("400", "malformed body"), ("409", "not fitted")]), "200", ok("wired-on forecast", "WiredOnForecast"))
            }},
            "/v1/sessions/{id}/recommendation": {"get": {
                "summary": "Decision on the latest curves", "parameters": [id],
                "responses": with(session_errors(&[("409", "not simulated or no wired-off model")]), "200", ok("recommendation", "Recommendation"))
            }},
            "/v1/sessions/{id}/whatif": {"post": {
                "summary": "Completed experiences if wired off at a chosen minute",
                "parameters": [id], "requestBody": body("WhatIfRequest", true),
                "responses": with(session_errors(&[("400", "wireoff_m outside the horizon"), ("409", "not simulated")]), "200", ok("comparison", "WhatIf"))
            }},
            "/v1/sessions/{id}/diagnostics": {"get": {
                "summary": "Residual diagnostics of the wired-off model", "parameters": [id],
                "responses": with(session_errors(&[("409", "not fitted")]), "200", ok("diagnostics", "DiagnosticsReport"))
            }},
            "/v1/openapi.json": {"get": {"summary": "This document", "responses": {"200": {"description": "OpenAPI document"}}}}
        },
        "components": {"schemas": {
            "Error": {"type": "object", "required": ["error"], "properties": {
                "error": {"type": "string"},
                "fields": {"type": "array", "items": {"type": "object", "properties": {
                    "field": {"type": "string"}, "message": {"type": "string"}}}}}},
            "CreateSession": {"type": "object", "additionalProperties": false, "properties": {
                "volumes_csv": {"type": "string"}, "volumes_path": {"type": "string"},
                "availability_csv": {"type": "string"}, "availability_path": {"type": "string"},
                "events_csv": {"type": "string"}, "events_path": {"type": "string"},
                "wiredoff_history_csv": {"type": "string"}, "wiredoff_history_path": {"type": "string"},
                "problematic_vendor": {"type": "string"}, "now_epoch_minute": {"type": "integer"}}},
            "SessionInfo": {"type": "object", "properties": {
                "session_id": {"type": "string"}, "version": {"type": "integer"},
                "created_at_unix": {"type": "integer"}, "problematic_vendor": {"type": "string"},
                "vendors": {"type": "array", "items": {"type": "string"}},
                "anchor_epoch_minute": {"type": "integer"}, "has_wiredoff_history": {"type": "boolean"},
                "fitted": {"type": "boolean"}, "simulated": {"type": "boolean"}}},
            "FitRequest": {"type": "object", "required": ["seed"], "additionalProperties": false, "properties": {
                "seed": {"type": "integer", "minimum": 0}, "trials": {"type": "integer", "minimum": 1},
                "des_trials": {"type": "integer", "minimum": 1}, "changepoints": {"type": "integer"},
                "period": {"type": "integer"}, "holdout_minutes": {"type": "integer"},
                "availability_window": {"type": "integer", "minimum": 2}}},
            "FitSummary": {"type": "object", "properties": {
                "session_id": {"type": "string"}, "version": {"type": "integer"},
                "baselines": {"type": "object", "additionalProperties": {"type": "object"}},
                "availability": {"type": "object"}, "behavior": {"type": "object"},
                "wiredoff_delta": {"type": "number", "nullable": true}}},
            "Forecast": {"type": "object", "properties": {
                "kind": {"type": "string"}, "horizon": {"type": "integer"}, "anchor_epoch_minute": {"type": "integer"},
                "points": {"type": "array", "items": {"type": "object", "properties": {
                    "offset_m": {"type": "integer"}, "vendor_id": {"type": "string"}, "value": {"type": "number"},
                    "p10": {"type": "number"}, "p90": {"type": "number"}}}}}},
            "SimulateRequest": {"type": "object", "required": ["seed"], "additionalProperties": false, "properties": {
                "seed": {"type": "integer", "minimum": 0}, "horizon": {"type": "integer", "minimum": 1},
                "replications": {"type": "integer", "minimum": 1}, "warmup_start": {"type": "integer", "maximum": -10},
                "stochastic_rounding": {"type": "boolean"}}},
            "WiredOnForecast": {"type": "object", "properties": {
                "horizon": {"type": "integer"}, "replications": {"type": "integer"},
                "minutes": {"type": "array", "items": {"type": "object", "properties": {
                    "offset_m": {"type": "integer"}, "w_on_mean": {"type": "number"},
                    "w_on_p10": {"type": "number"}, "w_on_p90": {"type": "number"}}}}}},
            "Recommendation": {"type": "object", "required": ["action", "curves"], "properties": {
                "action": {"type": "string", "enum": ["WireOffAt", "KeepWiredOn"]},
                "m_star": {"type": "integer", "nullable": true}, "anchor_epoch_minute": {"type": "integer"},
                "horizon": {"type": "integer"}, "summary": {"type": "string"},
                "margin": {"type": "array", "items": {"type": "number"}},
                "curves": {"type": "array", "items": {"type": "object", "properties": {
                    "offset_m": {"type": "integer"}, "wired_on": {"type": "number"}, "wired_off": {"type": "number"}}}}}},
            "WhatIfRequest": {"type": "object", "required": ["wireoff_m"], "additionalProperties": false,
                "properties": {"wireoff_m": {"type": "integer", "minimum": 1}}},
            "WhatIf": {"type": "object", "properties": {
                "wireoff_m": {"type": "integer"}, "total_completed_off_path": {"type": "number"},
                "total_completed_on_path": {"type": "number"}, "difference": {"type": "number"}}},
            "DiagnosticsReport": {"type": "object", "properties": {
                "dw_statistic": {"type": "number"}, "hc_statistic": {"type": "number"},
                "hc_p_value": {"type": "number"}, "acf_lag1": {"type": "number"},
                "acf_ci_halfwidth": {"type": "number"}, "rmse": {"type": "number"},
                "dw_passes": {"type": "boolean"}, "hc_passes": {"type": "boolean"},
                "acf_lag1_within_band": {"type": "boolean"}, "adf": {"type": "object", "nullable": true}}}
        }}
    })
}
