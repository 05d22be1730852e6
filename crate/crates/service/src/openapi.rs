use serde_json::{json, Value};

fn op(summary: &str, body: Option<&str>, ok: &str, errors: &[u16]) -> Value {
    let mut responses = json!({ ok: { "description": "success" } });
    for code in errors {
        responses[code.to_string()] = json!({ "description": reason(*code), "content": error_content() });
    }
    let mut op = json!({ "summary": summary, "responses": responses });
    if let Some(media) = body {
        op["requestBody"] = json!({ "required": true, "content": { media: {} } });
    }
    op
}

fn reason(code: u16) -> &'static str {
    match code {
        400 => "malformed body or identifier",
        401 => "missing or rejected bearer token",
        404 => "unknown project, case or annotator",
        409 => "conflict with the current case state",
        422 => "body parsed but violates the taxonomy or a domain rule",
        _ => "error",
    }
}

fn error_content() -> Value {
    json!({ "application/json": { "schema": { "$ref": "#/components/schemas/Error" } } })
}

fn path_params(names: &[&str]) -> Value {
    names
        .iter()
        .map(|n| json!({ "name": n, "in": "path", "required": true, "schema": { "type": "string" } }))
        .collect()
}

pub fn document() -> Value {
    let case = "/api/projects/{p}/cases/{c}";
    let pc = path_params(&["p", "c"]);
    let mut paths = serde_json::Map::new();
    let mut add = |path: String, params: Value, ops: Value| {
        let mut item = ops;
        item["parameters"] = params;
        paths.insert(path, item);
    };
    add(
        "/api/projects".into(),
        json!([]),
        json!({
            "post": op("Create a project with a builtin (`cholec`, `gastrectomy`) or custom taxonomy", Some("application/json"), "201", &[400, 409, 422]),
            "get": op("List project ids", None, "200", &[]),
        }),
    );
    add(
        "/api/projects/{p}".into(),
        path_params(&["p"]),
        json!({ "get": op("Project info", None, "200", &[404]) }),
    );
    add(
        "/api/projects/{p}/cases".into(),
        path_params(&["p"]),
        json!({
            "post": op("Register a case from its manifest JSON", Some("application/json"), "201", &[400, 404, 422]),
            "get": op("List case ids", None, "200", &[404]),
        }),
    );
    add(
        case.into(),
        pc.clone(),
        json!({ "get": op("Case manifest and annotator ids", None, "200", &[404]) }),
    );
    add(
        format!("{case}/tracks/{{annotator}}"),
        path_params(&["p", "c", "annotator"]),
        json!({ "put": op("Upload an annotator track as `frame,phase` CSV", Some("text/csv"), "200", &[400, 404, 422]) }),
    );
    add(
        format!("{case}/consensus"),
        pc.clone(),
        json!({ "post": op("AND-merge the latest tracks into a draft; unchanged input keeps the current draft", None, "200", &[404, 422]) }),
    );
    add(
        format!("{case}/blanks"),
        pc.clone(),
        json!({ "get": op("Pending blank segments with per-annotator evidence", None, "200", &[404, 409]) }),
    );
    add(
        format!("{case}/resolutions"),
        pc.clone(),
        json!({ "post": op(
            "Resolve a sub-range of a pending blank segment. Retrying with the same submission_id is a no-op.",
            Some("application/json"), "200", &[404, 409, 422]) }),
    );
    add(
        format!("{case}/stats"),
        pc.clone(),
        json!({ "get": op("Pairwise agreement and boundary disagreement profile (query: reference, max_distance)", None, "200", &[404, 422]) }),
    );
    add(
        format!("{case}/export"),
        pc,
        json!({ "get": op("Final consensus track as CSV once no blanks remain", None, "200", &[404, 409]) }),
    );
    add(
        "/api/projects/{p}/evaluate".into(),
        path_params(&["p"]),
        json!({ "post": op(
            "Evaluate a prediction CSV against the consensus or an annotator track",
            Some("application/json"), "200", &[400, 404, 409, 422]) }),
    );
    json!({
        "openapi": "3.0.3",
        "info": { "title": "phaseforge", "version": env!("CARGO_PKG_VERSION") },
        "components": {
            "securitySchemes": { "bearer": { "type": "http", "scheme": "bearer" } },
            "schemas": {
                "Error": {
                    "type": "object",
                    "required": ["error"],
                    "properties": { "error": { "type": "string" }, "detail": {} }
                }
            }
        },
        "paths": paths,
    })
}
