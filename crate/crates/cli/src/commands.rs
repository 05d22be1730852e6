use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use phaseforge_core::consensus::{
    and_merge, apply_resolutions, blank_segments, pairwise_agreement, ConsensusDraft, ConsensusError,
};
use phaseforge_core::evaluation::{cross_entropy, delta_table, eval_report, round_half_up, EvalError};
use phaseforge_core::fixtures::TaxonomyFixture;
use phaseforge_core::formats::{
    detect_class_count, load_manifest, parse_ledger_json, parse_metadata_csv, parse_prediction_csv,
    parse_results_csv, parse_track_csv, write_decision_csv, write_track_csv, FormatError,
};
use phaseforge_core::label::{validate_track_with_length, PhaseTaxonomy, Provenance, ValidationReport};
use phaseforge_core::registry::UnknownStrategy;
use phaseforge_core::replay::{compare_offline, replay as run_replay, ReplayError, ReplayPolicy};
use phaseforge_core::splits::{split_strategies, stratified_splits, SplitError, SplitRequest};
use phaseforge_core::store::{ProjectStore, StoreError};
use phaseforge_service::{AppState, Authenticator, Permissive, StaticTokens};
use serde::Serialize;
use serde_json::{json, Value};
use thiserror::Error;

use crate::{
    ConsensusArgs, DeltasArgs, EvalArgs, ReplayArgs, ResolveArgs, ServeArgs, SplitsArgs, ValidateArgs,
};

#[derive(Debug, Error)]
pub enum CliError {
    /// Input was readable but failed a domain check.
    #[error("{0}")]
    Invalid(String),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}: {source}", path.display())]
    Format { path: PathBuf, source: FormatError },
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("{0}")]
    Server(std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Invalid(_) => 2,
            _ => 1,
        }
    }
}

macro_rules! invalid_from {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Invalid(e.to_string())
            }
        }
    )*};
}

invalid_from!(ConsensusError, EvalError, SplitError, ReplayError, UnknownStrategy);

type Result<T> = std::result::Result<T, CliError>;

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|source| CliError::Io { path: path.to_path_buf(), source })
}

fn parse<T>(path: &Path, f: impl FnOnce(&[u8]) -> std::result::Result<T, FormatError>) -> Result<T> {
    f(&read(path)?).map_err(|source| CliError::Format { path: path.to_path_buf(), source })
}

/// Writes `text` to `out`, or stdout when `None`.
fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => {
            fs::write(path, text).map_err(|source| CliError::Io { path: path.to_path_buf(), source })
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            writeln!(stdout, "{text}").map_err(|source| CliError::Io { path: "<stdout>".into(), source })
        }
    }
}

fn pretty<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("serializable")
}

/// A builtin taxonomy name or a JSON file holding a taxonomy.
fn load_taxonomy(arg: &str) -> Result<PhaseTaxonomy> {
    if let Some(t) = PhaseTaxonomy::builtin(arg) {
        return Ok(t);
    }
    let path = Path::new(arg);
    if !path.exists() {
        return Err(CliError::Invalid(format!("unknown taxonomy {arg:?}: not a builtin name or a file")));
    }
    let bytes = read(path)?;
    serde_json::from_slice::<PhaseTaxonomy>(&bytes)
        .or_else(|_| serde_json::from_slice::<TaxonomyFixture>(&bytes).map(|f| f.taxonomy))
        .map_err(|e| CliError::Format { path: path.to_path_buf(), source: e.into() })
}

fn annotator_id(path: &Path) -> String {
    path.file_stem().and_then(|s| s.to_str()).unwrap_or("annotator").to_string()
}

fn fail_unless(ok: bool, message: impl FnOnce() -> String) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(CliError::Invalid(message()))
    }
}

fn report_failures(report: &ValidationReport) -> String {
    format!("{} validation issue(s)", report.issues.len())
}

pub fn validate(args: ValidateArgs) -> Result<()> {
    let taxonomy = load_taxonomy(&args.taxonomy)?;
    let input = args.input;
    if let Some(path) = input.track {
        let mut track = parse(&path, parse_track_csv)?;
        if args.complete {
            track.provenance = Provenance::Annotator;
        }
        let report = validate_track_with_length(&track, &taxonomy, args.frames);
        emit(None, &pretty(&report))?;
        return fail_unless(report.ok, || report_failures(&report));
    }
    if let Some(path) = input.pred {
        let log = parse(&path, |b| parse_prediction_csv(b, detect_class_count(b)?))?;
        emit(
            None,
            &pretty(&json!({
                "frames": log.len(),
                "classes": log.num_classes(),
                "frame_offset": log.frame_offset(),
                "normalized": log.is_normalized(),
            })),
        )?;
        return fail_unless(log.num_classes() == taxonomy.len(), || {
            format!("log has {} classes, taxonomy has {}", log.num_classes(), taxonomy.len())
        });
    }
    if let Some(path) = input.metadata {
        let cases = parse(&path, parse_metadata_csv)?;
        let mut systems: BTreeMap<&str, usize> = BTreeMap::new();
        for c in &cases {
            *systems.entry(c.recording_system.as_str()).or_default() += 1;
        }
        return emit(None, &pretty(&json!({ "cases": cases.len(), "recording_systems": systems })));
    }
    let path = input.manifest.expect("clap requires one input");
    let manifest = match load_manifest(&path) {
        Ok(m) => m,
        Err(FormatError::MissingFile(missing)) => {
            return Err(CliError::Invalid(format!("manifest references missing file {}", missing.display())))
        }
        Err(source) => return Err(CliError::Format { path, source }),
    };
    let base = path.parent().unwrap_or(Path::new("."));
    let mut tracks = BTreeMap::new();
    for (annotator, file) in &manifest.track_files {
        let mut track = parse(&base.join(file), parse_track_csv)?;
        track.provenance = Provenance::Annotator;
        tracks.insert(
            annotator.clone(),
            validate_track_with_length(&track, &taxonomy, Some(manifest.frame_count)),
        );
    }
    let mut predictions = BTreeMap::new();
    for (model, file) in &manifest.prediction_files {
        let log = parse(&base.join(file), |b| parse_prediction_csv(b, taxonomy.len()))?;
        predictions.insert(model.clone(), json!({ "frames": log.len(), "normalized": log.is_normalized() }));
    }
    let bad: usize = tracks.values().map(|r| r.issues.len()).sum();
    emit(
        None,
        &pretty(&json!({ "case_id": manifest.case_id, "tracks": tracks, "predictions": predictions })),
    )?;
    fail_unless(bad == 0, || format!("{bad} validation issue(s) in referenced tracks"))
}

pub fn consensus(args: ConsensusArgs) -> Result<()> {
    let mut tracks = Vec::with_capacity(args.tracks.len());
    for path in &args.tracks {
        let mut track = parse(path, parse_track_csv)?;
        track.case_id = args.case.clone();
        track.annotator_id = annotator_id(path);
        tracks.push(track);
    }
    let draft = and_merge(&tracks)?;
    emit(Some(&args.out), &write_track_csv(draft.merged()))?;
    let agreement = pairwise_agreement(&tracks)?;
    emit(
        None,
        &pretty(&json!({
            "case_id": args.case,
            "frame_count": draft.len(),
            "blank_frames": draft.blank_count(),
            "coverage": draft.coverage(),
            "agreement": agreement,
            "blank_segments": blank_segments(&draft),
        })),
    )
}

pub fn resolve(args: ResolveArgs) -> Result<()> {
    let draft = ConsensusDraft::from_merged(parse(&args.draft, parse_track_csv)?);
    let ledger = parse(&args.ledger, parse_ledger_json)?;
    if let Some(name) = &args.taxonomy {
        ledger.check_labels(&load_taxonomy(name)?)?;
    }
    let resolved = apply_resolutions(&draft, &ledger)?;
    emit(args.out.as_deref(), &write_track_csv(&resolved.track))?;
    fail_unless(resolved.complete || args.allow_partial, || {
        let ranges: Vec<String> =
            resolved.residual_blanks.iter().map(|(s, e)| format!("{s}..={e}")).collect();
        format!("{} blank range(s) remain: {}", ranges.len(), ranges.join(", "))
    })
}

pub fn eval(args: EvalArgs) -> Result<()> {
    let taxonomy = load_taxonomy(&args.taxonomy)?;
    let log = parse(&args.pred, |b| parse_prediction_csv(b, taxonomy.len()))?;
    let truth = parse(&args.truth, parse_track_csv)?;
    let report = eval_report(&log, &truth, &taxonomy)?;
    let loss = if log.is_normalized() { Some(cross_entropy(&log, &truth, &taxonomy)?.loss) } else { None };
    if let Some(path) = &args.report {
        emit(Some(path), &pretty(&report))?;
    }
    emit(
        None,
        &pretty(&json!({
            "map": report.map_value,
            "per_phase_ap": report.per_phase_ap,
            "absent_phases": report.absent_phases,
            "evaluated_frames": report.evaluated_frames,
            "cross_entropy": loss,
        })),
    )
}

pub fn deltas(args: DeltasArgs) -> Result<()> {
    let cells = parse(&args.results, parse_results_csv)?;
    let table = delta_table(&cells)?;
    let means: Vec<Value> = table
        .mean_delta_by_model()
        .into_iter()
        .map(|(model, mean)| {
            let display = round_half_up(mean.to_string().parse().unwrap_or(f64::NAN), 2);
            json!({ "model": model, "mean_delta": mean.to_string(), "display": display })
        })
        .collect();
    if args.json {
        return emit(None, &pretty(&json!({ "rows": table.rows, "mean_delta_by_model": means })));
    }
    let mut lines = vec!["model,split,annotation,consensus_ap,ap,delta".to_string()];
    for row in &table.rows {
        for cell in &row.cells {
            lines.push(format!(
                "{},{},{},{},{},{}",
                row.model,
                row.split,
                cell.annotation,
                row.consensus_ap,
                cell.ap,
                cell.display_delta()
            ));
        }
    }
    emit(None, &lines.join("\n"))
}

pub fn splits(args: SplitsArgs) -> Result<()> {
    let cases = parse(&args.metadata, parse_metadata_csv)?;
    let request = SplitRequest::new(args.folds, args.test, args.seed).with_covariates(args.covariates);
    let plan = match &args.strategy {
        Some(name) => split_strategies().get(name)?.plan(&cases, &request)?,
        None => stratified_splits(&cases, &request)?,
    };
    emit(args.out.as_deref(), &pretty(&plan))
}

pub fn replay(args: ReplayArgs) -> Result<()> {
    let log = parse(&args.pred, |b| parse_prediction_csv(b, detect_class_count(b)?))?;
    let taxonomy = match &args.taxonomy {
        Some(name) => load_taxonomy(name)?,
        None => match log.num_classes() {
            7 => PhaseTaxonomy::cholecystectomy(),
            27 => PhaseTaxonomy::gastrectomy(),
            n => PhaseTaxonomy::numbered(n).map_err(|e| CliError::Invalid(e.to_string()))?,
        },
    };
    let policy = ReplayPolicy {
        window: args.window,
        mode: args.mode.parse()?,
        warmup_emission: args.warmup.parse().map_err(CliError::Invalid)?,
    };
    let decisions = run_replay(&log, &policy, &taxonomy)?;
    let divergence = compare_offline(&decisions, &log, &taxonomy)?;
    emit(args.out.as_deref(), &write_decision_csv(&decisions))?;
    eprintln!(
        "{} frames, {} warmup, {} decided, {} differ from offline argmax",
        decisions.len(),
        decisions.warmup_frames(),
        decisions.len() - decisions.warmup_frames(),
        divergence.diff_count
    );
    Ok(())
}

pub fn serve(args: ServeArgs) -> Result<()> {
    let store = ProjectStore::open(&args.store)?;
    let auth: Arc<dyn Authenticator> =
        if args.tokens.is_empty() { Arc::new(Permissive) } else { Arc::new(StaticTokens::new(args.tokens)) };
    let addr: SocketAddr = format!("{}:{}", args.host, args.port)
        .parse()
        .map_err(|e| CliError::Invalid(format!("bad listen address: {e}")))?;
    let runtime =
        tokio::runtime::Builder::new_multi_thread().enable_all().build().map_err(CliError::Server)?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr).await.map_err(CliError::Server)?;
        let bound = listener.local_addr().map_err(CliError::Server)?;
        eprintln!("phaseforge listening on http://{bound} (store {})", store.root().display());
        phaseforge_service::serve(listener, AppState::with_auth(store, auth)).await.map_err(CliError::Server)
    })
}
