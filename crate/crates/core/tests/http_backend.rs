//! The HTTP client against an in-process server that wraps the mock
//! backends, plus servers that break the protocol in specific ways.

#![allow(clippy::single_range_in_vec_init)]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use cftk_core::backends::conformance::run_conformance;
use cftk_core::backends::mock::{IncompatibilityRule, InfillRule, LexiconClassifier, LexiconScorer, TemplateInfiller};
use cftk_core::backends::ngram::{NgramConfig, NgramLm};
use cftk_core::backends::{
    BackendConfig, BackendError, BackendKind, BackendSet, GenderClassifier, Infiller, LanguageModel, TokenScorer,
};
use cftk_core::corpus::{tokenize, Corpus, Gender, TextRecord};
use cftk_core::dictionary::{GenderDictionary, NamePairing};
use cftk_core::pipeline::{run_pipeline, MaskedSequence, PipelineConfig};
use serde_json::{json, Value};

/// Stand-in word for a mask slot while the server re-tokenizes a request.
const SLOT_WORD: &str = "slotplaceholder";

#[derive(Clone, Copy, PartialEq)]
enum Fault {
    None,
    ShortScores,
    ProbabilityOutOfRange,
    PositiveLogprob,
    ServerError,
    MalformedJson,
    Stall,
    /// Closes the first connection without replying.
    DropFirst,
}

struct Mocks {
    scorer: LexiconScorer,
    infiller: TemplateInfiller,
    classifier: LexiconClassifier,
    lm: NgramLm,
}

fn mocks() -> Mocks {
    let lm_text = [
        "she loves her work .",
        "he loves his work .",
        "the men are dukes .",
        "it is fine .",
    ];
    Mocks {
        scorer: LexiconScorer::new(vec![IncompatibilityRule::new("men", "duchesses")]),
        infiller: TemplateInfiller::new(vec![InfillRule::new("men are", "_", "dukes")])
            .with_default_fill(vec!["someone".into()]),
        classifier: LexiconClassifier::builtin(),
        lm: NgramLm::train(lm_text, &NgramConfig::default()).unwrap(),
    }
}

fn mock_set(m: &Mocks) -> BackendSet {
    BackendSet {
        scorer: Arc::new(m.scorer.clone()),
        infiller: Arc::new(m.infiller.clone()),
        classifier: Arc::new(m.classifier.clone()),
        lm: Arc::new(m.lm.clone()),
    }
}

struct Request {
    path: String,
    body: Value,
}

fn read_request(stream: &TcpStream) -> Option<Request> {
    let mut reader = BufReader::new(stream);
    let mut line = String::new();
    reader.read_line(&mut line).ok()?;
    let path = line.split_whitespace().nth(1)?.to_string();
    let mut length = 0;
    let mut chunked = false;
    loop {
        let mut header = String::new();
        reader.read_line(&mut header).ok()?;
        let header = header.trim_end();
        if header.is_empty() {
            break;
        }
        let (name, value) = header.split_once(':')?;
        match name.trim().to_ascii_lowercase().as_str() {
            "content-length" => length = value.trim().parse().ok()?,
            "transfer-encoding" => chunked = value.trim().eq_ignore_ascii_case("chunked"),
            _ => {}
        }
    }
    let mut body = Vec::new();
    if chunked {
        loop {
            let mut size = String::new();
            reader.read_line(&mut size).ok()?;
            let n = usize::from_str_radix(size.trim(), 16).ok()?;
            let mut chunk = vec![0; n + 2];
            reader.read_exact(&mut chunk).ok()?;
            if n == 0 {
                break;
            }
            body.extend_from_slice(&chunk[..n]);
        }
    } else {
        body.resize(length, 0);
        reader.read_exact(&mut body).ok()?;
    }
    Some(Request {
        path,
        body: serde_json::from_slice(&body).ok()?,
    })
}

fn respond(mut stream: &TcpStream, status: u16, body: &str) {
    let reason = if status == 200 { "OK" } else { "Error" };
    let _ = write!(
        stream,
        "HTTP/1.1 {status} {reason}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    );
    let _ = stream.flush();
}

fn error_reply(e: BackendError) -> (u16, String) {
    (400, json!({ "error": e.to_string() }).to_string())
}

fn handle(m: &Mocks, req: &Request, fault: Fault) -> (u16, String) {
    let text = req.body.get("text").and_then(Value::as_str).unwrap_or_default();
    let reply = match req.path.as_str() {
        "/score" => {
            let tokens: Vec<String> = req.body["tokens"]
                .as_array()
                .map(|a| a.iter().filter_map(Value::as_str).map(str::to_string).collect())
                .unwrap_or_default();
            let seq = tokenize(&tokens.join(" "));
            match m.scorer.score_tokens(&seq) {
                Ok(scores) => {
                    let mut scores: Vec<f64> = scores.iter().map(|s| s.score).collect();
                    if fault == Fault::ShortScores {
                        scores.pop();
                    }
                    json!({ "scores": scores })
                }
                Err(e) => return error_reply(e),
            }
        }
        "/infill" => {
            let mask = req.body["mask_token"].as_str().unwrap_or("<mask>");
            let seq = tokenize(&text.replace(mask, SLOT_WORD));
            let slots = seq
                .surfaces()
                .enumerate()
                .filter(|(_, w)| *w == SLOT_WORD)
                .map(|(i, _)| i..i + 1)
                .collect();
            let masked = match MaskedSequence::new(seq, slots) {
                Ok(masked) => masked,
                Err(e) => return (400, json!({ "error": e.to_string() }).to_string()),
            };
            match m.infiller.infill(&masked) {
                Ok(fills) => json!({ "fills": fills }),
                Err(e) => return error_reply(e),
            }
        }
        "/classify" => match m.classifier.classify_gender(text) {
            Ok(v) if fault == Fault::ProbabilityOutOfRange => json!({ "p_female": v.p_female + 1.5 }),
            Ok(v) => json!({ "p_female": v.p_female }),
            Err(e) => return error_reply(e),
        },
        "/lm" => match m.lm.lm_logprob(text) {
            Ok(s) if fault == Fault::PositiveLogprob => json!({ "logprob": 0.5, "n_tokens": s.n_tokens }),
            Ok(s) => json!({ "logprob": s.logprob, "n_tokens": s.n_tokens }),
            Err(e) => return error_reply(e),
        },
        _ => return (404, json!({ "error": "no such route" }).to_string()),
    };
    (200, reply.to_string())
}

struct Server {
    url: String,
    peak_in_flight: Arc<AtomicUsize>,
}

/// Serves the mocks on a loopback port until the test process exits.
fn serve(fault: Fault, handler_delay: Duration) -> Server {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}", listener.local_addr().unwrap());
    let mocks = Arc::new(mocks());
    let live = Arc::new(AtomicUsize::new(0));
    let peak = Arc::new(AtomicUsize::new(0));
    let peak_in_flight = peak.clone();
    thread::spawn(move || {
        for (n, stream) in listener.incoming().enumerate() {
            let Ok(stream) = stream else { continue };
            let (mocks, live, peak) = (mocks.clone(), live.clone(), peak.clone());
            thread::spawn(move || {
                let Some(req) = read_request(&stream) else { return };
                if fault == Fault::DropFirst && n == 0 {
                    return;
                }
                let now = live.fetch_add(1, Ordering::SeqCst) + 1;
                peak.fetch_max(now, Ordering::SeqCst);
                thread::sleep(handler_delay);
                let (status, body) = match fault {
                    Fault::ServerError => (500, "internal failure".to_string()),
                    Fault::MalformedJson => (200, "{\"scores\": [1.0,".to_string()),
                    Fault::Stall => {
                        thread::sleep(Duration::from_secs(3));
                        handle(&mocks, &req, fault)
                    }
                    _ => handle(&mocks, &req, fault),
                };
                live.fetch_sub(1, Ordering::SeqCst);
                respond(&stream, status, &body);
            });
        }
    });
    Server { url, peak_in_flight }
}

fn http_set(url: &str, timeout_secs: f64, max_in_flight: usize, retries: u32) -> BackendSet {
    let config = BackendConfig {
        kind: BackendKind::Http,
        endpoint: Some(url.to_string()),
        timeout_secs,
        max_in_flight,
        retries,
        ..BackendConfig::default()
    };
    BackendSet::from_config(&config).unwrap()
}

fn protocol_message(result: Result<impl std::fmt::Debug, BackendError>, route: &str) -> String {
    match result {
        Err(BackendError::Protocol { endpoint, message }) => {
            assert!(endpoint.ends_with(route), "{endpoint}");
            message
        }
        other => panic!("expected a protocol error from {route}, got {other:?}"),
    }
}

#[test]
fn http_client_against_mock_server_passes_conformance() {
    let server = serve(Fault::None, Duration::ZERO);
    let report = run_conformance(&http_set(&server.url, 5.0, 4, 0));
    assert!(report.passed(), "{report}");
}

#[test]
fn http_replies_match_in_process_mocks() {
    let server = serve(Fault::None, Duration::ZERO);
    let http = http_set(&server.url, 5.0, 4, 0);
    let local = mock_set(&mocks());
    for text in [
        "The men are duchesses",
        "She loves her work.",
        "He said: \"it's fine\", didn't he?",
    ] {
        let seq = tokenize(text);
        assert_eq!(
            http.scorer.score_tokens(&seq).unwrap(),
            local.scorer.score_tokens(&seq).unwrap()
        );
        assert_eq!(
            http.classifier.classify_gender(text).unwrap(),
            local.classifier.classify_gender(text).unwrap()
        );
        assert_eq!(http.lm.lm_logprob(text).unwrap(), local.lm.lm_logprob(text).unwrap());
    }
    let masked = MaskedSequence::new(tokenize("The men are duchesses"), vec![3..4]).unwrap();
    assert_eq!(http.infiller.infill(&masked).unwrap(), vec![vec!["dukes".to_string()]]);
    assert_eq!(
        http.infiller.infill(&masked).unwrap(),
        local.infiller.infill(&masked).unwrap()
    );
}

#[test]
fn pipeline_over_http_matches_pipeline_over_mocks() {
    let server = serve(Fault::None, Duration::ZERO);
    let corpus = Corpus::new(
        vec![
            TextRecord::new("1", "The women are duchesses.").with_gender(Gender::Female),
            TextRecord::new("2", "She loves her work.").with_gender(Gender::Female),
            TextRecord::new("3", "The report is late.").with_gender(Gender::Male),
        ],
        "inline",
    );
    let dict = GenderDictionary::new(vec![
        ("women".into(), "men".into()),
        ("she".into(), "he".into()),
        ("her".into(), "his".into()),
    ])
    .unwrap();
    let names = NamePairing::empty();
    let config = PipelineConfig::default();
    let over_http = run_pipeline(&corpus, &dict, &names, &http_set(&server.url, 5.0, 2, 0), &config).unwrap();
    let in_process = run_pipeline(&corpus, &dict, &names, &mock_set(&mocks()), &config).unwrap();
    let rows = |pairs: &[cftk_core::pipeline::ParallelPair]| pairs.iter().map(|p| p.to_row()).collect::<Vec<_>>();
    assert_eq!(rows(&over_http.kept), rows(&in_process.kept));
    assert_eq!(rows(&over_http.dropped), rows(&in_process.dropped));
    assert_eq!(over_http.kept[0].target.text, "The men are dukes.");
}

#[test]
fn short_score_reply_is_a_protocol_error() {
    let server = serve(Fault::ShortScores, Duration::ZERO);
    let http = http_set(&server.url, 5.0, 1, 0);
    let message = protocol_message(http.scorer.score_tokens(&tokenize("she is here")), "/score");
    assert!(message.contains("expected 3 scores, got 2"), "{message}");
}

#[test]
fn out_of_range_probability_is_a_protocol_error() {
    let server = serve(Fault::ProbabilityOutOfRange, Duration::ZERO);
    let http = http_set(&server.url, 5.0, 1, 0);
    let message = protocol_message(http.classifier.classify_gender("she"), "/classify");
    assert!(message.contains("outside [0, 1]"), "{message}");
}

#[test]
fn positive_log_probability_is_a_protocol_error() {
    let server = serve(Fault::PositiveLogprob, Duration::ZERO);
    let http = http_set(&server.url, 5.0, 1, 0);
    let message = protocol_message(http.lm.lm_logprob("she loves her work"), "/lm");
    assert!(message.contains("invalid log-probability"), "{message}");
}

#[test]
fn server_error_status_is_reported_with_the_body() {
    let server = serve(Fault::ServerError, Duration::ZERO);
    let http = http_set(&server.url, 5.0, 1, 0);
    let message = protocol_message(http.classifier.classify_gender("she"), "/classify");
    assert!(
        message.contains("HTTP 500") && message.contains("internal failure"),
        "{message}"
    );
}

#[test]
fn malformed_reply_is_a_protocol_error() {
    let server = serve(Fault::MalformedJson, Duration::ZERO);
    let http = http_set(&server.url, 5.0, 1, 0);
    let message = protocol_message(http.scorer.score_tokens(&tokenize("she")), "/score");
    assert!(message.contains("malformed reply"), "{message}");
}

#[test]
fn stalled_server_times_out_as_a_transport_error() {
    let server = serve(Fault::Stall, Duration::ZERO);
    let http = http_set(&server.url, 0.5, 1, 0);
    match http.classifier.classify_gender("she") {
        Err(BackendError::Transport { endpoint, .. }) => assert!(endpoint.ends_with("/classify")),
        other => panic!("expected a transport error, got {other:?}"),
    }
}

#[test]
fn one_retry_recovers_from_a_dropped_connection() {
    let server = serve(Fault::DropFirst, Duration::ZERO);
    let http = http_set(&server.url, 5.0, 1, 1);
    assert_eq!(http.classifier.classify_gender("she").unwrap().p_female, 1.0);

    let server = serve(Fault::DropFirst, Duration::ZERO);
    let http = http_set(&server.url, 5.0, 1, 0);
    assert!(matches!(
        http.classifier.classify_gender("she"),
        Err(BackendError::Transport { .. })
    ));
}

#[test]
fn in_flight_requests_are_bounded() {
    let server = serve(Fault::None, Duration::from_millis(30));
    let http = http_set(&server.url, 5.0, 2, 0);
    thread::scope(|s| {
        for _ in 0..8 {
            s.spawn(|| http.classifier.classify_gender("she").unwrap());
        }
    });
    let peak = server.peak_in_flight.load(Ordering::SeqCst);
    assert!((1..=2).contains(&peak), "peak {peak}");
}

#[test]
fn conformance_names_the_broken_contract() {
    let server = serve(Fault::ShortScores, Duration::ZERO);
    let report = run_conformance(&http_set(&server.url, 5.0, 1, 0));
    let failed: Vec<&str> = report.failures().map(|c| c.name).collect();
    assert!(failed.contains(&"score: one finite score per token"), "{report}");
    assert!(!failed.contains(&"classify: probability in [0, 1]"), "{report}");
}
