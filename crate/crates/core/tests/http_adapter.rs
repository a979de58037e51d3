use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread;

use thinker_ddm::providers::{Attempted, Generator, HttpGenerator, HttpScorer, HttpSettings, ProviderError, Scorer};
use thinker_ddm::{Candidate, PromptLibrary, SourceItem};

/// Minimal one-request-per-connection HTTP server that replays canned
/// responses in order and records the request bodies it saw.
struct Stub {
    url: String,
    bodies: Arc<Mutex<Vec<String>>>,
    handle: thread::JoinHandle<()>,
}

fn stub(responses: Vec<(u16, &'static str)>) -> Stub {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1", listener.local_addr().unwrap());
    let bodies = Arc::new(Mutex::new(Vec::new()));
    let seen = bodies.clone();
    let handle = thread::spawn(move || {
        for (status, body) in responses {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut len = 0usize;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                let lower = line.to_ascii_lowercase();
                if let Some(v) = lower.strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
                if line == "\r\n" || line.is_empty() {
                    break;
                }
            }
            let mut buf = vec![0u8; len];
            reader.read_exact(&mut buf).unwrap();
            seen.lock().unwrap().push(String::from_utf8(buf).unwrap());
            let mut stream = stream;
            write!(
                stream,
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            )
            .unwrap();
            stream.flush().unwrap();
        }
    });
    Stub { url, bodies, handle }
}

fn source() -> SourceItem {
    SourceItem::new("s1", "Guten Morgen")
}

#[test]
fn scorer_reads_score_from_stub() {
    let s = stub(vec![(200, r#"{"score": 0.75}"#)]);
    let scorer = HttpScorer::new(HttpSettings::new(&s.url)).unwrap();
    let got = scorer.score(&source(), &Candidate::new("baseline_a", "Good morning")).unwrap();
    assert_eq!(got, Attempted { value: 0.75, attempts: 1 });
    s.handle.join().unwrap();
    let body: serde_json::Value = serde_json::from_str(&s.bodies.lock().unwrap()[0]).unwrap();
    assert_eq!(body, serde_json::json!({"source": "Guten Morgen", "candidate": "Good morning"}));
}

#[test]
fn generator_sends_rendered_prompt() {
    let s = stub(vec![(200, r#"{"text": "Good morning"}"#)]);
    let settings = HttpSettings {
        target_lang: Some("English".into()),
        source_lang: Some("German".into()),
        ..HttpSettings::new(&s.url)
    };
    let g = HttpGenerator::new(
        "prompt:cultural_equivalence".into(),
        Some("cultural_equivalence".into()),
        settings,
        Some(Arc::new(PromptLibrary::builtin())),
    )
    .unwrap();
    let c = g.generate(&source()).unwrap().value;
    assert_eq!(c, Candidate::new("prompt:cultural_equivalence", "Good morning"));
    s.handle.join().unwrap();
    let body: serde_json::Value = serde_json::from_str(&s.bodies.lock().unwrap()[0]).unwrap();
    assert_eq!(body["prompt_id"], "cultural_equivalence");
    let rendered = body["rendered_prompt"].as_str().unwrap();
    assert!(rendered.contains("Source Sentence: Guten Morgen"));
    assert!(rendered.contains("source and English cultures"));
}

#[test]
fn baseline_generator_sends_nulls() {
    let s = stub(vec![(200, r#"{"text": "Hi"}"#)]);
    let g = HttpGenerator::new("baseline_a".into(), None, HttpSettings::new(&s.url), None).unwrap();
    g.generate(&source()).unwrap();
    s.handle.join().unwrap();
    let body: serde_json::Value = serde_json::from_str(&s.bodies.lock().unwrap()[0]).unwrap();
    assert_eq!(body, serde_json::json!({"source": "Guten Morgen", "prompt_id": null, "rendered_prompt": null}));
}

#[test]
fn non_2xx_is_an_error() {
    let s = stub(vec![(404, r#"{"score": 0.9}"#)]);
    let scorer = HttpScorer::new(HttpSettings::new(&s.url)).unwrap();
    let err = scorer.score(&source(), &Candidate::new("a", "x")).unwrap_err();
    assert!(matches!(err, ProviderError::Transport { .. }), "{err:?}");
    s.handle.join().unwrap();
}

#[test]
fn schema_mismatch_is_an_error() {
    let s = stub(vec![(200, r#"{"quality": 0.9}"#), (200, r#"{"score": "high"}"#)]);
    let scorer = HttpScorer::new(HttpSettings::new(&s.url)).unwrap();
    for _ in 0..2 {
        let err = scorer.score(&source(), &Candidate::new("a", "x")).unwrap_err();
        assert!(matches!(err, ProviderError::Schema(_)), "{err:?}");
    }
    s.handle.join().unwrap();
}

#[test]
fn retries_are_counted() {
    let s = stub(vec![(503, "{}"), (200, r#"{"score": 0.5}"#)]);
    let settings = HttpSettings {
        retries: 2,
        ..HttpSettings::new(&s.url)
    };
    let scorer = HttpScorer::new(settings).unwrap();
    let got = scorer.score(&source(), &Candidate::new("a", "x")).unwrap();
    assert_eq!(got, Attempted { value: 0.5, attempts: 2 });
    s.handle.join().unwrap();
}

#[test]
fn no_retry_by_default() {
    let s = stub(vec![(500, "{}")]);
    let scorer = HttpScorer::new(HttpSettings::new(&s.url)).unwrap();
    let err = scorer.score(&source(), &Candidate::new("a", "x")).unwrap_err();
    assert!(matches!(err, ProviderError::Transport { attempts: 1, .. }), "{err:?}");
    s.handle.join().unwrap();
}

#[test]
fn connection_refused_is_transport_error() {
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let scorer = HttpScorer::new(HttpSettings::new(format!("http://127.0.0.1:{port}/"))).unwrap();
    assert!(matches!(
        scorer.score(&source(), &Candidate::new("a", "x")),
        Err(ProviderError::Transport { .. })
    ));
}
