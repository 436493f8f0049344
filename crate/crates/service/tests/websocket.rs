use std::net::SocketAddr;

use alpha_core::prob::qi;
use alpha_lab::analytics::standardize;
use alpha_lab::csvlog::{self, pairs};
use alpha_lab::session::{parse_events, replay, same_run};
use alpha_service::hub::Hub;
use alpha_service::server::serve;
use alpha_service::wire::{CreatePayload, Kind, Phase, StatePayload, StatusPayload, WireMessage};
use futures_util::{SinkExt, StreamExt};
use serde_json::json;
use tokio::io::{AsyncReadExt, AsyncWriteExt};
use tokio::net::{TcpListener, TcpStream};
use tokio_tungstenite::tungstenite::Message;

async fn http(addr: SocketAddr, method: &str, path: &str, body: &str) -> (u16, String) {
    let mut s = TcpStream::connect(addr).await.unwrap();
    let req = format!(
        "{method} {path} HTTP/1.1\r\nHost: {addr}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    );
    s.write_all(req.as_bytes()).await.unwrap();
    let mut raw = Vec::new();
    s.read_to_end(&mut raw).await.unwrap();
    let text = String::from_utf8(raw).unwrap();
    let (head, body) = text.split_once("\r\n\r\n").unwrap();
    let status = head.split_whitespace().nth(1).unwrap().parse().unwrap();
    (status, body.to_string())
}

async fn start() -> (SocketAddr, tempfile::TempDir, tokio::sync::oneshot::Sender<()>) {
    let dir = tempfile::tempdir().unwrap();
    let hub = Hub::new(Some(dir.path().to_path_buf()));
    let listener = TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    let (tx, rx) = tokio::sync::oneshot::channel::<()>();
    tokio::spawn(serve(listener, hub, async {
        let _ = rx.await;
    }));
    (addr, dir, tx)
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn one_human_and_seventeen_bots_complete_a_type_4_session() {
    let (addr, dir, stop) = start().await;
    let mut seats = vec!["human".to_string()];
    seats.extend((0..17).map(|i| ["qre:0.3", "ebr", "uniform"][i % 3].to_string()));
    let create = WireMessage::new(
        Kind::AdminCreate,
        CreatePayload {
            session_id: "e2e".into(),
            auction: "wb".into(),
            session_type: 4,
            seats,
            rng_seed: 2024,
            periods: None,
            point_rate: None,
            show_up: None,
            timeout_secs: Some(60),
        },
    );
    let (code, body) = http(addr, "POST", "/admin", &create.to_json()).await;
    assert_eq!(code, 200);
    let reply = WireMessage::parse(&body).unwrap();
    assert_eq!(reply.kind, Kind::AdminStatus, "{body}");
    let status: StatusPayload = reply.payload().unwrap();
    assert_eq!(status.periods, 40);
    let token = status.seat_tokens[0].token.clone();

    let (mut ws, _) = tokio_tungstenite::connect_async(format!("ws://{addr}/ws")).await.unwrap();
    let send = |m: WireMessage| Message::text(m.to_json());
    ws.send(Message::text("garbage")).await.unwrap();
    ws.send(send(WireMessage::bare(Kind::Join).with_session("e2e").with_token(token)))
        .await
        .unwrap();

    let mut periods_seen = 0;
    let mut errors = Vec::new();
    let mut out_of_range_sent = false;
    let mut points = Vec::new();
    loop {
        let msg = match ws.next().await {
            Some(Ok(Message::Text(t))) => WireMessage::parse(t.as_str()).unwrap(),
            Some(Ok(_)) => continue,
            other => panic!("socket ended early: {other:?}"),
        };
        match msg.kind {
            Kind::Error => errors.push(msg.payload["message"].as_str().unwrap().to_string()),
            Kind::Feedback => {}
            Kind::State => {
                let s: StatePayload = msg.payload().unwrap();
                match s.phase {
                    Phase::Bidding => {
                        periods_seen += 1;
                        let seat = s.seat.unwrap();
                        if !out_of_range_sent {
                            out_of_range_sent = true;
                            ws.send(send(WireMessage::new(Kind::SubmitBid, json!({"bid": seat.bid_cap + 1}))))
                                .await
                                .unwrap();
                        }
                        let bid = if seat.role == alpha_core::Role::High { 125 } else { 110 };
                        ws.send(send(WireMessage::new(Kind::SubmitBid, json!({"bid": bid, "guess": 120}))))
                            .await
                            .unwrap();
                    }
                    Phase::Reviewing => {
                        if s.transcript.len() == 1 && s.seat.as_ref().unwrap().period % 10 == 1 {
                            ws.send(send(WireMessage::new(Kind::Revise, json!({"bid": 120}))))
                                .await
                                .unwrap();
                        } else {
                            ws.send(send(WireMessage::bare(Kind::Confirm))).await.unwrap();
                        }
                    }
                    Phase::Feedback => points.push(s.feedback.unwrap().outcome.points),
                    Phase::Paid => assert!(s.payment.unwrap().cash >= qi(5)),
                    Phase::Finished => break,
                    Phase::Aborted => panic!("session aborted"),
                    Phase::Waiting => {}
                }
            }
            other => panic!("unexpected {other:?}"),
        }
    }
    assert_eq!(periods_seen, 40);
    assert_eq!(points.len(), 40);
    assert_eq!(errors.len(), 2, "{errors:?}");
    assert!(errors[0].starts_with("malformed message"));
    assert_eq!(errors[1], "bid out of range");

    let (code, csv) = http(addr, "GET", "/sessions/e2e/session.csv", "").await;
    assert_eq!(code, 200);
    let rows = csvlog::read_rows(csv.as_bytes()).unwrap();
    assert_eq!(rows.len(), 18 * 40);
    assert!(csvlog::validate(&rows).is_empty());
    let mut problems = Vec::new();
    for pair in pairs(&rows, &mut problems) {
        let m = standardize(pair);
        let sum = m.std_payoff[0] + m.std_payoff[1];
        assert_eq!(sum, if m.efficient { qi(1) } else { qi(-1) });
        assert!(!m.equilibrium_outcome || m.efficient);
    }
    assert!(problems.is_empty());
    assert_eq!(http(addr, "GET", "/sessions/nope/session.csv", "").await.0, 404);

    let (_, jsonl) = http(addr, "GET", "/sessions/e2e/events.jsonl", "").await;
    let events = parse_events(&jsonl).unwrap();
    assert!(same_run(&events, &replay(&events).unwrap().events));
    assert_eq!(std::fs::read_to_string(dir.path().join("e2e.csv")).unwrap(), csv);

    // The CLI re-derives the same summary from the exported files.
    let csv_path = dir.path().join("e2e.csv");
    let events_path = dir.path().join("e2e.jsonl");
    let summary = |seed: &str| {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let code = alpha_service::cli::run(
            [
                "alpha-auction",
                "replay",
                "--log",
                csv_path.to_str().unwrap(),
                "--events",
                events_path.to_str().unwrap(),
                "--seed",
                seed,
            ],
            &mut out,
            &mut err,
        );
        assert_eq!(code, 0, "{}", String::from_utf8_lossy(&err));
        out
    };
    assert_eq!(summary("7"), summary("7"));
    let _ = stop.send(());
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn admin_errors_are_messages() {
    let (addr, _dir, stop) = start().await;
    let (code, body) = http(addr, "POST", "/admin", "{").await;
    assert_eq!(code, 200);
    assert_eq!(WireMessage::parse(&body).unwrap().kind, Kind::Error);
    let (_, body) = http(addr, "POST", "/admin", &WireMessage::bare(Kind::Join).to_json()).await;
    assert!(body.contains("not an admin request"));
    let _ = stop.send(());
}
