//! Starts the HTTP service on a local port and calls it once.
//!
//! Pass `--forever` to keep serving after the demo request.

use std::net::SocketAddr;
use std::sync::Arc;

use tlsfd::gateway::{serve, ServiceState};
use tlsfd::synthgen::{gen_corpus, GeneratorConfig};
use tlsfd::text_embed::EmbeddingTable;
use tlsfd::trainer::{train, TrainConfig};
use tokio::io::{AsyncReadExt, AsyncWriteExt};

async fn call(addr: SocketAddr, method: &str, path: &str, body: &str) -> std::io::Result<String> {
    let mut stream = tokio::net::TcpStream::connect(addr).await?;
    let request = format!(
        "{method} {path} HTTP/1.1\r\nHost: {addr}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    );
    stream.write_all(request.as_bytes()).await?;
    let mut response = String::new();
    stream.read_to_string(&mut response).await?;
    Ok(response.split("\r\n\r\n").nth(1).unwrap_or_default().to_string())
}

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let forever = std::env::args().any(|a| a == "--forever");
    let db = gen_corpus(&GeneratorConfig {
        n_assets: 10,
        recordings_per_annotation: 10,
        ..GeneratorConfig::default()
    })?;
    let table = EmbeddingTable::fallback();
    let (model, _) = train(&db, &table, &TrainConfig { epochs: 1, batch_size: 16, ..TrainConfig::default() })?;
    let state = Arc::new(ServiceState::new(model, db, table)?);

    let port = std::net::TcpListener::bind("127.0.0.1:0")?.local_addr()?.port();
    let addr = SocketAddr::from(([127, 0, 0, 1], port));
    let server = tokio::spawn(serve(state, addr));

    let mut health = Err(std::io::Error::other("not started"));
    for _ in 0..50 {
        health = call(addr, "GET", "/health", "").await;
        if health.is_ok() {
            break;
        }
        tokio::time::sleep(std::time::Duration::from_millis(50)).await;
    }
    println!("GET /health -> {}", health?);
    let hits = call(addr, "POST", "/retrieve", r#"{"query":"Replace sensor","k":2}"#).await?;
    let json: serde_json::Value = serde_json::from_str(&hits)?;
    for r in json["results"].as_array().into_iter().flatten() {
        println!("POST /retrieve -> {} score {:.3}", r["recording_id"], r["score"].as_f64().unwrap_or(f64::NAN));
    }
    println!("GET /recordings?limit=2 -> {}", call(addr, "GET", "/recordings?limit=2", "").await?);

    if forever {
        println!("serving on http://{addr}, Ctrl-C to stop");
        return Ok(server.await??);
    }
    server.abort();
    Ok(())
}
