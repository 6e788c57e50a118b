//! The stdio JSON-lines protocol spoken to code-execution workers.
//!
//! With no arguments this prints the wire form of each request and drives the
//! in-process stub kernel. Pass a worker command to talk to a real one:
//!
//! `cargo run --example kernel_protocol`
//! `cargo run --example kernel_protocol -- python3 my_kernel.py`

use std::time::Duration;

use base64::Engine;
use skillbank::tools::{KernelLimits, KernelRequest, KernelSession, ProcessKernel, StubKernel};

fn drive(session: &mut dyn KernelSession) {
    let png = base64::engine::general_purpose::STANDARD.encode(b"\x89PNG\r\n\x1a\n");
    let requests = [
        KernelRequest::ping(),
        KernelRequest::preload("original_image", png),
        KernelRequest::exec("total = 12"),
        KernelRequest::exec("print(total)"),
        KernelRequest::exec("print((1, 2)"),
        KernelRequest::exec("x = 1 / 0"),
        KernelRequest::reset(),
        KernelRequest::exec("print(total)"),
    ];
    for request in &requests {
        let line = serde_json::to_string(request).expect("request serializes");
        match session.request(request) {
            Ok(response) => println!("-> {line}\n<- {}", serde_json::to_string(&response).expect("response serializes")),
            Err(e) => println!("-> {line}\n!! {e}"),
        }
    }
}

fn main() {
    let command: Vec<String> = std::env::args().skip(1).collect();
    if command.is_empty() {
        drive(&mut StubKernel::new());
    } else {
        let limits = KernelLimits { exec_timeout: Duration::from_secs(30), ..KernelLimits::default() };
        drive(&mut ProcessKernel::new(command, limits));
    }
}
