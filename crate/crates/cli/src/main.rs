use std::process::ExitCode;

use clap::Parser;
use graph_fujita_cli::{exit_code, run, Cli};

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    let outcome = run(cli, &mut out);
    if let Err(f) = &outcome {
        // sources are often already spelled out in their parent's message
        let mut msg = String::new();
        for cause in f.error().chain().map(|c| c.to_string()) {
            if !msg.contains(&cause) {
                msg = if msg.is_empty() { cause } else { format!("{msg}: {cause}") };
            }
        }
        eprintln!("error: {msg}");
    }
    ExitCode::from(exit_code(&outcome) as u8)
}
