use std::io::Write;
use std::process::ExitCode;

use clap::Parser;

use bpnet_cli::{exit_code, run, Cli};

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).format_timestamp(None).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("").trim_start_matches("error: ");
            eprintln!("error:usage: {first}");
            return ExitCode::from(2);
        }
    };
    let mut stdout = std::io::stdout().lock();
    let code = match run(cli, &mut stdout) {
        Ok(code) => code,
        Err(e) => {
            let text = e.to_string().replace('\n', " ");
            let cat = e.category();
            // drop the category the message itself starts with
            let text = text.strip_prefix(cat).map(|t| t.trim_start_matches(':').trim_start()).unwrap_or(&text);
            eprintln!("error:{cat}: {text}");
            exit_code(&e)
        }
    };
    let _ = stdout.flush();
    ExitCode::from(code as u8)
}
